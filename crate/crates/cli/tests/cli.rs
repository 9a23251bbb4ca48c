use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A training setup small enough to finish in seconds.
const TINY: &str = r#"
[training]
episodes = 2
workers = 1
round_episodes = 1
sequence_len = 20
batch_sequences = 2
hidden = [8]
conv = [{ out_channels = 2, kernel = 3, stride = 2 }]

[evaluation]
games = 3
sweep_games = 12
bins = 4
"#;

fn cari(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cari"))
        .args(args)
        .env_remove("CARI_OUT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn mkdir(p: PathBuf) -> PathBuf {
    fs::create_dir_all(&p).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_tiny(dir: &Path, extra: &[&str]) -> PathBuf {
    let cfg = write(dir, "tiny.toml", TINY);
    let out = dir.join("train");
    let mut args = vec!["train", "--config", s(&cfg), "--out", s(&out), "--seed", "5"];
    args.extend_from_slice(extra);
    let o = cari(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn heuristic_eval_writes_one_row_per_game_plus_mean() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval");
    let o = cari(&["eval", "--games", "500", "--seed", "3", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("records.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 500 + 1, "header + games + aggregate");
    assert!(lines.last().unwrap().starts_with("mean,"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["agent"], "heuristic");
    assert_eq!(summary["games"], 500);
}

#[test]
fn recorded_replay_verifies_and_tampering_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval");
    let o = cari(&["eval", "--games", "2", "--replays", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let file = out.join("replays").join("game_00001.json");
    let o = cari(&["replay", s(&file)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("replay verified"));

    let mut replay: serde_json::Value = serde_json::from_str(&fs::read_to_string(&file).unwrap()).unwrap();
    replay["final_digest"] = serde_json::Value::String("0".repeat(64));
    let bad = write(dir.path(), "bad.json", &replay.to_string());
    let o = cari(&["replay", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("digest"), "{}", stderr(&o));
}

#[test]
fn inverted_interval_is_a_validation_error_naming_the_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[reward.r_Stab]\nmin = 3.0\nmax = -1.0\nstep = 0.1\n");
    let o = cari(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("t"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("r_Stab"), "{}", stderr(&o));
}

#[test]
fn field_level_diagnostics_for_training_settings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[training]\nsequence_len = 0\n");
    let o = cari(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("t"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("training.sequence_len"), "{}", stderr(&o));
}

#[test]
fn unknown_command_and_archetype_are_rejected() {
    assert_eq!(cari(&["fly"]).status.code(), Some(2));
    let o = cari(&["eval", "--archetype", "Berserker", "--games", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace("episodes = 2", "episodes = 4\nlr = 1e200\nlr_end = 1e200");
    let cfg = write(dir.path(), "diverge.toml", &text);
    let o = cari(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("t"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"), "{}", stderr(&o));
}

#[test]
fn checkpoint_problems_have_their_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_tiny(dir.path(), &[]);
    let ckpt = out.join("model.ckpt");

    // Different roster than the model was trained on.
    let other = write(dir.path(), "other.toml", "[scenario.hero]\nmax_health = 11\nmove_budget = 4\nshot_range = 6\nshot_damage = 3\nstab_damage = 4\nhas_shield = true\n");
    let o = cari(&["eval", "--config", s(&other), "--checkpoint", s(&ckpt), "--games", "1", "--out", s(&dir.path().join("e"))]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));

    // Corrupted file.
    let mut bytes = fs::read(&ckpt).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    let bad = dir.path().join("bad.ckpt");
    fs::write(&bad, bytes).unwrap();
    let o = cari(&["eval", "--checkpoint", s(&bad), "--games", "1", "--out", s(&dir.path().join("e"))]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));

    // A baseline cannot drive a sweep.
    let base = train_tiny(&mkdir(dir.path().join("b")), &["--archetype", "Sniper"]);
    let o = cari(&["sweep", "--checkpoint", s(&base.join("model.ckpt")), "--out", s(&dir.path().join("s"))]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn full_pipeline_is_byte_reproducible_and_leaves_the_config_alone() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path| -> Vec<(String, Vec<u8>)> {
        let cfg = write(dir, "tiny.toml", TINY);
        let before = fs::read(&cfg).unwrap();
        let train = dir.join("train");
        let c = s(&cfg);
        assert!(cari(&["train", "--config", c, "--seed", "9", "--out", s(&train)]).status.success());
        let ckpt = train.join("model.ckpt");
        let sweep = dir.join("sweep");
        for args in [
            vec!["eval", "--config", c, "--checkpoint", s(&ckpt), "--archetype", "Contact", "--out", s(&dir.join("eval"))],
            vec!["sweep", "--config", c, "--checkpoint", s(&ckpt), "--widen", "1.0", "--out", s(&sweep)],
            vec!["compare", "--config", c, "--checkpoint", s(&ckpt), "--out", s(&dir.join("compare"))],
        ] {
            let o = cari(&args);
            assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        }
        let o = cari(&["export-curves", "--config", c, "--sweep", s(&sweep.join("sweep.jsonl")), "--out", s(&dir.join("curves"))]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(fs::read(&cfg).unwrap(), before, "config file must not change");

        let mut files = Vec::new();
        for sub in ["train", "eval", "sweep", "compare", "curves"] {
            let mut names: Vec<_> = fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
            names.sort();
            for p in names {
                files.push((format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()), fs::read(&p).unwrap()));
            }
        }
        files
    };
    let fa = run(a.path());
    let fb = run(b.path());
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for expected in [
        "train/config.toml",
        "train/model.ckpt",
        "train/train_log.csv",
        "eval/records.csv",
        "sweep/sweep.csv",
        "compare/report.csv",
        "curves/curves.json",
    ] {
        assert!(names.contains(&expected), "missing {expected}: {names:?}");
    }
    assert_eq!(fa.len(), fb.len());
    for ((na, da), (nb, db)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(da == db, "{na} differs between identical runs");
    }

    let curves: serde_json::Value = serde_json::from_slice(&fa.iter().find(|(n, _)| n == "curves/curves.json").unwrap().1).unwrap();
    assert_eq!(curves.as_array().unwrap().len(), 7);
    let report = String::from_utf8(fa.iter().find(|(n, _)| n == "compare/report.csv").unwrap().1.clone()).unwrap();
    assert!(report.lines().next().unwrap().contains("WinOnly"));
}

#[test]
fn baseline_comparison_reads_one_checkpoint_per_archetype() {
    let dir = tempfile::tempdir().unwrap();
    let baselines = mkdir(dir.path().join("baselines"));
    for name in ["Sniper", "Contact", "Grouped", "Scattered", "Safe", "DPS", "WinOnly"] {
        let out = train_tiny(&mkdir(dir.path().join(name)), &["--archetype", name, "--episodes", "1"]);
        fs::copy(out.join("model.ckpt"), baselines.join(format!("{name}.ckpt"))).unwrap();
    }
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("compare");
    let o = cari(&["compare", "--config", s(&cfg), "--baselines", s(&baselines), "--games", "2", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["columns"].as_array().unwrap().len(), 7);
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cari"))
        .args(["eval", "--games", "1"])
        .env("CARI_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("eval").join("records.csv").exists());
}
