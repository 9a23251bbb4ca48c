use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use cari_core::env::{ObservationLayout, Scenario};
use cari_core::nn::{Architecture, Checkpoint, CheckpointMeta, ConvSpec, PolicyModel};
use cari_core::reward::{archetype_config, ArchetypeName, RewardSpace};
use cari_explorer::{router, AppState, LoadError, ServiceConfig};
use rand::SeedableRng;
use serde_json::{json, Value};
use std::sync::Arc;
use tower::ServiceExt;

fn checkpoint(label: &str, conditioned: bool, seed: u64) -> Checkpoint {
    let scenario = Scenario::default();
    let arch = Architecture {
        conv: vec![ConvSpec {
            out_channels: 2,
            kernel: 3,
            stride: 2,
        }],
        hidden: vec![8],
        ..Architecture::for_layout(&ObservationLayout::for_board(scenario.board_size))
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let space = RewardSpace::default();
    Checkpoint {
        model: PolicyModel::new(arch, &mut rng),
        meta: CheckpointMeta {
            label: label.into(),
            conditioned,
            reward_config: (!conditioned).then(|| archetype_config(ArchetypeName::Sniper, &space)),
            reward_space: space,
            roster_hash: scenario.roster_hash(),
            seed,
            episodes: 0,
            env_steps: 0,
        },
    }
}

fn service(capacity: usize) -> (AppState, Router) {
    let config = ServiceConfig {
        replay_capacity: capacity,
        sweep_cap: 40,
        ..ServiceConfig::default()
    };
    let state = AppState::new(
        config,
        vec![("cari".into(), checkpoint("cari", true, 1)), ("sniper".into(), checkpoint("Sniper", false, 2))],
    )
    .unwrap();
    let app = router(state.clone());
    (state, app)
}

async fn raw(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>, Option<String>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let length = resp.headers().get("content-length").map(|v| v.to_str().unwrap().to_string());
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec(), length)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes, _) = raw(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn preset(name: &str) -> Value {
    serde_json::to_value(archetype_config(name.parse().unwrap(), &RewardSpace::default())).unwrap()
}

fn episode(model: &str, config: Value, seed: u64) -> Value {
    json!({ "model": model, "config": config, "seed": seed })
}

/// Minimal JSON-schema check over the subset the service document uses.
fn conforms(doc: &Value, schema: &Value, value: &Value, path: &str) -> Result<(), String> {
    if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
        let name = r.rsplit('/').next().unwrap();
        return conforms(doc, &doc["components"]["schemas"][name], value, path);
    }
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().map(|x| x.as_str().unwrap()).collect(),
            _ => panic!("bad type in schema"),
        };
        let ok = types.iter().any(|t| match *t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "number" => value.is_number(),
            "integer" => value.is_i64() || value.is_u64(),
            "boolean" => value.is_boolean(),
            "null" => value.is_null(),
            other => panic!("unknown type {other}"),
        });
        if !ok {
            return Err(format!("{path}: {value} is not {types:?}"));
        }
    }
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            return Err(format!("{path}: {value} not in {allowed:?}"));
        }
    }
    if let Some(x) = value.as_f64() {
        if schema.get("minimum").and_then(Value::as_f64).is_some_and(|m| x < m)
            || schema.get("maximum").and_then(Value::as_f64).is_some_and(|m| x > m)
        {
            return Err(format!("{path}: {x} out of bounds"));
        }
    }
    if let Some(obj) = value.as_object() {
        for req in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            if !obj.contains_key(req.as_str().unwrap()) {
                return Err(format!("{path}: missing {req}"));
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (k, v) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(s) => conforms(doc, s, v, &format!("{path}.{k}"))?,
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{path}: unexpected {k}"))
                }
                None => {}
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), value.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            conforms(doc, items, v, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

fn response_schema(doc: &Value, path: &str, method: &str, status: StatusCode) -> Value {
    let content = &doc["paths"][path][method]["responses"][status.as_str()]["content"];
    let (_, media) = content.as_object().unwrap().iter().next().unwrap();
    media["schema"].clone()
}

#[tokio::test]
async fn presets_and_intervals_describe_the_reward_space() {
    let (_, app) = service(8);
    let (status, presets) = call(&app, "GET", "/presets", None).await;
    assert_eq!(status, StatusCode::OK);
    let presets = presets.as_array().unwrap();
    assert_eq!(presets.len(), 7);
    let sniper = presets.iter().find(|p| p["name"] == "Sniper").unwrap();
    assert_eq!(sniper["config"]["r_Stab"], json!(-1.0));
    assert_eq!(sniper["config"]["r_HeroShot"], json!(2.5));
    assert_eq!(sniper["config"]["r_CvrShooting"], json!(-2.0));
    let win_only = presets.iter().find(|p| p["name"] == "WinOnly").unwrap();
    for (k, v) in win_only["config"].as_object().unwrap() {
        let expected = if k == "r_Win" { 10.0 } else { 0.0 };
        assert_eq!(v.as_f64(), Some(expected), "{k}");
    }

    let (_, intervals) = call(&app, "GET", "/intervals", None).await;
    let intervals = intervals.as_array().unwrap();
    assert_eq!(intervals.len(), 7);
    for i in intervals {
        assert!(i["min"].as_f64() < i["max"].as_f64());
    }
}

#[tokio::test]
async fn same_seed_gives_the_same_replay() {
    let (_, app) = service(8);
    let req = episode("cari", preset("Contact"), 11);
    let (s1, a) = call(&app, "POST", "/episodes", Some(req.clone())).await;
    let (s2, b) = call(&app, "POST", "/episodes", Some(req)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK), "{a}");
    assert_eq!(a, b);
    let id = a["replay_id"].as_str().unwrap();
    let (_, fa) = call(&app, "GET", &format!("/replays/{id}/frames?count=1000"), None).await;
    let total = a["frames"].as_u64().unwrap();
    assert_eq!(fa["total"].as_u64(), Some(total));
    assert_eq!(fa["frames"].as_array().unwrap().len() as u64, total);

    // A different seed gives a different replay id.
    let (_, c) = call(&app, "POST", "/episodes", Some(episode("cari", preset("Contact"), 12))).await;
    assert_ne!(c["replay_id"], a["replay_id"]);

    // The stored replay file re-executes to its digest.
    let (status, bytes, _) = raw(&app, "GET", &format!("/replays/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let replay = cari_core::env::Replay::from_json(std::str::from_utf8(&bytes).unwrap()).unwrap();
    replay.verify().unwrap();
}

#[tokio::test]
async fn summary_matches_metrics_recomputed_from_frames() {
    let (_, app) = service(8);
    for (seed, name) in [(3, "Sniper"), (4, "Grouped"), (5, "Safe")] {
        let (status, ep) = call(&app, "POST", "/episodes", Some(episode("cari", preset(name), seed))).await;
        assert_eq!(status, StatusCode::OK, "{ep}");
        let id = ep["replay_id"].as_str().unwrap();
        let (_, page) = call(&app, "GET", &format!("/replays/{id}/frames?count=1000"), None).await;
        let frames = page["frames"].as_array().unwrap();

        let (mut stabs, mut shots, mut cover, mut shields) = (0u64, 0u64, 0u64, 0u64);
        let mut distances = Vec::new();
        for f in frames {
            for o in f["occurrences"].as_array().unwrap() {
                let (tag, body) = o.as_object().unwrap().iter().next().unwrap();
                match tag.as_str() {
                    "HeroStabbed" => stabs += 1,
                    "HeroShot" => {
                        shots += 1;
                        cover += u64::from(!body["blocked_by"].is_null());
                    }
                    "ShieldRaised" => shields += 1,
                    "TurnEnded" => distances.push(body["hero_distance"].as_f64().unwrap()),
                    _ => {}
                }
            }
        }
        let last = frames.last().unwrap();
        let lost = |team: &str| {
            let units: Vec<&Value> = last["board"]["units"].as_array().unwrap().iter().filter(|u| u["team"] == team).collect();
            let max: u64 = units.iter().map(|u| u["max_health"].as_u64().unwrap()).sum();
            let left: u64 = units.iter().map(|u| u["health"].as_u64().unwrap()).sum();
            (max - left) as f64 / max as f64
        };
        let s = &ep["summary"];
        assert_eq!(s["stabs"].as_u64(), Some(stabs));
        assert_eq!(s["shots"].as_u64(), Some(shots));
        assert_eq!(s["cover_hits"].as_u64(), Some(cover));
        assert_eq!(s["shields_used"].as_u64(), Some(shields));
        assert!((s["lost_hp_heroes_fraction"].as_f64().unwrap() - lost("Hero")).abs() < 1e-12);
        assert!((s["lost_hp_enemies_fraction"].as_f64().unwrap() - lost("Enemy")).abs() < 1e-12);
        if !distances.is_empty() {
            let mean = distances.iter().sum::<f64>() / distances.len() as f64;
            assert!((s["mean_hero_distance"].as_f64().unwrap() - mean).abs() < 1e-9);
        }
        assert_eq!(s["steps"].as_u64(), Some(frames.len() as u64 - 1));
        assert_eq!(s["turns"], last["turns_played"]);
        assert_eq!(last["outcome"], ep["outcome"]);
        assert_ne!(last["outcome"], "ongoing");
        assert!((last["reward"].as_f64().unwrap() - ep["total_reward"].as_f64().unwrap()).abs() < 1e-12);
        assert!(frames[0]["action"].is_null());
        for (i, f) in frames.iter().enumerate() {
            assert_eq!(f["index"].as_u64(), Some(i as u64));
        }
    }
}

#[tokio::test]
async fn unknown_model_and_replay_are_not_found() {
    let (_, app) = service(8);
    let (status, body) = call(&app, "POST", "/episodes", Some(episode("nope", preset("Sniper"), 1))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("nope"));
    let (status, _) = call(&app, "GET", "/replays/0123456789abcdef/frames", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", "/sweeps", Some(json!({ "model": "nope", "games": 2 }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_coefficients_are_named() {
    let (_, app) = service(8);
    let mut config = preset("Sniper");
    config.as_object_mut().unwrap().remove("r_Win");
    config["r_Stab"] = json!("high");
    config["r_Luck"] = json!(1.0);
    let (status, body) = call(&app, "POST", "/episodes", Some(episode("cari", config, 1))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let mut fields: Vec<&str> = body["fields"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    fields.sort();
    assert_eq!(fields, ["r_Luck", "r_Stab", "r_Win"]);

    let (status, body) = call(&app, "POST", "/episodes", Some(json!({ "model": "cari", "config": 3 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["fields"], json!(["config"]));

    let (status, body) = call(&app, "POST", "/episodes", Some(json!({ "config": preset("Safe") }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["fields"], json!(["model"]));
}

#[tokio::test]
async fn sweeps_are_capped_and_need_a_conditioned_model() {
    let (_, app) = service(8);
    let (status, body) = call(&app, "POST", "/sweeps", Some(json!({ "model": "cari", "games": 41 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("limit 40"), "{body}");
    assert_eq!(body["fields"], json!(["games"]));

    let (status, body) = call(&app, "POST", "/sweeps", Some(json!({ "model": "sniper", "games": 4 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["fields"], json!(["model"]));

    let req = json!({ "model": "cari", "games": 12, "seed": 3, "bins": 4 });
    let (status, a) = call(&app, "POST", "/sweeps", Some(req.clone())).await;
    assert_eq!(status, StatusCode::OK, "{a}");
    assert_eq!(a["games"], 12);
    let curves = a["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 7);
    for c in curves {
        let count: u64 = c["bins"].as_array().unwrap().iter().map(|b| b["count"].as_u64().unwrap()).sum();
        assert!(count <= 12);
        assert_eq!(c["bins"].as_array().unwrap().len(), 4);
    }
    let (_, b) = call(&app, "POST", "/sweeps", Some(req)).await;
    assert_eq!(a, b, "sweeps are deterministic for a fixed seed");
}

#[tokio::test]
async fn paging_and_streaming_agree() {
    let (_, app) = service(8);
    let (_, ep) = call(&app, "POST", "/episodes", Some(episode("cari", preset("DPS"), 21))).await;
    let id = ep["replay_id"].as_str().unwrap();
    let total = ep["frames"].as_u64().unwrap() as usize;

    let mut paged = Vec::new();
    let mut from = 0;
    while from < total {
        let (status, page) = call(&app, "GET", &format!("/replays/{id}/frames?from={from}&count=7"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(page["from"].as_u64(), Some(from as u64));
        let frames = page["frames"].as_array().unwrap();
        assert!(!frames.is_empty() && frames.len() <= 7);
        from += frames.len();
        paged.extend(frames.iter().cloned());
    }
    assert_eq!(paged.len(), total);

    let (_, page) = call(&app, "GET", &format!("/replays/{id}/frames?from={}", total + 5), None).await;
    assert!(page["frames"].as_array().unwrap().is_empty());
    let (status, body) = call(&app, "GET", &format!("/replays/{id}/frames?count=0"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["fields"], json!(["count"]));

    let (status, bytes, length) = raw(&app, "GET", &format!("/replays/{id}/frames/stream"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(length.is_none(), "stream must not declare a length");
    let streamed: Vec<Value> = std::str::from_utf8(&bytes)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(streamed, paged);
}

#[tokio::test]
async fn least_recently_used_replay_is_evicted() {
    let (state, app) = service(2);
    let mut ids = Vec::new();
    for seed in 0..2 {
        let (_, ep) = call(&app, "POST", "/episodes", Some(episode("cari", preset("Safe"), seed))).await;
        ids.push(ep["replay_id"].as_str().unwrap().to_string());
    }
    // Touch the first so the second becomes least recent.
    assert_eq!(call(&app, "GET", &format!("/replays/{}/frames?count=1", ids[0]), None).await.0, StatusCode::OK);
    let (_, ep) = call(&app, "POST", "/episodes", Some(episode("cari", preset("Safe"), 2))).await;
    ids.push(ep["replay_id"].as_str().unwrap().to_string());
    assert_eq!(state.stored_replays(), 2);
    let status = |i: usize| {
        let app = app.clone();
        let id = ids[i].clone();
        async move { call(&app, "GET", &format!("/replays/{id}/frames"), None).await.0 }
    };
    assert_eq!(status(0).await, StatusCode::OK);
    assert_eq!(status(1).await, StatusCode::NOT_FOUND);
    assert_eq!(status(2).await, StatusCode::OK);
}

#[tokio::test]
async fn requests_never_touch_model_parameters() {
    let (_, app) = service(8);
    let expected = checkpoint("cari", true, 1).model.param_hash();
    let hash = |models: &Value| models.as_array().unwrap().iter().find(|m| m["id"] == "cari").unwrap()["param_hash"].clone();
    let (_, before) = call(&app, "GET", "/models", None).await;
    assert_eq!(hash(&before), json!(expected));
    for seed in 0..3 {
        let mut req = episode("cari", preset("Scattered"), seed);
        req["greedy"] = json!(false);
        assert_eq!(call(&app, "POST", "/episodes", Some(req)).await.0, StatusCode::OK);
    }
    call(&app, "POST", "/sweeps", Some(json!({ "model": "cari", "games": 6 }))).await;
    let (_, after) = call(&app, "GET", "/models", None).await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn concurrent_requests_match_sequential_ones() {
    let (_, app) = service(32);
    let seeds: Vec<u64> = (100..108).collect();
    let mut sequential = Vec::new();
    for &s in &seeds {
        sequential.push(call(&app, "POST", "/episodes", Some(episode("cari", preset("Grouped"), s))).await.1);
    }
    let tasks: Vec<_> = seeds
        .iter()
        .map(|&s| {
            let app = app.clone();
            tokio::spawn(async move { call(&app, "POST", "/episodes", Some(episode("cari", preset("Grouped"), s))).await.1 })
        })
        .collect();
    let concurrent = futures::future::join_all(tasks).await.into_iter().map(Result::unwrap).collect::<Vec<_>>();
    assert_eq!(concurrent, sequential);
}

#[tokio::test]
async fn responses_conform_to_the_published_document() {
    let (_, app) = service(8);
    let (_, doc) = call(&app, "GET", "/openapi.json", None).await;
    assert_eq!(doc["openapi"], "3.1.0");

    let check = |path: &'static str, method: &'static str, status: StatusCode, value: Value| {
        let schema = response_schema(&doc, path, method, status);
        conforms(&doc, &schema, &value, path).unwrap_or_else(|e| panic!("{e}"));
    };
    for path in ["/models", "/presets", "/intervals"] {
        let (s, v) = call(&app, "GET", path, None).await;
        check(path, "get", s, v);
    }
    let req = episode("cari", preset("Contact"), 8);
    let schema = json!({ "$ref": "#/components/schemas/EpisodeRequest" });
    conforms(&doc, &schema, &req, "request").unwrap();
    let (s, ep) = call(&app, "POST", "/episodes", Some(req)).await;
    check("/episodes", "post", s, ep.clone());
    let id = ep["replay_id"].as_str().unwrap();
    let (s, page) = call(&app, "GET", &format!("/replays/{id}/frames?count=1000"), None).await;
    check("/replays/{id}/frames", "get", s, page);
    let (s, file) = call(&app, "GET", &format!("/replays/{id}"), None).await;
    check("/replays/{id}", "get", s, file);
    let (s, sweep) = call(&app, "POST", "/sweeps", Some(json!({ "model": "cari", "games": 5, "bins": 3 }))).await;
    check("/sweeps", "post", s, sweep);

    let (s, err) = call(&app, "POST", "/episodes", Some(episode("ghost", preset("Safe"), 1))).await;
    check("/episodes", "post", s, err);
    let (s, err) = call(&app, "POST", "/sweeps", Some(json!({ "model": "cari", "games": 1000 }))).await;
    check("/sweeps", "post", s, err);

    // The checker itself rejects a broken body.
    let schema = response_schema(&doc, "/episodes", "post", StatusCode::OK);
    assert!(conforms(&doc, &schema, &json!({ "replay_id": 3 }), "x").is_err());
}

#[test]
fn mismatched_roster_or_duplicate_ids_refuse_to_load() {
    let mut other = checkpoint("cari", true, 1);
    other.meta.roster_hash = "0".repeat(64);
    let err = AppState::new(ServiceConfig::default(), vec![("a".into(), other)]).err().unwrap();
    assert!(matches!(err, LoadError::Roster { .. }));

    let err = AppState::new(
        ServiceConfig::default(),
        vec![("a".into(), checkpoint("cari", true, 1)), ("a".into(), checkpoint("cari", true, 2))],
    )
    .err()
    .unwrap();
    assert!(matches!(err, LoadError::Duplicate(_)));

    let scenario = Arc::new(Scenario {
        board_size: 16,
        ..Scenario::default()
    });
    let config = ServiceConfig {
        scenario,
        ..ServiceConfig::default()
    };
    assert!(AppState::new(config, vec![("a".into(), checkpoint("cari", true, 1))]).is_err());
}
