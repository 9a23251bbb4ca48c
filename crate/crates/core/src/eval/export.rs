//! CSV and JSON writers with fixed column order.

use super::{Aggregate, ArchetypeReport, BinnedCurve, MetricsRecord, SweepRow};
use crate::reward::Coefficient;
use std::io::Write;

const RECORD_HEADER: [&str; 13] = [
    "game",
    "seed",
    "stabs",
    "shots",
    "cover_hits",
    "shots_at_cover_fraction",
    "mean_hero_distance",
    "shields_used",
    "lost_hp_heroes_fraction",
    "lost_hp_enemies_fraction",
    "outcome",
    "turns",
    "steps",
];

/// Per-game rows followed by one `mean` row.
pub fn write_records_csv<W: Write>(out: W, records: &[MetricsRecord], agg: &Aggregate) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.game.to_string(),
            r.seed.to_string(),
            r.stabs.to_string(),
            r.shots.to_string(),
            r.cover_hits.to_string(),
            r.shots_at_cover_fraction.to_string(),
            r.mean_hero_distance.to_string(),
            r.shields_used.to_string(),
            r.lost_hp_heroes_fraction.to_string(),
            r.lost_hp_enemies_fraction.to_string(),
            r.outcome.as_str().to_string(),
            r.turns.to_string(),
            r.steps.to_string(),
        ])?;
    }
    w.write_record([
        "mean".to_string(),
        String::new(),
        agg.stabs.to_string(),
        agg.shots.to_string(),
        String::new(),
        agg.shots_at_cover_fraction.to_string(),
        agg.mean_hero_distance.to_string(),
        agg.shields_used.to_string(),
        agg.lost_hp_heroes_fraction.to_string(),
        agg.lost_hp_enemies_fraction.to_string(),
        format!("win={} loss={} draw={}", agg.win_rate, agg.loss_rate, agg.draw_rate),
        agg.turns.to_string(),
        agg.steps.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = vec!["game", "seed"];
    header.extend(Coefficient::ALL.iter().map(|c| c.name()));
    header.extend([
        "stabs_per_turn",
        "shots_per_turn",
        "cover_hits_per_turn",
        "shields_per_turn",
        "mean_hero_distance",
        "lost_hp_heroes_fraction",
        "lost_hp_enemies_fraction",
        "win",
        "outcome",
        "turns",
    ]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.game.to_string(), r.seed.to_string()];
        rec.extend(r.config.to_array().iter().map(|v| v.to_string()));
        rec.extend([
            r.stabs_per_turn.to_string(),
            r.shots_per_turn.to_string(),
            r.cover_hits_per_turn.to_string(),
            r.shields_per_turn.to_string(),
            r.mean_hero_distance.to_string(),
            r.lost_hp_heroes_fraction.to_string(),
            r.lost_hp_enemies_fraction.to_string(),
            r.win.to_string(),
            r.outcome.as_str().to_string(),
            r.turns.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve_json<W: Write>(mut out: W, curves: &[BinnedCurve]) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, curves)?;
    writeln!(out)
}

/// One row per metric, one column per archetype.
pub fn write_report_csv<W: Write>(out: W, report: &ArchetypeReport) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["metric".to_string()];
    header.extend(report.columns.iter().map(|c| c.archetype.as_str().to_string()));
    w.write_record(&header)?;
    for (i, name) in report.metric_names().iter().enumerate() {
        let mut rec = vec![name.to_string()];
        rec.extend(report.columns.iter().map(|c| c.aggregate.rows()[i].1.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
