//! Machine-readable description of the HTTP interface, served at `/openapi.json`.

use serde_json::{json, Value};

fn schema(name: &str) -> Value {
    json!({ "$ref": format!("#/components/schemas/{name}") })
}

fn ok(name: &str) -> Value {
    json!({ "description": "OK", "content": { "application/json": { "schema": schema(name) } } })
}

fn array_of(name: &str) -> Value {
    json!({ "description": "OK", "content": { "application/json": { "schema": { "type": "array", "items": schema(name) } } } })
}

fn error(description: &str) -> Value {
    json!({ "description": description, "content": { "application/json": { "schema": schema("Error") } } })
}

fn body(name: &str) -> Value {
    json!({ "required": true, "content": { "application/json": { "schema": schema(name) } } })
}

const COEFFICIENTS: [&str; 7] = [
    "r_Stab",
    "r_CvrShooting",
    "r_HeroShot",
    "r_UsefulShld",
    "r_NmyDamage",
    "r_HeroDistance",
    "r_Win",
];

fn reward_config() -> Value {
    let props: serde_json::Map<String, Value> = COEFFICIENTS
        .iter()
        .map(|c| (c.to_string(), json!({ "type": "number" })))
        .collect();
    json!({ "type": "object", "required": COEFFICIENTS, "properties": props, "additionalProperties": false })
}

fn object(required: &[&str], props: Value) -> Value {
    json!({ "type": "object", "required": required, "properties": props })
}

pub fn document() -> Value {
    let id_param = json!({ "name": "id", "in": "path", "required": true, "schema": { "type": "string" } });
    json!({
        "openapi": "3.1.0",
        "info": {
            "title": "cari explorer",
            "version": env!("CARGO_PKG_VERSION"),
            "description": "Run reward-configured episodes on trained checkpoints and inspect them frame by frame."
        },
        "paths": {
            "/models": { "get": { "summary": "Loaded checkpoints", "responses": { "200": array_of("Model") } } },
            "/presets": { "get": { "summary": "Archetype coefficient presets", "responses": { "200": array_of("Preset") } } },
            "/intervals": { "get": { "summary": "Training interval of each coefficient", "responses": { "200": array_of("Interval") } } },
            "/episodes": { "post": {
                "summary": "Play one episode and store its replay",
                "requestBody": body("EpisodeRequest"),
                "responses": { "200": ok("EpisodeResponse"), "404": error("Unknown model"), "422": error("Invalid request") }
            } },
            "/replays/{id}": { "get": {
                "summary": "Replay file of a stored episode",
                "parameters": [id_param.clone()],
                "responses": { "200": ok("ReplayFile"), "404": error("Unknown or evicted replay") }
            } },
            "/replays/{id}/frames": { "get": {
                "summary": "One page of frames",
                "parameters": [
                    id_param.clone(),
                    { "name": "from", "in": "query", "schema": { "type": "integer", "minimum": 0 } },
                    { "name": "count", "in": "query", "schema": { "type": "integer", "minimum": 1, "maximum": crate::MAX_PAGE } }
                ],
                "responses": { "200": ok("FramePage"), "404": error("Unknown or evicted replay"), "422": error("Invalid page") }
            } },
            "/replays/{id}/frames/stream": { "get": {
                "summary": "Every frame as newline-delimited JSON, chunked",
                "parameters": [id_param],
                "responses": {
                    "200": { "description": "One Frame per line", "content": { "application/x-ndjson": { "schema": schema("Frame") } } },
                    "404": error("Unknown or evicted replay")
                }
            } },
            "/sweeps": { "post": {
                "summary": "Capped continuum sweep binned per coefficient",
                "requestBody": body("SweepRequest"),
                "responses": { "200": ok("SweepResponse"), "404": error("Unknown model"), "422": error("Invalid request or above the cap") }
            } },
            "/openapi.json": { "get": { "summary": "This document", "responses": { "200": { "description": "OK" } } } }
        },
        "components": { "schemas": {
            "Error": object(&["error", "fields"], json!({
                "error": { "type": "string" },
                "fields": { "type": "array", "items": { "type": "string" } }
            })),
            "RewardConfig": reward_config(),
            "Model": object(&["id", "label", "conditioned", "episodes", "env_steps", "n_params", "roster_hash", "param_hash"], json!({
                "id": { "type": "string" },
                "label": { "type": "string" },
                "conditioned": { "type": "boolean" },
                "episodes": { "type": "integer" },
                "env_steps": { "type": "integer" },
                "n_params": { "type": "integer" },
                "roster_hash": { "type": "string" },
                "param_hash": { "type": "string" }
            })),
            "Preset": object(&["name", "config"], json!({
                "name": { "type": "string", "enum": ["Sniper", "Contact", "Grouped", "Scattered", "Safe", "DPS", "WinOnly"] },
                "config": schema("RewardConfig")
            })),
            "Interval": object(&["coefficient", "min", "max", "step"], json!({
                "coefficient": { "type": "string", "enum": COEFFICIENTS },
                "min": { "type": "number" },
                "max": { "type": "number" },
                "step": { "type": "number" }
            })),
            "EpisodeRequest": {
                "type": "object",
                "required": ["model", "config"],
                "additionalProperties": false,
                "properties": {
                    "model": { "type": "string" },
                    "config": schema("RewardConfig"),
                    "seed": { "type": ["integer", "null"], "minimum": 0 },
                    "greedy": { "type": "boolean", "default": true }
                }
            },
            "Metrics": object(&["game", "seed", "stabs", "shots", "cover_hits", "shots_at_cover_fraction", "mean_hero_distance",
                "shields_used", "lost_hp_heroes_fraction", "lost_hp_enemies_fraction", "outcome", "turns", "steps"], json!({
                "game": { "type": "integer" },
                "seed": { "type": "integer" },
                "stabs": { "type": "integer" },
                "shots": { "type": "integer" },
                "cover_hits": { "type": "integer" },
                "shots_at_cover_fraction": { "type": "number", "minimum": 0, "maximum": 1 },
                "mean_hero_distance": { "type": "number" },
                "shields_used": { "type": "integer" },
                "lost_hp_heroes_fraction": { "type": "number", "minimum": 0, "maximum": 1 },
                "lost_hp_enemies_fraction": { "type": "number", "minimum": 0, "maximum": 1 },
                "outcome": { "type": "string", "enum": ["Ongoing", "Win", "Loss", "Draw"] },
                "turns": { "type": "integer" },
                "steps": { "type": "integer" }
            })),
            "EpisodeResponse": object(&["replay_id", "model", "seed", "greedy", "config", "frames", "outcome", "total_reward", "summary"], json!({
                "replay_id": { "type": "string" },
                "model": { "type": "string" },
                "seed": { "type": "integer" },
                "greedy": { "type": "boolean" },
                "config": schema("RewardConfig"),
                "frames": { "type": "integer" },
                "outcome": { "type": "string", "enum": ["win", "loss", "draw"] },
                "total_reward": { "type": "number" },
                "summary": schema("Metrics")
            })),
            "Events": object(&["stab", "cvr_shooting", "hero_shot", "useful_shld", "nmy_damage", "nmy_damage_hp", "hero_distance", "win_flag"], json!({
                "stab": { "type": "integer" },
                "cvr_shooting": { "type": "integer" },
                "hero_shot": { "type": "integer" },
                "useful_shld": { "type": "integer" },
                "nmy_damage": { "type": "integer" },
                "nmy_damage_hp": { "type": "integer" },
                "hero_distance": { "type": "number" },
                "win_flag": { "type": "integer", "minimum": -1, "maximum": 1 }
            })),
            "Unit": object(&["id", "team", "kind", "x", "y", "health", "max_health", "alive", "shield_active", "shield_cooldown"], json!({
                "id": { "type": "string" },
                "team": { "type": "string", "enum": ["Hero", "Enemy"] },
                "kind": { "type": "string", "enum": ["hero", "brute", "archer", "soldier"] },
                "x": { "type": "integer" },
                "y": { "type": "integer" },
                "health": { "type": "integer" },
                "max_health": { "type": "integer" },
                "alive": { "type": "boolean" },
                "shield_active": { "type": "boolean" },
                "shield_cooldown": { "type": "integer" }
            })),
            "Board": object(&["size", "units", "covers"], json!({
                "size": { "type": "integer" },
                "units": { "type": "array", "items": schema("Unit") },
                "covers": { "type": "array", "items": { "type": "array", "items": { "type": "integer" } } }
            })),
            "Frame": object(&["index", "unit", "action", "action_index", "turn", "turns_played", "occurrences", "board", "events", "reward", "outcome"], json!({
                "index": { "type": "integer" },
                "unit": { "type": ["string", "null"] },
                "action": { "type": ["string", "null"] },
                "action_index": { "type": ["integer", "null"] },
                "turn": { "type": "integer" },
                "turns_played": { "type": "integer" },
                "occurrences": { "type": "array", "items": { "type": "object" } },
                "board": schema("Board"),
                "events": schema("Events"),
                "reward": { "type": "number" },
                "outcome": { "type": "string", "enum": ["ongoing", "win", "loss", "draw"] }
            })),
            "FramePage": object(&["replay_id", "total", "from", "frames"], json!({
                "replay_id": { "type": "string" },
                "total": { "type": "integer" },
                "from": { "type": "integer" },
                "frames": { "type": "array", "items": schema("Frame") }
            })),
            "ReplayFile": object(&["header", "actions", "final_digest"], json!({
                "header": { "type": "object" },
                "actions": { "type": "array", "items": { "type": "integer" } },
                "final_digest": { "type": "string" }
            })),
            "SweepRequest": {
                "type": "object",
                "required": ["model", "games"],
                "additionalProperties": false,
                "properties": {
                    "model": { "type": "string" },
                    "games": { "type": "integer", "minimum": 1 },
                    "seed": { "type": "integer", "minimum": 0 },
                    "widen": { "type": ["number", "null"] },
                    "bins": { "type": ["integer", "null"], "minimum": 1 }
                }
            },
            "Bin": object(&["lo", "hi", "center", "count", "mean", "ci_lo", "ci_hi"], json!({
                "lo": { "type": "number" },
                "hi": { "type": "number" },
                "center": { "type": "number" },
                "count": { "type": "integer" },
                "mean": { "type": ["number", "null"] },
                "ci_lo": { "type": ["number", "null"] },
                "ci_hi": { "type": ["number", "null"] }
            })),
            "Curve": object(&["coefficient", "metric", "edges", "bins", "bounds"], json!({
                "coefficient": { "type": "string", "enum": COEFFICIENTS },
                "metric": { "type": "string" },
                "edges": { "type": "array", "items": { "type": "number" } },
                "bins": { "type": "array", "items": schema("Bin") },
                "bounds": { "type": "array", "items": { "type": "number" } }
            })),
            "SweepResponse": object(&["model", "games", "seed", "widen", "curves"], json!({
                "model": { "type": "string" },
                "games": { "type": "integer" },
                "seed": { "type": "integer" },
                "widen": { "type": "number" },
                "curves": { "type": "array", "items": schema("Curve") }
            }))
        } }
    })
}
