//! Scenario files: versioned TOML holding every `SimConfig` section, plus the
//! canned scenarios shipped with the tool.
//!
//! Missing keys take their defaults and unknown keys are rejected. A run
//! manifest (JSON) is accepted wherever a scenario is, so a run can be
//! reproduced from its manifest alone.

use std::path::Path;

use anyhow::Context;
use odor_consensus::config::SimConfig;
use serde::Deserialize;
use toml::{Table, Value};

use crate::CliError;

pub const SCHEMA_VERSION: i64 = 1;

pub const CANNED: [(&str, &str); 4] = [
    ("paper_consensus", include_str!("../scenarios/paper_consensus.toml")),
    ("paper_formation", include_str!("../scenarios/paper_formation.toml")),
    ("no_disturbance", include_str!("../scenarios/no_disturbance.toml")),
    ("pso_comparison", include_str!("../scenarios/pso_comparison.toml")),
];

pub fn canned(name: &str) -> Option<&'static str> {
    CANNED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::InvalidConfig(msg.into())
}

/// Sets `path` (dotted) in `table` to `raw`, read as a TOML value when it
/// parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| invalid(format!("override `{assignment}` is not key=value")))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(invalid(format!("override key `{path}` is malformed")));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cursor = table;
    for key in parents {
        let entry = cursor
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| invalid(format!("override `{path}`: `{key}` is not a section")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

/// Checks and strips `schema_version`; absent means the current version.
fn take_schema_version(table: &mut Table) -> Result<(), CliError> {
    match table.remove("schema_version") {
        None => Ok(()),
        Some(Value::Integer(SCHEMA_VERSION)) => Ok(()),
        Some(other) => Err(invalid(format!(
            "invalid `schema_version`: expected {SCHEMA_VERSION}, got {other}"
        ))),
    }
}

/// Builds and validates a config from a parsed scenario table.
pub fn config_from_table(mut table: Table, overrides: &[String]) -> Result<SimConfig, CliError> {
    take_schema_version(&mut table)?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: SimConfig = serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        invalid(format!("invalid `{path}`: {}", e.into_inner()))
    })?;
    cfg.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(cfg)
}

pub fn parse_scenario(text: &str, overrides: &[String]) -> Result<SimConfig, CliError> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| invalid(e.to_string()))?;
    config_from_table(table, overrides)
}

/// Reads the resolved config out of a run manifest.
pub fn parse_manifest(text: &str, overrides: &[String]) -> Result<SimConfig, CliError> {
    #[derive(Deserialize)]
    struct Partial {
        schema_version: i64,
        config: serde_json::Value,
    }
    let m: Partial = serde_json::from_str(text).map_err(|e| invalid(format!("manifest: {e}")))?;
    let mut table = match Value::try_from(m.config) {
        Ok(Value::Table(t)) => t,
        Ok(_) => return Err(invalid("manifest: `config` must be an object")),
        Err(e) => return Err(invalid(format!("manifest: {e}"))),
    };
    table.insert("schema_version".into(), Value::Integer(m.schema_version));
    config_from_table(table, overrides)
}

/// Resolves `spec` as a file path (scenario TOML or manifest JSON) or, failing
/// that, a canned scenario name.
pub fn load(spec: &str, overrides: &[String]) -> Result<SimConfig, CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        return if is_json {
            parse_manifest(&text, overrides)
        } else {
            parse_scenario(&text, overrides)
        };
    }
    match canned(spec) {
        Some(text) => parse_scenario(text, overrides),
        None => {
            let names: Vec<&str> = CANNED.iter().map(|(n, _)| *n).collect();
            Err(invalid(format!(
                "`{spec}` is neither a readable file nor a canned scenario ({})",
                names.join(", ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use odor_consensus::config::ScenarioKind;
    use odor_consensus::dynamics::DriftModel;

    #[test]
    fn canned_consensus_equals_library_defaults() {
        assert_eq!(load("paper_consensus", &[]).unwrap(), SimConfig::default());
    }

    #[test]
    fn every_canned_scenario_loads() {
        for (name, _) in CANNED {
            let cfg = load(name, &[]).unwrap();
            assert_eq!(cfg.name, name);
        }
        let f = load("paper_formation", &[]).unwrap();
        assert_eq!(f.agents.scenario, ScenarioKind::Formation);
        assert_eq!(load("no_disturbance", &[]).unwrap().dynamics.drift, DriftModel::Zero);
    }

    #[test]
    fn missing_keys_take_defaults() {
        let cfg = parse_scenario("schema_version = 1\n[time]\nt_end = 2.0\n", &[]).unwrap();
        assert_eq!(cfg.time.t_end, 2.0);
        assert_eq!(cfg.time.dt, 1e-3);
        assert_eq!(cfg.smc, SimConfig::default().smc);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let err = parse_scenario("[time]\nthetaa = 1.0\n", &[]).unwrap_err().to_string();
        assert!(err.contains("time"), "{err}");
        assert!(err.contains("thetaa"), "{err}");
        let err = parse_scenario("bogus = 1\n", &[]).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn validation_names_the_key() {
        let err = load("paper_consensus", &["time.theta=0".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("time.theta"), "{err}");
        let err = parse_scenario("[time]\ndt = \"fast\"\n", &[]).unwrap_err().to_string();
        assert!(err.contains("time.dt"), "{err}");
    }

    #[test]
    fn schema_version_is_checked() {
        let err = parse_scenario("schema_version = 7\n", &[]).unwrap_err().to_string();
        assert!(err.contains("schema_version"), "{err}");
    }

    #[test]
    fn overrides_parse_values() {
        let cfg = load(
            "paper_consensus",
            &[
                "smc.mu=7".into(),
                "planner.casting=literal".into(),
                "agents.initial_states=[[1.0],[2.0],[3.0],[4.0]]".into(),
                "dynamics.disturbance.amplitude = 0.1".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.smc.mu, 7.0);
        assert_eq!(cfg.agents.initial_states[3], vec![4.0]);
        assert_eq!(cfg.dynamics.disturbance.bound(), 0.1);
        assert!(load("paper_consensus", &["smc".into()]).is_err());
        assert!(load("paper_consensus", &["smc.mu.x=1".into()]).is_err());
    }

    #[test]
    fn unknown_scenario_name() {
        let err = load("no_such_scenario", &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
