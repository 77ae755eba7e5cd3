//! Experiment configuration files and command-line overrides.
//!
//! A configuration is TOML, or JSON when the file name ends in `.json`.
//! Overrides take `key=value`. A dotted key (`model.dims=[100,100]`,
//! `scenarios.0.values=[0.1]`) or a top-level key (`replications=5`) sets
//! that field, with the value parsed as JSON and falling back to a string.
//! Any other key names a scalar model parameter (`p=100`, `T=60`,
//! `gamma_x=-0.5`).

use std::path::Path;

use pmtc::experiment::{preset, ExperimentConfig};
use serde_json::Value;

use crate::failure::{CliResult, Failure};

pub fn load(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::new(crate::failure::EXIT_UNREADABLE, format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// Resolves the base configuration from a preset name or a file.
pub fn resolve(preset_name: Option<&str>, file: Option<&Path>) -> CliResult<ExperimentConfig> {
    match (preset_name, file) {
        (Some(_), Some(_)) => Err(Failure::config("--preset and --config are mutually exclusive")),
        (Some(name), None) => preset(name).map_err(Failure::from),
        (None, Some(path)) => load(path),
        (None, None) => Err(Failure::config("either --preset or --config is required")),
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, path: &[&str], value: Value) -> Result<(), String> {
    let (head, rest) = path.split_first().expect("non-empty path");
    let slot = match root {
        Value::Object(map) => {
            if rest.is_empty() {
                map.insert(head.to_string(), value);
                return Ok(());
            }
            map.get_mut(*head).ok_or_else(|| format!("no field `{head}`"))?
        }
        Value::Array(items) => {
            let i: usize = head.parse().map_err(|_| format!("`{head}` is not an array index"))?;
            let len = items.len();
            let item = items.get_mut(i).ok_or_else(|| format!("index {i} out of range for {len} items"))?;
            if rest.is_empty() {
                *item = value;
                return Ok(());
            }
            item
        }
        _ => return Err(format!("`{head}` is not inside a table")),
    };
    set_path(slot, rest, value)
}

pub fn apply_override(cfg: &mut ExperimentConfig, kv: &str) -> CliResult<()> {
    let (key, raw) = kv.split_once('=').ok_or_else(|| Failure::config(format!("override `{kv}` is not key=value")))?;
    let key = key.trim();
    let mut tree = serde_json::to_value(&*cfg).expect("configuration serializes");
    let top_level = tree.as_object().is_some_and(|m| m.contains_key(key));
    if key.contains('.') || top_level {
        let path: Vec<&str> = key.split('.').collect();
        set_path(&mut tree, &path, parse_value(raw.trim())).map_err(|e| Failure::config(format!("override `{kv}`: {e}")))?;
        *cfg = serde_json::from_value(tree).map_err(|e| Failure::config(format!("override `{kv}`: {e}")))?;
    } else {
        let v: f64 = raw.trim().parse().map_err(|_| Failure::config(format!("override `{kv}`: expected a number")))?;
        let name = if key == "T" { "periods" } else { key };
        cfg.model.set_parameter(name, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pmtc::experiment::Model;

    #[test]
    fn overrides_reach_nested_and_model_fields() {
        let mut cfg = preset("fig2").unwrap();
        apply_override(&mut cfg, "replications=5").unwrap();
        apply_override(&mut cfg, "p=100").unwrap();
        apply_override(&mut cfg, "T=60").unwrap();
        apply_override(&mut cfg, "scenarios.0.values=[-0.3,0.1]").unwrap();
        assert_eq!(cfg.replications, 5);
        assert_eq!(cfg.scenarios[0].values, vec![-0.3, 0.1]);
        let Model::Pmtc(d) = &cfg.model else { panic!() };
        assert_eq!((d.dims.clone(), d.periods), (vec![100, 100], 60));
        assert!(apply_override(&mut cfg, "nonsense=1").is_err());
        assert!(apply_override(&mut cfg, "model.bogus=1").is_err());
        assert!(apply_override(&mut cfg, "replications").is_err());
    }

    #[test]
    fn toml_and_json_presets_round_trip() {
        let cfg = preset("figA1").unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), cfg);
        let bad = text.replace("replications", "replicates");
        assert!(toml::from_str::<ExperimentConfig>(&bad).is_err());
    }
}
