use std::fs;
use std::path::Path;

use fcnls::data_io::{SplitSpec, SyntheticSpec};
use fcnls::fcn::{default_architecture, validate_architecture, LayerSpec};
use fcnls::{Error, Result, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Every knob of a run. `seed` is copied into the synthetic, split and
/// training seeds during resolution, so one number pins the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synthetic: SyntheticSpec,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub architecture: Vec<LayerSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            synthetic: SyntheticSpec::default(),
            split: SplitSpec::default(),
            train: TrainConfig::default(),
            architecture: default_architecture(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let prefixed = |prefix: &str, r: Result<()>| {
            r.map_err(|e| match e {
                Error::Config { field, message } => Error::Config {
                    field: format!("{prefix}.{field}"),
                    message,
                },
                other => other,
            })
        };
        prefixed("synthetic", self.synthetic.validate())?;
        prefixed("split", self.split.validate())?;
        prefixed("train", self.train.validate())?;
        prefixed("architecture", validate_architecture(&self.architecture).map(|_| ()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let path = dir.join("config.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_error(&path, e))
    }
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn config_error(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

/// Overlays `patch` onto `base`. Every key of `patch` must already exist in
/// `base`; arrays and scalars are replaced whole.
fn merge(base: &mut Value, patch: Value, path: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &key)?,
                    None => return Err(config_error(key, "unknown configuration key")),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Sets a dotted `key` to `raw`, read as JSON when it parses and as a
/// string otherwise.
fn set_key(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut patch = value;
    for part in key.rsplit('.') {
        if part.is_empty() {
            return Err(config_error(key, "empty path segment"));
        }
        let mut m = serde_json::Map::new();
        m.insert(part.to_string(), patch);
        patch = Value::Object(m);
    }
    merge(root, patch, "")
}

/// Resolves defaults, then the JSON file, then `key=value` assignments in
/// order; the dedicated flags arrive here already as assignments.
pub fn resolve(file: Option<&Path>, assignments: &[(String, String)]) -> Result<RunConfig> {
    let mut value = serde_json::to_value(RunConfig::default())?;
    if let Some(path) = file {
        let text = fs::read(path).map_err(|e| io_error(path, e))?;
        let patch: Value = serde_json::from_slice(&text).map_err(|e| config_error(path.display().to_string(), e.to_string()))?;
        merge(&mut value, patch, "")?;
    }
    for (k, v) in assignments {
        set_key(&mut value, k, v)?;
    }
    let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| config_error("config", e.to_string()))?;
    cfg.synthetic.seed = cfg.seed;
    cfg.split.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.to_string()))
        .ok_or_else(|| format!("expected key=value, got `{s}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn defaults_resolve_and_round_trip() {
        let cfg = resolve(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn later_assignments_win() {
        let cfg = resolve(None, &[set("synthetic.count", "10"), set("synthetic.count", "12")]).unwrap();
        assert_eq!(cfg.synthetic.count, 12);
    }

    #[test]
    fn seed_propagates() {
        let cfg = resolve(None, &[set("seed", "7")]).unwrap();
        assert_eq!((cfg.synthetic.seed, cfg.split.seed, cfg.train.seed), (7, 7, 7));
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"train": {"max_epochs": 3, "batch_size": 4}}"#).unwrap();
        let cfg = resolve(Some(&path), &[set("train.max_epochs", "5")]).unwrap();
        assert_eq!(cfg.train.max_epochs, 5);
        assert_eq!(cfg.train.batch_size, 4);
    }

    #[test]
    fn unknown_key_is_named() {
        match resolve(None, &[set("train.epochz", "3")]) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "train.epochz"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_value_names_the_field() {
        match resolve(None, &[set("synthetic.count", "0")]) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "synthetic.count"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn string_values_need_no_quotes() {
        let cfg = resolve(None, &[set("synthetic.blob_kind", "disc")]).unwrap();
        assert_eq!(cfg.synthetic.blob_kind, fcnls::data_io::BlobKind::Disc);
    }
}
