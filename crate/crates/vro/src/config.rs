//! Flat `key = value` configuration.
//!
//! Sources, weakest first: built-in defaults, a config file, `VRO_<KEY>`
//! environment variables, command-line overrides. Blank lines and lines
//! starting with `#` are ignored in files.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `tau` | similarity temperature | 0.01 |
//! | `fixed_threshold` | verification threshold without a table | 0.5 |
//! | `k` | top-k percent for calibration | 10 |
//! | `alpha` | attribute similarity weight | 0.5 |
//! | `beta` | attribute cutoff numerator (cutoff = beta / n) | 1.0 |
//! | `property_strict` | allow attribute filtering to return nothing | false |
//! | `detection_floor` | minimum detector score at FIND | 0.2 |
//! | `eta` | FIND_NEAR distance factor | 1.0 |
//! | `gamma` | FIND_INSIDE area fraction | 0.9 |
//! | `result_selection` | `detector_score` or `uv_score` | detector_score |
//! | `early_exit` | stop at the first empty step | true |
//! | `forced_prediction` | never abstain | false |
//! | `bank` | category bank file, one name per line | built-in COCO list |
//! | `synonyms` | extra LOCATE phrases, `phrase = rule` per line | none |
//! | `thresholds` | `vro-thresholds/1` table | none |
//! | `endpoint` | chat-completions URL | none |
//! | `auth_token` | bearer token for `endpoint` | none |
//! | `model` | model name sent to `endpoint` | default |
//! | `llm_temperature` | decoding temperature | 0 |
//! | `max_iters` | generation attempts per query | 5 |
//! | `transport_retries` | extra tries per attempt on transport errors | 2 |
//! | `timeout_s` | HTTP timeout | 60 |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use vro_core::interp::{ExecContext, InterpConfig, LocateRule, ResultSelection, SynonymTable};
use vro_core::progen::GenOptions;
use vro_core::verify::{CategoryBank, ThresholdTable, VerifyConfig};

use crate::thresholds::parse_threshold_table;

pub const KEYS: [&str; 22] = [
    "tau",
    "fixed_threshold",
    "k",
    "alpha",
    "beta",
    "property_strict",
    "detection_floor",
    "eta",
    "gamma",
    "result_selection",
    "early_exit",
    "forced_prediction",
    "bank",
    "synonyms",
    "thresholds",
    "endpoint",
    "auth_token",
    "model",
    "llm_temperature",
    "max_iters",
    "transport_retries",
    "timeout_s",
];

const PATH_KEYS: [&str; 3] = ["bank", "synonyms", "thresholds"];

fn default_value(key: &str) -> Option<&'static str> {
    Some(match key {
        "tau" => "0.01",
        "fixed_threshold" => "0.5",
        "k" => "10",
        "alpha" => "0.5",
        "beta" => "1.0",
        "property_strict" => "false",
        "detection_floor" => "0.2",
        "eta" => "1.0",
        "gamma" => "0.9",
        "result_selection" => "detector_score",
        "early_exit" => "true",
        "forced_prediction" => "false",
        "model" => "default",
        "llm_temperature" => "0",
        "max_iters" => "5",
        "transport_retries" => "2",
        "timeout_s" => "60",
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    File,
    Env,
    Flag,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{origin}: unknown config key '{key}'")]
    UnknownKey { origin: String, key: String },
    #[error("{origin}: expected 'key = value', got '{line}'")]
    Syntax { origin: String, line: String },
    #[error("config key '{key}': {detail}")]
    Value { key: String, detail: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Merged key/value view. Later sources replace earlier ones.
#[derive(Debug, Clone)]
pub struct CliConfig {
    values: BTreeMap<String, (String, Source)>,
}

fn check_key(origin: &str, key: &str) -> Result<(), ConfigError> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(ConfigError::UnknownKey { origin: origin.into(), key: key.into() })
    }
}

/// `key = value` lines; also used for synonym files.
fn parse_pairs(text: &str, origin: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t.split_once('=').ok_or_else(|| ConfigError::Syntax { origin: origin.into(), line: t.into() })?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

impl Default for CliConfig {
    fn default() -> Self {
        let values = KEYS
            .iter()
            .filter_map(|k| default_value(k).map(|v| (k.to_string(), (v.to_owned(), Source::Default))))
            .collect();
        CliConfig { values }
    }
}

impl CliConfig {
    pub fn set(&mut self, key: &str, value: impl Into<String>, source: Source) -> Result<(), ConfigError> {
        check_key(&format!("{source:?}"), key)?;
        self.values.insert(key.into(), (value.into(), source));
        Ok(())
    }

    /// Path-valued keys are resolved against the file's directory.
    pub fn apply_file_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        let origin = path.display().to_string();
        let base = path.parent().unwrap_or(Path::new("."));
        for (k, v) in parse_pairs(text, &origin)? {
            check_key(&origin, &k)?;
            let v = if PATH_KEYS.contains(&k.as_str()) && Path::new(&v).is_relative() { base.join(&v).display().to_string() } else { v };
            self.values.insert(k, (v, Source::File));
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        self.apply_file_text(&text, path)
    }

    /// Reads `VRO_<KEY>` for every known key.
    pub fn apply_env<F: Fn(&str) -> Option<String>>(&mut self, get: F) {
        for k in KEYS {
            if let Some(v) = get(&format!("VRO_{}", k.to_ascii_uppercase())) {
                self.values.insert(k.into(), (v, Source::Env));
            }
        }
    }

    /// `key=value` overrides from the command line.
    pub fn apply_overrides<'a, I: IntoIterator<Item = &'a str>>(&mut self, items: I) -> Result<(), ConfigError> {
        for item in items {
            let (k, v) = item.split_once('=').ok_or_else(|| ConfigError::Syntax { origin: "--set".into(), line: item.into() })?;
            self.set(k.trim(), v.trim(), Source::Flag)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    pub fn source(&self, key: &str) -> Option<Source> {
        self.values.get(key).map(|(_, s)| *s)
    }

    /// Effective settings for reports; the auth token is masked.
    pub fn effective(&self) -> BTreeMap<String, String> {
        self.values
            .iter()
            .map(|(k, (v, _))| (k.clone(), if k == "auth_token" { "***".into() } else { v.clone() }))
            .collect()
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key).ok_or_else(|| ConfigError::Value { key: key.into(), detail: "not set".into() })?;
        raw.parse().map_err(|e: T::Err| ConfigError::Value { key: key.into(), detail: format!("'{raw}': {e}") })
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).filter(|v| !v.is_empty()).map(PathBuf::from)
    }

    fn read(&self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.path(key) {
            None => Ok(None),
            Some(p) => std::fs::read_to_string(&p)
                .map(Some)
                .map_err(|source| ConfigError::Io { path: p.display().to_string(), source }),
        }
    }

    pub fn verify_config(&self) -> Result<VerifyConfig, ConfigError> {
        let cfg = VerifyConfig {
            temperature: self.parsed("tau")?,
            fixed_threshold: self.parsed("fixed_threshold")?,
            top_k_percent: self.parsed("k")?,
            property_weight: self.parsed("alpha")?,
            property_beta: self.parsed("beta")?,
            property_strict: self.parsed("property_strict")?,
            detection_floor: self.parsed("detection_floor")?,
        };
        cfg.validate().map_err(|e| ConfigError::Value { key: "verification".into(), detail: e.to_string() })?;
        Ok(cfg)
    }

    pub fn bank(&self) -> Result<CategoryBank, ConfigError> {
        match self.read("bank")? {
            None => Ok(CategoryBank::coco()),
            Some(text) => {
                let names = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
                CategoryBank::new(names).map_err(|e| ConfigError::Value { key: "bank".into(), detail: e.to_string() })
            }
        }
    }

    /// The built-in table extended by the `synonyms` file, if any.
    pub fn synonyms(&self) -> Result<SynonymTable, ConfigError> {
        let mut table = SynonymTable::default();
        let Some(text) = self.read("synonyms")? else { return Ok(table) };
        let err = |detail: String| ConfigError::Value { key: "synonyms".into(), detail };
        for (phrase, rule) in parse_pairs(&text, "synonyms")? {
            if phrase == "version" {
                table.version = rule.parse().map_err(|e| err(format!("version '{rule}': {e}")))?;
            } else {
                let rule: LocateRule = rule.parse().map_err(err)?;
                table.insert(&phrase, rule);
            }
        }
        Ok(table)
    }

    pub fn threshold_table(&self) -> Result<Option<ThresholdTable>, ConfigError> {
        let Some(p) = self.path("thresholds") else { return Ok(None) };
        let bytes = std::fs::read(&p).map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?;
        parse_threshold_table(&bytes)
            .map(Some)
            .map_err(|e| ConfigError::Value { key: "thresholds".into(), detail: e.to_string() })
    }

    pub fn interp_config(&self) -> Result<InterpConfig, ConfigError> {
        let result_selection = match self.get("result_selection").unwrap_or_default() {
            "detector_score" => ResultSelection::DetectorScore,
            "uv_score" => ResultSelection::UvScore,
            other => {
                return Err(ConfigError::Value {
                    key: "result_selection".into(),
                    detail: format!("'{other}' is not detector_score or uv_score"),
                })
            }
        };
        Ok(InterpConfig {
            near_eta: self.parsed("eta")?,
            inside_gamma: self.parsed("gamma")?,
            result_selection,
            early_exit: self.parsed("early_exit")?,
            forced_prediction: self.parsed("forced_prediction")?,
            synonyms: self.synonyms()?,
        })
    }

    pub fn exec_context(&self) -> Result<ExecContext, ConfigError> {
        Ok(ExecContext {
            verify: self.verify_config()?,
            interp: self.interp_config()?,
            bank: self.bank()?,
            thresholds: self.threshold_table()?,
        })
    }

    pub fn gen_options(&self) -> Result<GenOptions, ConfigError> {
        let max_iters: u32 = self.parsed("max_iters")?;
        if max_iters == 0 {
            return Err(ConfigError::Value { key: "max_iters".into(), detail: "must be at least 1".into() });
        }
        Ok(GenOptions { max_iters, transport_retries: self.parsed("transport_retries")? })
    }

    pub fn timeout(&self) -> Result<Duration, ConfigError> {
        let s: f64 = self.parsed("timeout_s")?;
        Duration::try_from_secs_f64(s).map_err(|e| ConfigError::Value { key: "timeout_s".into(), detail: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flag_env_file_default() {
        let mut c = CliConfig::default();
        assert_eq!(c.get("tau"), Some("0.01"));
        c.apply_file_text("# comment\ntau = 0.02\neta=2\nbank = banks/small.txt\n", Path::new("/etc/vro/vro.conf")).unwrap();
        assert_eq!(c.get("bank"), Some("/etc/vro/banks/small.txt"));
        c.apply_env(|k| (k == "VRO_TAU").then(|| "0.03".to_string()));
        assert_eq!((c.get("tau"), c.get("eta")), (Some("0.03"), Some("2")));
        c.apply_overrides(["tau=0.04"]).unwrap();
        assert_eq!(c.get("tau"), Some("0.04"));
        assert_eq!(c.source("tau"), Some(Source::Flag));
        assert_eq!(c.source("eta"), Some(Source::File));
        assert_eq!(c.verify_config().unwrap().temperature, 0.04);
        assert_eq!(c.interp_config().unwrap().near_eta, 2.0);
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        let mut c = CliConfig::default();
        assert!(matches!(c.apply_overrides(["nope=1"]), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!(c.apply_file_text("tau 3", Path::new("x")), Err(ConfigError::Syntax { .. })));
        c.apply_overrides(["tau=-1"]).unwrap();
        assert!(c.verify_config().is_err());
        c.apply_overrides(["tau=abc"]).unwrap();
        assert!(c.verify_config().is_err());
    }

    #[test]
    fn defaults_build_a_context() {
        let c = CliConfig::default();
        let ctx = c.exec_context().unwrap();
        assert_eq!(ctx.bank.len(), 80);
        assert!(ctx.interp.early_exit);
        assert_eq!(c.gen_options().unwrap().max_iters, 5);
        assert_eq!(c.effective().get("auth_token"), None);
    }
}
