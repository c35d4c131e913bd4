//! Experiment configuration: one TOML file with a section per module,
//! defaults for everything, and `section.key = value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{ExpertConfig, ExpertPolicy, Hyperparams};
use crate::classifier::ClassifierConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;
use crate::scoring::ScoreConstants;
use crate::slice::Slice;
use crate::traffic::{SliceProfile, TrafficModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Synthetic traces generated per slice for the trace library.
    pub traces_per_slice: usize,
    pub trace_s: f64,
    /// Trial chunk length; traces are cut into pieces of this many seconds.
    pub chunk_s: f64,
    pub mmtc: TrafficModel,
    pub urllc: TrafficModel,
    pub embb: TrafficModel,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            traces_per_slice: 4,
            trace_s: 600.0,
            chunk_s: 120.0,
            mmtc: SliceProfile::default_for(Slice::Mmtc).model,
            urllc: SliceProfile::default_for(Slice::Urllc).model,
            embb: SliceProfile::default_for(Slice::Embb).model,
        }
    }
}

impl TrafficConfig {
    pub fn profiles(&self) -> [SliceProfile; 3] {
        [
            SliceProfile {
                slice: Slice::Mmtc,
                model: self.mmtc.clone(),
            },
            SliceProfile {
                slice: Slice::Urllc,
                model: self.urllc.clone(),
            },
            SliceProfile {
                slice: Slice::Embb,
                model: self.embb.clone(),
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.traces_per_slice == 0 {
            return Err(Error::config("traffic.traces_per_slice", "must be >= 1"));
        }
        if !(self.chunk_s > 0.0) {
            return Err(Error::config("traffic.chunk_s", "must be > 0"));
        }
        if !(self.trace_s >= self.chunk_s) {
            return Err(Error::config("traffic.trace_s", "must be at least traffic.chunk_s"));
        }
        for p in self.profiles() {
            p.validate()
                .map_err(|e| Error::config(format!("traffic.{}", p.slice.name()), e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root of every random stream.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads for trial collection; 0 uses every core.
    pub jobs: usize,
    pub env: EnvConfig,
    pub traffic: TrafficConfig,
    pub score: ScoreConstants,
    pub agents: Hyperparams,
    pub expert: ExpertConfig,
    pub pipeline: PipelineConfig,
    pub classifier: ClassifierConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            out_dir: PathBuf::from("out"),
            jobs: 0,
            env: EnvConfig::default(),
            traffic: TrafficConfig::default(),
            score: ScoreConstants::default(),
            agents: Hyperparams::default(),
            expert: ExpertConfig::default(),
            pipeline: PipelineConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

/// Tables whose keys are free-form.
const OPEN_TABLES: [&str; 1] = ["expert.targets"];

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed", "must fit in a signed 64-bit integer"));
        }
        self.env.validate()?;
        self.traffic.validate()?;
        self.score.validate()?;
        if (self.score.period_s - self.env.period_s()).abs() > 1e-12 {
            return Err(Error::config("score.period_s", "must equal env.period_ms / 1000"));
        }
        self.agents.validate()?;
        ExpertPolicy::new(self.expert.clone())?;
        self.pipeline.validate()?;
        self.classifier.validate()
    }

    /// Parses TOML text, applies `overrides` (dotted key, raw value) on top,
    /// and validates.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config("<file>", e.to_string()))?;
        let reference = toml::Table::try_from(Config::default()).map_err(|e| Error::config("<defaults>", e.to_string()))?;
        check_known(&file, &reference, "")?;
        let cfg: Config = file
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(error_key(&e), e.message().to_string()))?;
        let cfg = cfg.with_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::format(path, e))?;
        Self::from_toml_str(&text, overrides)
    }

    /// Applies dotted-key overrides; values are TOML literals, falling back
    /// to plain strings.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table = toml::Table::try_from(self).map_err(|e| Error::config("<config>", e.to_string()))?;
        for (key, raw) in overrides {
            set_dotted(&mut table, key, parse_value(raw))?;
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(error_key(&e), e.message().to_string()))
    }

    /// The fully resolved configuration as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config("<config>", e.to_string()))
    }

    /// Writes `config.resolved.toml` into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("config.resolved.toml");
        std::fs::write(&path, self.to_toml()?)?;
        Ok(path)
    }
}

fn error_key(e: &toml::de::Error) -> String {
    let msg = e.message();
    // serde reports unknown and missing fields with the name in backticks.
    msg.split('`').nth(1).map_or_else(|| "<file>".to_string(), str::to_string)
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn check_known(file: &toml::Table, reference: &toml::Table, prefix: &str) -> Result<()> {
    for (k, v) in file {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let Some(r) = reference.get(k) else {
            return Err(Error::config(path, "unknown key"));
        };
        if let (toml::Value::Table(ft), toml::Value::Table(rt)) = (v, r) {
            if OPEN_TABLES.contains(&path.as_str()) || ft.get("model").is_some_and(|m| Some(m) != rt.get("model")) {
                // free-form keys, or a different traffic model with its own fields
                continue;
            }
            check_known(ft, rt, &path)?;
        }
    }
    Ok(())
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for (i, p) in parents.iter().enumerate() {
        let here = parts[..=i].join(".");
        cur = match cur.get_mut(*p) {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(Error::config(key, format!("`{here}` is not a section"))),
            None => return Err(Error::config(key, "unknown key")),
        };
    }
    let parent = parents.join(".");
    let value = match cur.get(*last) {
        None if OPEN_TABLES.contains(&parent.as_str()) => value,
        None if *last == "model" || cur.contains_key("model") => value,
        None => return Err(Error::config(key, "unknown key")),
        Some(toml::Value::Float(_)) => match value {
            toml::Value::Integer(i) => toml::Value::Float(i as f64),
            v => v,
        },
        Some(_) => value,
    };
    cur.insert(last.to_string(), value);
    Ok(())
}
