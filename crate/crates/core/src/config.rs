//! Flat `key = value` run configuration with `#` comments.
//!
//! Resolution order is defaults, then a config file, then command-line
//! overrides; [`RunConfig::to_text`] writes the effective result in a form
//! that parses back to an identical value.

use std::fmt::Write as _;

use thiserror::Error;

use crate::analysis::{default_crisis_windows, CrisisWindow, RegimeThresholds};
use crate::attention::{FeatureMap, DEFAULT_EPS, DEFAULT_HIDDEN, DEFAULT_LEAK};
use crate::clifford::format_f64;
use crate::model::{HeadKind, ModelConfig, DEFAULT_LOOKBACK, DEFAULT_MLP_HIDDEN};
use crate::panel::{GrowthKind, PanelConfig, Quarter};
use crate::train::{LossConfig, OptimizerConfig, DEFAULT_GRADIENT_GATE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} set twice")]
    Duplicate { line: usize, key: String },
    #[error("{key}: invalid value {value:?}: {message}")]
    Value { key: String, value: String, message: String },
    #[error("seed is required; pass --seed or set seed in the config file")]
    MissingSeed,
}

/// Which quarter single-quarter commands report on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Last,
    Quarter(Quarter),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub steps: usize,
    pub learning_rate: f64,
    pub lambda_qk: f64,
    pub lambda_v: f64,
    pub gradient_clip: f64,
    pub gradient_gate: Option<f64>,
    pub head: HeadKind,
    pub lookback: usize,
    pub d_h: usize,
    pub d_hidden: usize,
    pub leak: f64,
    pub eps: f64,
    pub feature_map: FeatureMap,
    pub window: usize,
    pub growth: GrowthKind,
    pub regime_low: f64,
    pub regime_high: f64,
    pub crisis_windows: Vec<CrisisWindow>,
    pub target: Target,
}

impl Default for RunConfig {
    fn default() -> Self {
        let o = OptimizerConfig::default();
        let l = LossConfig::default();
        let r = RegimeThresholds::default();
        RunConfig {
            seed: None,
            steps: o.steps,
            learning_rate: o.learning_rate,
            lambda_qk: l.lambda_qk,
            lambda_v: l.lambda_v,
            gradient_clip: o.gradient_clip,
            gradient_gate: Some(DEFAULT_GRADIENT_GATE),
            head: HeadKind::Linear,
            lookback: DEFAULT_LOOKBACK,
            d_h: DEFAULT_HIDDEN,
            d_hidden: DEFAULT_MLP_HIDDEN,
            leak: DEFAULT_LEAK,
            eps: DEFAULT_EPS,
            feature_map: FeatureMap::ShiftedLeakyRelu,
            window: PanelConfig::default().window,
            growth: PanelConfig::default().growth,
            regime_low: r.low,
            regime_high: r.high,
            crisis_windows: default_crisis_windows().iter().map(|(_, w)| *w).collect(),
            target: Target::Last,
        }
    }
}

pub const KEYS: [&str; 20] = [
    "seed",
    "steps",
    "learning_rate",
    "lambda_qk",
    "lambda_v",
    "gradient_clip",
    "gradient_gate",
    "head",
    "lookback",
    "d_h",
    "d_hidden",
    "leak",
    "eps",
    "feature_map",
    "window",
    "growth",
    "regime_low",
    "regime_high",
    "crisis_windows",
    "target",
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value { key: key.into(), value: value.into(), message: e.to_string() })
}

fn invalid(key: &str, value: &str, message: &str) -> ConfigError {
    ConfigError::Value { key: key.into(), value: value.into(), message: message.into() }
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse_value(key, value)?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(key, value, "must be positive and finite"));
    }
    Ok(v)
}

fn non_negative(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse_value(key, value)?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(invalid(key, value, "must be non-negative and finite"));
    }
    Ok(v)
}

fn count(key: &str, value: &str) -> Result<usize, ConfigError> {
    let v: usize = parse_value(key, value)?;
    if v == 0 {
        return Err(invalid(key, value, "must be at least 1"));
    }
    Ok(v)
}

impl RunConfig {
    /// Set one key from its textual value. Returns `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        let value = value.trim();
        match key {
            "seed" => self.seed = Some(parse_value(key, value)?),
            "steps" => self.steps = count(key, value)?,
            "learning_rate" => self.learning_rate = positive(key, value)?,
            "lambda_qk" => self.lambda_qk = non_negative(key, value)?,
            "lambda_v" => self.lambda_v = non_negative(key, value)?,
            "gradient_clip" => self.gradient_clip = positive(key, value)?,
            "gradient_gate" => {
                self.gradient_gate = if value == "off" { None } else { Some(positive(key, value)?) };
            }
            "head" => self.head = parse_value(key, value)?,
            "lookback" => self.lookback = count(key, value)?,
            "d_h" => self.d_h = count(key, value)?,
            "d_hidden" => self.d_hidden = count(key, value)?,
            "leak" => {
                let v = non_negative(key, value)?;
                if v >= 1.0 {
                    return Err(invalid(key, value, "must be below 1"));
                }
                self.leak = v;
            }
            "eps" => self.eps = positive(key, value)?,
            "feature_map" => self.feature_map = parse_value(key, value)?,
            "window" => {
                let v = count(key, value)?;
                if v < 2 {
                    return Err(invalid(key, value, "must be at least 2"));
                }
                self.window = v;
            }
            "growth" => self.growth = parse_value(key, value)?,
            "regime_low" => self.regime_low = positive(key, value)?,
            "regime_high" => self.regime_high = positive(key, value)?,
            "crisis_windows" => {
                self.crisis_windows = value
                    .split(',')
                    .map(|w| parse_value::<CrisisWindow>(key, w.trim()))
                    .collect::<Result<_, _>>()?;
                if self.crisis_windows.is_empty() {
                    return Err(invalid(key, value, "need at least one window"));
                }
            }
            "target" => {
                self.target = if value == "last" { Target::Last } else { Target::Quarter(parse_value(key, value)?) };
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Apply a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let k = k.trim();
            if seen.iter().any(|s| s == k) {
                return Err(ConfigError::Duplicate { line: i + 1, key: k.into() });
            }
            if !self.set(k, v)? {
                return Err(ConfigError::UnknownKey { line: i + 1, key: k.into() });
            }
            seen.push(k.into());
        }
        self.regimes()?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed?.to_string(),
            "steps" => self.steps.to_string(),
            "learning_rate" => format_f64(self.learning_rate),
            "lambda_qk" => format_f64(self.lambda_qk),
            "lambda_v" => format_f64(self.lambda_v),
            "gradient_clip" => format_f64(self.gradient_clip),
            "gradient_gate" => self.gradient_gate.map_or_else(|| "off".into(), format_f64),
            "head" => self.head.to_string(),
            "lookback" => self.lookback.to_string(),
            "d_h" => self.d_h.to_string(),
            "d_hidden" => self.d_hidden.to_string(),
            "leak" => format_f64(self.leak),
            "eps" => format_f64(self.eps),
            "feature_map" => self.feature_map.to_string(),
            "window" => self.window.to_string(),
            "growth" => self.growth.to_string(),
            "regime_low" => format_f64(self.regime_low),
            "regime_high" => format_f64(self.regime_high),
            "crisis_windows" => self.crisis_windows.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
            "target" => match self.target {
                Target::Last => "last".into(),
                Target::Quarter(q) => q.to_string(),
            },
            _ => return None,
        })
    }

    /// Effective configuration, one key per line in a fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# effective configuration\n");
        for k in KEYS {
            if let Some(v) = self.get(k) {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    pub fn require_seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or(ConfigError::MissingSeed)
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            d_h: self.d_h,
            d_hidden: self.d_hidden,
            head: self.head,
            lookback: self.lookback,
            leak: self.leak,
            eps: self.eps,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig { lambda_qk: self.lambda_qk, lambda_v: self.lambda_v }
    }

    pub fn optimizer(&self) -> Result<OptimizerConfig, ConfigError> {
        Ok(OptimizerConfig {
            learning_rate: self.learning_rate,
            steps: self.steps,
            seed: self.require_seed()?,
            gradient_clip: self.gradient_clip,
            gradient_gate: self.gradient_gate,
        })
    }

    pub fn panel(&self) -> PanelConfig {
        PanelConfig { window: self.window, growth: self.growth }
    }

    pub fn regimes(&self) -> Result<RegimeThresholds, ConfigError> {
        RegimeThresholds::new(self.regime_low, self.regime_high).map_err(|e| {
            invalid("regime_low/regime_high", &format!("{}/{}", self.regime_low, self.regime_high), &e.to_string())
        })
    }
}
