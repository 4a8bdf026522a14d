//! Training configuration: a flat key=value or flat-JSON file, plus
//! `--override key=value` pairs. Unknown keys are rejected, and keys that a
//! method does not consume are rejected when given explicitly.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::negatives::PerturbationKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sft,
    Dpo,
    Syncdpo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sft => "sft",
            Method::Dpo => "dpo",
            Method::Syncdpo => "syncdpo",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sft" => Some(Method::Sft),
            "dpo" => Some(Method::Dpo),
            "syncdpo" => Some(Method::Syncdpo),
            _ => None,
        }
    }

    pub fn is_preference(self) -> bool {
        matches!(self, Method::Dpo | Method::Syncdpo)
    }
}

/// Negative-sampling schedule variants for the syncdpo method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurriculumMode {
    Curriculum,
    Uniform,
    ScaleOnly,
    ReplaceOnly,
}

impl CurriculumMode {
    pub fn name(self) -> &'static str {
        match self {
            CurriculumMode::Curriculum => "curriculum",
            CurriculumMode::Uniform => "uniform",
            CurriculumMode::ScaleOnly => "scale_only",
            CurriculumMode::ReplaceOnly => "replace_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "curriculum" => Some(CurriculumMode::Curriculum),
            "uniform" => Some(CurriculumMode::Uniform),
            "scale_only" => Some(CurriculumMode::ScaleOnly),
            "replace_only" => Some(CurriculumMode::ReplaceOnly),
            _ => None,
        }
    }
}

/// Full training configuration with desk-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub ema_decay: f64,
    /// Preference strength; preference methods only.
    pub beta: f64,
    pub curriculum_mode: CurriculumMode,
    /// Schedule rate in percent per step; defaults to 0.01.
    pub curriculum_k_percent: Option<f64>,
    /// Fixed-kind ablation override; bypasses the curriculum entirely.
    pub negative_kind: Option<PerturbationKind>,
    pub seed: u64,
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    /// Frozen reference checkpoint; required by preference methods.
    pub ref_checkpoint: Option<PathBuf>,
    /// Starting parameters; defaults to the reference for preference methods
    /// and to fresh initialization for sft.
    pub init_checkpoint: Option<PathBuf>,
    pub val_fraction: f64,
    pub eval_every: u64,
    pub eval_n: usize,
    pub checkpoint_every: u64,
    pub ode_steps: usize,
    pub n_candidates: usize,
}

impl TrainConfig {
    /// Desk-scale defaults for a method; dataset and out_dir still required.
    /// Preference methods run at a lower rate: they fine-tune an already
    /// trained model and destroy it at the reconstruction-training rate.
    pub fn defaults(method: Method) -> Self {
        TrainConfig {
            method,
            steps: 3000,
            batch_size: 32,
            learning_rate: if method.is_preference() { 3e-4 } else { 1e-3 },
            warmup_steps: 100,
            weight_decay: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.95,
            adam_epsilon: 1e-8,
            ema_decay: 0.9,
            beta: 0.2,
            curriculum_mode: CurriculumMode::Curriculum,
            curriculum_k_percent: None,
            negative_kind: None,
            seed: 0,
            dataset: PathBuf::new(),
            out_dir: PathBuf::new(),
            ref_checkpoint: None,
            init_checkpoint: None,
            val_fraction: 0.1,
            eval_every: 250,
            eval_n: 64,
            checkpoint_every: 1000,
            ode_steps: 30,
            n_candidates: 3,
        }
    }

    /// Parse a config file body (key=value lines or a flat JSON object) and
    /// apply `overrides` on top.
    pub fn parse(content: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut keys = parse_to_map(content)?;
        for (k, v) in overrides {
            keys.insert(k.clone(), v.clone());
        }
        Self::from_map(keys)
    }

    fn from_map(keys: BTreeMap<String, String>) -> Result<Self> {
        let method_str = keys
            .get("method")
            .ok_or_else(|| Error::Config("missing required key: method".into()))?;
        let method = Method::parse(method_str)
            .ok_or_else(|| Error::Config(format!("unknown method '{method_str}'")))?;
        let mut cfg = Self::defaults(method);

        for (key, value) in &keys {
            match key.as_str() {
                "method" => {}
                "steps" => cfg.steps = parse_num(key, value)?,
                "batch_size" => cfg.batch_size = parse_num(key, value)?,
                "learning_rate" => cfg.learning_rate = parse_num(key, value)?,
                "warmup_steps" => cfg.warmup_steps = parse_num(key, value)?,
                "weight_decay" => cfg.weight_decay = parse_num(key, value)?,
                "adam_beta1" => cfg.adam_beta1 = parse_num(key, value)?,
                "adam_beta2" => cfg.adam_beta2 = parse_num(key, value)?,
                "adam_epsilon" => cfg.adam_epsilon = parse_num(key, value)?,
                "ema_decay" => cfg.ema_decay = parse_num(key, value)?,
                "beta" => cfg.beta = parse_num(key, value)?,
                "curriculum.mode" => {
                    cfg.curriculum_mode = CurriculumMode::parse(value).ok_or_else(|| {
                        Error::Config(format!("unknown curriculum.mode '{value}'"))
                    })?;
                }
                "curriculum.k_percent" => cfg.curriculum_k_percent = Some(parse_num(key, value)?),
                "negative_kind" => {
                    cfg.negative_kind = Some(PerturbationKind::parse(value).ok_or_else(|| {
                        Error::Config(format!("unknown negative_kind '{value}'"))
                    })?);
                }
                "seed" => cfg.seed = parse_num(key, value)?,
                "dataset" => cfg.dataset = PathBuf::from(value),
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "ref_checkpoint" => cfg.ref_checkpoint = Some(PathBuf::from(value)),
                "init_checkpoint" => cfg.init_checkpoint = Some(PathBuf::from(value)),
                "val_fraction" => cfg.val_fraction = parse_num(key, value)?,
                "eval_every" => cfg.eval_every = parse_num(key, value)?,
                "eval_n" => cfg.eval_n = parse_num(key, value)?,
                "checkpoint_every" => cfg.checkpoint_every = parse_num(key, value)?,
                "ode_steps" => cfg.ode_steps = parse_num(key, value)?,
                "n_candidates" => cfg.n_candidates = parse_num(key, value)?,
                other => return Err(Error::Config(format!("unknown config key '{other}'"))),
            }
        }
        cfg.validate(&keys)?;
        Ok(cfg)
    }

    /// Structural validation plus method-specific key checks. `explicit`
    /// lists the keys the user actually provided.
    pub fn validate(&self, explicit: &BTreeMap<String, String>) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.dataset.as_os_str().is_empty() {
            return fail("missing required key: dataset".into());
        }
        if self.out_dir.as_os_str().is_empty() {
            return fail("missing required key: out_dir".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive".into());
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return fail("ema_decay must be in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return fail("val_fraction must be in [0, 1)".into());
        }
        if self.eval_every == 0 || self.checkpoint_every == 0 {
            return fail("cadences must be >= 1".into());
        }
        if self.eval_n == 0 {
            return fail("eval_n must be >= 1".into());
        }
        if self.ode_steps == 0 {
            return fail("ode_steps must be >= 1".into());
        }
        if let Some(k) = self.curriculum_k_percent {
            if k < 0.0 {
                return fail("curriculum.k_percent must be nonnegative".into());
            }
        }

        match self.method {
            Method::Sft => {
                for key in [
                    "beta",
                    "curriculum.mode",
                    "curriculum.k_percent",
                    "negative_kind",
                    "ref_checkpoint",
                    "n_candidates",
                ] {
                    if explicit.contains_key(key) {
                        return fail(format!("key '{key}' is not used by method sft"));
                    }
                }
            }
            Method::Dpo => {
                if !(self.beta > 0.0) {
                    return fail("beta must be positive".into());
                }
                if self.n_candidates < 2 {
                    return fail("n_candidates must be >= 2".into());
                }
                if self.ref_checkpoint.is_none() {
                    return fail("method dpo requires ref_checkpoint".into());
                }
                for key in ["curriculum.mode", "curriculum.k_percent", "negative_kind"] {
                    if explicit.contains_key(key) {
                        return fail(format!("key '{key}' is not used by method dpo"));
                    }
                }
            }
            Method::Syncdpo => {
                if !(self.beta > 0.0) {
                    return fail("beta must be positive".into());
                }
                if self.ref_checkpoint.is_none() {
                    return fail("method syncdpo requires ref_checkpoint".into());
                }
                if self.negative_kind.is_some() && explicit.contains_key("curriculum.mode") {
                    return fail("negative_kind and curriculum.mode are mutually exclusive".into());
                }
                if explicit.contains_key("n_candidates") {
                    return fail("key 'n_candidates' is not used by method syncdpo".into());
                }
            }
        }
        Ok(())
    }

    /// Validate a programmatically built config.
    pub fn validate_built(&self) -> Result<()> {
        self.validate(&BTreeMap::new())
    }

    /// The curriculum rate as a fraction per step (default 0.01% = 1e-4).
    pub fn curriculum_rate(&self) -> f64 {
        match self.curriculum_k_percent {
            Some(p) => p / 100.0,
            None => 1e-4,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_to_map(content: &str) -> Result<BTreeMap<String, String>> {
    let trimmed = content.trim_start();
    if trimmed.starts_with('{') {
        let value: serde_json::Value = serde_json::from_str(trimmed)
            .map_err(|e| Error::Config(format!("invalid JSON config: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Config("JSON config must be an object".into()))?;
        let mut map = BTreeMap::new();
        for (k, v) in obj {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                other => {
                    return Err(Error::Config(format!(
                        "config key '{k}' has unsupported JSON value {other}"
                    )))
                }
            };
            map.insert(k.clone(), s);
        }
        Ok(map)
    } else {
        let mut map = BTreeMap::new();
        for (lineno, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(map)
    }
}

/// Parse one `--override key=value` argument.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    arg.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::Config(format!("override '{arg}' is not key=value")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "method=sft\ndataset=/tmp/d.syncds\nout_dir=/tmp/run\n";

    #[test]
    fn key_value_parsing_with_defaults() {
        let cfg = TrainConfig::parse(BASE, &[]).unwrap();
        assert_eq!(cfg.method, Method::Sft);
        assert_eq!(cfg.steps, 3000);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.ema_decay, 0.9);
    }

    #[test]
    fn json_parsing_equivalent() {
        let json = r#"{"method": "syncdpo", "dataset": "/tmp/d", "out_dir": "/tmp/r",
                       "ref_checkpoint": "/tmp/ref.ckpt", "beta": 0.3,
                       "curriculum.mode": "uniform", "steps": 100}"#;
        let cfg = TrainConfig::parse(json, &[]).unwrap();
        assert_eq!(cfg.method, Method::Syncdpo);
        assert_eq!(cfg.beta, 0.3);
        assert_eq!(cfg.curriculum_mode, CurriculumMode::Uniform);
        assert_eq!(cfg.steps, 100);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = TrainConfig::parse(&format!("{BASE}bogus_key=1\n"), &[]).unwrap_err();
        assert!(err.to_string().contains("bogus_key"));
    }

    #[test]
    fn overrides_apply_last() {
        let cfg = TrainConfig::parse(BASE, &[("steps".into(), "7".into())]).unwrap();
        assert_eq!(cfg.steps, 7);
    }

    #[test]
    fn method_specific_keys_enforced() {
        // beta is meaningless for sft.
        let err = TrainConfig::parse(&format!("{BASE}beta=0.2\n"), &[]).unwrap_err();
        assert!(err.to_string().contains("beta"));

        // dpo requires a reference checkpoint.
        let err =
            TrainConfig::parse("method=dpo\ndataset=/d\nout_dir=/r\n", &[]).unwrap_err();
        assert!(err.to_string().contains("ref_checkpoint"));

        // curriculum keys are syncdpo-only.
        let err = TrainConfig::parse(
            "method=dpo\ndataset=/d\nout_dir=/r\nref_checkpoint=/c\ncurriculum.mode=uniform\n",
            &[],
        )
        .unwrap_err();
        assert!(err.to_string().contains("curriculum.mode"));
    }

    #[test]
    fn curriculum_rate_default_and_explicit() {
        let cfg = TrainConfig::parse(BASE, &[]).unwrap();
        assert!((cfg.curriculum_rate() - 1e-4).abs() < 1e-18);

        let cfg = TrainConfig::parse(
            "method=syncdpo\ndataset=/d\nout_dir=/r\nref_checkpoint=/c\ncurriculum.k_percent=0.02\n",
            &[],
        )
        .unwrap();
        assert!((cfg.curriculum_rate() - 2e-4).abs() < 1e-18);
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let cfg = TrainConfig::parse(&format!("# header\n\n{BASE}# trailing\n"), &[]).unwrap();
        assert_eq!(cfg.method, Method::Sft);
    }

    #[test]
    fn bad_override_rejected() {
        assert!(parse_override("steps:7").is_err());
        assert_eq!(
            parse_override("steps=7").unwrap(),
            ("steps".into(), "7".into())
        );
    }
}
