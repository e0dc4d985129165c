//! Declarative experiment configuration. One JSON document holds the
//! dataset spec, the model, a list of training runs, the attack grids, the
//! seeds, and the output directory. Unset fields default to λ = −1,
//! κ = 1.0, 5 ascent steps in training, 15 in evaluation, and 15 PGM
//! iterations with step length ε/log T.

use crate::dataset::DatasetSpec;
use crate::error::{HarnessError, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use ssdrl_core::models::ModelSpec;
use ssdrl_core::softmin::LambdaParam;
use ssdrl_core::trainer::{Mode, TrainConfig};

/// Serialize/deserialize f64 fields that may legitimately be +∞, written as
/// the JSON string "inf".
pub mod inf_f64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                other => other
                    .parse::<f64>()
                    .map_err(|_| serde::de::Error::custom(format!("bad number: {other:?}"))),
            },
        }
    }
}

/// Training modes as spelled in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Ssdrl,
    FSsdrl,
    Drl,
    Pl,
    Em,
    HardMin,
    HardMax,
}

impl ModeName {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeName::Ssdrl => "ssdrl",
            ModeName::FSsdrl => "f-ssdrl",
            ModeName::Drl => "drl",
            ModeName::Pl => "pl",
            ModeName::Em => "em",
            ModeName::HardMin => "hard-min",
            ModeName::HardMax => "hard-max",
        }
    }
}

/// One training run in the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainEntry {
    pub mode: ModeName,
    #[serde(default = "default_gamma", with = "inf_f64")]
    pub gamma: f64,
    #[serde(default = "default_lambda")]
    pub lambda: LambdaParam,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_ascent_steps")]
    pub ascent_steps: usize,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default = "default_projection_radius", with = "inf_f64")]
    pub projection_radius: f64,
    #[serde(default)]
    pub epsilon_report: f64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_gamma() -> f64 {
    f64::INFINITY
}
fn default_lambda() -> LambdaParam {
    LambdaParam::new(-1.0).unwrap()
}
fn default_alpha() -> f64 {
    0.1
}
fn default_iters() -> usize {
    200
}
fn default_batch() -> usize {
    32
}
fn default_ascent_steps() -> usize {
    5
}
fn default_kappa() -> f64 {
    1.0
}
fn default_projection_radius() -> f64 {
    f64::INFINITY
}
fn default_init_scale() -> f64 {
    0.1
}

impl TrainEntry {
    /// Resolve the entry into a validated core training config. Special-case
    /// modes pin their own (γ, λ); explicit conflicting values are rejected
    /// by the core validation.
    pub fn to_train_config(&self, n: usize, seed: u64) -> Result<TrainConfig> {
        let mode = match self.mode {
            ModeName::Ssdrl => Mode::Ssdrl,
            ModeName::FSsdrl => Mode::FSsdrl {
                top_k: self
                    .top_k
                    .ok_or_else(|| HarnessError::config("f-ssdrl needs top_k"))?,
            },
            ModeName::Drl => Mode::Drl,
            ModeName::Pl => Mode::Pl,
            ModeName::Em => Mode::Em,
            ModeName::HardMin => Mode::HardMin,
            ModeName::HardMax => Mode::HardMax,
        };
        let (gamma, lambda) = match mode {
            Mode::Pl => (f64::INFINITY, LambdaParam::NEG_INF),
            Mode::Em => (f64::INFINITY, LambdaParam::new(-1.0).unwrap()),
            Mode::HardMin => (self.gamma, LambdaParam::NEG_INF),
            Mode::HardMax => (self.gamma, LambdaParam::POS_INF),
            _ => (self.gamma, self.lambda),
        };
        let cfg = TrainConfig {
            mode,
            gamma,
            lambda,
            alpha: self.alpha,
            iters: self.iters,
            batch: self.batch.min(n).max(1),
            delta: self.delta,
            ascent_steps: self.ascent_steps,
            kappa: self.kappa,
            projection_radius: self.projection_radius,
            epsilon_report: self.epsilon_report,
            seed,
            random_hard_ties: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Evaluation attack grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEvalConfig {
    #[serde(default)]
    pub eval_gammas: Vec<f64>,
    #[serde(default)]
    pub pgm_epsilons: Vec<f64>,
    #[serde(default = "default_eval_ascent_steps")]
    pub eval_ascent_steps: usize,
    #[serde(default = "default_pgm_steps")]
    pub pgm_steps: usize,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_eval_ascent_steps() -> usize {
    15
}
fn default_pgm_steps() -> usize {
    15
}

impl Default for AttackEvalConfig {
    fn default() -> Self {
        AttackEvalConfig {
            eval_gammas: Vec::new(),
            pgm_epsilons: Vec::new(),
            eval_ascent_steps: default_eval_ascent_steps(),
            pgm_steps: default_pgm_steps(),
            kappa: default_kappa(),
        }
    }
}

/// The whole experiment: dataset, model, training grid, attacks, seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub train: Vec<TrainEntry>,
    #[serde(default)]
    pub attacks: AttackEvalConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default = "default_emit_svg")]
    pub emit_svg: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_output_dir() -> String {
    "out".into()
}
fn default_emit_svg() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| HarnessError::config(format!("cannot parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        if self.train.is_empty() {
            return Err(HarnessError::config("train list must be non-empty"));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::config("seeds must be non-empty"));
        }
        if self.model.num_classes != self.dataset.num_classes() {
            return Err(HarnessError::config(format!(
                "model has {} classes, dataset {}",
                self.model.num_classes,
                self.dataset.num_classes()
            )));
        }
        if self.model.input_dim() != self.dataset.feature_dim() {
            return Err(HarnessError::config(format!(
                "model input dim {} vs dataset dim {}",
                self.model.input_dim(),
                self.dataset.feature_dim()
            )));
        }
        self.model.clone().validated()?;
        Ok(())
    }
}
