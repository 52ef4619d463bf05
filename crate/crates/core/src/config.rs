//! Training configuration and the flat `key = value` config file.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CsrlError, Result};
use crate::graph::RelationNorm;
use crate::model::{Ablations, ModelConfig};
use crate::objectives::{LossWeights, Reduction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Switch {
    FullAttention,
    NoSagn,
    NoPredicateRep,
    NoSpeakerDep,
    NoPredicateDep,
    SrlOnly,
    NoIntraObj,
    NoUtObj,
}

impl Switch {
    pub const ALL: [Switch; 8] = [
        Switch::FullAttention,
        Switch::NoSagn,
        Switch::NoPredicateRep,
        Switch::NoSpeakerDep,
        Switch::NoPredicateDep,
        Switch::SrlOnly,
        Switch::NoIntraObj,
        Switch::NoUtObj,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Switch::FullAttention => "full_attention",
            Switch::NoSagn => "no_sagn",
            Switch::NoPredicateRep => "no_predicate_rep",
            Switch::NoSpeakerDep => "no_speaker_dep",
            Switch::NoPredicateDep => "no_predicate_dep",
            Switch::SrlOnly => "srl_only",
            Switch::NoIntraObj => "no_intra_obj",
            Switch::NoUtObj => "no_ut_obj",
        }
    }
}

impl FromStr for Switch {
    type Err = CsrlError;

    fn from_str(s: &str) -> Result<Self> {
        Switch::ALL
            .into_iter()
            .find(|sw| sw.name() == s)
            .ok_or_else(|| CsrlError::UnknownSwitch(s.to_string()))
    }
}

impl fmt::Display for Switch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// Upper bound on epochs.
    pub epochs: usize,
    pub seed: u64,
    pub loss_weights: LossWeights,
    /// Early-stopping patience on dev F1_all, in epochs.
    pub patience: usize,
    pub clip_norm: f64,
    pub reduction: Reduction,
    /// Stop as soon as dev F1_all reaches this value.
    pub target_f1: Option<f64>,
    pub switches: Vec<Switch>,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            lr: 1e-3,
            epochs: 200,
            seed: 0,
            loss_weights: LossWeights::default(),
            patience: 10,
            clip_norm: 5.0,
            reduction: Reduction::Sum,
            target_f1: None,
            switches: Vec::new(),
            model: ModelConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CsrlError::Config(format!("invalid value {value:?} for {key}")))
}

pub fn parse_loss_weights(value: &str) -> Result<LossWeights> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| parse("loss_weights", p.trim()))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [a, b, c] => LossWeights::new(*a, *b, *c),
        _ => Err(CsrlError::Config(format!(
            "loss_weights needs three comma-separated values, got {value:?}"
        ))),
    }
}

impl TrainConfig {
    pub fn has(&self, switch: Switch) -> bool {
        self.switches.contains(&switch)
    }

    pub fn with_switch(mut self, switch: Switch) -> Self {
        if !self.has(switch) {
            self.switches.push(switch);
        }
        self
    }

    pub fn ablations(&self) -> Ablations {
        Ablations {
            full_attention: self.has(Switch::FullAttention),
            no_sagn: self.has(Switch::NoSagn),
            no_predicate_rep: self.has(Switch::NoPredicateRep),
            no_speaker_dep: self.has(Switch::NoSpeakerDep),
            no_predicate_dep: self.has(Switch::NoPredicateDep),
        }
    }

    /// Loss weights after the objective switches are applied.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.loss_weights;
        if self.has(Switch::SrlOnly) {
            w.intra = 0.0;
            w.ut = 0.0;
        }
        if self.has(Switch::NoIntraObj) {
            w.intra = 0.0;
        }
        if self.has(Switch::NoUtObj) {
            w.ut = 0.0;
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CsrlError::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(CsrlError::Config(format!(
                "invalid learning rate {}",
                self.lr
            )));
        }
        LossWeights::new(
            self.loss_weights.srl,
            self.loss_weights.intra,
            self.loss_weights.ut,
        )?;
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "loss_weights" => self.loss_weights = parse_loss_weights(value)?,
            "patience" => self.patience = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "reduction" => {
                self.reduction = match value {
                    "sum" => Reduction::Sum,
                    "mean" => Reduction::Mean,
                    _ => return Err(CsrlError::Config(format!("invalid reduction {value:?}"))),
                }
            }
            "target_f1" => self.target_f1 = Some(parse(key, value)?),
            "switches" => {
                self.switches = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "d_enc" => m.d_enc = parse(key, value)?,
            "heads" => m.heads = parse(key, value)?,
            "d_ff" => m.d_ff = parse(key, value)?,
            "blocks" => m.blocks = parse(key, value)?,
            "max_len" => m.max_len = parse(key, value)?,
            "d_graph" => m.d_graph = parse(key, value)?,
            "window" => m.window = parse(key, value)?,
            "num_speakers" => m.num_speakers = parse(key, value)?,
            "relation_norm" => {
                m.relation_norm = match value {
                    "count" => RelationNorm::Count,
                    "learnable" => RelationNorm::Learnable,
                    _ => {
                        return Err(CsrlError::Config(format!(
                            "invalid relation_norm {value:?}"
                        )))
                    }
                }
            }
            _ => return Err(CsrlError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a flat config file: `key = value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CsrlError::Config(format!("line {}: expected key = value", i + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&fs::read_to_string(path)?)
    }
}
