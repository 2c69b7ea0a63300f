use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::SgdMomentum => "sgd-momentum",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd-momentum" | "sgd" => Ok(OptimizerKind::SgdMomentum),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::invalid(format!(
                "unknown optimizer {other:?} (expected sgd-momentum or adam)"
            ))),
        }
    }
}

/// Hyperparameters for one training run. The seed fixes initialization and
/// batch order, so equal configs on equal data give bit-identical weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub widths: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Desk-scale MNIST setup: two hidden layers of 256 units, Adam at 1e-3.
    fn default() -> Self {
        TrainConfig {
            widths: vec![256, 256],
            epochs: 10,
            batch_size: 64,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Three hidden layers of 512 units, Adam at 1e-3.
    pub fn mnist_full() -> Self {
        TrainConfig {
            widths: vec![512, 512, 512],
            ..TrainConfig::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        for (name, v) in [
            ("momentum", self.momentum),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        Ok(())
    }

    /// Flat `key = value` text, one entry per line.
    pub fn to_text(&self) -> String {
        let widths: Vec<String> = self.widths.iter().map(usize::to_string).collect();
        format!(
            "widths = {}\nepochs = {}\nbatch_size = {}\noptimizer = {}\nlearning_rate = {}\n\
             momentum = {}\nbeta1 = {}\nbeta2 = {}\nweight_decay = {}\nseed = {}\n",
            widths.join(","),
            self.epochs,
            self.batch_size,
            self.optimizer,
            self.learning_rate,
            self.momentum,
            self.beta1,
            self.beta2,
            self.weight_decay,
            self.seed
        )
    }

    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// `#` comments are ignored; unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn fmt::Display| {
                Error::invalid(format!("line {}: bad value for {key}: {e}", n + 1))
            };
            match key {
                "widths" => {
                    cfg.widths = value
                        .split(',')
                        .map(|w| w.trim().parse::<usize>().map_err(|e| bad(&e)))
                        .collect::<Result<_>>()?
                }
                "epochs" => cfg.epochs = value.parse().map_err(|e| bad(&e))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|e| bad(&e))?,
                "optimizer" => cfg.optimizer = value.parse()?,
                "learning_rate" => cfg.learning_rate = value.parse().map_err(|e| bad(&e))?,
                "momentum" => cfg.momentum = value.parse().map_err(|e| bad(&e))?,
                "beta1" => cfg.beta1 = value.parse().map_err(|e| bad(&e))?,
                "beta2" => cfg.beta2 = value.parse().map_err(|e| bad(&e))?,
                "weight_decay" => cfg.weight_decay = value.parse().map_err(|e| bad(&e))?,
                "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
                other => {
                    return Err(Error::invalid(format!("line {}: unknown key {other:?}", n + 1)))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let cfg = TrainConfig {
            widths: vec![64, 32],
            optimizer: OptimizerKind::SgdMomentum,
            learning_rate: 0.05,
            seed: 42,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn partial_text_uses_defaults() {
        let cfg = TrainConfig::from_text("# tiny\nwidths = 8\n\nseed = 3 # trailing\n").unwrap();
        assert_eq!(cfg.widths, vec![8]);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.epochs, TrainConfig::default().epochs);
    }

    #[test]
    fn rejects_bad_text() {
        assert!(TrainConfig::from_text("nonsense").is_err());
        assert!(TrainConfig::from_text("colour = red").is_err());
        assert!(TrainConfig::from_text("epochs = -1").is_err());
        assert!(TrainConfig::from_text("epochs = 0").is_err());
        assert!(TrainConfig::from_text("optimizer = lbfgs").is_err());
        assert!(TrainConfig::from_text("momentum = 1.5").is_err());
    }
}
