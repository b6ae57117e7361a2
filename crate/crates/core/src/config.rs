//! Training configuration.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::GanLossMode;
use crate::networks::{DiscriminatorSpec, GeneratorSpec};

pub const LOCAL_ALPHA: f64 = 5e-4;
pub const GLOBAL_ALPHA: f64 = 1e-6;
pub const DEFAULT_LEARNING_RATE: f64 = 2e-4;

/// Whether an attribute edit is confined to a face region or spans the image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeScope {
    Local,
    Global,
}

impl FromStr for AttributeScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(AttributeScope::Local),
            "global" => Ok(AttributeScope::Global),
            other => Err(Error::invalid(format!(
                "unknown attribute scope {other:?} (expected \"local\" or \"global\")"
            ))),
        }
    }
}

/// Which part of the model is switched off for an ablation run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    #[default]
    Full,
    /// The generator emits the whole image instead of a residual.
    NoResidual,
    /// Generator outputs are never fed through the other generator.
    NoDual,
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(AblationMode::Full),
            "no-residual" => Ok(AblationMode::NoResidual),
            "no-dual" => Ok(AblationMode::NoDual),
            other => Err(Error::invalid(format!("unknown ablation mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for AblationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AblationMode::Full => "full",
            AblationMode::NoResidual => "no-residual",
            AblationMode::NoDual => "no-dual",
        })
    }
}

/// Whether the dual term's gradient reaches the first-pass generator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualGradient {
    #[default]
    Through,
    /// First-pass outputs are constants for the second pass.
    Stop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub attribute_name: String,
    pub image_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub gan_loss_mode: GanLossMode,
    pub seed: u64,
    pub checkpoint_every: u64,
    /// Divides every channel width; 1 is the full architecture.
    #[serde(default = "one")]
    pub width_divisor: usize,
    #[serde(default)]
    pub dual_gradient: DualGradient,
    /// Weight of an optional `|x_hat - x|` cycle term; 0 disables it.
    #[serde(default)]
    pub cycle_l1_weight: f64,
    #[serde(default = "yes")]
    pub sample_with_replacement: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// Defaults for an attribute: alpha by scope, `beta = 0.1 * alpha`, learning rate 2e-4.
pub fn default_config(attribute_name: &str, scope: &str) -> Result<TrainConfig> {
    let scope: AttributeScope = scope.parse()?;
    Ok(TrainConfig::new(attribute_name, scope))
}

impl TrainConfig {
    pub fn new(attribute_name: &str, scope: AttributeScope) -> Self {
        let alpha = match scope {
            AttributeScope::Local => LOCAL_ALPHA,
            AttributeScope::Global => GLOBAL_ALPHA,
        };
        TrainConfig {
            attribute_name: attribute_name.to_string(),
            image_size: 128,
            alpha,
            beta: 0.1 * alpha,
            learning_rate: DEFAULT_LEARNING_RATE,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            batch_size: 64,
            iterations: 20_000,
            gan_loss_mode: GanLossMode::TargetClass,
            seed: 0,
            checkpoint_every: 1_000,
            width_divisor: 1,
            dual_gradient: DualGradient::Through,
            cycle_l1_weight: 0.0,
            sample_with_replacement: true,
        }
    }

    /// Desk-scale variant: 64x64 images, batch 16.
    pub fn desk(attribute_name: &str, scope: AttributeScope) -> Self {
        TrainConfig {
            image_size: 64,
            batch_size: 16,
            ..TrainConfig::new(attribute_name, scope)
        }
    }

    /// Sets alpha and keeps `beta = 0.1 * alpha`.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self.beta = 0.1 * alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail(format!("beta must be non-negative, got {}", self.beta));
        }
        if self.image_size == 0 || self.image_size % 32 != 0 {
            return fail(format!("image_size {} is not a positive multiple of 32", self.image_size));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.width_divisor == 0 {
            return fail("width_divisor must be positive".into());
        }
        if self.checkpoint_every == 0 {
            return fail("checkpoint_every must be positive".into());
        }
        if !(self.cycle_l1_weight >= 0.0 && self.cycle_l1_weight.is_finite()) {
            return fail(format!("cycle_l1_weight must be non-negative, got {}", self.cycle_l1_weight));
        }
        Ok(())
    }

    pub fn generator_spec(&self) -> Result<GeneratorSpec> {
        GeneratorSpec::scaled(self.width_divisor)
    }

    pub fn discriminator_spec(&self) -> Result<DiscriminatorSpec> {
        DiscriminatorSpec::scaled(self.image_size, self.width_divisor)
    }

    /// Overlays the fields present in a JSON document onto `self`.
    pub fn overlay_json(&self, doc: &serde_json::Value) -> Result<TrainConfig> {
        let mut base = serde_json::to_value(self)?;
        let (Some(dst), Some(src)) = (base.as_object_mut(), doc.as_object()) else {
            return Err(Error::invalid("config document must be a JSON object"));
        };
        for (k, v) in src {
            dst.insert(k.clone(), v.clone());
        }
        let cfg: TrainConfig = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: &TrainConfig) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path)?;
        base.overlay_json(&serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_defaults() {
        let c = default_config("glasses", "local").unwrap();
        assert_eq!(c.alpha, 5e-4);
        assert_eq!(c.beta, 5e-5);
        assert_eq!(c.learning_rate, 2e-4);
        assert_eq!((c.adam_beta1, c.adam_beta2), (0.5, 0.999));
        assert_eq!(c.beta, 0.1 * c.alpha);
        c.validate().unwrap();
    }

    #[test]
    fn global_defaults() {
        let c = default_config("young", "global").unwrap();
        assert_eq!(c.alpha, 1e-6);
        assert_eq!(c.beta, 1e-7);
        assert_eq!(c.beta, 0.1 * c.alpha);
    }

    #[test]
    fn unknown_scope_rejected() {
        let err = default_config("glasses", "regional").unwrap_err();
        assert!(err.to_string().contains("regional"));
    }

    #[test]
    fn json_overlay_and_validation() {
        let base = TrainConfig::desk("glasses", AttributeScope::Local);
        let doc = serde_json::json!({"alpha": 5e-6, "iterations": 10, "gan_loss_mode": "paper-literal"});
        let c = base.overlay_json(&doc).unwrap();
        assert_eq!(c.alpha, 5e-6);
        assert_eq!(c.iterations, 10);
        assert_eq!(c.gan_loss_mode, GanLossMode::PaperLiteral);
        assert_eq!(c.image_size, 64);
        assert!(base.overlay_json(&serde_json::json!({"image_size": 48})).is_err());
        assert!(base.overlay_json(&serde_json::json!({"alpha": 0.0})).is_err());
        assert!(base.overlay_json(&serde_json::json!({"alhpa": 1.0})).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = TrainConfig::desk("mouth", AttributeScope::Local);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&text).unwrap(), c);
    }
}
