//! Tunables from an optional TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use rarefit::alignment::AlignmentConfig;
use rarefit::dataio::SynthParams;
use rarefit::evaluation::EvaluationOptions;
use rarefit::fusion::FusionParams;
use rarefit::matcher::MatcherConfig;
use serde::Deserialize;

use crate::CliError;

/// Config file layout; every section and field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub alignment: AlignmentConfig,
    pub fusion: FusionParams,
    pub matcher: MatcherConfig,
    pub synth: SynthParams,
    pub evaluation: EvaluationOptions,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct AlignmentArgs {
    /// Mated-pair distance threshold in pixels.
    #[arg(long, value_name = "PX")]
    pub dist_threshold: Option<f64>,
    /// Fitting error (px²) mapped to zero similarity.
    #[arg(long, value_name = "PX2")]
    pub error_cap: Option<f64>,
    /// Rotation search step in degrees.
    #[arg(long, value_name = "DEG")]
    pub rot_step: Option<f64>,
    #[arg(long, value_name = "DEG", allow_negative_numbers = true)]
    pub rot_min: Option<f64>,
    #[arg(long, value_name = "DEG", allow_negative_numbers = true)]
    pub rot_max: Option<f64>,
    /// Fewest mated pairs that make a fit count.
    #[arg(long, value_name = "N")]
    pub min_correspondences: Option<usize>,
}

impl AlignmentArgs {
    pub fn apply(&self, mut cfg: AlignmentConfig) -> AlignmentConfig {
        if let Some(v) = self.dist_threshold {
            cfg.distance_threshold = v;
        }
        if let Some(v) = self.error_cap {
            cfg.error_cap = v;
        }
        if let Some(v) = self.rot_step {
            cfg.rotation_step_deg = v;
        }
        if let Some(v) = self.rot_min {
            cfg.rotation_min_deg = v;
        }
        if let Some(v) = self.rot_max {
            cfg.rotation_max_deg = v;
        }
        if let Some(v) = self.min_correspondences {
            cfg.min_correspondences = v;
        }
        cfg
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct FusionArgs {
    /// Fitting-error similarity threshold.
    #[arg(long, value_name = "E_T")]
    pub et: Option<f64>,
    /// Multiplier above the threshold.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Multiplier at or below the threshold.
    #[arg(long)]
    pub beta: Option<f64>,
}

impl FusionArgs {
    pub fn apply(&self, mut p: FusionParams) -> FusionParams {
        if let Some(v) = self.et {
            p.e_t = v;
        }
        if let Some(v) = self.alpha {
            p.alpha = v;
        }
        if let Some(v) = self.beta {
            p.beta = v;
        }
        p
    }
}

/// Baseline score source: `internal` or `external:<csv path>`.
#[derive(Debug, Clone, PartialEq)]
pub enum MatcherArg {
    Internal,
    External(PathBuf),
}

pub fn parse_matcher(s: &str) -> Result<MatcherArg, String> {
    if s == "internal" {
        return Ok(MatcherArg::Internal);
    }
    match s.strip_prefix("external:") {
        Some(p) if !p.is_empty() => Ok(MatcherArg::External(PathBuf::from(p))),
        _ => Err(format!("expected 'internal' or 'external:<csv path>', got '{s}'")),
    }
}
