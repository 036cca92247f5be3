//! Mean-rule fusion of the matcher score with the fitting-error similarity,
//! followed by the threshold reward/penalty.

use serde::{Deserialize, Serialize};

use crate::alignment::{error_to_similarity, fitting_error_prepared, AlignmentConfig, PreparedTenprint};
use crate::error::{Error, Result};
use crate::minutia::MinutiaSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    /// Multiplier when Ê exceeds the threshold.
    pub alpha: f64,
    /// Multiplier otherwise.
    pub beta: f64,
    pub e_t: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 1.0,
            e_t: 0.92,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta > 0.0 && self.alpha >= self.beta) {
            return Err(Error::Validation(format!(
                "need alpha >= beta > 0, got alpha = {}, beta = {}",
                self.alpha, self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.e_t) {
            return Err(Error::Validation(format!("e_t = {} outside [0, 1]", self.e_t)));
        }
        Ok(())
    }

    pub fn with_threshold(self, e_t: f64) -> Self {
        Self { e_t, ..self }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} = {v} outside [0, 1]")))
    }
}

/// S′ = (S_m + Ê) / 2.
pub fn fuse_mean(s_m: f64, e_hat: f64) -> Result<f64> {
    check_unit("s_m", s_m)?;
    check_unit("e_hat", e_hat)?;
    Ok((s_m + e_hat) / 2.0)
}

/// S″: S′·α when Ê is strictly above the threshold, S′·β otherwise.
/// The result is not clamped.
pub fn threshold_modify(s_prime: f64, e_hat: f64, params: &FusionParams) -> f64 {
    if e_hat > params.e_t {
        s_prime * params.alpha
    } else {
        s_prime * params.beta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub latent_id: String,
    pub tenprint_id: String,
    pub s_m: f64,
    /// Ê, the fitting-error similarity.
    pub e_hat: f64,
    /// Raw minimum fitting error; absent when no anchor produced a fit.
    pub fitting_error: Option<f64>,
    pub s_prime: f64,
    pub s_double_prime: f64,
    pub is_genuine: bool,
}

impl ScoreRecord {
    /// Builds the record from an already computed Ê.
    pub fn from_parts(
        latent_id: impl Into<String>,
        tenprint_id: impl Into<String>,
        s_m: f64,
        fitting_error: Option<f64>,
        cfg: &AlignmentConfig,
        params: &FusionParams,
        is_genuine: bool,
    ) -> Result<Self> {
        let e_hat = error_to_similarity(fitting_error, cfg)?;
        let s_prime = fuse_mean(s_m, e_hat)?;
        Ok(Self {
            latent_id: latent_id.into(),
            tenprint_id: tenprint_id.into(),
            s_m,
            e_hat,
            fitting_error,
            s_prime,
            s_double_prime: threshold_modify(s_prime, e_hat, params),
            is_genuine,
        })
    }

    /// S″ under other parameters.
    pub fn rescored(&self, params: &FusionParams) -> f64 {
        threshold_modify(self.s_prime, self.e_hat, params)
    }
}

/// Full stage-two scoring of one comparison, `s_m` already normalized.
pub fn score_comparison(
    latent: &MinutiaSet,
    tenprint: &MinutiaSet,
    s_m: f64,
    cfg: &AlignmentConfig,
    params: &FusionParams,
    is_genuine: bool,
) -> Result<ScoreRecord> {
    score_comparison_prepared(
        latent,
        &PreparedTenprint::new(tenprint),
        s_m,
        cfg,
        params,
        is_genuine,
    )
}

pub fn score_comparison_prepared(
    latent: &MinutiaSet,
    tenprint: &PreparedTenprint<'_>,
    s_m: f64,
    cfg: &AlignmentConfig,
    params: &FusionParams,
    is_genuine: bool,
) -> Result<ScoreRecord> {
    check_unit("s_m", s_m)?;
    let e = fitting_error_prepared(latent, tenprint, cfg);
    ScoreRecord::from_parts(&latent.id, &tenprint.set.id, s_m, e, cfg, params, is_genuine)
}
