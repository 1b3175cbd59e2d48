//! Decision thresholds at a nominal false-positive rate.
//!
//! The flagging rule everywhere is `score > tau`. Thresholds come either
//! from the attacked model's own scores (optimistic, needs ground truth the
//! attacker never has) or from the shadow models, where each shadow is
//! attacked in turn and the median of their thresholds is used.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::lira::{LiraEngine, Variant};
use crate::stats::median;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CalibrationSource {
    Target,
    Shadow,
}

impl CalibrationSource {
    pub fn name(self) -> &'static str {
        match self {
            CalibrationSource::Target => "target",
            CalibrationSource::Shadow => "shadow",
        }
    }
}

/// How a fractional non-member count is rounded. Only the conservative
/// rule is implemented: the threshold never exceeds the nominal rate on
/// its own calibration data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuantileRule {
    #[default]
    ConservativeCount,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub alpha: f64,
    pub source: CalibrationSource,
    pub quantile_rule: QuantileRule,
}

impl ThresholdPolicy {
    pub fn new(alpha: f64, source: CalibrationSource) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            alpha,
            source,
            quantile_rule: QuantileRule::ConservativeCount,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedThreshold {
    pub tau: f64,
    pub alpha: f64,
    pub source: CalibrationSource,
    /// Per-shadow thresholds, present for shadow calibration.
    pub per_shadow_taus: Option<Vec<f64>>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AuditError::InvalidParameter(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    Ok(())
}

/// Smallest non-member score `tau` with `#{non-member > tau} / n <= alpha`.
pub fn target_threshold(scores: &[f64], is_member: &[bool], alpha: f64) -> Result<CalibratedThreshold> {
    check_alpha(alpha)?;
    if scores.len() != is_member.len() {
        return Err(AuditError::DimensionMismatch {
            what: "scores vs labels",
            expected: is_member.len(),
            found: scores.len(),
        });
    }
    let mut negatives: Vec<f64> = scores
        .iter()
        .zip(is_member)
        .filter(|(_, &m)| !m)
        .map(|(&s, _)| s)
        .collect();
    if negatives.is_empty() {
        return Err(AuditError::EmptyClass("non-members"));
    }
    negatives.sort_by(|a, b| b.total_cmp(a));
    let n = negatives.len() as f64;

    // Walk distinct values from the top; `above` counts strictly larger ones.
    let mut tau = negatives[0];
    let mut i = 0;
    while i < negatives.len() {
        let value = negatives[i];
        let above = i;
        if above as f64 / n > alpha {
            break;
        }
        tau = value;
        while i < negatives.len() && negatives[i] == value {
            i += 1;
        }
    }
    Ok(CalibratedThreshold {
        tau,
        alpha,
        source: CalibrationSource::Target,
        per_shadow_taus: None,
    })
}

/// Median over shadows of each shadow's own target-calibrated threshold.
///
/// Shadow `i` is attacked with every model except `i` and the true target
/// as its shadows, so the target's scores never touch the calibration.
pub fn shadow_threshold(
    engine: &LiraEngine<'_>,
    target: usize,
    variant: Variant,
    alpha: f64,
) -> Result<CalibratedThreshold> {
    check_alpha(alpha)?;
    let bundle = engine.bundle();
    bundle.check_model(target)?;
    if bundle.n_models() < 3 {
        return Err(AuditError::TooFewModels {
            variant: "shadow calibration",
            required: 3,
            found: bundle.n_models(),
        });
    }
    let taus: Vec<Option<f64>> = (0..bundle.n_models())
        .into_par_iter()
        .filter(|&i| i != target)
        .map(|i| -> Result<Option<f64>> {
            let result = match engine.attack_excluding(i, Some(target), variant) {
                Ok(r) => r,
                Err(AuditError::TooFewModels { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let (scores, labels) = result.scored();
            match target_threshold(&scores, &labels, alpha) {
                Ok(t) => Ok(Some(t.tau)),
                Err(AuditError::EmptyClass(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let taus: Vec<f64> = taus.into_iter().flatten().collect();
    if taus.len() < 2 {
        return Err(AuditError::TooFewShadows(taus.len()));
    }
    Ok(CalibratedThreshold {
        tau: median(&taus),
        alpha,
        source: CalibrationSource::Shadow,
        per_shadow_taus: Some(taus),
    })
}

/// Threshold for `target` under `policy`.
pub fn calibrate(
    engine: &LiraEngine<'_>,
    target: usize,
    variant: Variant,
    policy: &ThresholdPolicy,
) -> Result<CalibratedThreshold> {
    match policy.source {
        CalibrationSource::Target => {
            let result = engine.attack(target, variant)?;
            let (scores, labels) = result.scored();
            target_threshold(&scores, &labels, policy.alpha)
        }
        CalibrationSource::Shadow => shadow_threshold(engine, target, variant, policy.alpha),
    }
}

/// Achieved `(TPR', FPR')` of the rule `score > tau`.
pub fn achieved_rates(scores: &[f64], is_member: &[bool], tau: f64) -> Result<(f64, f64)> {
    if scores.len() != is_member.len() {
        return Err(AuditError::DimensionMismatch {
            what: "scores vs labels",
            expected: is_member.len(),
            found: scores.len(),
        });
    }
    let (mut tp, mut pos, mut fp, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &m) in scores.iter().zip(is_member) {
        if m {
            pos += 1;
            tp += usize::from(s > tau);
        } else {
            neg += 1;
            fp += usize::from(s > tau);
        }
    }
    if pos == 0 {
        return Err(AuditError::EmptyClass("members"));
    }
    if neg == 0 {
        return Err(AuditError::EmptyClass("non-members"));
    }
    Ok((tp as f64 / pos as f64, fp as f64 / neg as f64))
}
