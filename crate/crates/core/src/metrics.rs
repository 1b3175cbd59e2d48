//! ROC analysis, PPV under a membership prior, cross-target aggregation
//! and the test/train loss ratio.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// Vertices from `(0,0)` to `(1,1)`, one per distinct score value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

pub fn roc_curve(scores: &[f64], is_member: &[bool]) -> Result<RocCurve> {
    if scores.len() != is_member.len() {
        return Err(AuditError::DimensionMismatch {
            what: "scores vs labels",
            expected: is_member.len(),
            found: scores.len(),
        });
    }
    let pos = is_member.iter().filter(|&&m| m).count();
    let neg = is_member.len() - pos;
    if pos == 0 {
        return Err(AuditError::EmptyClass("members"));
    }
    if neg == 0 {
        return Err(AuditError::EmptyClass("non-members"));
    }
    if let Some(&bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(AuditError::NonFinite(bad));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::with_capacity(order.len() + 1);
    points.push(RocPoint { fpr: 0.0, tpr: 0.0 });
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        while i < order.len() && scores[order[i]] == value {
            if is_member[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(RocCurve { points })
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
        .sum()
}

/// TPR at the largest achieved FPR not exceeding `alpha` (no interpolation).
pub fn tpr_at_fpr(curve: &RocCurve, alpha: f64) -> f64 {
    curve
        .points
        .iter()
        .filter(|p| p.fpr <= alpha)
        .map(|p| p.tpr)
        .fold(0.0, f64::max)
}

/// TPR linearly interpolated between the vertices bracketing `alpha`.
pub fn tpr_at_fpr_interpolated(curve: &RocCurve, alpha: f64) -> f64 {
    let pts = &curve.points;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.fpr <= alpha && alpha <= b.fpr {
            if b.fpr == a.fpr {
                return b.tpr;
            }
            let t = (alpha - a.fpr) / (b.fpr - a.fpr);
            // stay on the upper vertex when the next one lies exactly at alpha
            return if t >= 1.0 { b.tpr } else { a.tpr + t * (b.tpr - a.tpr) };
        }
    }
    pts.last().map_or(0.0, |p| p.tpr)
}

/// Positive predictive value under membership prior `pi`. NaN when nothing
/// is flagged (`TPR' = FPR' = 0`) or `pi` is outside `(0,1)`.
pub fn ppv(tpr_prime: f64, fpr_prime: f64, pi: f64) -> f64 {
    if !(pi > 0.0 && pi < 1.0) {
        return f64::NAN;
    }
    let num = pi * tpr_prime;
    let den = num + (1.0 - pi) * fpr_prime;
    if den == 0.0 {
        return f64::NAN;
    }
    num / den
}

/// Mean and sample standard deviation over defined (non-NaN) values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateStat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub n_undefined: usize,
}

pub fn aggregate(values: &[f64]) -> Result<AggregateStat> {
    if values.is_empty() {
        return Err(AuditError::InvalidParameter("aggregate of an empty list".into()));
    }
    let defined: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    let n_undefined = values.len() - defined.len();
    if defined.is_empty() {
        return Ok(AggregateStat {
            mean: f64::NAN,
            std: f64::NAN,
            n: 0,
            n_undefined,
        });
    }
    Ok(AggregateStat {
        mean: crate::stats::mean(&defined),
        std: crate::stats::sample_std(&defined),
        n: defined.len(),
        n_undefined,
    })
}

/// Test loss over train loss.
pub fn loss_ratio(train_loss: f64, test_loss: f64) -> Result<f64> {
    if !train_loss.is_finite() || train_loss <= 0.0 {
        return Err(AuditError::InvalidParameter(format!(
            "train loss must be positive, got {train_loss}"
        )));
    }
    if !test_loss.is_finite() {
        return Err(AuditError::NonFinite(test_loss));
    }
    Ok(test_loss / train_loss)
}
