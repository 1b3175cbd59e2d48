//! Small numerical helpers shared across modules: Gaussian tails,
//! order statistics and tie-aware ranks.

use libm::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Above this many standard deviations the upper tail is evaluated in log
/// space with a continued fraction; below it `erfc` has full precision.
const CF_SWITCH: f64 = 8.0;

/// Standard normal upper tail `Pr[Z >= z]`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `ln Pr[Z >= z]` for a standard normal, finite for any finite `z`.
pub fn ln_normal_sf(z: f64) -> f64 {
    if z > CF_SWITCH {
        // Laplace continued fraction: Q(z) = pdf(z) / (z + 1/(z + 2/(z + 3/(z + ...))))
        let mut tail = z;
        for k in (1..=60).rev() {
            tail = z + k as f64 / tail;
        }
        -0.5 * z * z - LN_SQRT_2PI - tail.ln()
    } else if z < 0.0 {
        (-normal_sf(-z)).ln_1p()
    } else {
        normal_sf(z).ln()
    }
}

/// Log density of `N(mu, sigma^2)` at `x`.
#[inline]
pub fn ln_normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let t = (x - mu) / sigma;
    -0.5 * t * t - sigma.ln() - LN_SQRT_2PI
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median of a slice (midpoint of the middle pair for even lengths).
/// Returns NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

/// Sample standard deviation with `n - 1` denominator; 0 for a single value.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// 1-based ranks in ascending order; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation; NaN when fewer than two points or a constant side.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "pearson: length mismatch");
    if x.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}
