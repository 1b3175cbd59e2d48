//! Synthetic score bundles with known per-sample Gaussians, the closed-form
//! ROC of the equal-variance test, and a naive reference attack used to
//! cross-check the engine.
//!
//! Every random draw comes from a ChaCha stream keyed by its coordinates,
//! so output does not depend on generation order or thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{AuditError, Result};
use crate::score_store::{BundleParts, ScoreBundle};

/// Generator parameters. Logit-space scores of sample `i` are drawn from
/// `N(mu_out_i, sigma_i^2)` when OUT and `N(mu_out_i + d_i, sigma_i^2)`
/// when IN, with
///
/// * `mu_out_i ~ N(mu_out_mean, mu_out_std^2)`,
/// * `d_i = separation * exp(separation_spread * g - separation_spread^2 / 2)`,
/// * `sigma_i = sigma * exp(sigma_spread * h)`,
///
/// for independent standard normals `g`, `h` keyed by `sample_seed`.
/// `seed` drives membership and score noise; runs that share
/// `sample_seed` share per-sample difficulty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub n_models: usize,
    pub n_augmentations: usize,
    pub mu_out_mean: f64,
    pub mu_out_std: f64,
    pub separation: f64,
    pub separation_spread: f64,
    pub sigma: f64,
    pub sigma_spread: f64,
    pub member_fraction: f64,
    /// Each sample is a member in exactly `floor(M * member_fraction)` models.
    pub balanced: bool,
    pub seed: u64,
    pub sample_seed: u64,
    pub run_id: Option<String>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_samples: 1_000,
            n_models: 16,
            n_augmentations: 1,
            mu_out_mean: 0.0,
            mu_out_std: 1.0,
            separation: 1.0,
            separation_spread: 0.0,
            sigma: 1.0,
            sigma_spread: 0.0,
            member_fraction: 0.5,
            balanced: true,
            seed: 0,
            sample_seed: 0,
            run_id: None,
        }
    }
}

pub const PRESET_NAMES: [&str; 3] = ["baseline-like", "aof-like", "tl-like"];

impl SynthSpec {
    /// Named scenarios ordered from most to least separable.
    pub fn preset(name: &str) -> Result<Self> {
        let separation = match name {
            "baseline-like" => 3.0,
            "aof-like" => 1.0,
            "tl-like" => 0.8,
            other => {
                return Err(AuditError::InvalidParameter(format!(
                    "unknown scenario {other:?}; expected one of {PRESET_NAMES:?}"
                )))
            }
        };
        Ok(Self {
            n_samples: 10_000,
            n_models: 16,
            separation,
            separation_spread: 0.6,
            sigma_spread: 0.25,
            run_id: Some(name.to_string()),
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AuditError::InvalidParameter(m));
        if self.n_samples == 0 || self.n_models == 0 || self.n_augmentations == 0 {
            return bad("synthetic dimensions must be positive".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(0.0..=1.0).contains(&self.member_fraction) {
            return bad(format!("member_fraction must lie in [0,1], got {}", self.member_fraction));
        }
        for (name, v) in [
            ("mu_out_mean", self.mu_out_mean),
            ("mu_out_std", self.mu_out_std),
            ("separation", self.separation),
            ("separation_spread", self.separation_spread),
            ("sigma_spread", self.sigma_spread),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.balanced && self.member_fraction == 0.5 && self.n_models < 2 {
            return bad("balanced membership needs at least 2 models".into());
        }
        Ok(())
    }

    fn members_per_sample(&self) -> usize {
        (self.n_models as f64 * self.member_fraction).floor() as usize
    }
}

/// True per-sample parameters of a synthetic universe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleParams {
    pub mu_out: f64,
    pub mu_in: f64,
    pub sigma: f64,
}

// Domain tags keep the keyed streams of different quantities apart.
const TAG_PARAMS: u64 = 0x7061_7261_6d73;
const TAG_MEMBERSHIP: u64 = 0x6d65_6d62;
const TAG_NOISE: u64 = 0x6e6f_6973;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent stream for the coordinate `(seed, tag, a, b)`.
fn keyed_rng(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    let key = splitmix(splitmix(splitmix(seed ^ splitmix(tag)) ^ a) ^ b);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(tag);
    rng
}

pub fn sample_params(spec: &SynthSpec) -> Vec<SampleParams> {
    (0..spec.n_samples)
        .map(|i| {
            let mut rng = keyed_rng(spec.sample_seed, TAG_PARAMS, i as u64, 0);
            let z0: f64 = StandardNormal.sample(&mut rng);
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let mu_out = spec.mu_out_mean + spec.mu_out_std * z0;
            let s = spec.separation_spread;
            let d = spec.separation * (s * z1 - 0.5 * s * s).exp();
            let sigma = spec.sigma * (spec.sigma_spread * z2).exp();
            SampleParams {
                mu_out,
                mu_in: mu_out + d,
                sigma,
            }
        })
        .collect()
}

fn membership(spec: &SynthSpec) -> Vec<bool> {
    let (m, n) = (spec.n_models, spec.n_samples);
    let mut mask = vec![false; m * n];
    let k = spec.members_per_sample();
    for s in 0..n {
        let mut rng = keyed_rng(spec.seed, TAG_MEMBERSHIP, s as u64, 0);
        if spec.balanced {
            let mut models: Vec<usize> = (0..m).collect();
            models.shuffle(&mut rng);
            for &model in &models[..k] {
                mask[model * n + s] = true;
            }
        } else {
            for model in 0..m {
                mask[model * n + s] = rand::Rng::random_bool(&mut rng, spec.member_fraction);
            }
        }
    }
    mask
}

/// Draws a bundle from `spec`.
pub fn gen_bundle(spec: &SynthSpec) -> Result<ScoreBundle> {
    spec.validate()?;
    let params = sample_params(spec);
    let mask = membership(spec);
    let (m, n, a) = (spec.n_models, spec.n_samples, spec.n_augmentations);

    let confidences: Vec<f32> = (0..m * n)
        .into_par_iter()
        .flat_map_iter(|cell| {
            let (model, s) = (cell / n, cell % n);
            let p = params[s];
            let mu = if mask[cell] { p.mu_in } else { p.mu_out };
            let mut rng = keyed_rng(spec.seed, TAG_NOISE, model as u64, s as u64);
            (0..a)
                .map(move |_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (1.0 / (1.0 + (-(mu + p.sigma * z)).exp())) as f32
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let balanced = spec.balanced && spec.members_per_sample() == m / 2;
    ScoreBundle::new(BundleParts {
        n_samples: n,
        n_models: m,
        n_augmentations: a,
        confidences,
        membership: mask,
        model_stats: None,
        run_id: spec
            .run_id
            .clone()
            .unwrap_or_else(|| format!("synth-{}", spec.seed)),
        seed: spec.seed,
        balanced,
    })
}

/// Closed-form ROC of the equal-variance Gaussian test:
/// `TPR(alpha) = Q(Q^{-1}(alpha) - d / sigma)`.
pub fn analytic_roc(d: f64, sigma: f64) -> Result<impl Fn(f64) -> f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(AuditError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let std = Normal::standard();
    let shift = d / sigma;
    Ok(move |alpha: f64| {
        if alpha <= 0.0 {
            return 0.0;
        }
        if alpha >= 1.0 {
            return 1.0;
        }
        // Q^{-1}(alpha) = -Phi^{-1}(alpha)
        let z = -std.inverse_cdf(alpha);
        std.sf(z - shift)
    })
}

#[allow(clippy::needless_range_loop)]
pub mod oracle {
    //! Straight-line reference attack. Shares no code with the engine:
    //! its own logit, moments, pooling and densities.

    use std::collections::BTreeSet;

    use statrs::distribution::{ContinuousCDF, Normal};

    use crate::error::{AuditError, Result};
    use crate::lira::{AttackResult, Variant};
    use crate::score_store::ScoreBundle;

    pub const MAX_SAMPLES: usize = 256;
    pub const MAX_MODELS: usize = 16;

    const EPS: f64 = 1e-7;
    const FLOOR: f64 = 1e-6;

    fn logit(p: f32) -> f64 {
        let q = f64::from(p).clamp(EPS, 1.0 - EPS);
        (q / (1.0 - q)).ln()
    }

    fn log_density(x: f64, mu: f64, sd: f64) -> f64 {
        let two_pi = 2.0 * std::f64::consts::PI;
        -((x - mu) * (x - mu)) / (2.0 * sd * sd) - (sd * two_pi.sqrt()).ln()
    }

    /// `-ln Pr[Z >= z]`: direct below 30, asymptotic series above
    /// (where the direct tail underflows).
    fn neg_log_tail(std: &Normal, z: f64) -> f64 {
        if z < 30.0 {
            return -std.sf(z).ln();
        }
        // Q(z) ~ pdf(z)/z * (1 - 1/z^2 + 3/z^4 - 15/z^6 + ...)
        let z2 = z * z;
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..8 {
            term *= -((2 * k - 1) as f64) / z2;
            series += term;
        }
        0.5 * z2 + z.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln() - series.ln()
    }

    pub fn brute_oracle(bundle: &ScoreBundle, target: usize, variant: Variant) -> Result<AttackResult> {
        let n = bundle.n_samples();
        let m = bundle.n_models();
        let aug = bundle.n_augmentations();
        if n > MAX_SAMPLES || m > MAX_MODELS {
            return Err(AuditError::OracleScale(format!(
                "N={n} (max {MAX_SAMPLES}), M={m} (max {MAX_MODELS})"
            )));
        }
        if target >= m {
            return Err(AuditError::ModelIndex { index: target, n_models: m });
        }
        let is_member: Vec<bool> = (0..n).map(|i| bundle.is_member(target, i)).collect();

        if variant == Variant::Global {
            let mut scores = Vec::new();
            for i in 0..n {
                let mut total = 0.0;
                for a in 0..aug {
                    total += logit(bundle.confidence(target, i, a));
                }
                scores.push(total / aug as f64);
            }
            return Ok(AttackResult {
                target_index: target,
                variant,
                scores,
                is_member,
                skipped: BTreeSet::new(),
            });
        }
        if m < 3 {
            return Err(AuditError::TooFewModels { variant: "oracle", required: 3, found: m });
        }

        // obs[side][i][a] = list of shadow logits; side 0 = IN, 1 = OUT
        let mut obs = vec![vec![vec![Vec::<f64>::new(); aug]; n]; 2];
        for model in 0..m {
            if model == target {
                continue;
            }
            for i in 0..n {
                let side = if bundle.is_member(model, i) { 0 } else { 1 };
                for a in 0..aug {
                    obs[side][i][a].push(logit(bundle.confidence(model, i, a)));
                }
            }
        }

        let mean_of = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        let fixed = matches!(variant, Variant::OnlineFixed | Variant::OfflineFixed);

        // pooled[side][a]
        let mut pooled = vec![vec![FLOOR; aug]; 2];
        if fixed {
            for side in 0..2 {
                for a in 0..aug {
                    let mut num = 0.0;
                    let mut dof = 0.0;
                    for i in 0..n {
                        let v = &obs[side][i][a];
                        if v.is_empty() {
                            continue;
                        }
                        let mu = mean_of(v);
                        for x in v {
                            num += (x - mu) * (x - mu);
                        }
                        dof += (v.len() - 1) as f64;
                    }
                    if dof > 0.0 {
                        pooled[side][a] = f64::max((num / dof).sqrt(), FLOOR);
                    }
                }
            }
        }

        let sd_of = |v: &Vec<f64>, side: usize, a: usize| -> f64 {
            if fixed {
                return pooled[side][a];
            }
            let mu = mean_of(v);
            let var = v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (v.len() - 1) as f64;
            f64::max(var.sqrt(), FLOOR)
        };

        let online = matches!(variant, Variant::Online | Variant::OnlineFixed);
        let std = Normal::standard();
        let mut scores = Vec::new();
        let mut skipped = BTreeSet::new();
        for i in 0..n {
            let n_in = obs[0][i][0].len();
            let n_out = obs[1][i][0].len();
            let ok = n_out >= 2 && (!online || n_in >= 2);
            if !ok {
                skipped.insert(i);
                scores.push(f64::NAN);
                continue;
            }
            let mut total = 0.0;
            for a in 0..aug {
                let x = logit(bundle.confidence(target, i, a));
                let out = &obs[1][i][a];
                let (mu_o, sd_o) = (mean_of(out), sd_of(out, 1, a));
                if online {
                    let inn = &obs[0][i][a];
                    let (mu_i, sd_i) = (mean_of(inn), sd_of(inn, 0, a));
                    total += log_density(x, mu_i, sd_i) - log_density(x, mu_o, sd_o);
                } else {
                    total += neg_log_tail(&std, (x - mu_o) / sd_o);
                }
            }
            scores.push(total);
        }
        Ok(AttackResult {
            target_index: target,
            variant,
            scores,
            is_member,
            skipped,
        })
    }
}

pub use oracle::brute_oracle;

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            n_samples: 64,
            n_models: 8,
            n_augmentations: 2,
            separation: 1.5,
            seed,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = gen_bundle(&small(3)).unwrap();
        let b = gen_bundle(&small(3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_bundle(&small(4)).unwrap());
    }

    #[test]
    fn thread_count_does_not_matter() {
        let spec = small(11);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| gen_bundle(&spec).unwrap());
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| gen_bundle(&spec).unwrap());
        assert_eq!(one, four);
    }

    #[test]
    fn balanced_membership() {
        let b = gen_bundle(&small(1)).unwrap();
        assert!(b.balanced());
        for s in 0..b.n_samples() {
            assert_eq!(b.member_count(s), 4);
        }
    }

    #[test]
    fn sample_params_shared_across_run_seeds() {
        let mut a = small(1);
        a.separation_spread = 0.5;
        let mut b = a.clone();
        b.seed = 99;
        assert_eq!(sample_params(&a), sample_params(&b));
    }

    #[test]
    fn presets() {
        let separations: Vec<f64> = PRESET_NAMES
            .iter()
            .map(|n| SynthSpec::preset(n).unwrap().separation)
            .collect();
        assert_eq!(separations, vec![3.0, 1.0, 0.8]);
        assert!(SynthSpec::preset("resnet").is_err());
    }

    #[test]
    fn invalid_specs() {
        let mut s = small(0);
        s.sigma = 0.0;
        assert!(gen_bundle(&s).is_err());
        let mut s = small(0);
        s.member_fraction = 1.5;
        assert!(gen_bundle(&s).is_err());
    }

    #[test]
    fn analytic_roc_values() {
        let null = analytic_roc(0.0, 1.0).unwrap();
        for a in [1e-4, 0.01, 0.3, 0.9] {
            assert!((null(a) - a).abs() < 1e-10);
        }
        // tau at mu_out + 3 sigma with d = 2: FPR = Q(3), TPR = Q(1)
        let roc = analytic_roc(2.0, 1.0).unwrap();
        let fpr = 0.001_349_898_031_630_094_5;
        assert!((roc(fpr) - 0.158_655_253_931_457_05).abs() < 1e-9);
        let far = analytic_roc(40.0, 1.0).unwrap();
        assert!(far(1e-5) > 1.0 - 1e-12);
        assert!(analytic_roc(1.0, 0.0).is_err());
    }

    #[test]
    fn oracle_scale_guard() {
        let mut s = small(0);
        s.n_samples = 300;
        let b = gen_bundle(&s).unwrap();
        assert!(matches!(
            brute_oracle(&b, 0, crate::lira::Variant::Online),
            Err(AuditError::OracleScale(_))
        ));
    }

    #[test]
    fn spec_json_round_trip() {
        let s = SynthSpec::preset("aof-like").unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: SynthSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
