//! Likelihood-ratio membership inference.
//!
//! For a designated target model every other model acts as a shadow. Per
//! sample and augmentation, the logit-confidences of shadows that trained
//! on the sample form the IN population and the rest the OUT population;
//! each is summarised by a Gaussian. The target's own observation is then
//! scored either by the IN/OUT log-likelihood ratio (online) or by the
//! OUT-only upper-tail probability (offline). Augmentations are treated as
//! independent dimensions.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::score_store::{logit_transform, ScoreBundle, DEFAULT_CLAMP_EPS};
use crate::stats::{ln_normal_pdf, ln_normal_sf};

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-6;
pub const DEFAULT_MIN_OBS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarianceMode {
    PerSample,
    Fixed,
}

/// Attack family plus variance mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    Online,
    OnlineFixed,
    Offline,
    OfflineFixed,
    Global,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Online,
        Variant::OnlineFixed,
        Variant::Offline,
        Variant::OfflineFixed,
        Variant::Global,
    ];

    /// Combines a family name with a variance mode. `global` ignores the mode.
    pub fn from_parts(family: &str, mode: VarianceMode) -> Result<Self> {
        match (family, mode) {
            ("online", VarianceMode::PerSample) => Ok(Variant::Online),
            ("online", VarianceMode::Fixed) => Ok(Variant::OnlineFixed),
            ("offline", VarianceMode::PerSample) => Ok(Variant::Offline),
            ("offline", VarianceMode::Fixed) => Ok(Variant::OfflineFixed),
            ("global", _) => Ok(Variant::Global),
            _ => Err(AuditError::InvalidParameter(format!(
                "unknown attack family {family:?}"
            ))),
        }
    }

    pub fn mode(self) -> VarianceMode {
        match self {
            Variant::OnlineFixed | Variant::OfflineFixed => VarianceMode::Fixed,
            _ => VarianceMode::PerSample,
        }
    }

    pub fn uses_shadows(self) -> bool {
        self != Variant::Global
    }

    pub fn is_online(self) -> bool {
        matches!(self, Variant::Online | Variant::OnlineFixed)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Online => "online",
            Variant::OnlineFixed => "online-fv",
            Variant::Offline => "offline",
            Variant::OfflineFixed => "offline-fv",
            Variant::Global => "global",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s || v.name().replace('-', "_") == s)
            .ok_or_else(|| AuditError::InvalidParameter(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiraConfig {
    pub clamp_eps: f64,
    pub sigma_floor: f64,
    pub min_obs: usize,
}

impl Default for LiraConfig {
    fn default() -> Self {
        Self {
            clamp_eps: DEFAULT_CLAMP_EPS,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            min_obs: DEFAULT_MIN_OBS,
        }
    }
}

/// Diagonal Gaussian over augmentations.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFit {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub n_obs: usize,
}

impl GaussianFit {
    pub fn n_augmentations(&self) -> usize {
        self.mu.len()
    }
}

/// Per-sample scores of one target under one variant. Higher is more
/// member-like. Skipped samples carry a NaN score.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackResult {
    pub target_index: usize,
    pub variant: Variant,
    pub scores: Vec<f64>,
    pub is_member: Vec<bool>,
    pub skipped: BTreeSet<usize>,
}

impl AttackResult {
    /// Scores and labels of the non-skipped samples, in sample order.
    pub fn scored(&self) -> (Vec<f64>, Vec<bool>) {
        self.scores
            .iter()
            .zip(&self.is_member)
            .enumerate()
            .filter(|(i, _)| !self.skipped.contains(i))
            .map(|(_, (&s, &m))| (s, m))
            .unzip()
    }

    /// Whether sample `i` is scored and strictly above `tau`.
    pub fn flagged(&self, i: usize, tau: f64) -> bool {
        !self.skipped.contains(&i) && self.scores[i] > tau
    }
}

/// Diagonal-Gaussian IN/OUT log-likelihood ratio summed over augmentations.
pub fn online_score(phi_obs: &[f64], fit_in: &GaussianFit, fit_out: &GaussianFit) -> Result<f64> {
    check_aug(phi_obs.len(), fit_in.n_augmentations())?;
    check_aug(phi_obs.len(), fit_out.n_augmentations())?;
    Ok(phi_obs
        .iter()
        .enumerate()
        .map(|(a, &x)| {
            ln_normal_pdf(x, fit_in.mu[a], fit_in.sigma[a])
                - ln_normal_pdf(x, fit_out.mu[a], fit_out.sigma[a])
        })
        .sum())
}

/// Per-augmentation OUT upper-tail probability `Pr[Z >= phi]`.
pub fn offline_p_out(phi_obs: &[f64], fit_out: &GaussianFit) -> Result<Vec<f64>> {
    check_aug(phi_obs.len(), fit_out.n_augmentations())?;
    Ok(phi_obs
        .iter()
        .enumerate()
        .map(|(a, &x)| ln_normal_sf((x - fit_out.mu[a]) / fit_out.sigma[a]).exp())
        .collect())
}

/// `-sum_a ln p_out,a`, evaluated in log space so extreme tails stay finite.
pub fn offline_score(phi_obs: &[f64], fit_out: &GaussianFit) -> Result<f64> {
    check_aug(phi_obs.len(), fit_out.n_augmentations())?;
    Ok(-phi_obs
        .iter()
        .enumerate()
        .map(|(a, &x)| ln_normal_sf((x - fit_out.mu[a]) / fit_out.sigma[a]))
        .sum::<f64>())
}

fn check_aug(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(AuditError::AugmentationMismatch { left, right });
    }
    Ok(())
}

/// Shadow sufficient statistics for every sample of one target.
struct Moments {
    n_aug: usize,
    n_in: Vec<usize>,
    n_out: Vec<usize>,
    mean_in: Vec<f64>,
    ss_in: Vec<f64>,
    mean_out: Vec<f64>,
    ss_out: Vec<f64>,
}

/// Pooled per-augmentation sigmas, IN then OUT.
struct Pooled {
    sigma_in: Vec<f64>,
    sigma_out: Vec<f64>,
}

/// LiRA over one bundle. Holds the logit table so repeated targets share it.
pub struct LiraEngine<'a> {
    bundle: &'a ScoreBundle,
    phi: Vec<f64>,
    config: LiraConfig,
}

impl<'a> LiraEngine<'a> {
    pub fn new(bundle: &'a ScoreBundle) -> Self {
        Self::with_config(bundle, LiraConfig::default())
    }

    pub fn with_config(bundle: &'a ScoreBundle, config: LiraConfig) -> Self {
        let eps = config.clamp_eps;
        let phi = bundle
            .confidences()
            .par_iter()
            .map(|&p| logit_transform(f64::from(p), eps).expect("validated confidence"))
            .collect();
        Self {
            bundle,
            phi,
            config,
        }
    }

    pub fn bundle(&self) -> &'a ScoreBundle {
        self.bundle
    }

    pub fn config(&self) -> &LiraConfig {
        &self.config
    }

    /// Logit-confidences of `model` on `sample`, one per augmentation.
    pub fn phi(&self, model: usize, sample: usize) -> &[f64] {
        let a = self.bundle.n_augmentations();
        let start = (model * self.bundle.n_samples() + sample) * a;
        &self.phi[start..start + a]
    }

    fn shadows(&self, target: usize, exclude: Option<usize>) -> Vec<usize> {
        (0..self.bundle.n_models())
            .filter(|&m| m != target && Some(m) != exclude)
            .collect()
    }

    fn sample_moments(&self, shadows: &[usize], sample: usize) -> SampleMoments {
        let a = self.bundle.n_augmentations();
        let mut acc = SampleMoments::new(a);
        for &m in shadows {
            let side = if self.bundle.is_member(m, sample) {
                &mut acc.inside
            } else {
                &mut acc.outside
            };
            side.n += 1;
            for (s, x) in side.sum.iter_mut().zip(self.phi(m, sample)) {
                *s += x;
            }
        }
        acc.inside.finish_mean();
        acc.outside.finish_mean();
        for &m in shadows {
            let side = if self.bundle.is_member(m, sample) {
                &mut acc.inside
            } else {
                &mut acc.outside
            };
            for ((ss, mu), x) in side.ss.iter_mut().zip(&side.sum).zip(self.phi(m, sample)) {
                *ss += (x - mu) * (x - mu);
            }
        }
        acc
    }

    fn moments(&self, target: usize, exclude: Option<usize>) -> Moments {
        let shadows = self.shadows(target, exclude);
        let per_sample: Vec<SampleMoments> = (0..self.bundle.n_samples())
            .into_par_iter()
            .map(|s| self.sample_moments(&shadows, s))
            .collect();
        let a = self.bundle.n_augmentations();
        let n = per_sample.len();
        let mut m = Moments {
            n_aug: a,
            n_in: Vec::with_capacity(n),
            n_out: Vec::with_capacity(n),
            mean_in: Vec::with_capacity(n * a),
            ss_in: Vec::with_capacity(n * a),
            mean_out: Vec::with_capacity(n * a),
            ss_out: Vec::with_capacity(n * a),
        };
        for s in per_sample {
            m.n_in.push(s.inside.n);
            m.n_out.push(s.outside.n);
            m.mean_in.extend(s.inside.sum);
            m.ss_in.extend(s.inside.ss);
            m.mean_out.extend(s.outside.sum);
            m.ss_out.extend(s.outside.ss);
        }
        m
    }

    fn pooled(&self, m: &Moments) -> Pooled {
        let floor = self.config.sigma_floor;
        let pool = |counts: &[usize], ss: &[f64]| -> Vec<f64> {
            (0..m.n_aug)
                .map(|a| {
                    let mut num = 0.0;
                    let mut dof = 0usize;
                    // sequential sum keeps the reduction order fixed
                    for (s, &n) in counts.iter().enumerate() {
                        if n >= 1 {
                            num += ss[s * m.n_aug + a];
                            dof += n - 1;
                        }
                    }
                    if dof == 0 {
                        floor
                    } else {
                        (num / dof as f64).sqrt().max(floor)
                    }
                })
                .collect()
        };
        Pooled {
            sigma_in: pool(&m.n_in, &m.ss_in),
            sigma_out: pool(&m.n_out, &m.ss_out),
        }
    }

    fn fit_side(
        &self,
        n: usize,
        mean: &[f64],
        ss: &[f64],
        pooled: Option<&[f64]>,
    ) -> Option<GaussianFit> {
        if n < self.config.min_obs {
            return None;
        }
        let floor = self.config.sigma_floor;
        let sigma = match pooled {
            Some(p) => p.to_vec(),
            None => ss
                .iter()
                .map(|v| (v / (n - 1) as f64).sqrt().max(floor))
                .collect(),
        };
        Some(GaussianFit {
            mu: mean.to_vec(),
            sigma,
            n_obs: n,
        })
    }

    fn fits_from(
        &self,
        m: &Moments,
        pooled: Option<&Pooled>,
        sample: usize,
    ) -> (Option<GaussianFit>, Option<GaussianFit>) {
        let a = m.n_aug;
        let r = sample * a..(sample + 1) * a;
        let fit_in = self.fit_side(
            m.n_in[sample],
            &m.mean_in[r.clone()],
            &m.ss_in[r.clone()],
            pooled.map(|p| p.sigma_in.as_slice()),
        );
        let fit_out = self.fit_side(
            m.n_out[sample],
            &m.mean_out[r.clone()],
            &m.ss_out[r],
            pooled.map(|p| p.sigma_out.as_slice()),
        );
        (fit_in, fit_out)
    }

    /// IN and OUT Gaussians for `sample` from all shadows of `target`.
    /// A side with fewer than `min_obs` observations is `None`.
    pub fn fit_in_out(
        &self,
        target: usize,
        sample: usize,
        mode: VarianceMode,
    ) -> Result<(Option<GaussianFit>, Option<GaussianFit>)> {
        self.bundle.check_model(target)?;
        if sample >= self.bundle.n_samples() {
            return Err(AuditError::SampleIndex {
                index: sample,
                n_samples: self.bundle.n_samples(),
            });
        }
        match mode {
            VarianceMode::PerSample => {
                let shadows = self.shadows(target, None);
                let sm = self.sample_moments(&shadows, sample);
                Ok((
                    self.fit_side(sm.inside.n, &sm.inside.sum, &sm.inside.ss, None),
                    self.fit_side(sm.outside.n, &sm.outside.sum, &sm.outside.ss, None),
                ))
            }
            VarianceMode::Fixed => {
                let m = self.moments(target, None);
                let pooled = self.pooled(&m);
                Ok(self.fits_from(&m, Some(&pooled), sample))
            }
        }
    }

    /// Scores every sample of `target` with the remaining models as shadows.
    pub fn attack(&self, target: usize, variant: Variant) -> Result<AttackResult> {
        self.attack_excluding(target, None, variant)
    }

    /// Like [`attack`](Self::attack) but also withholds `exclude` from the
    /// shadow pool.
    pub fn attack_excluding(
        &self,
        target: usize,
        exclude: Option<usize>,
        variant: Variant,
    ) -> Result<AttackResult> {
        self.bundle.check_model(target)?;
        let n = self.bundle.n_samples();
        let is_member = self.bundle.membership_row(target).to_vec();

        if variant == Variant::Global {
            let scores = (0..n)
                .map(|s| {
                    let phi = self.phi(target, s);
                    phi.iter().sum::<f64>() / phi.len() as f64
                })
                .collect();
            return Ok(AttackResult {
                target_index: target,
                variant,
                scores,
                is_member,
                skipped: BTreeSet::new(),
            });
        }

        let required = 3 + usize::from(exclude.is_some());
        if self.bundle.n_models() < required {
            return Err(AuditError::TooFewModels {
                variant: variant.name(),
                required,
                found: self.bundle.n_models(),
            });
        }
        let m = self.moments(target, exclude);
        let pooled = (variant.mode() == VarianceMode::Fixed).then(|| self.pooled(&m));
        let online = variant.is_online();

        let scores: Vec<Option<f64>> = (0..n)
            .into_par_iter()
            .map(|s| {
                let (fit_in, fit_out) = self.fits_from(&m, pooled.as_ref(), s);
                let obs = self.phi(target, s);
                let score = match (online, fit_in, fit_out) {
                    (true, Some(fi), Some(fo)) => online_score(obs, &fi, &fo).ok(),
                    (false, _, Some(fo)) => offline_score(obs, &fo).ok(),
                    _ => None,
                };
                score.filter(|v| v.is_finite())
            })
            .collect();

        let skipped = scores
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_none())
            .map(|(i, _)| i)
            .collect();
        Ok(AttackResult {
            target_index: target,
            variant,
            scores: scores.into_iter().map(|s| s.unwrap_or(f64::NAN)).collect(),
            is_member,
            skipped,
        })
    }

    /// Attacks every model in turn (leave-one-out), in model order.
    pub fn attack_every_target(&self, variant: Variant) -> Result<Vec<AttackResult>> {
        (0..self.bundle.n_models())
            .into_par_iter()
            .map(|t| self.attack(t, variant))
            .collect()
    }
}

struct Side {
    n: usize,
    sum: Vec<f64>,
    ss: Vec<f64>,
}

impl Side {
    fn finish_mean(&mut self) {
        if self.n > 0 {
            let n = self.n as f64;
            for v in &mut self.sum {
                *v /= n;
            }
        }
    }
}

struct SampleMoments {
    inside: Side,
    outside: Side,
}

impl SampleMoments {
    fn new(a: usize) -> Self {
        let side = || Side {
            n: 0,
            sum: vec![0.0; a],
            ss: vec![0.0; a],
        };
        Self {
            inside: side(),
            outside: side(),
        }
    }
}

/// One-shot attack with default configuration.
pub fn attack_all(bundle: &ScoreBundle, target: usize, variant: Variant) -> Result<AttackResult> {
    LiraEngine::new(bundle).attack(target, variant)
}

/// Shadow-free baseline: mean logit-confidence of the target itself.
pub fn global_score(bundle: &ScoreBundle, target: usize) -> Result<AttackResult> {
    attack_all(bundle, target, Variant::Global)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score_store::BundleParts;

    fn fit(mu: &[f64], sigma: &[f64]) -> GaussianFit {
        GaussianFit {
            mu: mu.to_vec(),
            sigma: sigma.to_vec(),
            n_obs: 10,
        }
    }

    fn sigmoid(z: f64) -> f32 {
        (1.0 / (1.0 + (-z).exp())) as f32
    }

    /// Builds a bundle from logits laid out `[model][sample]` with A = 1.
    fn from_logits(n: usize, logits: &[f64], membership: &[bool]) -> ScoreBundle {
        let m = logits.len() / n;
        ScoreBundle::new(BundleParts {
            n_samples: n,
            n_models: m,
            n_augmentations: 1,
            confidences: logits.iter().map(|&z| sigmoid(z)).collect(),
            membership: membership.to_vec(),
            run_id: "t".into(),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn online_identical_fits_is_zero() {
        let f = fit(&[0.3, -1.0], &[0.7, 2.0]);
        assert_eq!(online_score(&[5.0, -3.0], &f, &f).unwrap(), 0.0);
    }

    #[test]
    fn online_unit_example() {
        // logN(1;1,1) - logN(1;0,1) = 0 - (-0.5)
        let s = online_score(&[1.0], &fit(&[1.0], &[1.0]), &fit(&[0.0], &[1.0])).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn online_swap_negates() {
        let a = fit(&[1.3, 0.2], &[0.5, 1.1]);
        let b = fit(&[-0.4, 0.9], &[1.7, 0.3]);
        let obs = [0.8, 0.1];
        let s1 = online_score(&obs, &a, &b).unwrap();
        let s2 = online_score(&obs, &b, &a).unwrap();
        assert!((s1 + s2).abs() < 1e-12);
    }

    #[test]
    fn online_aug_mismatch() {
        let f = fit(&[0.0], &[1.0]);
        assert!(matches!(
            online_score(&[0.0, 1.0], &f, &f),
            Err(AuditError::AugmentationMismatch { .. })
        ));
    }

    #[test]
    fn online_additive_over_augmentations() {
        let fi = fit(&[1.0, 2.0, -1.0], &[0.5, 1.5, 1.0]);
        let fo = fit(&[0.0, 0.5, -2.0], &[1.0, 1.0, 0.7]);
        let obs = [0.4, 1.9, -1.2];
        let total = online_score(&obs, &fi, &fo).unwrap();
        let parts: f64 = (0..3)
            .map(|a| {
                online_score(
                    &obs[a..=a],
                    &fit(&fi.mu[a..=a], &fi.sigma[a..=a]),
                    &fit(&fo.mu[a..=a], &fo.sigma[a..=a]),
                )
                .unwrap()
            })
            .sum();
        assert!((total - parts).abs() < 1e-12);
    }

    #[test]
    fn offline_examples() {
        let f = fit(&[2.0], &[3.0]);
        assert!((offline_p_out(&[2.0], &f).unwrap()[0] - 0.5).abs() < 1e-15);
        let p = offline_p_out(&[5.0], &f).unwrap()[0];
        assert!((p - 0.158_655_253_931_457_05).abs() < 1e-14);
        let far = offline_score(&[2.0 + 40.0 * 3.0], &f).unwrap();
        assert!(far.is_finite() && far > 0.0);
        assert!((far - 804.608_442_013_753_8).abs() < 1e-9);
    }

    #[test]
    fn fit_sample_moments() {
        // sample 0 is IN for models 1..=3 with logits 1, 2, 3; model 0 is the target
        let logits = [0.0, 0.0, 1.0, 5.0, 2.0, 6.0, 3.0, 7.0, -4.0, 9.0, -6.0, 9.0];
        let membership = [
            false, true, true, false, true, false, true, false, false, true, false, true,
        ];
        let b = from_logits(2, &logits, &membership);
        let engine = LiraEngine::new(&b);
        let (fi, fo) = engine.fit_in_out(0, 0, VarianceMode::PerSample).unwrap();
        let fi = fi.unwrap();
        let fo = fo.unwrap();
        // logits survive the f32 sigmoid round trip to ~1e-6
        assert!((fi.mu[0] - 2.0).abs() < 1e-5);
        assert!((fi.sigma[0] - 1.0).abs() < 1e-5);
        assert_eq!(fi.n_obs, 3);
        assert!((fo.mu[0] + 5.0).abs() < 1e-5);
        assert_eq!(fo.n_obs, 2);
    }

    #[test]
    fn identical_observations_hit_floor() {
        let logits = [0.0, 0.0, 0.7, 0.0, 0.7, 0.0, 0.7, 0.0];
        let membership = [false, false, true, false, true, false, true, false];
        let b = from_logits(2, &logits, &membership);
        let (fi, _) = LiraEngine::new(&b)
            .fit_in_out(0, 0, VarianceMode::PerSample)
            .unwrap();
        let fi = fi.unwrap();
        assert_eq!(fi.sigma[0], DEFAULT_SIGMA_FLOOR);
        assert!((fi.mu[0] - f64::from(sigmoid(0.7)).ln() + (1.0 - f64::from(sigmoid(0.7))).ln()).abs() < 1e-12);
    }

    #[test]
    fn fit_unavailable_sides() {
        // sample 0 is a member in every shadow: no OUT side
        let logits = [0.0; 8];
        let membership = [false, false, true, false, true, false, true, false];
        let b = from_logits(2, &logits, &membership);
        let engine = LiraEngine::new(&b);
        let (fi, fo) = engine.fit_in_out(0, 0, VarianceMode::PerSample).unwrap();
        assert!(fi.is_some() && fo.is_none());
        let online = engine.attack(0, Variant::Online).unwrap();
        assert!(online.skipped.contains(&0));
        assert!(online.scores[0].is_nan());
        // sample 1 has no IN side, so only the offline variant scores it
        assert!(online.skipped.contains(&1));
        let offline = engine.attack(0, Variant::Offline).unwrap();
        assert!(offline.skipped.contains(&0));
        assert!(!offline.skipped.contains(&1));
    }

    #[test]
    fn too_few_models() {
        let b = from_logits(2, &[0.0; 4], &[true, false, false, true]);
        assert!(matches!(
            attack_all(&b, 0, Variant::Online),
            Err(AuditError::TooFewModels { .. })
        ));
        assert!(attack_all(&b, 0, Variant::Global).is_ok());
        assert!(matches!(
            attack_all(&b, 5, Variant::Global),
            Err(AuditError::ModelIndex { .. })
        ));
    }

    #[test]
    fn global_scores() {
        let b = from_logits(2, &[9f64.ln(), -(9f64.ln())], &[true, false]);
        let r = global_score(&b, 0).unwrap();
        assert!((r.scores[0] - 2.197_224_577_336_219_4).abs() < 1e-6);
        assert!((r.scores[1] + 2.197_224_577_336_219_4).abs() < 1e-6);
        assert!(r.skipped.is_empty());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!(
            Variant::from_parts("offline", VarianceMode::Fixed).unwrap(),
            Variant::OfflineFixed
        );
        assert_eq!(
            Variant::from_parts("global", VarianceMode::Fixed).unwrap(),
            Variant::Global
        );
        assert!(Variant::from_parts("lira", VarianceMode::Fixed).is_err());
        assert!("bogus".parse::<Variant>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn offline_strictly_increasing(mu in -5.0f64..5.0, sigma in 0.1f64..5.0,
                                           x in -30.0f64..30.0, dx in 1e-3f64..10.0) {
                let f = fit(&[mu], &[sigma]);
                let lo = offline_score(&[x], &f).unwrap();
                let hi = offline_score(&[x + dx], &f).unwrap();
                prop_assert!(hi >= lo);
                // below ~-8 sigma p_out rounds to exactly 1 in double precision
                if (x - mu) / sigma > -5.0 {
                    prop_assert!(hi > lo);
                }
            }

            #[test]
            fn online_antisymmetric(mi in -3.0f64..3.0, mo in -3.0f64..3.0,
                                    si in 0.2f64..3.0, so in 0.2f64..3.0, x in -6.0f64..6.0) {
                let a = fit(&[mi], &[si]);
                let b = fit(&[mo], &[so]);
                let s = online_score(&[x], &a, &b).unwrap() + online_score(&[x], &b, &a).unwrap();
                prop_assert!(s.abs() < 1e-9);
            }
        }
    }
}
