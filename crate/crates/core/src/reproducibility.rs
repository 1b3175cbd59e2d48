//! Cross-run stability of attack outcomes.
//!
//! Two views of "which samples are vulnerable" are compared across runs
//! that share a sample universe: thresholded sets (samples flagged with
//! enough within-run support) and gap rankings (per-sample difference
//! between the typical log-ratio when the sample is IN and when it is OUT).

use std::collections::BTreeSet;

use itertools::Itertools;
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, ThresholdPolicy};
use crate::error::{AuditError, Result};
use crate::lira::{AttackResult, LiraEngine, Variant};
use crate::stats::{mean, median, sample_std, spearman};

pub type SampleSet = BTreeSet<usize>;

pub const DEFAULT_ENUMERATION_CAP: u64 = 100_000;
pub const DEFAULT_SUBSET_SEED: u64 = 0x5eed;

/// Within-run detection counts, treating each model as the target once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VulnerableSet {
    pub run_id: String,
    pub tp_count: Vec<u32>,
    pub fp_count: Vec<u32>,
}

impl VulnerableSet {
    /// Samples flagged by at least one model where they were members.
    pub fn sample_ids(&self) -> SampleSet {
        self.tp_count
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Builds support counts from per-target attack results and thresholds.
pub fn support_from_results(run_id: &str, results: &[(AttackResult, f64)]) -> VulnerableSet {
    let n = results.first().map_or(0, |(r, _)| r.scores.len());
    let mut tp = vec![0u32; n];
    let mut fp = vec![0u32; n];
    for (r, tau) in results {
        for i in 0..n {
            if r.flagged(i, *tau) {
                if r.is_member[i] {
                    tp[i] += 1;
                } else {
                    fp[i] += 1;
                }
            }
        }
    }
    VulnerableSet {
        run_id: run_id.to_string(),
        tp_count: tp,
        fp_count: fp,
    }
}

/// Attacks every model of the run under `policy` and counts, per sample,
/// flags as a member (TP) and as a non-member (FP).
pub fn support_counts(
    engine: &LiraEngine<'_>,
    variant: Variant,
    policy: &ThresholdPolicy,
) -> Result<VulnerableSet> {
    let bundle = engine.bundle();
    let results: Vec<(AttackResult, f64)> = (0..bundle.n_models())
        .into_par_iter()
        .map(|t| {
            let tau = calibrate(engine, t, variant, policy)?.tau;
            Ok((engine.attack(t, variant)?, tau))
        })
        .collect::<Result<_>>()?;
    Ok(support_from_results(bundle.run_id(), &results))
}

/// Samples with `tp_count >= x`, and no false positive when required.
pub fn filter_set(vset: &VulnerableSet, x: u32, require_zero_fp: bool) -> Result<SampleSet> {
    if x < 1 {
        return Err(AuditError::InvalidParameter("support threshold x must be >= 1".into()));
    }
    Ok(vset
        .tp_count
        .iter()
        .zip(&vset.fp_count)
        .enumerate()
        .filter(|(_, (&tp, &fp))| tp >= x && (!require_zero_fp || fp == 0))
        .map(|(i, _)| i)
        .collect())
}

/// `|A ∩ B| / |A ∪ B|`; NaN when both sets are empty.
pub fn jaccard(a: &SampleSet, b: &SampleSet) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return f64::NAN;
    }
    inter as f64 / union as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementStat {
    pub k: usize,
    pub mean_intersection: f64,
    pub mean_union: f64,
    /// Mean over subsets with a non-empty union.
    pub mean_jaccard: f64,
    pub std_intersection: f64,
    pub std_union: f64,
    pub std_jaccard: f64,
    /// Number of subsets evaluated.
    pub n_subsets: usize,
    /// Subsets whose union was empty, so their Jaccard is undefined.
    pub n_empty_union: usize,
    /// True when every `C(K,k)` subset was enumerated.
    pub exact: bool,
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return u64::MAX;
        }
    }
    acc as u64
}

fn subset_stats(sets: &[SampleSet], idx: &[usize]) -> (f64, f64, f64) {
    let mut inter: SampleSet = sets[idx[0]].clone();
    let mut union: SampleSet = sets[idx[0]].clone();
    for &i in &idx[1..] {
        inter.retain(|x| sets[i].contains(x));
        union.extend(sets[i].iter().copied());
    }
    let j = if union.is_empty() {
        f64::NAN
    } else {
        inter.len() as f64 / union.len() as f64
    };
    (inter.len() as f64, union.len() as f64, j)
}

/// k-wise intersection, union and Jaccard averaged over size-`k` subsets
/// of the runs. Enumerates exactly up to `cap` subsets, otherwise samples
/// `cap` subsets uniformly with a fixed seed.
pub fn kwise_agreement(sets: &[SampleSet], k: usize, cap: u64, seed: u64) -> Result<AgreementStat> {
    let big_k = sets.len();
    if k < 2 || k > big_k {
        return Err(AuditError::InvalidParameter(format!(
            "k must satisfy 2 <= k <= K={big_k}, got {k}"
        )));
    }
    let total = binomial(big_k as u64, k as u64);
    let exact = total <= cap;
    let subsets: Vec<Vec<usize>> = if exact {
        (0..big_k).combinations(k).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..cap)
            .map(|_| {
                let mut v = sample_indices(&mut rng, big_k, k).into_vec();
                v.sort_unstable();
                v
            })
            .collect()
    };
    let stats: Vec<(f64, f64, f64)> = subsets
        .par_iter()
        .map(|idx| subset_stats(sets, idx))
        .collect();
    let inters: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let unions: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let jacc: Vec<f64> = stats.iter().map(|s| s.2).filter(|j| !j.is_nan()).collect();
    let (mean_jaccard, std_jaccard) = if jacc.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (mean(&jacc), sample_std(&jacc))
    };
    Ok(AgreementStat {
        k,
        mean_intersection: mean(&inters),
        mean_union: mean(&unions),
        mean_jaccard,
        std_intersection: sample_std(&inters),
        std_union: sample_std(&unions),
        std_jaccard,
        n_subsets: stats.len(),
        n_empty_union: stats.len() - jacc.len(),
        exact,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GapKind {
    MedianGap,
    MeanGap,
}

impl GapKind {
    pub fn name(self) -> &'static str {
        match self {
            GapKind::MedianGap => "median",
            GapKind::MeanGap => "mean",
        }
    }
}

/// Per-sample vulnerability gap; NaN for samples lacking an IN or OUT side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRanking {
    pub run_id: String,
    pub gap: Vec<f64>,
    pub kind: GapKind,
    pub excluded: SampleSet,
}

impl GapRanking {
    pub fn n_samples(&self) -> usize {
        self.gap.len()
    }

    /// Sample ids by descending gap, ties (and excluded samples, last)
    /// by ascending id.
    pub fn order(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.gap.len()).collect();
        ids.sort_by(|&a, &b| {
            let (ga, gb) = (self.gap[a], self.gap[b]);
            match (ga.is_nan(), gb.is_nan()) {
                (true, true) => a.cmp(&b),
                (true, false) => std::cmp::Ordering::Greater,
                (false, true) => std::cmp::Ordering::Less,
                (false, false) => gb.total_cmp(&ga).then(a.cmp(&b)),
            }
        });
        ids
    }

    /// 1-based rank of every sample under [`order`](Self::order).
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.gap.len()];
        for (pos, id) in self.order().into_iter().enumerate() {
            ranks[id] = pos + 1;
        }
        ranks
    }
}

/// Gap from per-sample log-ratio arrays: `stat(IN) - stat(OUT)`.
pub fn gap_from_ratios(in_ratios: &[f64], out_ratios: &[f64], kind: GapKind) -> f64 {
    if in_ratios.is_empty() || out_ratios.is_empty() {
        return f64::NAN;
    }
    match kind {
        GapKind::MedianGap => median(in_ratios) - median(out_ratios),
        GapKind::MeanGap => mean(in_ratios) - mean(out_ratios),
    }
}

/// Ranking from the per-model attack results of one run.
pub fn gap_ranking_from_results(run_id: &str, results: &[AttackResult], kind: GapKind) -> GapRanking {
    let n = results.first().map_or(0, |r| r.scores.len());
    let mut gap = Vec::with_capacity(n);
    let mut excluded = SampleSet::new();
    for i in 0..n {
        let (mut ins, mut outs) = (Vec::new(), Vec::new());
        for r in results {
            if r.skipped.contains(&i) {
                continue;
            }
            if r.is_member[i] {
                ins.push(r.scores[i]);
            } else {
                outs.push(r.scores[i]);
            }
        }
        let g = gap_from_ratios(&ins, &outs, kind);
        if g.is_nan() {
            excluded.insert(i);
        }
        gap.push(g);
    }
    GapRanking {
        run_id: run_id.to_string(),
        gap,
        kind,
        excluded,
    }
}

/// Attacks every model of the run and ranks samples by their gap.
pub fn gap_ranking(engine: &LiraEngine<'_>, variant: Variant, kind: GapKind) -> Result<GapRanking> {
    let results = engine.attack_every_target(variant)?;
    Ok(gap_ranking_from_results(engine.bundle().run_id(), &results, kind))
}

fn top_count(q: f64, n: usize) -> usize {
    (((q * n as f64) / 100.0) + 1e-9).floor() as usize
}

/// The `floor(q N / 100)` highest-gap samples.
pub fn top_q(ranking: &GapRanking, q: f64) -> Result<SampleSet> {
    if !(q > 0.0 && q <= 100.0) {
        return Err(AuditError::InvalidParameter(format!("q must lie in (0,100], got {q}")));
    }
    let count = top_count(q, ranking.n_samples()).min(ranking.n_samples());
    Ok(ranking.order().into_iter().take(count).collect())
}

/// Spearman correlation of two runs' gaps on the intersection of their
/// top-q sets, skipping samples excluded from either run. NaN when that
/// intersection is empty or degenerate.
pub fn tail_spearman(r: &GapRanking, s: &GapRanking, q: f64) -> Result<f64> {
    check_universe(r, s)?;
    let common: Vec<usize> = top_q(r, q)?
        .intersection(&top_q(s, q)?)
        .copied()
        .filter(|&i| !r.gap[i].is_nan() && !s.gap[i].is_nan())
        .collect();
    let x: Vec<f64> = common.iter().map(|&i| r.gap[i]).collect();
    let y: Vec<f64> = common.iter().map(|&i| s.gap[i]).collect();
    Ok(spearman(&x, &y))
}

/// Spearman correlation over every sample with a defined gap in both runs.
pub fn global_spearman(r: &GapRanking, s: &GapRanking) -> Result<f64> {
    check_universe(r, s)?;
    let (x, y): (Vec<f64>, Vec<f64>) = r
        .gap
        .iter()
        .zip(&s.gap)
        .filter(|(a, b)| !a.is_nan() && !b.is_nan())
        .map(|(&a, &b)| (a, b))
        .unzip();
    Ok(spearman(&x, &y))
}

fn check_universe(r: &GapRanking, s: &GapRanking) -> Result<()> {
    if r.n_samples() != s.n_samples() {
        return Err(AuditError::UniverseMismatch(format!(
            "{} vs {} samples",
            r.n_samples(),
            s.n_samples()
        )));
    }
    Ok(())
}

/// For each run: of the samples that are top-q in some run but not in this
/// one, the fraction whose percentile rank here is within `q + delta`, one
/// entry per delta. `None` when nothing is displaced.
pub fn rank_displacement(runs: &[GapRanking], q: f64, deltas: &[f64]) -> Result<Vec<Option<Vec<f64>>>> {
    let max_delta = deltas.iter().copied().fold(0.0, f64::max);
    if deltas.iter().any(|d| *d < 0.0) || q + max_delta > 100.0 + 1e-9 {
        return Err(AuditError::InvalidParameter(format!(
            "need deltas >= 0 and q + max(delta) <= 100 (q={q}, max delta={max_delta})"
        )));
    }
    let Some(first) = runs.first() else {
        return Ok(Vec::new());
    };
    for r in runs {
        check_universe(first, r)?;
    }
    let tops: Vec<SampleSet> = runs.iter().map(|r| top_q(r, q)).collect::<Result<_>>()?;
    let union: SampleSet = tops.iter().flatten().copied().collect();
    let n = first.n_samples() as f64;

    Ok(runs
        .iter()
        .zip(&tops)
        .map(|(run, top)| {
            let displaced: Vec<usize> = union.difference(top).copied().collect();
            if displaced.is_empty() {
                return None;
            }
            let ranks = run.ranks();
            let pct: Vec<f64> = displaced.iter().map(|&i| ranks[i] as f64 / n * 100.0).collect();
            Some(
                deltas
                    .iter()
                    .map(|d| {
                        let within = pct.iter().filter(|&&p| p <= q + d + 1e-9).count();
                        within as f64 / pct.len() as f64
                    })
                    .collect(),
            )
        })
        .collect())
}
