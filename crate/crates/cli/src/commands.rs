//! Subcommand implementations. Each returns a report; printing and exit
//! codes are handled by `main`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use itertools::Itertools;
use rayon::prelude::*;

use mia_audit::calibration::{achieved_rates, shadow_threshold, target_threshold, CalibrationSource};
use mia_audit::reproducibility::{
    filter_set, gap_ranking, global_spearman, kwise_agreement, rank_displacement, support_counts,
    tail_spearman, top_q, GapKind, GapRanking, SampleSet, DEFAULT_ENUMERATION_CAP,
};
use mia_audit::synth::{gen_bundle, SynthSpec};
use mia_audit::{
    aggregate, auc, load_bundle, loss_ratio, ppv, roc_curve, tpr_at_fpr, write_bundle, AgreementStat,
    AggregateStat, LiraEngine, RunSet, ScoreBundle, ThresholdPolicy, Variant,
};

use crate::report::{label, ReportTable};

/// Rate used to pair loss ratios with attack success.
pub const LOSS_RATIO_ALPHA: f64 = 1e-3;

pub struct AttackOptions {
    pub benchmark: String,
    pub variants: Vec<Variant>,
    pub source: CalibrationSource,
    pub alphas: Vec<f64>,
    pub priors: Vec<f64>,
}

pub struct ReproOptions {
    pub benchmark: String,
    pub variant: Variant,
    pub source: CalibrationSource,
    pub alphas: Vec<f64>,
    pub support_x: u32,
    pub zero_fp: bool,
    pub top_q: Vec<f64>,
    pub deltas: Vec<f64>,
    pub gap: GapKind,
    pub seed: u64,
}

pub fn validate(path: &Path) -> Result<String> {
    let b = load_bundle(path)?;
    Ok(format!(
        "valid bundle {:?}: {} samples, {} models, {} augmentations, balanced={}, model_stats={}",
        b.run_id(),
        b.n_samples(),
        b.n_models(),
        b.n_augmentations(),
        b.balanced(),
        b.model_stats().is_some()
    ))
}

/// Leave-one-out attack of every model, calibrated at each alpha.
pub fn attack(bundle: &ScoreBundle, opts: &AttackOptions) -> Result<ReportTable> {
    let engine = LiraEngine::new(bundle);
    let mut table = ReportTable::default();
    let bench = opts.benchmark.as_str();
    for &variant in &opts.variants {
        let name = variant.name();
        let results = engine
            .attack_every_target(variant)
            .with_context(|| format!("{name} attack"))?;
        let scored: Vec<(Vec<f64>, Vec<bool>)> = results.iter().map(|r| r.scored()).collect();
        let curves = scored
            .iter()
            .zip(&results)
            .map(|((s, l), r)| {
                roc_curve(s, l).with_context(|| {
                    format!(
                        "{name} on target {}: {} samples skipped for too few shadow observations",
                        r.target_index,
                        r.skipped.len()
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        table.push(bench, name, "auc", aggregate(&curves.iter().map(auc).collect_vec())?);

        for &alpha in &opts.alphas {
            let a = label(alpha);
            let tpr: Vec<f64> = curves.iter().map(|c| tpr_at_fpr(c, alpha)).collect();
            table.push(bench, name, format!("tpr@{a}"), aggregate(&tpr)?);

            let taus: Vec<f64> = (0..results.len())
                .into_par_iter()
                .map(|t| -> mia_audit::Result<f64> {
                    Ok(match opts.source {
                        CalibrationSource::Target => target_threshold(&scored[t].0, &scored[t].1, alpha)?.tau,
                        CalibrationSource::Shadow => shadow_threshold(&engine, t, variant, alpha)?.tau,
                    })
                })
                .collect::<mia_audit::Result<_>>()
                .with_context(|| format!("{} calibration of {name} at alpha {a}", opts.source.name()))?;
            let rates: Vec<(f64, f64)> = scored
                .iter()
                .zip(&taus)
                .map(|((s, l), &tau)| achieved_rates(s, l, tau))
                .collect::<mia_audit::Result<_>>()?;
            let tpr_prime = rates.iter().map(|r| r.0).collect_vec();
            let fpr_prime = rates.iter().map(|r| r.1).collect_vec();
            table.push(bench, name, format!("tpr_prime@{a}"), aggregate(&tpr_prime)?);
            table.push(bench, name, format!("fpr_prime@{a}"), aggregate(&fpr_prime)?);
            for &pi in &opts.priors {
                let values = rates.iter().map(|&(t, f)| ppv(t, f, pi)).collect_vec();
                table.push(bench, name, format!("ppv@{a}/pi={}", label(pi)), aggregate(&values)?);
            }
        }
    }
    Ok(table)
}

fn agreement_rows(table: &mut ReportTable, bench: &str, variant: &str, prefix: &str, stat: &AgreementStat) {
    let k = stat.k;
    let whole = |mean, std| AggregateStat {
        mean,
        std,
        n: stat.n_subsets,
        n_undefined: 0,
    };
    table.push(bench, variant, format!("{prefix}/k={k}/intersection"), whole(stat.mean_intersection, stat.std_intersection));
    table.push(bench, variant, format!("{prefix}/k={k}/union"), whole(stat.mean_union, stat.std_union));
    table.push(
        bench,
        variant,
        format!("{prefix}/k={k}/jaccard"),
        AggregateStat {
            mean: stat.mean_jaccard,
            std: stat.std_jaccard,
            n: stat.n_subsets - stat.n_empty_union,
            n_undefined: stat.n_empty_union,
        },
    );
}

fn pairwise<F>(rankings: &[GapRanking], f: F) -> Result<AggregateStat>
where
    F: Fn(&GapRanking, &GapRanking) -> mia_audit::Result<f64>,
{
    let values: Vec<f64> = rankings
        .iter()
        .tuple_combinations()
        .map(|(a, b)| f(a, b))
        .collect::<mia_audit::Result<_>>()?;
    Ok(aggregate(&values)?)
}

/// Cross-run agreement of thresholded sets and of gap rankings.
pub fn repro(runs: &RunSet, opts: &ReproOptions) -> Result<ReportTable> {
    let bundles = runs.bundles();
    if bundles.len() < 2 {
        bail!("reproducibility needs at least two runs, got {}", bundles.len());
    }
    let max_delta = opts.deltas.iter().copied().fold(0.0, f64::max);
    if let Some(q) = opts.top_q.iter().find(|&&q| q + max_delta > 100.0) {
        bail!("top-q {q} plus the largest delta {max_delta} exceeds 100");
    }
    let engines: Vec<LiraEngine<'_>> = bundles.iter().map(LiraEngine::new).collect();
    let mut table = ReportTable::default();
    let (bench, variant) = (opts.benchmark.as_str(), opts.variant.name());
    let k_max = bundles.len();

    for &alpha in &opts.alphas {
        let a = label(alpha);
        let policy = ThresholdPolicy::new(alpha, opts.source)?;
        let sets: Vec<SampleSet> = engines
            .iter()
            .map(|e| -> Result<SampleSet> {
                let support = support_counts(e, opts.variant, &policy)
                    .with_context(|| format!("support counts for run {:?}", e.bundle().run_id()))?;
                Ok(filter_set(&support, opts.support_x, opts.zero_fp)?)
            })
            .collect::<Result<_>>()?;
        let sizes = sets.iter().map(|s| s.len() as f64).collect_vec();
        table.push(bench, variant, format!("set_size@{a}"), aggregate(&sizes)?);
        for k in 2..=k_max {
            let stat = kwise_agreement(&sets, k, DEFAULT_ENUMERATION_CAP, opts.seed)?;
            agreement_rows(&mut table, bench, variant, &format!("kwise@{a}"), &stat);
        }
    }

    let rankings: Vec<GapRanking> = engines
        .iter()
        .map(|e| gap_ranking(e, opts.variant, opts.gap))
        .collect::<mia_audit::Result<_>>()?;
    let gap = opts.gap.name();
    table.push(bench, variant, format!("global_spearman/{gap}"), pairwise(&rankings, global_spearman)?);

    for &q in &opts.top_q {
        let ql = format!("{q}");
        table.push(
            bench,
            variant,
            format!("tail_spearman/{gap}@q={ql}"),
            pairwise(&rankings, |a, b| tail_spearman(a, b, q))?,
        );
        let tops: Vec<SampleSet> = rankings.iter().map(|r| top_q(r, q)).collect::<mia_audit::Result<_>>()?;
        for k in [2, k_max].into_iter().dedup() {
            let stat = kwise_agreement(&tops, k, DEFAULT_ENUMERATION_CAP, opts.seed)?;
            agreement_rows(&mut table, bench, variant, &format!("top_q/{gap}@q={ql}"), &stat);
        }
        if !opts.deltas.is_empty() {
            let displaced = rank_displacement(&rankings, q, &opts.deltas)?;
            for (j, delta) in opts.deltas.iter().enumerate() {
                let values = displaced
                    .iter()
                    .map(|d| d.as_ref().map_or(f64::NAN, |v| v[j]))
                    .collect_vec();
                table.push(
                    bench,
                    variant,
                    format!("displacement/{gap}@q={ql}/delta={delta}"),
                    aggregate(&values)?,
                );
            }
        }
    }
    Ok(table)
}

/// Resolves a preset name or a JSON spec file.
pub fn resolve_spec(scenario: &str) -> Result<SynthSpec> {
    let path = Path::new(scenario);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let spec: SynthSpec =
            serde_json::from_str(&text).with_context(|| format!("parsing spec file {}", path.display()))?;
        return Ok(spec);
    }
    Ok(SynthSpec::preset(scenario)?)
}

pub fn simulate(mut spec: SynthSpec, seed: Option<u64>, run_id: Option<String>, out: &Path) -> Result<String> {
    if let Some(seed) = seed {
        spec.seed = seed;
        // distinct seeds of one scenario must stay distinguishable in a run set
        if run_id.is_none() {
            spec.run_id = Some(match &spec.run_id {
                Some(base) => format!("{base}-seed{seed}"),
                None => format!("synth-{seed}"),
            });
        }
    }
    if run_id.is_some() {
        spec.run_id = run_id;
    }
    let bundle = gen_bundle(&spec)?;
    write_bundle(&bundle, out)?;
    Ok(format!(
        "wrote bundle {:?} ({} samples, {} models) to {}",
        bundle.run_id(),
        bundle.n_samples(),
        bundle.n_models(),
        out.display()
    ))
}

/// Per-model and aggregate test/train loss ratios, optionally paired with
/// each model's TPR at 0.1% FPR when attacked as the target.
pub fn loss_ratios(bundle: &ScoreBundle, benchmark: &str, with_attack: Option<Variant>) -> Result<ReportTable> {
    let Some(stats) = bundle.model_stats() else {
        bail!("bundle {:?} has no model statistics", bundle.run_id());
    };
    let ratios: Vec<f64> = stats
        .iter()
        .map(|s| loss_ratio(s.train_loss, s.test_loss))
        .collect::<mia_audit::Result<_>>()?;
    let mut table = ReportTable::default();
    let single = |v: f64| AggregateStat {
        mean: v,
        std: 0.0,
        n: 1,
        n_undefined: 0,
    };
    table.push(benchmark, "-", "loss_ratio", aggregate(&ratios)?);
    for (m, &r) in ratios.iter().enumerate() {
        table.push(benchmark, "-", format!("loss_ratio/model={m}"), single(r));
    }
    if let Some(variant) = with_attack {
        let a = label(LOSS_RATIO_ALPHA);
        let results = LiraEngine::new(bundle).attack_every_target(variant)?;
        let tprs: Vec<f64> = results
            .iter()
            .map(|r| {
                let (s, l) = r.scored();
                Ok(tpr_at_fpr(&roc_curve(&s, &l)?, LOSS_RATIO_ALPHA))
            })
            .collect::<mia_audit::Result<_>>()?;
        table.push(benchmark, variant.name(), format!("tpr@{a}"), aggregate(&tprs)?);
        for (m, &t) in tprs.iter().enumerate() {
            table.push(benchmark, variant.name(), format!("tpr@{a}/model={m}"), single(t));
        }
    }
    Ok(table)
}
