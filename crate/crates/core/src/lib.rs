//! Membership-inference audit engine.
//!
//! Loads score bundles (per-model confidences plus membership ground
//! truth), runs likelihood-ratio attacks with leave-one-out targets,
//! calibrates thresholds from the target or from shadows, and reports ROC,
//! PPV and cross-run reproducibility statistics. A synthetic generator and
//! a naive reference attack support end-to-end checks without trained
//! models.

pub mod calibration;
pub mod error;
pub mod lira;
pub mod metrics;
pub mod reproducibility;
pub mod score_store;
pub mod stats;
pub mod synth;

pub use calibration::{
    achieved_rates, calibrate, shadow_threshold, target_threshold, CalibratedThreshold,
    CalibrationSource, QuantileRule, ThresholdPolicy,
};
pub use error::{AuditError, Result};
pub use lira::{
    attack_all, global_score, offline_p_out, offline_score, online_score, AttackResult,
    GaussianFit, LiraConfig, LiraEngine, VarianceMode, Variant,
};
pub use metrics::{
    aggregate, auc, loss_ratio, ppv, roc_curve, tpr_at_fpr, tpr_at_fpr_interpolated,
    AggregateStat, RocCurve, RocPoint,
};
pub use reproducibility::{
    filter_set, gap_ranking, global_spearman, jaccard, kwise_agreement, rank_displacement,
    support_counts, tail_spearman, top_q, AgreementStat, GapKind, GapRanking, SampleSet,
    VulnerableSet,
};
pub use score_store::{
    load_bundle, logit_transform, write_bundle, BundleParts, ModelStats, RunSet, ScoreBundle,
};
pub use synth::{analytic_roc, brute_oracle, gen_bundle, SynthSpec};
