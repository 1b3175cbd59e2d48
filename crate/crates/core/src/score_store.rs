//! Score bundles: the per-model, per-sample, per-augmentation confidence
//! tensor every attack consumes, plus its on-disk directory container.
//!
//! A bundle directory holds:
//!
//! * `manifest.json` with dimensions and run metadata,
//! * `scores.bin`, little-endian `f32`, row-major `[model][sample][aug]`,
//! * `membership.bin`, one `0`/`1` byte per `(model, sample)`,
//! * `model_stats.csv` (optional), one row of losses/accuracies per model.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCORES_FILE: &str = "scores.bin";
pub const MEMBERSHIP_FILE: &str = "membership.bin";
pub const MODEL_STATS_FILE: &str = "model_stats.csv";
const MODEL_STATS_HEADER: &str = "model,train_loss,test_loss,train_acc,test_acc";

/// Default clamp applied before the logit transform.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-7;

/// Per-model utility record: mean cross-entropy losses and accuracies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub n_samples: usize,
    pub n_models: usize,
    pub n_augmentations: usize,
    pub dtype: String,
    pub balanced: bool,
    pub run_id: String,
    pub seed: u64,
    pub has_model_stats: bool,
}

/// Immutable score tensor with membership ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreBundle {
    n_samples: usize,
    n_models: usize,
    n_augmentations: usize,
    confidences: Vec<f32>,
    membership: Vec<bool>,
    model_stats: Option<Vec<ModelStats>>,
    run_id: String,
    seed: u64,
    balanced: bool,
}

/// Builder-style inputs for [`ScoreBundle::new`].
#[derive(Clone, Debug, Default)]
pub struct BundleParts {
    pub n_samples: usize,
    pub n_models: usize,
    pub n_augmentations: usize,
    pub confidences: Vec<f32>,
    pub membership: Vec<bool>,
    pub model_stats: Option<Vec<ModelStats>>,
    pub run_id: String,
    pub seed: u64,
    pub balanced: bool,
}

impl ScoreBundle {
    /// Validates every invariant and assembles the bundle.
    pub fn new(parts: BundleParts) -> Result<Self> {
        let BundleParts {
            n_samples,
            n_models,
            n_augmentations,
            confidences,
            membership,
            model_stats,
            run_id,
            seed,
            balanced,
        } = parts;

        if n_samples == 0 || n_models == 0 || n_augmentations == 0 {
            return Err(AuditError::InvalidParameter(format!(
                "bundle dimensions must be positive (N={n_samples}, M={n_models}, A={n_augmentations})"
            )));
        }
        let expected = n_models * n_samples * n_augmentations;
        if confidences.len() != expected {
            return Err(AuditError::DimensionMismatch {
                what: "confidences",
                expected,
                found: confidences.len(),
            });
        }
        if membership.len() != n_models * n_samples {
            return Err(AuditError::DimensionMismatch {
                what: "membership",
                expected: n_models * n_samples,
                found: membership.len(),
            });
        }
        if let Some((idx, &value)) = confidences
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            let aug = idx % n_augmentations;
            let sample = (idx / n_augmentations) % n_samples;
            let model = idx / (n_augmentations * n_samples);
            return Err(AuditError::ConfidenceOutOfRange {
                model,
                sample,
                aug,
                value,
            });
        }
        if let Some(stats) = &model_stats {
            if stats.len() != n_models {
                return Err(AuditError::DimensionMismatch {
                    what: "model_stats rows",
                    expected: n_models,
                    found: stats.len(),
                });
            }
        }
        let bundle = Self {
            n_samples,
            n_models,
            n_augmentations,
            confidences,
            membership,
            model_stats,
            run_id,
            seed,
            balanced,
        };
        if balanced {
            bundle.check_balanced()?;
        }
        Ok(bundle)
    }

    /// Every sample must be a member in exactly `floor(M/2)` models.
    pub fn check_balanced(&self) -> Result<()> {
        let expected = self.n_models / 2;
        for sample in 0..self.n_samples {
            let count = self.member_count(sample);
            if count != expected {
                return Err(AuditError::Unbalanced {
                    sample,
                    count,
                    expected,
                });
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    pub fn n_augmentations(&self) -> usize {
        self.n_augmentations
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn balanced(&self) -> bool {
        self.balanced
    }

    pub fn model_stats(&self) -> Option<&[ModelStats]> {
        self.model_stats.as_deref()
    }

    /// Flat `[model][sample][aug]` confidences.
    pub fn confidences(&self) -> &[f32] {
        &self.confidences
    }

    /// Flat `[model][sample]` membership mask.
    pub fn membership(&self) -> &[bool] {
        &self.membership
    }

    #[inline]
    pub fn confidence(&self, model: usize, sample: usize, aug: usize) -> f32 {
        self.confidences[(model * self.n_samples + sample) * self.n_augmentations + aug]
    }

    /// All confidences of one model, contiguous `[sample][aug]`.
    pub fn model_slice(&self, model: usize) -> &[f32] {
        let len = self.n_samples * self.n_augmentations;
        &self.confidences[model * len..(model + 1) * len]
    }

    #[inline]
    pub fn is_member(&self, model: usize, sample: usize) -> bool {
        self.membership[model * self.n_samples + sample]
    }

    pub fn membership_row(&self, model: usize) -> &[bool] {
        &self.membership[model * self.n_samples..(model + 1) * self.n_samples]
    }

    /// Number of models that trained on `sample`.
    pub fn member_count(&self, sample: usize) -> usize {
        (0..self.n_models)
            .filter(|&m| self.is_member(m, sample))
            .count()
    }

    pub fn check_model(&self, model: usize) -> Result<()> {
        if model >= self.n_models {
            return Err(AuditError::ModelIndex {
                index: model,
                n_models: self.n_models,
            });
        }
        Ok(())
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: FORMAT_VERSION,
            n_samples: self.n_samples,
            n_models: self.n_models,
            n_augmentations: self.n_augmentations,
            dtype: "f32le".to_string(),
            balanced: self.balanced,
            run_id: self.run_id.clone(),
            seed: self.seed,
            has_model_stats: self.model_stats.is_some(),
        }
    }
}

/// Clamped logit `ln(p / (1 - p))` with `p` clamped into `[eps, 1 - eps]`.
pub fn logit_transform(p: f64, eps: f64) -> Result<f64> {
    if !p.is_finite() {
        return Err(AuditError::NonFinite(p));
    }
    let p = p.clamp(eps, 1.0 - eps);
    Ok((p / (1.0 - p)).ln())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AuditError + '_ {
    move |source| AuditError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bundle` into the directory `dir`, creating it if needed.
pub fn write_bundle(bundle: &ScoreBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&bundle.manifest()).map_err(|e| {
        AuditError::Manifest {
            path: manifest_path.clone(),
            message: e.to_string(),
        }
    })?;
    text.push('\n');
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;

    let scores_path = dir.join(SCORES_FILE);
    let mut bytes = Vec::with_capacity(bundle.confidences.len() * 4);
    for v in &bundle.confidences {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&scores_path, bytes).map_err(io_err(&scores_path))?;

    let membership_path = dir.join(MEMBERSHIP_FILE);
    let bytes: Vec<u8> = bundle.membership.iter().map(|&m| u8::from(m)).collect();
    fs::write(&membership_path, bytes).map_err(io_err(&membership_path))?;

    let stats_path = dir.join(MODEL_STATS_FILE);
    match &bundle.model_stats {
        Some(stats) => {
            let mut out = Vec::new();
            writeln!(out, "{MODEL_STATS_HEADER}").map_err(io_err(&stats_path))?;
            for (m, s) in stats.iter().enumerate() {
                writeln!(
                    out,
                    "{m},{},{},{},{}",
                    s.train_loss, s.test_loss, s.train_acc, s.test_acc
                )
                .map_err(io_err(&stats_path))?;
            }
            fs::write(&stats_path, out).map_err(io_err(&stats_path))?;
        }
        None => {
            if stats_path.exists() {
                fs::remove_file(&stats_path).map_err(io_err(&stats_path))?;
            }
        }
    }
    Ok(())
}

/// Loads and validates a bundle directory.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<ScoreBundle> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| AuditError::Manifest {
            path: manifest_path.clone(),
            message: e.to_string(),
        })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(AuditError::Manifest {
            path: manifest_path,
            message: format!("unsupported format_version {}", manifest.format_version),
        });
    }
    if manifest.dtype != "f32le" {
        return Err(AuditError::Manifest {
            path: manifest_path,
            message: format!("unsupported dtype {:?}", manifest.dtype),
        });
    }

    let (m, n, a) = (
        manifest.n_models,
        manifest.n_samples,
        manifest.n_augmentations,
    );

    let scores_path = dir.join(SCORES_FILE);
    let raw = fs::read(&scores_path).map_err(io_err(&scores_path))?;
    let expected = m * n * a * 4;
    if raw.len() != expected {
        return Err(AuditError::SizeMismatch {
            array: SCORES_FILE,
            expected,
            found: raw.len(),
        });
    }
    let confidences: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let membership_path = dir.join(MEMBERSHIP_FILE);
    let raw = fs::read(&membership_path).map_err(io_err(&membership_path))?;
    if raw.len() != m * n {
        return Err(AuditError::SizeMismatch {
            array: MEMBERSHIP_FILE,
            expected: m * n,
            found: raw.len(),
        });
    }
    let mut membership = Vec::with_capacity(raw.len());
    for (idx, &byte) in raw.iter().enumerate() {
        match byte {
            0 => membership.push(false),
            1 => membership.push(true),
            value => {
                return Err(AuditError::MembershipValue {
                    model: idx / n,
                    sample: idx % n,
                    value,
                })
            }
        }
    }

    let model_stats = if manifest.has_model_stats {
        Some(read_model_stats(&dir.join(MODEL_STATS_FILE), m)?)
    } else {
        None
    };

    ScoreBundle::new(BundleParts {
        n_samples: n,
        n_models: m,
        n_augmentations: a,
        confidences,
        membership,
        model_stats,
        run_id: manifest.run_id,
        seed: manifest.seed,
        balanced: manifest.balanced,
    })
}

fn read_model_stats(path: &PathBuf, n_models: usize) -> Result<Vec<ModelStats>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == MODEL_STATS_HEADER => {}
        other => {
            return Err(AuditError::ModelStats(format!(
                "bad header {:?}, expected {MODEL_STATS_HEADER:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut stats: Vec<Option<ModelStats>> = vec![None; n_models];
    for (line_no, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(AuditError::ModelStats(format!(
                "row {}: expected 5 fields, found {}",
                line_no + 1,
                fields.len()
            )));
        }
        let model: usize = fields[0].parse().map_err(|_| {
            AuditError::ModelStats(format!("row {}: bad model id {:?}", line_no + 1, fields[0]))
        })?;
        let mut vals = [0.0f64; 4];
        for (slot, field) in vals.iter_mut().zip(&fields[1..]) {
            *slot = field.parse().map_err(|_| {
                AuditError::ModelStats(format!("row {}: bad number {field:?}", line_no + 1))
            })?;
        }
        let slot = stats.get_mut(model).ok_or(AuditError::ModelIndex {
            index: model,
            n_models,
        })?;
        if slot.is_some() {
            return Err(AuditError::ModelStats(format!("duplicate row for model {model}")));
        }
        *slot = Some(ModelStats {
            train_loss: vals[0],
            test_loss: vals[1],
            train_acc: vals[2],
            test_acc: vals[3],
        });
    }
    stats
        .into_iter()
        .enumerate()
        .map(|(m, s)| s.ok_or_else(|| AuditError::ModelStats(format!("missing row for model {m}"))))
        .collect()
}

/// A list of bundles over the same sample universe.
#[derive(Clone, Debug)]
pub struct RunSet {
    bundles: Vec<ScoreBundle>,
}

impl RunSet {
    pub fn new(bundles: Vec<ScoreBundle>) -> Result<Self> {
        let Some(first) = bundles.first() else {
            return Err(AuditError::InvalidParameter("empty run set".into()));
        };
        let n = first.n_samples();
        for b in &bundles[1..] {
            if b.n_samples() != n {
                return Err(AuditError::UniverseMismatch(format!(
                    "run {:?} has N={} but run {:?} has N={n}",
                    b.run_id(),
                    b.n_samples(),
                    first.run_id()
                )));
            }
        }
        for (i, a) in bundles.iter().enumerate() {
            if bundles[..i].iter().any(|b| b.run_id() == a.run_id()) {
                return Err(AuditError::UniverseMismatch(format!(
                    "duplicate run_id {:?}",
                    a.run_id()
                )));
            }
        }
        Ok(Self { bundles })
    }

    pub fn bundles(&self) -> &[ScoreBundle] {
        &self.bundles
    }

    pub fn k(&self) -> usize {
        self.bundles.len()
    }

    pub fn n_samples(&self) -> usize {
        self.bundles[0].n_samples()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(stats: bool) -> ScoreBundle {
        let (m, n, a) = (2, 4, 1);
        let confidences = (0..m * n * a).map(|i| i as f32 / 10.0).collect();
        let membership = vec![true, false, true, false, false, true, false, true];
        ScoreBundle::new(BundleParts {
            n_samples: n,
            n_models: m,
            n_augmentations: a,
            confidences,
            membership,
            model_stats: stats.then(|| {
                vec![
                    ModelStats {
                        train_loss: 0.0032,
                        test_loss: 0.2272,
                        train_acc: 0.9994,
                        test_acc: 0.9363,
                    },
                    ModelStats {
                        train_loss: 0.1351,
                        test_loss: 0.2535,
                        train_acc: 0.9878,
                        test_acc: 0.9409,
                    },
                ]
            }),
            run_id: "toy".into(),
            seed: 7,
            balanced: true,
        })
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let b = toy(false);
        write_bundle(&b, dir.path()).unwrap();
        assert_eq!(load_bundle(dir.path()).unwrap(), b);
        assert!(!dir.path().join(MODEL_STATS_FILE).exists());
    }

    #[test]
    fn round_trip_with_stats() {
        let dir = tempfile::tempdir().unwrap();
        let b = toy(true);
        write_bundle(&b, dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.model_stats(), b.model_stats());
        assert_eq!(back, b);
    }

    #[test]
    fn truncated_scores() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&toy(false), dir.path()).unwrap();
        let path = dir.path().join(SCORES_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        match load_bundle(dir.path()) {
            Err(AuditError::SizeMismatch { array, expected, found }) => {
                assert_eq!(array, SCORES_FILE);
                assert_eq!(expected, 32);
                assert_eq!(found, 28);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_confidence_cites_index() {
        let (m, n, a) = (2, 8, 1);
        let mut confidences = vec![0.5f32; m * n * a];
        confidences[7] = 1.5;
        let err = ScoreBundle::new(BundleParts {
            n_samples: n,
            n_models: m,
            n_augmentations: a,
            confidences,
            membership: vec![false; m * n],
            ..Default::default()
        })
        .unwrap_err();
        assert!(matches!(
            err,
            AuditError::ConfidenceOutOfRange { model: 0, sample: 7, aug: 0, .. }
        ));
        assert!(err.to_string().contains("(model=0, sample=7, aug=0)"));
    }

    #[test]
    fn nan_confidence_rejected() {
        let err = ScoreBundle::new(BundleParts {
            n_samples: 2,
            n_models: 1,
            n_augmentations: 2,
            confidences: vec![0.1, 0.2, f32::NAN, 0.3],
            membership: vec![false; 2],
            ..Default::default()
        })
        .unwrap_err();
        assert!(matches!(
            err,
            AuditError::ConfidenceOutOfRange { model: 0, sample: 1, aug: 0, .. }
        ));
    }

    #[test]
    fn balanced_flag_enforced() {
        let err = ScoreBundle::new(BundleParts {
            n_samples: 2,
            n_models: 2,
            n_augmentations: 1,
            confidences: vec![0.5; 4],
            membership: vec![true, true, true, false],
            balanced: true,
            ..Default::default()
        })
        .unwrap_err();
        assert!(matches!(err, AuditError::Unbalanced { sample: 0, count: 2, expected: 1 }));
    }

    #[test]
    fn missing_file() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(AuditError::Io { .. })));
    }

    #[test]
    fn unwritable_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain-file");
        fs::write(&file, b"x").unwrap();
        let err = write_bundle(&toy(false), file.join("bundle")).unwrap_err();
        assert!(matches!(err, AuditError::Io { .. }));
    }

    #[test]
    fn bad_membership_byte() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&toy(false), dir.path()).unwrap();
        let path = dir.path().join(MEMBERSHIP_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes[5] = 3;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_bundle(dir.path()),
            Err(AuditError::MembershipValue { model: 1, sample: 1, value: 3 })
        ));
    }

    #[test]
    fn logit_values() {
        assert_eq!(logit_transform(0.5, DEFAULT_CLAMP_EPS).unwrap(), 0.0);
        // ln 9
        let v = logit_transform(0.9, DEFAULT_CLAMP_EPS).unwrap();
        assert!((v - 2.197_224_577_336_219_4).abs() < 1e-12);
        // ln((1 - 1e-7) / 1e-7)
        let v = logit_transform(1.0, DEFAULT_CLAMP_EPS).unwrap();
        assert!((v - 16.118_095_550_958_315).abs() < 1e-8);
        assert!(logit_transform(f64::NAN, DEFAULT_CLAMP_EPS).is_err());
        assert!(logit_transform(f64::INFINITY, DEFAULT_CLAMP_EPS).is_err());
    }

    #[test]
    fn runset_rejects_mismatch() {
        let a = toy(false);
        let mut parts_b = BundleParts {
            n_samples: 3,
            n_models: 1,
            n_augmentations: 1,
            confidences: vec![0.5; 3],
            membership: vec![false; 3],
            ..Default::default()
        };
        parts_b.run_id = "other".into();
        let b = ScoreBundle::new(parts_b).unwrap();
        assert!(matches!(
            RunSet::new(vec![a.clone(), b]),
            Err(AuditError::UniverseMismatch(_))
        ));
        assert!(RunSet::new(vec![a.clone(), a]).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn logit_monotone(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
                let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
                prop_assert!(
                    logit_transform(lo, DEFAULT_CLAMP_EPS).unwrap()
                        <= logit_transform(hi, DEFAULT_CLAMP_EPS).unwrap()
                );
            }

            #[test]
            fn logit_antisymmetric(p in DEFAULT_CLAMP_EPS..=(1.0 - DEFAULT_CLAMP_EPS)) {
                let a = logit_transform(p, DEFAULT_CLAMP_EPS).unwrap();
                let b = logit_transform(1.0 - p, DEFAULT_CLAMP_EPS).unwrap();
                prop_assert!((a + b).abs() <= 1e-8 * (1.0 + a.abs()));
            }

            #[test]
            fn write_load_identity(
                m in 1usize..4, n in 1usize..6, a in 1usize..3, seed in any::<u64>(),
                raw in proptest::collection::vec(0.0f32..=1.0, 72),
                mask in proptest::collection::vec(any::<bool>(), 24),
            ) {
                let b = ScoreBundle::new(BundleParts {
                    n_samples: n,
                    n_models: m,
                    n_augmentations: a,
                    confidences: raw[..m * n * a].to_vec(),
                    membership: mask[..m * n].to_vec(),
                    run_id: format!("r{seed}"),
                    seed,
                    ..Default::default()
                }).unwrap();
                let dir = tempfile::tempdir().unwrap();
                write_bundle(&b, dir.path()).unwrap();
                prop_assert_eq!(load_bundle(dir.path()).unwrap(), b);
            }
        }
    }
}
