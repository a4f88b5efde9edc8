//! Synthetic embedding datasets standing in for a learned feature space.
//!
//! Each Gaussian mode carries a malignancy label and one base label per
//! attribute. Mode centres sit on scaled coordinate axes so that adjacent
//! centres are `mode_separation` apart; samples are unit-variance isotropic
//! draws around their centre.

use rand::Rng as _;
use rand::seq::SliceRandom;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{
    AnnotationRecord, AnnotationTable, AttributeSchema, Dataset, FeatureMatrix, Split, SplitMap,
    assemble_dataset,
};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub n_modes: usize,
    pub mode_separation: f64,
    pub attr_flip_prob: f64,
    pub schema: AttributeSchema,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train: 500,
            n_test: 200,
            dim: 16,
            n_modes: 4,
            mode_separation: 8.0,
            attr_flip_prob: 0.05,
            schema: AttributeSchema::lidc_default(),
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("n_train", self.n_train),
            ("n_test", self.n_test),
            ("dim", self.dim),
            ("n_modes", self.n_modes),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if !(self.mode_separation >= 0.0 && self.mode_separation.is_finite()) {
            return Err(Error::config("mode_separation", "must be finite and >= 0"));
        }
        if !(0.0..=0.5).contains(&self.attr_flip_prob) {
            return Err(Error::config("attr_flip_prob", "must lie in [0, 0.5]"));
        }
        Ok(())
    }
}

/// Generator ground truth, for oracle checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    /// Mode of every dataset row.
    pub modes: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Noise-free record of each mode.
    pub mode_records: Vec<AnnotationRecord>,
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset> {
    generate_with_truth(config).map(|(ds, _)| ds)
}

/// Centre of `mode`: axis `mode % dim`, sign flipping every `dim` modes and the
/// radius growing every `2 * dim` modes.
fn mode_center(mode: usize, dim: usize, separation: f64) -> Vec<f64> {
    let scale = separation / std::f64::consts::SQRT_2;
    let axis = mode % dim;
    let sign = if (mode / dim).is_multiple_of(2) { 1.0 } else { -1.0 };
    let shell = (mode / (2 * dim)) as f64 + 1.0;
    let mut c = vec![0.0; dim];
    c[axis] = sign * scale * shell;
    c
}

pub fn generate_with_truth(config: &SynthConfig) -> Result<(Dataset, SynthTruth)> {
    config.validate()?;
    let mut rng = stream_rng(config.rng_seed, &[stream::SYNTH]);
    let counts = config.schema.class_counts();

    let centers: Vec<Vec<f64>> = (0..config.n_modes)
        .map(|k| mode_center(k, config.dim, config.mode_separation))
        .collect();
    // Malignancy alternates over modes; attribute base labels lean low for
    // benign modes and high for malignant ones.
    let mode_records: Vec<AnnotationRecord> = (0..config.n_modes)
        .map(|k| {
            let malignancy = k % 2;
            let attributes = counts
                .iter()
                .map(|&c| {
                    let half = c / 2;
                    if malignancy == 0 {
                        rng.random_range(0..half)
                    } else {
                        rng.random_range(half..c)
                    }
                })
                .collect();
            AnnotationRecord { malignancy, attributes }
        })
        .collect();

    let n = config.n_train + config.n_test;
    let mut slots: Vec<(Split, usize)> = (0..config.n_train)
        .map(|i| (Split::Train, i % config.n_modes))
        .chain((0..config.n_test).map(|i| (Split::Test, i % config.n_modes)))
        .collect();
    slots.shuffle(&mut rng);

    let width = n.to_string().len().max(5);
    let mut ids = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * config.dim);
    let mut records = Vec::with_capacity(n);
    let mut splits = Vec::with_capacity(n);
    let mut modes = Vec::with_capacity(n);
    for (row, &(split, mode)) in slots.iter().enumerate() {
        let id = format!("s{row:0width$}");
        for &c in &centers[mode] {
            let z: f64 = rng.sample(StandardNormal);
            data.push(c + z);
        }
        let base = &mode_records[mode];
        let attributes = base
            .attributes
            .iter()
            .zip(&counts)
            .map(|(&label, &c)| {
                if config.attr_flip_prob > 0.0 && rng.random_bool(config.attr_flip_prob) {
                    flip_to_neighbor(label, c, &mut rng)
                } else {
                    label
                }
            })
            .collect();
        records.push((
            id.clone(),
            AnnotationRecord { malignancy: base.malignancy, attributes },
        ));
        splits.push((id.clone(), split));
        ids.push(id);
        modes.push(mode);
    }

    let dataset = assemble_dataset(
        FeatureMatrix::new(ids, config.dim, data)?,
        AnnotationTable::new(config.schema.clone(), records)?,
        SplitMap::new(splits)?,
    )?;
    Ok((dataset, SynthTruth { modes, centers, mode_records }))
}

/// Uniform choice among the existing adjacent levels, so the result always
/// differs from `label`.
fn flip_to_neighbor(label: usize, class_count: usize, rng: &mut impl rand::Rng) -> usize {
    if label == 0 {
        1
    } else if label + 1 == class_count || rng.random_bool(0.5) {
        label - 1
    } else {
        label + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, flip: f64) -> SynthConfig {
        SynthConfig {
            n_train: 100,
            n_test: 40,
            dim: 8,
            n_modes: 2,
            mode_separation: 10.0,
            attr_flip_prob: flip,
            schema: AttributeSchema::lidc_default(),
            rng_seed: seed,
        }
    }

    #[test]
    fn no_flip_means_constant_labels_per_mode() {
        let (ds, truth) = generate_with_truth(&small(3, 0.0)).unwrap();
        assert_eq!(ds.len(), 140);
        assert_eq!(ds.train_rows().len(), 100);
        for row in 0..ds.len() {
            assert_eq!(ds.record(row), &truth.mode_records[truth.modes[row]]);
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate_synthetic(&small(11, 0.05)).unwrap();
        let b = generate_synthetic(&small(11, 0.05)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&small(12, 0.05)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn flip_rate_matches_config() {
        // 5000 x 7 attribute draws, each kept with probability 0.95
        let cfg = SynthConfig {
            n_train: 5000,
            attr_flip_prob: 0.05,
            ..small(5, 0.05)
        };
        let (ds, truth) = generate_with_truth(&cfg).unwrap();
        for attr in 0..cfg.schema.len() {
            let agree = ds
                .train_rows()
                .iter()
                .filter(|&&r| {
                    ds.record(r).attributes[attr]
                        == truth.mode_records[truth.modes[r]].attributes[attr]
                })
                .count();
            let rate = agree as f64 / 5000.0;
            assert!(rate >= 0.94, "attribute {attr}: agreement {rate}");
        }
    }

    #[test]
    fn flips_are_adjacent_levels() {
        let cfg = SynthConfig { attr_flip_prob: 0.5, ..small(9, 0.5) };
        let (ds, truth) = generate_with_truth(&cfg).unwrap();
        for row in 0..ds.len() {
            let base = &truth.mode_records[truth.modes[row]];
            for (a, b) in ds.record(row).attributes.iter().zip(&base.attributes) {
                assert!(a.abs_diff(*b) <= 1);
            }
        }
    }

    #[test]
    fn nearest_center_is_perfect_when_separated() {
        let cfg = SynthConfig { n_modes: 4, mode_separation: 8.0, ..small(21, 0.0) };
        let (ds, truth) = generate_with_truth(&cfg).unwrap();
        for &row in ds.test_rows() {
            let x = ds.features().row(row);
            let nearest = (0..cfg.n_modes)
                .min_by(|&a, &b| {
                    let da: f64 = x.iter().zip(&truth.centers[a]).map(|(p, q)| (p - q).powi(2)).sum();
                    let db: f64 = x.iter().zip(&truth.centers[b]).map(|(p, q)| (p - q).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(
                truth.mode_records[nearest].malignancy,
                ds.record(row).malignancy
            );
        }
    }

    #[test]
    fn class_balance_per_split() {
        let cfg = SynthConfig { n_train: 101, n_test: 41, n_modes: 3, ..small(2, 0.0) };
        let (ds, truth) = generate_with_truth(&cfg).unwrap();
        for (rows, n) in [(ds.train_rows(), 101usize), (ds.test_rows(), 41)] {
            for mode in 0..3 {
                let count = rows.iter().filter(|&&r| truth.modes[r] == mode).count();
                assert!(count.abs_diff(n / 3) <= 1, "mode {mode}: {count}");
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(generate_synthetic(&SynthConfig { n_modes: 0, ..small(0, 0.0) }).is_err());
        assert!(generate_synthetic(&SynthConfig { attr_flip_prob: 0.6, ..small(0, 0.0) }).is_err());
        assert!(generate_synthetic(&SynthConfig { dim: 0, ..small(0, 0.0) }).is_err());
    }
}
