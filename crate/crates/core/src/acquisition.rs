//! Annotation requests and pseudo annotations over the training pool.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AnnotationRecord, Dataset, FeatureMatrix};
use crate::error::{Error, Result};
use crate::predictor::{HierarchicalPredictor, kv_enum};
use crate::rng::{stream, stream_rng};

/// Ranking rule for annotation requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Lowest malignancy max-probability first.
    #[default]
    LeastConfidence,
    /// Highest summed entropy over all heads first.
    IntegratedEntropy,
    Random,
}

kv_enum!(Strategy {
    LeastConfidence => "least_confidence",
    IntegratedEntropy => "integrated_entropy",
    Random => "random",
});

/// Simulated annotator. Every ground-truth read made during training goes
/// through here and is logged.
#[derive(Debug)]
pub struct Oracle<'a> {
    dataset: &'a Dataset,
    reads: RefCell<Vec<usize>>,
}

impl<'a> Oracle<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        Self { dataset, reads: RefCell::new(Vec::new()) }
    }

    pub fn annotate(&self, row: usize) -> AnnotationRecord {
        self.reads.borrow_mut().push(row);
        self.dataset.record(row).clone()
    }

    pub fn read_count(&self) -> usize {
        self.reads.borrow().len()
    }

    /// Rows read so far, in read order.
    pub fn reads(&self) -> Vec<usize> {
        self.reads.borrow().clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Seed,
    Requested,
    Pseudo,
    Unused,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Seed => "seed",
            Group::Requested => "requested",
            Group::Pseudo => "pseudo",
            Group::Unused => "unused",
        }
    }
}

/// Partition of the training rows into seed / requested / pseudo / unused.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPool {
    /// Group of each dataset row; `None` for rows outside the training split.
    groups: Vec<Option<Group>>,
    annotated: BTreeMap<usize, AnnotationRecord>,
    pseudo: BTreeMap<usize, AnnotationRecord>,
}

impl LabelPool {
    pub fn new(n_rows: usize, train_rows: &[usize]) -> Self {
        let mut groups = vec![None; n_rows];
        for &r in train_rows {
            groups[r] = Some(Group::Unused);
        }
        Self { groups, annotated: BTreeMap::new(), pseudo: BTreeMap::new() }
    }

    pub fn group(&self, row: usize) -> Option<Group> {
        self.groups.get(row).copied().flatten()
    }

    fn rows_in(&self, group: Group) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| **g == Some(group))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn seed_rows(&self) -> Vec<usize> {
        self.rows_in(Group::Seed)
    }

    pub fn requested_rows(&self) -> Vec<usize> {
        self.rows_in(Group::Requested)
    }

    pub fn unused_rows(&self) -> Vec<usize> {
        self.rows_in(Group::Unused)
    }

    pub fn pseudo(&self) -> &BTreeMap<usize, AnnotationRecord> {
        &self.pseudo
    }

    /// Training rows without an oracle annotation (pseudo or unused).
    pub fn candidate_rows(&self) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| matches!(g, Some(Group::Pseudo | Group::Unused)))
            .map(|(i, _)| i)
            .collect()
    }

    fn annotate(&mut self, rows: &[usize], group: Group, oracle: &Oracle<'_>) -> Result<()> {
        for &row in rows {
            match self.group(row) {
                Some(Group::Pseudo | Group::Unused) => {}
                Some(g) => {
                    return Err(Error::Budget(format!("row {row} is already {}", g.as_str())));
                }
                None => return Err(Error::Budget(format!("row {row} is not a training sample"))),
            }
            self.pseudo.remove(&row);
            self.annotated.insert(row, oracle.annotate(row));
            self.groups[row] = Some(group);
        }
        Ok(())
    }

    pub fn add_seeds(&mut self, rows: &[usize], oracle: &Oracle<'_>) -> Result<()> {
        self.annotate(rows, Group::Seed, oracle)
    }

    pub fn add_requests(&mut self, rows: &[usize], oracle: &Oracle<'_>) -> Result<()> {
        self.annotate(rows, Group::Requested, oracle)
    }

    /// Replaces every pseudo annotation; candidates missing from `pseudo`
    /// become unused.
    pub fn replace_pseudo(&mut self, pseudo: BTreeMap<usize, AnnotationRecord>) {
        for g in self.groups.iter_mut() {
            if *g == Some(Group::Pseudo) {
                *g = Some(Group::Unused);
            }
        }
        for &row in pseudo.keys() {
            debug_assert_eq!(self.groups[row], Some(Group::Unused));
            self.groups[row] = Some(Group::Pseudo);
        }
        self.pseudo = pseudo;
    }

    pub fn clear_pseudo(&mut self) {
        self.replace_pseudo(BTreeMap::new());
    }

    /// Oracle-annotated rows (seed and requested) in row order.
    pub fn annotated(&self) -> &BTreeMap<usize, AnnotationRecord> {
        &self.annotated
    }

    /// Every labelled row with its record (oracle or pseudo), in row order.
    pub fn training_set(&self) -> Vec<(usize, &AnnotationRecord)> {
        let mut set: Vec<(usize, &AnnotationRecord)> = self
            .annotated
            .iter()
            .chain(&self.pseudo)
            .map(|(r, rec)| (*r, rec))
            .collect();
        set.sort_unstable_by_key(|(r, _)| *r);
        set
    }

    /// Disjoint cover of the training rows, with labels stored exactly for
    /// the seed, requested and pseudo groups.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (row, g) in self.groups.iter().enumerate() {
            let in_annotated = self.annotated.contains_key(&row);
            let in_pseudo = self.pseudo.contains_key(&row);
            let ok = match g {
                None | Some(Group::Unused) => !in_annotated && !in_pseudo,
                Some(Group::Seed | Group::Requested) => in_annotated && !in_pseudo,
                Some(Group::Pseudo) => in_pseudo && !in_annotated,
            };
            if !ok {
                return Err(format!("row {row} group {g:?} inconsistent with stored labels"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub row: usize,
    pub cls_confidence: f64,
    pub integrated_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AcquisitionScores {
    pub entries: Vec<ScoreEntry>,
}

impl AcquisitionScores {
    pub fn get(&self, row: usize) -> Option<&ScoreEntry> {
        self.entries.iter().find(|e| e.row == row)
    }
}

/// One forward pass per row; entries keep the order of `rows`.
pub fn score_pool(
    pred: &HierarchicalPredictor,
    features: &FeatureMatrix,
    rows: &[usize],
) -> AcquisitionScores {
    let entries = rows
        .par_iter()
        .map(|&row| {
            let out = pred.predict(features.row(row));
            ScoreEntry {
                row,
                cls_confidence: out.cls_confidence,
                integrated_entropy: out.integrated_entropy(),
            }
        })
        .collect();
    AcquisitionScores { entries }
}

/// Picks `k` rows to annotate. Ties go to the lowest row index.
pub fn select_requests(
    scores: &AcquisitionScores,
    strategy: Strategy,
    k: usize,
    rng_seed: u64,
) -> Result<Vec<usize>> {
    let n = scores.entries.len();
    if k > n {
        return Err(Error::Budget(format!("{k} requests exceed the pool of {n} samples")));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut entries = scores.entries.clone();
    let order: fn(&ScoreEntry, &ScoreEntry) -> std::cmp::Ordering = match strategy {
        Strategy::LeastConfidence => |a, b| {
            a.cls_confidence.total_cmp(&b.cls_confidence).then(a.row.cmp(&b.row))
        },
        Strategy::IntegratedEntropy => |a, b| {
            b.integrated_entropy.total_cmp(&a.integrated_entropy).then(a.row.cmp(&b.row))
        },
        Strategy::Random => {
            entries.sort_unstable_by_key(|e| e.row);
            let mut rng = stream_rng(rng_seed, &[stream::ACQUISITION]);
            let picked = rand::seq::index::sample(&mut rng, n, k);
            return Ok(picked.into_iter().map(|i| entries[i].row).collect());
        }
    };
    if k < n {
        entries.select_nth_unstable_by(k - 1, order);
        entries.truncate(k);
    }
    entries.sort_unstable_by(order);
    Ok(entries.into_iter().map(|e| e.row).collect())
}

/// Re-labels every candidate (non seed, non requested) row from `pred`:
/// argmax of all heads when the malignancy confidence reaches `threshold`,
/// otherwise the row becomes unused. Returns the number of pseudo labels.
pub fn assign_pseudo_labels(
    pred: &HierarchicalPredictor,
    features: &FeatureMatrix,
    pool: &mut LabelPool,
    threshold: f64,
) -> Result<usize> {
    if !(0.5..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "confidence threshold {threshold} outside [0.5, 1]"
        )));
    }
    let candidates = pool.candidate_rows();
    let labelled: Vec<Option<(usize, AnnotationRecord)>> = candidates
        .par_iter()
        .map(|&row| {
            let out = pred.predict(features.row(row));
            (out.cls_confidence >= threshold).then(|| (row, out.to_record()))
        })
        .collect();
    let pseudo: BTreeMap<usize, AnnotationRecord> = labelled.into_iter().flatten().collect();
    let count = pseudo.len();
    pool.replace_pseudo(pseudo);
    Ok(count)
}

/// CSV of `id,group,cls_confidence,integrated_entropy` for every training row.
pub fn write_trace(
    path: &Path,
    dataset: &Dataset,
    pool: &LabelPool,
    scores: &AcquisitionScores,
) -> Result<()> {
    let mut out = String::from("id,group,cls_confidence,integrated_entropy\n");
    let lookup: BTreeMap<usize, &ScoreEntry> = scores.entries.iter().map(|e| (e.row, e)).collect();
    for &row in dataset.train_rows() {
        let group = pool.group(row).map_or("", Group::as_str);
        match lookup.get(&row) {
            Some(e) => out.push_str(&format!(
                "{},{group},{},{}\n",
                dataset.id(row),
                e.cls_confidence,
                e.integrated_entropy
            )),
            None => out.push_str(&format!("{},{group},,\n", dataset.id(row))),
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AttributeSchema;
    use crate::predictor::{OptimizerState, PredictorOptions, sgd_step};
    use crate::synth::{SynthConfig, generate_synthetic};

    fn entries(confs: &[f64]) -> AcquisitionScores {
        AcquisitionScores {
            entries: confs
                .iter()
                .enumerate()
                .map(|(row, &c)| ScoreEntry { row, cls_confidence: c, integrated_entropy: 1.0 - c })
                .collect(),
        }
    }

    fn small_dataset() -> Dataset {
        generate_synthetic(&SynthConfig {
            n_train: 30,
            n_test: 10,
            dim: 4,
            n_modes: 2,
            mode_separation: 8.0,
            attr_flip_prob: 0.0,
            schema: AttributeSchema::new([("a", 3), ("b", 4)]).unwrap(),
            rng_seed: 1,
        })
        .unwrap()
    }

    #[test]
    fn least_confidence_picks_minimum() {
        let scores = entries(&[0.9, 0.55, 0.7]);
        assert_eq!(select_requests(&scores, Strategy::LeastConfidence, 1, 0).unwrap(), vec![1]);
        assert_eq!(select_requests(&scores, Strategy::IntegratedEntropy, 2, 0).unwrap(), vec![1, 2]);
    }

    #[test]
    fn ties_prefer_low_rows() {
        let scores = entries(&[0.6, 0.6, 0.6, 0.6]);
        assert_eq!(select_requests(&scores, Strategy::LeastConfidence, 2, 0).unwrap(), vec![0, 1]);
        assert_eq!(select_requests(&scores, Strategy::IntegratedEntropy, 2, 0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn random_is_seeded() {
        let scores = entries(&[0.5; 20]);
        let a = select_requests(&scores, Strategy::Random, 5, 3).unwrap();
        let b = select_requests(&scores, Strategy::Random, 5, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(select_requests(&scores, Strategy::Random, 21, 3).is_err());
    }

    #[test]
    fn uniform_predictor_scores() {
        let ds = small_dataset();
        let mut pred = HierarchicalPredictor::new(4, &[3, 4], PredictorOptions::default(), 0);
        pred.params_mut().fill(0.0);
        let scores = score_pool(&pred, ds.features(), ds.train_rows());
        let max_entropy = 2f64.ln() + 3f64.ln() + 4f64.ln();
        for e in &scores.entries {
            assert_eq!(e.cls_confidence, 0.5);
            assert!((e.integrated_entropy - max_entropy).abs() < 1e-12);
        }
    }

    #[test]
    fn confident_predictor_scores() {
        let mut pred = HierarchicalPredictor::new(1, &[], PredictorOptions::default(), 0);
        pred.params_mut().fill(0.0);
        pred.params_mut().cls_head.bias = vec![800.0, -800.0];
        let out = pred.predict(&[1.0]);
        assert_eq!(out.cls_confidence, 1.0);
        assert_eq!(out.integrated_entropy(), 0.0);
    }

    #[test]
    fn threshold_half_labels_everything() {
        let ds = small_dataset();
        let oracle = Oracle::new(&ds);
        let mut pool = LabelPool::new(ds.len(), ds.train_rows());
        let seeds = &ds.train_rows()[..2];
        pool.add_seeds(seeds, &oracle).unwrap();
        let pred = HierarchicalPredictor::new(4, &[3, 4], PredictorOptions::default(), 0);
        let n = assign_pseudo_labels(&pred, ds.features(), &mut pool, 0.5).unwrap();
        assert_eq!(n, 28);
        assert!(pool.unused_rows().is_empty());
        pool.check_invariants().unwrap();
        assert_eq!(oracle.read_count(), 2);

        let n = assign_pseudo_labels(&pred, ds.features(), &mut pool, 1.0).unwrap();
        assert_eq!(n, 0);
        assert_eq!(pool.unused_rows().len(), 28);
        pool.check_invariants().unwrap();

        assert!(assign_pseudo_labels(&pred, ds.features(), &mut pool, 0.4).is_err());
    }

    #[test]
    fn overfit_sample_gets_its_true_pseudo_label() {
        let ds = small_dataset();
        let row = ds.train_rows()[3];
        let truth = ds.record(row).clone();
        let mut pred = HierarchicalPredictor::new(4, &[3, 4], PredictorOptions::default(), 2);
        let mut opt = OptimizerState::new(&pred, 0.9, 0.05, 1);
        for _ in 0..400 {
            let g = pred.compute_gradients([(ds.features().row(row), &truth)]);
            sgd_step(&mut pred, &mut opt, &g, 0.05);
        }
        assert!(pred.predict(ds.features().row(row)).cls_confidence > 0.9);

        let mut pool = LabelPool::new(ds.len(), ds.train_rows());
        assign_pseudo_labels(&pred, ds.features(), &mut pool, 0.9).unwrap();
        assert_eq!(pool.pseudo().get(&row), Some(&truth));
    }

    #[test]
    fn requested_labels_come_from_oracle() {
        let ds = small_dataset();
        let oracle = Oracle::new(&ds);
        let mut pool = LabelPool::new(ds.len(), ds.train_rows());
        let pred = HierarchicalPredictor::new(4, &[3, 4], PredictorOptions::default(), 0);
        assign_pseudo_labels(&pred, ds.features(), &mut pool, 0.5).unwrap();
        let row = ds.train_rows()[5];
        pool.add_requests(&[row], &oracle).unwrap();
        assert_eq!(pool.annotated()[&row], *ds.record(row));
        assert!(!pool.pseudo().contains_key(&row));
        pool.check_invariants().unwrap();
        assert!(pool.add_requests(&[row], &oracle).is_err());
        assert!(pool.add_requests(&[ds.test_rows()[0]], &oracle).is_err());
        assert_eq!(oracle.reads(), vec![row]);
    }
}
