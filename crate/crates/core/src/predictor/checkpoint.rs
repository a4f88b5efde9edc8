//! Checkpoint directory: `manifest.json` plus `weights.bin`, a flat
//! little-endian f64 dump of the live parameters followed by the initial
//! snapshot, each in [`ParamSet::values`] order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HierarchicalPredictor, LinearHead, ParamSet, PredictorOptions};
use crate::data::AttributeSchema;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
const FORMAT: &str = "annoexp-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub dim: usize,
    pub class_counts: Vec<usize>,
    pub attribute_names: Vec<String>,
    pub schema_fingerprint: String,
    pub rng_seed: u64,
    pub options: PredictorOptions,
    /// Tensor layout of one parameter set; the file holds two (live, st0).
    pub tensors: Vec<TensorEntry>,
    pub values_per_set: usize,
}

fn tensor_entries(params: &ParamSet, names: &[String]) -> Vec<TensorEntry> {
    let mut out = Vec::new();
    for (head, name) in params.heads().zip(names.iter().map(String::as_str).chain(["malignancy"])) {
        out.push(TensorEntry {
            name: format!("{name}.weight"),
            shape: vec![head.classes(), head.inputs()],
        });
        out.push(TensorEntry { name: format!("{name}.bias"), shape: vec![head.classes()] });
    }
    out
}

pub fn save_checkpoint(
    dir: &Path,
    pred: &HierarchicalPredictor,
    schema: &AttributeSchema,
) -> Result<()> {
    if schema.class_counts() != pred.class_counts() {
        return Err(Error::Checkpoint("schema does not match predictor heads".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names: Vec<String> = schema.names().map(str::to_string).collect();
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        dim: pred.dim(),
        class_counts: pred.class_counts().to_vec(),
        attribute_names: names.clone(),
        schema_fingerprint: schema.fingerprint(),
        rng_seed: pred.rng_seed(),
        options: pred.options(),
        tensors: tensor_entries(pred.params(), &names),
        values_per_set: pred.params().len(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;

    let mut bytes = Vec::with_capacity(2 * manifest.values_per_set * 8);
    for v in pred.params().values().chain(pred.st0_snapshot().values()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let path = dir.join(WEIGHTS_FILE);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(dir: &Path, schema: &AttributeSchema) -> Result<HierarchicalPredictor> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
    if manifest.format != FORMAT {
        return Err(Error::Checkpoint(format!("unsupported format `{}`", manifest.format)));
    }
    if manifest.schema_fingerprint != schema.fingerprint() {
        return Err(Error::Checkpoint("checkpoint was written for a different schema".into()));
    }
    let path = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;

    let template = |fill: &mut dyn Iterator<Item = f64>| -> ParamSet {
        let attr_heads = manifest
            .class_counts
            .iter()
            .map(|&c| LinearHead::zeros(c, manifest.dim))
            .collect();
        let cls_inputs = manifest.dim + manifest.class_counts.iter().sum::<usize>();
        let mut set = ParamSet { attr_heads, cls_head: LinearHead::zeros(2, cls_inputs) };
        for (slot, v) in set.values_mut().zip(fill) {
            *slot = v;
        }
        set
    };
    let expected = {
        let probe = template(&mut std::iter::empty());
        if probe.len() != manifest.values_per_set {
            return Err(Error::Checkpoint("manifest shapes are inconsistent".into()));
        }
        probe.len()
    };
    if bytes.len() != 2 * expected * 8 {
        return Err(Error::Checkpoint(format!(
            "weights file holds {} bytes, expected {}",
            bytes.len(),
            2 * expected * 8
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let params = template(&mut values.by_ref().take(expected));
    let st0 = template(&mut values);
    if params.values().chain(st0.values()).any(|v| !v.is_finite()) {
        return Err(Error::Checkpoint("non-finite parameter".into()));
    }
    Ok(HierarchicalPredictor::from_parts(
        manifest.dim,
        manifest.class_counts,
        manifest.options,
        manifest.rng_seed,
        params,
        st0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AnnotationRecord;
    use crate::predictor::{OptimizerState, sgd_step};

    #[test]
    fn roundtrip_is_bit_exact() {
        let schema = AttributeSchema::new([("a", 3), ("b", 4)]).unwrap();
        let mut pred = HierarchicalPredictor::new(5, &[3, 4], PredictorOptions::default(), 42);
        let mut opt = OptimizerState::new(&pred, 0.9, 0.1, 8);
        let f = [0.1, 0.2, -0.3, 0.4, 1.5];
        let rec = AnnotationRecord { malignancy: 1, attributes: vec![2, 0] };
        let g = pred.compute_gradients([(&f[..], &rec)]);
        sgd_step(&mut pred, &mut opt, &g, 0.3);

        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &pred, &schema).unwrap();
        let loaded = load_checkpoint(dir.path(), &schema).unwrap();
        assert_eq!(loaded, pred);
        assert!(loaded.st0_snapshot().bit_eq(pred.st0_snapshot()));

        let other = AttributeSchema::new([("a", 3), ("c", 4)]).unwrap();
        assert!(load_checkpoint(dir.path(), &other).is_err());

        fs::write(dir.path().join(WEIGHTS_FILE), [0u8; 16]).unwrap();
        assert!(load_checkpoint(dir.path(), &schema).is_err());
    }
}
