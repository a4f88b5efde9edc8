//! Fixture builders shared by the benchmarks.

use annoexp_core::AnnotationRecord;

/// Attribute class counts of the default seven-attribute schema.
pub const COUNTS: [usize; 7] = [5, 6, 5, 5, 5, 5, 5];

/// Deterministic batch of `n` feature rows with schema-valid records.
pub fn batch(dim: usize, n: usize) -> Vec<(Vec<f64>, AnnotationRecord)> {
    (0..n)
        .map(|i| {
            let f = (0..dim).map(|j| ((i * 31 + j * 17) % 13) as f64 / 6.5 - 1.0).collect();
            let rec = AnnotationRecord {
                malignancy: i % 2,
                attributes: COUNTS.iter().map(|&c| (i + c) % c).collect(),
            };
            (f, rec)
        })
        .collect()
}
