//! Dataset types and the CSV / key-value file formats they are read from.
//!
//! Files are UTF-8, comma separated, `.` as decimal separator. Row order in
//! the feature file defines the sample index used everywhere else (tie
//! breaking, seed indices, traces).
//!
//! * `features.csv`: `id,f0,...,f{D-1}`
//! * `annotations.csv`: `id,malignancy,<attr1>,...,<attrM>` with 0-based codes
//! * `split.csv`: `id,split` where split is `train` or `test`
//! * schema: `name = class_count` lines, `#` comments

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Number of malignancy classes (benign / malignant).
pub const MALIGNANCY_CLASSES: usize = 2;

pub const FEATURES_FILE: &str = "features.csv";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";
pub const SPLIT_FILE: &str = "split.csv";
pub const SCHEMA_FILE: &str = "schema.txt";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub class_count: usize,
}

/// Ordered list of ordinal attributes and their label-space sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
}

impl AttributeSchema {
    pub fn new<S: Into<String>>(attributes: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let attributes: Vec<Attribute> = attributes
            .into_iter()
            .map(|(name, class_count)| Attribute {
                name: name.into(),
                class_count,
            })
            .collect();
        if attributes.is_empty() {
            return Err(Error::Schema("at least one attribute is required".into()));
        }
        let mut seen = HashSet::new();
        for attr in &attributes {
            if attr.name.trim().is_empty() {
                return Err(Error::Schema("attribute names must be non-empty".into()));
            }
            if attr.name == "id" || attr.name == "malignancy" {
                return Err(Error::Schema(format!("reserved attribute name `{}`", attr.name)));
            }
            if !seen.insert(attr.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute `{}`", attr.name)));
            }
            if attr.class_count < 2 {
                return Err(Error::Schema(format!(
                    "attribute `{}` needs at least 2 classes, got {}",
                    attr.name, attr.class_count
                )));
            }
        }
        Ok(Self { attributes })
    }

    /// LIDC-style rating scales with "internal structure" left out.
    pub fn lidc_default() -> Self {
        Self::new([
            ("subtlety", 5),
            ("calcification", 6),
            ("sphericity", 5),
            ("margin", 5),
            ("lobulation", 5),
            ("spiculation", 5),
            ("texture", 5),
        ])
        .expect("preset schema is valid")
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.class_count).collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Checks every label of `record` against the declared class ranges.
    pub fn validate(&self, record: &AnnotationRecord) -> Result<(), String> {
        if record.malignancy >= MALIGNANCY_CLASSES {
            return Err(format!("malignancy label out of range: {}", record.malignancy));
        }
        if record.attributes.len() != self.len() {
            return Err(format!(
                "expected {} attribute labels, got {}",
                self.len(),
                record.attributes.len()
            ));
        }
        for (attr, &label) in self.attributes.iter().zip(&record.attributes) {
            if label >= attr.class_count {
                return Err(format!(
                    "label out of range: {} = {} (classes 0..{})",
                    attr.name, label, attr.class_count
                ));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# attribute = class_count\n");
        for attr in &self.attributes {
            let _ = writeln!(out, "{} = {}", attr.name, attr.class_count);
        }
        out
    }

    pub fn parse_text(text: &str, path: &Path) -> Result<Self> {
        let mut attrs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = lineno as u64 + 1;
            let (name, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, lineno, "expected `name = class_count`"))?;
            let (name, value) = (name.trim(), value.trim());
            let count: usize = value
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("invalid class count `{value}`")))?;
            if name == "malignancy" {
                if count != MALIGNANCY_CLASSES {
                    return Err(Error::parse(path, lineno, "malignancy must have 2 classes"));
                }
                continue;
            }
            attrs.push((name.to_string(), count));
        }
        Self::new(attrs)
    }

    /// Hex SHA-256 of the canonical text form; stored in checkpoint manifests.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// N×D row-major embedding matrix with one id per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dataset("feature dimensionality must be at least 1".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::Dataset(format!(
                "{} values cannot form {} rows of dimension {}",
                data.len(),
                ids.len(),
                dim
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Dataset(format!("duplicate sample id `{id}`")));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dataset(format!(
                "non-finite value in row `{}`",
                ids[pos / dim]
            )));
        }
        Ok(Self { ids, dim, data })
    }

    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dataset("ragged feature rows".into()));
        }
        Self::new(ids, dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Ground-truth or pseudo labels for one sample; codes are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub malignancy: usize,
    pub attributes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTable {
    schema: AttributeSchema,
    records: IndexMap<String, AnnotationRecord>,
}

impl AnnotationTable {
    pub fn new(
        schema: AttributeSchema,
        records: impl IntoIterator<Item = (String, AnnotationRecord)>,
    ) -> Result<Self> {
        let mut map = IndexMap::new();
        for (id, record) in records {
            schema
                .validate(&record)
                .map_err(|msg| Error::Dataset(format!("record `{id}`: {msg}")))?;
            if map.insert(id.clone(), record).is_some() {
                return Err(Error::Dataset(format!("duplicate annotation id `{id}`")));
            }
        }
        Ok(Self {
            schema,
            records: map,
        })
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn get(&self, id: &str) -> Option<&AnnotationRecord> {
        self.records.get(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &AnnotationRecord)> {
        self.records.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitMap {
    assignment: IndexMap<String, Split>,
}

impl SplitMap {
    pub fn new(entries: impl IntoIterator<Item = (String, Split)>) -> Result<Self> {
        let mut assignment = IndexMap::new();
        for (id, split) in entries {
            if assignment.insert(id.clone(), split).is_some() {
                return Err(Error::Dataset(format!("duplicate split id `{id}`")));
            }
        }
        let split = Self { assignment };
        let (train, test) = split.counts();
        if train == 0 || test == 0 {
            return Err(Error::Dataset(format!(
                "both splits must be non-empty (train {train}, test {test})"
            )));
        }
        Ok(split)
    }

    pub fn get(&self, id: &str) -> Option<Split> {
        self.assignment.get(id).copied()
    }

    pub fn counts(&self) -> (usize, usize) {
        let train = self.assignment.values().filter(|s| **s == Split::Train).count();
        (train, self.assignment.len() - train)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Split)> {
        self.assignment.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Features, annotations and split joined on sample id, indexed by feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: FeatureMatrix,
    annotations: AnnotationTable,
    split: SplitMap,
    records: Vec<AnnotationRecord>,
    train_rows: Vec<usize>,
    test_rows: Vec<usize>,
}

impl Dataset {
    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn annotations(&self) -> &AnnotationTable {
        &self.annotations
    }

    pub fn split(&self) -> &SplitMap {
        &self.split
    }

    pub fn schema(&self) -> &AttributeSchema {
        self.annotations.schema()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Ground-truth record aligned to feature row `row`.
    ///
    /// Training code must go through [`crate::acquisition::Oracle`] instead so
    /// that annotation reads are counted.
    pub fn record(&self, row: usize) -> &AnnotationRecord {
        &self.records[row]
    }

    pub fn id(&self, row: usize) -> &str {
        &self.features.ids()[row]
    }

    pub fn train_rows(&self) -> &[usize] {
        &self.train_rows
    }

    pub fn test_rows(&self) -> &[usize] {
        &self.test_rows
    }

    /// Writes the three CSVs and the schema file into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_features(&dir.join(FEATURES_FILE), &self.features)?;
        write_annotations(&dir.join(ANNOTATIONS_FILE), &self.annotations)?;
        write_split(&dir.join(SPLIT_FILE), &self.split)?;
        write_schema(&dir.join(SCHEMA_FILE), self.schema())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let schema = load_schema(&dir.join(SCHEMA_FILE))?;
        assemble_dataset(
            load_features(&dir.join(FEATURES_FILE))?,
            load_annotations(&dir.join(ANNOTATIONS_FILE), &schema)?,
            load_split(&dir.join(SPLIT_FILE))?,
        )
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::parse(path, line, format!("{kind:?}")),
    }
}

fn headers(path: &Path, reader: &mut csv::Reader<fs::File>) -> Result<Vec<String>> {
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    Ok(headers.iter().map(|h| h.trim().to_string()).collect())
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let mut reader = csv_reader(path)?;
    let header = headers(path, &mut reader)?;
    if header.len() < 2 || header[0] != "id" {
        return Err(Error::parse(path, 1, "malformed header: expected `id,f0,...`"));
    }
    for (j, name) in header[1..].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(Error::parse(
                path,
                1,
                format!("malformed header: column {} is `{name}`, expected `f{j}`", j + 1),
            ));
        }
    }
    let dim = header.len() - 1;

    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != dim + 1 {
            return Err(Error::parse(
                path,
                line,
                format!("ragged row: expected {} fields, got {}", dim + 1, record.len()),
            ));
        }
        let id = record[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::parse(path, line, "empty sample id"));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate id `{id}`")));
        }
        for cell in record.iter().skip(1) {
            let value: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, line, format!("non-numeric value `{cell}`")))?;
            if !value.is_finite() {
                return Err(Error::parse(path, line, "non-finite value"));
            }
            data.push(value);
        }
        ids.push(id);
    }
    FeatureMatrix::new(ids, dim, data)
}

pub fn load_annotations(path: &Path, schema: &AttributeSchema) -> Result<AnnotationTable> {
    let mut reader = csv_reader(path)?;
    let header = headers(path, &mut reader)?;
    if header.len() < 2 || header[0] != "id" || header[1] != "malignancy" {
        return Err(Error::parse(path, 1, "malformed header: expected `id,malignancy,...`"));
    }
    // column index -> schema attribute index
    let mut columns = Vec::with_capacity(header.len() - 2);
    let mut covered = vec![false; schema.len()];
    for name in &header[2..] {
        let pos = schema
            .position(name)
            .ok_or_else(|| Error::parse(path, 1, format!("unknown attribute name `{name}`")))?;
        if std::mem::replace(&mut covered[pos], true) {
            return Err(Error::parse(path, 1, format!("duplicate column `{name}`")));
        }
        columns.push(pos);
    }
    if let Some(missing) = covered.iter().position(|c| !c) {
        return Err(Error::parse(
            path,
            1,
            format!("missing column `{}`", schema.attributes()[missing].name),
        ));
    }

    let mut records = IndexMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::parse(
                path,
                line,
                format!("ragged row: expected {} fields, got {}", header.len(), record.len()),
            ));
        }
        let parse_label = |cell: &str| -> Result<usize> {
            cell.trim()
                .parse()
                .map_err(|_| Error::parse(path, line, format!("invalid label `{cell}`")))
        };
        let id = record[0].trim().to_string();
        let malignancy = parse_label(&record[1])?;
        let mut attributes = vec![0; schema.len()];
        for (cell, &pos) in record.iter().skip(2).zip(&columns) {
            attributes[pos] = parse_label(cell)?;
        }
        let rec = AnnotationRecord {
            malignancy,
            attributes,
        };
        schema
            .validate(&rec)
            .map_err(|msg| Error::parse(path, line, msg))?;
        if records.insert(id.clone(), rec).is_some() {
            return Err(Error::parse(path, line, format!("duplicate id `{id}`")));
        }
    }
    AnnotationTable::new(schema.clone(), records)
}

pub fn load_split(path: &Path) -> Result<SplitMap> {
    let mut reader = csv_reader(path)?;
    let header = headers(path, &mut reader)?;
    if header != ["id", "split"] {
        return Err(Error::parse(path, 1, "malformed header: expected `id,split`"));
    }
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(Error::parse(path, line, "expected 2 fields"));
        }
        let id = record[0].trim().to_string();
        let split = match record[1].trim() {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(Error::parse(path, line, format!("unknown split token `{other}`")));
            }
        };
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate id `{id}`")));
        }
        entries.push((id, split));
    }
    SplitMap::new(entries)
}

pub fn load_schema(path: &Path) -> Result<AttributeSchema> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AttributeSchema::parse_text(&text, path)
}

/// Joins the three inputs; every id must appear in all of them.
pub fn assemble_dataset(
    features: FeatureMatrix,
    annotations: AnnotationTable,
    split: SplitMap,
) -> Result<Dataset> {
    let mut problems = Vec::new();
    for id in features.ids() {
        if annotations.get(id).is_none() {
            problems.push(format!("missing annotation for {id}"));
        }
        if split.get(id).is_none() {
            problems.push(format!("missing split for {id}"));
        }
    }
    let feature_ids: HashSet<&str> = features.ids().iter().map(String::as_str).collect();
    for (id, _) in annotations.iter() {
        if !feature_ids.contains(id) {
            problems.push(format!("missing features for {id}"));
        }
    }
    for (id, _) in split.iter() {
        if !feature_ids.contains(id) {
            problems.push(format!("split lists unknown id {id}"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Dataset(problems.join("; ")));
    }

    let records: Vec<AnnotationRecord> = features
        .ids()
        .iter()
        .map(|id| annotations.get(id).cloned().expect("checked above"))
        .collect();
    let (mut train_rows, mut test_rows) = (Vec::new(), Vec::new());
    for (row, id) in features.ids().iter().enumerate() {
        match split.get(id).expect("checked above") {
            Split::Train => train_rows.push(row),
            Split::Test => test_rows.push(row),
        }
    }
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::Dataset("train and test splits must be non-empty".into()));
    }
    Ok(Dataset {
        features,
        annotations,
        split,
        records,
        train_rows,
        test_rows,
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut out: std::io::BufWriter<fs::File>) -> Result<()> {
    out.flush().map_err(|e| Error::io(path, e))
}

/// Values are written in shortest round-trip form, so a reload is bit-exact.
pub fn write_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let mut out = create(path)?;
    let mut line = String::from("id");
    for j in 0..features.dim() {
        let _ = write!(line, ",f{j}");
    }
    writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    for (id, row) in features.ids().iter().zip(features.rows()) {
        line.clear();
        line.push_str(id);
        for v in row {
            let _ = write!(line, ",{v}");
        }
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    finish(path, out)
}

pub fn write_annotations(path: &Path, table: &AnnotationTable) -> Result<()> {
    let mut out = create(path)?;
    let mut line = String::from("id,malignancy");
    for name in table.schema().names() {
        let _ = write!(line, ",{name}");
    }
    writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    for (id, rec) in table.iter() {
        line.clear();
        let _ = write!(line, "{id},{}", rec.malignancy);
        for label in &rec.attributes {
            let _ = write!(line, ",{label}");
        }
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    finish(path, out)
}

pub fn write_split(path: &Path, split: &SplitMap) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "id,split").map_err(|e| Error::io(path, e))?;
    for (id, s) in split.iter() {
        writeln!(out, "{id},{}", s.as_str()).map_err(|e| Error::io(path, e))?;
    }
    finish(path, out)
}

pub fn write_schema(path: &Path, schema: &AttributeSchema) -> Result<()> {
    fs::write(path, schema.to_text()).map_err(|e| Error::io(path, e))
}
