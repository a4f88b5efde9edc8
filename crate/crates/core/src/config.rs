//! Flat `key = value` experiment configuration.
//!
//! Unspecified keys keep their defaults; unknown keys are rejected.
//! Overrides (`key=value` strings) are applied after the file. Relative
//! paths are taken relative to the working directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{AttributeSchema, Dataset, assemble_dataset, load_annotations, load_features,
    load_schema, load_split};
use crate::error::{Error, Result};
use crate::synth::{SynthConfig, generate_synthetic};
use crate::trainer::RunConfig;

/// Where the dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SynthConfig),
    /// Directory holding `features.csv`, `annotations.csv`, `split.csv` and
    /// optionally `schema.txt`.
    Directory(PathBuf),
    Files {
        features: PathBuf,
        annotations: PathBuf,
        split: PathBuf,
        /// Default attribute schema when absent.
        schema: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub data: DataSource,
    pub n_repeats: usize,
    pub parallel_repeats: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            data: DataSource::Synthetic(SynthConfig::default()),
            n_repeats: 1,
            parallel_repeats: false,
            output_dir: PathBuf::from("runs"),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| Error::config(key, format!("cannot parse `{raw}`: {e}")))
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("expected a boolean, got `{raw}`"))),
    }
}

/// `name:count,name:count,...`
fn inline_schema(key: &str, raw: &str) -> Result<AttributeSchema> {
    if raw == "lidc" {
        return Ok(AttributeSchema::lidc_default());
    }
    let mut attrs = Vec::new();
    for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, count) = part
            .split_once(':')
            .ok_or_else(|| Error::config(key, format!("expected name:count, got `{part}`")))?;
        attrs.push((name.trim().to_string(), value::<usize>(key, count.trim())?));
    }
    AttributeSchema::new(attrs).map_err(|e| Error::config(key, e.to_string()))
}

fn schema_inline_text(schema: &AttributeSchema) -> String {
    schema
        .attributes()
        .iter()
        .map(|a| format!("{}:{}", a.name, a.class_count))
        .collect::<Vec<_>>()
        .join(",")
}

/// Raw path keys, resolved into a [`DataSource`] once all keys are applied.
#[derive(Default)]
struct PathKeys {
    data_dir: Option<PathBuf>,
    features: Option<PathBuf>,
    annotations: Option<PathBuf>,
    split: Option<PathBuf>,
    schema: Option<PathBuf>,
}

struct Builder {
    cfg: ExperimentConfig,
    synth: SynthConfig,
    paths: PathKeys,
}

impl Builder {
    fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let run = &mut self.cfg.run;
        match key {
            "seed_fraction" => run.seed_fraction = value(key, raw)?,
            "request_fraction" => run.request_fraction = value(key, raw)?,
            "seed_epochs" => run.seed_epochs = value(key, raw)?,
            "resume_epochs" => run.resume_epochs = value(key, raw)?,
            "quench_period" => run.quench_period = value(key, raw)?,
            "confidence_threshold" => run.confidence_threshold = value(key, raw)?,
            "strategy" => run.strategy = value(key, raw)?,
            "batch_size" => run.batch_size = value(key, raw)?,
            "momentum" => run.momentum = value(key, raw)?,
            "base_lr" => run.base_lr = value(key, raw)?,
            "rng_seed" => run.rng_seed = value(key, raw)?,
            "seeding" => run.seeding = value(key, raw)?,
            "kmeans_restarts" => run.kmeans_restarts = value(key, raw)?,
            "seed_candidates" => run.seed_candidates = value(key, raw)?,
            "pseudo" => run.pseudo = value(key, raw)?,
            "quench" => run.quench = flag(key, raw)?,
            "schedule" => run.schedule = value(key, raw)?,
            "acquisition_rounds" => run.acquisition_rounds = value(key, raw)?,
            "attr_input" => run.attr_input = value(key, raw)?,
            "gradient_flow" => run.gradient_flow = value(key, raw)?,
            "n_repeats" => self.cfg.n_repeats = value(key, raw)?,
            "parallel_repeats" => self.cfg.parallel_repeats = flag(key, raw)?,
            "output_dir" => self.cfg.output_dir = raw.into(),
            "data_dir" => self.paths.data_dir = Some(raw.into()),
            "features" => self.paths.features = Some(raw.into()),
            "annotations" => self.paths.annotations = Some(raw.into()),
            "split" => self.paths.split = Some(raw.into()),
            "schema" => self.paths.schema = Some(raw.into()),
            "synth.n_train" => self.synth.n_train = value(key, raw)?,
            "synth.n_test" => self.synth.n_test = value(key, raw)?,
            "synth.dim" => self.synth.dim = value(key, raw)?,
            "synth.n_modes" => self.synth.n_modes = value(key, raw)?,
            "synth.mode_separation" => self.synth.mode_separation = value(key, raw)?,
            "synth.attr_flip_prob" => self.synth.attr_flip_prob = value(key, raw)?,
            "synth.attributes" => self.synth.schema = inline_schema(key, raw)?,
            "synth.rng_seed" => self.synth.rng_seed = value(key, raw)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    fn finish(self) -> Result<ExperimentConfig> {
        let Builder { mut cfg, synth, paths } = self;
        let file_keys = paths.features.is_some() || paths.annotations.is_some() || paths.split.is_some();
        cfg.data = match (paths.data_dir, file_keys) {
            (Some(_), true) => {
                return Err(Error::config("data_dir", "cannot be combined with features/annotations/split"));
            }
            (Some(dir), false) => {
                if paths.schema.is_some() {
                    return Err(Error::config("schema", "data_dir reads schema.txt from the directory"));
                }
                DataSource::Directory(dir)
            }
            (None, true) => {
                let need = |key: &str, p: Option<PathBuf>| {
                    p.ok_or_else(|| Error::config(key, "required when any data file is given"))
                };
                DataSource::Files {
                    features: need("features", paths.features)?,
                    annotations: need("annotations", paths.annotations)?,
                    split: need("split", paths.split)?,
                    schema: paths.schema,
                }
            }
            (None, false) => {
                if paths.schema.is_some() {
                    return Err(Error::config("schema", "only meaningful with data files"));
                }
                synth.validate()?;
                DataSource::Synthetic(synth)
            }
        };
        cfg.run.validate()?;
        if cfg.n_repeats == 0 {
            return Err(Error::config("n_repeats", "must be at least 1"));
        }
        let rest = cfg.run.resume_epochs % cfg.run.quench_period;
        if rest != 0 {
            log::info!(
                "quench_period {} does not divide resume_epochs {}: final segment of {rest} epoch(s) without a terminal quench",
                cfg.run.quench_period,
                cfg.run.resume_epochs
            );
        }
        Ok(cfg)
    }
}

/// Splits `key = value`; `None` for blank and comment lines.
fn split_line(line: &str) -> Option<std::result::Result<(&str, &str), String>> {
    let line = line.split_once('#').map_or(line, |(l, _)| l).trim();
    if line.is_empty() {
        return None;
    }
    Some(match line.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => Err(format!("expected `key = value`, got `{line}`")),
    })
}

/// Parses config text; `path` only labels errors.
pub fn parse_config(text: &str, path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut b = Builder {
        cfg: ExperimentConfig::default(),
        synth: SynthConfig::default(),
        paths: PathKeys::default(),
    };
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i as u64 + 1;
        match split_line(line) {
            None => {}
            Some(Err(msg)) => return Err(Error::parse(path, lineno, msg)),
            Some(Ok((k, v))) => {
                if !seen.insert(k.to_string()) {
                    return Err(Error::parse(path, lineno, format!("duplicate key `{k}`")));
                }
                b.set(k, v).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            }
        }
    }
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .filter(|(k, _)| !k.is_empty())
            .ok_or_else(|| Error::config(o.as_str(), "override must look like key=value"))?;
        b.set(k, v)?;
    }
    b.finish()
}

/// Reads and parses a config file; `None` means defaults plus overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_config(&text, p, overrides)
        }
        None => parse_config("", Path::new("<defaults>"), overrides),
    }
}

impl ExperimentConfig {
    /// Complete echo: parsing it back yields an equal config.
    pub fn to_text(&self) -> String {
        let r = &self.run;
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("seed_fraction", &r.seed_fraction);
        kv("request_fraction", &r.request_fraction);
        kv("seed_epochs", &r.seed_epochs);
        kv("resume_epochs", &r.resume_epochs);
        kv("quench_period", &r.quench_period);
        kv("confidence_threshold", &r.confidence_threshold);
        kv("strategy", &r.strategy);
        kv("batch_size", &r.batch_size);
        kv("momentum", &r.momentum);
        kv("base_lr", &r.base_lr);
        kv("rng_seed", &r.rng_seed);
        kv("seeding", &r.seeding);
        kv("kmeans_restarts", &r.kmeans_restarts);
        kv("seed_candidates", &r.seed_candidates);
        kv("pseudo", &r.pseudo);
        kv("quench", &r.quench);
        kv("schedule", &r.schedule);
        kv("acquisition_rounds", &r.acquisition_rounds);
        kv("attr_input", &r.attr_input);
        kv("gradient_flow", &r.gradient_flow);
        kv("n_repeats", &self.n_repeats);
        kv("parallel_repeats", &self.parallel_repeats);
        kv("output_dir", &self.output_dir.display());
        match &self.data {
            DataSource::Synthetic(s) => {
                kv("synth.n_train", &s.n_train);
                kv("synth.n_test", &s.n_test);
                kv("synth.dim", &s.dim);
                kv("synth.n_modes", &s.n_modes);
                kv("synth.mode_separation", &s.mode_separation);
                kv("synth.attr_flip_prob", &s.attr_flip_prob);
                kv("synth.attributes", &schema_inline_text(&s.schema));
                kv("synth.rng_seed", &s.rng_seed);
            }
            DataSource::Directory(dir) => kv("data_dir", &dir.display()),
            DataSource::Files { features, annotations, split, schema } => {
                kv("features", &features.display());
                kv("annotations", &annotations.display());
                kv("split", &split.display());
                if let Some(s) = schema {
                    kv("schema", &s.display());
                }
            }
        }
        out
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.data {
            DataSource::Synthetic(s) => generate_synthetic(s),
            DataSource::Directory(dir) => Dataset::load_dir(dir),
            DataSource::Files { features, annotations, split, schema } => {
                let schema = match schema {
                    Some(p) => load_schema(p)?,
                    None => AttributeSchema::lidc_default(),
                };
                assemble_dataset(
                    load_features(features)?,
                    load_annotations(annotations, &schema)?,
                    load_split(split)?,
                )
            }
        }
    }
}
