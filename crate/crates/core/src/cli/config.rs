//! Flat `section.key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must appear
//! in [`KEYS`]; unknown or repeated keys are errors. Lists are
//! comma-separated. Serialization writes every key in schema order, so
//! `parse(to_text(c)) == c`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::consensus::ConsensusConfig;
use crate::data::{AnnotatorSpec, BlobConfig};
use crate::error::{Error, Result};
use crate::lecomh::LecomhConfig;
use crate::nnet::OptConfig;
use crate::pretrain::PretrainConfig;

/// `(key, description)` for every accepted key.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "global seed"),
    ("out_dir", "parent directory for generated run directories"),
    ("data.source", "blobs | csv"),
    ("data.train_csv", "training CSV when data.source = csv"),
    ("data.test_csv", "test CSV when data.source = csv"),
    ("data.n_classes", "number of classes"),
    ("data.dim", "feature dimension"),
    ("data.n_train", "training examples"),
    ("data.n_test", "test examples"),
    ("data.class_separation", "distance between class centres"),
    ("data.annotators", "comma list of cm:<accuracy> or idn:<noise rate>"),
    ("pretrain.learning_rate", "initial learning rate"),
    ("pretrain.momentum", "SGD momentum"),
    ("pretrain.weight_decay", "L2 weight decay"),
    ("pretrain.epochs", "epochs"),
    ("pretrain.batch_size", "mini-batch size"),
    ("pretrain.small_loss_keep_ratio", "fraction of each batch kept after warm-up"),
    ("pretrain.warmup_epochs", "epochs before small-loss selection"),
    ("pretrain.hidden", "hidden layer widths"),
    ("consensus.alpha_threshold", "minimum consensus quality to keep an example"),
    ("lecomh.lambda", "annotation cost weight"),
    ("lecomh.temperature", "Gumbel-softmax temperature"),
    ("lecomh.learning_rate", "initial learning rate"),
    ("lecomh.momentum", "SGD momentum"),
    ("lecomh.weight_decay", "L2 weight decay"),
    ("lecomh.epochs", "epochs"),
    ("lecomh.batch_size", "mini-batch size"),
    ("lecomh.freeze_classifier", "keep classifier weights fixed"),
    ("lecomh.hard_eval", "argmax selection at test time instead of a Gumbel draw"),
    ("lecomh.selection_hidden", "selection network hidden widths"),
    ("lecomh.collab_hidden", "collaboration network hidden widths"),
    ("eval.lambdas", "lambda values of the sweep"),
    ("eval.trials", "training seeds per lambda"),
    ("eval.coverages", "coverage targets of the deferral baseline"),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnnotatorKind {
    /// Symmetric confusion matrix with this diagonal.
    Confusion(f64),
    /// Instance-dependent flips at this mean rate.
    InstanceDependent(f64),
}

impl fmt::Display for AnnotatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotatorKind::Confusion(a) => write!(f, "cm:{a}"),
            AnnotatorKind::InstanceDependent(r) => write!(f, "idn:{r}"),
        }
    }
}

impl FromStr for AnnotatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, v) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| format!("{s:?} is not of the form cm:<accuracy> or idn:<rate>"))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("{v:?} is not a number"))?;
        match kind.trim() {
            "cm" if (0.0..=1.0).contains(&v) => Ok(AnnotatorKind::Confusion(v)),
            "cm" => Err(format!("accuracy {v} outside [0, 1]")),
            "idn" if (0.0..1.0).contains(&v) => Ok(AnnotatorKind::InstanceDependent(v)),
            "idn" => Err(format!("noise rate {v} outside [0, 1)")),
            other => Err(format!("unknown annotator kind {other:?}")),
        }
    }
}

impl AnnotatorKind {
    pub fn spec(&self, n_classes: usize, seed: u64, index: usize) -> Result<AnnotatorSpec> {
        match *self {
            AnnotatorKind::Confusion(a) => AnnotatorSpec::symmetric(n_classes, a),
            AnnotatorKind::InstanceDependent(r) => {
                AnnotatorSpec::instance_dependent(r, seed.wrapping_add(index as u64))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Blobs,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub source: DataSource,
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    pub blobs: BlobConfig,
    pub annotators: Vec<AnnotatorKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub lambdas: Vec<f64>,
    pub trials: usize,
    pub coverages: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataSection,
    pub pretrain: PretrainConfig,
    pub consensus: ConsensusConfig,
    pub lecomh: LecomhConfig,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: PathBuf::from("runs"),
            data: DataSection {
                source: DataSource::Blobs,
                train_csv: None,
                test_csv: None,
                blobs: BlobConfig {
                    n_classes: 4,
                    dim: 16,
                    n_train: 6000,
                    n_test: 2000,
                    class_separation: 3.3,
                },
                annotators: vec![
                    AnnotatorKind::Confusion(0.8),
                    AnnotatorKind::Confusion(0.9),
                    AnnotatorKind::Confusion(0.7),
                ],
            },
            pretrain: PretrainConfig::default(),
            consensus: ConsensusConfig::default(),
            lecomh: LecomhConfig {
                opt: OptConfig {
                    epochs: 60,
                    ..OptConfig::default()
                },
                collab_hidden: vec![64, 64],
                ..LecomhConfig::default()
            },
            eval: EvalSection {
                lambdas: vec![0.0, 0.05, 0.2, 0.5, 1.0, 5.0],
                trials: 1,
                coverages: (0..=10).map(|i| i as f64 / 10.0).collect(),
            },
        }
    }
}

fn list<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, ()> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| s.trim().parse().map_err(|_| ())).collect()
}

fn opt_entries(prefix: &str, o: &OptConfig) -> Vec<(String, String)> {
    vec![
        (format!("{prefix}.learning_rate"), o.learning_rate.to_string()),
        (format!("{prefix}.momentum"), o.momentum.to_string()),
        (format!("{prefix}.weight_decay"), o.weight_decay.to_string()),
        (format!("{prefix}.epochs"), o.epochs.to_string()),
        (format!("{prefix}.batch_size"), o.batch_size.to_string()),
    ]
}

fn key_error(key: &str, msg: impl fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

fn scalar<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| key_error(key, format!("cannot parse {v:?} as {}", std::any::type_name::<T>())))
}

fn set_opt(o: &mut OptConfig, field: &str, key: &str, v: &str) -> Result<bool> {
    match field {
        "learning_rate" => o.learning_rate = scalar(key, v)?,
        "momentum" => o.momentum = scalar(key, v)?,
        "weight_decay" => o.weight_decay = scalar(key, v)?,
        "epochs" => o.epochs = scalar(key, v)?,
        "batch_size" => o.batch_size = scalar(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

impl RunConfig {
    /// `(key, value)` pairs in schema order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let d = &self.data;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut e = vec![
            ("seed".to_string(), self.seed.to_string()),
            ("out_dir".into(), self.out_dir.display().to_string()),
            (
                "data.source".into(),
                match d.source {
                    DataSource::Blobs => "blobs".into(),
                    DataSource::Csv => "csv".into(),
                },
            ),
            ("data.train_csv".into(), path(&d.train_csv)),
            ("data.test_csv".into(), path(&d.test_csv)),
            ("data.n_classes".into(), d.blobs.n_classes.to_string()),
            ("data.dim".into(), d.blobs.dim.to_string()),
            ("data.n_train".into(), d.blobs.n_train.to_string()),
            ("data.n_test".into(), d.blobs.n_test.to_string()),
            ("data.class_separation".into(), d.blobs.class_separation.to_string()),
            ("data.annotators".into(), list(&d.annotators)),
        ];
        e.extend(opt_entries("pretrain", &self.pretrain.opt));
        e.extend([
            (
                "pretrain.small_loss_keep_ratio".into(),
                self.pretrain.small_loss_keep_ratio.to_string(),
            ),
            ("pretrain.warmup_epochs".into(), self.pretrain.warmup_epochs.to_string()),
            ("pretrain.hidden".into(), list(&self.pretrain.hidden)),
            (
                "consensus.alpha_threshold".into(),
                self.consensus.alpha_threshold.to_string(),
            ),
            ("lecomh.lambda".into(), self.lecomh.lambda.to_string()),
            ("lecomh.temperature".into(), self.lecomh.temperature.to_string()),
        ]);
        e.extend(opt_entries("lecomh", &self.lecomh.opt));
        e.extend([
            ("lecomh.freeze_classifier".into(), self.lecomh.freeze_classifier.to_string()),
            ("lecomh.hard_eval".into(), self.lecomh.hard_eval.to_string()),
            ("lecomh.selection_hidden".into(), list(&self.lecomh.selection_hidden)),
            ("lecomh.collab_hidden".into(), list(&self.lecomh.collab_hidden)),
            ("eval.lambdas".into(), list(&self.eval.lambdas)),
            ("eval.trials".into(), self.eval.trials.to_string()),
            ("eval.coverages".into(), list(&self.eval.coverages)),
        ]);
        e
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad_list = |_| key_error(key, format!("cannot parse list {v:?}"));
        let d = &mut self.data;
        match key {
            "seed" => self.seed = scalar(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "data.source" => {
                d.source = match v {
                    "blobs" => DataSource::Blobs,
                    "csv" => DataSource::Csv,
                    _ => return Err(key_error(key, format!("expected blobs or csv, got {v:?}"))),
                }
            }
            "data.train_csv" => d.train_csv = (!v.is_empty()).then(|| PathBuf::from(v)),
            "data.test_csv" => d.test_csv = (!v.is_empty()).then(|| PathBuf::from(v)),
            "data.n_classes" => d.blobs.n_classes = scalar(key, v)?,
            "data.dim" => d.blobs.dim = scalar(key, v)?,
            "data.n_train" => d.blobs.n_train = scalar(key, v)?,
            "data.n_test" => d.blobs.n_test = scalar(key, v)?,
            "data.class_separation" => d.blobs.class_separation = scalar(key, v)?,
            "data.annotators" => {
                d.annotators = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.parse().map_err(|m| key_error(key, m)))
                    .collect::<Result<_>>()?
            }
            "pretrain.small_loss_keep_ratio" => self.pretrain.small_loss_keep_ratio = scalar(key, v)?,
            "pretrain.warmup_epochs" => self.pretrain.warmup_epochs = scalar(key, v)?,
            "pretrain.hidden" => self.pretrain.hidden = parse_list(v).map_err(bad_list)?,
            "consensus.alpha_threshold" => self.consensus.alpha_threshold = scalar(key, v)?,
            "lecomh.lambda" => self.lecomh.lambda = scalar(key, v)?,
            "lecomh.temperature" => self.lecomh.temperature = scalar(key, v)?,
            "lecomh.freeze_classifier" => self.lecomh.freeze_classifier = scalar(key, v)?,
            "lecomh.hard_eval" => self.lecomh.hard_eval = scalar(key, v)?,
            "lecomh.selection_hidden" => self.lecomh.selection_hidden = parse_list(v).map_err(bad_list)?,
            "lecomh.collab_hidden" => self.lecomh.collab_hidden = parse_list(v).map_err(bad_list)?,
            "eval.lambdas" => self.eval.lambdas = parse_list(v).map_err(bad_list)?,
            "eval.trials" => self.eval.trials = scalar(key, v)?,
            "eval.coverages" => self.eval.coverages = parse_list(v).map_err(bad_list)?,
            _ => {
                let handled = match key.split_once('.') {
                    Some(("pretrain", f)) => set_opt(&mut self.pretrain.opt, f, key, v)?,
                    Some(("lecomh", f)) => set_opt(&mut self.lecomh.opt, f, key, v)?,
                    _ => false,
                };
                if !handled {
                    return Err(Error::Config(format!("unknown key {key:?}")));
                }
            }
        }
        Ok(())
    }

    /// Parses config text on top of the defaults and validates the result.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: origin.into(),
                line: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected key = value".into()))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(parse_err(format!("key {k:?} set twice")));
            }
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// First 8 hex digits of the SHA-256 of the canonical text.
    pub fn hash8(&self) -> String {
        hex::encode(&Sha256::digest(self.to_text().as_bytes())[..4])
    }

    pub fn validate(&self) -> Result<()> {
        let prefixed = |section: &str, r: Result<()>| {
            r.map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{section}: {m}")),
                other => other,
            })
        };
        let d = &self.data;
        match d.source {
            DataSource::Blobs => {
                if d.blobs.n_classes < 2 || d.blobs.dim < 2 {
                    return Err(key_error("data.n_classes", "need at least 2 classes and 2 dimensions"));
                }
                if !d.blobs.class_separation.is_finite() || d.blobs.class_separation < 0.0 {
                    return Err(key_error("data.class_separation", "must be a nonnegative number"));
                }
                if d.blobs.n_train == 0 || d.blobs.n_test == 0 {
                    return Err(key_error("data.n_train", "train and test sizes must be positive"));
                }
                if d.annotators.is_empty() {
                    return Err(key_error("data.annotators", "at least one annotator is required"));
                }
            }
            DataSource::Csv => {
                if d.train_csv.is_none() || d.test_csv.is_none() {
                    return Err(key_error(
                        "data.train_csv",
                        "data.source = csv needs data.train_csv and data.test_csv",
                    ));
                }
            }
        }
        prefixed("pretrain", self.pretrain.validate())?;
        let a = self.consensus.alpha_threshold;
        if !(0.0..1.0).contains(&a) {
            return Err(key_error("consensus.alpha_threshold", format!("{a} outside [0, 1)")));
        }
        prefixed("lecomh", self.lecomh.validate())?;
        if self.eval.lambdas.is_empty() {
            return Err(key_error("eval.lambdas", "at least one value is required"));
        }
        if let Some(l) = self.eval.lambdas.iter().find(|l| !l.is_finite() || **l < 0.0) {
            return Err(key_error("eval.lambdas", format!("{l} is not a nonnegative number")));
        }
        if self.eval.trials == 0 {
            return Err(key_error("eval.trials", "must be at least 1"));
        }
        if let Some(q) = self.eval.coverages.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return Err(key_error("eval.coverages", format!("{q} outside [0, 1]")));
        }
        Ok(())
    }

    /// Training seeds of the sweep, one per trial.
    pub fn trial_seeds(&self) -> Vec<u64> {
        (0..self.eval.trials as u64).map(|t| self.seed.wrapping_add(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_lists_every_serialized_key() {
        let keys: Vec<String> = RunConfig::default().entries().into_iter().map(|e| e.0).collect();
        let schema: Vec<&str> = KEYS.iter().map(|k| k.0).collect();
        assert_eq!(keys, schema);
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.set("lecomh.lambda", "0.30000000000000004").unwrap();
        c.set("data.annotators", "cm:0.75, idn:0.2").unwrap();
        c.set("pretrain.hidden", "").unwrap();
        let back = RunConfig::parse(&c.to_text(), "mem").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash8(), c.hash8());
        assert_eq!(c.hash8().len(), 8);
    }

    #[test]
    fn errors_name_the_key() {
        let err = RunConfig::parse("data.annotators = cm:0.9, idn:1.5\n", "x").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("data.annotators"), "{err}");
        let err = RunConfig::parse("lecomh.temprature = 2\n", "x").unwrap_err();
        assert!(err.to_string().contains("lecomh.temprature"));
        let err = RunConfig::parse("lecomh.epochs = many\n", "x").unwrap_err();
        assert!(err.to_string().contains("lecomh.epochs"));
        let err = RunConfig::parse("lecomh.temperature = 0\n", "x").unwrap_err();
        assert!(err.to_string().contains("lecomh"));
        let err = RunConfig::parse("seed = 1\nseed = 2\n", "cfg").unwrap_err();
        assert!(err.to_string().starts_with("cfg:2:"));
        let err = RunConfig::parse("seed 1\n", "cfg").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let c = RunConfig::parse("# smoke\n\nseed = 7\n  # indented\n", "x").unwrap();
        assert_eq!(c.seed, 7);
    }
}
