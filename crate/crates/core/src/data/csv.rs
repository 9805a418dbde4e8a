//! `mrdata v1` CSV files.
//!
//! ```text
//! # mrdata v1 classes=<C> annotators=<M> dim=<d>
//! f0,...,f<d-1>,a0,...,a<M-1>,gt
//! ```
//! Features are written in shortest round-trip decimal form; `gt` may be empty.

use std::fmt::Write as _;
use std::path::Path;

use super::{Dataset, DatasetMeta, MultiRaterExample};
use crate::error::{Error, Result};

pub fn to_csv_string(ds: &Dataset) -> String {
    let m = &ds.meta;
    let mut out = format!(
        "# mrdata v1 classes={} annotators={} dim={}\n",
        m.n_classes, m.n_annotators, m.feature_dim
    );
    let mut cols: Vec<String> = (0..m.feature_dim).map(|i| format!("f{i}")).collect();
    cols.extend((0..m.n_annotators).map(|j| format!("a{j}")));
    cols.push("gt".into());
    out.push_str(&cols.join(","));
    out.push('\n');
    for ex in &ds.examples {
        for v in &ex.features {
            let _ = write!(out, "{v},");
        }
        for a in &ex.annotations {
            let _ = write!(out, "{a},");
        }
        if let Some(g) = ex.ground_truth {
            let _ = write!(out, "{g}");
        }
        out.push('\n');
    }
    out
}

pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv_string(ds)).map_err(|e| Error::io(path, e))
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_csv_str(&text, &path.display().to_string())
}

fn parse_header(line: &str, err: impl Fn(usize, String) -> Error) -> Result<DatasetMeta> {
    let rest = line
        .strip_prefix("# mrdata v1")
        .ok_or_else(|| err(1, format!("expected '# mrdata v1 ...' header, found {line:?}")))?;
    let (mut classes, mut annotators, mut dim) = (None, None, None);
    for tok in rest.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| err(1, format!("malformed header field {tok:?}")))?;
        let value: usize = value
            .parse()
            .map_err(|_| err(1, format!("header field {key} is not a count")))?;
        match key {
            "classes" => classes = Some(value),
            "annotators" => annotators = Some(value),
            "dim" => dim = Some(value),
            other => return Err(err(1, format!("unknown header field {other:?}"))),
        }
    }
    match (classes, annotators, dim) {
        (Some(n_classes), Some(n_annotators), Some(feature_dim)) => Ok(DatasetMeta {
            n_classes,
            n_annotators,
            feature_dim,
            seed: 0,
        }),
        _ => Err(err(1, "header must declare classes, annotators and dim".into())),
    }
}

/// Parses the CSV text; `origin` names the source in error messages.
pub fn from_csv_str(text: &str, origin: &str) -> Result<Dataset> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let meta = parse_header(header, err)?;
    if meta.n_classes < 2 || meta.feature_dim == 0 {
        return Err(err(1, "need classes ≥ 2 and dim ≥ 1".into()));
    }
    let (d, m, c) = (meta.feature_dim, meta.n_annotators, meta.n_classes);
    let width = d + m + 1;

    let mut examples = Vec::new();
    if let Some((no, cols)) = lines.next() {
        let got: Vec<&str> = cols.split(',').collect();
        if got.len() != width {
            return Err(err(
                no,
                format!("column header has {} columns, header declares {width}", got.len()),
            ));
        }
        for (no, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width {
                return Err(err(
                    no,
                    format!("expected {width} fields, found {}", fields.len()),
                ));
            }
            let mut features = Vec::with_capacity(d);
            for (k, f) in fields[..d].iter().enumerate() {
                let v: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| err(no, format!("feature f{k} is not a number: {f:?}")))?;
                if !v.is_finite() {
                    return Err(err(no, format!("feature f{k} is not finite")));
                }
                features.push(v);
            }
            let class = |s: &str, col: &str| -> Result<usize> {
                let k: usize = s
                    .trim()
                    .parse()
                    .map_err(|_| err(no, format!("{col} is not a class index: {s:?}")))?;
                if k >= c {
                    return Err(err(no, format!("{col} = {k} outside [0, {c})")));
                }
                Ok(k)
            };
            let annotations = fields[d..d + m]
                .iter()
                .enumerate()
                .map(|(j, s)| class(s, &format!("a{j}")))
                .collect::<Result<Vec<_>>>()?;
            let gt_field = fields[d + m].trim();
            let ground_truth = if gt_field.is_empty() {
                None
            } else {
                Some(class(gt_field, "gt")?)
            };
            examples.push(MultiRaterExample {
                features,
                annotations,
                ground_truth,
            });
        }
    }
    Dataset::new(meta, examples)
}
