//! Datasets, CSV ingestion, the synthetic two-square generator and
//! feature standardization.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn from_sign(x: f64) -> Label {
        if x >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Positive => "+1",
            Label::Negative => "-1",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "+1" => Ok(Label::Positive),
            "-1" => Ok(Label::Negative),
            other => Err(Error::InvalidInput(format!(
                "invalid label '{other}' (expected 1, +1 or -1)"
            ))),
        }
    }
}

/// Labelled training or test data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidInput(
                "dataset must contain at least one sample".into(),
            ));
        }
        if inputs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                found: labels.len(),
            });
        }
        let d = inputs[0].len();
        if d == 0 {
            return Err(Error::InvalidInput(
                "samples must have at least one feature".into(),
            ));
        }
        for (i, x) in inputs.iter().enumerate() {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "sample {i} has a non-finite feature"
                )));
            }
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Writes `features…,label` rows without a header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, |w| {
            for (x, y) in self.inputs.iter().zip(&self.labels) {
                write_row(w, x)?;
                writeln!(w, ",{y}")?;
            }
            Ok(())
        })
    }
}

fn write_row<W: Write + ?Sized>(w: &mut W, x: &[f64]) -> std::io::Result<()> {
    for (j, v) in x.iter().enumerate() {
        if j > 0 {
            w.write_all(b",")?;
        }
        // Shortest representation that parses back to the same f64.
        write!(w, "{v:?}")?;
    }
    Ok(())
}

/// Writes a feature-only CSV with an appended label column.
pub fn write_labelled_csv(path: &Path, inputs: &[Vec<f64>], labels: &[Label]) -> Result<()> {
    if inputs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            found: labels.len(),
        });
    }
    crate::io::write_atomic(path, |w| {
        for (x, y) in inputs.iter().zip(labels) {
            write_row(w, x)?;
            writeln!(w, ",{y}")?;
        }
        Ok(())
    })
}

/// Lower-left and upper-right corners of the positive and negative squares.
pub const POSITIVE_REGION: (f64, f64) = (-3.0, 10.0);
pub const NEGATIVE_REGION: (f64, f64) = (-10.0, 3.0);

/// Draws the two-square synthetic problem.
///
/// Half of each set is uniform on `[-3, 10]²` with label +1 and half on
/// `[-10, 3]²` with label −1. The squares overlap on `[-3, 3]²`, so
/// the classes are not separable. Randomness comes from a ChaCha8 stream
/// seeded with `seed`; the same seed yields the same datasets everywhere.
pub fn generate_synthetic(n_train: usize, n_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    for (name, n) in [("n_train", n_train), ("n_test", n_test)] {
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "{name} must be even and at least 2, got {n}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = Uniform::new_inclusive(POSITIVE_REGION.0, POSITIVE_REGION.1).expect("valid range");
    let neg = Uniform::new_inclusive(NEGATIVE_REGION.0, NEGATIVE_REGION.1).expect("valid range");

    let mut draw = |n: usize| -> Result<Dataset> {
        let half = n / 2;
        let mut inputs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..half {
            inputs.push(vec![pos.sample(&mut rng), pos.sample(&mut rng)]);
            labels.push(Label::Positive);
        }
        for _ in 0..half {
            inputs.push(vec![neg.sample(&mut rng), neg.sample(&mut rng)]);
            labels.push(Label::Negative);
        }
        Dataset::new(inputs, labels)
    };
    let train = draw(n_train)?;
    let test = draw(n_test)?;
    Ok((train, test))
}

/// Raw parsed CSV rows, after header detection.
struct Rows {
    /// 1-based line number of each record.
    lines: Vec<usize>,
    fields: Vec<Vec<String>>,
}

fn read_rows(path: &Path) -> Result<Rows> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut lines = Vec::new();
    let mut fields = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        lines.push(line);
        fields.push(record.iter().map(str::to_owned).collect());
    }
    if fields.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "file contains no rows".into(),
        });
    }
    // Header: a first row with any non-numeric feature field.
    let first: &Vec<String> = &fields[0];
    let is_header = first
        .iter()
        .any(|f| f.parse::<f64>().is_err() && f.parse::<Label>().is_err());
    if is_header {
        lines.remove(0);
        fields.remove(0);
    }
    if fields.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "file contains a header but no data rows".into(),
        });
    }
    Ok(Rows { lines, fields })
}

fn parse_features(fields: &[String], line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .enumerate()
        .map(|(j, f)| match f.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Parse {
                line,
                message: format!("column {}: '{f}' is not a finite number", j + 1),
            }),
        })
        .collect()
}

/// Loads a labelled CSV whose last column is the label (`1`, `+1` or `-1`).
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let rows = read_rows(path)?;
    let width = rows.fields[0].len();
    if width < 2 {
        return Err(Error::Parse {
            line: rows.lines[0],
            message: "need at least one feature column and a label column".into(),
        });
    }
    let mut inputs = Vec::with_capacity(rows.fields.len());
    let mut labels = Vec::with_capacity(rows.fields.len());
    for (fields, &line) in rows.fields.iter().zip(&rows.lines) {
        if fields.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} columns, found {}", fields.len()),
            });
        }
        inputs.push(parse_features(&fields[..width - 1], line)?);
        let label = fields[width - 1]
            .parse::<Label>()
            .map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        labels.push(label);
    }
    Dataset::new(inputs, labels)
}

/// Loads a feature-only CSV (no label column).
pub fn load_features_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let rows = read_rows(path)?;
    let width = rows.fields[0].len();
    rows.fields
        .iter()
        .zip(&rows.lines)
        .map(|(fields, &line)| {
            if fields.len() != width {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {width} columns, found {}", fields.len()),
                });
            }
            parse_features(fields, line)
        })
        .collect()
}

/// Per-feature affine map fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    /// Divisors; features with negligible spread keep divisor 1.
    pub stds: Vec<f64>,
}

/// Features whose training standard deviation is below this are only centred.
pub const MIN_STD: f64 = 1e-12;

impl Standardization {
    pub fn fit(train: &Dataset) -> Self {
        let n = train.len() as f64;
        let d = train.dim();
        let mut means = vec![0.0; d];
        for x in train.inputs() {
            for (m, v) in means.iter_mut().zip(x) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; d];
        for x in train.inputs() {
            for ((s, v), m) in vars.iter_mut().zip(x).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stds = vars
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < MIN_STD {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Self { means, stds }
    }

    pub fn apply_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                found: data.dim(),
            });
        }
        Dataset::new(
            data.inputs().iter().map(|x| self.apply_point(x)).collect(),
            data.labels().to_vec(),
        )
    }
}

/// Z-scores `train` and every dataset in `others` with statistics of `train`.
pub fn standardize(
    train: &Dataset,
    others: &[Dataset],
) -> Result<(Dataset, Vec<Dataset>, Standardization)> {
    let st = Standardization::fit(train);
    let scaled_train = st.apply(train)?;
    let scaled_others = others
        .iter()
        .map(|d| st.apply(d))
        .collect::<Result<Vec<_>>>()?;
    Ok((scaled_train, scaled_others, st))
}
