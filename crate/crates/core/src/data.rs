//! Seeded randomness, synthetic datasets and CSV ingestion.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Noise = 2,
    Labels = 3,
    Init = 4,
    Shuffle = 5,
}

/// ChaCha8 keyed by a 64-bit seed. Substreams share the key and differ in
/// the ChaCha stream id, so they never overlap.
///
/// Normals use Box–Muller on `(u1, u2)` with `u1 = 1 − uniform()`, emitting
/// `r·cos(2πu2)` first and caching `r·sin(2πu2)` for the next call.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn substream(&self, stream: Stream) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream as u64);
        SeededRng {
            seed: self.seed,
            inner,
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * angle.sin());
        r * angle.cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Noise and label streams for generator inputs.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    noise: SeededRng,
    labels: SeededRng,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        let root = SeededRng::new(seed);
        NoiseSource {
            noise: root.substream(Stream::Noise),
            labels: root.substream(Stream::Labels),
        }
    }
}

/// A batch of generator inputs: `z ~ N(0,1)` of shape `[B×nz]`, uniform
/// class labels and their one-hot encoding `[B×C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorInputs {
    pub noise: Tensor,
    pub labels: Vec<usize>,
    pub one_hot: Tensor,
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    if labels.is_empty() {
        return Err(Error::contract("one_hot of an empty label list"));
    }
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::contract(format!("label {l} outside {classes} classes")));
        }
        data[i * classes + l] = 1.0;
    }
    Tensor::new(vec![labels.len(), classes], data)
}

pub fn sample_noise_and_labels(
    src: &mut NoiseSource,
    batch: usize,
    noise_dim: usize,
    classes: usize,
) -> Result<GeneratorInputs> {
    if batch == 0 || noise_dim == 0 || classes < 2 {
        return Err(Error::contract(format!(
            "invalid sampling dims: batch {batch}, noise {noise_dim}, classes {classes}"
        )));
    }
    let z = (0..batch * noise_dim).map(|_| src.noise.normal()).collect();
    let labels: Vec<usize> = (0..batch).map(|_| src.labels.below(classes)).collect();
    Ok(GeneratorInputs {
        noise: Tensor::new(vec![batch, noise_dim], z)?,
        one_hot: one_hot(&labels, classes)?,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Per-column standardization fitted on the train split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns with zero variance; they standardize to 0.
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(features: &Tensor) -> Self {
        let (n, d) = (features.rows(), features.cols());
        let mut mean = vec![0.0; d];
        for r in 0..n {
            mean.iter_mut().zip(features.row(r)).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(features.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|s| (s / n as f64).sqrt()).collect();
        let constant = std.iter().map(|s| *s < 1e-12).collect();
        Standardizer { mean, std, constant }
    }

    pub fn apply(&self, features: &mut Tensor) {
        let d = self.mean.len();
        for row in features.data_mut().chunks_mut(d) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if self.constant[j] {
                    0.0
                } else {
                    (*v - self.mean[j]) / self.std[j]
                };
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub test: Split,
    pub num_classes: usize,
    pub provenance: String,
    pub standardizer: Option<Standardizer>,
}

impl Dataset {
    pub fn input_dim(&self) -> usize {
        self.train.features.cols()
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Distance of blob centers from the origin.
pub const BLOB_CENTER_RADIUS: f64 = 4.0;
pub const TRAIN_FRACTION: f64 = 0.8;

fn train_count(n: usize) -> usize {
    ((n as f64 * TRAIN_FRACTION).floor() as usize).clamp(1, n - 1)
}

fn stratified(rows: Vec<(Vec<f64>, usize)>, classes: usize, dim: usize) -> Result<(Split, Split)> {
    let mut by_class: Vec<Vec<Vec<f64>>> = vec![Vec::new(); classes];
    for (x, y) in rows {
        by_class[y].push(x);
    }
    let (mut train, mut test) = ((Vec::new(), Vec::new()), (Vec::new(), Vec::new()));
    for (c, members) in by_class.into_iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::contract(format!(
                "class {c} has {} samples; each split needs at least one",
                members.len()
            )));
        }
        let k = train_count(members.len());
        for (i, x) in members.into_iter().enumerate() {
            let side = if i < k { &mut train } else { &mut test };
            side.0.extend(x);
            side.1.push(c);
        }
    }
    let mk = |(data, labels): (Vec<f64>, Vec<usize>)| -> Result<Split> {
        Ok(Split {
            features: Tensor::new(vec![labels.len(), dim], data)?,
            labels,
        })
    };
    Ok((mk(train)?, mk(test)?))
}

/// Gaussian clusters with spread `spread` around centers `±R·e_(c mod d)`.
/// Needs `C ≤ 2d`. Each class is split 80/20 into train/test.
pub fn make_blobs(classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 || dim < 2 || per_class < 2 || classes > 2 * dim || !(spread >= 0.0) {
        return Err(Error::config(format!(
            "make_blobs: classes {classes}, per_class {per_class}, dim {dim}, spread {spread}"
        )));
    }
    let mut rng = SeededRng::new(seed).substream(Stream::Data);
    let mut rows = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let sign = if c < dim { 1.0 } else { -1.0 };
        let mut center = vec![0.0; dim];
        center[c % dim] = sign * BLOB_CENTER_RADIUS;
        for _ in 0..per_class {
            let x = center.iter().map(|m| m + spread * rng.normal()).collect();
            rows.push((x, c));
        }
    }
    let (train, test) = stratified(rows, classes, dim)?;
    Ok(Dataset {
        train,
        test,
        num_classes: classes,
        provenance: format!("blobs(classes={classes},per_class={per_class},dim={dim},spread={spread},seed={seed})"),
        standardizer: None,
    })
}

/// Concentric 2-D annuli; class `c` has radius in `[1+c−0.3, 1+c+0.3]`.
pub fn make_rings(classes: usize, per_class: usize, seed: u64) -> Result<Dataset> {
    if classes < 2 || per_class < 2 {
        return Err(Error::config(format!(
            "make_rings: classes {classes}, per_class {per_class}"
        )));
    }
    let mut rng = SeededRng::new(seed).substream(Stream::Data);
    let mut rows = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        for _ in 0..per_class {
            let r = 1.0 + c as f64 + rng.uniform_in(-0.3, 0.3);
            let a = rng.uniform_in(0.0, 2.0 * std::f64::consts::PI);
            rows.push((vec![r * a.cos(), r * a.sin()], c));
        }
    }
    let (train, test) = stratified(rows, classes, 2)?;
    Ok(Dataset {
        train,
        test,
        num_classes: classes,
        provenance: format!("rings(classes={classes},per_class={per_class},seed={seed})"),
        standardizer: None,
    })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

/// Parses a headered, comma-separated file. Features are standardized
/// with statistics from the train split; labels are either all
/// non-negative integers or arbitrary strings coded in sorted order.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    parse_csv(&bytes, path, label_column)
}

pub fn parse_csv(bytes: &[u8], path: &Path, label_column: &str) -> Result<Dataset> {
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = reader.headers().map_err(|e| io_err(path, e))?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::config(format!("{shown}: no label column '{label_column}'")))?;
    let dim = headers.len() - 1;
    if dim == 0 {
        return Err(Error::config(format!("{shown}: no feature columns")));
    }

    let mut feats = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            path: shown.clone(),
            line,
            msg: e.to_string(),
        })?;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                path: shown.clone(),
                line,
                msg: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let mut row = Vec::with_capacity(dim);
        for (j, field) in rec.iter().enumerate() {
            if j == label_idx {
                raw_labels.push(field.trim().to_string());
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: shown.clone(),
                line,
                msg: format!("column '{}' is not numeric: '{field}'", &headers[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: shown.clone(),
                    line,
                    msg: format!("column '{}' is not finite", &headers[j]),
                });
            }
            row.push(v);
        }
        feats.push(row);
    }
    if feats.is_empty() {
        return Err(Error::EmptyDataset(shown));
    }

    let labels: Vec<usize> = match raw_labels.iter().map(|s| s.parse::<usize>()).collect() {
        Ok(ints) => ints,
        Err(_) => {
            let mut names = raw_labels.clone();
            names.sort();
            names.dedup();
            raw_labels
                .iter()
                .map(|s| names.binary_search(s).expect("label present"))
                .collect()
        }
    };
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    if classes < 2 {
        return Err(Error::config(format!("{shown}: need at least 2 classes")));
    }
    let rows = feats.into_iter().zip(labels).collect();
    let (mut train, mut test) = stratified(rows, classes, dim)?;
    let standardizer = Standardizer::fit(&train.features);
    for (j, constant) in standardizer.constant.iter().enumerate() {
        if *constant {
            log::warn!("{shown}: feature column {j} is constant; standardized to 0");
        }
    }
    standardizer.apply(&mut train.features);
    standardizer.apply(&mut test.features);
    Ok(Dataset {
        train,
        test,
        num_classes: classes,
        provenance: format!("csv({shown},label={label_column})"),
        standardizer: Some(standardizer),
    })
}

/// Writes a split as CSV with columns `x0..x{d-1},label`.
pub fn write_csv(path: &Path, splits: &[&Split]) -> Result<()> {
    let dim = splits.first().map_or(0, |s| s.features.cols());
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let mut header: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for split in splits {
        for (r, label) in split.labels.iter().enumerate() {
            let mut rec: Vec<String> = split.features.row(r).iter().map(|v| format!("{v:?}")).collect();
            rec.push(label.to_string());
            w.write_record(&rec).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}
