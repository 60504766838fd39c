//! Sparse binary-classification datasets: LIBSVM ingestion, subsampling and
//! seeded synthetic generation.

use std::io::{BufRead, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::sampling::RngStream;

/// One labelled sparse row `(a_i, b_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub label: f64,
}

impl SparseRow {
    /// Builds a row, dropping explicit zeros. Indices must be strictly increasing.
    pub fn new(indices: Vec<usize>, values: Vec<f64>, label: f64) -> Result<Self> {
        if indices.len() != values.len() {
            return config("row indices and values differ in length");
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return config("row indices must be strictly increasing");
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return config(format!("row value {v} is not finite"));
        }
        if label != 1.0 && label != -1.0 {
            return config(format!("row label {label} is not -1 or +1"));
        }
        let (indices, values) = indices.into_iter().zip(values).filter(|(_, v)| *v != 0.0).unzip();
        Ok(Self { indices, values, label })
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `<a_i, x>` against a dense vector.
    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&j, &v)| v * x[j]).sum()
    }
}

/// An immutable set of labelled rows of dimension `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    dim: usize,
    rows: Vec<SparseRow>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, rows: Vec<SparseRow>, dim: usize) -> Result<Self> {
        if rows.is_empty() {
            return config("dataset has no rows");
        }
        if dim == 0 {
            return config("dataset dimension must be positive");
        }
        for (i, row) in rows.iter().enumerate() {
            if row.indices.last().is_some_and(|&j| j >= dim) {
                return config(format!("row {i} has a column index beyond dimension {dim}"));
            }
        }
        Ok(Self {
            name: name.into(),
            dim,
            rows,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &SparseRow {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(SparseRow::nnz).sum()
    }

    /// Fraction of nonzero entries in the design matrix.
    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.len() as f64 * self.dim as f64)
    }
}

/// Options for [`parse_libsvm`].
#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub name: String,
    /// Declared dimension; the result uses `max(declared, max index + 1)`.
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LabelConvention {
    PlusMinusOne,
    ZeroOne,
    OneTwo,
}

impl LabelConvention {
    fn detect(seen: &[f64]) -> Option<Self> {
        let within = |allowed: &[f64]| seen.iter().all(|l| allowed.contains(l));
        if within(&[-1.0, 1.0]) {
            Some(Self::PlusMinusOne)
        } else if within(&[0.0, 1.0]) {
            Some(Self::ZeroOne)
        } else if within(&[1.0, 2.0]) {
            Some(Self::OneTwo)
        } else {
            None
        }
    }

    fn normalize(self, raw: f64) -> f64 {
        match self {
            Self::PlusMinusOne => raw,
            Self::ZeroOne => 2.0 * raw - 1.0,
            Self::OneTwo => 2.0 * raw - 3.0,
        }
    }
}

/// Parses LIBSVM text (`label idx:val idx:val ...`, 1-based indices).
///
/// Labels may follow the `{-1,+1}`, `{0,1}` or `{1,2}` convention; the
/// convention is detected over the whole file and mapped to `{-1,+1}`.
/// Blank lines and `#` comments are skipped.
pub fn parse_libsvm<R: BufRead>(reader: R, options: &ParseOptions) -> Result<Dataset> {
    let mut raw: Vec<(usize, f64, Vec<usize>, Vec<f64>)> = Vec::new();
    let mut labels_seen: Vec<f64> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse { line: lineno, message };
        let mut tokens = content.split_ascii_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| perr(format!("invalid label `{label_tok}`")))?;
        if !label.is_finite() {
            return Err(perr(format!("invalid label `{label_tok}`")));
        }
        if !labels_seen.contains(&label) {
            labels_seen.push(label);
            if LabelConvention::detect(&labels_seen).is_none() {
                return Err(perr(format!(
                    "label `{label_tok}` does not fit the {{-1,+1}}, {{0,1}} or {{1,2}} conventions"
                )));
            }
        }

        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| perr(format!("malformed feature `{tok}`, expected idx:val")))?;
            let idx: usize = idx.parse().map_err(|_| perr(format!("invalid feature index in `{tok}`")))?;
            if idx == 0 {
                return Err(perr(format!("feature index in `{tok}` must be 1-based")));
            }
            let val: f64 = val.parse().map_err(|_| perr(format!("invalid feature value in `{tok}`")))?;
            if !val.is_finite() {
                return Err(perr(format!("non-finite feature value in `{tok}`")));
            }
            let col = idx - 1;
            if let Some(&prev) = indices.last() {
                if col == prev {
                    return Err(perr(format!("duplicate feature index {idx}")));
                }
                if col < prev {
                    return Err(perr(format!("feature index {idx} is not increasing")));
                }
            }
            max_index = max_index.max(idx);
            indices.push(col);
            values.push(val);
        }
        raw.push((lineno, label, indices, values));
    }

    if raw.is_empty() {
        return config("LIBSVM input contains no rows");
    }
    let convention = LabelConvention::detect(&labels_seen).expect("validated while parsing");
    let dim = options.dim.unwrap_or(0).max(max_index).max(1);
    let rows = raw
        .into_iter()
        .map(|(lineno, label, idx, val)| {
            SparseRow::new(idx, val, convention.normalize(label)).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(options.name.clone(), rows, dim)
}

/// Writes a dataset in LIBSVM format with `+1`/`-1` labels. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_libsvm<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    for row in dataset.rows() {
        write!(out, "{}", if row.label > 0.0 { "+1" } else { "-1" })?;
        for (&j, &v) in row.indices.iter().zip(&row.values) {
            write!(out, " {}:{}", j + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Sorted row indices of a uniform sample of `target` rows without replacement.
pub fn subsample_indices(n: usize, target: usize, seed: u64) -> Result<Vec<usize>> {
    if target == 0 || target > n {
        return config(format!("subsample size {target} must be in 1..={n}"));
    }
    let mut rng = RngStream::new(seed, 0);
    let mut perm: Vec<usize> = (0..n).collect();
    // Partial Fisher-Yates: the first `target` slots are the sample.
    for k in 0..target {
        let j = k + rng.below((n - k) as u64) as usize;
        perm.swap(k, j);
    }
    let mut chosen = perm[..target].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Uniform subsample of `target` rows, deterministic in `seed`. Row order is preserved.
pub fn subsample(dataset: &Dataset, target: usize, seed: u64) -> Result<Dataset> {
    let chosen = subsample_indices(dataset.len(), target, seed)?;
    let rows = chosen.iter().map(|&i| dataset.row(i).clone()).collect();
    Dataset::new(format!("{}[n={target}]", dataset.name()), rows, dataset.dim())
}

/// Parameters of a seeded synthetic classification problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    /// Ratio between the largest and smallest row norm (1 = all rows unit norm).
    pub spread: f64,
    /// Probability of flipping a planted label.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return config("synthetic spec needs n >= 1 and d >= 1");
        }
        if !(self.spread >= 1.0 && self.spread.is_finite()) {
            return config(format!("spread {} must be a finite value >= 1", self.spread));
        }
        if !(0.0..=0.5).contains(&self.noise) {
            return config(format!("label noise {} must be in [0, 0.5]", self.noise));
        }
        Ok(())
    }
}

/// Dense Gaussian rows with controlled norm spread and labels from a planted
/// hyperplane.
///
/// Row `k` of a random permutation gets norm `spread^((k/(n-1))^2)`, so norms
/// range over `[1, spread]` with most rows near the low end. That skews the
/// `L_i` distribution the way importance sampling benefits from.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = RngStream::new(spec.seed, 0);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };

    let planted: Vec<f64> = (0..spec.d).map(|_| gauss()).collect();
    let mut raw_rows: Vec<Vec<f64>> = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        raw_rows.push((0..spec.d).map(|_| gauss()).collect());
    }

    let mut order_rng = RngStream::new(spec.seed, 1);
    let mut slots: Vec<usize> = (0..spec.n).collect();
    for k in (1..spec.n).rev() {
        let j = order_rng.below(k as u64 + 1) as usize;
        slots.swap(k, j);
    }
    let mut label_rng = RngStream::new(spec.seed, 2);

    let mut rows = Vec::with_capacity(spec.n);
    for (i, mut a) in raw_rows.into_iter().enumerate() {
        let u = if spec.n > 1 {
            slots[i] as f64 / (spec.n - 1) as f64
        } else {
            0.0
        };
        let target = if spec.spread == 1.0 { 1.0 } else { spec.spread.powf(u * u) };
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { target / norm } else { 0.0 };
        a.iter_mut().for_each(|v| *v *= scale);

        let margin: f64 = a.iter().zip(&planted).map(|(x, w)| x * w).sum();
        let mut label = if margin >= 0.0 { 1.0 } else { -1.0 };
        if label_rng.next_f64() < spec.noise {
            label = -label;
        }
        let (indices, values): (Vec<usize>, Vec<f64>) =
            a.into_iter().enumerate().filter(|(_, v)| *v != 0.0).unzip();
        rows.push(SparseRow::new(indices, values, label)?);
    }
    Dataset::new(
        format!("synthetic-n{}-d{}-s{}", spec.n, spec.d, spec.seed),
        rows,
        spec.d,
    )
}

/// Reference constants for the public LIBSVM benchmark sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnownDataset {
    pub name: &'static str,
    pub file: &'static str,
    pub dim: usize,
    pub n_train: usize,
    /// Reported smoothness; this is the mean `‖a_i‖²/4` over rows.
    pub smoothness: f64,
    pub lambda: f64,
}

pub const KNOWN_DATASETS: [KnownDataset; 3] = [
    KnownDataset {
        name: "a9a",
        file: "a9a",
        dim: 123,
        n_train: 32_561,
        smoothness: 3.4672,
        lambda: 0.0005,
    },
    KnownDataset {
        name: "rcv1",
        file: "rcv1_train.binary",
        dim: 47_236,
        n_train: 20_242,
        smoothness: 0.25,
        lambda: 0.0001,
    },
    KnownDataset {
        name: "w7a",
        file: "w7a",
        dim: 300,
        n_train: 24_692,
        smoothness: 2.917,
        lambda: 0.005,
    },
];

pub const LIBSVM_DOWNLOAD_URL: &str = "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary.html";

pub fn known_dataset(name: &str) -> Option<&'static KnownDataset> {
    KNOWN_DATASETS.iter().find(|k| k.name == name || k.file == name)
}
