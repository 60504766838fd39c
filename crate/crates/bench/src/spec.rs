//! Declarative experiment files (TOML).
//!
//! ```toml
//! name = "synthetic-sc"
//! passes = 30
//! record_every = 1.0
//! seeds = [0, 1, 2]
//!
//! [dataset]
//! kind = "synthetic"
//! n = 500
//! d = 20
//! spread = 1.0
//! noise = 0.1
//! seed = 7
//!
//! [loss]
//! kind = "logistic"
//! lambda = 0.01
//!
//! [[optimizer]]
//! algorithm = "l2s-sc"
//! m = "n"
//! eta_over_l = [0.1, 0.5, 0.95]
//! ```

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use l2s::data::{
    generate_synthetic, known_dataset, parse_libsvm, Dataset, ParseOptions, SyntheticSpec, LIBSVM_DOWNLOAD_URL,
};
use l2s::model::{LogisticModel, LossModel};
use l2s::optim::{plan_step_size, Algorithm, OutputRule, ProblemConstants, Regime, StepSchedule};
use serde::{Deserialize, Serialize};

use crate::error::{config, BenchError, Result};

/// Overrides the directory that dataset files are resolved against.
pub const DATA_DIR_ENV: &str = "L2S_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// A LIBSVM file. Relative paths resolve against `L2S_DATA_DIR`, else the spec's directory.
    Libsvm {
        path: PathBuf,
        #[serde(default)]
        dim: Option<usize>,
    },
    /// One of the public benchmark sets, looked up by name.
    Known { name: String },
    Synthetic {
        n: usize,
        d: usize,
        #[serde(default = "one")]
        spread: f64,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LossSpec {
    /// `λ` defaults to the reference value for known datasets and 0 otherwise.
    Logistic {
        #[serde(default)]
        lambda: Option<f64>,
    },
    Nonconvex { alpha: f64 },
}

/// Inner-loop length or snapshot gap: a count, or `"n"` for the dataset size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MSpec {
    Count(u64),
    Keyword(MKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MKeyword {
    #[serde(rename = "n")]
    N,
}

impl Default for MSpec {
    fn default() -> Self {
        MSpec::Keyword(MKeyword::N)
    }
}

impl MSpec {
    pub fn resolve(self, n: usize) -> u64 {
        match self {
            MSpec::Count(m) => m,
            MSpec::Keyword(MKeyword::N) => n as u64,
        }
    }
}

/// Which smoothness constant `eta_over_l` multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepReference {
    /// `L = max_i L_i`.
    #[default]
    Max,
    /// `L̄`.
    Mean,
}

/// One optimizer entry. Exactly one of `eta`, `eta_over_l` or `plan` picks
/// the step size; `eta_over_l` expands into a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub m: MSpec,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub eta_over_l: Option<Vec<f64>>,
    #[serde(default)]
    pub reference: StepReference,
    #[serde(default)]
    pub plan: Option<Regime>,
    /// Fixed length; without it the run is driven by the pass budget.
    #[serde(default)]
    pub iterations: Option<u64>,
    #[serde(default)]
    pub epochs: Option<u64>,
    #[serde(default)]
    pub output: Option<OutputRule>,
    #[serde(default)]
    pub schedule: Option<StepSchedule>,
    #[serde(default)]
    pub step_back: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Budget in effective passes (`n` IFO calls each).
    pub passes: f64,
    #[serde(default = "one")]
    pub record_every: f64,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    pub dataset: DatasetSpec,
    pub loss: LossSpec,
    #[serde(rename = "optimizer", default)]
    pub optimizers: Vec<OptimizerSpec>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| BenchError::Spec {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(BenchError::io(path))?;
        Self::from_toml(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.optimizers.is_empty() {
            return config("experiment lists no optimizers");
        }
        if !(self.passes >= 1.0 && self.passes.is_finite()) {
            return config(format!("pass budget {} must be at least 1", self.passes));
        }
        if !(self.record_every > 0.0 && self.record_every.is_finite()) {
            return config(format!("record_every {} must be positive", self.record_every));
        }
        if self.seeds.as_ref().is_some_and(|s| s.is_empty()) {
            return config("seeds list is empty");
        }
        for (k, opt) in self.optimizers.iter().enumerate() {
            opt.validate().map_err(|e| BenchError::Config(format!("optimizer #{}: {e}", k + 1)))?;
        }
        Ok(())
    }
}

impl OptimizerSpec {
    fn validate(&self) -> Result<()> {
        let chosen = [self.eta.is_some(), self.eta_over_l.is_some(), self.plan.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if chosen != 1 {
            return config("set exactly one of `eta`, `eta_over_l` or `plan`");
        }
        if let Some(grid) = &self.eta_over_l {
            if grid.is_empty() || grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
                return config("`eta_over_l` must be a non-empty list of positive values");
            }
        }
        if self.iterations.is_some() && self.epochs.is_some() {
            return config("set at most one of `iterations` and `epochs`");
        }
        Ok(())
    }

    /// Step sizes this entry expands to, with a warning for each planned step
    /// whose certificate does not hold.
    pub fn step_sizes(&self, model: &dyn LossModel, m: u64) -> Result<(Vec<f64>, Vec<String>)> {
        let s = model.smoothness();
        let mut warnings = Vec::new();
        let etas = if let Some(eta) = self.eta {
            vec![eta]
        } else if let Some(grid) = &self.eta_over_l {
            let l = match self.reference {
                StepReference::Max => s.max,
                StepReference::Mean => s.mean,
            };
            grid.iter().map(|g| g / l).collect()
        } else {
            let regime = self.plan.expect("validated");
            let plan = plan_step_size(&ProblemConstants::from_model(model), self.algorithm, regime, m)?;
            if !plan.valid {
                warnings.push(format!(
                    "{} with m = {m}: planned step {} is not certified ({})",
                    self.algorithm, plan.eta, plan.certificate
                ));
            }
            vec![plan.eta]
        };
        Ok((etas, warnings))
    }
}

/// Directory dataset files are resolved against.
pub fn data_dir(spec_dir: &Path) -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map_or_else(|| spec_dir.to_path_buf(), PathBuf::from)
}

fn open_libsvm(path: &Path, file: &str, name: &str, dim: Option<usize>) -> Result<Dataset> {
    let handle = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(BenchError::MissingDataset {
                path: path.to_path_buf(),
                file: file.to_string(),
                url: LIBSVM_DOWNLOAD_URL,
            })
        }
        Err(e) => return Err(BenchError::io(path)(e)),
    };
    let opts = ParseOptions {
        name: name.to_string(),
        dim,
    };
    Ok(parse_libsvm(BufReader::new(handle), &opts)?)
}

impl DatasetSpec {
    /// Loads or generates the dataset. `spec_dir` is the directory of the spec file.
    pub fn load(&self, spec_dir: &Path) -> Result<Dataset> {
        match self {
            DatasetSpec::Libsvm { path, dim } => {
                let full = if path.is_absolute() { path.clone() } else { data_dir(spec_dir).join(path) };
                let file = path.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned());
                open_libsvm(&full, &file, &file, *dim)
            }
            DatasetSpec::Known { name } => {
                let Some(known) = known_dataset(name) else {
                    return config(format!("unknown dataset `{name}` (expected a9a, w7a or rcv1)"));
                };
                let full = data_dir(spec_dir).join(known.file);
                open_libsvm(&full, known.file, known.name, Some(known.dim))
            }
            DatasetSpec::Synthetic {
                n,
                d,
                spread,
                noise,
                seed,
            } => Ok(generate_synthetic(&SyntheticSpec {
                n: *n,
                d: *d,
                spread: *spread,
                noise: *noise,
                seed: *seed,
            })?),
        }
    }

    fn default_lambda(&self) -> f64 {
        match self {
            DatasetSpec::Known { name } => known_dataset(name).map_or(0.0, |k| k.lambda),
            _ => 0.0,
        }
    }
}

impl LossSpec {
    pub fn build(&self, data: Dataset, dataset: &DatasetSpec) -> Result<LogisticModel> {
        Ok(match *self {
            LossSpec::Logistic { lambda } => LogisticModel::l2(data, lambda.unwrap_or_else(|| dataset.default_lambda()))?,
            LossSpec::Nonconvex { alpha } => LogisticModel::nonconvex(data, alpha)?,
        })
    }
}
