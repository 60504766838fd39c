//! Compares the n-independent step `0.5/L` with the n-dependent step
//! `(√(4m+1)−1)/(2mL)` on random subsets of growing size `n'`, with `m = n'`.

use std::path::{Path, PathBuf};

use l2s::data::subsample;
use l2s::model::LossModel;
use l2s::optim::{plan_step_size, run, Algorithm, OptimizerConfig, OutputRule, ProblemConstants, Regime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, BenchError, Result};
use crate::records::{write_csv, StudyRecord, STUDY_SCHEMA};
use crate::spec::{DatasetSpec, LossSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub name: String,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSpec,
    pub loss: LossSpec,
    /// Subset sizes `n'`, each at most `n`.
    pub sizes: Vec<usize>,
    pub passes: f64,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

fn default_algorithm() -> Algorithm {
    Algorithm::L2s
}

impl StudySpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(BenchError::io(path))?;
        let spec: Self = toml::from_str(&text).map_err(|e| BenchError::Spec {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return config("sizes must be a non-empty list of positive subset sizes");
        }
        if !(self.passes >= 1.0 && self.passes.is_finite()) {
            return config(format!("pass budget {} must be at least 1", self.passes));
        }
        if !matches!(self.algorithm, Algorithm::L2s | Algorithm::Sarah) {
            return config("the subsample study compares l2s or sarah configurations");
        }
        if self.seeds.as_ref().is_some_and(|s| s.is_empty()) {
            return config("seeds list is empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRecord>,
    /// `(n', final ‖∇F‖² of n-dependent − of n-independent)`.
    pub gaps: Vec<(usize, f64)>,
    pub csv: PathBuf,
}

const CONFIGS: [(&str, Regime); 2] = [
    ("n-independent", Regime::ConvexNIndependent),
    ("n-dependent", Regime::ConvexNDependent),
];

pub fn run_study(spec: &StudySpec, spec_dir: &Path, seeds: Option<Vec<u64>>, workers: Option<usize>, out_dir: Option<PathBuf>) -> Result<StudyReport> {
    spec.validate()?;
    let data = spec.dataset.load(spec_dir)?;
    let n = data.len();
    if let Some(&bad) = spec.sizes.iter().find(|&&s| s > n) {
        return config(format!("subset size {bad} exceeds the dataset size {n}"));
    }
    let seeds = seeds.or_else(|| spec.seeds.clone()).unwrap_or_else(|| vec![0]);
    let out_dir = out_dir
        .or_else(|| spec.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(&spec.name));

    let cells: Vec<(usize, usize, u64)> = spec
        .sizes
        .iter()
        .flat_map(|&size| {
            let seeds = &seeds;
            (0..CONFIGS.len()).flat_map(move |c| seeds.iter().map(move |&s| (size, c, s)))
        })
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return config("--workers must be at least 1");
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| BenchError::Config(format!("cannot start worker pool: {e}")))?;

    let outcomes: Vec<Result<(f64, u64, f64)>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(size, c, seed)| {
                let sub = if size == n { data.clone() } else { subsample(&data, size, seed)? };
                let model = spec.loss.build(sub, &spec.dataset)?;
                let m = size as u64;
                let plan = plan_step_size(&ProblemConstants::from_model(&model), spec.algorithm, CONFIGS[c].1, m)?;
                let budget = (spec.passes * size as f64).ceil() as u64;
                let mut cfg = OptimizerConfig::new(spec.algorithm, plan.eta, m)
                    .with_seed(seed)
                    .with_max_ifo(budget)
                    .with_record_every(spec.passes);
                cfg = if spec.algorithm.uses_epochs() {
                    cfg.with_epochs(u64::MAX / 4)
                } else {
                    cfg.with_iterations(u64::MAX / 4).with_output(OutputRule::LastIterate)
                };
                let r = run(&model, &cfg)?;
                let mut g = vec![0.0; model.dim()];
                model.full_gradient_into(&r.output, &mut g);
                Ok((plan.eta, m, g.iter().map(|v| v * v).sum()))
            })
            .collect()
    });

    let mut rows = Vec::new();
    for &size in &spec.sizes {
        for (c, (label, _)) in CONFIGS.iter().enumerate() {
            let mut finals = Vec::new();
            let mut eta_m = (0.0, 0);
            for (cell, outcome) in cells.iter().zip(&outcomes) {
                if cell.0 == size && cell.1 == c {
                    match outcome {
                        Ok((eta, m, g)) => {
                            // η depends on the subset's L; report the first seed's.
                            if finals.is_empty() {
                                eta_m = (*eta, *m);
                            }
                            finals.push(*g);
                        }
                        Err(e) => return Err(BenchError::Run(format!("n' = {size}, {label}: {e}"))),
                    }
                }
            }
            rows.push(StudyRecord {
                n_prime: size,
                config: (*label).to_string(),
                eta: eta_m.0,
                m: eta_m.1,
                seeds: finals.len(),
                mean_final_grad_norm_sq: finals.iter().sum::<f64>() / finals.len() as f64,
            });
        }
    }
    let gaps = rows
        .chunks(2)
        .map(|pair| (pair[0].n_prime, pair[1].mean_final_grad_norm_sq - pair[0].mean_final_grad_norm_sq))
        .collect();

    std::fs::create_dir_all(&out_dir).map_err(BenchError::io(&out_dir))?;
    let csv = out_dir.join("subsample_study.csv");
    write_csv(&csv, STUDY_SCHEMA, &rows)?;
    Ok(StudyReport { rows, gaps, csv })
}

impl StudyReport {
    pub fn render(&self) -> String {
        let mut out = format!("{:>8} {:<14} {:>12} {:>16}\n", "n'", "config", "eta", "final |gradF|^2");
        for r in &self.rows {
            out.push_str(&format!(
                "{:>8} {:<14} {:>12.5e} {:>16.6e}\n",
                r.n_prime, r.config, r.eta, r.mean_final_grad_norm_sq
            ));
        }
        for (size, gap) in &self.gaps {
            out.push_str(&format!("gap at n' = {size}: {gap:.6e}\n"));
        }
        out.push_str(&format!("wrote {}\n", self.csv.display()));
        out
    }
}
