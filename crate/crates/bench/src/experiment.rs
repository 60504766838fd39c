//! Grid execution: every (optimizer, step size, seed) cell runs independently
//! and writes its own trace file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use l2s::model::{LogisticModel, LossModel};
use l2s::optim::{run, Algorithm, OptimizerConfig, OutputRule, RunResult};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{config, BenchError, Result};
use crate::records::{write_csv, BestRecord, SummaryRecord, TraceRecord, BEST_SCHEMA, SUMMARY_SCHEMA, TRACE_SCHEMA};
use crate::spec::{ExperimentSpec, OptimizerSpec};

/// Length used when the pass budget, not `T` or `S`, ends a run.
const UNBOUNDED: u64 = u64::MAX / 4;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the spec's seed list.
    pub seeds: Option<Vec<u64>>,
    /// Worker threads; `None` uses all cores.
    pub workers: Option<usize>,
    /// Replaces the spec's output directory.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub config: OptimizerConfig,
    pub file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub out_dir: PathBuf,
    pub summary: Vec<SummaryRecord>,
    pub best: Vec<BestRecord>,
    pub f_best: Option<f64>,
    pub diverged: usize,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    /// Plain-text table of the best step size per algorithm.
    pub fn render(&self) -> String {
        let mut out = format!("experiment {} -> {}\n", self.name, self.out_dir.display());
        out.push_str(&format!(
            "{:<10} {:>12} {:>8} {:>6} {:>16} {:>12}\n",
            "algorithm", "eta", "m", "seeds", "final |gradF|^2", "total IFO"
        ));
        for b in &self.best {
            out.push_str(&format!(
                "{:<10} {:>12.5e} {:>8} {:>6} {:>16.6e} {:>12}\n",
                b.algorithm, b.eta, b.m, b.seeds, b.mean_final_grad_norm_sq, b.total_ifo
            ));
        }
        if self.diverged > 0 {
            out.push_str(&format!("{} run(s) diverged, see summary.csv\n", self.diverged));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

fn cell_config(opt: &OptimizerSpec, eta: f64, m: u64, seed: u64, spec: &ExperimentSpec, budget: u64) -> Result<OptimizerConfig> {
    let mut cfg = OptimizerConfig::new(opt.algorithm, eta, m)
        .with_seed(seed)
        .with_record_every(spec.record_every)
        .with_max_ifo(budget);
    let budget_driven = opt.iterations.is_none() && opt.epochs.is_none();
    cfg = match (opt.iterations, opt.epochs) {
        (Some(t), _) => cfg.with_iterations(t),
        (_, Some(s)) => cfg.with_epochs(s),
        _ if opt.algorithm.uses_epochs() => cfg.with_epochs(UNBOUNDED),
        _ => cfg.with_iterations(UNBOUNDED),
    };
    if let Some(rule) = opt.output {
        if budget_driven && opt.algorithm == Algorithm::L2s && rule == OutputRule::UniformRandomIterate {
            return config("l2s with a uniform output needs `iterations`; budget-driven runs return the last iterate");
        }
        cfg = cfg.with_output(rule);
    } else if budget_driven && opt.algorithm == Algorithm::L2s {
        cfg = cfg.with_output(OutputRule::LastIterate);
    }
    if let Some(schedule) = opt.schedule {
        cfg = cfg.with_schedule(schedule);
    }
    if let Some(step_back) = opt.step_back {
        cfg = cfg.with_step_back(step_back);
    }
    Ok(cfg)
}

/// Trace file name for a cell.
pub fn trace_file_name(cfg: &OptimizerConfig) -> String {
    format!("{}_eta{:e}_m{}_seed{}.csv", cfg.algorithm, cfg.eta, cfg.m, cfg.seed)
}

/// Expands the spec into validated cells, in spec order.
pub fn plan_cells(spec: &ExperimentSpec, model: &dyn LossModel, seeds: &[u64]) -> Result<(Vec<Cell>, Vec<String>)> {
    let n = model.num_components();
    let budget = (spec.passes * n as f64).ceil() as u64;
    let mut cells = Vec::new();
    let mut warnings = Vec::new();
    let mut names = BTreeSet::new();
    for (k, opt) in spec.optimizers.iter().enumerate() {
        let m = opt.m.resolve(n);
        let (etas, w) = opt
            .step_sizes(model, m)
            .map_err(|e| BenchError::Config(format!("optimizer #{}: {e}", k + 1)))?;
        warnings.extend(w);
        for &eta in &etas {
            for &seed in seeds {
                let cfg = cell_config(opt, eta, m, seed, spec, budget)
                    .map_err(|e| BenchError::Config(format!("optimizer #{}: {e}", k + 1)))?;
                cfg
                    .validate(model.dim())
                    .map_err(|e| BenchError::Config(format!("optimizer #{}: {e}", k + 1)))?;
                let file = trace_file_name(&cfg);
                if !names.insert(file.clone()) {
                    return config(format!("optimizer #{} repeats the cell {file}", k + 1));
                }
                cells.push(Cell { config: cfg, file });
            }
        }
    }
    Ok((cells, warnings))
}

struct CellRun {
    result: std::result::Result<RunResult, l2s::Error>,
    wall_seconds: f64,
}

fn build_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return config("--workers must be at least 1");
        }
        builder = builder.num_threads(w);
    }
    builder
        .build()
        .map_err(|e| BenchError::Config(format!("cannot start worker pool: {e}")))
}

fn trace_rows(cfg: &OptimizerConfig, r: &RunResult, f_best: f64) -> Vec<TraceRecord> {
    r.trace
        .iter()
        .map(|p| TraceRecord {
            algorithm: cfg.algorithm.to_string(),
            eta: cfg.eta,
            m: cfg.m,
            seed: cfg.seed,
            passes: p.passes,
            ifo: p.ifo,
            objective: p.objective,
            suboptimality: p.objective - f_best,
            grad_norm_sq: p.grad_norm_sq,
        })
        .collect()
}

/// Picks, per algorithm, the `(η, m)` group with the lowest mean final `‖∇F‖²`.
/// Groups containing a diverged run are not eligible.
pub fn select_best(summary: &[SummaryRecord]) -> Vec<BestRecord> {
    let mut groups: Vec<(String, f64, u64, Vec<&SummaryRecord>)> = Vec::new();
    for row in summary {
        match groups
            .iter_mut()
            .find(|g| g.0 == row.algorithm && g.1 == row.eta && g.2 == row.m)
        {
            Some(g) => g.3.push(row),
            None => groups.push((row.algorithm.clone(), row.eta, row.m, vec![row])),
        }
    }
    let mut best: Vec<BestRecord> = Vec::new();
    for (algorithm, eta, m, rows) in groups {
        let finals: Option<Vec<f64>> = rows.iter().map(|r| r.final_grad_norm_sq).collect();
        let Some(finals) = finals else { continue };
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        let candidate = BestRecord {
            algorithm: algorithm.clone(),
            eta,
            m,
            seeds: rows.len(),
            mean_final_grad_norm_sq: mean,
            total_ifo: rows.iter().filter_map(|r| r.ifo).sum(),
        };
        match best.iter_mut().find(|b| b.algorithm == algorithm) {
            Some(b) if mean < b.mean_final_grad_norm_sq => *b = candidate,
            Some(_) => {}
            None => best.push(candidate),
        }
    }
    best
}

/// Loads the dataset, runs the grid and writes traces, `summary.csv`,
/// `best.csv` and `metadata.json` under the output directory.
pub fn run_experiment(spec: &ExperimentSpec, spec_dir: &Path, options: &RunOptions) -> Result<ExperimentReport> {
    spec.validate()?;
    let seeds = options
        .seeds
        .clone()
        .or_else(|| spec.seeds.clone())
        .unwrap_or_else(|| vec![0]);
    let out_dir = options
        .out_dir
        .clone()
        .or_else(|| spec.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(&spec.name));

    let data = spec.dataset.load(spec_dir)?;
    let model: LogisticModel = spec.loss.build(data, &spec.dataset)?;
    let (cells, warnings) = plan_cells(spec, &model, &seeds)?;
    let pool = build_pool(options.workers)?;

    let started = SystemTime::now();
    let clock = Instant::now();
    let runs: Vec<CellRun> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let t = Instant::now();
                let result = run(&model, &cell.config);
                CellRun {
                    result,
                    wall_seconds: t.elapsed().as_secs_f64(),
                }
            })
            .collect()
    });
    let total_wall = clock.elapsed().as_secs_f64();

    for run in &runs {
        if let Err(e) = &run.result {
            if !matches!(e, l2s::Error::Diverged { .. }) {
                return Err(BenchError::Run(e.to_string()));
            }
        }
    }

    let f_best = runs
        .iter()
        .filter_map(|r| r.result.as_ref().ok())
        .flat_map(|r| r.trace.iter().map(|p| p.objective))
        .fold(None, |acc: Option<f64>, f| Some(acc.map_or(f, |a| a.min(f))));

    std::fs::create_dir_all(&out_dir).map_err(BenchError::io(&out_dir))?;
    let mut summary = Vec::with_capacity(cells.len());
    let mut cell_meta = Vec::with_capacity(cells.len());
    let mut diverged = 0;
    for (cell, run) in cells.iter().zip(&runs) {
        let cfg = &cell.config;
        let mut row = SummaryRecord {
            algorithm: cfg.algorithm.to_string(),
            eta: cfg.eta,
            m: cfg.m,
            seed: cfg.seed,
            status: String::new(),
            ifo: None,
            passes: None,
            final_objective: None,
            final_grad_norm_sq: None,
            trace_file: None,
            note: String::new(),
        };
        match &run.result {
            Ok(r) => {
                let rows = trace_rows(cfg, r, f_best.unwrap_or(0.0));
                write_csv(&out_dir.join(&cell.file), TRACE_SCHEMA, &rows)?;
                let last = r.final_point().expect("traces end with the final point");
                row.status = "ok".into();
                row.ifo = Some(r.ifo);
                row.passes = Some(last.passes);
                row.final_objective = Some(last.objective);
                row.final_grad_norm_sq = Some(last.grad_norm_sq);
                row.trace_file = Some(cell.file.clone());
            }
            Err(e) => {
                diverged += 1;
                row.status = "diverged".into();
                row.note = e.to_string();
            }
        }
        cell_meta.push(serde_json::json!({
            "file": row.trace_file,
            "algorithm": row.algorithm,
            "eta": cfg.eta,
            "m": cfg.m,
            "seed": cfg.seed,
            "status": row.status,
            "wall_seconds": run.wall_seconds,
        }));
        summary.push(row);
    }
    let best = select_best(&summary);
    write_csv(&out_dir.join("summary.csv"), SUMMARY_SCHEMA, &summary)?;
    write_csv(&out_dir.join("best.csv"), BEST_SCHEMA, &best)?;

    let s = model.smoothness();
    let metadata = serde_json::json!({
        "trace_schema": TRACE_SCHEMA,
        "summary_schema": SUMMARY_SCHEMA,
        "experiment": spec,
        "dataset": {
            "name": model.dataset().name(),
            "n": model.num_components(),
            "d": model.dim(),
            "l_max": s.max,
            "l_mean": s.mean,
            "mu": s.mu,
        },
        "seeds": seeds,
        "f_best": f_best,
        "workers": pool.current_num_threads(),
        "started_unix_seconds": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        "wall_seconds": total_wall,
        "warnings": warnings,
        "cells": cell_meta,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let meta_path = out_dir.join("metadata.json");
    let text = serde_json::to_string_pretty(&metadata).expect("metadata is plain JSON");
    std::fs::write(&meta_path, text).map_err(BenchError::io(&meta_path))?;

    Ok(ExperimentReport {
        name: spec.name.clone(),
        out_dir,
        summary,
        best,
        f_best,
        diverged,
        warnings,
    })
}
