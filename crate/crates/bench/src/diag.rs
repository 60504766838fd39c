//! Runs the diagnostics suite on a small seeded instance.

use std::fmt::Write as _;
use std::path::Path;

use l2s::data::{generate_synthetic, SyntheticSpec};
use l2s::diagnostics::{
    check_gradient_fd, compare_sampling_oracles, enumerate_snapshot_law, estimate_mse_bound, EnumerationReport,
    GradientCheckReport, MseRegime, MseReport, SamplingComparison,
};
use l2s::model::{LogisticModel, LossModel};
use l2s::optim::planner::nonconvex_eta_max;
use l2s::sampling::RngStream;
use serde::Serialize;

use crate::error::{config, BenchError, Result};

#[derive(Debug, Clone)]
pub struct DiagOptions {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub resamples: usize,
    pub horizon: usize,
}

impl Default for DiagOptions {
    fn default() -> Self {
        Self {
            n: 20,
            d: 5,
            seed: 0,
            resamples: 2000,
            horizon: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagReport {
    pub gradient_checks: Vec<(String, GradientCheckReport)>,
    pub snapshot_law: Vec<EnumerationReport>,
    pub mse: Vec<MseReport>,
    pub sampling: SamplingComparison,
    pub passed: bool,
}

impl DiagReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, r) in &self.gradient_checks {
            let _ = writeln!(out, "[{name}] {r}");
        }
        let law_ok = self.snapshot_law.iter().all(|r| r.passed);
        let worst = self
            .snapshot_law
            .iter()
            .map(|r| r.max_discrepancy)
            .fold(0.0, f64::max);
        let _ = writeln!(
            out,
            "snapshot law: {} cases, max discrepancy {worst:.2e} {}",
            self.snapshot_law.len(),
            if law_ok { "PASS" } else { "FAIL" }
        );
        for r in &self.mse {
            for step in &r.per_step {
                let _ = writeln!(out, "{step}");
            }
        }
        let s = &self.sampling;
        let _ = writeln!(
            out,
            "sampling objective: optimal {:.6e}, L-proportional {:.6e}, uniform {:.6e} {}",
            s.variance_optimal,
            s.variance_lipschitz,
            s.variance_uniform,
            if s.ordering_holds() { "PASS" } else { "FAIL" }
        );
        let _ = writeln!(out, "diagnostics: {}", if self.passed { "PASS" } else { "FAIL" });
        out
    }
}

fn uniform_point(d: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..d).map(|_| 2.0 * rng.next_f64() - 1.0).collect()
}

pub fn run_diagnostics(options: &DiagOptions) -> Result<DiagReport> {
    if options.n == 0 || options.d == 0 {
        return config("diagnostics need n >= 1 and d >= 1");
    }
    let data = generate_synthetic(&SyntheticSpec {
        n: options.n,
        d: options.d,
        spread: 4.0,
        noise: 0.1,
        seed: options.seed,
    })?;
    let convex = LogisticModel::l2(data.clone(), 0.01)?;
    let nonconvex = LogisticModel::nonconvex(data, 1.0)?;

    let gradient_checks = vec![
        ("logistic".to_string(), check_gradient_fd(&convex, 100, 1e-6, options.seed)),
        ("nonconvex".to_string(), check_gradient_fd(&nonconvex, 100, 1e-6, options.seed)),
    ];
    let mut snapshot_law = Vec::new();
    for m in [2, 3, 5] {
        snapshot_law.extend(enumerate_snapshot_law(m, 10)?);
    }
    let l = convex.smoothness().max;
    let lnc = nonconvex.smoothness().max;
    let mse = vec![
        estimate_mse_bound(&convex, MseRegime::Convex, 0.5 / l, 10, options.horizon, options.resamples, options.seed)?,
        estimate_mse_bound(
            &nonconvex,
            MseRegime::Nonconvex,
            nonconvex_eta_max(8, lnc),
            8,
            options.horizon,
            options.resamples,
            options.seed,
        )?,
    ];
    let mut rng = RngStream::new(options.seed, 17);
    let x = uniform_point(options.d, &mut rng);
    let y = uniform_point(options.d, &mut rng);
    let sampling = compare_sampling_oracles(&convex, &x, &y)?;

    let passed = gradient_checks.iter().all(|(_, r)| r.passed)
        && snapshot_law.iter().all(|r| r.passed)
        && mse.iter().all(MseReport::passed)
        && sampling.ordering_holds();
    Ok(DiagReport {
        gradient_checks,
        snapshot_law,
        mse,
        sampling,
        passed,
    })
}

/// Writes the report as `diag.json` under `out_dir`.
pub fn write_report(report: &DiagReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(BenchError::io(out_dir))?;
    let path = out_dir.join("diag.json");
    let text = serde_json::to_string_pretty(report).expect("report is plain JSON");
    std::fs::write(&path, text).map_err(BenchError::io(&path))
}
