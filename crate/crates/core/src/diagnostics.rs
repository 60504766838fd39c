//! Brute-force oracles and Monte-Carlo checks for the estimator theory.

use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Result};
use crate::model::{norm_sq, Convexity, LossModel};
use crate::optim::planner::nonconvex_eta_max;
use crate::sampling::{snapshot_event_probability, RngStream};

/// Default Monte-Carlo acceptance margin in standard errors.
pub const SIGMA_MARGIN: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub trials: usize,
    pub tolerance: f64,
    pub max_relative_error: f64,
    /// `(component, coordinate)` of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    pub passed: bool,
}

impl fmt::Display for GradientCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gradient check: {} trials, max relative error {:.3e} (tolerance {:.1e}) {}",
            self.trials,
            self.max_relative_error,
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" }
        )?;
        if let (false, Some((i, j))) = (self.passed, self.worst) {
            write!(f, ", worst at component {i} coordinate {j}")?;
        }
        Ok(())
    }
}

/// Central-difference step for coordinate value `x_j`.
pub fn fd_step(xj: f64) -> f64 {
    1e-6 * (1.0 + xj.abs())
}

/// Compares `∇f_i(x)` to central differences of `f_i` on `trials` random `(x, i)`.
///
/// Points are standard normal. The error for one coordinate is
/// `|fd − g| / max(|g|, 1)`, so coordinates with tiny gradients are judged on
/// an absolute scale.
pub fn check_gradient_fd(model: &dyn LossModel, trials: usize, tolerance: f64, seed: u64) -> GradientCheckReport {
    let n = model.num_components();
    let d = model.dim();
    let mut rng = RngStream::new(seed, 0);
    let mut g = vec![0.0; d];
    let mut max_err = 0.0f64;
    let mut worst = None;
    for _ in 0..trials {
        let mut x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let i = rng.below(n as u64) as usize;
        model.component_gradient_into(i, &x, &mut g);
        for j in 0..d {
            let xj = x[j];
            let h = fd_step(xj);
            x[j] = xj + h;
            let fp = model.component_value(i, &x);
            x[j] = xj - h;
            let fm = model.component_value(i, &x);
            x[j] = xj;
            let fd = (fp - fm) / (2.0 * h);
            let err = (fd - g[j]).abs() / g[j].abs().max(1.0);
            if err > max_err || worst.is_none() {
                max_err = max_err.max(err);
                worst = Some((i, j));
            }
        }
    }
    GradientCheckReport {
        trials,
        tolerance,
        max_relative_error: max_err,
        worst,
        passed: max_err < tolerance,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationReport {
    pub m: u64,
    pub t: u64,
    /// Enumerated mass of `N_{t1:t}` for `t1 = 0..=t`.
    pub enumerated: Vec<f64>,
    /// Closed-form probability for `t1 = 0..=t`.
    pub formula: Vec<f64>,
    pub total_mass: f64,
    pub max_discrepancy: f64,
    pub passed: bool,
}

impl fmt::Display for EnumerationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "snapshot law m={} t={}: total mass {:.15}, max discrepancy {:.2e} {}",
            self.m,
            self.t,
            self.total_mass,
            self.max_discrepancy,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

pub const MAX_ENUMERATION_HORIZON: u64 = 20;
const ENUMERATION_TOLERANCE: f64 = 1e-12;

/// Enumerates every `B_1..B_t ∈ {0,1}^t` for `t = 1..=t_max`, groups the mass
/// by the position of the last 1 and compares it with the closed form.
pub fn enumerate_snapshot_law(m: u64, t_max: u64) -> Result<Vec<EnumerationReport>> {
    if m == 0 {
        return contract("snapshot gap m must be at least 1");
    }
    if t_max > MAX_ENUMERATION_HORIZON {
        return config(format!(
            "enumeration horizon {t_max} exceeds {MAX_ENUMERATION_HORIZON} (2^t sequences)"
        ));
    }
    let p = 1.0 / m as f64;
    let q = 1.0 - p;
    (1..=t_max)
        .map(|t| {
            let mut enumerated = vec![0.0; t as usize + 1];
            for bits in 0u64..(1u64 << t) {
                // Bit k-1 holds B_k.
                let ones = bits.count_ones() as i32;
                let mass = p.powi(ones) * q.powi(t as i32 - ones);
                let last = 64 - bits.leading_zeros() as usize;
                enumerated[last] += mass;
            }
            let formula = (0..=t)
                .map(|t1| snapshot_event_probability(m, t, t1))
                .collect::<Result<Vec<_>>>()?;
            let max_discrepancy = enumerated
                .iter()
                .zip(&formula)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let total_mass: f64 = enumerated.iter().sum();
            let passed = max_discrepancy <= ENUMERATION_TOLERANCE && (total_mass - 1.0).abs() <= ENUMERATION_TOLERANCE;
            Ok(EnumerationReport {
                m,
                t,
                enumerated,
                formula,
                total_mass,
                max_discrepancy,
                passed,
            })
        })
        .collect()
}

/// A Monte-Carlo estimate checked against a theoretical upper bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub quantity: String,
    pub estimate: f64,
    pub standard_error: f64,
    pub bound: f64,
    pub margin_sigmas: f64,
    pub passed: bool,
    pub samples: usize,
}

impl MonteCarloReport {
    /// Summarizes `samples` and passes when `mean ≤ bound + margin·SE`.
    pub fn from_samples(quantity: impl Into<String>, samples: &[f64], bound: f64, margin_sigmas: f64) -> Self {
        let (estimate, standard_error) = mean_and_se(samples);
        Self {
            quantity: quantity.into(),
            estimate,
            standard_error,
            bound,
            margin_sigmas,
            passed: estimate <= bound + margin_sigmas * standard_error,
            samples: samples.len(),
        }
    }
}

impl fmt::Display for MonteCarloReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {:.6e} ± {:.2e} (n={}) vs bound {:.6e} at {}σ {}",
            self.quantity,
            self.estimate,
            self.standard_error,
            self.samples,
            self.bound,
            self.margin_sigmas,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// Sample mean and standard error (sample standard deviation / √n).
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let k = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / k;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MseRegime {
    Convex,
    Nonconvex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub regime: MseRegime,
    pub eta: f64,
    pub m: u64,
    /// One report per `t = 0..=horizon`.
    pub per_step: Vec<MonteCarloReport>,
}

impl MseReport {
    pub fn passed(&self) -> bool {
        self.per_step.iter().all(|r| r.passed)
    }
}

pub const MAX_MSE_COMPONENTS: usize = 50;
pub const MAX_MSE_DIM: usize = 10;

/// Monte-Carlo check of the estimator MSE `E‖∇F(x_t) − v_t‖²` after a snapshot
/// at `t_1 = 0`, conditioned on no further snapshot up to the horizon.
///
/// `x_0` is drawn from a standard normal under `seed`; every resample redraws
/// the index sequence `i_1..i_horizon` and reruns the SARAH recursion.
///
/// * Convex: each `t` is compared to `(ηL/(2−ηL))‖∇F(x_0)‖²`.
/// * Nonconvex: the per-sample difference `‖∇F(x_t)−v_t‖² − η²L² Σ_{τ=1}^{t} ‖v_{τ−1}‖²`
///   must have mean at most `4·SE` (bound 0), so the right-hand expectation is
///   estimated from the same resamples.
pub fn estimate_mse_bound(
    model: &dyn LossModel,
    regime: MseRegime,
    eta: f64,
    m: u64,
    horizon: usize,
    resamples: usize,
    seed: u64,
) -> Result<MseReport> {
    let n = model.num_components();
    let d = model.dim();
    if n > MAX_MSE_COMPONENTS || d > MAX_MSE_DIM {
        return config(format!(
            "MSE diagnostic is for small instances (n ≤ {MAX_MSE_COMPONENTS}, d ≤ {MAX_MSE_DIM}); got n = {n}, d = {d}"
        ));
    }
    if resamples < 2 {
        return config("MSE diagnostic needs at least two resamples");
    }
    let l = model.smoothness().max;
    match regime {
        MseRegime::Convex => {
            if model.convexity() == Convexity::Nonconvex {
                return config("convex MSE bound requested for a nonconvex model");
            }
            if !(eta > 0.0 && eta < 2.0 / l) {
                return config(format!("convex MSE bound needs 0 < η < 2/L = {}; got {eta}", 2.0 / l));
            }
        }
        MseRegime::Nonconvex => {
            if m == 0 {
                return config("m must be at least 1");
            }
            let eta_max = nonconvex_eta_max(m, l);
            if !(eta > 0.0 && eta <= eta_max) {
                return config(format!("nonconvex MSE bound needs 0 < η ≤ {eta_max}; got {eta}"));
            }
        }
    }

    let mut start_rng = RngStream::new(seed, 0);
    let x0: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut start_rng)).collect();
    let mut v0 = vec![0.0; d];
    model.full_gradient_into(&x0, &mut v0);
    let g0_sq = norm_sq(&v0);
    let convex_bound = eta * l / (2.0 - eta * l) * g0_sq;

    // samples[t][r]
    let mut samples = vec![Vec::with_capacity(resamples); horizon + 1];
    let mut index_rng = RngStream::new(seed, 1);
    let mut x = vec![0.0; d];
    let mut x_prev = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut g_new = vec![0.0; d];
    let mut g_old = vec![0.0; d];
    let mut full = vec![0.0; d];
    for _ in 0..resamples {
        x.copy_from_slice(&x0);
        v.copy_from_slice(&v0);
        let mut v_sum = 0.0;
        for (t, column) in samples.iter_mut().enumerate() {
            if t > 0 {
                let i = index_rng.below(n as u64) as usize;
                model.component_gradient_into(i, &x, &mut g_new);
                model.component_gradient_into(i, &x_prev, &mut g_old);
                for ((vj, a), b) in v.iter_mut().zip(&g_new).zip(&g_old) {
                    *vj += a - b;
                }
            }
            model.full_gradient_into(&x, &mut full);
            let err: f64 = full.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
            column.push(match regime {
                MseRegime::Convex => err,
                MseRegime::Nonconvex => err - eta * eta * l * l * v_sum,
            });
            // ‖v_t‖² enters the bound from t+1 on.
            v_sum += norm_sq(&v);
            x_prev.copy_from_slice(&x);
            x.iter_mut().zip(&v).for_each(|(xj, vj)| *xj -= eta * vj);
        }
    }

    let per_step = samples
        .iter()
        .enumerate()
        .map(|(t, s)| match regime {
            MseRegime::Convex => MonteCarloReport::from_samples(format!("convex MSE at t={t}"), s, convex_bound, SIGMA_MARGIN),
            MseRegime::Nonconvex => {
                MonteCarloReport::from_samples(format!("nonconvex MSE excess at t={t}"), s, 0.0, SIGMA_MARGIN)
            }
        })
        .collect();
    Ok(MseReport {
        regime,
        eta,
        m,
        per_step,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingComparison {
    /// `‖∇f_i(x) − ∇f_i(x_prev)‖`.
    pub differences: Vec<f64>,
    /// `p*_i ∝ differences_i` (empty when degenerate).
    pub optimal: Vec<f64>,
    /// `p_i ∝ L_i`.
    pub lipschitz: Vec<f64>,
    pub variance_optimal: f64,
    pub variance_lipschitz: f64,
    pub variance_uniform: f64,
    /// All differences are zero, so every distribution is equally good.
    pub degenerate: bool,
}

impl SamplingComparison {
    /// `V(p*) ≤ V(uniform)` and `V(p*) ≤ V(L-based)`, up to rounding.
    pub fn ordering_holds(&self) -> bool {
        let slack = |v: f64| v * 1e-12;
        self.variance_optimal <= self.variance_uniform + slack(self.variance_uniform)
            && self.variance_optimal <= self.variance_lipschitz + slack(self.variance_lipschitz)
    }
}

pub const MAX_COMPARISON_COMPONENTS: usize = 100;

/// Sampling objective `(1/n²) Σ_i d_i²/p_i`; terms with `d_i = 0` contribute 0.
pub fn sampling_variance(differences: &[f64], p: &[f64]) -> f64 {
    let n = differences.len() as f64;
    differences
        .iter()
        .zip(p)
        .filter(|(d, _)| **d != 0.0)
        .map(|(d, p)| d * d / p)
        .sum::<f64>()
        / (n * n)
}

/// Evaluates the per-step sampling objective under the exact optimum
/// `p* ∝ ‖∇f_i(x) − ∇f_i(x_prev)‖`, the `L_i`-proportional table and uniform.
pub fn compare_sampling_oracles(model: &dyn LossModel, x: &[f64], x_prev: &[f64]) -> Result<SamplingComparison> {
    let n = model.num_components();
    let d = model.dim();
    if n > MAX_COMPARISON_COMPONENTS {
        return config(format!("sampling comparison is limited to n ≤ {MAX_COMPARISON_COMPONENTS}"));
    }
    if x.len() != d || x_prev.len() != d {
        return contract("point dimensions do not match the model");
    }
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let differences: Vec<f64> = (0..n)
        .map(|i| {
            model.component_gradient_into(i, x, &mut a);
            model.component_gradient_into(i, x_prev, &mut b);
            a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
        })
        .collect();
    let ls = &model.smoothness().per_component;
    let l_total: f64 = ls.iter().sum();
    let lipschitz: Vec<f64> = ls.iter().map(|l| l / l_total).collect();
    let uniform = vec![1.0 / n as f64; n];
    let d_total: f64 = differences.iter().sum();
    let degenerate = d_total == 0.0;
    let optimal: Vec<f64> = if degenerate {
        Vec::new()
    } else {
        differences.iter().map(|di| di / d_total).collect()
    };
    Ok(SamplingComparison {
        variance_optimal: if degenerate { 0.0 } else { sampling_variance(&differences, &optimal) },
        variance_lipschitz: sampling_variance(&differences, &lipschitz),
        variance_uniform: sampling_variance(&differences, &uniform),
        differences,
        optimal,
        lipschitz,
        degenerate,
    })
}
