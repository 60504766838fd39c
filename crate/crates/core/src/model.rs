//! Finite-sum losses `F(x) = (1/n) Σ f_i(x)` and the counted gradient oracle.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SparseRow};
use crate::error::{config, contract, Error, Result};

/// Smoothness metadata of a finite-sum model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Smoothness {
    /// `L_i` for every component.
    pub per_component: Vec<f64>,
    /// `L = max_i L_i`.
    pub max: f64,
    /// `L̄ = (1/n) Σ L_i`.
    pub mean: f64,
    /// Strong-convexity modulus (0 when none is known).
    pub mu: f64,
    /// `max_i ‖a_i‖²/4`, the data part of `L` without any regularizer.
    pub data_max: f64,
    /// `(1/n) Σ ‖a_i‖²/4`.
    pub data_mean: f64,
}

impl Smoothness {
    fn from_components(per_component: Vec<f64>, data: &[f64], mu: f64) -> Self {
        let n = per_component.len() as f64;
        let max = per_component.iter().cloned().fold(0.0, f64::max);
        let mean = per_component.iter().sum::<f64>() / n;
        let data_max = data.iter().cloned().fold(0.0, f64::max);
        let data_mean = data.iter().sum::<f64>() / n;
        Self {
            per_component,
            max,
            mean,
            mu,
            data_max,
            data_mean,
        }
    }

    /// `κ = L/μ`, infinite when `μ = 0`.
    pub fn kappa(&self) -> f64 {
        self.max / self.mu
    }

    /// `κ̄ = L̄/μ`.
    pub fn kappa_mean(&self) -> f64 {
        self.mean / self.mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convexity {
    /// `F` is strongly convex; `componentwise` when every `f_i` is.
    StronglyConvex { componentwise: bool },
    Convex,
    Nonconvex,
}

/// First-order oracle contract of a finite-sum problem.
///
/// Implementations are pure functions of `(i, x)`; IFO accounting lives in
/// [`Oracle`], which callers own per run.
pub trait LossModel: Send + Sync {
    fn num_components(&self) -> usize;

    fn dim(&self) -> usize;

    fn component_value(&self, i: usize, x: &[f64]) -> f64;

    /// Writes `∇f_i(x)` into `out`. Unchecked: `i < n` and lengths are the caller's job.
    fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]);

    /// Writes `∇F(x)` into `out`.
    fn full_gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.num_components();
        let mut g = vec![0.0; out.len()];
        out.fill(0.0);
        for i in 0..n {
            self.component_gradient_into(i, x, &mut g);
            out.iter_mut().zip(&g).for_each(|(o, gi)| *o += gi);
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let n = self.num_components();
        (0..n).map(|i| self.component_value(i, x)).sum::<f64>() / n as f64
    }

    fn smoothness(&self) -> &Smoothness;

    fn convexity(&self) -> Convexity;
}

/// `ln(1 + exp(-z))` without overflow.
#[inline]
pub fn log1p_exp_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// `1 / (1 + exp(-z))` without overflow.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularizer {
    /// `λ/2 ‖x‖²` on every component.
    L2 { lambda: f64 },
    /// `α Σ_j x_j²/(1+x_j²)` on every component.
    Nonconvex { alpha: f64 },
}

impl Regularizer {
    #[inline]
    fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Regularizer::L2 { lambda } => 0.5 * lambda * x.iter().map(|v| v * v).sum::<f64>(),
            Regularizer::Nonconvex { alpha } => alpha * x.iter().map(|v| v * v / (1.0 + v * v)).sum::<f64>(),
        }
    }

    #[inline]
    fn add_gradient(&self, x: &[f64], out: &mut [f64]) {
        match *self {
            Regularizer::L2 { lambda } => {
                if lambda != 0.0 {
                    out.iter_mut().zip(x).for_each(|(o, v)| *o += lambda * v);
                }
            }
            Regularizer::Nonconvex { alpha } => out.iter_mut().zip(x).for_each(|(o, v)| {
                let q = 1.0 + v * v;
                *o += 2.0 * alpha * v / (q * q);
            }),
        }
    }

    /// Upper bound on the magnitude of the regularizer's curvature.
    fn smoothness(&self) -> f64 {
        match *self {
            Regularizer::L2 { lambda } => lambda,
            Regularizer::Nonconvex { alpha } => 2.0 * alpha,
        }
    }
}

/// Logistic loss `f_i(x) = ln(1 + exp(-b_i⟨a_i, x⟩)) + r(x)` with the
/// regularizer `r` added to every component.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    data: Dataset,
    regularizer: Regularizer,
    smoothness: Smoothness,
}

impl LogisticModel {
    /// L2-regularized logistic regression; strongly convex for `λ > 0`.
    pub fn l2(data: Dataset, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return config(format!("regularization λ = {lambda} must be finite and non-negative"));
        }
        Self::build(data, Regularizer::L2 { lambda })
    }

    /// Logistic loss plus the smooth nonconvex penalty `α Σ x_j²/(1+x_j²)`.
    pub fn nonconvex(data: Dataset, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return config(format!("nonconvex weight α = {alpha} must be finite and positive"));
        }
        Self::build(data, Regularizer::Nonconvex { alpha })
    }

    fn build(data: Dataset, regularizer: Regularizer) -> Result<Self> {
        if data.is_empty() {
            return config("model needs a non-empty dataset");
        }
        let data_l: Vec<f64> = data.rows().iter().map(|r| r.norm_sq() / 4.0).collect();
        let reg_l = regularizer.smoothness();
        let per_component = data_l.iter().map(|l| l + reg_l).collect();
        let mu = match regularizer {
            Regularizer::L2 { lambda } => lambda,
            Regularizer::Nonconvex { .. } => 0.0,
        };
        let smoothness = Smoothness::from_components(per_component, &data_l, mu);
        Ok(Self {
            data,
            regularizer,
            smoothness,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn regularizer(&self) -> Regularizer {
        self.regularizer
    }

    /// Coefficient `c` with `∇ loss_i(x) = c · a_i`.
    #[inline]
    fn loss_coefficient(row: &SparseRow, x: &[f64]) -> f64 {
        let margin = row.label * row.dot(x);
        -row.label * sigmoid(-margin)
    }
}

impl LossModel for LogisticModel {
    fn num_components(&self) -> usize {
        self.data.len()
    }

    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let row = self.data.row(i);
        log1p_exp_neg(row.label * row.dot(x)) + self.regularizer.value(x)
    }

    fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let row = self.data.row(i);
        let c = Self::loss_coefficient(row, x);
        out.fill(0.0);
        for (&j, &a) in row.indices.iter().zip(&row.values) {
            out[j] += c * a;
        }
        self.regularizer.add_gradient(x, out);
    }

    // Same operation order as `component_gradient_into`, so n = 1 agrees bit for bit.
    fn full_gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for row in self.data.rows() {
            let c = Self::loss_coefficient(row, x);
            for (&j, &a) in row.indices.iter().zip(&row.values) {
                out[j] += c * a;
            }
        }
        let n = self.data.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        self.regularizer.add_gradient(x, out);
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let loss: f64 = self
            .data
            .rows()
            .iter()
            .map(|row| log1p_exp_neg(row.label * row.dot(x)))
            .sum();
        loss / self.data.len() as f64 + self.regularizer.value(x)
    }

    fn smoothness(&self) -> &Smoothness {
        &self.smoothness
    }

    fn convexity(&self) -> Convexity {
        match self.regularizer {
            Regularizer::L2 { lambda } if lambda > 0.0 => Convexity::StronglyConvex { componentwise: true },
            Regularizer::L2 { .. } => Convexity::Convex,
            Regularizer::Nonconvex { .. } => Convexity::Nonconvex,
        }
    }
}

/// Squared Euclidean norm.
#[inline]
pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Checked gradient access with a per-run IFO counter.
///
/// One component gradient costs 1 IFO and a full gradient costs `n`.
/// Objective evaluations are free.
pub struct Oracle<'a> {
    model: &'a dyn LossModel,
    ifo: u64,
}

impl<'a> Oracle<'a> {
    pub fn new(model: &'a dyn LossModel) -> Self {
        Self { model, ifo: 0 }
    }

    pub fn model(&self) -> &'a dyn LossModel {
        self.model
    }

    pub fn ifo(&self) -> u64 {
        self.ifo
    }

    fn check_point(&self, x: &[f64], out_len: usize) -> Result<()> {
        let d = self.model.dim();
        if x.len() != d || out_len != d {
            return contract(format!(
                "vector length {} / output length {out_len} does not match dimension {d}",
                x.len()
            ));
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("x[{j}] = {} is not finite", x[j])));
        }
        Ok(())
    }

    pub fn component_gradient_into(&mut self, i: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.model.num_components();
        if i >= n {
            return contract(format!("component index {i} out of range for n = {n}"));
        }
        self.check_point(x, out.len())?;
        self.model.component_gradient_into(i, x, out);
        self.ifo += 1;
        Ok(())
    }

    pub fn component_gradient(&mut self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.model.dim()];
        self.component_gradient_into(i, x, &mut out)?;
        Ok(out)
    }

    pub fn full_gradient_into(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_point(x, out.len())?;
        self.model.full_gradient_into(x, out);
        self.ifo += self.model.num_components() as u64;
        Ok(())
    }

    pub fn full_gradient(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.model.dim()];
        self.full_gradient_into(x, &mut out)?;
        Ok(out)
    }

    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x, x.len())?;
        Ok(self.model.objective(x))
    }
}
