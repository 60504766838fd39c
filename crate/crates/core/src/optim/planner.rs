//! Step sizes and convergence certificates from the problem constants.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::model::{Convexity, LossModel};

use super::Algorithm;

/// Constants a plan depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// `L = max_i L_i`.
    pub l_max: f64,
    /// `L̄`.
    pub l_mean: f64,
    /// `μ` (taken as the regularization weight, 0 if none).
    pub mu: f64,
    /// Every component is `μ`-strongly convex, not just `F`.
    pub componentwise: bool,
}

impl ProblemConstants {
    pub fn from_model(model: &dyn LossModel) -> Self {
        let s = model.smoothness();
        Self {
            l_max: s.max,
            l_mean: s.mean,
            mu: s.mu,
            componentwise: matches!(model.convexity(), Convexity::StronglyConvex { componentwise: true }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    StronglyConvex,
    ConvexNIndependent,
    ConvexNDependent,
    Nonconvex,
}

/// The quantity that justifies a planned step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Certificate {
    /// No rate guarantee is attached (baselines).
    None,
    /// `C_η = 1 − ηL/(2−ηL)`, must be positive.
    CEta { c_eta: f64 },
    /// `η_max = (√(4m+1)−1)/(2mL)`.
    StepBound { eta_max: f64 },
    /// Last-iterate SARAH contraction `λ_m`.
    LambdaM { theta: f64, lambda_m: f64 },
    /// L2S-SC contraction `λ` per snapshot epoch.
    Lambda { theta: f64, lambda: f64 },
    /// SARAH contraction `σ̃_m` per outer loop.
    SigmaTilde { sigma: f64 },
    /// D2S contraction `σ_m` per outer loop.
    SigmaM { sigma: f64 },
}

impl Certificate {
    /// The headline number, if any.
    pub fn value(&self) -> Option<f64> {
        match *self {
            Certificate::None => None,
            Certificate::CEta { c_eta } => Some(c_eta),
            Certificate::StepBound { eta_max } => Some(eta_max),
            Certificate::LambdaM { lambda_m, .. } => Some(lambda_m),
            Certificate::Lambda { lambda, .. } => Some(lambda),
            Certificate::SigmaTilde { sigma } | Certificate::SigmaM { sigma } => Some(sigma),
        }
    }

    /// Contraction factors must be below 1, `C_η` above 0.
    pub fn holds(&self) -> bool {
        match *self {
            Certificate::None | Certificate::StepBound { .. } => true,
            Certificate::CEta { c_eta } => c_eta > 0.0,
            _ => self.value().is_some_and(|v| v < 1.0),
        }
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Certificate::None => write!(f, "none"),
            Certificate::CEta { c_eta } => write!(f, "C_eta = {c_eta}"),
            Certificate::StepBound { eta_max } => write!(f, "eta_max = {eta_max}"),
            Certificate::LambdaM { theta, lambda_m } => write!(f, "lambda_m = {lambda_m} (theta = {theta})"),
            Certificate::Lambda { theta, lambda } => write!(f, "lambda = {lambda} (theta = {theta})"),
            Certificate::SigmaTilde { sigma } => write!(f, "sigma_tilde_m = {sigma}"),
            Certificate::SigmaM { sigma } => write!(f, "sigma_m = {sigma}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub eta: f64,
    pub certificate: Certificate,
    pub valid: bool,
}

/// `C_η = 1 − ηL/(2−ηL)`.
pub fn c_eta(eta: f64, l: f64) -> f64 {
    1.0 - eta * l / (2.0 - eta * l)
}

/// Largest nonconvex step `(√(4m+1)−1)/(2mL)`.
pub fn nonconvex_eta_max(m: u64, l: f64) -> f64 {
    let m = m as f64;
    ((4.0 * m + 1.0).sqrt() - 1.0) / (2.0 * m * l)
}

/// `θ` when every `f_i` is `μ`-strongly convex: `1 − 2ηL/(1+κ)`.
pub fn theta_componentwise(eta: f64, l: f64, kappa: f64) -> f64 {
    1.0 - 2.0 * eta * l / (1.0 + kappa)
}

/// `θ` when only `F` is `μ`-strongly convex: `1 − (2/(ηL) − 1) μ² η²`.
pub fn theta_strongly_convex(eta: f64, l: f64, mu: f64) -> f64 {
    1.0 - (2.0 / (eta * l) - 1.0) * mu * mu * eta * eta
}

/// `λ_m = 2ηL/(2−ηL) + (2+2ηL) θ^m`.
pub fn lambda_m(eta: f64, l: f64, theta: f64, m: u64) -> f64 {
    2.0 * eta * l / (2.0 - eta * l) + (2.0 + 2.0 * eta * l) * theta.powf(m as f64)
}

/// L2S-SC contraction `2ηL/(2−ηL) + (2+2ηL)/(m−1) · θ(1−1/m)/(1−θ(1−1/m))`.
///
/// At `m = 1` the `1/(m−1)` factor cancels against `(1−1/m)`, leaving `θ/m`.
pub fn lambda_l2s_sc(eta: f64, l: f64, theta: f64, m: u64) -> f64 {
    let mf = m as f64;
    let q = theta * (1.0 - 1.0 / mf);
    let tail = if m > 1 {
        (2.0 + 2.0 * eta * l) / (mf - 1.0) * q / (1.0 - q)
    } else {
        (2.0 + 2.0 * eta * l) * (theta / mf) / (1.0 - q)
    };
    2.0 * eta * l / (2.0 - eta * l) + tail
}

/// SARAH `σ̃_m = 1/(μη(m+1)) + ηL/(2−ηL)`.
pub fn sigma_tilde(mu: f64, eta: f64, l: f64, m: u64) -> f64 {
    1.0 / (mu * eta * (m as f64 + 1.0)) + eta * l / (2.0 - eta * l)
}

/// D2S `σ_m = 1/(μη(m+1)) + ηL̄/(2−ηL̄)`.
pub fn sigma_d2s(mu: f64, eta: f64, l_mean: f64, m: u64) -> f64 {
    sigma_tilde(mu, eta, l_mean, m)
}

/// Plans `η` for `algorithm` in `regime` with inner length / snapshot gap `m`.
pub fn plan_step_size(constants: &ProblemConstants, algorithm: Algorithm, regime: Regime, m: u64) -> Result<StepPlan> {
    let ProblemConstants {
        l_max: l,
        l_mean,
        mu,
        componentwise,
    } = *constants;
    if !(l > 0.0 && l.is_finite() && l_mean > 0.0 && l_mean <= l) {
        return config(format!("smoothness constants L = {l}, L̄ = {l_mean} are not usable"));
    }
    let needs_m = matches!(
        algorithm,
        Algorithm::Svrg | Algorithm::SarahLi | Algorithm::L2s | Algorithm::L2sSc
    ) || matches!(regime, Regime::ConvexNDependent | Regime::Nonconvex);
    if needs_m && m == 0 {
        return config(format!("{algorithm}: m must be at least 1 for this plan"));
    }
    let plan = |eta: f64, certificate: Certificate| StepPlan {
        eta,
        certificate,
        valid: certificate.holds(),
    };

    Ok(match regime {
        Regime::StronglyConvex => {
            if !(mu.is_finite() && mu > 0.0) {
                return config("a strongly convex plan needs μ > 0");
            }
            let theta_at = |eta: f64| {
                if componentwise {
                    theta_componentwise(eta, l, l / mu)
                } else {
                    theta_strongly_convex(eta, l, mu)
                }
            };
            match algorithm {
                Algorithm::L2sSc => {
                    let eta = 0.5 / l;
                    let theta = theta_at(eta);
                    plan(eta, Certificate::Lambda { theta, lambda: lambda_l2s_sc(eta, l, theta, m) })
                }
                Algorithm::SarahLi => {
                    let eta = 0.5 / l;
                    let theta = theta_at(eta);
                    plan(eta, Certificate::LambdaM { theta, lambda_m: lambda_m(eta, l, theta, m) })
                }
                Algorithm::Sarah => {
                    let eta = 0.5 / l;
                    plan(eta, Certificate::SigmaTilde { sigma: sigma_tilde(mu, eta, l, m) })
                }
                Algorithm::D2s => {
                    let eta = 0.5 / l_mean;
                    plan(eta, Certificate::SigmaM { sigma: sigma_d2s(mu, eta, l_mean, m) })
                }
                Algorithm::Svrg => plan(0.2 / l, Certificate::None),
                _ => plan(0.5 / l, Certificate::None),
            }
        }
        Regime::ConvexNIndependent => {
            let eta = if algorithm == Algorithm::D2s { 0.5 / l_mean } else { 0.5 / l };
            let reference = if algorithm == Algorithm::D2s { l_mean } else { l };
            plan(eta, Certificate::CEta { c_eta: c_eta(eta, reference) })
        }
        Regime::ConvexNDependent | Regime::Nonconvex => {
            let eta_max = nonconvex_eta_max(m, l);
            plan(eta_max, Certificate::StepBound { eta_max })
        }
    })
}
