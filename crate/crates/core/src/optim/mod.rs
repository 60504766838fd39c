//! Optimizers behind one configuration/result contract.

mod gd;
mod l2s;
pub mod planner;
mod sarah;
mod session;
mod sgd;
mod svrg;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::model::LossModel;

pub use planner::{plan_step_size, Certificate, ProblemConstants, Regime, StepPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Gd,
    Sgd,
    Svrg,
    Sarah,
    SarahLi,
    L2s,
    L2sSc,
    D2s,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Gd,
        Algorithm::Sgd,
        Algorithm::Svrg,
        Algorithm::Sarah,
        Algorithm::SarahLi,
        Algorithm::L2s,
        Algorithm::L2sSc,
        Algorithm::D2s,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gd => "gd",
            Algorithm::Sgd => "sgd",
            Algorithm::Svrg => "svrg",
            Algorithm::Sarah => "sarah",
            Algorithm::SarahLi => "sarah-li",
            Algorithm::L2s => "l2s",
            Algorithm::L2sSc => "l2s-sc",
            Algorithm::D2s => "d2s",
        }
    }

    /// True for algorithms whose length is a number of outer loops / snapshot
    /// epochs `S` rather than an iteration count `T`.
    pub fn uses_epochs(self) -> bool {
        matches!(
            self,
            Algorithm::Svrg | Algorithm::Sarah | Algorithm::SarahLi | Algorithm::L2sSc | Algorithm::D2s
        )
    }

    fn default_output(self) -> OutputRule {
        match self {
            Algorithm::Sarah | Algorithm::D2s | Algorithm::L2s => OutputRule::UniformRandomIterate,
            _ => OutputRule::LastIterate,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

/// Which point a run returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputRule {
    /// L2S: an iterate drawn uniformly from `x_1..x_T`. SARAH/D2S: every
    /// restart point is drawn uniformly from the inner iterates `x_0..x_m`.
    UniformRandomIterate,
    /// The last iterate. SARAH restarts from `x_m`.
    LastIterate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSchedule {
    Constant,
    /// `η_k = η/(k+1)` on the k-th effective pass (`k = ⌊IFO/n⌋`).
    PassDecay,
}

/// Everything that defines one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub eta: f64,
    /// Inner-loop length (SARAH family, SVRG) or expected snapshot gap (L2S family).
    #[serde(default = "default_m")]
    pub m: u64,
    /// Total iterations `T` (GD, SGD, L2S).
    #[serde(default)]
    pub iterations: Option<u64>,
    /// Outer loops / snapshot epochs `S` (SVRG, SARAH, SARAH-LI, L2S-SC, D2S).
    #[serde(default)]
    pub epochs: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    #[serde(default)]
    pub output: Option<OutputRule>,
    #[serde(default)]
    pub schedule: Option<StepSchedule>,
    /// L2S-SC only: roll back one step on every snapshot.
    #[serde(default = "default_true")]
    pub step_back: bool,
    /// Trace cadence in effective passes.
    #[serde(default)]
    pub record_every: Option<f64>,
    /// Stop after the step on which the IFO count reaches this value.
    #[serde(default)]
    pub max_ifo: Option<u64>,
    /// Starting point; zeros when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

fn default_m() -> u64 {
    1
}

fn default_true() -> bool {
    true
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm, eta: f64, m: u64) -> Self {
        Self {
            algorithm,
            eta,
            m,
            iterations: None,
            epochs: None,
            seed: 0,
            stream: 0,
            output: None,
            schedule: None,
            step_back: true,
            record_every: None,
            max_ifo: None,
            x0: None,
        }
    }

    pub fn with_iterations(mut self, t: u64) -> Self {
        self.iterations = Some(t);
        self
    }

    pub fn with_epochs(mut self, s: u64) -> Self {
        self.epochs = Some(s);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_output(mut self, rule: OutputRule) -> Self {
        self.output = Some(rule);
        self
    }

    pub fn with_schedule(mut self, schedule: StepSchedule) -> Self {
        self.schedule = Some(schedule);
        self
    }

    pub fn with_step_back(mut self, step_back: bool) -> Self {
        self.step_back = step_back;
        self
    }

    pub fn with_record_every(mut self, passes: f64) -> Self {
        self.record_every = Some(passes);
        self
    }

    pub fn with_max_ifo(mut self, budget: u64) -> Self {
        self.max_ifo = Some(budget);
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn output_rule(&self) -> OutputRule {
        self.output.unwrap_or_else(|| self.algorithm.default_output())
    }

    pub fn step_schedule(&self) -> StepSchedule {
        self.schedule.unwrap_or(match self.algorithm {
            Algorithm::Sgd => StepSchedule::PassDecay,
            _ => StepSchedule::Constant,
        })
    }

    /// Checks the configuration against a problem of dimension `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let alg = self.algorithm;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return config(format!("{alg}: step size η = {} must be finite and positive", self.eta));
        }
        match (alg.uses_epochs(), self.iterations, self.epochs) {
            (_, Some(_), Some(_)) => return config(format!("{alg}: set either iterations (T) or epochs (S), not both")),
            (true, Some(_), None) => return config(format!("{alg} is sized by epochs (S), not iterations (T)")),
            (false, None, Some(_)) => return config(format!("{alg} is sized by iterations (T), not epochs (S)")),
            (_, None, None) => {
                let what = if alg.uses_epochs() { "epochs (S)" } else { "iterations (T)" };
                return config(format!("{alg}: {what} not set"));
            }
            _ => {}
        }
        let needs_m = matches!(
            alg,
            Algorithm::Svrg | Algorithm::SarahLi | Algorithm::L2s | Algorithm::L2sSc
        );
        if needs_m && self.m == 0 {
            return config(format!("{alg}: m must be at least 1"));
        }
        if alg == Algorithm::L2s && self.iterations == Some(0) {
            return config("l2s: T must be at least 1 (the output is drawn from x_1..x_T)");
        }
        if alg == Algorithm::L2sSc && self.epochs == Some(0) {
            return config("l2s-sc: S must be at least 1");
        }
        let rule = self.output_rule();
        let allowed = match alg {
            Algorithm::L2s | Algorithm::Sarah | Algorithm::D2s => true,
            _ => rule == OutputRule::LastIterate,
        };
        if !allowed {
            return config(format!("{alg}: output rule {rule:?} is not supported"));
        }
        if self.schedule == Some(StepSchedule::PassDecay) && !matches!(alg, Algorithm::Gd | Algorithm::Sgd) {
            return config(format!("{alg}: the pass-decay schedule is only defined for gd and sgd"));
        }
        if !self.step_back && alg != Algorithm::L2sSc {
            return config(format!("{alg}: step_back = false only applies to l2s-sc"));
        }
        if let Some(r) = self.record_every {
            if !(r > 0.0 && r.is_finite()) {
                return config(format!("record cadence {r} must be a positive number of passes"));
            }
        }
        if self.max_ifo == Some(0) {
            return config("IFO budget must be positive");
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != dim {
                return config(format!("x0 has length {} but the problem has dimension {dim}", x0.len()));
            }
            if x0.iter().any(|v| !v.is_finite()) {
                return config("x0 has non-finite entries");
            }
        }
        Ok(())
    }
}

/// One row of an iterate trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Cumulative IFO / n.
    pub passes: f64,
    pub ifo: u64,
    pub objective: f64,
    pub grad_norm_sq: f64,
}

/// Oracle-call events of a run, counted independently of the live IFO counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IfoLedger {
    /// Full gradients (`n` IFO each), including the initial `v_0`.
    pub full_gradients: u64,
    /// Two-gradient estimator steps (SARAH recursion, SVRG correction).
    pub estimator_steps: u64,
    /// Single component gradients (SGD).
    pub stochastic_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: Algorithm,
    /// The point selected by the output rule.
    pub output: Vec<f64>,
    /// The last computed iterate.
    pub last: Vec<f64>,
    pub trace: Vec<TracePoint>,
    /// Live IFO counter.
    pub ifo: u64,
    pub ledger: IfoLedger,
    /// Component count of the problem, needed to price the ledger.
    pub n: usize,
    /// Iterations at which a full gradient was taken (0 is the initial one).
    pub snapshot_iterations: Vec<u64>,
    /// Number of `x ← x − ηv` updates performed.
    pub iterations: u64,
    /// Completed outer loops (SARAH family, SVRG) or snapshot events (L2S-SC).
    pub epochs: u64,
    /// `(F(x_0), F(x_1))` for algorithms whose first step uses `∇F(x_0)`.
    pub first_step: Option<(f64, f64)>,
    pub stopped_by_budget: bool,
}

impl RunResult {
    /// `F(x_1) ≤ F(x_0)` up to rounding in the objective evaluation.
    pub fn first_step_descends(&self) -> Option<bool> {
        self.first_step
            .map(|(f0, f1)| f1 <= f0 + 4.0 * f64::EPSILON * f0.abs())
    }

    pub fn final_point(&self) -> Option<&TracePoint> {
        self.trace.last()
    }
}

/// IFO total recomputed from the event ledger.
pub fn ifo_count(result: &RunResult) -> u64 {
    let l = &result.ledger;
    result.n as u64 * l.full_gradients + 2 * l.estimator_steps + l.stochastic_steps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// `v_t = ∇F(x_t)`.
    Snapshot,
    /// Two-gradient correction (SARAH/D2S recursion or SVRG).
    Estimator,
    /// Plain stochastic gradient.
    Stochastic,
}

/// State handed to a [`StepObserver`] after `v_t` is formed and before the update.
#[derive(Debug, Clone, Copy)]
pub struct StepEvent<'a> {
    /// Global step counter (updates performed so far).
    pub iteration: u64,
    pub kind: StepKind,
    /// Sampled component, if any.
    pub index: Option<usize>,
    pub x: &'a [f64],
    /// The iterate paired with `x` in the recursion (equal to `x` when there is none).
    pub x_prev: &'a [f64],
    pub v: &'a [f64],
    pub ifo: u64,
}

pub trait StepObserver {
    fn on_step(&mut self, event: &StepEvent<'_>);
}

/// Observer that ignores everything.
pub struct NoObserver;

impl StepObserver for NoObserver {
    fn on_step(&mut self, _: &StepEvent<'_>) {}
}

impl<F: FnMut(&StepEvent<'_>)> StepObserver for F {
    fn on_step(&mut self, event: &StepEvent<'_>) {
        self(event)
    }
}

/// Runs the configured algorithm.
pub fn run(model: &dyn LossModel, config: &OptimizerConfig) -> Result<RunResult> {
    run_with_observer(model, config, &mut NoObserver)
}

pub fn run_with_observer(
    model: &dyn LossModel,
    config: &OptimizerConfig,
    observer: &mut dyn StepObserver,
) -> Result<RunResult> {
    config.validate(model.dim())?;
    match config.algorithm {
        Algorithm::Gd => gd::run(model, config, observer),
        Algorithm::Sgd => sgd::run(model, config, observer),
        Algorithm::Svrg => svrg::run(model, config, observer),
        Algorithm::Sarah | Algorithm::SarahLi | Algorithm::D2s => sarah::run(model, config, observer),
        Algorithm::L2s => l2s::run_l2s(model, config, observer),
        Algorithm::L2sSc => l2s::run_l2s_sc(model, config, observer),
    }
}

macro_rules! entry_point {
    ($name:ident, $alg:expr) => {
        /// Runs with the algorithm field forced to the matching variant.
        pub fn $name(model: &dyn LossModel, config: &OptimizerConfig) -> Result<RunResult> {
            let mut cfg = config.clone();
            cfg.algorithm = $alg;
            run(model, &cfg)
        }
    };
}

entry_point!(run_gd, Algorithm::Gd);
entry_point!(run_sgd, Algorithm::Sgd);
entry_point!(run_svrg, Algorithm::Svrg);
entry_point!(run_sarah, Algorithm::Sarah);
entry_point!(run_sarah_li, Algorithm::SarahLi);
entry_point!(run_l2s, Algorithm::L2s);
entry_point!(run_l2s_sc, Algorithm::L2sSc);
entry_point!(run_d2s, Algorithm::D2s);
