//! Bookkeeping shared by every runner: counted oracle calls, the IFO ledger,
//! trace recording, budget and divergence checks.

use crate::error::{Error, Result};
use crate::model::{norm_sq, LossModel, Oracle};

use super::{
    Algorithm, IfoLedger, OptimizerConfig, RunResult, StepEvent, StepKind, StepObserver, TracePoint,
};

/// Iterates beyond this norm (or objective) count as diverged.
pub(crate) const DIVERGENCE_THRESHOLD: f64 = 1e12;

pub(crate) struct Session<'a> {
    model: &'a dyn LossModel,
    oracle: Oracle<'a>,
    observer: &'a mut dyn StepObserver,
    algorithm: Algorithm,
    pub(crate) n: usize,
    pub(crate) ledger: IfoLedger,
    pub(crate) iteration: u64,
    pub(crate) snapshots: Vec<u64>,
    trace: Vec<TracePoint>,
    cadence_ifo: f64,
    last_bucket: u64,
    max_ifo: Option<u64>,
    scratch: Vec<f64>,
    first_step: Option<(f64, f64)>,
    pending_f0: Option<f64>,
}

impl<'a> Session<'a> {
    pub(crate) fn new(
        model: &'a dyn LossModel,
        config: &OptimizerConfig,
        observer: &'a mut dyn StepObserver,
    ) -> Self {
        let n = model.num_components();
        Self {
            model,
            oracle: Oracle::new(model),
            observer,
            algorithm: config.algorithm,
            n,
            ledger: IfoLedger::default(),
            iteration: 0,
            snapshots: Vec::new(),
            trace: Vec::new(),
            cadence_ifo: config.record_every.unwrap_or(1.0) * n as f64,
            last_bucket: 0,
            max_ifo: config.max_ifo,
            scratch: vec![0.0; model.dim()],
            first_step: None,
            pending_f0: None,
        }
    }

    pub(crate) fn start_point(&self, config: &OptimizerConfig) -> Vec<f64> {
        config.x0.clone().unwrap_or_else(|| vec![0.0; self.model.dim()])
    }

    pub(crate) fn ifo(&self) -> u64 {
        self.oracle.ifo()
    }

    /// Records the trace point at `x_0`. With `descent_check`, also keeps `F(x_0)`
    /// so the first update can be checked for descent.
    pub(crate) fn begin(&mut self, x0: &[f64], descent_check: bool) -> Result<()> {
        self.guard(x0)?;
        self.record(x0)?;
        if descent_check {
            self.pending_f0 = Some(self.model.objective(x0));
        }
        Ok(())
    }

    pub(crate) fn full_gradient(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.oracle.full_gradient_into(x, out)?;
        self.ledger.full_gradients += 1;
        self.snapshots.push(self.iteration);
        Ok(())
    }

    pub(crate) fn component_gradient(&mut self, i: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.oracle.component_gradient_into(i, x, out)
    }

    /// Counts one finished two-gradient estimator step in the ledger.
    pub(crate) fn estimator_step(&mut self) {
        self.ledger.estimator_steps += 1;
    }

    pub(crate) fn stochastic_step(&mut self) {
        self.ledger.stochastic_steps += 1;
    }

    pub(crate) fn observe(&mut self, kind: StepKind, index: Option<usize>, x: &[f64], x_prev: &[f64], v: &[f64]) {
        let event = StepEvent {
            iteration: self.iteration,
            kind,
            index,
            x,
            x_prev,
            v,
            ifo: self.oracle.ifo(),
        };
        self.observer.on_step(&event);
    }

    /// Bookkeeping after `x ← x − ηv`. Returns true when the IFO budget is spent.
    pub(crate) fn after_update(&mut self, x: &[f64]) -> Result<bool> {
        self.iteration += 1;
        self.guard(x)?;
        if let Some(f0) = self.pending_f0.take() {
            self.first_step = Some((f0, self.model.objective(x)));
        }
        let bucket = (self.oracle.ifo() as f64 / self.cadence_ifo).floor() as u64;
        if bucket > self.last_bucket {
            self.last_bucket = bucket;
            self.record(x)?;
        }
        Ok(self.max_ifo.is_some_and(|b| self.oracle.ifo() >= b))
    }

    fn guard(&self, x: &[f64]) -> Result<()> {
        let norm = norm_sq(x).sqrt();
        if !norm.is_finite() || norm > DIVERGENCE_THRESHOLD {
            return Err(Error::Diverged {
                iteration: self.iteration,
                reason: format!("‖x‖ = {norm:e}"),
            });
        }
        Ok(())
    }

    fn record(&mut self, x: &[f64]) -> Result<()> {
        let objective = self.model.objective(x);
        if !objective.is_finite() || objective.abs() > DIVERGENCE_THRESHOLD {
            return Err(Error::Diverged {
                iteration: self.iteration,
                reason: format!("F(x) = {objective:e}"),
            });
        }
        // Uncounted: trace evaluation is measurement, not part of the algorithm.
        self.model.full_gradient_into(x, &mut self.scratch);
        let ifo = self.oracle.ifo();
        self.trace.push(TracePoint {
            passes: ifo as f64 / self.n as f64,
            ifo,
            objective,
            grad_norm_sq: norm_sq(&self.scratch),
        });
        Ok(())
    }

    pub(crate) fn finish(
        mut self,
        output: Vec<f64>,
        last: Vec<f64>,
        epochs: u64,
        stopped_by_budget: bool,
    ) -> Result<RunResult> {
        if self.trace.last().map(|p| p.ifo) != Some(self.oracle.ifo()) {
            self.record(&last)?;
        }
        Ok(RunResult {
            algorithm: self.algorithm,
            output,
            last,
            trace: self.trace,
            ifo: self.oracle.ifo(),
            ledger: self.ledger,
            n: self.n,
            snapshot_iterations: self.snapshots,
            iterations: self.iteration,
            epochs,
            first_step: self.first_step,
            stopped_by_budget,
        })
    }
}

/// `x ← x − η v`.
#[inline]
pub(crate) fn step(x: &mut [f64], eta: f64, v: &[f64]) {
    x.iter_mut().zip(v).for_each(|(xi, vi)| *xi -= eta * vi);
}

/// `v ← v + w (g_new − g_old)`.
#[inline]
pub(crate) fn accumulate(v: &mut [f64], w: f64, g_new: &[f64], g_old: &[f64]) {
    for ((vj, a), b) in v.iter_mut().zip(g_new).zip(g_old) {
        *vj += w * (a - b);
    }
}
