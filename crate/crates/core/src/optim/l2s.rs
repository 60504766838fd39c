//! Loopless SARAH: a single loop in which every step takes a full gradient
//! with probability `1/m` and the SARAH recursion otherwise.

use crate::error::Result;
use crate::model::LossModel;
use crate::sampling::{draw_snapshot_flag, draw_uniform_index, RunStreams};

use super::session::{accumulate, step, Session};
use super::{OptimizerConfig, OutputRule, RunResult, StepKind, StepObserver};

/// Buffers and per-step logic shared by L2S and L2S-SC.
struct Loop<'a> {
    s: Session<'a>,
    streams: RunStreams,
    eta: f64,
    m: u64,
    x: Vec<f64>,
    x_prev: Vec<f64>,
    v: Vec<f64>,
    g_new: Vec<f64>,
    g_old: Vec<f64>,
}

impl<'a> Loop<'a> {
    fn new(model: &'a dyn LossModel, config: &OptimizerConfig, observer: &'a mut dyn StepObserver) -> Self {
        let s = Session::new(model, config, observer);
        let x = s.start_point(config);
        let d = x.len();
        Self {
            s,
            streams: RunStreams::new(config.seed, config.stream),
            eta: config.eta,
            m: config.m,
            x_prev: x.clone(),
            x,
            v: vec![0.0; d],
            g_new: vec![0.0; d],
            g_old: vec![0.0; d],
        }
    }

    /// `v_0 = ∇F(x_0)`, `x_1 = x_0 − η v_0`.
    fn initial_step(&mut self) -> Result<bool> {
        self.s.begin(&self.x, true)?;
        self.s.full_gradient(&self.x, &mut self.v)?;
        self.s.observe(StepKind::Snapshot, None, &self.x, &self.x_prev, &self.v);
        self.update()
    }

    /// Draws `B_t` and `i_t`, forms `v_t`, then updates. `step_back` rolls `x_t`
    /// back to `x_{t−1}` before a snapshot. Returns `(B_t, budget spent)`.
    fn step(&mut self, step_back: bool) -> Result<(bool, bool)> {
        let snapshot = draw_snapshot_flag(&mut self.streams.snapshot, self.m)?;
        // Drawn on every step so the index sequence does not depend on m.
        let i = draw_uniform_index(&mut self.streams.index, self.s.n)?;
        if snapshot {
            if step_back {
                self.x.copy_from_slice(&self.x_prev);
            }
            self.s.full_gradient(&self.x, &mut self.v)?;
            self.s.observe(StepKind::Snapshot, None, &self.x, &self.x_prev, &self.v);
        } else {
            self.s.component_gradient(i, &self.x, &mut self.g_new)?;
            self.s.component_gradient(i, &self.x_prev, &mut self.g_old)?;
            self.s.estimator_step();
            accumulate(&mut self.v, 1.0, &self.g_new, &self.g_old);
            self.s.observe(StepKind::Estimator, Some(i), &self.x, &self.x_prev, &self.v);
        }
        Ok((snapshot, self.update()?))
    }

    fn update(&mut self) -> Result<bool> {
        self.x_prev.copy_from_slice(&self.x);
        step(&mut self.x, self.eta, &self.v);
        self.s.after_update(&self.x)
    }
}

/// L2S for `T` iterations. The uniform output index `a ∈ {1..T}` is drawn up
/// front and `x_a` is copied when reached.
pub(super) fn run_l2s(model: &dyn LossModel, config: &OptimizerConfig, observer: &mut dyn StepObserver) -> Result<RunResult> {
    let t_max = config.iterations.expect("validated");
    let mut lp = Loop::new(model, config, observer);
    let target = match config.output_rule() {
        OutputRule::UniformRandomIterate => Some(1 + lp.streams.output.below(t_max)),
        OutputRule::LastIterate => None,
    };
    let mut output = None;

    let mut spent = lp.initial_step()?;
    if target == Some(1) {
        output = Some(lp.x.clone());
    }
    let mut snapshots = 0;
    let mut t = 1;
    while t <= t_max && !spent {
        let (snapshot, now_spent) = lp.step(false)?;
        spent = now_spent;
        snapshots += u64::from(snapshot);
        if target == Some(t + 1) {
            output = Some(lp.x.clone());
        }
        t += 1;
    }
    // Without a uniform draw, or if the budget stopped the run before x_a, the
    // last iterate is returned.
    let output = output.unwrap_or_else(|| lp.x.clone());
    let last = lp.x;
    lp.s.finish(output, last, snapshots, spent && t <= t_max)
}

/// L2S-SC: runs until `S` Bernoulli snapshots have happened, applies the
/// update that follows the last one, and returns the last iterate.
pub(super) fn run_l2s_sc(model: &dyn LossModel, config: &OptimizerConfig, observer: &mut dyn StepObserver) -> Result<RunResult> {
    let target = config.epochs.expect("validated");
    let mut lp = Loop::new(model, config, observer);
    let mut spent = lp.initial_step()?;
    let mut snapshots = 0;
    while snapshots < target && !spent {
        let (snapshot, now_spent) = lp.step(config.step_back)?;
        spent = now_spent;
        snapshots += u64::from(snapshot);
    }
    let last = lp.x;
    lp.s.finish(last.clone(), last, snapshots, spent && snapshots < target)
}
