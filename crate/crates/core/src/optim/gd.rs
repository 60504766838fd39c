use crate::error::Result;
use crate::model::LossModel;

use super::session::{step, Session};
use super::{OptimizerConfig, RunResult, StepKind, StepObserver, StepSchedule};

/// `x_{k+1} = x_k − η_k ∇F(x_k)` for `T` steps.
pub(super) fn run(model: &dyn LossModel, config: &OptimizerConfig, observer: &mut dyn StepObserver) -> Result<RunResult> {
    let mut s = Session::new(model, config, observer);
    let n = s.n as u64;
    let t_max = config.iterations.expect("validated");
    let schedule = config.step_schedule();
    let mut x = s.start_point(config);
    let mut g = vec![0.0; x.len()];
    s.begin(&x, true)?;

    let mut stopped = false;
    for k in 0..t_max {
        let eta = step_size(config.eta, schedule, s.ifo(), n);
        s.full_gradient(&x, &mut g)?;
        s.observe(StepKind::Snapshot, None, &x, &x, &g);
        step(&mut x, eta, &g);
        if s.after_update(&x)? {
            stopped = k + 1 < t_max;
            break;
        }
    }
    s.finish(x.clone(), x, 0, stopped)
}

/// Step size for the given schedule; `k = ⌊ifo/n⌋` is the current effective pass.
pub(super) fn step_size(eta: f64, schedule: StepSchedule, ifo: u64, n: u64) -> f64 {
    match schedule {
        StepSchedule::Constant => eta,
        StepSchedule::PassDecay => eta / ((ifo / n) as f64 + 1.0),
    }
}
