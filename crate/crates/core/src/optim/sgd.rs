use crate::error::Result;
use crate::model::LossModel;
use crate::sampling::{draw_uniform_index, RunStreams};

use super::gd::step_size;
use super::session::{step, Session};
use super::{OptimizerConfig, RunResult, StepKind, StepObserver};

/// Plain SGD with uniform sampling; `T` single-gradient steps.
pub(super) fn run(model: &dyn LossModel, config: &OptimizerConfig, observer: &mut dyn StepObserver) -> Result<RunResult> {
    let mut s = Session::new(model, config, observer);
    let mut streams = RunStreams::new(config.seed, config.stream);
    let n = s.n;
    let t_max = config.iterations.expect("validated");
    let schedule = config.step_schedule();
    let mut x = s.start_point(config);
    let mut g = vec![0.0; x.len()];
    s.begin(&x, false)?;

    let mut stopped = false;
    for k in 0..t_max {
        let eta = step_size(config.eta, schedule, s.ifo(), n as u64);
        let i = draw_uniform_index(&mut streams.index, n)?;
        s.component_gradient(i, &x, &mut g)?;
        s.stochastic_step();
        s.observe(StepKind::Stochastic, Some(i), &x, &x, &g);
        step(&mut x, eta, &g);
        if s.after_update(&x)? {
            stopped = k + 1 < t_max;
            break;
        }
    }
    s.finish(x.clone(), x, 0, stopped)
}
