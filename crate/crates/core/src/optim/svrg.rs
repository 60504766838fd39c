use crate::error::Result;
use crate::model::LossModel;
use crate::sampling::{draw_uniform_index, RunStreams};

use super::session::{step, Session};
use super::{OptimizerConfig, RunResult, StepKind, StepObserver};

/// SVRG with `m` inner steps per snapshot and last-inner-iterate restart.
pub(super) fn run(model: &dyn LossModel, config: &OptimizerConfig, observer: &mut dyn StepObserver) -> Result<RunResult> {
    let mut s = Session::new(model, config, observer);
    let mut streams = RunStreams::new(config.seed, config.stream);
    let n = s.n;
    let eta = config.eta;
    let outer = config.epochs.expect("validated");
    let mut x = s.start_point(config);
    let d = x.len();
    let mut anchor = x.clone();
    let mut mu = vec![0.0; d];
    let mut g_x = vec![0.0; d];
    let mut g_anchor = vec![0.0; d];
    let mut v = vec![0.0; d];
    s.begin(&x, true)?;

    let mut epochs = 0;
    let mut stopped = false;
    'outer: for k in 0..outer {
        anchor.copy_from_slice(&x);
        s.full_gradient(&anchor, &mut mu)?;
        for t in 0..config.m {
            let i = draw_uniform_index(&mut streams.index, n)?;
            s.component_gradient(i, &x, &mut g_x)?;
            s.component_gradient(i, &anchor, &mut g_anchor)?;
            s.estimator_step();
            for (((vj, a), b), c) in v.iter_mut().zip(&g_x).zip(&g_anchor).zip(&mu) {
                *vj = a - b + c;
            }
            s.observe(StepKind::Estimator, Some(i), &x, &anchor, &v);
            step(&mut x, eta, &v);
            if s.after_update(&x)? {
                stopped = k + 1 < outer || t + 1 < config.m;
                if t + 1 == config.m {
                    epochs += 1;
                }
                break 'outer;
            }
        }
        epochs += 1;
    }
    s.finish(x.clone(), x, epochs, stopped)
}
