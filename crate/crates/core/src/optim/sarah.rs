//! SARAH, last-iterate SARAH and D2S. They share one outer/inner loop and
//! differ in how `i_t` is drawn, how increments are weighted and which inner
//! iterate becomes the next restart point.

use crate::error::Result;
use crate::model::LossModel;
use crate::sampling::{draw_uniform_index, ImportanceTable, RunStreams};

use super::session::{accumulate, step, Session};
use super::{Algorithm, OptimizerConfig, OutputRule, RunResult, StepKind, StepObserver};

pub(super) fn run(model: &dyn LossModel, config: &OptimizerConfig, observer: &mut dyn StepObserver) -> Result<RunResult> {
    let table = match config.algorithm {
        Algorithm::D2s => Some(ImportanceTable::new(&model.smoothness().per_component)?),
        _ => None,
    };
    let mut s = Session::new(model, config, observer);
    let mut streams = RunStreams::new(config.seed, config.stream);
    let n = s.n;
    let m = config.m;
    let eta = config.eta;
    let outer = config.epochs.expect("validated");
    let uniform_restart = config.output_rule() == OutputRule::UniformRandomIterate;

    let mut x = s.start_point(config);
    let d = x.len();
    let mut x_prev = x.clone();
    let mut restart = x.clone();
    let mut v = vec![0.0; d];
    let mut g_new = vec![0.0; d];
    let mut g_old = vec![0.0; d];
    s.begin(&x, true)?;

    let mut last = x.clone();
    let mut epochs = 0;
    let mut stopped = false;
    for k in 0..outer {
        // Index of the inner iterate x_r kept as the next restart point. With
        // m = 0 there is no inner loop and the outer loop is a plain GD step.
        let r = if m == 0 {
            1
        } else if uniform_restart {
            streams.output.below(m + 1)
        } else {
            m
        };
        x_prev.copy_from_slice(&x);
        s.full_gradient(&x, &mut v)?;
        s.observe(StepKind::Snapshot, None, &x, &x_prev, &v);
        step(&mut x, eta, &v);
        if r == 0 {
            restart.copy_from_slice(&x_prev);
        } else if r == 1 {
            restart.copy_from_slice(&x);
        }
        let mut spent = s.after_update(&x)?;
        let mut t = 1;
        while t <= m && !spent {
            let (i, w) = match &table {
                Some(table) => {
                    let i = table.draw(&mut streams.index, &mut streams.coin);
                    (i, table.weight(i))
                }
                None => (draw_uniform_index(&mut streams.index, n)?, 1.0),
            };
            s.component_gradient(i, &x, &mut g_new)?;
            s.component_gradient(i, &x_prev, &mut g_old)?;
            s.estimator_step();
            accumulate(&mut v, w, &g_new, &g_old);
            s.observe(StepKind::Estimator, Some(i), &x, &x_prev, &v);
            x_prev.copy_from_slice(&x);
            step(&mut x, eta, &v);
            if r == t + 1 {
                restart.copy_from_slice(&x);
            }
            spent = s.after_update(&x)?;
            t += 1;
        }
        last.copy_from_slice(&x);
        if t <= m {
            // Budget ran out inside the inner loop; the restart point may not exist yet.
            return s.finish(x, last, epochs, true);
        }
        x.copy_from_slice(&restart);
        epochs += 1;
        if spent {
            stopped = k + 1 < outer;
            break;
        }
    }
    s.finish(x, last, epochs, stopped)
}
