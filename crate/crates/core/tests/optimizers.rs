mod common;

use common::{equal_norm_dataset, gaussian_point, grad_norm_sq, logistic, random_dataset};
use l2s::model::{norm_sq, LogisticModel, LossModel};
use l2s::optim::{
    ifo_count, run, run_with_observer, Algorithm, OptimizerConfig, OutputRule, StepEvent, StepKind, StepSchedule,
};
use l2s::Error;
use proptest::prelude::*;

fn cfg(alg: Algorithm, eta: f64, m: u64) -> OptimizerConfig {
    OptimizerConfig::new(alg, eta, m)
}

#[test]
fn gd_zero_iterations_returns_start() {
    let model = logistic(10, 3, 0.1, 1);
    let x0 = vec![0.5, -0.25, 1.0];
    let r = run(&model, &cfg(Algorithm::Gd, 0.1, 1).with_iterations(0).with_x0(x0.clone())).unwrap();
    assert_eq!(r.output, x0);
    assert_eq!(r.ifo, 0);
    assert_eq!(r.trace.len(), 1);
}

#[test]
fn gd_single_component_descends_monotonically() {
    let model = logistic(1, 4, 0.1, 2);
    let l = model.smoothness().max;
    let x0 = vec![3.0, -2.0, 1.0, 0.5];
    let r = run(&model, &cfg(Algorithm::Gd, 1.0 / l, 1).with_iterations(50).with_x0(x0).with_record_every(1.0)).unwrap();
    assert_eq!(r.trace.len(), 51);
    for w in r.trace.windows(2) {
        assert!(w[1].objective <= w[0].objective);
    }
}

#[test]
fn gd_converges_linearly_on_strongly_convex_instance() {
    let model = logistic(40, 5, 0.05, 3);
    let l = model.smoothness().max;
    // Reference optimum from a long run.
    let star = run(&model, &cfg(Algorithm::Gd, 1.0 / l, 1).with_iterations(20_000)).unwrap().output;
    assert!(grad_norm_sq(&model, &star) < 1e-28);
    let x0 = gaussian_point(5, 1.0, 3);
    let dist = |x: &[f64]| x.iter().zip(&star).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let t = 100;
    let r = run(&model, &cfg(Algorithm::Gd, 1.0 / l, 1).with_iterations(t).with_x0(x0.clone())).unwrap();
    let c = (dist(&r.output) / dist(&x0)).powf(1.0 / t as f64);
    assert!(c < 1.0, "measured contraction {c}");
    assert_eq!(r.ifo, 40 * t);
}

#[test]
fn sgd_reduces_gradient_norm_tenfold_in_fifty_passes() {
    let model = logistic(200, 10, 0.01, 4);
    let l = model.smoothness().max;
    let x0 = gaussian_point(10, 1.0, 4);
    let r = run(&model, &cfg(Algorithm::Sgd, 1.0 / l, 1).with_iterations(50 * 200).with_x0(x0.clone())).unwrap();
    let start = grad_norm_sq(&model, &x0);
    let end = grad_norm_sq(&model, &r.output);
    assert!(end * 10.0 <= start, "start {start}, end {end}");
    assert_eq!(r.ifo, 50 * 200);
    assert_eq!(ifo_count(&r), r.ifo);
}

#[test]
fn svrg_estimator_is_unbiased_on_frozen_points() {
    let model = LogisticModel::l2(random_dataset(15, 4, 5), 0.1).unwrap();
    let x = gaussian_point(4, 1.0, 50);
    let anchor = gaussian_point(4, 1.0, 51);
    let mut mu = vec![0.0; 4];
    model.full_gradient_into(&anchor, &mut mu);
    let mut gx = vec![0.0; 4];
    let mut ga = vec![0.0; 4];
    let mut mean = [0.0; 4];
    for i in 0..15 {
        model.component_gradient_into(i, &x, &mut gx);
        model.component_gradient_into(i, &anchor, &mut ga);
        for j in 0..4 {
            mean[j] += (gx[j] - ga[j] + mu[j]) / 15.0;
        }
    }
    let mut full = vec![0.0; 4];
    model.full_gradient_into(&x, &mut full);
    for j in 0..4 {
        assert!((mean[j] - full[j]).abs() <= 1e-13 * full[j].abs().max(1.0));
    }
}

#[test]
fn svrg_decays_geometrically_and_counts_ifo() {
    let model = logistic(100, 8, 0.01, 6);
    let l = model.smoothness().max;
    let (n, m, s) = (100u64, 100u64, 15u64);
    let mut snapshots = Vec::new();
    let mut obs = |e: &StepEvent<'_>| {
        if e.kind == StepKind::Estimator && e.x == e.x_prev {
            snapshots.push(grad_norm_sq(&model, e.x_prev));
        }
    };
    let r = run_with_observer(&model, &cfg(Algorithm::Svrg, 0.2 / l, m).with_epochs(s), &mut obs).unwrap();
    assert_eq!(r.ifo, s * (n + 2 * m));
    assert_eq!(ifo_count(&r), r.ifo);
    assert_eq!(snapshots.len() as u64, s);
    let slope = (snapshots[s as usize - 1] / snapshots[0]).powf(1.0 / (s - 1) as f64);
    assert!(slope < 1.0, "slope {slope}");
}

#[test]
fn svrg_rejects_zero_inner_length() {
    let model = logistic(10, 3, 0.1, 7);
    assert!(matches!(run(&model, &cfg(Algorithm::Svrg, 0.1, 0).with_epochs(1)), Err(Error::Config(_))));
}

#[test]
fn sarah_ifo_totals_are_exact() {
    let model = logistic(50, 4, 0.1, 8);
    let l = model.smoothness().max;
    for (m, s) in [(1u64, 1u64), (7, 3), (50, 4), (0, 5)] {
        for alg in [Algorithm::Sarah, Algorithm::D2s] {
            let r = run(&model, &cfg(alg, 0.5 / l, m).with_epochs(s)).unwrap();
            assert_eq!(r.ifo, s * (50 + 2 * m), "{alg} m={m} s={s}");
            assert_eq!(ifo_count(&r), r.ifo);
            assert_eq!(r.epochs, s);
        }
    }
}

#[test]
fn sarah_zero_inner_length_is_gd() {
    let model = logistic(30, 4, 0.1, 9);
    let l = model.smoothness().max;
    let sarah = run(&model, &cfg(Algorithm::Sarah, 0.5 / l, 0).with_epochs(12)).unwrap();
    let gd = run(&model, &cfg(Algorithm::Gd, 0.5 / l, 1).with_iterations(12)).unwrap();
    assert_eq!(sarah.output, gd.output);
    assert_eq!(sarah.trace, gd.trace);
}

#[test]
fn sarah_estimator_telescopes() {
    let model = LogisticModel::l2(random_dataset(25, 4, 10), 0.05).unwrap();
    let l = model.smoothness().max;
    let mut v0 = Vec::new();
    let mut increments = [0.0; 4];
    let mut worst = 0.0f64;
    let mut obs = |e: &StepEvent<'_>| match e.kind {
        StepKind::Snapshot => {
            v0 = e.v.to_vec();
            increments.fill(0.0);
        }
        _ => {
            let i = e.index.unwrap();
            let mut a = vec![0.0; 4];
            let mut b = vec![0.0; 4];
            model.component_gradient_into(i, e.x, &mut a);
            model.component_gradient_into(i, e.x_prev, &mut b);
            for j in 0..4 {
                increments[j] += a[j] - b[j];
                let recon = v0[j] + increments[j];
                worst = worst.max((recon - e.v[j]).abs() / e.v[j].abs().max(1.0));
            }
        }
    };
    run_with_observer(&model, &cfg(Algorithm::Sarah, 0.5 / l, 40).with_epochs(3), &mut obs).unwrap();
    assert!(worst <= 1e-12, "telescoping error {worst}");
}

#[test]
fn sarah_li_equals_sarah_with_last_iterate_restart() {
    let model = logistic(40, 5, 0.05, 11);
    let l = model.smoothness().max;
    let base = cfg(Algorithm::Sarah, 0.5 / l, 20).with_epochs(5).with_seed(3);
    let forced = run(&model, &base.clone().with_output(OutputRule::LastIterate)).unwrap();
    let li = run(&model, &OptimizerConfig { algorithm: Algorithm::SarahLi, ..base }).unwrap();
    assert_eq!(forced.output, li.output);
    assert_eq!(forced.trace, li.trace);
    assert_eq!(forced.ifo, li.ifo);
}

#[test]
fn sarah_li_needs_positive_m() {
    let model = logistic(10, 3, 0.1, 12);
    assert!(matches!(run(&model, &cfg(Algorithm::SarahLi, 0.1, 0).with_epochs(1)), Err(Error::Config(_))));
}

#[test]
fn d2s_increment_is_conditionally_unbiased() {
    let ds = common::synthetic(30, 4, 8.0, 13);
    let model = LogisticModel::l2(ds, 0.01).unwrap();
    let table = l2s::sampling::ImportanceTable::new(&model.smoothness().per_component).unwrap();
    let x = gaussian_point(4, 1.0, 60);
    let xp = gaussian_point(4, 1.0, 61);
    let mut sum = [0.0; 4];
    let (mut a, mut b) = (vec![0.0; 4], vec![0.0; 4]);
    for i in 0..30 {
        model.component_gradient_into(i, &x, &mut a);
        model.component_gradient_into(i, &xp, &mut b);
        let p = table.probabilities()[i];
        for j in 0..4 {
            sum[j] += p * table.weight(i) * (a[j] - b[j]);
        }
    }
    let (mut fa, mut fb) = (vec![0.0; 4], vec![0.0; 4]);
    model.full_gradient_into(&x, &mut fa);
    model.full_gradient_into(&xp, &mut fb);
    for j in 0..4 {
        assert!((sum[j] - (fa[j] - fb[j])).abs() <= 1e-13);
    }
}

#[test]
fn d2s_matches_sarah_on_homogeneous_rows() {
    let model = LogisticModel::l2(equal_norm_dataset(60, 12, 4, 14), 0.02).unwrap();
    assert!(l2s::sampling::ImportanceTable::new(&model.smoothness().per_component)
        .unwrap()
        .is_homogeneous());
    let l = model.smoothness().max;
    let base = cfg(Algorithm::Sarah, 0.5 / l, 30).with_epochs(6).with_seed(21);
    let sarah = run(&model, &base).unwrap();
    let d2s = run(&model, &OptimizerConfig { algorithm: Algorithm::D2s, ..base }).unwrap();
    assert_eq!(sarah.output, d2s.output);
    assert_eq!(sarah.last, d2s.last);
    assert_eq!(sarah.trace, d2s.trace);
}

#[test]
fn l2s_with_m_one_is_gd() {
    let model = logistic(30, 4, 0.0, 15);
    let l = model.smoothness().max;
    let t = 25;
    let l2s = run(&model, &cfg(Algorithm::L2s, 0.5 / l, 1).with_iterations(t).with_output(OutputRule::LastIterate)).unwrap();
    let gd = run(&model, &cfg(Algorithm::Gd, 0.5 / l, 1).with_iterations(t + 1)).unwrap();
    assert_eq!(l2s.output, gd.output);
    assert_eq!(l2s.trace, gd.trace);
    assert_eq!(l2s.ifo, 30 * (t + 1));
    assert_eq!(ifo_count(&l2s), 30 * (t + 1));
}

#[test]
fn sgd_with_one_component_is_gd() {
    let model = logistic(1, 5, 0.1, 16);
    let l = model.smoothness().max;
    let x0 = gaussian_point(5, 1.0, 16);
    for schedule in [StepSchedule::Constant, StepSchedule::PassDecay] {
        let sgd = run(
            &model,
            &cfg(Algorithm::Sgd, 1.0 / l, 1).with_iterations(40).with_schedule(schedule).with_x0(x0.clone()),
        )
        .unwrap();
        let gd = run(
            &model,
            &cfg(Algorithm::Gd, 1.0 / l, 1).with_iterations(40).with_schedule(schedule).with_x0(x0.clone()),
        )
        .unwrap();
        assert_eq!(sgd.output, gd.output);
        assert_eq!(sgd.trace, gd.trace);
    }
}

#[test]
fn snapshot_estimates_equal_full_gradient_exactly() {
    let model = logistic(40, 6, 0.01, 17);
    let l = model.smoothness().max;
    for alg in [Algorithm::Sarah, Algorithm::SarahLi, Algorithm::D2s, Algorithm::L2s, Algorithm::L2sSc, Algorithm::Gd] {
        let mut seen = 0;
        let mut obs = |e: &StepEvent<'_>| {
            if e.kind == StepKind::Snapshot {
                let mut g = vec![0.0; e.x.len()];
                model.full_gradient_into(e.x, &mut g);
                assert_eq!(g.as_slice(), e.v, "{alg}");
                seen += 1;
            }
        };
        let mut c = cfg(alg, 0.5 / l, 10).with_seed(4);
        c = if alg.uses_epochs() { c.with_epochs(5) } else { c.with_iterations(100) };
        let r = run_with_observer(&model, &c, &mut obs).unwrap();
        assert_eq!(seen as u64, r.ledger.full_gradients, "{alg}");
        assert_eq!(r.snapshot_iterations.len() as u64, r.ledger.full_gradients);
    }
}

#[test]
fn l2s_sc_steps_back_on_snapshots() {
    let model = logistic(40, 6, 0.01, 18);
    let l = model.smoothness().max;
    let mut checked = 0;
    let mut obs = |e: &StepEvent<'_>| {
        if e.kind == StepKind::Snapshot && e.iteration > 0 {
            assert_eq!(e.x, e.x_prev);
            checked += 1;
        }
    };
    let r = run_with_observer(&model, &cfg(Algorithm::L2sSc, 0.5 / l, 8).with_epochs(10).with_seed(2), &mut obs).unwrap();
    assert_eq!(checked, 10);
    assert_eq!(r.epochs, 10);
    assert_eq!(r.output, r.last);
    // The run ends with the update that follows the final snapshot.
    assert_eq!(*r.snapshot_iterations.last().unwrap() + 1, r.iterations);

    let mut differs = 0;
    let mut obs = |e: &StepEvent<'_>| {
        if e.kind == StepKind::Snapshot && e.iteration > 0 && e.x != e.x_prev {
            differs += 1;
        }
    };
    run_with_observer(
        &model,
        &cfg(Algorithm::L2sSc, 0.5 / l, 8).with_epochs(10).with_seed(2).with_step_back(false),
        &mut obs,
    )
    .unwrap();
    assert_eq!(differs, 10);
}

#[test]
fn l2s_sc_rejects_zero_epochs() {
    let model = logistic(10, 3, 0.1, 19);
    assert!(matches!(run(&model, &cfg(Algorithm::L2sSc, 0.1, 4).with_epochs(0)), Err(Error::Config(_))));
}

#[test]
fn l2s_rejects_both_lengths() {
    let model = logistic(10, 3, 0.1, 19);
    let c = cfg(Algorithm::L2s, 0.1, 4).with_iterations(5).with_epochs(1);
    assert!(matches!(run(&model, &c), Err(Error::Config(_))));
}

#[test]
fn l2s_index_sequence_is_independent_of_m() {
    let model = logistic(20, 3, 0.1, 20);
    let indices = |m: u64| {
        let mut seen = Vec::new();
        let mut obs = |e: &StepEvent<'_>| {
            if let Some(i) = e.index {
                seen.push((e.iteration, i));
            }
        };
        run_with_observer(&model, &cfg(Algorithm::L2s, 0.1, m).with_iterations(200), &mut obs).unwrap();
        seen
    };
    let a = indices(3);
    let b = indices(50);
    let common: Vec<_> = a.iter().filter(|p| b.contains(p)).collect();
    // Every iteration that is an estimator step under both schedules used the same index.
    assert!(common.len() > 100);
    for (t, i) in &a {
        if let Some((_, j)) = b.iter().find(|(u, _)| u == t) {
            assert_eq!(i, j);
        }
    }
}

#[test]
fn divergence_is_reported_with_iteration() {
    let model = logistic(20, 3, 0.0, 21);
    let l = model.smoothness().max;
    let x0 = vec![5.0, 5.0, 5.0];
    let err = run(&model, &cfg(Algorithm::Gd, 1e13 / l, 1).with_iterations(10).with_x0(x0)).unwrap_err();
    match err {
        Error::Diverged { iteration, .. } => assert_eq!(iteration, 1),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn budget_stops_after_crossing() {
    let model = logistic(50, 4, 0.1, 22);
    let l = model.smoothness().max;
    let r = run(&model, &cfg(Algorithm::L2s, 0.5 / l, 10).with_iterations(1_000_000).with_max_ifo(500)).unwrap();
    assert!(r.stopped_by_budget);
    assert!(r.ifo >= 500 && r.ifo < 500 + 50);
    assert_eq!(ifo_count(&r), r.ifo);
    let p = r.trace.last().unwrap();
    assert_eq!(p.ifo, r.ifo);
}

#[test]
fn trace_passes_are_nondecreasing_and_cadenced() {
    let model = logistic(50, 4, 0.1, 23);
    let l = model.smoothness().max;
    let r = run(&model, &cfg(Algorithm::Sarah, 0.5 / l, 50).with_epochs(10).with_record_every(0.5)).unwrap();
    assert_eq!(r.trace[0].ifo, 0);
    for w in r.trace.windows(2) {
        assert!(w[1].passes > w[0].passes);
    }
    // 30 passes at half-pass cadence is 60 boundaries, but each snapshot (one
    // full pass) jumps two boundaries in a single step: 60 - 10 + start point.
    assert_eq!(r.trace.len(), 51);
}

#[test]
fn runs_are_deterministic() {
    let model = logistic(40, 5, 0.01, 24);
    let l = model.smoothness().max;
    for alg in Algorithm::ALL {
        let mut c = cfg(alg, 0.3 / l, 15).with_seed(99).with_stream(3);
        c = if alg.uses_epochs() { c.with_epochs(4) } else { c.with_iterations(150) };
        assert_eq!(run(&model, &c).unwrap(), run(&model, &c).unwrap(), "{alg}");
    }
}

#[test]
fn first_step_descends_for_every_full_gradient_start() {
    let model = logistic(40, 5, 0.01, 25);
    let l = model.smoothness().max;
    for alg in Algorithm::ALL {
        let mut c = cfg(alg, 0.9 / l, 10).with_x0(gaussian_point(5, 2.0, 25));
        c = if alg.uses_epochs() { c.with_epochs(1) } else { c.with_iterations(5) };
        let r = run(&model, &c).unwrap();
        match alg {
            Algorithm::Sgd => assert!(r.first_step.is_none()),
            _ => assert_eq!(r.first_step_descends(), Some(true), "{alg}"),
        }
    }
}

#[test]
fn l2s_output_is_one_of_the_iterates() {
    let model = logistic(30, 4, 0.01, 26);
    let l = model.smoothness().max;
    let t = 40;
    let mut iterates = Vec::new();
    let mut obs = |e: &StepEvent<'_>| {
        if e.iteration >= 1 {
            iterates.push(e.x.to_vec());
        }
    };
    let r = run_with_observer(&model, &cfg(Algorithm::L2s, 0.5 / l, 5).with_iterations(t).with_seed(8), &mut obs).unwrap();
    assert_eq!(iterates.len() as u64, t);
    assert!(iterates.contains(&r.output));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ledger_matches_live_counter(
        alg_idx in 0usize..8,
        m in 1u64..12,
        len in 1u64..40,
        seed in any::<u64>(),
        n in 1usize..25,
    ) {
        let alg = Algorithm::ALL[alg_idx];
        let model = logistic(n, 3, 0.05, seed % 1000);
        let l = model.smoothness().max;
        let mut c = cfg(alg, 0.4 / l, m).with_seed(seed);
        c = if alg.uses_epochs() { c.with_epochs(len.min(8)) } else { c.with_iterations(len) };
        let r = run(&model, &c).unwrap();
        prop_assert_eq!(ifo_count(&r), r.ifo);
        prop_assert_eq!(r.snapshot_iterations.len() as u64, r.ledger.full_gradients);
        if alg == Algorithm::L2s {
            // n for v_0 plus n·B_t + 2(1 − B_t) for each step.
            let snaps = r.ledger.full_gradients - 1;
            prop_assert_eq!(r.ifo, n as u64 + snaps * n as u64 + 2 * (len - snaps));
        }
        prop_assert!(r.output.iter().all(|v| v.is_finite()));
        prop_assert!(norm_sq(&r.output).is_finite());
    }
}
