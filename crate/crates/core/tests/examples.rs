//! Worked examples checked against hand calculations and independent integrators.

#![allow(clippy::needless_range_loop)]

use ndarray::{array, Array2};

use ecoflux_core::diact::{diact_matrices, DiactField};
use ecoflux_core::discrete::{steady_state, Snapshot};
use ecoflux_core::dsl::parse_model;
use ecoflux_core::indicators::{
    average_index, effect_report, efficiency, exposures, Basis, Stencil,
};
use ecoflux_core::interactions::{
    classify_pair, diact_sign_strength, global_scale_strengths, ClassThresholds, InteractionType,
    Scale,
};
use ecoflux_core::model::{eval_state, validate_model, Location};
use ecoflux_core::ode::IntegrationSpec;
use ecoflux_core::partition::{decomposed_rhs, decomposition_factors, DecomposedState};
use ecoflux_core::solve::{solve_decomposed, DecomposedTrajectory};
use ecoflux_core::transient::transient_chain;
use ecoflux_core::{fixtures, FlowKind, FlowPath, Model, SolveOptions, StorageSelection, Variant};

fn hippe_constant() -> Model {
    let text = fixtures::HIPPE
        .replace("3 + sin(2*t)", "3")
        .replace("3 + sin(t)", "3");
    let m: Model = parse_model(&text).unwrap();
    m
}

fn solve(m: &Model, t1: f64, samples: usize, opts: &SolveOptions) -> DecomposedTrajectory<f64> {
    solve_decomposed(m, &IntegrationSpec::uniform(0.0, t1, samples), opts).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn hippe_state_evaluation_by_hand() {
    let m: Model = fixtures::hippe().unwrap();
    assert!(validate_model(&m).is_empty());
    let ev = eval_state(&m, 0.0, &[3.0, 3.0]).unwrap();
    for (got, want) in ev.f.iter().zip([0.0, 2.0, 4.0, 0.0]) {
        assert!(close(*got, want, 1e-14));
    }
    assert!(close(ev.y[0], 1.0, 1e-14) && close(ev.y[1], 5.0, 1e-14));
    assert!(close(ev.tau_out[0], 5.0, 1e-14) && close(ev.tau_out[1], 7.0, 1e-14));
}

#[test]
fn hallam_consumption_flow_by_hand() {
    let m: Model = fixtures::hallam().unwrap();
    let ev = eval_state(&m, 0.0, &[1.0, 1.0, 1.0]).unwrap();
    assert!(close(ev.f[[1, 0]], 1.0 / 1.098, 1e-12));
    assert!(close(ev.f[[2, 1]], 2.0 / 21.0, 1e-12));
}

#[test]
fn validation_diagnostics() {
    let neg = Model::builder(1)
        .output(1, "1")
        .initial(vec![-1.0])
        .build_unchecked()
        .unwrap();
    let d = validate_model(&neg);
    assert!(d
        .iter()
        .any(|d| d.message.contains("negative initial stock")
            && matches!(d.location, Location::Initial(_))));
    let unknown = Model::builder(2)
        .flow(1, 2, "k9 * x2")
        .initial(vec![1.0, 1.0])
        .build_unchecked()
        .unwrap();
    assert!(validate_model(&unknown)
        .iter()
        .any(|d| d.message.contains("unknown identifier")));
}

#[test]
fn hippe_substorage_rhs_matches_hand_form() {
    let m: Model = fixtures::hippe().unwrap();
    let flat = [0.4, 1.3, 0.2, 0.9, 0.5, 1.7];
    let s = DecomposedState::from_flat(0.8, 2, &flat);
    let dx = decomposed_rhs(&m, &s).unwrap();
    let z1 = 3.0 + 0.8f64.sin();
    let want = z1 + 2.0 / 3.0 * s.x_sub[[1, 1]] - 5.0 / 3.0 * s.x_sub[[0, 1]];
    assert!(close(dx[[0, 1]], want, 1e-13));
}

#[test]
fn hippe_constant_input_steady_state() {
    let m = hippe_constant();
    let traj = solve(&m, 40.0, 401, &SolveOptions::default());
    let last = traj.len() - 1;
    let st = &traj.flows[last];
    let factors = decomposition_factors(&traj.state(last), traj.thresholds.storage);
    for j in 0..2 {
        assert!(close(factors.row(j).sum(), 1.0, 1e-12));
    }
    let field = DiactField::from_trajectory(&traj);
    let nd = field.samples[last].matrices.get(Variant::Direct);
    assert!(close(nd[[0, 1]], 2.0 / 7.0, 1e-8) && close(nd[[1, 0]], 0.8, 1e-8));
    let td = field.samples[last].flows(FlowKind::Composite, Variant::Direct);
    assert!(close(td[[0, 1]], 2.0, 1e-6) && close(td[[1, 0]], 4.0, 1e-6));

    // Steady snapshot of the same network gives the same decomposition.
    let snap = Snapshot {
        t: 0.0,
        z: array![3.0, 3.0],
        y: array![1.0, 5.0],
        f: array![[0.0, 2.0], [4.0, 0.0]],
        x: Some(array![3.0, 3.0]),
    };
    let ss = steady_state(&snap).unwrap();
    let tol = 1e-6;
    for i in 0..2 {
        for k in 0..2 {
            assert!(close(ss.t_out[[i, k]], st.t_out[[i, k]], tol));
            assert!(close(
                ss.x_sub.as_ref().unwrap()[[i, k]],
                traj.x_sub(last)[[i, k + 1]],
                tol
            ));
        }
    }
}

#[test]
fn masked_at_start_and_disconnected_pairs() {
    let m: Model = fixtures::hippe().unwrap();
    let traj = solve(&m, 1.0, 11, &SolveOptions::default());
    let dm = diact_matrices(&traj.flows[0], traj.thresholds.flow);
    assert!(dm.masked.iter().all(|&b| b));
    for v in Variant::ALL {
        assert!(dm.get(v).iter().all(|&x| x == 0.0));
    }
    let disc = Model::builder(2)
        .input(1, "1")
        .input(2, "1")
        .output(1, "1")
        .output(2, "1")
        .initial(vec![0.0, 0.0])
        .build()
        .unwrap();
    let traj = solve(&disc, 5.0, 51, &SolveOptions::default());
    let field = DiactField::from_trajectory(&traj);
    let series = classify_pair(
        &field,
        &traj,
        (0, 1),
        FlowKind::Composite,
        Basis::Flow,
        &ClassThresholds::default(),
    )
    .unwrap();
    assert!(series
        .verdicts
        .iter()
        .all(|v| v.kind == InteractionType::Neutralism && v.strength == Some(0.0)));
    let ss = diact_sign_strength(
        &field,
        &traj,
        (0, 1),
        Variant::Transfer,
        FlowKind::Composite,
        Basis::Flow,
        Scale::Global,
    )
    .unwrap();
    assert!(ss.iter().all(|s| s.sign == 0 && s.strength == 0.0));
}

#[test]
fn chain_path_and_cycle_free_variants() {
    let m: Model = fixtures::chain().unwrap();
    let trace = transient_chain(
        &m,
        &FlowPath::parse("1: 1 -> 2", &m).unwrap(),
        &IntegrationSpec::uniform(0.0, 50.0, 501),
    )
    .unwrap();
    assert!(close(*trace.nodes[0].storage.last().unwrap(), 1.0, 1e-6));
    let idle = transient_chain(
        &m,
        &FlowPath::parse("2: 1 -> 2", &m).unwrap(),
        &IntegrationSpec::uniform(0.0, 50.0, 501),
    )
    .unwrap();
    assert!(idle
        .nodes
        .iter()
        .all(|n| n.storage.iter().chain(&n.inflow).all(|&v| v == 0.0)));

    let traj = solve(&m, 50.0, 501, &SolveOptions::default());
    let field = DiactField::from_trajectory(&traj);
    for smp in &field.samples {
        let a = smp.flows(FlowKind::Composite, Variant::Acyclic);
        let t = smp.flows(FlowKind::Composite, Variant::Transfer);
        assert!((a - t).iter().all(|v| v.abs() <= 1e-12));
    }
}

#[test]
fn hippe_first_link_inflow() {
    let m: Model = fixtures::hippe().unwrap();
    let spec = IntegrationSpec::uniform(0.0, 10.0, 201);
    let p = FlowPath::parse("1: 1 -> 2", &m).unwrap();
    let traj = solve_decomposed(
        &m,
        &spec,
        &SolveOptions {
            paths: vec![p],
            ..Default::default()
        },
    )
    .unwrap();
    let trace = ecoflux_core::transient::trace_from_trajectory(&traj, 0);
    for s in 0..traj.len() {
        assert!(close(
            trace.nodes[0].inflow[s],
            4.0 / 3.0 * traj.x_sub(s)[[0, 1]],
            1e-12
        ));
    }
}

/// Fixed-step RK4 of a constant-intensity model's decomposed system and composite cycling storages.
fn cycling_oracle(
    q: [[f64; 2]; 2],
    w: [f64; 2],
    z: impl Fn(f64) -> [f64; 2],
    x0: [f64; 2],
    h: f64,
    t_end: f64,
    every: usize,
) -> Vec<[[f64; 2]; 2]> {
    let out = [w[0] + q[1][0], w[1] + q[0][1]];
    let rhs = |t: f64, y: &[f64; 10]| {
        let zt = z(t);
        let x = |i: usize, k: usize| y[i * 3 + k];
        let mut d = [0.0; 10];
        for i in 0..2 {
            for k in 0..3 {
                let mut v = -out[i] * x(i, k);
                for j in 0..2 {
                    v += q[i][j] * x(j, k);
                }
                if k == i + 1 {
                    v += zt[i];
                }
                d[i * 3 + k] = v;
            }
        }
        let t_out = |i: usize, k: usize| out[i] * x(i, k + 1);
        let t_tilde = |i: usize, k: usize| q[i][0] * x(0, k + 1) + q[i][1] * x(1, k + 1);
        for i in 0..2 {
            for k in 0..2 {
                let nc = if t_out(k, k) > 1e-11 && t_out(i, i) > 1e-11 {
                    t_tilde(i, i) / t_out(i, i) * t_out(i, k) / t_out(k, k)
                } else {
                    0.0
                };
                let idx = 6 + i * 2 + k;
                d[idx] = nc * (t_out(k, 0) + t_out(k, 1)) - out[i] * y[idx];
            }
        }
        d
    };
    let mut y = [0.0; 10];
    y[0] = x0[0];
    y[3] = x0[1];
    let steps = (t_end / h).round() as usize;
    let mut res = Vec::new();
    let grab = |y: &[f64; 10]| [[y[6], y[7]], [y[8], y[9]]];
    for s in 0..steps {
        if s % every == 0 {
            res.push(grab(&y));
        }
        let t = s as f64 * h;
        let add = |a: &[f64; 10], k: &[f64; 10], c: f64| {
            let mut o = *a;
            o.iter_mut().zip(k).for_each(|(p, q)| *p += c * q);
            o
        };
        let k1 = rhs(t, &y);
        let k2 = rhs(t + h / 2.0, &add(&y, &k1, h / 2.0));
        let k3 = rhs(t + h / 2.0, &add(&y, &k2, h / 2.0));
        let k4 = rhs(t + h, &add(&y, &k3, h));
        for j in 0..10 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    res.push(grab(&y));
    res
}

#[test]
fn hippe_cycling_storages_match_rk4() {
    let m: Model = fixtures::hippe().unwrap();
    let opts = SolveOptions {
        storages: StorageSelection::AllPairs(vec![Variant::Cycling]),
        ..Default::default()
    };
    let traj = solve(&m, 10.0, 101, &opts);
    let field = DiactField::from_trajectory(&traj);
    let oracle = cycling_oracle(
        [[0.0, 2.0 / 3.0], [4.0 / 3.0, 0.0]],
        [1.0 / 3.0, 5.0 / 3.0],
        |t| [3.0 + t.sin(), 3.0 + (2.0 * t).sin()],
        [3.0, 3.0],
        1e-4,
        10.0,
        1000,
    );
    assert_eq!(oracle.len(), traj.len());
    let mut err: f64 = 0.0;
    for (s, o) in oracle.iter().enumerate() {
        let got = field
            .storages
            .matrix(2, Variant::Cycling, FlowKind::Composite, s)
            .unwrap();
        for i in 0..2 {
            for k in 0..2 {
                err = err.max((got[[i, k]] - o[i][k]).abs());
            }
        }
    }
    assert!(err <= 1e-5, "max deviation {err:e}");
}

#[test]
fn hallam_transfer_and_global_strengths() {
    let m: Model = fixtures::hallam().unwrap();
    let traj = solve(&m, 25.0, 251, &SolveOptions::default());
    let field = DiactField::from_trajectory(&traj);
    for smp in &field.samples[1..] {
        assert!(smp.flows(FlowKind::Composite, Variant::Transfer)[[2, 1]] > 0.0);
    }
    let d = effect_report(
        &field,
        &traj,
        Variant::Direct,
        FlowKind::Composite,
        Basis::Flow,
    )
    .unwrap();
    let i = effect_report(
        &field,
        &traj,
        Variant::Indirect,
        FlowKind::Composite,
        Basis::Flow,
    )
    .unwrap();
    let g = global_scale_strengths(&d, &i, (2, 1)).unwrap();
    let pair = classify_pair(
        &field,
        &traj,
        (1, 2),
        FlowKind::Composite,
        Basis::Flow,
        &ClassThresholds::default(),
    )
    .unwrap();
    for s in 1..traj.len() {
        let local = pair.verdicts[s].strength.unwrap();
        let out = g.exploitation_outward.at(s).unwrap();
        let inn = g.exploitation_inward.at(s).unwrap();
        assert!(out > 0.0 && inn > 0.0 && out <= local && inn <= local);
        assert_eq!(pair.verdicts[s].signs[Variant::Direct.index()].sign, -1);
    }
    let sd = diact_sign_strength(
        &field,
        &traj,
        (2, 1),
        Variant::Direct,
        FlowKind::Composite,
        Basis::Flow,
        Scale::ThroughflowRelative,
    )
    .unwrap();
    assert!(sd[1..].iter().all(|s| s.sign == 1));
}

#[test]
fn hallam_storage_basis_verdict() {
    let m: Model = fixtures::hallam().unwrap();
    let opts = SolveOptions {
        storages: StorageSelection::AllPairs(Variant::ALL.to_vec()),
        ..Default::default()
    };
    let traj = solve(&m, 25.0, 251, &opts);
    let field = DiactField::from_trajectory(&traj);
    let series = classify_pair(
        &field,
        &traj,
        (1, 2),
        FlowKind::Composite,
        Basis::Storage,
        &ClassThresholds::default(),
    )
    .unwrap();
    assert_eq!(
        series.non_neutral(),
        vec![InteractionType::Exploitation(2, 1)]
    );
}

#[test]
fn hallam_cycling_stress_bursts_near_pulse() {
    let m: Model = fixtures::hallam().unwrap();
    let traj = solve(&m, 25.0, 2501, &SolveOptions::default());
    let field = DiactField::from_trajectory(&traj);
    let rep = effect_report(
        &field,
        &traj,
        Variant::Cycling,
        FlowKind::Composite,
        Basis::Flow,
    )
    .unwrap();
    let stress = efficiency(&rep.entry(2, 2), Stencil::Fourth).unwrap();
    let peak = |a: f64, b: f64| {
        stress
            .defined()
            .filter(|&(t, _)| t >= a && t <= b)
            .fold(0.0f64, |m, (_, v)| m.max(v.abs()))
    };
    let burst = peak(12.0, 18.0);
    assert!(burst > 0.0);
    assert!(peak(5.0, 9.0) < 0.05 * burst);
    assert!(peak(21.0, 25.0) < 0.05 * burst);
}

#[test]
fn hippe_average_cycling_index_matches_quadrature() {
    let m: Model = fixtures::hippe().unwrap();
    let traj = solve(
        &m,
        10.0,
        2001,
        &SolveOptions {
            accumulate: true,
            ..Default::default()
        },
    );
    let field = DiactField::from_trajectory(&traj);
    let (t1, t2) = (2.0, 2.0 + std::f64::consts::PI);
    let t2 = traj.grid[traj.nearest_index(t2)];
    let avg = average_index(
        &field,
        &traj,
        Variant::Cycling,
        FlowKind::Composite,
        Basis::Flow,
        &[0, 1],
        &[0, 1],
        t1,
        t2,
    )
    .unwrap()
    .unwrap();
    let (a, b) = (traj.index_of(t1).unwrap(), traj.index_of(t2).unwrap());
    let trap = |f: &dyn Fn(usize) -> f64| {
        (a..b)
            .map(|s| 0.5 * (f(s) + f(s + 1)) * (traj.grid[s + 1] - traj.grid[s]))
            .sum::<f64>()
    };
    let num = trap(&|s| {
        field.samples[s]
            .flows(FlowKind::Composite, Variant::Cycling)
            .sum()
    });
    let den = trap(&|s| traj.flows[s].tau_in.sum());
    assert!(close(avg, num / den, 1e-5), "{avg} vs {}", num / den);
}

#[test]
fn zero_substorage_gives_zero_exposure() {
    let m: Model = fixtures::chain().unwrap();
    let traj = solve(
        &m,
        10.0,
        101,
        &SolveOptions {
            accumulate: true,
            ..Default::default()
        },
    );
    let e = exposures(&traj, 1.0, 5.0).unwrap();
    assert!(e.e0.iter().all(|&v| v == 0.0));
    assert!(e.e.column(1).iter().all(|&v| v == 0.0));
    let x = Array2::from_shape_fn((2, 2), |(i, k)| e.e[[i, k]]);
    assert!(x[[0, 0]] > 0.0 && x[[1, 0]] > 0.0);
}
