use ndarray::{Array1, Array2};
use proptest::prelude::*;

use ecoflux_core::diact::{diact_matrices, diact_subflows, DiactField};
use ecoflux_core::discrete::{solve_linear, steady_state, Snapshot};
use ecoflux_core::dsl::{parse_expr, BinOp, Builtin, Expr};
use ecoflux_core::export::format_float;
use ecoflux_core::indicators::utility::{skew, skew_total};
use ecoflux_core::indicators::{efficiency, IndexSeries, Stencil};
use ecoflux_core::interactions::{sign_strength, Scale};
use ecoflux_core::model::{eval_state, net_balance};
use ecoflux_core::ode::IntegrationSpec;
use ecoflux_core::partition::{
    componentwise_rhs, decomposed_rhs, subthroughflows, DecomposedState, Thresholds,
};
use ecoflux_core::solve::{solve_aggregate, solve_decomposed};
use ecoflux_core::{Model, SolveOptions, StorageSelection, Variant};

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0.0f64..10.0).prop_map(Expr::num),
        prop_oneof![Just("t"), Just("x1"), Just("x2"), Just("k")].prop_map(Expr::var),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), 0..4usize).prop_map(|(a, b, op)| {
                let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][op];
                Expr::binary(op, a, b)
            }),
            (inner.clone(), 0.5f64..2.5).prop_map(|(a, p)| Expr::binary(
                BinOp::Pow,
                a,
                Expr::num(p.round())
            )),
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner, 0..4usize).prop_map(|(a, f)| {
                let func = [Builtin::Exp, Builtin::Sin, Builtin::Cos, Builtin::Abs][f];
                Expr::Call {
                    func,
                    arg: Box::new(a),
                }
            }),
        ]
    })
}

fn lookup<'a>(t: f64, x: &'a [f64; 2], k: f64) -> impl Fn(&str) -> Option<f64> + 'a {
    move |name| match name {
        "t" => Some(t),
        "x1" => Some(x[0]),
        "x2" => Some(x[1]),
        "k" => Some(k),
        _ => None,
    }
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Random model with saturating intensities; `n` compartments.
fn model() -> impl Strategy<Value = Model> {
    (1usize..=4).prop_flat_map(|n| {
        (
            Just(n),
            proptest::collection::vec((0.0f64..2.0, 0.0f64..2.0, any::<bool>()), n * n),
            proptest::collection::vec(0.05f64..2.0, n),
            proptest::collection::vec(0.0f64..3.0, n),
            proptest::collection::vec(0.0f64..4.0, n),
        )
            .prop_map(|(n, flows, w, z, x0)| {
                let mut b = Model::builder(n);
                for i in 0..n {
                    for j in 0..n {
                        let (c0, c1, on) = flows[i * n + j];
                        if i != j && on {
                            let m = (i + j) % n + 1;
                            b = b.flow(i + 1, j + 1, &format!("{c0:?} + {c1:?}*x{m}/(1 + x{m})"));
                        }
                    }
                    b = b
                        .output(i + 1, &format!("{:?}", w[i]))
                        .input(i + 1, &format!("{:?}*(1 + sin(t))", z[i]));
                }
                b.initial(x0).build().expect("valid random model")
            })
    })
}

fn state(n: usize) -> impl Strategy<Value = DecomposedState<f64>> {
    proptest::collection::vec(0.01f64..3.0, n * (n + 1))
        .prop_map(move |v| DecomposedState::from_flat(0.7, n, &v))
}

fn model_and_state() -> impl Strategy<Value = (Model, DecomposedState<f64>)> {
    model().prop_flat_map(|m| {
        let n = m.n();
        (Just(m), state(n))
    })
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_expressions_reparse_to_equal_values(e in expr(), pts in proptest::collection::vec((0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0), 100)) {
        let printed = e.to_string();
        let back = parse_expr(&printed).unwrap();
        for (t, x1, x2, k) in pts {
            let x = [x1, x2];
            let a = e.eval_with(&lookup(t, &x, k));
            let b = back.eval_with(&lookup(t, &x, k));
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert!(same(a, b), "{printed}: {a} vs {b}"),
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                (a, b) => prop_assert!(false, "{printed}: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn net_balance_conserves_mass(m in model(), x in proptest::collection::vec(0.0f64..5.0, 4), t in 0.0f64..10.0) {
        let x = &x[..m.n()];
        let ev = eval_state(&m, t, x).unwrap();
        let total: f64 = net_balance(&ev).sum();
        let expect = ev.z.sum() - ev.y.sum();
        prop_assert!((total - expect).abs() <= 1e-12 * (1.0 + ev.tau_in.sum()));
        for i in 0..m.n() {
            prop_assert_eq!(ev.tau_in[i], ev.z[i] + ev.f.row(i).sum());
            prop_assert_eq!(ev.tau_out[i], ev.y[i] + ev.f.column(i).sum());
        }
    }

    #[test]
    fn empty_donor_has_no_outflow(m in model(), x in proptest::collection::vec(0.0f64..5.0, 4), j in 0usize..4) {
        let n = m.n();
        let mut x = x[..n].to_vec();
        let j = j % n;
        x[j] = 0.0;
        let ev = eval_state(&m, 1.0, &x).unwrap();
        for i in 0..n {
            prop_assert_eq!(ev.f[[i, j]], 0.0);
        }
        prop_assert!(ev.f.iter().chain(ev.y.iter()).all(|&v| v >= 0.0));
    }

    #[test]
    fn decomposed_rows_sum_to_aggregate((m, s) in model_and_state()) {
        let dx = decomposed_rhs(&m, &s).unwrap();
        let x = s.aggregate();
        let ev = eval_state(&m, s.t, x.as_slice().unwrap()).unwrap();
        let agg = net_balance(&ev);
        for i in 0..m.n() {
            let row: f64 = dx.row(i).sum();
            prop_assert!((row - agg[i]).abs() <= 1e-10 * (1.0 + ev.tau_in[i]));
        }
        let oracle = componentwise_rhs(&m, &s).unwrap();
        prop_assert!(max_abs(&(&dx - &oracle)) <= 1e-10 * (1.0 + ev.tau_in.sum()));
    }

    #[test]
    fn diact_identities_hold((m, s) in model_and_state()) {
        let n = m.n();
        let th = Thresholds::from_scale(4.0, 3.0);
        let st = subthroughflows(&m, &s, &th).unwrap();
        let dm = diact_matrices(&st, th.flow);
        let nd = dm.get(Variant::Direct);
        let ni = dm.get(Variant::Indirect);
        let na = dm.get(Variant::Acyclic);
        let nc = dm.get(Variant::Cycling);
        let nt = dm.get(Variant::Transfer);
        prop_assert!(max_abs(&(nt - nd - ni)) <= 1e-10);
        prop_assert!(max_abs(&(nt - na - nc)) <= 1e-10);
        for v in Variant::ALL {
            let mut total = Array2::zeros((n, n));
            for l in 1..=n {
                total = total + diact_subflows(&dm, v, l);
            }
            let comp = dm.flows(v, ecoflux_core::FlowKind::Composite);
            prop_assert!(max_abs(&(&total - &comp)) <= 1e-8 * (1.0 + max_abs(&comp)));
        }
    }

    #[test]
    fn skew_parts_are_exact(v in proptest::collection::vec(-1e6f64..1e6, 16)) {
        let m = Array2::from_shape_vec((4, 4), v).unwrap();
        let u = skew(&m);
        for i in 0..4 {
            prop_assert_eq!(u[[i, i]], 0.0);
            for k in 0..4 {
                prop_assert_eq!(u[[i, k]], -u[[k, i]]);
            }
        }
        prop_assert_eq!(skew_total(&u), 0.0);
    }

    #[test]
    fn sign_strength_is_antisymmetric(v in proptest::collection::vec(0.0f64..5.0, 9), tr in proptest::collection::vec(0.0f64..5.0, 9), x in proptest::collection::vec(0.0f64..5.0, 3)) {
        let m = Array2::from_shape_vec((3, 3), v).unwrap();
        let t = &m + &Array2::from_shape_vec((3, 3), tr).unwrap();
        let x = Array1::from(x);
        let total = x.sum();
        for scale in Scale::ALL {
            let a = sign_strength(&m, &t, &x, total, (0, 2), scale);
            let b = sign_strength(&m, &t, &x, total, (2, 0), scale);
            prop_assert_eq!(a.sign, -b.sign);
            prop_assert_eq!(a.strength, b.strength);
            if matches!(scale, Scale::Pairwise | Scale::TransferRelative) {
                prop_assert!(a.strength <= 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn fourth_order_stencil_is_exact_on_quartics(c in proptest::collection::vec(-2.0f64..2.0, 5), n in 5usize..40) {
        let grid: Vec<f64> = (0..n).map(|k| k as f64 * 0.25).collect();
        let p = |t: f64| c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * c[4])));
        let dp = |t: f64| c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * 4.0 * c[4]));
        let s = IndexSeries::from_values(grid.clone(), grid.iter().map(|&t| p(t)).collect());
        let d = efficiency(&s, Stencil::Fourth).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            let got = d.at(k).unwrap();
            prop_assert!((got - dp(t)).abs() <= 1e-8 * (1.0 + dp(t).abs()));
        }
    }

    #[test]
    fn gaussian_elimination_solves(v in proptest::collection::vec(-1.0f64..1.0, 16), b in proptest::collection::vec(-5.0f64..5.0, 4)) {
        let mut a = Array2::from_shape_vec((4, 4), v).unwrap();
        for i in 0..4 {
            a[[i, i]] += 5.0;
        }
        let rhs = Array2::from_shape_vec((4, 1), b).unwrap();
        let x = solve_linear(a.clone(), rhs.clone()).unwrap();
        prop_assert!(max_abs(&(a.dot(&x) - &rhs)) <= 1e-12);
    }

    #[test]
    fn steady_snapshot_is_consistent(q in proptest::collection::vec(0.0f64..2.0, 9), w in proptest::collection::vec(0.1f64..2.0, 3), z in proptest::collection::vec(0.0f64..3.0, 3)) {
        // Balanced snapshot from constant intensities: x = −A⁻¹ z.
        let mut a = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 0.0 } else { q[i * 3 + j] });
        let out: Vec<f64> = (0..3).map(|j| w[j] + a.column(j).sum()).collect();
        for i in 0..3 {
            a[[i, i]] = -out[i];
        }
        let x = solve_linear(-&a, Array2::from_shape_vec((3, 1), z.clone()).unwrap()).unwrap().column(0).to_owned();
        let f = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 0.0 } else { q[i * 3 + j] * x[j] });
        let snap = Snapshot { t: 0.0, z: Array1::from(z), y: Array1::from_shape_fn(3, |i| w[i] * x[i]), f, x: Some(x.clone()) };
        let ss = steady_state(&snap).unwrap();
        prop_assert!(ss.imbalance <= 1e-10);
        let xs = ss.x_sub.unwrap();
        for i in 0..3 {
            prop_assert!((xs.row(i).sum() - x[i]).abs() <= 1e-9 * (1.0 + x[i]));
            prop_assert!((ss.t_out.row(i).sum() - ss.tau_out[i]).abs() <= 1e-9 * (1.0 + ss.tau_out[i]));
        }
    }

    #[test]
    fn csv_floats_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solved_partition_aggregates_and_stays_nonnegative(m in model()) {
        let spec = IntegrationSpec::uniform(0.0, 5.0, 101);
        let opts = SolveOptions {
            accumulate: true,
            storages: StorageSelection::AllPairs(vec![Variant::Direct, Variant::Cycling]),
            ..Default::default()
        };
        let traj = solve_decomposed(&m, &spec, &opts).unwrap();
        let agg = solve_aggregate(&m, &spec).unwrap();
        let field = DiactField::from_trajectory(&traj);
        for s in 0..traj.len() {
            let x = traj.x_sub(s);
            for i in 0..m.n() {
                let a = agg.values[[s, i]];
                prop_assert!((x.row(i).sum() - a).abs() <= 1e-6 * a.abs().max(1e-3));
                prop_assert!(x.row(i).iter().all(|&v| v >= -1e-9));
            }
            for v in [Variant::Direct, Variant::Cycling] {
                let st = field.storages.matrix(m.n(), v, ecoflux_core::FlowKind::Composite, s).unwrap();
                prop_assert!(st.iter().all(|&v| v >= -1e-9));
            }
            if s > 0 {
                let a = traj.storage_integral(s - 1).unwrap();
                let b = traj.storage_integral(s).unwrap();
                prop_assert!(a.iter().zip(b.iter()).all(|(p, q)| q - p >= -1e-12));
            }
        }
    }
}
