//! Decomposition of a compartmental model into per-input subsystems.
//!
//! The decomposed state is an `n × (n+1)` matrix `X`: column 0 carries the
//! stock derived from initial conditions, column `k ≥ 1` the stock derived
//! from environmental input into compartment `k`.

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::model::{eval_state, CompartmentalModel, EvalError, Intensities};
use crate::scalar::Scalar;

/// Substorage matrix at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedState<T> {
    pub t: T,
    pub x_sub: Array2<T>,
}

impl<T: Scalar> DecomposedState<T> {
    /// `X(t0) = [x0 | 0]`.
    pub fn initial(t0: T, x0: &[T]) -> Self {
        let n = x0.len();
        let mut x_sub = Array2::zeros((n, n + 1));
        for (i, &v) in x0.iter().enumerate() {
            x_sub[[i, 0]] = v;
        }
        DecomposedState { t: t0, x_sub }
    }

    /// From a row-major flattened matrix (index `i*(n+1) + k`).
    pub fn from_flat(t: T, n: usize, flat: &[T]) -> Self {
        let x_sub = Array2::from_shape_vec((n, n + 1), flat[..n * (n + 1)].to_vec())
            .expect("flat length n*(n+1)");
        DecomposedState { t, x_sub }
    }

    pub fn n(&self) -> usize {
        self.x_sub.nrows()
    }

    /// Aggregate storages `x_i = Σ_k X_ik`.
    pub fn aggregate(&self) -> Array1<T> {
        self.x_sub.rows().into_iter().map(|r| r.sum()).collect()
    }
}

/// Division guards used throughout the analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds<T> {
    /// Storages at or below this are considered empty.
    pub storage: T,
    /// Throughflows at or below this are considered absent.
    pub flow: T,
}

impl<T: Scalar> Thresholds<T> {
    pub fn from_scale(x0_sup: T, z_sup: T) -> Self {
        let tiny = T::lit(1e-12);
        Thresholds {
            storage: tiny * T::one().max(x0_sup).max(z_sup),
            flow: tiny * (T::one() + z_sup),
        }
    }

    /// Scales from `‖x0‖∞` and the supremum of `‖z(t, x0)‖∞` over `grid`.
    pub fn for_model(model: &CompartmentalModel<T>, grid: &[T]) -> Result<Self, EvalError> {
        let x0 = model.x0();
        let x0_sup = x0.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let mut z = Array1::zeros(model.n());
        let mut z_sup = T::zero();
        for &t in grid {
            model.eval_inputs_into(t, x0, &mut z)?;
            z_sup = z.iter().fold(z_sup, |m, v| m.max(v.abs()));
        }
        Ok(Self::from_scale(x0_sup, z_sup))
    }
}

/// `d_jk = X_jk / x_j`; rows of empty donors are zero.
pub fn decomposition_factors<T: Scalar>(s: &DecomposedState<T>, eps_storage: T) -> Array2<T> {
    let x = s.aggregate();
    let mut d = Array2::zeros(s.x_sub.raw_dim());
    for (j, &xj) in x.iter().enumerate() {
        if xj > eps_storage {
            for k in 0..s.x_sub.ncols() {
                d[[j, k]] = s.x_sub[[j, k]] / xj;
            }
        }
    }
    d
}

/// `Ẋ = [A·X_0 | 𝒵 + A·X_{1..n}]` with `A = Q − diag(out)`, written into `dx`.
pub(crate) fn decomposed_rhs_into<T: Scalar>(
    ints: &Intensities<T>,
    x_sub: ArrayView2<T>,
    dx: &mut Array2<T>,
) {
    let n = ints.z.len();
    for k in 0..=n {
        for i in 0..n {
            let mut acc = -ints.out[i] * x_sub[[i, k]];
            for j in 0..n {
                acc += ints.q[[i, j]] * x_sub[[j, k]];
            }
            if k == i + 1 {
                acc += ints.z[i];
            }
            dx[[i, k]] = acc;
        }
    }
}

/// Time derivative of the substorage matrix.
pub fn decomposed_rhs<T: Scalar>(
    model: &CompartmentalModel<T>,
    s: &DecomposedState<T>,
) -> Result<Array2<T>, EvalError> {
    let x = s.aggregate();
    let ints = model.eval_intensities(s.t, x.as_slice().expect("contiguous"))?;
    let mut dx = Array2::zeros(s.x_sub.raw_dim());
    decomposed_rhs_into(&ints, s.x_sub.view(), &mut dx);
    Ok(dx)
}

/// Reference evaluation of the decomposed dynamics through raw flows and
/// decomposition factors: `ẋ_ik = δ_ik z_i + Σ_j f_ij d_jk − (Σ_j f_ji + y_i) d_ik`.
///
/// Divides by storages, so it is only meaningful where every `x_j` is positive.
pub fn componentwise_rhs<T: Scalar>(
    model: &CompartmentalModel<T>,
    s: &DecomposedState<T>,
) -> Result<Array2<T>, EvalError> {
    let n = s.n();
    let x = s.aggregate();
    let ev = eval_state(model, s.t, x.as_slice().expect("contiguous"))?;
    let d = decomposition_factors(s, T::zero());
    let mut dx = Array2::zeros((n, n + 1));
    for i in 0..n {
        for k in 0..=n {
            let mut v = if k == i + 1 { ev.z[i] } else { T::zero() };
            for j in 0..n {
                v += ev.f[[i, j]] * d[[j, k]];
            }
            v -= ev.tau_out[i] * d[[i, k]];
            dx[[i, k]] = v;
        }
    }
    Ok(dx)
}

/// Subthroughflow matrices and related quantities at one time.
///
/// Matrix columns of `t_in`, `t_out` and `t_tilde` index the input subsystems
/// `k = 1..n` (column `k-1`); the initial subsystem is kept in `tau0_*`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubthroughflowEval<T> {
    pub t: T,
    pub x: Array1<T>,
    pub z: Array1<T>,
    /// Flow matrix `F`, `f_ij = q_ij x_j`.
    pub f: Array2<T>,
    /// Throughflows `τ̌` and `τ̂`.
    pub tau_in: Array1<T>,
    pub tau_out: Array1<T>,
    pub t_in: Array2<T>,
    pub t_out: Array2<T>,
    /// Inward subthroughflows without the input term, `T̃ = Ť − 𝒵`.
    pub t_tilde: Array2<T>,
    pub tau0_in: Array1<T>,
    pub tau0_out: Array1<T>,
    /// Flow intensity matrix `A = Q − diag(out)` [1/time].
    pub a: Array2<T>,
    /// Residence times `x_i / τ̂_i`; `None` where `τ̂_i` is below the flow threshold.
    pub residence: Vec<Option<T>>,
}

impl<T: Scalar> SubthroughflowEval<T> {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub(crate) fn from_intensities(
        t: T,
        ints: &Intensities<T>,
        x_sub: ArrayView2<T>,
        eps_flow: T,
    ) -> Self {
        let n = ints.z.len();
        let x: Array1<T> = x_sub.rows().into_iter().map(|r| r.sum()).collect();
        let f = Array2::from_shape_fn((n, n), |(i, j)| ints.q[[i, j]] * x[j]);
        let tau_out = Array1::from_shape_fn(n, |i| ints.out[i] * x[i]);
        let tau_in = Array1::from_shape_fn(n, |i| ints.z[i] + f.row(i).sum());
        let qx = ints.q.dot(&x_sub);
        let t_tilde = qx.slice(s![.., 1..]).to_owned();
        let mut t_in = t_tilde.clone();
        for i in 0..n {
            t_in[[i, i]] += ints.z[i];
        }
        let t_out = Array2::from_shape_fn((n, n), |(i, k)| ints.out[i] * x_sub[[i, k + 1]]);
        let tau0_in = qx.column(0).to_owned();
        let tau0_out = Array1::from_shape_fn(n, |i| ints.out[i] * x_sub[[i, 0]]);
        let mut a = ints.q.clone();
        for i in 0..n {
            a[[i, i]] -= ints.out[i];
        }
        let residence = (0..n)
            .map(|i| (tau_out[i] > eps_flow).then(|| T::one() / ints.out[i]))
            .collect();
        SubthroughflowEval {
            t,
            x,
            z: ints.z.clone(),
            f,
            tau_in,
            tau_out,
            t_in,
            t_out,
            t_tilde,
            tau0_in,
            tau0_out,
            a,
            residence,
        }
    }

    /// Net change per subsystem; row `i` sums to `ẋ_i`.
    pub fn net(&self) -> (Array2<T>, Array1<T>) {
        (&self.t_in - &self.t_out, &self.tau0_in - &self.tau0_out)
    }
}

/// Evaluate all subthroughflow matrices for a decomposed state.
pub fn subthroughflows<T: Scalar>(
    model: &CompartmentalModel<T>,
    s: &DecomposedState<T>,
    thresholds: &Thresholds<T>,
) -> Result<SubthroughflowEval<T>, EvalError> {
    let x = s.aggregate();
    let ints = model.eval_intensities(s.t, x.as_slice().expect("contiguous"))?;
    Ok(SubthroughflowEval::from_intensities(
        s.t,
        &ints,
        s.x_sub.view(),
        thresholds.flow,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hippe() -> CompartmentalModel<f64> {
        CompartmentalModel::builder(2)
            .flow(1, 2, "2/3")
            .flow(2, 1, "4/3")
            .output(1, "1/3")
            .output(2, "5/3")
            .input(1, "3 + sin(t)")
            .input(2, "3 + sin(2*t)")
            .initial(vec![3.0, 3.0])
            .build()
            .unwrap()
    }

    #[test]
    fn initial_factors() {
        let s = DecomposedState::initial(0.0, &[3.0, 0.0]);
        let d = decomposition_factors(&s, 1e-12);
        assert_eq!(d[[0, 0]], 1.0);
        assert_eq!(d.row(1).sum(), 0.0);
    }

    #[test]
    fn rhs_at_t0_places_inputs_on_diagonal() {
        let m = hippe();
        let s = DecomposedState::initial(0.0, &[3.0, 3.0]);
        let dx = decomposed_rhs(&m, &s).unwrap();
        assert!((dx[[0, 0]] - (-5.0 / 3.0 * 3.0 + 2.0)).abs() < 1e-14);
        assert_eq!(dx[[0, 1]], 3.0);
        assert_eq!(dx[[1, 2]], 3.0);
        assert_eq!(dx[[0, 2]], 0.0);
        assert_eq!(dx[[1, 1]], 0.0);
    }

    #[test]
    fn matches_componentwise_form() {
        let m = hippe();
        let s = DecomposedState {
            t: 1.3,
            x_sub: ndarray::array![[0.4, 1.1, 0.7], [0.2, 0.9, 1.6]],
        };
        let a = decomposed_rhs(&m, &s).unwrap();
        let b = componentwise_rhs(&m, &s).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
        // Row sums give the aggregate balance.
        let x = s.aggregate();
        let ev = eval_state(&m, 1.3, x.as_slice().unwrap()).unwrap();
        let nb = crate::model::net_balance(&ev);
        for i in 0..2 {
            assert!((a.row(i).sum() - nb[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn subthroughflows_at_t0() {
        let m = hippe();
        let th = Thresholds::for_model(&m, &[0.0]).unwrap();
        let s = DecomposedState::initial(0.0, &[3.0, 3.0]);
        let st = subthroughflows(&m, &s, &th).unwrap();
        assert_eq!(st.t_in[[0, 0]], 3.0);
        assert_eq!(st.t_in[[1, 1]], 3.0);
        assert_eq!(st.t_in[[0, 1]], 0.0);
        assert!((st.residence[0].unwrap() - 0.6).abs() < 1e-15);
        assert!((st.residence[1].unwrap() - 3.0 / 7.0).abs() < 1e-15);
        let (net, net0) = st.net();
        let ev = eval_state(&m, 0.0, &[3.0, 3.0]).unwrap();
        let nb = crate::model::net_balance(&ev);
        for i in 0..2 {
            assert!((net.row(i).sum() + net0[i] - nb[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn residence_masked_for_empty_compartment() {
        let m: CompartmentalModel<f64> = CompartmentalModel::builder(1)
            .input(1, "1")
            .output(1, "1")
            .build()
            .unwrap();
        let th = Thresholds::for_model(&m, &[0.0]).unwrap();
        let st = subthroughflows(&m, &DecomposedState::initial(0.0, &[0.0]), &th).unwrap();
        assert_eq!(st.residence[0], None);
    }
}
