//! Direct, indirect, acyclic, cycling and transfer (diact) flows and storages.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::partition::SubthroughflowEval;
use crate::scalar::Scalar;
use crate::solve::DecomposedTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Direct,
    Indirect,
    Acyclic,
    Cycling,
    Transfer,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Direct,
        Variant::Indirect,
        Variant::Acyclic,
        Variant::Cycling,
        Variant::Transfer,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            Variant::Direct => 'd',
            Variant::Indirect => 'i',
            Variant::Acyclic => 'a',
            Variant::Cycling => 'c',
            Variant::Transfer => 't',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Direct => "direct",
            Variant::Indirect => "indirect",
            Variant::Acyclic => "acyclic",
            Variant::Cycling => "cycling",
            Variant::Transfer => "transfer",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| s.len() == 1 && s.starts_with(v.letter()) || s == v.name())
            .ok_or_else(|| format!("unknown variant `{s}` (expected one of d, i, a, c, t)"))
    }
}

/// Which subsystems generate a diact flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlowKind {
    /// Generated by all environmental inputs.
    Composite,
    /// Generated by the input into the receiving compartment only.
    Simple,
    /// Generated by the initial stocks.
    Initial,
}

impl FlowKind {
    pub const ALL: [FlowKind; 3] = [FlowKind::Composite, FlowKind::Simple, FlowKind::Initial];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FlowKind::Composite => "composite",
            FlowKind::Simple => "simple",
            FlowKind::Initial => "initial",
        }
    }
}

/// The five distribution matrices at one time, with the diagonals they are built from.
#[derive(Debug, Clone, PartialEq)]
pub struct DiactMatrices<T> {
    /// Indexed by [`Variant::index`].
    pub n: [Array2<T>; 5],
    pub t_tilde: Array2<T>,
    /// `T̂` with input-subsystem columns.
    pub t_out: Array2<T>,
    /// Diagonals of `Ť`, `T̂` and `T̃`.
    pub t_in_s: Array1<T>,
    pub t_out_s: Array1<T>,
    pub t_tilde_s: Array1<T>,
    /// Outward throughflow of the initial subsystem, `T̂_0`.
    pub tau0_out: Array1<T>,
    /// Columns whose denominator `τ̂_{k_k}` fell below the flow threshold.
    pub masked: Vec<bool>,
}

impl<T: Scalar> DiactMatrices<T> {
    pub fn get(&self, v: Variant) -> &Array2<T> {
        &self.n[v.index()]
    }

    pub fn dim(&self) -> usize {
        self.t_out_s.len()
    }

    fn scale(&self, kind: FlowKind, k: usize) -> T {
        match kind {
            // 𝒯 − 𝒯̂_0 summed over input subsystems avoids cancellation.
            FlowKind::Composite => self.t_out.row(k).sum(),
            FlowKind::Simple => self.t_out_s[k],
            FlowKind::Initial => self.tau0_out[k],
        }
    }

    /// Diact flow `τ^*_{ik}` of a given kind.
    pub fn flow(&self, v: Variant, kind: FlowKind, i: usize, k: usize) -> T {
        self.n[v.index()][[i, k]] * self.scale(kind, k)
    }

    /// Matrix of diact flows of one kind.
    pub fn flows(&self, v: Variant, kind: FlowKind) -> Array2<T> {
        let n = self.dim();
        Array2::from_shape_fn((n, n), |(i, k)| self.flow(v, kind, i, k))
    }
}

/// Build the Table of distribution matrices from subthroughflows at one time.
pub fn diact_matrices<T: Scalar>(st: &SubthroughflowEval<T>, eps_flow: T) -> DiactMatrices<T> {
    diact_matrices_from_parts(
        &st.f,
        &st.t_tilde,
        &st.t_out,
        st.t_in.diag().to_owned(),
        &st.tau_out,
        &st.tau0_out,
        eps_flow,
    )
}

/// Distribution matrices from the flow matrix and subthroughflows.
pub(crate) fn diact_matrices_from_parts<T: Scalar>(
    f: &Array2<T>,
    t_tilde: &Array2<T>,
    t_out: &Array2<T>,
    t_in_s: Array1<T>,
    tau_out: &Array1<T>,
    tau0_out: &Array1<T>,
    eps_flow: T,
) -> DiactMatrices<T> {
    let n = f.nrows();
    let t_out_s = t_out.diag().to_owned();
    let t_tilde_s = t_tilde.diag().to_owned();
    let masked: Vec<bool> = t_out_s.iter().map(|&v| !(v > eps_flow)).collect();

    let mut nd = Array2::zeros((n, n));
    let mut nt = Array2::zeros((n, n));
    let mut nc = Array2::zeros((n, n));
    for k in 0..n {
        if masked[k] {
            continue;
        }
        let inv_k = T::one() / t_out_s[k];
        let inv_tau = if tau_out[k] > eps_flow {
            T::one() / tau_out[k]
        } else {
            T::zero()
        };
        for i in 0..n {
            nd[[i, k]] = f[[i, k]] * inv_tau;
            nt[[i, k]] = t_tilde[[i, k]] * inv_k;
            let row = if masked[i] {
                T::zero()
            } else {
                t_tilde_s[i] / t_out_s[i]
            };
            nc[[i, k]] = row * t_out[[i, k]] * inv_k;
        }
    }
    let ni = &nt - &nd;
    let na = &nt - &nc;
    DiactMatrices {
        n: [nd, ni, na, nc, nt],
        t_tilde: t_tilde.clone(),
        t_out: t_out.clone(),
        t_in_s,
        t_out_s,
        t_tilde_s,
        tau0_out: tau0_out.clone(),
        masked,
    }
}

/// Subflows `τ^*_{i_ℓ k_ℓ} = N^*_{ik} τ̂_{k_ℓ}` for subsystem `ℓ` (0 = initial stocks).
pub fn diact_subflows<T: Scalar>(dm: &DiactMatrices<T>, v: Variant, subsystem: usize) -> Array2<T> {
    let n = dm.dim();
    assert!(subsystem <= n, "subsystem {subsystem} out of range 0..={n}");
    let nm = dm.get(v);
    Array2::from_shape_fn((n, n), |(i, k)| {
        let src = if subsystem == 0 {
            dm.tau0_out[k]
        } else {
            dm.t_out[[k, subsystem - 1]]
        };
        nm[[i, k]] * src
    })
}

/// Diact matrices and flows at every sample of a decomposed trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DiactSample<T> {
    pub matrices: DiactMatrices<T>,
    /// `flows[kind][variant]`.
    pub flows: [[Array2<T>; 5]; 3],
}

impl<T: Scalar> DiactSample<T> {
    pub fn flows(&self, kind: FlowKind, v: Variant) -> &Array2<T> {
        &self.flows[kind.index()][v.index()]
    }
}

/// One tracked diact storage: pair `(i, k)` and variant, three kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StorageTrack {
    pub i: usize,
    pub k: usize,
    pub variant: Variant,
}

/// Diact flows over time, plus any storages integrated with the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DiactField<T> {
    pub grid: Vec<T>,
    pub samples: Vec<DiactSample<T>>,
    pub storages: DiactStorages<T>,
}

/// Storage series, one entry per [`StorageTrack`], each with values for every [`FlowKind`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiactStorages<T> {
    pub start: Option<T>,
    pub tracks: Vec<StorageTrack>,
    /// `series[track][kind][sample]`.
    pub series: Vec<[Vec<T>; 3]>,
    /// Running integrals `∫_{start}^{t} x^* ds`, same indexing as `series`.
    pub integrals: Vec<[Vec<T>; 3]>,
}

impl<T: Scalar> DiactStorages<T> {
    pub fn find(&self, i: usize, k: usize, v: Variant) -> Option<usize> {
        self.tracks
            .iter()
            .position(|tr| tr.i == i && tr.k == k && tr.variant == v)
    }

    pub fn series(&self, i: usize, k: usize, v: Variant, kind: FlowKind) -> Option<&[T]> {
        self.find(i, k, v)
            .map(|idx| self.series[idx][kind.index()].as_slice())
    }

    pub fn integral(&self, i: usize, k: usize, v: Variant, kind: FlowKind) -> Option<&[T]> {
        self.find(i, k, v)
            .map(|idx| self.integrals[idx][kind.index()].as_slice())
    }

    /// `∫ x^*` over `[s1, s2]` (sample indices) as a full matrix, if every pair is tracked.
    pub fn integral_matrix(
        &self,
        n: usize,
        v: Variant,
        kind: FlowKind,
        s1: usize,
        s2: usize,
    ) -> Option<Array2<T>> {
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            for k in 0..n {
                let s = self.integral(i, k, v, kind)?;
                out[[i, k]] = s[s2] - s[s1];
            }
        }
        Some(out)
    }

    /// Full `n × n` matrix at a sample, if every pair of the variant is tracked.
    pub fn matrix(&self, n: usize, v: Variant, kind: FlowKind, sample: usize) -> Option<Array2<T>> {
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            for k in 0..n {
                out[[i, k]] = self.series(i, k, v, kind)?[sample];
            }
        }
        Some(out)
    }

    /// True if every `(i, k)` of the variant is tracked.
    pub fn has_full(&self, n: usize, v: Variant) -> bool {
        (0..n).all(|i| (0..n).all(|k| self.find(i, k, v).is_some()))
    }
}

impl<T: Scalar> DiactField<T> {
    pub fn n(&self) -> usize {
        self.samples.first().map_or(0, |s| s.matrices.dim())
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Flow series `τ^*_{ik}(t)`.
    pub fn flow_series(&self, kind: FlowKind, v: Variant, i: usize, k: usize) -> Vec<T> {
        self.samples
            .iter()
            .map(|s| s.flows(kind, v)[[i, k]])
            .collect()
    }

    /// Build from a solved trajectory (matrices evaluated per sample in parallel).
    pub fn from_trajectory(traj: &DecomposedTrajectory<T>) -> Self {
        let eps = traj.thresholds.flow;
        let samples = traj
            .flows
            .par_iter()
            .map(|st| {
                let matrices = diact_matrices(st, eps);
                let flows = FlowKind::ALL.map(|kind| Variant::ALL.map(|v| matrices.flows(v, kind)));
                DiactSample { matrices, flows }
            })
            .collect();
        DiactField {
            grid: traj.grid.clone(),
            samples,
            storages: traj.diact_storages(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CompartmentalModel, Intensities};
    use ndarray::array;

    fn eval(model: &CompartmentalModel<f64>, x_sub: Array2<f64>) -> SubthroughflowEval<f64> {
        let x: Vec<f64> = x_sub.rows().into_iter().map(|r| r.sum()).collect();
        let mut ints = Intensities::zeros(model.n());
        model.eval_intensities_into(0.0, &x, &mut ints).unwrap();
        SubthroughflowEval::from_intensities(0.0, &ints, x_sub.view(), 1e-12)
    }

    fn hippe_const() -> CompartmentalModel<f64> {
        CompartmentalModel::builder(2)
            .flow(1, 2, "2/3")
            .flow(2, 1, "4/3")
            .output(1, "1/3")
            .output(2, "5/3")
            .input(1, "3")
            .input(2, "3")
            .initial(vec![3.0, 3.0])
            .build()
            .unwrap()
    }

    #[test]
    fn hippe_steady_direct_matrix() {
        // Steady state with the initial subsystem drained: X = [0 | A^{-1}-columns].
        let a = array![[-5.0 / 3.0, 2.0 / 3.0], [4.0 / 3.0, -7.0 / 3.0]];
        let det: f64 = a[[0, 0]] * a[[1, 1]] - a[[0, 1]] * a[[1, 0]];
        let inv = array![[a[[1, 1]], -a[[0, 1]]], [-a[[1, 0]], a[[0, 0]]]] / det;
        let xs = -inv * 3.0;
        let x_sub = array![[0.0, xs[[0, 0]], xs[[0, 1]]], [0.0, xs[[1, 0]], xs[[1, 1]]]];
        let st = eval(&hippe_const(), x_sub);
        let dm = diact_matrices(&st, 1e-12);
        let nd = dm.get(Variant::Direct);
        assert!((nd[[0, 1]] - 2.0 / 7.0).abs() < 1e-14);
        assert!((nd[[1, 0]] - 4.0 / 5.0).abs() < 1e-14);
        assert_eq!(nd[[0, 0]], 0.0);
        let td = dm.flows(Variant::Direct, FlowKind::Composite);
        assert!((td[[0, 1]] - 2.0).abs() < 1e-13 && (td[[1, 0]] - 4.0).abs() < 1e-13);
    }

    #[test]
    fn masked_at_initial_time() {
        let x_sub = array![[3.0, 0.0, 0.0], [3.0, 0.0, 0.0]];
        let dm = diact_matrices(&eval(&hippe_const(), x_sub), 1e-12);
        assert!(dm.masked.iter().all(|&m| m));
        for v in Variant::ALL {
            assert!(dm.get(v).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn identities_and_subflow_sum() {
        let x_sub = array![[0.5, 1.2, 0.4], [0.3, 0.8, 1.1]];
        let dm = diact_matrices(&eval(&hippe_const(), x_sub), 1e-12);
        let sum_di = dm.get(Variant::Direct) + dm.get(Variant::Indirect);
        let sum_ac = dm.get(Variant::Acyclic) + dm.get(Variant::Cycling);
        for ((a, b), t) in sum_di
            .iter()
            .zip(sum_ac.iter())
            .zip(dm.get(Variant::Transfer).iter())
        {
            assert!((a - t).abs() <= 1e-14 * t.abs().max(1.0));
            assert!((b - t).abs() <= 1e-14 * t.abs().max(1.0));
        }
        for v in Variant::ALL {
            let total = diact_subflows(&dm, v, 1) + diact_subflows(&dm, v, 2);
            let comp = dm.flows(v, FlowKind::Composite);
            for (a, b) in total.iter().zip(comp.iter()) {
                assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0));
            }
            let s0 = diact_subflows(&dm, v, 0);
            assert_eq!(s0, dm.flows(v, FlowKind::Initial));
        }
    }

    #[test]
    fn disconnected_pair_is_zero() {
        let m: CompartmentalModel<f64> = CompartmentalModel::builder(2)
            .input(1, "1")
            .input(2, "1")
            .output(1, "1")
            .output(2, "1")
            .build()
            .unwrap();
        let dm = diact_matrices(&eval(&m, array![[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]), 1e-12);
        for v in Variant::ALL {
            assert!(dm.get(v).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("c".parse::<Variant>().unwrap(), Variant::Cycling);
        assert_eq!("transfer".parse::<Variant>().unwrap(), Variant::Transfer);
        assert!("x".parse::<Variant>().is_err());
    }
}
