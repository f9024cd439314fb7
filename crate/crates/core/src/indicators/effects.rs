use ndarray::{Array1, Array2};

use super::{grid_index, IndexSeries, IndicatorError};
use crate::diact::{DiactField, FlowKind, Variant};
use crate::scalar::Scalar;
use crate::solve::{DecomposedTrajectory, Total};

/// Whether an index is built on diact flows or diact storages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Flow,
    Storage,
}

impl Basis {
    pub fn symbol(self) -> &'static str {
        match self {
            Basis::Flow => "tau",
            Basis::Storage => "x",
        }
    }
}

/// Effect matrices `𝚃 = T^*/σ` over time for one variant, kind and basis.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectReport<T> {
    pub variant: Variant,
    pub kind: FlowKind,
    pub basis: Basis,
    pub grid: Vec<T>,
    /// Unnormalized diact flows or storages.
    pub raw: Vec<Array2<T>>,
    /// Normalized matrices; `None` where the normalizer vanishes.
    pub matrices: Vec<Option<Array2<T>>>,
    /// Total inward throughflow `σ̌^τ`.
    pub sigma_in: Vec<T>,
    /// Total outward throughflow `σ̂^τ`.
    pub sigma_out: Vec<T>,
    /// Total storage `σ^x`.
    pub sigma_x: Vec<T>,
}

impl<T: Scalar> EffectReport<T> {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn n(&self) -> usize {
        self.raw.first().map_or(0, |m| m.nrows())
    }

    /// Normalizer of this basis at sample `s`.
    pub fn normalizer(&self, s: usize) -> T {
        match self.basis {
            Basis::Flow => self.sigma_in[s],
            Basis::Storage => self.sigma_x[s],
        }
    }

    /// `𝚝_{ik}(t)`.
    pub fn entry(&self, i: usize, k: usize) -> IndexSeries<T> {
        self.map(|m| m[[i, k]])
    }

    /// Index over compartment subsets: `Σ_{i∈I} Σ_{k∈K} 𝚝_{ik}`.
    pub fn subset(&self, rows: &[usize], cols: &[usize]) -> IndexSeries<T> {
        self.map(|m| {
            let mut acc = T::zero();
            for &i in rows {
                for &k in cols {
                    acc += m[[i, k]];
                }
            }
            acc
        })
    }

    /// System-level scalar `1ᵀ 𝚃 1`.
    pub fn scalar(&self) -> IndexSeries<T> {
        self.map(|m| m.sum())
    }

    /// Row sums `ť = 𝚃·1` at a sample.
    pub fn row_sums(&self, s: usize) -> Option<Array1<T>> {
        self.matrices[s]
            .as_ref()
            .map(|m| m.sum_axis(ndarray::Axis(1)))
    }

    /// Column sums `t̂ = 1ᵀ·𝚃` at a sample.
    pub fn col_sums(&self, s: usize) -> Option<Array1<T>> {
        self.matrices[s]
            .as_ref()
            .map(|m| m.sum_axis(ndarray::Axis(0)))
    }

    fn map(&self, f: impl Fn(&Array2<T>) -> T) -> IndexSeries<T> {
        IndexSeries::new(
            self.grid.clone(),
            self.matrices.iter().map(|m| m.as_ref().map(&f)).collect(),
        )
    }
}

/// Flow- or storage-based effect matrices for one variant and kind.
pub fn effect_report<T: Scalar>(
    field: &DiactField<T>,
    traj: &DecomposedTrajectory<T>,
    variant: Variant,
    kind: FlowKind,
    basis: Basis,
) -> Result<EffectReport<T>, IndicatorError> {
    let n = traj.n;
    let samples = traj.len();
    let raw: Vec<Array2<T>> = match basis {
        Basis::Flow => field
            .samples
            .iter()
            .map(|s| s.flows(kind, variant).clone())
            .collect(),
        Basis::Storage => {
            if !field.storages.has_full(n, variant) {
                return Err(IndicatorError::MissingStorages(variant.letter()));
            }
            (0..samples)
                .map(|s| {
                    field
                        .storages
                        .matrix(n, variant, kind, s)
                        .expect("full tracking")
                })
                .collect()
        }
    };
    let sigma_in: Vec<T> = traj.flows.iter().map(|st| st.tau_in.sum()).collect();
    let sigma_out: Vec<T> = traj.flows.iter().map(|st| st.tau_out.sum()).collect();
    let sigma_x: Vec<T> = traj.flows.iter().map(|st| st.x.sum()).collect();
    let (norm, eps) = match basis {
        Basis::Flow => (&sigma_in, traj.thresholds.flow),
        Basis::Storage => (&sigma_x, traj.thresholds.storage),
    };
    let matrices = raw
        .iter()
        .zip(norm)
        .map(|(m, &sig)| (sig > eps).then(|| m / sig))
        .collect();
    Ok(EffectReport {
        variant,
        kind,
        basis,
        grid: traj.grid.clone(),
        raw,
        matrices,
        sigma_in,
        sigma_out,
        sigma_x,
    })
}

/// Ratio-of-integrals matrix `∫ T^* / ∫ σ` over `[t1, t]`, both grid times.
pub fn average_matrix<T: Scalar>(
    field: &DiactField<T>,
    traj: &DecomposedTrajectory<T>,
    variant: Variant,
    kind: FlowKind,
    basis: Basis,
    t1: T,
    t: T,
) -> Result<Option<Array2<T>>, IndicatorError> {
    if !(t > t1) {
        return Err(IndicatorError::BadInterval(t1.as_f64(), t.as_f64()));
    }
    let s1 = grid_index(&traj.grid, t1)?;
    let s2 = grid_index(&traj.grid, t)?;
    let n = traj.n;
    let (num, total, eps) = match basis {
        Basis::Flow => {
            let a = traj
                .flow_integral(s1, kind, variant)
                .ok_or(IndicatorError::MissingAccumulators)?;
            let b = traj
                .flow_integral(s2, kind, variant)
                .ok_or(IndicatorError::MissingAccumulators)?;
            (&b - &a, Total::InwardThroughflow, traj.thresholds.flow)
        }
        Basis::Storage => {
            let m = field
                .storages
                .integral_matrix(n, variant, kind, s1, s2)
                .ok_or(IndicatorError::MissingStorages(variant.letter()))?;
            (m, Total::Storage, traj.thresholds.storage)
        }
    };
    let den = traj
        .total_integral(s2, total)
        .zip(traj.total_integral(s1, total))
        .map(|(b, a)| b - a)
        .ok_or(IndicatorError::MissingAccumulators)?;
    Ok((den > eps * (t - t1)).then(|| num / den))
}

/// Average index over compartment subsets on `[t1, t]`.
#[allow(clippy::too_many_arguments)]
pub fn average_index<T: Scalar>(
    field: &DiactField<T>,
    traj: &DecomposedTrajectory<T>,
    variant: Variant,
    kind: FlowKind,
    basis: Basis,
    rows: &[usize],
    cols: &[usize],
    t1: T,
    t: T,
) -> Result<Option<T>, IndicatorError> {
    let m = average_matrix(field, traj, variant, kind, basis, t1, t)?;
    Ok(m.map(|m| {
        let mut acc = T::zero();
        for &i in rows {
            for &k in cols {
                acc += m[[i, k]];
            }
        }
        acc
    }))
}
