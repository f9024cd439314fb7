use ndarray::{s, Array1, Array2, Axis};

use super::{grid_index, IndicatorError};
use crate::diact::{DiactField, FlowKind, Variant};
use crate::scalar::Scalar;
use crate::solve::DecomposedTrajectory;
use crate::transient::TransientTrace;

/// Exposures `E(t1, t) = ∫_{t1}^{t} X ds` [mass·time].
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureReport<T> {
    pub t1: T,
    pub t: T,
    /// Input-subsystem exposures `e_{i_k}`, column `k-1`.
    pub e: Array2<T>,
    /// Exposures of the initial subcompartments, reported separately.
    pub e0: Array1<T>,
    /// `ě = E·1`.
    pub rows: Array1<T>,
    /// `ê = 1ᵀ·E`.
    pub cols: Array1<T>,
    pub total: T,
}

fn interval<T: Scalar>(grid: &[T], t1: T, t: T) -> Result<(usize, usize), IndicatorError> {
    if t < t1 {
        return Err(IndicatorError::BadInterval(t1.as_f64(), t.as_f64()));
    }
    Ok((grid_index(grid, t1)?, grid_index(grid, t)?))
}

fn exposure_between<T: Scalar>(
    traj: &DecomposedTrajectory<T>,
    a: usize,
    b: usize,
) -> Result<Array2<T>, IndicatorError> {
    let ia = traj
        .storage_integral(a)
        .ok_or(IndicatorError::MissingAccumulators)?;
    let ib = traj
        .storage_integral(b)
        .ok_or(IndicatorError::MissingAccumulators)?;
    Ok(&ib - &ia)
}

/// Exposure matrix over `[t1, t]`; both times must be samples of the trajectory.
pub fn exposures<T: Scalar>(
    traj: &DecomposedTrajectory<T>,
    t1: T,
    t: T,
) -> Result<ExposureReport<T>, IndicatorError> {
    let (a, b) = interval(&traj.grid, t1, t)?;
    let full = exposure_between(traj, a, b)?;
    let e = full.slice(s![.., 1..]).to_owned();
    let rows = e.sum_axis(Axis(1));
    let cols = e.sum_axis(Axis(0));
    Ok(ExposureReport {
        t1: traj.grid[a],
        t: traj.grid[b],
        e0: full.column(0).to_owned(),
        total: e.sum(),
        rows,
        cols,
        e,
    })
}

/// `E(t1, t_s)` for every sample `t_s ≥ t1`; earlier samples are `None`.
pub fn exposure_series<T: Scalar>(
    traj: &DecomposedTrajectory<T>,
    t1: T,
) -> Result<Vec<Option<Array2<T>>>, IndicatorError> {
    let a = grid_index(&traj.grid, t1)?;
    (0..traj.len())
        .map(|b| {
            if b < a {
                Ok(None)
            } else {
                exposure_between(traj, a, b).map(|m| Some(m.slice(s![.., 1..]).to_owned()))
            }
        })
        .collect()
}

/// Diact exposure `∫_{t1}^{t} x^*_{ik} ds` for every pair of a tracked variant.
pub fn diact_exposure<T: Scalar>(
    field: &DiactField<T>,
    variant: Variant,
    kind: FlowKind,
    t1: T,
    t: T,
) -> Result<Array2<T>, IndicatorError> {
    let (a, b) = interval(&field.grid, t1, t)?;
    field
        .storages
        .integral_matrix(field.n(), variant, kind, a, b)
        .ok_or(IndicatorError::MissingStorages(variant.letter()))
}

/// Transient exposures `∫ x^w` of each path node over `[t1, t]`.
pub fn transient_exposure<T: Scalar>(
    trace: &TransientTrace<T>,
    t1: T,
    t: T,
) -> Result<Vec<T>, IndicatorError> {
    let (a, b) = interval(&trace.grid, t1, t)?;
    Ok(trace
        .nodes
        .iter()
        .map(|nd| nd.exposure[b] - nd.exposure[a])
        .collect())
}
