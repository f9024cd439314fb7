use super::efficiency::{efficiency, Stencil};
use super::{IndexSeries, IndicatorError};
use crate::scalar::Scalar;
use crate::solve::DecomposedTrajectory;

/// Residence times `r_i = x_i / τ̂_i` and their time derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidenceReport<T> {
    /// One series per compartment.
    pub residence: Vec<IndexSeries<T>>,
    /// Reverse activity rate `ṙ_i`; `None` if the grid is too short to differentiate.
    pub reverse_activity: Option<Vec<IndexSeries<T>>>,
}

pub fn residence_times<T: Scalar>(
    traj: &DecomposedTrajectory<T>,
    stencil: Stencil,
) -> ResidenceReport<T> {
    let residence: Vec<IndexSeries<T>> = (0..traj.n)
        .map(|i| {
            IndexSeries::new(
                traj.grid.clone(),
                traj.flows.iter().map(|st| st.residence[i]).collect(),
            )
        })
        .collect();
    let reverse_activity = residence
        .iter()
        .map(|r| efficiency(r, stencil))
        .collect::<Result<Vec<_>, IndicatorError>>()
        .ok();
    ResidenceReport {
        residence,
        reverse_activity,
    }
}

/// Residence time computed from one subsystem column, `X_ik / T̂_ik`.
///
/// `k = 0` is the initial subsystem. `None` where the substorage is empty.
pub fn subsystem_residence<T: Scalar>(
    traj: &DecomposedTrajectory<T>,
    s: usize,
    i: usize,
    k: usize,
) -> Option<T> {
    let x = traj.x_sub(s)[[i, k]];
    let st = &traj.flows[s];
    let out = if k == 0 {
        st.tau0_out[i]
    } else {
        st.t_out[[i, k - 1]]
    };
    (x > traj.thresholds.storage && out > T::zero()).then(|| x / out)
}
