//! Recovery diagnostic after a transient disturbance.
//!
//! A substorage `X_ik` is in band when `|X_ik − X_ik(ref)| ≤ band · x_i(ref)`,
//! i.e. the band is scaled by the compartment's reference storage. The
//! disturbance onset is the first sample after the reference time at which an
//! input or a substorage leaves its band; recovery is the first sample after
//! the last out-of-band substorage sample.

use super::{grid_index, IndicatorError};
use crate::scalar::Scalar;
use crate::solve::DecomposedTrajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryDiagnostic<T> {
    pub reference_time: T,
    pub band: T,
    /// First departure of an input or substorage from its band.
    pub onset: Option<T>,
    /// Time from which every substorage stays in band.
    pub recovered_at: Option<T>,
    pub interval: Option<T>,
    /// Largest band-relative substorage deviation at the final sample.
    pub final_deviation: T,
}

impl<T: Scalar> RecoveryDiagnostic<T> {
    pub fn recovered(&self) -> bool {
        self.recovered_at.is_some()
    }
}

fn input_out_of_band<T: Scalar>(z: T, zref: T, band: T) -> bool {
    (z - zref).abs() > band * zref.abs().max(T::lit(1e-12))
}

pub fn recovery_diagnostic<T: Scalar>(
    traj: &DecomposedTrajectory<T>,
    reference_time: T,
    band: T,
) -> Result<RecoveryDiagnostic<T>, IndicatorError> {
    let r = grid_index(&traj.grid, reference_time)?;
    let n = traj.n;
    let xref = traj.x_sub(r).to_owned();
    let aggregate_ref = &traj.flows[r].x;
    let zref = &traj.flows[r].z;

    // Worst band-relative deviation of the substorages at a sample.
    let deviation = |s: usize| {
        let xs = traj.x_sub(s);
        let mut worst = T::zero();
        for i in 0..n {
            let scale = band * aggregate_ref[i].max(traj.thresholds.storage);
            for k in 0..=n {
                worst = worst.max((xs[[i, k]] - xref[[i, k]]).abs() / scale);
            }
        }
        worst
    };

    let mut onset = None;
    let mut last_out = None;
    for s in (r + 1)..traj.len() {
        let state_out = deviation(s) > T::one();
        let z = &traj.flows[s].z;
        let input_out = (0..n).any(|i| input_out_of_band(z[i], zref[i], band));
        if onset.is_none() && (state_out || input_out) {
            onset = Some(traj.grid[s]);
        }
        if state_out {
            last_out = Some(s);
        }
    }
    let last = traj.len() - 1;
    let recovered_at = match last_out {
        None => onset,
        Some(s) if s < last => Some(traj.grid[s + 1]),
        Some(_) => None,
    };
    let interval = onset.zip(recovered_at).map(|(a, b)| b - a);
    Ok(RecoveryDiagnostic {
        reference_time: traj.grid[r],
        band,
        onset,
        recovered_at,
        interval,
        final_deviation: deviation(last) * band,
    })
}
