use ndarray::{Array1, Array2, Axis};

use super::effects::{Basis, EffectReport};
use super::efficiency::{efficiency, Stencil};
use super::{IndexSeries, IndicatorError};
use crate::diact::{FlowKind, Variant};
use crate::scalar::Scalar;

/// Skew-symmetric utility matrices `𝕋 = 𝚃 − 𝚃ᵀ` over time.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityReport<T> {
    pub variant: Variant,
    pub kind: FlowKind,
    pub basis: Basis,
    pub grid: Vec<T>,
    pub matrices: Vec<Option<Array2<T>>>,
}

/// Skew part of a square matrix, built entrywise so that `u_ki = −u_ik` exactly.
pub fn skew<T: Scalar>(m: &Array2<T>) -> Array2<T> {
    let n = m.nrows();
    let mut u = Array2::zeros((n, n));
    for i in 0..n {
        for k in (i + 1)..n {
            let d = m[[i, k]] - m[[k, i]];
            u[[i, k]] = d;
            u[[k, i]] = -d;
        }
    }
    u
}

/// Sum of all entries of a skew matrix, paired so the result is exactly zero.
pub fn skew_total<T: Scalar>(u: &Array2<T>) -> T {
    let n = u.nrows();
    let mut acc = T::zero();
    for i in 0..n {
        acc += u[[i, i]];
        for k in (i + 1)..n {
            acc += u[[i, k]] + u[[k, i]];
        }
    }
    acc
}

pub fn utility_report<T: Scalar>(effects: &EffectReport<T>) -> UtilityReport<T> {
    UtilityReport {
        variant: effects.variant,
        kind: effects.kind,
        basis: effects.basis,
        grid: effects.grid.clone(),
        matrices: effects
            .matrices
            .iter()
            .map(|m| m.as_ref().map(skew))
            .collect(),
    }
}

impl<T: Scalar> UtilityReport<T> {
    pub fn entry(&self, i: usize, k: usize) -> IndexSeries<T> {
        self.map(|m| m[[i, k]])
    }

    pub fn scalar(&self) -> IndexSeries<T> {
        self.map(skew_total)
    }

    pub fn row_sums(&self, s: usize) -> Option<Array1<T>> {
        self.matrices[s].as_ref().map(|m| m.sum_axis(Axis(1)))
    }

    pub fn col_sums(&self, s: usize) -> Option<Array1<T>> {
        self.matrices[s].as_ref().map(|m| m.sum_axis(Axis(0)))
    }

    /// Time derivative of one utility entry.
    pub fn efficiency(
        &self,
        i: usize,
        k: usize,
        stencil: Stencil,
    ) -> Result<IndexSeries<T>, IndicatorError> {
        efficiency(&self.entry(i, k), stencil)
    }

    fn map(&self, f: impl Fn(&Array2<T>) -> T) -> IndexSeries<T> {
        IndexSeries::new(
            self.grid.clone(),
            self.matrices.iter().map(|m| m.as_ref().map(&f)).collect(),
        )
    }
}
