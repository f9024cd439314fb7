//! Effect, utility, efficiency, exposure, residence-time and recovery indicators.

pub mod effects;
pub mod efficiency;
pub mod exposure;
pub mod residence;
pub mod resilience;
pub mod utility;

use thiserror::Error;

use crate::scalar::Scalar;

pub use effects::{average_index, average_matrix, effect_report, Basis, EffectReport};
pub use efficiency::{efficiency, Stencil};
pub use exposure::{diact_exposure, exposure_series, exposures, ExposureReport};
pub use residence::{residence_times, ResidenceReport};
pub use resilience::{recovery_diagnostic, RecoveryDiagnostic};
pub use utility::{utility_report, UtilityReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndicatorError {
    #[error("efficiency needs at least 5 samples, got {0}")]
    TooFewSamples(usize),
    #[error("efficiency needs a uniform grid")]
    NonUniformGrid,
    #[error("storage-based indices need every pair of variant `{0}` tracked")]
    MissingStorages(char),
    #[error("accumulators were not integrated with this trajectory")]
    MissingAccumulators,
    #[error("time {0} is not a sample of the trajectory")]
    NotOnGrid(f64),
    #[error("interval [{0}, {1}] is empty or reversed")]
    BadInterval(f64, f64),
    #[error("compartment index {0} out of range")]
    Index(usize),
}

/// A scalar time series on a grid; `None` marks undefined samples.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSeries<T> {
    pub grid: Vec<T>,
    pub values: Vec<Option<T>>,
}

impl<T: Scalar> IndexSeries<T> {
    pub fn new(grid: Vec<T>, values: Vec<Option<T>>) -> Self {
        assert_eq!(grid.len(), values.len(), "grid and values differ in length");
        IndexSeries { grid, values }
    }

    pub fn from_values(grid: Vec<T>, values: Vec<T>) -> Self {
        Self::new(grid, values.into_iter().map(Some).collect())
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Value at a sample; `None` if undefined.
    pub fn at(&self, s: usize) -> Option<T> {
        self.values[s]
    }

    pub fn defined(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.grid
            .iter()
            .zip(&self.values)
            .filter_map(|(&t, v)| v.map(|v| (t, v)))
    }
}

/// Sample index of a grid time, allowing for rounding in how the grid was built.
pub(crate) fn grid_index<T: Scalar>(grid: &[T], t: T) -> Result<usize, IndicatorError> {
    let tol = T::lit(1e-9).max(T::epsilon() * T::lit(64.0)) * t.abs().max(T::one());
    grid.iter()
        .position(|&g| (g - t).abs() <= tol)
        .ok_or(IndicatorError::NotOnGrid(t.as_f64()))
}
