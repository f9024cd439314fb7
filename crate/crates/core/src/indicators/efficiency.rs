use super::{IndexSeries, IndicatorError};
use crate::scalar::Scalar;

/// Finite-difference stencil for time derivatives of sampled indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    Second,
    #[default]
    Fourth,
}

impl Stencil {
    fn min_points(self) -> usize {
        match self {
            Stencil::Second => 3,
            Stencil::Fourth => 5,
        }
    }
}

fn uniform_step<T: Scalar>(grid: &[T]) -> Result<T, IndicatorError> {
    let h = (grid[grid.len() - 1] - grid[0]) / T::from_usize_lossy(grid.len() - 1);
    let tol = T::lit(1e-6) * h.abs();
    if grid.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > tol) {
        return Err(IndicatorError::NonUniformGrid);
    }
    Ok(h)
}

fn derive_run<T: Scalar>(f: &[T], h: T, stencil: Stencil, out: &mut [Option<T>]) {
    let m = f.len();
    let l = T::lit;
    match stencil {
        Stencil::Fourth => {
            let d = l(12.0) * h;
            for i in 0..m {
                let v = if i >= 2 && i + 2 < m {
                    (f[i - 2] - l(8.0) * f[i - 1] + l(8.0) * f[i + 1] - f[i + 2]) / d
                } else if i == 0 {
                    (l(-25.0) * f[0] + l(48.0) * f[1] - l(36.0) * f[2] + l(16.0) * f[3]
                        - l(3.0) * f[4])
                        / d
                } else if i == 1 {
                    (l(-3.0) * f[0] - l(10.0) * f[1] + l(18.0) * f[2] - l(6.0) * f[3] + f[4]) / d
                } else if i == m - 1 {
                    (l(25.0) * f[m - 1] - l(48.0) * f[m - 2] + l(36.0) * f[m - 3]
                        - l(16.0) * f[m - 4]
                        + l(3.0) * f[m - 5])
                        / d
                } else {
                    (l(3.0) * f[m - 1] + l(10.0) * f[m - 2] - l(18.0) * f[m - 3]
                        + l(6.0) * f[m - 4]
                        - f[m - 5])
                        / d
                };
                out[i] = Some(v);
            }
        }
        Stencil::Second => {
            let d = l(2.0) * h;
            for i in 0..m {
                let v = if i == 0 {
                    (l(-3.0) * f[0] + l(4.0) * f[1] - f[2]) / d
                } else if i == m - 1 {
                    (l(3.0) * f[m - 1] - l(4.0) * f[m - 2] + f[m - 3]) / d
                } else {
                    (f[i + 1] - f[i - 1]) / d
                };
                out[i] = Some(v);
            }
        }
    }
}

/// Time derivative of an index series on a uniform grid.
///
/// Each contiguous run of defined samples is differentiated separately;
/// runs shorter than the stencil stay undefined.
pub fn efficiency<T: Scalar>(
    series: &IndexSeries<T>,
    stencil: Stencil,
) -> Result<IndexSeries<T>, IndicatorError> {
    let m = series.len();
    if m < stencil.min_points() {
        return Err(IndicatorError::TooFewSamples(m));
    }
    let h = uniform_step(&series.grid)?;
    let mut out = vec![None; m];
    let mut s = 0;
    while s < m {
        if series.values[s].is_none() {
            s += 1;
            continue;
        }
        let start = s;
        while s < m && series.values[s].is_some() {
            s += 1;
        }
        if s - start >= stencil.min_points() {
            let run: Vec<T> = series.values[start..s]
                .iter()
                .map(|v| v.expect("defined run"))
                .collect();
            derive_run(&run, h, stencil, &mut out[start..s]);
        }
    }
    Ok(IndexSeries::new(series.grid.clone(), out))
}
