//! Adaptive Dormand–Prince 5(4) integrator with continuous output.

use ndarray::{Array2, ArrayView1};
use thiserror::Error;

use crate::scalar::Scalar;

/// Integration interval, tolerances and the sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationSpec<T> {
    pub t0: T,
    pub t1: T,
    pub rtol: T,
    pub atol: T,
    /// Largest allowed step; `None` means `(t1 - t0) / 50`.
    pub max_step: Option<T>,
    pub sample_grid: Vec<T>,
    /// Clip components in `[-atol, 0)` to zero after each accepted step.
    pub nonneg_clip: bool,
    /// Times the integrator must step onto exactly (e.g. forcing breakpoints).
    pub stop_points: Vec<T>,
    pub max_steps: usize,
}

impl<T: Scalar> IntegrationSpec<T> {
    pub fn new(t0: T, t1: T, sample_grid: Vec<T>) -> Self {
        IntegrationSpec {
            t0,
            t1,
            rtol: T::lit(1e-8),
            atol: T::lit(1e-10),
            max_step: None,
            sample_grid,
            nonneg_clip: false,
            stop_points: Vec::new(),
            max_steps: 5_000_000,
        }
    }

    /// `samples` equally spaced points including both ends.
    pub fn uniform(t0: T, t1: T, samples: usize) -> Self {
        Self::new(t0, t1, uniform_grid(t0, t1, samples))
    }

    pub fn tolerances(mut self, rtol: T, atol: T) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn clip(mut self, on: bool) -> Self {
        self.nonneg_clip = on;
        self
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let finite = [self.t0, self.t1, self.rtol, self.atol]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(SpecError("non-finite interval or tolerance".into()));
        }
        if self.t1 <= self.t0 {
            return Err(SpecError(format!(
                "t1 = {} must exceed t0 = {}",
                self.t1, self.t0
            )));
        }
        if self.rtol <= T::zero() || self.atol <= T::zero() {
            return Err(SpecError("tolerances must be positive".into()));
        }
        if let Some(h) = self.max_step {
            if !(h > T::zero()) {
                return Err(SpecError("max_step must be positive".into()));
            }
        }
        if self.sample_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SpecError("sample grid must be strictly increasing".into()));
        }
        let out_of_range = |t: &T| !(*t >= self.t0 && *t <= self.t1);
        if self.sample_grid.iter().any(out_of_range) {
            return Err(SpecError("sample grid leaves [t0, t1]".into()));
        }
        Ok(())
    }
}

/// Equally spaced grid with exact end points.
pub fn uniform_grid<T: Scalar>(t0: T, t1: T, samples: usize) -> Vec<T> {
    match samples {
        0 => Vec::new(),
        1 => vec![t0],
        _ => {
            let m = T::from_usize_lossy(samples - 1);
            (0..samples)
                .map(|k| {
                    if k == samples - 1 {
                        t1
                    } else {
                        t0 + (t1 - t0) * T::from_usize_lossy(k) / m
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid integration spec: {0}")]
pub struct SpecError(pub String);

#[derive(Debug, Error)]
pub enum OdeError<E: std::error::Error + 'static> {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("right-hand side is not finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("step limit exceeded at t = {t}")]
    TooManySteps { t: f64 },
    #[error("right-hand side failed at t = {t}: {source}")]
    Rhs {
        t: f64,
        #[source]
        source: E,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// States sampled on the requested grid (one row per grid time).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub grid: Vec<T>,
    pub values: Array2<T>,
    pub stats: SolverStats,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn state(&self, k: usize) -> ArrayView1<'_, T> {
        self.values.row(k)
    }

    /// Index of a grid time, matched exactly.
    pub fn index_of(&self, t: T) -> Option<usize> {
        self.grid.iter().position(|&g| g == t)
    }
}

struct Tableau<T> {
    c: [T; 7],
    a: [[T; 6]; 7],
    e: [T; 7],
    d: [T; 7],
}

impl<T: Scalar> Tableau<T> {
    fn new() -> Self {
        let l = T::lit;
        let z = T::zero();
        Tableau {
            c: [z, l(0.2), l(0.3), l(0.8), l(8.0 / 9.0), l(1.0), l(1.0)],
            a: [
                [z; 6],
                [l(0.2), z, z, z, z, z],
                [l(3.0 / 40.0), l(9.0 / 40.0), z, z, z, z],
                [l(44.0 / 45.0), l(-56.0 / 15.0), l(32.0 / 9.0), z, z, z],
                [
                    l(19372.0 / 6561.0),
                    l(-25360.0 / 2187.0),
                    l(64448.0 / 6561.0),
                    l(-212.0 / 729.0),
                    z,
                    z,
                ],
                [
                    l(9017.0 / 3168.0),
                    l(-355.0 / 33.0),
                    l(46732.0 / 5247.0),
                    l(49.0 / 176.0),
                    l(-5103.0 / 18656.0),
                    z,
                ],
                [
                    l(35.0 / 384.0),
                    z,
                    l(500.0 / 1113.0),
                    l(125.0 / 192.0),
                    l(-2187.0 / 6784.0),
                    l(11.0 / 84.0),
                ],
            ],
            e: [
                l(71.0 / 57600.0),
                z,
                l(-71.0 / 16695.0),
                l(71.0 / 1920.0),
                l(-17253.0 / 339200.0),
                l(22.0 / 525.0),
                l(-1.0 / 40.0),
            ],
            d: [
                l(-12715105075.0 / 11282082432.0),
                z,
                l(87487479700.0 / 32700410799.0),
                l(-10690763975.0 / 1880347072.0),
                l(701980252875.0 / 199316789632.0),
                l(-1453857185.0 / 822651844.0),
                l(69997945.0 / 29380423.0),
            ],
        }
    }
}

enum StageFailure<E> {
    NonFinite,
    Rhs(E),
}

fn all_finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Integrate `y' = rhs(t, y)` from `spec.t0` with `y(t0) = y0`, sampling on
/// `spec.sample_grid` through the method's continuous extension.
pub fn integrate<T, E, F>(
    mut rhs: F,
    y0: &[T],
    spec: &IntegrationSpec<T>,
) -> Result<Trajectory<T>, OdeError<E>>
where
    T: Scalar,
    E: std::error::Error + 'static,
    F: FnMut(T, &[T], &mut [T]) -> Result<(), E>,
{
    spec.validate()?;
    let dim = y0.len();
    let tab = Tableau::<T>::new();
    let (t0, t1) = (spec.t0, spec.t1);
    let span = t1 - t0;
    let hmax = spec.max_step.unwrap_or(span / T::lit(50.0)).min(span);
    let (rtol, atol) = (spec.rtol, spec.atol);
    let safe = T::lit(0.9);
    let beta = T::lit(0.04);
    let expo1 = T::lit(0.2) - beta * T::lit(0.75);
    let facc1 = T::lit(5.0); // 1 / 0.2
    let facc2 = T::lit(0.1); // 1 / 10

    let mut stats = SolverStats::default();
    let mut values = Array2::zeros((spec.sample_grid.len(), dim));
    let mut next_sample = 0usize;

    let mut stops: Vec<T> = spec
        .stop_points
        .iter()
        .copied()
        .filter(|&s| s > t0 && s < t1)
        .collect();
    stops.sort_by(|a, b| a.partial_cmp(b).expect("finite stop points"));
    stops.push(t1);
    let mut next_stop = 0usize;

    let mut t = t0;
    let mut y = y0.to_vec();
    if !all_finite(&y) {
        return Err(OdeError::NonFinite { t: t0.as_f64() });
    }
    while next_sample < spec.sample_grid.len() && spec.sample_grid[next_sample] == t0 {
        values
            .row_mut(next_sample)
            .assign(&ArrayView1::from(&y[..]));
        next_sample += 1;
    }

    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); dim]; 7];
    let mut ytmp = vec![T::zero(); dim];
    let mut y1 = vec![T::zero(); dim];
    let mut rcont = vec![vec![T::zero(); dim]; 5];

    let eval = |rhs: &mut F,
                stats: &mut SolverStats,
                t: T,
                y: &[T],
                out: &mut [T]|
     -> Result<(), StageFailure<E>> {
        stats.rhs_evals += 1;
        rhs(t, y, out).map_err(StageFailure::Rhs)?;
        if all_finite(out) {
            Ok(())
        } else {
            Err(StageFailure::NonFinite)
        }
    };
    let fail = |t: T, f: StageFailure<E>| match f {
        StageFailure::NonFinite => OdeError::NonFinite { t: t.as_f64() },
        StageFailure::Rhs(source) => OdeError::Rhs {
            t: t.as_f64(),
            source,
        },
    };

    eval(&mut rhs, &mut stats, t, &y, &mut k[0]).map_err(|f| fail(t, f))?;

    let weight = |yi: T, y1i: T| atol + rtol * yi.abs().max(y1i.abs());

    // Initial step guess.
    let mut h = {
        let sk: Vec<T> = y.iter().map(|&v| atol + rtol * v.abs()).collect();
        let rms = |v: &[T]| {
            let s: T = v.iter().zip(&sk).map(|(a, s)| (*a / *s).powi(2)).sum();
            (s / T::from_usize_lossy(dim.max(1))).sqrt()
        };
        let dnf = rms(&k[0]);
        let dny = rms(&y);
        let mut h0 = if dnf <= T::lit(1e-10) || dny <= T::lit(1e-10) {
            T::lit(1e-6)
        } else {
            T::lit(0.01) * dny / dnf
        };
        h0 = h0.min(hmax);
        for i in 0..dim {
            ytmp[i] = y[i] + h0 * k[0][i];
        }
        let mut f1 = vec![T::zero(); dim];
        let h1 = match eval(&mut rhs, &mut stats, t + h0, &ytmp, &mut f1) {
            Ok(()) => {
                let diff: Vec<T> = f1.iter().zip(&k[0]).map(|(a, b)| *a - *b).collect();
                let der2 = rms(&diff) / h0;
                let der12 = dnf.max(der2);
                if der12 <= T::lit(1e-15) {
                    (h0 * T::lit(1e-3)).max(T::lit(1e-6))
                } else {
                    (T::lit(0.01) / der12).powf(T::lit(0.2))
                }
            }
            Err(_) => h0 * T::lit(1e-3),
        };
        (T::lit(100.0) * h0).min(h1).min(hmax)
    };

    let mut facold = T::lit(1e-4);
    let mut last_rejected = false;
    let tiny = T::epsilon() * T::lit(16.0);

    while t < t1 {
        if stats.steps + stats.rejected >= spec.max_steps {
            return Err(OdeError::TooManySteps { t: t.as_f64() });
        }
        let target = stops[next_stop];
        let mut landing = false;
        let scale = t.abs().max(target.abs()).max(T::one());
        if t + h >= target - T::lit(64.0) * T::epsilon() * scale {
            h = target - t;
            landing = true;
        }
        if !landing && h.abs() <= tiny * scale {
            return Err(OdeError::StepUnderflow { t: t.as_f64() });
        }

        // Stages 2..7.
        let mut failure = None;
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = T::zero();
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += tab.a[s][j] * kj[i];
                }
                ytmp[i] = y[i] + h * acc;
            }
            if s == 6 {
                y1.copy_from_slice(&ytmp);
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            if let Err(f) = eval(&mut rhs, &mut stats, t + tab.c[s] * h, &ytmp, &mut tail[0]) {
                failure = Some(f);
                break;
            }
        }
        if let Some(f) = failure {
            stats.rejected += 1;
            last_rejected = true;
            let hn = h * T::lit(0.25);
            if hn.abs() <= tiny * t.abs().max(T::one()) {
                return Err(fail(t, f));
            }
            h = hn;
            continue;
        }

        let mut err = T::zero();
        for i in 0..dim {
            let mut e = T::zero();
            for s in 0..7 {
                e += tab.e[s] * k[s][i];
            }
            let r = (h * e).abs() / weight(y[i], y1[i]);
            if r > err {
                err = r;
            }
        }
        if !err.is_finite() {
            stats.rejected += 1;
            last_rejected = true;
            h *= T::lit(0.25);
            continue;
        }

        let fac11 = err.powf(expo1);
        if err <= T::one() {
            stats.steps += 1;
            let mut fac = fac11 / facold.powf(beta);
            fac = facc2.max(facc1.min(fac / safe));
            let mut hnew = h / fac;
            facold = err.max(T::lit(1e-4));

            for i in 0..dim {
                let ydiff = y1[i] - y[i];
                let bspl = h * k[0][i] - ydiff;
                rcont[0][i] = y[i];
                rcont[1][i] = ydiff;
                rcont[2][i] = bspl;
                rcont[3][i] = ydiff - h * k[6][i] - bspl;
                let mut dsum = T::zero();
                for s in 0..7 {
                    dsum += tab.d[s] * k[s][i];
                }
                rcont[4][i] = h * dsum;
            }
            let tnew = if landing { target } else { t + h };
            while next_sample < spec.sample_grid.len() && spec.sample_grid[next_sample] <= tnew {
                let ts = spec.sample_grid[next_sample];
                let mut row = values.row_mut(next_sample);
                if ts == tnew {
                    row.assign(&ArrayView1::from(&y1[..]));
                } else {
                    let theta = (ts - t) / h;
                    let theta1 = T::one() - theta;
                    for i in 0..dim {
                        row[i] = rcont[0][i]
                            + theta
                                * (rcont[1][i]
                                    + theta1
                                        * (rcont[2][i]
                                            + theta * (rcont[3][i] + theta1 * rcont[4][i])));
                    }
                }
                next_sample += 1;
            }

            let mut clipped = false;
            if spec.nonneg_clip {
                for v in y1.iter_mut() {
                    if *v < T::zero() && *v >= -atol {
                        *v = T::zero();
                        clipped = true;
                    }
                }
            }
            std::mem::swap(&mut y, &mut y1);
            t = tnew;
            if landing {
                next_stop += 1;
            }
            if clipped || landing {
                // FSAL derivative is stale after a state change or at a forcing breakpoint.
                eval(&mut rhs, &mut stats, t, &y, &mut k[0]).map_err(|f| fail(t, f))?;
            } else {
                let k7 = std::mem::take(&mut k[6]);
                k[6] = std::mem::replace(&mut k[0], k7);
            }

            if last_rejected {
                hnew = hnew.min(h);
            }
            last_rejected = false;
            h = hnew.min(hmax);
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h /= facc1.min(fac11 / safe);
        }
    }

    Ok(Trajectory {
        grid: spec.sample_grid.clone(),
        values,
        stats,
    })
}
