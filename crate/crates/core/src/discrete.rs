//! Sequence-of-steady-states analysis of tabulated flows.
//!
//! Each row of a table is a steady snapshot `(z, y, F, x?)`. Subthroughflows
//! are `T̂ = 𝒯 M`, `T̃ = F M` and `X = 𝒳 𝒯⁻¹ T̂` with `M = (𝒯 − F)⁻¹ 𝒵`.
//! Rates of change are difference quotients between snapshots.

use std::collections::HashSet;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::diact::{diact_matrices_from_parts, DiactMatrices, FlowKind, Variant};
use crate::indicators::utility::skew;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscreteError {
    #[error("csv: {0}")]
    Csv(String),
    #[error("unrecognized column `{0}`")]
    Column(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: {message}")]
    Value {
        row: usize,
        column: String,
        message: String,
    },
    #[error("table has no rows")]
    Empty,
    #[error("times must be strictly increasing (row {0})")]
    Time(usize),
    #[error("singular steady-state system at t = {0}")]
    Singular(f64),
}

/// One steady snapshot: `f[[i, j]]` is the flow from `j` to `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub t: T,
    pub z: Array1<T>,
    pub y: Array1<T>,
    pub f: Array2<T>,
    pub x: Option<Array1<T>>,
}

#[derive(Debug, Clone, PartialEq)]
enum Col {
    T,
    Z(usize),
    Y(usize),
    F(usize, usize),
    X(usize),
}

fn parse_header(name: &str) -> Result<Col, DiscreteError> {
    let bad = || DiscreteError::Column(name.to_string());
    if name == "t" {
        return Ok(Col::T);
    }
    let parts: Vec<&str> = name.split('_').collect();
    let idx = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&k| k >= 1)
            .map(|k| k - 1)
            .ok_or_else(bad)
    };
    match parts.as_slice() {
        ["z", i] => Ok(Col::Z(idx(i)?)),
        ["y", i] => Ok(Col::Y(idx(i)?)),
        ["x", i] => Ok(Col::X(idx(i)?)),
        ["f", i, j] => Ok(Col::F(idx(i)?, idx(j)?)),
        _ => Err(bad()),
    }
}

/// Parse a table with columns `t`, `z_i`, `y_i`, optional `f_i_j` and optional `x_i`.
///
/// Indices are 1-based; `f_i_j` is the flow from `j` to `i`. Absent flow columns are zero.
pub fn parse_table<T: Scalar>(text: &str) -> Result<Vec<Snapshot<T>>, DiscreteError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| DiscreteError::Csv(e.to_string()))?
        .clone();
    let cols: Vec<Col> = headers.iter().map(parse_header).collect::<Result<_, _>>()?;
    let n = cols
        .iter()
        .filter_map(|c| match c {
            Col::Z(i) | Col::Y(i) | Col::X(i) => Some(i + 1),
            Col::F(i, j) => Some(i.max(j) + 1),
            Col::T => None,
        })
        .max()
        .unwrap_or(0);
    let mut seen = HashSet::new();
    for h in headers.iter() {
        if !seen.insert(h) {
            return Err(DiscreteError::Column(h.to_string()));
        }
    }
    let require = |name: String| {
        if headers.iter().any(|h| h == name) {
            Ok(())
        } else {
            Err(DiscreteError::MissingColumn(name))
        }
    };
    require("t".into())?;
    for i in 1..=n {
        require(format!("z_{i}"))?;
        require(format!("y_{i}"))?;
    }
    let x_count = cols.iter().filter(|c| matches!(c, Col::X(_))).count();
    if x_count != 0 && x_count != n {
        let missing = (1..=n)
            .find(|i| !headers.iter().any(|h| h == format!("x_{i}")))
            .unwrap_or(1);
        return Err(DiscreteError::MissingColumn(format!("x_{missing}")));
    }

    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DiscreteError::Csv(e.to_string()))?;
        let row = r + 1;
        let mut snap = Snapshot {
            t: T::zero(),
            z: Array1::zeros(n),
            y: Array1::zeros(n),
            f: Array2::zeros((n, n)),
            x: (x_count > 0).then(|| Array1::zeros(n)),
        };
        for (c, (col, field)) in cols.iter().zip(rec.iter()).enumerate() {
            let value_err = |message: &str| DiscreteError::Value {
                row,
                column: headers[c].to_string(),
                message: message.to_string(),
            };
            let v: f64 = field.parse().map_err(|_| value_err("not a number"))?;
            if !v.is_finite() {
                return Err(value_err("not finite"));
            }
            if !matches!(col, Col::T) && v < 0.0 {
                return Err(value_err("negative value"));
            }
            let v = T::lit(v);
            match *col {
                Col::T => snap.t = v,
                Col::Z(i) => snap.z[i] = v,
                Col::Y(i) => snap.y[i] = v,
                Col::F(i, j) => snap.f[[i, j]] = v,
                Col::X(i) => snap.x.as_mut().expect("x columns present")[i] = v,
            }
        }
        if rows.last().is_some_and(|p: &Snapshot<T>| !(snap.t > p.t)) {
            return Err(DiscreteError::Time(row));
        }
        rows.push(snap);
    }
    if rows.is_empty() {
        return Err(DiscreteError::Empty);
    }
    Ok(rows)
}

/// Solve `A X = B` by Gaussian elimination with partial pivoting.
pub fn solve_linear<T: Scalar>(mut a: Array2<T>, mut b: Array2<T>) -> Option<Array2<T>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "matrix must be square");
    assert_eq!(b.nrows(), n, "right-hand side has wrong height");
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tiny = scale * T::epsilon() * T::from_usize_lossy(n.max(1));
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| {
                a[[p, col]]
                    .abs()
                    .partial_cmp(&a[[q, col]].abs())
                    .expect("finite")
            })
            .expect("nonempty");
        if !(a[[piv, col]].abs() > tiny) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap([piv, k], [col, k]);
            }
            for k in 0..b.ncols() {
                b.swap([piv, k], [col, k]);
            }
        }
        for r in (col + 1)..n {
            let m = a[[r, col]] / a[[col, col]];
            if m == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[[col, k]];
                a[[r, k]] -= m * v;
            }
            for k in 0..b.ncols() {
                let v = b[[col, k]];
                b[[r, k]] -= m * v;
            }
        }
    }
    for col in (0..n).rev() {
        for k in 0..b.ncols() {
            let mut acc = b[[col, k]];
            for j in (col + 1)..n {
                acc -= a[[col, j]] * b[[j, k]];
            }
            b[[col, k]] = acc / a[[col, col]];
        }
    }
    Some(b)
}

/// Steady-state decomposition of one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState<T> {
    pub t: T,
    pub tau_in: Array1<T>,
    pub tau_out: Array1<T>,
    /// `T̂`, `Ť` and `T̃`; column `k` is input subsystem `k`.
    pub t_out: Array2<T>,
    pub t_in: Array2<T>,
    pub t_tilde: Array2<T>,
    /// `X`, when storages are tabulated.
    pub x_sub: Option<Array2<T>>,
    pub residence: Vec<Option<T>>,
    pub matrices: DiactMatrices<T>,
    /// Composite diact flows by [`Variant::index`].
    pub flows: [Array2<T>; 5],
    /// `max_i |τ̌_i − τ̂_i| / max(1, max_i τ̂_i)`; zero for a balanced snapshot.
    pub imbalance: T,
}

pub fn steady_state<T: Scalar>(snap: &Snapshot<T>) -> Result<SteadyState<T>, DiscreteError> {
    let n = snap.z.len();
    let tau_out = Array1::from_shape_fn(n, |i| snap.y[i] + snap.f.column(i).sum());
    let tau_in = Array1::from_shape_fn(n, |i| snap.z[i] + snap.f.row(i).sum());
    let sup = tau_out
        .iter()
        .fold(T::zero(), |m, &v| m.max(v))
        .max(tau_in.iter().fold(T::zero(), |m, &v| m.max(v)));
    let eps = T::lit(1e-12) * (T::one() + sup);

    // Compartments without outward throughflow carry no subsystem flow.
    let active: Vec<usize> = (0..n).filter(|&i| tau_out[i] > eps).collect();
    let m = active.len();
    let a = Array2::from_shape_fn((m, m), |(r, c)| {
        let (i, j) = (active[r], active[c]);
        let d = if i == j { tau_out[i] } else { T::zero() };
        d - snap.f[[i, j]]
    });
    let rhs = Array2::from_shape_fn(
        (m, m),
        |(r, c)| if r == c { snap.z[active[r]] } else { T::zero() },
    );
    let sol = solve_linear(a, rhs).ok_or(DiscreteError::Singular(snap.t.as_f64()))?;
    let mut big_m = Array2::zeros((n, n));
    for (r, &i) in active.iter().enumerate() {
        for (c, &k) in active.iter().enumerate() {
            big_m[[i, k]] = sol[[r, c]];
        }
    }
    let t_out = Array2::from_shape_fn((n, n), |(i, k)| tau_out[i] * big_m[[i, k]]);
    let t_tilde = snap.f.dot(&big_m);
    let mut t_in = t_tilde.clone();
    for i in 0..n {
        t_in[[i, i]] += snap.z[i];
    }
    let x_sub = snap
        .x
        .as_ref()
        .map(|x| Array2::from_shape_fn((n, n), |(i, k)| x[i] * big_m[[i, k]]));
    let residence = (0..n)
        .map(|i| match &snap.x {
            Some(x) if tau_out[i] > eps => Some(x[i] / tau_out[i]),
            _ => None,
        })
        .collect();
    let matrices = diact_matrices_from_parts(
        &snap.f,
        &t_tilde,
        &t_out,
        t_in.diag().to_owned(),
        &tau_out,
        &Array1::zeros(n),
        eps,
    );
    let flows = std::array::from_fn(|v| matrices.flows(Variant::ALL[v], FlowKind::Composite));
    let imbalance = (0..n).fold(T::zero(), |acc, i| acc.max((tau_in[i] - tau_out[i]).abs()))
        / T::one().max(tau_out.iter().fold(T::zero(), |m, &v| m.max(v)));
    Ok(SteadyState {
        t: snap.t,
        tau_in,
        tau_out,
        t_out,
        t_in,
        t_tilde,
        x_sub,
        residence,
        matrices,
        flows,
        imbalance,
    })
}

/// Steady decompositions of every snapshot in a table.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadySequence<T> {
    pub grid: Vec<T>,
    pub states: Vec<SteadyState<T>>,
}

pub fn steady_sequence<T: Scalar>(
    rows: &[Snapshot<T>],
) -> Result<SteadySequence<T>, DiscreteError> {
    let states = rows
        .iter()
        .map(steady_state)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SteadySequence {
        grid: rows.iter().map(|r| r.t).collect(),
        states,
    })
}

impl<T: Scalar> SteadySequence<T> {
    pub fn n(&self) -> usize {
        self.states.first().map_or(0, |s| s.tau_out.len())
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Flow-based effect matrices `T^*/σ̌`; `None` for an empty snapshot.
    pub fn effects(&self, v: Variant) -> Vec<Option<Array2<T>>> {
        self.states
            .iter()
            .map(|s| {
                let sig = s.tau_in.sum();
                (sig > T::zero()).then(|| &s.flows[v.index()] / sig)
            })
            .collect()
    }

    pub fn utilities(&self, v: Variant) -> Vec<Option<Array2<T>>> {
        self.effects(v)
            .into_iter()
            .map(|m| m.map(|m| skew(&m)))
            .collect()
    }

    /// Cumulative exposure `Σ X_r (t_{r+1} − t_r)` over the preceding steps.
    pub fn exposures(&self) -> Option<Vec<Array2<T>>> {
        let n = self.n();
        let mut acc = Array2::zeros((n, n));
        let mut out = vec![acc.clone()];
        for r in 1..self.len() {
            let x = self.states[r - 1].x_sub.as_ref()?;
            acc = acc + x * (self.grid[r] - self.grid[r - 1]);
            out.push(acc.clone());
        }
        if self.len() == 1 {
            self.states[0].x_sub.as_ref()?;
        }
        Some(out)
    }
}

/// Difference-quotient rate of a series on a possibly nonuniform grid.
///
/// Central quotients in the interior, one-sided at the ends; `None` propagates.
pub fn difference_quotient<T: Scalar>(grid: &[T], values: &[Option<T>]) -> Vec<Option<T>> {
    let m = grid.len();
    assert_eq!(m, values.len(), "grid and values differ in length");
    (0..m)
        .map(|s| {
            if m < 2 {
                return None;
            }
            let (a, b) = if s == 0 {
                (0, 1)
            } else if s == m - 1 {
                (m - 2, m - 1)
            } else {
                (s - 1, s + 1)
            };
            values[a]
                .zip(values[b])
                .map(|(va, vb)| (vb - va) / (grid[b] - grid[a]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gaussian_elimination_pivots() {
        let a = array![[0.0, 2.0], [3.0, 1.0]];
        let b = array![[4.0], [5.0]];
        let x: Array2<f64> = solve_linear(a, b).unwrap();
        assert!((x[[0, 0]] - 1.0).abs() < 1e-15);
        assert!((x[[1, 0]] - 2.0).abs() < 1e-15);
        assert!(solve_linear(array![[1.0, 2.0], [2.0, 4.0]], array![[1.0], [1.0]]).is_none());
    }

    #[test]
    fn hippe_steady_snapshot() {
        let snap: Snapshot<f64> = Snapshot {
            t: 0.0,
            z: array![3.0, 3.0],
            y: array![1.0, 5.0],
            f: array![[0.0, 2.0], [4.0, 0.0]],
            x: Some(array![3.0, 3.0]),
        };
        let ss = steady_state(&snap).unwrap();
        assert_eq!(ss.imbalance, 0.0);
        let nd = ss.matrices.get(Variant::Direct);
        assert!((nd[[0, 1]] - 2.0 / 7.0).abs() < 1e-14);
        assert!((nd[[1, 0]] - 0.8).abs() < 1e-14);
        let x = ss.x_sub.unwrap();
        assert!((x.row(0).sum() - 3.0).abs() < 1e-12);
        assert!((x.row(1).sum() - 3.0).abs() < 1e-12);
        assert!((ss.residence[1].unwrap() - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn table_parsing() {
        let text = "t,z_1,z_2,y_1,y_2,f_2_1\n0,1,0,0,1,1\n1,2,0,0,2,2\n";
        let rows: Vec<Snapshot<f64>> = parse_table(text).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].f[[1, 0]], 2.0);
        assert!(rows[0].x.is_none());
        assert!(matches!(
            parse_table::<f64>("t,z_1\n0,1\n"),
            Err(DiscreteError::MissingColumn(_))
        ));
        assert!(matches!(
            parse_table::<f64>("t,z_1,y_1,q\n0,1,1,1\n"),
            Err(DiscreteError::Column(_))
        ));
        assert!(matches!(
            parse_table::<f64>("t,z_1,y_1\n1,1,1\n0,1,1\n"),
            Err(DiscreteError::Time(2))
        ));
        assert!(matches!(
            parse_table::<f64>("t,z_1,y_1\n0,-1,1\n"),
            Err(DiscreteError::Value { row: 1, .. })
        ));
    }

    #[test]
    fn dead_compartment_is_skipped() {
        let snap: Snapshot<f64> = Snapshot {
            t: 0.0,
            z: array![1.0, 0.0],
            y: array![1.0, 0.0],
            f: Array2::zeros((2, 2)),
            x: None,
        };
        let ss = steady_state(&snap).unwrap();
        assert_eq!(ss.t_out, array![[1.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn quotients() {
        let g = [0.0, 1.0, 3.0];
        let v = [Some(0.0), Some(1.0), Some(5.0)];
        let d = difference_quotient(&g, &v);
        assert_eq!(d, vec![Some(1.0), Some(5.0 / 3.0), Some(2.0)]);
    }
}
