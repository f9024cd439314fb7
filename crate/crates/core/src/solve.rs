//! Integration of the decomposed system with its auxiliary states.

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2};
use rayon::prelude::*;
use thiserror::Error;

use crate::diact::{diact_matrices, DiactStorages, FlowKind, StorageTrack, Variant};
use crate::model::{CompartmentalModel, EvalError, Intensities};
use crate::ode::{integrate, IntegrationSpec, OdeError, SolverStats};
use crate::partition::{decomposed_rhs_into, DecomposedState, SubthroughflowEval, Thresholds};
use crate::scalar::Scalar;
use crate::transient::{FlowPath, PathError};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Ode(#[from] OdeError<EvalError>),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Path(PathError),
    #[error("invalid solve options: {0}")]
    Options(String),
}

/// Diact storages to integrate alongside the decomposed system.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum StorageSelection {
    #[default]
    None,
    Tracks(Vec<StorageTrack>),
    /// Every pair for the listed variants.
    AllPairs(Vec<Variant>),
}

impl StorageSelection {
    fn resolve(&self, n: usize) -> Vec<StorageTrack> {
        match self {
            StorageSelection::None => Vec::new(),
            StorageSelection::Tracks(t) => {
                let mut out: Vec<StorageTrack> = Vec::new();
                for tr in t {
                    if !out.contains(tr) {
                        out.push(*tr);
                    }
                }
                out
            }
            StorageSelection::AllPairs(vs) => {
                let mut out = Vec::new();
                for &variant in vs {
                    for i in 0..n {
                        for k in 0..n {
                            out.push(StorageTrack { i, k, variant });
                        }
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions<T> {
    /// Integrate storage and flow accumulators (exposures, averages).
    pub accumulate: bool,
    pub storages: StorageSelection,
    /// Start of diact storage accumulation; defaults to the integration start.
    pub storage_start: Option<T>,
    pub paths: Vec<FlowPath<T>>,
}

impl<T> Default for SolveOptions<T> {
    fn default() -> Self {
        SolveOptions {
            accumulate: false,
            storages: StorageSelection::None,
            storage_start: None,
            paths: Vec::new(),
        }
    }
}

/// Offsets of the auxiliary blocks inside the flattened state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout<T> {
    pub n: usize,
    /// Accumulator block offset (∫X, normalizers, flow integrals).
    pub acc: Option<usize>,
    /// Six states per track: the three kinds, then their running integrals.
    pub storages: Vec<StorageTrack>,
    pub storage_offset: usize,
    pub storage_start: T,
    /// Each path with the offset of its `2·(len−1)` states.
    pub paths: Vec<(FlowPath<T>, usize)>,
    pub dim: usize,
}

/// Normalizer accumulators, in storage order after `∫X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Total {
    /// `∫ Σ τ̌_i`
    InwardThroughflow,
    /// `∫ Σ τ̂_i`
    OutwardThroughflow,
    /// `∫ Σ x_i`
    Storage,
    /// `∫ Σ z_i`
    Input,
    /// `∫ Σ y_i`
    Output,
}

impl<T: Scalar> StateLayout<T> {
    fn new(n: usize, t0: T, opts: &SolveOptions<T>) -> Self {
        let base = n * (n + 1);
        let mut dim = base;
        let acc = opts.accumulate.then(|| {
            let off = dim;
            dim += base + 5 + 3 * 5 * n * n;
            off
        });
        let storages = opts.storages.resolve(n);
        let storage_offset = dim;
        dim += 6 * storages.len();
        let mut paths = Vec::new();
        for p in &opts.paths {
            paths.push((p.clone(), dim));
            dim += 2 * (p.nodes.len() - 1);
        }
        StateLayout {
            n,
            acc,
            storages,
            storage_offset,
            storage_start: opts.storage_start.unwrap_or(t0),
            paths,
            dim,
        }
    }

    fn needs_diact(&self) -> bool {
        self.acc.is_some() || !self.storages.is_empty()
    }

    fn total_offset(&self, which: Total) -> Option<usize> {
        self.acc.map(|a| a + self.n * (self.n + 1) + which as usize)
    }

    fn flow_offset(&self, kind: FlowKind, v: Variant) -> Option<usize> {
        let n = self.n;
        self.acc
            .map(|a| a + n * (n + 1) + 5 + (kind.index() * 5 + v.index()) * n * n)
    }
}

/// Sampled decomposed solution with per-sample evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedTrajectory<T> {
    pub n: usize,
    pub grid: Vec<T>,
    /// Flattened states, one row per sample.
    pub values: Array2<T>,
    pub layout: StateLayout<T>,
    pub intensities: Vec<Intensities<T>>,
    pub flows: Vec<SubthroughflowEval<T>>,
    pub thresholds: Thresholds<T>,
    pub stats: SolverStats,
}

impl<T: Scalar> DecomposedTrajectory<T> {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Index of a grid time (exact match).
    pub fn index_of(&self, t: T) -> Option<usize> {
        self.grid.iter().position(|&g| g == t)
    }

    /// Index of the grid time nearest to `t`.
    pub fn nearest_index(&self, t: T) -> usize {
        let mut best = 0;
        for (k, &g) in self.grid.iter().enumerate() {
            if (g - t).abs() < (self.grid[best] - t).abs() {
                best = k;
            }
        }
        best
    }

    /// Substorage matrix at sample `s`.
    pub fn x_sub(&self, s: usize) -> ArrayView2<'_, T> {
        let n = self.n;
        self.values
            .row(s)
            .slice_move(ndarray::s![..n * (n + 1)])
            .into_shape_with_order((n, n + 1))
            .expect("contiguous row")
    }

    pub fn state(&self, s: usize) -> DecomposedState<T> {
        DecomposedState {
            t: self.grid[s],
            x_sub: self.x_sub(s).to_owned(),
        }
    }

    /// `∫_{t0}^{t} X ds` at sample `s`.
    pub fn storage_integral(&self, s: usize) -> Option<ArrayView2<'_, T>> {
        let n = self.n;
        let a = self.layout.acc?;
        Some(
            self.values
                .row(s)
                .slice_move(ndarray::s![a..a + n * (n + 1)])
                .into_shape_with_order((n, n + 1))
                .expect("contiguous row"),
        )
    }

    pub fn total_integral(&self, s: usize, which: Total) -> Option<T> {
        self.layout.total_offset(which).map(|o| self.values[[s, o]])
    }

    /// `∫_{t0}^{t} T^* ds` for a flow kind and variant.
    pub fn flow_integral(&self, s: usize, kind: FlowKind, v: Variant) -> Option<ArrayView2<'_, T>> {
        let n = self.n;
        let o = self.layout.flow_offset(kind, v)?;
        Some(
            self.values
                .row(s)
                .slice_move(ndarray::s![o..o + n * n])
                .into_shape_with_order((n, n))
                .expect("contiguous row"),
        )
    }

    /// Chain storages and their running integrals for path `p`, `None` before the path starts.
    pub fn path_states(
        &self,
        s: usize,
        p: usize,
    ) -> (Option<ArrayView1<'_, T>>, Option<ArrayView1<'_, T>>) {
        let (path, off) = &self.layout.paths[p];
        let start = path.start.unwrap_or(self.grid[0]);
        if self.grid[s] < start {
            return (None, None);
        }
        let len = path.nodes.len() - 1;
        let row = self.values.row(s);
        (
            Some(row.slice_move(ndarray::s![*off..*off + len])),
            Some(
                self.values
                    .row(s)
                    .slice_move(ndarray::s![*off + len..*off + 2 * len]),
            ),
        )
    }

    /// Tracked diact storage series.
    pub fn diact_storages(&self) -> DiactStorages<T> {
        let l = &self.layout;
        if l.storages.is_empty() {
            return DiactStorages::default();
        }
        let column = |idx: usize, off: usize| {
            self.values
                .column(l.storage_offset + 6 * idx + off)
                .to_vec()
        };
        let series = (0..l.storages.len())
            .map(|idx| FlowKind::ALL.map(|kind| column(idx, kind.index())))
            .collect();
        let integrals = (0..l.storages.len())
            .map(|idx| FlowKind::ALL.map(|kind| column(idx, 3 + kind.index())))
            .collect();
        DiactStorages {
            start: Some(l.storage_start),
            tracks: l.storages.clone(),
            series,
            integrals,
        }
    }
}

struct Workspace<T> {
    ints: Intensities<T>,
    dx: Array2<T>,
    x: Vec<T>,
}

#[allow(clippy::too_many_arguments)]
fn rhs<T: Scalar>(
    model: &CompartmentalModel<T>,
    layout: &StateLayout<T>,
    eps_flow: T,
    storages_active: bool,
    paths_active: &[bool],
    ws: &mut Workspace<T>,
    t: T,
    y: &[T],
    dy: &mut [T],
) -> Result<(), EvalError> {
    let n = layout.n;
    let base = n * (n + 1);
    let x_sub = ArrayView2::from_shape((n, n + 1), &y[..base]).expect("state layout");
    for i in 0..n {
        ws.x[i] = x_sub.row(i).sum();
    }
    model.eval_intensities_into(t, &ws.x, &mut ws.ints)?;
    decomposed_rhs_into(&ws.ints, x_sub, &mut ws.dx);
    dy[..base].copy_from_slice(ws.dx.as_slice().expect("standard layout"));
    dy[base..].fill(T::zero());

    let ints = &ws.ints;
    let st = layout
        .needs_diact()
        .then(|| SubthroughflowEval::from_intensities(t, ints, x_sub, eps_flow));
    let dm = st.as_ref().map(|st| diact_matrices(st, eps_flow));

    if let (Some(a), Some(st), Some(dm)) = (layout.acc, &st, &dm) {
        dy[a..a + base].copy_from_slice(&y[..base]);
        let tot = a + base;
        dy[tot] = st.tau_in.sum();
        dy[tot + 1] = st.tau_out.sum();
        dy[tot + 2] = st.x.sum();
        dy[tot + 3] = st.z.sum();
        dy[tot + 4] = (0..n).map(|i| ints.w[i] * st.x[i]).sum();
        for kind in FlowKind::ALL {
            for v in Variant::ALL {
                let o = layout.flow_offset(kind, v).expect("accumulators enabled");
                let mut out =
                    ArrayViewMut2::from_shape((n, n), &mut dy[o..o + n * n]).expect("flow block");
                for i in 0..n {
                    for k in 0..n {
                        out[[i, k]] = dm.flow(v, kind, i, k);
                    }
                }
            }
        }
    }

    if storages_active {
        if let Some(dm) = &dm {
            for (idx, tr) in layout.storages.iter().enumerate() {
                let o = layout.storage_offset + 6 * idx;
                for kind in FlowKind::ALL {
                    let s = o + kind.index();
                    dy[s] = dm.flow(tr.variant, kind, tr.i, tr.k) - ints.out[tr.i] * y[s];
                    dy[s + 3] = y[s];
                }
            }
        }
    }

    for ((path, off), &active) in layout.paths.iter().zip(paths_active) {
        if !active {
            continue;
        }
        let len = path.nodes.len() - 1;
        let k = path.subsystem;
        let mut inflow = ints.q[[path.nodes[1], path.nodes[0]]] * x_sub[[path.nodes[0], k]];
        for m in 0..len {
            let node = path.nodes[m + 1];
            let xw = y[off + m];
            dy[off + m] = inflow - ints.out[node] * xw;
            dy[off + len + m] = xw;
            if m + 1 < len {
                inflow = ints.q[[path.nodes[m + 2], node]] * xw;
            }
        }
    }
    Ok(())
}

/// Integrate the decomposed system `Ẋ = [A X_0 | 𝒵 + A X_{1..n}]` from
/// `X(t0) = [x0 | 0]` together with any requested auxiliary states.
///
/// Auxiliary blocks with a start time later than `t0` are held at zero until
/// then; integration is split at those times so each block starts exactly.
pub fn solve_decomposed<T: Scalar>(
    model: &CompartmentalModel<T>,
    spec: &IntegrationSpec<T>,
    opts: &SolveOptions<T>,
) -> Result<DecomposedTrajectory<T>, SolveError> {
    spec.validate().map_err(OdeError::from)?;
    let n = model.n();
    for p in &opts.paths {
        p.validate(model).map_err(SolveError::Path)?;
    }
    let (t0, t1) = (spec.t0, spec.t1);
    let layout = StateLayout::new(n, t0, opts);
    for tr in &layout.storages {
        if tr.i >= n || tr.k >= n {
            return Err(SolveError::Options(format!(
                "storage pair ({}, {}) out of range",
                tr.i + 1,
                tr.k + 1
            )));
        }
    }
    let mut starts: Vec<T> = Vec::new();
    if !layout.storages.is_empty() {
        starts.push(layout.storage_start);
    }
    for (p, _) in &layout.paths {
        starts.push(p.start.unwrap_or(t0));
    }
    if let Some(bad) = starts.iter().find(|&&s| !(s >= t0 && s <= t1)) {
        return Err(SolveError::Options(format!(
            "start time {bad} outside [{t0}, {t1}]"
        )));
    }
    let mut breaks: Vec<T> = starts
        .iter()
        .copied()
        .filter(|&s| s > t0 && s < t1)
        .collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    breaks.dedup();
    breaks.push(t1);

    let thresholds = Thresholds::for_model(model, &spec.sample_grid)?;
    let eps_flow = thresholds.flow;
    let mut y = vec![T::zero(); layout.dim];
    for (i, &v) in model.x0().iter().enumerate() {
        y[i * (n + 1)] = v;
    }

    let mut values = Array2::zeros((spec.sample_grid.len(), layout.dim));
    let mut stats = SolverStats::default();
    let mut cursor = t0;
    let mut next = 0usize;
    let max_step = spec.max_step.unwrap_or((t1 - t0) / T::lit(50.0));
    let mut ws = Workspace {
        ints: Intensities::zeros(n),
        dx: Array2::zeros((n, n + 1)),
        x: vec![T::zero(); n],
    };

    for &seg_end in &breaks {
        let first = next;
        while next < spec.sample_grid.len() && spec.sample_grid[next] <= seg_end {
            next += 1;
        }
        let mut grid: Vec<T> = spec.sample_grid[first..next].to_vec();
        let has_end = grid.last() == Some(&seg_end);
        if !has_end {
            grid.push(seg_end);
        }
        let mut seg = spec.clone();
        seg.t0 = cursor;
        seg.t1 = seg_end;
        seg.sample_grid = grid;
        seg.max_step = Some(max_step.min(seg_end - cursor));

        let storages_active = layout.storage_start <= cursor;
        let paths_active: Vec<bool> = layout
            .paths
            .iter()
            .map(|(p, _)| p.start.unwrap_or(t0) <= cursor)
            .collect();
        let tr = integrate(
            |t, y: &[T], dy: &mut [T]| {
                rhs(
                    model,
                    &layout,
                    eps_flow,
                    storages_active,
                    &paths_active,
                    &mut ws,
                    t,
                    y,
                    dy,
                )
            },
            &y,
            &seg,
        )?;
        stats.steps += tr.stats.steps;
        stats.rejected += tr.stats.rejected;
        stats.rhs_evals += tr.stats.rhs_evals;
        let rows = next - first;
        for r in 0..rows {
            values.row_mut(first + r).assign(&tr.values.row(r));
        }
        y = tr.values.row(tr.len() - 1).to_vec();
        cursor = seg_end;
    }

    let base = n * (n + 1);
    let grid = spec.sample_grid.clone();
    let evals: Vec<(Intensities<T>, SubthroughflowEval<T>)> = (0..grid.len())
        .into_par_iter()
        .map(|s| {
            let row = values.row(s);
            let x_sub = row
                .slice(ndarray::s![..base])
                .into_shape_with_order((n, n + 1))
                .expect("contiguous row");
            let x: Vec<T> = x_sub.rows().into_iter().map(|r| r.sum()).collect();
            let ints = model.eval_intensities(grid[s], &x)?;
            let st = SubthroughflowEval::from_intensities(grid[s], &ints, x_sub, eps_flow);
            Ok((ints, st))
        })
        .collect::<Result<_, EvalError>>()?;
    let (intensities, flows) = evals.into_iter().unzip();

    Ok(DecomposedTrajectory {
        n,
        grid,
        values,
        layout,
        intensities,
        flows,
        thresholds,
        stats,
    })
}

/// Integrate the undecomposed system `ẋ = τ̌ − τ̂` with the same solver settings.
pub fn solve_aggregate<T: Scalar>(
    model: &CompartmentalModel<T>,
    spec: &IntegrationSpec<T>,
) -> Result<crate::ode::Trajectory<T>, SolveError> {
    let n = model.n();
    let mut ints = Intensities::zeros(n);
    let tr = integrate(
        |t, x: &[T], dx: &mut [T]| {
            model.eval_intensities_into(t, x, &mut ints)?;
            for i in 0..n {
                let mut v = ints.z[i] - ints.out[i] * x[i];
                for j in 0..n {
                    v += ints.q[[i, j]] * x[j];
                }
                dx[i] = v;
            }
            Ok::<_, EvalError>(())
        },
        model.x0(),
        spec,
    )?;
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_stays_zero() {
        let m: CompartmentalModel<f64> = CompartmentalModel::builder(2).build().unwrap();
        let spec = IntegrationSpec::uniform(0.0, 5.0, 11);
        let opts = SolveOptions {
            accumulate: true,
            ..Default::default()
        };
        let tr = solve_decomposed(&m, &spec, &opts).unwrap();
        assert!(tr.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_compartment_quadrature() {
        let m: CompartmentalModel<f64> = CompartmentalModel::builder(1)
            .input(1, "1")
            .output(1, "1")
            .build()
            .unwrap();
        let spec = IntegrationSpec::uniform(0.0, 5.0, 6);
        let opts = SolveOptions {
            accumulate: true,
            ..Default::default()
        };
        let tr = solve_decomposed(&m, &spec, &opts).unwrap();
        let e = tr.storage_integral(5).unwrap()[[0, 1]] - tr.storage_integral(0).unwrap()[[0, 1]];
        assert!((e - (4.0 + (-5.0f64).exp())).abs() < 1e-8);
        assert!((tr.x_sub(5)[[0, 1]] - (1.0 - (-5.0f64).exp())).abs() < 1e-8);
    }

    #[test]
    fn late_storage_start_stays_zero_until_start() {
        let m: CompartmentalModel<f64> =
            crate::dsl::parse_model(include_str!("../models/chain.model")).unwrap();
        let spec = IntegrationSpec::uniform(0.0, 10.0, 101);
        let opts = SolveOptions {
            storages: StorageSelection::AllPairs(vec![Variant::Direct]),
            storage_start: Some(2.05),
            ..Default::default()
        };
        let tr = solve_decomposed(&m, &spec, &opts).unwrap();
        let st = tr.diact_storages();
        let s = st
            .series(1, 0, Variant::Direct, FlowKind::Composite)
            .unwrap();
        assert!(s[..21].iter().all(|&v| v == 0.0));
        assert!(s[21] > 0.0 && s[100] > s[21]);
    }
}
