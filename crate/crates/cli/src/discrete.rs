//! Tables for the sequence-of-steady-states mode.

use ecoflux_core::discrete::{difference_quotient, SteadySequence};
use ecoflux_core::export::Table;
use ecoflux_core::Variant;
use ndarray::Array2;

use crate::commands::{grid_table, matrix_columns};

type Seq = SteadySequence<f64>;

pub fn names(seq: &Seq) -> Vec<String> {
    (1..=seq.n()).map(|i| i.to_string()).collect()
}

/// Throughflows, residence times, imbalance and subthroughflows per snapshot.
pub fn partition_table(seq: &Seq, names: &[String]) -> Table {
    let mut cols = Vec::new();
    let mut values: Vec<Vec<Option<f64>>> = Vec::new();
    for (i, name) in names.iter().enumerate() {
        cols.push(format!("tau_in_{name}"));
        values.push(seq.states.iter().map(|s| Some(s.tau_in[i])).collect());
        cols.push(format!("tau_out_{name}"));
        values.push(seq.states.iter().map(|s| Some(s.tau_out[i])).collect());
        cols.push(format!("r_{name}"));
        values.push(seq.states.iter().map(|s| s.residence[i]).collect());
    }
    cols.push("imbalance".into());
    values.push(seq.states.iter().map(|s| Some(s.imbalance)).collect());
    let t_in: Vec<Option<Array2<f64>>> = seq.states.iter().map(|s| Some(s.t_in.clone())).collect();
    let t_out: Vec<Option<Array2<f64>>> =
        seq.states.iter().map(|s| Some(s.t_out.clone())).collect();
    let x_sub: Vec<Option<Array2<f64>>> = seq.states.iter().map(|s| s.x_sub.clone()).collect();
    for (prefix, series) in [("T_in", &t_in), ("T_out", &t_out), ("x", &x_sub)] {
        if prefix == "x" && x_sub.iter().all(Option::is_none) {
            continue;
        }
        let (c, v) = matrix_columns(prefix, names, series);
        cols.extend(c);
        values.extend(v);
    }
    grid_table(&seq.grid).with_columns(cols, values)
}

/// Composite diact flows of the given variants.
pub fn diact_table(seq: &Seq, names: &[String], variants: &[Variant]) -> Table {
    let mut cols = Vec::new();
    let mut values = Vec::new();
    for &v in variants {
        let series: Vec<Option<Array2<f64>>> = seq
            .states
            .iter()
            .map(|s| Some(s.flows[v.index()].clone()))
            .collect();
        let (c, vals) = matrix_columns(&format!("{}_composite", v.letter()), names, &series);
        cols.extend(c);
        values.extend(vals);
    }
    grid_table(&seq.grid).with_columns(cols, values)
}

/// Effect, utility and difference-quotient efficiency of each pair `(i, k)`.
pub fn indices_table(
    seq: &Seq,
    names: &[String],
    variant: Variant,
    pairs: &[(usize, usize)],
) -> Table {
    let effects = seq.effects(variant);
    let utilities = seq.utilities(variant);
    let l = variant.letter();
    let mut cols = Vec::new();
    let mut values = Vec::new();
    for &(i, k) in pairs {
        let e: Vec<Option<f64>> = effects
            .iter()
            .map(|m| m.as_ref().map(|m| m[[i, k]]))
            .collect();
        let u: Vec<Option<f64>> = utilities
            .iter()
            .map(|m| m.as_ref().map(|m| m[[i, k]]))
            .collect();
        let label = format!("{}_{}", names[i], names[k]);
        cols.push(format!("{l}_effect_{label}"));
        cols.push(format!("{l}_efficiency_{label}"));
        cols.push(format!("{l}_utility_{label}"));
        values.push(e.clone());
        values.push(difference_quotient(&seq.grid, &e));
        values.push(u);
    }
    grid_table(&seq.grid).with_columns(cols, values)
}

/// Cumulative exposures when storages are tabulated.
pub fn exposure_table(seq: &Seq, names: &[String]) -> Option<Table> {
    let series: Vec<Option<Array2<f64>>> = seq.exposures()?.into_iter().map(Some).collect();
    let (c, v) = matrix_columns("e", names, &series);
    Some(grid_table(&seq.grid).with_columns(c, v))
}
