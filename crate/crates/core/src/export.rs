//! Plot-ready tables, CSV and JSON serialization, and checksummed manifests.
//!
//! Floats are written with 17 significant digits so values round-trip
//! exactly; undefined values are empty CSV fields and JSON `null`.

use std::io::{self, Write};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::diact::{DiactField, FlowKind, Variant};
use crate::indicators::IndexSeries;
use crate::interactions::InteractionSeries;
use crate::scalar::Scalar;
use crate::solve::DecomposedTrajectory;
use crate::transient::TransientTrace;

/// Column-labelled rows of optional values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

/// Float text with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width differs from header"
        );
        self.rows.push(row);
    }

    /// Append columns built from one series per column; all series must match the row count.
    pub fn with_columns(mut self, names: Vec<String>, values: Vec<Vec<Option<f64>>>) -> Self {
        assert_eq!(names.len(), values.len());
        for col in &values {
            assert_eq!(
                col.len(),
                self.rows.len(),
                "column length differs from row count"
            );
        }
        self.columns.extend(names);
        for (r, row) in self.rows.iter_mut().enumerate() {
            row.extend(values.iter().map(|c| c[r]));
        }
        self
    }

    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut wr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(w);
        wr.write_record(&self.columns)?;
        for row in &self.rows {
            wr.write_record(row.iter().map(|v| v.map(format_float).unwrap_or_default()))?;
        }
        wr.flush()
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<S: Serialize + ?Sized>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// List of emitted files with checksums; contains no timestamps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub model: String,
    pub model_sha256: String,
    pub settings: serde_json::Value,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(model: &str, model_text: &str, settings: serde_json::Value) -> Self {
        Manifest {
            tool: "ecoflux".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            model: model.into(),
            model_sha256: sha256_hex(model_text.as_bytes()),
            settings,
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, path: &str, contents: &[u8]) {
        self.files.push(ManifestEntry {
            path: path.into(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents),
        });
    }
}

fn f<T: Scalar>(v: T) -> Option<f64> {
    Some(v.as_f64())
}

fn time_table<T: Scalar>(grid: &[T]) -> Table {
    let mut t = Table::new(vec!["t".into()]);
    for &g in grid {
        t.push(vec![f(g)]);
    }
    t
}

/// Column label of subsystem `k` (0 = initial stocks).
fn sub_label(names: &[String], k: usize) -> &str {
    if k == 0 {
        "0"
    } else {
        &names[k - 1]
    }
}

/// `t, x_<i>_<k>` for every compartment and subsystem, `k = 0` first.
pub fn substorage_table<T: Scalar>(traj: &DecomposedTrajectory<T>, names: &[String]) -> Table {
    let n = traj.n;
    let mut cols = vec!["t".to_string()];
    for i in 0..n {
        for k in 0..=n {
            cols.push(format!("x_{}_{}", names[i], sub_label(names, k)));
        }
    }
    let mut t = Table::new(cols);
    for s in 0..traj.len() {
        let x = traj.x_sub(s);
        let mut row = vec![f(traj.grid[s])];
        row.extend(x.iter().map(|&v| f(v)));
        t.push(row);
    }
    t
}

/// Throughflows, subthroughflows and residence times.
pub fn partition_table<T: Scalar>(traj: &DecomposedTrajectory<T>, names: &[String]) -> Table {
    let n = traj.n;
    let mut cols = vec!["t".to_string()];
    for i in 0..n {
        cols.push(format!("x_{}", names[i]));
        cols.push(format!("tau_in_{}", names[i]));
        cols.push(format!("tau_out_{}", names[i]));
        cols.push(format!("r_{}", names[i]));
    }
    for (label, _) in [("T_in", 0), ("T_out", 1)] {
        for i in 0..n {
            for k in 0..=n {
                cols.push(format!("{label}_{}_{}", names[i], sub_label(names, k)));
            }
        }
    }
    let mut t = Table::new(cols);
    for (s, st) in traj.flows.iter().enumerate() {
        let mut row = vec![f(traj.grid[s])];
        for i in 0..n {
            row.extend([
                f(st.x[i]),
                f(st.tau_in[i]),
                f(st.tau_out[i]),
                st.residence[i].map(|v| v.as_f64()),
            ]);
        }
        for (m, m0) in [(&st.t_in, &st.tau0_in), (&st.t_out, &st.tau0_out)] {
            for i in 0..n {
                row.push(f(m0[i]));
                row.extend(m.row(i).iter().map(|&v| f(v)));
            }
        }
        t.push(row);
    }
    t
}

/// Diact flows `<v>_<kind>_<i>_<k>` for the given variants and kinds.
pub fn diact_table<T: Scalar>(
    field: &DiactField<T>,
    names: &[String],
    variants: &[Variant],
    kinds: &[FlowKind],
) -> Table {
    let n = field.n();
    let mut cols = vec!["t".to_string()];
    for &v in variants {
        for &kd in kinds {
            for i in 0..n {
                for k in 0..n {
                    cols.push(format!(
                        "{}_{}_{}_{}",
                        v.letter(),
                        kd.name(),
                        names[i],
                        names[k]
                    ));
                }
            }
        }
    }
    let mut t = Table::new(cols);
    for (s, smp) in field.samples.iter().enumerate() {
        let mut row = vec![f(field.grid[s])];
        for &v in variants {
            for &kd in kinds {
                row.extend(smp.flows(kd, v).iter().map(|&x| f(x)));
            }
        }
        t.push(row);
    }
    t
}

/// Tracked diact storages `x<v>_<kind>_<i>_<k>` in track order.
pub fn diact_storage_table<T: Scalar>(field: &DiactField<T>, names: &[String]) -> Table {
    let st = &field.storages;
    let mut cols = Vec::new();
    let mut values = Vec::new();
    for (idx, tr) in st.tracks.iter().enumerate() {
        for kd in FlowKind::ALL {
            cols.push(format!(
                "x{}_{}_{}_{}",
                tr.variant.letter(),
                kd.name(),
                names[tr.i],
                names[tr.k]
            ));
            values.push(st.series[idx][kd.index()].iter().map(|&v| f(v)).collect());
        }
    }
    time_table(&field.grid).with_columns(cols, values)
}

/// Matrix-valued series as columns `<prefix>_<i>_<k>`.
pub fn matrix_series_table<T: Scalar>(
    grid: &[T],
    prefix: &str,
    names: &[String],
    series: &[Option<ndarray::Array2<T>>],
) -> Table {
    let n = names.len();
    let mut cols = Vec::new();
    let mut values = Vec::new();
    for i in 0..n {
        for k in 0..n {
            cols.push(format!("{prefix}_{}_{}", names[i], names[k]));
            values.push(
                series
                    .iter()
                    .map(|m| m.as_ref().map(|m| m[[i, k]].as_f64()))
                    .collect(),
            );
        }
    }
    time_table(grid).with_columns(cols, values)
}

/// Inflow, storage, outflow, exposure and residence time of every path node.
pub fn transient_table<T: Scalar>(trace: &TransientTrace<T>, names: &[String]) -> Table {
    let mut cols = vec!["t".to_string()];
    for (m, nd) in trace.nodes.iter().enumerate() {
        let c = &names[nd.compartment];
        for q in ["inflow", "storage", "outflow", "exposure", "residence"] {
            cols.push(format!("{q}_{m}_{c}"));
        }
    }
    let mut t = Table::new(cols);
    for s in 0..trace.grid.len() {
        let mut row = vec![f(trace.grid[s])];
        for nd in &trace.nodes {
            row.extend([
                f(nd.inflow[s]),
                f(nd.storage[s]),
                f(nd.outflow[s]),
                f(nd.exposure[s]),
                nd.residence[s].map(|v| v.as_f64()),
            ]);
        }
        t.push(row);
    }
    t
}

/// Named index series sharing one grid.
pub fn series_table<T: Scalar>(grid: &[T], series: &[(String, &IndexSeries<T>)]) -> Table {
    let names = series.iter().map(|(n, _)| n.clone()).collect();
    let values = series
        .iter()
        .map(|(_, s)| {
            assert_eq!(s.len(), grid.len(), "series grid differs");
            s.values.iter().map(|v| v.map(|v| v.as_f64())).collect()
        })
        .collect();
    time_table(grid).with_columns(names, values)
}

/// Per-sample strength of each classified pair; verdict labels go to [`interaction_summary`].
pub fn interaction_table<T: Scalar>(series: &[InteractionSeries<T>], names: &[String]) -> Table {
    let Some(first) = series.first() else {
        return Table::new(vec!["t".into()]);
    };
    let mut cols = Vec::new();
    let mut values = Vec::new();
    for s in series {
        let (i, j) = s.pair;
        cols.push(format!("strength_{}_{}", names[i], names[j]));
        values.push(
            s.verdicts
                .iter()
                .map(|v| v.strength.map(|x| x.as_f64()))
                .collect(),
        );
        for v in Variant::ALL {
            cols.push(format!("sign_{}_{}_{}", v.letter(), names[i], names[j]));
            values.push(
                s.verdicts
                    .iter()
                    .map(|p| Some(f64::from(p.signs[v.index()].sign)))
                    .collect(),
            );
            cols.push(format!("mu_{}_{}_{}", v.letter(), names[i], names[j]));
            values.push(
                s.verdicts
                    .iter()
                    .map(|p| f(p.signs[v.index()].strength))
                    .collect(),
            );
        }
    }
    time_table(&first.grid).with_columns(cols, values)
}

/// Verdict runs per pair: `(pair label, verdict label, first time, last time)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictRun {
    pub pair: String,
    pub verdict: String,
    pub from: f64,
    pub to: f64,
}

/// Collapse consecutive equal verdicts into runs.
pub fn interaction_summary<T: Scalar>(
    series: &[InteractionSeries<T>],
    names: &[String],
) -> Vec<VerdictRun> {
    let mut out = Vec::new();
    for s in series {
        let pair = format!("{},{}", names[s.pair.0], names[s.pair.1]);
        let mut cur: Option<VerdictRun> = None;
        for (g, v) in s.grid.iter().zip(&s.verdicts) {
            let label = v.kind.label(names);
            match &mut cur {
                Some(run) if run.verdict == label => run.to = g.as_f64(),
                _ => {
                    if let Some(run) = cur.take() {
                        out.push(run);
                    }
                    cur = Some(VerdictRun {
                        pair: pair.clone(),
                        verdict: label,
                        from: g.as_f64(),
                        to: g.as_f64(),
                    });
                }
            }
        }
        out.extend(cur);
    }
    out
}
