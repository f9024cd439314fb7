//! Transient subflows along a user-specified subflow path.

use std::fmt;

use thiserror::Error;

use crate::model::CompartmentalModel;
use crate::ode::IntegrationSpec;
use crate::scalar::Scalar;
use crate::solve::{solve_decomposed, DecomposedTrajectory, SolveError, SolveOptions};

/// A path `k: i -> j -> l -> …` through subsystem `k` (0 = initial stocks).
///
/// The first arrow is the initiating link: the trace starts with the actual
/// subflow from `i_k` to `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPath<T> {
    pub subsystem: usize,
    /// Compartments along the path, 0-based.
    pub nodes: Vec<usize>,
    /// Start of tracking; defaults to the integration start.
    pub start: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("path syntax: {0}")]
    Syntax(String),
    #[error("unknown compartment `{0}` in path")]
    UnknownCompartment(String),
    #[error("subsystem {k} out of range 0..={n}")]
    Subsystem { k: usize, n: usize },
    #[error("path needs at least two compartments")]
    TooShort,
    #[error("no declared flow from {from} to {to}")]
    Disconnected { from: String, to: String },
}

impl<T: Scalar> FlowPath<T> {
    /// Parse `"k: i -> j -> l"`; compartments by 1-based index or name.
    pub fn parse(src: &str, model: &CompartmentalModel<T>) -> Result<Self, PathError> {
        let (k, rest) = src
            .split_once(':')
            .ok_or_else(|| PathError::Syntax(format!("expected `k: i -> j ...`, got `{src}`")))?;
        let k: usize = k.trim().parse().map_err(|_| {
            PathError::Syntax(format!("subsystem `{}` is not an integer", k.trim()))
        })?;
        let nodes = rest
            .split("->")
            .map(|tok| {
                let tok = tok.trim();
                if tok.is_empty() {
                    return Err(PathError::Syntax("empty compartment in path".into()));
                }
                if let Some(i) = model.index_of(tok) {
                    return Ok(i);
                }
                match tok.parse::<usize>() {
                    Ok(i) if (1..=model.n()).contains(&i) => Ok(i - 1),
                    _ => Err(PathError::UnknownCompartment(tok.into())),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let path = FlowPath {
            subsystem: k,
            nodes,
            start: None,
        };
        path.validate(model)?;
        Ok(path)
    }

    pub fn starting_at(mut self, t: T) -> Self {
        self.start = Some(t);
        self
    }

    /// Structural check: subsystem in range and every link a declared flow.
    pub fn validate(&self, model: &CompartmentalModel<T>) -> Result<(), PathError> {
        let n = model.n();
        if self.subsystem > n {
            return Err(PathError::Subsystem {
                k: self.subsystem,
                n,
            });
        }
        if self.nodes.len() < 2 {
            return Err(PathError::TooShort);
        }
        for w in self.nodes.windows(2) {
            if w.iter().any(|&i| i >= n) {
                return Err(PathError::UnknownCompartment(format!(
                    "#{}",
                    w[0].max(w[1]) + 1
                )));
            }
            if !model.has_flow(w[1], w[0]) {
                return Err(PathError::Disconnected {
                    from: model.names()[w[0]].clone(),
                    to: model.names()[w[1]].clone(),
                });
            }
        }
        Ok(())
    }

    /// Label such as `1: 1 -> 2 -> 1`.
    pub fn label(&self, names: &[String]) -> String {
        let nodes: Vec<&str> = self.nodes.iter().map(|&i| names[i].as_str()).collect();
        format!("{}: {}", self.subsystem, nodes.join(" -> "))
    }
}

impl<T: Scalar> fmt::Display for FlowPath<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes: Vec<String> = self.nodes.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{}: {}", self.subsystem, nodes.join(" -> "))
    }
}

/// Trace of one node after the initiating link.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrace<T> {
    pub compartment: usize,
    pub inflow: Vec<T>,
    pub storage: Vec<T>,
    /// Flow on to the next node; for the last node, its total outflow.
    pub outflow: Vec<T>,
    /// `∫ x^w ds` from the path start.
    pub exposure: Vec<T>,
    /// Residence time of the segment, equal to the compartment's `1/out`.
    pub residence: Vec<Option<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientTrace<T> {
    pub path: FlowPath<T>,
    pub grid: Vec<T>,
    pub nodes: Vec<NodeTrace<T>>,
}

/// Assemble the trace of path `p` (index into the solve's paths).
pub fn trace_from_trajectory<T: Scalar>(
    traj: &DecomposedTrajectory<T>,
    p: usize,
) -> TransientTrace<T> {
    let path = traj.layout.paths[p].0.clone();
    let len = path.nodes.len() - 1;
    let samples = traj.grid.len();
    let k = path.subsystem;
    let mut nodes: Vec<NodeTrace<T>> = (0..len)
        .map(|m| NodeTrace {
            compartment: path.nodes[m + 1],
            inflow: Vec::with_capacity(samples),
            storage: Vec::with_capacity(samples),
            outflow: Vec::with_capacity(samples),
            exposure: Vec::with_capacity(samples),
            residence: Vec::with_capacity(samples),
        })
        .collect();
    for s in 0..samples {
        let (xw, ew) = traj.path_states(s, p);
        let ints = &traj.intensities[s];
        let xs = traj.x_sub(s);
        let first = path.nodes[0];
        for m in 0..len {
            let node = path.nodes[m + 1];
            let inflow = if m == 0 {
                if xw.is_some() {
                    ints.q[[node, first]] * xs[[first, k]]
                } else {
                    T::zero()
                }
            } else {
                ints.q[[node, path.nodes[m]]] * xw.map_or(T::zero(), |v| v[m - 1])
            };
            let x = xw.map_or(T::zero(), |v| v[m]);
            let outflow = if m + 1 < len {
                ints.q[[path.nodes[m + 2], node]] * x
            } else {
                ints.out[node] * x
            };
            let nt = &mut nodes[m];
            nt.inflow.push(inflow);
            nt.storage.push(x);
            nt.outflow.push(outflow);
            nt.exposure.push(ew.map_or(T::zero(), |v| v[m]));
            nt.residence.push(traj.flows[s].residence[node]);
        }
    }
    TransientTrace {
        path,
        grid: traj.grid.clone(),
        nodes,
    }
}

/// Solve the decomposed system together with the chain states of `path`.
pub fn transient_chain<T: Scalar>(
    model: &CompartmentalModel<T>,
    path: &FlowPath<T>,
    spec: &IntegrationSpec<T>,
) -> Result<TransientTrace<T>, SolveError> {
    path.validate(model).map_err(SolveError::Path)?;
    let opts = SolveOptions {
        paths: vec![path.clone()],
        ..SolveOptions::default()
    };
    let traj = solve_decomposed(model, spec, &opts)?;
    Ok(trace_from_trajectory(&traj, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hippe() -> CompartmentalModel<f64> {
        crate::dsl::parse_model(include_str!("../models/hippe.model")).unwrap()
    }

    #[test]
    fn parse_paths() {
        let m = hippe();
        let p = FlowPath::<f64>::parse("1: 1 -> 2 -> 1", &m).unwrap();
        assert_eq!(p.subsystem, 1);
        assert_eq!(p.nodes, vec![0, 1, 0]);
        assert_eq!(p.to_string(), "1: 1 -> 2 -> 1");
        assert!(matches!(
            FlowPath::<f64>::parse("1: 1", &m),
            Err(PathError::TooShort)
        ));
        assert!(matches!(
            FlowPath::<f64>::parse("3: 1 -> 2", &m),
            Err(PathError::Subsystem { .. })
        ));
        assert!(matches!(
            FlowPath::<f64>::parse("1 1 -> 2", &m),
            Err(PathError::Syntax(_))
        ));
        assert!(matches!(
            FlowPath::<f64>::parse("1: 1 -> 1", &m),
            Err(PathError::Disconnected { .. })
        ));
    }
}
