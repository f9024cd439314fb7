//! Compartmental model representation, validation and state evaluation.

use std::fmt;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::dsl::expr::{CompiledExpr, Expr, ExprError, Symbols};
use crate::dsl::parser::{parse_expr, ParseError};
use crate::ode::IntegrationSpec;
use crate::scalar::Scalar;

/// A named constant referenced by model expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub expr: Expr,
    pub value: T,
}

/// Optional run defaults carried by a model file.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimulateDefaults {
    pub t0: Option<f64>,
    pub t1: Option<f64>,
    pub samples: Option<usize>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
}

impl SimulateDefaults {
    pub const T0: f64 = 0.0;
    pub const T1: f64 = 10.0;
    pub const SAMPLES: usize = 1001;
    pub const RTOL: f64 = 1e-8;
    pub const ATOL: f64 = 1e-10;

    pub fn t0(&self) -> f64 {
        self.t0.unwrap_or(Self::T0)
    }
    pub fn t1(&self) -> f64 {
        self.t1.unwrap_or(Self::T1)
    }
    pub fn samples(&self) -> usize {
        self.samples.unwrap_or(Self::SAMPLES)
    }
    pub fn rtol(&self) -> f64 {
        self.rtol.unwrap_or(Self::RTOL)
    }
    pub fn atol(&self) -> f64 {
        self.atol.unwrap_or(Self::ATOL)
    }

    /// Integration spec on the uniform default grid.
    pub fn spec<T: Scalar>(&self) -> IntegrationSpec<T> {
        IntegrationSpec::uniform(T::lit(self.t0()), T::lit(self.t1()), self.samples())
            .tolerances(T::lit(self.rtol()), T::lit(self.atol()))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Compiled {
    // None marks a structurally absent term (literal zero).
    q: Vec<Option<CompiledExpr>>,
    w: Vec<Option<CompiledExpr>>,
    z: Vec<Option<CompiledExpr>>,
}

/// Nonlinear compartmental model in intensity form: `f_ij = q_ij(t,x)·x_j`,
/// `y_i = w_i(t,x)·x_i`, inputs `z_i(t,x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompartmentalModel<T> {
    n: usize,
    names: Vec<String>,
    self_flows: bool,
    params: Vec<Param<T>>,
    intensity: Vec<Expr>,
    output_intensity: Vec<Expr>,
    input: Vec<Expr>,
    x0: Vec<T>,
    simulate: SimulateDefaults,
    compiled: Compiled,
    param_values: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Location {
    Model,
    Param(usize),
    Flow { i: usize, j: usize },
    Output(usize),
    Input(usize),
    Initial(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Model => f.write_str("model"),
            Location::Param(p) => write!(f, "param #{}", p + 1),
            Location::Flow { i, j } => write!(f, "flow {}<-{}", i + 1, j + 1),
            Location::Output(i) => write!(f, "output {}", i + 1),
            Location::Input(i) => write!(f, "input {}", i + 1),
            Location::Initial(i) => write!(f, "initial {}", i + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalErrorKind {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("non-finite value")]
    NonFinite,
}

/// Failure evaluating one model expression at a given time.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{location} at t = {t}: {kind}")]
pub struct EvalError {
    pub location: Location,
    pub t: f64,
    pub kind: EvalErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("model has no compartments")]
    Empty,
    #[error("{what} index {index} out of range 1..={n}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        n: usize,
    },
    #[error("{0} specified more than once")]
    Duplicate(String),
    #[error("expected {expected} values, got {got} for {what}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid name `{0}`")]
    InvalidName(String),
    #[error("parameter `{name}`: {source}")]
    Param { name: String, source: ExprError },
    #[error("model failed validation:\n{}", render_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

fn render_diagnostics(d: &[Diagnostic]) -> String {
    d.iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Pointwise flows, inputs, outputs and throughflows of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEval<T> {
    pub t: T,
    pub x: Array1<T>,
    pub f: Array2<T>,
    pub z: Array1<T>,
    pub y: Array1<T>,
    pub tau_in: Array1<T>,
    pub tau_out: Array1<T>,
}

/// Intensities at a point: `q` (n×n), `w`, `z`, plus the total outward
/// intensity `out_i = w_i + Σ_j q_ji`, so that `τ̂_i = out_i·x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Intensities<T> {
    pub q: Array2<T>,
    pub w: Array1<T>,
    pub z: Array1<T>,
    pub out: Array1<T>,
}

impl<T: Scalar> Intensities<T> {
    pub fn zeros(n: usize) -> Self {
        Intensities {
            q: Array2::zeros((n, n)),
            w: Array1::zeros(n),
            z: Array1::zeros(n),
            out: Array1::zeros(n),
        }
    }
}

pub(crate) fn is_valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_')
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
}

impl<T: Scalar> CompartmentalModel<T> {
    pub fn builder(n: usize) -> ModelBuilder<T> {
        ModelBuilder::new(n)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        names: Vec<String>,
        self_flows: bool,
        params: Vec<(String, Expr)>,
        intensity: Vec<Expr>,
        output_intensity: Vec<Expr>,
        input: Vec<Expr>,
        x0: Vec<T>,
        simulate: SimulateDefaults,
    ) -> Result<Self, ModelError> {
        let n = names.len();
        if n == 0 {
            return Err(ModelError::Empty);
        }
        for (what, expected, got) in [
            ("intensity", n * n, intensity.len()),
            ("output intensity", n, output_intensity.len()),
            ("input", n, input.len()),
            ("initial stock", n, x0.len()),
        ] {
            if expected != got {
                return Err(ModelError::Length {
                    what,
                    expected,
                    got,
                });
            }
        }
        for (k, name) in names.iter().enumerate() {
            if !is_valid_name(name) {
                return Err(ModelError::InvalidName(name.clone()));
            }
            if names[..k].contains(name) {
                return Err(ModelError::Duplicate(format!("compartment name `{name}`")));
            }
        }

        let mut resolved: Vec<Param<T>> = Vec::with_capacity(params.len());
        for (name, expr) in params {
            if !is_identifier(&name)
                || name == "t"
                || crate::dsl::expr::state_index(&name).is_some()
            {
                return Err(ModelError::InvalidName(name));
            }
            if resolved.iter().any(|p| p.name == name) {
                return Err(ModelError::Duplicate(format!("parameter `{name}`")));
            }
            let value = expr
                .eval_with(&|id: &str| resolved.iter().find(|p| p.name == id).map(|p| p.value))
                .map_err(|source| ModelError::Param {
                    name: name.clone(),
                    source,
                })?;
            resolved.push(Param { name, expr, value });
        }

        let symbols = Symbols::new(n, resolved.iter().map(|p| p.name.clone()).collect());
        let compile = |e: &Expr| (!e.is_zero_literal()).then(|| e.compile(&symbols));
        let compiled = Compiled {
            q: intensity.iter().map(compile).collect(),
            w: output_intensity.iter().map(compile).collect(),
            z: input.iter().map(compile).collect(),
        };
        let param_values = resolved.iter().map(|p| p.value).collect();
        Ok(CompartmentalModel {
            n,
            names,
            self_flows,
            params: resolved,
            intensity,
            output_intensity,
            input,
            x0,
            simulate,
            compiled,
            param_values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn names(&self) -> &[String] {
        &self.names
    }
    pub fn self_flows(&self) -> bool {
        self.self_flows
    }
    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }
    pub fn x0(&self) -> &[T] {
        &self.x0
    }
    pub fn simulate_defaults(&self) -> &SimulateDefaults {
        &self.simulate
    }

    /// Compartment index (0-based) by name.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Intensity expression `q_ij` (flow from `j` to `i` per unit of `x_j`), 0-based.
    pub fn intensity(&self, i: usize, j: usize) -> &Expr {
        &self.intensity[i * self.n + j]
    }
    pub fn output_intensity(&self, i: usize) -> &Expr {
        &self.output_intensity[i]
    }
    pub fn input(&self, i: usize) -> &Expr {
        &self.input[i]
    }

    /// True if a flow from `j` to `i` is declared (not a literal zero).
    pub fn has_flow(&self, i: usize, j: usize) -> bool {
        self.compiled.q[i * self.n + j].is_some()
    }

    pub fn with_x0(mut self, x0: Vec<T>) -> Result<Self, ModelError> {
        if x0.len() != self.n {
            return Err(ModelError::Length {
                what: "initial stock",
                expected: self.n,
                got: x0.len(),
            });
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn with_simulate_defaults(mut self, s: SimulateDefaults) -> Self {
        self.simulate = s;
        self
    }

    fn eval_one(
        &self,
        e: &Option<CompiledExpr>,
        loc: Location,
        t: T,
        x: &[T],
    ) -> Result<T, EvalError> {
        let Some(e) = e else { return Ok(T::zero()) };
        let v = e.eval(t, x, &self.param_values).map_err(|err| EvalError {
            location: loc,
            t: t.as_f64(),
            kind: err.into(),
        })?;
        if !v.is_finite() {
            return Err(EvalError {
                location: loc,
                t: t.as_f64(),
                kind: EvalErrorKind::NonFinite,
            });
        }
        Ok(v)
    }

    /// Input vector `z(t, x)` only.
    pub fn eval_inputs_into(&self, t: T, x: &[T], z: &mut Array1<T>) -> Result<(), EvalError> {
        for i in 0..self.n {
            z[i] = self.eval_one(&self.compiled.z[i], Location::Input(i), t, x)?;
        }
        Ok(())
    }

    /// Evaluate all intensities at `(t, x)` into preallocated buffers.
    pub fn eval_intensities_into(
        &self,
        t: T,
        x: &[T],
        out: &mut Intensities<T>,
    ) -> Result<(), EvalError> {
        let n = self.n;
        out.out.fill(T::zero());
        for i in 0..n {
            for j in 0..n {
                let q =
                    self.eval_one(&self.compiled.q[i * n + j], Location::Flow { i, j }, t, x)?;
                out.q[[i, j]] = q;
                out.out[j] += q;
            }
        }
        for i in 0..n {
            let w = self.eval_one(&self.compiled.w[i], Location::Output(i), t, x)?;
            out.w[i] = w;
            out.out[i] += w;
        }
        self.eval_inputs_into(t, x, &mut out.z)
    }

    pub fn eval_intensities(&self, t: T, x: &[T]) -> Result<Intensities<T>, EvalError> {
        let mut ints = Intensities::zeros(self.n);
        self.eval_intensities_into(t, x, &mut ints)?;
        Ok(ints)
    }
}

/// Diagnostics for every violated model invariant; empty means valid.
pub fn validate_model<T: Scalar>(model: &CompartmentalModel<T>) -> Vec<Diagnostic> {
    let n = model.n;
    let mut diags = Vec::new();
    let mut error = |location, message: String| {
        diags.push(Diagnostic {
            severity: Severity::Error,
            location,
            message,
        })
    };

    for (i, &x) in model.x0.iter().enumerate() {
        if !x.is_finite() {
            error(Location::Initial(i), "non-finite initial stock".into());
        } else if x < T::zero() {
            error(Location::Initial(i), format!("negative initial stock {x}"));
        }
    }

    let symbols = Symbols::new(n, model.params.iter().map(|p| p.name.clone()).collect());
    let mut exprs: Vec<(Location, &Expr)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            exprs.push((Location::Flow { i, j }, model.intensity(i, j)));
        }
    }
    for i in 0..n {
        exprs.push((Location::Output(i), &model.output_intensity[i]));
        exprs.push((Location::Input(i), &model.input[i]));
    }
    let mut closed = true;
    for (loc, e) in &exprs {
        for id in e.identifiers() {
            if symbols.resolve(id).is_none() {
                closed = false;
                error(*loc, format!("unknown identifier `{id}`"));
            }
        }
    }
    if !model.self_flows {
        for i in 0..n {
            if model.has_flow(i, i) {
                error(
                    Location::Flow { i, j: i },
                    "self-flow declared but the model does not enable self_flows".into(),
                );
            }
        }
    }

    let x0_ok = model.x0.iter().all(|x| x.is_finite());
    if closed && x0_ok {
        let t0 = T::lit(model.simulate.t0());
        let x0 = &model.x0;
        let check =
            |loc: Location, e: &Option<CompiledExpr>, what: &str, diags: &mut Vec<Diagnostic>| {
                match model.eval_one(e, loc, t0, x0) {
                    Ok(v) if v < T::zero() => diags.push(Diagnostic {
                        severity: Severity::Error,
                        location: loc,
                        message: format!("{what} is negative ({v}) at the initial state"),
                    }),
                    Ok(_) => {}
                    Err(err) => diags.push(Diagnostic {
                        severity: Severity::Error,
                        location: loc,
                        message: format!(
                            "{what} cannot be evaluated at the initial state: {}",
                            err.kind
                        ),
                    }),
                }
            };
        for i in 0..n {
            for j in 0..n {
                check(
                    Location::Flow { i, j },
                    &model.compiled.q[i * n + j],
                    "intensity",
                    &mut diags,
                );
            }
        }
        for i in 0..n {
            check(
                Location::Output(i),
                &model.compiled.w[i],
                "output intensity",
                &mut diags,
            );
            check(
                Location::Input(i),
                &model.compiled.z[i],
                "input",
                &mut diags,
            );
        }
    }
    diags
}

/// Flows, inputs, outputs and throughflows at `(t, x)`.
pub fn eval_state<T: Scalar>(
    model: &CompartmentalModel<T>,
    t: T,
    x: &[T],
) -> Result<StateEval<T>, EvalError> {
    let n = model.n;
    let ints = model.eval_intensities(t, x)?;
    let mut f = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            f[[i, j]] = ints.q[[i, j]] * x[j];
        }
    }
    let y = Array1::from_shape_fn(n, |i| ints.w[i] * x[i]);
    let tau_in = Array1::from_shape_fn(n, |i| ints.z[i] + f.row(i).sum());
    let tau_out = Array1::from_shape_fn(n, |i| y[i] + f.column(i).sum());
    Ok(StateEval {
        t,
        x: Array1::from(x.to_vec()),
        f,
        z: ints.z,
        y,
        tau_in,
        tau_out,
    })
}

/// `ẋ_i = τ̌_i − τ̂_i`.
pub fn net_balance<T: Scalar>(s: &StateEval<T>) -> Array1<T> {
    &s.tau_in - &s.tau_out
}

/// Programmatic model construction; expressions are given as source text.
#[derive(Debug, Clone)]
pub struct ModelBuilder<T> {
    n: usize,
    names: Option<Vec<String>>,
    self_flows: bool,
    params: Vec<(String, String)>,
    flows: Vec<(usize, usize, String)>,
    outputs: Vec<(usize, String)>,
    inputs: Vec<(usize, String)>,
    x0: Vec<T>,
    simulate: SimulateDefaults,
}

impl<T: Scalar> ModelBuilder<T> {
    pub fn new(n: usize) -> Self {
        ModelBuilder {
            n,
            names: None,
            self_flows: false,
            params: Vec::new(),
            flows: Vec::new(),
            outputs: Vec::new(),
            inputs: Vec::new(),
            x0: vec![T::zero(); n],
            simulate: SimulateDefaults::default(),
        }
    }

    pub fn names<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        self.names = Some(names.into_iter().map(Into::into).collect());
        self
    }

    pub fn self_flows(mut self, on: bool) -> Self {
        self.self_flows = on;
        self
    }

    pub fn param(mut self, name: &str, value: &str) -> Self {
        self.params.push((name.into(), value.into()));
        self
    }

    /// Intensity of the flow from `j` to `i` (1-based indices).
    pub fn flow(mut self, i: usize, j: usize, expr: &str) -> Self {
        self.flows.push((i, j, expr.into()));
        self
    }

    pub fn output(mut self, i: usize, expr: &str) -> Self {
        self.outputs.push((i, expr.into()));
        self
    }

    pub fn input(mut self, i: usize, expr: &str) -> Self {
        self.inputs.push((i, expr.into()));
        self
    }

    pub fn initial(mut self, x0: Vec<T>) -> Self {
        self.x0 = x0;
        self
    }

    pub fn simulate(mut self, s: SimulateDefaults) -> Self {
        self.simulate = s;
        self
    }

    /// Build and validate.
    pub fn build(self) -> Result<CompartmentalModel<T>, ModelError> {
        let model = self.build_unchecked()?;
        let errors: Vec<_> = validate_model(&model)
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .collect();
        if errors.is_empty() {
            Ok(model)
        } else {
            Err(ModelError::Invalid(errors))
        }
    }

    /// Build without running [`validate_model`].
    pub fn build_unchecked(self) -> Result<CompartmentalModel<T>, ModelError> {
        let n = self.n;
        let names = self
            .names
            .unwrap_or_else(|| (1..=n).map(|i| i.to_string()).collect());
        let check = |what, i: usize| {
            if (1..=n).contains(&i) {
                Ok(i - 1)
            } else {
                Err(ModelError::IndexOutOfRange { what, index: i, n })
            }
        };
        let zero = Expr::Num(0.0);
        let mut q = vec![zero.clone(); n * n];
        let mut set_q = vec![false; n * n];
        for (i, j, src) in &self.flows {
            let (i0, j0) = (check("flow", *i)?, check("flow", *j)?);
            if std::mem::replace(&mut set_q[i0 * n + j0], true) {
                return Err(ModelError::Duplicate(format!("flow {i}<-{j}")));
            }
            q[i0 * n + j0] = parse_expr(src)?;
        }
        let fill =
            |what: &'static str, entries: &[(usize, String)]| -> Result<Vec<Expr>, ModelError> {
                let mut v = vec![zero.clone(); n];
                let mut set = vec![false; n];
                for (i, src) in entries {
                    let i0 = check(what, *i)?;
                    if std::mem::replace(&mut set[i0], true) {
                        return Err(ModelError::Duplicate(format!("{what} {i}")));
                    }
                    v[i0] = parse_expr(src)?;
                }
                Ok(v)
            };
        let w = fill("output", &self.outputs)?;
        let z = fill("input", &self.inputs)?;
        let params = self
            .params
            .iter()
            .map(|(name, src)| Ok((name.clone(), parse_expr(src)?)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        CompartmentalModel::from_parts(
            names,
            self.self_flows,
            params,
            q,
            w,
            z,
            self.x0,
            self.simulate,
        )
    }
}
