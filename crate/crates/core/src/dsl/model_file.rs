//! Line-oriented model file reader and writer.

use std::fmt::Write as _;

use thiserror::Error;

use super::expr::Expr;
use super::parser::{parse_expr_at, ParseError};
use crate::model::{
    is_valid_name, validate_model, CompartmentalModel, Diagnostic, ModelError, Severity,
    SimulateDefaults,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelFileError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Expr(#[from] ParseError),
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("line {line}: index {index} out of range 1..={n}")]
    IndexOutOfRange { line: usize, index: usize, n: usize },
    #[error("line {line}: duplicate entry `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("no initial stock given for compartment `{0}`")]
    MissingInitial(String),
    #[error("line {line}: {source}")]
    Value {
        line: usize,
        source: super::expr::ExprError,
    },
    #[error("{0}")]
    Model(#[from] ModelError),
}

impl ModelFileError {
    fn syntax(line: usize, column: usize, message: impl Into<String>) -> Self {
        ModelFileError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Model,
    Params,
    Inputs,
    Flows,
    Outputs,
    Initial,
    Simulate,
}

impl Section {
    fn from_name(s: &str) -> Option<Section> {
        Some(match s {
            "model" => Section::Model,
            "params" => Section::Params,
            "inputs" => Section::Inputs,
            "flows" => Section::Flows,
            "outputs" => Section::Outputs,
            "initial" => Section::Initial,
            "simulate" => Section::Simulate,
            _ => return None,
        })
    }
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    key_col: usize,
    value: &'a str,
    value_col: usize,
}

fn char_col(line: &str, byte: usize) -> usize {
    line[..byte].chars().count() + 1
}

/// Parse without the final validation step.
pub fn parse_model_unchecked<T: Scalar>(
    src: &str,
) -> Result<CompartmentalModel<T>, ModelFileError> {
    let mut sections: Vec<(Section, Vec<Entry>)> = Vec::new();
    let mut current: Option<usize> = None;
    for (ln, raw) in src.lines().enumerate() {
        let line_no = ln + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let lead = content.len() - content.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| {
                    ModelFileError::syntax(line_no, lead + 1, "unterminated section header")
                })?
                .trim();
            let section = Section::from_name(name).ok_or_else(|| {
                ModelFileError::syntax(line_no, lead + 1, format!("unknown section [{name}]"))
            })?;
            if sections.iter().any(|(s, _)| *s == section) {
                return Err(ModelFileError::Duplicate {
                    line: line_no,
                    key: format!("[{name}]"),
                });
            }
            sections.push((section, Vec::new()));
            current = Some(sections.len() - 1);
            continue;
        }
        let Some(idx) = current else {
            return Err(ModelFileError::syntax(
                line_no,
                lead + 1,
                "entry outside of any section",
            ));
        };
        let eq = content
            .find('=')
            .ok_or_else(|| ModelFileError::syntax(line_no, lead + 1, "expected `key = value`"))?;
        let key = content[..eq].trim();
        if key.is_empty() {
            return Err(ModelFileError::syntax(line_no, lead + 1, "empty key"));
        }
        let after = &content[eq + 1..];
        let value_lead = after.len() - after.trim_start().len();
        let value = after.trim();
        let value_col = char_col(content, eq + 1 + value_lead);
        if value.is_empty() {
            return Err(ModelFileError::syntax(line_no, value_col, "empty value"));
        }
        sections[idx].1.push(Entry {
            line: line_no,
            key,
            key_col: lead + 1,
            value,
            value_col,
        });
    }

    let take = |s: Section| {
        sections
            .iter()
            .find(|(x, _)| *x == s)
            .map(|(_, e)| e.as_slice())
    };
    let model_sec = take(Section::Model).ok_or(ModelFileError::MissingSection("model"))?;
    let initial_sec = take(Section::Initial).ok_or(ModelFileError::MissingSection("initial"))?;

    let mut n: Option<(usize, usize)> = None;
    let mut names: Option<(usize, Vec<String>)> = None;
    let mut self_flows = false;
    let mut seen: Vec<&str> = Vec::new();
    for e in model_sec {
        if seen.contains(&e.key) {
            return Err(ModelFileError::Duplicate {
                line: e.line,
                key: e.key.into(),
            });
        }
        seen.push(e.key);
        match e.key {
            "n" => {
                let v: usize = e.value.parse().map_err(|_| {
                    ModelFileError::syntax(e.line, e.value_col, "n must be a positive integer")
                })?;
                if v == 0 {
                    return Err(ModelFileError::syntax(
                        e.line,
                        e.value_col,
                        "n must be a positive integer",
                    ));
                }
                n = Some((v, e.line));
            }
            "names" => {
                let list: Vec<String> = e.value.split(',').map(|s| s.trim().to_string()).collect();
                if let Some(bad) = list.iter().find(|s| !is_valid_name(s)) {
                    return Err(ModelFileError::syntax(
                        e.line,
                        e.value_col,
                        format!("invalid compartment name `{bad}`"),
                    ));
                }
                names = Some((e.line, list));
            }
            "self_flows" => {
                self_flows = match e.value {
                    "true" => true,
                    "false" => false,
                    _ => {
                        return Err(ModelFileError::syntax(
                            e.line,
                            e.value_col,
                            "self_flows must be true or false",
                        ))
                    }
                }
            }
            other => {
                return Err(ModelFileError::syntax(
                    e.line,
                    e.key_col,
                    format!("unknown [model] key `{other}`"),
                ));
            }
        }
    }
    let names = match (n, names) {
        (Some((n, _)), Some((line, names))) => {
            if names.len() != n {
                return Err(ModelFileError::syntax(
                    line,
                    1,
                    format!("expected {n} names, got {}", names.len()),
                ));
            }
            names
        }
        (Some((n, _)), None) => (1..=n).map(|i| i.to_string()).collect(),
        (None, Some((_, names))) => names,
        (None, None) => return Err(ModelFileError::syntax(1, 1, "[model] must give n or names")),
    };
    let n = names.len();

    let index = |e: &Entry, key: &str, col: usize| -> Result<usize, ModelFileError> {
        let key = key.trim();
        if !key.is_empty() && key.bytes().all(|b| b.is_ascii_digit()) {
            let k: usize = key
                .parse()
                .map_err(|_| ModelFileError::syntax(e.line, col, "index too large"))?;
            if k == 0 || k > n {
                return Err(ModelFileError::IndexOutOfRange {
                    line: e.line,
                    index: k,
                    n,
                });
            }
            return Ok(k - 1);
        }
        names.iter().position(|nm| nm == key).ok_or_else(|| {
            ModelFileError::syntax(e.line, col, format!("unknown compartment `{key}`"))
        })
    };
    let expr =
        |e: &Entry| parse_expr_at(e.value, e.line, e.value_col).map_err(ModelFileError::from);

    let vector = |section: Option<&[Entry]>| -> Result<(Vec<Expr>, Vec<bool>), ModelFileError> {
        let mut v = vec![Expr::Num(0.0); n];
        let mut set = vec![false; n];
        for e in section.unwrap_or(&[]) {
            let i = index(e, e.key, e.key_col)?;
            if std::mem::replace(&mut set[i], true) {
                return Err(ModelFileError::Duplicate {
                    line: e.line,
                    key: e.key.into(),
                });
            }
            v[i] = expr(e)?;
        }
        Ok((v, set))
    };

    let mut params = Vec::new();
    for e in take(Section::Params).unwrap_or(&[]) {
        params.push((e.key.to_string(), expr(e)?));
    }
    let (input, _) = vector(take(Section::Inputs))?;
    let (output, _) = vector(take(Section::Outputs))?;
    let (x0_exprs, x0_set) = vector(Some(initial_sec))?;
    if let Some(missing) = x0_set.iter().position(|s| !s) {
        return Err(ModelFileError::MissingInitial(names[missing].clone()));
    }

    let mut q = vec![Expr::Num(0.0); n * n];
    let mut q_set = vec![false; n * n];
    for e in take(Section::Flows).unwrap_or(&[]) {
        let (lhs, rhs) = e.key.split_once("<-").ok_or_else(|| {
            ModelFileError::syntax(e.line, e.key_col, "flow key must look like `i<-j`")
        })?;
        let i = index(e, lhs, e.key_col)?;
        let j = index(e, rhs, e.key_col + lhs.chars().count() + 2)?;
        if std::mem::replace(&mut q_set[i * n + j], true) {
            return Err(ModelFileError::Duplicate {
                line: e.line,
                key: e.key.into(),
            });
        }
        q[i * n + j] = expr(e)?;
    }

    let mut sim = SimulateDefaults::default();
    let mut sim_seen: Vec<&str> = Vec::new();
    for e in take(Section::Simulate).unwrap_or(&[]) {
        if sim_seen.contains(&e.key) {
            return Err(ModelFileError::Duplicate {
                line: e.line,
                key: e.key.into(),
            });
        }
        sim_seen.push(e.key);
        let float = || -> Result<f64, ModelFileError> {
            e.value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    ModelFileError::syntax(
                        e.line,
                        e.value_col,
                        format!("`{}` is not a number", e.value),
                    )
                })
        };
        match e.key {
            "t0" => sim.t0 = Some(float()?),
            "t1" => sim.t1 = Some(float()?),
            "rtol" => sim.rtol = Some(float()?),
            "atol" => sim.atol = Some(float()?),
            "samples" => {
                sim.samples = Some(e.value.parse().map_err(|_| {
                    ModelFileError::syntax(
                        e.line,
                        e.value_col,
                        "samples must be a nonnegative integer",
                    )
                })?)
            }
            other => {
                return Err(ModelFileError::syntax(
                    e.line,
                    e.key_col,
                    format!("unknown [simulate] key `{other}`"),
                ));
            }
        }
    }

    let mut x0_lines = vec![0usize; n];
    for en in initial_sec {
        if let Ok(k) = index(en, en.key, en.key_col) {
            x0_lines[k] = en.line;
        }
    }
    let model = CompartmentalModel::from_parts(
        names.clone(),
        self_flows,
        params,
        q,
        output,
        input,
        vec![T::zero(); n],
        sim,
    )?;
    let mut x0 = Vec::with_capacity(n);
    for (k, e) in x0_exprs.iter().enumerate() {
        let line = x0_lines[k];
        let v = e
            .eval_with(&|id: &str| {
                model
                    .params()
                    .iter()
                    .find(|p| p.name == id)
                    .map(|p| p.value)
            })
            .map_err(|source| ModelFileError::Value { line, source })?;
        x0.push(v);
    }
    Ok(model.with_x0(x0)?)
}

/// Parse a model file and validate it; validation errors become a [`ModelError::Invalid`].
pub fn parse_model<T: Scalar>(src: &str) -> Result<CompartmentalModel<T>, ModelFileError> {
    let model = parse_model_unchecked(src)?;
    let errors: Vec<Diagnostic> = validate_model(&model)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    if errors.is_empty() {
        Ok(model)
    } else {
        Err(ModelError::Invalid(errors).into())
    }
}

/// Write a model in the file format accepted by [`parse_model`].
pub fn serialize<T: Scalar>(model: &CompartmentalModel<T>) -> String {
    let n = model.n();
    let mut s = String::new();
    let _ = writeln!(s, "[model]");
    let _ = writeln!(s, "n = {n}");
    let _ = writeln!(s, "names = {}", model.names().join(", "));
    if model.self_flows() {
        let _ = writeln!(s, "self_flows = true");
    }
    if !model.params().is_empty() {
        let _ = writeln!(s, "\n[params]");
        for p in model.params() {
            let _ = writeln!(s, "{} = {}", p.name, p.expr);
        }
    }
    let _ = writeln!(s, "\n[inputs]");
    for i in 0..n {
        if !model.input(i).is_zero_literal() {
            let _ = writeln!(s, "{} = {}", i + 1, model.input(i));
        }
    }
    let _ = writeln!(s, "\n[flows]");
    for i in 0..n {
        for j in 0..n {
            if !model.intensity(i, j).is_zero_literal() {
                let _ = writeln!(s, "{}<-{} = {}", i + 1, j + 1, model.intensity(i, j));
            }
        }
    }
    let _ = writeln!(s, "\n[outputs]");
    for i in 0..n {
        if !model.output_intensity(i).is_zero_literal() {
            let _ = writeln!(s, "{} = {}", i + 1, model.output_intensity(i));
        }
    }
    let _ = writeln!(s, "\n[initial]");
    for (i, x) in model.x0().iter().enumerate() {
        let _ = writeln!(s, "{} = {:?}", i + 1, x);
    }
    let sim = model.simulate_defaults();
    if *sim != SimulateDefaults::default() {
        let _ = writeln!(s, "\n[simulate]");
        let fields = [
            ("t0", sim.t0),
            ("t1", sim.t1),
            ("rtol", sim.rtol),
            ("atol", sim.atol),
        ];
        for (k, v) in fields {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} = {v:?}");
            }
        }
        if let Some(v) = sim.samples {
            let _ = writeln!(s, "samples = {v}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_compartment_empty_flows() {
        let src = "[model]\nn = 1\n[flows]\n[inputs]\n1 = 1\n[outputs]\n1 = 1\n[initial]\n1 = 0\n";
        let m: CompartmentalModel<f64> = parse_model(src).unwrap();
        assert_eq!(m.n(), 1);
        assert!(!m.has_flow(0, 0));
    }

    #[test]
    fn names_and_index_keys() {
        let src =
            "[model]\nnames = a, b\n[flows]\nb<-a = 1\n1<-2 = 0.5\n[initial]\na = 1\n2 = 2 * 3\n";
        let m: CompartmentalModel<f64> = parse_model(src).unwrap();
        assert!(m.has_flow(1, 0) && m.has_flow(0, 1));
        assert_eq!(m.x0(), &[1.0, 6.0]);
    }

    #[test]
    fn structural_errors() {
        let base = "[model]\nn = 2\n[initial]\n1 = 1\n2 = 1\n";
        assert!(matches!(
            parse_model::<f64>(&format!("{base}[flows]\n3<-1 = 1\n")),
            Err(ModelFileError::IndexOutOfRange { index: 3, .. })
        ));
        assert!(matches!(
            parse_model::<f64>(&format!("{base}[flows]\n2<-1 = 1\n2<-1 = 2\n")),
            Err(ModelFileError::Duplicate { line: 8, .. })
        ));
        assert!(matches!(
            parse_model::<f64>("[initial]\n1 = 1\n"),
            Err(ModelFileError::MissingSection("model"))
        ));
        assert!(matches!(
            parse_model::<f64>("[model]\nn = 2\n[initial]\n1 = 1\n"),
            Err(ModelFileError::MissingInitial(_))
        ));
        assert!(matches!(
            parse_model::<f64>(&format!("{base}[flows]\n2<-1 = k9 * x1\n")),
            Err(ModelFileError::Model(ModelError::Invalid(_)))
        ));
    }

    #[test]
    fn expression_error_position_is_file_relative() {
        let src = "[model]\nn = 1\n[inputs]\n1 =  2 + * 3\n[initial]\n1 = 0\n";
        match parse_model::<f64>(src) {
            Err(ModelFileError::Expr(e)) => assert_eq!((e.line, e.column), (4, 10)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn comments_are_ignored() {
        let src = "# header\n[model] # trailing\nn = 1 # one\n[initial]\n1 = 1 # stock\n";
        let m: CompartmentalModel<f64> = parse_model(src).unwrap();
        assert_eq!(m.x0(), &[1.0]);
    }

    #[test]
    fn round_trip() {
        let src = "[model]\nnames = r, p\n[params]\nk = 2\nh = k / 3\n[inputs]\nr = 3 + sin(t)\n\
                   [flows]\np<-r = h * x2 / (1 + x1)\n[outputs]\n1 = 1/3\n[initial]\n1 = 1/3\n2 = 0\n\
                   [simulate]\nt1 = 25\nsamples = 11\n";
        let m: CompartmentalModel<f64> = parse_model(src).unwrap();
        let text = serialize(&m);
        let again: CompartmentalModel<f64> = parse_model(&text).unwrap();
        assert_eq!(m, again);
        assert_eq!(serialize(&again), text);
    }
}
