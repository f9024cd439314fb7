use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

/// Single-argument functions callable from model expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Exp,
    Sin,
    Cos,
    Sqrt,
    Abs,
}

/// Registered function table. New functions are added here and in [`Builtin::apply`].
pub const FUNCTIONS: &[(&str, Builtin)] = &[
    ("exp", Builtin::Exp),
    ("sin", Builtin::Sin),
    ("cos", Builtin::Cos),
    ("sqrt", Builtin::Sqrt),
    ("abs", Builtin::Abs),
];

impl Builtin {
    pub fn lookup(name: &str) -> Option<Builtin> {
        FUNCTIONS.iter().find(|(n, _)| *n == name).map(|(_, b)| *b)
    }

    pub fn name(self) -> &'static str {
        FUNCTIONS
            .iter()
            .find(|(_, b)| *b == self)
            .map(|(n, _)| *n)
            .expect("every builtin is registered")
    }

    pub fn apply<T: Scalar>(self, v: T) -> Result<T, ExprError> {
        Ok(match self {
            Builtin::Exp => v.exp(),
            Builtin::Sin => v.sin(),
            Builtin::Cos => v.cos(),
            Builtin::Sqrt => {
                if v < T::zero() {
                    return Err(ExprError::Domain { func: "sqrt" });
                }
                v.sqrt()
            }
            Builtin::Abs => v.abs(),
        })
    }
}

/// Expression AST as produced by the parser. Identifiers are kept by name.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        func: Builtin,
        arg: Box<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("fractional power of a negative base")]
    NegativeBaseFractionalPower,
    #[error("{func} argument outside its domain")]
    Domain { func: &'static str },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// True for a literal zero, i.e. a flow that is structurally absent.
    pub fn is_zero_literal(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    /// All identifiers referenced by the expression, in first-occurrence order.
    pub fn identifiers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_identifiers(&mut out);
        out
    }

    fn collect_identifiers<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(name) => {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
            Expr::Neg(e) | Expr::Call { arg: e, .. } => e.collect_identifiers(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_identifiers(out);
                rhs.collect_identifiers(out);
            }
        }
    }

    /// Resolve identifiers against a symbol table. Unresolvable names are kept
    /// and fail at evaluation time, so that validation can report them.
    pub fn compile(&self, symbols: &Symbols) -> CompiledExpr {
        CompiledExpr {
            root: Node::from_expr(self, symbols),
        }
    }

    /// Evaluate with a name lookup; intended for ad-hoc use and tests.
    pub fn eval_with<T: Scalar>(&self, lookup: &dyn Fn(&str) -> Option<T>) -> Result<T, ExprError> {
        match self {
            Expr::Num(v) => Ok(T::lit(*v)),
            Expr::Var(name) => {
                lookup(name).ok_or_else(|| ExprError::UnknownIdentifier(name.clone()))
            }
            Expr::Neg(e) => Ok(-e.eval_with(lookup)?),
            Expr::Binary { op, lhs, rhs } => {
                apply_binary(*op, lhs.eval_with(lookup)?, rhs.eval_with(lookup)?)
            }
            Expr::Call { func, arg } => func.apply(arg.eval_with(lookup)?),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Neg(_) => 3,
            Expr::Num(v) if *v < 0.0 || v.is_sign_negative() => 3,
            _ => 5,
        }
    }
}

fn apply_binary<T: Scalar>(op: BinOp, a: T, b: T) -> Result<T, ExprError> {
    Ok(match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == T::zero() {
                return Err(ExprError::DivisionByZero);
            }
            a / b
        }
        BinOp::Pow => {
            if a < T::zero() && b.fract() != T::zero() {
                return Err(ExprError::NegativeBaseFractionalPower);
            }
            if a == T::zero() && b < T::zero() {
                return Err(ExprError::DivisionByZero);
            }
            a.powf(b)
        }
    })
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

// Minimal-parenthesis printer; re-parsing the output yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if v.is_sign_negative() {
                    write!(f, "-{:?}", -v)
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Var(name) => f.write_str(name),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_child(f, e, e.precedence() < 3)
            }
            Expr::Call { func, arg } => write!(f, "{}({arg})", func.name()),
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                if *op == BinOp::Pow {
                    write_child(f, lhs, lhs.precedence() < 5)?;
                    f.write_str("^")?;
                    write_child(f, rhs, rhs.precedence() < 3)
                } else {
                    write_child(f, lhs, lhs.precedence() < p)?;
                    write!(f, " {} ", op.symbol())?;
                    write_child(f, rhs, rhs.precedence() <= p)
                }
            }
        }
    }
}

/// Names visible to model expressions: `t`, `x1..xn` and declared parameters.
#[derive(Debug, Clone, Default)]
pub struct Symbols {
    pub n: usize,
    pub params: Vec<String>,
}

impl Symbols {
    pub fn new(n: usize, params: Vec<String>) -> Self {
        Symbols { n, params }
    }

    pub fn resolve(&self, name: &str) -> Option<Symbol> {
        if name == "t" {
            return Some(Symbol::Time);
        }
        if let Some(idx) = state_index(name) {
            return (1..=self.n).contains(&idx).then(|| Symbol::State(idx - 1));
        }
        self.params
            .iter()
            .position(|p| p == name)
            .map(Symbol::Param)
    }
}

/// Parses `x<k>` into `k`; used to reserve state names.
pub fn state_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symbol {
    Time,
    State(usize),
    Param(usize),
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Time,
    State(usize),
    Param(usize),
    Unknown(String),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Builtin, Box<Node>),
}

impl Node {
    fn from_expr(e: &Expr, symbols: &Symbols) -> Node {
        match e {
            Expr::Num(v) => Node::Num(*v),
            Expr::Var(name) => match symbols.resolve(name) {
                Some(Symbol::Time) => Node::Time,
                Some(Symbol::State(i)) => Node::State(i),
                Some(Symbol::Param(i)) => Node::Param(i),
                None => Node::Unknown(name.clone()),
            },
            Expr::Neg(inner) => Node::Neg(Box::new(Node::from_expr(inner, symbols))),
            Expr::Binary { op, lhs, rhs } => Node::Bin(
                *op,
                Box::new(Node::from_expr(lhs, symbols)),
                Box::new(Node::from_expr(rhs, symbols)),
            ),
            Expr::Call { func, arg } => Node::Call(*func, Box::new(Node::from_expr(arg, symbols))),
        }
    }

    fn eval<T: Scalar>(&self, t: T, x: &[T], params: &[T]) -> Result<T, ExprError> {
        match self {
            Node::Num(v) => Ok(T::lit(*v)),
            Node::Time => Ok(t),
            Node::State(i) => Ok(x[*i]),
            Node::Param(i) => Ok(params[*i]),
            Node::Unknown(name) => Err(ExprError::UnknownIdentifier(name.clone())),
            Node::Neg(e) => Ok(-e.eval(t, x, params)?),
            Node::Bin(op, a, b) => apply_binary(*op, a.eval(t, x, params)?, b.eval(t, x, params)?),
            Node::Call(func, arg) => func.apply(arg.eval(t, x, params)?),
        }
    }

    fn is_constant(&self) -> bool {
        match self {
            Node::Num(_) | Node::Param(_) => true,
            Node::Time | Node::State(_) | Node::Unknown(_) => false,
            Node::Neg(e) | Node::Call(_, e) => e.is_constant(),
            Node::Bin(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }
}

/// Expression with identifiers resolved to slots; cheap to evaluate repeatedly.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr {
    root: Node,
}

impl CompiledExpr {
    pub fn eval<T: Scalar>(&self, t: T, x: &[T], params: &[T]) -> Result<T, ExprError> {
        self.root.eval(t, x, params)
    }

    /// True if the value depends on neither time nor state.
    pub fn is_constant(&self) -> bool {
        self.root.is_constant()
    }
}
