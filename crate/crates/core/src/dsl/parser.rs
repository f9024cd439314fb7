use thiserror::Error;

use super::expr::{BinOp, Builtin, Expr};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str, line0: usize, col0: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = line0;
    let mut col = col0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let (start_line, start_col) = (line, col);
        let push = |out: &mut Vec<Token>, tok| {
            out.push(Token {
                tok,
                line: start_line,
                column: start_col,
            })
        };
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| {
                ParseError::new(start_line, start_col, format!("malformed number `{text}`"))
            })?;
            col += i - start;
            push(&mut out, Tok::Num(v));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            push(&mut out, Tok::Ident(chars[start..i].iter().collect()));
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            _ => {
                return Err(ParseError::new(
                    line,
                    col,
                    format!("unexpected character `{c}`"),
                ))
            }
        };
        push(&mut out, tok);
        i += 1;
        col += 1;
    }
    out.push(Token {
        tok: Tok::End,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        let t = self.peek();
        ParseError::new(t.line, t.column, message)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek().tok {
            Tok::Op(c) if ops.contains(&c) => {
                self.bump();
                Some(c)
            }
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.eat_op(&['+', '-']) {
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::binary(op, lhs, self.term()?);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.eat_op(&['*', '/']) {
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::binary(op, lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op(&['-']).is_some() {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.eat_op(&['^']).is_some() {
            let exponent = self.power_rhs()?;
            return Ok(Expr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn power_rhs(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op(&['-']).is_some() {
            return Ok(Expr::Neg(Box::new(self.power_rhs()?)));
        }
        self.power()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Ident(name) => {
                if self.peek().tok != Tok::LParen {
                    return Ok(Expr::Var(name));
                }
                let func = Builtin::lookup(&name).ok_or_else(|| {
                    ParseError::new(t.line, t.column, format!("unknown function `{name}`"))
                })?;
                self.bump();
                let arg = self.expr()?;
                if self.peek().tok == Tok::Comma {
                    return Err(self.error_here(format!("`{name}` takes exactly one argument")));
                }
                self.expect_rparen()?;
                Ok(Expr::Call {
                    func,
                    arg: Box::new(arg),
                })
            }
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::End => Err(ParseError::new(
                t.line,
                t.column,
                "unexpected end of expression",
            )),
            other => Err(ParseError::new(
                t.line,
                t.column,
                format!("unexpected token {}", describe(&other)),
            )),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if self.peek().tok == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.error_here("expected `)`"))
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Op(c) => format!("`{c}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::End => "end of input".into(),
    }
}

/// Parse an expression; positions in errors are 1-based and relative to `src`.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    parse_expr_at(src, 1, 1)
}

/// Parse an expression that starts at `line`, `column` of a larger document.
pub fn parse_expr_at(src: &str, line: usize, column: usize) -> Result<Expr, ParseError> {
    let toks = lex(src, line, column)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if p.peek().tok != Tok::End {
        let msg = format!("unexpected token {}", describe(&p.peek().tok));
        return Err(p.error_here(msg));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str) -> f64 {
        parse_expr(src).unwrap().eval_with(&|_| None).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3"), 7.0);
        assert_eq!(eval("2 ^ 3 ^ 2"), 512.0);
        assert_eq!(eval("-2 ^ 2"), -4.0);
        assert_eq!(eval("2 ^ -1"), 0.5);
        assert_eq!(eval("8 / 4 / 2"), 1.0);
        assert_eq!(eval("10 - 4 - 3"), 3.0);
        assert_eq!(eval("1.5e1 + .5"), 15.5);
        assert_eq!(eval("2E-1*10"), 2.0);
    }

    #[test]
    fn functions() {
        assert!((eval("exp(1)") - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(eval("sqrt(16) + abs(-3)"), 7.0);
        assert!(parse_expr("foo(1)").is_err());
        assert!(parse_expr("sin(1, 2)").is_err());
    }

    #[test]
    fn error_positions() {
        let e = parse_expr("1 + * 2").unwrap_err();
        assert_eq!((e.line, e.column), (1, 5));
        let e = parse_expr_at("(1 + 2", 4, 9).unwrap_err();
        assert_eq!(e.line, 4);
        assert_eq!(e.column, 15);
        let e = parse_expr("2 $ 3").unwrap_err();
        assert_eq!(e.column, 3);
    }

    #[test]
    fn unicode_identifiers() {
        let e = parse_expr("α1 * x2").unwrap();
        assert_eq!(e.identifiers(), vec!["α1", "x2"]);
    }

    #[test]
    fn printer_round_trip_examples() {
        for src in [
            "-(a + b) * c",
            "a - (b - c)",
            "a / (b * c)",
            "(a ^ b) ^ c",
            "a ^ b ^ c",
            "-a ^ 2",
            "(-a) ^ 2",
            "a ^ -b",
            "exp(-(t - 15) ^ 2 / 2) + 0.1",
            "--a",
        ] {
            let e = parse_expr(src).unwrap();
            let printed = e.to_string();
            assert_eq!(parse_expr(&printed).unwrap(), e, "{src} -> {printed}");
        }
    }
}
