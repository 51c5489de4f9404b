//! Recursive-descent parser for the constraint language.
//!
//! ```text
//! formula := quant | implz
//! quant   := "forall" ident "in" ident ":" formula
//! implz   := orz ("->" orz)?
//! orz     := andz ("or" andz)*
//! andz    := notz ("and" notz)*
//! notz    := "not" notz | "(" formula ")" | cmp
//! cmp     := expr ("<=" | "<" | ">=" | ">" | "==" | "!=") expr
//! expr    := term (("+" | "-") term)*
//! term    := factor ("*" factor)*
//! factor  := "-"? number | ident | "out" "[" idx "]" | "in" "[" idx "]"
//!          | "sum" "(" expr ("," expr)* ")" | "norm2" "(" vec "-" vec ")"
//!          | "(" expr ")"
//! idx     := number | ident ("." number)?
//! vec     := "out" | "in" | "out'" | "in'"
//! ```
//!
//! A bare identifier in `factor` position names a constant from the
//! [`ParseContext`]. Keywords are lowercase and indices are zero-based.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{BindingSet, CmpOp, Expr, Formula, Index, VecRef};

/// Names and sizes a formula may refer to.
#[derive(Clone, Debug, Default)]
pub struct ParseContext {
    pub n_classes: usize,
    /// Input dimension, when known; `in[i]` is range-checked against it.
    pub n_inputs: Option<usize>,
    pub sets: BTreeMap<String, BindingSet>,
    pub constants: BTreeMap<String, f64>,
}

impl ParseContext {
    pub fn new(n_classes: usize) -> Self {
        ParseContext {
            n_classes,
            ..Default::default()
        }
    }

    pub fn with_inputs(mut self, n_inputs: usize) -> Self {
        self.n_inputs = Some(n_inputs);
        self
    }

    pub fn with_set(mut self, set: BindingSet) -> Self {
        self.sets.insert(set.name.clone(), set);
        self
    }

    pub fn with_constant(mut self, name: impl Into<String>, value: f64) -> Self {
        self.constants.insert(name.into(), value);
        self
    }

    /// Context able to re-read `f`'s printed form.
    pub fn for_formula(n_classes: usize, f: &Formula) -> Self {
        ParseContext {
            n_classes,
            n_inputs: None,
            sets: f.binding_sets(),
            constants: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("index {index} out of range (must be < {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{kind} at position {position}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the source text.
    pub position: usize,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(&'static str),
    Eof,
}

const SYMBOLS: [&str; 17] = [
    "->", "<=", ">=", "==", "!=", "<", ">", "(", ")", "[", "]", ",", ":", "+", "-", "*", ".",
];

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let ch = bytes[i];
        if ch.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if ch.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let value = text[start..i].parse::<f64>().map_err(|e| ParseError {
                kind: ParseErrorKind::Syntax(format!("bad number: {e}")),
                position: start,
            })?;
            out.push((Tok::Num(value), start));
            continue;
        }
        if ch.is_ascii_alphabetic() || ch == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'\'' {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
            continue;
        }
        match SYMBOLS.iter().find(|s| text[i..].starts_with(**s)) {
            Some(sym) => {
                out.push((Tok::Sym(sym), start));
                i += sym.len();
            }
            None => {
                let c = text[i..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    kind: ParseErrorKind::Syntax(format!("unexpected character `{c}`")),
                    position: start,
                });
            }
        }
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

const KEYWORDS: [&str; 10] = [
    "forall", "in", "out", "sum", "norm2", "not", "and", "or", "out'", "in'",
];

struct Parser<'c> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    ctx: &'c ParseContext,
    scope: Vec<(String, BindingSet)>,
}

type PResult<T> = Result<T, ParseError>;

/// Parses a formula, resolving quantifier tables and named constants from `ctx`.
pub fn parse(text: &str, ctx: &ParseContext) -> Result<Formula, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        ctx,
        scope: Vec::new(),
    };
    let f = p.formula()?;
    if p.peek() != &Tok::Eof {
        return Err(p.syntax("trailing input"));
    }
    Ok(f)
}

impl<'c> Parser<'c> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn here(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn syntax(&self, msg: &str) -> ParseError {
        let found = match self.peek() {
            Tok::Num(n) => format!("number {n}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        };
        ParseError {
            kind: ParseErrorKind::Syntax(format!("{msg}, found {found}")),
            position: self.here(),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax(&format!("expected `{s}`")))
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.is_kw(s) {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax(&format!("expected `{s}`")))
        }
    }

    fn ident(&mut self) -> PResult<(String, usize)> {
        let at = self.here();
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok((s, at))
            }
            _ => Err(self.syntax("expected identifier")),
        }
    }

    fn formula(&mut self) -> PResult<Formula> {
        if self.is_kw("forall") {
            self.bump();
            let (var, _) = self.ident()?;
            self.expect_kw("in")?;
            let (set_name, at) = self.ident()?;
            let set = self.ctx.sets.get(&set_name).cloned().ok_or(ParseError {
                kind: ParseErrorKind::UnknownIdentifier(set_name),
                position: at,
            })?;
            self.expect_sym(":")?;
            self.scope.push((var.clone(), set.clone()));
            let body = self.formula();
            self.scope.pop();
            return Ok(Formula::BigAnd {
                var,
                set,
                body: Box::new(body?),
            });
        }
        let lhs = self.orz()?;
        if self.is_sym("->") {
            self.bump();
            let rhs = self.orz()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn orz(&mut self) -> PResult<Formula> {
        let mut acc = self.andz()?;
        while self.is_kw("or") {
            self.bump();
            let rhs = self.andz()?;
            acc = Formula::or(acc, rhs);
        }
        Ok(acc)
    }

    fn andz(&mut self) -> PResult<Formula> {
        let mut acc = self.notz()?;
        while self.is_kw("and") {
            self.bump();
            let rhs = self.notz()?;
            acc = Formula::and(acc, rhs);
        }
        Ok(acc)
    }

    fn notz(&mut self) -> PResult<Formula> {
        if self.is_kw("not") {
            self.bump();
            return Ok(Formula::not(self.notz()?));
        }
        if self.is_sym("(") {
            // Either a parenthesised formula or a comparison whose left
            // operand starts with a parenthesised expression.
            let save = self.pos;
            match self.cmp() {
                Ok(f) => return Ok(f),
                Err(cmp_err) => {
                    self.pos = save;
                    self.bump();
                    let inner = match self.formula() {
                        Ok(f) => f,
                        Err(e) => return Err(furthest(cmp_err, e)),
                    };
                    self.expect_sym(")")?;
                    return Ok(inner);
                }
            }
        }
        self.cmp()
    }

    fn cmp(&mut self) -> PResult<Formula> {
        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym(">=") => CmpOp::Ge,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym("==") => CmpOp::Eq,
            Tok::Sym("!=") => CmpOp::Ne,
            _ => return Err(self.syntax("expected comparison operator")),
        };
        self.bump();
        let rhs = self.expr()?;
        Ok(Formula::Cmp(op, lhs, rhs))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut acc = self.term()?;
        loop {
            if self.is_sym("+") {
                self.bump();
                acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
            } else if self.is_sym("-") {
                self.bump();
                acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut acc = self.factor()?;
        while self.is_sym("*") {
            self.bump();
            acc = Expr::Mul(Box::new(acc), Box::new(self.factor()?));
        }
        Ok(acc)
    }

    fn factor(&mut self) -> PResult<Expr> {
        let at = self.here();
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Expr::Const(n))
            }
            Tok::Sym("-") => {
                self.bump();
                match self.bump() {
                    Tok::Num(n) => Ok(Expr::Const(-n)),
                    _ => Err(ParseError {
                        kind: ParseErrorKind::Syntax("`-` must be followed by a number".into()),
                        position: at,
                    }),
                }
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(s) if s == "out" && matches!(self.peek_at(1), Tok::Sym("[")) => {
                self.bump();
                let idx = self.index(self.ctx.n_classes)?;
                Ok(Expr::Output(idx))
            }
            Tok::Ident(s) if s == "in" && matches!(self.peek_at(1), Tok::Sym("[")) => {
                self.bump();
                let bound = self.ctx.n_inputs.unwrap_or(usize::MAX);
                let idx = self.index(bound)?;
                Ok(Expr::Input(idx))
            }
            Tok::Ident(s) if s == "sum" => {
                self.bump();
                self.expect_sym("(")?;
                let mut items = vec![self.expr()?];
                while self.is_sym(",") {
                    self.bump();
                    items.push(self.expr()?);
                }
                self.expect_sym(")")?;
                Ok(Expr::Sum(items))
            }
            Tok::Ident(s) if s == "norm2" => {
                self.bump();
                self.expect_sym("(")?;
                let a = self.vec_ref()?;
                self.expect_sym("-")?;
                let b = self.vec_ref()?;
                self.expect_sym(")")?;
                Ok(Expr::Norm2Diff(a, b))
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                self.ctx
                    .constants
                    .get(&s)
                    .map(|v| Expr::Const(*v))
                    .ok_or(ParseError {
                        kind: ParseErrorKind::UnknownIdentifier(s),
                        position: at,
                    })
            }
            _ => Err(self.syntax("expected expression")),
        }
    }

    fn vec_ref(&mut self) -> PResult<VecRef> {
        let r = match self.peek() {
            Tok::Ident(s) if s == "out" => VecRef::Output,
            Tok::Ident(s) if s == "in" => VecRef::Input,
            Tok::Ident(s) if s == "out'" => VecRef::PairOutput,
            Tok::Ident(s) if s == "in'" => VecRef::PairInput,
            _ => return Err(self.syntax("expected out, in, out' or in'")),
        };
        self.bump();
        Ok(r)
    }

    fn index(&mut self, bound: usize) -> PResult<Index> {
        self.expect_sym("[")?;
        let at = self.here();
        let save = self.pos;
        let idx = match self.bump() {
            Tok::Num(n) => {
                if n.fract() != 0.0 || n < 0.0 {
                    return Err(ParseError {
                        kind: ParseErrorKind::Syntax(format!("index must be a natural number, got {n}")),
                        position: at,
                    });
                }
                let i = n as usize;
                if i >= bound {
                    return Err(ParseError {
                        kind: ParseErrorKind::IndexOutOfRange { index: i, bound },
                        position: at,
                    });
                }
                Index::Lit(i)
            }
            Tok::Ident(var) => {
                let set = self
                    .scope
                    .iter()
                    .rev()
                    .find(|(v, _)| *v == var)
                    .map(|(_, s)| s.clone())
                    .ok_or_else(|| ParseError {
                        kind: ParseErrorKind::UnknownIdentifier(var.clone()),
                        position: at,
                    })?;
                let component = if self.is_sym(".") {
                    self.bump();
                    let cat = self.here();
                    match self.bump() {
                        Tok::Num(n) if n.fract() == 0.0 && n >= 0.0 => {
                            let c = n as usize;
                            let arity = set.members.iter().map(Vec::len).min().unwrap_or(0);
                            if c >= arity {
                                return Err(ParseError {
                                    kind: ParseErrorKind::IndexOutOfRange {
                                        index: c,
                                        bound: arity,
                                    },
                                    position: cat,
                                });
                            }
                            Some(c)
                        }
                        _ => {
                            return Err(ParseError {
                                kind: ParseErrorKind::Syntax("expected component number".into()),
                                position: cat,
                            })
                        }
                    }
                } else {
                    None
                };
                if let Some(&bad) = set.members.iter().flatten().find(|&&i| i >= bound) {
                    return Err(ParseError {
                        kind: ParseErrorKind::IndexOutOfRange { index: bad, bound },
                        position: at,
                    });
                }
                Index::Bound { var, component }
            }
            _ => {
                self.pos = save;
                return Err(self.syntax("expected index"));
            }
        };
        self.expect_sym("]")?;
        Ok(idx)
    }
}

fn furthest(a: ParseError, b: ParseError) -> ParseError {
    if a.position > b.position {
        a
    } else {
        b
    }
}
