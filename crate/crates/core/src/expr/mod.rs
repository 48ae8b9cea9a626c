//! Scalar expressions over `(t, x1..xm, u1..uk)` with forward-mode derivatives.
//!
//! The dynamics `f` and payoff `g` of a control problem are written as infix
//! text and parsed into an immutable [`Expr`]. Evaluation is reentrant; an
//! `Expr` can be shared freely across threads. Domain failures (logarithm of
//! a nonpositive number, division by zero, `0^negative`, non-finite results)
//! are hard errors rather than NaNs.

mod dual;
mod parser;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use dual::DualValue;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("symbol set must be nonempty and distinct")]
    BadSymbols,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("domain error in `{node}`: {reason}")]
    Domain { node: String, reason: &'static str },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("expected {expected} variable values, got {got}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }
}

/// AST node. Variables are indices into the owning expression's symbol table.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

/// A parsed expression together with the symbol table it was parsed against.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    symbols: Arc<[String]>,
}

/// Parse `source` against the declared variable names.
pub fn parse<S: AsRef<str>>(source: &str, symbols: &[S]) -> Result<Expr, ExprError> {
    let table: Vec<String> = symbols.iter().map(|s| s.as_ref().to_string()).collect();
    Expr::parse(source, table.into())
}

impl Expr {
    pub fn parse(source: &str, symbols: Arc<[String]>) -> Result<Self, ExprError> {
        if symbols.is_empty() {
            return Err(ExprError::BadSymbols);
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(ExprError::BadSymbols);
            }
        }
        let root = parser::Parser::new(source, &symbols)?.parse()?;
        Ok(Self { root, symbols })
    }

    pub fn constant(value: f64, symbols: Arc<[String]>) -> Self {
        Self {
            root: Node::Const(value),
            symbols,
        }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol_table(&self) -> Arc<[String]> {
        self.symbols.clone()
    }

    /// True when the variable at `index` occurs anywhere in the tree.
    pub fn depends_on(&self, index: usize) -> bool {
        fn walk(n: &Node, index: usize) -> bool {
            match n {
                Node::Const(_) => false,
                Node::Var(i) => *i == index,
                Node::Unary(_, a) => walk(a, index),
                Node::Binary(_, a, b) => walk(a, index) || walk(b, index),
            }
        }
        walk(&self.root, index)
    }

    /// Evaluate with `values[i]` bound to `symbols()[i]`.
    pub fn eval(&self, values: &[f64]) -> Result<f64, EvalError> {
        self.check_arity(values.len())?;
        eval_node(&self.root, values, &self.symbols)
    }

    /// Evaluate with named bindings; every variable occurring in the tree must be bound.
    pub fn eval_bindings(&self, env: &HashMap<&str, f64>) -> Result<f64, EvalError> {
        let values = self.bind(env)?;
        eval_node(&self.root, &values, &self.symbols)
    }

    /// Value and derivative with respect to the variable at index `seed`.
    pub fn eval_dual(&self, values: &[f64], seed: usize) -> Result<DualValue, EvalError> {
        self.check_arity(values.len())?;
        let duals: Vec<DualValue> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if i == seed {
                    DualValue::variable(v)
                } else {
                    DualValue::constant(v)
                }
            })
            .collect();
        eval_node(&self.root, &duals, &self.symbols)
    }

    /// Named-binding form of [`Expr::eval_dual`].
    pub fn eval_dual_bindings(
        &self,
        env: &HashMap<&str, f64>,
        seed: &str,
    ) -> Result<DualValue, EvalError> {
        let values = self.bind(env)?;
        let seed_index = self
            .symbols
            .iter()
            .position(|s| s == seed)
            .filter(|_| env.contains_key(seed))
            .ok_or_else(|| EvalError::Unbound(seed.to_string()))?;
        self.eval_dual(&values, seed_index)
    }

    fn check_arity(&self, got: usize) -> Result<(), EvalError> {
        if got != self.symbols.len() {
            return Err(EvalError::Arity {
                expected: self.symbols.len(),
                got,
            });
        }
        Ok(())
    }

    fn bind(&self, env: &HashMap<&str, f64>) -> Result<Vec<f64>, EvalError> {
        let mut values = vec![0.0; self.symbols.len()];
        for (i, name) in self.symbols.iter().enumerate() {
            match env.get(name.as_str()) {
                Some(v) => values[i] = *v,
                None if self.depends_on(i) => return Err(EvalError::Unbound(name.clone())),
                None => {}
            }
        }
        Ok(values)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", NodeDisplay(&self.root, &self.symbols))
    }
}

struct NodeDisplay<'a>(&'a Node, &'a [String]);

impl fmt::Display for NodeDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let symbols = self.1;
        match self.0 {
            Node::Const(v) => write!(f, "{v:?}"),
            Node::Var(i) => write!(f, "{}", symbols[*i]),
            Node::Unary(UnaryOp::Neg, a) => write!(f, "(-{})", NodeDisplay(a, symbols)),
            Node::Unary(op, a) => write!(f, "{}({})", op.name(), NodeDisplay(a, symbols)),
            Node::Binary(op, a, b) => write!(
                f,
                "({} {} {})",
                NodeDisplay(a, symbols),
                op.symbol(),
                NodeDisplay(b, symbols)
            ),
        }
    }
}

/// Arithmetic needed by the tree walker; implemented for `f64` and [`DualValue`].
trait Scalar: Copy {
    fn lift(v: f64) -> Self;
    fn value(self) -> f64;
    fn finite(self) -> bool;
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn neg(self) -> Self;
    /// Caller guarantees `o.value() != 0`.
    fn div(self, o: Self) -> Self;
    fn exp(self) -> Self;
    /// Caller guarantees `self.value() > 0`.
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Result<Self, &'static str>;
    fn abs(self) -> Self;
    fn pow(self, o: Self) -> Result<Self, &'static str>;
}

impl Scalar for f64 {
    fn lift(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn neg(self) -> Self {
        -self
    }
    fn div(self, o: Self) -> Self {
        self / o
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sqrt(self) -> Result<Self, &'static str> {
        Ok(f64::sqrt(self))
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn pow(self, o: Self) -> Result<Self, &'static str> {
        Ok(self.powf(o))
    }
}

impl Scalar for DualValue {
    fn lift(v: f64) -> Self {
        DualValue::constant(v)
    }
    fn value(self) -> f64 {
        self.value
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn neg(self) -> Self {
        -self
    }
    fn div(self, o: Self) -> Self {
        let v = self.value / o.value;
        DualValue::new(v, (self.derivative - v * o.derivative) / o.value)
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        DualValue::new(e, e * self.derivative)
    }
    fn ln(self) -> Self {
        DualValue::new(self.value.ln(), self.derivative / self.value)
    }
    fn sin(self) -> Self {
        DualValue::new(self.value.sin(), self.value.cos() * self.derivative)
    }
    fn cos(self) -> Self {
        DualValue::new(self.value.cos(), -self.value.sin() * self.derivative)
    }
    fn sqrt(self) -> Result<Self, &'static str> {
        let s = self.value.sqrt();
        if s == 0.0 {
            if self.derivative != 0.0 {
                return Err("derivative of sqrt at zero");
            }
            return Ok(DualValue::constant(0.0));
        }
        Ok(DualValue::new(s, self.derivative / (2.0 * s)))
    }
    fn abs(self) -> Self {
        let sign = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        DualValue::new(self.value.abs(), sign * self.derivative)
    }
    fn pow(self, o: Self) -> Result<Self, &'static str> {
        let v = self.value.powf(o.value);
        if o.derivative == 0.0 {
            if self.derivative == 0.0 {
                return Ok(DualValue::constant(v));
            }
            let d = o.value * self.value.powf(o.value - 1.0) * self.derivative;
            return Ok(DualValue::new(v, d));
        }
        if self.value <= 0.0 {
            return Err("variable exponent requires a positive base");
        }
        let d = v * (o.derivative * self.value.ln() + o.value * self.derivative / self.value);
        Ok(DualValue::new(v, d))
    }
}

fn domain(node: &Node, symbols: &[String], reason: &'static str) -> EvalError {
    EvalError::Domain {
        node: NodeDisplay(node, symbols).to_string(),
        reason,
    }
}

fn eval_node<N: Scalar>(node: &Node, vars: &[N], symbols: &[String]) -> Result<N, EvalError> {
    let out = match node {
        Node::Const(v) => return Ok(N::lift(*v)),
        Node::Var(i) => return Ok(vars[*i]),
        Node::Unary(op, a) => {
            let a = eval_node(a, vars, symbols)?;
            match op {
                UnaryOp::Neg => a.neg(),
                UnaryOp::Exp => a.exp(),
                UnaryOp::Log => {
                    if a.value() <= 0.0 {
                        return Err(domain(node, symbols, "logarithm of a nonpositive number"));
                    }
                    a.ln()
                }
                UnaryOp::Sin => a.sin(),
                UnaryOp::Cos => a.cos(),
                UnaryOp::Sqrt => {
                    if a.value() < 0.0 {
                        return Err(domain(node, symbols, "square root of a negative number"));
                    }
                    a.sqrt().map_err(|r| domain(node, symbols, r))?
                }
                UnaryOp::Abs => a.abs(),
            }
        }
        Node::Binary(op, a, b) => {
            let a = eval_node(a, vars, symbols)?;
            let b = eval_node(b, vars, symbols)?;
            match op {
                BinaryOp::Add => a.add(b),
                BinaryOp::Sub => a.sub(b),
                BinaryOp::Mul => a.mul(b),
                BinaryOp::Div => {
                    if b.value() == 0.0 {
                        return Err(domain(node, symbols, "division by zero"));
                    }
                    a.div(b)
                }
                BinaryOp::Pow => {
                    let (base, exponent) = (a.value(), b.value());
                    if base == 0.0 && exponent < 0.0 {
                        return Err(domain(node, symbols, "zero raised to a negative power"));
                    }
                    if base < 0.0 && exponent.fract() != 0.0 {
                        return Err(domain(
                            node,
                            symbols,
                            "negative base with a non-integer exponent",
                        ));
                    }
                    a.pow(b).map_err(|r| domain(node, symbols, r))?
                }
            }
        }
    };
    if !out.finite() {
        return Err(domain(node, symbols, "non-finite result"));
    }
    Ok(out)
}
