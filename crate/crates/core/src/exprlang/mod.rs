//! Scalar expressions of one real variable.
//!
//! Every user-supplied map, coefficient, curve component and boundary datum is
//! an [`Expression`]: parsed once, then evaluated many times. Trees are
//! immutable after construction, so evaluation is safe from any thread.

mod diff;
mod parse;

use std::fmt;
use std::sync::Arc;

pub use parse::{parse, parse_with_var, SyntaxError, Token};

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
    /// Produced by differentiating `abs`; `sign(0) = 0`.
    Sign,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Sign => "sign",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "sign" => Func::Sign,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }
}

/// Abstract syntax tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Const(Constant),
    Var,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// Why evaluation failed, together with the offending subexpression.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("domain error in `{subexpr}`: {reason}")]
pub struct DomainError {
    pub subexpr: String,
    pub reason: &'static str,
}

/// A parsed expression in a single named variable.
#[derive(Clone, PartialEq)]
pub struct Expression {
    root: Arc<Node>,
    var: Arc<str>,
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({})", self)
    }
}

impl Expression {
    pub fn from_node(root: Node, var: &str) -> Self {
        Expression {
            root: Arc::new(root),
            var: Arc::from(var),
        }
    }

    pub fn constant(value: f64, var: &str) -> Self {
        Self::from_node(Node::Num(value), var)
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    pub fn var(&self) -> &str {
        &self.var
    }

    pub fn eval(&self, x: f64) -> Result<f64, DomainError> {
        eval_node(&self.root, x, &self.var)
    }

    /// Evaluation that maps domain errors to NaN; for hot loops whose inputs
    /// were validated beforehand.
    pub fn eval_or_nan(&self, x: f64) -> f64 {
        self.eval(x).unwrap_or(f64::NAN)
    }

    pub fn differentiate(&self) -> Expression {
        Expression {
            root: Arc::new(diff::derivative(&self.root)),
            var: self.var.clone(),
        }
    }

    /// `self(inner(x))`.
    pub fn compose(&self, inner: &Expression) -> Expression {
        Expression {
            root: Arc::new(substitute(&self.root, inner.node())),
            var: inner.var.clone(),
        }
    }

    /// Constant value if the tree contains no variable.
    pub fn as_constant(&self) -> Option<f64> {
        if contains_var(&self.root) {
            None
        } else {
            self.eval(0.0).ok()
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, &self.var, 0)
    }
}

impl std::str::FromStr for Expression {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

fn contains_var(node: &Node) -> bool {
    match node {
        Node::Num(_) | Node::Const(_) => false,
        Node::Var => true,
        Node::Neg(a) | Node::Call(_, a) => contains_var(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            contains_var(a) || contains_var(b)
        }
    }
}

fn substitute(node: &Node, inner: &Node) -> Node {
    let sub = |n: &Node| Box::new(substitute(n, inner));
    match node {
        Node::Var => inner.clone(),
        Node::Num(_) | Node::Const(_) => node.clone(),
        Node::Neg(a) => Node::Neg(sub(a)),
        Node::Call(f, a) => Node::Call(*f, sub(a)),
        Node::Add(a, b) => Node::Add(sub(a), sub(b)),
        Node::Sub(a, b) => Node::Sub(sub(a), sub(b)),
        Node::Mul(a, b) => Node::Mul(sub(a), sub(b)),
        Node::Div(a, b) => Node::Div(sub(a), sub(b)),
        Node::Pow(a, b) => Node::Pow(sub(a), sub(b)),
    }
}

fn domain_error(node: &Node, var: &str, reason: &'static str) -> DomainError {
    let mut subexpr = String::new();
    // Writing into a String cannot fail.
    let _ = fmt::write(&mut subexpr, format_args!("{}", Displayed(node, var)));
    DomainError { subexpr, reason }
}

struct Displayed<'a>(&'a Node, &'a str);

impl fmt::Display for Displayed<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, self.0, self.1, 0)
    }
}

fn eval_node(node: &Node, x: f64, var: &str) -> Result<f64, DomainError> {
    Ok(match node {
        Node::Num(v) => *v,
        Node::Const(c) => c.value(),
        Node::Var => x,
        Node::Neg(a) => -eval_node(a, x, var)?,
        Node::Add(a, b) => eval_node(a, x, var)? + eval_node(b, x, var)?,
        Node::Sub(a, b) => eval_node(a, x, var)? - eval_node(b, x, var)?,
        Node::Mul(a, b) => eval_node(a, x, var)? * eval_node(b, x, var)?,
        Node::Div(a, b) => {
            let num = eval_node(a, x, var)?;
            let den = eval_node(b, x, var)?;
            if den == 0.0 {
                return Err(domain_error(node, var, "division by zero"));
            }
            num / den
        }
        Node::Pow(a, b) => {
            let base = eval_node(a, x, var)?;
            let exp = eval_node(b, x, var)?;
            let v = if exp == 2.0 {
                base * base
            } else if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
                base.powi(exp as i32)
            } else {
                base.powf(exp)
            };
            if v.is_nan() {
                return Err(domain_error(node, var, "power of a negative base"));
            }
            if base == 0.0 && exp < 0.0 {
                return Err(domain_error(node, var, "division by zero"));
            }
            v
        }
        Node::Call(f, a) => {
            let v = eval_node(a, x, var)?;
            match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Tan => v.tan(),
                Func::Exp => v.exp(),
                Func::Tanh => v.tanh(),
                Func::Abs => v.abs(),
                Func::Sign => {
                    if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
                Func::Log => {
                    if v <= 0.0 {
                        return Err(domain_error(node, var, "log of a non-positive number"));
                    }
                    v.ln()
                }
                Func::Sqrt => {
                    if v < 0.0 {
                        return Err(domain_error(node, var, "sqrt of a negative number"));
                    }
                    v.sqrt()
                }
            }
        }
    })
}

// Binding strength used by the printer: + - (1) < * / (2) < unary - (3) < ^ (4) < atom (5).
fn precedence(node: &Node) -> u8 {
    match node {
        Node::Add(..) | Node::Sub(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Neg(_) => 3,
        Node::Num(v) if *v < 0.0 || v.is_sign_negative() => 3,
        Node::Pow(..) => 4,
        _ => 5,
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &Node, var: &str, min_prec: u8) -> fmt::Result {
    let prec = precedence(node);
    let paren = prec < min_prec;
    if paren {
        f.write_str("(")?;
    }
    match node {
        Node::Num(v) => {
            if v.is_sign_negative() {
                write!(f, "-{}", format_number(-v))?;
            } else {
                f.write_str(&format_number(*v))?;
            }
        }
        Node::Const(Constant::Pi) => f.write_str("pi")?,
        Node::Const(Constant::E) => f.write_str("e")?,
        Node::Var => f.write_str(var)?,
        Node::Neg(a) => {
            f.write_str("-")?;
            write_node(f, a, var, 3)?;
        }
        Node::Add(a, b) => {
            write_node(f, a, var, 1)?;
            f.write_str(" + ")?;
            write_node(f, b, var, 2)?;
        }
        Node::Sub(a, b) => {
            write_node(f, a, var, 1)?;
            f.write_str(" - ")?;
            write_node(f, b, var, 2)?;
        }
        Node::Mul(a, b) => {
            write_node(f, a, var, 2)?;
            f.write_str("*")?;
            write_node(f, b, var, 3)?;
        }
        Node::Div(a, b) => {
            write_node(f, a, var, 2)?;
            f.write_str("/")?;
            write_node(f, b, var, 3)?;
        }
        Node::Pow(a, b) => {
            // base must be an atom; exponent may be any factor (right-assoc).
            write_node(f, a, var, 5)?;
            f.write_str("^")?;
            write_node(f, b, var, 3)?;
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(f, a, var, 0)?;
            f.write_str(")")?;
        }
    }
    if paren {
        f.write_str(")")?;
    }
    Ok(())
}

/// Shortest decimal that parses back to the same `f64`, always in the
/// literal grammar (digits, optional fraction, optional exponent).
fn format_number(v: f64) -> String {
    let s = format!("{:e}", v);
    let plain = format!("{}", v);
    if plain.len() <= s.len() {
        plain
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: f64) -> f64 {
        parse(src).unwrap().eval(x).unwrap()
    }

    #[test]
    fn golden_trees() {
        let e = parse("(t+1)/2").unwrap();
        assert_eq!(
            e.node(),
            &Node::Div(
                Box::new(Node::Add(Box::new(Node::Var), Box::new(Node::Num(1.0)))),
                Box::new(Node::Num(2.0))
            )
        );
        let e = parse("sin(t)^2").unwrap();
        assert_eq!(
            e.node(),
            &Node::Pow(
                Box::new(Node::Call(Func::Sin, Box::new(Node::Var))),
                Box::new(Node::Num(2.0))
            )
        );
        // unary minus binds looser than ^
        let e = parse("-t^2").unwrap();
        assert_eq!(
            e.node(),
            &Node::Neg(Box::new(Node::Pow(Box::new(Node::Var), Box::new(Node::Num(2.0)))))
        );
        // right associative power
        assert_eq!(ev("2^3^2", 0.0), 512.0);
        assert_eq!(ev("2^-1", 0.0), 0.5);
    }

    #[test]
    fn arithmetic() {
        assert_eq!(ev("(t+1)/2", 0.0), 0.5);
        assert!((ev("sin(t)^2 + cos(t)^2", 0.7) - 1.0).abs() < 1e-15);
        assert_eq!(ev("2*pi", 0.0), 2.0 * std::f64::consts::PI);
        assert_eq!(ev("1.5e2 + .5", 0.0), 150.5);
        assert_eq!(ev("abs(t) - sign(t)", -3.0), 4.0);
    }

    #[test]
    fn domain_errors() {
        let err = parse("log(t)").unwrap().eval(-1.0).unwrap_err();
        assert_eq!(err.subexpr, "log(t)");
        assert!(parse("sqrt(t - 2)").unwrap().eval(0.0).is_err());
        assert!(parse("1/(t-1)").unwrap().eval(1.0).is_err());
        assert!(parse("t^0.5").unwrap().eval(-4.0).is_err());
    }

    #[test]
    fn sign_of_zero_is_zero() {
        assert_eq!(ev("sign(t)", 0.0), 0.0);
        let d = parse("abs(t)").unwrap().differentiate();
        assert_eq!(d.eval(0.0).unwrap(), 0.0);
        assert_eq!(d.eval(-2.0).unwrap(), -1.0);
    }

    #[test]
    fn print_round_trip() {
        for src in [
            "(t+1)/2",
            "-t^2",
            "(-t)^2",
            "2^3^2",
            "(2^3)^2",
            "t - (t - 1)",
            "t/(t*2)",
            "-(t+1)*3",
            "sin(t)^2 + cos(t)^2",
            "exp(-t/3) - tanh(t)",
            "1e-7*t + 123456789012",
        ] {
            let e = parse(src).unwrap();
            let printed = e.to_string();
            let again = parse(&printed).unwrap();
            assert_eq!(e.node(), again.node(), "{src} -> {printed}");
        }
    }

    #[test]
    fn compose_substitutes() {
        let outer = parse("t^2 + 1").unwrap();
        let inner = parse("(t+1)/2").unwrap();
        let c = outer.compose(&inner);
        assert_eq!(c.eval(1.0).unwrap(), 2.0);
    }

    #[test]
    fn other_variable_name() {
        let e = parse_with_var("z^2 - z", "z").unwrap();
        assert_eq!(e.eval(3.0).unwrap(), 6.0);
        assert!(parse_with_var("t", "z").is_err());
    }
}
