//! Symbolic differentiation with light constant folding.

use super::{Func, Node};

fn num_of(n: &Node) -> Option<f64> {
    match n {
        Node::Num(v) => Some(*v),
        _ => None,
    }
}

fn finite(v: f64) -> Option<Node> {
    v.is_finite().then_some(Node::Num(v))
}

fn neg(a: Node) -> Node {
    match a {
        Node::Num(v) => Node::Num(-v),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn add(a: Node, b: Node) -> Node {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) => finite(x + y).unwrap_or(Node::Add(Box::new(a), Box::new(b))),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => match b {
            Node::Neg(inner) => Node::Sub(Box::new(a), inner),
            Node::Num(y) if y < 0.0 => Node::Sub(Box::new(a), Box::new(Node::Num(-y))),
            b => Node::Add(Box::new(a), Box::new(b)),
        },
    }
}

fn sub(a: Node, b: Node) -> Node {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) => finite(x - y).unwrap_or(Node::Sub(Box::new(a), Box::new(b))),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Node::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Node, b: Node) -> Node {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) => finite(x * y).unwrap_or(Node::Mul(Box::new(a), Box::new(b))),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Node::Num(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        // keep numeric factors on the left
        (None, Some(_)) => Node::Mul(Box::new(b), Box::new(a)),
        _ => Node::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Node, b: Node) -> Node {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) if y != 0.0 => {
            finite(x / y).unwrap_or(Node::Div(Box::new(a), Box::new(b)))
        }
        (Some(x), _) if x == 0.0 => Node::Num(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Node::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Node, b: Node) -> Node {
    match num_of(&b) {
        Some(y) if y == 1.0 => a,
        Some(y) if y == 0.0 => Node::Num(1.0),
        _ => Node::Pow(Box::new(a), Box::new(b)),
    }
}

fn call(f: Func, a: Node) -> Node {
    Node::Call(f, Box::new(a))
}

/// d/dx of `node`, simplified.
pub(super) fn derivative(node: &Node) -> Node {
    match node {
        Node::Num(_) | Node::Const(_) => Node::Num(0.0),
        Node::Var => Node::Num(1.0),
        Node::Neg(a) => neg(derivative(a)),
        Node::Add(a, b) => add(derivative(a), derivative(b)),
        Node::Sub(a, b) => sub(derivative(a), derivative(b)),
        Node::Mul(a, b) => {
            let da = derivative(a);
            let db = derivative(b);
            add(mul(da, (**b).clone()), mul((**a).clone(), db))
        }
        Node::Div(a, b) => {
            let da = derivative(a);
            let db = derivative(b);
            if num_of(&db) == Some(0.0) {
                return div(da, (**b).clone());
            }
            div(
                sub(mul(da, (**b).clone()), mul((**a).clone(), db)),
                pow((**b).clone(), Node::Num(2.0)),
            )
        }
        Node::Pow(a, b) => {
            let da = derivative(a);
            let db = derivative(b);
            if num_of(&db) == Some(0.0) {
                // u^c -> c*u^(c-1)*u'
                let c = (**b).clone();
                let c_minus_1 = sub(c.clone(), Node::Num(1.0));
                return mul(mul(c, pow((**a).clone(), c_minus_1)), da);
            }
            // u^v -> u^v * (v' log u + v u'/u)
            let term1 = mul(db, call(Func::Log, (**a).clone()));
            let term2 = div(mul((**b).clone(), da), (**a).clone());
            mul(node.clone(), add(term1, term2))
        }
        Node::Call(f, a) => {
            let da = derivative(a);
            if num_of(&da) == Some(0.0) {
                return Node::Num(0.0);
            }
            let u = (**a).clone();
            let outer = match f {
                Func::Sin => call(Func::Cos, u),
                Func::Cos => neg(call(Func::Sin, u)),
                Func::Tan => div(Node::Num(1.0), pow(call(Func::Cos, u), Node::Num(2.0))),
                Func::Exp => node.clone(),
                Func::Log => div(Node::Num(1.0), u),
                Func::Sqrt => div(Node::Num(1.0), mul(Node::Num(2.0), node.clone())),
                Func::Abs => call(Func::Sign, u),
                Func::Tanh => sub(Node::Num(1.0), pow(node.clone(), Node::Num(2.0))),
                // piecewise constant; derivative zero away from the jump
                Func::Sign => return Node::Num(0.0),
            };
            mul(outer, da)
        }
    }
}
