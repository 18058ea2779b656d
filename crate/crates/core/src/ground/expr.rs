//! Ground expression trees: constant folding and evaluation.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::rddl::BinaryOp;

/// Binary operators that survive grounding. `^`, `|`, `+` and `*` become
/// n-ary [`GroundExpr`] nodes instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroundBinOp {
    Implies,
    Equiv,
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    Sub,
    Div,
}

impl GroundBinOp {
    pub(crate) fn from_ast(op: BinaryOp) -> Option<Self> {
        Some(match op {
            BinaryOp::Implies => GroundBinOp::Implies,
            BinaryOp::Equiv => GroundBinOp::Equiv,
            BinaryOp::Eq => GroundBinOp::Eq,
            BinaryOp::Neq => GroundBinOp::Neq,
            BinaryOp::Lt => GroundBinOp::Lt,
            BinaryOp::Le => GroundBinOp::Le,
            BinaryOp::Gt => GroundBinOp::Gt,
            BinaryOp::Ge => GroundBinOp::Ge,
            BinaryOp::Sub => GroundBinOp::Sub,
            BinaryOp::Div => GroundBinOp::Div,
            BinaryOp::And | BinaryOp::Or | BinaryOp::Add | BinaryOp::Mul => return None,
        })
    }

    fn is_boolean(self) -> bool {
        !matches!(self, GroundBinOp::Sub | GroundBinOp::Div)
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        let t = |c: bool| f64::from(u8::from(c));
        match self {
            GroundBinOp::Implies => t(!truthy(a) || truthy(b)),
            GroundBinOp::Equiv => t(truthy(a) == truthy(b)),
            GroundBinOp::Eq => t(a == b),
            GroundBinOp::Neq => t(a != b),
            GroundBinOp::Lt => t(a < b),
            GroundBinOp::Le => t(a <= b),
            GroundBinOp::Gt => t(a > b),
            GroundBinOp::Ge => t(a >= b),
            GroundBinOp::Sub => a - b,
            GroundBinOp::Div => a / b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            GroundBinOp::Implies => "=>",
            GroundBinOp::Equiv => "<=>",
            GroundBinOp::Eq => "==",
            GroundBinOp::Neq => "~=",
            GroundBinOp::Lt => "<",
            GroundBinOp::Le => "<=",
            GroundBinOp::Gt => ">",
            GroundBinOp::Ge => ">=",
            GroundBinOp::Sub => "-",
            GroundBinOp::Div => "/",
        }
    }
}

/// Fully ground expression. Values are numeric; booleans are 0/1 and any
/// nonzero value is true in logical context.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundExpr {
    Const(f64),
    /// Current value of a ground state variable (dense index).
    State(usize),
    /// 1 when the executed ground action is this one (dense index).
    Action(usize),
    Not(Box<GroundExpr>),
    Neg(Box<GroundExpr>),
    And(Vec<GroundExpr>),
    Or(Vec<GroundExpr>),
    Sum(Vec<GroundExpr>),
    Product(Vec<GroundExpr>),
    Binary(GroundBinOp, Box<GroundExpr>, Box<GroundExpr>),
    If(Box<GroundExpr>, Box<GroundExpr>, Box<GroundExpr>),
    Bernoulli(Box<GroundExpr>),
    KronDelta(Box<GroundExpr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("Bernoulli parameter {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("non-finite value")]
    NonFinite,
}

#[inline]
pub(crate) fn truthy(v: f64) -> bool {
    v != 0.0
}

fn bool_value(b: bool) -> f64 {
    f64::from(u8::from(b))
}

impl GroundExpr {
    pub fn constant(&self) -> Option<f64> {
        match self {
            GroundExpr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// True when the expression only ever evaluates to 0 or 1.
    pub fn is_boolean(&self) -> bool {
        match self {
            GroundExpr::Const(c) => *c == 0.0 || *c == 1.0,
            GroundExpr::State(_)
            | GroundExpr::Action(_)
            | GroundExpr::Not(_)
            | GroundExpr::And(_)
            | GroundExpr::Or(_) => true,
            GroundExpr::Binary(op, ..) => op.is_boolean(),
            GroundExpr::If(_, t, f) => t.is_boolean() && f.is_boolean(),
            _ => false,
        }
    }

    /// Evaluate under state `s` with ground action `action` executed.
    ///
    /// A `Bernoulli` root yields its parameter (checked to lie in [0, 1]); a
    /// `KronDelta` root yields its argument's value.
    pub fn eval(&self, s: &[bool], action: usize) -> Result<f64, EvalError> {
        let v = match self {
            GroundExpr::Const(c) => *c,
            GroundExpr::State(i) => bool_value(s[*i]),
            GroundExpr::Action(i) => bool_value(*i == action),
            GroundExpr::Not(e) => bool_value(!truthy(e.eval(s, action)?)),
            GroundExpr::Neg(e) => -e.eval(s, action)?,
            GroundExpr::And(es) => {
                for e in es {
                    if !truthy(e.eval(s, action)?) {
                        return Ok(0.0);
                    }
                }
                1.0
            }
            GroundExpr::Or(es) => {
                for e in es {
                    if truthy(e.eval(s, action)?) {
                        return Ok(1.0);
                    }
                }
                0.0
            }
            GroundExpr::Sum(es) => {
                let mut acc = 0.0;
                for e in es {
                    acc += e.eval(s, action)?;
                }
                acc
            }
            GroundExpr::Product(es) => {
                let mut acc = 1.0;
                for e in es {
                    acc *= e.eval(s, action)?;
                }
                acc
            }
            GroundExpr::Binary(op, a, b) => {
                let a = a.eval(s, action)?;
                let b = b.eval(s, action)?;
                if *op == GroundBinOp::Div && b == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                op.apply(a, b)
            }
            GroundExpr::If(c, t, f) => {
                if truthy(c.eval(s, action)?) {
                    t.eval(s, action)?
                } else {
                    f.eval(s, action)?
                }
            }
            GroundExpr::Bernoulli(p) => {
                let p = p.eval(s, action)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(EvalError::BadProbability(p));
                }
                p
            }
            GroundExpr::KronDelta(e) => e.eval(s, action)?,
        };
        if !v.is_finite() {
            return Err(EvalError::NonFinite);
        }
        Ok(v)
    }

    /// Probability that a CPF root makes its variable true.
    pub fn prob_true(&self, s: &[bool], action: usize) -> Result<f64, EvalError> {
        match self {
            GroundExpr::Bernoulli(_) => self.eval(s, action),
            other => Ok(bool_value(truthy(other.eval(s, action)?))),
        }
    }

    /// Constant-fold bottom-up until nothing changes.
    pub fn simplify(self) -> Result<GroundExpr, EvalError> {
        let mut cur = self;
        loop {
            let next = cur.clone().fold()?;
            if next == cur {
                return Ok(next);
            }
            cur = next;
        }
    }

    fn fold(self) -> Result<GroundExpr, EvalError> {
        use GroundExpr as G;
        Ok(match self {
            G::Const(_) | G::State(_) | G::Action(_) => self,
            G::Not(e) => match e.fold()? {
                G::Const(c) => G::Const(bool_value(!truthy(c))),
                G::Not(inner) if inner.is_boolean() => *inner,
                e => G::Not(Box::new(e)),
            },
            G::Neg(e) => match e.fold()? {
                G::Const(c) => G::Const(-c),
                e => G::Neg(Box::new(e)),
            },
            G::And(es) => fold_logic(es, true)?,
            G::Or(es) => fold_logic(es, false)?,
            G::Sum(es) => {
                let mut konst = 0.0;
                let mut rest = Vec::new();
                for e in es {
                    match e.fold()? {
                        G::Const(c) => konst += c,
                        G::Sum(inner) => rest.extend(inner),
                        e => rest.push(e),
                    }
                }
                if konst != 0.0 || rest.is_empty() {
                    rest.push(G::Const(konst));
                }
                if rest.len() == 1 {
                    rest.pop().unwrap()
                } else {
                    G::Sum(rest)
                }
            }
            G::Product(es) => {
                let mut konst = 1.0;
                let mut rest = Vec::new();
                for e in es {
                    match e.fold()? {
                        G::Const(c) => konst *= c,
                        G::Product(inner) => rest.extend(inner),
                        e => rest.push(e),
                    }
                }
                // every subexpression is finite, so a zero factor decides the product
                if konst == 0.0 {
                    return Ok(G::Const(0.0));
                }
                if konst != 1.0 || rest.is_empty() {
                    rest.insert(0, G::Const(konst));
                }
                if rest.len() == 1 {
                    rest.pop().unwrap()
                } else {
                    G::Product(rest)
                }
            }
            G::Binary(op, a, b) => {
                let a = a.fold()?;
                let b = b.fold()?;
                match (op, a.constant(), b.constant()) {
                    (GroundBinOp::Div, _, Some(d)) if d == 0.0 => return Err(EvalError::DivisionByZero),
                    (_, Some(x), Some(y)) => G::Const(op.apply(x, y)),
                    (GroundBinOp::Sub, _, Some(y)) if y == 0.0 => a,
                    (GroundBinOp::Div, _, Some(y)) if y == 1.0 => a,
                    (GroundBinOp::Implies, Some(x), _) if !truthy(x) => G::Const(1.0),
                    (GroundBinOp::Implies, _, Some(y)) if truthy(y) => G::Const(1.0),
                    (GroundBinOp::Implies, Some(_), _) if b.is_boolean() => b,
                    (GroundBinOp::Implies, _, Some(_)) => G::Not(Box::new(a)),
                    _ => G::Binary(op, Box::new(a), Box::new(b)),
                }
            }
            G::If(c, t, f) => {
                let c = c.fold()?;
                match c.constant() {
                    Some(v) if truthy(v) => t.fold()?,
                    Some(_) => f.fold()?,
                    None => {
                        let t = t.fold()?;
                        let f = f.fold()?;
                        if t == f {
                            t
                        } else {
                            G::If(Box::new(c), Box::new(t), Box::new(f))
                        }
                    }
                }
            }
            G::Bernoulli(p) => G::Bernoulli(Box::new(p.fold()?)),
            G::KronDelta(e) => G::KronDelta(Box::new(e.fold()?)),
        })
    }

    /// Replace action references by their truth under `action` being the
    /// single executed action, then fold.
    pub fn specialize_action(&self, action: usize) -> Result<GroundExpr, EvalError> {
        self.map_leaves(&|e| match e {
            GroundExpr::Action(i) => Some(GroundExpr::Const(bool_value(*i == action))),
            _ => None,
        })
        .simplify()
    }

    fn map_leaves(&self, f: &impl Fn(&GroundExpr) -> Option<GroundExpr>) -> GroundExpr {
        use GroundExpr as G;
        if let Some(r) = f(self) {
            return r;
        }
        let b = |e: &GroundExpr| Box::new(e.map_leaves(f));
        let v = |es: &[GroundExpr]| es.iter().map(|e| e.map_leaves(f)).collect();
        match self {
            G::Const(_) | G::State(_) | G::Action(_) => self.clone(),
            G::Not(e) => G::Not(b(e)),
            G::Neg(e) => G::Neg(b(e)),
            G::And(es) => G::And(v(es)),
            G::Or(es) => G::Or(v(es)),
            G::Sum(es) => G::Sum(v(es)),
            G::Product(es) => G::Product(v(es)),
            G::Binary(op, x, y) => G::Binary(*op, b(x), b(y)),
            G::If(c, t, e) => G::If(b(c), b(t), b(e)),
            G::Bernoulli(e) => G::Bernoulli(b(e)),
            G::KronDelta(e) => G::KronDelta(b(e)),
        }
    }

    /// Visit every node, children after parents.
    pub fn visit(&self, f: &mut impl FnMut(&GroundExpr)) {
        use GroundExpr as G;
        f(self);
        match self {
            G::Const(_) | G::State(_) | G::Action(_) => {}
            G::Not(e) | G::Neg(e) | G::Bernoulli(e) | G::KronDelta(e) => e.visit(f),
            G::And(es) | G::Or(es) | G::Sum(es) | G::Product(es) => es.iter().for_each(|e| e.visit(f)),
            G::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            G::If(c, t, e) => {
                c.visit(f);
                t.visit(f);
                e.visit(f);
            }
        }
    }

    /// State variables referenced anywhere in the tree.
    pub fn state_refs(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let GroundExpr::State(i) = e {
                out.insert(*i);
            }
        });
        out
    }

    /// Ground actions referenced anywhere in the tree.
    pub fn action_refs(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let GroundExpr::Action(i) = e {
                out.insert(*i);
            }
        });
        out
    }
}

fn fold_logic(es: Vec<GroundExpr>, is_and: bool) -> Result<GroundExpr, EvalError> {
    // identity element: true for AND, false for OR
    let mut rest = Vec::new();
    for e in es {
        let e = e.fold()?;
        match (&e, is_and) {
            (GroundExpr::Const(c), true) if !truthy(*c) => return Ok(GroundExpr::Const(0.0)),
            (GroundExpr::Const(c), false) if truthy(*c) => return Ok(GroundExpr::Const(1.0)),
            (GroundExpr::Const(_), _) => {}
            (GroundExpr::And(inner), true) | (GroundExpr::Or(inner), false) => rest.extend(inner.iter().cloned()),
            _ => {
                if !rest.contains(&e) {
                    rest.push(e)
                }
            }
        }
    }
    Ok(match rest.len() {
        0 => GroundExpr::Const(bool_value(is_and)),
        1 if rest[0].is_boolean() => rest.pop().unwrap(),
        _ if is_and => GroundExpr::And(rest),
        _ => GroundExpr::Or(rest),
    })
}
