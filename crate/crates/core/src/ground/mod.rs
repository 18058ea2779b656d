//! Grounding of a validated model into an explicit factored MDP.

mod dbn;
mod expr;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::rddl::{AggregateOp, BinaryOp, DomainAst, Expr, PvarKind, Term, TypedModel, UnaryOp};

pub use dbn::{extract_dbn, Dbn};
pub use expr::{EvalError, GroundBinOp, GroundExpr};

/// An object tuple, e.g. `(x1, y1)`.
pub type Tuple = Vec<String>;

#[derive(Debug, Error)]
pub enum GroundError {
    #[error("CPF of `{target}` is undefined after grounding: {source}")]
    UndefinedCpf { target: String, source: EvalError },
    #[error("reward is undefined after grounding: {0}")]
    UndefinedReward(EvalError),
    #[error("unknown ground action index {0}")]
    UnknownAction(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroundStateVar {
    pub symbol: String,
    /// Position of the symbol among the domain's state-fluents.
    pub symbol_index: usize,
    pub args: Tuple,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroundAction {
    /// `None` for NOOP.
    pub symbol: Option<String>,
    /// Position of the symbol among the domain's action-fluents.
    pub symbol_index: Option<usize>,
    pub args: Tuple,
    pub index: usize,
}

fn fmt_app(f: &mut fmt::Formatter<'_>, symbol: &str, args: &[String]) -> fmt::Result {
    if args.is_empty() {
        f.write_str(symbol)
    } else {
        write!(f, "{}({})", symbol, args.join(","))
    }
}

impl fmt::Display for GroundStateVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_app(f, &self.symbol, &self.args)
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.symbol {
            None => f.write_str("noop"),
            Some(s) => fmt_app(f, s, &self.args),
        }
    }
}

impl GroundAction {
    pub fn is_noop(&self) -> bool {
        self.symbol.is_none()
    }
}

/// The ground MDP of one instance.
#[derive(Debug, Clone)]
pub struct GroundMdp {
    pub domain: DomainAst,
    pub instance_name: String,
    /// State-fluent symbols in declaration order.
    pub fluent_symbols: Vec<String>,
    /// Non-fluent symbols in declaration order.
    pub nonfluent_symbols: Vec<String>,
    /// Action-fluent symbols in declaration order.
    pub action_symbols: Vec<String>,
    pub state_vars: Vec<GroundStateVar>,
    /// Index 0 is NOOP.
    pub actions: Vec<GroundAction>,
    /// Ground CPF per state variable, index-aligned with `state_vars`.
    pub cpfs: Vec<GroundExpr>,
    pub reward: GroundExpr,
    pub init_state: Vec<bool>,
    pub horizon: u32,
    pub discount: f64,
    pub o_f: Vec<Tuple>,
    pub o_nf: Vec<Tuple>,
    pub o_a: Vec<Tuple>,
    objects: HashMap<String, Vec<String>>,
    nonfluents: HashMap<(String, Tuple), f64>,
    state_index: HashMap<(String, Tuple), usize>,
    action_index: HashMap<(String, Tuple), usize>,
}

impl GroundMdp {
    pub fn num_state_vars(&self) -> usize {
        self.state_vars.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn state_var(&self, symbol: &str, args: &[&str]) -> Option<usize> {
        let key = (symbol.to_string(), args.iter().map(|s| s.to_string()).collect());
        self.state_index.get(&key).copied()
    }

    pub fn action(&self, symbol: &str, args: &[&str]) -> Option<usize> {
        let key = (symbol.to_string(), args.iter().map(|s| s.to_string()).collect());
        self.action_index.get(&key).copied()
    }

    /// Objects of a class in instance declaration order.
    pub fn objects_of(&self, class: &str) -> &[String] {
        self.objects.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Value of a non-fluent on a tuple: the instance assignment, else the
    /// domain default. `None` if the symbol is not a non-fluent or the tuple
    /// is not type-consistent.
    pub fn nonfluent_value(&self, symbol: &str, args: &[String]) -> Option<f64> {
        let decl = self.domain.pvariable(symbol)?;
        if decl.kind != PvarKind::NonFluent || !self.type_consistent(&decl.params, args) {
            return None;
        }
        Some(
            self.nonfluents
                .get(&(symbol.to_string(), args.to_vec()))
                .copied()
                .unwrap_or_else(|| decl.default.as_f64()),
        )
    }

    /// True when `args` is an instantiation of the parameter types `params`.
    pub fn type_consistent(&self, params: &[String], args: &[String]) -> bool {
        params.len() == args.len()
            && params
                .iter()
                .zip(args)
                .all(|(ty, o)| self.objects_of(ty).iter().any(|x| x == o))
    }

    /// Immediate reward of executing `action` in `state`.
    pub fn reward(&self, state: &[bool], action: usize) -> Result<f64, EvalError> {
        self.reward.eval(state, action)
    }

    /// Probability that each next-state variable is true.
    pub fn next_probs(&self, state: &[bool], action: usize, out: &mut Vec<f64>) -> Result<(), EvalError> {
        out.clear();
        for cpf in &self.cpfs {
            out.push(cpf.prob_true(state, action)?);
        }
        Ok(())
    }

    pub fn state_var_names(&self) -> Vec<String> {
        self.state_vars.iter().map(ToString::to_string).collect()
    }

    pub fn action_names(&self) -> Vec<String> {
        self.actions.iter().map(ToString::to_string).collect()
    }
}

fn cartesian(pools: &[&[String]]) -> Vec<Tuple> {
    let mut out: Vec<Tuple> = vec![Vec::new()];
    for pool in pools {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                pool.iter().map(move |o| {
                    let mut t = prefix.clone();
                    t.push(o.clone());
                    t
                })
            })
            .collect();
    }
    out
}

struct Grounder<'a> {
    mdp: &'a GroundMdp,
}

impl Grounder<'_> {
    fn resolve(&self, term: &Term, env: &[(String, String)]) -> String {
        match term {
            Term::Object(o) => o.clone(),
            Term::Var(v) => env
                .iter()
                .rev()
                .find(|(name, _)| name == v)
                .map(|(_, o)| o.clone())
                .expect("validated variable is bound"),
        }
    }

    fn ground(&self, e: &Expr, env: &mut Vec<(String, String)>) -> GroundExpr {
        use GroundExpr as G;
        match e {
            Expr::Bool(b) => G::Const(f64::from(u8::from(*b))),
            Expr::Real(r) => G::Const(*r),
            Expr::Term(..) => unreachable!("validation rejects bare terms"),
            Expr::Apply { name, args, .. } => {
                let args: Tuple = args.iter().map(|t| self.resolve(t, env)).collect();
                let decl = self.mdp.domain.pvariable(name).expect("validated symbol");
                match decl.kind {
                    PvarKind::NonFluent => G::Const(self.mdp.nonfluent_value(name, &args).expect("validated tuple")),
                    PvarKind::StateFluent => G::State(self.mdp.state_index[&(name.clone(), args)]),
                    PvarKind::ActionFluent => G::Action(self.mdp.action_index[&(name.clone(), args)]),
                }
            }
            Expr::Unary { op, arg } => {
                let a = Box::new(self.ground(arg, env));
                match op {
                    UnaryOp::Not => G::Not(a),
                    UnaryOp::Neg => G::Neg(a),
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                if let (Expr::Term(a, _), Expr::Term(b, _)) = (lhs.as_ref(), rhs.as_ref()) {
                    let eq = self.resolve(a, env) == self.resolve(b, env);
                    let v = if *op == BinaryOp::Eq { eq } else { !eq };
                    return G::Const(f64::from(u8::from(v)));
                }
                let a = self.ground(lhs, env);
                let b = self.ground(rhs, env);
                match op {
                    BinaryOp::And => G::And(vec![a, b]),
                    BinaryOp::Or => G::Or(vec![a, b]),
                    BinaryOp::Add => G::Sum(vec![a, b]),
                    BinaryOp::Mul => G::Product(vec![a, b]),
                    other => G::Binary(
                        GroundBinOp::from_ast(*other).expect("n-ary operators handled above"),
                        Box::new(a),
                        Box::new(b),
                    ),
                }
            }
            Expr::If {
                cond,
                then_branch,
                else_branch,
            } => G::If(
                Box::new(self.ground(cond, env)),
                Box::new(self.ground(then_branch, env)),
                Box::new(self.ground(else_branch, env)),
            ),
            Expr::Aggregate { op, var, ty, body, .. } => {
                let mut items = Vec::new();
                for o in self.mdp.objects_of(ty) {
                    env.push((var.clone(), o.clone()));
                    items.push(self.ground(body, env));
                    env.pop();
                }
                match op {
                    AggregateOp::Forall => G::And(items),
                    AggregateOp::Exists => G::Or(items),
                    AggregateOp::Sum => G::Sum(items),
                    AggregateOp::Prod => G::Product(items),
                }
            }
            Expr::Bernoulli(p) => G::Bernoulli(Box::new(self.ground(p, env))),
            Expr::KronDelta(p) => G::KronDelta(Box::new(self.ground(p, env))),
        }
    }
}

/// Expand a validated model into its ground MDP.
pub fn ground(model: &TypedModel) -> Result<GroundMdp, GroundError> {
    let domain = &model.domain;
    let inst = &model.instance;

    let mut objects: HashMap<String, Vec<String>> = HashMap::new();
    for t in &domain.types {
        objects.insert(t.name.clone(), inst.objects_of(&t.name).into_iter().map(String::from).collect());
    }
    let tuples_of = |params: &[String]| {
        let pools: Vec<&[String]> = params.iter().map(|p| objects[p].as_slice()).collect();
        cartesian(&pools)
    };
    let names = |kind| domain.pvariables_of(kind).map(|p| p.name.clone()).collect::<Vec<_>>();
    let fluent_symbols = names(PvarKind::StateFluent);
    let nonfluent_symbols = names(PvarKind::NonFluent);
    let action_symbols = names(PvarKind::ActionFluent);

    let mut svars: Vec<(String, Tuple)> = Vec::new();
    let mut o_f = BTreeSet::new();
    for p in domain.pvariables_of(PvarKind::StateFluent) {
        for t in tuples_of(&p.params) {
            o_f.insert(t.clone());
            svars.push((p.name.clone(), t));
        }
    }
    svars.sort();
    let state_vars: Vec<GroundStateVar> = svars
        .into_iter()
        .enumerate()
        .map(|(index, (symbol, args))| GroundStateVar {
            symbol_index: fluent_symbols.iter().position(|s| *s == symbol).unwrap(),
            symbol,
            args,
            index,
        })
        .collect();

    let mut acts: Vec<(String, Tuple)> = Vec::new();
    let mut o_a = BTreeSet::new();
    for p in domain.pvariables_of(PvarKind::ActionFluent) {
        for t in tuples_of(&p.params) {
            o_a.insert(t.clone());
            acts.push((p.name.clone(), t));
        }
    }
    acts.sort();
    let mut actions = vec![GroundAction {
        symbol: None,
        symbol_index: None,
        args: Vec::new(),
        index: 0,
    }];
    for (i, (symbol, args)) in acts.into_iter().enumerate() {
        actions.push(GroundAction {
            symbol_index: action_symbols.iter().position(|s| *s == symbol),
            symbol: Some(symbol),
            args,
            index: i + 1,
        });
    }

    let mut o_nf = BTreeSet::new();
    for p in domain.pvariables_of(PvarKind::NonFluent) {
        o_nf.extend(tuples_of(&p.params));
    }

    let nonfluents = inst
        .non_fluents
        .iter()
        .map(|a| ((a.name.clone(), a.args.clone()), a.value.as_f64()))
        .collect();
    let state_index = state_vars
        .iter()
        .map(|v| ((v.symbol.clone(), v.args.clone()), v.index))
        .collect();
    let action_index = actions
        .iter()
        .filter_map(|a| Some(((a.symbol.clone()?, a.args.clone()), a.index)))
        .collect();

    let mut mdp = GroundMdp {
        domain: domain.clone(),
        instance_name: inst.name.clone(),
        fluent_symbols,
        nonfluent_symbols,
        action_symbols,
        state_vars,
        actions,
        cpfs: Vec::new(),
        reward: GroundExpr::Const(0.0),
        init_state: Vec::new(),
        horizon: inst.horizon,
        discount: inst.discount,
        o_f: o_f.into_iter().collect(),
        o_nf: o_nf.into_iter().collect(),
        o_a: o_a.into_iter().collect(),
        objects,
        nonfluents,
        state_index,
        action_index,
    };

    let g = Grounder { mdp: &mdp };
    let mut cpfs = Vec::with_capacity(mdp.state_vars.len());
    for v in &mdp.state_vars {
        let cpf = domain.cpf(&v.symbol).expect("validated CPF");
        let mut env: Vec<(String, String)> = cpf.params.iter().cloned().zip(v.args.iter().cloned()).collect();
        let e = g.ground(&cpf.expr, &mut env).simplify().map_err(|source| GroundError::UndefinedCpf {
            target: v.to_string(),
            source,
        })?;
        cpfs.push(e);
    }
    let reward = g
        .ground(&domain.reward, &mut Vec::new())
        .simplify()
        .map_err(GroundError::UndefinedReward)?;

    let mut init: Vec<bool> = mdp
        .state_vars
        .iter()
        .map(|v| domain.pvariable(&v.symbol).unwrap().default.as_f64() != 0.0)
        .collect();
    for a in &inst.init_state {
        let idx = mdp.state_index[&(a.name.clone(), a.args.clone())];
        init[idx] = a.value.as_f64() != 0.0;
    }

    mdp.cpfs = cpfs;
    mdp.reward = reward;
    mdp.init_state = init;
    Ok(mdp)
}

#[cfg(test)]
mod tests;
