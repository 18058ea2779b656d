use std::collections::BTreeMap;

use thiserror::Error;

use crate::ground::{EvalError, GroundMdp};

/// Largest number of state variables the exact solvers accept.
pub const MAX_ORACLE_VARS: usize = 20;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{0} state variables exceed the exact-solver cap of {MAX_ORACLE_VARS}")]
    TooLarge(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// `V*(s₀)` over the instance horizon.
    pub value: f64,
    /// Optimal first-step action per state (bit `i` of the index is
    /// variable `i`); lowest action index on ties.
    pub policy: Vec<usize>,
    /// `V*_0` for every state.
    pub values: Vec<f64>,
}

pub fn state_index(state: &[bool]) -> usize {
    state.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| 1 << i).sum()
}

pub fn state_of(index: usize, n: usize) -> Vec<bool> {
    (0..n).map(|i| index >> i & 1 == 1).collect()
}

/// Successor distribution of independent Bernoulli variables with
/// parameters `probs`, skipping zero-probability outcomes.
pub fn successors(probs: &[f64], out: &mut Vec<(usize, f64)>) {
    out.clear();
    let mut base = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p >= 1.0 {
            base |= 1 << i;
        }
    }
    out.push((base, 1.0));
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 || p >= 1.0 {
            continue;
        }
        let len = out.len();
        for k in 0..len {
            let (idx, q) = out[k];
            out[k] = (idx, q * (1.0 - p));
            out.push((idx | 1 << i, q * p));
        }
    }
}

fn check(mdp: &GroundMdp) -> Result<usize, OracleError> {
    let n = mdp.num_state_vars();
    if n > MAX_ORACLE_VARS {
        return Err(OracleError::TooLarge(n));
    }
    Ok(n)
}

/// Finite-horizon backward induction over the full state space.
pub fn value_iteration(mdp: &GroundMdp) -> Result<OracleResult, OracleError> {
    value_iteration_for(mdp, mdp.horizon, mdp.discount)
}

/// [`value_iteration`] with an explicit horizon and discount.
pub fn value_iteration_for(mdp: &GroundMdp, horizon: u32, gamma: f64) -> Result<OracleResult, OracleError> {
    let n = check(mdp)?;
    let size = 1usize << n;
    let mut next = vec![0.0; size];
    let mut cur = vec![0.0; size];
    let mut policy = vec![0; size];
    let mut probs = Vec::with_capacity(n);
    let mut succ = Vec::new();
    for _ in 0..horizon {
        for (si, slot) in cur.iter_mut().enumerate() {
            let s = state_of(si, n);
            let mut best = f64::NEG_INFINITY;
            for a in 0..mdp.num_actions() {
                mdp.next_probs(&s, a, &mut probs)?;
                successors(&probs, &mut succ);
                let q = mdp.reward(&s, a)? + gamma * succ.iter().map(|&(j, p)| p * next[j]).sum::<f64>();
                if q > best {
                    best = q;
                    policy[si] = a;
                }
            }
            *slot = best;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    if horizon == 0 {
        policy.fill(0);
    }
    Ok(OracleResult {
        value: next[state_index(&mdp.init_state)],
        policy,
        values: next,
    })
}

/// Exact expected return of a stationary stochastic policy from `s₀`.
/// `policy` maps a state to a distribution over ground actions.
pub fn policy_value(
    mdp: &GroundMdp,
    horizon: u32,
    gamma: f64,
    mut policy: impl FnMut(&[bool]) -> Vec<f64>,
) -> Result<f64, OracleError> {
    let n = check(mdp)?;
    let size = 1usize << n;
    let table: Vec<Vec<f64>> = (0..size).map(|si| policy(&state_of(si, n))).collect();
    // Expected one-step reward and successor lists are time-independent.
    let mut rewards = vec![0.0; size];
    let mut trans: Vec<Vec<(usize, f64)>> = vec![Vec::new(); size];
    let mut probs = Vec::with_capacity(n);
    let mut succ = Vec::new();
    for si in 0..size {
        let s = state_of(si, n);
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (a, &pa) in table[si].iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            rewards[si] += pa * mdp.reward(&s, a)?;
            mdp.next_probs(&s, a, &mut probs)?;
            successors(&probs, &mut succ);
            for &(j, p) in &succ {
                *merged.entry(j).or_insert(0.0) += pa * p;
            }
        }
        trans[si] = merged.into_iter().collect();
    }
    let mut v = vec![0.0; size];
    for _ in 0..horizon {
        v = (0..size)
            .map(|si| rewards[si] + gamma * trans[si].iter().map(|&(j, p)| p * v[j]).sum::<f64>())
            .collect();
    }
    Ok(v[state_index(&mdp.init_state)])
}
