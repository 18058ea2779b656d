use std::sync::Arc;

use thiserror::Error;

use super::{DomainModel, HeadParams, InstanceContext, ValueMode};
use crate::autodiff::{Scalar, Tape, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("no actions to score")]
    Empty,
    #[error("logit {0} is NaN")]
    NaN(usize),
}

/// Per-action decoder inputs, shared by the policy and value heads.
#[derive(Debug, Clone)]
pub struct DecoderInputs {
    pub sbar: Var,
    /// Per action symbol, `m × 2·embed` rows `[s̄ ‖ pooled ō]` for its `m`
    /// ground actions; `None` when the symbol has no ground action.
    pub per_symbol: Vec<Option<Var>>,
}

pub fn decoder_inputs<T: Scalar>(tape: &mut Tape<T>, ctx: &InstanceContext, sbar: Var, tuples: Var) -> DecoderInputs {
    let per_symbol = ctx
        .symbol_actions
        .iter()
        .map(|acts| {
            if acts.is_empty() {
                return None;
            }
            let groups: Vec<Vec<usize>> = acts.iter().map(|&a| ctx.pools[a].clone()).collect();
            Some(pooled_input(tape, sbar, tuples, &groups))
        })
        .collect();
    DecoderInputs { sbar, per_symbol }
}

fn pooled_input<T: Scalar>(tape: &mut Tape<T>, sbar: Var, tuples: Var, groups: &[Vec<usize>]) -> Var {
    let pooled = tape.max_pool_groups(tuples, groups);
    let s = tape.gather_rows(sbar, Arc::new(vec![0; groups.len()]));
    tape.concat_cols(&[s, pooled])
}

/// Two-layer head applied row-wise: `leaky(x W1 + b1) W2 + b2`.
pub fn apply_head<T: Scalar>(tape: &mut Tape<T>, p: &[Var], head: &HeadParams, x: Var, slope: T) -> Var {
    let h = tape.matmul(x, p[head.w1]);
    let h = tape.add(h, p[head.b1]);
    let h = tape.leaky_relu(h, slope);
    let o = tape.matmul(h, p[head.w2]);
    tape.add(o, p[head.b2])
}

/// `1 × |actions|` logits in ground-action order.
pub fn score_actions<T: Scalar>(
    tape: &mut Tape<T>,
    model: &DomainModel,
    p: &[Var],
    ctx: &InstanceContext,
    inputs: &DecoderInputs,
) -> Var {
    let slope = T::of(model.config.leaky_slope);
    let mut rows = vec![apply_head(tape, p, &model.layout.noop_heads.0, inputs.sbar, slope)];
    for (j, x) in inputs.per_symbol.iter().enumerate() {
        if let Some(x) = x {
            rows.push(apply_head(tape, p, &model.layout.symbol_heads[j].0, *x, slope));
        }
    }
    let stacked = tape.concat_rows(&rows);
    let ordered = tape.gather_rows(stacked, ctx.action_rows.clone());
    tape.transpose(ordered)
}

/// `1 × 1` state value.
pub fn state_value<T: Scalar>(
    tape: &mut Tape<T>,
    model: &DomainModel,
    p: &[Var],
    ctx: &InstanceContext,
    inputs: &DecoderInputs,
    tuples: Var,
) -> Var {
    let slope = T::of(model.config.leaky_slope);
    let mut rows = vec![apply_head(tape, p, &model.layout.noop_heads.1, inputs.sbar, slope)];
    for (j, x) in inputs.per_symbol.iter().enumerate() {
        let x = match model.config.value_mode {
            ValueMode::PerAction => match x {
                Some(x) => *x,
                None => continue,
            },
            ValueMode::PerSymbol => {
                let mut union: Vec<usize> = ctx.symbol_actions[j].iter().flat_map(|&a| ctx.pools[a].iter().copied()).collect();
                union.sort_unstable();
                union.dedup();
                pooled_input(tape, inputs.sbar, tuples, &[union])
            }
        };
        rows.push(apply_head(tape, p, &model.layout.symbol_heads[j].1, x, slope));
    }
    let stacked = tape.concat_rows(&rows);
    tape.sum(stacked)
}

/// Softmax in `f64`.
pub fn policy(logits: &[f64]) -> Result<Vec<f64>, PolicyError> {
    if logits.is_empty() {
        return Err(PolicyError::Empty);
    }
    if let Some(i) = logits.iter().position(|x| x.is_nan()) {
        return Err(PolicyError::NaN(i));
    }
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&x| (x - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|x| x / z).collect())
}

/// Index of the largest score; lowest index on ties.
pub fn greedy(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in scores.iter().enumerate() {
        if x > scores[best] {
            best = i;
        }
    }
    best
}
