//! Policy evaluation, normalized metrics and exact oracles for tiny instances.

mod oracle;

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Params;
use crate::ground::GroundMdp;
use crate::model::{DomainModel, InstanceContext};
use crate::sim::{rollout, RngStream, SimError};

pub use oracle::{
    policy_value, state_index, state_of, successors, value_iteration, value_iteration_for, OracleError, OracleResult,
    MAX_ORACLE_VARS,
};

pub const DEFAULT_ROLLOUTS: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("V_max equals V_min ({0})")]
    DegenerateRange(f64),
}

/// α: position of `v` between `v_min` and `v_max`.
pub fn alpha(v: f64, v_min: f64, v_max: f64) -> Result<f64, MetricError> {
    if v_max == v_min {
        return Err(MetricError::DegenerateRange(v_max));
    }
    Ok((v - v_min) / (v_max - v_min))
}

/// Ratio of a reference α to a competitor's α. A competitor α of zero
/// means it attained the minimum and the ratio is reported as `INF`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta {
    Ratio(f64),
    Inf,
}

pub fn beta(alpha_reference: f64, alpha_other: f64) -> Beta {
    if alpha_other == 0.0 {
        Beta::Inf
    } else {
        Beta::Ratio(alpha_reference / alpha_other)
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Ratio(x) => write!(f, "{x:.4}"),
            Beta::Inf => f.write_str("INF"),
        }
    }
}

impl Serialize for Beta {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Beta::Ratio(x) => s.serialize_f64(*x),
            Beta::Inf => s.serialize_str("INF"),
        }
    }
}

/// Per-instance bounds used for α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub v_min: f64,
    pub v_max: f64,
}

/// Baseline manifest: `{instance_id: {v_min, v_max}}`.
pub type BaselineManifest = BTreeMap<String, Bounds>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub instance: String,
    pub mean: f64,
    pub std_error: f64,
    pub rollouts: usize,
    pub seed: u64,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Beta>,
}

impl EvalReport {
    fn from_returns(instance: &str, returns: &[f64], seed: u64, gamma: f64) -> Self {
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let std_error = if returns.len() > 1 {
            let var = returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        EvalReport {
            instance: instance.to_string(),
            mean,
            std_error,
            rollouts: returns.len(),
            seed,
            gamma,
            alpha: None,
            beta: None,
        }
    }

    /// Fill α from `bounds` and, given a reference α, β.
    pub fn with_metrics(mut self, bounds: Bounds, alpha_reference: Option<f64>) -> Result<Self, MetricError> {
        let a = alpha(self.mean, bounds.v_min, bounds.v_max)?;
        self.alpha = Some(a);
        self.beta = alpha_reference.map(|r| beta(r, a));
        Ok(self)
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "instance   {}\nrollouts   {}\nseed       {}\ngamma      {}\nmean       {:.6}\nstd error  {:.6}\n",
            self.instance, self.rollouts, self.seed, self.gamma, self.mean, self.std_error
        );
        if let Some(a) = self.alpha {
            s += &format!("alpha      {a:.6}\n");
        }
        if let Some(b) = self.beta {
            s += &format!("beta       {b}\n");
        }
        s
    }
}

/// Monte-Carlo returns of `policy`; rollout `i` uses stream `2i` of `seed`
/// for the environment. `policy` gets the rollout index and may use stream
/// `2i + 1` for its own draws.
fn monte_carlo(
    mdp: &GroundMdp,
    rollouts: usize,
    seed: u64,
    gamma: f64,
    mut policy: impl FnMut(usize, &[bool]) -> usize,
) -> Result<Vec<f64>, SimError> {
    (0..rollouts)
        .map(|i| {
            let mut rng = RngStream::new(seed, 2 * i as u64);
            rollout(mdp, |s| policy(i, s), mdp.horizon, gamma, &mut rng, None)
        })
        .collect()
}

/// Greedy rollouts of a trained network.
pub fn evaluate(
    model: &DomainModel,
    params: &Params<f32>,
    ctx: &InstanceContext,
    rollouts: usize,
    seed: u64,
    gamma: f64,
) -> Result<EvalReport, SimError> {
    assert!(rollouts >= 1, "at least one rollout");
    let returns = monte_carlo(&ctx.mdp, rollouts, seed, gamma, |_, s| model.greedy_action(params, ctx, s))?;
    Ok(EvalReport::from_returns(&ctx.mdp.instance_name, &returns, seed, gamma))
}

/// Rollouts of the uniform policy over every ground action, NOOP included.
pub fn random_baseline(mdp: &GroundMdp, rollouts: usize, seed: u64, gamma: f64) -> Result<EvalReport, SimError> {
    assert!(rollouts >= 1, "at least one rollout");
    let n = mdp.num_actions();
    let mut current = usize::MAX;
    let mut act = RngStream::new(seed, 1);
    let returns = monte_carlo(mdp, rollouts, seed, gamma, |i, _| {
        if i != current {
            current = i;
            act = RngStream::new(seed, 2 * i as u64 + 1);
        }
        act.rng().gen_range(0..n)
    })?;
    Ok(EvalReport::from_returns(&mdp.instance_name, &returns, seed, gamma))
}

/// Exact value of the greedy network policy, for instances within the
/// oracle cap.
pub fn greedy_policy_value(
    model: &DomainModel,
    params: &Params<f32>,
    ctx: &InstanceContext,
    gamma: f64,
) -> Result<f64, OracleError> {
    let n = ctx.num_actions();
    policy_value(&ctx.mdp, ctx.mdp.horizon, gamma, |s| {
        let mut d = vec![0.0; n];
        d[model.greedy_action(params, ctx, s)] = 1.0;
        d
    })
}

/// Exact value of the uniform random policy.
pub fn random_policy_value(mdp: &GroundMdp, gamma: f64) -> Result<f64, OracleError> {
    let n = mdp.num_actions();
    policy_value(mdp, mdp.horizon, gamma, |_| vec![1.0 / n as f64; n])
}
