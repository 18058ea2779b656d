//! Sampling simulator over a ground MDP.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ground::{EvalError, GroundMdp};

/// One boolean per ground state variable, index-aligned.
pub type State = Vec<bool>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("action index {0} out of range")]
    UnknownAction(usize),
    #[error("state has {got} variables, expected {want}")]
    StateLength { got: usize, want: usize },
    #[error("non-finite reward {0}")]
    NonFiniteReward(f64),
    #[error("trajectory log: {0}")]
    Io(#[from] std::io::Error),
}

/// Seeded ChaCha stream. Distinct `stream` ids under one seed never overlap.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen()
    }

    /// Index drawn from `probs` by inverse CDF; the last index absorbs
    /// rounding slack.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub state: State,
    pub action: usize,
    pub reward: f64,
    pub next: State,
}

/// Sample `s'` and evaluate the reward on `(s, a)`. One uniform draw is
/// consumed per state variable, degenerate or not.
pub fn step(mdp: &GroundMdp, state: &[bool], action: usize, rng: &mut RngStream) -> Result<(State, f64), SimError> {
    if state.len() != mdp.num_state_vars() {
        return Err(SimError::StateLength {
            got: state.len(),
            want: mdp.num_state_vars(),
        });
    }
    if action >= mdp.num_actions() {
        return Err(SimError::UnknownAction(action));
    }
    let reward = mdp.reward(state, action)?;
    if !reward.is_finite() {
        return Err(SimError::NonFiniteReward(reward));
    }
    let mut next = Vec::with_capacity(state.len());
    for cpf in &mdp.cpfs {
        let p = cpf.prob_true(state, action)?;
        next.push(rng.uniform() < p);
    }
    Ok((next, reward))
}

/// Run `policy` from the initial state for `horizon` steps and return
/// `Σ γ^t r_t`. With `log`, each step is written as
/// `t \t action \t reward \t changed vars`.
pub fn rollout(
    mdp: &GroundMdp,
    mut policy: impl FnMut(&[bool]) -> usize,
    horizon: u32,
    gamma: f64,
    rng: &mut RngStream,
    mut log: Option<&mut dyn Write>,
) -> Result<f64, SimError> {
    let mut state = mdp.init_state.clone();
    let mut ret = 0.0;
    let mut disc = 1.0;
    for t in 0..horizon {
        let a = policy(&state);
        let (next, r) = step(mdp, &state, a, rng)?;
        if let Some(w) = log.as_deref_mut() {
            let changed: Vec<String> = (0..next.len())
                .filter(|&i| next[i] != state[i])
                .map(|i| format!("{}={}", mdp.state_vars[i], next[i]))
                .collect();
            writeln!(w, "{t}\t{}\t{r}\t{}", mdp.actions[a], changed.join(","))?;
        }
        ret += disc * r;
        disc *= gamma;
        state = next;
    }
    Ok(ret)
}

/// Full trajectory of `policy` from the initial state.
pub fn trajectory(
    mdp: &GroundMdp,
    mut policy: impl FnMut(&[bool]) -> usize,
    horizon: u32,
    rng: &mut RngStream,
) -> Result<Vec<StepRecord>, SimError> {
    let mut state = mdp.init_state.clone();
    let mut out = Vec::with_capacity(horizon as usize);
    for _ in 0..horizon {
        let action = policy(&state);
        let (next, reward) = step(mdp, &state, action, rng)?;
        out.push(StepRecord {
            state: std::mem::replace(&mut state, next.clone()),
            action,
            reward,
            next,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::ground::ground;
    use crate::rddl::{parse_domain, parse_instance, validate};

    fn build(domain: &str, instance: &str) -> GroundMdp {
        let d = parse_domain(domain).unwrap();
        let i = parse_instance(instance).unwrap();
        ground(&validate(&d, &i).unwrap()).unwrap()
    }

    /// One variable flipping on with 0.3 when off and staying on with 0.8.
    const CHAIN: &str = "domain chain {
        pvariables { on : { state-fluent, bool, default = false }; };
        cpfs { on' = Bernoulli(if (on) then 0.8 else 0.3); };
        reward = if (on) then 1.0 else 0.0; }";

    #[test]
    fn bernoulli_frequency_within_three_sigma() {
        let m = build(CHAIN, "instance c { domain = chain; horizon = 1; }");
        let mut rng = RngStream::new(7, 0);
        let n = 10_000;
        let hits = (0..n).filter(|_| step(&m, &[false], 0, &mut rng).unwrap().0[0]).count();
        let p = 0.3;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 3.0 * sigma, "{hits}");
    }

    #[test]
    fn chain_value_matches_closed_form() {
        let m = build(CHAIN, "instance c { domain = chain; horizon = 5; discount = 0.9; }");
        // V_t(s) = r(s) + γ (P(on'|s) V_{t-1}(on) + P(off'|s) V_{t-1}(off))
        let (mut v_off, mut v_on) = (0.0, 0.0);
        for _ in 0..5 {
            (v_off, v_on) = (0.9 * (0.3 * v_on + 0.7 * v_off), 1.0 + 0.9 * (0.8 * v_on + 0.2 * v_off));
        }
        let mut rng = RngStream::new(1, 0);
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| rollout(&m, |_| 0, 5, 0.9, &mut rng, None).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - v_off).abs() < 3.0 * se, "{mean} vs {v_off} (se {se})");
    }

    #[test]
    fn horizon_zero_and_constant_reward() {
        let m = build(
            "domain k { pvariables { p : { state-fluent, bool, default = false }; };
             cpfs { p' = KronDelta(p); }; reward = -1; }",
            "instance k { domain = k; horizon = 5; }",
        );
        let mut rng = RngStream::new(0, 0);
        assert_eq!(rollout(&m, |_| 0, 0, 1.0, &mut rng, None).unwrap(), 0.0);
        assert_eq!(rollout(&m, |_| 0, 5, 1.0, &mut rng, None).unwrap(), -5.0);
    }

    #[test]
    fn identity_dynamics_keep_state() {
        let m = build(
            "domain id { pvariables { p : { state-fluent, bool, default = false };
                                      q : { state-fluent, bool, default = false }; };
             cpfs { p' = KronDelta(p); q' = KronDelta(q); }; reward = p + 0.5 * q; }",
            "instance i { domain = id; init-state { p; }; horizon = 3; }",
        );
        let mut rng = RngStream::new(3, 0);
        let (s, r) = step(&m, &[true, false], 0, &mut rng).unwrap();
        assert_eq!(s, [true, false]);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn put_out_extinguishes_with_certainty() {
        let m = ground(&corpus::load(corpus::MINI_WILDFIRE, corpus::MINI_WILDFIRE_2X1).unwrap()).unwrap();
        let b = m.state_var("burning", &["x1", "y1"]).unwrap();
        let a = m.action("put-out", &["x1", "y1"]).unwrap();
        let mut s = vec![false; 4];
        s[b] = true;
        for seed in 0..50 {
            let (next, _) = step(&m, &s, a, &mut RngStream::new(seed, 0)).unwrap();
            assert!(!next[b]);
        }
    }

    #[test]
    fn degenerate_outcomes_ignore_the_draws() {
        let m = ground(&corpus::load(corpus::MINI_WILDFIRE, corpus::MINI_WILDFIRE_2X1).unwrap()).unwrap();
        // nothing burns, so every CPF is deterministic
        let s = vec![false; 4];
        let outcomes: Vec<State> = (0..20).map(|seed| step(&m, &s, 0, &mut RngStream::new(seed, 0)).unwrap().0).collect();
        assert!(outcomes.iter().all(|o| o == &outcomes[0]));
    }

    #[test]
    fn rollouts_are_deterministic_per_seed() {
        let m = ground(&corpus::load(corpus::WILDFIRE, corpus::WILDFIRE_3X3).unwrap()).unwrap();
        let n = m.num_actions();
        let run = |seed| {
            let mut rng = RngStream::new(seed, 2);
            let mut pol = RngStream::new(seed, 3);
            trajectory(&m, |_| pol.rng().gen_range(0..n), 20, &mut rng).unwrap()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
        let mut a = RngStream::new(5, 0);
        let mut b = RngStream::new(5, 1);
        assert_ne!((0..4).map(|_| a.uniform()).collect::<Vec<_>>(), (0..4).map(|_| b.uniform()).collect::<Vec<_>>());
    }

    #[test]
    fn trace_log_lines() {
        let m = ground(&corpus::load(corpus::MINI_WILDFIRE, corpus::MINI_WILDFIRE_2X1).unwrap()).unwrap();
        let a = m.action("put-out", &["x2", "y1"]).unwrap();
        let mut buf = Vec::new();
        let ret = rollout(&m, |_| a, 2, 1.0, &mut RngStream::new(0, 0), Some(&mut buf)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "0\tput-out(x2,y1)\t-6\tburning(x2,y1)=false,out-of-fuel(x2,y1)=true");
        assert_eq!(lines[1], "1\tput-out(x2,y1)\t-1\t");
        assert_eq!(ret, -7.0);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let m = ground(&corpus::load(corpus::MINI_WILDFIRE, corpus::MINI_WILDFIRE_2X1).unwrap()).unwrap();
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(step(&m, &[false], 0, &mut rng), Err(SimError::StateLength { .. })));
        assert!(matches!(step(&m, &[false; 4], 99, &mut rng), Err(SimError::UnknownAction(99))));
    }
}
