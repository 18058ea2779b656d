//! Multi-instance advantage actor-critic training of a [`DomainModel`].

use std::collections::VecDeque;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Instant;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{CheckpointError, OptimConfig, OptimError, ParamStore, Params, Scalar, SharedParamStore, Tape, Tensor, Var};
use crate::model::{DomainModel, Forward, InstanceContext};
use crate::sim::{self, RngStream, SimError, State};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossCoeffs {
    /// Weight of the squared value error.
    pub value: f64,
    /// Weight of the entropy bonus.
    pub entropy: f64,
}

impl Default for LossCoeffs {
    fn default() -> Self {
        LossCoeffs { value: 0.5, entropy: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Stop after this many environment steps summed over workers.
    pub total_steps: u64,
    /// Optional wall-clock limit in seconds.
    pub wall_seconds: Option<f64>,
    pub workers: usize,
    pub t_max: usize,
    pub coeffs: LossCoeffs,
    pub optim: OptimConfig,
    pub seed: u64,
    /// Environment steps between log rows.
    pub log_every: u64,
    /// Environment steps between checkpoint snapshots; 0 disables them.
    pub snapshot_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 100_000,
            wall_seconds: None,
            workers: 4,
            t_max: 20,
            coeffs: LossCoeffs::default(),
            optim: OptimConfig::default(),
            seed: 0,
            log_every: 5_000,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training log: {0}")]
    Io(#[from] std::io::Error),
    #[error("non-finite loss after {steps} environment steps; last good parameters kept")]
    NonFiniteLoss { steps: u64, last_good: Box<Params<f32>> },
}

/// `R_t = r_t + γ R_{t+1}` with `R_T = bootstrap`.
pub fn n_step_returns(rewards: &[f64], gamma: f64, bootstrap: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Loss components of one segment, for logging and tests.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    /// Summed entropy of the visited policies (not weighted).
    pub entropy: f64,
}

/// `Σ_t −log π(a_t|s_t)·A_t + c_v (R_t − V(s_t))² − β H(π(·|s_t))` with the
/// advantage `A_t = R_t − V(s_t)` held constant.
pub fn a3c_loss<T: Scalar>(
    tape: &mut Tape<T>,
    outputs: &[Forward],
    actions: &[usize],
    returns: &[f64],
    coeffs: &LossCoeffs,
) -> (Var, LossParts) {
    let advantages: Vec<f64> = outputs
        .iter()
        .zip(returns)
        .map(|(out, r)| r - tape.value(out.value).item().as_f64())
        .collect();
    a3c_loss_with_advantages(tape, outputs, actions, returns, &advantages, coeffs)
}

/// [`a3c_loss`] with caller-supplied advantages.
pub fn a3c_loss_with_advantages<T: Scalar>(
    tape: &mut Tape<T>,
    outputs: &[Forward],
    actions: &[usize],
    returns: &[f64],
    advantages: &[f64],
    coeffs: &LossCoeffs,
) -> (Var, LossParts) {
    assert!(!outputs.is_empty(), "empty segment");
    assert_eq!(outputs.len(), actions.len());
    assert_eq!(outputs.len(), returns.len());
    assert_eq!(outputs.len(), advantages.len());
    let floor = T::of(1e-30);
    let mut parts = LossParts::default();
    let mut terms = Vec::with_capacity(outputs.len() * 3);
    for (((out, &a), &ret), &adv) in outputs.iter().zip(actions).zip(returns).zip(advantages) {
        let logp = tape.log(out.probs, floor);
        let chosen = tape.slice_cols(logp, a, a + 1);
        parts.policy -= tape.value(chosen).item().as_f64() * adv;
        terms.push(tape.scale(chosen, T::of(-adv)));

        let target = tape.constant(Tensor::scalar(T::of(ret)));
        let diff = tape.sub(out.value, target);
        let sq = tape.mul(diff, diff);
        let err = ret - tape.value(out.value).item().as_f64();
        parts.value += err * err;
        terms.push(tape.scale(sq, T::of(coeffs.value)));

        let plogp = tape.mul(out.probs, logp);
        let neg_h = tape.sum(plogp);
        parts.entropy -= tape.value(neg_h).item().as_f64();
        terms.push(tape.scale(neg_h, T::of(coeffs.entropy)));
    }
    let all = tape.concat_rows(&terms);
    (tape.sum(all), parts)
}

/// A segment of experience: visited states, chosen actions, rewards and
/// the bootstrap value at truncation (`None` when the episode ended).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub bootstrap: Option<f64>,
}

/// Record forward passes for every state of `traj` and the loss on top.
pub fn trajectory_loss<T: Scalar>(
    tape: &mut Tape<T>,
    model: &DomainModel,
    p: &[Var],
    ctx: &InstanceContext,
    traj: &Trajectory,
    coeffs: &LossCoeffs,
) -> (Var, LossParts) {
    let outs: Vec<Forward> = traj.states.iter().map(|s| model.forward(tape, p, ctx, s)).collect();
    let returns = n_step_returns(&traj.rewards, ctx.mdp.discount, traj.bootstrap.unwrap_or(0.0));
    a3c_loss(tape, &outs, &traj.actions, &returns, coeffs)
}

/// One finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Episode {
    pub instance: usize,
    pub discounted_return: f64,
}

struct Segment {
    grads: Vec<Tensor<f32>>,
    steps: u64,
    finished: Vec<Episode>,
    loss: f64,
}

/// Per-worker environment cursor. Workers move to the next instance in
/// round-robin order whenever an episode ends.
struct Worker<'a> {
    model: &'a DomainModel,
    contexts: &'a [InstanceContext],
    env_rng: RngStream,
    act_rng: RngStream,
    instance: usize,
    state: State,
    t: u32,
    ret: f64,
    disc: f64,
}

impl<'a> Worker<'a> {
    fn new(id: usize, seed: u64, model: &'a DomainModel, contexts: &'a [InstanceContext]) -> Self {
        let instance = id % contexts.len();
        Worker {
            model,
            contexts,
            env_rng: RngStream::new(seed, 2 * id as u64),
            act_rng: RngStream::new(seed, 2 * id as u64 + 1),
            instance,
            state: contexts[instance].mdp.init_state.clone(),
            t: 0,
            ret: 0.0,
            disc: 1.0,
        }
    }

    fn segment(&mut self, params: &Params<f32>, cfg: &TrainConfig) -> Result<Segment, TrainError> {
        let ctx = &self.contexts[self.instance];
        let mdp = &ctx.mdp;
        let mut tape = Tape::<f32>::new();
        let p = self.model.bind(&mut tape, params);
        let mut outs = Vec::with_capacity(cfg.t_max);
        let mut actions = Vec::with_capacity(cfg.t_max);
        let mut rewards = Vec::with_capacity(cfg.t_max);
        let mut finished = Vec::new();
        let mut done = false;
        while outs.len() < cfg.t_max {
            let out = self.model.forward(&mut tape, &p, ctx, &self.state);
            let probs = tape.value(out.probs).to_f64_vec();
            let a = self.act_rng.categorical(&probs);
            let (next, r) = sim::step(mdp, &self.state, a, &mut self.env_rng)?;
            outs.push(out);
            actions.push(a);
            rewards.push(r);
            self.ret += self.disc * r;
            self.disc *= mdp.discount;
            self.state = next;
            self.t += 1;
            if self.t >= mdp.horizon {
                done = true;
                break;
            }
        }
        let bootstrap = if done {
            0.0
        } else {
            let out = self.model.forward(&mut tape, &p, ctx, &self.state);
            tape.value(out.value).item().as_f64()
        };
        let returns = n_step_returns(&rewards, mdp.discount, bootstrap);
        let (loss, _) = a3c_loss(&mut tape, &outs, &actions, &returns, &cfg.coeffs);
        let loss_value = tape.value(loss).item().as_f64();
        let grads = if loss_value.is_finite() {
            tape.backward(loss, self.model.param_shapes())
        } else {
            Vec::new()
        };
        if done {
            finished.push(Episode {
                instance: self.instance,
                discounted_return: self.ret,
            });
            self.instance = (self.instance + 1) % self.contexts.len();
            self.state = self.contexts[self.instance].mdp.init_state.clone();
            self.t = 0;
            self.ret = 0.0;
            self.disc = 1.0;
        }
        Ok(Segment {
            grads,
            steps: outs.len() as u64,
            finished,
            loss: loss_value,
        })
    }
}

/// Where training writes its outputs.
#[derive(Default)]
pub struct TrainSinks {
    /// CSV rows `wall_seconds,env_steps,instance_id,mean_return_last_100`.
    pub log: Option<Box<dyn Write + Send>>,
    /// Final checkpoint path; periodic snapshots overwrite it.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Params<f32>,
    pub env_steps: u64,
    pub updates: u64,
    pub episodes: Vec<Episode>,
    pub seconds: f64,
}

impl TrainOutcome {
    /// Mean discounted return of the last `n` episodes on `instance`.
    pub fn recent_mean(&self, instance: usize, n: usize) -> Option<f64> {
        let xs: Vec<f64> = self
            .episodes
            .iter()
            .rev()
            .filter(|e| e.instance == instance)
            .take(n)
            .map(|e| e.discounted_return)
            .collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

struct Shared {
    steps: AtomicU64,
    stop: AtomicBool,
    episodes: Mutex<Vec<Episode>>,
    recent: Mutex<Vec<VecDeque<f64>>>,
    error: Mutex<Option<TrainError>>,
    last_log: AtomicU64,
    last_snapshot: AtomicU64,
}

/// Train `model` from `init` on `contexts` (all instances of one domain).
pub fn train(
    model: &DomainModel,
    contexts: &[InstanceContext],
    init: Params<f32>,
    cfg: &TrainConfig,
    sinks: TrainSinks,
) -> Result<TrainOutcome, TrainError> {
    if contexts.is_empty() {
        return Err(TrainError::Config("no training instances".into()));
    }
    if cfg.workers == 0 || cfg.t_max == 0 || cfg.total_steps == 0 {
        return Err(TrainError::Config("workers, t_max and total_steps must be positive".into()));
    }
    if let Some(c) = contexts.iter().find(|c| c.mdp.horizon == 0) {
        return Err(TrainError::Config(format!("instance `{}` has horizon 0", c.mdp.instance_name)));
    }
    model.check_params(&init).map_err(|e| TrainError::Config(e.to_string()))?;

    let store = SharedParamStore::new(ParamStore::new(init, cfg.optim));
    let shared = Shared {
        steps: AtomicU64::new(0),
        stop: AtomicBool::new(false),
        episodes: Mutex::new(Vec::new()),
        recent: Mutex::new(vec![VecDeque::new(); contexts.len()]),
        error: Mutex::new(None),
        last_log: AtomicU64::new(0),
        last_snapshot: AtomicU64::new(0),
    };
    let log = Mutex::new(sinks.log);
    if let Some(w) = log.lock().as_mut() {
        writeln!(w, "wall_seconds,env_steps,instance_id,mean_return_last_100")?;
    }
    let start = Instant::now();
    let extra = serde_json::to_value(cfg).expect("config serializes");

    let run_worker = |id: usize| {
        let mut worker = Worker::new(id, cfg.seed, model, contexts);
        while !shared.stop.load(Ordering::SeqCst) {
            if shared.steps.load(Ordering::SeqCst) >= cfg.total_steps
                || cfg.wall_seconds.is_some_and(|s| start.elapsed().as_secs_f64() >= s)
            {
                break;
            }
            let result = (|| -> Result<(), TrainError> {
                let snapshot = store.snapshot();
                let seg = worker.segment(&snapshot, cfg)?;
                let steps = shared.steps.fetch_add(seg.steps, Ordering::SeqCst) + seg.steps;
                if !seg.loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        steps,
                        last_good: Box::new(store.snapshot()),
                    });
                }
                store.apply(&seg.grads)?;
                if !seg.finished.is_empty() {
                    let mut recent = shared.recent.lock();
                    for e in &seg.finished {
                        let q = &mut recent[e.instance];
                        q.push_back(e.discounted_return);
                        if q.len() > 100 {
                            q.pop_front();
                        }
                    }
                    shared.episodes.lock().extend(seg.finished);
                }
                let last = shared.last_log.load(Ordering::SeqCst);
                if steps >= last + cfg.log_every
                    && shared.last_log.compare_exchange(last, steps, Ordering::SeqCst, Ordering::SeqCst).is_ok()
                {
                    if let Some(w) = log.lock().as_mut() {
                        let recent = shared.recent.lock();
                        for (i, q) in recent.iter().enumerate().filter(|(_, q)| !q.is_empty()) {
                            let mean = q.iter().sum::<f64>() / q.len() as f64;
                            let name = &contexts[i].mdp.instance_name;
                            writeln!(w, "{:.3},{steps},{name},{mean}", start.elapsed().as_secs_f64())?;
                        }
                    }
                }
                if let (Some(path), true) = (&sinks.checkpoint, cfg.snapshot_every > 0) {
                    let last = shared.last_snapshot.load(Ordering::SeqCst);
                    if steps >= last + cfg.snapshot_every
                        && shared.last_snapshot.compare_exchange(last, steps, Ordering::SeqCst, Ordering::SeqCst).is_ok()
                    {
                        model.to_checkpoint(&store.snapshot(), extra.clone()).save(path)?;
                    }
                }
                Ok(())
            })();
            if let Err(e) = result {
                shared.stop.store(true, Ordering::SeqCst);
                shared.error.lock().get_or_insert(e);
                break;
            }
        }
    };

    if cfg.workers == 1 {
        run_worker(0);
    } else {
        std::thread::scope(|s| {
            for id in 0..cfg.workers {
                let run = &run_worker;
                s.spawn(move || run(id));
            }
        });
    }

    let params = store.snapshot();
    if let Some(path) = &sinks.checkpoint {
        model.to_checkpoint(&params, extra).save(path)?;
    }
    if let Some(w) = log.lock().as_mut() {
        w.flush()?;
    }
    if let Some(e) = shared.error.into_inner() {
        return Err(e);
    }
    Ok(TrainOutcome {
        params,
        env_steps: shared.steps.into_inner(),
        updates: store.with(|s| s.steps()),
        episodes: shared.episodes.into_inner(),
        seconds: start.elapsed().as_secs_f64(),
    })
}
