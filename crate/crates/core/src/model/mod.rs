//! Domain-tied policy network: a graph-attention encoder over the instance
//! graph and one policy/value decoder pair per action symbol.

mod decoder;
mod encoder;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autodiff::{Checkpoint, Params, Scalar, Tape, Tensor, Var};
use crate::graph::{FeatureSchema, InstanceGraph};
use crate::ground::{Dbn, GroundMdp};
use crate::rddl::{print_domain, DomainAst, PvarKind};

pub use decoder::{apply_head, decoder_inputs, greedy, policy, score_actions, state_value, DecoderInputs, PolicyError};
pub use encoder::{gat_layer, state_embedding, tuple_embeddings, GatHead};

/// How per-action value outputs combine into V(s).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueMode {
    /// Sum of the value head over every ground action, NOOP included.
    PerAction,
    /// One value-head output per action symbol, fed the pool over all of the
    /// symbol's affected tuples, plus the NOOP head.
    PerSymbol,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub heads: usize,
    pub gat_out: usize,
    pub embed: usize,
    pub hidden: usize,
    /// Number of stacked attention layers; 0 keeps one layer restricted to
    /// self-loops.
    pub neighborhood: usize,
    pub leaky_slope: f64,
    pub value_mode: ValueMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            heads: 4,
            gat_out: 6,
            embed: 20,
            hidden: 16,
            neighborhood: 1,
            leaky_slope: 0.01,
            value_mode: ValueMode::PerAction,
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("checkpoint was trained on a different domain")]
    DomainMismatch,
    #[error("checkpoint parameter layout does not match the model: {0}")]
    Shape(String),
    #[error("bad hyperparameter block: {0}")]
    Hyper(String),
}

/// Positions of one decoder head's tensors in the parameter list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadParams {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    /// `[layer][subgraph][head] -> (W, a)`.
    pub gat: Vec<Vec<Vec<(usize, usize)>>>,
    pub proj_w: usize,
    pub proj_b: usize,
    /// Policy and value heads per action symbol, declaration order.
    pub symbol_heads: Vec<(HeadParams, HeadParams)>,
    pub noop_heads: (HeadParams, HeadParams),
}

/// The network for one domain. Shapes depend only on the domain.
#[derive(Debug, Clone)]
pub struct DomainModel {
    pub config: ModelConfig,
    pub feature_len: usize,
    /// Number of subgraphs: action symbols plus natural dynamics.
    pub k: usize,
    pub action_symbols: Vec<String>,
    pub domain_fingerprint: [u8; 32],
    pub layout: Layout,
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
}

impl DomainModel {
    pub fn new(domain: &DomainAst, config: ModelConfig) -> Self {
        let feature_len = FeatureSchema::for_domain(domain).len();
        let action_symbols: Vec<String> = domain
            .pvariables_of(PvarKind::ActionFluent)
            .map(|p| p.name.clone())
            .collect();
        let k = action_symbols.len() + 1;
        let mut names = Vec::new();
        let mut shapes = Vec::new();
        let mut add = |name: String, shape: (usize, usize)| {
            names.push(name);
            shapes.push(shape);
            names.len() - 1
        };
        let layers = config.neighborhood.max(1);
        let gat = (0..layers)
            .map(|l| {
                let fan_in = if l == 0 { feature_len } else { config.gat_out };
                (0..k)
                    .map(|j| {
                        (0..config.heads)
                            .map(|h| {
                                let w = add(format!("gat.l{l}.g{j}.h{h}.w"), (fan_in, config.gat_out));
                                let a = add(format!("gat.l{l}.g{j}.h{h}.a"), (config.gat_out, 2));
                                (w, a)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let proj_w = add("proj.w".into(), (config.gat_out * k, config.embed));
        let proj_b = add("proj.b".into(), (1, config.embed));
        let mut head = |prefix: String, fan_in: usize| HeadParams {
            w1: add(format!("{prefix}.w1"), (fan_in, config.hidden)),
            b1: add(format!("{prefix}.b1"), (1, config.hidden)),
            w2: add(format!("{prefix}.w2"), (config.hidden, 1)),
            b2: add(format!("{prefix}.b2"), (1, 1)),
        };
        let symbol_heads = action_symbols
            .iter()
            .map(|s| {
                (
                    head(format!("dec.{s}.pi"), 2 * config.embed),
                    head(format!("dec.{s}.v"), 2 * config.embed),
                )
            })
            .collect();
        let noop_heads = (head("dec.noop.pi".into(), config.embed), head("dec.noop.v".into(), config.embed));
        DomainModel {
            config,
            feature_len,
            k,
            action_symbols,
            domain_fingerprint: domain_fingerprint(domain),
            layout: Layout {
                gat,
                proj_w,
                proj_b,
                symbol_heads,
                noop_heads,
            },
            names,
            shapes,
        }
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param_shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    /// Glorot-uniform weights and attention vectors, zero biases.
    pub fn init_params(&self, seed: u64) -> Params<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Params::default();
        for (name, &(r, c)) in self.names.iter().zip(&self.shapes) {
            let is_bias = name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2");
            if is_bias {
                p.push(name.clone(), Tensor::zeros(r, c));
            } else {
                p.push_glorot(name.clone(), r, c, &mut rng);
            }
        }
        p
    }

    /// Check that `params` has exactly this model's names and shapes.
    pub fn check_params<T: Scalar>(&self, params: &Params<T>) -> Result<(), ModelError> {
        if params.names != self.names {
            return Err(ModelError::Shape(format!(
                "expected {} tensors, found {}",
                self.names.len(),
                params.names.len()
            )));
        }
        for ((name, &want), t) in self.names.iter().zip(&self.shapes).zip(&params.tensors) {
            if t.shape() != want {
                return Err(ModelError::Shape(format!("`{name}` is {:?}, expected {want:?}", t.shape())));
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, params: &Params<f32>, extra: serde_json::Value) -> Checkpoint {
        Checkpoint {
            domain_fingerprint: self.domain_fingerprint,
            hyper: serde_json::json!({ "model": self.config, "train": extra }),
            params: params.clone(),
        }
    }

    /// Rebuild the model recorded in `ck` for `domain`.
    pub fn from_checkpoint(domain: &DomainAst, ck: &Checkpoint) -> Result<(Self, Params<f32>), ModelError> {
        if ck.domain_fingerprint != domain_fingerprint(domain) {
            return Err(ModelError::DomainMismatch);
        }
        let config: ModelConfig = serde_json::from_value(ck.hyper.get("model").cloned().unwrap_or_default())
            .map_err(|e| ModelError::Hyper(e.to_string()))?;
        let model = DomainModel::new(domain, config);
        model.check_params(&ck.params)?;
        Ok((model, ck.params.clone()))
    }

    /// Put every parameter on `tape`.
    pub fn bind<T: Scalar>(&self, tape: &mut Tape<T>, params: &Params<T>) -> Vec<Var> {
        params
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| tape.param(i, t.clone()))
            .collect()
    }

    /// Record one forward pass for `state`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &[Var], ctx: &InstanceContext, state: &[bool]) -> Forward {
        let slope = T::of(self.config.leaky_slope);
        let x = tape.constant(Tensor::from_f64(ctx.num_nodes(), self.feature_len, &ctx.graph.feature_matrix(state)));
        let mut nodes = vec![x; self.k];
        for layer in &self.layout.gat {
            nodes = layer
                .iter()
                .enumerate()
                .map(|(j, heads)| {
                    let heads: Vec<GatHead> = heads.iter().map(|&(w, a)| GatHead { w: p[w], a: p[a] }).collect();
                    gat_layer(tape, nodes[j], &ctx.masks[j], &heads, slope)
                })
                .collect();
        }
        let tuples = tuple_embeddings(tape, &nodes, p[self.layout.proj_w], p[self.layout.proj_b], slope);
        let sbar = state_embedding(tape, tuples);
        let inputs = decoder_inputs(tape, ctx, sbar, tuples);
        let logits = score_actions(tape, self, p, ctx, &inputs);
        let value = state_value(tape, self, p, ctx, &inputs, tuples);
        let probs = tape.softmax_rows(logits, None);
        Forward {
            node_embeddings: nodes,
            tuples,
            sbar,
            logits,
            probs,
            value,
        }
    }

    /// Forward pass without gradients: (probabilities, value).
    pub fn evaluate(&self, params: &Params<f32>, ctx: &InstanceContext, state: &[bool]) -> (Vec<f64>, f64) {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, params);
        let out = self.forward(&mut tape, &p, ctx, state);
        (tape.value(out.probs).to_f64_vec(), tape.value(out.value).item().as_f64())
    }

    /// Highest-probability ground action, lowest index on ties.
    pub fn greedy_action(&self, params: &Params<f32>, ctx: &InstanceContext, state: &[bool]) -> usize {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, params);
        let out = self.forward(&mut tape, &p, ctx, state);
        greedy(&tape.value(out.logits).to_f64_vec())
    }
}

/// SHA-256 of the canonical printed domain.
pub fn domain_fingerprint(domain: &DomainAst) -> [u8; 32] {
    Sha256::digest(print_domain(domain).as_bytes()).into()
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Final-layer node embeddings per subgraph, each `n × gat_out`.
    pub node_embeddings: Vec<Var>,
    /// `n × embed`, row per node tuple.
    pub tuples: Var,
    /// `1 × embed`.
    pub sbar: Var,
    /// `1 × |actions|`, ground-action order.
    pub logits: Var,
    pub probs: Var,
    /// `1 × 1`.
    pub value: Var,
}

/// Everything about one instance the network needs besides the state.
#[derive(Debug, Clone)]
pub struct InstanceContext {
    pub mdp: Arc<GroundMdp>,
    pub graph: Arc<InstanceGraph>,
    /// Row-major `n × n` in-neighbour mask per subgraph.
    pub masks: Vec<Arc<Vec<bool>>>,
    /// Per action symbol: its ground actions in index order.
    pub symbol_actions: Vec<Vec<usize>>,
    /// Per ground action: node ids of the tuples of its affected variables.
    pub pools: Vec<Vec<usize>>,
    /// Row of each ground action in `[noop, symbol 0 block, symbol 1 block, ..]`.
    pub action_rows: Arc<Vec<usize>>,
}

impl InstanceContext {
    pub fn new(mdp: Arc<GroundMdp>, dbn: &Dbn, graph: Arc<InstanceGraph>, config: &ModelConfig) -> Self {
        let n = graph.num_nodes();
        let masks = graph
            .subgraphs
            .iter()
            .map(|g| {
                let mut m = vec![false; n * n];
                for v in 0..n {
                    if config.neighborhood == 0 {
                        m[v * n + v] = true;
                    } else {
                        for &u in &g.in_neighbors[v] {
                            m[v * n + u] = true;
                        }
                    }
                }
                Arc::new(m)
            })
            .collect();
        let mut symbol_actions = vec![Vec::new(); mdp.action_symbols.len()];
        let mut pools = Vec::with_capacity(mdp.num_actions());
        for a in &mdp.actions {
            if let Some(j) = a.symbol_index {
                symbol_actions[j].push(a.index);
            }
            let mut nodes: Vec<usize> = dbn
                .affected_set(a.index)
                .expect("action from this MDP")
                .iter()
                .filter_map(|&v| graph.node_of(&mdp.state_vars[v].args))
                .collect();
            nodes.sort_unstable();
            nodes.dedup();
            pools.push(nodes);
        }
        let mut action_rows = vec![0; mdp.num_actions()];
        let mut row = 1;
        for acts in &symbol_actions {
            for &a in acts {
                action_rows[a] = row;
                row += 1;
            }
        }
        InstanceContext {
            mdp,
            graph,
            masks,
            symbol_actions,
            pools,
            action_rows: Arc::new(action_rows),
        }
    }

    /// Ground, extract the DBN and build the graph in one go.
    pub fn from_mdp(mdp: GroundMdp, config: &ModelConfig) -> Self {
        let dbn = crate::ground::extract_dbn(&mdp);
        let graph = crate::graph::build_graph(&mdp, &dbn);
        InstanceContext::new(Arc::new(mdp), &dbn, Arc::new(graph), config)
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }
}

#[cfg(test)]
mod tests;
