use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::gradient_check;
use crate::corpus;
use crate::ground::{extract_dbn, ground};

type Mat = Vec<Vec<f64>>;

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.01 * x
    }
}

fn to_mat(t: &Tensor<f64>) -> Mat {
    (0..t.rows).map(|r| (0..t.cols).map(|c| t.at(r, c)).collect()).collect()
}

fn dense_mm(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum()).collect())
        .collect()
}

/// Straight transcription of the attention update with explicit loops.
fn dense_gat(x: &Mat, nbrs: &[Vec<usize>], heads: &[(Mat, Mat)]) -> Mat {
    let n = x.len();
    let d = heads[0].0[0].len();
    let mut out = vec![vec![0.0; d]; n];
    for (w, a) in heads {
        let z = dense_mm(x, w);
        for i in 0..n {
            let score = |j: usize| leaky((0..d).map(|k| a[k][0] * z[i][k] + a[k][1] * z[j][k]).sum());
            let mx = nbrs[i].iter().map(|&j| score(j)).fold(f64::NEG_INFINITY, f64::max);
            let zsum: f64 = nbrs[i].iter().map(|&j| (score(j) - mx).exp()).sum();
            for &j in &nbrs[i] {
                let alpha = (score(j) - mx).exp() / zsum;
                for k in 0..d {
                    out[i][k] += alpha * z[j][k] / heads.len() as f64;
                }
            }
        }
    }
    out.into_iter().map(|r| r.into_iter().map(leaky).collect()).collect()
}

fn dense_head(x: &[f64], w1: &Mat, b1: &[f64], w2: &Mat, b2: f64) -> f64 {
    let h: Vec<f64> = (0..b1.len())
        .map(|j| leaky(x.iter().zip(w1).map(|(xi, row)| xi * row[j]).sum::<f64>() + b1[j]))
        .collect();
    h.iter().zip(w2).map(|(hi, row)| hi * row[0]).sum::<f64>() + b2
}

fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
    Tensor::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| (0..n).filter(|&j| j == i || rng.gen_bool(0.4)).collect())
        .collect()
}

fn mask_of(nbrs: &[Vec<usize>]) -> Arc<Vec<bool>> {
    let n = nbrs.len();
    let mut m = vec![false; n * n];
    for (i, js) in nbrs.iter().enumerate() {
        for &j in js {
            m[i * n + j] = true;
        }
    }
    Arc::new(m)
}

fn run_gat(x: &Tensor<f64>, nbrs: &[Vec<usize>], heads: &[(Tensor<f64>, Tensor<f64>)]) -> Tensor<f64> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let hv: Vec<GatHead> = heads
        .iter()
        .map(|(w, a)| GatHead {
            w: tape.constant(w.clone()),
            a: tape.constant(a.clone()),
        })
        .collect();
    let out = gat_layer(&mut tape, xv, &mask_of(nbrs), &hv, 0.01);
    tape.value(out).clone()
}

fn mini_wildfire(instance: &str, config: &ModelConfig) -> (DomainModel, InstanceContext) {
    let tm = corpus::load(corpus::MINI_WILDFIRE, instance).unwrap();
    let model = DomainModel::new(&tm.domain, *config);
    let ctx = InstanceContext::from_mdp(ground(&tm).unwrap(), config);
    (model, ctx)
}

#[test]
fn isolated_node_single_head() {
    let x = Tensor::from_f64(1, 3, &[1.0, -2.0, 0.5]);
    let w = Tensor::from_f64(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0, -1.0]);
    let a = Tensor::from_f64(2, 2, &[0.3, -0.7, 0.2, 0.9]);
    let out = run_gat(&x, &[vec![0]], &[(w.clone(), a)]);
    let expect: Vec<f64> = x.matmul(&w).data.into_iter().map(leaky).collect();
    assert_eq!(out.data, expect);
}

#[test]
fn symmetric_pair_gets_identical_embeddings() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::from_f64(2, 4, &[0.1, 0.2, -0.3, 0.4, 0.1, 0.2, -0.3, 0.4]);
    let heads = vec![(random_mat(&mut rng, 4, 6), random_mat(&mut rng, 6, 2)); 2];
    let out = run_gat(&x, &[vec![0, 1], vec![0, 1]], &heads);
    assert_eq!(out.data[..6], out.data[6..]);
}

#[test]
fn gat_layer_matches_dense_reference() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nbrs = random_graph(&mut rng, 5);
        let x = random_mat(&mut rng, 5, 4);
        let heads: Vec<_> = (0..2).map(|_| (random_mat(&mut rng, 4, 6), random_mat(&mut rng, 6, 2))).collect();
        let got = run_gat(&x, &nbrs, &heads);
        let dense_heads: Vec<(Mat, Mat)> = heads.iter().map(|(w, a)| (to_mat(w), to_mat(a))).collect();
        let want = dense_gat(&to_mat(&x), &nbrs, &dense_heads);
        for (g, w) in to_mat(&got).iter().flatten().zip(want.iter().flatten()) {
            assert!((g - w).abs() <= 1e-6, "seed {seed}: {g} vs {w}");
        }
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let nbrs = random_graph(&mut rng, 6);
    let mask = mask_of(&nbrs);
    let mut tape = Tape::<f64>::new();
    let e = tape.constant(random_mat(&mut rng, 6, 6));
    let alpha = tape.softmax_rows(e, Some(mask.clone()));
    let t = tape.value(alpha);
    for r in 0..6 {
        let s: f64 = (0..6).map(|c| t.at(r, c)).sum();
        assert!((s - 1.0).abs() <= 1e-6);
        for c in 0..6 {
            if !mask[r * 6 + c] {
                assert_eq!(t.at(r, c), 0.0);
            }
        }
    }
}

#[test]
#[should_panic(expected = "self-loop")]
fn missing_self_loop_is_rejected() {
    let x = Tensor::from_f64(2, 1, &[1.0, 2.0]);
    let h = (Tensor::from_f64(1, 1, &[1.0]), Tensor::from_f64(1, 2, &[1.0, 1.0]));
    run_gat(&x, &[vec![1], vec![0, 1]], &[h]);
}

#[test]
fn zero_projection_gives_leaky_bias() {
    let mut tape = Tape::<f64>::new();
    let v = tape.constant(Tensor::full(3, 6, 0.7));
    let w = tape.constant(Tensor::zeros(6, 4));
    let b = tape.constant(Tensor::from_f64(1, 4, &[1.0, -1.0, 0.0, 2.0]));
    let o = tuple_embeddings(&mut tape, &[v], w, b, 0.01);
    for r in 0..3 {
        assert_eq!(to_mat(tape.value(o))[r], [1.0, -0.01, 0.0, 2.0]);
    }
}

#[test]
fn identity_projection_reproduces_node_embeddings() {
    let mut tape = Tape::<f64>::new();
    let nodes = Tensor::from_f64(2, 3, &[0.5, 1.0, 2.0, 3.0, 0.25, 4.0]);
    let v = tape.constant(nodes.clone());
    let w = tape.constant(Tensor::identity(3));
    let b = tape.constant(Tensor::zeros(1, 3));
    let o = tuple_embeddings(&mut tape, &[v], w, b, 0.01);
    assert_eq!(tape.value(o), &nodes);
}

#[test]
fn state_embedding_is_dimensionwise_max() {
    let mut tape = Tape::<f64>::new();
    let o = tape.constant(Tensor::from_f64(2, 2, &[1.0, -2.0, 0.0, 3.0]));
    let s = state_embedding(&mut tape, o);
    assert_eq!(tape.value(s).data, [1.0, 3.0]);
    let one = tape.constant(Tensor::from_f64(1, 2, &[4.0, -5.0]));
    let s = state_embedding(&mut tape, one);
    assert_eq!(tape.value(s).data, [4.0, -5.0]);
}

#[test]
fn softmax_policy_examples() {
    let p = policy(&[0.0; 6]).unwrap();
    assert!(p.iter().all(|&x| (x - 1.0 / 6.0).abs() < 1e-12));
    let p = policy(&[2f64.ln(), 0.0]).unwrap();
    assert!((p[0] - 2.0 / 3.0).abs() < 1e-12 && (p[1] - 1.0 / 3.0).abs() < 1e-12);
    let logits = [0.3, -1.2, 4.0, 0.0];
    let shifted: Vec<f64> = logits.iter().map(|x| x + 123.4).collect();
    for (a, b) in policy(&logits).unwrap().iter().zip(policy(&shifted).unwrap()) {
        assert!((a - b).abs() <= 1e-9);
    }
    assert_eq!(greedy(&logits), greedy(&shifted));
    assert_eq!(policy(&[0.0, f64::NAN]), Err(PolicyError::NaN(1)));
    assert_eq!(policy(&[]), Err(PolicyError::Empty));
    assert_eq!(greedy(&[1.0, 3.0, 3.0]), 1);
}

#[test]
fn decoder_pools_follow_affected_tuples() {
    let (_, ctx) = mini_wildfire(corpus::MINI_WILDFIRE_2X1, &ModelConfig::default());
    let names = ctx.mdp.action_names();
    let node = |x: &str| ctx.graph.node_of(&[x.to_string(), "y1".to_string()]).unwrap();
    let pool = |name: &str| &ctx.pools[names.iter().position(|n| n == name).unwrap()];
    assert_eq!(pool("put-out(x1,y1)"), &vec![node("x1")]);
    assert_eq!(pool("cut-out(x2,y1)"), &vec![node("x2")]);
    assert_eq!(pool("finisher"), &vec![node("x1"), node("x2")]);
    assert!(pool("noop").is_empty());
}

#[test]
fn mini_wildfire_embedding_sizes() {
    let config = ModelConfig::default();
    let (model, ctx) = mini_wildfire(corpus::MINI_WILDFIRE_2X1, &config);
    assert_eq!(model.k, 4);
    let params = model.init_params(0).cast::<f64>();
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, &params);
    let out = model.forward(&mut tape, &p, &ctx, &ctx.mdp.init_state);
    let proj = params.tensors[model.layout.proj_w].shape();
    assert_eq!(proj, (24, 20));
    assert_eq!(tape.value(out.tuples).shape(), (2, 20));
    assert_eq!(tape.value(out.sbar).shape(), (1, 20));
    assert_eq!(tape.value(out.logits).shape(), (1, 6));
}

/// Full forward pass recomputed with dense loops from the graph, the DBN
/// and the raw parameter tensors.
fn dense_forward(model: &DomainModel, params: &Params<f64>, tm: &crate::rddl::TypedModel, state: &[bool]) -> (Vec<f64>, f64) {
    let mdp = ground(tm).unwrap();
    let dbn = extract_dbn(&mdp);
    let graph = crate::graph::build_graph(&mdp, &dbn);
    let n = graph.num_nodes();
    let x: Mat = (0..n).map(|v| graph.node_features(state, v)).collect();
    let t = |i: usize| to_mat(&params.tensors[i]);
    let mut cat = vec![Vec::new(); n];
    for (j, sg) in graph.subgraphs.iter().enumerate() {
        let heads: Vec<(Mat, Mat)> = model.layout.gat[0][j].iter().map(|&(w, a)| (t(w), t(a))).collect();
        let v = dense_gat(&x, &sg.in_neighbors, &heads);
        for i in 0..n {
            cat[i].extend_from_slice(&v[i]);
        }
    }
    let b = &t(model.layout.proj_b)[0];
    let o: Mat = dense_mm(&cat, &t(model.layout.proj_w))
        .into_iter()
        .map(|r| r.iter().zip(b).map(|(x, b)| leaky(x + b)).collect())
        .collect();
    let sbar: Vec<f64> = (0..o[0].len()).map(|d| o.iter().map(|r| r[d]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let head = |h: &HeadParams, x: &[f64]| dense_head(x, &t(h.w1), &t(h.b1)[0], &t(h.w2), t(h.b2)[0][0]);
    let mut logits = Vec::new();
    let mut value = 0.0;
    for a in &mdp.actions {
        match a.symbol_index {
            None => {
                logits.push(head(&model.layout.noop_heads.0, &sbar));
                value += head(&model.layout.noop_heads.1, &sbar);
            }
            Some(s) => {
                let nodes: Vec<usize> = dbn
                    .affected_set(a.index)
                    .unwrap()
                    .iter()
                    .filter_map(|&v| graph.node_of(&mdp.state_vars[v].args))
                    .collect();
                let pooled: Vec<f64> = (0..sbar.len())
                    .map(|d| {
                        if nodes.is_empty() {
                            0.0
                        } else {
                            nodes.iter().map(|&i| o[i][d]).fold(f64::NEG_INFINITY, f64::max)
                        }
                    })
                    .collect();
                let input: Vec<f64> = sbar.iter().chain(&pooled).copied().collect();
                logits.push(head(&model.layout.symbol_heads[s].0, &input));
                value += head(&model.layout.symbol_heads[s].1, &input);
            }
        }
    }
    (logits, value)
}

#[test]
fn full_forward_matches_dense_reference() {
    let config = ModelConfig::default();
    for (inst, seed) in [(corpus::MINI_WILDFIRE_2X1, 1), (corpus::MINI_WILDFIRE_2X3, 2)] {
        let tm = corpus::load(corpus::MINI_WILDFIRE, inst).unwrap();
        let (model, ctx) = mini_wildfire(inst, &config);
        let params = model.init_params(seed).cast::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..4 {
            let state: Vec<bool> = (0..ctx.mdp.num_state_vars()).map(|_| rng.gen_bool(0.5)).collect();
            let mut tape = Tape::new();
            let p = model.bind(&mut tape, &params);
            let out = model.forward(&mut tape, &p, &ctx, &state);
            let (logits, value) = dense_forward(&model, &params, &tm, &state);
            for (g, w) in tape.value(out.logits).data.iter().zip(&logits) {
                assert!((g - w).abs() <= 1e-6, "{g} vs {w}");
            }
            assert!((tape.value(out.value).item() - value).abs() <= 1e-6);
            let probs = tape.value(out.probs).to_f64_vec();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn zero_value_parameters_give_zero_value() {
    let config = ModelConfig::default();
    let (model, ctx) = mini_wildfire(corpus::MINI_WILDFIRE_2X1, &config);
    let mut params = model.init_params(4);
    let value_heads = model.layout.symbol_heads.iter().map(|h| h.1).chain([model.layout.noop_heads.1]);
    for h in value_heads {
        for i in [h.w1, h.b1, h.w2, h.b2] {
            params.tensors[i] = Tensor::zeros(params.tensors[i].rows, params.tensors[i].cols);
        }
    }
    assert_eq!(model.evaluate(&params, &ctx, &ctx.mdp.init_state).1, 0.0);
}

#[test]
fn same_symbol_actions_with_equal_inputs_share_logits() {
    let config = ModelConfig::default();
    let (model, ctx) = mini_wildfire(corpus::MINI_WILDFIRE_2X1, &config);
    let params = model.init_params(9);
    // both cells identical: neither burning nor out of fuel
    let state = vec![false; 4];
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, &params);
    let out = model.forward(&mut tape, &p, &ctx, &state);
    let logits = tape.value(out.logits).to_f64_vec();
    let names = ctx.mdp.action_names();
    let at = |n: &str| logits[names.iter().position(|x| x == n).unwrap()];
    let o = tape.value(out.tuples);
    if (0..20).all(|d| o.at(0, d) == o.at(1, d)) {
        assert_eq!(at("put-out(x1,y1)"), at("put-out(x2,y1)"));
        assert_eq!(at("cut-out(x1,y1)"), at("cut-out(x2,y1)"));
    }
}

#[test]
fn per_symbol_value_mode_runs() {
    let config = ModelConfig {
        value_mode: ValueMode::PerSymbol,
        ..ModelConfig::default()
    };
    let (model, ctx) = mini_wildfire(corpus::MINI_WILDFIRE_2X3, &config);
    let (probs, v) = model.evaluate(&model.init_params(0), &ctx, &ctx.mdp.init_state);
    assert_eq!(probs.len(), ctx.num_actions());
    assert!(v.is_finite());
}

#[test]
fn parameters_are_size_invariant() {
    let config = ModelConfig::default();
    let (model, _) = mini_wildfire(corpus::MINI_WILDFIRE_2X1, &config);
    let params = model.init_params(5);
    for inst in [corpus::MINI_WILDFIRE_2X1, corpus::MINI_WILDFIRE_3X1, corpus::MINI_WILDFIRE_2X3] {
        let (m, ctx) = mini_wildfire(inst, &config);
        assert_eq!(m.param_shapes(), model.param_shapes());
        m.check_params(&params).unwrap();
        let (probs, v) = model.evaluate(&params, &ctx, &ctx.mdp.init_state);
        assert_eq!(probs.len(), ctx.num_actions());
        assert!(v.is_finite() && probs.iter().all(|p| *p >= 0.0));
    }
    let sys = corpus::load(corpus::SYSADMIN_RING, corpus::SYSADMIN_RING_3).unwrap();
    let sys_model = DomainModel::new(&sys.domain, config);
    assert!(sys_model.check_params(&params).is_err());
}

#[test]
fn parameter_count_matches_layout() {
    let config = ModelConfig::default();
    let (model, _) = mini_wildfire(corpus::MINI_WILDFIRE_2X1, &config);
    let f = model.feature_len;
    let gat = 4 * 4 * (f * 6 + 6 * 2);
    let proj = 24 * 20 + 20;
    let sym_head = 40 * 16 + 16 + 16 + 1;
    let noop_head = 20 * 16 + 16 + 16 + 1;
    assert_eq!(model.init_params(0).num_scalars(), gat + proj + 3 * 2 * sym_head + 2 * noop_head);
}

#[test]
fn deeper_and_self_only_neighbourhoods() {
    for nb in [0, 2] {
        let config = ModelConfig {
            neighborhood: nb,
            ..ModelConfig::default()
        };
        let (model, ctx) = mini_wildfire(corpus::MINI_WILDFIRE_2X3, &config);
        assert_eq!(model.layout.gat.len(), nb.max(1));
        let (probs, _) = model.evaluate(&model.init_params(0), &ctx, &ctx.mdp.init_state);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        if nb == 0 {
            let n = ctx.num_nodes();
            assert!(ctx.masks.iter().all(|m| m.iter().filter(|&&b| b).count() == n));
        }
    }
}

#[test]
fn checkpoint_round_trip_and_domain_check() {
    let config = ModelConfig {
        heads: 2,
        ..ModelConfig::default()
    };
    let tm = corpus::load(corpus::MINI_WILDFIRE, corpus::MINI_WILDFIRE_2X1).unwrap();
    let model = DomainModel::new(&tm.domain, config);
    let params = model.init_params(8);
    let ck = model.to_checkpoint(&params, serde_json::json!({}));
    let back = Checkpoint::read_from(&mut ck.to_bytes().as_slice()).unwrap();
    let (m2, p2) = DomainModel::from_checkpoint(&tm.domain, &back).unwrap();
    assert_eq!(m2.config, config);
    assert_eq!(p2, params);
    let sys = corpus::load(corpus::SYSADMIN_RING, corpus::SYSADMIN_RING_3).unwrap();
    assert!(matches!(DomainModel::from_checkpoint(&sys.domain, &back), Err(ModelError::DomainMismatch)));
}

#[test]
fn full_network_gradients_match_finite_differences() {
    let config = ModelConfig {
        heads: 2,
        ..ModelConfig::default()
    };
    let (model, ctx) = mini_wildfire(corpus::MINI_WILDFIRE_2X1, &config);
    let params = model.init_params(21).cast::<f64>();
    let state = [true, false, false, true];
    let report = gradient_check(&params, 1e-6, |tape, p| {
        let out = model.forward(tape, p, &ctx, &state);
        let lp = tape.log(out.probs, 1e-30);
        let pick = tape.slice_cols(lp, 2, 3);
        let v2 = tape.mul(out.value, out.value);
        tape.add(pick, v2)
    });
    assert!(report.max_error <= 1e-4, "{report:?}");
}

fn permuted(perm: &[usize], nbrs: &[Vec<usize>]) -> Vec<Vec<usize>> {
    // new node perm[i] is old node i
    let mut out = vec![Vec::new(); nbrs.len()];
    for (i, js) in nbrs.iter().enumerate() {
        out[perm[i]] = js.iter().map(|&j| perm[j]).collect();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn encoder_is_permutation_equivariant(seed in any::<u64>(), perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graphs: Vec<_> = (0..2).map(|_| random_graph(&mut rng, 5)).collect();
        let x = random_mat(&mut rng, 5, 3);
        let heads: Vec<Vec<(Tensor<f64>, Tensor<f64>)>> =
            (0..2).map(|_| (0..2).map(|_| (random_mat(&mut rng, 3, 6), random_mat(&mut rng, 6, 2))).collect()).collect();
        let pw = random_mat(&mut rng, 12, 4);
        let pb = random_mat(&mut rng, 1, 4);
        let encode = |x: &Tensor<f64>, graphs: &[Vec<Vec<usize>>]| {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let per: Vec<Var> = graphs.iter().zip(&heads).map(|(g, hs)| {
                let hv: Vec<GatHead> = hs.iter().map(|(w, a)| GatHead { w: tape.constant(w.clone()), a: tape.constant(a.clone()) }).collect();
                gat_layer(&mut tape, xv, &mask_of(g), &hv, 0.01)
            }).collect();
            let (w, b) = (tape.constant(pw.clone()), tape.constant(pb.clone()));
            let o = tuple_embeddings(&mut tape, &per, w, b, 0.01);
            let s = state_embedding(&mut tape, o);
            (tape.value(o).clone(), tape.value(s).clone())
        };
        let (o, s) = encode(&x, &graphs);
        let mut px = Tensor::zeros(5, 3);
        for i in 0..5 {
            for c in 0..3 {
                *px.at_mut(perm[i], c) = x.at(i, c);
            }
        }
        let pg: Vec<_> = graphs.iter().map(|g| permuted(&perm, g)).collect();
        let (po, ps) = encode(&px, &pg);
        for i in 0..5 {
            for c in 0..4 {
                prop_assert!((o.at(i, c) - po.at(perm[i], c)).abs() <= 1e-12);
            }
        }
        for (a, b) in s.data.iter().zip(&ps.data) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
