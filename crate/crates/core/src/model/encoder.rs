use std::sync::Arc;

use crate::autodiff::{Scalar, Tape, Var};

/// Parameters of one attention head: `w` is `in × out`, `a` is `out × 2`
/// with the target half in column 0 and the source half in column 1.
#[derive(Debug, Clone, Copy)]
pub struct GatHead {
    pub w: Var,
    pub a: Var,
}

/// One graph-attention layer over a single subgraph.
///
/// `mask` is row-major `n × n`; `mask[i * n + j]` admits `j` as an
/// in-neighbour of `i`. Every node must admit itself.
pub fn gat_layer<T: Scalar>(tape: &mut Tape<T>, x: Var, mask: &Arc<Vec<bool>>, heads: &[GatHead], slope: T) -> Var {
    let n = tape.value(x).rows;
    assert_eq!(mask.len(), n * n, "mask shape mismatch");
    assert!((0..n).all(|i| mask[i * n + i]), "attention mask is missing a self-loop");
    assert!(!heads.is_empty(), "at least one attention head");
    let mut acc = None;
    for h in heads {
        let z = tape.matmul(x, h.w);
        let s = tape.matmul(z, h.a);
        let target = tape.slice_cols(s, 0, 1);
        let source = tape.slice_cols(s, 1, 2);
        let source = tape.transpose(source);
        let e = tape.add(target, source);
        let e = tape.leaky_relu(e, slope);
        let alpha = tape.softmax_rows(e, Some(mask.clone()));
        let out = tape.matmul(alpha, z);
        acc = Some(match acc {
            None => out,
            Some(prev) => tape.add(prev, out),
        });
    }
    let mean = tape.scale(acc.expect("non-empty heads"), T::one() / T::of(heads.len() as f64));
    tape.leaky_relu(mean, slope)
}

/// Concatenate each node's per-subgraph embeddings and project them.
pub fn tuple_embeddings<T: Scalar>(tape: &mut Tape<T>, per_subgraph: &[Var], proj_w: Var, proj_b: Var, slope: T) -> Var {
    let cat = tape.concat_cols(per_subgraph);
    let z = tape.matmul(cat, proj_w);
    let z = tape.add(z, proj_b);
    tape.leaky_relu(z, slope)
}

/// Dimension-wise max over all tuple embeddings.
pub fn state_embedding<T: Scalar>(tape: &mut Tape<T>, tuples: Var) -> Var {
    assert!(tape.value(tuples).rows > 0, "state embedding of an empty tuple set");
    tape.max_pool_rows(tuples)
}
