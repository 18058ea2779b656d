//! Instance graph: one subgraph per action symbol plus one for the natural
//! dynamics, over the object tuples that appear in fluents.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::ground::{Dbn, GroundMdp, Tuple};
use crate::rddl::{DomainAst, PvarKind};

/// How a non-fluent symbol maps onto a node's tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SlotKind {
    /// Parameterless: the value is broadcast to every node.
    Broadcast,
    /// Applied to the node's tuple itself when type-consistent, otherwise
    /// to the objects of a unary parameter type found within the tuple.
    Tuple,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NonFluentSlot {
    pub symbol: String,
    pub kind: SlotKind,
}

/// Feature layout shared by every instance of a domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureSchema {
    pub fluent_slots: Vec<String>,
    pub nonfluent_slots: Vec<NonFluentSlot>,
}

impl FeatureSchema {
    /// Keep a non-fluent when it is parameterless, when its type list equals
    /// some fluent's, or when it is unary over a type some fluent takes.
    pub fn for_domain(domain: &DomainAst) -> Self {
        let fluents: Vec<_> = domain.pvariables_of(PvarKind::StateFluent).collect();
        let fluent_types: BTreeSet<&str> = fluents.iter().flat_map(|f| f.params.iter().map(String::as_str)).collect();
        let nonfluent_slots = domain
            .pvariables_of(PvarKind::NonFluent)
            .filter_map(|nf| {
                let kind = if nf.params.is_empty() {
                    SlotKind::Broadcast
                } else if fluents.iter().any(|f| f.params == nf.params)
                    || (nf.params.len() == 1 && fluent_types.contains(nf.params[0].as_str()))
                {
                    SlotKind::Tuple
                } else {
                    return None;
                };
                Some(NonFluentSlot {
                    symbol: nf.name.clone(),
                    kind,
                })
            })
            .collect();
        FeatureSchema {
            fluent_slots: fluents.iter().map(|f| f.name.clone()).collect(),
            nonfluent_slots,
        }
    }

    pub fn len(&self) -> usize {
        self.fluent_slots.len() + self.nonfluent_slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Subgraph {
    /// Action symbol, or `None` for the natural-dynamics subgraph.
    pub symbol: Option<String>,
    /// Sorted in-neighbours of each node, self included.
    pub in_neighbors: Vec<Vec<usize>>,
}

impl Subgraph {
    pub fn name(&self) -> &str {
        self.symbol.as_deref().unwrap_or("natural")
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.in_neighbors[v].binary_search(&u).is_ok()
    }

    /// Directed edges `(u, v)` sorted by target then source.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.in_neighbors
            .iter()
            .enumerate()
            .flat_map(|(v, us)| us.iter().map(move |&u| (u, v)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceGraph {
    /// Node tuples, sorted; node id = position.
    pub nodes: Vec<Tuple>,
    /// One per action symbol in declaration order, then natural dynamics.
    pub subgraphs: Vec<Subgraph>,
    pub schema: FeatureSchema,
    /// Static non-fluent part of each node's features.
    pub nf_features: Vec<Vec<f64>>,
    /// State variable feeding each fluent slot of each node, if any.
    fluent_vars: Vec<Vec<Option<usize>>>,
}

impl InstanceGraph {
    pub fn k(&self) -> usize {
        self.subgraphs.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn feature_len(&self) -> usize {
        self.schema.len()
    }

    pub fn node_of(&self, tuple: &[String]) -> Option<usize> {
        self.nodes.binary_search_by(|t| t.as_slice().cmp(tuple)).ok()
    }

    /// `h = concat(h^f, h^nf)` for node `v` under `state`.
    pub fn node_features(&self, state: &[bool], v: usize) -> Vec<f64> {
        let mut h: Vec<f64> = self.fluent_vars[v]
            .iter()
            .map(|x| x.map_or(0.0, |i| f64::from(u8::from(state[i]))))
            .collect();
        h.extend_from_slice(&self.nf_features[v]);
        h
    }

    /// Row-major `nodes × feature_len` feature matrix.
    pub fn feature_matrix(&self, state: &[bool]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_nodes() * self.feature_len());
        for v in 0..self.num_nodes() {
            out.extend(self.node_features(state, v));
        }
        out
    }

    /// Canonical text serialization: equal graphs give equal bytes.
    ///
    /// Symbol names are left out so that encodings of the same structure
    /// under different non-fluent vocabularies compare equal.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut s = String::new();
        writeln!(s, "k {}", self.k()).unwrap();
        writeln!(s, "schema {} {}", self.schema.fluent_slots.len(), self.schema.nonfluent_slots.len()).unwrap();
        for (v, t) in self.nodes.iter().enumerate() {
            write!(s, "node {v} ({})", t.join(",")).unwrap();
            for x in &self.nf_features[v] {
                write!(s, " {:016x}", x.to_bits()).unwrap();
            }
            s.push('\n');
        }
        for (j, g) in self.subgraphs.iter().enumerate() {
            write!(s, "sub {j}").unwrap();
            for (u, v) in g.edges() {
                write!(s, " {u}>{v}").unwrap();
            }
            s.push('\n');
        }
        s.into_bytes()
    }

    /// Hex SHA-256 of [`Self::canonical_bytes`].
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_bytes()))
    }

    /// One DOT digraph per subgraph.
    pub fn to_dot(&self) -> String {
        let label = |v: usize| format!("\"({})\"", self.nodes[v].join(","));
        let mut out = String::new();
        for g in &self.subgraphs {
            writeln!(out, "digraph \"{}\" {{", g.name()).unwrap();
            for v in 0..self.num_nodes() {
                writeln!(out, "    {};", label(v)).unwrap();
            }
            for (u, v) in g.edges() {
                writeln!(out, "    {} -> {};", label(u), label(v)).unwrap();
            }
            out.push_str("}\n");
        }
        out
    }

    /// `{nodes, subgraphs, features, fingerprint}` with features at `state`.
    pub fn to_json(&self, state: &[bool]) -> serde_json::Value {
        let subgraphs: Vec<_> = self
            .subgraphs
            .iter()
            .map(|g| serde_json::json!({ "name": g.name(), "edges": g.edges() }))
            .collect();
        let features: Vec<_> = (0..self.num_nodes()).map(|v| self.node_features(state, v)).collect();
        serde_json::json!({
            "nodes": self.nodes,
            "subgraphs": subgraphs,
            "schema": self.schema,
            "features": features,
            "fingerprint": self.fingerprint(),
        })
    }
}

/// Free-function form of [`InstanceGraph::fingerprint`].
pub fn graph_fingerprint(g: &InstanceGraph) -> String {
    g.fingerprint()
}

fn nonfluent_feature(mdp: &GroundMdp, slot: &NonFluentSlot, tuple: &Tuple) -> f64 {
    let decl = mdp.domain.pvariable(&slot.symbol).expect("schema symbol is declared");
    match slot.kind {
        SlotKind::Broadcast => mdp.nonfluent_value(&slot.symbol, &[]).unwrap_or(0.0),
        SlotKind::Tuple => {
            if let Some(x) = mdp.nonfluent_value(&slot.symbol, tuple) {
                return x;
            }
            if decl.params.len() != 1 {
                return 0.0;
            }
            let matches: Vec<f64> = tuple
                .iter()
                .filter_map(|o| mdp.nonfluent_value(&slot.symbol, std::slice::from_ref(o)))
                .collect();
            if matches.len() > 1 {
                log::warn!(
                    "non-fluent {} matches {} objects of ({}); using the maximum",
                    slot.symbol,
                    matches.len(),
                    tuple.join(",")
                );
            }
            matches.into_iter().reduce(f64::max).unwrap_or(0.0)
        }
    }
}

/// Build the instance graph of a ground MDP.
pub fn build_graph(mdp: &GroundMdp, dbn: &Dbn) -> InstanceGraph {
    let schema = FeatureSchema::for_domain(&mdp.domain);
    let nodes: Vec<Tuple> = mdp.o_f.clone();
    let index: HashMap<&Tuple, usize> = nodes.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let node_of_var: Vec<usize> = mdp.state_vars.iter().map(|v| index[&v.args]).collect();

    let k = mdp.action_symbols.len() + 1;
    let mut edges: Vec<Vec<BTreeSet<usize>>> = vec![(0..nodes.len()).map(|v| BTreeSet::from([v])).collect(); k];
    for (g, adeps) in dbn.action_deps.iter().enumerate() {
        let v = node_of_var[g];
        for &a in adeps {
            let j = mdp.actions[a].symbol_index.expect("NOOP never appears in a CPF");
            for &f in dbn.effect_deps_of(g, a).unwrap_or(&[]) {
                edges[j][v].insert(node_of_var[f]);
            }
        }
        for &f in &dbn.state_deps[g] {
            edges[k - 1][v].insert(node_of_var[f]);
        }
    }
    let subgraphs = edges
        .into_iter()
        .enumerate()
        .map(|(j, inn)| Subgraph {
            symbol: mdp.action_symbols.get(j).cloned(),
            in_neighbors: inn.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
        .collect();

    let nf_features = nodes
        .iter()
        .map(|t| schema.nonfluent_slots.iter().map(|s| nonfluent_feature(mdp, s, t)).collect())
        .collect();
    let fluent_vars = nodes
        .iter()
        .map(|t| {
            let args: Vec<&str> = t.iter().map(String::as_str).collect();
            schema.fluent_slots.iter().map(|f| mdp.state_var(f, &args)).collect()
        })
        .collect();

    InstanceGraph {
        nodes,
        subgraphs,
        schema,
        nf_features,
        fluent_vars,
    }
}

/// Feature vector of node `v` under `state`.
pub fn node_features(g: &InstanceGraph, state: &[bool], v: usize) -> Vec<f64> {
    g.node_features(state, v)
}
