//! Weighted bipartite graphs over check-in entities.
//!
//! Two graphs are built from a dataset: users against temporal-locations
//! (`u` / `q` nodes) and locations against temporal-users (`l` / `y` nodes).
//! Edges are directed and exist in both directions for every observed pair.
//! Left-to-right weights may later be rescaled by a [`BiasTable`].

mod bias;
mod build;
mod token;

use std::collections::HashMap;
use std::io::Write;

pub use bias::{compute_bias, extend_graph, BiasTable};
pub use build::{build_graph_for, build_location_graph, build_user_graph};
pub use token::{NodeKind, NodeToken};

use crate::error::{Error, Result};

/// Dense index of a node inside one [`BipartiteGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// Compressed adjacency over two node partitions. Left nodes occupy ids
/// `0..left_count`, right nodes the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    tokens: Vec<NodeToken>,
    names: Vec<String>,
    lookup: HashMap<String, NodeId>,
    left_count: usize,
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    weights: Vec<f64>,
    /// Pre-extension weights, kept so walks can fall back on them.
    base_weights: Option<Vec<f64>>,
}

impl BipartiteGraph {
    /// Assembles a graph from adjacency lists given in node order.
    pub(crate) fn from_adjacency(
        left: Vec<NodeToken>,
        right: Vec<NodeToken>,
        adjacency: Vec<Vec<(NodeId, f64)>>,
    ) -> Self {
        debug_assert_eq!(adjacency.len(), left.len() + right.len());
        let left_count = left.len();
        let tokens: Vec<NodeToken> = left.into_iter().chain(right).collect();
        let names: Vec<String> = tokens.iter().map(NodeToken::to_string).collect();
        let lookup = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), NodeId(i as u32)))
            .collect();
        let mut offsets = Vec::with_capacity(tokens.len() + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for edges in adjacency {
            for (t, w) in edges {
                targets.push(t);
                weights.push(w);
            }
            offsets.push(targets.len());
        }
        BipartiteGraph {
            tokens,
            names,
            lookup,
            left_count,
            offsets,
            targets,
            weights,
            base_weights: None,
        }
    }

    /// Builds a graph from explicit edges. Every edge must join the two
    /// partitions and carry a finite, non-negative weight.
    pub fn from_edges(
        left: Vec<NodeToken>,
        right: Vec<NodeToken>,
        edges: &[(NodeToken, NodeToken, f64)],
    ) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, t) in left.iter().chain(&right).enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Malformed(format!("duplicate node `{t}`")));
            }
        }
        let left_count = left.len();
        let mut adjacency = vec![Vec::new(); left.len() + right.len()];
        for (src, dst, w) in edges {
            let s = *index.get(src).ok_or_else(|| Error::UnknownNode(src.to_string()))?;
            let d = *index.get(dst).ok_or_else(|| Error::UnknownNode(dst.to_string()))?;
            if (s < left_count) == (d < left_count) {
                return Err(Error::Malformed(format!("edge {src} -> {dst} stays inside one partition")));
            }
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::Malformed(format!("edge {src} -> {dst} has weight {w}")));
            }
            adjacency[s].push((NodeId(d as u32), *w));
        }
        Ok(Self::from_adjacency(left, right, adjacency))
    }

    pub fn node_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn left_count(&self) -> usize {
        self.left_count
    }

    pub fn right_count(&self) -> usize {
        self.tokens.len() - self.left_count
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.tokens.len() as u32).map(NodeId)
    }

    pub fn side(&self, id: NodeId) -> Side {
        if id.index() < self.left_count {
            Side::Left
        } else {
            Side::Right
        }
    }

    pub fn token(&self, id: NodeId) -> &NodeToken {
        &self.tokens[id.index()]
    }

    /// Canonical string encoding of a node.
    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id_of(&self, token: &NodeToken) -> Option<NodeId> {
        self.lookup.get(&token.to_string()).copied()
    }

    pub fn id_by_name(&self, name: &str) -> Option<NodeId> {
        self.lookup.get(name).copied()
    }

    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.targets[self.offsets[id.index()]..self.offsets[id.index() + 1]]
    }

    pub fn weights(&self, id: NodeId) -> &[f64] {
        &self.weights[self.offsets[id.index()]..self.offsets[id.index() + 1]]
    }

    /// Weights before extension; `None` for graphs that were never extended.
    pub fn base_weights(&self, id: NodeId) -> Option<&[f64]> {
        self.base_weights
            .as_ref()
            .map(|b| &b[self.offsets[id.index()]..self.offsets[id.index() + 1]])
    }

    pub fn is_extended(&self) -> bool {
        self.base_weights.is_some()
    }

    pub fn edges(&self, id: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.neighbors(id).iter().copied().zip(self.weights(id).iter().copied())
    }

    pub fn out_weight_sum(&self, id: NodeId) -> f64 {
        self.weights(id).iter().sum()
    }

    /// Weight of the edge `src -> dst`, if present.
    pub fn weight(&self, src: NodeId, dst: NodeId) -> Option<f64> {
        self.edges(src).find(|(t, _)| *t == dst).map(|(_, w)| w)
    }

    /// Returns a copy whose left-to-right weights are multiplied by `scale(target)`.
    pub(crate) fn rescale_left_edges(&self, mut scale: impl FnMut(NodeId) -> Result<f64>) -> Result<Self> {
        let mut weights = self.weights.clone();
        for src in 0..self.left_count {
            for e in self.offsets[src]..self.offsets[src + 1] {
                weights[e] *= scale(self.targets[e])?;
            }
        }
        let base = self.base_weights.clone().unwrap_or_else(|| self.weights.clone());
        Ok(BipartiteGraph {
            weights,
            base_weights: Some(base),
            ..self.clone()
        })
    }

    /// Writes one `src dst weight` line per edge, weights at 12 significant digits.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for src in self.nodes() {
            for (dst, weight) in self.edges(src) {
                writeln!(w, "{} {} {}", self.name(src), self.name(dst), format_sig12(weight))?;
            }
        }
        Ok(())
    }
}

/// Scientific notation with 12 significant digits.
pub(crate) fn format_sig12(x: f64) -> String {
    format!("{x:.11e}")
}
