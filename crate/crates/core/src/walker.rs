//! Task-specific random walks.
//!
//! A walk starts at a node and repeatedly moves to an out-neighbor chosen
//! with probability proportional to the (possibly bias-extended) edge weight.
//! When every extended weight of a node is zero the step uses the node's
//! unextended weights instead. A node with no usable weights ends the walk.
//!
//! The corpus holds `walks_per_node` rounds; each round visits every node of
//! both partitions in graph order. Walk `(round, node)` draws from its own
//! random stream, so the corpus does not depend on how work is scheduled.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, RngExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, NodeId};
use crate::rng::{stream, Domain};
use crate::sampling::{prefix_sums, search_cumulative};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Tokens per walk, including the start node.
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walk_length: 80,
            walks_per_node: 10,
            seed: 1,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walk_length < 2 {
            return Err(Error::InvalidConfig(format!(
                "walk_length must be at least 2, got {}",
                self.walk_length
            )));
        }
        if self.walks_per_node < 1 {
            return Err(Error::InvalidConfig("walks_per_node must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-node cumulative transition tables over a graph.
pub struct Walker<'g> {
    graph: &'g BipartiteGraph,
    /// Prefix sums aligned with the graph's edge arrays.
    cum: Vec<Vec<f64>>,
}

impl<'g> Walker<'g> {
    pub fn new(graph: &'g BipartiteGraph) -> Self {
        let cum = graph
            .nodes()
            .map(|n| {
                let w = graph.weights(n);
                let sums = prefix_sums(w);
                if sums.last().copied().unwrap_or(0.0) > 0.0 {
                    return sums;
                }
                match graph.base_weights(n) {
                    Some(base) if base.iter().sum::<f64>() > 0.0 => prefix_sums(base),
                    _ => Vec::new(),
                }
            })
            .collect();
        Walker { graph, cum }
    }

    pub fn graph(&self) -> &BipartiteGraph {
        self.graph
    }

    /// Transition probabilities out of `node` as used by [`Walker::step`].
    pub fn transition_probabilities(&self, node: NodeId) -> Vec<(NodeId, f64)> {
        let cum = &self.cum[node.index()];
        let Some(&total) = cum.last() else {
            return Vec::new();
        };
        let mut prev = 0.0;
        self.graph
            .neighbors(node)
            .iter()
            .zip(cum)
            .map(|(&n, &c)| {
                let p = (c - prev) / total;
                prev = c;
                (n, p)
            })
            .collect()
    }

    /// One weighted step, or `None` at a node without usable out-edges.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, node: NodeId, rng: &mut R) -> Option<NodeId> {
        let cum = &self.cum[node.index()];
        let total = *cum.last()?;
        let i = search_cumulative(cum, rng.random::<f64>() * total);
        Some(self.graph.neighbors(node)[i])
    }

    /// A walk of `length` tokens starting at `start`, shorter only if it hits
    /// a dangling node.
    pub fn walk<R: Rng + ?Sized>(&self, start: NodeId, length: usize, rng: &mut R) -> Vec<NodeId> {
        let mut walk = Vec::with_capacity(length);
        walk.push(start);
        let mut cur = start;
        while walk.len() < length {
            match self.step(cur, rng) {
                Some(next) => {
                    walk.push(next);
                    cur = next;
                }
                None => break,
            }
        }
        walk
    }
}

/// One walk from the node named `start`.
pub fn trw<R: Rng + ?Sized>(graph: &BipartiteGraph, start: &str, length: usize, rng: &mut R) -> Result<Vec<NodeId>> {
    let id = graph.id_by_name(start).ok_or_else(|| Error::UnknownNode(start.to_string()))?;
    if length < 2 {
        return Err(Error::InvalidConfig(format!("walk_length must be at least 2, got {length}")));
    }
    Ok(Walker::new(graph).walk(id, length, rng))
}

/// Walks as indices into a token table.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WalkCorpus {
    pub tokens: Vec<String>,
    pub walks: Vec<Vec<u32>>,
}

impl WalkCorpus {
    pub fn len(&self) -> usize {
        self.walks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walks.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.walks.iter().map(Vec::len).sum()
    }

    pub fn walk_tokens(&self, i: usize) -> impl Iterator<Item = &str> {
        self.walks[i].iter().map(|&t| self.tokens[t as usize].as_str())
    }

    /// One walk per line, tokens separated by single spaces.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for walk in &self.walks {
            let mut first = true;
            for &t in walk {
                if !first {
                    w.write_all(b" ")?;
                }
                first = false;
                w.write_all(self.tokens[t as usize].as_bytes())?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::ingest::write_file(path, |w| self.write(w))
    }

    /// Reads a walk file, interning tokens in order of first appearance.
    pub fn read<R: BufRead>(reader: R) -> std::io::Result<Self> {
        let mut corpus = WalkCorpus::default();
        let mut index = std::collections::HashMap::new();
        for line in reader.lines() {
            let line = line?;
            let walk: Vec<u32> = line
                .split_whitespace()
                .map(|tok| {
                    *index.entry(tok.to_string()).or_insert_with(|| {
                        corpus.tokens.push(tok.to_string());
                        (corpus.tokens.len() - 1) as u32
                    })
                })
                .collect();
            if !walk.is_empty() {
                corpus.walks.push(walk);
            }
        }
        Ok(corpus)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f)).map_err(|e| Error::io(path, e))
    }
}

/// `walks_per_node` rounds of walks from every node, round-major.
pub fn generate_corpus(graph: &BipartiteGraph, config: &WalkConfig) -> Result<WalkCorpus> {
    config.validate()?;
    if graph.node_count() == 0 {
        return Err(Error::Empty("graph has no nodes"));
    }
    let walker = Walker::new(graph);
    let n = graph.node_count();
    let walks = (0..config.walks_per_node * n)
        .into_par_iter()
        .map(|k| {
            let (round, node) = (k / n, k % n);
            let mut rng = stream(config.seed, Domain::Walk, ((round as u64) << 32) | node as u64);
            walker
                .walk(NodeId(node as u32), config.walk_length, &mut rng)
                .into_iter()
                .map(|id| id.0)
                .collect()
        })
        .collect();
    Ok(WalkCorpus {
        tokens: graph.names().to_vec(),
        walks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{extend_graph, BiasTable, NodeToken, Side};
    use crate::task::Task;

    fn u(s: &str) -> NodeToken {
        NodeToken::User(s.into())
    }

    fn q(s: &str) -> NodeToken {
        NodeToken::temporal_location(s, 1)
    }

    fn star() -> BipartiteGraph {
        // a -> {b: 1, c: 3}, b and c lead back to a.
        BipartiteGraph::from_edges(
            vec![u("a")],
            vec![q("b"), q("c")],
            &[(u("a"), q("b"), 1.0), (u("a"), q("c"), 3.0), (q("b"), u("a"), 1.0), (q("c"), u("a"), 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn forced_path() {
        let g = BipartiteGraph::from_edges(vec![u("a")], vec![q("b")], &[(u("a"), q("b"), 1.0), (q("b"), u("a"), 1.0)])
            .unwrap();
        let mut rng = stream(0, Domain::Test, 0);
        let w = trw(&g, "u:a", 4, &mut rng).unwrap();
        let names: Vec<_> = w.iter().map(|&n| g.name(n)).collect();
        assert_eq!(names, ["u:a", "q:b@1", "u:a", "q:b@1"]);
    }

    #[test]
    fn unknown_start_and_short_walks_are_errors() {
        let g = star();
        let mut rng = stream(0, Domain::Test, 0);
        assert!(matches!(trw(&g, "u:zzz", 4, &mut rng), Err(Error::UnknownNode(_))));
        assert!(trw(&g, "u:a", 1, &mut rng).is_err());
    }

    #[test]
    fn weighted_step_frequencies() {
        let g = star();
        let walker = Walker::new(&g);
        let a = g.id_by_name("u:a").unwrap();
        let c = g.id_by_name("q:c@1").unwrap();
        let mut rng = stream(3, Domain::Test, 0);
        let n = 100_000;
        let hits = (0..n).filter(|_| walker.step(a, &mut rng) == Some(c)).count();
        assert!((hits as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn zero_extended_weights_fall_back_to_base() {
        let g = star();
        let ext = extend_graph(&g, &BiasTable::constant(&g, Task::Gender, 0.0)).unwrap();
        let a = ext.id_by_name("u:a").unwrap();
        assert_eq!(ext.out_weight_sum(a), 0.0);
        let walker = Walker::new(&ext);
        let probs = walker.transition_probabilities(a);
        assert_eq!(probs.len(), 2);
        assert!((probs[0].1 - 0.25).abs() < 1e-12);
        assert!((probs[1].1 - 0.75).abs() < 1e-12);
        assert!(walker.step(a, &mut stream(0, Domain::Test, 1)).is_some());
    }

    #[test]
    fn dangling_node_truncates() {
        let g = BipartiteGraph::from_edges(vec![u("a")], vec![q("b")], &[(u("a"), q("b"), 1.0)]).unwrap();
        let corpus = generate_corpus(&g, &WalkConfig { walk_length: 5, walks_per_node: 2, seed: 0 }).unwrap();
        assert_eq!(corpus.len(), 4);
        assert_eq!(corpus.walks[0].len(), 2);
        assert_eq!(corpus.walks[1].len(), 1);
    }

    #[test]
    fn corpus_counts_and_determinism() {
        let left: Vec<_> = (0..5).map(|i| u(&format!("u{i}"))).collect();
        let right: Vec<_> = (0..5).map(|i| q(&format!("q{i}"))).collect();
        let mut edges = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                if (i + j) % 2 == 0 {
                    edges.push((left[i].clone(), right[j].clone(), 1.0 + j as f64));
                    edges.push((right[j].clone(), left[i].clone(), 1.0 + i as f64));
                }
            }
        }
        let g = BipartiteGraph::from_edges(left, right, &edges).unwrap();
        let cfg = WalkConfig { walk_length: 12, walks_per_node: 10, seed: 9 };
        let a = generate_corpus(&g, &cfg).unwrap();
        let b = generate_corpus(&g, &cfg).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a, b);
        let c = generate_corpus(&g, &WalkConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a, c);
        for (k, walk) in a.walks.iter().enumerate() {
            assert_eq!(walk.len(), 12);
            assert_eq!(walk[0] as usize, k % 10);
            let start = g.side(NodeId(walk[0]));
            for (i, &t) in walk.iter().enumerate() {
                let same = g.side(NodeId(t)) == start;
                assert_eq!(same, i % 2 == 0);
            }
        }
        let mut starts = vec![0; 10];
        for w in &a.walks {
            starts[w[0] as usize] += 1;
        }
        assert!(starts.iter().all(|&s| s == 10));
        assert_eq!(g.side(NodeId(7)), Side::Right);
    }

    #[test]
    fn walk_file_round_trip() {
        let g = star();
        let corpus = generate_corpus(&g, &WalkConfig { walk_length: 6, walks_per_node: 3, seed: 4 }).unwrap();
        let mut buf = Vec::new();
        corpus.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.lines().next().unwrap().starts_with("u:a q:"));
        let back = WalkCorpus::read(buf.as_slice()).unwrap();
        for i in 0..corpus.len() {
            assert!(corpus.walk_tokens(i).eq(back.walk_tokens(i)));
        }
    }
}
