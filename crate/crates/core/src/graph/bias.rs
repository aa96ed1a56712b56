use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use super::{format_sig12, BipartiteGraph, NodeToken, Side};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::task::{Task, TaskSpec};

/// Per-composite-node divergence between the node's class distribution of
/// check-ins and the global one.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasTable {
    pub task: TaskSpec,
    /// Share of labeled check-ins per class.
    pub global_dist: Vec<f64>,
    values: BTreeMap<NodeToken, f64>,
}

impl BiasTable {
    pub fn get(&self, token: &NodeToken) -> Option<f64> {
        self.values.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeToken, f64)> {
        self.values.iter().map(|(k, v)| (k, *v))
    }

    /// Assigns `value` to every right-side node of `graph`. With `value = 1`
    /// extension leaves all weights untouched.
    pub fn constant(graph: &BipartiteGraph, task: Task, value: f64) -> Self {
        let n = task.n_classes();
        BiasTable {
            task: task.spec(),
            global_dist: vec![1.0 / n as f64; n],
            values: graph
                .nodes()
                .filter(|&id| graph.side(id) == Side::Right)
                .map(|id| (graph.token(id).clone(), value))
                .collect(),
        }
    }

    /// Writes `node_token task value` lines.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (token, v) in &self.values {
            writeln!(w, "{token} {} {}", self.task.task, format_sig12(*v))?;
        }
        Ok(())
    }
}

/// `sum_i p(i) ln(p(i)/global(i))` over classes with non-zero node mass.
/// A node without labeled mass has no evidence of skew and scores 0.
pub(crate) fn kl_from_counts(counts: &[u64], global: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    counts
        .iter()
        .zip(global)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &g)| {
            let p = c as f64 / total;
            p * (p / g).ln()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Bias of every composite node for `task`: temporal-locations for the
/// demographic tasks, temporal-users for the category task. Only check-ins
/// of labeled entities contribute class mass; composite nodes reached only
/// by unlabeled entities are present with value 0.
pub fn compute_bias(dataset: &Dataset, task: Task) -> Result<BiasTable> {
    let n = task.n_classes();
    let mut nodes: HashMap<(&str, u8), Vec<u64>> = HashMap::new();
    let mut global = vec![0u64; n];
    for c in &dataset.checkins {
        let composite = match task {
            Task::Category => c.user_id.as_str(),
            _ => c.location_id.as_str(),
        };
        let counts = nodes
            .entry((composite, dataset.bucket(c)))
            .or_insert_with(|| vec![0; n]);
        if let Some(class) = dataset.checkin_class(task, c) {
            counts[class] += 1;
            global[class] += 1;
        }
    }
    if nodes.is_empty() {
        return Err(Error::Empty("dataset has no check-ins"));
    }
    if let Some(i) = global.iter().position(|&g| g == 0) {
        return Err(Error::ZeroClassMass {
            task: task.to_string(),
            class: task.classes()[i].to_string(),
        });
    }
    let total: u64 = global.iter().sum();
    let global_dist: Vec<f64> = global.iter().map(|&g| g as f64 / total as f64).collect();
    let values = nodes
        .into_iter()
        .map(|((id, hour), counts)| {
            let token = match task {
                Task::Category => NodeToken::temporal_user(id, hour),
                _ => NodeToken::temporal_location(id, hour),
            };
            (token, kl_from_counts(&counts, &global_dist))
        })
        .collect();
    Ok(BiasTable {
        task: task.spec(),
        global_dist,
        values,
    })
}

/// Multiplies every entity-to-composite weight by the composite's bias.
/// Composite-to-entity weights are unchanged.
pub fn extend_graph(graph: &BipartiteGraph, table: &BiasTable) -> Result<BipartiteGraph> {
    graph.rescale_left_edges(|target| {
        let token = graph.token(target);
        table
            .get(token)
            .ok_or_else(|| Error::MissingBias(token.to_string()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_user_graph;
    use crate::ingest::{CheckIn, Gender, HourBuckets, UserLabels};
    use std::collections::BTreeMap as Map;

    fn ci(user: &str, loc: &str) -> CheckIn {
        CheckIn {
            user_id: user.into(),
            timestamp: 0,
            latitude: 0.0,
            longitude: 0.0,
            location_id: loc.into(),
        }
    }

    fn labels(pairs: &[(&str, Gender)]) -> Map<String, UserLabels> {
        pairs
            .iter()
            .map(|(u, g)| (u.to_string(), UserLabels::new(Some(*g), None, None)))
            .collect()
    }

    fn dataset(checkins: Vec<CheckIn>, l: Map<String, UserLabels>) -> Dataset {
        Dataset::new(checkins, l, Map::new(), 1, HourBuckets::Hourly, 0).unwrap()
    }

    /// Global mass is balanced by a second location; `q` holds `f` female and `m` male check-ins.
    fn balanced(f: usize, m: usize) -> Dataset {
        let mut v = Vec::new();
        v.extend((0..f).map(|_| ci("f", "q")));
        v.extend((0..m).map(|_| ci("m", "q")));
        v.extend((0..m).map(|_| ci("f", "other")));
        v.extend((0..f).map(|_| ci("m", "other")));
        dataset(v, labels(&[("f", Gender::Female), ("m", Gender::Male)]))
    }

    fn q(name: &str) -> NodeToken {
        NodeToken::temporal_location(name, 1)
    }

    #[test]
    fn identical_distribution_scores_zero() {
        let t = compute_bias(&balanced(2, 2), Task::Gender).unwrap();
        assert_eq!(t.get(&q("q")), Some(0.0));
    }

    #[test]
    fn skewed_node_matches_hand_value() {
        let t = compute_bias(&balanced(3, 1), Task::Gender).unwrap();
        assert_eq!(t.global_dist, vec![0.5, 0.5]);
        let expected = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((t.get(&q("q")).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.130812).abs() < 1e-6);
    }

    #[test]
    fn pure_node_drops_zero_mass_term() {
        let t = compute_bias(&balanced(4, 0), Task::Gender);
        // balanced(4, 0) leaves male mass only at `other`.
        let t = t.unwrap();
        assert!((t.get(&q("q")).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_global_class_is_an_error() {
        let d = dataset(vec![ci("f", "q")], labels(&[("f", Gender::Female)]));
        assert!(matches!(compute_bias(&d, Task::Gender), Err(Error::ZeroClassMass { .. })));
    }

    #[test]
    fn unlabeled_checkins_do_not_count() {
        let mut d = balanced(3, 1);
        d.checkins.extend((0..50).map(|_| ci("anon", "q")));
        d.checkins.push(ci("anon", "lonely"));
        let t = compute_bias(&d, Task::Gender).unwrap();
        let expected = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((t.get(&q("q")).unwrap() - expected).abs() < 1e-15);
        assert_eq!(t.get(&q("lonely")), Some(0.0));
    }

    #[test]
    fn scaling_counts_preserves_bias() {
        let a = compute_bias(&balanced(3, 1), Task::Gender).unwrap();
        let b = compute_bias(&balanced(6, 2), Task::Gender).unwrap();
        assert!((a.get(&q("q")).unwrap() - b.get(&q("q")).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn extension_rescales_only_entity_edges() {
        // u (female): 2 check-ins at q1, 3 at q2. q1 ends up 3 female / 1 male,
        // and global mass is 6 / 6.
        let mut v = vec![ci("u", "q1"), ci("u", "q1"), ci("f2", "q1"), ci("m", "q1")];
        v.extend((0..3).map(|_| ci("u", "q2")));
        v.extend((0..5).map(|_| ci("m", "q3")));
        let d = dataset(
            v,
            labels(&[("u", Gender::Female), ("f2", Gender::Female), ("m", Gender::Male)]),
        );
        let g = build_user_graph(&d).unwrap();
        let t = compute_bias(&d, Task::Gender).unwrap();
        let ext = extend_graph(&g, &t).unwrap();
        let id = |n: &str| g.id_by_name(n).unwrap();
        let (u, q1, q2) = (id("u:u"), id("q:q1@1"), id("q:q2@1"));
        assert!((g.weight(u, q1).unwrap() - 0.4).abs() < 1e-15);
        assert!((t.get(&q("q1")).unwrap() - 0.130812).abs() < 1e-6);
        assert!((ext.weight(u, q1).unwrap() - 0.0523248).abs() < 1e-7);
        assert!((ext.weight(u, q2).unwrap() - 0.6 * t.get(&q("q2")).unwrap()).abs() < 1e-15);
        assert_eq!(g.weight(q1, u), Some(0.5));
        assert_eq!(ext.weight(q1, u), g.weight(q1, u));
        assert_eq!(ext.base_weights(u).unwrap(), g.weights(u));
        for n in g.nodes() {
            assert_eq!(ext.neighbors(n), g.neighbors(n));
            if g.side(n) == Side::Right {
                assert_eq!(ext.weights(n), g.weights(n));
            }
        }
    }

    #[test]
    fn missing_bias_is_an_error() {
        let d = balanced(3, 1);
        let g = build_user_graph(&d).unwrap();
        let mut t = compute_bias(&d, Task::Gender).unwrap();
        t.values.remove(&q("q"));
        assert!(matches!(extend_graph(&g, &t), Err(Error::MissingBias(_))));
    }

    #[test]
    fn constant_one_is_identity() {
        let d = balanced(3, 1);
        let g = build_user_graph(&d).unwrap();
        let ext = extend_graph(&g, &BiasTable::constant(&g, Task::Gender, 1.0)).unwrap();
        for n in g.nodes() {
            assert_eq!(ext.weights(n), g.weights(n));
        }
    }

    #[test]
    fn category_bias_uses_temporal_users() {
        use crate::ingest::{Category, LocationLabel};
        let loc = |id: &str, c| (id.to_string(), LocationLabel { location_id: id.into(), category: c });
        let mut ll = Map::new();
        for (i, c) in Category::ALL.iter().enumerate() {
            let (k, v) = loc(&format!("l{i}"), *c);
            ll.insert(k, v);
        }
        let mut v: Vec<_> = (0..9).map(|i| ci("a", &format!("l{i}"))).collect();
        v.push(ci("b", "l3"));
        let d = Dataset::new(v, Map::new(), ll, 1, HourBuckets::Hourly, 0).unwrap();
        let t = compute_bias(&d, Task::Category).unwrap();
        assert_eq!(t.task.task, Task::Category);
        // b visits only Nightclub, which holds 2 of 10 labeled check-ins.
        let b = t.get(&NodeToken::temporal_user("b", 1)).unwrap();
        assert!((b - (1.0f64 / 0.2).ln()).abs() < 1e-12);
    }

    #[test]
    fn dump_lines() {
        let t = compute_bias(&balanced(4, 0), Task::Gender).unwrap();
        let mut out = Vec::new();
        t.write_dump(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("q:other@1 gender "));
        assert_eq!(text.lines().count(), 2);
    }
}
