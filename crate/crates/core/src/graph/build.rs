use std::collections::{BTreeMap, HashMap};

use super::{BipartiteGraph, NodeId, NodeToken};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::task::TargetPartition;

/// Users against temporal-locations: `w(u,q) = c(u,q)/c(u)`, `w(q,u) = c(u,q)/c(q)`.
pub fn build_user_graph(dataset: &Dataset) -> Result<BipartiteGraph> {
    build(
        dataset
            .checkins
            .iter()
            .map(|c| (c.user_id.as_str(), c.location_id.as_str(), dataset.bucket(c))),
        |u: &str| NodeToken::User(u.to_string()),
        |q: &str, h| NodeToken::temporal_location(q, h),
    )
}

/// Locations against temporal-users: `w(l,y) = c(l,y)/c(l)`, `w(y,l) = c(l,y)/c(y)`.
pub fn build_location_graph(dataset: &Dataset) -> Result<BipartiteGraph> {
    build(
        dataset
            .checkins
            .iter()
            .map(|c| (c.location_id.as_str(), c.user_id.as_str(), dataset.bucket(c))),
        |l: &str| NodeToken::Location(l.to_string()),
        |y: &str, h| NodeToken::temporal_user(y, h),
    )
}

/// The graph whose left partition holds the entities of `partition`.
pub fn build_graph_for(dataset: &Dataset, partition: TargetPartition) -> Result<BipartiteGraph> {
    match partition {
        TargetPartition::User => build_user_graph(dataset),
        TargetPartition::Location => build_location_graph(dataset),
    }
}

/// Count-then-normalize over `(entity, other_id, hour)` triples. Nodes are
/// ordered by id (composites by id then hour) and edges by target index.
fn build<'a>(
    triples: impl Iterator<Item = (&'a str, &'a str, u8)> + Clone,
    left_token: impl Fn(&str) -> NodeToken,
    right_token: impl Fn(&str, u8) -> NodeToken,
) -> Result<BipartiteGraph> {
    let mut left: BTreeMap<&str, u32> = BTreeMap::new();
    let mut right: BTreeMap<(&str, u8), u32> = BTreeMap::new();
    for (l, r, h) in triples.clone() {
        left.insert(l, 0);
        right.insert((r, h), 0);
    }
    if left.is_empty() {
        return Err(Error::Empty("dataset has no check-ins"));
    }
    for (i, v) in left.values_mut().enumerate() {
        *v = i as u32;
    }
    for (i, v) in right.values_mut().enumerate() {
        *v = i as u32;
    }

    let mut pair_counts: HashMap<(u32, u32), u32> = HashMap::new();
    for (l, r, h) in triples {
        *pair_counts.entry((left[l], right[&(r, h)])).or_default() += 1;
    }
    let mut pairs: Vec<((u32, u32), u32)> = pair_counts.into_iter().collect();
    pairs.sort_unstable();

    let n_left = left.len();
    let mut left_totals = vec![0u64; n_left];
    let mut right_totals = vec![0u64; right.len()];
    for &((l, r), c) in &pairs {
        left_totals[l as usize] += u64::from(c);
        right_totals[r as usize] += u64::from(c);
    }

    let mut adjacency: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); n_left + right.len()];
    for &((l, r), c) in &pairs {
        let c = f64::from(c);
        adjacency[l as usize].push((NodeId(n_left as u32 + r), c / left_totals[l as usize] as f64));
        adjacency[n_left + r as usize].push((NodeId(l), c / right_totals[r as usize] as f64));
    }
    // Right-side lists were filled in left order already; keep the sort explicit.
    for list in &mut adjacency[n_left..] {
        list.sort_unstable_by_key(|(t, _)| *t);
    }

    let left_tokens = left.keys().map(|l| left_token(l)).collect();
    let right_tokens = right.keys().map(|(r, h)| right_token(r, *h)).collect();
    Ok(BipartiteGraph::from_adjacency(left_tokens, right_tokens, adjacency))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Side;
    use crate::ingest::{CheckIn, HourBuckets};
    use proptest::prelude::*;
    use std::collections::BTreeMap as Map;

    fn ci(user: &str, loc: &str, hour: i64) -> CheckIn {
        CheckIn {
            user_id: user.into(),
            timestamp: hour * 3600,
            latitude: 0.0,
            longitude: 0.0,
            location_id: loc.into(),
        }
    }

    fn dataset(checkins: Vec<CheckIn>) -> Dataset {
        Dataset::new(checkins, Map::new(), Map::new(), 1, HourBuckets::Hourly, 0).unwrap()
    }

    fn w(g: &BipartiteGraph, a: &str, b: &str) -> f64 {
        g.weight(g.id_by_name(a).unwrap(), g.id_by_name(b).unwrap()).unwrap()
    }

    #[test]
    fn single_neighbor_has_unit_weight() {
        let g = build_user_graph(&dataset((0..5).map(|_| ci("u", "x", 3)).collect())).unwrap();
        assert_eq!(g.left_count(), 1);
        assert_eq!(g.right_count(), 1);
        assert_eq!(w(&g, "u:u", "q:x@4"), 1.0);
    }

    #[test]
    fn user_side_proportions() {
        let mut v = vec![ci("u", "a", 0), ci("u", "a", 0)];
        v.extend((0..3).map(|_| ci("u", "b", 0)));
        let g = build_user_graph(&dataset(v)).unwrap();
        assert!((w(&g, "u:u", "q:a@1") - 0.4).abs() < 1e-15);
        assert!((w(&g, "u:u", "q:b@1") - 0.6).abs() < 1e-15);
    }

    #[test]
    fn composite_side_proportions() {
        let v = vec![ci("u", "a", 0), ci("v", "a", 0), ci("v", "a", 0), ci("w", "a", 0)];
        let g = build_user_graph(&dataset(v)).unwrap();
        assert_eq!(w(&g, "q:a@1", "u:u"), 0.25);
        assert_eq!(w(&g, "q:a@1", "u:v"), 0.5);
    }

    #[test]
    fn location_graph_weights() {
        let g = build_location_graph(&dataset(vec![ci("u", "l", 5)])).unwrap();
        assert_eq!(w(&g, "l:l", "y:u@6"), 1.0);

        let g = build_location_graph(&dataset(vec![ci("u", "l", 5), ci("v", "l", 5)])).unwrap();
        assert_eq!(w(&g, "l:l", "y:u@6"), 0.5);
        assert_eq!(w(&g, "l:l", "y:v@6"), 0.5);

        // c(l,y) = 3 and c(y) = 6.
        let mut v: Vec<_> = (0..3).map(|_| ci("u", "l", 5)).collect();
        v.extend((0..3).map(|_| ci("u", "m", 5)));
        let g = build_location_graph(&dataset(v)).unwrap();
        assert_eq!(w(&g, "y:u@6", "l:l"), 0.5);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(matches!(build_user_graph(&dataset(vec![])), Err(Error::Empty(_))));
    }

    #[test]
    fn collapsed_hours_give_one_composite_per_location() {
        let v = vec![ci("u", "a", 1), ci("u", "a", 9), ci("v", "b", 20)];
        let d = dataset(v).with_buckets(HourBuckets::Collapsed);
        let g = build_user_graph(&d).unwrap();
        assert_eq!(g.right_count(), 2);
        assert!(g.id_by_name("q:a@1").is_some());
    }

    proptest! {
        #[test]
        fn unbiased_weights_are_stochastic(
            raw in proptest::collection::vec((0u8..15, 0u8..10, 0i64..24), 1..400)
        ) {
            let v: Vec<_> = raw.iter().map(|(u, l, h)| ci(&format!("u{u}"), &format!("l{l}"), *h)).collect();
            let d = dataset(v);
            for g in [build_user_graph(&d).unwrap(), build_location_graph(&d).unwrap()] {
                for n in g.nodes() {
                    prop_assert!((g.out_weight_sum(n) - 1.0).abs() < 1e-9);
                    for &t in g.neighbors(n) {
                        prop_assert_ne!(g.side(n), g.side(t));
                    }
                    prop_assert!(g.weights(n).iter().all(|&x| x >= 0.0));
                }
                prop_assert!(g.nodes().take(g.left_count()).all(|n| g.side(n) == Side::Left));
            }
        }
    }
}
