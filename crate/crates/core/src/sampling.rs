//! Weighted discrete sampling.
//!
//! [`CumulativeTable`] is a prefix-sum table searched by bisection, used for
//! walk transitions. [`AliasTable`] is Vose's alias method with O(1) draws,
//! used for negative sampling where the same distribution is queried
//! hundreds of millions of times.

use rand::{Rng, RngExt};

use crate::error::{Error, Result};

/// Index of the first prefix sum strictly greater than `x`, clamped to the
/// last entry. Zero-weight entries are never returned for `x` in `[0, total)`.
pub fn search_cumulative(cum: &[f64], x: f64) -> usize {
    cum.partition_point(|&c| c <= x).min(cum.len() - 1)
}

/// Running sums of `weights`.
pub fn prefix_sums(weights: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeTable {
    cum: Vec<f64>,
}

impl CumulativeTable {
    /// `None` when the weights are empty or sum to zero.
    pub fn new(weights: &[f64]) -> Option<Self> {
        let cum = prefix_sums(weights);
        match cum.last() {
            Some(&t) if t > 0.0 => Some(CumulativeTable { cum }),
            _ => None,
        }
    }

    pub fn total(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        search_cumulative(&self.cum, rng.random::<f64>() * self.total())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::Empty("alias table needs at least one weight"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Malformed("alias weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Malformed("alias weights sum to zero".into()));
        }
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![0.0; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are 1 up to rounding.
        for i in small.into_iter().chain(large) {
            prob[i] = 1.0;
        }
        Ok(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }

    /// Probability of drawing each index, reconstructed from the table.
    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.prob.len() as f64;
        let mut p: Vec<f64> = self.prob.iter().map(|q| q / n).collect();
        for (i, &a) in self.alias.iter().enumerate() {
            p[a as usize] += (1.0 - self.prob[i]) / n;
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;

    #[test]
    fn cumulative_skips_zero_weights() {
        let cum = prefix_sums(&[0.0, 1.0, 0.0, 3.0, 0.0]);
        assert_eq!(search_cumulative(&cum, 0.0), 1);
        assert_eq!(search_cumulative(&cum, 0.999), 1);
        assert_eq!(search_cumulative(&cum, 1.0), 3);
        assert_eq!(search_cumulative(&cum, 3.999), 3);
        assert_eq!(search_cumulative(&cum, 4.0), 4);
        assert!(CumulativeTable::new(&[0.0, 0.0]).is_none());
        assert!(CumulativeTable::new(&[]).is_none());
    }

    #[test]
    fn cumulative_frequencies() {
        let t = CumulativeTable::new(&[1.0, 3.0]).unwrap();
        let mut rng = stream(1, Domain::Test, 0);
        let n = 100_000;
        let hits = (0..n).filter(|_| t.sample(&mut rng) == 1).count();
        assert!((hits as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn alias_rejects_bad_weights() {
        assert!(AliasTable::new(&[]).is_err());
        assert!(AliasTable::new(&[0.0]).is_err());
        assert!(AliasTable::new(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn alias_frequencies() {
        let w = [5.0, 0.0, 1.0, 2.0, 2.0];
        let t = AliasTable::new(&w).unwrap();
        let mut rng = stream(2, Domain::Test, 0);
        let n = 200_000;
        let mut hits = [0usize; 5];
        for _ in 0..n {
            hits[t.sample(&mut rng)] += 1;
        }
        assert_eq!(hits[1], 0);
        for (h, w) in hits.iter().zip(w) {
            assert!((*h as f64 / n as f64 - w / 10.0).abs() < 0.005);
        }
    }

    proptest! {
        #[test]
        fn alias_reconstructs_distribution(w in proptest::collection::vec(0.0f64..10.0, 1..50)) {
            prop_assume!(w.iter().sum::<f64>() > 1e-6);
            let t = AliasTable::new(&w).unwrap();
            let total: f64 = w.iter().sum();
            for (p, x) in t.probabilities().iter().zip(&w) {
                prop_assert!((p - x / total).abs() < 1e-9);
            }
        }
    }
}
