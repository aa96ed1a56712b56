use std::collections::HashMap;

use crate::walker::WalkCorpus;

/// Corpus vocabulary ordered by descending frequency, ties by token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    pub tokens: Vec<String>,
    pub counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds the vocabulary and the corpus-token to vocabulary-row map.
    pub fn from_corpus(corpus: &WalkCorpus) -> (Self, Vec<Option<u32>>) {
        let mut counts = vec![0u64; corpus.tokens.len()];
        for walk in &corpus.walks {
            for &t in walk {
                counts[t as usize] += 1;
            }
        }
        let mut present: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
        present.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then_with(|| corpus.tokens[a].cmp(&corpus.tokens[b])));
        let mut remap = vec![None; counts.len()];
        for (row, &t) in present.iter().enumerate() {
            remap[t] = Some(row as u32);
        }
        let tokens: Vec<String> = present.iter().map(|&t| corpus.tokens[t].clone()).collect();
        let vocab = Vocab {
            counts: present.iter().map(|&t| counts[t]).collect(),
            index: tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect(),
            tokens,
        };
        (vocab, remap)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }
}

/// Unigram counts raised to 0.75 and normalized.
pub fn noise_distribution(counts: &[u64]) -> Vec<f64> {
    let powered: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let total: f64 = powered.iter().sum();
    powered.into_iter().map(|p| p / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_and_remap() {
        let corpus = WalkCorpus {
            tokens: vec!["b".into(), "a".into(), "c".into(), "unused".into()],
            walks: vec![vec![0, 1, 2, 1], vec![2, 0]],
        };
        let (v, remap) = Vocab::from_corpus(&corpus);
        assert_eq!(v.tokens, ["a", "b", "c"]);
        assert_eq!(v.counts, [2, 2, 2]);
        assert_eq!(remap, [Some(1), Some(0), Some(2), None]);
        assert_eq!(v.get("unused"), None);
    }

    #[test]
    fn noise_is_count_to_three_quarters() {
        let p = noise_distribution(&[16, 1, 81]);
        let raw = [8.0, 1.0, 27.0];
        let total: f64 = raw.iter().sum();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in p.iter().zip(raw) {
            assert!((a - b / total).abs() < 1e-12);
        }
    }
}
