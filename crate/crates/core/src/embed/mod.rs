//! Skip-gram embeddings trained with negative sampling.
//!
//! Each node token has an input vector (the feature returned to callers) and
//! an output vector used only while training. Input vectors start uniform in
//! `[-0.5/d, 0.5/d]`, output vectors at zero. Negatives are drawn from the
//! corpus unigram distribution raised to 0.75 over the whole vocabulary. The
//! learning rate decays linearly from `initial_lr` to `min_lr` over all
//! processed (center, context) pairs.
//!
//! With `threads == 1` training is a single deterministic pass order. With
//! more threads, walk shards are processed concurrently and update the shared
//! matrices without synchronization.

mod io;
mod sgns;
mod vocab;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::RngExt;
use serde::{Deserialize, Serialize};

pub use io::{read_vectors, write_vectors};
pub use vocab::{noise_distribution, Vocab};

use crate::error::{Error, Result};
use crate::rng::{stream, ChaCha8Rng, Domain};
use crate::sampling::AliasTable;
use crate::walker::WalkCorpus;
use sgns::{pair_loss_raw, sgd_step};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dimension: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f32,
    pub min_lr: f32,
    pub seed: u64,
    /// 1 = deterministic single-threaded training.
    pub threads: usize,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dimension: 128,
            window: 10,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            min_lr: 1e-4,
            seed: 1,
            threads: 1,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.dimension < 1 {
            return bad("dimension must be at least 1");
        }
        if self.window < 1 {
            return bad("window must be at least 1");
        }
        if self.negatives < 1 {
            return bad("negatives must be at least 1");
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.initial_lr > 0.0) || !(self.min_lr >= 0.0) || self.min_lr > self.initial_lr {
            return bad("learning rates must satisfy 0 <= min_lr <= initial_lr, initial_lr > 0");
        }
        if self.threads < 1 {
            return bad("threads must be at least 1");
        }
        Ok(())
    }
}

/// Token vectors addressable by name.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVectors {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f32>,
}

impl NodeVectors {
    pub fn new(vocab: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != vocab.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: vocab.len() * dim,
                actual: data.len(),
            });
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, t) in vocab.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Malformed(format!("duplicate token `{t}`")));
            }
        }
        Ok(NodeVectors { vocab, index, dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn vector(&self, token: &str) -> Result<&[f32]> {
        self.index_of(token)
            .map(|i| self.row(i))
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Input vectors plus the output (context) vectors used by the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub input: NodeVectors,
    output: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn dim(&self) -> usize {
        self.input.dim
    }

    pub fn vocab(&self) -> &[String] {
        &self.input.vocab
    }

    pub fn node_vector(&self, token: &str) -> Result<&[f32]> {
        self.input.vector(token)
    }

    pub fn output_vector(&self, token: &str) -> Result<&[f32]> {
        let i = self.row(token)?;
        Ok(&self.output[i * self.dim()..(i + 1) * self.dim()])
    }

    pub fn into_vectors(self) -> NodeVectors {
        self.input
    }

    /// Builds a matrix from explicit rows (used for hand-constructed cases).
    pub fn from_parts(vocab: Vec<String>, dim: usize, input: Vec<f32>, output: Vec<f32>) -> Result<Self> {
        if output.len() != input.len() {
            return Err(Error::DimensionMismatch {
                expected: input.len(),
                actual: output.len(),
            });
        }
        Ok(EmbeddingMatrix {
            input: NodeVectors::new(vocab, dim, input)?,
            output,
        })
    }

    fn row(&self, token: &str) -> Result<usize> {
        self.input
            .index_of(token)
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    pub fn is_finite(&self) -> bool {
        self.input.data.iter().chain(&self.output).all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f32 {
        self.input
            .data
            .iter()
            .chain(&self.output)
            .fold(0.0f32, |m, x| m.max(x.abs()))
    }
}

pub fn node_vector<'m>(matrix: &'m EmbeddingMatrix, token: &str) -> Result<&'m [f32]> {
    matrix.node_vector(token)
}

/// All `(walk[i], walk[j])` with `0 < |i - j| <= window`, grouped by center.
pub fn extract_pairs<T: Copy>(walk: &[T], window: usize) -> Vec<(T, T)> {
    let mut pairs = Vec::new();
    for i in 0..walk.len() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(walk.len());
        for j in lo..hi {
            if j != i {
                pairs.push((walk[i], walk[j]));
            }
        }
    }
    pairs
}

/// Number of pairs [`extract_pairs`] yields for a walk of length `n`.
pub fn pair_count(n: usize, window: usize) -> usize {
    (0..n)
        .map(|i| i.min(window) + (n - 1 - i).min(window))
        .sum()
}

/// Negative-sampling loss of one tuple, evaluated in double precision.
pub fn pair_loss(matrix: &EmbeddingMatrix, center: &str, context: &str, negatives: &[&str]) -> Result<f64> {
    let widen = |v: &[f32]| v.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>();
    let c = widen(matrix.node_vector(center)?);
    let o = widen(matrix.output_vector(context)?);
    let negs = negatives
        .iter()
        .map(|n| matrix.output_vector(n).map(widen))
        .collect::<Result<Vec<_>>>()?;
    Ok(pair_loss_raw(&c, &o, negs.iter().map(Vec::as_slice)))
}

/// Negative-sampling loss of raw vectors.
pub fn pair_loss_vectors(center: &[f64], context_out: &[f64], negatives_out: &[&[f64]]) -> f64 {
    pair_loss_raw(center, context_out, negatives_out.iter().copied())
}

/// Gradients of [`pair_loss_vectors`] as computed by the training update.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Runs one training step with unit learning rate on copies of the vectors
/// and reads the gradient back from the parameter changes.
pub fn pair_loss_gradient(center: &[f64], context_out: &[f64], negatives_out: &[&[f64]]) -> PairGradient {
    let d = center.len();
    let mut c = center.to_vec();
    let mut output: Vec<f64> = context_out.to_vec();
    for n in negatives_out {
        output.extend_from_slice(n);
    }
    let before = output.clone();
    let targets: Vec<(usize, bool)> = (0..=negatives_out.len()).map(|r| (r, r == 0)).collect();
    let mut scratch = vec![0.0; d];
    sgd_step(&mut c, &mut output, &targets, 1.0, &mut scratch);
    let grad = |new: &[f64], old: &[f64]| old.iter().zip(new).map(|(o, n)| o - n).collect::<Vec<f64>>();
    PairGradient {
        center: grad(&c, center),
        context: grad(&output[..d], &before[..d]),
        negatives: (1..=negatives_out.len())
            .map(|r| grad(&output[r * d..(r + 1) * d], &before[r * d..(r + 1) * d]))
            .collect(),
    }
}

/// `-ln p(context | center)` under the full softmax over the vocabulary.
/// Reference only: cost is linear in the vocabulary size.
pub fn full_softmax_loss(matrix: &EmbeddingMatrix, center: &str, context: &str) -> Result<f64> {
    let c = matrix.node_vector(center)?;
    let target = matrix.row(context)?;
    let d = matrix.dim();
    let scores: Vec<f64> = (0..matrix.vocab().len())
        .map(|m| {
            matrix.output[m * d..(m + 1) * d]
                .iter()
                .zip(c)
                .map(|(&a, &b)| f64::from(a) * f64::from(b))
                .sum()
        })
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(lse - scores[target])
}

/// Trains on `corpus` for `config.epochs` passes.
pub fn train(corpus: &WalkCorpus, config: &SkipGramConfig) -> Result<EmbeddingMatrix> {
    train_with_monitor(corpus, config, |_, _| {})
}

/// Like [`train`], calling `monitor(epoch, &matrix)` before the first epoch
/// (with 0) and after each completed epoch.
pub fn train_with_monitor(
    corpus: &WalkCorpus,
    config: &SkipGramConfig,
    mut monitor: impl FnMut(usize, &EmbeddingMatrix),
) -> Result<EmbeddingMatrix> {
    config.validate()?;
    let (vocab, remap) = Vocab::from_corpus(corpus);
    if vocab.is_empty() {
        return Err(Error::Empty("walk corpus has no tokens"));
    }
    let walks: Vec<Vec<u32>> = corpus
        .walks
        .iter()
        .filter(|w| w.len() > 1)
        .map(|w| w.iter().map(|&t| remap[t as usize].expect("token counted")).collect())
        .collect();
    let noise = AliasTable::new(&noise_distribution(&vocab.counts))?;

    let d = config.dimension;
    let mut init_rng = stream(config.seed, Domain::EmbedInit, 0);
    let half = 0.5 / d as f32;
    let input: Vec<f32> = (0..vocab.len() * d)
        .map(|_| init_rng.random_range(-half..half))
        .collect();
    let mut matrix = EmbeddingMatrix {
        input: NodeVectors::new(vocab.tokens.clone(), d, input)?,
        output: vec![0.0; vocab.len() * d],
    };

    let per_epoch: usize = walks.iter().map(|w| pair_count(w.len(), config.window)).sum();
    let schedule = LrSchedule {
        initial: config.initial_lr,
        min: config.min_lr,
        total: (per_epoch * config.epochs).max(1),
    };
    monitor(0, &matrix);
    let mut rngs: Vec<ChaCha8Rng> = (0..config.threads)
        .map(|t| stream(config.seed, Domain::EmbedNegatives, t as u64))
        .collect();
    for epoch in 0..config.epochs {
        let done = epoch * per_epoch;
        if config.threads == 1 {
            let mut job = Job {
                walks: &walks,
                window: config.window,
                negatives: config.negatives,
                noise: &noise,
                schedule,
                dim: d,
            };
            job.run(&mut matrix.input.data, &mut matrix.output, &mut rngs[0], done, None);
        } else {
            hogwild_epoch(&walks, config, &noise, schedule, done, &mut matrix, &mut rngs);
        }
        monitor(epoch + 1, &matrix);
    }
    Ok(matrix)
}

#[derive(Debug, Clone, Copy)]
struct LrSchedule {
    initial: f32,
    min: f32,
    total: usize,
}

impl LrSchedule {
    fn at(&self, done: usize) -> f32 {
        let frac = (done as f64 / self.total as f64).min(1.0) as f32;
        (self.initial - (self.initial - self.min) * frac).max(self.min)
    }
}

struct Job<'a> {
    walks: &'a [Vec<u32>],
    window: usize,
    negatives: usize,
    noise: &'a AliasTable,
    schedule: LrSchedule,
    dim: usize,
}

impl Job<'_> {
    /// Processes every walk in order. `done` is the global pair count at the
    /// start; with `progress` set it is shared with other workers.
    fn run(
        &mut self,
        input: &mut [f32],
        output: &mut [f32],
        rng: &mut ChaCha8Rng,
        mut done: usize,
        progress: Option<&AtomicUsize>,
    ) {
        let d = self.dim;
        let mut scratch = vec![0.0f32; d];
        let mut targets = Vec::with_capacity(self.negatives + 1);
        let mut local = 0usize;
        for walk in self.walks {
            let n = walk.len();
            for i in 0..n {
                let lr = match progress {
                    Some(p) => self.schedule.at(p.load(Ordering::Relaxed) + local),
                    None => self.schedule.at(done),
                };
                let c = walk[i] as usize;
                let center = &mut input[c * d..(c + 1) * d];
                let lo = i.saturating_sub(self.window);
                let hi = (i + self.window + 1).min(n);
                for (j, &ctx) in walk.iter().enumerate().take(hi).skip(lo) {
                    if j == i {
                        continue;
                    }
                    let ctx = ctx as usize;
                    targets.clear();
                    targets.push((ctx, true));
                    for _ in 0..self.negatives {
                        let neg = self.noise.sample(rng);
                        if neg != ctx {
                            targets.push((neg, false));
                        }
                    }
                    sgd_step(center, output, &targets, lr, &mut scratch);
                }
                let processed = hi - lo - 1;
                done += processed;
                local += processed;
                if let Some(p) = progress {
                    if local >= 4096 {
                        p.fetch_add(local, Ordering::Relaxed);
                        local = 0;
                    }
                }
            }
        }
        if let Some(p) = progress {
            p.fetch_add(local, Ordering::Relaxed);
        }
    }
}

/// Raw view of a matrix shared between hogwild workers.
#[derive(Clone, Copy)]
struct SharedRows {
    ptr: *mut f32,
    len: usize,
}

// SAFETY: workers write to overlapping rows without synchronization. Lost or
// torn updates of individual floats are accepted by the training contract;
// the buffer outlives the scoped threads that use it.
unsafe impl Send for SharedRows {}
unsafe impl Sync for SharedRows {}

impl SharedRows {
    fn new(v: &mut [f32]) -> Self {
        SharedRows {
            ptr: v.as_mut_ptr(),
            len: v.len(),
        }
    }

    /// # Safety
    /// The caller accepts unsynchronized concurrent access to the buffer.
    #[allow(clippy::mut_from_ref)]
    unsafe fn slice(&self) -> &mut [f32] {
        std::slice::from_raw_parts_mut(self.ptr, self.len)
    }
}

fn hogwild_epoch(
    walks: &[Vec<u32>],
    config: &SkipGramConfig,
    noise: &AliasTable,
    schedule: LrSchedule,
    done: usize,
    matrix: &mut EmbeddingMatrix,
    rngs: &mut [ChaCha8Rng],
) {
    let input = SharedRows::new(&mut matrix.input.data);
    let output = SharedRows::new(&mut matrix.output);
    let progress = AtomicUsize::new(done);
    let shard = walks.len().div_ceil(config.threads).max(1);
    std::thread::scope(|s| {
        for (chunk, rng) in walks.chunks(shard).zip(rngs.iter_mut()) {
            let progress = &progress;
            s.spawn(move || {
                let mut job = Job {
                    walks: chunk,
                    window: config.window,
                    negatives: config.negatives,
                    noise,
                    schedule,
                    dim: config.dimension,
                };
                // SAFETY: see `SharedRows`.
                let (inp, out) = unsafe { (input.slice(), output.slice()) };
                job.run(inp, out, rng, done, Some(progress));
            });
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_corpus() -> WalkCorpus {
        // Two communities {a,b,c} and {x,y,z} linked rarely.
        let tokens: Vec<String> = ["a", "b", "c", "x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let mut walks = Vec::new();
        for k in 0..60u32 {
            let base = if k % 2 == 0 { 0 } else { 3 };
            walks.push((0..20).map(|i| base + (i * 7 + k) % 3).collect());
        }
        WalkCorpus { tokens, walks }
    }

    fn small_config() -> SkipGramConfig {
        SkipGramConfig {
            dimension: 8,
            window: 2,
            negatives: 3,
            epochs: 5,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn pairs_by_definition() {
        assert_eq!(extract_pairs(&['a', 'b', 'c'], 1), vec![('a', 'b'), ('b', 'a'), ('b', 'c'), ('c', 'b')]);
        assert!(extract_pairs(&['a'], 3).is_empty());
        assert_eq!(extract_pairs(&['a', 'b', 'c', 'd'], 2).len(), 10);
        for n in 0..30 {
            for w in 1..12 {
                let walk: Vec<usize> = (0..n).collect();
                assert_eq!(extract_pairs(&walk, w).len(), pair_count(n, w));
            }
        }
    }

    #[test]
    fn zero_matrix_loss_baseline() {
        let vocab: Vec<String> = (0..7).map(|i| format!("t{i}")).collect();
        let m = EmbeddingMatrix::from_parts(vocab, 3, vec![0.0; 21], vec![0.0; 21]).unwrap();
        let l = pair_loss(&m, "t0", "t1", &["t2", "t3", "t4", "t5", "t6"]).unwrap();
        assert!((l - 6.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((l - 4.158883).abs() < 1e-6);
        assert!(matches!(pair_loss(&m, "nope", "t1", &[]), Err(Error::UnknownToken(_))));
    }

    #[test]
    fn hand_pair_loss() {
        let vocab = vec!["c".to_string(), "o".to_string(), "n".to_string()];
        let input = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let output = vec![0.0, 0.0, 1.0, 0.0, -1.0, 0.0];
        let m = EmbeddingMatrix::from_parts(vocab, 2, input, output).unwrap();
        assert!((pair_loss(&m, "c", "o", &["n"]).unwrap() - 0.626523).abs() < 1e-6);
    }

    #[test]
    fn learning_rate_is_linear() {
        let s = LrSchedule { initial: 0.025, min: 1e-4, total: 100 };
        assert_eq!(s.at(0), 0.025);
        assert!((s.at(50) - (0.025 - 0.0249 * 0.5)).abs() < 1e-9);
        assert!((s.at(100) - 1e-4).abs() < 1e-9);
        assert!((s.at(1000) - 1e-4).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(SkipGramConfig::default().validate().is_ok());
        for bad in [
            SkipGramConfig { dimension: 0, ..Default::default() },
            SkipGramConfig { window: 0, ..Default::default() },
            SkipGramConfig { negatives: 0, ..Default::default() },
            SkipGramConfig { epochs: 0, ..Default::default() },
            SkipGramConfig { min_lr: 0.5, ..Default::default() },
            SkipGramConfig { threads: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(train(&WalkCorpus::default(), &small_config()), Err(Error::Empty(_))));
    }

    #[test]
    fn initialization_ranges() {
        let mut seen = None;
        let _ = train_with_monitor(&toy_corpus(), &small_config(), |e, m| {
            if e == 0 {
                seen = Some(m.clone());
            }
        })
        .unwrap();
        let m = seen.unwrap();
        let half = 0.5 / 8.0;
        assert!(m.input.as_slice().iter().all(|x| x.abs() <= half));
        assert!(m.output.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_and_vocab_lookup() {
        let a = train(&toy_corpus(), &small_config()).unwrap();
        let b = train(&toy_corpus(), &small_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.node_vector("a").unwrap().len(), 8);
        assert!(matches!(a.node_vector("missing"), Err(Error::UnknownToken(_))));
        let c = train(&toy_corpus(), &SkipGramConfig { seed: 6, ..small_config() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn communities_separate() {
        let m = train(&toy_corpus(), &SkipGramConfig { epochs: 20, ..small_config() }).unwrap();
        let cos = |p: &str, q: &str| {
            let (u, v) = (m.node_vector(p).unwrap(), m.node_vector(q).unwrap());
            let d: f32 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            let n = |w: &[f32]| w.iter().map(|a| a * a).sum::<f32>().sqrt();
            d / (n(u) * n(v))
        };
        assert!(cos("a", "b") > cos("a", "x"));
        assert!(cos("y", "z") > cos("y", "c"));
    }

    #[test]
    fn hogwild_mode_trains() {
        let cfg = SkipGramConfig { threads: 3, ..small_config() };
        let pairs: Vec<(String, String)> = extract_pairs(&toy_corpus().walks[0], 2)
            .into_iter()
            .map(|(c, o)| (toy_corpus().tokens[c as usize].clone(), toy_corpus().tokens[o as usize].clone()))
            .collect();
        let mut losses = Vec::new();
        let m = train_with_monitor(&toy_corpus(), &cfg, |_, m| {
            let l: f64 = pairs
                .iter()
                .map(|(c, o)| pair_loss(m, c, o, &["x", "y"]).unwrap())
                .sum::<f64>()
                / pairs.len() as f64;
            losses.push(l);
        })
        .unwrap();
        assert!(m.is_finite());
        assert!(losses.last().unwrap() < &losses[0]);
    }

    #[test]
    fn full_softmax_reference() {
        let vocab: Vec<String> = (0..4).map(|i| format!("t{i}")).collect();
        let m = EmbeddingMatrix::from_parts(vocab, 2, vec![0.0; 8], vec![0.0; 8]).unwrap();
        // Uniform scores: -ln(1/4).
        assert!((full_softmax_loss(&m, "t0", "t1").unwrap() - 4f64.ln()).abs() < 1e-12);

        let corpus = toy_corpus();
        let before = {
            let mut first = None;
            let trained = train_with_monitor(&corpus, &small_config(), |e, m| {
                if e == 0 {
                    first = Some(full_softmax_loss(m, "a", "b").unwrap());
                }
            })
            .unwrap();
            (first.unwrap(), full_softmax_loss(&trained, "a", "b").unwrap())
        };
        assert!((before.0 - 6f64.ln()).abs() < 1e-9);
        assert!(before.1 < before.0);
    }
}
