//! Collapsed Gibbs sampler for the Dirichlet multinomial mixture (GSDMM).
//!
//! Every document belongs to exactly one cluster. With the document's own
//! counts removed from the state, the probability of moving it to cluster `k`
//! is proportional to
//!
//! ```text
//!   (m_k + α) / (D − 1 + K·α)
//!     × Π_{w∈d} Π_{j=1..N_d^w} (n_k^w + β + j − 1)
//!     / Π_{i=1..N_d} (n_k + V·β + i − 1)
//! ```
//!
//! The first factor prefers large clusters, the second prefers clusters whose
//! words overlap the document. The product is evaluated in log space and
//! normalized after subtracting the maximum.
//!
//! Randomness comes from a single [`ChaCha8Rng`] seeded with
//! `seed_from_u64(config.seed)`, so a `(corpus, config)` pair always produces
//! the same trajectory.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::preprocess::TokenDoc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsdmmConfig {
    /// number of tables; an upper bound on the clusters found
    pub k_max: usize,
    pub alpha: f64,
    pub beta: f64,
    pub n_iters: usize,
    pub seed: u64,
}

impl Default for GsdmmConfig {
    fn default() -> Self {
        Self {
            k_max: 40,
            alpha: 0.1,
            beta: 0.1,
            n_iters: 30,
            seed: 0,
        }
    }
}

impl GsdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::InvalidParameter("k_max must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha {} must be > 0",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta {} must be > 0",
                self.beta
            )));
        }
        Ok(())
    }
}

/// One document as `(word id, multiplicity)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocCounts {
    words: Vec<(u32, u32)>,
    len: u32,
}

impl DocCounts {
    pub fn from_tokens(tokens: &[u32]) -> Self {
        let mut ids = tokens.to_vec();
        ids.sort_unstable();
        let mut words: Vec<(u32, u32)> = Vec::new();
        for id in ids {
            match words.last_mut() {
                Some((last, n)) if *last == id => *n += 1,
                _ => words.push((id, 1)),
            }
        }
        Self {
            words,
            len: tokens.len() as u32,
        }
    }

    pub fn words(&self) -> &[(u32, u32)] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// The sampler's view of a corpus.
#[derive(Debug, Clone)]
pub struct DocSet {
    docs: Vec<DocCounts>,
    vocab_size: usize,
}

impl DocSet {
    /// Build from token-id sequences. Every document must be non-empty and
    /// every id below `vocab_size`.
    pub fn new<D: AsRef<[u32]>>(docs: &[D], vocab_size: usize) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if vocab_size == 0 {
            return Err(Error::InvalidParameter("vocabulary is empty".into()));
        }
        let mut out = Vec::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            let d = d.as_ref();
            if d.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "document {i} has no tokens"
                )));
            }
            if let Some(bad) = d.iter().find(|&&w| w as usize >= vocab_size) {
                return Err(Error::InvalidParameter(format!(
                    "document {i}: token id {bad} outside vocabulary of {vocab_size}"
                )));
            }
            out.push(DocCounts::from_tokens(d));
        }
        Ok(Self {
            docs: out,
            vocab_size,
        })
    }

    pub fn from_token_docs(docs: &[TokenDoc], vocab: &Vocabulary) -> Result<Self> {
        let ids: Vec<&[u32]> = docs.iter().map(|d| d.tokens.as_slice()).collect();
        Self::new(&ids, vocab.len())
    }

    pub fn docs(&self) -> &[DocCounts] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }
}

/// Sufficient statistics of the sampler plus the label of every document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GsdmmState {
    num_docs: usize,
    vocab_size: usize,
    k_max: usize,
    labels: Vec<usize>,
    /// documents per cluster
    cluster_docs: Vec<u64>,
    /// word tokens per cluster
    cluster_words: Vec<u64>,
    /// per-cluster word counts, row-major `k * V + w`
    word_counts: Vec<u32>,
}

impl GsdmmState {
    fn empty(num_docs: usize, vocab_size: usize, k_max: usize) -> Self {
        Self {
            num_docs,
            vocab_size,
            k_max,
            labels: vec![0; num_docs],
            cluster_docs: vec![0; k_max],
            cluster_words: vec![0; k_max],
            word_counts: vec![0; k_max * vocab_size],
        }
    }

    /// Assign every document a uniformly random cluster.
    pub fn init<R: Rng>(corpus: &DocSet, config: &GsdmmConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let labels: Vec<usize> = (0..corpus.len())
            .map(|_| rng.random_range(0..config.k_max))
            .collect();
        Self::from_labels(corpus, config.k_max, labels)
    }

    /// Rebuild all counts from scratch for the given labels.
    pub fn from_labels(corpus: &DocSet, k_max: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != corpus.len() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} documents",
                labels.len(),
                corpus.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&k| k >= k_max) {
            return Err(Error::InvalidParameter(format!(
                "label {bad} >= k_max {k_max}"
            )));
        }
        let mut state = Self::empty(corpus.len(), corpus.vocab_size(), k_max);
        for (doc, &k) in corpus.docs().iter().zip(&labels) {
            state.add_doc(doc, k);
        }
        state.labels = labels;
        Ok(state)
    }

    pub fn add_doc(&mut self, doc: &DocCounts, k: usize) {
        self.cluster_docs[k] += 1;
        self.cluster_words[k] += doc.len as u64;
        let row = k * self.vocab_size;
        for &(w, c) in &doc.words {
            self.word_counts[row + w as usize] += c;
        }
    }

    pub fn remove_doc(&mut self, doc: &DocCounts, k: usize) {
        self.cluster_docs[k] -= 1;
        self.cluster_words[k] -= doc.len as u64;
        let row = k * self.vocab_size;
        for &(w, c) in &doc.words {
            self.word_counts[row + w as usize] -= c;
        }
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn cluster_docs(&self) -> &[u64] {
        &self.cluster_docs
    }

    pub fn cluster_words(&self) -> &[u64] {
        &self.cluster_words
    }

    pub fn word_count(&self, k: usize, w: usize) -> u32 {
        self.word_counts[k * self.vocab_size + w]
    }

    pub fn non_empty_clusters(&self) -> usize {
        self.cluster_docs.iter().filter(|&&m| m > 0).count()
    }

    /// True when the incremental counts equal a from-scratch recount.
    pub fn is_consistent(&self, corpus: &DocSet) -> bool {
        match Self::from_labels(corpus, self.k_max, self.labels.clone()) {
            Ok(fresh) => fresh == *self,
            Err(_) => false,
        }
    }
}

/// Unnormalized log weight of cluster `k` for `doc`, with the document's
/// counts already removed from `state`.
fn log_weight(doc: &DocCounts, state: &GsdmmState, config: &GsdmmConfig, k: usize) -> f64 {
    let v_beta = state.vocab_size as f64 * config.beta;
    let mut lp = (state.cluster_docs[k] as f64 + config.alpha).ln();
    let row = k * state.vocab_size;
    for &(w, c) in &doc.words {
        let base = state.word_counts[row + w as usize] as f64 + config.beta;
        for j in 0..c {
            lp += (base + j as f64).ln();
        }
    }
    let base = state.cluster_words[k] as f64 + v_beta;
    for i in 0..doc.len {
        lp -= (base + i as f64).ln();
    }
    lp
}

/// Log of the cluster-independent prior normalizer `D − 1 + K·α`.
fn log_prior_norm(state: &GsdmmState, config: &GsdmmConfig) -> f64 {
    (state.num_docs as f64 - 1.0 + state.k_max as f64 * config.alpha).ln()
}

/// Unnormalized log conditional for every cluster.
pub fn log_conditional(doc: &DocCounts, state: &GsdmmState, config: &GsdmmConfig) -> Vec<f64> {
    let norm = log_prior_norm(state, config);
    let mut empty_value: Option<f64> = None;
    (0..state.k_max)
        .map(|k| {
            // all empty clusters share one value
            if state.cluster_docs[k] == 0 {
                *empty_value.get_or_insert_with(|| log_weight(doc, state, config, k) - norm)
            } else {
                log_weight(doc, state, config, k) - norm
            }
        })
        .collect()
}

fn normalize_log(mut lp: Vec<f64>) -> Vec<f64> {
    let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in lp.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in lp.iter_mut() {
        *x /= total;
    }
    lp
}

/// Normalized conditional distribution over clusters for `doc`, which must
/// already be removed from `state`.
pub fn conditional(doc: &DocCounts, state: &GsdmmState, config: &GsdmmConfig) -> Vec<f64> {
    normalize_log(log_conditional(doc, state, config))
}

fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left u past the last bucket
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// One sweep over the corpus in document order. Returns the number of
/// documents that changed cluster.
pub fn gibbs_iteration<R: Rng>(
    state: &mut GsdmmState,
    corpus: &DocSet,
    config: &GsdmmConfig,
    rng: &mut R,
) -> usize {
    let mut moved = 0;
    for (i, doc) in corpus.docs().iter().enumerate() {
        let old = state.labels[i];
        state.remove_doc(doc, old);
        let probs = conditional(doc, state, config);
        let new = sample_index(&probs, rng);
        state.add_doc(doc, new);
        state.labels[i] = new;
        if new != old {
            moved += 1;
        }
    }
    moved
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub state: GsdmmState,
    /// non-empty cluster count after each iteration
    pub trajectory: Vec<usize>,
}

/// Initialize and run `config.n_iters` sweeps.
pub fn fit(corpus: &DocSet, config: &GsdmmConfig) -> Result<FitResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = GsdmmState::init(corpus, config, &mut rng)?;
    let mut trajectory = Vec::with_capacity(config.n_iters);
    for it in 0..config.n_iters {
        let moved = gibbs_iteration(&mut state, corpus, config, &mut rng);
        let clusters = state.non_empty_clusters();
        log::debug!("gsdmm iter {}: moved {moved}, clusters {clusters}", it + 1);
        trajectory.push(clusters);
    }
    Ok(FitResult { state, trajectory })
}

/// Estimated word distribution of cluster `k`: `(n_k^w + β) / (n_k + V·β)`.
pub fn phi_hat(state: &GsdmmState, config: &GsdmmConfig, k: usize, w: usize) -> f64 {
    (state.word_count(k, w) as f64 + config.beta)
        / (state.cluster_words[k] as f64 + state.vocab_size as f64 * config.beta)
}

/// Estimated cluster weight: `(m_k + α) / (D + K·α)`.
pub fn theta_hat(state: &GsdmmState, config: &GsdmmConfig, k: usize) -> f64 {
    (state.cluster_docs[k] as f64 + config.alpha)
        / (state.num_docs as f64 + state.k_max as f64 * config.alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopWord {
    pub token: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub doc_count: u64,
    pub word_count: u64,
    pub top_words: Vec<TopWord>,
}

/// Non-empty clusters by descending document count (ties by id), each with
/// its `top_n` words by descending φ̂ (ties by token id).
pub fn summarize(
    state: &GsdmmState,
    config: &GsdmmConfig,
    vocab: &Vocabulary,
    top_n: usize,
) -> Vec<ClusterSummary> {
    let mut clusters: Vec<usize> = (0..state.k_max)
        .filter(|&k| state.cluster_docs[k] > 0)
        .collect();
    clusters.sort_by(|&a, &b| {
        state.cluster_docs[b]
            .cmp(&state.cluster_docs[a])
            .then(a.cmp(&b))
    });
    clusters
        .into_iter()
        .map(|k| {
            // φ̂ is monotone in n_k^w within a cluster, so rank by counts
            let mut words: Vec<usize> = (0..state.vocab_size).collect();
            words.sort_by(|&a, &b| {
                state
                    .word_count(k, b)
                    .cmp(&state.word_count(k, a))
                    .then(a.cmp(&b))
            });
            let top_words = words
                .into_iter()
                .take(top_n)
                .map(|w| TopWord {
                    token: vocab.token(w as u32).unwrap_or_default().to_string(),
                    weight: phi_hat(state, config, k, w),
                })
                .collect();
            ClusterSummary {
                cluster: k,
                doc_count: state.cluster_docs[k],
                word_count: state.cluster_words[k],
                top_words,
            }
        })
        .collect()
}

/// Fraction of documents whose cluster's majority reference label equals
/// their own reference label.
pub fn purity(labels: &[usize], reference: &[usize]) -> f64 {
    assert_eq!(
        labels.len(),
        reference.len(),
        "label vectors differ in length"
    );
    if labels.is_empty() {
        return 0.0;
    }
    let mut table: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
    for (&k, &r) in labels.iter().zip(reference) {
        *table.entry(k).or_default().entry(r).or_default() += 1;
    }
    let majority: usize = table
        .values()
        .map(|counts| counts.values().copied().max().unwrap_or(0))
        .sum();
    majority as f64 / labels.len() as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocLabel {
    pub doc_id: String,
    pub cluster: usize,
}

/// JSON export of a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelExport {
    pub config: GsdmmConfig,
    pub num_docs: usize,
    pub vocab_size: usize,
    /// non-empty cluster count after each iteration
    pub trajectory: Vec<usize>,
    /// documents per cluster, all `k_max` entries
    pub cluster_docs: Vec<u64>,
    /// word tokens per cluster, all `k_max` entries
    pub cluster_words: Vec<u64>,
    pub clusters: Vec<ClusterSummary>,
    pub labels: Vec<DocLabel>,
}

impl ModelExport {
    pub fn new(
        fit: &FitResult,
        config: &GsdmmConfig,
        docs: &[TokenDoc],
        vocab: &Vocabulary,
        top_n: usize,
    ) -> Self {
        let state = &fit.state;
        Self {
            config: *config,
            num_docs: state.num_docs,
            vocab_size: state.vocab_size,
            trajectory: fit.trajectory.clone(),
            cluster_docs: state.cluster_docs.clone(),
            cluster_words: state.cluster_words.clone(),
            clusters: summarize(state, config, vocab, top_n),
            labels: docs
                .iter()
                .zip(state.labels())
                .map(|(d, &k)| DocLabel {
                    doc_id: d.doc_id.clone(),
                    cluster: k,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k_max: usize) -> GsdmmConfig {
        GsdmmConfig {
            k_max,
            n_iters: 10,
            seed: 7,
            ..Default::default()
        }
    }

    fn toy() -> DocSet {
        DocSet::new(
            &[vec![0u32, 1, 1], vec![2, 3], vec![0, 1], vec![3, 2, 2, 4]],
            5,
        )
        .unwrap()
    }

    #[test]
    fn init_single_table() {
        let corpus = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let state = GsdmmState::init(&corpus, &cfg(1), &mut rng).unwrap();
        assert!(state.labels().iter().all(|&k| k == 0));
        assert_eq!(state.cluster_docs()[0], 4);
        assert!(state.is_consistent(&corpus));
    }

    #[test]
    fn init_is_seeded() {
        let corpus = toy();
        let a = GsdmmState::init(&corpus, &cfg(8), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = GsdmmState::init(&corpus, &cfg(8), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.is_consistent(&corpus));
    }

    #[test]
    fn empty_inputs_rejected() {
        let empty: Vec<Vec<u32>> = Vec::new();
        assert!(matches!(DocSet::new(&empty, 3), Err(Error::EmptyCorpus)));
        assert!(DocSet::new(&[vec![5u32]], 3).is_err());
        assert!(DocSet::new(&[Vec::<u32>::new()], 3).is_err());
        let bad = GsdmmConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn conditional_single_cluster() {
        let corpus = toy();
        let mut state = GsdmmState::from_labels(&corpus, 1, vec![0; 4]).unwrap();
        state.remove_doc(&corpus.docs()[0], 0);
        assert_eq!(conditional(&corpus.docs()[0], &state, &cfg(1)), vec![1.0]);
    }

    #[test]
    fn conditional_symmetric_clusters() {
        // clusters 0 and 1 hold identical content
        let corpus = DocSet::new(&[vec![0u32, 1], vec![0, 1], vec![0, 1]], 2).unwrap();
        let mut state = GsdmmState::from_labels(&corpus, 3, vec![0, 1, 2]).unwrap();
        state.remove_doc(&corpus.docs()[2], 2);
        let p = conditional(&corpus.docs()[2], &state, &cfg(3));
        assert!((p[0] - p[1]).abs() < 1e-15);
        assert!(p[0] > p[2]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phi_examples() {
        // cluster 0 holds word 0 ten times; V = 5, β = 0.1
        let docs: Vec<Vec<u32>> = vec![vec![0; 10], vec![1, 2, 3, 4]];
        let corpus = DocSet::new(&docs, 5).unwrap();
        let config = GsdmmConfig {
            k_max: 3,
            ..Default::default()
        };
        let state = GsdmmState::from_labels(&corpus, 3, vec![0, 1]).unwrap();
        assert!((phi_hat(&state, &config, 0, 0) - 10.1 / 10.5).abs() < 1e-12);
        assert!((phi_hat(&state, &config, 0, 0) - 0.9619).abs() < 1e-4);
        for w in 0..5 {
            assert!((phi_hat(&state, &config, 2, w) - 0.2).abs() < 1e-15);
        }
        for k in 0..3 {
            let total: f64 = (0..5).map(|w| phi_hat(&state, &config, k, w)).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn theta_examples() {
        let docs: Vec<Vec<u32>> = (0..10).map(|i| vec![i % 3]).collect();
        let corpus = DocSet::new(&docs, 3).unwrap();
        let config = GsdmmConfig {
            k_max: 5,
            alpha: 0.1,
            ..Default::default()
        };
        let labels = vec![0, 0, 1, 1, 1, 2, 2, 2, 3, 3];
        let state = GsdmmState::from_labels(&corpus, 5, labels).unwrap();
        assert!((theta_hat(&state, &config, 0) - 0.2).abs() < 1e-12);
        let total: f64 = (0..5).map(|k| theta_hat(&state, &config, k)).sum();
        assert!((total - 1.0).abs() < 1e-12);

        let tiny = GsdmmConfig {
            alpha: 1e-9,
            ..config
        };
        let one = GsdmmState::from_labels(&corpus, 5, vec![4; 10]).unwrap();
        assert!((theta_hat(&one, &tiny, 4) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn fit_edge_cases() {
        let corpus = toy();
        let zero = GsdmmConfig {
            n_iters: 0,
            ..cfg(6)
        };
        let fitted = fit(&corpus, &zero).unwrap();
        let init =
            GsdmmState::init(&corpus, &zero, &mut ChaCha8Rng::seed_from_u64(zero.seed)).unwrap();
        assert_eq!(fitted.state, init);
        assert!(fitted.trajectory.is_empty());

        let single = fit(&corpus, &cfg(1)).unwrap();
        assert_eq!(single.trajectory, vec![1; 10]);
    }

    #[test]
    fn summarize_truncates_and_orders() {
        let corpus = toy();
        let config = cfg(1);
        let fitted = fit(&corpus, &config).unwrap();
        let mut vocab = Vocabulary::new();
        for t in ["a", "b", "c", "d", "e"] {
            vocab.register(t);
        }
        let summaries = summarize(&fitted.state, &config, &vocab, 100);
        assert_eq!(summaries.len(), 1);
        assert_eq!(summaries[0].doc_count, 4);
        let words: Vec<_> = summaries[0]
            .top_words
            .iter()
            .map(|t| t.token.as_str())
            .collect();
        // counts: a2 b3 c3 d2 e1
        assert_eq!(words, ["b", "c", "a", "d", "e"]);
        for pair in summaries[0].top_words.windows(2) {
            assert!(pair[0].weight >= pair[1].weight);
        }
    }

    #[test]
    fn purity_counts_majorities() {
        assert_eq!(purity(&[0, 0, 1, 1], &[5, 5, 6, 6]), 1.0);
        assert_eq!(purity(&[0, 0, 0, 0], &[5, 5, 6, 6]), 0.5);
        assert_eq!(purity(&[0, 0, 0, 1], &[5, 5, 6, 6]), 0.75);
    }
}
