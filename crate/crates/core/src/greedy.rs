//! Greedy DAT maximizer: a random first word, then repeatedly the
//! vocabulary word with the lowest mean cosine similarity to the words
//! already chosen.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchors::NounPool;
use crate::embedding::{mean_distance_of_vectors, Embedder, EmbeddingError, TermVector};
use crate::scoring::{embed_scorable, ScoreError};
use crate::stats;

#[derive(Debug, Error)]
pub enum GreedyError {
    #[error("vocabulary of {size} words is too small for {n}-word runs")]
    VocabTooSmall { size: usize, n: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

pub type Result<T, E = GreedyError> = std::result::Result<T, E>;

/// A sorted vocabulary with unit vectors under the selection provider.
pub struct GreedyVocab {
    words: Vec<String>,
    dim: usize,
    // row-major unit vectors
    units: Vec<f64>,
    provider: String,
}

impl GreedyVocab {
    /// Embeds every pool word; the pool must be fully embeddable.
    pub fn new(pool: &NounPool, provider: &dyn Embedder) -> Result<Self> {
        let mut words = pool.nouns.clone();
        words.sort();
        words.dedup();
        let dim = provider.dimension();
        let mut units = Vec::with_capacity(words.len() * dim);
        for (w, r) in words.iter().zip(provider.embed_many(&words)) {
            let v = r.map_err(|e| match e {
                EmbeddingError::OutOfVocabulary(_) => EmbeddingError::OutOfVocabulary(w.clone()),
                other => other,
            })?;
            let n = v.norm();
            units.extend(v.vector.iter().map(|x| x / n));
        }
        Ok(Self {
            words,
            dim,
            units,
            provider: provider.name().to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.units[i * self.dim..(i + 1) * self.dim]
    }

    fn cos(&self, i: usize, j: usize) -> f64 {
        self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum()
    }

    /// Mean cosine similarity of word `i` to the chosen indices.
    pub fn mean_similarity(&self, i: usize, chosen: &[usize]) -> f64 {
        chosen.iter().map(|&c| self.cos(i, c)).sum::<f64>() / chosen.len() as f64
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.words.binary_search_by(|w| w.as_str().cmp(word)).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    /// DAT over all n words.
    pub all: f64,
    /// DAT over the first seven words.
    pub first_seven: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyRun {
    pub seed: u64,
    pub words: Vec<String>,
    /// Mean similarity of each chosen word (steps 2..n) to those before it.
    pub objective: Vec<f64>,
    pub scores: BTreeMap<String, RunScore>,
}

/// Runs the greedy selection for one seed. Ties in the argmin go to the
/// lexicographically smallest word.
pub fn greedy_dat(vocab: &GreedyVocab, n: usize, seed: u64) -> Result<GreedyRun> {
    let size = vocab.len();
    if size <= n || n < 2 {
        return Err(GreedyError::VocabTooSmall { size, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..size);
    let mut chosen = vec![first];
    let mut taken = vec![false; size];
    taken[first] = true;
    let mut sums = vec![0.0f64; size];
    let mut objective = Vec::with_capacity(n - 1);

    while chosen.len() < n {
        let last = *chosen.last().expect("nonempty");
        let last_row = vocab.row(last);
        sums.par_iter_mut().enumerate().for_each(|(j, s)| {
            *s += vocab.row(j).iter().zip(last_row).map(|(a, b)| a * b).sum::<f64>();
        });
        // sequential scan: lowest sum wins, earlier (lexicographically smaller) index on ties
        let mut best = usize::MAX;
        let mut best_sum = f64::INFINITY;
        for (j, &s) in sums.iter().enumerate() {
            if !taken[j] && s < best_sum {
                best = j;
                best_sum = s;
            }
        }
        objective.push(best_sum / chosen.len() as f64);
        taken[best] = true;
        chosen.push(best);
    }

    let vectors: Vec<TermVector> = chosen
        .iter()
        .map(|&i| TermVector::new(vocab.words[i].clone(), vocab.row(i).to_vec()))
        .collect::<std::result::Result<_, _>>()?;
    let all = mean_distance_of_vectors(&vectors)?;
    let first_seven = mean_distance_of_vectors(&vectors[..n.min(7)])?;
    let mut scores = BTreeMap::new();
    scores.insert(vocab.provider.clone(), RunScore { all, first_seven });
    Ok(GreedyRun {
        seed,
        words: chosen.iter().map(|&i| vocab.words[i].clone()).collect(),
        objective,
        scores,
    })
}

/// Scores a word list under a provider, dropping unembeddable words.
pub fn score_word_list(words: &[String], provider: &dyn Embedder) -> Result<RunScore> {
    let (vectors, _) = embed_scorable(words, provider)?;
    if vectors.len() < 2 {
        return Err(ScoreError::Unscorable(format!("{} scorable words", vectors.len())).into());
    }
    Ok(RunScore {
        all: mean_distance_of_vectors(&vectors)?,
        first_seven: mean_distance_of_vectors(&vectors[..vectors.len().min(7)])?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub mean: f64,
    /// Sample standard deviation; absent with one run.
    pub sd: Option<f64>,
    pub scores: Vec<f64>,
}

impl Distribution {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let mean = stats::mean(&scores);
        let sd = (scores.len() >= 2).then(|| stats::sample_variance(&scores).sqrt());
        Self { mean, sd, scores }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub runs: Vec<GreedyRun>,
    /// Per-provider distribution of the all-n-words score.
    pub per_provider: BTreeMap<String, Distribution>,
    /// Per-run scores averaged across providers.
    pub averaged: Distribution,
}

fn summarize(runs: Vec<GreedyRun>) -> CampaignSummary {
    let providers: Vec<String> = runs
        .first()
        .map(|r| r.scores.keys().cloned().collect())
        .unwrap_or_default();
    let per_provider = providers
        .iter()
        .map(|p| {
            let scores = runs.iter().map(|r| r.scores[p].all).collect();
            (p.clone(), Distribution::from_scores(scores))
        })
        .collect();
    let averaged = Distribution::from_scores(
        runs.iter()
            .map(|r| r.scores.values().map(|s| s.all).sum::<f64>() / r.scores.len() as f64)
            .collect(),
    );
    CampaignSummary {
        runs,
        per_provider,
        averaged,
    }
}

fn add_scores(run: &mut GreedyRun, scorers: &[&dyn Embedder]) -> Result<()> {
    for p in scorers {
        if !run.scores.contains_key(p.name()) {
            run.scores
                .insert(p.name().to_string(), score_word_list(&run.words, *p)?);
        }
    }
    Ok(())
}

/// Greedy runs for seeds `0..n_runs`, each scored under the selection
/// provider plus every extra scorer.
pub fn greedy_campaign(
    vocab: &GreedyVocab,
    scorers: &[&dyn Embedder],
    n_runs: usize,
    n: usize,
) -> Result<CampaignSummary> {
    let runs = (0..n_runs as u64)
        .into_par_iter()
        .map(|seed| {
            let mut run = greedy_dat(vocab, n, seed)?;
            add_scores(&mut run, scorers)?;
            Ok(run)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(runs))
}

/// The random-selection oracle: `n_runs` uniformly random n-word draws
/// from the same vocabulary.
pub fn random_campaign(
    vocab: &GreedyVocab,
    scorers: &[&dyn Embedder],
    n_runs: usize,
    n: usize,
    seed: u64,
) -> Result<CampaignSummary> {
    if vocab.len() <= n {
        return Err(GreedyError::VocabTooSmall { size: vocab.len(), n });
    }
    let runs = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            let idx = rand::seq::index::sample(&mut rng, vocab.len(), n).into_vec();
            let words: Vec<String> = idx.iter().map(|&j| vocab.words[j].clone()).collect();
            let vectors: Vec<TermVector> = idx
                .iter()
                .map(|&j| TermVector::new(vocab.words[j].clone(), vocab.row(j).to_vec()))
                .collect::<std::result::Result<_, _>>()?;
            let mut scores = BTreeMap::new();
            scores.insert(
                vocab.provider.clone(),
                RunScore {
                    all: mean_distance_of_vectors(&vectors)?,
                    first_seven: mean_distance_of_vectors(&vectors[..n.min(7)])?,
                },
            );
            let mut run = GreedyRun {
                seed: i,
                words,
                objective: Vec::new(),
                scores,
            };
            add_scores(&mut run, scorers)?;
            Ok(run)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::StaticVectors;

    fn pool_of(p: &StaticVectors) -> NounPool {
        NounPool {
            nouns: p.tokens().map(String::from).collect(),
            source: "test".into(),
            provider: p.name().into(),
            seed: 0,
        }
    }

    #[test]
    fn orthogonal_vocab_scores_100() {
        let n = 10;
        let p = StaticVectors::from_pairs(
            "orth",
            (0..=n).map(|i| {
                let mut v = vec![0.0; n + 1];
                v[i] = 1.0;
                (format!("w{i:02}"), v)
            }),
        )
        .unwrap();
        let vocab = GreedyVocab::new(&pool_of(&p), &p).unwrap();
        for seed in 0..5 {
            let run = greedy_dat(&vocab, n, seed).unwrap();
            assert!((run.scores["orth"].all - 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn second_pick_is_the_antipode() {
        let p = StaticVectors::from_pairs(
            "toy",
            [
                ("a", vec![1.0, 0.0]),
                ("b", vec![0.0, 1.0]),
                ("c", vec![-1.0, 0.0]),
                ("d", vec![0.9, 0.1]),
            ],
        )
        .unwrap();
        let vocab = GreedyVocab::new(&pool_of(&p), &p).unwrap();
        let seed = (0..100)
            .find(|&s| ChaCha8Rng::seed_from_u64(s).gen_range(0..4usize) == 0)
            .unwrap();
        let run = greedy_dat(&vocab, 2, seed).unwrap();
        assert_eq!(run.words, ["a", "c"]);
        assert!((run.objective[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_break_lexicographically() {
        // "m" and "z" are both orthogonal to "a"; "m" sorts first
        let p = StaticVectors::from_pairs(
            "tie",
            [
                ("z", vec![0.0, 1.0, 0.0]),
                ("a", vec![1.0, 0.0, 0.0]),
                ("m", vec![0.0, 0.0, 1.0]),
            ],
        )
        .unwrap();
        let vocab = GreedyVocab::new(&pool_of(&p), &p).unwrap();
        let seed = (0..100)
            .find(|&s| ChaCha8Rng::seed_from_u64(s).gen_range(0..3usize) == 0)
            .unwrap();
        assert_eq!(greedy_dat(&vocab, 2, seed).unwrap().words, ["a", "m"]);
    }

    fn random_vocab(n: usize, d: usize, seed: u64) -> StaticVectors {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        StaticVectors::from_pairs(
            "rand",
            (0..n).map(|i| {
                (
                    format!("w{i:04}"),
                    (0..d).map(|_| rng.gen_range(-1.0..1.0) + 0.3).collect(),
                )
            }),
        )
        .unwrap()
    }

    #[test]
    fn each_step_is_the_brute_force_argmin() {
        let p = random_vocab(300, 12, 5);
        let vocab = GreedyVocab::new(&pool_of(&p), &p).unwrap();
        let run = greedy_dat(&vocab, 10, 42).unwrap();
        let idx: Vec<usize> = run.words.iter().map(|w| vocab.index_of(w).unwrap()).collect();
        for step in 1..idx.len() {
            let prefix = &idx[..step];
            let chosen = vocab.mean_similarity(idx[step], prefix);
            for j in 0..vocab.len() {
                if !idx[..=step].contains(&j) {
                    assert!(vocab.mean_similarity(j, prefix) >= chosen - 1e-12);
                }
            }
        }
        let distinct: std::collections::BTreeSet<_> = run.words.iter().collect();
        assert_eq!(distinct.len(), 10);
        assert_eq!(run, greedy_dat(&vocab, 10, 42).unwrap());
    }

    #[test]
    fn campaign_summaries() {
        let p = random_vocab(400, 16, 8);
        let vocab = GreedyVocab::new(&pool_of(&p), &p).unwrap();
        let one = greedy_campaign(&vocab, &[], 1, 10).unwrap();
        assert_eq!(one.per_provider["rand"].sd, None);
        assert_eq!(one.per_provider["rand"].mean, one.runs[0].scores["rand"].all);

        let greedy = greedy_campaign(&vocab, &[], 20, 10).unwrap();
        let random = random_campaign(&vocab, &[], 20, 10, 1_000).unwrap();
        assert!(greedy.per_provider["rand"].mean > random.per_provider["rand"].mean);
        assert!(matches!(
            greedy_dat(&vocab, 400, 0),
            Err(GreedyError::VocabTooSmall { .. })
        ));
    }
}
