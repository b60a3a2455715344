//! DRAT anchor banks and the random-noun pools used for calibration, the
//! CDAT baseline and the greedy baseline vocabulary.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{normalize_term, Embedder, EmbeddingError};
use crate::scoring::{AnchorCorpus, AnchorSet};

#[derive(Debug, Error)]
pub enum AnchorError {
    #[error("anchor bank line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("noun pool error: {0}")]
    Pool(String),
    #[error("no anchor set found after {restarts} restarts; best partial set {best:?}")]
    SamplingFailure { restarts: usize, best: Vec<String> },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

pub type Result<T, E = AnchorError> = std::result::Result<T, E>;

/// Terms per stored anchor set.
pub const BANK_ARITY: usize = 4;

/// A bank of anchor quadruples; smaller k are prefixes of each quadruple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorBank {
    pub bank_id: String,
    pub corpus: AnchorCorpus,
    pub sets: Vec<[String; BANK_ARITY]>,
    pub nested: bool,
}

impl AnchorBank {
    /// Parses `bank_id, corpus, t1 | t2 | t3 | t4` records.
    pub fn parse(text: &str) -> Result<Self> {
        let mut bank: Option<(String, AnchorCorpus)> = None;
        let mut sets = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| AnchorError::Validation {
                line: line_no,
                message,
            };
            let mut parts = line.splitn(3, ',');
            let (id, corpus, terms) = match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), Some(c)) => (a.trim(), b.trim(), c),
                _ => return Err(err("expected `bank_id, corpus, terms`".into())),
            };
            let corpus: AnchorCorpus = corpus.parse().map_err(err)?;
            match &bank {
                None => bank = Some((id.to_string(), corpus)),
                Some((bid, bc)) if bid != id || *bc != corpus => {
                    return Err(err(format!("mixed banks: {bid} and {id}")))
                }
                _ => {}
            }
            let terms: Vec<String> = terms.split('|').map(normalize_term).collect();
            if terms.len() != BANK_ARITY {
                return Err(err(format!(
                    "expected {BANK_ARITY} anchors, found {}",
                    terms.len()
                )));
            }
            if terms.iter().any(String::is_empty) {
                return Err(err("empty anchor term".into()));
            }
            let distinct: BTreeSet<&String> = terms.iter().collect();
            if distinct.len() != terms.len() {
                return Err(err("duplicate anchor within a set".into()));
            }
            sets.push(terms.try_into().expect("arity checked"));
        }
        let (bank_id, corpus) = bank.ok_or_else(|| AnchorError::Validation {
            line: 0,
            message: "no anchor sets".into(),
        })?;
        Ok(Self {
            bank_id,
            corpus,
            sets,
            nested: true,
        })
    }

    pub fn scientific() -> Self {
        Self::parse(crate::data::ANCHORS_SCIENTIFIC).expect("shipped bank is valid")
    }

    pub fn relation_distant() -> Self {
        Self::parse(crate::data::ANCHORS_RELATION_DISTANT).expect("shipped bank is valid")
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// The k-anchor view of set `number` (1-based).
    pub fn anchor_set(&self, number: usize, k: usize) -> Result<AnchorSet> {
        if !(2..=BANK_ARITY).contains(&k) {
            return Err(AnchorError::Invalid(format!("k = {k}; must be 2..={BANK_ARITY}")));
        }
        let set = number
            .checked_sub(1)
            .and_then(|i| self.sets.get(i))
            .ok_or_else(|| AnchorError::Invalid(format!("no anchor set {number}")))?;
        let mut a = AnchorSet::new(&set[..k]);
        a.bank_id = self.bank_id.clone();
        a.corpus = self.corpus;
        a.set_index = number;
        Ok(a)
    }

    /// All sets at a given k.
    pub fn view(&self, k: usize) -> Result<Vec<AnchorSet>> {
        (1..=self.len()).map(|n| self.anchor_set(n, k)).collect()
    }
}

pub fn load_anchor_bank(path: impl AsRef<Path>) -> Result<AnchorBank> {
    AnchorBank::parse(&std::fs::read_to_string(path)?)
}

/// A fixed pool of random nouns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounPool {
    pub nouns: Vec<String>,
    pub source: String,
    pub provider: String,
    pub seed: u64,
}

impl NounPool {
    pub fn len(&self) -> usize {
        self.nouns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nouns.is_empty()
    }
}

/// Filters a lexicon to distinct embeddable single tokens and samples
/// `size` of them without replacement (`size == 0` keeps all).
pub fn build_noun_pool<S: AsRef<str>>(
    lexicon: &[S],
    provider: &dyn Embedder,
    size: usize,
    seed: u64,
) -> Result<NounPool> {
    if lexicon.is_empty() {
        return Err(AnchorError::Pool("empty lexicon".into()));
    }
    let candidates: Vec<String> = lexicon
        .iter()
        .map(|w| normalize_term(w.as_ref()))
        .filter(|w| !w.is_empty() && !w.contains(' '))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut embeddable = Vec::with_capacity(candidates.len());
    for (w, r) in candidates.iter().zip(provider.embed_many(&candidates)) {
        match r {
            Ok(_) => embeddable.push(w.clone()),
            Err(
                EmbeddingError::OutOfVocabulary(_)
                | EmbeddingError::Degenerate(_)
                | EmbeddingError::EmptyTerm,
            ) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let nouns = if size == 0 {
        embeddable
    } else {
        if embeddable.len() < size {
            return Err(AnchorError::Pool(format!(
                "only {} embeddable nouns, {size} requested",
                embeddable.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, embeddable.len(), size).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| embeddable[i].clone()).collect()
    };
    Ok(NounPool {
        nouns,
        source: format!("lexicon of {} entries", lexicon.len()),
        provider: provider.name().to_string(),
        seed,
    })
}

/// Samples k pool nouns whose pairwise cosines are all below `tau`.
///
/// Each attempt draws a random start, then scans the rest of the pool in a
/// random order and keeps every noun compatible with the partial set. An
/// attempt that exhausts the pool before reaching k is a dead end and
/// triggers a restart.
pub fn sample_relation_distant_anchors(
    pool: &NounPool,
    k: usize,
    tau: f64,
    provider: &dyn Embedder,
    seed: u64,
    max_restarts: usize,
) -> Result<AnchorSet> {
    if k < 2 {
        return Err(AnchorError::Invalid(format!("k = {k}; need at least 2")));
    }
    if pool.len() < k {
        return Err(AnchorError::Pool(format!(
            "pool of {} nouns cannot supply {k} anchors",
            pool.len()
        )));
    }
    let units: Vec<Vec<f64>> = pool
        .nouns
        .iter()
        .map(|w| {
            let v = provider.embed(w)?;
            let n = v.norm();
            Ok(v.vector.iter().map(|x| x / n).collect())
        })
        .collect::<Result<_>>()?;
    let cos = |i: usize, j: usize| -> f64 { units[i].iter().zip(&units[j]).map(|(a, b)| a * b).sum() };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Vec<usize> = Vec::new();
    for _ in 0..max_restarts.max(1) {
        let start = rng.gen_range(0..pool.len());
        let mut order: Vec<usize> = (0..pool.len()).filter(|&i| i != start).collect();
        order.shuffle(&mut rng);
        let mut chosen = vec![start];
        for c in order {
            if chosen.iter().all(|&s| cos(s, c) < tau) {
                chosen.push(c);
                if chosen.len() == k {
                    break;
                }
            }
        }
        if chosen.len() == k {
            let terms: Vec<&str> = chosen.iter().map(|&i| pool.nouns[i].as_str()).collect();
            let mut set = AnchorSet::new(&terms);
            set.bank_id = format!("sampled-{seed}");
            set.corpus = AnchorCorpus::RelationDistant;
            return Ok(set);
        }
        if chosen.len() > best.len() {
            best = chosen;
        }
    }
    Err(AnchorError::SamplingFailure {
        restarts: max_restarts.max(1),
        best: best.iter().map(|&i| pool.nouns[i].clone()).collect(),
    })
}
