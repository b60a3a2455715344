//! The five test scores and per-model aggregation.
//!
//! Response words that a provider cannot embed are dropped, never fatal;
//! callers that need to record the drops use [`embed_scorable`] directly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{mean_distance_of_vectors, normalize_term, Embedder, EmbeddingError, TermVector};
use crate::stats;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("unscorable trial: {0}")]
    Unscorable(String),
    #[error("cue {0:?} cannot be embedded")]
    UnscorableCue(String),
    #[error("anchor set has not been calibrated")]
    Uncalibrated,
    #[error("calibration pool has {got} embeddable terms, need at least {need}")]
    InsufficientPool { need: usize, got: usize },
    #[error("no data to aggregate")]
    NoData,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

pub type Result<T, E = ScoreError> = std::result::Result<T, E>;

/// Why a response word was not accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    Empty,
    MultiToken,
    NonAlphabetic,
    NotInLexicon,
    Duplicate,
    Cue,
    CueVariation,
    Variation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "kebab-case")]
pub enum WordStatus {
    Valid,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseWord {
    pub word: String,
    #[serde(flatten)]
    pub status: WordStatus,
}

/// A parsed and validated word-list response.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WordResponse {
    pub trial_id: String,
    pub words: Vec<ResponseWord>,
}

impl WordResponse {
    /// A response whose words are all marked valid (no validation applied).
    pub fn from_valid<S: AsRef<str>>(trial_id: impl Into<String>, words: &[S]) -> Self {
        Self {
            trial_id: trial_id.into(),
            words: words
                .iter()
                .map(|w| ResponseWord {
                    word: normalize_term(w.as_ref()),
                    status: WordStatus::Valid,
                })
                .collect(),
        }
    }

    pub fn valid_words(&self) -> Vec<String> {
        self.words
            .iter()
            .filter(|w| w.status == WordStatus::Valid)
            .map(|w| w.word.clone())
            .collect()
    }
}

/// A PACE association chain; `words[0]` is the seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    pub seed: String,
    pub words: Vec<String>,
    pub chain_index: u8,
    pub seed_id: usize,
}

impl Chain {
    pub fn new(seed: impl Into<String>, continuation: &[String], chain_index: u8, seed_id: usize) -> Self {
        let seed = normalize_term(&seed.into());
        let mut words = vec![seed.clone()];
        words.extend(continuation.iter().map(|w| normalize_term(w)));
        Self {
            seed,
            words,
            chain_index,
            seed_id,
        }
    }

    /// True when the chain is shorter than the 20-word target.
    pub fn is_truncated(&self) -> bool {
        self.words.len() < 20
    }
}

/// One remote associates item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatItem {
    pub stems: [String; 3],
    pub answer: String,
}

impl RatItem {
    pub fn new(stems: [&str; 3], answer: &str) -> Result<Self> {
        let stems = stems.map(normalize_term);
        let answer = normalize_term(answer);
        if stems.iter().any(|s| s.is_empty()) || answer.is_empty() {
            return Err(ScoreError::Invalid("empty RAT stem or answer".into()));
        }
        if stems[0] == stems[1] || stems[0] == stems[2] || stems[1] == stems[2] {
            return Err(ScoreError::Invalid(format!("repeated RAT stems {stems:?}")));
        }
        Ok(Self { stems, answer })
    }
}

/// Parses `stem1,stem2,stem3,answer` lines; blank lines and `#` comments
/// are skipped.
pub fn parse_rat_items(text: &str) -> Result<Vec<RatItem>> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(ScoreError::Invalid(format!(
                "RAT line {}: expected 4 fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        items.push(RatItem::new([fields[0], fields[1], fields[2]], fields[3])?);
    }
    Ok(items)
}

pub fn load_rat_items(path: impl AsRef<Path>) -> Result<Vec<RatItem>> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| ScoreError::Invalid(format!("{}: {e}", path.as_ref().display())))?;
    parse_rat_items(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorCorpus {
    #[default]
    ScientificTerms,
    RelationDistant,
}

impl AnchorCorpus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ScientificTerms => "scientific-terms",
            Self::RelationDistant => "relation-distant",
        }
    }
}

impl std::str::FromStr for AnchorCorpus {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "scientific-terms" => Ok(Self::ScientificTerms),
            "relation-distant" => Ok(Self::RelationDistant),
            other => Err(format!("unknown anchor corpus {other:?}")),
        }
    }
}

/// How per-anchor similarities combine into one utility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GateFn {
    #[default]
    Max,
    Min,
    Avg,
}

impl std::str::FromStr for GateFn {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "max" => Ok(Self::Max),
            "min" => Ok(Self::Min),
            "avg" | "mean" => Ok(Self::Avg),
            other => Err(format!("unknown gate function {other:?}")),
        }
    }
}

/// k anchor terms plus the calibrated utility threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub anchors: Vec<String>,
    pub bank_id: String,
    pub corpus: AnchorCorpus,
    pub set_index: usize,
    pub threshold: Option<f64>,
    pub quantile: f64,
    pub gate: GateFn,
}

impl AnchorSet {
    pub fn new<S: AsRef<str>>(anchors: &[S]) -> Self {
        Self {
            anchors: anchors.iter().map(|a| normalize_term(a.as_ref())).collect(),
            bank_id: String::new(),
            corpus: AnchorCorpus::default(),
            set_index: 0,
            threshold: None,
            quantile: 0.9,
            gate: GateFn::Max,
        }
    }

    pub fn k(&self) -> usize {
        self.anchors.len()
    }

    /// Sets τ_A directly; `f64::NEG_INFINITY` disables the gate.
    pub fn with_threshold(mut self, tau: f64) -> Self {
        self.threshold = Some(tau);
        self
    }

    pub fn with_gate(mut self, gate: GateFn) -> Self {
        self.gate = gate;
        self
    }
}

/// Embeds terms in order, dropping out-of-vocabulary and zero-vector terms.
///
/// Returns the embedded vectors and the dropped terms.
pub fn embed_scorable(terms: &[String], provider: &dyn Embedder) -> Result<(Vec<TermVector>, Vec<String>)> {
    let mut kept = Vec::with_capacity(terms.len());
    let mut dropped = Vec::new();
    for (term, result) in terms.iter().zip(provider.embed_many(terms)) {
        match result {
            Ok(v) => kept.push(v),
            Err(
                EmbeddingError::OutOfVocabulary(_)
                | EmbeddingError::Degenerate(_)
                | EmbeddingError::EmptyTerm,
            ) => dropped.push(term.clone()),
            Err(e) => return Err(e.into()),
        }
    }
    Ok((kept, dropped))
}

fn distance_or_unscorable(vectors: &[TermVector]) -> Result<f64> {
    if vectors.len() < 2 {
        return Err(ScoreError::Unscorable(format!(
            "{} scorable words",
            vectors.len()
        )));
    }
    Ok(mean_distance_of_vectors(vectors)?)
}

/// DAT: mean pairwise distance over the first `scored_count` valid,
/// embeddable words.
pub fn score_dat(response: &WordResponse, provider: &dyn Embedder, scored_count: usize) -> Result<f64> {
    let (mut vectors, _) = embed_scorable(&response.valid_words(), provider)?;
    vectors.truncate(scored_count.max(2));
    distance_or_unscorable(&vectors)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdatScore {
    pub novelty: f64,
    pub appropriateness: f64,
}

/// CDAT novelty (distance over all valid words) and appropriateness
/// `(100/n) Σ cos(cue, w)`.
pub fn score_cdat(response: &WordResponse, cue: &str, provider: &dyn Embedder) -> Result<CdatScore> {
    let cue_vec = match provider.embed(cue) {
        Ok(v) => v,
        Err(EmbeddingError::OutOfVocabulary(_) | EmbeddingError::Degenerate(_)) => {
            return Err(ScoreError::UnscorableCue(cue.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    let (vectors, _) = embed_scorable(&response.valid_words(), provider)?;
    let novelty = distance_or_unscorable(&vectors)?;
    let mut total = 0.0;
    for v in &vectors {
        total += crate::embedding::cosine_similarity(&cue_vec, v)?;
    }
    Ok(CdatScore {
        novelty,
        appropriateness: 100.0 * total / vectors.len() as f64,
    })
}

/// PACE: mean over positions i ≥ 2 of the mean distance from wᵢ to all
/// earlier chain words.
pub fn score_pace_chain(chain: &Chain, provider: &dyn Embedder) -> Result<f64> {
    let (vectors, _) = embed_scorable(&chain.words, provider)?;
    let l = vectors.len();
    if l < 2 {
        return Err(ScoreError::Unscorable(format!("chain has {l} scorable words")));
    }
    let m = crate::embedding::cosine_matrix(&vectors)?;
    let mut outer = 0.0;
    for (i, row) in m.iter().enumerate().skip(1) {
        let inner: f64 = row[..i].iter().map(|c| 1.0 - c).sum();
        outer += inner / i as f64;
    }
    Ok(outer / (l - 1) as f64)
}

/// Lowercases, trims and strips punctuation from a RAT answer.
pub fn normalize_rat_answer(answer: &str) -> String {
    let cleaned: String = normalize_term(answer)
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Percentage of items answered exactly; answers are keyed by item index.
pub fn score_rat(answers: &BTreeMap<usize, String>, items: &[RatItem]) -> Result<f64> {
    if items.is_empty() {
        return Err(ScoreError::NoData);
    }
    let correct = items
        .iter()
        .enumerate()
        .filter(|(i, item)| {
            answers.get(i).is_some_and(|a| {
                let a = normalize_rat_answer(a);
                !a.contains(' ') && a == item.answer
            })
        })
        .count();
    Ok(100.0 * correct as f64 / items.len() as f64)
}

/// Unit-normalized anchor vectors, embedded once per scoring pass.
pub struct AnchorVectors {
    units: Vec<Vec<f64>>,
    gate: GateFn,
}

impl AnchorVectors {
    pub fn new(anchors: &AnchorSet, provider: &dyn Embedder) -> Result<Self> {
        let mut units = Vec::with_capacity(anchors.k());
        for a in &anchors.anchors {
            let v = provider.embed(a)?;
            let n = v.norm();
            units.push(v.vector.iter().map(|x| x / n).collect());
        }
        if units.is_empty() {
            return Err(ScoreError::Invalid("anchor set is empty".into()));
        }
        Ok(Self {
            units,
            gate: anchors.gate,
        })
    }

    pub fn with_gate(mut self, gate: GateFn) -> Self {
        self.gate = gate;
        self
    }

    pub fn utility(&self, word: &TermVector) -> Result<f64> {
        let n = word.norm();
        let mut sims = Vec::with_capacity(self.units.len());
        for u in &self.units {
            if u.len() != word.dimension() {
                return Err(EmbeddingError::DimensionMismatch {
                    left: u.len(),
                    right: word.dimension(),
                }
                .into());
            }
            let dot: f64 = u.iter().zip(&word.vector).map(|(a, b)| a * b).sum();
            sims.push((dot / n).clamp(-1.0, 1.0));
        }
        Ok(match self.gate {
            GateFn::Max => sims.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            GateFn::Min => sims.iter().copied().fold(f64::INFINITY, f64::min),
            GateFn::Avg => sims.iter().sum::<f64>() / sims.len() as f64,
        })
    }
}

/// DRAT utility of one word against an anchor set under `gate`.
pub fn drat_utility(word: &str, anchors: &AnchorSet, provider: &dyn Embedder, gate: GateFn) -> Result<f64> {
    let av = AnchorVectors::new(anchors, provider)?.with_gate(gate);
    av.utility(&provider.embed(word)?)
}

/// Minimum embeddable pool size accepted for τ_A calibration.
pub const MIN_CALIBRATION_POOL: usize = 50;

/// Calibrates τ_A as the q-quantile of pool utilities and stores it (with q
/// and the gate function) on the anchor set.
pub fn drat_threshold(
    anchors: &mut AnchorSet,
    pool: &[String],
    q: f64,
    provider: &dyn Embedder,
    gate: GateFn,
) -> Result<f64> {
    let (vectors, _) = embed_scorable(pool, provider)?;
    if vectors.len() < MIN_CALIBRATION_POOL {
        return Err(ScoreError::InsufficientPool {
            need: MIN_CALIBRATION_POOL,
            got: vectors.len(),
        });
    }
    let av = AnchorVectors::new(anchors, provider)?.with_gate(gate);
    let utilities = vectors
        .iter()
        .map(|v| av.utility(v))
        .collect::<Result<Vec<_>>>()?;
    let tau = stats::quantile(&utilities, q).map_err(|e| ScoreError::Invalid(e.to_string()))?;
    anchors.threshold = Some(tau);
    anchors.quantile = q;
    anchors.gate = gate;
    Ok(tau)
}

/// Valid embeddable words whose utility strictly exceeds τ_A.
pub fn drat_survivors(
    response: &WordResponse,
    anchors: &AnchorSet,
    provider: &dyn Embedder,
) -> Result<Vec<TermVector>> {
    let tau = anchors.threshold.ok_or(ScoreError::Uncalibrated)?;
    let av = AnchorVectors::new(anchors, provider)?;
    let (vectors, _) = embed_scorable(&response.valid_words(), provider)?;
    let mut survivors = Vec::new();
    for v in vectors {
        if av.utility(&v)? > tau {
            survivors.push(v);
        }
    }
    Ok(survivors)
}

/// DRAT: distance over survivors, or 0 when fewer than `n_min` survive.
pub fn score_drat(
    response: &WordResponse,
    anchors: &AnchorSet,
    provider: &dyn Embedder,
    n_min: usize,
) -> Result<f64> {
    let survivors = drat_survivors(response, anchors, provider)?;
    if survivors.len() < n_min.max(2) {
        return Ok(0.0);
    }
    Ok(mean_distance_of_vectors(&survivors)?)
}

/// Mean ± SEM over scorable trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScoreAggregate {
    pub model: String,
    pub test: String,
    pub embedding: String,
    pub mean: f64,
    /// Absent with a single trial.
    pub sem: Option<f64>,
    pub trials: usize,
}

impl ScoreAggregate {
    pub fn labeled(mut self, model: &str, test: &str, embedding: &str) -> Self {
        self.model = model.to_string();
        self.test = test.to_string();
        self.embedding = embedding.to_string();
        self
    }
}

pub fn aggregate_scores(trial_scores: &[f64]) -> Result<ScoreAggregate> {
    let n = trial_scores.len();
    if n == 0 {
        return Err(ScoreError::NoData);
    }
    let mean = stats::mean(trial_scores);
    let sem = (n >= 2).then(|| (stats::sample_variance(trial_scores) / n as f64).sqrt());
    Ok(ScoreAggregate {
        mean,
        sem,
        trials: n,
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::StaticVectors;
    use proptest::prelude::*;

    fn basis(n: usize) -> StaticVectors {
        StaticVectors::from_pairs(
            "basis",
            (0..n).map(|i| {
                let mut v = vec![0.0; n];
                v[i] = 1.0;
                (format!("w{i}"), v)
            }),
        )
        .unwrap()
    }

    fn plane() -> StaticVectors {
        StaticVectors::from_pairs(
            "plane",
            [
                ("east", vec![1.0, 0.0]),
                ("north", vec![0.0, 1.0]),
                ("west", vec![-1.0, 0.0]),
            ],
        )
        .unwrap()
    }

    fn words(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    #[test]
    fn dat_examples() {
        let p = basis(10);
        let r = WordResponse::from_valid("t", &words(7));
        assert!((score_dat(&r, &p, 7).unwrap() - 100.0).abs() < 1e-12);
        let r = WordResponse::from_valid("t", &words(10));
        assert!((score_dat(&r, &p, 7).unwrap() - 100.0).abs() < 1e-12);
        let r = WordResponse::from_valid("t", &["east", "north", "west"]);
        assert!((score_dat(&r, &plane(), 7).unwrap() - 400.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn dat_uses_first_seven_valid_words() {
        // words 0..6 orthogonal, then an eighth word parallel to w0
        let mut pairs: Vec<(String, Vec<f64>)> = (0..7)
            .map(|i| {
                let mut v = vec![0.0; 7];
                v[i] = 1.0;
                (format!("w{i}"), v)
            })
            .collect();
        let mut dup = vec![0.0; 7];
        dup[0] = 2.0;
        pairs.push(("twin".into(), dup));
        let p = StaticVectors::from_pairs("p", pairs).unwrap();
        let mut ws = words(7);
        ws.push("twin".into());
        let r = WordResponse::from_valid("t", &ws);
        assert!((score_dat(&r, &p, 7).unwrap() - 100.0).abs() < 1e-12);
        assert!(score_dat(&r, &p, 8).unwrap() < 100.0);
    }

    #[test]
    fn dat_drops_oov_and_rejected() {
        let p = basis(3);
        let mut r = WordResponse::from_valid("t", &["w0", "zzz", "w1"]);
        assert!((score_dat(&r, &p, 7).unwrap() - 100.0).abs() < 1e-12);
        r.words[2].status = WordStatus::Rejected(RejectReason::Duplicate);
        assert!(matches!(score_dat(&r, &p, 7), Err(ScoreError::Unscorable(_))));
    }

    #[test]
    fn cdat_examples() {
        let p = StaticVectors::from_pairs(
            "p",
            [
                ("cue", vec![1.0, 0.0, 0.0]),
                ("same", vec![2.0, 0.0, 0.0]),
                ("alike", vec![0.5, 0.0, 0.0]),
                ("up", vec![0.0, 1.0, 0.0]),
                ("out", vec![0.0, 0.0, 1.0]),
            ],
        )
        .unwrap();
        let s = score_cdat(&WordResponse::from_valid("t", &["same", "alike"]), "cue", &p).unwrap();
        assert!((s.appropriateness - 100.0).abs() < 1e-12 && s.novelty.abs() < 1e-12);
        let s = score_cdat(&WordResponse::from_valid("t", &["up", "out"]), "cue", &p).unwrap();
        assert!(s.appropriateness.abs() < 1e-12 && (s.novelty - 100.0).abs() < 1e-12);
        let s = score_cdat(&WordResponse::from_valid("t", &["same", "up"]), "cue", &p).unwrap();
        assert!((s.appropriateness - 50.0).abs() < 1e-12 && (s.novelty - 100.0).abs() < 1e-12);
        assert!(matches!(
            score_cdat(&WordResponse::from_valid("t", &["same", "up"]), "nope", &p),
            Err(ScoreError::UnscorableCue(_))
        ));
    }

    #[test]
    fn pace_examples() {
        let p = basis(20);
        for l in 2..=20 {
            let chain = Chain::new("w0", &words(l)[1..], 1, 0);
            assert!((score_pace_chain(&chain, &p).unwrap() - 1.0).abs() < 1e-12);
        }
        let p2 = plane();
        let chain = Chain::new("east", &["north".to_string()], 1, 0);
        assert!((score_pace_chain(&chain, &p2).unwrap() - 1.0).abs() < 1e-12);

        // vectors with cos(1,2)=0.5, cos(1,3)=0.2, cos(2,3)=0.1 via a Gram factorization
        let a = vec![1.0, 0.0, 0.0];
        let b = vec![0.5, (0.75f64).sqrt(), 0.0];
        let c1 = 0.2;
        let c2 = (0.1 - 0.5 * c1) / (0.75f64).sqrt();
        let c = vec![c1, c2, (1.0 - c1 * c1 - c2 * c2).sqrt()];
        let p3 = StaticVectors::from_pairs("g", [("a", a), ("b", b), ("c", c)]).unwrap();
        let chain = Chain::new("a", &["b".to_string(), "c".to_string()], 1, 0);
        assert!((score_pace_chain(&chain, &p3).unwrap() - 0.675).abs() < 1e-12);

        let short = Chain::new("w0", &["zzz".to_string()], 1, 0);
        assert!(matches!(
            score_pace_chain(&short, &p),
            Err(ScoreError::Unscorable(_))
        ));
    }

    #[test]
    fn rat_examples() {
        let items = vec![
            RatItem::new(["cottage", "swiss", "cake"], "cheese").unwrap(),
            RatItem::new(["cracker", "fly", "fighter"], "fire").unwrap(),
        ];
        let answers: BTreeMap<usize, String> = [(0, "Cheese. ".to_string()), (1, "fire".to_string())]
            .into_iter()
            .collect();
        assert_eq!(score_rat(&answers, &items).unwrap(), 100.0);
        let answers: BTreeMap<usize, String> = [(0, "blue cheese".to_string())].into_iter().collect();
        assert_eq!(score_rat(&answers, &items).unwrap(), 0.0);
        assert!(RatItem::new(["a", "a", "b"], "c").is_err());
    }

    #[test]
    fn parses_rat_bank() {
        let items = parse_rat_items(crate::data::RAT_ITEMS).unwrap();
        assert_eq!(items.len(), 30);
        assert!(items
            .iter()
            .any(|i| i.stems == ["cottage", "swiss", "cake"] && i.answer == "cheese"));
        assert!(parse_rat_items("a,b,c").is_err());
    }

    fn four_anchor_space() -> StaticVectors {
        // anchors along axes 0..3, probe with chosen similarities
        let s = [0.6, 0.2, -0.1, 0.3];
        let rest = (1.0f64 - s.iter().map(|x| x * x).sum::<f64>()).sqrt();
        StaticVectors::from_pairs(
            "a",
            [
                ("a0", vec![1.0, 0.0, 0.0, 0.0, 0.0]),
                ("a1", vec![0.0, 1.0, 0.0, 0.0, 0.0]),
                ("a2", vec![0.0, 0.0, 1.0, 0.0, 0.0]),
                ("a3", vec![0.0, 0.0, 0.0, 1.0, 0.0]),
                ("probe", vec![s[0], s[1], s[2], s[3], rest]),
                ("far", vec![0.0, 0.0, 0.0, 0.0, 1.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn drat_utility_examples() {
        let p = four_anchor_space();
        let a = AnchorSet::new(&["a0", "a1", "a2", "a3"]);
        assert!((drat_utility("a2", &a, &p, GateFn::Max).unwrap() - 1.0).abs() < 1e-12);
        for g in [GateFn::Max, GateFn::Min, GateFn::Avg] {
            assert!(drat_utility("far", &a, &p, g).unwrap().abs() < 1e-12);
        }
        assert!((drat_utility("probe", &a, &p, GateFn::Max).unwrap() - 0.6).abs() < 1e-12);
        assert!((drat_utility("probe", &a, &p, GateFn::Min).unwrap() + 0.1).abs() < 1e-12);
        assert!((drat_utility("probe", &a, &p, GateFn::Avg).unwrap() - 0.25).abs() < 1e-12);
    }

    /// Pool words whose max-utility against anchor "x" is a chosen value.
    fn utility_pool(utilities: &[f64]) -> (StaticVectors, Vec<String>) {
        let mut pairs = vec![("x".to_string(), vec![1.0, 0.0])];
        let mut names = Vec::new();
        for (i, u) in utilities.iter().enumerate() {
            let name = format!("p{i}");
            pairs.push((name.clone(), vec![*u, (1.0 - u * u).sqrt()]));
            names.push(name);
        }
        (StaticVectors::from_pairs("u", pairs).unwrap(), names)
    }

    #[test]
    fn drat_threshold_examples() {
        let (p, names) = utility_pool(&[0.3; 60]);
        let mut a = AnchorSet::new(&["x"]);
        let tau = drat_threshold(&mut a, &names, 0.9, &p, GateFn::Max).unwrap();
        assert!((tau - 0.3).abs() < 1e-12);
        assert_eq!(a.threshold, Some(tau));

        // 0.0..0.9 repeated 6 times keeps the same q = 0.9 quantile as the 10-value set
        let base: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        assert!((stats::quantile(&base, 0.9).unwrap() - 0.81).abs() < 1e-12);
        let vals: Vec<f64> = base.iter().cycle().take(60).copied().collect();
        let (p, names) = utility_pool(&vals);
        let mut a = AnchorSet::new(&["x"]);
        let tau = drat_threshold(&mut a, &names, 1.0, &p, GateFn::Max).unwrap();
        assert!((tau - 0.9).abs() < 1e-12);

        let (p, names) = utility_pool(&[0.3; 49]);
        assert!(matches!(
            drat_threshold(&mut AnchorSet::new(&["x"]), &names, 0.9, &p, GateFn::Max),
            Err(ScoreError::InsufficientPool { got: 49, .. })
        ));
    }

    #[test]
    fn drat_score_examples() {
        let p = StaticVectors::from_pairs(
            "d",
            [
                ("anchor", vec![1.0, 1.0, 1.0]),
                ("e1", vec![1.0, 0.0, 0.0]),
                ("e2", vec![0.0, 1.0, 0.0]),
                ("e3", vec![0.0, 0.0, 1.0]),
                ("opp", vec![-1.0, -1.0, -1.0]),
            ],
        )
        .unwrap();
        let a = AnchorSet::new(&["anchor"]).with_threshold(0.5);
        let r = WordResponse::from_valid("t", &["e1", "e2", "e3", "opp"]);
        assert!((score_drat(&r, &a, &p, 3).unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(score_drat(&r, &a, &p, 4).unwrap(), 0.0);
        let strict = AnchorSet::new(&["anchor"]).with_threshold(0.99);
        assert_eq!(score_drat(&r, &strict, &p, 3).unwrap(), 0.0);
        assert!(matches!(
            score_drat(&r, &AnchorSet::new(&["anchor"]), &p, 3),
            Err(ScoreError::Uncalibrated)
        ));

        let plane = StaticVectors::from_pairs(
            "pl",
            [
                ("east", vec![1.0, 0.0, 0.0]),
                ("north", vec![0.0, 1.0, 0.0]),
                ("west", vec![-1.0, 0.0, 0.0]),
                ("up", vec![0.0, 0.0, 1.0]),
            ],
        )
        .unwrap();
        let a = AnchorSet::new(&["up"]).with_threshold(-0.5);
        let r = WordResponse::from_valid("t", &["east", "north", "west"]);
        assert!((score_drat(&r, &a, &plane, 3).unwrap() - 400.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate_scores(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!((a.mean, a.sem), (5.0, Some(0.0)));
        let a = aggregate_scores(&[1.0, 3.0]).unwrap();
        assert!((a.mean - 2.0).abs() < 1e-15 && (a.sem.unwrap() - 1.0).abs() < 1e-15);
        let a = aggregate_scores(&[7.0]).unwrap();
        assert_eq!((a.mean, a.sem, a.trials), (7.0, None, 1));
        assert!(matches!(aggregate_scores(&[]), Err(ScoreError::NoData)));
    }

    fn random_space(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n).prop_filter("nonzero", |vs| {
            vs.iter().all(|v| v.iter().any(|x| x.abs() > 1e-3))
        })
    }

    fn provider_for(vs: &[Vec<f64>], scale: f64) -> StaticVectors {
        StaticVectors::from_pairs(
            "r",
            vs.iter()
                .enumerate()
                .map(|(i, v)| (format!("w{i}"), v.iter().map(|x| x * scale).collect())),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn dat_permutation_invariant_and_bounded(vs in random_space(7, 4), perm in Just((0..7).collect::<Vec<usize>>()).prop_shuffle()) {
            let p = provider_for(&vs, 1.0);
            let ws = words(7);
            let shuffled: Vec<String> = perm.iter().map(|&i| ws[i].clone()).collect();
            let a = score_dat(&WordResponse::from_valid("t", &ws), &p, 7).unwrap();
            let b = score_dat(&WordResponse::from_valid("t", &shuffled), &p, 7).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((0.0..=200.0).contains(&a));
        }

        #[test]
        fn scores_invariant_under_rescaling(vs in random_space(6, 3), scale in 0.01f64..100.0) {
            let p1 = provider_for(&vs, 1.0);
            let p2 = provider_for(&vs, scale);
            let ws = words(6);
            let r = WordResponse::from_valid("t", &ws);
            let d1 = score_dat(&r, &p1, 7).unwrap();
            let d2 = score_dat(&r, &p2, 7).unwrap();
            prop_assert!((d1 - d2).abs() < 1e-6);
            let chain = Chain::new("w0", &ws[1..], 1, 0);
            prop_assert!((score_pace_chain(&chain, &p1).unwrap() - score_pace_chain(&chain, &p2).unwrap()).abs() < 1e-8);
        }

        #[test]
        fn gate_disabled_drat_equals_dat(vs in random_space(8, 4)) {
            let p = provider_for(&vs, 1.0);
            let ws = words(7);
            let r = WordResponse::from_valid("t", &ws);
            let a = AnchorSet::new(&["w7"]).with_threshold(f64::NEG_INFINITY);
            let drat = score_drat(&r, &a, &p, 2).unwrap();
            let dat = score_dat(&r, &p, 10).unwrap();
            prop_assert!((drat - dat).abs() < 1e-12);
        }

        #[test]
        fn utility_gate_ordering(vs in random_space(5, 4)) {
            let p = provider_for(&vs, 1.0);
            let a = AnchorSet::new(&["w1", "w2", "w3", "w4"]);
            let lo = drat_utility("w0", &a, &p, GateFn::Min).unwrap();
            let mid = drat_utility("w0", &a, &p, GateFn::Avg).unwrap();
            let hi = drat_utility("w0", &a, &p, GateFn::Max).unwrap();
            prop_assert!(lo <= mid + 1e-15 && mid <= hi + 1e-15);
        }

        #[test]
        fn raising_tau_never_adds_survivors(vs in random_space(9, 4), t1 in -1.0f64..1.0, t2 in -1.0f64..1.0) {
            let p = provider_for(&vs, 1.0);
            let r = WordResponse::from_valid("t", &words(8));
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let s_lo: Vec<String> = drat_survivors(&r, &AnchorSet::new(&["w8"]).with_threshold(lo), &p).unwrap().into_iter().map(|v| v.term).collect();
            let s_hi: Vec<String> = drat_survivors(&r, &AnchorSet::new(&["w8"]).with_threshold(hi), &p).unwrap().into_iter().map(|v| v.term).collect();
            prop_assert!(s_hi.iter().all(|w| s_lo.contains(w)));
        }

        #[test]
        fn cdat_appropriateness_at_most_100(vs in random_space(6, 3)) {
            let p = provider_for(&vs, 1.0);
            let s = score_cdat(&WordResponse::from_valid("t", &words(5)), "w5", &p).unwrap();
            prop_assert!(s.appropriateness <= 100.0 + 1e-12);
            prop_assert!((0.0..=200.0).contains(&s.novelty));
        }

        #[test]
        fn rat_invariant_under_case_and_padding(pad in "[ \t]{0,3}", upper in any::<bool>()) {
            let items = vec![RatItem::new(["cottage", "swiss", "cake"], "cheese").unwrap()];
            let ans = if upper { "CHEESE" } else { "cheese" };
            let answers: BTreeMap<usize, String> = [(0, format!("{pad}{ans}{pad}"))].into_iter().collect();
            prop_assert_eq!(score_rat(&answers, &items).unwrap(), 100.0);
        }
    }
}
