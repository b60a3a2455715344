//! Word and phrase vector providers plus the cosine kernels every test
//! score is built from.
//!
//! Two provider kinds exist: [`StaticVectors`], loaded from a GloVe- or
//! FastText-style text file, and [`RemoteEncoder`], which talks to an
//! embedding service over HTTP. Both are immutable after construction and
//! safe to share across threads.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty term")]
    EmptyTerm,
    #[error("term {0:?} is out of vocabulary")]
    OutOfVocabulary(String),
    #[error("term {0:?} embeds to a zero vector")]
    Degenerate(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine of a zero vector is undefined")]
    ZeroVector,
    #[error("need at least 2 embeddable terms, got {0}")]
    InsufficientTerms(usize),
    #[error("embedding service error: {0}")]
    Remote(String),
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    StaticFile,
    RemoteService,
}

/// A term together with its embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TermVector {
    pub term: String,
    pub vector: Vec<f64>,
}

impl TermVector {
    /// Builds a term vector, rejecting empty, non-finite or zero vectors.
    pub fn new(term: impl Into<String>, vector: Vec<f64>) -> Result<Self> {
        let term = term.into();
        if vector.is_empty() || vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::Degenerate(term));
        }
        if vector.iter().all(|&x| x == 0.0) {
            return Err(EmbeddingError::Degenerate(term));
        }
        Ok(Self { term, vector })
    }

    pub fn dimension(&self) -> usize {
        self.vector.len()
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn unit(&self) -> Vec<f64> {
        let n = self.norm();
        self.vector.iter().map(|x| x / n).collect()
    }
}

/// Lowercases, NFC-normalizes, trims and collapses internal whitespace.
pub fn normalize_term(term: &str) -> String {
    let nfc: String = term.nfc().collect();
    nfc.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// A named source of word/phrase vectors.
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn kind(&self) -> ProviderKind;

    /// Embeds a single (possibly multi-word) term.
    fn embed(&self, term: &str) -> Result<TermVector>;

    /// Embeds many terms; remote providers override this to batch requests.
    fn embed_many(&self, terms: &[String]) -> Vec<Result<TermVector>> {
        terms.iter().map(|t| self.embed(t)).collect()
    }

    fn contains(&self, term: &str) -> bool {
        self.embed(term).is_ok()
    }
}

/// Options for [`StaticVectors::load_with`].
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub expected_dimension: Option<usize>,
    /// Skip (and count) malformed records instead of failing. Some public
    /// distributions contain a handful of tokens with embedded spaces.
    pub skip_malformed: bool,
    /// Keep only records whose token is in this set.
    pub keep: Option<std::collections::HashSet<String>>,
}

/// Vectors loaded from a whitespace-delimited text file.
pub struct StaticVectors {
    name: String,
    dimension: usize,
    index: HashMap<String, usize>,
    // row-major, `dimension` values per token
    data: Vec<f64>,
    skipped: usize,
}

impl std::fmt::Debug for StaticVectors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StaticVectors")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .field("vocabulary", &self.index.len())
            .finish()
    }
}

/// Loads a GloVe-style (or FastText `.vec` with header) vector file.
pub fn load_static_vectors(
    path: impl AsRef<Path>,
    expected_dimension: Option<usize>,
) -> Result<StaticVectors> {
    StaticVectors::load_with(
        path,
        LoadOptions {
            expected_dimension,
            ..Default::default()
        },
    )
}

impl StaticVectors {
    pub fn load_with(path: impl AsRef<Path>, options: LoadOptions) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "static".to_string());
        let mut vectors = Self::from_reader(BufReader::new(file), options)?;
        vectors.name = name;
        Ok(vectors)
    }

    pub fn from_reader<R: BufRead>(reader: R, options: LoadOptions) -> Result<Self> {
        let mut dimension = options.expected_dimension;
        let mut index = HashMap::new();
        let mut data: Vec<f64> = Vec::new();
        let mut skipped = 0usize;
        let mut header_dimension = None;

        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| EmbeddingError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();

            if line_no == 1 && fields.len() == 2 {
                if let (Ok(_count), Ok(dim)) = (fields[0].parse::<u64>(), fields[1].parse::<usize>()) {
                    header_dimension = Some(dim);
                    match dimension {
                        Some(d) if d != dim => {
                            return Err(EmbeddingError::Config(format!(
                                "file declares dimension {dim}, expected {d}"
                            )))
                        }
                        _ => dimension = Some(dim),
                    }
                    continue;
                }
            }

            let d = match dimension {
                Some(d) => d,
                None => {
                    let d = fields.len().saturating_sub(1);
                    if d == 0 {
                        return Err(EmbeddingError::Parse {
                            line: line_no,
                            message: "record has no vector components".into(),
                        });
                    }
                    dimension = Some(d);
                    d
                }
            };

            if fields.len() != d + 1 {
                if fields.len() >= 2
                    && options.expected_dimension.is_some()
                    && header_dimension.is_none()
                    && index.is_empty()
                {
                    return Err(EmbeddingError::Config(format!(
                        "records have dimension {}, expected {d}",
                        fields.len() - 1
                    )));
                }
                if options.skip_malformed {
                    skipped += 1;
                    continue;
                }
                return Err(EmbeddingError::Parse {
                    line: line_no,
                    message: format!("expected {} fields, found {}", d + 1, fields.len()),
                });
            }

            let token = fields[0];
            if index.contains_key(token) {
                continue;
            }
            if let Some(keep) = &options.keep {
                if !keep.contains(token) {
                    continue;
                }
            }
            let start = data.len();
            for f in &fields[1..] {
                match f.parse::<f64>() {
                    Ok(x) if x.is_finite() => data.push(x),
                    _ => {
                        data.truncate(start);
                        if options.skip_malformed {
                            skipped += 1;
                            break;
                        }
                        return Err(EmbeddingError::Parse {
                            line: line_no,
                            message: format!("non-numeric component {f:?}"),
                        });
                    }
                }
            }
            if data.len() == start + d {
                index.insert(token.to_string(), index.len());
            }
        }

        let dimension = dimension.ok_or_else(|| EmbeddingError::Parse {
            line: 0,
            message: "no vector records found".into(),
        })?;
        Ok(Self {
            name: "static".into(),
            dimension,
            index,
            data,
            skipped,
        })
    }

    /// Builds a provider from in-memory vectors; first occurrence wins.
    pub fn from_pairs<S: Into<String>>(
        name: impl Into<String>,
        pairs: impl IntoIterator<Item = (S, Vec<f64>)>,
    ) -> Result<Self> {
        let mut index = HashMap::new();
        let mut data = Vec::new();
        let mut dimension = None;
        for (token, v) in pairs {
            let token = token.into();
            let d = *dimension.get_or_insert(v.len());
            if v.len() != d {
                return Err(EmbeddingError::DimensionMismatch {
                    left: d,
                    right: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbeddingError::Degenerate(token));
            }
            if index.contains_key(&token) {
                continue;
            }
            index.insert(token, index.len());
            data.extend_from_slice(&v);
        }
        Ok(Self {
            name: name.into(),
            dimension: dimension.unwrap_or(0),
            index,
            data,
            skipped: 0,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn vocabulary_size(&self) -> usize {
        self.index.len()
    }

    /// Number of records skipped under `skip_malformed`.
    pub fn skipped_records(&self) -> usize {
        self.skipped
    }

    pub fn has_token(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Raw stored vector for an exact token.
    pub fn lookup(&self, token: &str) -> Option<Vec<f64>> {
        self.index.get(token).map(|&row| self.row(row))
    }

    fn row(&self, row: usize) -> Vec<f64> {
        let start = row * self.dimension;
        self.data[start..start + self.dimension].to_vec()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(|s| s.as_str())
    }
}

impl Embedder for StaticVectors {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::StaticFile
    }

    fn embed(&self, term: &str) -> Result<TermVector> {
        let normalized = normalize_term(term);
        if normalized.is_empty() {
            return Err(EmbeddingError::EmptyTerm);
        }
        let tokens: Vec<&str> = normalized.split(' ').collect();
        if tokens.len() == 1 {
            return match self.lookup(&normalized) {
                Some(v) => TermVector::new(normalized.clone(), v),
                None => Err(EmbeddingError::OutOfVocabulary(normalized)),
            };
        }
        // phrase vocabularies store multi-word entries joined by underscores
        if let Some(v) = self.lookup(&tokens.join("_")) {
            return TermVector::new(normalized, v);
        }
        let mut sum = vec![0.0f64; self.dimension];
        let mut found = 0usize;
        for t in &tokens {
            if let Some(&row) = self.index.get(*t) {
                let start = row * self.dimension;
                for (acc, &x) in sum.iter_mut().zip(&self.data[start..start + self.dimension]) {
                    *acc += x;
                }
                found += 1;
            }
        }
        if found == 0 {
            return Err(EmbeddingError::OutOfVocabulary(normalized));
        }
        let mean = sum.into_iter().map(|x| x / found as f64).collect();
        TermVector::new(normalized, mean)
    }
}

/// Request body of the embedding service's `POST /v1/embed`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
    pub model: String,
}

/// Response body of the embedding service's `POST /v1/embed`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
    pub model: String,
}

/// Body of `GET /healthz`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HealthStatus {
    pub status: String,
    #[serde(default)]
    pub models: Vec<String>,
}

impl HealthStatus {
    pub fn is_ready(&self) -> bool {
        self.status == "ready"
    }
}

/// Maximum texts per `/v1/embed` request accepted by the service.
pub const MAX_EMBED_BATCH: usize = 256;

/// Client for a sentence-encoder embedding service.
///
/// Phrases are embedded whole in one call. Results are cached per
/// normalized text so repeated lookups are free and deterministic within a
/// provider's lifetime.
pub struct RemoteEncoder {
    name: String,
    base_url: String,
    model: String,
    dimension: usize,
    client: reqwest::blocking::Client,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl std::fmt::Debug for RemoteEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEncoder")
            .field("name", &self.name)
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("dimension", &self.dimension)
            .finish()
    }
}

impl RemoteEncoder {
    /// Connects to the service and discovers the vector dimension with a
    /// probe request.
    pub fn connect(
        name: impl Into<String>,
        base_url: impl Into<String>,
        model: impl Into<String>,
    ) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| EmbeddingError::Remote(e.to_string()))?;
        let mut encoder = Self {
            name: name.into(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            dimension: 0,
            client,
            cache: Mutex::new(HashMap::new()),
        };
        let probe = encoder.request(&["dimension probe".to_string()])?;
        encoder.dimension = probe.dim;
        Ok(encoder)
    }

    pub fn health(&self) -> Result<HealthStatus> {
        let resp = self
            .client
            .get(format!("{}/healthz", self.base_url))
            .send()
            .map_err(|e| EmbeddingError::Remote(e.to_string()))?;
        resp.json::<HealthStatus>()
            .map_err(|e| EmbeddingError::Remote(e.to_string()))
    }

    fn request(&self, texts: &[String]) -> Result<EmbedResponse> {
        let body = EmbedRequest {
            texts: texts.to_vec(),
            model: self.model.clone(),
        };
        let resp = self
            .client
            .post(format!("{}/v1/embed", self.base_url))
            .json(&body)
            .send()
            .map_err(|e| EmbeddingError::Remote(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(EmbeddingError::Remote(format!("HTTP {status}: {text}")));
        }
        let parsed: EmbedResponse = resp
            .json()
            .map_err(|e| EmbeddingError::Remote(format!("malformed response: {e}")))?;
        if parsed.vectors.len() != texts.len() {
            return Err(EmbeddingError::Remote(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                parsed.vectors.len()
            )));
        }
        if parsed.dim == 0
            || parsed
                .vectors
                .iter()
                .any(|v| v.len() != parsed.dim || v.iter().any(|x| !x.is_finite()))
        {
            return Err(EmbeddingError::Remote(
                "response vectors violate the dimension/finiteness contract".into(),
            ));
        }
        if self.dimension != 0 && parsed.dim != self.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                left: self.dimension,
                right: parsed.dim,
            });
        }
        Ok(parsed)
    }

    /// Fetches and caches vectors for all uncached terms, batching requests.
    pub fn prefetch(&self, terms: &[String]) -> Result<()> {
        let mut missing: Vec<String> = {
            let cache = self.cache.lock().expect("cache poisoned");
            terms
                .iter()
                .map(|t| normalize_term(t))
                .filter(|t| !t.is_empty() && !cache.contains_key(t))
                .collect()
        };
        missing.sort();
        missing.dedup();
        for chunk in missing.chunks(MAX_EMBED_BATCH) {
            let resp = self.request(chunk)?;
            let mut cache = self.cache.lock().expect("cache poisoned");
            for (t, v) in chunk.iter().zip(resp.vectors) {
                cache.insert(t.clone(), v);
            }
        }
        Ok(())
    }
}

impl Embedder for RemoteEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::RemoteService
    }

    fn embed(&self, term: &str) -> Result<TermVector> {
        let normalized = normalize_term(term);
        if normalized.is_empty() {
            return Err(EmbeddingError::EmptyTerm);
        }
        if let Some(v) = self.cache.lock().expect("cache poisoned").get(&normalized) {
            return TermVector::new(normalized.clone(), v.clone());
        }
        let resp = self.request(std::slice::from_ref(&normalized))?;
        let v = resp.vectors.into_iter().next().expect("length checked");
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(normalized.clone(), v.clone());
        TermVector::new(normalized, v)
    }

    fn embed_many(&self, terms: &[String]) -> Vec<Result<TermVector>> {
        if let Err(e) = self.prefetch(terms) {
            let msg = e.to_string();
            return terms
                .iter()
                .map(|_| Err(EmbeddingError::Remote(msg.clone())))
                .collect();
        }
        terms.iter().map(|t| self.embed(t)).collect()
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Cosine similarity, clamped into [-1, 1].
pub fn cosine_similarity(u: &TermVector, v: &TermVector) -> Result<f64> {
    if u.dimension() != v.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            left: u.dimension(),
            right: v.dimension(),
        });
    }
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((dot(&u.vector, &v.vector) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Full cosine similarity matrix over a set of vectors.
pub(crate) fn cosine_matrix(vectors: &[TermVector]) -> Result<Vec<Vec<f64>>> {
    let units: Vec<Vec<f64>> = vectors.iter().map(TermVector::unit).collect();
    let d = units.first().map(|u| u.len()).unwrap_or(0);
    if let Some(bad) = units.iter().find(|u| u.len() != d) {
        return Err(EmbeddingError::DimensionMismatch {
            left: d,
            right: bad.len(),
        });
    }
    let n = units.len();
    let mut m = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = dot(&units[i], &units[j]).clamp(-1.0, 1.0);
            m[i][j] = c;
            m[j][i] = c;
        }
    }
    Ok(m)
}

/// `100 × mean over ordered pairs i≠j of (1 − cos)` over pre-embedded vectors.
pub fn mean_distance_of_vectors(vectors: &[TermVector]) -> Result<f64> {
    let n = vectors.len();
    if n < 2 {
        return Err(EmbeddingError::InsufficientTerms(n));
    }
    let m = cosine_matrix(vectors)?;
    let mut total = 0.0;
    for (i, row) in m.iter().enumerate() {
        total += row[i + 1..].iter().map(|c| 1.0 - c).sum::<f64>();
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(100.0 * total / pairs)
}

/// The shared DAT kernel: 100 × mean pairwise cosine distance.
pub fn pairwise_mean_distance<S: AsRef<str>>(terms: &[S], provider: &dyn Embedder) -> Result<f64> {
    if terms.len() < 2 {
        return Err(EmbeddingError::InsufficientTerms(terms.len()));
    }
    let vectors = terms
        .iter()
        .map(|t| provider.embed(t.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    mean_distance_of_vectors(&vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> StaticVectors {
        StaticVectors::from_pairs("toy", [("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])]).unwrap()
    }

    fn tv(v: &[f64]) -> TermVector {
        TermVector::new("t", v.to_vec()).unwrap()
    }

    #[test]
    fn loads_plain_records() {
        let p = StaticVectors::from_reader("a 1 0\nb 0 1\n".as_bytes(), LoadOptions::default()).unwrap();
        assert_eq!(p.dimension(), 2);
        assert_eq!(p.vocabulary_size(), 2);
    }

    #[test]
    fn header_line_is_consumed() {
        let row = vec!["0.5"; 300].join(" ");
        let text = format!("2 300\nx {row}\ny {row}\n");
        let p = StaticVectors::from_reader(text.as_bytes(), LoadOptions::default()).unwrap();
        assert_eq!(p.dimension(), 300);
        assert_eq!(p.vocabulary_size(), 2);
    }

    #[test]
    fn first_occurrence_wins() {
        let p =
            StaticVectors::from_reader("a 1 0\nb 0 1\na 9 9\n".as_bytes(), LoadOptions::default()).unwrap();
        assert_eq!(p.lookup("a").unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let err = StaticVectors::from_reader("a 1 0\nb 0\n".as_bytes(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, EmbeddingError::Parse { line: 2, .. }), "{err}");
        let err =
            StaticVectors::from_reader("a 1 0\nb 0 x\n".as_bytes(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, EmbeddingError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn skip_malformed_counts_bad_records() {
        let opts = LoadOptions {
            skip_malformed: true,
            ..Default::default()
        };
        let p = StaticVectors::from_reader("a 1 0\n. . 0 1\nb 0 1\n".as_bytes(), opts).unwrap();
        assert_eq!(p.vocabulary_size(), 2);
        assert_eq!(p.skipped_records(), 1);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let opts = LoadOptions {
            expected_dimension: Some(3),
            ..Default::default()
        };
        let err = StaticVectors::from_reader("a 1 0\n".as_bytes(), opts).unwrap_err();
        assert!(matches!(err, EmbeddingError::Config(_)), "{err}");
        let opts = LoadOptions {
            expected_dimension: Some(3),
            ..Default::default()
        };
        let err = StaticVectors::from_reader("1 2\na 1 0\n".as_bytes(), opts).unwrap_err();
        assert!(matches!(err, EmbeddingError::Config(_)), "{err}");
    }

    #[test]
    fn embed_term_examples() {
        let p = toy();
        assert_eq!(p.embed("a").unwrap().vector, vec![1.0, 0.0]);
        assert_eq!(p.embed("a b").unwrap().vector, vec![0.5, 0.5]);
        assert!(matches!(p.embed("qzx"), Err(EmbeddingError::OutOfVocabulary(_))));
        assert!(matches!(p.embed("   "), Err(EmbeddingError::EmptyTerm)));
    }

    #[test]
    fn query_is_normalized_before_lookup() {
        let p = toy();
        assert_eq!(p.embed("  A ").unwrap().vector, vec![1.0, 0.0]);
        assert_eq!(p.embed("A   b").unwrap(), p.embed("a b").unwrap());
        // decomposed é (e + combining acute) matches the precomposed token
        let p = StaticVectors::from_pairs("x", [("café", vec![1.0, 2.0])]).unwrap();
        assert!(p.embed("cafe\u{301}").is_ok());
    }

    #[test]
    fn underscore_phrase_entries_take_precedence() {
        let p = StaticVectors::from_pairs(
            "x",
            [
                ("immune", vec![1.0, 0.0]),
                ("system", vec![0.0, 1.0]),
                ("immune_system", vec![3.0, 3.0]),
            ],
        )
        .unwrap();
        assert_eq!(p.embed("Immune System").unwrap().vector, vec![3.0, 3.0]);
    }

    #[test]
    fn partially_oov_phrase_uses_known_tokens() {
        let p = toy();
        assert_eq!(p.embed("a qzx").unwrap().vector, vec![1.0, 0.0]);
    }

    #[test]
    fn zero_vectors_are_rejected() {
        let p = StaticVectors::from_pairs("z", [("z", vec![0.0, 0.0])]).unwrap();
        assert!(matches!(p.embed("z"), Err(EmbeddingError::Degenerate(_))));
        let p = StaticVectors::from_pairs("z", [("a", vec![1.0, 0.0]), ("b", vec![-1.0, 0.0])]).unwrap();
        assert!(matches!(p.embed("a b"), Err(EmbeddingError::Degenerate(_))));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(
            cosine_similarity(&tv(&[1.0, 0.0]), &tv(&[1.0, 0.0])).unwrap(),
            1.0
        );
        assert_eq!(
            cosine_similarity(&tv(&[1.0, 0.0]), &tv(&[0.0, 1.0])).unwrap(),
            0.0
        );
        assert_eq!(
            cosine_similarity(&tv(&[1.0, 0.0]), &tv(&[-1.0, 0.0])).unwrap(),
            -1.0
        );
        assert!(matches!(
            cosine_similarity(&tv(&[1.0, 0.0]), &tv(&[1.0, 0.0, 0.0])),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pairwise_examples() {
        let p = StaticVectors::from_pairs(
            "p",
            [
                ("x", vec![1.0, 0.0, 0.0]),
                ("y", vec![0.0, 1.0, 0.0]),
                ("z", vec![0.0, 0.0, 1.0]),
            ],
        )
        .unwrap();
        assert!((pairwise_mean_distance(&["x", "y", "z"], &p).unwrap() - 100.0).abs() < 1e-12);

        let p = StaticVectors::from_pairs(
            "p",
            [
                ("e", vec![1.0, 0.0]),
                ("n", vec![0.0, 1.0]),
                ("w", vec![-1.0, 0.0]),
                ("e2", vec![2.0, 0.0]),
            ],
        )
        .unwrap();
        // distances 1, 2, 1 over the three unordered pairs
        let s = pairwise_mean_distance(&["e", "n", "w"], &p).unwrap();
        assert!((s - 400.0 / 3.0).abs() < 1e-9, "{s}");
        assert!(pairwise_mean_distance(&["e", "e2"], &p).unwrap().abs() < 1e-12);
        assert!(matches!(
            pairwise_mean_distance(&["e"], &p),
            Err(EmbeddingError::InsufficientTerms(1))
        ));
    }
}
