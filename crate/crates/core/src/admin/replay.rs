//! Offline scoring of stored trials.
//!
//! Replay is a pure function of the stored records, the provider and the
//! options: rows come out in cell-key order and serialize identically on
//! every run.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::store::{TestKind, TrialRecord};
use super::AdminError;
use crate::embedding::{cosine_similarity, Embedder};
use crate::gating::CdatCell;
use crate::scoring::{
    aggregate_scores, drat_threshold, embed_scorable, score_cdat, score_dat, score_drat, score_pace_chain,
    score_rat, AnchorSet, Chain, GateFn, RatItem, ScoreAggregate, ScoreError,
};

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    pub dat_scored_count: usize,
    pub drat_n_min: usize,
    pub drat_quantile: f64,
    pub drat_gate: GateFn,
    /// Calibration pool for τ_A; DRAT trials are left unscored without it.
    pub drat_pool: Option<Vec<String>>,
    /// Item bank the RAT records index into.
    pub rat_items: Vec<RatItem>,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            dat_scored_count: 7,
            drat_n_min: 3,
            drat_quantile: 0.9,
            drat_gate: GateFn::Max,
            drat_pool: None,
            rat_items: Vec::new(),
        }
    }
}

/// One scored trial. `score` is the CDAT novelty for CDAT rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub trial_id: String,
    pub cell_key: String,
    pub model: String,
    pub test: TestKind,
    pub embedding: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cue: Option<String>,
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appropriateness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn anchor_key(anchors: &[String]) -> String {
    anchors.join("\u{1f}")
}

/// Embedding failures other than a missing word abort replay; everything
/// else becomes a row-level error.
fn soften(e: ScoreError) -> Result<String, AdminError> {
    match e {
        ScoreError::Embedding(inner) => Err(AdminError::Replay(inner.to_string())),
        other => Ok(other.to_string()),
    }
}

fn score_one(
    record: &TrialRecord,
    provider: &dyn Embedder,
    options: &ReplayOptions,
    thresholds: &BTreeMap<String, Result<f64, String>>,
) -> Result<Option<TrialScore>, AdminError> {
    let p = &record.params;
    // Stage-1 PACE calls only seed the chains.
    if record.test == TestKind::Pace && p.stage != Some(2) {
        return Ok(None);
    }
    let mut row = TrialScore {
        trial_id: record.trial_id.clone(),
        cell_key: record.cell_key.clone(),
        model: record.model.clone(),
        test: record.test,
        embedding: if record.test == TestKind::Rat {
            "none".into()
        } else {
            provider.name().to_string()
        },
        temperature: p.temperature,
        cue: p.cue.clone(),
        score: None,
        appropriateness: None,
        threshold: None,
        dropped: Vec::new(),
        error: None,
    };
    if !record.is_ok() {
        row.error = Some(format!("{:?}", record.status));
        return Ok(Some(row));
    }
    if let Some(words) = &record.words {
        if record.test != TestKind::Rat {
            row.dropped = embed_scorable(&words.valid_words(), provider)
                .map_err(|e| AdminError::Replay(e.to_string()))?
                .1;
        }
    }
    let missing = |what: &str| Err(ScoreError::Unscorable(format!("record has no {what}")));
    let result: Result<f64, ScoreError> = match (record.test, &record.words) {
        (TestKind::Dat, Some(w)) => score_dat(w, provider, options.dat_scored_count),
        (TestKind::Cdat, Some(w)) => match &p.cue {
            Some(cue) => score_cdat(w, cue, provider).map(|s| {
                row.appropriateness = Some(s.appropriateness);
                s.novelty
            }),
            None => missing("cue"),
        },
        (TestKind::Drat, Some(w)) => match &p.anchors {
            Some(anchors) => match thresholds.get(&anchor_key(anchors)) {
                Some(Ok(tau)) => {
                    row.threshold = Some(*tau);
                    let set = AnchorSet::new(anchors)
                        .with_gate(options.drat_gate)
                        .with_threshold(*tau);
                    score_drat(w, &set, provider, options.drat_n_min)
                }
                Some(Err(e)) => Err(ScoreError::Invalid(e.clone())),
                None => Err(ScoreError::Uncalibrated),
            },
            None => missing("anchors"),
        },
        (TestKind::Pace, _) => match (&p.seed_word, &record.associations) {
            (Some(seed), Some(assocs)) => {
                let words: Vec<String> = assocs.iter().map(|a| a.word.clone()).collect();
                let chain = Chain::new(
                    seed.as_str(),
                    &words,
                    p.chain_index.unwrap_or(0),
                    p.seed_id.unwrap_or(0),
                );
                score_pace_chain(&chain, provider)
            }
            _ => missing("association chain"),
        },
        (TestKind::Rat, _) => match (
            p.item_index.and_then(|i| options.rat_items.get(i)),
            &record.answer,
        ) {
            (Some(item), Some(answer)) => {
                score_rat(&BTreeMap::from([(0, answer.clone())]), std::slice::from_ref(item))
            }
            (None, _) => missing("known RAT item"),
            (_, None) => missing("answer"),
        },
        (_, None) => missing("parsed words"),
    };
    match result {
        Ok(s) => row.score = Some(s),
        Err(e) => row.error = Some(soften(e)?),
    }
    Ok(Some(row))
}

/// Scores every record under `provider`. Records are taken in cell-key
/// order; PACE stage-1 records produce no row.
pub fn replay(
    records: &[&TrialRecord],
    provider: &dyn Embedder,
    options: &ReplayOptions,
) -> Result<Vec<TrialScore>, AdminError> {
    let mut ordered: Vec<&TrialRecord> = records.to_vec();
    ordered.sort_by(|a, b| a.cell_key.cmp(&b.cell_key));

    // Calibrate each distinct anchor set once, in a fixed order.
    let mut thresholds: BTreeMap<String, Result<f64, String>> = BTreeMap::new();
    if let Some(pool) = &options.drat_pool {
        for r in &ordered {
            if let Some(anchors) = &r.params.anchors {
                let key = anchor_key(anchors);
                if thresholds.contains_key(&key) {
                    continue;
                }
                let mut set = AnchorSet::new(anchors);
                let tau = match drat_threshold(
                    &mut set,
                    pool,
                    options.drat_quantile,
                    provider,
                    options.drat_gate,
                ) {
                    Ok(t) => Ok(t),
                    Err(e) => Err(soften(e)?),
                };
                thresholds.insert(key, tau);
            }
        }
    }

    let rows: Vec<Option<TrialScore>> = ordered
        .par_iter()
        .map(|r| score_one(r, provider, options, &thresholds))
        .collect::<Result<_, _>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Writes rows as JSON lines.
pub fn write_scores<W: Write>(rows: &[TrialScore], mut out: W) -> Result<(), AdminError> {
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Mean ± SEM per (model, test, embedding) over scored rows.
pub fn aggregate(rows: &[TrialScore]) -> Vec<ScoreAggregate> {
    let mut groups: BTreeMap<(String, TestKind, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Some(s) = r.score {
            groups
                .entry((r.model.clone(), r.test, r.embedding.clone()))
                .or_default()
                .push(s);
        }
    }
    groups
        .into_iter()
        .filter_map(|((model, test, emb), scores)| {
            aggregate_scores(&scores)
                .ok()
                .map(|a| a.labeled(&model, test.as_str(), &emb))
        })
        .collect()
}

/// Groups scored CDAT rows into gate cells: per-cue mean appropriateness and
/// mean novelty for every (model, temperature).
pub fn cdat_cells(rows: &[TrialScore]) -> Vec<CdatCell> {
    type Key = (String, u64);
    type PerCue = BTreeMap<String, Vec<f64>>;
    let mut by_cell: BTreeMap<Key, (PerCue, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let (TestKind::Cdat, Some(novelty), Some(app), Some(cue)) =
            (r.test, r.score, r.appropriateness, &r.cue)
        else {
            continue;
        };
        let entry = by_cell
            .entry((r.model.clone(), r.temperature.to_bits()))
            .or_default();
        entry.0.entry(cue.clone()).or_default().push(app);
        entry.1.push(novelty);
    }
    by_cell
        .into_iter()
        .map(|((model, bits), (per_cue, novelty))| CdatCell {
            model,
            temperature: f64::from_bits(bits),
            appropriateness: per_cue.values().map(|v| crate::stats::mean(v)).collect(),
            novelty: crate::stats::mean(&novelty),
        })
        .collect()
}

/// Random-noun appropriateness per cue: `100 · mean cos(cue, noun)` over the
/// pool. Cues the provider cannot embed are skipped.
pub fn random_noun_baseline<S: AsRef<str>>(
    cues: &[S],
    pool: &[String],
    provider: &dyn Embedder,
) -> Result<Vec<f64>, AdminError> {
    let (nouns, _) = embed_scorable(pool, provider).map_err(|e| AdminError::Replay(e.to_string()))?;
    if nouns.is_empty() {
        return Err(AdminError::Replay("baseline pool has no embeddable nouns".into()));
    }
    let mut out = Vec::with_capacity(cues.len());
    for cue in cues {
        let Ok(c) = provider.embed(cue.as_ref()) else {
            continue;
        };
        let mut total = 0.0;
        for n in &nouns {
            total += cosine_similarity(&c, n).map_err(|e| AdminError::Replay(e.to_string()))?;
        }
        out.push(100.0 * total / nouns.len() as f64);
    }
    Ok(out)
}
