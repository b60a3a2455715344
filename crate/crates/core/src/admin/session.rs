//! Session plans and the resumable administration loop.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::client::{complete_with_retries, ChatClient, ChatMessage, ChatRequest, RateLimiter, RetryPolicy};
use super::parse::{parse_associations, parse_rat_answer, parse_word_list, validate_words, ValidationRules};
use super::store::{trial_id_for, TestKind, TrialParams, TrialRecord, TrialStatus, TrialStore};
use super::template;
use super::AdminError;
use crate::scoring::{AnchorSet, RatItem};

/// Token caps per request kind.
pub const MAX_TOKENS_WORDS: u32 = 256;
pub const MAX_TOKENS_PACE_STAGE1: u32 = 512;
pub const MAX_TOKENS_PACE_STAGE2: u32 = 2048;

/// What to administer to one model.
///
/// `trials` counts repetitions per grid unit: per temperature for DAT, per
/// cue for CDAT, per item for RAT, per anchor set for DRAT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub model: String,
    pub test: TestKind,
    pub temperatures: Vec<f64>,
    pub trials: usize,
    pub top_p: f64,
    pub top_k: Option<u32>,
    /// Base for per-call seeds of non-PACE tests; `None` sends no seed.
    pub base_seed: Option<u64>,
    #[serde(default)]
    pub cues: Vec<String>,
    #[serde(default)]
    pub seed_words: Vec<String>,
    #[serde(default = "default_chains")]
    pub chains_per_seed: usize,
    #[serde(default)]
    pub rat_items: Vec<RatItem>,
    #[serde(default)]
    pub anchor_sets: Vec<AnchorSet>,
}

fn default_chains() -> usize {
    3
}

impl SessionPlan {
    fn base(model: &str, test: TestKind) -> Self {
        Self {
            model: model.to_string(),
            test,
            temperatures: vec![1.0, 1.5, 2.0],
            trials: 40,
            top_p: 1.0,
            top_k: Some(0),
            base_seed: None,
            cues: Vec::new(),
            seed_words: Vec::new(),
            chains_per_seed: 3,
            rat_items: Vec::new(),
            anchor_sets: Vec::new(),
        }
    }

    /// Three temperatures, 40 trials each.
    pub fn dat(model: &str) -> Self {
        Self::base(model, TestKind::Dat)
    }

    /// Three temperatures, one trial per cue.
    pub fn cdat(model: &str, cues: Vec<String>) -> Self {
        Self {
            cues,
            trials: 1,
            ..Self::base(model, TestKind::Cdat)
        }
    }

    /// Temperature 0, three chains per seed word, per-call seeds.
    pub fn pace(model: &str, seed_words: Vec<String>) -> Self {
        Self {
            seed_words,
            temperatures: vec![0.0],
            trials: 1,
            top_k: None,
            ..Self::base(model, TestKind::Pace)
        }
    }

    /// Temperature 0, one attempt per item.
    pub fn rat(model: &str, items: Vec<RatItem>) -> Self {
        Self {
            rat_items: items,
            temperatures: vec![0.0],
            trials: 1,
            top_k: None,
            ..Self::base(model, TestKind::Rat)
        }
    }

    /// Temperature 1, one trial per anchor set.
    pub fn drat(model: &str, anchor_sets: Vec<AnchorSet>) -> Self {
        Self {
            anchor_sets,
            temperatures: vec![1.0],
            trials: 1,
            top_k: None,
            ..Self::base(model, TestKind::Drat)
        }
    }

    pub fn validate(&self) -> Result<(), AdminError> {
        let bad = |m: &str| Err(AdminError::Plan(m.to_string()));
        if self.model.trim().is_empty() {
            return bad("empty model id");
        }
        if self.temperatures.is_empty() || self.trials == 0 {
            return bad("empty sampling grid");
        }
        match self.test {
            TestKind::Cdat if self.cues.is_empty() => bad("CDAT plan needs cues"),
            TestKind::Pace if self.seed_words.is_empty() => bad("PACE plan needs seed words"),
            TestKind::Pace if self.chains_per_seed == 0 => bad("PACE plan needs chains"),
            TestKind::Rat if self.rat_items.is_empty() => bad("RAT plan needs items"),
            TestKind::Drat if self.anchor_sets.is_empty() => bad("DRAT plan needs anchor sets"),
            _ => Ok(()),
        }
    }
}

/// One request the session will issue.
#[derive(Debug, Clone)]
pub struct Cell {
    pub key: String,
    pub params: TrialParams,
    pub prompt: String,
}

fn fmt_temp(t: f64) -> String {
    format!("{t:.3}")
}

/// Deterministic 32-bit seed for a PACE call.
pub fn pace_call_seed(seed_word: &str, chain_index: u8, stage: u8) -> u64 {
    let mut h = Sha256::new();
    h.update(seed_word.as_bytes());
    h.update([0, chain_index, 0, stage]);
    let d = h.finalize();
    u32::from_be_bytes([d[0], d[1], d[2], d[3]]) as u64
}

fn derived_seed(base: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_be_bytes());
    h.update(key.as_bytes());
    let d = h.finalize();
    u32::from_be_bytes([d[0], d[1], d[2], d[3]]) as u64
}

fn anchor_label(a: &AnchorSet) -> String {
    if a.bank_id.is_empty() {
        a.anchors.join("+")
    } else {
        format!("{}:{}:k{}", a.bank_id, a.set_index, a.k())
    }
}

impl SessionPlan {
    fn params(&self, temperature: f64, max_tokens: u32) -> TrialParams {
        TrialParams {
            temperature,
            top_p: self.top_p,
            top_k: self.top_k,
            max_tokens,
            ..Default::default()
        }
    }

    fn finish(&self, key: String, mut params: TrialParams, prompt: String) -> Cell {
        if params.seed.is_none() {
            params.seed = self.base_seed.map(|b| derived_seed(b, &key));
        }
        Cell { key, params, prompt }
    }

    /// All first-stage cells of the grid (for PACE, the stage-1 calls).
    pub fn cells(&self) -> Result<Vec<Cell>, AdminError> {
        self.validate()?;
        let m = &self.model;
        let mut cells = Vec::new();
        match self.test {
            TestKind::Dat => {
                for &t in &self.temperatures {
                    for i in 0..self.trials {
                        let key = format!("{m}|dat|T={}|trial={i}", fmt_temp(t));
                        let mut p = self.params(t, MAX_TOKENS_WORDS);
                        p.trial_index = Some(i);
                        cells.push(self.finish(key, p, template::dat_prompt()));
                    }
                }
            }
            TestKind::Cdat => {
                for &t in &self.temperatures {
                    for cue in &self.cues {
                        for i in 0..self.trials {
                            let key = format!("{m}|cdat|T={}|cue={cue}|trial={i}", fmt_temp(t));
                            let mut p = self.params(t, MAX_TOKENS_WORDS);
                            p.trial_index = Some(i);
                            p.cue = Some(cue.clone());
                            cells.push(self.finish(key, p, template::cdat_prompt(cue)?));
                        }
                    }
                }
            }
            TestKind::Rat => {
                for &t in &self.temperatures {
                    for (idx, item) in self.rat_items.iter().enumerate() {
                        for i in 0..self.trials {
                            let key = format!("{m}|rat|T={}|item={idx}|trial={i}", fmt_temp(t));
                            let mut p = self.params(t, MAX_TOKENS_WORDS);
                            p.trial_index = Some(i);
                            p.item_index = Some(idx);
                            cells.push(self.finish(key, p, template::rat_prompt(item)?));
                        }
                    }
                }
            }
            TestKind::Drat => {
                for &t in &self.temperatures {
                    for set in &self.anchor_sets {
                        for i in 0..self.trials {
                            let key = format!(
                                "{m}|drat|T={}|anchors={}|trial={i}",
                                fmt_temp(t),
                                anchor_label(set)
                            );
                            let mut p = self.params(t, MAX_TOKENS_WORDS);
                            p.trial_index = Some(i);
                            p.anchor_bank = Some(set.bank_id.clone());
                            p.anchor_set = Some(set.set_index);
                            p.anchors = Some(set.anchors.clone());
                            cells.push(self.finish(key, p, template::drat_prompt(set)?));
                        }
                    }
                }
            }
            TestKind::Pace => {
                let t = self.temperatures[0];
                for (id, seed) in self.seed_words.iter().enumerate() {
                    let key = format!("{m}|pace|seed={seed}|stage=1");
                    let mut p = self.params(t, MAX_TOKENS_PACE_STAGE1);
                    p.seed = Some(pace_call_seed(seed, 0, 1));
                    p.seed_word = Some(seed.clone());
                    p.seed_id = Some(id);
                    p.stage = Some(1);
                    cells.push(self.finish(key, p, template::pace_stage1_prompt(seed)?));
                }
            }
        }
        Ok(cells)
    }

    /// Stage-2 chain cells that follow from a parsed stage-1 record.
    pub fn pace_stage2_cells(&self, stage1: &TrialRecord) -> Result<Vec<Cell>, AdminError> {
        let (Some(assocs), Some(seed)) = (&stage1.associations, &stage1.params.seed_word) else {
            return Ok(Vec::new());
        };
        let m = &self.model;
        let mut cells = Vec::new();
        for (c, a) in assocs.iter().take(self.chains_per_seed).enumerate() {
            let chain = (c + 1) as u8;
            let key = format!("{m}|pace|seed={seed}|stage=2|chain={chain}");
            let mut p = self.params(stage1.params.temperature, MAX_TOKENS_PACE_STAGE2);
            p.seed = Some(pace_call_seed(seed, chain, 2));
            p.seed_word = Some(seed.clone());
            p.seed_id = stage1.params.seed_id;
            p.chain_index = Some(chain);
            p.stage = Some(2);
            let prompt = template::pace_stage2_prompt(seed, a.word.trim(), a.reason.trim())?;
            cells.push(Cell {
                key,
                params: p,
                prompt,
            });
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOptions {
    pub concurrency: usize,
    pub retry: RetryPolicy,
    /// Requests per second; `None` for no limit.
    pub rate_limit: Option<f64>,
    /// Re-issue cells whose stored record failed or was unscorable.
    pub retry_failed: bool,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            concurrency: 4,
            retry: RetryPolicy::default(),
            rate_limit: None,
            retry_failed: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub issued: usize,
    pub skipped: usize,
    pub failed: usize,
    pub unscorable: usize,
    /// Total HTTP attempts including retries.
    pub attempts: u64,
}

fn parse_into(plan: &SessionPlan, record: &mut TrialRecord, rules: &ValidationRules) {
    let Some(raw) = record.raw_response.as_deref() else {
        return;
    };
    let unscorable = |reason: &str| TrialStatus::Unscorable {
        reason: reason.to_string(),
    };
    match record.test {
        TestKind::Dat | TestKind::Cdat | TestKind::Drat => match parse_word_list(raw, 10) {
            Some(list) => {
                let rules = match &record.params.cue {
                    Some(cue) => rules.clone().with_cue(cue),
                    None => rules.clone(),
                };
                record.words = Some(validate_words(&record.trial_id, &list.words, &rules));
                record.count_deviation = list.count_deviation;
            }
            None => record.status = unscorable("no JSON word array in response"),
        },
        TestKind::Rat => match parse_rat_answer(raw) {
            Some(a) => record.answer = Some(a),
            None => record.status = unscorable("empty answer"),
        },
        TestKind::Pace => match parse_associations(raw) {
            Some(a) => {
                let want = if record.params.stage == Some(1) {
                    plan.chains_per_seed
                } else {
                    20
                };
                if a.len() != want {
                    record.count_deviation = Some((want, a.len()));
                }
                record.associations = Some(a);
            }
            None => record.status = unscorable("no association list in response"),
        },
    }
}

fn administer(
    plan: &SessionPlan,
    cell: &Cell,
    client: &dyn ChatClient,
    options: &SessionOptions,
    limiter: Option<&RateLimiter>,
    rules: &ValidationRules,
) -> Result<TrialRecord, AdminError> {
    let mut params = cell.params.clone();
    let send_top_k = params.top_k.is_some() && client.accepts_top_k();
    params.top_k_sent = send_top_k;
    let request = ChatRequest {
        model: plan.model.clone(),
        messages: vec![ChatMessage::user(cell.prompt.clone())],
        temperature: params.temperature,
        top_p: params.top_p,
        top_k: if send_top_k { params.top_k } else { None },
        seed: params.seed,
        max_tokens: params.max_tokens,
    };
    let started_at = Utc::now();
    let (result, attempts) = complete_with_retries(client, &request, &options.retry, limiter);
    let (raw, status, metadata) = match result {
        Ok(r) => (Some(r.content), TrialStatus::Ok, r.metadata),
        Err(e) if e.is_fatal() => return Err(AdminError::Endpoint(e)),
        Err(e) => (None, TrialStatus::Failed { error: e.to_string() }, Value::Null),
    };
    let mut record = TrialRecord {
        trial_id: trial_id_for(&cell.key),
        cell_key: cell.key.clone(),
        model: plan.model.clone(),
        test: plan.test,
        params,
        prompt: cell.prompt.clone(),
        raw_response: raw,
        words: None,
        count_deviation: None,
        answer: None,
        associations: None,
        status,
        attempts,
        started_at,
        finished_at: Utc::now(),
        response_metadata: metadata,
    };
    parse_into(plan, &mut record, rules);
    Ok(record)
}

/// Issues every pending cell with bounded concurrency; the calling thread
/// is the single writer and persists each record as it arrives.
fn run_cells(
    plan: &SessionPlan,
    cells: Vec<Cell>,
    client: &dyn ChatClient,
    store: &mut TrialStore,
    options: &SessionOptions,
    report: &mut SessionReport,
) -> Result<(), AdminError> {
    let pending: Vec<Cell> = cells
        .into_iter()
        .filter(|c| match store.get(&c.key) {
            None => true,
            Some(r) => options.retry_failed && !r.is_ok(),
        })
        .collect();
    if pending.is_empty() {
        return Ok(());
    }
    let limiter = options.rate_limit.map(RateLimiter::per_second);
    let rules = ValidationRules::default();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fatal: Mutex<Option<AdminError>> = Mutex::new(None);
    let workers = options.concurrency.clamp(1, pending.len());
    let (tx, rx) = mpsc::channel::<TrialRecord>();

    let mut write_error = None;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (pending, next, abort, fatal, limiter, rules) =
                (&pending, &next, &abort, &fatal, limiter.as_ref(), &rules);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = pending.get(i) else { break };
                match administer(plan, cell, client, options, limiter, rules) {
                    Ok(r) => {
                        if tx.send(r).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        abort.store(true, Ordering::SeqCst);
                        fatal.lock().expect("poisoned").get_or_insert(e);
                        break;
                    }
                }
            });
        }
        drop(tx);
        for record in rx {
            report.issued += 1;
            report.attempts += record.attempts as u64;
            match record.status {
                TrialStatus::Failed { .. } => report.failed += 1,
                TrialStatus::Unscorable { .. } => report.unscorable += 1,
                TrialStatus::Ok => {}
            }
            if write_error.is_none() {
                if let Err(e) = store.append(record) {
                    abort.store(true, Ordering::SeqCst);
                    write_error = Some(e);
                }
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    if let Some(e) = fatal.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok(())
}

/// Administers a plan, persisting every trial (failures included) to the
/// store. Cells already in the store are skipped, so an interrupted session
/// resumes where it stopped.
pub fn run_session(
    plan: &SessionPlan,
    client: &dyn ChatClient,
    store: &mut TrialStore,
    options: &SessionOptions,
) -> Result<SessionReport, AdminError> {
    let mut report = SessionReport::default();
    let cells = plan.cells()?;
    let total = cells.len();
    run_cells(plan, cells, client, store, options, &mut report)?;
    let mut grid = total;
    if plan.test == TestKind::Pace {
        let mut stage2 = Vec::new();
        for seed in &plan.seed_words {
            let key = format!("{}|pace|seed={seed}|stage=1", plan.model);
            if let Some(r) = store.get(&key) {
                if r.is_ok() {
                    stage2.extend(plan.pace_stage2_cells(r)?);
                }
            }
        }
        grid += stage2.len();
        run_cells(plan, stage2, client, store, options, &mut report)?;
    }
    report.skipped = grid - report.issued;
    Ok(report)
}
