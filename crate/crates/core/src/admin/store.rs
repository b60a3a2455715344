//! Trial records and the append-only JSONL trial store.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::parse::Association;
use super::AdminError;
use crate::scoring::WordResponse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Dat,
    Cdat,
    Pace,
    Rat,
    Drat,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dat => "dat",
            Self::Cdat => "cdat",
            Self::Pace => "pace",
            Self::Rat => "rat",
            Self::Drat => "drat",
        }
    }
}

impl std::str::FromStr for TestKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dat" => Ok(Self::Dat),
            "cdat" => Ok(Self::Cdat),
            "pace" => Ok(Self::Pace),
            "rat" => Ok(Self::Rat),
            "drat" => Ok(Self::Drat),
            other => Err(format!("unknown test {other:?}")),
        }
    }
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sampling parameters and cell coordinates of one trial.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialParams {
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    #[serde(default)]
    pub top_k_sent: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cue: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_word: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_index: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_bank: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_set: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrialStatus {
    Ok,
    /// The response arrived but could not be parsed.
    Unscorable {
        reason: String,
    },
    /// The request failed after retries.
    Failed {
        error: String,
    },
}

/// One administered trial. The raw response is stored verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: String,
    pub cell_key: String,
    pub model: String,
    pub test: TestKind,
    pub params: TrialParams,
    pub prompt: String,
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<WordResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count_deviation: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub associations: Option<Vec<Association>>,
    pub status: TrialStatus,
    pub attempts: u32,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    #[serde(default)]
    pub response_metadata: Value,
}

impl TrialRecord {
    pub fn is_ok(&self) -> bool {
        self.status == TrialStatus::Ok
    }
}

/// Stable short id for a cell key.
pub fn trial_id_for(cell_key: &str) -> String {
    hex::encode(&Sha256::digest(cell_key.as_bytes())[..8])
}

/// An append-only JSONL file of trial records. Later records for the same
/// cell supersede earlier ones in [`TrialStore::records`].
pub struct TrialStore {
    path: PathBuf,
    file: File,
    latest: HashMap<String, usize>,
    records: Vec<TrialRecord>,
}

impl TrialStore {
    /// Opens (creating if needed) a store. A torn final line left by an
    /// interrupted write is ignored.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, AdminError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let records = if path.exists() {
            repair_tail(&path)?;
            read_records(&path)?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut latest = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            latest.insert(r.cell_key.clone(), i);
        }
        Ok(Self {
            path,
            file,
            latest,
            records,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, cell_key: &str) -> bool {
        self.latest.contains_key(cell_key)
    }

    pub fn get(&self, cell_key: &str) -> Option<&TrialRecord> {
        self.latest.get(cell_key).map(|&i| &self.records[i])
    }

    /// Writes one record and flushes it before returning.
    pub fn append(&mut self, record: TrialRecord) -> Result<(), AdminError> {
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.latest.insert(record.cell_key.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    /// Latest record per cell, ordered by cell key.
    pub fn records(&self) -> Vec<&TrialRecord> {
        let ordered: BTreeMap<&String, usize> = self.latest.iter().map(|(k, &i)| (k, i)).collect();
        ordered.values().map(|&i| &self.records[i]).collect()
    }

    pub fn len(&self) -> usize {
        self.latest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latest.is_empty()
    }
}

/// Makes the file end on a record boundary so appends start a fresh line:
/// a complete last record missing its newline gets one, a torn one is cut.
fn repair_tail(path: &Path) -> Result<(), AdminError> {
    let bytes = std::fs::read(path)?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let start = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if serde_json::from_slice::<TrialRecord>(&bytes[start..]).is_ok() {
        OpenOptions::new().append(true).open(path)?.write_all(b"\n")?;
    } else {
        log::warn!("dropping torn final record in {}", path.display());
        OpenOptions::new().write(true).open(path)?.set_len(start as u64)?;
    }
    Ok(())
}

/// Reads every complete record from a store file.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>, AdminError> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TrialRecord>(line) {
            Ok(r) => out.push(r),
            Err(e) if Some(i) == last => {
                log::warn!("ignoring torn final record in {}: {e}", path.as_ref().display());
            }
            Err(e) => {
                return Err(AdminError::Store(format!(
                    "{} line {}: {e}",
                    path.as_ref().display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}
