//! Maps errors to process exit codes.

use lexiscope::admin::client::ChatError;
use lexiscope::admin::AdminError;
use lexiscope::anchors::AnchorError;
use lexiscope::embedding::EmbeddingError;
use lexiscope::gating::GateError;
use lexiscope::greedy::GreedyError;
use lexiscope::report::ReportError;
use lexiscope::scoring::ScoreError;
use lexiscope::stats::StatsError;

pub const OK: u8 = 0;
pub const VALIDATION: u8 = 1;
pub const IO: u8 = 2;
pub const DEGENERATE: u8 = 3;

fn stats(e: &StatsError) -> u8 {
    match e {
        StatsError::Degenerate(_) | StatsError::Singular | StatsError::Insufficient { .. } => DEGENERATE,
        _ => VALIDATION,
    }
}

fn embedding(e: &EmbeddingError) -> u8 {
    match e {
        EmbeddingError::Io { .. } | EmbeddingError::Remote(_) => IO,
        _ => VALIDATION,
    }
}

fn score(e: &ScoreError) -> u8 {
    match e {
        ScoreError::Embedding(e) => embedding(e),
        _ => VALIDATION,
    }
}

fn classify(e: &(dyn std::error::Error + 'static)) -> Option<u8> {
    if let Some(e) = e.downcast_ref::<StatsError>() {
        return Some(stats(e));
    }
    if let Some(e) = e.downcast_ref::<ReportError>() {
        return Some(match e {
            ReportError::Io(_) => IO,
            ReportError::Stats(s) => stats(s),
            ReportError::FrontierViolation { .. } => DEGENERATE,
            _ => VALIDATION,
        });
    }
    if let Some(e) = e.downcast_ref::<GateError>() {
        return Some(match e {
            GateError::Degenerate(_) => DEGENERATE,
            _ => VALIDATION,
        });
    }
    if let Some(e) = e.downcast_ref::<AdminError>() {
        return Some(match e {
            AdminError::Io(_) | AdminError::Store(_) | AdminError::Endpoint(_) | AdminError::Replay(_) => IO,
            _ => VALIDATION,
        });
    }
    if let Some(e) = e.downcast_ref::<AnchorError>() {
        return Some(match e {
            AnchorError::Io(_) => IO,
            AnchorError::Embedding(e) => embedding(e),
            _ => VALIDATION,
        });
    }
    if let Some(e) = e.downcast_ref::<GreedyError>() {
        return Some(match e {
            GreedyError::Embedding(e) => embedding(e),
            GreedyError::Score(e) => score(e),
            _ => VALIDATION,
        });
    }
    if let Some(e) = e.downcast_ref::<ScoreError>() {
        return Some(score(e));
    }
    if let Some(e) = e.downcast_ref::<EmbeddingError>() {
        return Some(embedding(e));
    }
    if e.is::<ChatError>() || e.is::<std::io::Error>() {
        return Some(IO);
    }
    if e.is::<crate::Usage>() || e.is::<toml::de::Error>() || e.is::<serde_json::Error>() {
        return Some(VALIDATION);
    }
    None
}

/// The first recognised error in the chain decides the code.
pub fn code(err: &anyhow::Error) -> u8 {
    err.chain().find_map(classify).unwrap_or(VALIDATION)
}
