//! Prompt templates with `${name}` placeholders.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::AdminError;
use crate::data;
use crate::scoring::{AnchorSet, RatItem};

/// Every prompt the toolkit can send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptKind {
    Dat,
    Cdat,
    PaceStage1,
    PaceStage2,
    Rat,
    Drat,
}

impl PromptKind {
    pub const ALL: [PromptKind; 6] = [
        Self::Dat,
        Self::Cdat,
        Self::PaceStage1,
        Self::PaceStage2,
        Self::Rat,
        Self::Drat,
    ];

    pub fn template(self) -> &'static str {
        match self {
            Self::Dat => data::TEMPLATE_DAT,
            Self::Cdat => data::TEMPLATE_CDAT,
            Self::PaceStage1 => data::TEMPLATE_PACE_STAGE1,
            Self::PaceStage2 => data::TEMPLATE_PACE_STAGE2,
            Self::Rat => data::TEMPLATE_RAT,
            Self::Drat => data::TEMPLATE_DRAT,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Dat => "dat",
            Self::Cdat => "cdat",
            Self::PaceStage1 => "pace-stage1",
            Self::PaceStage2 => "pace-stage2",
            Self::Rat => "rat",
            Self::Drat => "drat",
        }
    }
}

/// Hex SHA-256 of each stored template, for run manifests.
pub fn template_digests() -> BTreeMap<String, String> {
    PromptKind::ALL
        .iter()
        .map(|k| (k.name().to_string(), hex::encode(Sha256::digest(k.template()))))
        .collect()
}

/// Substitutes `${name}` placeholders. Every placeholder must have a value;
/// unused values are ignored.
pub fn render(template: &str, params: &BTreeMap<&str, String>) -> Result<String, AdminError> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| AdminError::Template("unterminated placeholder".into()))?;
        let name = &after[..end];
        let value = params
            .get(name)
            .ok_or_else(|| AdminError::Template(format!("missing parameter `{name}`")))?;
        out.push_str(value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn render_prompt(kind: PromptKind, params: &BTreeMap<&str, String>) -> Result<String, AdminError> {
    render(kind.template(), params)
}

pub fn dat_prompt() -> String {
    data::TEMPLATE_DAT.to_string()
}

pub fn cdat_prompt(cue: &str) -> Result<String, AdminError> {
    render_prompt(PromptKind::Cdat, &[("cue", cue.to_string())].into())
}

pub fn pace_stage1_prompt(seed: &str) -> Result<String, AdminError> {
    render_prompt(PromptKind::PaceStage1, &[("seed", seed.to_string())].into())
}

pub fn pace_stage2_prompt(seed: &str, first: &str, reason: &str) -> Result<String, AdminError> {
    render_prompt(
        PromptKind::PaceStage2,
        &[
            ("seed", seed.to_string()),
            ("first", first.to_string()),
            ("reason", reason.to_string()),
        ]
        .into(),
    )
}

pub fn rat_prompt(item: &RatItem) -> Result<String, AdminError> {
    render_prompt(
        PromptKind::Rat,
        &[
            ("stem1", item.stems[0].clone()),
            ("stem2", item.stems[1].clone()),
            ("stem3", item.stems[2].clone()),
        ]
        .into(),
    )
}

/// Anchors are listed as quoted, comma-separated terms.
pub fn drat_prompt(anchors: &AnchorSet) -> Result<String, AdminError> {
    let list = anchors
        .anchors
        .iter()
        .map(|a| format!("\"{a}\""))
        .collect::<Vec<_>>()
        .join(", ");
    render_prompt(
        PromptKind::Drat,
        &[("k", anchors.k().to_string()), ("anchors", list)].into(),
    )
}
