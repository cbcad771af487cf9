//! Rules offered by the service, loaded once at startup.

use std::collections::BTreeMap;
use std::path::Path;

use rulechat_core::dialog::Reply;
use rulechat_core::rules::{parse_rule, LogicNode, RuleLogic};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// A question and scenario with a known answer, used by the study arms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyItem {
    pub item_id: String,
    pub question: String,
    #[serde(default)]
    pub scenario: String,
    pub answer: Reply,
}

#[derive(Debug, Clone, Deserialize)]
struct RawEntry {
    rule_id: String,
    #[serde(default)]
    title: String,
    rule_text: String,
    #[serde(default)]
    source_url: String,
    #[serde(default)]
    items: Vec<StudyItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicSummary {
    pub conditions: Vec<String>,
    pub structure: LogicNode,
    pub outcome_negated: bool,
    pub ambiguous: bool,
}

impl From<&RuleLogic> for LogicSummary {
    fn from(l: &RuleLogic) -> Self {
        Self {
            conditions: l.conditions.iter().map(|c| c.text.clone()).collect(),
            structure: l.structure.clone(),
            outcome_negated: l.outcome_negated,
            ambiguous: l.ambiguous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleCatalogEntry {
    pub rule_id: String,
    pub title: String,
    pub rule_text: String,
    pub source_url: String,
    pub parsed: LogicSummary,
    pub items: Vec<StudyItem>,
    #[serde(skip)]
    pub logic: RuleLogic,
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub entries: BTreeMap<String, RuleCatalogEntry>,
}

impl Catalog {
    /// Reads a JSON array of `{rule_id, title, rule_text, source_url, items}`.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let raw = std::fs::read_to_string(path).map_err(|e| ServiceError::Startup(format!("{}: {e}", path.display())))?;
        Self::from_json(&raw)
    }

    pub fn from_json(raw: &str) -> Result<Self, ServiceError> {
        let entries: Vec<RawEntry> = serde_json::from_str(raw).map_err(|e| ServiceError::Startup(format!("catalog: {e}")))?;
        let mut out = Catalog::default();
        for e in entries {
            let logic = parse_rule(&e.rule_text).map_err(|err| ServiceError::Startup(format!("rule {}: {err}", e.rule_id)))?;
            let entry = RuleCatalogEntry {
                title: if e.title.is_empty() { e.rule_id.clone() } else { e.title },
                parsed: LogicSummary::from(&logic),
                rule_id: e.rule_id.clone(),
                rule_text: e.rule_text,
                source_url: e.source_url,
                items: e.items,
                logic,
            };
            if out.entries.insert(e.rule_id.clone(), entry).is_some() {
                return Err(ServiceError::Startup(format!("duplicate rule_id {}", e.rule_id)));
            }
        }
        Ok(out)
    }
}
