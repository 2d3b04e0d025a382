use super::{PipelineConfig, PipelineError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasSource {
    Selection,
    #[serde(alias = "personal")]
    Researcher,
    #[serde(alias = "translation")]
    Transcription,
    #[serde(alias = "coding")]
    Labelling,
    Algorithmic,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mitigation {
    Reflexivity,
    Triangulation,
    Standardization,
    InterdisciplinaryReview,
    None,
}

impl fmt::Display for BiasSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BiasSource::Selection => "selection",
            BiasSource::Researcher => "personal/researcher",
            BiasSource::Transcription => "translation/transcription",
            BiasSource::Labelling => "coding/labelling",
            BiasSource::Algorithmic => "algorithmic",
            BiasSource::Data => "data",
        })
    }
}

impl fmt::Display for Mitigation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mitigation::Reflexivity => "reflexivity",
            Mitigation::Triangulation => "triangulation",
            Mitigation::Standardization => "standardization",
            Mitigation::InterdisciplinaryReview => "interdisciplinary-review",
            Mitigation::None => "none",
        })
    }
}

/// A declared bias source on a stage and how it was mitigated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasLedgerEntry {
    pub stage: String,
    pub source: BiasSource,
    #[serde(default)]
    pub description: String,
    pub mitigation: Mitigation,
    /// Stages this entry is triangulated against.
    #[serde(default)]
    pub links: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSection {
    pub stage: String,
    pub op: String,
    pub executed: bool,
    pub entries: Vec<BiasLedgerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmitigatedFlag {
    pub stage: String,
    pub source: BiasSource,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub pipeline: String,
    pub sections: Vec<StageSection>,
    pub unmitigated: Vec<UnmitigatedFlag>,
    /// Stages with no ledger entry.
    pub undeclared: Vec<String>,
}

/// Checks that every entry and link names a stage of `config`.
pub fn validate_ledger(config: &PipelineConfig, ledger: &[BiasLedgerEntry]) -> Result<(), PipelineError> {
    let ids: BTreeSet<&str> = config.stages.iter().map(|s| s.id.as_str()).collect();
    for entry in ledger {
        for id in std::iter::once(&entry.stage).chain(&entry.links) {
            if !ids.contains(id.as_str()) {
                return Err(PipelineError::UnknownStage(id.clone()));
            }
        }
    }
    Ok(())
}

/// Groups ledger entries by stage in pipeline order.
pub fn emit_bias_report(
    config: &PipelineConfig,
    ledger: &[BiasLedgerEntry],
) -> Result<BiasReport, PipelineError> {
    validate_ledger(config, ledger)?;
    let mut sections = Vec::new();
    let mut undeclared = Vec::new();
    for stage in &config.stages {
        let entries: Vec<BiasLedgerEntry> =
            ledger.iter().filter(|e| e.stage == stage.id).cloned().collect();
        if entries.is_empty() {
            undeclared.push(stage.id.clone());
        } else {
            sections.push(StageSection {
                stage: stage.id.clone(),
                op: stage.op.clone(),
                executed: !stage.is_human(),
                entries,
            });
        }
    }
    let unmitigated = sections
        .iter()
        .flat_map(|s| &s.entries)
        .filter(|e| e.mitigation == Mitigation::None)
        .map(|e| UnmitigatedFlag {
            stage: e.stage.clone(),
            source: e.source,
            description: e.description.clone(),
        })
        .collect();
    Ok(BiasReport {
        pipeline: config.name.clone(),
        sections,
        unmitigated,
        undeclared,
    })
}

impl BiasReport {
    pub fn render(&self) -> String {
        let mut out = format!("Bias report: {}\n", self.pipeline);
        if self.unmitigated.is_empty() {
            out.push_str("\nNo unmitigated bias sources.\n");
        } else {
            out.push_str("\nUNMITIGATED:\n");
            for f in &self.unmitigated {
                out.push_str(&format!("  ! {} [{}] {}\n", f.stage, f.source, f.description));
            }
        }
        for s in &self.sections {
            let kind = if s.executed { "executed" } else { "declared, not executed" };
            out.push_str(&format!("\n[{}] {} ({kind})\n", s.stage, s.op));
            for e in &s.entries {
                out.push_str(&format!("  source: {}\n  mitigation: {}\n", e.source, e.mitigation));
                if !e.description.is_empty() {
                    out.push_str(&format!("  note: {}\n", e.description));
                }
                if !e.links.is_empty() {
                    out.push_str(&format!("  triangulated with: {}\n", e.links.join(", ")));
                }
            }
        }
        if !self.undeclared.is_empty() {
            out.push_str(&format!("\nStages without declared bias: {}\n", self.undeclared.join(", ")));
        }
        out
    }
}
