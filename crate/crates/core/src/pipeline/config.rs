use super::ledger::{validate_ledger, BiasLedgerEntry};
use super::PipelineError;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Linear,
    Parallel,
    Hybrid,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Linear => "linear",
            Topology::Parallel => "parallel",
            Topology::Hybrid => "hybrid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Corpus,
    Survey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub path: PathBuf,
    /// Question schema, for surveys.
    #[serde(default)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub id: String,
    pub op: String,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub params: toml::Table,
}

impl StageSpec {
    pub fn is_human(&self) -> bool {
        self.op.starts_with("human.")
    }
}

/// What a stage hands to its consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Human,
    Corpus,
    Survey,
    TopicModel,
    Tuning,
    Coherence,
    Comparison,
    Sentiment,
    Classes,
    Frequencies,
    Triangulation,
}

/// Executable operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Human,
    CorpusIngest,
    SurveyIngest,
    Btm,
    Corex,
    TuneBtm,
    TuneCorex,
    Coherence,
    CompareTopics,
    Sentiment,
    Lca,
    Eda,
    Triangulate,
}

impl Op {
    pub fn parse(name: &str) -> Option<Op> {
        if name.starts_with("human.") && name.len() > "human.".len() {
            return Some(Op::Human);
        }
        Some(match name {
            "corpus.ingest" => Op::CorpusIngest,
            "survey.ingest" => Op::SurveyIngest,
            "topics.btm" => Op::Btm,
            "topics.corex" => Op::Corex,
            "tune.btm" => Op::TuneBtm,
            "tune.corex" => Op::TuneCorex,
            "eval.coherence" => Op::Coherence,
            "compare.topics" => Op::CompareTopics,
            "sentiment.classify" => Op::Sentiment,
            "lca.fit" => Op::Lca,
            "eda.frequencies" => Op::Eda,
            "verify.triangulate" => Op::Triangulate,
            _ => return None,
        })
    }

    pub fn output(self) -> ArtifactKind {
        match self {
            Op::Human => ArtifactKind::Human,
            Op::CorpusIngest => ArtifactKind::Corpus,
            Op::SurveyIngest => ArtifactKind::Survey,
            Op::Btm | Op::Corex => ArtifactKind::TopicModel,
            Op::TuneBtm | Op::TuneCorex => ArtifactKind::Tuning,
            Op::Coherence => ArtifactKind::Coherence,
            Op::CompareTopics => ArtifactKind::Comparison,
            Op::Sentiment => ArtifactKind::Sentiment,
            Op::Lca => ArtifactKind::Classes,
            Op::Eda => ArtifactKind::Frequencies,
            Op::Triangulate => ArtifactKind::Triangulation,
        }
    }

    /// Model-fitting stages, as opposed to ingestion and reporting.
    pub fn is_ml(self) -> bool {
        matches!(
            self,
            Op::Btm | Op::Corex | Op::TuneBtm | Op::TuneCorex | Op::Sentiment | Op::Lca
        )
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, Op::CompareTopics | Op::Triangulate)
    }

    pub fn dataset_kind(self) -> Option<DatasetKind> {
        match self {
            Op::CorpusIngest => Some(DatasetKind::Corpus),
            Op::SurveyIngest => Some(DatasetKind::Survey),
            _ => None,
        }
    }

    /// Checks the kinds of a stage's inputs, in declaration order. Human
    /// inputs only order execution and are ignored by data stages.
    fn accepts(self, kinds: &[ArtifactKind]) -> Result<(), String> {
        use ArtifactKind as K;
        let data: Vec<K> = kinds.iter().copied().filter(|&k| k != K::Human).collect();
        let kinds = if self == Op::Human { kinds } else { &data[..] };
        let count = |k: K| kinds.iter().filter(|&&x| x == k).count();
        let only = |allowed: &[K]| kinds.iter().all(|k| allowed.contains(k));
        let ok = match self {
            Op::Human => only(&[K::Human]),
            Op::CorpusIngest | Op::SurveyIngest => kinds.is_empty(),
            Op::Btm | Op::Corex => {
                count(K::Corpus) == 1 && count(K::Tuning) <= 1 && only(&[K::Corpus, K::Tuning])
            }
            Op::TuneBtm | Op::TuneCorex | Op::Sentiment => kinds == [K::Corpus],
            Op::Coherence => kinds == [K::TopicModel],
            Op::CompareTopics => kinds.len() >= 2 && only(&[K::TopicModel]),
            Op::Lca | Op::Eda => kinds == [K::Survey],
            Op::Triangulate => kinds.len() >= 2 && only(&[K::TopicModel, K::Classes]),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("input kinds {kinds:?} do not fit this operation"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub name: String,
    pub topology: Topology,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Run this configuration amends, for re-evaluation lineage.
    #[serde(default)]
    pub parent_run: Option<String>,
    #[serde(default)]
    pub datasets: BTreeMap<String, DatasetSpec>,
    pub stages: Vec<StageSpec>,
    #[serde(default)]
    pub ledger: Vec<BiasLedgerEntry>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn invalid(detail: impl Into<String>) -> PipelineError {
    PipelineError::ConfigValidation(detail.into())
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    /// Parses and validates a config file; relative paths resolve against
    /// its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.validate()?;
        Ok(config)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn stage(&self, id: &str) -> Option<&StageSpec> {
        self.stages.iter().find(|s| s.id == id)
    }

    pub fn op(&self, stage: &StageSpec) -> Op {
        Op::parse(&stage.op).expect("validated op")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, s) in self.stages.iter().enumerate() {
            if s.id.is_empty() {
                return Err(invalid("stage with empty id"));
            }
            if index.insert(s.id.as_str(), i).is_some() {
                return Err(invalid(format!("duplicate stage id {:?}", s.id)));
            }
        }
        if self.stages.is_empty() {
            return Err(invalid("no stages"));
        }
        for s in &self.stages {
            let op = Op::parse(&s.op).ok_or_else(|| invalid(format!("{}: unknown op {:?}", s.id, s.op)))?;
            for input in &s.inputs {
                if !index.contains_key(input.as_str()) {
                    return Err(invalid(format!("{}: unknown input stage {input:?}", s.id)));
                }
            }
            match (op.dataset_kind(), &s.dataset) {
                (Some(kind), Some(name)) => {
                    let spec = self
                        .datasets
                        .get(name)
                        .ok_or_else(|| invalid(format!("{}: unknown dataset {name:?}", s.id)))?;
                    if spec.kind != kind {
                        return Err(invalid(format!("{}: dataset {name:?} is not a {kind:?}", s.id)));
                    }
                    if kind == DatasetKind::Survey && spec.schema.is_none() {
                        return Err(invalid(format!("dataset {name:?} needs a question schema")));
                    }
                }
                (Some(_), None) => return Err(invalid(format!("{}: needs a dataset", s.id))),
                (None, Some(_)) => return Err(invalid(format!("{}: takes no dataset", s.id))),
                (None, None) => {}
            }
        }
        self.levels()?;
        for s in &self.stages {
            let kinds: Vec<ArtifactKind> = s
                .inputs
                .iter()
                .map(|i| self.op(&self.stages[index[i.as_str()]]).output())
                .collect();
            self.op(s)
                .accepts(&kinds)
                .map_err(|e| invalid(format!("{}: {e}", s.id)))?;
        }
        let shape = self.shape();
        if shape != self.topology {
            return Err(invalid(format!(
                "topology declared {} but the stage graph is {shape}",
                self.topology
            )));
        }
        validate_ledger(self, &self.ledger).map_err(|e| invalid(e.to_string()))
    }

    /// Stage indices grouped by depth; stages within a level keep config
    /// order. Fails on cycles.
    pub fn levels(&self) -> Result<Vec<Vec<usize>>, PipelineError> {
        let index: HashMap<&str, usize> =
            self.stages.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
        let n = self.stages.len();
        let mut depth: Vec<Option<usize>> = vec![None; n];
        let mut remaining = n;
        while remaining > 0 {
            let mut progressed = false;
            for (i, s) in self.stages.iter().enumerate() {
                if depth[i].is_some() {
                    continue;
                }
                let inputs: Option<Vec<usize>> =
                    s.inputs.iter().map(|x| depth[index[x.as_str()]]).collect();
                if let Some(d) = inputs {
                    depth[i] = Some(d.into_iter().map(|d| d + 1).max().unwrap_or(0));
                    remaining -= 1;
                    progressed = true;
                }
            }
            if !progressed {
                let stuck: Vec<&str> = (0..n)
                    .filter(|&i| depth[i].is_none())
                    .map(|i| self.stages[i].id.as_str())
                    .collect();
                return Err(invalid(format!("cycle among stages {stuck:?}")));
            }
        }
        let max = depth.iter().map(|d| d.expect("assigned")).max().unwrap_or(0);
        let mut levels = vec![Vec::new(); max + 1];
        for (i, d) in depth.iter().enumerate() {
            levels[d.expect("assigned")].push(i);
        }
        Ok(levels)
    }

    fn ancestors(&self, id: &str) -> std::collections::BTreeSet<String> {
        let mut seen = std::collections::BTreeSet::new();
        let mut stack: Vec<&str> = vec![id];
        while let Some(cur) = stack.pop() {
            if let Some(s) = self.stage(cur) {
                for i in &s.inputs {
                    if seen.insert(i.clone()) {
                        stack.push(i);
                    }
                }
            }
        }
        seen
    }

    /// Topology implied by the graph: parallel when some comparison stage
    /// takes at least two ML stages that do not depend on each other,
    /// hybrid when additionally an ML stage builds on another one.
    pub fn shape(&self) -> Topology {
        let is_ml = |id: &str| self.stage(id).map_or(false, |s| self.op(s).is_ml());
        let ml_root = |id: &str| -> Option<String> {
            // an input counts as the ML stage it is, or the closest ML ancestor
            if is_ml(id) {
                return Some(id.to_string());
            }
            self.ancestors(id).into_iter().find(|a| is_ml(a))
        };
        let parallel = self.stages.iter().filter(|s| self.op(s).is_comparison()).any(|s| {
            let roots: Vec<String> = s.inputs.iter().filter_map(|i| ml_root(i)).collect();
            roots.iter().enumerate().any(|(a, x)| {
                roots[a + 1..].iter().any(|y| {
                    x != y && !self.ancestors(x).contains(y) && !self.ancestors(y).contains(x)
                })
            })
        });
        let chained = self
            .stages
            .iter()
            .filter(|s| self.op(s).is_ml())
            .any(|s| self.ancestors(&s.id).iter().any(|a| is_ml(a)));
        match (parallel, chained) {
            (false, _) => Topology::Linear,
            (true, false) => Topology::Parallel,
            (true, true) => Topology::Hybrid,
        }
    }

    /// Canonical serialization used for run identity.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
