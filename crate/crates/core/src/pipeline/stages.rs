use super::compare::{compare_topic_models, TopicModelResult};
use super::config::{Op, PipelineConfig, StageSpec};
use super::triangulate::{triangulate, DEFAULT_THRESHOLD};
use crate::btm::{self, BitermConfig};
use crate::corex::{self, CorexConfig};
use crate::corpus::{Corpus, DocumentFilter, PreprocessRules, SentimentLabel, TokenizedCorpus};
use crate::distribution::{AssignmentMode, GroupDistribution};
use crate::lca::{self, LatentClassModel, RawSurvey, SurveyDataset};
use crate::sentiment::{self, ConfusionMatrix, SentimentModel, TrainSettings};
use crate::tune::{self, CoherenceIndex, ParamConfig, SearchSpace, TuneOutcome};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Debug)]
pub struct CorpusData {
    pub dataset: String,
    pub tokens: TokenizedCorpus,
}

#[derive(Debug)]
pub struct SurveyData {
    pub dataset: String,
    pub raw: RawSurvey,
    pub data: SurveyDataset,
}

#[derive(Debug)]
pub struct TopicData {
    pub result: TopicModelResult,
    pub distribution: GroupDistribution,
    pub dataset: String,
    pub corpus: Arc<CorpusData>,
}

#[derive(Debug)]
pub struct TuningData {
    pub model: Op,
    pub best: ParamConfig,
}

#[derive(Debug)]
pub struct ClassData {
    pub dataset: String,
    pub model: LatentClassModel,
    pub distribution: GroupDistribution,
}

/// In-memory result handed from a stage to its consumers.
#[derive(Debug, Clone)]
pub enum Artifact {
    Human,
    Corpus(Arc<CorpusData>),
    Survey(Arc<SurveyData>),
    TopicModel(Arc<TopicData>),
    Tuning(Arc<TuningData>),
    Classes(Arc<ClassData>),
    /// Terminal outputs whose content lives only in files.
    Report,
}

pub struct StageOutput {
    pub artifact: Artifact,
    /// File name within the stage directory, and its bytes.
    pub files: Vec<(String, Vec<u8>)>,
}

fn params<T: DeserializeOwned>(stage: &StageSpec) -> Result<T, String> {
    toml::Value::Table(stage.params.clone())
        .try_into()
        .map_err(|e| format!("bad params: {e}"))
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn text(s: String) -> Vec<u8> {
    s.into_bytes()
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct IngestParams {
    min_df: usize,
    stopwords: bool,
    stopwords_file: Option<PathBuf>,
    stem: bool,
    filter: DocumentFilter,
}

impl Default for IngestParams {
    fn default() -> Self {
        IngestParams {
            min_df: 1,
            stopwords: true,
            stopwords_file: None,
            stem: false,
            filter: DocumentFilter::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BtmParams {
    topics: usize,
    alpha: f64,
    beta: f64,
    window: usize,
    iterations: usize,
    top_k: usize,
    coherence_k: usize,
}

impl Default for BtmParams {
    fn default() -> Self {
        let d = BitermConfig::default();
        BtmParams {
            topics: d.topics,
            alpha: d.alpha,
            beta: d.beta,
            window: d.window,
            iterations: d.iterations,
            top_k: 20,
            coherence_k: 10,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CorexParams {
    topics: usize,
    anchors: Vec<(String, usize)>,
    anchor_strength: f64,
    max_iterations: usize,
    top_k: usize,
    coherence_k: usize,
}

impl Default for CorexParams {
    fn default() -> Self {
        let d = CorexConfig::default();
        CorexParams {
            topics: d.topics,
            anchors: Vec::new(),
            anchor_strength: d.anchor_strength,
            max_iterations: d.max_iterations,
            top_k: 20,
            coherence_k: 10,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TuneParams {
    trials: usize,
    coherence_k: usize,
    space: Option<PathBuf>,
    /// Gibbs sweeps per biterm trial.
    iterations: usize,
    anchors: Vec<(String, usize)>,
}

impl Default for TuneParams {
    fn default() -> Self {
        TuneParams {
            trials: 100,
            coherence_k: 10,
            space: None,
            iterations: 500,
            anchors: Vec::new(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CoherenceParams {
    k: usize,
}

impl Default for CoherenceParams {
    fn default() -> Self {
        CoherenceParams { k: 10 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CompareParams {
    k: usize,
}

impl Default for CompareParams {
    fn default() -> Self {
        CompareParams { k: 20 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SentimentParams {
    train_fraction: f64,
    l2: f64,
    shap_samples: usize,
    top_terms: usize,
}

impl Default for SentimentParams {
    fn default() -> Self {
        SentimentParams {
            train_fraction: 0.7,
            l2: TrainSettings::default().l2,
            shap_samples: 2048,
            top_terms: 50,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LcaParams {
    k_min: usize,
    k_max: usize,
    restarts: usize,
    assignment: AssignmentMode,
}

impl Default for LcaParams {
    fn default() -> Self {
        LcaParams {
            k_min: 1,
            k_max: 8,
            restarts: 10,
            assignment: AssignmentMode::Hard,
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct EdaParams {
    questions: Vec<String>,
    stratify: bool,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TriangulateParams {
    threshold: f64,
}

impl Default for TriangulateParams {
    fn default() -> Self {
        TriangulateParams {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Biterm settings from a tuned or searched configuration.
pub fn btm_config(params: &ParamConfig, base: &BitermConfig) -> BitermConfig {
    let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
    BitermConfig {
        topics: get("topics", base.topics as f64) as usize,
        alpha: get("alpha", base.alpha),
        beta: get("beta", base.beta),
        window: get("window", base.window as f64) as usize,
        ..base.clone()
    }
}

pub fn corex_config(params: &ParamConfig, base: &CorexConfig) -> CorexConfig {
    let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
    CorexConfig {
        topics: get("topics", base.topics as f64) as usize,
        anchor_strength: get("anchor_strength", base.anchor_strength),
        ..base.clone()
    }
}

fn words(topics: Vec<Vec<(String, f64)>>) -> Vec<Vec<String>> {
    topics
        .into_iter()
        .map(|t| t.into_iter().map(|(w, _)| w).collect())
        .collect()
}

/// TPE over biterm settings, scored by mean UMass coherence of the top
/// `coherence_k` words.
pub fn tune_btm(
    corpus: &TokenizedCorpus,
    space: &SearchSpace,
    trials: usize,
    coherence_k: usize,
    base: &BitermConfig,
    seed: u64,
) -> Result<TuneOutcome, String> {
    let index = CoherenceIndex::new(&corpus.tokens);
    tune::optimize(
        |p, trial_seed| -> Result<f64, String> {
            let config = BitermConfig {
                seed: trial_seed,
                ..btm_config(p, base)
            };
            let model = btm::fit(corpus, &config).map_err(|e| e.to_string())?;
            index
                .umass(&words(model.topic_words(coherence_k)), coherence_k)
                .map_err(|e| e.to_string())
        },
        space,
        trials,
        seed,
    )
    .map_err(|e| e.to_string())
}

/// TPE over anchored CorEx settings, scored like [`tune_btm`].
pub fn tune_corex(
    corpus: &TokenizedCorpus,
    space: &SearchSpace,
    trials: usize,
    coherence_k: usize,
    base: &CorexConfig,
    seed: u64,
) -> Result<TuneOutcome, String> {
    let index = CoherenceIndex::new(&corpus.tokens);
    tune::optimize(
        |p, trial_seed| -> Result<f64, String> {
            let config = CorexConfig {
                seed: trial_seed,
                ..corex_config(p, base)
            };
            let model = corex::fit(corpus, &config).map_err(|e| e.to_string())?;
            index
                .umass(&words(model.topic_words(coherence_k)), coherence_k)
                .map_err(|e| e.to_string())
        },
        space,
        trials,
        seed,
    )
    .map_err(|e| e.to_string())
}

fn corpus_input(inputs: &[Artifact]) -> Arc<CorpusData> {
    inputs
        .iter()
        .find_map(|a| match a {
            Artifact::Corpus(c) => Some(c.clone()),
            _ => None,
        })
        .expect("validated corpus input")
}

fn tuning_input(inputs: &[Artifact]) -> Option<Arc<TuningData>> {
    inputs.iter().find_map(|a| match a {
        Artifact::Tuning(t) => Some(t.clone()),
        _ => None,
    })
}

fn survey_input(inputs: &[Artifact]) -> Arc<SurveyData> {
    match &inputs[0] {
        Artifact::Survey(s) => s.clone(),
        _ => unreachable!("validated survey input"),
    }
}

fn topic_output(
    stage: &StageSpec,
    corpus: Arc<CorpusData>,
    topics: Vec<Vec<(String, f64)>>,
    assignments: Vec<btm::DocAssignment>,
    coherence_k: usize,
    top_k: usize,
    mut files: Vec<(String, Vec<u8>)>,
) -> Result<StageOutput, String> {
    let names = words(topics);
    let index = CoherenceIndex::new(&corpus.tokens.tokens);
    let coherence = index.umass(&names, coherence_k).map_err(|e| e.to_string())?;
    let distribution =
        btm::group_topic_distribution(&assignments, &corpus.tokens.group_map(), names.len())
            .map_err(|e| e.to_string())?;
    let result = TopicModelResult {
        name: stage.id.clone(),
        vocabulary_fingerprint: corpus.tokens.vocabulary.fingerprint(),
        topics: names,
        coherence: Some(coherence),
    };
    files.push(("topics_table.csv".into(), text(result.table_csv(top_k))));
    files.push(("assignments.csv".into(), text(btm::assignments_csv(&assignments))));
    files.push(("group_distribution.csv".into(), text(distribution.to_csv())));
    files.push(("topics.json".into(), json(&result)));
    Ok(StageOutput {
        artifact: Artifact::TopicModel(Arc::new(TopicData {
            result,
            distribution,
            dataset: corpus.dataset.clone(),
            corpus,
        })),
        files,
    })
}

/// Runs one stage on its inputs. `seed` is the stage's derived seed.
pub fn execute(
    config: &PipelineConfig,
    stage: &StageSpec,
    inputs: &[Artifact],
    seed: u64,
) -> Result<StageOutput, String> {
    let op = config.op(stage);
    match op {
        Op::Human => Ok(StageOutput {
            artifact: Artifact::Human,
            files: vec![],
        }),
        Op::CorpusIngest => {
            let p: IngestParams = params(stage)?;
            let name = stage.dataset.as_deref().expect("validated dataset");
            let spec = &config.datasets[name];
            let corpus = Corpus::ingest(config.resolve(&spec.path)).map_err(|e| e.to_string())?;
            let corpus = corpus.filter(&p.filter);
            let mut rules = if p.stopwords {
                PreprocessRules::default()
            } else {
                PreprocessRules::without_stopwords()
            };
            if let Some(file) = &p.stopwords_file {
                rules = rules
                    .with_stopwords_file(config.resolve(file))
                    .map_err(|e| e.to_string())?;
            }
            rules.stem = p.stem;
            let tokens = TokenizedCorpus::build(&corpus, &rules, p.min_df).map_err(|e| e.to_string())?;
            let summary = serde_json::json!({
                "dataset": name,
                "documents": corpus.len(),
                "vocabulary_size": tokens.vocabulary.len(),
                "vocabulary_fingerprint": tokens.vocabulary.fingerprint(),
            });
            Ok(StageOutput {
                files: vec![
                    ("vocabulary.csv".into(), text(tokens.vocabulary.to_csv())),
                    ("summary.json".into(), json(&summary)),
                ],
                artifact: Artifact::Corpus(Arc::new(CorpusData {
                    dataset: name.to_string(),
                    tokens,
                })),
            })
        }
        Op::SurveyIngest => {
            let name = stage.dataset.as_deref().expect("validated dataset");
            let spec = &config.datasets[name];
            let schema = spec.schema.as_ref().expect("validated schema");
            let raw = RawSurvey::load(config.resolve(&spec.path), config.resolve(schema))
                .map_err(|e| e.to_string())?;
            let data = lca::encode_indicators(&raw).map_err(|e| e.to_string())?;
            let summary = serde_json::json!({
                "dataset": name,
                "respondents": data.respondents(),
                "questions": raw.schema.questions.len(),
                "indicators": data.indicators,
            });
            Ok(StageOutput {
                files: vec![("summary.json".into(), json(&summary))],
                artifact: Artifact::Survey(Arc::new(SurveyData {
                    dataset: name.to_string(),
                    raw,
                    data,
                })),
            })
        }
        Op::Btm => {
            let p: BtmParams = params(stage)?;
            let corpus = corpus_input(inputs);
            let base = BitermConfig {
                topics: p.topics,
                alpha: p.alpha,
                beta: p.beta,
                window: p.window,
                iterations: p.iterations,
                seed,
            };
            let model_config = match tuning_input(inputs) {
                Some(t) if t.model == Op::TuneBtm => btm_config(&t.best, &base),
                Some(_) => return Err("tuning input is not for the biterm model".into()),
                None => base,
            };
            let model = btm::fit(&corpus.tokens, &model_config).map_err(|e| e.to_string())?;
            let files = vec![
                ("topic_words.csv".into(), text(model.topic_words_csv(p.top_k))),
                ("config.json".into(), json(&model_config)),
            ];
            let assignments = model.assign(&corpus.tokens);
            topic_output(stage, corpus, model.topic_words(p.top_k), assignments, p.coherence_k, p.top_k, files)
        }
        Op::Corex => {
            let p: CorexParams = params(stage)?;
            let corpus = corpus_input(inputs);
            let base = CorexConfig {
                topics: p.topics,
                anchors: p.anchors,
                anchor_strength: p.anchor_strength,
                max_iterations: p.max_iterations,
                seed,
                ..CorexConfig::default()
            };
            let model_config = match tuning_input(inputs) {
                Some(t) if t.model == Op::TuneCorex => corex_config(&t.best, &base),
                Some(_) => return Err("tuning input is not for the CorEx model".into()),
                None => base,
            };
            let model = corex::fit(&corpus.tokens, &model_config).map_err(|e| e.to_string())?;
            let files = vec![
                ("topic_words.csv".into(), text(model.topic_words_csv(p.top_k))),
                ("tc.csv".into(), text(model.tc_csv())),
                ("config.json".into(), json(&model_config)),
            ];
            let assignments = model.assign(&corpus.tokens);
            topic_output(stage, corpus, model.topic_words(p.top_k), assignments, p.coherence_k, p.top_k, files)
        }
        Op::TuneBtm | Op::TuneCorex => {
            let p: TuneParams = params(stage)?;
            let corpus = corpus_input(inputs);
            let space = match &p.space {
                Some(path) => SearchSpace::load(config.resolve(path)).map_err(|e| e.to_string())?,
                None if op == Op::TuneBtm => SearchSpace::btm_default(),
                None => SearchSpace::corex_default(),
            };
            let outcome = if op == Op::TuneBtm {
                let base = BitermConfig {
                    iterations: p.iterations,
                    ..BitermConfig::default()
                };
                tune_btm(&corpus.tokens, &space, p.trials, p.coherence_k, &base, seed)?
            } else {
                let base = CorexConfig {
                    anchors: p.anchors,
                    ..CorexConfig::default()
                };
                tune_corex(&corpus.tokens, &space, p.trials, p.coherence_k, &base, seed)?
            };
            Ok(StageOutput {
                files: vec![
                    ("trials.csv".into(), text(tune::trials_csv(&space, &outcome.history))),
                    ("best.json".into(), json(&outcome.best.config)),
                ],
                artifact: Artifact::Tuning(Arc::new(TuningData {
                    model: op,
                    best: outcome.best.config,
                })),
            })
        }
        Op::Coherence => {
            let p: CoherenceParams = params(stage)?;
            let Artifact::TopicModel(model) = &inputs[0] else {
                unreachable!("validated topic model input")
            };
            let index = CoherenceIndex::new(&model.corpus.tokens.tokens);
            let per_topic: Vec<f64> = model
                .result
                .topics
                .iter()
                .map(|t| index.topic_umass(&t[..t.len().min(p.k)]))
                .collect();
            let mean = index.umass(&model.result.topics, p.k).map_err(|e| e.to_string())?;
            let report = serde_json::json!({
                "model": model.result.name,
                "k": p.k,
                "umass": mean,
                "per_topic": per_topic,
            });
            Ok(StageOutput {
                files: vec![("coherence.json".into(), json(&report))],
                artifact: Artifact::Report,
            })
        }
        Op::CompareTopics => {
            let p: CompareParams = params(stage)?;
            let results: Vec<TopicModelResult> = inputs
                .iter()
                .map(|a| match a {
                    Artifact::TopicModel(t) => t.result.clone(),
                    _ => unreachable!("validated topic model inputs"),
                })
                .collect();
            let report = compare_topic_models(&results, p.k).map_err(|e| e.to_string())?;
            Ok(StageOutput {
                files: vec![
                    ("comparison.json".into(), json(&report)),
                    ("comparison.txt".into(), text(report.render())),
                ],
                artifact: Artifact::Report,
            })
        }
        Op::Sentiment => sentiment_stage(stage, &corpus_input(inputs), seed),
        Op::Lca => {
            let p: LcaParams = params(stage)?;
            let survey = survey_input(inputs);
            if p.k_min == 0 || p.k_max < p.k_min {
                return Err("need 1 <= k_min <= k_max".into());
            }
            let range: Vec<usize> = (p.k_min..=p.k_max).collect();
            let selection =
                lca::lca_select_k(&survey.data, &range, p.restarts, seed).map_err(|e| e.to_string())?;
            let model = selection
                .models
                .iter()
                .find(|m| m.classes() == selection.best_k)
                .expect("selected model")
                .clone();
            let distribution = lca::group_class_distribution(&model, &survey.data, p.assignment)
                .map_err(|e| e.to_string())?;
            let mut bic = String::from("k,log_likelihood,bic\n");
            for (m, (k, b)) in selection.models.iter().zip(&selection.bic) {
                bic.push_str(&format!("{k},{:.6},{b:.6}\n", m.log_likelihood));
            }
            Ok(StageOutput {
                files: vec![
                    ("measurement_model.csv".into(), text(model.measurement_csv())),
                    ("group_distribution.csv".into(), text(distribution.to_csv())),
                    ("group_distribution.json".into(), json(&distribution)),
                    ("model_selection.csv".into(), text(bic)),
                    ("model.json".into(), json(&model)),
                ],
                artifact: Artifact::Classes(Arc::new(ClassData {
                    dataset: survey.dataset.clone(),
                    model,
                    distribution,
                })),
            })
        }
        Op::Eda => {
            let p: EdaParams = params(stage)?;
            let survey = survey_input(inputs);
            let questions: Vec<String> = if p.questions.is_empty() {
                survey.raw.schema.questions.iter().map(|q| q.id.clone()).collect()
            } else {
                p.questions
            };
            let mut files = Vec::new();
            for q in &questions {
                let mut tables = vec![lca::eda_frequencies(&survey.raw, q, None).map_err(|e| e.to_string())?];
                if p.stratify {
                    tables.extend(lca::eda_stratified(&survey.raw, q).map_err(|e| e.to_string())?);
                }
                files.push((format!("frequencies_{q}.csv"), text(lca::frequency_csv(&tables))));
            }
            Ok(StageOutput {
                files,
                artifact: Artifact::Report,
            })
        }
        Op::Triangulate => {
            let p: TriangulateParams = params(stage)?;
            let named: Vec<(String, &GroupDistribution)> = stage
                .inputs
                .iter()
                .filter(|id| config.stage(id).map_or(false, |s| !s.is_human()))
                .zip(inputs)
                .map(|(id, a)| match a {
                    Artifact::TopicModel(t) => (format!("{id} ({})", t.dataset), &t.distribution),
                    Artifact::Classes(c) => (format!("{id} ({})", c.dataset), &c.distribution),
                    _ => unreachable!("validated distribution inputs"),
                })
                .collect();
            let alternates: Vec<(&str, &GroupDistribution)> =
                named[1..].iter().map(|(n, d)| (n.as_str(), *d)).collect();
            let report = triangulate((named[0].0.as_str(), named[0].1), &alternates, p.threshold)
                .map_err(|e| e.to_string())?;
            Ok(StageOutput {
                files: vec![
                    ("triangulation.json".into(), json(&report)),
                    ("triangulation.txt".into(), text(report.render())),
                ],
                artifact: Artifact::Report,
            })
        }
    }
}

fn sentiment_stage(stage: &StageSpec, corpus: &CorpusData, seed: u64) -> Result<StageOutput, String> {
    let p: SentimentParams = params(stage)?;
    let tokens = &corpus.tokens;
    let labelled: Vec<usize> = (0..tokens.len()).filter(|&i| tokens.labels[i].is_some()).collect();
    let labels: Vec<SentimentLabel> = labelled.iter().map(|&i| tokens.labels[i].expect("labelled")).collect();
    let (train, test) = sentiment::stratified_split(&labels, p.train_fraction, seed);
    let examples: Vec<(Vec<String>, SentimentLabel)> = train
        .iter()
        .map(|&i| (tokens.tokens[labelled[i]].clone(), labels[i]))
        .collect();
    let settings = TrainSettings {
        l2: p.l2,
        seed,
        ..TrainSettings::default()
    };
    let model = SentimentModel::train(&examples, &settings).map_err(|e| e.to_string())?;
    let cm = ConfusionMatrix::from_pairs(test.iter().map(|&i| {
        let doc = &tokens.tokens[labelled[i]];
        (labels[i].is_positive(), model.predict(doc) >= 0.5)
    }));
    let metrics = cm.metrics().map_err(|e| e.to_string())?;
    let mut explanations = Vec::new();
    for &i in &test {
        let d = labelled[i];
        if model.predict(&tokens.tokens[d]) >= 0.5 {
            continue;
        }
        match sentiment::explain_document(&model, &tokens.doc_ids[d], &tokens.tokens[d], p.shap_samples, seed) {
            Ok(e) => explanations.push(e),
            Err(sentiment::SentimentError::NoFeatures) => {}
            Err(e) => return Err(e.to_string()),
        }
    }
    let mut cloud = sentiment::aggregate_negative_terms(&explanations);
    cloud.truncate(p.top_terms);
    let report = serde_json::json!({ "confusion": cm, "metrics": metrics });
    Ok(StageOutput {
        files: vec![
            ("model.json".into(), json(&model)),
            ("confusion.csv".into(), text(cm.to_csv().map_err(|e| e.to_string())?)),
            ("metrics.json".into(), json(&report)),
            ("explanations.json".into(), json(&explanations)),
            ("wordcloud.csv".into(), text(sentiment::word_cloud_csv(&cloud))),
        ],
        artifact: Artifact::Report,
    })
}
