use anyhow::{bail, Context, Result};
use biaspipe::btm::{self, BitermConfig};
use biaspipe::corex::{self, CorexConfig};
use biaspipe::corpus::{Corpus, PreprocessRules, SentimentLabel, TokenizedCorpus};
use biaspipe::distribution::AssignmentMode;
use biaspipe::fixtures;
use biaspipe::lca::{self, RawSurvey};
use biaspipe::pipeline::{self, PipelineConfig, RunOptions};
use biaspipe::sentiment::{self, ConfusionMatrix, SentimentModel, TrainSettings};
use biaspipe::tune::{self, CoherenceIndex, ParamConfig, SearchSpace};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "biaspipe", version, about = "Bias-aware mixed-methods analysis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSONL corpus and write its vocabulary.
    Ingest {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    #[command(subcommand)]
    Topics(TopicsCommand),
    /// Coherence-driven TPE search over model settings.
    Tune {
        #[arg(long, value_enum)]
        model: ModelKind,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Search space CSV (name,kind,lo,hi,step).
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        coherence_k: usize,
        /// Gibbs sweeps per biterm trial.
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        /// Anchor as `word:topic`, repeatable (CorEx only).
        #[arg(long = "anchor", value_parser = parse_anchor)]
        anchors: Vec<(String, usize)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Sentiment(SentimentCommand),
    /// Latent class analysis with BIC selection of K.
    Lca {
        #[command(flatten)]
        survey: SurveyArgs,
        #[arg(long, default_value_t = 1)]
        k_min: usize,
        #[arg(long, default_value_t = 8)]
        k_max: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// Use posterior-weighted group shares instead of hard assignment.
        #[arg(long)]
        soft: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Frequency tables for survey questions.
    Eda {
        #[command(flatten)]
        survey: SurveyArgs,
        /// Question id; repeatable. Defaults to every question.
        #[arg(long)]
        question: Vec<String>,
        /// Restrict to one group.
        #[arg(long, conflicts_with = "stratify")]
        group: Option<String>,
        /// Add one table per group.
        #[arg(long)]
        stratify: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a pipeline config and write a report bundle.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Triangulate a run's latent class result against an alternate survey.
    Verify {
        config: PathBuf,
        #[arg(long)]
        alternate: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Check and print a report bundle.
    Report {
        /// Run directory, or a run id under `--runs-dir`.
        run: String,
        #[arg(long, default_value = "runs")]
        runs_dir: PathBuf,
    },
    /// Write the synthetic demo datasets.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        documents: usize,
        #[arg(long, default_value_t = 60)]
        per_group: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum TopicsCommand {
    /// Biterm topic model.
    Btm {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = 2)]
        topics: usize,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        /// Tuned settings (best.json from `tune`); explicit flags win.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: TopicArgs,
    },
    /// Anchored correlation explanation.
    Corex {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = 4)]
        topics: usize,
        #[arg(long = "anchor", value_parser = parse_anchor)]
        anchors: Vec<(String, usize)>,
        #[arg(long)]
        anchor_strength: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: TopicArgs,
    },
}

#[derive(Args)]
struct TopicArgs {
    #[arg(long, default_value_t = 20)]
    top_k: usize,
    #[arg(long, default_value_t = 10)]
    coherence_k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum SentimentCommand {
    /// Fit the classifier on the training split.
    Train {
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        l2: Option<f64>,
        #[arg(long)]
        model: PathBuf,
    },
    /// Confusion matrix and metrics on the held-out split.
    Eval {
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kernel SHAP attributions for negatively predicted documents.
    Explain {
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 2048)]
        samples: usize,
        /// Explain every document instead of the held-out split.
        #[arg(long)]
        all: bool,
        #[arg(long, default_value_t = 50)]
        top_terms: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CorpusArgs {
    /// JSONL corpus.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 1)]
    min_df: usize,
    /// Replace the bundled stopword list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    no_stopwords: bool,
    #[arg(long)]
    stem: bool,
}

#[derive(Args)]
struct SurveyArgs {
    #[arg(long)]
    survey: PathBuf,
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Btm,
    Corex,
}

fn parse_anchor(s: &str) -> Result<(String, usize), String> {
    let (word, topic) = s
        .rsplit_once(':')
        .ok_or_else(|| format!("expected word:topic, got {s:?}"))?;
    let topic = topic.parse().map_err(|_| format!("bad topic index in {s:?}"))?;
    Ok((word.to_string(), topic))
}

impl CorpusArgs {
    fn load(&self) -> Result<(Corpus, TokenizedCorpus)> {
        let corpus = Corpus::ingest(&self.corpus)
            .with_context(|| format!("reading {}", self.corpus.display()))?;
        let mut rules = if self.no_stopwords {
            PreprocessRules::without_stopwords()
        } else {
            PreprocessRules::default()
        };
        if let Some(path) = &self.stopwords {
            rules = rules.with_stopwords_file(path)?;
        }
        rules.stem = self.stem;
        let tokens = TokenizedCorpus::build(&corpus, &rules, self.min_df)?;
        Ok((corpus, tokens))
    }
}

impl SurveyArgs {
    fn load(&self) -> Result<RawSurvey> {
        RawSurvey::load(&self.survey, &self.schema)
            .with_context(|| format!("reading {}", self.survey.display()))
    }
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn load_params(path: &Path) -> Result<ParamConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn topic_files(
    out: &Path,
    tokens: &TokenizedCorpus,
    topics: Vec<Vec<(String, f64)>>,
    assignments: &[btm::DocAssignment],
    common: &TopicArgs,
) -> Result<()> {
    let words: Vec<Vec<String>> = topics
        .into_iter()
        .map(|t| t.into_iter().map(|(w, _)| w).collect())
        .collect();
    let coherence = CoherenceIndex::new(&tokens.tokens).umass(&words, common.coherence_k)?;
    let result = pipeline::TopicModelResult {
        name: "topics".into(),
        vocabulary_fingerprint: tokens.vocabulary.fingerprint(),
        topics: words,
        coherence: Some(coherence),
    };
    let dist = btm::group_topic_distribution(assignments, &tokens.group_map(), result.topics.len())?;
    write(out, "topics_table.csv", result.table_csv(common.top_k))?;
    write(out, "assignments.csv", btm::assignments_csv(assignments))?;
    write(out, "group_distribution.csv", dist.to_csv())?;
    write(out, "topics.json", pretty(&result))?;
    println!("umass coherence (top {}): {coherence:.4}", common.coherence_k);
    for (t, words) in result.topics.iter().enumerate() {
        let head: Vec<&str> = words.iter().take(10).map(String::as_str).collect();
        println!("topic {t}: {}", head.join(" "));
    }
    Ok(())
}

/// Labelled documents and the seeded split over them.
struct Split {
    docs: Vec<usize>,
    labels: Vec<SentimentLabel>,
    train: Vec<usize>,
    test: Vec<usize>,
}

fn split(tokens: &TokenizedCorpus, args: &SplitArgs) -> Result<Split> {
    let docs: Vec<usize> = (0..tokens.len()).filter(|&i| tokens.labels[i].is_some()).collect();
    if docs.is_empty() {
        bail!("corpus has no labelled documents");
    }
    let labels: Vec<SentimentLabel> = docs.iter().map(|&i| tokens.labels[i].unwrap()).collect();
    let (train, test) = sentiment::stratified_split(&labels, args.train_fraction, args.seed);
    Ok(Split {
        docs,
        labels,
        train,
        test,
    })
}

fn load_model(path: &Path) -> Result<SentimentModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(SentimentModel::from_json(&text)?)
}

fn sentiment_command(cmd: SentimentCommand) -> Result<()> {
    match cmd {
        SentimentCommand::Train { split: args, l2, model } => {
            let (_, tokens) = args.corpus.load()?;
            let s = split(&tokens, &args)?;
            let examples: Vec<_> = s
                .train
                .iter()
                .map(|&i| (tokens.tokens[s.docs[i]].clone(), s.labels[i]))
                .collect();
            let mut settings = TrainSettings {
                seed: args.seed,
                ..TrainSettings::default()
            };
            if let Some(l2) = l2 {
                settings.l2 = l2;
            }
            let fitted = SentimentModel::train(&examples, &settings)?;
            fs::write(&model, fitted.to_json() + "\n")?;
            println!(
                "trained on {} documents in {} epochs (max gradient {:.2e})",
                examples.len(),
                fitted.epochs_run,
                fitted.final_gradient
            );
        }
        SentimentCommand::Eval { split: args, model, out } => {
            let (_, tokens) = args.corpus.load()?;
            let s = split(&tokens, &args)?;
            let fitted = load_model(&model)?;
            let cm = ConfusionMatrix::from_pairs(s.test.iter().map(|&i| {
                let doc = &tokens.tokens[s.docs[i]];
                (s.labels[i].is_positive(), fitted.predict(doc) >= 0.5)
            }));
            let metrics = cm.metrics()?;
            let table = cm.to_csv()?;
            print!("{table}");
            if let Some(out) = out {
                write(&out, "confusion.csv", table)?;
                write(&out, "metrics.json", pretty(&metrics))?;
            }
        }
        SentimentCommand::Explain {
            split: args,
            model,
            samples,
            all,
            top_terms,
            out,
        } => {
            let (_, tokens) = args.corpus.load()?;
            let fitted = load_model(&model)?;
            let docs: Vec<usize> = if all {
                (0..tokens.len()).collect()
            } else {
                let s = split(&tokens, &args)?;
                s.test.iter().map(|&i| s.docs[i]).collect()
            };
            let mut explanations = Vec::new();
            for d in docs {
                if fitted.predict(&tokens.tokens[d]) >= 0.5 {
                    continue;
                }
                match sentiment::explain_document(&fitted, &tokens.doc_ids[d], &tokens.tokens[d], samples, args.seed) {
                    Ok(e) => explanations.push(e),
                    Err(sentiment::SentimentError::NoFeatures) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            let terms = sentiment::aggregate_negative_terms(&explanations);
            let top = &terms[..terms.len().min(top_terms)];
            write(&out, "explanations.json", pretty(&explanations))?;
            write(&out, "wordcloud.csv", sentiment::word_cloud_csv(top))?;
            println!("explained {} documents", explanations.len());
            for (term, weight) in top.iter().take(10) {
                println!("{term}\t{weight:.4}");
            }
        }
    }
    Ok(())
}

fn topics_command(cmd: TopicsCommand) -> Result<()> {
    match cmd {
        TopicsCommand::Btm {
            corpus,
            topics,
            alpha,
            beta,
            window,
            iterations,
            config,
            common,
        } => {
            let (_, tokens) = corpus.load()?;
            let mut cfg = BitermConfig {
                topics,
                iterations,
                seed: common.seed,
                ..BitermConfig::default()
            };
            if let Some(path) = &config {
                cfg = pipeline::btm_config(&load_params(path)?, &cfg);
            }
            cfg.alpha = alpha.unwrap_or(cfg.alpha);
            cfg.beta = beta.unwrap_or(cfg.beta);
            cfg.window = window.unwrap_or(cfg.window);
            let model = btm::fit(&tokens, &cfg)?;
            write(&common.out, "topic_words.csv", model.topic_words_csv(common.top_k))?;
            write(&common.out, "config.json", pretty(&cfg))?;
            let assignments = model.assign(&tokens);
            topic_files(&common.out, &tokens, model.topic_words(common.top_k), &assignments, &common)
        }
        TopicsCommand::Corex {
            corpus,
            topics,
            anchors,
            anchor_strength,
            config,
            common,
        } => {
            let (_, tokens) = corpus.load()?;
            let mut cfg = CorexConfig {
                topics,
                anchors,
                seed: common.seed,
                ..CorexConfig::default()
            };
            if let Some(path) = &config {
                cfg = pipeline::corex_config(&load_params(path)?, &cfg);
            }
            cfg.anchor_strength = anchor_strength.unwrap_or(cfg.anchor_strength);
            let model = corex::fit(&tokens, &cfg)?;
            write(&common.out, "topic_words.csv", model.topic_words_csv(common.top_k))?;
            write(&common.out, "tc.csv", model.tc_csv())?;
            write(&common.out, "config.json", pretty(&cfg))?;
            let assignments = model.assign(&tokens);
            topic_files(&common.out, &tokens, model.topic_words(common.top_k), &assignments, &common)
        }
    }
}

fn write_fixtures(out: &Path, documents: usize, per_group: usize, seed: u64) -> Result<()> {
    write(out, "interviews.jsonl", fixtures::demo_corpus(documents, seed).to_jsonl())?;
    write(out, "survey_schema.json", fixtures::demo_survey_schema().to_json() + "\n")?;
    write(out, "survey.csv", fixtures::demo_survey(per_group, seed).to_csv())?;
    write(out, "survey_alt.csv", fixtures::demo_survey(per_group, seed + 1).to_csv())?;
    println!("wrote demo datasets to {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest { corpus, out } => {
            let (raw, tokens) = corpus.load()?;
            println!(
                "{} documents, {} terms, fingerprint {}",
                raw.len(),
                tokens.vocabulary.len(),
                tokens.vocabulary.fingerprint()
            );
            if let Some(out) = out {
                write(&out, "vocabulary.csv", tokens.vocabulary.to_csv())?;
                write(&out, "corpus.jsonl", raw.to_jsonl())?;
            }
        }
        Command::Topics(cmd) => topics_command(cmd)?,
        Command::Tune {
            model,
            corpus,
            trials,
            space,
            coherence_k,
            iterations,
            anchors,
            seed,
            out,
        } => {
            let (_, tokens) = corpus.load()?;
            let space = match (&space, model) {
                (Some(path), _) => SearchSpace::load(path)?,
                (None, ModelKind::Btm) => SearchSpace::btm_default(),
                (None, ModelKind::Corex) => SearchSpace::corex_default(),
            };
            let outcome = match model {
                ModelKind::Btm => {
                    let base = BitermConfig {
                        iterations,
                        ..BitermConfig::default()
                    };
                    pipeline::tune_btm(&tokens, &space, trials, coherence_k, &base, seed)
                }
                ModelKind::Corex => {
                    let base = CorexConfig {
                        anchors,
                        ..CorexConfig::default()
                    };
                    pipeline::tune_corex(&tokens, &space, trials, coherence_k, &base, seed)
                }
            }
            .map_err(anyhow::Error::msg)?;
            write(&out, "trials.csv", tune::trials_csv(&space, &outcome.history))?;
            write(&out, "best.json", pretty(&outcome.best.config))?;
            println!(
                "best trial {} coherence {:.4}: {:?}",
                outcome.best.index,
                outcome.best.objective.unwrap_or(f64::NAN),
                outcome.best.config
            );
        }
        Command::Sentiment(cmd) => sentiment_command(cmd)?,
        Command::Lca {
            survey,
            k_min,
            k_max,
            restarts,
            soft,
            seed,
            out,
        } => {
            if k_min == 0 || k_max < k_min {
                bail!("need 1 <= k-min <= k-max");
            }
            let raw = survey.load()?;
            let data = lca::encode_indicators(&raw)?;
            let range: Vec<usize> = (k_min..=k_max).collect();
            let selection = lca::lca_select_k(&data, &range, restarts, seed)?;
            let model = selection
                .models
                .iter()
                .find(|m| m.classes() == selection.best_k)
                .expect("selected model");
            let mode = if soft { AssignmentMode::Soft } else { AssignmentMode::Hard };
            let dist = lca::group_class_distribution(model, &data, mode)?;
            let mut bic = String::from("k,log_likelihood,bic\n");
            for (m, (k, b)) in selection.models.iter().zip(&selection.bic) {
                bic.push_str(&format!("{k},{:.6},{b:.6}\n", m.log_likelihood));
                println!("k={k} bic={b:.2}");
            }
            println!("selected k={}", selection.best_k);
            write(&out, "measurement_model.csv", model.measurement_csv())?;
            write(&out, "group_distribution.csv", dist.to_csv())?;
            write(&out, "model_selection.csv", bic)?;
            write(&out, "model.json", model.to_json())?;
        }
        Command::Eda {
            survey,
            question,
            group,
            stratify,
            out,
        } => {
            let raw = survey.load()?;
            let questions = if question.is_empty() {
                raw.schema.questions.iter().map(|q| q.id.clone()).collect()
            } else {
                question
            };
            for q in &questions {
                let mut tables = vec![lca::eda_frequencies(&raw, q, group.as_deref())?];
                if stratify {
                    tables.extend(lca::eda_stratified(&raw, q)?);
                }
                let csv = lca::frequency_csv(&tables);
                match &out {
                    Some(dir) => write(dir, &format!("frequencies_{q}.csv"), csv)?,
                    None => print!("# {q}\n{csv}"),
                }
            }
        }
        Command::Run { config, output_dir } => {
            let config = PipelineConfig::load(&config)?;
            let bundle = pipeline::run(&config, &RunOptions { output_dir })?;
            println!("run {} -> {}", bundle.run_id(), bundle.dir.display());
            let failures = bundle.failures();
            for record in &failures {
                eprintln!("stage {}: {:?}", record.id, record.status);
            }
            if !failures.is_empty() {
                std::process::exit(2);
            }
        }
        Command::Verify {
            config,
            alternate,
            threshold,
            output_dir,
        } => {
            let config = PipelineConfig::load(&config)?;
            let (dir, report) = pipeline::verify(&config, &alternate, threshold, &RunOptions { output_dir })?;
            print!("{}", report.render());
            println!("written to {}", dir.display());
        }
        Command::Report { run, runs_dir } => {
            let direct = PathBuf::from(&run);
            let dir = if direct.is_dir() { direct } else { runs_dir.join(&run) };
            let bundle = pipeline::open_bundle(&dir)?;
            let text = fs::read_to_string(dir.join("bias_report.txt"))?;
            println!("run {} ({} stages, manifest ok)", bundle.run_id(), bundle.metadata.stages.len());
            print!("{text}");
        }
        Command::Fixtures {
            out,
            documents,
            per_group,
            seed,
        } => write_fixtures(&out, documents, per_group, seed)?,
    }
    Ok(())
}
