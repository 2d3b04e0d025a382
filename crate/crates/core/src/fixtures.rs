//! Seeded synthetic data with known generative structure, used by the
//! bundled demo configs and by recovery tests.

use crate::corpus::{Corpus, Document, SentimentLabel, ServiceFlag};
use crate::lca::{Question, QuestionKind, RawRespondent, RawSurvey, SurveyDataset, SurveySchema};
use crate::rng::seeded;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;

pub const GROUPS: [&str; 6] = [
    "African",
    "Bangladeshi",
    "Caribbean",
    "Chinese",
    "Indian",
    "Pakistani",
];

/// Corpus whose documents each draw every token from one topic's private
/// vocabulary.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    /// Generating topic of each document.
    pub truth: Vec<usize>,
    pub topic_words: Vec<Vec<String>>,
}

impl PlantedCorpus {
    pub fn topic_of_word(&self, word: &str) -> Option<usize> {
        self.topic_words
            .iter()
            .position(|words| words.iter().any(|w| w == word))
    }
}

/// Synthetic vocabulary word `index` of topic `topic`, e.g. `tb07`.
pub fn planted_word(topic: usize, index: usize) -> String {
    let letter = (b'a' + (topic % 26) as u8) as char;
    format!("t{letter}{index:02}")
}

pub fn planted_topics(
    n_docs: usize,
    topics: usize,
    words_per_topic: usize,
    doc_len: usize,
    seed: u64,
) -> PlantedCorpus {
    let topic_words: Vec<Vec<String>> = (0..topics)
        .map(|z| (0..words_per_topic).map(|i| planted_word(z, i)).collect())
        .collect();
    themed_corpus(&topic_words, n_docs, doc_len, 0.0, seed)
}

/// Like [`planted_topics`] but with caller-supplied word lists per topic.
/// Each token comes from a uniformly chosen topic with probability `noise`.
pub fn themed_corpus(
    topic_words: &[Vec<String>],
    n_docs: usize,
    doc_len: usize,
    noise: f64,
    seed: u64,
) -> PlantedCorpus {
    let mut rng = seeded(seed);
    let mut documents = Vec::with_capacity(n_docs);
    let mut truth = Vec::with_capacity(n_docs);
    for n in 0..n_docs {
        let z = n % topic_words.len();
        let words: Vec<&str> = (0..doc_len)
            .map(|_| {
                let source = if noise > 0.0 && rng.gen::<f64>() < noise {
                    rng.gen_range(0..topic_words.len())
                } else {
                    z
                };
                topic_words[source].choose(&mut rng).expect("nonempty topic").as_str()
            })
            .collect();
        let group = GROUPS[rng.gen_range(0..GROUPS.len())];
        documents.push(Document::new(format!("p{n:04}"), words.join(" "), group));
        truth.push(z);
    }
    PlantedCorpus {
        corpus: Corpus::new(documents).expect("ids are unique"),
        truth,
        topic_words: topic_words.to_vec(),
    }
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

pub fn housing_words() -> Vec<String> {
    words(&[
        "housing", "social", "association", "council", "bidding", "accommodation", "landlord",
        "rent", "tenancy", "repairs", "flat", "waiting",
    ])
}

pub fn energy_words() -> Vec<String> {
    words(&[
        "energy", "meter", "supplier", "gas", "smart", "electricity", "tariff", "bills",
        "heating", "readings", "prepayment", "topup",
    ])
}

pub fn health_words() -> Vec<String> {
    words(&[
        "health", "appointment", "doctor", "nhs", "prescription", "gp", "pharmacy", "clinic",
        "nurse", "hospital", "referral", "medication",
    ])
}

pub fn online_words() -> Vec<String> {
    words(&[
        "online", "website", "app", "portal", "password", "email", "login", "internet",
        "account", "form", "upload", "digital",
    ])
}

const POSITIVE_WORDS: [&str; 8] = [
    "helpful", "easy", "quick", "friendly", "convenient", "supported", "clear", "reliable",
];
const NEGATIVE_WORDS: [&str; 8] = [
    "challenging", "confusing", "slow", "afraid", "difficult", "unfair", "stressful", "ignored",
];

/// Demo interview corpus: four service themes, six groups with distinct
/// theme preferences, and sentiment-bearing vocabulary tied to the label.
pub fn demo_corpus(n_docs: usize, seed: u64) -> Corpus {
    let themes = [housing_words(), energy_words(), health_words(), online_words()];
    let flags = [
        Some(ServiceFlag::Housing),
        Some(ServiceFlag::Energy),
        Some(ServiceFlag::Health),
        None,
    ];
    let cities = ["Glasgow", "London", "Manchester", "Edinburgh"];
    let mut rng = seeded(seed);
    let mut documents = Vec::with_capacity(n_docs);
    for n in 0..n_docs {
        let g = n % GROUPS.len();
        // each group leans towards one theme
        let theme = if rng.gen::<f64>() < 0.55 {
            g % themes.len()
        } else {
            rng.gen_range(0..themes.len())
        };
        let negative_rate = 0.25 + 0.1 * (g as f64);
        let label = if rng.gen::<f64>() < negative_rate {
            SentimentLabel::Negative
        } else {
            SentimentLabel::Positive
        };
        let mut tokens: Vec<&str> = (0..7)
            .map(|_| themes[theme].choose(&mut rng).expect("theme words").as_str())
            .collect();
        let mood: &[&str] = match label {
            SentimentLabel::Positive => &POSITIVE_WORDS,
            SentimentLabel::Negative => &NEGATIVE_WORDS,
        };
        tokens.push(mood.choose(&mut rng).expect("mood words"));
        if rng.gen::<f64>() < 0.35 {
            let other = if label.is_positive() { &NEGATIVE_WORDS } else { &POSITIVE_WORDS };
            tokens.push(other.choose(&mut rng).expect("mood words"));
        }
        tokens.shuffle(&mut rng);
        let mut doc = Document::new(format!("t{n:03}"), tokens.join(" "), GROUPS[g]);
        doc.sentiment_label = Some(label);
        doc.city = Some(cities[rng.gen_range(0..cities.len())].to_string());
        doc.codes = Some(vec![["housing", "energy", "health", "online"][theme].to_string()]);
        doc.service_flags = flags[theme].map(|f| vec![f]);
        documents.push(doc);
    }
    Corpus::new(documents).expect("ids are unique")
}

/// Response probabilities where class `c` answers indicator `j` positively
/// with probability `0.5 + separation/2` when `j % classes == c`, else
/// `0.5 - separation/2`.
pub fn separated_rho(classes: usize, items: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|c| {
            (0..items)
                .map(|j| 0.5 + if j % classes == c { 0.5 } else { -0.5 } * separation)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PlantedSurvey {
    pub data: SurveyDataset,
    pub truth: Vec<usize>,
    pub rho: Vec<Vec<f64>>,
}

/// Binary survey drawn from a latent class plant. Each `(group, mixture)`
/// contributes `per_group` respondents whose classes follow `mixture`.
pub fn planted_survey(
    rho: &[Vec<f64>],
    groups: &[(&str, Vec<f64>)],
    per_group: usize,
    seed: u64,
) -> PlantedSurvey {
    let mut rng = seeded(seed);
    let items = rho[0].len();
    let (mut ids, mut labels, mut values, mut truth) = (vec![], vec![], vec![], vec![]);
    for (group, mixture) in groups {
        let classes = WeightedIndex::new(mixture).expect("valid mixture");
        for _ in 0..per_group {
            let c = classes.sample(&mut rng);
            values.push(rho[c].iter().map(|&p| Some(rng.gen::<f64>() < p)).collect());
            ids.push(format!("s{:04}", ids.len()));
            labels.push(group.to_string());
            truth.push(c);
        }
    }
    PlantedSurvey {
        data: SurveyDataset {
            ids,
            groups: labels,
            indicators: (0..items).map(|j| format!("item{j:02}_0")).collect(),
            values,
        },
        truth,
        rho: rho.to_vec(),
    }
}

/// Uniform-mixture planted survey with separated classes.
pub fn planted_classes(
    respondents: usize,
    classes: usize,
    items: usize,
    separation: f64,
    seed: u64,
) -> PlantedSurvey {
    let rho = separated_rho(classes, items, separation);
    planted_survey(&rho, &[("all", vec![1.0; classes])], respondents, seed)
}

fn question(id: &str, kind: QuestionKind, options: &[&str]) -> Question {
    Question {
        id: id.to_string(),
        kind,
        options: options.iter().map(|o| o.to_string()).collect(),
    }
}

pub fn demo_survey_schema() -> SurveySchema {
    SurveySchema {
        questions: vec![
            question(
                "tenure",
                QuestionKind::Single,
                &["Own home", "Private rented housing", "Social housing", "Living with parents", "Shared housing"],
            ),
            question(
                "barriers",
                QuestionKind::Multi,
                &["It takes too long", "I must disclose personal information", "I don't know"],
            ),
            question(
                "seeking",
                QuestionKind::Single,
                &["Not interested", "Looking now", "Expect to look in the future"],
            ),
            question(
                "digital",
                QuestionKind::Multi,
                &["Bid for social housing", "Report repairs", "Pay rent", "Never used"],
            ),
        ],
    }
}

/// Demo survey with three latent profiles whose mixture differs by group.
/// About 3% of answers are missing.
pub fn demo_survey(per_group: usize, seed: u64) -> RawSurvey {
    let schema = demo_survey_schema();
    // per profile: single-choice weights or multi-select inclusion odds
    let profiles: [[&[f64]; 4]; 3] = [
        [&[0.8, 0.1, 0.02, 0.05, 0.03], &[0.05, 0.05, 0.1], &[0.9, 0.05, 0.05], &[0.02, 0.05, 0.05, 0.85]],
        [&[0.05, 0.5, 0.3, 0.1, 0.05], &[0.6, 0.4, 0.1], &[0.1, 0.6, 0.3], &[0.6, 0.5, 0.5, 0.1]],
        [&[0.1, 0.3, 0.05, 0.35, 0.2], &[0.2, 0.2, 0.6], &[0.3, 0.1, 0.6], &[0.1, 0.1, 0.1, 0.7]],
    ];
    let mut rng = seeded(seed);
    let mut respondents = Vec::new();
    for (g, group) in GROUPS.iter().enumerate() {
        let mixture = match g % 3 {
            0 => [0.6, 0.2, 0.2],
            1 => [0.2, 0.6, 0.2],
            _ => [0.2, 0.2, 0.6],
        };
        let classes = WeightedIndex::new(mixture).expect("valid mixture");
        for _ in 0..per_group {
            let c = classes.sample(&mut rng);
            let answers = schema
                .questions
                .iter()
                .zip(profiles[c])
                .map(|(q, probs)| {
                    if rng.gen::<f64>() < 0.03 {
                        return None;
                    }
                    Some(match q.kind {
                        QuestionKind::Single => {
                            let pick = WeightedIndex::new(probs).expect("weights").sample(&mut rng);
                            vec![q.options[pick].clone()]
                        }
                        QuestionKind::Multi => q
                            .options
                            .iter()
                            .zip(probs.iter())
                            .filter_map(|(o, &p)| (rng.gen::<f64>() < p).then(|| o.clone()))
                            .collect(),
                    })
                })
                .collect();
            respondents.push(RawRespondent {
                id: format!("s{:04}", respondents.len()),
                group: group.to_string(),
                answers,
            });
        }
    }
    RawSurvey {
        schema,
        respondents,
    }
}
