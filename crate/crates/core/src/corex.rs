//! Anchored CorEx topic model over binary document-word indicators.
//!
//! Each topic is a binary latent factor `Y_j`. The fit maximizes the
//! total-correlation lower bound
//!
//! ```text
//! L = Σ_j [ Σ_i w_ji · I(X_i; Y_j) − I(X; Y_j) ]
//! ```
//!
//! where `w_ji = α_ji` for free words and `α_ji · s_a` for a word anchored
//! to topic `j`. Each iteration refreshes `α` towards the topic sharing the
//! most information with each word, then moves every topic's posterior
//! `q(y_j | x)` towards its fixed point. A per-topic step is only kept when
//! the topic's term of `L` does not decrease, halving the step otherwise,
//! so the objective trace never goes down.

use crate::btm::argmax;
use crate::corpus::{TokenizedCorpus, Vocabulary};
use crate::rng::seeded;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const PROB_FLOOR: f64 = 1e-10;
const ALPHA_DAMPING: f64 = 0.3;
const LINE_SEARCH_HALVINGS: usize = 8;
const PATIENCE: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum CorexError {
    #[error("anchor word {0:?} is not in the vocabulary")]
    AnchorNotInVocabulary(String),
    #[error("{topics} topics requested but the vocabulary has only {vocab} words")]
    TooManyTopics { topics: usize, vocab: usize },
    #[error("invalid CorEx configuration: {0}")]
    InvalidConfig(String),
    #[error("document-term matrix is empty")]
    EmptyMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorexConfig {
    pub topics: usize,
    /// `(word, topic index)` pairs; a word may anchor several topics.
    pub anchors: Vec<(String, usize)>,
    pub anchor_strength: f64,
    pub max_iterations: usize,
    /// Minimum objective gain counted as progress.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for CorexConfig {
    fn default() -> Self {
        CorexConfig {
            topics: 4,
            anchors: Vec::new(),
            anchor_strength: 2.0,
            max_iterations: 200,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorexModel {
    pub config: CorexConfig,
    pub vocabulary: Vocabulary,
    /// Soft word-to-topic weights, `alpha[j][i] ∈ [0, 1]`.
    pub alpha: Vec<Vec<f64>>,
    /// Per-topic contribution to the objective.
    pub tc: Vec<f64>,
    /// `mi[j][i] = I(X_i; Y_j)` in nats.
    pub mi: Vec<Vec<f64>>,
    /// `doc_topic[n][j] = q(y_j = 1 | x_n)` for the training documents.
    pub doc_topic: Vec<Vec<f64>>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    priors: Vec<f64>,
    present_log_ratio: Vec<Vec<f64>>,
    absent_log_ratio: Vec<Vec<f64>>,
    anchored: Vec<Vec<bool>>,
}

/// Binary document-word matrix as sorted unique word lists.
struct BinaryDocs {
    docs: Vec<Vec<usize>>,
    df: Vec<f64>,
    vocab: usize,
}

impl BinaryDocs {
    fn new(ids: &[Vec<usize>], vocab: usize) -> Self {
        let mut df = vec![0.0; vocab];
        let docs = ids
            .iter()
            .map(|d| {
                let mut u = d.clone();
                u.sort_unstable();
                u.dedup();
                for &w in &u {
                    df[w] += 1.0;
                }
                u
            })
            .collect();
        BinaryDocs { docs, df, vocab }
    }

    fn n(&self) -> f64 {
        self.docs.len() as f64
    }
}

fn xlogx_ratio(p: f64, a: f64, b: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * (p / (a * b)).ln()
    }
}

fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.ln() };
    h(p) + h(1.0 - p)
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Marginal statistics of one topic under a posterior vector `q`.
struct TopicStats {
    p_y1: f64,
    /// `Σ_{n: x_ni = 1} q_n / N`, the joint `p(x_i = 1, y = 1)`.
    p11: Vec<f64>,
    mean_cond_entropy: f64,
}

impl TopicStats {
    fn new(data: &BinaryDocs, q: &[f64]) -> Self {
        let n = data.n();
        let mut p11 = vec![0.0; data.vocab];
        let mut sum_q = 0.0;
        let mut cond = 0.0;
        for (doc, &qn) in data.docs.iter().zip(q) {
            sum_q += qn;
            cond += binary_entropy(qn);
            for &w in doc {
                p11[w] += qn;
            }
        }
        p11.iter_mut().for_each(|v| *v /= n);
        TopicStats {
            p_y1: sum_q / n,
            p11,
            mean_cond_entropy: cond / n,
        }
    }

    /// Joint table `(p11, p10, p01, p00)` for word `i`.
    fn joint(&self, data: &BinaryDocs, i: usize) -> [f64; 4] {
        let px1 = data.df[i] / data.n();
        let p11 = self.p11[i].clamp(0.0, px1.min(self.p_y1));
        let p10 = (px1 - p11).max(0.0);
        let p01 = (self.p_y1 - p11).max(0.0);
        let p00 = (1.0 - p11 - p10 - p01).max(0.0);
        [p11, p10, p01, p00]
    }

    fn mutual_information(&self, data: &BinaryDocs, i: usize) -> f64 {
        let [p11, p10, p01, p00] = self.joint(data, i);
        let px1 = p11 + p10;
        let px0 = 1.0 - px1;
        let py1 = self.p_y1;
        let py0 = 1.0 - py1;
        let mi = xlogx_ratio(p11, px1, py1)
            + xlogx_ratio(p10, px1, py0)
            + xlogx_ratio(p01, px0, py1)
            + xlogx_ratio(p00, px0, py0);
        mi.max(0.0)
    }

    /// `I(X; Y_j) = H(Y_j) − E_x H(Y_j | x)`.
    fn latent_information(&self) -> f64 {
        (binary_entropy(self.p_y1) - self.mean_cond_entropy).max(0.0)
    }

    /// Log-likelihood ratios `ln p(x_i = v | y = 1) / p(x_i = v | y = 0)` for
    /// `v = 1` and `v = 0`.
    fn log_ratios(&self, data: &BinaryDocs, i: usize) -> (f64, f64) {
        let [p11, p10, p01, p00] = self.joint(data, i);
        let py1 = clamp_prob(self.p_y1);
        let py0 = 1.0 - py1;
        let present = (clamp_prob(p11 / py1) / clamp_prob(p10 / py0)).ln();
        let absent = (clamp_prob(p01 / py1) / clamp_prob(p00 / py0)).ln();
        (present, absent)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Fitter<'a> {
    data: &'a BinaryDocs,
    /// `anchor_mult[j][i]`: `s_a` on anchored cells, 1 elsewhere.
    anchor_mult: Vec<Vec<f64>>,
    anchored: Vec<Vec<bool>>,
    word_is_anchor: Vec<bool>,
}

impl Fitter<'_> {
    fn weight(&self, alpha: &[Vec<f64>], j: usize, i: usize) -> f64 {
        alpha[j][i] * self.anchor_mult[j][i]
    }

    fn topic_objective(&self, alpha_row: &[f64], j: usize, stats: &TopicStats) -> (f64, Vec<f64>) {
        let mi: Vec<f64> = (0..self.data.vocab)
            .map(|i| stats.mutual_information(self.data, i))
            .collect();
        let gain: f64 = mi
            .iter()
            .enumerate()
            .map(|(i, m)| alpha_row[i] * self.anchor_mult[j][i] * m)
            .sum();
        (gain - stats.latent_information(), mi)
    }

    /// Fixed-point posterior for topic `j` given its current marginals.
    fn propose_q(&self, alpha_row: &[f64], j: usize, stats: &TopicStats) -> Vec<f64> {
        let py1 = clamp_prob(stats.p_y1);
        let mut base = (py1 / (1.0 - py1)).ln();
        let mut delta = vec![0.0; self.data.vocab];
        for i in 0..self.data.vocab {
            let w = alpha_row[i] * self.anchor_mult[j][i];
            if w == 0.0 {
                continue;
            }
            let (present, absent) = stats.log_ratios(self.data, i);
            base += w * absent;
            delta[i] = w * (present - absent);
        }
        self.data
            .docs
            .iter()
            .map(|doc| sigmoid(base + doc.iter().map(|&i| delta[i]).sum::<f64>()))
            .collect()
    }

    fn alpha_target(&self, alpha: &[Vec<f64>], mi: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let topics = alpha.len();
        let mut target = alpha.to_vec();
        for i in 0..self.data.vocab {
            if self.word_is_anchor[i] {
                for j in 0..topics {
                    target[j][i] = if self.anchored[j][i] { 1.0 } else { 0.0 };
                }
                continue;
            }
            let scores: Vec<f64> = (0..topics).map(|j| mi[j][i]).collect();
            let (best, _) = argmax(&scores);
            for j in 0..topics {
                let onehot = if j == best { 1.0 } else { 0.0 };
                target[j][i] = (1.0 - ALPHA_DAMPING) * alpha[j][i] + ALPHA_DAMPING * onehot;
            }
        }
        target
    }
}

pub fn fit(corpus: &TokenizedCorpus, config: &CorexConfig) -> Result<CorexModel, CorexError> {
    let vocab = corpus.vocabulary.len();
    let t = config.topics;
    if t == 0 {
        return Err(CorexError::InvalidConfig("topic count must be at least 1".into()));
    }
    if !(config.anchor_strength.is_finite() && config.anchor_strength > 0.0) {
        return Err(CorexError::InvalidConfig("anchor strength must be positive".into()));
    }
    if t > vocab {
        return Err(CorexError::TooManyTopics { topics: t, vocab });
    }
    let data = BinaryDocs::new(&corpus.ids, vocab);
    if data.docs.is_empty() || data.docs.iter().all(Vec::is_empty) {
        return Err(CorexError::EmptyMatrix);
    }

    let mut anchored = vec![vec![false; vocab]; t];
    let mut anchor_mult = vec![vec![1.0; vocab]; t];
    let mut word_is_anchor = vec![false; vocab];
    for (word, topic) in &config.anchors {
        let i = corpus
            .vocabulary
            .id(word)
            .ok_or_else(|| CorexError::AnchorNotInVocabulary(word.clone()))?;
        if *topic >= t {
            return Err(CorexError::InvalidConfig(format!(
                "anchor {word:?} targets topic {topic} but only {t} topics exist"
            )));
        }
        anchored[*topic][i] = true;
        anchor_mult[*topic][i] = config.anchor_strength;
        word_is_anchor[i] = true;
    }
    let fitter = Fitter {
        data: &data,
        anchor_mult,
        anchored,
        word_is_anchor,
    };

    let mut rng = seeded(config.seed);
    let n_docs = data.docs.len();
    let mut alpha: Vec<Vec<f64>> = (0..t)
        .map(|_| (0..vocab).map(|_| 0.5 + 0.5 * rng.gen::<f64>()).collect())
        .collect();
    for j in 0..t {
        for i in 0..vocab {
            if fitter.word_is_anchor[i] {
                alpha[j][i] = if fitter.anchored[j][i] { 1.0 } else { 0.0 };
            }
        }
    }
    // anchored topics start from anchor presence, the rest at random
    let mut q: Vec<Vec<f64>> = (0..t)
        .map(|j| {
            let anchors: Vec<usize> = (0..vocab).filter(|&i| fitter.anchored[j][i]).collect();
            data.docs
                .iter()
                .map(|doc| {
                    let u = rng.gen::<f64>();
                    if anchors.is_empty() {
                        u
                    } else if anchors.iter().any(|a| doc.binary_search(a).is_ok()) {
                        0.6 + 0.3 * u
                    } else {
                        0.1 + 0.3 * u
                    }
                })
                .collect()
        })
        .collect();

    let mut stats: Vec<TopicStats> = q.iter().map(|qj| TopicStats::new(&data, qj)).collect();
    let mut tc = Vec::with_capacity(t);
    let mut mi = Vec::with_capacity(t);
    for j in 0..t {
        let (obj, m) = fitter.topic_objective(&alpha[j], j, &stats[j]);
        tc.push(obj);
        mi.push(m);
    }
    let mut trace = vec![tc.iter().sum::<f64>()];
    let mut stalled = 0;
    let mut converged = false;

    for _ in 0..config.max_iterations {
        let alpha_target = fitter.alpha_target(&alpha, &mi);
        for j in 0..t {
            let q_target = fitter.propose_q(&alpha_target[j], j, &stats[j]);
            let mut step = 1.0;
            for _ in 0..=LINE_SEARCH_HALVINGS {
                let alpha_try: Vec<f64> = alpha[j]
                    .iter()
                    .zip(&alpha_target[j])
                    .map(|(a, b)| a + step * (b - a))
                    .collect();
                let q_try: Vec<f64> = q[j]
                    .iter()
                    .zip(&q_target)
                    .map(|(a, b)| a + step * (b - a))
                    .collect();
                let stats_try = TopicStats::new(&data, &q_try);
                let (obj, m) = fitter.topic_objective(&alpha_try, j, &stats_try);
                if obj >= tc[j] {
                    alpha[j] = alpha_try;
                    q[j] = q_try;
                    stats[j] = stats_try;
                    tc[j] = obj;
                    mi[j] = m;
                    break;
                }
                step *= 0.5;
            }
        }
        let objective: f64 = tc.iter().sum();
        let gain = objective - trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        trace.push(objective);
        if gain < config.tolerance {
            stalled += 1;
            if stalled >= PATIENCE {
                converged = true;
                break;
            }
        } else {
            stalled = 0;
        }
    }

    // orient each latent so that y = 1 means "topic words present"
    for j in 0..t {
        let vote: f64 = (0..vocab)
            .map(|i| {
                let [p11, p10, p01, p00] = stats[j].joint(&data, i);
                let sign = (p11 * p00 - p10 * p01).signum();
                fitter.weight(&alpha, j, i) * mi[j][i] * sign
            })
            .sum();
        if vote < 0.0 {
            q[j].iter_mut().for_each(|v| *v = 1.0 - *v);
            stats[j] = TopicStats::new(&data, &q[j]);
        }
    }

    let mut present_log_ratio = vec![vec![0.0; vocab]; t];
    let mut absent_log_ratio = vec![vec![0.0; vocab]; t];
    for j in 0..t {
        for i in 0..vocab {
            let (p, a) = stats[j].log_ratios(&data, i);
            present_log_ratio[j][i] = p;
            absent_log_ratio[j][i] = a;
        }
    }
    let doc_topic = (0..n_docs)
        .map(|n| (0..t).map(|j| q[j][n]).collect())
        .collect();

    Ok(CorexModel {
        config: config.clone(),
        vocabulary: corpus.vocabulary.clone(),
        alpha,
        tc,
        mi,
        doc_topic,
        objective_trace: trace,
        converged,
        priors: stats.iter().map(|s| s.p_y1).collect(),
        present_log_ratio,
        absent_log_ratio,
        anchored: fitter.anchored,
    })
}

impl CorexModel {
    pub fn topics(&self) -> usize {
        self.tc.len()
    }

    fn effective_weight(&self, j: usize, i: usize) -> f64 {
        let mult = if self.anchored[j][i] {
            self.config.anchor_strength
        } else {
            1.0
        };
        self.alpha[j][i] * mult
    }

    /// Word relevance to a topic: weighted mutual information, negated for
    /// words whose presence argues against the topic.
    pub fn word_score(&self, j: usize, i: usize) -> f64 {
        let sign = if self.present_log_ratio[j][i] >= 0.0 {
            1.0
        } else {
            -1.0
        };
        self.effective_weight(j, i) * self.mi[j][i] * sign
    }

    pub fn mutual_information(&self, word: &str, topic: usize) -> Option<f64> {
        let i = self.vocabulary.id(word)?;
        self.mi.get(topic).map(|row| row[i])
    }

    pub fn topic_words(&self, k: usize) -> Vec<Vec<(String, f64)>> {
        let terms = self.vocabulary.terms();
        (0..self.topics())
            .map(|j| {
                let scores: Vec<f64> = (0..terms.len()).map(|i| self.word_score(j, i)).collect();
                crate::btm::rank_terms(&scores, terms, k)
                    .into_iter()
                    .map(|i| (terms[i].clone(), scores[i]))
                    .collect()
            })
            .collect()
    }

    /// Per-topic activation `q(y_j = 1 | doc)`; a document without known
    /// words returns the topic priors.
    pub fn doc_topic_probabilities(&self, tokens: &[String]) -> Vec<f64> {
        let mut ids = self.vocabulary.encode(tokens);
        ids.sort_unstable();
        ids.dedup();
        self.doc_topic_probabilities_ids(&ids)
    }

    pub fn doc_topic_probabilities_ids(&self, unique_ids: &[usize]) -> Vec<f64> {
        if unique_ids.is_empty() {
            return self.priors.clone();
        }
        (0..self.topics())
            .map(|j| {
                let py1 = clamp_prob(self.priors[j]);
                let mut logit = (py1 / (1.0 - py1)).ln();
                for i in 0..self.vocabulary.len() {
                    logit += self.effective_weight(j, i) * self.absent_log_ratio[j][i];
                }
                for &i in unique_ids {
                    logit += self.effective_weight(j, i)
                        * (self.present_log_ratio[j][i] - self.absent_log_ratio[j][i]);
                }
                sigmoid(logit)
            })
            .collect()
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    /// Argmax topic of each training document.
    pub fn assign(&self, corpus: &TokenizedCorpus) -> Vec<crate::btm::DocAssignment> {
        corpus
            .doc_ids
            .iter()
            .zip(&self.doc_topic)
            .map(|(id, row)| {
                let (topic, probability) = argmax(row);
                crate::btm::DocAssignment {
                    doc_id: id.clone(),
                    topic,
                    probability,
                }
            })
            .collect()
    }

    /// `topic,tc` rows.
    pub fn tc_csv(&self) -> String {
        let mut out = String::from("topic,tc\n");
        for (j, v) in self.tc.iter().enumerate() {
            out.push_str(&format!("{j},{v:.10}\n"));
        }
        out
    }

    pub fn topic_words_csv(&self, k: usize) -> String {
        let mut out = String::from("topic,rank,word,score\n");
        for (z, words) in self.topic_words(k).iter().enumerate() {
            for (r, (w, s)) in words.iter().enumerate() {
                out.push_str(&format!("{z},{},{},{s:.10}\n", r + 1, crate::csvfmt::field(w)));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Document, PreprocessRules};

    fn corpus(texts: &[&str]) -> TokenizedCorpus {
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("d{i}"), *t, "g"))
            .collect();
        TokenizedCorpus::build(
            &Corpus::new(docs).unwrap(),
            &PreprocessRules::without_stopwords(),
            1,
        )
        .unwrap()
    }

    fn two_cluster() -> TokenizedCorpus {
        corpus(&[
            "rent landlord bid", "rent bid council", "landlord council rent",
            "meter gas bill", "gas bill supplier", "meter supplier gas",
            "bid council landlord", "bill meter supplier",
        ])
    }

    #[test]
    fn anchor_must_exist() {
        let config = CorexConfig {
            topics: 2,
            anchors: vec![("housing".into(), 0)],
            ..Default::default()
        };
        assert_eq!(
            fit(&two_cluster(), &config).unwrap_err(),
            CorexError::AnchorNotInVocabulary("housing".into())
        );
    }

    #[test]
    fn too_many_topics() {
        let config = CorexConfig {
            topics: 50,
            ..Default::default()
        };
        assert!(matches!(
            fit(&two_cluster(), &config),
            Err(CorexError::TooManyTopics { topics: 50, .. })
        ));
    }

    #[test]
    fn trace_nondecreasing_and_weights_bounded() {
        let model = fit(&two_cluster(), &CorexConfig { topics: 2, ..Default::default() }).unwrap();
        for w in model.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-6);
        }
        assert!(model.alpha.iter().flatten().all(|&a| (0.0..=1.0).contains(&a)));
        assert!(model.doc_topic.iter().flatten().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn empty_document_gets_priors() {
        let model = fit(&two_cluster(), &CorexConfig { topics: 2, ..Default::default() }).unwrap();
        assert_eq!(model.doc_topic_probabilities(&[]), model.priors());
        assert_eq!(model.doc_topic_probabilities(&["zzz".into()]), model.priors());
    }

    #[test]
    fn zero_k_gives_empty_lists() {
        let model = fit(&two_cluster(), &CorexConfig { topics: 2, ..Default::default() }).unwrap();
        assert!(model.topic_words(0).iter().all(Vec::is_empty));
    }
}
