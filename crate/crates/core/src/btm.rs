//! Biterm topic model for short texts, fitted by collapsed Gibbs sampling.
//!
//! Every unordered word pair co-occurring inside a sliding window is one
//! observation; the whole corpus shares a single topic mixture.

use crate::corpus::{TokenizedCorpus, Vocabulary};
use crate::distribution::{DistributionError, GroupDistribution};
use crate::rng::{seeded, Rng64};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BtmError {
    #[error("invalid biterm configuration: {0}")]
    InvalidConfig(String),
    #[error("no document yields a biterm")]
    NoBiterms,
    #[error("document has no in-vocabulary biterm")]
    NoKnownBiterms,
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BitermConfig {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub window: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for BitermConfig {
    fn default() -> Self {
        BitermConfig {
            topics: 2,
            alpha: 0.2,
            beta: 0.018,
            window: 12,
            iterations: 500,
            seed: 0,
        }
    }
}

impl BitermConfig {
    pub fn validate(&self) -> Result<(), BtmError> {
        let bad = |msg: &str| Err(BtmError::InvalidConfig(msg.to_string()));
        if self.topics == 0 {
            return bad("topic count must be at least 1");
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha must be a finite non-negative number");
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad("beta must be a finite positive number");
        }
        if self.window < 2 {
            return bad("biterm window must be at least 2");
        }
        Ok(())
    }

    pub fn burn_in(&self) -> usize {
        self.iterations / 2
    }
}

/// All unordered pairs `(t_i, t_j)`, `i < j`, with `j - i < window`.
///
/// Pairs are canonicalized as `(min, max)`; repeated words at distinct
/// positions still form a pair.
pub fn extract_biterms<T: Clone + Ord>(tokens: &[T], window: usize) -> Vec<(T, T)> {
    let mut out = Vec::new();
    for i in 0..tokens.len() {
        for j in (i + 1)..tokens.len().min(i + window) {
            let (a, b) = (&tokens[i], &tokens[j]);
            if a <= b {
                out.push((a.clone(), b.clone()));
            } else {
                out.push((b.clone(), a.clone()));
            }
        }
    }
    out
}

/// Sufficient statistics of the sampler state.
#[derive(Debug, Clone, PartialEq)]
pub struct BitermCounts {
    /// Biterms assigned to each topic.
    pub topic: Vec<u64>,
    /// Word occurrences per topic, `topic_word[z][w]`.
    pub topic_word: Vec<Vec<u64>>,
}

impl BitermCounts {
    /// `Σ_z n_z = |B|` and `Σ_w n_{w|z} = 2 n_z` for every topic.
    pub fn is_conserved(&self, biterms: usize) -> bool {
        self.topic.iter().sum::<u64>() == biterms as u64
            && self
                .topic
                .iter()
                .zip(&self.topic_word)
                .all(|(&nz, row)| row.iter().sum::<u64>() == 2 * nz)
    }
}

/// Collapsed Gibbs chain over the corpus biterms.
pub struct BitermSampler {
    config: BitermConfig,
    vocab_size: usize,
    biterms: Vec<(usize, usize)>,
    assignment: Vec<usize>,
    counts: BitermCounts,
    rng: Rng64,
    weights: Vec<f64>,
    sweeps: usize,
}

impl BitermSampler {
    pub fn new(docs: &[Vec<usize>], vocab_size: usize, config: &BitermConfig) -> Result<Self, BtmError> {
        config.validate()?;
        let biterms: Vec<(usize, usize)> = docs
            .iter()
            .flat_map(|d| extract_biterms(d, config.window))
            .collect();
        if biterms.is_empty() {
            return Err(BtmError::NoBiterms);
        }
        let t = config.topics;
        let mut rng = seeded(config.seed);
        let mut counts = BitermCounts {
            topic: vec![0; t],
            topic_word: vec![vec![0; vocab_size]; t],
        };
        let assignment: Vec<usize> = biterms
            .iter()
            .map(|&(w1, w2)| {
                let z = rng.gen_range(0..t);
                counts.topic[z] += 1;
                counts.topic_word[z][w1] += 1;
                counts.topic_word[z][w2] += 1;
                z
            })
            .collect();
        Ok(BitermSampler {
            config: config.clone(),
            vocab_size,
            biterms,
            assignment,
            counts,
            rng,
            weights: vec![0.0; t],
            sweeps: 0,
        })
    }

    pub fn biterm_count(&self) -> usize {
        self.biterms.len()
    }

    pub fn counts(&self) -> &BitermCounts {
        &self.counts
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// One pass resampling every biterm's topic.
    pub fn sweep(&mut self) {
        let alpha = self.config.alpha;
        let beta = self.config.beta;
        let v_beta = self.vocab_size as f64 * beta;
        for b in 0..self.biterms.len() {
            let (w1, w2) = self.biterms[b];
            let old = self.assignment[b];
            self.counts.topic[old] -= 1;
            self.counts.topic_word[old][w1] -= 1;
            self.counts.topic_word[old][w2] -= 1;

            let mut total = 0.0;
            for (z, weight) in self.weights.iter_mut().enumerate() {
                let nz = self.counts.topic[z] as f64;
                let denom = 2.0 * nz + v_beta;
                *weight = (nz + alpha)
                    * (self.counts.topic_word[z][w1] as f64 + beta)
                    * (self.counts.topic_word[z][w2] as f64 + beta)
                    / (denom * (denom + 1.0));
                total += *weight;
            }
            let new = if total > 0.0 {
                let mut u = self.rng.gen::<f64>() * total;
                let mut chosen = self.weights.len() - 1;
                for (z, &w) in self.weights.iter().enumerate() {
                    if u < w {
                        chosen = z;
                        break;
                    }
                    u -= w;
                }
                chosen
            } else {
                // alpha = 0 with every other topic empty
                self.rng.gen_range(0..self.weights.len())
            };

            self.assignment[b] = new;
            self.counts.topic[new] += 1;
            self.counts.topic_word[new][w1] += 1;
            self.counts.topic_word[new][w2] += 1;
        }
        self.sweeps += 1;
    }

    /// Point estimates from the current state.
    pub fn into_model(self, vocabulary: Vocabulary) -> BitermModel {
        let t = self.config.topics;
        let alpha = self.config.alpha;
        let beta = self.config.beta;
        let n_b = self.biterms.len() as f64;
        let v_beta = self.vocab_size as f64 * beta;
        let theta = self
            .counts
            .topic
            .iter()
            .map(|&nz| (nz as f64 + alpha) / (n_b + t as f64 * alpha))
            .collect();
        let phi = (0..t)
            .map(|z| {
                let denom = 2.0 * self.counts.topic[z] as f64 + v_beta;
                self.counts.topic_word[z]
                    .iter()
                    .map(|&n| (n as f64 + beta) / denom)
                    .collect()
            })
            .collect();
        BitermModel {
            config: self.config,
            vocabulary,
            phi,
            theta,
            counts: self.counts,
            biterm_count: self.biterms.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BitermModel {
    pub config: BitermConfig,
    pub vocabulary: Vocabulary,
    /// `phi[z][w] = P(w | z)`.
    pub phi: Vec<Vec<f64>>,
    /// `theta[z] = P(z)`.
    pub theta: Vec<f64>,
    pub counts: BitermCounts,
    pub biterm_count: usize,
}

/// A document's most probable topic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocAssignment {
    pub doc_id: String,
    pub topic: usize,
    pub probability: f64,
}

pub fn fit(corpus: &TokenizedCorpus, config: &BitermConfig) -> Result<BitermModel, BtmError> {
    let mut sampler = BitermSampler::new(&corpus.ids, corpus.vocabulary.len(), config)?;
    for _ in 0..config.iterations {
        sampler.sweep();
    }
    Ok(sampler.into_model(corpus.vocabulary.clone()))
}

/// Ranks indices by descending score, ties by term.
pub(crate) fn rank_terms(scores: &[f64], terms: &[String], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| terms[a].cmp(&terms[b]))
    });
    order.truncate(k);
    order
}

impl BitermModel {
    pub fn topics(&self) -> usize {
        self.theta.len()
    }

    /// Top-`k` words per topic by `P(w|z)`.
    pub fn topic_words(&self, k: usize) -> Vec<Vec<(String, f64)>> {
        let terms = self.vocabulary.terms();
        self.phi
            .iter()
            .map(|row| {
                rank_terms(row, terms, k)
                    .into_iter()
                    .map(|w| (terms[w].clone(), row[w]))
                    .collect()
            })
            .collect()
    }

    /// `P(z|d) = Σ_b P(z|b) P(b|d)` with `P(b|d)` uniform over the document's biterms.
    pub fn infer_doc_topics(&self, tokens: &[String]) -> Result<Vec<f64>, BtmError> {
        self.infer_ids(&self.vocabulary.encode(tokens))
    }

    pub fn infer_ids(&self, ids: &[usize]) -> Result<Vec<f64>, BtmError> {
        let biterms = extract_biterms(ids, self.config.window);
        if biterms.is_empty() {
            return Err(BtmError::NoKnownBiterms);
        }
        let t = self.topics();
        let mut out = vec![0.0; t];
        let mut posterior = vec![0.0; t];
        for &(w1, w2) in &biterms {
            let mut total = 0.0;
            for z in 0..t {
                posterior[z] = self.theta[z] * self.phi[z][w1] * self.phi[z][w2];
                total += posterior[z];
            }
            for z in 0..t {
                out[z] += posterior[z] / total;
            }
        }
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|p| *p /= total);
        Ok(out)
    }

    /// Argmax topic of every document that has at least one known biterm.
    pub fn assign(&self, corpus: &TokenizedCorpus) -> Vec<DocAssignment> {
        corpus
            .doc_ids
            .iter()
            .zip(&corpus.ids)
            .filter_map(|(id, ids)| {
                let dist = self.infer_ids(ids).ok()?;
                let (topic, probability) = argmax(&dist);
                Some(DocAssignment {
                    doc_id: id.clone(),
                    topic,
                    probability,
                })
            })
            .collect()
    }

    /// Long-format topic-word CSV: `topic,rank,word,probability`.
    pub fn topic_words_csv(&self, k: usize) -> String {
        let mut out = String::from("topic,rank,word,probability\n");
        for (z, words) in self.topic_words(k).iter().enumerate() {
            for (r, (w, p)) in words.iter().enumerate() {
                out.push_str(&format!("{z},{},{},{p:.10}\n", r + 1, crate::csvfmt::field(w)));
            }
        }
        out
    }
}

/// First index of the maximum, with its value.
pub(crate) fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

pub fn assignments_csv(assignments: &[DocAssignment]) -> String {
    let mut out = String::from("doc_id,topic,probability\n");
    for a in assignments {
        out.push_str(&format!(
            "{},{},{:.10}\n",
            crate::csvfmt::field(&a.doc_id),
            a.topic,
            a.probability
        ));
    }
    out
}

/// Percentage of each group's documents assigned to each topic.
pub fn group_topic_distribution(
    assignments: &[DocAssignment],
    groups: &HashMap<String, String>,
    topics: usize,
) -> Result<GroupDistribution, BtmError> {
    Ok(GroupDistribution::from_assignments(
        assignments.iter().map(|a| (a.doc_id.as_str(), a.topic)),
        groups,
        topics,
    )?)
}
