use super::PipelineError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Ranked topic words of one fitted model, with the vocabulary it was fit on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModelResult {
    pub name: String,
    pub vocabulary_fingerprint: String,
    pub topics: Vec<Vec<String>>,
    pub coherence: Option<f64>,
}

impl TopicModelResult {
    /// Wide table: one column per topic, one row per rank.
    pub fn table_csv(&self, k: usize) -> String {
        let mut out = crate::csvfmt::row((0..self.topics.len()).map(|z| format!("topic_{z}")));
        for r in 0..k {
            out.push_str(&crate::csvfmt::row(
                self.topics.iter().map(|t| t.get(r).cloned().unwrap_or_default()),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMatch {
    pub topic_a: usize,
    pub topic_b: usize,
    pub jaccard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub model_a: String,
    pub model_b: String,
    pub matches: Vec<TopicMatch>,
    pub mean_jaccard: f64,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub topics: usize,
    pub coherence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub k: usize,
    pub models: Vec<ModelSummary>,
    pub pairs: Vec<PairComparison>,
}

pub fn jaccard(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn top_sets(model: &TopicModelResult, k: usize) -> Vec<BTreeSet<&str>> {
    model
        .topics
        .iter()
        .map(|t| t.iter().take(k).map(String::as_str).collect())
        .collect()
}

/// Greedy maximum-weight matching of topics by Jaccard similarity of their
/// top-`k` word sets. Ties go to the lowest topic indices.
fn match_pair(a: &TopicModelResult, b: &TopicModelResult, k: usize) -> PairComparison {
    let (sa, sb) = (top_sets(a, k), top_sets(b, k));
    let mut candidates: Vec<TopicMatch> = Vec::new();
    for (i, x) in sa.iter().enumerate() {
        for (j, y) in sb.iter().enumerate() {
            candidates.push(TopicMatch {
                topic_a: i,
                topic_b: j,
                jaccard: jaccard(x, y),
            });
        }
    }
    candidates.sort_by(|p, q| {
        q.jaccard
            .total_cmp(&p.jaccard)
            .then(p.topic_a.cmp(&q.topic_a))
            .then(p.topic_b.cmp(&q.topic_b))
    });
    let (mut used_a, mut used_b) = (vec![false; sa.len()], vec![false; sb.len()]);
    let mut matches = Vec::new();
    for c in candidates {
        if !used_a[c.topic_a] && !used_b[c.topic_b] {
            used_a[c.topic_a] = true;
            used_b[c.topic_b] = true;
            matches.push(c);
        }
    }
    matches.sort_by_key(|m| m.topic_a);
    let mean_jaccard = if matches.is_empty() {
        0.0
    } else {
        matches.iter().map(|m| m.jaccard).sum::<f64>() / matches.len() as f64
    };
    let unmatched = |used: &[bool]| (0..used.len()).filter(|&i| !used[i]).collect();
    PairComparison {
        model_a: a.name.clone(),
        model_b: b.name.clone(),
        matches,
        mean_jaccard,
        unmatched_a: unmatched(&used_a),
        unmatched_b: unmatched(&used_b),
    }
}

/// Pairwise comparison of topic models fit on one vocabulary. Models are
/// ordered by name, so input order does not matter.
pub fn compare_topic_models(
    results: &[TopicModelResult],
    k: usize,
) -> Result<ComparisonReport, PipelineError> {
    if results.len() < 2 {
        return Err(PipelineError::Comparison("need at least two models".into()));
    }
    if k == 0 {
        return Err(PipelineError::Comparison("k must be at least 1".into()));
    }
    let mut models: Vec<&TopicModelResult> = results.iter().collect();
    models.sort_by(|a, b| a.name.cmp(&b.name));
    if let Some(m) = models
        .iter()
        .find(|m| m.vocabulary_fingerprint != models[0].vocabulary_fingerprint)
    {
        return Err(PipelineError::VocabularyMismatch {
            first: models[0].name.clone(),
            other: m.name.clone(),
        });
    }
    let mut pairs = Vec::new();
    for i in 0..models.len() {
        for j in i + 1..models.len() {
            pairs.push(match_pair(models[i], models[j], k));
        }
    }
    Ok(ComparisonReport {
        k,
        models: models
            .iter()
            .map(|m| ModelSummary {
                name: m.name.clone(),
                topics: m.topics.len(),
                coherence: m.coherence,
            })
            .collect(),
        pairs,
    })
}

impl ComparisonReport {
    pub fn render(&self) -> String {
        let mut out = format!("Topic model comparison (top {} words)\n\n", self.k);
        for m in &self.models {
            let coherence = m.coherence.map_or("n/a".to_string(), |c| format!("{c:.4}"));
            out.push_str(&format!("  {}: {} topics, UMass coherence {coherence}\n", m.name, m.topics));
        }
        for p in &self.pairs {
            out.push_str(&format!(
                "\n{} vs {}: mean matched Jaccard {:.4}\n",
                p.model_a, p.model_b, p.mean_jaccard
            ));
            for m in &p.matches {
                out.push_str(&format!("  topic {} <-> topic {}: {:.4}\n", m.topic_a, m.topic_b, m.jaccard));
            }
            if !p.unmatched_a.is_empty() {
                out.push_str(&format!("  unmatched in {}: {:?}\n", p.model_a, p.unmatched_a));
            }
            if !p.unmatched_b.is_empty() {
                out.push_str(&format!("  unmatched in {}: {:?}\n", p.model_b, p.unmatched_b));
            }
        }
        out
    }
}
