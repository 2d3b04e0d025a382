use super::TuneError;
use std::collections::HashMap;

/// Inverted index of document occurrences for co-document frequency lookups.
#[derive(Debug, Clone, Default)]
pub struct CoherenceIndex {
    postings: HashMap<String, Vec<u32>>,
    docs: usize,
}

impl CoherenceIndex {
    pub fn new<S: AsRef<str>>(docs: &[Vec<S>]) -> Self {
        let mut postings: HashMap<String, Vec<u32>> = HashMap::new();
        for (d, doc) in docs.iter().enumerate() {
            for token in doc {
                let list = postings.entry(token.as_ref().to_string()).or_default();
                if list.last() != Some(&(d as u32)) {
                    list.push(d as u32);
                }
            }
        }
        CoherenceIndex {
            postings,
            docs: docs.len(),
        }
    }

    pub fn documents(&self) -> usize {
        self.docs
    }

    /// `D(w)`: documents containing `w`.
    pub fn doc_freq(&self, word: &str) -> usize {
        self.postings.get(word).map_or(0, Vec::len)
    }

    /// `D(a, b)`: documents containing both words.
    pub fn co_doc_freq(&self, a: &str, b: &str) -> usize {
        let (Some(pa), Some(pb)) = (self.postings.get(a), self.postings.get(b)) else {
            return 0;
        };
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < pa.len() && j < pb.len() {
            match pa[i].cmp(&pb[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// UMass score of one ranked word list, normalized by its pair count.
    ///
    /// Pairs whose conditioning word never occurs are skipped; fewer than two
    /// occurring words scores 0.
    pub fn topic_umass<S: AsRef<str>>(&self, words: &[S]) -> f64 {
        let n = words.len();
        let df: Vec<usize> = words.iter().map(|w| self.doc_freq(w.as_ref())).collect();
        if df.iter().filter(|&&d| d > 0).count() < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 1..n {
            for j in 0..i {
                if df[j] == 0 {
                    continue;
                }
                let co = self.co_doc_freq(words[i].as_ref(), words[j].as_ref());
                sum += ((co as f64 + 1.0) / df[j] as f64).ln();
            }
        }
        sum / (n * (n - 1) / 2) as f64
    }

    /// Mean UMass coherence over topics, each truncated to its top `k` words.
    pub fn umass<S: AsRef<str>>(&self, topics: &[Vec<S>], k: usize) -> Result<f64, TuneError> {
        if topics.is_empty() {
            return Err(TuneError::EmptyTopics);
        }
        if k == 0 {
            return Err(TuneError::InvalidTopN);
        }
        let total: f64 = topics
            .iter()
            .map(|t| self.topic_umass(&t[..t.len().min(k)]))
            .sum();
        Ok(total / topics.len() as f64)
    }
}

pub fn umass_coherence<S: AsRef<str>, T: AsRef<str>>(
    topics: &[Vec<S>],
    docs: &[Vec<T>],
    k: usize,
) -> Result<f64, TuneError> {
    CoherenceIndex::new(docs).umass(topics, k)
}
