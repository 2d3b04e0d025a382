//! Coded-transcript corpus: JSON Lines ingestion, preprocessing and the
//! document-frequency ordered vocabulary every text model consumes.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use thiserror::Error;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record on line {line}: {detail}")]
    MalformedRecord { line: usize, detail: String },
    #[error("duplicate document id {0:?}")]
    DuplicateDocumentId(String),
    #[error("record on line {line} is missing required field {field:?}")]
    MissingField { line: usize, field: &'static str },
    #[error("corpus contains no documents")]
    EmptyCorpus,
    #[error("no term survives the document-frequency threshold")]
    EmptyVocabulary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Negative,
}

impl SentimentLabel {
    pub fn is_positive(self) -> bool {
        self == SentimentLabel::Positive
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SentimentLabel::Positive => f.write_str("positive"),
            SentimentLabel::Negative => f.write_str("negative"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceFlag {
    Housing,
    Energy,
    Health,
}

/// One analyzable unit: a transcript or a coded segment of one.
///
/// Optional fields keep their presence/absence so that export reproduces the
/// input record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codes: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment_label: Option<SentimentLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_flags: Option<Vec<ServiceFlag>>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, group: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            group: group.into(),
            codes: None,
            sentiment_label: None,
            city: None,
            service_flags: None,
        }
    }

    pub fn with_label(mut self, label: SentimentLabel) -> Self {
        self.sentiment_label = Some(label);
        self
    }

    pub fn has_service(&self, flag: ServiceFlag) -> bool {
        self.service_flags
            .as_ref()
            .map_or(false, |flags| flags.contains(&flag))
    }
}

/// Predicate over document fields used to carve sub-corpora.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocumentFilter {
    #[serde(default)]
    pub service: Option<ServiceFlag>,
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default)]
    pub city: Option<String>,
    #[serde(default)]
    pub code: Option<String>,
    #[serde(default)]
    pub labelled_only: bool,
}

impl DocumentFilter {
    pub fn matches(&self, doc: &Document) -> bool {
        if let Some(flag) = self.service {
            if !doc.has_service(flag) {
                return false;
            }
        }
        if let Some(group) = &self.group {
            if &doc.group != group {
                return false;
            }
        }
        if let Some(city) = &self.city {
            if doc.city.as_ref() != Some(city) {
                return false;
            }
        }
        if let Some(code) = &self.code {
            if !doc.codes.as_ref().map_or(false, |c| c.contains(code)) {
                return false;
            }
        }
        !(self.labelled_only && doc.sentiment_label.is_none())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocabulary: Option<Vocabulary>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(CorpusError::DuplicateDocumentId(doc.id.clone()));
            }
        }
        Ok(Corpus {
            documents,
            vocabulary: None,
        })
    }

    /// Reads a JSON Lines corpus file.
    pub fn ingest(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path)?;
        Self::from_jsonl(&text)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, CorpusError> {
        let mut documents = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(raw).map_err(|e| CorpusError::MalformedRecord {
                    line,
                    detail: e.to_string(),
                })?;
            let object = value.as_object().ok_or_else(|| CorpusError::MalformedRecord {
                line,
                detail: "record is not a JSON object".into(),
            })?;
            for field in ["id", "text", "group"] {
                if !object.contains_key(field) {
                    return Err(CorpusError::MissingField { line, field });
                }
            }
            let doc: Document =
                serde_json::from_value(value).map_err(|e| CorpusError::MalformedRecord {
                    line,
                    detail: e.to_string(),
                })?;
            if doc.id.is_empty() {
                return Err(CorpusError::MalformedRecord {
                    line,
                    detail: "empty document id".into(),
                });
            }
            if !seen.insert(doc.id.clone()) {
                return Err(CorpusError::DuplicateDocumentId(doc.id));
            }
            documents.push(doc);
        }
        Ok(Corpus {
            documents,
            vocabulary: None,
        })
    }

    /// Canonical JSON Lines rendering; `from_jsonl` reads it back unchanged.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for doc in &self.documents {
            out.push_str(&serde_json::to_string(doc).expect("document serializes"));
            out.push('\n');
        }
        out
    }

    pub fn export(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn filter(&self, filter: &DocumentFilter) -> Corpus {
        Corpus {
            documents: self
                .documents
                .iter()
                .filter(|d| filter.matches(d))
                .cloned()
                .collect(),
            vocabulary: None,
        }
    }

    pub fn tokenize(&self, rules: &PreprocessRules) -> Vec<Vec<String>> {
        self.documents.iter().map(|d| preprocess(d, rules)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessRules {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub stopwords: BTreeSet<String>,
    pub min_token_len: usize,
    pub stem: bool,
}

impl Default for PreprocessRules {
    fn default() -> Self {
        PreprocessRules {
            lowercase: true,
            strip_punctuation: true,
            stopwords: parse_stopwords(DEFAULT_STOPWORDS),
            min_token_len: 2,
            stem: false,
        }
    }
}

impl PreprocessRules {
    pub fn without_stopwords() -> Self {
        PreprocessRules {
            stopwords: BTreeSet::new(),
            ..Default::default()
        }
    }

    pub fn with_stopwords_file(mut self, path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        self.stopwords = parse_stopwords(&fs::read_to_string(path)?);
        Ok(self)
    }
}

/// One word per line; `#` starts a comment line.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

pub fn preprocess(doc: &Document, rules: &PreprocessRules) -> Vec<String> {
    preprocess_text(&doc.text, rules)
}

pub fn preprocess_text(text: &str, rules: &PreprocessRules) -> Vec<String> {
    let text = if rules.lowercase {
        text.to_lowercase()
    } else {
        text.to_string()
    };
    let cleaned: String = if rules.strip_punctuation {
        text.chars()
            .map(|c| if c.is_alphanumeric() { c } else { ' ' })
            .collect()
    } else {
        text
    };
    cleaned
        .split_whitespace()
        .filter(|t| !rules.stopwords.contains(&t.to_lowercase()))
        .filter_map(|t| {
            let token = if rules.stem { s_stem(t) } else { t.to_string() };
            let keep = token.chars().count() >= rules.min_token_len
                && !rules.stopwords.contains(&token.to_lowercase());
            keep.then_some(token)
        })
        .collect()
}

/// Plural-folding "S" stemmer. Its outputs never end in a strippable `s`,
/// so applying it twice is a no-op.
fn s_stem(word: &str) -> String {
    let ends = |suffix: &str| word.ends_with(suffix);
    if ends("ies") && !ends("eies") && !ends("aies") && word.len() > 3 {
        format!("{}y", &word[..word.len() - 3])
    } else if ends("es") && !ends("aes") && !ends("ees") && !ends("oes") && word.len() > 2 {
        word[..word.len() - 1].to_string()
    } else if ends("s") && !ends("us") && !ends("ss") && word.len() > 1 {
        word[..word.len() - 1].to_string()
    } else {
        word.to_string()
    }
}

/// Dense term index ordered by descending document frequency, ties broken
/// lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_token_docs(docs: &[Vec<String>], min_df: usize) -> Result<Self, CorpusError> {
        if docs.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut df: HashMap<&str, usize> = HashMap::new();
        for doc in docs {
            let unique: HashSet<&str> = doc.iter().map(String::as_str).collect();
            for term in unique {
                *df.entry(term).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = df
            .into_iter()
            .filter(|&(_, n)| n >= min_df.max(1))
            .collect();
        if kept.is_empty() {
            return Err(CorpusError::EmptyVocabulary);
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let terms: Vec<String> = kept.iter().map(|(t, _)| t.to_string()).collect();
        let doc_freq = kept.iter().map(|&(_, n)| n).collect();
        Ok(Self::assemble(terms, doc_freq))
    }

    /// Rebuilds a vocabulary from stored parts (used when loading models).
    pub fn from_terms(terms: Vec<String>, doc_freq: Vec<usize>) -> Self {
        Self::assemble(terms, doc_freq)
    }

    fn assemble(terms: Vec<String>, doc_freq: Vec<usize>) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms,
            doc_freq,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: usize) -> &str {
        &self.terms[id]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn doc_freq(&self, id: usize) -> usize {
        self.doc_freq[id]
    }

    pub fn doc_freqs(&self) -> &[usize] {
        &self.doc_freq
    }

    /// Maps tokens to ids, dropping out-of-vocabulary tokens.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.id(t)).collect()
    }

    /// Stable content fingerprint (terms in id order).
    pub fn fingerprint(&self) -> String {
        crate::hashing::sha256_hex(self.terms.join("\n").as_bytes())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,term,doc_freq\n");
        for (i, (t, n)) in self.terms.iter().zip(&self.doc_freq).enumerate() {
            out.push_str(&format!("{i},{},{n}\n", crate::csvfmt::field(t)));
        }
        out
    }
}

pub fn build_vocabulary(
    corpus: &Corpus,
    rules: &PreprocessRules,
    min_df: usize,
) -> Result<Vocabulary, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Vocabulary::from_token_docs(&corpus.tokenize(rules), min_df)
}

/// A corpus after preprocessing, aligned with its vocabulary.
#[derive(Debug, Clone)]
pub struct TokenizedCorpus {
    pub doc_ids: Vec<String>,
    pub groups: Vec<String>,
    pub labels: Vec<Option<SentimentLabel>>,
    /// Preprocessed tokens, in-vocabulary only.
    pub tokens: Vec<Vec<String>>,
    pub ids: Vec<Vec<usize>>,
    pub vocabulary: Vocabulary,
}

impl TokenizedCorpus {
    pub fn build(
        corpus: &Corpus,
        rules: &PreprocessRules,
        min_df: usize,
    ) -> Result<Self, CorpusError> {
        if corpus.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let raw = corpus.tokenize(rules);
        let vocabulary = Vocabulary::from_token_docs(&raw, min_df)?;
        Ok(Self::with_vocabulary(corpus, raw, vocabulary))
    }

    fn with_vocabulary(corpus: &Corpus, raw: Vec<Vec<String>>, vocabulary: Vocabulary) -> Self {
        let tokens: Vec<Vec<String>> = raw
            .into_iter()
            .map(|doc| doc.into_iter().filter(|t| vocabulary.id(t).is_some()).collect())
            .collect();
        let ids = tokens.iter().map(|d| vocabulary.encode(d)).collect();
        TokenizedCorpus {
            doc_ids: corpus.documents.iter().map(|d| d.id.clone()).collect(),
            groups: corpus.documents.iter().map(|d| d.group.clone()).collect(),
            labels: corpus.documents.iter().map(|d| d.sentiment_label).collect(),
            tokens,
            ids,
            vocabulary,
        }
    }

    /// Tokenized view of a subset of documents, keeping this vocabulary.
    pub fn select(&self, keep: &[usize]) -> TokenizedCorpus {
        TokenizedCorpus {
            doc_ids: keep.iter().map(|&i| self.doc_ids[i].clone()).collect(),
            groups: keep.iter().map(|&i| self.groups[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            tokens: keep.iter().map(|&i| self.tokens[i].clone()).collect(),
            ids: keep.iter().map(|&i| self.ids[i].clone()).collect(),
            vocabulary: self.vocabulary.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn group_map(&self) -> HashMap<String, String> {
        self.doc_ids
            .iter()
            .cloned()
            .zip(self.groups.iter().cloned())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, text: &str) -> String {
        format!(r#"{{"id":"{id}","text":"{text}","group":"African"}}"#)
    }

    #[test]
    fn ingest_preserves_order() {
        let src = [line("a", "x"), line("c", "y"), line("b", "z")].join("\n");
        let corpus = Corpus::from_jsonl(&src).unwrap();
        let ids: Vec<_> = corpus.documents.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "b"]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let src = [line("t01", "x"), line("t01", "y")].join("\n");
        match Corpus::from_jsonl(&src) {
            Err(CorpusError::DuplicateDocumentId(id)) => assert_eq!(id, "t01"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_text_field() {
        let src = r#"{"id":"a","group":"g"}"#;
        match Corpus::from_jsonl(src) {
            Err(CorpusError::MissingField { field, line }) => {
                assert_eq!(field, "text");
                assert_eq!(line, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_and_labels() {
        assert!(matches!(
            Corpus::from_jsonl("{not json"),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
        let bad_label = r#"{"id":"a","text":"t","group":"g","sentiment_label":"neutral"}"#;
        assert!(matches!(
            Corpus::from_jsonl(bad_label),
            Err(CorpusError::MalformedRecord { .. })
        ));
        let empty_id = r#"{"id":"","text":"t","group":"g"}"#;
        assert!(matches!(
            Corpus::from_jsonl(empty_id),
            Err(CorpusError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn export_round_trip_is_byte_identical() {
        let src = concat!(
            r#"{"id":"a","text":"Social housing, bidding.","group":"Indian","codes":["housing","online"],"sentiment_label":"negative","city":"Glasgow","service_flags":["housing","health"]}"#,
            "\n",
            r#"{"id":"b","text":"meter","group":"Chinese"}"#,
            "\n"
        );
        let corpus = Corpus::from_jsonl(src).unwrap();
        assert_eq!(corpus.to_jsonl(), src);
    }

    #[test]
    fn default_preprocessing() {
        let rules = PreprocessRules::default();
        assert_eq!(
            preprocess_text("The Housing, Association!", &rules),
            ["housing", "association"]
        );
        assert!(preprocess_text("", &rules).is_empty());
        let no_stop = PreprocessRules::without_stopwords();
        assert_eq!(preprocess_text("a housing", &no_stop), ["housing"]);
    }

    #[test]
    fn stemming_folds_plurals() {
        let rules = PreprocessRules {
            stem: true,
            ..Default::default()
        };
        assert_eq!(
            preprocess_text("meters bills policies glasses", &rules),
            ["meter", "bill", "policy", "glasse"]
        );
    }

    #[test]
    fn vocabulary_threshold_and_ties() {
        let docs: Vec<Vec<String>> = [
            vec!["b", "a", "rare"],
            vec!["a", "b"],
            vec!["a", "b"],
            vec!["c"],
            vec!["c"],
        ]
        .iter()
        .map(|d| d.iter().map(|s| s.to_string()).collect())
        .collect();
        let vocab = Vocabulary::from_token_docs(&docs, 2).unwrap();
        assert_eq!(vocab.terms(), ["a", "b", "c"]);
        assert_eq!(vocab.id("rare"), None);
        assert_eq!(vocab.doc_freq(0), 3);
    }

    #[test]
    fn vocabulary_errors() {
        let empty = Corpus::default();
        assert!(matches!(
            build_vocabulary(&empty, &PreprocessRules::default(), 1),
            Err(CorpusError::EmptyCorpus)
        ));
        let corpus = Corpus::new(vec![Document::new("a", "the of", "g")]).unwrap();
        assert!(matches!(
            build_vocabulary(&corpus, &PreprocessRules::default(), 1),
            Err(CorpusError::EmptyVocabulary)
        ));
    }

    #[test]
    fn filter_by_service() {
        let mut d1 = Document::new("1", "x", "g");
        d1.service_flags = Some(vec![ServiceFlag::Housing]);
        let d2 = Document::new("2", "y", "g");
        let corpus = Corpus::new(vec![d1, d2]).unwrap();
        let sub = corpus.filter(&DocumentFilter {
            service: Some(ServiceFlag::Housing),
            ..Default::default()
        });
        assert_eq!(sub.len(), 1);
        assert_eq!(sub.documents[0].id, "1");
    }
}
