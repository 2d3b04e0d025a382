use super::LcaError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Separator between selections in a multi-select answer cell.
pub const MULTI_SEPARATOR: char = ';';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionKind {
    Single,
    Multi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: QuestionKind,
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySchema {
    pub questions: Vec<Question>,
}

impl SurveySchema {
    pub fn from_json(text: &str) -> Result<Self, LcaError> {
        let schema: SurveySchema =
            serde_json::from_str(text).map_err(|e| LcaError::Parse(e.to_string()))?;
        for q in &schema.questions {
            if q.options.is_empty() {
                return Err(LcaError::Parse(format!("question {:?} has no options", q.id)));
            }
        }
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LcaError> {
        Self::from_json(&read(path.as_ref())?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn position(&self, question: &str) -> Option<usize> {
        self.questions.iter().position(|q| q.id == question)
    }
}

fn read(path: &Path) -> Result<String, LcaError> {
    std::fs::read_to_string(path).map_err(|e| LcaError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRespondent {
    pub id: String,
    pub group: String,
    /// One entry per schema question; `None` is a missing answer.
    pub answers: Vec<Option<Vec<String>>>,
}

/// Survey responses as recorded, before indicator encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSurvey {
    pub schema: SurveySchema,
    pub respondents: Vec<RawRespondent>,
}

impl RawSurvey {
    /// Reads a CSV with columns `id,group` followed by one column per schema
    /// question (by id, any order). Empty cells are missing answers.
    pub fn from_csv(text: &str, schema: SurveySchema) -> Result<Self, LcaError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| LcaError::Parse(e.to_string()))?.clone();
        let column = |name: &str| headers.iter().position(|h| h == name);
        let id_col = column("id").ok_or_else(|| LcaError::Parse("missing id column".into()))?;
        let group_col =
            column("group").ok_or_else(|| LcaError::Parse("missing group column".into()))?;
        let question_cols = schema
            .questions
            .iter()
            .map(|q| column(&q.id).ok_or_else(|| LcaError::UnknownQuestion(q.id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let mut respondents = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| LcaError::Parse(e.to_string()))?;
            let answers = schema
                .questions
                .iter()
                .zip(&question_cols)
                .map(|(q, &c)| {
                    let cell = record.get(c).unwrap_or("").trim();
                    if cell.is_empty() {
                        return None;
                    }
                    Some(match q.kind {
                        QuestionKind::Single => vec![cell.to_string()],
                        QuestionKind::Multi => cell
                            .split(MULTI_SEPARATOR)
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(String::from)
                            .collect(),
                    })
                })
                .collect();
            respondents.push(RawRespondent {
                id: record.get(id_col).unwrap_or("").to_string(),
                group: record.get(group_col).unwrap_or("").to_string(),
                answers,
            });
        }
        Ok(RawSurvey {
            schema,
            respondents,
        })
    }

    pub fn load(csv_path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<Self, LcaError> {
        let schema = SurveySchema::load(schema_path)?;
        Self::from_csv(&read(csv_path.as_ref())?, schema)
    }

    pub fn to_csv(&self) -> String {
        let mut out = crate::csvfmt::row(
            ["id", "group"]
                .into_iter()
                .map(String::from)
                .chain(self.schema.questions.iter().map(|q| q.id.clone())),
        );
        let sep = MULTI_SEPARATOR.to_string();
        for r in &self.respondents {
            out.push_str(&crate::csvfmt::row(
                [r.id.clone(), r.group.clone()]
                    .into_iter()
                    .chain(r.answers.iter().map(|a| a.as_ref().map_or(String::new(), |v| v.join(&sep)))),
            ));
        }
        out
    }
}

/// Binary indicator matrix with a missing-response mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyDataset {
    pub ids: Vec<String>,
    pub groups: Vec<String>,
    pub indicators: Vec<String>,
    /// `values[i][j]`: indicator `j` of respondent `i`; `None` when missing.
    pub values: Vec<Vec<Option<bool>>>,
}

impl SurveyDataset {
    pub fn respondents(&self) -> usize {
        self.values.len()
    }

    pub fn items(&self) -> usize {
        self.indicators.len()
    }

    /// Observed mean of each indicator; 0.5 where nothing is observed.
    pub fn indicator_means(&self) -> Vec<f64> {
        (0..self.items())
            .map(|j| {
                let (ones, seen) = self.values.iter().fold((0usize, 0usize), |(o, s), row| match row[j] {
                    Some(x) => (o + x as usize, s + 1),
                    None => (o, s),
                });
                if seen == 0 {
                    0.5
                } else {
                    ones as f64 / seen as f64
                }
            })
            .collect()
    }
}

/// Indicator name for an option of the question at `index`.
pub fn indicator_name(option: &str, index: usize) -> String {
    format!("{option}_{index}")
}

/// One indicator per (question, option), named `<option>_<question index>`.
pub fn encode_indicators(raw: &RawSurvey) -> Result<SurveyDataset, LcaError> {
    let mut indicators = Vec::new();
    let mut offsets = Vec::new();
    for (qi, q) in raw.schema.questions.iter().enumerate() {
        offsets.push(indicators.len());
        indicators.extend(q.options.iter().map(|o| indicator_name(o, qi)));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = indicators.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(LcaError::Parse(format!("duplicate indicator {dup:?}")));
    }
    let mut values = Vec::with_capacity(raw.respondents.len());
    for r in &raw.respondents {
        let mut row = vec![None; indicators.len()];
        for ((q, answer), &offset) in raw.schema.questions.iter().zip(&r.answers).zip(&offsets) {
            let Some(selected) = answer else { continue };
            let cells = &mut row[offset..offset + q.options.len()];
            cells.iter_mut().for_each(|c| *c = Some(false));
            for choice in selected {
                let pos = q.options.iter().position(|o| o == choice).ok_or_else(|| {
                    LcaError::UnknownOption {
                        question: q.id.clone(),
                        option: choice.clone(),
                    }
                })?;
                cells[pos] = Some(true);
            }
        }
        values.push(row);
    }
    Ok(SurveyDataset {
        ids: raw.respondents.iter().map(|r| r.id.clone()).collect(),
        groups: raw.respondents.iter().map(|r| r.group.clone()).collect(),
        indicators,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub option: String,
    pub count: usize,
    pub percentage: f64,
}

/// Option counts for one question. Percentages are over non-missing
/// selections; for multi-select questions each selection counts once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub question: String,
    pub group: Option<String>,
    pub rows: Vec<FrequencyRow>,
    pub missing: usize,
}

impl FrequencyTable {
    pub fn count(&self, option: &str) -> Option<usize> {
        self.rows.iter().find(|r| r.option == option).map(|r| r.count)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(|r| r.count == 0) && self.missing == 0
    }
}

/// Frequency table of `question`, restricted to `group` when given.
pub fn eda_frequencies(
    raw: &RawSurvey,
    question: &str,
    group: Option<&str>,
) -> Result<FrequencyTable, LcaError> {
    let qi = raw
        .schema
        .position(question)
        .ok_or_else(|| LcaError::UnknownQuestion(question.to_string()))?;
    let q = &raw.schema.questions[qi];
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut missing = 0;
    for r in raw.respondents.iter().filter(|r| group.map_or(true, |g| r.group == g)) {
        match &r.answers[qi] {
            None => missing += 1,
            Some(selected) => {
                for s in selected {
                    *counts.entry(s.as_str()).or_default() += 1;
                }
            }
        }
    }
    let total: usize = counts.values().sum();
    let rows = q
        .options
        .iter()
        .map(|o| {
            let count = counts.get(o.as_str()).copied().unwrap_or(0);
            FrequencyRow {
                option: o.clone(),
                count,
                percentage: if total > 0 { 100.0 * count as f64 / total as f64 } else { 0.0 },
            }
        })
        .collect();
    Ok(FrequencyTable {
        question: question.to_string(),
        group: group.map(String::from),
        rows,
        missing,
    })
}

/// One table per group present in the survey, in label order.
pub fn eda_stratified(raw: &RawSurvey, question: &str) -> Result<Vec<FrequencyTable>, LcaError> {
    let groups: std::collections::BTreeSet<&str> =
        raw.respondents.iter().map(|r| r.group.as_str()).collect();
    groups
        .into_iter()
        .map(|g| eda_frequencies(raw, question, Some(g)))
        .collect()
}

/// `group,option,count,percentage` rows; missing answers get a row with an
/// empty percentage. Ungrouped tables use the label `all`.
pub fn frequency_csv(tables: &[FrequencyTable]) -> String {
    let mut out = String::from("group,option,count,percentage\n");
    for t in tables {
        let group = t.group.clone().unwrap_or_else(|| "all".to_string());
        for r in &t.rows {
            out.push_str(&crate::csvfmt::row([
                group.clone(),
                r.option.clone(),
                r.count.to_string(),
                format!("{:.6}", r.percentage),
            ]));
        }
        out.push_str(&crate::csvfmt::row([
            group,
            "missing".to_string(),
            t.missing.to_string(),
            String::new(),
        ]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> SurveySchema {
        SurveySchema {
            questions: vec![
                Question {
                    id: "tenure".into(),
                    kind: QuestionKind::Single,
                    options: vec!["A".into(), "B".into(), "C".into()],
                },
                Question {
                    id: "apps".into(),
                    kind: QuestionKind::Multi,
                    options: vec!["A".into(), "B".into(), "C".into()],
                },
            ],
        }
    }

    fn survey() -> RawSurvey {
        let text = "id,group,tenure,apps\nr1,G1,B,A;C\nr2,G1,A,\nr3,G2,A,B\nr4,G2,,A\n";
        RawSurvey::from_csv(text, schema()).unwrap()
    }

    #[test]
    fn one_hot_encoding() {
        let data = encode_indicators(&survey()).unwrap();
        assert_eq!(data.indicators, ["A_0", "B_0", "C_0", "A_1", "B_1", "C_1"]);
        let r1: Vec<_> = data.values[0].iter().map(|v| v.unwrap()).collect();
        assert_eq!(r1, [false, true, false, true, false, true]);
        assert_eq!(&data.values[1][3..], &[None, None, None]);
    }

    #[test]
    fn unknown_option() {
        let raw = RawSurvey::from_csv("id,group,tenure,apps\nr1,G,Z,\n", schema()).unwrap();
        assert!(matches!(encode_indicators(&raw), Err(LcaError::UnknownOption { .. })));
    }

    #[test]
    fn frequencies() {
        let t = eda_frequencies(&survey(), "tenure", None).unwrap();
        assert_eq!(t.count("A"), Some(2));
        assert_eq!(t.count("B"), Some(1));
        assert_eq!(t.missing, 1);
        assert!((t.rows[0].percentage - 200.0 / 3.0).abs() < 1e-12);
        let none = eda_frequencies(&survey(), "tenure", Some("nobody")).unwrap();
        assert!(none.is_empty());
        assert!(matches!(
            eda_frequencies(&survey(), "nope", None),
            Err(LcaError::UnknownQuestion(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let raw = survey();
        assert_eq!(RawSurvey::from_csv(&raw.to_csv(), schema()).unwrap(), raw);
    }
}
