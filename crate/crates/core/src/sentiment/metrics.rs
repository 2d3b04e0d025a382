use super::SentimentError;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Counts oriented by actual label: positives split into `(tp, fn)`,
/// negatives into `(fp, tn)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

/// Exact fraction; a zero denominator marks an undefined metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn value(&self) -> Option<f64> {
        (self.den > 0).then(|| self.num as f64 / self.den as f64)
    }

    pub fn is_defined(&self) -> bool {
        self.den > 0
    }

    /// Percentage with `decimals` places, or `undefined`.
    pub fn percent(&self, decimals: usize) -> String {
        match self.value() {
            Some(v) => format!("{:.*}%", decimals, 100.0 * v),
            None => "undefined".to_string(),
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: Ratio,
    pub precision: Ratio,
    pub recall: Ratio,
    pub specificity: Ratio,
    pub npv: Ratio,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fn_, fp, tn }
    }

    /// Tallies `(actual, predicted)` positive flags.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (actual, predicted) in pairs {
            match (actual, predicted) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fn_ += 1,
                (false, true) => cm.fp += 1,
                (false, false) => cm.tn += 1,
            }
        }
        cm
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn metrics(&self) -> Result<ConfusionMetrics, SentimentError> {
        if self.total() == 0 {
            return Err(SentimentError::EmptyMatrix);
        }
        let r = |num, den| Ratio { num, den };
        Ok(ConfusionMetrics {
            accuracy: r(self.tp + self.tn, self.total()),
            precision: r(self.tp, self.tp + self.fp),
            recall: r(self.tp, self.tp + self.fn_),
            specificity: r(self.tn, self.tn + self.fp),
            npv: r(self.tn, self.tn + self.fn_),
        })
    }

    /// `metric,numerator,denominator,value` plus the raw counts.
    pub fn to_csv(&self) -> Result<String, SentimentError> {
        let m = self.metrics()?;
        let mut out = format!(
            "actual,predicted_positive,predicted_negative\npositive,{},{}\nnegative,{},{}\n\n",
            self.tp, self.fn_, self.fp, self.tn
        );
        out.push_str("metric,numerator,denominator,value\n");
        for (name, ratio) in [
            ("accuracy", m.accuracy),
            ("precision", m.precision),
            ("recall", m.recall),
            ("specificity", m.specificity),
            ("npv", m.npv),
        ] {
            let value = ratio.value().map_or("undefined".to_string(), |v| format!("{v:.6}"));
            out.push_str(&format!("{name},{},{},{value}\n", ratio.num, ratio.den));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier() {
        let m = ConfusionMatrix::new(10, 0, 0, 10).metrics().unwrap();
        for r in [m.accuracy, m.precision, m.recall, m.specificity, m.npv] {
            assert_eq!(r.value(), Some(1.0));
        }
    }

    #[test]
    fn undefined_npv() {
        let m = ConfusionMatrix::new(10, 0, 10, 0).metrics().unwrap();
        assert!(!m.npv.is_defined());
        assert_eq!(m.npv.percent(1), "undefined");
        assert_eq!(m.precision.value(), Some(0.5));
    }

    #[test]
    fn empty_matrix() {
        assert_eq!(
            ConfusionMatrix::default().metrics().unwrap_err(),
            SentimentError::EmptyMatrix
        );
    }

    #[test]
    fn from_pairs_orientation() {
        let cm = ConfusionMatrix::from_pairs([(true, true), (true, false), (false, true), (false, false), (false, false)]);
        assert_eq!(cm, ConfusionMatrix::new(1, 1, 1, 2));
    }
}
