use super::SentimentError;
use crate::corpus::SentimentLabel;
use crate::rng::seeded;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub max_epochs: usize,
    /// Fixed step size; `None` uses the inverse of a Lipschitz bound on the
    /// gradient, which guarantees descent.
    pub learning_rate: Option<f64>,
    pub l2: f64,
    /// Stop once every gradient component is below this in magnitude.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            max_epochs: 200_000,
            learning_rate: None,
            l2: 0.01,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

/// L2-regularized mean cross-entropy of a logistic model over sparse count
/// vectors. Parameters are laid out as `[w_0, .., w_{d-1}, bias]`; the bias
/// is not penalized.
#[derive(Debug, Clone)]
pub struct Objective {
    rows: Vec<Vec<(usize, f64)>>,
    targets: Vec<f64>,
    dims: usize,
    l2: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Keeps probabilities strictly inside (0, 1) for extreme margins.
fn open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl Objective {
    pub fn new(rows: Vec<Vec<(usize, f64)>>, targets: Vec<f64>, dims: usize, l2: f64) -> Self {
        Objective {
            rows,
            targets,
            dims,
            l2,
        }
    }

    pub fn parameters(&self) -> usize {
        self.dims + 1
    }

    fn margin(&self, row: &[(usize, f64)], params: &[f64]) -> f64 {
        params[self.dims] + row.iter().map(|&(j, x)| params[j] * x).sum::<f64>()
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let n = self.rows.len() as f64;
        let data: f64 = self
            .rows
            .iter()
            .zip(&self.targets)
            .map(|(row, &y)| {
                let z = self.margin(row, params);
                softplus(z) - y * z
            })
            .sum();
        let penalty: f64 = params[..self.dims].iter().map(|w| w * w).sum();
        data / n + 0.5 * self.l2 * penalty
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let n = self.rows.len() as f64;
        let mut grad = vec![0.0; self.parameters()];
        for (row, &y) in self.rows.iter().zip(&self.targets) {
            let r = (sigmoid(self.margin(row, params)) - y) / n;
            for &(j, x) in row {
                grad[j] += r * x;
            }
            grad[self.dims] += r;
        }
        for j in 0..self.dims {
            grad[j] += self.l2 * params[j];
        }
        grad
    }

    /// Upper bound on the gradient's Lipschitz constant.
    pub fn lipschitz_bound(&self) -> f64 {
        let max_norm = self
            .rows
            .iter()
            .map(|row| 1.0 + row.iter().map(|&(_, x)| x * x).sum::<f64>())
            .fold(0.0, f64::max);
        0.25 * max_norm + self.l2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentModel {
    pub weights: BTreeMap<String, f64>,
    pub bias: f64,
    pub settings: TrainSettings,
    pub epochs_run: usize,
    /// Largest gradient component at the returned parameters.
    pub final_gradient: f64,
}

fn counts(tokens: &[String]) -> BTreeMap<&str, f64> {
    let mut out = BTreeMap::new();
    for t in tokens {
        *out.entry(t.as_str()).or_insert(0.0) += 1.0;
    }
    out
}

impl SentimentModel {
    /// Builds the training objective and the feature vocabulary it indexes.
    pub fn objective(
        examples: &[(Vec<String>, SentimentLabel)],
        l2: f64,
    ) -> (Objective, Vec<String>) {
        let terms: Vec<String> = examples
            .iter()
            .flat_map(|(tokens, _)| tokens.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<&str, usize> =
            terms.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let rows = examples
            .iter()
            .map(|(tokens, _)| counts(tokens).into_iter().map(|(t, c)| (index[t], c)).collect())
            .collect();
        let targets = examples
            .iter()
            .map(|(_, label)| if label.is_positive() { 1.0 } else { 0.0 })
            .collect();
        (Objective::new(rows, targets, terms.len(), l2), terms)
    }

    pub fn train(
        examples: &[(Vec<String>, SentimentLabel)],
        settings: &TrainSettings,
    ) -> Result<Self, SentimentError> {
        let positives = examples.iter().filter(|(_, l)| l.is_positive()).count();
        if positives == 0 || positives == examples.len() {
            return Err(SentimentError::SingleClassData);
        }
        if !(settings.l2 >= 0.0 && settings.tolerance > 0.0) {
            return Err(SentimentError::InvalidSettings("l2 must be >= 0 and tolerance > 0".into()));
        }
        let (objective, terms) = Self::objective(examples, settings.l2);
        let step = match settings.learning_rate {
            Some(lr) if lr > 0.0 => lr,
            Some(_) => return Err(SentimentError::InvalidSettings("learning rate must be positive".into())),
            None => 1.0 / objective.lipschitz_bound(),
        };
        let mut params = vec![0.0; objective.parameters()];
        let mut grad = objective.gradient(&params);
        let mut epochs = 0;
        let max_abs = |g: &[f64]| g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        while epochs < settings.max_epochs && max_abs(&grad) >= settings.tolerance {
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= step * g;
            }
            grad = objective.gradient(&params);
            epochs += 1;
        }
        let bias = params[terms.len()];
        Ok(SentimentModel {
            weights: terms.into_iter().zip(params).collect(),
            bias,
            settings: settings.clone(),
            epochs_run: epochs,
            final_gradient: max_abs(&grad),
        })
    }

    pub fn weight(&self, term: &str) -> f64 {
        self.weights.get(term).copied().unwrap_or(0.0)
    }

    /// Probability of the positive label.
    pub fn predict(&self, tokens: &[String]) -> f64 {
        open_unit(sigmoid(self.bias + tokens.iter().map(|t| self.weight(t)).sum::<f64>()))
    }

    /// Probability from explicit term counts.
    pub fn predict_counts<'a>(&self, counts: impl IntoIterator<Item = (&'a str, f64)>) -> f64 {
        open_unit(sigmoid(
            self.bias + counts.into_iter().map(|(t, c)| self.weight(t) * c).sum::<f64>(),
        ))
    }

    pub fn predict_label(&self, tokens: &[String]) -> SentimentLabel {
        if self.predict(tokens) >= 0.5 {
            SentimentLabel::Positive
        } else {
            SentimentLabel::Negative
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Seeded stratified split of indices; each label contributes
/// `round(train_fraction * count)` items to the training side.
pub fn stratified_split(
    labels: &[SentimentLabel],
    train_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seeded(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for label in [SentimentLabel::Positive, SentimentLabel::Negative] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        idx.shuffle(&mut rng);
        let cut = ((train_fraction * idx.len() as f64).round() as usize).min(idx.len());
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use SentimentLabel::{Negative, Positive};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn toy() -> Vec<(Vec<String>, SentimentLabel)> {
        let pos = ["good great", "great nice", "nice good", "good", "great great nice"];
        let neg = ["bad awful", "awful poor", "poor bad", "bad", "awful awful poor"];
        pos.iter()
            .map(|s| (toks(s), Positive))
            .chain(neg.iter().map(|s| (toks(s), Negative)))
            .collect()
    }

    #[test]
    fn separable_toy_fits() {
        let data = toy();
        let model = SentimentModel::train(&data, &TrainSettings::default()).unwrap();
        for (tokens, label) in &data {
            assert_eq!(model.predict_label(tokens), *label);
        }
        assert!(model.final_gradient < 1e-4);
    }

    #[test]
    fn single_class_rejected() {
        let data: Vec<_> = toy().into_iter().filter(|(_, l)| *l == Positive).collect();
        assert_eq!(
            SentimentModel::train(&data, &TrainSettings::default()).unwrap_err(),
            SentimentError::SingleClassData
        );
    }

    #[test]
    fn oov_predicts_bias() {
        let model = SentimentModel::train(&toy(), &TrainSettings::default()).unwrap();
        assert_eq!(model.predict(&toks("unknown words")), sigmoid(model.bias));
        let zero = SentimentModel {
            weights: BTreeMap::new(),
            bias: 0.0,
            settings: TrainSettings::default(),
            epochs_run: 0,
            final_gradient: 0.0,
        };
        assert_eq!(zero.predict(&toks("x y z")), 0.5);
    }

    #[test]
    fn split_is_stratified() {
        let labels: Vec<_> = (0..20).map(|i| if i < 10 { Positive } else { Negative }).collect();
        let (train, test) = stratified_split(&labels, 0.7, 3);
        assert_eq!(train.len(), 14);
        assert_eq!(test.len(), 6);
        assert_eq!(train.iter().filter(|&&i| i < 10).count(), 7);
        assert_eq!(stratified_split(&labels, 0.7, 3), (train, test));
    }

    #[test]
    fn stable_sigmoid() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((softplus(-800.0)).abs() < 1e-300);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
    }
}
