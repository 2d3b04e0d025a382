use super::{SentimentError, SentimentModel};
use crate::rng::seeded;
use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Largest feature count solved by full coalition enumeration.
pub const EXACT_MAX_FEATURES: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapValues {
    pub base_value: f64,
    pub phi: Vec<f64>,
    pub model_output: f64,
    pub exact: bool,
}

impl ShapValues {
    /// `|phi_0 + sum(phi) - f(x)|`.
    pub fn local_accuracy_gap(&self) -> f64 {
        (self.base_value + self.phi.iter().sum::<f64>() - self.model_output).abs()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight of a single coalition of size `s`.
fn kernel_weight(m: usize, s: usize) -> f64 {
    (m - 1) as f64 / (binomial(m, s) * s as f64 * (m - s) as f64)
}

/// Kernel SHAP over `m` features. `value(mask)` evaluates the model with
/// features where `mask[i]` is false set to their background.
///
/// Up to [`EXACT_MAX_FEATURES`] features every coalition is enumerated;
/// beyond that `n_samples` model evaluations are spent, the empty and full
/// coalitions included, on coalitions drawn from the kernel in
/// complementary pairs.
pub fn kernel_shap<F: FnMut(&[bool]) -> f64>(
    m: usize,
    mut value: F,
    n_samples: usize,
    seed: u64,
) -> Result<ShapValues, SentimentError> {
    if m == 0 {
        return Err(SentimentError::NoFeatures);
    }
    let base_value = value(&vec![false; m]);
    let model_output = value(&vec![true; m]);
    let delta = model_output - base_value;
    let exact = m <= EXACT_MAX_FEATURES;
    if m == 1 {
        return Ok(ShapValues {
            base_value,
            phi: vec![delta],
            model_output,
            exact: true,
        });
    }

    // (mask, weight) pairs, excluding empty and full coalitions
    let mut coalitions: Vec<(Vec<bool>, f64)> = Vec::new();
    if exact {
        for bits in 1u32..(1 << m) - 1 {
            let mask: Vec<bool> = (0..m).map(|i| bits >> i & 1 == 1).collect();
            let s = bits.count_ones() as usize;
            coalitions.push((mask, kernel_weight(m, s)));
        }
    } else {
        if n_samples < 4 {
            return Err(SentimentError::InvalidSettings("n_samples must be at least 4".into()));
        }
        let mut rng = seeded(seed);
        let sizes: Vec<usize> = (1..m).collect();
        let size_dist = WeightedIndex::new(sizes.iter().map(|&s| {
            (m - 1) as f64 / (s * (m - s)) as f64
        }))
        .expect("positive weights");
        let budget = n_samples - 2;
        while coalitions.len() < budget {
            let s = sizes[size_dist.sample(&mut rng)];
            let mut mask = vec![false; m];
            for i in sample(&mut rng, m, s) {
                mask[i] = true;
            }
            let complement: Vec<bool> = mask.iter().map(|b| !b).collect();
            coalitions.push((mask, 1.0));
            if coalitions.len() < budget {
                coalitions.push((complement, 1.0));
            }
        }
    }

    // eliminate the efficiency constraint through the last feature
    let last = m - 1;
    let rows = coalitions.len();
    let mut a = DMatrix::<f64>::zeros(rows, last);
    let mut b = DVector::<f64>::zeros(rows);
    for (r, (mask, w)) in coalitions.iter().enumerate() {
        let sw = w.sqrt();
        let z_last = if mask[last] { 1.0 } else { 0.0 };
        for i in 0..last {
            let z = if mask[i] { 1.0 } else { 0.0 };
            a[(r, i)] = sw * (z - z_last);
        }
        b[r] = sw * (value(mask) - base_value - z_last * delta);
    }
    let solution = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| SentimentError::Solve(e.to_string()))?;
    let mut phi: Vec<f64> = solution.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());
    Ok(ShapValues {
        base_value,
        phi,
        model_output,
        exact,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub doc_id: String,
    pub base_value: f64,
    pub attributions: BTreeMap<String, f64>,
    pub model_output: f64,
    pub exact: bool,
}

/// Explains one document; features are its distinct tokens known to the
/// model, and a masked feature has count 0.
pub fn explain_document(
    model: &SentimentModel,
    doc_id: &str,
    tokens: &[String],
    n_samples: usize,
    seed: u64,
) -> Result<ShapExplanation, SentimentError> {
    let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
    for t in tokens.iter().filter(|t| model.weights.contains_key(t.as_str())) {
        *counts.entry(t.as_str()).or_insert(0.0) += 1.0;
    }
    let features: Vec<(&str, f64)> = counts.into_iter().collect();
    let values = kernel_shap(
        features.len(),
        |mask| {
            model.predict_counts(
                features
                    .iter()
                    .zip(mask)
                    .filter(|(_, &on)| on)
                    .map(|(&(t, c), _)| (t, c)),
            )
        },
        n_samples,
        seed,
    )?;
    Ok(ShapExplanation {
        doc_id: doc_id.to_string(),
        base_value: values.base_value,
        attributions: features
            .iter()
            .map(|(t, _)| t.to_string())
            .zip(values.phi)
            .collect(),
        model_output: values.model_output,
        exact: values.exact,
    })
}

/// Sums `max(0, -phi)` per term; ranked by weight descending, then term.
/// Terms that never push towards the negative label are dropped.
pub fn aggregate_negative_terms(explanations: &[ShapExplanation]) -> Vec<(String, f64)> {
    let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
    for e in explanations {
        for (term, &phi) in &e.attributions {
            if phi < 0.0 {
                *totals.entry(term.as_str()).or_insert(0.0) -= phi;
            }
        }
    }
    let mut ranked: Vec<(String, f64)> = totals
        .into_iter()
        .map(|(t, w)| (t.to_string(), w))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

pub fn word_cloud_csv(terms: &[(String, f64)]) -> String {
    let mut out = String::from("term,weight\n");
    for (term, weight) in terms {
        out.push_str(&crate::csvfmt::row([term.clone(), format!("{weight:.6}")]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_model_is_null() {
        let v = kernel_shap(5, |_| 0.7, 0, 0).unwrap();
        assert!((v.base_value - 0.7).abs() < 1e-15);
        assert!(v.phi.iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn additive_closed_form() {
        let w = [0.5, -1.0, 2.0, 0.25, -0.75];
        let v = kernel_shap(5, |mask| mask.iter().zip(&w).filter(|(&on, _)| on).map(|(_, w)| w).sum(), 0, 0)
            .unwrap();
        for (p, w) in v.phi.iter().zip(&w) {
            assert!((p - w).abs() < 1e-10);
        }
        assert!(v.local_accuracy_gap() < 1e-12);
    }

    #[test]
    fn no_features() {
        assert_eq!(kernel_shap(0, |_| 1.0, 10, 0).unwrap_err(), SentimentError::NoFeatures);
    }

    #[test]
    fn aggregation() {
        let e = ShapExplanation {
            doc_id: "d".into(),
            base_value: 0.5,
            attributions: [("challenging".to_string(), -0.4), ("fine".to_string(), 0.2)]
                .into_iter()
                .collect(),
            model_output: 0.3,
            exact: true,
        };
        assert_eq!(aggregate_negative_terms(&[e]), vec![("challenging".to_string(), 0.4)]);
        assert!(aggregate_negative_terms(&[]).is_empty());
    }
}
