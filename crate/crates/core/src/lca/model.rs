use super::{LcaError, SurveyDataset};
use crate::distribution::{AssignmentMode, GroupDistribution};
use crate::hashing::derive_seed;
use crate::rng::seeded;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Bounds applied to every response probability after the M-step.
pub const RHO_FLOOR: f64 = 1e-6;
pub const RHO_CEIL: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcaConfig {
    pub classes: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop once the log-likelihood gain of an iteration falls below this.
    pub tolerance: f64,
}

impl LcaConfig {
    pub fn new(classes: usize, seed: u64) -> Self {
        LcaConfig {
            classes,
            seed,
            max_iterations: 1000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentClassModel {
    pub indicators: Vec<String>,
    pub pi: Vec<f64>,
    /// `rho[k][j] = P(indicator j = 1 | class k)`.
    pub rho: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood before the first M-step and after each one.
    pub trace: Vec<f64>,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log pi`, `log rho` and `log (1 - rho)`, computed once per E-step.
struct LogParams {
    pi: Vec<f64>,
    on: Vec<Vec<f64>>,
    off: Vec<Vec<f64>>,
}

impl LogParams {
    fn new(pi: &[f64], rho: &[Vec<f64>]) -> Self {
        LogParams {
            pi: pi.iter().map(|p| p.ln()).collect(),
            on: rho.iter().map(|r| r.iter().map(|q| q.ln()).collect()).collect(),
            off: rho.iter().map(|r| r.iter().map(|q| (1.0 - q).ln()).collect()).collect(),
        }
    }

    /// Joint log-densities `log pi_k + log P(x | k)` of one respondent.
    fn joint(&self, row: &[Option<bool>]) -> Vec<f64> {
        (0..self.pi.len())
            .map(|k| {
                let (on, off) = (&self.on[k], &self.off[k]);
                let mut acc = self.pi[k];
                for (j, x) in row.iter().enumerate() {
                    match x {
                        Some(true) => acc += on[j],
                        Some(false) => acc += off[j],
                        None => {}
                    }
                }
                acc
            })
            .collect()
    }
}

/// Posterior responsibilities and log-likelihood of every respondent.
fn e_step(pi: &[f64], rho: &[Vec<f64>], data: &SurveyDataset) -> (Vec<Vec<f64>>, f64) {
    let logs = LogParams::new(pi, rho);
    let mut total = 0.0;
    let tau = data
        .values
        .iter()
        .map(|row| {
            let joint = logs.joint(row);
            let norm = log_sum_exp(&joint);
            total += norm;
            joint.iter().map(|l| (l - norm).exp()).collect()
        })
        .collect();
    (tau, total)
}

fn m_step(tau: &[Vec<f64>], data: &SurveyDataset, pi: &mut [f64], rho: &mut [Vec<f64>]) {
    let n = tau.len() as f64;
    for k in 0..pi.len() {
        pi[k] = tau.iter().map(|t| t[k]).sum::<f64>() / n;
        for j in 0..data.items() {
            let (mut num, mut den) = (0.0, 0.0);
            for (t, row) in tau.iter().zip(&data.values) {
                if let Some(x) = row[j] {
                    den += t[k];
                    if x {
                        num += t[k];
                    }
                }
            }
            // with no observed weight the previous value is already optimal
            if den > 0.0 {
                rho[k][j] = (num / den).clamp(RHO_FLOOR, RHO_CEIL);
            }
        }
    }
}

fn validate(data: &SurveyDataset, classes: usize) -> Result<(), LcaError> {
    if data.respondents() == 0 || data.items() == 0 {
        return Err(LcaError::DegenerateData);
    }
    if classes == 0 || classes > data.respondents() {
        return Err(LcaError::InvalidClassCount {
            classes,
            respondents: data.respondents(),
        });
    }
    Ok(())
}

/// EM for a mixture of independent Bernoulli indicators. Missing entries
/// are skipped in both steps.
pub fn lca_fit(data: &SurveyDataset, config: &LcaConfig) -> Result<LatentClassModel, LcaError> {
    validate(data, config.classes)?;
    let k = config.classes;
    let mut rng = seeded(config.seed);
    let means = data.indicator_means();
    let mut pi = vec![1.0 / k as f64; k];
    let mut rho: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            means
                .iter()
                .map(|m| {
                    if k == 1 {
                        m.clamp(RHO_FLOOR, RHO_CEIL)
                    } else {
                        (m + rng.gen_range(-0.25..0.25)).clamp(0.01, 0.99)
                    }
                })
                .collect()
        })
        .collect();
    let (mut tau, mut ll) = e_step(&pi, &rho, data);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        m_step(&tau, data, &mut pi, &mut rho);
        let (next_tau, next_ll) = e_step(&pi, &rho, data);
        iterations += 1;
        trace.push(next_ll);
        tau = next_tau;
        let gain = next_ll - ll;
        ll = next_ll;
        if gain < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(LatentClassModel {
        indicators: data.indicators.clone(),
        pi,
        rho,
        log_likelihood: ll,
        seed: config.seed,
        iterations,
        converged,
        trace,
    })
}

impl LatentClassModel {
    pub fn classes(&self) -> usize {
        self.pi.len()
    }

    pub fn parameters(&self) -> usize {
        (self.classes() - 1) + self.classes() * self.indicators.len()
    }

    pub fn bic(&self, respondents: usize) -> f64 {
        -2.0 * self.log_likelihood + self.parameters() as f64 * (respondents as f64).ln()
    }

    /// Observed-data log-likelihood of `data` under this model.
    pub fn evaluate(&self, data: &SurveyDataset) -> f64 {
        e_step(&self.pi, &self.rho, data).1
    }

    /// Posterior class probabilities; an all-missing row returns `pi`.
    pub fn posterior(&self, row: &[Option<bool>]) -> Vec<f64> {
        let joint = LogParams::new(&self.pi, &self.rho).joint(row);
        let norm = log_sum_exp(&joint);
        joint.iter().map(|l| (l - norm).exp()).collect()
    }

    /// Modal class, ties to the lowest index.
    pub fn hard_class(&self, row: &[Option<bool>]) -> usize {
        let post = self.posterior(row);
        let mut best = 0;
        for (k, &p) in post.iter().enumerate() {
            if p > post[best] {
                best = k;
            }
        }
        best
    }

    pub fn assign(&self, data: &SurveyDataset) -> Vec<usize> {
        data.values.iter().map(|row| self.hard_class(row)).collect()
    }

    /// Relabels classes: new class `c` is old class `order[c]`.
    pub fn permuted(&self, order: &[usize]) -> LatentClassModel {
        LatentClassModel {
            pi: order.iter().map(|&k| self.pi[k]).collect(),
            rho: order.iter().map(|&k| self.rho[k].clone()).collect(),
            ..self.clone()
        }
    }

    /// Measurement model as `variable,0,..,K-1`, rows sorted by variable.
    pub fn measurement_csv(&self) -> String {
        let mut out = String::from("variable");
        for k in 0..self.classes() {
            out.push_str(&format!(",{k}"));
        }
        out.push('\n');
        let mut order: Vec<usize> = (0..self.indicators.len()).collect();
        order.sort_by(|&a, &b| self.indicators[a].cmp(&self.indicators[b]));
        for j in order {
            out.push_str(&crate::csvfmt::field(&self.indicators[j]));
            for k in 0..self.classes() {
                out.push_str(&format!(",{:.6}", self.rho[k][j]));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

/// Posterior class membership of one respondent row.
pub fn posterior_membership(model: &LatentClassModel, row: &[Option<bool>]) -> Vec<f64> {
    model.posterior(row)
}

#[derive(Debug, Clone, Serialize)]
pub struct Selection {
    pub best_k: usize,
    /// Best restart for each K, in the order of the requested range.
    pub models: Vec<LatentClassModel>,
    pub bic: Vec<(usize, f64)>,
}

/// Fits every K with `restarts` seeded EM runs, keeps the highest
/// log-likelihood per K and picks the K with the lowest BIC.
pub fn lca_select_k(
    data: &SurveyDataset,
    k_range: &[usize],
    restarts: usize,
    seed: u64,
) -> Result<Selection, LcaError> {
    if k_range.is_empty() || restarts == 0 {
        return Err(LcaError::InvalidClassCount {
            classes: 0,
            respondents: data.respondents(),
        });
    }
    let jobs: Vec<(usize, usize)> = k_range
        .iter()
        .flat_map(|&k| (0..restarts).map(move |r| (k, r)))
        .collect();
    let fits: Vec<LatentClassModel> = jobs
        .par_iter()
        .map(|&(k, r)| lca_fit(data, &LcaConfig::new(k, derive_seed(seed, &format!("lca-k{k}-r{r}")))))
        .collect::<Result<_, _>>()?;
    let mut models = Vec::new();
    for chunk in fits.chunks(restarts) {
        let mut best = &chunk[0];
        for m in &chunk[1..] {
            if m.log_likelihood > best.log_likelihood {
                best = m;
            }
        }
        models.push(best.clone());
    }
    let n = data.respondents();
    let bic: Vec<(usize, f64)> = models.iter().map(|m| (m.classes(), m.bic(n))).collect();
    let best_k = bic
        .iter()
        .fold(None::<(usize, f64)>, |best, &(k, b)| match best {
            Some((_, bb)) if bb <= b => best,
            _ => Some((k, b)),
        })
        .map(|(k, _)| k)
        .expect("nonempty range");
    Ok(Selection {
        best_k,
        models,
        bic,
    })
}

/// Per-group class percentages, from modal classes or summed posteriors.
pub fn group_class_distribution(
    model: &LatentClassModel,
    data: &SurveyDataset,
    mode: AssignmentMode,
) -> Result<GroupDistribution, LcaError> {
    if let Some(i) = data.groups.iter().position(|g| g.is_empty()) {
        return Err(LcaError::UnknownGroup(data.ids[i].clone()));
    }
    match mode {
        AssignmentMode::Hard => {
            let groups: HashMap<String, String> =
                data.ids.iter().cloned().zip(data.groups.iter().cloned()).collect();
            let classes = model.assign(data);
            GroupDistribution::from_assignments(
                data.ids.iter().map(String::as_str).zip(classes),
                &groups,
                model.classes(),
            )
            .map_err(|e| LcaError::UnknownGroup(e.to_string()))
        }
        AssignmentMode::Soft => {
            let posts: Vec<Vec<f64>> = data.values.iter().map(|r| model.posterior(r)).collect();
            Ok(GroupDistribution::from_weights(
                data.groups.iter().map(String::as_str).zip(posts.iter().map(Vec::as_slice)),
                model.classes(),
            ))
        }
    }
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let pairs = |n: f64| n * (n - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&n| pairs(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| pairs(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| pairs(n)).sum();
    let total = pairs(a.len() as f64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(rows: Vec<Vec<Option<bool>>>, groups: &[&str]) -> SurveyDataset {
        let n = rows.len();
        SurveyDataset {
            ids: (0..n).map(|i| format!("r{i}")).collect(),
            groups: groups.iter().map(|g| g.to_string()).collect(),
            indicators: (0..rows[0].len()).map(|j| format!("x_{j}")).collect(),
            values: rows,
        }
    }

    fn b(bits: &[u8]) -> Vec<Option<bool>> {
        bits.iter().map(|&x| Some(x == 1)).collect()
    }

    #[test]
    fn single_class_is_empirical_mean() {
        let data = dataset(vec![b(&[1, 0]), b(&[1, 1]), b(&[0, 1]), b(&[1, 1])], &["a"; 4]);
        let m = lca_fit(&data, &LcaConfig::new(1, 0)).unwrap();
        assert_eq!(m.pi, vec![1.0]);
        assert!((m.rho[0][0] - 0.75).abs() < 1e-12);
        assert!((m.rho[0][1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn identical_respondents_gain_nothing() {
        let data = dataset(vec![b(&[1, 0, 1]); 6], &["a"; 6]);
        let one = lca_fit(&data, &LcaConfig::new(1, 0)).unwrap();
        let two = lca_fit(&data, &LcaConfig::new(2, 5)).unwrap();
        assert!((one.log_likelihood - two.log_likelihood).abs() < 1e-6);
    }

    #[test]
    fn all_missing_gets_prior() {
        let data = dataset(vec![b(&[1, 0]), b(&[0, 1]), b(&[1, 1])], &["a"; 3]);
        let m = lca_fit(&data, &LcaConfig::new(2, 1)).unwrap();
        let post = m.posterior(&[None, None]);
        for (p, q) in post.iter().zip(&m.pi) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let empty = SurveyDataset {
            ids: vec![],
            groups: vec![],
            indicators: vec!["x".into()],
            values: vec![],
        };
        assert_eq!(lca_fit(&empty, &LcaConfig::new(1, 0)), Err(LcaError::DegenerateData));
        let data = dataset(vec![b(&[1])], &["a"]);
        assert!(matches!(
            lca_fit(&data, &LcaConfig::new(2, 0)),
            Err(LcaError::InvalidClassCount { .. })
        ));
    }

    #[test]
    fn hard_group_distribution() {
        let model = LatentClassModel {
            indicators: vec!["x_0".into()],
            pi: vec![0.5, 0.5],
            rho: vec![vec![0.9], vec![0.1]],
            log_likelihood: 0.0,
            seed: 0,
            iterations: 0,
            converged: true,
            trace: vec![],
        };
        let data = dataset(vec![b(&[1]), b(&[0]), b(&[1]), b(&[1])], &["A", "A", "B", "B"]);
        let dist = group_class_distribution(&model, &data, AssignmentMode::Hard).unwrap();
        assert_eq!(dist.percentages("A").unwrap(), &[50.0, 50.0]);
        assert_eq!(dist.percentages("B").unwrap(), &[100.0, 0.0]);
    }

    #[test]
    fn ari_bounds() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
    }
}
