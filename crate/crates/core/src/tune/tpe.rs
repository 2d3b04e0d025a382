use super::{ParamConfig, ParamSpec, SearchSpace, TuneError};
use crate::hashing::derive_seed;
use crate::rng::seeded;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt::Display;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TpeSettings {
    /// Fraction of the history treated as "good".
    pub gamma: f64,
    pub candidates: usize,
    /// Trials drawn uniformly before the density models kick in.
    pub startup: usize,
}

impl Default for TpeSettings {
    fn default() -> Self {
        TpeSettings {
            gamma: 0.25,
            candidates: 24,
            startup: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: ParamConfig,
    /// `None` when the objective failed; failed trials never shape the densities.
    pub objective: Option<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: Trial,
    pub history: Vec<Trial>,
}

fn uniform_sample<R: Rng>(space: &SearchSpace, rng: &mut R) -> ParamConfig {
    space
        .params
        .iter()
        .map(|p| (p.name.clone(), p.value(rng.gen_range(0..p.levels()))))
        .collect()
}

/// Truncated Gaussian mixture over `[lo, hi]` for a continuous parameter.
struct Parzen {
    centers: Vec<f64>,
    sigma: f64,
    lo: f64,
    hi: f64,
    mass: Vec<f64>,
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

impl Parzen {
    fn new(spec: &ParamSpec, centers: Vec<f64>) -> Self {
        let range = spec.hi - spec.lo;
        let sigma = spec.step.max(range / (centers.len() as f64).sqrt());
        let mass = centers
            .iter()
            .map(|&c| {
                (normal_cdf((spec.hi - c) / sigma) - normal_cdf((spec.lo - c) / sigma)).max(1e-300)
            })
            .collect();
        Parzen {
            centers,
            sigma,
            lo: spec.lo,
            hi: spec.hi,
            mass,
        }
    }

    fn log_pdf(&self, x: f64) -> f64 {
        let norm = 1.0 / (self.sigma * (2.0 * std::f64::consts::PI).sqrt());
        let density: f64 = self
            .centers
            .iter()
            .zip(&self.mass)
            .map(|(&c, &m)| {
                let z = (x - c) / self.sigma;
                norm * (-0.5 * z * z).exp() / m
            })
            .sum::<f64>()
            / self.centers.len() as f64;
        density.max(1e-300).ln()
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let c = self.centers[rng.gen_range(0..self.centers.len())];
        for _ in 0..64 {
            let z: f64 = StandardNormal.sample(rng);
            let x = c + self.sigma * z;
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
        c.clamp(self.lo, self.hi)
    }
}

/// Add-one smoothed categorical density over grid indices.
struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    fn new(levels: usize, observed: impl Iterator<Item = usize>) -> Self {
        let mut counts = vec![1.0; levels];
        for k in observed {
            counts[k] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        Categorical {
            probs: counts.into_iter().map(|c| c / total).collect(),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let mut u = rng.gen::<f64>();
        for (k, &p) in self.probs.iter().enumerate() {
            if u < p {
                return k;
            }
            u -= p;
        }
        self.probs.len() - 1
    }
}

pub fn tpe_suggest(
    history: &[Trial],
    space: &SearchSpace,
    seed: u64,
) -> Result<ParamConfig, TuneError> {
    tpe_suggest_with(history, space, seed, &TpeSettings::default())
}

/// Next configuration to evaluate; pure in `(history, space, seed)`.
///
/// Objectives are maximized. Each parameter is modelled independently:
/// candidates are drawn from the good-set density `l` and the one with the
/// largest `l(x) / g(x)` wins.
pub fn tpe_suggest_with(
    history: &[Trial],
    space: &SearchSpace,
    seed: u64,
    settings: &TpeSettings,
) -> Result<ParamConfig, TuneError> {
    space.validate()?;
    let mut rng = seeded(seed);
    let mut scored: Vec<(&ParamConfig, f64)> = history
        .iter()
        .filter_map(|t| match t.objective {
            Some(v) if v.is_finite() => Some((&t.config, v)),
            _ => None,
        })
        .collect();
    if scored.len() < settings.startup.max(2) {
        return Ok(uniform_sample(space, &mut rng));
    }
    // stable sort keeps history order among equal objectives
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite objectives"));
    let n_good = ((settings.gamma * scored.len() as f64).ceil() as usize).clamp(1, scored.len() - 1);
    let (good, bad) = scored.split_at(n_good);

    let mut out = ParamConfig::new();
    for spec in &space.params {
        let values = |set: &[(&ParamConfig, f64)]| -> Vec<f64> {
            set.iter()
                .filter_map(|(c, _)| c.get(&spec.name).copied())
                .collect()
        };
        let (good_vals, bad_vals) = (values(good), values(bad));
        let value = if good_vals.is_empty() || bad_vals.is_empty() {
            spec.value(rng.gen_range(0..spec.levels()))
        } else if spec.kind.is_discrete() {
            let l = Categorical::new(spec.levels(), good_vals.iter().map(|&v| spec.nearest_index(v)));
            let g = Categorical::new(spec.levels(), bad_vals.iter().map(|&v| spec.nearest_index(v)));
            let best = (0..settings.candidates.max(1))
                .map(|_| l.sample(&mut rng))
                .map(|k| (k, l.probs[k].ln() - g.probs[k].ln()))
                .fold(None::<(usize, f64)>, |acc, c| match acc {
                    Some(a) if a.1 >= c.1 => Some(a),
                    _ => Some(c),
                })
                .expect("at least one candidate");
            spec.value(best.0)
        } else {
            let l = Parzen::new(spec, good_vals);
            let g = Parzen::new(spec, bad_vals);
            let best = (0..settings.candidates.max(1))
                .map(|_| spec.quantize(l.sample(&mut rng)))
                .map(|x| (x, l.log_pdf(x) - g.log_pdf(x)))
                .fold(None::<(f64, f64)>, |acc, c| match acc {
                    Some(a) if a.1 >= c.1 => Some(a),
                    _ => Some(c),
                })
                .expect("at least one candidate");
            best.0
        };
        out.insert(spec.name.clone(), value);
    }
    Ok(out)
}

pub fn optimize<F, E>(
    objective: F,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
) -> Result<TuneOutcome, TuneError>
where
    F: FnMut(&ParamConfig, u64) -> Result<f64, E>,
    E: Display,
{
    optimize_with(objective, space, n_trials, seed, &TpeSettings::default())
}

/// Sequential TPE search. The objective receives the configuration and the
/// trial's derived seed; errors and non-finite values become failed trials.
pub fn optimize_with<F, E>(
    objective: F,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
    settings: &TpeSettings,
) -> Result<TuneOutcome, TuneError>
where
    F: FnMut(&ParamConfig, u64) -> Result<f64, E>,
    E: Display,
{
    run_trials(objective, space, n_trials, seed, |history, trial_seed| {
        tpe_suggest_with(history, space, trial_seed, settings)
    })
}

/// Uniform random search with the same trial bookkeeping as [`optimize`].
pub fn random_search<F, E>(
    objective: F,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
) -> Result<TuneOutcome, TuneError>
where
    F: FnMut(&ParamConfig, u64) -> Result<f64, E>,
    E: Display,
{
    space.validate()?;
    run_trials(objective, space, n_trials, seed, |_, trial_seed| {
        Ok(uniform_sample(space, &mut seeded(trial_seed)))
    })
}

fn run_trials<F, E, S>(
    mut objective: F,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
    mut suggest: S,
) -> Result<TuneOutcome, TuneError>
where
    F: FnMut(&ParamConfig, u64) -> Result<f64, E>,
    E: Display,
    S: FnMut(&[Trial], u64) -> Result<ParamConfig, TuneError>,
{
    space.validate()?;
    if n_trials == 0 {
        return Err(TuneError::NoTrials);
    }
    let mut history: Vec<Trial> = Vec::with_capacity(n_trials);
    for index in 0..n_trials {
        let trial_seed = derive_seed(seed, &format!("trial-{index}"));
        let config = suggest(&history, trial_seed)?;
        let (objective_value, error) = match objective(&config, trial_seed) {
            Ok(v) if v.is_finite() => (Some(v), None),
            Ok(v) => (None, Some(format!("non-finite objective {v}"))),
            Err(e) => (None, Some(e.to_string())),
        };
        history.push(Trial {
            index,
            config,
            objective: objective_value,
            seed: trial_seed,
            error,
        });
    }
    let best = history
        .iter()
        .filter(|t| t.objective.is_some())
        .fold(None::<&Trial>, |acc, t| match acc {
            Some(b) if b.objective >= t.objective => Some(b),
            _ => Some(t),
        })
        .cloned()
        .ok_or(TuneError::AllTrialsFailed(n_trials))?;
    Ok(TuneOutcome { best, history })
}

/// `index,<params...>,objective` with an empty objective for failed trials.
pub fn trials_csv(space: &SearchSpace, history: &[Trial]) -> String {
    let mut out = String::from("index");
    for p in &space.params {
        out.push(',');
        out.push_str(&crate::csvfmt::field(&p.name));
    }
    out.push_str(",objective\n");
    for t in history {
        out.push_str(&t.index.to_string());
        for p in &space.params {
            out.push_str(&format!(",{}", t.config.get(&p.name).copied().unwrap_or(f64::NAN)));
        }
        match t.objective {
            Some(v) => out.push_str(&format!(",{v}\n")),
            None => out.push_str(",\n"),
        }
    }
    out
}
