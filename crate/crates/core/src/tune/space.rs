use super::TuneError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Parameter name to value; integers are carried as whole floats.
pub type ParamConfig = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Float,
    Integer,
    Categorical,
}

impl ParamKind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, ParamKind::Float)
    }
}

impl FromStr for ParamKind {
    type Err = TuneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "float" => Ok(ParamKind::Float),
            "integer" | "int" => Ok(ParamKind::Integer),
            "categorical" => Ok(ParamKind::Categorical),
            other => Err(TuneError::InvalidSpace(format!("unknown kind {other:?}"))),
        }
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamKind::Float => "float",
            ParamKind::Integer => "integer",
            ParamKind::Categorical => "categorical",
        })
    }
}

/// A quantized range: admissible values are `lo + k*step <= hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

/// Decimal places needed to print `x` exactly (capped).
fn decimals(x: f64) -> i32 {
    let s = format!("{x}");
    s.split_once('.').map_or(0, |(_, frac)| frac.len().min(12) as i32)
}

impl ParamSpec {
    pub fn new(name: &str, kind: ParamKind, lo: f64, hi: f64, step: f64) -> Self {
        ParamSpec {
            name: name.to_string(),
            kind,
            lo,
            hi,
            step,
        }
    }

    fn validate(&self) -> Result<(), TuneError> {
        let err = |msg: String| Err(TuneError::InvalidSpace(msg));
        if self.name.is_empty() {
            return err("parameter without a name".into());
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.step.is_finite()) {
            return err(format!("{}: non-finite bound or step", self.name));
        }
        if self.lo > self.hi {
            return err(format!("{}: lo > hi", self.name));
        }
        if self.step <= 0.0 {
            return err(format!("{}: step must be positive", self.name));
        }
        Ok(())
    }

    /// Number of grid points.
    pub fn levels(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    /// Grid value at index `k`, rounded to the precision of `lo` and `step`.
    pub fn value(&self, k: usize) -> f64 {
        let places = decimals(self.lo).max(decimals(self.step));
        let scale = 10f64.powi(places);
        ((self.lo + k as f64 * self.step) * scale).round() / scale
    }

    /// Nearest grid index to a raw value, clamped into range.
    pub fn nearest_index(&self, x: f64) -> usize {
        let k = ((x - self.lo) / self.step).round();
        (k.max(0.0) as usize).min(self.levels() - 1)
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.value(self.nearest_index(x))
    }

    pub fn is_quantized(&self, v: f64) -> bool {
        let tol = 1e-9 * self.step.max(1.0);
        if v < self.lo - tol || v > self.hi + tol {
            return false;
        }
        let k = (v - self.lo) / self.step;
        (k - k.round()).abs() < 1e-6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<ParamSpec>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self, TuneError> {
        let space = SearchSpace { params };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), TuneError> {
        if self.params.is_empty() {
            return Err(TuneError::InvalidSpace("no parameters".into()));
        }
        let mut names = std::collections::HashSet::new();
        for p in &self.params {
            p.validate()?;
            if !names.insert(p.name.as_str()) {
                return Err(TuneError::InvalidSpace(format!("duplicate parameter {}", p.name)));
            }
        }
        Ok(())
    }

    /// Biterm model ranges: alpha, beta, topic count, window.
    pub fn btm_default() -> Self {
        SearchSpace {
            params: vec![
                ParamSpec::new("alpha", ParamKind::Float, 0.0, 1.0, 0.1),
                ParamSpec::new("beta", ParamKind::Float, 0.001, 0.1, 0.001),
                ParamSpec::new("topics", ParamKind::Integer, 2.0, 30.0, 1.0),
                ParamSpec::new("window", ParamKind::Integer, 10.0, 20.0, 1.0),
            ],
        }
    }

    /// Anchored CorEx ranges: topic count and anchor strength.
    pub fn corex_default() -> Self {
        SearchSpace {
            params: vec![
                ParamSpec::new("topics", ParamKind::Integer, 3.0, 30.0, 1.0),
                ParamSpec::new("anchor_strength", ParamKind::Integer, 1.0, 15.0, 1.0),
            ],
        }
    }

    /// Reads a `name,kind,lo,hi,step` CSV.
    pub fn from_csv(text: &str) -> Result<Self, TuneError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut params = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| TuneError::InvalidSpace(e.to_string()))?;
            if record.len() != 5 {
                return Err(TuneError::InvalidSpace(format!(
                    "expected 5 columns, found {}",
                    record.len()
                )));
            }
            let num = |i: usize| -> Result<f64, TuneError> {
                record[i]
                    .parse()
                    .map_err(|_| TuneError::InvalidSpace(format!("bad number {:?}", &record[i])))
            };
            params.push(ParamSpec {
                name: record[0].to_string(),
                kind: record[1].parse()?,
                lo: num(2)?,
                hi: num(3)?,
                step: num(4)?,
            });
        }
        SearchSpace::new(params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TuneError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| TuneError::InvalidSpace(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,kind,lo,hi,step\n");
        for p in &self.params {
            out.push_str(&format!("{},{},{},{},{}\n", p.name, p.kind, p.lo, p.hi, p.step));
        }
        out
    }

    pub fn contains(&self, config: &ParamConfig) -> bool {
        self.params.len() == config.len()
            && self
                .params
                .iter()
                .all(|p| config.get(&p.name).map_or(false, |&v| p.is_quantized(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_values_are_clean() {
        let beta = ParamSpec::new("beta", ParamKind::Float, 0.001, 0.1, 0.001);
        assert_eq!(beta.levels(), 100);
        assert_eq!(beta.value(17), 0.018);
        assert_eq!(beta.value(99), 0.1);
        let alpha = ParamSpec::new("alpha", ParamKind::Float, 0.0, 1.0, 0.1);
        assert_eq!(alpha.levels(), 11);
        assert_eq!(alpha.value(2), 0.2);
        assert!(alpha.is_quantized(0.2));
        assert!(!alpha.is_quantized(0.25));
        assert!(!alpha.is_quantized(1.1));
    }

    #[test]
    fn csv_round_trip() {
        let space = SearchSpace::btm_default();
        assert_eq!(SearchSpace::from_csv(&space.to_csv()).unwrap(), space);
    }

    #[test]
    fn invalid_spaces() {
        let bad = [
            ParamSpec::new("x", ParamKind::Float, 1.0, 0.0, 0.1),
            ParamSpec::new("x", ParamKind::Float, 0.0, 1.0, 0.0),
            ParamSpec::new("x", ParamKind::Float, 0.0, f64::NAN, 0.1),
        ];
        for p in bad {
            assert!(matches!(SearchSpace::new(vec![p]), Err(TuneError::InvalidSpace(_))));
        }
        assert!(SearchSpace::new(vec![]).is_err());
        assert!(SearchSpace::from_csv("name,kind,lo,hi,step\nx,weird,0,1,1\n").is_err());
    }
}
