use super::PipelineError;
use crate::distribution::GroupDistribution;
use serde::{Deserialize, Serialize};

/// Default heterogeneity threshold for the agreement flag.
pub const DEFAULT_THRESHOLD: f64 = 0.2;

/// Half the L1 distance between two probability vectors. Shorter vectors
/// are padded with zeros.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..n).map(|i| (at(p, i) - at(q, i)).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPairDistance {
    pub group_a: String,
    pub group_b: String,
    pub tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeterogeneity {
    pub dataset: String,
    pub pairs: Vec<GroupPairDistance>,
    /// Largest pairwise distance between groups.
    pub h: f64,
    pub heterogeneous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangulationReport {
    pub threshold: f64,
    pub datasets: Vec<DatasetHeterogeneity>,
    /// Every dataset reaches the threshold.
    pub agreement: bool,
}

fn heterogeneity(name: &str, dist: &GroupDistribution, threshold: f64) -> DatasetHeterogeneity {
    let groups = dist.group_labels();
    let mut pairs = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (a, b) = (groups[i], groups[j]);
            let tv = total_variation(
                &dist.proportions(a).expect("group present"),
                &dist.proportions(b).expect("group present"),
            );
            pairs.push(GroupPairDistance {
                group_a: a.to_string(),
                group_b: b.to_string(),
                tv,
            });
        }
    }
    let h = pairs.iter().map(|p| p.tv).fold(0.0, f64::max);
    DatasetHeterogeneity {
        dataset: name.to_string(),
        pairs,
        h,
        heterogeneous: h >= threshold,
    }
}

/// Between-group heterogeneity in a main dataset and its alternates. All
/// distributions must cover the same groups; category counts may differ.
pub fn triangulate(
    main: (&str, &GroupDistribution),
    alternates: &[(&str, &GroupDistribution)],
    threshold: f64,
) -> Result<TriangulationReport, PipelineError> {
    if alternates.is_empty() {
        return Err(PipelineError::Triangulation("need at least one alternate dataset".into()));
    }
    let labels = main.1.group_labels();
    for (name, dist) in alternates {
        if dist.group_labels() != labels {
            return Err(PipelineError::GroupLabelMismatch {
                main: main.0.to_string(),
                alternate: name.to_string(),
            });
        }
    }
    let datasets: Vec<DatasetHeterogeneity> = std::iter::once(&main)
        .chain(alternates)
        .map(|(name, dist)| heterogeneity(name, dist, threshold))
        .collect();
    Ok(TriangulationReport {
        threshold,
        agreement: datasets.iter().all(|d| d.heterogeneous),
        datasets,
    })
}

impl TriangulationReport {
    pub fn render(&self) -> String {
        let mut out = format!("Triangulation (heterogeneity threshold {})\n", self.threshold);
        for d in &self.datasets {
            out.push_str(&format!(
                "\n{}: H = {:.4} ({})\n",
                d.dataset,
                d.h,
                if d.heterogeneous { "groups differ" } else { "below threshold" }
            ));
            for p in &d.pairs {
                out.push_str(&format!("  {} vs {}: TV {:.4}\n", p.group_a, p.group_b, p.tv));
            }
        }
        out.push_str(&format!(
            "\nAgreement across datasets that groups are not homogeneous: {}\n",
            if self.agreement { "yes" } else { "no" }
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::GroupDistribution;

    fn dist(rows: &[(&str, &[f64])]) -> GroupDistribution {
        GroupDistribution::from_weights(rows.iter().map(|(g, w)| (*g, *w)), rows[0].1.len())
    }

    #[test]
    fn tv_examples() {
        assert!((total_variation(&[0.6, 0.4], &[0.1, 0.9]) - 0.5).abs() < 1e-15);
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn identical_groups_not_flagged() {
        let d = dist(&[("A", &[0.5, 0.5]), ("B", &[0.5, 0.5])]);
        let r = triangulate(("main", &d), &[("alt", &d)], DEFAULT_THRESHOLD).unwrap();
        assert_eq!(r.datasets[0].h, 0.0);
        assert!(!r.agreement);
    }

    #[test]
    fn disjoint_support_flagged() {
        let d = dist(&[("A", &[1.0, 0.0]), ("B", &[0.0, 1.0])]);
        let e = dist(&[("A", &[1.0, 0.0, 0.0]), ("B", &[0.0, 0.0, 1.0])]);
        let r = triangulate(("main", &d), &[("alt", &e)], DEFAULT_THRESHOLD).unwrap();
        assert_eq!(r.datasets[0].h, 1.0);
        assert!(r.agreement);
    }

    #[test]
    fn mismatched_groups() {
        let d = dist(&[("A", &[1.0]), ("B", &[1.0])]);
        let e = dist(&[("A", &[1.0]), ("C", &[1.0])]);
        assert!(matches!(
            triangulate(("main", &d), &[("alt", &e)], 0.2),
            Err(PipelineError::GroupLabelMismatch { .. })
        ));
    }
}
