//! Per-group percentage distributions over topics or latent classes.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("item {0:?} has no group label")]
    UnknownGroup(String),
    #[error("item {item:?} assigned to category {category}, but only {count} exist")]
    CategoryOutOfRange {
        item: String,
        category: usize,
        count: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentMode {
    /// Each member counted once in its argmax category.
    Hard,
    /// Each member contributes its posterior vector.
    Soft,
}

/// Rows are groups, columns are categories `0..K-1`; each row holds
/// percentages summing to 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDistribution {
    pub categories: usize,
    pub mode: AssignmentMode,
    pub groups: BTreeMap<String, Vec<f64>>,
    pub members: BTreeMap<String, usize>,
}

impl GroupDistribution {
    /// Hard-assignment distribution from `(item, category)` pairs.
    pub fn from_assignments<'a, I>(
        assignments: I,
        groups: &HashMap<String, String>,
        categories: usize,
    ) -> Result<Self, DistributionError>
    where
        I: IntoIterator<Item = (&'a str, usize)>,
    {
        let mut counts: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut members: BTreeMap<String, usize> = BTreeMap::new();
        for (item, category) in assignments {
            let group = groups
                .get(item)
                .ok_or_else(|| DistributionError::UnknownGroup(item.to_string()))?;
            if category >= categories {
                return Err(DistributionError::CategoryOutOfRange {
                    item: item.to_string(),
                    category,
                    count: categories,
                });
            }
            counts
                .entry(group.clone())
                .or_insert_with(|| vec![0.0; categories])[category] += 1.0;
            *members.entry(group.clone()).or_default() += 1;
        }
        Ok(Self::normalized(counts, members, categories, AssignmentMode::Hard))
    }

    /// Soft distribution: each `(group, weights)` adds its weight vector.
    pub fn from_weights<'a, I>(rows: I, categories: usize) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a [f64])>,
    {
        let mut sums: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut members: BTreeMap<String, usize> = BTreeMap::new();
        for (group, weights) in rows {
            let row = sums
                .entry(group.to_string())
                .or_insert_with(|| vec![0.0; categories]);
            for (acc, w) in row.iter_mut().zip(weights) {
                *acc += w;
            }
            *members.entry(group.to_string()).or_default() += 1;
        }
        Self::normalized(sums, members, categories, AssignmentMode::Soft)
    }

    fn normalized(
        mut rows: BTreeMap<String, Vec<f64>>,
        members: BTreeMap<String, usize>,
        categories: usize,
        mode: AssignmentMode,
    ) -> Self {
        for row in rows.values_mut() {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|v| *v = 100.0 * *v / total);
            }
        }
        GroupDistribution {
            categories,
            mode,
            groups: rows,
            members,
        }
    }

    pub fn percentages(&self, group: &str) -> Option<&[f64]> {
        self.groups.get(group).map(Vec::as_slice)
    }

    /// Row as a probability vector.
    pub fn proportions(&self, group: &str) -> Option<Vec<f64>> {
        self.percentages(group)
            .map(|row| row.iter().map(|p| p / 100.0).collect())
    }

    pub fn group_labels(&self) -> Vec<&str> {
        self.groups.keys().map(String::as_str).collect()
    }

    /// `group,0,1,...,K-1` with one row per group.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group");
        for k in 0..self.categories {
            out.push_str(&format!(",{k}"));
        }
        out.push('\n');
        for (group, row) in &self.groups {
            out.push_str(&crate::csvfmt::field(group));
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups(pairs: &[(&str, &str)]) -> HashMap<String, String> {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn hard_counts() {
        let g = groups(&[("d1", "A"), ("d2", "A"), ("d3", "B"), ("d4", "B")]);
        let dist = GroupDistribution::from_assignments(
            [("d1", 1), ("d2", 2), ("d3", 1), ("d4", 1)],
            &g,
            3,
        )
        .unwrap();
        assert_eq!(dist.percentages("A").unwrap(), [0.0, 50.0, 50.0]);
        assert_eq!(dist.percentages("B").unwrap(), [0.0, 100.0, 0.0]);
    }

    #[test]
    fn unknown_group() {
        let g = groups(&[("d1", "A")]);
        let err = GroupDistribution::from_assignments([("zz", 0)], &g, 1).unwrap_err();
        assert_eq!(err, DistributionError::UnknownGroup("zz".into()));
    }

    #[test]
    fn csv_layout() {
        let g = groups(&[("d1", "A")]);
        let dist = GroupDistribution::from_assignments([("d1", 0)], &g, 2).unwrap();
        assert_eq!(dist.to_csv(), "group,0,1\nA,100.000000,0.000000\n");
    }
}
