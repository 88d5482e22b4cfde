//! Synthetic two-cluster classification data and its CSV form.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::objectives::{ObjectiveError, StochasticObjective, TrainingSample};
use crate::rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{count} samples cannot be split: not divisible by {divisor}")]
    Divisibility { count: usize, divisor: usize },
    #[error("csv line {0}: {1}")]
    Csv(usize, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Labeled points in `R^{d+1}` (augmented with a trailing 1) assigned to
/// agents round-robin.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    assignment: Vec<usize>,
    n_agents: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Augmented feature dimension (raw dimension plus one).
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Training samples owned by one agent, in dataset order.
    pub fn agent_samples(&self, agent: usize) -> Vec<TrainingSample> {
        self.features
            .iter()
            .zip(&self.labels)
            .zip(&self.assignment)
            .filter(|&(_, &a)| a == agent)
            .map(|((f, &label), _)| TrainingSample {
                features: f.clone(),
                label,
            })
            .collect()
    }

    /// Builds one hinge+ridge objective per agent. `lambda` is the global
    /// regularization weight; each agent carries `lambda / n_agents` of it.
    pub fn hinge_objectives(
        &self,
        lambda: f64,
        tracked_radius: f64,
    ) -> Result<Vec<StochasticObjective>, DatasetError> {
        let ridge = lambda / self.n_agents as f64;
        (0..self.n_agents)
            .map(|agent| {
                StochasticObjective::hinge_ridge(self.agent_samples(agent), ridge, tracked_radius)
                    .map_err(DatasetError::from)
            })
            .collect()
    }

    /// Writes `label,f0,...,f{d-1},agent` rows, one per point, in dataset
    /// order. The trailing augmentation coordinate is not stored.
    pub fn save_csv(&self, mut out: impl Write) -> Result<(), DatasetError> {
        let d = self.dim().saturating_sub(1);
        let header: Vec<String> = std::iter::once("label".to_string())
            .chain((0..d).map(|k| format!("f{k}")))
            .chain(std::iter::once("agent".to_string()))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for ((f, label), agent) in self.features.iter().zip(&self.labels).zip(&self.assignment) {
            debug_assert_eq!(f[d], 1.0, "augmentation coordinate must be 1");
            let mut row = label.to_string();
            for v in &f[..d] {
                row.push(',');
                row.push_str(&v.to_string());
            }
            writeln!(out, "{row},{agent}")?;
        }
        Ok(())
    }

    /// Reads the format written by [`Dataset::save_csv`], re-augmenting the
    /// features. The agent count is one more than the largest agent id.
    pub fn load_csv(reader: impl BufRead) -> Result<Self, DatasetError> {
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| DatasetError::Csv(0, "empty file".into()))?;
        let header = header?;
        let columns = header.split(',').count();
        if columns < 2 {
            return Err(DatasetError::Csv(0, format!("bad header: {header}")));
        }
        let d = columns - 2;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut assignment = Vec::new();
        for (line_no, line) in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns {
                return Err(DatasetError::Csv(
                    line_no,
                    format!("expected {columns} fields, got {}", fields.len()),
                ));
            }
            let parse = |s: &str| -> Result<f64, DatasetError> {
                s.parse()
                    .map_err(|_| DatasetError::Csv(line_no, format!("bad number: {s}")))
            };
            labels.push(parse(fields[0])?);
            let mut f: Vec<f64> = fields[1..=d]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<_, _>>()?;
            f.push(1.0);
            features.push(f);
            assignment.push(
                fields[columns - 1]
                    .parse()
                    .map_err(|_| DatasetError::Csv(line_no, "bad agent id".into()))?,
            );
        }
        let n_agents = assignment.iter().copied().max().map_or(0, |a| a + 1);
        Ok(Self {
            features,
            labels,
            assignment,
            n_agents,
        })
    }
}

/// Generates `total` points around two Gaussian clusters at `+-separation*u`
/// for a random unit direction `u`, labels them by cluster, augments each
/// point with a trailing 1, shuffles, and deals them round-robin to
/// `n_agents` agents.
pub fn gen_two_cluster_dataset(
    d: usize,
    total: usize,
    n_agents: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if n_agents == 0 || total % n_agents != 0 {
        return Err(DatasetError::Divisibility {
            count: total,
            divisor: n_agents.max(1),
        });
    }
    if total % 2 != 0 {
        return Err(DatasetError::Divisibility {
            count: total,
            divisor: 2,
        });
    }
    let mut direction_stream = rng::stream(seed, channel::DIRECTION, 0);
    let mut direction: Vec<f64> = (0..d)
        .map(|_| rng::standard_normal(&mut direction_stream))
        .collect();
    let scale = crate::vecmath::norm(&direction);
    if scale > 0.0 {
        direction.iter_mut().for_each(|v| *v /= scale);
    } else if d > 0 {
        direction[0] = 1.0;
    }

    let mut point_stream = rng::stream(seed, channel::POINTS, 0);
    let mut features = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for k in 0..total {
        let label = if k < total / 2 { 1.0 } else { -1.0 };
        let mut point: Vec<f64> = direction
            .iter()
            .map(|u| label * separation * u + rng::standard_normal(&mut point_stream))
            .collect();
        point.push(1.0);
        features.push(point);
        labels.push(label);
    }

    // Fisher-Yates, then deal in shuffled order.
    let mut shuffle_stream = rng::stream(seed, channel::SHUFFLE, 0);
    let mut order: Vec<usize> = (0..total).collect();
    for k in (1..total).rev() {
        order.swap(k, rng::uniform_index(&mut shuffle_stream, k + 1));
    }
    let mut shuffled_features = Vec::with_capacity(total);
    let mut shuffled_labels = Vec::with_capacity(total);
    let mut assignment = Vec::with_capacity(total);
    for (slot, &idx) in order.iter().enumerate() {
        shuffled_features.push(features[idx].clone());
        shuffled_labels.push(labels[idx]);
        assignment.push(slot % n_agents);
    }
    Ok(Dataset {
        features: shuffled_features,
        labels: shuffled_labels,
        assignment,
        n_agents,
    })
}

pub(crate) mod channel {
    pub const DIRECTION: u64 = 21;
    pub const POINTS: u64 = 22;
    pub const SHUFFLE: u64 = 23;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecmath::dot;

    #[test]
    fn counts_and_balance_are_forced() {
        let ds = gen_two_cluster_dataset(2, 4, 2, 10.0, 123).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.agent_samples(0).len(), 2);
        assert_eq!(ds.agent_samples(1).len(), 2);
        let positives = ds.labels().iter().filter(|&&l| l == 1.0).count();
        assert_eq!(positives, 2);
        for f in ds.features() {
            assert_eq!(f.len(), 3);
            assert_eq!(f[2], 1.0);
        }
    }

    #[test]
    fn rejects_indivisible_totals() {
        assert!(matches!(
            gen_two_cluster_dataset(2, 10, 3, 1.0, 0),
            Err(DatasetError::Divisibility { .. })
        ));
        assert!(matches!(
            gen_two_cluster_dataset(2, 9, 9, 1.0, 0),
            Err(DatasetError::Divisibility { .. })
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_two_cluster_dataset(5, 40, 4, 3.0, 7).unwrap();
        let b = gen_two_cluster_dataset(5, 40, 4, 3.0, 7).unwrap();
        assert_eq!(a, b);
        let c = gen_two_cluster_dataset(5, 40, 4, 3.0, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn separated_clusters_admit_a_perfect_linear_classifier() {
        // perceptron oracle: with separation 10 in the plane the data is
        // linearly separable with margin, so the perceptron converges to a
        // zero-error classifier in finitely many passes
        let ds = gen_two_cluster_dataset(2, 80, 8, 10.0, 42).unwrap();
        let mut w = vec![0.0; ds.dim()];
        let mut converged = false;
        for _pass in 0..200 {
            let mut mistakes = 0;
            for (f, &label) in ds.features().iter().zip(ds.labels()) {
                if label * dot(&w, f) <= 0.0 {
                    for (wk, fk) in w.iter_mut().zip(f) {
                        *wk += label * fk;
                    }
                    mistakes += 1;
                }
            }
            if mistakes == 0 {
                converged = true;
                break;
            }
        }
        assert!(converged, "perceptron failed to separate the clusters");
    }

    #[test]
    fn csv_round_trip_preserves_everything() {
        let ds = gen_two_cluster_dataset(3, 12, 4, 2.0, 99).unwrap();
        let mut buf = Vec::new();
        ds.save_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label,f0,f1,f2,agent\n"));
        let loaded = Dataset::load_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(loaded, ds);
        // byte-identical on re-save
        let mut buf2 = Vec::new();
        loaded.save_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn hinge_objectives_share_the_ridge() {
        let ds = gen_two_cluster_dataset(2, 8, 4, 5.0, 1).unwrap();
        let objectives = ds.hinge_objectives(1.0, 100.0).unwrap();
        assert_eq!(objectives.len(), 4);
        for o in &objectives {
            assert_eq!(o.strong_convexity(), 0.25);
            assert_eq!(o.dim(), 3);
        }
    }
}
