//! Unsupervised shilling detector: project every profile to the top-2
//! principal components, score each user by mean distance to its q nearest
//! neighbors in that plane, and flag the most anomalous fraction. Labels
//! are used only to score precision/recall against the known fakes.

use crate::data::interactions::InteractionMatrix;
use crate::error::{Error, Result};
use crate::eval::pca::{fit_pca2, profile_rows};

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Nearest neighbors averaged into the anomaly score.
    pub neighbors: usize,
    /// Fraction of the population flagged as suspicious.
    pub flag_fraction: f64,
    /// L2-normalize profile rows before the projection.
    pub normalize: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            neighbors: 10,
            flag_fraction: 0.55,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DetectorOutput {
    pub scores: Vec<f64>,
    pub flagged: Vec<u32>,
    pub precision: f64,
    pub recall: f64,
    /// False when nothing was flagged and precision is undefined.
    pub precision_defined: bool,
    pub true_positives: usize,
}

/// Runs the detector on an injected matrix whose last `k_known` rows are
/// the fakes.
pub fn detect(
    injected: &InteractionMatrix,
    k_known: usize,
    cfg: &DetectorConfig,
) -> Result<DetectorOutput> {
    let total = injected.n_users();
    if k_known > total {
        return Err(Error::Config(format!(
            "{k_known} known fakes exceed the population {total}"
        )));
    }
    if total < cfg.neighbors + 1 {
        return Err(Error::Config(format!(
            "population {total} too small for {} neighbors",
            cfg.neighbors
        )));
    }
    let rows = profile_rows(injected.rows(), cfg.normalize);
    let pca = fit_pca2(&rows, injected.n_items())?;
    let coords = pca.project_all(&rows);

    // Mean distance to the q nearest other points in the plane.
    let mut scores = Vec::with_capacity(total);
    for i in 0..total {
        let mut dists: Vec<f64> = (0..total)
            .filter(|&j| j != i)
            .map(|j| {
                let dx = coords[i].0 - coords[j].0;
                let dy = coords[i].1 - coords[j].1;
                (dx * dx + dy * dy).sqrt()
            })
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = cfg.neighbors.min(dists.len());
        scores.push(dists[..q].iter().sum::<f64>() / q as f64);
    }

    let n_flag = ((cfg.flag_fraction * total as f64).round() as usize).min(total);
    let mut order: Vec<u32> = (0..total as u32).collect();
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut flagged: Vec<u32> = order[..n_flag].to_vec();
    flagged.sort_unstable();

    let fake_start = (total - k_known) as u32;
    let true_positives = flagged.iter().filter(|&&u| u >= fake_start).count();
    let precision_defined = !flagged.is_empty();
    let precision = if precision_defined {
        true_positives as f64 / flagged.len() as f64
    } else {
        0.0
    };
    let recall = if k_known > 0 {
        true_positives as f64 / k_known as f64
    } else {
        0.0
    };
    Ok(DetectorOutput {
        scores,
        flagged,
        precision,
        recall,
        precision_defined,
        true_positives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rng::Rng;

    fn population(n: usize, k: usize, seed: u64) -> InteractionMatrix {
        let mut rng = Rng::new(seed);
        let mut rows = Vec::new();
        for _ in 0..n {
            let len = 3 + rng.below(6);
            rows.push(
                rng.sample_indices(30, len)
                    .into_iter()
                    .map(|i| i as u32)
                    .collect(),
            );
        }
        for _ in 0..k {
            let len = 3 + rng.below(3);
            rows.push(
                rng.sample_indices(30, len)
                    .into_iter()
                    .map(|i| i as u32)
                    .collect(),
            );
        }
        InteractionMatrix::from_rows(30, rows).unwrap()
    }

    #[test]
    fn flag_everything_gives_base_rate_precision_and_full_recall() {
        let y = population(40, 10, 1);
        let cfg = DetectorConfig {
            flag_fraction: 1.0,
            ..DetectorConfig::default()
        };
        let out = detect(&y, 10, &cfg).unwrap();
        assert_eq!(out.flagged.len(), 50);
        assert!((out.precision - 10.0 / 50.0).abs() < 1e-12);
        assert_eq!(out.recall, 1.0);
    }

    #[test]
    fn flag_nothing_reports_undefined_precision() {
        let y = population(40, 10, 2);
        let cfg = DetectorConfig {
            flag_fraction: 0.0,
            ..DetectorConfig::default()
        };
        let out = detect(&y, 10, &cfg).unwrap();
        assert!(out.flagged.is_empty());
        assert!(!out.precision_defined);
        assert_eq!(out.precision, 0.0);
        assert_eq!(out.recall, 0.0);
    }

    #[test]
    fn population_smaller_than_neighbors_is_config_error() {
        let y = population(4, 2, 3);
        let cfg = DetectorConfig {
            neighbors: 10,
            ..DetectorConfig::default()
        };
        assert!(detect(&y, 2, &cfg).is_err());
    }

    #[test]
    fn obvious_outliers_rank_highest() {
        // 30 copies of one dense profile plus 3 disjoint sparse ones: the
        // outliers must carry the largest scores.
        let mut rows = vec![vec![0u32, 1, 2, 3, 4]; 30];
        rows.push(vec![20, 21, 22, 23, 24, 25, 26]);
        rows.push(vec![25, 26, 27, 28]);
        rows.push(vec![27, 28, 29]);
        let y = InteractionMatrix::from_rows(30, rows).unwrap();
        let cfg = DetectorConfig {
            neighbors: 5,
            flag_fraction: 0.1,
            normalize: false,
        };
        let out = detect(&y, 3, &cfg).unwrap();
        assert_eq!(out.flagged.len(), 3);
        assert_eq!(out.flagged, vec![30, 31, 32]);
        assert_eq!(out.recall, 1.0);
        assert_eq!(out.precision, 1.0);
    }
}
