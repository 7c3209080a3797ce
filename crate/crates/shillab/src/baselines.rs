//! Heuristic attack generators: Random, Average, and Bandwagon filler
//! selection around the mandatory target items.

use crate::data::interactions::InteractionMatrix;
use crate::error::{Error, Result};
use crate::num::rng::Rng;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct HeuristicConfig {
    /// Fake profiles to craft.
    pub k: usize,
    pub targets: Vec<u32>,
    /// Items per profile, targets included.
    pub budget: usize,
    /// Bandwagon popular-pool size as a fraction of the item universe.
    pub pool_fraction: f64,
    pub seed: u64,
}

impl HeuristicConfig {
    fn validate(&self, n_items: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("need at least one fake profile".into()));
        }
        if self.budget < self.targets.len() {
            return Err(Error::Config(format!(
                "budget {} is below the target count {}",
                self.budget,
                self.targets.len()
            )));
        }
        if self.budget > n_items {
            return Err(Error::Config(format!(
                "budget {} exceeds the item universe {n_items}",
                self.budget
            )));
        }
        if let Some(&t) = self.targets.iter().find(|&&t| t as usize >= n_items) {
            return Err(Error::Index {
                what: "target item",
                index: t as usize,
                bound: n_items,
            });
        }
        Ok(())
    }

    /// Default budget: the mean genuine profile length of the view.
    pub fn default_budget(view: &InteractionMatrix, targets_len: usize) -> usize {
        (view.mean_row_len().round() as usize).max(targets_len.max(1))
    }
}

fn assemble(
    cfg: &HeuristicConfig,
    n_items: usize,
    mut fill: impl FnMut(&mut Rng, &mut Vec<u32>, usize),
) -> Result<InteractionMatrix> {
    cfg.validate(n_items)?;
    let mut rng = Rng::new(cfg.seed);
    let mut rows = Vec::with_capacity(cfg.k);
    for _ in 0..cfg.k {
        let mut row: Vec<u32> = cfg.targets.clone();
        row.sort_unstable();
        row.dedup();
        let need = cfg.budget - row.len();
        fill(&mut rng, &mut row, need);
        rows.push(row);
    }
    InteractionMatrix::from_rows(n_items, rows)
}

/// Uniform filler over the non-target item universe.
pub fn random_attack(view: &InteractionMatrix, cfg: &HeuristicConfig) -> Result<InteractionMatrix> {
    let m = view.n_items();
    assemble(cfg, m, |rng, row, need| {
        fill_uniform(rng, row, need, m);
    })
}

fn fill_uniform(rng: &mut Rng, row: &mut Vec<u32>, need: usize, m: usize) {
    let mut picked = 0usize;
    while picked < need {
        let cand = rng.below(m) as u32;
        if !row.contains(&cand) {
            row.push(cand);
            picked += 1;
        }
    }
}

/// Filler drawn without replacement with probability proportional to the
/// item's interaction frequency in the attacker view.
pub fn average_attack(view: &InteractionMatrix, cfg: &HeuristicConfig) -> Result<InteractionMatrix> {
    let m = view.n_items();
    let counts = view.item_counts();
    assemble(cfg, m, |rng, row, need| {
        let mut weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        for &t in row.iter() {
            weights[t as usize] = 0.0;
        }
        for _ in 0..need {
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                // Only zero-frequency items remain.
                let remaining = need - (row.len() - (cfg.budget - need));
                fill_uniform(rng, row, remaining, m);
                break;
            }
            let x = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = 0usize;
            for (i, &w) in weights.iter().enumerate() {
                acc += w;
                if x < acc {
                    chosen = i;
                    break;
                }
            }
            row.push(chosen as u32);
            weights[chosen] = 0.0;
        }
    })
}

/// Filler drawn uniformly from the most-popular pool; when the pool is
/// exhausted the remainder falls back to uniform sampling.
pub fn bandwagon_attack(
    view: &InteractionMatrix,
    cfg: &HeuristicConfig,
) -> Result<InteractionMatrix> {
    let m = view.n_items();
    let counts = view.item_counts();
    let pool_size = ((cfg.pool_fraction * m as f64).round() as usize).clamp(1, m);
    let mut by_count: Vec<u32> = (0..m as u32).collect();
    by_count.sort_by(|&a, &b| {
        counts[b as usize]
            .cmp(&counts[a as usize])
            .then(a.cmp(&b))
    });
    let pool: Vec<u32> = by_count[..pool_size].to_vec();
    assemble(cfg, m, |rng, row, need| {
        let mut available: Vec<u32> = pool
            .iter()
            .copied()
            .filter(|t| !row.contains(t))
            .collect();
        let from_pool = need.min(available.len());
        for idx in rng.sample_indices(available.len(), from_pool) {
            row.push(available[idx]);
        }
        available.clear();
        if from_pool < need {
            fill_uniform(rng, row, need - from_pool, m);
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_view() -> InteractionMatrix {
        // Item counts: 0 -> 4, 1 -> 3, 2 -> 2, 3 -> 1, 4 -> 0, 5 -> 2
        InteractionMatrix::from_rows(
            6,
            vec![
                vec![0, 1, 2],
                vec![0, 1, 5],
                vec![0, 2, 5],
                vec![0, 1, 3],
            ],
        )
        .unwrap()
    }

    fn cfg(budget: usize, targets: Vec<u32>, seed: u64) -> HeuristicConfig {
        HeuristicConfig {
            k: 10,
            targets,
            budget,
            pool_fraction: 0.1,
            seed,
        }
    }

    #[test]
    fn budget_equal_targets_gives_exactly_targets() {
        let view = toy_view();
        let fakes = random_attack(&view, &cfg(2, vec![3, 4], 1)).unwrap();
        for u in 0..fakes.n_users() {
            assert_eq!(fakes.row(u), &[3, 4]);
        }
    }

    #[test]
    fn rows_have_exact_budget_and_targets() {
        let view = toy_view();
        for fakes in [
            random_attack(&view, &cfg(4, vec![3], 2)).unwrap(),
            average_attack(&view, &cfg(4, vec![3], 2)).unwrap(),
            bandwagon_attack(&view, &cfg(4, vec![3], 2)).unwrap(),
        ] {
            assert_eq!(fakes.n_users(), 10);
            for u in 0..fakes.n_users() {
                assert_eq!(fakes.row(u).len(), 4, "row {u} budget violated");
                assert!(fakes.contains(u, 3), "row {u} missing target");
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let view = toy_view();
        for f in [random_attack, average_attack, bandwagon_attack] {
            let a = f(&view, &cfg(4, vec![3], 9)).unwrap();
            let b = f(&view, &cfg(4, vec![3], 9)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn average_sampling_tracks_frequencies() {
        // Two items with counts 99 and 1; over many single-filler rows the
        // selection ratio approaches 99:1 (chi-squared on the 2-cell table).
        let mut rows = vec![vec![0u32]; 99];
        rows.push(vec![1u32]);
        let view = InteractionMatrix::from_rows(2, rows).unwrap();
        let cfg = HeuristicConfig {
            k: 10_000,
            targets: vec![],
            budget: 1,
            pool_fraction: 0.5,
            seed: 3,
        };
        let fakes = average_attack(&view, &cfg).unwrap();
        let mut n0 = 0usize;
        for u in 0..fakes.n_users() {
            if fakes.contains(u, 0) {
                n0 += 1;
            }
        }
        let n1 = 10_000 - n0;
        let (e0, e1) = (9900.0, 100.0);
        let chi2 = (n0 as f64 - e0).powi(2) / e0 + (n1 as f64 - e1).powi(2) / e1;
        // df = 1; 10.83 is the 0.001 critical value.
        assert!(chi2 < 10.83, "chi2 {chi2} with counts ({n0}, {n1})");
    }

    #[test]
    fn average_with_equal_counts_behaves_like_random() {
        let view = InteractionMatrix::from_rows(4, vec![vec![0, 1, 2, 3]; 5]).unwrap();
        let fakes = average_attack(&view, &cfg(2, vec![], 5)).unwrap();
        // Sanity: all rows valid with budget 2 and no duplicates.
        for u in 0..fakes.n_users() {
            assert_eq!(fakes.row(u).len(), 2);
        }
    }

    #[test]
    fn bandwagon_pool_membership_matches_sort_oracle() {
        let view = toy_view();
        // pool_fraction 0.34 of 6 items -> pool = {0, 1} (counts 4 and 3).
        let cfg = HeuristicConfig {
            k: 20,
            targets: vec![3],
            budget: 3,
            pool_fraction: 0.34,
            seed: 7,
        };
        let fakes = bandwagon_attack(&view, &cfg).unwrap();
        for u in 0..fakes.n_users() {
            let fillers: Vec<u32> = fakes
                .row(u)
                .iter()
                .copied()
                .filter(|&i| i != 3)
                .collect();
            assert_eq!(fillers.len(), 2);
            for f in fillers {
                assert!(f == 0 || f == 1, "filler {f} outside the popular pool");
            }
        }
    }

    #[test]
    fn bandwagon_degenerate_pool_falls_back_to_uniform() {
        let view = toy_view();
        let cfg = HeuristicConfig {
            k: 5,
            targets: vec![],
            budget: 3,
            pool_fraction: 1e-9, // clamps to a single-item pool
            seed: 11,
        };
        let fakes = bandwagon_attack(&view, &cfg).unwrap();
        for u in 0..fakes.n_users() {
            // Most popular item 0 always present, remainder random distinct.
            assert!(fakes.contains(u, 0));
            assert_eq!(fakes.row(u).len(), 3);
        }
    }

    #[test]
    fn bandwagon_full_pool_equals_random_distribution() {
        let view = toy_view();
        let cfg = HeuristicConfig {
            k: 50,
            targets: vec![],
            budget: 2,
            pool_fraction: 1.0,
            seed: 13,
        };
        // Pool is the whole universe; just verify validity.
        let fakes = bandwagon_attack(&view, &cfg).unwrap();
        for u in 0..fakes.n_users() {
            assert_eq!(fakes.row(u).len(), 2);
        }
    }

    #[test]
    fn invalid_budgets_rejected() {
        let view = toy_view();
        assert!(random_attack(&view, &cfg(7, vec![], 1)).is_err()); // > m
        assert!(random_attack(&view, &cfg(1, vec![2, 3], 1)).is_err()); // < targets
    }
}
