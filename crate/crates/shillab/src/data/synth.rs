//! Deterministic synthetic rating-file generator.
//!
//! Produces MovieLens-style tab-separated rating files at a configurable
//! scale with the structure the rest of the pipeline depends on: a long-tail
//! item popularity, heterogeneous user activity, and latent taste clusters
//! that collaborative filters can exploit. Presets mirror the user/item/
//! interaction counts of the common public benchmarks so desk-scale
//! experiments run at realistic shapes without shipping the original data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::num::rng::Rng;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    /// Number of latent taste clusters.
    #[serde(default = "default_genres")]
    pub genres: usize,
    /// Zipf exponent for within-genre item popularity.
    #[serde(default = "default_zipf")]
    pub zipf_exponent: f64,
    /// Probability of picking by global popularity instead of taste.
    #[serde(default = "default_pop_mix")]
    pub popularity_mix: f64,
    /// Log-normal sigma of per-user activity.
    #[serde(default = "default_activity_sigma")]
    pub activity_sigma: f64,
    /// Minimum interactions per user.
    #[serde(default = "default_min_per_user")]
    pub min_per_user: usize,
    pub seed: u64,
}

fn default_genres() -> usize {
    12
}
fn default_zipf() -> f64 {
    1.05
}
fn default_pop_mix() -> f64 {
    0.3
}
fn default_activity_sigma() -> f64 {
    0.85
}
fn default_min_per_user() -> usize {
    20
}

impl SynthSpec {
    /// 943 users x 1682 items x 100k interactions.
    pub fn ml100k(seed: u64) -> Self {
        SynthSpec {
            n_users: 943,
            n_items: 1682,
            n_interactions: 100_000,
            genres: default_genres(),
            zipf_exponent: default_zipf(),
            popularity_mix: default_pop_mix(),
            activity_sigma: default_activity_sigma(),
            min_per_user: default_min_per_user(),
            seed,
        }
    }

    /// 1508 users x 2071 items x 35494 interactions.
    pub fn filmtrust(seed: u64) -> Self {
        SynthSpec {
            n_users: 1508,
            n_items: 2071,
            n_interactions: 35_494,
            min_per_user: 2,
            ..SynthSpec::ml100k(seed)
        }
    }

    /// Small instance for orchestration tests.
    pub fn tiny(seed: u64) -> Self {
        SynthSpec {
            n_users: 120,
            n_items: 200,
            n_interactions: 3000,
            genres: 6,
            min_per_user: 8,
            ..SynthSpec::ml100k(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 {
            return Err(Error::Config("synth: users and items must be positive".into()));
        }
        if self.n_interactions < self.n_users * self.min_per_user {
            return Err(Error::Config(format!(
                "synth: {} interactions cannot give {} users at least {} each",
                self.n_interactions, self.n_users, self.min_per_user
            )));
        }
        if self.n_interactions > self.n_users * self.n_items {
            return Err(Error::Config("synth: more interactions than cells".into()));
        }
        if self.genres == 0 {
            return Err(Error::Config("synth: need at least one genre".into()));
        }
        Ok(())
    }
}

/// Generates the rating records as `(user, item, rating, timestamp)` rows,
/// users and items 1-indexed as in the MovieLens distribution.
pub fn generate(spec: &SynthSpec) -> Result<Vec<(u32, u32, u8, u64)>> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);

    // Item -> genre, plus a within-genre Zipf popularity weight.
    let n = spec.n_users;
    let m = spec.n_items;
    let item_genre: Vec<usize> = (0..m).map(|_| rng.below(spec.genres)).collect();
    let mut genre_items: Vec<Vec<u32>> = vec![Vec::new(); spec.genres];
    for (i, &g) in item_genre.iter().enumerate() {
        genre_items[g].push(i as u32);
    }
    // Guard against an empty genre at tiny scales.
    for g in 0..spec.genres {
        if genre_items[g].is_empty() {
            let i = rng.below(m);
            genre_items[g].push(i as u32);
        }
    }
    let item_weight: Vec<f64> = (0..m)
        .map(|i| {
            let rank_in_genre = genre_items[item_genre[i]]
                .iter()
                .position(|&x| x == i as u32)
                .unwrap_or(0);
            1.0 / ((rank_in_genre + 1) as f64).powf(spec.zipf_exponent)
        })
        .collect();

    // Cumulative tables for weighted item draws, per genre and global.
    let cum = |items: &[u32]| -> (Vec<f64>, f64) {
        let mut acc = 0.0;
        let mut c = Vec::with_capacity(items.len());
        for &i in items {
            acc += item_weight[i as usize];
            c.push(acc);
        }
        (c, acc)
    };
    let genre_cum: Vec<(Vec<f64>, f64)> = genre_items.iter().map(|v| cum(v)).collect();
    let all_items: Vec<u32> = (0..m as u32).collect();
    let global_cum = cum(&all_items);

    let draw = |rng: &mut Rng, items: &[u32], c: &(Vec<f64>, f64)| -> u32 {
        let x = rng.uniform() * c.1;
        let pos = c.0.partition_point(|&acc| acc < x).min(items.len() - 1);
        items[pos]
    };

    // Per-user activity: clamped log-normal scaled to the exact total.
    let mut weights: Vec<f64> = (0..n)
        .map(|_| (spec.activity_sigma * rng.normal()).exp())
        .collect();
    let wsum: f64 = weights.iter().sum();
    let budget = spec.n_interactions;
    let mut counts: Vec<usize> = weights
        .iter_mut()
        .map(|w| ((*w / wsum) * budget as f64).round().max(spec.min_per_user as f64) as usize)
        .map(|c| c.min(m))
        .collect();
    // Nudge counts until they sum exactly to the budget.
    let mut total: usize = counts.iter().sum();
    let mut cursor = 0usize;
    while total != budget {
        let u = cursor % n;
        cursor += 1;
        if total > budget {
            if counts[u] > spec.min_per_user {
                counts[u] -= 1;
                total -= 1;
            }
        } else if counts[u] < m {
            counts[u] += 1;
            total += 1;
        }
    }

    // Each user: one primary and one secondary taste cluster.
    let mut profiles: Vec<Vec<u32>> = Vec::with_capacity(n);
    for u in 0..n {
        let primary = rng.below(spec.genres);
        let mut secondary = rng.below(spec.genres);
        if secondary == primary {
            secondary = (secondary + 1) % spec.genres;
        }
        let mut picked: Vec<u32> = Vec::with_capacity(counts[u]);
        let mut seen = vec![false; m];
        let mut guard = 0usize;
        while picked.len() < counts[u] {
            guard += 1;
            let item = if rng.uniform() < spec.popularity_mix || guard > 50 * counts[u] {
                draw(&mut rng, &all_items, &global_cum)
            } else {
                let g = if rng.uniform() < 0.75 { primary } else { secondary };
                draw(&mut rng, &genre_items[g], &genre_cum[g])
            };
            if !seen[item as usize] {
                seen[item as usize] = true;
                picked.push(item);
            }
        }
        profiles.push(picked);
    }

    // Every item must appear at least once: swap an interaction from a
    // high-degree item of a random heavy user onto each missing item.
    let mut item_count = vec![0usize; m];
    for row in &profiles {
        for &i in row {
            item_count[i as usize] += 1;
        }
    }
    for missing in 0..m {
        if item_count[missing] > 0 {
            continue;
        }
        loop {
            let u = rng.below(n);
            if profiles[u].len() < 2 {
                continue;
            }
            // Replace this user's most common item (by global count > 1).
            if let Some(pos) = (0..profiles[u].len())
                .filter(|&p| item_count[profiles[u][p] as usize] > 1)
                .max_by_key(|&p| item_count[profiles[u][p] as usize])
            {
                let old = profiles[u][pos] as usize;
                if profiles[u].contains(&(missing as u32)) {
                    continue;
                }
                profiles[u][pos] = missing as u32;
                item_count[old] -= 1;
                item_count[missing] += 1;
                break;
            }
        }
    }

    // Emit records with plausible ratings and monotone timestamps.
    let mut records = Vec::with_capacity(budget);
    let mut ts: u64 = 880_000_000;
    for (u, row) in profiles.iter().enumerate() {
        for &i in row {
            ts += 1 + rng.below(50) as u64;
            let rating = 3 + rng.below(3) as u8; // 3..=5: interacted items skew positive
            records.push((u as u32 + 1, i + 1, rating, ts));
        }
    }
    Ok(records)
}

/// Writes the generated records as a MovieLens-style tab-separated file.
pub fn write_ratings_file(spec: &SynthSpec, path: &Path) -> Result<()> {
    let records = generate(spec)?;
    let mut out = String::with_capacity(records.len() * 20);
    for (u, i, r, ts) in records {
        let _ = writeln!(out, "{u}\t{i}\t{r}\t{ts}");
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ratings::{load_ratings, RatingsFormat};

    #[test]
    fn tiny_spec_exact_counts() {
        let spec = SynthSpec::tiny(3);
        let records = generate(&spec).unwrap();
        assert_eq!(records.len(), spec.n_interactions);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.data");
        write_ratings_file(&spec, &path).unwrap();
        let loaded = load_ratings(&path, RatingsFormat::MovielensTab, 0.0).unwrap();
        assert_eq!(loaded.interactions.n_users(), spec.n_users);
        assert_eq!(loaded.interactions.n_items(), spec.n_items);
        assert_eq!(loaded.interactions.nnz(), spec.n_interactions);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = SynthSpec::tiny(9);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SynthSpec::tiny(10);
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn ml100k_scale_statistics() {
        let spec = SynthSpec::ml100k(7);
        let records = generate(&spec).unwrap();
        assert_eq!(records.len(), 100_000);
        let mut users = std::collections::HashSet::new();
        let mut items = std::collections::HashSet::new();
        for &(u, i, _, _) in &records {
            users.insert(u);
            items.insert(i);
        }
        assert_eq!(users.len(), 943);
        assert_eq!(items.len(), 1682);
        // Sparsity matches the scale this preset mirrors.
        let sparsity: f64 = 1.0 - 100_000.0 / (943.0 * 1682.0);
        assert!((sparsity - 0.9370).abs() < 0.0005);
    }

    #[test]
    fn popularity_is_long_tailed() {
        let spec = SynthSpec::tiny(5);
        let records = generate(&spec).unwrap();
        let mut counts = vec![0usize; spec.n_items + 1];
        for &(_, i, _, _) in &records {
            counts[i as usize] += 1;
        }
        let mut sorted: Vec<usize> = counts[1..].to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let top_decile: usize = sorted[..spec.n_items / 10].iter().sum();
        let total: usize = sorted.iter().sum();
        assert!(
            top_decile as f64 > 0.25 * total as f64,
            "top 10% of items only covers {top_decile}/{total}"
        );
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = SynthSpec::tiny(1);
        spec.n_interactions = 10; // below min_per_user * users
        assert!(generate(&spec).is_err());
    }
}
