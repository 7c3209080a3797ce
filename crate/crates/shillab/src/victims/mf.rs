//! Matrix factorization trained with the BPR pairwise objective over
//! sampled (user, positive, negative) triples.

use crate::data::interactions::InteractionMatrix;
use crate::error::{Error, Result};
use crate::num::matrix::{log_sigmoid, sigmoid, DenseMatrix};
use crate::num::params::{AdamConfig, Init, ParamStore};
use crate::num::rng::Rng;
use crate::victims::{evaluate_rec, sample_negative, EarlyStop, Scorer, TrainConfig};

pub(crate) struct EmbeddingScorer<'a> {
    pub users: &'a DenseMatrix,
    pub items: &'a DenseMatrix,
}

impl Scorer for EmbeddingScorer<'_> {
    fn n_users(&self) -> usize {
        self.users.rows()
    }
    fn n_items(&self) -> usize {
        self.items.rows()
    }
    fn scores_for_user(&self, u: usize) -> Vec<f64> {
        let urow = self.users.row(u);
        (0..self.items.rows())
            .map(|i| DenseMatrix::dot_row(urow, self.items.row(i)))
            .collect()
    }
}

pub fn init_store(n_users: usize, n_items: usize, dim: usize, rng: &mut Rng) -> ParamStore {
    let mut store = ParamStore::new();
    store.add("user.emb", n_users, dim, Init::XavierUniform, rng);
    store.add("item.emb", n_items, dim, Init::XavierUniform, rng);
    store.add("item.bias", n_items, 1, Init::Zeros, rng);
    store
}

/// Score table (embedding dot products plus item bias) for ranking.
pub(crate) fn score_tables(store: &ParamStore) -> (DenseMatrix, DenseMatrix) {
    // The bias folds into an extra embedding column paired with a constant
    // one in the user table, so scoring stays a plain inner product.
    let users = store.value("user.emb");
    let items = store.value("item.emb");
    let bias = store.value("item.bias");
    let d = users.cols();
    let mut u_ext = DenseMatrix::zeros(users.rows(), d + 1);
    for r in 0..users.rows() {
        u_ext.row_mut(r)[..d].copy_from_slice(users.row(r));
        u_ext.row_mut(r)[d] = 1.0;
    }
    let mut i_ext = DenseMatrix::zeros(items.rows(), d + 1);
    for r in 0..items.rows() {
        i_ext.row_mut(r)[..d].copy_from_slice(items.row(r));
        i_ext.row_mut(r)[d] = bias.get(r, 0);
    }
    (u_ext, i_ext)
}

/// BPR loss and gradients for one batch of (u, pos, neg) triples.
/// Returns the mean loss; gradients are accumulated into the store.
pub fn bpr_batch_step(
    store: &mut ParamStore,
    triples: &[(usize, u32, u32)],
) -> Result<f64> {
    let dim = store.value("user.emb").cols();
    let scale = 1.0 / triples.len() as f64;
    let mut loss = 0.0;
    let mut du = vec![0.0; dim];
    for &(u, pos, neg) in triples {
        let (x, coeff);
        {
            let users = store.value("user.emb");
            let items = store.value("item.emb");
            let bias = store.value("item.bias");
            let urow = users.row(u);
            let prow = items.row(pos as usize);
            let nrow = items.row(neg as usize);
            x = DenseMatrix::dot_row(urow, prow) - DenseMatrix::dot_row(urow, nrow)
                + bias.get(pos as usize, 0)
                - bias.get(neg as usize, 0);
            // d(-log sigmoid(x))/dx = -sigmoid(-x)
            coeff = -sigmoid(-x) * scale;
            for (k, d) in du.iter_mut().enumerate() {
                *d = coeff * (prow[k] - nrow[k]);
            }
        }
        loss -= log_sigmoid(x) * scale;
        // Scatter gradients.
        let urow: Vec<f64> = store.value("user.emb").row(u).to_vec();
        {
            let gu = store.grad_mut("user.emb").row_mut(u);
            for (g, &d) in gu.iter_mut().zip(du.iter()) {
                *g += d;
            }
        }
        {
            let gp = store.grad_mut("item.emb").row_mut(pos as usize);
            for (g, &uv) in gp.iter_mut().zip(urow.iter()) {
                *g += coeff * uv;
            }
        }
        {
            let gn = store.grad_mut("item.emb").row_mut(neg as usize);
            for (g, &uv) in gn.iter_mut().zip(urow.iter()) {
                *g -= coeff * uv;
            }
        }
        {
            let gb = store.grad_mut("item.bias");
            let cur = gb.get(pos as usize, 0);
            gb.set(pos as usize, 0, cur + coeff);
            let cur = gb.get(neg as usize, 0);
            gb.set(neg as usize, 0, cur - coeff);
        }
    }
    Ok(loss)
}

pub fn train(
    train: &InteractionMatrix,
    val: Option<&InteractionMatrix>,
    cfg: &TrainConfig,
) -> Result<ParamStore> {
    let mut rng = Rng::new(cfg.seed);
    let mut store = init_store(train.n_users(), train.n_items(), cfg.embedding_dim, &mut rng);
    let adam = AdamConfig::new(cfg.lr, 0.0);
    let mut positives: Vec<(usize, u32)> = train.iter_pairs().collect();
    let mut stopper = EarlyStop::new(cfg.patience);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut positives);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in positives.chunks(cfg.batch_size) {
            let triples: Vec<(usize, u32, u32)> = chunk
                .iter()
                .map(|&(u, pos)| (u, pos, sample_negative(&mut rng, train, u)))
                .collect();
            store.zero_grad();
            let loss = bpr_batch_step(&mut store, &triples)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    stage: "mf victim".into(),
                    detail: format!("non-finite loss at epoch {epoch}"),
                });
            }
            store.add_l2_to_grads(cfg.weight_decay);
            store.adam_step(&adam);
            epoch_loss += loss;
            batches += 1;
        }
        let _ = epoch_loss / batches.max(1) as f64;

        if let Some(val) = val {
            if stopper.enabled() && val.nnz() > 0 && (epoch + 1) % cfg.eval_every == 0 {
                let (users, items) = score_tables(&store);
                let scorer = EmbeddingScorer {
                    users: &users,
                    items: &items,
                };
                let metrics = evaluate_rec(&scorer, train, val, cfg.top_k)?;
                if stopper.observe(metrics.recall, &store) {
                    break;
                }
            }
        }
    }
    Ok(stopper.into_best(store))
}

/// Per-epoch mean BPR loss without early stopping, for smoke checks.
pub fn epoch_losses(train: &InteractionMatrix, cfg: &TrainConfig, epochs: usize) -> Result<Vec<f64>> {
    let mut rng = Rng::new(cfg.seed);
    let mut store = init_store(train.n_users(), train.n_items(), cfg.embedding_dim, &mut rng);
    let adam = AdamConfig::new(cfg.lr, 0.0);
    let mut positives: Vec<(usize, u32)> = train.iter_pairs().collect();
    let mut out = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        rng.shuffle(&mut positives);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in positives.chunks(cfg.batch_size) {
            let triples: Vec<(usize, u32, u32)> = chunk
                .iter()
                .map(|&(u, pos)| (u, pos, sample_negative(&mut rng, train, u)))
                .collect();
            store.zero_grad();
            epoch_loss += bpr_batch_step(&mut store, &triples)?;
            batches += 1;
            store.add_l2_to_grads(cfg.weight_decay);
            store.adam_step(&adam);
        }
        out.push(epoch_loss / batches.max(1) as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::gradcheck::grad_check;
    use crate::victims::{train_victim, VictimKind};

    fn separable_toy() -> InteractionMatrix {
        InteractionMatrix::from_rows(2, vec![vec![0], vec![1]]).unwrap()
    }

    #[test]
    fn bpr_grad_check() {
        let mut rng = Rng::new(2);
        let mut store = init_store(3, 4, 3, &mut rng);
        let triples = vec![(0usize, 1u32, 2u32), (1, 0, 3), (2, 2, 0)];
        let mut f = |s: &mut ParamStore| bpr_batch_step(s, &triples);
        let report = grad_check(&mut f, &mut store, 1e-4, 1e-4).unwrap();
        assert!(report.passed, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn separable_toy_learns_preferences() {
        let train = separable_toy();
        let cfg = TrainConfig {
            embedding_dim: 8,
            lr: 5e-2,
            weight_decay: 0.0,
            epochs: 300,
            batch_size: 4,
            patience: 0,
            seed: 3,
            ..TrainConfig::default()
        };
        let model = train_victim(VictimKind::Mf, &train, None, &cfg).unwrap();
        assert!(model.score(0, 0) > model.score(0, 1));
        assert!(model.score(1, 1) > model.score(1, 0));
    }

    #[test]
    fn zero_epochs_scores_from_initialization() {
        let train = separable_toy();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let model = train_victim(VictimKind::Mf, &train, None, &cfg).unwrap();
        // Smoke contract: scoring works and is finite.
        assert!(model.score(0, 0).is_finite());
        assert!(model.score(1, 1).is_finite());
    }

    #[test]
    fn retraining_reproduces_identical_parameters() {
        let train = InteractionMatrix::from_rows(
            6,
            vec![vec![0, 1, 2], vec![2, 3], vec![4, 5], vec![0, 5]],
        )
        .unwrap();
        let cfg = TrainConfig {
            embedding_dim: 4,
            epochs: 20,
            batch_size: 4,
            patience: 0,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train_victim(VictimKind::Mf, &train, None, &cfg).unwrap();
        let b = train_victim(VictimKind::Mf, &train, None, &cfg).unwrap();
        assert_eq!(a.store.content_hash(), b.store.content_hash());
    }

    #[test]
    fn checkpoint_round_trip_preserves_scores() {
        let train = separable_toy();
        let cfg = TrainConfig {
            embedding_dim: 4,
            epochs: 30,
            batch_size: 4,
            patience: 0,
            seed: 5,
            ..TrainConfig::default()
        };
        let model = train_victim(VictimKind::Mf, &train, None, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mf.ckpt");
        model.save(&path).unwrap();
        let loaded = crate::victims::VictimModel::load(&path, &train).unwrap();
        assert_eq!(loaded.kind, VictimKind::Mf);
        for u in 0..2 {
            for i in 0..2 {
                assert!((model.score(u, i) - loaded.score(u, i)).abs() < 1e-15);
            }
        }
    }
}
