//! NCF victim: user/item embeddings concatenated into an MLP tower
//! (128 -> 64 -> 32 -> sigmoid score), trained with binary cross-entropy
//! over sampled negatives.

use crate::data::interactions::InteractionMatrix;
use crate::error::{Error, Result};
use crate::num::matrix::{relu, sigmoid, DenseMatrix};
use crate::num::params::{AdamConfig, Init, ParamStore};
use crate::num::rng::Rng;
use crate::victims::{evaluate_rec, sample_negative, EarlyStop, Scorer, TrainConfig};

const HIDDEN: [usize; 3] = [128, 64, 32];

pub fn init_store(n_users: usize, n_items: usize, dim: usize, rng: &mut Rng) -> ParamStore {
    let mut store = ParamStore::new();
    store.add("user.emb", n_users, dim, Init::XavierUniform, rng);
    store.add("item.emb", n_items, dim, Init::XavierUniform, rng);
    let mut prev = 2 * dim;
    for (l, &width) in HIDDEN.iter().enumerate() {
        store.add(&format!("l{}.w", l + 1), prev, width, Init::XavierUniform, rng);
        store.add(&format!("l{}.b", l + 1), 1, width, Init::Zeros, rng);
        prev = width;
    }
    store.add("out.w", prev, 1, Init::XavierUniform, rng);
    store.add("out.b", 1, 1, Init::Zeros, rng);
    store
}

fn tower_forward(store: &ParamStore, x: &DenseMatrix) -> Result<(Vec<DenseMatrix>, DenseMatrix)> {
    let mut acts = Vec::with_capacity(HIDDEN.len());
    let mut h = x.clone();
    for l in 1..=HIDDEN.len() {
        h = h
            .matmul(store.value(&format!("l{l}.w")))?
            .add_row_broadcast(store.value(&format!("l{l}.b")))?
            .map(relu);
        acts.push(h.clone());
    }
    let logits = h
        .matmul(store.value("out.w"))?
        .add_row_broadcast(store.value("out.b"))?;
    Ok((acts, logits))
}

fn assemble_input(store: &ParamStore, pairs: &[(usize, u32)]) -> DenseMatrix {
    let users = store.value("user.emb");
    let items = store.value("item.emb");
    let d = users.cols();
    let mut x = DenseMatrix::zeros(pairs.len(), 2 * d);
    for (r, &(u, i)) in pairs.iter().enumerate() {
        let row = x.row_mut(r);
        row[..d].copy_from_slice(users.row(u));
        row[d..].copy_from_slice(items.row(i as usize));
    }
    x
}

/// BCE loss and gradients over labeled (user, item, label) samples.
pub fn bce_batch_step(store: &mut ParamStore, samples: &[(usize, u32, f64)]) -> Result<f64> {
    let pairs: Vec<(usize, u32)> = samples.iter().map(|&(u, i, _)| (u, i)).collect();
    let x = assemble_input(store, &pairs);
    let (acts, logits) = tower_forward(store, &x)?;
    let batch = samples.len() as f64;

    let mut loss = 0.0;
    let mut dlogits = DenseMatrix::zeros(samples.len(), 1);
    for (r, &(_, _, label)) in samples.iter().enumerate() {
        let z = logits.get(r, 0);
        let p = sigmoid(z);
        // -[y ln p + (1-y) ln(1-p)], stabilized through log_sigmoid.
        loss -= if label > 0.5 {
            crate::num::matrix::log_sigmoid(z)
        } else {
            crate::num::matrix::log_sigmoid(-z)
        };
        dlogits.set(r, 0, (p - label) / batch);
    }
    loss /= batch;

    // Backward through the output layer and tower.
    let last = acts.last().unwrap();
    store.accumulate_grad("out.w", &last.matmul_tn(&dlogits)?)?;
    store.accumulate_grad("out.b", &dlogits.col_sums())?;
    let mut dh = dlogits.matmul_nt(store.value("out.w"))?;
    for l in (1..=HIDDEN.len()).rev() {
        let act = &acts[l - 1];
        // ReLU mask.
        let dpre = dh.hadamard(&act.map(|v| if v > 0.0 { 1.0 } else { 0.0 }))?;
        let input: DenseMatrix = if l == 1 {
            x.clone()
        } else {
            acts[l - 2].clone()
        };
        store.accumulate_grad(&format!("l{l}.w"), &input.matmul_tn(&dpre)?)?;
        store.accumulate_grad(&format!("l{l}.b"), &dpre.col_sums())?;
        dh = dpre.matmul_nt(store.value(&format!("l{l}.w")))?;
    }
    // dh is now d loss / d x: split into embedding gradients.
    let d = store.value("user.emb").cols();
    for (r, &(u, i)) in pairs.iter().enumerate() {
        let row: Vec<f64> = dh.row(r).to_vec();
        {
            let gu = store.grad_mut("user.emb").row_mut(u);
            for (g, &v) in gu.iter_mut().zip(row[..d].iter()) {
                *g += v;
            }
        }
        {
            let gi = store.grad_mut("item.emb").row_mut(i as usize);
            for (g, &v) in gi.iter_mut().zip(row[d..].iter()) {
                *g += v;
            }
        }
    }
    Ok(loss)
}

pub fn score_one(store: &ParamStore, u: usize, i: usize) -> f64 {
    let x = assemble_input(store, &[(u, i as u32)]);
    let (_, logits) = tower_forward(store, &x).expect("tower shapes are fixed");
    sigmoid(logits.get(0, 0))
}

pub fn score_all_items(store: &ParamStore, u: usize, n_items: usize) -> Vec<f64> {
    let pairs: Vec<(usize, u32)> = (0..n_items as u32).map(|i| (u, i)).collect();
    let x = assemble_input(store, &pairs);
    let (_, logits) = tower_forward(store, &x).expect("tower shapes are fixed");
    (0..n_items).map(|r| sigmoid(logits.get(r, 0))).collect()
}

struct TowerScorer<'a> {
    store: &'a ParamStore,
    n_users: usize,
    n_items: usize,
}

impl Scorer for TowerScorer<'_> {
    fn n_users(&self) -> usize {
        self.n_users
    }
    fn n_items(&self) -> usize {
        self.n_items
    }
    fn scores_for_user(&self, u: usize) -> Vec<f64> {
        score_all_items(self.store, u, self.n_items)
    }
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
    // Scoring every item through the tower is costly; evaluate sparsely.
    let eval_every = cfg.eval_every.max(5);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut positives);
        for chunk in positives.chunks(cfg.batch_size.max(1)) {
            let mut samples: Vec<(usize, u32, f64)> =
                Vec::with_capacity(chunk.len() * (1 + cfg.negatives));
            for &(u, pos) in chunk {
                samples.push((u, pos, 1.0));
                for _ in 0..cfg.negatives {
                    samples.push((u, sample_negative(&mut rng, train, u), 0.0));
                }
            }
            store.zero_grad();
            let loss = bce_batch_step(&mut store, &samples)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    stage: "ncf victim".into(),
                    detail: format!("non-finite loss at epoch {epoch}"),
                });
            }
            store.add_l2_to_grads(cfg.weight_decay);
            store.adam_step(&adam);
        }
        if let Some(val) = val {
            if stopper.enabled() && val.nnz() > 0 && (epoch + 1) % eval_every == 0 {
                let scorer = TowerScorer {
                    store: &store,
                    n_users: train.n_users(),
                    n_items: train.n_items(),
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::gradcheck::grad_check;
    use crate::victims::{train_victim, VictimKind};

    #[test]
    fn bce_tower_grad_check_small() {
        // Small dims keep the finite-difference sweep fast; the tower
        // widths are fixed so the check runs the real code path.
        let mut rng = Rng::new(5);
        let mut store = init_store(3, 4, 2, &mut rng);
        let samples = vec![(0usize, 1u32, 1.0), (1, 2, 0.0), (2, 0, 1.0)];
        let mut f = |s: &mut ParamStore| bce_batch_step(s, &samples);
        let report = grad_check(&mut f, &mut store, 1e-4, 2e-4).unwrap();
        assert!(report.passed, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn separable_toy_learns_preferences() {
        let train = InteractionMatrix::from_rows(2, vec![vec![0], vec![1]]).unwrap();
        let cfg = TrainConfig {
            embedding_dim: 8,
            lr: 1e-2,
            weight_decay: 0.0,
            epochs: 200,
            batch_size: 8,
            negatives: 1,
            patience: 0,
            seed: 2,
            ..TrainConfig::default()
        };
        let model = train_victim(VictimKind::Ncf, &train, None, &cfg).unwrap();
        assert!(model.score(0, 0) > model.score(0, 1));
        assert!(model.score(1, 1) > model.score(1, 0));
    }
}
