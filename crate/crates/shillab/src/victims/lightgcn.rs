//! LightGCN victim: a single embedding table propagated through the
//! parameter-free normalized adjacency of the training interactions, with
//! layer-averaged representations scored by inner product and trained
//! with BPR. Propagation is linear, so gradients flow back through the
//! same adjacency applications.

use crate::data::interactions::InteractionMatrix;
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::num::matrix::{log_sigmoid, sigmoid, DenseMatrix};
use crate::num::params::{AdamConfig, Init, ParamStore};
use crate::num::rng::Rng;
use crate::victims::mf::EmbeddingScorer;
use crate::victims::{evaluate_rec, sample_negative, EarlyStop, TrainConfig};

pub fn init_store(n_nodes: usize, dim: usize, rng: &mut Rng) -> ParamStore {
    let mut store = ParamStore::new();
    store.add("emb", n_nodes, dim, Init::XavierUniform, rng);
    store
}

fn propagate_full(g: &BipartiteGraph, emb: &DenseMatrix, layers: usize) -> Result<DenseMatrix> {
    crate::graph::propagate(g, emb, layers)
}

/// Splits the propagated node table into user and item tables.
pub fn propagated_tables(
    store: &ParamStore,
    train: &InteractionMatrix,
    layers: usize,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let g = BipartiteGraph::from_interactions(train);
    let out = propagate_full(&g, store.value("emb"), layers)?;
    let d = out.cols();
    let n = train.n_users();
    let m = train.n_items();
    let mut users = DenseMatrix::zeros(n, d);
    let mut items = DenseMatrix::zeros(m, d);
    for u in 0..n {
        users.row_mut(u).copy_from_slice(out.row(u));
    }
    for i in 0..m {
        items.row_mut(i).copy_from_slice(out.row(n + i));
    }
    Ok((users, items))
}

/// BPR loss over triples evaluated on propagated representations, with the
/// gradient pushed back through the linear propagation. Exposed for the
/// gradient checker.
pub fn bpr_propagated_step(
    store: &mut ParamStore,
    g: &BipartiteGraph,
    layers: usize,
    n_users: usize,
    triples: &[(usize, u32, u32)],
) -> Result<f64> {
    let emb = store.value("emb").clone();
    let out = propagate_full(g, &emb, layers)?;
    let d = out.cols();
    let scale = 1.0 / triples.len() as f64;
    let mut loss = 0.0;
    let mut g_out = DenseMatrix::zeros(out.rows(), d);
    for &(u, pos, neg) in triples {
        let urow = out.row(u);
        let prow = out.row(n_users + pos as usize);
        let nrow = out.row(n_users + neg as usize);
        let x = DenseMatrix::dot_row(urow, prow) - DenseMatrix::dot_row(urow, nrow);
        loss -= log_sigmoid(x) * scale;
        let coeff = -sigmoid(-x) * scale;
        for k in 0..d {
            g_out.row_mut(u)[k] += coeff * (prow[k] - nrow[k]);
        }
        let urow: Vec<f64> = out.row(u).to_vec();
        for k in 0..d {
            g_out.row_mut(n_users + pos as usize)[k] += coeff * urow[k];
            g_out.row_mut(n_users + neg as usize)[k] -= coeff * urow[k];
        }
    }
    // out = mean of A^l emb over l=0..L, and A is symmetric, so
    // d emb = mean of A^l g_out.
    let mut acc = g_out.clone();
    let mut total = g_out;
    for _ in 0..layers {
        acc = g.apply(&acc)?;
        total.scaled_add_assign(1.0, &acc)?;
    }
    let total = total.scale(1.0 / (layers as f64 + 1.0));
    store.accumulate_grad("emb", &total)?;
    Ok(loss)
}

pub fn train(
    train: &InteractionMatrix,
    val: Option<&InteractionMatrix>,
    cfg: &TrainConfig,
) -> Result<ParamStore> {
    let n = train.n_users();
    let g = BipartiteGraph::from_interactions(train);
    let mut rng = Rng::new(cfg.seed);
    let mut store = init_store(n + train.n_items(), cfg.embedding_dim, &mut rng);
    let adam = AdamConfig::new(cfg.lr, 0.0);
    let mut positives: Vec<(usize, u32)> = train.iter_pairs().collect();
    let mut stopper = EarlyStop::new(cfg.patience);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut positives);
        for chunk in positives.chunks(cfg.batch_size) {
            let triples: Vec<(usize, u32, u32)> = chunk
                .iter()
                .map(|&(u, pos)| (u, pos, sample_negative(&mut rng, train, u)))
                .collect();
            store.zero_grad();
            let loss = bpr_propagated_step(&mut store, &g, cfg.lgn_layers, n, &triples)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    stage: "lgn victim".into(),
                    detail: format!("non-finite loss at epoch {epoch}"),
                });
            }
            store.add_l2_to_grads(cfg.weight_decay);
            store.adam_step(&adam);
        }
        if let Some(val) = val {
            if stopper.enabled() && val.nnz() > 0 && (epoch + 1) % cfg.eval_every == 0 {
                let (users, items) = propagated_tables(&store, train, cfg.lgn_layers)?;
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
