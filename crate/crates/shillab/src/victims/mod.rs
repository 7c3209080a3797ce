//! Victim recommenders (MF-BPR, LightGCN, NCF): training on clean or
//! poisoned interactions, scoring, top-K ranking, and held-out evaluation.

pub mod lightgcn;
pub mod mf;
pub mod ncf;

use std::path::Path;

use crate::data::interactions::InteractionMatrix;
use crate::error::{Error, Result};
use crate::num::matrix::DenseMatrix;
use crate::num::params::{sha256_hex, ParamStore};
use crate::num::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VictimKind {
    Mf,
    Lgn,
    Ncf,
}

impl VictimKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VictimKind::Mf => "mf",
            VictimKind::Lgn => "lgn",
            VictimKind::Ncf => "ncf",
        }
    }
}

impl std::str::FromStr for VictimKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mf" => Ok(VictimKind::Mf),
            "lgn" | "lightgcn" => Ok(VictimKind::Lgn),
            "ncf" => Ok(VictimKind::Ncf),
            other => Err(Error::Config(format!("unknown victim kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub embedding_dim: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Negatives per positive (NCF binary cross-entropy).
    pub negatives: usize,
    /// Propagation depth for the LightGCN victim.
    pub lgn_layers: usize,
    /// Early-stop patience in validation evaluations; 0 disables early stop.
    pub patience: usize,
    /// Validation evaluation cadence in epochs.
    pub eval_every: usize,
    pub top_k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embedding_dim: 64,
            lr: 1e-2,
            weight_decay: 1e-5,
            epochs: 200,
            batch_size: 2048,
            negatives: 4,
            lgn_layers: 2,
            patience: 10,
            eval_every: 1,
            top_k: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn config_hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).unwrap().as_bytes())
    }
}

/// Anything that can score every item for a user.
pub trait Scorer {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;
    fn scores_for_user(&self, u: usize) -> Vec<f64>;
}

/// Ranks items by train-set interaction count; the sanity baseline any
/// personalized model has to beat.
pub struct PopularityScorer {
    n_users: usize,
    scores: Vec<f64>,
}

impl PopularityScorer {
    pub fn from_train(train: &InteractionMatrix) -> Self {
        PopularityScorer {
            n_users: train.n_users(),
            scores: train.item_counts().iter().map(|&c| c as f64).collect(),
        }
    }
}

impl Scorer for PopularityScorer {
    fn n_users(&self) -> usize {
        self.n_users
    }
    fn n_items(&self) -> usize {
        self.scores.len()
    }
    fn scores_for_user(&self, _u: usize) -> Vec<f64> {
        self.scores.clone()
    }
}

#[derive(Debug)]
enum ScoringCache {
    /// MF and LightGCN: inner product of cached representation tables.
    DotProduct {
        users: DenseMatrix,
        items: DenseMatrix,
    },
    /// NCF scores through its MLP tower on demand.
    Tower,
}

/// A trained victim with frozen parameters.
#[derive(Debug)]
pub struct VictimModel {
    pub kind: VictimKind,
    pub store: ParamStore,
    pub cfg: TrainConfig,
    n_users: usize,
    n_items: usize,
    cache: ScoringCache,
}

impl VictimModel {
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn score(&self, u: usize, i: usize) -> f64 {
        match &self.cache {
            ScoringCache::DotProduct { users, items } => {
                DenseMatrix::dot_row(users.row(u), items.row(i))
            }
            ScoringCache::Tower => ncf::score_one(&self.store, u, i),
        }
    }

    /// Persists parameters with a metadata header.
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": self.kind.as_str(),
            "n_users": self.n_users,
            "n_items": self.n_items,
            "seed": self.cfg.seed,
            "config_hash": self.cfg.config_hash(),
            "config": self.cfg,
        });
        self.store.save(path, &meta)
    }

    /// Restores a checkpoint. The training interactions are needed to
    /// rebuild the LightGCN propagation cache.
    pub fn load(path: &Path, train: &InteractionMatrix) -> Result<VictimModel> {
        let (store, meta) = ParamStore::load(path)?;
        let kind: VictimKind = meta["kind"]
            .as_str()
            .unwrap_or("")
            .parse()?;
        let cfg: TrainConfig = serde_json::from_value(meta["config"].clone())
            .map_err(|e| Error::Config(format!("bad checkpoint config: {e}")))?;
        let n_users = meta["n_users"].as_u64().unwrap_or(0) as usize;
        let n_items = meta["n_items"].as_u64().unwrap_or(0) as usize;
        let cache = build_cache(kind, &store, train, &cfg)?;
        Ok(VictimModel {
            kind,
            store,
            cfg,
            n_users,
            n_items,
            cache,
        })
    }
}

impl Scorer for VictimModel {
    fn n_users(&self) -> usize {
        self.n_users
    }
    fn n_items(&self) -> usize {
        self.n_items
    }
    fn scores_for_user(&self, u: usize) -> Vec<f64> {
        match &self.cache {
            ScoringCache::DotProduct { users, items } => {
                let urow = users.row(u);
                (0..self.n_items)
                    .map(|i| DenseMatrix::dot_row(urow, items.row(i)))
                    .collect()
            }
            ScoringCache::Tower => ncf::score_all_items(&self.store, u, self.n_items),
        }
    }
}

fn build_cache(
    kind: VictimKind,
    store: &ParamStore,
    train: &InteractionMatrix,
    cfg: &TrainConfig,
) -> Result<ScoringCache> {
    match kind {
        VictimKind::Mf => {
            let (users, items) = mf::score_tables(store);
            Ok(ScoringCache::DotProduct { users, items })
        }
        VictimKind::Lgn => {
            let (users, items) = lightgcn::propagated_tables(store, train, cfg.lgn_layers)?;
            Ok(ScoringCache::DotProduct { users, items })
        }
        VictimKind::Ncf => Ok(ScoringCache::Tower),
    }
}

/// Trains the requested victim. `val` drives early stopping when present;
/// users with empty validation rows are ignored by the stopper.
pub fn train_victim(
    kind: VictimKind,
    train: &InteractionMatrix,
    val: Option<&InteractionMatrix>,
    cfg: &TrainConfig,
) -> Result<VictimModel> {
    if train.nnz() == 0 {
        return Err(Error::Training {
            stage: format!("{} victim", kind.as_str()),
            detail: "empty training matrix".into(),
        });
    }
    let store = match kind {
        VictimKind::Mf => mf::train(train, val, cfg)?,
        VictimKind::Lgn => lightgcn::train(train, val, cfg)?,
        VictimKind::Ncf => ncf::train(train, val, cfg)?,
    };
    let cache = build_cache(kind, &store, train, cfg)?;
    Ok(VictimModel {
        kind,
        store,
        cfg: cfg.clone(),
        n_users: train.n_users(),
        n_items: train.n_items(),
        cache,
    })
}

/// K highest-scoring items outside `exclude` (sorted slice), descending
/// score with ties broken by ascending item index.
pub fn topk(scores: &[f64], k: usize, exclude: &[u32]) -> Vec<u32> {
    let mut candidates: Vec<u32> = Vec::with_capacity(scores.len());
    for i in 0..scores.len() as u32 {
        if exclude.binary_search(&i).is_err() {
            candidates.push(i);
        }
    }
    let k = k.min(candidates.len());
    if k == 0 {
        return Vec::new();
    }
    candidates.select_nth_unstable_by(k - 1, |&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut head: Vec<u32> = candidates[..k].to_vec();
    head.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    head
}

pub fn topk_for_user(scorer: &dyn Scorer, u: usize, k: usize, exclude: &[u32]) -> Vec<u32> {
    let scores = scorer.scores_for_user(u);
    topk(&scores, k, exclude)
}

/// 1-based rank of `item` among candidates outside `exclude`, under the
/// same ordering as `topk`. None if the item itself is excluded.
pub fn rank_of(scores: &[f64], item: u32, exclude: &[u32]) -> Option<usize> {
    if exclude.binary_search(&item).is_ok() {
        return None;
    }
    let s = scores[item as usize];
    let mut rank = 1usize;
    for i in 0..scores.len() as u32 {
        if i == item || exclude.binary_search(&i).is_ok() {
            continue;
        }
        let v = scores[i as usize];
        if v > s || (v == s && i < item) {
            rank += 1;
        }
    }
    Some(rank)
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RecMetrics {
    pub recall: f64,
    pub ndcg: f64,
    pub evaluated_users: usize,
}

/// Mean per-user Recall@K and NDCG@K over users with at least one test
/// item, excluding their train items from the candidate pool.
pub fn evaluate_rec(
    scorer: &dyn Scorer,
    train: &InteractionMatrix,
    test: &InteractionMatrix,
    k: usize,
) -> Result<RecMetrics> {
    if test.nnz() == 0 {
        return Err(Error::Eval("empty test set".into()));
    }
    let mut recall_sum = 0.0;
    let mut ndcg_sum = 0.0;
    let mut users = 0usize;
    let n = test.n_users().min(scorer.n_users());
    for u in 0..n {
        let truth = test.row(u);
        if truth.is_empty() {
            continue;
        }
        let ranked = topk_for_user(scorer, u, k, train.row(u));
        let mut hits = 0usize;
        let mut dcg = 0.0;
        for (pos, &i) in ranked.iter().enumerate() {
            if truth.binary_search(&i).is_ok() {
                hits += 1;
                dcg += 1.0 / ((pos + 2) as f64).log2();
            }
        }
        let ideal = truth.len().min(k);
        let idcg: f64 = (0..ideal).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
        recall_sum += hits as f64 / truth.len() as f64;
        ndcg_sum += if idcg > 0.0 { dcg / idcg } else { 0.0 };
        users += 1;
    }
    if users == 0 {
        return Err(Error::Eval("no users with test items".into()));
    }
    Ok(RecMetrics {
        recall: recall_sum / users as f64,
        ndcg: ndcg_sum / users as f64,
        evaluated_users: users,
    })
}

/// Uniform negative sampling over non-interacted items.
pub(crate) fn sample_negative(rng: &mut Rng, train: &InteractionMatrix, u: usize) -> u32 {
    let m = train.n_items();
    debug_assert!(train.row(u).len() < m, "user interacted with every item");
    loop {
        let cand = rng.below(m) as u32;
        if !train.contains(u, cand) {
            return cand;
        }
    }
}

/// Shared early-stopping state over validation recall.
pub(crate) struct EarlyStop {
    best: f64,
    best_store: Option<ParamStore>,
    strikes: usize,
    patience: usize,
}

impl EarlyStop {
    pub fn new(patience: usize) -> Self {
        EarlyStop {
            best: f64::NEG_INFINITY,
            best_store: None,
            strikes: 0,
            patience,
        }
    }

    /// With patience 0 the budget runs out unconditionally and the final
    /// parameters are kept; no snapshots are taken.
    pub fn enabled(&self) -> bool {
        self.patience > 0
    }

    /// Records a validation score; returns true when training should stop.
    pub fn observe(&mut self, score: f64, store: &ParamStore) -> bool {
        if !self.enabled() {
            return false;
        }
        if score > self.best {
            self.best = score;
            self.best_store = Some(store.clone());
            self.strikes = 0;
            false
        } else {
            self.strikes += 1;
            self.strikes >= self.patience
        }
    }

    pub fn into_best(self, fallback: ParamStore) -> ParamStore {
        self.best_store.unwrap_or(fallback)
    }
}
