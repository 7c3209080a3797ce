//! Injection and target-item attack metrics (HR@K, MRR@K) over genuine
//! users.

use crate::data::interactions::InteractionMatrix;
use crate::error::{Error, Result};
use crate::victims::{rank_of, Scorer};

/// Row-stacks fake profiles below the genuine matrix; fake users occupy
/// indices [n, n + k).
pub fn inject(y: &InteractionMatrix, fakes: &InteractionMatrix) -> Result<InteractionMatrix> {
    y.vstack(fakes)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TargetMetrics {
    pub target: u32,
    pub hit_ratio: f64,
    pub mrr: f64,
    pub eligible_users: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct AttackMetrics {
    pub hit_ratio: f64,
    pub mrr: f64,
    pub per_target: Vec<TargetMetrics>,
}

/// HR@K and MRR@K for each target over genuine users, averaged across
/// targets. A user counts for a target only if the target is absent from
/// their training row; candidates exclude the user's training items.
/// Targets interacted by every genuine user are skipped with a warning.
pub fn attack_metrics(
    scorer: &dyn Scorer,
    targets: &[u32],
    train: &InteractionMatrix,
    n_genuine: usize,
    k: usize,
) -> Result<AttackMetrics> {
    if targets.is_empty() {
        return Err(Error::Eval("no target items".into()));
    }
    if n_genuine == 0 || n_genuine > train.n_users() {
        return Err(Error::Eval(format!(
            "genuine user count {n_genuine} out of range"
        )));
    }
    let mut per_target = Vec::with_capacity(targets.len());
    for &t in targets {
        let mut eligible = 0usize;
        let mut hits = 0usize;
        let mut rr_sum = 0.0;
        for u in 0..n_genuine {
            if train.contains(u, t) {
                continue;
            }
            eligible += 1;
            let scores = scorer.scores_for_user(u);
            let rank = rank_of(&scores, t, train.row(u))
                .expect("target not excluded for eligible user");
            if rank <= k {
                hits += 1;
                rr_sum += 1.0 / rank as f64;
            }
        }
        if eligible == 0 {
            eprintln!("warning: target {t} interacted by every genuine user; skipped");
            continue;
        }
        per_target.push(TargetMetrics {
            target: t,
            hit_ratio: hits as f64 / eligible as f64,
            mrr: rr_sum / eligible as f64,
            eligible_users: eligible,
        });
    }
    if per_target.is_empty() {
        return Err(Error::Eval("every target was skipped".into()));
    }
    let hit_ratio = per_target.iter().map(|m| m.hit_ratio).sum::<f64>() / per_target.len() as f64;
    let mrr = per_target.iter().map(|m| m.mrr).sum::<f64>() / per_target.len() as f64;
    let metrics = AttackMetrics {
        hit_ratio,
        mrr,
        per_target,
    };
    debug_assert!(metrics.mrr <= metrics.hit_ratio + 1e-12);
    Ok(metrics)
}
