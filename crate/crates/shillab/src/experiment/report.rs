//! Per-experiment report: JSON bundle plus deterministic CSV tables.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::metrics::AttackMetrics;
use crate::experiment::config::ExperimentConfig;
use crate::victims::RecMetrics;

#[derive(Debug, Clone, serde::Serialize)]
pub struct DatasetSummary {
    pub source: String,
    pub n_users: usize,
    pub n_items: usize,
    pub nnz: usize,
    pub sparsity: f64,
    pub view_users: usize,
    pub view_nnz: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DetectionSummary {
    pub precision: f64,
    pub recall: f64,
    pub precision_defined: bool,
    pub flagged: usize,
    pub true_positives: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MethodReport {
    pub attack: AttackMetrics,
    pub utility: RecMetrics,
    pub detection: Option<DetectionSummary>,
    pub fake_profiles: usize,
    pub fake_nnz: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct VictimReport {
    pub clean_utility: RecMetrics,
    /// Pre-attack metrics of the same targets on the clean model.
    pub clean_attack: AttackMetrics,
    pub attacks: BTreeMap<String, MethodReport>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RunReport {
    pub config_hash: String,
    pub seed: u64,
    pub dataset: DatasetSummary,
    pub targets: Vec<u32>,
    pub victims: BTreeMap<String, VictimReport>,
    /// Wall-clock seconds per pipeline stage (loads count for cached ones).
    pub stage_seconds: BTreeMap<String, f64>,
    /// Stages satisfied from the content-addressed store.
    pub cached_stages: Vec<String>,
    /// Stage name -> content key of the artifact used.
    pub artifact_keys: BTreeMap<String, String>,
    pub config: ExperimentConfig,
}

impl RunReport {
    /// Attack-model seconds for one diffusion-family method: encoder
    /// pretraining plus approximator training plus generation.
    pub fn attack_stage_seconds(&self, method: &str) -> f64 {
        let mut total = 0.0;
        for (stage, secs) in &self.stage_seconds {
            if stage == "ae"
                || stage == format!("lda:{method}").as_str()
                || stage == format!("generate:{method}").as_str()
            {
                total += secs;
            }
        }
        total
    }

    pub fn victim_train_seconds(&self, kind: &str, variant: &str) -> f64 {
        self.stage_seconds
            .get(&format!("victim:{kind}:{variant}"))
            .copied()
            .unwrap_or(0.0)
    }

    /// `victim,method,target,hr,mrr` rows; `none` is the clean model and
    /// `mean` aggregates the per-target rows. Byte-stable across runs.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("victim,method,target,hr,mrr\n");
        for (kind, vr) in &self.victims {
            let mut push = |method: &str, metrics: &AttackMetrics| {
                out.push_str(&format!(
                    "{kind},{method},mean,{:.6},{:.6}\n",
                    metrics.hit_ratio, metrics.mrr
                ));
                for t in &metrics.per_target {
                    out.push_str(&format!(
                        "{kind},{method},{},{:.6},{:.6}\n",
                        t.target, t.hit_ratio, t.mrr
                    ));
                }
            };
            push("none", &vr.clean_attack);
            for (method, mr) in &vr.attacks {
                push(method, &mr.attack);
            }
        }
        out
    }

    pub fn detection_csv(&self) -> String {
        let mut out = String::from("victim,method,precision,recall,flagged,true_positives\n");
        for (kind, vr) in &self.victims {
            for (method, mr) in &vr.attacks {
                if let Some(d) = &mr.detection {
                    out.push_str(&format!(
                        "{kind},{method},{:.6},{:.6},{},{}\n",
                        d.precision, d.recall, d.flagged, d.true_positives
                    ));
                }
            }
        }
        out
    }

    pub fn runtimes_csv(&self) -> String {
        let mut out = String::from("stage,seconds,cached\n");
        for (stage, secs) in &self.stage_seconds {
            let cached = self.cached_stages.iter().any(|s| s == stage);
            out.push_str(&format!("{stage},{secs:.3},{cached}\n"));
        }
        out
    }

    /// Writes report.json plus the CSV tables under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let write = |name: &str, bytes: &[u8]| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
        };
        write(
            "report.json",
            serde_json::to_string_pretty(self).unwrap().as_bytes(),
        )?;
        write("metrics.csv", self.metrics_csv().as_bytes())?;
        write("detection.csv", self.detection_csv().as_bytes())?;
        write("runtimes.csv", self.runtimes_csv().as_bytes())?;
        Ok(())
    }
}
