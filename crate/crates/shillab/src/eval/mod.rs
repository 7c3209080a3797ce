//! Injection, attack metrics, and imperceptibility analysis (unsupervised
//! detection and PCA projection export).

pub mod detect;
pub mod metrics;
pub mod pca;

pub use detect::{detect, DetectorConfig, DetectorOutput};
pub use metrics::{attack_metrics, inject, AttackMetrics, TargetMetrics};
pub use pca::{fit_pca2, pca_export, profile_rows, Pca2};
