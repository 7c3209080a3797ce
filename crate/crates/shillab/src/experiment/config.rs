//! Declarative experiment configuration: TOML (key = value with sections)
//! or JSON, validated strictly (unknown keys rejected), with environment
//! overrides under the `SHILLAB_` prefix.

use std::collections::BTreeMap;
use std::path::Path;

use crate::ae::AeConfig;
use crate::data::ratings::RatingsFormat;
use crate::data::split::SubsampleMode;
use crate::data::synth::SynthSpec;
use crate::diffusion::train::LdaConfig;
use crate::diffusion::{Conditioning, VarianceMode};
use crate::error::{Error, Result};
use crate::eval::DetectorConfig;
use crate::num::params::sha256_hex;
use crate::victims::{TrainConfig, VictimKind};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Default output directory; overridden by the CLI `--out` flag.
    pub out: Option<String>,
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub attacker: AttackerConfig,
    pub targets: TargetConfig,
    pub ae: AeConfig,
    pub graph: GraphConfig,
    pub attack: AttackConfig,
    pub victims: VictimsConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            out: None,
            dataset: DatasetConfig::default(),
            split: SplitConfig::default(),
            attacker: AttackerConfig::default(),
            targets: TargetConfig::default(),
            ae: AeConfig::default(),
            graph: GraphConfig::default(),
            attack: AttackConfig::default(),
            victims: VictimsConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// "synth" generates a dataset; "file" loads one from disk.
    pub kind: String,
    /// synth preset: "ml100k", "filmtrust", or "tiny".
    pub preset: String,
    /// Generation seed, fixed independently of the experiment seed so
    /// seed replications share the dataset.
    pub gen_seed: u64,
    /// Custom synth shape; zero fields fall back to the preset.
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    /// kind = "file"
    pub path: Option<String>,
    pub format: RatingsFormat,
    pub min_rating: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: "synth".into(),
            preset: "ml100k".into(),
            gen_seed: 7,
            users: 0,
            items: 0,
            interactions: 0,
            path: None,
            format: RatingsFormat::MovielensTab,
            min_rating: 0.0,
        }
    }
}

impl DatasetConfig {
    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let mut spec = match self.preset.as_str() {
            "ml100k" => SynthSpec::ml100k(self.gen_seed),
            "filmtrust" => SynthSpec::filmtrust(self.gen_seed),
            "tiny" => SynthSpec::tiny(self.gen_seed),
            other => {
                return Err(Error::Config(format!("unknown synth preset {other:?}")));
            }
        };
        if self.users > 0 {
            spec.n_users = self.users;
        }
        if self.items > 0 {
            spec.n_items = self.items;
        }
        if self.interactions > 0 {
            spec.n_interactions = self.interactions;
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackerConfig {
    pub fraction: f64,
    pub mode: SubsampleMode,
}

impl Default for AttackerConfig {
    fn default() -> Self {
        AttackerConfig {
            fraction: 0.25,
            mode: SubsampleMode::Interactions,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    pub count: usize,
    /// "long-tail" samples from the bottom of the view's popularity
    /// ranking; "random" from every present item; "explicit" uses `items`.
    pub rule: String,
    pub items: Vec<u32>,
    /// Fraction of the popularity ranking considered long-tail (the
    /// complement, the most popular items, is excluded).
    pub long_tail_fraction: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig {
            count: 5,
            rule: "long-tail".into(),
            items: Vec::new(),
            long_tail_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    pub layers: usize,
    pub export_features: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            layers: 2,
            export_features: false,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    /// Fake profiles injected per method.
    pub k: usize,
    /// Methods to run: "toda", "toda-sum", "toda-concat", "wo-toa",
    /// "wo-diff", "random", "average", "bandwagon".
    pub methods: Vec<String>,
    pub force_targets: bool,
    pub template_min_interactions: usize,
    pub min_items: usize,
    pub max_items: usize,
    /// Heuristic filler budget; 0 uses the view's mean profile length.
    pub budget: usize,
    pub bandwagon_pool_fraction: f64,
    pub toda: TodaConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            k: 50,
            methods: vec!["toda".into(), "random".into()],
            force_targets: true,
            template_min_interactions: 5,
            min_items: 5,
            max_items: 100,
            budget: 0,
            bandwagon_pool_fraction: 0.1,
            toda: TodaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TodaConfig {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub bottleneck_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub variance: VarianceMode,
    pub attn_scale: crate::diffusion::AttnScale,
}

impl Default for TodaConfig {
    fn default() -> Self {
        TodaConfig {
            steps: 100,
            beta_min: 1e-4,
            beta_max: 2e-2,
            bottleneck_dim: 32,
            epochs: 120,
            batch_size: 256,
            lr: 1e-3,
            weight_decay: 1e-5,
            variance: VarianceMode::Simple,
            attn_scale: crate::diffusion::AttnScale::BottleneckDim,
        }
    }
}

impl TodaConfig {
    pub fn lda_config(&self, conditioning: Conditioning, seed: u64) -> LdaConfig {
        LdaConfig {
            bottleneck_dim: self.bottleneck_dim,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            conditioning,
            attn_scale: self.attn_scale,
            seed,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VictimsConfig {
    pub kinds: Vec<String>,
    pub train: TrainConfig,
}

impl Default for VictimsConfig {
    fn default() -> Self {
        VictimsConfig {
            kinds: vec!["mf".into()],
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub top_k: usize,
    pub export_pca: bool,
    pub detect: DetectorConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            top_k: 10,
            export_pca: true,
            detect: DetectorConfig::default(),
        }
    }
}

/// Known attack method names, in report order.
pub const KNOWN_METHODS: [&str; 8] = [
    "toda",
    "toda-sum",
    "toda-concat",
    "wo-toa",
    "wo-diff",
    "random",
    "average",
    "bandwagon",
];

/// Display label used in PCA exports and plots.
pub fn method_label(method: &str) -> &'static str {
    match method {
        "toda" => "ToDA",
        "toda-sum" => "ToDA-Sum",
        "toda-concat" => "ToDA-Concat",
        "wo-toa" => "w/o-ToA",
        "wo-diff" => "w/o-Diff",
        "random" => "Random",
        "average" => "Average",
        "bandwagon" => "Bandwagon",
        _ => "Unknown",
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dataset.kind != "synth" && self.dataset.kind != "file" {
            return Err(Error::Config(format!(
                "dataset.kind must be \"synth\" or \"file\", got {:?}",
                self.dataset.kind
            )));
        }
        if self.dataset.kind == "file" && self.dataset.path.is_none() {
            return Err(Error::Config("dataset.kind = \"file\" requires dataset.path".into()));
        }
        if self.dataset.kind == "synth" {
            self.dataset.synth_spec()?.validate()?;
        }
        let s = self.split.train + self.split.val + self.split.test;
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1, got {s}")));
        }
        if !(self.attacker.fraction > 0.0 && self.attacker.fraction <= 1.0) {
            return Err(Error::Config("attacker.fraction must be in (0, 1]".into()));
        }
        match self.targets.rule.as_str() {
            "long-tail" | "random" => {
                if self.targets.count == 0 {
                    return Err(Error::Config("targets.count must be positive".into()));
                }
            }
            "explicit" => {
                if self.targets.items.is_empty() {
                    return Err(Error::Config("targets.rule = \"explicit\" requires items".into()));
                }
            }
            other => {
                return Err(Error::Config(format!("unknown target rule {other:?}")));
            }
        }
        if self.attack.k == 0 {
            return Err(Error::Config("attack.k must be positive".into()));
        }
        for m in &self.attack.methods {
            if !KNOWN_METHODS.contains(&m.as_str()) {
                return Err(Error::Config(format!(
                    "unknown attack method {m:?}; known: {KNOWN_METHODS:?}"
                )));
            }
        }
        for kind in &self.victims.kinds {
            kind.parse::<VictimKind>()?;
        }
        if self.attack.toda.steps > 0 {
            crate::diffusion::NoiseSchedule::linear(
                self.attack.toda.steps,
                self.attack.toda.beta_min,
                self.attack.toda.beta_max,
            )?;
        }
        Ok(())
    }

    pub fn victim_kinds(&self) -> Vec<VictimKind> {
        self.victims
            .kinds
            .iter()
            .map(|k| k.parse().expect("validated"))
            .collect()
    }

    /// Hash of the full resolved configuration (seed included).
    pub fn config_hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).unwrap().as_bytes())
    }

    /// Parses TOML or JSON text, applying `SHILLAB_`-prefixed environment
    /// overrides before deserialization.
    pub fn from_str_with_env(
        text: &str,
        env: impl Iterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut value: toml::Value = if text.trim_start().starts_with('{') {
            let json: serde_json::Value = serde_json::from_str(text)
                .map_err(|e| Error::Config(format!("bad JSON config: {e}")))?;
            json_to_toml(&json)?
        } else {
            text.parse()
                .map_err(|e| Error::Config(format!("bad TOML config: {e}")))?
        };
        for (key, raw) in env {
            let Some(stripped) = key.strip_prefix("SHILLAB_") else {
                continue;
            };
            let path: Vec<String> = stripped
                .split("__")
                .map(|p| p.to_lowercase().replace('_', "_"))
                .collect();
            set_path(&mut value, &path, parse_scalar(&raw));
        }
        let cfg: ExperimentConfig = value
            .try_into()
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_str_with_env(&text, std::env::vars())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    if raw.contains(',') {
        return toml::Value::Array(raw.split(',').map(|s| parse_scalar(s.trim())).collect());
    }
    toml::Value::String(raw.to_string())
}

fn set_path(value: &mut toml::Value, path: &[String], new: toml::Value) {
    if path.is_empty() {
        return;
    }
    let table = match value {
        toml::Value::Table(t) => t,
        _ => return,
    };
    if path.len() == 1 {
        table.insert(path[0].clone(), new);
        return;
    }
    let entry = table
        .entry(path[0].clone())
        .or_insert_with(|| toml::Value::Table(Default::default()));
    set_path(entry, &path[1..], new);
}

fn json_to_toml(json: &serde_json::Value) -> Result<toml::Value> {
    Ok(match json {
        serde_json::Value::Null => {
            return Err(Error::Config("null is not representable in config".into()))
        }
        serde_json::Value::Bool(b) => toml::Value::Boolean(*b),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                toml::Value::Integer(i)
            } else {
                toml::Value::Float(n.as_f64().unwrap_or(0.0))
            }
        }
        serde_json::Value::String(s) => toml::Value::String(s.clone()),
        serde_json::Value::Array(a) => {
            toml::Value::Array(a.iter().map(json_to_toml).collect::<Result<_>>()?)
        }
        serde_json::Value::Object(o) => {
            let mut t = toml::map::Map::new();
            for (k, v) in o {
                t.insert(k.clone(), json_to_toml(v)?);
            }
            toml::Value::Table(t)
        }
    })
}

/// One grid axis: a whitelisted hyper-parameter and its values.
#[derive(Debug, Clone)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

/// Applies one axis value to a config copy. Axes cover the tuned
/// hyper-parameters only: learning rates, weight decays, diffusion steps,
/// the beta range, and graph layers.
pub fn apply_axis(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    let parse_f = |v: &str| -> Result<f64> {
        v.parse()
            .map_err(|_| Error::Config(format!("axis {key}: bad float {v:?}")))
    };
    let parse_u = |v: &str| -> Result<usize> {
        v.parse()
            .map_err(|_| Error::Config(format!("axis {key}: bad integer {v:?}")))
    };
    match key {
        "lr" => cfg.victims.train.lr = parse_f(value)?,
        "weight-decay" => cfg.victims.train.weight_decay = parse_f(value)?,
        "lda-lr" => cfg.attack.toda.lr = parse_f(value)?,
        "lda-weight-decay" => cfg.attack.toda.weight_decay = parse_f(value)?,
        "steps" => cfg.attack.toda.steps = parse_u(value)?,
        "layers" => cfg.graph.layers = parse_u(value)?,
        "beta" => {
            let parts: Vec<&str> = value.split(':').collect();
            if parts.len() != 2 {
                return Err(Error::Config(format!(
                    "axis beta expects \"min:max\", got {value:?}"
                )));
            }
            cfg.attack.toda.beta_min = parse_f(parts[0])?;
            cfg.attack.toda.beta_max = parse_f(parts[1])?;
        }
        other => {
            return Err(Error::Config(format!(
                "unknown grid axis {other:?}; known: lr, weight-decay, lda-lr, lda-weight-decay, steps, beta, layers"
            )));
        }
    }
    Ok(())
}

/// BTreeMap-backed deterministic cross product of grid axes.
pub fn grid_cells(axes: &[GridAxis]) -> Vec<BTreeMap<String, String>> {
    let mut cells: Vec<BTreeMap<String, String>> = vec![BTreeMap::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(cells.len() * axis.values.len());
        for cell in &cells {
            for v in &axis.values {
                let mut c = cell.clone();
                c.insert(axis.key.clone(), v.clone());
                next.push(c);
            }
        }
        cells = next;
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string();
        let parsed = ExperimentConfig::from_str_with_env(&text, std::iter::empty()).unwrap();
        assert_eq!(cfg.config_hash(), parsed.config_hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "seed = 1\n[dataset]\nkind = \"synth\"\nbogus_key = 3\n";
        assert!(ExperimentConfig::from_str_with_env(text, std::iter::empty()).is_err());
    }

    #[test]
    fn json_config_accepted() {
        let text = r#"{"seed": 9, "attack": {"k": 10}}"#;
        let cfg = ExperimentConfig::from_str_with_env(text, std::iter::empty()).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.attack.k, 10);
    }

    #[test]
    fn env_overrides_apply() {
        let text = "seed = 1\n";
        let env = vec![
            ("SHILLAB_SEED".to_string(), "77".to_string()),
            ("SHILLAB_ATTACK__K".to_string(), "25".to_string()),
            (
                "SHILLAB_VICTIMS__KINDS".to_string(),
                "mf,lgn".to_string(),
            ),
            ("IGNORED_VAR".to_string(), "3".to_string()),
        ];
        let cfg = ExperimentConfig::from_str_with_env(text, env.into_iter()).unwrap();
        assert_eq!(cfg.seed, 77);
        assert_eq!(cfg.attack.k, 25);
        assert_eq!(cfg.victims.kinds, vec!["mf", "lgn"]);
    }

    #[test]
    fn unknown_method_rejected() {
        let text = "[attack]\nmethods = [\"frobnicate\"]\n";
        assert!(ExperimentConfig::from_str_with_env(text, std::iter::empty()).is_err());
    }

    #[test]
    fn grid_cells_cross_product() {
        let axes = vec![
            GridAxis {
                key: "lr".into(),
                values: vec!["0.01".into(), "0.001".into()],
            },
            GridAxis {
                key: "steps".into(),
                values: vec!["1".into(), "10".into(), "50".into()],
            },
        ];
        let cells = grid_cells(&axes);
        assert_eq!(cells.len(), 6);
        assert!(grid_cells(&[]).len() == 1);
    }

    #[test]
    fn axis_whitelist_enforced() {
        let mut cfg = ExperimentConfig::default();
        assert!(apply_axis(&mut cfg, "steps", "50").is_ok());
        assert_eq!(cfg.attack.toda.steps, 50);
        assert!(apply_axis(&mut cfg, "beta", "0.001:0.01").is_ok());
        assert!(apply_axis(&mut cfg, "bogus", "1").is_err());
    }

    #[test]
    fn config_hash_changes_with_seed() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        b.seed = 1234;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
