//! Stage-by-stage experiment execution with a content-addressed artifact
//! store: ingest, autoencoder pretraining, graph features, attacker
//! training, profile generation, injection, victim retraining, and
//! evaluation. Stages whose inputs hash to an existing artifact are loaded
//! instead of recomputed, which makes killed runs resumable and lets grid
//! cells share work.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::ae::{pretrain_ae, AeConfig, ProfileAe};
use crate::baselines::{average_attack, bandwagon_attack, random_attack, HeuristicConfig};
use crate::data::interactions::InteractionMatrix;
use crate::data::ratings::{load_ratings, RatingsFormat};
use crate::data::split::{attacker_subsample, split_holdout, AttackerView, SplitBundle};
use crate::data::synth;
use crate::diffusion::{
    choose_templates, generate_profiles, train_lda, Conditioning, CraftOptions, NoiseSchedule,
    ToaParams,
};
use crate::error::{Error, Result};
use crate::eval::{attack_metrics, detect, inject, pca_export, profile_rows};
use crate::experiment::config::{method_label, ExperimentConfig};
use crate::experiment::report::{
    DatasetSummary, DetectionSummary, MethodReport, RunReport, VictimReport,
};
use crate::graph::GraphEncoder;
use crate::num::params::sha256_hex;
use crate::num::rng::{derive_seed, Rng};
use crate::victims::{evaluate_rec, train_victim, VictimKind, VictimModel};

// Stage seed streams, mixed with the experiment master seed.
const STREAM_SPLIT: u64 = 0x01;
const STREAM_SUBSAMPLE: u64 = 0x02;
const STREAM_TARGETS: u64 = 0x03;
const STREAM_AE: u64 = 0x04;
const STREAM_LDA: u64 = 0x05;
const STREAM_TEMPLATES: u64 = 0x06;
const STREAM_GENERATE: u64 = 0x07;
const STREAM_VICTIM: u64 = 0x08;
const STREAM_HEURISTIC: u64 = 0x09;

/// Content-addressed artifact store rooted at `<out>/artifacts`.
struct Store {
    root: PathBuf,
}

impl Store {
    fn new(root: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&root).map_err(|e| Error::io(root.display().to_string(), e))?;
        Ok(Store { root })
    }

    /// Directory for a stage artifact; `key` fully encodes the inputs.
    fn dir(&self, stage: &str, key: &str) -> PathBuf {
        self.root.join(format!("{stage}-{key}"))
    }

    fn is_done(&self, dir: &Path) -> bool {
        dir.join("STAGE_OK").exists()
    }

    fn mark_done(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("STAGE_OK"), b"ok")
            .map_err(|e| Error::io(dir.display().to_string(), e))
    }

    fn prepare(&self, dir: &Path) -> Result<()> {
        if dir.exists() {
            // A partial artifact from a killed run: rebuild it cleanly.
            std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
    }
}

fn stage_key(material: &serde_json::Value) -> String {
    sha256_hex(material.to_string().as_bytes())[..12].to_string()
}

struct Timers {
    seconds: BTreeMap<String, f64>,
    cached: Vec<String>,
    keys: BTreeMap<String, String>,
}

impl Timers {
    fn new() -> Self {
        Timers {
            seconds: BTreeMap::new(),
            cached: Vec::new(),
            keys: BTreeMap::new(),
        }
    }

    fn record(&mut self, stage: &str, start: Instant, key: &str, cached: bool) {
        self.seconds
            .insert(stage.to_string(), start.elapsed().as_secs_f64());
        self.keys.insert(stage.to_string(), key.to_string());
        if cached {
            self.cached.push(stage.to_string());
        }
    }
}

struct DataStage {
    full: InteractionMatrix,
    split: SplitBundle,
    view: AttackerView,
    targets: Vec<u32>,
    source: String,
}

fn matrix_hash(m: &InteractionMatrix) -> String {
    let mut text = format!("{} {}\n", m.n_users(), m.n_items());
    for row in m.rows() {
        for &i in row {
            text.push_str(&i.to_string());
            text.push(' ');
        }
        text.push('\n');
    }
    sha256_hex(text.as_bytes())[..12].to_string()
}

fn select_targets(view: &InteractionMatrix, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<u32>> {
    let counts = view.item_counts();
    let present: Vec<u32> = (0..view.n_items() as u32)
        .filter(|&i| counts[i as usize] > 0)
        .collect();
    if present.is_empty() {
        return Err(Error::Config("attacker view has no items".into()));
    }
    let tcfg = &cfg.targets;
    match tcfg.rule.as_str() {
        "explicit" => {
            for &t in &tcfg.items {
                if t as usize >= view.n_items() || counts[t as usize] == 0 {
                    return Err(Error::Config(format!(
                        "explicit target {t} is not present in the attacker view"
                    )));
                }
            }
            Ok(tcfg.items.clone())
        }
        "random" => {
            let mut rng = Rng::new(seed);
            let k = tcfg.count.min(present.len());
            Ok(rng
                .sample_indices(present.len(), k)
                .into_iter()
                .map(|i| present[i])
                .collect())
        }
        "long-tail" => {
            // Sort present items by view popularity (desc) and exclude the
            // most popular head, keeping the long-tail fraction.
            let mut sorted = present.clone();
            sorted.sort_by(|&a, &b| {
                counts[b as usize]
                    .cmp(&counts[a as usize])
                    .then(a.cmp(&b))
            });
            let head = ((1.0 - tcfg.long_tail_fraction) * sorted.len() as f64).round() as usize;
            let pool = &sorted[head.min(sorted.len().saturating_sub(1))..];
            let mut rng = Rng::new(seed);
            let k = tcfg.count.min(pool.len());
            let mut picked: Vec<u32> = rng
                .sample_indices(pool.len(), k)
                .into_iter()
                .map(|i| pool[i])
                .collect();
            picked.sort_unstable();
            Ok(picked)
        }
        other => Err(Error::Config(format!("unknown target rule {other:?}"))),
    }
}

fn run_data_stage(
    cfg: &ExperimentConfig,
    store: &Store,
    timers: &mut Timers,
    scratch: &Path,
) -> Result<DataStage> {
    let start = Instant::now();
    let material = serde_json::json!({
        "stage": "data",
        "dataset": cfg.dataset,
        "split": cfg.split,
        "attacker": cfg.attacker,
        "targets": cfg.targets,
        "split_seed": derive_seed(cfg.seed, STREAM_SPLIT),
        "subsample_seed": derive_seed(cfg.seed, STREAM_SUBSAMPLE),
        "target_seed": derive_seed(cfg.seed, STREAM_TARGETS),
    });
    let key = stage_key(&material);
    let dir = store.dir("data", &key);

    if store.is_done(&dir) {
        let full = InteractionMatrix::load(&dir.join("interactions.txt"))?;
        let split = SplitBundle {
            train: InteractionMatrix::load(&dir.join("train.txt"))?,
            val: InteractionMatrix::load(&dir.join("val.txt"))?,
            test: InteractionMatrix::load(&dir.join("test.txt"))?,
            ratios: (cfg.split.train, cfg.split.val, cfg.split.test),
        };
        let view = AttackerView::load(&dir)?;
        let targets_text = std::fs::read_to_string(dir.join("targets.json"))
            .map_err(|e| Error::io("targets.json", e))?;
        let targets: Vec<u32> = serde_json::from_str(&targets_text)
            .map_err(|e| Error::Config(format!("bad targets.json: {e}")))?;
        let source = std::fs::read_to_string(dir.join("source.txt")).unwrap_or_default();
        timers.record("data", start, &key, true);
        return Ok(DataStage {
            full,
            split,
            view,
            targets,
            source,
        });
    }

    // Ingest: synthesize a rating file or read the configured one, then
    // parse through the same loader either way.
    let (ratings_path, source) = if cfg.dataset.kind == "synth" {
        let spec = cfg.dataset.synth_spec()?;
        let path = scratch.join("ratings.data");
        synth::write_ratings_file(&spec, &path)?;
        (
            path,
            format!("synth:{}@{}", cfg.dataset.preset, cfg.dataset.gen_seed),
        )
    } else {
        let p = cfg.dataset.path.clone().expect("validated");
        (PathBuf::from(&p), format!("file:{p}"))
    };
    let format = if cfg.dataset.kind == "synth" {
        RatingsFormat::MovielensTab
    } else {
        cfg.dataset.format
    };
    let loaded = load_ratings(&ratings_path, format, cfg.dataset.min_rating)?;
    let full = loaded.interactions;
    let split = split_holdout(
        &full,
        (cfg.split.train, cfg.split.val, cfg.split.test),
        derive_seed(cfg.seed, STREAM_SPLIT),
    )?;
    let view = attacker_subsample(
        &full,
        cfg.attacker.fraction,
        cfg.attacker.mode,
        derive_seed(cfg.seed, STREAM_SUBSAMPLE),
    )?;
    let targets = select_targets(
        &view.interactions,
        cfg,
        derive_seed(cfg.seed, STREAM_TARGETS),
    )?;

    store.prepare(&dir)?;
    let meta = serde_json::json!({"seed": cfg.seed, "source": source});
    full.save(&dir.join("interactions.txt"), Some(&meta))?;
    split.train.save(&dir.join("train.txt"), None)?;
    split.val.save(&dir.join("val.txt"), None)?;
    split.test.save(&dir.join("test.txt"), None)?;
    view.save(&dir, derive_seed(cfg.seed, STREAM_SUBSAMPLE))?;
    loaded.user_map.save(&dir.join("user_map.txt"))?;
    loaded.item_map.save(&dir.join("item_map.txt"))?;
    std::fs::write(
        dir.join("targets.json"),
        serde_json::to_string(&targets).unwrap(),
    )
    .map_err(|e| Error::io("targets.json", e))?;
    std::fs::write(dir.join("source.txt"), &source)
        .map_err(|e| Error::io("source.txt", e))?;
    store.mark_done(&dir)?;
    timers.record("data", start, &key, false);
    Ok(DataStage {
        full,
        split,
        view,
        targets,
        source,
    })
}

fn run_ae_stage(
    cfg: &ExperimentConfig,
    data_key: &str,
    view: &InteractionMatrix,
    store: &Store,
    timers: &mut Timers,
) -> Result<ProfileAe> {
    let start = Instant::now();
    let seed = derive_seed(cfg.seed, STREAM_AE);
    let material = serde_json::json!({
        "stage": "ae",
        "cfg": cfg.ae,
        "data": data_key,
        "seed": seed,
    });
    let key = stage_key(&material);
    let dir = store.dir("ae", &key);
    if store.is_done(&dir) {
        let ae = ProfileAe::load(&dir.join("ae.ckpt"))?;
        timers.record("ae", start, &key, true);
        return Ok(ae);
    }
    let ae_cfg = AeConfig { seed, ..cfg.ae };
    let ae = pretrain_ae(view, &ae_cfg)?;
    store.prepare(&dir)?;
    ae.save(&dir.join("ae.ckpt"))?;
    store.mark_done(&dir)?;
    timers.record("ae", start, &key, false);
    Ok(ae)
}

/// Conditioning mode and schedule steps for each diffusion-family method.
fn method_plan(cfg: &ExperimentConfig, method: &str) -> Option<(Conditioning, usize)> {
    let steps = cfg.attack.toda.steps;
    match method {
        "toda" => Some((Conditioning::CrossAttention, steps)),
        "toda-sum" => Some((Conditioning::Sum, steps)),
        "toda-concat" => Some((Conditioning::Concat, steps)),
        "wo-toa" => Some((Conditioning::None, steps)),
        "wo-diff" => Some((Conditioning::CrossAttention, 0)),
        _ => None,
    }
}

struct AttackArtifacts {
    fakes: BTreeMap<String, InteractionMatrix>,
}

#[allow(clippy::too_many_arguments)]
fn run_attack_stages(
    cfg: &ExperimentConfig,
    data: &DataStage,
    data_key: &str,
    ae: &ProfileAe,
    ae_key: &str,
    store: &Store,
    timers: &mut Timers,
) -> Result<AttackArtifacts> {
    let view = &data.view.interactions;
    let mut fakes = BTreeMap::new();

    // Graph features are cheap and deterministic; rebuilt every run.
    let graph_start = Instant::now();
    let latents = ae.encode_all(view)?;
    let genc = GraphEncoder::build(&latents, &data.view, cfg.graph.layers)?;
    let target_feats = genc.target_features(&data.targets)?;
    timers.record("graph", graph_start, "-", false);

    // Shared approximators per conditioning mode.
    let mut toas: BTreeMap<&'static str, (ToaParams, String)> = BTreeMap::new();
    let needs: Vec<&String> = cfg.attack.methods.iter().collect();
    for method in &needs {
        let Some((conditioning, steps)) = method_plan(cfg, method) else {
            continue;
        };
        if steps == 0 || toas.contains_key(conditioning.as_str()) {
            continue;
        }
        let start = Instant::now();
        let lda_seed = derive_seed(cfg.seed, STREAM_LDA ^ (conditioning as u64) << 8);
        let material = serde_json::json!({
            "stage": "lda",
            "cfg": cfg.attack.toda,
            "conditioning": conditioning.as_str(),
            "graph_layers": cfg.graph.layers,
            "data": data_key,
            "ae": ae_key,
            "targets": data.targets,
            "seed": lda_seed,
        });
        let key = stage_key(&material);
        let dir = store.dir(&format!("lda-{}", conditioning.as_str()), &key);
        let stage_name = format!("lda:{method}");
        let (toa, cached) = if store.is_done(&dir) {
            (ToaParams::load(&dir.join("toa.ckpt"))?, true)
        } else {
            let sched = NoiseSchedule::linear(
                cfg.attack.toda.steps,
                cfg.attack.toda.beta_min,
                cfg.attack.toda.beta_max,
            )?;
            let lda_cfg = cfg.attack.toda.lda_config(conditioning, lda_seed);
            let result = train_lda(&latents, &target_feats, &lda_cfg, &sched)?;
            store.prepare(&dir)?;
            result.params.save(&dir.join("toa.ckpt"))?;
            store.mark_done(&dir)?;
            (result.params, false)
        };
        timers.record(&stage_name, start, &key, cached);
        toas.insert(conditioning.as_str(), (toa, key));
    }

    // Template users are shared across diffusion-family methods so the
    // ablations differ only in the component under test.
    let mut template_rng = Rng::new(derive_seed(cfg.seed, STREAM_TEMPLATES));
    let templates = choose_templates(
        view,
        cfg.attack.k,
        cfg.attack.template_min_interactions,
        &mut template_rng,
    )?;

    for (idx, method) in cfg.attack.methods.iter().enumerate() {
        let start = Instant::now();
        let stage_name = format!("generate:{method}");
        let fake_matrix = if let Some((conditioning, steps)) = method_plan(cfg, method) {
            let toa_entry = if steps > 0 {
                Some(&toas[conditioning.as_str()])
            } else {
                None
            };
            let gen_seed = derive_seed(cfg.seed, STREAM_GENERATE ^ (idx as u64) << 8);
            let material = serde_json::json!({
                "stage": "generate",
                "method": method,
                "options": {
                    "force": cfg.attack.force_targets,
                    "min": cfg.attack.min_items,
                    "max": cfg.attack.max_items,
                    "k": cfg.attack.k,
                    "template_min": cfg.attack.template_min_interactions,
                },
                "toa": toa_entry.map(|(_, k)| k.clone()),
                "variance": cfg.attack.toda.variance,
                "data": data_key,
                "ae": ae_key,
                "targets": data.targets,
                "templates_seed": derive_seed(cfg.seed, STREAM_TEMPLATES),
                "seed": gen_seed,
            });
            let key = stage_key(&material);
            let dir = store.dir(&format!("attack-{method}"), &key);
            if store.is_done(&dir) {
                let m = InteractionMatrix::load(&dir.join("fakes.txt"))?;
                timers.record(&stage_name, start, &key, true);
                fakes.insert(method.clone(), m);
                continue;
            }
            let sched = if steps > 0 {
                Some(NoiseSchedule::linear(
                    steps,
                    cfg.attack.toda.beta_min,
                    cfg.attack.toda.beta_max,
                )?)
            } else {
                None
            };
            let options = CraftOptions {
                min_items: cfg.attack.min_items,
                max_items: cfg.attack.max_items,
                force_targets: cfg.attack.force_targets,
            };
            let m = generate_profiles(
                &templates,
                view,
                ae,
                toa_entry.map(|(t, _)| t),
                &target_feats,
                &data.targets,
                sched.as_ref(),
                &options,
                cfg.attack.toda.variance,
                gen_seed,
            )?;
            store.prepare(&dir)?;
            let meta = serde_json::json!({
                "method": method,
                "seed": gen_seed,
                "provenance": "attack",
                "targets": data.targets,
            });
            m.save(&dir.join("fakes.txt"), Some(&meta))?;
            store.mark_done(&dir)?;
            timers.record(&stage_name, start, &key, false);
            m
        } else {
            // Heuristic baselines.
            let budget = if cfg.attack.budget > 0 {
                cfg.attack.budget
            } else {
                HeuristicConfig::default_budget(view, data.targets.len())
            };
            let hseed = derive_seed(cfg.seed, STREAM_HEURISTIC ^ (idx as u64) << 8);
            let hcfg = HeuristicConfig {
                k: cfg.attack.k,
                targets: data.targets.clone(),
                budget: budget.clamp(data.targets.len().max(1), view.n_items()),
                pool_fraction: cfg.attack.bandwagon_pool_fraction,
                seed: hseed,
            };
            let material = serde_json::json!({
                "stage": "generate",
                "method": method,
                "cfg": hcfg,
                "data": data_key,
            });
            let key = stage_key(&material);
            let dir = store.dir(&format!("attack-{method}"), &key);
            if store.is_done(&dir) {
                let m = InteractionMatrix::load(&dir.join("fakes.txt"))?;
                timers.record(&stage_name, start, &key, true);
                fakes.insert(method.clone(), m);
                continue;
            }
            let m = match method.as_str() {
                "random" => random_attack(view, &hcfg)?,
                "average" => average_attack(view, &hcfg)?,
                "bandwagon" => bandwagon_attack(view, &hcfg)?,
                other => return Err(Error::Config(format!("unknown method {other:?}"))),
            };
            store.prepare(&dir)?;
            let meta = serde_json::json!({
                "method": method,
                "seed": hseed,
                "provenance": "attack",
                "targets": data.targets,
            });
            m.save(&dir.join("fakes.txt"), Some(&meta))?;
            store.mark_done(&dir)?;
            timers.record(&stage_name, start, &key, false);
            m
        };
        fakes.insert(method.clone(), fake_matrix);
    }

    if cfg.graph.export_features {
        genc.export_csv(&store.root.join(format!("item_features-{data_key}.csv")))?;
    }
    Ok(AttackArtifacts { fakes })
}

#[allow(clippy::too_many_arguments)]
fn run_victim_stage(
    cfg: &ExperimentConfig,
    kind: VictimKind,
    variant: &str,
    train: &InteractionMatrix,
    val: &InteractionMatrix,
    store: &Store,
    timers: &mut Timers,
) -> Result<VictimModel> {
    let start = Instant::now();
    let seed = derive_seed(cfg.seed, STREAM_VICTIM ^ ((kind as u64) << 12));
    let mut tc = cfg.victims.train.clone();
    tc.seed = seed;
    tc.top_k = cfg.eval.top_k;
    let material = serde_json::json!({
        "stage": "victim",
        "kind": kind.as_str(),
        "cfg": tc,
        "train": matrix_hash(train),
        "val": matrix_hash(val),
    });
    let key = stage_key(&material);
    let dir = store.dir(&format!("victim-{}-{variant}", kind.as_str()), &key);
    let stage_name = format!("victim:{}:{variant}", kind.as_str());
    if store.is_done(&dir) {
        let model = VictimModel::load(&dir.join("model.ckpt"), train)?;
        timers.record(&stage_name, start, &key, true);
        return Ok(model);
    }
    let model = train_victim(kind, train, Some(val), &tc)?;
    store.prepare(&dir)?;
    model.save(&dir.join("model.ckpt"))?;
    store.mark_done(&dir)?;
    timers.record(&stage_name, start, &key, false);
    Ok(model)
}

/// Runs the whole pipeline into `out_dir` (reports under `reports/`,
/// artifacts under `artifacts/`). With `resume` an existing run directory
/// is continued; otherwise it must not already contain a finished report.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, resume: bool) -> Result<RunReport> {
    run_experiment_in(cfg, out_dir, &out_dir.join("artifacts"), resume)
}

pub fn run_experiment_in(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    artifacts_dir: &Path,
    resume: bool,
) -> Result<RunReport> {
    cfg.validate()?;
    let reports_dir = out_dir.join("reports");
    if reports_dir.join("report.json").exists() && !resume {
        return Err(Error::Config(format!(
            "{} already contains a finished run; pass --resume or choose a fresh --out",
            out_dir.display()
        )));
    }
    std::fs::create_dir_all(&reports_dir)
        .map_err(|e| Error::io(reports_dir.display().to_string(), e))?;
    std::fs::write(out_dir.join("config.toml"), cfg.to_toml_string())
        .map_err(|e| Error::io("config.toml", e))?;
    let store = Store::new(artifacts_dir.to_path_buf())?;
    let scratch = out_dir.join("scratch");
    std::fs::create_dir_all(&scratch).map_err(|e| Error::io(scratch.display().to_string(), e))?;
    let mut timers = Timers::new();

    // 1. Data: ingest, split, attacker view, targets.
    let data = run_data_stage(cfg, &store, &mut timers, &scratch)?;
    let data_key = timers.keys["data"].clone();

    // 2. Profile autoencoder over the attacker view (frozen afterwards).
    let ae = run_ae_stage(cfg, &data_key, &data.view.interactions, &store, &mut timers)?;
    let ae_key = timers.keys["ae"].clone();

    // 3-4. Graph features, attacker training, profile generation.
    let attacks = run_attack_stages(cfg, &data, &data_key, &ae, &ae_key, &store, &mut timers)?;

    // 5-6. Victims (clean and per-method poisoned) and evaluation.
    let n_genuine = data.full.n_users();
    let mut victims_report: BTreeMap<String, VictimReport> = BTreeMap::new();
    for kind in cfg.victim_kinds() {
        let clean = run_victim_stage(
            cfg,
            kind,
            "clean",
            &data.split.train,
            &data.split.val,
            &store,
            &mut timers,
        )?;
        let clean_utility = evaluate_rec(&clean, &data.split.train, &data.split.test, cfg.eval.top_k)?;
        let clean_attack = attack_metrics(
            &clean,
            &data.targets,
            &data.split.train,
            n_genuine,
            cfg.eval.top_k,
        )?;

        let mut method_reports: BTreeMap<String, MethodReport> = BTreeMap::new();
        for (method, fakes) in &attacks.fakes {
            let poisoned = inject(&data.split.train, fakes)?;
            let model = run_victim_stage(
                cfg,
                kind,
                method,
                &poisoned,
                &data.split.val,
                &store,
                &mut timers,
            )?;
            let attack = attack_metrics(&model, &data.targets, &poisoned, n_genuine, cfg.eval.top_k)?;
            let utility = evaluate_rec(&model, &poisoned, &data.split.test, cfg.eval.top_k)?;
            let det = detect(&poisoned, fakes.n_users(), &cfg.eval.detect)?;
            method_reports.insert(
                method.clone(),
                MethodReport {
                    attack,
                    utility,
                    detection: Some(DetectionSummary {
                        precision: det.precision,
                        recall: det.recall,
                        precision_defined: det.precision_defined,
                        flagged: det.flagged.len(),
                        true_positives: det.true_positives,
                    }),
                    fake_profiles: fakes.n_users(),
                    fake_nnz: fakes.nnz(),
                },
            );
        }
        victims_report.insert(
            kind.as_str().to_string(),
            VictimReport {
                clean_utility,
                clean_attack,
                attacks: method_reports,
            },
        );
    }

    // 7. PCA projection export: genuine profiles plus every method's fakes,
    // fitted jointly.
    if cfg.eval.export_pca && !attacks.fakes.is_empty() {
        let eval_start = Instant::now();
        let mut rows: Vec<Vec<u32>> = data.split.train.rows().to_vec();
        let mut labels: Vec<String> = vec!["Normal".to_string(); rows.len()];
        for (method, fakes) in &attacks.fakes {
            rows.extend(fakes.rows().iter().cloned());
            labels.extend(std::iter::repeat_n(
                method_label(method).to_string(),
                fakes.n_users(),
            ));
        }
        let sparse = profile_rows(&rows, cfg.eval.detect.normalize);
        pca_export(
            &sparse,
            &labels,
            data.full.n_items(),
            &reports_dir.join("pca.csv"),
        )?;
        timers.record("pca", eval_start, "-", false);
    }

    let report = RunReport {
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        dataset: DatasetSummary {
            source: data.source.clone(),
            n_users: data.full.n_users(),
            n_items: data.full.n_items(),
            nnz: data.full.nnz(),
            sparsity: data.full.sparsity(),
            view_users: data.view.interactions.n_users(),
            view_nnz: data.view.interactions.nnz(),
        },
        targets: data.targets.clone(),
        victims: victims_report,
        stage_seconds: timers.seconds,
        cached_stages: timers.cached,
        artifact_keys: timers.keys,
        config: cfg.clone(),
    };
    report.write(&reports_dir)?;
    Ok(report)
}
