//! Scratch calibration harness: probes victim sensitivity to injected
//! profiles under different training budgets. Not part of the pipeline.

use shillab::data::synth::SynthSpec;
use shillab::data::{attacker_subsample, load_ratings, split_holdout, RatingsFormat, SubsampleMode};
use shillab::baselines::{random_attack, HeuristicConfig};
use shillab::eval::{attack_metrics, inject};
use shillab::num::rng::Rng;
use shillab::victims::{train_victim, TrainConfig, VictimKind};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let patience: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-2);
    let wd: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1e-5);

    let dir = std::env::temp_dir().join("shillab-calibrate");
    std::fs::create_dir_all(&dir).unwrap();
    let ratings = dir.join("ratings.data");
    if !ratings.exists() {
        shillab::data::synth::write_ratings_file(&SynthSpec::ml100k(7), &ratings).unwrap();
    }
    let full = load_ratings(&ratings, RatingsFormat::MovielensTab, 0.0)
        .unwrap()
        .interactions;
    let split = split_holdout(&full, (0.8, 0.1, 0.1), 11).unwrap();
    let view = attacker_subsample(&full, 0.25, SubsampleMode::Interactions, 12).unwrap();

    // Long-tail targets from the view.
    let counts = view.interactions.item_counts();
    let mut present: Vec<u32> = (0..full.n_items() as u32)
        .filter(|&i| counts[i as usize] > 0)
        .collect();
    present.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
    let head = (0.2 * present.len() as f64).round() as usize;
    let pool = &present[head..];
    let mut rng = Rng::new(13);
    let targets: Vec<u32> = rng.sample_indices(pool.len(), 5).into_iter().map(|i| pool[i]).collect();
    let train_counts = split.train.item_counts();
    for &t in &targets {
        println!(
            "target {t}: view count {}, train count {}",
            counts[t as usize], train_counts[t as usize]
        );
    }

    let budget_override: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0);
    let hcfg = HeuristicConfig {
        k: 50,
        targets: targets.clone(),
        budget: if budget_override > 0 { budget_override } else { HeuristicConfig::default_budget(&view.interactions, targets.len()) },
        pool_fraction: 0.1,
        seed: 21,
    };
    println!("filler budget: {}", hcfg.budget);
    let fakes = random_attack(&view.interactions, &hcfg).unwrap();
    let poisoned = inject(&split.train, &fakes).unwrap();

    let cfg = TrainConfig {
        epochs,
        patience,
        lr,
        weight_decay: wd,
        ..TrainConfig::default()
    };
    println!("training victim: epochs={epochs} patience={patience} lr={lr} wd={wd}");
    let t0 = std::time::Instant::now();
    let clean = train_victim(VictimKind::Mf, &split.train, Some(&split.val), &cfg).unwrap();
    println!("clean trained in {:.1}s", t0.elapsed().as_secs_f64());
    let m = attack_metrics(&clean, &targets, &split.train, full.n_users(), 10).unwrap();
    let util = shillab::victims::evaluate_rec(&clean, &split.train, &split.test, 10).unwrap();
    println!("clean: HR {:.4} MRR {:.4} recall {:.4}", m.hit_ratio, m.mrr, util.recall);

    // Exposure curve: HR@10 of organic items by popularity rank.
    let mut by_count: Vec<u32> = (0..full.n_items() as u32).collect();
    by_count.sort_by(|&a, &b| train_counts[b as usize].cmp(&train_counts[a as usize]));
    for (label, idx) in [("top1", 0usize), ("top5", 4), ("p90", 168), ("p75", 420), ("p50", 841)] {
        let item = by_count[idx];
        let m = attack_metrics(&clean, &[item], &split.train, full.n_users(), 10).unwrap();
        println!(
            "exposure {label}: item {item} count {} HR {:.4}",
            train_counts[item as usize], m.hit_ratio
        );
    }

    let t0 = std::time::Instant::now();
    let victim = train_victim(VictimKind::Mf, &poisoned, Some(&split.val), &cfg).unwrap();
    println!("poisoned trained in {:.1}s", t0.elapsed().as_secs_f64());
    let m = attack_metrics(&victim, &targets, &poisoned, full.n_users(), 10).unwrap();
    let util = shillab::victims::evaluate_rec(&victim, &poisoned, &split.test, 10).unwrap();
    println!(
        "random attack: HR {:.4} MRR {:.4} recall {:.4}",
        m.hit_ratio, m.mrr, util.recall
    );

    // Ceiling probe: fakes whose fillers are exactly the most popular items.
    let bcfg = HeuristicConfig {
        pool_fraction: 27.0 / full.n_items() as f64,
        ..hcfg.clone()
    };
    let strong = shillab::baselines::bandwagon_attack(&view.interactions, &bcfg).unwrap();
    let poisoned = inject(&split.train, &strong).unwrap();
    let victim = train_victim(VictimKind::Mf, &poisoned, Some(&split.val), &cfg).unwrap();
    let m = attack_metrics(&victim, &targets, &poisoned, full.n_users(), 10).unwrap();
    println!("bandwagon-head attack: HR {:.4} MRR {:.4}", m.hit_ratio, m.mrr);

    // Segment-attack ceiling: fake profiles copy genuine view users from a
    // taste cluster (co-raters of a mid-popularity anchor), plus targets.
    let mut by_count: Vec<u32> = (0..full.n_items() as u32).collect();
    by_count.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]));
    let anchor = by_count[30];
    let cluster: Vec<usize> = (0..view.interactions.n_users())
        .filter(|&u| view.interactions.contains(u, anchor))
        .collect();
    println!("anchor {anchor}: cluster of {} view users", cluster.len());
    let mut crng = Rng::new(31);
    let mut rows = Vec::new();
    for i in 0..50 {
        let u = cluster[i % cluster.len()];
        let mut row: Vec<u32> = targets.clone();
        let profile = view.interactions.row(u);
        let take = profile.len().min(22);
        for idx in crng.sample_indices(profile.len(), take) {
            if !row.contains(&profile[idx]) {
                row.push(profile[idx]);
            }
        }
        rows.push(row);
    }
    let seg = shillab::data::InteractionMatrix::from_rows(full.n_items(), rows).unwrap();
    let poisoned = inject(&split.train, &seg).unwrap();
    let victim = train_victim(VictimKind::Mf, &poisoned, Some(&split.val), &cfg).unwrap();
    let m = attack_metrics(&victim, &targets, &poisoned, full.n_users(), 10).unwrap();
    println!("segment attack: HR {:.4} MRR {:.4}", m.hit_ratio, m.mrr);
}
