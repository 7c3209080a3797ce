//! Diagnoses the crafted profiles: template fidelity, popularity skew,
//! and how strongly target conditioning steers item selection.

use shillab::ae::{pretrain_ae, AeConfig};
use shillab::data::synth::SynthSpec;
use shillab::data::{attacker_subsample, load_ratings, RatingsFormat, SubsampleMode};
use shillab::diffusion::{
    choose_templates, generate_profiles, train_lda, Conditioning, CraftOptions, NoiseSchedule,
    VarianceMode,
};
use shillab::graph::GraphEncoder;
use shillab::num::rng::Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let beta_max: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2e-2);
    let lda_epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(120);

    let dir = std::env::temp_dir().join("shillab-calibrate");
    std::fs::create_dir_all(&dir).unwrap();
    let ratings = dir.join("ratings.data");
    if !ratings.exists() {
        shillab::data::synth::write_ratings_file(&SynthSpec::ml100k(7), &ratings).unwrap();
    }
    let full = load_ratings(&ratings, RatingsFormat::MovielensTab, 0.0)
        .unwrap()
        .interactions;
    let view = attacker_subsample(&full, 0.25, SubsampleMode::Interactions, 12).unwrap();
    let vi = &view.interactions;
    let counts = vi.item_counts();

    // Long-tail targets (same recipe as the pipeline).
    let mut present: Vec<u32> = (0..full.n_items() as u32)
        .filter(|&i| counts[i as usize] > 0)
        .collect();
    present.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
    let head = (0.2 * present.len() as f64).round() as usize;
    let pool = &present[head..];
    let mut rng = Rng::new(13);
    let targets: Vec<u32> = rng
        .sample_indices(pool.len(), 5)
        .into_iter()
        .map(|i| pool[i])
        .collect();

    let t0 = std::time::Instant::now();
    let ae_epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(60);
    let ae_lr: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let ae_dropout: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let ae = pretrain_ae(vi, &AeConfig { seed: 5, epochs: ae_epochs, lr: ae_lr, dropout: ae_dropout, ..AeConfig::default() }).unwrap();
    println!("ae pretrained in {:.1}s", t0.elapsed().as_secs_f64());
    let latents = ae.encode_all(vi).unwrap();
    let genc = GraphEncoder::build(&latents, &view, 2).unwrap();
    let target_feats = genc.target_features(&targets).unwrap();

    // AE round-trip fidelity on a few templates.
    let mut trng = Rng::new(17);
    let templates = choose_templates(vi, 50, 5, &mut trng).unwrap();
    let options = CraftOptions {
        force_targets: false,
        ..CraftOptions::default()
    };
    let round_trip = generate_profiles(
        &templates, vi, &ae, None, &target_feats, &targets, None, &options,
        VarianceMode::Simple, 99,
    )
    .unwrap();
    let mut overlap = 0.0;
    let mut pop_rank = 0.0;
    let mut count_total = 0usize;
    let rank_of_item: Vec<usize> = {
        let mut rank = vec![0usize; full.n_items()];
        for (r, &i) in present.iter().enumerate() {
            rank[i as usize] = r;
        }
        rank
    };
    for (r, &u) in templates.iter().enumerate() {
        let t: Vec<u32> = vi.row(u).to_vec();
        let g = round_trip.row(r);
        let inter = g.iter().filter(|i| t.binary_search(i).is_ok()).count();
        overlap += inter as f64 / g.len() as f64;
        for &i in g {
            pop_rank += rank_of_item[i as usize] as f64;
            count_total += 1;
        }
    }
    println!(
        "AE round trip: template overlap {:.3}, mean popularity rank of picks {:.0} (of {})",
        overlap / templates.len() as f64,
        pop_rank / count_total as f64,
        present.len()
    );

    // Train approximators and compare conditioning steering.
    let sched = NoiseSchedule::linear(steps, 1e-4, beta_max).unwrap();
    for conditioning in [Conditioning::CrossAttention, Conditioning::Sum, Conditioning::None] {
        let t0 = std::time::Instant::now();
        let cfg = shillab::diffusion::LdaConfig {
            bottleneck_dim: 32,
            epochs: lda_epochs,
            batch_size: 256,
            lr: 1e-3,
            weight_decay: 1e-5,
            conditioning,
            seed: 23,
            ..shillab::diffusion::LdaConfig::default()
        };
        let result = train_lda(&latents, &target_feats, &cfg, &sched).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        let losses = &result.losses;

        // Generate with the real targets and with a decoy target set.
        let gen = |tf: &shillab::num::DenseMatrix, seed: u64| {
            generate_profiles(
                &templates, vi, &ae, Some(&result.params), tf, &targets, Some(&sched),
                &options, VarianceMode::Simple, seed,
            )
            .unwrap()
        };
        let fakes = gen(&target_feats, 99);
        let decoy_targets: Vec<u32> = rng
            .sample_indices(pool.len(), 5)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        let decoy_feats = genc.target_features(&decoy_targets).unwrap();
        let decoyed = gen(&decoy_feats, 99);

        // Steering: how many picks differ between real and decoy targets.
        let mut moved = 0usize;
        let mut total = 0usize;
        for r in 0..fakes.n_users() {
            let a = fakes.row(r);
            let b = decoyed.row(r);
            moved += a.iter().filter(|i| b.binary_search(i).is_err()).count();
            total += a.len();
        }
        // Affinity: fraction of picks inside the targets' co-user item set.
        let mut co_items = vec![false; full.n_items()];
        for u in 0..vi.n_users() {
            if targets.iter().any(|&t| vi.contains(u, t)) {
                for &i in vi.row(u) {
                    co_items[i as usize] = true;
                }
            }
        }
        let mut in_co = 0usize;
        for r in 0..fakes.n_users() {
            in_co += fakes.row(r).iter().filter(|&&i| co_items[i as usize]).count();
        }
        println!(
            "{:>16}: {:.0}s loss {:.4}->{:.4}, steering {:.3}, target-co-item share {:.3}",
            conditioning.as_str(),
            secs,
            losses[0],
            losses[losses.len() - 1],
            moved as f64 / total as f64,
            in_co as f64 / total as f64,
        );
    }
}
