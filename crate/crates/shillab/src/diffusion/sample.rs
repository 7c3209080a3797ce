//! Closed-form forward noising, the ancestral reverse step, and the
//! end-to-end crafting of discrete fake profiles.

use crate::ae::ProfileAe;
use crate::data::interactions::InteractionMatrix;
use crate::diffusion::schedule::NoiseSchedule;
use crate::diffusion::toa::{forward, ToaParams};
use crate::error::{Error, Result};
use crate::num::matrix::DenseMatrix;
use crate::num::rng::Rng;

/// Sampler variance: the plain sqrt(beta_s) of the ancestral sampler, or
/// the posterior variance ((1 - alpha_bar_{s-1}) / (1 - alpha_bar_s)) beta_s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMode {
    Simple,
    Posterior,
}

/// Closed-form forward noising of a batch of latents to step `s`:
/// sqrt(alpha_bar_s) e0 + sqrt(1 - alpha_bar_s) eps.
pub fn q_sample(
    e0: &DenseMatrix,
    s: usize,
    eps: &DenseMatrix,
    sched: &NoiseSchedule,
) -> Result<DenseMatrix> {
    let ab = sched.try_alpha_bar(s)?;
    if e0.shape() != eps.shape() {
        return Err(Error::Shape {
            op: "q_sample",
            left: e0.shape(),
            right: eps.shape(),
        });
    }
    let mut out = e0.scale(ab.sqrt());
    out.scaled_add_assign((1.0 - ab).sqrt(), eps)?;
    Ok(out)
}

/// One ancestral reverse step from state s to s-1. `z` is ignored at s = 1,
/// where the sampler adds no noise.
pub fn reverse_step(
    e_hat: &DenseMatrix,
    s: usize,
    eps_hat: &DenseMatrix,
    z: Option<&DenseMatrix>,
    sched: &NoiseSchedule,
    variance: VarianceMode,
) -> Result<DenseMatrix> {
    let alpha = sched.alpha(s);
    let alpha_bar = sched.try_alpha_bar(s)?;
    let coeff = (1.0 - alpha) / (1.0 - alpha_bar).sqrt();
    let mut out = e_hat.clone();
    out.scaled_add_assign(-coeff, eps_hat)?;
    let mut out = out.scale(1.0 / alpha.sqrt());
    if s > 1 {
        if let Some(z) = z {
            let sigma = match variance {
                VarianceMode::Simple => sched.beta(s).sqrt(),
                VarianceMode::Posterior => {
                    ((1.0 - sched.alpha_bar(s - 1)) / (1.0 - alpha_bar) * sched.beta(s)).sqrt()
                }
            };
            out.scaled_add_assign(sigma, z)?;
        }
    }
    Ok(out)
}

/// Runs the full reverse chain from a noised state at step `start` down to
/// the clean estimate, feeding each step through the approximator.
pub fn reverse_chain(
    toa: &ToaParams,
    start_state: &DenseMatrix,
    start: usize,
    target_feats: &DenseMatrix,
    sched: &NoiseSchedule,
    variance: VarianceMode,
    rng: &mut Rng,
) -> Result<DenseMatrix> {
    let mut state = start_state.clone();
    for s in (1..=start).rev() {
        let steps = vec![s; state.rows()];
        let (eps_hat, _) = forward(toa, &state, &steps, target_feats)?;
        let z = if s > 1 {
            let mut noise = DenseMatrix::zeros(state.rows(), state.cols());
            rng.fill_normal(noise.data_mut());
            Some(noise)
        } else {
            None
        };
        state = reverse_step(&state, s, &eps_hat, z.as_ref(), sched, variance)?;
    }
    Ok(state)
}

/// Crafting configuration for the discretization step.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CraftOptions {
    /// Each crafted profile keeps as many items as its template, clamped
    /// into this budget range.
    pub min_items: usize,
    pub max_items: usize,
    /// Guarantee every target item appears in every crafted profile by
    /// replacing the lowest-scoring selected non-target items.
    pub force_targets: bool,
}

impl Default for CraftOptions {
    fn default() -> Self {
        CraftOptions {
            min_items: 5,
            max_items: 100,
            force_targets: true,
        }
    }
}

/// Picks the top-`budget` items by logit (ties by ascending index) and
/// applies forced target inclusion.
pub fn binarize_logits(
    logits: &[f64],
    budget: usize,
    targets: &[u32],
    force_targets: bool,
) -> Vec<u32> {
    let budget = budget.min(logits.len());
    let mut selected = crate::victims::topk(logits, budget, &[]);
    if force_targets {
        let missing: Vec<u32> = targets
            .iter()
            .copied()
            .filter(|t| !selected.contains(t))
            .collect();
        for t in missing {
            // Replace the worst-scoring selected non-target item.
            let victim = (0..selected.len())
                .rev()
                .find(|&pos| !targets.contains(&selected[pos]));
            match victim {
                Some(pos) => selected[pos] = t,
                None => selected.push(t),
            }
        }
    }
    selected.sort_unstable();
    selected.dedup();
    selected
}

/// Generates `k` fake profiles from template users of the attacker view.
///
/// Templates are encoded, noised to step S in closed form, denoised back
/// through the approximator conditioned on the targets, decoded to item
/// logits, and binarized to the template's own budget. A schedule of zero
/// steps degenerates to the plain autoencoder round trip.
#[allow(clippy::too_many_arguments)]
pub fn generate_profiles(
    templates: &[usize],
    view: &InteractionMatrix,
    ae: &ProfileAe,
    toa: Option<&ToaParams>,
    target_feats: &DenseMatrix,
    targets: &[u32],
    sched: Option<&NoiseSchedule>,
    options: &CraftOptions,
    variance: VarianceMode,
    seed: u64,
) -> Result<InteractionMatrix> {
    let mut usable: Vec<usize> = Vec::with_capacity(templates.len());
    for &u in templates {
        if u >= view.n_users() {
            return Err(Error::Index {
                what: "template user",
                index: u,
                bound: view.n_users(),
            });
        }
        if view.row(u).is_empty() {
            eprintln!("warning: skipping empty template user {u}");
            continue;
        }
        usable.push(u);
    }
    if usable.is_empty() {
        return Err(Error::Config("no usable template users".into()));
    }

    let mut rng = Rng::new(seed);
    let d = ae.latent_dim();
    let mut e0 = DenseMatrix::zeros(usable.len(), d);
    for (r, &u) in usable.iter().enumerate() {
        let e = ae.encode_row(view.row(u))?;
        e0.row_mut(r).copy_from_slice(&e);
    }

    let final_state = match (sched, toa) {
        (Some(sched), Some(toa)) if sched.steps() > 0 => {
            let steps = sched.steps();
            let mut eps = DenseMatrix::zeros(e0.rows(), d);
            rng.fill_normal(eps.data_mut());
            let noised = q_sample(&e0, steps, &eps, sched)?;
            reverse_chain(toa, &noised, steps, target_feats, sched, variance, &mut rng)?
        }
        // Zero diffusion steps: plain autoencoder round trip.
        _ => e0,
    };

    let logits = ae.decode(&final_state)?;
    let mut rows = Vec::with_capacity(usable.len());
    for (r, &u) in usable.iter().enumerate() {
        let budget = view.row(u).len().clamp(options.min_items, options.max_items);
        rows.push(binarize_logits(
            logits.row(r),
            budget,
            targets,
            options.force_targets,
        ));
    }
    InteractionMatrix::from_rows(view.n_items(), rows)
}

/// Uniformly samples `k` template users with at least `min_interactions`.
pub fn choose_templates(
    view: &InteractionMatrix,
    k: usize,
    min_interactions: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    let eligible: Vec<usize> = (0..view.n_users())
        .filter(|&u| view.row(u).len() >= min_interactions)
        .collect();
    if eligible.len() < k {
        return Err(Error::Config(format!(
            "need {k} template users with >= {min_interactions} interactions, found {}",
            eligible.len()
        )));
    }
    Ok(rng
        .sample_indices(eligible.len(), k)
        .into_iter()
        .map(|i| eligible[i])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::toa::{AttnScale, Conditioning};

    #[test]
    fn q_sample_near_zero_beta_is_identity_like() {
        let sched = NoiseSchedule::linear(5, 1e-12, 1e-12).unwrap();
        let e0 = DenseMatrix::from_vec(1, 3, vec![0.5, -0.2, 1.0]);
        let eps = DenseMatrix::from_vec(1, 3, vec![1.0, 1.0, 1.0]);
        let out = q_sample(&e0, 5, &eps, &sched).unwrap();
        assert!(out.sq_distance(&e0) < 1e-10);
    }

    #[test]
    fn q_sample_zero_signal_is_scaled_noise() {
        let sched = NoiseSchedule::linear(4, 0.1, 0.4).unwrap();
        let e0 = DenseMatrix::zeros(1, 3);
        let eps = DenseMatrix::from_vec(1, 3, vec![1.0, -2.0, 0.5]);
        let s = 3;
        let out = q_sample(&e0, s, &eps, &sched).unwrap();
        let scale = (1.0 - sched.alpha_bar(s)).sqrt();
        assert!(out.sq_distance(&eps.scale(scale)) < 1e-24);
    }

    #[test]
    fn q_sample_step_out_of_range() {
        let sched = NoiseSchedule::linear(4, 0.1, 0.4).unwrap();
        let e0 = DenseMatrix::zeros(1, 3);
        assert!(q_sample(&e0, 0, &e0, &sched).is_err());
        assert!(q_sample(&e0, 5, &e0, &sched).is_err());
    }

    #[test]
    fn reverse_step_with_perfect_noise_inverts_single_step() {
        let sched = NoiseSchedule::linear(1, 0.3, 0.3).unwrap();
        let mut rng = Rng::new(1);
        let mut e0 = DenseMatrix::zeros(2, 4);
        rng.fill_normal(e0.data_mut());
        let mut eps = DenseMatrix::zeros(2, 4);
        rng.fill_normal(eps.data_mut());
        let e1 = q_sample(&e0, 1, &eps, &sched).unwrap();
        let rec = reverse_step(&e1, 1, &eps, None, &sched, VarianceMode::Simple).unwrap();
        assert!(rec.sq_distance(&e0) < 1e-20);
    }

    #[test]
    fn reverse_step_zero_noise_is_pure_rescale() {
        let sched = NoiseSchedule::linear(3, 0.1, 0.3).unwrap();
        let e = DenseMatrix::from_vec(1, 2, vec![0.8, -0.4]);
        let zeros = DenseMatrix::zeros(1, 2);
        let out = reverse_step(&e, 2, &zeros, None, &sched, VarianceMode::Simple).unwrap();
        let expected = e.scale(1.0 / sched.alpha(2).sqrt());
        assert!(out.sq_distance(&expected) < 1e-24);
    }

    #[test]
    fn noise_replay_inverts_stepwise_forward_chain() {
        // Forward stepwise: e_s = sqrt(alpha_s) e_{s-1} + sqrt(beta_s) z_s.
        // The reverse formula subtracts ((1-alpha_s)/sqrt(1-alpha_bar_s))
        // times the predicted noise, so replaying the true step noise
        // scaled by sqrt(1-alpha_bar_s)/sqrt(beta_s) must invert the chain
        // exactly, validating both formulas jointly.
        let steps = 50;
        let sched = NoiseSchedule::linear(steps, 1e-3, 5e-2).unwrap();
        let mut rng = Rng::new(9);
        let mut e0 = DenseMatrix::zeros(3, 6);
        rng.fill_normal(e0.data_mut());

        let mut chain = vec![e0.clone()];
        let mut step_noises = Vec::with_capacity(steps);
        for s in 1..=steps {
            let mut z = DenseMatrix::zeros(3, 6);
            rng.fill_normal(z.data_mut());
            let prev = chain.last().unwrap();
            let mut next = prev.scale(sched.alpha(s).sqrt());
            next.scaled_add_assign(sched.beta(s).sqrt(), &z).unwrap();
            chain.push(next);
            step_noises.push(z);
        }

        let mut state = chain[steps].clone();
        for s in (1..=steps).rev() {
            let scale = (1.0 - sched.alpha_bar(s)).sqrt() / sched.beta(s).sqrt();
            let replay = step_noises[s - 1].scale(scale);
            state = reverse_step(&state, s, &replay, None, &sched, VarianceMode::Simple).unwrap();
            assert!(
                state.sq_distance(&chain[s - 1]) < 1e-16,
                "diverged at step {s}"
            );
        }
        assert!(state.sq_distance(&e0) < 1e-16);
    }

    #[test]
    fn binarize_respects_budget_and_targets() {
        let logits = vec![0.9, 0.1, 0.8, 0.7, 0.2, 0.3];
        let row = binarize_logits(&logits, 3, &[], false);
        assert_eq!(row, vec![0, 2, 3]);
        // Forcing target 5 replaces the worst selected non-target (3).
        let row = binarize_logits(&logits, 3, &[5], true);
        assert_eq!(row, vec![0, 2, 5]);
        // Already-selected targets cause no replacement.
        let row = binarize_logits(&logits, 3, &[0], true);
        assert_eq!(row, vec![0, 2, 3]);
    }

    fn tiny_setup() -> (InteractionMatrix, ProfileAe, NoiseSchedule, ToaParams, DenseMatrix) {
        let view = InteractionMatrix::from_rows(
            8,
            vec![
                vec![0, 1, 2, 3, 4],
                vec![1, 2, 3, 4, 5],
                vec![0, 2, 4, 6, 7],
                vec![3, 4, 5, 6, 7],
            ],
        )
        .unwrap();
        let mut rng = Rng::new(3);
        let ae = ProfileAe::new(8, 4, &mut rng);
        let sched = NoiseSchedule::linear(6, 1e-3, 1e-2).unwrap();
        let toa = ToaParams::new(4, 3, Conditioning::CrossAttention, AttnScale::BottleneckDim, &mut rng);
        let mut targets = DenseMatrix::zeros(2, 4);
        rng.fill_normal(targets.data_mut());
        (view, ae, sched, toa, targets)
    }

    #[test]
    fn zero_steps_is_ae_round_trip() {
        let (view, ae, _, _, targets) = tiny_setup();
        let options = CraftOptions {
            force_targets: false,
            ..CraftOptions::default()
        };
        let fakes = generate_profiles(
            &[0, 1],
            &view,
            &ae,
            None,
            &targets,
            &[6, 7],
            None,
            &options,
            VarianceMode::Simple,
            1,
        )
        .unwrap();
        // Budget equals the template length (5, within the clamp).
        assert_eq!(fakes.row(0).len(), 5);
        // Oracle: direct encode/decode/top-budget.
        let e = ae.encode_row(view.row(0)).unwrap();
        let logits = ae.decode(&DenseMatrix::from_vec(1, 4, e)).unwrap();
        let expected = binarize_logits(logits.row(0), 5, &[], false);
        assert_eq!(fakes.row(0), expected.as_slice());
    }

    #[test]
    fn forced_targets_present_in_every_row() {
        let (view, ae, sched, toa, target_feats) = tiny_setup();
        let targets = [6u32, 7u32];
        let fakes = generate_profiles(
            &[0, 1, 2, 3],
            &view,
            &ae,
            Some(&toa),
            &target_feats,
            &targets,
            Some(&sched),
            &CraftOptions::default(),
            VarianceMode::Simple,
            7,
        )
        .unwrap();
        for u in 0..fakes.n_users() {
            for &t in &targets {
                assert!(fakes.contains(u, t), "row {u} missing target {t}");
            }
            assert_eq!(fakes.row(u).len(), view.row(u).len());
        }
    }

    #[test]
    fn generation_is_deterministic_given_seed() {
        let (view, ae, sched, toa, target_feats) = tiny_setup();
        let go = || {
            generate_profiles(
                &[0, 2],
                &view,
                &ae,
                Some(&toa),
                &target_feats,
                &[5],
                Some(&sched),
                &CraftOptions::default(),
                VarianceMode::Simple,
                42,
            )
            .unwrap()
        };
        assert_eq!(go(), go());
    }

    #[test]
    fn template_chooser_filters_short_profiles() {
        let view = InteractionMatrix::from_rows(
            6,
            vec![vec![0], vec![0, 1, 2, 3, 4], vec![1, 2, 3, 4, 5], vec![2]],
        )
        .unwrap();
        let mut rng = Rng::new(1);
        let picked = choose_templates(&view, 2, 5, &mut rng).unwrap();
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![1, 2]);
        assert!(choose_templates(&view, 3, 5, &mut rng).is_err());
    }
}
