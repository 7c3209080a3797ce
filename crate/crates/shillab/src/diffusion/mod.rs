//! Latent diffusion attacker: noise schedule, closed-form forward noising,
//! the target-conditioned noise approximator, training, and ancestral
//! sampling down to discrete crafted profiles.

pub mod sample;
pub mod schedule;
pub mod toa;
pub mod train;

pub use sample::{
    binarize_logits, choose_templates, generate_profiles, q_sample, reverse_chain, reverse_step,
    CraftOptions, VarianceMode,
};
pub use schedule::NoiseSchedule;
pub use toa::{forward as toa_forward, step_embedding, AttnScale, Conditioning, ToaParams};
pub use train::{train_lda, LdaConfig, LdaTrainResult};
