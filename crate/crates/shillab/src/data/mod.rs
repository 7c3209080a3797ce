//! Data ingestion: rating files, binarization, victim splits, and the
//! attacker's restricted view.

pub mod interactions;
pub mod ratings;
pub mod split;
pub mod synth;

pub use interactions::InteractionMatrix;
pub use ratings::{load_ratings, IdMap, LoadedRatings, RatingsFormat};
pub use split::{attacker_subsample, split_holdout, AttackerView, SplitBundle, SubsampleMode};
pub use synth::SynthSpec;
