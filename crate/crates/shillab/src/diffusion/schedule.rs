//! Variance schedule for the latent diffusion chain: per-step beta with
//! derived alpha = 1 - beta and the cumulative product alpha_bar.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear interpolation of beta from `beta_min` to `beta_max` over
    /// `steps` steps (a single step uses `beta_min`).
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::Config(format!(
                "invalid beta range [{beta_min}, {beta_max}]"
            )));
        }
        let betas: Vec<f64> = if steps == 1 {
            vec![beta_min]
        } else {
            (0..steps)
                .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Ok(Self::from_betas(betas))
    }

    pub fn from_betas(betas: Vec<f64>) -> Self {
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut prod = 1.0;
        for &a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        NoiseSchedule {
            betas,
            alphas,
            alpha_bars,
        }
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check_step(&self, s: usize) -> Result<()> {
        if s == 0 || s > self.steps() {
            return Err(Error::Index {
                what: "diffusion step",
                index: s,
                bound: self.steps() + 1,
            });
        }
        Ok(())
    }

    /// beta_s for 1-based step s.
    pub fn beta(&self, s: usize) -> f64 {
        self.betas[s - 1]
    }

    pub fn alpha(&self, s: usize) -> f64 {
        self.alphas[s - 1]
    }

    /// Cumulative product of alpha through step s; alpha_bar(0) = 1.
    pub fn alpha_bar(&self, s: usize) -> f64 {
        if s == 0 {
            1.0
        } else {
            self.alpha_bars[s - 1]
        }
    }

    pub fn try_alpha_bar(&self, s: usize) -> Result<f64> {
        self.check_step(s)?;
        Ok(self.alpha_bar(s))
    }
}
