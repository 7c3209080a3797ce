//! Target-oriented noise approximator: a bottleneck autoencoder over the
//! noisy latent, a sinusoidal step embedding, and target conditioning via
//! cross-attention (with element-wise sum, concatenation, and
//! unconditioned variants that share every other component).

use crate::error::{Error, Result};
use crate::num::matrix::{softmax_rows, DenseMatrix};
use crate::num::params::{Init, ParamStore};
use crate::num::rng::Rng;

/// How target-item features are injected into the bottleneck.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conditioning {
    /// softmax(Q K^T / scale) V over projected target features.
    CrossAttention,
    /// Bottleneck plus the mean projected target feature.
    Sum,
    /// Decoder consumes [bottleneck ; mean projected target feature].
    Concat,
    /// No target signal: a plain latent denoiser.
    None,
}

impl Conditioning {
    pub fn as_str(&self) -> &'static str {
        match self {
            Conditioning::CrossAttention => "cross-attention",
            Conditioning::Sum => "sum",
            Conditioning::Concat => "concat",
            Conditioning::None => "none",
        }
    }
}

/// Attention logit scale: 1/sqrt(bottleneck width) keeps the scale
/// consistent with the width of Q and K; 1/sqrt(latent width) is kept
/// behind this switch for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttnScale {
    BottleneckDim,
    LatentDim,
}

#[derive(Debug, Clone)]
pub struct ToaParams {
    pub store: ParamStore,
    latent_dim: usize,
    bottleneck_dim: usize,
    pub conditioning: Conditioning,
    pub attn_scale: AttnScale,
}

impl ToaParams {
    pub fn new(
        latent_dim: usize,
        bottleneck_dim: usize,
        conditioning: Conditioning,
        attn_scale: AttnScale,
        rng: &mut Rng,
    ) -> Self {
        let mut store = ParamStore::new();
        let dp = bottleneck_dim;
        store.add("enc.w", latent_dim, dp, Init::XavierUniform, rng);
        store.add("enc.b", 1, dp, Init::Zeros, rng);
        store.add("step.w", dp, dp, Init::XavierUniform, rng);
        store.add("step.b", 1, dp, Init::Zeros, rng);
        store.add("tau.w", latent_dim, dp, Init::XavierUniform, rng);
        store.add("tau.b", 1, dp, Init::Zeros, rng);
        store.add("attn.wq", dp, dp, Init::XavierUniform, rng);
        store.add("attn.wk", dp, dp, Init::XavierUniform, rng);
        store.add("attn.wv", dp, dp, Init::XavierUniform, rng);
        let dec_in = if conditioning == Conditioning::Concat {
            2 * dp
        } else {
            dp
        };
        store.add("dec.w", dec_in, latent_dim, Init::XavierUniform, rng);
        store.add("dec.b", 1, latent_dim, Init::Zeros, rng);
        ToaParams {
            store,
            latent_dim,
            bottleneck_dim,
            conditioning,
            attn_scale,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.bottleneck_dim
    }

    pub fn num_params(&self) -> usize {
        self.store.num_params()
    }

    fn scale(&self) -> f64 {
        match self.attn_scale {
            AttnScale::BottleneckDim => 1.0 / (self.bottleneck_dim as f64).sqrt(),
            AttnScale::LatentDim => 1.0 / (self.latent_dim as f64).sqrt(),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "toa",
            "latent_dim": self.latent_dim,
            "bottleneck_dim": self.bottleneck_dim,
            "conditioning": self.conditioning,
            "attn_scale": self.attn_scale,
        });
        self.store.save(path, &meta)
    }

    pub fn load(path: &std::path::Path) -> Result<ToaParams> {
        let (store, meta) = ParamStore::load(path)?;
        let conditioning: Conditioning = serde_json::from_value(meta["conditioning"].clone())
            .map_err(|e| Error::Config(format!("bad conditioning in checkpoint: {e}")))?;
        let attn_scale: AttnScale = serde_json::from_value(meta["attn_scale"].clone())
            .map_err(|e| Error::Config(format!("bad attention scale in checkpoint: {e}")))?;
        Ok(ToaParams {
            store,
            latent_dim: meta["latent_dim"].as_u64().unwrap_or(0) as usize,
            bottleneck_dim: meta["bottleneck_dim"].as_u64().unwrap_or(0) as usize,
            conditioning,
            attn_scale,
        })
    }
}

/// Sinusoidal embedding of 1-based step indices, one row per sample.
pub fn step_embedding(steps: &[usize], width: usize) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(steps.len(), width);
    for (r, &s) in steps.iter().enumerate() {
        let row = out.row_mut(r);
        let half = width / 2;
        for j in 0..half {
            let freq = (10_000.0f64).powf(-(2.0 * j as f64) / width as f64);
            row[2 * j] = (s as f64 * freq).sin();
            row[2 * j + 1] = (s as f64 * freq).cos();
        }
        if width % 2 == 1 {
            let freq = (10_000.0f64).powf(-((width - 1) as f64) / width as f64);
            row[width - 1] = (s as f64 * freq).sin();
        }
    }
    out
}

/// Intermediate activations kept for the analytic backward pass.
pub struct ToaCache {
    sin: DenseMatrix,
    b_act: DenseMatrix,
    b: DenseMatrix,
    tau: DenseMatrix,
    q: DenseMatrix,
    k: DenseMatrix,
    v: DenseMatrix,
    attn_weights: DenseMatrix,
    z: DenseMatrix,
}

/// Predicts the injected noise for a batch of noisy latents at the given
/// steps, conditioned on the target feature rows.
pub fn forward(
    p: &ToaParams,
    noisy: &DenseMatrix,
    steps: &[usize],
    target_feats: &DenseMatrix,
) -> Result<(DenseMatrix, ToaCache)> {
    if noisy.cols() != p.latent_dim {
        return Err(Error::Shape {
            op: "toa forward latent",
            left: (noisy.rows(), p.latent_dim),
            right: noisy.shape(),
        });
    }
    if p.conditioning != Conditioning::None {
        if target_feats.rows() == 0 {
            return Err(Error::Config("target set must be non-empty".into()));
        }
        if target_feats.cols() != p.latent_dim {
            return Err(Error::Shape {
                op: "toa forward targets",
                left: (target_feats.rows(), p.latent_dim),
                right: target_feats.shape(),
            });
        }
    }
    assert_eq!(noisy.rows(), steps.len(), "one step index per sample");
    let store = &p.store;
    let dp = p.bottleneck_dim;

    let sin = step_embedding(steps, dp);
    let b_act = noisy
        .matmul(store.value("enc.w"))?
        .add_row_broadcast(store.value("enc.b"))?
        .map(f64::tanh);
    let step_out = sin
        .matmul(store.value("step.w"))?
        .add_row_broadcast(store.value("step.b"))?;
    let b = b_act.add(&step_out)?;

    let tau = target_feats
        .matmul(store.value("tau.w"))?
        .add_row_broadcast(store.value("tau.b"))?;

    let (z, q, k, v, attn_weights) = match p.conditioning {
        Conditioning::CrossAttention => {
            let q = b.matmul(store.value("attn.wq"))?;
            let k = tau.matmul(store.value("attn.wk"))?;
            let v = tau.matmul(store.value("attn.wv"))?;
            let logits = q.matmul_nt(&k)?;
            let weights = softmax_rows(&logits, p.scale());
            let attn = weights.matmul(&v)?;
            (attn.add(&b)?, q, k, v, weights)
        }
        Conditioning::Sum => {
            let mean = tau.row_mean();
            (
                b.add_row_broadcast(&mean)?,
                DenseMatrix::zeros(0, 0),
                DenseMatrix::zeros(0, 0),
                DenseMatrix::zeros(0, 0),
                DenseMatrix::zeros(0, 0),
            )
        }
        Conditioning::Concat => {
            let mean = tau.row_mean();
            let mut z = DenseMatrix::zeros(b.rows(), 2 * dp);
            for r in 0..b.rows() {
                let row = z.row_mut(r);
                row[..dp].copy_from_slice(b.row(r));
                row[dp..].copy_from_slice(mean.row(0));
            }
            (
                z,
                DenseMatrix::zeros(0, 0),
                DenseMatrix::zeros(0, 0),
                DenseMatrix::zeros(0, 0),
                DenseMatrix::zeros(0, 0),
            )
        }
        Conditioning::None => (
            b.clone(),
            DenseMatrix::zeros(0, 0),
            DenseMatrix::zeros(0, 0),
            DenseMatrix::zeros(0, 0),
            DenseMatrix::zeros(0, 0),
        ),
    };

    let eps_hat = z
        .matmul(store.value("dec.w"))?
        .add_row_broadcast(store.value("dec.b"))?;
    Ok((
        eps_hat,
        ToaCache {
            sin,
            b_act,
            b,
            tau,
            q,
            k,
            v,
            attn_weights,
            z,
        },
    ))
}

/// Accumulates parameter gradients for `d_eps_hat` flowing back through
/// the cached forward pass.
pub fn backward(
    p: &mut ToaParams,
    cache: &ToaCache,
    noisy: &DenseMatrix,
    target_feats: &DenseMatrix,
    d_eps_hat: &DenseMatrix,
) -> Result<()> {
    let dp = p.bottleneck_dim;
    let scale = p.scale();
    let conditioning = p.conditioning;
    let store = &mut p.store;

    let d_dec_w = cache.z.matmul_tn(d_eps_hat)?;
    let d_dec_b = d_eps_hat.col_sums();
    let dz = d_eps_hat.matmul_nt(store.value("dec.w"))?;
    store.accumulate_grad("dec.w", &d_dec_w)?;
    store.accumulate_grad("dec.b", &d_dec_b)?;

    let t_rows = cache.tau.rows();
    let (db, dtau) = match conditioning {
        Conditioning::CrossAttention => {
            // z = attn + b with attn = P V.
            let dattn = &dz;
            let mut db: DenseMatrix = dz.clone();
            let dweights = dattn.matmul_nt(&cache.v)?;
            let dv = cache.attn_weights.matmul_tn(dattn)?;
            // Softmax backward per row, then the logit scale.
            let mut dlogits = DenseMatrix::zeros(dweights.rows(), dweights.cols());
            for r in 0..dweights.rows() {
                let w = cache.attn_weights.row(r);
                let dw = dweights.row(r);
                let inner: f64 = w.iter().zip(dw.iter()).map(|(&a, &b)| a * b).sum();
                let drow = dlogits.row_mut(r);
                for c in 0..w.len() {
                    drow[c] = w[c] * (dw[c] - inner) * scale;
                }
            }
            let dq = dlogits.matmul(&cache.k)?;
            let dk = dlogits.matmul_tn(&cache.q)?;
            store.accumulate_grad("attn.wq", &cache.b.matmul_tn(&dq)?)?;
            store.accumulate_grad("attn.wk", &cache.tau.matmul_tn(&dk)?)?;
            store.accumulate_grad("attn.wv", &cache.tau.matmul_tn(&dv)?)?;
            db.scaled_add_assign(1.0, &dq.matmul_nt(store.value("attn.wq"))?)?;
            let mut dtau = dk.matmul_nt(store.value("attn.wk"))?;
            dtau.scaled_add_assign(1.0, &dv.matmul_nt(store.value("attn.wv"))?)?;
            (db, Some(dtau))
        }
        Conditioning::Sum => {
            let db = dz.clone();
            let col = dz.col_sums().scale(1.0 / t_rows as f64);
            let mut dtau = DenseMatrix::zeros(t_rows, dp);
            for r in 0..t_rows {
                dtau.row_mut(r).copy_from_slice(col.row(0));
            }
            (db, Some(dtau))
        }
        Conditioning::Concat => {
            let rows = dz.rows();
            let mut db = DenseMatrix::zeros(rows, dp);
            let mut dmean = DenseMatrix::zeros(1, dp);
            for r in 0..rows {
                let row = dz.row(r);
                db.row_mut(r).copy_from_slice(&row[..dp]);
                for (c, &v) in row[dp..].iter().enumerate() {
                    let cur = dmean.get(0, c);
                    dmean.set(0, c, cur + v);
                }
            }
            let col = dmean.scale(1.0 / t_rows as f64);
            let mut dtau = DenseMatrix::zeros(t_rows, dp);
            for r in 0..t_rows {
                dtau.row_mut(r).copy_from_slice(col.row(0));
            }
            (db, Some(dtau))
        }
        Conditioning::None => (dz.clone(), None),
    };

    if let Some(dtau) = dtau {
        store.accumulate_grad("tau.w", &target_feats.matmul_tn(&dtau)?)?;
        store.accumulate_grad("tau.b", &dtau.col_sums())?;
    }

    // b = tanh(enc) + step projection; db feeds both.
    store.accumulate_grad("step.w", &cache.sin.matmul_tn(&db)?)?;
    store.accumulate_grad("step.b", &db.col_sums())?;
    let db_pre = {
        let mask = cache.b_act.map(|t| 1.0 - t * t);
        db.hadamard(&mask)?
    };
    store.accumulate_grad("enc.w", &noisy.matmul_tn(&db_pre)?)?;
    store.accumulate_grad("enc.b", &db_pre.col_sums())?;
    Ok(())
}

/// Mean per-sample squared error between true and predicted noise, with
/// gradients accumulated into the approximator. Returns the loss.
pub fn mse_loss_and_backward(
    p: &mut ToaParams,
    noisy: &DenseMatrix,
    steps: &[usize],
    target_feats: &DenseMatrix,
    noise: &DenseMatrix,
) -> Result<f64> {
    let (eps_hat, cache) = forward(p, noisy, steps, target_feats)?;
    let batch = noisy.rows() as f64;
    let loss = eps_hat.sq_distance(noise) / batch;
    let d_eps_hat = eps_hat.sub(noise)?.scale(2.0 / batch);
    backward(p, &cache, noisy, target_feats, &d_eps_hat)?;
    Ok(loss)
}
