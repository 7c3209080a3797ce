//! Pretrained profile autoencoder: maps binary user profiles to d-dim
//! latent features and back through item logits, trained with the
//! multinomial likelihood over interacted items. Frozen after pretraining;
//! every later stage consumes it read-only.

use crate::data::interactions::InteractionMatrix;
use crate::error::{Error, Result};
use crate::num::matrix::{log_softmax_rows, softmax_rows, DenseMatrix};
use crate::num::params::{AdamConfig, Init, ParamStore};
use crate::num::rng::Rng;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeConfig {
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Input dropout keep-one-minus-this during pretraining (denoising);
    /// disabled at inference.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            latent_dim: 64,
            epochs: 60,
            batch_size: 256,
            lr: 1e-2,
            weight_decay: 1e-6,
            dropout: 0.5,
            seed: 0,
        }
    }
}

/// Encoder affine(m -> d) with tanh, decoder affine(d -> m) to item logits.
#[derive(Debug, Clone)]
pub struct ProfileAe {
    pub store: ParamStore,
    n_items: usize,
    latent_dim: usize,
    frozen_hash: Option<String>,
}

impl ProfileAe {
    pub fn new(n_items: usize, latent_dim: usize, rng: &mut Rng) -> Self {
        let mut store = ParamStore::new();
        store.add("enc.w", n_items, latent_dim, Init::XavierUniform, rng);
        store.add("enc.b", 1, latent_dim, Init::Zeros, rng);
        store.add("dec.w", latent_dim, n_items, Init::XavierUniform, rng);
        store.add("dec.b", 1, n_items, Init::Zeros, rng);
        ProfileAe {
            store,
            n_items,
            latent_dim,
            frozen_hash: None,
        }
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Marks the parameters frozen; later stages can verify nothing drifted.
    pub fn freeze(&mut self) {
        self.frozen_hash = Some(self.store.content_hash());
    }

    pub fn frozen_hash(&self) -> Option<&str> {
        self.frozen_hash.as_deref()
    }

    pub fn verify_frozen(&self) -> bool {
        match &self.frozen_hash {
            Some(h) => *h == self.store.content_hash(),
            None => false,
        }
    }

    /// L2-normalized dense profile rows for a batch of users.
    fn normalized_batch(&self, y: &InteractionMatrix, users: &[usize]) -> DenseMatrix {
        let mut x = DenseMatrix::zeros(users.len(), self.n_items);
        for (r, &u) in users.iter().enumerate() {
            let row = y.row(u);
            let norm = (row.len() as f64).sqrt();
            let xrow = x.row_mut(r);
            for &i in row {
                xrow[i as usize] = 1.0 / norm;
            }
        }
        x
    }

    /// Encodes one binary profile row (inference mode, no dropout).
    pub fn encode_row(&self, profile: &[u32]) -> Result<Vec<f64>> {
        if profile.is_empty() {
            return Err(Error::Eval("cannot encode an empty profile".into()));
        }
        let mut x = vec![0.0; self.n_items];
        let norm = (profile.len() as f64).sqrt();
        for &i in profile {
            if i as usize >= self.n_items {
                return Err(Error::Index {
                    what: "profile item",
                    index: i as usize,
                    bound: self.n_items,
                });
            }
            x[i as usize] = 1.0 / norm;
        }
        let x = DenseMatrix::from_vec(1, self.n_items, x);
        Ok(self.encode_batch(&x)?.row(0).to_vec())
    }

    /// tanh(X We + be) for already-normalized dense rows.
    pub fn encode_batch(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let h = x
            .matmul(self.store.value("enc.w"))?
            .add_row_broadcast(self.store.value("enc.b"))?;
        Ok(h.map(f64::tanh))
    }

    /// Latent features to item logits.
    pub fn decode(&self, latent: &DenseMatrix) -> Result<DenseMatrix> {
        if latent.cols() != self.latent_dim {
            return Err(Error::Shape {
                op: "decode",
                left: (latent.rows(), self.latent_dim),
                right: latent.shape(),
            });
        }
        latent
            .matmul(self.store.value("dec.w"))?
            .add_row_broadcast(self.store.value("dec.b"))
    }

    /// Encodes every view user into a dense latent table (inference mode).
    pub fn encode_all(&self, y: &InteractionMatrix) -> Result<DenseMatrix> {
        let users: Vec<usize> = (0..y.n_users()).collect();
        let x = self.normalized_batch(y, &users);
        self.encode_batch(&x)
    }

    /// Persists the model in the shared flat-tensor checkpoint format.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "profile-ae",
            "n_items": self.n_items,
            "latent_dim": self.latent_dim,
            "frozen_hash": self.frozen_hash,
        });
        self.store.save(path, &meta)
    }

    pub fn load(path: &std::path::Path) -> Result<ProfileAe> {
        let (store, meta) = ParamStore::load(path)?;
        let n_items = meta["n_items"].as_u64().unwrap_or(0) as usize;
        let latent_dim = meta["latent_dim"].as_u64().unwrap_or(0) as usize;
        let frozen_hash = meta["frozen_hash"].as_str().map(|s| s.to_string());
        let ae = ProfileAe {
            store,
            n_items,
            latent_dim,
            frozen_hash,
        };
        if ae.frozen_hash.is_some() && !ae.verify_frozen() {
            return Err(Error::Training {
                stage: "autoencoder load".into(),
                detail: "frozen hash mismatch: checkpoint drifted".into(),
            });
        }
        Ok(ae)
    }
}

/// Multinomial negative log-likelihood: per user the sum over interacted
/// items of -log softmax(logits), averaged over the batch.
pub fn multinomial_nll(logits: &DenseMatrix, profiles: &[&[u32]]) -> f64 {
    assert_eq!(logits.rows(), profiles.len());
    let logp = log_softmax_rows(logits);
    let mut loss = 0.0;
    for (r, profile) in profiles.iter().enumerate() {
        let row = logp.row(r);
        for &i in profile.iter() {
            loss -= row[i as usize];
        }
    }
    loss / profiles.len() as f64
}

/// Forward + analytic backward of the reconstruction loss for one batch.
/// Returns the loss; gradients are accumulated into the store.
fn reconstruction_step(
    ae: &mut ProfileAe,
    x: &DenseMatrix,
    profiles: &[&[u32]],
) -> Result<f64> {
    let batch = x.rows() as f64;
    let pre = x
        .matmul(ae.store.value("enc.w"))?
        .add_row_broadcast(ae.store.value("enc.b"))?;
    let h = pre.map(f64::tanh);
    let logits = h
        .matmul(ae.store.value("dec.w"))?
        .add_row_broadcast(ae.store.value("dec.b"))?;
    let loss = multinomial_nll(&logits, profiles);

    // d loss / d logits = (c_u * softmax - y_u) / batch
    let mut dlogits = softmax_rows(&logits, 1.0);
    for (r, profile) in profiles.iter().enumerate() {
        let c = profile.len() as f64;
        let row = dlogits.row_mut(r);
        for v in row.iter_mut() {
            *v *= c;
        }
        for &i in profile.iter() {
            row[i as usize] -= 1.0;
        }
    }
    let dlogits = dlogits.scale(1.0 / batch);

    let dw_dec = h.matmul_tn(&dlogits)?;
    let db_dec = dlogits.col_sums();
    let dh = dlogits.matmul_nt(ae.store.value("dec.w"))?;
    let dpre = dh.hadamard(&h.map(|t| 1.0 - t * t))?;
    let dw_enc = x.matmul_tn(&dpre)?;
    let db_enc = dpre.col_sums();

    ae.store.accumulate_grad("dec.w", &dw_dec)?;
    ae.store.accumulate_grad("dec.b", &db_dec)?;
    ae.store.accumulate_grad("enc.w", &dw_enc)?;
    ae.store.accumulate_grad("enc.b", &db_enc)?;
    Ok(loss)
}

/// Exposed for gradient checking: evaluates the loss and fills gradients
/// without stepping the optimizer or applying dropout.
pub fn reconstruction_loss_and_grads(
    ae: &mut ProfileAe,
    y: &InteractionMatrix,
    users: &[usize],
) -> Result<f64> {
    let x = ae.normalized_batch(y, users);
    let profiles: Vec<&[u32]> = users.iter().map(|&u| y.row(u)).collect();
    reconstruction_step(ae, &x, &profiles)
}

/// Pretrains the autoencoder on the attacker view and freezes it.
pub fn pretrain_ae(view: &InteractionMatrix, cfg: &AeConfig) -> Result<ProfileAe> {
    if view.nnz() == 0 {
        return Err(Error::Training {
            stage: "autoencoder pretrain".into(),
            detail: "empty view".into(),
        });
    }
    let mut rng = Rng::new(cfg.seed);
    let mut ae = ProfileAe::new(view.n_items(), cfg.latent_dim, &mut rng);
    let adam = AdamConfig::new(cfg.lr, cfg.weight_decay);
    let mut order: Vec<usize> = (0..view.n_users()).collect();
    let keep = 1.0 - cfg.dropout;

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let mut x = ae.normalized_batch(view, chunk);
            if cfg.dropout > 0.0 {
                // Inverted dropout on the normalized input.
                for v in x.data_mut() {
                    if *v != 0.0 {
                        if rng.uniform() < cfg.dropout {
                            *v = 0.0;
                        } else {
                            *v /= keep;
                        }
                    }
                }
            }
            let profiles: Vec<&[u32]> = chunk.iter().map(|&u| view.row(u)).collect();
            ae.store.zero_grad();
            let loss = reconstruction_step(&mut ae, &x, &profiles)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    stage: "autoencoder pretrain".into(),
                    detail: format!("non-finite loss at epoch {epoch}"),
                });
            }
            ae.store.adam_step(&adam);
        }
    }
    ae.freeze();
    Ok(ae)
}
