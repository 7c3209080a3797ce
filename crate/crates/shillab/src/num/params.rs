//! Named parameter tensors with paired gradient buffers and Adam state.
//!
//! The model zoo is small and fixed, so training code computes gradients
//! analytically per layer and accumulates them into the buffers here; the
//! store only owns storage, the optimizer step, initialization, hashing,
//! and the flat-tensor checkpoint format shared by every model.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::num::matrix::DenseMatrix;
use crate::num::rng::Rng;

/// How a tensor is filled at creation.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    /// Xavier uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
    XavierUniform,
    /// U(-a, a) with the given half-width.
    Uniform(f64),
}

#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
    m: DenseMatrix,
    v: DenseMatrix,
}

impl ParamTensor {
    fn new(rows: usize, cols: usize, init: Init, rng: &mut Rng) -> Self {
        let mut value = DenseMatrix::zeros(rows, cols);
        match init {
            Init::Zeros => {}
            Init::XavierUniform => {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                for v in value.data_mut() {
                    *v = rng.uniform_range(-a, a);
                }
            }
            Init::Uniform(a) => {
                for v in value.data_mut() {
                    *v = rng.uniform_range(-a, a);
                }
            }
        }
        ParamTensor {
            grad: DenseMatrix::zeros(rows, cols),
            m: DenseMatrix::zeros(rows, cols),
            v: DenseMatrix::zeros(rows, cols),
            value,
        }
    }
}

/// Adam hyper-parameters. Weight decay is decoupled (applied directly to
/// the parameter, scaled by the learning rate).
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamConfig {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamStore {
    order: Vec<String>,
    tensors: BTreeMap<String, ParamTensor>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            order: Vec::new(),
            tensors: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, init: Init, rng: &mut Rng) {
        assert!(
            !self.tensors.contains_key(name),
            "duplicate parameter {name}"
        );
        self.order.push(name.to_string());
        self.tensors
            .insert(name.to_string(), ParamTensor::new(rows, cols, init, rng));
    }

    pub fn names(&self) -> &[String] {
        &self.order
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn value(&self, name: &str) -> &DenseMatrix {
        &self.tensors[name].value
    }

    pub fn value_mut(&mut self, name: &str) -> &mut DenseMatrix {
        &mut self.tensors.get_mut(name).unwrap().value
    }

    pub fn grad(&self, name: &str) -> &DenseMatrix {
        &self.tensors[name].grad
    }

    pub fn grad_mut(&mut self, name: &str) -> &mut DenseMatrix {
        &mut self.tensors.get_mut(name).unwrap().grad
    }

    /// Accumulates `g` into the gradient buffer of `name`.
    pub fn accumulate_grad(&mut self, name: &str, g: &DenseMatrix) -> Result<()> {
        self.grad_mut(name).scaled_add_assign(1.0, g)
    }

    pub fn zero_grad(&mut self) {
        for t in self.tensors.values_mut() {
            for g in t.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors
            .values()
            .map(|t| t.value.data().len())
            .sum()
    }

    /// Adds `coeff * value` to every gradient buffer: classic coupled L2
    /// regularization entering the optimizer through the gradient, as
    /// opposed to the decoupled decay inside `adam_step`.
    pub fn add_l2_to_grads(&mut self, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        for tensor in self.tensors.values_mut() {
            for (g, &p) in tensor.grad.data_mut().iter_mut().zip(tensor.value.data()) {
                *g += coeff * p;
            }
        }
    }

    /// One Adam update over every tensor from the current gradient buffers.
    pub fn adam_step(&mut self, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for tensor in self.tensors.values_mut() {
            let value = tensor.value.data_mut();
            let grad = tensor.grad.data();
            let m = tensor.m.data_mut();
            let v = tensor.v.data_mut();
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                value[i] -= cfg.lr * (mhat / (vhat.sqrt() + cfg.eps) + cfg.weight_decay * value[i]);
            }
        }
    }

    /// SHA-256 over names, shapes, and little-endian value bytes, in
    /// registration order. Used to verify frozen models never drift.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.order {
            let t = &self.tensors[name];
            hasher.update(name.as_bytes());
            hasher.update((t.value.rows() as u64).to_le_bytes());
            hasher.update((t.value.cols() as u64).to_le_bytes());
            for &x in t.value.data() {
                hasher.update(x.to_le_bytes());
            }
        }
        hex(&hasher.finalize())
    }

    /// Flat view over all parameter entries, used by the gradient checker.
    pub fn flat_len(&self) -> usize {
        self.num_params()
    }

    pub fn flat_get(&self, idx: usize) -> f64 {
        let (name, off) = self.locate(idx);
        self.tensors[name].value.data()[off]
    }

    pub fn flat_set(&mut self, idx: usize, value: f64) {
        let (name, off) = self.locate(idx);
        let name = name.to_string();
        self.tensors.get_mut(&name).unwrap().value.data_mut()[off] = value;
    }

    pub fn flat_grad(&self, idx: usize) -> f64 {
        let (name, off) = self.locate(idx);
        self.tensors[name].grad.data()[off]
    }

    /// Name and entry offset for a flat index.
    pub fn locate(&self, mut idx: usize) -> (&str, usize) {
        for name in &self.order {
            let len = self.tensors[name].value.data().len();
            if idx < len {
                return (name, idx);
            }
            idx -= len;
        }
        panic!("flat index out of range");
    }

    /// Writes the checkpoint format shared by every model: a magic line, a
    /// JSON header (metadata plus tensor directory), then raw little-endian
    /// f64 data in registration order.
    pub fn save(&self, path: &Path, meta: &serde_json::Value) -> Result<()> {
        let mut header = serde_json::Map::new();
        header.insert("meta".into(), meta.clone());
        header.insert("step".into(), serde_json::json!(self.step));
        let tensors: Vec<serde_json::Value> = self
            .order
            .iter()
            .map(|name| {
                let t = &self.tensors[name];
                serde_json::json!({
                    "name": name,
                    "rows": t.value.rows(),
                    "cols": t.value.cols(),
                })
            })
            .collect();
        header.insert("tensors".into(), serde_json::Value::Array(tensors));
        let header_bytes = serde_json::to_vec(&serde_json::Value::Object(header))
            .expect("checkpoint header serializes");

        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(b"SHILLAB1\n");
        buf.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header_bytes);
        for name in &self.order {
            for &x in self.tensors[name].value.data() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        f.write_all(&buf)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }

    /// Loads a checkpoint, returning the store and its metadata record.
    pub fn load(path: &Path) -> Result<(ParamStore, serde_json::Value)> {
        let mut f = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let bad = |msg: &str| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: msg.to_string(),
        };
        if bytes.len() < 17 || &bytes[..9] != b"SHILLAB1\n" {
            return Err(bad("not a checkpoint file"));
        }
        let hlen = u64::from_le_bytes(bytes[9..17].try_into().unwrap()) as usize;
        if bytes.len() < 17 + hlen {
            return Err(bad("truncated header"));
        }
        let header: serde_json::Value =
            serde_json::from_slice(&bytes[17..17 + hlen]).map_err(|_| bad("bad header json"))?;
        let meta = header["meta"].clone();
        let step = header["step"].as_u64().unwrap_or(0);
        let mut store = ParamStore::new();
        store.step = step;
        let mut off = 17 + hlen;
        for t in header["tensors"]
            .as_array()
            .ok_or_else(|| bad("missing tensor directory"))?
        {
            let name = t["name"].as_str().ok_or_else(|| bad("unnamed tensor"))?;
            let rows = t["rows"].as_u64().ok_or_else(|| bad("bad rows"))? as usize;
            let cols = t["cols"].as_u64().ok_or_else(|| bad("bad cols"))? as usize;
            let n = rows * cols;
            if bytes.len() < off + 8 * n {
                return Err(bad("truncated tensor data"));
            }
            let mut data = Vec::with_capacity(n);
            for i in 0..n {
                let chunk: [u8; 8] = bytes[off + 8 * i..off + 8 * i + 8].try_into().unwrap();
                data.push(f64::from_le_bytes(chunk));
            }
            off += 8 * n;
            store.order.push(name.to_string());
            store.tensors.insert(
                name.to_string(),
                ParamTensor {
                    value: DenseMatrix::from_vec(rows, cols, data),
                    grad: DenseMatrix::zeros(rows, cols),
                    m: DenseMatrix::zeros(rows, cols),
                    v: DenseMatrix::zeros(rows, cols),
                },
            );
        }
        Ok((store, meta))
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

pub fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// SHA-256 hex digest of arbitrary bytes; used for config and artifact hashes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex(&hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_store() -> ParamStore {
        let mut rng = Rng::new(1);
        let mut s = ParamStore::new();
        s.add("w", 3, 2, Init::XavierUniform, &mut rng);
        s.add("b", 1, 2, Init::Zeros, &mut rng);
        s
    }

    #[test]
    fn zero_grad_clears_everything() {
        let mut s = toy_store();
        s.grad_mut("w").data_mut()[2] = 5.0;
        s.zero_grad();
        assert!(s.grad("w").data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn adam_step_counter_strictly_increases() {
        let mut s = toy_store();
        let cfg = AdamConfig::new(1e-3, 0.0);
        assert_eq!(s.step(), 0);
        s.adam_step(&cfg);
        s.adam_step(&cfg);
        assert_eq!(s.step(), 2);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut s = toy_store();
        let before = s.value("w").get(0, 0);
        s.grad_mut("w").set(0, 0, 1.0);
        s.adam_step(&AdamConfig::new(0.1, 0.0));
        assert!(s.value("w").get(0, 0) < before);
    }

    #[test]
    fn identical_seeds_identical_trajectories() {
        let run = || {
            let mut rng = Rng::new(99);
            let mut s = ParamStore::new();
            s.add("w", 4, 4, Init::XavierUniform, &mut rng);
            let cfg = AdamConfig::new(1e-2, 1e-4);
            for step in 0..20 {
                s.zero_grad();
                let noise = rng.normal();
                for (i, g) in s.grad_mut("w").data_mut().iter_mut().enumerate() {
                    *g = noise * (i as f64 + 1.0) * 0.01 * (step as f64 + 1.0);
                }
                s.adam_step(&cfg);
            }
            s.content_hash()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let s = toy_store();
        s.save(&path, &serde_json::json!({"kind": "toy", "seed": 1}))
            .unwrap();
        let (loaded, meta) = ParamStore::load(&path).unwrap();
        assert_eq!(meta["kind"], "toy");
        assert_eq!(loaded.content_hash(), s.content_hash());
        assert_eq!(loaded.names(), s.names());
    }

    #[test]
    fn xavier_bounds() {
        let mut rng = Rng::new(3);
        let mut s = ParamStore::new();
        s.add("w", 8, 8, Init::XavierUniform, &mut rng);
        let a = (6.0 / 16.0f64).sqrt();
        assert!(s.value("w").data().iter().all(|&v| v.abs() <= a));
        // Not degenerate.
        assert!(s.value("w").max_abs() > 0.0);
    }
}
