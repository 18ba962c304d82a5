//! The similarity head: a small network mapping region features to unit-norm
//! 64-d descriptors, trained with a Batch-All triplet loss.

mod loss;
mod train;

pub use loss::{loss_gradient, mine_pairs, triplet_loss, Gradients, TripletLossValue};
pub use train::{
    feature_set_from_dir, feature_set_from_memory, train, write_loss_csv, FeatureDetector,
    FeatureSet, ImageFeatures, TrainConfig, TrainReport,
};

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimcoError};
use crate::rng::substream;

/// Descriptor dimensionality; the embedding lives on the 64-d hypersphere.
pub const DESCRIPTOR_DIM: usize = 64;

/// Unit-norm embedding of one detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(pub [f64; DESCRIPTOR_DIM]);

impl Descriptor {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Descriptor) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Two-layer network `input -> hidden (ReLU) -> 64`, followed by L2
/// normalization onto the hypersphere.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingNet {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `hidden_dim x input_dim`, row-major by output unit.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `DESCRIPTOR_DIM x hidden_dim`, row-major by output unit.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Inputs whose pre-normalization output is this small get nudged along a
/// fixed direction before normalizing.
const NORM_GUARD: f64 = 1e-12;
const NORM_GUARD_EPS: f64 = 1e-6;

impl EmbeddingNet {
    /// Seeded symmetric-uniform initialization: weights in
    /// `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = substream(seed, 0xEE17);
        let mut layer = |fan_in: usize, fan_out: usize| -> Vec<f64> {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect()
        };
        EmbeddingNet {
            input_dim,
            hidden_dim,
            w1: layer(input_dim, hidden_dim),
            b1: vec![0.0; hidden_dim],
            w2: layer(hidden_dim, DESCRIPTOR_DIM),
            b2: vec![0.0; DESCRIPTOR_DIM],
        }
    }

    /// Map features to a unit-norm descriptor.
    pub fn forward(&self, features: &[f64]) -> Result<Descriptor> {
        if features.len() != self.input_dim {
            return Err(SimcoError::DimensionMismatch {
                expected: self.input_dim,
                got: features.len(),
            });
        }
        Ok(self.forward_cached(features).descriptor)
    }

    pub(crate) fn forward_cached(&self, features: &[f64]) -> ForwardCache {
        let mut pre_hidden = vec![0.0; self.hidden_dim];
        for (j, out) in pre_hidden.iter_mut().enumerate() {
            let row = &self.w1[j * self.input_dim..(j + 1) * self.input_dim];
            let mut acc = self.b1[j];
            for (w, x) in row.iter().zip(features.iter()) {
                acc += w * x;
            }
            *out = acc;
        }
        let hidden: Vec<f64> = pre_hidden.iter().map(|&z| z.max(0.0)).collect();

        let mut raw = [0.0; DESCRIPTOR_DIM];
        for (k, out) in raw.iter_mut().enumerate() {
            let row = &self.w2[k * self.hidden_dim..(k + 1) * self.hidden_dim];
            let mut acc = self.b2[k];
            for (w, h) in row.iter().zip(hidden.iter()) {
                acc += w * h;
            }
            *out = acc;
        }
        let mut guarded = raw;
        let norm0 = guarded.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 < NORM_GUARD {
            guarded[0] += NORM_GUARD_EPS;
        }
        let norm = guarded.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut unit = guarded;
        for v in unit.iter_mut() {
            *v /= norm;
        }
        ForwardCache {
            pre_hidden,
            hidden,
            norm,
            descriptor: Descriptor(unit),
        }
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Flat parameter view in order `w1, b1, w2, b2`; used by the training
    /// step and by finite-difference checks.
    pub fn param(&self, idx: usize) -> f64 {
        let mut i = idx;
        for part in [&self.w1, &self.b1, &self.w2, &self.b2] {
            if i < part.len() {
                return part[i];
            }
            i -= part.len();
        }
        panic!("parameter index {idx} out of range");
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut f64 {
        let mut i = idx;
        for part in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            if i < part.len() {
                return &mut part[i];
            }
            i -= part.len();
        }
        panic!("parameter index {idx} out of range");
    }
}

pub(crate) struct ForwardCache {
    pub pre_hidden: Vec<f64>,
    pub hidden: Vec<f64>,
    pub norm: f64,
    pub descriptor: Descriptor,
}

/// On-disk model: versioned JSON with row-major weight arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    /// `[input, hidden, output]`.
    pub dims: [usize; 3],
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub alpha: f64,
    pub train_config: TrainConfig,
}

pub const MODEL_VERSION: u32 = 1;

/// Serialize a net (with its training provenance) to versioned JSON bytes.
pub fn model_to_bytes(net: &EmbeddingNet, train_config: &TrainConfig) -> Result<Vec<u8>> {
    let file = ModelFile {
        version: MODEL_VERSION,
        dims: [net.input_dim, net.hidden_dim, DESCRIPTOR_DIM],
        weights: vec![net.w1.clone(), net.w2.clone()],
        biases: vec![net.b1.clone(), net.b2.clone()],
        alpha: train_config.margin,
        train_config: train_config.clone(),
    };
    let mut bytes = serde_json::to_vec(&file)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn save_model(path: &Path, net: &EmbeddingNet, train_config: &TrainConfig) -> Result<()> {
    fs::write(path, model_to_bytes(net, train_config)?).map_err(|e| SimcoError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(EmbeddingNet, ModelFile)> {
    let bytes = fs::read(path).map_err(|e| SimcoError::io(path, e))?;
    let file: ModelFile = serde_json::from_slice(&bytes)?;
    if file.version != MODEL_VERSION {
        return Err(SimcoError::Malformed {
            what: "model file",
            detail: format!("unsupported version {}", file.version),
        });
    }
    let [input_dim, hidden_dim, out] = file.dims;
    if out != DESCRIPTOR_DIM
        || file.weights.len() != 2
        || file.biases.len() != 2
        || file.weights[0].len() != input_dim * hidden_dim
        || file.weights[1].len() != hidden_dim * DESCRIPTOR_DIM
        || file.biases[0].len() != hidden_dim
        || file.biases[1].len() != DESCRIPTOR_DIM
    {
        return Err(SimcoError::Malformed {
            what: "model file",
            detail: "dims do not match weight array lengths".into(),
        });
    }
    let net = EmbeddingNet {
        input_dim,
        hidden_dim,
        w1: file.weights[0].clone(),
        b1: file.biases[0].clone(),
        w2: file.weights[1].clone(),
        b2: file.biases[1].clone(),
    };
    Ok((net, file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_features(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, 1);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn forward_output_is_unit_norm() {
        let net = EmbeddingNet::init(20, 8, 3);
        for s in 0..50 {
            let x = random_features(20, s);
            let d = net.forward(&x).unwrap();
            assert!((d.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let net = EmbeddingNet::init(20, 8, 3);
        let x = random_features(20, 9);
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let net = EmbeddingNet::init(20, 8, 3);
        assert!(net.forward(&[0.0; 19]).is_err());
    }

    #[test]
    fn degenerate_input_still_normalizes() {
        // all-zero weights and biases produce a zero pre-normalization
        // vector; the epsilon guard must still yield a unit descriptor
        let net = EmbeddingNet {
            input_dim: 4,
            hidden_dim: 3,
            w1: vec![0.0; 12],
            b1: vec![0.0; 3],
            w2: vec![0.0; 3 * DESCRIPTOR_DIM],
            b2: vec![0.0; DESCRIPTOR_DIM],
        };
        let d = net.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((d.norm() - 1.0).abs() < 1e-9);
        assert!((d.0[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn forward_matches_straight_line_reimplementation() {
        // independent single-pass reimplementation of the forward path
        let net = EmbeddingNet::init(12, 6, 77);
        for s in 0..20u64 {
            let x = random_features(12, s + 100);
            let got = net.forward(&x).unwrap();

            let mut hidden = [0.0f64; 6];
            for (j, h) in hidden.iter_mut().enumerate() {
                let mut z = net.b1[j];
                for (i, &xi) in x.iter().enumerate() {
                    z += net.w1[j * 12 + i] * xi;
                }
                *h = if z > 0.0 { z } else { 0.0 };
            }
            let mut y = [0.0f64; DESCRIPTOR_DIM];
            for (k, yk) in y.iter_mut().enumerate() {
                let mut z = net.b2[k];
                for (j, &hj) in hidden.iter().enumerate() {
                    z += net.w2[k * 6 + j] * hj;
                }
                *yk = z;
            }
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (k, yk) in y.iter().enumerate() {
                assert!(
                    (got.0[k] - yk / norm).abs() < 1e-12,
                    "component {k} differs on sample {s}"
                );
            }
        }
    }

    #[test]
    fn model_round_trips_through_disk() {
        let net = EmbeddingNet::init(10, 4, 5);
        let cfg = TrainConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&path, &net, &cfg).unwrap();
        let (loaded, meta) = load_model(&path).unwrap();
        assert_eq!(loaded, net);
        assert_eq!(meta.dims, [10, 4, DESCRIPTOR_DIM]);
        // serialization is stable byte-for-byte
        save_model(&path, &loaded, &cfg).unwrap();
        let again = fs::read(&path).unwrap();
        assert_eq!(again, model_to_bytes(&net, &cfg).unwrap());
    }
}
