//! Batch-All triplet loss and its exact gradients.
//!
//! For every anchor, every positive of that anchor is paired with every
//! negative of that anchor; each triplet contributes
//! `max(||d_a - d_p|| - ||d_a - d_n|| + margin, 0)` with non-squared
//! Euclidean distances, and the loss is the raw sum over all triplets.

use crate::detect::FeatureVector;
use crate::error::{Result, SimcoError};

use super::{Descriptor, EmbeddingNet, DESCRIPTOR_DIM};

/// Ordered index pairs of a mined batch.
pub type PairList = Vec<(usize, usize)>;

/// Ordered positive pairs (equal label, distinct index) and ordered negative
/// pairs (unequal label). `|P| + |N| = n(n-1)`.
pub fn mine_pairs(labels: &[usize]) -> (PairList, PairList) {
    let n = labels.len();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            if labels[a] == labels[b] {
                positives.push((a, b));
            } else {
                negatives.push((a, b));
            }
        }
    }
    (positives, negatives)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletLossValue {
    /// Raw sum of hinge terms over all triplets.
    pub value: f64,
    /// Triplets with a strictly positive hinge.
    pub active_triplets: usize,
    pub total_triplets: usize,
    /// True when the batch admits no triplet at all.
    pub degenerate: bool,
}

/// Evaluate the Batch-All triplet loss over a labeled descriptor set.
pub fn triplet_loss(descriptors: &[Descriptor], labels: &[usize], margin: f64) -> TripletLossValue {
    assert_eq!(descriptors.len(), labels.len());
    let n = descriptors.len();
    let dist = pairwise_distances(descriptors);
    let mut value = 0.0;
    let mut active = 0usize;
    let mut total = 0usize;
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for neg in 0..n {
                if labels[neg] == labels[a] {
                    continue;
                }
                total += 1;
                let h = dist[a * n + p] - dist[a * n + neg] + margin;
                if h > 0.0 {
                    value += h;
                    active += 1;
                }
            }
        }
    }
    TripletLossValue {
        value,
        active_triplets: active,
        total_triplets: total,
        degenerate: total == 0,
    }
}

fn pairwise_distances(descriptors: &[Descriptor]) -> Vec<f64> {
    let n = descriptors.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = descriptors[i].distance(&descriptors[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    dist
}

/// Parameter gradients, laid out like the net (`w1, b1, w2, b2`).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn zeros(net: &EmbeddingNet) -> Self {
        Gradients {
            w1: vec![0.0; net.w1.len()],
            b1: vec![0.0; net.b1.len()],
            w2: vec![0.0; net.w2.len()],
            b2: vec![0.0; net.b2.len()],
        }
    }

    pub fn param(&self, idx: usize) -> f64 {
        let mut i = idx;
        for part in [&self.w1, &self.b1, &self.w2, &self.b2] {
            if i < part.len() {
                return part[i];
            }
            i -= part.len();
        }
        panic!("gradient index {idx} out of range");
    }
}

/// Exact gradients of the raw-sum triplet loss through the normalization
/// stage and both layers.
///
/// Subgradient conventions: hinge terms at exactly zero contribute nothing,
/// `relu'(0) = 0`, and the direction of a zero-distance descriptor pair is
/// taken as the zero vector.
#[allow(clippy::needless_range_loop)] // lockstep kernels over several arrays
pub fn loss_gradient(
    net: &EmbeddingNet,
    features: &[FeatureVector],
    labels: &[usize],
    margin: f64,
) -> Result<(TripletLossValue, Gradients)> {
    if features.len() != labels.len() {
        return Err(SimcoError::LengthMismatch {
            left: features.len(),
            right: labels.len(),
        });
    }
    let n = features.len();
    let caches: Vec<_> = features
        .iter()
        .map(|f| {
            if f.values.len() != net.input_dim {
                return Err(SimcoError::DimensionMismatch {
                    expected: net.input_dim,
                    got: f.values.len(),
                });
            }
            Ok(net.forward_cached(&f.values))
        })
        .collect::<Result<_>>()?;
    let descriptors: Vec<Descriptor> = caches.iter().map(|c| c.descriptor.clone()).collect();
    let dist = pairwise_distances(&descriptors);

    // hinge count per ordered pair: pos_weight[(a,p)] = number of active
    // triplets using that positive pair, and likewise for negatives
    let mut pos_weight = vec![0.0f64; n * n];
    let mut neg_weight = vec![0.0f64; n * n];
    let mut value = 0.0;
    let mut active = 0usize;
    let mut total = 0usize;
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for neg in 0..n {
                if labels[neg] == labels[a] {
                    continue;
                }
                total += 1;
                let h = dist[a * n + p] - dist[a * n + neg] + margin;
                if h > 0.0 {
                    value += h;
                    active += 1;
                    pos_weight[a * n + p] += 1.0;
                    neg_weight[a * n + neg] += 1.0;
                }
            }
        }
    }
    let loss = TripletLossValue {
        value,
        active_triplets: active,
        total_triplets: total,
        degenerate: total == 0,
    };

    // per-descriptor gradient dL/dd
    let mut d_desc = vec![[0.0f64; DESCRIPTOR_DIM]; n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let wp = pos_weight[a * n + b];
            let wn = neg_weight[a * n + b];
            if wp == 0.0 && wn == 0.0 {
                continue;
            }
            let d = dist[a * n + b];
            if d < 1e-12 {
                continue; // zero-distance direction: subgradient 0
            }
            // unit vector from b to a times (wp - wn): the positive-pair
            // distance enters with +, the negative-pair distance with -
            let coef = (wp - wn) / d;
            for k in 0..DESCRIPTOR_DIM {
                let diff = descriptors[a].0[k] - descriptors[b].0[k];
                d_desc[a][k] += coef * diff;
                d_desc[b][k] -= coef * diff;
            }
        }
    }

    // backprop through normalization and both layers, accumulating over
    // samples in batch order
    let mut grads = Gradients::zeros(net);
    for (i, cache) in caches.iter().enumerate() {
        let g = &d_desc[i];
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        let d = &cache.descriptor.0;
        let dot: f64 = d.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        let mut d_raw = [0.0f64; DESCRIPTOR_DIM];
        for k in 0..DESCRIPTOR_DIM {
            d_raw[k] = (g[k] - dot * d[k]) / cache.norm;
        }
        let mut d_hidden = vec![0.0f64; net.hidden_dim];
        for k in 0..DESCRIPTOR_DIM {
            let gk = d_raw[k];
            if gk == 0.0 {
                continue;
            }
            grads.b2[k] += gk;
            let row = k * net.hidden_dim;
            for j in 0..net.hidden_dim {
                grads.w2[row + j] += gk * cache.hidden[j];
                d_hidden[j] += gk * net.w2[row + j];
            }
        }
        let x = &features[i].values;
        for j in 0..net.hidden_dim {
            if cache.pre_hidden[j] <= 0.0 || d_hidden[j] == 0.0 {
                continue;
            }
            let gj = d_hidden[j];
            grads.b1[j] += gj;
            let row = j * net.input_dim;
            for (ii, &xi) in x.iter().enumerate() {
                grads.w1[row + ii] += gj * xi;
            }
        }
    }
    Ok((loss, grads))
}
