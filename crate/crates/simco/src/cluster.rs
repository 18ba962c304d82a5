//! Affinity propagation over descriptors, the preference sweep, the
//! seed-covering preference search, and cluster filtering.
//!
//! Similarity between two descriptors is negative squared Euclidean
//! distance; the matrix diagonal holds a uniform preference controlling how
//! many exemplars emerge. Messages are damped responsibilities and
//! availabilities; every tie breaks toward the lowest index so results are
//! identical across platforms and runs.

use serde::{Deserialize, Serialize};

use crate::embed::Descriptor;
use crate::error::{Result, SimcoError};
use crate::par::par_map_index;

/// Pairwise similarity matrix: off-diagonal `-||d_i - d_k||^2`, diagonal the
/// uniform preference. Off-diagonal entries of unit-norm descriptors lie in
/// `[-4, 0]`.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
    preference: f64,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn preference(&self) -> f64 {
        self.preference
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.n + k]
    }

    /// Minimum and maximum off-diagonal similarity; `None` when `n < 2`.
    pub fn offdiag_range(&self) -> Option<(f64, f64)> {
        offdiag_range_of(&self.data, self.n)
    }
}

fn offdiag_range_of(data: &[f64], n: usize) -> Option<(f64, f64)> {
    if n < 2 {
        return None;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        for k in 0..n {
            if i != k {
                let s = data[i * n + k];
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
    }
    Some((lo, hi))
}

/// Median of the off-diagonal similarities, the default preference for
/// unsupervised clustering. `None` when `n < 2`.
pub fn median_offdiag_similarity(descriptors: &[Descriptor]) -> Option<f64> {
    let n = descriptors.len();
    if n < 2 {
        return None;
    }
    let mut values = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for k in 0..n {
            if i != k {
                values.push(neg_sq_dist(&descriptors[i], &descriptors[k]));
            }
        }
    }
    values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    Some(values[(values.len() - 1) / 2])
}

fn neg_sq_dist(a: &Descriptor, b: &Descriptor) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.0.iter().zip(b.0.iter()) {
        let d = x - y;
        s += d * d;
    }
    -s
}

/// Build the similarity matrix for unit-norm descriptors.
pub fn build_similarity(descriptors: &[Descriptor], preference: f64) -> Result<SimilarityMatrix> {
    let n = descriptors.len();
    if n == 0 {
        return Err(SimcoError::Config("no descriptors to cluster".into()));
    }
    for (i, d) in descriptors.iter().enumerate() {
        if (d.norm() - 1.0).abs() > 1e-6 {
            return Err(SimcoError::Malformed {
                what: "descriptor",
                detail: format!("descriptor {i} has norm {}", d.norm()),
            });
        }
    }
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = preference;
        for k in (i + 1)..n {
            let s = neg_sq_dist(&descriptors[i], &descriptors[k]);
            data[i * n + k] = s;
            data[k * n + i] = s;
        }
    }
    Ok(SimilarityMatrix {
        n,
        data,
        preference,
    })
}

/// Message-passing constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct APConfig {
    /// Damping factor in `[0.5, 1)`.
    pub damping: f64,
    pub max_iter: usize,
    /// Iterations with an unchanged exemplar set needed to declare
    /// convergence.
    pub convergence_iter: usize,
}

impl Default for APConfig {
    fn default() -> Self {
        APConfig {
            damping: 0.5,
            max_iter: 200,
            convergence_iter: 15,
        }
    }
}

impl APConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..1.0).contains(&self.damping) {
            return Err(SimcoError::Config(format!(
                "damping {} outside [0.5, 1)",
                self.damping
            )));
        }
        if self.max_iter == 0 || self.convergence_iter == 0 {
            return Err(SimcoError::Config(
                "iteration counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Exemplar assignment over the clustered points. Exemplars are assigned to
/// themselves and every point's assignment target is an exemplar, so the
/// clusters partition the points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub preference: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Sorted ascending.
    pub exemplars: Vec<usize>,
    /// Exemplar index per point.
    pub assignment: Vec<usize>,
}

impl ClusterResult {
    /// Points assigned to `exemplar`, in index order.
    pub fn members(&self, exemplar: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &e)| e == exemplar)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn num_clusters(&self) -> usize {
        self.exemplars.len()
    }

    /// Clusters as sorted member lists keyed by exemplar.
    pub fn clusters(&self) -> Vec<(usize, Vec<usize>)> {
        self.exemplars
            .iter()
            .map(|&e| (e, self.members(e)))
            .collect()
    }
}

/// Run affinity propagation on a similarity matrix.
///
/// Responsibilities and availabilities follow the standard exemplar
/// message-passing updates, damped by `config.damping`. The exemplar set is
/// `{k : r(k,k) + a(k,k) > 0}`; when the criterion selects nothing (possible
/// for degenerate inputs) the point with the largest criterion becomes the
/// single exemplar. Non-convergence returns the best-effort result with
/// `converged == false`.
pub fn affinity_propagation(s: &SimilarityMatrix, config: &APConfig) -> Result<ClusterResult> {
    config.validate()?;
    let n = s.n;
    if n == 1 {
        return Ok(ClusterResult {
            preference: s.preference,
            converged: true,
            iterations: 0,
            exemplars: vec![0],
            assignment: vec![0],
        });
    }

    let lam = config.damping;
    let mut resp = vec![0.0f64; n * n];
    let mut avail = vec![0.0f64; n * n];
    let mut exemplars: Vec<usize> = Vec::new();
    let mut stable_iters = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;

    for iter in 0..config.max_iter {
        iterations = iter + 1;

        // responsibilities: r(i,k) <- s(i,k) - max_{k' != k} (a(i,k') + s(i,k'))
        for i in 0..n {
            let row = i * n;
            let mut best = f64::NEG_INFINITY;
            let mut second = f64::NEG_INFINITY;
            let mut best_k = 0usize;
            for k in 0..n {
                let v = avail[row + k] + s.data[row + k];
                if v > best {
                    second = best;
                    best = v;
                    best_k = k;
                } else if v > second {
                    second = v;
                }
            }
            for k in 0..n {
                let competitor = if k == best_k { second } else { best };
                let new = s.data[row + k] - competitor;
                resp[row + k] = lam * resp[row + k] + (1.0 - lam) * new;
            }
        }

        // availabilities: a(i,k) <- min(0, r(k,k) + sum_{i' not in {i,k}} max(0, r(i',k)))
        // and a(k,k) <- sum_{i' != k} max(0, r(i',k))
        for k in 0..n {
            let mut pos_sum = 0.0;
            for i in 0..n {
                if i != k {
                    pos_sum += resp[i * n + k].max(0.0);
                }
            }
            let rkk = resp[k * n + k];
            for i in 0..n {
                let new = if i == k {
                    pos_sum
                } else {
                    (rkk + pos_sum - resp[i * n + k].max(0.0)).min(0.0)
                };
                avail[i * n + k] = lam * avail[i * n + k] + (1.0 - lam) * new;
            }
        }

        let current = criterion_exemplars(&resp, &avail, n);
        if current == exemplars && !current.is_empty()
            || (current.is_empty() && exemplars.is_empty() && iter > 0)
        {
            stable_iters += 1;
        } else {
            stable_iters = 0;
        }
        exemplars = current;
        if stable_iters + 1 >= config.convergence_iter {
            converged = true;
            break;
        }
    }

    // degenerate criterion: fall back to the single best self-affinity point
    if exemplars.is_empty() {
        let mut best_k = 0usize;
        let mut best = f64::NEG_INFINITY;
        for k in 0..n {
            let v = resp[k * n + k] + avail[k * n + k];
            if v > best {
                best = v;
                best_k = k;
            }
        }
        exemplars = vec![best_k];
    }

    // identical points must never split: demote an exemplar that coincides
    // with a lower-indexed one (off-diagonal similarity exactly zero)
    let mut deduped: Vec<usize> = Vec::with_capacity(exemplars.len());
    for &e in &exemplars {
        if !deduped.iter().any(|&kept| s.get(kept, e) == 0.0) {
            deduped.push(e);
        }
    }
    let exemplars = deduped;

    let assignment = assign_to_exemplars(s, &exemplars);
    Ok(ClusterResult {
        preference: s.preference,
        converged,
        iterations,
        exemplars,
        assignment,
    })
}

fn criterion_exemplars(resp: &[f64], avail: &[f64], n: usize) -> Vec<usize> {
    (0..n)
        .filter(|&k| resp[k * n + k] + avail[k * n + k] > 0.0)
        .collect()
}

/// Assign each point to the exemplar maximizing similarity (itself for
/// exemplars); ties break toward the lowest exemplar index.
fn assign_to_exemplars(s: &SimilarityMatrix, exemplars: &[usize]) -> Vec<usize> {
    let mut assignment = vec![0usize; s.n];
    for (i, slot) in assignment.iter_mut().enumerate() {
        if exemplars.contains(&i) {
            *slot = i;
            continue;
        }
        let mut best_e = exemplars[0];
        let mut best = f64::NEG_INFINITY;
        for &e in exemplars {
            let v = s.get(i, e);
            if v > best {
                best = v;
                best_e = e;
            }
        }
        *slot = best_e;
    }
    assignment
}

/// Run one independent clustering per preference value.
pub fn preference_sweep(
    descriptors: &[Descriptor],
    preferences: &[f64],
    config: &APConfig,
) -> Result<Vec<ClusterResult>> {
    if preferences.is_empty() {
        return Err(SimcoError::Config("empty preference list".into()));
    }
    par_map_index(preferences.len(), |i| {
        let s = build_similarity(descriptors, preferences[i])?;
        affinity_propagation(&s, config)
    })
    .into_iter()
    .collect()
}

/// Linear preference grid over the off-diagonal similarity range.
pub fn preference_grid(descriptors: &[Descriptor], steps: usize) -> Vec<f64> {
    let n = descriptors.len();
    if n < 2 || steps == 0 {
        return vec![0.0];
    }
    let s = build_similarity(descriptors, 0.0).expect("validated descriptors");
    let (lo, hi) = s.offdiag_range().expect("n >= 2");
    if steps == 1 || (hi - lo).abs() < f64::EPSILON {
        return vec![lo];
    }
    (0..steps)
        .map(|j| lo + (hi - lo) * j as f64 / (steps - 1) as f64)
        .collect()
}

/// Scan the preference grid upward until every seed lands in a distinct
/// cluster, returning that preference and clustering.
///
/// Seed indices must be distinct and in range. Fails with
/// [`SimcoError::SeedsNotSeparable`] when no grid point separates the seeds
/// (identical seed descriptors can never split).
pub fn preference_search(
    descriptors: &[Descriptor],
    seeds: &[usize],
    config: &APConfig,
    grid_steps: usize,
) -> Result<(f64, ClusterResult)> {
    let n = descriptors.len();
    if seeds.is_empty() || seeds.len() > n {
        return Err(SimcoError::Config(format!(
            "need 1..=n seeds, got {} for n = {n}",
            seeds.len()
        )));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() || sorted.iter().any(|&s| s >= n) {
        return Err(SimcoError::Config(
            "seed indices must be distinct and in range".into(),
        ));
    }
    // seeds with coinciding descriptors can never land in distinct clusters
    for (i, &a) in seeds.iter().enumerate() {
        for &b in &seeds[i + 1..] {
            if descriptors[a].distance(&descriptors[b]) == 0.0 {
                return Err(SimcoError::SeedsNotSeparable);
            }
        }
    }

    for preference in preference_grid(descriptors, grid_steps) {
        let s = build_similarity(descriptors, preference)?;
        let result = affinity_propagation(&s, config)?;
        if seeds_separated(&result, seeds) {
            return Ok((preference, result));
        }
    }
    Err(SimcoError::SeedsNotSeparable)
}

/// True when every seed is covered by a different cluster.
pub fn seeds_separated(result: &ClusterResult, seeds: &[usize]) -> bool {
    let mut covered: Vec<usize> = seeds.iter().map(|&s| result.assignment[s]).collect();
    covered.sort_unstable();
    covered.dedup();
    covered.len() == seeds.len()
}

/// Filtering rule applied to clusters before counting.
#[derive(Debug, Clone)]
pub enum FilterMode {
    /// Keep exactly the clusters containing at least one seed.
    Seeded { seeds: Vec<usize> },
    /// Keep clusters with at least `min_count` members; singletons are
    /// treated as outliers by default.
    Unsupervised { min_count: usize },
}

/// Kept exemplar ids, sorted ascending.
pub fn filter_clusters(result: &ClusterResult, mode: &FilterMode) -> Vec<usize> {
    let mut kept: Vec<usize> = match mode {
        FilterMode::Seeded { seeds } => {
            let mut ex: Vec<usize> = seeds.iter().map(|&s| result.assignment[s]).collect();
            ex.sort_unstable();
            ex.dedup();
            ex
        }
        FilterMode::Unsupervised { min_count } => result
            .exemplars
            .iter()
            .copied()
            .filter(|&e| result.members(e).len() >= *min_count)
            .collect(),
    };
    kept.sort_unstable();
    kept
}
