use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ContentError, EmbeddingMatrix, DEFAULT_CLUSTERS, DEFAULT_MAX_ITER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_CLUSTERS,
            seed: 0,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared distances for the final state.
    pub objective: f64,
    /// Objective after each completed iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == cluster).collect()
    }

    pub fn distance(&self, y: &EmbeddingMatrix, i: usize) -> f64 {
        sq_dist(y.row(i), &self.centroids[self.assignments[i]]).sqrt()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn objective(y: &EmbeddingMatrix, centroids: &[Vec<f64>], assign: &[usize]) -> f64 {
    let parts: Vec<f64> = (0..y.rows())
        .into_par_iter()
        .map(|i| sq_dist(y.row(i), &centroids[assign[i]]))
        .collect();
    parts.iter().sum()
}

fn plus_plus(y: &EmbeddingMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = y.rows();
    let mut centroids = vec![y.row(rng.gen_range(0..n)).to_vec()];
    let mut best: Vec<f64> = (0..n).map(|i| sq_dist(y.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, w) in best.iter().enumerate() {
                acc += w;
                if *w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            chosen.unwrap_or_else(|| best.iter().rposition(|w| *w > 0.0).unwrap())
        } else {
            rng.gen_range(0..n)
        };
        let c = y.row(pick).to_vec();
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(y.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Nearest centroid for every row. `current` breaks ties in favour of the existing assignment.
fn assign(y: &EmbeddingMatrix, centroids: &[Vec<f64>], current: Option<&[usize]>) -> Vec<usize> {
    (0..y.rows())
        .into_par_iter()
        .map(|i| {
            let row = y.row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(row, centroid);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if let Some(cur) = current {
                if sq_dist(row, &centroids[cur[i]]) == best_d {
                    return cur[i];
                }
            }
            best
        })
        .collect()
}

/// Recomputes centroids as member means, reseeding empty clusters with the
/// point farthest from its centroid.
fn update(y: &EmbeddingMatrix, centroids: &mut [Vec<f64>], assign: &mut [usize]) {
    let (k, d) = (centroids.len(), y.dim());
    let mut sizes = vec![0usize; k];
    for &a in assign.iter() {
        sizes[a] += 1;
    }
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let mut far = None;
        let mut far_d = -1.0;
        for i in 0..y.rows() {
            if sizes[assign[i]] < 2 {
                continue;
            }
            let dist = sq_dist(y.row(i), &centroids[assign[i]]);
            if dist > far_d {
                far = Some(i);
                far_d = dist;
            }
        }
        let i = far.expect("n >= k leaves a cluster with two members");
        sizes[assign[i]] -= 1;
        assign[i] = empty;
        sizes[empty] = 1;
        centroids[empty] = y.row(i).to_vec();
    }
    let mut sums = vec![vec![0.0; d]; k];
    for (i, &a) in assign.iter().enumerate() {
        for (s, v) in sums[a].iter_mut().zip(y.row(i)) {
            *s += v;
        }
    }
    for (c, (sum, size)) in centroids.iter_mut().zip(sums.into_iter().zip(sizes)) {
        *c = sum.into_iter().map(|s| s / size as f64).collect();
    }
}

/// Lloyd's algorithm with k-means++ seeding.
pub fn kmeans(y: &EmbeddingMatrix, cfg: &KMeansConfig) -> Result<ClusterModel, ContentError> {
    let n = y.rows();
    if cfg.k == 0 || n < cfg.k {
        return Err(ContentError::Contract(format!("cannot form {} clusters from {n} rows", cfg.k)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = plus_plus(y, cfg.k, &mut rng);
    let mut assignments = assign(y, &centroids, None);
    let mut history = vec![objective(y, &centroids, &assignments)];
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        update(y, &mut centroids, &mut assignments);
        let next = assign(y, &centroids, Some(&assignments));
        let changed = next != assignments;
        assignments = next;
        let obj = objective(y, &centroids, &assignments);
        let prev = *history.last().unwrap();
        assert!(
            obj <= prev + 1e-9 * prev.abs().max(1.0),
            "k-means objective rose from {prev} to {obj}"
        );
        history.push(obj);
        iterations += 1;
        if !changed {
            break;
        }
    }
    let objective = *history.last().unwrap();
    Ok(ClusterModel {
        centroids,
        assignments,
        objective,
        history,
        iterations,
        seed: cfg.seed,
    })
}

/// Runs one fit per seed and keeps the lowest objective (earliest seed on ties).
pub fn kmeans_best_of(y: &EmbeddingMatrix, k: usize, seeds: &[u64], max_iter: usize) -> Result<ClusterModel, ContentError> {
    let mut best: Option<ClusterModel> = None;
    for &seed in seeds {
        let m = kmeans(y, &KMeansConfig { k, seed, max_iter })?;
        if best.as_ref().is_none_or(|b| m.objective < b.objective) {
            best = Some(m);
        }
    }
    best.ok_or_else(|| ContentError::Contract("no seeds given".into()))
}

/// Members of `cluster` by ascending distance to its centroid, ties by row index, first `n`.
pub fn representatives(y: &EmbeddingMatrix, model: &ClusterModel, cluster: usize, n: usize) -> Vec<usize> {
    ranked(model.members(cluster), |i| sq_dist(y.row(i), &model.centroids[cluster]), n)
}

/// Like [`representatives`], but measures distance in a second embedding space
/// whose rows align with the clustered ones. The centroid is the member mean in that space.
pub fn representatives_in(
    space: &EmbeddingMatrix,
    model: &ClusterModel,
    cluster: usize,
    n: usize,
) -> Result<Vec<usize>, ContentError> {
    if space.rows() != model.assignments.len() {
        return Err(ContentError::Contract(format!(
            "second space has {} rows, clustering has {}",
            space.rows(),
            model.assignments.len()
        )));
    }
    let members = model.members(cluster);
    let mut centre = vec![0.0; space.dim()];
    for &i in &members {
        for (c, v) in centre.iter_mut().zip(space.row(i)) {
            *c += v;
        }
    }
    centre.iter_mut().for_each(|c| *c /= members.len().max(1) as f64);
    Ok(ranked(members, |i| sq_dist(space.row(i), &centre), n))
}

fn ranked(members: Vec<usize>, dist: impl Fn(usize) -> f64, n: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = members.into_iter().map(|i| (dist(i), i)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(n).map(|(_, i)| i).collect()
}
