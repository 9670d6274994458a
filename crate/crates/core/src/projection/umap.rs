//! Uniform manifold approximation and projection.
//!
//! Follows the reference algorithm: exact k-nearest neighbours, fuzzy
//! simplicial set with per-point bandwidths, spectral initialization, and
//! stochastic layout optimization with negative sampling.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UmapParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    /// Defaults to 500 for fitting up to 10,000 points, 200 above.
    pub n_epochs: Option<usize>,
    pub learning_rate: f64,
    pub negative_sample_rate: usize,
    pub repulsion_strength: f64,
}

impl Default for UmapParams {
    fn default() -> Self {
        UmapParams {
            n_neighbors: 15,
            min_dist: 0.1,
            spread: 1.0,
            n_epochs: None,
            learning_rate: 1.0,
            negative_sample_rate: 5,
            repulsion_strength: 1.0,
        }
    }
}

/// A fitted embedding. Keeps the training data so new points can be placed.
#[derive(Debug, Clone, PartialEq)]
pub struct Umap {
    params: UmapParams,
    a: f64,
    b: f64,
    data: Array2<f64>,
    embedding: Array2<f64>,
    seed: u64,
}

const SMOOTH_K_TOLERANCE: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;

/// Squared Euclidean distances between rows of `a` and rows of `b`.
fn sq_distances(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let na: Vec<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
    let nb: Vec<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut g = a.dot(&b.t());
    for ((i, j), v) in g.indexed_iter_mut() {
        *v = (na[i] + nb[j] - 2.0 * *v).max(0.0);
    }
    g
}

/// Exact k nearest neighbours of every query row, sorted by distance then
/// index. With `same` the query set is the data set and self distances are 0.
pub(crate) fn knn(
    query: ArrayView2<f64>,
    data: ArrayView2<f64>,
    k: usize,
    same: bool,
) -> (Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let mut d2 = sq_distances(query, data);
    if same {
        for i in 0..d2.nrows() {
            d2[[i, i]] = 0.0;
        }
    }
    let mut idx = Vec::with_capacity(query.nrows());
    let mut dist = Vec::with_capacity(query.nrows());
    for row in d2.rows() {
        let mut cand: Vec<(f64, usize)> = row.iter().copied().zip(0..).collect();
        let cmp = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
        if k < cand.len() {
            cand.select_nth_unstable_by(k, cmp);
            cand.truncate(k);
        }
        cand.sort_by(cmp);
        idx.push(cand.iter().map(|c| c.1).collect());
        dist.push(cand.iter().map(|c| c.0.sqrt()).collect());
    }
    (idx, dist)
}

/// Per-point bandwidth `sigma` and nearest non-zero distance `rho` such that
/// the membership weights of each neighbourhood sum to `log2(k)`.
fn smooth_knn_dist(dists: &[Vec<f64>], k: f64, local_connectivity: f64) -> (Vec<f64>, Vec<f64>) {
    let target = k.log2();
    let mean_all = {
        let (s, n) = dists
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
        s / n.max(1) as f64
    };
    let mut sigmas = Vec::with_capacity(dists.len());
    let mut rhos = Vec::with_capacity(dists.len());
    for row in dists {
        let non_zero: Vec<f64> = row.iter().copied().filter(|d| *d > 0.0).collect();
        let mut rho = 0.0;
        if non_zero.len() as f64 >= local_connectivity {
            let index = local_connectivity.floor() as usize;
            let interp = local_connectivity - index as f64;
            if index > 0 {
                rho = non_zero[index - 1];
                if interp > SMOOTH_K_TOLERANCE {
                    rho += interp * (non_zero[index] - non_zero[index - 1]);
                }
            } else {
                rho = interp * non_zero[0];
            }
        } else if !non_zero.is_empty() {
            rho = non_zero.iter().copied().fold(0.0, f64::max);
        }

        let (mut lo, mut hi, mut mid) = (0.0, f64::INFINITY, 1.0);
        for _ in 0..64 {
            let psum: f64 = row[1..]
                .iter()
                .map(|d| {
                    let d = d - rho;
                    if d > 0.0 {
                        (-d / mid).exp()
                    } else {
                        1.0
                    }
                })
                .sum();
            if (psum - target).abs() < SMOOTH_K_TOLERANCE {
                break;
            }
            if psum > target {
                hi = mid;
                mid = (lo + hi) / 2.0;
            } else {
                lo = mid;
                if hi == f64::INFINITY {
                    mid *= 2.0;
                } else {
                    mid = (lo + hi) / 2.0;
                }
            }
        }
        let floor = if rho > 0.0 {
            MIN_K_DIST_SCALE * row.iter().sum::<f64>() / row.len() as f64
        } else {
            MIN_K_DIST_SCALE * mean_all
        };
        sigmas.push(mid.max(floor));
        rhos.push(rho);
    }
    (sigmas, rhos)
}

/// Fits `a`, `b` of the low-dimensional similarity `1 / (1 + a d^(2b))` to
/// the offset exponential defined by `spread` and `min_dist`.
pub fn find_ab_params(spread: f64, min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2))
            .sum()
    };
    // Levenberg-Marquardt on (a, b)
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let den = 1.0 + a * p;
            let f = 1.0 / den;
            let ja = -p / (den * den);
            let jb = -a * p * 2.0 * x.ln() / (den * den);
            let r = f - y;
            jtj[0][0] += ja * ja;
            jtj[0][1] += ja * jb;
            jtj[1][1] += jb * jb;
            jtr[0] += ja * r;
            jtr[1] += jb * r;
        }
        jtj[1][0] = jtj[0][1];
        let m00 = jtj[0][0] * (1.0 + lambda);
        let m11 = jtj[1][1] * (1.0 + lambda);
        let det = m00 * m11 - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let da = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let db = -(m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
        let (na, nb) = (a + da, b + db);
        let new_cost = if na > 0.0 && nb > 0.0 { sse(na, nb) } else { f64::INFINITY };
        if new_cost < cost {
            let done = (cost - new_cost) < 1e-15 * cost.max(1e-300);
            a = na;
            b = nb;
            cost = new_cost;
            lambda = (lambda / 10.0).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (a, b)
}

/// Sparse symmetric graph as sorted rows.
type Graph = Vec<BTreeMap<usize, f64>>;

fn fuzzy_simplicial_set(idx: &[Vec<usize>], dists: &[Vec<f64>], k: usize) -> Graph {
    let n = idx.len();
    let (sigmas, rhos) = smooth_knn_dist(dists, k as f64, 1.0);
    let mut w: Graph = vec![BTreeMap::new(); n];
    for i in 0..n {
        for (&j, &d) in idx[i].iter().zip(&dists[i]) {
            let v = if j == i {
                0.0
            } else if d - rhos[i] <= 0.0 || sigmas[i] == 0.0 {
                1.0
            } else {
                (-(d - rhos[i]) / sigmas[i]).exp()
            };
            if v > 0.0 {
                w[i].insert(j, v);
            }
        }
    }
    // fuzzy union: w + w^T - w * w^T
    let mut out: Graph = vec![BTreeMap::new(); n];
    for i in 0..n {
        for (&j, &v) in &w[i] {
            let t = w[j].get(&i).copied().unwrap_or(0.0);
            let s = v + t - v * t;
            out[i].insert(j, s);
            out[j].insert(i, s);
        }
    }
    out
}

fn prune(graph: &mut Graph, n_epochs: usize) {
    let max = graph
        .iter()
        .flat_map(|r| r.values())
        .copied()
        .fold(0.0, f64::max);
    let cut = max / n_epochs as f64;
    for row in graph.iter_mut() {
        row.retain(|_, v| *v >= cut);
    }
}

/// Eigenvectors of the normalized adjacency for the largest eigenvalues,
/// skipping the trivial one. Returns `n x dims`.
fn spectral_init(graph: &Graph, dims: usize, r: &mut Rng) -> Array2<f64> {
    let n = graph.len();
    let deg: Vec<f64> = graph.iter().map(|row| row.values().sum()).collect();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|d| if *d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    // M = (I + D^-1/2 W D^-1/2) / 2 has the same eigenvectors, spectrum in [0, 1]
    let apply = |x: &DMatrix<f64>| -> DMatrix<f64> {
        let mut y = x * 0.5;
        for (i, row) in graph.iter().enumerate() {
            for (&j, &w) in row {
                let s = 0.5 * w * inv_sqrt[i] * inv_sqrt[j];
                for c in 0..x.ncols() {
                    y[(i, c)] += s * x[(j, c)];
                }
            }
        }
        y
    };
    let block = (dims + 9).min(n);
    let q = if n <= 256 || block >= n {
        DMatrix::identity(n, n)
    } else {
        // subspace iteration, then Rayleigh-Ritz below
        let mut q = DMatrix::from_fn(n, block, |_, _| r.random_range(-1.0..1.0));
        for _ in 0..200 {
            q = apply(&q).qr().q();
        }
        q
    };
    let h = q.transpose() * apply(&q);
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let vecs = &q * &eig.eigenvectors;
    let mut out = Array2::zeros((n, dims));
    for (c, &src) in order.iter().skip(1).take(dims).enumerate() {
        let col = vecs.column(src);
        let mut pivot = 0;
        for i in 0..n {
            if col[i].abs() > col[pivot].abs() + 1e-12 {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            out[[i, c]] = sign * col[i];
        }
    }
    out
}

struct Layout<'a> {
    head: &'a mut [f64],
    tail: Option<&'a [f64]>,
    dim: usize,
    n_tail: usize,
    a: f64,
    b: f64,
    gamma: f64,
    lr: f64,
    negative_rate: f64,
}

#[inline]
fn clip(x: f64) -> f64 {
    x.clamp(-4.0, 4.0)
}

impl Layout<'_> {
    /// Stochastic optimization over the weighted edges `(i, j, w)`.
    fn optimize(&mut self, edges: &[(usize, usize, f64)], n_epochs: usize, r: &mut Rng) {
        if edges.is_empty() || n_epochs == 0 {
            return;
        }
        let max_w = edges.iter().map(|e| e.2).fold(0.0, f64::max);
        let eps: Vec<f64> = edges
            .iter()
            .map(|e| {
                let n_samples = n_epochs as f64 * e.2 / max_w;
                if n_samples > 0.0 {
                    n_epochs as f64 / n_samples
                } else {
                    -1.0
                }
            })
            .collect();
        let eps_neg: Vec<f64> = eps.iter().map(|e| e / self.negative_rate).collect();
        let mut next = eps.clone();
        let mut next_neg = eps_neg.clone();
        let dim = self.dim;
        let mut cur = vec![0.0; dim];
        let mut oth = vec![0.0; dim];
        for epoch in 0..n_epochs {
            let alpha = self.lr * (1.0 - epoch as f64 / n_epochs as f64);
            let n = epoch as f64;
            for (e, &(j, k, _)) in edges.iter().enumerate() {
                if eps[e] <= 0.0 || next[e] > n {
                    continue;
                }
                cur.copy_from_slice(&self.head[j * dim..(j + 1) * dim]);
                match self.tail {
                    Some(t) => oth.copy_from_slice(&t[k * dim..(k + 1) * dim]),
                    None => oth.copy_from_slice(&self.head[k * dim..(k + 1) * dim]),
                }
                let d2: f64 = cur.iter().zip(&oth).map(|(x, y)| (x - y) * (x - y)).sum();
                let coeff = if d2 > 0.0 {
                    -2.0 * self.a * self.b * d2.powf(self.b - 1.0) / (self.a * d2.powf(self.b) + 1.0)
                } else {
                    0.0
                };
                for d in 0..dim {
                    let g = clip(coeff * (cur[d] - oth[d])) * alpha;
                    cur[d] += g;
                    oth[d] -= g;
                }
                if self.tail.is_none() {
                    self.head[k * dim..(k + 1) * dim].copy_from_slice(&oth);
                }
                next[e] += eps[e];

                let n_neg = ((n - next_neg[e]) / eps_neg[e]).floor().max(0.0) as usize;
                for _ in 0..n_neg {
                    let s = r.random_range(0..self.n_tail);
                    let other = match self.tail {
                        Some(t) => &t[s * dim..(s + 1) * dim],
                        None => &self.head[s * dim..(s + 1) * dim],
                    };
                    let d2: f64 = cur.iter().zip(other).map(|(x, y)| (x - y) * (x - y)).sum();
                    let coeff = if d2 > 0.0 {
                        2.0 * self.gamma * self.b
                            / ((0.001 + d2) * (self.a * d2.powf(self.b) + 1.0))
                    } else if self.tail.is_none() && s == j {
                        continue;
                    } else {
                        0.0
                    };
                    if coeff > 0.0 {
                        for d in 0..dim {
                            cur[d] += clip(coeff * (cur[d] - other[d])) * alpha;
                        }
                    }
                }
                next_neg[e] += n_neg as f64 * eps_neg[e];
                self.head[j * dim..(j + 1) * dim].copy_from_slice(&cur);
            }
        }
    }
}

fn edge_list(graph: &Graph) -> Vec<(usize, usize, f64)> {
    graph
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().map(move |(&j, &w)| (i, j, w)))
        .collect()
}

impl Umap {
    pub fn fit(data: ArrayView2<f64>, dims: usize, params: &UmapParams, seed: u64) -> Result<Umap> {
        let n = data.nrows();
        if params.n_neighbors < 2 {
            return Err(Error::Config("umap n_neighbors must be at least 2".into()));
        }
        if n < 2 * params.n_neighbors {
            return Err(Error::invalid(format!(
                "umap needs at least {} points for n_neighbors={}, got {n}; use the pca method for small inputs",
                2 * params.n_neighbors,
                params.n_neighbors
            )));
        }
        if dims == 0 || dims >= n {
            return Err(Error::invalid(format!("umap output dims {dims} invalid for {n} points")));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("umap input contains non-finite values"));
        }
        let (a, b) = find_ab_params(params.spread, params.min_dist);
        let n_epochs = params.n_epochs.unwrap_or(if n <= 10_000 { 500 } else { 200 });
        let mut r = rng::seeded(seed);

        let (idx, dists) = knn(data, data, params.n_neighbors, true);
        let mut graph = fuzzy_simplicial_set(&idx, &dists, params.n_neighbors);
        prune(&mut graph, n_epochs);

        let init = spectral_init(&graph, dims, &mut r);
        let max_abs = init.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let expansion = if max_abs > 0.0 { 10.0 / max_abs } else { 1.0 };
        let noise = Normal::new(0.0, 1e-4).unwrap();
        let mut emb = init.mapv(|x| x * expansion);
        emb.mapv_inplace(|x| x + noise.sample(&mut r));
        for mut col in emb.columns_mut() {
            let lo = col.fold(f64::INFINITY, |m, x| m.min(*x));
            let hi = col.fold(f64::NEG_INFINITY, |m, x| m.max(*x));
            let span = if hi > lo { hi - lo } else { 1.0 };
            col.mapv_inplace(|x| 10.0 * (x - lo) / span);
        }

        let mut flat = emb.into_raw_vec_and_offset().0;
        let edges = edge_list(&graph);
        Layout {
            head: &mut flat,
            tail: None,
            dim: dims,
            n_tail: n,
            a,
            b,
            gamma: params.repulsion_strength,
            lr: params.learning_rate,
            negative_rate: params.negative_sample_rate as f64,
        }
        .optimize(&edges, n_epochs, &mut r);
        let embedding = Array2::from_shape_vec((n, dims), flat).expect("shape");
        Ok(Umap {
            params: params.clone(),
            a,
            b,
            data: data.to_owned(),
            embedding,
            seed,
        })
    }

    pub fn embedding(&self) -> &Array2<f64> {
        &self.embedding
    }

    pub fn ab(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Places new points into the fitted embedding without moving the
    /// training points.
    pub fn transform(&self, points: ArrayView2<f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.data.ncols() {
            return Err(Error::invalid(format!(
                "umap fitted on {} dims, got {}",
                self.data.ncols(),
                points.ncols()
            )));
        }
        let m = points.nrows();
        let dim = self.embedding.ncols();
        if m == 0 {
            return Ok(Array2::zeros((0, dim)));
        }
        let k = self.params.n_neighbors;
        let (idx, dists) = knn(points, self.data.view(), k, false);
        let (sigmas, rhos) = smooth_knn_dist(&dists, k as f64, 0.0);
        let mut graph: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        for i in 0..m {
            let row: Vec<(usize, f64)> = idx[i]
                .iter()
                .zip(&dists[i])
                .map(|(&j, &d)| {
                    let v = if d - rhos[i] <= 0.0 || sigmas[i] == 0.0 {
                        1.0
                    } else {
                        (-(d - rhos[i]) / sigmas[i]).exp()
                    };
                    (j, v)
                })
                .collect();
            graph.push(row);
        }
        let mut init = Array2::zeros((m, dim));
        for (i, row) in graph.iter().enumerate() {
            let total: f64 = row.iter().map(|e| e.1).sum();
            for &(j, w) in row {
                let share = if total > 0.0 { w / total } else { 1.0 / row.len() as f64 };
                let src = self.embedding.row(j);
                for d in 0..dim {
                    init[[i, d]] += share * src[d];
                }
            }
        }
        let n_epochs = match self.params.n_epochs {
            Some(e) => e / 3,
            None if m <= 10_000 => 100,
            None => 30,
        };
        let max_w = graph.iter().flatten().map(|e| e.1).fold(0.0, f64::max);
        let cut = max_w / n_epochs.max(1) as f64;
        let edges: Vec<(usize, usize, f64)> = graph
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, w)| (i, j, w)))
            .filter(|e| e.2 >= cut)
            .collect();
        let mut flat = init.into_raw_vec_and_offset().0;
        let tail: Vec<f64> = self.embedding.iter().copied().collect();
        let mut r = rng::seeded(rng::derive_seed(self.seed, "transform"));
        Layout {
            head: &mut flat,
            tail: Some(&tail),
            dim,
            n_tail: self.embedding.nrows(),
            a: self.a,
            b: self.b,
            gamma: self.params.repulsion_strength,
            lr: self.params.learning_rate / 4.0,
            negative_rate: self.params.negative_sample_rate as f64,
        }
        .optimize(&edges, n_epochs, &mut r);
        Ok(Array2::from_shape_vec((m, dim), flat).expect("shape"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ab_for_default_min_dist() {
        let (a, b) = find_ab_params(1.0, 0.1);
        assert!((a - 1.577).abs() < 0.01, "a = {a}");
        assert!((b - 0.895).abs() < 0.01, "b = {b}");
    }

    #[test]
    fn bandwidth_hits_log2_k() {
        let dists = vec![vec![0.0, 1.0, 1.5, 2.0, 3.0, 3.5]];
        let (sigma, rho) = smooth_knn_dist(&dists, 6.0, 1.0);
        assert_eq!(rho[0], 1.0);
        let psum: f64 = dists[0][1..]
            .iter()
            .map(|d| {
                let d = d - rho[0];
                if d > 0.0 {
                    (-d / sigma[0]).exp()
                } else {
                    1.0
                }
            })
            .sum();
        assert!((psum - 6f64.log2()).abs() < 1e-4, "{psum}");
    }

    #[test]
    fn knn_matches_brute_force_order() {
        let data = ndarray::array![[0.0], [1.0], [3.0], [3.5], [10.0]];
        let (idx, d) = knn(data.view(), data.view(), 3, true);
        assert_eq!(idx[2], vec![2, 3, 1]);
        assert_eq!(d[2], vec![0.0, 0.5, 2.0]);
        assert_eq!(idx[4], vec![4, 3, 2]);
    }

    #[test]
    fn too_few_points_suggest_pca() {
        let data = Array2::<f64>::zeros((10, 3));
        let err = Umap::fit(data.view(), 2, &UmapParams::default(), 0).unwrap_err();
        assert!(err.to_string().contains("pca"));
    }
}
