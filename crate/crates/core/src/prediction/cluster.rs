//! k-means, full-covariance Gaussian mixture and flat-kernel mean shift.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

const KMEANS_N_INIT: usize = 10;
const KMEANS_MAX_ITER: usize = 300;
const KMEANS_TOL: f64 = 1e-4;

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: ArrayView1<f64>, centers: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(x, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    pub inertia: f64,
}

/// Greedy k-means++ seeding.
fn kmeans_pp(x: ArrayView2<f64>, k: usize, r: &mut Rng) -> Array2<f64> {
    let n = x.nrows();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centers = Array2::zeros((k, x.ncols()));
    let first = r.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    let mut pot: f64 = closest.iter().sum();
    for c in 1..k {
        let mut cum = Vec::with_capacity(n);
        let mut acc = 0.0;
        for d in &closest {
            acc += d;
            cum.push(acc);
        }
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for _ in 0..trials {
            let target = r.random::<f64>() * pot;
            let cand = cum.partition_point(|v| *v < target).min(n - 1);
            let dists: Vec<f64> = (0..n)
                .map(|i| closest[i].min(sq_dist(x.row(i), x.row(cand))))
                .collect();
            let p: f64 = dists.iter().sum();
            if best.as_ref().is_none_or(|b| p < b.1) {
                best = Some((cand, p, dists));
            }
        }
        let (cand, p, dists) = best.expect("at least one trial");
        centers.row_mut(c).assign(&x.row(cand));
        closest = dists;
        pot = p;
    }
    centers
}

fn lloyd(x: ArrayView2<f64>, mut centers: Array2<f64>, tol: f64) -> KMeansFit {
    let (n, k) = (x.nrows(), centers.nrows());
    let mut labels = vec![0; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, d) = nearest(x.row(i), &centers);
            labels[i] = c;
            dists[i] = d;
        }
        let mut sums = Array2::<f64>::zeros(centers.dim());
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let mut row = sums.row_mut(labels[i]);
            row += &x.row(i);
            counts[labels[i]] += 1;
        }
        // empty clusters take the points farthest from their centers
        let mut far: Vec<usize> = (0..n).collect();
        far.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
        let mut far = far.into_iter();
        let mut new_centers = Array2::zeros(centers.dim());
        for c in 0..k {
            if counts[c] == 0 {
                let i = far.next().expect("more points than clusters");
                new_centers.row_mut(c).assign(&x.row(i));
            } else {
                new_centers
                    .row_mut(c)
                    .assign(&(&sums.row(c) / counts[c] as f64));
            }
        }
        let shift: f64 = (&new_centers - &centers).mapv(|v| v * v).sum();
        centers = new_centers;
        if shift <= tol {
            break;
        }
    }
    let mut inertia = 0.0;
    for i in 0..n {
        let (c, d) = nearest(x.row(i), &centers);
        labels[i] = c;
        inertia += d;
    }
    KMeansFit {
        labels,
        centers,
        inertia,
    }
}

/// k-means with k-means++ seeding; the best of `n_init` runs by inertia.
pub fn kmeans_n_init(x: ArrayView2<f64>, k: usize, seed: u64, n_init: usize) -> Result<KMeansFit> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot form {k} clusters from {n} rows")));
    }
    let var_mean = x.var_axis(Axis(0), 0.0).mean().unwrap_or(0.0);
    let tol = KMEANS_TOL * var_mean;
    let mut r = rng::seeded(seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..n_init.max(1) {
        let fit = lloyd(x, kmeans_pp(x, k, &mut r), tol);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.unwrap())
}

pub fn kmeans(x: ArrayView2<f64>, k: usize, seed: u64) -> Result<KMeansFit> {
    kmeans_n_init(x, k, seed, KMEANS_N_INIT)
}

const GMM_MAX_ITER: usize = 100;
const GMM_TOL: f64 = 1e-3;
const GMM_REG: f64 = 1e-6;

/// Weighted log densities `n x k` of every row under each component.
fn gmm_log_prob(
    x: &DMatrix<f64>,
    weights: &[f64],
    means: &[DVector<f64>],
    covs: &[DMatrix<f64>],
) -> Result<DMatrix<f64>> {
    let (d, n) = x.shape();
    let mut out = DMatrix::zeros(n, weights.len());
    let log2pi = (2.0 * std::f64::consts::PI).ln();
    for c in 0..weights.len() {
        let chol = covs[c].clone().cholesky().ok_or_else(|| {
            Error::Training(format!(
                "gaussian mixture covariance {c} is not positive definite; reduce dimensionality or use kmeans"
            ))
        })?;
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let mut centered = x.clone();
        for mut col in centered.column_iter_mut() {
            col -= &means[c];
        }
        let y = l
            .solve_lower_triangular(&centered)
            .ok_or_else(|| Error::Training("singular covariance factor".into()))?;
        for i in 0..n {
            let maha = y.column(i).norm_squared();
            out[(i, c)] = weights[c].ln() - 0.5 * (d as f64 * log2pi + log_det + maha);
        }
    }
    Ok(out)
}

/// Gaussian mixture with full covariances, fitted by EM from a k-means
/// initialization. Returns the most probable component of each row.
pub fn gaussian_mixture(x: ArrayView2<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let (n, d) = x.dim();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot form {k} components from {n} rows")));
    }
    let init = kmeans_n_init(x, k, seed, 1)?;
    let xm = DMatrix::from_fn(d, n, |j, i| x[[i, j]]);
    let mut resp = DMatrix::<f64>::zeros(n, k);
    for (i, &c) in init.labels.iter().enumerate() {
        resp[(i, c)] = 1.0;
    }
    let mut prev = f64::NEG_INFINITY;
    let mut params;
    let mut iter = 0;
    loop {
        // M step
        let mut weights = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        let mut covs = Vec::with_capacity(k);
        for c in 0..k {
            let rc = resp.column(c);
            let nk = rc.sum() + 10.0 * f64::EPSILON;
            let mean = &xm * rc / nk;
            let mut centered = xm.clone();
            for (i, mut col) in centered.column_iter_mut().enumerate() {
                col -= &mean;
                col *= rc[i].sqrt();
            }
            let mut cov = &centered * centered.transpose() / nk;
            for j in 0..d {
                cov[(j, j)] += GMM_REG;
            }
            weights.push(nk / n as f64);
            means.push(mean);
            covs.push(cov);
        }
        params = (weights, means, covs);
        // E step
        let lp = gmm_log_prob(&xm, &params.0, &params.1, &params.2)?;
        let mut lower = 0.0;
        for i in 0..n {
            let row = lp.row(i);
            let m = row.max();
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lower += lse;
            for c in 0..k {
                resp[(i, c)] = (lp[(i, c)] - lse).exp();
            }
        }
        lower /= n as f64;
        iter += 1;
        if (lower - prev).abs() < GMM_TOL || iter >= GMM_MAX_ITER {
            break;
        }
        prev = lower;
    }
    let lp = gmm_log_prob(&xm, &params.0, &params.1, &params.2)?;
    Ok((0..n)
        .map(|i| {
            let mut best = 0;
            for c in 1..k {
                if lp[(i, c)] > lp[(i, best)] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

const BANDWIDTH_SAMPLE: usize = 500;
const MEAN_SHIFT_SEEDS: usize = 256;
const MEAN_SHIFT_MAX_ITER: usize = 300;

/// Mean distance from each (subsampled) point to its `quantile * n`-th
/// nearest neighbour, counting the point itself.
pub fn estimate_bandwidth(x: ArrayView2<f64>, quantile: f64, seed: u64) -> f64 {
    let n = x.nrows();
    let mut r = rng::seeded(seed);
    let rows: Vec<usize> = if n > BANDWIDTH_SAMPLE {
        let mut v = sample(&mut r, n, BANDWIDTH_SAMPLE).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).collect()
    };
    let m = rows.len();
    let k = ((m as f64 * quantile) as usize).clamp(1, m);
    let mut total = 0.0;
    for &i in &rows {
        let mut d: Vec<f64> = rows.iter().map(|&j| sq_dist(x.row(i), x.row(j))).collect();
        d.select_nth_unstable_by(k - 1, f64::total_cmp);
        total += d[k - 1].sqrt();
    }
    total / m as f64
}

/// Flat-kernel mean shift from a seeded subsample of starting points.
/// Returns the cluster of every row; the number of clusters is data-driven.
pub fn mean_shift(x: ArrayView2<f64>, bandwidth: Option<f64>, seed: u64) -> Result<Vec<usize>> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::invalid("mean shift needs at least one row"));
    }
    let bw = bandwidth.unwrap_or_else(|| estimate_bandwidth(x, 0.3, rng::derive_seed(seed, "bandwidth")));
    if !(bw > 0.0) {
        // every point coincides
        return Ok(vec![0; n]);
    }
    let bw2 = bw * bw;
    let mut r = rng::seeded(rng::derive_seed(seed, "seeds"));
    let seeds: Vec<usize> = if n > MEAN_SHIFT_SEEDS {
        let mut v = sample(&mut r, n, MEAN_SHIFT_SEEDS).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).collect()
    };
    let stop = 1e-3 * bw;
    let mut modes: Vec<(Array1<f64>, usize, usize)> = Vec::new();
    for (order, &s) in seeds.iter().enumerate() {
        let mut center = x.row(s).to_owned();
        let mut within = 0;
        for _ in 0..MEAN_SHIFT_MAX_ITER {
            let mut sum = Array1::zeros(x.ncols());
            let mut count = 0;
            for row in x.rows() {
                if sq_dist(row, center.view()) <= bw2 {
                    sum += &row;
                    count += 1;
                }
            }
            if count == 0 {
                break;
            }
            let next = sum / count as f64;
            let moved = sq_dist(next.view(), center.view()).sqrt();
            center = next;
            within = count;
            if moved <= stop {
                break;
            }
        }
        if within > 0 {
            modes.push((center, within, order));
        }
    }
    modes.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let mut kept: Vec<Array1<f64>> = Vec::new();
    for (c, _, _) in modes {
        if kept.iter().all(|k| sq_dist(k.view(), c.view()) > bw2) {
            kept.push(c);
        }
    }
    let centers = Array2::from_shape_fn((kept.len(), x.ncols()), |(i, j)| kept[i][j]);
    Ok((0..n).map(|i| nearest(x.row(i), &centers).0).collect())
}
