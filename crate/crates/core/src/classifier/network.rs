//! Character-level CNN + transformer encoder with a softmax head.
//!
//! Layout per tweet:
//!
//! ```text
//! chars -> embedding -> conv1d (ReLU) -> max-pool -> linear to model dim
//!       -> + sinusoidal positions -> N x post-LN encoder layers
//!       -> mean over positions -> dense (ReLU) -> linear -> softmax
//! ```
//!
//! Padding is masked rather than computed: a conv window counts only if it
//! starts on a real character (at least one window is always kept), pool
//! windows cover only those positions, and attention/averaging run over the
//! pooled positions. The forward pass therefore runs on the unpadded prefix
//! and gives exactly the masked full-length result.
//!
//! Gradients are derived by hand; `loss_and_grad` is checked against central
//! finite differences in the test suite.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{s, Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::{Float, FromPrimitive};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// Floating-point element type of the network.
pub trait Real:
    Float
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
fn c<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("representable constant")
}

/// Shape hyper-parameters of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab: usize,
    pub classes: usize,
    pub max_len: usize,
    pub embedding: usize,
    pub filters: usize,
    pub width: usize,
    pub pool: usize,
    pub model: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn: usize,
    pub dense: usize,
}

impl Dims {
    pub fn conv_positions(&self) -> usize {
        self.max_len - self.width + 1
    }

    pub fn head_dim(&self) -> usize {
        self.model / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub wq: Array2<T>,
    pub bq: Array1<T>,
    pub wk: Array2<T>,
    pub bk: Array1<T>,
    pub wv: Array2<T>,
    pub bv: Array1<T>,
    pub wo: Array2<T>,
    pub bo: Array1<T>,
    pub ln1_g: Array1<T>,
    pub ln1_b: Array1<T>,
    pub ff1_w: Array2<T>,
    pub ff1_b: Array1<T>,
    pub ff2_w: Array2<T>,
    pub ff2_b: Array1<T>,
    pub ln2_g: Array1<T>,
    pub ln2_b: Array1<T>,
}

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub embedding: Array2<T>,
    pub conv_w: Array2<T>,
    pub conv_b: Array1<T>,
    pub proj_w: Array2<T>,
    pub proj_b: Array1<T>,
    pub layers: Vec<EncoderParams<T>>,
    pub dense_w: Array2<T>,
    pub dense_b: Array1<T>,
    pub out_w: Array2<T>,
    pub out_b: Array1<T>,
}

const ENCODER_FIELDS: [&str; 16] = [
    "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_g", "ln1_b", "ff1_w", "ff1_b", "ff2_w",
    "ff2_b", "ln2_g", "ln2_b",
];

impl<T: Real> EncoderParams<T> {
    fn slices(&self) -> Vec<&[T]> {
        vec![
            self.wq.as_slice().unwrap(),
            self.bq.as_slice().unwrap(),
            self.wk.as_slice().unwrap(),
            self.bk.as_slice().unwrap(),
            self.wv.as_slice().unwrap(),
            self.bv.as_slice().unwrap(),
            self.wo.as_slice().unwrap(),
            self.bo.as_slice().unwrap(),
            self.ln1_g.as_slice().unwrap(),
            self.ln1_b.as_slice().unwrap(),
            self.ff1_w.as_slice().unwrap(),
            self.ff1_b.as_slice().unwrap(),
            self.ff2_w.as_slice().unwrap(),
            self.ff2_b.as_slice().unwrap(),
            self.ln2_g.as_slice().unwrap(),
            self.ln2_b.as_slice().unwrap(),
        ]
    }

    fn slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.wq.as_slice_mut().unwrap(),
            self.bq.as_slice_mut().unwrap(),
            self.wk.as_slice_mut().unwrap(),
            self.bk.as_slice_mut().unwrap(),
            self.wv.as_slice_mut().unwrap(),
            self.bv.as_slice_mut().unwrap(),
            self.wo.as_slice_mut().unwrap(),
            self.bo.as_slice_mut().unwrap(),
            self.ln1_g.as_slice_mut().unwrap(),
            self.ln1_b.as_slice_mut().unwrap(),
            self.ff1_w.as_slice_mut().unwrap(),
            self.ff1_b.as_slice_mut().unwrap(),
            self.ff2_w.as_slice_mut().unwrap(),
            self.ff2_b.as_slice_mut().unwrap(),
            self.ln2_g.as_slice_mut().unwrap(),
            self.ln2_b.as_slice_mut().unwrap(),
        ]
    }
}

fn xavier<T: Real>(r: &mut Rng, rows: usize, cols: usize) -> Array2<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| c(r.random_range(-limit..limit)))
}

impl<T: Real> Params<T> {
    pub fn init(d: &Dims, r: &mut Rng) -> Self {
        let layers = (0..d.layers)
            .map(|_| EncoderParams {
                wq: xavier(r, d.model, d.model),
                bq: Array1::zeros(d.model),
                wk: xavier(r, d.model, d.model),
                bk: Array1::zeros(d.model),
                wv: xavier(r, d.model, d.model),
                bv: Array1::zeros(d.model),
                wo: xavier(r, d.model, d.model),
                bo: Array1::zeros(d.model),
                ln1_g: Array1::ones(d.model),
                ln1_b: Array1::zeros(d.model),
                ff1_w: xavier(r, d.model, d.ffn),
                ff1_b: Array1::zeros(d.ffn),
                ff2_w: xavier(r, d.ffn, d.model),
                ff2_b: Array1::zeros(d.model),
                ln2_g: Array1::ones(d.model),
                ln2_b: Array1::zeros(d.model),
            })
            .collect();
        Params {
            embedding: Array2::from_shape_fn((d.vocab, d.embedding), |_| {
                c(r.random_range(-0.1..0.1))
            }),
            conv_w: xavier(r, d.width * d.embedding, d.filters),
            conv_b: Array1::zeros(d.filters),
            proj_w: xavier(r, d.filters, d.model),
            proj_b: Array1::zeros(d.model),
            layers,
            dense_w: xavier(r, d.model, d.dense),
            dense_b: Array1::zeros(d.dense),
            out_w: xavier(r, d.dense, d.classes),
            out_b: Array1::zeros(d.classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.slices_mut() {
            s.fill(T::zero());
        }
        z
    }

    /// Tensor names in the same order as [`Params::slices`].
    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["embedding", "conv_w", "conv_b", "proj_w", "proj_b"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for i in 0..self.layers.len() {
            for f in ENCODER_FIELDS {
                names.push(format!("layer{i}.{f}"));
            }
        }
        names.extend(["dense_w", "dense_b", "out_w", "out_b"].iter().map(|s| s.to_string()));
        names
    }

    pub fn slices(&self) -> Vec<&[T]> {
        let mut v = vec![
            self.embedding.as_slice().unwrap(),
            self.conv_w.as_slice().unwrap(),
            self.conv_b.as_slice().unwrap(),
            self.proj_w.as_slice().unwrap(),
            self.proj_b.as_slice().unwrap(),
        ];
        for l in &self.layers {
            v.extend(l.slices());
        }
        v.extend([
            self.dense_w.as_slice().unwrap(),
            self.dense_b.as_slice().unwrap(),
            self.out_w.as_slice().unwrap(),
            self.out_b.as_slice().unwrap(),
        ]);
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = vec![
            self.embedding.as_slice_mut().unwrap(),
            self.conv_w.as_slice_mut().unwrap(),
            self.conv_b.as_slice_mut().unwrap(),
            self.proj_w.as_slice_mut().unwrap(),
            self.proj_b.as_slice_mut().unwrap(),
        ];
        for l in &mut self.layers {
            v.extend(l.slices_mut());
        }
        v.extend([
            self.dense_w.as_slice_mut().unwrap(),
            self.dense_b.as_slice_mut().unwrap(),
            self.out_w.as_slice_mut().unwrap(),
            self.out_b.as_slice_mut().unwrap(),
        ]);
        v
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// Adds `scale * other` elementwise.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * *y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    pub fn map_to<U: Real>(&self) -> Params<U> {
        let mut out = Params::<U> {
            embedding: self.embedding.mapv(cast),
            conv_w: self.conv_w.mapv(cast),
            conv_b: self.conv_b.mapv(cast),
            proj_w: self.proj_w.mapv(cast),
            proj_b: self.proj_b.mapv(cast),
            layers: Vec::new(),
            dense_w: self.dense_w.mapv(cast),
            dense_b: self.dense_b.mapv(cast),
            out_w: self.out_w.mapv(cast),
            out_b: self.out_b.mapv(cast),
        };
        for l in &self.layers {
            out.layers.push(EncoderParams {
                wq: l.wq.mapv(cast),
                bq: l.bq.mapv(cast),
                wk: l.wk.mapv(cast),
                bk: l.bk.mapv(cast),
                wv: l.wv.mapv(cast),
                bv: l.bv.mapv(cast),
                wo: l.wo.mapv(cast),
                bo: l.bo.mapv(cast),
                ln1_g: l.ln1_g.mapv(cast),
                ln1_b: l.ln1_b.mapv(cast),
                ff1_w: l.ff1_w.mapv(cast),
                ff1_b: l.ff1_b.mapv(cast),
                ff2_w: l.ff2_w.mapv(cast),
                ff2_b: l.ff2_b.mapv(cast),
                ln2_g: l.ln2_g.mapv(cast),
                ln2_b: l.ln2_b.mapv(cast),
            });
        }
        out
    }
}

fn cast<A: Real, B: Real>(x: A) -> B {
    B::from(x).expect("float cast")
}

const LN_EPS: f64 = 1e-5;

struct LayerCache<T> {
    input: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    concat: Array2<T>,
    drop_attn: Option<Array2<T>>,
    xhat1: Array2<T>,
    inv_std1: Array1<T>,
    h1: Array2<T>,
    ff_pre: Array2<T>,
    ff_act: Array2<T>,
    drop_ff: Option<Array2<T>>,
    xhat2: Array2<T>,
    inv_std2: Array1<T>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub struct Cache<T> {
    tokens: Vec<usize>,
    unfolded: Array2<T>,
    conv_pre: Array2<T>,
    pool_arg: Array2<usize>,
    pooled: Array2<T>,
    layers: Vec<LayerCache<T>>,
    mean: Array1<T>,
    dense_pre: Array1<T>,
    dense_act: Array1<T>,
    drop_dense: Option<Array1<T>>,
    probs: Array1<T>,
    n_conv: usize,
}

impl<T> Cache<T> {
    pub fn probs(&self) -> &Array1<T> {
        &self.probs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub dims: Dims,
    pub params: Params<T>,
    positions: Array2<T>,
}

fn layer_norm<T: Real>(
    x: &Array2<T>,
    gamma: &Array1<T>,
    beta: &Array1<T>,
) -> (Array2<T>, Array2<T>, Array1<T>) {
    let n = T::from_usize(x.ncols()).unwrap();
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| *v * *v).sum::<T>() / n;
        let s = T::one() / (var + c(LN_EPS)).sqrt();
        row.mapv_inplace(|v| v * s);
        *is = s;
    }
    let y = &xhat * gamma + beta;
    (y, xhat, inv_std)
}

/// Backward through layer norm. Accumulates gamma/beta grads, returns dx.
fn layer_norm_back<T: Real>(
    dy: &Array2<T>,
    xhat: &Array2<T>,
    inv_std: &Array1<T>,
    gamma: &Array1<T>,
    dgamma: &mut Array1<T>,
    dbeta: &mut Array1<T>,
) -> Array2<T> {
    *dgamma += &(dy * xhat).sum_axis(Axis(0));
    *dbeta += &dy.sum_axis(Axis(0));
    let n = T::from_usize(dy.ncols()).unwrap();
    let dxhat = dy * gamma;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let dh = dxhat.row(i);
        let xh = xhat.row(i);
        let sum_dh = dh.sum();
        let sum_dh_xh = dh.iter().zip(xh.iter()).map(|(a, b)| *a * *b).sum::<T>();
        let s = inv_std[i] / n;
        let mut out = dx.row_mut(i);
        for j in 0..dh.len() {
            out[j] = s * (n * dh[j] - sum_dh - xh[j] * sum_dh_xh);
        }
    }
    dx
}

fn softmax_rows<T: Real>(x: &mut Array2<T>) {
    for mut row in x.rows_mut() {
        let max = row.fold(T::neg_infinity(), |m, v| m.max(*v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn relu<T: Real>(x: &Array2<T>) -> Array2<T> {
    x.mapv(|v| v.max(T::zero()))
}

fn dropout_mask<T: Real, D: ndarray::Dimension>(
    shape: D,
    p: f64,
    r: &mut Rng,
) -> ndarray::Array<T, D> {
    let keep = c::<T>(1.0 / (1.0 - p));
    ndarray::Array::from_shape_simple_fn(shape, || {
        if r.random::<f64>() < p {
            T::zero()
        } else {
            keep
        }
    })
}

fn sinusoidal<T: Real>(len: usize, dim: usize) -> Array2<T> {
    Array2::from_shape_fn((len, dim), |(pos, i)| {
        let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
        let angle = pos as f64 * rate;
        c(if i % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// Training-time randomness: dropout rate and its generator.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut Rng,
}

impl<T: Real> Network<T> {
    pub fn new(dims: Dims, params: Params<T>) -> Self {
        assert!(dims.max_len >= dims.width, "max_len shorter than conv width");
        assert!(dims.model % dims.heads == 0, "model dim not divisible by heads");
        let n_pool = dims.conv_positions().div_ceil(dims.pool);
        Network {
            dims,
            params,
            positions: sinusoidal(n_pool, dims.model),
        }
    }

    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut r = crate::rng::seeded(seed);
        let params = Params::init(&dims, &mut r);
        Self::new(dims, params)
    }

    /// Forward pass over `tokens` (padded encoder output) whose first `len`
    /// entries are real characters. Dropout is applied when `dropout` is set.
    pub fn forward(&self, tokens: &[usize], len: usize, mut dropout: Option<Dropout>) -> Cache<T> {
        let d = &self.dims;
        let p = &self.params;
        let n_conv = len.clamp(1, d.conv_positions());
        let window: Vec<usize> = tokens[..n_conv + d.width - 1].to_vec();

        let e = d.embedding;
        let mut unfolded = Array2::<T>::zeros((n_conv, d.width * e));
        for j in 0..n_conv {
            for o in 0..d.width {
                let src = p.embedding.row(window[j + o]);
                unfolded
                    .slice_mut(s![j, o * e..(o + 1) * e])
                    .assign(&src);
            }
        }
        let conv_pre = unfolded.dot(&p.conv_w) + &p.conv_b;
        let conv = relu(&conv_pre);

        let n_pool = n_conv.div_ceil(d.pool);
        let mut pooled = Array2::<T>::zeros((n_pool, d.filters));
        let mut pool_arg = Array2::<usize>::zeros((n_pool, d.filters));
        for q in 0..n_pool {
            let lo = q * d.pool;
            let hi = ((q + 1) * d.pool).min(n_conv);
            for f in 0..d.filters {
                let mut best = lo;
                for j in lo + 1..hi {
                    if conv[[j, f]] > conv[[best, f]] {
                        best = j;
                    }
                }
                pooled[[q, f]] = conv[[best, f]];
                pool_arg[[q, f]] = best;
            }
        }

        let mut h = pooled.dot(&p.proj_w) + &p.proj_b + &self.positions.slice(s![..n_pool, ..]);

        let dh = d.head_dim();
        let scale = c::<T>(1.0 / (dh as f64).sqrt());
        let mut layers = Vec::with_capacity(d.layers);
        for lp in &p.layers {
            let q = h.dot(&lp.wq) + &lp.bq;
            let k = h.dot(&lp.wk) + &lp.bk;
            let v = h.dot(&lp.wv) + &lp.bv;
            let mut concat = Array2::<T>::zeros((n_pool, d.model));
            let mut probs = Vec::with_capacity(d.heads);
            for head in 0..d.heads {
                let cols = s![.., head * dh..(head + 1) * dh];
                let mut att = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                softmax_rows(&mut att);
                concat.slice_mut(cols).assign(&att.dot(&v.slice(cols)));
                probs.push(att);
            }
            let mut attn = concat.dot(&lp.wo) + &lp.bo;
            let drop_attn = dropout.as_mut().filter(|dr| dr.rate > 0.0).map(|dr| {
                let m = dropout_mask(attn.raw_dim(), dr.rate, dr.rng);
                attn *= &m;
                m
            });
            let (h1, xhat1, inv_std1) = layer_norm(&(&h + &attn), &lp.ln1_g, &lp.ln1_b);
            let ff_pre = h1.dot(&lp.ff1_w) + &lp.ff1_b;
            let ff_act = relu(&ff_pre);
            let mut ff = ff_act.dot(&lp.ff2_w) + &lp.ff2_b;
            let drop_ff = dropout.as_mut().filter(|dr| dr.rate > 0.0).map(|dr| {
                let m = dropout_mask(ff.raw_dim(), dr.rate, dr.rng);
                ff *= &m;
                m
            });
            let (h2, xhat2, inv_std2) = layer_norm(&(&h1 + &ff), &lp.ln2_g, &lp.ln2_b);
            layers.push(LayerCache {
                input: h,
                q,
                k,
                v,
                probs,
                concat,
                drop_attn,
                xhat1,
                inv_std1,
                h1,
                ff_pre,
                ff_act,
                drop_ff,
                xhat2,
                inv_std2,
            });
            h = h2;
        }

        let mean = h.mean_axis(Axis(0)).expect("at least one position");
        let dense_pre = mean.dot(&p.dense_w) + &p.dense_b;
        let mut dense_act = dense_pre.mapv(|v| v.max(T::zero()));
        let drop_dense = dropout.as_mut().filter(|dr| dr.rate > 0.0).map(|dr| {
            let m = dropout_mask(dense_act.raw_dim(), dr.rate, dr.rng);
            dense_act *= &m;
            m
        });
        let logits = dense_act.dot(&p.out_w) + &p.out_b;
        let max = logits.fold(T::neg_infinity(), |m, v| m.max(*v));
        let mut probs = logits.mapv(|v| (v - max).exp());
        let sum = probs.sum();
        probs.mapv_inplace(|v| v / sum);

        Cache {
            tokens: window,
            unfolded,
            conv_pre,
            pool_arg,
            pooled,
            layers,
            mean,
            dense_pre,
            dense_act,
            drop_dense,
            probs,
            n_conv,
        }
    }

    /// Class probabilities without dropout.
    pub fn predict(&self, tokens: &[usize], len: usize) -> Array1<T> {
        self.forward(tokens, len, None).probs
    }

    /// Cross-entropy loss of `label` for a cached forward pass; accumulates
    /// `scale * dloss/dparams` into `grads`.
    pub fn backward(&self, cache: &Cache<T>, label: usize, scale: T, grads: &mut Params<T>) -> T {
        let d = &self.dims;
        let p = &self.params;
        let loss = -cache.probs[label].max(c(1e-30)).ln();

        let mut dlogits = cache.probs.clone();
        dlogits[label] -= T::one();
        dlogits *= scale;

        grads.out_b += &dlogits;
        grads.out_w += &outer(&cache.dense_act, &dlogits);
        let mut d_dense = p.out_w.dot(&dlogits);
        if let Some(m) = &cache.drop_dense {
            d_dense *= m;
        }
        Zip::from(&mut d_dense)
            .and(&cache.dense_pre)
            .for_each(|g, z| {
                if *z <= T::zero() {
                    *g = T::zero();
                }
            });
        grads.dense_b += &d_dense;
        grads.dense_w += &outer(&cache.mean, &d_dense);
        let d_mean = p.dense_w.dot(&d_dense);

        let n_pool = cache.pooled.nrows();
        let inv_n = T::one() / T::from_usize(n_pool).unwrap();
        let mut dh = Array2::<T>::zeros((n_pool, d.model));
        for mut row in dh.rows_mut() {
            row.assign(&(&d_mean * inv_n));
        }

        let head_dim = d.head_dim();
        let att_scale = c::<T>(1.0 / (head_dim as f64).sqrt());
        for (li, lc) in cache.layers.iter().enumerate().rev() {
            let lp = &p.layers[li];
            let lg = &mut grads.layers[li];

            // h2 = LN(h1 + ff)
            let d_res2 = layer_norm_back(
                &dh,
                &lc.xhat2,
                &lc.inv_std2,
                &lp.ln2_g,
                &mut lg.ln2_g,
                &mut lg.ln2_b,
            );
            let mut d_ff = d_res2.clone();
            if let Some(m) = &lc.drop_ff {
                d_ff *= m;
            }
            lg.ff2_b += &d_ff.sum_axis(Axis(0));
            lg.ff2_w += &lc.ff_act.t().dot(&d_ff);
            let mut d_act = d_ff.dot(&lp.ff2_w.t());
            Zip::from(&mut d_act).and(&lc.ff_pre).for_each(|g, z| {
                if *z <= T::zero() {
                    *g = T::zero();
                }
            });
            lg.ff1_b += &d_act.sum_axis(Axis(0));
            lg.ff1_w += &lc.h1.t().dot(&d_act);
            let d_h1 = d_res2 + d_act.dot(&lp.ff1_w.t());

            // h1 = LN(input + attn)
            let d_res1 = layer_norm_back(
                &d_h1,
                &lc.xhat1,
                &lc.inv_std1,
                &lp.ln1_g,
                &mut lg.ln1_g,
                &mut lg.ln1_b,
            );
            let mut d_attn = d_res1.clone();
            if let Some(m) = &lc.drop_attn {
                d_attn *= m;
            }
            lg.bo += &d_attn.sum_axis(Axis(0));
            lg.wo += &lc.concat.t().dot(&d_attn);
            let d_concat = d_attn.dot(&lp.wo.t());

            let mut dq = Array2::<T>::zeros(lc.q.raw_dim());
            let mut dk = Array2::<T>::zeros(lc.k.raw_dim());
            let mut dv = Array2::<T>::zeros(lc.v.raw_dim());
            for head in 0..d.heads {
                let cols = s![.., head * head_dim..(head + 1) * head_dim];
                let a = &lc.probs[head];
                let d_out = d_concat.slice(cols);
                dv.slice_mut(cols).assign(&a.t().dot(&d_out));
                let da = d_out.dot(&lc.v.slice(cols).t());
                let mut ds = &da * a;
                for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
                    let total = row.sum();
                    Zip::from(&mut row).and(&arow).for_each(|g, p| *g -= *p * total);
                }
                ds *= att_scale;
                dq.slice_mut(cols).assign(&ds.dot(&lc.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&lc.q.slice(cols)));
            }
            lg.bq += &dq.sum_axis(Axis(0));
            lg.bk += &dk.sum_axis(Axis(0));
            lg.bv += &dv.sum_axis(Axis(0));
            let x = &lc.input;
            lg.wq += &x.t().dot(&dq);
            lg.wk += &x.t().dot(&dk);
            lg.wv += &x.t().dot(&dv);
            dh = d_res1 + dq.dot(&lp.wq.t()) + dk.dot(&lp.wk.t()) + dv.dot(&lp.wv.t());
        }

        // h0 = pooled . proj_w + proj_b + positions
        grads.proj_b += &dh.sum_axis(Axis(0));
        grads.proj_w += &cache.pooled.t().dot(&dh);
        let d_pooled = dh.dot(&p.proj_w.t());

        let mut d_conv = Array2::<T>::zeros((cache.n_conv, d.filters));
        for ((q, f), j) in cache.pool_arg.indexed_iter() {
            d_conv[[*j, f]] += d_pooled[[q, f]];
        }
        Zip::from(&mut d_conv).and(&cache.conv_pre).for_each(|g, z| {
            if *z <= T::zero() {
                *g = T::zero();
            }
        });
        grads.conv_b += &d_conv.sum_axis(Axis(0));
        grads.conv_w += &cache.unfolded.t().dot(&d_conv);
        let d_unfolded = d_conv.dot(&p.conv_w.t());
        let e = d.embedding;
        for j in 0..cache.n_conv {
            for o in 0..d.width {
                let tok = cache.tokens[j + o];
                let src = d_unfolded.slice(s![j, o * e..(o + 1) * e]);
                let mut dst = grads.embedding.row_mut(tok);
                dst += &src;
            }
        }
        loss
    }

    /// Loss and gradient of one example without dropout.
    pub fn loss_and_grad(&self, tokens: &[usize], len: usize, label: usize) -> (T, Params<T>) {
        let cache = self.forward(tokens, len, None);
        let mut grads = self.params.zeros_like();
        let loss = self.backward(&cache, label, T::one(), &mut grads);
        (loss, grads)
    }

    pub fn loss(&self, tokens: &[usize], len: usize, label: usize) -> T {
        let probs = self.predict(tokens, len);
        -probs[label].max(c(1e-30)).ln()
    }
}

fn outer<T: Real>(a: &Array1<T>, b: &Array1<T>) -> Array2<T> {
    let av: ArrayView2<T> = a.view().insert_axis(Axis(1));
    let bv: ArrayView2<T> = b.view().insert_axis(Axis(0));
    av.dot(&bv)
}
