use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::attention::{anomaly_attention_backward, anomaly_attention_cached, AttentionCache};
use crate::error::{Error, Result};

/// Shape hyperparameters of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TsadmArch {
    pub dims: usize,
    pub hidden: usize,
    pub k_len: usize,
    pub module_num: usize,
    pub win_len: usize,
}

impl TsadmArch {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dims", self.dims),
            ("hidden", self.hidden),
            ("kLen", self.k_len),
            ("moduleNum", self.module_num),
            ("winLen", self.win_len),
        ] {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    fn conv_in(&self) -> usize {
        self.k_len * self.dims
    }

    /// Offsets of every tensor in the flat parameter vector.
    fn layout(&self) -> Layout {
        let h = self.hidden;
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let conv_w = take(self.conv_in() * h);
        let conv_b = take(h);
        let layers = (0..self.module_num)
            .map(|_| LayerLayout {
                wq: take(h * h),
                wk: take(h * h),
                wv: take(h * h),
                rho: take(1).start,
            })
            .collect();
        let out_w = take(h * self.dims);
        let out_b = take(self.dims);
        Layout {
            conv_w,
            conv_b,
            layers,
            out_w,
            out_b,
            total: at,
        }
    }

    pub fn n_params(&self) -> usize {
        self.layout().total
    }
}

type Span = std::ops::Range<usize>;

#[derive(Debug, Clone)]
struct LayerLayout {
    wq: Span,
    wk: Span,
    wv: Span,
    rho: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    conv_w: Span,
    conv_b: Span,
    layers: Vec<LayerLayout>,
    out_w: Span,
    out_b: Span,
    total: usize,
}

/// Causal-convolution embedding, a stack of residual anomaly-attention
/// layers, and a linear reconstruction head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsadmModel {
    arch: TsadmArch,
    params: Vec<f64>,
}

struct LayerCache {
    h_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: AttentionCache,
}

pub(crate) struct ForwardCache {
    unfolded: Array2<f64>,
    h0: Array2<f64>,
    layers: Vec<LayerCache>,
    h_final: Array2<f64>,
}

pub struct Forward {
    pub recon: Array2<f64>,
    pub repr: Array2<f64>,
}

impl TsadmModel {
    pub fn new(arch: TsadmArch, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let lay = arch.layout();
        let mut params = vec![0.0; lay.total];
        let mut fill = |span: &Span, fan_in: usize, gain: f64, params: &mut Vec<f64>| {
            let n = Normal::new(0.0, gain / (fan_in as f64).sqrt()).expect("valid normal");
            for p in &mut params[span.clone()] {
                *p = n.sample(rng);
            }
        };
        fill(&lay.conv_w, arch.conv_in(), 1.0, &mut params);
        for l in &lay.layers {
            fill(&l.wq, arch.hidden, 0.5, &mut params);
            fill(&l.wk, arch.hidden, 0.5, &mut params);
            fill(&l.wv, arch.hidden, 0.3, &mut params);
            params[l.rho] = 0.0;
        }
        fill(&lay.out_w, arch.hidden, 1.0, &mut params);
        Ok(Self { arch, params })
    }

    pub fn from_parts(arch: TsadmArch, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.n_params() {
            return Err(Error::shape(arch.n_params(), params.len()));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("detector parameters"));
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> TsadmArch {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Mask scales `σ = exp(ρ)` of every layer.
    pub fn sigmas(&self) -> Vec<f64> {
        self.arch.layout().layers.iter().map(|l| self.params[l.rho].exp()).collect()
    }

    fn mat(&self, span: &Span, r: usize, c: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((r, c), &self.params[span.clone()]).expect("layout matches shape")
    }

    fn vec(&self, span: &Span) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[span.clone()])
    }

    fn unfold(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let (t, d) = x.dim();
        let mut u = Array2::zeros((t, self.arch.conv_in()));
        for row in 0..t {
            for j in 0..self.arch.k_len {
                if row >= j {
                    u.slice_mut(s![row, j * d..(j + 1) * d]).assign(&x.row(row - j));
                }
            }
        }
        u
    }

    pub(crate) fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Forward, ForwardCache)> {
        if x.ncols() != self.arch.dims {
            return Err(Error::shape(format!("{} dims", self.arch.dims), format!("{} dims", x.ncols())));
        }
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("empty window".into()));
        }
        let a = &self.arch;
        let lay = a.layout();
        let unfolded = self.unfold(x);
        let mut h = unfolded.dot(&self.mat(&lay.conv_w, a.conv_in(), a.hidden)) + &self.vec(&lay.conv_b);
        h.mapv_inplace(f64::tanh);
        let h0 = h.clone();
        let mut layers = Vec::with_capacity(a.module_num);
        for l in &lay.layers {
            let q = h.dot(&self.mat(&l.wq, a.hidden, a.hidden));
            let k = h.dot(&self.mat(&l.wk, a.hidden, a.hidden));
            let v = h.dot(&self.mat(&l.wv, a.hidden, a.hidden));
            let (y, attn) = anomaly_attention_cached(q.view(), k.view(), v.view(), self.params[l.rho].exp())?;
            let next = &h + &y;
            layers.push(LayerCache {
                h_in: h,
                q,
                k,
                v,
                attn,
            });
            h = next;
        }
        let recon = h.dot(&self.mat(&lay.out_w, a.hidden, a.dims)) + &self.vec(&lay.out_b);
        if recon.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("reconstruction"));
        }
        Ok((
            Forward {
                recon,
                repr: h.clone(),
            },
            ForwardCache {
                unfolded,
                h0,
                layers,
                h_final: h,
            },
        ))
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Forward> {
        self.forward_cached(x).map(|(f, _)| f)
    }

    /// Mean squared reconstruction error of one window and its gradient,
    /// added into `grad`.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, grad: &mut [f64]) -> Result<f64> {
        let (fwd, cache) = self.forward_cached(x)?;
        let a = &self.arch;
        let lay = a.layout();
        let n = (x.nrows() * x.ncols()) as f64;
        let diff = &fwd.recon - &x;
        let loss = diff.iter().map(|v| v * v).sum::<f64>() / n;
        let d_rec = diff * (2.0 / n);

        add(grad, &lay.out_w, cache.h_final.t().dot(&d_rec).iter());
        add(grad, &lay.out_b, d_rec.sum_axis(Axis(0)).iter());
        let mut dh = d_rec.dot(&self.mat(&lay.out_w, a.hidden, a.dims).t());

        for (l, c) in lay.layers.iter().zip(&cache.layers).rev() {
            let g = anomaly_attention_backward(c.q.view(), c.k.view(), c.v.view(), &c.attn, dh.view());
            add(grad, &l.wq, c.h_in.t().dot(&g.dq).iter());
            add(grad, &l.wk, c.h_in.t().dot(&g.dk).iter());
            add(grad, &l.wv, c.h_in.t().dot(&g.dv).iter());
            grad[l.rho] += g.d_log_sigma;
            dh = dh
                + g.dq.dot(&self.mat(&l.wq, a.hidden, a.hidden).t())
                + g.dk.dot(&self.mat(&l.wk, a.hidden, a.hidden).t())
                + g.dv.dot(&self.mat(&l.wv, a.hidden, a.hidden).t());
        }
        let d_pre = dh * cache.h0.mapv(|v| 1.0 - v * v);
        add(grad, &lay.conv_w, cache.unfolded.t().dot(&d_pre).iter());
        add(grad, &lay.conv_b, d_pre.sum_axis(Axis(0)).iter());
        Ok(loss)
    }

    /// Per-slot squared error summed over dimensions, plus the final
    /// attention features, for a window of any length.
    pub fn score_window(&self, x: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        let fwd = self.forward(x)?;
        let err = (&fwd.recon - &x).mapv(|v| v * v).sum_axis(Axis(1));
        Ok((err, fwd.repr))
    }
}

fn add<'a>(grad: &mut [f64], span: &Span, vals: impl Iterator<Item = &'a f64>) {
    for (g, v) in grad[span.clone()].iter_mut().zip(vals) {
        *g += v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch() -> TsadmArch {
        TsadmArch {
            dims: 2,
            hidden: 4,
            k_len: 2,
            module_num: 2,
            win_len: 5,
        }
    }

    #[test]
    fn shapes() {
        let m = TsadmModel::new(arch(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let x = Array2::from_shape_fn((5, 2), |(i, j)| (i + j) as f64 * 0.1);
        let f = m.forward(x.view()).unwrap();
        assert_eq!(f.recon.dim(), (5, 2));
        assert_eq!(f.repr.dim(), (5, 4));
        assert!(m.forward(Array2::zeros((5, 3)).view()).is_err());
        assert_eq!(m.sigmas(), vec![1.0, 1.0]);
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let m = TsadmModel::new(arch(), &mut rng).unwrap();
            let x = Array2::from_shape_fn((5, 2), |_| rng.random_range(-1.0..1.0));
            let mut g = vec![0.0; m.params().len()];
            m.loss_and_grad(x.view(), &mut g).unwrap();
            for i in 0..g.len() {
                let h = 1e-6;
                let mut p = m.params().to_vec();
                p[i] += h;
                let mut scratch = vec![0.0; p.len()];
                let up = TsadmModel::from_parts(arch(), p.clone()).unwrap().loss_and_grad(x.view(), &mut scratch).unwrap();
                p[i] -= 2.0 * h;
                let dn = TsadmModel::from_parts(arch(), p).unwrap().loss_and_grad(x.view(), &mut scratch).unwrap();
                let fd = (up - dn) / (2.0 * h);
                assert!(
                    (fd - g[i]).abs() <= 1e-4 * fd.abs().max(g[i].abs()).max(1e-5),
                    "param {i}: {fd} vs {}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn scores_are_nonnegative() {
        let m = TsadmModel::new(arch(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let x = Array2::from_shape_fn((7, 2), |(i, _)| (i as f64).sin());
        let (s, r) = m.score_window(x.view()).unwrap();
        assert!(s.iter().all(|&v| v >= 0.0));
        assert_eq!(r.dim(), (7, 4));
    }
}
