//! Layer implementations: conv (im2col + matmul), group/batch norm, relu,
//! maxpool, global average pool, linear, dropout, and residual blocks.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::normal;
use crate::tensor::{mm, mm_nt, mm_tn, Tensor};

/// Activations in `[batch, channels, h, w]` layout; vectors use `h = w = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Feat {
    pub data: Vec<f64>,
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Feat {
    pub fn new(b: usize, c: usize, h: usize, w: usize) -> Self {
        Feat { data: vec![0.0; b * c * h * w], b, c, h, w }
    }

    pub fn from_data(b: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != b * c * h * w {
            return Err(Error::Contract("feature data does not match shape".to_string()));
        }
        Ok(Feat { data, b, c, h, w })
    }

    /// Stack per-sample CHW tensors into one batch.
    pub fn from_views(views: &[Tensor]) -> Result<Self> {
        let first = views
            .first()
            .ok_or_else(|| Error::Contract("empty batch".to_string()))?;
        let shape = first.shape().to_vec();
        if shape.len() != 3 {
            return Err(Error::Contract("views must be CHW tensors".to_string()));
        }
        let mut data = Vec::with_capacity(views.len() * first.len());
        for v in views {
            if v.shape() != shape.as_slice() {
                return Err(Error::Contract("views differ in shape".to_string()));
            }
            data.extend_from_slice(v.data());
        }
        Feat::from_data(views.len(), shape[0], shape[1], shape[2], data)
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Row `i` of a `[b, c]` feature (h = w = 1).
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert_eq!(self.plane(), 1);
        &self.data[i * self.c..(i + 1) * self.c]
    }
}

/// Per-layer state captured in the training forward pass.
pub enum Cache {
    Conv {
        cols: Vec<f64>,
        in_b: usize,
        in_c: usize,
        in_h: usize,
        in_w: usize,
        out_h: usize,
        out_w: usize,
    },
    Norm {
        x: Vec<f64>,
        mean: Vec<f64>,
        inv: Vec<f64>,
        b: usize,
        c: usize,
        h: usize,
        w: usize,
    },
    Relu {
        mask: Vec<bool>,
    },
    MaxPool {
        argmax: Vec<usize>,
        in_h: usize,
        in_w: usize,
    },
    Gap {
        in_h: usize,
        in_w: usize,
    },
    Linear {
        x: Vec<f64>,
        b: usize,
    },
    Dropout {
        mask: Vec<f64>,
    },
    Residual {
        main: Vec<Cache>,
        shortcut: Option<Vec<Cache>>,
        relu_mask: Vec<bool>,
    },
    None,
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

/// 2D convolution without bias (always followed by a norm layer).
/// Weight layout: `[out_ch, in_ch * k * k]`.
pub struct Conv2d {
    pub weight: Tensor,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn init(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let std = libm::sqrt(2.0 / fan_in as f64);
        let data = (0..out_ch * fan_in).map(|_| std * normal(rng)).collect();
        Conv2d {
            weight: Tensor::from_vec(&[out_ch, fan_in], data).unwrap(),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        }
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    /// im2col with batch-major columns: `cols[(c*k*k + ki), (b*oh*ow + o)]`.
    fn im2col(&self, x: &Feat, out_h: usize, out_w: usize) -> Vec<f64> {
        let krows = self.in_ch * self.kernel * self.kernel;
        let ncols = x.b * out_h * out_w;
        let mut cols = vec![0.0; krows * ncols];
        let plane = x.h * x.w;
        for c in 0..self.in_ch {
            for kr in 0..self.kernel {
                for kc in 0..self.kernel {
                    let row = (c * self.kernel + kr) * self.kernel + kc;
                    let out = &mut cols[row * ncols..(row + 1) * ncols];
                    for b in 0..x.b {
                        let base = (b * x.c + c) * plane;
                        for oy in 0..out_h {
                            let iy = (oy * self.stride + kr) as isize - self.pad as isize;
                            let dst = (b * out_h + oy) * out_w;
                            if iy < 0 || iy >= x.h as isize {
                                continue; // zero padding
                            }
                            let src_row = base + iy as usize * x.w;
                            for ox in 0..out_w {
                                let ix = (ox * self.stride + kc) as isize - self.pad as isize;
                                if ix < 0 || ix >= x.w as isize {
                                    continue;
                                }
                                out[dst + ox] = x.data[src_row + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn forward(&self, x: &Feat) -> (Feat, Cache) {
        let (out_h, out_w) = self.out_hw(x.h, x.w);
        let cols = self.im2col(x, out_h, out_w);
        let krows = self.in_ch * self.kernel * self.kernel;
        let ncols = x.b * out_h * out_w;
        let mut yt = vec![0.0; self.out_ch * ncols];
        mm(self.weight.data(), &cols, self.out_ch, krows, ncols, &mut yt);
        // [out_ch, b*oh*ow] -> [b, out_ch, oh, ow]
        let mut y = Feat::new(x.b, self.out_ch, out_h, out_w);
        let plane = out_h * out_w;
        for o in 0..self.out_ch {
            for b in 0..x.b {
                let src = &yt[o * ncols + b * plane..o * ncols + (b + 1) * plane];
                let dst = &mut y.data[(b * self.out_ch + o) * plane..(b * self.out_ch + o + 1) * plane];
                dst.copy_from_slice(src);
            }
        }
        (
            y,
            Cache::Conv {
                cols,
                in_b: x.b,
                in_c: x.c,
                in_h: x.h,
                in_w: x.w,
                out_h,
                out_w,
            },
        )
    }

    fn backward(&self, cache: &Cache, dy: &Feat, dw: &mut Tensor) -> Feat {
        let Cache::Conv { cols, in_b, in_c, in_h, in_w, out_h, out_w } = cache else {
            unreachable!("conv cache")
        };
        let krows = self.in_ch * self.kernel * self.kernel;
        let ncols = in_b * out_h * out_w;
        let plane = out_h * out_w;
        // [b, out_ch, oh, ow] -> [out_ch, b*oh*ow]
        let mut dyt = vec![0.0; self.out_ch * ncols];
        for o in 0..self.out_ch {
            for b in 0..*in_b {
                let src = &dy.data[(b * self.out_ch + o) * plane..(b * self.out_ch + o + 1) * plane];
                dyt[o * ncols + b * plane..o * ncols + (b + 1) * plane].copy_from_slice(src);
            }
        }
        mm_nt(&dyt, cols, self.out_ch, ncols, krows, dw.data_mut());
        let mut dcols = vec![0.0; krows * ncols];
        mm_tn(self.weight.data(), &dyt, krows, self.out_ch, ncols, &mut dcols);
        // col2im scatter-add
        let mut dx = Feat::new(*in_b, *in_c, *in_h, *in_w);
        let in_plane = in_h * in_w;
        for c in 0..self.in_ch {
            for kr in 0..self.kernel {
                for kc in 0..self.kernel {
                    let row = (c * self.kernel + kr) * self.kernel + kc;
                    let src = &dcols[row * ncols..(row + 1) * ncols];
                    for b in 0..*in_b {
                        let base = (b * in_c + c) * in_plane;
                        for oy in 0..*out_h {
                            let iy = (oy * self.stride + kr) as isize - self.pad as isize;
                            if iy < 0 || iy >= *in_h as isize {
                                continue;
                            }
                            let dst_row = base + iy as usize * in_w;
                            let s = (b * out_h + oy) * out_w;
                            for ox in 0..*out_w {
                                let ix = (ox * self.stride + kc) as isize - self.pad as isize;
                                if ix < 0 || ix >= *in_w as isize {
                                    continue;
                                }
                                dx.data[dst_row + ix as usize] += src[s + ox];
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Group normalization (per-sample statistics; no batch coupling).
pub struct GroupNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub groups: usize,
    pub eps: f64,
}

impl GroupNorm {
    pub fn init(channels: usize, groups: usize) -> Result<Self> {
        if groups == 0 || channels % groups != 0 {
            return Err(Error::Config(format!(
                "group count {groups} must divide channels {channels}"
            )));
        }
        Ok(GroupNorm {
            gamma: Tensor::from_vec(&[channels], vec![1.0; channels]).unwrap(),
            beta: Tensor::zeros(&[channels]),
            groups,
            eps: 1e-5,
        })
    }

    fn forward(&self, x: &Feat) -> (Feat, Cache) {
        let plane = x.plane();
        let gchan = x.c / self.groups;
        let glen = gchan * plane;
        let mut y = Feat::new(x.b, x.c, x.h, x.w);
        let mut means = vec![0.0; x.b * self.groups];
        let mut invs = vec![0.0; x.b * self.groups];
        for b in 0..x.b {
            for g in 0..self.groups {
                let start = (b * x.c + g * gchan) * plane;
                let seg = &x.data[start..start + glen];
                let mean = seg.iter().sum::<f64>() / glen as f64;
                let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / glen as f64;
                let inv = 1.0 / libm::sqrt(var + self.eps);
                means[b * self.groups + g] = mean;
                invs[b * self.groups + g] = inv;
                for ci in 0..gchan {
                    let c = g * gchan + ci;
                    let (ga, be) = (self.gamma.data()[c], self.beta.data()[c]);
                    let xs = &x.data[(b * x.c + c) * plane..(b * x.c + c + 1) * plane];
                    let ys = &mut y.data[(b * x.c + c) * plane..(b * x.c + c + 1) * plane];
                    for (yo, &xi) in ys.iter_mut().zip(xs.iter()) {
                        *yo = ga * (xi - mean) * inv + be;
                    }
                }
            }
        }
        (
            y,
            Cache::Norm { x: x.data.clone(), mean: means, inv: invs, b: x.b, c: x.c, h: x.h, w: x.w },
        )
    }

    fn backward(&self, cache: &Cache, dy: &Feat, dgamma: &mut Tensor, dbeta: &mut Tensor) -> Feat {
        let Cache::Norm { x, mean, inv, b, c, h, w } = cache else {
            unreachable!("norm cache")
        };
        let plane = h * w;
        let gchan = c / self.groups;
        let glen = gchan * plane;
        let mut dx = Feat::new(*b, *c, *h, *w);
        for bi in 0..*b {
            for g in 0..self.groups {
                let m = mean[bi * self.groups + g];
                let iv = inv[bi * self.groups + g];
                // two reduction passes over the group
                let (mut sum_dxhat, mut sum_dxhat_xhat) = (0.0, 0.0);
                for ci in 0..gchan {
                    let ch = g * gchan + ci;
                    let ga = self.gamma.data()[ch];
                    let base = (bi * c + ch) * plane;
                    for i in 0..plane {
                        let xhat = (x[base + i] - m) * iv;
                        let dxh = dy.data[base + i] * ga;
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xhat;
                    }
                }
                let n = glen as f64;
                for ci in 0..gchan {
                    let ch = g * gchan + ci;
                    let ga = self.gamma.data()[ch];
                    let base = (bi * c + ch) * plane;
                    for i in 0..plane {
                        let xhat = (x[base + i] - m) * iv;
                        let dxh = dy.data[base + i] * ga;
                        dx.data[base + i] =
                            iv * (dxh - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
                        dgamma.data_mut()[ch] += dy.data[base + i] * xhat;
                        dbeta.data_mut()[ch] += dy.data[base + i];
                    }
                }
            }
        }
        dx
    }
}

/// Batch normalization with per-forward batch statistics and running stats
/// for the eval path.
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn init(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::from_vec(&[channels], vec![1.0; channels]).unwrap(),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::from_vec(&[channels], vec![1.0; channels]).unwrap(),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    fn forward_train(&mut self, x: &Feat, update_buffers: bool) -> (Feat, Cache) {
        let plane = x.plane();
        let n = (x.b * plane) as f64;
        let mut y = Feat::new(x.b, x.c, x.h, x.w);
        let mut means = vec![0.0; x.c];
        let mut invs = vec![0.0; x.c];
        for c in 0..x.c {
            let mut sum = 0.0;
            for b in 0..x.b {
                let seg = &x.data[(b * x.c + c) * plane..(b * x.c + c + 1) * plane];
                sum += seg.iter().sum::<f64>();
            }
            let mean = sum / n;
            let mut var = 0.0;
            for b in 0..x.b {
                let seg = &x.data[(b * x.c + c) * plane..(b * x.c + c + 1) * plane];
                var += seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            }
            var /= n;
            let inv = 1.0 / libm::sqrt(var + self.eps);
            means[c] = mean;
            invs[c] = inv;
            if update_buffers {
                let unbiased = if n > 1.0 { var * n / (n - 1.0) } else { var };
                let rm = self.running_mean.data_mut();
                rm[c] = (1.0 - self.momentum) * rm[c] + self.momentum * mean;
                let rv = self.running_var.data_mut();
                rv[c] = (1.0 - self.momentum) * rv[c] + self.momentum * unbiased;
            }
            let (ga, be) = (self.gamma.data()[c], self.beta.data()[c]);
            for b in 0..x.b {
                let xs = &x.data[(b * x.c + c) * plane..(b * x.c + c + 1) * plane];
                let ys = &mut y.data[(b * x.c + c) * plane..(b * x.c + c + 1) * plane];
                for (yo, &xi) in ys.iter_mut().zip(xs.iter()) {
                    *yo = ga * (xi - mean) * inv + be;
                }
            }
        }
        (
            y,
            Cache::Norm { x: x.data.clone(), mean: means, inv: invs, b: x.b, c: x.c, h: x.h, w: x.w },
        )
    }

    fn forward_eval(&self, x: &Feat) -> Feat {
        let plane = x.plane();
        let mut y = Feat::new(x.b, x.c, x.h, x.w);
        for c in 0..x.c {
            let mean = self.running_mean.data()[c];
            let inv = 1.0 / libm::sqrt(self.running_var.data()[c] + self.eps);
            let (ga, be) = (self.gamma.data()[c], self.beta.data()[c]);
            for b in 0..x.b {
                let xs = &x.data[(b * x.c + c) * plane..(b * x.c + c + 1) * plane];
                let ys = &mut y.data[(b * x.c + c) * plane..(b * x.c + c + 1) * plane];
                for (yo, &xi) in ys.iter_mut().zip(xs.iter()) {
                    *yo = ga * (xi - mean) * inv + be;
                }
            }
        }
        y
    }

    fn backward(&self, cache: &Cache, dy: &Feat, dgamma: &mut Tensor, dbeta: &mut Tensor) -> Feat {
        let Cache::Norm { x, mean, inv, b, c, h, w } = cache else {
            unreachable!("norm cache")
        };
        let plane = h * w;
        let n = (b * plane) as f64;
        let mut dx = Feat::new(*b, *c, *h, *w);
        for ch in 0..*c {
            let m = mean[ch];
            let iv = inv[ch];
            let ga = self.gamma.data()[ch];
            let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
            for bi in 0..*b {
                let base = (bi * c + ch) * plane;
                for i in 0..plane {
                    let xhat = (x[base + i] - m) * iv;
                    sum_dy += dy.data[base + i];
                    sum_dy_xhat += dy.data[base + i] * xhat;
                }
            }
            dgamma.data_mut()[ch] += sum_dy_xhat;
            dbeta.data_mut()[ch] += sum_dy;
            for bi in 0..*b {
                let base = (bi * c + ch) * plane;
                for i in 0..plane {
                    let xhat = (x[base + i] - m) * iv;
                    dx.data[base + i] = ga * iv / n
                        * (n * dy.data[base + i] - sum_dy - xhat * sum_dy_xhat);
                }
            }
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// Pooling, activation, dropout, linear
// ---------------------------------------------------------------------------

pub struct MaxPool {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl MaxPool {
    fn forward(&self, x: &Feat) -> (Feat, Cache) {
        let out_h = (x.h + 2 * self.pad - self.kernel) / self.stride + 1;
        let out_w = (x.w + 2 * self.pad - self.kernel) / self.stride + 1;
        let mut y = Feat::new(x.b, x.c, out_h, out_w);
        let mut argmax = vec![0usize; x.b * x.c * out_h * out_w];
        let plane = x.h * x.w;
        let mut oi = 0;
        for b in 0..x.b {
            for c in 0..x.c {
                let base = (b * x.c + c) * plane;
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0;
                        for kr in 0..self.kernel {
                            let iy = (oy * self.stride + kr) as isize - self.pad as isize;
                            if iy < 0 || iy >= x.h as isize {
                                continue;
                            }
                            for kc in 0..self.kernel {
                                let ix = (ox * self.stride + kc) as isize - self.pad as isize;
                                if ix < 0 || ix >= x.w as isize {
                                    continue;
                                }
                                let idx = base + iy as usize * x.w + ix as usize;
                                if x.data[idx] > best {
                                    best = x.data[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        y.data[oi] = best;
                        argmax[oi] = best_idx;
                        oi += 1;
                    }
                }
            }
        }
        (y, Cache::MaxPool { argmax, in_h: x.h, in_w: x.w })
    }

    fn backward(&self, cache: &Cache, dy: &Feat) -> Feat {
        let Cache::MaxPool { argmax, in_h, in_w } = cache else {
            unreachable!("maxpool cache")
        };
        let mut dx = Feat::new(dy.b, dy.c, *in_h, *in_w);
        for (i, &src) in argmax.iter().enumerate() {
            dx.data[src] += dy.data[i];
        }
        dx
    }
}

/// Fully connected layer on `[b, c]` features.
pub struct Linear {
    pub weight: Tensor, // [out, in]
    pub bias: Tensor,   // [out]
}

impl Linear {
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / libm::sqrt(in_dim as f64);
        let w = (0..out_dim * in_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let b = (0..out_dim).map(|_| rng.gen_range(-bound..bound)).collect();
        Linear {
            weight: Tensor::from_vec(&[out_dim, in_dim], w).unwrap(),
            bias: Tensor::from_vec(&[out_dim], b).unwrap(),
        }
    }

    /// All-zero layer (used to pin degenerate behaviour in tests).
    pub fn zeroed(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    fn forward(&self, x: &Feat) -> (Feat, Cache) {
        let (in_dim, out_dim) = (self.weight.shape()[1], self.weight.shape()[0]);
        debug_assert_eq!(x.c * x.plane(), in_dim);
        let mut y = Feat::new(x.b, out_dim, 1, 1);
        mm_nt(&x.data, self.weight.data(), x.b, in_dim, out_dim, &mut y.data);
        for b in 0..x.b {
            for (o, &bias) in self.bias.data().iter().enumerate() {
                y.data[b * out_dim + o] += bias;
            }
        }
        (y, Cache::Linear { x: x.data.clone(), b: x.b })
    }

    fn backward(&self, cache: &Cache, dy: &Feat, dw: &mut Tensor, db: &mut Tensor) -> Feat {
        let Cache::Linear { x, b } = cache else { unreachable!("linear cache") };
        let (in_dim, out_dim) = (self.weight.shape()[1], self.weight.shape()[0]);
        mm_tn(&dy.data, x, out_dim, *b, in_dim, dw.data_mut());
        for bi in 0..*b {
            for o in 0..out_dim {
                db.data_mut()[o] += dy.data[bi * out_dim + o];
            }
        }
        let mut dx = Feat::new(*b, in_dim, 1, 1);
        mm(&dy.data, self.weight.data(), *b, out_dim, in_dim, &mut dx.data);
        dx
    }
}

/// Inverted dropout; identity when `p == 0` or in eval mode.
pub struct Dropout {
    pub p: f64,
}

// ---------------------------------------------------------------------------
// Layer and Stack
// ---------------------------------------------------------------------------

pub enum Layer {
    Conv(Conv2d),
    Gn(GroupNorm),
    Bn(BatchNorm),
    Relu,
    MaxPool(MaxPool),
    Gap,
    Linear(Linear),
    Dropout(Dropout),
    Residual(Residual),
}

/// Residual block: `relu(main(x) + shortcut(x))`, identity shortcut when
/// `shortcut` is `None`.
pub struct Residual {
    pub main: Stack,
    pub shortcut: Option<Stack>,
}

/// A sequential stack of layers.
pub struct Stack {
    pub layers: Vec<Layer>,
}

impl Layer {
    fn n_params(&self) -> usize {
        match self {
            Layer::Conv(_) => 1,
            Layer::Gn(_) | Layer::Bn(_) | Layer::Linear(_) => 2,
            Layer::Residual(r) => {
                r.main.n_params() + r.shortcut.as_ref().map_or(0, |s| s.n_params())
            }
            _ => 0,
        }
    }

    fn collect_params<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        match self {
            Layer::Conv(c) => out.push(&c.weight),
            Layer::Gn(g) => {
                out.push(&g.gamma);
                out.push(&g.beta);
            }
            Layer::Bn(bn) => {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
            Layer::Linear(l) => {
                out.push(&l.weight);
                out.push(&l.bias);
            }
            Layer::Residual(r) => {
                r.main.collect_params(out);
                if let Some(s) = &r.shortcut {
                    s.collect_params(out);
                }
            }
            _ => {}
        }
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        match self {
            Layer::Conv(c) => out.push(&mut c.weight),
            Layer::Gn(g) => {
                out.push(&mut g.gamma);
                out.push(&mut g.beta);
            }
            Layer::Bn(bn) => {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
            Layer::Linear(l) => {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
            Layer::Residual(r) => {
                r.main.collect_params_mut(out);
                if let Some(s) = &mut r.shortcut {
                    s.collect_params_mut(out);
                }
            }
            _ => {}
        }
    }

    fn collect_buffers<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        match self {
            Layer::Bn(bn) => {
                out.push(&bn.running_mean);
                out.push(&bn.running_var);
            }
            Layer::Residual(r) => {
                r.main.collect_buffers(out);
                if let Some(s) = &r.shortcut {
                    s.collect_buffers(out);
                }
            }
            _ => {}
        }
    }

    fn collect_buffers_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        match self {
            Layer::Bn(bn) => {
                out.push(&mut bn.running_mean);
                out.push(&mut bn.running_var);
            }
            Layer::Residual(r) => {
                r.main.collect_buffers_mut(out);
                if let Some(s) = &mut r.shortcut {
                    s.collect_buffers_mut(out);
                }
            }
            _ => {}
        }
    }

    fn forward_train(
        &mut self,
        x: Feat,
        rng: &mut ChaCha8Rng,
        update_buffers: bool,
    ) -> (Feat, Cache) {
        match self {
            Layer::Conv(c) => c.forward(&x),
            Layer::Gn(g) => g.forward(&x),
            Layer::Bn(bn) => bn.forward_train(&x, update_buffers),
            Layer::Relu => {
                let mask: Vec<bool> = x.data.iter().map(|&v| v > 0.0).collect();
                let mut y = x;
                for v in y.data.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                (y, Cache::Relu { mask })
            }
            Layer::MaxPool(p) => p.forward(&x),
            Layer::Gap => {
                let plane = x.plane();
                let mut y = Feat::new(x.b, x.c, 1, 1);
                for b in 0..x.b {
                    for c in 0..x.c {
                        let seg = &x.data[(b * x.c + c) * plane..(b * x.c + c + 1) * plane];
                        y.data[b * x.c + c] = seg.iter().sum::<f64>() / plane as f64;
                    }
                }
                (y, Cache::Gap { in_h: x.h, in_w: x.w })
            }
            Layer::Linear(l) => l.forward(&x),
            Layer::Dropout(d) => {
                if d.p == 0.0 {
                    return (x, Cache::None);
                }
                let keep = 1.0 - d.p;
                let mask: Vec<f64> = x
                    .data
                    .iter()
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                let mut y = x;
                for (v, m) in y.data.iter_mut().zip(mask.iter()) {
                    *v *= m;
                }
                (y, Cache::Dropout { mask })
            }
            Layer::Residual(r) => {
                let (main_y, main_caches) = r.main.forward_train(x.clone(), rng, update_buffers);
                let (short_y, short_caches) = match &mut r.shortcut {
                    Some(s) => {
                        let (y, c) = s.forward_train(x, rng, update_buffers);
                        (y, Some(c))
                    }
                    None => (x, None),
                };
                let mut sum = main_y;
                for (v, s) in sum.data.iter_mut().zip(short_y.data.iter()) {
                    *v += s;
                }
                let mask: Vec<bool> = sum.data.iter().map(|&v| v > 0.0).collect();
                for v in sum.data.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                (
                    sum,
                    Cache::Residual { main: main_caches, shortcut: short_caches, relu_mask: mask },
                )
            }
        }
    }

    fn forward_eval(&self, x: Feat) -> Feat {
        match self {
            Layer::Conv(c) => c.forward(&x).0,
            Layer::Gn(g) => g.forward(&x).0,
            Layer::Bn(bn) => bn.forward_eval(&x),
            Layer::Relu => {
                let mut y = x;
                for v in y.data.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                y
            }
            Layer::MaxPool(p) => p.forward(&x).0,
            Layer::Gap => {
                let plane = x.plane();
                let mut y = Feat::new(x.b, x.c, 1, 1);
                for b in 0..x.b {
                    for c in 0..x.c {
                        let seg = &x.data[(b * x.c + c) * plane..(b * x.c + c + 1) * plane];
                        y.data[b * x.c + c] = seg.iter().sum::<f64>() / plane as f64;
                    }
                }
                y
            }
            Layer::Linear(l) => l.forward(&x).0,
            Layer::Dropout(_) => x,
            Layer::Residual(r) => {
                let main_y = r.main.forward_eval(x.clone());
                let short_y = match &r.shortcut {
                    Some(s) => s.forward_eval(x),
                    None => x,
                };
                let mut sum = main_y;
                for (v, s) in sum.data.iter_mut().zip(short_y.data.iter()) {
                    *v += s;
                }
                for v in sum.data.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                sum
            }
        }
    }

    /// Returns dx; writes parameter gradients into `grads[offset..]` using
    /// the same ordering as `collect_params`.
    fn backward(&self, cache: &Cache, dy: Feat, grads: &mut [Tensor], offset: usize) -> Feat {
        match self {
            Layer::Conv(c) => c.backward(cache, &dy, &mut grads[offset]),
            Layer::Gn(g) => {
                let (dg, db) = split_two(grads, offset);
                g.backward(cache, &dy, dg, db)
            }
            Layer::Bn(bn) => {
                let (dg, db) = split_two(grads, offset);
                bn.backward(cache, &dy, dg, db)
            }
            Layer::Relu => {
                let Cache::Relu { mask } = cache else { unreachable!() };
                let mut dx = dy;
                for (v, &m) in dx.data.iter_mut().zip(mask.iter()) {
                    if !m {
                        *v = 0.0;
                    }
                }
                dx
            }
            Layer::MaxPool(p) => p.backward(cache, &dy),
            Layer::Gap => {
                let Cache::Gap { in_h, in_w } = cache else { unreachable!() };
                let plane = in_h * in_w;
                let mut dx = Feat::new(dy.b, dy.c, *in_h, *in_w);
                for b in 0..dy.b {
                    for c in 0..dy.c {
                        let g = dy.data[b * dy.c + c] / plane as f64;
                        for v in dx.data[(b * dy.c + c) * plane..(b * dy.c + c + 1) * plane]
                            .iter_mut()
                        {
                            *v = g;
                        }
                    }
                }
                dx
            }
            Layer::Linear(l) => {
                let (dw, db) = split_two(grads, offset);
                l.backward(cache, &dy, dw, db)
            }
            Layer::Dropout(_) => match cache {
                Cache::None => dy,
                Cache::Dropout { mask } => {
                    let mut dx = dy;
                    for (v, m) in dx.data.iter_mut().zip(mask.iter()) {
                        *v *= m;
                    }
                    dx
                }
                _ => unreachable!("dropout cache"),
            },
            Layer::Residual(r) => {
                let Cache::Residual { main, shortcut, relu_mask } = cache else {
                    unreachable!()
                };
                let mut dsum = dy;
                for (v, &m) in dsum.data.iter_mut().zip(relu_mask.iter()) {
                    if !m {
                        *v = 0.0;
                    }
                }
                let main_params = r.main.n_params();
                let dmain = r.main.backward(main, dsum.clone(), &mut grads[offset..offset + main_params]);
                match (&r.shortcut, shortcut) {
                    (Some(s), Some(sc)) => {
                        let n = s.n_params();
                        let dshort = s.backward(
                            sc,
                            dsum,
                            &mut grads[offset + main_params..offset + main_params + n],
                        );
                        let mut dx = dmain;
                        for (v, sv) in dx.data.iter_mut().zip(dshort.data.iter()) {
                            *v += sv;
                        }
                        dx
                    }
                    (None, None) => {
                        let mut dx = dmain;
                        for (v, sv) in dx.data.iter_mut().zip(dsum.data.iter()) {
                            *v += sv;
                        }
                        dx
                    }
                    _ => unreachable!("residual cache shape"),
                }
            }
        }
    }
}

fn split_two(grads: &mut [Tensor], offset: usize) -> (&mut Tensor, &mut Tensor) {
    let (a, b) = grads[offset..offset + 2].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

impl Stack {
    pub fn new(layers: Vec<Layer>) -> Self {
        Stack { layers }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.n_params()).sum()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.collect_params_mut(&mut out);
        out
    }

    pub fn buffers(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        self.collect_buffers(&mut out);
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.collect_buffers_mut(&mut out);
        out
    }

    fn collect_params<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        for l in &self.layers {
            l.collect_params(out);
        }
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        for l in &mut self.layers {
            l.collect_params_mut(out);
        }
    }

    fn collect_buffers<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        for l in &self.layers {
            l.collect_buffers(out);
        }
    }

    fn collect_buffers_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        for l in &mut self.layers {
            l.collect_buffers_mut(out);
        }
    }

    /// Zero gradient tensors matching `params()` order.
    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params().iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    pub fn forward_train(
        &mut self,
        x: Feat,
        rng: &mut ChaCha8Rng,
        update_buffers: bool,
    ) -> (Feat, Vec<Cache>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for l in &mut self.layers {
            let (y, c) = l.forward_train(cur, rng, update_buffers);
            caches.push(c);
            cur = y;
        }
        (cur, caches)
    }

    pub fn forward_eval(&self, x: Feat) -> Feat {
        let mut cur = x;
        for l in &self.layers {
            cur = l.forward_eval(cur);
        }
        cur
    }

    /// Backprop through the stack; `grads` must have `n_params()` entries
    /// aligned with `params()`. Returns the input gradient.
    pub fn backward(&self, caches: &[Cache], dy: Feat, grads: &mut [Tensor]) -> Feat {
        debug_assert_eq!(caches.len(), self.layers.len());
        debug_assert_eq!(grads.len(), self.n_params());
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.n_params();
        }
        let mut cur = dy;
        for i in (0..self.layers.len()).rev() {
            cur = self.layers[i].backward(&caches[i], cur, grads, offsets[i]);
        }
        cur
    }

    /// Copy all parameters and buffers from `src` (shapes must match).
    pub fn copy_from(&mut self, src: &Stack) -> crate::error::Result<()> {
        let src_params = src.params();
        let mut dst_params = self.params_mut();
        if src_params.len() != dst_params.len() {
            return Err(Error::Contract("stack parameter structure mismatch".to_string()));
        }
        for (d, s) in dst_params.iter_mut().zip(src_params.iter()) {
            if d.shape() != s.shape() {
                return Err(Error::Contract(format!(
                    "parameter shape mismatch: {:?} vs {:?}",
                    d.shape(),
                    s.shape()
                )));
            }
            d.data_mut().copy_from_slice(s.data());
        }
        let src_buf = src.buffers();
        let mut dst_buf = self.buffers_mut();
        for (d, s) in dst_buf.iter_mut().zip(src_buf.iter()) {
            d.data_mut().copy_from_slice(s.data());
        }
        Ok(())
    }
}

impl crate::nn::ParamAccess for Stack {
    fn n_tensors(&self) -> usize {
        self.n_params()
    }

    fn tensor_len(&self, i: usize) -> usize {
        self.params()[i].len()
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.params()[i].data()[j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.params_mut()[i].data_mut()[j] = v;
    }
}
