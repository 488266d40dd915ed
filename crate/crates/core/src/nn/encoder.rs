//! Patch encoders: a small group-normalized conv net for desk-scale work and
//! a standard 18-layer residual net, each topped by an optional projection
//! head for the contrastive objective. Stage-2 features always come from the
//! trunk output; the projection head exists only for training.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::layers::{
    BatchNorm, Cache, Conv2d, Dropout, Feat, GroupNorm, Layer, Linear, MaxPool, Residual, Stack,
};
use crate::rng::StreamKey;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backbone {
    TinyConv,
    Resnet18,
}

impl Backbone {
    pub fn as_str(self) -> &'static str {
        match self {
            Backbone::TinyConv => "tiny_conv",
            Backbone::Resnet18 => "resnet18",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tiny_conv" => Ok(Backbone::TinyConv),
            "resnet18" => Ok(Backbone::Resnet18),
            other => Err(Error::Parse(format!("unknown backbone {other:?}"))),
        }
    }
}

/// Encoder architecture. `output_dim` is the feature dimension consumed by
/// stage 2; `projection_dim` is the contrastive embedding dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub backbone: Backbone,
    pub output_dim: usize,
    pub projection_dim: usize,
    /// Two-layer projection MLP when true, a single linear map otherwise.
    pub projection_mlp: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            backbone: Backbone::Resnet18,
            output_dim: 512,
            projection_dim: 128,
            projection_mlp: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.output_dim == 0 {
            return Err(Error::Config("output_dim must be positive".to_string()));
        }
        if self.projection_dim == 0 {
            return Err(Error::Config("projection_dim must be positive".to_string()));
        }
        if self.backbone == Backbone::Resnet18 && self.output_dim != 512 {
            return Err(Error::Config(format!(
                "resnet18 produces 512-d features, config asks for {}",
                self.output_dim
            )));
        }
        Ok(())
    }
}

/// Default channel plan of the tiny conv trunk.
pub const TINY_CONV_WIDTHS: [usize; 4] = [8, 16, 32, 32];

fn group_count(channels: usize) -> usize {
    // channels are multiples of 8 in practice; fall back to instance norm
    if channels % 8 == 0 {
        8
    } else {
        channels
    }
}

/// Group-normalized conv trunk: stride-2 3x3 stages, global average pool,
/// a linear map to `output_dim`, and a feature-level batch norm. The conv
/// stages use per-sample statistics only; the single output norm uses
/// per-view batch statistics, which keeps the representation spread across
/// inputs (a cone-collapsed start starves the contrastive loss of its
/// repulsive signal). Widths are configurable so tests can build very small
/// variants with the same code path.
pub fn tiny_conv_trunk(widths: &[usize], output_dim: usize, rng: &mut ChaCha8Rng) -> Result<Stack> {
    if widths.is_empty() {
        return Err(Error::Config("tiny_conv needs at least one stage".to_string()));
    }
    let mut layers = Vec::new();
    let mut in_ch = 3;
    for (i, &ch) in widths.iter().enumerate() {
        let stride = if i == 0 { 1 } else { 2 };
        layers.push(Layer::Conv(Conv2d::init(in_ch, ch, 3, stride, 1, rng)));
        layers.push(Layer::Gn(GroupNorm::init(ch, group_count(ch))?));
        layers.push(Layer::Relu);
        in_ch = ch;
    }
    layers.push(Layer::Gap);
    layers.push(Layer::Linear(Linear::init(in_ch, output_dim, rng)));
    layers.push(Layer::Bn(BatchNorm::init(output_dim)));
    Ok(Stack::new(layers))
}

fn basic_block(in_ch: usize, out_ch: usize, stride: usize, rng: &mut ChaCha8Rng) -> Residual {
    let main = Stack::new(vec![
        Layer::Conv(Conv2d::init(in_ch, out_ch, 3, stride, 1, rng)),
        Layer::Bn(BatchNorm::init(out_ch)),
        Layer::Relu,
        Layer::Conv(Conv2d::init(out_ch, out_ch, 3, 1, 1, rng)),
        Layer::Bn(BatchNorm::init(out_ch)),
    ]);
    let shortcut = if stride != 1 || in_ch != out_ch {
        Some(Stack::new(vec![
            Layer::Conv(Conv2d::init(in_ch, out_ch, 1, stride, 0, rng)),
            Layer::Bn(BatchNorm::init(out_ch)),
        ]))
    } else {
        None
    };
    Residual { main, shortcut }
}

/// Standard 18-layer residual trunk (batch-normalized), ending in a global
/// average pool over 512 channels.
pub fn resnet18_trunk(rng: &mut ChaCha8Rng) -> Stack {
    let mut layers = vec![
        Layer::Conv(Conv2d::init(3, 64, 7, 2, 3, rng)),
        Layer::Bn(BatchNorm::init(64)),
        Layer::Relu,
        Layer::MaxPool(MaxPool { kernel: 3, stride: 2, pad: 1 }),
    ];
    let plan = [(64usize, 1usize), (128, 2), (256, 2), (512, 2)];
    let mut in_ch = 64;
    for (out_ch, stride) in plan {
        layers.push(Layer::Residual(basic_block(in_ch, out_ch, stride, rng)));
        layers.push(Layer::Residual(basic_block(out_ch, out_ch, 1, rng)));
        in_ch = out_ch;
    }
    layers.push(Layer::Gap);
    Stack::new(layers)
}

fn projection_head(cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Stack {
    if cfg.projection_mlp {
        Stack::new(vec![
            Layer::Linear(Linear::init(cfg.output_dim, cfg.output_dim, rng)),
            Layer::Relu,
            Layer::Linear(Linear::init(cfg.output_dim, cfg.projection_dim, rng)),
        ])
    } else {
        Stack::new(vec![Layer::Linear(Linear::init(cfg.output_dim, cfg.projection_dim, rng))])
    }
}

/// A trunk plus projection head. Trunk output (`[b, output_dim]`) feeds
/// stage 2; projection output feeds the contrastive loss.
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub trunk: Stack,
    pub proj: Stack,
}

impl Encoder {
    pub fn init(cfg: &EncoderConfig, key: StreamKey) -> Result<Encoder> {
        cfg.validate()?;
        let mut rng = key.rng();
        let trunk = match cfg.backbone {
            Backbone::TinyConv => tiny_conv_trunk(&TINY_CONV_WIDTHS, cfg.output_dim, &mut rng)?,
            Backbone::Resnet18 => resnet18_trunk(&mut rng),
        };
        let proj = projection_head(cfg, &mut rng);
        Ok(Encoder { cfg: cfg.clone(), trunk, proj })
    }

    /// Deep copy (weights and buffers).
    pub fn clone_weights(&self) -> Encoder {
        let mut rng = StreamKey::new(0).rng();
        let trunk = match self.cfg.backbone {
            Backbone::TinyConv => {
                tiny_conv_trunk(&TINY_CONV_WIDTHS, self.cfg.output_dim, &mut rng).unwrap()
            }
            Backbone::Resnet18 => resnet18_trunk(&mut rng),
        };
        let proj = projection_head(&self.cfg, &mut rng);
        let mut out = Encoder { cfg: self.cfg.clone(), trunk, proj };
        out.trunk.copy_from(&self.trunk).expect("same architecture");
        out.proj.copy_from(&self.proj).expect("same architecture");
        out
    }

    /// Trunk features in eval mode (deterministic, no state updates).
    pub fn features_eval(&self, x: Feat) -> Feat {
        self.trunk.forward_eval(x)
    }

    /// Trunk + projection in eval mode.
    pub fn project_eval(&self, x: Feat) -> Feat {
        let f = self.trunk.forward_eval(x);
        self.proj.forward_eval(f)
    }

    /// Trunk + projection in train mode, caching for backprop.
    pub fn project_train(
        &mut self,
        x: Feat,
        rng: &mut ChaCha8Rng,
        update_buffers: bool,
    ) -> (Feat, Vec<Cache>, Vec<Cache>) {
        let (f, trunk_caches) = self.trunk.forward_train(x, rng, update_buffers);
        let (p, proj_caches) = self.proj.forward_train(f, rng, update_buffers);
        (p, trunk_caches, proj_caches)
    }

    /// Backprop `dproj` through head and trunk; gradients align with
    /// `params()` order (trunk first, then projection).
    pub fn backward(
        &self,
        trunk_caches: &[Cache],
        proj_caches: &[Cache],
        dproj: Feat,
        grads: &mut [Tensor],
    ) {
        let nt = self.trunk.n_params();
        let dfeat = self.proj.backward(proj_caches, dproj, &mut grads[nt..]);
        self.trunk.backward(trunk_caches, dfeat, &mut grads[..nt]);
    }

    pub fn n_params(&self) -> usize {
        self.trunk.n_params() + self.proj.n_params()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.trunk.params();
        p.extend(self.proj.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.trunk.params_mut();
        p.extend(self.proj.params_mut());
        p
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params().iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    /// Structural identity check (same shapes in the same order).
    pub fn same_structure(&self, other: &Encoder) -> bool {
        let a = self.params();
        let b = other.params();
        a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.shape() == y.shape())
    }

    /// Max |a - b| over all parameters.
    pub fn max_param_diff(&self, other: &Encoder) -> Result<f64> {
        if !self.same_structure(other) {
            return Err(Error::Contract("encoder structure mismatch".to_string()));
        }
        let mut m = 0.0f64;
        for (a, b) in self.params().iter().zip(other.params().iter()) {
            let d = a.max_abs_diff(b)?;
            if d > m {
                m = d;
            }
        }
        Ok(m)
    }

    /// Order-stable FNV digest of all parameter bytes; cheap identity check
    /// for frozen-weight assertions.
    pub fn weights_digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params() {
            for v in p.data() {
                for b in v.to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Stable names for parameter tensors, aligned with `params()`.
    pub fn param_names(&self) -> Vec<String> {
        (0..self.n_params())
            .map(|i| {
                let nt = self.trunk.n_params();
                if i < nt {
                    format!("trunk.{i}")
                } else {
                    format!("proj.{}", i - nt)
                }
            })
            .collect()
    }
}

impl crate::nn::ParamAccess for Encoder {
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

/// Dropout-regularized MLP classifier over flat vectors, ending in `n_out`
/// logits.
pub fn mlp_classifier(
    input_dim: usize,
    hidden_dims: &[usize],
    dropout: f64,
    n_out: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Stack> {
    if input_dim == 0 || n_out == 0 {
        return Err(Error::Config("classifier dims must be positive".to_string()));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::Config(format!("dropout {dropout} outside [0,1)")));
    }
    let mut layers = Vec::new();
    let mut in_dim = input_dim;
    for &h in hidden_dims {
        if h == 0 {
            return Err(Error::Config("hidden dims must be positive".to_string()));
        }
        layers.push(Layer::Linear(Linear::init(in_dim, h, rng)));
        layers.push(Layer::Relu);
        if dropout > 0.0 {
            layers.push(Layer::Dropout(Dropout { p: dropout }));
        }
        in_dim = h;
    }
    layers.push(Layer::Linear(Linear::init(in_dim, n_out, rng)));
    Ok(Stack::new(layers))
}
