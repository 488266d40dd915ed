//! Patch augmentation: the stochastic two-view transform for contrastive
//! training and the deterministic resize-normalize used everywhere else.
//!
//! The stochastic recipe is the usual contrastive one: random resized crop,
//! color jitter (applied with probability 0.8, random op order), random
//! grayscale, gaussian blur with kernel size 10% of the output side
//! (odd-rounded), horizontal flip, then channel normalization. All
//! randomness flows from an explicit [`StreamKey`], and the two views use
//! disjoint sub-streams.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rng::{shuffle, StreamKey};
use crate::tensor::Tensor;

/// Per-channel normalization statistics on the [0,1] pixel scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl ChannelStats {
    /// Common natural-image statistics.
    pub const NATURAL: ChannelStats = ChannelStats {
        mean: [0.485, 0.456, 0.406],
        std: [0.229, 0.224, 0.225],
    };

    /// Symmetric statistics for synthetic data.
    pub const SYMMETRIC: ChannelStats = ChannelStats {
        mean: [0.5, 0.5, 0.5],
        std: [0.5, 0.5, 0.5],
    };

    #[inline]
    pub fn normalize(&self, v: f64, c: usize) -> f64 {
        (v - self.mean[c]) / self.std[c]
    }

    #[inline]
    pub fn denormalize(&self, v: f64, c: usize) -> f64 {
        v * self.std[c] + self.mean[c]
    }
}

/// Configuration of the stochastic view transform.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Crop area range as a fraction of the source area, (lo, hi] of (0,1].
    pub crop_scale: (f64, f64),
    pub output_size: usize,
    /// Scales the jitter ranges: brightness/contrast/saturation 0.4*s,
    /// hue 0.1*s. Zero disables jitter entirely.
    pub jitter_strength: f64,
    pub grayscale_prob: f64,
    pub blur_prob: f64,
    pub hflip_prob: f64,
    pub stats: ChannelStats,
    pub seed: u64,
}

/// Probability that color jitter is applied at all when enabled.
const JITTER_APPLY_PROB: f64 = 0.8;

/// Aspect-ratio range of the random resized crop.
const CROP_RATIO: (f64, f64) = (3.0 / 4.0, 4.0 / 3.0);

const BLUR_SIGMA: (f64, f64) = (0.1, 2.0);

impl AugmentConfig {
    /// Contrastive-training defaults for a given output size.
    pub fn contrastive(output_size: usize, stats: ChannelStats, seed: u64) -> Self {
        AugmentConfig {
            crop_scale: (0.2, 1.0),
            output_size,
            jitter_strength: 1.0,
            grayscale_prob: 0.2,
            blur_prob: 0.5,
            hflip_prob: 0.5,
            stats,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.crop_scale;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!(
                "crop_scale [{lo},{hi}] must satisfy 0 < lo <= hi <= 1"
            )));
        }
        if self.output_size == 0 {
            return Err(Error::Config("output_size must be positive".to_string()));
        }
        if !(self.jitter_strength >= 0.0) {
            return Err(Error::Config("jitter_strength must be >= 0".to_string()));
        }
        for (name, p) in [
            ("grayscale_prob", self.grayscale_prob),
            ("blur_prob", self.blur_prob),
            ("hflip_prob", self.hflip_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} outside [0,1]")));
            }
        }
        if self.stats.std.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config("channel std must be positive".to_string()));
        }
        Ok(())
    }
}

/// CHW f64 image on the [0,1] scale (before normalization).
struct Planes {
    size: usize,
    data: Vec<f64>, // 3 * size * size
}

impl Planes {
    #[inline]
    fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.size + y) * self.size + x]
    }

    #[inline]
    fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(c * self.size + y) * self.size + x]
    }
}

/// Blur kernel side: 10% of the output side, rounded to the nearest odd.
pub fn blur_kernel_size(output_size: usize) -> usize {
    let k = libm::round(0.1 * output_size as f64) as usize;
    if k % 2 == 0 {
        k + 1
    } else {
        k.max(1)
    }
}

/// Two independently augmented views of one patch. Identical
/// `(patch, config, draw)` triples reproduce identical views.
pub fn two_view_augment(
    patch: &Raster,
    config: &AugmentConfig,
    draw: StreamKey,
) -> Result<(Tensor, Tensor)> {
    config.validate()?;
    let q = augment_one(patch, config, &mut draw.child(0).rng())?;
    let k = augment_one(patch, config, &mut draw.child(1).rng())?;
    Ok((q, k))
}

/// Deterministic resize + normalization (the inference path).
pub fn eval_transform(patch: &Raster, output_size: usize, stats: &ChannelStats) -> Result<Tensor> {
    if output_size == 0 {
        return Err(Error::Config("output_size must be positive".to_string()));
    }
    let planes = resample(patch, 0.0, 0.0, patch.width() as f64, patch.height() as f64, output_size);
    Ok(normalize(planes, stats))
}

fn augment_one(patch: &Raster, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let (x0, y0, cw, ch) = sample_crop(patch, cfg, rng);
    let mut planes = resample(patch, x0, y0, cw, ch, cfg.output_size);

    if cfg.jitter_strength > 0.0 && rng.gen::<f64>() < JITTER_APPLY_PROB {
        apply_jitter(&mut planes, cfg.jitter_strength, rng);
    }
    if cfg.grayscale_prob > 0.0 && rng.gen::<f64>() < cfg.grayscale_prob {
        to_grayscale(&mut planes);
    }
    if cfg.blur_prob > 0.0 && rng.gen::<f64>() < cfg.blur_prob {
        let sigma = rng.gen_range(BLUR_SIGMA.0..BLUR_SIGMA.1);
        gaussian_blur(&mut planes, blur_kernel_size(cfg.output_size), sigma);
    }
    if cfg.hflip_prob > 0.0 && rng.gen::<f64>() < cfg.hflip_prob {
        hflip(&mut planes);
    }
    Ok(normalize(planes, &cfg.stats))
}

/// Sample a crop rectangle: up to 10 attempts at (area scale, aspect ratio),
/// then a centered aspect-clamped fallback. Returned geometry is in source
/// pixels, offsets integral, sides >= 1.
fn sample_crop(patch: &Raster, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> (f64, f64, f64, f64) {
    let (w, h) = (patch.width(), patch.height());
    let area = (w * h) as f64;
    let (lo, hi) = cfg.crop_scale;
    for _ in 0..10 {
        let target = area * rng.gen_range(lo..=hi);
        let log_ratio = rng.gen_range(libm::log(CROP_RATIO.0)..libm::log(CROP_RATIO.1));
        let ratio = libm::exp(log_ratio);
        let cw = libm::round(libm::sqrt(target * ratio)) as usize;
        let ch = libm::round(libm::sqrt(target / ratio)) as usize;
        if cw >= 1 && ch >= 1 && cw <= w && ch <= h {
            let x0 = rng.gen_range(0..=w - cw);
            let y0 = rng.gen_range(0..=h - ch);
            return (x0 as f64, y0 as f64, cw as f64, ch as f64);
        }
    }
    // fallback: central crop with aspect clamped into range
    let in_ratio = w as f64 / h as f64;
    let (cw, ch) = if in_ratio < CROP_RATIO.0 {
        let cw = w;
        let ch = (libm::round(w as f64 / CROP_RATIO.0) as usize).min(h).max(1);
        (cw, ch)
    } else if in_ratio > CROP_RATIO.1 {
        let ch = h;
        let cw = (libm::round(h as f64 * CROP_RATIO.1) as usize).min(w).max(1);
        (cw, ch)
    } else {
        (w, h)
    };
    let x0 = (w - cw) / 2;
    let y0 = (h - ch) / 2;
    (x0 as f64, y0 as f64, cw as f64, ch as f64)
}

/// Bilinear resample of the crop rect to `out x out` (half-pixel centers).
fn resample(patch: &Raster, x0: f64, y0: f64, cw: f64, ch: f64, out: usize) -> Planes {
    let mut planes = Planes { size: out, data: vec![0.0; 3 * out * out] };
    let sx = cw / out as f64;
    let sy = ch / out as f64;
    for oy in 0..out {
        let fy = y0 + (oy as f64 + 0.5) * sy - 0.5;
        let fy0 = libm::floor(fy);
        let wy = fy - fy0;
        for ox in 0..out {
            let fx = x0 + (ox as f64 + 0.5) * sx - 0.5;
            let fx0 = libm::floor(fx);
            let wx = fx - fx0;
            let (ix, iy) = (fx0 as isize, fy0 as isize);
            for c in 0..3 {
                let v00 = patch.sample_clamped(ix, iy, c);
                let v10 = patch.sample_clamped(ix + 1, iy, c);
                let v01 = patch.sample_clamped(ix, iy + 1, c);
                let v11 = patch.sample_clamped(ix + 1, iy + 1, c);
                let top = v00 + (v10 - v00) * wx;
                let bot = v01 + (v11 - v01) * wx;
                *planes.at_mut(c, oy, ox) = top + (bot - top) * wy;
            }
        }
    }
    planes
}

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Euclidean remainder without std float methods.
fn fmod_pos(a: f64, b: f64) -> f64 {
    a - b * libm::floor(a / b)
}

fn luma_at(p: &Planes, y: usize, x: usize) -> f64 {
    LUMA[0] * p.at(0, y, x) + LUMA[1] * p.at(1, y, x) + LUMA[2] * p.at(2, y, x)
}

fn apply_jitter(p: &mut Planes, strength: f64, rng: &mut ChaCha8Rng) {
    let span = 0.4 * strength;
    let hue_span = 0.1 * strength;
    let brightness = rng.gen_range((1.0 - span).max(0.0)..=1.0 + span);
    let contrast = rng.gen_range((1.0 - span).max(0.0)..=1.0 + span);
    let saturation = rng.gen_range((1.0 - span).max(0.0)..=1.0 + span);
    let hue = rng.gen_range(-hue_span..=hue_span);
    let mut order = [0usize, 1, 2, 3];
    shuffle(&mut order, rng);
    for op in order {
        match op {
            0 => scale_clamp(p, |_, v, _| v * brightness),
            1 => {
                let n = p.size * p.size;
                let mut mean = 0.0;
                for y in 0..p.size {
                    for x in 0..p.size {
                        mean += luma_at(p, y, x);
                    }
                }
                mean /= n as f64;
                scale_clamp(p, |_, v, _| mean + (v - mean) * contrast);
            }
            2 => {
                let size = p.size;
                for y in 0..size {
                    for x in 0..size {
                        let g = luma_at(p, y, x);
                        for c in 0..3 {
                            let v = g + (p.at(c, y, x) - g) * saturation;
                            *p.at_mut(c, y, x) = v.clamp(0.0, 1.0);
                        }
                    }
                }
            }
            _ => shift_hue(p, hue),
        }
    }
}

fn scale_clamp<F: Fn(usize, f64, (usize, usize)) -> f64>(p: &mut Planes, f: F) {
    let size = p.size;
    for c in 0..3 {
        for y in 0..size {
            for x in 0..size {
                let v = f(c, p.at(c, y, x), (y, x));
                *p.at_mut(c, y, x) = v.clamp(0.0, 1.0);
            }
        }
    }
}

/// Rotate hue by `shift` turns (shift in [-0.5, 0.5]) via RGB<->HSV.
fn shift_hue(p: &mut Planes, shift: f64) {
    if shift == 0.0 {
        return;
    }
    let size = p.size;
    for y in 0..size {
        for x in 0..size {
            let (r, g, b) = (p.at(0, y, x), p.at(1, y, x), p.at(2, y, x));
            let max = r.max(g).max(b);
            let min = r.min(g).min(b);
            let delta = max - min;
            let mut h = if delta == 0.0 {
                0.0
            } else if max == r {
                fmod_pos((g - b) / delta, 6.0)
            } else if max == g {
                (b - r) / delta + 2.0
            } else {
                (r - g) / delta + 4.0
            } / 6.0;
            let s = if max == 0.0 { 0.0 } else { delta / max };
            let v = max;
            h = fmod_pos(h + shift, 1.0);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            *p.at_mut(0, y, x) = r2;
            *p.at_mut(1, y, x) = g2;
            *p.at_mut(2, y, x) = b2;
        }
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h * 6.0;
    let i = libm::floor(h6) as i64 % 6;
    let f = h6 - libm::floor(h6);
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

fn to_grayscale(p: &mut Planes) {
    let size = p.size;
    for y in 0..size {
        for x in 0..size {
            let g = luma_at(p, y, x);
            for c in 0..3 {
                *p.at_mut(c, y, x) = g;
            }
        }
    }
}

/// Separable gaussian blur with clamp-to-edge borders.
fn gaussian_blur(p: &mut Planes, kernel: usize, sigma: f64) {
    if kernel <= 1 {
        return;
    }
    let half = (kernel / 2) as isize;
    let mut weights = Vec::with_capacity(kernel);
    let mut total = 0.0;
    for i in -half..=half {
        let w = libm::exp(-(i as f64 * i as f64) / (2.0 * sigma * sigma));
        weights.push(w);
        total += w;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    let size = p.size as isize;
    let mut tmp = vec![0.0; p.data.len()];
    // horizontal
    for c in 0..3 {
        for y in 0..p.size {
            for x in 0..size {
                let mut acc = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    let sx = (x + k as isize - half).clamp(0, size - 1) as usize;
                    acc += w * p.at(c, y, sx);
                }
                tmp[(c * p.size + y) * p.size + x as usize] = acc;
            }
        }
    }
    // vertical
    for c in 0..3 {
        for y in 0..size {
            for x in 0..p.size {
                let mut acc = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    let sy = (y + k as isize - half).clamp(0, size - 1) as usize;
                    acc += w * tmp[(c * p.size + sy as usize) * p.size + x];
                }
                *p.at_mut(c, y as usize, x) = acc;
            }
        }
    }
}

fn hflip(p: &mut Planes) {
    let size = p.size;
    for c in 0..3 {
        for y in 0..size {
            for x in 0..size / 2 {
                let a = p.at(c, y, x);
                let b = p.at(c, y, size - 1 - x);
                *p.at_mut(c, y, x) = b;
                *p.at_mut(c, y, size - 1 - x) = a;
            }
        }
    }
}

fn normalize(p: Planes, stats: &ChannelStats) -> Tensor {
    let size = p.size;
    let mut data = p.data;
    for c in 0..3 {
        for v in data[c * size * size..(c + 1) * size * size].iter_mut() {
            *v = stats.normalize(*v, c);
        }
    }
    Tensor::from_vec(&[3, size, size], data).expect("shape matches by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy_patch(size: usize, seed: u64) -> Raster {
        let mut rng = StreamKey::new(seed).rng();
        let data: Vec<u8> = (0..size * size * 3).map(|_| rng.gen()).collect();
        Raster::new(size, size, data).unwrap()
    }

    fn disabled_config(out: usize) -> AugmentConfig {
        AugmentConfig {
            crop_scale: (1.0, 1.0),
            output_size: out,
            jitter_strength: 0.0,
            grayscale_prob: 0.0,
            blur_prob: 0.0,
            hflip_prob: 0.0,
            stats: ChannelStats::SYMMETRIC,
            seed: 0,
        }
    }

    #[test]
    fn disabled_randomness_reduces_to_eval_transform() {
        let patch = noisy_patch(24, 3);
        let cfg = disabled_config(16);
        let (q, k) = two_view_augment(&patch, &cfg, StreamKey::new(5)).unwrap();
        let plain = eval_transform(&patch, 16, &cfg.stats).unwrap();
        assert_eq!(q, k);
        assert_eq!(q, plain);
    }

    #[test]
    fn same_draw_reproduces_views() {
        let patch = noisy_patch(32, 9);
        let cfg = AugmentConfig::contrastive(16, ChannelStats::SYMMETRIC, 0);
        let (q1, k1) = two_view_augment(&patch, &cfg, StreamKey::new(77)).unwrap();
        let (q2, k2) = two_view_augment(&patch, &cfg, StreamKey::new(77)).unwrap();
        assert_eq!(q1, q2);
        assert_eq!(k1, k2);
    }

    #[test]
    fn default_config_views_differ_every_draw() {
        let patch = noisy_patch(32, 1);
        let cfg = AugmentConfig::contrastive(16, ChannelStats::SYMMETRIC, 0);
        for trial in 0..1000 {
            let (q, k) = two_view_augment(&patch, &cfg, StreamKey::new(trial)).unwrap();
            let mad = q
                .data()
                .iter()
                .zip(k.data().iter())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / q.len() as f64;
            assert!(mad > 0.0, "draw {trial} produced identical views");
        }
    }

    #[test]
    fn eval_transform_is_deterministic_and_shaped() {
        let patch = noisy_patch(64, 4);
        let a = eval_transform(&patch, 24, &ChannelStats::NATURAL).unwrap();
        let b = eval_transform(&patch, 24, &ChannelStats::NATURAL).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), &[3, 24, 24]);
    }

    #[test]
    fn eval_transform_downsamples_large_input() {
        // 512 -> 224, mirroring the usual inference geometry
        let patch = Raster::filled(512, 512, [100, 100, 100]).unwrap();
        let t = eval_transform(&patch, 224, &ChannelStats::SYMMETRIC).unwrap();
        assert_eq!(t.shape(), &[3, 224, 224]);
    }

    #[test]
    fn constant_image_maps_to_affine_normalization() {
        let value = 200.0 / 255.0;
        let patch = Raster::filled(20, 20, [200, 200, 200]).unwrap();
        let stats = ChannelStats::NATURAL;
        let t = eval_transform(&patch, 10, &stats).unwrap();
        for c in 0..3 {
            let expect = (value - stats.mean[c]) / stats.std[c];
            for y in 0..10 {
                for x in 0..10 {
                    let got = t.data()[(c * 10 + y) * 10 + x];
                    assert!((got - expect).abs() < 1e-12);
                    // invertible for constant images
                    assert!((stats.denormalize(got, c) - value).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn upscaling_small_input_is_not_an_error() {
        let patch = noisy_patch(8, 2);
        let cfg = AugmentConfig { crop_scale: (1.0, 1.0), ..disabled_config(32) };
        let (q, _) = two_view_augment(&patch, &cfg, StreamKey::new(1)).unwrap();
        assert_eq!(q.shape(), &[3, 32, 32]);
    }

    #[test]
    fn blur_kernel_is_ten_percent_odd() {
        assert_eq!(blur_kernel_size(224), 23);
        assert_eq!(blur_kernel_size(32), 3);
        assert_eq!(blur_kernel_size(8), 1);
    }

    #[test]
    fn outputs_are_finite() {
        let patch = noisy_patch(32, 5);
        let cfg = AugmentConfig::contrastive(16, ChannelStats::NATURAL, 0);
        for s in 0..50 {
            let (q, k) = two_view_augment(&patch, &cfg, StreamKey::new(s)).unwrap();
            assert!(q.data().iter().all(|v| v.is_finite()));
            assert!(k.data().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = disabled_config(16);
        cfg.crop_scale = (0.0, 1.0);
        assert!(cfg.validate().is_err());
        let mut cfg = disabled_config(16);
        cfg.hflip_prob = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = disabled_config(16);
        cfg.crop_scale = (0.9, 0.2);
        assert!(cfg.validate().is_err());
    }
}
