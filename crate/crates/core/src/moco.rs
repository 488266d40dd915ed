//! Stage-1 trainer: momentum-contrast pretraining of the patch encoder.
//!
//! A query encoder is trained by gradient descent on the InfoNCE objective;
//! a key encoder follows it by exponential moving average and never sees a
//! gradient. Keys from past batches wait in a fixed-size FIFO queue and act
//! as negatives. The encoder checkpoint is the weights at the epoch with the
//! lowest mean training loss; validation data is never touched here.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::augment::{two_view_augment, AugmentConfig};
use crate::data::PatchSet;
use crate::error::{Error, Result};
use crate::nn::{Encoder, EncoderConfig, Feat, SgdMomentum};
use crate::rng::{shuffle, StreamKey};
use crate::tensor::{l2_norm, mm, Tensor};

/// Stage-1 hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Config {
    /// Negative-key queue length; must be a multiple of `batch_size`.
    pub queue_size: usize,
    /// Key-encoder momentum coefficient in [0,1].
    pub momentum: f64,
    /// InfoNCE temperature, > 0.
    pub temperature: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            queue_size: 4096,
            momentum: 0.999,
            temperature: 0.2,
            batch_size: 64,
            epochs: 100,
            base_lr: 0.03,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".to_string()));
        }
        if self.queue_size == 0 || self.queue_size % self.batch_size != 0 {
            return Err(Error::Config(format!(
                "queue_size {} must be a positive multiple of batch_size {}",
                self.queue_size, self.batch_size
            )));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0,1]", self.momentum)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// Full training state: both encoders, the negative queue, and the optimizer
/// driving the query side.
pub struct MoCoState {
    pub query: Encoder,
    pub key: Encoder,
    /// `[queue_size, projection_dim]`, rows unit-norm.
    pub queue: Tensor,
    pub queue_ptr: usize,
    pub cfg: Stage1Config,
    pub step: usize,
    opt: SgdMomentum,
}

/// Initialize training state: the key encoder starts as an exact copy of the
/// query encoder, and the queue holds random unit vectors.
pub fn init_moco(enc: &EncoderConfig, cfg: &Stage1Config) -> Result<MoCoState> {
    cfg.validate()?;
    let root = StreamKey::new(cfg.seed);
    let query = Encoder::init(enc, root.child_str("encoder_init"))?;
    let key = query.clone_weights();
    let mut queue_rng = root.child_str("queue_init").rng();
    let d = enc.projection_dim;
    let mut rows = vec![0.0; cfg.queue_size * d];
    for r in rows.chunks_exact_mut(d) {
        for v in r.iter_mut() {
            *v = crate::rng::normal(&mut queue_rng);
        }
        crate::tensor::l2_normalize(r);
    }
    let queue = Tensor::from_vec(&[cfg.queue_size, d], rows)?;
    let opt = SgdMomentum::new(&query.params(), 0.9, cfg.weight_decay);
    Ok(MoCoState {
        query,
        key,
        queue,
        queue_ptr: 0,
        cfg: cfg.clone(),
        step: 0,
        opt,
    })
}

fn check_unit_rows(rows: &[f64], d: usize, what: &str, tol: f64) -> Result<()> {
    for (i, r) in rows.chunks_exact(d).enumerate() {
        let n = l2_norm(r);
        if (n - 1.0).abs() > tol {
            return Err(Error::Contract(format!(
                "{what} row {i} has norm {n}, expected unit"
            )));
        }
    }
    Ok(())
}

/// InfoNCE loss: softmax cross-entropy over logits `[q.k+, q.queue]/tau`
/// with the positive at index 0, averaged over the batch. All inputs must be
/// unit-norm rows.
pub fn infonce_loss(q: &Feat, k_pos: &Feat, queue: &Tensor, tau: f64) -> Result<f64> {
    Ok(infonce_forward(q, k_pos, queue, tau)?.0)
}

/// Loss plus gradient w.r.t. the (normalized) query rows.
pub fn infonce_loss_and_grad(
    q: &Feat,
    k_pos: &Feat,
    queue: &Tensor,
    tau: f64,
) -> Result<(f64, Feat)> {
    let (loss, mut probs, b, d, kn) = infonce_forward(q, k_pos, queue, tau)?;
    // dlogits = (softmax - onehot_0) / B
    for row in probs.chunks_exact_mut(kn + 1) {
        row[0] -= 1.0;
        for v in row.iter_mut() {
            *v /= b as f64;
        }
    }
    // dq_i = (dlogit_0 * k_i + dlogits[1..] . queue) / tau
    let mut dq = Feat::new(b, d, 1, 1);
    let mut dq_neg = vec![0.0; b * d];
    let dl_neg: Vec<f64> = probs
        .chunks_exact(kn + 1)
        .flat_map(|row| row[1..].iter().copied())
        .collect();
    mm(&dl_neg, queue.data(), b, kn, d, &mut dq_neg);
    for i in 0..b {
        let dl0 = probs[i * (kn + 1)];
        let krow = &k_pos.data[i * d..(i + 1) * d];
        for j in 0..d {
            dq.data[i * d + j] = (dl0 * krow[j] + dq_neg[i * d + j]) / tau;
        }
    }
    Ok((loss, dq))
}

/// Shared forward pass; returns (loss, softmax rows, b, d, queue_len).
fn infonce_forward(
    q: &Feat,
    k_pos: &Feat,
    queue: &Tensor,
    tau: f64,
) -> Result<(f64, Vec<f64>, usize, usize, usize)> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("temperature {tau} must be positive")));
    }
    let (b, d) = (q.b, q.c);
    if k_pos.b != b || k_pos.c != d || q.plane() != 1 || k_pos.plane() != 1 {
        return Err(Error::Contract("query/key batches must match as [b, d]".to_string()));
    }
    if queue.shape().len() != 2 || queue.shape()[1] != d {
        return Err(Error::Contract("queue must be [k, d]".to_string()));
    }
    const NORM_TOL: f64 = 1e-3;
    check_unit_rows(&q.data, d, "query", NORM_TOL)?;
    check_unit_rows(&k_pos.data, d, "key", NORM_TOL)?;
    check_unit_rows(queue.data(), d, "queue", NORM_TOL)?;
    let kn = queue.shape()[0];

    // logits: positive, then negatives from the queue
    let mut logits = vec![0.0; b * (kn + 1)];
    let mut neg = vec![0.0; b * kn];
    crate::tensor::mm_nt(&q.data, queue.data(), b, d, kn, &mut neg);
    for i in 0..b {
        let qrow = &q.data[i * d..(i + 1) * d];
        let krow = &k_pos.data[i * d..(i + 1) * d];
        logits[i * (kn + 1)] = crate::tensor::dot(qrow, krow) / tau;
        for j in 0..kn {
            logits[i * (kn + 1) + 1 + j] = neg[i * kn + j] / tau;
        }
    }
    // stable log-softmax at index 0, averaged
    let mut loss = 0.0;
    let mut probs = logits;
    for row in probs.chunks_exact_mut(kn + 1) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            z += *v;
        }
        loss += -libm::log(row[0] / z);
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    loss /= b as f64;
    if !loss.is_finite() {
        return Err(Error::Training("InfoNCE loss is not finite".to_string()));
    }
    Ok((loss, probs, b, d, kn))
}

/// Key-encoder update: `theta_k <- m*theta_k + (1-m)*theta_q`, elementwise
/// over parameters. The query encoder is untouched; normalization buffers
/// are not mixed (each encoder keeps its own).
pub fn momentum_update(query: &Encoder, key: &mut Encoder, m: f64) -> Result<()> {
    if !query.same_structure(key) {
        return Err(Error::Contract("encoders differ in structure".to_string()));
    }
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::Domain(format!("momentum {m} outside [0,1]")));
    }
    let qp = query.params();
    let mut kp = key.params_mut();
    for (k, q) in kp.iter_mut().zip(qp.iter()) {
        let kd = k.data_mut();
        let qd = q.data();
        for i in 0..kd.len() {
            kd[i] = m * kd[i] + (1.0 - m) * qd[i];
        }
    }
    Ok(())
}

impl MoCoState {
    /// Overwrite queue rows `[ptr, ptr+b)` modulo the queue length with the
    /// given unit-norm keys and advance the pointer.
    pub fn enqueue(&mut self, keys: &Feat) -> Result<()> {
        let d = self.queue.shape()[1];
        let kn = self.queue.shape()[0];
        if keys.c != d || keys.plane() != 1 {
            return Err(Error::Contract("keys must be [b, d] matching the queue".to_string()));
        }
        if keys.b > kn {
            return Err(Error::Contract(format!(
                "cannot enqueue {} keys into a queue of {kn}",
                keys.b
            )));
        }
        check_unit_rows(&keys.data, d, "enqueued keys", 1e-3)?;
        let qd = self.queue.data_mut();
        for i in 0..keys.b {
            let row = (self.queue_ptr + i) % kn;
            qd[row * d..(row + 1) * d].copy_from_slice(&keys.data[i * d..(i + 1) * d]);
        }
        self.queue_ptr = (self.queue_ptr + keys.b) % kn;
        Ok(())
    }
}

/// Cosine annealing: `0.5 * base * (1 + cos(pi * epoch / total))`.
pub fn cosine_lr(step_epoch: usize, total_epochs: usize, base_lr: f64) -> Result<f64> {
    if total_epochs == 0 {
        return Err(Error::Domain("total_epochs must be positive".to_string()));
    }
    if step_epoch > total_epochs {
        return Err(Error::Domain(format!(
            "epoch {step_epoch} beyond schedule end {total_epochs}"
        )));
    }
    let progress = step_epoch as f64 / total_epochs as f64;
    Ok(0.5 * base_lr * (1.0 + libm::cos(core::f64::consts::PI * progress)))
}

/// Normalize each row to unit length; returns the pre-normalization norms.
pub fn normalize_rows(feat: &mut Feat) -> Vec<f64> {
    let d = feat.c;
    feat.data
        .chunks_exact_mut(d)
        .map(crate::tensor::l2_normalize)
        .collect()
}

/// Query-side forward / loss / backward for one batch of query views against
/// fixed normalized keys and the current queue. Returns the loss and the
/// gradients of every query-encoder parameter (aligned with `params()`).
pub fn contrastive_grads(
    query: &mut Encoder,
    xq: Feat,
    keys: &Feat,
    queue: &Tensor,
    tau: f64,
    layer_rng: &mut rand_chacha::ChaCha8Rng,
    update_buffers: bool,
) -> Result<(f64, Vec<Tensor>)> {
    let (mut q, trunk_caches, proj_caches) = query.project_train(xq, layer_rng, update_buffers);
    let q_norms = normalize_rows(&mut q);
    let (loss, dqn) = infonce_loss_and_grad(&q, keys, queue, tau)?;

    // back through row normalization: dx = (dy - y*(y.dy)) / ||x||
    let d = q.c;
    let mut dproj = Feat::new(q.b, d, 1, 1);
    for i in 0..q.b {
        let y = &q.data[i * d..(i + 1) * d];
        let dy = &dqn.data[i * d..(i + 1) * d];
        let ydy = crate::tensor::dot(y, dy);
        let inv = 1.0 / q_norms[i].max(1e-12);
        for j in 0..d {
            dproj.data[i * d + j] = (dy[j] - y[j] * ydy) * inv;
        }
    }
    let mut grads = query.zero_grads();
    query.backward(&trunk_caches, &proj_caches, dproj, &mut grads);
    Ok((loss, grads))
}

/// One optimization step over a batch of rasters. Effects, in order: forward
/// both views, loss, gradient step on the query encoder only, momentum
/// update, enqueue the new keys. Returns the pre-step loss.
pub fn train_step(
    state: &mut MoCoState,
    batch: &[&crate::raster::Raster],
    aug: &AugmentConfig,
    lr: f64,
    draw: StreamKey,
) -> Result<f64> {
    if batch.len() != state.cfg.batch_size {
        return Err(Error::Contract(format!(
            "batch of {} patches, config says {}",
            batch.len(),
            state.cfg.batch_size
        )));
    }
    let mut views_q = Vec::with_capacity(batch.len());
    let mut views_k = Vec::with_capacity(batch.len());
    for (i, raster) in batch.iter().enumerate() {
        let (vq, vk) = two_view_augment(raster, aug, draw.child(i as u64))?;
        views_q.push(vq);
        views_k.push(vk);
    }
    let xq = Feat::from_views(&views_q)?;
    let xk = Feat::from_views(&views_k)?;

    // Key path first: no gradients, train-mode statistics, own buffers.
    let mut layer_rng = draw.child_str("layers").rng();
    let (mut k, _, _) = state.key.project_train(xk, &mut layer_rng, true);
    normalize_rows(&mut k);

    let (loss, grads) = contrastive_grads(
        &mut state.query,
        xq,
        &k,
        &state.queue,
        state.cfg.temperature,
        &mut layer_rng,
        true,
    )
    .map_err(|e| match e {
        Error::Training(msg) => Error::Training(format!("{msg} at step {}", state.step)),
        other => other,
    })?;
    state
        .opt
        .step(&mut state.query.params_mut(), &grads, lr)?;

    momentum_update(&state.query, &mut state.key, state.cfg.momentum)?;
    state.enqueue(&k)?;
    state.step += 1;
    Ok(loss)
}

/// Output of a full stage-1 run.
pub struct Stage1Output {
    /// Query-encoder weights at the epoch with minimum mean training loss.
    pub encoder: Encoder,
    /// Mean InfoNCE loss per epoch.
    pub loss_curve: Vec<f64>,
    pub best_epoch: usize,
}

/// Train the encoder over the train-split patches. Batches are reshuffled
/// each epoch from the config seed; partial trailing batches are dropped.
pub fn train_moco(
    patches: &PatchSet,
    enc: &EncoderConfig,
    cfg: &Stage1Config,
    aug: &AugmentConfig,
) -> Result<Stage1Output> {
    cfg.validate()?;
    aug.validate()?;
    if patches.len() < cfg.batch_size {
        return Err(Error::Config(format!(
            "dataset has {} patches, smaller than batch size {}",
            patches.len(),
            cfg.batch_size
        )));
    }
    let mut state = init_moco(enc, cfg)?;
    let root = StreamKey::new(cfg.seed);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Encoder)> = None;
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.base_lr)?;
        let mut order: Vec<usize> = (0..patches.len()).collect();
        shuffle(&mut order, &mut root.child_str("order").child(epoch as u64).rng());
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for (bi, chunk) in order.chunks_exact(cfg.batch_size).enumerate() {
            let batch: Vec<&crate::raster::Raster> =
                chunk.iter().map(|&i| &patches.items[i].raster).collect();
            let draw = root
                .child_str("aug")
                .child(epoch as u64)
                .child(bi as u64);
            epoch_loss += train_step(&mut state, &batch, aug, lr, draw)?;
            n_batches += 1;
        }
        let mean = epoch_loss / n_batches as f64;
        curve.push(mean);
        if best.as_ref().map_or(true, |(_, b, _)| mean < *b) {
            best = Some((epoch, mean, state.query.clone_weights()));
        }
    }
    let (best_epoch, _, encoder) = best.expect("at least one epoch");
    Ok(Stage1Output { encoder, loss_curve: curve, best_epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Backbone;

    fn tiny_cfg() -> (EncoderConfig, Stage1Config) {
        let enc = EncoderConfig {
            backbone: Backbone::TinyConv,
            output_dim: 8,
            projection_dim: 4,
            projection_mlp: true,
        };
        let cfg = Stage1Config {
            queue_size: 8,
            momentum: 0.99,
            temperature: 0.2,
            batch_size: 2,
            epochs: 1,
            base_lr: 0.01,
            weight_decay: 1e-4,
            seed: 3,
        };
        (enc, cfg)
    }

    fn unit_feat(rows: &[&[f64]]) -> Feat {
        let d = rows[0].len();
        let mut data = Vec::new();
        for r in rows {
            let mut v = r.to_vec();
            crate::tensor::l2_normalize(&mut v);
            data.extend(v);
        }
        Feat::from_data(rows.len(), d, 1, 1, data).unwrap()
    }

    #[test]
    fn init_copies_query_to_key() {
        let (enc, cfg) = tiny_cfg();
        let state = init_moco(&enc, &cfg).unwrap();
        assert_eq!(state.query.max_param_diff(&state.key).unwrap(), 0.0);
        assert_eq!(state.queue_ptr, 0);
        for row in state.queue.data().chunks_exact(enc.projection_dim) {
            assert!((l2_norm(row) - 1.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let (enc, cfg) = tiny_cfg();
        let a = init_moco(&enc, &cfg).unwrap();
        let b = init_moco(&enc, &cfg).unwrap();
        assert_eq!(a.query.max_param_diff(&b.query).unwrap(), 0.0);
        assert_eq!(a.queue, b.queue);
    }

    #[test]
    fn init_rejects_misaligned_queue() {
        let (enc, mut cfg) = tiny_cfg();
        cfg.queue_size = 7;
        assert!(matches!(init_moco(&enc, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn infonce_hand_cases() {
        // q = k+, queue orthogonal, K = 2, tau = 1: logits (1,0,0)
        let q = unit_feat(&[&[1.0, 0.0, 0.0]]);
        let k = unit_feat(&[&[1.0, 0.0, 0.0]]);
        let queue = Tensor::from_vec(&[2, 3], vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let loss = infonce_loss(&q, &k, &queue, 1.0).unwrap();
        let e = core::f64::consts::E;
        let expect = -libm::log(e / (e + 2.0));
        assert!((loss - expect).abs() < 1e-12, "{loss} vs {expect}");

        // same geometry at tau = 0.5: logits (2,0,0)
        let loss = infonce_loss(&q, &k, &queue, 0.5).unwrap();
        let expect = -libm::log(libm::exp(2.0) / (libm::exp(2.0) + 2.0));
        assert!((loss - expect).abs() < 1e-12);
        assert!((loss - 0.2395).abs() < 5e-5);

        // q orthogonal to k+ and to all K = 3 queue rows: uniform logits
        let q = unit_feat(&[&[1.0, 0.0, 0.0, 0.0]]);
        let k = unit_feat(&[&[0.0, 1.0, 0.0, 0.0]]);
        let queue = Tensor::from_vec(
            &[3, 4],
            vec![
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                0.0, 1.0, 0.0, 0.0,
            ],
        )
        .unwrap();
        let loss = infonce_loss(&q, &k, &queue, 1.0).unwrap();
        assert!((loss - libm::log(4.0)).abs() < 1e-12, "ln 4 at uniform logits");
    }

    #[test]
    fn infonce_rejects_bad_inputs() {
        let q = unit_feat(&[&[1.0, 0.0]]);
        let k = unit_feat(&[&[0.0, 1.0]]);
        let queue = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            infonce_loss(&q, &k, &queue, 0.0),
            Err(Error::Domain(_))
        ));
        let bad = Feat::from_data(1, 2, 1, 1, vec![2.0, 0.0]).unwrap();
        assert!(matches!(
            infonce_loss(&bad, &k, &queue, 1.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn momentum_update_identities() {
        let (enc, cfg) = tiny_cfg();
        let mut state = init_moco(&enc, &cfg).unwrap();
        // push the query somewhere else
        for p in state.query.params_mut() {
            for v in p.data_mut() {
                *v += 0.5;
            }
        }
        let before_key = state.key.clone_weights();
        momentum_update(&state.query, &mut state.key, 1.0).unwrap();
        assert_eq!(state.key.max_param_diff(&before_key).unwrap(), 0.0, "m=1 is identity");
        momentum_update(&state.query, &mut state.key, 0.0).unwrap();
        assert_eq!(state.key.max_param_diff(&state.query).unwrap(), 0.0, "m=0 copies");
    }

    #[test]
    fn momentum_update_scalar_arithmetic() {
        // theta_k = 1, theta_q = 0, m = 0.999 -> 0.999
        let v = 0.999f64 * 1.0 + (1.0 - 0.999) * 0.0;
        assert!((v - 0.999).abs() < 1e-15);
    }

    /// Distinct unit vectors indexed by an angle tag.
    fn marker(tag: u64, d: usize) -> Vec<f64> {
        let a = tag as f64;
        let mut row = vec![0.0; d];
        row[0] = libm::cos(a);
        row[1] = libm::sin(a);
        row
    }

    #[test]
    fn enqueue_ring_positions() {
        let (enc, cfg) = tiny_cfg();
        let mut state = init_moco(&enc, &cfg).unwrap(); // K = 8
        let d = enc.projection_dim;
        // K=8, ptr=0, B=2 -> rows 0,1 replaced, ptr=2
        let keys = unit_feat(&[&marker(1, d), &marker(2, d)]);
        state.enqueue(&keys).unwrap();
        assert_eq!(state.queue_ptr, 2);
        assert_eq!(&state.queue.data()[..d], &keys.data[..d]);
        assert_eq!(&state.queue.data()[d..2 * d], &keys.data[d..2 * d]);

        // wraparound: ptr=7, B=2 -> rows 7 and 0, ptr=1
        state.queue_ptr = 7;
        let keys = unit_feat(&[&marker(3, d), &marker(4, d)]);
        state.enqueue(&keys).unwrap();
        assert_eq!(state.queue_ptr, 1);
        assert_eq!(&state.queue.data()[7 * d..8 * d], &keys.data[..d]);
        assert_eq!(&state.queue.data()[..d], &keys.data[d..2 * d]);
    }

    #[test]
    fn enqueue_full_cycle_returns_pointer() {
        let (enc, cfg) = tiny_cfg();
        let mut state = init_moco(&enc, &cfg).unwrap();
        let d = enc.projection_dim;
        let b = cfg.batch_size;
        let mut expected = Vec::new();
        for round in 0..(cfg.queue_size / b) {
            let rows: Vec<Vec<f64>> =
                (0..b).map(|i| marker((round * b + i) as u64, d)).collect();
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let keys = unit_feat(&refs);
            expected.extend_from_slice(&keys.data);
            state.enqueue(&keys).unwrap();
        }
        assert_eq!(state.queue_ptr, 0, "full cycle returns to start");
        assert_eq!(state.queue.data(), expected.as_slice(), "every row replaced exactly once");
    }

    #[test]
    fn enqueue_rejects_oversized_batches() {
        let (enc, cfg) = tiny_cfg();
        let mut state = init_moco(&enc, &cfg).unwrap();
        let rows: Vec<Vec<f64>> = (0..cfg.queue_size + 1)
            .map(|i| marker(i as u64, enc.projection_dim))
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        assert!(matches!(
            state.enqueue(&unit_feat(&refs)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(0, 10, 0.4).unwrap(), 0.4);
        assert!(cosine_lr(10, 10, 0.4).unwrap().abs() < 1e-16);
        assert!((cosine_lr(5, 10, 0.4).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(cosine_lr(0, 0, 0.4), Err(Error::Domain(_))));
    }
}
