//! Stage-2 group classifier and the per-patch supervised baseline.
//!
//! The group head is an MLP over concatenated embeddings; the encoder is
//! frozen upstream and never seen here — the head consumes vectors only.
//! The baseline trains the same backbone family end to end on individual
//! patches with inherited labels, giving the controlled comparison target.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::aggregate::{predict_patient, AggregationMethod, GroupPrediction, PatchProbability};
use crate::augment::{eval_transform, ChannelStats};
use crate::data::{Label, PatchSet};
use crate::embed::{make_groups, EmbeddingStore, GroupSample, GroupingPolicy};
use crate::error::{Error, Result};
use crate::moco::cosine_lr;
use crate::nn::{
    mlp_classifier, resnet18_trunk, tiny_conv_trunk, Backbone, EncoderConfig, Feat, Layer,
    Linear, SgdMomentum, Stack, TINY_CONV_WIDTHS,
};
use crate::rng::{shuffle, StreamKey};
use crate::tensor::Tensor;

/// Group-head hyperparameters. `input_dim` must equal
/// `group_size * output_dim` of the grouping policy in force.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub seed: u64,
}

impl HeadConfig {
    /// Default narrow funnel for a given input width.
    pub fn for_input(input_dim: usize) -> Self {
        HeadConfig {
            input_dim,
            hidden_dims: alloc::vec![512, 128],
            dropout: 0.25,
            epochs: 100,
            batch_size: 32,
            base_lr: 0.03,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("head input_dim must be positive".to_string()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("head epochs and batch_size must be positive".to_string()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        Ok(())
    }
}

/// Mean softmax cross-entropy over two-class logits, plus dlogits.
fn softmax_ce_grad(logits: &Feat, targets: &[usize]) -> (f64, Feat) {
    let b = logits.b;
    let c = logits.c;
    debug_assert_eq!(targets.len(), b);
    let mut loss = 0.0;
    let mut dl = Feat::new(b, c, 1, 1);
    for i in 0..b {
        let row = &logits.data[i * c..(i + 1) * c];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        let mut exps = alloc::vec![0.0; c];
        for (j, &l) in row.iter().enumerate() {
            exps[j] = libm::exp(l - max);
            z += exps[j];
        }
        loss += -libm::log(exps[targets[i]] / z);
        for j in 0..c {
            dl.data[i * c + j] = (exps[j] / z - if j == targets[i] { 1.0 } else { 0.0 })
                / b as f64;
        }
    }
    (loss / b as f64, dl)
}

/// Positive-class probability per row of two-class logits.
fn softmax_positive(logits: &Feat) -> Vec<f64> {
    let c = logits.c;
    debug_assert_eq!(c, 2);
    logits
        .data
        .chunks_exact(c)
        .map(|row| {
            let max = row[0].max(row[1]);
            let e0 = libm::exp(row[0] - max);
            let e1 = libm::exp(row[1] - max);
            e1 / (e0 + e1)
        })
        .collect()
}

fn class_index(label: Label) -> usize {
    match label {
        Label::Mss => 0,
        Label::Msi => 1,
    }
}

/// A trained group head with its per-epoch accuracy curves.
pub struct TrainedHead {
    pub net: Stack,
    pub cfg: HeadConfig,
    /// Per-epoch accuracy on that epoch's training groups (eval mode).
    pub train_acc: Vec<f64>,
    /// Per-epoch validation accuracy at group granularity (empty without a
    /// validation store).
    pub val_group_acc: Vec<f64>,
    /// Per-epoch validation accuracy at patient granularity.
    pub val_patient_acc: Vec<f64>,
}

/// Train the group-level MLP with cross-entropy on group labels. Groups are
/// re-formed each epoch through the policy (a no-op permutation when
/// shuffling is off). Validation, when provided, is scored every epoch with
/// deterministic grouping. Final weights are the last epoch's.
pub fn train_head(
    train_store: &EmbeddingStore,
    train_policy: &GroupingPolicy,
    val: Option<(&EmbeddingStore, &GroupingPolicy)>,
    cfg: &HeadConfig,
    threshold: f64,
) -> Result<TrainedHead> {
    cfg.validate()?;
    let expected = train_policy.group_size * train_store.dim;
    if cfg.input_dim != expected {
        return Err(Error::Contract(format!(
            "head input_dim {} but groups have length {expected}",
            cfg.input_dim
        )));
    }
    let root = StreamKey::new(cfg.seed);
    let mut init_rng = root.child_str("init").rng();
    let mut net = mlp_classifier(cfg.input_dim, &cfg.hidden_dims, cfg.dropout, 2, &mut init_rng)?;
    let mut opt = SgdMomentum::new(&net.params(), 0.9, 0.0);

    let val_groups = match val {
        Some((store, policy)) => {
            if policy.group_size * store.dim != cfg.input_dim {
                return Err(Error::Contract(
                    "validation grouping does not match head input".to_string(),
                ));
            }
            Some((make_groups(store, policy, 0)?, store.patient_labels()))
        }
        None => None,
    };

    let mut train_acc = Vec::with_capacity(cfg.epochs);
    let mut val_group_acc = Vec::new();
    let mut val_patient_acc = Vec::new();

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.base_lr)?;
        let outcome = make_groups(train_store, train_policy, epoch)?;
        let groups = outcome.groups;
        if groups.is_empty() {
            return Err(Error::Config("no training groups were formed".to_string()));
        }
        check_dims(&groups, cfg.input_dim)?;
        let mut order: Vec<usize> = (0..groups.len()).collect();
        shuffle(&mut order, &mut root.child_str("batches").child(epoch as u64).rng());
        let mut drop_rng = root.child_str("dropout").child(epoch as u64).rng();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&GroupSample> = chunk.iter().map(|&i| &groups[i]).collect();
            step_vectors(
                &mut net,
                &mut opt,
                batch.iter().map(|g| (g.vector.as_slice(), class_index(g.label))),
                cfg.input_dim,
                lr,
                &mut drop_rng,
            )?;
        }
        train_acc.push(vector_accuracy(
            &net,
            groups.iter().map(|g| (g.vector.as_slice(), g.label)),
            cfg.input_dim,
            threshold,
        )?);
        if let Some((val_outcome, val_labels)) = &val_groups {
            let preds = predict_groups(&net, &val_outcome.groups)?;
            let scored: Vec<(f64, Label)> = val_outcome
                .groups
                .iter()
                .zip(preds.iter())
                .map(|(g, p)| (p.p_msi, g.label))
                .collect();
            val_group_acc.push(crate::metrics::accuracy(&scored, threshold)?);
            let by_patient = group_probs_by_patient(&preds);
            let mut correct = 0usize;
            for (pid, probs) in &by_patient {
                let pred = predict_patient(pid, probs, threshold, AggregationMethod::MeanProb)?;
                if pred.decision == val_labels[pid] {
                    correct += 1;
                }
            }
            val_patient_acc.push(correct as f64 / by_patient.len() as f64);
        }
    }
    Ok(TrainedHead { net, cfg: cfg.clone(), train_acc, val_group_acc, val_patient_acc })
}

fn check_dims(groups: &[GroupSample], input_dim: usize) -> Result<()> {
    for g in groups {
        if g.vector.len() != input_dim {
            return Err(Error::Contract(format!(
                "group vector of length {} fed to head expecting {input_dim}",
                g.vector.len()
            )));
        }
    }
    Ok(())
}

/// One SGD step over a batch of flat vectors.
fn step_vectors<'a, I>(
    net: &mut Stack,
    opt: &mut SgdMomentum,
    batch: I,
    input_dim: usize,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64>
where
    I: Iterator<Item = (&'a [f64], usize)>,
{
    let mut data = Vec::new();
    let mut targets = Vec::new();
    for (v, t) in batch {
        data.extend_from_slice(v);
        targets.push(t);
    }
    let b = targets.len();
    let x = Feat::from_data(b, input_dim, 1, 1, data)?;
    let (logits, caches) = net.forward_train(x, rng, true);
    let (loss, dl) = softmax_ce_grad(&logits, &targets);
    if !loss.is_finite() {
        return Err(Error::Training("non-finite classifier loss".to_string()));
    }
    let mut grads = net.zero_grads();
    net.backward(&caches, dl, &mut grads);
    opt.step(&mut net.params_mut(), &grads, lr)?;
    Ok(loss)
}

fn vector_accuracy<'a, I>(
    net: &Stack,
    items: I,
    input_dim: usize,
    threshold: f64,
) -> Result<f64>
where
    I: Iterator<Item = (&'a [f64], Label)>,
{
    let mut scored = Vec::new();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (v, l) in items {
        data.extend_from_slice(v);
        labels.push(l);
    }
    let x = Feat::from_data(labels.len(), input_dim, 1, 1, data)?;
    let probs = softmax_positive(&net.forward_eval(x));
    for (p, l) in probs.into_iter().zip(labels) {
        scored.push((p, l));
    }
    crate::metrics::accuracy(&scored, threshold)
}

/// Score groups with a trained head (eval mode, deterministic).
pub fn predict_groups(net: &Stack, groups: &[GroupSample]) -> Result<Vec<GroupPrediction>> {
    if groups.is_empty() {
        return Ok(Vec::new());
    }
    let dim = groups[0].vector.len();
    check_dims(groups, dim)?;
    let mut out = Vec::with_capacity(groups.len());
    for chunk in groups.chunks(256) {
        let mut data = Vec::with_capacity(chunk.len() * dim);
        for g in chunk {
            data.extend_from_slice(&g.vector);
        }
        let x = Feat::from_data(chunk.len(), dim, 1, 1, data)?;
        let probs = softmax_positive(&net.forward_eval(x));
        for (g, p) in chunk.iter().zip(probs) {
            out.push(GroupPrediction {
                patient_id: g.patient_id.clone(),
                member_patch_ids: g.member_patch_ids.clone(),
                p_msi: p,
            });
        }
    }
    Ok(out)
}

/// Unit probabilities per patient, sorted by patient id, group order
/// preserved within a patient.
pub fn group_probs_by_patient(preds: &[GroupPrediction]) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for p in preds {
        out.entry(p.patient_id.clone()).or_default().push(p.p_msi);
    }
    out
}

// ---------------------------------------------------------------------------
// Per-patch supervised baseline
// ---------------------------------------------------------------------------

/// Baseline training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "baseline epochs and batch_size must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// End-to-end patch classifier: the stage-1 backbone family, freshly
/// initialized, plus a linear two-class layer.
pub struct TrainedBaseline {
    pub net: Stack,
    pub output_size: usize,
    pub stats: ChannelStats,
    pub train_acc: Vec<f64>,
    pub val_patch_acc: Vec<f64>,
    pub val_patient_acc: Vec<f64>,
}

fn baseline_net(enc: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Stack> {
    enc.validate()?;
    let mut trunk = match enc.backbone {
        Backbone::TinyConv => tiny_conv_trunk(&TINY_CONV_WIDTHS, enc.output_dim, rng)?,
        Backbone::Resnet18 => resnet18_trunk(rng),
    };
    trunk
        .layers
        .push(Layer::Linear(Linear::init(enc.output_dim, 2, rng)));
    Ok(trunk)
}

/// Train the supervised per-patch baseline on inherited labels. Inputs go
/// through the deterministic eval transform; the stochastic contrastive
/// augmentation is not used here.
pub fn train_baseline(
    train: &PatchSet,
    val: Option<&PatchSet>,
    enc: &EncoderConfig,
    cfg: &BaselineConfig,
    output_size: usize,
    stats: &ChannelStats,
    threshold: f64,
) -> Result<TrainedBaseline> {
    cfg.validate()?;
    if train.len() < cfg.batch_size {
        return Err(Error::Config(format!(
            "dataset has {} patches, smaller than batch size {}",
            train.len(),
            cfg.batch_size
        )));
    }
    let root = StreamKey::new(cfg.seed);
    let mut net = baseline_net(enc, &mut root.child_str("init").rng())?;
    let mut opt = SgdMomentum::new(&net.params(), 0.9, cfg.weight_decay);

    // The eval transform is deterministic, so inputs are precomputed once.
    let train_inputs: Result<Vec<Tensor>> = train
        .items
        .iter()
        .map(|it| eval_transform(&it.raster, output_size, stats))
        .collect();
    let train_inputs = train_inputs?;
    let targets: Vec<usize> = train.items.iter().map(|it| class_index(it.label)).collect();

    let mut train_acc = Vec::with_capacity(cfg.epochs);
    let mut val_patch_acc = Vec::new();
    let mut val_patient_acc = Vec::new();
    let mut layer_rng = root.child_str("layers").rng();

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.base_lr)?;
        let mut order: Vec<usize> = (0..train.len()).collect();
        shuffle(&mut order, &mut root.child_str("order").child(epoch as u64).rng());
        for chunk in order.chunks(cfg.batch_size) {
            let views: Vec<Tensor> = chunk.iter().map(|&i| train_inputs[i].clone()).collect();
            let x = Feat::from_views(&views)?;
            let t: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            let (logits, caches) = net.forward_train(x, &mut layer_rng, true);
            let (loss, dl) = softmax_ce_grad(&logits, &t);
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite baseline loss at epoch {epoch}"
                )));
            }
            let mut grads = net.zero_grads();
            net.backward(&caches, dl, &mut grads);
            opt.step(&mut net.params_mut(), &grads, lr)?;
        }
        // epoch-end snapshot on the training patches
        let probs = predict_inputs(&net, &train_inputs)?;
        let scored: Vec<(f64, Label)> = probs
            .iter()
            .zip(train.items.iter())
            .map(|(&p, it)| (p, it.label))
            .collect();
        train_acc.push(crate::metrics::accuracy(&scored, threshold)?);

        if let Some(val_set) = val {
            let preds = predict_patches(&net, val_set, output_size, stats)?;
            let labels = val_set.patient_labels();
            val_patch_acc.push(crate::metrics::patch_accuracy(&preds, &labels, threshold)?);
            let mut by_patient: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for p in &preds {
                by_patient.entry(p.patient_id.clone()).or_default().push(p.p_msi);
            }
            let mut correct = 0usize;
            for (pid, probs) in &by_patient {
                let pred = predict_patient(pid, probs, threshold, AggregationMethod::MeanProb)?;
                if pred.decision == labels[pid] {
                    correct += 1;
                }
            }
            val_patient_acc.push(correct as f64 / by_patient.len() as f64);
        }
    }
    Ok(TrainedBaseline {
        net,
        output_size,
        stats: *stats,
        train_acc,
        val_patch_acc,
        val_patient_acc,
    })
}

fn predict_inputs(net: &Stack, inputs: &[Tensor]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(64) {
        let x = Feat::from_views(chunk)?;
        out.extend(softmax_positive(&net.forward_eval(x)));
    }
    Ok(out)
}

/// Per-patch positive-class probabilities from a trained patch classifier.
pub fn predict_patches(
    net: &Stack,
    patches: &PatchSet,
    output_size: usize,
    stats: &ChannelStats,
) -> Result<Vec<PatchProbability>> {
    let mut out = Vec::with_capacity(patches.len());
    for chunk in patches.items.chunks(64) {
        let views: Result<Vec<Tensor>> = chunk
            .iter()
            .map(|it| eval_transform(&it.raster, output_size, stats))
            .collect();
        let x = Feat::from_views(&views?)?;
        let probs = softmax_positive(&net.forward_eval(x));
        for (it, p) in chunk.iter().zip(probs) {
            out.push(PatchProbability {
                patch_id: it.patch_id.clone(),
                patient_id: it.patient_id.clone(),
                p_msi: p,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{PatientEmbeddings, Remainder};
    use alloc::vec;
    use rand::Rng;

    /// Two well-separated gaussian blobs in 8-d, grouped per "patient".
    fn blob_store(n_patients_per_class: usize, patches_each: usize, seed: u64) -> EmbeddingStore {
        let dim = 8;
        let mut rng = StreamKey::new(seed).rng();
        let mut patients = Vec::new();
        for label in [Label::Mss, Label::Msi] {
            let center = if label == Label::Msi { 1.5 } else { -1.5 };
            for i in 0..n_patients_per_class {
                let pid = format!("{}_{i}", label.as_str().to_lowercase());
                let rows: Vec<f64> = (0..patches_each * dim)
                    .map(|_| center + 0.5 * crate::rng::normal(&mut rng))
                    .collect();
                patients.push(PatientEmbeddings {
                    patient_id: pid.clone(),
                    label,
                    patch_ids: (0..patches_each).map(|k| format!("{pid}_p{k}")).collect(),
                    rows,
                });
            }
        }
        patients.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
        EmbeddingStore { dim, patients, encoder_fingerprint: "test".into() }
    }

    fn policy(ng: usize) -> GroupingPolicy {
        GroupingPolicy {
            group_size: ng,
            remainder: Remainder::PadResample,
            shuffle_each_epoch: true,
            seed: 0,
        }
    }

    #[test]
    fn head_learns_separable_groups() {
        let store = blob_store(4, 8, 1);
        let cfg = HeadConfig {
            input_dim: 2 * 8,
            hidden_dims: vec![16],
            dropout: 0.0,
            epochs: 50,
            batch_size: 8,
            base_lr: 0.1,
            seed: 1,
        };
        let trained = train_head(&store, &policy(2), None, &cfg, 0.5).unwrap();
        let final_acc = *trained.train_acc.last().unwrap();
        assert!(final_acc >= 0.99, "separable blobs should be learned, got {final_acc}");
    }

    /// Featureless store: both classes drawn from the same distribution.
    fn featureless_store(n_patients_per_class: usize, patches_each: usize, seed: u64) -> EmbeddingStore {
        let dim = 8;
        let mut rng = StreamKey::new(seed).rng();
        let mut patients = Vec::new();
        for label in [Label::Mss, Label::Msi] {
            for i in 0..n_patients_per_class {
                let pid = format!("{}_{i}", label.as_str().to_lowercase());
                let rows: Vec<f64> = (0..patches_each * dim)
                    .map(|_| crate::rng::normal(&mut rng))
                    .collect();
                patients.push(PatientEmbeddings {
                    patient_id: pid.clone(),
                    label,
                    patch_ids: (0..patches_each).map(|k| format!("{pid}_p{k}")).collect(),
                    rows,
                });
            }
        }
        patients.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
        EmbeddingStore { dim, patients, encoder_fingerprint: "test".into() }
    }

    #[test]
    fn untrained_head_sits_at_chance() {
        let store = featureless_store(15, 16, 2);
        let cfg = HeadConfig {
            input_dim: 2 * 8,
            hidden_dims: vec![16],
            dropout: 0.0,
            epochs: 1,
            batch_size: 8,
            base_lr: 0.0, // zero learning rate: the head stays at init
            seed: 3,
        };
        let trained = train_head(&store, &policy(2), None, &cfg, 0.5).unwrap();
        let acc = trained.train_acc[0];
        assert!((acc - 0.5).abs() <= 0.1, "random head near chance, got {acc}");
    }

    #[test]
    fn head_rejects_dim_mismatch() {
        let store = blob_store(2, 4, 4);
        let cfg = HeadConfig {
            input_dim: 99,
            hidden_dims: vec![8],
            dropout: 0.0,
            epochs: 1,
            batch_size: 4,
            base_lr: 0.1,
            seed: 0,
        };
        assert!(matches!(
            train_head(&store, &policy(2), None, &cfg, 0.5),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn zeroed_head_outputs_half() {
        let net = Stack::new(vec![Layer::Linear(Linear::zeroed(4, 2))]);
        let groups = vec![GroupSample {
            vector: vec![0.3, -0.4, 1.0, 2.0],
            label: Label::Msi,
            patient_id: "a".into(),
            member_patch_ids: vec!["a_p0".into()],
        }];
        let preds = predict_groups(&net, &groups).unwrap();
        assert_eq!(preds[0].p_msi, 0.5, "uniform logits give exactly one half");
    }

    #[test]
    fn identical_groups_get_identical_probabilities() {
        let store = blob_store(2, 4, 7);
        let cfg = HeadConfig {
            input_dim: 8,
            hidden_dims: vec![8],
            dropout: 0.25,
            epochs: 3,
            batch_size: 4,
            base_lr: 0.05,
            seed: 5,
        };
        let trained = train_head(&store, &policy(1), None, &cfg, 0.5).unwrap();
        let g = GroupSample {
            vector: store.patients[0].row(0, 8).to_vec(),
            label: store.patients[0].label,
            patient_id: store.patients[0].patient_id.clone(),
            member_patch_ids: vec![store.patients[0].patch_ids[0].clone()],
        };
        let twice = predict_groups(&trained.net, &[g.clone(), g]).unwrap();
        assert_eq!(twice[0].p_msi, twice[1].p_msi);
        let complement = 1.0 - twice[0].p_msi;
        assert!((twice[0].p_msi + complement - 1.0).abs() < 1e-15);
    }
}
