//! Scratch diagnostic for stage-1 hyperparameter tuning (not shipped API).

use patchgroup_core::augment::{AugmentConfig, ChannelStats};
use patchgroup_core::data::{generate_synthetic, synthetic_patch_set, Label, Split, SyntheticConfig};
use patchgroup_core::embed::extract_embeddings;
use patchgroup_core::moco::{train_moco, Stage1Config};
use patchgroup_core::nn::{Backbone, EncoderConfig};

fn pipeline(
    train: &patchgroup_core::data::PatchSet,
    val: &patchgroup_core::data::PatchSet,
    enc: &EncoderConfig,
    cfg: &Stage1Config,
    aug: &AugmentConfig,
    args: &[String],
) {
    use patchgroup_core::aggregate::AggregationMethod;
    use patchgroup_core::embed::{GroupingPolicy, Remainder};
    use patchgroup_core::head::{
        group_probs_by_patient, predict_groups, predict_patches, train_baseline, train_head,
        BaselineConfig, HeadConfig,
    };
    use patchgroup_core::metrics::evaluate_run;
    use std::collections::BTreeMap;

    let get = |name: &str, default: f64| -> f64 {
        args.iter()
            .position(|a| a == name)
            .and_then(|i| args.get(i + 1))
            .and_then(|v| v.parse().ok())
            .unwrap_or(default)
    };
    let ng = get("--ng", 4.0) as usize;
    let head_epochs = get("--head-epochs", 100.0) as usize;
    let head_lr = get("--head-lr", 0.05);
    let base_epochs = get("--base-epochs", 25.0) as usize;
    let base_lr_b = get("--base-lr", 0.02);
    let ps = get("--ps", 16.0) as usize;
    let seed = get("--seed", 7.0) as u64;

    let t0 = std::time::Instant::now();
    let s1 = train_moco(train, enc, cfg, aug).unwrap();
    println!(
        "stage1: {:.0}s, curve[0] {:.4} curve[last] {:.4} best {} ({:.4})",
        t0.elapsed().as_secs_f64(),
        s1.loss_curve[0],
        s1.loss_curve.last().unwrap(),
        s1.best_epoch,
        s1.loss_curve[s1.best_epoch]
    );

    let store_train =
        extract_embeddings(&s1.encoder, train, ps, &aug.stats, "diag").unwrap();
    let store_val = extract_embeddings(&s1.encoder, val, ps, &aug.stats, "diag").unwrap();

    let train_policy = GroupingPolicy {
        group_size: ng,
        remainder: Remainder::PadResample,
        shuffle_each_epoch: true,
        seed,
    };
    let val_policy = GroupingPolicy {
        group_size: ng,
        remainder: Remainder::Drop,
        shuffle_each_epoch: false,
        seed,
    };
    let head_cfg = HeadConfig {
        input_dim: ng * enc.output_dim,
        hidden_dims: vec![64, 32],
        dropout: 0.25,
        epochs: head_epochs,
        batch_size: 32,
        base_lr: head_lr,
        seed,
    };
    let t1 = std::time::Instant::now();
    let head = train_head(
        &store_train,
        &train_policy,
        Some((&store_val, &val_policy)),
        &head_cfg,
        0.5,
    )
    .unwrap();
    println!(
        "head: {:.0}s, final train acc {:.3}, val patient acc curve tail {:?}",
        t1.elapsed().as_secs_f64(),
        head.train_acc.last().unwrap(),
        &head.val_patient_acc[head.val_patient_acc.len().saturating_sub(5)..]
    );

    let val_groups = patchgroup_core::embed::make_groups(&store_val, &val_policy, 0).unwrap();
    let preds = predict_groups(&head.net, &val_groups.groups).unwrap();
    let by_patient = group_probs_by_patient(&preds);
    let patch_probs = patchgroup_core::aggregate::patch_predictions_from_groups(&preds);
    let labels = store_val.patient_labels();
    let grouped_report = evaluate_run(
        &patch_probs,
        &by_patient,
        &labels,
        0.5,
        AggregationMethod::MeanProb,
        seed,
    )
    .unwrap();
    println!(
        "grouped:  patient acc {:.3} auc {:.3} | patch acc {:.3} auc {:.3}",
        grouped_report.a_patient,
        grouped_report.auc_patient,
        grouped_report.a_patch,
        grouped_report.auc_patch
    );

    let t2 = std::time::Instant::now();
    let bl_cfg = BaselineConfig {
        epochs: base_epochs,
        batch_size: 64.min(train.len()),
        base_lr: base_lr_b,
        weight_decay: 1e-4,
        seed,
    };
    let baseline = train_baseline(train, None, enc, &bl_cfg, ps, &aug.stats, 0.5).unwrap();
    let bl_preds = predict_patches(&baseline.net, val, ps, &aug.stats).unwrap();
    let mut bl_by_patient: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for p in &bl_preds {
        bl_by_patient.entry(p.patient_id.clone()).or_default().push(p.p_msi);
    }
    let bl_report = evaluate_run(
        &bl_preds,
        &bl_by_patient,
        &labels,
        0.5,
        AggregationMethod::MeanProb,
        seed,
    )
    .unwrap();
    println!(
        "baseline ({:.0}s): patient acc {:.3} auc {:.3} | patch acc {:.3} auc {:.3}",
        t2.elapsed().as_secs_f64(),
        bl_report.a_patient,
        bl_report.auc_patient,
        bl_report.a_patch,
        bl_report.auc_patch
    );
}

fn stepwise(
    train: &patchgroup_core::data::PatchSet,
    enc: &EncoderConfig,
    cfg: &Stage1Config,
    aug: &AugmentConfig,
) {
    use patchgroup_core::moco::{cosine_lr, init_moco, normalize_rows, train_step};
    use patchgroup_core::nn::Feat;
    use patchgroup_core::rng::StreamKey;
    use rand::Rng;

    let mut state = init_moco(enc, cfg).unwrap();
    let root = StreamKey::new(cfg.seed);
    let steps_per_epoch = train.len() / cfg.batch_size;
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut rng = StreamKey::new(123).rng();
    for step in 0..total_steps {
        let epoch = step / steps_per_epoch;
        let lr = cosine_lr(epoch, cfg.epochs, cfg.base_lr).unwrap();
        let idx: Vec<usize> =
            (0..cfg.batch_size).map(|_| rng.gen_range(0..train.len())).collect();
        let batch: Vec<&patchgroup_core::raster::Raster> =
            idx.iter().map(|&i| &train.items[i].raster).collect();
        let loss =
            train_step(&mut state, &batch, aug, lr, root.child(step as u64)).unwrap();
        if step % (5 * steps_per_epoch) == 0 || step == total_steps - 1 {
            // probe: embed 16 evaluation patches, measure q stats
            let views: Vec<_> = (0..16)
                .map(|i| {
                    patchgroup_core::augment::eval_transform(
                        &train.items[i * train.len() / 16].raster,
                        train.patch_size,
                        &aug.stats,
                    )
                    .unwrap()
                })
                .collect();
            let x = Feat::from_views(&views).unwrap();
            let mut q = state.query.project_eval(x);
            normalize_rows(&mut q);
            let d = q.c;
            // mean pairwise dot between distinct rows
            let mut dots = Vec::new();
            for i in 0..q.b {
                for j in (i + 1)..q.b {
                    let a = &q.data[i * d..(i + 1) * d];
                    let b = &q.data[j * d..(j + 1) * d];
                    dots.push(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>());
                }
            }
            let mean_dot = dots.iter().sum::<f64>() / dots.len() as f64;
            let min_dot = dots.iter().cloned().fold(f64::INFINITY, f64::min);
            println!(
                "step {step:4} epoch {epoch:3} loss {loss:.4} | eval-q pairwise dot mean {mean_dot:.4} min {min_dot:.4}"
            );
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let get = |name: &str, default: f64| -> f64 {
        args.iter()
            .position(|a| a == name)
            .and_then(|i| args.get(i + 1))
            .and_then(|v| v.parse().ok())
            .unwrap_or(default)
    };
    let lr = get("--lr", 0.05);
    let tau = get("--tau", 0.2);
    let k = get("--k", 64.0) as usize;
    let m = get("--m", 0.95);
    let epochs = get("--epochs", 30.0) as usize;
    let noise = get("--noise", 0.06);
    let sf = get("--sf", 1.0);
    let n_pat = get("--pat", 4.0) as usize;
    let ppp = get("--ppp", 8.0) as usize;
    let batch = get("--batch", 16.0) as usize;
    let n_o = get("--no", 16.0) as usize;
    let ps = get("--ps", 16.0) as usize;

    let dcfg = SyntheticConfig {
        train_patients_per_class: n_pat,
        val_patients_per_class: 2,
        patches_per_patient: (ppp, ppp),
        patch_size: ps,
        signal_fraction: sf,
        noise_level: noise,
        seed: 99,
    };
    let pats = generate_synthetic(&dcfg).unwrap();
    let train = synthetic_patch_set(&pats, Split::Train, dcfg.patch_size);
    let enc = EncoderConfig {
        backbone: Backbone::TinyConv,
        output_dim: n_o,
        projection_dim: 8,
        projection_mlp: std::env::var("MLP").map(|v| v == "1").unwrap_or(true),
    };
    let cfg = Stage1Config {
        queue_size: k,
        momentum: m,
        temperature: tau,
        batch_size: batch,
        epochs,
        base_lr: lr,
        weight_decay: 1e-4,
        seed: 7,
    };
    let mut aug = AugmentConfig::contrastive(ps, ChannelStats::SYMMETRIC, 0);
    if std::env::var("GENTLE").map(|v| v == "1").unwrap_or(false) {
        aug.crop_scale = (0.5, 1.0);
        aug.jitter_strength = 0.5;
        aug.blur_prob = 0.0;
    }

    if std::env::var("STEPWISE").map(|v| v == "1").unwrap_or(false) {
        stepwise(&train, &enc, &cfg, &aug);
        return;
    }
    if std::env::var("PIPELINE").map(|v| v == "1").unwrap_or(false) {
        let val = synthetic_patch_set(&pats, Split::Validation, dcfg.patch_size);
        pipeline(&train, &val, &enc, &cfg, &aug, &args);
        return;
    }
    let t0 = std::time::Instant::now();
    let out = train_moco(&train, &enc, &cfg, &aug).unwrap();
    println!("trained in {:.1}s", t0.elapsed().as_secs_f64());
    for (e, l) in out.loss_curve.iter().enumerate() {
        if e % 2 == 0 || e == out.loss_curve.len() - 1 {
            println!("epoch {e:3}  loss {l:.4}");
        }
    }
    println!("best epoch {} loss {:.4}", out.best_epoch, out.loss_curve[out.best_epoch]);

    // embedding diagnostics: spread and texture separability
    let store = extract_embeddings(&out.encoder, &train, ps, &ChannelStats::SYMMETRIC, "x").unwrap();
    let dim = store.dim;
    let mut all: Vec<&[f64]> = Vec::new();
    let mut labels = Vec::new();
    // signal flags per patch: regenerate to know which are textured
    let mut textured = std::collections::BTreeMap::new();
    for p in &pats {
        for (i, patch) in p.patches.iter().enumerate() {
            textured.insert(patch.patch_id.clone(), p.signal_indices.contains(&i));
        }
    }
    for p in &store.patients {
        for i in 0..p.n_patches() {
            all.push(p.row(i, dim));
            labels.push((p.label, textured[&p.patch_ids[i]]));
        }
    }
    let n = all.len();
    let mut mean = vec![0.0; dim];
    for r in &all {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v / n as f64;
        }
    }
    let mut var = 0.0;
    for r in &all {
        for (m, v) in mean.iter().zip(r.iter()) {
            var += (v - m) * (v - m);
        }
    }
    println!("embedding spread (total var): {:.5}", var / n as f64);

    let mut mu_tex = vec![0.0; dim];
    let mut mu_plain = vec![0.0; dim];
    let (mut nt, mut np) = (0usize, 0usize);
    for (r, (_, tex)) in all.iter().zip(labels.iter()) {
        if *tex {
            nt += 1;
            for (m, v) in mu_tex.iter_mut().zip(r.iter()) {
                *m += v;
            }
        } else {
            np += 1;
            for (m, v) in mu_plain.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
    }
    if nt > 0 && np > 0 {
        for v in mu_tex.iter_mut() {
            *v /= nt as f64;
        }
        for v in mu_plain.iter_mut() {
            *v /= np as f64;
        }
        let gap: f64 = mu_tex
            .iter()
            .zip(mu_plain.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        println!("textured vs plain centroid distance: {gap:.5} (nt={nt} np={np})");
    }
    let _ = Label::Msi;
}
