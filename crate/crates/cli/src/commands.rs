//! Subcommand implementations. Every stage writes its artifacts into a
//! content-addressed directory under the output root and drops a
//! `runlog.json` beside them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use patchgroup_core::aggregate::patch_predictions_from_groups;
use patchgroup_core::data::{
    build_balanced_subset, generate_synthetic, synthetic_manifest, synthetic_patch_set, Label,
    Manifest, PatchSet, Split,
};
use patchgroup_core::embed::extract_embeddings;
use patchgroup_core::head::{
    group_probs_by_patient, predict_groups, predict_patches, train_baseline, train_head,
};
use patchgroup_core::metrics::{evaluate_run, summarize_runs, EvalReport, PairedTTest};
use patchgroup_core::moco::train_moco;
use patchgroup_core::nn::{mlp_classifier, Stack};

use crate::checkpoint;
use crate::config::{stage_dir, RunConfig, StageHashes};
use crate::error::{CliError, Result};
use crate::manifest_io;
use crate::plot::{render_chart, Series, PALETTE};
use crate::report_io;
use crate::runlog::RunTimer;
use crate::store_io;

/// Resolved invocation context: config plus output root.
pub struct Ctx {
    pub cfg: RunConfig,
    pub root: PathBuf,
}

impl Ctx {
    pub fn new(config_path: &Path, out_root: Option<&Path>) -> Result<Ctx> {
        let cfg = RunConfig::load(config_path)?;
        let root = cfg.output_root(out_root);
        Ok(Ctx { cfg, root })
    }
}

/// Load one split of the configured dataset. Synthetic data is generated in
/// memory straight from the config (identical to what `synth` writes to
/// disk); manifest datasets are read from their files.
fn load_split(ctx: &Ctx, split: Split) -> Result<PatchSet> {
    match ctx.cfg.dataset.source.as_str() {
        "synthetic" => {
            let scfg = ctx.cfg.synthetic_config(None)?;
            let patients = generate_synthetic(&scfg)?;
            Ok(synthetic_patch_set(&patients, split, scfg.patch_size))
        }
        _ => {
            let path = PathBuf::from(ctx.cfg.dataset.manifest_path.as_ref().expect("validated"));
            let manifest = manifest_io::load_manifest(&path)?;
            manifest_io::load_patch_set(&manifest, &path, split)
        }
    }
}

/// The dataset's manifest (for balanced-subset selection).
fn dataset_manifest(ctx: &Ctx) -> Result<Manifest> {
    match ctx.cfg.dataset.source.as_str() {
        "synthetic" => {
            let scfg = ctx.cfg.synthetic_config(None)?;
            let patients = generate_synthetic(&scfg)?;
            Ok(synthetic_manifest(&patients, scfg.patch_size)?)
        }
        _ => {
            let path = PathBuf::from(ctx.cfg.dataset.manifest_path.as_ref().expect("validated"));
            manifest_io::load_manifest(&path)
        }
    }
}

fn require(path: PathBuf, hint: &str) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact { path: path.display().to_string(), hint: hint.to_string() })
    }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

/// Generate the synthetic dataset onto disk; prints a manifest summary and
/// returns the manifest path.
pub fn cmd_synth(ctx: &Ctx, seed_override: Option<u64>) -> Result<PathBuf> {
    let scfg = ctx.cfg.synthetic_config(seed_override)?;
    let hash = {
        // the hash must reflect a seed override
        let mut cfg = ctx.cfg.clone();
        cfg.dataset.seed = scfg.seed;
        StageHashes::synth(&cfg, scfg.seed)
    };
    let dir = stage_dir(&ctx.root, "synth", &hash);
    let timer = RunTimer::start("synth", Some(scfg.seed), &hash);
    let patients = generate_synthetic(&scfg)?;
    let manifest_path = manifest_io::write_synthetic(&patients, scfg.patch_size, &dir)?;
    let manifest = synthetic_manifest(&patients, scfg.patch_size)?;
    let c = manifest.class_counts;
    println!(
        "synth: {} patients / {} patches -> {}",
        manifest.patients().len(),
        manifest.entries.len(),
        manifest_path.display()
    );
    println!(
        "  train MSS {}p/{}x, MSI {}p/{}x | validation MSS {}p/{}x, MSI {}p/{}x",
        c.train_mss.patients,
        c.train_mss.patches,
        c.train_msi.patients,
        c.train_msi.patches,
        c.val_mss.patients,
        c.val_mss.patches,
        c.val_msi.patients,
        c.val_msi.patches,
    );
    timer.finish(&dir, &[&manifest_path])?;
    Ok(manifest_path)
}

// ---------------------------------------------------------------------------
// train-stage1
// ---------------------------------------------------------------------------

pub fn stage1_checkpoint_path(ctx: &Ctx, seed: u64) -> PathBuf {
    stage_dir(&ctx.root, "stage1", &StageHashes::stage1(&ctx.cfg, seed)).join("checkpoint.bin")
}

pub fn cmd_train_stage1(ctx: &Ctx, seed: u64) -> Result<PathBuf> {
    let hash = StageHashes::stage1(&ctx.cfg, seed);
    let dir = stage_dir(&ctx.root, "stage1", &hash);
    let timer = RunTimer::start("train-stage1", Some(seed), &hash);
    let train = load_split(ctx, Split::Train)?;
    let enc = ctx.cfg.encoder_config()?;
    let s1 = ctx.cfg.stage1_config(seed);
    let aug = ctx.cfg.augment_config(seed);
    let out = train_moco(&train, &enc, &s1, &aug)?;

    let ckpt = dir.join("checkpoint.bin");
    let fp = checkpoint::save_encoder(&ckpt, &out.encoder, &out.loss_curve, out.best_epoch)?;
    let curve = dir.join("loss_curve.txt");
    report_io::save_series(&curve, "epoch\tmean_infonce_loss", &out.loss_curve)?;
    println!(
        "stage1 seed {seed}: {} epochs, best epoch {} (loss {:.4}) -> {}",
        out.loss_curve.len(),
        out.best_epoch,
        out.loss_curve[out.best_epoch],
        ckpt.display()
    );
    println!("  encoder fingerprint {fp}");
    timer.finish(&dir, &[&ckpt, &curve])?;
    Ok(ckpt)
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

pub fn extract_dir(ctx: &Ctx, seed: u64) -> PathBuf {
    stage_dir(&ctx.root, "extract", &StageHashes::extract(&ctx.cfg, seed))
}

pub fn store_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let name = match split {
        Split::Train => "store_train",
        Split::Validation => "store_validation",
    };
    (dir.join(format!("{name}.bin")), dir.join(format!("{name}.idx")))
}

pub fn cmd_extract(ctx: &Ctx, seed: u64) -> Result<PathBuf> {
    let ckpt_path = require(stage1_checkpoint_path(ctx, seed), "train-stage1")?;
    let hash = StageHashes::extract(&ctx.cfg, seed);
    let dir = extract_dir(ctx, seed);
    let timer = RunTimer::start("extract", Some(seed), &hash);
    let (encoder, _, fingerprint) = checkpoint::load_encoder(&ckpt_path)?;
    let size = ctx.cfg.augment.output_size;
    let stats = ctx.cfg.stats();
    let mut artifacts = Vec::new();
    for split in [Split::Train, Split::Validation] {
        let patches = load_split(ctx, split)?;
        let store = extract_embeddings(&encoder, &patches, size, &stats, &fingerprint)?;
        let (bin, idx) = store_paths(&dir, split);
        store_io::save_store(&store, &bin, &idx)?;
        println!(
            "extract seed {seed} [{}]: {} patients, {} rows x {} -> {}",
            split.as_str(),
            store.patients.len(),
            store.total_rows(),
            store.dim,
            bin.display()
        );
        artifacts.push(bin);
        artifacts.push(idx);
    }
    let refs: Vec<&Path> = artifacts.iter().map(|p| p.as_path()).collect();
    timer.finish(&dir, &refs)?;
    Ok(dir)
}

// ---------------------------------------------------------------------------
// train-head
// ---------------------------------------------------------------------------

pub fn head_checkpoint_path(ctx: &Ctx, seed: u64) -> PathBuf {
    stage_dir(&ctx.root, "head", &StageHashes::head(&ctx.cfg, seed)).join("head.bin")
}

pub fn cmd_train_head(ctx: &Ctx, seed: u64) -> Result<PathBuf> {
    let ex_dir = extract_dir(ctx, seed);
    let (train_bin, train_idx) = store_paths(&ex_dir, Split::Train);
    let (val_bin, val_idx) = store_paths(&ex_dir, Split::Validation);
    require(train_bin.clone(), "extract")?;
    let hash = StageHashes::head(&ctx.cfg, seed);
    let dir = stage_dir(&ctx.root, "head", &hash);
    let timer = RunTimer::start("train-head", Some(seed), &hash);

    let store_train = store_io::load_store(&train_bin, &train_idx)?;
    let store_val = store_io::load_store(&val_bin, &val_idx)?;
    let ckpt = require(stage1_checkpoint_path(ctx, seed), "train-stage1")?;
    let (_, _, ck_fp) = checkpoint::load_encoder(&ckpt)?;
    if store_train.encoder_fingerprint != ck_fp || store_val.encoder_fingerprint != ck_fp {
        return Err(CliError::Core(patchgroup_core::Error::Integrity(
            "embedding store fingerprint does not match the stage-1 checkpoint".into(),
        )));
    }

    let head_cfg = ctx.cfg.head_config(seed)?;
    let trained = train_head(
        &store_train,
        &ctx.cfg.train_grouping(),
        Some((&store_val, &ctx.cfg.val_grouping())),
        &head_cfg,
        ctx.cfg.eval.threshold,
    )?;

    let head_path = dir.join("head.bin");
    let config_echo = serde_json::json!({
        "head": {
            "input_dim": head_cfg.input_dim,
            "hidden_dims": head_cfg.hidden_dims,
            "dropout": head_cfg.dropout,
            "epochs": head_cfg.epochs,
            "batch_size": head_cfg.batch_size,
            "base_lr": head_cfg.base_lr,
            "seed": head_cfg.seed,
        },
        "grouping": {
            "group_size": ctx.cfg.grouping.group_size,
            "train_remainder": ctx.cfg.grouping.train_remainder,
            "val_remainder": ctx.cfg.grouping.val_remainder,
            "shuffle_each_epoch": ctx.cfg.grouping.shuffle_each_epoch,
        },
        "encoder_fingerprint": ck_fp,
    });
    checkpoint::save_stack(
        &head_path,
        "head",
        &trained.net,
        config_echo,
        &[
            ("train_accuracy", trained.train_acc.as_slice()),
            ("val_group_accuracy", trained.val_group_acc.as_slice()),
            ("val_patient_accuracy", trained.val_patient_acc.as_slice()),
        ],
    )?;
    let mut artifacts = vec![head_path.clone()];
    for (name, series) in [
        ("acc_train.txt", &trained.train_acc),
        ("acc_val_group.txt", &trained.val_group_acc),
        ("acc_val_patient.txt", &trained.val_patient_acc),
    ] {
        let p = dir.join(name);
        report_io::save_series(&p, "epoch\taccuracy", series)?;
        artifacts.push(p);
    }
    println!(
        "head seed {seed}: {} epochs, final train acc {:.3}, final val patient acc {} -> {}",
        head_cfg.epochs,
        trained.train_acc.last().unwrap_or(&f64::NAN),
        trained
            .val_patient_acc
            .last()
            .map_or("-".to_string(), |v| format!("{v:.3}")),
        head_path.display()
    );
    let refs: Vec<&Path> = artifacts.iter().map(|p| p.as_path()).collect();
    timer.finish(&dir, &refs)?;
    Ok(head_path)
}

// ---------------------------------------------------------------------------
// train-baseline
// ---------------------------------------------------------------------------

pub fn baseline_checkpoint_path(ctx: &Ctx, seed: u64) -> PathBuf {
    stage_dir(&ctx.root, "baseline", &StageHashes::baseline(&ctx.cfg, seed)).join("baseline.bin")
}

pub fn cmd_train_baseline(ctx: &Ctx, seed: u64) -> Result<PathBuf> {
    let hash = StageHashes::baseline(&ctx.cfg, seed);
    let dir = stage_dir(&ctx.root, "baseline", &hash);
    let timer = RunTimer::start("train-baseline", Some(seed), &hash);
    let train = load_split(ctx, Split::Train)?;
    let val = load_split(ctx, Split::Validation)?;
    let enc = ctx.cfg.encoder_config()?;
    let bcfg = ctx.cfg.baseline_config(seed);
    let trained = train_baseline(
        &train,
        Some(&val),
        &enc,
        &bcfg,
        ctx.cfg.augment.output_size,
        &ctx.cfg.stats(),
        ctx.cfg.eval.threshold,
    )?;

    let path = dir.join("baseline.bin");
    let config_echo = serde_json::json!({
        "encoder": {
            "backbone": ctx.cfg.encoder.backbone,
            "output_dim": ctx.cfg.encoder.output_dim,
        },
        "baseline": {
            "epochs": bcfg.epochs,
            "batch_size": bcfg.batch_size,
            "base_lr": bcfg.base_lr,
            "weight_decay": bcfg.weight_decay,
            "seed": bcfg.seed,
        },
        "output_size": ctx.cfg.augment.output_size,
    });
    checkpoint::save_stack(
        &path,
        "baseline",
        &trained.net,
        config_echo,
        &[
            ("train_accuracy", trained.train_acc.as_slice()),
            ("val_patch_accuracy", trained.val_patch_acc.as_slice()),
            ("val_patient_accuracy", trained.val_patient_acc.as_slice()),
        ],
    )?;
    let mut artifacts = vec![path.clone()];
    for (name, series) in [
        ("acc_train.txt", &trained.train_acc),
        ("acc_val_patch.txt", &trained.val_patch_acc),
        ("acc_val_patient.txt", &trained.val_patient_acc),
    ] {
        let p = dir.join(name);
        report_io::save_series(&p, "epoch\taccuracy", series)?;
        artifacts.push(p);
    }
    println!(
        "baseline seed {seed}: {} epochs, final val patient acc {} -> {}",
        bcfg.epochs,
        trained
            .val_patient_acc
            .last()
            .map_or("-".to_string(), |v| format!("{v:.3}")),
        path.display()
    );
    let refs: Vec<&Path> = artifacts.iter().map(|p| p.as_path()).collect();
    timer.finish(&dir, &refs)?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn rebuild_head(ck: &checkpoint::Checkpoint, path: &Path) -> Result<Stack> {
    let cfg = &ck.header.config["head"];
    let input_dim = cfg["input_dim"].as_u64().unwrap_or(0) as usize;
    let hidden: Vec<usize> = cfg["hidden_dims"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_u64()).map(|v| v as usize).collect())
        .unwrap_or_default();
    let dropout = cfg["dropout"].as_f64().unwrap_or(0.0);
    let mut net = mlp_classifier(
        input_dim,
        &hidden,
        dropout,
        2,
        &mut patchgroup_core::rng::StreamKey::new(0).rng(),
    )?;
    checkpoint::restore_stack(&mut net, ck, path)?;
    Ok(net)
}

fn rebuild_baseline(ck: &checkpoint::Checkpoint, path: &Path, ctx: &Ctx) -> Result<Stack> {
    let enc = ctx.cfg.encoder_config()?;
    let mut rng = patchgroup_core::rng::StreamKey::new(0).rng();
    let mut net = match enc.backbone {
        patchgroup_core::nn::Backbone::TinyConv => patchgroup_core::nn::tiny_conv_trunk(
            &patchgroup_core::nn::TINY_CONV_WIDTHS,
            enc.output_dim,
            &mut rng,
        )?,
        patchgroup_core::nn::Backbone::Resnet18 => {
            patchgroup_core::nn::resnet18_trunk(&mut rng)
        }
    };
    net.layers.push(patchgroup_core::nn::Layer::Linear(
        patchgroup_core::nn::Linear::init(enc.output_dim, 2, &mut rng),
    ));
    checkpoint::restore_stack(&mut net, ck, path)?;
    Ok(net)
}

/// Restrict a patient->label map to the balanced subset, if requested.
fn balanced_patients(ctx: &Ctx) -> Result<std::collections::BTreeSet<String>> {
    let n = ctx.cfg.eval.balanced_per_class.ok_or_else(|| {
        CliError::Config("--balanced requires eval.balanced_per_class in the config".into())
    })?;
    let manifest = dataset_manifest(ctx)?;
    let subset = build_balanced_subset(&manifest, n, ctx.cfg.dataset.seed)?;
    Ok(subset
        .patients()
        .into_iter()
        .map(|p| p.patient_id)
        .collect())
}

pub fn eval_report_path(ctx: &Ctx, seed: u64, method: &str, balanced: bool) -> PathBuf {
    stage_dir(
        &ctx.root,
        "eval",
        &StageHashes::eval(&ctx.cfg, seed, method, balanced),
    )
    .join("report.json")
}

pub fn cmd_eval(ctx: &Ctx, seed: u64, method: &str, balanced: bool) -> Result<PathBuf> {
    let hash = StageHashes::eval(&ctx.cfg, seed, method, balanced);
    let dir = stage_dir(&ctx.root, "eval", &hash);
    let timer = RunTimer::start("eval", Some(seed), &hash);
    let threshold = ctx.cfg.eval.threshold;
    let aggregation = ctx.cfg.aggregation()?;

    let keep: Option<std::collections::BTreeSet<String>> = if balanced {
        Some(balanced_patients(ctx)?)
    } else {
        None
    };

    let (patch_probs, unit_rows, patient_units, labels): (
        Vec<patchgroup_core::aggregate::PatchProbability>,
        Vec<(String, String, f64)>,
        BTreeMap<String, Vec<f64>>,
        BTreeMap<String, Label>,
    ) = match method {
        "grouped" => {
            let head_path = require(head_checkpoint_path(ctx, seed), "train-head")?;
            let ck = checkpoint::load(&head_path)?;
            let net = rebuild_head(&ck, &head_path)?;
            let ex_dir = extract_dir(ctx, seed);
            let (bin, idx) = store_paths(&ex_dir, Split::Validation);
            require(bin.clone(), "extract")?;
            let mut store = store_io::load_store(&bin, &idx)?;
            if let Some(keep) = &keep {
                store.patients.retain(|p| keep.contains(&p.patient_id));
            }
            let labels = store.patient_labels();
            let outcome =
                patchgroup_core::embed::make_groups(&store, &ctx.cfg.val_grouping(), 0)?;
            for pid in &outcome.skipped_patients {
                eprintln!(
                    "warning: patient {pid} has fewer patches than the group size; skipped"
                );
            }
            let preds = predict_groups(&net, &outcome.groups)?;
            let patch_probs = patch_predictions_from_groups(&preds);
            let patient_units = group_probs_by_patient(&preds);
            let unit_rows = preds
                .iter()
                .enumerate()
                .map(|(i, g)| (format!("{}#g{i:04}", g.patient_id), g.patient_id.clone(), g.p_msi))
                .collect();
            (patch_probs, unit_rows, patient_units, labels)
        }
        "baseline" => {
            let path = require(baseline_checkpoint_path(ctx, seed), "train-baseline")?;
            let ck = checkpoint::load(&path)?;
            let net = rebuild_baseline(&ck, &path, ctx)?;
            let mut val = load_split(ctx, Split::Validation)?;
            if let Some(keep) = &keep {
                val.items.retain(|it| keep.contains(&it.patient_id));
            }
            let labels = val.patient_labels();
            let preds =
                predict_patches(&net, &val, ctx.cfg.augment.output_size, &ctx.cfg.stats())?;
            let mut patient_units: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for p in &preds {
                patient_units.entry(p.patient_id.clone()).or_default().push(p.p_msi);
            }
            let unit_rows = preds
                .iter()
                .map(|p| (p.patch_id.clone(), p.patient_id.clone(), p.p_msi))
                .collect();
            (preds, unit_rows, patient_units, labels)
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown method {other:?}; expected grouped or baseline"
            )))
        }
    };

    let report = evaluate_run(&patch_probs, &patient_units, &labels, threshold, aggregation, seed)?;
    let report_json = report_io::report_to_json(&report, method, balanced);
    let report_path = dir.join("report.json");
    report_io::save_report(&report_path, &report_json)?;
    let roc_patch = dir.join("roc_patch.txt");
    report_io::save_curve(
        &roc_patch,
        "fpr\ttpr",
        &report.roc_patch.iter().map(|p| (p.fpr, p.tpr)).collect::<Vec<_>>(),
    )?;
    let roc_patient = dir.join("roc_patient.txt");
    report_io::save_curve(
        &roc_patient,
        "fpr\ttpr",
        &report.roc_patient.iter().map(|p| (p.fpr, p.tpr)).collect::<Vec<_>>(),
    )?;
    let predictions = dir.join("predictions.tsv");
    report_io::save_predictions(&predictions, &unit_rows)?;

    println!(
        "eval seed {seed} method {method}{}: patient acc {:.3} auc {:.3} | patch acc {:.3} auc {:.3} ({} patients, {} patches)",
        if balanced { " (balanced)" } else { "" },
        report.a_patient,
        report.auc_patient,
        report.a_patch,
        report.auc_patch,
        report.n_patients,
        report.n_patches
    );
    println!("  report -> {}", report_path.display());
    timer.finish(&dir, &[&report_path, &roc_patch, &roc_patient, &predictions])?;
    Ok(report_path)
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

fn fmt_test(t: &Option<PairedTTest>) -> String {
    match t {
        None => "-".to_string(),
        Some(PairedTTest::Ok { t, p, .. }) => format!("t={t:+.3} p={p:.2e}"),
        Some(PairedTTest::InfiniteT { positive, .. }) => {
            format!("t={}inf p~0", if *positive { "+" } else { "-" })
        }
        Some(PairedTTest::Undefined { .. }) => "t undefined (zero diff)".to_string(),
    }
}

fn fmt_mean_std(m: &patchgroup_core::metrics::MeanStd) -> String {
    match m.std {
        Some(s) => format!("{:.3} \u{b1} {:.3}", m.mean, s),
        None => format!("{:.3}", m.mean),
    }
}

pub struct CompareArgs {
    pub a: Vec<PathBuf>,
    pub b: Vec<PathBuf>,
    pub label_a: String,
    pub label_b: String,
    pub curves_a: Vec<PathBuf>,
    pub curves_b: Vec<PathBuf>,
    pub out: PathBuf,
}

pub fn cmd_compare(args: &CompareArgs) -> Result<PathBuf> {
    if args.a.is_empty() || args.b.is_empty() {
        return Err(CliError::Config("compare needs at least one report per side".into()));
    }
    let load_side = |paths: &[PathBuf]| -> Result<Vec<EvalReport>> {
        paths
            .iter()
            .map(|p| Ok(report_io::report_from_json(&report_io::load_report(p)?)))
            .collect()
    };
    let a = load_side(&args.a)?;
    let b = load_side(&args.b)?;
    if a.len() == 1 {
        eprintln!("warning: single run per side; std and paired tests omitted");
    }
    let summary = summarize_runs(&a, &b, &args.label_a, &args.label_b)?;

    println!(
        "comparison over {} paired runs ({} vs {}):",
        summary.n_runs, summary.label_a, summary.label_b
    );
    println!(
        "  {:<18} {:>16} {:>16}   paired t-test",
        "metric", &summary.label_a, &summary.label_b
    );
    for m in &summary.metrics {
        println!(
            "  {:<18} {:>16} {:>16}   {}",
            m.name,
            fmt_mean_std(&m.a),
            fmt_mean_std(&m.b),
            fmt_test(&m.test)
        );
    }

    std::fs::create_dir_all(&args.out).map_err(CliError::io(args.out.display().to_string()))?;
    let summary_path = args.out.join("summary.json");
    report_io::save_summary(&summary_path, &report_io::summary_to_json(&summary))?;

    // ROC overlays: every run of side A in blue, side B in orange.
    let mut artifacts = vec![summary_path.clone()];
    for (name, pick) in [
        ("roc_patient.png", true),
        ("roc_patch.png", false),
    ] {
        let mut series = Vec::new();
        for r in &a {
            let pts = if pick { &r.roc_patient } else { &r.roc_patch };
            series.push(Series {
                points: pts.iter().map(|p| (p.fpr, p.tpr)).collect(),
                color: PALETTE[0],
            });
        }
        for r in &b {
            let pts = if pick { &r.roc_patient } else { &r.roc_patch };
            series.push(Series {
                points: pts.iter().map(|p| (p.fpr, p.tpr)).collect(),
                color: PALETTE[1],
            });
        }
        let path = args.out.join(name);
        render_chart(&series, &path)?;
        artifacts.push(path);
    }

    // accuracy-vs-epoch overlays when curve files are provided
    if !args.curves_a.is_empty() || !args.curves_b.is_empty() {
        let mut series = Vec::new();
        for p in &args.curves_a {
            series.push(Series { points: report_io::load_curve(p)?, color: PALETTE[0] });
        }
        for p in &args.curves_b {
            series.push(Series { points: report_io::load_curve(p)?, color: PALETTE[1] });
        }
        let path = args.out.join("accuracy_curves.png");
        render_chart(&series, &path)?;
        artifacts.push(path);
    }
    println!("compare -> {}", summary_path.display());
    let timer = RunTimer::start("compare", None, "-");
    let refs: Vec<&Path> = artifacts.iter().map(|p| p.as_path()).collect();
    timer.finish(&args.out, &refs)?;
    Ok(summary_path)
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

pub fn cmd_plot(inputs: &[PathBuf], output: &Path) -> Result<()> {
    if inputs.is_empty() {
        return Err(CliError::Config("plot needs at least one input curve file".into()));
    }
    let mut series = Vec::new();
    for (i, p) in inputs.iter().enumerate() {
        series.push(Series {
            points: report_io::load_curve(p)?,
            color: PALETTE[i % PALETTE.len()],
        });
    }
    render_chart(&series, output)?;
    println!("plot -> {}", output.display());
    Ok(())
}
