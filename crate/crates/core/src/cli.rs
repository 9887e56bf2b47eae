//! Command-line front end. Every subcommand reads inputs named on the
//! command line and writes its outputs under `--out`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{validate_config, Architecture, LossKind, OptimizerKind, RunConfig};
use crate::data::imageio::load_rgb;
use crate::data::{load_seg_pairs, load_severity_samples, split_dataset, AugmentParams};
use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, ManifestEntry};
use crate::metrics::{write_seg_reports_csv, write_seg_reports_jsonl, SegReportRow};
use crate::pipeline::{emit_report, read_verdicts, run_pipeline, summary_csv, ArtifactSegmenter, PipelineConfig, Policy};
use crate::segmentation::{evaluate_segmenter, run_crossval, train_segmenter_with, ResUnetOptions, SegModel, TrainOptions};
use crate::severity::{
    read_grid_csv, run_grid, select_base_models, write_grid_csv, Backbone, BackboneSpec, GridSettings, GridSpec,
};
use crate::stacking::{build_severity_stack, run_stacking_comparison, MetaLearnerKind, MetaProtocol, StackBundle, StackedModel};
use crate::synth;
use crate::types::{ArtifactKind, RgbImage, SegPair, Severity};

#[derive(Debug, Parser)]
#[command(name = "slideqc", version, about = "Artifact segmentation and severity grading for slide tiles")]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Shared {
    /// key=value run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Dataset manifest
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or check a dataset manifest
    Ingest(IngestArgs),
    /// Split a manifest into train/valid/test manifests
    Split(SplitArgs),
    /// Train a segmentation model
    TrainSeg(TrainSegArgs),
    /// Score a segmentation model on a labelled manifest
    EvalSeg(EvalSegArgs),
    /// k-fold cross-validation of a segmentation model
    Crossval(CrossvalArgs),
    /// Train the backbone x optimizer x loss severity grid
    TrainGrid(TrainGridArgs),
    /// Rank grid results and keep the top k
    SelectBases(SelectArgs),
    /// Compare meta learners over top-k base combinations and save a stack
    Stack(StackArgs),
    /// Tile an image, segment, grade and write a decision report
    Run(RunArgs),
    /// Summarise an existing verdict file
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of tile images; subdirectories named low/mid/high set severity
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Directory of masks named like their images
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long)]
    pub kind: Option<ArtifactKind>,
    /// Write a synthetic dataset instead: `seg` or `severity`
    #[arg(long)]
    pub synthetic: Option<String>,
    /// Images (seg) or images per class (severity)
    #[arg(long, default_value_t = 24)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub side: usize,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// train,valid,test counts; defaults to 80/10/10
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct TrainSegArgs {
    #[arg(long)]
    pub valid_manifest: Option<PathBuf>,
    /// Square input side; images are resized
    #[arg(long, default_value_t = 64)]
    pub side: usize,
    #[arg(long)]
    pub no_squeeze_excite: bool,
    #[arg(long)]
    pub no_aspp: bool,
    #[arg(long)]
    pub no_attention: bool,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalSegArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.85")]
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    /// Ids per round carved from the training folds for validation;
    /// a tenth of the dataset by default
    #[arg(long)]
    pub n_valid: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub side: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.85")]
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct TrainGridArgs {
    #[arg(long)]
    pub test_manifest: PathBuf,
    #[arg(long)]
    pub valid_manifest: Option<PathBuf>,
    /// Backbone names; all ten by default
    #[arg(long, value_delimiter = ',')]
    pub backbones: Vec<Backbone>,
    #[arg(long, value_delimiter = ',', default_value = "adam,adamax,rmsprop")]
    pub optimizers: Vec<OptimizerKind>,
    #[arg(long, value_delimiter = ',', default_value = "categorical_cross_entropy,kl_divergence")]
    pub losses: Vec<LossKind>,
    #[arg(long, default_value_t = 25)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long)]
    pub augment: bool,
    #[arg(long)]
    pub fine_tune: bool,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Grid results CSV
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct StackArgs {
    /// Ranked bases CSV from select-bases
    #[arg(long)]
    pub bases: PathBuf,
    #[arg(long)]
    pub test_manifest: PathBuf,
    /// Largest top-k combination; every base by default
    #[arg(long)]
    pub top: Option<usize>,
    /// Meta learner saved in the stack bundle
    #[arg(long, default_value = "logistic_regression")]
    pub meta: MetaLearnerKind,
    /// Fit meta learners on test-split predictions
    #[arg(long)]
    pub fit_on_test: bool,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 25)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Input image; a synthetic slide is used when absent
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    pub synthetic_side: usize,
    /// `kind=checkpoint` pairs
    #[arg(long = "seg", value_parser = parse_seg_arg, required = true)]
    pub seg: Vec<(ArtifactKind, PathBuf)>,
    /// Stack bundle from `stack`
    #[arg(long)]
    pub stack: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub tile: usize,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub trigger: f64,
    #[arg(long)]
    pub slide_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Verdict file; `<out>/verdicts.jsonl` by default
    #[arg(long)]
    pub verdicts: Option<PathBuf>,
}

fn parse_seg_arg(s: &str) -> std::result::Result<(ArtifactKind, PathBuf), String> {
    let (k, p) = s.split_once('=').ok_or_else(|| format!("expected kind=path, got `{s}`"))?;
    Ok((k.parse()?, PathBuf::from(p)))
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run_config(shared: &Shared) -> Result<RunConfig> {
    let mut cfg = match &shared.config {
        Some(p) => {
            if !p.exists() {
                return Err(Error::MissingFile(p.clone()));
            }
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = shared.seed {
        cfg.seed = s;
    }
    let problems = validate_config(&cfg);
    if !problems.is_empty() {
        return Err(Error::InvalidArgument(problems.join("; ")));
    }
    Ok(cfg)
}

fn manifest(shared: &Shared) -> Result<DatasetManifest> {
    let p = shared.manifest.as_ref().ok_or_else(|| Error::InvalidArgument("--manifest is required".into()))?;
    DatasetManifest::load(p)
}

fn out_dir(shared: &Shared) -> Result<&Path> {
    std::fs::create_dir_all(&shared.out).map_err(|e| Error::io(&shared.out, e))?;
    Ok(&shared.out)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let s = &cli.shared;
    match &cli.command {
        Command::Ingest(a) => ingest(s, a),
        Command::Split(a) => split(s, a),
        Command::TrainSeg(a) => train_seg(s, a),
        Command::EvalSeg(a) => eval_seg(s, a),
        Command::Crossval(a) => crossval(s, a),
        Command::TrainGrid(a) => train_grid(s, a),
        Command::SelectBases(a) => select_bases(s, a),
        Command::Stack(a) => stack(s, a),
        Command::Run(a) => run(s, a),
        Command::Report(a) => report(s, a),
    }
}

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "tif", "tiff"];

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension().and_then(|e| e.to_str()).is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_lowercase().as_str()))
        })
        .collect();
    out.sort();
    Ok(out)
}

fn ingest(s: &Shared, a: &IngestArgs) -> Result<()> {
    let seed = s.seed.unwrap_or(0);
    let m = if let Some(kind) = &a.synthetic {
        let dir = out_dir(s)?;
        match kind.as_str() {
            "seg" => synth::write_seg_dataset(dir, a.count, a.side, a.kind.unwrap_or(ArtifactKind::TissueFold), seed)?,
            "severity" => synth::write_severity_dataset(dir, a.count, a.side, seed)?,
            other => return Err(Error::InvalidArgument(format!("unknown synthetic dataset `{other}`"))),
        }
    } else if let Some(images) = &a.images {
        let mut entries = Vec::new();
        let mut groups: Vec<(PathBuf, Option<Severity>)> = vec![(images.clone(), None)];
        for sev in Severity::ALL {
            let sub = images.join(sev.name());
            if sub.is_dir() {
                groups.push((sub, Some(sev)));
            }
        }
        for (dir, severity) in groups {
            for img in image_files(&dir)? {
                let stem = img.file_stem().and_then(|x| x.to_str()).unwrap_or_default().to_string();
                let mask_path = a.masks.as_ref().map(|m| m.join(format!("{stem}.png"))).filter(|p| p.is_file());
                let image_path = std::fs::canonicalize(&img).unwrap_or(img);
                let mask_path = mask_path.map(|p| std::fs::canonicalize(&p).unwrap_or(p));
                entries.push(ManifestEntry { tile_id: stem, image_path, mask_path, severity, artifact_kind: a.kind });
            }
        }
        let m = DatasetManifest::new("", entries)?;
        let path = s.manifest.clone().unwrap_or_else(|| s.out.join("manifest.tsv"));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        m.save(&path)?;
        println!("wrote {}", path.display());
        m
    } else {
        manifest(s)?
    };
    let mut sizes: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for e in &m.entries {
        let img = load_rgb(&m.resolve(&e.image_path))?;
        *sizes.entry((img.shape()[0], img.shape()[1])).or_default() += 1;
    }
    println!("{} entries", m.len());
    for (k, v) in m.counts_by_kind() {
        println!("kind {k}: {v}");
    }
    for (k, v) in m.counts_by_severity() {
        println!("severity {k}: {v}");
    }
    for ((h, w), n) in sizes {
        println!("size {h}x{w}: {n}");
    }
    Ok(())
}

fn split(s: &Shared, a: &SplitArgs) -> Result<()> {
    let m = manifest(s)?;
    let seed = s.seed.unwrap_or(0);
    let counts = match &a.counts {
        Some(c) if c.len() == 3 => (c[0], c[1], c[2]),
        Some(c) => return Err(Error::InvalidArgument(format!("--counts needs 3 values, got {}", c.len()))),
        None => {
            let valid = m.len() / 10;
            (m.len() - 2 * valid, valid, valid)
        }
    };
    let spec = split_dataset(&m, counts, seed)?;
    let dir = out_dir(s)?;
    let resolved = m.with_resolved_paths();
    for (name, ids) in [("train", &spec.train_ids), ("valid", &spec.valid_ids), ("test", &spec.test_ids)] {
        resolved.subset(ids)?.save(&dir.join(format!("{name}.tsv")))?;
    }
    let p = dir.join("split.json");
    std::fs::write(&p, serde_json::to_string_pretty(&spec)?).map_err(|e| Error::io(&p, e))?;
    println!("train {} valid {} test {}", spec.train_ids.len(), spec.valid_ids.len(), spec.test_ids.len());
    Ok(())
}

fn pairs(m: &DatasetManifest, side: usize) -> Result<Vec<SegPair>> {
    let p: Vec<SegPair> = load_seg_pairs(m, Some((side, side)))?.into_iter().map(|(_, p)| p).collect();
    if p.is_empty() {
        return Err(Error::Empty("manifest has no masked entries".into()));
    }
    Ok(p)
}

fn train_seg(s: &Shared, a: &TrainSegArgs) -> Result<()> {
    let cfg = run_config(s)?;
    let train = pairs(&manifest(s)?, a.side)?;
    let valid = match &a.valid_manifest {
        Some(p) => pairs(&DatasetManifest::load(p)?, a.side)?,
        None => train.clone(),
    };
    let opts = ResUnetOptions { squeeze_excite: !a.no_squeeze_excite, aspp: !a.no_aspp, attention: !a.no_attention };
    let model = SegModel::build(cfg.model, (a.side, a.side), cfg.width_scale, cfg.seed, opts)?;
    let (model, history) = train_segmenter_with(model, &train, &valid, &cfg, &TrainOptions { verbose: !a.quiet, ..Default::default() })?;
    let dir = out_dir(s)?;
    model.save(&dir.join("model.json"))?;
    history.write_csv(&dir.join("history.csv"))?;
    cfg.save(&dir.join("config.txt"))?;
    println!("{} epochs ({:?}); wrote {}", history.records.len(), history.stop_reason, dir.join("model.json").display());
    Ok(())
}

fn eval_seg(s: &Shared, a: &EvalSegArgs) -> Result<()> {
    let model = SegModel::load(&a.model)?;
    let test = pairs(&manifest(s)?, model.input_shape.0)?;
    let report = evaluate_segmenter(&model, &test, &a.thresholds)?;
    let optimizer = s.config.as_ref().map(|p| RunConfig::load(p)).transpose()?.map_or_else(String::new, |c| c.optimizer.to_string());
    let row = SegReportRow { model: model.architecture.to_string(), optimizer, report };
    let dir = out_dir(s)?;
    write_seg_reports_csv(std::slice::from_ref(&row), &dir.join("seg_report.csv"))?;
    write_seg_reports_jsonl(std::slice::from_ref(&row), &dir.join("seg_report.jsonl"))?;
    println!("avg test iou {:.6}", row.report.avg_test_iou);
    for t in &row.report.threshold_accuracies {
        println!("accuracy at iou > {}: {:.4}%", t.threshold, 100.0 * t.accuracy);
    }
    Ok(())
}

fn crossval(s: &Shared, a: &CrossvalArgs) -> Result<()> {
    let mut cfg = run_config(s)?;
    if let Some(o) = a.optimizer {
        cfg.optimizer = o;
    }
    let m = manifest(s)?;
    let data = load_seg_pairs(&m, Some((a.side, a.side)))?;
    let outcomes = run_crossval(&data, a.k, a.n_valid.unwrap_or(data.len() / 10), &cfg, &a.thresholds, &TrainOptions::default())?;
    let dir = out_dir(s)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["round".to_string(), "train_folds".into(), "test_fold".into(), "epochs".into(), "stop_reason".into(), "avg_test_iou".into()];
    header.extend(a.thresholds.iter().map(|t| format!("test_accuracy_iou_{t:.2}")));
    w.write_record(&header)?;
    let mut lines = String::new();
    for o in &outcomes {
        let mut rec = vec![
            o.round.to_string(),
            o.train_folds.clone(),
            o.test_fold.to_string(),
            o.epochs_run.to_string(),
            format!("{:?}", o.stop_reason),
            format!("{:.10}", o.report.avg_test_iou),
        ];
        rec.extend(o.report.threshold_accuracies.iter().map(|t| format!("{:.10}", t.accuracy)));
        w.write_record(&rec)?;
        lines.push_str(&serde_json::to_string(o)?);
        lines.push('\n');
        println!("round {} test fold {}: avg iou {:.4}", o.round, o.test_fold, o.report.avg_test_iou);
    }
    let bytes = w.into_inner().map_err(|e| Error::io(dir, e.into_error()))?;
    let p = dir.join("crossval.csv");
    std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    let p = dir.join("crossval.jsonl");
    std::fs::write(&p, lines).map_err(|e| Error::io(&p, e))
}

fn labelled(m: &DatasetManifest) -> Result<Vec<(RgbImage, Severity)>> {
    Ok(load_severity_samples(m, Backbone::Vgg16.input_side())?.into_iter().map(|(_, i, l)| (i, l)).collect())
}

fn train_grid(s: &Shared, a: &TrainGridArgs) -> Result<()> {
    let train = labelled(&manifest(s)?)?;
    let test = labelled(&DatasetManifest::load(&a.test_manifest)?)?;
    let valid = a.valid_manifest.as_ref().map(|p| DatasetManifest::load(p).and_then(|m| labelled(&m))).transpose()?;
    let backbones = if a.backbones.is_empty() { Backbone::ALL.to_vec() } else { a.backbones.clone() };
    let grid = GridSpec {
        backbones: backbones.into_iter().map(BackboneSpec::desk).collect(),
        optimizers: a.optimizers.clone(),
        losses: a.losses.clone(),
    };
    let dir = out_dir(s)?;
    let settings = GridSettings {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: s.seed.unwrap_or(0),
        fine_tune: a.fine_tune,
        augment: a.augment.then(|| AugmentParams { rescale: 1.0, ..AugmentParams::severity_default() }),
        checkpoint_dir: Some(dir.join("checkpoints")),
        results_csv: Some(dir.join("grid.csv")),
    };
    let outcome = run_grid(&train, valid.as_deref(), &test, &grid, &settings)?;
    for r in &outcome.results {
        println!("{}/{}/{}: accuracy {:.4} roc {:.4} val_loss {:.6}", r.backbone, r.optimizer, r.loss, r.test_accuracy, r.roc_score, r.val_loss);
    }
    for f in &outcome.failures {
        eprintln!("failed {}: {}", f.key, f.message);
    }
    if outcome.results.is_empty() && !outcome.failures.is_empty() {
        return Err(Error::Model("every grid cell failed".into()));
    }
    Ok(())
}

fn select_bases(s: &Shared, a: &SelectArgs) -> Result<()> {
    let results = read_grid_csv(&a.results)?;
    let picked = select_base_models(&results, a.k)?;
    let dir = out_dir(s)?;
    write_grid_csv(&picked, &dir.join("bases.csv"))?;
    for (i, r) in picked.iter().enumerate() {
        println!("{}: {} {} {} accuracy {:.10} val_loss {:.10}", i + 1, r.backbone, r.optimizer, r.loss, r.test_accuracy, r.val_loss);
    }
    Ok(())
}

fn stack(s: &Shared, a: &StackArgs) -> Result<()> {
    let mut ranked = read_grid_csv(&a.bases)?;
    if let Some(top) = a.top {
        if top == 0 || top > ranked.len() {
            return Err(Error::InvalidArgument(format!("--top {top} with {} bases", ranked.len())));
        }
        ranked.truncate(top);
    }
    let train = labelled(&manifest(s)?)?;
    let test = labelled(&DatasetManifest::load(&a.test_manifest)?)?;
    let settings = GridSettings { epochs: a.epochs, batch_size: a.batch, learning_rate: a.lr, seed: s.seed.unwrap_or(0), ..GridSettings::default() };
    let protocol = if a.fit_on_test { MetaProtocol::TestSplit } else { MetaProtocol::OutOfFold { folds: a.folds } };
    let st = build_severity_stack(&ranked, &train, &test, &settings, protocol)?;
    let combos: Vec<usize> = (2.min(ranked.len())..=ranked.len()).collect();
    let table = run_stacking_comparison(&st.train_features, &st.eval_features, &MetaLearnerKind::ALL, &combos, settings.seed)?;
    let dir = out_dir(s)?;
    table.write_csv(&dir.join("comparison.csv"))?;
    print!("{}", table.to_csv_string());
    let model = StackedModel::fit(a.meta, &st.train_features, st.base_names(), settings.seed)?;
    StackBundle::new(st.bases, model)?.save(&dir.join("stack.json"))?;
    println!("wrote {}", dir.join("stack.json").display());
    Ok(())
}

fn run(s: &Shared, a: &RunArgs) -> Result<()> {
    let seed = s.seed.unwrap_or(0);
    let (image, slide) = match &a.image {
        Some(p) => (load_rgb(p)?, p.file_stem().and_then(|x| x.to_str()).unwrap_or("slide").to_string()),
        None => (synth::synthetic_slide(a.synthetic_side, a.synthetic_side, 5, seed).0, "synthetic".to_string()),
    };
    let models: Vec<(ArtifactKind, SegModel)> = a.seg.iter().map(|(k, p)| Ok((*k, SegModel::load(p)?))).collect::<Result<_>>()?;
    let segmenters: BTreeMap<ArtifactKind, &dyn ArtifactSegmenter> = models.iter().map(|(k, m)| (*k, m as &dyn ArtifactSegmenter)).collect();
    let bundle = StackBundle::load(&a.stack)?;
    let config = PipelineConfig {
        tile_side: a.tile,
        stride: a.stride.unwrap_or(a.tile),
        kinds: segmenters.keys().copied().collect(),
        policy: Policy { trigger_fraction: a.trigger, ..Policy::default() },
    };
    let report = run_pipeline(&image, a.slide_id.as_deref().unwrap_or(&slide), &segmenters, &bundle, &config)?;
    let files = emit_report(&report, out_dir(s)?)?;
    print!("{}", summary_csv(&report.verdicts));
    println!("wrote {}", files.verdicts.display());
    Ok(())
}

fn report(s: &Shared, a: &ReportArgs) -> Result<()> {
    let path = a.verdicts.clone().unwrap_or_else(|| s.out.join(crate::pipeline::VERDICTS_FILE));
    let verdicts = read_verdicts(&path)?;
    let summary = summary_csv(&verdicts);
    let dir = out_dir(s)?;
    let p = dir.join(crate::pipeline::SUMMARY_FILE);
    std::fs::write(&p, &summary).map_err(|e| Error::io(&p, e))?;
    print!("{summary}");
    for v in &verdicts {
        let sev = v.severity.map_or("-", Severity::name);
        println!("{}\t{:.4}\t{}\t{}", v.tile_id, v.artifact_fraction, sev, v.decision);
    }
    Ok(())
}

/// Architecture by name, for callers building configs by hand.
pub fn architecture(name: &str) -> Result<Architecture> {
    name.parse().map_err(Error::InvalidArgument)
}
