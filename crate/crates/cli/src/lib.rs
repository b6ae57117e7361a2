//! `resface` command implementations.

pub mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::{concatenate, s, Axis};
use resface_core::checkpoint::{load_checkpoint, Checkpoint};
use resface_core::config::{AblationMode, AttributeScope, TrainConfig};
use resface_core::data::{
    attribute_correlation, derive_seed, make_balanced_training_split, make_test_split, parse_attribute_index,
    preprocess, synth_generate, AttributeKind, FileSource, InMemorySource, PairedSource, SynthDataset, SynthSample,
};
use resface_core::evalkit::{
    export_grid, landmark_gain_eval, manipulate, oracle_paired_eval, render_grid, Detector, Direction, EvalSet,
    NoisyOracleDetector, NoisyOracleParams, OracleDetector, OracleReport, SubprocessDetector, Tile,
};
use resface_core::trainer::{train, RunOutput};

use crate::manifest::{output_digests, path_digest, Manifest};

#[derive(Parser, Debug)]
#[command(name = "resface", version, about = "Residual-image face attribute manipulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train G0, G1 and D.
    Train(TrainArgs),
    /// Apply a trained generator to images.
    Infer(InferArgs),
    /// Landmark-detection gain on D0, D1 and D1m.
    EvalLandmarks(EvalLandmarksArgs),
    /// Attribute statistics of a CelebA-style attribute file.
    DatasetStats(DatasetStatsArgs),
    /// Render a synthetic paired dataset.
    SynthGen(SynthGenArgs),
    /// Train and compare the full model with its ablations.
    Ablate(AblateArgs),
    /// Tile inputs, outputs and residuals into one image.
    ExportGrid(ExportGridArgs),
    /// Re-run a recorded command and compare its outputs.
    Replay(ReplayArgs),
}

/// Configuration precedence: flags, then `--config`, then defaults.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// JSON file with any subset of the configuration fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "glasses")]
    pub attribute: String,
    #[arg(long, default_value = "local")]
    pub scope: String,
    /// Start from the desk-scale defaults (64x64, batch 16).
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub width_divisor: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Sets beta to 0.1 * alpha unless --beta is also given.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// target-class or paper-literal.
    #[arg(long)]
    pub gan_loss_mode: Option<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let scope: AttributeScope = self.scope.parse()?;
        let mut cfg = if self.desk {
            TrainConfig::desk(&self.attribute, scope)
        } else {
            TrainConfig::new(&self.attribute, scope)
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
            let doc: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("config {} is not valid JSON", path.display()))?;
            cfg = cfg.overlay_json(&doc)?;
            if doc.get("alpha").is_some() && doc.get("beta").is_none() {
                cfg.beta = 0.1 * cfg.alpha;
            }
        }
        macro_rules! set {
            ($($field:ident),*) => {$( if let Some(v) = self.$field { cfg.$field = v; } )*};
        }
        set!(image_size, width_divisor, batch_size, iterations, learning_rate, seed, checkpoint_every);
        if let Some(a) = self.alpha {
            cfg = cfg.with_alpha(a);
        }
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        if let Some(m) = &self.gan_loss_mode {
            cfg.gan_loss_mode = m.parse()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// `synth`, a directory written by synth-gen, a directory with neg/ and
    /// pos/ images, or `celeba` (with --celeba-attrs and --celeba-images).
    #[arg(long)]
    pub data: String,
    #[arg(long, default_value_t = 2000)]
    pub synth_count: usize,
    #[arg(long, default_value = "glasses-like")]
    pub synth_kind: String,
    #[arg(long)]
    pub celeba_attrs: Option<PathBuf>,
    #[arg(long)]
    pub celeba_images: Option<PathBuf>,
    /// Held-out images per class for the CelebA test split.
    #[arg(long, default_value_t = 1000)]
    pub test_size: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// full, no-residual or no-dual.
    #[arg(long, default_value = "full")]
    pub mode: String,
    /// Checkpoint directory to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// An image file or a directory of images.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// 0to1 (add the attribute) or 1to0 (remove it).
    #[arg(long, default_value = "1to0")]
    pub direction: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct EvalDataArgs {
    /// `synth` or a directory written by synth-gen.
    #[arg(long, default_value = "synth")]
    pub data: String,
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 777)]
    pub data_seed: u64,
    #[arg(long, default_value = "glasses-like")]
    pub synth_kind: String,
}

#[derive(Args, Debug)]
pub struct EvalLandmarksArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub data: EvalDataArgs,
    /// oracle, noisy-oracle or external.
    #[arg(long, default_value = "noisy-oracle")]
    pub detector: String,
    /// Program for the external detector.
    #[arg(long)]
    pub detector_cmd: Option<String>,
    #[arg(long = "detector-arg")]
    pub detector_args: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DatasetStatsArgs {
    #[arg(long)]
    pub attr_file: PathBuf,
    /// Attribute pair whose Pearson correlation is reported; repeatable.
    #[arg(long, num_args = 2, value_names = ["A", "B"], action = clap::ArgAction::Append)]
    pub pair: Vec<String>,
    /// Report test and balanced training split sizes for this attribute.
    #[arg(long)]
    pub balance: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub test_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where to write stats.json and the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthGenArgs {
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value = "glasses-like")]
    pub kind: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "full,no-residual,no-dual")]
    pub modes: Vec<String>,
    #[arg(long, default_value_t = 200)]
    pub eval_count: usize,
    #[arg(long, default_value_t = 777)]
    pub eval_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExportGridArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub data: EvalDataArgs,
    #[arg(long, default_value = "1to0")]
    pub direction: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// What a finished command leaves behind for its manifest.
struct Record {
    out: PathBuf,
    seed: Option<u64>,
    config: Option<serde_json::Value>,
    inputs: Vec<PathBuf>,
}

/// Parses `argv` (without the program name) and runs the command.
pub fn run(argv: &[String]) -> Result<()> {
    let cli = Cli::try_parse_from(std::iter::once("resface".to_string()).chain(argv.iter().cloned()))?;
    execute(cli, argv)
}

/// Runs an already parsed command; `argv` is recorded in the manifest.
pub fn execute(cli: Cli, argv: &[String]) -> Result<()> {
    let (name, record) = match cli.command {
        Command::Train(a) => ("train", Some(cmd_train(&a)?)),
        Command::Infer(a) => ("infer", Some(cmd_infer(&a)?)),
        Command::EvalLandmarks(a) => ("eval-landmarks", Some(cmd_eval_landmarks(&a)?)),
        Command::DatasetStats(a) => ("dataset-stats", cmd_dataset_stats(&a)?),
        Command::SynthGen(a) => ("synth-gen", Some(cmd_synth_gen(&a)?)),
        Command::Ablate(a) => ("ablate", Some(cmd_ablate(&a)?)),
        Command::ExportGrid(a) => ("export-grid", Some(cmd_export_grid(&a)?)),
        Command::Replay(a) => return cmd_replay(&a),
    };
    if let Some(r) = record {
        write_manifest(name, argv, r)?;
    }
    Ok(())
}

fn write_manifest(command: &str, argv: &[String], r: Record) -> Result<()> {
    let mut inputs = BTreeMap::new();
    for p in &r.inputs {
        inputs.insert(p.display().to_string(), path_digest(p)?);
    }
    let m = Manifest {
        tool: format!("resface {}", env!("CARGO_PKG_VERSION")),
        command: command.to_string(),
        argv: argv.to_vec(),
        cwd: std::env::current_dir()?,
        seed: r.seed,
        config: r.config,
        inputs,
        outputs: output_digests(&r.out)?,
    };
    m.save(&r.out)
}

fn create_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))
}

fn parse_mode(s: &str) -> Result<AblationMode> {
    Ok(s.parse()?)
}

fn parse_kind(s: &str) -> Result<AttributeKind> {
    Ok(s.parse()?)
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Training images for `cfg`; also returns the paths the run depends on.
fn training_source(data: &DataArgs, cfg: &TrainConfig, out: &Path) -> Result<(Arc<dyn PairedSource>, Vec<PathBuf>)> {
    match data.data.as_str() {
        "synth" => {
            let samples = synth_generate(
                data.synth_count,
                cfg.image_size,
                parse_kind(&data.synth_kind)?,
                derive_seed("train-data", &[cfg.seed]),
            )?;
            Ok((Arc::new(InMemorySource::from_synth(&samples)?), vec![]))
        }
        "celeba" => {
            let attrs = data.celeba_attrs.as_ref().context("--data celeba needs --celeba-attrs")?;
            let images = data.celeba_images.as_ref().context("--data celeba needs --celeba-images")?;
            let index = parse_attribute_index(attrs)?;
            let (test_neg, test_pos) =
                make_test_split(&index, &cfg.attribute_name, data.test_size, derive_seed("test-split", &[cfg.seed]))?;
            let test_ids: Vec<String> = test_neg.iter().chain(&test_pos).cloned().collect();
            let (neg, pos) = make_balanced_training_split(
                &index,
                &cfg.attribute_name,
                &test_ids,
                derive_seed("balance", &[cfg.seed]),
            )?;
            let split = serde_json::json!({ "test_negative": test_neg, "test_positive": test_pos });
            std::fs::write(out.join("test_split.json"), serde_json::to_string_pretty(&split)?)?;
            let paths = |ids: &[String]| ids.iter().map(|id| images.join(id)).collect::<Vec<_>>();
            let source = FileSource::new(cfg.image_size, paths(&neg), paths(&pos));
            Ok((Arc::new(source), vec![attrs.clone()]))
        }
        dir => {
            let dir = PathBuf::from(dir);
            ensure!(dir.is_dir(), "data directory {} does not exist", dir.display());
            if dir.join(resface_core::data::synth::SYNTH_MANIFEST).exists() {
                let set = SynthDataset::load(&dir)?;
                ensure!(
                    set.image_size == cfg.image_size,
                    "{} holds {}x{} images, config expects {}",
                    dir.display(),
                    set.image_size,
                    set.image_size,
                    cfg.image_size
                );
                return Ok((Arc::new(InMemorySource::from_synth(&set.samples)?), vec![dir]));
            }
            let (neg, pos) = (image_files(&dir.join("neg"))?, image_files(&dir.join("pos"))?);
            ensure!(!neg.is_empty() && !pos.is_empty(), "{} needs images in neg/ and pos/", dir.display());
            Ok((Arc::new(FileSource::new(cfg.image_size, neg, pos)), vec![dir]))
        }
    }
}

fn cmd_train(a: &TrainArgs) -> Result<Record> {
    let cfg = a.config.resolve()?;
    let mode = parse_mode(&a.mode)?;
    create_out(&a.out)?;
    let (source, mut inputs) = training_source(&a.data, &cfg, &a.out)?;
    let resume = match &a.resume {
        Some(p) => {
            inputs.push(p.clone());
            Some(load_checkpoint(p)?)
        }
        None => None,
    };
    if let Some(c) = &a.config.config {
        inputs.push(c.clone());
    }
    cfg.save(&a.out.join("config.json"))?;
    let run = RunOutput { dir: a.out.clone() };
    let outcome = train(&cfg, source, mode, resume.as_ref(), Some(&run))?;
    let written = load_checkpoint(&run.final_dir())?;
    ensure!(written == outcome.checkpoint, "final checkpoint did not read back identically");
    if let Some(last) = outcome.log.last() {
        println!(
            "iteration {}: gan {:.4} dual {:.4} pix {:.4} per {:.4} cls {:.4}",
            last.iteration, last.gan, last.dual, last.pix, last.per, last.cls
        );
    }
    println!("checkpoint written to {}", run.final_dir().display());
    Ok(Record {
        out: a.out.clone(),
        seed: Some(cfg.seed),
        config: Some(serde_json::to_value(&cfg)?),
        inputs,
    })
}

fn load_ckpt(path: &Path) -> Result<Checkpoint> {
    // Accept a run directory as well as a checkpoint directory.
    let dir = if path.join("final").is_dir() { path.join("final") } else { path.to_path_buf() };
    load_checkpoint(&dir).with_context(|| format!("cannot load checkpoint {}", path.display()))
}

fn cmd_infer(a: &InferArgs) -> Result<Record> {
    let ckpt = load_ckpt(&a.ckpt)?;
    let direction: Direction = a.direction.parse()?;
    let files = if a.input.is_dir() { image_files(&a.input)? } else { vec![a.input.clone()] };
    ensure!(!files.is_empty(), "no images found in {}", a.input.display());
    create_out(&a.out)?;
    let size = ckpt.meta.config.image_size;
    for f in &files {
        let img = image::open(f).with_context(|| format!("cannot decode {}", f.display()))?;
        let x = preprocess(&img, size)?;
        let (y, r) = manipulate(&ckpt, &x.view(), direction)?;
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        let out_img = a.out.join(format!("{stem}_manipulated.png"));
        let out_res = a.out.join(format!("{stem}_residual.png"));
        export_grid(&[vec![Tile::Image(y.view())]], &out_img)?;
        export_grid(&[vec![Tile::Residual(r.view())]], &out_res)?;
        for p in [&out_img, &out_res] {
            image::open(p).with_context(|| format!("{} did not read back", p.display()))?;
        }
    }
    println!("{} images written to {}", files.len(), a.out.display());
    Ok(Record {
        out: a.out.clone(),
        seed: None,
        config: Some(serde_json::to_value(&ckpt.meta.config)?),
        inputs: vec![a.ckpt.clone(), a.input.clone()],
    })
}

/// Evaluation samples and the paths they came from.
fn eval_samples(d: &EvalDataArgs, size: usize) -> Result<(Vec<SynthSample>, Vec<PathBuf>)> {
    if d.data == "synth" {
        return Ok((synth_generate(d.count, size, parse_kind(&d.synth_kind)?, d.data_seed)?, vec![]));
    }
    let dir = PathBuf::from(&d.data);
    let set = SynthDataset::load(&dir)?;
    ensure!(set.image_size == size, "{} holds {}x{} images, checkpoint expects {size}", dir.display(), set.image_size, set.image_size);
    let mut samples = set.samples;
    samples.truncate(d.count);
    Ok((samples, vec![dir]))
}

fn cmd_eval_landmarks(a: &EvalLandmarksArgs) -> Result<Record> {
    let ckpt = load_ckpt(&a.ckpt)?;
    let (samples, mut inputs) = eval_samples(&a.data, ckpt.meta.config.image_size)?;
    ensure!(samples.len() >= 2, "landmark evaluation needs at least two samples");
    let half = samples.len() / 2;
    let d0 = EvalSet::from_synth(&samples[..half], false, "d0-")?;
    let d1 = EvalSet::from_synth(&samples[half..], true, "d1-")?;
    let pairs: Vec<(String, &SynthSample)> = d0
        .ids
        .iter()
        .zip(&samples[..half])
        .chain(d1.ids.iter().zip(&samples[half..]))
        .map(|(id, s)| (id.clone(), s))
        .collect();
    let detector: Box<dyn Detector> = match a.detector.as_str() {
        "oracle" => Box::new(OracleDetector {
            truth: pairs.iter().map(|(id, s)| (id.clone(), s.landmarks.clone())).collect(),
        }),
        "noisy-oracle" => Box::new(NoisyOracleDetector::from_samples(&pairs, NoisyOracleParams::default())),
        "external" => Box::new(SubprocessDetector {
            program: a.detector_cmd.clone().context("--detector external needs --detector-cmd")?,
            args: a.detector_args.clone(),
        }),
        other => bail!("unknown detector {other:?} (expected oracle, noisy-oracle or external)"),
    };
    create_out(&a.out)?;
    let report = landmark_gain_eval(&ckpt, &d0, &d1, detector.as_ref())?;
    std::fs::write(a.out.join("gain.csv"), report.to_csv())?;
    std::fs::write(a.out.join("gain.txt"), report.to_text())?;
    let mut lines = String::new();
    for r in &report.records {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    std::fs::write(a.out.join("records.jsonl"), lines)?;
    print!("{}", report.to_text());
    inputs.push(a.ckpt.clone());
    Ok(Record {
        out: a.out.clone(),
        seed: Some(a.data.data_seed),
        config: Some(serde_json::to_value(&ckpt.meta.config)?),
        inputs,
    })
}

fn cmd_dataset_stats(a: &DatasetStatsArgs) -> Result<Option<Record>> {
    let index = parse_attribute_index(&a.attr_file)?;
    let mut stats = serde_json::Map::new();
    stats.insert("images".into(), index.len().into());
    println!("{} images, {} attributes", index.len(), index.names.len());
    let mut correlations = Vec::new();
    for pair in a.pair.chunks(2) {
        let r = attribute_correlation(&index, &pair[0], &pair[1])?;
        println!("corr({}, {}) = {r:.4}", pair[0], pair[1]);
        correlations.push(serde_json::json!({ "a": pair[0], "b": pair[1], "pearson": r }));
    }
    stats.insert("correlations".into(), correlations.into());
    if let Some(attr) = &a.balance {
        let (tn, tp) = make_test_split(&index, attr, a.test_size, derive_seed("test-split", &[a.seed]))?;
        let test_ids: Vec<String> = tn.iter().chain(&tp).cloned().collect();
        let (n, p) = make_balanced_training_split(&index, attr, &test_ids, derive_seed("balance", &[a.seed]))?;
        println!("{attr}: test {} + {}, balanced training {} + {}", tn.len(), tp.len(), n.len(), p.len());
        stats.insert(
            "balance".into(),
            serde_json::json!({ "attribute": attr, "test_negative": tn.len(), "test_positive": tp.len(),
                                "train_negative": n.len(), "train_positive": p.len() }),
        );
    }
    let Some(out) = &a.out else { return Ok(None) };
    create_out(out)?;
    std::fs::write(out.join("stats.json"), serde_json::to_string_pretty(&stats)? + "\n")?;
    Ok(Some(Record {
        out: out.clone(),
        seed: Some(a.seed),
        config: None,
        inputs: vec![a.attr_file.clone()],
    }))
}

fn cmd_synth_gen(a: &SynthGenArgs) -> Result<Record> {
    let set = SynthDataset::generate(a.count, a.size, parse_kind(&a.kind)?, a.seed)?;
    create_out(&a.out)?;
    set.export(&a.out)?;
    ensure!(SynthDataset::load(&a.out)? == set, "exported dataset did not read back identically");
    println!("{} samples written to {}", a.count, a.out.display());
    Ok(Record {
        out: a.out.clone(),
        seed: Some(a.seed),
        config: None,
        inputs: vec![],
    })
}

fn cmd_ablate(a: &AblateArgs) -> Result<Record> {
    let cfg = a.config.resolve()?;
    let modes = a.modes.iter().map(|m| parse_mode(m)).collect::<Result<Vec<_>>>()?;
    ensure!(!modes.is_empty(), "no modes given");
    create_out(&a.out)?;
    let (source, mut inputs) = training_source(&a.data, &cfg, &a.out)?;
    if let Some(c) = &a.config.config {
        inputs.push(c.clone());
    }
    cfg.save(&a.out.join("config.json"))?;
    let held_out = synth_generate(a.eval_count, cfg.image_size, parse_kind(&a.data.synth_kind)?, a.eval_seed)?;
    let mut reports: Vec<OracleReport> = Vec::new();
    let mut csv = String::from("mode,improved_fraction,mean_l1_input,mean_l1_output,mean_localization\n");
    for mode in modes {
        let run = RunOutput { dir: a.out.join(mode.to_string()) };
        let outcome = train(&cfg, source.clone(), mode, None, Some(&run))?;
        let r = oracle_paired_eval(&outcome.checkpoint, &held_out, Direction::Remove)?;
        println!(
            "{mode}: improved {:.3}, L1 {:.4} (input {:.4}), localization {:.3}",
            r.improved_fraction, r.mean_l1_output, r.mean_l1_input, r.mean_localization
        );
        csv.push_str(&format!(
            "{mode},{:.6},{:.6},{:.6},{:.6}\n",
            r.improved_fraction, r.mean_l1_input, r.mean_l1_output, r.mean_localization
        ));
        reports.push(r);
    }
    std::fs::write(a.out.join("ablation.csv"), csv)?;
    Ok(Record {
        out: a.out.clone(),
        seed: Some(cfg.seed),
        config: Some(serde_json::to_value(&cfg)?),
        inputs,
    })
}

fn cmd_export_grid(a: &ExportGridArgs) -> Result<Record> {
    let ckpt = load_ckpt(&a.ckpt)?;
    let direction: Direction = a.direction.parse()?;
    let (samples, mut inputs) = eval_samples(&a.data, ckpt.meta.config.image_size)?;
    ensure!(!samples.is_empty(), "no samples to show");
    let (src, dst): (Vec<_>, Vec<_>) = samples
        .iter()
        .map(|s| match direction {
            Direction::Remove => (s.image_pos.view(), s.image_neg.view()),
            Direction::Add => (s.image_neg.view(), s.image_pos.view()),
        })
        .unzip();
    let x = concatenate(Axis(0), &src)?;
    let target = concatenate(Axis(0), &dst)?;
    let (y, r) = manipulate(&ckpt, &x.view(), direction)?;
    let one = |a: &ndarray::Array4<f32>, i: usize| a.slice(s![i..i + 1, .., .., ..]).to_owned();
    let tiles: Vec<[ndarray::Array4<f32>; 4]> =
        (0..samples.len()).map(|i| [one(&x, i), one(&y, i), one(&r, i), one(&target, i)]).collect();
    let rows: Vec<Vec<Tile<'_>>> = tiles
        .iter()
        .map(|[xi, yi, ri, ti]| vec![Tile::Image(xi.view()), Tile::Image(yi.view()), Tile::Residual(ri.view()), Tile::Image(ti.view())])
        .collect();
    create_out(&a.out)?;
    let path = a.out.join("grid.png");
    let img = render_grid(&rows)?;
    img.save(&path)?;
    println!("{}x{} grid written to {}", img.width(), img.height(), path.display());
    inputs.push(a.ckpt.clone());
    Ok(Record {
        out: a.out.clone(),
        seed: Some(a.data.data_seed),
        config: Some(serde_json::to_value(&ckpt.meta.config)?),
        inputs,
    })
}

fn cmd_replay(a: &ReplayArgs) -> Result<()> {
    let recorded = Manifest::load(&a.manifest)?;
    ensure!(recorded.command != "replay", "cannot replay a replay");
    let changed = recorded.changed_inputs()?;
    ensure!(changed.is_empty(), "inputs changed since the recorded run: {}", changed.join(", "));
    create_out(&a.out)?;
    let out = a.out.canonicalize()?;
    ensure!(
        std::fs::read_dir(&out)?.next().is_none(),
        "replay output directory {} is not empty",
        out.display()
    );
    let argv = recorded.argv_with_out(&out)?;
    let previous = std::env::current_dir()?;
    std::env::set_current_dir(&recorded.cwd).with_context(|| format!("cannot enter {}", recorded.cwd.display()))?;
    let result = run(&argv);
    std::env::set_current_dir(previous)?;
    result?;
    let outputs = output_digests(&out)?;
    let mut differing: Vec<&String> = recorded
        .outputs
        .iter()
        .filter(|(k, v)| outputs.get(*k) != Some(*v))
        .map(|(k, _)| k)
        .collect();
    differing.extend(outputs.keys().filter(|k| !recorded.outputs.contains_key(*k)));
    ensure!(differing.is_empty(), "replay differs in {} files: {:?}", differing.len(), differing);
    println!("replay reproduced {} files bit-identically", outputs.len());
    Ok(())
}
