//! `colorcaps` command line: train, colorize, evaluate, gradcheck, inspect.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use colorcaps_core::capsnet::{
    build_model, count_parameters, forward, model_gradcheck_with_step, train_step, ColorCapsNetConfig, ModelParams,
    Optimizer,
};
use colorcaps_core::checkpoint::Checkpoint;
use colorcaps_core::data::{build_pairs, gray_to_tensor, lab_to_image, shuffle_batches, stack_batch, DatasetManifest};
use colorcaps_core::metrics::{psnr, ssim, ssim_global};
use colorcaps_core::netpbm::{load_image, write_image, Image};
use colorcaps_core::ops::Mode;
use colorcaps_core::patches::{reassemble, slice};
use colorcaps_core::Tensor;
use serde::{Deserialize, Serialize};

pub use config::{layered, RunConfig, TrainArgs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

/// Patches pushed through the network per forward call when colorizing.
const COLORIZE_CHUNK: usize = 256;

/// A failed command together with its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Check(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Check(_) => EXIT_CHECK,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Data(e) => write!(f, "{e:#}"),
            Failure::Check(msg) => f.write_str(msg),
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

#[derive(Debug, Parser)]
#[command(name = "colorcaps", version, about = "Capsule-network colorization of grayscale images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a manifest, writing a checkpoint per epoch and `loss.csv`.
    Train(TrainArgs),
    /// Colorize a grayscale PGM into a PPM.
    Colorize(ColorizeArgs),
    /// Score estimates against references as CSV `name,psnr,ssim`.
    Evaluate(EvaluateArgs),
    /// Compare analytic and finite-difference gradients of the full model.
    Gradcheck(GradcheckArgs),
    /// List the tensors and metadata of a checkpoint.
    Inspect(InspectArgs),
}

#[derive(Clone, Debug, Default, clap::Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColorizeArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Grayscale P5 image.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Color P6 image to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, clap::Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// A reference and an estimate image; repeat for more rows.
    #[arg(long, num_args = 2, value_names = ["REFERENCE", "ESTIMATE"])]
    pub pair: Vec<PathBuf>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Add an `ssim_global` column computed from whole-image statistics.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Width-reduced model, every coordinate.
    #[default]
    Reduced,
    /// Default model, a seeded sample of coordinates per tensor.
    Full,
}

#[derive(Clone, Debug, Default, clap::Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scale: Option<Scale>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Coordinates sampled per tensor at `--scale full`.
    #[arg(long)]
    pub per_tensor: Option<usize>,
    /// Central-difference step.
    #[arg(long)]
    pub step: Option<f64>,
    /// Largest relative error that still passes.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug, Default, clap::Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InspectArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(f) => {
            eprintln!("error: {f}");
            f.code()
        }
    }
}

/// Runs a command and returns what it prints on success.
pub fn dispatch(command: Command) -> Result<String, Failure> {
    match command {
        Command::Train(a) => {
            let args = layered(&a, a.config.as_deref()).map_err(usage)?;
            cmd_train(&args).map(|s| s.to_string())
        }
        Command::Colorize(a) => {
            let args = layered(&a, a.config.as_deref()).map_err(usage)?;
            let need = |p: &Option<PathBuf>, flag: &str| p.clone().ok_or_else(|| usage(anyhow!("--{flag} is required")));
            cmd_colorize(
                &need(&args.checkpoint, "checkpoint")?,
                &need(&args.input, "input")?,
                &need(&args.output, "output")?,
            )
            .map(|()| String::new())
        }
        Command::Evaluate(a) => {
            let args = layered(&a, a.config.as_deref()).map_err(usage)?;
            cmd_evaluate(&args)
        }
        Command::Gradcheck(a) => {
            let args = layered(&a, a.config.as_deref()).map_err(usage)?;
            cmd_gradcheck(&args)
        }
        Command::Inspect(a) => {
            let args = layered(&a, a.config.as_deref()).map_err(usage)?;
            let path = args.checkpoint.ok_or_else(|| usage(anyhow!("--checkpoint is required")))?;
            cmd_inspect(&path)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub pairs: usize,
    pub skipped_records: usize,
    /// Mean loss of every epoch so far, including epochs before a resume.
    pub history: Vec<f32>,
}

impl std::fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "trained on {} patches ({} records skipped); {} epochs logged in {}",
            self.pairs,
            self.skipped_records,
            self.history.len(),
            self.out_dir.display()
        )
    }
}

pub fn checkpoint_path(out_dir: &Path, epoch: usize) -> PathBuf {
    out_dir.join(format!("epoch-{epoch:04}.ccps"))
}

fn loss_csv(history: &[f32]) -> String {
    let mut s = String::from("epoch,mean_loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(s, "{},{l:?}", i + 1);
    }
    s
}

fn save_epoch(
    run: &RunConfig,
    model: &ModelParams,
    opt: &Optimizer,
    epoch: usize,
    history: &[f32],
) -> Result<(), Failure> {
    let mut ckpt = model.to_checkpoint();
    opt.write_into(model, &mut ckpt).map_err(data)?;
    let meta = &mut ckpt.metadata;
    meta.insert("epoch".into(), epoch.to_string());
    meta.insert("seed".into(), run.seed.to_string());
    meta.insert("run_config".into(), serde_json::to_string(run).expect("run config serializes"));
    meta.insert(
        "loss_history".into(),
        history.iter().map(|l| format!("{l:?}")).collect::<Vec<_>>().join(","),
    );
    ckpt.save(checkpoint_path(&run.out_dir, epoch)).map_err(data)?;
    fs::write(run.out_dir.join("loss.csv"), loss_csv(history)).map_err(data)
}

struct Resumed {
    model: ModelParams,
    opt: Optimizer,
    epoch: usize,
    seed: Option<u64>,
    history: Vec<f32>,
}

fn resume_from(path: &Path) -> anyhow::Result<Resumed> {
    let ckpt = Checkpoint::load(path)?;
    let model = ModelParams::from_checkpoint(&ckpt)?;
    let opt = Optimizer::read_from(&model, &ckpt)?;
    let epoch: usize = ckpt.meta("epoch")?.parse().context("metadata `epoch`")?;
    let history = ckpt
        .meta("loss_history")?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<f32>, _>>()
        .context("metadata `loss_history`")?;
    anyhow::ensure!(
        history.len() == epoch,
        "checkpoint logs {} epochs but is at epoch {epoch}",
        history.len()
    );
    Ok(Resumed {
        model,
        opt,
        epoch,
        seed: ckpt.meta("seed").ok().and_then(|s| s.parse().ok()),
        history,
    })
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainSummary, Failure> {
    let manifest_path = args.manifest.clone().ok_or_else(|| usage(anyhow!("--manifest is required")))?;
    let manifest = DatasetManifest::load(&manifest_path)
        .with_context(|| format!("manifest {}", manifest_path.display()))
        .map_err(data)?;
    let mut run = args.resolve(manifest.n, manifest.seed).map_err(usage)?;
    let resumed = match &run.resume {
        Some(path) => {
            let r = resume_from(path)
                .with_context(|| format!("resuming from {}", path.display()))
                .map_err(data)?;
            if r.model.config != run.model {
                log::warn!("continuing with the checkpoint's model configuration");
                run.model = r.model.config.clone();
            }
            if r.seed.is_some_and(|s| s != run.seed) {
                log::warn!("seed {} differs from the checkpoint's; batch order will not match the original run", run.seed);
            }
            Some(r)
        }
        None => None,
    };
    run.model.validate().map_err(usage)?;
    let n = run.model.patch_size;

    let mut stream = build_pairs(&manifest, n);
    let pairs = stream.by_ref().collect::<Result<Vec<_>, _>>().map_err(data)?;
    let skipped_records = stream.skipped();
    if pairs.is_empty() {
        return Err(data(anyhow!("manifest yields no training patches")));
    }
    fs::create_dir_all(&run.out_dir).map_err(data)?;

    let (mut model, mut opt, start, mut history) = match resumed {
        Some(r) => (r.model, r.opt, r.epoch, r.history),
        None => {
            let vgg = match &run.vgg {
                Some(p) => Some(
                    Checkpoint::load(p)
                        .with_context(|| format!("weights {}", p.display()))
                        .map_err(data)?,
                ),
                None => None,
            };
            let model = build_model(&run.model, run.seed, vgg.as_ref()).map_err(data)?;
            let opt = Optimizer::new(&model, run.adam);
            save_epoch(&run, &model, &opt, 0, &[])?;
            (model, opt, 0, Vec::new())
        }
    };
    for epoch in start + 1..=run.epochs {
        let mut total = 0.0f64;
        for batch in shuffle_batches(pairs.len(), run.batch_size, run.seed, epoch as u64) {
            let (gray, lab) = stack_batch(&pairs, &batch);
            let step = train_step(&model, &opt, &gray, &lab).map_err(data)?;
            total += f64::from(step.loss) * batch.len() as f64;
            model = step.model;
            opt = step.optimizer;
        }
        let mean = (total / pairs.len() as f64) as f32;
        log::info!("epoch {epoch}: mean loss {mean:?}");
        history.push(mean);
        save_epoch(&run, &model, &opt, epoch, &history)?;
    }
    Ok(TrainSummary {
        out_dir: run.out_dir,
        pairs: pairs.len(),
        skipped_records,
        history,
    })
}

/// Colorizes a `[1, H, W]` gray plane in `[0, 1]`, returning normalized Lab `[3, H, W]`.
pub fn colorize_plane(model: &ModelParams, gray: &Tensor<f32>) -> anyhow::Result<Tensor<f32>> {
    let n = model.config.patch_size;
    let (patches, grid) = slice(gray, n)?;
    let count = grid.count();
    let mut lab = Vec::with_capacity(count * 3 * n * n);
    for start in (0..count).step_by(COLORIZE_CHUNK) {
        let end = (start + COLORIZE_CHUNK).min(count);
        let chunk = Tensor::new(
            vec![end - start, 1, n, n],
            patches.data()[start * n * n..end * n * n].to_vec(),
        )?;
        lab.extend_from_slice(forward(model, &chunk, Mode::Infer)?.lab.data());
    }
    Ok(reassemble(&Tensor::new(vec![count, 3, n, n], lab)?, &grid)?)
}

pub fn cmd_colorize(checkpoint: &Path, input: &Path, output: &Path) -> Result<(), Failure> {
    let ckpt = Checkpoint::load(checkpoint)
        .with_context(|| format!("checkpoint {}", checkpoint.display()))
        .map_err(data)?;
    let model = ModelParams::from_checkpoint(&ckpt).map_err(data)?;
    let img = load_image(input)
        .with_context(|| format!("input {}", input.display()))
        .map_err(data)?;
    if img.channels() != 1 {
        return Err(data(anyhow!("{} is not a grayscale (P5) image", input.display())));
    }
    let lab = colorize_plane(&model, &gray_to_tensor(&img)).map_err(data)?;
    let out = lab_to_image(&lab).map_err(data)?;
    write_image(output, &out)
        .with_context(|| format!("writing {}", output.display()))
        .map_err(data)
}

fn score_row(reference: &Path, estimate: &Path, verbose: bool) -> anyhow::Result<Vec<f64>> {
    let load = |p: &Path| -> anyhow::Result<Image> { load_image(p).with_context(|| p.display().to_string()) };
    let (r, e) = (load(reference)?, load(estimate)?);
    let mut row = vec![psnr(&r, &e)?, ssim(&r, &e)?];
    if verbose {
        row.push(ssim_global(&r, &e)?);
    }
    Ok(row)
}

/// Scores each pair; rows that fail are reported on standard error and make the command fail.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<String, Failure> {
    if args.pair.is_empty() || args.pair.len() % 2 != 0 {
        return Err(usage(anyhow!("--pair REFERENCE ESTIMATE is required")));
    }
    let mut csv = String::from(if args.verbose {
        "name,psnr,ssim,ssim_global\n"
    } else {
        "name,psnr,ssim\n"
    });
    let mut rows = Vec::new();
    let mut failed = 0;
    for pair in args.pair.chunks(2) {
        let name = pair[0]
            .file_name()
            .map_or_else(|| pair[0].display().to_string(), |s| s.to_string_lossy().into_owned());
        match score_row(&pair[0], &pair[1], args.verbose) {
            Ok(row) => {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(csv, "{name},{}", cells.join(","));
                rows.push(row);
            }
            Err(e) => {
                eprintln!("{name}: {e:#}");
                failed += 1;
            }
        }
    }
    let finite: Vec<&Vec<f64>> = rows.iter().filter(|r| r.iter().all(|v| v.is_finite())).collect();
    if !finite.is_empty() {
        let width = finite[0].len();
        let means: Vec<String> = (0..width)
            .map(|c| format!("{:?}", finite.iter().map(|r| r[c]).sum::<f64>() / finite.len() as f64))
            .collect();
        let _ = writeln!(csv, "mean,{}", means.join(","));
    }
    if let Some(path) = &args.output {
        fs::write(path, &csv).map_err(data)?;
    }
    if failed > 0 {
        if args.output.is_none() {
            print!("{csv}");
        }
        return Err(data(anyhow!("{failed} of {} pairs could not be scored", args.pair.len() / 2)));
    }
    Ok(if args.output.is_some() { String::new() } else { csv })
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<String, Failure> {
    let scale = args.scale.unwrap_or_default();
    let seed = args.seed.unwrap_or(0);
    let step = args.step.unwrap_or(colorcaps_core::gradcheck::STEP);
    let threshold = args.threshold.unwrap_or(1e-3);
    let (config, per_tensor) = match scale {
        Scale::Reduced => (ColorCapsNetConfig::reduced(), None),
        Scale::Full => (ColorCapsNetConfig::default(), Some(args.per_tensor.unwrap_or(32))),
    };
    let (report, names) = model_gradcheck_with_step(&config, seed, per_tensor, step).map_err(data)?;
    let mut out = format!(
        "coordinates checked: {}\nskipped at activation kinks: {}\nmax abs error: {:e}\nworst relative error: {:e}",
        report.coordinates_checked, report.skipped_at_kinks, report.max_abs_error, report.max_rel_error
    );
    if let Some((t, i)) = report.worst {
        let _ = write!(
            out,
            " at {}[{i}] (analytic {:e}, numeric {:e})",
            names[t], report.analytic_at_worst, report.numeric_at_worst
        );
    }
    out.push('\n');
    if report.max_rel_error < threshold {
        out.push_str("PASS\n");
        Ok(out)
    } else {
        print!("{out}");
        Err(Failure::Check(format!(
            "worst relative error {:e} is not below {threshold:e}",
            report.max_rel_error
        )))
    }
}

pub fn cmd_inspect(path: &Path) -> Result<String, Failure> {
    let ckpt = Checkpoint::load(path)
        .with_context(|| format!("checkpoint {}", path.display()))
        .map_err(data)?;
    let config: ColorCapsNetConfig = serde_json::from_str(ckpt.meta("config").map_err(data)?)
        .context("metadata `config`")
        .map_err(data)?;
    let expected = count_parameters(&config);
    let trainable: Vec<String> = build_model(&config, 0, None)
        .map_err(data)?
        .parameters()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    let mut out = format!("format version {}\n", ckpt.format_version);
    let mut total = 0;
    for (name, t) in ckpt.entries() {
        let _ = writeln!(out, "{name}\t{:?}\t{}", t.shape(), t.len());
        if trainable.contains(name) {
            total += t.len();
        }
    }
    for (k, v) in &ckpt.metadata {
        let _ = writeln!(out, "meta {k} = {v}");
    }
    let _ = writeln!(out, "trainable parameters: {total}");
    let _ = writeln!(out, "count_parameters: {}", expected.total);
    if total != expected.total {
        print!("{out}");
        return Err(Failure::Check(format!(
            "checkpoint holds {total} trainable values but the configuration implies {}",
            expected.total
        )));
    }
    Ok(out)
}
