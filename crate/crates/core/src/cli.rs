//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O
//! error, 3 numeric failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::LevelFilter;

use crate::checkpoint::Checkpoint;
use crate::encoder::featurize;
use crate::eval::{
    evaluate_dataset, evaluate_predictions, infer_scene, load_predictions, save_predictions,
    TpeVariant,
};
use crate::pointcloud::{
    generate_dataset, load_split, Dataset, DatasetSpec, SceneKind, SyntheticSpec,
};
use crate::proxybank::Class;
use crate::trainer::{train_to_dir, TrainConfig, TrainMode};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "travmetric",
    version,
    about = "Proxy-bank metric learning for point-cloud traversability"
)]
struct Cli {
    /// Print per-epoch progress.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (query/, support/, eval/).
    GenData(GenDataArgs),
    /// Train a model and write checkpoint.txt, metrics.csv, steps.csv, config.txt.
    Train(TrainArgs),
    /// Write a prediction file (`x y z s t T`) per scene.
    Infer(InferArgs),
    /// Score predictions or a checkpoint against eval scenes.
    Eval(EvalArgs),
    /// Dump proxy memberships and pairwise proxy cosines.
    InspectBank(InspectArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Dataset seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of query (weakly labeled) scenes.
    #[arg(long, default_value_t = 20)]
    query_scenes: usize,
    /// Number of fully labeled support scenes.
    #[arg(long, default_value_t = 2)]
    support_scenes: usize,
    /// Number of evaluation scenes.
    #[arg(long, default_value_t = 4)]
    eval_scenes: usize,
    /// Points per scene.
    #[arg(long)]
    points: Option<usize>,
    /// Scene side length in metres.
    #[arg(long)]
    extent: Option<f64>,
    /// Distinct ground textures (1..=4).
    #[arg(long)]
    ground_kinds: Option<usize>,
    /// Trees per scene.
    #[arg(long)]
    trees: Option<usize>,
    /// Rocks per scene.
    #[arg(long)]
    rocks: Option<usize>,
    /// Bushes per scene.
    #[arg(long)]
    bushes: Option<usize>,
    /// Wall segments per scene.
    #[arg(long)]
    walls: Option<usize>,
    /// Target share of obstacle points.
    #[arg(long)]
    obstacle_fraction: Option<f64>,
    /// Width of the robot path in metres.
    #[arg(long)]
    path_width: Option<f64>,
    /// Reduce height noise on the path by this fraction (0..=1).
    #[arg(long)]
    trail_smoothing: Option<f64>,
    /// Thin labeled support points to this fraction of all query points.
    #[arg(long)]
    support_ratio: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory with query/, support/ and optionally eval/.
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// full, proxy_no_reinit, proxy_no_unlabeled or supervised.
    #[arg(long)]
    mode: Option<String>,
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Proxies per class.
    #[arg(long)]
    proxies: Option<usize>,
    /// Any config key, as KEY=VALUE; repeatable. Applied after the other flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct InferArgs {
    /// Checkpoint file.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory of scene files.
    #[arg(long)]
    scenes: PathBuf,
    /// How to read the scene files.
    #[arg(long, value_enum, default_value_t = KindArg::Eval)]
    kind: KindArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory of ground-truth eval scenes.
    #[arg(long)]
    gt: PathBuf,
    /// Directory of prediction files named like the scenes.
    #[arg(
        long,
        conflicts_with = "checkpoint",
        required_unless_present = "checkpoint"
    )]
    predictions: Option<PathBuf>,
    /// Checkpoint to run on the eval scenes instead of reading predictions.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Directory for report.csv and report.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Which false-positive normalisation the TPE uses.
    #[arg(long, value_enum, default_value_t = VariantArg::AsPrinted)]
    tpe_variant: VariantArg,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Checkpoint file.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset whose query and support points are counted for membership.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Query,
    Support,
    Eval,
}

impl From<KindArg> for SceneKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Query => SceneKind::Query,
            KindArg::Support => SceneKind::Support,
            KindArg::Eval => SceneKind::Eval,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    AsPrinted,
    TraversabilityWeighted,
}

impl From<VariantArg> for TpeVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::AsPrinted => TpeVariant::AsPrinted,
            VariantArg::TraversabilityWeighted => TpeVariant::TraversabilityWeighted,
        }
    }
}

/// Entry point of the binary.
pub fn main_entry() -> i32 {
    run(std::env::args_os())
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(if cli.verbose {
            LevelFilter::Info
        } else {
            LevelFilter::Warn
        })
        .format_timestamp(None)
        .try_init();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Infer(a) => infer_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::InspectBank(a) => inspect_cmd(a),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut scene = SyntheticSpec::default();
    macro_rules! apply {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = a.$flag { scene.$field = v; })*
        };
    }
    apply!(points => n_points, extent => extent, ground_kinds => ground_kinds,
        trees => n_trees, rocks => n_rocks, bushes => n_bushes, walls => n_walls,
        obstacle_fraction => obstacle_fraction, path_width => path_width,
        trail_smoothing => trail_smoothing);
    let spec = DatasetSpec {
        n_query: a.query_scenes,
        n_support: a.support_scenes,
        n_eval: a.eval_scenes,
        scene,
        seed: a.seed,
        support_ratio: a.support_ratio,
    };
    let data = generate_dataset(&spec)?;
    data.save(&a.out)?;
    write_file(&a.out.join("dataset.txt"), &format!("{spec:#?}\n"))?;
    println!(
        "wrote {} query, {} support, {} eval scenes to {}",
        data.query.len(),
        data.support.len(),
        data.eval.len(),
        a.out.display()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.epochs {
        config.epochs = v;
    }
    if let Some(v) = &a.mode {
        config.mode = v.parse::<TrainMode>()?;
    }
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = a.lr {
        config.lr = v;
    }
    if let Some(v) = a.proxies {
        config.proxies = v;
    }
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        config.set(k, v)?;
    }
    config.validate()?;
    let data = Dataset::load(&a.data)?;
    let outcome = train_to_dir(&config, &data, &a.out)?;
    let last = outcome.epochs.last().expect("at least one epoch");
    println!(
        "trained {} epochs ({} steps), final loss {:.6}, eval mIoU {}, TPE {}",
        outcome.epochs.len(),
        outcome.steps.len(),
        last.loss_total,
        last.miou_eval
            .map_or_else(|| "n/a".into(), |v| format!("{v:.4}")),
        last.tpe_eval
            .map_or_else(|| "n/a".into(), |v| format!("{v:.4}")),
    );
    Ok(())
}

fn infer_cmd(a: InferArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let scenes = load_split(&a.scenes, a.kind.into(), true)?;
    create_dir(&a.out)?;
    for (name, scene) in &scenes {
        let pred = infer_scene(&ckpt.model, &ckpt.bank, scene, ckpt.mode)?;
        save_predictions(&pred, a.out.join(format!("{name}.txt")))?;
    }
    println!(
        "wrote {} prediction files to {}",
        scenes.len(),
        a.out.display()
    );
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let gt = load_split(&a.gt, SceneKind::Eval, true)?;
    let variant = a.tpe_variant.into();
    let report = match (&a.predictions, &a.checkpoint) {
        (Some(dir), _) => {
            let preds = gt
                .iter()
                .map(|(name, _)| {
                    Ok((
                        name.clone(),
                        load_predictions(dir.join(format!("{name}.txt")))?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let scenes: Vec<_> = gt.iter().map(|(_, s)| s.clone()).collect();
            evaluate_predictions(&preds, &scenes, variant)?
        }
        (None, Some(ck)) => evaluate_dataset(&Checkpoint::load(ck)?, &gt, variant)?,
        (None, None) => return Err(Error::config("eval needs --predictions or --checkpoint")),
    };
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_file(&out.join("report.csv"), &report.to_csv())?;
        write_file(&out.join("report.txt"), &report.to_text())?;
    }
    print!("{}", report.to_text());
    Ok(())
}

fn inspect_cmd(a: InspectArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let mut bank = ckpt.bank.clone();
    let k = bank.k();
    create_dir(&a.out)?;

    let cos = bank.pairwise_cosines();
    let mut csv = String::from("proxy");
    let label = |i: usize| {
        if i < k {
            format!("P{i}")
        } else {
            format!("N{}", i - k)
        }
    };
    for j in 0..2 * k {
        let _ = write!(csv, ",{}", label(j));
    }
    csv.push('\n');
    for i in 0..2 * k {
        csv.push_str(&label(i));
        for v in cos.row(i) {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    write_file(&a.out.join("cosines.csv"), &csv)?;

    let (mut within, mut nw, mut across, mut na) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..2 * k {
        for j in (i + 1)..2 * k {
            if (i < k) == (j < k) {
                within += cos.get(i, j);
                nw += 1;
            } else {
                across += cos.get(i, j);
                na += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| {
        if n > 0 {
            format!("{:.4}", s / n as f64)
        } else {
            "n/a".into()
        }
    };
    println!("proxies per class      : {k}");
    println!("mean within-class cos  : {}", mean(within, nw));
    println!("mean cross-class cos   : {}", mean(across, na));

    if let Some(dir) = &a.data {
        let data = Dataset::load(dir)?;
        for (_, scene) in data.query.iter().chain(&data.support) {
            let feats = featurize(scene.points(), ckpt.model.shape.k_enc)?;
            bank.count_membership(&ckpt.model.encode(&feats)?);
        }
        let mut m = String::from("class,index,count\n");
        for class in Class::BOTH {
            for index in 0..k {
                let n = bank.membership(crate::proxybank::ProxyId { class, index });
                let _ = writeln!(
                    m,
                    "{},{index},{n}",
                    if class == Class::Positive { "P" } else { "N" }
                );
            }
        }
        write_file(&a.out.join("membership.csv"), &m)?;
        println!("empty proxies          : {}", bank.empty_proxies().len());
    }
    Ok(())
}
