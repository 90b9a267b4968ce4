use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use okannet::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, FinalMetrics};
use okannet::data::{scan_dataset, scan_split, AugmentationConfig, DatasetIndex, LoadedDataset, TEST_DIR};
use okannet::gradcheck::gradcheck_suite;
use okannet::model::build_okannet;
use okannet::report::{format_metrics_table, write_history, write_metrics_csv};
use okannet::train::{evaluate, predict, train, TrainConfig};
use okannet::{runtime, Error, Result};

const MODEL_NAME: &str = "OkanNet";

#[derive(Parser)]
#[command(name = "okannet", version, about = "Train and run the OkanNet brain-tumor MRI classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on <data-dir>/Training, validate and evaluate on <data-dir>/Testing.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labelled folder dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Dataset root (its Testing/ split is used when present) or a class-folder directory.
        #[arg(long)]
        data_dir: PathBuf,
        /// Where to write metrics.csv.
        #[arg(long, default_value = "metrics.csv")]
        out: PathBuf,
    },
    /// Classify a single image.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Finite-difference check of every layer's backward pass.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 224)]
    image_size: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Enable random flip / rotation / translation.
    #[arg(long)]
    augment: bool,
    #[arg(long, default_value_t = 50)]
    val_freq: usize,
    #[arg(long)]
    out_dir: PathBuf,
    /// Use a stratified subset of this many training images.
    #[arg(long)]
    train_limit: Option<usize>,
    /// Use a stratified subset of this many test images.
    #[arg(long)]
    test_limit: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = runtime::init_thread_pool().and_then(|threads| {
        log::debug!("using {threads} worker threads");
        match cli.command {
            Command::Train(args) => run_train(args),
            Command::Eval { model, data_dir, out } => run_eval(&model, &data_dir, &out),
            Command::Predict { model, image } => run_predict(&model, &image),
            Command::Gradcheck { seed } => run_gradcheck(seed),
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn subset(index: DatasetIndex, limit: Option<usize>, seed: u64) -> DatasetIndex {
    match limit {
        Some(n) if n < index.len() => index.stratified_subset(n, seed),
        _ => index,
    }
}

fn run_train(args: TrainArgs) -> Result<ExitCode> {
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        validation_frequency: args.val_freq,
        seed: args.seed,
        image_size: args.image_size,
        augmentation: AugmentationConfig { enabled: args.augment, seed: args.seed, ..Default::default() },
        ..Default::default()
    };
    cfg.validate()?;
    let (train_idx, test_idx) = scan_split(&args.data_dir)?;
    let train_idx = subset(train_idx, args.train_limit, args.seed);
    let test_idx = subset(test_idx, args.test_limit, args.seed);
    log::info!("loading {} training and {} test images at {}px", train_idx.len(), test_idx.len(), cfg.image_size);
    let train_data = LoadedDataset::load(&train_idx, cfg.image_size)?;
    let test_data = LoadedDataset::load(&test_idx, cfg.image_size)?;

    let model = build_okannet(train_data.num_classes(), cfg.image_size, cfg.seed)?;
    log::info!("OkanNet: {} classes, {} parameters", model.num_classes(), model.param_count());
    let outcome = train(model, &train_data, Some(&test_data), &cfg)?;
    let mut model = outcome.model;
    let (cm, mut record) = evaluate(&mut model, &test_data)?;
    record.training_time_s = outcome.wall_seconds;

    fs::create_dir_all(&args.out_dir)?;
    let meta = CheckpointMeta {
        class_names: train_data.class_names.clone(),
        config: Some(cfg),
        final_metrics: Some(FinalMetrics::from(&record)),
    };
    save_checkpoint(&model, &meta, &args.out_dir.join("checkpoint.oknt"))?;
    let records = [(MODEL_NAME.to_string(), record)];
    write_metrics_csv(&records, &args.out_dir.join("metrics.csv"))?;
    write_history(&outcome.history, &args.out_dir.join("history.csv"))?;

    println!("confusion matrix (rows = true, columns = predicted): {:?}", cm.rows());
    print!("{}", format_metrics_table(&records));
    println!("outputs written to {}", args.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn run_eval(model_path: &Path, data_dir: &Path, out: &Path) -> Result<ExitCode> {
    let (mut model, meta) = load_checkpoint(model_path)?;
    let split = data_dir.join(TEST_DIR);
    let index = scan_dataset(if split.is_dir() { &split } else { data_dir })?;
    if index.class_names != meta.class_names {
        return Err(Error::Data(format!(
            "dataset classes {:?} do not match the model's {:?}",
            index.class_names, meta.class_names
        )));
    }
    let data = LoadedDataset::load(&index, model.spec().input[1])?;
    let (cm, record) = evaluate(&mut model, &data)?;
    let records = [(MODEL_NAME.to_string(), record)];
    write_metrics_csv(&records, out)?;
    println!("confusion matrix (rows = true, columns = predicted): {:?}", cm.rows());
    print!("{}", format_metrics_table(&records));
    Ok(ExitCode::SUCCESS)
}

fn run_predict(model_path: &Path, image: &Path) -> Result<ExitCode> {
    let (mut model, meta) = load_checkpoint(model_path)?;
    let (class, probs) = predict(&mut model, image, &meta.class_names)?;
    println!("prediction: {class}");
    for (name, p) in meta.class_names.iter().zip(&probs) {
        println!("  {name:<12} {p:.6}");
    }
    Ok(ExitCode::SUCCESS)
}

fn run_gradcheck(seed: u64) -> Result<ExitCode> {
    let report = gradcheck_suite(seed)?;
    print!("{report}");
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
