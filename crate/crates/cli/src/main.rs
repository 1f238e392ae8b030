//! `wordeq` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error,
//! 3 runtime error (divergence and the like).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wordeq::dataset::{
    unique_descriptors, write_dataset, BandGrid, EqCurve, FoldSpec, SynthConfig, NUM_BANDS,
};
use wordeq::embedding::EmbeddingTable;
use wordeq::experiment::{
    run_cv, run_fold, run_pcm_comparison, write_results, CvSettings, EmbeddingSource,
    ExperimentConfig, ExperimentData, ModelKind, ModelSpec, SyntheticSettings, WordPlot,
};
use wordeq::fsutil::write_atomic;
use wordeq::nn::{InputMode, Mlp};
use wordeq::render::{apply_eq, read_wav, write_wav, FirOptions, SampleFormat, DEFAULT_NUM_TAPS};

#[derive(Parser)]
#[command(
    name = "wordeq",
    version,
    about = "Predict EQ curves from descriptive words"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset, build the four folds and write a fold summary.
    Prepare(PrepareArgs),
    /// Train one model on one fold.
    Train(TrainArgs),
    /// Cross-validate every model and compare PCM distances.
    Evaluate(EvaluateArgs),
    /// Print the 40 predicted gains for a word.
    Predict(PredictArgs),
    /// Apply an EQ curve to a WAV file.
    Render(RenderArgs),
    /// Export per-word curve tables (and optional SVG charts).
    Plot(PlotArgs),
    /// Write a synthetic dataset, embedding table and config.
    SynthData(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV; overrides the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Generate the synthetic dataset instead of reading one.
    #[arg(long, conflicts_with = "dataset")]
    synthetic: bool,
}

#[derive(Args)]
struct PrepareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Fold to train on, 1 to 4.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    fold: u8,
    /// Embedding table file, or `none` for the one-hot baseline. Defaults
    /// to the first table of the config.
    #[arg(long)]
    embedding: Option<String>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Result directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    word: String,
    /// Embedding table; required for embedding-input models.
    #[arg(long)]
    embedding: Option<PathBuf>,
    /// Also write the gains to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Pcm16,
    Float32,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Curve file: 40 gains in dB, optionally preceded by the frequency on
    /// each line (the `predict` output format).
    #[arg(long, conflicts_with_all = ["model", "word"], required_unless_present = "model")]
    curve: Option<PathBuf>,
    #[arg(long, requires = "word")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    word: Option<String>,
    #[arg(long)]
    embedding: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_NUM_TAPS)]
    taps: usize,
    #[arg(long, value_enum, default_value = "pcm16")]
    format: FormatArg,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Directory written by `evaluate`.
    #[arg(long)]
    results: PathBuf,
    #[arg(long = "word", required = true)]
    words: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SynthConfig::default().seed)]
    seed: u64,
}

enum CliError {
    Usage(String),
    Core(wordeq::Error),
}

impl From<wordeq::Error> for CliError {
    fn from(e: wordeq::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct Manifest {
    command: String,
    args: Vec<String>,
    tool_version: String,
    model_format_version: u32,
    seed: Option<u64>,
    fold_plan: Option<String>,
    outputs: Vec<String>,
    config: Option<ExperimentConfig>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            model_format_version: wordeq::nn::MODEL_FORMAT_VERSION,
            seed: None,
            fold_plan: None,
            outputs: Vec::new(),
            config: None,
        }
    }

    fn outputs(mut self, paths: &[PathBuf]) -> Self {
        self.outputs = paths.iter().map(|p| p.display().to_string()).collect();
        self
    }

    fn write(&self, path: &Path) -> CliResult<()> {
        let text = toml::to_string(self).map_err(|e| wordeq::Error::Format(e.to_string()))?;
        write_atomic(path, text.as_bytes())?;
        Ok(())
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| wordeq::Error::io(dir, e))?;
    Ok(())
}

fn load_config(args: &DataArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &args.dataset {
        cfg.dataset = Some(d.clone());
        cfg.synthetic = None;
    }
    if args.synthetic {
        cfg.dataset = None;
        cfg.synthetic.get_or_insert_with(SyntheticSettings::default);
    }
    if cfg.dataset.is_none() && cfg.synthetic.is_none() {
        return Err(CliError::Usage(
            "give --dataset, --synthetic or a config naming a dataset".into(),
        ));
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Prepare(a) => prepare(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Predict(a) => predict(a),
        Command::Render(a) => render(a),
        Command::Plot(a) => plot(a),
        Command::SynthData(a) => synth_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 3 })
        }
    }
}

#[derive(Serialize)]
struct FoldSummary {
    index: usize,
    train_rows: usize,
    test_rows: usize,
    hq_words: Vec<String>,
    hr_words: Vec<String>,
    missing_test_words: Vec<String>,
}

#[derive(Serialize)]
struct PrepareSummary {
    total_rows: usize,
    english_rows: usize,
    unique_words: usize,
    fold_plan: String,
    consistency_threshold: f64,
    warnings: usize,
    fold: Vec<FoldSummary>,
}

fn prepare(a: PrepareArgs) -> CliResult<()> {
    let cfg = load_config(&a.data)?;
    let data = cfg.load_data()?;
    create_dir(&a.out)?;
    let summary = PrepareSummary {
        total_rows: data.total_rows,
        english_rows: data.examples.len(),
        unique_words: unique_descriptors(&data.examples),
        fold_plan: format!("{:08x}", data.plan.fingerprint()),
        consistency_threshold: data.plan.rules.consistency_threshold,
        warnings: data.warnings.len(),
        fold: data
            .plan
            .folds
            .iter()
            .map(|f| FoldSummary {
                index: f.index + 1,
                train_rows: f.train.len(),
                test_rows: f.test.len(),
                hq_words: f.hq_words.iter().cloned().collect(),
                hr_words: f.hr_words.iter().cloned().collect(),
                missing_test_words: f.missing_test_words.clone(),
            })
            .collect(),
    };
    let path = a.out.join("folds.toml");
    let text = toml::to_string(&summary).map_err(|e| wordeq::Error::Format(e.to_string()))?;
    write_atomic(&path, text.as_bytes())?;
    for w in &data.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} rows, {} English, {} unique English words",
        summary.total_rows, summary.english_rows, summary.unique_words
    );
    for f in &summary.fold {
        println!(
            "fold {}: {} HQ + {} HR test words, {} train rows, {} test rows",
            f.index,
            f.hq_words.len(),
            f.hr_words.len(),
            f.train_rows,
            f.test_rows
        );
    }
    let mut m = Manifest::new("prepare").outputs(&[path]);
    m.fold_plan = Some(summary.fold_plan);
    m.config = Some(cfg);
    m.write(&a.out.join("manifest.toml"))
}

fn train_cmd(a: TrainArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.data)?;
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.max_epochs = e;
    }
    let mut data = cfg.load_data()?;
    let (spec, pos) = match a.embedding.as_deref() {
        Some("none") => {
            let pos = data.tables.len();
            (
                ModelSpec {
                    name: wordeq::experiment::BASELINE_NAME.into(),
                    kind: ModelKind::Baseline,
                },
                pos,
            )
        }
        Some(path) => {
            let table = EmbeddingTable::load(path, None)?;
            data.tables = vec![table];
            cfg.embeddings = vec![EmbeddingSource {
                name: data.tables[0].name().to_string(),
                path: path.into(),
                dim: None,
            }];
            (
                ModelSpec {
                    name: data.tables[0].name().to_string(),
                    kind: ModelKind::Embedding(0),
                },
                0,
            )
        }
        None => {
            let first = data.tables.first().ok_or_else(|| {
                CliError::Usage(
                    "no embedding table configured; pass --embedding PATH or --embedding none"
                        .into(),
                )
            })?;
            (
                ModelSpec {
                    name: first.name().to_string(),
                    kind: ModelKind::Embedding(0),
                },
                0,
            )
        }
    };
    let fold = a.fold as usize - 1;
    let settings = CvSettings::from(&cfg);
    let (outcome, model) = run_fold(&data, &spec, pos, fold, &settings)?;
    model.save(&a.out)?;
    let mut losses = String::from("epoch,loss\n");
    for (i, l) in outcome.report.epoch_losses.iter().enumerate() {
        losses.push_str(&format!("{},{l}\n", i + 1));
    }
    let loss_path = sidecar(&a.out, "losses.csv");
    write_atomic(&loss_path, losses.as_bytes())?;
    println!(
        "{} fold {}: {} epochs, final training loss {:.6}, test error {:.6} (normalized) {:.4} dB",
        spec.name,
        a.fold,
        outcome.report.epoch_losses.len(),
        outcome.report.final_loss(),
        outcome.errors.normalized,
        outcome.errors.db
    );
    let mut m = Manifest::new("train").outputs(&[a.out.clone(), loss_path]);
    m.seed = Some(outcome.seed);
    m.fold_plan = Some(format!("{:08x}", data.plan.fingerprint()));
    m.config = Some(cfg);
    m.write(&sidecar(&a.out, "manifest.toml"))
}

fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.data)?;
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.max_epochs = e;
    }
    let data = cfg.load_data()?;
    let cv = run_cv(&data, &CvSettings::from(&cfg))?;
    let pcm = run_pcm_comparison(&data, &cv)?;
    let written = write_results(&a.out, &data, &cv, Some(&pcm))?;
    print_tables(&data, &cv, &pcm);
    let mut m = Manifest::new("evaluate").outputs(&written);
    m.seed = Some(cfg.master_seed);
    m.fold_plan = Some(format!("{:08x}", cv.fingerprint));
    m.config = Some(cfg);
    m.write(&a.out.join("manifest.toml"))
}

fn print_tables(
    data: &ExperimentData,
    cv: &wordeq::experiment::CvResult,
    pcm: &wordeq::experiment::PcmComparison,
) {
    println!(
        "{:<20} {:>17} {:>17} {:>17}",
        "model", "normalized", "dB", "summed"
    );
    for r in &cv.runs {
        let s = r.summary();
        println!(
            "{:<20} {:>8.4} ± {:<6.4} {:>8.4} ± {:<6.4} {:>8.4} ± {:<6.4}",
            r.spec.name,
            s.mean.normalized,
            s.std.normalized,
            s.mean.db,
            s.std.db,
            s.mean.summed,
            s.std.summed
        );
    }
    let h = pcm.human_summary();
    println!();
    println!(
        "PCM over {} words ({} English rows)",
        h.count,
        data.examples.len()
    );
    println!("{:<20} {:>8.4} ± {:.4}", "human", h.mean, h.std);
    for name in &pcm.model_names {
        if let Some(s) = pcm.model_summary(name) {
            println!("{:<20} {:>8.4} ± {:.4}", name, s.mean, s.std);
        }
    }
}

fn predict(a: PredictArgs) -> CliResult<()> {
    let model = Mlp::<f64>::load(&a.model)?;
    let table = match (&a.embedding, model.mode()) {
        (Some(p), InputMode::Embedding { dim }) => Some(EmbeddingTable::load(p, Some(*dim))?),
        (None, InputMode::Embedding { .. }) => {
            return Err(CliError::Usage(
                "this model takes embeddings; pass --embedding PATH".into(),
            ))
        }
        (_, InputMode::OneHot { .. }) => None,
    };
    let pred = model.predict(&a.word, table.as_ref())?;
    let bands = BandGrid::default();
    let mut text = String::new();
    for (f, g) in bands.centers().iter().zip(pred.gains_db()) {
        text.push_str(&format!("{f} {g}\n"));
    }
    print!("{text}");
    if let Some(out) = &a.out {
        write_atomic(out, text.as_bytes())?;
    }
    Ok(())
}

fn read_curve_file(path: &Path) -> CliResult<EqCurve> {
    let text = std::fs::read_to_string(path).map_err(|e| wordeq::Error::io(path, e))?;
    let mut gains = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let last = line.split_whitespace().last().unwrap_or_default();
        let g: f64 = last.parse().map_err(|_| wordeq::Error::Parse {
            line: i + 1,
            message: format!("not a number: {last:?}"),
        })?;
        gains.push(g);
    }
    if gains.len() != NUM_BANDS {
        return Err(wordeq::Error::Schema(format!(
            "curve file has {} gains, expected {NUM_BANDS}",
            gains.len()
        ))
        .into());
    }
    Ok(EqCurve::new(gains, BandGrid::default())?)
}

fn render(a: RenderArgs) -> CliResult<()> {
    let curve = match (&a.curve, &a.model, &a.word) {
        (Some(p), _, _) => read_curve_file(p)?,
        (None, Some(m), Some(w)) => {
            let model = Mlp::<f64>::load(m)?;
            let table = match (&a.embedding, model.mode()) {
                (Some(p), InputMode::Embedding { dim }) => {
                    Some(EmbeddingTable::load(p, Some(*dim))?)
                }
                (None, InputMode::Embedding { .. }) => {
                    return Err(CliError::Usage(
                        "this model takes embeddings; pass --embedding PATH".into(),
                    ))
                }
                _ => None,
            };
            EqCurve::new(
                model.predict(w, table.as_ref())?.gains_db(),
                BandGrid::default(),
            )?
        }
        _ => {
            return Err(CliError::Usage(
                "give --curve or --model with --word".into(),
            ))
        }
    };
    let input = read_wav(&a.input)?;
    let (out, report) = apply_eq(&input, &curve, a.taps, &FirOptions::default())?;
    let format = match a.format {
        FormatArg::Pcm16 => SampleFormat::Pcm16,
        FormatArg::Float32 => SampleFormat::Float32,
    };
    write_wav(&out, &a.out, format)?;
    if !report.dropped_bands.is_empty() {
        eprintln!(
            "warning: {} bands above Nyquist ignored",
            report.dropped_bands.len()
        );
    }
    if report.clipped_samples > 0 {
        eprintln!(
            "warning: {} samples clipped (peak {:.3})",
            report.clipped_samples, report.peak
        );
    }
    Manifest::new("render")
        .outputs(std::slice::from_ref(&a.out))
        .write(&sidecar(&a.out, "manifest.toml"))
}

fn plot(a: PlotArgs) -> CliResult<()> {
    let cfg = load_config(&a.data)?;
    let data = cfg.load_data()?;
    let mut written = Vec::new();
    for w in &a.words {
        let plot = WordPlot::from_saved_models(&data, &a.results, cfg.include_baseline, w)?;
        if plot.series.is_empty() {
            eprintln!("warning: no saved model predicts {w:?}");
        }
        written.extend(plot.export(&a.out, a.svg)?);
    }
    for p in &written {
        println!("{}", p.display());
    }
    let mut m = Manifest::new("plot").outputs(&written);
    m.config = Some(cfg);
    m.write(&a.out.join("manifest.toml"))
}

fn synth_data(a: SynthArgs) -> CliResult<()> {
    let settings = SyntheticSettings {
        seed: a.seed,
        ..SyntheticSettings::default()
    };
    let data = settings.to_synth_config(FoldSpec::standard()).generate()?;
    create_dir(&a.out)?;
    let mut csv = Vec::new();
    write_dataset(&mut csv, &data.examples)?;
    let dataset = a.out.join("dataset.csv");
    write_atomic(&dataset, &csv)?;
    let mut emb = Vec::new();
    data.table.write_text(&mut emb)?;
    let embeddings = a.out.join("embeddings.txt");
    write_atomic(&embeddings, &emb)?;
    let folds = a.out.join("folds.toml");
    write_atomic(&folds, data.folds.to_toml().as_bytes())?;
    let cfg = ExperimentConfig {
        dataset: Some("dataset.csv".into()),
        folds: Some("folds.toml".into()),
        embeddings: vec![EmbeddingSource {
            name: "synthetic".into(),
            path: "embeddings.txt".into(),
            dim: Some(data.table.dimension()),
        }],
        ..ExperimentConfig::default()
    };
    let config = a.out.join("experiment.toml");
    write_atomic(&config, cfg.to_toml().as_bytes())?;
    println!(
        "{} rows, {} English words, {}-dimensional table",
        data.examples.len(),
        data.clusters.len(),
        data.table.dimension()
    );
    let mut m = Manifest::new("synth-data").outputs(&[dataset, embeddings, folds, config]);
    m.seed = Some(a.seed);
    m.write(&a.out.join("manifest.toml"))
}
