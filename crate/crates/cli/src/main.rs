use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use nutriscreen::harness::{
    emit_report, label_summary, province_csv, province_table, run_benchmark, write_run, BenchmarkConfig, Protocol, PROVINCES_FILE,
};
use nutriscreen::metrics::evaluate;
use nutriscreen::models::{fit_model, FittedModel};
use nutriscreen::preprocess::{derive_labels, encode, RawTable, Schema};
use nutriscreen::select::{run_selection, Method, SelectConfig, SelectionReport};
use nutriscreen::synth::{builtin_marginals, generate, signal_for, SynthMode};
use nutriscreen::{Dataset, Error};

#[derive(Parser)]
#[command(name = "nutriscreen", version, about = "Child malnutrition screening: data prep, feature selection and model benchmarking")]
struct Cli {
    /// Master seed (overrides the config file's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Benchmark configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Marginal,
    Planted,
    Strong,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a raw survey CSV into a numeric dataset.
    Prepare {
        #[arg(long)]
        raw: PathBuf,
        /// Schema JSON (defaults to the bundled one).
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value = "dataset.csv")]
        out: PathBuf,
        /// Column used for the prevalence table.
        #[arg(long, default_value = "province")]
        region_column: String,
    },
    /// Generate a synthetic raw survey table.
    Synth {
        #[arg(long, default_value_t = 6416)]
        n: usize,
        #[arg(long, value_enum, default_value = "marginal")]
        mode: Mode,
        #[arg(long, default_value = "synth.csv")]
        out: PathBuf,
    },
    /// Run the feature selection ensemble.
    Select {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 100)]
        boruta_iters: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 14.3)]
        rank_threshold: f64,
        /// Comma-separated features kept on strong ensemble support.
        #[arg(long, value_delimiter = ',', default_value = "recent_diarrhoea,sudoorpaschim")]
        overrides: Vec<String>,
        /// Comma-separated method names (default ensemble of ten).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long, default_value = "features.json")]
        out: PathBuf,
    },
    /// Fit one roster model on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: String,
        /// Selection output or JSON list restricting the columns.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a saved model on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate the whole roster.
    Benchmark {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        /// Use stratified k-fold instead of the hold-out split.
        #[arg(long)]
        kfold: Option<usize>,
        #[arg(long)]
        train_ratio: Option<f64>,
        /// Comma-separated subset of roster names.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Rebuild the markdown report of a benchmark run.
    Report {
        /// Run directory (defaults to --out-dir).
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
}

/// Distinguishes "finished, but some models failed" from errors.
struct Partial(usize);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Partial(n))) => {
            eprintln!("{n} model(s) failed; see the Failures section of the report");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_validation));
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}

fn out_path(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

fn load_config(cli_config: &Option<PathBuf>, seed: Option<u64>) -> anyhow::Result<BenchmarkConfig> {
    let mut cfg = match cli_config {
        Some(p) => BenchmarkConfig::from_json_file(p)?,
        None => BenchmarkConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Accepts a selection report (uses its `selected` list) or a JSON array.
fn read_features(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(list) = serde_json::from_str::<Vec<String>>(&text) {
        return Ok(list);
    }
    let report: SelectionReport = serde_json::from_str(&text).map_err(Error::from).context("features file")?;
    Ok(report.selected)
}

fn load_dataset(path: &Path, features: &Option<PathBuf>) -> anyhow::Result<Dataset> {
    let ds = Dataset::read_csv(path).with_context(|| format!("reading {}", path.display()))?;
    let Some(f) = features else { return Ok(ds) };
    let names = read_features(f)?;
    let cols = names
        .iter()
        .map(|n| ds.feature_index(n).ok_or_else(|| Error::SchemaMismatch(format!("feature `{n}` not in dataset"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ds.select_cols(&cols))
}

fn write_json(path: &Path, text: String) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<Option<Partial>> {
    let out_dir = cli.out_dir.clone();
    fs::create_dir_all(&out_dir)?;
    match cli.command {
        Command::Prepare { raw, schema, out, region_column } => {
            let schema = match schema {
                Some(p) => Schema::from_json_file(&p)?,
                None => Schema::bundled(),
            };
            let table = RawTable::read_csv(&raw).with_context(|| format!("reading {}", raw.display()))?;
            let ds = encode(&table, &schema)?;
            let out = out_path(&out_dir, &out);
            ds.write_csv(&out)?;
            if schema.anthropometry.is_some() {
                let labels = derive_labels(&table, &schema)?;
                let s = label_summary(&labels);
                write_json(&out_dir.join("labels.json"), serde_json::to_string_pretty(&s)?)?;
                println!(
                    "{} rows: {} nourished / {} malnourished; underweight {:.2}%, stunted {:.2}%, wasted {:.2}%",
                    s.n, s.nourished, s.malnourished, s.underweight_pct, s.stunted_pct, s.wasted_pct
                );
                if table.column_index(&region_column).is_some() {
                    fs::write(out_dir.join(PROVINCES_FILE), province_csv(&province_table(&table, &labels, &region_column)?))?;
                }
            }
            println!("wrote {} ({} rows x {} features)", out.display(), ds.n_rows(), ds.n_cols());
        }
        Command::Synth { n, mode, out } => {
            let mode = match mode {
                Mode::Marginal => SynthMode::Marginal,
                Mode::Planted => SynthMode::Planted,
                Mode::Strong => SynthMode::Strong,
            };
            let table = generate(&builtin_marginals(), signal_for(mode).as_ref(), n, cli.seed.unwrap_or(7))?;
            let out = out_path(&out_dir, &out);
            table.write_csv(&out)?;
            println!("wrote {} ({n} rows)", out.display());
        }
        Command::Select { dataset, boruta_iters, alpha, rank_threshold, overrides, methods, out } => {
            let ds = Dataset::read_csv(&dataset).with_context(|| format!("reading {}", dataset.display()))?;
            let mut cfg = SelectConfig { rank_threshold, overrides, ..SelectConfig::default() };
            cfg.boruta.iterations = boruta_iters;
            cfg.boruta.alpha = alpha;
            if let Some(m) = methods {
                cfg.methods = m
                    .iter()
                    .map(|s| Method::parse(s).ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`"))))
                    .collect::<Result<_, _>>()?;
            }
            log::info!("methods: {}", cfg.methods.iter().map(Method::name).collect::<Vec<_>>().join(", "));
            let report = run_selection(&ds, &cfg, cli.seed.unwrap_or(42))?;
            let out = out_path(&out_dir, &out);
            write_json(&out, serde_json::to_string_pretty(&report)?)?;
            println!("selected {} of {}: {}", report.selected.len(), ds.n_cols(), report.selected.join(", "));
        }
        Command::Train { dataset, model, features, out } => {
            let cfg = load_config(&cli.config, cli.seed)?;
            let roster = cfg.resolved_roster()?;
            let entry = roster.iter().find(|e| e.name == model).ok_or_else(|| Error::InvalidConfig(format!("unknown model `{model}`")))?;
            let ds = load_dataset(&dataset, &features)?;
            let fitted = fit_model(&entry.model, &ds, cfg.threshold, nutriscreen::harness::model_seed(cfg.seed, &entry.name))?;
            let out = out_path(&out_dir, &out.unwrap_or_else(|| PathBuf::from(format!("{model}.json"))));
            if let Some(parent) = out.parent() {
                fs::create_dir_all(parent)?;
            }
            let fitted = if matches!(fitted.model, nutriscreen::models::TrainedModel::Knn(_)) {
                // neighbours are stored as a dataset file beside the model
                let data_name = format!("{}.train.csv", out.file_stem().and_then(|s| s.to_str()).unwrap_or("model"));
                let data_path = out.with_file_name(&data_name);
                ds.write_csv(&data_path)?;
                fitted.with_data_reference(&data_path, Path::new(&data_name))?
            } else {
                fitted
            };
            fs::write(&out, fitted.to_json()?)?;
            println!("wrote {} (threshold {:.4})", out.display(), fitted.threshold);
        }
        Command::Evaluate { model, dataset, features, out } => {
            let text = fs::read_to_string(&model).with_context(|| format!("reading {}", model.display()))?;
            let mut fitted = FittedModel::from_json(&text)?;
            fitted.resolve(model.parent().unwrap_or(Path::new(".")))?;
            let ds = load_dataset(&dataset, &features)?;
            let scores = fitted.score(&ds)?;
            let name = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
            let report = evaluate(&name, "", ds.labels(), &scores, fitted.threshold)?;
            let out = out_path(&out_dir, &out.unwrap_or_else(|| PathBuf::from(format!("{name}.eval.json"))));
            write_json(&out, serde_json::to_string_pretty(&report)?)?;
            fs::write(out.with_extension("calibration.csv"), report.calibration.to_csv())?;
            for (k, v) in nutriscreen::metrics::MetricSet::NAMES.iter().zip(report.metrics.values()) {
                println!("{k:>18} {v:.4}");
            }
        }
        Command::Benchmark { dataset, features, kfold, train_ratio, models, workers } => {
            let mut cfg = load_config(&cli.config, cli.seed)?;
            match (kfold, train_ratio) {
                (Some(_), Some(_)) => bail!(Error::InvalidConfig("--kfold and --train-ratio are exclusive".into())),
                (Some(k), None) => cfg.protocol = Protocol::KFold { k },
                (None, Some(r)) => cfg.protocol = Protocol::Holdout { train_ratio: r },
                (None, None) => {}
            }
            if models.is_some() {
                cfg.models = models;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let ds = load_dataset(&dataset, &features)?;
            let run = run_benchmark(&cfg, &ds)?;
            let report = write_run(&run, &out_dir)?;
            print!("{}", run.leaderboard.to_csv());
            println!("report: {}", report.display());
            let failed = run.failures().len();
            if failed > 0 {
                return Ok(Some(Partial(failed)));
            }
        }
        Command::Report { run_dir } => {
            let dir = run_dir.unwrap_or(out_dir);
            let path = emit_report(&dir).map_err(|e| anyhow!(e)).context("building report")?;
            println!("wrote {}", path.display());
        }
    }
    Ok(None)
}
