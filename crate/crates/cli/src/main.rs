//! `cfgsmith`: corpus-guided generator configurations for compiler testing.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cfgsmith_core::campaign::{self, CampaignConfig, Layout};
use cfgsmith_core::clustering::{ClusteringParams, ModelFile};
use cfgsmith_core::features::{FeatureCatalog, FeatureMatrix};
use cfgsmith_core::planner::{plan_schedule, CampaignPlan, Strategy};
use cfgsmith_core::reporting::{self, ReportFormat};
use cfgsmith_core::{Error, Result};

#[derive(Parser)]
#[command(name = "cfgsmith", version, about = "Corpus-guided generator configurations for differential compiler testing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed (clustering seed for `cluster`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `run`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Keep sources of passing trials.
    #[arg(long, global = true)]
    keep_all: bool,
    /// Output file or directory.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Count catalog features in every C file of a corpus.
    Extract {
        /// Corpus directory.
        corpus: PathBuf,
        #[arg(long, default_value = "builtin")]
        catalog: String,
    },
    /// Normalize feature counts and cluster them with X-Means.
    Cluster {
        /// Feature CSV written by `extract`.
        features: PathBuf,
        #[arg(long, default_value = "builtin")]
        catalog: String,
        #[arg(long)]
        k_min: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Build a trial schedule.
    Plan {
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        #[arg(long)]
        budget: u64,
        /// Model file (required by the centroid strategies).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run or resume a campaign.
    Run(RunArgs),
    /// Summarize one or more campaign directories.
    Report {
        #[arg(required = true)]
        campaigns: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Campaign configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<String>,
    /// Generator command line, split on whitespace.
    #[arg(long)]
    generator: Option<String>,
    /// Compiler command line, split on whitespace.
    #[arg(long)]
    compiler: Option<String>,
    /// Seconds.
    #[arg(long)]
    compile_timeout: Option<f64>,
    /// Seconds.
    #[arg(long)]
    exec_timeout: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    #[value(name = "kconfig-round-robin")]
    RoundRobin,
    #[value(name = "kconfig-weighted")]
    Weighted,
    Swarm,
    Default,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::RoundRobin => Strategy::RoundRobin,
            StrategyArg::Weighted => Strategy::Weighted,
            StrategyArg::Swarm => Strategy::Swarm,
            StrategyArg::Default => Strategy::Default,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Table,
    Machine,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cfgsmith: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let g = cli.global;
    match cli.command {
        Command::Extract { corpus, catalog } => extract(&corpus, &catalog, g.output.as_deref()),
        Command::Cluster {
            features,
            catalog,
            k_min,
            k_max,
            tolerance,
        } => {
            let mut params = ClusteringParams::default();
            params.k_min = k_min.unwrap_or(params.k_min);
            params.k_max = k_max.unwrap_or(params.k_max);
            params.tolerance = tolerance.unwrap_or(params.tolerance);
            params.rng_seed = g.seed.unwrap_or(params.rng_seed);
            cluster(&features, &catalog, params, g.output.as_deref())
        }
        Command::Plan {
            strategy,
            budget,
            model,
        } => plan(strategy.into(), budget, model.as_deref(), g.seed.unwrap_or(0), g.output.as_deref()),
        Command::Run(args) => run(args, g),
        Command::Report { campaigns, format } => report(&campaigns, format),
    }
}

fn write_or_print(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn extract(corpus: &Path, catalog: &str, output: Option<&Path>) -> Result<()> {
    let catalog = FeatureCatalog::load(Path::new(catalog))?;
    if !corpus.is_dir() {
        return Err(Error::Validation(format!("{} is not a directory", corpus.display())));
    }
    let (matrix, diagnostics) = campaign::extract_corpus(corpus, &catalog).map_err(|e| match e {
        Error::Validation(_) => Error::Validation(format!("no corpus files in {}", corpus.display())),
        other => other,
    })?;
    for d in &diagnostics {
        eprintln!("skipped {}: {}", d.path.display(), d.message);
    }
    let mut buf = Vec::new();
    matrix.write_csv(&mut buf)?;
    write_or_print(output, &String::from_utf8_lossy(&buf))?;
    log::info!("{} programs, {} skipped", matrix.rows.len(), diagnostics.len());
    Ok(())
}

fn cluster(features: &Path, catalog: &str, params: ClusteringParams, output: Option<&Path>) -> Result<()> {
    let catalog = FeatureCatalog::load(Path::new(catalog))?;
    let file = std::fs::File::open(features).map_err(|e| Error::Io {
        path: features.to_path_buf(),
        source: e,
    })?;
    let matrix = FeatureMatrix::read_csv(file, &catalog)?;
    let model = campaign::cluster_matrix(&matrix, &params)?;
    write_or_print(output, &(model.to_json() + "\n"))?;
    eprintln!("k = {}", model.k);
    eprintln!("sizes = {:?}", model.sizes);
    Ok(())
}

fn plan(strategy: Strategy, budget: u64, model_path: Option<&Path>, seed: u64, output: Option<&Path>) -> Result<()> {
    let model_file = model_path.map(ModelFile::load).transpose()?;
    let model = model_file.as_ref().map(ModelFile::model);
    let mut plan: CampaignPlan = plan_schedule(model.as_ref(), strategy, budget, seed)?;
    if model.is_some() {
        plan.model_ref = model_path.map(|p| p.display().to_string());
    }
    write_or_print(output, &(plan.to_json() + "\n"))?;
    let counts = plan.counts();
    if !counts.is_empty() {
        eprintln!("trials per centroid = {counts:?}");
    }
    Ok(())
}

fn run(args: RunArgs, g: Global) -> Result<()> {
    // Flags over file over defaults.
    let mut config = match &args.config {
        Some(path) => CampaignConfig::load(path)?,
        None => CampaignConfig::default(),
    };
    if let Some(s) = args.strategy {
        config.strategy = s.into();
    }
    if let Some(b) = args.budget {
        config.budget = b;
    }
    if let Some(c) = args.corpus {
        config.corpus_dir = Some(c);
    }
    if let Some(m) = args.model {
        config.model = Some(m);
    }
    if let Some(c) = args.catalog {
        config.catalog = c;
    }
    if let Some(cmd) = args.generator {
        config.toolchain.generator = cmd.split_whitespace().map(String::from).collect();
    }
    if let Some(cmd) = args.compiler {
        config.toolchain.compiler = cmd.split_whitespace().map(String::from).collect();
    }
    if let Some(t) = args.compile_timeout {
        config.toolchain.compile_timeout = t;
    }
    if let Some(t) = args.exec_timeout {
        config.toolchain.exec_timeout = t;
    }
    if let Some(s) = g.seed {
        config.master_seed = s;
    }
    if let Some(w) = g.workers {
        config.workers = w;
    }
    if g.keep_all {
        config.keep_all = true;
    }
    if let Some(o) = g.output {
        config.output_dir = o;
    }

    let cancel = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&cancel);
    ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
        eprintln!("interrupted; stopping trials (press Ctrl-C again to quit at once)");
    })
    .map_err(|e| Error::Environment(format!("cannot install signal handler: {e}")))?;

    let outcome = campaign::run_campaign(&config, &cancel)?;
    if outcome.resumed > 0 {
        log::info!("{} trials were already recorded", outcome.resumed);
    }
    log::info!("{} trials executed", outcome.executed);
    print!("{}", reporting::report(&outcome.summary, ReportFormat::Table));
    Ok(())
}

fn report(campaigns: &[PathBuf], format: FormatArg) -> Result<()> {
    let mut summaries = Vec::new();
    for dir in campaigns {
        let layout = Layout::new(dir);
        let file = std::fs::File::open(layout.records()).map_err(|e| {
            Error::Validation(format!("no records log at {}: {e}", layout.records().display()))
        })?;
        let label = CampaignPlan::load(&layout.plan())
            .map(|p| p.strategy.name().to_string())
            .unwrap_or_else(|_| dir.display().to_string());
        let summary = reporting::tally(std::io::BufReader::new(file), &label)?;
        summaries.push(summary);
    }
    match (format, summaries.as_slice()) {
        (FormatArg::Table, [one]) => print!("{}", reporting::report(one, ReportFormat::Table)),
        (FormatArg::Table, many) => print!("{}", reporting::report_runs(many)),
        (FormatArg::Machine, many) => {
            for s in many {
                print!("{}", reporting::report(s, ReportFormat::Machine));
            }
        }
    }
    Ok(())
}
