use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::stages::{self, Env, Outcome};

#[derive(Debug, Parser)]
#[command(name = "pulse", version, about = "Drug-mention stance analytics pipeline")]
pub struct Cli {
    /// Directory holding stage inputs and outputs.
    #[arg(long, global = true, default_value = ".")]
    pub work: PathBuf,
    /// Flat `key=value` config file; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads within a stage.
    #[arg(long, global = true, env = "PULSE_THREADS")]
    pub threads: Option<usize>,
    /// Run manifest path; `manifest.json` in the work directory by default.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Seed for sampling, k-means++ and `synth` (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Command that starts the inference sidecar.
    #[arg(long, global = true)]
    pub sidecar: Option<String>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic corpus with its ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse, filter and deduplicate raw tweets.
    Ingest(stages::IngestArgs),
    /// Tag single-drug tweets; multi-drug tweets are excluded.
    Match(stages::MatchArgs),
    /// Resolve tweets to US states.
    Geo(stages::GeoArgs),
    /// Classify the stance of US tweets.
    Stance(stages::StanceArgs),
    /// Weekly tweet counts against new cases.
    Trend(stages::TrendArgs),
    /// PCA and K-Means per drug, stance and wave.
    Cluster(stages::ClusterArgs),
    /// Infer user demographics.
    Demo(stages::DemoArgs),
    /// Chi-square tests and state stance summaries.
    Stats(stages::StatsArgs),
    /// Named-entity frequencies per drug and wave.
    Ner(stages::NerArgs),
    /// Stance share tables and charts.
    Report,
    /// Draw (or score) a per-drug annotation sample.
    SampleEval(stages::SampleEvalArgs),
    /// Score a classifier on labelled datasets.
    Evaluate(stages::EvaluateArgs),
    /// Run every stage from ingest to report.
    Run(RunArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    #[arg(long = "in", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub start: Option<NaiveDate>,
    #[arg(long)]
    pub end: Option<NaiveDate>,
    #[arg(long)]
    pub cases: Option<PathBuf>,
    #[arg(long)]
    pub region: Option<String>,
    #[arg(long)]
    pub roster: Option<PathBuf>,
    #[arg(long)]
    pub healthcare: Option<PathBuf>,
    #[arg(long)]
    pub m3: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
}

fn init_threads(n: Option<usize>) -> Result<(), CliError> {
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Contract("--threads must be positive".into()));
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        log::debug!("thread pool already initialised: {e}");
    }
    Ok(())
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    init_threads(config.pick_opt("threads", cli.threads)?)?;
    let seed = config.pick("seed", cli.seed, stages::DEFAULT_SEED)?;

    if let Command::Synth { out } = &cli.command {
        let files = crate::synth::generate(seed).write(out).map_err(|e| CliError::io(out, e))?;
        for f in files {
            log::info!("wrote {}", f.display());
        }
        return Ok(());
    }

    std::fs::create_dir_all(&cli.work).map_err(|e| CliError::io(&cli.work, e))?;
    let env = Env {
        work: cli.work.clone(),
        seed,
        sidecar_cmd: config.pick_opt("sidecar", cli.sidecar.clone())?,
        config,
    };
    let manifest_path = cli.manifest.clone().unwrap_or_else(|| env.path("manifest.json"));
    let mut manifest = RunManifest::open(&manifest_path, env.config.hash())?;
    let mut step = |name: &str, f: &dyn Fn(&Env) -> Result<Outcome, CliError>| {
        stages::record(&env, &mut manifest, &manifest_path, name, f)
    };

    match &cli.command {
        Command::Synth { .. } => unreachable!("handled above"),
        Command::Ingest(a) => step("ingest", &|e| stages::ingest(e, a)),
        Command::Match(a) => step("match", &|e| stages::match_drugs(e, a)),
        Command::Geo(a) => step("geo", &|e| stages::geo(e, a)),
        Command::Stance(a) => step("stance", &|e| stages::stance(e, a)),
        Command::Trend(a) => step("trend", &|e| stages::trend(e, a)),
        Command::Cluster(a) => step("cluster", &|e| stages::cluster(e, a)),
        Command::Demo(a) => step("demo", &|e| stages::demo(e, a)),
        Command::Stats(a) => step("stats", &|e| stages::stats(e, a)),
        Command::Ner(a) => step("ner", &|e| stages::ner(e, a)),
        Command::Report => step("report", &stages::report),
        Command::SampleEval(a) => step("sample-eval", &|e| stages::sample_eval(e, a)),
        Command::Evaluate(a) => step("evaluate", &|e| stages::evaluate(e, a)),
        Command::Run(r) => {
            let ingest = stages::IngestArgs { inputs: r.inputs.clone(), start: r.start, end: r.end };
            step("ingest", &|e| stages::ingest(e, &ingest))?;
            step("match", &|e| stages::match_drugs(e, &stages::MatchArgs { lexicon: r.lexicon.clone() }))?;
            step("geo", &|e| stages::geo(e, &stages::GeoArgs { gazetteer: r.gazetteer.clone() }))?;
            step("stance", &|e| stages::stance(e, &Default::default()))?;
            let trend = stages::TrendArgs { input: None, cases: r.cases.clone(), region: r.region.clone() };
            step("trend", &|e| stages::trend(e, &trend))?;
            step("cluster", &|e| stages::cluster(e, &Default::default()))?;
            let demo = stages::DemoArgs { roster: r.roster.clone(), healthcare: r.healthcare.clone(), m3: r.m3.clone() };
            step("demo", &|e| stages::demo(e, &demo))?;
            step("stats", &|e| stages::stats(e, &Default::default()))?;
            step("ner", &|e| stages::ner(e, &Default::default()))?;
            step("report", &stages::report)
        }
    }
}
