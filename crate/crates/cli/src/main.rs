use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{ArgGroup, Parser, Subcommand};
use semfuzz::campaign::{self, CampaignConfig, CampaignError, Mode};

#[derive(Parser)]
#[command(name = "semfuzz", version, about = "Coverage-guided fuzzing with semantic novelty feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a fuzzing campaign until its budget is spent.
    Run(RunArgs),
}

#[derive(clap::Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["master", "helper", "combined"])))]
struct RunArgs {
    /// Master role: havoc mutation, coverage-only admission.
    #[arg(short = 'M')]
    master: bool,
    /// Helper role: structured generation with semantic novelty.
    #[arg(short = 'S')]
    helper: bool,
    /// Both roles in one deterministic process.
    #[arg(long)]
    combined: bool,
    /// Target id (one of the bundled testbed targets).
    #[arg(long)]
    target: String,
    /// Target manifest; defaults to the bundled one.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Format schema; defaults to `schema.json` next to the manifest.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Initial corpus directory; defaults to `seeds/` next to the manifest.
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Wall-clock budget in seconds.
    #[arg(long, default_value_t = 60.0)]
    budget: f64,
    /// Optional execution budget.
    #[arg(long)]
    execs: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.25)]
    tau: f64,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.8)]
    temp: f64,
    #[arg(long)]
    out: PathBuf,
    /// Shared queue root for -M/-S; combined mode defaults to `<out>/queue`.
    #[arg(long)]
    queue: Option<PathBuf>,
    /// Queue directory name for this process.
    #[arg(long)]
    id: Option<String>,
    /// Seconds between queue syncs for -M/-S.
    #[arg(long, default_value_t = 5)]
    sync_interval: u64,
    #[arg(long, env = "SEMFUZZ_LLM_ENDPOINT")]
    llm_endpoint: Option<String>,
    #[arg(long, env = "SEMFUZZ_EMBED_ENDPOINT")]
    embed_endpoint: Option<String>,
    #[arg(long)]
    semantic_off: bool,
    #[arg(long)]
    llm_off: bool,
    /// API category table (JSON name -> category) replacing the built-in one.
    #[arg(long)]
    api_table: Option<PathBuf>,
}

fn config(a: RunArgs) -> Result<CampaignConfig, CampaignError> {
    if !(a.budget.is_finite() && a.budget > 0.0) {
        return Err(CampaignError::Config("--budget must be a positive number of seconds".into()));
    }
    let manifest = match a.manifest {
        Some(m) => m,
        None => CampaignConfig::testbed(&a.target, &a.out)
            .ok_or_else(|| CampaignError::Config(format!("unknown target {:?}", a.target)))?
            .manifest,
    };
    let mut c = CampaignConfig::new(&a.target, manifest, a.out);
    c.mode = if a.master {
        Mode::Master
    } else if a.helper {
        Mode::Helper
    } else {
        Mode::SingleCombined
    };
    c.schema = a.schema;
    c.seeds = a.seeds;
    c.api_table = a.api_table;
    c.time_budget = Duration::from_secs_f64(a.budget);
    c.exec_budget = a.execs;
    c.rng_seed = a.seed;
    c.tau = a.tau;
    c.k = a.k;
    c.temperature = a.temp;
    c.queue_root = a.queue;
    c.fuzzer_id = a.id;
    c.sync_interval = Duration::from_secs(a.sync_interval);
    c.llm_endpoint = a.llm_endpoint;
    c.embed_endpoint = a.embed_endpoint;
    c.semantic_off = a.semantic_off;
    c.llm_off = a.llm_off;
    Ok(c)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let Command::Run(args) = cli.command;
    let result = config(args).and_then(campaign::run);
    match result {
        Ok(stats) => {
            println!(
                "{} executions, {} edges, {} unique bugs",
                stats.executions, stats.edges, stats.unique_bugs
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("semfuzz: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
