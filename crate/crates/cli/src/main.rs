use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fuzzssd::campaign::{run_campaign, CampaignConfig, Strategy};
use fuzzssd::engine::EngineParams;
use fuzzssd::report::{
    apply_config, compare_table, parse_config, read_run_summary, write_plot_data, write_run_dir,
};
use fuzzssd::ssd::{DeviceConfig, OpcodeSet};

/// Exit code for configuration, input and output errors.
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "fuzzssd", version, about = "State-aware fuzzing of a simulated SSD FTL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one campaign and write its run directory.
    Run(RunArgs),
    /// Build a comparison table from run directories, or run a matrix first.
    Compare(CompareArgs),
    /// Write fig2.csv and fig3.csv into a run directory.
    PlotData {
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args, Clone)]
struct CampaignArgs {
    /// Device preset: desk-scale or paper-scale.
    #[arg(long, default_value = "desk-scale")]
    preset: String,
    /// Comma separated opcodes, e.g. write,read,flush.
    #[arg(long)]
    ops: Option<String>,
    #[arg(long)]
    seq_limit: Option<usize>,
    #[arg(long)]
    budget_cmds: Option<u64>,
    #[arg(long)]
    budget_secs: Option<u64>,
    #[arg(long, value_enum)]
    noise: Option<Switch>,
    /// `key = value` file applied over the preset, before other flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write zero wall time so reruns produce identical files.
    #[arg(long)]
    reproducible: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to $FUZZSSD_OUT/<strategy>-<seed>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    campaign: CampaignArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Run directories holding summary.csv.
    dirs: Vec<PathBuf>,
    /// Run every strategy/seed pair in parallel before comparing.
    #[arg(long)]
    run_matrix: bool,
    #[arg(long, default_value = "coverage,state-aware", requires = "run_matrix")]
    strategies: String,
    /// Seeds 1..=N for the matrix.
    #[arg(long, default_value_t = 5, requires = "run_matrix")]
    seeds: u64,
    /// Output CSV; with --run-matrix, the root of the run directories.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    campaign: CampaignArgs,
}

fn output_root() -> PathBuf {
    std::env::var_os("FUZZSSD_OUT").map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn build_config(args: &CampaignArgs, strategy: Option<&str>, seed: Option<u64>) -> Result<CampaignConfig, String> {
    let device = DeviceConfig::preset(&args.preset).map_err(|e| e.to_string())?;
    let mut config = CampaignConfig::new(Strategy::StateAware, 1);
    config.engine = EngineParams::for_device(&device);
    config.device = device;
    if args.preset == "paper-scale" {
        config.faults = fuzzssd::ssd::fault_set_preset("paper-scale").map_err(|e| e.to_string())?;
    }
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let entries = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        apply_config(&entries, &mut config).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if let Some(s) = strategy {
        config.strategy = s.parse().map_err(|e| format!("{e}"))?;
    }
    if let Some(seed) = seed {
        config.rng_seed = seed;
    }
    if let Some(ops) = &args.ops {
        config.enabled = OpcodeSet::parse_list(ops).map_err(|e| e.to_string())?;
    }
    if let Some(n) = args.seq_limit {
        config.seq_limit = n;
    }
    if let Some(n) = args.budget_cmds {
        config.budget_commands = n;
    }
    if let Some(n) = args.budget_secs {
        config.budget_time = Duration::from_secs(n);
    }
    if let Some(noise) = args.noise {
        config.device.noise_enabled = matches!(noise, Switch::On);
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn execute(config: &CampaignConfig, out: &Path, reproducible: bool) -> Result<String, String> {
    let outcome = run_campaign(config).map_err(|e| e.to_string())?;
    write_run_dir(out, config, &outcome, reproducible).map_err(|e| e.to_string())?;
    let s = &outcome.stats;
    Ok(format!(
        "{} seed {}: {} commands, coverage {:.3}, {} crashes, {} hangs -> {}",
        s.strategy,
        s.seed,
        s.commands_executed,
        s.final_coverage_ratio,
        s.crashes(),
        s.hangs(),
        out.display()
    ))
}

fn cmd_run(args: RunArgs) -> Result<(), String> {
    let config = build_config(&args.campaign, args.strategy.as_deref(), args.seed)?;
    let out = args
        .out
        .unwrap_or_else(|| output_root().join(format!("{}-{}", config.strategy, config.rng_seed)));
    println!("{}", execute(&config, &out, args.campaign.reproducible)?);
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), String> {
    let mut dirs = args.dirs.clone();
    let mut table_path = args.out.clone();
    if args.run_matrix {
        let root = args.out.clone().unwrap_or_else(output_root);
        let strategies: Vec<String> = args.strategies.split(',').map(|s| s.trim().to_string()).collect();
        let mut jobs = Vec::new();
        for strategy in &strategies {
            for seed in 1..=args.seeds {
                let config = build_config(&args.campaign, Some(strategy), Some(seed))?;
                let dir = root.join(format!("{}-{seed}", config.strategy));
                jobs.push((config, dir));
            }
        }
        let reproducible = args.campaign.reproducible;
        let results: Vec<Result<String, String>> = thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|(config, dir)| scope.spawn(move || execute(config, dir, reproducible)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err("campaign thread panicked".to_string())))
                .collect()
        });
        for line in results {
            eprintln!("{}", line?);
        }
        dirs.extend(jobs.into_iter().map(|(_, dir)| dir));
        table_path = Some(root.join("compare.csv"));
    }
    if dirs.len() < 2 {
        return Err("compare needs at least two run directories".to_string());
    }
    let mut rows = Vec::new();
    for dir in &dirs {
        rows.extend(read_run_summary(dir).map_err(|e| e.to_string())?);
    }
    let table = compare_table(&rows);
    match table_path {
        Some(path) => fs::write(&path, &table).map_err(|e| format!("{}: {e}", path.display()))?,
        None => print!("{table}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::PlotData { dir } => write_plot_data(&dir).map_err(|e| e.to_string()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
