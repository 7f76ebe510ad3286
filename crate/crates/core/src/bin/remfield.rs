use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use remfield::harness::{
    cmd_analyze, cmd_bound, cmd_recenter, cmd_simulate, cmd_thermo, parse_betas, parse_model, ExperimentConfig,
    Overrides,
};

/// Random energy model in a random field: asymptotics and exact enumeration.
#[derive(Parser, Debug)]
#[command(name = "remfield", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the asymptotic thermodynamics and write thermo.json.
    Thermo,
    /// Print the finite-size recentering constants of replica 0's field.
    Recenter,
    /// Enumerate replicas into records.jsonl, resuming if present.
    Simulate,
    /// Aggregate records into report.json and tables.
    Analyze {
        /// Record file; defaults to records.jsonl in the output directory.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Fractional-moment bound over a beta grid.
    Bound,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment configuration; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Field law as JSON or shorthand such as rademacher:0.5,1.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated, e.g. 0.25,0.5,bc,1.5bc,2bc.
    #[arg(long, global = true)]
    betas: Option<String>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

fn load_config(c: &Common) -> remfield::Result<ExperimentConfig> {
    let mut config = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.apply(Overrides {
        model: c.model.as_deref().map(parse_model).transpose()?,
        n: c.n,
        replicas: c.replicas,
        master_seed: c.seed,
        betas: c.betas.as_deref().map(parse_betas).transpose()?,
        workers: c.workers,
        output_dir: c.out.clone(),
    });
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> remfield::Result<ExitCode> {
    let config = load_config(&cli.common)?;
    match cli.command {
        Command::Thermo => {
            let thermo = cmd_thermo(&config)?;
            println!("{}", serde_json::to_string_pretty(&thermo)?);
        }
        Command::Recenter => {
            let constants = cmd_recenter(&config)?;
            println!("{}", serde_json::to_string_pretty(&constants)?);
        }
        Command::Bound => {
            println!("beta,free_energy,fractional_bound,m_star");
            for p in cmd_bound(&config)? {
                println!("{},{},{},{}", p.beta, p.free_energy, p.fractional_bound, p.m_star);
            }
        }
        Command::Simulate => {
            let s = cmd_simulate(&config)?;
            println!("{}: {} written, {} already present", s.path.display(), s.written, s.skipped);
        }
        Command::Analyze { records } => {
            let path = records.unwrap_or_else(|| config.records_path());
            let report = cmd_analyze(&path, &config)?;
            print!("{}", report.summary());
            if !report.passed() {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
