use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qram_cli::{
    cmd_costs, cmd_factory, cmd_fidelity_scan, cmd_haar_check, cmd_schedule, cmd_simulate, cmd_verify, CliError,
    RunConfig,
};

#[derive(Parser, Debug)]
#[command(name = "qram", version, about = "Resource-state QRAM simulator and analyzer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; side files are written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Memory sizes, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    n: Option<Vec<usize>>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Run the invariant suites.
    Verify,
    /// Toffoli, T and depth table.
    Costs,
    /// Print the layered NOHE circuit.
    Schedule,
    /// One dense resource-state query.
    Simulate,
    /// Monte Carlo fidelity sweep with fitted exponents.
    FidelityScan,
    /// Haar moments against flat-simplex sampling.
    HaarCheck,
    /// Factory timing, move plan and AOD checks.
    Factory,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.n {
        cfg.n = n;
    }
    if let Some(out) = cli.out {
        cfg.out = Some(out);
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| CliError::Run(e.to_string()))?;
    }
    let output = match cli.command {
        Command::Verify => cmd_verify(&cfg)?,
        Command::Costs => cmd_costs(&cfg)?,
        Command::Schedule => cmd_schedule(&cfg)?,
        Command::Simulate => cmd_simulate(&cfg)?,
        Command::FidelityScan => cmd_fidelity_scan(&cfg)?,
        Command::HaarCheck => cmd_haar_check(&cfg)?,
        Command::Factory => cmd_factory(&cfg)?,
    };
    if let Some(text) = output.write(cfg.out.as_deref())? {
        print!("{text}");
    }
    Ok(output.passed)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("assertion failure: see report");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
