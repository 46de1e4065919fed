use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use etalab_cli::{run_command, write_artifacts, CliError, Command, RunConfig};

#[derive(Parser)]
#[command(name = "etalab", about = "Numerical checks of eta-forms and the index identity on flat tori")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// INI file overriding the command defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the random test form and random sample points.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn run(args: &Args) -> Result<bool, CliError> {
    let cfg = match &args.config {
        Some(path) => RunConfig::from_ini(args.command, &std::fs::read_to_string(path)?)?,
        None => RunConfig::default_for(args.command),
    };
    let outcome = run_command(args.command, &cfg, args.seed)?;
    for row in &outcome.rows {
        println!("{}", row.summary());
    }
    let dir = args.out.clone().or(cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("etalab-out"));
    write_artifacts(&outcome, &dir.join(args.command.name()))?;
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
