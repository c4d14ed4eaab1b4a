use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fsabr::harness::{self, Artifact, ExperimentConfig, Overrides};
use fsabr::pricers::Method;
use fsabr::Error;

#[derive(Parser)]
#[command(
    name = "fsabr",
    version,
    about = "Target volatility option pricing under lognormal fSABR"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price the first K/S0 node of the config with every selected method.
    Price(Common),
    /// Strike table over the K/S0 grid.
    Table(Common),
    /// ATM surface over two swept parameters.
    Surface(Common),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated method tags, e.g. MC,DFA,SVVE.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        let methods = self
            .methods
            .as_ref()
            .map(|v| {
                v.iter()
                    .map(|s| s.parse::<Method>())
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;
        cfg.apply(&Overrides {
            seed: self.seed,
            paths: self.paths,
            steps: self.steps,
            methods,
            output: self.out.clone(),
        })?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn emit(cfg: &ExperimentConfig, art: &Artifact, file: &str) -> Result<(), Error> {
    for e in &art.errors {
        eprintln!("warning: {e}");
    }
    match &cfg.output {
        Some(dir) => {
            let path = dir.join(file);
            art.write(&path)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{}", art.to_csv()),
    }
    Ok(())
}

fn artifact_name(cfg: &ExperimentConfig, kind: &str) -> String {
    let stem = Path::new(&cfg.name)
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("experiment");
    format!("{stem}_{kind}.csv")
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Price(args) => {
            let cfg = args.load()?;
            let params = cfg.params();
            let m = cfg.contract.moneyness[0];
            let contract = fsabr::pricers::Contract {
                k: m * cfg.spot,
                t: cfg.contract.t,
                sigma_bar: cfg.contract.sigma_bar,
            };
            let mut failure = None;
            for method in &cfg.methods {
                match harness::price_with(*method, &contract, &params, &cfg) {
                    Ok(r) => println!("{}", r.to_json()),
                    Err(e) => {
                        eprintln!("error: {method}: {e}");
                        failure.get_or_insert(exit_code(&e));
                    }
                }
            }
            Ok(failure.map_or(ExitCode::SUCCESS, ExitCode::from))
        }
        Command::Table(args) => {
            let cfg = args.load()?;
            let art = harness::run_table(&cfg)?;
            emit(&cfg, &art, &artifact_name(&cfg, "table"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Surface(args) => {
            let cfg = args.load()?;
            let art = harness::run_surface(&cfg)?;
            emit(&cfg, &art, &artifact_name(&cfg, "surface"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let checks = harness::selftest()?;
            let mut ok = true;
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
                ok &= c.passed;
            }
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
