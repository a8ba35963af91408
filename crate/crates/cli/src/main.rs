//! `idset-mc`: SMC sampling, confidence sets, coverage studies and Q-Q data.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use idset_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "idset-mc", version, about = "Monte Carlo confidence sets for identified sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the SMC sampler; writes particles.csv and diagnostics.csv
    Sample(Common),
    /// Build confidence sets for one simulated dataset; writes cs.json
    Cs(Common),
    /// Run a coverage study; writes coverage.csv and manifest.json
    Coverage(Common),
    /// Posterior QLR quantiles against a reference law; writes qq.csv
    Qq(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory, created if missing
    #[arg(long, short, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: available cores)
    #[arg(long, env = "IDSET_MC_THREADS")]
    threads: Option<usize>,
    /// Model preset
    #[arg(long)]
    model: Option<String>,
    /// Sample size
    #[arg(long)]
    n: Option<usize>,
    /// Missing data: fixed η2
    #[arg(long)]
    eta2: Option<f64>,
    /// Drift constant c
    #[arg(long)]
    c: Option<f64>,
    /// Moment inequality: fixed μ*
    #[arg(long)]
    mu_star: Option<f64>,
    /// Number of particles
    #[arg(long = "B")]
    particles: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated confidence levels
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// Comma-separated procedures
    #[arg(long, value_delimiter = ',')]
    procedures: Option<Vec<String>>,
    /// Coverage replications
    #[arg(long)]
    replications: Option<usize>,
    /// Extra `key=value` overrides, dotted keys for nested tables
    #[arg(long = "set", short = 's', value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> idset_core::Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        let mut flags: Vec<String> = Vec::new();
        if let Some(m) = &self.model {
            flags.push(format!("model=\"{m}\""));
        }
        if let Some(n) = self.n {
            flags.push(format!("n={n}"));
        }
        if let Some(e) = self.eta2 {
            flags.push(format!("dgp.eta2={e:?}"));
        }
        if let Some(c) = self.c {
            flags.push(format!("dgp.c={c:?}"));
        }
        if let Some(m) = self.mu_star {
            flags.push(format!("dgp.mu_star={m:?}"));
        }
        if let Some(b) = self.particles {
            flags.push(format!("smc.particles={b}"));
        }
        if let Some(s) = self.seed {
            flags.push(format!("seed={s}"));
        }
        if let Some(l) = &self.levels {
            flags.push(format!("levels={l:?}"));
        }
        if let Some(p) = &self.procedures {
            flags.push(format!("procedures={p:?}"));
        }
        if let Some(r) = self.replications {
            flags.push(format!("study.replications={r}"));
        }
        for o in flags.iter().chain(&self.overrides) {
            cfg.set(o)?;
        }
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Degeneracy { .. } => 3,
        Error::Io(_) => 1,
        Error::Config(_) | Error::Dimension { .. } | Error::Domain { .. } | Error::Unsupported(_) | Error::Boundary { .. } => 2,
        _ => 1,
    }
}

fn fail(code: u8, kind: &str, message: String) -> ExitCode {
    let body = serde_json::json!({ "error": kind, "exit_code": code, "message": message });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn run(cli: Cli) -> idset_core::Result<()> {
    let (common, cmd): (&Common, fn(&RunConfig, &std::path::Path) -> idset_core::Result<()>) = match &cli.command {
        Command::Sample(c) => (c, commands::sample),
        Command::Cs(c) => (c, commands::cs),
        Command::Coverage(c) => (c, commands::coverage),
        Command::Qq(c) => (c, commands::qq),
    };
    let cfg = common.resolve()?;
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    std::fs::create_dir_all(&common.out)?;
    cmd(&cfg, &common.out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(2, "usage", e.to_string()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let kind = match code {
                2 => "config",
                3 => "degeneracy",
                _ => "runtime",
            };
            fail(code, kind, e.to_string())
        }
    }
}
