use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use saddletr_cli::commands::{cmd_budgets, cmd_run, cmd_verify};

/// Trust-region experiments with runtime-verifiable decrease guarantees.
#[derive(Parser)]
#[command(name = "saddletr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the runs described by a config file and write trace files.
    Run {
        config: PathBuf,
        /// Override the base run seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the gradient tolerance.
        #[arg(long = "eps-g")]
        eps_g: Option<f64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a trace against the invariant suite.
    Verify { trace: PathBuf, config: PathBuf },
    /// Print the worst-case budget report, optionally against a trace.
    Budgets {
        config: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

fn rewrite_config(
    config: &PathBuf,
    seed: Option<u64>,
    eps_g: Option<f64>,
    out: Option<PathBuf>,
) -> anyhow::Result<(PathBuf, Option<PathBuf>)> {
    // Convenience overrides are applied by editing the parsed document and
    // writing a temp config, keeping a single source of truth for the run
    // parameters embedded in the trace. Relative paths keep resolving
    // against the original config directory.
    if seed.is_none() && eps_g.is_none() && out.is_none() {
        return Ok((config.clone(), None));
    }
    let text = std::fs::read_to_string(config)?;
    let mut doc: toml::Table = text.parse()?;
    if let Some(seed) = seed {
        doc.get_mut("run")
            .and_then(|v| v.as_table_mut())
            .map(|t| t.insert("seed".into(), toml::Value::Integer(seed as i64)));
    }
    if let Some(eps) = eps_g {
        doc.get_mut("solver")
            .and_then(|v| v.as_table_mut())
            .map(|t| t.insert("eps_g".into(), toml::Value::Float(eps)));
    }
    if let Some(out) = out {
        doc.get_mut("run").and_then(|v| v.as_table_mut()).map(|t| {
            t.insert(
                "out_dir".into(),
                toml::Value::String(out.display().to_string()),
            )
        });
    }
    let tmp = std::env::temp_dir().join(format!("saddletr_override_{}.toml", std::process::id()));
    std::fs::write(&tmp, toml::to_string(&doc)?)?;
    let base = config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((tmp, Some(base)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout();
    let outcome = match cli.command {
        Command::Run {
            config,
            seed,
            eps_g,
            out,
        } => rewrite_config(&config, seed, eps_g, out)
            .and_then(|(path, base)| cmd_run(&path, base.as_deref(), &mut stdout)),
        Command::Verify { trace, config } => cmd_verify(&trace, &config, &mut stdout),
        Command::Budgets { config, trace } => {
            cmd_budgets(&config, trace.as_deref(), &mut stdout).map(|_| true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
