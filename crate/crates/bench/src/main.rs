use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nfmpc_bench::config::{ControllerKind, ExperimentConfig, Task};
use nfmpc_bench::error::Result;
use nfmpc_bench::output::{emit_outputs, read_timings, TIMING_REPORT};
use nfmpc_bench::{run_experiment, timing_report, train, verify};

#[derive(Parser)]
#[command(name = "nfmpc-bench", version, about = "Train and evaluate latent-space flow MPPI on planar navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train NFMPC and write flow/shift checkpoints plus a learning curve.
    Train(Common),
    /// Evaluate controllers on the fixed environment set.
    Eval(Common),
    /// Run the numerical verification suite.
    Verify,
    /// Per-step wall clock relative to Gaussian MPPI.
    Timing {
        #[command(flatten)]
        common: Common,
        /// Report on an existing eval directory instead of running episodes.
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration; omitted keys take the task preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset used when no configuration file is given.
    #[arg(long, default_value = "pn-rand-dyn")]
    task: String,
    /// Controller seed for eval, initialization seed for train.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated sample counts.
    #[arg(long, value_delimiter = ',')]
    samples: Option<Vec<usize>>,
    /// Restrict to one controller (mppi, flowmppi, nfmpc).
    #[arg(long)]
    controller: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluation environments, or training episodes for train.
    #[arg(long)]
    episodes: Option<usize>,
}

impl Common {
    fn resolve(&self, training: bool) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::preset(self.task.parse::<Task>()?),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = &self.samples {
            cfg.samples = n.clone();
        }
        if let Some(c) = &self.controller {
            cfg.controllers = vec![c.parse::<ControllerKind>()?];
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(e) = self.episodes {
            if training {
                cfg.training.episodes = e;
            } else {
                cfg.episodes = e;
            }
        }
        Ok(cfg)
    }
}

fn eval(cfg: &ExperimentConfig) -> Result<()> {
    let exp = run_experiment(cfg)?;
    let written = emit_outputs(&exp, cfg, &cfg.output_dir)?;
    print!("{}", exp.summary.to_csv());
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn timing(cfg: &ExperimentConfig, from: Option<&Path>) -> Result<()> {
    let dir = match from {
        Some(d) => d.to_path_buf(),
        None => {
            let cfg = ExperimentConfig {
                parallel: false,
                ..cfg.clone()
            };
            let exp = run_experiment(&cfg)?;
            emit_outputs(&exp, &cfg, &cfg.output_dir)?;
            cfg.output_dir.clone()
        }
    };
    let report = timing_report(&read_timings(&dir)?);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", report.to_table());
    let path = dir.join(TIMING_REPORT);
    nfmpc_bench::output::write_atomic(&path, &report.to_csv())?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.resolve(true)?;
            let out = cfg.output_dir.clone();
            let result = train(&cfg, cfg.seed, &out, |row| {
                let val = row
                    .validation
                    .as_ref()
                    .map(|v| format!(" val success {:.2} median {:.1}", v.success_rate, v.median_cost))
                    .unwrap_or_default();
                eprintln!("episode {} loss {:.3}{val}", row.episode, row.train_loss);
            })?;
            if let Some(reason) = &result.report.diverged {
                eprintln!("training stopped early: {reason}");
            }
            eprintln!(
                "best checkpoint from episode {}; wrote {}, {}, {}",
                result.report.best_episode,
                result.flow.display(),
                result.shift.display(),
                result.curve.display()
            );
            Ok(true)
        }
        Command::Eval(common) => {
            eval(&common.resolve(false)?)?;
            Ok(true)
        }
        Command::Verify => {
            let checks = verify::all();
            for c in &checks {
                println!("{}", c.line());
            }
            Ok(checks.iter().all(|c| c.passed))
        }
        Command::Timing { common, from } => {
            timing(&common.resolve(false)?, from.as_deref())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
