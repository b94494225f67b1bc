//! Argument parsing and command dispatch for the `odorsim` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use odor_consensus::config::SimConfig;
use odor_consensus::planner::CastingRule;
use odor_consensus::trace::Trace;

use crate::plot::{write_figures, FigureKind};
use crate::run::{run_batch, run_to_dir, MANIFEST_FILE};
use crate::{check, scenario, CliError};

#[derive(Parser)]
#[command(name = "odorsim", version, about = "Multi-agent odor source localization simulator")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Scenario TOML, run manifest JSON, or canned scenario name.
    #[arg(long)]
    config: String,
    /// Override a config key, e.g. `--set smc.mu=6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Cast with `|x - x_hat| / 2 + x_hat` instead of the midpoint.
    #[arg(long)]
    casting_literal: bool,
}

impl ConfigArgs {
    fn load(&self, seed: Option<u64>) -> Result<SimConfig, CliError> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = seed {
            overrides.push(format!("seed={seed}"));
        }
        if self.casting_literal {
            overrides.push("planner.casting=\"literal\"".into());
        }
        let cfg = scenario::load(&self.config, &overrides)?;
        debug_assert!(!self.casting_literal || cfg.planner.casting == CastingRule::Literal);
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trace.csv, metrics.json and run_manifest.json.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, env = "ODORSIM_OUT", default_value = "odorsim-out")]
        out: PathBuf,
        /// Also write trace.jsonl.
        #[arg(long)]
        jsonl: bool,
    },
    /// Render figures from a trace.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        fig: FigureKind,
        /// Manifest supplying lambda1; defaults to run_manifest.json beside the trace.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory for the SVG files; defaults to the trace's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report graph structure and gain conditions without running.
    Check {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run several scenarios and seeds concurrently.
    Batch {
        /// Scenario TOML, manifest, or canned name. Repeatable.
        #[arg(long = "config", required = true)]
        configs: Vec<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Seeds to run each scenario with; the scenario's own seed if empty.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        #[arg(long, env = "ODORSIM_OUT", default_value = "odorsim-out")]
        out: PathBuf,
    },
}

fn lambda1_for(trace: &std::path::Path, manifest: Option<PathBuf>) -> anyhow::Result<f64> {
    let path = manifest.unwrap_or_else(|| trace.with_file_name(MANIFEST_FILE));
    if !path.is_file() {
        let fallback = SimConfig::default().smc.lambda1;
        log::warn!("no manifest at {}; using lambda1 = {fallback}", path.display());
        return Ok(fallback);
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = scenario::parse_manifest(&text, &[]).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok(cfg.smc.lambda1)
}

/// Runs one parsed command, writing its report to `stdout`.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            jsonl,
        } => {
            let cfg = config.load(seed)?;
            let report = run_to_dir(&cfg, &out, jsonl)?;
            let m = &report.metrics;
            writeln!(
                stdout,
                "{}: seed {} | time to consensus {} | final gap {:.3e} | final tracking error {:.3e} | wrote {}",
                report.scenario,
                report.seed,
                if m.time_to_consensus.is_finite() {
                    format!("{:.3} s", m.time_to_consensus)
                } else {
                    "never".into()
                },
                m.final_max_gap,
                m.final_tracking_error,
                out.display()
            )
            .map_err(anyhow::Error::from)?;
            Ok(0)
        }
        Command::Plot {
            trace,
            fig,
            manifest,
            out,
        } => {
            let file = std::fs::File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            let data = Trace::read_csv(std::io::BufReader::new(file)).map_err(anyhow::Error::from)?;
            let lambda1 = lambda1_for(&trace, manifest)?;
            let dir = out.unwrap_or_else(|| trace.parent().map(PathBuf::from).unwrap_or_default());
            for path in write_figures(&data, fig, lambda1, &dir)? {
                writeln!(stdout, "{}", path.display()).map_err(anyhow::Error::from)?;
            }
            Ok(0)
        }
        Command::Check { config } => {
            let cfg = config.load(None)?;
            let (text, code) = check::run_check(&cfg)?;
            write!(stdout, "{text}").map_err(anyhow::Error::from)?;
            Ok(code)
        }
        Command::Batch {
            configs,
            overrides,
            seeds,
            jobs,
            out,
        } => {
            let mut cfgs = Vec::new();
            for spec in &configs {
                let base = scenario::load(spec, &overrides)?;
                if seeds.is_empty() {
                    cfgs.push(base);
                } else {
                    for &seed in &seeds {
                        let mut c = base.clone();
                        c.seed = seed;
                        cfgs.push(c);
                    }
                }
            }
            let mut worst = 0;
            for (dir, res) in run_batch(&cfgs, &out, jobs) {
                match res {
                    Ok(r) => writeln!(
                        stdout,
                        "ok   {} (final gap {:.3e})",
                        dir.display(),
                        r.metrics.final_max_gap
                    )
                    .map_err(anyhow::Error::from)?,
                    Err(e) => {
                        writeln!(stdout, "fail {}: {e}", dir.display()).map_err(anyhow::Error::from)?;
                        worst = worst.max(e.exit_code());
                    }
                }
            }
            Ok(worst)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 {
                write!(stdout, "{}", e.render())
            } else {
                write!(stderr, "{}", e.render())
            };
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
