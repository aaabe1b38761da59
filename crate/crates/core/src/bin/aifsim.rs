use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cournot_aif::categorical::Cpt;
use cournot_aif::config::{ExperimentConfig, ScenarioId};
use cournot_aif::error::Error;
use cournot_aif::genmodel::firm::{modality, sales_slice, MAX_PRODUCTION};
use cournot_aif::plot::{behavior_svg, likelihood_svg, price_svg};
use cournot_aif::sim::{build_agents, run_experiment};
use cournot_aif::trace::{read_csv, write_csv, RunSummary};
use cournot_aif::verify::Suite;

const EXIT_INPUT: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Active inference firms in a dynamic Cournot market.
#[derive(Debug, Parser)]
#[command(name = "aifsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its trace, summary and resolved config.
    Run {
        /// Config file (.toml or .json) or the name of a shipped scenario.
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "AIFSIM_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Draw a figure from a trace, or a heatmap from a likelihood JSON.
    Plot {
        input: PathBuf,
        #[arg(long, value_enum)]
        figure: Figure,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run built-in consistency checks.
    Verify {
        #[arg(long, value_enum)]
        suite: Option<SuiteArg>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Figure {
    Behavior,
    Price,
    Likelihood,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Oracle,
    Efe,
    Srp,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Oracle => Suite::Oracle,
            SuiteArg::Efe => Suite::Efe,
            SuiteArg::Srp => Suite::Srp,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, &out),
        Command::Plot { input, figure, out } => cmd_plot(&input, figure, &out),
        Command::Verify { suite } => cmd_verify(suite),
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("aifsim: {msg}");
    ExitCode::from(code)
}

fn load_config(arg: &str) -> Result<ExperimentConfig, Error> {
    let path = Path::new(arg);
    if path.exists() {
        return ExperimentConfig::load(path);
    }
    match ScenarioId::from_name(arg) {
        Ok(s) if s != ScenarioId::Custom => ExperimentConfig::preset(s, 0),
        _ => Err(Error::Config(format!("{arg}: no such file or shipped scenario"))),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn cmd_run(config: &str, seed: Option<u64>, out: &Path) -> ExitCode {
    let mut cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Err(e) = std::fs::create_dir_all(out) {
        return fail(EXIT_RUNTIME, format!("{}: {e}", out.display()));
    }
    let resolved = out.join("resolved-config.json");
    if let Err(e) = std::fs::write(&resolved, cfg.to_json() + "\n") {
        return fail(EXIT_RUNTIME, format!("{}: {e}", resolved.display()));
    }
    let trace_path = out.join("trace.csv");
    let records = match run_experiment(&cfg) {
        Ok(run) => run.records,
        Err(failure) => {
            let note = match write_csv(&trace_path, &failure.partial) {
                Ok(()) => format!("partial trace in {}", trace_path.display()),
                Err(e) => format!("could not write partial trace: {e}"),
            };
            return fail(EXIT_RUNTIME, format!("run failed: {failure}; {note}"));
        }
    };
    let written = write_csv(&trace_path, &records)
        .and_then(|_| write_json(&out.join("summary.json"), &RunSummary::from_records(&records, cfg.market.max_production)))
        .and_then(|_| write_likelihoods(&cfg, out));
    if let Err(e) = written {
        return fail(EXIT_RUNTIME, e);
    }
    println!("{} steps written to {}", records.len(), out.display());
    ExitCode::SUCCESS
}

/// Each firm's sales likelihood at its initial best-response production.
fn write_likelihoods(cfg: &ExperimentConfig, out: &Path) -> Result<(), Error> {
    for agent in build_agents(cfg)? {
        let q = agent.br_current.min(MAX_PRODUCTION);
        let view = sales_slice(&agent.gm.a[modality::SALES], q)?;
        write_json(&out.join(format!("sales-likelihood-f{}.json", agent.id + 1)), &view)?;
    }
    Ok(())
}

fn cmd_plot(input: &Path, figure: Figure, out: &Path) -> ExitCode {
    let svg = match figure {
        Figure::Behavior | Figure::Price => {
            let records = match read_csv(input) {
                Ok(r) => r,
                Err(e) => return fail(EXIT_INPUT, format!("{}: {e}", input.display())),
            };
            match figure {
                Figure::Behavior => behavior_svg(&records),
                _ => price_svg(&records),
            }
        }
        Figure::Likelihood => {
            let parsed = std::fs::read_to_string(input)
                .map_err(Error::from)
                .and_then(|text| serde_json::from_str::<Cpt>(&text).map_err(|e| Error::Trace(e.to_string())));
            match parsed {
                Ok(cpt) => {
                    let title = input.file_stem().and_then(|s| s.to_str()).unwrap_or("likelihood");
                    likelihood_svg(&cpt, title)
                }
                Err(e) => return fail(EXIT_INPUT, format!("{}: {e}", input.display())),
            }
        }
    };
    let svg = match svg {
        Ok(s) => s,
        Err(e) => return fail(EXIT_INPUT, format!("{}: {e}", input.display())),
    };
    if let Err(e) = std::fs::write(out, svg) {
        return fail(EXIT_RUNTIME, format!("{}: {e}", out.display()));
    }
    ExitCode::SUCCESS
}

fn cmd_verify(suite: Option<SuiteArg>) -> ExitCode {
    let suites: Vec<Suite> = match suite {
        Some(s) => vec![s.into()],
        None => Suite::ALL.to_vec(),
    };
    let mut failures = Vec::new();
    for s in suites {
        for c in s.run() {
            let mark = if c.passed { "pass" } else { "FAIL" };
            println!("{mark} [{}] {} ({})", s.name(), c.name, c.detail);
            if !c.passed {
                failures.push(format!("[{}] {}", s.name(), c.name));
            }
        }
    }
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{} check(s) failed:", failures.len());
        for f in &failures {
            eprintln!("  {f}");
        }
        ExitCode::from(1)
    }
}
