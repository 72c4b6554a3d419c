//! `ilab`: run a registered experiment and write its report.
//!
//! Exit status: 0 all thresholds met, 2 threshold failure, 3 certification
//! failure, 4 configuration error.

mod config;
mod experiments;
mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use ilab_core::{Error, Report};

use config::{ExperimentConfig, Format};
use output::{Document, Results, Status};

#[derive(Parser, Debug)]
#[command(
    name = "ilab",
    version,
    about = "Desk-scale experiments on interpolation scales and their derivations"
)]
struct Cli {
    /// Experiment name, `list` or `validate`.
    target: String,
    /// Substring filter for `list`.
    filter: Option<String>,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_THRESHOLD: u8 = 2;
const EXIT_CERTIFICATION: u8 = 3;
const EXIT_CONFIG: u8 = 4;

fn load(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(&cli.target);
    if let Some(path) = &cli.config {
        let text =
            fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        config::apply(&mut cfg, &text, &path.display().to_string())?;
    }
    for (k, s) in cli.set.iter().enumerate() {
        config::apply(&mut cfg, s, &format!("--set #{}", k + 1))?;
    }
    if cli.target != "validate" {
        cfg.experiment = cli.target.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.display().to_string());
    }
    if let Some(format) = cli.format {
        cfg.format = format;
    }
    cfg.check()?;
    if experiments::find(&cfg.experiment).is_none() {
        return Err(config::ConfigError::UnknownExperiment(cfg.experiment.clone()).into());
    }
    Ok(cfg)
}

fn list(filter: Option<&str>) {
    for e in experiments::REGISTRY
        .iter()
        .filter(|e| filter.is_none_or(|f| e.name.contains(f)))
    {
        println!("{:<22} {}", e.name, e.citation);
        println!("{:<22} {}", "", e.summary);
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("ILAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| anyhow::anyhow!("ILAB_THREADS = {raw:?} must be an integer >= 1"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    if cli.target == "list" {
        list(cli.filter.as_deref());
        return Ok(0);
    }
    let cfg = match load(&cli).and_then(|c| configure_threads().map(|()| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("ilab: {e}");
            return Ok(EXIT_CONFIG);
        }
    };
    if cli.target == "validate" {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(0);
    }
    let experiment = experiments::find(&cfg.experiment).expect("checked by load");

    let start = Instant::now();
    let outcome = experiment.run(&cfg);
    let runtime_ms = start.elapsed().as_millis();
    let (results, code) = match outcome {
        Ok(o) => {
            let pass = o.checks.iter().all(|c| c.pass);
            let status = if pass { Status::Pass } else { Status::Fail };
            let results = Results {
                status,
                checks: o.checks,
                report: o.report,
                error: None,
            };
            (results, if pass { 0 } else { EXIT_THRESHOLD })
        }
        Err(e @ Error::NonConvergence { .. }) => (
            Results {
                status: Status::FailedCertification,
                checks: Vec::new(),
                report: Report::new(experiment.name),
                error: Some(e.to_string()),
            },
            EXIT_CERTIFICATION,
        ),
        Err(
            e @ (Error::InvalidParameter { .. }
            | Error::InsufficientDimension { .. }
            | Error::ShapeMismatch(_)),
        ) => {
            eprintln!("ilab: {e}");
            return Ok(EXIT_CONFIG);
        }
        Err(e) => return Err(e.into()),
    };
    let doc = Document {
        schema_version: output::SCHEMA_VERSION,
        experiment: experiment.name,
        config: &cfg,
        pass: code == 0,
        results,
        runtime_ms,
    };
    let bytes = output::render(&doc, cfg.format)?;
    match &cfg.out {
        Some(path) => output::write_atomic(std::path::Path::new(path), &bytes)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes)?;
        }
    }
    if code != 0 {
        eprintln!("ilab: {}: {:?}", experiment.name, doc.results.status);
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("ilab: {e:#}");
            ExitCode::FAILURE
        }
    }
}
