use std::path::PathBuf;
use std::process::ExitCode;

use abac::algorithms::{validate_schedule, Algorithm, Fault};
use abac::experiment::{run_experiment, ExperimentConfig, ExperimentKind, RunOutcome};
use abac::oracle::{run_validation, ValidationReport};
use clap::{Args, Parser, Subcommand};

const EXIT_CONFIG: u8 = 1;
const EXIT_AUDIT: u8 = 2;
const EXIT_QUORUM: u8 = 3;

/// Adaptive-basis actor-critic experiments and audits.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by the config.
    Run(Overrides),
    /// Run the oracle audit suite.
    Validate {
        #[command(flatten)]
        overrides: Overrides,
        /// Number of random instances per audit family.
        #[arg(long)]
        instances: Option<usize>,
        /// Inject a known defect to confirm the audits catch it.
        #[arg(long, value_parser = parse_fault)]
        inject_fault: Option<Fault>,
        /// Also audit a cosine basis with a mismatched phase table.
        #[arg(long)]
        wrong_phase: bool,
    },
    /// Check the step-size schedule and print the ratio table.
    ScheduleCheck(Overrides),
    /// Print the effective config as TOML.
    ShowConfig(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// TOML config file; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    kind: Option<String>,
    /// Comma-separated algorithms.
    #[arg(long, value_delimiter = ',')]
    algorithm: Vec<String>,
    /// Comma-separated critic basis sizes.
    #[arg(long, value_delimiter = ',')]
    features: Vec<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    eval_interval: Option<u64>,
    /// Mountain-car episodes per repeat.
    #[arg(long)]
    episodes: Option<usize>,
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    match s {
        "flip-abbe-basis-direction" => Ok(Fault::FlipAbbeBasisDirection),
        other => Err(format!("unknown fault {other:?}")),
    }
}

impl Overrides {
    fn resolve(&self) -> abac::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(kind) = &self.kind {
            cfg.kind = kind.parse()?;
        }
        if !self.algorithm.is_empty() {
            cfg.algorithms = self
                .algorithm
                .iter()
                .map(|a| a.parse::<Algorithm>())
                .collect::<abac::Result<_>>()
                .map_err(|e| abac::Error::Config(e.to_string()))?;
        }
        if !self.features.is_empty() {
            cfg.num_features = self.features.clone();
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
            cfg.validation.seed = v;
        }
        if let Some(v) = &self.output {
            cfg.output = v.clone();
        }
        if let Some(v) = self.eval_interval {
            cfg.eval_interval = v;
        }
        if let Some(v) = self.episodes {
            cfg.mountain_car.episodes = v;
        }
        Ok(cfg)
    }
}

fn print_validation(report: &ValidationReport) -> ExitCode {
    for a in &report.gradient_audits {
        for c in &a.audit.checks {
            let status = match (c.tolerance, c.passed) {
                (None, _) => "info",
                (Some(_), true) => "pass",
                (Some(_), false) => "FAIL",
            };
            println!(
                "{status:4}  garnet({},{},{},{}) seed {:>20}  {:<24} rel err {:.2e}",
                a.garnet.states, a.garnet.actions, a.garnet.branching, a.garnet.sigma, a.seed, c.name, c.relative_error
            );
        }
    }
    for f in &report.fixed_points {
        println!("{}  td fixed point residual {:.2e}", if f.passed { "pass" } else { "FAIL" }, f.residual);
    }
    for j in &report.jacobians {
        println!(
            "{}  {} jacobian, {} points, max error {:.2e}",
            if j.passed { "pass" } else { "FAIL" },
            j.family,
            j.points,
            j.max_error
        );
    }
    println!(
        "{}  step schedule",
        if report.schedule.passed { "pass" } else { "FAIL" }
    );
    if report.passed {
        println!("validation passed");
        ExitCode::SUCCESS
    } else {
        for f in report.failures() {
            eprintln!("failed: {f}");
        }
        ExitCode::from(EXIT_AUDIT)
    }
}

fn run(cli: Cli) -> abac::Result<ExitCode> {
    match cli.command {
        Command::Run(o) => {
            let cfg = o.resolve()?;
            match run_experiment(&cfg)? {
                RunOutcome::Validation(report) => Ok(print_validation(&report)),
                RunOutcome::Experiment(manifest) => {
                    for s in &manifest.series {
                        println!(
                            "{:<20} {} repeats, {} failed{}",
                            s.name,
                            s.repeats.len(),
                            s.failed,
                            if s.aggregate_valid { "" } else { " (aggregate invalid)" }
                        );
                    }
                    println!("wrote {}", cfg.output.display());
                    Ok(if manifest.quorum_ok {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_QUORUM)
                    })
                }
            }
        }
        Command::Validate {
            overrides,
            instances,
            inject_fault,
            wrong_phase,
        } => {
            let mut cfg = overrides.resolve()?;
            cfg.kind = ExperimentKind::Validate;
            if let Some(n) = instances {
                cfg.validation.instances = n;
            }
            cfg.validation.fault = inject_fault.or(cfg.validation.fault);
            cfg.validation.wrong_phase |= wrong_phase;
            cfg.validate()?;
            let report = run_validation(&cfg.validation)?;
            if overrides.output.is_some() {
                let json = serde_json::to_string_pretty(&report).map_err(|e| abac::Error::Parse(e.to_string()))?;
                std::fs::create_dir_all(&cfg.output)?;
                std::fs::write(cfg.output.join("validation.json"), json + "\n")?;
            }
            Ok(print_validation(&report))
        }
        Command::ScheduleCheck(o) => {
            let cfg = o.resolve()?;
            let report = validate_schedule(&cfg.schedule);
            for c in &report.checks {
                println!("{}  {:<48} {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
            }
            for r in &report.ratios {
                println!("ratio alpha{}/alpha{} at n = {:>8}: {:.4}", r.pair.0, r.pair.1, r.n, r.ratio);
            }
            for w in &report.warnings {
                println!("warning: {w}");
            }
            Ok(if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_AUDIT)
            })
        }
        Command::ShowConfig(o) => {
            let cfg = o.resolve()?;
            cfg.validate()?;
            print!("{}", cfg.to_toml()?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
