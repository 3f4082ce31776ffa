//! Command-line front end for the trailforge pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trailforge::pipeline::{run, PipelineConfig};
use trailforge::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "trailforge", version, about = "Motion trails from stabilized time-lapse frame sequences")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the enabled stages, reusing cached outputs that are still valid.
    Run {
        #[command(flatten)]
        settings: Settings,
    },
    /// Check a configuration without touching any frames.
    Validate {
        #[command(flatten)]
        settings: Settings,
    },
}

#[derive(clap::Args, Debug)]
struct Settings {
    /// Flat `section.key = value` config file.
    #[arg(long)]
    config: PathBuf,

    /// Override a config entry; may be repeated. Applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Comma-separated stages to enable.
    #[arg(long, value_name = "a,b,c")]
    stages: Option<String>,

    /// Worker threads, or `auto`.
    #[arg(long, value_name = "N")]
    threads: Option<String>,

    /// Encoder command run after rendering.
    #[arg(long, value_name = "CMD")]
    encode: Option<String>,

    /// Write ghost overlay images next to the flagged objects.
    #[arg(long)]
    ghost_overlay: bool,
}

impl Settings {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        for o in &self.overrides {
            cfg.set_override(o)?;
        }
        if let Some(s) = &self.stages {
            cfg.set("stages", s, None)?;
        }
        if let Some(t) = &self.threads {
            cfg.set("threads", t, None)?;
        }
        if let Some(e) = &self.encode {
            cfg.encode = Some(e.clone());
        }
        if self.ghost_overlay {
            cfg.ghost_overlay = true;
        }
        let problems = cfg.validate();
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        Ok(cfg)
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Validate { settings } => {
            let cfg = settings.resolve()?;
            let stages: Vec<&str> = cfg.stages.iter().map(|s| s.name()).collect();
            println!("ok: stages {} from {}", stages.join(","), cfg.input_dir.display());
        }
        Command::Run { settings } => {
            let cfg = settings.resolve()?;
            let report = run(&cfg)?;
            for s in &report.stages {
                let state = if s.cached { "cached" } else { "ran" };
                println!("{:<10} {:<6} {:>4} frames {:>8.2} s", s.stage.name(), state, s.frames, s.seconds);
            }
            println!(
                "{} frames {}x{} in {:.2} s; summary in {}",
                report.frames,
                report.width,
                report.height,
                report.seconds,
                cfg.work_dir.join("run.json").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
