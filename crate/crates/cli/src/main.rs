use boost_dhp_cli::config::RunConfig;
use boost_dhp_cli::{run_command, CliError, Verb};
use clap::{Parser, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Simulate,
    Pretrain,
    Train,
    Evaluate,
    Compare,
    Validate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Controller {
    Pi,
    Dhp,
    OpenLoop,
}

/// Boost converter DHP controller pipeline.
#[derive(Debug, Parser)]
#[command(name = "boost-dhp", version)]
struct Args {
    command: Command,
    /// Key-value config file (`dotted.key = value`).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// startup, load_step, input_step or all.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_enum)]
    controller: Option<Controller>,
    /// Use finite differences of the simulator instead of the learned model's Jacobians.
    #[arg(long)]
    analytic_model: bool,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn resolve(args: &Args) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    for o in &args.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{o}`")))?;
        cfg.set(k.trim(), v.trim(), "--set")?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(s) = &args.scenario {
        cfg.set("run.scenario", s, "--scenario")?;
    }
    if let Some(c) = args.controller {
        let name = match c {
            Controller::Pi => "pi",
            Controller::Dhp => "dhp",
            Controller::OpenLoop => "open-loop",
        };
        cfg.set("run.controller", name, "--controller")?;
    }
    if args.analytic_model {
        cfg.set("dhp.jacobians", "analytic", "--analytic-model")?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let verb = match args.command {
        Command::Simulate => Verb::Simulate,
        Command::Pretrain => Verb::Pretrain,
        Command::Train => Verb::Train,
        Command::Evaluate => Verb::Evaluate,
        Command::Compare => Verb::Compare,
        Command::Validate => Verb::Validate,
    };
    let result = resolve(&args).and_then(|cfg| run_command(verb, &cfg, &mut |a| println!("{a}")));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
