use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptml::config::ConfigError;
use adaptml::output;
use adaptml::scenario::{preset_names, Scenario, ScenarioError};
use adaptml::{run_config, ExperimentConfig, Overrides, RunError};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "adaptml", version, about = "Simulate adaptive update laws and online optimizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config; writes <out>/<name>.csv and <name>.toml.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run a scenario preset (or a manifest path) and evaluate its checks.
    Scenario {
        name: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Check a config without running it.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Print the bundled scenario presets.
    ListScenarios,
}

#[derive(Args)]
struct RunOpts {
    /// Output directory.
    #[arg(long, env = "ADAPTML_OUT", default_value = "out")]
    out: PathBuf,
    /// Integrator step for continuous laws.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Log every K-th step.
    #[arg(long, value_name = "K")]
    decimate: Option<usize>,
}

impl RunOpts {
    fn overrides(&self) -> Overrides {
        Overrides { dt: self.dt, seed: self.seed, decimate: self.decimate }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, opts } => run(&config, &opts),
        Command::Scenario { name, opts } => scenario(&name, &opts),
        Command::Validate { config, opts } => validate(&config, &opts),
        Command::ListScenarios => {
            for name in preset_names() {
                let s = Scenario::preset(name).expect("bundled presets parse");
                println!("{name:<32} {}", s.spec.description);
            }
            ExitCode::SUCCESS
        }
    }
}

fn load(path: &Path, opts: &RunOpts) -> Result<ExperimentConfig, ExitCode> {
    let mut cfg = ExperimentConfig::load(path).map_err(config_failure)?;
    opts.overrides().apply(&mut cfg);
    Ok(cfg)
}

fn config_failure(e: ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn validate(path: &Path, opts: &RunOpts) -> ExitCode {
    let cfg = match load(path, opts) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match cfg.build() {
        Ok(_) => {
            println!("{}: ok ({:?}, horizon {})", path.display(), cfg.mode(), cfg.horizon);
            ExitCode::SUCCESS
        }
        Err(e) => config_failure(e),
    }
}

fn run(path: &Path, opts: &RunOpts) -> ExitCode {
    let cfg = match load(path, opts) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let result = match run_config(&cfg) {
        Ok(r) => r,
        Err(RunError::Config(e)) => return config_failure(e),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILED);
        }
    };
    let name = cfg.display_name();
    let csv = output::csv_path(&opts.out, &name);
    let summary = opts.out.join(format!("{}.toml", output::slug(&name)));
    if let Err(e) = output::write_csv_file(&csv, &result.outcome.trajectory)
        .and_then(|_| output::write_toml_file(&summary, &result.report))
    {
        eprintln!("error: cannot write output: {e}");
        return ExitCode::from(EXIT_FAILED);
    }
    let rep = &result.report;
    println!("{name}: {} after {} steps, ‖θ̃‖ = {:e}", rep.status, rep.steps, rep.final_theta_err_norm);
    for note in &rep.notes {
        println!("  note: {note}");
    }
    println!("wrote {} and {}", csv.display(), summary.display());
    if rep.diverged() {
        ExitCode::from(EXIT_DIVERGED)
    } else {
        ExitCode::SUCCESS
    }
}

fn scenario(name: &str, opts: &RunOpts) -> ExitCode {
    let loaded = if name.ends_with(".toml") && Path::new(name).is_file() {
        Scenario::load(Path::new(name))
    } else {
        Scenario::preset(name)
    };
    let sc = match loaded {
        Ok(s) => s,
        Err(e @ ScenarioError::Unknown { .. }) => Cli::command().error(ErrorKind::InvalidValue, e).exit(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let outcome = match sc.run(&opts.overrides()) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    println!("scenario {}", outcome.name);
    for c in &outcome.checks {
        let tag = match (c.passed, c.warn_only) {
            (true, _) => "PASS",
            (false, true) => "WARN",
            (false, false) => "FAIL",
        };
        println!("  [{tag}] {} ({}): {}", c.kind, c.experiment, c.detail);
    }
    for id in outcome.unexpected_divergence() {
        println!("  [DIVERGED] {id}");
    }
    let dir = opts.out.join(output::slug(&outcome.name));
    match outcome.write_artifacts(&dir) {
        Ok(_) => println!("artifacts in {}", dir.display()),
        Err(e) => {
            eprintln!("error: cannot write artifacts: {e}");
            return ExitCode::from(EXIT_FAILED);
        }
    }
    let failed: Vec<_> = outcome.checks.iter().filter(|c| !c.passed && !c.warn_only).map(|c| c.kind.as_str()).collect();
    if !failed.is_empty() {
        eprintln!("failed: {}", failed.join(", "));
    }
    ExitCode::from(outcome.exit_code() as u8)
}
