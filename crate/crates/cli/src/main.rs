//! `urbandp`: runs one experiment and writes its CSV table.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 for I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use urbandp_core::experiments::{
    parse_config_text, run_and_write, trace_rotations, ExperimentConfig, ExperimentError, ExperimentKind,
};
use urbandp_core::runtime::write_rotation_trace;

#[derive(Debug, Parser)]
#[command(name = "urbandp", version, about = "Privacy-preserving urban sensing experiments")]
struct Cli {
    /// sniff | count-accuracy | subway-od | selfid-utility | rotation-props
    #[arg(long)]
    experiment: Option<String>,

    #[arg(long)]
    seed: Option<u64>,

    /// Monte Carlo trials (experiment-specific default).
    #[arg(long)]
    trials: Option<u32>,

    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Flat key=value file. `experiment`, `seed`, `trials` and `out` keys
    /// set the matching flag; everything else is an experiment parameter.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Parameter override, repeatable. Applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Also write the rotation events of one slot to this CSV.
    #[arg(long, value_name = "PATH")]
    trace_rotations: Option<PathBuf>,

    /// Slot traced by --trace-rotations: MIN_EC,MAX_EC,FRAMES.
    #[arg(long, value_name = "MIN,MAX,FRAMES", default_value = "2,10,30")]
    trace_config: String,
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, ExperimentError> {
    let mut file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
            parse_config_text(&text)?
        }
        None => Default::default(),
    };
    let file_experiment = file.remove("experiment");
    let file_seed = file.remove("seed");
    let file_trials = file.remove("trials");
    let file_out = file.remove("out");

    let name = cli
        .experiment
        .clone()
        .or(file_experiment)
        .ok_or_else(|| config_err("no experiment given (use --experiment)"))?;
    let kind: ExperimentKind = name.parse()?;
    let mut cfg = ExperimentConfig::new(kind);
    cfg.params = file;
    if let Some(s) = file_seed {
        cfg.seed = s.parse().map_err(|e| config_err(format!("seed={s:?}: {e}")))?;
    }
    if let Some(t) = file_trials {
        cfg.trials = t.parse().map_err(|e| config_err(format!("trials={t:?}: {e}")))?;
    }
    cfg.out = file_out.map(PathBuf::from);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    for pair in &cli.set {
        cfg.params.set_pair(pair)?;
    }
    Ok(cfg)
}

fn write_trace(path: &PathBuf, spec: &str) -> Result<(), ExperimentError> {
    let nums: Vec<u64> = spec
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|e| config_err(format!("--trace-config {spec:?}: {e}")))?;
    let [min_ec, max_ec, frames] = nums[..] else {
        return Err(config_err(format!("--trace-config needs MIN,MAX,FRAMES, got {spec:?}")));
    };
    let events = trace_rotations(min_ec, max_ec, frames).map_err(|e| config_err(e.to_string()))?;
    let f = std::fs::File::create(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
    write_rotation_trace(&events, std::io::BufWriter::new(f)).map_err(|e| ExperimentError::Io(e.to_string()))
}

fn run(cli: &Cli) -> Result<(), ExperimentError> {
    let cfg = build_config(cli)?;
    run_and_write(&cfg)?;
    if let Some(path) = &cli.trace_rotations {
        write_trace(path, &cli.trace_config)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("urbandp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
