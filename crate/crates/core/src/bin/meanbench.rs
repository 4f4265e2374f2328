use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use robust_mean::harness::{emit_report, run_experiment, ExperimentConfig, HarnessError, Summary};
use robust_mean::sphere_cover::build_cover;

/// Monte Carlo benchmark for heavy-tailed mean estimators.
///
/// Settings come from built-in defaults, then the config file, then flags.
#[derive(Parser, Debug)]
#[command(name = "meanbench", version)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// gaussian | student_t:NU | pareto:ALPHA | lognormal:SIGMA | contaminated:RATE:SCALE
    #[arg(long)]
    dist: Option<String>,
    /// identity | diag:a,b,.. | full:row-major entries
    #[arg(long)]
    cov: Option<String>,
    /// Comma-separated true mean, or `zero`.
    #[arg(long)]
    mean: Option<String>,
    /// sample_mean | mom_coordinatewise | minsker | spherical | hybrid
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// oracle | estimated (spherical estimator only)
    #[arg(long)]
    lambda: Option<String>,
    /// Output path; stdout when absent or `-`.
    #[arg(long)]
    out: Option<String>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
    /// Record per-trial wall time (breaks byte-stable output).
    #[arg(long)]
    timing: bool,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
    /// Write a cover of the unit sphere in dimension `--d` with this radius and exit.
    #[arg(long, value_name = "GAMMA")]
    cover_gamma: Option<f64>,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
                path: path.clone(),
                source,
            })?;
            let mut c = ExperimentConfig::default();
            c.apply_text(&text)?;
            c
        }
        None => ExperimentConfig::default(),
    };
    let overrides = [
        ("dist", &cli.dist),
        ("cov", &cli.cov),
        ("mean", &cli.mean),
        ("estimator", &cli.estimator),
        ("n", &cli.n),
        ("d", &cli.d),
        ("delta", &cli.delta),
        ("trials", &cli.trials),
        ("seed", &cli.seed),
        ("lambda", &cli.lambda),
        ("out", &cli.out),
        ("format", &cli.format),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            config.set(key, v)?;
        }
    }
    if cli.timing {
        config.timing = true;
    }
    config.validate()?;
    Ok(config)
}

fn print_summary(s: &Summary) {
    eprintln!(
        "trials={} failed={} infeasible={} q50={:.6} q90={:.6} q(1-delta)={:.6} theorem_ratio={:.4} regime={}",
        s.trials,
        s.failed,
        s.infeasible,
        s.q50,
        s.q90,
        s.q_one_minus_delta,
        s.theorem_ratio,
        if s.nominal_regime { "nominal" } else { "desk" }
    );
    for b in &s.bounds {
        eprintln!(
            "  {:<6} radius={:.6} exceed_rate={:.4} constant={:.4}",
            b.name, b.radius, b.exceed_rate, b.empirical_constant
        );
    }
}

fn write_out(path: Option<&std::path::Path>, body: &str) -> Result<(), HarnessError> {
    match path {
        Some(p) => std::fs::write(p, body).map_err(|source| HarnessError::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let config = resolve(&cli)?;
    if cli.print_config {
        return write_out(None, &config.to_text());
    }
    if let Some(gamma) = cli.cover_gamma {
        let cover = build_cover(config.d, gamma, config.seed)?;
        return write_out(config.out.as_deref(), &cover.to_text());
    }
    let (records, summary) = run_experiment(&config)?;
    emit_report(&records, &summary, config.format, config.out.as_deref())?;
    print_summary(&summary);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("meanbench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
