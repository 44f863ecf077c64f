use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ising_memory::curve::{CurveMeta, FidelityCurve};
use ising_memory::fidelity::SampleGrid;
use ising_memory::models::binomial_fidelity_with_policy;
use ising_memory::oracle::exact_fidelity;
use ising_memory::sweep::{run_sweep, scaling_report, simulate_config, SweepResult, SweepSpec};
use ising_memory::{
    exponential_fidelity, fit_exponential_model, fit_gaussian_model, gaussian_fidelity, Bit,
    Couplings, Dimension, Error, Geometry, ModelParams, ReadoutPolicy, Temperature,
};

const EXIT_VALIDATION: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ising-memory",
    version,
    about = "Ising-lattice memory fidelity: simulate, fit, sweep"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write its fidelity curve.
    Simulate {
        #[command(flatten)]
        config: ConfigFlags,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a curve file and print the fit report.
    Fit {
        curve: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelChoice::Gaussian)]
        model: ModelChoice,
        /// Lattice size used for initialization; defaults to the curve's N.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep over (N, kT) and write curves, fits and summary.tsv.
    Sweep {
        #[command(flatten)]
        config: ConfigFlags,
    },
    /// Exact fidelity curve from the master equation (N <= 16).
    Oracle {
        #[arg(long, default_value_t = 1)]
        dimension: usize,
        /// Side length (chain length in 1D).
        #[arg(long)]
        side: usize,
        #[arg(long = "kT")]
        kt: f64,
        #[arg(long = "J", default_value_t = 1.0)]
        j: f64,
        #[arg(long, default_value_t = 0.0)]
        h: f64,
        #[arg(long = "t-max")]
        t_max: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long, default_value = "random-choice")]
        policy: ReadoutPolicy,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate a closed-form fidelity law in the curve format.
    Analytic {
        #[arg(long, value_enum)]
        model: AnalyticModel,
        /// Spin count of the binomial law.
        #[arg(long, default_value_t = 100)]
        n: u64,
        #[arg(long = "n-eff", default_value_t = 100.0)]
        n_eff: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long = "t-max")]
        t_max: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long, default_value = "declare-failure")]
        policy: ReadoutPolicy,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scaling tables from a finished sweep directory.
    Report {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelChoice {
    Gaussian,
    Exponential,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalyticModel {
    Binomial,
    Gaussian,
    Exponential,
}

/// Flags mirroring the sweep config keys; they override `--config`.
#[derive(Args)]
struct ConfigFlags {
    /// key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dimension: Option<String>,
    /// Lattice sizes, comma separated.
    #[arg(long = "N")]
    sizes: Option<String>,
    /// Temperatures, comma separated.
    #[arg(long = "kT")]
    temperatures: Option<String>,
    #[arg(long = "M")]
    ensemble_size: Option<String>,
    /// auto, linear, geometric or explicit.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long = "t-min")]
    t_min: Option<String>,
    #[arg(long = "t-max")]
    t_max: Option<String>,
    #[arg(long)]
    points: Option<String>,
    #[arg(long)]
    times: Option<String>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    outdir: Option<String>,
    #[arg(long = "J")]
    j: Option<String>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long = "step-budget")]
    step_budget: Option<String>,
    #[arg(long = "pilot-size")]
    pilot_size: Option<String>,
    #[arg(long)]
    exponential: bool,
    #[arg(long = "scaling-threshold")]
    scaling_threshold: Option<String>,
    #[arg(long)]
    force: bool,
    /// Any other config key, as KEY=VALUE.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigFlags {
    fn spec(&self) -> Result<SweepSpec, Error> {
        let mut spec = match &self.config {
            Some(p) => SweepSpec::read(p)?,
            None => SweepSpec::new(Dimension::One, Vec::new(), Vec::new()),
        };
        let pairs = [
            ("dimension", &self.dimension),
            ("sizes", &self.sizes),
            ("temperatures", &self.temperatures),
            ("ensemble_size", &self.ensemble_size),
            ("grid", &self.grid),
            ("t_min", &self.t_min),
            ("t_max", &self.t_max),
            ("points", &self.points),
            ("times", &self.times),
            ("policy", &self.policy),
            ("seed", &self.seed),
            ("outdir", &self.outdir),
            ("J", &self.j),
            ("h", &self.h),
            ("step_budget", &self.step_budget),
            ("pilot_size", &self.pilot_size),
            ("scaling_threshold", &self.scaling_threshold),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                spec.set(k, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("--set expects KEY=VALUE, got `{kv}`"))
            })?;
            spec.set(k.trim(), v.trim())?;
        }
        if self.exponential {
            spec.exponential = true;
        }
        if self.force {
            spec.force = true;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Error::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            })
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

fn linear_times(t_max: f64, points: usize) -> Result<Vec<f64>, Error> {
    SampleGrid::Linear { t_max, points }.times()
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Simulate { config, out } => {
            let spec = config.spec()?;
            let curve = simulate_config(&spec, spec.sizes[0], spec.temperatures[0])?;
            emit(out.as_deref(), &curve.to_text())?;
        }
        Command::Fit {
            curve,
            model,
            n,
            out,
        } => {
            let c = FidelityCurve::read(&curve)?;
            let n = n.unwrap_or(c.meta.n);
            let mut text = String::new();
            if matches!(model, ModelChoice::Gaussian | ModelChoice::Both) {
                text.push_str(&fit_gaussian_model(&c, n)?.to_report(Some(&c.meta)));
            }
            if matches!(model, ModelChoice::Both) {
                text.push('\n');
            }
            if matches!(model, ModelChoice::Exponential | ModelChoice::Both) {
                text.push_str(&fit_exponential_model(&c)?.to_report(Some(&c.meta)));
            }
            emit(out.as_deref(), &text)?;
        }
        Command::Sweep { config } => {
            let spec = config.spec()?;
            let result = run_sweep(&spec)?;
            let failed: Vec<_> = result.failures().collect();
            for f in &failed {
                if let Err(reason) = &f.fit {
                    eprintln!("N={} kT={}: fit failed: {reason}", f.n, f.kt);
                }
            }
            eprintln!(
                "{} configurations, {} failed; summary in {}",
                result.configs.len(),
                failed.len(),
                spec.outdir.display()
            );
            if !failed.is_empty() {
                return Ok(EXIT_PARTIAL);
            }
        }
        Command::Oracle {
            dimension,
            side,
            kt,
            j,
            h,
            t_max,
            points,
            policy,
            out,
        } => {
            let geometry = Arc::new(Geometry::new(Dimension::from_usize(dimension)?, side)?);
            let curve = exact_fidelity(
                geometry,
                Couplings::new(j, h),
                Temperature::new(kt)?,
                &linear_times(t_max, points)?,
                policy,
                Bit::One,
            )?;
            emit(out.as_deref(), &curve.to_text())?;
        }
        Command::Analytic {
            model,
            n,
            n_eff,
            lambda,
            t_max,
            points,
            policy,
            out,
        } => {
            let params = ModelParams::new(n_eff, lambda)?;
            let times = linear_times(t_max, points)?;
            let f: Vec<f64> = times
                .iter()
                .map(|&t| match model {
                    AnalyticModel::Binomial => binomial_fidelity_with_policy(n, lambda, t, policy),
                    AnalyticModel::Gaussian => gaussian_fidelity(params, t),
                    AnalyticModel::Exponential => exponential_fidelity(lambda, t),
                })
                .collect();
            let mut extra = std::collections::BTreeMap::new();
            let name = match model {
                AnalyticModel::Binomial => "binomial",
                AnalyticModel::Gaussian => "gaussian",
                AnalyticModel::Exponential => "exponential",
            };
            extra.insert("model".to_string(), name.to_string());
            extra.insert("lambda".to_string(), format!("{lambda}"));
            extra.insert("n_eff".to_string(), format!("{n_eff}"));
            let curve = FidelityCurve {
                meta: CurveMeta {
                    dimension: Dimension::One,
                    side: n as usize,
                    n: n as usize,
                    kt: f64::INFINITY,
                    couplings: Couplings::non_interacting(),
                    policy,
                    seed: 0,
                    exact: true,
                    truncated: false,
                    extra,
                },
                ensemble_size: 0,
                sigma: vec![0.0; times.len()],
                fidelity: f,
                times,
            };
            emit(out.as_deref(), &curve.to_text())?;
        }
        Command::Report { dir, out } => {
            let result = SweepResult::load(&dir)?;
            emit(out.as_deref(), &scaling_report(&result)?.to_text())?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
