//! Parameter sweeps over `(N, kT)` grids and the scaling tables built from
//! them.
//!
//! A sweep writes one directory per configuration,
//!
//! ```text
//! <outdir>/sweep.cfg
//! <outdir>/2D_N100_kT2.5/curve.dat
//! <outdir>/2D_N100_kT2.5/fit.txt
//! <outdir>/summary.tsv
//! ```
//!
//! and is a pure function of its spec. Configurations whose `curve.dat` and
//! `fit.txt` already exist are read back instead of recomputed unless
//! `force` is set.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::curve::FidelityCurve;
use crate::dynamics::{stream_seed, Temperature, TrajectoryConfig, DEFAULT_STEP_BUDGET};
use crate::error::{Error, Result};
use crate::fidelity::{estimate_fidelity, find_decay_horizon, HorizonSearch, SampleGrid};
use crate::fitting::{
    classify_lambda_scaling, fit_exponential_model, fit_gaussian_model, fit_linear,
    fit_through_origin, LinearFit, ModelFit, ScalingClassification, DEFAULT_SCALING_THRESHOLD,
    Z_90,
};
use crate::lattice::{Couplings, Dimension, Geometry, ReadoutPolicy};

pub const SPEC_FILE: &str = "sweep.cfg";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const CURVE_FILE: &str = "curve.dat";
pub const FIT_FILE: &str = "fit.txt";
pub const EXPONENTIAL_FIT_FILE: &str = "fit_exponential.txt";

/// How sample times are chosen for each configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum TimeGrid {
    /// Pilot run to find the decay horizon, then `points` linear samples.
    Auto {
        points: usize,
    },
    Fixed(SampleGrid),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub dimension: Dimension,
    pub sizes: Vec<usize>,
    pub temperatures: Vec<f64>,
    pub ensemble_size: u64,
    pub grid: TimeGrid,
    pub policy: ReadoutPolicy,
    pub master_seed: u64,
    pub outdir: PathBuf,
    pub couplings: Couplings,
    pub step_budget: u64,
    pub pilot_size: u64,
    /// Also fit the single-spin exponential law.
    pub exponential: bool,
    pub scaling_threshold: f64,
    /// Recompute configurations that already have outputs.
    pub force: bool,
}

impl SweepSpec {
    pub fn new(dimension: Dimension, sizes: Vec<usize>, temperatures: Vec<f64>) -> Self {
        Self {
            dimension,
            sizes,
            temperatures,
            ensemble_size: 1000,
            grid: TimeGrid::Auto { points: 400 },
            policy: ReadoutPolicy::RandomChoice,
            master_seed: 1,
            outdir: PathBuf::from("sweep-out"),
            couplings: Couplings::default(),
            step_budget: DEFAULT_STEP_BUDGET,
            pilot_size: 1000,
            exponential: false,
            scaling_threshold: DEFAULT_SCALING_THRESHOLD,
            force: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::InvalidArgument("sweep has no lattice sizes".into()));
        }
        if self.temperatures.is_empty() {
            return Err(Error::InvalidArgument("sweep has no temperatures".into()));
        }
        for &n in &self.sizes {
            Geometry::with_sites(self.dimension, n)?;
        }
        for &kt in &self.temperatures {
            Temperature::new(kt)?;
        }
        if self.ensemble_size == 0 {
            return Err(Error::InvalidArgument(
                "ensemble size M must be at least 1".into(),
            ));
        }
        if self.pilot_size == 0 {
            return Err(Error::InvalidArgument(
                "pilot size must be at least 1".into(),
            ));
        }
        match &self.grid {
            TimeGrid::Auto { points } if *points < 3 => {
                return Err(Error::InvalidArgument(
                    "auto grid needs at least 3 points".into(),
                ))
            }
            TimeGrid::Auto { .. } => {}
            TimeGrid::Fixed(g) => {
                g.times()?;
            }
        }
        Ok(())
    }

    /// Seed of one configuration; independent of the order of the lists.
    pub fn config_seed(&self, n: usize, kt: f64) -> u64 {
        let key = stream_seed(self.dimension.as_usize() as u64, n as u64);
        stream_seed(self.master_seed ^ key, kt.to_bits())
    }

    pub fn configs(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for &n in &self.sizes {
            for &kt in &self.temperatures {
                out.push((n, kt));
            }
        }
        out
    }

    pub fn config_dir(&self, n: usize, kt: f64) -> PathBuf {
        self.outdir.join(config_dir_name(self.dimension, n, kt))
    }

    /// `key = value` form read by [`SweepSpec::parse`]. `outdir` and
    /// `force` are run options and are not written.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let list = |v: Vec<String>| v.join(", ");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("dimension", self.dimension.to_string());
        kv(
            "sizes",
            list(self.sizes.iter().map(|n| n.to_string()).collect()),
        );
        kv(
            "temperatures",
            list(self.temperatures.iter().map(|t| format!("{t}")).collect()),
        );
        kv("ensemble_size", self.ensemble_size.to_string());
        match &self.grid {
            TimeGrid::Auto { points } => {
                kv("grid", "auto".into());
                kv("points", points.to_string());
            }
            TimeGrid::Fixed(SampleGrid::Linear { t_max, points }) => {
                kv("grid", "linear".into());
                kv("t_max", format!("{t_max}"));
                kv("points", points.to_string());
            }
            TimeGrid::Fixed(SampleGrid::Geometric {
                t_min,
                t_max,
                points,
            }) => {
                kv("grid", "geometric".into());
                kv("t_min", format!("{t_min}"));
                kv("t_max", format!("{t_max}"));
                kv("points", points.to_string());
            }
            TimeGrid::Fixed(SampleGrid::Explicit(times)) => {
                kv("grid", "explicit".into());
                kv(
                    "times",
                    list(times.iter().map(|t| format!("{t}")).collect()),
                );
            }
        }
        kv("policy", self.policy.to_string());
        kv("seed", self.master_seed.to_string());
        kv("J", format!("{}", self.couplings.j));
        kv("h", format!("{}", self.couplings.h));
        kv("step_budget", self.step_budget.to_string());
        kv("pilot_size", self.pilot_size.to_string());
        kv("exponential", self.exponential.to_string());
        kv("scaling_threshold", format!("{}", self.scaling_threshold));
        out
    }

    /// Parses a `key = value` config. Blank lines and `#` comments are
    /// ignored; lists are comma separated. Unknown keys are rejected.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, idx + 1, "expected `key = value`"))?;
            map.insert(k.trim().to_string(), (idx + 1, v.trim().to_string()));
        }
        let mut spec = Self::new(Dimension::One, Vec::new(), Vec::new());
        spec.apply(&map, origin)?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Overrides fields from `key -> value` pairs (config file or flags).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut map = BTreeMap::new();
        map.insert(key.to_string(), (0, value.to_string()));
        self.apply(&map, Path::new("<flags>"))
    }

    fn apply(&mut self, map: &BTreeMap<String, (usize, String)>, origin: &Path) -> Result<()> {
        fn parse_one<T: std::str::FromStr>(
            origin: &Path,
            line: usize,
            k: &str,
            v: &str,
        ) -> Result<T> {
            v.parse()
                .map_err(|_| Error::parse(origin, line, format!("invalid value `{v}` for `{k}`")))
        }
        fn parse_list<T: std::str::FromStr>(
            origin: &Path,
            line: usize,
            k: &str,
            v: &str,
        ) -> Result<Vec<T>> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_one(origin, line, k, s))
                .collect()
        }

        let (mut t_min, mut t_max, mut points, mut times, mut grid) =
            (None, None, None, None, None);
        for (k, (line, v)) in map {
            let (line, v) = (*line, v.as_str());
            match k.as_str() {
                "dimension" => {
                    let d: usize = parse_one(origin, line, k, v.trim_end_matches(['D', 'd']))?;
                    self.dimension = Dimension::from_usize(d)
                        .map_err(|_| Error::parse(origin, line, "dimension must be 1 or 2"))?;
                }
                "sizes" | "N" => self.sizes = parse_list(origin, line, k, v)?,
                "temperatures" | "kT" => self.temperatures = parse_list(origin, line, k, v)?,
                "ensemble_size" | "M" => self.ensemble_size = parse_one(origin, line, k, v)?,
                "policy" => self.policy = parse_one(origin, line, k, v)?,
                "seed" | "master_seed" => self.master_seed = parse_one(origin, line, k, v)?,
                "outdir" => self.outdir = PathBuf::from(v),
                "J" => self.couplings.j = parse_one(origin, line, k, v)?,
                "h" => self.couplings.h = parse_one(origin, line, k, v)?,
                "step_budget" => self.step_budget = parse_one(origin, line, k, v)?,
                "pilot_size" => self.pilot_size = parse_one(origin, line, k, v)?,
                "exponential" => self.exponential = parse_one(origin, line, k, v)?,
                "scaling_threshold" => self.scaling_threshold = parse_one(origin, line, k, v)?,
                "force" => self.force = parse_one(origin, line, k, v)?,
                "grid" => grid = Some((line, v.to_string())),
                "t_min" => t_min = Some(parse_one::<f64>(origin, line, k, v)?),
                "t_max" => t_max = Some(parse_one::<f64>(origin, line, k, v)?),
                "points" => points = Some(parse_one::<usize>(origin, line, k, v)?),
                "times" => times = Some(parse_list::<f64>(origin, line, k, v)?),
                _ => return Err(Error::parse(origin, line, format!("unknown key `{k}`"))),
            }
        }

        // Grid keys may arrive one at a time as flag overrides, so start
        // from the current grid and patch it.
        let (mut kind, mut cur_min, mut cur_max, mut cur_points, mut cur_times) = match &self.grid {
            TimeGrid::Auto { points } => ("auto", 0.01, 100.0, *points, Vec::new()),
            TimeGrid::Fixed(SampleGrid::Linear { t_max, points }) => {
                ("linear", 0.01, *t_max, *points, Vec::new())
            }
            TimeGrid::Fixed(SampleGrid::Geometric {
                t_min,
                t_max,
                points,
            }) => ("geometric", *t_min, *t_max, *points, Vec::new()),
            TimeGrid::Fixed(SampleGrid::Explicit(t)) => ("explicit", 0.01, 100.0, 0, t.clone()),
        };
        if let Some((line, g)) = &grid {
            kind = match g.as_str() {
                "auto" => "auto",
                "linear" => "linear",
                "geometric" => "geometric",
                "explicit" => "explicit",
                other => {
                    return Err(Error::parse(
                        origin,
                        *line,
                        format!("unknown grid `{other}`"),
                    ))
                }
            };
        } else if times.is_some() {
            kind = "explicit";
        }
        cur_min = t_min.unwrap_or(cur_min);
        cur_max = t_max.unwrap_or(cur_max);
        cur_points = points.unwrap_or(cur_points);
        if let Some(t) = times {
            cur_times = t;
        }
        self.grid = match kind {
            "auto" => TimeGrid::Auto { points: cur_points },
            "linear" => TimeGrid::Fixed(SampleGrid::Linear {
                t_max: cur_max,
                points: cur_points,
            }),
            "geometric" => TimeGrid::Fixed(SampleGrid::Geometric {
                t_min: cur_min,
                t_max: cur_max,
                points: cur_points,
            }),
            _ => TimeGrid::Fixed(SampleGrid::Explicit(cur_times)),
        };
        Ok(())
    }
}

pub fn config_dir_name(dimension: Dimension, n: usize, kt: f64) -> String {
    format!("{}D_N{}_kT{}", dimension.as_usize(), n, kt)
}

/// Outcome of one `(N, kT)` configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigResult {
    pub dimension: Dimension,
    pub n: usize,
    pub kt: f64,
    pub ensemble_size: u64,
    pub curve_path: PathBuf,
    pub truncated: bool,
    /// The Gaussian fit, or the reason it failed.
    pub fit: std::result::Result<ModelFit, String>,
    pub exponential: Option<ModelFit>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub configs: Vec<ConfigResult>,
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = &ConfigResult> {
        self.configs.iter().filter(|c| c.fit.is_err())
    }

    /// Reads a finished sweep back from its output directory.
    pub fn load(outdir: &Path) -> Result<Self> {
        let mut spec = SweepSpec::read(&outdir.join(SPEC_FILE))?;
        spec.outdir = outdir.to_path_buf();
        let configs = spec
            .configs()
            .into_iter()
            .map(|(n, kt)| load_config(&spec, n, kt))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, configs })
    }

    /// Tab-separated table, one row per configuration.
    pub fn summary_tsv(&self) -> String {
        let mut out = String::from(
            "dim\tN\tkT\tM\tlambda\tlambda_ci\tn_eff\tn_eff_ci\tchi2\tdof\tconverged\n",
        );
        for c in &self.configs {
            let sci = |x: f64| format!("{x:.12e}");
            let (l, lc, ne, nc, chi2, dof, conv) = match &c.fit {
                Ok(f) => (
                    sci(f.params.lambda),
                    sci(f.lambda_ci.half_width()),
                    sci(f.params.n_eff),
                    sci(f.n_eff_ci.half_width()),
                    sci(f.chi2),
                    f.dof.to_string(),
                    f.converged.to_string(),
                ),
                Err(_) => {
                    let nan = || "nan".to_string();
                    (
                        nan(),
                        nan(),
                        nan(),
                        nan(),
                        nan(),
                        "0".into(),
                        "false".into(),
                    )
                }
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{l}\t{lc}\t{ne}\t{nc}\t{chi2}\t{dof}\t{conv}",
                c.dimension.as_usize(),
                c.n,
                sci(c.kt),
                c.ensemble_size,
            );
        }
        out
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn failure_report(reason: &str) -> String {
    format!("status=failed\nerror={}\n", reason.replace('\n', " "))
}

fn load_config(spec: &SweepSpec, n: usize, kt: f64) -> Result<ConfigResult> {
    let dir = spec.config_dir(n, kt);
    let curve_path = dir.join(CURVE_FILE);
    let curve = FidelityCurve::read(&curve_path)?;
    let fit_path = dir.join(FIT_FILE);
    let text = std::fs::read_to_string(&fit_path).map_err(|e| Error::io(&fit_path, e))?;
    let fit = if text.starts_with("status=failed") {
        Err(text
            .lines()
            .find_map(|l| l.strip_prefix("error="))
            .unwrap_or("unknown")
            .to_string())
    } else {
        Ok(ModelFit::parse_report(&text, &fit_path)?)
    };
    let exp_path = dir.join(EXPONENTIAL_FIT_FILE);
    let exponential = match std::fs::read_to_string(&exp_path) {
        Ok(t) if !t.starts_with("status=failed") => Some(ModelFit::parse_report(&t, &exp_path)?),
        _ => None,
    };
    Ok(ConfigResult {
        dimension: spec.dimension,
        n,
        kt,
        ensemble_size: curve.ensemble_size,
        curve_path,
        truncated: curve.meta.truncated,
        fit,
        exponential,
    })
}

/// Simulates one configuration and returns its curve.
pub fn simulate_config(spec: &SweepSpec, n: usize, kt: f64) -> Result<FidelityCurve> {
    let geometry = Arc::new(Geometry::with_sites(spec.dimension, n)?);
    let mut config = TrajectoryConfig::new(
        geometry,
        spec.couplings,
        Temperature::new(kt)?,
        spec.config_seed(n, kt),
        vec![0.0],
    )?;
    config.step_budget = spec.step_budget;
    let mut horizon_truncated = false;
    let times = match &spec.grid {
        TimeGrid::Fixed(g) => g.times()?,
        TimeGrid::Auto { points } => {
            let search = HorizonSearch {
                pilot_size: spec.pilot_size,
                ..HorizonSearch::default()
            };
            let h = find_decay_horizon(&config, &search)?;
            horizon_truncated = h.truncated;
            SampleGrid::Linear {
                t_max: h.t_max,
                points: *points,
            }
            .times()?
        }
    };
    config.sample_times = SampleGrid::distinct_steps(times, n);
    let mut curve = estimate_fidelity(&config, spec.ensemble_size, spec.policy)?;
    curve.meta.truncated |= horizon_truncated;
    Ok(curve)
}

fn run_config(spec: &SweepSpec, n: usize, kt: f64) -> Result<ConfigResult> {
    let dir = spec.config_dir(n, kt);
    if !spec.force && dir.join(CURVE_FILE).exists() && dir.join(FIT_FILE).exists() {
        return load_config(spec, n, kt);
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let curve = simulate_config(spec, n, kt)?;
    let curve_path = dir.join(CURVE_FILE);
    curve.write(&curve_path)?;

    let fit = fit_gaussian_model(&curve, n).map_err(|e| e.to_string());
    let report = match &fit {
        Ok(f) => f.to_report(Some(&curve.meta)),
        Err(e) => failure_report(e),
    };
    let exponential = if spec.exponential {
        let e = fit_exponential_model(&curve);
        let text = match &e {
            Ok(f) => f.to_report(Some(&curve.meta)),
            Err(err) => failure_report(&err.to_string()),
        };
        write_file(&dir.join(EXPONENTIAL_FIT_FILE), &text)?;
        e.ok()
    } else {
        None
    };
    // Written last: its presence marks the configuration as complete.
    write_file(&dir.join(FIT_FILE), &report)?;
    Ok(ConfigResult {
        dimension: spec.dimension,
        n,
        kt,
        ensemble_size: spec.ensemble_size,
        curve_path,
        truncated: curve.meta.truncated,
        fit,
        exponential,
    })
}

/// Runs every configuration of `spec`, persisting curves, fit reports and
/// `summary.tsv`. Fit failures are recorded per configuration; I/O and
/// simulation errors abort the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.outdir).map_err(|e| Error::io(&spec.outdir, e))?;
    let spec_path = spec.outdir.join(SPEC_FILE);
    write_file(&spec_path, &spec.to_text())?;

    let configs = spec
        .configs()
        .into_par_iter()
        .map(|(n, kt)| run_config(spec, n, kt))
        .collect::<Result<Vec<_>>>()?;
    let result = SweepResult {
        spec: spec.clone(),
        configs,
    };
    write_file(&spec.outdir.join(SUMMARY_FILE), &result.summary_tsv())?;
    Ok(result)
}

/// One parameter with its one-sigma error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

fn estimates(fit: &ModelFit) -> (Estimate, Estimate) {
    (
        Estimate {
            value: fit.params.lambda,
            sigma: fit.lambda_ci.half_width() / Z_90,
        },
        Estimate {
            value: fit.params.n_eff,
            sigma: fit.n_eff_ci.half_width() / Z_90,
        },
    )
}

/// Size dependence at one temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct TemperatureRow {
    pub kt: f64,
    /// `(N, λ, N_eff)` for every successful fit, by increasing `N`.
    pub points: Vec<(usize, Estimate, Estimate)>,
    /// `λ` against `N`; the 1D size-independence test.
    pub lambda_vs_n: Option<LinearFit>,
    /// `ln λ` classification; 2D with at least four sizes.
    pub classification: Option<ScalingClassification>,
    /// `N_eff = m N`.
    pub m_fit: Option<LinearFit>,
    /// `N_eff = a + b N`.
    pub n_eff_vs_n: Option<LinearFit>,
}

/// Temperature dependence at one size.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeRow {
    pub n: usize,
    /// `(kT, λ, N_eff)` by increasing `kT`.
    pub points: Vec<(f64, Estimate, Estimate)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingReport {
    pub dimension: Dimension,
    pub by_temperature: Vec<TemperatureRow>,
    pub by_size: Vec<SizeRow>,
}

/// Builds the size- and temperature-dependence tables of a sweep.
pub fn scaling_report(result: &SweepResult) -> Result<ScalingReport> {
    let ok: Vec<(&ConfigResult, &ModelFit)> = result
        .configs
        .iter()
        .filter_map(|c| c.fit.as_ref().ok().map(|f| (c, f)))
        .collect();
    let mut sizes: Vec<usize> = ok.iter().map(|(c, _)| c.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut temps: Vec<f64> = ok.iter().map(|(c, _)| c.kt).collect();
    temps.sort_by(f64::total_cmp);
    temps.dedup();
    if sizes.len() < 2 && temps.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: sizes.len().max(temps.len()),
        });
    }

    let mut by_temperature = Vec::new();
    for &kt in &temps {
        let mut points: Vec<(usize, Estimate, Estimate)> = ok
            .iter()
            .filter(|(c, _)| c.kt == kt)
            .map(|(c, f)| {
                let (l, ne) = estimates(f);
                (c.n, l, ne)
            })
            .collect();
        points.sort_by_key(|p| p.0);
        let ns: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
        let lam: Vec<f64> = points.iter().map(|p| p.1.value).collect();
        let lam_err: Vec<f64> = points.iter().map(|p| p.1.sigma).collect();
        let ne: Vec<f64> = points.iter().map(|p| p.2.value).collect();
        let ne_err: Vec<f64> = points.iter().map(|p| p.2.sigma).collect();
        let classification = if result.spec.dimension == Dimension::Two {
            classify_lambda_scaling(&ns, &lam, &lam_err, result.spec.scaling_threshold).ok()
        } else {
            None
        };
        by_temperature.push(TemperatureRow {
            kt,
            lambda_vs_n: fit_linear(&ns, &lam, &lam_err).ok(),
            classification,
            m_fit: fit_through_origin(&ns, &ne, &ne_err).ok(),
            n_eff_vs_n: fit_linear(&ns, &ne, &ne_err).ok(),
            points,
        });
    }

    let mut by_size = Vec::new();
    for &n in &sizes {
        let mut points: Vec<(f64, Estimate, Estimate)> = ok
            .iter()
            .filter(|(c, _)| c.n == n)
            .map(|(c, f)| {
                let (l, ne) = estimates(f);
                (c.kt, l, ne)
            })
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        by_size.push(SizeRow { n, points });
    }
    Ok(ScalingReport {
        dimension: result.spec.dimension,
        by_temperature,
        by_size,
    })
}

impl ScalingReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let sci = |x: f64| format!("{x:.6e}");
        let _ = writeln!(
            out,
            "# size dependence per temperature ({}D)",
            self.dimension.as_usize()
        );
        for row in &self.by_temperature {
            let _ = writeln!(out, "\n[kT = {}]", row.kt);
            let _ = writeln!(out, "N\tlambda\tlambda_sigma\tn_eff\tn_eff_sigma");
            for (n, l, ne) in &row.points {
                let _ = writeln!(
                    out,
                    "{n}\t{}\t{}\t{}\t{}",
                    sci(l.value),
                    sci(l.sigma),
                    sci(ne.value),
                    sci(ne.sigma)
                );
            }
            if let Some(f) = &row.lambda_vs_n {
                let _ = writeln!(
                    out,
                    "lambda_vs_N slope = {} ± {} (90%), consistent_with_zero = {}",
                    sci(f.slope),
                    sci(f.slope_ci90()),
                    f.slope_consistent_with_zero()
                );
            }
            if let Some(c) = &row.classification {
                let _ = writeln!(
                    out,
                    "lambda scaling = {} (chi2 exp = {}, chi2 power = {}, delta = {})",
                    c.verdict,
                    sci(c.exponential.chi2),
                    sci(c.power_law.chi2),
                    sci(c.delta_chi2)
                );
            }
            if let Some(f) = &row.m_fit {
                let _ = writeln!(
                    out,
                    "n_eff = m N: m = {} ± {} (90%)",
                    sci(f.slope),
                    sci(f.slope_ci90())
                );
            }
            if let Some(f) = &row.n_eff_vs_n {
                let _ = writeln!(
                    out,
                    "n_eff = a + b N: a = {} ± {}, b = {} ± {} (90%)",
                    sci(f.intercept),
                    sci(f.intercept_ci90()),
                    sci(f.slope),
                    sci(f.slope_ci90())
                );
            }
        }
        let _ = writeln!(out, "\n# temperature dependence per size");
        for row in &self.by_size {
            let _ = writeln!(out, "\n[N = {}]", row.n);
            let _ = writeln!(out, "kT\tlambda\tlambda_sigma\tn_eff\tn_eff_sigma");
            for (kt, l, ne) in &row.points {
                let _ = writeln!(
                    out,
                    "{kt}\t{}\t{}\t{}\t{}",
                    sci(l.value),
                    sci(l.sigma),
                    sci(ne.value),
                    sci(ne.sigma)
                );
            }
        }
        out
    }
}
