//! Weighted least-squares fits of the fidelity models.
//!
//! Both models are fitted in log parameters (`ln N_eff`, `ln λ`) with a
//! damped Gauss-Newton (Levenberg-Marquardt) iteration, which keeps the
//! parameters positive without explicit bounds. Confidence intervals come
//! from profiling `χ²` to `χ²_min + 2.706`, the 90% point of a one-degree
//! chi-square distribution.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::curve::{CurveMeta, FidelityCurve};
use crate::error::{Error, Result};
use crate::models::{
    exponential_fidelity, exponential_fidelity_dlog_lambda, gaussian_crossing_time,
    gaussian_fidelity_with_gradient, ModelParams,
};

/// `χ²` increase that bounds a one-parameter 90% interval.
pub const DELTA_CHI2_90: f64 = 2.705_543_454_095_404;
/// Two-sided 90% quantile of the standard normal.
pub const Z_90: f64 = 1.644_853_626_951_472_2;
/// Default `|Δχ²|` below which scaling classification is inconclusive.
pub const DEFAULT_SCALING_THRESHOLD: f64 = 2.0;

const MAX_ITERATIONS: usize = 500;
const MAX_LOG_STEP: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    GaussianTwoParam,
    ExponentialOneParam,
}

impl ModelKind {
    pub fn free_parameters(self) -> usize {
        match self {
            ModelKind::GaussianTwoParam => 2,
            ModelKind::ExponentialOneParam => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::GaussianTwoParam => "gaussian",
            ModelKind::ExponentialOneParam => "exponential",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(ModelKind::GaussianTwoParam),
            "exponential" => Ok(ModelKind::ExponentialOneParam),
            _ => Err(Error::InvalidArgument(format!("unknown model `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CiMethod {
    ProfileLikelihood,
    /// `1.645 σ` from the inverse Gauss-Newton Hessian, mapped through `exp`.
    Linearized,
}

impl CiMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CiMethod::ProfileLikelihood => "profile-likelihood",
            CiMethod::Linearized => "linearized",
        }
    }
}

impl fmt::Display for CiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CiMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "profile-likelihood" => Ok(CiMethod::ProfileLikelihood),
            "linearized" => Ok(CiMethod::Linearized),
            _ => Err(Error::InvalidArgument(format!("unknown CI method `{s}`"))),
        }
    }
}

/// A 90% confidence interval. Profile intervals are generally asymmetric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub method: CiMethod,
}

impl Interval {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    fn fixed(x: f64) -> Self {
        Self {
            lower: x,
            upper: x,
            method: CiMethod::ProfileLikelihood,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFit {
    pub model_kind: ModelKind,
    /// For the exponential model `n_eff` is pinned at 1.
    pub params: ModelParams,
    pub n_eff_ci: Interval,
    pub lambda_ci: Interval,
    pub chi2: f64,
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
    /// `N_eff < 1`: accepted, but not a meaningful spin count.
    pub unphysical: bool,
    pub points: usize,
    pub t_min: f64,
    pub t_max: f64,
}

impl ModelFit {
    /// 90% half-widths `(N_eff, λ)`.
    pub fn ci90(&self) -> (f64, f64) {
        (self.n_eff_ci.half_width(), self.lambda_ci.half_width())
    }

    /// Profile likelihood if every free parameter was profiled successfully.
    pub fn ci_method(&self) -> CiMethod {
        if self.n_eff_ci.method == CiMethod::Linearized
            || self.lambda_ci.method == CiMethod::Linearized
        {
            CiMethod::Linearized
        } else {
            CiMethod::ProfileLikelihood
        }
    }

    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi2 / self.dof as f64
        }
    }

    /// Model value at `t` with the fitted parameters.
    pub fn evaluate(&self, t: f64) -> f64 {
        model_value(self.model_kind, self.params, t)
    }

    /// `key=value` report. Curve metadata, if given, is prefixed `curve.`.
    pub fn to_report(&self, meta: Option<&CurveMeta>) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("model", self.model_kind.to_string());
        kv("n_eff", format!("{:e}", self.params.n_eff));
        kv("n_eff_ci90", format!("{:e}", self.n_eff_ci.half_width()));
        kv("n_eff_lower", format!("{:e}", self.n_eff_ci.lower));
        kv("n_eff_upper", format!("{:e}", self.n_eff_ci.upper));
        kv("n_eff_ci_method", self.n_eff_ci.method.to_string());
        kv("lambda", format!("{:e}", self.params.lambda));
        kv("lambda_ci90", format!("{:e}", self.lambda_ci.half_width()));
        kv("lambda_lower", format!("{:e}", self.lambda_ci.lower));
        kv("lambda_upper", format!("{:e}", self.lambda_ci.upper));
        kv("lambda_ci_method", self.lambda_ci.method.to_string());
        kv("ci_method", self.ci_method().to_string());
        kv("chi2", format!("{:e}", self.chi2));
        kv("dof", self.dof.to_string());
        kv("reduced_chi2", format!("{:e}", self.reduced_chi2()));
        kv("converged", self.converged.to_string());
        kv("iterations", self.iterations.to_string());
        kv("unphysical", self.unphysical.to_string());
        kv("points", self.points.to_string());
        kv("t_min", format!("{:e}", self.t_min));
        kv("t_max", format!("{:e}", self.t_max));
        if let Some(m) = meta {
            kv("curve.dimension", m.dimension.to_string());
            kv("curve.L", m.side.to_string());
            kv("curve.N", m.n.to_string());
            kv("curve.kT", format!("{}", m.kt));
            kv("curve.J", format!("{}", m.couplings.j));
            kv("curve.h", format!("{}", m.couplings.h));
            kv("curve.seed", m.seed.to_string());
            kv("curve.policy", m.policy.to_string());
            kv("curve.exact", m.exact.to_string());
            kv("curve.truncated", m.truncated.to_string());
        }
        out
    }

    /// Reads the fit fields of a report written by [`ModelFit::to_report`].
    pub fn parse_report(text: &str, origin: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, idx + 1, "expected key=value"))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            map.get(k)
                .ok_or_else(|| Error::parse(origin, 0, format!("missing key `{k}`")))
        };
        fn num<T: FromStr>(origin: &Path, k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::parse(origin, 0, format!("invalid value for `{k}`")))
        }
        let f = |k: &str| -> Result<f64> { num(origin, k, get(k)?) };
        let interval = |p: &str| -> Result<Interval> {
            Ok(Interval {
                lower: f(&format!("{p}_lower"))?,
                upper: f(&format!("{p}_upper"))?,
                method: get(&format!("{p}_ci_method"))?.parse()?,
            })
        };
        Ok(Self {
            model_kind: get("model")?.parse()?,
            params: ModelParams {
                n_eff: f("n_eff")?,
                lambda: f("lambda")?,
            },
            n_eff_ci: interval("n_eff")?,
            lambda_ci: interval("lambda")?,
            chi2: f("chi2")?,
            dof: num(origin, "dof", get("dof")?)?,
            converged: num(origin, "converged", get("converged")?)?,
            iterations: num(origin, "iterations", get("iterations")?)?,
            unphysical: num(origin, "unphysical", get("unphysical")?)?,
            points: num(origin, "points", get("points")?)?,
            t_min: f("t_min")?,
            t_max: f("t_max")?,
        })
    }
}

fn model_value(kind: ModelKind, params: ModelParams, t: f64) -> f64 {
    match kind {
        ModelKind::GaussianTwoParam => gaussian_fidelity_with_gradient(params, t).0,
        ModelKind::ExponentialOneParam => exponential_fidelity(params.lambda, t),
    }
}

/// `(χ², dof)` of `model` against `curve`, with `free_parameters` counted
/// against the degrees of freedom.
pub fn chi_squared(
    curve: &FidelityCurve,
    model: impl Fn(f64) -> f64,
    free_parameters: usize,
) -> Result<(f64, usize)> {
    check_sigmas(curve)?;
    if curve.len() < free_parameters {
        return Err(Error::InsufficientData {
            needed: free_parameters,
            got: curve.len(),
        });
    }
    let chi2 = curve
        .points()
        .map(|(t, f, s)| {
            let r = (f - model(t)) / s;
            r * r
        })
        .sum();
    Ok((chi2, curve.len() - free_parameters))
}

fn check_sigmas(curve: &FidelityCurve) -> Result<()> {
    if curve.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    for (index, &value) in curve.sigma.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::ZeroSigma { index, value });
        }
    }
    Ok(())
}

/// Least-squares problem in `θ = (ln N_eff, ln λ)`.
struct Problem<'a> {
    kind: ModelKind,
    times: &'a [f64],
    data: &'a [f64],
    inv_sigma: Vec<f64>,
}

struct Normal {
    chi2: f64,
    a: [[f64; 2]; 2],
    g: [f64; 2],
}

struct Minimum {
    theta: [f64; 2],
    chi2: f64,
    iterations: usize,
    converged: bool,
}

impl<'a> Problem<'a> {
    fn new(kind: ModelKind, curve: &'a FidelityCurve) -> Self {
        Self {
            kind,
            times: &curve.times,
            data: &curve.fidelity,
            inv_sigma: curve.sigma.iter().map(|s| 1.0 / s).collect(),
        }
    }

    fn params(&self, theta: [f64; 2]) -> ModelParams {
        ModelParams {
            n_eff: theta[0].exp(),
            lambda: theta[1].exp(),
        }
    }

    fn eval(&self, theta: [f64; 2], t: f64) -> (f64, [f64; 2]) {
        let p = self.params(theta);
        match self.kind {
            ModelKind::GaussianTwoParam => {
                let (f, dn, dl) = gaussian_fidelity_with_gradient(p, t);
                (f, [dn, dl])
            }
            ModelKind::ExponentialOneParam => (
                exponential_fidelity(p.lambda, t),
                [0.0, exponential_fidelity_dlog_lambda(p.lambda, t)],
            ),
        }
    }

    fn chi2(&self, theta: [f64; 2]) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.times.len() {
            let r = (self.data[i] - self.eval(theta, self.times[i]).0) * self.inv_sigma[i];
            sum += r * r;
        }
        sum
    }

    fn normal(&self, theta: [f64; 2]) -> Normal {
        let mut n = Normal {
            chi2: 0.0,
            a: [[0.0; 2]; 2],
            g: [0.0; 2],
        };
        for i in 0..self.times.len() {
            let w = self.inv_sigma[i];
            let (f, d) = self.eval(theta, self.times[i]);
            let r = (self.data[i] - f) * w;
            let d = [d[0] * w, d[1] * w];
            n.chi2 += r * r;
            for j in 0..2 {
                n.g[j] += d[j] * r;
                for k in 0..2 {
                    n.a[j][k] += d[j] * d[k];
                }
            }
        }
        n
    }

    /// Levenberg-Marquardt over the coordinates marked `free`.
    fn minimize(&self, start: [f64; 2], free: [bool; 2]) -> Minimum {
        let mut theta = start;
        let mut mu = 1e-3;
        let mut current = self.normal(theta);
        for iter in 1..=MAX_ITERATIONS {
            let Some(step) = damped_step(&current, free, mu) else {
                return Minimum {
                    theta,
                    chi2: current.chi2,
                    iterations: iter,
                    converged: true,
                };
            };
            let mut trial = theta;
            for j in 0..2 {
                trial[j] += step[j];
            }
            let trial_chi2 = self.chi2(trial);
            if trial_chi2.is_finite() && trial_chi2 <= current.chi2 {
                let decrease = current.chi2 - trial_chi2;
                theta = trial;
                current = self.normal(theta);
                mu = (mu * 0.1).max(1e-12);
                let size = step[0].abs().max(step[1].abs());
                if size < 1e-11 || (decrease <= 1e-14 * current.chi2.max(1e-300) && size < 1e-7) {
                    return Minimum {
                        theta,
                        chi2: current.chi2,
                        iterations: iter,
                        converged: true,
                    };
                }
            } else {
                mu *= 10.0;
                if mu > 1e12 {
                    // No descent left at machine precision.
                    return Minimum {
                        theta,
                        chi2: current.chi2,
                        iterations: iter,
                        converged: true,
                    };
                }
            }
        }
        Minimum {
            theta,
            chi2: current.chi2,
            iterations: MAX_ITERATIONS,
            converged: false,
        }
    }

    /// Upper or lower end of the profile interval of coordinate `j`, in
    /// log space, or `None` if the profile never reaches the target.
    fn profile_bound(&self, best: &Minimum, j: usize, direction: f64, scale: f64) -> Option<f64> {
        let target = best.chi2 + DELTA_CHI2_90;
        let free = free_mask(self.kind, Some(j));
        let other_free = free.iter().any(|&f| f);
        let profile = |v: f64, warm: [f64; 2]| -> (f64, [f64; 2]) {
            let mut start = warm;
            start[j] = v;
            if other_free {
                let m = self.minimize(start, free);
                (m.chi2, m.theta)
            } else {
                (self.chi2(start), start)
            }
        };

        let origin = best.theta[j];
        let mut inside = (origin, best.theta);
        let mut step = scale.clamp(1e-6, 1.0);
        let mut outside = None;
        for _ in 0..60 {
            let v = origin + direction * step;
            if v.abs() > 60.0 {
                return None;
            }
            let (chi2, theta) = profile(v, inside.1);
            if !chi2.is_finite() {
                return None;
            }
            if chi2 > target {
                outside = Some(v);
                break;
            }
            inside = (v, theta);
            step *= 2.0;
        }
        let mut outside = outside?;
        for _ in 0..200 {
            if (outside - inside.0).abs() <= 1e-9 * (1.0 + origin.abs()) {
                break;
            }
            let mid = 0.5 * (outside + inside.0);
            let (chi2, theta) = profile(mid, inside.1);
            if chi2 > target {
                outside = mid;
            } else {
                inside = (mid, theta);
            }
        }
        Some(0.5 * (outside + inside.0))
    }
}

fn free_mask(kind: ModelKind, fixed: Option<usize>) -> [bool; 2] {
    let mut free = match kind {
        ModelKind::GaussianTwoParam => [true, true],
        ModelKind::ExponentialOneParam => [false, true],
    };
    if let Some(j) = fixed {
        free[j] = false;
    }
    free
}

/// Solves `(A + μ diag A) δ = g` on the free coordinates, with the step
/// capped in log space. `None` when no coordinate is free.
fn damped_step(n: &Normal, free: [bool; 2], mu: f64) -> Option<[f64; 2]> {
    let idx: Vec<usize> = (0..2).filter(|&j| free[j]).collect();
    let damp = |j: usize| n.a[j][j] + mu * n.a[j][j].max(1e-12);
    let mut step = [0.0; 2];
    match idx.as_slice() {
        [] => return None,
        [j] => step[*j] = n.g[*j] / damp(*j),
        _ => {
            let (a00, a11, a01) = (damp(0), damp(1), n.a[0][1]);
            let det = a00 * a11 - a01 * a01;
            if det.abs() <= f64::MIN_POSITIVE {
                step[0] = n.g[0] / a00;
                step[1] = n.g[1] / a11;
            } else {
                step[0] = (a11 * n.g[0] - a01 * n.g[1]) / det;
                step[1] = (a00 * n.g[1] - a01 * n.g[0]) / det;
            }
        }
    }
    let size = step[0].abs().max(step[1].abs());
    if size > MAX_LOG_STEP {
        for s in &mut step {
            *s *= MAX_LOG_STEP / size;
        }
    }
    if !(step[0].is_finite() && step[1].is_finite()) {
        return Some([0.0; 2]);
    }
    Some(step)
}

/// Linearized log-space standard deviations on the free coordinates.
fn linearized_sigmas(n: &Normal, free: [bool; 2]) -> [f64; 2] {
    let mut out = [f64::INFINITY; 2];
    if free[0] && free[1] {
        let det = n.a[0][0] * n.a[1][1] - n.a[0][1] * n.a[0][1];
        if det > 0.0 {
            out[0] = (n.a[1][1] / det).sqrt();
            out[1] = (n.a[0][0] / det).sqrt();
        }
    } else {
        for j in 0..2 {
            if free[j] && n.a[j][j] > 0.0 {
                out[j] = (1.0 / n.a[j][j]).sqrt();
            }
        }
    }
    out
}

/// Points that sit significantly below the `t = 0` plateau and
/// significantly above the long-time plateau at 1/2.
fn decay_points(curve: &FidelityCurve) -> usize {
    curve
        .points()
        .filter(|&(_, f, s)| f < 1.0 - 2.0 * s && f - 0.5 > 2.0 * s)
        .count()
}

/// First time at which the data fall to `level`, linearly interpolated.
fn crossing_time(curve: &FidelityCurve, level: f64) -> Option<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for (t, f, _) in curve.points() {
        if f <= level {
            return Some(match prev {
                Some((t0, f0)) if f0 > f => t0 + (t - t0) * (f0 - level) / (f0 - f),
                _ => t,
            });
        }
        prev = Some((t, f));
    }
    None
}

/// Validates the curve and returns the data's crossing `(t, level)` used to
/// seed the rate.
fn prepare(curve: &FidelityCurve, kind: ModelKind) -> Result<(f64, f64)> {
    check_sigmas(curve)?;
    let k = kind.free_parameters();
    if curve.len() <= k {
        return Err(Error::InsufficientData {
            needed: k + 1,
            got: curve.len(),
        });
    }
    let decaying = decay_points(curve);
    if decaying < 3 {
        return Err(Error::NoDecay(format!(
            "only {decaying} of {} points lie clearly between the initial plateau and 1/2",
            curve.len()
        )));
    }
    let f_min = curve.fidelity.iter().copied().fold(f64::INFINITY, f64::min);
    let level = f_min.max(0.9).clamp(0.5 + 1e-6, 1.0 - 1e-6);
    match crossing_time(curve, level) {
        Some(t) if t > 0.0 => Ok((t, level)),
        _ => Err(Error::NoDecay(
            "fidelity never leaves its initial value".into(),
        )),
    }
}

fn finish(problem: &Problem<'_>, curve: &FidelityCurve, best: Minimum) -> ModelFit {
    let kind = problem.kind;
    let free = free_mask(kind, None);
    let normal = problem.normal(best.theta);
    let sig = linearized_sigmas(&normal, free);
    let mut ci = [Interval::fixed(1.0); 2];
    for j in 0..2 {
        let centre = best.theta[j];
        if !free[j] {
            ci[j] = Interval::fixed(centre.exp());
            continue;
        }
        let scale = if sig[j].is_finite() {
            Z_90 * sig[j]
        } else {
            0.1
        };
        let lo = problem.profile_bound(&best, j, -1.0, scale);
        let hi = problem.profile_bound(&best, j, 1.0, scale);
        ci[j] = match (lo, hi) {
            (Some(lo), Some(hi)) => Interval {
                lower: lo.exp(),
                upper: hi.exp(),
                method: CiMethod::ProfileLikelihood,
            },
            _ => {
                let half = Z_90 * sig[j];
                Interval {
                    lower: (centre - half).exp(),
                    upper: (centre + half).exp(),
                    method: CiMethod::Linearized,
                }
            }
        };
    }
    let params = problem.params(best.theta);
    ModelFit {
        model_kind: kind,
        params,
        n_eff_ci: ci[0],
        lambda_ci: ci[1],
        chi2: best.chi2,
        dof: curve.len() - kind.free_parameters(),
        converged: best.converged,
        iterations: best.iterations,
        unphysical: kind == ModelKind::GaussianTwoParam && params.n_eff < 1.0,
        points: curve.len(),
        t_min: curve.times.iter().copied().fold(f64::INFINITY, f64::min),
        t_max: curve
            .times
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

fn best_of(problem: &Problem<'_>, starts: &[[f64; 2]]) -> Minimum {
    let free = free_mask(problem.kind, None);
    let mut best: Option<Minimum> = None;
    for &s in starts {
        let m = problem.minimize(s, free);
        let better = match &best {
            None => m.chi2.is_finite(),
            Some(b) => m.chi2 < b.chi2,
        };
        if better || best.is_none() {
            best = Some(m);
        }
    }
    best.expect("at least one start")
}

/// Fits the effective-spin model with `N_eff` and `λ` free. `n` is the
/// lattice size, used only to spread the starting points.
pub fn fit_gaussian_model(curve: &FidelityCurve, n: usize) -> Result<ModelFit> {
    let kind = ModelKind::GaussianTwoParam;
    let (t_cross, level) = prepare(curve, kind)?;
    let n = n.max(1) as f64;
    let mut starts = Vec::new();
    for n0 in [1.0, n / 10.0, n / 2.0, n] {
        let n0 = n0.max(0.5);
        // Rate that puts the model's crossing of `level` at the data's.
        let unit = gaussian_crossing_time(ModelParams::new(n0, 1.0)?, level)?;
        starts.push([n0.ln(), (unit / t_cross).ln()]);
    }
    let problem = Problem::new(kind, curve);
    let best = best_of(&problem, &starts);
    Ok(finish(&problem, curve, best))
}

/// Fits the single-spin law `½(1 + e^{-2λt})`.
pub fn fit_exponential_model(curve: &FidelityCurve) -> Result<ModelFit> {
    let kind = ModelKind::ExponentialOneParam;
    let (t_cross, level) = prepare(curve, kind)?;
    let lambda0 = -(2.0 * level - 1.0).ln() / (2.0 * t_cross);
    let starts: Vec<[f64; 2]> = [0.1, 1.0, 10.0]
        .iter()
        .map(|k| [0.0, (lambda0 * k).ln()])
        .collect();
    let problem = Problem::new(kind, curve);
    let best = best_of(&problem, &starts);
    Ok(finish(&problem, curve, best))
}

/// Weighted straight-line fit.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_sigma: f64,
    pub intercept_sigma: f64,
    pub chi2: f64,
    pub dof: usize,
    /// Intercept pinned at zero.
    pub through_origin: bool,
}

impl LinearFit {
    /// Standard errors are inflated by `sqrt(χ²/dof)` when the scatter
    /// exceeds the quoted errors.
    fn scale(&self) -> f64 {
        if self.dof == 0 {
            1.0
        } else {
            (self.chi2 / self.dof as f64).sqrt().max(1.0)
        }
    }

    pub fn slope_ci90(&self) -> f64 {
        Z_90 * self.slope_sigma * self.scale()
    }

    pub fn intercept_ci90(&self) -> f64 {
        if self.through_origin {
            0.0
        } else {
            Z_90 * self.intercept_sigma * self.scale()
        }
    }

    /// Zero lies inside the 90% slope interval.
    pub fn slope_consistent_with_zero(&self) -> bool {
        self.slope.abs() <= self.slope_ci90()
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

fn check_line_input(xs: &[f64], ys: &[f64], errs: &[f64], needed: usize) -> Result<()> {
    if xs.len() != ys.len() || xs.len() != errs.len() {
        return Err(Error::InvalidArgument(
            "x, y and error arrays differ in length".into(),
        ));
    }
    if xs.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: xs.len(),
        });
    }
    for (index, &value) in errs.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::ZeroSigma { index, value });
        }
    }
    Ok(())
}

/// Weighted least-squares line `y = a + b x`.
pub fn fit_linear(xs: &[f64], ys: &[f64], errs: &[f64]) -> Result<LinearFit> {
    check_line_input(xs, ys, errs, 2)?;
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..xs.len() {
        let w = 1.0 / (errs[i] * errs[i]);
        s += w;
        sx += w * xs[i];
        sy += w * ys[i];
        sxx += w * xs[i] * xs[i];
        sxy += w * xs[i] * ys[i];
    }
    let det = s * sxx - sx * sx;
    if !(det > 0.0) {
        return Err(Error::InvalidArgument("x values are all equal".into()));
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let chi2 = weighted_residuals(xs, ys, errs, intercept, slope);
    Ok(LinearFit {
        slope,
        intercept,
        slope_sigma: (s / det).sqrt(),
        intercept_sigma: (sxx / det).sqrt(),
        chi2,
        dof: xs.len() - 2,
        through_origin: false,
    })
}

/// Weighted least-squares line through the origin, `y = m x`.
pub fn fit_through_origin(xs: &[f64], ys: &[f64], errs: &[f64]) -> Result<LinearFit> {
    check_line_input(xs, ys, errs, 1)?;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for i in 0..xs.len() {
        let w = 1.0 / (errs[i] * errs[i]);
        sxx += w * xs[i] * xs[i];
        sxy += w * xs[i] * ys[i];
    }
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("all x values are zero".into()));
    }
    let slope = sxy / sxx;
    Ok(LinearFit {
        slope,
        intercept: 0.0,
        slope_sigma: (1.0 / sxx).sqrt(),
        intercept_sigma: 0.0,
        chi2: weighted_residuals(xs, ys, errs, 0.0, slope),
        dof: xs.len() - 1,
        through_origin: true,
    })
}

fn weighted_residuals(xs: &[f64], ys: &[f64], errs: &[f64], a: f64, b: f64) -> f64 {
    (0..xs.len())
        .map(|i| {
            let r = (ys[i] - a - b * xs[i]) / errs[i];
            r * r
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalingVerdict {
    /// `ln λ` is linear in `N`.
    Exponential,
    /// `ln λ` is linear in `ln N`.
    Subexponential,
    Inconclusive,
}

impl ScalingVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            ScalingVerdict::Exponential => "exponential",
            ScalingVerdict::Subexponential => "subexponential",
            ScalingVerdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for ScalingVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingClassification {
    pub verdict: ScalingVerdict,
    /// `ln λ` against `N`.
    pub exponential: LinearFit,
    /// `ln λ` against `ln N`.
    pub power_law: LinearFit,
    /// `χ²(power law) - χ²(exponential)`; positive favours exponential.
    pub delta_chi2: f64,
    pub threshold: f64,
}

/// Decides whether `λ(N)` decays exponentially or as a power of `N`.
///
/// `lambda_errors` are one-sigma errors on `λ`; they become `σ_λ / λ` on
/// `ln λ`.
pub fn classify_lambda_scaling(
    ns: &[f64],
    lambdas: &[f64],
    lambda_errors: &[f64],
    threshold: f64,
) -> Result<ScalingClassification> {
    if ns.len() != lambdas.len() || ns.len() != lambda_errors.len() {
        return Err(Error::InvalidArgument(
            "N, lambda and error arrays differ in length".into(),
        ));
    }
    if ns.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: ns.len(),
        });
    }
    if let Some(bad) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {bad}"
        )));
    }
    if let Some(bad) = ns.iter().find(|n| !(**n > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "N must be positive, got {bad}"
        )));
    }
    let ys: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let errs: Vec<f64> = lambda_errors
        .iter()
        .zip(lambdas)
        .map(|(e, l)| e / l)
        .collect();
    let log_ns: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let exponential = fit_linear(ns, &ys, &errs)?;
    let power_law = fit_linear(&log_ns, &ys, &errs)?;
    let delta_chi2 = power_law.chi2 - exponential.chi2;
    let verdict = if delta_chi2.abs() < threshold {
        ScalingVerdict::Inconclusive
    } else if delta_chi2 > 0.0 {
        ScalingVerdict::Exponential
    } else {
        ScalingVerdict::Subexponential
    };
    Ok(ScalingClassification {
        verdict,
        exponential,
        power_law,
        delta_chi2,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::CurveMeta;
    use crate::fidelity::sigma_f;
    use crate::lattice::{Couplings, Dimension, ReadoutPolicy};
    use crate::models::gaussian_fidelity;
    use rand::SeedableRng;
    use rand_distr::{Binomial, Distribution};

    fn curve(times: Vec<f64>, fidelity: Vec<f64>, sigma: Vec<f64>) -> FidelityCurve {
        FidelityCurve {
            meta: CurveMeta {
                dimension: Dimension::One,
                side: 100,
                n: 100,
                kt: 2.5,
                couplings: Couplings::default(),
                policy: ReadoutPolicy::RandomChoice,
                seed: 0,
                exact: false,
                truncated: false,
                extra: Default::default(),
            },
            ensemble_size: 10_000,
            times,
            fidelity,
            sigma,
        }
    }

    fn noisy(model: impl Fn(f64) -> f64, times: &[f64], m: u64, seed: u64) -> FidelityCurve {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
        let f: Vec<f64> = times
            .iter()
            .map(|&t| Binomial::new(m, model(t)).unwrap().sample(&mut rng) as f64 / m as f64)
            .collect();
        let s = f.iter().map(|&v| sigma_f(v, m)).collect();
        let mut c = curve(times.to_vec(), f, s);
        c.ensemble_size = m;
        c
    }

    fn grid(t_max: f64, points: usize) -> Vec<f64> {
        (0..points)
            .map(|k| t_max * k as f64 / (points - 1) as f64)
            .collect()
    }

    #[test]
    fn chi_squared_basics() {
        let c = curve(
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.8, 0.6],
            vec![0.1, 0.1, 0.2],
        );
        let (chi2, dof) = chi_squared(&c, |t| 1.0 - 0.2 * t, 2).unwrap();
        assert!(chi2.abs() < 1e-24);
        assert_eq!(dof, 1);
        let (chi2, _) = chi_squared(&c, |_| 0.8, 0).unwrap();
        assert!((chi2 - (4.0 + 0.0 + 1.0)).abs() < 1e-12);

        let mut z = c.clone();
        z.sigma[1] = 0.0;
        assert!(matches!(
            chi_squared(&z, |_| 1.0, 0),
            Err(Error::ZeroSigma { index: 1, .. })
        ));
    }

    #[test]
    fn noiseless_gaussian_is_recovered() {
        let p = ModelParams::new(46.7, 0.1707).unwrap();
        let times = grid(30.0, 300);
        let f: Vec<f64> = times.iter().map(|&t| gaussian_fidelity(p, t)).collect();
        let s = f.iter().map(|&v| sigma_f(v, 10_000)).collect();
        let fit = fit_gaussian_model(&curve(times, f, s), 100).unwrap();
        assert!(fit.converged);
        assert!(
            (fit.params.n_eff / 46.7 - 1.0).abs() < 1e-7,
            "{:?}",
            fit.params
        );
        assert!((fit.params.lambda / 0.1707 - 1.0).abs() < 1e-7);
        assert!(fit.chi2 < 1e-10);
        assert_eq!(fit.dof, 298);
        assert!(fit.n_eff_ci.contains(46.7) && fit.lambda_ci.contains(0.1707));
        assert_eq!(fit.ci_method(), CiMethod::ProfileLikelihood);
    }

    #[test]
    fn noiseless_exponential_is_recovered() {
        let times = grid(20.0, 100);
        let f: Vec<f64> = times
            .iter()
            .map(|&t| exponential_fidelity(0.3, t))
            .collect();
        let s = f.iter().map(|&v| sigma_f(v, 10_000)).collect();
        let fit = fit_exponential_model(&curve(times, f, s)).unwrap();
        assert!((fit.params.lambda / 0.3 - 1.0).abs() < 1e-8);
        assert_eq!(fit.params.n_eff, 1.0);
        assert_eq!(fit.dof, 99);
        assert!(fit.chi2 < 1e-12);
        assert_eq!(fit.n_eff_ci.half_width(), 0.0);
    }

    #[test]
    fn flat_curve_is_no_decay() {
        let c = curve(grid(1.0, 10), vec![1.0; 10], vec![5e-5; 10]);
        assert!(matches!(
            fit_gaussian_model(&c, 100),
            Err(Error::NoDecay(_))
        ));
        assert!(matches!(fit_exponential_model(&c), Err(Error::NoDecay(_))));
    }

    #[test]
    fn fit_is_a_local_minimum() {
        let p = ModelParams::new(46.7, 0.1707).unwrap();
        let c = noisy(|t| gaussian_fidelity(p, t), &grid(40.0, 400), 10_000, 3);
        let fit = fit_gaussian_model(&c, 100).unwrap();
        let (dn, dl) = fit.ci90();
        for i in -10..=10 {
            for j in -10..=10 {
                let q = ModelParams::new(
                    fit.params.n_eff + dn * i as f64 / 10.0,
                    fit.params.lambda + dl * j as f64 / 10.0,
                )
                .unwrap();
                let (chi2, _) = chi_squared(&c, |t| gaussian_fidelity(q, t), 2).unwrap();
                assert!(
                    chi2 >= fit.chi2 * (1.0 - 1e-12),
                    "({i},{j}) {chi2} < {}",
                    fit.chi2
                );
            }
        }
    }

    #[test]
    fn profile_interval_hits_target() {
        let p = ModelParams::new(20.0, 0.05).unwrap();
        let c = noisy(|t| gaussian_fidelity(p, t), &grid(150.0, 300), 10_000, 9);
        let fit = fit_gaussian_model(&c, 100).unwrap();
        // Fixing λ at an interval end and refitting N_eff must cost 2.706.
        let fixed = fit.lambda_ci.upper;
        let best = (0..4001)
            .map(|k| fit.params.n_eff * (0.8 + 0.4 * k as f64 / 4000.0))
            .map(|n| {
                let q = ModelParams::new(n, fixed).unwrap();
                chi_squared(&c, |t| gaussian_fidelity(q, t), 2).unwrap().0
            })
            .fold(f64::INFINITY, f64::min);
        assert!(
            (best - fit.chi2 - DELTA_CHI2_90).abs() < 0.01,
            "{}",
            best - fit.chi2
        );
        assert!(fit.lambda_ci.lower < fit.params.lambda && fit.params.lambda < fixed);
    }

    #[test]
    fn sigma_rescaling_covariance() {
        let p = ModelParams::new(46.7, 0.1707).unwrap();
        let c = noisy(|t| gaussian_fidelity(p, t), &grid(40.0, 300), 10_000, 4);
        let a = fit_gaussian_model(&c, 100).unwrap();
        let mut scaled = c.clone();
        let k = 3.0;
        scaled.sigma.iter_mut().for_each(|s| *s *= k);
        let b = fit_gaussian_model(&scaled, 100).unwrap();
        assert!((a.params.n_eff / b.params.n_eff - 1.0).abs() < 1e-6);
        assert!((a.params.lambda / b.params.lambda - 1.0).abs() < 1e-6);
        assert!((b.chi2 * k * k / a.chi2 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn time_rescaling_covariance() {
        let p = ModelParams::new(30.0, 0.2).unwrap();
        let c = noisy(|t| gaussian_fidelity(p, t), &grid(30.0, 300), 10_000, 5);
        let a = fit_gaussian_model(&c, 100).unwrap();
        for k in [0.01, 7.0, 250.0] {
            let mut s = c.clone();
            s.times.iter_mut().for_each(|t| *t *= k);
            let b = fit_gaussian_model(&s, 100).unwrap();
            assert!((b.params.lambda * k / a.params.lambda - 1.0).abs() < 1e-6);
            assert!((b.params.n_eff / a.params.n_eff - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn exponential_fails_on_broad_shoulder() {
        let p = ModelParams::new(100.0, 0.1).unwrap();
        let c = noisy(|t| gaussian_fidelity(p, t), &grid(40.0, 400), 10_000, 6);
        let g = fit_gaussian_model(&c, 100).unwrap();
        let e = fit_exponential_model(&c).unwrap();
        assert!(g.reduced_chi2() < 1.5);
        assert!(e.reduced_chi2() > 100.0 * g.reduced_chi2());
    }

    #[test]
    fn report_round_trip() {
        let p = ModelParams::new(12.0, 0.03).unwrap();
        let c = noisy(|t| gaussian_fidelity(p, t), &grid(200.0, 200), 1000, 7);
        let fit = fit_gaussian_model(&c, 100).unwrap();
        let text = fit.to_report(Some(&c.meta));
        assert!(text.contains("curve.kT=2.5\n"));
        assert!(text.contains("ci_method=profile-likelihood\n"));
        let back = ModelFit::parse_report(&text, Path::new("fit.txt")).unwrap();
        assert_eq!(back, fit);
        assert!(ModelFit::parse_report("model=gaussian\n", Path::new("f")).is_err());
    }

    #[test]
    fn unphysical_flag() {
        let p = ModelParams::new(0.6, 0.01).unwrap();
        let c = noisy(|t| gaussian_fidelity(p, t), &grid(300.0, 200), 10_000, 8);
        let fit = fit_gaussian_model(&c, 100).unwrap();
        assert!(fit.params.n_eff < 1.0 && fit.unphysical);
    }

    #[test]
    fn linear_fits() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 + 2.0 * x).collect();
        let e = [0.1; 4];
        let f = fit_linear(&xs, &ys, &e).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 0.5).abs() < 1e-12);
        assert!(f.chi2 < 1e-20);
        assert_eq!(f.dof, 2);
        // Unit weights: σ_b² = 1 / Σ(x - x̄)² scaled by the common variance.
        assert!((f.slope_sigma - 0.1 / 5f64.sqrt()).abs() < 1e-12);
        assert!((f.slope_ci90() - Z_90 * f.slope_sigma).abs() < 1e-15);

        let o = fit_through_origin(&xs, &[0.61, 1.22, 1.83, 2.44], &e).unwrap();
        assert!((o.slope - 0.61).abs() < 1e-12 && o.through_origin);
        assert_eq!(o.intercept_ci90(), 0.0);

        let flat = fit_linear(&xs, &[1.0, 1.1, 0.9, 1.0], &e).unwrap();
        assert!(flat.slope_consistent_with_zero());
        assert!(matches!(
            fit_linear(&[1.0], &[1.0], &[1.0]),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        ));
        assert!(fit_linear(&[1.0, 1.0], &[1.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn birge_scaling_widens_interval() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [1.0, 3.0, 2.0, 5.0, 4.0];
        let f = fit_linear(&xs, &ys, &[0.1; 5]).unwrap();
        let red = f.chi2 / 3.0;
        assert!(red > 1.0);
        assert!((f.slope_ci90() - Z_90 * f.slope_sigma * red.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn scaling_classifier_on_exact_generators() {
        let ns = [100.0, 144.0, 196.0, 256.0];
        let exp: Vec<f64> = ns.iter().map(|n: &f64| 0.3 * (-0.02 * n).exp()).collect();
        let pow: Vec<f64> = ns.iter().map(|n: &f64| 2.0 * n.powf(-1.5)).collect();
        let err = |v: &[f64]| v.iter().map(|l| 0.01 * l).collect::<Vec<_>>();
        let c = classify_lambda_scaling(&ns, &exp, &err(&exp), DEFAULT_SCALING_THRESHOLD).unwrap();
        assert_eq!(c.verdict, ScalingVerdict::Exponential);
        assert!(c.exponential.chi2 < 1e-16);
        assert!((c.exponential.slope + 0.02).abs() < 1e-12);
        let c = classify_lambda_scaling(&ns, &pow, &err(&pow), DEFAULT_SCALING_THRESHOLD).unwrap();
        assert_eq!(c.verdict, ScalingVerdict::Subexponential);
        assert!((c.power_law.slope + 1.5).abs() < 1e-12);

        // Errors so large that neither shape is preferred.
        let wide: Vec<f64> = exp.iter().map(|l| 0.5 * l).collect();
        let c = classify_lambda_scaling(&ns, &exp, &wide, DEFAULT_SCALING_THRESHOLD).unwrap();
        assert_eq!(c.verdict, ScalingVerdict::Inconclusive);

        assert!(classify_lambda_scaling(&ns[..3], &exp[..3], &exp[..3], 2.0).is_err());
        let mut bad = exp.clone();
        bad[2] = 0.0;
        assert!(matches!(
            classify_lambda_scaling(&ns, &bad, &exp, 2.0),
            Err(Error::InvalidArgument(_))
        ));
    }
}
