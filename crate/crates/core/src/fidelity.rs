//! Monte-Carlo estimates of the storage fidelity `F(t)`.
//!
//! `F(t)` is the fraction of `M` independent trajectories whose majority vote
//! still returns the encoded bit at time `t`. Trajectory `i` always uses
//! random stream `i`, so the estimate does not depend on how the work is
//! scheduled and the first `M` outcomes are unchanged when `M` grows.

use rand::SeedableRng;
use rayon::prelude::*;

use crate::curve::{CurveMeta, FidelityCurve};
use crate::dynamics::{
    readout_seed, simulate_magnetizations, steps_for_time, trajectory_rng, Glauber,
    TrajectoryConfig, TrajectoryRng,
};
use crate::error::{Error, Result};
use crate::lattice::{readout_from_magnetization, Readout, ReadoutPolicy, SpinState};

/// Uncertainty of a fidelity estimated from `m` trajectories: the larger of
/// the discretization error `1/(2M)` and the binomial error
/// `sqrt(F(1-F)/M)`.
pub fn sigma_f(fidelity: f64, m: u64) -> f64 {
    let m = m.max(1) as f64;
    let stat = (fidelity * (1.0 - fidelity) / m).max(0.0).sqrt();
    stat.max(0.5 / m)
}

/// Per-sample success counts of an ensemble under both tie policies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnsembleCounts {
    pub ensemble_size: u64,
    /// Trajectories with a strict majority for the encoded bit.
    pub strict: Vec<u64>,
    /// Trajectories with zero magnetization.
    pub ties: Vec<u64>,
    /// Tied trajectories whose coin came up correct.
    pub tie_wins: Vec<u64>,
}

impl EnsembleCounts {
    fn zeros(m: u64, k: usize) -> Self {
        Self {
            ensemble_size: m,
            strict: vec![0; k],
            ties: vec![0; k],
            tie_wins: vec![0; k],
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.strict.iter_mut().zip(&other.strict) {
            *a += b;
        }
        for (a, b) in self.ties.iter_mut().zip(&other.ties) {
            *a += b;
        }
        for (a, b) in self.tie_wins.iter_mut().zip(&other.tie_wins) {
            *a += b;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.strict.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strict.is_empty()
    }

    pub fn successes(&self, policy: ReadoutPolicy) -> Vec<u64> {
        match policy {
            ReadoutPolicy::DeclareFailure => self.strict.clone(),
            ReadoutPolicy::RandomChoice => self
                .strict
                .iter()
                .zip(&self.tie_wins)
                .map(|(s, w)| s + w)
                .collect(),
        }
    }

    pub fn fidelity(&self, policy: ReadoutPolicy) -> Vec<f64> {
        let m = self.ensemble_size as f64;
        self.successes(policy)
            .into_iter()
            .map(|c| c as f64 / m)
            .collect()
    }
}

/// Runs trajectories `0..m` and tallies their readouts at every reachable
/// sample time.
pub fn run_ensemble(config: &TrajectoryConfig, m: u64) -> Result<EnsembleCounts> {
    config.validate()?;
    if m == 0 {
        return Err(Error::InvalidArgument(
            "ensemble size must be at least 1".into(),
        ));
    }
    let engine = Glauber::new(config.couplings, config.temperature);
    let k = config.reachable_samples();
    let bit = config.encoded_bit;
    let counts = (0..m)
        .into_par_iter()
        .fold(
            || EnsembleCounts::zeros(m, k),
            |mut acc, i| {
                let mut coins = TrajectoryRng::seed_from_u64(readout_seed(config.master_seed, i));
                simulate_magnetizations(config, &engine, i, |s, mag| {
                    let aligned = mag * bit.spin() as i64;
                    if aligned > 0 {
                        acc.strict[s] += 1;
                    } else if aligned == 0 {
                        acc.ties[s] += 1;
                        let r = readout_from_magnetization(
                            0,
                            bit,
                            ReadoutPolicy::RandomChoice,
                            &mut coins,
                        );
                        acc.tie_wins[s] += (r == Readout::Correct) as u64;
                    }
                });
                acc
            },
        )
        .reduce(|| EnsembleCounts::zeros(m, k), EnsembleCounts::merge);
    Ok(counts)
}

pub(crate) fn meta_for(config: &TrajectoryConfig, policy: ReadoutPolicy) -> CurveMeta {
    CurveMeta {
        dimension: config.geometry.dimension(),
        side: config.geometry.side(),
        n: config.geometry.n(),
        kt: config.temperature.kt(),
        couplings: config.couplings,
        policy,
        seed: config.master_seed,
        exact: false,
        truncated: config.reachable_samples() < config.sample_times.len(),
        extra: Default::default(),
    }
}

/// Turns ensemble counts into a fidelity curve for one tie policy.
pub fn curve_from_counts(
    config: &TrajectoryConfig,
    counts: &EnsembleCounts,
    policy: ReadoutPolicy,
) -> FidelityCurve {
    let m = counts.ensemble_size;
    let fidelity = counts.fidelity(policy);
    let sigma = fidelity.iter().map(|&f| sigma_f(f, m)).collect();
    FidelityCurve {
        meta: meta_for(config, policy),
        ensemble_size: m,
        times: config.sample_times[..counts.len()].to_vec(),
        fidelity,
        sigma,
    }
}

/// Estimates `F(t)` with `m` trajectories.
pub fn estimate_fidelity(
    config: &TrajectoryConfig,
    m: u64,
    policy: ReadoutPolicy,
) -> Result<FidelityCurve> {
    let counts = run_ensemble(config, m)?;
    Ok(curve_from_counts(config, &counts, policy))
}

/// Sample-time layouts.
#[derive(Clone, Debug, PartialEq)]
pub enum SampleGrid {
    /// `points` evenly spaced times on `[0, t_max]`.
    Linear {
        t_max: f64,
        points: usize,
    },
    /// `t = 0` followed by `points - 1` log-spaced times on `[t_min, t_max]`.
    Geometric {
        t_min: f64,
        t_max: f64,
        points: usize,
    },
    Explicit(Vec<f64>),
}

impl SampleGrid {
    pub fn times(&self) -> Result<Vec<f64>> {
        let times = match self {
            SampleGrid::Linear { t_max, points } => {
                if *points < 2 || !(*t_max > 0.0) {
                    return Err(Error::InvalidArgument(
                        "linear grid needs t_max > 0 and at least 2 points".into(),
                    ));
                }
                (0..*points)
                    .map(|k| t_max * k as f64 / (*points - 1) as f64)
                    .collect()
            }
            SampleGrid::Geometric {
                t_min,
                t_max,
                points,
            } => {
                if *points < 3 || !(*t_min > 0.0) || !(t_max > t_min) {
                    return Err(Error::InvalidArgument(
                        "geometric grid needs 0 < t_min < t_max and at least 3 points".into(),
                    ));
                }
                let ratio = (t_max / t_min).ln() / (*points - 2) as f64;
                std::iter::once(0.0)
                    .chain((0..points - 1).map(|k| t_min * (ratio * k as f64).exp()))
                    .collect()
            }
            SampleGrid::Explicit(v) => v.clone(),
        };
        Ok(times)
    }

    /// Drops times that map onto the same step count as their predecessor.
    pub fn distinct_steps(times: Vec<f64>, n: usize) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(times.len());
        let mut last = None;
        for t in times {
            let s = steps_for_time(t, n);
            if last != Some(s) {
                out.push(t);
                last = Some(s);
            }
        }
        out
    }
}

/// Settings of the decay-horizon search.
#[derive(Clone, Debug)]
pub struct HorizonSearch {
    /// Trajectories in the pilot ensemble.
    pub pilot_size: u64,
    /// First horizon tried, in time units.
    pub initial_t: f64,
    /// Pilot samples per horizon.
    pub points: usize,
    /// Fraction of the trailing curve that must sit on the plateau.
    pub window: f64,
    /// Allowed distance from 1/2, in units of `sigma_F`.
    pub tolerance_sigmas: f64,
}

impl Default for HorizonSearch {
    fn default() -> Self {
        Self {
            pilot_size: 1000,
            initial_t: 4.0,
            points: 200,
            window: 0.2,
            tolerance_sigmas: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Horizon {
    pub t_max: f64,
    /// The step budget ran out before the plateau was reached.
    pub truncated: bool,
}

/// Finds a time by which the fidelity has decayed to its plateau.
///
/// A pilot ensemble is advanced through horizons `T, 2T, 4T, ...` (states are
/// kept between horizons, so no work is repeated) until the trailing
/// `window` of its random-choice fidelity curve stays within
/// `tolerance_sigmas · sigma_F` of 1/2, or the step budget is exhausted.
pub fn find_decay_horizon(config: &TrajectoryConfig, search: &HorizonSearch) -> Result<Horizon> {
    config.validate()?;
    let n = config.geometry.n();
    let engine = Glauber::new(config.couplings, config.temperature);
    let m = search.pilot_size.max(1);
    let bit = config.encoded_bit;

    struct Walker {
        state: SpinState,
        rng: TrajectoryRng,
        coins: TrajectoryRng,
        magnetization: i64,
        steps: u64,
    }
    let mut walkers: Vec<Walker> = (0..m)
        .map(|i| {
            let state = SpinState::encode(config.geometry.clone(), bit);
            Walker {
                magnetization: state.magnetization(),
                state,
                rng: trajectory_rng(config.master_seed, i),
                coins: TrajectoryRng::seed_from_u64(readout_seed(config.master_seed, i)),
                steps: 0,
            }
        })
        .collect();

    let mut t_max = search.initial_t.max(1.0 / n as f64);
    loop {
        let start = if walkers[0].steps == 0 {
            0.0
        } else {
            t_max / 2.0
        };
        let times: Vec<f64> = (1..=search.points)
            .map(|k| start + (t_max - start) * k as f64 / search.points as f64)
            .collect();
        if steps_for_time(t_max, n) > config.step_budget {
            return Ok(Horizon {
                t_max: t_max / 2.0,
                truncated: true,
            });
        }
        let successes: Vec<u64> = walkers
            .par_iter_mut()
            .map(|w| {
                let mut hits = vec![0u64; times.len()];
                for (k, &t) in times.iter().enumerate() {
                    let target = steps_for_time(t, n);
                    while w.steps < target {
                        if let Some(site) = engine.attempt(&mut w.state, &mut w.rng) {
                            w.magnetization += 2 * w.state.spin(site) as i64;
                        }
                        w.steps += 1;
                    }
                    let r = readout_from_magnetization(
                        w.magnetization,
                        bit,
                        ReadoutPolicy::RandomChoice,
                        &mut w.coins,
                    );
                    hits[k] = (r == Readout::Correct) as u64;
                }
                hits
            })
            .reduce(
                || vec![0u64; times.len()],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );

        let trailing_from = times
            .iter()
            .position(|&t| t >= t_max * (1.0 - search.window))
            .unwrap_or(0);
        let settled = successes[trailing_from..].iter().all(|&c| {
            let f = c as f64 / m as f64;
            (f - 0.5).abs() <= search.tolerance_sigmas * sigma_f(f, m)
        });
        if settled {
            return Ok(Horizon {
                t_max,
                truncated: false,
            });
        }
        t_max *= 2.0;
    }
}
