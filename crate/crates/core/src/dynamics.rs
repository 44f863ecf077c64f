//! Single-spin-flip Glauber dynamics.
//!
//! One Monte-Carlo step picks a site uniformly at random and flips it with
//! probability `1 / (1 + exp(ΔE / kT))`. Physical time is `steps / N`, so each
//! site receives on average one update attempt per unit time.
//!
//! # Random streams
//!
//! Trajectory `i` of an ensemble seeded with `master_seed` draws from a
//! xoshiro256++ generator seeded with [`stream_seed`]`(master_seed, i)`.
//! Every step consumes exactly two 64-bit outputs, in this order:
//!
//! 1. site index, `floor(u * N / 2^64)`;
//! 2. acceptance variate, the top 53 bits scaled into `[0, 1)`; the flip
//!    happens iff the variate is below the Glauber probability.
//!
//! Tie-breaking coins for the majority readout come from a second generator
//! seeded with [`readout_seed`], so the spin dynamics of a trajectory do not
//! depend on the readout policy.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::lattice::{
    readout_from_magnetization, Bit, Couplings, Geometry, Readout, ReadoutPolicy, SpinState,
};

/// `kT_c / J` of the 2D square-lattice Ising model, `2 / ln(1 + √2)`.
pub const ONSAGER_CRITICAL_KT: f64 = 2.269_185_314_213_022;

/// Default per-trajectory cap on attempted flips.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000_000;

pub type TrajectoryRng = Xoshiro256PlusPlus;

/// Thermal energy `kT`, strictly positive.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(kt: f64) -> Result<Self> {
        if kt > 0.0 && kt.is_finite() {
            Ok(Self(kt))
        } else {
            Err(Error::NonPositiveTemperature(kt))
        }
    }

    pub fn kt(self) -> f64 {
        self.0
    }

    /// Whether this is below the 2D ordering temperature.
    pub fn is_below_onsager(self) -> bool {
        self.0 < ONSAGER_CRITICAL_KT
    }
}

/// Glauber acceptance probability `1 / (1 + exp(ΔE / kT))`.
///
/// Saturates cleanly to 0 or 1 when the exponent is out of range.
pub fn flip_probability(delta_e: f64, kt: f64) -> Result<f64> {
    if !(kt > 0.0) {
        return Err(Error::NonPositiveTemperature(kt));
    }
    Ok(glauber(delta_e / kt))
}

#[inline]
fn glauber(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the dynamics stream of trajectory `index`.
pub fn stream_seed(master_seed: u64, index: u64) -> u64 {
    mix64(mix64(master_seed) ^ mix64(index.wrapping_mul(2)))
}

/// Seed of the tie-breaking stream of trajectory `index`.
pub fn readout_seed(master_seed: u64, index: u64) -> u64 {
    mix64(mix64(master_seed) ^ mix64(index.wrapping_mul(2).wrapping_add(1)))
}

pub fn trajectory_rng(master_seed: u64, index: u64) -> TrajectoryRng {
    TrajectoryRng::seed_from_u64(stream_seed(master_seed, index))
}

/// Precomputed acceptance probabilities for one `(couplings, kT)` pair.
///
/// Coordination numbers never exceed four, so the local field of a site takes
/// one of nine values and the flip probability is a table lookup.
#[derive(Clone, Debug)]
pub struct Glauber {
    couplings: Couplings,
    temperature: Temperature,
    // [spin down | spin up][neighbor sum + 4]
    table: [[f64; 9]; 2],
}

impl Glauber {
    pub fn new(couplings: Couplings, temperature: Temperature) -> Self {
        let mut table = [[0.0; 9]; 2];
        for (row, s) in [(0usize, -1.0f64), (1, 1.0)] {
            for (k, entry) in table[row].iter_mut().enumerate() {
                let sum = k as f64 - 4.0;
                let delta_e = 2.0 * s * (couplings.j * sum + couplings.h);
                *entry = glauber(delta_e / temperature.kt());
            }
        }
        Self {
            couplings,
            temperature,
            table,
        }
    }

    pub fn couplings(&self) -> Couplings {
        self.couplings
    }

    pub fn temperature(&self) -> Temperature {
        self.temperature
    }

    /// Probability that an update attempt at `site` flips it.
    #[inline]
    pub fn acceptance(&self, state: &SpinState, site: usize) -> f64 {
        let row = (state.spin(site) > 0) as usize;
        self.table[row][(state.neighbor_sum(site) + 4) as usize]
    }

    /// One Monte-Carlo step. Returns whether the chosen spin flipped.
    #[inline]
    pub fn step<R: RngCore + ?Sized>(&self, state: &mut SpinState, rng: &mut R) -> bool {
        self.attempt(state, rng).is_some()
    }

    /// One Monte-Carlo step, returning the flipped site if any.
    #[inline]
    pub fn attempt<R: RngCore + ?Sized>(
        &self,
        state: &mut SpinState,
        rng: &mut R,
    ) -> Option<usize> {
        let n = state.spins().len() as u64;
        let site = ((rng.next_u64() as u128 * n as u128) >> 64) as usize;
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        if u < self.acceptance(state, site) {
            state.flip(site);
            Some(site)
        } else {
            None
        }
    }
}

/// Convenience single step; builds the acceptance table on every call.
pub fn mc_step<R: RngCore + ?Sized>(
    state: &mut SpinState,
    temperature: Temperature,
    couplings: Couplings,
    rng: &mut R,
) -> bool {
    Glauber::new(couplings, temperature).step(state, rng)
}

/// Cumulative step count at which physical time `t` is sampled: `⌈t·N⌉`.
///
/// Products within a relative `1e-9` of an integer are snapped to it, so
/// decimal sample times such as `0.01` with `N = 100` land on step 1.
pub fn steps_for_time(t: f64, n: usize) -> u64 {
    let x = t * n as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// Everything needed to run one trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryConfig {
    pub geometry: Arc<Geometry>,
    pub couplings: Couplings,
    pub temperature: Temperature,
    pub encoded_bit: Bit,
    pub master_seed: u64,
    pub sample_times: Vec<f64>,
    pub step_budget: u64,
}

impl TrajectoryConfig {
    pub fn new(
        geometry: Arc<Geometry>,
        couplings: Couplings,
        temperature: Temperature,
        master_seed: u64,
        sample_times: Vec<f64>,
    ) -> Result<Self> {
        let cfg = Self {
            geometry,
            couplings,
            temperature,
            encoded_bit: Bit::One,
            master_seed,
            sample_times,
            step_budget: DEFAULT_STEP_BUDGET,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_times.is_empty() {
            return Err(Error::InvalidArgument("no sample times".into()));
        }
        if let Some(t) = self
            .sample_times
            .iter()
            .find(|t| !(**t >= 0.0) || !t.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "sample time {t} is negative or not finite"
            )));
        }
        if self.sample_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "sample times must be strictly ascending".into(),
            ));
        }
        Ok(())
    }

    /// Step counts of each sample time.
    pub fn sample_steps(&self) -> Vec<u64> {
        self.sample_times
            .iter()
            .map(|&t| steps_for_time(t, self.geometry.n()))
            .collect()
    }

    /// Number of leading sample times reachable within the step budget.
    pub fn reachable_samples(&self) -> usize {
        self.sample_steps()
            .iter()
            .take_while(|&&s| s <= self.step_budget)
            .count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutRecord {
    pub time: f64,
    pub steps: u64,
    pub magnetization: i64,
    pub readout: Readout,
}

/// Evolves trajectory `stream` and reports the magnetization at every
/// reachable sample time. Returns the number of samples visited.
pub(crate) fn simulate_magnetizations(
    config: &TrajectoryConfig,
    engine: &Glauber,
    stream: u64,
    mut on_sample: impl FnMut(usize, i64),
) -> usize {
    let mut state = SpinState::encode(config.geometry.clone(), config.encoded_bit);
    let mut rng = trajectory_rng(config.master_seed, stream);
    let mut magnetization = state.magnetization();
    let mut done: u64 = 0;
    let mut visited = 0;
    for (k, &t) in config.sample_times.iter().enumerate() {
        let target = steps_for_time(t, config.geometry.n());
        if target > config.step_budget {
            break;
        }
        while done < target {
            if let Some(site) = engine.attempt(&mut state, &mut rng) {
                // the flipped spin already holds its new value
                magnetization += 2 * state.spin(site) as i64;
            }
            done += 1;
        }
        on_sample(k, magnetization);
        visited += 1;
    }
    visited
}

/// Runs one trajectory from the encoded state and records the readout at each
/// reachable sample time.
pub fn run_trajectory(
    config: &TrajectoryConfig,
    policy: ReadoutPolicy,
    stream: u64,
) -> Result<Vec<ReadoutRecord>> {
    config.validate()?;
    let engine = Glauber::new(config.couplings, config.temperature);
    let mut readout_rng = TrajectoryRng::seed_from_u64(readout_seed(config.master_seed, stream));
    let steps = config.sample_steps();
    let mut records = Vec::with_capacity(config.sample_times.len());
    simulate_magnetizations(config, &engine, stream, |k, m| {
        records.push(ReadoutRecord {
            time: config.sample_times[k],
            steps: steps[k],
            magnetization: m,
            readout: readout_from_magnetization(m, config.encoded_bit, policy, &mut readout_rng),
        });
    });
    Ok(records)
}
