//! Exact master-equation propagation for small lattices.
//!
//! The full probability vector over all `2^N` configurations is pushed
//! through the one-step operator of the Monte-Carlo engine: pick each site
//! with probability `1/N`, flip it with the Glauber probability. Because the
//! propagation is step-for-step identical to the sampler, sampled and exact
//! fidelities agree up to sampling noise alone.
//!
//! Configuration `c` has spin `i` up iff bit `i` of `c` is set.

use std::sync::Arc;

use crate::curve::{CurveMeta, FidelityCurve};
use crate::dynamics::{flip_probability, steps_for_time, Temperature};
use crate::error::{Error, Result};
use crate::lattice::{Bit, Couplings, Geometry, ReadoutPolicy, SpinState};

/// Largest lattice handled by default.
pub const DEFAULT_SITE_CAP: usize = 16;

/// Largest lattice for which the dense matrix may be materialized.
pub const DENSE_SITE_CAP: usize = 12;

fn check_cap(geometry: &Geometry, cap: usize) -> Result<()> {
    if geometry.n() > cap || geometry.n() > 30 {
        return Err(Error::TooManySites {
            n: geometry.n(),
            cap,
        });
    }
    Ok(())
}

/// Magnetization of configuration `mask` on `n` sites.
#[inline]
pub fn mask_magnetization(mask: usize, n: usize) -> i64 {
    2 * mask.count_ones() as i64 - n as i64
}

/// A probability distribution over configurations.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactDistribution {
    pub geometry: Arc<Geometry>,
    pub probabilities: Vec<f64>,
}

impl ExactDistribution {
    /// All mass on the state encoding `bit`.
    pub fn encoded(geometry: Arc<Geometry>, bit: Bit) -> Result<Self> {
        check_cap(&geometry, DEFAULT_SITE_CAP)?;
        let size = 1usize << geometry.n();
        let mut probabilities = vec![0.0; size];
        let mask = match bit {
            Bit::One => size - 1,
            Bit::Zero => 0,
        };
        probabilities[mask] = 1.0;
        Ok(Self {
            geometry,
            probabilities,
        })
    }

    /// Boltzmann weights `exp(-E/kT) / Z`.
    pub fn boltzmann(
        geometry: Arc<Geometry>,
        couplings: Couplings,
        temperature: Temperature,
    ) -> Result<Self> {
        check_cap(&geometry, DEFAULT_SITE_CAP)?;
        let size = 1usize << geometry.n();
        let energies: Vec<f64> = (0..size)
            .map(|mask| {
                SpinState::from_bitmask(geometry.clone(), mask as u64).total_energy(&couplings)
            })
            .collect();
        let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut probabilities: Vec<f64> = energies
            .iter()
            .map(|e| (-(e - e_min) / temperature.kt()).exp())
            .collect();
        let z: f64 = probabilities.iter().sum();
        probabilities.iter_mut().for_each(|p| *p /= z);
        Ok(Self {
            geometry,
            probabilities,
        })
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Probability that the majority vote returns `bit`.
    pub fn fidelity(&self, bit: Bit, policy: ReadoutPolicy) -> f64 {
        let n = self.geometry.n();
        let sign = bit.spin() as i64;
        let tie_weight = match policy {
            ReadoutPolicy::RandomChoice => 0.5,
            ReadoutPolicy::DeclareFailure => 0.0,
        };
        self.probabilities
            .iter()
            .enumerate()
            .map(|(mask, &p)| {
                let aligned = mask_magnetization(mask, n) * sign;
                if aligned > 0 {
                    p
                } else if aligned == 0 {
                    tie_weight * p
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.probabilities
            .iter()
            .zip(&other.probabilities)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One-Monte-Carlo-step transition operator, stored as per-site flip
/// probabilities and applied without forming the matrix.
#[derive(Clone, Debug)]
pub struct TransitionOperator {
    geometry: Arc<Geometry>,
    // flip[mask * n + site]
    flip: Vec<f64>,
}

impl TransitionOperator {
    pub fn new(
        geometry: Arc<Geometry>,
        couplings: Couplings,
        temperature: Temperature,
    ) -> Result<Self> {
        Self::with_cap(geometry, couplings, temperature, DEFAULT_SITE_CAP)
    }

    pub fn with_cap(
        geometry: Arc<Geometry>,
        couplings: Couplings,
        temperature: Temperature,
        cap: usize,
    ) -> Result<Self> {
        check_cap(&geometry, cap)?;
        let n = geometry.n();
        let size = 1usize << n;
        let mut flip = Vec::with_capacity(size * n);
        for mask in 0..size {
            let state = SpinState::from_bitmask(geometry.clone(), mask as u64);
            for site in 0..n {
                let de = state.delta_energy(site, &couplings)?;
                flip.push(flip_probability(de, temperature.kt())?);
            }
        }
        Ok(Self { geometry, flip })
    }

    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geometry
    }

    pub fn size(&self) -> usize {
        1 << self.geometry.n()
    }

    /// Probability of moving from `from` to `to` in one step.
    pub fn entry(&self, to: usize, from: usize) -> f64 {
        let n = self.geometry.n();
        let inv_n = 1.0 / n as f64;
        if to == from {
            (0..n)
                .map(|i| (1.0 - self.flip[from * n + i]) * inv_n)
                .sum()
        } else {
            let diff = to ^ from;
            if diff.count_ones() == 1 {
                self.flip[from * n + diff.trailing_zeros() as usize] * inv_n
            } else {
                0.0
            }
        }
    }

    /// One step of the master equation.
    pub fn apply(&self, dist: &ExactDistribution) -> ExactDistribution {
        let mut out = vec![0.0; self.size()];
        self.apply_into(&dist.probabilities, &mut out);
        ExactDistribution {
            geometry: dist.geometry.clone(),
            probabilities: out,
        }
    }

    fn apply_into(&self, p: &[f64], out: &mut [f64]) {
        let n = self.geometry.n();
        let inv_n = 1.0 / n as f64;
        for (mask, slot) in out.iter_mut().enumerate() {
            let row = &self.flip[mask * n..(mask + 1) * n];
            let mut acc = 0.0;
            for (site, &f) in row.iter().enumerate() {
                let other = mask ^ (1 << site);
                acc += (1.0 - f) * p[mask] + self.flip[other * n + site] * p[other];
            }
            *slot = acc * inv_n;
        }
    }

    /// Applies the operator `steps` times.
    pub fn propagate(&self, dist: &ExactDistribution, steps: u64) -> ExactDistribution {
        let mut cur = dist.probabilities.clone();
        let mut next = vec![0.0; cur.len()];
        for _ in 0..steps {
            self.apply_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        ExactDistribution {
            geometry: dist.geometry.clone(),
            probabilities: cur,
        }
    }

    /// Column-stochastic dense matrix, `m[to * size + from]`.
    pub fn to_dense(&self) -> Result<DenseOperator> {
        check_cap(&self.geometry, DENSE_SITE_CAP)?;
        let size = self.size();
        let mut m = vec![0.0; size * size];
        for from in 0..size {
            m[from * size + from] = self.entry(from, from);
            for site in 0..self.geometry.n() {
                let to = from ^ (1 << site);
                m[to * size + from] = self.entry(to, from);
            }
        }
        Ok(DenseOperator { size, m })
    }
}

/// Dense matrix form of a transition operator, used for repeated squaring.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    size: usize,
    m: Vec<f64>,
}

impl DenseOperator {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, to: usize, from: usize) -> f64 {
        self.m[to * self.size + from]
    }

    /// Largest deviation of a column sum from 1.
    pub fn stochasticity_error(&self) -> f64 {
        (0..self.size)
            .map(|from| {
                let s: f64 = (0..self.size).map(|to| self.get(to, from)).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.size;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.m[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.m[k * n..(k + 1) * n];
                for (dst, &b) in m[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *dst += a * b;
                }
            }
        }
        Self { size: n, m }
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        (0..self.size)
            .map(|to| {
                self.m[to * self.size..(to + 1) * self.size]
                    .iter()
                    .zip(p)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `self^k` by binary exponentiation, with the worst column-sum error
    /// seen along the way. No renormalization is applied.
    pub fn power(&self, mut k: u64) -> (Self, f64) {
        let mut result = Self::identity(self.size);
        let mut base = self.clone();
        let mut worst: f64 = 0.0;
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base);
                worst = worst.max(result.stochasticity_error());
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
                worst = worst.max(base.stochasticity_error());
            }
        }
        (result, worst)
    }

    pub fn identity(size: usize) -> Self {
        let mut m = vec![0.0; size * size];
        for i in 0..size {
            m[i * size + i] = 1.0;
        }
        Self { size, m }
    }
}

/// `max |Tπ - π|` for the Boltzmann vector `π`.
pub fn stationarity_residual(
    geometry: Arc<Geometry>,
    couplings: Couplings,
    temperature: Temperature,
) -> Result<f64> {
    let op = TransitionOperator::new(geometry.clone(), couplings, temperature)?;
    let pi = ExactDistribution::boltzmann(geometry, couplings, temperature)?;
    Ok(op.apply(&pi).max_abs_diff(&pi))
}

/// Power iteration from the uniform vector. Returns the limit and the final
/// one-step residual `max |Tv - v|`.
pub fn power_iteration(
    op: &TransitionOperator,
    tolerance: f64,
    max_steps: u64,
) -> (ExactDistribution, f64) {
    let size = op.size();
    let mut v = ExactDistribution {
        geometry: op.geometry().clone(),
        probabilities: vec![1.0 / size as f64; size],
    };
    let mut residual = f64::INFINITY;
    for _ in 0..max_steps {
        let next = op.apply(&v);
        residual = next.max_abs_diff(&v);
        v = next;
        if residual <= tolerance {
            break;
        }
    }
    (v, residual)
}

/// Exact fidelity curve starting from the encoded state.
///
/// The returned curve has `exact = true`, `M = 0` and zero uncertainties.
pub fn exact_fidelity(
    geometry: Arc<Geometry>,
    couplings: Couplings,
    temperature: Temperature,
    sample_times: &[f64],
    policy: ReadoutPolicy,
    bit: Bit,
) -> Result<FidelityCurve> {
    if sample_times.windows(2).any(|w| w[1] <= w[0]) || sample_times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidArgument(
            "sample times must be nonnegative and strictly ascending".into(),
        ));
    }
    let op = TransitionOperator::new(geometry.clone(), couplings, temperature)?;
    let n = geometry.n();
    let mut dist = ExactDistribution::encoded(geometry.clone(), bit)?;
    let mut done = 0u64;
    let mut fidelity = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        let target = steps_for_time(t, n);
        dist = op.propagate(&dist, target - done);
        done = target;
        fidelity.push(dist.fidelity(bit, policy));
    }
    Ok(FidelityCurve {
        meta: CurveMeta {
            dimension: geometry.dimension(),
            side: geometry.side(),
            n,
            kt: temperature.kt(),
            couplings,
            policy,
            seed: 0,
            exact: true,
            truncated: false,
            extra: Default::default(),
        },
        ensemble_size: 0,
        times: sample_times.to_vec(),
        fidelity,
        sigma: vec![0.0; sample_times.len()],
    })
}
