//! Free-boundary Ising chains and square lattices.
//!
//! Sites are indexed row-major in 2D (`site = row * L + col`). Neighbor lists
//! are built once per [`Geometry`] and shared by every state on it.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

/// Lattice dimensionality. Only chains and square lattices are supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dimension {
    One,
    Two,
}

impl Dimension {
    pub fn as_usize(self) -> usize {
        match self {
            Dimension::One => 1,
            Dimension::Two => 2,
        }
    }

    pub fn from_usize(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Dimension::One),
            2 => Ok(Dimension::Two),
            other => Err(Error::InvalidGeometry(format!(
                "dimension must be 1 or 2, got {other}"
            ))),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_usize())
    }
}

/// Shape of the lattice plus its precomputed free-boundary neighbor table.
#[derive(Clone, Debug)]
pub struct Geometry {
    dimension: Dimension,
    side: usize,
    n: usize,
    neighbors: Vec<[u32; 4]>,
    degree: Vec<u8>,
}

impl PartialEq for Geometry {
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension && self.side == other.side
    }
}

impl Eq for Geometry {}

impl Geometry {
    pub fn new(dimension: Dimension, side: usize) -> Result<Self> {
        if side < 1 {
            return Err(Error::InvalidGeometry(format!(
                "side length must be at least 1, got {side}"
            )));
        }
        let n = match dimension {
            Dimension::One => side,
            Dimension::Two => side
                .checked_mul(side)
                .ok_or_else(|| Error::InvalidGeometry(format!("side length {side} overflows")))?,
        };
        if n > u32::MAX as usize {
            return Err(Error::InvalidGeometry(format!("{n} sites is too many")));
        }

        let mut neighbors = vec![[0u32; 4]; n];
        let mut degree = vec![0u8; n];
        let mut push = |site: usize, other: usize| {
            let d = degree[site] as usize;
            neighbors[site][d] = other as u32;
            degree[site] += 1;
        };
        match dimension {
            Dimension::One => {
                for i in 0..n {
                    if i > 0 {
                        push(i, i - 1);
                    }
                    if i + 1 < n {
                        push(i, i + 1);
                    }
                }
            }
            Dimension::Two => {
                let l = side;
                for row in 0..l {
                    for col in 0..l {
                        let i = row * l + col;
                        if row > 0 {
                            push(i, i - l);
                        }
                        if col > 0 {
                            push(i, i - 1);
                        }
                        if col + 1 < l {
                            push(i, i + 1);
                        }
                        if row + 1 < l {
                            push(i, i + l);
                        }
                    }
                }
            }
        }

        Ok(Self {
            dimension,
            side,
            n,
            neighbors,
            degree,
        })
    }

    pub fn chain(length: usize) -> Result<Self> {
        Self::new(Dimension::One, length)
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(Dimension::Two, side)
    }

    /// Builds the geometry holding `n` sites: a chain of length `n` in 1D,
    /// an `√n × √n` square in 2D (which requires `n` to be a perfect square).
    pub fn with_sites(dimension: Dimension, n: usize) -> Result<Self> {
        match dimension {
            Dimension::One => Self::chain(n),
            Dimension::Two => {
                let side = (n as f64).sqrt().round() as usize;
                if side * side != n {
                    return Err(Error::InvalidGeometry(format!(
                        "2D site count must be a perfect square, got {n}"
                    )));
                }
                Self::square(side)
            }
        }
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Total number of sites.
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn neighbors(&self, site: usize) -> &[u32] {
        &self.neighbors[site][..self.degree[site] as usize]
    }

    /// Number of nearest-neighbor bonds: `N - 1` in 1D, `2L(L - 1)` in 2D.
    pub fn bond_count(&self) -> usize {
        self.degree.iter().map(|&d| d as usize).sum::<usize>() / 2
    }

    /// Each bond once, as `(i, j)` with `i < j`.
    pub fn bonds(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .map(|&j| j as usize)
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }
}

/// Coupling constants of the Hamiltonian `-J Σ s_i s_j - h Σ s_i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Couplings {
    pub j: f64,
    pub h: f64,
}

impl Default for Couplings {
    fn default() -> Self {
        Self { j: 1.0, h: 0.0 }
    }
}

impl Couplings {
    pub fn new(j: f64, h: f64) -> Self {
        Self { j, h }
    }

    /// `J = 0, h = 0`: independent spins.
    pub fn non_interacting() -> Self {
        Self { j: 0.0, h: 0.0 }
    }

    /// Results with a nonzero field have not been checked against anything.
    pub fn is_unvalidated(&self) -> bool {
        self.h != 0.0
    }
}

/// The stored bit. `One` is encoded as all spins up.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn from_u8(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Bit::Zero),
            1 => Ok(Bit::One),
            other => Err(Error::InvalidArgument(format!(
                "bit must be 0 or 1, got {other}"
            ))),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }

    /// Spin value every site takes when this bit is encoded.
    pub fn spin(self) -> i8 {
        match self {
            Bit::Zero => -1,
            Bit::One => 1,
        }
    }
}

/// How a majority vote with zero magnetization is resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReadoutPolicy {
    /// Guess the bit with a fair coin.
    RandomChoice,
    /// Count the tie as a failed readout.
    DeclareFailure,
}

impl ReadoutPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ReadoutPolicy::RandomChoice => "random-choice",
            ReadoutPolicy::DeclareFailure => "declare-failure",
        }
    }
}

impl fmt::Display for ReadoutPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ReadoutPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "random-choice" | "random" => Ok(ReadoutPolicy::RandomChoice),
            "declare-failure" | "failure" | "fail" => Ok(ReadoutPolicy::DeclareFailure),
            other => Err(Error::InvalidArgument(format!(
                "unknown tie policy `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Readout {
    Correct,
    Incorrect,
}

/// A spin configuration. Every entry is `+1` or `-1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinState {
    geometry: Arc<Geometry>,
    spins: Vec<i8>,
}

impl SpinState {
    /// All spins aligned with the encoded bit.
    pub fn encode(geometry: Arc<Geometry>, bit: Bit) -> Self {
        let spins = vec![bit.spin(); geometry.n()];
        Self { geometry, spins }
    }

    pub fn from_spins(geometry: Arc<Geometry>, spins: Vec<i8>) -> Result<Self> {
        if spins.len() != geometry.n() {
            return Err(Error::InvalidArgument(format!(
                "expected {} spins, got {}",
                geometry.n(),
                spins.len()
            )));
        }
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument(format!(
                "spin value {bad} is not ±1"
            )));
        }
        Ok(Self { geometry, spins })
    }

    /// Site `i` is up iff bit `i` of `mask` is set.
    pub fn from_bitmask(geometry: Arc<Geometry>, mask: u64) -> Self {
        let spins = (0..geometry.n())
            .map(|i| if (mask >> i) & 1 == 1 { 1 } else { -1 })
            .collect();
        Self { geometry, spins }
    }

    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geometry
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    #[inline]
    pub fn spin(&self, site: usize) -> i8 {
        self.spins[site]
    }

    #[inline]
    pub fn flip(&mut self, site: usize) {
        self.spins[site] = -self.spins[site];
    }

    #[inline]
    pub(crate) fn neighbor_sum(&self, site: usize) -> i32 {
        self.geometry
            .neighbors(site)
            .iter()
            .map(|&n| self.spins[n as usize] as i32)
            .sum()
    }

    pub fn total_energy(&self, couplings: &Couplings) -> f64 {
        let bond_sum: i64 = self
            .geometry
            .bonds()
            .map(|(i, j)| (self.spins[i] * self.spins[j]) as i64)
            .sum();
        -couplings.j * bond_sum as f64 - couplings.h * self.magnetization() as f64
    }

    /// Energy change from flipping `site`, computed from its neighbors only.
    pub fn delta_energy(&self, site: usize, couplings: &Couplings) -> Result<f64> {
        if site >= self.spins.len() {
            return Err(Error::SiteOutOfRange {
                site,
                n: self.spins.len(),
            });
        }
        let s = self.spins[site] as f64;
        Ok(2.0 * s * (couplings.j * self.neighbor_sum(site) as f64 + couplings.h))
    }

    pub fn magnetization(&self) -> i64 {
        self.spins.iter().map(|&s| s as i64).sum()
    }

    pub fn majority_readout<R: Rng + ?Sized>(
        &self,
        encoded: Bit,
        policy: ReadoutPolicy,
        rng: &mut R,
    ) -> Readout {
        readout_from_magnetization(self.magnetization(), encoded, policy, rng)
    }
}

/// Majority vote given only the magnetization. The rng is touched only on a
/// tie under [`ReadoutPolicy::RandomChoice`].
pub fn readout_from_magnetization<R: Rng + ?Sized>(
    magnetization: i64,
    encoded: Bit,
    policy: ReadoutPolicy,
    rng: &mut R,
) -> Readout {
    let aligned = magnetization * encoded.spin() as i64;
    if aligned > 0 {
        Readout::Correct
    } else if aligned < 0 {
        Readout::Incorrect
    } else {
        match policy {
            ReadoutPolicy::DeclareFailure => Readout::Incorrect,
            ReadoutPolicy::RandomChoice => {
                if rng.gen::<bool>() {
                    Readout::Correct
                } else {
                    Readout::Incorrect
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn geo(d: Dimension, l: usize) -> Arc<Geometry> {
        Arc::new(Geometry::new(d, l).unwrap())
    }

    #[test]
    fn encode_examples() {
        let s = SpinState::encode(geo(Dimension::One, 4), Bit::One);
        assert_eq!(s.spins(), &[1, 1, 1, 1]);
        let s = SpinState::encode(geo(Dimension::Two, 2), Bit::Zero);
        assert_eq!(s.spins(), &[-1, -1, -1, -1]);
        let s = SpinState::encode(geo(Dimension::One, 100), Bit::One);
        assert!(s.spins().iter().all(|&x| x == 1));
        assert_eq!(s.spins().len(), 100);
    }

    #[test]
    fn zero_side_is_rejected() {
        assert!(matches!(
            Geometry::new(Dimension::One, 0),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(Geometry::with_sites(Dimension::Two, 10).is_err());
        assert_eq!(
            Geometry::with_sites(Dimension::Two, 144).unwrap().side(),
            12
        );
    }

    #[test]
    fn neighbor_counts_honor_free_boundaries() {
        let g = Geometry::chain(5).unwrap();
        let degrees: Vec<_> = (0..5).map(|i| g.neighbors(i).len()).collect();
        assert_eq!(degrees, vec![1, 2, 2, 2, 1]);

        let g = Geometry::square(4).unwrap();
        assert_eq!(g.neighbors(0).len(), 2);
        assert_eq!(g.neighbors(3).len(), 2);
        assert_eq!(g.neighbors(12).len(), 2);
        assert_eq!(g.neighbors(15).len(), 2);
        assert_eq!(g.neighbors(1).len(), 3);
        assert_eq!(g.neighbors(4).len(), 3);
        assert_eq!(g.neighbors(5).len(), 4);
        assert_eq!(g.neighbors(5), &[1, 4, 6, 9]);

        assert_eq!(Geometry::chain(1).unwrap().neighbors(0).len(), 0);
        assert_eq!(Geometry::square(1).unwrap().bond_count(), 0);
    }

    #[test]
    fn bond_counts() {
        for n in 1..20 {
            assert_eq!(Geometry::chain(n).unwrap().bond_count(), n - 1);
        }
        for l in 1..12 {
            let g = Geometry::square(l).unwrap();
            assert_eq!(g.bond_count(), 2 * l * (l - 1));
            assert_eq!(g.bonds().count(), g.bond_count());
        }
    }

    #[test]
    fn energy_examples() {
        let c = Couplings::default();
        for n in [1, 2, 7, 100] {
            let s = SpinState::encode(geo(Dimension::One, n), Bit::One);
            assert_eq!(s.total_energy(&c), -((n - 1) as f64));
        }
        for l in [1, 2, 5, 10] {
            let s = SpinState::encode(geo(Dimension::Two, l), Bit::One);
            assert_eq!(s.total_energy(&c), -2.0 * (l * (l - 1)) as f64);
        }
        let s = SpinState::from_spins(geo(Dimension::One, 3), vec![1, -1, 1]).unwrap();
        assert_eq!(s.total_energy(&c), 2.0);
    }

    #[test]
    fn delta_energy_examples() {
        let c = Couplings::default();
        let s = SpinState::encode(geo(Dimension::One, 6), Bit::One);
        assert_eq!(s.delta_energy(3, &c).unwrap(), 4.0);
        assert_eq!(s.delta_energy(0, &c).unwrap(), 2.0);
        assert_eq!(s.delta_energy(5, &c).unwrap(), 2.0);

        let s = SpinState::encode(geo(Dimension::Two, 4), Bit::One);
        assert_eq!(s.delta_energy(5, &c).unwrap(), 8.0);
        assert_eq!(s.delta_energy(1, &c).unwrap(), 6.0);
        assert_eq!(s.delta_energy(0, &c).unwrap(), 4.0);

        assert!(matches!(
            s.delta_energy(16, &c),
            Err(Error::SiteOutOfRange { site: 16, n: 16 })
        ));
    }

    #[test]
    fn delta_energy_matches_brute_force_exhaustively() {
        let couplings = [Couplings::default(), Couplings::new(0.7, 0.3)];
        let geometries = [
            geo(Dimension::One, 1),
            geo(Dimension::One, 5),
            geo(Dimension::One, 12),
            geo(Dimension::Two, 2),
            geo(Dimension::Two, 3),
        ];
        for g in &geometries {
            for c in &couplings {
                for mask in 0..(1u64 << g.n()) {
                    let s = SpinState::from_bitmask(g.clone(), mask);
                    let e0 = s.total_energy(c);
                    for site in 0..g.n() {
                        let mut f = s.clone();
                        f.flip(site);
                        let de = s.delta_energy(site, c).unwrap();
                        assert!((de - (f.total_energy(c) - e0)).abs() < 1e-12);
                        assert_eq!(f.delta_energy(site, c).unwrap(), -de);
                    }
                }
            }
        }
    }

    #[test]
    fn magnetization_examples() {
        let s = SpinState::encode(geo(Dimension::Two, 3), Bit::One);
        assert_eq!(s.magnetization(), 9);
        let s = SpinState::from_spins(geo(Dimension::One, 2), vec![1, -1]).unwrap();
        assert_eq!(s.magnetization(), 0);
        let s = SpinState::from_spins(geo(Dimension::Two, 3), vec![1, 1, 1, 1, 1, -1, -1, -1, -1])
            .unwrap();
        assert_eq!(s.magnetization(), 1);
    }

    #[test]
    fn invalid_spin_values_rejected() {
        assert!(SpinState::from_spins(geo(Dimension::One, 2), vec![1, 0]).is_err());
        assert!(SpinState::from_spins(geo(Dimension::One, 2), vec![1]).is_err());
    }

    #[test]
    fn readout_examples() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
        let g = geo(Dimension::One, 100);
        let spins: Vec<i8> = (0..100).map(|i| if i < 60 { 1 } else { -1 }).collect();
        let s = SpinState::from_spins(g.clone(), spins).unwrap();
        assert_eq!(
            s.majority_readout(Bit::One, ReadoutPolicy::DeclareFailure, &mut rng),
            Readout::Correct
        );
        assert_eq!(
            s.majority_readout(Bit::Zero, ReadoutPolicy::DeclareFailure, &mut rng),
            Readout::Incorrect
        );

        let spins: Vec<i8> = (0..100).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let tied = SpinState::from_spins(g.clone(), spins).unwrap();
        assert_eq!(
            tied.majority_readout(Bit::One, ReadoutPolicy::DeclareFailure, &mut rng),
            Readout::Incorrect
        );

        let down = SpinState::encode(g, Bit::Zero);
        assert_eq!(
            down.majority_readout(Bit::Zero, ReadoutPolicy::RandomChoice, &mut rng),
            Readout::Correct
        );
    }

    #[test]
    fn random_choice_tie_is_a_fair_coin() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
        let trials = 20_000;
        let wins = (0..trials)
            .filter(|_| {
                readout_from_magnetization(0, Bit::One, ReadoutPolicy::RandomChoice, &mut rng)
                    == Readout::Correct
            })
            .count();
        let frac = wins as f64 / trials as f64;
        // 5 sigma for a fair coin at 2e4 trials.
        assert!((frac - 0.5).abs() < 5.0 * (0.25 / trials as f64).sqrt());
    }

    #[test]
    fn spin_flip_symmetry_of_energy() {
        let c = Couplings::default();
        for g in [geo(Dimension::One, 9), geo(Dimension::Two, 5)] {
            let up = SpinState::encode(g.clone(), Bit::One);
            let down = SpinState::encode(g.clone(), Bit::Zero);
            assert_eq!(up.total_energy(&c), down.total_energy(&c));
            assert_eq!(up.total_energy(&c), -(g.bond_count() as f64));
        }
    }

    #[test]
    fn policy_parses() {
        assert_eq!(
            "random-choice".parse::<ReadoutPolicy>().unwrap(),
            ReadoutPolicy::RandomChoice
        );
        assert_eq!(
            "DECLARE_FAILURE".parse::<ReadoutPolicy>().unwrap(),
            ReadoutPolicy::DeclareFailure
        );
        assert!("coin".parse::<ReadoutPolicy>().is_err());
    }
}
