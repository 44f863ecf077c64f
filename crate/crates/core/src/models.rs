//! Closed-form fidelity laws.
//!
//! For `N` independent spins that each flip at Poisson rate `λ`, a spin is
//! found reversed at time `t` with probability `p = (1 - e^{-2λt}) / 2`, and
//! the majority vote survives while fewer than half the spins are reversed.
//! The effective-spin model replaces the binomial count by a normal
//! approximation with a continuous number of spins `N_eff`.

use crate::error::{Error, Result};
use crate::lattice::ReadoutPolicy;

/// Parameters of the effective-spin model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub n_eff: f64,
    pub lambda: f64,
}

impl ModelParams {
    pub fn new(n_eff: f64, lambda: f64) -> Result<Self> {
        if !(n_eff > 0.0 && n_eff.is_finite()) || !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "model parameters must be positive and finite (N_eff = {n_eff}, lambda = {lambda})"
            )));
        }
        Ok(Self { n_eff, lambda })
    }
}

/// Probability that a Poisson(λt) flip count is odd: `(1 - e^{-2λt}) / 2`.
pub fn odd_flip_probability(lambda: f64, t: f64) -> f64 {
    -0.5 * (-2.0 * lambda * t).exp_m1()
}

/// Fidelity of `n` independent spins: the probability that strictly fewer
/// than half of them are reversed, so a 50/50 split counts as a failure.
///
/// Terms are evaluated in log space and summed with compensation, which keeps
/// the result accurate for `n` in the tens of thousands.
pub fn binomial_fidelity(n: u64, lambda: f64, t: f64) -> f64 {
    binomial_fidelity_with_policy(n, lambda, t, ReadoutPolicy::DeclareFailure)
}

/// [`binomial_fidelity`] with an explicit tie rule; under
/// [`ReadoutPolicy::RandomChoice`] half of the tie probability counts as
/// success.
pub fn binomial_fidelity_with_policy(n: u64, lambda: f64, t: f64, policy: ReadoutPolicy) -> f64 {
    assert!(n >= 1, "binomial_fidelity needs at least one spin");
    let p = odd_flip_probability(lambda, t);
    if p <= 0.0 {
        return 1.0;
    }
    let q = 1.0 - p;
    let (ln_p, ln_q) = (p.ln(), q.ln());
    let ln_n_fact = libm::lgamma(n as f64 + 1.0);
    let log_term = |k: u64| {
        let kf = k as f64;
        ln_n_fact - libm::lgamma(kf + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
            + kf * ln_p
            + (n - k) as f64 * ln_q
    };
    // k reversed spins with 2k < n
    let strict_upper = (n + 1) / 2;
    let tie = (n % 2 == 0).then(|| log_term(n / 2));
    let logs: Vec<f64> = (0..strict_upper).map(log_term).collect();
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut f = peak.exp() * neumaier_sum(logs.iter().map(|&l| (l - peak).exp()));
    if let (ReadoutPolicy::RandomChoice, Some(tie)) = (policy, tie) {
        f += 0.5 * tie.exp();
    }
    f.min(1.0)
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Single-spin fidelity `(1 + e^{-2λt}) / 2`.
pub fn exponential_fidelity(lambda: f64, t: f64) -> f64 {
    0.5 * (1.0 + (-2.0 * lambda * t).exp())
}

/// `d/d(ln λ)` of [`exponential_fidelity`].
pub(crate) fn exponential_fidelity_dlog_lambda(lambda: f64, t: f64) -> f64 {
    -lambda * t * (-2.0 * lambda * t).exp()
}

/// Effective-spin fidelity `½(1 + erf((N_eff/2 - μ) / (√2 σ)))` with
/// `μ = ½ N_eff (1 - e^{-2λt})` and
/// `σ = ½ sqrt(N_eff (1 - e^{-2λt})(1 + e^{-2λt}))`.
///
/// The vote threshold is half the *effective* spin count, so the curve falls
/// from 1 at `t = 0` to 1/2 as `t → ∞` for every `N_eff`. Non-integer and
/// sub-unity `N_eff` are accepted.
pub fn gaussian_fidelity(params: ModelParams, t: f64) -> f64 {
    0.5 * libm::erfc(-gaussian_z(params, t))
}

/// Standardized margin `(N_eff/2 - μ) / (√2 σ)`; infinite at `t = 0`.
fn gaussian_z(params: ModelParams, t: f64) -> f64 {
    if t <= 0.0 {
        return f64::INFINITY;
    }
    let x = (-2.0 * params.lambda * t).exp();
    // N_eff/2 - μ = N_eff·x/2; 2σ² = N_eff(1 - x²)/2
    let margin = 0.5 * params.n_eff * x;
    let one_minus_x2 = -(-4.0 * params.lambda * t).exp_m1();
    let sqrt2_sigma = (0.5 * params.n_eff * one_minus_x2).sqrt();
    margin / sqrt2_sigma
}

/// `(F, ∂F/∂ln N_eff, ∂F/∂ln λ)` of [`gaussian_fidelity`].
pub(crate) fn gaussian_fidelity_with_gradient(params: ModelParams, t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (1.0, 0.0, 0.0);
    }
    let z = gaussian_z(params, t);
    let f = 0.5 * libm::erfc(-z);
    let density = (-z * z).exp() / std::f64::consts::PI.sqrt();
    if density == 0.0 {
        return (f, 0.0, 0.0);
    }
    let lt = params.lambda * t;
    let x = (-2.0 * lt).exp();
    let one_minus_x2 = -(-4.0 * lt).exp_m1();
    let dz_dlog_n = 0.5 * z;
    let dz_dlog_lambda = -(0.5 * params.n_eff).sqrt() * 2.0 * lt * x / one_minus_x2.powf(1.5);
    (f, density * dz_dlog_n, density * dz_dlog_lambda)
}

/// `|binomial - gaussian|` with `N_eff = n`. The binomial law counts ties as
/// failures while the normal approximation effectively splits them, so for
/// even `n` the gap includes half the tie probability.
pub fn binomial_vs_gaussian_gap(n: u64, lambda: f64, t: f64) -> Result<f64> {
    let params = ModelParams::new(n as f64, lambda)?;
    Ok((binomial_fidelity(n, lambda, t) - gaussian_fidelity(params, t)).abs())
}

/// `t` at which [`gaussian_fidelity`] crosses `level` (between 1/2 and 1).
pub fn gaussian_crossing_time(params: ModelParams, level: f64) -> Result<f64> {
    if !(level > 0.5 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "crossing level must lie in (0.5, 1), got {level}"
        )));
    }
    // F = level  <=>  z = erfinv(2 level - 1) =: z0, and
    // z² = N_eff x² / (2 (1 - x²))  =>  x² = 2 z0² / (N_eff + 2 z0²)
    let z0 = erfinv(2.0 * level - 1.0);
    let x2 = 2.0 * z0 * z0 / (params.n_eff + 2.0 * z0 * z0);
    Ok(-x2.ln() / (4.0 * params.lambda))
}

/// Inverse error function by Newton refinement of `erf`.
pub(crate) fn erfinv(y: f64) -> f64 {
    assert!(y > -1.0 && y < 1.0);
    if y == 0.0 {
        return 0.0;
    }
    // Giles' single-precision approximation as a start
    let w = -((1.0 - y) * (1.0 + y)).ln();
    let mut x = if w < 5.0 {
        let w = w - 2.5;
        let mut p = 2.810_226_36e-08;
        for c in [
            3.432_739_39e-07,
            -3.523_387_7e-06,
            -4.391_506_54e-06,
            0.000_218_580_87,
            -0.001_253_725_03,
            -0.004_177_681_64,
            0.246_640_727,
            1.501_409_41,
        ] {
            p = c + p * w;
        }
        p * y
    } else {
        let w = w.sqrt() - 3.0;
        let mut p = -0.000_200_214_257;
        for c in [
            0.000_100_950_558,
            0.001_349_343_22,
            -0.003_673_428_44,
            0.005_739_507_73,
            -0.007_622_461_3,
            0.009_438_870_47,
            1.001_674_06,
            2.832_976_82,
        ] {
            p = c + p * w;
        }
        p * y
    };
    for _ in 0..3 {
        let err = libm::erf(x) - y;
        x -= err / (2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp());
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(n: f64, l: f64) -> ModelParams {
        ModelParams::new(n, l).unwrap()
    }

    #[test]
    fn odd_flip_examples() {
        assert_eq!(odd_flip_probability(0.3, 0.0), 0.0);
        assert_eq!(odd_flip_probability(0.5, 1e4), 0.5);
        assert!((odd_flip_probability(0.5, 1.0) - 0.316_060_279_414_278_84).abs() < 1e-16);
    }

    // Values from a 40-digit direct summation of the binomial law.
    const BINOMIAL_REFERENCE: &[(u64, f64, f64, f64)] = &[
        (1, 0.3, 2.0, 0.650_597_105_956_101_06),
        (2, 0.5, 1.0, 0.467_773_541_394_874_33),
        (10, 0.5, 1.0, 0.820_835_399_761_160_20),
        (100, 0.5, 1.5, 0.984_812_672_027_190_60),
        (400, 0.1, 15.0, 0.828_175_991_631_676_63),
        (400, 0.1, 20.0, 0.624_219_369_668_620_67),
        (399, 0.1, 5.0, 0.999_999_999_999_987_50),
        (1000, 0.5, 2.0, 0.999_990_177_064_775_05),
        (10_000, 0.5, 4.0, 0.965_754_531_980_644_45),
        (10_000, 0.5, 5.0, 0.746_596_994_361_191_74),
    ];

    #[test]
    fn binomial_matches_high_precision_reference() {
        for &(n, l, t, want) in BINOMIAL_REFERENCE {
            let got = binomial_fidelity(n, l, t);
            // lgamma carries ~1e-16 relative error on ln(N!) ~ 1e5
            let tol = if n > 1000 { 1e-10 } else { 1e-12 };
            assert!(
                (got - want).abs() < tol,
                "N={n} λ={l} t={t}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn binomial_examples() {
        for n in [1, 2, 7, 100, 4000] {
            assert_eq!(binomial_fidelity(n, 0.5, 0.0), 1.0);
        }
        for t in [0.1, 1.0, 3.0] {
            let got = binomial_fidelity(1, 0.4, t);
            assert!((got - 0.5 * (1.0 + (-0.8 * t).exp())).abs() < 1e-15);
            assert!((got - exponential_fidelity(0.4, t)).abs() < 1e-15);
        }
        // long-time limits: fair-coin vote success
        assert!((binomial_fidelity(1, 0.5, 100.0) - 0.5).abs() < 1e-15);
        assert!((binomial_fidelity(3, 0.5, 100.0) - 0.5).abs() < 1e-15);
        // even N: 1/2 minus half the tie probability
        assert!((binomial_fidelity(2, 0.5, 100.0) - 0.25).abs() < 1e-15);
        let random = binomial_fidelity_with_policy(2, 0.5, 100.0, ReadoutPolicy::RandomChoice);
        assert!((random - 0.5).abs() < 1e-15);
        let random = binomial_fidelity_with_policy(100, 0.5, 100.0, ReadoutPolicy::RandomChoice);
        assert!((random - 0.5).abs() < 1e-13);
    }

    /// Sum over all 2^N flip-parity patterns with a strict-majority vote.
    fn brute_force_binomial(n: u32, lambda: f64, t: f64) -> f64 {
        let p = 0.5 * (1.0 - (-2.0 * lambda * t).exp());
        let mut total = 0.0;
        for mask in 0u32..(1 << n) {
            let flipped = mask.count_ones();
            if 2 * flipped < n {
                total += p.powi(flipped as i32) * (1.0 - p).powi((n - flipped) as i32);
            }
        }
        total
    }

    #[test]
    fn binomial_matches_parity_enumeration() {
        for n in 1..=12 {
            for &t in &[0.05, 0.3, 1.0, 2.5, 7.0] {
                let a = binomial_fidelity(n as u64, 0.5, t);
                let b = brute_force_binomial(n, 0.5, t);
                assert!((a - b).abs() < 1e-13, "N={n} t={t}");
            }
        }
    }

    #[test]
    fn gaussian_matches_high_precision_reference() {
        // 40-digit evaluation of the erf form
        let cases = [
            (46.7, 0.1707, 5.0, 0.896_277_086_014_741_49),
            (5.37, 0.01521, 30.0, 0.845_142_584_130_827_58),
            (0.8, 8.52e-4, 500.0, 0.663_425_388_331_296_09),
        ];
        for (n, l, t, want) in cases {
            let got = gaussian_fidelity(params(n, l), t);
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
    }

    #[test]
    fn gaussian_limits() {
        let p = params(46.7, 0.17);
        assert_eq!(gaussian_fidelity(p, 0.0), 1.0);
        assert!((gaussian_fidelity(p, 1e4) - 0.5).abs() < 1e-15);
        assert!((gaussian_fidelity(params(0.3, 1.0), 60.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fewer_effective_spins_decay_sooner_relative_to_the_shoulder() {
        // Same λ: the ratio of the 0.99 crossing to the 0.6 crossing is larger
        // for N_eff = 399 (long flat shoulder) than for N_eff = 11.
        let ratio = |n: f64| {
            let p = params(n, 0.1);
            gaussian_crossing_time(p, 0.99).unwrap() / gaussian_crossing_time(p, 0.6).unwrap()
        };
        assert!(ratio(399.0) > ratio(11.0));
        // and at every time the small system has lost more fidelity
        for k in 1..200 {
            let t = k as f64 * 0.2;
            let small = gaussian_fidelity(params(11.0, 0.1), t);
            let large = gaussian_fidelity(params(399.0, 0.1), t);
            assert!(small <= large);
            if large < 1.0 - 1e-12 {
                assert!(small < large);
            }
        }
    }

    #[test]
    fn crossing_time_inverts_the_model() {
        for (n, l) in [(1.0, 0.5), (46.7, 0.17), (5.37, 0.0152), (399.0, 0.1)] {
            for level in [0.55, 0.75, 0.9, 0.99] {
                let t = gaussian_crossing_time(params(n, l), level).unwrap();
                assert!((gaussian_fidelity(params(n, l), t) - level).abs() < 1e-12);
            }
        }
        assert!(gaussian_crossing_time(params(1.0, 1.0), 0.4).is_err());
    }

    #[test]
    fn gap_examples() {
        assert_eq!(binomial_vs_gaussian_gap(399, 0.1, 0.0).unwrap(), 0.0);
        // dense evaluation (40-digit reference): max gap 2.03e-4 at t ≈ 11.7
        let max399 = (1..1200)
            .map(|i| binomial_vs_gaussian_gap(399, 0.1, i as f64 * 0.05).unwrap())
            .fold(0.0, f64::max);
        assert!(max399 < 0.01);
        assert!((max399 - 2.034_772e-4).abs() < 1e-8);
        let max11 = (1..1200)
            .map(|i| binomial_vs_gaussian_gap(11, 0.1, i as f64 * 0.05).unwrap())
            .fold(0.0, f64::max);
        assert!((max11 - 6.597_752e-3).abs() < 1e-8);

        // at the time where the Gaussian curve passes 0.75
        let t399 = gaussian_crossing_time(params(399.0, 0.1), 0.75).unwrap();
        let t11 = gaussian_crossing_time(params(11.0, 0.1), 0.75).unwrap();
        assert!((t399 - 16.944_246_395_258_976).abs() < 1e-9);
        assert!((t11 - 8.065_045_912_373_764).abs() < 1e-9);
        let g399 = binomial_vs_gaussian_gap(399, 0.1, t399).unwrap();
        let g11 = binomial_vs_gaussian_gap(11, 0.1, t11).unwrap();
        assert!((g399 - 7.324_849e-5).abs() < 1e-9);
        assert!((g11 - 2.710_690e-3).abs() < 1e-9);
        assert!(g11 > g399);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (n, l) in [(46.7, 0.1707), (5.37, 0.0152), (0.8, 1e-3), (200.0, 0.4)] {
            for t in [0.5, 3.0, 10.0, 60.0, 400.0] {
                let p = params(n, l);
                let (f, dn, dl) = gaussian_fidelity_with_gradient(p, t);
                assert_eq!(f, gaussian_fidelity(p, t));
                let h: f64 = 1e-6;
                let fd_n = (gaussian_fidelity(params(n * h.exp(), l), t)
                    - gaussian_fidelity(params(n * (-h).exp(), l), t))
                    / (2.0 * h);
                let fd_l = (gaussian_fidelity(params(n, l * h.exp()), t)
                    - gaussian_fidelity(params(n, l * (-h).exp()), t))
                    / (2.0 * h);
                assert!((dn - fd_n).abs() < 1e-7, "{n} {l} {t}: {dn} {fd_n}");
                assert!((dl - fd_l).abs() < 1e-7, "{n} {l} {t}: {dl} {fd_l}");
            }
        }
        let h: f64 = 1e-6;
        for t in [0.3, 2.0, 9.0] {
            let fd = (exponential_fidelity(0.2 * h.exp(), t)
                - exponential_fidelity(0.2 * (-h).exp(), t))
                / (2.0 * h);
            assert!((exponential_fidelity_dlog_lambda(0.2, t) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn erfinv_inverts_erf() {
        for y in [-0.999_999, -0.9, -0.3, 1e-8, 0.5, 0.8, 0.99, 0.999_999_9] {
            assert!((libm::erf(erfinv(y)) - y).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ModelParams::new(0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, -1.0).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0).is_err());
        assert!(ModelParams::new(0.2, 1e-6).is_ok());
    }

    proptest! {
        #[test]
        fn models_are_monotone_in_time(n in 1u64..300, n_eff in 0.2f64..500.0, l in 1e-3f64..1.0) {
            let p = params(n_eff, l);
            let mut prev_b = 1.0f64;
            let mut prev_g = 1.0f64;
            for k in 0..150 {
                let t = k as f64 * 0.05 / l;
                let b = binomial_fidelity(n, l, t);
                let g = gaussian_fidelity(p, t);
                prop_assert!(b <= prev_b + 1e-12);
                prop_assert!(g <= prev_g + 1e-15);
                prev_b = b;
                prev_g = g;
            }
        }

        #[test]
        fn gaussian_depends_only_on_lambda_t(n_eff in 0.2f64..500.0, l in 1e-4f64..1.0, t in 0.0f64..1e3, c in 0.01f64..100.0) {
            let a = gaussian_fidelity(params(n_eff, l), t);
            let b = gaussian_fidelity(params(n_eff, c * l), t / c);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
