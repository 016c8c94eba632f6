//! Special functions and log-space helpers shared by the samplers.
//!
//! `ln_gamma`, `digamma` and the regularized incomplete beta come from
//! `statrs`; the trigamma function is not provided there and lives here.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

pub use statrs::function::beta::beta_reg;
pub use statrs::function::gamma::{digamma, ln_gamma};

/// Trigamma function ψ′(x) for x > 0.
///
/// Shifts the argument above 10 with ψ′(x) = ψ′(x + 1) + 1/x², then applies
/// the asymptotic series. Absolute error is below 1e-12 on (0, ∞).
pub fn trigamma(x: f64) -> f64 {
    if !(x > 0.0) || x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/2x² + 1/6x³ − 1/30x⁵ + 1/42x⁷ − 1/30x⁹ + 5/66x¹¹
    let series = inv
        + 0.5 * inv2
        + inv * inv2
            * (1.0 / 6.0
                + inv2 * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * 5.0 / 66.0))));
    acc + series
}

/// ln Γ(a+b) − ln Γ(a) − ln Γ(b): the log normalizer of a Beta(a, b) density.
pub fn ln_beta_norm(a: f64, b: f64) -> f64 {
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
}

/// Numerically stable log Σ exp(x_i). Returns −∞ for an empty slice or when
/// every entry is −∞.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Replaces log-weights with normalized probabilities (max-subtracted) and
/// returns the log normalizer.
pub fn softmax_in_place(values: &mut [f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        values.iter_mut().for_each(|v| *v = 0.0);
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

/// Draws an index from normalized probabilities by inversion.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Draws ln X for X ~ Gamma(shape, 1) without underflow for small shapes,
/// using X = Y·U^{1/shape} with Y ~ Gamma(shape + 1, 1).
pub fn sample_ln_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("valid gamma shape");
        g.sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("valid gamma shape");
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        g.sample(rng).ln() + u.ln() / shape
    }
}

/// Draws X ~ Gamma(shape, rate).
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("valid gamma parameters");
    g.sample(rng)
}

/// Draws from a Dirichlet distribution in log space so that tiny
/// concentration parameters do not produce NaN weights.
pub fn sample_dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Vec<f64> {
    let mut logs: Vec<f64> = concentration.iter().map(|&c| sample_ln_gamma(c, rng)).collect();
    softmax_in_place(&mut logs);
    logs
}

/// Draws X ~ Beta(a, b) through two Gamma variates in log space.
pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let la = sample_ln_gamma(a, rng);
    let lb = sample_ln_gamma(b, rng);
    let m = la.max(lb);
    let ea = (la - m).exp();
    let eb = (lb - m).exp();
    ea / (ea + eb)
}

pub fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trigamma_known_values() {
        // ψ′(1) = π²/6, ψ′(1/2) = π²/2
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((trigamma(1.0) - pi2 / 6.0).abs() < 1e-12);
        assert!((trigamma(0.5) - pi2 / 2.0).abs() < 1e-12);
        // recurrence
        for &x in &[0.3, 2.7, 11.0, 40.0] {
            let lhs = trigamma(x);
            let rhs = trigamma(x + 1.0) + 1.0 / (x * x);
            assert!((lhs - rhs).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn trigamma_matches_digamma_derivative() {
        for &x in &[0.7, 1.3, 4.0, 9.5, 25.0] {
            let h = 1e-5;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!((trigamma(x) - fd).abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn softmax_normalizes() {
        let mut w = vec![-800.0, -801.0, f64::NEG_INFINITY];
        softmax_in_place(&mut w);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn dirichlet_with_tiny_concentration_is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = sample_dirichlet(&[0.01; 10], &mut rng);
            assert!(p.iter().all(|x| x.is_finite() && *x >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn categorical_never_picks_zero_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let i = sample_categorical(&[0.0, 0.3, 0.0, 0.7, 0.0], &mut rng);
            assert!(i == 1 || i == 3);
        }
    }
}
