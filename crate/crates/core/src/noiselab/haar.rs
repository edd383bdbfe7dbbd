//! Haar averages over states, expressed through the flat simplex of squared amplitudes.
//!
//! For a Haar-random state on `N` levels the vector `z_i = |ψ_i|²` is uniform on the
//! simplex, and the overlap `s = z_1 + … + z_n` with an `n`-dimensional subspace is
//! `Beta(n, N−n)` distributed.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use statrs::function::beta::{beta as beta_fn, beta_reg};
use statrs::function::factorial::{binomial, factorial};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HaarError {
    #[error("need 1 <= n <= N, got n = {n}, N = {big_n}")]
    Dimension { n: usize, big_n: usize },
    #[error("argument {0} outside [0, 1]")]
    Range(f64),
    #[error("Beta arguments must be positive, got ({0}, {1})")]
    BetaArgs(f64, f64),
}

fn check(n: usize, big_n: usize) -> Result<(), HaarError> {
    if n == 0 || n > big_n {
        return Err(HaarError::Dimension { n, big_n });
    }
    Ok(())
}

fn check_unit(x: f64) -> Result<(), HaarError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(HaarError::Range(x));
    }
    Ok(())
}

/// `⟨z_i^m⟩ = 1 / C(N+m−1, m)`.
pub fn moment_z(m: u64, big_n: usize) -> Result<f64, HaarError> {
    check(1, big_n)?;
    Ok(1.0 / binomial(big_n as u64 + m - 1, m))
}

/// `⟨s^m⟩ = C(n+m−1, m) / C(N+m−1, m)`.
pub fn moment_s(m: u64, n: usize, big_n: usize) -> Result<f64, HaarError> {
    check(n, big_n)?;
    Ok(binomial(n as u64 + m - 1, m) * moment_z(m, big_n)?)
}

/// Density of `s`: `n C(N−1, n) (1−s)^{N−n−1} s^{n−1}`, for `n < N`.
pub fn overlap_pdf(s: f64, n: usize, big_n: usize) -> Result<f64, HaarError> {
    check(n, big_n)?;
    check_unit(s)?;
    if n == big_n {
        return Err(HaarError::Dimension { n, big_n });
    }
    let c = n as f64 * binomial(big_n as u64 - 1, n as u64);
    Ok(c * (1.0 - s).powi((big_n - n - 1) as i32) * s.powi(n as i32 - 1))
}

/// Joint density of the first `n < N` squared amplitudes,
/// `(N−1)!/(N−n−1)! · (1 − Σz)^{N−n−1}` on the simplex.
pub fn amplitudes_pdf(z: &[f64], big_n: usize) -> Result<f64, HaarError> {
    let n = z.len();
    check(n, big_n)?;
    if n == big_n {
        return Err(HaarError::Dimension { n, big_n });
    }
    for &v in z {
        check_unit(v)?;
    }
    let rest = 1.0 - z.iter().sum::<f64>();
    if rest < 0.0 {
        return Ok(0.0);
    }
    let c = factorial(big_n as u64 - 1) / factorial((big_n - n - 1) as u64);
    Ok(c * rest.powi((big_n - n - 1) as i32))
}

/// `B(a, b)`.
pub fn beta(a: f64, b: f64) -> Result<f64, HaarError> {
    if a <= 0.0 || b <= 0.0 {
        return Err(HaarError::BetaArgs(a, b));
    }
    Ok(beta_fn(a, b))
}

/// Unregularised incomplete Beta `B(λ; a, b) = ∫_0^λ t^{a−1}(1−t)^{b−1} dt`.
pub fn beta_inc(lambda: f64, a: f64, b: f64) -> Result<f64, HaarError> {
    check_unit(lambda)?;
    Ok(beta_reg(a, b, lambda) * beta(a, b)?)
}

/// `J_m(λ) = ∫_λ^1 s^m P(s) ds`; `J_m(0) = ⟨s^m⟩`.
pub fn j_integral(m: u64, lambda: f64, n: usize, big_n: usize) -> Result<f64, HaarError> {
    check(n, big_n)?;
    check_unit(lambda)?;
    if n == big_n {
        return Ok(1.0);
    }
    let (a, b) = ((m as usize + n) as f64, (big_n - n) as f64);
    let tail = 1.0 - beta_reg(a, b, lambda);
    Ok(beta(a, b)? / beta(n as f64, b)? * tail)
}

/// `∫ (s−½) Θ(s−½) P(s) ds`.
pub fn threshold_integral(n: usize, big_n: usize) -> Result<f64, HaarError> {
    Ok(j_integral(1, 0.5, n, big_n)? - 0.5 * j_integral(0, 0.5, n, big_n)?)
}

/// Lower bound `n/N − ½` on [`threshold_integral`].
pub fn threshold_lower(n: usize, big_n: usize) -> Result<f64, HaarError> {
    check(n, big_n)?;
    Ok(n as f64 / big_n as f64 - 0.5)
}

/// `f_n(x) = (1−x)^n / n!`.
#[must_use]
pub fn f_aux(n: u64, x: f64) -> f64 {
    (1.0 - x).powi(n as i32) / factorial(n)
}

/// One point of the flat simplex in `N` dimensions.
pub fn sample_simplex<R: Rng + ?Sized>(big_n: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..big_n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Overlap `s` of a Haar state with a fixed `n`-dimensional subspace.
pub fn sample_overlap<R: Rng + ?Sized>(n: usize, big_n: usize, rng: &mut R) -> f64 {
    sample_simplex(big_n, rng)[..n].iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_examples() {
        assert!((moment_z(1, 7).unwrap() - 1.0 / 7.0).abs() < 1e-15);
        assert!((moment_z(2, 4).unwrap() - 0.1).abs() < 1e-15);
        assert!((moment_s(1, 3, 8).unwrap() - 3.0 / 8.0).abs() < 1e-15);
        for m in 0..5 {
            let lhs = moment_s(m, 3, 8).unwrap();
            let rhs = binomial(3 + m - 1, m) * moment_z(m, 8).unwrap();
            assert!((lhs - rhs).abs() < 1e-15);
            assert!((j_integral(m, 0.0, 3, 8).unwrap() - lhs).abs() < 1e-12);
        }
        assert!(j_integral(2, 1.0, 3, 8).unwrap().abs() < 1e-15);
        assert!((f_aux(2, 0.5) - 0.125).abs() < 1e-15);
        assert!((beta(2.0, 3.0).unwrap() - 1.0 / 12.0).abs() < 1e-14);
        assert!((beta_inc(1.0, 2.0, 3.0).unwrap() - 1.0 / 12.0).abs() < 1e-14);
        assert!(moment_s(1, 0, 8).is_err());
    }

    #[test]
    fn pdf_normalised() {
        for (n, big_n) in [(1, 4), (3, 8), (8, 32)] {
            let k = 200_000;
            let h = 1.0 / k as f64;
            let total: f64 = (0..k).map(|i| overlap_pdf((i as f64 + 0.5) * h, n, big_n).unwrap() * h).sum();
            assert!((total - 1.0).abs() < 1e-8, "{n} {big_n} {total}");
        }
    }

    #[test]
    fn marginal_of_joint() {
        let big_n = 5;
        let k = 2000;
        let h = 1.0 / k as f64;
        let total: f64 = (0..k).map(|i| amplitudes_pdf(&[(i as f64 + 0.5) * h], big_n).unwrap() * h).sum();
        assert!((total - 1.0).abs() < 1e-5);
    }

    #[test]
    fn threshold_bound_holds() {
        for big_n in [4, 8, 32] {
            for n in 1..=big_n {
                assert!(threshold_lower(n, big_n).unwrap() <= threshold_integral(n, big_n).unwrap() + 1e-12);
            }
        }
    }
}
