//! Small statistics toolbox backing the evaluation and acceptance tests:
//! one-sided t tests, percentile bootstrap intervals, and a chi-square
//! goodness-of-fit check. Distribution CDFs come from statrs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(data: &[f64]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::arg("mean of empty sample"));
    }
    Ok(data.iter().sum::<f64>() / data.len() as f64)
}

/// Unbiased sample variance (n - 1 denominator).
pub fn sample_var(data: &[f64]) -> Result<f64> {
    if data.len() < 2 {
        return Err(Error::arg("variance needs at least 2 observations"));
    }
    let m = mean(data)?;
    Ok(data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (data.len() - 1) as f64)
}

/// Paired one-sided t test of H1: mean(a - b) > 0. Returns the p-value.
///
/// A zero-variance difference sample short-circuits: every pair agrees, so
/// the verdict is certain (p = 0 if the common difference is positive,
/// p = 1 otherwise, including all-zero differences).
pub fn paired_t_one_sided(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::arg("paired test needs equal-length samples"));
    }
    if a.len() < 2 {
        return Err(Error::arg("paired test needs at least 2 pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
    let m = mean(&d)?;
    let var = sample_var(&d)?;
    if var == 0.0 {
        return Ok(if m > 0.0 { 0.0 } else { 1.0 });
    }
    let n = d.len() as f64;
    let t = m / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| Error::arg(format!("t distribution: {e}")))?;
    Ok(1.0 - dist.cdf(t))
}

/// Welch one-sided t test of H1: mean(a) > mean(b), unequal variances,
/// Welch-Satterthwaite degrees of freedom. Returns the p-value.
pub fn welch_t_one_sided(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::arg("welch test needs at least 2 observations per side"));
    }
    let (ma, mb) = (mean(a)?, mean(b)?);
    let (va, vb) = (sample_var(a)?, sample_var(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return Ok(if ma > mb { 0.0 } else { 1.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::arg(format!("t distribution: {e}")))?;
    Ok(1.0 - dist.cdf(t))
}

/// Percentile bootstrap confidence interval for the mean. Deterministic
/// given `seed`. `confidence` is the two-sided level, e.g. 0.95.
pub fn bootstrap_ci_mean(
    data: &[f64],
    confidence: f64,
    iterations: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::arg("bootstrap of empty sample"));
    }
    if !(0.0..1.0).contains(&confidence) || confidence <= 0.0 {
        return Err(Error::arg("confidence must lie in (0, 1)"));
    }
    if iterations < 100 {
        return Err(Error::arg("bootstrap needs at least 100 iterations"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.len();
    let mut means = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += data[rng.random_range(0..n)];
        }
        means.push(sum / n as f64);
    }
    means.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let alpha = (1.0 - confidence) / 2.0;
    let pick = |q: f64| {
        let idx = (q * (iterations - 1) as f64).round() as usize;
        means[idx.min(iterations - 1)]
    };
    Ok((pick(alpha), pick(1.0 - alpha)))
}

/// Chi-square goodness of fit of observed counts against expected
/// probabilities. Returns the p-value with k - 1 degrees of freedom.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64]) -> Result<f64> {
    if observed.len() != expected_probs.len() {
        return Err(Error::arg("observed and expected lengths differ"));
    }
    if observed.len() < 2 {
        return Err(Error::arg("chi-square needs at least 2 categories"));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::arg("no observations"));
    }
    let prob_sum: f64 = expected_probs.iter().sum();
    if expected_probs.iter().any(|&p| p <= 0.0) || (prob_sum - 1.0).abs() > 1e-9 {
        return Err(Error::arg("expected probabilities must be positive and sum to 1"));
    }
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs.iter()) {
        let e = total as f64 * p;
        stat += (o as f64 - e) * (o as f64 - e) / e;
    }
    let dist = ChiSquared::new((observed.len() - 1) as f64)
        .map_err(|e| Error::arg(format!("chi-square distribution: {e}")))?;
    Ok(1.0 - dist.cdf(stat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::Distribution;

    #[test]
    fn mean_and_var_hand_computed() {
        let data = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(mean(&data).unwrap(), 2.5, epsilon = 1e-15);
        // Squared deviations 2.25 + 0.25 + 0.25 + 2.25 over 3.
        assert_abs_diff_eq!(sample_var(&data).unwrap(), 5.0 / 3.0, epsilon = 1e-15);
        assert!(mean(&[]).is_err());
        assert!(sample_var(&[1.0]).is_err());
    }

    #[test]
    fn paired_t_detects_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b: Vec<f64> = (0..100)
            .map(|_| {
                let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let a: Vec<f64> = b.iter().map(|v| v + 0.5).collect();
        assert!(paired_t_one_sided(&a, &b).unwrap() < 0.01);
        // Reverse direction: p near 1.
        assert!(paired_t_one_sided(&b, &a).unwrap() > 0.99);
    }

    #[test]
    fn paired_t_null_is_calibrated() {
        // Under the null (same distribution) the p-value should rarely be
        // tiny; check a single large draw lands in the bulk.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..500)
            .map(|_| {
                let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let b: Vec<f64> = (0..500)
            .map(|_| {
                let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let p = paired_t_one_sided(&a, &b).unwrap();
        assert!(p > 0.001 && p < 0.999, "p = {p}");
    }

    #[test]
    fn paired_t_zero_variance_cases() {
        assert_eq!(paired_t_one_sided(&[1.0, 1.0], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(paired_t_one_sided(&[0.5, 0.5], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(paired_t_one_sided(&[2.0, 2.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert!(paired_t_one_sided(&[1.0], &[0.0]).is_err());
        assert!(paired_t_one_sided(&[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn welch_t_detects_shift_with_unequal_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a: Vec<f64> = (0..200)
            .map(|_| {
                let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                1.0 + 2.0 * z
            })
            .collect();
        let b: Vec<f64> = (0..80)
            .map(|_| {
                let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                0.2 * z
            })
            .collect();
        assert!(welch_t_one_sided(&a, &b).unwrap() < 0.01);
        assert!(welch_t_one_sided(&b, &a).unwrap() > 0.99);
    }

    #[test]
    fn bootstrap_ci_covers_mean() {
        let data: Vec<f64> = (0..400).map(|i| (i % 7) as f64).collect();
        let m = mean(&data).unwrap();
        let (lo, hi) = bootstrap_ci_mean(&data, 0.95, 2000, 42).unwrap();
        assert!(lo < m && m < hi);
        assert!(hi - lo < 1.0, "interval too wide: {lo}..{hi}");
        // Deterministic under the same seed.
        assert_eq!(bootstrap_ci_mean(&data, 0.95, 2000, 42).unwrap(), (lo, hi));
    }

    #[test]
    fn bootstrap_rejects_bad_args() {
        assert!(bootstrap_ci_mean(&[], 0.95, 1000, 0).is_err());
        assert!(bootstrap_ci_mean(&[1.0], 1.5, 1000, 0).is_err());
        assert!(bootstrap_ci_mean(&[1.0], 0.95, 10, 0).is_err());
    }

    #[test]
    fn chi_square_accepts_fair_die_rejects_loaded() {
        let fair = [95u64, 105, 99, 101, 98, 102];
        let probs = [1.0 / 6.0; 6];
        assert!(chi_square_gof(&fair, &probs).unwrap() > 0.05);
        let loaded = [300u64, 60, 60, 60, 60, 60];
        assert!(chi_square_gof(&loaded, &probs).unwrap() < 1e-6);
    }

    #[test]
    fn chi_square_validates() {
        assert!(chi_square_gof(&[1, 2], &[0.5]).is_err());
        assert!(chi_square_gof(&[5], &[1.0]).is_err());
        assert!(chi_square_gof(&[0, 0], &[0.5, 0.5]).is_err());
        assert!(chi_square_gof(&[1, 2], &[0.7, 0.7]).is_err());
    }
}
