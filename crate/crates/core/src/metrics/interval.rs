use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Normal};

use super::MetricError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    #[default]
    Wilson,
    ClopperPearson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

fn check(successes: u64, n: u64, level: f64) -> Result<(), MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroSample);
    }
    if successes > n {
        return Err(MetricError::InvalidCount { successes, n });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricError::InvalidLevel(level));
    }
    Ok(())
}

fn z_for(level: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

/// Wilson score interval. Bounds are exactly 0 at zero successes and exactly
/// 1 when every trial succeeds.
pub fn wilson_interval(successes: u64, n: u64, level: f64) -> Result<Interval, MetricError> {
    check(successes, n, level)?;
    let z = z_for(level);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lower = if successes == 0 { 0.0 } else { (centre - half).clamp(0.0, p) };
    let upper = if successes == n { 1.0 } else { (centre + half).clamp(p, 1.0) };
    Ok(Interval { lower, upper })
}

/// Exact (Clopper-Pearson) interval from beta quantiles.
pub fn clopper_pearson_interval(successes: u64, n: u64, level: f64) -> Result<Interval, MetricError> {
    check(successes, n, level)?;
    let alpha = 1.0 - level;
    let (s, nf) = (successes as f64, n as f64);
    let lower = if successes == 0 {
        0.0
    } else {
        Beta::new(s, nf - s + 1.0)
            .map_err(|_| MetricError::InvalidCount { successes, n })?
            .inverse_cdf(alpha / 2.0)
    };
    let upper = if successes == n {
        1.0
    } else {
        Beta::new(s + 1.0, nf - s)
            .map_err(|_| MetricError::InvalidCount { successes, n })?
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok(Interval { lower, upper })
}

pub fn proportion_interval(
    method: IntervalMethod,
    successes: u64,
    n: u64,
    level: f64,
) -> Result<Interval, MetricError> {
    match method {
        IntervalMethod::Wilson => wilson_interval(successes, n, level),
        IntervalMethod::ClopperPearson => clopper_pearson_interval(successes, n, level),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Inverts the score test by bisection: the Wilson bounds are the two
    /// proportions `p` where `|phat - p| = z * sqrt(p (1 - p) / n)`.
    fn score_test_bounds(s: u64, n: u64, z: f64) -> (f64, f64) {
        let phat = s as f64 / n as f64;
        let g = |p: f64| (phat - p).powi(2) - z * z * p * (1.0 - p) / n as f64;
        let solve = |mut lo: f64, mut hi: f64| {
            // g is positive outside the interval and negative inside.
            let outside_at_lo = g(lo) > 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (g(mid) > 0.0) == outside_at_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        (solve(0.0, phat), solve(1.0, phat))
    }

    /// Binomial tail sum, used to confirm the exact interval's defining property.
    fn binom_cdf(k: u64, n: u64, p: f64) -> f64 {
        let mut total = 0.0;
        let mut coef = 1.0f64;
        for i in 0..=k {
            if i > 0 {
                coef *= (n - i + 1) as f64 / i as f64;
            }
            total += coef * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32);
        }
        total
    }

    #[test]
    fn ninety_five_of_hundred_matches_score_inversion() {
        let w = wilson_interval(95, 100, 0.95).unwrap();
        let (lo, hi) = score_test_bounds(95, 100, 1.959963984540054);
        assert!((w.lower - lo).abs() < 1e-12, "{} vs {}", w.lower, lo);
        assert!((w.upper - hi).abs() < 1e-12);
        assert!((w.lower - 0.88825).abs() < 5e-5);
        assert!((w.upper - 0.97846).abs() < 5e-5);
    }

    #[test]
    fn boundaries_are_exact() {
        assert_eq!(wilson_interval(0, 10, 0.95).unwrap().lower, 0.0);
        assert_eq!(wilson_interval(10, 10, 0.95).unwrap().upper, 1.0);
        assert_eq!(wilson_interval(0, 0, 0.95), Err(MetricError::ZeroSample));
        assert!(wilson_interval(11, 10, 0.95).is_err());
    }

    #[test]
    fn width_shrinks_with_n() {
        let widths: Vec<f64> = [10u64, 100, 1000]
            .iter()
            .map(|&n| {
                let i = wilson_interval(n * 7 / 10, n, 0.95).unwrap();
                i.upper - i.lower
            })
            .collect();
        assert!(widths[0] > widths[1] && widths[1] > widths[2]);
    }

    #[test]
    fn clopper_pearson_tail_property() {
        let cp = clopper_pearson_interval(95, 100, 0.95).unwrap();
        // P(X >= 95 | p = lower) = 0.025 and P(X <= 95 | p = upper) = 0.025.
        assert!(((1.0 - binom_cdf(94, 100, cp.lower)) - 0.025).abs() < 1e-9);
        assert!((binom_cdf(95, 100, cp.upper) - 0.025).abs() < 1e-9);
        assert!((cp.lower - 0.88717).abs() < 5e-5);
    }

    #[test]
    fn contains_point_estimate() {
        for n in 1..40u64 {
            for s in 0..=n {
                for m in [IntervalMethod::Wilson, IntervalMethod::ClopperPearson] {
                    let i = proportion_interval(m, s, n, 0.95).unwrap();
                    let p = s as f64 / n as f64;
                    assert!(i.lower <= p && p <= i.upper && i.lower >= 0.0 && i.upper <= 1.0);
                }
            }
        }
    }
}
