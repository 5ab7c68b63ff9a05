//! Statistics for the experiment suites: mean/standard error, a one-sided
//! two-sample test, and the chi-square survival function.

/// Sample mean and standard error.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    assert!(n >= 1.0);
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One-sided Welch test p-value for the alternative `mean(a) > mean(b)`,
/// using the normal approximation (appropriate for the sample sizes the
/// harness uses).
pub fn one_sided_p_greater(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = mean_and_se(a);
    let (mb, sb) = mean_and_se(b);
    let se = (sa * sa + sb * sb).sqrt();
    if se == 0.0 {
        return if ma > mb { 0.0 } else { 1.0 };
    }
    let t = (ma - mb) / se;
    1.0 - normal_cdf(t)
}

/// Standard normal CDF via an Abramowitz–Stegun erf approximation
/// (absolute error below 1.5e-7).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    sign * y
}

/// Pearson chi-square statistic for observed counts against expected
/// probabilities, plus its survival probability.
pub fn chi2_test(observed: &[u64], expected_probs: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), expected_probs.len());
    let total: u64 = observed.iter().sum();
    let mut statistic = 0.0;
    let mut dof = 0usize;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = p * total as f64;
        if e > 0.0 {
            statistic += (o as f64 - e).powi(2) / e;
            dof += 1;
        }
    }
    assert!(dof >= 2, "need at least two populated bins");
    (statistic, chi2_sf(statistic, (dof - 1) as f64))
}

/// Chi-square survival function: `P(X > x)` with `df` degrees of freedom,
/// i.e. the regularized upper incomplete gamma `Q(df/2, x/2)`.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    upper_gamma_q(df / 2.0, x / 2.0)
}

/// Regularized upper incomplete gamma Q(a, x), series/continued-fraction
/// split at x = a + 1.
fn upper_gamma_q(a: f64, x: f64) -> f64 {
    if x < a + 1.0 {
        1.0 - lower_gamma_series(a, x)
    } else {
        upper_gamma_cf(a, x)
    }
}

fn lower_gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-15 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn upper_gamma_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Lanczos log-gamma.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COEFFS {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((normal_cdf(1.644853) - 0.95).abs() < 1e-4);
        assert!((normal_cdf(-1.959964) - 0.025).abs() < 1e-4);
    }

    #[test]
    fn chi2_sf_reference_points() {
        // textbook quantiles: P(X > 3.841) = 0.05 at df 1,
        // P(X > 18.307) = 0.05 at df 10
        assert!((chi2_sf(3.841459, 1.0) - 0.05).abs() < 1e-5);
        assert!((chi2_sf(18.30704, 10.0) - 0.05).abs() < 1e-5);
        assert!((chi2_sf(0.0, 4.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn welch_detects_separated_means() {
        let a: Vec<f64> = (0..100).map(|i| 1.0 + (i % 7) as f64 * 0.01).collect();
        let b: Vec<f64> = (0..100).map(|i| 0.5 + (i % 7) as f64 * 0.01).collect();
        assert!(one_sided_p_greater(&a, &b) < 1e-6);
        assert!(one_sided_p_greater(&b, &a) > 0.999);
    }

    #[test]
    fn chi2_accepts_fair_counts() {
        let observed = [250u64, 248, 252, 250];
        let probs = [0.25; 4];
        let (_, p) = chi2_test(&observed, &probs);
        assert!(p > 0.9);
        let skewed = [400u64, 200, 200, 200];
        let (_, p) = chi2_test(&skewed, &probs);
        assert!(p < 1e-6);
    }
}
