//! Normal, chi-square and binomial tail functions.
//!
//! Quantiles are obtained by safeguarded Newton iterations on accurate CDFs
//! so that they stay precise far into the tails (`c` as small as 1e-6 puts
//! every test beyond z = 5).

use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Acklam's rational approximation, good to about 1e-9 relative.
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Lower-tail quantile for `p <= 0.5`, refined with Halley steps on Φ.
fn normal_quantile_lower(p: f64) -> f64 {
    let mut x = acklam(p);
    for _ in 0..8 {
        let e = (normal_cdf(x) - p) / normal_pdf(x);
        let step = e / (1.0 + 0.5 * x * e);
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Inverse of the standard normal CDF.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    Ok(if p == 0.5 {
        0.0
    } else if p < 0.5 {
        normal_quantile_lower(p)
    } else {
        // 1 - p is exact for p in [0.5, 1).
        -normal_quantile_lower(1.0 - p)
    })
}

pub fn chi2_cdf(df: u64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_lr(df as f64 / 2.0, x / 2.0)
}

pub fn chi2_sf(df: u64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(df as f64 / 2.0, x / 2.0)
}

pub fn chi2_pdf(df: u64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let a = df as f64 / 2.0;
    ((a - 1.0) * (x / 2.0).ln() - x / 2.0 - ln_gamma(a)).exp() / 2.0
}

/// Inverse of the chi-square CDF with `df` degrees of freedom.
///
/// The root of the (lower or upper, whichever is smaller) tail equation is
/// bracketed, then polished with Newton steps that fall back to bisection
/// whenever they leave the bracket.
pub fn chi2_quantile(df: u64, p: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::InvalidDegreesOfFreedom);
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    let upper = p > 0.5;
    let q = 1.0 - p;
    // Increasing in x, zero at the quantile.
    let residual = |x: f64| {
        if upper {
            q - chi2_sf(df, x)
        } else {
            chi2_cdf(df, x) - p
        }
    };

    let k = df as f64;
    let z = normal_quantile(p)?;
    let h = 2.0 / (9.0 * k);
    let mut x = k * (1.0 - h + z * h.sqrt()).powi(3);
    if !(x > 0.0) {
        x = k.max(1e-3) * 1e-3;
    }

    let mut lo = 0.0;
    let mut hi = x.max(1.0);
    while residual(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..400 {
        let f = residual(x);
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let d = chi2_pdf(df, x);
        let mut next = if d > 0.0 { x - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs() || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Upper tail `P[X > k]` for `X ~ Binomial(trials, p)`.
///
/// Sums the probability mass of the smaller side directly, starting from the
/// log-space value of the term next to `k` and moving away from the mode until
/// terms become negligible.
pub fn binomial_sf(k: u64, trials: u64, p: f64) -> f64 {
    if k >= trials || p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let n = trials as f64;
    let ln_pmf = |j: u64| {
        let j = j as f64;
        ln_gamma(n + 1.0) - ln_gamma(j + 1.0) - ln_gamma(n - j + 1.0)
            + j * p.ln()
            + (n - j) * (-p).ln_1p()
    };
    let ratio = p / (1.0 - p);
    let mode = (n + 1.0) * p;

    if (k as f64) < mode {
        // Most of the mass lies above k: sum P[X ≤ k] downwards.
        let mut term = ln_pmf(k).exp();
        let mut cdf = 0.0;
        let mut j = k;
        loop {
            cdf += term;
            if j == 0 || term <= cdf * 1e-17 {
                break;
            }
            term *= j as f64 / (trials - j + 1) as f64 / ratio;
            j -= 1;
        }
        return (1.0 - cdf).clamp(0.0, 1.0);
    }

    let mut term = ln_pmf(k + 1).exp();
    let mut sum = 0.0;
    let mut j = k + 1;
    loop {
        sum += term;
        if j == trials || term <= sum * 1e-17 {
            break;
        }
        term *= (trials - j) as f64 / (j + 1) as f64 * ratio;
        j += 1;
    }
    sum.min(1.0)
}

/// Asymptotic Kolmogorov survival function `P[K > lambda]`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let t = -PI * PI / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for j in 1..=20 {
            let m = (2 * j - 1) as f64;
            s += (t * m * m).exp();
        }
        (1.0 - SQRT_2PI / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        let mut sign = 1.0;
        for j in 1..=100 {
            let jf = j as f64;
            let term = (-2.0 * jf * jf * lambda * lambda).exp();
            s += sign * term;
            if term < 1e-18 {
                break;
            }
            sign = -sign;
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Bisection on Φ: slow but independent of the Halley refinement.
    fn bisect_normal(p: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let below = if p > 0.5 {
                normal_sf(mid) > 1.0 - p
            } else {
                normal_cdf(mid) < p
            };
            if below {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Bisection on the incomplete gamma, again independent of the Newton path.
    fn bisect_chi2(df: u64, p: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1e4);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if chi2_cdf(df, mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn normal_quantile_reference_values() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(
            normal_quantile(0.975).unwrap(),
            1.959_963_984_540_054,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            normal_quantile(1.0 - 5e-7).unwrap(),
            4.891_638_475_698_591,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            normal_quantile(0.025).unwrap(),
            -1.959_963_984_540_054,
            epsilon = 1e-9
        );
    }

    #[test]
    fn normal_quantile_matches_bisection_across_tails() {
        let mut p = 1e-12;
        while p < 1.0 - 1e-12 {
            for q in [p, 1.0 - p] {
                let got = normal_quantile(q).unwrap();
                assert_abs_diff_eq!(got, bisect_normal(q), epsilon = 1e-8);
            }
            p *= 3.7;
            if p > 0.5 {
                break;
            }
        }
    }

    #[test]
    fn normal_quantile_rejects_bad_p() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(normal_quantile(p).is_err());
        }
    }

    #[test]
    fn chi2_closed_forms() {
        let x = chi2_quantile(2, 0.95).unwrap();
        assert_abs_diff_eq!(x, -2.0 * 0.05f64.ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(x, 5.991_464_547, epsilon = 1e-8);
        for p in [0.01, 0.3, 0.5, 0.9, 1.0 - 1e-9] {
            let z = normal_quantile((1.0 + p) / 2.0).unwrap();
            let x = chi2_quantile(1, p).unwrap();
            assert!((x - z * z).abs() <= 1e-8 * x, "p={p}: {x} vs {}", z * z);
        }
    }

    #[test]
    fn chi2_matches_bisection() {
        assert_abs_diff_eq!(
            chi2_quantile(10, 0.99).unwrap(),
            23.209_251_158_954_36,
            epsilon = 1e-7
        );
        for df in [1, 2, 3, 7, 10, 50, 300, 5000] {
            for p in [1e-6, 0.01, 0.5, 0.99, 1.0 - 1e-6] {
                let got = chi2_quantile(df, p).unwrap();
                let want = bisect_chi2(df, p);
                assert!(
                    (got - want).abs() <= 1e-8 * want,
                    "df={df} p={p}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn chi2_rejects_bad_args() {
        assert_eq!(chi2_quantile(0, 0.5), Err(Error::InvalidDegreesOfFreedom));
        assert!(chi2_quantile(3, 1.0).is_err());
    }

    #[test]
    fn binomial_tail() {
        assert_eq!(binomial_sf(2, 2, 0.5), 0.0);
        assert_abs_diff_eq!(binomial_sf(0, 2, 0.5), 0.75, epsilon = 1e-13);
        // Direct summation of the pmf from the definition.
        let direct: f64 = (4..=20u32)
            .map(|j| {
                let c = (0..j).fold(1.0, |acc, i| acc * (20 - i) as f64 / (i + 1) as f64);
                c * 0.1f64.powi(j as i32) * 0.9f64.powi(20 - j as i32)
            })
            .sum();
        assert_abs_diff_eq!(binomial_sf(3, 20, 0.1), direct, epsilon = 1e-13);
        assert_abs_diff_eq!(binomial_sf(3, 20, 0.1), 0.132_953, epsilon = 1e-6);
        assert_eq!(binomial_sf(0, 10, 0.0), 0.0);
        assert_eq!(binomial_sf(0, 10, 1.0), 1.0);
    }

    #[test]
    fn binomial_tail_is_monotone() {
        for &(n, p) in &[(20u64, 0.1), (200, 0.2), (5000, 0.05)] {
            let mut prev = 1.0;
            for k in 0..=n {
                let s = binomial_sf(k, n, p);
                assert!(s <= prev + 1e-15, "n={n} p={p} k={k}");
                prev = s;
            }
        }
    }

    #[test]
    fn kolmogorov_branches_agree() {
        // Both series are valid everywhere; compare them around the switch.
        for lambda in [0.9, 1.0, 1.1, 1.18, 1.3] {
            let t = -PI * PI / (8.0 * lambda * lambda);
            let s1: f64 = (1..=40)
                .map(|j| (t * ((2 * j - 1) as f64).powi(2)).exp())
                .sum();
            let a = 1.0 - SQRT_2PI / lambda * s1;
            let b: f64 = 2.0
                * (1..=100)
                    .map(|j| {
                        let jf = j as f64;
                        (if j % 2 == 1 { 1.0 } else { -1.0 })
                            * (-2.0 * jf * jf * lambda * lambda).exp()
                    })
                    .sum::<f64>();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            assert_abs_diff_eq!(kolmogorov_sf(lambda), a, epsilon = 1e-12);
        }
    }
}
