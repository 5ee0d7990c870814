//! Scalar math shims and numerically stable helpers.
//!
//! The crate is `no_std`, so float transcendentals are routed through
//! `libm`. Everything downstream uses these wrappers so the whole crate
//! computes identically on every platform.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

/// True when `x` is a finite mathematical integer.
#[inline]
pub fn is_integer(x: f64) -> bool {
    x.is_finite() && floor(x) == x
}

/// `x log x` with the convention `0 log 0 = 0`.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * ln(x)
    }
}

/// `log(1 + sum_i exp(u_i))`, shifted so the largest exponent is zero.
///
/// `-inf` entries are allowed and contribute nothing; the implicit `1`
/// is the zero-payoff outside option.
pub fn log1p_sum_exp(u: &[f64]) -> f64 {
    let mut m = 0.0_f64;
    for &x in u {
        if x > m {
            m = x;
        }
    }
    let mut s = exp(-m);
    for &x in u {
        if x > f64::NEG_INFINITY {
            s += exp(x - m);
        }
    }
    m + ln(s)
}

/// Softmax over the option set `{0} ∪ u`, where option 0 has utility 0.
///
/// Returns a `(len + 1)`-vector whose component 0 is the outside-option
/// share. Entries of `-inf` get share exactly 0. The output sums to 1.
pub fn softmax_with_outside(u: &[f64]) -> alloc::vec::Vec<f64> {
    let mut m = 0.0_f64;
    for &x in u {
        if x > m {
            m = x;
        }
    }
    let mut out = alloc::vec::Vec::with_capacity(u.len() + 1);
    out.push(exp(-m));
    let mut den = out[0];
    for &x in u {
        let e = if x > f64::NEG_INFINITY { exp(x - m) } else { 0.0 };
        out.push(e);
        den += e;
    }
    for e in out.iter_mut() {
        *e /= den;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log1p_sum_exp_matches_naive() {
        let u: [f64; 3] = [0.3, -1.2, 2.5];
        let naive = (1.0 + u.iter().map(|x| x.exp()).sum::<f64>()).ln();
        assert!((log1p_sum_exp(&u) - naive).abs() < 1e-14);
    }

    #[test]
    fn log1p_sum_exp_handles_extremes() {
        assert_eq!(log1p_sum_exp(&[f64::NEG_INFINITY]), 0.0);
        // Would overflow without the shift.
        let big = log1p_sum_exp(&[800.0]);
        assert!((big - 800.0).abs() < 1e-12);
        let tiny = log1p_sum_exp(&[-800.0]);
        assert!(tiny.abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one_and_zeroes_forbidden() {
        let s = softmax_with_outside(&[1.0, f64::NEG_INFINITY, -0.5]);
        assert_eq!(s.len(), 4);
        assert_eq!(s[2], 0.0);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn xlogx_zero_convention() {
        assert_eq!(xlogx(0.0), 0.0);
        assert!((xlogx(0.5) - 0.5 * 0.5_f64.ln()).abs() < 1e-16);
    }
}
