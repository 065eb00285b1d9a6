//! Float helpers over `libm`; `core` has no transcendental functions.

#[inline]
pub(crate) fn pow(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub(crate) fn powi(x: f64, n: u32) -> f64 {
    libm::pow(x, n as f64)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

/// `max(1, |a|, |b|)`, the scale used by every relative comparison in the crate.
#[inline]
pub(crate) fn scale(a: f64, b: f64) -> f64 {
    1.0f64.max(a.abs()).max(b.abs())
}

/// Smallest integer `c` with `base^c >= x`, for `x >= 1` and `base > 1`.
pub(crate) fn ceil_log(x: f64, base: f64) -> u32 {
    if x <= 1.0 {
        return 0;
    }
    let mut c = ceil(ln(x) / ln(base)).max(0.0) as u32;
    // ln rounding can land one off either side of an exact power.
    while c > 0 && pow(base, (c - 1) as f64) >= x {
        c -= 1;
    }
    while pow(base, c as f64) < x {
        c += 1;
    }
    c
}
