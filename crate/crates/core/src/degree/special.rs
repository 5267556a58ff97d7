//! Special functions behind the distribution normalizers.

use libm::lgamma as ln_gamma;

pub use libm::erfc;

const EPS: f64 = 1e-16;
const MAX_TERMS: usize = 10_000;
const TINY: f64 = 1e-300;

/// `ln Γ(s, x)`, the log of the upper incomplete gamma function, for any real
/// `s` and `x > 0`.
///
/// Uses the Legendre continued fraction (modified Lentz) when `x > s + 1` and
/// the lower-gamma power series otherwise. For `s ≤ 0` in the series region
/// the value is carried up from `(0, 1]` with `Γ(s+1, x) = sΓ(s, x) + xˢe⁻ˣ`.
/// Non-positive integer `s` is nudged by `1e-7` to keep the recurrence finite.
pub fn ln_upper_gamma(s: f64, x: f64) -> f64 {
    if !(x > 0.0) || !s.is_finite() || !x.is_finite() {
        return f64::NAN;
    }
    if x > s + 1.0 {
        return ln_upper_gamma_cf(s, x);
    }
    if s > 0.0 {
        return ln_upper_gamma_series(s, x);
    }
    let mut s = s;
    if (s - s.round()).abs() < 1e-7 {
        s = s.round() - 1e-7;
    }
    let steps = (-s).floor() as usize + 1;
    let top = s + steps as f64;
    // Γ(a, x) = (Γ(a+1, x) − xᵃe⁻ˣ) / a, descending from a = top − 1 to s.
    let mut g = ln_upper_gamma_series(top, x).exp();
    let mut a = top;
    for _ in 0..steps {
        a -= 1.0;
        g = (g - (a * x.ln() - x).exp()) / a;
    }
    if g > 0.0 {
        g.ln()
    } else {
        f64::NAN
    }
}

fn ln_upper_gamma_cf(s: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    s * x.ln() - x + h.ln()
}

/// Requires `s > 0`.
fn ln_upper_gamma_series(s: f64, x: f64) -> f64 {
    let mut term = 1.0 / s;
    let mut sum = term;
    let mut a = s;
    for _ in 0..MAX_TERMS {
        a += 1.0;
        term *= x / a;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    let ln_lower = s * x.ln() - x + sum.ln();
    let ln_full = ln_gamma(s);
    // ln(Γ(s) − γ(s, x))
    let ratio = (ln_lower - ln_full).exp();
    if ratio >= 1.0 {
        return f64::NAN;
    }
    ln_full + (-ratio).ln_1p()
}
