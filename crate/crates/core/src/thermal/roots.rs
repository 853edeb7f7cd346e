use serde::{Deserialize, Serialize};

use super::{ThermalCoefficients, ThermalError};

const MAX_ITER: usize = 200;

/// Real roots of `P(T) = T^4 + (K1/K4) T - K0/K4` and the derived scalars of
/// the factorization `P(T) = (T - s1)(T + s2)(T^2 - pT + q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuarticRoots {
    /// Positive root (steady-state temperature), K.
    pub s1: f64,
    /// Magnitude of the negative root, K.
    pub s2: f64,
    pub p: f64,
    pub q: f64,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
}

impl QuarticRoots {
    pub fn from_roots(s1: f64, s2: f64) -> Self {
        QuarticRoots {
            s1,
            s2,
            p: s2 - s1,
            q: s1 * s1 - s1 * s2 + s2 * s2,
            g1: 3.0 * s1 * s1 - 2.0 * s1 * s2 + s2 * s2,
            g2: s1 * s1 - 2.0 * s1 * s2 + 3.0 * s2 * s2,
            g3: 3.0 * s1 * s1 - 2.0 * s1 * s2 + 3.0 * s2 * s2,
        }
    }
}

/// Safeguarded Newton on an increasing bracket `f(lo) < 0 < f(hi)`.
fn bracketed_newton(
    f: impl Fn(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
) -> Result<f64, ThermalError> {
    let mut x = hi;
    for _ in 0..MAX_ITER {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) || hi - lo <= f64::EPSILON * hi
        {
            return Ok(next);
        }
        x = next;
    }
    Err(ThermalError::NoConvergence {
        iterations: MAX_ITER,
    })
}

pub fn quartic_roots(coeffs: &ThermalCoefficients) -> Result<QuarticRoots, ThermalError> {
    if !(coeffs.k4 > 0.0) {
        return Err(ThermalError::InvalidParams {
            field: "k4",
            value: coeffs.k4,
        });
    }
    if !(coeffs.k0 > 0.0) {
        return Err(ThermalError::NonPositiveK0 { k0: coeffs.k0 });
    }
    let b = coeffs.k1 / coeffs.k4;
    let c = coeffs.k0 / coeffs.k4;

    // P is strictly increasing on [0, inf) with P(0) = -c < 0.
    let hi1 = c.powf(0.25) + 1.0;
    let s1 = bracketed_newton(
        |t| (t.powi(4) + b * t - c, 4.0 * t.powi(3) + b),
        0.0,
        hi1,
    )?;

    // With T = -s: Q(s) = s^4 - b s - c is convex on s > 0 with Q(0) < 0.
    // The root lies beyond the minimizer (b/4)^(1/3).
    let m = b.max(0.0).cbrt().max(c.powf(0.25));
    let lo2 = (b.max(0.0) / 4.0).cbrt();
    let hi2 = 2.0 * m + 1.0;
    let s2 = bracketed_newton(
        |s| (s.powi(4) - b * s - c, 4.0 * s.powi(3) - b),
        lo2,
        hi2,
    )?;
    Ok(QuarticRoots::from_roots(s1, s2))
}
