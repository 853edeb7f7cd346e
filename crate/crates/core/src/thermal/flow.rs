//! Temperature trajectories: the closed-form elapsed time `tau(T)`, its
//! inversion, multi-period flow maps and their sensitivities.

use serde::{Deserialize, Serialize};

use super::{
    compute_coefficients, quartic_roots, raw_coefficients, ConductorParams, LinearConvection,
    QuarticRoots, ThermalCoefficients, ThermalError, ThermalPeriod, WeatherSample,
};

/// Absolute tolerance of the `tau` inversion, K.
pub const BISECTION_TOL_K: f64 = 1e-9;

const BISECTION_MAX_ITER: usize = 200;

/// RK4 steps per dispatch interval for the sensitivity equations.
pub const SENSITIVITY_RK4_STEPS: usize = 128;

/// Elapsed time for the conductor to move from `start` to `temp`, s.
///
/// Valid only on the monotone branch between `start` and the steady state `s1`.
pub fn tau_of_temperature(
    temp: f64,
    start: f64,
    roots: &QuarticRoots,
    k4: f64,
) -> Result<f64, ThermalError> {
    if temp == start {
        return Ok(0.0);
    }
    let s1 = roots.s1;
    let on_branch = if start < s1 {
        temp > start && temp < s1
    } else if start > s1 {
        temp < start && temp > s1
    } else {
        false
    };
    if !on_branch {
        return Err(ThermalError::OutOfBranch {
            temp,
            start,
            root: s1,
        });
    }
    Ok(tau_unchecked(temp, start, roots, k4))
}

fn tau_unchecked(temp: f64, start: f64, r: &QuarticRoots, k4: f64) -> f64 {
    let QuarticRoots {
        s1,
        s2,
        p,
        q,
        g1,
        g2,
        g3,
    } = *r;
    let quad = |t: f64| t * t - p * t + q;
    let sq_g3 = g3.sqrt();
    let log_quad = (quad(temp).abs() / quad(start).abs()).ln();
    let log_pos = ((temp - s1).abs() / (start - s1).abs()).ln();
    let log_neg = ((temp + s2).abs() / (start + s2).abs()).ln();
    let arctan = ((2.0 * temp - p) / sq_g3).atan() - ((2.0 * start - p) / sq_g3).atan();
    ((s2 - s1) / (g1 * g2) * log_quad - (log_pos / g1 - log_neg / g2) / (s1 + s2)
        + 4.0 * s1 * s2 / (g1 * g2 * sq_g3) * arctan)
        / k4
}

/// Temperature after `dt` seconds from `start` under constant squared current.
pub fn step_temperature(
    start: f64,
    current_sq: f64,
    params: &ConductorParams,
    weather: &WeatherSample,
    lin: &LinearConvection,
    dt: f64,
) -> Result<f64, ThermalError> {
    let coeffs = compute_coefficients(params, weather, lin, current_sq)?;
    step_with_coefficients(start, &coeffs, dt)
}

pub(crate) fn step_with_coefficients(
    start: f64,
    coeffs: &ThermalCoefficients,
    dt: f64,
) -> Result<f64, ThermalError> {
    let roots = quartic_roots(coeffs)?;
    Ok(invert_tau(start, &roots, coeffs.k4, dt))
}

fn invert_tau(start: f64, roots: &QuarticRoots, k4: f64, dt: f64) -> f64 {
    let s1 = roots.s1;
    if (start - s1).abs() <= BISECTION_TOL_K {
        return s1;
    }
    if dt <= 0.0 {
        return start;
    }
    // Invariant: tau(near) <= dt < tau(far), with tau(far) -> inf at far = s1.
    let mut near = start;
    let mut far = s1;
    for _ in 0..BISECTION_MAX_ITER {
        if (far - near).abs() <= BISECTION_TOL_K {
            break;
        }
        let mid = 0.5 * (near + far);
        if mid == near || mid == far {
            break;
        }
        if tau_unchecked(mid, start, roots, k4) <= dt {
            near = mid;
        } else {
            far = mid;
        }
    }
    0.5 * (near + far)
}

/// Equilibrium temperature `s1` for a constant squared current.
pub fn steady_state_temperature(
    current_sq: f64,
    params: &ConductorParams,
    weather: &WeatherSample,
    lin: &LinearConvection,
) -> Result<f64, ThermalError> {
    let coeffs = compute_coefficients(params, weather, lin, current_sq)?;
    Ok(quartic_roots(&coeffs)?.s1)
}

/// Largest squared current whose steady state does not exceed `t_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ampacity {
    /// A^2.
    pub current_sq: f64,
    /// The unloaded line already exceeds `t_max`; `current_sq` was clamped to 0.
    pub clamped: bool,
}

impl Ampacity {
    /// Current magnitude, A.
    pub fn current(&self) -> f64 {
        self.current_sq.sqrt()
    }
}

pub fn max_steady_current_sq(
    params: &ConductorParams,
    weather: &WeatherSample,
    lin: &LinearConvection,
    t_max: f64,
) -> Ampacity {
    let c = raw_coefficients(params, weather, lin, 0.0);
    let raw = (c.k4 * t_max.powi(4) + c.k1 * t_max - c.k0_prime) / c.r_prime;
    if raw < 0.0 {
        Ampacity {
            current_sq: 0.0,
            clamped: true,
        }
    } else {
        Ampacity {
            current_sq: raw,
            clamped: false,
        }
    }
}

/// End-of-period temperatures for a piecewise-constant current schedule.
pub fn simulate_schedule(
    initial: f64,
    currents_sq: &[f64],
    periods: &[ThermalPeriod],
    dt: f64,
) -> Result<Vec<f64>, ThermalError> {
    if currents_sq.len() != periods.len() {
        return Err(ThermalError::LengthMismatch {
            currents: currents_sq.len(),
            periods: periods.len(),
        });
    }
    let mut temp = initial;
    let mut out = Vec::with_capacity(periods.len());
    for (t, (period, &i2)) in periods.iter().zip(currents_sq).enumerate() {
        temp = period.step(temp, i2, dt).map_err(|e| e.at(t))?;
        out.push(temp);
    }
    Ok(out)
}

/// Temperatures of a schedule and their derivatives with respect to the
/// initial temperature and every period's squared current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSensitivity {
    /// `T_t`, K.
    pub temps: Vec<f64>,
    /// `dT_t / dT_0`.
    pub d_initial: Vec<f64>,
    /// `d_current[t][k] = dT_t / d i^2_k`, zero for `k > t`, K/A^2.
    pub d_current: Vec<Vec<f64>>,
}

impl FlowSensitivity {
    /// Gradient of the final temperature as `(dT/dT0, dT/di^2_1, ...)`.
    pub fn final_gradient(&self) -> Vec<f64> {
        let last = self.temps.len() - 1;
        let mut g = vec![self.d_initial[last]];
        g.extend_from_slice(&self.d_current[last]);
        g
    }
}

/// One interval of `T' = F(T)`, `J' = F'(T) J`, `G' = F'(T) G + r'` by RK4.
/// Returns `(dT_end/dT_start, dT_end/di^2)`.
fn single_step_jacobian(start: f64, coeffs: &ThermalCoefficients, dt: f64, steps: usize) -> (f64, f64) {
    let h = dt / steps as f64;
    let rhs = |t: f64, j: f64, g: f64| {
        let slope = coeffs.rate_slope(t);
        (coeffs.rate(t), slope * j, slope * g + coeffs.r_prime)
    };
    let (mut t, mut j, mut g) = (start, 1.0, 0.0);
    for _ in 0..steps {
        let k1 = rhs(t, j, g);
        let k2 = rhs(t + 0.5 * h * k1.0, j + 0.5 * h * k1.1, g + 0.5 * h * k1.2);
        let k3 = rhs(t + 0.5 * h * k2.0, j + 0.5 * h * k2.1, g + 0.5 * h * k2.2);
        let k4 = rhs(t + h * k3.0, j + h * k3.1, g + h * k3.2);
        t += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        j += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        g += h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
    }
    (j, g)
}

/// Forward sensitivities of the flow map, chained period by period:
/// `g_t = J2 e_t + J1 g_{t-1}`.
pub fn flow_map_gradient(
    initial: f64,
    currents_sq: &[f64],
    periods: &[ThermalPeriod],
    dt: f64,
) -> Result<FlowSensitivity, ThermalError> {
    if currents_sq.len() != periods.len() {
        return Err(ThermalError::LengthMismatch {
            currents: currents_sq.len(),
            periods: periods.len(),
        });
    }
    let n = periods.len();
    let mut temps = Vec::with_capacity(n);
    let mut d_initial = Vec::with_capacity(n);
    let mut d_current = Vec::with_capacity(n);
    let mut temp = initial;
    let mut prev_initial = 1.0;
    let mut prev_current = vec![0.0; n];
    for (t, (period, &i2)) in periods.iter().zip(currents_sq).enumerate() {
        let coeffs = period.coefficients(i2).map_err(|e| e.at(t))?;
        let next = step_with_coefficients(temp, &coeffs, dt).map_err(|e| e.at(t))?;
        let (j1, j2) = single_step_jacobian(temp, &coeffs, dt, SENSITIVITY_RK4_STEPS);
        let mut row: Vec<f64> = prev_current.iter().map(|g| j1 * g).collect();
        row[t] = j2;
        prev_initial *= j1;
        temps.push(next);
        d_initial.push(prev_initial);
        d_current.push(row.clone());
        prev_current = row;
        temp = next;
    }
    Ok(FlowSensitivity {
        temps,
        d_initial,
        d_current,
    })
}

/// Curvature constants of the flow maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessBounds {
    /// `12 K4 T_max^2`.
    pub beta: f64,
    /// `K1 + 4 K4 T_max^3`, 1/s.
    pub kappa_lower: f64,
    /// `exp(-K1 dt)`.
    pub g_delta: f64,
    pub m_delta: f64,
    /// Bound on the operator norm of the Hessian of every flow map.
    pub hessian_op_bound: f64,
}

pub fn smoothness_bounds(
    params: &ConductorParams,
    weather: &WeatherSample,
    lin: &LinearConvection,
    dt: f64,
    t_max: f64,
) -> SmoothnessBounds {
    smoothness_bounds_in_units(params, weather, lin, dt, t_max, 1.0)
}

/// As [`smoothness_bounds`], with the squared current measured in units of
/// `current_unit_sq` A^2 (e.g. `1e6` for kA^2).
pub fn smoothness_bounds_in_units(
    params: &ConductorParams,
    weather: &WeatherSample,
    lin: &LinearConvection,
    dt: f64,
    t_max: f64,
    current_unit_sq: f64,
) -> SmoothnessBounds {
    let c = raw_coefficients(params, weather, lin, 0.0);
    let r = c.r_prime * current_unit_sq;
    let beta = 12.0 * c.k4 * t_max * t_max;
    let kappa_lower = c.k1 + 4.0 * c.k4 * t_max.powi(3);
    let g_delta = (-c.k1 * dt).exp();
    let m_delta =
        beta / kappa_lower * (1.0 + r * r / (c.k1 * c.k1)) * (1.0 - (-kappa_lower * dt).exp());
    let hessian_op_bound =
        m_delta + m_delta * (1.0 + r / c.k1).powi(2) / (1.0 - (-c.k1 * dt).exp());
    SmoothnessBounds {
        beta,
        kappa_lower,
        g_delta,
        m_delta,
        hessian_op_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::ThermalPeriod;
    use std::f64::consts::FRAC_PI_2;

    fn period(wind: f64, ambient: f64) -> ThermalPeriod {
        ThermalPeriod::fit(
            ConductorParams::drake(),
            WeatherSample {
                wind_speed: wind,
                wind_angle: FRAC_PI_2,
                ambient_temp: ambient,
                solar_gain: 15.0,
            },
        )
        .unwrap()
    }

    /// Independent RK4 on the raw ODE.
    fn rk4(start: f64, c: &ThermalCoefficients, dt: f64, steps: usize) -> f64 {
        let h = dt / steps as f64;
        let mut t = start;
        for _ in 0..steps {
            let k1 = c.rate(t);
            let k2 = c.rate(t + 0.5 * h * k1);
            let k3 = c.rate(t + 0.5 * h * k2);
            let k4 = c.rate(t + h * k3);
            t += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        t
    }

    #[test]
    fn tau_basics() {
        let p = period(0.61, 313.15);
        let c = p.coefficients(8.0e5).unwrap();
        let r = quartic_roots(&c).unwrap();
        assert_eq!(tau_of_temperature(320.0, 320.0, &r, c.k4).unwrap(), 0.0);
        let mid = 0.5 * (320.0 + r.s1);
        let t_mid = tau_of_temperature(mid, 320.0, &r, c.k4).unwrap();
        let t_near = tau_of_temperature(r.s1 * (1.0 - 1e-12), 320.0, &r, c.k4).unwrap();
        assert!(t_mid > 0.0);
        // logarithmic asymptote: unbounded but slow growth toward s1
        assert!(t_near.is_finite() && t_near > 20.0 * t_mid, "{t_near} vs {t_mid}");
        let closer = tau_of_temperature(r.s1 * (1.0 - 1e-15), 320.0, &r, c.k4).unwrap();
        assert!(closer > t_near);
        // wrong side of s1
        assert!(matches!(
            tau_of_temperature(r.s1 + 1.0, 320.0, &r, c.k4),
            Err(ThermalError::OutOfBranch { .. })
        ));
        // increasing along the branch
        let mut prev = 0.0;
        for k in 1..20 {
            let temp = 320.0 + (r.s1 - 320.0) * k as f64 / 20.0;
            let tau = tau_of_temperature(temp, 320.0, &r, c.k4).unwrap();
            assert!(tau > prev);
            prev = tau;
        }
    }

    #[test]
    fn tau_matches_rk4_crossing() {
        let p = period(1.5, 300.0);
        let c = p.coefficients(6.0e5).unwrap();
        let r = quartic_roots(&c).unwrap();
        let start = 290.0;
        let target = start + 0.7 * (r.s1 - start);
        let tau = tau_of_temperature(target, start, &r, c.k4).unwrap();
        let reached = rk4(start, &c, tau, 20_000);
        // the RK4 temperature at the closed-form crossing time is the target
        let rate = c.rate(target);
        let tau_err = (reached - target) / rate;
        assert!(tau_err.abs() <= 1e-6 * tau, "{tau_err} vs {tau}");
    }

    #[test]
    fn step_fixed_points() {
        let p = period(0.61, 313.15);
        let s1 = p.steady_state(5.0e5).unwrap();
        assert_eq!(p.step(s1, 5.0e5, 300.0).unwrap(), s1);
        assert_eq!(p.step(330.0, 5.0e5, 0.0).unwrap(), 330.0);
        let far = p.step(300.0, 5.0e5, 1.0e6).unwrap();
        assert!((far - s1).abs() <= 1e-6);
    }

    #[test]
    fn step_matches_rk4_heating_and_cooling() {
        let p = period(2.0, 295.0);
        for &(start, i2) in &[(290.0, 1.0e6), (370.0, 1.0e5), (340.0, 6.0e5)] {
            let c = p.coefficients(i2).unwrap();
            let closed = p.step(start, i2, 300.0).unwrap();
            let oracle = rk4(start, &c, 300.0, 2048);
            assert!((closed - oracle).abs() <= 1e-6, "{closed} vs {oracle}");
        }
    }

    #[test]
    fn steady_state_increases_with_current() {
        let p = period(0.61, 313.15);
        let mut prev = 0.0;
        for k in 0..10 {
            let s = p.steady_state(k as f64 * 1.5e5).unwrap();
            assert!(s > prev);
            prev = s;
        }
    }

    #[test]
    fn unloaded_steady_state_approaches_ambient_without_radiation_or_sun() {
        let params = ConductorParams {
            emissivity: 1e-9,
            ..ConductorParams::drake()
        };
        let w = WeatherSample {
            wind_speed: 2.0,
            wind_angle: FRAC_PI_2,
            ambient_temp: 300.0,
            solar_gain: 0.0,
        };
        let lin = LinearConvection {
            slope: 3.0,
            intercept: -900.0,
            fit_r2: 1.0,
        };
        let s1 = steady_state_temperature(0.0, &params, &w, &lin).unwrap();
        assert!((s1 - 300.0).abs() < 1e-6, "{s1}");
    }

    #[test]
    fn ampacity_round_trip_and_zero_case() {
        let p = period(0.61, 313.15);
        let amp = p.ampacity(373.15);
        assert!(!amp.clamped);
        let s = p.steady_state(amp.current_sq).unwrap();
        assert!((s - 373.15).abs() <= 1e-6);
        // limit equal to the unloaded equilibrium gives zero ampacity
        let unloaded = p.steady_state(0.0).unwrap();
        let zero = p.ampacity(unloaded);
        assert!(zero.current_sq.abs() <= 1e-6 * amp.current_sq);
        // limit below the unloaded equilibrium is clamped
        let hot = p.ampacity(unloaded - 5.0);
        assert!(hot.clamped);
        assert_eq!(hot.current_sq, 0.0);
        // windier means more ampacity
        let windy = period(3.0, 313.15).ampacity(373.15);
        assert!(windy.current_sq > amp.current_sq);
    }

    #[test]
    fn simulate_schedule_composes_steps() {
        let p = period(1.0, 305.0);
        let periods = vec![p; 4];
        let out = simulate_schedule(320.0, &[1e5, 9e5, 4e5, 0.0], &periods, 300.0).unwrap();
        assert_eq!(out.len(), 4);
        let single = simulate_schedule(320.0, &[1e5], &periods[..1], 300.0).unwrap();
        assert_eq!(single[0], p.step(320.0, 1e5, 300.0).unwrap());
        assert_eq!(out[0], single[0]);
        let unloaded = p.steady_state(0.0).unwrap();
        let flat = simulate_schedule(unloaded, &[0.0; 4], &periods, 300.0).unwrap();
        assert!(flat.iter().all(|&t| t == unloaded));
        assert!(matches!(
            simulate_schedule(320.0, &[1e5], &periods, 300.0),
            Err(ThermalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn single_step_sensitivity_respects_gronwall_bounds() {
        let p = period(0.61, 313.15);
        let sens = flow_map_gradient(330.0, &[6.0e5], &[p], 300.0).unwrap();
        let b = smoothness_bounds(&p.params, &p.weather, &p.convection, 300.0, 373.15);
        let c = p.coefficients(0.0).unwrap();
        let d = sens.d_initial[0];
        assert!(d >= (-b.kappa_lower * 300.0).exp() && d <= (-c.k1 * 300.0).exp());
        assert!(sens.d_current[0][0] > 0.0);
    }

    #[test]
    fn smoothness_limits() {
        let p = period(0.61, 313.15);
        let b = smoothness_bounds(&p.params, &p.weather, &p.convection, 300.0, 373.15);
        assert!(b.beta > 0.0 && b.kappa_lower > 0.0 && b.m_delta > 0.0);
        let tiny = smoothness_bounds(&p.params, &p.weather, &p.convection, 1e-9, 373.15);
        assert!(tiny.m_delta < 1e-9 * b.m_delta.max(1.0));
        let flat_params = ConductorParams {
            emissivity: 1e-12,
            ..p.params
        };
        let flat = smoothness_bounds(&flat_params, &p.weather, &p.convection, 300.0, 373.15);
        assert!(flat.hessian_op_bound < 1e-9 * b.hessian_op_bound);
    }
}
