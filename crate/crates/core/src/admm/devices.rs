//! Device blocks of the y-update: ramp-limited generators and screened lines
//! with transient temperature limits. Both are Euclidean projections of the
//! target `a = -Ax - u - v / rho` onto the device's feasible set.

use crate::nlp::qp::Qp;
use crate::nlp::{self, Dims, Options, Problem, Triplets, INFINITE_BOUND};
use crate::thermal::{flow_map_gradient, simulate_schedule, ThermalPeriod};
use crate::Error;

use super::consensus::KA2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampDevice {
    pub p_min: f64,
    pub p_max: f64,
    /// Largest increase between consecutive periods, p.u.
    pub ramp_up: f64,
    /// Largest decrease between consecutive periods, p.u.
    pub ramp_down: f64,
}

/// Nearest profile to `target` with `-ramp_down <= p_t - p_{t-1} <= ramp_up`
/// and `p_min <= p_t <= p_max`.
pub fn solve_ramp_subproblem(dev: &RampDevice, target: &[f64]) -> Vec<f64> {
    let n = target.len();
    let clamped: Vec<f64> = target.iter().map(|a| a.clamp(dev.p_min, dev.p_max)).collect();
    let feasible = clamped.windows(2).all(|w| {
        let step = w[1] - w[0];
        step <= dev.ramp_up && -step <= dev.ramp_down
    });
    if feasible {
        return clamped;
    }
    let mut h_mat = vec![0.0; n * n];
    for i in 0..n {
        h_mat[i * n + i] = 1.0;
    }
    let g: Vec<f64> = target.iter().map(|a| -a).collect();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut push = |entries: &[(usize, f64)], b: f64| {
        let mut r = vec![0.0; n];
        for &(j, v) in entries {
            r[j] = v;
        }
        rows.extend(r);
        rhs.push(b);
    };
    for t in 1..n {
        push(&[(t, 1.0), (t - 1, -1.0)], dev.ramp_up);
        push(&[(t, -1.0), (t - 1, 1.0)], dev.ramp_down);
    }
    for t in 0..n {
        push(&[(t, 1.0)], dev.p_max);
        push(&[(t, -1.0)], -dev.p_min);
    }
    let qp = Qp {
        n,
        h_mat: &h_mat,
        g: &g,
        g_rows: &rows,
        h: &rhs,
    };
    let start = vec![clamped[0]; n];
    match qp.solve(&start) {
        Some(sol) => sol.y,
        None => {
            log::warn!("ramp projection did not finish; keeping a constant profile");
            start
        }
    }
}

/// A screened line seen by the temperature block. Squared currents are in
/// kA^2.
#[derive(Debug, Clone)]
pub struct LineDevice {
    pub id: String,
    pub periods: Vec<ThermalPeriod>,
    pub initial_temp: f64,
    pub max_temp: f64,
    pub dt: f64,
}

impl LineDevice {
    pub fn temperatures(&self, current_sq_ka2: &[f64]) -> Result<Vec<f64>, Error> {
        let a2: Vec<f64> = current_sq_ka2.iter().map(|c| c * KA2).collect();
        simulate_schedule(self.initial_temp, &a2, &self.periods, self.dt).map_err(|e| Error::Thermal {
            context: format!("line {}", self.id),
            source: e,
        })
    }

    fn max_excess(&self, current_sq_ka2: &[f64]) -> f64 {
        match self.temperatures(current_sq_ka2) {
            Ok(t) => t.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v - self.max_temp)),
            Err(_) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureSolution {
    /// kA^2 per period.
    pub current_sq: Vec<f64>,
    /// End-of-period temperatures, K.
    pub temps: Vec<f64>,
    /// 1-norm of the temperature-limit multipliers of the unit-weight
    /// projection; zero when the target was feasible.
    pub multiplier_l1: f64,
}

struct TemperatureProjection<'a> {
    line: &'a LineDevice,
    target: &'a [f64],
    start: Vec<f64>,
}

impl Problem for TemperatureProjection<'_> {
    fn dims(&self) -> Dims {
        let n = self.target.len();
        Dims {
            n,
            n_eq: 0,
            n_ineq: n,
        }
    }
    fn bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        lower.fill(0.0);
        upper.fill(INFINITE_BOUND);
    }
    fn initial_point(&self, z: &mut [f64]) {
        z.copy_from_slice(&self.start);
    }
    fn objective(&self, z: &[f64]) -> f64 {
        0.5 * z.iter().zip(self.target).map(|(z, a)| (z - a).powi(2)).sum::<f64>()
    }
    fn gradient(&self, z: &[f64], grad: &mut [f64]) {
        for i in 0..z.len() {
            grad[i] = z[i] - self.target[i];
        }
    }
    fn constraints(&self, z: &[f64], _: &mut [f64], ineq: &mut [f64]) {
        match self.line.temperatures(z) {
            Ok(t) => {
                for (c, t) in ineq.iter_mut().zip(t) {
                    *c = t - self.line.max_temp;
                }
            }
            Err(_) => ineq.fill(f64::NAN),
        }
    }
    fn jacobian(&self, z: &[f64], _: &mut Triplets, ineq: &mut Triplets) {
        let a2: Vec<f64> = z.iter().map(|c| c * KA2).collect();
        match flow_map_gradient(self.line.initial_temp, &a2, &self.line.periods, self.line.dt) {
            Ok(s) => {
                for (t, row) in s.d_current.iter().enumerate() {
                    for (k, &g) in row.iter().enumerate().take(t + 1) {
                        ineq.push((t, k, g * KA2));
                    }
                }
            }
            Err(_) => {
                for t in 0..z.len() {
                    ineq.push((t, t, f64::NAN));
                }
            }
        }
    }
    /// Objective curvature only; the flow-map curvature is left out.
    fn hessian(&self, z: &[f64], obj: f64, _: &[f64], _: &[f64], out: &mut Triplets) -> bool {
        for i in 0..z.len() {
            out.push((i, i, obj));
        }
        true
    }
}

/// Largest `s` in `[0, 1]` with `s * profile` within the temperature limit.
fn feasible_scale(line: &LineDevice, profile: &[f64]) -> Option<f64> {
    let scaled = |s: f64| profile.iter().map(|c| s * c).collect::<Vec<f64>>();
    if line.max_excess(profile) <= 0.0 {
        return Some(1.0);
    }
    if line.max_excess(&scaled(0.0)) > 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if line.max_excess(&scaled(mid)) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Projects `target` (kA^2 per period) onto
/// `{ i >= 0 : T_t(i_1..i_t) <= T_max for all t }`.
pub fn solve_temperature_subproblem(
    line: &LineDevice,
    target: &[f64],
    options: &Options,
) -> Result<TemperatureSolution, Error> {
    let clipped: Vec<f64> = target.iter().map(|a| a.max(0.0)).collect();
    let fail = |iterations, residual| Error::SubproblemFailure {
        context: format!("temperature block of line {}", line.id),
        iterations,
        residual,
    };
    if line.max_excess(&clipped) <= 0.0 {
        let temps = line.temperatures(&clipped)?;
        return Ok(TemperatureSolution {
            current_sq: clipped,
            temps,
            multiplier_l1: 0.0,
        });
    }
    let s = feasible_scale(line, &clipped).ok_or_else(|| fail(0, f64::INFINITY))?;
    let problem = TemperatureProjection {
        line,
        target,
        start: clipped.iter().map(|c| s * c).collect(),
    };
    let r = nlp::minimize(&problem, options);
    if !r.converged() {
        log::debug!(
            "temperature block of line {}: {:?} after {} iterations (residual {:.2e})",
            line.id,
            r.status,
            r.iterations,
            r.kkt_residual
        );
        if !r.kkt_residual.is_finite() {
            return Err(fail(r.iterations, r.kkt_residual));
        }
    }
    let z: Vec<f64> = r.z.iter().map(|v| v.max(0.0)).collect();
    let s = feasible_scale(line, &z).ok_or_else(|| fail(r.iterations, r.kkt_residual))?;
    let current_sq: Vec<f64> = z.iter().map(|c| s * c).collect();
    let temps = line.temperatures(&current_sq)?;
    Ok(TemperatureSolution {
        current_sq,
        temps,
        multiplier_l1: r.lambda_ineq.iter().map(|l| l.abs()).sum(),
    })
}
