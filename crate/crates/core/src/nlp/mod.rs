//! Small dense nonlinear programming engine.
//!
//! Solves `min f(z)` subject to `c_E(z) = 0`, `c_I(z) <= 0` and
//! `lower <= z <= upper` with a primal-dual interior point method.

mod ipm;
pub mod ldl;
pub mod qp;

use serde::{Deserialize, Serialize};

pub use ipm::minimize;

/// Sparse matrix entries `(row, col, value)`; duplicates are summed.
pub type Triplets = Vec<(usize, usize, f64)>;

/// Bounds at or beyond this magnitude are treated as absent.
pub const INFINITE_BOUND: f64 = 1e19;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub n_eq: usize,
    pub n_ineq: usize,
}

/// A smooth program with analytic first derivatives.
pub trait Problem {
    fn dims(&self) -> Dims;
    fn bounds(&self, lower: &mut [f64], upper: &mut [f64]);
    fn initial_point(&self, z: &mut [f64]);
    fn objective(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64], grad: &mut [f64]);
    fn constraints(&self, z: &[f64], eq: &mut [f64], ineq: &mut [f64]);
    /// Appends Jacobian entries of the equality and inequality constraints.
    fn jacobian(&self, z: &[f64], eq: &mut Triplets, ineq: &mut Triplets);
    /// Appends lower-triangle entries (`row >= col`) of
    /// `obj_factor * H_f + sum lambda_eq H_eq + sum lambda_ineq H_ineq`.
    /// Returns `false` when no Hessian is available; the solver then uses
    /// quasi-Newton updates.
    fn hessian(
        &self,
        _z: &[f64],
        _obj_factor: f64,
        _lambda_eq: &[f64],
        _lambda_ineq: &[f64],
        _out: &mut Triplets,
    ) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIter,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HessianMode {
    /// Use the problem's Hessian when it provides one.
    Auto,
    Bfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Options {
    pub tol: f64,
    /// A stalled run whose best iterate reaches this level still counts as
    /// usable.
    pub acceptable_tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    pub hessian: HessianMode,
    /// Rescale the objective so its initial gradient is at most 100 in max norm.
    pub scale_objective: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            tol: 1e-6,
            acceptable_tol: 1e-5,
            max_iter: 300,
            mu_init: 0.1,
            hessian: HessianMode::Auto,
            scale_objective: true,
        }
    }
}

/// First-order optimality measures, each an infinity norm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Kkt {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

impl Kkt {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlpResult {
    pub z: Vec<f64>,
    pub objective: f64,
    /// Multipliers in the sign convention of
    /// `grad f + J_E^T lambda_eq + J_I^T lambda_ineq - z_lower + z_upper = 0`.
    pub lambda_eq: Vec<f64>,
    pub lambda_ineq: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    /// Residuals of the scaled problem at `z`.
    pub kkt: Kkt,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: Status,
    pub objective_scale: f64,
}

impl NlpResult {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    /// Converged, or stopped early with the best iterate within `acceptable_tol`.
    pub fn acceptable(&self, options: &Options) -> bool {
        self.converged() || self.kkt_residual <= options.acceptable_tol
    }
}

/// Largest relative discrepancy between analytic first derivatives and
/// central differences with step `h * max(1, |z_j|)`.
pub fn check_derivatives<P: Problem + ?Sized>(problem: &P, point: &[f64], h: f64) -> f64 {
    let Dims { n, n_eq, n_ineq } = problem.dims();
    let m = n_eq + n_ineq;
    let mut grad = vec![0.0; n];
    problem.gradient(point, &mut grad);
    let mut jeq = Vec::new();
    let mut jin = Vec::new();
    problem.jacobian(point, &mut jeq, &mut jin);
    let mut jac = vec![0.0; m * n];
    for &(r, c, v) in &jeq {
        jac[r * n + c] += v;
    }
    for &(r, c, v) in &jin {
        jac[(n_eq + r) * n + c] += v;
    }

    let mut worst = 0.0f64;
    let rel = |fd: f64, an: f64| (fd - an).abs() / an.abs().max(1.0);
    let mut z = point.to_vec();
    let (mut ce_p, mut ci_p) = (vec![0.0; n_eq], vec![0.0; n_ineq]);
    let (mut ce_m, mut ci_m) = (vec![0.0; n_eq], vec![0.0; n_ineq]);
    for j in 0..n {
        let step = h * point[j].abs().max(1.0);
        z[j] = point[j] + step;
        let fp = problem.objective(&z);
        problem.constraints(&z, &mut ce_p, &mut ci_p);
        z[j] = point[j] - step;
        let fm = problem.objective(&z);
        problem.constraints(&z, &mut ce_m, &mut ci_m);
        z[j] = point[j];
        worst = worst.max(rel((fp - fm) / (2.0 * step), grad[j]));
        for r in 0..n_eq {
            worst = worst.max(rel((ce_p[r] - ce_m[r]) / (2.0 * step), jac[r * n + j]));
        }
        for r in 0..n_ineq {
            worst = worst.max(rel(
                (ci_p[r] - ci_m[r]) / (2.0 * step),
                jac[(n_eq + r) * n + j],
            ));
        }
    }
    worst
}

/// Largest relative discrepancy between the analytic Lagrangian Hessian and
/// central differences of the analytic Lagrangian gradient. Returns `None`
/// when the problem has no Hessian.
pub fn check_hessian<P: Problem + ?Sized>(
    problem: &P,
    point: &[f64],
    lambda_eq: &[f64],
    lambda_ineq: &[f64],
    h: f64,
) -> Option<f64> {
    let n = problem.dims().n;
    let mut trip = Vec::new();
    if !problem.hessian(point, 1.0, lambda_eq, lambda_ineq, &mut trip) {
        return None;
    }
    let mut an = vec![0.0; n * n];
    for &(r, c, v) in &trip {
        debug_assert!(r >= c, "hessian entry above the diagonal");
        an[r * n + c] += v;
        if r != c {
            an[c * n + r] += v;
        }
    }
    let lag_grad = |z: &[f64]| {
        let mut g = vec![0.0; n];
        problem.gradient(z, &mut g);
        let (mut je, mut ji) = (Vec::new(), Vec::new());
        problem.jacobian(z, &mut je, &mut ji);
        for &(r, c, v) in &je {
            g[c] += lambda_eq[r] * v;
        }
        for &(r, c, v) in &ji {
            g[c] += lambda_ineq[r] * v;
        }
        g
    };
    let mut z = point.to_vec();
    let mut worst = 0.0f64;
    for j in 0..n {
        let step = h * point[j].abs().max(1.0);
        z[j] = point[j] + step;
        let gp = lag_grad(&z);
        z[j] = point[j] - step;
        let gm = lag_grad(&z);
        z[j] = point[j];
        for i in 0..n {
            let fd = (gp[i] - gm[i]) / (2.0 * step);
            worst = worst.max((fd - an[i * n + j]).abs() / an[i * n + j].abs().max(1.0));
        }
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `min (z0 - 1)^2 + 2 (z1 + 0.5)^2 + z0 z1` with one equality `z0^2 + z1 = 1`.
    pub(crate) struct Quad {
        pub corrupt: bool,
    }

    impl Problem for Quad {
        fn dims(&self) -> Dims {
            Dims {
                n: 2,
                n_eq: 1,
                n_ineq: 0,
            }
        }
        fn bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
            lower.fill(-INFINITE_BOUND);
            upper.fill(INFINITE_BOUND);
        }
        fn initial_point(&self, z: &mut [f64]) {
            z.fill(0.0);
        }
        fn objective(&self, z: &[f64]) -> f64 {
            (z[0] - 1.0).powi(2) + 2.0 * (z[1] + 0.5).powi(2) + z[0] * z[1]
        }
        fn gradient(&self, z: &[f64], g: &mut [f64]) {
            g[0] = 2.0 * (z[0] - 1.0) + z[1];
            g[1] = 4.0 * (z[1] + 0.5) + z[0] + if self.corrupt { 0.5 } else { 0.0 };
        }
        fn constraints(&self, z: &[f64], eq: &mut [f64], _: &mut [f64]) {
            eq[0] = z[0] * z[0] + z[1] - 1.0;
        }
        fn jacobian(&self, z: &[f64], eq: &mut Triplets, _: &mut Triplets) {
            eq.push((0, 0, 2.0 * z[0]));
            eq.push((0, 1, 1.0));
        }
    }

    #[test]
    fn derivative_check_accepts_exact_and_flags_corruption() {
        let p = [0.3, -0.7];
        assert!(check_derivatives(&Quad { corrupt: false }, &p, 1e-5) <= 1e-9);
        assert!(check_derivatives(&Quad { corrupt: true }, &p, 1e-5) > 1e-2);
    }
}
