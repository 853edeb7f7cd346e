//! Consensus coordinates tying AC period copies to device copies, and the
//! closed-form slack and dual updates.

use serde::{Deserialize, Serialize};

use crate::acopf::{AcLayout, AcPeriodVars, CoupledVar, CouplingTerm};
use crate::network::NetworkCase;
use crate::Error;

/// A temporally coupled device with one consensus coordinate per period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Device {
    Generator { gen: usize },
    /// A screened line; `monitored` is its position in the AC layout.
    Line { branch: usize, monitored: usize },
}

/// Selection maps for `A = (-I | 0)` and `B = (I | 0)`.
///
/// Coordinate `dev * periods + t` ties device `dev` in period `t`. Powers are
/// in p.u.; squared currents are in kA^2, so the AC copy (p.u.^2) is scaled
/// by `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMaps {
    pub periods: usize,
    pub devices: Vec<Device>,
    /// Consensus units per AC unit, per device.
    pub sigma: Vec<f64>,
}

/// A^2 per kA^2.
pub const KA2: f64 = 1e6;

impl SelectionMaps {
    /// Generators always; `screened` lines additionally carry current consensus.
    pub fn new(case: &NetworkCase, layout: &AcLayout, screened: &[usize]) -> Result<Self, Error> {
        let mut devices: Vec<Device> = (0..case.generators.len())
            .map(|gen| Device::Generator { gen })
            .collect();
        let mut sigma = vec![1.0; devices.len()];
        for &branch in screened {
            let monitored = layout.monitored_pos[branch].ok_or_else(|| {
                Error::Config(format!("line {} has no current variables", case.branches[branch].id))
            })?;
            devices.push(Device::Line { branch, monitored });
            sigma.push(case.current_sq_scale(branch)? / KA2);
        }
        Ok(SelectionMaps {
            periods: case.horizon,
            devices,
            sigma,
        })
    }

    pub fn d(&self) -> usize {
        self.periods * self.devices.len()
    }

    pub fn index(&self, dev: usize, t: usize) -> usize {
        dev * self.periods + t
    }

    pub fn device_range(&self, dev: usize) -> std::ops::Range<usize> {
        dev * self.periods..(dev + 1) * self.periods
    }

    fn var(&self, dev: usize) -> CoupledVar {
        match self.devices[dev] {
            Device::Generator { gen } => CoupledVar::Power(gen),
            Device::Line { monitored, .. } => CoupledVar::CurrentSq(monitored),
        }
    }

    fn read(var: CoupledVar, x: &AcPeriodVars) -> f64 {
        match var {
            CoupledVar::Power(g) => x.p[g],
            CoupledVar::CurrentSq(m) => x.current_sq[m],
        }
    }

    /// `-Ax`: the AC copies in consensus units.
    pub fn gather(&self, x: &[AcPeriodVars]) -> Vec<f64> {
        let mut out = vec![0.0; self.d()];
        for dev in 0..self.devices.len() {
            let var = self.var(dev);
            for (t, xt) in x.iter().enumerate() {
                out[self.index(dev, t)] = self.sigma[dev] * Self::read(var, xt);
            }
        }
        out
    }

    /// Writes consensus values back into the AC copies.
    pub fn scatter(&self, z: &[f64], x: &mut [AcPeriodVars]) {
        for dev in 0..self.devices.len() {
            let var = self.var(dev);
            for (t, xt) in x.iter_mut().enumerate() {
                let v = z[self.index(dev, t)] / self.sigma[dev];
                match var {
                    CoupledVar::Power(g) => xt.p[g] = v,
                    CoupledVar::CurrentSq(m) => xt.current_sq[m] = v,
                }
            }
        }
    }

    /// Coupling terms of period `t` for the x-update, `target = y + u`.
    pub fn period_terms(&self, t: usize, y: &[f64], u: &[f64], v: &[f64]) -> Vec<CouplingTerm> {
        (0..self.devices.len())
            .map(|dev| {
                let c = self.index(dev, t);
                CouplingTerm {
                    var: self.var(dev),
                    sigma: self.sigma[dev],
                    target: y[c] + u[c],
                    dual: v[c],
                }
            })
            .collect()
    }
}

/// `Ax + By` from the gathered AC copies and the device copies.
pub fn coupling_gap(xc: &[f64], y: &[f64]) -> Vec<f64> {
    y.iter().zip(xc).map(|(y, x)| y - x).collect()
}

/// `p = Ax + By + u`.
pub fn primal_residual(gap: &[f64], u: &[f64]) -> Vec<f64> {
    gap.iter().zip(u).map(|(g, u)| g + u).collect()
}

/// Minimizer of the augmented Lagrangian in `u`:
/// `(-v - w - rho (Ax + By)) / (rho + theta)`.
pub fn update_slack(v: &[f64], w: &[f64], gap: &[f64], rho: f64, theta: f64) -> Vec<f64> {
    (0..gap.len())
        .map(|i| (-v[i] - w[i] - rho * gap[i]) / (rho + theta))
        .collect()
}

pub fn dual_ascent(v: &[f64], p: &[f64], rho: f64) -> Vec<f64> {
    v.iter().zip(p).map(|(v, p)| v + rho * p).collect()
}

/// Inner-loop dual satisfying `w + theta u + v = 0`, the identity that the
/// slack update preserves after every dual ascent.
pub fn entry_dual(w: &[f64], u: &[f64], theta: f64) -> Vec<f64> {
    w.iter().zip(u).map(|(w, u)| -(w + theta * u)).collect()
}

/// `w + theta u + v + rho p` per coordinate; zero at an exact u-update.
pub fn slack_stationarity(w: &[f64], u: &[f64], v: &[f64], p: &[f64], rho: f64, theta: f64) -> Vec<f64> {
    (0..u.len())
        .map(|i| w[i] + theta * u[i] + v[i] + rho * p[i])
        .collect()
}

pub fn project_box(w: &[f64], bound: f64) -> Vec<f64> {
    w.iter().map(|w| w.clamp(-bound, bound)).collect()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn slack_update_is_stationary(
            data in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -10f64..10.0), 1..20),
            theta in 1e-2f64..1e5,
        ) {
            let v: Vec<f64> = data.iter().map(|d| d.0).collect();
            let w: Vec<f64> = data.iter().map(|d| d.1).collect();
            let gap: Vec<f64> = data.iter().map(|d| d.2).collect();
            let rho = 2.0 * theta;
            let u = update_slack(&v, &w, &gap, rho, theta);
            let p = primal_residual(&gap, &u);
            let s = slack_stationarity(&w, &u, &v, &p, rho, theta);
            let scale = norm_inf(&v).max(norm_inf(&w)).max(rho * norm_inf(&gap)).max(1.0);
            prop_assert!(norm_inf(&s) <= 1e-12 * scale);
            // After the ascent the entry identity holds with the new dual.
            let v_new = dual_ascent(&v, &p, rho);
            let e = entry_dual(&w, &u, theta);
            for i in 0..u.len() {
                prop_assert!((v_new[i] - e[i]).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn slack_vanishes_without_duals_or_gap() {
        let z = vec![0.0; 4];
        assert_eq!(update_slack(&z, &z, &z, 200.0, 100.0), z);
        let u = update_slack(&[1.0], &[2.0], &[0.0], 1e12, 5e11);
        assert!(u[0].abs() < 1e-9);
    }

    #[test]
    fn projection_clamps() {
        assert_eq!(project_box(&[-5.0, 0.5, 7.0], 1.0), vec![-1.0, 0.5, 1.0]);
    }
}
