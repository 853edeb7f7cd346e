//! Direct solve of the undecomposed multi-period problem. Used as a reference
//! for the decomposition on small cases.

use std::time::Instant;

use crate::acopf::{AcLayout, AcPeriodVars, PeriodModel};
use crate::network::NetworkCase;
use crate::nlp::{self, Dims, Problem, Triplets};
use crate::ratings::{current_caps, CurrentCaps, RatingScheme};
use crate::report::{build_sections, config_hash, SolveMethod, SolveReport, SolveStatus, REPORT_SCHEMA_VERSION};
use crate::thermal::{flow_map_gradient, simulate_schedule, ThermalPeriod};
use crate::Error;

use super::screening::{period_caps, screen_transient_lines, solve_periods};
use super::solver::{ac_caps, AdmmParams};

/// Largest number of variables accepted by [`solve_monolithic`].
pub const MONOLITHIC_VARIABLE_LIMIT: usize = 5000;

/// Relative step of the finite-difference temperature curvature.
const THERMAL_FD_STEP: f64 = 1e-5;

struct ThermalRow {
    /// Monitored position.
    m: usize,
    periods: Vec<ThermalPeriod>,
    initial_temp: f64,
    max_temp: f64,
    /// A^2 per p.u.^2.
    scale: f64,
}

struct Monolithic<'a> {
    case: &'a NetworkCase,
    layout: &'a AcLayout,
    models: Vec<PeriodModel<'a>>,
    thermal: Vec<ThermalRow>,
    start: Vec<AcPeriodVars>,
    cost_scale: f64,
}

impl Monolithic<'_> {
    fn periods(&self) -> usize {
        self.models.len()
    }

    fn block(&self) -> usize {
        self.layout.n()
    }

    fn ramp_rows(&self) -> usize {
        2 * self.case.generators.len() * self.periods().saturating_sub(1)
    }

    fn ineq_ramp_offset(&self) -> usize {
        self.periods() * self.layout.n_ineq()
    }

    fn ineq_thermal_offset(&self) -> usize {
        self.ineq_ramp_offset() + self.ramp_rows()
    }

    fn var(&self, t: usize, local: usize) -> usize {
        t * self.block() + local
    }

    fn period<'z>(&self, z: &'z [f64], t: usize) -> &'z [f64] {
        &z[t * self.block()..(t + 1) * self.block()]
    }

    /// Squared currents of a thermal row, A^2.
    fn currents(&self, z: &[f64], row: &ThermalRow) -> Vec<f64> {
        (0..self.periods())
            .map(|t| z[self.var(t, self.layout.current_sq(row.m))].max(0.0) * row.scale)
            .collect()
    }

    /// Gradient in p.u.^2 of `sum_t lambda_t T_t`.
    fn weighted_gradient(&self, row: &ThermalRow, a2: &[f64], lambda: &[f64]) -> Option<Vec<f64>> {
        let s = flow_map_gradient(row.initial_temp, a2, &row.periods, self.case.dt).ok()?;
        let mut g = vec![0.0; a2.len()];
        for (t, r) in s.d_current.iter().enumerate() {
            for k in 0..=t {
                g[k] += lambda[t] * r[k] * row.scale;
            }
        }
        Some(g)
    }
}

impl Problem for Monolithic<'_> {
    fn dims(&self) -> Dims {
        let t = self.periods();
        Dims {
            n: t * self.block(),
            n_eq: t * self.layout.n_eq(),
            n_ineq: t * self.layout.n_ineq() + self.ramp_rows() + self.thermal.len() * t,
        }
    }

    fn bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        let b = self.block();
        for (t, m) in self.models.iter().enumerate() {
            m.bounds(&mut lower[t * b..(t + 1) * b], &mut upper[t * b..(t + 1) * b]);
        }
    }

    fn initial_point(&self, z: &mut [f64]) {
        let b = self.block();
        for (t, v) in self.start.iter().enumerate() {
            self.layout.pack(v, &mut z[t * b..(t + 1) * b]);
        }
    }

    fn objective(&self, z: &[f64]) -> f64 {
        self.cost_scale
            * self
                .models
                .iter()
                .enumerate()
                .map(|(t, m)| m.cost(self.period(z, t)))
                .sum::<f64>()
    }

    fn gradient(&self, z: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        for (t, m) in self.models.iter().enumerate() {
            m.cost_gradient(self.period(z, t), self.cost_scale, t * self.block(), grad);
        }
    }

    fn constraints(&self, z: &[f64], eq: &mut [f64], ineq: &mut [f64]) {
        let (ne, ni) = (self.layout.n_eq(), self.layout.n_ineq());
        for (t, m) in self.models.iter().enumerate() {
            let x = self.period(z, t);
            m.equalities(x, &mut eq[t * ne..(t + 1) * ne]);
            m.inequalities(x, &mut ineq[t * ni..(t + 1) * ni]);
        }
        let mut row = self.ineq_ramp_offset();
        for (g, gen) in self.case.generators.iter().enumerate() {
            for t in 1..self.periods() {
                let step = z[self.var(t, self.layout.p(g))] - z[self.var(t - 1, self.layout.p(g))];
                ineq[row] = step - gen.ramp_up;
                ineq[row + 1] = -step - gen.ramp_down;
                row += 2;
            }
        }
        let mut row = self.ineq_thermal_offset();
        for th in &self.thermal {
            let a2 = self.currents(z, th);
            match simulate_schedule(th.initial_temp, &a2, &th.periods, self.case.dt) {
                Ok(temps) => {
                    for temp in temps {
                        ineq[row] = temp - th.max_temp;
                        row += 1;
                    }
                }
                Err(_) => {
                    for _ in 0..self.periods() {
                        ineq[row] = f64::NAN;
                        row += 1;
                    }
                }
            }
        }
    }

    fn jacobian(&self, z: &[f64], eq: &mut Triplets, ineq: &mut Triplets) {
        let (ne, ni) = (self.layout.n_eq(), self.layout.n_ineq());
        for (t, m) in self.models.iter().enumerate() {
            m.jacobian(self.period(z, t), t * self.block(), t * ne, t * ni, eq, ineq);
        }
        let mut row = self.ineq_ramp_offset();
        for g in 0..self.case.generators.len() {
            for t in 1..self.periods() {
                let (now, before) = (self.var(t, self.layout.p(g)), self.var(t - 1, self.layout.p(g)));
                ineq.push((row, now, 1.0));
                ineq.push((row, before, -1.0));
                ineq.push((row + 1, now, -1.0));
                ineq.push((row + 1, before, 1.0));
                row += 2;
            }
        }
        let row0 = self.ineq_thermal_offset();
        for (l, th) in self.thermal.iter().enumerate() {
            let base = row0 + l * self.periods();
            let a2 = self.currents(z, th);
            match flow_map_gradient(th.initial_temp, &a2, &th.periods, self.case.dt) {
                Ok(s) => {
                    for (t, r) in s.d_current.iter().enumerate() {
                        for (k, &d) in r.iter().enumerate().take(t + 1) {
                            ineq.push((base + t, self.var(k, self.layout.current_sq(th.m)), d * th.scale));
                        }
                    }
                }
                Err(_) => {
                    for t in 0..self.periods() {
                        ineq.push((base + t, self.var(t, self.layout.current_sq(th.m)), f64::NAN));
                    }
                }
            }
        }
    }

    fn hessian(&self, z: &[f64], obj: f64, le: &[f64], li: &[f64], out: &mut Triplets) -> bool {
        let (ne, ni) = (self.layout.n_eq(), self.layout.n_ineq());
        for (t, m) in self.models.iter().enumerate() {
            let off = t * self.block();
            m.cost_hessian(obj * self.cost_scale, off, out);
            m.constraint_hessian(off, &le[t * ne..(t + 1) * ne], &li[t * ni..(t + 1) * ni], out);
        }
        // Temperature rows: central differences of the weighted gradient.
        let row0 = self.ineq_thermal_offset();
        for (l, th) in self.thermal.iter().enumerate() {
            let lambda = &li[row0 + l * self.periods()..row0 + (l + 1) * self.periods()];
            if lambda.iter().all(|&x| x == 0.0) {
                continue;
            }
            let a2 = self.currents(z, th);
            let n = a2.len();
            let mut h = vec![0.0; n * n];
            for k in 0..n {
                let step_pu = THERMAL_FD_STEP * (a2[k] / th.scale).max(1.0);
                let mut plus = a2.clone();
                let mut minus = a2.clone();
                plus[k] += step_pu * th.scale;
                minus[k] = (minus[k] - step_pu * th.scale).max(0.0);
                let width = (plus[k] - minus[k]) / th.scale;
                let (Some(gp), Some(gm)) = (
                    self.weighted_gradient(th, &plus, lambda),
                    self.weighted_gradient(th, &minus, lambda),
                ) else {
                    continue;
                };
                for j in 0..n {
                    h[j * n + k] = (gp[j] - gm[j]) / width;
                }
            }
            for i in 0..n {
                for j in 0..=i {
                    let v = 0.5 * (h[i * n + j] + h[j * n + i]);
                    if v != 0.0 {
                        let (vi, vj) = (
                            self.var(i, self.layout.current_sq(th.m)),
                            self.var(j, self.layout.current_sq(th.m)),
                        );
                        out.push((vi.max(vj), vi.min(vj), v));
                    }
                }
            }
        }
        true
    }
}

/// Solves all periods jointly with ramp limits and, for the transient scheme,
/// the temperature limits of the screened lines.
pub fn solve_monolithic(case: &NetworkCase, scheme: &RatingScheme, params: &AdmmParams) -> Result<SolveReport, Error> {
    params.validate()?;
    scheme.validate()?;
    let started = Instant::now();
    let layout = AcLayout::new(case);
    let variables = layout.n() * case.horizon;
    if variables > MONOLITHIC_VARIABLE_LIMIT {
        return Err(Error::TooLarge {
            variables,
            limit: MONOLITHIC_VARIABLE_LIMIT,
        });
    }
    let (screened, start) = if scheme.is_transient() {
        let s = screen_transient_lines(case, &params.nlp, params.cost_scale)?;
        (s.lines, s.solutions.into_iter().map(|s| s.vars).collect::<Vec<_>>())
    } else {
        let caps = current_caps(case, scheme)?;
        let sols = solve_periods(case, &layout, &caps, &params.nlp, params.cost_scale)?;
        (Vec::new(), sols.into_iter().map(|s| s.vars).collect())
    };
    let branches: Vec<usize> = screened.iter().map(|s| s.branch).collect();
    let caps: CurrentCaps = ac_caps(case, scheme, &branches)?;
    let models: Vec<PeriodModel> = (0..case.horizon)
        .map(|t| PeriodModel::new(case, &layout, t, &period_caps(&caps, t)))
        .collect();
    let mut thermal = Vec::new();
    for &b in &branches {
        let th = case.branches[b].thermal.as_ref().expect("screened lines are thermal");
        thermal.push(ThermalRow {
            m: layout.monitored_pos[b].expect("thermal lines are monitored"),
            periods: case.thermal_periods(b)?,
            initial_temp: th.initial_temp,
            max_temp: th.conductor.max_temperature,
            scale: case.current_sq_scale(b)?,
        });
    }
    let problem = Monolithic {
        case,
        layout: &layout,
        models,
        thermal,
        start,
        cost_scale: params.cost_scale,
    };
    let r = nlp::minimize(&problem, &params.nlp);
    if !r.kkt_residual.is_finite() {
        return Err(Error::SubproblemFailure {
            context: format!("monolithic solve of {} ({:?})", case.name, r.status),
            iterations: r.iterations,
            residual: r.kkt_residual,
        });
    }
    let status = if r.acceptable(&params.nlp) {
        SolveStatus::Converged
    } else {
        log::warn!(
            "monolithic solve stopped with {:?} after {} iterations (residual {:.2e})",
            r.status,
            r.iterations,
            r.kkt_residual
        );
        SolveStatus::NotConverged
    };
    let b = layout.n();
    let x: Vec<AcPeriodVars> = (0..case.horizon)
        .map(|t| layout.unpack(&r.z[t * b..(t + 1) * b]))
        .collect();
    let device_currents: Vec<Vec<f64>> = problem
        .thermal
        .iter()
        .map(|th| x.iter().map(|v| v.current_sq[th.m]).collect())
        .collect();
    let (periods, lines, residuals) = build_sections(case, &layout, &x, &caps, &branches, &device_currents)?;
    Ok(SolveReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config_hash: config_hash(case, scheme, params),
        case_name: case.name.clone(),
        scheme: *scheme,
        method: SolveMethod::Monolithic,
        status,
        objective: periods.iter().map(|p| p.cost).sum(),
        periods,
        lines,
        screened,
        outer_iterations: 0,
        inner_iterations: r.iterations,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        d: 0,
        eps: params.eps,
        consensus_inf: 0.0,
        consensus_l2: 0.0,
        residuals,
        protocol: None,
        descent: None,
        trace: Vec::new(),
    })
}
