//! Bi-level ADMM: an inner three-block loop on the augmented Lagrangian and
//! an outer loop on the slack dual and penalty.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acopf::{solve_ac_subproblem, AcLayout, AcPeriodVars, AcSubproblemSpec};
use crate::network::NetworkCase;
use crate::nlp::Options;
use crate::ratings::{current_caps, CurrentCaps, RatingScheme};
use crate::report::{
    build_sections, config_hash, DescentDiagnostic, EntryState, LastIteration, ProtocolSnapshot,
    SolveMethod, SolveReport, SolveStatus, TraceRecord, REPORT_SCHEMA_VERSION,
};
use crate::thermal::smoothness_bounds_in_units;
use crate::Error;

use super::consensus::{
    coupling_gap, dual_ascent, entry_dual, norm2, norm_inf, primal_residual, project_box, update_slack,
    Device, SelectionMaps, KA2,
};
use super::devices::{solve_ramp_subproblem, solve_temperature_subproblem, LineDevice, RampDevice};
use super::screening::{period_caps, screen_transient_lines, solve_periods, ScreenedLine};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmParams {
    pub theta0: f64,
    /// Penalty growth factor.
    pub gamma: f64,
    /// Required decrease ratio of the slack norm between outer iterations.
    pub omega: f64,
    pub eps: f64,
    pub inner_max: usize,
    pub outer_max: usize,
    /// Box on the outer dual, per consensus coordinate.
    pub w_bound: f64,
    /// Multiplier on $/h generation costs inside the AC subproblems.
    pub cost_scale: f64,
    pub nlp: Options,
}

impl Default for AdmmParams {
    fn default() -> Self {
        AdmmParams {
            theta0: 100.0,
            gamma: 6.0,
            omega: 0.6,
            eps: 1e-4,
            inner_max: 200,
            outer_max: 25,
            w_bound: 1e6,
            cost_scale: 1.0,
            nlp: Options::default(),
        }
    }
}

impl AdmmParams {
    pub fn validate(&self) -> Result<(), Error> {
        let positive = [
            ("theta0", self.theta0),
            ("gamma", self.gamma),
            ("omega", self.omega),
            ("eps", self.eps),
            ("w_bound", self.w_bound),
            ("cost_scale", self.cost_scale),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.gamma < 1.0 {
            return Err(Error::Config(format!("gamma must be at least 1, got {}", self.gamma)));
        }
        if self.inner_max == 0 || self.outer_max == 0 {
            return Err(Error::Config("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// Penalty applied after an outer iteration whose slack norm is `u_norm`.
/// The first outer iteration never raises the penalty.
pub fn next_theta(theta: f64, u_norm: f64, prev_u_norm: Option<f64>, params: &AdmmParams) -> f64 {
    match prev_u_norm {
        Some(prev) if u_norm >= params.omega * prev => params.gamma * theta,
        _ => theta,
    }
}

/// Inner exit threshold of outer iteration `k` (1-based).
pub fn inner_tolerance(eps: f64, k: usize, d: usize, theta: f64) -> f64 {
    eps.max((d as f64 / theta).sqrt() / k as f64)
}

/// Iterates of the consensus program.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub x: Vec<AcPeriodVars>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub theta: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerExit {
    Tolerance,
    /// The inner cap was reached first.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub exit: InnerExit,
    pub iterations: usize,
    pub last: LastIteration,
    /// Largest 1-norm of temperature-limit multipliers in the last y-update.
    pub max_multiplier_l1: f64,
}

/// Squared-current caps seen by the AC blocks: the scheme's steady-state caps,
/// removed on lines whose limit is carried by their temperature device.
pub fn ac_caps(case: &NetworkCase, scheme: &RatingScheme, screened: &[usize]) -> Result<CurrentCaps, Error> {
    let base = if scheme.is_transient() {
        RatingScheme::dlr_ss()
    } else {
        *scheme
    };
    let mut caps = current_caps(case, &base)?;
    for &b in screened {
        caps[b] = None;
    }
    Ok(caps)
}

enum DeviceBlock {
    Ramp(RampDevice),
    Line(LineDevice),
}

/// A prepared decomposition of one case under one rating scheme.
pub struct Admm<'a> {
    pub case: &'a NetworkCase,
    pub layout: AcLayout,
    pub maps: SelectionMaps,
    pub caps: CurrentCaps,
    pub params: AdmmParams,
    pub screened: Vec<ScreenedLine>,
    blocks: Vec<DeviceBlock>,
}

impl<'a> Admm<'a> {
    pub fn new(case: &'a NetworkCase, scheme: &RatingScheme, params: AdmmParams) -> Result<(Self, Vec<AcPeriodVars>), Error> {
        params.validate()?;
        scheme.validate()?;
        let layout = AcLayout::new(case);
        let (screened, x0) = if scheme.is_transient() {
            let s = screen_transient_lines(case, &params.nlp, params.cost_scale)?;
            (s.lines, s.solutions.into_iter().map(|s| s.vars).collect::<Vec<_>>())
        } else {
            let caps = current_caps(case, scheme)?;
            let sols = solve_periods(case, &layout, &caps, &params.nlp, params.cost_scale)?;
            (Vec::new(), sols.into_iter().map(|s| s.vars).collect())
        };
        let branches: Vec<usize> = screened.iter().map(|s| s.branch).collect();
        let caps = ac_caps(case, scheme, &branches)?;
        let maps = SelectionMaps::new(case, &layout, &branches)?;
        let mut blocks = Vec::with_capacity(maps.devices.len());
        for dev in &maps.devices {
            blocks.push(match *dev {
                Device::Generator { gen } => {
                    let g = &case.generators[gen];
                    DeviceBlock::Ramp(RampDevice {
                        p_min: g.p_min,
                        p_max: g.p_max,
                        ramp_up: g.ramp_up,
                        ramp_down: g.ramp_down,
                    })
                }
                Device::Line { branch, .. } => {
                    let b = &case.branches[branch];
                    let th = b.thermal.as_ref().expect("screened lines are thermal");
                    DeviceBlock::Line(LineDevice {
                        id: b.id.clone(),
                        periods: case.thermal_periods(branch)?,
                        initial_temp: th.initial_temp,
                        max_temp: th.conductor.max_temperature,
                        dt: case.dt,
                    })
                }
            });
        }
        log::info!(
            "{}: {} consensus coordinates ({} devices, {} screened lines)",
            case.name,
            maps.d(),
            maps.devices.len(),
            screened.len()
        );
        Ok((
            Admm {
                case,
                layout,
                maps,
                caps,
                params,
                screened,
                blocks,
            },
            x0,
        ))
    }

    /// Starting state: device copies equal to the AC copies, all duals and
    /// slacks zero.
    pub fn initial_state(&self, x0: Vec<AcPeriodVars>) -> ConsensusState {
        let d = self.maps.d();
        let y = self.maps.gather(&x0);
        ConsensusState {
            x: x0,
            y,
            u: vec![0.0; d],
            v: vec![0.0; d],
            w: vec![0.0; d],
            theta: self.params.theta0,
            rho: 2.0 * self.params.theta0,
        }
    }

    fn x_update(&self, s: &ConsensusState) -> Vec<AcPeriodVars> {
        (0..self.maps.periods)
            .into_par_iter()
            .map(|t| {
                let spec = AcSubproblemSpec {
                    t,
                    rho: s.rho,
                    terms: self.maps.period_terms(t, &s.y, &s.u, &s.v),
                    caps: period_caps(&self.caps, t),
                    warm_start: Some(s.x[t].clone()),
                    cost_scale: self.params.cost_scale,
                };
                match solve_ac_subproblem(&spec, self.case, &self.layout, &self.params.nlp) {
                    Ok(sol) => sol.vars,
                    Err(e) => {
                        log::warn!("keeping the previous AC iterate: {e}");
                        s.x[t].clone()
                    }
                }
            })
            .collect()
    }

    /// Device projections of `xc - u - v / rho`. Returns the new device copies
    /// and the largest temperature multiplier norm.
    fn y_update(&self, xc: &[f64], s: &ConsensusState) -> Result<(Vec<f64>, f64), Error> {
        let results: Vec<Result<(Vec<f64>, f64), Error>> = self
            .blocks
            .par_iter()
            .enumerate()
            .map(|(dev, block)| {
                let range = self.maps.device_range(dev);
                let target: Vec<f64> = range.map(|c| xc[c] - s.u[c] - s.v[c] / s.rho).collect();
                match block {
                    DeviceBlock::Ramp(r) => Ok((solve_ramp_subproblem(r, &target), 0.0)),
                    DeviceBlock::Line(l) => {
                        let sol = solve_temperature_subproblem(l, &target, &self.params.nlp)?;
                        Ok((sol.current_sq, sol.multiplier_l1))
                    }
                }
            })
            .collect();
        let mut y = vec![0.0; self.maps.d()];
        let mut mult = 0.0f64;
        for (dev, r) in results.into_iter().enumerate() {
            let (slice, m) = r?;
            y[self.maps.device_range(dev)].copy_from_slice(&slice);
            mult = mult.max(m);
        }
        Ok((y, mult))
    }

    /// Runs the inner loop of outer iteration `k` (1-based) until the primal
    /// residual meets the inner threshold or the cap is hit.
    pub fn inner(
        &self,
        s: &mut ConsensusState,
        k: usize,
        trace: &mut Vec<TraceRecord>,
        observer: &mut dyn FnMut(&TraceRecord),
        started: Instant,
    ) -> Result<InnerOutcome, Error> {
        debug_assert_eq!(s.rho, 2.0 * s.theta);
        let tol = inner_tolerance(self.params.eps, k, self.maps.d(), s.theta);
        let mut last = None;
        let mut mult = 0.0;
        for r in 1..=self.params.inner_max {
            s.x = self.x_update(s);
            let xc = self.maps.gather(&s.x);
            let (y, m) = self.y_update(&xc, s)?;
            s.y = y;
            mult = m;
            let gap = coupling_gap(&xc, &s.y);
            s.u = update_slack(&s.v, &s.w, &gap, s.rho, s.theta);
            let p = primal_residual(&gap, &s.u);
            let v_prev = std::mem::take(&mut s.v);
            s.v = dual_ascent(&v_prev, &p, s.rho);
            let rec = TraceRecord {
                k,
                r,
                consensus_l2: norm2(&p),
                feas_l2: norm2(&gap),
                feas_inf: norm_inf(&gap),
                theta: s.theta,
                rho: s.rho,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            };
            log::debug!(
                "k={k} r={r} |p|={:.3e} |Ax+By|={:.3e} tol={tol:.3e}",
                rec.consensus_l2,
                rec.feas_l2
            );
            observer(&rec);
            trace.push(rec);
            last = Some(LastIteration {
                xc,
                y: s.y.clone(),
                u: s.u.clone(),
                v_prev,
                v: s.v.clone(),
                w: s.w.clone(),
                theta: s.theta,
                rho: s.rho,
            });
            if rec.consensus_l2 <= tol {
                return Ok(InnerOutcome {
                    exit: InnerExit::Tolerance,
                    iterations: r,
                    last: last.expect("set above"),
                    max_multiplier_l1: mult,
                });
            }
        }
        log::warn!(
            "inner loop of outer iteration {k} stalled after {} iterations",
            self.params.inner_max
        );
        Ok(InnerOutcome {
            exit: InnerExit::Stalled,
            iterations: self.params.inner_max,
            last: last.expect("inner_max is positive"),
            max_multiplier_l1: mult,
        })
    }

    /// Flow-map Hessian bound in kA^2 units over screened lines and periods.
    pub fn hessian_bound(&self) -> Option<f64> {
        let mut out: Option<f64> = None;
        for block in &self.blocks {
            if let DeviceBlock::Line(l) = block {
                for p in &l.periods {
                    let b = smoothness_bounds_in_units(&p.params, &p.weather, &p.convection, l.dt, l.max_temp, KA2);
                    out = Some(out.map_or(b.hessian_op_bound, |o| o.max(b.hessian_op_bound)));
                }
            }
        }
        out
    }
}

/// Outer-loop result before it is turned into a report.
#[derive(Debug, Clone)]
pub struct AdmmRun {
    pub state: ConsensusState,
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub trace: Vec<TraceRecord>,
    pub snapshot: ProtocolSnapshot,
    pub max_multiplier_l1: f64,
    /// Penalties at each inner entry.
    pub thetas: Vec<f64>,
}

/// Runs the outer loop from `state`.
pub fn run_outer(
    admm: &Admm,
    mut state: ConsensusState,
    observer: &mut dyn FnMut(&TraceRecord),
) -> Result<AdmmRun, Error> {
    let started = Instant::now();
    let params = &admm.params;
    let d = admm.maps.d();
    let target = (d as f64).sqrt() * params.eps;
    let mut trace = Vec::new();
    let mut prev_u: Option<f64> = None;
    let mut inner_total = 0;
    let mut thetas = Vec::new();
    for k in 1..=params.outer_max {
        state.rho = 2.0 * state.theta;
        state.v = entry_dual(&state.w, &state.u, state.theta);
        thetas.push(state.theta);
        let entry = EntryState {
            u: state.u.clone(),
            v: state.v.clone(),
            w: state.w.clone(),
            theta: state.theta,
            rho: state.rho,
        };
        let outcome = admm.inner(&mut state, k, &mut trace, observer, started)?;
        inner_total += outcome.iterations;
        let gap = coupling_gap(&outcome.last.xc, &outcome.last.y);
        let feas = norm2(&gap);
        log::info!(
            "outer {k}: {} inner iterations, |Ax+By| = {feas:.3e} (target {target:.3e}), theta = {:.3e}",
            outcome.iterations,
            state.theta
        );
        let snapshot = ProtocolSnapshot {
            entry,
            last: outcome.last,
        };
        if feas <= target || k == params.outer_max {
            let status = if feas <= target {
                SolveStatus::Converged
            } else {
                log::warn!("outer iteration cap reached with |Ax+By| = {feas:.3e}");
                SolveStatus::OuterMaxIter
            };
            return Ok(AdmmRun {
                state,
                status,
                outer_iterations: k,
                inner_iterations: inner_total,
                trace,
                snapshot,
                max_multiplier_l1: outcome.max_multiplier_l1,
                thetas,
            });
        }
        let w_hat: Vec<f64> = state
            .w
            .iter()
            .zip(&state.u)
            .map(|(w, u)| w + state.theta * u)
            .collect();
        state.w = project_box(&w_hat, params.w_bound);
        let u_norm = norm2(&state.u);
        state.theta = next_theta(state.theta, u_norm, prev_u, params);
        prev_u = Some(u_norm);
    }
    unreachable!("the loop returns on its last iteration")
}

/// Solves the multi-period problem under `scheme` with the bi-level ADMM.
pub fn solve_admm(
    case: &NetworkCase,
    scheme: &RatingScheme,
    params: &AdmmParams,
    observer: &mut dyn FnMut(&TraceRecord),
) -> Result<SolveReport, Error> {
    let started = Instant::now();
    let (admm, x0) = Admm::new(case, scheme, *params)?;
    let state = admm.initial_state(x0);
    let run = run_outer(&admm, state, observer)?;
    let screened: Vec<usize> = admm.screened.iter().map(|s| s.branch).collect();
    let device_currents: Vec<Vec<f64>> = admm
        .maps
        .devices
        .iter()
        .enumerate()
        .filter(|(_, d)| matches!(d, Device::Line { .. }))
        .map(|(dev, d)| {
            let Device::Line { branch, .. } = *d else { unreachable!() };
            let scale = case.current_sq_scale(branch)?;
            Ok(run.state.y[admm.maps.device_range(dev)]
                .iter()
                .map(|c| c * KA2 / scale)
                .collect())
        })
        .collect::<Result<_, Error>>()?;
    let (periods, lines, residuals) =
        build_sections(case, &admm.layout, &run.state.x, &admm.caps, &screened, &device_currents)?;
    let gap = coupling_gap(&run.snapshot.last.xc, &run.snapshot.last.y);
    let descent = admm.hessian_bound().map(|c_delta| {
        let lambda = 2.0 * run.state.rho * run.max_multiplier_l1;
        let satisfied = run.state.rho >= 2.0 * c_delta * lambda;
        if !satisfied {
            log::warn!(
                "penalty {:.3e} is below the descent bound 2 C_delta Lambda = {:.3e}",
                run.state.rho,
                2.0 * c_delta * lambda
            );
        }
        DescentDiagnostic {
            c_delta,
            lambda,
            rho: run.state.rho,
            satisfied,
        }
    });
    Ok(SolveReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config_hash: config_hash(case, scheme, params),
        case_name: case.name.clone(),
        scheme: *scheme,
        method: SolveMethod::Admm,
        status: run.status,
        objective: periods.iter().map(|p| p.cost).sum(),
        periods,
        lines,
        screened: admm.screened.clone(),
        outer_iterations: run.outer_iterations,
        inner_iterations: run.inner_iterations,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        d: admm.maps.d(),
        eps: params.eps,
        consensus_inf: norm_inf(&gap),
        consensus_l2: norm2(&gap),
        residuals,
        protocol: Some(run.snapshot),
        descent,
        trace: run.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{build, two_bus, WeatherRegime};
    use crate::report::verify_report;

    fn ramp_limited_two_bus() -> NetworkCase {
        let mut file = two_bus(WeatherRegime::WindyCool, 2);
        file.generators[0].ramp_up = 0.05;
        file.generators[0].ramp_down = 0.05;
        build(&file).unwrap()
    }

    #[test]
    fn theta_grows_only_without_enough_decrease() {
        let p = AdmmParams::default();
        let theta = p.theta0;
        assert_eq!(next_theta(theta, 5.0, None, &p), theta);
        // Two consecutive failures of the decrease test.
        let t1 = next_theta(theta, 1.0, Some(1.0), &p);
        let t2 = next_theta(t1, 0.9, Some(1.0), &p);
        assert_eq!(t2, p.gamma * p.gamma * p.theta0);
        // Enough decrease keeps the penalty.
        assert_eq!(next_theta(t2, 0.5, Some(1.0), &p), t2);
    }

    #[test]
    fn inner_tolerance_shrinks_with_k_and_theta() {
        assert_eq!(inner_tolerance(1e-4, 1, 4, 100.0), 0.2);
        assert_eq!(inner_tolerance(1e-4, 2, 4, 100.0), 0.1);
        assert_eq!(inner_tolerance(1e-4, 1, 4, 1e12), 1e-4);
    }

    #[test]
    fn inner_loop_reduces_consensus_residual() {
        let case = ramp_limited_two_bus();
        let params = AdmmParams {
            inner_max: 10,
            eps: 1e-12,
            ..AdmmParams::default()
        };
        let (admm, x0) = Admm::new(&case, &RatingScheme::dlr_ss(), params).unwrap();
        let mut s = admm.initial_state(x0);
        // The single-period dispatch violates the ramp limit, so the first
        // device update opens a gap.
        let mut trace = Vec::new();
        // A huge k keeps the threshold at eps so all 10 iterations run.
        let out = admm.inner(&mut s, usize::MAX, &mut trace, &mut |_| {}, Instant::now()).unwrap();
        assert_eq!(out.exit, InnerExit::Stalled);
        assert_eq!(trace.len(), 10);
        let first = trace[0].consensus_l2;
        let last = trace[9].consensus_l2;
        assert!(first > 1e-3, "{first}");
        assert!(last * 10.0 <= first, "{first} -> {last}");
        for (i, r) in trace.iter().enumerate() {
            assert_eq!(r.r, i + 1);
        }
    }

    #[test]
    fn consistent_start_needs_one_iteration() {
        let case = build(&two_bus(WeatherRegime::WindyCool, 2)).unwrap();
        let params = AdmmParams::default();
        let (admm, x0) = Admm::new(&case, &RatingScheme::dlr_ss(), params).unwrap();
        let s = admm.initial_state(x0);
        let run = run_outer(&admm, s.clone(), &mut |_| {}).unwrap();
        assert_eq!(run.status, SolveStatus::Converged);
        assert_eq!(run.outer_iterations, 1);
        assert_eq!(run.inner_iterations, 1);
        let moved = s
            .y
            .iter()
            .zip(&run.state.y)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(moved <= params.eps, "{moved}");
    }

    #[test]
    fn outer_loop_converges_and_report_verifies() {
        let case = ramp_limited_two_bus();
        let mut entries = 0;
        let report = solve_admm(&case, &RatingScheme::dlr_ss(), &AdmmParams::default(), &mut |r| {
            if r.r == 1 {
                entries += 1;
            }
        })
        .unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert_eq!(entries, report.outer_iterations);
        assert!(report.consensus_l2 <= (report.d as f64).sqrt() * report.eps);
        // Trace is ordered by (k, r).
        for w in report.trace.windows(2) {
            assert!((w[0].k, w[0].r) < (w[1].k, w[1].r));
        }
        let snap = report.protocol.as_ref().unwrap();
        assert_eq!(snap.entry.rho, 2.0 * snap.entry.theta);
        let v = verify_report(&report, Some(&case)).unwrap();
        assert!(v.passed(), "{:?}", v.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
    }

    #[test]
    fn tampered_dual_fails_verification() {
        let case = ramp_limited_two_bus();
        let mut report = solve_admm(&case, &RatingScheme::dlr_ss(), &AdmmParams::default(), &mut |_| {}).unwrap();
        report.protocol.as_mut().unwrap().last.v[0] += 1e-9;
        let v = verify_report(&report, None).unwrap();
        assert!(!v.passed());
        assert!(v.checks.iter().any(|c| c.name == "dual_ascent_identity" && !c.passed));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let case = ramp_limited_two_bus();
        let params = AdmmParams {
            gamma: 0.5,
            ..AdmmParams::default()
        };
        assert!(matches!(
            solve_admm(&case, &RatingScheme::dlr_ss(), &params, &mut |_| {}),
            Err(Error::Config(_))
        ));
    }
}
