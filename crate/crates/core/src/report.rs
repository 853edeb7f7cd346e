//! Solve reports, convergence traces and their independent verification.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acopf::{residual_summary, AcLayout, AcPeriodVars, PeriodModel, ResidualSummary};
use crate::admm::consensus::{
    coupling_gap, dual_ascent, entry_dual, norm2, norm_inf, primal_residual, slack_stationarity,
};
use crate::admm::screening::{period_caps, ScreenedLine};
use crate::admm::{ac_caps, AdmmParams, SelectionMaps};
use crate::network::NetworkCase;
use crate::ratings::RatingScheme;
use crate::thermal::simulate_schedule;
use crate::Error;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Admm,
    Monolithic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    /// The outer iteration cap was reached; the report holds the last state.
    OuterMaxIter,
    /// The monolithic solver stopped without meeting its tolerance.
    NotConverged,
}

/// One inner iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub r: usize,
    /// `||Ax + By + u||_2`
    pub consensus_l2: f64,
    /// `||Ax + By||_2`
    pub feas_l2: f64,
    /// `||Ax + By||_inf`
    pub feas_inf: f64,
    pub theta: f64,
    pub rho: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub t: usize,
    /// $/h.
    pub cost: f64,
    pub dispatch_mw: Vec<f64>,
    pub voltage_magnitude: Vec<f64>,
    pub vars: AcPeriodVars,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineReport {
    pub id: String,
    pub branch: usize,
    pub screened: bool,
    /// AC copy of the squared current, p.u.^2.
    pub current_sq_pu: Vec<f64>,
    /// Device copy for screened lines, p.u.^2.
    pub device_current_sq_pu: Option<Vec<f64>>,
    /// Cap imposed in the AC block, p.u.^2.
    pub cap_pu: Option<Vec<f64>>,
    /// End-of-period temperatures under the governing current schedule.
    pub temps_k: Vec<f64>,
    pub max_temp_k: f64,
}

/// State at the start of the last inner loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub theta: f64,
    pub rho: f64,
}

/// Vectors of the last inner iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LastIteration {
    /// `-Ax`.
    pub xc: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub v_prev: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub theta: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSnapshot {
    pub entry: EntryState,
    pub last: LastIteration,
}

/// Penalty lower bound of the temperature-block descent condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentDiagnostic {
    /// Flow-map Hessian bound in kA^2 units.
    pub c_delta: f64,
    /// Estimated multiplier bound.
    pub lambda: f64,
    pub rho: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub case_name: String,
    pub scheme: RatingScheme,
    pub method: SolveMethod,
    pub status: SolveStatus,
    /// Generation cost summed over periods, $/h.
    pub objective: f64,
    pub periods: Vec<PeriodReport>,
    pub lines: Vec<LineReport>,
    pub screened: Vec<ScreenedLine>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub wall_ms: f64,
    pub d: usize,
    pub eps: f64,
    pub consensus_inf: f64,
    pub consensus_l2: f64,
    /// Recomputed from the reported primal values.
    pub residuals: ResidualSummary,
    pub protocol: Option<ProtocolSnapshot>,
    pub descent: Option<DescentDiagnostic>,
    pub trace: Vec<TraceRecord>,
}

impl SolveReport {
    pub fn vars(&self) -> Vec<AcPeriodVars> {
        self.periods.iter().map(|p| p.vars.clone()).collect()
    }

    pub fn line(&self, id: &str) -> Option<&LineReport> {
        self.lines.iter().find(|l| l.id == id)
    }
}

/// Hex SHA-256 of the canonical case, scheme and parameters.
pub fn config_hash(case: &NetworkCase, scheme: &RatingScheme, params: &AdmmParams) -> String {
    let mut h = Sha256::new();
    h.update(case.to_case_file().to_canonical_json().as_bytes());
    h.update(b"\0");
    h.update(serde_json::to_string(scheme).expect("serializable").as_bytes());
    h.update(b"\0");
    h.update(serde_json::to_string(params).expect("serializable").as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-period and per-line sections of a report, recomputed from `x` and
/// the device currents of screened lines (p.u.^2, per line, per period).
pub fn build_sections(
    case: &NetworkCase,
    layout: &AcLayout,
    x: &[AcPeriodVars],
    caps: &crate::ratings::CurrentCaps,
    screened: &[usize],
    device_currents: &[Vec<f64>],
) -> Result<(Vec<PeriodReport>, Vec<LineReport>, ResidualSummary), Error> {
    let mut periods = Vec::with_capacity(x.len());
    let mut residuals = ResidualSummary::default();
    for (t, v) in x.iter().enumerate() {
        let model = PeriodModel::new(case, layout, t, &period_caps(caps, t));
        let mut z = vec![0.0; layout.n()];
        layout.pack(v, &mut z);
        residuals = residuals.merge(&residual_summary(&model, v));
        periods.push(PeriodReport {
            t,
            cost: model.cost(&z),
            dispatch_mw: v.p.iter().map(|p| p * case.base_mva).collect(),
            voltage_magnitude: v.e.iter().zip(&v.f).map(|(e, f)| e.hypot(*f)).collect(),
            vars: v.clone(),
        });
    }
    let mut lines = Vec::new();
    for (m, &branch) in layout.monitored.iter().enumerate() {
        let b = &case.branches[branch];
        let current: Vec<f64> = x.iter().map(|v| v.current_sq[m]).collect();
        let pos = screened.iter().position(|&s| s == branch);
        let device = pos.map(|p| device_currents[p].clone());
        let (temps, max_temp) = match &b.thermal {
            Some(th) => {
                let scale = case.current_sq_scale(branch)?;
                let governing = device.as_ref().unwrap_or(&current);
                let a2: Vec<f64> = governing.iter().map(|c| c.max(0.0) * scale).collect();
                let periods = case.thermal_periods(branch)?;
                let temps = simulate_schedule(th.initial_temp, &a2, &periods, case.dt).map_err(|e| Error::Thermal {
                    context: format!("report for line {}", b.id),
                    source: e,
                })?;
                (temps, th.conductor.max_temperature)
            }
            None => (Vec::new(), f64::NAN),
        };
        let cap = (0..x.len())
            .map(|t| caps[branch].as_ref().map(|c| c[t]).or(b.current_sq_limit_pu))
            .collect::<Option<Vec<f64>>>();
        lines.push(LineReport {
            id: b.id.clone(),
            branch,
            screened: pos.is_some(),
            current_sq_pu: current,
            device_current_sq_pu: device,
            cap_pu: cap,
            temps_k: temps,
            max_temp_k: max_temp,
        });
    }
    Ok((periods, lines, residuals))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub checks: Vec<Check>,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, value: f64, limit: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            passed: value <= limit,
            value,
            limit,
        });
    }

    fn exact(&mut self, name: &str, same: bool) {
        self.checks.push(Check {
            name: name.to_string(),
            passed: same,
            value: if same { 0.0 } else { 1.0 },
            limit: 0.0,
        });
    }
}

/// AC feasibility tolerance used when re-checking reports.
pub const VERIFY_AC_TOL: f64 = 1e-5;
/// Temperature limit tolerance, K.
pub const VERIFY_TEMP_TOL: f64 = 1e-6;
/// Ramp and box tolerance on device profiles, p.u.
pub const VERIFY_RAMP_TOL: f64 = 1e-6;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Re-derives every feasibility claim of a report from its raw vectors. With
/// a case, also rebuilds the consensus copies and re-checks AC feasibility,
/// caps, ramps and temperatures.
pub fn verify_report(report: &SolveReport, case: Option<&NetworkCase>) -> Result<Verification, Error> {
    let mut out = Verification { checks: Vec::new() };
    if let Some(snap) = &report.protocol {
        let last = &snap.last;
        let entry = &snap.entry;
        let gap = coupling_gap(&last.xc, &last.y);
        let d = gap.len();
        if report.status == SolveStatus::Converged {
            out.push("consensus_l2", norm2(&gap), (d as f64).sqrt() * report.eps);
        }
        out.push("reported_consensus_inf", (norm_inf(&gap) - report.consensus_inf).abs(), 0.0);
        out.exact("entry_penalty", entry.rho == 2.0 * entry.theta && last.rho == entry.rho);
        let e = entry_dual(&entry.w, &entry.u, entry.theta);
        out.exact("entry_dual_identity", e == entry.v);
        let p = primal_residual(&gap, &last.u);
        let s = slack_stationarity(&last.w, &last.u, &last.v_prev, &p, last.rho, last.theta);
        let scale = norm_inf(&last.v_prev)
            .max(norm_inf(&last.w))
            .max(last.rho * norm_inf(&gap))
            .max(1.0);
        out.push("slack_stationarity", norm_inf(&s) / scale, 1e-10);
        out.exact("dual_ascent_identity", dual_ascent(&last.v_prev, &p, last.rho) == last.v);
    }
    let Some(case) = case else {
        return Ok(out);
    };
    let layout = AcLayout::new(case);
    let x = report.vars();
    if x.len() != case.horizon || x.iter().any(|v| v.e.len() != layout.n_bus || v.current_sq.len() != layout.monitored.len()) {
        return Err(Error::Config("report does not match the case dimensions".into()));
    }
    let screened: Vec<usize> = report.screened.iter().map(|s| s.branch).collect();
    let caps = ac_caps(case, &report.scheme, &screened)?;
    let mut ac = ResidualSummary::default();
    for (t, v) in x.iter().enumerate() {
        let model = PeriodModel::new(case, &layout, t, &period_caps(&caps, t));
        ac = ac.merge(&residual_summary(&model, v));
    }
    out.push("ac_feasibility", ac.max(), VERIFY_AC_TOL);
    out.push("objective", {
        let c: f64 = x
            .iter()
            .enumerate()
            .map(|(t, v)| {
                let model = PeriodModel::new(case, &layout, t, &[]);
                let mut z = vec![0.0; layout.n()];
                layout.pack(v, &mut z);
                model.cost(&z)
            })
            .sum();
        (c - report.objective).abs() / report.objective.abs().max(1.0)
    }, 1e-12);
    if let Some(snap) = &report.protocol {
        let maps = SelectionMaps::new(case, &layout, &screened)?;
        out.exact("consensus_copies", maps.gather(&x) == snap.last.xc);
        // Device profiles.
        let mut ramp = 0.0f64;
        let mut temp = f64::NEG_INFINITY;
        for (dev, device) in maps.devices.iter().enumerate() {
            let y = &snap.last.y[maps.device_range(dev)];
            match *device {
                crate::admm::Device::Generator { gen } => {
                    let g = &case.generators[gen];
                    for t in 0..y.len() {
                        ramp = ramp.max(g.p_min - y[t]).max(y[t] - g.p_max);
                        if t > 0 {
                            let step = y[t] - y[t - 1];
                            ramp = ramp.max(step - g.ramp_up).max(-step - g.ramp_down);
                        }
                    }
                }
                crate::admm::Device::Line { branch, .. } => {
                    let th = case.branches[branch].thermal.as_ref().expect("thermal line");
                    let a2: Vec<f64> = y.iter().map(|c| c * crate::admm::consensus::KA2).collect();
                    let periods = case.thermal_periods(branch)?;
                    let temps = simulate_schedule(th.initial_temp, &a2, &periods, case.dt).map_err(|e| Error::Thermal {
                        context: format!("verify line {}", case.branches[branch].id),
                        source: e,
                    })?;
                    for t in temps {
                        temp = temp.max(t - th.conductor.max_temperature);
                    }
                    ramp = ramp.max(-y.iter().cloned().fold(f64::INFINITY, f64::min));
                }
            }
        }
        out.push("device_ramp_and_box", ramp.max(0.0), VERIFY_RAMP_TOL);
        if temp.is_finite() {
            out.push("device_temperature", temp.max(0.0), VERIFY_TEMP_TOL);
        }
    } else if report.method == SolveMethod::Monolithic {
        let mut ramp = 0.0f64;
        for (g, gen) in case.generators.iter().enumerate() {
            for t in 1..x.len() {
                let step = x[t].p[g] - x[t - 1].p[g];
                ramp = ramp.max(step - gen.ramp_up).max(-step - gen.ramp_down);
            }
        }
        out.push("ramp", ramp.max(0.0), VERIFY_AC_TOL);
    }
    let mut temp = 0.0f64;
    for line in &report.lines {
        if !line.temps_k.is_empty() {
            let gov = line.device_current_sq_pu.as_ref().unwrap_or(&line.current_sq_pu);
            let th = case.branches[line.branch].thermal.as_ref().expect("thermal line");
            let scale = case.current_sq_scale(line.branch)?;
            let a2: Vec<f64> = gov.iter().map(|c| c.max(0.0) * scale).collect();
            let temps = simulate_schedule(th.initial_temp, &a2, &case.thermal_periods(line.branch)?, case.dt)
                .map_err(|e| Error::Thermal {
                    context: format!("verify line {}", line.id),
                    source: e,
                })?;
            temp = temp.max(max_abs_diff(&temps, &line.temps_k));
        }
    }
    out.push("reported_temperatures", temp, 1e-9);
    Ok(out)
}
