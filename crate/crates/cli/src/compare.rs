//! Scheme comparison relative to a static-rating baseline.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use dlr_core::admm::{solve_admm, solve_monolithic};
use dlr_core::network::NetworkCase;
use dlr_core::ratings::{current_caps, RatingKind, RatingScheme};
use dlr_core::report::{SolveReport, SolveStatus};

use crate::config::{build_scheme, CaseArgs, SchemeName, SeasonName, SolverArgs};
use crate::{emit, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct CompareCmd {
    #[command(flatten)]
    case: CaseArgs,
    /// Comma-separated schemes; at least two.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "slr,aar,dlr-ss,dlr-trans")]
    schemes: Vec<SchemeName>,
    #[arg(long, value_enum, default_value_t = SeasonName::Summer)]
    season: SeasonName,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = Method::Admm)]
    method: Method,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub scheme: String,
    pub status: SolveStatus,
    pub objective: f64,
    /// Mean admitted current over thermal lines and periods, A.
    pub mean_capacity_a: f64,
    pub renewable_mwh: f64,
    pub capacity_pct: f64,
    pub cost_pct: f64,
    pub renewable_pct: f64,
}

/// Admitted current per thermal line and period: the scheme's cap, raised to
/// the device-side current on lines carried by their temperature limit.
pub fn mean_capacity(case: &NetworkCase, scheme: &RatingScheme, report: &SolveReport) -> Result<f64> {
    let caps = current_caps(case, scheme)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (b, cap) in caps.iter().enumerate() {
        let Some(cap) = cap else { continue };
        let scale = case.current_sq_scale(b)?;
        let device = report
            .lines
            .iter()
            .find(|l| l.branch == b)
            .and_then(|l| l.device_current_sq_pu.as_ref());
        for (t, &c) in cap.iter().enumerate() {
            let admitted = match device {
                Some(d) => c.max(d[t]),
                None => c,
            };
            sum += (admitted.max(0.0) * scale).sqrt();
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

pub fn renewable_energy(case: &NetworkCase, report: &SolveReport) -> f64 {
    let hours = case.dt / 3600.0;
    report
        .periods
        .iter()
        .map(|p| {
            case.generators
                .iter()
                .zip(&p.dispatch_mw)
                .filter(|(g, _)| g.renewable)
                .map(|(_, mw)| mw * hours)
                .sum::<f64>()
        })
        .sum()
}

fn pct(value: f64, base: f64) -> f64 {
    if base == value {
        0.0
    } else {
        100.0 * (value / base - 1.0)
    }
}

/// Fills the delta columns against row `baseline`.
pub fn with_deltas(mut rows: Vec<CompareRow>, baseline: usize) -> Vec<CompareRow> {
    let base = rows[baseline].clone();
    for r in rows.iter_mut() {
        r.capacity_pct = pct(r.mean_capacity_a, base.mean_capacity_a);
        r.cost_pct = pct(r.objective, base.objective);
        r.renewable_pct = pct(r.renewable_mwh, base.renewable_mwh);
    }
    rows
}

pub fn run(cmd: &CompareCmd) -> Result<ExitCode> {
    if cmd.schemes.len() < 2 {
        bail!("--schemes needs at least two schemes");
    }
    let case = cmd.case.load()?;
    let params = cmd.solver.params()?;
    let mut rows = Vec::with_capacity(cmd.schemes.len());
    let mut all_converged = true;
    for &name in &cmd.schemes {
        let scheme = build_scheme(name, cmd.season);
        log::info!("solving {} under {scheme}", case.name);
        let report = match cmd.method {
            Method::Admm => solve_admm(&case, &scheme, &params, &mut |_| {})?,
            Method::Monolithic => solve_monolithic(&case, &scheme, &params)?,
        };
        all_converged &= report.status == SolveStatus::Converged;
        rows.push(CompareRow {
            scheme: scheme.to_string(),
            status: report.status,
            objective: report.objective,
            mean_capacity_a: mean_capacity(&case, &scheme, &report)?,
            renewable_mwh: renewable_energy(&case, &report),
            capacity_pct: 0.0,
            cost_pct: 0.0,
            renewable_pct: 0.0,
        });
    }
    let baseline = cmd
        .schemes
        .iter()
        .position(|&s| RatingKind::from(s) == RatingKind::Slr)
        .unwrap_or_else(|| {
            log::warn!("no SLR run; deltas are relative to {}", rows[0].scheme);
            0
        });
    let rows = with_deltas(rows, baseline);
    let text = match cmd.format {
        Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r)?;
            }
            String::from_utf8(w.into_inner()?)?
        }
    };
    emit(cmd.out.as_ref(), &text)?;
    Ok(if all_converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}
