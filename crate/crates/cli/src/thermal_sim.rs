//! Temperature trajectories of one conductor under a current schedule.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use dlr_core::thermal::{ConductorParams, ThermalPeriod, WeatherSample};

use crate::config::{load_case, Overrides};
use crate::emit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Conductor {
    Drake,
    Linnet,
}

#[derive(Args, Debug)]
pub struct ThermalSimCmd {
    /// Take conductor, weather and dt from this line of a case.
    #[arg(long, requires = "line")]
    case: Option<String>,
    #[arg(long)]
    line: Option<String>,
    #[command(flatten)]
    overrides: Overrides,
    /// Conductor when no case is given.
    #[arg(long, value_enum, default_value_t = Conductor::Drake)]
    conductor: Conductor,
    /// Constant weather when no case is given: wind speed, m/s.
    #[arg(long, default_value_t = 0.61)]
    wind: f64,
    /// Wind angle to the line axis, rad.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    angle: f64,
    /// Ambient temperature, K.
    #[arg(long, default_value_t = 313.15)]
    ambient: f64,
    /// Incident solar power, W/m.
    #[arg(long, default_value_t = 15.0)]
    solar: f64,
    /// Comma-separated current per period, A.
    #[arg(long, value_delimiter = ',', required = true)]
    currents: Vec<f64>,
    /// Initial conductor temperature, K (default: the line's, or ambient).
    #[arg(long)]
    initial: Option<f64>,
    /// Samples per period.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    substeps: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Row {
    pub period: usize,
    pub time_s: f64,
    #[serde(rename = "temp_K")]
    pub temp_k: f64,
    #[serde(rename = "temp_ss_K")]
    pub temp_ss_k: f64,
}

/// Samples the transient and steady-state temperatures; row 0 is the start.
/// Period `t` (1-based) covers `((t-1) dt, t dt]`.
pub fn trajectory(initial: f64, currents_a: &[f64], periods: &[ThermalPeriod], dt: f64, substeps: usize) -> Result<Vec<Row>> {
    if currents_a.len() != periods.len() {
        bail!("{} currents for {} periods", currents_a.len(), periods.len());
    }
    let mut rows = Vec::with_capacity(1 + periods.len() * substeps);
    let first_ss = periods[0].steady_state(currents_a[0] * currents_a[0])?;
    rows.push(Row {
        period: 0,
        time_s: 0.0,
        temp_k: initial,
        temp_ss_k: first_ss,
    });
    let mut start = initial;
    for (t, (p, &i)) in periods.iter().zip(currents_a).enumerate() {
        let i2 = i * i;
        let ss = p.steady_state(i2).with_context(|| format!("period {}", t + 1))?;
        let mut end = start;
        for k in 1..=substeps {
            let h = dt * k as f64 / substeps as f64;
            end = p.step(start, i2, h).with_context(|| format!("period {}", t + 1))?;
            rows.push(Row {
                period: t + 1,
                time_s: t as f64 * dt + h,
                temp_k: end,
                temp_ss_k: ss,
            });
        }
        start = end;
    }
    Ok(rows)
}

pub fn run(cmd: &ThermalSimCmd) -> Result<ExitCode> {
    if cmd.currents.iter().any(|i| !(i.is_finite() && *i >= 0.0)) {
        bail!("--currents must be non-negative");
    }
    let n = cmd.currents.len();
    let (periods, dt, initial) = match (&cmd.case, &cmd.line) {
        (Some(spec), Some(id)) => {
            let case = load_case(spec, &cmd.overrides)?;
            let b = case.branch_index(id).with_context(|| format!("no line `{id}` in {}", case.name))?;
            let th = case.branches[b]
                .thermal
                .as_ref()
                .with_context(|| format!("line `{id}` has no thermal data"))?;
            let mut periods = case.thermal_periods(b)?;
            if n > periods.len() {
                bail!("{n} currents but the case has {} periods", periods.len());
            }
            periods.truncate(n);
            (periods, case.dt, cmd.initial.unwrap_or(th.initial_temp))
        }
        (None, _) => {
            let params = match cmd.conductor {
                Conductor::Drake => ConductorParams::drake(),
                Conductor::Linnet => ConductorParams::linnet(),
            };
            let weather = WeatherSample {
                wind_speed: cmd.wind,
                wind_angle: cmd.angle,
                ambient_temp: cmd.ambient,
                solar_gain: cmd.solar,
            };
            let period = ThermalPeriod::fit(params, weather)?;
            (vec![period; n], cmd.overrides.dt.unwrap_or(300.0), cmd.initial.unwrap_or(cmd.ambient))
        }
        (Some(_), None) => bail!("--case needs --line"),
    };
    let rows = trajectory(initial, &cmd.currents, &periods, dt, cmd.substeps as usize)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    emit(cmd.out.as_ref(), &String::from_utf8(w.into_inner()?)?)?;
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn period() -> ThermalPeriod {
        ThermalPeriod::fit(
            ConductorParams::drake(),
            WeatherSample {
                wind_speed: 0.61,
                wind_angle: std::f64::consts::FRAC_PI_2,
                ambient_temp: 313.15,
                solar_gain: 15.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn ampacity_current_approaches_the_limit() {
        let p = period();
        let i_max = p.ampacity(p.params.max_temperature).current();
        let rows = trajectory(320.0, &vec![i_max; 40], &vec![p; 40], 300.0, 1).unwrap();
        let last = rows.last().unwrap();
        assert!((last.temp_ss_k - p.params.max_temperature).abs() < 1e-6);
        assert!((last.temp_k - p.params.max_temperature).abs() < 1e-2, "{}", last.temp_k);
        assert!(rows.windows(2).all(|w| w[1].temp_k >= w[0].temp_k));
    }

    #[test]
    fn step_increase_lags_the_new_steady_state() {
        let p = period();
        let i_max = p.ampacity(p.params.max_temperature).current();
        let rows = trajectory(330.0, &[0.5 * i_max, 1.3 * i_max], &[p, p], 300.0, 5).unwrap();
        let second: Vec<_> = rows.iter().filter(|r| r.period == 2).collect();
        assert!(second.iter().all(|r| r.temp_k < r.temp_ss_k));
        assert_eq!(second.last().unwrap().time_s, 600.0);
    }

    #[test]
    fn zero_current_cools_toward_unloaded_equilibrium() {
        let p = period();
        let unloaded = p.steady_state(0.0).unwrap();
        let rows = trajectory(370.0, &[0.0; 3], &[p; 3], 300.0, 2).unwrap();
        assert!(rows.windows(2).all(|w| w[1].temp_k < w[0].temp_k && w[1].temp_k > unloaded));
        assert_eq!(rows.len(), 7);
    }
}
