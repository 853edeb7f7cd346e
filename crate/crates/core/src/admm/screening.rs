//! Selection of the lines whose transient model can add capacity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acopf::{solve_ac_subproblem, AcLayout, AcSolution, AcSubproblemSpec};
use crate::network::NetworkCase;
use crate::nlp::Options;
use crate::ratings::{current_caps, CurrentCaps, RatingScheme};
use crate::Error;

/// Lines starting at or above this temperature are never screened, K.
pub const SCREEN_INITIAL_LIMIT: f64 = 363.15;

/// A line counts as reaching its limit when its steady-state temperature is
/// within this margin of `T_max`, K.
pub const SCREEN_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenedLine {
    pub id: String,
    pub branch: usize,
    pub initial_temp_k: f64,
    /// Highest steady-state temperature over the horizon at the screening dispatch.
    pub peak_temp_k: f64,
}

#[derive(Debug, Clone)]
pub struct Screening {
    pub lines: Vec<ScreenedLine>,
    /// Single-period solutions under steady-state caps.
    pub solutions: Vec<AcSolution>,
}

/// Caps of one period from a per-branch schedule.
pub fn period_caps(caps: &CurrentCaps, t: usize) -> Vec<Option<f64>> {
    caps.iter().map(|c| c.as_ref().map(|s| s[t])).collect()
}

/// Independent single-period solves, in period order.
pub fn solve_periods(
    case: &NetworkCase,
    layout: &AcLayout,
    caps: &CurrentCaps,
    options: &Options,
    cost_scale: f64,
) -> Result<Vec<AcSolution>, Error> {
    (0..case.horizon)
        .into_par_iter()
        .map(|t| {
            let spec = AcSubproblemSpec {
                t,
                rho: 0.0,
                terms: Vec::new(),
                caps: period_caps(caps, t),
                warm_start: None,
                cost_scale,
            };
            solve_ac_subproblem(&spec, case, layout, options)
        })
        .collect()
}

/// Solves every period under steady-state caps and keeps the lines that start
/// below [`SCREEN_INITIAL_LIMIT`] and reach their limit in some period.
pub fn screen_transient_lines(case: &NetworkCase, options: &Options, cost_scale: f64) -> Result<Screening, Error> {
    let layout = AcLayout::new(case);
    let caps = current_caps(case, &RatingScheme::dlr_ss())?;
    let solutions = solve_periods(case, &layout, &caps, options, cost_scale)?;
    let mut lines = Vec::new();
    for branch in case.thermal_lines() {
        let b = &case.branches[branch];
        let th = b.thermal.as_ref().expect("thermal line");
        let m = layout.monitored_pos[branch].expect("thermal lines are monitored");
        let periods = case.thermal_periods(branch)?;
        let scale = case.current_sq_scale(branch)?;
        let mut peak = f64::NEG_INFINITY;
        for (t, sol) in solutions.iter().enumerate() {
            let i2 = sol.vars.current_sq[m].max(0.0) * scale;
            let ss = periods[t].steady_state(i2).map_err(|e| Error::Thermal {
                context: format!("screening line {} period {t}", b.id),
                source: e,
            })?;
            peak = peak.max(ss);
        }
        let max_temp = th.conductor.max_temperature;
        let selected = th.initial_temp < SCREEN_INITIAL_LIMIT && peak >= max_temp - SCREEN_MARGIN;
        log::debug!(
            "screen {}: initial {:.2} K, peak {:.2} K, limit {:.2} K -> {}",
            b.id,
            th.initial_temp,
            peak,
            max_temp,
            selected
        );
        if selected {
            lines.push(ScreenedLine {
                id: b.id.clone(),
                branch,
                initial_temp_k: th.initial_temp,
                peak_temp_k: peak,
            });
        }
    }
    Ok(Screening { lines, solutions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{build, two_bus, WeatherRegime};
    use crate::network::CaseFile;

    fn two_line(initial_temp_k: f64) -> CaseFile {
        let mut file = two_bus(WeatherRegime::CalmHot, 2);
        file.branches[0].thermal.as_mut().unwrap().initial_temp_k = initial_temp_k;
        let mut weak = file.branches[0].clone();
        weak.id = "L2".into();
        weak.x = 0.3;
        weak.r = 0.03;
        weak.thermal = None;
        file.branches.push(weak);
        scale_demand(&mut file, 1.8);
        file
    }

    fn scale_demand(file: &mut CaseFile, factor: f64) {
        for series in file.demand.values_mut() {
            for d in series.iter_mut() {
                d.p *= factor;
                d.q *= factor;
            }
        }
    }

    #[test]
    fn lightly_loaded_network_selects_nothing() {
        let mut file = two_bus(WeatherRegime::CalmHot, 2);
        scale_demand(&mut file, 0.1);
        let s = screen_transient_lines(&build(&file).unwrap(), &Options::default(), 1.0).unwrap();
        assert!(s.lines.is_empty());
        assert_eq!(s.solutions.len(), 2);
    }

    #[test]
    fn line_at_its_cap_is_selected_when_cool() {
        let case = build(&two_line(333.15)).unwrap();
        let s = screen_transient_lines(&case, &Options::default(), 1.0).unwrap();
        assert_eq!(s.lines.len(), 1);
        assert_eq!(s.lines[0].id, "L1");
        let limit = case.branches[0].thermal.as_ref().unwrap().conductor.max_temperature;
        assert!(s.lines[0].peak_temp_k >= limit - SCREEN_MARGIN);
    }

    #[test]
    fn hot_start_is_excluded() {
        let case = build(&two_line(368.15)).unwrap();
        let s = screen_transient_lines(&case, &Options::default(), 1.0).unwrap();
        assert!(s.lines.is_empty());
    }
}
