//! Case loading and solver flags shared by the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};

use dlr_core::admm::AdmmParams;
use dlr_core::fixtures;
use dlr_core::network::{parse_case_file, read_weather_csv, CaseFile, NetworkCase};
use dlr_core::ratings::{RatingKind, RatingScheme, Season};

#[derive(Args, Debug, Clone)]
pub struct CaseArgs {
    /// Case JSON file, or a bundled fixture such as `wscc9-step-change-3`.
    #[arg(long)]
    pub case: String,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// As [`CaseArgs`] with the case optional.
#[derive(Args, Debug, Clone)]
pub struct OptionalCaseArgs {
    #[arg(long)]
    pub case: Option<String>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// Weather CSV replacing the weather embedded in the case.
    #[arg(long)]
    pub weather: Option<PathBuf>,
    /// Keep only the first N periods.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Dispatch interval, s.
    #[arg(long)]
    pub dt: Option<f64>,
}

impl CaseArgs {
    pub fn load(&self) -> Result<NetworkCase> {
        load_case(&self.case, &self.overrides)
    }
}

impl OptionalCaseArgs {
    pub fn load(&self) -> Result<Option<NetworkCase>> {
        self.case.as_deref().map(|c| load_case(c, &self.overrides)).transpose()
    }
}

fn read_case_file(spec: &str) -> Result<CaseFile> {
    let path = Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {spec}"))?;
        return parse_case_file(&text).with_context(|| format!("invalid case file {spec}"));
    }
    fixtures::by_name(spec).with_context(|| format!("`{spec}` is neither a case file nor a fixture"))
}

pub fn load_case(spec: &str, o: &Overrides) -> Result<NetworkCase> {
    let mut file = read_case_file(spec)?;
    if let Some(p) = &o.weather {
        file.weather = read_weather_csv(p)?;
    }
    if let Some(h) = o.horizon {
        if h == 0 || h > file.horizon {
            bail!("--horizon must be between 1 and the case horizon {}", file.horizon);
        }
        file.horizon = h;
        for series in file.demand.values_mut() {
            series.truncate(h);
        }
        for series in file.weather.values_mut() {
            series.truncate(h);
        }
    }
    if let Some(dt) = o.dt {
        if !(dt.is_finite() && dt > 0.0) {
            bail!("--dt must be positive");
        }
        file.dt_seconds = dt;
    }
    NetworkCase::from_file(&file).with_context(|| format!("invalid case {spec}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeName {
    Slr,
    Aar,
    DlrSs,
    DlrTrans,
}

impl From<SchemeName> for RatingKind {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Slr => RatingKind::Slr,
            SchemeName::Aar => RatingKind::Aar,
            SchemeName::DlrSs => RatingKind::DlrSs,
            SchemeName::DlrTrans => RatingKind::DlrTrans,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeasonName {
    Summer,
    Winter,
}

impl From<SeasonName> for Season {
    fn from(s: SeasonName) -> Self {
        match s {
            SeasonName::Summer => Season::Summer,
            SeasonName::Winter => Season::Winter,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SchemeArgs {
    #[arg(long, value_enum, default_value_t = SchemeName::DlrSs)]
    pub scheme: SchemeName,
    /// Season of the static rating.
    #[arg(long, value_enum, default_value_t = SeasonName::Summer)]
    pub season: SeasonName,
}

impl SchemeArgs {
    pub fn scheme(&self) -> Result<RatingScheme> {
        Ok(build_scheme(self.scheme, self.season))
    }
}

pub fn build_scheme(name: SchemeName, season: SeasonName) -> RatingScheme {
    RatingScheme::with_season(name.into(), season.into())
}

#[derive(Args, Debug, Clone, Default)]
pub struct SolverArgs {
    /// Initial outer penalty.
    #[arg(long)]
    pub theta0: Option<f64>,
    /// Penalty growth factor.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Required decrease ratio of the slack norm.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Consensus tolerance per coordinate.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub inner_max: Option<usize>,
    #[arg(long)]
    pub outer_max: Option<usize>,
}

impl SolverArgs {
    pub fn params(&self) -> Result<AdmmParams> {
        let d = AdmmParams::default();
        let p = AdmmParams {
            theta0: self.theta0.unwrap_or(d.theta0),
            gamma: self.gamma.unwrap_or(d.gamma),
            omega: self.omega.unwrap_or(d.omega),
            eps: self.eps.unwrap_or(d.eps),
            inner_max: self.inner_max.unwrap_or(d.inner_max),
            outer_max: self.outer_max.unwrap_or(d.outer_max),
            ..d
        };
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_override_truncates_series() {
        let o = Overrides {
            horizon: Some(2),
            ..Overrides::default()
        };
        let case = load_case("wscc9-windy-cool-4", &o).unwrap();
        assert_eq!(case.horizon, 2);
        assert!(case.weather.iter().flatten().all(|w| w.len() == 2));
        assert!(load_case("wscc9-windy-cool-4", &Overrides { horizon: Some(5), ..o }).is_err());
    }

    #[test]
    fn solver_flags_are_validated() {
        let bad = SolverArgs {
            omega: Some(-1.0),
            ..SolverArgs::default()
        };
        assert!(bad.params().is_err());
        let good = SolverArgs {
            theta0: Some(50.0),
            ..SolverArgs::default()
        };
        assert_eq!(good.params().unwrap().theta0, 50.0);
    }

    #[test]
    fn season_only_attaches_to_slr() {
        assert_eq!(build_scheme(SchemeName::Aar, SeasonName::Winter), RatingScheme::aar());
        assert_eq!(build_scheme(SchemeName::Slr, SeasonName::Winter), RatingScheme::slr(Season::Winter));
    }
}
