//! Line rating schemes and the current caps they induce.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::network::NetworkCase;
use crate::thermal::{ThermalPeriod, WeatherSample};
use crate::Error;

/// Conservative wind assumed by the static and ambient-adjusted ratings.
pub const CONSERVATIVE_WIND_SPEED: f64 = 0.6;
pub const CONSERVATIVE_WIND_ANGLE: f64 = FRAC_PI_2;
pub const SUMMER_AMBIENT: f64 = 313.15;
pub const WINTER_AMBIENT: f64 = 293.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatingKind {
    Slr,
    Aar,
    DlrSs,
    DlrTrans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Season {
    Summer,
    Winter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RatingScheme {
    pub kind: RatingKind,
    /// Only meaningful for [`RatingKind::Slr`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub season: Option<Season>,
}

impl RatingScheme {
    pub fn slr(season: Season) -> Self {
        RatingScheme {
            kind: RatingKind::Slr,
            season: Some(season),
        }
    }

    pub fn aar() -> Self {
        Self::of(RatingKind::Aar)
    }

    pub fn dlr_ss() -> Self {
        Self::of(RatingKind::DlrSs)
    }

    pub fn dlr_trans() -> Self {
        Self::of(RatingKind::DlrTrans)
    }

    /// Builds a scheme, attaching `season` only where it applies.
    pub fn with_season(kind: RatingKind, season: Season) -> Self {
        match kind {
            RatingKind::Slr => Self::slr(season),
            k => Self::of(k),
        }
    }

    fn of(kind: RatingKind) -> Self {
        RatingScheme { kind, season: None }
    }

    pub fn validate(&self) -> Result<(), Error> {
        match (self.kind, self.season) {
            (RatingKind::Slr, None) => Err(Error::Config("SLR requires a season".into())),
            (RatingKind::Slr, Some(_)) | (_, None) => Ok(()),
            (k, Some(_)) => Err(Error::Config(format!("season is only valid for SLR, not {k}"))),
        }
    }

    pub fn is_transient(&self) -> bool {
        self.kind == RatingKind::DlrTrans
    }
}

impl fmt::Display for RatingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatingKind::Slr => "slr",
            RatingKind::Aar => "aar",
            RatingKind::DlrSs => "dlr-ss",
            RatingKind::DlrTrans => "dlr-trans",
        })
    }
}

impl FromStr for RatingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "slr" => Ok(RatingKind::Slr),
            "aar" => Ok(RatingKind::Aar),
            "dlr-ss" => Ok(RatingKind::DlrSs),
            "dlr-trans" => Ok(RatingKind::DlrTrans),
            other => Err(Error::Config(format!("unknown rating scheme `{other}`"))),
        }
    }
}

impl fmt::Display for RatingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.season {
            Some(Season::Summer) => write!(f, "{}-summer", self.kind),
            Some(Season::Winter) => write!(f, "{}-winter", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

/// Weather the scheme rates the line for. Solar gain is always the actual one.
pub fn effective_weather(scheme: &RatingScheme, actual: &WeatherSample) -> WeatherSample {
    match scheme.kind {
        RatingKind::DlrSs | RatingKind::DlrTrans => *actual,
        RatingKind::Aar => WeatherSample {
            wind_speed: CONSERVATIVE_WIND_SPEED,
            wind_angle: CONSERVATIVE_WIND_ANGLE,
            ..*actual
        },
        RatingKind::Slr => WeatherSample {
            wind_speed: CONSERVATIVE_WIND_SPEED,
            wind_angle: CONSERVATIVE_WIND_ANGLE,
            ambient_temp: match scheme.season.unwrap_or(Season::Summer) {
                Season::Summer => SUMMER_AMBIENT,
                Season::Winter => WINTER_AMBIENT,
            },
            solar_gain: actual.solar_gain,
        },
    }
}

/// Squared-current caps in p.u.^2: `caps[branch][t]` for thermal lines,
/// `None` for every other branch.
pub type CurrentCaps = Vec<Option<Vec<f64>>>;

/// Steady-state caps under the scheme's weather. For `DlrTrans` these are the
/// steady-state caps that unscreened lines keep.
pub fn current_caps(case: &NetworkCase, scheme: &RatingScheme) -> Result<CurrentCaps, Error> {
    scheme.validate()?;
    let mut caps = vec![None; case.branches.len()];
    for line in case.thermal_lines() {
        let branch = &case.branches[line];
        let thermal = branch.thermal.as_ref().expect("thermal line");
        let weather = case.weather[line].as_ref().expect("validated weather");
        let scale = case.current_sq_scale(line)?;
        let mut series = Vec::with_capacity(case.horizon);
        for (t, actual) in weather.iter().enumerate() {
            let w = effective_weather(scheme, actual);
            let period = ThermalPeriod::fit(thermal.conductor, w).map_err(|e| Error::Thermal {
                context: format!("cap for line {} period {t}", branch.id),
                source: e,
            })?;
            let amp = period.ampacity(thermal.conductor.max_temperature);
            if amp.clamped {
                log::warn!(
                    "line {} period {t}: unloaded conductor exceeds its limit under {scheme}; cap set to 0",
                    branch.id
                );
            }
            series.push(amp.current_sq / scale);
        }
        caps[line] = Some(series);
    }
    Ok(caps)
}
