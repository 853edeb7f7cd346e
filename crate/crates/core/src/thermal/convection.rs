use serde::{Deserialize, Serialize};

use super::{ConductorParams, ThermalError, WeatherSample, ZERO_CELSIUS};

/// Number of uniformly spaced temperatures used for the convection fit.
pub const FIT_SAMPLES: usize = 64;

/// Wind speeds below this are clamped so the Reynolds number stays positive.
const MIN_WIND_SPEED: f64 = 0.1;

/// Source of the convective heat loss `q_c(T)`, W/m.
pub trait ConvectionModel: Sync {
    fn heat_loss(&self, params: &ConductorParams, weather: &WeatherSample, temp: f64) -> f64;
}

/// IEEE 738 forced convection at sea level: the larger of the low- and
/// high-Reynolds correlations, with film-temperature air properties.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ieee738Forced;

impl Ieee738Forced {
    fn wind_direction_factor(angle: f64) -> f64 {
        1.194 - angle.cos() + 0.194 * (2.0 * angle).cos() + 0.368 * (2.0 * angle).sin()
    }
}

impl ConvectionModel for Ieee738Forced {
    fn heat_loss(&self, params: &ConductorParams, weather: &WeatherSample, temp: f64) -> f64 {
        let film_c = 0.5 * (temp + weather.ambient_temp) - ZERO_CELSIUS;
        let viscosity = 1.458e-6 * (film_c + 273.0).powf(1.5) / (film_c + 383.4);
        let density = 1.293 / (1.0 + 0.00367 * film_c);
        let conductivity = 2.424e-2 + 7.477e-5 * film_c - 4.407e-9 * film_c * film_c;
        let wind = weather.wind_speed.max(MIN_WIND_SPEED);
        let reynolds = params.diameter * density * wind / viscosity;
        let k_angle = Self::wind_direction_factor(weather.wind_angle);
        let delta = temp - weather.ambient_temp;
        let low = k_angle * (1.01 + 1.35 * reynolds.powf(0.52)) * conductivity * delta;
        let high = k_angle * 0.754 * reynolds.powf(0.6) * conductivity * delta;
        if delta >= 0.0 {
            low.max(high)
        } else {
            low.min(high)
        }
    }
}

/// Forced convective loss with the default IEEE 738 model.
pub fn exact_convection(params: &ConductorParams, weather: &WeatherSample, temp: f64) -> f64 {
    Ieee738Forced.heat_loss(params, weather, temp)
}

/// Least-squares line `q_c(T) ~ slope * T + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConvection {
    /// W/(m K).
    pub slope: f64,
    /// W/m.
    pub intercept: f64,
    pub fit_r2: f64,
}

impl LinearConvection {
    pub fn eval(&self, temp: f64) -> f64 {
        self.slope * temp + self.intercept
    }
}

pub fn linearize_convection(
    params: &ConductorParams,
    weather: &WeatherSample,
    fit_range: (f64, f64),
) -> Result<LinearConvection, ThermalError> {
    linearize_with(&Ieee738Forced, params, weather, fit_range)
}

/// Fits `model` over `FIT_SAMPLES` uniform temperatures in `fit_range`.
pub fn linearize_with<M: ConvectionModel + ?Sized>(
    model: &M,
    params: &ConductorParams,
    weather: &WeatherSample,
    fit_range: (f64, f64),
) -> Result<LinearConvection, ThermalError> {
    let (lo, hi) = fit_range;
    let n = FIT_SAMPLES;
    let temps: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let losses: Vec<f64> = temps
        .iter()
        .map(|&t| model.heat_loss(params, weather, t))
        .collect();

    let mean_t = temps.iter().sum::<f64>() / n as f64;
    let mean_q = losses.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&t, &q) in temps.iter().zip(&losses) {
        sxx += (t - mean_t) * (t - mean_t);
        sxy += (t - mean_t) * (q - mean_q);
        syy += (q - mean_q) * (q - mean_q);
    }
    if syy == 0.0 || sxx == 0.0 {
        return Err(ThermalError::DegenerateFit);
    }
    let slope = sxy / sxx;
    let intercept = mean_q - slope * mean_t;
    let ss_res: f64 = temps
        .iter()
        .zip(&losses)
        .map(|(&t, &q)| (q - slope * t - intercept).powi(2))
        .sum();
    let fit_r2 = (1.0 - ss_res / syy).clamp(0.0, 1.0);
    Ok(LinearConvection {
        slope,
        intercept,
        fit_r2,
    })
}
