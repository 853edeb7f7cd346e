//! Conductor heat balance.
//!
//! The conductor temperature obeys `m c_p dT/dt = r i^2 + q_s - q_c(T) - q_r(T)`
//! with radiative loss `q_r = pi D eps sigma (T^4 - T_a^4)`. Once forced
//! convection is replaced by a least-squares line `q_c(T) ~ k_c T + k_c0`, the
//! right-hand side becomes the quartic `-K4 T^4 - K1 T + K0`, whose trajectory
//! has a closed form in terms of the real roots `s1 > 0` and `-s2 < 0`.
//!
//! All quantities are per unit length and temperatures are in kelvin.

mod convection;
mod flow;
mod roots;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use convection::{
    exact_convection, linearize_convection, linearize_with, ConvectionModel, Ieee738Forced,
    LinearConvection, FIT_SAMPLES,
};
pub use flow::{
    flow_map_gradient, max_steady_current_sq, simulate_schedule, smoothness_bounds,
    smoothness_bounds_in_units, steady_state_temperature, step_temperature, tau_of_temperature,
    Ampacity, FlowSensitivity, SmoothnessBounds, BISECTION_TOL_K, SENSITIVITY_RK4_STEPS,
};
pub use roots::{quartic_roots, QuarticRoots};

/// Stefan-Boltzmann constant, W/(m^2 K^4).
pub const STEFAN_BOLTZMANN: f64 = 5.6704e-8;

/// 0 degrees Celsius in kelvin.
pub const ZERO_CELSIUS: f64 = 273.15;

/// Default conductor temperature limit (100 C).
pub const DEFAULT_MAX_TEMPERATURE: f64 = 373.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermalError {
    #[error("invalid conductor parameter `{field}` = {value}")]
    InvalidParams { field: &'static str, value: f64 },
    #[error("invalid weather field `{field}` = {value}")]
    InvalidWeather { field: &'static str, value: f64 },
    #[error("convection fit is degenerate: all sampled heat losses are identical")]
    DegenerateFit,
    #[error("K0 = {k0:.6e} is not positive; the sample is outside the regime of the closed form")]
    NonPositiveK0 { k0: f64 },
    #[error("root finder failed to converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("temperature {temp} K is not on the monotone branch from {start} K toward {root} K")]
    OutOfBranch { temp: f64, start: f64, root: f64 },
    #[error("current and weather sequences differ in length ({currents} vs {periods})")]
    LengthMismatch { currents: usize, periods: usize },
    #[error("period {period}: {source}")]
    AtPeriod {
        period: usize,
        #[source]
        source: Box<ThermalError>,
    },
}

impl ThermalError {
    fn at(self, period: usize) -> Self {
        ThermalError::AtPeriod {
            period,
            source: Box::new(self),
        }
    }
}

/// Physical data of one conductor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductorParams {
    /// Hot (at `max_temperature`) AC resistance, ohm/m.
    pub resistance_per_length: f64,
    /// kg/m.
    pub mass_per_length: f64,
    /// J/(kg K).
    pub specific_heat: f64,
    /// Outside diameter, m.
    pub diameter: f64,
    pub emissivity: f64,
    pub absorptivity: f64,
    /// K.
    pub max_temperature: f64,
}

impl ConductorParams {
    /// 795 kcmil 26/7 ACSR "Drake", the usual textbook conductor.
    pub fn drake() -> Self {
        ConductorParams {
            resistance_per_length: 9.390e-5,
            mass_per_length: 1.628,
            specific_heat: 804.7,
            diameter: 0.02814,
            emissivity: 0.8,
            absorptivity: 0.8,
            max_temperature: DEFAULT_MAX_TEMPERATURE,
        }
    }

    /// 336.4 kcmil 26/7 ACSR "Linnet".
    pub fn linnet() -> Self {
        ConductorParams {
            resistance_per_length: 2.160e-4,
            mass_per_length: 0.6883,
            specific_heat: 810.0,
            diameter: 0.01831,
            emissivity: 0.8,
            absorptivity: 0.8,
            max_temperature: DEFAULT_MAX_TEMPERATURE,
        }
    }

    /// Heat capacity per unit length `m c_p`, J/(m K).
    pub fn heat_capacity(&self) -> f64 {
        self.mass_per_length * self.specific_heat
    }

    pub fn validate(&self) -> Result<(), ThermalError> {
        let positive = [
            ("resistance_per_length", self.resistance_per_length),
            ("mass_per_length", self.mass_per_length),
            ("specific_heat", self.specific_heat),
            ("diameter", self.diameter),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ThermalError::InvalidParams { field, value });
            }
        }
        for (field, value) in [
            ("emissivity", self.emissivity),
            ("absorptivity", self.absorptivity),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ThermalError::InvalidParams { field, value });
            }
        }
        if !(self.max_temperature > ZERO_CELSIUS && self.max_temperature.is_finite()) {
            return Err(ThermalError::InvalidParams {
                field: "max_temperature",
                value: self.max_temperature,
            });
        }
        Ok(())
    }
}

/// Weather on one line over one dispatch interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherSample {
    /// m/s.
    pub wind_speed: f64,
    /// Angle between wind and line axis, rad in [0, pi/2].
    pub wind_angle: f64,
    /// K.
    pub ambient_temp: f64,
    /// Incident solar power per unit length, W/m. Scaled by the conductor
    /// absorptivity before entering the heat balance.
    pub solar_gain: f64,
}

impl WeatherSample {
    pub fn validate(&self) -> Result<(), ThermalError> {
        if !(self.wind_speed >= 0.0 && self.wind_speed.is_finite()) {
            return Err(ThermalError::InvalidWeather {
                field: "wind_speed",
                value: self.wind_speed,
            });
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&self.wind_angle) {
            return Err(ThermalError::InvalidWeather {
                field: "wind_angle",
                value: self.wind_angle,
            });
        }
        if !(self.ambient_temp > 0.0 && self.ambient_temp.is_finite()) {
            return Err(ThermalError::InvalidWeather {
                field: "ambient_temp",
                value: self.ambient_temp,
            });
        }
        if !(self.solar_gain >= 0.0 && self.solar_gain.is_finite()) {
            return Err(ThermalError::InvalidWeather {
                field: "solar_gain",
                value: self.solar_gain,
            });
        }
        Ok(())
    }
}

/// Coefficients of `dT/dt = -K4 T^4 - K1 T + K0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalCoefficients {
    /// Current-independent part of K0, K/s.
    pub k0_prime: f64,
    /// K/s.
    pub k0: f64,
    /// 1/s.
    pub k1: f64,
    /// 1/(s K^3).
    pub k4: f64,
    /// `r / (m c_p)`, K/(s A^2).
    pub r_prime: f64,
}

impl ThermalCoefficients {
    /// Right-hand side of the temperature ODE.
    pub fn rate(&self, temp: f64) -> f64 {
        -self.k4 * temp.powi(4) - self.k1 * temp + self.k0
    }

    /// Derivative of [`rate`](Self::rate) with respect to temperature.
    pub fn rate_slope(&self, temp: f64) -> f64 {
        -4.0 * self.k4 * temp.powi(3) - self.k1
    }

    /// Same conductor and weather with a different squared current.
    pub fn with_current_sq(&self, current_sq: f64) -> Self {
        ThermalCoefficients {
            k0: self.k0_prime + self.r_prime * current_sq,
            ..*self
        }
    }
}

/// Coefficients without the `K0 > 0` check; ampacity needs them in hot weather.
pub(crate) fn raw_coefficients(
    params: &ConductorParams,
    weather: &WeatherSample,
    lin: &LinearConvection,
    current_sq: f64,
) -> ThermalCoefficients {
    let mcp = params.heat_capacity();
    let rad = std::f64::consts::PI * params.diameter * params.emissivity * STEFAN_BOLTZMANN;
    let solar = params.absorptivity * weather.solar_gain;
    let k0_prime = (rad * weather.ambient_temp.powi(4) + solar - lin.intercept) / mcp;
    let r_prime = params.resistance_per_length / mcp;
    ThermalCoefficients {
        k0_prime,
        k0: k0_prime + r_prime * current_sq,
        k1: lin.slope / mcp,
        k4: rad / mcp,
        r_prime,
    }
}

/// ODE coefficients for a given squared current (A^2).
pub fn compute_coefficients(
    params: &ConductorParams,
    weather: &WeatherSample,
    lin: &LinearConvection,
    current_sq: f64,
) -> Result<ThermalCoefficients, ThermalError> {
    let coeffs = raw_coefficients(params, weather, lin, current_sq.max(0.0));
    if coeffs.k0 <= 0.0 {
        return Err(ThermalError::NonPositiveK0 { k0: coeffs.k0 });
    }
    Ok(coeffs)
}

/// Conductor, weather and fitted convection for one dispatch interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalPeriod {
    pub params: ConductorParams,
    pub weather: WeatherSample,
    pub convection: LinearConvection,
}

impl ThermalPeriod {
    /// Fits the convection line over `[T_a, T_max + 10]` with the IEEE 738 model.
    pub fn fit(params: ConductorParams, weather: WeatherSample) -> Result<Self, ThermalError> {
        params.validate()?;
        weather.validate()?;
        let range = (weather.ambient_temp, params.max_temperature + 10.0);
        let convection = linearize_convection(&params, &weather, range)?;
        Ok(ThermalPeriod {
            params,
            weather,
            convection,
        })
    }

    pub fn coefficients(&self, current_sq: f64) -> Result<ThermalCoefficients, ThermalError> {
        compute_coefficients(&self.params, &self.weather, &self.convection, current_sq)
    }

    pub fn step(&self, start: f64, current_sq: f64, dt: f64) -> Result<f64, ThermalError> {
        step_temperature(
            start,
            current_sq,
            &self.params,
            &self.weather,
            &self.convection,
            dt,
        )
    }

    pub fn steady_state(&self, current_sq: f64) -> Result<f64, ThermalError> {
        steady_state_temperature(current_sq, &self.params, &self.weather, &self.convection)
    }

    pub fn ampacity(&self, t_max: f64) -> Ampacity {
        max_steady_current_sq(&self.params, &self.weather, &self.convection, t_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weather() -> WeatherSample {
        WeatherSample {
            wind_speed: 0.61,
            wind_angle: std::f64::consts::FRAC_PI_2,
            ambient_temp: 313.15,
            solar_gain: 20.0,
        }
    }

    #[test]
    fn zero_current_gives_k0_prime() {
        let p = ThermalPeriod::fit(ConductorParams::drake(), weather()).unwrap();
        let c = p.coefficients(0.0).unwrap();
        assert_eq!(c.k0, c.k0_prime);
    }

    #[test]
    fn doubling_heat_capacity_halves_coefficients() {
        let params = ConductorParams::drake();
        let w = weather();
        let lin = linearize_convection(&params, &w, (w.ambient_temp, 383.15)).unwrap();
        let a = compute_coefficients(&params, &w, &lin, 4.0e5).unwrap();
        let heavy = ConductorParams {
            mass_per_length: 2.0 * params.mass_per_length,
            ..params
        };
        let b = compute_coefficients(&heavy, &w, &lin, 4.0e5).unwrap();
        for (x, y) in [
            (a.k0, b.k0),
            (a.k1, b.k1),
            (a.k4, b.k4),
            (a.r_prime, b.r_prime),
        ] {
            assert!((x - 2.0 * y).abs() <= 1e-14 * x.abs());
        }
    }

    #[test]
    fn coefficients_match_hand_evaluation() {
        // Hand evaluation with a prescribed convection line.
        let params = ConductorParams::drake();
        let w = weather();
        let lin = LinearConvection {
            slope: 1.4,
            intercept: -1.4 * 313.15,
            fit_r2: 1.0,
        };
        let c = compute_coefficients(&params, &w, &lin, 1.0e6).unwrap();
        let mcp = 1.628 * 804.7;
        let rad = std::f64::consts::PI * 0.02814 * 0.8 * 5.6704e-8;
        let k0p = (rad * 313.15f64.powi(4) + 0.8 * 20.0 + 1.4 * 313.15) / mcp;
        assert!((c.k0_prime - k0p).abs() < 1e-15);
        assert!((c.k0 - (k0p + 9.39e-5 / mcp * 1.0e6)).abs() < 1e-15);
        assert!((c.k1 - 1.4 / mcp).abs() < 1e-18);
        assert!((c.k4 - rad / mcp).abs() < 1e-24);
        // rough magnitudes for this conductor
        assert!((c.k4 - 3.06e-12).abs() < 0.01e-12, "{}", c.k4);
    }

    #[test]
    fn non_positive_k0_is_rejected() {
        let params = ConductorParams::drake();
        let w = weather();
        let lin = LinearConvection {
            slope: 1.4,
            intercept: 1.0e4,
            fit_r2: 1.0,
        };
        assert!(matches!(
            compute_coefficients(&params, &w, &lin, 0.0),
            Err(ThermalError::NonPositiveK0 { .. })
        ));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = ConductorParams::drake();
        p.emissivity = 1.5;
        assert!(p.validate().is_err());
        let mut p = ConductorParams::drake();
        p.max_temperature = 200.0;
        assert!(p.validate().is_err());
        let mut w = weather();
        w.wind_speed = -1.0;
        assert!(w.validate().is_err());
    }
}
