//! Bundled desk-scale cases with synthetic weather.
//!
//! Every case is built in code so that tests, the CLI and the JSON files
//! under `fixtures/` share one definition.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::network::{
    BranchRecord, BusRecord, CaseFile, DemandRecord, GeneratorRecord, NetworkCase, NetworkError, ThermalRecord,
    WeatherRecord,
};
use crate::thermal::ConductorParams;
use crate::Error;

const DISPATCH_INTERVAL: f64 = 300.0;

/// Synthetic weather patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeatherRegime {
    /// Light wind, hot air, strong sun.
    CalmHot,
    /// Strong near-perpendicular wind and cool air.
    WindyCool,
    /// Strong wind that drops to near calm a third of the way through the horizon.
    StepChange,
}

impl WeatherRegime {
    pub const ALL: [WeatherRegime; 3] = [WeatherRegime::CalmHot, WeatherRegime::WindyCool, WeatherRegime::StepChange];

    /// Weather of line number `line` in period `t` of `horizon`.
    pub fn sample(&self, line: usize, t: usize, horizon: usize) -> WeatherRecord {
        // Small per-line spread so lines are not identical.
        let spread = 1.0 + 0.05 * ((line % 3) as f64 - 1.0);
        match self {
            WeatherRegime::CalmHot => WeatherRecord {
                wind_mps: 0.8 * spread,
                angle_rad: 0.9,
                ambient_k: 308.15,
                solar_wpm: 20.0,
            },
            WeatherRegime::WindyCool => WeatherRecord {
                wind_mps: 6.0 * spread,
                angle_rad: 1.3,
                ambient_k: 285.15,
                solar_wpm: 8.0,
            },
            WeatherRegime::StepChange => {
                let drop = horizon.div_ceil(3);
                WeatherRecord {
                    wind_mps: if t < drop { 6.0 * spread } else { 0.6 * spread },
                    angle_rad: FRAC_PI_2,
                    ambient_k: 300.15,
                    solar_wpm: 15.0,
                }
            }
        }
    }
}

impl fmt::Display for WeatherRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeatherRegime::CalmHot => "calm-hot",
            WeatherRegime::WindyCool => "windy-cool",
            WeatherRegime::StepChange => "step-change",
        })
    }
}

impl FromStr for WeatherRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        WeatherRegime::ALL
            .into_iter()
            .find(|r| r.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown weather regime `{s}`")))
    }
}

fn thermal(conductor: ConductorParams, base_kv: f64, initial_temp_k: f64) -> ThermalRecord {
    ThermalRecord {
        resistance_ohm_per_m: conductor.resistance_per_length,
        mass_kg_per_m: conductor.mass_per_length,
        specific_heat: conductor.specific_heat,
        diameter_m: conductor.diameter,
        emissivity: conductor.emissivity,
        absorptivity: conductor.absorptivity,
        max_temp_k: conductor.max_temperature,
        base_kv,
        initial_temp_k,
    }
}

fn bus(id: u32, reference: bool) -> BusRecord {
    BusRecord {
        id,
        gs: 0.0,
        bs: 0.0,
        v_min: 0.9,
        v_max: 1.1,
        reference,
    }
}

fn branch(id: &str, from: u32, to: u32, r: f64, x: f64, b: f64) -> BranchRecord {
    BranchRecord {
        id: id.to_string(),
        from,
        to,
        r,
        x,
        b,
        angle_min: -0.6,
        angle_max: 0.6,
        thermal: None,
        current_sq_limit_pu: None,
    }
}

#[allow(clippy::too_many_arguments)]
fn generator(id: &str, bus: u32, c2: f64, c1: f64, c0: f64, p_max: f64, ramp: f64, renewable: bool) -> GeneratorRecord {
    GeneratorRecord {
        id: id.to_string(),
        bus,
        c2,
        c1,
        c0,
        p_min: 0.0,
        p_max,
        q_min: -p_max,
        q_max: p_max,
        ramp_up: ramp,
        ramp_down: ramp,
        renewable,
    }
}

fn with_series(
    mut file: CaseFile,
    loads: &[(u32, f64, f64)],
    profile: &[f64],
    regime: WeatherRegime,
) -> CaseFile {
    file.horizon = profile.len();
    file.demand = loads
        .iter()
        .map(|&(bus, p, q)| {
            (
                bus.to_string(),
                profile.iter().map(|f| DemandRecord { p: p * f, q: q * f }).collect(),
            )
        })
        .collect();
    let horizon = profile.len();
    file.weather = file
        .branches
        .iter()
        .filter(|b| b.thermal.is_some())
        .enumerate()
        .map(|(i, b)| (b.id.clone(), (0..horizon).map(|t| regime.sample(i, t, horizon)).collect()))
        .collect::<BTreeMap<_, _>>();
    file
}

/// Load factor per period rising from `start` to `end`.
pub fn rising_profile(horizon: usize, start: f64, end: f64) -> Vec<f64> {
    (0..horizon)
        .map(|t| {
            if horizon == 1 {
                end
            } else {
                start + (end - start) * t as f64 / (horizon - 1) as f64
            }
        })
        .collect()
}

/// A cheap generator feeding a load over one thermal line, with an expensive
/// generator at the load.
pub fn two_bus(regime: WeatherRegime, horizon: usize) -> CaseFile {
    let mut line = branch("L1", 1, 2, 0.01, 0.1, 0.0);
    line.thermal = Some(thermal(ConductorParams::drake(), 138.0, 320.0));
    let file = CaseFile {
        schema_version: 1,
        name: format!("twobus-{regime}"),
        base_mva: 100.0,
        dt_seconds: DISPATCH_INTERVAL,
        horizon,
        buses: vec![bus(1, true), bus(2, false)],
        branches: vec![line],
        generators: vec![
            generator("G1", 1, 0.01, 20.0, 0.0, 4.0, 0.5, false),
            generator("G2", 2, 0.02, 45.0, 0.0, 4.0, 0.5, false),
        ],
        demand: BTreeMap::new(),
        weather: BTreeMap::new(),
    };
    with_series(file, &[(2, 2.6, 0.5)], &rising_profile(horizon, 0.9, 1.0), regime)
}

/// The WSCC 9-bus system with thermal models on its six lines. Line 8-9 and
/// line 6-7 use a light conductor so the cheap machines at buses 2 and 3 are
/// export-limited.
pub fn wscc9(regime: WeatherRegime, horizon: usize) -> CaseFile {
    let drake = ConductorParams::drake();
    let linnet = ConductorParams::linnet();
    let initial = 320.0;
    let mut branches = vec![
        branch("T14", 1, 4, 0.0, 0.0576, 0.0),
        branch("L45", 4, 5, 0.017, 0.092, 0.158),
        branch("L56", 5, 6, 0.039, 0.17, 0.358),
        branch("T36", 3, 6, 0.0, 0.0586, 0.0),
        branch("L67", 6, 7, 0.0119, 0.1008, 0.209),
        branch("L78", 7, 8, 0.0085, 0.072, 0.149),
        branch("T82", 8, 2, 0.0, 0.0625, 0.0),
        branch("L89", 8, 9, 0.032, 0.161, 0.306),
        branch("L94", 9, 4, 0.01, 0.085, 0.176),
    ];
    for b in branches.iter_mut() {
        let (conductor, kv) = match b.id.as_str() {
            "L89" => (linnet, 60.0),
            "L67" => (linnet, 69.0),
            _ if b.id.starts_with('T') => continue,
            _ => (drake, 230.0),
        };
        b.thermal = Some(thermal(conductor, kv, initial));
    }
    let file = CaseFile {
        schema_version: 1,
        name: format!("wscc9-{regime}"),
        base_mva: 100.0,
        dt_seconds: DISPATCH_INTERVAL,
        horizon,
        buses: (1..=9).map(|i| bus(i, i == 1)).collect(),
        branches,
        generators: vec![
            generator("G1", 1, 0.11, 5.0, 150.0, 2.5, 0.08, false),
            generator("G2", 2, 0.085, 1.2, 600.0, 3.0, 0.08, false),
            generator("G3", 3, 0.1225, 1.0, 335.0, 2.7, 0.08, true),
        ],
        demand: BTreeMap::new(),
        weather: BTreeMap::new(),
    };
    with_series(
        file,
        &[(5, 0.9, 0.3), (7, 1.0, 0.35), (9, 1.25, 0.5)],
        &rising_profile(horizon, 1.15, 1.25),
        regime,
    )
}

/// A 30-bus meshed system: a ring with chords, six generators and loads on
/// the remaining buses. The lines leaving the two cheapest plants carry
/// thermal models.
pub fn synthetic30(regime: WeatherRegime, horizon: usize) -> CaseFile {
    let n = 30u32;
    let mut branches = Vec::new();
    for i in 1..=n {
        let j = i % n + 1;
        let k = i as f64;
        branches.push(branch(&format!("R{i}"), i, j, 0.01 + 0.002 * (k % 4.0), 0.06 + 0.01 * (k % 5.0), 0.02));
    }
    for i in (1..=n).step_by(5) {
        let j = (i + 6) % n + 1;
        branches.push(branch(&format!("C{i}"), i, j, 0.02, 0.12, 0.03));
    }
    let gen_buses = [1u32, 6, 11, 16, 21, 26];
    let costs = [(0.02, 12.0), (0.05, 30.0), (0.01, 8.0), (0.04, 28.0), (0.03, 25.0), (0.06, 35.0)];
    let generators: Vec<GeneratorRecord> = gen_buses
        .iter()
        .zip(costs)
        .enumerate()
        .map(|(g, (&b, (c2, c1)))| {
            let p_max = if c1 < 15.0 { 5.0 } else { 3.0 };
            generator(&format!("G{}", g + 1), b, c2, c1, 0.0, p_max, 0.4, g == 2)
        })
        .collect();
    // Lines adjacent to the cheap plants at buses 1 and 11.
    let thermal_ids = ["R1", "R30", "R10", "R11", "C1", "C11"];
    for b in branches.iter_mut() {
        if thermal_ids.contains(&b.id.as_str()) {
            b.thermal = Some(thermal(ConductorParams::linnet(), 115.0, 320.0));
        }
    }
    let loads: Vec<(u32, f64, f64)> = (1..=n)
        .filter(|b| !gen_buses.contains(b))
        .map(|b| (b, 0.25 + 0.05 * (b % 3) as f64, 0.05 + 0.01 * (b % 2) as f64))
        .collect();
    let file = CaseFile {
        schema_version: 1,
        name: format!("synthetic30-{regime}"),
        base_mva: 100.0,
        dt_seconds: DISPATCH_INTERVAL,
        horizon,
        buses: (1..=n).map(|i| bus(i, i == 1)).collect(),
        branches,
        generators,
        demand: BTreeMap::new(),
        weather: BTreeMap::new(),
    };
    with_series(file, &loads, &rising_profile(horizon, 0.95, 1.05), regime)
}

/// Named fixture lookup used by the CLI: `<family>-<regime>[-<horizon>]`,
/// e.g. `wscc9-windy-cool-3`.
pub fn by_name(name: &str) -> Result<CaseFile, Error> {
    let (family, rest) = name
        .split_once('-')
        .ok_or_else(|| Error::Config(format!("unknown fixture `{name}`")))?;
    let (regime, horizon) = match rest.rsplit_once('-') {
        Some((r, h)) if h.chars().all(|c| c.is_ascii_digit()) => (r, h.parse().expect("digits")),
        _ => (rest, 3),
    };
    let regime: WeatherRegime = regime.parse()?;
    if horizon == 0 {
        return Err(Error::Config("fixture horizon must be positive".into()));
    }
    match family {
        "twobus" => Ok(two_bus(regime, horizon)),
        "wscc9" => Ok(wscc9(regime, horizon)),
        "synthetic30" => Ok(synthetic30(regime, horizon)),
        _ => Err(Error::Config(format!("unknown fixture family `{family}`"))),
    }
}

pub fn build(file: &CaseFile) -> Result<NetworkCase, NetworkError> {
    NetworkCase::from_file(file)
}
