//! Grid data: JSON case files, validation and per-unit conversions.
//!
//! A case file is a single JSON document. Weather may be embedded or given as
//! a CSV sidecar with columns `line_id, period, wind_mps, angle_rad,
//! ambient_K, solar_wpm`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::thermal::{ConductorParams, ThermalPeriod, WeatherSample};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid {entity}: {message}")]
    Validation { entity: String, message: String },
    #[error("branch {branch} has no thermal data")]
    MissingThermalData { branch: String },
}

fn invalid(entity: impl Into<String>, message: impl Into<String>) -> NetworkError {
    NetworkError::Validation {
        entity: entity.into(),
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    pub dt_seconds: f64,
    pub horizon: usize,
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    pub generators: Vec<GeneratorRecord>,
    #[serde(default)]
    pub demand: BTreeMap<String, Vec<DemandRecord>>,
    #[serde(default)]
    pub weather: BTreeMap<String, Vec<WeatherRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: u32,
    #[serde(default)]
    pub gs: f64,
    #[serde(default)]
    pub bs: f64,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRecord {
    pub id: String,
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance, p.u.
    #[serde(default)]
    pub b: f64,
    pub angle_min: f64,
    pub angle_max: f64,
    #[serde(default)]
    pub thermal: Option<ThermalRecord>,
    /// Static limit on the squared current magnitude of non-thermal branches, p.u.^2.
    #[serde(default)]
    pub current_sq_limit_pu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalRecord {
    pub resistance_ohm_per_m: f64,
    pub mass_kg_per_m: f64,
    pub specific_heat: f64,
    pub diameter_m: f64,
    pub emissivity: f64,
    pub absorptivity: f64,
    pub max_temp_k: f64,
    pub base_kv: f64,
    pub initial_temp_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorRecord {
    pub id: String,
    pub bus: u32,
    /// $/(MW^2 h)
    pub c2: f64,
    /// $/MWh
    pub c1: f64,
    /// $/h
    pub c0: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    #[serde(default)]
    pub renewable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandRecord {
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherRecord {
    pub wind_mps: f64,
    pub angle_rad: f64,
    #[serde(rename = "ambient_K")]
    pub ambient_k: f64,
    pub solar_wpm: f64,
}

impl From<WeatherRecord> for WeatherSample {
    fn from(w: WeatherRecord) -> Self {
        WeatherSample {
            wind_speed: w.wind_mps,
            wind_angle: w.angle_rad,
            ambient_temp: w.ambient_k,
            solar_gain: w.solar_wpm,
        }
    }
}

impl From<WeatherSample> for WeatherRecord {
    fn from(w: WeatherSample) -> Self {
        WeatherRecord {
            wind_mps: w.wind_speed,
            angle_rad: w.wind_angle,
            ambient_k: w.ambient_temp,
            solar_wpm: w.solar_gain,
        }
    }
}

#[derive(Debug, Deserialize)]
struct WeatherCsvRow {
    line_id: String,
    period: usize,
    wind_mps: f64,
    angle_rad: f64,
    #[serde(rename = "ambient_K")]
    ambient_k: f64,
    solar_wpm: f64,
}

// ---------------------------------------------------------------------------
// Validated model

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub shunt_conductance: f64,
    pub shunt_susceptance: f64,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineThermal {
    pub conductor: ConductorParams,
    pub base_kv: f64,
    /// K.
    pub initial_temp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: String,
    /// Bus indices (positions in `NetworkCase::buses`).
    pub from: usize,
    pub to: usize,
    pub series_resistance: f64,
    pub series_reactance: f64,
    /// Series conductance `Re 1/(r + jx)`.
    pub conductance: f64,
    /// Series susceptance `Im 1/(r + jx)`.
    pub susceptance: f64,
    pub charging: f64,
    pub angle_min: f64,
    pub angle_max: f64,
    pub thermal: Option<LineThermal>,
    pub current_sq_limit_pu: Option<f64>,
}

impl Branch {
    pub fn is_thermal_line(&self) -> bool {
        self.thermal.is_some()
    }

    /// Branches that carry current variables in the AC model.
    pub fn is_monitored(&self) -> bool {
        self.thermal.is_some() || self.current_sq_limit_pu.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl QuadraticCost {
    /// Cost in $/h of an output given in MW.
    pub fn eval_mw(&self, p_mw: f64) -> f64 {
        self.c2 * p_mw * p_mw + self.c1 * p_mw + self.c0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: String,
    pub bus: usize,
    pub cost: QuadraticCost,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub renewable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Demand {
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    /// Dispatch interval, s.
    pub dt: f64,
    pub horizon: usize,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub reference_bus: usize,
    /// `demand[bus][t]`, p.u.
    pub demand: Vec<Vec<Demand>>,
    /// Per branch; `Some` exactly for thermal lines, length `horizon`.
    pub weather: Vec<Option<Vec<WeatherSample>>>,
}

/// Base current of a line, A.
pub fn base_current_amps(base_mva: f64, base_kv: f64) -> f64 {
    base_mva * 1e6 / (3f64.sqrt() * base_kv * 1e3)
}

impl NetworkCase {
    pub fn thermal_lines(&self) -> impl Iterator<Item = usize> + '_ {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_thermal_line())
            .map(|(i, _)| i)
    }

    pub fn branch_index(&self, id: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    /// A^2 per p.u.^2 of squared current on a thermal line.
    pub fn current_sq_scale(&self, branch: usize) -> Result<f64, NetworkError> {
        let b = &self.branches[branch];
        let th = b
            .thermal
            .as_ref()
            .ok_or_else(|| NetworkError::MissingThermalData {
                branch: b.id.clone(),
            })?;
        Ok(base_current_amps(self.base_mva, th.base_kv).powi(2))
    }

    pub fn to_physical_current_sq(&self, iota_pu: f64, branch: usize) -> Result<f64, NetworkError> {
        Ok(iota_pu * self.current_sq_scale(branch)?)
    }

    pub fn to_pu_current_sq(&self, iota_a2: f64, branch: usize) -> Result<f64, NetworkError> {
        Ok(iota_a2 / self.current_sq_scale(branch)?)
    }

    /// Thermal model of a line in every period under its recorded weather.
    pub fn thermal_periods(&self, branch: usize) -> Result<Vec<ThermalPeriod>, crate::Error> {
        let b = &self.branches[branch];
        let th = b
            .thermal
            .as_ref()
            .ok_or_else(|| NetworkError::MissingThermalData {
                branch: b.id.clone(),
            })?;
        let weather = self.weather[branch].as_ref().expect("validated");
        weather
            .iter()
            .enumerate()
            .map(|(t, w)| {
                ThermalPeriod::fit(th.conductor, *w).map_err(|e| crate::Error::Thermal {
                    context: format!("line {} period {}", b.id, t),
                    source: e,
                })
            })
            .collect()
    }

    /// Total demand in period `t`, p.u.
    pub fn total_demand(&self, t: usize) -> Demand {
        self.demand.iter().fold(Demand::default(), |acc, d| Demand {
            p: acc.p + d[t].p,
            q: acc.q + d[t].q,
        })
    }

    pub fn generators_at(&self, bus: usize) -> impl Iterator<Item = usize> + '_ {
        self.generators
            .iter()
            .enumerate()
            .filter(move |(_, g)| g.bus == bus)
            .map(|(i, _)| i)
    }

    pub fn from_file(file: &CaseFile) -> Result<Self, NetworkError> {
        validate(file)
    }

    /// Back to the file schema; `to_canonical_json` of the result is the canonical form.
    pub fn to_case_file(&self) -> CaseFile {
        let bus_id = |i: usize| self.buses[i].id;
        CaseFile {
            schema_version: SCHEMA_VERSION,
            name: self.name.clone(),
            base_mva: self.base_mva,
            dt_seconds: self.dt,
            horizon: self.horizon,
            buses: self
                .buses
                .iter()
                .enumerate()
                .map(|(i, b)| BusRecord {
                    id: b.id,
                    gs: b.shunt_conductance,
                    bs: b.shunt_susceptance,
                    v_min: b.v_min,
                    v_max: b.v_max,
                    reference: i == self.reference_bus,
                })
                .collect(),
            branches: self
                .branches
                .iter()
                .map(|b| BranchRecord {
                    id: b.id.clone(),
                    from: bus_id(b.from),
                    to: bus_id(b.to),
                    r: b.series_resistance,
                    x: b.series_reactance,
                    b: b.charging,
                    angle_min: b.angle_min,
                    angle_max: b.angle_max,
                    thermal: b.thermal.as_ref().map(|t| ThermalRecord {
                        resistance_ohm_per_m: t.conductor.resistance_per_length,
                        mass_kg_per_m: t.conductor.mass_per_length,
                        specific_heat: t.conductor.specific_heat,
                        diameter_m: t.conductor.diameter,
                        emissivity: t.conductor.emissivity,
                        absorptivity: t.conductor.absorptivity,
                        max_temp_k: t.conductor.max_temperature,
                        base_kv: t.base_kv,
                        initial_temp_k: t.initial_temp,
                    }),
                    current_sq_limit_pu: b.current_sq_limit_pu,
                })
                .collect(),
            generators: self
                .generators
                .iter()
                .map(|g| GeneratorRecord {
                    id: g.id.clone(),
                    bus: bus_id(g.bus),
                    c2: g.cost.c2,
                    c1: g.cost.c1,
                    c0: g.cost.c0,
                    p_min: g.p_min,
                    p_max: g.p_max,
                    q_min: g.q_min,
                    q_max: g.q_max,
                    ramp_up: g.ramp_up,
                    ramp_down: g.ramp_down,
                    renewable: g.renewable,
                })
                .collect(),
            demand: self
                .demand
                .iter()
                .enumerate()
                .filter(|(_, d)| d.iter().any(|x| x.p != 0.0 || x.q != 0.0))
                .map(|(i, d)| {
                    (
                        bus_id(i).to_string(),
                        d.iter().map(|x| DemandRecord { p: x.p, q: x.q }).collect(),
                    )
                })
                .collect(),
            weather: self
                .branches
                .iter()
                .zip(&self.weather)
                .filter_map(|(b, w)| {
                    w.as_ref().map(|w| {
                        (
                            b.id.clone(),
                            w.iter().map(|&s| WeatherRecord::from(s)).collect(),
                        )
                    })
                })
                .collect(),
        }
    }
}

impl CaseFile {
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("case file serializes");
        s.push('\n');
        s
    }
}

/// Parses a case document, reporting the JSON path of the first schema error.
pub fn parse_case_file(text: &str) -> Result<CaseFile, NetworkError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| NetworkError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase, NetworkError> {
    load_case_with_weather(path, None::<&Path>)
}

/// Loads a case, replacing its embedded weather by a CSV sidecar when given.
pub fn load_case_with_weather(
    path: impl AsRef<Path>,
    weather_csv: Option<impl AsRef<Path>>,
) -> Result<NetworkCase, NetworkError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut file = parse_case_file(&text)?;
    if let Some(csv_path) = weather_csv {
        file.weather = read_weather_csv(csv_path.as_ref())?;
    }
    validate(&file)
}

pub fn read_weather_csv(path: &Path) -> Result<BTreeMap<String, Vec<WeatherRecord>>, NetworkError> {
    let file = std::fs::File::open(path).map_err(|source| NetworkError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_weather_csv(file)
}

pub fn parse_weather_csv(
    reader: impl std::io::Read,
) -> Result<BTreeMap<String, Vec<WeatherRecord>>, NetworkError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows: BTreeMap<String, BTreeMap<usize, WeatherRecord>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<WeatherCsvRow>().enumerate() {
        let row = row.map_err(|e| NetworkError::Schema {
            path: format!("weather.csv row {}", i + 1),
            message: e.to_string(),
        })?;
        let rec = WeatherRecord {
            wind_mps: row.wind_mps,
            angle_rad: row.angle_rad,
            ambient_k: row.ambient_k,
            solar_wpm: row.solar_wpm,
        };
        if rows
            .entry(row.line_id.clone())
            .or_default()
            .insert(row.period, rec)
            .is_some()
        {
            return Err(invalid(
                format!("weather for line {}", row.line_id),
                format!("duplicate period {}", row.period),
            ));
        }
    }
    let mut out = BTreeMap::new();
    for (line, periods) in rows {
        let mut series = Vec::with_capacity(periods.len());
        for (expected, (period, rec)) in periods.into_iter().enumerate() {
            if period != expected {
                return Err(invalid(
                    format!("weather for line {line}"),
                    format!("missing period {expected}"),
                ));
            }
            series.push(rec);
        }
        out.insert(line, series);
    }
    Ok(out)
}

fn validate(file: &CaseFile) -> Result<NetworkCase, NetworkError> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(NetworkError::Schema {
            path: "schema_version".into(),
            message: format!(
                "unsupported version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            ),
        });
    }
    if !(file.base_mva > 0.0) {
        return Err(invalid("case", "base_mva must be positive"));
    }
    if !(file.dt_seconds > 0.0) {
        return Err(invalid("case", "dt_seconds must be positive"));
    }
    if file.horizon == 0 {
        return Err(invalid("case", "horizon must be at least 1"));
    }
    if file.buses.is_empty() {
        return Err(invalid("case", "no buses"));
    }
    let horizon = file.horizon;

    let mut bus_index = HashMap::new();
    let mut buses = Vec::with_capacity(file.buses.len());
    let mut reference = None;
    for (i, b) in file.buses.iter().enumerate() {
        let entity = format!("bus {}", b.id);
        if bus_index.insert(b.id, i).is_some() {
            return Err(invalid(entity, "duplicate id"));
        }
        if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
            return Err(invalid(entity, "need 0 < v_min <= v_max"));
        }
        if b.reference {
            if reference.is_some() {
                return Err(invalid(entity, "more than one reference bus"));
            }
            reference = Some(i);
        }
        buses.push(Bus {
            id: b.id,
            shunt_conductance: b.gs,
            shunt_susceptance: b.bs,
            v_min: b.v_min,
            v_max: b.v_max,
        });
    }
    let lookup_bus = |id: u32, entity: &str| {
        bus_index
            .get(&id)
            .copied()
            .ok_or_else(|| invalid(entity, format!("unknown bus {id}")))
    };

    let mut branch_ids = HashMap::new();
    let mut branches = Vec::with_capacity(file.branches.len());
    for (i, b) in file.branches.iter().enumerate() {
        let entity = format!("branch {}", b.id);
        if branch_ids.insert(b.id.clone(), i).is_some() {
            return Err(invalid(entity, "duplicate id"));
        }
        let from = lookup_bus(b.from, &entity)?;
        let to = lookup_bus(b.to, &entity)?;
        if from == to {
            return Err(invalid(entity, "from and to bus coincide"));
        }
        let z2 = b.r * b.r + b.x * b.x;
        if !(z2 > 0.0) {
            return Err(invalid(entity, "zero series impedance"));
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(b.angle_min <= 0.0 && 0.0 <= b.angle_max) {
            return Err(invalid(entity, "need angle_min <= 0 <= angle_max"));
        }
        if !(b.angle_min > -half_pi && b.angle_max < half_pi) {
            return Err(invalid(entity, "angle limits must lie in (-pi/2, pi/2)"));
        }
        let thermal = match &b.thermal {
            None => None,
            Some(t) => {
                let conductor = ConductorParams {
                    resistance_per_length: t.resistance_ohm_per_m,
                    mass_per_length: t.mass_kg_per_m,
                    specific_heat: t.specific_heat,
                    diameter: t.diameter_m,
                    emissivity: t.emissivity,
                    absorptivity: t.absorptivity,
                    max_temperature: t.max_temp_k,
                };
                conductor
                    .validate()
                    .map_err(|e| invalid(entity.clone(), e.to_string()))?;
                if !(t.base_kv > 0.0) {
                    return Err(invalid(entity, "base_kv must be positive"));
                }
                if !(t.initial_temp_k > 0.0) {
                    return Err(invalid(entity, "initial_temp_k must be positive"));
                }
                Some(LineThermal {
                    conductor,
                    base_kv: t.base_kv,
                    initial_temp: t.initial_temp_k,
                })
            }
        };
        if let Some(l) = b.current_sq_limit_pu {
            if !(l > 0.0) {
                return Err(invalid(entity, "current_sq_limit_pu must be positive"));
            }
        }
        branches.push(Branch {
            id: b.id.clone(),
            from,
            to,
            series_resistance: b.r,
            series_reactance: b.x,
            conductance: b.r / z2,
            susceptance: -b.x / z2,
            charging: b.b,
            angle_min: b.angle_min,
            angle_max: b.angle_max,
            thermal,
            current_sq_limit_pu: b.current_sq_limit_pu,
        });
    }

    let mut gen_ids = HashMap::new();
    let mut generators = Vec::with_capacity(file.generators.len());
    for (i, g) in file.generators.iter().enumerate() {
        let entity = format!("generator {}", g.id);
        if gen_ids.insert(g.id.clone(), i).is_some() {
            return Err(invalid(entity, "duplicate id"));
        }
        let bus = lookup_bus(g.bus, &entity)?;
        if !(g.p_min <= g.p_max) {
            return Err(invalid(entity, "p_min > p_max"));
        }
        if !(g.q_min <= g.q_max) {
            return Err(invalid(entity, "q_min > q_max"));
        }
        if !(g.ramp_up >= 0.0 && g.ramp_down >= 0.0) {
            return Err(invalid(entity, "ramp rates must be non-negative"));
        }
        if !(g.c2 >= 0.0) {
            return Err(invalid(entity, "cost must be convex (c2 >= 0)"));
        }
        generators.push(Generator {
            id: g.id.clone(),
            bus,
            cost: QuadraticCost {
                c2: g.c2,
                c1: g.c1,
                c0: g.c0,
            },
            p_min: g.p_min,
            p_max: g.p_max,
            q_min: g.q_min,
            q_max: g.q_max,
            ramp_up: g.ramp_up,
            ramp_down: g.ramp_down,
            renewable: g.renewable,
        });
    }

    let mut demand = vec![vec![Demand::default(); horizon]; buses.len()];
    for (key, series) in &file.demand {
        let entity = format!("demand for bus {key}");
        let id: u32 = key
            .parse()
            .map_err(|_| invalid(entity.clone(), "bus key is not an integer id"))?;
        let bus = lookup_bus(id, &entity)?;
        if series.len() != horizon {
            return Err(invalid(
                entity,
                format!("{} periods given, horizon is {horizon}", series.len()),
            ));
        }
        demand[bus] = series.iter().map(|d| Demand { p: d.p, q: d.q }).collect();
    }

    let mut weather = vec![None; branches.len()];
    for key in file.weather.keys() {
        match branch_ids.get(key) {
            None => return Err(invalid(format!("weather for line {key}"), "unknown branch")),
            Some(&i) if !branches[i].is_thermal_line() => {
                log::warn!("weather given for non-thermal branch {key}; ignored");
            }
            _ => {}
        }
    }
    for (i, b) in branches.iter().enumerate() {
        if !b.is_thermal_line() {
            continue;
        }
        let entity = format!("weather for line {}", b.id);
        let series = file.weather.get(&b.id).map(Vec::as_slice).unwrap_or(&[]);
        if series.len() < horizon {
            return Err(invalid(entity, format!("missing row for period {}", series.len())));
        }
        if series.len() > horizon {
            return Err(invalid(
                entity,
                format!("{} periods given, horizon is {horizon}", series.len()),
            ));
        }
        let mut samples = Vec::with_capacity(horizon);
        for (t, rec) in series.iter().enumerate() {
            let s = WeatherSample::from(*rec);
            s.validate()
                .map_err(|e| invalid(entity.clone(), format!("period {t}: {e}")))?;
            samples.push(s);
        }
        weather[i] = Some(samples);
    }

    // The reference bus defaults to the first bus hosting a generator.
    let reference_bus = reference
        .or_else(|| generators.first().map(|g| g.bus))
        .unwrap_or(0);

    let case = NetworkCase {
        name: file.name.clone(),
        base_mva: file.base_mva,
        dt: file.dt_seconds,
        horizon,
        buses,
        branches,
        generators,
        reference_bus,
        demand,
        weather,
    };
    if !is_connected(&case) {
        log::warn!("case {} is not connected", case.name);
    }
    Ok(case)
}

fn is_connected(case: &NetworkCase) -> bool {
    let n = case.buses.len();
    let mut adj = vec![Vec::new(); n];
    for b in &case.branches {
        adj[b.from].push(b.to);
        adj[b.to].push(b.from);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const TWO_BUS: &str = r#"{
      "schema_version": 1,
      "name": "two-bus",
      "base_mva": 100.0,
      "dt_seconds": 300.0,
      "horizon": 2,
      "buses": [
        {"id": 1, "v_min": 0.9, "v_max": 1.1, "reference": true},
        {"id": 2, "v_min": 0.9, "v_max": 1.1}
      ],
      "branches": [
        {"id": "L1", "from": 1, "to": 2, "r": 0.01, "x": 0.1,
         "angle_min": -0.6, "angle_max": 0.6,
         "thermal": {"resistance_ohm_per_m": 9.39e-5, "mass_kg_per_m": 1.628,
                     "specific_heat": 804.7, "diameter_m": 0.02814, "emissivity": 0.8,
                     "absorptivity": 0.8, "max_temp_k": 373.15, "base_kv": 138.0,
                     "initial_temp_k": 330.0}}
      ],
      "generators": [
        {"id": "G1", "bus": 1, "c2": 0.01, "c1": 20.0, "c0": 0.0, "p_min": 0.0,
         "p_max": 3.0, "q_min": -2.0, "q_max": 2.0, "ramp_up": 0.5, "ramp_down": 0.5}
      ],
      "demand": {"2": [{"p": 1.0, "q": 0.2}, {"p": 1.2, "q": 0.25}]},
      "weather": {"L1": [
        {"wind_mps": 2.0, "angle_rad": 1.2, "ambient_K": 300.0, "solar_wpm": 10.0},
        {"wind_mps": 1.0, "angle_rad": 1.2, "ambient_K": 301.0, "solar_wpm": 10.0}
      ]}
    }"#;

    fn two_bus() -> NetworkCase {
        NetworkCase::from_file(&parse_case_file(TWO_BUS).unwrap()).unwrap()
    }

    #[test]
    fn minimal_case_loads() {
        let case = two_bus();
        assert_eq!(case.branches.len(), 1);
        assert_eq!(case.generators.len(), 1);
        assert_eq!(case.reference_bus, 0);
        assert_eq!(case.demand[1][1], Demand { p: 1.2, q: 0.25 });
        assert_eq!(case.demand[0][0], Demand::default());
    }

    #[test]
    fn admittance_by_hand() {
        let b = &two_bus().branches[0];
        assert!((b.conductance - 0.9901).abs() < 5e-5);
        assert!((b.susceptance + 9.9010).abs() < 5e-5);
        // (G + jB)(r + jx) = 1
        let re = b.conductance * b.series_resistance - b.susceptance * b.series_reactance;
        let im = b.conductance * b.series_reactance + b.susceptance * b.series_resistance;
        assert!((re - 1.0).abs() < 1e-12 && im.abs() < 1e-12);
    }

    #[test]
    fn missing_weather_row_names_line_and_period() {
        let mut file = parse_case_file(TWO_BUS).unwrap();
        file.weather.get_mut("L1").unwrap().pop();
        let err = NetworkCase::from_file(&file).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("L1") && msg.contains("period 1"), "{msg}");
    }

    #[test]
    fn schema_error_reports_path() {
        let bad = TWO_BUS.replace("\"r\": 0.01", "\"r\": \"oops\"");
        match parse_case_file(&bad) {
            Err(NetworkError::Schema { path, .. }) => assert_eq!(path, "branches[0].r"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invariant_violations() {
        let mut file = parse_case_file(TWO_BUS).unwrap();
        file.branches[0].to = 1;
        assert!(matches!(
            NetworkCase::from_file(&file),
            Err(NetworkError::Validation { .. })
        ));
        let mut file = parse_case_file(TWO_BUS).unwrap();
        file.generators[0].bus = 9;
        let msg = NetworkCase::from_file(&file).unwrap_err().to_string();
        assert!(msg.contains("G1"));
        let mut file = parse_case_file(TWO_BUS).unwrap();
        file.buses[1].v_min = 1.2;
        assert!(NetworkCase::from_file(&file).is_err());
    }

    #[test]
    fn current_unit_bridge() {
        let case = two_bus();
        assert_eq!(case.to_physical_current_sq(0.0, 0).unwrap(), 0.0);
        let expected = (100e6 / (3f64.sqrt() * 138e3)).powi(2);
        let got = case.to_physical_current_sq(1.0, 0).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
        let back = case.to_pu_current_sq(got * 0.37, 0).unwrap();
        assert!((back - 0.37).abs() <= 1e-12 * 0.37);
    }

    #[test]
    fn canonical_form_is_stable() {
        let file = parse_case_file(TWO_BUS).unwrap();
        let case = NetworkCase::from_file(&file).unwrap();
        let first = case.to_case_file().to_canonical_json();
        let reparsed = NetworkCase::from_file(&parse_case_file(&first).unwrap()).unwrap();
        assert_eq!(reparsed, case);
        assert_eq!(reparsed.to_case_file().to_canonical_json(), first);
    }

    #[test]
    fn weather_csv_sidecar() {
        let csv = "line_id,period,wind_mps,angle_rad,ambient_K,solar_wpm\n\
                   L1,1,1.0,1.2,301.0,10.0\n\
                   L1,0,2.0,1.2,300.0,10.0\n";
        let parsed = parse_weather_csv(csv.as_bytes()).unwrap();
        let file = parse_case_file(TWO_BUS).unwrap();
        assert_eq!(parsed, file.weather);
        let gap = "line_id,period,wind_mps,angle_rad,ambient_K,solar_wpm\nL1,1,1.0,1.2,301.0,10.0\n";
        assert!(parse_weather_csv(gap.as_bytes()).is_err());
    }
}
