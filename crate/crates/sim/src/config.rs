//! Run configuration: TOML schema, scenario presets and `key=value` overrides.
//!
//! A run is resolved in layers: scenario preset, then the optional config
//! file, then `--set` overrides. Unknown keys are rejected at every layer.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tiltcargo::estimator::K3Source;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("override `{0}` is not of the form key=value")]
    Override(String),
    #[error("override `{key}`: no such key")]
    UnknownKey { key: String },
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    #[default]
    EstimateFixedPayload,
    TransportNoEsc,
    TransportWithEsc,
    Custom,
}

impl ScenarioId {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "estimate_fixed_payload" | "a" | "A" => Self::EstimateFixedPayload,
            "transport_no_esc" | "b" | "B" => Self::TransportNoEsc,
            "transport_with_esc" | "c" | "C" => Self::TransportWithEsc,
            "custom" => Self::Custom,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub inner_hz: u32,
    pub outer_hz: u32,
    pub estimator_hz: u32,
    pub log_hz: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Self { inner_hz: 1000, outer_hz: 250, estimator_hz: 250, log_hz: 50 }
    }
}

/// Empty airframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConfig {
    pub mass: f64,
    pub inertia: [[f64; 3]; 3],
    pub arm_length: f64,
    pub servo_offset: f64,
    pub yaw_thrust_ratio: f64,
    pub com: [f64; 3],
    pub gravity: f64,
    pub servo_angle_limit: f64,
    pub thrust_min: f64,
    pub thrust_max: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        let p = tiltcargo::VehicleParamsF64::empty_airframe();
        Self {
            mass: p.mass,
            inertia: p.inertia.transpose().into(),
            arm_length: p.arm_length,
            servo_offset: p.servo_offset,
            yaw_thrust_ratio: p.yaw_thrust_ratio,
            com: p.com.into(),
            gravity: p.gravity,
            servo_angle_limit: p.servo_angle_limit,
            thrust_min: p.thrust_min,
            thrust_max: p.thrust_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorConfig {
    pub rotor_time_constant: f64,
    pub servo_time_constant: f64,
    pub servo_rate_max: f64,
}

impl Default for ActuatorConfig {
    fn default() -> Self {
        Self { rotor_time_constant: 0.02, servo_time_constant: 0.08, servo_rate_max: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PayloadConfig {
    pub mass: f64,
    /// Attachment point in the body frame [m].
    pub attach: [f64; 3],
}

impl Default for PayloadConfig {
    fn default() -> Self {
        Self { mass: 0.2, attach: [0.184, 0.0, -0.121] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsConfig {
    pub pos_p: [f64; 3],
    pub pos_i: [f64; 3],
    pub pos_d: [f64; 3],
    pub att_p: [f64; 3],
    pub att_i: [f64; 3],
    pub att_d: [f64; 3],
    pub integrator_limit: [f64; 3],
    pub att_integrator_limit: [f64; 3],
}

impl Default for GainsConfig {
    fn default() -> Self {
        let g = tiltcargo::ControllerGainsF64::default();
        Self {
            pos_p: g.pos_p.into(),
            pos_i: g.pos_i.into(),
            pos_d: g.pos_d.into(),
            att_p: g.att_p.into(),
            att_i: g.att_i.into(),
            att_d: g.att_d.into(),
            integrator_limit: g.integrator_limit.into(),
            att_integrator_limit: g.att_integrator_limit.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum K3SourceConfig {
    #[default]
    TauX,
    NegTauY,
}

impl From<K3SourceConfig> for K3Source {
    fn from(k: K3SourceConfig) -> Self {
        match k {
            K3SourceConfig::TauX => K3Source::TauX,
            K3SourceConfig::NegTauY => K3Source::NegTauY,
        }
    }
}

/// Torque the residual is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NominalTorque {
    /// Actuator-model torque about the estimated center of mass.
    #[default]
    Model,
    /// Desired torque from the attitude controller.
    Desired,
}

/// Starting value of the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialCom {
    /// Empty-airframe center of mass.
    #[default]
    Empty,
    /// Composite (true) center of mass.
    Truth,
    #[serde(untagged)]
    Value([f64; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSettings {
    pub enabled: bool,
    /// Stop estimating (and dithering) once converged or when transport starts.
    pub freeze_after_convergence: bool,
    /// Time at which the estimator starts [s]; lets the unmodeled-payload
    /// transient after release die out before any filter sees it.
    pub start_time: f64,
    pub a1: f64,
    pub a2: f64,
    pub w1: f64,
    pub w2: f64,
    pub q: f64,
    pub w_lowpass: f64,
    pub g1: f64,
    pub g2: f64,
    pub smoothing_cutoff: f64,
    pub k3_source: K3SourceConfig,
    /// `J_est` as a multiple of the empty-airframe inertia.
    pub inertia_scale: f64,
    pub envelope: f64,
    /// Integration-free start-up [s]; negative selects two slow dither periods.
    pub warmup: f64,
    pub delta_max: f64,
    pub nominal_torque: NominalTorque,
    pub initial_com: InitialCom,
    /// Trailing window for convergence detection [s].
    pub convergence_window: f64,
    /// Largest spread per component within the window [m].
    pub convergence_tolerance: f64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            freeze_after_convergence: false,
            start_time: 5.0,
            a1: 0.3,
            a2: 0.7,
            w1: 5.0,
            w2: 3.0,
            q: 20.0,
            w_lowpass: 0.5,
            g1: 1.5,
            g2: 0.5,
            smoothing_cutoff: 20.0,
            k3_source: K3SourceConfig::TauX,
            inertia_scale: 1.0,
            envelope: 0.15,
            warmup: -1.0,
            delta_max: 0.4,
            nominal_torque: NominalTorque::Model,
            initial_com: InitialCom::Empty,
            convergence_window: 10.0,
            convergence_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    #[default]
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Out-and-back transport along one axis with a raised-cosine profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReciprocationConfig {
    pub enabled: bool,
    pub axis: Axis,
    pub amplitude: f64,
    /// Duration of one leg [s].
    pub half_period: f64,
    pub start_time: f64,
    pub cycles: u32,
}

impl Default for ReciprocationConfig {
    fn default() -> Self {
        Self { enabled: false, axis: Axis::Y, amplitude: 3.0, half_period: 10.0, start_time: 120.0, cycles: 2 }
    }
}

impl ReciprocationConfig {
    pub fn end_time(&self) -> f64 {
        self.start_time + 2.0 * self.half_period * self.cycles as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSettings {
    pub gyro: f64,
    pub attitude: f64,
    pub position: f64,
    pub velocity: f64,
    pub servo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub max_tilt: f64,
    pub max_position: f64,
    pub condition_limit: f64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self { max_tilt: 1.0, max_position: 50.0, condition_limit: 1e6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub schema_version: u32,
    pub scenario: ScenarioId,
    pub duration: f64,
    pub seed: u64,
    pub rates: Rates,
    pub vehicle: VehicleConfig,
    pub actuators: ActuatorConfig,
    pub payload: PayloadConfig,
    pub gains: GainsConfig,
    pub estimator: EstimatorSettings,
    pub reciprocation: ReciprocationConfig,
    pub noise: NoiseSettings,
    pub limits: LimitsConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::preset(ScenarioId::EstimateFixedPayload)
    }
}

impl SimConfig {
    /// Transport scenarios share one base and differ only in `estimator.enabled`.
    pub fn preset(id: ScenarioId) -> Self {
        let base = Self {
            schema_version: SCHEMA_VERSION,
            scenario: id,
            duration: 120.0,
            seed: 0,
            rates: Rates::default(),
            vehicle: VehicleConfig::default(),
            actuators: ActuatorConfig::default(),
            payload: PayloadConfig::default(),
            gains: GainsConfig::default(),
            estimator: EstimatorSettings::default(),
            reciprocation: ReciprocationConfig::default(),
            noise: NoiseSettings::default(),
            limits: LimitsConfig::default(),
        };
        match id {
            ScenarioId::EstimateFixedPayload | ScenarioId::Custom => base,
            ScenarioId::TransportNoEsc | ScenarioId::TransportWithEsc => {
                let mut c = base;
                c.reciprocation.enabled = true;
                c.estimator.freeze_after_convergence = true;
                c.estimator.enabled = id == ScenarioId::TransportWithEsc;
                c.duration = c.reciprocation.end_time() + 10.0;
                c
            }
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        Self::resolve(None, Some(s), &[])
    }

    /// Layers preset, file contents and overrides, then validates.
    ///
    /// The file may name a scenario; `scenario` takes precedence when given.
    pub fn resolve(
        scenario: Option<ScenarioId>,
        file: Option<&str>,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        let file_value: Option<toml::Table> =
            file.map(|s| s.parse::<toml::Table>().map_err(|e| ConfigError::Parse(e.to_string()))).transpose()?;
        let file_scenario =
            file_value.as_ref().and_then(|t| t.get("scenario")).and_then(|v| v.as_str()).and_then(ScenarioId::parse);
        let id = scenario.or(file_scenario).unwrap_or_default();

        let mut root = toml::Table::try_from(Self::preset(id)).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if let Some(f) = file_value {
            merge(&mut root, f);
        }
        root.insert("scenario".into(), toml::Value::String(scenario_name(id).into()));
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let cfg: SimConfig =
            toml::Value::Table(root).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(scenario: Option<ScenarioId>, path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = path
            .map(|p| {
                std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.display().to_string(), source })
            })
            .transpose()?;
        Self::resolve(scenario, text.as_deref(), overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema_version));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive (got {})", self.duration));
        }
        let r = &self.rates;
        if r.inner_hz == 0 || r.outer_hz == 0 || r.estimator_hz == 0 || r.log_hz == 0 {
            return bad("rates must be positive".into());
        }
        for (name, hz) in [("outer_hz", r.outer_hz), ("estimator_hz", r.estimator_hz), ("log_hz", r.log_hz)] {
            if !r.inner_hz.is_multiple_of(hz) {
                return bad(format!("rates.{name} = {hz} does not divide rates.inner_hz = {}", r.inner_hz));
            }
        }
        if 1.0 / r.inner_hz as f64 > tiltcargo::dynamics::MAX_STEP {
            return bad(format!("rates.inner_hz = {} gives a step above the integrator limit", r.inner_hz));
        }
        self.vehicle_params().validate().map_err(|e| ConfigError::Invalid(format!("vehicle: {e}")))?;
        let p = &self.payload;
        if !(p.mass >= 0.0) {
            return bad(format!("payload.mass must be non-negative (got {})", p.mass));
        }
        let [x, y, z] = p.attach;
        if !(x.abs() <= 0.25 && y.abs() <= 0.25 && (-0.25..=0.0).contains(&z)) {
            return bad(format!("payload.attach {:?} lies outside the top-surface bounds", p.attach));
        }
        self.controller_gains().validate().map_err(|e| ConfigError::Invalid(format!("gains: {e}")))?;
        let e = &self.estimator;
        if !(e.inertia_scale > 0.0) {
            return bad("estimator.inertia_scale must be positive".into());
        }
        if !(e.convergence_window >= 5.0) {
            return bad("estimator.convergence_window must be at least 5 s".into());
        }
        if !(e.convergence_tolerance > 0.0) {
            return bad("estimator.convergence_tolerance must be positive".into());
        }
        if e.enabled {
            let w = self.composite_mass() * self.vehicle.gravity;
            let est = self.estimator_config();
            est.dither.validate(w, est.q).map_err(|err| ConfigError::Invalid(format!("estimator: {err}")))?;
            let report = est.stability();
            if !report.passed() {
                let names: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
                return bad(format!("estimator stability: {}", names.join("; ")));
            }
        }
        let rc = &self.reciprocation;
        if rc.enabled && !(rc.half_period > 0.0 && rc.amplitude.is_finite() && rc.start_time >= 0.0) {
            return bad("reciprocation needs a positive half_period and a non-negative start_time".into());
        }
        let n = &self.noise;
        if ![n.gyro, n.attitude, n.position, n.velocity, n.servo].iter().all(|s| *s >= 0.0) {
            return bad("noise standard deviations must be non-negative".into());
        }
        Ok(())
    }

    pub fn vehicle_params(&self) -> tiltcargo::VehicleParamsF64 {
        let v = &self.vehicle;
        tiltcargo::vehicle::VehicleParams {
            mass: v.mass,
            inertia: nalgebra::Matrix3::from_row_slice(&v.inertia.concat()),
            arm_length: v.arm_length,
            servo_offset: v.servo_offset,
            yaw_thrust_ratio: v.yaw_thrust_ratio,
            com: v.com.into(),
            gravity: v.gravity,
            servo_angle_limit: v.servo_angle_limit,
            thrust_min: v.thrust_min,
            thrust_max: v.thrust_max,
        }
    }

    pub fn composite_mass(&self) -> f64 {
        self.vehicle.mass + self.payload.mass
    }

    pub fn controller_gains(&self) -> tiltcargo::ControllerGainsF64 {
        let g = &self.gains;
        tiltcargo::control::ControllerGains {
            pos_p: g.pos_p.into(),
            pos_i: g.pos_i.into(),
            pos_d: g.pos_d.into(),
            att_p: g.att_p.into(),
            att_i: g.att_i.into(),
            att_d: g.att_d.into(),
            integrator_limit: g.integrator_limit.into(),
            att_integrator_limit: g.att_integrator_limit.into(),
        }
    }

    pub fn estimator_config(&self) -> tiltcargo::EstimatorConfigF64 {
        let e = &self.estimator;
        tiltcargo::estimator::EstimatorConfig {
            dither: tiltcargo::estimator::DitherConfig { a1: e.a1, a2: e.a2, w1: e.w1, w2: e.w2 },
            q: e.q,
            w_lowpass: e.w_lowpass,
            g1: e.g1,
            g2: e.g2,
            smoothing_cutoff: e.smoothing_cutoff,
            k3_source: e.k3_source.into(),
            inertia_est: self.vehicle_params().inertia * e.inertia_scale,
            envelope: e.envelope,
            warmup: (e.warmup >= 0.0).then_some(e.warmup),
            delta_max: e.delta_max,
            dt: 1.0 / self.rates.estimator_hz as f64,
        }
    }

    pub fn noise_config(&self) -> tiltcargo::dynamics::NoiseConfig<f64> {
        let n = &self.noise;
        tiltcargo::dynamics::NoiseConfig {
            gyro: n.gyro,
            attitude: n.attitude,
            position: n.position,
            velocity: n.velocity,
            servo: n.servo,
        }
    }
}

pub fn scenario_name(id: ScenarioId) -> &'static str {
    match id {
        ScenarioId::EstimateFixedPayload => "estimate_fixed_payload",
        ScenarioId::TransportNoEsc => "transport_no_esc",
        ScenarioId::TransportWithEsc => "transport_with_esc",
        ScenarioId::Custom => "custom",
    }
}

/// Recursively overlays `src` onto `dst`.
fn merge(dst: &mut toml::Table, src: toml::Table) {
    for (k, v) in src {
        match (dst.get_mut(&k), v) {
            (Some(toml::Value::Table(d)), toml::Value::Table(s)) => merge(d, s),
            (_, v) => {
                dst.insert(k, v);
            }
        }
    }
}

/// Applies `a.b.c=value`; the value is parsed as TOML, falling back to a bare string.
fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| ConfigError::Override(assignment.into()))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(assignment.into()));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.into()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().expect("split yields one part");
    let mut table = root;
    for p in parts {
        table = match table.get_mut(p) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(ConfigError::UnknownKey { key: key.into() }),
        };
    }
    if !table.contains_key(leaf) {
        return Err(ConfigError::UnknownKey { key: key.into() });
    }
    table.insert(leaf.into(), value);
    Ok(())
}
