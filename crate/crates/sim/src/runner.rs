//! Multi-rate closed loop: plant and attitude/allocation at the inner rate,
//! position control at the outer rate, estimator at its own rate. All rates
//! are integer divisors of the inner rate and every tick time is `k / inner_hz`.

use std::collections::VecDeque;

use nalgebra::{Vector2, Vector3, Vector4};
use tiltcargo::allocation::Allocator;
use tiltcargo::control::{compose_wrench, AttitudeController, PositionController, Setpoint};
use tiltcargo::dynamics::{
    step_actuators, step_dynamics, ActuatorDynamics, ActuatorState, Divergence, DivergenceBound, RigidState, Sensors,
};
use tiltcargo::estimator::ComEstimator;
use tiltcargo::vehicle::{body_wrench, torque_mapping_matrix, ActuatorCommand, Saturation};

use crate::config::{ConfigError, InitialCom, NominalTorque, ReciprocationConfig, SimConfig};
use crate::scenario::{composite_com, loaded_params};

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    Crashed(Divergence),
    Fault(String),
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::Crashed(_) => "crashed",
            Termination::Fault(_) => "fault",
        }
    }

    pub fn detail(&self) -> String {
        match self {
            Termination::Completed => String::new(),
            Termination::Crashed(d) => format!("{d:?}").to_lowercase(),
            Termination::Fault(s) => s.clone(),
        }
    }
}

/// One logged sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// `[roll, pitch, yaw]`.
    pub euler: Vector3<f64>,
    pub body_rates: Vector3<f64>,
    pub position_des: Vector3<f64>,
    pub thrust_cmd: Vector4<f64>,
    pub servo_cmd: Vector2<f64>,
    pub servo: Vector2<f64>,
    pub torque_des: Vector3<f64>,
    pub force_des: Vector3<f64>,
    pub torque_real: Vector3<f64>,
    pub force_real: Vector3<f64>,
    pub k_tilde: Vector3<f64>,
    pub gamma: Vector3<f64>,
    pub v: Vector3<f64>,
    pub com_est: Vector3<f64>,
    pub saturation: Saturation,
    pub estimating: bool,
}

/// Statistics over the reciprocation window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransportStats {
    pub max_abs_roll: f64,
    pub max_abs_pitch: f64,
    pub rms_tracking_error: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub records: Vec<LogRecord>,
    pub termination: Termination,
    /// Time at which the run stopped [s].
    pub end_time: f64,
    pub com_true: Vector3<f64>,
    pub com_initial: Vector3<f64>,
    pub convergence_time: Option<f64>,
    pub freeze_time: Option<f64>,
    pub first_servo_saturation: Option<f64>,
    /// Inner ticks with a servo at its limit.
    pub servo_saturation_ticks: usize,
    pub max_abs_roll: f64,
    pub max_abs_pitch: f64,
    pub rms_position_error: f64,
    pub transport: Option<TransportStats>,
}

impl RunLog {
    pub fn final_com_est(&self) -> Vector3<f64> {
        self.records.last().map(|r| r.com_est).unwrap_or(self.com_initial)
    }
}

/// Raised-cosine out-and-back reference along one axis.
pub fn reciprocation_setpoint(rc: &ReciprocationConfig, t: f64) -> (f64, f64) {
    if !rc.enabled || t <= rc.start_time || t >= rc.end_time() {
        return (0.0, 0.0);
    }
    let w = std::f64::consts::PI / rc.half_period;
    let tau = t - rc.start_time;
    let half = 0.5 * rc.amplitude;
    (half * (1.0 - (w * tau).cos()), half * w * (w * tau).sin())
}

pub fn setpoint(cfg: &SimConfig, t: f64) -> Setpoint<f64> {
    let (p, v) = reciprocation_setpoint(&cfg.reciprocation, t);
    let i = cfg.reciprocation.axis.index();
    let mut sp = Setpoint::default();
    sp.position[i] = p;
    sp.velocity[i] = v;
    sp
}

/// Streaming version of [`detect_convergence`].
#[derive(Debug, Clone)]
pub struct ConvergenceDetector {
    window: f64,
    tolerance: f64,
    first: Option<f64>,
    samples: VecDeque<(f64, Vector3<f64>)>,
    converged_at: Option<f64>,
}

impl ConvergenceDetector {
    pub fn new(window: f64, tolerance: f64) -> Self {
        assert!(window >= 5.0, "convergence window must be at least 5 s");
        Self { window, tolerance, first: None, samples: VecDeque::new(), converged_at: None }
    }

    /// Feeds one sample; returns the convergence time once reached.
    pub fn push(&mut self, t: f64, p: Vector3<f64>) -> Option<f64> {
        if self.converged_at.is_some() {
            return self.converged_at;
        }
        let first = *self.first.get_or_insert(t);
        self.samples.push_back((t, p));
        while self.samples.front().is_some_and(|(t0, _)| *t0 < t - self.window) {
            self.samples.pop_front();
        }
        if t - first < self.window {
            return None;
        }
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for (_, s) in &self.samples {
            lo = lo.inf(s);
            hi = hi.sup(s);
        }
        if (hi - lo).max() < self.tolerance {
            self.converged_at = Some(t);
        }
        self.converged_at
    }

    pub fn converged_at(&self) -> Option<f64> {
        self.converged_at
    }
}

/// First time at which every component of the trailing `window` of `trace`
/// spans less than `tolerance`.
pub fn detect_convergence(trace: &[(f64, Vector3<f64>)], window: f64, tolerance: f64) -> Option<f64> {
    let mut d = ConvergenceDetector::new(window, tolerance);
    trace.iter().find_map(|(t, p)| d.push(*t, *p))
}

/// Runs the configured scenario to completion, crash or fault.
pub fn run_scenario(cfg: &SimConfig) -> Result<RunLog, ConfigError> {
    cfg.validate()?;
    let empty = cfg.vehicle_params();
    let composite = composite_com(&empty, cfg.payload.mass, &cfg.payload.attach.into());
    let plant = loaded_params(&empty, &composite);
    let gains = cfg.controller_gains();
    let lags = ActuatorDynamics {
        rotor_time_constant: cfg.actuators.rotor_time_constant,
        servo_time_constant: cfg.actuators.servo_time_constant,
        servo_rate_max: cfg.actuators.servo_rate_max,
    };
    let bound = DivergenceBound { max_tilt: cfg.limits.max_tilt, max_position: cfg.limits.max_position };

    let com_initial = match cfg.estimator.initial_com {
        InitialCom::Empty => empty.com,
        InitialCom::Truth => composite.com,
        InitialCom::Value(v) => v.into(),
    };
    let mut estimator = if cfg.estimator.enabled {
        let e = ComEstimator::new(cfg.estimator_config(), com_initial)
            .map_err(|e| ConfigError::Invalid(format!("estimator: {e}")))?;
        Some(e)
    } else {
        None
    };
    let mut com_est = estimator.as_ref().map(|e| e.com_est()).unwrap_or(com_initial);

    let hz = cfg.rates.inner_hz;
    let dt = 1.0 / hz as f64;
    let outer_div = (hz / cfg.rates.outer_hz) as u64;
    let est_div = (hz / cfg.rates.estimator_hz) as u64;
    let log_div = (hz / cfg.rates.log_hz) as u64;
    let dt_outer = outer_div as f64 * dt;
    let n_steps = (cfg.duration * hz as f64).round() as u64;

    let m_hat = empty.mass;
    let hover = ActuatorCommand::hover(m_hat * empty.gravity / 4.0);
    let mut state = RigidState::<f64>::default();
    let mut act = ActuatorState::at_rest(&hover);
    let mut act_model = act;
    let mut sensors = Sensors::new(cfg.noise_config(), cfg.seed);
    let mut allocator = Allocator::new(cfg.limits.condition_limit);
    let mut pos_ctrl = PositionController::default();
    let mut att_ctrl = AttitudeController::default();
    let mut detector = ConvergenceDetector::new(cfg.estimator.convergence_window, cfg.estimator.convergence_tolerance);

    let mut sp = setpoint(cfg, 0.0);
    let mut force_global = Vector3::new(0.0, 0.0, -m_hat * empty.gravity);
    let mut dither_body = Vector3::zeros();
    let mut last_sat = Saturation::default();
    let mut cmd = hover;
    let mut torque_des = Vector3::zeros();
    let mut force_des = Vector3::zeros();
    let mut nominal_sum = Vector3::zeros();
    let mut nominal_n = 0u32;

    let mut log = RunLog {
        records: Vec::with_capacity((n_steps / log_div + 2) as usize),
        termination: Termination::Completed,
        end_time: 0.0,
        com_true: composite.com,
        com_initial,
        convergence_time: None,
        freeze_time: None,
        first_servo_saturation: None,
        servo_saturation_ticks: 0,
        max_abs_roll: 0.0,
        max_abs_pitch: 0.0,
        rms_position_error: 0.0,
        transport: None,
    };
    let rc = &cfg.reciprocation;
    let axis = rc.axis.index();
    let mut transport = TransportStats::default();
    let mut transport_sq = 0.0;
    let mut pos_sq = 0.0;
    let mut pos_n = 0usize;

    let mut k: u64 = 0;
    loop {
        let t = k as f64 / hz as f64;
        let meas = match sensors.sample(&state, &act, t) {
            Ok(m) => m,
            Err(e) => {
                log.termination = Termination::Fault(e.to_string());
                log.end_time = t;
                break;
            }
        };

        if k.is_multiple_of(outer_div) {
            sp = setpoint(cfg, t);
            force_global = pos_ctrl.update(&sp, &meas, &gains, m_hat, empty.gravity, dt_outer, last_sat.any());
            dither_body = estimator.as_ref().map(|e| e.dither(t)).unwrap_or_else(Vector3::zeros);
        }

        if let Some(est) = estimator.as_mut() {
            if k.is_multiple_of(est_div) && t >= cfg.estimator.start_time && !est.is_frozen() {
                let nominal = if nominal_n > 0 { nominal_sum / nominal_n as f64 } else { Vector3::zeros() };
                nominal_sum = Vector3::zeros();
                nominal_n = 0;
                let tel = *est.step(t, &meas.gyro, &nominal);
                com_est = tel.com_est;
                if tel.integrating && log.convergence_time.is_none() {
                    log.convergence_time = detector.push(t, com_est);
                }
                let transport_due = rc.enabled && t >= rc.start_time;
                if cfg.estimator.freeze_after_convergence && (log.convergence_time.is_some() || transport_due) {
                    est.freeze();
                    log.freeze_time = Some(t);
                    dither_body = Vector3::zeros();
                }
            }
        }

        if k.is_multiple_of(log_div) {
            let tel = estimator.as_ref().map(|e| *e.telemetry());
            let real = body_wrench(&act.as_command(), &plant.com, &plant);
            log.records.push(LogRecord {
                t,
                position: state.position,
                velocity: state.velocity,
                euler: state.euler(),
                body_rates: state.body_rates,
                position_des: sp.position,
                thrust_cmd: cmd.thrusts,
                servo_cmd: cmd.servo_angles,
                servo: act.servo_angles,
                torque_des,
                force_des,
                torque_real: real.torque,
                force_real: real.force,
                k_tilde: tel.map(|x| x.k_tilde).unwrap_or_default(),
                gamma: tel.map(|x| x.gamma).unwrap_or_default(),
                v: tel.map(|x| x.v).unwrap_or_default(),
                com_est,
                saturation: last_sat,
                estimating: tel.is_some_and(|x| x.integrating) && !estimator.as_ref().is_some_and(|e| e.is_frozen()),
            });
        }

        if k == n_steps {
            log.end_time = t;
            break;
        }

        torque_des = att_ctrl.update(&sp, &meas, &gains, dt, last_sat.thrust);
        let mut wrench = compose_wrench(&force_global, &torque_des, &meas.attitude);
        wrench.force += dither_body;
        force_des = wrench.force;
        let alloc = match allocator.allocate(&wrench, &com_est, &meas.servo_angles, &empty) {
            Ok(a) => a,
            Err(e) => {
                log.termination = Termination::Fault(e.to_string());
                log.end_time = t;
                break;
            }
        };
        cmd = alloc.command;
        last_sat = alloc.saturation;
        if last_sat.servo[0] || last_sat.servo[1] {
            log.servo_saturation_ticks += 1;
            log.first_servo_saturation.get_or_insert(t);
        }

        act = step_actuators(&act, &cmd, &lags, &plant, dt);
        act_model = step_actuators(&act_model, &cmd, &lags, &empty, dt);
        if estimator.is_some() {
            nominal_sum += match cfg.estimator.nominal_torque {
                NominalTorque::Model => {
                    torque_mapping_matrix(&com_est, &act_model.servo_angles, &empty) * act_model.rotor_thrusts
                }
                NominalTorque::Desired => torque_des,
            };
            nominal_n += 1;
        }

        state = match step_dynamics(&state, &act, &plant, dt) {
            Ok(s) => s,
            Err(e) => {
                log.termination = Termination::Fault(e.to_string());
                log.end_time = t;
                break;
            }
        };
        k += 1;
        let t_next = k as f64 / hz as f64;

        let euler = state.euler();
        log.max_abs_roll = log.max_abs_roll.max(euler[0].abs());
        log.max_abs_pitch = log.max_abs_pitch.max(euler[1].abs());
        let sp_next = setpoint(cfg, t_next);
        pos_sq += (state.position - sp_next.position).norm_squared();
        pos_n += 1;
        if rc.enabled && t_next >= rc.start_time && t_next <= rc.end_time() {
            transport.max_abs_roll = transport.max_abs_roll.max(euler[0].abs());
            transport.max_abs_pitch = transport.max_abs_pitch.max(euler[1].abs());
            transport_sq += (state.position[axis] - sp_next.position[axis]).powi(2);
            transport.samples += 1;
        }
        if let Some(d) = bound.check(&state) {
            log.termination = Termination::Crashed(d);
            log.end_time = t_next;
            break;
        }
    }

    log.rms_position_error = if pos_n > 0 { (pos_sq / pos_n as f64).sqrt() } else { 0.0 };
    if transport.samples > 0 {
        transport.rms_tracking_error = (transport_sq / transport.samples as f64).sqrt();
        log.transport = Some(transport);
    }
    Ok(log)
}
