//! Rigid-body plant, actuator lag models and emulated sensing.
//!
//! The global frame has `z` down, so gravity is `[0, 0, +g]`. Attitude is a
//! body-to-global unit quaternion; Euler angles (Z-Y-X) are only produced at
//! output boundaries.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::scalar::{abs, clamp, lit, to_f64, Real};
use crate::vehicle::{body_wrench, ActuatorCommand, VehicleParams, Wrench};

/// Largest integration step accepted by [`step_dynamics`] [s].
pub const MAX_STEP: f64 = 0.005;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("integration step must be positive")]
    NonPositiveStep,
    #[error("integration step {0} s exceeds the {MAX_STEP} s limit")]
    StepTooLarge(f64),
    #[error("state became non-finite")]
    NonFinite,
    #[error("sensor timestamp {now} does not advance past {last}")]
    NonMonotonicTimestamp { last: f64, now: f64 },
}

/// Full 6-DOF state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidState<T: Real> {
    /// Center-of-mass position, global frame [m].
    pub position: Vector3<T>,
    /// Global velocity [m/s].
    pub velocity: Vector3<T>,
    /// Body to global rotation.
    pub attitude: UnitQuaternion<T>,
    /// Body rates `[p, q, r]` [rad/s].
    pub body_rates: Vector3<T>,
}

impl<T: Real> Default for RigidState<T> {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            body_rates: Vector3::zeros(),
        }
    }
}

impl<T: Real> RigidState<T> {
    /// `[roll, pitch, yaw]`, Z-Y-X convention.
    pub fn euler(&self) -> Vector3<T> {
        euler_zyx(&self.attitude)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
            && self.body_rates.iter().all(|x| x.is_finite())
            && self.attitude.coords.iter().all(|x| x.is_finite())
    }
}

pub fn euler_zyx<T: Real>(q: &UnitQuaternion<T>) -> Vector3<T> {
    let (roll, pitch, yaw) = q.euler_angles();
    Vector3::new(roll, pitch, yaw)
}

#[derive(Clone, Copy)]
struct Deriv<T: Real> {
    dp: Vector3<T>,
    dv: Vector3<T>,
    dq: Quaternion<T>,
    dw: Vector3<T>,
}

/// Mass properties and gravity used by the integrator.
#[derive(Debug, Clone, Copy)]
pub struct MassProperties<T: Real> {
    pub mass: T,
    pub inertia: Matrix3<T>,
    inertia_inv: Matrix3<T>,
    pub gravity: T,
}

impl<T: Real> MassProperties<T> {
    pub fn new(mass: T, inertia: Matrix3<T>, gravity: T) -> Option<Self> {
        let inertia_inv = inertia.try_inverse()?;
        Some(Self { mass, inertia, inertia_inv, gravity })
    }

    pub fn of(params: &VehicleParams<T>) -> Option<Self> {
        Self::new(params.mass, params.inertia, params.gravity)
    }
}

fn derivative<T: Real>(
    v: &Vector3<T>,
    q: &Quaternion<T>,
    w: &Vector3<T>,
    wrench: &Wrench<T>,
    mp: &MassProperties<T>,
) -> Deriv<T> {
    // Rotation of a possibly non-unit stage quaternion, normalized on the fly.
    let unit = UnitQuaternion::from_quaternion(*q);
    let accel = unit * wrench.force / mp.mass + Vector3::new(T::zero(), T::zero(), mp.gravity);
    let half: T = lit(0.5);
    let dq = q * Quaternion::from_parts(T::zero(), *w) * half;
    let jw = mp.inertia * w;
    let dw = mp.inertia_inv * (wrench.torque - w.cross(&jw));
    Deriv { dp: *v, dv: accel, dq, dw }
}

/// Advances the state by `dt` under a wrench held constant over the step (RK4).
pub fn step_with_wrench<T: Real>(
    state: &RigidState<T>,
    wrench: &Wrench<T>,
    mp: &MassProperties<T>,
    dt: T,
) -> Result<RigidState<T>, DynamicsError> {
    if !(dt > T::zero()) {
        return Err(DynamicsError::NonPositiveStep);
    }
    if dt > lit(MAX_STEP) {
        return Err(DynamicsError::StepTooLarge(to_f64(dt)));
    }
    let half: T = lit(0.5);
    let sixth: T = lit(1.0 / 6.0);
    let two: T = lit(2.0);

    let p0 = state.position;
    let v0 = state.velocity;
    let q0 = *state.attitude.quaternion();
    let w0 = state.body_rates;

    let k1 = derivative(&v0, &q0, &w0, wrench, mp);
    let h = dt * half;
    let k2 = derivative(&(v0 + k1.dv * h), &(q0 + k1.dq * h), &(w0 + k1.dw * h), wrench, mp);
    let k3 = derivative(&(v0 + k2.dv * h), &(q0 + k2.dq * h), &(w0 + k2.dw * h), wrench, mp);
    let k4 = derivative(&(v0 + k3.dv * dt), &(q0 + k3.dq * dt), &(w0 + k3.dw * dt), wrench, mp);

    let s = dt * sixth;
    let next = RigidState {
        position: p0 + (k1.dp + k2.dp * two + k3.dp * two + k4.dp) * s,
        velocity: v0 + (k1.dv + k2.dv * two + k3.dv * two + k4.dv) * s,
        attitude: UnitQuaternion::from_quaternion(q0 + (k1.dq + k2.dq * two + k3.dq * two + k4.dq) * s),
        body_rates: w0 + (k1.dw + k2.dw * two + k3.dw * two + k4.dw) * s,
    };
    if !next.is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    Ok(next)
}

/// Advances the plant by `dt` with the actuators held at `act`.
///
/// The wrench is evaluated about the true center of mass in `params`. The
/// gyroscopic term is integrated; servo reaction torque is not modeled.
pub fn step_dynamics<T: Real>(
    state: &RigidState<T>,
    act: &ActuatorState<T>,
    params: &VehicleParams<T>,
    dt: T,
) -> Result<RigidState<T>, DynamicsError> {
    let mp = MassProperties::of(params).ok_or(DynamicsError::NonFinite)?;
    let wrench = body_wrench(&act.as_command(), &params.com, params);
    step_with_wrench(state, &wrench, &mp, dt)
}

/// Bounds beyond which a run is declared crashed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceBound<T: Real> {
    /// Largest admissible `|roll|` or `|pitch|` [rad].
    pub max_tilt: T,
    /// Largest admissible distance from the origin [m].
    pub max_position: T,
}

impl<T: Real> Default for DivergenceBound<T> {
    fn default() -> Self {
        Self { max_tilt: T::one(), max_position: lit(50.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divergence {
    Roll,
    Pitch,
    Position,
    NonFinite,
}

impl<T: Real> DivergenceBound<T> {
    pub fn check(&self, state: &RigidState<T>) -> Option<Divergence> {
        if !state.is_finite() {
            return Some(Divergence::NonFinite);
        }
        let e = state.euler();
        if abs(e[0]) > self.max_tilt {
            Some(Divergence::Roll)
        } else if abs(e[1]) > self.max_tilt {
            Some(Divergence::Pitch)
        } else if state.position.norm() > self.max_position {
            Some(Divergence::Position)
        } else {
            None
        }
    }
}

/// Realized actuator outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorState<T: Real> {
    pub rotor_thrusts: Vector4<T>,
    pub servo_angles: Vector2<T>,
    pub servo_rates: Vector2<T>,
}

impl<T: Real> ActuatorState<T> {
    pub fn at_rest(cmd: &ActuatorCommand<T>) -> Self {
        Self { rotor_thrusts: cmd.thrusts, servo_angles: cmd.servo_angles, servo_rates: Vector2::zeros() }
    }

    pub fn as_command(&self) -> ActuatorCommand<T> {
        ActuatorCommand::new(self.rotor_thrusts, self.servo_angles)
    }
}

/// Rotor and servo lag parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorDynamics<T: Real> {
    pub rotor_time_constant: T,
    pub servo_time_constant: T,
    pub servo_rate_max: T,
}

impl<T: Real> Default for ActuatorDynamics<T> {
    fn default() -> Self {
        Self { rotor_time_constant: lit(0.02), servo_time_constant: lit(0.08), servo_rate_max: lit(4.0) }
    }
}

/// Exact solution of `x' = clamp((target - x) / tau, -rate_max, rate_max)` over `dt`.
/// Returns the new value and its rate at the end of the step.
fn rate_limited_lag<T: Real>(x: T, target: T, tau: T, rate_max: T, dt: T) -> (T, T) {
    let err = target - x;
    let band = rate_max * tau;
    let sign = if err >= T::zero() { T::one() } else { -T::one() };
    let mut x = x;
    let mut dt = dt;
    if abs(err) > band {
        let t_lin = (abs(err) - band) / rate_max;
        if dt <= t_lin {
            return (x + sign * rate_max * dt, sign * rate_max);
        }
        x = target - sign * band;
        dt -= t_lin;
    }
    let next = target - (target - x) * (-dt / tau).exp();
    (next, (target - next) / tau)
}

/// Advances the actuator lags by `dt` toward the (saturated) command.
///
/// Rotors follow a first-order lag; servos follow a rate-limited first-order lag.
pub fn step_actuators<T: Real>(
    act: &ActuatorState<T>,
    cmd: &ActuatorCommand<T>,
    lags: &ActuatorDynamics<T>,
    params: &VehicleParams<T>,
    dt: T,
) -> ActuatorState<T> {
    let (cmd, _) = cmd.saturate(params);
    let decay = (-dt / lags.rotor_time_constant).exp();
    let rotor_thrusts = act
        .rotor_thrusts
        .zip_map(&cmd.thrusts, |f, fc| clamp(fc + (f - fc) * decay, params.thrust_min, params.thrust_max));
    let lim = params.servo_angle_limit;
    let mut servo_angles = act.servo_angles;
    let mut servo_rates = act.servo_rates;
    for i in 0..2 {
        let (a, r) = rate_limited_lag(
            act.servo_angles[i],
            cmd.servo_angles[i],
            lags.servo_time_constant,
            lags.servo_rate_max,
            dt,
        );
        servo_angles[i] = clamp(a, -lim, lim);
        servo_rates[i] = r;
    }
    ActuatorState { rotor_thrusts, servo_angles, servo_rates }
}

/// Per-channel additive Gaussian noise standard deviations. All zero by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig<T: Real> {
    pub gyro: T,
    pub attitude: T,
    pub position: T,
    pub velocity: T,
    pub servo: T,
}

impl<T: Real> Default for NoiseConfig<T> {
    fn default() -> Self {
        let z = T::zero();
        Self { gyro: z, attitude: z, position: z, velocity: z, servo: z }
    }
}

impl<T: Real> NoiseConfig<T> {
    /// Gyro noise of 0.002 rad/s, everything else noiseless.
    pub fn gyro_only() -> Self {
        Self { gyro: lit(0.002), ..Self::default() }
    }
}

/// One set of measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSample<T: Real> {
    pub gyro: Vector3<T>,
    pub attitude: UnitQuaternion<T>,
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
    pub servo_angles: Vector2<T>,
    pub timestamp: T,
}

impl<T: Real> SensorSample<T> {
    pub fn euler(&self) -> Vector3<T> {
        euler_zyx(&self.attitude)
    }
}

/// Seeded sensor emulator.
#[derive(Debug, Clone)]
pub struct Sensors<T: Real> {
    noise: NoiseConfig<T>,
    rng: ChaCha8Rng,
    last: Option<T>,
}

impl<T: Real> Sensors<T> {
    pub fn new(noise: NoiseConfig<T>, seed: u64) -> Self {
        Self { noise, rng: ChaCha8Rng::seed_from_u64(seed), last: None }
    }

    fn gauss3(&mut self, sigma: T) -> Vector3<T> {
        if sigma == T::zero() {
            return Vector3::zeros();
        }
        Vector3::from_fn(|_, _| {
            let n: f64 = StandardNormal.sample(&mut self.rng);
            sigma * lit::<T>(n)
        })
    }

    pub fn sample(
        &mut self,
        state: &RigidState<T>,
        act: &ActuatorState<T>,
        timestamp: T,
    ) -> Result<SensorSample<T>, DynamicsError> {
        if let Some(last) = self.last {
            if !(timestamp > last) {
                let f = to_f64::<T>;
                return Err(DynamicsError::NonMonotonicTimestamp { last: f(last), now: f(timestamp) });
            }
        }
        self.last = Some(timestamp);
        let n = self.noise;
        let gyro = state.body_rates + self.gauss3(n.gyro);
        let tilt = self.gauss3(n.attitude);
        let attitude = state.attitude * UnitQuaternion::from_scaled_axis(tilt);
        let position = state.position + self.gauss3(n.position);
        let velocity = state.velocity + self.gauss3(n.velocity);
        let servo_noise = self.gauss3(n.servo);
        let servo_angles = act.servo_angles + Vector2::new(servo_noise[0], servo_noise[1]);
        Ok(SensorSample { gyro, attitude, position, velocity, servo_angles, timestamp })
    }
}

/// Noise-free sample at `timestamp`.
pub fn sample_exact<T: Real>(state: &RigidState<T>, act: &ActuatorState<T>, timestamp: T) -> SensorSample<T> {
    SensorSample {
        gyro: state.body_rates,
        attitude: state.attitude,
        position: state.position,
        velocity: state.velocity,
        servo_angles: act.servo_angles,
        timestamp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> VehicleParams<f64> {
        let mut p = VehicleParams::empty_airframe();
        p.com = Vector3::zeros();
        p
    }

    fn run(state: RigidState<f64>, act: &ActuatorState<f64>, p: &VehicleParams<f64>, n: usize) -> RigidState<f64> {
        (0..n).fold(state, |s, _| step_dynamics(&s, act, p, 1e-3).unwrap())
    }

    #[test]
    fn free_fall_for_one_second() {
        let p = params();
        let act = ActuatorState::at_rest(&ActuatorCommand::hover(0.0));
        let s = run(RigidState::default(), &act, &p, 1000);
        assert_relative_eq!(s.velocity, Vector3::new(0.0, 0.0, 9.81), epsilon = 1e-9);
        assert_relative_eq!(s.position[2], 0.5 * 9.81, epsilon = 1e-9);
    }

    #[test]
    fn hover_is_stationary() {
        let p = params();
        let act = ActuatorState::at_rest(&ActuatorCommand::hover(p.mass * p.gravity / 4.0));
        let s = run(RigidState::default(), &act, &p, 10_000);
        assert!(s.position.norm() < 1e-6);
        assert!(s.velocity.norm() < 1e-6);
        assert!(s.body_rates.norm() < 1e-9);
    }

    #[test]
    fn single_axis_spin_up_matches_closed_form() {
        let p = params();
        let mp = MassProperties::of(&p).unwrap();
        let w = Wrench::new(Vector3::new(0.0, 0.0, 0.01), Vector3::zeros());
        let mut s = RigidState::default();
        for k in 1..=1000 {
            s = step_with_wrench(&s, &w, &mp, 1e-3).unwrap();
            let t = k as f64 * 1e-3;
            assert!((s.body_rates[2] - 0.01 / 0.045 * t).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_steps() {
        let p = params();
        let act = ActuatorState::at_rest(&ActuatorCommand::hover(1.0));
        let s = RigidState::default();
        assert_eq!(step_dynamics(&s, &act, &p, 0.0), Err(DynamicsError::NonPositiveStep));
        assert_eq!(step_dynamics(&s, &act, &p, -1e-3), Err(DynamicsError::NonPositiveStep));
        assert!(matches!(step_dynamics(&s, &act, &p, 0.01), Err(DynamicsError::StepTooLarge(_))));
    }

    #[test]
    fn divergence_bound() {
        let b = DivergenceBound::default();
        let mut s = RigidState::<f64>::default();
        assert_eq!(b.check(&s), None);
        s.attitude = UnitQuaternion::from_euler_angles(1.1, 0.0, 0.0);
        assert_eq!(b.check(&s), Some(Divergence::Roll));
        s.attitude = UnitQuaternion::from_euler_angles(0.0, -1.05, 0.0);
        assert_eq!(b.check(&s), Some(Divergence::Pitch));
        s.attitude = UnitQuaternion::identity();
        s.position = Vector3::new(0.0, 50.1, 0.0);
        assert_eq!(b.check(&s), Some(Divergence::Position));
    }

    #[test]
    fn lag_fixed_point() {
        let p = params();
        let cmd = ActuatorCommand::new(Vector4::new(3.0, 4.0, 5.0, 6.0), Vector2::new(0.1, -0.2));
        let act = ActuatorState::at_rest(&cmd);
        let next = step_actuators(&act, &cmd, &ActuatorDynamics::default(), &p, 1e-3);
        assert_eq!(next.rotor_thrusts, act.rotor_thrusts);
        assert_eq!(next.servo_angles, act.servo_angles);
    }

    #[test]
    fn rotor_step_reaches_one_time_constant() {
        let p = params();
        let lags = ActuatorDynamics::default();
        let cmd = ActuatorCommand::new(Vector4::repeat(10.0), Vector2::zeros());
        let mut act = ActuatorState::at_rest(&ActuatorCommand::hover(0.0));
        for _ in 0..20 {
            act = step_actuators(&act, &cmd, &lags, &p, 1e-3);
        }
        assert_relative_eq!(act.rotor_thrusts[0], 10.0 * (1.0 - (-1.0f64).exp()), epsilon = 1e-12);
        assert!((act.rotor_thrusts[0] - 6.32).abs() < 5e-3);
    }

    #[test]
    fn servo_small_step_is_pure_first_order() {
        // Initial demanded rate 0.3 / 0.08 = 3.75 rad/s stays under the 4 rad/s limit.
        let p = params();
        let lags = ActuatorDynamics::default();
        let cmd = ActuatorCommand::new(Vector4::zeros(), Vector2::new(0.3, 0.0));
        let mut act = ActuatorState::at_rest(&ActuatorCommand::hover(0.0));
        for _ in 0..50 {
            act = step_actuators(&act, &cmd, &lags, &p, 1e-3);
        }
        assert_relative_eq!(act.servo_angles[0], 0.139_421_571_444_302_92, epsilon = 1e-12);
    }

    #[test]
    fn servo_large_step_is_rate_limited() {
        // Limit binds until |error| = 4 * 0.08 = 0.32 rad, i.e. for 0.07 s on a 0.6 rad step.
        let mut p = params();
        p.servo_angle_limit = 1.0;
        let lags = ActuatorDynamics::default();
        let cmd = ActuatorCommand::new(Vector4::zeros(), Vector2::new(0.6, -0.6));
        let mut act = ActuatorState::at_rest(&ActuatorCommand::hover(0.0));
        for _ in 0..50 {
            act = step_actuators(&act, &cmd, &lags, &p, 1e-3);
        }
        assert_relative_eq!(act.servo_angles[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(act.servo_angles[1], -0.2, epsilon = 1e-12);
        assert_relative_eq!(act.servo_rates[0], 4.0, epsilon = 1e-12);
        // Coarse and fine stepping agree because each step is solved exactly.
        let mut coarse = ActuatorState::at_rest(&ActuatorCommand::hover(0.0));
        for _ in 0..20 {
            coarse = step_actuators(&coarse, &cmd, &lags, &p, 5e-3);
        }
        let mut fine = ActuatorState::at_rest(&ActuatorCommand::hover(0.0));
        for _ in 0..100 {
            fine = step_actuators(&fine, &cmd, &lags, &p, 1e-3);
        }
        assert_relative_eq!(coarse.servo_angles, fine.servo_angles, epsilon = 1e-12);
    }

    #[test]
    fn servo_angle_never_exceeds_limit() {
        let p = params();
        let lags = ActuatorDynamics::default();
        let cmd = ActuatorCommand::new(Vector4::zeros(), Vector2::new(1.2, -1.2));
        let mut act = ActuatorState::at_rest(&ActuatorCommand::hover(0.0));
        for _ in 0..1000 {
            act = step_actuators(&act, &cmd, &lags, &p, 1e-3);
            assert!(act.servo_angles.amax() <= 0.3);
        }
        assert_relative_eq!(act.servo_angles[0], 0.3, epsilon = 1e-5);
    }

    #[test]
    fn noiseless_sensors_are_exact() {
        let s = RigidState::<f64> {
            body_rates: Vector3::new(0.1, -0.2, 0.3),
            position: Vector3::new(1.0, 2.0, 3.0),
            ..RigidState::default()
        };
        let act = ActuatorState::at_rest(&ActuatorCommand::new(Vector4::zeros(), Vector2::new(0.1, 0.2)));
        let mut sensors = Sensors::new(NoiseConfig::default(), 7);
        let m = sensors.sample(&s, &act, 0.0).unwrap();
        assert_eq!(m, sample_exact(&s, &act, 0.0));
    }

    #[test]
    fn timestamps_must_increase() {
        let s = RigidState::<f64>::default();
        let act = ActuatorState::at_rest(&ActuatorCommand::hover(0.0));
        let mut sensors = Sensors::new(NoiseConfig::default(), 7);
        sensors.sample(&s, &act, 0.1).unwrap();
        assert!(matches!(sensors.sample(&s, &act, 0.1), Err(DynamicsError::NonMonotonicTimestamp { .. })));
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let s = RigidState::<f64>::default();
        let act = ActuatorState::at_rest(&ActuatorCommand::hover(0.0));
        let mut a = Sensors::new(NoiseConfig::gyro_only(), 42);
        let mut b = Sensors::new(NoiseConfig::gyro_only(), 42);
        let mut c = Sensors::new(NoiseConfig::gyro_only(), 43);
        let mut differs = false;
        for k in 0..100 {
            let t = k as f64;
            let (x, y, z) =
                (a.sample(&s, &act, t).unwrap(), b.sample(&s, &act, t).unwrap(), c.sample(&s, &act, t).unwrap());
            assert_eq!(x, y);
            differs |= x.gyro != z.gyro;
        }
        assert!(differs);
    }

    #[test]
    fn gyro_noise_standard_deviation() {
        let s = RigidState::<f64>::default();
        let act = ActuatorState::at_rest(&ActuatorCommand::hover(0.0));
        let mut sensors = Sensors::new(NoiseConfig::gyro_only(), 1);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|k| sensors.sample(&s, &act, k as f64).unwrap().gyro[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - 0.002).abs() < 0.05 * 0.002);
    }
}
