//! Cascaded pose control: position PID producing a global force and attitude
//! PID producing a body torque, both assuming a level attitude reference.

use nalgebra::{UnitQuaternion, Vector3};
use thiserror::Error;

use crate::dynamics::SensorSample;
use crate::scalar::{clamp, lit, wrap_angle, Real};
use crate::vehicle::Wrench;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GainError {
    #[error("gain `{0}` must be finite and non-negative")]
    Negative(&'static str),
    #[error("integrator limit `{0}` must be positive")]
    IntegratorLimit(&'static str),
}

/// Per-axis gains. Vectors are ordered `[x, y, z]` or `[roll, pitch, yaw]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains<T: Real> {
    pub pos_p: Vector3<T>,
    pub pos_i: Vector3<T>,
    pub pos_d: Vector3<T>,
    pub att_p: Vector3<T>,
    pub att_i: Vector3<T>,
    pub att_d: Vector3<T>,
    /// Bound on each position integrator state [m s].
    pub integrator_limit: Vector3<T>,
    /// Bound on each attitude integrator state [rad s].
    pub att_integrator_limit: Vector3<T>,
}

impl<T: Real> Default for ControllerGains<T> {
    fn default() -> Self {
        let v = |x: f64, y: f64, z: f64| Vector3::new(lit(x), lit(y), lit(z));
        Self {
            pos_p: v(2.0, 2.0, 2.0),
            pos_i: v(0.5, 0.5, 0.5),
            pos_d: v(0.7, 0.7, 0.7),
            att_p: v(2.0, 2.0, 1.0),
            att_i: v(2.0, 2.0, 0.0),
            att_d: v(0.45, 0.45, 0.3),
            integrator_limit: v(3.0, 3.0, 3.0),
            att_integrator_limit: v(0.5, 0.5, 0.5),
        }
    }
}

impl<T: Real> ControllerGains<T> {
    pub fn validate(&self) -> Result<(), GainError> {
        let gains = [
            ("pos_p", self.pos_p),
            ("pos_i", self.pos_i),
            ("pos_d", self.pos_d),
            ("att_p", self.att_p),
            ("att_i", self.att_i),
            ("att_d", self.att_d),
        ];
        for (name, g) in gains {
            if !g.iter().all(|x| x.is_finite() && *x >= T::zero()) {
                return Err(GainError::Negative(name));
            }
        }
        for (name, g) in
            [("integrator_limit", self.integrator_limit), ("att_integrator_limit", self.att_integrator_limit)]
        {
            if !g.iter().all(|x| x.is_finite() && *x > T::zero()) {
                return Err(GainError::IntegratorLimit(name));
            }
        }
        Ok(())
    }
}

/// Pose reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoint<T: Real> {
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
    /// `[roll, pitch, yaw]` [rad].
    pub attitude: Vector3<T>,
}

impl<T: Real> Default for Setpoint<T> {
    fn default() -> Self {
        Self { position: Vector3::zeros(), velocity: Vector3::zeros(), attitude: Vector3::zeros() }
    }
}

impl<T: Real> Setpoint<T> {
    pub fn hold(position: Vector3<T>) -> Self {
        Self { position, ..Self::default() }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).chain(self.attitude.iter()).all(|x| x.is_finite())
    }
}

fn integrate<T: Real>(acc: &mut Vector3<T>, err: &Vector3<T>, limit: &Vector3<T>, dt: T) {
    for i in 0..3 {
        acc[i] = clamp(acc[i] + err[i] * dt, -limit[i], limit[i]);
    }
}

/// Position PID with gravity compensation at a nominal mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionController<T: Real> {
    pub integral: Vector3<T>,
}

impl<T: Real> Default for PositionController<T> {
    fn default() -> Self {
        Self { integral: Vector3::zeros() }
    }
}

impl<T: Real> PositionController<T> {
    /// Desired global force [N]. The integrator holds its value while `freeze` is set.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        sp: &Setpoint<T>,
        meas: &SensorSample<T>,
        gains: &ControllerGains<T>,
        mass_nominal: T,
        gravity: T,
        dt: T,
        freeze: bool,
    ) -> Vector3<T> {
        assert!(dt > T::zero());
        let e_pos = sp.position - meas.position;
        let e_vel = sp.velocity - meas.velocity;
        if !freeze {
            integrate(&mut self.integral, &e_pos, &gains.integrator_limit, dt);
        }
        let a_des = gains.pos_p.component_mul(&e_pos)
            + gains.pos_i.component_mul(&self.integral)
            + gains.pos_d.component_mul(&e_vel);
        (a_des - Vector3::new(T::zero(), T::zero(), gravity)) * mass_nominal
    }

    pub fn reset(&mut self) {
        self.integral = Vector3::zeros();
    }
}

/// Euler-angle PID with rate damping on the gyro.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeController<T: Real> {
    pub integral: Vector3<T>,
}

impl<T: Real> Default for AttitudeController<T> {
    fn default() -> Self {
        Self { integral: Vector3::zeros() }
    }
}

impl<T: Real> AttitudeController<T> {
    /// Desired body torque [N m]. The integrator holds its value while `freeze` is set.
    pub fn update(
        &mut self,
        sp: &Setpoint<T>,
        meas: &SensorSample<T>,
        gains: &ControllerGains<T>,
        dt: T,
        freeze: bool,
    ) -> Vector3<T> {
        let e_att = (sp.attitude - meas.euler()).map(wrap_angle);
        if !freeze {
            integrate(&mut self.integral, &e_att, &gains.att_integrator_limit, dt);
        }
        gains.att_p.component_mul(&e_att) + gains.att_i.component_mul(&self.integral)
            - gains.att_d.component_mul(&meas.gyro)
    }

    pub fn reset(&mut self) {
        self.integral = Vector3::zeros();
    }
}

/// Rotates the global force into the body frame and pairs it with the torque.
pub fn compose_wrench<T: Real>(
    force_global: &Vector3<T>,
    torque: &Vector3<T>,
    attitude: &UnitQuaternion<T>,
) -> Wrench<T> {
    Wrench::new(*torque, attitude.inverse_transform_vector(force_global))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{sample_exact, ActuatorState, RigidState};
    use crate::vehicle::ActuatorCommand;
    use approx::assert_relative_eq;

    fn meas(state: &RigidState<f64>) -> SensorSample<f64> {
        sample_exact(state, &ActuatorState::at_rest(&ActuatorCommand::hover(0.0)), 0.0)
    }

    #[test]
    fn gravity_compensation_only() {
        let mut c = PositionController::default();
        let f = c.update(
            &Setpoint::default(),
            &meas(&RigidState::default()),
            &ControllerGains::default(),
            2.405,
            9.81,
            0.004,
            false,
        );
        assert_relative_eq!(f, Vector3::new(0.0, 0.0, -2.405 * 9.81), epsilon = 1e-12);
    }

    #[test]
    fn proportional_position() {
        let mut c = PositionController::default();
        let g = ControllerGains { pos_i: Vector3::zeros(), ..ControllerGains::default() };
        let f = c.update(
            &Setpoint::hold(Vector3::new(1.0, 0.0, 0.0)),
            &meas(&RigidState::default()),
            &g,
            2.405,
            9.81,
            0.004,
            false,
        );
        assert_relative_eq!(f[0], 4.81, epsilon = 1e-12);
    }

    #[test]
    fn integrator_freezes_and_clamps() {
        let mut c = PositionController::default();
        let g = ControllerGains::default();
        let sp = Setpoint::hold(Vector3::new(1.0, 0.0, 0.0));
        let m = meas(&RigidState::default());
        c.update(&sp, &m, &g, 1.0, 9.81, 0.1, false);
        let before = c.integral;
        c.update(&sp, &m, &g, 1.0, 9.81, 0.1, true);
        assert_eq!(c.integral, before);
        for _ in 0..1000 {
            c.update(&sp, &m, &g, 1.0, 9.81, 0.1, false);
        }
        assert_eq!(c.integral[0], g.integrator_limit[0]);
    }

    #[test]
    fn attitude_examples() {
        let g = ControllerGains::default();
        let mut c = AttitudeController::default();
        let mut s = RigidState::default();
        assert_eq!(c.update(&Setpoint::default(), &meas(&s), &g, 0.001, true), Vector3::zeros());

        let sp = Setpoint { attitude: Vector3::new(0.1, 0.0, 0.0), ..Setpoint::default() };
        assert_relative_eq!(c.update(&sp, &meas(&s), &g, 0.001, true)[0], 0.2, epsilon = 1e-12);

        s.body_rates = Vector3::new(0.5, 0.0, 0.0);
        assert_relative_eq!(c.update(&Setpoint::default(), &meas(&s), &g, 0.001, true)[0], -0.225, epsilon = 1e-12);
    }

    #[test]
    fn yaw_error_is_wrapped() {
        let g = ControllerGains::default();
        let mut c = AttitudeController::default();
        let s = RigidState { attitude: UnitQuaternion::from_euler_angles(0.0, 0.0, 3.0), ..RigidState::default() };
        let sp = Setpoint { attitude: Vector3::new(0.0, 0.0, -3.0), ..Setpoint::default() };
        let t = c.update(&sp, &meas(&s), &g, 0.001, true);
        assert_relative_eq!(t[2], 1.0 * wrap_angle(-6.0), epsilon = 1e-12);
        assert!(t[2] > 0.0);
    }

    #[test]
    fn compose_rotates_into_body() {
        let f = Vector3::new(1.0, 0.0, 0.0);
        let w = compose_wrench(&f, &Vector3::zeros(), &UnitQuaternion::identity());
        assert_eq!(w.force, f);
        let q = UnitQuaternion::from_euler_angles(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let w = compose_wrench(&f, &Vector3::zeros(), &q);
        assert_relative_eq!(w.force, Vector3::new(0.0, -1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn attitude_loop_poles_are_stable() {
        // J s^3 + Kd s^2 + Kp s + Ki: Routh requires Kd Kp > J Ki.
        let g = ControllerGains::<f64>::default();
        for (i, j) in [0.035, 0.035, 0.045].into_iter().enumerate() {
            assert!(g.att_d[i] * g.att_p[i] > j * g.att_i[i]);
            // Without the integral term the loop is J s^2 + Kd s + Kp.
            let disc = g.att_d[i].powi(2) - 4.0 * j * g.att_p[i];
            let re = if disc < 0.0 { -g.att_d[i] / (2.0 * j) } else { (-g.att_d[i] + disc.sqrt()) / (2.0 * j) };
            assert!(re < 0.0);
        }
    }

    #[test]
    fn gain_validation() {
        let mut g = ControllerGains::<f64>::default();
        assert!(g.validate().is_ok());
        g.att_d[1] = -0.1;
        assert_eq!(g.validate(), Err(GainError::Negative("att_d")));
        let mut g = ControllerGains::<f64>::default();
        g.integrator_limit[2] = 0.0;
        assert_eq!(g.validate(), Err(GainError::IntegratorLimit("integrator_limit")));
    }
}
