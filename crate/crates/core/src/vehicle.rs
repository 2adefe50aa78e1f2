//! Physical constants of the airframe and the kinematic maps from actuator
//! outputs (four rotor thrusts, two servo angles) to the body wrench.
//!
//! Frames: body `z` points down, so a thruster at zero tilt pushes along `-z`.
//! Thrusters 1 and 3 sit on the servo axis 1 arm (along body `x`) and tilt with
//! `theta_1`, producing body `y` force. Thrusters 2 and 4 sit on the axis 2 arm
//! (along body `y`) and tilt with `theta_2`, producing body `-x` force. The two
//! arms are stacked: axis 1 is `l` below the servo center, axis 2 is `l` above.

use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3, Vector4};
use thiserror::Error;

use crate::scalar::{clamp, lit, to_f64, Real};

/// Sign of each rotor's yaw reaction torque relative to its thrust vector.
///
/// Rotor `i` contributes `sigma_i * xi * F_t,i` on top of its lever-arm torque.
pub const YAW_REACTION_SIGN: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("mass must be positive (got {0})")]
    Mass(f64),
    #[error("inertia tensor must be symmetric positive-definite")]
    Inertia,
    #[error("arm length must be positive (got {0})")]
    ArmLength(f64),
    #[error("servo offset must be non-negative (got {0})")]
    ServoOffset(f64),
    #[error("yaw/thrust ratio must be non-negative (got {0})")]
    YawRatio(f64),
    #[error("thrust bounds must satisfy 0 <= min < max (got [{0}, {1}])")]
    ThrustBounds(f64, f64),
    #[error("servo angle limit must lie in (0, pi/2) (got {0})")]
    ServoLimit(f64),
    #[error("gravity must be positive (got {0})")]
    Gravity(f64),
}

/// Everything that defines the simulated airframe.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams<T: Real> {
    /// Mass [kg].
    pub mass: T,
    /// Inertia tensor about the center of mass, body frame [kg m^2].
    pub inertia: Matrix3<T>,
    /// Distance from the servo column to each rotor, `r` [m].
    pub arm_length: T,
    /// Vertical offset of each servo axis from the column center, `l` [m].
    pub servo_offset: T,
    /// Ratio between rotor reaction torque and thrust, `xi`.
    pub yaw_thrust_ratio: T,
    /// Center of mass in the body frame [m].
    pub com: Vector3<T>,
    /// Gravitational acceleration [m/s^2].
    pub gravity: T,
    /// Symmetric servo travel limit [rad].
    pub servo_angle_limit: T,
    pub thrust_min: T,
    pub thrust_max: T,
}

impl<T: Real> VehicleParams<T> {
    /// Empty airframe: 2.405 kg, r = 0.109 m, l = 0.015 m, xi = 0.01.
    ///
    /// Inertia is an estimate for a ~0.3 m cube of that mass. The center of mass
    /// is the empty-frame value that, with a 0.2 kg weight at
    /// `[0.184, 0, -0.121]` m, yields a combined center of mass of
    /// `[0.0175, 0.0085, -0.0430]` m.
    pub fn empty_airframe() -> Self {
        Self {
            mass: lit(2.405),
            inertia: Matrix3::from_diagonal(&Vector3::new(lit(0.035), lit(0.035), lit(0.045))),
            arm_length: lit(0.109),
            servo_offset: lit(0.015),
            yaw_thrust_ratio: lit(0.01),
            com: Vector3::new(
                lit(0.003_653_846_153_846_155_5),
                lit(0.009_206_860_706_860_708),
                lit(-0.036_513_513_513_513_514),
            ),
            gravity: lit(9.81),
            servo_angle_limit: lit(0.3),
            thrust_min: T::zero(),
            thrust_max: lit(15.0),
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let f = to_f64::<T>;
        if !(self.mass > T::zero()) {
            return Err(ParamError::Mass(f(self.mass)));
        }
        let sym = (self.inertia - self.inertia.transpose()).amax();
        if !(sym <= lit::<T>(1e-12) * self.inertia.amax()) || self.inertia.cholesky().is_none() {
            return Err(ParamError::Inertia);
        }
        if !(self.arm_length > T::zero()) {
            return Err(ParamError::ArmLength(f(self.arm_length)));
        }
        if !(self.servo_offset >= T::zero()) {
            return Err(ParamError::ServoOffset(f(self.servo_offset)));
        }
        if !(self.yaw_thrust_ratio >= T::zero()) {
            return Err(ParamError::YawRatio(f(self.yaw_thrust_ratio)));
        }
        if !(self.thrust_min >= T::zero() && self.thrust_min < self.thrust_max) {
            return Err(ParamError::ThrustBounds(f(self.thrust_min), f(self.thrust_max)));
        }
        if !(self.servo_angle_limit > T::zero() && self.servo_angle_limit < T::FRAC_PI_2()) {
            return Err(ParamError::ServoLimit(f(self.servo_angle_limit)));
        }
        if !(self.gravity > T::zero()) {
            return Err(ParamError::Gravity(f(self.gravity)));
        }
        Ok(())
    }

    /// Thruster hub positions in the body frame.
    pub fn thruster_positions(&self) -> [Vector3<T>; 4] {
        let r = self.arm_length;
        let l = self.servo_offset;
        let z = T::zero();
        [Vector3::new(r, z, l), Vector3::new(z, -r, -l), Vector3::new(-r, z, l), Vector3::new(z, r, -l)]
    }

    /// Weight `m * g` [N].
    pub fn weight(&self) -> T {
        self.mass * self.gravity
    }
}

/// Four rotor thrusts and two servo angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorCommand<T: Real> {
    /// `[F1, F2, F3, F4]` [N].
    pub thrusts: Vector4<T>,
    /// `[theta1, theta2]` [rad].
    pub servo_angles: Vector2<T>,
}

/// Which actuator limits were hit while saturating a command.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Saturation {
    pub thrust: bool,
    pub servo: [bool; 2],
}

impl Saturation {
    pub fn any(&self) -> bool {
        self.thrust || self.servo[0] || self.servo[1]
    }

    pub fn merge(self, other: Saturation) -> Saturation {
        Saturation {
            thrust: self.thrust || other.thrust,
            servo: [self.servo[0] || other.servo[0], self.servo[1] || other.servo[1]],
        }
    }
}

impl<T: Real> ActuatorCommand<T> {
    pub fn new(thrusts: Vector4<T>, servo_angles: Vector2<T>) -> Self {
        Self { thrusts, servo_angles }
    }

    pub fn hover(thrust_each: T) -> Self {
        Self::new(Vector4::repeat(thrust_each), Vector2::zeros())
    }

    /// Collective thrust of each servo axis, `(F_A1, F_A2)`.
    pub fn axis_sums(&self) -> (T, T) {
        (self.thrusts[0] + self.thrusts[2], self.thrusts[1] + self.thrusts[3])
    }

    /// Clamps thrusts and servo angles into the airframe limits.
    pub fn saturate(&self, params: &VehicleParams<T>) -> (Self, Saturation) {
        let mut out = *self;
        let mut sat = Saturation::default();
        for f in out.thrusts.iter_mut() {
            let c = clamp(*f, params.thrust_min, params.thrust_max);
            sat.thrust |= c != *f;
            *f = c;
        }
        let lim = params.servo_angle_limit;
        for (i, a) in out.servo_angles.iter_mut().enumerate() {
            let c = clamp(*a, -lim, lim);
            sat.servo[i] = c != *a;
            *a = c;
        }
        (out, sat)
    }
}

/// Body torque and body force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench<T: Real> {
    pub torque: Vector3<T>,
    pub force: Vector3<T>,
}

impl<T: Real> Wrench<T> {
    pub fn new(torque: Vector3<T>, force: Vector3<T>) -> Self {
        Self { torque, force }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.torque.iter().chain(self.force.iter()).all(|x| x.is_finite())
    }
}

/// Unit thrust direction of each rotor for the given servo angles.
pub fn thrust_directions<T: Real>(servo_angles: &Vector2<T>) -> [Vector3<T>; 4] {
    let (s1, c1) = servo_angles[0].sin_cos();
    let (s2, c2) = servo_angles[1].sin_cos();
    let z = T::zero();
    let axis1 = Vector3::new(z, s1, -c1);
    let axis2 = Vector3::new(-s2, z, -c2);
    [axis1, axis2, axis1, axis2]
}

/// Force vector produced by each rotor, body frame [N].
pub fn thruster_force_vectors<T: Real>(cmd: &ActuatorCommand<T>) -> [Vector3<T>; 4] {
    let dirs = thrust_directions(&cmd.servo_angles);
    [dirs[0] * cmd.thrusts[0], dirs[1] * cmd.thrusts[1], dirs[2] * cmd.thrusts[2], dirs[3] * cmd.thrusts[3]]
}

/// Net body force `[-F_A2 sin th2, F_A1 sin th1, -F_A1 cos th1 - F_A2 cos th2]`.
pub fn net_force<T: Real>(cmd: &ActuatorCommand<T>) -> Vector3<T> {
    let (fa1, fa2) = cmd.axis_sums();
    let (s1, c1) = cmd.servo_angles[0].sin_cos();
    let (s2, c2) = cmd.servo_angles[1].sin_cos();
    Vector3::new(-fa2 * s2, fa1 * s1, -fa1 * c1 - fa2 * c2)
}

/// 3x4 matrix mapping rotor thrusts to body torque about `com`.
pub fn torque_mapping_matrix<T: Real>(
    com: &Vector3<T>,
    servo_angles: &Vector2<T>,
    params: &VehicleParams<T>,
) -> Matrix3x4<T> {
    let r = params.arm_length;
    let l = params.servo_offset;
    let xi = params.yaw_thrust_ratio;
    let (xc, yc, zc) = (com[0], com[1], com[2]);
    let (s1, c1) = servo_angles[0].sin_cos();
    let (s2, c2) = servo_angles[1].sin_cos();

    let a1x = -(l - zc) * s1 + yc * c1;
    let a2x = (l + zc) * s2 - xc * c2;
    Matrix3x4::new(
        a1x,
        (r + yc) * c2 + xi * s2,
        a1x,
        -(r - yc) * c2 + xi * s2,
        //
        (r - xc) * c1 + xi * s1,
        a2x,
        -(r + xc) * c1 + xi * s1,
        a2x,
        //
        (r - xc) * s1 - xi * c1,
        -(r + yc) * s2 + xi * c2,
        -(r + xc) * s1 - xi * c1,
        (r - yc) * s2 + xi * c2,
    )
}

/// Wrench about `com` produced by an actuator command.
pub fn body_wrench<T: Real>(cmd: &ActuatorCommand<T>, com: &Vector3<T>, params: &VehicleParams<T>) -> Wrench<T> {
    let torque = torque_mapping_matrix(com, &cmd.servo_angles, params) * cmd.thrusts;
    Wrench::new(torque, net_force(cmd))
}
