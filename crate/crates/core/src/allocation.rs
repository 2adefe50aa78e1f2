//! Sequential two-step allocation from a desired body wrench to rotor thrusts
//! and servo angles.
//!
//! Step 1 freezes the servo angles at their current value and solves the 4x4
//! system `[torque; F_z] = M(com, theta) * thrusts`. Step 2 then picks servo
//! angles that realize the lateral force with those thrusts.

use nalgebra::{Matrix4, Vector2, Vector3, Vector4};
use thiserror::Error;

use crate::scalar::{clamp, lit, to_f64, Real};
use crate::vehicle::{torque_mapping_matrix, ActuatorCommand, Saturation, VehicleParams, Wrench};

/// Default largest accepted condition number of `M`.
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e6;
/// Smallest axis thrust sum for which step 2 is defined [N].
pub const MIN_AXIS_THRUST: f64 = 0.1;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum AllocationError {
    #[error("mapping matrix is singular (condition number {0:e})")]
    SingularMapping(f64),
    #[error("axis {axis} thrust sum {sum} N is below the {MIN_AXIS_THRUST} N minimum")]
    DegenerateThrust { axis: usize, sum: f64 },
}

/// `M_tau` stacked over the vertical force row `[-c1, -c2, -c1, -c2]`.
pub fn mapping_matrix<T: Real>(com: &Vector3<T>, servo_angles: &Vector2<T>, params: &VehicleParams<T>) -> Matrix4<T> {
    let mt = torque_mapping_matrix(com, servo_angles, params);
    let c1 = servo_angles[0].cos();
    let c2 = servo_angles[1].cos();
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 4>(0, 0).copy_from(&mt);
    m.set_row(3, &nalgebra::RowVector4::new(-c1, -c2, -c1, -c2));
    m
}

fn norm1<T: Real>(m: &Matrix4<T>) -> T {
    m.column_iter()
        .map(|c| c.iter().fold(T::zero(), |s, x| s + x.abs()))
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

/// Solves `M * x = rhs` by LU and reports the 1-norm condition number of `M`.
fn solve_monitored<T: Real>(m: &Matrix4<T>, rhs: &Vector4<T>, limit: T) -> Result<(Vector4<T>, T), AllocationError> {
    let lu = m.lu();
    let inv = lu.try_inverse().ok_or(AllocationError::SingularMapping(f64::INFINITY))?;
    let cond = norm1(m) * norm1(&inv);
    if !(cond <= limit) {
        return Err(AllocationError::SingularMapping(to_f64(cond)));
    }
    Ok((inv * rhs, cond))
}

/// Step 1 output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrustSolution<T: Real> {
    /// Thrusts before clamping; `M * raw == [torque; F_z]`.
    pub raw: Vector4<T>,
    /// Thrusts clamped into the rotor limits.
    pub thrusts: Vector4<T>,
    pub saturated: bool,
    pub condition: T,
}

pub fn allocate_step1<T: Real>(
    torque_des: &Vector3<T>,
    fz_des: T,
    com_est: &Vector3<T>,
    servo_angles: &Vector2<T>,
    params: &VehicleParams<T>,
    condition_limit: T,
) -> Result<ThrustSolution<T>, AllocationError> {
    let m = mapping_matrix(com_est, servo_angles, params);
    let rhs = Vector4::new(torque_des[0], torque_des[1], torque_des[2], fz_des);
    let (raw, condition) = solve_monitored(&m, &rhs, condition_limit)?;
    let thrusts = raw.map(|f| clamp(f, params.thrust_min, params.thrust_max));
    Ok(ThrustSolution { raw, thrusts, saturated: thrusts != raw, condition })
}

/// Step 2: servo angles realizing `(F_x, F_y)` with the step-1 thrusts.
///
/// The `asin` argument is clamped to `sin(servo_angle_limit)`, so the returned
/// angles always lie within the limit; clamping is reported per servo.
pub fn allocate_step2<T: Real>(
    fx_des: T,
    fy_des: T,
    thrusts_cmd: &Vector4<T>,
    params: &VehicleParams<T>,
) -> Result<(Vector2<T>, [bool; 2]), AllocationError> {
    let fa1 = thrusts_cmd[0] + thrusts_cmd[2];
    let fa2 = thrusts_cmd[1] + thrusts_cmd[3];
    let eps: T = lit(MIN_AXIS_THRUST);
    for (axis, sum) in [(1, fa1), (2, fa2)] {
        if !(sum > eps) {
            return Err(AllocationError::DegenerateThrust { axis, sum: to_f64(sum) });
        }
    }
    let s_max = params.servo_angle_limit.sin();
    let arg1 = fy_des / fa1;
    let arg2 = -fx_des / fa2;
    let c1 = clamp(arg1, -s_max, s_max);
    let c2 = clamp(arg2, -s_max, s_max);
    Ok((Vector2::new(c1.asin(), c2.asin()), [c1 != arg1, c2 != arg2]))
}

/// Bookkeeping of the most recent allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationState<T: Real> {
    /// Servo angles that froze `M` in step 1.
    pub last_servo_angles: Vector2<T>,
    /// Condition number of the last `M`.
    pub mapping_condition: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation<T: Real> {
    pub command: ActuatorCommand<T>,
    pub saturation: Saturation,
}

/// Runs both steps and keeps [`AllocationState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocator<T: Real> {
    pub condition_limit: T,
    pub state: AllocationState<T>,
}

impl<T: Real> Default for Allocator<T> {
    fn default() -> Self {
        Self::new(lit(DEFAULT_CONDITION_LIMIT))
    }
}

impl<T: Real> Allocator<T> {
    pub fn new(condition_limit: T) -> Self {
        Self {
            condition_limit,
            state: AllocationState { last_servo_angles: Vector2::zeros(), mapping_condition: T::one() },
        }
    }

    /// `measured_servo` freezes `M` for step 1.
    pub fn allocate(
        &mut self,
        wrench_des: &Wrench<T>,
        com_est: &Vector3<T>,
        measured_servo: &Vector2<T>,
        params: &VehicleParams<T>,
    ) -> Result<Allocation<T>, AllocationError> {
        let s1 = allocate_step1(
            &wrench_des.torque,
            wrench_des.force[2],
            com_est,
            measured_servo,
            params,
            self.condition_limit,
        )?;
        let (angles, servo_sat) = allocate_step2(wrench_des.force[0], wrench_des.force[1], &s1.thrusts, params)?;
        self.state = AllocationState { last_servo_angles: *measured_servo, mapping_condition: s1.condition };
        Ok(Allocation {
            command: ActuatorCommand::new(s1.thrusts, angles),
            saturation: Saturation { thrust: s1.saturated, servo: servo_sat },
        })
    }
}
