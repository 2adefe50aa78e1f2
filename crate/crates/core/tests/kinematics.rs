//! Kinematic and allocation properties checked against independent oracles.

use nalgebra::{Vector2, Vector3, Vector4};
use proptest::prelude::*;
use tiltcargo::allocation::{allocate_step1, allocate_step2, mapping_matrix, Allocator};
use tiltcargo::vehicle::{
    body_wrench, net_force, thruster_force_vectors, torque_mapping_matrix, ActuatorCommand, VehicleParams, Wrench,
    YAW_REACTION_SIGN,
};

fn params() -> VehicleParams<f64> {
    VehicleParams::empty_airframe()
}

/// Lever-arm cross products plus rotor reaction torques, rotor by rotor.
fn torque_by_cross_products(cmd: &ActuatorCommand<f64>, com: &Vector3<f64>, p: &VehicleParams<f64>) -> Vector3<f64> {
    let (r, l, xi) = (p.arm_length, p.servo_offset, p.yaw_thrust_ratio);
    let positions =
        [Vector3::new(r, 0.0, l), Vector3::new(0.0, -r, -l), Vector3::new(-r, 0.0, l), Vector3::new(0.0, r, -l)];
    let (s1, c1) = cmd.servo_angles[0].sin_cos();
    let (s2, c2) = cmd.servo_angles[1].sin_cos();
    let dirs = [
        Vector3::new(0.0, s1, -c1),
        Vector3::new(-s2, 0.0, -c2),
        Vector3::new(0.0, s1, -c1),
        Vector3::new(-s2, 0.0, -c2),
    ];
    (0..4).fold(Vector3::zeros(), |acc, i| {
        let f = dirs[i] * cmd.thrusts[i];
        acc + (positions[i] - com).cross(&f) + f * (YAW_REACTION_SIGN[i] * xi)
    })
}

fn com_strategy() -> impl Strategy<Value = Vector3<f64>> {
    (-0.05..0.05f64, -0.05..0.05f64, -0.08..0.02f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn servo_strategy() -> impl Strategy<Value = Vector2<f64>> {
    (-0.3..0.3f64, -0.3..0.3f64).prop_map(|(a, b)| Vector2::new(a, b))
}

fn thrust_strategy() -> impl Strategy<Value = Vector4<f64>> {
    prop::array::uniform4(0.0..15.0f64).prop_map(Vector4::from)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matrix_form_matches_cross_product_sum(com in com_strategy(), th in servo_strategy(), f in thrust_strategy()) {
        let p = params();
        let cmd = ActuatorCommand::new(f, th);
        let a = torque_mapping_matrix(&com, &th, &p) * f;
        let b = torque_by_cross_products(&cmd, &com, &p);
        prop_assert!((a - b).amax() <= 1e-12, "{a} vs {b}");
    }

    #[test]
    fn net_force_is_sum_of_rotor_forces(th in servo_strategy(), f in thrust_strategy()) {
        let cmd = ActuatorCommand::new(f, th);
        let sum = thruster_force_vectors(&cmd).iter().fold(Vector3::zeros(), |a, v| a + v);
        prop_assert!((net_force(&cmd) - sum).amax() <= 1e-12);
    }

    #[test]
    fn torque_is_linear_in_thrust(com in com_strategy(), th in servo_strategy(), f in thrust_strategy(), g in thrust_strategy(), k in 0.0..2.0f64) {
        let p = params();
        let t = |x: Vector4<f64>| body_wrench(&ActuatorCommand::new(x, th), &com, &p).torque;
        prop_assert!((t(f * k + g) - (t(f) * k + t(g))).amax() <= 1e-12);
    }

    #[test]
    fn com_shift_adds_force_cross_offset(com in com_strategy(), dp in com_strategy(), th in servo_strategy(), f in thrust_strategy()) {
        let p = params();
        let cmd = ActuatorCommand::new(f, th);
        let a = body_wrench(&cmd, &com, &p);
        let b = body_wrench(&cmd, &(com + dp), &p);
        // Moving the reference point by dp changes the moment by F x dp.
        prop_assert!((b.torque - a.torque - a.force.cross(&dp)).amax() <= 1e-12);
    }

    #[test]
    fn step1_round_trip(com in com_strategy(), th in servo_strategy(), f in prop::array::uniform4(2.0..10.0f64)) {
        // Wrenches generated from feasible thrusts are feasible by construction.
        let p = params();
        let m = mapping_matrix(&com, &th, &p);
        let target = m * Vector4::from(f);
        let torque = Vector3::new(target[0], target[1], target[2]);
        let s = allocate_step1(&torque, target[3], &com, &th, &p, 1e6).unwrap();
        prop_assert!((m * s.raw - target).amax() <= 1e-9);
        prop_assert!(!s.saturated);
    }

    #[test]
    fn unsaturated_allocation_reproduces_wrench(com in com_strategy(), f in prop::array::uniform4(4.0..8.0f64), th in (-0.25..0.25f64, -0.25..0.25f64)) {
        // Servo angles already at their commands: realized wrench equals the request.
        let p = params();
        let th = Vector2::new(th.0, th.1);
        let want = body_wrench(&ActuatorCommand::new(Vector4::from(f), th), &com, &p);
        let a = Allocator::default().allocate(&want, &com, &th, &p).unwrap();
        prop_assert!(!a.saturation.any());
        let got = body_wrench(&a.command, &com, &p);
        prop_assert!((got.torque - want.torque).amax() <= 1e-9);
        prop_assert!((got.force - want.force).amax() <= 1e-9);
    }

    #[test]
    fn servo_command_monotone_in_lateral_force(fy in 0.0..10.0f64, extra in 0.0..5.0f64, fa in 2.0..8.0f64) {
        let p = params();
        let thrusts = Vector4::repeat(fa);
        let (a, _) = allocate_step2(0.0, fy, &thrusts, &p).unwrap();
        let (b, _) = allocate_step2(0.0, fy + extra, &thrusts, &p).unwrap();
        let (c, _) = allocate_step2(0.0, -(fy + extra), &thrusts, &p).unwrap();
        prop_assert!(b[0] >= a[0]);
        prop_assert!(c[0] <= -a[0]);
        prop_assert!(b[0].abs() <= p.servo_angle_limit);
    }

    #[test]
    fn com_error_realizes_force_cross_offset(com in com_strategy(), dp in prop::array::uniform3(-0.02..0.02f64), f in prop::array::uniform4(5.0..7.0f64), th in (-0.2..0.2f64, -0.2..0.2f64)) {
        let p = params();
        let th = Vector2::new(th.0, th.1);
        let dp = Vector3::from(dp);
        let want = body_wrench(&ActuatorCommand::new(Vector4::from(f), th), &com, &p);
        let est = com - dp;
        let exact = Allocator::default().allocate(&want, &com, &th, &p);
        let biased = Allocator::default().allocate(&want, &est, &th, &p);
        prop_assume!(exact.is_ok() && biased.is_ok());
        let (exact, biased) = (exact.unwrap(), biased.unwrap());
        prop_assume!(!exact.saturation.any() && !biased.saturation.any());
        // Thrusts are solved at the measured servo angles; evaluate the true plant there.
        let at_measured = |c: &ActuatorCommand<f64>| body_wrench(&ActuatorCommand::new(c.thrusts, th), &com, &p);
        let t_exact = at_measured(&exact.command);
        let t_biased = at_measured(&biased.command);
        let expected = t_biased.force.cross(&dp);
        prop_assert!((t_biased.torque - t_exact.torque - expected).amax() <= 1e-9);
    }
}

#[test]
fn hover_allocation_feeds_back_to_hover_wrench() {
    let p = params();
    let w = Wrench::new(Vector3::zeros(), Vector3::new(0.0, 0.0, -p.weight()));
    let a = Allocator::default().allocate(&w, &Vector3::zeros(), &Vector2::zeros(), &p).unwrap();
    let got = body_wrench(&a.command, &Vector3::zeros(), &p);
    assert!((got.force - w.force).amax() < 1e-12);
    assert!(got.torque.amax() < 1e-12);
}

#[test]
fn f32_mapping_agrees_with_f64() {
    let p32 = VehicleParams::<f32>::empty_airframe();
    let p64 = params();
    let th = Vector2::new(0.1, -0.2);
    let com = Vector3::new(0.01, -0.02, -0.03);
    let m32 = torque_mapping_matrix(&com.cast::<f32>(), &th.cast::<f32>(), &p32);
    let m64 = torque_mapping_matrix(&com, &th, &p64);
    assert!((m32.cast::<f64>() - m64).amax() < 1e-6);
}
