//! Plant truth for an airframe carrying a point-mass payload.

use nalgebra::{Matrix3, Vector3};
use tiltcargo::VehicleParamsF64;

/// Mass properties of airframe plus payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Composite {
    pub mass: f64,
    /// Center of mass in the body frame [m].
    pub com: Vector3<f64>,
    /// Inertia about `com` [kg m^2].
    pub inertia: Matrix3<f64>,
}

/// Parallel-axis term of a point mass `m` at offset `d`.
fn point_inertia(m: f64, d: &Vector3<f64>) -> Matrix3<f64> {
    (Matrix3::identity() * d.norm_squared() - d * d.transpose()) * m
}

/// Combines the airframe (inertia about its own center of mass) with a point
/// payload of `payload_mass` at `attach`.
pub fn composite_com(empty: &VehicleParamsF64, payload_mass: f64, attach: &Vector3<f64>) -> Composite {
    assert!(payload_mass >= 0.0);
    let mass = empty.mass + payload_mass;
    let com = (empty.com * empty.mass + attach * payload_mass) / mass;
    let inertia =
        empty.inertia + point_inertia(empty.mass, &(empty.com - com)) + point_inertia(payload_mass, &(attach - com));
    Composite { mass, com, inertia }
}

/// Airframe parameters with the composite mass properties substituted in.
pub fn loaded_params(empty: &VehicleParamsF64, c: &Composite) -> VehicleParamsF64 {
    let mut p = empty.clone();
    p.mass = c.mass;
    p.com = c.com;
    p.inertia = c.inertia;
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_payload_keeps_airframe() {
        let e = VehicleParamsF64::empty_airframe();
        let c = composite_com(&e, 0.0, &Vector3::new(0.1, 0.2, 0.3));
        assert_eq!(c.com, e.com);
        assert_relative_eq!(c.inertia, e.inertia, epsilon = 1e-15);
    }

    #[test]
    fn default_payload_gives_measured_composite() {
        let e = VehicleParamsF64::empty_airframe();
        let c = composite_com(&e, 0.2, &Vector3::new(0.184, 0.0, -0.121));
        assert_relative_eq!(c.mass, 2.605, epsilon = 1e-12);
        assert_relative_eq!(c.com, Vector3::new(0.0175, 0.0085, -0.0430), epsilon = 1e-12);
    }

    #[test]
    fn equal_masses_meet_at_midpoint() {
        let mut e = VehicleParamsF64::empty_airframe();
        e.mass = 1.0;
        e.com = Vector3::new(-0.1, 0.05, 0.02);
        let c = composite_com(&e, 1.0, &Vector3::new(0.1, -0.05, -0.02));
        assert_relative_eq!(c.com, Vector3::zeros(), epsilon = 1e-15);
        // Two 1 kg points 0.1 m either side along x add 0.02 kg m^2 about y when
        // only the x offset is present; here the offset is [0.1, -0.05, -0.02].
        let d = Vector3::new(0.1f64, -0.05, -0.02);
        assert_relative_eq!(c.inertia[(2, 2)] - e.inertia[(2, 2)], 2.0 * (d[0] * d[0] + d[1] * d[1]), epsilon = 1e-15);
    }
}
