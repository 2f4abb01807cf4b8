//! Rigid-body kinematics and bistatic propagation.
//!
//! Positions are in meters, times in seconds. A scatterer at body-frame offset
//! `y` sits at `x_T + s·v_T + R(s)·y` at slow time `s`, where the rotation
//! `R(s) = R_Ω(φ, θ)·R_z(ω_r s)` spins the body plane about its local z axis
//! and then tilts that axis into the lab frame.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const C0: f64 = 299_792_458.0;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("target position coincides with the {which} position")]
    CoincidentPoint { which: &'static str },
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("receiver index {index} out of range ({count} receivers)")]
    ReceiverIndex { index: usize, count: usize },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> GeometryError {
    GeometryError::InvalidParameter {
        field,
        reason: reason.into(),
    }
}

/// Rotation axis direction and spin rate of the body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationParams {
    /// Polar angle of the axis, radians in `[0, π]`.
    pub theta_rot: f64,
    /// Azimuth of the axis, radians in `[0, 2π)`.
    pub phi_rot: f64,
    /// Counter-clockwise angular velocity, rad/s.
    pub omega_r: f64,
}

impl RotationParams {
    pub fn new(theta_rot: f64, phi_rot: f64, omega_r: f64) -> Result<Self, GeometryError> {
        if !(0.0..=PI).contains(&theta_rot) {
            return Err(invalid("theta_rot", format!("{theta_rot} is outside [0, π]")));
        }
        if !(0.0..2.0 * PI).contains(&phi_rot) {
            return Err(invalid("phi_rot", format!("{phi_rot} is outside [0, 2π)")));
        }
        if !(omega_r >= 0.0) || !omega_r.is_finite() {
            return Err(invalid("omega_r", format!("{omega_r} must be finite and ≥ 0")));
        }
        Ok(Self {
            theta_rot,
            phi_rot,
            omega_r,
        })
    }

    /// Builds parameters from arbitrary angles, folding them into the
    /// canonical ranges. Used when perturbing or refining estimates.
    pub fn canonical(theta: f64, phi: f64, omega_r: f64) -> Self {
        let (theta, phi) = canonical_angles(theta, phi);
        Self {
            theta_rot: theta,
            phi_rot: phi,
            omega_r: omega_r.max(0.0),
        }
    }

    /// No rotation at all: identity for every `s`.
    pub fn frozen() -> Self {
        Self {
            theta_rot: 0.0,
            phi_rot: 0.0,
            omega_r: 0.0,
        }
    }

    /// `R_Ω(φ, θ)`: takes the body rotation plane to lab coordinates.
    pub fn axis_matrix(&self) -> Mat3 {
        axis_matrix(self.theta_rot, self.phi_rot)
    }

    /// Unit rotation axis in the lab frame, `R_Ω ẑ`.
    pub fn axis(&self) -> Vec3 {
        self.axis_matrix() * Vec3::z()
    }

    /// `R(s) = R_Ω(φ, θ)·R_z(ω_r s)`.
    pub fn rotation_matrix(&self, s: f64) -> Mat3 {
        self.axis_matrix() * rot_z(self.omega_r * s)
    }

    /// Rotation period `2π/ω_r`; infinite when the body does not spin.
    pub fn period(&self) -> f64 {
        if self.omega_r > 0.0 {
            2.0 * PI / self.omega_r
        } else {
            f64::INFINITY
        }
    }
}

/// Wraps `(θ, φ)` into `θ ∈ [0, π]`, `φ ∈ [0, 2π)` while keeping the
/// frame `R_Ω(φ, θ)` continuous where possible. Angles that cross a pole
/// are reflected (θ → −θ or 2π − θ) with φ shifted by π, which yields the
/// same axis but an in-plane frame rotated by π; the estimator's loss is
/// invariant under that since it works modulo π.
pub fn canonical_angles(theta: f64, phi: f64) -> (f64, f64) {
    let mut t = theta.rem_euclid(2.0 * PI);
    let mut p = phi;
    if t > PI {
        t = 2.0 * PI - t;
        p += PI;
    }
    (t, p.rem_euclid(2.0 * PI))
}

pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Tilt about y as printed for `R_Ω`: `[[c,0,−s],[0,1,0],[s,0,c]]`.
pub fn tilt(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    Mat3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
}

pub fn axis_matrix(theta: f64, phi: f64) -> Mat3 {
    rot_z(phi) * tilt(theta)
}

/// Linear motion of the rotation center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    /// Position at `s = 0`, m.
    pub x_t: Vec3,
    /// Velocity, m/s.
    pub v_t: Vec3,
}

impl Trajectory {
    pub fn new(x_t: Vec3, v_t: Vec3) -> Self {
        Self { x_t, v_t }
    }

    pub fn position(&self, s: f64) -> Vec3 {
        self.x_t + self.v_t * s
    }
}

/// Ground emitter plus a planar array of receivers at common height.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    pub emitter: Vec3,
    pub receivers: Vec<Vec3>,
    /// Common receiver height `H_R`, m.
    pub receiver_height: f64,
    /// Diameter (side of the square footprint) `a`, m.
    pub aperture: f64,
}

impl ArrayLayout {
    pub fn new(
        emitter: Vec3,
        receivers: Vec<Vec3>,
        receiver_height: f64,
        aperture: f64,
    ) -> Result<Self, GeometryError> {
        if receivers.len() < 2 {
            return Err(invalid("receivers", "at least two receivers are required"));
        }
        if !(aperture > 0.0) {
            return Err(invalid("aperture", "must be positive"));
        }
        let tol = 1e-9 * receiver_height.abs().max(1.0);
        if let Some(bad) = receivers
            .iter()
            .find(|r| (r.z - receiver_height).abs() > tol)
        {
            return Err(invalid(
                "receivers",
                format!(
                    "receiver at z = {} is off the array plane H_R = {receiver_height}",
                    bad.z
                ),
            ));
        }
        Ok(Self {
            emitter,
            receivers,
            receiver_height,
            aperture,
        })
    }

    /// `count` receivers drawn uniformly over the square `[−a/2, a/2]²`.
    pub fn random_square(
        emitter: Vec3,
        count: usize,
        aperture: f64,
        receiver_height: f64,
        seed: u64,
    ) -> Result<Self, GeometryError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = aperture / 2.0;
        let receivers = (0..count)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-half..=half),
                    rng.random_range(-half..=half),
                    receiver_height,
                )
            })
            .collect();
        Self::new(emitter, receivers, receiver_height, aperture)
    }

    /// `side × side` receivers on a regular grid spanning `[−a/2, a/2]²`.
    pub fn square_grid(
        emitter: Vec3,
        side: usize,
        aperture: f64,
        receiver_height: f64,
    ) -> Result<Self, GeometryError> {
        if side < 2 {
            return Err(invalid("receivers", "grid side must be ≥ 2"));
        }
        let step = aperture / (side - 1) as f64;
        let half = aperture / 2.0;
        let mut receivers = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                receivers.push(Vec3::new(
                    -half + i as f64 * step,
                    -half + j as f64 * step,
                    receiver_height,
                ));
            }
        }
        Self::new(emitter, receivers, receiver_height, aperture)
    }

    pub fn len(&self) -> usize {
        self.receivers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.receivers.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        self.receivers.iter().sum::<Vec3>() / self.receivers.len() as f64
    }

    pub fn receiver(&self, index: usize) -> Result<Vec3, GeometryError> {
        self.receivers
            .get(index)
            .copied()
            .ok_or(GeometryError::ReceiverIndex {
                index,
                count: self.receivers.len(),
            })
    }
}

/// Point scatterers in the body frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub offsets: Vec<Vec3>,
    pub reflectivities: Vec<f64>,
}

impl Scene {
    pub fn new(offsets: Vec<Vec3>, reflectivities: Vec<f64>) -> Result<Self, GeometryError> {
        if offsets.len() != reflectivities.len() {
            return Err(invalid(
                "scene",
                format!(
                    "{} offsets but {} reflectivities",
                    offsets.len(),
                    reflectivities.len()
                ),
            ));
        }
        if let Some(o) = offsets.iter().find(|o| o.z != 0.0) {
            return Err(invalid(
                "scene",
                format!("offset {o:?} leaves the rotation plane (z must be 0)"),
            ));
        }
        Ok(Self {
            offsets,
            reflectivities,
        })
    }

    /// Unit scatterers at the given planar positions.
    pub fn planar(points: &[(f64, f64)]) -> Self {
        Self {
            offsets: points.iter().map(|&(x, y)| Vec3::new(x, y, 0.0)).collect(),
            reflectivities: vec![1.0; points.len()],
        }
    }

    /// Six-glint satellite: `(0, ±0.15)` and `(±0.06, ±0.06)` m.
    pub fn satellite() -> Self {
        Self::planar(&[
            (0.0, 0.15),
            (0.0, -0.15),
            (0.06, 0.06),
            (0.06, -0.06),
            (-0.06, 0.06),
            (-0.06, -0.06),
        ])
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            offsets: self.offsets.clone(),
            reflectivities: self.reflectivities.iter().map(|r| r * factor).collect(),
        }
    }

    pub fn union(&self, other: &Scene) -> Self {
        let mut out = self.clone();
        out.offsets.extend_from_slice(&other.offsets);
        out.reflectivities.extend_from_slice(&other.reflectivities);
        out
    }
}

/// Lab-frame position `x_T + s·v_T + R(s)·offset`.
pub fn scatterer_position(s: f64, traj: &Trajectory, rot: &RotationParams, offset: &Vec3) -> Vec3 {
    traj.position(s) + rot.rotation_matrix(s) * offset
}

pub(crate) fn unit_from(x: &Vec3, origin: &Vec3, which: &'static str) -> Result<Vec3, GeometryError> {
    let d = x - origin;
    let n = d.norm();
    if n == 0.0 {
        return Err(GeometryError::CoincidentPoint { which });
    }
    Ok(d / n)
}

/// First-order Doppler scale factor
/// `γ_R = 1 − (v/c₀)·(unit(x − x_E) + unit(x − x_R))`.
pub fn doppler_factor(
    x: &Vec3,
    layout: &ArrayLayout,
    receiver: usize,
    v: &Vec3,
) -> Result<f64, GeometryError> {
    let xr = layout.receiver(receiver)?;
    let ue = unit_from(x, &layout.emitter, "emitter")?;
    let ur = unit_from(x, &xr, "receiver")?;
    Ok(1.0 - v.dot(&(ue + ur)) / C0)
}

/// Bistatic travel time `|x − x_E|/c₀ + γ_R·|x − x_R|/c₀`.
pub fn travel_time(
    x: &Vec3,
    layout: &ArrayLayout,
    receiver: usize,
    v: &Vec3,
) -> Result<f64, GeometryError> {
    let gamma = doppler_factor(x, layout, receiver, v)?;
    let xr = layout.receiver(receiver)?;
    Ok((x - layout.emitter).norm() / C0 + (x - xr).norm() / C0 * gamma)
}

/// `t_R^k(s) − t_R(s)`: travel time of the rotated offset relative to the
/// rotation center. Each term carries its own Doppler factor.
pub fn reduced_travel_time(
    s: f64,
    traj: &Trajectory,
    rot: &RotationParams,
    offset: &Vec3,
    layout: &ArrayLayout,
    receiver: usize,
) -> Result<f64, GeometryError> {
    if *offset == Vec3::zeros() {
        // still validate the geometry
        travel_time(&traj.position(s), layout, receiver, &traj.v_t)?;
        return Ok(0.0);
    }
    let center = traj.position(s);
    let x = center + rot.rotation_matrix(s) * offset;
    Ok(travel_time(&x, layout, receiver, &traj.v_t)? - travel_time(&center, layout, receiver, &traj.v_t)?)
}

/// Far-field linearization of [`reduced_travel_time`]:
/// `(R(s)·offset)·(unit(x_L − x_E) + unit(x_L − x_R))/c₀`, with `γ ≈ 1`.
pub fn linearized_reduced_travel_time(
    s: f64,
    traj: &Trajectory,
    rot: &RotationParams,
    offset: &Vec3,
    layout: &ArrayLayout,
    receiver: usize,
) -> Result<f64, GeometryError> {
    let center = traj.position(s);
    let xr = layout.receiver(receiver)?;
    let d = unit_from(&center, &layout.emitter, "emitter")? + unit_from(&center, &xr, "receiver")?;
    Ok((rot.rotation_matrix(s) * offset).dot(&d) / C0)
}

/// Reusable per-pulse geometry: rotation-center position, `R(s)` and the
/// center travel time of every receiver.
#[derive(Debug, Clone)]
pub struct PulseGeometry {
    pub center: Vec3,
    pub rotation: Mat3,
    center_times: Vec<f64>,
}

impl PulseGeometry {
    /// Geometry for the pulse at slow time `s`, with the rotation center at
    /// `center` moving with velocity `v`.
    pub fn new(
        s: f64,
        center: Vec3,
        v: &Vec3,
        rot: &RotationParams,
        layout: &ArrayLayout,
    ) -> Result<Self, GeometryError> {
        let center_times = (0..layout.len())
            .map(|r| travel_time(&center, layout, r, v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            center,
            rotation: rot.rotation_matrix(s),
            center_times,
        })
    }

    /// Center travel time `t_R(s)` for one receiver.
    pub fn center_time(&self, receiver: usize) -> f64 {
        self.center_times[receiver]
    }

    /// Exact reduced travel time for a body-frame offset.
    pub fn reduced_time(
        &self,
        offset: &Vec3,
        layout: &ArrayLayout,
        receiver: usize,
        v: &Vec3,
    ) -> Result<f64, GeometryError> {
        let x = self.center + self.rotation * offset;
        Ok(travel_time(&x, layout, receiver, v)? - self.center_times[receiver])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }

    // Independent oracle: the printed matrices multiplied element by element.
    fn oracle_rotation(s: f64, theta: f64, phi: f64, omega: f64) -> [[f64; 3]; 3] {
        let (sp, cp) = (phi.sin(), phi.cos());
        let (st, ct) = (theta.sin(), theta.cos());
        let a = omega * s;
        let (sa, ca) = (a.sin(), a.cos());
        let rz_phi = [[cp, -sp, 0.0], [sp, cp, 0.0], [0.0, 0.0, 1.0]];
        let tilt = [[ct, 0.0, -st], [0.0, 1.0, 0.0], [st, 0.0, ct]];
        let rz_s = [[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]];
        mat_mul(&mat_mul(&rz_phi, &tilt), &rz_s)
    }

    fn full_scale_layout() -> ArrayLayout {
        ArrayLayout::new(
            Vec3::zeros(),
            vec![Vec3::new(0.0, 0.0, 15e3), Vec3::new(15e3, 0.0, 15e3)],
            15e3,
            200e3,
        )
        .unwrap()
    }

    #[test]
    fn identity_at_rest() {
        let rot = RotationParams::new(0.0, 0.0, 3.7).unwrap();
        let m = rot.rotation_matrix(0.0);
        assert!((m - Mat3::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn full_period_returns_to_start() {
        let rot = RotationParams::new(1.1, 4.0, 2.0 * PI / 5.0).unwrap();
        let d = rot.rotation_matrix(5.0) - rot.rotation_matrix(0.0);
        assert!(d.abs().max() < 1e-12);
    }

    #[test]
    fn tilted_quarter_turn_matches_oracle() {
        let rot = RotationParams::new(PI / 2.0, 0.0, 1.0).unwrap();
        let s = PI / 2.0;
        let got = rot.rotation_matrix(s) * Vec3::x();
        let o = oracle_rotation(s, PI / 2.0, 0.0, 1.0);
        let want = Vec3::new(o[0][0], o[1][0], o[2][0]);
        assert!((got - want).norm() < 1e-14);
        // R_z(π/2) x̂ = ŷ and the tilt leaves ŷ alone.
        assert!((got - Vec3::y()).norm() < 1e-14);
    }

    #[test]
    fn scatterer_position_cases() {
        let traj = Trajectory::new(Vec3::new(0.0, 0.0, 500e3), Vec3::new(7600.0, 0.0, 0.0));
        let rot = RotationParams::new(PI / 2.0, 0.3, 2.0 * PI / 5.0).unwrap();
        for s in [-3.0, 0.0, 1.7] {
            assert_eq!(scatterer_position(s, &traj, &rot, &Vec3::zeros()), traj.position(s));
        }
        let still = RotationParams::new(PI / 2.0, 0.3, 0.0).unwrap();
        let y = Vec3::new(0.0, 0.15, 0.0);
        let p0 = scatterer_position(0.0, &traj, &still, &y);
        let p1 = scatterer_position(2.5, &traj, &still, &y);
        assert!((p1 - p0 - traj.v_t * 2.5).norm() < 1e-9);

        let rot = RotationParams::new(PI / 2.0, 0.0, 2.0 * PI / 5.0).unwrap();
        let s = 1.25;
        let o = oracle_rotation(s, PI / 2.0, 0.0, 2.0 * PI / 5.0);
        let want = traj.position(s) + Vec3::new(o[0][1], o[1][1], o[2][1]) * 0.15;
        let got = scatterer_position(s, &traj, &rot, &y);
        assert!((got - want).norm() < 1e-9);
        // quarter turn sends (0, 0.15, 0) to (−0.15, 0, 0) before the tilt,
        // and the tilt maps x̂ → (0, 0, 1) for θ = π/2.
        let rel = got - traj.position(s);
        assert!((rel - Vec3::new(0.0, 0.0, -0.15)).norm() < 1e-9);
    }

    #[test]
    fn doppler_cases() {
        let layout = full_scale_layout();
        let x = Vec3::new(0.0, 0.0, 500e3);
        assert_eq!(doppler_factor(&x, &layout, 0, &Vec3::zeros()).unwrap(), 1.0);
        // emitter and receiver 0 both directly below: v along x is transverse
        let g = doppler_factor(&x, &layout, 0, &Vec3::new(7600.0, 0.0, 0.0)).unwrap();
        assert_eq!(g, 1.0);
        // receiver 1 is offset by 15 km: hand-computed unit vector
        let d = (x - Vec3::new(15e3, 0.0, 15e3)).norm();
        let ux = -15e3 / d;
        let want = 1.0 - 7600.0 * ux / C0;
        let got = doppler_factor(&x, &layout, 1, &Vec3::new(7600.0, 0.0, 0.0)).unwrap();
        assert!((got - want).abs() < 1e-16);
        assert!(matches!(
            doppler_factor(&Vec3::zeros(), &layout, 0, &Vec3::x()),
            Err(GeometryError::CoincidentPoint { which: "emitter" })
        ));
    }

    #[test]
    fn round_trip_travel_time() {
        let layout = ArrayLayout::new(
            Vec3::zeros(),
            vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)],
            0.0,
            1.0,
        )
        .unwrap();
        let t = travel_time(&Vec3::new(0.0, C0, 0.0), &layout, 0, &Vec3::zeros()).unwrap();
        assert!((t - 2.0).abs() < 1e-15);
    }

    #[test]
    fn full_scale_travel_time_scale() {
        // Extended-precision oracle: split each coordinate into a hi/lo pair and
        // evaluate the norm via sqrt of a compensated sum.
        fn dist(a: Vec3, b: Vec3) -> f64 {
            let d = a - b;
            let (mut s, mut c) = (0.0f64, 0.0f64);
            for v in [d.x * d.x, d.y * d.y, d.z * d.z] {
                let y = v - c;
                let t = s + y;
                c = (t - s) - y;
                s = t;
            }
            s.sqrt()
        }
        let layout = full_scale_layout();
        let x = Vec3::new(3e3, -2e3, 500e3);
        let t = travel_time(&x, &layout, 1, &Vec3::zeros()).unwrap();
        let want = (dist(x, layout.emitter) + dist(x, layout.receivers[1])) / C0;
        assert!(((t - want) / want).abs() < 1e-15);
        assert!(t > 3.2e-3 && t < 3.4e-3);
    }

    #[test]
    fn reduced_time_symmetry_and_linearization() {
        let layout = full_scale_layout();
        let traj = Trajectory::new(Vec3::new(0.0, 0.0, 500e3), Vec3::zeros());
        let rot = RotationParams::new(3.0 * PI / 4.0, 0.4, 2.0 * PI / 5.0).unwrap();
        let y = Vec3::new(0.0, 0.15, 0.0);
        for s in [0.0, 0.3, 1.1, 2.9] {
            let plus = reduced_travel_time(s, &traj, &rot, &y, &layout, 0).unwrap();
            let minus = reduced_travel_time(s, &traj, &rot, &(-y), &layout, 0).unwrap();
            // second-order residual ~ |y|²/(c₀ H)
            let bound = 4.0 * y.norm_squared() / (C0 * 485e3);
            assert!((plus + minus).abs() <= bound, "s={s}: {plus} {minus}");
            let lin = linearized_reduced_travel_time(s, &traj, &rot, &y, &layout, 0).unwrap();
            assert!((plus - lin).abs() <= bound);
        }
        assert_eq!(
            reduced_travel_time(1.0, &traj, &rot, &Vec3::zeros(), &layout, 1).unwrap(),
            0.0
        );
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(RotationParams::new(4.0, 0.0, 1.0).is_err());
        assert!(RotationParams::new(1.0, 2.0 * PI, 1.0).is_err());
        assert!(RotationParams::new(1.0, 0.0, -1.0).is_err());
        assert!(ArrayLayout::new(Vec3::zeros(), vec![Vec3::zeros()], 0.0, 1.0).is_err());
        assert!(ArrayLayout::new(
            Vec3::zeros(),
            vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 2.0)],
            1.0,
            1.0
        )
        .is_err());
        assert!(Scene::new(vec![Vec3::new(0.0, 0.0, 0.1)], vec![1.0]).is_err());
    }

    #[test]
    fn canonical_angles_wrap() {
        let (t, p) = canonical_angles(-0.2, 0.1);
        assert!((t - 0.2).abs() < 1e-15 && (p - (0.1 + PI)).abs() < 1e-15);
        let (t, p) = canonical_angles(PI + 0.3, 6.0);
        assert!((t - (PI - 0.3)).abs() < 1e-12);
        assert!((p - (6.0 + PI - 2.0 * PI)).abs() < 1e-12);
        // same axis either way
        let a = axis_matrix(PI + 0.3, 6.0) * Vec3::z();
        let b = axis_matrix(t, p) * Vec3::z();
        assert!((a - b).norm() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn rotation_is_proper_orthogonal(
            s in -50.0f64..50.0,
            theta in 0.0f64..=PI,
            phi in 0.0f64..(2.0 * PI),
            omega in 0.0f64..10.0,
        ) {
            let rot = RotationParams::new(theta, phi, omega).unwrap();
            let m = rot.rotation_matrix(s);
            let err = (m.transpose() * m - Mat3::identity()).abs().max();
            prop_assert!(err < 1e-12);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
            let v = Vec3::new(0.3, -1.2, 0.7);
            let back = m.transpose() * (m * v);
            prop_assert!((back - v).norm() / v.norm() < 1e-12);
            let o = oracle_rotation(s, theta, phi, omega);
            for i in 0..3 { for j in 0..3 { prop_assert!((m[(i, j)] - o[i][j]).abs() < 1e-12); } }
        }

        #[test]
        fn rotation_is_periodic(
            s in -20.0f64..20.0,
            theta in 0.0f64..=PI,
            phi in 0.0f64..(2.0 * PI),
            omega in 0.1f64..10.0,
        ) {
            let rot = RotationParams::new(theta, phi, omega).unwrap();
            let d = rot.rotation_matrix(s + rot.period()) - rot.rotation_matrix(s);
            prop_assert!(d.abs().max() < 1e-10);
        }

        #[test]
        fn doppler_bound_and_static_range(
            x in -2e5f64..2e5, y in -2e5f64..2e5, h in 2e5f64..2e6,
            vx in -8e3f64..8e3, vy in -8e3f64..8e3, vz in -100.0f64..100.0,
            rx in -1e5f64..1e5, ry in -1e5f64..1e5,
        ) {
            let layout = ArrayLayout::new(
                Vec3::new(1e3, -2e3, 0.0),
                vec![Vec3::new(rx, ry, 15e3), Vec3::new(-rx, ry, 15e3)],
                15e3, 2e5,
            ).unwrap();
            let p = Vec3::new(x, y, h);
            let v = Vec3::new(vx, vy, vz);
            let g = doppler_factor(&p, &layout, 0, &v).unwrap();
            prop_assert!((g - 1.0).abs() <= 2.0 * v.norm() / C0 * (1.0 + 1e-12));
            let t = travel_time(&p, &layout, 1, &Vec3::zeros()).unwrap();
            let want = ((p - layout.emitter).norm() + (p - layout.receivers[1]).norm()) / C0;
            prop_assert!(((t - want) / want).abs() <= 1e-15);
        }

        #[test]
        fn reduced_time_bounded(
            s in -10.0f64..10.0, ox in -0.5f64..0.5, oy in -0.5f64..0.5,
            theta in 0.0f64..=PI, phi in 0.0f64..(2.0 * PI),
        ) {
            let layout = full_scale_layout();
            let traj = Trajectory::new(Vec3::new(0.0, 0.0, 500e3), Vec3::new(7600.0, 0.0, 0.0));
            let rot = RotationParams::new(theta, phi, 2.0 * PI / 5.0).unwrap();
            let off = Vec3::new(ox, oy, 0.0);
            let dt = reduced_travel_time(s, &traj, &rot, &off, &layout, 1).unwrap();
            let bound = 2.0 * off.norm() / C0 * (1.0 + traj.v_t.norm() / C0) * (1.0 + 1e-9);
            prop_assert!(dt.abs() <= bound);
        }
    }
}
