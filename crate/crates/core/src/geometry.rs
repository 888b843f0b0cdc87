//! Rigid poses, the pinhole camera, and projection.
//!
//! Conventions used throughout the crate:
//!
//! * A [`Pose`] maps camera coordinates to world coordinates. Its translation
//!   is the camera center in world meters.
//! * The camera frame is x right, y down, z forward.
//! * Integer pixel coordinates are pixel *centers*; pixel `(i, j)` covers
//!   `[i - 0.5, i + 0.5) x [j - 0.5, j + 0.5)`.

use std::fmt;

use nalgebra::{Matrix3, Point3, Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points at or closer than this camera-space depth are treated as behind the camera.
pub const Z_NEAR: f64 = 0.1;

/// Normalizes `q` unless it is already unit length to within rounding, in
/// which case the components are kept bit for bit.
fn unitize(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    if (q.norm_squared() - 1.0).abs() <= 8.0 * f64::EPSILON {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::new_normalize(q)
    }
}

/// Quaternion sign is fixed so that `w >= 0`.
fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let q = unitize(q.into_inner());
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// 6-DOF camera pose: rotation camera→world plus camera center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: canonical(rotation),
            translation,
        }
    }

    /// Builds a pose from raw `(w, x, y, z)` quaternion components, normalizing them.
    pub fn from_wxyz(q: [f64; 4], t: [f64; 3]) -> Result<Self> {
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if !norm.is_finite() || norm < 1e-12 || t.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "pose has non-finite or zero-norm components: q={q:?} t={t:?}"
            )));
        }
        Ok(Pose::new(unitize(quat), Vector3::new(t[0], t[1], t[2])))
    }

    pub fn identity() -> Self {
        Pose::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    /// Camera looking horizontally along `heading` (radians from +x toward +y)
    /// in a z-up world, positioned at `center`.
    pub fn looking_along(center: Vector3<f64>, heading: f64) -> Self {
        let (s, c) = heading.sin_cos();
        let right = Vector3::new(s, -c, 0.0);
        let down = Vector3::new(0.0, 0.0, -1.0);
        let forward = Vector3::new(c, s, 0.0);
        let m = Matrix3::from_columns(&[right, down, forward]);
        let rot = UnitQuaternion::from_matrix(&m);
        Pose::new(rot, center)
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::from(self.translation)
    }

    /// Quaternion components as `[w, x, y, z]`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn with_translation(&self, t: Vector3<f64>) -> Self {
        Pose {
            rotation: self.rotation,
            translation: t,
        }
    }

    /// Transforms a world point into this camera's frame.
    pub fn world_to_camera(&self, x: &Point3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&(x.coords - self.translation))
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.transform_vector(p) + self.translation)
    }

    /// Camera-frame axes expressed in world coordinates: (right, down, forward).
    pub fn axes(&self) -> [Vector3<f64>; 3] {
        let m = self.rotation_matrix();
        [
            m.column(0).into_owned(),
            m.column(1).into_owned(),
            m.column(2).into_owned(),
        ]
    }

    /// Compares two poses up to quaternion sign.
    pub fn approx_eq(&self, other: &Pose, tol: f64) -> bool {
        let dq = self.rotation.coords.dot(&other.rotation.coords).abs();
        (1.0 - dq).abs() <= tol && (self.translation - other.translation).amax() <= tol
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [w, x, y, z] = self.wxyz();
        let t = self.translation;
        write!(
            f,
            "q=({w:.6}, {x:.6}, {y:.6}, {z:.6}) t=({:.4}, {:.4}, {:.4})",
            t.x, t.y, t.z
        )
    }
}

/// Relative correction applied to a coarse pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseDelta {
    pub dq: UnitQuaternion<f64>,
    pub dt: Vector3<f64>,
}

impl PoseDelta {
    pub fn new(dq: UnitQuaternion<f64>, dt: Vector3<f64>) -> Self {
        PoseDelta { dq: canonical(dq), dt }
    }

    pub fn identity() -> Self {
        PoseDelta::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    /// Rotation angle of the delta in degrees.
    pub fn angle_deg(&self) -> f64 {
        self.dq.angle().to_degrees()
    }
}

/// Left-composes the rotation and adds the translation.
///
/// Quaternion addition does not stay on SO(3), so the "+" of a 7-vector
/// correction is realized as `dq * q` and `t + dt`.
pub fn apply_correction(coarse: &Pose, delta: &PoseDelta) -> Pose {
    Pose::new(delta.dq * coarse.rotation, coarse.translation + delta.dt)
}

/// The delta taking `a` to `b` under [`apply_correction`].
pub fn relative_pose(a: &Pose, b: &Pose) -> PoseDelta {
    PoseDelta::new(b.rotation * a.rotation.inverse(), b.translation - a.translation)
}

/// Rotation angle of `qa⁻¹ qb` in degrees, in `[0, 180]`.
pub fn angular_distance(qa: &UnitQuaternion<f64>, qb: &UnitQuaternion<f64>) -> f64 {
    let rel = qa.inverse() * qb;
    let q = rel.quaternion();
    let v = q.imag().norm();
    (2.0 * v.atan2(q.w.abs())).to_degrees()
}

/// Unit quaternion for a rotation of `angle_deg` degrees about `axis`.
pub fn axis_angle(axis: Vector3<f64>, angle_deg: f64) -> UnitQuaternion<f64> {
    match Unit::try_new(axis, 1e-15) {
        Some(a) => UnitQuaternion::from_axis_angle(&a, angle_deg.to_radians()),
        None => UnitQuaternion::identity(),
    }
}

/// Pinhole intrinsics without distortion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx.is_finite()
            && self.fy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid camera intrinsics {self:?}")))
        }
    }

    /// 608x512 camera with a ~63° horizontal field of view.
    pub fn default_render() -> Self {
        CameraIntrinsics {
            fx: 500.0,
            fy: 500.0,
            cx: 304.0,
            cy: 256.0,
            width: 608,
            height: 512,
        }
    }

    /// Resolution used for the geometric-loss depth pre-render (304x256).
    pub fn default_loss() -> Self {
        Self::default_render().scaled(2)
    }

    /// Intrinsics for an image downsampled by an integer `factor` so that
    /// pixel `(i, j)` of the result corresponds to pixel `(factor*i, factor*j)`.
    pub fn scaled(&self, factor: usize) -> Self {
        let f = factor as f64;
        CameraIntrinsics {
            fx: self.fx / f,
            fy: self.fy / f,
            cx: self.cx / f,
            cy: self.cy / f,
            width: self.width.div_ceil(factor),
            height: self.height.div_ceil(factor),
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Pinhole projection of a camera-frame point (no depth check).
    #[inline]
    pub fn project_camera(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Camera-frame point seen at pixel `(u, v)` with depth `z`.
    #[inline]
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Pixel containing the continuous image coordinate, if inside the image.
    #[inline]
    pub fn pixel_of(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let i = (u + 0.5).floor();
        let j = (v + 0.5).floor();
        if i >= 0.0 && j >= 0.0 && (i as usize) < self.width && (j as usize) < self.height {
            Some((i as usize, j as usize))
        } else {
            None
        }
    }
}

/// Continuous image coordinates and camera-space depth of a projected point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub z: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum ProjectError {
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("point projects outside the image at ({}, {})", .0.u, .0.v)]
    OffImage(Projection),
}

/// Projects a world point, reporting behind-camera and off-image cases separately.
pub fn project(x: &Point3<f64>, pose: &Pose, k: &CameraIntrinsics) -> std::result::Result<Projection, ProjectError> {
    let proj = project_unbounded(x, pose, k)?;
    match k.pixel_of(proj.u, proj.v) {
        Some(_) => Ok(proj),
        None => Err(ProjectError::OffImage(proj)),
    }
}

/// Like [`project`] but accepts coordinates outside the image bounds.
pub fn project_unbounded(
    x: &Point3<f64>,
    pose: &Pose,
    k: &CameraIntrinsics,
) -> std::result::Result<Projection, ProjectError> {
    let pc = pose.world_to_camera(x);
    if pc.z <= Z_NEAR {
        return Err(ProjectError::BehindCamera { depth: pc.z });
    }
    let (u, v) = k.project_camera(&pc);
    Ok(Projection { u, v, z: pc.z })
}

/// World point seen at pixel coordinate `(u, v)` with camera-space depth `z`.
pub fn backproject(u: f64, v: f64, z: f64, pose: &Pose, k: &CameraIntrinsics) -> Point3<f64> {
    pose.camera_to_world(&k.backproject(u, v, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::default_render()
    }

    #[test]
    fn principal_point_on_axis() {
        let p = project(&Point3::new(0.0, 0.0, 5.0), &Pose::identity(), &k()).unwrap();
        assert_eq!((p.u, p.v, p.z), (304.0, 256.0, 5.0));
    }

    #[test]
    fn one_meter_right_at_ten_meters() {
        let pose = Pose::looking_along(Vector3::new(3.0, -2.0, 1.5), 0.7);
        let [right, _, fwd] = pose.axes();
        let x = pose.center() + right + fwd * 10.0;
        let p = project(&x, &pose, &k()).unwrap();
        assert_abs_diff_eq!(p.u, 304.0 + 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.v, 256.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.z, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn behind_and_off_image_are_distinct() {
        let id = Pose::identity();
        assert!(matches!(
            project(&Point3::new(0.0, 0.0, -1.0), &id, &k()),
            Err(ProjectError::BehindCamera { .. })
        ));
        assert!(matches!(
            project(&Point3::new(100.0, 0.0, 1.0), &id, &k()),
            Err(ProjectError::OffImage(_))
        ));
    }

    #[test]
    fn looking_along_axes_are_right_handed() {
        let pose = Pose::looking_along(Vector3::zeros(), 0.0);
        let [r, d, f] = pose.axes();
        assert_abs_diff_eq!(r, Vector3::new(0.0, -1.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(d, Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(f, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn identity_correction() {
        let p = Pose::looking_along(Vector3::new(1.0, 2.0, 3.0), 0.3);
        assert_eq!(apply_correction(&p, &PoseDelta::identity()), p);
        let d = relative_pose(&p, &p);
        assert!(d.dq.angle() < 1e-12);
        assert_eq!(d.dt, Vector3::zeros());
    }

    #[test]
    fn translation_only_delta() {
        let a = Pose::identity();
        let b = Pose::new(UnitQuaternion::identity(), Vector3::new(1.0, 2.0, 3.0));
        let d = relative_pose(&a, &b);
        assert_eq!(d.dt, Vector3::new(1.0, 2.0, 3.0));
        assert!(d.dq.angle() < 1e-15);
    }

    #[test]
    fn quarter_turn_about_z() {
        let dq = axis_angle(Vector3::z(), 90.0);
        let out = apply_correction(&Pose::identity(), &PoseDelta::new(dq, Vector3::zeros()));
        assert_abs_diff_eq!(out.rotation().angle().to_degrees(), 90.0, epsilon = 1e-9);
        let axis = out.rotation().axis().unwrap();
        assert_abs_diff_eq!(axis.into_inner(), Vector3::z(), epsilon = 1e-12);
    }

    #[test]
    fn canonical_sign() {
        let q = UnitQuaternion::new_unchecked(-axis_angle(Vector3::x(), 30.0).into_inner());
        let p = Pose::new(q, Vector3::zeros());
        assert!(p.wxyz()[0] >= 0.0);
    }

    #[test]
    fn angular_distance_cases() {
        let q = axis_angle(Vector3::new(0.3, -1.0, 0.2), 40.0);
        assert_abs_diff_eq!(angular_distance(&q, &q), 0.0, epsilon = 1e-9);
        let neg = UnitQuaternion::new_unchecked(-q.into_inner());
        assert_abs_diff_eq!(angular_distance(&q, &neg), 0.0, epsilon = 1e-9);
        let r = axis_angle(Vector3::new(1.0, 1.0, 0.0), 15.0) * q;
        assert_abs_diff_eq!(angular_distance(&q, &r), 15.0, epsilon = 1e-6);
        let s = axis_angle(Vector3::y(), 180.0) * q;
        assert_abs_diff_eq!(angular_distance(&q, &s), 180.0, epsilon = 1e-6);
    }

    fn arb_quat() -> impl Strategy<Value = UnitQuaternion<f64>> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
            .prop_map(|(w, x, y, z)| UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z)))
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (arb_quat(), -100.0..100.0f64, -100.0..100.0f64, -10.0..10.0f64)
            .prop_map(|(q, x, y, z)| Pose::new(q, Vector3::new(x, y, z)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn correction_round_trip(a in arb_pose(), b in arb_pose()) {
            let back = apply_correction(&a, &relative_pose(&a, &b));
            prop_assert!(back.approx_eq(&b, 1e-9));
            let n = back.rotation().quaternion().norm();
            prop_assert!((n - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn angular_distance_metric(a in arb_quat(), b in arb_quat(), c in arb_quat()) {
            let ab = angular_distance(&a, &b);
            prop_assert!((ab - angular_distance(&b, &a)).abs() < 1e-9);
            prop_assert!((0.0..=180.0 + 1e-9).contains(&ab));
            let ac = angular_distance(&a, &c);
            let cb = angular_distance(&c, &b);
            prop_assert!(ab <= ac + cb + 1e-7);
        }

        #[test]
        fn backproject_then_project(pose in arb_pose(), u in 0.0..607.0f64, v in 0.0..511.0f64, z in 0.5..200.0f64) {
            let k = k();
            let x = backproject(u, v, z, &pose, &k);
            let p = project(&x, &pose, &k).unwrap();
            prop_assert!((p.u - u).abs() < 1e-6 && (p.v - v).abs() < 1e-6);
            prop_assert!((p.z - z).abs() < 1e-6);
        }
    }
}
