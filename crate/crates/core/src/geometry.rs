//! Camera model, rigid-body transforms, and disparity/inverse-depth
//! conversion.
//!
//! Everything here is a pure value type: poses compose and invert without
//! touching shared state, and all operations are safe to call concurrently.
//!
//! Conventions used throughout the crate:
//!
//! * Pixel coordinates are continuous; the center of the top-left pixel is
//!   `(0, 0)` and the image spans `[0, width) × [0, height)`.
//! * Inverse depth `d = 1/z` is expressed in 1/meters and parameterizes a
//!   point in its host image; valid inverse depths live in
//!   [`INV_DEPTH_MIN`, `INV_DEPTH_MAX`].
//! * A [`Pose`] maps points from one frame to another as `x' = R x + t`.
//!   Keyframe poses are world-to-camera; trajectory files store
//!   camera-to-world (see [`crate::eval`]).

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3, Vector6};
use std::fmt;
use std::path::Path;
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat3 = Matrix3<f64>;

/// Inverse depths below this are treated as invalid (too far / at infinity).
pub const INV_DEPTH_MIN: f64 = 1e-4;
/// Inverse depths above this are treated as invalid (too close).
pub const INV_DEPTH_MAX: f64 = 1e2;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("projected point ({u}, {v}) is outside the image")]
    OutOfView { u: f64, v: f64 },
    #[error("inverse depth {inv_depth} is not positive")]
    InvalidDepth { inv_depth: f64 },
    #[error("disparity {disp} is negative")]
    InvalidDisparity { disp: f64 },
    #[error("invalid intrinsics: {0}")]
    BadIntrinsics(String),
    #[error("rotation matrix is not orthonormal (defect {defect})")]
    NotOrthonormal { defect: f64 },
    #[error("calibration file: {0}")]
    BadCalibration(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pinhole camera parameters plus the stereo baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Stereo baseline in meters (the rectified left/right camera offset).
    pub baseline: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        baseline: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let intr = Self { fx, fy, cx, cy, baseline, width, height };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::BadIntrinsics(msg));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad(format!("focal lengths must be positive (fx={}, fy={})", self.fx, self.fy));
        }
        if !(self.baseline > 0.0) {
            return bad(format!("baseline must be positive ({})", self.baseline));
        }
        if self.width < 2 || self.height < 2 {
            return bad(format!("image size {}x{} too small", self.width, self.height));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad(format!("cx = {} outside [0, {})", self.cx, self.width));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad(format!("cy = {} outside [0, {})", self.cy, self.height));
        }
        Ok(())
    }

    /// Intrinsics of pyramid level `level` (level 0 = this).
    ///
    /// Follows the box-filter convention: pixel `(i, j)` at level `l+1`
    /// averages the 2×2 block starting at `(2i, 2j)` of level `l`, so pixel
    /// centers map as `u' = (u + 0.5)/2 - 0.5`.
    pub fn at_level(&self, level: usize) -> Intrinsics {
        let s = (1u64 << level) as f64;
        Intrinsics {
            fx: self.fx / s,
            fy: self.fy / s,
            cx: (self.cx + 0.5) / s - 0.5,
            cy: (self.cy + 0.5) / s - 0.5,
            baseline: self.baseline,
            width: self.width >> level,
            height: self.height >> level,
        }
    }

    /// Scale the stereo baseline by `s` (the virtual-baseline tuning knob).
    pub fn with_baseline_scale(&self, s: f64) -> Intrinsics {
        Intrinsics { baseline: self.baseline * s, ..*self }
    }

    /// Load from a one-line text file: `fx fy cx cy baseline width height`.
    pub fn from_calib_file(path: &Path) -> Result<Self, GeometryError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_calib_str(&text)
    }

    pub fn from_calib_str(text: &str) -> Result<Self, GeometryError> {
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(GeometryError::BadCalibration(format!(
                "expected 7 whitespace-separated values, got {}",
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64, GeometryError> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| GeometryError::BadCalibration(format!("field {}: {}", i, e)))
        };
        let (fx, fy, cx, cy, baseline) = (num(0)?, num(1)?, num(2)?, num(3)?, num(4)?);
        let width = num(5)? as usize;
        let height = num(6)? as usize;
        Intrinsics::new(fx, fy, cx, cy, baseline, width, height)
    }

    pub fn write_calib_file(&self, path: &Path) -> Result<(), GeometryError> {
        std::fs::write(path, self.to_calib_string())?;
        Ok(())
    }

    pub fn to_calib_string(&self) -> String {
        format!(
            "{} {} {} {} {} {} {}\n",
            self.fx, self.fy, self.cx, self.cy, self.baseline, self.width, self.height
        )
    }
}

/// Rigid-body transform in SE(3): `x' = R x + t`.
///
/// The rotation is stored as an orthonormal matrix; incremental updates go
/// through [`Pose::exp`] with a 6-vector twist `[ρ, φ]` (translation part
/// first).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Rotation3<f64>,
    translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: Rotation3::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vec3) -> Self {
        Pose { rotation, translation }
    }

    /// Build from a raw 3×3 matrix, verifying orthonormality to 1e-9.
    pub fn from_matrix_parts(rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        let defect = (rotation.transpose() * rotation - Mat3::identity()).norm();
        let det = rotation.determinant();
        if defect > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(GeometryError::NotOrthonormal { defect: defect.max((det - 1.0).abs()) });
        }
        Ok(Pose { rotation: Rotation3::from_matrix_unchecked(rotation), translation })
    }

    /// Nearest rigid transform to a possibly slightly denormalized matrix
    /// (used when reading trajectory files written by other tools).
    pub fn from_matrix_projected(rotation: Mat3, translation: Vec3) -> Self {
        Pose { rotation: Rotation3::from_matrix(&rotation), translation }
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        *self.rotation.matrix()
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn transform(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rot_inv = self.rotation.inverse();
        Pose { rotation: rot_inv, translation: -(rot_inv * self.translation) }
    }

    /// Exponential map of a twist `[ρ, φ]` (translation, then rotation).
    pub fn exp(twist: &Vec6) -> Pose {
        let rho = Vec3::new(twist[0], twist[1], twist[2]);
        let phi = Vec3::new(twist[3], twist[4], twist[5]);
        let theta2 = phi.norm_squared();
        let theta = theta2.sqrt();
        let phi_hat = skew(&phi);
        let phi_hat2 = phi_hat * phi_hat;
        // V = I + a·Φ + b·Φ² with a = (1-cosθ)/θ², b = (θ-sinθ)/θ³.
        let (a, b) = if theta < 1e-5 {
            (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
        } else {
            ((1.0 - theta.cos()) / theta2, (theta - theta.sin()) / (theta2 * theta))
        };
        let v = Mat3::identity() + phi_hat * a + phi_hat2 * b;
        Pose { rotation: Rotation3::from_scaled_axis(phi), translation: v * rho }
    }

    /// Logarithm map, inverse of [`Pose::exp`].
    pub fn log(&self) -> Vec6 {
        // Quaternion extraction keeps full precision near the identity where
        // the matrix-trace route degrades to sqrt(eps).
        let phi = nalgebra::UnitQuaternion::from_rotation_matrix(&self.rotation).scaled_axis();
        let theta2 = phi.norm_squared();
        let theta = theta2.sqrt();
        let phi_hat = skew(&phi);
        let phi_hat2 = phi_hat * phi_hat;
        // V⁻¹ = I - Φ/2 + c·Φ².
        let c = if theta < 1e-5 {
            1.0 / 12.0 + theta2 / 720.0
        } else {
            (1.0 - theta * (1.0 + theta.cos()) / (2.0 * theta.sin())) / theta2
        };
        let v_inv = Mat3::identity() - phi_hat * 0.5 + phi_hat2 * c;
        let rho = v_inv * self.translation;
        Vec6::new(rho[0], rho[1], rho[2], phi[0], phi[1], phi[2])
    }

    /// Rotation angle in radians.
    pub fn rotation_angle(&self) -> f64 {
        nalgebra::UnitQuaternion::from_rotation_matrix(&self.rotation).angle()
    }

    /// Orthonormality defect of the stored rotation (for invariant checks).
    pub fn orthonormality_defect(&self) -> f64 {
        let r = self.rotation.matrix();
        (r.transpose() * r - Mat3::identity()).norm()
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t=({:.4}, {:.4}, {:.4}) angle={:.4}rad",
            self.translation[0],
            self.translation[1],
            self.translation[2],
            self.rotation_angle()
        )
    }
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// Lifecycle of a hosted point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    Immature,
    Active,
    Marginalized,
    Dropped,
}

/// A point parameterized by pixel position and inverse depth in its host
/// keyframe.
#[derive(Debug, Clone, Copy)]
pub struct InverseDepthPoint {
    pub host_kf: usize,
    pub u: f64,
    pub v: f64,
    pub inv_depth: f64,
    pub status: PointStatus,
}

impl InverseDepthPoint {
    /// `(u, v)` must keep a 2-pixel interior margin so the residual pattern
    /// and gradients have neighbors.
    pub fn in_interior(&self, width: usize, height: usize) -> bool {
        self.u >= 2.0
            && self.v >= 2.0
            && self.u <= width as f64 - 3.0
            && self.v <= height as f64 - 3.0
    }
}

/// Perspective projection. Fails for points at or behind the camera plane
/// and signals out-of-view projections distinctly.
pub fn project(point: &Vec3, intr: &Intrinsics) -> Result<Vec2, GeometryError> {
    let z = point[2];
    if z <= 1e-6 {
        return Err(GeometryError::BehindCamera { z });
    }
    let u = intr.fx * point[0] / z + intr.cx;
    let v = intr.fy * point[1] / z + intr.cy;
    if u < 0.0 || u >= intr.width as f64 || v < 0.0 || v >= intr.height as f64 {
        return Err(GeometryError::OutOfView { u, v });
    }
    Ok(Vec2::new(u, v))
}

/// Back-projection of a pixel at a given inverse depth into the camera frame.
pub fn backproject(u: f64, v: f64, inv_depth: f64, intr: &Intrinsics) -> Result<Vec3, GeometryError> {
    if inv_depth <= 0.0 {
        return Err(GeometryError::InvalidDepth { inv_depth });
    }
    let z = 1.0 / inv_depth;
    Ok(Vec3::new((u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z))
}

/// Convert a stereo disparity (pixels) to inverse depth (1/m):
/// `d = disp / (fx · baseline)`.
///
/// Zero disparity maps to zero inverse depth (a point at infinity); callers
/// must treat that as invalid for initialization.
pub fn disparity_to_inverse_depth(disp: f64, intr: &Intrinsics) -> Result<f64, GeometryError> {
    if disp < 0.0 {
        return Err(GeometryError::InvalidDisparity { disp });
    }
    Ok(disp / (intr.fx * intr.baseline))
}

/// Warp a pixel with known inverse depth through a relative pose:
/// back-project, transform, re-project.
pub fn warp_point(
    u: f64,
    v: f64,
    inv_depth: f64,
    relative_pose: &Pose,
    intr: &Intrinsics,
) -> Result<Vec2, GeometryError> {
    let x = backproject(u, v, inv_depth, intr)?;
    project(&relative_pose.transform(&x), intr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix4;
    use proptest::prelude::*;

    fn test_intr() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 100.0, 100.0, 0.5, 200, 200).unwrap()
    }

    #[test]
    fn project_optical_axis() {
        let intr = Intrinsics::new(1.0, 1.0, 0.0, 0.0, 1.0, 10, 10).unwrap();
        let p = project(&Vec3::new(0.0, 0.0, 1.0), &intr).unwrap();
        assert_eq!((p[0], p[1]), (0.0, 0.0));
    }

    #[test]
    fn project_hand_arithmetic() {
        let intr = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 0.5, 400, 400).unwrap();
        let p = project(&Vec3::new(1.0, 0.0, 2.0), &intr).unwrap();
        assert_relative_eq!(p[0], 100.0, max_relative = 1e-15);
    }

    #[test]
    fn project_behind_camera() {
        let intr = test_intr();
        assert!(matches!(
            project(&Vec3::new(0.0, 0.0, -1.0), &intr),
            Err(GeometryError::BehindCamera { .. })
        ));
    }

    #[test]
    fn project_out_of_view() {
        let intr = test_intr();
        assert!(matches!(
            project(&Vec3::new(5.0, 0.0, 1.0), &intr),
            Err(GeometryError::OutOfView { .. })
        ));
    }

    #[test]
    fn backproject_principal_ray() {
        let intr = test_intr();
        let x = backproject(intr.cx, intr.cy, 0.25, &intr).unwrap();
        assert_relative_eq!(x, Vec3::new(0.0, 0.0, 4.0), epsilon = 1e-15);
    }

    #[test]
    fn backproject_hand_arithmetic() {
        let intr = test_intr();
        let x = backproject(150.0, 120.0, 0.5, &intr).unwrap();
        assert_relative_eq!(x, Vec3::new(1.0, 0.4, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn backproject_rejects_nonpositive_depth() {
        let intr = test_intr();
        assert!(backproject(10.0, 10.0, 0.0, &intr).is_err());
        assert!(backproject(10.0, 10.0, -1.0, &intr).is_err());
    }

    #[test]
    fn disparity_conversion_examples() {
        let unit = Intrinsics::new(1.0, 1.0, 0.0, 0.0, 1.0, 10, 10).unwrap();
        assert_eq!(disparity_to_inverse_depth(0.0, &unit).unwrap(), 0.0);
        assert_eq!(disparity_to_inverse_depth(2.0, &unit).unwrap(), 2.0);
        let kitti = Intrinsics::new(718.856, 718.856, 607.19, 185.22, 0.54, 1241, 376).unwrap();
        assert_relative_eq!(
            disparity_to_inverse_depth(50.0, &kitti).unwrap(),
            50.0 / (718.856 * 0.54),
            max_relative = 1e-15
        );
        assert!(disparity_to_inverse_depth(-1.0, &kitti).is_err());
    }

    #[test]
    fn warp_identity_is_identity() {
        let intr = test_intr();
        for &(u, v, d) in &[(50.0, 60.0, 0.2), (10.0, 190.0, 1.5), (120.3, 77.7, 0.01)] {
            let p = warp_point(u, v, d, &Pose::identity(), &intr).unwrap();
            assert!((p[0] - u).abs() <= 1e-12 && (p[1] - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn warp_pure_baseline_gives_disparity_shift() {
        let intr = test_intr();
        let pose = Pose::new(Rotation3::identity(), Vec3::new(-intr.baseline, 0.0, 0.0));
        let (u, v, d) = (120.0, 90.0, 0.4);
        let p = warp_point(u, v, d, &pose, &intr).unwrap();
        assert_relative_eq!(p[0], u - intr.fx * intr.baseline * d, epsilon = 1e-12);
        assert_relative_eq!(p[1], v, epsilon = 1e-12);
    }

    /// Independent oracle: warp through 4×4 homogeneous matrix arithmetic.
    fn warp_homogeneous_oracle(u: f64, v: f64, d: f64, pose: &Pose, intr: &Intrinsics) -> Vec2 {
        let k = Matrix4::new(
            intr.fx, 0.0, intr.cx, 0.0, //
            0.0, intr.fy, intr.cy, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        );
        let mut t = Matrix4::identity();
        t.fixed_view_mut::<3, 3>(0, 0).copy_from(pose.rotation().matrix());
        t.fixed_view_mut::<3, 1>(0, 3).copy_from(&pose.translation());
        let k_inv = k.try_inverse().unwrap();
        let z = 1.0 / d;
        let px = nalgebra::Vector4::new(u * z, v * z, z, 1.0);
        let q = k * t * k_inv * px;
        Vec2::new(q[0] / q[2], q[1] / q[2])
    }

    #[test]
    fn warp_matches_homogeneous_oracle() {
        let intr = test_intr();
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let twist = Vec6::new(
                0.1 * (next() - 0.5),
                0.1 * (next() - 0.5),
                0.1 * (next() - 0.5),
                0.05 * (next() - 0.5),
                0.05 * (next() - 0.5),
                0.05 * (next() - 0.5),
            );
            let pose = Pose::exp(&twist);
            let (u, v) = (40.0 + 120.0 * next(), 40.0 + 120.0 * next());
            let d = 0.1 + 0.9 * next();
            if let Ok(p) = warp_point(u, v, d, &pose, &intr) {
                let q = warp_homogeneous_oracle(u, v, d, &pose, &intr);
                assert!((p - q).norm() < 1e-9, "warp {:?} vs oracle {:?}", p, q);
            }
        }
    }

    #[test]
    fn exp_log_round_trip() {
        let twist = Vec6::new(0.1, -0.2, 0.3, 0.02, -0.05, 0.04);
        let pose = Pose::exp(&twist);
        assert_relative_eq!(pose.log(), twist, epsilon = 1e-12);
        // Small-angle branch.
        let tiny = Vec6::new(1e-8, 2e-8, -1e-8, 1e-9, -2e-9, 1e-9);
        assert_relative_eq!(Pose::exp(&tiny).log(), tiny, epsilon = 1e-15);
    }

    #[test]
    fn calib_file_round_trip() {
        let intr = Intrinsics::new(718.856, 718.856, 607.19, 185.22, 0.54, 1241, 376).unwrap();
        let parsed = Intrinsics::from_calib_str(&intr.to_calib_string()).unwrap();
        assert_eq!(intr, parsed);
        assert!(Intrinsics::from_calib_str("1 2 3").is_err());
    }

    #[test]
    fn intrinsics_invariants_enforced() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0, 1.0, 10, 10).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 0.0, 0.0, -1.0, 10, 10).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 20.0, 0.0, 1.0, 10, 10).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 0.0, 0.0, 1.0, 1, 10).is_err());
    }

    proptest! {
        #[test]
        fn pose_group_axioms(
            t in proptest::array::uniform6(-0.5f64..0.5),
            s in proptest::array::uniform6(-0.5f64..0.5),
        ) {
            let a = Pose::exp(&Vec6::from_row_slice(&t));
            let b = Pose::exp(&Vec6::from_row_slice(&s));
            let ident = a.compose(&a.inverse());
            prop_assert!((ident.rotation_matrix() - Mat3::identity()).norm() <= 1e-9);
            prop_assert!(ident.translation().norm() <= 1e-9);
            // Associativity through a third element.
            let c = Pose::exp(&Vec6::new(0.1, 0.0, -0.1, 0.05, 0.0, -0.02));
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!((left.rotation_matrix() - right.rotation_matrix()).norm() <= 1e-9);
            prop_assert!((left.translation() - right.translation()).norm() <= 1e-9);
            prop_assert!(a.orthonormality_defect() <= 1e-9);
        }

        #[test]
        fn backproject_project_round_trip(
            u in 1.0f64..199.0,
            v in 1.0f64..199.0,
            d in 0.01f64..2.0,
        ) {
            let intr = super::Intrinsics::new(100.0, 100.0, 100.0, 100.0, 0.5, 200, 200).unwrap();
            let x = backproject(u, v, d, &intr).unwrap();
            let p = project(&x, &intr).unwrap();
            prop_assert!((p[0] - u).abs() < 1e-9 && (p[1] - v).abs() < 1e-9);
        }

        #[test]
        fn virtual_baseline_scaling_is_exact(disp in 0.0f64..100.0, s in 0.1f64..10.0) {
            let intr = super::Intrinsics::new(718.856, 718.856, 607.19, 185.22, 0.54, 1241, 376).unwrap();
            let scaled = intr.with_baseline_scale(s);
            let d0 = disparity_to_inverse_depth(disp, &intr).unwrap();
            let d1 = disparity_to_inverse_depth(disp, &scaled).unwrap();
            // Replacing b by s·b scales inverse depth by 1/s (up to rounding).
            prop_assert!((d1 - d0 / s).abs() <= 1e-15 * d0.abs() / s);
        }
    }
}
