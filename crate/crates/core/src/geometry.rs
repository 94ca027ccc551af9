//! Rigid-body primitives shared by every stage of the pipeline.
//!
//! Rotations are stored as 3x3 matrices and applied rotation-first:
//! `transform_point(pose, p) = R * p + t`. Whenever a pose is written as
//! text it uses 12 whitespace-separated decimals, the rotation in row-major
//! order followed by the translation.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A point or displacement in meters.
pub type Vec3 = Vector3<f64>;

/// Tolerance used when validating the rotation part of a [`Pose`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Frobenius drift from orthonormality above which [`compose`] re-projects
/// the product onto SO(3).
const REORTHONORMALIZE_DRIFT: f64 = 1e-12;

/// Default half-extent of the box random translations are drawn from.
pub const DEFAULT_TRANSLATION_HALF_EXTENT: f64 = 1.0;

/// A rigid transform mapping object-frame points into the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a pose, checking that `rotation` is orthonormal with
    /// determinant +1 and that every entry is finite.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::invalid("pose contains non-finite values"));
        }
        let drift = orthonormal_drift(&rotation);
        if drift > ROTATION_TOLERANCE {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal (drift {drift:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::invalid(format!("rotation determinant is {det}")));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    /// Callers guarantee `rotation` is a proper rotation.
    pub(crate) fn from_parts(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        debug_assert!(orthonormal_drift(&rotation) < 1e-6);
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` radians about the (normalized) `axis`.
    pub fn from_axis_angle(axis: &Vec3, angle: f64, translation: Vec3) -> Result<Self> {
        let unit = nalgebra::Unit::try_new(*axis, 1e-15)
            .ok_or_else(|| Error::invalid("rotation axis has zero length"))?;
        let rotation = *nalgebra::Rotation3::from_axis_angle(&unit, angle).matrix();
        Pose::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Returns the pose that applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut rotation = self.rotation * other.rotation;
        if orthonormal_drift(&rotation) > REORTHONORMALIZE_DRIFT {
            rotation = project_to_rotation(&rotation);
        }
        Pose {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.transpose();
        Pose {
            rotation,
            translation: -(rotation * self.translation),
        }
    }

    /// Geodesic angle in radians between the rotations of two poses.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        rotation_angle(&(self.rotation.transpose() * other.rotation))
    }

    pub fn translation_distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// 9 rotation entries (row-major) followed by the 3 translation entries.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z,
        ]
    }

    pub fn from_row_major(values: &[f64; 12]) -> Result<Self> {
        let rotation = Matrix3::from_row_slice(&values[..9]);
        Pose::new(rotation, Vec3::new(values[9], values[10], values[11]))
    }

    /// Text form: 12 whitespace-separated shortest round-trip decimals.
    pub fn to_text(&self) -> String {
        self.to_row_major()
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let values = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad pose value {tok:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let values: [f64; 12] = values.try_into().map_err(|v: Vec<f64>| {
            Error::invalid(format!("pose needs 12 values, found {}", v.len()))
        })?;
        Pose::from_row_major(&values)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

pub fn transform_point(pose: &Pose, p: &Vec3) -> Vec3 {
    pose.transform_point(p)
}

/// `compose(a, b)` applies `b` first, then `a`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn invert(pose: &Pose) -> Pose {
    pose.inverse()
}

/// Uniformly distributed rotation with a translation uniform in `[-1, 1]^3`.
pub fn random_pose(seed: u64) -> Pose {
    random_pose_in(seed, DEFAULT_TRANSLATION_HALF_EXTENT)
}

/// Uniformly distributed rotation with a translation uniform in
/// `[-half_extent, half_extent]^3`.
pub fn random_pose_in(seed: u64, half_extent: f64) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_pose_with(&mut rng, half_extent)
}

pub fn random_pose_with<R: Rng + ?Sized>(rng: &mut R, half_extent: f64) -> Pose {
    let rotation = random_rotation(rng);
    let translation = Vec3::from_fn(|_, _| rng.random_range(-1.0..=1.0) * half_extent);
    Pose::from_parts(rotation, translation)
}

/// Haar-uniform rotation from Shoemake's unit-quaternion construction.
pub(crate) fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    use std::f64::consts::TAU;
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = Quaternion::new(
        b * (TAU * u3).cos(),
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
    );
    *UnitQuaternion::from_quaternion(q)
        .to_rotation_matrix()
        .matrix()
}

/// Rotation angle in `[0, pi]` of a rotation matrix.
pub fn rotation_angle(rotation: &Matrix3<f64>) -> f64 {
    let cos = ((rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    // acos loses precision near 0 and pi; recover the small-angle case from
    // the skew-symmetric part.
    if cos > 0.9 {
        let skew = Vec3::new(
            rotation[(2, 1)] - rotation[(1, 2)],
            rotation[(0, 2)] - rotation[(2, 0)],
            rotation[(1, 0)] - rotation[(0, 1)],
        );
        (skew.norm() / 2.0).clamp(0.0, 1.0).asin()
    } else {
        cos.acos()
    }
}

/// Frobenius norm of `RᵀR - I`.
pub fn orthonormal_drift(rotation: &Matrix3<f64>) -> f64 {
    (rotation.transpose() * rotation - Matrix3::identity()).norm()
}

/// Nearest rotation matrix (polar factor `U Vᵀ`, sign-corrected).
pub(crate) fn project_to_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t
}

pub fn centroid(points: &[Vec3]) -> Option<Vec3> {
    if points.is_empty() {
        return None;
    }
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
    Some(sum / points.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn assert_vec_close(a: Vec3, b: Vec3, tol: f64) {
        assert!((a - b).norm() <= tol, "{a:?} != {b:?}");
    }

    fn rz90(t: Vec3) -> Pose {
        Pose::from_axis_angle(&Vec3::z(), FRAC_PI_2, t).unwrap()
    }

    fn assert_pose_close(a: &Pose, b: &Pose, tol: f64) {
        let diff = a
            .to_row_major()
            .iter()
            .zip(b.to_row_major())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff <= tol, "poses differ by {diff:e}");
    }

    #[test]
    fn transform_identity_and_rotations() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(Pose::identity().transform_point(&p), p);
        assert_vec_close(
            rz90(Vec3::zeros()).transform_point(&Vec3::x()),
            Vec3::y(),
            1e-15
        );
        assert_vec_close(
            rz90(Vec3::new(1.0, 2.0, 3.0)).transform_point(&Vec3::x()),
            Vec3::new(1.0, 3.0, 3.0),
            1e-15
        );
    }

    #[test]
    fn compose_cases() {
        let p = random_pose(7);
        assert_pose_close(&compose(&Pose::identity(), &p), &p, 0.0);
        assert_pose_close(&compose(&p, &invert(&p)), &Pose::identity(), 1e-9);

        let half_turn = compose(&rz90(Vec3::zeros()), &rz90(Vec3::zeros()));
        let expected = Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        assert!((half_turn.rotation() - expected).norm() < 1e-15);
        assert!((half_turn.rotation_angle_to(&Pose::identity()) - PI).abs() < 1e-12);
    }

    #[test]
    fn compose_applies_right_operand_first() {
        let a = Pose::from_translation(Vec3::x());
        let b = rz90(Vec3::zeros());
        // b rotates x onto y, then a shifts along x.
        assert_vec_close(
            compose(&a, &b).transform_point(&Vec3::x()),
            Vec3::new(1.0, 1.0, 0.0),
            1e-15
        );
    }

    #[test]
    fn invert_cases() {
        assert_eq!(invert(&Pose::identity()), Pose::identity());
        let t = Vec3::new(0.3, -2.0, 5.0);
        assert_eq!(invert(&Pose::from_translation(t)).translation(), &-t);
        for seed in 0..50 {
            let p = random_pose(seed);
            let x = Vec3::new(0.1, -0.4, 2.0);
            assert_vec_close(invert(&p).transform_point(&p.transform_point(&x)), x, 1e-9);
        }
    }

    #[test]
    fn random_pose_is_deterministic_and_valid() {
        assert_eq!(random_pose(42).to_row_major(), random_pose(42).to_row_major());
        assert_ne!(random_pose(42), random_pose(43));
        for seed in 0..1000 {
            let p = random_pose(seed);
            assert!(orthonormal_drift(p.rotation()) < 1e-9);
            assert!((p.rotation().determinant() - 1.0).abs() < 1e-9);
            assert!(p.translation().iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn random_rotation_mean_angle_matches_haar_measure() {
        // Oracle: Haar angle density (1 - cos θ)/π on [0, π], integrated by
        // composite Simpson.
        let n = 20_000;
        let h = PI / n as f64;
        let f = |t: f64| t * (1.0 - t.cos()) / PI;
        let mut integral = f(0.0) + f(PI);
        for i in 1..n {
            integral += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        integral *= h / 3.0;
        assert!((integral - 2.2074).abs() < 1e-4);

        let samples = 10_000;
        let mean = (0..samples)
            .map(|s| rotation_angle(random_pose(s).rotation()))
            .sum::<f64>()
            / samples as f64;
        assert!((mean - integral).abs() < 0.05, "mean angle {mean}");
    }

    #[test]
    fn long_chains_stay_on_so3() {
        let mut acc = Pose::identity();
        for seed in 0..100 {
            let p = random_pose(seed);
            acc = if seed % 3 == 0 {
                compose(&acc, &invert(&p))
            } else {
                compose(&p, &acc)
            };
            assert!(orthonormal_drift(acc.rotation()) < 1e-9);
            assert!((acc.rotation().determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_invalid_rotations() {
        let reflect = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(reflect, Vec3::zeros()).is_err());
        assert!(Pose::new(Matrix3::identity() * 1.01, Vec3::zeros()).is_err());
        assert!(Pose::new(Matrix3::identity(), Vec3::new(f64::NAN, 0.0, 0.0)).is_err());
    }

    #[test]
    fn text_form_round_trips_bitwise() {
        for seed in 0..100 {
            let p = random_pose(seed);
            let back = Pose::parse_text(&p.to_text()).unwrap();
            assert_eq!(p.to_row_major(), back.to_row_major());
        }
        assert!(Pose::parse_text("1 0 0 0 1 0 0 0 1 0 0").is_err());
        assert!(Pose::parse_text("1 0 0 0 1 0 0 0 1 0 0 x").is_err());
    }

    #[test]
    fn small_angles_are_accurate() {
        let p = Pose::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 1e-9, Vec3::zeros()).unwrap();
        assert!((rotation_angle(p.rotation()) - 1e-9).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn transform_is_an_isometry(seed in 0u64..10_000, x in proptest::array::uniform3(-5.0f64..5.0), y in proptest::array::uniform3(-5.0f64..5.0)) {
            let p = random_pose(seed);
            let (x, y) = (Vec3::from(x), Vec3::from(y));
            let d = (p.transform_point(&x) - p.transform_point(&y)).norm();
            proptest::prop_assert!((d - (x - y).norm()).abs() < 1e-9);
        }

        #[test]
        fn compose_is_associative(a in 0u64..10_000, b in 0u64..10_000, c in 0u64..10_000) {
            let (a, b, c) = (random_pose(a), random_pose(b), random_pose(c));
            let left = compose(&compose(&a, &b), &c).to_row_major();
            let right = compose(&a, &compose(&b, &c)).to_row_major();
            for (l, r) in left.iter().zip(right) {
                proptest::prop_assert!((l - r).abs() < 1e-9);
            }
        }
    }
}
