//! Closed-form rigid fit between camera-frame and object-frame keypoints.
//!
//! Minimizes `Σ w_i ‖kp_i − (R·kp'_i + t)‖²` over proper rotations and
//! translations with the SVD of the 3x3 cross-covariance of the centered
//! point sets. A sign correction on the weakest singular direction keeps the
//! result a rotation even when the best orthogonal fit would be a reflection.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};

/// Singular values of the cross-covariance below this fraction of the
/// largest are treated as zero.
const DEGENERACY_RATIO: f64 = 1e-12;

/// Matched keypoints: `camera[i]` is the observation of `object[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondences {
    camera: Vec<Vec3>,
    object: Vec<Vec3>,
}

impl Correspondences {
    pub fn new(camera: Vec<Vec3>, object: Vec<Vec3>) -> Result<Self> {
        if camera.len() != object.len() {
            return Err(Error::invalid(format!(
                "{} camera keypoints but {} object keypoints",
                camera.len(),
                object.len()
            )));
        }
        if camera.len() < 3 {
            return Err(Error::InsufficientCorrespondences(camera.len()));
        }
        Ok(Correspondences { camera, object })
    }

    pub fn camera(&self) -> &[Vec3] {
        &self.camera
    }

    pub fn object(&self) -> &[Vec3] {
        &self.object
    }

    pub fn len(&self) -> usize {
        self.camera.len()
    }

    pub fn is_empty(&self) -> bool {
        self.camera.is_empty()
    }
}

/// Unweighted least-squares rigid fit.
pub fn least_squares_fit(c: &Correspondences) -> Result<Pose> {
    fit(c, None)
}

/// Weighted variant, e.g. with vote support as weights. Weights must be
/// finite, non-negative and not all zero.
pub fn least_squares_fit_weighted(c: &Correspondences, weights: &[f64]) -> Result<Pose> {
    if weights.len() != c.len() {
        return Err(Error::invalid("one weight per correspondence required"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::invalid("weights sum to zero"));
    }
    fit(c, Some(weights))
}

fn fit(c: &Correspondences, weights: Option<&[f64]>) -> Result<Pose> {
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..c.len()).map(weight).sum();

    let mean = |pts: &[Vec3]| {
        pts.iter()
            .enumerate()
            .fold(Vec3::zeros(), |acc, (i, p)| acc + p * weight(i))
            / total
    };
    let cam_mean = mean(&c.camera);
    let obj_mean = mean(&c.object);

    let mut cov = Matrix3::zeros();
    for (i, (cam, obj)) in c.camera.iter().zip(&c.object).enumerate() {
        cov += weight(i) * (obj - obj_mean) * (cam - cam_mean).transpose();
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration),
    };
    let sv = svd.singular_values;

    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let largest = sv[order[0]];
    if !(largest > 0.0) || sv[order[1]] < DEGENERACY_RATIO * largest {
        return Err(Error::DegenerateConfiguration);
    }

    let v = v_t.transpose();
    let mut correction = Vec3::repeat(1.0);
    correction[order[2]] = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&correction) * u.transpose();
    let translation = cam_mean - rotation * obj_mean;
    Pose::new(rotation, translation)
}

/// Sum of squared distances between the camera keypoints and the posed
/// object keypoints.
pub fn fit_residual(camera: &[Vec3], object: &[Vec3], pose: &Pose) -> Result<f64> {
    if camera.len() != object.len() {
        return Err(Error::invalid("keypoint lists differ in length"));
    }
    Ok(camera
        .iter()
        .zip(object)
        .map(|(kp, obj)| (kp - pose.transform_point(obj)).norm_squared())
        .sum())
}
