//! Pose accuracy metrics and the training objectives evaluated on
//! predictions.
//!
//! ADD averages the distance between corresponding model points under the
//! predicted and ground-truth poses. ADD-S replaces the correspondence by the
//! closest ground-truth-posed point, which makes it invariant to object
//! symmetries. Accuracy curves integrate the fraction of instances whose
//! distance falls below a threshold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::kdtree::KdTree;
use crate::keypoints::ObjectModel;
use crate::scene::{Prediction, Scene};

/// Default upper threshold of the accuracy curve, meters.
pub const DEFAULT_AUC_THRESHOLD: f64 = 0.1;

/// Threshold of the `<2cm` accuracy statistic, meters.
pub const ACCURACY_THRESHOLD_2CM: f64 = 0.02;

/// Confidence floor applied inside [`focal_loss`].
pub const MIN_CONFIDENCE: f64 = 1e-12;

/// Evaluation of one ground-truth instance. Instances without an estimate
/// carry infinite distances.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub frame_id: u64,
    pub class_id: u32,
    pub instance_id: usize,
    pub add: f64,
    pub adds: f64,
    pub symmetric: bool,
    pub invisible_fraction: f64,
}

impl EvalRecord {
    /// ADD-S for symmetric objects, ADD otherwise.
    pub fn add_s(&self) -> f64 {
        if self.symmetric {
            self.adds
        } else {
            self.add
        }
    }

    pub fn is_estimated(&self) -> bool {
        self.add.is_finite()
    }
}

fn check_model(model: &ObjectModel) -> Result<()> {
    if model.points().is_empty() {
        return Err(Error::invalid("model has no points"));
    }
    Ok(())
}

pub fn add_distance(model: &ObjectModel, pred: &Pose, gt: &Pose) -> Result<f64> {
    check_model(model)?;
    let total: f64 = model
        .points()
        .iter()
        .map(|x| (pred.transform_point(x) - gt.transform_point(x)).norm())
        .sum();
    Ok(total / model.points().len() as f64)
}

pub fn adds_distance(model: &ObjectModel, pred: &Pose, gt: &Pose) -> Result<f64> {
    check_model(model)?;
    let target: Vec<Vec3> = model.points().iter().map(|x| gt.transform_point(x)).collect();
    let tree = KdTree::new(&target);
    let total: f64 = model
        .points()
        .iter()
        .map(|x| {
            let moved = pred.transform_point(x);
            let (nearest, _) = tree.nearest(&moved).expect("non-empty model");
            (moved - target[nearest]).norm()
        })
        .sum();
    Ok(total / model.points().len() as f64)
}

fn check_distances(distances: &[f64], threshold: f64) -> Result<()> {
    if distances.is_empty() {
        return Err(Error::invalid("no distances given"));
    }
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::invalid("threshold must be positive and finite"));
    }
    if distances.iter().any(|d| d.is_nan() || *d < 0.0) {
        return Err(Error::invalid("distances must be non-negative"));
    }
    Ok(())
}

/// Normalized area under the accuracy-threshold curve on `[0, max_threshold]`.
///
/// The empirical accuracy is a step function, so the integral is exact:
/// `(1/n) Σ max(0, 1 − d_i/T)`.
pub fn auc(distances: &[f64], max_threshold: f64) -> Result<f64> {
    check_distances(distances, max_threshold)?;
    let area: f64 = distances
        .iter()
        .map(|d| (1.0 - d / max_threshold).max(0.0))
        .sum();
    Ok((area / distances.len() as f64).clamp(0.0, 1.0))
}

/// Fraction of distances strictly below `threshold`.
pub fn accuracy_at(distances: &[f64], threshold: f64) -> Result<f64> {
    check_distances(distances, threshold)?;
    let hits = distances.iter().filter(|&&d| d < threshold).count();
    Ok(hits as f64 / distances.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyCurve {
    pub max_threshold: f64,
    pub auc: f64,
    /// Accuracy at named thresholds, keyed by the threshold in meters as
    /// written by `f64::to_string`.
    pub acc_at: BTreeMap<String, f64>,
    /// Sampled `(threshold, accuracy)` pairs for plotting.
    pub samples: Vec<(f64, f64)>,
}

impl AccuracyCurve {
    pub fn compute(distances: &[f64], max_threshold: f64, named: &[f64]) -> Result<Self> {
        let auc = auc(distances, max_threshold)?;
        let acc_at = named
            .iter()
            .map(|&t| Ok((t.to_string(), accuracy_at(distances, t)?)))
            .collect::<Result<_>>()?;
        let steps = 100;
        let samples = (1..=steps)
            .map(|k| {
                let t = max_threshold * k as f64 / steps as f64;
                Ok((t, accuracy_at(distances, t)?))
            })
            .collect::<Result<_>>()?;
        Ok(AccuracyCurve {
            max_threshold,
            auc,
            acc_at,
            samples,
        })
    }
}

/// Norm applied to each offset error vector in the offset losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetNorm {
    #[default]
    Euclidean,
    /// Sum of absolute components.
    ComponentL1,
}

impl OffsetNorm {
    fn apply(self, v: &Vec3) -> f64 {
        match self {
            OffsetNorm::Euclidean => v.norm(),
            OffsetNorm::ComponentL1 => v.abs().sum(),
        }
    }
}

fn member_count(membership: &[bool]) -> Result<usize> {
    match membership.iter().filter(|&&m| m).count() {
        0 => Err(Error::invalid("no member points")),
        n => Ok(n),
    }
}

/// Keypoint offset loss: the summed offset error norms of member points,
/// divided by the number of member points. `gt_offsets` is point-major with
/// `pred.num_keypoints()` entries per point.
pub fn keypoint_offset_loss(
    pred: &Prediction,
    gt_offsets: &[Vec3],
    membership: &[bool],
    norm: OffsetNorm,
) -> Result<f64> {
    let m = pred.num_keypoints();
    if gt_offsets.len() != pred.len() * m || membership.len() != pred.len() {
        return Err(Error::invalid("loss inputs disagree in shape"));
    }
    let members = member_count(membership)?;
    let total: f64 = (0..pred.len())
        .filter(|&i| membership[i])
        .flat_map(|i| {
            pred.kp_offsets(i)
                .iter()
                .zip(&gt_offsets[i * m..(i + 1) * m])
                .map(move |(p, g)| norm.apply(&(p - g)))
        })
        .sum();
    Ok(total / members as f64)
}

/// Center offset loss, normalized like [`keypoint_offset_loss`].
pub fn center_offset_loss(
    pred: &Prediction,
    gt_center_offsets: &[Vec3],
    membership: &[bool],
    norm: OffsetNorm,
) -> Result<f64> {
    if gt_center_offsets.len() != pred.len() || membership.len() != pred.len() {
        return Err(Error::invalid("loss inputs disagree in shape"));
    }
    let members = member_count(membership)?;
    let total: f64 = (0..pred.len())
        .filter(|&i| membership[i])
        .map(|i| norm.apply(&(pred.center_offset(i) - gt_center_offsets[i])))
        .sum();
    Ok(total / members as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalLoss {
    pub value: f64,
    /// Points whose true-class confidence was raised to [`MIN_CONFIDENCE`].
    pub clamped: usize,
}

/// Mean of `−α (1 − q)^γ log q` over points, `q` being the confidence of the
/// true class.
pub fn focal_loss(pred: &Prediction, gt_labels: &[u32], alpha: f64, gamma: f64) -> Result<FocalLoss> {
    if gt_labels.len() != pred.len() {
        return Err(Error::invalid("one label per point required"));
    }
    if pred.is_empty() {
        return Err(Error::invalid("no points"));
    }
    let mut clamped = 0;
    let mut total = 0.0;
    for (i, &label) in gt_labels.iter().enumerate() {
        let q = *pred
            .scores(i)
            .get(label as usize)
            .ok_or_else(|| Error::invalid(format!("label {label} outside the class range")))?;
        let q = if q < MIN_CONFIDENCE {
            clamped += 1;
            MIN_CONFIDENCE
        } else {
            q
        };
        total += -alpha * (1.0 - q).powf(gamma) * q.ln();
    }
    Ok(FocalLoss {
        value: total / pred.len() as f64,
        clamped,
    })
}

/// Weighted sum of the segmentation, center and keypoint losses.
pub fn multi_task_loss(l_sem: f64, l_center: f64, l_kp: f64, weights: [f64; 3]) -> f64 {
    weights[0] * l_sem + weights[1] * l_center + weights[2] * l_kp
}

/// Share of an instance's surface samples missing from the scene.
pub fn invisible_fraction(scene: &Scene, instance_id: usize, model: &ObjectModel) -> Result<f64> {
    let instance = scene
        .instances
        .get(instance_id)
        .ok_or_else(|| Error::invalid(format!("scene has no instance {instance_id}")))?;
    let expected = match instance.expected_points {
        0 => model.points().len(),
        n => n,
    };
    let visible = scene
        .gt_instance
        .iter()
        .filter(|&&inst| inst == instance_id as i64)
        .count();
    Ok((1.0 - visible as f64 / expected as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_pose, Pose};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn cloud(seed: u64, n: usize) -> ObjectModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ObjectModel::new(
            1,
            (0..n)
                .map(|_| Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1)))
                .collect(),
        )
        .unwrap()
    }

    fn brute_adds(model: &ObjectModel, pred: &Pose, gt: &Pose) -> f64 {
        let target: Vec<Vec3> = model.points().iter().map(|x| gt.transform_point(x)).collect();
        let total: f64 = model
            .points()
            .iter()
            .map(|x| {
                let moved = pred.transform_point(x);
                let mut best = (0, f64::INFINITY);
                for (i, t) in target.iter().enumerate() {
                    let d = (moved - t).norm_squared();
                    if d < best.1 {
                        best = (i, d);
                    }
                }
                (moved - target[best.0]).norm()
            })
            .sum();
        total / model.points().len() as f64
    }

    #[test]
    fn add_cases() {
        let model = cloud(1, 100);
        let gt = random_pose(1);
        assert_eq!(add_distance(&model, &gt, &gt).unwrap(), 0.0);
        let shifted = Pose::from_translation(Vec3::new(0.01, 0.0, 0.0)).compose(&gt);
        assert!((add_distance(&model, &shifted, &gt).unwrap() - 0.01).abs() < 1e-15);

        let pred = random_pose(2);
        let mut oracle = 0.0;
        for x in model.points() {
            let a = pred.rotation() * x + pred.translation();
            let b = gt.rotation() * x + gt.translation();
            oracle += ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt();
        }
        oracle /= 100.0;
        assert!((add_distance(&model, &pred, &gt).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn adds_cases() {
        let model = cloud(3, 50);
        let gt = random_pose(3);
        assert_eq!(adds_distance(&model, &gt, &gt).unwrap(), 0.0);

        let square = ObjectModel::new(
            1,
            vec![
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(-1.0, 0.0, 0.0),
                Vec3::new(0.0, -1.0, 0.0),
            ],
        )
        .unwrap();
        let quarter = Pose::from_axis_angle(&Vec3::z(), FRAC_PI_2, Vec3::zeros()).unwrap();
        let pred = gt.compose(&quarter);
        assert!(adds_distance(&square, &pred, &gt).unwrap() < 1e-12);
        assert!(add_distance(&square, &pred, &gt).unwrap() > 1.0);
    }

    #[test]
    fn adds_matches_brute_force_exactly() {
        for seed in 0..20 {
            let model = cloud(seed, 50 + 20 * seed as usize);
            let (pred, gt) = (random_pose(seed * 2), random_pose(seed * 2 + 1));
            assert_eq!(
                adds_distance(&model, &pred, &gt).unwrap(),
                brute_adds(&model, &pred, &gt)
            );
        }
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[0.0; 5], 0.1).unwrap(), 1.0);
        assert_eq!(auc(&[0.2, 0.5, f64::INFINITY], 0.1).unwrap(), 0.0);
        assert!(auc(&[], 0.1).is_err());
        assert!(auc(&[0.1], 0.0).is_err());
        assert!(auc(&[-0.1], 0.1).is_err());

        // Midpoint rule on a fine grid, independent of the closed form.
        let ds = [0.01, 0.03, 0.05, 0.07, 0.09, 0.11];
        let grid = 100_000;
        let t = 0.1;
        let mut area = 0.0;
        for k in 0..grid {
            let thr = (k as f64 + 0.5) * t / grid as f64;
            area += ds.iter().filter(|&&d| d < thr).count() as f64 / ds.len() as f64;
        }
        area /= grid as f64;
        assert!((auc(&ds, t).unwrap() - area).abs() < 1e-4);
        assert!((auc(&ds, t).unwrap() - 0.25 / 0.6).abs() < 1e-12);
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy_at(&[0.0; 4], 0.02).unwrap(), 1.0);
        assert_eq!(accuracy_at(&[0.01, 0.03], 0.02).unwrap(), 0.5);
        assert_eq!(accuracy_at(&[0.02], 0.02).unwrap(), 0.0);
        assert!(accuracy_at(&[], 0.02).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ds: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..0.05)).collect();
        let mut count = 0;
        for d in &ds {
            if *d < 0.02 {
                count += 1;
            }
        }
        assert_eq!(accuracy_at(&ds, 0.02).unwrap(), count as f64 / 500.0);
    }

    #[test]
    fn curve_summary() {
        let curve = AccuracyCurve::compute(&[0.0, 0.05], 0.1, &[0.02]).unwrap();
        assert_eq!(curve.acc_at["0.02"], 0.5);
        assert_eq!(curve.samples.len(), 100);
        assert!((curve.auc - 0.75).abs() < 1e-15);
    }

    fn single_point_prediction(kp: Vec<Vec3>, center: Vec3) -> Prediction {
        Prediction::new(kp.len(), 2, kp, vec![center], vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn offset_losses() {
        let pred = single_point_prediction(vec![Vec3::new(0.003, 0.004, 0.0)], Vec3::new(0.001, 0.0, 0.0));
        let loss = keypoint_offset_loss(&pred, &[Vec3::zeros()], &[true], OffsetNorm::Euclidean).unwrap();
        assert!((loss - 0.005).abs() < 1e-12);
        let l1 = keypoint_offset_loss(&pred, &[Vec3::zeros()], &[true], OffsetNorm::ComponentL1).unwrap();
        assert!((l1 - 0.007).abs() < 1e-12);
        let center = center_offset_loss(&pred, &[Vec3::zeros()], &[true], OffsetNorm::Euclidean).unwrap();
        assert!((center - 0.001).abs() < 1e-12);
        assert_eq!(
            keypoint_offset_loss(&pred, &[Vec3::new(0.003, 0.004, 0.0)], &[true], OffsetNorm::Euclidean).unwrap(),
            0.0
        );
        assert!(keypoint_offset_loss(&pred, &[Vec3::zeros()], &[false], OffsetNorm::Euclidean).is_err());
    }

    #[test]
    fn losses_mask_non_members_and_scale_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 20;
        let gt: Vec<Vec3> = (0..n * 2).map(|_| Vec3::from_fn(|_, _| rng.random())).collect();
        let err: Vec<Vec3> = (0..n * 2).map(|_| Vec3::from_fn(|_, _| rng.random::<f64>() - 0.5)).collect();
        let build = |scale: f64, junk: bool| {
            let kp: Vec<Vec3> = gt
                .iter()
                .zip(&err)
                .enumerate()
                .map(|(k, (g, e))| if junk && k / 2 != 7 { Vec3::repeat(9.0) } else { g + e * scale })
                .collect();
            Prediction::new(2, 1, kp, vec![Vec3::zeros(); n], vec![1.0; n]).unwrap()
        };
        let mut only_seven = vec![false; n];
        only_seven[7] = true;
        let a = keypoint_offset_loss(&build(1.0, false), &gt, &only_seven, OffsetNorm::Euclidean).unwrap();
        let b = keypoint_offset_loss(&build(1.0, true), &gt, &only_seven, OffsetNorm::Euclidean).unwrap();
        assert_eq!(a, b);

        let all = vec![true; n];
        let one = keypoint_offset_loss(&build(1.0, false), &gt, &all, OffsetNorm::Euclidean).unwrap();
        let two = keypoint_offset_loss(&build(2.0, false), &gt, &all, OffsetNorm::Euclidean).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-12);
        assert!(one > 0.0);
    }

    #[test]
    fn focal_loss_cases() {
        let perfect = Prediction::new(1, 2, vec![Vec3::zeros()], vec![Vec3::zeros()], vec![0.0, 1.0]).unwrap();
        assert_eq!(focal_loss(&perfect, &[1], 0.25, 2.0).unwrap().value, 0.0);

        let half = Prediction::new(1, 2, vec![Vec3::zeros()], vec![Vec3::zeros()], vec![0.5, 0.5]).unwrap();
        let ce = focal_loss(&half, &[1], 1.0, 0.0).unwrap();
        assert!((ce.value - 2f64.ln()).abs() < 1e-12);
        assert!(focal_loss(&half, &[1], 1.0, 2.0).unwrap().value < ce.value);

        let wrong = focal_loss(&perfect, &[0], 1.0, 0.0).unwrap();
        assert_eq!(wrong.clamped, 1);
        assert!(wrong.value.is_finite());
        assert!(focal_loss(&perfect, &[5], 1.0, 0.0).is_err());
    }

    #[test]
    fn multi_task_weights() {
        assert_eq!(multi_task_loss(0.0, 0.0, 0.0, [1.0; 3]), 0.0);
        assert_eq!(multi_task_loss(1.0, 2.0, 3.0, [1.0; 3]), 6.0);
        assert_eq!(multi_task_loss(1.0, 2.0, 3.0, [0.0; 3]), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn adds_never_exceeds_add(seed in 0u64..1_000_000) {
            let model = cloud(seed, 40);
            let (pred, gt) = (random_pose(seed), random_pose(seed ^ 0xdead_beef));
            let add = add_distance(&model, &pred, &gt).unwrap();
            let adds = adds_distance(&model, &pred, &gt).unwrap();
            proptest::prop_assert!(adds <= add + 1e-12);
        }

        #[test]
        fn auc_and_accuracy_are_monotone(ds in proptest::collection::vec(0.0f64..0.2, 1..40), t1 in 0.001f64..0.2, t2 in 0.001f64..0.2) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let (a_lo, a_hi) = (auc(&ds, lo).unwrap(), auc(&ds, hi).unwrap());
            proptest::prop_assert!(a_lo <= a_hi + 1e-12);
            proptest::prop_assert!((0.0..=1.0).contains(&a_lo));
            proptest::prop_assert!(accuracy_at(&ds, lo).unwrap() <= accuracy_at(&ds, hi).unwrap());
        }
    }
}
