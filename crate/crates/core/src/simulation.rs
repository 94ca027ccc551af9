//! Synthetic scenes, an oracle offset predictor, and the end-to-end pipeline
//! driven by them.
//!
//! The oracle emits ground-truth offsets corrupted by a configurable noise
//! model. Every random draw comes from a stream derived from
//! `(seed, frame_id, instance, purpose)`, so results do not depend on how
//! work is scheduled across threads.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{random_pose_with, random_rotation, Pose, Vec3, DEFAULT_TRANSLATION_HALF_EXTENT};
use crate::keypoints::KeypointMethod;
use crate::metrics::{accuracy_at, add_distance, adds_distance, invisible_fraction, EvalRecord, ACCURACY_THRESHOLD_2CM};
use crate::model_io::{ModelRegistry, PoseRecord};
use crate::pose_fit::{least_squares_fit, least_squares_fit_weighted, Correspondences};
use crate::scene::{Prediction, Scene, SceneInstance, BACKGROUND_CLASS, BACKGROUND_INSTANCE};
use crate::voting::{aggregate_keypoints, segment_instances, InstanceCluster, KeypointEstimate, VotingConfig};

const STREAM_POSE: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_OCCLUDE: u64 = 3;
const STREAM_BACKGROUND: u64 = 4;
const STREAM_PREDICT: u64 = 5;

/// Instance slot used for streams that belong to the whole frame.
const FRAME_STREAM: u64 = u64::MAX;

/// Score given to the peak class of every oracle prediction.
pub const PEAK_SCORE: f64 = 0.99;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the random stream for one `(frame, instance, purpose)` task.
pub fn stream_seed(seed: u64, frame_id: u64, instance: u64, purpose: u64) -> u64 {
    [frame_id, instance, purpose]
        .into_iter()
        .fold(splitmix(seed), |h, v| splitmix(h ^ v))
}

fn stream(seed: u64, frame_id: u64, instance: u64, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, frame_id, instance, purpose))
}

// ---------------------------------------------------------------------------
// Configuration

/// Corruption applied by [`oracle_predict`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation (meters) of the isotropic Gaussian added to every
    /// offset.
    pub offset_sigma: f64,
    /// Probability that a vote target is replaced by a uniform point in the
    /// scene bounding box.
    pub outlier_rate: f64,
    /// Probability that a point's score peak moves to a wrong class.
    pub label_error_rate: f64,
    /// Scale the noise of each vote by `1 + |gt offset| / diameter`, so votes
    /// for distant targets are less precise.
    pub distance_scaled: bool,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64) -> Self {
        NoiseSpec {
            offset_sigma: sigma,
            ..NoiseSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.offset_sigma >= 0.0 && self.offset_sigma.is_finite()) {
            return Err(Error::invalid(format!("offset_sigma must be >= 0, got {}", self.offset_sigma)));
        }
        for (name, rate) in [("outlier_rate", self.outlier_rate), ("label_error_rate", self.label_error_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {rate}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionMode {
    /// Drop a uniformly random subset of the instance's points.
    #[default]
    RandomDrop,
    /// Drop the points beyond a random plane, positioned so the requested
    /// fraction disappears.
    HalfSpaceCut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub class_id: u32,
    /// Fixed pose as 12 row-major numbers; drawn at random when absent.
    #[serde(default, with = "pose_text", skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub frame_id: u64,
    pub instances: Vec<InstanceSpec>,
    pub points_per_instance: usize,
    #[serde(default)]
    pub occlusion_fraction: f64,
    #[serde(default)]
    pub occlusion_mode: OcclusionMode,
    #[serde(default)]
    pub rng_seed: u64,
    /// Uniform clutter points added around the instances.
    #[serde(default)]
    pub background_points: usize,
    /// Minimum distance between randomly drawn instance translations.
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
    /// Random translations are drawn from `[-h, h]^3`.
    #[serde(default = "default_half_extent")]
    pub translation_half_extent: f64,
}

fn default_min_separation() -> f64 {
    0.3
}

fn default_half_extent() -> f64 {
    DEFAULT_TRANSLATION_HALF_EXTENT
}

impl SceneSpec {
    /// Randomly posed instances of the given classes with default settings.
    pub fn new(classes: &[u32], points_per_instance: usize, rng_seed: u64) -> Self {
        SceneSpec {
            frame_id: 0,
            instances: classes
                .iter()
                .map(|&class_id| InstanceSpec { class_id, pose: None })
                .collect(),
            points_per_instance,
            occlusion_fraction: 0.0,
            occlusion_mode: OcclusionMode::RandomDrop,
            rng_seed,
            background_points: 0,
            min_separation: default_min_separation(),
            translation_half_extent: default_half_extent(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points_per_instance == 0 {
            return Err(Error::invalid("points_per_instance must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.occlusion_fraction) {
            return Err(Error::invalid(format!(
                "occlusion_fraction must lie in [0, 1), got {}",
                self.occlusion_fraction
            )));
        }
        if !(self.min_separation >= 0.0 && self.min_separation.is_finite()) {
            return Err(Error::invalid("min_separation must be a finite value >= 0"));
        }
        if !(self.translation_half_extent >= 0.0 && self.translation_half_extent.is_finite()) {
            return Err(Error::invalid("translation_half_extent must be a finite value >= 0"));
        }
        if self.instances.iter().any(|i| i.class_id == BACKGROUND_CLASS) {
            return Err(Error::invalid("instances cannot use the background class 0"));
        }
        Ok(())
    }
}

mod pose_text {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::geometry::Pose;

    pub fn serialize<S: Serializer>(pose: &Option<Pose>, s: S) -> Result<S::Ok, S::Error> {
        match pose {
            Some(p) => s.serialize_str(&p.to_text()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Pose>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|text| Pose::parse_text(&text).map_err(serde::de::Error::custom))
            .transpose()
    }
}

// ---------------------------------------------------------------------------
// Scene generation

fn instance_poses(spec: &SceneSpec) -> Result<Vec<Pose>> {
    const MAX_ATTEMPTS: usize = 10_000;
    let mut poses: Vec<Pose> = Vec::with_capacity(spec.instances.len());
    for (k, inst) in spec.instances.iter().enumerate() {
        if let Some(pose) = inst.pose {
            poses.push(pose);
            continue;
        }
        let mut rng = stream(spec.rng_seed, spec.frame_id, k as u64, STREAM_POSE);
        let pose = (0..MAX_ATTEMPTS)
            .map(|_| random_pose_with(&mut rng, spec.translation_half_extent))
            .find(|p| {
                poses
                    .iter()
                    .all(|q| p.translation_distance_to(q) >= spec.min_separation)
            })
            .ok_or_else(|| {
                Error::invalid(format!(
                    "could not place instance {k} at least {} m from the others",
                    spec.min_separation
                ))
            })?;
        poses.push(pose);
    }
    Ok(poses)
}

fn occlude(points: &mut Vec<Vec3>, fraction: f64, mode: OcclusionMode, rng: &mut ChaCha8Rng) {
    let n = points.len();
    let remove = (fraction * n as f64).floor() as usize;
    let mut drop = vec![false; n];
    match mode {
        OcclusionMode::RandomDrop => {
            for i in index::sample(rng, n, remove) {
                drop[i] = true;
            }
        }
        OcclusionMode::HalfSpaceCut => {
            let normal = random_rotation(rng).column(2).into_owned();
            let mut order: Vec<(f64, usize)> = points.iter().map(|p| (p.dot(&normal), 0)).collect();
            for (i, entry) in order.iter_mut().enumerate() {
                entry.1 = i;
            }
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, i) in &order[..remove] {
                drop[i] = true;
            }
        }
    }
    let mut i = 0;
    points.retain(|_| {
        i += 1;
        !drop[i - 1]
    });
}

/// Samples, poses and occludes every instance of `spec`.
///
/// Instance points come first, in instance order, followed by background
/// clutter drawn uniformly in the instances' bounding box grown by 5 cm.
pub fn generate_scene(spec: &SceneSpec, registry: &ModelRegistry) -> Result<Scene> {
    spec.validate()?;
    for inst in &spec.instances {
        registry.get(inst.class_id)?;
    }
    let poses = instance_poses(spec)?;

    let mut scene = Scene {
        frame_id: spec.frame_id,
        ..Scene::default()
    };
    for (k, (inst, pose)) in spec.instances.iter().zip(&poses).enumerate() {
        let model = &registry.get(inst.class_id)?.model;
        let source = model.points();
        let mut sample_rng = stream(spec.rng_seed, spec.frame_id, k as u64, STREAM_SAMPLE);
        let mut points: Vec<Vec3> = (0..spec.points_per_instance)
            .map(|_| pose.transform_point(&source[sample_rng.random_range(0..source.len())]))
            .collect();
        let mut occlude_rng = stream(spec.rng_seed, spec.frame_id, k as u64, STREAM_OCCLUDE);
        occlude(&mut points, spec.occlusion_fraction, spec.occlusion_mode, &mut occlude_rng);

        scene.gt_class.extend(std::iter::repeat_n(inst.class_id, points.len()));
        scene.gt_instance.extend(std::iter::repeat_n(k as i64, points.len()));
        scene.points.extend(points);
        scene.instances.push(SceneInstance {
            class_id: inst.class_id,
            pose: *pose,
            expected_points: spec.points_per_instance,
        });
    }

    if spec.background_points > 0 {
        let (lo, hi) = match bounding_box(&scene.points) {
            Some((lo, hi)) => (lo.add_scalar(-0.05), hi.add_scalar(0.05)),
            None => (Vec3::repeat(-0.5), Vec3::repeat(0.5)),
        };
        let mut rng = stream(spec.rng_seed, spec.frame_id, FRAME_STREAM, STREAM_BACKGROUND);
        for _ in 0..spec.background_points {
            scene.points.push(uniform_in(&mut rng, &lo, &hi));
            scene.gt_class.push(BACKGROUND_CLASS);
            scene.gt_instance.push(BACKGROUND_INSTANCE);
        }
    }
    scene.validate()?;
    Ok(scene)
}

fn bounding_box(points: &[Vec3]) -> Option<(Vec3, Vec3)> {
    let first = points.first()?;
    Some(
        points
            .iter()
            .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
    )
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: &Vec3, hi: &Vec3) -> Vec3 {
    Vec3::from_fn(|i, _| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>())
}

// ---------------------------------------------------------------------------
// Oracle predictor

/// Ground-truth keypoint offsets, center offsets and class labels of a
/// scene, with keypoints taken from the registry.
struct GroundTruth {
    num_keypoints: usize,
    /// Camera-frame pipeline keypoints per instance (center first).
    targets: Vec<Vec<Vec3>>,
    diameters: Vec<f64>,
}

impl GroundTruth {
    fn new(scene: &Scene, registry: &ModelRegistry) -> Result<Self> {
        let mut num_keypoints = None;
        let mut targets = Vec::with_capacity(scene.instances.len());
        let mut diameters = Vec::with_capacity(scene.instances.len());
        for inst in &scene.instances {
            let model = &registry.get(inst.class_id)?.model;
            let kps = model.pipeline_keypoints();
            match num_keypoints {
                None => num_keypoints = Some(kps.len()),
                Some(m) if m != kps.len() => {
                    return Err(Error::invalid(format!(
                        "models disagree on keypoint count ({m} vs {})",
                        kps.len()
                    )))
                }
                Some(_) => {}
            }
            targets.push(kps.iter().map(|k| inst.pose.transform_point(k)).collect());
            diameters.push(model.diameter());
        }
        let num_keypoints = match num_keypoints {
            Some(m) => m,
            None => registry.iter().next().map_or(1, |r| r.model.pipeline_keypoints().len()),
        };
        Ok(GroundTruth {
            num_keypoints,
            targets,
            diameters,
        })
    }
}

struct Voter<'a> {
    noise: &'a NoiseSpec,
    lo: Vec3,
    hi: Vec3,
}

impl Voter<'_> {
    /// Offset from `point` toward `target`, corrupted per the noise spec.
    /// Draws the same number of random values whatever the outcome.
    fn offset(&self, rng: &mut ChaCha8Rng, point: &Vec3, target: &Vec3, diameter: f64) -> Vec3 {
        let gt = target - point;
        let outlier = rng.random::<f64>() < self.noise.outlier_rate;
        let uniform = uniform_in(rng, &self.lo, &self.hi);
        let gauss = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        if outlier {
            return uniform - point;
        }
        let mut sigma = self.noise.offset_sigma;
        if self.noise.distance_scaled && diameter > 0.0 {
            sigma *= 1.0 + gt.norm() / diameter;
        }
        if sigma == 0.0 {
            gt
        } else {
            gt + gauss * sigma
        }
    }
}

fn peaked_scores(peak: usize, classes: usize, out: &mut Vec<f64>) {
    if classes == 1 {
        out.push(1.0);
        return;
    }
    let rest = (1.0 - PEAK_SCORE) / (classes - 1) as f64;
    out.extend((0..classes).map(|c| if c == peak { PEAK_SCORE } else { rest }));
}

/// Ground-truth offsets plus noise, standing in for a trained network.
///
/// Class scores put [`PEAK_SCORE`] on the true class (background for
/// clutter) and share the rest equally, except that with probability
/// `label_error_rate` the peak moves to a uniformly chosen wrong class.
/// Background points vote with zero offsets.
pub fn oracle_predict(scene: &Scene, registry: &ModelRegistry, noise: &NoiseSpec, rng_seed: u64) -> Result<Prediction> {
    noise.validate()?;
    scene.validate()?;
    let gt = GroundTruth::new(scene, registry)?;
    let m = gt.num_keypoints;
    let classes = registry.num_classes().max(1);
    if let Some(c) = scene.instances.iter().map(|i| i.class_id as usize).find(|&c| c >= classes) {
        return Err(Error::UnknownModel(c as u32));
    }
    let (lo, hi) = bounding_box(&scene.points).unwrap_or((Vec3::zeros(), Vec3::zeros()));
    let voter = Voter { noise, lo, hi };

    let mut rngs: Vec<ChaCha8Rng> = (0..scene.instances.len())
        .map(|k| stream(rng_seed, scene.frame_id, k as u64, STREAM_PREDICT))
        .collect();
    let mut background_rng = stream(rng_seed, scene.frame_id, FRAME_STREAM, STREAM_PREDICT);

    let n = scene.len();
    let mut kp_offsets = Vec::with_capacity(n * m);
    let mut center_offsets = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n * classes);
    for i in 0..n {
        let point = &scene.points[i];
        let true_class = scene.gt_class[i] as usize;
        let rng = match usize::try_from(scene.gt_instance[i]) {
            Ok(k) => {
                let rng = &mut rngs[k];
                let targets = &gt.targets[k];
                let diameter = gt.diameters[k];
                for target in targets {
                    kp_offsets.push(voter.offset(rng, point, target, diameter));
                }
                center_offsets.push(voter.offset(rng, point, &targets[0], diameter));
                rng
            }
            Err(_) => {
                kp_offsets.extend(std::iter::repeat_n(Vec3::zeros(), m));
                center_offsets.push(Vec3::zeros());
                &mut background_rng
            }
        };
        let mislabel = rng.random::<f64>() < noise.label_error_rate;
        let wrong = if classes > 1 { rng.random_range(0..classes - 1) } else { 0 };
        let peak = if mislabel && classes > 1 {
            if wrong >= true_class {
                wrong + 1
            } else {
                wrong
            }
        } else {
            true_class
        };
        peaked_scores(peak, classes, &mut scores);
    }
    Prediction::new(m, classes, kp_offsets, center_offsets, scores)
}

// ---------------------------------------------------------------------------
// Pipeline

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub voting: VotingConfig,
    /// Weight each keypoint correspondence by its vote support.
    pub weighted_fit: bool,
}

/// Why one instance produced no pose.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("estimation failed: {0}")]
pub struct EstimationFailed(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceEstimate {
    pub cluster: InstanceCluster,
    pub outcome: std::result::Result<(Pose, KeypointEstimate), EstimationFailed>,
}

impl InstanceEstimate {
    pub fn class_id(&self) -> u32 {
        self.cluster.class_id
    }

    pub fn pose(&self) -> Option<&Pose> {
        self.outcome.as_ref().ok().map(|(pose, _)| pose)
    }
}

fn estimate_instance(
    cluster: &InstanceCluster,
    scene: &Scene,
    pred: &Prediction,
    registry: &ModelRegistry,
    config: &PipelineConfig,
) -> std::result::Result<(Pose, KeypointEstimate), EstimationFailed> {
    let fail = |e: Error| EstimationFailed(e.to_string());
    let object = registry.get(cluster.class_id).map_err(fail)?.model.pipeline_keypoints();
    if object.len() != pred.num_keypoints() {
        return Err(EstimationFailed(format!(
            "prediction has {} keypoints, model {} has {}",
            pred.num_keypoints(),
            cluster.class_id,
            object.len()
        )));
    }
    let estimate = aggregate_keypoints(cluster, scene, pred, &config.voting).map_err(fail)?;
    let resolved: Vec<usize> = (0..object.len())
        .filter(|&j| estimate.support[j] > 0 && estimate.positions[j].iter().all(|v| v.is_finite()))
        .collect();
    let camera = resolved.iter().map(|&j| estimate.positions[j]).collect();
    let object = resolved.iter().map(|&j| object[j]).collect();
    let corr = Correspondences::new(camera, object).map_err(fail)?;
    let pose = if config.weighted_fit {
        let weights: Vec<f64> = resolved.iter().map(|&j| estimate.support[j] as f64).collect();
        least_squares_fit_weighted(&corr, &weights)
    } else {
        least_squares_fit(&corr)
    }
    .map_err(fail)?;
    Ok((pose, estimate))
}

/// Segments instances, votes their keypoints and fits one pose per
/// surviving cluster. A failing instance is reported as such and does not
/// affect the others.
pub fn run_pipeline(
    scene: &Scene,
    pred: &Prediction,
    registry: &ModelRegistry,
    config: &PipelineConfig,
) -> Result<Vec<InstanceEstimate>> {
    let clusters = segment_instances(scene, pred, &config.voting)?;
    Ok(clusters
        .into_par_iter()
        .map(|cluster| {
            let outcome = estimate_instance(&cluster, scene, pred, registry, config);
            InstanceEstimate { cluster, outcome }
        })
        .collect())
}

pub fn to_pose_records(frame_id: u64, estimates: &[InstanceEstimate]) -> Vec<PoseRecord> {
    estimates
        .iter()
        .enumerate()
        .map(|(cluster, e)| PoseRecord {
            frame_id,
            cluster,
            class_id: e.class_id(),
            pose: e.pose().copied(),
            min_support: match &e.outcome {
                Ok((_, kp)) => kp.support.iter().copied().min().unwrap_or(0),
                Err(_) => 0,
            },
        })
        .collect()
}

/// Scores every ground-truth instance of `scene`.
///
/// Instances are matched greedily, in ground-truth order, to the unused
/// estimate of the same class and frame with the nearest translation.
/// Instances left without an estimate get infinite distances.
pub fn evaluate(scene: &Scene, poses: &[PoseRecord], registry: &ModelRegistry) -> Result<Vec<EvalRecord>> {
    let mut used = vec![false; poses.len()];
    scene
        .instances
        .iter()
        .enumerate()
        .map(|(k, inst)| {
            let entry = registry.get(inst.class_id)?;
            let mut best: Option<(usize, f64)> = None;
            for (r, rec) in poses.iter().enumerate() {
                let Some(pose) = &rec.pose else { continue };
                if used[r] || rec.class_id != inst.class_id || rec.frame_id != scene.frame_id {
                    continue;
                }
                let d = pose.translation_distance_to(&inst.pose);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((r, d));
                }
            }
            let (add, adds) = match best {
                Some((r, _)) => {
                    used[r] = true;
                    let pose = poses[r].pose.as_ref().expect("matched records carry a pose");
                    (
                        add_distance(&entry.model, pose, &inst.pose)?,
                        adds_distance(&entry.model, pose, &inst.pose)?,
                    )
                }
                None => (f64::INFINITY, f64::INFINITY),
            };
            Ok(EvalRecord {
                frame_id: scene.frame_id,
                class_id: inst.class_id,
                instance_id: k,
                add,
                adds,
                symmetric: entry.symmetric,
                invisible_fraction: invisible_fraction(scene, k, &entry.model)?,
            })
        })
        .collect()
}

/// Generates the scene for `spec`, predicts it with the oracle (seeded by
/// the spec's seed), runs the pipeline and evaluates the result.
pub fn run_trial(
    spec: &SceneSpec,
    noise: &NoiseSpec,
    registry: &ModelRegistry,
    config: &PipelineConfig,
) -> Result<Vec<EvalRecord>> {
    let scene = generate_scene(spec, registry)?;
    let pred = oracle_predict(&scene, registry, noise, spec.rng_seed)?;
    let estimates = run_pipeline(&scene, &pred, registry, config)?;
    evaluate(&scene, &to_pose_records(scene.frame_id, &estimates), registry)
}

/// Runs `trials` frames of `base`, numbered from its frame id.
pub fn run_trials(
    base: &SceneSpec,
    noise: &NoiseSpec,
    trials: usize,
    registry: &ModelRegistry,
    config: &PipelineConfig,
) -> Result<Vec<Vec<EvalRecord>>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let spec = SceneSpec {
                frame_id: base.frame_id + t,
                ..base.clone()
            };
            run_trial(&spec, noise, registry, config)
        })
        .collect()
}

fn finite_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

// ---------------------------------------------------------------------------
// Sweeps

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionRow {
    pub fraction: f64,
    pub trials: usize,
    /// Share of instances with ADD-S below 2 cm; failed instances count as
    /// misses.
    pub acc_2cm: f64,
    /// Means over estimated instances only.
    pub mean_add: f64,
    pub mean_adds: f64,
    pub records: Vec<EvalRecord>,
}

impl OcclusionRow {
    /// Binomial standard error of `acc_2cm`.
    pub fn std_error(&self) -> f64 {
        let n = self.records.len().max(1) as f64;
        (self.acc_2cm * (1.0 - self.acc_2cm) / n).sqrt()
    }
}

/// Accuracy under increasing occlusion. Trial `t` of every fraction uses
/// the same frame id and seed, so fractions differ only in what is removed.
pub fn occlusion_sweep(
    base: &SceneSpec,
    noise: &NoiseSpec,
    fractions: &[f64],
    trials: usize,
    registry: &ModelRegistry,
    config: &PipelineConfig,
) -> Result<Vec<OcclusionRow>> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if let Some(f) = fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(Error::invalid(format!("occlusion fraction {f} outside [0, 1)")));
    }
    fractions
        .iter()
        .map(|&fraction| {
            let spec = SceneSpec {
                occlusion_fraction: fraction,
                ..base.clone()
            };
            let records: Vec<EvalRecord> = run_trials(&spec, noise, trials, registry, config)?
                .into_iter()
                .flatten()
                .collect();
            let adds: Vec<f64> = records.iter().map(|r| r.adds).collect();
            Ok(OcclusionRow {
                fraction,
                trials,
                acc_2cm: accuracy_at(&adds, ACCURACY_THRESHOLD_2CM)?,
                mean_add: finite_mean(records.iter().map(|r| r.add)),
                mean_adds: finite_mean(adds.iter().copied()),
                records,
            })
        })
        .collect()
}

pub const OCCLUSION_HEADER: &str = "fraction,trials,acc_2cm,mean_add,mean_adds";

pub fn occlusion_to_csv(rows: &[OcclusionRow]) -> String {
    let mut out = format!("{OCCLUSION_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.fraction, r.trials, r.acc_2cm, r.mean_add, r.mean_adds
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub method: KeypointMethod,
    pub trials: usize,
    /// Mean ADD over estimated instances.
    pub mean_add: f64,
    /// Share of instances with ADD-S below 2 cm.
    pub acc_2cm: f64,
    pub failures: usize,
    /// Mean ADD of each trial (NaN when nothing was estimated), in trial
    /// order. Trials share scenes across methods, so these pair up.
    pub trial_add: Vec<f64>,
}

/// Reruns the same trials with each keypoint selection method.
pub fn keypoint_ablation(
    base: &SceneSpec,
    noise: &NoiseSpec,
    methods: &[KeypointMethod],
    trials: usize,
    registry: &ModelRegistry,
    config: &PipelineConfig,
) -> Result<Vec<AblationRow>> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    methods
        .iter()
        .map(|&method| {
            let registry = registry.with_keypoints(method)?;
            let per_trial = run_trials(base, noise, trials, &registry, config)?;
            let records: Vec<&EvalRecord> = per_trial.iter().flatten().collect();
            let adds: Vec<f64> = records.iter().map(|r| r.adds).collect();
            Ok(AblationRow {
                method,
                trials,
                mean_add: finite_mean(records.iter().map(|r| r.add)),
                acc_2cm: accuracy_at(&adds, ACCURACY_THRESHOLD_2CM)?,
                failures: records.iter().filter(|r| !r.is_estimated()).count(),
                trial_add: per_trial
                    .iter()
                    .map(|t| finite_mean(t.iter().map(|r| r.add)))
                    .collect(),
            })
        })
        .collect()
}

pub const ABLATION_HEADER: &str = "method,trials,mean_add,acc_2cm,failures";

pub fn ablation_to_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method, r.trials, r.mean_add, r.acc_2cm, r.failures
        ));
    }
    out
}

/// Input of the occlusion sweep command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionSweepConfig {
    pub scene: SceneSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub fractions: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

/// Input of the keypoint ablation command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointSweepConfig {
    pub scene: SceneSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    pub trials: usize,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

fn default_methods() -> Vec<String> {
    ["fps4", "fps8", "fps12", "bbox8"].map(String::from).to_vec()
}

impl KeypointSweepConfig {
    pub fn parsed_methods(&self) -> Result<Vec<KeypointMethod>> {
        self.methods.iter().map(|m| m.parse()).collect()
    }
}
