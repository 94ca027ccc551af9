//! Hough voting: per-point offsets become votes, votes become instances and
//! keypoints.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::meanshift::MeanShift;
use crate::scene::{Prediction, Scene, BACKGROUND_CLASS};

/// How the votes for one keypoint are reduced to a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mode of the most populated MeanShift cluster.
    #[default]
    MeanShift,
    /// Plain mean of all votes.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VotingConfig {
    /// MeanShift settings for voted instance centers.
    pub center: MeanShift,
    /// MeanShift settings for keypoint votes.
    pub keypoint: MeanShift,
    /// Instance clusters smaller than this are dropped as noise.
    pub min_cluster_points: usize,
    pub aggregation: Aggregation,
}

impl Default for VotingConfig {
    fn default() -> Self {
        VotingConfig {
            center: MeanShift::with_bandwidth(0.05),
            keypoint: MeanShift::with_bandwidth(0.02),
            min_cluster_points: 10,
            aggregation: Aggregation::MeanShift,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceCluster {
    pub class_id: u32,
    pub point_indices: Vec<usize>,
    pub voted_center: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointEstimate {
    pub positions: Vec<Vec3>,
    /// Number of votes in the winning cluster of each keypoint.
    pub support: Vec<usize>,
}

/// `votes[j][i] = points[i] + offsets[i][j]`.
pub fn apply_offsets(points: &[Vec3], offsets: &[Vec<Vec3>]) -> Result<Vec<Vec<Vec3>>> {
    if points.len() != offsets.len() {
        return Err(Error::invalid(format!(
            "{} points but {} offset rows",
            points.len(),
            offsets.len()
        )));
    }
    let m = offsets.first().map_or(0, Vec::len);
    if offsets.iter().any(|row| row.len() != m) {
        return Err(Error::invalid("offset rows differ in keypoint count"));
    }
    Ok((0..m)
        .map(|j| points.iter().zip(offsets).map(|(p, row)| p + row[j]).collect())
        .collect())
}

fn keypoint_votes(indices: &[usize], scene: &Scene, pred: &Prediction, j: usize) -> Vec<Vec3> {
    indices
        .iter()
        .map(|&i| scene.points[i] + pred.kp_offsets(i)[j])
        .collect()
}

/// Splits foreground points into instances by clustering their voted
/// centers, class by class.
pub fn segment_instances(
    scene: &Scene,
    pred: &Prediction,
    config: &VotingConfig,
) -> Result<Vec<InstanceCluster>> {
    pred.check_matches(scene)?;

    let mut by_class: Vec<(u32, Vec<usize>)> = Vec::new();
    for i in 0..scene.len() {
        let class = pred.predicted_class(i);
        if class == BACKGROUND_CLASS {
            continue;
        }
        match by_class.iter_mut().find(|(c, _)| *c == class) {
            Some((_, members)) => members.push(i),
            None => by_class.push((class, vec![i])),
        }
    }
    by_class.sort_by_key(|(c, _)| *c);

    let per_class: Vec<Vec<InstanceCluster>> = by_class
        .par_iter()
        .map(|(class, members)| {
            let centers: Vec<Vec3> = members
                .iter()
                .map(|&i| scene.points[i] + pred.center_offset(i))
                .collect();
            let clustering = config.center.cluster(&centers)?;
            Ok((0..clustering.centers.len())
                .filter(|&k| clustering.populations[k] >= config.min_cluster_points)
                .map(|k| InstanceCluster {
                    class_id: *class,
                    point_indices: clustering.members(k).map(|local| members[local]).collect(),
                    voted_center: clustering.centers[k],
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_class.into_iter().flatten().collect())
}

/// Votes every keypoint of one instance.
pub fn aggregate_keypoints(
    cluster: &InstanceCluster,
    scene: &Scene,
    pred: &Prediction,
    config: &VotingConfig,
) -> Result<KeypointEstimate> {
    pred.check_matches(scene)?;
    if cluster.point_indices.is_empty() {
        return Err(Error::invalid("instance cluster has no points"));
    }
    let per_keypoint: Vec<(Vec3, usize)> = (0..pred.num_keypoints())
        .into_par_iter()
        .map(|j| {
            let votes = keypoint_votes(&cluster.point_indices, scene, pred, j);
            match config.aggregation {
                Aggregation::Mean => {
                    let sum: Vec3 = votes.iter().sum();
                    Ok((sum / votes.len() as f64, votes.len()))
                }
                Aggregation::MeanShift => {
                    let clustering = config.keypoint.cluster(&votes)?;
                    let best = clustering.largest();
                    Ok((clustering.centers[best], clustering.populations[best]))
                }
            }
        })
        .collect::<Result<_>>()?;
    let (positions, support) = per_keypoint.into_iter().unzip();
    Ok(KeypointEstimate { positions, support })
}
