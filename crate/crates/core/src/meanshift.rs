//! Flat-kernel MeanShift over 3D points.
//!
//! Each seed runs a trajectory that repeatedly moves to the mean of the input
//! points within `bandwidth` of it. Converged modes closer than the merge
//! radius to an earlier mode join that mode's cluster. Neighbor queries go
//! through a uniform grid whose cells are one bandwidth wide.
//!
//! Seeds are either every input point, each keeping the cluster its own
//! trajectory reached, or one seed per occupied grid cell (at the mean of the
//! cell's points), with points then assigned to the nearest mode.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeanShift {
    pub bandwidth: f64,
    /// Trajectories stop once a step moves less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Merge radius as a fraction of the bandwidth.
    pub merge_ratio: f64,
    pub seeding: Seeding,
}

/// Where MeanShift trajectories start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seeding {
    /// One seed per bandwidth-sized grid cell holding points.
    #[default]
    Binned,
    /// One seed per input point.
    AllPoints,
}

impl Default for MeanShift {
    fn default() -> Self {
        MeanShift {
            bandwidth: 0.05,
            tol: 1e-4,
            max_iter: 300,
            merge_ratio: 0.5,
            seeding: Seeding::Binned,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centers: Vec<Vec3>,
    /// Cluster index of every input point.
    pub assignment: Vec<usize>,
    pub populations: Vec<usize>,
}

impl Clustering {
    /// Index of the most populated cluster, lowest index on ties.
    pub fn largest(&self) -> usize {
        let mut best = 0;
        for (k, &n) in self.populations.iter().enumerate() {
            if n > self.populations[best] {
                best = k;
            }
        }
        best
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }
}

impl MeanShift {
    pub fn with_bandwidth(bandwidth: f64) -> Self {
        MeanShift {
            bandwidth,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if !(self.merge_ratio >= 0.0) {
            return Err(Error::invalid("merge ratio must be non-negative"));
        }
        Ok(())
    }

    pub fn cluster(&self, points: &[Vec3]) -> Result<Clustering> {
        self.validate()?;
        if points.is_empty() {
            return Err(Error::invalid("cannot cluster an empty point set"));
        }
        let grid = Grid::new(points, self.bandwidth);
        let seeds: Vec<Vec3> = match self.seeding {
            Seeding::AllPoints => points.to_vec(),
            Seeding::Binned => grid.cell_means(points),
        };
        let modes: Vec<Vec3> = seeds
            .par_iter()
            .map(|p| self.seek_mode(&grid, points, *p))
            .collect();

        let merge_sq = (self.merge_ratio * self.bandwidth).powi(2);
        let mut centers: Vec<Vec3> = Vec::new();
        let seed_cluster: Vec<usize> = modes
            .iter()
            .map(|mode| match centers.iter().position(|c| (c - mode).norm_squared() < merge_sq) {
                Some(k) => k,
                None => {
                    centers.push(*mode);
                    centers.len() - 1
                }
            })
            .collect();
        let assignment: Vec<usize> = match self.seeding {
            Seeding::AllPoints => seed_cluster,
            Seeding::Binned => points.par_iter().map(|p| nearest(&centers, p)).collect(),
        };
        let mut populations = vec![0; centers.len()];
        for &k in &assignment {
            populations[k] += 1;
        }
        Ok(Clustering {
            centers,
            assignment,
            populations,
        })
    }

    fn seek_mode(&self, grid: &Grid, points: &[Vec3], start: Vec3) -> Vec3 {
        let radius_sq = self.bandwidth * self.bandwidth;
        let mut x = start;
        for _ in 0..self.max_iter {
            let mut sum = Vec3::zeros();
            let mut count = 0usize;
            grid.for_each_candidate(&x, |i| {
                let p = &points[i];
                if (p - x).norm_squared() <= radius_sq {
                    sum += p;
                    count += 1;
                }
            });
            if count == 0 {
                break;
            }
            let next = sum / count as f64;
            let shift = (next - x).norm();
            x = next;
            if shift < self.tol {
                break;
            }
        }
        x
    }
}

/// Index of the center closest to `p`, lowest index on ties.
fn nearest(centers: &[Vec3], p: &Vec3) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = (c - p).norm_squared();
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Flat-kernel MeanShift with the default merge ratio and seeding.
pub fn mean_shift(points: &[Vec3], bandwidth: f64, tol: f64, max_iter: usize) -> Result<Clustering> {
    MeanShift {
        bandwidth,
        tol,
        max_iter,
        ..Default::default()
    }
    .cluster(points)
}

/// Uniform spatial hash. Points are kept in index order inside each cell so
/// that neighbor sums are accumulated in a fixed order.
struct Grid {
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl Grid {
    fn new(points: &[Vec3], cell: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Grid { cell, cells }
    }

    fn key(p: &Vec3, cell: f64) -> [i64; 3] {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    }

    /// Mean of the points in each occupied cell, in cell-key order.
    fn cell_means(&self, points: &[Vec3]) -> Vec<Vec3> {
        let mut keys: Vec<&[i64; 3]> = self.cells.keys().collect();
        keys.sort();
        keys.into_iter()
            .map(|k| {
                let ids = &self.cells[k];
                ids.iter().map(|&i| points[i]).sum::<Vec3>() / ids.len() as f64
            })
            .collect()
    }

    /// Visits every point in the 27 cells around `x`; this is a superset of
    /// the ball of radius `cell`.
    fn for_each_candidate(&self, x: &Vec3, mut f: impl FnMut(usize)) {
        let [kx, ky, kz] = Self::key(x, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&[kx + dx, ky + dy, kz + dz]) {
                        ids.iter().copied().for_each(&mut f);
                    }
                }
            }
        }
    }
}
