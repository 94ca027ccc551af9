//! Surface samples of simple solids, for synthetic object models.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Vec3;

/// Points uniformly distributed (by area) over the surface of an
/// axis-aligned box centered at the origin.
pub fn box_surface(size: Vec3, n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = size / 2.0;
    let areas = [size.y * size.z, size.x * size.z, size.x * size.y];
    let total: f64 = areas.iter().sum::<f64>() * 2.0;
    (0..n)
        .map(|_| {
            let mut pick = rng.random::<f64>() * total;
            let mut axis = 0;
            while axis < 2 && pick >= 2.0 * areas[axis] {
                pick -= 2.0 * areas[axis];
                axis += 1;
            }
            let sign = if pick < areas[axis] { -1.0 } else { 1.0 };
            let mut p = Vec3::from_fn(|i, _| rng.random_range(-half[i]..=half[i]));
            p[axis] = sign * half[axis];
            p
        })
        .collect()
}

/// Fibonacci-lattice sphere of the given radius.
pub fn sphere_surface(radius: f64, n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            radius * Vec3::new(r * phi.cos(), y, r * phi.sin())
        })
        .collect()
}

/// Closed cylinder along z, centered at the origin, sampled by area.
pub fn cylinder_surface(radius: f64, height: f64, n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = TAU * radius * height;
    let cap = PI * radius * radius;
    (0..n)
        .map(|_| {
            let pick = rng.random::<f64>() * (side + 2.0 * cap);
            let angle = rng.random::<f64>() * TAU;
            if pick < side {
                let z = rng.random_range(-height / 2.0..=height / 2.0);
                Vec3::new(radius * angle.cos(), radius * angle.sin(), z)
            } else {
                let r = radius * rng.random::<f64>().sqrt();
                let z = if pick < side + cap { -height / 2.0 } else { height / 2.0 };
                Vec3::new(r * angle.cos(), r * angle.sin(), z)
            }
        })
        .collect()
}

/// Torus around the z axis (`major` ring radius, `minor` tube radius),
/// sampled by area.
pub fn torus_surface(major: f64, minor: f64, n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u = rng.random::<f64>() * TAU;
        let v = rng.random::<f64>() * TAU;
        // Area element is proportional to major + minor·cos v.
        let accept = (major + minor * v.cos()) / (major + minor);
        if rng.random::<f64>() > accept {
            continue;
        }
        let ring = major + minor * v.cos();
        out.push(Vec3::new(ring * u.cos(), ring * u.sin(), minor * v.sin()));
    }
    out
}
