//! Planar lidar by exact raycasting.

use std::f64::consts::PI;

use rand::Rng;

use crate::geometry::disc_ray_hit;
use crate::kinematics::Vec2;
use crate::world::WorldState;

pub const N_BEAMS: usize = 40;

/// Body-frame angle of beam `k`, wrapped to (-pi, pi].
pub fn beam_angle(k: usize, n_beams: usize) -> f64 {
    crate::kinematics::wrap_angle(2.0 * PI * k as f64 / n_beams as f64)
}

/// Ranges of `n_beams` equiangular beams starting at the robot heading.
/// Walls, obstacles and the other robots (as discs) all block beams.
pub fn cast_lidar(world: &WorldState, robot: usize, n_beams: usize, max_range: f64) -> Vec<f64> {
    let pose = world.robots[robot].pose;
    let origin = pose.position();
    let r = world.robot_radius();
    (0..n_beams)
        .map(|k| {
            let a = pose.theta + 2.0 * PI * k as f64 / n_beams as f64;
            let dir = Vec2::new(a.cos(), a.sin());
            let mut best = world.arena.ray_exit(origin, dir);
            for o in &world.obstacles {
                if let Some(t) = o.ray_hit(origin, dir) {
                    best = best.min(t);
                }
            }
            for (j, other) in world.robots.iter().enumerate() {
                if j == robot {
                    continue;
                }
                if let Some(t) = disc_ray_hit(other.pose.position(), r, origin, dir) {
                    best = best.min(t);
                }
            }
            best.clamp(0.0, max_range)
        })
        .collect()
}

/// Adds zero-mean Gaussian noise (Box-Muller) and re-clamps to `[0, max_range]`.
pub fn add_noise<R: Rng>(ranges: &mut [f64], sigma: f64, max_range: f64, rng: &mut R) {
    if sigma <= 0.0 {
        return;
    }
    for r in ranges.iter_mut() {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
        *r = (*r + sigma * z).clamp(0.0, max_range);
    }
}
