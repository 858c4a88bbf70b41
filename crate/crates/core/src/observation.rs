//! Decentralized per-robot observations.
//!
//! Layout of the 52-wide vector, in order:
//!
//! | slots  | content                                             | unit        |
//! |--------|-----------------------------------------------------|-------------|
//! | 0..40  | lidar ranges, beam k at heading + 2πk/40            | / max range |
//! | 40, 41 | distance, bearing to neighbor 1                     | m, rad      |
//! | 42, 43 | distance, bearing to neighbor 2                     | m, rad      |
//! | 44, 45 | distance, bearing to the centroid goal              | m, rad      |
//! | 46     | distance from the team centroid to the goal         | m           |
//! | 47, 48 | distance, bearing to the closest lidar return       | m, rad      |
//! | 49     | desired inter-robot distance                        | m           |
//! | 50, 51 | previously executed action (v, w)                   | m/s, rad/s  |
//!
//! Bearings are body-frame and wrapped to (-π, π].

use crate::error::{Result, SimError};
use crate::kinematics::{wrap_angle, ActionCmd, Pose2D, Vec2};
use crate::lidar::{beam_angle, cast_lidar, N_BEAMS};
use crate::world::WorldState;

pub const OBS_DIM: usize = 52;

/// Fixed two-neighbor topology: robot `i` observes `i-1` and `i+1` (mod N).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborAssignment {
    pairs: Vec<(usize, usize)>,
}

impl NeighborAssignment {
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(SimError::InvalidInput(format!("ring topology needs >= 3 robots, got {n}")));
        }
        Ok(Self {
            pairs: (0..n).map(|i| ((i + n - 1) % n, (i + 1) % n)).collect(),
        })
    }

    pub fn neighbors(&self, i: usize) -> (usize, usize) {
        self.pairs[i]
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Ring edges `(i, i+1 mod N)`, each listed once.
    pub fn ring_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.pairs.len()).map(|i| (i, self.pairs[i].1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationVector {
    /// Normalized to `[0, 1]` by the lidar range.
    pub lidar: [f64; N_BEAMS],
    pub neighbor1: (f64, f64),
    pub neighbor2: (f64, f64),
    pub goal: (f64, f64),
    pub centroid_goal_distance: f64,
    pub nearest_obstacle: (f64, f64),
    pub d_ref: f64,
    pub prev_action: ActionCmd,
}

impl ObservationVector {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        out[..N_BEAMS].copy_from_slice(&self.lidar);
        let tail = [
            self.neighbor1.0,
            self.neighbor1.1,
            self.neighbor2.0,
            self.neighbor2.1,
            self.goal.0,
            self.goal.1,
            self.centroid_goal_distance,
            self.nearest_obstacle.0,
            self.nearest_obstacle.1,
            self.d_ref,
            self.prev_action.v,
            self.prev_action.w,
        ];
        out[N_BEAMS..].copy_from_slice(&tail);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Distance and body-frame bearing from `from` to `to`. Coincident points
/// give `(0, 0)`.
pub fn relative_polar(from: Pose2D, to: Vec2) -> (f64, f64) {
    let d = to - from.position();
    let dist = d.norm();
    if dist == 0.0 {
        return (0.0, 0.0);
    }
    (dist, wrap_angle(d.y.atan2(d.x) - from.theta))
}

/// Minimum range and its beam's body-frame angle; ties go to the lowest beam.
pub fn nearest_obstacle_from_scan(lidar: &[f64]) -> (f64, f64) {
    let mut best = 0;
    for (k, &r) in lidar.iter().enumerate() {
        if r < lidar[best] {
            best = k;
        }
    }
    (lidar[best], beam_angle(best, lidar.len()))
}

/// Builds robot `robot`'s observation; `scan` is its raw lidar in meters.
pub fn observation_from_scan(
    world: &WorldState,
    robot: usize,
    scan: &[f64],
    assignment: &NeighborAssignment,
    d_ref: f64,
    prev_action: ActionCmd,
) -> ObservationVector {
    let pose = world.robots[robot].pose;
    let max_range = world.params.lidar_range;
    let (n1, n2) = assignment.neighbors(robot);
    let mut lidar = [0.0; N_BEAMS];
    for (dst, &r) in lidar.iter_mut().zip(scan) {
        *dst = r / max_range;
    }
    ObservationVector {
        lidar,
        neighbor1: relative_polar(pose, world.position(n1)),
        neighbor2: relative_polar(pose, world.position(n2)),
        goal: relative_polar(pose, world.centroid_goal),
        centroid_goal_distance: (world.centroid() - world.centroid_goal).norm(),
        nearest_obstacle: nearest_obstacle_from_scan(scan),
        d_ref,
        prev_action,
    }
}

pub fn build_observation(
    world: &WorldState,
    robot: usize,
    assignment: &NeighborAssignment,
    d_ref: f64,
    prev_action: ActionCmd,
) -> ObservationVector {
    let scan = cast_lidar(world, robot, N_BEAMS, world.params.lidar_range);
    observation_from_scan(world, robot, &scan, assignment, d_ref, prev_action)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Arena;
    use crate::world::SimParams;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn polar_examples() {
        let (d, b) = relative_polar(Pose2D::new(0.0, 0.0, 0.0), Vec2::new(1.0, 0.0));
        assert!((d - 1.0).abs() < 1e-12 && b.abs() < 1e-12);
        let (d, b) = relative_polar(Pose2D::new(0.0, 0.0, FRAC_PI_2), Vec2::new(0.0, 2.0));
        assert!((d - 2.0).abs() < 1e-12 && b.abs() < 1e-12);
        let (d, b) = relative_polar(Pose2D::new(0.0, 0.0, 0.0), Vec2::new(0.0, 1.0));
        assert!((d - 1.0).abs() < 1e-12 && (b - FRAC_PI_2).abs() < 1e-12);
        assert_eq!(relative_polar(Pose2D::new(1.0, 1.0, 2.0), Vec2::new(1.0, 1.0)), (0.0, 0.0));
        let (_, b) = relative_polar(Pose2D::new(0.0, 0.0, 0.0), Vec2::new(-1.0, 0.0));
        assert_eq!(b, PI);
    }

    #[test]
    fn scan_minimum() {
        assert_eq!(nearest_obstacle_from_scan(&[3.5; 40]), (3.5, 0.0));
        let mut s = [3.5; 40];
        s[10] = 0.5;
        let (d, a) = nearest_obstacle_from_scan(&s);
        assert_eq!(d, 0.5);
        assert!((a - FRAC_PI_2).abs() < 1e-12);
        let mut s = [3.5; 40];
        s[3] = 1.0;
        s[7] = 1.0;
        assert!((nearest_obstacle_from_scan(&s).1 - beam_angle(3, 40)).abs() < 1e-15);
    }

    #[test]
    fn ring_assignment() {
        let a = NeighborAssignment::ring(5).unwrap();
        assert_eq!(a.neighbors(0), (4, 1));
        assert_eq!(a.neighbors(4), (3, 0));
        assert_eq!(a.ring_edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]);
        assert!(NeighborAssignment::ring(2).is_err());
    }

    #[test]
    fn equilateral_goal_at_centroid() {
        let s = 1.0;
        let h = s * 3f64.sqrt() / 2.0;
        let poses = vec![
            Pose2D::new(-s / 2.0, -h / 3.0, 0.3),
            Pose2D::new(s / 2.0, -h / 3.0, 1.0),
            Pose2D::new(0.0, 2.0 * h / 3.0, -2.0),
        ];
        let w = WorldState::new(poses, vec![], Arena::square(10.0), Vec2::zeros(), SimParams::default()).unwrap();
        let a = NeighborAssignment::ring(3).unwrap();
        for i in 0..3 {
            let o = build_observation(&w, i, &a, 1.0, ActionCmd::new(0.1, -0.5));
            assert!(o.centroid_goal_distance.abs() < 1e-12);
            assert!((o.neighbor1.0 - s).abs() < 1e-12 && (o.neighbor2.0 - s).abs() < 1e-12);
            let v = o.to_array();
            assert_eq!(v.len(), OBS_DIM);
            assert_eq!(&v[50..], &[0.1, -0.5]);
            assert!(v[..40].iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}
