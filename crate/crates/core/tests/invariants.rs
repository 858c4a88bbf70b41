use proptest::prelude::*;
use safenav_core::lidar::{cast_lidar, N_BEAMS};
use safenav_core::observation::{build_observation, NeighborAssignment};
use safenav_core::reward::formation_error;
use safenav_core::scenario::{spawn_scenario, ScenarioParams, ScenarioSpec};
use safenav_core::{step_unicycle, wrap_angle, ActionBounds, ActionCmd, Arena, Obstacle, Pose2D, SimParams, Vec2, WorldState};

fn team(poses: Vec<Pose2D>, obstacles: Vec<Obstacle>, arena: Arena, goal: Vec2) -> WorldState {
    WorldState::new(poses, obstacles, arena, goal, SimParams::default()).unwrap()
}

fn rigid(p: Pose2D, phi: f64, t: Vec2) -> Pose2D {
    let (s, c) = phi.sin_cos();
    Pose2D::new(c * p.x - s * p.y + t.x, s * p.x + c * p.y + t.y, p.theta + phi)
}

fn rot(v: Vec2, phi: f64, t: Vec2) -> Vec2 {
    let (s, c) = phi.sin_cos();
    Vec2::new(c * v.x - s * v.y + t.x, s * v.x + c * v.y + t.y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn unicycle_stays_within_speed(x in -5.0..5.0f64, y in -5.0..5.0f64, th in -3.1..3.1f64,
                                   v in 0.0..0.22f64, w in -2.84..2.84f64) {
        let p = Pose2D::new(x, y, th);
        let q = step_unicycle(p, ActionCmd { v, w }, 0.1).unwrap();
        prop_assert!((q.position() - p.position()).norm() <= v * 0.1 + 1e-12);
        prop_assert!(q.theta > -std::f64::consts::PI && q.theta <= std::f64::consts::PI);
        prop_assert!(wrap_angle(q.theta - p.theta - w * 0.1).abs() < 1e-9);
    }

    #[test]
    fn rotation_in_place_is_invertible(th in -3.1..3.1f64, w in -2.84..2.84f64) {
        let p = Pose2D::new(0.3, -0.2, th);
        let q = step_unicycle(p, ActionCmd { v: 0.0, w }, 0.1).unwrap();
        let back = step_unicycle(q, ActionCmd { v: 0.0, w: -w }, 0.1).unwrap();
        prop_assert!(wrap_angle(back.theta - p.theta).abs() < 1e-12);
        prop_assert_eq!(back.position(), p.position());
    }

    #[test]
    fn unit_action_roundtrip(u in -1.0..1.0f64, z in -1.0..1.0f64) {
        let b = ActionBounds::default();
        let a = b.from_unit([u, z]);
        prop_assert!(b.contains(a));
        let [u2, z2] = b.to_unit(a);
        prop_assert!((u - u2).abs() < 1e-12 && (z - z2).abs() < 1e-12);
    }

    #[test]
    fn lidar_in_range(seed in 0u64..500) {
        let w = spawn_scenario(&ScenarioSpec::MixedObstacles(5), &ScenarioParams::default(), &SimParams::default(), seed).unwrap();
        for i in 0..3 {
            let scan = cast_lidar(&w, i, N_BEAMS, 3.5);
            prop_assert_eq!(scan.len(), N_BEAMS);
            prop_assert!(scan.iter().all(|r| (0.0..=3.5).contains(r)));
        }
    }

    #[test]
    fn lidar_shrinks_toward_obstacle(d in 0.5..3.0f64, step in 0.01..0.3f64) {
        let poses = vec![Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(-2.0, 2.0, 0.0), Pose2D::new(-2.0, -2.0, 0.0)];
        let far = team(poses.clone(), vec![Obstacle::cylinder(d + 0.3, 0.0, 0.3)], Arena::square(20.0), Vec2::zeros());
        let near = team(poses, vec![Obstacle::cylinder(d + 0.3 - step, 0.0, 0.3)], Arena::square(20.0), Vec2::zeros());
        let a = cast_lidar(&far, 0, N_BEAMS, 3.5);
        let b = cast_lidar(&near, 0, N_BEAMS, 3.5);
        for k in 0..N_BEAMS {
            prop_assert!(b[k] <= a[k] + 1e-12);
        }
    }

    #[test]
    fn observation_invariant_under_rigid_motion(seed in 0u64..200, phi in -3.1..3.1f64,
                                                 tx in -50.0..50.0f64, ty in -50.0..50.0f64) {
        // walls far out of lidar range so only the team is seen
        let params = ScenarioParams { arena_side: 8.0, ..Default::default() };
        let base = spawn_scenario(&ScenarioSpec::EmptyWalled, &params, &SimParams::default(), seed).unwrap();
        let arena = Arena::square(1000.0);
        let t = Vec2::new(tx, ty);
        let a = team(base.poses(), vec![], arena, base.centroid_goal);
        let b = team(base.poses().into_iter().map(|p| rigid(p, phi, t)).collect(), vec![], arena, rot(base.centroid_goal, phi, t));
        let asg = NeighborAssignment::ring(3).unwrap();
        for i in 0..3 {
            let oa = build_observation(&a, i, &asg, 1.0, ActionCmd::ZERO).to_array();
            let ob = build_observation(&b, i, &asg, 1.0, ActionCmd::ZERO).to_array();
            for k in 0..oa.len() {
                let diff = oa[k] - ob[k];
                // bearings may wrap across the branch cut
                let diff = if diff.abs() > 6.0 { wrap_angle(diff) } else { diff };
                prop_assert!(diff.abs() < 1e-6, "slot {k}: {} vs {}", oa[k], ob[k]);
            }
        }
    }

    #[test]
    fn formation_error_nonnegative(seed in 0u64..300, d_ref in 0.1..3.0f64) {
        let w = spawn_scenario(&ScenarioSpec::EmptyWalled, &ScenarioParams::default(), &SimParams::default(), seed).unwrap();
        prop_assert!(formation_error(&w, &NeighborAssignment::ring(3).unwrap(), d_ref) >= 0.0);
    }

    #[test]
    fn spawned_worlds_are_valid(seed in 0u64..200, k in 0usize..6, n in 3usize..7) {
        let params = ScenarioParams { n_robots: n, ..Default::default() };
        for spec in [ScenarioSpec::RandomObstacles(k), ScenarioSpec::MixedObstacles(k), ScenarioSpec::DynamicObstacles(k)] {
            let w = spawn_scenario(&spec, &params, &SimParams::default(), seed).unwrap();
            prop_assert_eq!(w.n_robots(), n);
            prop_assert!(w.first_colliding_robot().is_none());
            prop_assert!(w.arena.contains(w.centroid_goal));
        }
    }
}
