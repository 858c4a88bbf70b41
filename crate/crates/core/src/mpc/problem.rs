use crate::kinematics::{unicycle, ActionCmd, Pose2D, Vec2};

use super::config::MpcConfig;

/// One robot's filtering problem at the current step.
///
/// Anchors are held fixed over the horizon. `None` marks an anchor that is
/// absent (the corresponding penalty terms vanish).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcProblem {
    pub x0: Pose2D,
    pub a_rl: ActionCmd,
    /// Neighbor robot centers; clearance is center distance minus two radii.
    pub neighbor_positions: [Option<Vec2>; 2],
    /// Closest point of the nearest other hazard; clearance is distance
    /// minus one radius.
    pub obstacle_position: Option<Vec2>,
    pub config: MpcConfig,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Anchor {
    pub point: Vec2,
    pub offset: f64,
}

impl MpcProblem {
    pub(crate) fn anchors(&self) -> Vec<Anchor> {
        let r = self.config.robot_radius;
        let mut out = Vec::with_capacity(3);
        for p in self.neighbor_positions.iter().flatten() {
            out.push(Anchor { point: *p, offset: 2.0 * r });
        }
        if let Some(p) = self.obstacle_position {
            out.push(Anchor { point: p, offset: r });
        }
        out
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    /// Smallest predicted clearance to any anchor along `states`.
    pub fn min_clearance(&self, states: &[Pose2D]) -> f64 {
        let anchors = self.anchors();
        states
            .iter()
            .flat_map(|s| anchors.iter().map(move |a| (s.position() - a.point).norm() - a.offset))
            .fold(f64::INFINITY, f64::min)
    }
}

/// States `x_0..x_T` produced by applying `actions` from `x0`.
pub fn rollout(x0: Pose2D, actions: &[ActionCmd], dt: f64) -> Vec<Pose2D> {
    let mut states = Vec::with_capacity(actions.len() + 1);
    let mut x = x0;
    states.push(x);
    for a in actions {
        x = unicycle(x, *a, dt);
        states.push(x);
    }
    states
}

fn quad(m: &[[f64; 2]; 2], a: f64, b: f64) -> f64 {
    a * (m[0][0] * a + m[0][1] * b) + b * (m[1][0] * a + m[1][1] * b)
}

/// Penalty of one position against all anchors and its position gradient.
fn penalty(p: Vec2, anchors: &[Anchor], d: f64) -> (f64, Vec2) {
    let mut value = 0.0;
    let mut grad = Vec2::zeros();
    for a in anchors {
        let diff = p - a.point;
        let n = diff.norm();
        let e = d * (-2.0 * (n - a.offset)).exp();
        value += e;
        if n > 0.0 {
            grad -= diff * (2.0 * e / n);
        }
    }
    (value, grad)
}

/// Objective value for an action sequence of length `T`.
pub fn cost(problem: &MpcProblem, actions: &[ActionCmd]) -> f64 {
    evaluate(problem, actions, None)
}

/// Objective value and its gradient, laid out as `[v_0, w_0, v_1, w_1, ...]`.
pub fn cost_and_gradient(problem: &MpcProblem, actions: &[ActionCmd]) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; 2 * actions.len()];
    let c = evaluate(problem, actions, Some(&mut g));
    (c, g)
}

pub(crate) fn evaluate(problem: &MpcProblem, actions: &[ActionCmd], grad: Option<&mut [f64]>) -> f64 {
    let cfg = &problem.config;
    let dt = cfg.dt;
    let states = rollout(problem.x0, actions, dt);
    let anchors = problem.anchors();
    let t = actions.len();

    let (dv0, dw0) = (problem.a_rl.v - actions[0].v, problem.a_rl.w - actions[0].w);
    let mut total = quad(&cfg.r0, dv0, dw0);
    for a in &actions[1..] {
        total += quad(&cfg.r, a.v, a.w);
    }
    let mut pos_grads = Vec::with_capacity(t + 1);
    for s in &states {
        let (pv, pg) = penalty(s.position(), &anchors, cfg.d);
        total += pv;
        pos_grads.push(pg);
    }

    if let Some(g) = grad {
        // adjoint sweep; lambda = dJ/d(x, y, theta) at step k+1
        let mut lam = [pos_grads[t].x, pos_grads[t].y, 0.0];
        for k in (0..t).rev() {
            let (s, c) = states[k].theta.sin_cos();
            let a = actions[k];
            let (mut gv, mut gw) = if k == 0 {
                let r0 = &cfg.r0;
                (
                    -(2.0 * r0[0][0] * dv0 + (r0[0][1] + r0[1][0]) * dw0),
                    -(2.0 * r0[1][1] * dw0 + (r0[0][1] + r0[1][0]) * dv0),
                )
            } else {
                let r = &cfg.r;
                (
                    2.0 * r[0][0] * a.v + (r[0][1] + r[1][0]) * a.w,
                    2.0 * r[1][1] * a.w + (r[0][1] + r[1][0]) * a.v,
                )
            };
            gv += dt * (c * lam[0] + s * lam[1]);
            gw += dt * lam[2];
            g[2 * k] = gv;
            g[2 * k + 1] = gw;
            let dtheta = dt * a.v * (-s * lam[0] + c * lam[1]);
            lam = [pos_grads[k].x + lam[0], pos_grads[k].y + lam[1], lam[2] + dtheta];
        }
    }
    total
}

/// Positive semi-definite curvature model of the objective: exact for the
/// quadratic terms, and `4 D e^{-2c} ∇c ∇cᵀ` for each proximity term
/// (second derivatives of the distances dropped).
pub(crate) fn curvature_model(problem: &MpcProblem, actions: &[ActionCmd], states: &[Pose2D]) -> Vec<f64> {
    let cfg = &problem.config;
    let dt = cfg.dt;
    let t = actions.len();
    let n = 2 * t;
    let mut h = vec![0.0; n * n];
    let add_block = |h: &mut [f64], k: usize, m: &[[f64; 2]; 2]| {
        for i in 0..2 {
            for j in 0..2 {
                h[(2 * k + i) * n + 2 * k + j] += m[i][j] + m[j][i];
            }
        }
    };
    add_block(&mut h, 0, &cfg.r0);
    for k in 1..t {
        add_block(&mut h, k, &cfg.r);
    }
    let anchors = problem.anchors();
    if anchors.is_empty() || cfg.d == 0.0 {
        return h;
    }
    // forward sensitivities of position (2 x n) and heading (1 x n)
    let mut sx = vec![0.0; n];
    let mut sy = vec![0.0; n];
    let mut sth = vec![0.0; n];
    let mut gc = vec![0.0; n];
    for k in 0..t {
        let (s, c) = states[k].theta.sin_cos();
        let v = actions[k].v;
        for j in 0..n {
            sx[j] += -dt * v * s * sth[j];
            sy[j] += dt * v * c * sth[j];
        }
        sx[2 * k] += dt * c;
        sy[2 * k] += dt * s;
        sth[2 * k + 1] += dt;
        let p = states[k + 1].position();
        for a in &anchors {
            let diff = p - a.point;
            let dist = diff.norm();
            if dist == 0.0 {
                continue;
            }
            let u = diff / dist;
            let w = 4.0 * cfg.d * (-2.0 * (dist - a.offset)).exp();
            for j in 0..n {
                gc[j] = u.x * sx[j] + u.y * sy[j];
            }
            for i in 0..n {
                if gc[i] == 0.0 {
                    continue;
                }
                let wi = w * gc[i];
                for j in 0..n {
                    h[i * n + j] += wi * gc[j];
                }
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(obstacle: Option<Vec2>, horizon: usize) -> MpcProblem {
        MpcProblem {
            x0: Pose2D::new(0.0, 0.0, 0.0),
            a_rl: ActionCmd::new(0.1, 0.5),
            neighbor_positions: [None, None],
            obstacle_position: obstacle,
            config: MpcConfig { horizon, ..Default::default() },
        }
    }

    #[test]
    fn rollout_closed_forms() {
        let s = rollout(Pose2D::new(1.0, 2.0, 0.3), &[ActionCmd::ZERO; 5], 0.1);
        assert!(s.iter().all(|p| *p == Pose2D::new(1.0, 2.0, 0.3)));
        let s = rollout(Pose2D::default(), &[ActionCmd::new(0.2, 0.0); 5], 0.1);
        for (k, p) in s.iter().enumerate() {
            assert!((p.x - k as f64 * 0.02).abs() < 1e-15 && p.y == 0.0);
        }
        let s = rollout(Pose2D::default(), &[ActionCmd::new(0.0, 0.3); 5], 0.1);
        for (k, p) in s.iter().enumerate() {
            assert!((p.theta - k as f64 * 0.03).abs() < 1e-15 && p.x == 0.0 && p.y == 0.0);
        }
    }

    #[test]
    fn cost_without_anchors() {
        let p = problem(None, 5);
        let mut acts = vec![ActionCmd::ZERO; 5];
        acts[0] = p.a_rl;
        assert_eq!(cost(&p, &acts), 0.0);
        acts[0] = ActionCmd::new(0.0, 0.0);
        let expect = 10.0 * (0.1f64.powi(2) + 0.5f64.powi(2));
        assert!((cost(&p, &acts) - expect).abs() < 1e-12);
    }

    #[test]
    fn static_robot_single_step() {
        let d = 0.7;
        // obstacle anchor is a surface point; clearance = distance - radius
        let p = problem(Some(Vec2::new(d + 0.15, 0.0)), 1);
        let c = cost(&p, &[ActionCmd::ZERO]);
        let expect = 10.0 * (0.1f64.powi(2) + 0.5f64.powi(2)) + 2.0 * p.config.d * (-2.0 * d).exp();
        assert!((c - expect).abs() < 1e-12);
    }
}
