use nalgebra::{DMatrix, DVector};

use crate::kinematics::{ActionBounds, ActionCmd, Pose2D};

use super::problem::{cost_and_gradient, curvature_model, evaluate, rollout, MpcProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub actions: Vec<ActionCmd>,
    pub states: Vec<Pose2D>,
    pub cost: f64,
    pub converged: bool,
    pub iters: usize,
    /// Objective after the initial guess and after each accepted iterate.
    pub cost_trace: Vec<f64>,
}

impl MpcSolution {
    /// Warm start for the next control step: drop the applied action and
    /// repeat the last one.
    pub fn shifted(&self) -> Vec<ActionCmd> {
        let mut out: Vec<ActionCmd> = self.actions.iter().skip(1).copied().collect();
        if let Some(last) = self.actions.last() {
            out.push(*last);
        }
        out
    }

    pub fn first_action(&self) -> ActionCmd {
        self.actions[0]
    }
}

fn bounds_of(b: &ActionBounds, i: usize) -> (f64, f64) {
    if i % 2 == 0 {
        (b.v_min, b.v_max)
    } else {
        (b.w_min, b.w_max)
    }
}

fn to_actions(z: &[f64]) -> Vec<ActionCmd> {
    z.chunks_exact(2).map(|c| ActionCmd::new(c[0], c[1])).collect()
}

fn project(z: &mut [f64], b: &ActionBounds) {
    for (i, x) in z.iter_mut().enumerate() {
        let (lo, hi) = bounds_of(b, i);
        *x = x.clamp(lo, hi);
    }
}

/// Clamps each linear velocity so that the next position stays inside the
/// state box. Applied once after the
/// optimization; zero velocity is always admissible from an interior state.
fn enforce_state_box(problem: &MpcProblem, actions: &mut [ActionCmd]) {
    let Some(bx) = problem.config.state_box else {
        return;
    };
    let dt = problem.config.dt;
    let mut x = problem.x0;
    for a in actions.iter_mut() {
        let (s, c) = x.theta.sin_cos();
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (p, dir, min, max) in [(x.x, c * dt, bx.x_min, bx.x_max), (x.y, s * dt, bx.y_min, bx.y_max)] {
            if dir.abs() < 1e-15 {
                continue;
            }
            let (t1, t2) = ((min - p) / dir, (max - p) / dir);
            lo = lo.max(t1.min(t2));
            hi = hi.min(t1.max(t2));
        }
        if lo <= hi {
            a.v = a.v.clamp(lo, hi);
        }
        x = crate::kinematics::unicycle(x, *a, dt);
    }
}

/// Minimizes the filter objective from `init` (or from the proposed action
/// followed by zeros) by projected Newton steps with Armijo backtracking.
/// Never fails: when the iteration budget runs out the best iterate is
/// returned with `converged = false`.
pub fn solve(problem: &MpcProblem, init: Option<&[ActionCmd]>) -> MpcSolution {
    let cfg = &problem.config;
    let t = cfg.horizon;
    let n = 2 * t;
    let b = &cfg.bounds;

    let mut z = vec![0.0; n];
    match init {
        Some(acts) if !acts.is_empty() => {
            for k in 0..t {
                let a = acts[k.min(acts.len() - 1)];
                z[2 * k] = a.v;
                z[2 * k + 1] = a.w;
            }
        }
        _ => {
            z[0] = problem.a_rl.v;
            z[1] = problem.a_rl.w;
        }
    }
    project(&mut z, b);

    let mut actions = to_actions(&z);
    let (mut j, mut g) = cost_and_gradient(problem, &actions);
    let mut trace = vec![j];
    let mut converged = false;
    let mut iters = 0;

    for _ in 0..cfg.solver.max_iters {
        iters += 1;
        let states = rollout(problem.x0, &actions, cfg.dt);
        let h = curvature_model(problem, &actions, &states);

        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                let (lo, hi) = bounds_of(b, i);
                let at_lo = z[i] <= lo + 1e-12 && g[i] > 0.0;
                let at_hi = z[i] >= hi - 1e-12 && g[i] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();

        let mut dir = vec![0.0; n];
        if !free.is_empty() {
            let m = free.len();
            let hf = DMatrix::from_fn(m, m, |r, c| h[free[r] * n + free[c]]);
            let gf = DVector::from_fn(m, |r, _| -g[free[r]]);
            let mut damping = 0.0;
            let step = loop {
                let mut hd = hf.clone();
                for i in 0..m {
                    hd[(i, i)] += damping;
                }
                if let Some(ch) = hd.cholesky() {
                    break Some(ch.solve(&gf));
                }
                damping = if damping == 0.0 { 1e-8 } else { damping * 10.0 };
                if damping > 1e8 {
                    break None;
                }
            };
            match step {
                Some(s) => {
                    for (r, &i) in free.iter().enumerate() {
                        dir[i] = s[r];
                    }
                }
                None => {
                    for &i in &free {
                        dir[i] = -g[i];
                    }
                }
            }
        }

        // Armijo backtracking along the projection arc
        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..40 {
            let mut cand: Vec<f64> = z.iter().zip(&dir).map(|(zi, di)| zi + alpha * di).collect();
            project(&mut cand, b);
            let decrease_model: f64 = g.iter().zip(cand.iter().zip(&z)).map(|(gi, (c, zi))| gi * (c - zi)).sum();
            let cand_actions = to_actions(&cand);
            let jc = evaluate(problem, &cand_actions, None);
            if jc.is_finite() && jc <= j + 1e-4 * decrease_model.min(0.0) && jc <= j {
                accepted = Some((cand, cand_actions, jc));
                break;
            }
            alpha *= 0.5;
        }

        let Some((cand, cand_actions, jc)) = accepted else {
            // no descent possible from here: first-order stationarity decides
            let mut pg: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - gi).collect();
            project(&mut pg, b);
            let stationarity = pg.iter().zip(&z).map(|(p, zi)| (p - zi).powi(2)).sum::<f64>().sqrt();
            converged = stationarity < 1e-6;
            break;
        };

        let step_norm = cand.iter().zip(&z).map(|(c, zi)| (c - zi).powi(2)).sum::<f64>().sqrt();
        let decrease = j - jc;
        z = cand;
        actions = cand_actions;
        let (jn, gn) = cost_and_gradient(problem, &actions);
        j = jn;
        g = gn;
        trace.push(j);
        if step_norm < cfg.solver.step_tol || decrease < cfg.solver.cost_tol {
            converged = true;
            break;
        }
    }

    let mut final_actions = actions;
    enforce_state_box(problem, &mut final_actions);
    let cost = evaluate(problem, &final_actions, None);
    let states = rollout(problem.x0, &final_actions, cfg.dt);
    MpcSolution {
        actions: final_actions,
        states,
        cost,
        converged,
        iters,
        cost_trace: trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Arena;
    use crate::kinematics::Vec2;
    use crate::mpc::MpcConfig;

    fn open_problem(a_rl: ActionCmd) -> MpcProblem {
        MpcProblem {
            x0: Pose2D::new(0.0, 0.0, 0.4),
            a_rl,
            neighbor_positions: [None, None],
            obstacle_position: None,
            config: MpcConfig::default(),
        }
    }

    #[test]
    fn open_space_returns_proposal() {
        let p = open_problem(ActionCmd::new(0.15, -1.2));
        let s = solve(&p, None);
        assert!(s.converged);
        assert!((s.actions[0].v - 0.15).abs() < 1e-9 && (s.actions[0].w + 1.2).abs() < 1e-9);
        assert!(s.cost.abs() < 1e-12);
    }

    #[test]
    fn warm_start_at_optimum_is_a_fixed_point() {
        let mut p = open_problem(ActionCmd::new(0.2, 0.3));
        p.obstacle_position = Some(Vec2::new(0.8, 0.5));
        p.neighbor_positions = [Some(Vec2::new(-0.5, 0.6)), None];
        let first = solve(&p, None);
        let again = solve(&p, Some(&first.actions));
        assert!(again.converged);
        assert!(again.iters <= 2, "took {} iterations", again.iters);
    }

    #[test]
    fn brakes_toward_close_obstacle() {
        let mut p = open_problem(ActionCmd::new(0.22, 0.0));
        p.x0 = Pose2D::new(0.0, 0.0, 0.0);
        p.obstacle_position = Some(Vec2::new(0.3, 0.0));
        let s = solve(&p, None);
        assert!(s.actions[0].v < 0.22);
    }

    #[test]
    fn state_box_is_respected() {
        let mut p = open_problem(ActionCmd::new(0.22, 0.0));
        p.x0 = Pose2D::new(0.99, 0.0, 0.0);
        p.config.state_box = Some(Arena::square(2.0));
        let s = solve(&p, None);
        assert!(s.states.iter().all(|x| x.x <= 1.0 + 1e-12));
        assert!(s.actions[0].v < 0.22);
    }

    #[test]
    fn monotone_trace() {
        let mut p = open_problem(ActionCmd::new(0.22, 2.0));
        p.obstacle_position = Some(Vec2::new(0.4, 0.2));
        p.neighbor_positions = [Some(Vec2::new(0.2, -0.4)), Some(Vec2::new(-0.4, 0.0))];
        let s = solve(&p, None);
        assert!(s.cost_trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
