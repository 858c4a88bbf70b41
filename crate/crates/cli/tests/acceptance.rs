//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.
//!
//! `SAFENAV_ACCEPTANCE_ONLY=1,3,8` restricts the run to the listed criteria
//! (the others are reported as SKIP). Training outputs of criterion 5 are
//! kept under the cargo target tmp dir for inspection.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use safenav_cli::ExperimentConfig;
use safenav_core::geometry::Arena;
use safenav_core::mpc::{cost, cost_and_gradient, filter_action, MpcConfig, MpcProblem};
use safenav_core::observation::NeighborAssignment;
use safenav_core::reward::formation_error;
use safenav_core::scenario::ScenarioSpec;
use safenav_core::{step_unicycle, ActionCmd, Obstacle, Pose2D, SimParams, Vec2, WorldState};
use safenav_marl::critic::AttentionCritic;
use safenav_marl::eval::generalize_n_robots;
use safenav_marl::{run_eval, train, Agent, EpisodeMetrics, EvalConfig, Outcome, PolicySpec, SacConfig};
use safenav_nn::gradcheck::{check_case, op_cases};
use safenav_nn::{Checkpoint, ParamSet};

type Verdict = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Verdict {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn desk_config() -> ExperimentConfig {
    ExperimentConfig::load(&workspace_file("configs/desk.toml"), &[]).expect("configs/desk.toml loads")
}

// 1
fn dynamics_exactness() -> Verdict {
    let cases = [
        (Pose2D::new(0.0, 0.0, 0.0), ActionCmd::new(1.0, 0.0), Pose2D::new(0.1, 0.0, 0.0)),
        (Pose2D::new(0.0, 0.0, 0.0), ActionCmd::new(0.0, 1.0), Pose2D::new(0.0, 0.0, 0.1)),
        (Pose2D::new(0.0, 0.0, std::f64::consts::FRAC_PI_2), ActionCmd::new(1.0, 0.0), Pose2D::new(0.0, 0.1, std::f64::consts::FRAC_PI_2)),
    ];
    let mut worst = 0.0f64;
    for (p, a, want) in cases {
        let got = step_unicycle(p, a, 0.1).map_err(|e| e.to_string())?;
        worst = worst.max((got.x - want.x).abs()).max((got.y - want.y).abs()).max((got.theta - want.theta).abs());
    }
    ensure(worst <= 1e-12, format!("3 unit cases, max abs error {worst:.1e} (limit 1e-12)"))
}

// 2
fn gradient_suite() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut per_op: std::collections::BTreeMap<&str, (usize, f64)> = Default::default();
    for _ in 0..60 {
        for case in op_cases(&mut rng) {
            let err = check_case(&case, &mut rng).map_err(|e| e.to_string())?;
            let e = per_op.entry(case.name).or_default();
            e.0 += 1;
            e.1 = e.1.max(err);
        }
    }
    // cost gradient of the filter problem
    let mut worst_cost = 0.0f64;
    let cfg = MpcConfig::default();
    let n_cost = 60;
    for _ in 0..n_cost {
        let x0 = Pose2D::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0));
        let a_rl = ActionCmd::new(rng.random_range(0.0..0.22), rng.random_range(-2.84..2.84));
        let mut near = || Some(Vec2::new(x0.x + rng.random_range(-1.2..1.2), x0.y + rng.random_range(-1.2..1.2)));
        let problem = MpcProblem {
            x0,
            a_rl,
            neighbor_positions: [near(), near()],
            obstacle_position: near(),
            config: cfg,
        };
        let acts: Vec<ActionCmd> =
            (0..cfg.horizon).map(|_| ActionCmd::new(rng.random_range(0.0..0.22), rng.random_range(-2.84..2.84))).collect();
        let (_, g) = cost_and_gradient(&problem, &acts);
        let h = 1e-6;
        let mut fd = vec![0.0; g.len()];
        for (k, slot) in fd.iter_mut().enumerate() {
            let mut p = acts.clone();
            let mut m = acts.clone();
            if k % 2 == 0 {
                p[k / 2].v += h;
                m[k / 2].v -= h;
            } else {
                p[k / 2].w += h;
                m[k / 2].w -= h;
            }
            *slot = (cost(&problem, &p) - cost(&problem, &m)) / (2.0 * h);
        }
        let diff = g.iter().zip(&fd).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        let scale = g.iter().chain(&fd).fold(1e-8f64, |a, x| a.max(x.abs()));
        worst_cost = worst_cost.max(diff / scale);
    }
    per_op.insert("filter cost", (n_cost, worst_cost));
    let bad: Vec<String> = per_op
        .iter()
        .filter(|(_, (n, e))| *n < 50 || *e >= 1e-5)
        .map(|(k, (n, e))| format!("{k}: {n} instances, rel err {e:.1e}"))
        .collect();
    let worst = per_op.values().fold(0.0f64, |a, (_, e)| a.max(*e));
    ensure(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} ops x >=50 instances, worst relative error {worst:.1e} (limit 1e-5)", per_op.len())
        } else {
            bad.join("; ")
        },
    )
}

// 3
fn filter_pass_through() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = MpcConfig::default();
    let assign = NeighborAssignment::ring(3).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        // robot 0 at the center of a large arena, teammates and one
        // obstacle at least 3 m away
        let far = |rng: &mut ChaCha8Rng| {
            let a: f64 = rng.random_range(-3.2..3.2);
            let d: f64 = rng.random_range(3.0..6.0);
            (d * a.cos(), d * a.sin())
        };
        let (x1, y1) = far(&mut rng);
        let (x2, y2) = loop {
            let p = far(&mut rng);
            if (p.0 - x1).hypot(p.1 - y1) > 0.5 {
                break p;
            }
        };
        let (ox, oy) = far(&mut rng);
        let robots = vec![Pose2D::new(0.0, 0.0, rng.random_range(-3.1..3.1)), Pose2D::new(x1, y1, 0.0), Pose2D::new(x2, y2, 0.0)];
        let obstacles = if (ox - x1).hypot(oy - y1) > 0.8 && (ox - x2).hypot(oy - y2) > 0.8 {
            vec![Obstacle::cylinder(ox, oy, 0.2)]
        } else {
            vec![]
        };
        let world = WorldState::new(robots, obstacles, Arena::square(20.0), Vec2::zeros(), SimParams::default()).map_err(|e| e.to_string())?;
        let a_rl = ActionCmd::new(rng.random_range(0.0..0.22), rng.random_range(-2.84..2.84));
        let out = filter_action(&world, 0, &assign, a_rl, None, &cfg);
        worst = worst.max((out.action.v - a_rl.v).hypot(out.action.w - a_rl.w));
    }
    ensure(worst < 1e-3, format!("100 open-space instances, max |a_exec - a_rl| {worst:.2e} (limit 1e-3)"))
}

// 4
fn filter_safety_random_policy() -> Verdict {
    let cfg = desk_config();
    let mut setup = cfg.env_setup();
    setup.sim = SimParams::default();
    let ec = EvalConfig { scenario: ScenarioSpec::RandomObstacles(3), trials: 100, seed: 4, mpc_enabled: true, ..Default::default() };
    let out = run_eval(&setup, &PolicySpec::Random, &ec).map_err(|e| e.to_string())?;
    let coll = out.rows.iter().filter(|r| r.outcome == Outcome::Collision).count();
    let steps: usize = out.rows.iter().map(|r| r.steps).sum();
    ensure(coll == 0, format!("100 episodes, {steps} steps, random-obstacles:3, uniform random policy: {coll} collisions"))
}

struct Runs {
    dir: PathBuf,
    mpc: Vec<Vec<EpisodeMetrics>>,
    att: Vec<Vec<EpisodeMetrics>>,
}

const SEEDS: [u64; 3] = [0, 1, 2];
const EPISODES: usize = 1500;

fn training_runs() -> Result<Runs, String> {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-training");
    let base = desk_config();
    let mut runs = Runs { dir: dir.clone(), mpc: vec![], att: vec![] };
    for mpc in [true, false] {
        for seed in SEEDS {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.env.scenario = ScenarioSpec::EmptyWalled;
            cfg.scenario.n_robots = 3;
            cfg.train.episodes = EPISODES;
            cfg.train.mpc_enabled = mpc;
            let out = dir.join(format!("{}_seed{seed}", if mpc { "att_mpc" } else { "att" }));
            let t = Instant::now();
            let res = train(&cfg.env_setup(), &cfg.train_config(), None, Some(&out)).map_err(|e| e.to_string())?;
            println!("      trained {} seed {seed}: {} episodes in {:.0} s", if mpc { "ATT_MPC" } else { "ATT" }, res.metrics.len(), t.elapsed().as_secs_f64());
            if res.metrics.len() != EPISODES {
                return Err(format!("run {} finished {} of {EPISODES} episodes", out.display(), res.metrics.len()));
            }
            if mpc {
                runs.mpc.push(res.metrics);
            } else {
                runs.att.push(res.metrics);
            }
        }
    }
    Ok(runs)
}

fn window_mean(m: &[EpisodeMetrics], lo: usize, hi: usize, f: impl Fn(&EpisodeMetrics) -> f64) -> f64 {
    let w: Vec<f64> = m.iter().filter(|e| e.episode >= lo && e.episode < hi).map(f).collect();
    w.iter().sum::<f64>() / w.len() as f64
}

fn across(runs: &[Vec<EpisodeMetrics>], lo: usize, hi: usize, f: impl Fn(&EpisodeMetrics) -> f64 + Copy) -> f64 {
    runs.iter().map(|m| window_mean(m, lo, hi, f)).sum::<f64>() / runs.len() as f64
}

// 5
fn training_trend(runs: &Runs) -> Verdict {
    let form = |e: &EpisodeMetrics| e.formation_error;
    let goals = |e: &EpisodeMetrics| e.goals_reached as f64;
    let last = across(&runs.mpc, EPISODES - 100, EPISODES, form);
    // the curves at episode 1000, smoothed over the preceding 100 episodes
    let (mf, af) = (across(&runs.mpc, 900, 1000, form), across(&runs.att, 900, 1000, form));
    let (mg, ag) = (across(&runs.mpc, 900, 1000, goals), across(&runs.att, 900, 1000, goals));
    let coll: usize = runs.mpc.iter().flatten().map(|e| e.collisions).sum();
    let ok = last < 0.5 && mf < af && mg >= ag && coll == 0;
    ensure(
        ok,
        format!(
            "(a) ATT_MPC formation error, last 100 episodes: {last:.3} m (limit 0.5); \
             (b) at episode 1000: formation ATT_MPC {mf:.3} vs ATT {af:.3} m, goals/episode ATT_MPC {mg:.3} vs ATT {ag:.3}; \
             ATT_MPC training collisions {coll}"
        ),
    )
}

// 6
fn deviation_decay(runs: &Runs) -> Verdict {
    let dev = |e: &EpisodeMetrics| e.mean_deviation_penalty;
    let per_seed: Vec<(f64, f64)> = runs.mpc.iter().map(|m| (window_mean(m, 0, 100, dev), window_mean(m, 900, 1000, dev))).collect();
    let ok = per_seed.iter().all(|(early, late)| late < early);
    let text: Vec<String> =
        per_seed.iter().zip(SEEDS).map(|((e, l), s)| format!("seed {s}: {e:.4} -> {l:.4}")).collect();
    ensure(ok, format!("deviation penalty, episodes 0-100 -> 900-1000: {}", text.join(", ")))
}

// 7
fn generalization(runs: &Runs) -> Verdict {
    let cfg = desk_config();
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in SEEDS {
        let ck_path = runs.dir.join(format!("att_mpc_seed{seed}/checkpoints/final.ckpt"));
        let ck = Checkpoint::load(&ck_path).map_err(|e| e.to_string())?;
        let agent = Agent::from_checkpoint(&ck, &SacConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).map_err(|e| e.to_string())?;
        let ec = EvalConfig { trials: 50, seed: 70 + seed, mpc_enabled: true, ..Default::default() };
        let out = generalize_n_robots(&cfg.env_setup(), 5, &PolicySpec::Actor(Arc::new(agent.actor)), &ec).map_err(|e| e.to_string())?;
        let r = &out.report;
        let coll = out.rows.iter().filter(|r| r.outcome == Outcome::Collision).count();
        ok &= coll == 0 && (r.success_rate + r.timeout_rate - 1.0).abs() < 1e-12;
        lines.push(format!("seed {seed}: {coll} collisions, success {:.2} + timeout {:.2}", r.success_rate, r.timeout_rate));
    }
    ensure(ok, format!("n=5, 50 episodes each, MPC on: {}", lines.join("; ")))
}

// 8
fn permutation_invariance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ps = ParamSet::new();
    let critic = AttentionCritic::new(SacConfig::default().critic_shape(), &mut ps, &mut rng).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(3..=8);
        let obs: Vec<[f64; 52]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0))).collect();
        let act: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let agent = rng.random_range(0..n);
        let mut others: Vec<usize> = (0..n).filter(|&j| j != agent).collect();
        others.shuffle(&mut rng);
        let order: Vec<usize> = std::iter::once(agent).chain(others).collect();
        let obs_p: Vec<_> = order.iter().map(|&i| obs[i]).collect();
        let act_p: Vec<_> = order.iter().map(|&i| act[i]).collect();
        for which in [1, 2] {
            let q = critic.critic_q(&ps, &obs, &act, agent, which).map_err(|e| e.to_string())?;
            let qp = critic.critic_q(&ps, &obs_p, &act_p, 0, which).map_err(|e| e.to_string())?;
            worst = worst.max((q - qp).abs());
        }
    }
    ensure(worst <= 1e-12, format!("1000 tuples, n in 3..=8, both heads: max |dQ| {worst:.1e} (limit 1e-12)"))
}

// 9
fn formation_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(3..=8);
        let poses: Vec<Pose2D> =
            (0..n).map(|_| Pose2D::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-3.0..3.0))).collect();
        let d_ref = rng.random_range(0.5..2.0);
        let world = WorldState::new(poses.clone(), vec![], Arena::square(10.0), Vec2::zeros(), SimParams::default()).map_err(|e| e.to_string())?;
        let module = formation_error(&world, &NeighborAssignment::ring(n).unwrap(), d_ref);
        let mut sum = 0.0;
        for i in 0..n {
            let (a, b) = (poses[i], poses[(i + 1) % n]);
            let (dx, dy) = (a.x - b.x, a.y - b.y);
            sum += ((dx * dx + dy * dy).sqrt() - d_ref).abs();
        }
        if module.to_bits() != (sum / n as f64).to_bits() {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, format!("1000 random worlds, {mismatches} bitwise mismatches"))
}

// 10
fn determinism() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_safenav");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = workspace_file("configs/desk.toml");
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin).args(args).env_remove("SAFENAV_OUTPUT_ROOT").output().map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("safenav {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
        }
    };
    let mut compared = 0;
    for k in 0..2 {
        let d = tmp.path().join(format!("train{k}"));
        run(&["train", "--config", config.to_str().unwrap(), "--seed", "7", "--set", "train.episodes=4", "--set", "train.warmup_steps=300", "--out", d.to_str().unwrap()])?;
        let e = tmp.path().join(format!("eval{k}"));
        let ck = d.join("checkpoints/final.ckpt");
        run(&["eval", "--config", config.to_str().unwrap(), "--checkpoint", ck.to_str().unwrap(), "--scenario", "random-obstacles:2", "--trials", "3", "--seed", "5", "--emit-plot-data", "--jobs", "2", "--out", e.to_str().unwrap()])?;
    }
    for f in ["train{}/metrics.csv", "train{}/checkpoints/final.ckpt", "eval{}/trials.csv", "eval{}/steps.csv", "eval{}/training_curves.csv", "eval{}/summary.json"] {
        let a = std::fs::read(tmp.path().join(f.replace("{}", "0"))).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(tmp.path().join(f.replace("{}", "1"))).map_err(|e| format!("{f}: {e}"))?;
        if a != b {
            return Err(format!("{} differs between identical runs", f.replace("{}", "N")));
        }
        compared += 1;
    }
    Ok(format!("train and eval CLI runs repeated with the same seed: {compared} output files byte-identical"))
}

fn main() {
    let suite_start = Instant::now();
    let only: Option<BTreeSet<usize>> = std::env::var("SAFENAV_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |k: usize| only.as_ref().is_none_or(|o| o.contains(&k));
    let names = [
        "dynamics exactness",
        "gradient suite",
        "filter pass-through",
        "filter safety with untrained policy",
        "training-dynamics trend",
        "deviation-penalty decay",
        "generalization to 5 robots",
        "critic permutation invariance",
        "formation-error oracle",
        "determinism",
    ];
    let mut results: Vec<(usize, Option<Verdict>, f64)> = Vec::new();
    let guard = |f: &mut dyn FnMut() -> Verdict| -> Verdict {
        match panic::catch_unwind(AssertUnwindSafe(f)) {
            Ok(v) => v,
            Err(p) => Err(format!(
                "panicked: {}",
                p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            )),
        }
    };
    let mut record = |k: usize, f: &mut dyn FnMut() -> Verdict| {
        if !wanted(k) {
            results.push((k, None, 0.0));
            return;
        }
        let t = Instant::now();
        let v = guard(f);
        let secs = t.elapsed().as_secs_f64();
        let (tag, msg) = match &v {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        println!("[{tag}] criterion {k:>2} ({}): {msg} [{secs:.1} s]", names[k - 1]);
        results.push((k, Some(v), secs));
    };
    record(1, &mut dynamics_exactness);
    record(2, &mut gradient_suite);
    record(3, &mut filter_pass_through);
    record(4, &mut filter_safety_random_policy);
    let runs: Option<Result<Runs, String>> = [5, 6, 7].iter().any(|&k| wanted(k)).then(|| {
        println!("      training 3 seeds x {EPISODES} episodes each for ATT_MPC and ATT");
        match panic::catch_unwind(training_runs) {
            Ok(r) => r,
            Err(_) => Err("training panicked".to_string()),
        }
    });
    let with_runs = |f: fn(&Runs) -> Verdict| match &runs {
        Some(Ok(r)) => f(r),
        Some(Err(e)) => Err(format!("training failed: {e}")),
        None => Err("training did not run".into()),
    };
    record(5, &mut || with_runs(training_trend));
    record(6, &mut || with_runs(deviation_decay));
    record(7, &mut || with_runs(generalization));
    record(8, &mut permutation_invariance);
    record(9, &mut formation_oracle);
    record(10, &mut determinism);

    let passed = results.iter().filter(|r| matches!(r.1, Some(Ok(_)))).count();
    let failed = results.iter().filter(|r| matches!(r.1, Some(Err(_)))).count();
    let skipped = results.iter().filter(|r| r.1.is_none()).count();
    let total = suite_start.elapsed().as_secs_f64();
    println!("acceptance: {passed} passed, {failed} failed, {skipped} skipped [{total:.0} s]");
    if failed > 0 {
        std::process::exit(1);
    }
}
