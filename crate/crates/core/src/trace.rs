//! Per-step episode traces written as CSV, one row per robot per step.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kinematics::ActionCmd;
use crate::world::{EpisodeStatus, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub robot: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v_rl: f64,
    pub w_rl: f64,
    pub v: f64,
    pub w: f64,
    pub goal_x: f64,
    pub goal_y: f64,
    pub status: String,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the state after a step together with the proposed and
    /// executed actions that produced it.
    pub fn record(&mut self, world: &WorldState, proposed: &[ActionCmd], executed: &[ActionCmd], status: EpisodeStatus) {
        for (i, r) in world.robots.iter().enumerate() {
            let a_rl = proposed.get(i).copied().unwrap_or(ActionCmd::ZERO);
            let a = executed.get(i).copied().unwrap_or(ActionCmd::ZERO);
            self.rows.push(TraceRow {
                step: world.step_count,
                robot: i,
                x: r.pose.x,
                y: r.pose.y,
                theta: r.pose.theta,
                v_rl: a_rl.v,
                w_rl: a_rl.w,
                v: a.v,
                w: a.w,
                goal_x: world.centroid_goal.x,
                goal_y: world.centroid_goal.y,
                status: status.state.as_str().to_string(),
            });
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
        Ok(Self { rows })
    }
}
