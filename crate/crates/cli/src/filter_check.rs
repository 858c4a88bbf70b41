//! `safenav filter-check`: runs the NMPC optimizer on standalone problems.
//!
//! Input CSV, one problem per row (header required):
//!
//! ```text
//! x,y,theta,v_rl,w_rl,n1_x,n1_y,n2_x,n2_y,obs_x,obs_y
//! ```
//!
//! Anchor fields (neighbor centers, closest hazard point) may be left empty
//! when absent. No arena box is applied. Output CSV:
//!
//! ```text
//! row,v,w,cost,converged,iters
//! ```
//!
//! `row` counts data rows from 1. An empty input file gives an empty output
//! file. `--validate-only` checks the header and parses every row without
//! solving.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use safenav_core::mpc::{solve, MpcConfig, MpcProblem};
use safenav_core::{ActionCmd, Pose2D, Vec2};

use crate::ConfigArgs;

pub const INPUT_COLUMNS: [&str; 11] = ["x", "y", "theta", "v_rl", "w_rl", "n1_x", "n1_y", "n2_x", "n2_y", "obs_x", "obs_y"];

#[derive(Debug, Clone, Args)]
pub struct FilterCheckArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub input: PathBuf,
    /// Required unless `--validate-only`.
    #[arg(long, required_unless_present = "validate_only")]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub validate_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct InputRow {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v_rl: f64,
    pub w_rl: f64,
    pub n1_x: Option<f64>,
    pub n1_y: Option<f64>,
    pub n2_x: Option<f64>,
    pub n2_y: Option<f64>,
    pub obs_x: Option<f64>,
    pub obs_y: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputRow {
    pub row: usize,
    pub v: f64,
    pub w: f64,
    pub cost: f64,
    pub converged: bool,
    pub iters: usize,
}

fn point(x: Option<f64>, y: Option<f64>, what: &str) -> Result<Option<Vec2>> {
    match (x, y) {
        (Some(x), Some(y)) => Ok(Some(Vec2::new(x, y))),
        (None, None) => Ok(None),
        _ => bail!("{what} needs both coordinates or neither"),
    }
}

impl InputRow {
    pub fn problem(&self, config: &MpcConfig) -> Result<MpcProblem> {
        let vals = [self.x, self.y, self.theta, self.v_rl, self.w_rl];
        if vals.iter().any(|v| !v.is_finite()) {
            bail!("non-finite pose or action");
        }
        Ok(MpcProblem {
            x0: Pose2D::new(self.x, self.y, self.theta),
            a_rl: config.bounds.clamp(ActionCmd::new(self.v_rl, self.w_rl)),
            neighbor_positions: [point(self.n1_x, self.n1_y, "neighbor 1")?, point(self.n2_x, self.n2_y, "neighbor 2")?],
            obstacle_position: point(self.obs_x, self.obs_y, "obstacle")?,
            config: *config,
        })
    }
}

fn check_header(headers: &csv::StringRecord) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != INPUT_COLUMNS {
        bail!("header must be {:?}, got {:?}", INPUT_COLUMNS.join(","), got.join(","));
    }
    Ok(())
}

/// Parses and (unless `validate_only`) solves every row of `input`.
pub fn check(input: &[u8], config: &MpcConfig, validate_only: bool) -> Result<Vec<OutputRow>> {
    if input.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(vec![]);
    }
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(rd.headers()?)?;
    let mut out = Vec::new();
    for (i, rec) in rd.deserialize::<InputRow>().enumerate() {
        let row = i + 1;
        let parsed = rec.map_err(|e| anyhow!("row {row}: {e}"))?;
        let problem = parsed.problem(config).with_context(|| format!("row {row}"))?;
        if validate_only {
            continue;
        }
        let sol = solve(&problem, None);
        let a = sol.first_action();
        out.push(OutputRow { row, v: a.v, w: a.w, cost: sol.cost, converged: sol.converged, iters: sol.iters });
    }
    Ok(out)
}

pub fn write_output(path: &Path, rows: &[OutputRow], empty_input: bool) -> Result<()> {
    if empty_input {
        fs::write(path, "")?;
        return Ok(());
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["row", "v", "w", "cost", "converged", "iters"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &FilterCheckArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let mut mpc = cfg.mpc;
    mpc.dt = cfg.sim.dt;
    mpc.bounds = cfg.sim.bounds;
    mpc.robot_radius = cfg.sim.robot_radius;
    let input = fs::read(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let rows = check(&input, &mpc, args.validate_only).with_context(|| format!("in {}", args.input.display()))?;
    if args.validate_only {
        println!("{}: schema ok", args.input.display());
        return Ok(());
    }
    let output = args.output.as_ref().expect("clap requires --output without --validate-only");
    let empty = input.iter().all(|b| b.is_ascii_whitespace());
    write_output(output, &rows, empty)?;
    println!("filtered {} rows into {}", rows.len(), output.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_space_passes_through() {
        let csv = "x,y,theta,v_rl,w_rl,n1_x,n1_y,n2_x,n2_y,obs_x,obs_y\n0,0,0,0.15,0.4,,,,,,\n";
        let rows = check(csv.as_bytes(), &MpcConfig::default(), false).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].v - 0.15).abs() < 1e-3 && (rows[0].w - 0.4).abs() < 1e-3);
    }

    #[test]
    fn malformed_row_is_named() {
        let csv = "x,y,theta,v_rl,w_rl,n1_x,n1_y,n2_x,n2_y,obs_x,obs_y\n0,0,0,0.1,0,,,,,,\n0,zero,0,0.1,0,,,,,,\n";
        let err = format!("{:#}", check(csv.as_bytes(), &MpcConfig::default(), false).unwrap_err());
        assert!(err.contains("row 2"), "{err}");
        let half = "x,y,theta,v_rl,w_rl,n1_x,n1_y,n2_x,n2_y,obs_x,obs_y\n0,0,0,0.1,0,1,,,,,\n";
        assert!(format!("{:#}", check(half.as_bytes(), &MpcConfig::default(), true).unwrap_err()).contains("row 1"));
    }

    #[test]
    fn header_only_and_empty() {
        let h = INPUT_COLUMNS.join(",") + "\n";
        assert!(check(h.as_bytes(), &MpcConfig::default(), true).unwrap().is_empty());
        assert!(check(b"", &MpcConfig::default(), false).unwrap().is_empty());
        assert!(check(b"x,y\n", &MpcConfig::default(), true).is_err());
    }
}
