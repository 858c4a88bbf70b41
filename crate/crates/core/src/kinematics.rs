//! Unicycle kinematics and the action box.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub type Vec2 = nalgebra::Vector2<f64>;

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let two_pi = 2.0 * PI;
    let mut t = theta % two_pi;
    if t <= -PI {
        t += two_pi;
    } else if t > PI {
        t -= two_pi;
    }
    t
}

/// Robot configuration `[x, y, theta]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Control `[v, w]`: linear (m/s) and angular (rad/s) velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionCmd {
    pub v: f64,
    pub w: f64,
}

impl ActionCmd {
    pub const ZERO: ActionCmd = ActionCmd { v: 0.0, w: 0.0 };

    pub fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.w.is_finite()
    }
}

/// The admissible action box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionBounds {
    pub v_min: f64,
    pub v_max: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for ActionBounds {
    /// TurtleBot3 Burger limits.
    fn default() -> Self {
        Self {
            v_min: 0.0,
            v_max: 0.22,
            w_min: -2.84,
            w_max: 2.84,
        }
    }
}

impl ActionBounds {
    pub fn clamp(&self, a: ActionCmd) -> ActionCmd {
        ActionCmd {
            v: a.v.clamp(self.v_min, self.v_max),
            w: a.w.clamp(self.w_min, self.w_max),
        }
    }

    pub fn contains(&self, a: ActionCmd) -> bool {
        a.v >= self.v_min && a.v <= self.v_max && a.w >= self.w_min && a.w <= self.w_max
    }

    pub fn v_width(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn w_width(&self) -> f64 {
        self.w_max - self.w_min
    }

    /// Affine map from the squashed policy output in `[-1, 1]^2` onto the box.
    pub fn from_unit(&self, u: [f64; 2]) -> ActionCmd {
        ActionCmd {
            v: self.v_min + 0.5 * (u[0] + 1.0) * self.v_width(),
            w: self.w_min + 0.5 * (u[1] + 1.0) * self.w_width(),
        }
    }

    /// Inverse of [`from_unit`](Self::from_unit).
    pub fn to_unit(&self, a: ActionCmd) -> [f64; 2] {
        [
            2.0 * (a.v - self.v_min) / self.v_width() - 1.0,
            2.0 * (a.w - self.w_min) / self.w_width() - 1.0,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.v_min, self.v_max, self.w_min, self.w_max]
            .iter()
            .all(|x| x.is_finite())
            && self.v_min < self.v_max
            && self.w_min < self.w_max;
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidInput(format!("bad action bounds {self:?}")))
        }
    }
}

/// One step of the discrete-time unicycle model.
pub fn step_unicycle(pose: Pose2D, action: ActionCmd, dt: f64) -> Result<Pose2D> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if !pose.is_finite() || !action.is_finite() {
        return Err(SimError::InvalidInput(format!(
            "non-finite pose {pose:?} or action {action:?}"
        )));
    }
    Ok(unicycle(pose, action, dt))
}

/// Unchecked variant of [`step_unicycle`] used inside solver loops.
#[inline]
pub fn unicycle(pose: Pose2D, action: ActionCmd, dt: f64) -> Pose2D {
    let (s, c) = pose.theta.sin_cos();
    Pose2D {
        x: pose.x + c * action.v * dt,
        y: pose.y + s * action.v * dt,
        theta: wrap_angle(pose.theta + action.w * dt),
    }
}
