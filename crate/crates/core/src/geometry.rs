//! Obstacle shapes, the walled arena, and the ray/distance queries the
//! simulator, lidar and safety filter share.
//!
//! Every shape answers three questions: signed distance from a point to its
//! surface, the closest surface point, and the first non-negative hit
//! distance along a ray. Wall segments are rectangles of the given thickness
//! centered on the segment.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::kinematics::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Obstacle {
    Cylinder {
        center: [f64; 2],
        radius: f64,
    },
    Box {
        center: [f64; 2],
        half_extents: [f64; 2],
        #[serde(default)]
        rotation: f64,
    },
    WallSegment {
        start: [f64; 2],
        end: [f64; 2],
        thickness: f64,
    },
    DynamicCylinder {
        center: [f64; 2],
        radius: f64,
        velocity: [f64; 2],
    },
}

/// Oriented rectangle in canonical form.
#[derive(Debug, Clone, Copy)]
struct Rect {
    center: Vec2,
    half: Vec2,
    cos: f64,
    sin: f64,
}

impl Rect {
    fn to_local(&self, p: Vec2) -> Vec2 {
        let d = p - self.center;
        Vec2::new(self.cos * d.x + self.sin * d.y, -self.sin * d.x + self.cos * d.y)
    }

    fn to_world_dir(&self, d: Vec2) -> Vec2 {
        Vec2::new(self.cos * d.x - self.sin * d.y, self.sin * d.x + self.cos * d.y)
    }

    fn signed_distance(&self, p: Vec2) -> f64 {
        let q = self.to_local(p);
        let dx = q.x.abs() - self.half.x;
        let dy = q.y.abs() - self.half.y;
        let outside = Vec2::new(dx.max(0.0), dy.max(0.0)).norm();
        outside + dx.max(dy).min(0.0)
    }

    fn closest_point(&self, p: Vec2) -> Vec2 {
        let q = self.to_local(p);
        let mut c = Vec2::new(q.x.clamp(-self.half.x, self.half.x), q.y.clamp(-self.half.y, self.half.y));
        if q.x.abs() <= self.half.x && q.y.abs() <= self.half.y {
            // inside: project to the nearest face
            if self.half.x - q.x.abs() < self.half.y - q.y.abs() {
                c.x = self.half.x.copysign(q.x);
            } else {
                c.y = self.half.y.copysign(q.y);
            }
        }
        self.center + self.to_world_dir(c)
    }

    fn ray(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        let o = self.to_local(origin);
        let d = Vec2::new(self.cos * dir.x + self.sin * dir.y, -self.sin * dir.x + self.cos * dir.y);
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for (oi, di, hi) in [(o.x, d.x, self.half.x), (o.y, d.y, self.half.y)] {
            if di.abs() < 1e-15 {
                if oi.abs() > hi {
                    return None;
                }
            } else {
                let a = (-hi - oi) / di;
                let b = (hi - oi) / di;
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        if t1 < t0 || t1 < 0.0 {
            return None;
        }
        Some(t0.max(0.0))
    }
}

fn circle_ray(center: Vec2, radius: f64, origin: Vec2, dir: Vec2) -> Option<f64> {
    let oc = origin - center;
    let c = oc.norm_squared() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = oc.dot(&dir);
    if b >= 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    Some(-b - disc.sqrt())
}

impl Obstacle {
    pub fn cylinder(x: f64, y: f64, radius: f64) -> Self {
        Obstacle::Cylinder { center: [x, y], radius }
    }

    pub fn center(&self) -> Vec2 {
        match *self {
            Obstacle::Cylinder { center, .. }
            | Obstacle::Box { center, .. }
            | Obstacle::DynamicCylinder { center, .. } => Vec2::from(center),
            Obstacle::WallSegment { start, end, .. } => (Vec2::from(start) + Vec2::from(end)) * 0.5,
        }
    }

    pub fn velocity(&self) -> Vec2 {
        match *self {
            Obstacle::DynamicCylinder { velocity, .. } => Vec2::from(velocity),
            _ => Vec2::zeros(),
        }
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self, Obstacle::DynamicCylinder { .. })
    }

    /// Radius of the smallest disc around [`center`](Self::center) that
    /// contains the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Obstacle::Cylinder { radius, .. } | Obstacle::DynamicCylinder { radius, .. } => radius,
            Obstacle::Box { half_extents, .. } => Vec2::from(half_extents).norm(),
            Obstacle::WallSegment { start, end, thickness } => {
                Vec2::new(0.5 * (Vec2::from(end) - Vec2::from(start)).norm(), 0.5 * thickness).norm()
            }
        }
    }

    fn rect(&self) -> Option<Rect> {
        match *self {
            Obstacle::Box { center, half_extents, rotation } => Some(Rect {
                center: Vec2::from(center),
                half: Vec2::from(half_extents),
                cos: rotation.cos(),
                sin: rotation.sin(),
            }),
            Obstacle::WallSegment { start, end, thickness } => {
                let (s, e) = (Vec2::from(start), Vec2::from(end));
                let d = e - s;
                let len = d.norm();
                let (cos, sin) = if len > 0.0 { (d.x / len, d.y / len) } else { (1.0, 0.0) };
                Some(Rect {
                    center: (s + e) * 0.5,
                    half: Vec2::new(0.5 * len, 0.5 * thickness),
                    cos,
                    sin,
                })
            }
            _ => None,
        }
    }

    /// Signed distance from `p` to the obstacle surface (negative inside).
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        match *self {
            Obstacle::Cylinder { center, radius } | Obstacle::DynamicCylinder { center, radius, .. } => {
                (p - Vec2::from(center)).norm() - radius
            }
            _ => self.rect().map(|r| r.signed_distance(p)).unwrap_or(f64::INFINITY),
        }
    }

    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        match *self {
            Obstacle::Cylinder { center, radius } | Obstacle::DynamicCylinder { center, radius, .. } => {
                let c = Vec2::from(center);
                let d = p - c;
                let n = d.norm();
                if n < 1e-15 {
                    c + Vec2::new(radius, 0.0)
                } else {
                    c + d * (radius / n)
                }
            }
            _ => self.rect().map(|r| r.closest_point(p)).unwrap_or(p),
        }
    }

    /// Distance along the unit direction `dir` to the first surface hit.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        match *self {
            Obstacle::Cylinder { center, radius } | Obstacle::DynamicCylinder { center, radius, .. } => {
                circle_ray(Vec2::from(center), radius, origin, dir)
            }
            _ => self.rect().and_then(|r| r.ray(origin, dir)),
        }
    }

    /// Moves a dynamic obstacle by `velocity * dt`, reflecting its velocity
    /// off the arena walls. Static obstacles are unchanged.
    pub fn advance(&mut self, dt: f64, arena: &Arena) {
        if let Obstacle::DynamicCylinder { center, radius, velocity } = self {
            for axis in 0..2 {
                let (lo, hi) = if axis == 0 {
                    (arena.x_min + *radius, arena.x_max - *radius)
                } else {
                    (arena.y_min + *radius, arena.y_max - *radius)
                };
                let mut c = center[axis] + velocity[axis] * dt;
                if c < lo {
                    c = 2.0 * lo - c;
                    velocity[axis] = -velocity[axis];
                } else if c > hi {
                    c = 2.0 * hi - c;
                    velocity[axis] = -velocity[axis];
                }
                center[axis] = c;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Obstacle::Cylinder { center, radius } => radius > 0.0 && center.iter().all(|c| c.is_finite()),
            Obstacle::DynamicCylinder { center, radius, velocity } => {
                radius > 0.0 && center.iter().chain(velocity.iter()).all(|c| c.is_finite())
            }
            Obstacle::Box { center, half_extents, rotation } => {
                half_extents.iter().all(|h| *h > 0.0)
                    && center.iter().all(|c| c.is_finite())
                    && rotation.is_finite()
            }
            Obstacle::WallSegment { start, end, thickness } => {
                thickness > 0.0
                    && start.iter().chain(end.iter()).all(|c| c.is_finite())
                    && start != end
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidInput(format!("degenerate obstacle {self:?}")))
        }
    }
}

/// Axis-aligned rectangular arena bounded by walls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arena {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Arena {
    pub fn square(side: f64) -> Self {
        let h = 0.5 * side;
        Self {
            x_min: -h,
            x_max: h,
            y_min: -h,
            y_max: h,
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Distance from an interior point to the nearest wall (negative outside).
    pub fn wall_distance(&self, p: Vec2) -> f64 {
        (p.x - self.x_min)
            .min(self.x_max - p.x)
            .min(p.y - self.y_min)
            .min(self.y_max - p.y)
    }

    /// Nearest point on the wall boundary.
    pub fn closest_wall_point(&self, p: Vec2) -> Vec2 {
        let cands = [
            (p.x - self.x_min, Vec2::new(self.x_min, p.y)),
            (self.x_max - p.x, Vec2::new(self.x_max, p.y)),
            (p.y - self.y_min, Vec2::new(p.x, self.y_min)),
            (self.y_max - p.y, Vec2::new(p.x, self.y_max)),
        ];
        cands
            .iter()
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|c| c.1)
            .unwrap_or(p)
    }

    /// Distance along `dir` from an interior `origin` to the boundary.
    pub fn ray_exit(&self, origin: Vec2, dir: Vec2) -> f64 {
        let mut t = f64::INFINITY;
        if dir.x > 1e-15 {
            t = t.min((self.x_max - origin.x) / dir.x);
        } else if dir.x < -1e-15 {
            t = t.min((self.x_min - origin.x) / dir.x);
        }
        if dir.y > 1e-15 {
            t = t.min((self.y_max - origin.y) / dir.y);
        } else if dir.y < -1e-15 {
            t = t.min((self.y_min - origin.y) / dir.y);
        }
        t.max(0.0)
    }

    pub fn shrink(&self, margin: f64) -> Arena {
        Arena {
            x_min: self.x_min + margin,
            x_max: self.x_max - margin,
            y_min: self.y_min + margin,
            y_max: self.y_max - margin,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }
}

/// Ray hit distance against a disc, exposed for robots-as-obstacles.
pub fn disc_ray_hit(center: Vec2, radius: f64, origin: Vec2, dir: Vec2) -> Option<f64> {
    circle_ray(center, radius, origin, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylinder_queries() {
        let c = Obstacle::cylinder(1.0, 0.0, 0.2);
        assert!((c.signed_distance(Vec2::zeros()) - 0.8).abs() < 1e-12);
        assert!((c.ray_hit(Vec2::zeros(), Vec2::new(1.0, 0.0)).unwrap() - 0.8).abs() < 1e-12);
        assert!(c.ray_hit(Vec2::zeros(), Vec2::new(-1.0, 0.0)).is_none());
        assert!((c.closest_point(Vec2::zeros()) - Vec2::new(0.8, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn box_queries() {
        let b = Obstacle::Box {
            center: [2.0, 0.0],
            half_extents: [0.5, 0.25],
            rotation: 0.0,
        };
        assert!((b.signed_distance(Vec2::zeros()) - 1.5).abs() < 1e-12);
        assert!((b.ray_hit(Vec2::zeros(), Vec2::new(1.0, 0.0)).unwrap() - 1.5).abs() < 1e-12);
        assert!(b.signed_distance(Vec2::new(2.0, 0.1)) < 0.0);
        let rotated = Obstacle::Box {
            center: [2.0, 0.0],
            half_extents: [0.25, 0.5],
            rotation: std::f64::consts::FRAC_PI_2,
        };
        assert!((rotated.ray_hit(Vec2::zeros(), Vec2::new(1.0, 0.0)).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn wall_segment_is_a_thick_rectangle() {
        let w = Obstacle::WallSegment {
            start: [1.0, -1.0],
            end: [1.0, 1.0],
            thickness: 0.1,
        };
        assert!((w.signed_distance(Vec2::zeros()) - 0.95).abs() < 1e-12);
        assert!((w.ray_hit(Vec2::zeros(), Vec2::new(1.0, 0.0)).unwrap() - 0.95).abs() < 1e-12);
    }

    #[test]
    fn dynamic_cylinder_reflects() {
        let arena = Arena::square(4.0);
        let mut o = Obstacle::DynamicCylinder {
            center: [1.7, 0.0],
            radius: 0.2,
            velocity: [1.0, 0.0],
        };
        o.advance(0.2, &arena);
        match o {
            Obstacle::DynamicCylinder { center, velocity, .. } => {
                assert!((center[0] - 1.7).abs() < 1e-12);
                assert_eq!(velocity[0], -1.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn arena_ray() {
        let a = Arena::square(4.0);
        assert!((a.ray_exit(Vec2::zeros(), Vec2::new(1.0, 0.0)) - 2.0).abs() < 1e-12);
        let d = Vec2::new(1.0, 1.0).normalize();
        assert!((a.ray_exit(Vec2::zeros(), d) - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }
}
