//! Planar vectors and the corridor/obstacle geometry.
//!
//! `x` runs across the corridor (walls at `x = ±width/2`), `y` along it.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::params::PedParams;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// Unit vector, or `None` below `eps`.
    pub fn normalized(self, eps: f64) -> Option<Vec2> {
        let n = self.norm();
        (n > eps).then(|| self * (1.0 / n))
    }

    /// Signed angle from `self` to `o`, in `[-pi, pi]`.
    pub fn angle_to(self, o: Vec2) -> f64 {
        self.cross(o).atan2(self.dot(o))
    }

    pub fn mirror_x(self) -> Vec2 {
        Vec2::new(-self.x, self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Isosceles triangle with its tip pointing against the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub tip: Vec2,
    pub left: Vec2,
    pub right: Vec2,
}

impl Obstacle {
    pub fn new(mu: f64, params: &PedParams) -> Self {
        let h = params.obstacle_height();
        let half = params.base_length / 2.0;
        Self {
            tip: Vec2::new(mu, 0.0),
            left: Vec2::new(mu - half, h),
            right: Vec2::new(mu + half, h),
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let s1 = (self.left - self.tip).cross(p - self.tip);
        let s2 = (self.right - self.left).cross(p - self.left);
        let s3 = (self.tip - self.right).cross(p - self.right);
        let neg = s1 < 0.0 || s2 < 0.0 || s3 < 0.0;
        let pos = s1 > 0.0 || s2 > 0.0 || s3 > 0.0;
        !(neg && pos)
    }

    /// Closest point on the boundary and whether `p` lies inside.
    pub fn closest_point(&self, p: Vec2) -> (Vec2, bool) {
        let candidates = [
            closest_on_segment(p, self.tip, self.left),
            closest_on_segment(p, self.left, self.right),
            closest_on_segment(p, self.right, self.tip),
        ];
        let best = candidates
            .into_iter()
            .min_by(|a, b| (*a - p).norm_sq().total_cmp(&(*b - p).norm_sq()))
            .expect("three edges");
        (best, self.contains(p))
    }
}

pub fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    a + ab * t
}

/// Closest point on the nearer corridor wall.
pub fn closest_wall_point(p: Vec2, params: &PedParams) -> Vec2 {
    let half = params.corridor_width / 2.0;
    if p.x >= 0.0 {
        Vec2::new(half, p.y)
    } else {
        Vec2::new(-half, p.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closest_point_examples() {
        let p = PedParams::default();
        let mu = 0.7;
        let obs = Obstacle::new(mu, &p);
        let (c, inside) = obs.closest_point(Vec2::new(mu, -1.0));
        assert_eq!(c, Vec2::new(mu, 0.0));
        assert!(!inside);
        let h = 5f64.sqrt();
        let (c, _) = obs.closest_point(Vec2::new(mu, h + 1.0));
        assert_relative_eq!(c.x, mu, epsilon = 1e-12);
        assert_relative_eq!(c.y, h, epsilon = 1e-12);
        assert_eq!(closest_wall_point(Vec2::new(5.0 - 0.3, 0.0), &p), Vec2::new(5.0, 0.0));
        assert_eq!(closest_wall_point(Vec2::new(-4.0, 3.0), &p), Vec2::new(-5.0, 3.0));
    }

    #[test]
    fn inside_detection() {
        let obs = Obstacle::new(0.0, &PedParams::default());
        assert!(obs.contains(Vec2::new(0.0, 1.0)));
        assert!(!obs.contains(Vec2::new(0.0, -0.1)));
        assert!(!obs.contains(Vec2::new(1.9, 0.5)));
        let (c, inside) = obs.closest_point(Vec2::new(0.0, 2.0));
        assert!(inside);
        assert_relative_eq!(c.y, 5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn angle_is_signed() {
        let a = Vec2::new(0.0, 1.0);
        assert_relative_eq!(a.angle_to(Vec2::new(-1.0, 0.0)), std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(a.angle_to(Vec2::new(1.0, 0.0)), -std::f64::consts::FRAC_PI_2);
        assert_eq!(Vec2::ZERO.angle_to(a), 0.0);
    }
}
