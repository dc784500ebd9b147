//! Small fixed-size vector math used throughout the pipeline.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 1e-300 && n.is_finite()).then(|| self / n)
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

/// Signed doubled area of the 2D triangle `(a, b, p)`, positive when `p` is
/// on the clockwise side of `a -> b` in a y-down image frame.
///
/// Endpoints are put in a canonical order before evaluating so that the two
/// triangles sharing an edge see exactly negated values on it.
pub fn edge_function(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    let swap = (b.x, b.y) < (a.x, a.y);
    let (a, b) = if swap { (b, a) } else { (a, b) };
    let e = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    if swap {
        -e
    } else {
        e
    }
}

/// Top-left fill rule for a triangle with positive [`edge_function`] area.
pub fn is_top_left(a: Vec2, b: Vec2) -> bool {
    let dy = b.y - a.y;
    let dx = b.x - a.x;
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

/// Screen-space coverage of one triangle with barycentric weights.
///
/// Calls `visit(x, y, [w0, w1, w2])` for every pixel `(x, y)` inside the
/// `width × height` frame whose center `(x + 0.5, y + 0.5)` is covered under
/// the top-left rule. Winding is normalized, so both orientations are drawn.
pub fn raster_triangle(
    pts: [Vec2; 3],
    width: usize,
    height: usize,
    mut visit: impl FnMut(usize, usize, [f64; 3]),
) {
    let [mut p0, mut p1, p2] = pts;
    let mut area = edge_function(p0, p1, p2);
    if !area.is_finite() || area == 0.0 {
        return;
    }
    let mut flipped = false;
    if area < 0.0 {
        std::mem::swap(&mut p0, &mut p1);
        area = -area;
        flipped = true;
    }
    let min_x = p0.x.min(p1.x).min(p2.x);
    let max_x = p0.x.max(p1.x).max(p2.x);
    let min_y = p0.y.min(p1.y).min(p2.y);
    let max_y = p0.y.max(p1.y).max(p2.y);
    if max_x < 0.0 || max_y < 0.0 || min_x > width as f64 || min_y > height as f64 {
        return;
    }
    let x0 = (min_x - 0.5).floor().max(0.0) as usize;
    let y0 = (min_y - 0.5).floor().max(0.0) as usize;
    let x1 = ((max_x - 0.5).ceil().max(0.0) as usize).min(width.saturating_sub(1));
    let y1 = ((max_y - 0.5).ceil().max(0.0) as usize).min(height.saturating_sub(1));

    let tl12 = is_top_left(p1, p2);
    let tl20 = is_top_left(p2, p0);
    let tl01 = is_top_left(p0, p1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
            let e0 = edge_function(p1, p2, p);
            let e1 = edge_function(p2, p0, p);
            let e2 = edge_function(p0, p1, p);
            let inside = (e0 > 0.0 || (e0 == 0.0 && tl12))
                && (e1 > 0.0 || (e1 == 0.0 && tl20))
                && (e2 > 0.0 || (e2 == 0.0 && tl01));
            if inside {
                let (w0, w1, w2) = (e0 / area, e1 / area, e2 / area);
                let w = if flipped { [w1, w0, w2] } else { [w0, w1, w2] };
                visit(x, y, w);
            }
        }
    }
}
