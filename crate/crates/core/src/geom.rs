//! Planar points and polyline helpers.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    /// Rotation by +90°.
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn lerp(self, o: Point, t: f64) -> Point {
        Point::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Cumulative arc-length at each vertex (first entry 0).
pub fn cumulative_length(vertices: &[Point]) -> Vec<f64> {
    let mut out = Vec::with_capacity(vertices.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in vertices.windows(2) {
        acc += w[0].dist(w[1]);
        out.push(acc);
    }
    if vertices.is_empty() {
        out.clear();
    }
    out
}

/// Point at arc-length `s` along the polyline, clamped to its ends.
pub fn point_at_length(vertices: &[Point], cumulative: &[f64], s: f64) -> Point {
    let n = vertices.len();
    if s <= 0.0 || n == 1 {
        return vertices[0];
    }
    if s >= cumulative[n - 1] {
        return vertices[n - 1];
    }
    let k = cumulative.partition_point(|&c| c <= s).clamp(1, n - 1);
    let (a, b) = (cumulative[k - 1], cumulative[k]);
    let t = if b > a { (s - a) / (b - a) } else { 0.0 };
    vertices[k - 1].lerp(vertices[k], t)
}

/// Closest point on a polyline: `(distance, arc-length parameter, point)`.
pub fn project_onto(vertices: &[Point], cumulative: &[f64], p: Point) -> (f64, f64, Point) {
    if vertices.len() == 1 {
        return (p.dist(vertices[0]), 0.0, vertices[0]);
    }
    let mut best = (f64::INFINITY, 0.0, vertices[0]);
    for (k, w) in vertices.windows(2).enumerate() {
        let d = w[1] - w[0];
        let len2 = d.dot(d);
        let t = if len2 > 0.0 {
            ((p - w[0]).dot(d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = w[0].lerp(w[1], t);
        let dist = p.dist(q);
        if dist < best.0 {
            let s = cumulative[k] + t * (cumulative[k + 1] - cumulative[k]);
            best = (dist, s, q);
        }
    }
    best
}

pub fn distance_to_polyline(vertices: &[Point], p: Point) -> f64 {
    let cumulative = cumulative_length(vertices);
    project_onto(vertices, &cumulative, p).0
}

/// Intersection point of segments `ab` and `cd` if they cross (endpoints
/// included). Decided by orientation signs rather than the parametric
/// solve, which is unreliable for nearly collinear segments.
pub fn segment_intersection(a: Point, b: Point, c: Point, d: Point) -> Option<Point> {
    let o1 = (b - a).cross(c - a);
    let o2 = (b - a).cross(d - a);
    let o3 = (d - c).cross(a - c);
    let o4 = (d - c).cross(b - c);
    if o1 * o2 > 0.0 || o3 * o4 > 0.0 {
        return None;
    }
    if o1 == 0.0 && o2 == 0.0 {
        // Collinear: report a shared point if the extents overlap.
        let within = |p: Point, q: Point, r: Point| {
            p.x.min(q.x) <= r.x && r.x <= p.x.max(q.x) && p.y.min(q.y) <= r.y && r.y <= p.y.max(q.y)
        };
        return [c, d, a, b]
            .into_iter()
            .zip([(a, b), (a, b), (c, d), (c, d)])
            .find(|&(r, (p, q))| within(p, q, r))
            .map(|(r, _)| r);
    }
    let denom = o1 - o2;
    let t = if denom != 0.0 { (o1 / denom).clamp(0.0, 1.0) } else { 0.0 };
    Some(c.lerp(d, t))
}

/// Even-odd point-in-polygon test; the ring is implicitly closed.
pub fn point_in_polygon(ring: &[Point], p: Point) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Whether two non-adjacent segments of the polyline cross each other.
/// Closed polylines (first == last) treat the closing joint as adjacent.
pub fn self_intersects(vertices: &[Point]) -> bool {
    let n = vertices.len();
    if n < 4 {
        return false;
    }
    let closed = vertices[0] == vertices[n - 1];
    let segs = n - 1;
    // Bucket segments by bounding box on a coarse grid.
    let (mut lo, mut hi) = (vertices[0], vertices[0]);
    for v in vertices {
        lo = Point::new(lo.x.min(v.x), lo.y.min(v.y));
        hi = Point::new(hi.x.max(v.x), hi.y.max(v.y));
    }
    let buckets = ((segs as f64).sqrt().ceil() as usize).max(1);
    let sx = (hi.x - lo.x).max(f64::MIN_POSITIVE) / buckets as f64;
    let sy = (hi.y - lo.y).max(f64::MIN_POSITIVE) / buckets as f64;
    let cell = |v: f64, l: f64, s: f64| (((v - l) / s) as usize).min(buckets - 1);
    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); buckets * buckets];
    for k in 0..segs {
        let (a, b) = (vertices[k], vertices[k + 1]);
        let (i0, i1) = (cell(a.x.min(b.x), lo.x, sx), cell(a.x.max(b.x), lo.x, sx));
        let (j0, j1) = (cell(a.y.min(b.y), lo.y, sy), cell(a.y.max(b.y), lo.y, sy));
        for j in j0..=j1 {
            for i in i0..=i1 {
                grid[j * buckets + i].push(k);
            }
        }
    }
    for bucket in &grid {
        for (idx, &p) in bucket.iter().enumerate() {
            for &q in &bucket[idx + 1..] {
                let (a, b) = (p.min(q), p.max(q));
                let adjacent = b == a + 1 || (closed && a == 0 && b == segs - 1);
                if adjacent {
                    continue;
                }
                if segment_intersection(
                    vertices[a],
                    vertices[a + 1],
                    vertices[b],
                    vertices[b + 1],
                )
                .is_some()
                {
                    return true;
                }
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arc_length_lookup() {
        let v = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 2.0)];
        let c = cumulative_length(&v);
        assert_eq!(c, vec![0.0, 1.0, 3.0]);
        assert_eq!(point_at_length(&v, &c, 2.0), Point::new(1.0, 1.0));
        assert_eq!(point_at_length(&v, &c, -1.0), v[0]);
        assert_eq!(point_at_length(&v, &c, 9.0), v[2]);
        let (d, s, q) = project_onto(&v, &c, Point::new(2.0, 1.5));
        assert_eq!((d, s, q), (1.0, 2.5, Point::new(1.0, 1.5)));
    }

    #[test]
    fn polygon_membership() {
        let sq = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        assert!(point_in_polygon(&sq, Point::new(0.5, 0.5)));
        assert!(!point_in_polygon(&sq, Point::new(1.5, 0.5)));
    }

    #[test]
    fn detects_crossing() {
        let z = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        assert!(self_intersects(&z));
        let s = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.5),
            Point::new(3.0, 0.0),
        ];
        assert!(!self_intersects(&s));
        let square = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.0, 0.0),
        ];
        assert!(!self_intersects(&square));
    }

    #[test]
    fn nearly_collinear_segments_do_not_cross() {
        let a = Point::new(-0.025, -0.8000156249999976);
        let b = Point::new(-3.907985046680551e-12, -0.8);
        let c = Point::new(0.0, -0.7999999999999976);
        let d = Point::new(0.025000000000000133, -0.7999843749999976);
        assert_eq!(segment_intersection(a, b, c, d), None);
        let x = segment_intersection(
            Point::new(0.0, 0.0),
            Point::new(2.0, 2.0),
            Point::new(0.0, 2.0),
            Point::new(2.0, 0.0),
        );
        assert_eq!(x, Some(Point::new(1.0, 1.0)));
        let touch = segment_intersection(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
        );
        assert_eq!(touch, Some(Point::new(1.0, 0.0)));
    }
}
