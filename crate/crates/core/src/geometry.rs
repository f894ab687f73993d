//! Planar primitives: points, the two supported norms, and the polygon
//! predicates used by rasterization.

use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn euclid(a: Point) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Norm on the model space E = R².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    #[inline]
    pub fn norm(self, v: Point) -> f64 {
        match self {
            Norm::L1 => v[0].abs() + v[1].abs(),
            Norm::L2 => euclid(v),
        }
    }

    /// Dual norm on E*, used for gradients and sup norms of E*-valued fields.
    #[inline]
    pub fn dual(self, v: Point) -> f64 {
        match self {
            Norm::L1 => v[0].abs().max(v[1].abs()),
            Norm::L2 => euclid(v),
        }
    }

    /// Neighbourhood order used when a domain spec does not set one.
    pub fn default_neighborhood(self) -> u32 {
        match self {
            Norm::L1 => 1,
            Norm::L2 => 2,
        }
    }
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn dist_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 == 0.0 {
        0.0
    } else {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    };
    euclid(sub(p, lerp(a, b, t)))
}

/// Even-odd point-in-polygon test. Points on the boundary may go either way;
/// callers pair this with a clearance test.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        s += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * s
}

#[inline]
fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) - 1e-15
        && p[0] <= a[0].max(b[0]) + 1e-15
        && p[1] >= a[1].min(b[1]) - 1e-15
        && p[1] <= a[1].max(b[1]) + 1e-15
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Closed polygon edges as segments.
pub fn polygon_edges(poly: &[Point]) -> impl Iterator<Item = [Point; 2]> + '_ {
    let n = poly.len();
    (0..n).map(move |i| [poly[i], poly[(i + 1) % n]])
}

/// True when no two non-adjacent edges of the closed polygon meet.
pub fn polygon_is_simple(poly: &[Point]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a1, a2) = (poly[i], poly[(i + 1) % n]);
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (b1, b2) = (poly[j], poly[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_and_duals() {
        let v = [3.0, -4.0];
        assert_eq!(Norm::L1.norm(v), 7.0);
        assert_eq!(Norm::L2.norm(v), 5.0);
        assert_eq!(Norm::L1.dual(v), 4.0);
        assert_eq!(Norm::L2.dual(v), 5.0);
    }

    #[test]
    fn polygon_predicates() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(point_in_polygon([0.5, 0.5], &sq));
        assert!(!point_in_polygon([1.5, 0.5], &sq));
        assert!((signed_area(&sq) - 1.0).abs() < 1e-15);
        assert!(polygon_is_simple(&sq));
        let bowtie = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(!polygon_is_simple(&bowtie));
    }

    #[test]
    fn segment_distance_and_crossing() {
        assert!((dist_to_segment([0.5, 1.0], [0.0, 0.0], [1.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((dist_to_segment([2.0, 0.0], [0.0, 0.0], [1.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!(segments_intersect([0.0, -1.0], [0.0, 1.0], [-1.0, 0.0], [1.0, 0.0]));
        assert!(!segments_intersect([0.0, 0.5], [1.0, 0.5], [0.0, 0.0], [1.0, 0.0]));
        // touching at an endpoint counts
        assert!(segments_intersect([0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [2.0, 0.0]));
    }
}
