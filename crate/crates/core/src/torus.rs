//! Points of the flat torus `R^2 / Z^2` with the unit square as fundamental domain.

use serde::{Deserialize, Serialize};

use crate::linalg::Vec2;
use crate::scalar::Scalar;

/// Canonical reduction into `[0, 1)`, rounding toward negative infinity.
#[inline]
pub fn reduce<T: Scalar>(v: T) -> T {
    let r = v - v.floor();
    // `v - floor(v)` can round up to exactly 1 for tiny negative inputs.
    if r >= T::one() || r == T::zero() {
        T::zero()
    } else {
        r
    }
}

/// Nearest representative of a coordinate difference, in `[-1/2, 1/2]`.
#[inline]
pub fn wrap_delta<T: Scalar>(d: T) -> T {
    d - d.round()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 2]", into = "[T; 2]")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> From<[T; 2]> for Point<T> {
    fn from(v: [T; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl<T: Scalar> From<Point<T>> for [T; 2] {
    fn from(p: Point<T>) -> Self {
        [p.x, p.y]
    }
}

impl<T: Scalar> Point<T> {
    /// Builds a point, reducing both coordinates mod 1.
    pub fn new(x: T, y: T) -> Self {
        Point { x: reduce(x), y: reduce(y) }
    }

    pub fn origin() -> Self {
        Point { x: T::zero(), y: T::zero() }
    }

    /// Translate by a tangent vector and reduce.
    pub fn offset(self, v: Vec2<T>) -> Self {
        Point::new(self.x + v.x, self.y + v.y)
    }

    /// Shortest lifted displacement from `self` to `other`.
    pub fn delta_to(self, other: Self) -> Vec2<T> {
        Vec2::new(wrap_delta(other.x - self.x), wrap_delta(other.y - self.y))
    }

    pub fn cast<U: Scalar>(self) -> Point<U> {
        Point { x: U::lit(self.x.as_f64()), y: U::lit(self.y.as_f64()) }
    }
}

/// Flat torus distance: minimum Euclidean distance over lattice translates.
pub fn torus_distance<T: Scalar>(p: Point<T>, q: Point<T>) -> T {
    p.delta_to(q).norm()
}

/// Bucket grid over the torus for nearest-neighbour queries against a fixed point set.
#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<Point<f64>>,
    cells: usize,
    buckets: Vec<Vec<usize>>,
}

impl PointIndex {
    pub fn new(points: Vec<Point<f64>>) -> Self {
        let cells = ((points.len() as f64).sqrt() / 2.0).ceil().clamp(1.0, 512.0) as usize;
        let mut buckets = vec![Vec::new(); cells * cells];
        for (i, p) in points.iter().enumerate() {
            buckets[Self::cell_of(cells, *p)].push(i);
        }
        PointIndex { points, cells, buckets }
    }

    fn coord(cells: usize, v: f64) -> usize {
        ((v * cells as f64) as usize).min(cells - 1)
    }

    fn cell_of(cells: usize, p: Point<f64>) -> usize {
        Self::coord(cells, p.y) * cells + Self::coord(cells, p.x)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and distance of the nearest indexed point accepted by `keep`
    /// (lowest index on ties).
    pub fn nearest_filtered(&self, q: Point<f64>, keep: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let consider = |i: usize, best: &mut Option<(usize, f64)>| {
            if !keep(i) {
                return;
            }
            let d = torus_distance(q, self.points[i]);
            match *best {
                Some((bi, bd)) if d > bd || (d == bd && i > bi) => {}
                _ => *best = Some((i, d)),
            }
        };
        let n = self.cells as i64;
        if n < 5 {
            for i in 0..self.points.len() {
                consider(i, &mut best);
            }
            return best;
        }
        let (cx, cy) = (Self::coord(self.cells, q.x) as i64, Self::coord(self.cells, q.y) as i64);
        let h = 1.0 / self.cells as f64;
        for ring in 0..=(n / 2) {
            for dy in -ring..=ring {
                for dx in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue;
                    }
                    let c = (cy + dy).rem_euclid(n) * n + (cx + dx).rem_euclid(n);
                    for &i in &self.buckets[c as usize] {
                        consider(i, &mut best);
                    }
                }
            }
            if let Some((_, d)) = best {
                // anything outside the searched rings is at least ring·h away
                if d <= ring as f64 * h {
                    return best;
                }
            }
            if 2 * ring + 1 >= n {
                break;
            }
        }
        best
    }

    pub fn nearest(&self, q: Point<f64>) -> Option<(usize, f64)> {
        self.nearest_filtered(q, |_| true)
    }

    /// Indices of all points within torus distance `radius` of `q`, ascending.
    pub fn within(&self, q: Point<f64>, radius: f64) -> Vec<usize> {
        let n = self.cells as i64;
        let m = (radius * self.cells as f64).ceil() as i64 + 1;
        let mut out: Vec<usize> = if 2 * m + 1 >= n {
            (0..self.points.len()).collect()
        } else {
            let (cx, cy) = (Self::coord(self.cells, q.x) as i64, Self::coord(self.cells, q.y) as i64);
            let mut v = Vec::new();
            for dy in -m..=m {
                for dx in -m..=m {
                    let c = (cy + dy).rem_euclid(n) * n + (cx + dx).rem_euclid(n);
                    v.extend_from_slice(&self.buckets[c as usize]);
                }
            }
            v
        };
        out.retain(|&i| torus_distance(q, self.points[i]) <= radius);
        out.sort_unstable();
        out
    }
}
