//! Windows, points, point patterns and the distance / pair-counting
//! primitives shared by every model and sampler.
//!
//! Dimension is a runtime property of a [`Window`]; patterns store their
//! coordinates in one flat buffer so samplers can push and drop points
//! without per-point allocation.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use rand::Rng;
use smallvec::SmallVec;

use crate::error::GeometryError;

/// Below this many points the grid accelerator costs more than it saves.
pub const GRID_MIN_POINTS: usize = 32;

/// Axis-aligned box `[lower, upper]` in `R^d`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Window {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Window {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, GeometryError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (axis, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(GeometryError::DegenerateWindow { axis, lower: lo, upper: hi });
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^2`.
    pub fn square(lo: f64, hi: f64) -> Result<Self, GeometryError> {
        Self::new(vec![lo, lo], vec![hi, hi])
    }

    /// `[-0.5, 0.5]^2`, the window used throughout the experiments.
    pub fn unit_square_centered() -> Self {
        Self::square(-0.5, 0.5).expect("valid window")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Lebesgue measure `|S|`.
    pub fn area(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    /// Closed-box membership.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&c, (&lo, &hi))| lo <= c && c <= hi)
    }
}

/// A location in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(SmallVec<[f64; 3]>);

impl Point {
    pub fn new(coords: &[f64]) -> Self {
        Self(SmallVec::from_slice(coords))
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Self(SmallVec::from_slice(&[x, y]))
    }

    /// The origin of `R^d`.
    pub fn origin(dim: usize) -> Self {
        Self(SmallVec::from_elem(0.0, dim))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Self(SmallVec::from_vec(v))
    }
}

/// A finite configuration of points inside a window.
///
/// Point identity is positional. Removal uses `swap_remove`, so the order of
/// the remaining points is not preserved.
#[derive(Clone, PartialEq)]
pub struct PointPattern {
    window: Arc<Window>,
    coords: Vec<f64>,
}

impl fmt::Debug for PointPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointPattern")
            .field("n", &self.len())
            .field("points", &self.iter().collect::<Vec<_>>())
            .finish()
    }
}

impl PointPattern {
    pub fn empty(window: Arc<Window>) -> Self {
        Self { window, coords: Vec::new() }
    }

    pub fn with_capacity(window: Arc<Window>, n: usize) -> Self {
        let dim = window.dim();
        Self { window, coords: Vec::with_capacity(n * dim) }
    }

    /// Builds a pattern, rejecting points outside the window or of the
    /// wrong dimension.
    pub fn from_points<I, P>(window: Arc<Window>, points: I) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = P>,
        P: AsRef<[f64]>,
    {
        let mut pattern = Self::empty(window);
        for p in points {
            let p = p.as_ref();
            if p.len() != pattern.dim() {
                return Err(GeometryError::DimensionMismatch {
                    expected: pattern.dim(),
                    found: p.len(),
                });
            }
            if !pattern.window.contains(p) {
                return Err(GeometryError::OutsideWindow(p.to_vec()));
            }
            pattern.coords.extend_from_slice(p);
        }
        Ok(pattern)
    }

    pub fn window(&self) -> &Arc<Window> {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    /// `n(x)`.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim())
    }

    /// Flat coordinate buffer, point-major.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn push(&mut self, p: &[f64]) {
        debug_assert_eq!(p.len(), self.dim());
        debug_assert!(self.window.contains(p), "point {p:?} outside window");
        self.coords.extend_from_slice(p);
    }

    /// Removes point `i`, moving the last point into its slot.
    pub fn swap_remove(&mut self, i: usize) -> Point {
        let d = self.dim();
        let n = self.len();
        assert!(i < n, "index {i} out of range for pattern of {n} points");
        let removed = Point::new(self.point(i));
        if i != n - 1 {
            let (head, tail) = self.coords.split_at_mut((n - 1) * d);
            head[i * d..(i + 1) * d].copy_from_slice(tail);
        }
        self.coords.truncate((n - 1) * d);
        removed
    }

    pub fn clear(&mut self) {
        self.coords.clear();
    }

    /// `x ∪ {ξ}` as a new pattern.
    pub fn with_point(&self, p: &[f64]) -> Self {
        let mut out = self.clone();
        out.push(p);
        out
    }

    /// `x \ {x_i}` as a new pattern.
    pub fn without(&self, i: usize) -> Self {
        let mut out = self.clone();
        out.swap_remove(i);
        out
    }
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean distance `‖p − q‖`.
pub fn distance(p: &[f64], q: &[f64]) -> Result<f64, GeometryError> {
    if p.len() != q.len() {
        return Err(GeometryError::DimensionMismatch { expected: p.len(), found: q.len() });
    }
    Ok(dist2(p, q).sqrt())
}

#[inline]
fn within(a: &[f64], b: &[f64], r: f64) -> bool {
    // Comparing squared distances can flip exact-boundary cases.
    dist2(a, b).sqrt() <= r
}

/// Number of points of `x` within distance `r` (inclusive) of `xi`.
pub fn neighbor_count(x: &PointPattern, xi: &[f64], r: f64) -> usize {
    x.iter().filter(|p| within(p, xi, r)).count()
}

/// Number of unordered pairs of `x` at distance `≤ r`.
pub fn close_pair_count(x: &PointPattern, r: f64) -> usize {
    if x.len() < GRID_MIN_POINTS {
        close_pair_count_naive(x, r)
    } else {
        close_pair_count_grid(x, r)
    }
}

/// Plain `O(n^2)` double loop.
pub fn close_pair_count_naive(x: &PointPattern, r: f64) -> usize {
    let n = x.len();
    let mut count = 0;
    for i in 0..n {
        let p = x.point(i);
        for j in (i + 1)..n {
            if within(p, x.point(j), r) {
                count += 1;
            }
        }
    }
    count
}

/// Uniform-grid pair counter: cells of side at least `r`, so only the
/// `3^d` neighboring cells of each cell need checking.
pub fn close_pair_count_grid(x: &PointPattern, r: f64) -> usize {
    let n = x.len();
    if n < 2 {
        return 0;
    }
    let w = x.window();
    let d = w.dim();

    let mut per_axis: SmallVec<[usize; 3]> = (0..d)
        .map(|i| {
            let c = (w.side(i) / r).floor();
            if c.is_finite() && c >= 1.0 { c.min(1e6) as usize } else { 1 }
        })
        .collect();
    // Keep the cell table proportional to the number of points.
    let budget = (4 * n).max(16);
    while per_axis.iter().product::<usize>() > budget {
        for c in per_axis.iter_mut() {
            *c = (*c / 2).max(1);
        }
    }
    let mut strides: SmallVec<[usize; 3]> = SmallVec::with_capacity(d);
    let mut total = 1usize;
    for &c in per_axis.iter() {
        strides.push(total);
        total *= c;
    }
    let cell_side: SmallVec<[f64; 3]> = (0..d).map(|i| w.side(i) / per_axis[i] as f64).collect();

    let cell_of = |p: &[f64]| -> SmallVec<[usize; 3]> {
        (0..d)
            .map(|i| {
                let k = ((p[i] - w.lower()[i]) / cell_side[i]).floor();
                (k.max(0.0) as usize).min(per_axis[i] - 1)
            })
            .collect()
    };

    // Counting sort of point indices by cell (CSR layout).
    let mut cell_ids = Vec::with_capacity(n);
    let mut start = vec![0usize; total + 1];
    for p in x.iter() {
        let idx = cell_of(p);
        let flat: usize = idx.iter().zip(&strides).map(|(a, s)| a * s).sum();
        cell_ids.push(flat);
        start[flat + 1] += 1;
    }
    for c in 0..total {
        start[c + 1] += start[c];
    }
    let mut fill = start.clone();
    let mut order = vec![0usize; n];
    for (i, &c) in cell_ids.iter().enumerate() {
        order[fill[c]] = i;
        fill[c] += 1;
    }

    let offsets: Vec<SmallVec<[isize; 3]>> = neighbor_offsets(d);
    let mut count = 0;
    for i in 0..n {
        let p = x.point(i);
        let home = cell_of(p);
        let home_flat = cell_ids[i];
        'offsets: for off in &offsets {
            let mut flat = 0usize;
            for axis in 0..d {
                let k = home[axis] as isize + off[axis];
                if k < 0 || k >= per_axis[axis] as isize {
                    continue 'offsets;
                }
                flat += k as usize * strides[axis];
            }
            // Each unordered pair is seen from the lower-indexed cell, or
            // from the lower point index within a shared cell.
            if flat < home_flat {
                continue;
            }
            for &j in &order[start[flat]..start[flat + 1]] {
                if (flat > home_flat || j > i) && within(p, x.point(j), r) {
                    count += 1;
                }
            }
        }
    }
    count
}

fn neighbor_offsets(d: usize) -> Vec<SmallVec<[isize; 3]>> {
    let mut out = vec![SmallVec::new()];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|prefix: SmallVec<[isize; 3]>| {
                [-1isize, 0, 1].into_iter().map(move |o| {
                    let mut v = prefix.clone();
                    v.push(o);
                    v
                })
            })
            .collect();
    }
    out
}

/// Uniform draw on the window, independent per axis.
pub fn uniform_point<R: Rng + ?Sized>(w: &Window, rng: &mut R) -> Point {
    let mut p = Point(SmallVec::with_capacity(w.dim()));
    for i in 0..w.dim() {
        p.0.push(w.lower()[i] + w.side(i) * rng.random::<f64>());
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    use crate::rng::SimRng;

    fn line(xs: &[f64]) -> PointPattern {
        let w = Arc::new(Window::unit_square_centered());
        PointPattern::from_points(w, xs.iter().map(|&x| [x, 0.0])).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(Window::unit_square_centered().area(), 1.0);
        assert!((Window::square(0.0, 0.2).unwrap().area() - 0.04).abs() < 1e-15);
        assert_eq!(Window::new(vec![0.0, 0.0], vec![2.0, 0.5]).unwrap().area(), 1.0);
    }

    #[test]
    fn window_validation() {
        assert!(Window::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(Window::new(vec![0.0], vec![1.0, 1.0]).is_err());
        assert!(Window::new(vec![0.0, f64::NEG_INFINITY], vec![1.0, 1.0]).is_err());
        assert!(Window::new(vec![], vec![]).is_err());
    }

    #[test]
    fn distance_examples() {
        assert!((distance(&[0.0, 0.0], &[0.05, 0.0]).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(distance(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(distance(&[0.0, 0.0], &[0.3, 0.4]).unwrap(), 0.5);
        assert!(matches!(
            distance(&[0.0, 0.0], &[0.0]),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn close_pair_count_examples() {
        assert_eq!(close_pair_count(&line(&[0.0, 0.06, 0.12]), 0.1), 2);
        assert_eq!(close_pair_count(&line(&[]), 0.1), 0);
        assert_eq!(close_pair_count(&line(&[0.3]), 0.1), 0);
        // 0.10 lands exactly on the boundary and counts.
        assert_eq!(close_pair_count(&line(&[0.0, 0.05, 0.10]), 0.1), 3);
        assert_eq!(close_pair_count_grid(&line(&[0.0, 0.05, 0.10]), 0.1), 3);
    }

    #[test]
    fn neighbor_count_examples() {
        assert_eq!(neighbor_count(&line(&[0.0]), &[0.05, 0.0], 0.1), 1);
        assert_eq!(neighbor_count(&line(&[]), &[0.05, 0.0], 0.1), 0);
        assert_eq!(neighbor_count(&line(&[0.0, 0.2]), &[0.05, 0.0], 0.1), 1);
    }

    #[test]
    fn from_points_rejects_outside() {
        let w = Arc::new(Window::unit_square_centered());
        assert!(matches!(
            PointPattern::from_points(w.clone(), [[0.6, 0.0]]),
            Err(GeometryError::OutsideWindow(_))
        ));
        assert!(PointPattern::from_points(w, [[0.5, -0.5]]).is_ok());
    }

    #[test]
    fn swap_remove_keeps_others() {
        let mut x = line(&[0.1, 0.2, 0.3]);
        let gone = x.swap_remove(0);
        assert_eq!(gone.coords(), &[0.1, 0.0]);
        assert_eq!(x.len(), 2);
        assert_eq!(x.point(0), &[0.3, 0.0]);
        assert_eq!(x.point(1), &[0.2, 0.0]);
        x.swap_remove(1);
        assert_eq!(x.len(), 1);
    }

    #[test]
    fn uniform_point_support_and_determinism() {
        let w = Window::unit_square_centered();
        let mut a = SimRng::seed_from_u64(11);
        let mut b = SimRng::seed_from_u64(11);
        for _ in 0..1000 {
            let p = uniform_point(&w, &mut a);
            assert!(w.contains(&p));
            assert_eq!(p, uniform_point(&w, &mut b));
        }
    }

    #[test]
    fn uniform_point_axis_means() {
        // Uniform on [-0.5, 0.5]: variance 1/12, so the mean of 1e5 draws has
        // sd sqrt(1/12 / 1e5) ≈ 9.13e-4.
        let w = Window::unit_square_centered();
        let mut rng = SimRng::seed_from_u64(2024);
        let n = 100_000;
        let mut sums = [0.0; 2];
        for _ in 0..n {
            let p = uniform_point(&w, &mut rng);
            sums[0] += p[0];
            sums[1] += p[1];
        }
        let sd = (1.0 / 12.0 / n as f64).sqrt();
        for s in sums {
            assert!((s / n as f64).abs() < 4.0 * sd);
        }
    }

    fn arb_pattern(max_n: usize, dim: usize) -> impl Strategy<Value = PointPattern> {
        prop::collection::vec(prop::collection::vec(-0.5f64..=0.5, dim), 0..max_n).prop_map(
            move |pts| {
                let w = Arc::new(Window::new(vec![-0.5; dim], vec![0.5; dim]).unwrap());
                PointPattern::from_points(w, pts).unwrap()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn grid_matches_naive(x in arb_pattern(150, 2), r in 0.005f64..0.6) {
            prop_assert_eq!(close_pair_count_grid(&x, r), close_pair_count_naive(&x, r));
        }

        #[test]
        fn grid_matches_naive_3d(x in arb_pattern(120, 3), r in 0.01f64..0.4) {
            prop_assert_eq!(close_pair_count_grid(&x, r), close_pair_count_naive(&x, r));
        }

        #[test]
        fn pairs_are_half_the_neighbor_sum(x in arb_pattern(60, 2), r in 0.01f64..0.5) {
            let total: usize = (0..x.len())
                .map(|i| neighbor_count(&x.without(i), x.point(i), r))
                .sum();
            prop_assert_eq!(total % 2, 0);
            prop_assert_eq!(close_pair_count(&x, r), total / 2);
        }

        #[test]
        fn distance_is_a_metric(
            a in prop::collection::vec(-1.0f64..1.0, 2),
            b in prop::collection::vec(-1.0f64..1.0, 2),
            c in prop::collection::vec(-1.0f64..1.0, 2),
        ) {
            let ab = distance(&a, &b).unwrap();
            let ba = distance(&b, &a).unwrap();
            let bc = distance(&b, &c).unwrap();
            let ac = distance(&a, &c).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }
}
