//! Piecewise-linear paths and their truncated signatures.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::lie::{LieBasis, LieCoordinates};
use crate::tensor::TruncatedTensor;

/// Knots `(t_i, x_i)` with strictly increasing times, linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearPath {
    dim: usize,
    times: Vec<f64>,
    points: Vec<f64>,
}

/// Truncated signature over the time interval `[start, end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureElement {
    pub group: TruncatedTensor,
    pub start: f64,
    pub end: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl PiecewiseLinearPath {
    /// `points` is row-major, one row of length `dim` per knot.
    pub fn from_flat(dim: usize, times: Vec<f64>, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("path dimension must be positive"));
        }
        if times.len() < 2 {
            return Err(Error::TooFewPoints {
                needed: 2,
                found: times.len(),
            });
        }
        if points.len() != dim * times.len() {
            return Err(Error::LengthMismatch {
                expected: dim * times.len(),
                found: points.len(),
            });
        }
        if times.iter().chain(&points).any(|v| !v.is_finite()) {
            return Err(Error::invalid("path contains non-finite values"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("path times must be strictly increasing"));
        }
        Ok(Self { dim, times, points })
    }

    pub fn new(times: Vec<f64>, points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.len());
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid("all path points must have the same dimension"));
        }
        Self::from_flat(dim, times, points.concat())
    }

    /// Path from the origin through the given increments, one per unit of time.
    pub fn from_increments(dim: usize, increments: &[Vec<f64>]) -> Self {
        let mut points = vec![0.0; dim];
        let mut cur = vec![0.0; dim];
        for inc in increments {
            for (c, d) in cur.iter_mut().zip(inc) {
                *c += d;
            }
            points.extend_from_slice(&cur);
        }
        let n = increments.len().max(1);
        if increments.is_empty() {
            points.extend_from_slice(&cur);
        }
        Self {
            dim,
            times: (0..=n).map(|i| i as f64).collect(),
            points,
        }
    }

    /// Path sitting at `point` over `[0, 1]`.
    pub fn constant(point: &[f64]) -> Self {
        Self {
            dim: point.len(),
            times: vec![0.0, 1.0],
            points: [point, point].concat(),
        }
    }

    pub fn segment(from: &[f64], to: &[f64]) -> Self {
        Self {
            dim: from.len(),
            times: vec![0.0, 1.0],
            points: [from, to].concat(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn knot_count(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn start_point(&self) -> &[f64] {
        self.point(0)
    }

    pub fn end_point(&self) -> &[f64] {
        self.point(self.times.len() - 1)
    }

    pub fn increment(&self) -> Vec<f64> {
        self.end_point()
            .iter()
            .zip(self.start_point())
            .map(|(b, a)| b - a)
            .collect()
    }

    fn segment_increment(&self, i: usize) -> Vec<f64> {
        self.point(i + 1)
            .iter()
            .zip(self.point(i))
            .map(|(b, a)| b - a)
            .collect()
    }

    /// Value at time `t`, clamped to the end points outside the time range.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.point(0).to_vec();
        }
        if t >= self.times[n - 1] {
            return self.point(n - 1).to_vec();
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        self.point(i)
            .iter()
            .zip(self.point(i + 1))
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// Total variation `Σ |x_{i+1} − x_i|`.
    pub fn one_variation(&self) -> f64 {
        (0..self.times.len() - 1)
            .map(|i| norm(&self.segment_increment(i)))
            .sum()
    }

    /// `self ⊔ other`: `other` translated to start where `self` ends, its
    /// time axis shifted to start at `self.end_time()`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::LengthMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let end = self.end_point().to_vec();
        let shift_t = self.end_time() - other.start_time();
        let mut times = self.times.clone();
        let mut points = self.points.clone();
        for i in 1..other.times.len() {
            times.push(other.times[i] + shift_t);
            for (k, (&p, &s)) in other.point(i).iter().zip(other.start_point()).enumerate() {
                points.push(end[k] + p - s);
            }
        }
        Ok(Self {
            dim: self.dim,
            times,
            points,
        })
    }

    /// Time reversal over the same time interval.
    pub fn reverse(&self) -> Self {
        let (a, b) = (self.start_time(), self.end_time());
        let n = self.times.len();
        let times = self.times.iter().rev().map(|&t| a + b - t).collect();
        let mut points = Vec::with_capacity(self.points.len());
        for i in (0..n).rev() {
            points.extend_from_slice(self.point(i));
        }
        Self {
            dim: self.dim,
            times,
            points,
        }
    }

    /// Spatial scaling about the start point.
    pub fn scale_path(&self, lambda: f64) -> Self {
        let x0 = self.start_point().to_vec();
        let mut out = self.clone();
        for (i, p) in out.points.iter_mut().enumerate() {
            let o = x0[i % self.dim];
            *p = o + lambda * (*p - o);
        }
        out
    }

    /// Spatial translation so the path starts at `origin`.
    pub fn translate_to(&self, origin: &[f64]) -> Self {
        let x0 = self.start_point().to_vec();
        let mut out = self.clone();
        for (i, p) in out.points.iter_mut().enumerate() {
            *p += origin[i % self.dim] - x0[i % self.dim];
        }
        out
    }

    /// Affine change of time onto `[a, b]`.
    pub fn rescale_time(&self, a: f64, b: f64) -> Result<Self> {
        if !(b > a) {
            return Err(Error::invalid("time interval must have positive length"));
        }
        let (s, e) = (self.start_time(), self.end_time());
        let mut out = self.clone();
        for t in &mut out.times {
            *t = a + (*t - s) / (e - s) * (b - a);
        }
        // keep the end points exact
        out.times[0] = a;
        *out.times.last_mut().unwrap() = b;
        Ok(out)
    }

    /// Same time interval, motion squeezed into its middle third with the
    /// path held constant on the outer thirds.
    pub fn reparametrize_middle_third(&self) -> Self {
        let (a, b) = (self.start_time(), self.end_time());
        let len = b - a;
        let inner = self
            .rescale_time(a + len / 3.0, a + 2.0 * len / 3.0)
            .expect("path has a positive time span");
        let mut times = Vec::with_capacity(self.times.len() + 2);
        let mut points = Vec::with_capacity(self.points.len() + 2 * self.dim);
        times.push(a);
        points.extend_from_slice(self.start_point());
        times.extend_from_slice(&inner.times);
        points.extend_from_slice(&inner.points);
        times.push(b);
        points.extend_from_slice(self.end_point());
        Self {
            dim: self.dim,
            times,
            points,
        }
    }

    /// Arc-length parametrization on `[0, 1]`. Stationary segments are
    /// dropped; a path that never moves becomes a constant path.
    pub fn arc_length_parametrized(&self) -> Self {
        let total = self.one_variation();
        if total == 0.0 {
            return Self::constant(self.start_point());
        }
        let mut times = vec![0.0];
        let mut points = self.start_point().to_vec();
        let mut acc = 0.0;
        for i in 0..self.times.len() - 1 {
            let l = norm(&self.segment_increment(i));
            if l <= total * 1e-15 {
                continue;
            }
            acc += l;
            times.push(acc / total);
            points.extend_from_slice(self.point(i + 1));
        }
        *times.last_mut().unwrap() = 1.0;
        Self {
            dim: self.dim,
            times,
            points,
        }
    }

    /// Drops interior knots where the path does not bend.
    pub fn simplified(&self) -> Self {
        let n = self.times.len();
        let mut times = vec![self.times[0]];
        let mut points = self.point(0).to_vec();
        for i in 1..n - 1 {
            let a = self.segment_increment(i - 1);
            let b = self.segment_increment(i);
            let (ta, tb) = (self.times[i] - self.times[i - 1], self.times[i + 1] - self.times[i]);
            let same_velocity = a
                .iter()
                .zip(&b)
                .all(|(x, y)| (x / ta - y / tb).abs() <= 1e-14 * (1.0 + (x / ta).abs()));
            if !same_velocity {
                times.push(self.times[i]);
                points.extend_from_slice(self.point(i));
            }
        }
        times.push(self.times[n - 1]);
        points.extend_from_slice(self.point(n - 1));
        Self {
            dim: self.dim,
            times,
            points,
        }
    }

    /// Truncated signature, the product of `exp` of the segment increments.
    pub fn signature(&self, level: usize) -> SignatureElement {
        let mut g = TruncatedTensor::one(self.dim, level);
        for i in 0..self.times.len() - 1 {
            let inc = self.segment_increment(i);
            if inc.iter().all(|&v| v == 0.0) {
                continue;
            }
            g = &g * &TruncatedTensor::exp_of_vector(level, &inc);
        }
        SignatureElement {
            group: g,
            start: self.start_time(),
            end: self.end_time(),
        }
    }

    /// `log` of the signature in Lyndon coordinates of `basis`.
    pub fn log_signature(&self, basis: &LieBasis) -> Result<LieCoordinates> {
        if basis.dim() != self.dim {
            return Err(Error::LengthMismatch {
                expected: basis.dim(),
                found: self.dim,
            });
        }
        basis.log(&self.signature(basis.level()).group)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square_loop() -> PiecewiseLinearPath {
        PiecewiseLinearPath::from_increments(2, &[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]])
    }

    #[test]
    fn construction_errors() {
        assert!(PiecewiseLinearPath::from_flat(1, vec![0.0], vec![0.0]).is_err());
        assert!(PiecewiseLinearPath::from_flat(1, vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
        assert!(PiecewiseLinearPath::from_flat(2, vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn segment_signature_is_exp() {
        let v = [0.3, -1.2];
        let p = PiecewiseLinearPath::segment(&[1.0, 1.0], &[1.3, -0.2]);
        let s = p.signature(3).group;
        assert!(s.max_abs_diff(&TruncatedTensor::exp_of_vector(3, &v)) < 1e-15);
    }

    #[test]
    fn square_loop_has_unit_area() {
        let basis = LieBasis::new(2, 2);
        let u = square_loop().log_signature(&basis).unwrap();
        let expect = LieCoordinates::new(2, 2, vec![0.0, 0.0, 1.0]).unwrap();
        assert!(u.max_abs_diff(&expect) < 1e-14);
        assert_eq!(square_loop().one_variation(), 4.0);
    }

    #[test]
    fn loop_and_its_reverse_cancel() {
        let p = PiecewiseLinearPath::from_increments(2, &[vec![0.4, 1.0], vec![-2.0, 0.1], vec![0.3, 0.3]]);
        let s = p.concat(&p.reverse()).unwrap().signature(4).group;
        assert!(s.max_abs_diff(&TruncatedTensor::one(2, 4)) < 1e-13);
    }

    #[test]
    fn middle_third_layout() {
        let p = square_loop().rescale_time(0.0, 3.0).unwrap();
        let m = p.reparametrize_middle_third();
        assert_eq!(m.start_time(), 0.0);
        assert_eq!(m.end_time(), 3.0);
        assert_eq!(m.times()[1], 1.0);
        assert_eq!(m.times()[m.knot_count() - 2], 2.0);
        assert_eq!(m.value_at(0.5), vec![0.0, 0.0]);
        assert!(m.signature(3).group.max_abs_diff(&p.signature(3).group) < 1e-15);
    }

    #[test]
    fn value_at_interpolates() {
        let p = PiecewiseLinearPath::new(vec![0.0, 2.0], &[vec![0.0], vec![4.0]]).unwrap();
        assert_eq!(p.value_at(0.5), vec![1.0]);
        assert_eq!(p.value_at(-1.0), vec![0.0]);
        assert_eq!(p.value_at(3.0), vec![4.0]);
    }

    fn arb_path(d: usize, max_knots: usize) -> impl Strategy<Value = PiecewiseLinearPath> {
        proptest::collection::vec(proptest::collection::vec(-1.0..1.0f64, d), 1..max_knots)
            .prop_map(move |incs| PiecewiseLinearPath::from_increments(d, &incs))
    }

    proptest! {
        #[test]
        fn chen_identity(p in arb_path(2, 6), q in arb_path(2, 6)) {
            let joined = p.concat(&q).unwrap().signature(4).group;
            let product = &p.signature(4).group * &q.signature(4).group;
            prop_assert!(joined.max_abs_diff(&product) < 1e-12);
        }

        #[test]
        fn reparametrization_invariance(p in arb_path(3, 5), a in -2.0..2.0f64, len in 0.1..5.0f64) {
            let s = p.signature(3).group;
            let r = p.rescale_time(a, a + len).unwrap();
            prop_assert!(r.signature(3).group.max_abs_diff(&s) < 1e-14);
            prop_assert!(r.reparametrize_middle_third().signature(3).group.max_abs_diff(&s) < 1e-14);
            prop_assert!(p.arc_length_parametrized().signature(3).group.max_abs_diff(&s) < 1e-12);
        }

        #[test]
        fn scaling_is_dilation(p in arb_path(2, 5), lambda in 0.1..3.0f64) {
            let scaled = p.scale_path(lambda).signature(4).group;
            let dilated = p.signature(4).group.dilate(lambda).unwrap();
            prop_assert!(scaled.max_abs_diff(&dilated) < 1e-11);
        }

        #[test]
        fn level_one_is_increment(p in arb_path(3, 6)) {
            let s = p.signature(2).group;
            prop_assert_eq!(s.scalar(), 1.0);
            for (a, b) in s.block(1).iter().zip(p.increment()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
