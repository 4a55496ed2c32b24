//! Exact d-dimensional primitives: points, time-stamped segments, boxes,
//! closest-distance queries between segments and polylines, plus the spatial
//! indexes used for broad-phase pruning.

mod bvh;
mod grid;

use std::fmt;
use std::ops::{Add, Index, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

pub use bvh::CapsuleBvh;
pub use grid::{default_cell_size, GridIndex};

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 8;

/// A point of ℝ^d stored inline; coordinates past `dim` are always zero.
#[derive(Clone, Copy, PartialEq)]
pub struct PointD {
    coords: [f64; MAX_DIM],
    dim: u8,
}

impl PointD {
    pub fn new(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return config(format!("dimension {} outside 1..={MAX_DIM}", coords.len()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return config("non-finite coordinate");
        }
        Ok(Self::from_slice(coords))
    }

    /// Unchecked constructor for hot paths; the slice must be 1..=MAX_DIM long.
    #[inline]
    pub fn from_slice(coords: &[f64]) -> Self {
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Self { coords: c, dim: coords.len() as u8 }
    }

    pub fn origin(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        Self { coords: [0.0; MAX_DIM], dim: dim as u8 }
    }

    /// The point `value·e_axis`.
    pub fn on_axis(dim: usize, axis: usize, value: f64) -> Self {
        let mut p = Self::origin(dim);
        p.coords[axis] = value;
        p
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> f64 {
        dot(self.coords(), other.coords())
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn dist(&self, other: &Self) -> f64 {
        dist_sq(self.coords(), other.coords()).sqrt()
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut out = *self;
        out.coords.iter_mut().for_each(|c| *c *= k);
        out
    }

    /// `self + k·dir`
    pub fn add_scaled(&self, dir: &Self, k: f64) -> Self {
        let mut out = *self;
        for (o, d) in out.coords.iter_mut().zip(dir.coords.iter()) {
            *o += k * d;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|c| c.is_finite())
    }
}

impl fmt::Debug for PointD {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.coords()).finish()
    }
}

impl Index<usize> for PointD {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coords()[i]
    }
}

impl Add for PointD {
    type Output = PointD;
    fn add(self, rhs: PointD) -> PointD {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = self;
        for (o, r) in out.coords.iter_mut().zip(rhs.coords.iter()) {
            *o += r;
        }
        out
    }
}

impl Sub for PointD {
    type Output = PointD;
    fn sub(self, rhs: PointD) -> PointD {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = self;
        for (o, r) in out.coords.iter_mut().zip(rhs.coords.iter()) {
            *o -= r;
        }
        out
    }
}

impl Serialize for PointD {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PointD {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        PointD::new(&v).map_err(serde::de::Error::custom)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A straight piece of a discretized trajectory together with its time span.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: PointD,
    pub b: PointD,
    pub t_start: f64,
    pub t_end: f64,
}

impl Segment {
    pub fn new(a: PointD, b: PointD, t_start: f64, t_end: f64) -> Result<Self> {
        if a.dim() != b.dim() {
            return config("segment endpoints differ in dimension");
        }
        if !(t_start <= t_end) {
            return config(format!("segment times out of order: {t_start} > {t_end}"));
        }
        if !a.is_finite() || !b.is_finite() {
            return config("non-finite segment endpoint");
        }
        Ok(Self { a, b, t_start, t_end })
    }

    /// Zero-length segment sitting at `p` at time `t`.
    pub fn point(p: PointD, t: f64) -> Self {
        Self { a: p, b: p, t_start: t, t_end: t }
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn at(&self, u: f64) -> PointD {
        self.a.add_scaled(&(self.b - self.a), u)
    }
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: PointD,
    pub hi: PointD,
}

impl Aabb {
    pub fn new(lo: PointD, hi: PointD) -> Result<Self> {
        if lo.dim() != hi.dim() {
            return config("box corners differ in dimension");
        }
        if lo.coords().iter().zip(hi.coords()).any(|(l, h)| l > h) {
            return config(format!("box corners out of order: {lo:?} / {hi:?}"));
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[lo, lo + side]^d`.
    pub fn cube(dim: usize, lo: f64, side: f64) -> Result<Self> {
        Self::new(PointD::new(&vec![lo; dim])?, PointD::new(&vec![lo + side; dim])?)
    }

    pub fn empty(dim: usize) -> Self {
        let mut lo = PointD::origin(dim);
        let mut hi = PointD::origin(dim);
        lo.coords_mut().fill(f64::INFINITY);
        hi.coords_mut().fill(f64::NEG_INFINITY);
        Self { lo, hi }
    }

    pub fn from_point(p: &PointD) -> Self {
        Self { lo: *p, hi: *p }
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.coords().iter().zip(self.hi.coords()).any(|(l, h)| l > h)
    }

    pub fn grow(&mut self, p: &[f64]) {
        let d = self.dim();
        for (i, &x) in p.iter().enumerate().take(d) {
            self.lo.coords[i] = self.lo.coords[i].min(x);
            self.hi.coords[i] = self.hi.coords[i].max(x);
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        out.grow(other.lo.coords());
        out.grow(other.hi.coords());
        out
    }

    pub fn inflate(&self, r: f64) -> Aabb {
        let mut out = *self;
        out.lo.coords_mut().iter_mut().for_each(|c| *c -= r);
        out.hi.coords_mut().iter_mut().for_each(|c| *c += r);
        out
    }

    pub fn translate(&self, v: &PointD) -> Aabb {
        Aabb { lo: self.lo + *v, hi: self.hi + *v }
    }

    #[inline]
    pub fn intersects(&self, other: &Aabb) -> bool {
        let d = self.dim();
        (0..d).all(|i| self.lo.coords[i] <= other.hi.coords[i] && other.lo.coords[i] <= self.hi.coords[i])
    }

    pub fn contains(&self, p: &PointD) -> bool {
        let d = self.dim();
        (0..d).all(|i| self.lo.coords[i] <= p.coords[i] && p.coords[i] <= self.hi.coords[i])
    }

    pub fn edge(&self, axis: usize) -> f64 {
        self.hi.coords[axis] - self.lo.coords[axis]
    }

    pub fn longest_edge(&self) -> f64 {
        (0..self.dim()).map(|i| self.edge(i)).fold(0.0, f64::max)
    }

    pub fn volume(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (0..self.dim()).map(|i| self.edge(i)).product()
    }

    pub fn center(&self) -> PointD {
        (self.lo + self.hi).scale(0.5)
    }

    /// Euclidean distance from `p` to the box (zero inside).
    #[inline]
    pub fn distance_sq_to(&self, p: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, &x) in p.iter().enumerate() {
            let lo = self.lo.coords[i];
            let hi = self.hi.coords[i];
            let e = if x < lo {
                lo - x
            } else if x > hi {
                x - hi
            } else {
                0.0
            };
            acc += e * e;
        }
        acc
    }

    /// Euclidean gap between two boxes (zero if they overlap).
    pub fn gap(&self, other: &Aabb) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            let e = (self.lo.coords[i] - other.hi.coords[i]).max(other.lo.coords[i] - self.hi.coords[i]).max(0.0);
            acc += e * e;
        }
        acc.sqrt()
    }
}

/// Squared distance between segments `[a1,b1]` and `[a2,b2]` given as raw
/// coordinate slices of equal length.
///
/// Minimizes `‖(a1 + u·d1) − (a2 + v·d2)‖` over the unit square in closed form:
/// the unconstrained stationary point is clamped to `[0,1]` in `u`, then the
/// optimal `v` is clamped and `u` re-solved on that edge.
pub fn segment_distance_sq_raw(a1: &[f64], b1: &[f64], a2: &[f64], b2: &[f64]) -> f64 {
    let n = a1.len();
    let mut d1 = [0.0; MAX_DIM];
    let mut d2 = [0.0; MAX_DIM];
    let mut w = [0.0; MAX_DIM];
    let (mut a, mut e, mut f, mut c, mut b) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        d1[i] = b1[i] - a1[i];
        d2[i] = b2[i] - a2[i];
        w[i] = a1[i] - a2[i];
        a += d1[i] * d1[i];
        e += d2[i] * d2[i];
        f += d2[i] * w[i];
        c += d1[i] * w[i];
        b += d1[i] * d2[i];
    }
    const EPS: f64 = 1e-300;
    let (s, t) = if a <= EPS && e <= EPS {
        (0.0, 0.0)
    } else if a <= EPS {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else if e <= EPS {
        ((-c / a).clamp(0.0, 1.0), 0.0)
    } else {
        let denom = a * e - b * b;
        let mut s = if denom > 1e-14 * a * e { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
        let mut t = (b * s + f) / e;
        if t < 0.0 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else if t > 1.0 {
            t = 1.0;
            s = ((b - c) / a).clamp(0.0, 1.0);
        }
        (s, t)
    };
    let mut acc = 0.0;
    for i in 0..n {
        let g = w[i] + s * d1[i] - t * d2[i];
        acc += g * g;
    }
    acc
}

/// Squared distance from point `p` to segment `[a,b]`.
#[inline]
pub fn point_segment_distance_sq(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut ab2 = 0.0;
    let mut ap_ab = 0.0;
    for i in 0..p.len() {
        let ab = b[i] - a[i];
        ab2 += ab * ab;
        ap_ab += (p[i] - a[i]) * ab;
    }
    let u = if ab2 > 0.0 { (ap_ab / ab2).clamp(0.0, 1.0) } else { 0.0 };
    let mut acc = 0.0;
    for i in 0..p.len() {
        let g = p[i] - (a[i] + u * (b[i] - a[i]));
        acc += g * g;
    }
    acc
}

/// Exact minimal Euclidean distance between two segments.
pub fn segment_distance(s1: &Segment, s2: &Segment) -> Result<f64> {
    if s1.dim() != s2.dim() {
        return config(format!("segment dimensions differ: {} vs {}", s1.dim(), s2.dim()));
    }
    Ok(segment_distance_sq_raw(s1.a.coords(), s1.b.coords(), s2.a.coords(), s2.b.coords()).sqrt())
}

/// Minimal pairwise segment distance between two polylines.
///
/// Once a pair at distance `≤ early_exit` is found the scan stops and that
/// value is returned, so callers only asking "closer than x?" can pass `x`.
pub fn polyline_distance(p1: &[Segment], p2: &[Segment], early_exit: f64) -> Result<f64> {
    if p1.is_empty() || p2.is_empty() {
        return config("empty polyline");
    }
    let dim = p1[0].dim();
    if p1.iter().chain(p2).any(|s| s.dim() != dim) {
        return config("polyline dimensions differ");
    }
    let boxes2: Vec<Aabb> = p2.iter().map(segment_box).collect();
    let mut best = f64::INFINITY;
    for s1 in p1 {
        let b1 = segment_box(s1);
        for (s2, b2) in p2.iter().zip(&boxes2) {
            if b1.gap(b2) >= best {
                continue;
            }
            let d = segment_distance_sq_raw(s1.a.coords(), s1.b.coords(), s2.a.coords(), s2.b.coords()).sqrt();
            if d < best {
                best = d;
                if best <= early_exit {
                    return Ok(best);
                }
            }
        }
    }
    Ok(best)
}

fn segment_box(s: &Segment) -> Aabb {
    let mut b = Aabb::from_point(&s.a);
    b.grow(s.b.coords());
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> PointD {
        PointD::new(c).unwrap()
    }

    fn seg(a: &[f64], b: &[f64]) -> Segment {
        Segment::new(p(a), p(b), 0.0, 1.0).unwrap()
    }

    #[test]
    fn parallel_unit_offset() {
        let s1 = seg(&[0., 0., 0., 0.], &[1., 0., 0., 0.]);
        let s2 = seg(&[0., 1., 0., 0.], &[1., 1., 0., 0.]);
        assert!((segment_distance(&s1, &s2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_segments() {
        let s = seg(&[0.3, -1., 2., 0.5], &[1.7, 0.2, -0.4, 3.]);
        assert_eq!(segment_distance(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_point_against_segment() {
        let s1 = seg(&[0., 0., 0., 0.], &[2., 0., 0., 0.]);
        let s2 = seg(&[1., 1., 0., 0.], &[1., 1., 0., 0.]);
        let exact = segment_distance(&s1, &s2).unwrap();
        // brute-force grid over (u, v) at resolution 1e-4
        let mut brute = f64::INFINITY;
        for k in 0..=10_000 {
            let u = k as f64 * 1e-4;
            brute = brute.min(s1.at(u).dist(&s2.at(0.0)));
        }
        assert!((exact - 1.0).abs() < 1e-12);
        assert!((exact - brute).abs() < 1e-3);
    }

    #[test]
    fn crossing_segments_touch() {
        let s1 = seg(&[-1., 0., 0.], &[1., 0., 0.]);
        let s2 = seg(&[0., -1., 0.], &[0., 1., 0.]);
        assert!(segment_distance(&s1, &s2).unwrap() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let s1 = seg(&[0., 0., 0.], &[1., 0., 0.]);
        let s2 = seg(&[0., 0., 0., 0.], &[1., 0., 0., 0.]);
        assert!(segment_distance(&s1, &s2).is_err());
    }

    #[test]
    fn bad_segment_times_rejected() {
        assert!(Segment::new(p(&[0., 0., 0.]), p(&[1., 0., 0.]), 2.0, 1.0).is_err());
    }

    #[test]
    fn box_ops() {
        let b = Aabb::cube(4, 0.0, 2.0).unwrap();
        assert_eq!(b.volume(), 16.0);
        assert!(b.contains(&p(&[1., 1., 1., 1.])));
        assert!(!b.contains(&p(&[3., 1., 1., 1.])));
        let far = b.translate(&p(&[5., 0., 0., 0.]));
        assert!((b.gap(&far) - 3.0).abs() < 1e-12);
        assert!(!b.intersects(&far));
        assert!(b.inflate(1.6).intersects(&far.inflate(1.6)));
        assert!(Aabb::new(p(&[1., 0.]), p(&[0., 1.])).is_err());
    }

    #[test]
    fn polyline_reduces_to_segment_distance() {
        let s1 = seg(&[0., 0., 0., 0.], &[1., 0., 0., 0.]);
        let s2 = seg(&[0., 2., 0., 0.], &[1., 3., 0., 0.]);
        assert_eq!(polyline_distance(&[s1], &[s2], 0.0).unwrap(), segment_distance(&s1, &s2).unwrap());
        assert!(polyline_distance(&[], &[s2], 0.0).is_err());
    }
}
