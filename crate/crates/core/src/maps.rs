//! Expanding maps and their branch calculus.
//!
//! Three concrete families are modelled: analytic perturbations of the
//! degree-k circle map, β-transformations of the unit interval and Tsujii's
//! skew product on the 2-torus. Every map is immutable after construction.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual required from every Newton branch solve.
pub const BRANCH_TOLERANCE: f64 = 1e-13;
/// Closure tolerance attached to every periodic orbit.
pub const CLOSURE_TOLERANCE: f64 = 1e-10;
/// Points closer than this on the circle are treated as the same orbit point.
pub const ORBIT_MERGE_TOLERANCE: f64 = 1e-9;
/// Largest number of candidate points `periodic_points` will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

const NEWTON_MAX_ITER: usize = 50;
const DAMPING_THRESHOLD: f64 = 1.1;

/// Reduce into `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance on the circle `R/Z`.
#[inline]
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// One inverse branch of a one-dimensional map: a preimage and `|T'|` there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub point: f64,
    pub derivative: f64,
}

/// One inverse branch of a torus map with its derivative matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch2D {
    pub point: [f64; 2],
    pub derivative: Matrix2<f64>,
}

/// Common interface of the one-dimensional maps.
pub trait IntervalMap: Send + Sync {
    fn evaluate(&self, x: f64) -> f64;

    /// `|T'(x)|`.
    fn derivative(&self, x: f64) -> f64;

    /// All `y` with `T(y) = x`, sorted by `y`.
    fn inverse_branches(&self, x: f64) -> Result<Vec<Branch>>;

    /// Upper bound on the number of inverse branches at any point.
    fn max_branches(&self) -> usize;

    /// True when the phase space is the circle rather than an interval.
    fn is_circle(&self) -> bool;

    fn label(&self) -> String;

    /// Forward orbit segment `x, Tx, ..., T^{n-1}x`.
    fn orbit(&self, x: f64, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        let mut y = x;
        for _ in 0..n {
            out.push(y);
            y = self.evaluate(y);
        }
        out
    }

    fn iterate(&self, x: f64, n: usize) -> f64 {
        (0..n).fold(x, |y, _| self.evaluate(y))
    }
}

/// `x ↦ kx + ε sin(2πx) mod 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticCircleMap {
    degree: u32,
    eps: f64,
}

impl AnalyticCircleMap {
    pub fn new(degree: u32, eps: f64) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidParameter(format!(
                "circle map degree must be at least 2, got {degree}"
            )));
        }
        if !eps.is_finite() || 2.0 * PI * eps.abs() >= f64::from(degree) - 1.0 {
            return Err(Error::InvalidParameter(format!(
                "|eps| = {eps} violates the expansion bound 2π|eps| < k - 1"
            )));
        }
        Ok(Self { degree, eps })
    }

    pub fn doubling() -> Self {
        Self { degree: 2, eps: 0.0 }
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Lift to the real line, `F(x + 1) = F(x) + k`.
    #[inline]
    pub fn lift(&self, x: f64) -> f64 {
        f64::from(self.degree) * x + self.eps * (2.0 * PI * x).sin()
    }

    /// Signed derivative of the lift.
    #[inline]
    pub fn lift_derivative(&self, x: f64) -> f64 {
        f64::from(self.degree) + 2.0 * PI * self.eps * (2.0 * PI * x).cos()
    }

    /// Lower bound on `|T'|`.
    pub fn min_expansion(&self) -> f64 {
        f64::from(self.degree) - 2.0 * PI * self.eps.abs()
    }

    /// Solve `F(y) = target` on the monotone lift, starting from the
    /// unperturbed branch formula.
    fn solve_lift(&self, target: f64) -> Result<f64> {
        let k = f64::from(self.degree);
        let mut lo = (target - self.eps.abs()) / k;
        let mut hi = (target + self.eps.abs()) / k;
        let mut y = target / k;
        let mut residual = self.lift(y) - target;
        for _ in 0..NEWTON_MAX_ITER {
            if residual.abs() <= 0.25 * BRANCH_TOLERANCE {
                break;
            }
            if residual > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let slope = self.lift_derivative(y);
            let mut step = residual / slope;
            if slope.abs() < DAMPING_THRESHOLD {
                step *= 0.5;
            }
            let mut next = y - step;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if next == y {
                break;
            }
            y = next;
            residual = self.lift(y) - target;
        }
        if residual.abs() > BRANCH_TOLERANCE {
            return Err(Error::NewtonDivergence {
                target,
                residual: residual.abs(),
            });
        }
        Ok(y)
    }
}

impl IntervalMap for AnalyticCircleMap {
    fn evaluate(&self, x: f64) -> f64 {
        wrap(self.lift(x))
    }

    fn derivative(&self, x: f64) -> f64 {
        self.lift_derivative(x).abs()
    }

    fn inverse_branches(&self, x: f64) -> Result<Vec<Branch>> {
        let x = wrap(x);
        (0..self.degree)
            .map(|j| {
                let y = wrap(self.solve_lift(x + f64::from(j))?);
                Ok(Branch {
                    point: y,
                    derivative: self.derivative(y),
                })
            })
            .collect()
    }

    fn max_branches(&self) -> usize {
        self.degree as usize
    }

    fn is_circle(&self) -> bool {
        true
    }

    fn label(&self) -> String {
        format!("circle(k={},eps={})", self.degree, self.eps)
    }
}

/// `x ↦ βx mod 1` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaTransformation {
    beta: f64,
}

impl BetaTransformation {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 1.0) {
            return Err(Error::InvalidParameter(format!("beta must exceed 1, got {beta}")));
        }
        Ok(Self { beta })
    }

    /// The golden-mean transformation, `β = (1 + √5) / 2`.
    pub fn golden() -> Self {
        Self {
            beta: 0.5 * (1.0 + 5f64.sqrt()),
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_integer(&self) -> bool {
        self.beta.fract() == 0.0
    }

    /// Number of affine pieces, `⌈β⌉`.
    pub fn pieces(&self) -> usize {
        self.beta.ceil() as usize
    }

    /// Invariant density from the series `Σ_{n: x < Tⁿ1} β⁻ⁿ`, truncated
    /// when the orbit of 1 hits an integer or after `max_terms` terms.
    pub fn parry_density(&self, max_terms: usize) -> ParryDensity {
        let mut cuts = Vec::new();
        let mut t = 1.0;
        let mut weight = 1.0;
        for _ in 0..max_terms {
            cuts.push((t, weight));
            let next = self.beta * t;
            if (next - next.round()).abs() < 1e-12 {
                break;
            }
            t = next.fract();
            weight /= self.beta;
        }
        let mass: f64 = cuts.iter().map(|(c, w)| c * w).sum();
        ParryDensity { cuts, mass }
    }
}

/// Step function `Σ wₙ 1_{[0, cₙ)}`, normalized to integral one.
#[derive(Debug, Clone, PartialEq)]
pub struct ParryDensity {
    cuts: Vec<(f64, f64)>,
    mass: f64,
}

impl ParryDensity {
    pub fn eval(&self, x: f64) -> f64 {
        self.cuts.iter().filter(|(c, _)| x < *c).map(|(_, w)| w).sum::<f64>() / self.mass
    }

    /// Exact mean over `[a, b]`.
    pub fn average(&self, a: f64, b: f64) -> f64 {
        let total: f64 = self.cuts.iter().map(|(c, w)| w * (c.min(b) - a).max(0.0)).sum();
        total / (self.mass * (b - a))
    }
}

impl IntervalMap for BetaTransformation {
    fn evaluate(&self, x: f64) -> f64 {
        // At x = 1 this is frac(β), the right-continuous convention.
        wrap(self.beta * x)
    }

    fn derivative(&self, _x: f64) -> f64 {
        self.beta
    }

    fn inverse_branches(&self, x: f64) -> Result<Vec<Branch>> {
        let mut out = Vec::with_capacity(self.pieces());
        for j in 0..self.pieces() {
            let y = (x + j as f64) / self.beta;
            let admissible = if self.is_integer() { y < 1.0 } else { y <= 1.0 };
            if y >= 0.0 && admissible {
                out.push(Branch {
                    point: y,
                    derivative: self.beta,
                });
            }
        }
        Ok(out)
    }

    fn max_branches(&self) -> usize {
        self.pieces()
    }

    fn is_circle(&self) -> bool {
        false
    }

    fn label(&self) -> String {
        format!("beta({})", self.beta)
    }
}

/// `(x, y) ↦ (mx, y + m cos 2πx) mod 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsujiiSkewProduct {
    m: u32,
}

impl TsujiiSkewProduct {
    pub fn new(m: u32) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(format!("skew product needs m >= 2, got {m}")));
        }
        Ok(Self { m })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn evaluate(&self, p: [f64; 2]) -> [f64; 2] {
        let m = f64::from(self.m);
        [wrap(m * p[0]), wrap(p[1] + m * (2.0 * PI * p[0]).cos())]
    }

    /// Derivative matrix `[[m, 0], [-2πm sin 2πx, 1]]`.
    pub fn derivative(&self, p: [f64; 2]) -> Matrix2<f64> {
        let m = f64::from(self.m);
        Matrix2::new(m, 0.0, -2.0 * PI * m * (2.0 * PI * p[0]).sin(), 1.0)
    }

    /// Jacobian determinant, identically `m`.
    pub fn jacobian(&self, _p: [f64; 2]) -> f64 {
        f64::from(self.m)
    }

    pub fn inverse_branches(&self, p: [f64; 2]) -> Vec<Branch2D> {
        let m = f64::from(self.m);
        let mut out: Vec<Branch2D> = (0..self.m)
            .map(|j| {
                let x = (wrap(p[0]) + f64::from(j)) / m;
                let y = wrap(p[1] - m * (2.0 * PI * x).cos());
                let point = [x, y];
                Branch2D {
                    point,
                    derivative: self.derivative(point),
                }
            })
            .collect();
        out.sort_by(|a, b| a.point.partial_cmp(&b.point).expect("finite branch points"));
        out
    }

    pub fn label(&self) -> String {
        format!("tsujii(m={})", self.m)
    }
}

/// Serializable map description used by experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum MapSpec {
    Circle { k: u32, eps: f64 },
    Beta { beta: f64 },
    Tsujii { m: u32 },
}

/// A point of one of the supported phase spaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point {
    Line(f64),
    Torus([f64; 2]),
}

/// Branch data returned by [`MapModel::inverse_branches`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchData {
    Line(Branch),
    Torus(Branch2D),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapModel {
    Circle(AnalyticCircleMap),
    Beta(BetaTransformation),
    Tsujii(TsujiiSkewProduct),
}

impl MapModel {
    pub fn from_spec(spec: &MapSpec) -> Result<Self> {
        Ok(match *spec {
            MapSpec::Circle { k, eps } => Self::Circle(AnalyticCircleMap::new(k, eps)?),
            MapSpec::Beta { beta } => Self::Beta(BetaTransformation::new(beta)?),
            MapSpec::Tsujii { m } => Self::Tsujii(TsujiiSkewProduct::new(m)?),
        })
    }

    pub fn spec(&self) -> MapSpec {
        match self {
            Self::Circle(c) => MapSpec::Circle {
                k: c.degree,
                eps: c.eps,
            },
            Self::Beta(b) => MapSpec::Beta { beta: b.beta },
            Self::Tsujii(t) => MapSpec::Tsujii { m: t.m },
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Circle(c) => c.label(),
            Self::Beta(b) => b.label(),
            Self::Tsujii(t) => t.label(),
        }
    }

    /// The one-dimensional view, if this is a circle or interval map.
    pub fn as_interval(&self) -> Option<&dyn IntervalMap> {
        match self {
            Self::Circle(c) => Some(c),
            Self::Beta(b) => Some(b),
            Self::Tsujii(_) => None,
        }
    }

    pub fn evaluate(&self, x: Point) -> Result<Point> {
        match (self, x) {
            (Self::Tsujii(t), Point::Torus(p)) => Ok(Point::Torus(t.evaluate(p))),
            (Self::Tsujii(_), Point::Line(_)) => Err(dimension_error(self)),
            (_, Point::Line(x)) => Ok(Point::Line(
                self.as_interval().expect("one-dimensional map").evaluate(x),
            )),
            (_, Point::Torus(_)) => Err(dimension_error(self)),
        }
    }

    pub fn inverse_branches(&self, x: Point) -> Result<Vec<BranchData>> {
        match (self, x) {
            (Self::Tsujii(t), Point::Torus(p)) => {
                Ok(t.inverse_branches(p).into_iter().map(BranchData::Torus).collect())
            }
            (Self::Tsujii(_), Point::Line(_)) => Err(dimension_error(self)),
            (_, Point::Line(x)) => Ok(self
                .as_interval()
                .expect("one-dimensional map")
                .inverse_branches(x)?
                .into_iter()
                .map(BranchData::Line)
                .collect()),
            (_, Point::Torus(_)) => Err(dimension_error(self)),
        }
    }

    /// Orbits whose minimal period divides `n`.
    pub fn periodic_points(&self, n: usize) -> Result<Vec<PeriodicOrbit>> {
        match self {
            Self::Circle(c) => circle_periodic_points(c, n),
            Self::Beta(b) => beta_periodic_points(b, n),
            Self::Tsujii(_) => Err(Error::InvalidParameter(
                "periodic points are only enumerated for one-dimensional maps".into(),
            )),
        }
    }
}

fn dimension_error(map: &MapModel) -> Error {
    Error::InvalidParameter(format!("point dimension does not match {}", map.label()))
}

/// A periodic orbit of minimal period `period`, starting at its smallest point.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    pub period: usize,
    pub points: Vec<f64>,
    /// `|T^n(x₀) − x₀|`, measured on the circle.
    pub closure_residual: f64,
}

fn checked_count(base: usize, n: usize) -> Result<u128> {
    let mut count: u128 = 1;
    for _ in 0..n {
        count = count.saturating_mul(base as u128);
        if count > ENUMERATION_LIMIT {
            return Err(Error::EnumerationOverflow {
                count,
                limit: ENUMERATION_LIMIT,
            });
        }
    }
    Ok(count)
}

/// Lift of `T^n` and its derivative.
fn iterated_lift(map: &AnalyticCircleMap, x: f64, n: usize) -> (f64, f64) {
    let (mut y, mut dy) = (x, 1.0);
    for _ in 0..n {
        dy *= map.lift_derivative(y);
        y = map.lift(y);
    }
    (y, dy)
}

/// Root of `F^n(x) − x − j` on `[0, 1)`, which is unique since the lift is
/// monotone with slope above one.
fn newton_periodic(map: &AnalyticCircleMap, n: usize, j: f64, seed: f64) -> Result<f64> {
    let scale = (f64::from(map.degree)).powi(n as i32);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x = seed.clamp(0.0, 1.0);
    let mut residual = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let (fx, dfx) = iterated_lift(map, x, n);
        residual = fx - x - j;
        if residual.abs() <= 4.0 * f64::EPSILON * scale.max(1.0) {
            return Ok(x);
        }
        if residual > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = dfx - 1.0;
        let mut step = residual / slope;
        if dfx.abs() < DAMPING_THRESHOLD {
            step *= 0.5;
        }
        let mut next = x - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == x {
            return Ok(x);
        }
        x = next;
    }
    if residual.abs() <= 1e-12 * scale.max(1.0) {
        return Ok(x);
    }
    Err(Error::NewtonDivergence {
        target: j,
        residual: residual.abs(),
    })
}

fn circle_periodic_points(map: &AnalyticCircleMap, n: usize) -> Result<Vec<PeriodicOrbit>> {
    if n == 0 {
        return Err(Error::InvalidParameter("period must be at least 1".into()));
    }
    let total = checked_count(map.degree as usize, n)? - 1;
    let denom = total as f64;
    let mut points: Vec<f64> = (0..total).map(|j| j as f64 / denom).collect();
    if map.eps != 0.0 {
        // Continue the ε = 0 solutions along ε in small steps.
        let steps = (map.eps.abs() / 0.01).ceil().max(1.0) as usize;
        for s in 1..=steps {
            let stage = AnalyticCircleMap {
                degree: map.degree,
                eps: map.eps * s as f64 / steps as f64,
            };
            for (j, x) in points.iter_mut().enumerate() {
                *x = newton_periodic(&stage, n, j as f64, *x)?;
            }
        }
    }
    group_orbits(map, points, n)
}

fn beta_periodic_points(map: &BetaTransformation, n: usize) -> Result<Vec<PeriodicOrbit>> {
    if n == 0 {
        return Err(Error::InvalidParameter("period must be at least 1".into()));
    }
    let digits = map.pieces();
    let words = checked_count(digits, n)? as usize;
    let beta = map.beta;
    let denom = beta.powi(n as i32) - 1.0;
    let mut word = vec![0usize; n];
    let mut points = Vec::new();
    for code in 0..words {
        let mut c = code;
        for d in word.iter_mut() {
            *d = c % digits;
            c /= digits;
        }
        // x_r is the fixed point of the word rotated by r; all must lie in [0, 1).
        let rotated = |r: usize| -> f64 {
            let mut acc = 0.0;
            for i in 0..n {
                acc = acc * beta + word[(r + i) % n] as f64;
            }
            acc / denom
        };
        let admissible = (0..n).all(|r| {
            let x = rotated(r);
            (-1e-13..1.0 - 1e-13).contains(&x)
        });
        if admissible {
            points.push(rotated(0).max(0.0));
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    points.dedup_by(|a, b| (*a - *b).abs() < ORBIT_MERGE_TOLERANCE);
    group_orbits(map, points, n)
}

/// Split the solutions of `T^n x = x` into orbits of minimal period.
fn group_orbits(map: &dyn IntervalMap, mut points: Vec<f64>, n: usize) -> Result<Vec<PeriodicOrbit>> {
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let nearest = |y: f64| -> usize {
        let idx = points.partition_point(|&p| p < y);
        let candidates = [idx.saturating_sub(1), idx.min(points.len() - 1), 0, points.len() - 1];
        *candidates
            .iter()
            .min_by(|&&a, &&b| {
                circle_distance(points[a], y)
                    .partial_cmp(&circle_distance(points[b], y))
                    .expect("finite")
            })
            .expect("non-empty")
    };
    let mut used = vec![false; points.len()];
    let mut orbits = Vec::new();
    for start in 0..points.len() {
        if used[start] {
            continue;
        }
        let x0 = points[start];
        used[start] = true;
        let mut orbit = vec![x0];
        let mut y = map.evaluate(x0);
        while circle_distance(y, x0) > ORBIT_MERGE_TOLERANCE && orbit.len() < n {
            let idx = nearest(y);
            used[idx] = true;
            orbit.push(points[idx]);
            y = map.evaluate(points[idx]);
        }
        let closure_residual = circle_distance(map.iterate(x0, orbit.len()), x0);
        if closure_residual > CLOSURE_TOLERANCE {
            return Err(Error::NewtonDivergence {
                target: x0,
                residual: closure_residual,
            });
        }
        orbits.push(PeriodicOrbit {
            period: orbit.len(),
            points: orbit,
            closure_residual,
        });
    }
    Ok(orbits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parry_density_golden_two_levels() {
        let b = BetaTransformation::golden();
        let p = b.parry_density(64);
        assert!((p.eval(0.3) - 1.1708).abs() < 1e-4);
        assert!((p.eval(0.9) - 0.7236).abs() < 1e-4);
        assert!((p.average(0.0, 1.0) - 1.0).abs() < 1e-14);
        let cut = 1.0 / b.beta();
        let mixed = p.average(cut - 0.1, cut + 0.1);
        assert!((mixed - 0.5 * (p.eval(0.3) + p.eval(0.9))).abs() < 1e-12);
        let two = BetaTransformation::new(2.0).unwrap().parry_density(64);
        assert_eq!(two.eval(0.7), 1.0);
    }

    #[test]
    fn parry_density_generic_beta_is_normalized() {
        let p = BetaTransformation::new(2.37).unwrap().parry_density(200);
        let n = 20_000;
        let integral: f64 = (0..n).map(|i| p.eval((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
        assert!((integral - 1.0).abs() < 1e-3);
        assert!(p.eval(0.999) >= 1.0 - 1.0 / 2.37 - 1e-12);
    }
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn evaluate_examples() {
        let d = AnalyticCircleMap::doubling();
        assert!((d.evaluate(0.3) - 0.6).abs() < 1e-15);
        let b = BetaTransformation::new(2.5).unwrap();
        assert!((b.evaluate(0.9) - 0.25).abs() < 1e-15);
        let t = TsujiiSkewProduct::new(3).unwrap();
        let p = t.evaluate([0.25, 0.1]);
        assert!((p[0] - 0.75).abs() < 1e-15);
        assert!((p[1] - 0.1).abs() < 1e-14);
    }

    #[test]
    fn beta_endpoint_is_right_continuous() {
        let b = BetaTransformation::new(2.5).unwrap();
        assert!((b.evaluate(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn inverse_branch_examples() {
        let d = AnalyticCircleMap::doubling();
        let br = d.inverse_branches(0.5).unwrap();
        assert_eq!(br.len(), 2);
        assert!((br[0].point - 0.25).abs() < 1e-15 && br[0].derivative == 2.0);
        assert!((br[1].point - 0.75).abs() < 1e-15 && br[1].derivative == 2.0);

        let b = BetaTransformation::new(2.5).unwrap();
        let br = b.inverse_branches(0.9).unwrap();
        assert_eq!(br.len(), 2);
        assert!((br[0].point - 0.36).abs() < 1e-15);
        assert!((br[1].point - 0.76).abs() < 1e-15);
        assert!(br.iter().all(|b| b.derivative == 2.5));

        let c = AnalyticCircleMap::new(2, 0.05).unwrap();
        let br = c.inverse_branches(0.4).unwrap();
        assert_eq!(br.len(), 2);
        for b in br {
            assert!(circle_distance(c.evaluate(b.point), 0.4) <= 1e-13);
        }
    }

    #[test]
    fn rejects_non_expanding_parameters() {
        assert!(AnalyticCircleMap::new(2, 0.2).is_err());
        assert!(AnalyticCircleMap::new(1, 0.0).is_err());
        assert!(BetaTransformation::new(1.0).is_err());
        assert!(TsujiiSkewProduct::new(1).is_err());
    }

    #[test]
    fn branch_completeness_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let maps: Vec<Box<dyn IntervalMap>> = vec![
            Box::new(AnalyticCircleMap::new(2, 0.05).unwrap()),
            Box::new(AnalyticCircleMap::new(3, -0.2).unwrap()),
            Box::new(BetaTransformation::golden()),
            Box::new(BetaTransformation::new(2.5).unwrap()),
        ];
        for map in &maps {
            for _ in 0..200 {
                let x: f64 = rng.random();
                let branches = map.inverse_branches(x).unwrap();
                assert!(!branches.is_empty());
                assert!(branches.windows(2).all(|w| w[0].point < w[1].point));
                for b in branches {
                    let d = if map.is_circle() {
                        circle_distance(map.evaluate(b.point), x)
                    } else {
                        (map.evaluate(b.point) - x).abs()
                    };
                    assert!(d <= 1e-12, "{} at {x}: {d:e}", map.label());
                }
            }
        }
        let t = TsujiiSkewProduct::new(3).unwrap();
        for _ in 0..200 {
            let p = [rng.random::<f64>(), rng.random::<f64>()];
            let branches = t.inverse_branches(p);
            assert_eq!(branches.len(), 3);
            for b in branches {
                let q = t.evaluate(b.point);
                assert!(circle_distance(q[0], p[0]) <= 1e-12);
                assert!(circle_distance(q[1], p[1]) <= 1e-12);
                assert!((b.derivative.determinant() - 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn beta_branch_measure_sums_to_one() {
        // Each preimage branch carries density 1/β, so integrating the branch
        // count over [0, 1] and dividing by β must give 1.
        for beta in [
            BetaTransformation::golden(),
            BetaTransformation::new(2.5).unwrap(),
            BetaTransformation::new(3.0).unwrap(),
        ] {
            let grid = 1 << 20;
            let total: f64 = (0..grid)
                .map(|i| {
                    let x = (i as f64 + 0.5) / grid as f64;
                    beta.inverse_branches(x).unwrap().len() as f64 / beta.beta()
                })
                .sum::<f64>()
                / grid as f64;
            assert!((total - 1.0).abs() < 1e-5, "beta {} total {total}", beta.beta());
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = AnalyticCircleMap::new(3, 0.1).unwrap();
        let t = TsujiiSkewProduct::new(4).unwrap();
        let h = 1e-6;
        for _ in 0..100 {
            let x: f64 = rng.random_range(0.01..0.99);
            let fd = (c.lift(x + h) - c.lift(x - h)) / (2.0 * h);
            assert!((fd - c.lift_derivative(x)).abs() < 1e-6);

            let p = [x, rng.random::<f64>()];
            let m = f64::from(t.m());
            let raw = |q: [f64; 2]| [m * q[0], q[1] + m * (2.0 * PI * q[0]).cos()];
            let d = t.derivative(p);
            for col in 0..2 {
                let mut plus = p;
                let mut minus = p;
                plus[col] += h;
                minus[col] -= h;
                let (a, b) = (raw(plus), raw(minus));
                for row in 0..2 {
                    let fd = (a[row] - b[row]) / (2.0 * h);
                    assert!((fd - d[(row, col)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn doubling_period_two() {
        let orbits = MapModel::Circle(AnalyticCircleMap::doubling())
            .periodic_points(2)
            .unwrap();
        assert_eq!(orbits.len(), 2);
        assert_eq!(orbits[0].period, 1);
        assert_eq!(orbits[0].points, vec![0.0]);
        assert_eq!(orbits[1].period, 2);
        assert!((orbits[1].points[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((orbits[1].points[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tripling_fixed_points() {
        let orbits = MapModel::Circle(AnalyticCircleMap::new(3, 0.0).unwrap())
            .periodic_points(1)
            .unwrap();
        let pts: Vec<f64> = orbits.iter().map(|o| o.points[0]).collect();
        assert_eq!(pts, vec![0.0, 0.5]);
    }

    #[test]
    fn perturbed_period_three() {
        let map = AnalyticCircleMap::new(2, 0.05).unwrap();
        let orbits = MapModel::Circle(map).periodic_points(3).unwrap();
        let total: usize = orbits.iter().map(|o| o.period).sum();
        assert_eq!(total, 7);
        for o in &orbits {
            for &x in &o.points {
                assert!(circle_distance(map.iterate(x, 3), x) <= 1e-12);
            }
        }
        // fixed point 0 plus two 3-cycles
        assert_eq!(orbits.iter().filter(|o| o.period == 3).count(), 2);
    }

    #[test]
    fn periodic_point_counts_unperturbed() {
        for (k, n) in [(2u32, 5usize), (3, 3), (4, 2)] {
            let orbits = MapModel::Circle(AnalyticCircleMap::new(k, 0.0).unwrap())
                .periodic_points(n)
                .unwrap();
            let total: usize = orbits.iter().map(|o| o.period).sum();
            assert_eq!(total, (k as usize).pow(n as u32) - 1);
            assert!(orbits.iter().all(|o| n % o.period == 0));
        }
    }

    #[test]
    fn golden_beta_periodic_points() {
        let b = BetaTransformation::golden();
        let orbits = MapModel::Beta(b).periodic_points(2).unwrap();
        assert!(orbits.iter().any(|o| o.period == 1 && o.points[0] == 0.0));
        for o in &orbits {
            assert!(o.closure_residual <= CLOSURE_TOLERANCE);
        }
    }

    #[test]
    fn enumeration_guard() {
        let err = MapModel::Circle(AnalyticCircleMap::doubling())
            .periodic_points(21)
            .unwrap_err();
        assert!(matches!(err, Error::EnumerationOverflow { .. }));
    }

    #[test]
    fn spec_round_trip() {
        let spec: MapSpec = serde_json::from_str(r#"{"type": "circle", "k": 2, "eps": 0.05}"#).unwrap();
        let model = MapModel::from_spec(&spec).unwrap();
        assert_eq!(model.spec(), spec);
        let spec: MapSpec = serde_json::from_str(r#"{"type": "tsujii", "m": 5}"#).unwrap();
        assert!(matches!(MapModel::from_spec(&spec).unwrap(), MapModel::Tsujii(_)));
        assert!(serde_json::from_str::<MapSpec>(r#"{"type": "beta", "b": 2}"#).is_err());
    }
}
