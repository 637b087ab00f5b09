//! s-virtual-expansion criterion for torus skew products.
//!
//! For a point `x` and unit covector `v` the criterion sums, over all inverse
//! branches `y` of `Tⁿ`, the quantity `|JTⁿ(y)|⁻¹ w(y, v)^s`, where `w` is a
//! cotangent contraction weight. The map is virtually expanding when the
//! supremum over `(x, v)` is below one.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use log::{debug, info};
use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::Rep2D;
use crate::error::{Error, Result};
use crate::maps::{IntervalMap, MapModel, TsujiiSkewProduct};

/// Largest number of branch words enumerated.
pub const BRANCH_LIMIT: u128 = 1_000_000;
/// Positive certificates need a margin above the sup-estimation drift.
pub const CERTIFICATE_MARGIN: f64 = 1e-3;
pub const MIN_RESOLUTION: usize = 64;
pub const DEFAULT_RESOLUTION: usize = 256;

const GOLDEN_ITERATIONS: usize = 40;
/// Half-width of the golden-section bracket around a branch peak.
const PEAK_BRACKET: f64 = PI / 2048.0;
/// Branch words whose peak direction is added to the angle grid.
const PEAK_CANDIDATES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightVariant {
    /// `‖((DTⁿ)ᵀ)⁻¹ v‖ / ‖v‖`.
    Printed,
    /// `‖v‖ / ‖(DTⁿ)ᵀ v‖`.
    ReciprocalPullback,
}

impl WeightVariant {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Printed => "printed",
            Self::ReciprocalPullback => "reciprocal-pullback",
        }
    }
}

impl fmt::Display for WeightVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "printed" => Ok(Self::Printed),
            "reciprocal" | "reciprocal-pullback" => Ok(Self::ReciprocalPullback),
            other => Err(Error::InvalidParameter(format!("unknown weight variant {other:?}"))),
        }
    }
}

/// Map on which the criterion is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum CriterionMap {
    Skew(TsujiiSkewProduct),
    /// One-dimensional map; derivatives are scalars, so the covector plays
    /// no role.
    Conformal(MapModel),
}

impl CriterionMap {
    pub fn from_model(map: &MapModel) -> Self {
        match map {
            MapModel::Tsujii(t) => Self::Skew(*t),
            other => Self::Conformal(*other),
        }
    }

    fn branch_count(&self) -> usize {
        match self {
            Self::Skew(t) => t.m() as usize,
            Self::Conformal(m) => m.as_interval().map_or(1, |i| i.max_branches()),
        }
    }

    pub fn skew_m(&self) -> Option<u32> {
        match self {
            Self::Skew(t) => Some(t.m()),
            Self::Conformal(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionQuery {
    pub map: CriterionMap,
    pub s: f64,
    pub n: usize,
    pub x_resolution: usize,
    pub angle_resolution: usize,
    pub variant: WeightVariant,
}

impl CriterionQuery {
    pub fn new(map: CriterionMap, s: f64, n: usize, variant: WeightVariant) -> Self {
        Self {
            map,
            s,
            n,
            x_resolution: DEFAULT_RESOLUTION,
            angle_resolution: DEFAULT_RESOLUTION,
            variant,
        }
    }

    pub fn with_resolution(mut self, x: usize, angle: usize) -> Self {
        self.x_resolution = x;
        self.angle_resolution = angle;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "exponent s must be positive, got {}",
                self.s
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("word length n must be at least 1".into()));
        }
        if self.x_resolution < MIN_RESOLUTION || self.angle_resolution < MIN_RESOLUTION {
            return Err(Error::InvalidParameter(format!(
                "grid resolutions must be at least {MIN_RESOLUTION}"
            )));
        }
        let mut count: u128 = 1;
        for _ in 0..self.n {
            count = count.saturating_mul(self.map.branch_count() as u128);
        }
        if count > BRANCH_LIMIT {
            return Err(Error::BranchExplosion {
                count,
                limit: BRANCH_LIMIT,
            });
        }
        Ok(())
    }
}

/// One inverse branch of `Tⁿ` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchWord {
    /// Base coordinate of the deepest preimage.
    pub x: f64,
    /// `D_yTⁿ`.
    pub derivative: Matrix2<f64>,
    /// `|JTⁿ(y)|`.
    pub jacobian: f64,
}

/// All inverse branches of `Tⁿ` over the base point `x`. The fibre
/// coordinate does not enter the derivative.
pub fn skew_branch_words(map: &TsujiiSkewProduct, x: f64, n: usize) -> Vec<BranchWord> {
    let m = f64::from(map.m());
    let mut words = vec![BranchWord {
        x,
        derivative: Matrix2::identity(),
        jacobian: 1.0,
    }];
    for _ in 0..n {
        let mut next = Vec::with_capacity(words.len() * map.m() as usize);
        for w in &words {
            for j in 0..map.m() {
                let z = (w.x + f64::from(j)) / m;
                next.push(BranchWord {
                    x: z,
                    derivative: w.derivative * map.derivative([z, 0.0]),
                    jacobian: w.jacobian * m,
                });
            }
        }
        words = next;
    }
    words
}

/// `(y, |(Tⁿ)′(y)|)` for all `y` with `Tⁿy = x`.
pub fn interval_branch_words(map: &dyn IntervalMap, x: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    let mut words = vec![(x, 1.0)];
    for _ in 0..n {
        let mut next = Vec::new();
        for &(p, d) in &words {
            for b in map.inverse_branches(p)? {
                next.push((b.point, d * b.derivative));
            }
        }
        words = next;
    }
    Ok(words)
}

/// Per-branch data at one base point, prepared for fast covector sweeps.
#[derive(Debug, Clone)]
struct PointData {
    /// `(Dᵀ or (Dᵀ)⁻¹, |J|⁻¹)` for the skew product.
    matrices: Vec<(Matrix2<f64>, f64)>,
    /// Covector angles at which the largest single-branch terms peak.
    peaks: Vec<f64>,
    /// Conformal value, independent of the covector.
    scalar: Option<f64>,
}

/// Angle of the covector maximizing one branch term, with the term's value
/// there.
fn branch_peak(op: &Matrix2<f64>, inv_jac: f64, s: f64, variant: WeightVariant) -> (f64, f64) {
    let g = op.transpose() * op;
    let (p, q, r) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
    let half = 0.5 * (p + r);
    let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    let top = half + rad;
    let bottom = op.determinant().powi(2) / top;
    let top_angle = 0.5 * (2.0 * q).atan2(p - r);
    match variant {
        WeightVariant::ReciprocalPullback => ((top_angle + 0.5 * PI).rem_euclid(PI), inv_jac * bottom.powf(-0.5 * s)),
        WeightVariant::Printed => (top_angle.rem_euclid(PI), inv_jac * top.powf(0.5 * s)),
    }
}

fn point_data(q: &CriterionQuery, x: f64) -> Result<PointData> {
    match &q.map {
        CriterionMap::Skew(t) => {
            let matrices = skew_branch_words(t, x, q.n)
                .into_iter()
                .map(|w| {
                    let dt = w.derivative.transpose();
                    let op = match q.variant {
                        WeightVariant::ReciprocalPullback => dt,
                        WeightVariant::Printed => dt.try_inverse().expect("triangular with nonzero diagonal"),
                    };
                    (op, 1.0 / w.jacobian)
                })
                .collect::<Vec<_>>();
            let mut ranked: Vec<(f64, f64)> = matrices
                .iter()
                .map(|(op, inv_jac)| branch_peak(op, *inv_jac, q.s, q.variant))
                .collect();
            ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite peak heights"));
            let peaks = ranked.into_iter().take(PEAK_CANDIDATES).map(|(a, _)| a).collect();
            Ok(PointData {
                matrices,
                peaks,
                scalar: None,
            })
        }
        CriterionMap::Conformal(model) => {
            let interval = model
                .as_interval()
                .ok_or_else(|| Error::InvalidParameter("conformal case needs a one-dimensional map".into()))?;
            // In one dimension both variants give the weight 1/|(Tⁿ)′|.
            let value = interval_branch_words(interval, x, q.n)?
                .into_iter()
                .map(|(_, d)| d.recip() * d.recip().powf(q.s))
                .sum();
            Ok(PointData {
                matrices: Vec::new(),
                peaks: Vec::new(),
                scalar: Some(value),
            })
        }
    }
}

fn covector_value(q: &CriterionQuery, data: &PointData, angle: f64) -> f64 {
    if let Some(v) = data.scalar {
        return v;
    }
    let v = Vector2::new(angle.cos(), angle.sin());
    let half_s = 0.5 * q.s;
    data.matrices
        .iter()
        .map(|(op, inv_jac)| {
            let u = op * v;
            let w2 = match q.variant {
                WeightVariant::ReciprocalPullback => 1.0 / u.norm_squared(),
                WeightVariant::Printed => u.norm_squared(),
            };
            inv_jac * w2.powf(half_s)
        })
        .sum()
}

/// Value of the criterion sum at one base point and covector angle.
pub fn value_at(q: &CriterionQuery, x: f64, angle: f64) -> Result<f64> {
    q.validate()?;
    Ok(covector_value(q, &point_data(q, x)?, angle))
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERATIONS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Estimated supremum of the criterion and where it is attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriterionValue {
    pub value: f64,
    pub x: f64,
    pub angle: f64,
}

/// Best covector angle at one base point over the angle grid and the
/// branch peak directions, the three best peaks polished by golden-section
/// search. Only the grid part depends on the resolution, so the value at a
/// given `x` never decreases when the grid is refined.
fn best_angle(q: &CriterionQuery, data: &PointData, na: usize) -> (f64, f64) {
    if let Some(v) = data.scalar {
        return (0.0, v);
    }
    let pick = |best: (f64, f64), c: (f64, f64)| if c.1 > best.1 { c } else { best };
    let mut peaks: Vec<(f64, f64)> = data.peaks.iter().map(|&a| (a, covector_value(q, data, a))).collect();
    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite criterion values"));
    let polished = peaks
        .iter()
        .take(3)
        .map(|&(a, _)| {
            let (ar, vr) = golden_max(|t| covector_value(q, data, t), a - PEAK_BRACKET, a + PEAK_BRACKET);
            (ar.rem_euclid(PI), vr)
        })
        .fold((0.0, f64::NEG_INFINITY), pick);
    let da = PI / na as f64;
    (0..na)
        .map(|k| k as f64 * da)
        .map(|a| (a, covector_value(q, data, a)))
        .chain(peaks)
        .fold(polished, pick)
}

/// Maximum over the `x` grid of the per-point angle optimum.
pub fn criterion_value(q: &CriterionQuery) -> Result<CriterionValue> {
    q.validate()?;
    let dx = 1.0 / q.x_resolution as f64;
    let rows = (0..q.x_resolution)
        .into_par_iter()
        .map(|i| -> Result<CriterionValue> {
            let x = i as f64 * dx;
            let (angle, value) = best_angle(q, &point_data(q, x)?, q.angle_resolution);
            Ok(CriterionValue { value, x, angle })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = rows
        .into_iter()
        .reduce(|b, c| if c.value > b.value { c } else { b })
        .expect("grid is non-empty");
    debug!("criterion n={} variant={}: {:?}", q.n, q.variant, best);
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub m: Option<u32>,
    pub s: f64,
    pub n: usize,
    pub variant: WeightVariant,
    pub value: f64,
    /// `1 − value`.
    pub margin: f64,
    pub x_star: f64,
    pub angle_star: f64,
    pub certified: bool,
}

impl Certificate {
    pub const CSV_HEADER: &'static str = "m,s,n,variant,value,margin,x_star,angle_star";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.m.map_or(String::new(), |m| m.to_string()),
            self.s,
            self.n,
            self.variant,
            self.value,
            self.margin,
            self.x_star,
            self.angle_star
        )
    }
}

/// Criterion value, re-evaluated at twice the resolution when it would
/// certify; the larger of the two is kept.
fn confirmed_value(q: &CriterionQuery) -> Result<CriterionValue> {
    let v = criterion_value(q)?;
    if 1.0 - v.value <= CERTIFICATE_MARGIN {
        return Ok(v);
    }
    let fine = criterion_value(&q.clone().with_resolution(2 * q.x_resolution, 2 * q.angle_resolution))?;
    Ok(if fine.value > v.value { fine } else { v })
}

/// Smallest `n ≤ n_max` whose criterion value is below one with margin above
/// `CERTIFICATE_MARGIN`, or a negative certificate with the best value seen.
pub fn certify(base: &CriterionQuery, n_max: usize) -> Result<Certificate> {
    let mut best: Option<Certificate> = None;
    for n in 1..=n_max.max(1) {
        let q = CriterionQuery { n, ..base.clone() };
        let v = confirmed_value(&q)?;
        let margin = 1.0 - v.value;
        let cert = Certificate {
            m: q.map.skew_m(),
            s: q.s,
            n,
            variant: q.variant,
            value: v.value,
            margin,
            x_star: v.x,
            angle_star: v.angle,
            certified: margin > CERTIFICATE_MARGIN,
        };
        if cert.certified {
            return Ok(cert);
        }
        if best.as_ref().is_none_or(|b| cert.value < b.value) {
            best = Some(cert);
        }
    }
    let cert = best.expect("at least one word length tried");
    if cert.variant == WeightVariant::Printed && cert.value >= 1.0 {
        info!(
            "printed weight variant stays at {:.6} >= 1 (covector angle {:.4})",
            cert.value, cert.angle_star
        );
    }
    Ok(cert)
}

/// First `m` in `m_range` whose skew product is certified at word length `n`.
pub fn min_expanding_m(
    s: f64,
    n: usize,
    m_range: impl IntoIterator<Item = u32>,
    variant: WeightVariant,
    resolution: (usize, usize),
) -> Result<(u32, Certificate)> {
    for m in m_range {
        let q = CriterionQuery::new(CriterionMap::Skew(TsujiiSkewProduct::new(m)?), s, n, variant)
            .with_resolution(resolution.0, resolution.1);
        let v = confirmed_value(&q)?;
        debug!("m = {m}: value {}", v.value);
        let margin = 1.0 - v.value;
        if margin > CERTIFICATE_MARGIN {
            return Ok((
                m,
                Certificate {
                    m: Some(m),
                    s,
                    n,
                    variant,
                    value: v.value,
                    margin,
                    x_star: v.x,
                    angle_star: v.angle,
                    certified: true,
                },
            ));
        }
    }
    Err(Error::NoneCertified)
}

/// Pointwise Jacobian-weighted transfer operator of the skew product,
/// `Σ_{Ty=p} φ(y)/|JT(y)|`.
pub fn skew_transfer_at(map: &TsujiiSkewProduct, phi: &Rep2D, p: [f64; 2]) -> Complex64 {
    map.inverse_branches(p)
        .iter()
        .map(|b| phi.eval(b.point[0], b.point[1]) / b.derivative.determinant().abs())
        .sum()
}

/// `|∫Lφ − ∫φ|`, with `Lφ` sampled on a `grid × grid` mesh and projected.
pub fn skew_integral_defect(map: &TsujiiSkewProduct, phi: &Rep2D, grid: usize) -> f64 {
    let (nx, ny) = phi.orders();
    let order = grid.max(4) / 4;
    let image = Rep2D::project(order.max(nx), order.max(ny), |x, y| skew_transfer_at(map, phi, [x, y]));
    (image.integrate() - phi.integrate()).norm()
}
