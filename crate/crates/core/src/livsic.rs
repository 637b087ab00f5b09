//! Coboundary detection and recovery of the transfer function.
//!
//! For `f = h∘T − h` the twisted operator satisfies `L_t(e^{ith}χ) = e^{ith}χ`,
//! so `λ(t) ≡ 1` on real `t`. Differentiating `χ_t = c(t)e^{ith}χ` at zero
//! gives `χ′₀ = c′(0)χ + ihχ`, hence `h = −iχ′₀/χ` up to a constant.

use std::fmt;

use log::{debug, info};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, FunctionRep};
use crate::error::{Error, Result};
use crate::linalg::{condition_1norm, gmres, inverse, norm, to_dvector, CMat};
use crate::maps::{MapModel, PeriodicOrbit};
use crate::spectral::{PerturbedEigenData, TwistedFamily, CONDITION_LIMIT};
use crate::transfer::OperatorStorage;

/// `χ` at or below this on the sample grid cannot be divided by.
pub const DENSITY_FLOOR: f64 = 1e-6;
/// Sample points used for cocycle residuals.
pub const RESIDUAL_SAMPLES: usize = 512;
/// Default radius and node count of the derivative contour in `t`.
pub const DERIVATIVE_RADIUS: f64 = 1e-2;
pub const DERIVATIVE_NODES: usize = 16;

const GMRES_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexValue {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl ComplexValue {
    pub fn norm(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Verdict thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub drift: f64,
    pub variance: f64,
    pub lambda: f64,
}

impl Tolerances {
    pub const FOURIER: Self = Self {
        drift: 1e-8,
        variance: 1e-6,
        lambda: 1e-6,
    };

    /// Fourier thresholds, or `1/√N` for every quantity on an Ulam basis.
    pub fn for_basis(basis: BasisSpec) -> Self {
        match basis {
            BasisSpec::Fourier(_) => Self::FOURIER,
            BasisSpec::Ulam(n) => {
                let tau = 1.0 / (n as f64).sqrt();
                Self {
                    drift: tau,
                    variance: tau,
                    lambda: tau,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Coboundary,
    NotCoboundary,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Coboundary => "Coboundary",
            Self::NotCoboundary => "NotCoboundary",
            Self::Inconclusive => "Inconclusive",
        };
        f.write_str(s)
    }
}

/// Coboundary if every diagnostic is within tolerance, NotCoboundary if
/// one of them exceeds ten times its tolerance.
pub fn classify(drift: f64, variance: f64, lambda_deviation: f64, tol: &Tolerances) -> Verdict {
    let pairs = [
        (drift, tol.drift),
        (variance, tol.variance),
        (lambda_deviation, tol.lambda),
    ];
    if pairs.iter().all(|&(v, t)| v <= t) {
        Verdict::Coboundary
    } else if pairs.iter().any(|&(v, t)| v > 10.0 * t) {
        Verdict::NotCoboundary
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoboundaryReport {
    pub drift: ComplexValue,
    /// `−Re λ″(0)`.
    pub variance: f64,
    pub lambda_deviation: f64,
    /// Largest `|t|` of the grid at which the projection was admissible.
    pub working_t_max: f64,
    pub periodic_obstruction: Option<f64>,
    /// CSV of the basis representation.
    pub recovered_h: Option<String>,
    pub cocycle_residual: Option<f64>,
    pub verdict: Verdict,
    pub tolerances: Tolerances,
}

impl CoboundaryReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `n` equispaced points on `[−t_max, t_max]`.
pub fn symmetric_grid(t_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|j| -t_max + 2.0 * t_max * j as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn is_contour_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::WrongEnclosedCount { .. } | Error::ContourCrossesSpectrum { .. } | Error::ProjectionKilledChi { .. }
    )
}

/// λ along the grid, restricted to the largest symmetric window in which
/// every point is admissible.
#[derive(Debug, Clone)]
pub struct LambdaScan {
    pub points: Vec<PerturbedEigenData>,
    pub working_t_max: f64,
    pub max_deviation: f64,
}

pub fn scan_lambda(family: &TwistedFamily, t_grid: &[f64]) -> Result<LambdaScan> {
    let results = family.lambda_curve(t_grid);
    let mut first_bad = f64::INFINITY;
    for (t, r) in t_grid.iter().zip(&results) {
        if let Err(e) = r {
            if !is_contour_failure(e) {
                return Err(e.clone());
            }
            first_bad = first_bad.min(t.abs());
        }
    }
    let mut points = Vec::new();
    let mut working_t_max: f64 = 0.0;
    for (t, r) in t_grid.iter().zip(results) {
        if t.abs() < first_bad {
            if let Ok(d) = r {
                working_t_max = working_t_max.max(t.abs());
                points.push(d);
            }
        }
    }
    if first_bad.is_finite() {
        info!("t-grid clipped to |t| <= {working_t_max}");
    }
    let max_deviation = points.iter().map(|d| (d.lambda - 1.0).norm()).fold(0.0, f64::max);
    Ok(LambdaScan {
        points,
        working_t_max,
        max_deviation,
    })
}

/// Drift, variance and λ-curve verdict for the family's observable.
pub fn detect_with(family: &TwistedFamily, t_grid: &[f64], tolerances: &Tolerances) -> Result<CoboundaryReport> {
    detect_scanned(family, t_grid, tolerances).map(|(report, _)| report)
}

/// [`detect_with`], also returning the λ-curve it was based on.
pub fn detect_scanned(
    family: &TwistedFamily,
    t_grid: &[f64],
    tolerances: &Tolerances,
) -> Result<(CoboundaryReport, LambdaScan)> {
    let chi = family.density();
    let drift = family.observable().multiply(chi)?.integrate();
    let derivatives = family.derivatives_at_zero(DERIVATIVE_RADIUS, DERIVATIVE_NODES)?;
    let variance = -derivatives.lambda_second.re;
    let scan = scan_lambda(family, t_grid)?;
    let verdict = classify(drift.norm(), variance.abs(), scan.max_deviation, tolerances);
    debug!(
        "drift {drift}, variance {variance:e}, lambda deviation {:e}",
        scan.max_deviation
    );
    let report = CoboundaryReport {
        drift: drift.into(),
        variance,
        lambda_deviation: scan.max_deviation,
        working_t_max: scan.working_t_max,
        periodic_obstruction: None,
        recovered_h: None,
        cocycle_residual: None,
        verdict,
        tolerances: *tolerances,
    };
    Ok((report, scan))
}

pub fn detect(
    map: &MapModel,
    f: &FunctionRep,
    basis: BasisSpec,
    t_grid: &[f64],
    tolerances: &Tolerances,
) -> Result<CoboundaryReport> {
    detect_with(&TwistedFamily::new(map, basis, f)?, t_grid, tolerances)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecoveryMethod {
    Cauchy,
    Resolvent,
}

impl std::str::FromStr for RecoveryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cauchy" => Ok(Self::Cauchy),
            "resolvent" => Ok(Self::Resolvent),
            other => Err(Error::InvalidParameter(format!("unknown recovery method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualKind {
    /// Sup of `|h∘T − h − f|` over the sample grid.
    Sup,
    /// Mean over cells of the cell average of `h∘T − h − f`.
    CellAveraged,
}

#[derive(Debug, Clone)]
pub struct Recovery {
    pub h: FunctionRep,
    pub residual: f64,
    pub residual_kind: ResidualKind,
    pub method: RecoveryMethod,
    /// Imaginary part discarded when taking the real transfer function.
    pub imaginary_defect: f64,
}

fn min_density(chi: &FunctionRep) -> f64 {
    match chi.basis() {
        BasisSpec::Fourier(_) => sample_grid(RESIDUAL_SAMPLES)
            .into_iter()
            .map(|x| chi.eval(x).re)
            .fold(f64::INFINITY, f64::min),
        BasisSpec::Ulam(_) => chi.as_slice().iter().map(|c| c.re).fold(f64::INFINITY, f64::min),
    }
}

/// `(j + ½)/n`, `j < n`.
pub fn sample_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect()
}

/// Subtract the constant making `∫hχ = 0`.
pub fn normalize_transfer_function(h: &FunctionRep, chi: &FunctionRep) -> Result<FunctionRep> {
    let mean = h.multiply(chi)?.integrate() / chi.integrate();
    Ok(h.add_constant(-mean))
}

fn finish(h_complex: FunctionRep, family: &TwistedFamily, method: RecoveryMethod) -> Result<Recovery> {
    let chi = family.density();
    let h = normalize_transfer_function(&h_complex, chi)?;
    let imaginary_defect = h.real_defect();
    let h = h.real_part();
    let map = family.map();
    let f = family.observable();
    let (residual, residual_kind) = match h.basis() {
        BasisSpec::Fourier(_) => (verify(map, f, &h, RESIDUAL_SAMPLES)?.max, ResidualKind::Sup),
        BasisSpec::Ulam(_) => (cell_averaged_residual(map, f, &h, 32)?, ResidualKind::CellAveraged),
    };
    Ok(Recovery {
        h,
        residual,
        residual_kind,
        method,
        imaginary_defect,
    })
}

pub fn recover_with(family: &TwistedFamily, method: RecoveryMethod) -> Result<Recovery> {
    let chi = family.density();
    let min = min_density(chi);
    if min <= DENSITY_FLOOR {
        return Err(Error::DensityVanishes { min });
    }
    let minus_i = Complex64::new(0.0, -1.0);
    let v = match method {
        RecoveryMethod::Cauchy => {
            family
                .derivatives_at_zero(DERIVATIVE_RADIUS, DERIVATIVE_NODES)?
                .chi_prime
        }
        RecoveryMethod::Resolvent => resolvent_derivative(family)?,
    };
    let h = v.divide(chi)?.scale(minus_i);
    finish(h, family, method)
}

pub fn recover(map: &MapModel, f: &FunctionRep, basis: BasisSpec, method: RecoveryMethod) -> Result<Recovery> {
    recover_with(&TwistedFamily::new(map, basis, f)?, method)
}

/// Solve `(I − L + χ⊗∫) v = Q(iL(fχ))`, `Q = I − χ⊗∫`, which is `χ′₀`
/// modulo `span(χ)` when `λ′(0) = 0`.
fn resolvent_derivative(family: &TwistedFamily) -> Result<FunctionRep> {
    let basis = family.basis();
    let chi = family.density();
    let plain = family.plain();
    let i = Complex64::new(0.0, 1.0);
    let fchi = family.observable().multiply(chi)?;
    let mut rhs: Vec<Complex64> = plain.apply(fchi.as_slice()).into_iter().map(|v| i * v).collect();
    let rhs_mean = FunctionRep::from_vector(basis, rhs.clone(), false).integrate();
    for (r, c) in rhs.iter_mut().zip(chi.as_slice()) {
        *r -= rhs_mean * c;
    }
    let weights = integral_weights(basis);
    let solution = match plain.storage() {
        OperatorStorage::Dense(a) => {
            let n = a.nrows();
            let mut m = CMat::identity(n, n) - a;
            for r in 0..n {
                for c in 0..n {
                    m[(r, c)] += chi.as_slice()[r] * weights[c];
                }
            }
            let inverse = inverse(&m).ok_or(Error::SingularResolvent {
                condition: f64::INFINITY,
            })?;
            let condition = condition_1norm(&m, &inverse);
            if condition > CONDITION_LIMIT {
                return Err(Error::SingularResolvent { condition });
            }
            (inverse * to_dvector(&rhs)).iter().copied().collect()
        }
        OperatorStorage::Sparse(_) => {
            let apply = |x: &[Complex64]| -> Vec<Complex64> {
                let lx = plain.apply(x);
                let integral: Complex64 = x.iter().zip(&weights).map(|(a, w)| a * w).sum();
                x.iter()
                    .zip(lx)
                    .zip(chi.as_slice())
                    .map(|((a, l), c)| a - l + integral * c)
                    .collect()
            };
            let out = gmres(&apply, &rhs, GMRES_TOLERANCE, 80, 200);
            if out.relative_residual > 1e-10 {
                // No condition estimate is available matrix-free; report
                // the inverse of the achieved residual instead.
                return Err(Error::SingularResolvent {
                    condition: 1.0 / out.relative_residual,
                });
            }
            debug!(
                "resolvent GMRES: {} iterations, residual {:e}",
                out.iterations, out.relative_residual
            );
            out.solution
        }
    };
    debug!("resolvent solution norm {}", norm(&solution));
    Ok(FunctionRep::from_vector(basis, solution, false))
}

fn integral_weights(basis: BasisSpec) -> Vec<Complex64> {
    let mut w = vec![Complex64::new(0.0, 0.0); basis.dim()];
    match basis {
        BasisSpec::Fourier(order) => w[order] = Complex64::new(1.0, 0.0),
        BasisSpec::Ulam(n) => w.iter_mut().for_each(|x| *x = Complex64::new(1.0 / n as f64, 0.0)),
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualStats {
    pub max: f64,
    pub mean: f64,
}

fn interval(map: &MapModel) -> Result<&dyn crate::maps::IntervalMap> {
    map.as_interval()
        .ok_or_else(|| Error::InvalidParameter(format!("{} is not one-dimensional", map.label())))
}

/// `|h(Tx) − h(x) − f(x)|` over `samples` midpoints.
pub fn verify(map: &MapModel, f: &FunctionRep, h: &FunctionRep, samples: usize) -> Result<ResidualStats> {
    let t = interval(map)?;
    let xs = sample_grid(samples.max(1));
    let r: Vec<f64> = xs
        .iter()
        .map(|&x| (h.eval(t.evaluate(x)) - h.eval(x) - f.eval(x)).norm())
        .collect();
    Ok(ResidualStats {
        max: r.iter().copied().fold(0.0, f64::max),
        mean: r.iter().sum::<f64>() / r.len() as f64,
    })
}

/// Mean over cells of `|avg_cell(h∘T) − h − f|`, each cell average taken
/// from `sub` samples.
pub fn cell_averaged_residual(map: &MapModel, f: &FunctionRep, h: &FunctionRep, sub: usize) -> Result<f64> {
    let t = interval(map)?;
    let BasisSpec::Ulam(cells) = h.basis() else {
        return Err(Error::BasisMismatch(
            "cell-averaged residual needs an Ulam basis".into(),
        ));
    };
    let total: f64 = (0..cells)
        .map(|i| {
            let avg = (0..sub)
                .map(|j| {
                    let x = (i as f64 + (j as f64 + 0.5) / sub as f64) / cells as f64;
                    h.eval(t.evaluate(x)) - h.eval(x) - f.eval(x)
                })
                .sum::<Complex64>()
                / sub as f64;
            avg.norm()
        })
        .sum();
    Ok(total / cells as f64)
}

/// Projection of `h∘T − h` onto `basis`. Ulam cells are averaged over 64
/// samples.
pub fn coboundary(map: &MapModel, basis: BasisSpec, h: impl Fn(f64) -> f64) -> Result<FunctionRep> {
    let t = interval(map)?;
    Ok(FunctionRep::project_real_averaged(
        basis,
        |x| h(t.evaluate(x)) - h(x),
        64,
    ))
}

#[derive(Debug, Clone)]
pub struct PeriodicObstructions {
    /// Each orbit with its Birkhoff sum `Σ_{k<n} f(T^k x₀)`.
    pub orbits: Vec<(PeriodicOrbit, f64)>,
    pub max_abs: f64,
    /// Set for piecewise-constant observables, whose values at orbit
    /// points are not determined by an a.e. identity.
    pub heuristic: bool,
}

pub fn periodic_obstructions(map: &MapModel, f: &FunctionRep, n_max: usize) -> Result<PeriodicObstructions> {
    let mut orbits = Vec::new();
    for n in 1..=n_max {
        for orbit in map.periodic_points(n)?.into_iter().filter(|o| o.period == n) {
            let sum: f64 = orbit.points.iter().map(|&x| f.eval(x).re).sum();
            orbits.push((orbit, sum));
        }
    }
    let max_abs = orbits.iter().map(|(_, s)| s.abs()).fold(0.0, f64::max);
    Ok(PeriodicObstructions {
        orbits,
        max_abs,
        heuristic: matches!(f.basis(), BasisSpec::Ulam(_)),
    })
}

/// Relative spread of `e^{−ith}χ_t / χ` over `samples` points; zero when
/// `χ_t` is proportional to `e^{ith}χ`.
pub fn proportionality_defect(
    chi_t: &FunctionRep,
    h: impl Fn(f64) -> f64,
    t: f64,
    chi: &FunctionRep,
    samples: usize,
) -> f64 {
    let ratios: Vec<Complex64> = sample_grid(samples)
        .into_iter()
        .map(|x| chi_t.eval(x) * Complex64::new(0.0, -t * h(x)).exp() / chi.eval(x))
        .collect();
    let mean = ratios.iter().sum::<Complex64>() / samples as f64;
    let var = ratios.iter().map(|r| (r - mean).norm_sqr()).sum::<f64>() / samples as f64;
    var.sqrt() / mean.norm()
}
