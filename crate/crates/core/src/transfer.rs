//! Finite-rank discretizations of the transfer operator and its twisted
//! family `φ ↦ L(e^{itf} φ)`.
//!
//! Circle maps are discretized in the Fourier basis by collocation: the
//! branch sum `Σ φ(y)/|T'(y)|` is evaluated on `2(2N+1)` nodes and
//! transformed back. β-transformations use the exact Ulam matrix built from
//! closed-form cell intersections, stored sparse.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::basis::{BasisSpec, FunctionRep};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CsrMatrix};
use crate::maps::{BetaTransformation, IntervalMap, MapModel};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Storage of an operator matrix acting on coefficient vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorStorage {
    Dense(CMat),
    Sparse(CsrMatrix),
}

/// A discretized transfer operator. Column `j` is the image of basis
/// element `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    basis: BasisSpec,
    storage: OperatorStorage,
    twist: Complex64,
    map_label: String,
    observable_label: Option<String>,
}

impl OperatorMatrix {
    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn twist(&self) -> Complex64 {
        self.twist
    }

    pub fn is_plain(&self) -> bool {
        self.twist == ZERO && self.observable_label.is_none()
    }

    pub fn map_label(&self) -> &str {
        &self.map_label
    }

    pub fn observable_label(&self) -> Option<&str> {
        self.observable_label.as_deref()
    }

    pub fn storage(&self) -> &OperatorStorage {
        &self.storage
    }

    pub fn as_dense(&self) -> Option<&CMat> {
        match &self.storage {
            OperatorStorage::Dense(m) => Some(m),
            OperatorStorage::Sparse(_) => None,
        }
    }

    pub fn to_dense(&self) -> CMat {
        match &self.storage {
            OperatorStorage::Dense(m) => m.clone(),
            OperatorStorage::Sparse(s) => s.to_dense(),
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        match &self.storage {
            OperatorStorage::Dense(m) => m[(row, col)],
            OperatorStorage::Sparse(s) => s.get(row, col),
        }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        match &self.storage {
            OperatorStorage::Dense(m) => {
                let n = m.nrows();
                let mut out = vec![ZERO; n];
                for (j, &vj) in v.iter().enumerate() {
                    if vj == ZERO {
                        continue;
                    }
                    for (o, a) in out.iter_mut().zip(m.column(j).iter()) {
                        *o += a * vj;
                    }
                }
                out
            }
            OperatorStorage::Sparse(s) => s.matvec(v),
        }
    }

    pub fn apply_rep(&self, f: &FunctionRep) -> Result<FunctionRep> {
        if f.basis() != self.basis {
            return Err(Error::BasisMismatch(format!(
                "operator on {:?} applied to {:?}",
                self.basis,
                f.basis()
            )));
        }
        Ok(FunctionRep::from_vector(self.basis, self.apply(f.as_slice()), false))
    }

    /// Deviation from integral preservation: for Fourier the distance of row
    /// `n = 0` from the unit vector on `c_0`, for Ulam the largest column-sum
    /// error.
    pub fn integral_preservation_defect(&self) -> f64 {
        match self.basis {
            BasisSpec::Fourier(order) => (0..self.dim())
                .map(|j| (self.entry(order, j) - if j == order { ONE } else { ZERO }).norm())
                .fold(0.0, f64::max),
            BasisSpec::Ulam(_) => match &self.storage {
                OperatorStorage::Sparse(s) => s.column_sums().iter().map(|c| (c - ONE).norm()).fold(0.0, f64::max),
                OperatorStorage::Dense(m) => (0..m.ncols())
                    .map(|j| (m.column(j).sum() - ONE).norm())
                    .fold(0.0, f64::max),
            },
        }
    }

    /// Dense dump with header `row,col,re,im`, row-major.
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::from("row,col,re,im\n");
        let dense = self.to_dense();
        for r in 0..n {
            for c in 0..n {
                let v = dense[(r, c)];
                let _ = writeln!(out, "{r},{c},{:e},{:e}", v.re, v.im);
            }
        }
        out
    }
}

/// Inverse-branch data on the collocation nodes, reusable across twists.
#[derive(Debug, Clone)]
pub struct TransferKernel {
    map: MapModel,
    basis: BasisSpec,
    data: KernelData,
}

#[derive(Debug, Clone)]
enum KernelData {
    Fourier {
        /// Per node: `(y, 1/|T'(y)|)` for every branch.
        branches: Vec<Vec<(f64, f64)>>,
    },
    Ulam {
        plain: CsrMatrix,
    },
}

impl TransferKernel {
    pub fn new(map: &MapModel, basis: BasisSpec) -> Result<Self> {
        basis.validate()?;
        let data = match (map, basis) {
            (MapModel::Circle(c), BasisSpec::Fourier(_)) => {
                let nodes = basis.collocation_nodes();
                let branches = nodes
                    .par_iter()
                    .map(|&x| {
                        c.inverse_branches(x)
                            .map(|bs| bs.into_iter().map(|b| (b.point, 1.0 / b.derivative)).collect())
                    })
                    .collect::<Result<Vec<_>>>()?;
                KernelData::Fourier { branches }
            }
            (MapModel::Beta(b), BasisSpec::Ulam(cells)) => KernelData::Ulam {
                plain: ulam_matrix(b, cells),
            },
            _ => {
                return Err(Error::IncompatiblePair {
                    map: map.label(),
                    basis: basis.family().into(),
                })
            }
        };
        Ok(Self { map: *map, basis, data })
    }

    pub fn map(&self) -> &MapModel {
        &self.map
    }

    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    fn wrap(&self, storage: OperatorStorage, twist: Complex64, observable: Option<String>) -> OperatorMatrix {
        OperatorMatrix {
            basis: self.basis,
            storage,
            twist,
            map_label: self.map.label(),
            observable_label: observable,
        }
    }

    pub fn plain(&self) -> OperatorMatrix {
        match &self.data {
            KernelData::Fourier { branches } => {
                let weights: Vec<Vec<Complex64>> = branches
                    .iter()
                    .map(|bs| bs.iter().map(|&(_, w)| Complex64::new(w, 0.0)).collect())
                    .collect();
                self.wrap(OperatorStorage::Dense(self.fourier_matrix(&weights)), ZERO, None)
            }
            KernelData::Ulam { plain } => self.wrap(OperatorStorage::Sparse(plain.clone()), ZERO, None),
        }
    }

    /// Matrix of `φ ↦ L(g φ)` where `g` is given by `weight(value of f)` at
    /// the branch points (Fourier) or cells (Ulam).
    pub fn weighted(
        &self,
        f: &FunctionRep,
        weight: impl Fn(Complex64) -> Complex64 + Sync,
        twist: Complex64,
        label: String,
    ) -> Result<OperatorMatrix> {
        if f.basis() != self.basis {
            return Err(Error::BasisMismatch(format!(
                "observable on {:?}, operator on {:?}",
                f.basis(),
                self.basis
            )));
        }
        Ok(match &self.data {
            KernelData::Fourier { branches } => {
                let weights: Vec<Vec<Complex64>> = branches
                    .par_iter()
                    .map(|bs| bs.iter().map(|&(y, w)| weight(f.eval(y)) * w).collect())
                    .collect();
                self.wrap(
                    OperatorStorage::Dense(self.fourier_matrix(&weights)),
                    twist,
                    Some(label),
                )
            }
            KernelData::Ulam { plain } => {
                let d: Vec<Complex64> = f.as_slice().iter().map(|&v| weight(v)).collect();
                self.wrap(OperatorStorage::Sparse(plain.scale_columns(&d)), twist, Some(label))
            }
        })
    }

    /// `φ ↦ L(e^{itf} φ)` for complex `t`.
    pub fn twisted(&self, f: &FunctionRep, t: Complex64) -> Result<OperatorMatrix> {
        f.ensure_real()?;
        if t == ZERO {
            return Ok(self.plain());
        }
        let i_t = Complex64::new(0.0, 1.0) * t;
        self.weighted(f, |v| (i_t * v.re).exp(), t, "twisted".into())
    }

    /// `φ ↦ L(f φ)`, the `t`-derivative of the twisted family divided by `i`.
    pub fn multiplied(&self, f: &FunctionRep) -> Result<OperatorMatrix> {
        self.weighted(f, |v| v, ZERO, "multiplied".into())
    }

    fn fourier_matrix(&self, weights: &[Vec<Complex64>]) -> CMat {
        let KernelData::Fourier { branches } = &self.data else {
            unreachable!("fourier_matrix on a non-Fourier kernel")
        };
        let BasisSpec::Fourier(order) = self.basis else {
            unreachable!()
        };
        let m = branches.len();
        let n = order as i64;
        let fft = FftPlanner::new().plan_fft_forward(m);
        let columns: Vec<Vec<Complex64>> = (-n..=n)
            .into_par_iter()
            .map(|k| {
                let mut buf: Vec<Complex64> = branches
                    .iter()
                    .zip(weights)
                    .map(|(bs, ws)| {
                        bs.iter()
                            .zip(ws)
                            .map(|(&(y, _), &w)| w * Complex64::from_polar(1.0, 2.0 * PI * k as f64 * y))
                            .sum()
                    })
                    .collect();
                fft.process(&mut buf);
                let scale = 1.0 / m as f64;
                (-n..=n).map(|r| buf[r.rem_euclid(m as i64) as usize] * scale).collect()
            })
            .collect();
        let dim = 2 * order + 1;
        CMat::from_fn(dim, dim, |r, c| columns[c][r])
    }
}

/// Exact Ulam operator of a β-transformation acting on cell values:
/// entry `(j, i)` is `Leb(A_i ∩ T⁻¹A_j) / Leb(A_i)`.
fn ulam_matrix(map: &BetaTransformation, cells: usize) -> CsrMatrix {
    let beta = map.beta();
    let nf = cells as f64;
    let pieces = map.pieces();
    let rows: Vec<Vec<(usize, usize, Complex64)>> = (0..cells)
        .into_par_iter()
        .map(|i| {
            let (a, b) = (i as f64 / nf, (i + 1) as f64 / nf);
            let mut out = Vec::new();
            for piece in 0..pieces {
                let lo = a.max(piece as f64 / beta);
                let hi = b.min((piece + 1) as f64 / beta).min(1.0);
                if hi <= lo {
                    continue;
                }
                let u = (beta * lo - piece as f64).max(0.0);
                let v = (beta * hi - piece as f64).min(1.0);
                if v <= u {
                    continue;
                }
                let first = (u * nf).floor() as usize;
                let last = ((v * nf).ceil() as usize).min(cells);
                for j in first..last {
                    let overlap = v.min((j + 1) as f64 / nf) - u.max(j as f64 / nf);
                    if overlap > 0.0 {
                        out.push((j, i, Complex64::new(overlap * nf / beta, 0.0)));
                    }
                }
            }
            out
        })
        .collect();
    CsrMatrix::from_triplets(cells, cells, rows.into_iter().flatten().collect())
}

pub fn assemble(map: &MapModel, basis: BasisSpec) -> Result<OperatorMatrix> {
    Ok(TransferKernel::new(map, basis)?.plain())
}

pub fn assemble_twisted(map: &MapModel, basis: BasisSpec, f: &FunctionRep, t: Complex64) -> Result<OperatorMatrix> {
    TransferKernel::new(map, basis)?.twisted(f, t)
}

/// Bounded test functions for the duality harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFamily {
    /// Random real trigonometric polynomials of degree at most 3.
    Trigonometric,
    /// Indicators of random unions of consecutive cells, aligned to the
    /// operator's Ulam cells.
    CellIndicators,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityProbe {
    pub trials: usize,
    pub seed: u64,
    pub family: TestFamily,
}

const QUADRATURE_POINTS: usize = 1 << 14;

enum TestFunction {
    Trig(Vec<(f64, f64)>),
    Interval(f64, f64),
}

impl TestFunction {
    fn random(family: TestFamily, cells: usize, rng: &mut ChaCha8Rng) -> Self {
        match family {
            TestFamily::Trigonometric => Self::Trig(
                (1..=3)
                    .map(|k| {
                        let s = 1.0 / (k * k * k) as f64;
                        (rng.random_range(-s..s), rng.random_range(-s..s))
                    })
                    .collect(),
            ),
            TestFamily::CellIndicators => {
                let a = rng.random_range(0..cells);
                let b = rng.random_range(a + 1..=cells);
                Self::Interval(a as f64 / cells as f64, b as f64 / cells as f64)
            }
        }
    }

    fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Trig(c) => c
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| {
                    let w = 2.0 * PI * (i + 1) as f64 * x;
                    a * w.cos() + b * w.sin()
                })
                .sum(),
            Self::Interval(a, b) => {
                if x >= *a && x < *b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫_lo^hi ψ`, in closed form.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Self::Trig(c) => c
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| {
                    let w = 2.0 * PI * (i + 1) as f64;
                    a * ((w * hi).sin() - (w * lo).sin()) / w - b * ((w * hi).cos() - (w * lo).cos()) / w
                })
                .sum(),
            Self::Interval(a, b) => (hi.min(*b) - lo.max(*a)).max(0.0),
        }
    }
}

/// Largest violation of `∫(ψ∘T)φ dμ = ∫ψ(Lφ) dμ` over random pairs of a
/// test function `ψ` and a basis element `φ`. Ulam basis elements are
/// normalized to unit mass.
pub fn duality_residual(map: &MapModel, op: &OperatorMatrix, probe: &DualityProbe) -> Result<f64> {
    if probe.trials == 0 {
        return Err(Error::InvalidParameter("duality probe needs at least one trial".into()));
    }
    let interval = map.as_interval().ok_or_else(|| Error::IncompatiblePair {
        map: map.label(),
        basis: op.basis().family().into(),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let q = QUADRATURE_POINTS;
    let mut worst: f64 = 0.0;
    for _ in 0..probe.trials {
        let index = rng.random_range(0..op.dim());
        let cells = match op.basis() {
            BasisSpec::Ulam(n) => n,
            BasisSpec::Fourier(_) => 1,
        };
        let psi = TestFunction::random(probe.family, cells, &mut rng);
        let image = op.apply(op.basis().element(index).as_slice());
        let (lhs, rhs) = match op.basis() {
            BasisSpec::Fourier(order) => {
                let freq = index as f64 - order as f64;
                let image = FunctionRep::from_vector(op.basis(), image, false);
                let grid: Vec<f64> = (0..q).map(|j| j as f64 / q as f64).collect();
                let lhs: Complex64 = grid
                    .iter()
                    .map(|&x| psi.eval(interval.evaluate(x)) * Complex64::from_polar(1.0, 2.0 * PI * freq * x))
                    .sum::<Complex64>()
                    / q as f64;
                let samples = match &image {
                    FunctionRep::Fourier(r) => {
                        let mut buf = vec![ZERO; q];
                        let n = order as i64;
                        for k in -n..=n {
                            buf[k.rem_euclid(q as i64) as usize] += r.coeff(k);
                        }
                        FftPlanner::new().plan_fft_inverse(q).process(&mut buf);
                        buf
                    }
                    FunctionRep::Ulam(_) => unreachable!(),
                };
                let rhs: Complex64 = grid
                    .iter()
                    .zip(&samples)
                    .map(|(&x, v)| psi.eval(x) * v)
                    .sum::<Complex64>()
                    / q as f64;
                (lhs, rhs)
            }
            BasisSpec::Ulam(n) => {
                let nf = n as f64;
                let (a, h) = (index as f64 / nf, 1.0 / nf);
                let lhs: f64 = (0..q)
                    .map(|j| psi.eval(interval.evaluate(a + (j as f64 + 0.5) * h / q as f64)))
                    .sum::<f64>()
                    / q as f64;
                // φ = N·1_{A_i}, so Lφ has cell values N·(column i).
                let rhs: Complex64 = image
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != ZERO)
                    .map(|(c, v)| v * nf * psi.integral(c as f64 / nf, (c + 1) as f64 / nf))
                    .sum();
                (Complex64::new(lhs, 0.0), rhs)
            }
        };
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::AnalyticCircleMap;

    fn doubling() -> MapModel {
        MapModel::Circle(AnalyticCircleMap::doubling())
    }

    #[test]
    fn doubling_fourier_structure() {
        let op = assemble(&doubling(), BasisSpec::Fourier(8)).unwrap();
        let order = 8i64;
        for col in -order..=order {
            let c = (col + order) as usize;
            let entries: Vec<(usize, Complex64)> = (0..17)
                .map(|r| (r, op.entry(r, c)))
                .filter(|(_, v)| v.norm() > 1e-14)
                .collect();
            if col % 2 == 0 {
                assert_eq!(entries.len(), 1, "column {col}");
                assert_eq!(entries[0].0 as i64 - order, col / 2);
                assert!((entries[0].1 - ONE).norm() < 1e-14);
            } else {
                assert!(entries.is_empty(), "column {col}");
            }
        }
    }

    #[test]
    fn constant_has_unit_integral_after_transfer() {
        let maps = [
            (doubling(), BasisSpec::Fourier(16)),
            (
                MapModel::Circle(AnalyticCircleMap::new(3, 0.1).unwrap()),
                BasisSpec::Fourier(16),
            ),
            (MapModel::Beta(BetaTransformation::golden()), BasisSpec::Ulam(257)),
        ];
        for (map, basis) in maps {
            let op = assemble(&map, basis).unwrap();
            let one = FunctionRep::constant(basis, 1.0);
            let image = op.apply_rep(&one).unwrap();
            assert!((image.integrate() - ONE).norm() < 1e-12, "{}", map.label());
            assert!(op.integral_preservation_defect() < 1e-12);
        }
    }

    #[test]
    fn dyadic_ulam_rows_are_stochastic() {
        let op = assemble(
            &MapModel::Beta(BetaTransformation::new(2.0).unwrap()),
            BasisSpec::Ulam(16),
        )
        .unwrap();
        let transition = op.to_dense().transpose();
        for i in 0..16 {
            let row: Vec<Complex64> = transition.row(i).iter().copied().filter(|v| *v != ZERO).collect();
            assert_eq!(row.len(), 2);
            assert!(row.iter().all(|v| *v == Complex64::new(0.5, 0.0)));
        }
    }

    #[test]
    fn incompatible_pairs_rejected() {
        let err = assemble(&doubling(), BasisSpec::Ulam(16)).unwrap_err();
        assert!(matches!(err, Error::IncompatiblePair { .. }));
        let err = assemble(&MapModel::Beta(BetaTransformation::golden()), BasisSpec::Fourier(4)).unwrap_err();
        assert!(matches!(err, Error::IncompatiblePair { .. }));
    }

    #[test]
    fn twist_at_zero_is_plain() {
        let map = MapModel::Circle(AnalyticCircleMap::new(2, 0.05).unwrap());
        let basis = BasisSpec::Fourier(12);
        let f = FunctionRep::project_real(basis, |x| (2.0 * PI * x).cos());
        let plain = assemble(&map, basis).unwrap();
        let twisted = assemble_twisted(&map, basis, &f, ZERO).unwrap();
        assert_eq!(plain.to_dense(), twisted.to_dense());
    }

    #[test]
    fn constant_twist_is_scalar_factor() {
        let map = MapModel::Circle(AnalyticCircleMap::new(2, 0.05).unwrap());
        let basis = BasisSpec::Fourier(12);
        let f = FunctionRep::constant(basis, 0.8);
        let t = Complex64::new(0.3, 0.0);
        let plain = assemble(&map, basis).unwrap().to_dense();
        let twisted = assemble_twisted(&map, basis, &f, t).unwrap().to_dense();
        let factor = Complex64::new(0.0, 0.24).exp();
        assert!((twisted - plain * factor).iter().all(|v| v.norm() < 1e-13));
    }

    #[test]
    fn twisted_columns_match_direct_application() {
        let map = doubling();
        let basis = BasisSpec::Fourier(32);
        let f = FunctionRep::project_real(basis, |x| (2.0 * PI * x).cos());
        let t = 0.2;
        let op = assemble_twisted(&map, basis, &f, Complex64::new(t, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let pairs: Vec<(i64, Complex64)> = (-32..=32)
                .map(|n| {
                    (
                        n,
                        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    )
                })
                .collect();
            let phi = FunctionRep::from_fourier_coefficients(32, &pairs, false);
            // Direct oracle: ½ Σ_branches e^{itf(y)} φ(y) at y = x/2, x/2 + 1/2.
            let direct = FunctionRep::project(basis, |x| {
                [x / 2.0, x / 2.0 + 0.5]
                    .iter()
                    .map(|&y| 0.5 * Complex64::new(0.0, t * (2.0 * PI * y).cos()).exp() * phi.eval(y))
                    .sum()
            });
            let got = op.apply_rep(&phi).unwrap();
            for (a, b) in got.as_slice().iter().zip(direct.as_slice()) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn twisted_matches_power_series() {
        let map = MapModel::Circle(AnalyticCircleMap::new(2, 0.05).unwrap());
        let basis = BasisSpec::Fourier(24);
        let f = FunctionRep::project_real(basis, |x| (2.0 * PI * x).sin() + 0.2 * (4.0 * PI * x).cos());
        let kernel = TransferKernel::new(&map, basis).unwrap();
        let plain = kernel.plain().to_dense();
        // Multiplication by f on the discretized space, built column by column.
        let dim = basis.dim();
        let mult = CMat::from_fn(dim, dim, |_, _| ZERO);
        let mut mult = mult;
        for j in 0..dim {
            let col = f.multiply(&basis.element(j)).unwrap();
            for (i, v) in col.as_slice().iter().enumerate() {
                mult[(i, j)] = *v;
            }
        }
        for t in [0.5, -0.3] {
            let mut term = CMat::identity(dim, dim);
            let mut sum = term.clone();
            for n in 1..=30 {
                term = &term * &mult * Complex64::new(0.0, t / n as f64);
                sum += &term;
            }
            let series = &plain * sum;
            let direct = kernel.twisted(&f, Complex64::new(t, 0.0)).unwrap().to_dense();
            // Compare the low modes, where truncation of e^{itf}φ does not matter.
            let phi = FunctionRep::project_real(basis, |x| 1.0 + 0.5 * (2.0 * PI * x).cos());
            let a = &series * crate::linalg::to_dvector(phi.as_slice());
            let b = &direct * crate::linalg::to_dvector(phi.as_slice());
            let diff = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(diff < 1e-8, "t={t} diff={diff:e}");
        }
    }

    #[test]
    fn analytic_operator_rows_decay() {
        let map = MapModel::Circle(AnalyticCircleMap::new(2, 0.05).unwrap());
        let op = assemble(&map, BasisSpec::Fourier(32)).unwrap();
        let row_norm = |n: i64| -> f64 {
            let r = (n + 32) as usize;
            (0..65).map(|c| op.entry(r, c).norm()).fold(0.0, f64::max)
        };
        // Fit log|M_n| ≈ log C + |n| log ρ on the tail and require ρ < 1.
        let (a, b) = (row_norm(20), row_norm(30));
        let rho = (b / a).powf(0.1);
        assert!(rho < 1.0, "rho = {rho}");
    }

    #[test]
    fn duality_examples() {
        let probe = |family| DualityProbe {
            trials: 20,
            seed: 1,
            family,
        };
        let d = doubling();
        let op = assemble(&d, BasisSpec::Fourier(32)).unwrap();
        assert!(duality_residual(&d, &op, &probe(TestFamily::Trigonometric)).unwrap() <= 1e-10);

        let b2 = MapModel::Beta(BetaTransformation::new(2.0).unwrap());
        let op = assemble(&b2, BasisSpec::Ulam(64)).unwrap();
        assert!(duality_residual(&b2, &op, &probe(TestFamily::CellIndicators)).unwrap() <= 1e-12);

        let g = MapModel::Beta(BetaTransformation::golden());
        let op = assemble(&g, BasisSpec::Ulam(4096)).unwrap();
        assert!(duality_residual(&g, &op, &probe(TestFamily::Trigonometric)).unwrap() <= 1e-3);
    }

    #[test]
    fn csv_dump_has_header_and_all_entries() {
        let op = assemble(&doubling(), BasisSpec::Fourier(2)).unwrap();
        let csv = op.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("row,col,re,im"));
        assert_eq!(lines.count(), 25);
    }

    #[test]
    fn assembly_is_independent_of_thread_count() {
        let map = MapModel::Circle(AnalyticCircleMap::new(3, 0.1).unwrap());
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| assemble(&map, BasisSpec::Fourier(20)).unwrap());
        let b = four.install(|| assemble(&map, BasisSpec::Fourier(20)).unwrap());
        assert_eq!(a, b);
    }
}
