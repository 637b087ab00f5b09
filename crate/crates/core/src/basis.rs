//! Finite representations of observables and densities.
//!
//! Smooth functions on the circle are stored as truncated Fourier series,
//! functions of bounded variation as Ulam cell values. Pointwise algebra
//! (products, quotients, exponentials) is carried out by collocation on an
//! oversampled grid and transformed back.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the conjugate-symmetry check on real-flagged data.
pub const REAL_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", content = "size", rename_all = "lowercase")]
pub enum BasisSpec {
    /// Fourier modes `-order..=order`.
    Fourier(usize),
    /// Piecewise constants on `cells` equal cells of `[0, 1)`.
    Ulam(usize),
}

impl BasisSpec {
    pub fn dim(&self) -> usize {
        match *self {
            Self::Fourier(n) => 2 * n + 1,
            Self::Ulam(n) => n,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Fourier(_) => "fourier",
            Self::Ulam(_) => "ulam",
        }
    }

    /// Number of collocation nodes used for products and exponentials.
    pub fn collocation_size(&self) -> usize {
        match *self {
            Self::Fourier(n) => 2 * (2 * n + 1),
            Self::Ulam(n) => n,
        }
    }

    /// Abscissae of the collocation grid.
    pub fn collocation_nodes(&self) -> Vec<f64> {
        match *self {
            Self::Fourier(_) => {
                let m = self.collocation_size();
                (0..m).map(|j| j as f64 / m as f64).collect()
            }
            Self::Ulam(n) => (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Ulam(0) => Err(Error::InvalidParameter("Ulam basis needs at least one cell".into())),
            _ => Ok(()),
        }
    }

    /// The unit vector for basis element `index` (`0..dim`).
    pub fn element(&self, index: usize) -> FunctionRep {
        let mut v = vec![Complex64::new(0.0, 0.0); self.dim()];
        v[index] = Complex64::new(1.0, 0.0);
        FunctionRep::from_vector(*self, v, false)
    }
}

/// Truncated Fourier series `Σ c_n e^{2πinx}`, `|n| ≤ order`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierRep {
    order: usize,
    coeffs: Vec<Complex64>,
    real: bool,
}

impl FourierRep {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Coefficient of `e^{2πinx}`; zero outside the truncation.
    pub fn coeff(&self, n: i64) -> Complex64 {
        let idx = n + self.order as i64;
        if idx < 0 || idx as usize >= self.coeffs.len() {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[idx as usize]
        }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Largest deviation from `c_{-n} = conj(c_n)`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.order as i64;
        (0..=n)
            .map(|k| (self.coeff(-k) - self.coeff(k).conj()).norm())
            .fold(0.0, f64::max)
    }

    fn eval(&self, x: f64) -> Complex64 {
        let n = self.order as i64;
        (-n..=n)
            .map(|k| self.coeff(k) * Complex64::from_polar(1.0, 2.0 * PI * k as f64 * x))
            .sum()
    }

    /// Values at `x_j = j/m`, `m ≥ 2·order + 1`.
    fn samples(&self, m: usize) -> Vec<Complex64> {
        assert!(m > 2 * self.order, "grid too coarse for the truncation");
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        let n = self.order as i64;
        for k in -n..=n {
            buf[k.rem_euclid(m as i64) as usize] += self.coeff(k);
        }
        FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
        buf
    }

    /// Truncated coefficients of the trigonometric interpolant of `samples`.
    fn from_samples(mut samples: Vec<Complex64>, order: usize, real: bool) -> Self {
        let m = samples.len();
        assert!(m > 2 * order, "grid too coarse for the truncation");
        FftPlanner::new().plan_fft_forward(m).process(&mut samples);
        let scale = 1.0 / m as f64;
        let n = order as i64;
        let coeffs = (-n..=n)
            .map(|k| samples[k.rem_euclid(m as i64) as usize] * scale)
            .collect();
        let mut rep = Self { order, coeffs, real };
        if real {
            rep.symmetrize();
        }
        rep
    }

    fn symmetrize(&mut self) {
        let n = self.order as i64;
        for k in 0..=n {
            let avg = 0.5 * (self.coeff(k) + self.coeff(-k).conj());
            self.coeffs[(k + n) as usize] = avg;
            self.coeffs[(n - k) as usize] = avg.conj();
        }
        self.coeffs[self.order].im = 0.0;
    }
}

/// Piecewise-constant function on `N` equal cells.
#[derive(Debug, Clone, PartialEq)]
pub struct UlamRep {
    values: Vec<Complex64>,
    real: bool,
}

impl UlamRep {
    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn cell_of(&self, x: f64) -> usize {
        let n = self.values.len();
        ((x * n as f64).floor().max(0.0) as usize).min(n - 1)
    }

    /// `Σ |v_{i+1} − v_i|`.
    pub fn variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Largest imaginary part among the cell values.
    pub fn imag_defect(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }
}

/// An element of the discretized function space.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionRep {
    Fourier(FourierRep),
    Ulam(UlamRep),
}

impl FunctionRep {
    /// Project a real pointwise function. Fourier uses `4N` equispaced
    /// samples; Ulam takes the cell midpoint.
    pub fn project_real(spec: BasisSpec, f: impl Fn(f64) -> f64) -> Self {
        Self::project_impl(spec, |x| Complex64::new(f(x), 0.0), true)
    }

    /// Like `project_real`, but Ulam cells take the mean of `sub` equispaced
    /// samples instead of the midpoint.
    pub fn project_real_averaged(spec: BasisSpec, f: impl Fn(f64) -> f64, sub: usize) -> Self {
        match spec {
            BasisSpec::Fourier(_) => Self::project_real(spec, f),
            BasisSpec::Ulam(cells) => {
                let sub = sub.max(1);
                let values = (0..cells)
                    .map(|i| {
                        let mean = (0..sub)
                            .map(|j| f((i as f64 + (j as f64 + 0.5) / sub as f64) / cells as f64))
                            .sum::<f64>()
                            / sub as f64;
                        Complex64::new(mean, 0.0)
                    })
                    .collect();
                Self::Ulam(UlamRep { values, real: true })
            }
        }
    }

    pub fn project(spec: BasisSpec, f: impl Fn(f64) -> Complex64) -> Self {
        Self::project_impl(spec, f, false)
    }

    fn project_impl(spec: BasisSpec, f: impl Fn(f64) -> Complex64, real: bool) -> Self {
        match spec {
            BasisSpec::Fourier(order) => {
                let m = (4 * order).max(2);
                let samples = (0..m).map(|j| f(j as f64 / m as f64)).collect();
                Self::Fourier(FourierRep::from_samples(samples, order, real))
            }
            BasisSpec::Ulam(cells) => Self::Ulam(UlamRep {
                values: (0..cells).map(|i| f((i as f64 + 0.5) / cells as f64)).collect(),
                real,
            }),
        }
    }

    /// Wrap a raw coefficient vector (`c_{-N}..c_N` or cell values).
    pub fn from_vector(spec: BasisSpec, values: Vec<Complex64>, real: bool) -> Self {
        assert_eq!(values.len(), spec.dim(), "vector length does not match basis");
        match spec {
            BasisSpec::Fourier(order) => Self::Fourier(FourierRep {
                order,
                coeffs: values,
                real,
            }),
            BasisSpec::Ulam(_) => Self::Ulam(UlamRep { values, real }),
        }
    }

    /// Fourier representation from explicit `(n, c_n)` pairs.
    pub fn from_fourier_coefficients(order: usize, pairs: &[(i64, Complex64)], real: bool) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * order + 1];
        for &(n, c) in pairs {
            let idx = n + order as i64;
            if idx >= 0 && (idx as usize) < coeffs.len() {
                coeffs[idx as usize] += c;
            }
        }
        let mut rep = FourierRep { order, coeffs, real };
        if real {
            rep.symmetrize();
        }
        Self::Fourier(rep)
    }

    pub fn constant(spec: BasisSpec, c: f64) -> Self {
        Self::project_real(spec, |_| c)
    }

    pub fn zero(spec: BasisSpec) -> Self {
        Self::from_vector(spec, vec![Complex64::new(0.0, 0.0); spec.dim()], true)
    }

    pub fn basis(&self) -> BasisSpec {
        match self {
            Self::Fourier(r) => BasisSpec::Fourier(r.order),
            Self::Ulam(r) => BasisSpec::Ulam(r.values.len()),
        }
    }

    pub fn as_slice(&self) -> &[Complex64] {
        match self {
            Self::Fourier(r) => &r.coeffs,
            Self::Ulam(r) => &r.values,
        }
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        match self {
            Self::Fourier(r) => r.coeffs,
            Self::Ulam(r) => r.values,
        }
    }

    pub fn is_real(&self) -> bool {
        match self {
            Self::Fourier(r) => r.real,
            Self::Ulam(r) => r.real,
        }
    }

    /// Deviation from real-valuedness measured on the representation.
    pub fn real_defect(&self) -> f64 {
        match self {
            Self::Fourier(r) => r.symmetry_defect(),
            Self::Ulam(r) => r.imag_defect(),
        }
    }

    /// Verify the real-valued flag; unflagged data passes if it is real
    /// within tolerance.
    pub fn ensure_real(&self) -> Result<()> {
        let scale = self.as_slice().iter().map(|c| c.norm()).fold(1.0, f64::max);
        let defect = self.real_defect();
        if defect > REAL_TOLERANCE * scale {
            return Err(Error::NonRealObservable { defect });
        }
        Ok(())
    }

    /// Real part, flagged real.
    pub fn real_part(&self) -> Self {
        match self {
            Self::Fourier(r) => {
                let mut out = FourierRep {
                    order: r.order,
                    coeffs: r.coeffs.clone(),
                    real: true,
                };
                // Re φ has coefficients (c_n + conj(c_{-n})) / 2.
                let n = r.order as i64;
                for k in -n..=n {
                    out.coeffs[(k + n) as usize] = 0.5 * (r.coeff(k) + r.coeff(-k).conj());
                }
                out.coeffs[r.order].im = 0.0;
                Self::Fourier(out)
            }
            Self::Ulam(r) => Self::Ulam(UlamRep {
                values: r.values.iter().map(|v| Complex64::new(v.re, 0.0)).collect(),
                real: true,
            }),
        }
    }

    pub fn with_real_flag(mut self, real: bool) -> Self {
        match &mut self {
            Self::Fourier(r) => r.real = real,
            Self::Ulam(r) => r.real = real,
        }
        self
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        match self {
            Self::Fourier(r) => r.eval(x),
            Self::Ulam(r) => r.values[r.cell_of(x)],
        }
    }

    pub fn eval_many(&self, xs: &[f64]) -> Vec<Complex64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }

    /// Integral against Lebesgue measure.
    pub fn integrate(&self) -> Complex64 {
        match self {
            Self::Fourier(r) => r.coeffs[r.order],
            Self::Ulam(r) => r.values.iter().sum::<Complex64>() / r.values.len() as f64,
        }
    }

    /// L² norm.
    pub fn l2_norm(&self) -> f64 {
        match self {
            Self::Fourier(r) => r.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt(),
            Self::Ulam(r) => (r.values.iter().map(|c| c.norm_sqr()).sum::<f64>() / r.values.len() as f64).sqrt(),
        }
    }

    /// L¹ norm; for Fourier data estimated by quadrature on `samples` points.
    pub fn l1_norm(&self, samples: usize) -> f64 {
        match self {
            Self::Fourier(_) => {
                (0..samples)
                    .map(|j| self.eval((j as f64 + 0.5) / samples as f64).norm())
                    .sum::<f64>()
                    / samples as f64
            }
            Self::Ulam(r) => r.values.iter().map(|c| c.norm()).sum::<f64>() / r.values.len() as f64,
        }
    }

    fn check_same_basis(&self, other: &Self) -> Result<()> {
        if self.basis() != other.basis() {
            return Err(Error::BasisMismatch(format!(
                "{:?} vs {:?}",
                self.basis(),
                other.basis()
            )));
        }
        Ok(())
    }

    /// Values on the collocation grid of [`BasisSpec::collocation_nodes`].
    pub fn collocation_values(&self) -> Vec<Complex64> {
        match self {
            Self::Fourier(r) => r.samples(self.basis().collocation_size()),
            Self::Ulam(r) => r.values.clone(),
        }
    }

    /// Rebuild from values on the collocation grid.
    pub fn from_collocation(spec: BasisSpec, values: Vec<Complex64>, real: bool) -> Self {
        match spec {
            BasisSpec::Fourier(order) => Self::Fourier(FourierRep::from_samples(values, order, real)),
            BasisSpec::Ulam(_) => Self::Ulam(UlamRep { values, real }),
        }
    }

    fn pointwise2(&self, other: &Self, op: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        self.check_same_basis(other)?;
        let a = self.collocation_values();
        let b = other.collocation_values();
        let values = a.into_iter().zip(b).map(|(x, y)| op(x, y)).collect();
        Ok(Self::from_collocation(
            self.basis(),
            values,
            self.is_real() && other.is_real(),
        ))
    }

    /// Pointwise product.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.pointwise2(other, |x, y| x * y)
    }

    /// Pointwise quotient; the divisor must not vanish on the grid.
    pub fn divide(&self, other: &Self) -> Result<Self> {
        let min = other
            .collocation_values()
            .iter()
            .map(|c| c.norm())
            .fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            return Err(Error::InvalidParameter("division by a function with zeros".into()));
        }
        self.pointwise2(other, |x, y| x / y)
    }

    /// Apply `g` pointwise on the collocation grid.
    pub fn map_pointwise(&self, g: impl Fn(Complex64) -> Complex64, real: bool) -> Self {
        let values = self.collocation_values().into_iter().map(g).collect();
        Self::from_collocation(self.basis(), values, real)
    }

    /// `e^{itf}`, computed on the collocation grid.
    pub fn exp_scale(&self, t: f64) -> Result<Self> {
        self.ensure_real()?;
        Ok(self.map_pointwise(|v| Complex64::new(0.0, t * v.re).exp(), t == 0.0))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let real = self.is_real() && c.im == 0.0;
        let values = self.as_slice().iter().map(|v| v * c).collect();
        Self::from_vector(self.basis(), values, real)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_basis(other)?;
        let values = self
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self::from_vector(
            self.basis(),
            values,
            self.is_real() && other.is_real(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn add_constant(&self, c: Complex64) -> Self {
        let mut values = self.as_slice().to_vec();
        match self {
            Self::Fourier(r) => values[r.order] += c,
            Self::Ulam(_) => values.iter_mut().for_each(|v| *v += c),
        }
        Self::from_vector(self.basis(), values, self.is_real() && c.im == 0.0)
    }

    /// Serialize as CSV with header `index,re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,re,im\n");
        let offset = match self {
            Self::Fourier(r) => -(r.order as i64),
            Self::Ulam(_) => 0,
        };
        for (i, c) in self.as_slice().iter().enumerate() {
            let _ = writeln!(out, "{},{:e},{:e}", i as i64 + offset, c.re, c.im);
        }
        out
    }

    /// Parse the CSV produced by [`FunctionRep::to_csv`].
    pub fn from_csv(text: &str, family: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("index,re,im") {
            return Err(Error::InvalidParameter("missing `index,re,im` header".into()));
        }
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let parse_err = || Error::InvalidParameter(format!("bad CSV row {}: `{line}`", lineno + 2));
            if fields.len() != 3 {
                return Err(parse_err());
            }
            let idx: i64 = fields[0].trim().parse().map_err(|_| parse_err())?;
            let re: f64 = fields[1].trim().parse().map_err(|_| parse_err())?;
            let im: f64 = fields[2].trim().parse().map_err(|_| parse_err())?;
            rows.push((idx, Complex64::new(re, im)));
        }
        let real = rows.iter().all(|(_, c)| c.im == 0.0);
        match family {
            "fourier" => {
                let order = rows.iter().map(|(n, _)| n.unsigned_abs() as usize).max().unwrap_or(0);
                let rep = Self::from_fourier_coefficients(order, &rows, false);
                let real = rep.real_defect() == 0.0;
                Ok(rep.with_real_flag(real))
            }
            "ulam" => {
                let n = rows.len();
                let mut values = vec![Complex64::new(0.0, 0.0); n];
                for (i, c) in rows {
                    if i < 0 || i as usize >= n {
                        return Err(Error::InvalidParameter(format!("cell index {i} out of range")));
                    }
                    values[i as usize] = c;
                }
                Ok(Self::from_vector(BasisSpec::Ulam(n), values, real))
            }
            other => Err(Error::InvalidParameter(format!("unknown basis family `{other}`"))),
        }
    }
}

/// Double Fourier series on the 2-torus, modes `|p| ≤ nx`, `|q| ≤ ny`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rep2D {
    nx: usize,
    ny: usize,
    /// Row-major over `p`, then `q`.
    coeffs: Vec<Complex64>,
}

impl Rep2D {
    pub fn orders(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn coeff(&self, p: i64, q: i64) -> Complex64 {
        let (px, qy) = (p + self.nx as i64, q + self.ny as i64);
        if px < 0 || qy < 0 || px as usize > 2 * self.nx || qy as usize > 2 * self.ny {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[px as usize * (2 * self.ny + 1) + qy as usize]
    }

    /// Project from `4nx × 4ny` samples by a two-dimensional DFT.
    pub fn project(nx: usize, ny: usize, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let (mx, my) = ((4 * nx).max(2), (4 * ny).max(2));
        let mut grid: Vec<Complex64> = (0..mx * my)
            .map(|idx| f((idx / my) as f64 / mx as f64, (idx % my) as f64 / my as f64))
            .collect();
        let mut planner = FftPlanner::new();
        let row_fft = planner.plan_fft_forward(my);
        for row in grid.chunks_mut(my) {
            row_fft.process(row);
        }
        let col_fft = planner.plan_fft_forward(mx);
        let mut column = vec![Complex64::new(0.0, 0.0); mx];
        for c in 0..my {
            for r in 0..mx {
                column[r] = grid[r * my + c];
            }
            col_fft.process(&mut column);
            for r in 0..mx {
                grid[r * my + c] = column[r];
            }
        }
        let scale = 1.0 / (mx * my) as f64;
        let mut coeffs = Vec::with_capacity((2 * nx + 1) * (2 * ny + 1));
        for p in -(nx as i64)..=nx as i64 {
            for q in -(ny as i64)..=ny as i64 {
                let r = p.rem_euclid(mx as i64) as usize;
                let c = q.rem_euclid(my as i64) as usize;
                coeffs.push(grid[r * my + c] * scale);
            }
        }
        Self { nx, ny, coeffs }
    }

    pub fn eval(&self, x: f64, y: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for p in -(self.nx as i64)..=self.nx as i64 {
            let ex = Complex64::from_polar(1.0, 2.0 * PI * p as f64 * x);
            for q in -(self.ny as i64)..=self.ny as i64 {
                acc += self.coeff(p, q) * ex * Complex64::from_polar(1.0, 2.0 * PI * q as f64 * y);
            }
        }
        acc
    }

    pub fn integrate(&self) -> Complex64 {
        self.coeff(0, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_trig(rng: &mut ChaCha8Rng, degree: i64, order: usize) -> FunctionRep {
        let pairs: Vec<(i64, Complex64)> = (-degree..=degree)
            .map(|n| (n, c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
            .collect();
        FunctionRep::from_fourier_coefficients(order, &pairs, false)
    }

    #[test]
    fn project_cosine() {
        let f = FunctionRep::project_real(BasisSpec::Fourier(8), |x| (2.0 * PI * x).cos());
        let FunctionRep::Fourier(r) = &f else { unreachable!() };
        for n in -8i64..=8 {
            let want = if n.abs() == 1 { 0.5 } else { 0.0 };
            assert!((r.coeff(n) - c(want, 0.0)).norm() < 1e-14, "mode {n}");
        }
        assert!(f.integrate().norm() < 1e-14);
    }

    #[test]
    fn project_constant_ulam() {
        let f = FunctionRep::constant(BasisSpec::Ulam(16), 1.0);
        assert!(f.as_slice().iter().all(|v| *v == c(1.0, 0.0)));
        assert_eq!(FunctionRep::constant(BasisSpec::Ulam(16), 7.0).integrate(), c(7.0, 0.0));
        assert!((FunctionRep::constant(BasisSpec::Fourier(4), 7.0).integrate() - c(7.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn ulam_projection_of_indicator() {
        let beta = 0.5 * (1.0 + 5f64.sqrt());
        let n = 4096;
        let f = FunctionRep::project_real(BasisSpec::Ulam(n), |x| if x < 1.0 / beta { 1.0 } else { 0.0 });
        // Exact L¹ error: only the cell containing 1/β can differ, by at most its width.
        let cut = 1.0 / beta;
        let cell = (cut * n as f64).floor() as usize;
        let width = 1.0 / n as f64;
        let left = cut - cell as f64 * width;
        let v = f.as_slice()[cell].re;
        let err = (1.0 - v).abs() * left + v.abs() * (width - left);
        assert!(err <= width);
    }

    #[test]
    fn multiply_examples() {
        let spec = BasisSpec::Fourier(6);
        let e1 = FunctionRep::from_fourier_coefficients(6, &[(1, c(1.0, 0.0))], false);
        let em1 = FunctionRep::from_fourier_coefficients(6, &[(-1, c(1.0, 0.0))], false);
        let one = e1.multiply(&em1).unwrap();
        let want = FunctionRep::constant(spec, 1.0);
        for (a, b) in one.as_slice().iter().zip(want.as_slice()) {
            assert!((a - b).norm() < 1e-14);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_trig(&mut rng, 6, 6);
        let scaled = a.multiply(&FunctionRep::constant(spec, 2.5)).unwrap();
        for (x, y) in scaled.as_slice().iter().zip(a.as_slice()) {
            assert!((x - 2.5 * y).norm() < 1e-13);
        }
    }

    #[test]
    fn multiply_matches_pointwise_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_trig(&mut rng, 10, 64);
        let b = random_trig(&mut rng, 10, 64);
        let p = a.multiply(&b).unwrap();
        for _ in 0..100 {
            let x: f64 = rng.random();
            assert!((p.eval(x) - a.eval(x) * b.eval(x)).norm() < 1e-12);
        }
    }

    #[test]
    fn basis_mismatch_is_reported() {
        let a = FunctionRep::constant(BasisSpec::Fourier(4), 1.0);
        let b = FunctionRep::constant(BasisSpec::Fourier(5), 1.0);
        assert!(matches!(a.multiply(&b), Err(Error::BasisMismatch(_))));
        let u = FunctionRep::constant(BasisSpec::Ulam(8), 1.0);
        assert!(matches!(a.multiply(&u), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn exp_scale_examples() {
        let spec = BasisSpec::Fourier(64);
        let f = FunctionRep::project_real(spec, |x| (2.0 * PI * x).cos());
        let one = f.exp_scale(0.0).unwrap();
        assert!((one.integrate() - c(1.0, 0.0)).norm() < 1e-14);
        assert!(one
            .as_slice()
            .iter()
            .enumerate()
            .all(|(i, v)| i == 64 || v.norm() < 1e-14));

        let k = FunctionRep::constant(spec, 0.7);
        let e = k.exp_scale(0.3).unwrap();
        assert!((e.integrate() - Complex64::new(0.0, 0.21).exp()).norm() < 1e-14);

        let e = f.exp_scale(0.3).unwrap();
        for v in e.collocation_values() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x: f64 = rng.random();
            assert!((e.eval(x).norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn exp_scale_matches_power_series_at_small_t() {
        let spec = BasisSpec::Fourier(16);
        let f = FunctionRep::project_real(spec, |x| (2.0 * PI * x).cos() + 0.3 * (4.0 * PI * x).sin());
        let t = 0.2;
        let mut term = FunctionRep::constant(spec, 1.0);
        let mut sum = term.clone();
        for n in 1..30 {
            term = term.multiply(&f).unwrap().scale(Complex64::new(0.0, t / n as f64));
            sum = sum.add(&term).unwrap();
        }
        let e = f.exp_scale(t).unwrap();
        for (a, b) in sum.as_slice().iter().zip(e.as_slice()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn exp_scale_rejects_complex_observable() {
        let f = FunctionRep::from_fourier_coefficients(4, &[(1, c(1.0, 0.0))], false);
        assert!(matches!(f.exp_scale(0.1), Err(Error::NonRealObservable { .. })));
        let u = FunctionRep::project(BasisSpec::Ulam(4), |_| c(0.0, 1.0));
        assert!(u.exp_scale(0.1).is_err());
    }

    #[test]
    fn parseval_against_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_trig(&mut rng, 16, 32);
        let m = 1 << 12;
        let quad = (0..m).map(|j| a.eval(j as f64 / m as f64).norm_sqr()).sum::<f64>() / m as f64;
        assert!((a.l2_norm().powi(2) - quad).abs() < 1e-10);
    }

    #[test]
    fn ulam_variation_of_monotone_step() {
        let f = FunctionRep::project_real(BasisSpec::Ulam(64), |x| {
            if x < 0.25 {
                0.0
            } else if x < 0.5 {
                1.5
            } else {
                4.0
            }
        });
        let FunctionRep::Ulam(u) = &f else { unreachable!() };
        assert_eq!(u.variation(), 4.0);
        assert_eq!(f.l1_norm(0), (16.0 * 1.5 + 32.0 * 4.0) / 64.0);
    }

    #[test]
    fn csv_round_trip() {
        let f = FunctionRep::project_real(BasisSpec::Fourier(3), |x| (2.0 * PI * x).sin());
        let back = FunctionRep::from_csv(&f.to_csv(), "fourier").unwrap();
        assert_eq!(back.as_slice(), f.as_slice());
        let u = FunctionRep::project_real(BasisSpec::Ulam(5), |x| x * x);
        let back = FunctionRep::from_csv(&u.to_csv(), "ulam").unwrap();
        assert_eq!(back, u);
        assert!(FunctionRep::from_csv("a,b\n", "ulam").is_err());
    }

    #[test]
    fn rep2d_projection() {
        let r = Rep2D::project(4, 4, |x, y| c((2.0 * PI * x).cos() * (2.0 * PI * y).sin() + 1.0, 0.0));
        assert!((r.integrate() - c(1.0, 0.0)).norm() < 1e-14);
        assert!((r.coeff(1, 1) - c(0.0, -0.25)).norm() < 1e-14);
        let (x, y) = (0.3, 0.7);
        let want = (2.0 * PI * x).cos() * (2.0 * PI * y).sin() + 1.0;
        assert!((r.eval(x, y).re - want).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn multiply_commutes_and_associates(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_trig(&mut rng, 4, 16);
            let b = random_trig(&mut rng, 4, 16);
            let d = random_trig(&mut rng, 4, 16);
            let ab = a.multiply(&b).unwrap();
            let ba = b.multiply(&a).unwrap();
            for (x, y) in ab.as_slice().iter().zip(ba.as_slice()) {
                prop_assert!((x - y).norm() < 1e-12);
            }
            let l = ab.multiply(&d).unwrap();
            let r = a.multiply(&b.multiply(&d).unwrap()).unwrap();
            for (x, y) in l.as_slice().iter().zip(r.as_slice()) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }

        #[test]
        fn projection_is_idempotent_on_band_limited_input(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_trig(&mut rng, 8, 8);
            let again = FunctionRep::project(a.basis(), |x| a.eval(x));
            for (x, y) in a.as_slice().iter().zip(again.as_slice()) {
                prop_assert!((x - y).norm() < 1e-13);
            }
        }
    }
}
