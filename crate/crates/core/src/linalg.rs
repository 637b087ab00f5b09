//! Dense and sparse complex linear algebra used by the spectral machinery.

use faer::linalg::solvers::DenseSolveCore;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.row(r).find(|&(j, _)| j == c).map_or(ZERO, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `A · diag(d)`.
    pub fn scale_columns(&self, d: &[Complex64]) -> Self {
        assert_eq!(d.len(), self.cols);
        let mut out = self.clone();
        for (v, &c) in out.values.iter_mut().zip(&self.col_idx) {
            *v *= d[c];
        }
        out
    }

    pub fn column_sums(&self) -> Vec<Complex64> {
        let mut sums = vec![ZERO; self.cols];
        for (v, &c) in self.values.iter().zip(&self.col_idx) {
            sums[c] += v;
        }
        sums
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                triplets.push((c, r, v));
            }
        }
        Self::from_triplets(self.cols, self.rows, triplets)
    }
}

pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn to_dvector(v: &[Complex64]) -> DVector<Complex64> {
    DVector::from_column_slice(v)
}

/// Complex Schur form `A = Q T Q*`.
pub struct SchurForm {
    pub q: CMat,
    pub t: CMat,
}

impl SchurForm {
    pub fn new(a: &CMat) -> Option<Self> {
        let n = a.nrows();
        if n == 0 {
            return None;
        }
        let schur = nalgebra::linalg::Schur::try_new(a.clone(), 1e-15, 100 * n.max(10))?;
        let (q, t) = schur.unpack();
        Some(Self { q, t })
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }

    /// Right eigenvector for the `k`-th diagonal entry of `T`, by back
    /// substitution on the triangular factor.
    pub fn eigenvector(&self, k: usize) -> Vec<Complex64> {
        let t = &self.t;
        let lambda = t[(k, k)];
        let small = f64::EPSILON * t.norm().max(1.0);
        let mut y = vec![ZERO; t.nrows()];
        y[k] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let s: Complex64 = (i + 1..=k).map(|j| t[(i, j)] * y[j]).sum();
            let mut d = t[(i, i)] - lambda;
            if d.norm() < small {
                d = Complex64::new(small, 0.0);
            }
            y[i] = -s / d;
        }
        let x = &self.q * to_dvector(&y);
        x.iter().copied().collect()
    }
}

/// `‖M‖₁ · ‖M⁻¹‖₁`.
pub fn condition_1norm(m: &CMat, inverse: &CMat) -> f64 {
    one_norm(m) * one_norm(inverse)
}

pub fn one_norm(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|c| m.column(c).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let a = faer::Mat::<Complex64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let Ok(mut s) = a.singular_values() else {
        return vec![f64::NAN; m.nrows().min(m.ncols())];
    };
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Arnoldi factorization `A V_m = V_{m+1} H̄_m` from a start vector.
pub struct Arnoldi {
    pub basis: Vec<Vec<Complex64>>,
    /// `(m+1) × m` upper Hessenberg matrix.
    pub hessenberg: CMat,
    /// True if an invariant subspace was found before `m` steps.
    pub breakdown: bool,
}

impl Arnoldi {
    pub fn run(apply: &dyn Fn(&[Complex64]) -> Vec<Complex64>, start: &[Complex64], steps: usize) -> Self {
        let beta = norm(start);
        assert!(beta > 0.0, "Arnoldi needs a non-zero start vector");
        let mut basis = vec![start.iter().map(|x| x / beta).collect::<Vec<_>>()];
        let mut h = CMat::zeros(steps + 1, steps);
        let mut breakdown = false;
        let mut m = steps;
        for j in 0..steps {
            let mut w = apply(&basis[j]);
            // Two passes of modified Gram-Schmidt.
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    h[(i, j)] += c;
                    axpy(-c, v, &mut w);
                }
            }
            let nw = norm(&w);
            h[(j + 1, j)] = Complex64::new(nw, 0.0);
            if nw <= 1e-14 * h.column(j).norm().max(1e-300) {
                breakdown = true;
                m = j + 1;
                break;
            }
            basis.push(w.into_iter().map(|x| x / nw).collect());
        }
        let hessenberg = h.view((0, 0), (m + 1, m)).into_owned();
        basis.truncate(m + 1);
        Self {
            basis,
            hessenberg,
            breakdown,
        }
    }

    pub fn steps(&self) -> usize {
        self.hessenberg.ncols()
    }

    /// Square `m × m` part of the Hessenberg matrix.
    pub fn square(&self) -> CMat {
        let m = self.steps();
        self.hessenberg.view((0, 0), (m, m)).into_owned()
    }

    /// `Σ_i y_i v_i` over the first `y.len()` basis vectors.
    pub fn combine(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.basis[0].len()];
        for (yi, v) in y.iter().zip(&self.basis) {
            axpy(*yi, v, &mut out);
        }
        out
    }
}

/// Result of a GMRES solve.
#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub solution: Vec<Complex64>,
    pub relative_residual: f64,
    pub iterations: usize,
}

/// Restarted GMRES for `A x = b`.
pub fn gmres(
    apply: &dyn Fn(&[Complex64]) -> Vec<Complex64>,
    b: &[Complex64],
    tol: f64,
    restart: usize,
    max_restarts: usize,
) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![ZERO; n];
    if bnorm == 0.0 {
        return GmresOutcome {
            solution: x,
            relative_residual: 0.0,
            iterations: 0,
        };
    }
    let mut iterations = 0;
    for _ in 0..max_restarts.max(1) {
        let ax = apply(&x);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        if norm(&r) / bnorm <= tol {
            break;
        }
        let arnoldi = Arnoldi::run(apply, &r, restart.min(n));
        iterations += arnoldi.steps();
        // Least squares min ‖βe₁ − H̄y‖ by QR.
        let hbar = &arnoldi.hessenberg;
        let mut rhs = DVector::<Complex64>::zeros(hbar.nrows());
        rhs[0] = Complex64::new(norm(&r), 0.0);
        let qr = hbar.clone().qr();
        let qtb = qr.q().adjoint() * &rhs;
        let rmat = qr.r();
        let y = match rmat.solve_upper_triangular(&qtb) {
            Some(y) => y,
            None => break,
        };
        let update = arnoldi.combine(y.as_slice());
        axpy(Complex64::new(1.0, 0.0), &update, &mut x);
    }
    let ax = apply(&x);
    let r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    GmresOutcome {
        solution: x,
        relative_residual: norm(&r) / bnorm,
        iterations,
    }
}

/// Inverse by partial-pivoting LU, `None` when a pivot vanishes.
pub fn inverse(m: &CMat) -> Option<CMat> {
    assert_eq!(m.nrows(), m.ncols(), "inverse of a non-square matrix");
    let n = m.nrows();
    let a = faer::Mat::<Complex64>::from_fn(n, n, |i, j| m[(i, j)]);
    let inv = a.partial_piv_lu().inverse();
    let out = CMat::from_fn(n, n, |i, j| inv[(i, j)]);
    out.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_matches_identity() {
        let m = CMat::from_fn(5, 5, |i, j| {
            Complex64::new(((i * 3 + j * 7) % 5) as f64, i as f64 - j as f64)
                + if i == j { Complex64::new(6.0, 0.0) } else { ZERO }
        });
        let inv = inverse(&m).unwrap();
        let err = (&m * &inv - CMat::identity(5, 5))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-13);
        assert!(inverse(&CMat::zeros(3, 3)).is_none());
    }
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_matrix(n: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn csr_matches_dense() {
        let trip = vec![(0, 1, c(2.0)), (1, 0, c(-1.0)), (0, 1, c(1.0)), (2, 2, c(4.0))];
        let m = CsrMatrix::from_triplets(3, 3, trip);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 1), c(3.0));
        let x = vec![c(1.0), c(2.0), c(3.0)];
        let d = m.to_dense() * to_dvector(&x);
        assert_eq!(m.matvec(&x), d.as_slice());
        assert_eq!(m.transpose().get(1, 0), c(3.0));
        assert_eq!(m.column_sums(), vec![c(-1.0), c(3.0), c(4.0)]);
        let s = m.scale_columns(&[c(1.0), c(0.5), c(2.0)]);
        assert_eq!(s.get(0, 1), c(1.5));
    }

    #[test]
    fn schur_eigenvectors_have_small_residual() {
        let a = random_matrix(40, 1);
        let schur = SchurForm::new(&a).unwrap();
        for k in [0, 7, 39] {
            let lambda = schur.eigenvalues()[k];
            let v = schur.eigenvector(k);
            let av = &a * to_dvector(&v);
            let res: f64 = av
                .iter()
                .zip(&v)
                .map(|(x, y)| (x - lambda * y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(res / norm(&v) < 1e-11, "k={k} residual {res:e}");
        }
    }

    #[test]
    fn gmres_solves_well_conditioned_system() {
        let n = 60;
        let a = random_matrix(n, 2) * c(0.05) + CMat::identity(n, n);
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let apply = |x: &[Complex64]| (&a * to_dvector(x)).iter().copied().collect::<Vec<_>>();
        let out = gmres(&apply, &b, 1e-12, 40, 10);
        assert!(out.relative_residual < 1e-12);
        let exact = a.lu().solve(&to_dvector(&b)).unwrap();
        let err: f64 = exact
            .iter()
            .zip(&out.solution)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn arnoldi_reproduces_relation() {
        let a = random_matrix(30, 3);
        let apply = |x: &[Complex64]| (&a * to_dvector(x)).iter().copied().collect::<Vec<_>>();
        let start: Vec<Complex64> = (0..30).map(|i| c(1.0 + i as f64)).collect();
        let arn = Arnoldi::run(&apply, &start, 10);
        for j in 0..10 {
            let av = apply(&arn.basis[j]);
            let col: Vec<Complex64> = arn.hessenberg.column(j).iter().copied().collect();
            let vh = arn.combine(&col);
            let diff: f64 = av.iter().zip(&vh).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn singular_values_sorted() {
        let m = CMat::from_diagonal(&DVector::from_vec(vec![c(1.0), c(3.0), c(2.0)]));
        assert_eq!(singular_values(&m), vec![3.0, 2.0, 1.0]);
    }
}
