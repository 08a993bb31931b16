//! Dense symmetric and positive definite kernels.
//!
//! Every matrix that enters the iteration is stored either as a [`SymMatrix`]
//! (symmetric, finite) or as an [`SpdMatrix`] (symmetric with a successful
//! Cholesky factorization kept alongside the entries). Inverses are applied
//! through the stored factor; an explicit inverse is only formed when it is the
//! value being returned.

use std::fs;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_SWEEPS: usize = 10_000;

/// Tolerance used by the matrix JSON reader before it symmetrizes.
pub const JSON_SYMMETRY_TOL: f64 = 1e-8;

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidShape("matrix dimension must be positive".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(m.nrows())
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)]) / 2.0)
}

/// Real symmetric matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrizes `m` as `(m + mᵀ)/2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        Ok(SymMatrix(symmetrize(&m)))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        SymMatrix::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        SymMatrix::new(matrix_from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scale(&self, alpha: f64) -> SymMatrix {
        SymMatrix(&self.0 * alpha)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(sym_eig(self)?.values)
    }

    /// Spectral norm, `max |λ_i|`.
    pub fn op_norm(&self) -> Result<f64> {
        let vals = self.eigenvalues()?;
        Ok(vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Symmetric positive definite matrix together with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    a: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a
    }
}

impl SpdMatrix {
    /// Symmetrizes `m` and verifies positive definiteness by factorizing it.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Self::named(m, "matrix")
    }

    /// As [`SpdMatrix::new`], naming the failing quantity in the error.
    pub fn named(m: DMatrix<f64>, what: &'static str) -> Result<Self> {
        check_square(&m)?;
        let a = symmetrize(&m);
        let chol = Cholesky::new(a.clone()).ok_or(Error::CholeskyFailure(what))?;
        // nalgebra accepts tiny positive pivots that underflow in later solves.
        if chol.l_dirty().diagonal().iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::CholeskyFailure(what));
        }
        Ok(SpdMatrix { a, chol })
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        assert!(s > 0.0 && n > 0);
        SpdMatrix::new(DMatrix::identity(n, n) * s).expect("positive multiple of identity")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        SpdMatrix::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        SpdMatrix::new(matrix_from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.a
    }

    pub fn to_sym(&self) -> SymMatrix {
        SymMatrix(self.a.clone())
    }

    /// Lower-triangular `L` with `X = L Lᵀ`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn log_det(&self) -> f64 {
        log_det(self)
    }

    pub fn trace(&self) -> f64 {
        self.a.trace()
    }

    /// Solves `X S = B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        spd_solve(self, b)
    }

    pub fn inverse(&self) -> SpdMatrix {
        // The inverse of a factorized SPD matrix is SPD up to roundoff; re-validate anyway.
        SpdMatrix::named(self.chol.inverse(), "inverse").expect("inverse of an SPD matrix")
    }

    pub fn scale(&self, alpha: f64) -> Result<SpdMatrix> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "SPD scaling factor must be positive, got {alpha}"
            )));
        }
        SpdMatrix::new(&self.a * alpha)
    }

    /// `B X Bᵀ` for a full-row-rank `B`.
    pub fn congruence(&self, b: &DMatrix<f64>) -> Result<SpdMatrix> {
        if b.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: b.ncols(),
            });
        }
        SpdMatrix::named(b * &self.a * b.transpose(), "congruence")
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(sym_eig(&self.to_sym())?.values)
    }

    pub fn min_max_eig(&self) -> Result<(f64, f64)> {
        let v = self.eigenvalues()?;
        Ok((v[0], v[v.len() - 1]))
    }

    /// Operator norm, which for an SPD matrix is `λ_max`.
    pub fn op_norm(&self) -> Result<f64> {
        Ok(self.min_max_eig()?.1)
    }

    /// `X^t` through the spectral decomposition.
    pub fn powf(&self, t: f64) -> Result<SpdMatrix> {
        let eig = sym_eig(&self.to_sym())?;
        let vals: Vec<f64> = eig.values.iter().map(|v| v.powf(t)).collect();
        SpdMatrix::named(eig.reassemble(&vals), "matrix power")
    }

    pub fn sqrt(&self) -> Result<SpdMatrix> {
        self.powf(0.5)
    }

    pub fn add(&self, other: &SpdMatrix) -> Result<SpdMatrix> {
        check_dims(self.dim(), other.dim())?;
        SpdMatrix::new(&self.a + &other.a)
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub fn matrix_from_rows(rows: &[&[f64]]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::ShapeMismatch("ragged rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// `log det X = 2 Σ log ℓ_ii` from the stored Cholesky factor.
pub fn log_det(x: &SpdMatrix) -> f64 {
    2.0 * x.chol.l_dirty().diagonal().iter().map(|l| l.ln()).sum::<f64>()
}

pub fn spd_solve(x: &SpdMatrix, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(x.dim(), b.nrows())?;
    Ok(x.chol.solve(b))
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    /// `V diag(vals) Vᵀ`.
    pub fn reassemble(&self, vals: &[f64]) -> DMatrix<f64> {
        let v = &self.vectors;
        let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * vals[j]);
        scaled * v.transpose()
    }
}

pub fn sym_eig(s: &SymMatrix) -> Result<SymEig> {
    let eig = SymmetricEigen::try_new(s.0.clone(), EIG_EPS, EIG_MAX_SWEEPS)
        .ok_or(Error::ConvergenceFailure(EIG_MAX_SWEEPS))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(s.dim(), s.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SymEig { values, vectors })
}

/// Eigenvalues of the pencil `(X, Y)`, i.e. of `L⁻¹ X L⁻ᵀ` with `Y = L Lᵀ`, ascending.
pub fn gen_eigenvalues(x: &SpdMatrix, y: &SpdMatrix) -> Result<Vec<f64>> {
    check_dims(y.dim(), x.dim())?;
    let l = y.chol.l();
    let lower = l
        .solve_lower_triangular(&x.a)
        .ok_or(Error::CholeskyFailure("pencil"))?;
    let whitened = l
        .solve_lower_triangular(&lower.transpose())
        .ok_or(Error::CholeskyFailure("pencil"))?;
    SymMatrix::new(whitened)?.eigenvalues()
}

/// `M(X/Y) = inf{λ > 0 : X ⪯ λY}`.
pub fn max_gen_eig(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    let vals = gen_eigenvalues(x, y)?;
    Ok(vals[vals.len() - 1])
}

pub fn matrix_exp_sym(s: &SymMatrix) -> Result<SpdMatrix> {
    let eig = sym_eig(s)?;
    let vals: Vec<f64> = eig.values.iter().map(|v| v.exp()).collect();
    SpdMatrix::named(eig.reassemble(&vals), "matrix exponential")
}

/// On-disk matrix: `{"n": <int>, "data": [[row], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub n: usize,
    pub data: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixJson {
            n: m.nrows(),
            data: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    /// Checks shape and the symmetry tolerance, then symmetrizes.
    pub fn to_sym(&self) -> Result<SymMatrix> {
        if self.n == 0 || self.data.len() != self.n || self.data.iter().any(|r| r.len() != self.n) {
            return Err(Error::ShapeMismatch(format!(
                "matrix declares n = {} but data is not {0}x{0}",
                self.n
            )));
        }
        let m = DMatrix::from_fn(self.n, self.n, |i, j| self.data[i][j]);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        let asym = (&m - m.transpose()).amax();
        if asym > JSON_SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(asym));
        }
        SymMatrix::new(m)
    }

    pub fn to_spd(&self) -> Result<SpdMatrix> {
        SpdMatrix::new(self.to_sym()?.into_matrix())
    }
}

pub fn read_matrix(path: &Path) -> Result<SymMatrix> {
    let text = fs::read_to_string(path)?;
    let parsed: MatrixJson = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    parsed.to_sym()
}

pub fn write_matrix(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&MatrixJson::from_matrix(m)).expect("serializable");
    crate::io::write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        matrix_from_rows(rows).unwrap()
    }

    #[test]
    fn log_det_examples() {
        assert_eq!(SpdMatrix::identity(3).log_det(), 0.0);
        let d = SpdMatrix::from_diagonal(&[2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(d.log_det(), 6f64.ln(), epsilon = 1e-14);
        let x = SpdMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        assert_abs_diff_eq!(x.log_det(), 3f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn indefinite_input_is_rejected() {
        let err = SpdMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::CholeskyFailure(_)));
        assert!(SpdMatrix::from_diagonal(&[1.0, 0.0]).is_err());
        assert!(matches!(
            SpdMatrix::new(DMatrix::from_element(2, 2, f64::NAN)),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn construction_symmetrizes_exactly() {
        let x = SpdMatrix::new(mat(&[&[2.0, 0.3], &[0.1, 2.0]])).unwrap();
        let a = x.as_matrix();
        assert_eq!(a[(0, 1)], a[(1, 0)]);
        assert_eq!(a[(0, 1)], 0.2);
    }

    #[test]
    fn solve_examples() {
        let b = mat(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        assert_eq!(SpdMatrix::identity(2).solve(&b).unwrap(), b);

        let d = SpdMatrix::from_diagonal(&[2.0, 4.0]).unwrap();
        let s = d.solve(&DMatrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(s, mat(&[&[0.5, 0.0], &[0.0, 0.25]]), epsilon = 1e-15);

        let x = SpdMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let s = x.solve(&DMatrix::identity(2, 2)).unwrap();
        let expected = mat(&[&[2.0, -1.0], &[-1.0, 2.0]]) / 3.0;
        assert_abs_diff_eq!(s, expected, epsilon = 1e-15);
        let residual = (x.as_matrix() * &s - DMatrix::<f64>::identity(2, 2)).norm();
        assert!(residual <= 1e-10 * 2f64.sqrt());
    }

    #[test]
    fn solve_rejects_wrong_row_count() {
        let x = SpdMatrix::identity(3);
        assert!(matches!(
            x.solve(&DMatrix::zeros(2, 1)),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn eig_examples() {
        assert_eq!(SymMatrix::identity(2).eigenvalues().unwrap(), vec![1.0, 1.0]);
        assert_eq!(SymMatrix::from_diagonal(&[3.0, 1.0]).unwrap().eigenvalues().unwrap(), vec![1.0, 3.0]);
        let s = SymMatrix::from_rows(&[&[0.0, -1.0 / 3.0], &[-1.0 / 3.0, 0.0]]).unwrap();
        let eig = sym_eig(&s).unwrap();
        assert_abs_diff_eq!(eig.values[0], -1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eig.values[1], 1.0 / 3.0, epsilon = 1e-15);
        let vtv = eig.vectors.transpose() * &eig.vectors;
        assert!((vtv - DMatrix::<f64>::identity(2, 2)).norm() <= 1e-10);
        assert_abs_diff_eq!(eig.reassemble(&eig.values), s.as_matrix().clone(), epsilon = 1e-14);
    }

    #[test]
    fn max_gen_eig_examples() {
        let i3 = SpdMatrix::identity(3);
        assert_abs_diff_eq!(max_gen_eig(&i3, &i3).unwrap(), 1.0, epsilon = 1e-15);
        let two = SpdMatrix::scaled_identity(3, 2.0);
        assert_eq!(max_gen_eig(&two, &i3).unwrap(), 2.0);
        let x = SpdMatrix::from_diagonal(&[1.0, 4.0]).unwrap();
        let y = SpdMatrix::from_diagonal(&[2.0, 1.0]).unwrap();
        assert_abs_diff_eq!(max_gen_eig(&x, &y).unwrap(), 4.0, epsilon = 1e-14);
        assert!(matches!(
            max_gen_eig(&x, &i3),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn exp_examples() {
        let e = matrix_exp_sym(&SymMatrix::zeros(2)).unwrap();
        assert_abs_diff_eq!(e.as_matrix().clone(), DMatrix::identity(2, 2), epsilon = 1e-15);

        let s = SymMatrix::from_diagonal(&[2f64.ln(), 3f64.ln()]).unwrap();
        let e = matrix_exp_sym(&s).unwrap();
        assert_abs_diff_eq!(e.as_matrix().clone(), mat(&[&[2.0, 0.0], &[0.0, 3.0]]), epsilon = 1e-14);

        let t = 0.7_f64;
        let s = SymMatrix::from_rows(&[&[0.0, t], &[t, 0.0]]).unwrap();
        let e = matrix_exp_sym(&s).unwrap();
        let expected = mat(&[&[t.cosh(), t.sinh()], &[t.sinh(), t.cosh()]]);
        assert_abs_diff_eq!(e.as_matrix().clone(), expected, epsilon = 1e-14);
    }

    #[test]
    fn matrix_json_reader() {
        let ok = MatrixJson {
            n: 2,
            data: vec![vec![2.0, 1.0], vec![1.0 + 1e-12, 2.0]],
        };
        let s = ok.to_spd().unwrap();
        assert_eq!(s.as_matrix()[(0, 1)], s.as_matrix()[(1, 0)]);

        let asym = MatrixJson {
            n: 2,
            data: vec![vec![2.0, 1.0], vec![1.1, 2.0]],
        };
        assert!(matches!(asym.to_sym(), Err(Error::NotSymmetric(_))));

        let ragged = MatrixJson {
            n: 2,
            data: vec![vec![2.0, 1.0]],
        };
        assert!(matches!(ragged.to_sym(), Err(Error::ShapeMismatch(_))));
    }
}
