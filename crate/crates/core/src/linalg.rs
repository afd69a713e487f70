//! Dense small-matrix kernels for the square-root recursions.
//!
//! Every covariance factor in this crate is upper triangular with the
//! convention `P = Sᵀ·S`. The rows of `S` are therefore the sigma-point
//! offset directions, and stacking rows of several factors on top of each
//! other and re-triangularizing with [`qr_triangularize`] adds the covariances
//! they represent.

use std::fmt;

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative tolerance used to decide that a triangular pivot is zero.
const PIVOT_TOL: f64 = 1e-14;
/// Relative tolerance for the symmetry precondition of [`cholesky_factor`].
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    NotSquare { rows: usize, cols: usize },
    NotSymmetric { max_asymmetry: f64 },
    /// The leading minor ending at `pivot` was not strictly positive.
    NotPositiveDefinite { pivot: usize },
    RankDeficient { col: usize },
    /// Removing the rank-1 term would leave a matrix that is not positive definite.
    DowndateBreaksPD { pivot: usize },
    SingularTriangular { index: usize },
    NotUpperTriangular,
    NonFinite,
    DimensionMismatch { expected: usize, found: usize },
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NotSquare { rows, cols } => write!(f, "expected a square matrix, got {rows}x{cols}"),
            Self::NotSymmetric { max_asymmetry } => {
                write!(f, "matrix is not symmetric (max |p_ij - p_ji| = {max_asymmetry:e})")
            }
            Self::NotPositiveDefinite { pivot } => {
                write!(f, "matrix is not positive definite (leading minor {pivot})")
            }
            Self::RankDeficient { col } => write!(f, "matrix is rank deficient at column {col}"),
            Self::DowndateBreaksPD { pivot } => {
                write!(f, "rank-1 downdate loses positive definiteness at pivot {pivot}")
            }
            Self::SingularTriangular { index } => {
                write!(f, "triangular factor is singular at diagonal {index}")
            }
            Self::NotUpperTriangular => write!(f, "matrix has nonzero strictly-lower entries"),
            Self::NonFinite => write!(f, "matrix contains NaN or infinite entries"),
            Self::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
        }
    }
}

impl std::error::Error for LinalgError {}

/// Square upper-triangular factor `S` of a covariance `P = Sᵀ·S`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperTri(Mat);

impl UpperTri {
    /// Wraps a square matrix whose strictly-lower entries are exactly zero.
    pub fn new(m: Mat) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        for j in 0..m.ncols() {
            for i in (j + 1)..m.nrows() {
                if m[(i, j)] != 0.0 {
                    return Err(LinalgError::NotUpperTriangular);
                }
            }
        }
        Ok(Self(m))
    }

    /// Keeps the upper triangle of `m` and zeroes the rest.
    pub fn from_upper_part(m: &Mat) -> Result<Self, LinalgError> {
        Self::new(m.upper_triangle())
    }

    pub fn identity(n: usize) -> Self {
        Self(Mat::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, LinalgError> {
        Self::new(Mat::from_diagonal(&Vector::from_column_slice(diag)))
    }

    /// Factor of a diagonal covariance given its variances.
    pub fn from_variances(var: &[f64]) -> Result<Self, LinalgError> {
        if var.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(LinalgError::NotPositiveDefinite { pivot: 0 });
        }
        let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        Self::from_diagonal(&sd)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    /// `Sᵀ·S`.
    pub fn covariance(&self) -> Mat {
        self.0.tr_mul(&self.0)
    }

    pub fn min_diag(&self) -> f64 {
        self.0.diagonal().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn has_positive_diagonal(&self) -> bool {
        self.0.diagonal().iter().all(|d| *d > 0.0)
    }
}

fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Upper Cholesky factor of a symmetric positive-definite matrix.
///
/// The input is symmetrized as `(P + Pᵀ)/2` after the symmetry check so that
/// round-off asymmetry below the tolerance does not leak into the factor.
pub fn cholesky_factor(p: &Mat) -> Result<UpperTri, LinalgError> {
    if !p.is_square() {
        return Err(LinalgError::NotSquare { rows: p.nrows(), cols: p.ncols() });
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let n = p.nrows();
    let scale = max_abs(p);
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((p[(i, j)] - p[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(LinalgError::NotSymmetric { max_asymmetry: asym });
    }

    let mut s = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = p[(j, j)];
        for k in 0..j {
            d -= s[(k, j)] * s[(k, j)];
        }
        if !(d > 0.0) {
            return Err(LinalgError::NotPositiveDefinite { pivot: j });
        }
        let sjj = d.sqrt();
        s[(j, j)] = sjj;
        for i in (j + 1)..n {
            let mut v = 0.5 * (p[(j, i)] + p[(i, j)]);
            for k in 0..j {
                v -= s[(k, j)] * s[(k, i)];
            }
            s[(j, i)] = v / sjj;
        }
    }
    Ok(UpperTri(s))
}

/// Householder QR of a tall matrix, returning only the triangular factor.
///
/// The result `R` satisfies `Rᵀ·R = Aᵀ·A` and has a nonnegative diagonal.
pub fn qr_triangularize(a: &Mat) -> Result<UpperTri, LinalgError> {
    let (m, n) = a.shape();
    if m < n {
        return Err(LinalgError::DimensionMismatch { expected: n, found: m });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let mut w = a.clone();
    for k in 0..n {
        let norm = (k..m).map(|i| w[(i, k)] * w[(i, k)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if w[(k, k)] > 0.0 { -norm } else { norm };
        // v = x - alpha e_k, stored in place below the diagonal
        let v0 = w[(k, k)] - alpha;
        let vnorm2 = v0 * v0 + ((k + 1)..m).map(|i| w[(i, k)] * w[(i, k)]).sum::<f64>();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in (k + 1)..n {
            let mut dot = v0 * w[(k, j)];
            for i in (k + 1)..m {
                dot += w[(i, k)] * w[(i, j)];
            }
            let f = 2.0 * dot / vnorm2;
            w[(k, j)] -= f * v0;
            for i in (k + 1)..m {
                let vi = w[(i, k)];
                w[(i, j)] -= f * vi;
            }
        }
        w[(k, k)] = alpha;
        for i in (k + 1)..m {
            w[(i, k)] = 0.0;
        }
    }

    let mut r = w.rows(0, n).upper_triangle();
    for i in 0..n {
        if r[(i, i)] < 0.0 {
            for j in i..n {
                r[(i, j)] = -r[(i, j)];
            }
        }
    }
    let dmax = r.diagonal().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    for i in 0..n {
        if dmax == 0.0 || r[(i, i)] <= PIVOT_TOL * dmax {
            return Err(LinalgError::RankDeficient { col: i });
        }
    }
    Ok(UpperTri(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank1 {
    Update,
    Downdate,
}

impl Rank1 {
    pub fn from_sign(sign: f64) -> Self {
        if sign < 0.0 {
            Self::Downdate
        } else {
            Self::Update
        }
    }

    fn sign(self) -> f64 {
        match self {
            Self::Update => 1.0,
            Self::Downdate => -1.0,
        }
    }
}

/// Returns `S'` with `S'ᵀ·S' = Sᵀ·S ± x·xᵀ`.
pub fn rank1_update(s: &UpperTri, x: &Vector, kind: Rank1) -> Result<UpperTri, LinalgError> {
    let mut out = s.clone();
    rank1_update_in_place(&mut out, x, kind)?;
    Ok(out)
}

/// In-place variant of [`rank1_update`]; `s` is left unspecified on error.
pub fn rank1_update_in_place(
    s: &mut UpperTri,
    x: &Vector,
    kind: Rank1,
) -> Result<(), LinalgError> {
    let n = s.dim();
    if x.len() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, found: x.len() });
    }
    let sign = kind.sign();
    let r = &mut s.0;
    let mut v = x.clone();
    for k in 0..n {
        let rkk = r[(k, k)];
        let arg = rkk * rkk + sign * v[k] * v[k];
        if !(arg > 0.0) || rkk == 0.0 {
            return Err(LinalgError::DowndateBreaksPD { pivot: k });
        }
        let rnew = arg.sqrt();
        let c = rnew / rkk;
        let sn = v[k] / rkk;
        r[(k, k)] = rnew;
        for j in (k + 1)..n {
            r[(k, j)] = (r[(k, j)] + sign * sn * v[j]) / c;
            v[j] = c * v[j] - sn * r[(k, j)];
        }
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Solve `op(S)·X = B`.
    Left,
    /// Solve `X·op(S) = B`.
    Right,
}

/// Triangular solve with `op(S) = S` or `Sᵀ`.
pub fn tri_solve(s: &UpperTri, b: &Mat, side: Side, transposed: bool) -> Result<Mat, LinalgError> {
    let n = s.dim();
    let r = &s.0;
    let dmax = r.diagonal().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    for i in 0..n {
        if dmax == 0.0 || r[(i, i)].abs() <= PIVOT_TOL * dmax {
            return Err(LinalgError::SingularTriangular { index: i });
        }
    }
    match side {
        Side::Left => {
            if b.nrows() != n {
                return Err(LinalgError::DimensionMismatch { expected: n, found: b.nrows() });
            }
            let mut x = b.clone();
            for c in 0..b.ncols() {
                if transposed {
                    // Sᵀ is lower triangular: forward substitution
                    for i in 0..n {
                        let mut v = x[(i, c)];
                        for k in 0..i {
                            v -= r[(k, i)] * x[(k, c)];
                        }
                        x[(i, c)] = v / r[(i, i)];
                    }
                } else {
                    for i in (0..n).rev() {
                        let mut v = x[(i, c)];
                        for k in (i + 1)..n {
                            v -= r[(i, k)] * x[(k, c)];
                        }
                        x[(i, c)] = v / r[(i, i)];
                    }
                }
            }
            Ok(x)
        }
        Side::Right => {
            // X·op(S) = B  <=>  op(S)ᵀ·Xᵀ = Bᵀ
            if b.ncols() != n {
                return Err(LinalgError::DimensionMismatch { expected: n, found: b.ncols() });
            }
            let xt = tri_solve(s, &b.transpose(), Side::Left, !transposed)?;
            Ok(xt.transpose())
        }
    }
}

/// Solves `op(S)·x = b` for a single vector.
pub fn tri_solve_vec(s: &UpperTri, b: &Vector, transposed: bool) -> Result<Vector, LinalgError> {
    let m = tri_solve(s, &Mat::from_column_slice(b.len(), 1, b.as_slice()), Side::Left, transposed)?;
    Ok(Vector::from_column_slice(m.as_slice()))
}

/// Stacks matrices with equal column counts vertically.
pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        out.view_mut((r0, 0), (b.nrows(), cols)).copy_from(*b);
        r0 += b.nrows();
    }
    out
}

pub fn symmetrize(p: &Mat) -> Mat {
    (p + p.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rel_fro(a: &Mat, b: &Mat) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn cholesky_diagonal_and_identity() {
        let s = cholesky_factor(&Mat::from_diagonal(&Vector::from_vec(vec![4.0, 9.0]))).unwrap();
        assert_eq!(s.as_mat(), &Mat::from_diagonal(&Vector::from_vec(vec![2.0, 3.0])));
        let i3 = cholesky_factor(&Mat::identity(3, 3)).unwrap();
        assert_eq!(i3.as_mat(), &Mat::identity(3, 3));
    }

    #[test]
    fn cholesky_reproduces_2x2() {
        let p = Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let s = cholesky_factor(&p).unwrap();
        assert!(rel_fro(&s.covariance(), &p) < 1e-12);
        assert!(s.has_positive_diagonal());
    }

    #[test]
    fn cholesky_rejects_indefinite_and_asymmetric() {
        let p = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(cholesky_factor(&p), Err(LinalgError::NotPositiveDefinite { pivot: 1 }));
        let q = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(cholesky_factor(&q), Err(LinalgError::NotSymmetric { .. })));
    }

    #[test]
    fn qr_of_identity_and_triangular_stack() {
        assert_eq!(qr_triangularize(&Mat::identity(2, 2)).unwrap().as_mat(), &Mat::identity(2, 2));
        let s = Mat::from_row_slice(3, 3, &[2.0, -1.0, 0.5, 0.0, 1.5, 0.25, 0.0, 0.0, 3.0]);
        let a = vstack(&[&s, &Mat::zeros(2, 3)]);
        let r = qr_triangularize(&a).unwrap();
        assert!((r.as_mat() - &s).amax() < 1e-14);
    }

    #[test]
    fn qr_rank_deficient() {
        let a = Mat::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert_eq!(qr_triangularize(&a), Err(LinalgError::RankDeficient { col: 1 }));
    }

    #[test]
    fn rank1_scalar_cases() {
        let one = UpperTri::identity(1);
        let up = rank1_update(&one, &Vector::from_vec(vec![1.0]), Rank1::Update).unwrap();
        assert_relative_eq!(up.as_mat()[(0, 0)], 2f64.sqrt(), epsilon = 1e-15);
        let down = rank1_update(&up, &Vector::from_vec(vec![1.0]), Rank1::Downdate).unwrap();
        assert_relative_eq!(down.as_mat()[(0, 0)], 1.0, epsilon = 1e-15);
        let z = rank1_update(&UpperTri::identity(2), &Vector::zeros(2), Rank1::Update).unwrap();
        assert_eq!(z.as_mat(), &Mat::identity(2, 2));
    }

    #[test]
    fn downdate_that_breaks_pd_is_rejected() {
        let one = UpperTri::identity(1);
        let r = rank1_update(&one, &Vector::from_vec(vec![1.0]), Rank1::Downdate);
        assert_eq!(r, Err(LinalgError::DowndateBreaksPD { pivot: 0 }));
    }

    #[test]
    fn tri_solve_identity_and_diagonal() {
        let b = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(tri_solve(&UpperTri::identity(2), &b, Side::Left, false).unwrap(), b);
        let d = UpperTri::from_diagonal(&[2.0, 4.0]).unwrap();
        let x = tri_solve(&d, &Mat::from_column_slice(2, 1, &[2.0, 4.0]), Side::Left, false).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn tri_solve_all_variants_have_small_residual() {
        let s = UpperTri::new(Mat::from_row_slice(3, 3, &[3.0, 1.0, -2.0, 0.0, 2.0, 0.5, 0.0, 0.0, 1.5]))
            .unwrap();
        let sm = s.as_mat().clone();
        let b = Mat::from_row_slice(3, 3, &[1.0, -2.0, 0.3, 4.0, 0.1, 2.0, -1.0, 1.0, 1.0]);
        for t in [false, true] {
            let op = if t { sm.transpose() } else { sm.clone() };
            let xl = tri_solve(&s, &b, Side::Left, t).unwrap();
            assert!((&op * &xl - &b).norm() < 1e-12 * b.norm());
            let xr = tri_solve(&s, &b, Side::Right, t).unwrap();
            assert!((&xr * &op - &b).norm() < 1e-12 * b.norm());
        }
    }

    #[test]
    fn tri_solve_singular() {
        let s = UpperTri::new(Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0])).unwrap();
        assert_eq!(
            tri_solve(&s, &Mat::identity(2, 2), Side::Left, false),
            Err(LinalgError::SingularTriangular { index: 1 })
        );
    }

    #[test]
    fn upper_tri_rejects_lower_entries() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 0.0, 1e-300, 1.0]);
        assert_eq!(UpperTri::new(m), Err(LinalgError::NotUpperTriangular));
    }
}
