//! Dense linear-algebra helpers shared by identification and the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    if sym.is_empty() {
        return 0.0;
    }
    sym.symmetric_eigenvalues().min()
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    gram.symmetric_eigenvalues().max().max(0.0).sqrt()
}

fn psd_eigen(sym: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let eig = symmetrize(sym).symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let min = eig.eigenvalues.min();
    if min < -1e-10 * scale {
        return Err(Error::NotPositiveSemidefinite(min));
    }
    Ok(eig)
}

fn spectral_map(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    symmetrize(&(v * d * v.transpose()))
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn sym_sqrt(sym: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = psd_eigen(sym)?;
    Ok(spectral_map(&eig, |l| l.max(0.0).sqrt()))
}

/// Principal inverse square root of a symmetric positive definite matrix.
pub fn sym_inv_sqrt(sym: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = psd_eigen(sym)?;
    let max = eig.eigenvalues.amax();
    if eig.eigenvalues.min() <= 1e-14 * max.max(f64::MIN_POSITIVE) {
        return Err(Error::Singular("inverse square root"));
    }
    Ok(spectral_map(&eig, |l| 1.0 / l.sqrt()))
}

/// Column-pivoted Householder QR where each step selects the remaining
/// column of largest norm. Only the pivot order and the diagonal of R are kept.
#[derive(Clone, Debug)]
pub struct PivotedQr {
    pub permutation: Vec<usize>,
    pub diagonal: Vec<f64>,
}

impl PivotedQr {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let mut a = m.clone();
        let (rows, cols) = a.shape();
        let mut permutation: Vec<usize> = (0..cols).collect();
        let steps = rows.min(cols);
        let mut diagonal = Vec::with_capacity(steps);
        for k in 0..steps {
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..cols {
                let norm = a.view((k, j), (rows - k, 1)).norm_squared();
                if norm > best_norm {
                    best_norm = norm;
                    best = j;
                }
            }
            a.swap_columns(k, best);
            permutation.swap(k, best);

            let mut v: DVector<f64> = a.view((k, k), (rows - k, 1)).column(0).into_owned();
            let alpha = v.norm();
            if alpha == 0.0 {
                diagonal.push(0.0);
                continue;
            }
            let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign * alpha;
            let vnorm2 = v.norm_squared();
            for j in k..cols {
                let mut col = a.view_mut((k, j), (rows - k, 1));
                let proj = 2.0 * v.dot(&col.column(0)) / vnorm2;
                col.column_mut(0).axpy(-proj, &v, 1.0);
            }
            diagonal.push(-sign * alpha);
        }
        Self {
            permutation,
            diagonal,
        }
    }

    /// Original column indices whose pivot magnitude exceeds `rel_tol` times the largest.
    pub fn independent_columns(&self, rel_tol: f64) -> Vec<usize> {
        let max = self.diagonal.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        let mut kept: Vec<usize> = self
            .diagonal
            .iter()
            .zip(&self.permutation)
            .filter(|(d, _)| d.abs() > rel_tol * max)
            .map(|(_, &j)| j)
            .collect();
        kept.sort_unstable();
        kept
    }
}

/// Least-squares solution of `design * X ≈ rhs` via Householder QR of `design`.
/// Returns the solution and the singular values of the triangular factor.
pub fn least_squares(
    design: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (rows, cols) = design.shape();
    if rows < cols {
        return Err(Error::RankDeficient {
            rank: rows,
            required: cols,
            singular_values: design.singular_values().iter().copied().collect(),
        });
    }
    if rhs.nrows() != rows {
        return Err(Error::Dimension(format!(
            "least squares: design has {rows} rows, rhs has {}",
            rhs.nrows()
        )));
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let singular_values: Vec<f64> = r.singular_values().iter().copied().collect();
    let mut qtb = rhs.clone();
    qr.q_tr_mul(&mut qtb);
    let top = qtb.rows(0, cols).into_owned();
    let solution = r
        .solve_upper_triangular(&top)
        .ok_or(Error::Singular("least squares"))?;
    Ok((solution, singular_values))
}

/// Solves `F X + X Fᵀ = G` for square F via the Kronecker-vectorized system.
pub fn solve_lyapunov(f: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    if !f.is_square() || g.shape() != (n, n) {
        return Err(Error::Dimension("lyapunov operands".into()));
    }
    let nn = n * n;
    let mut op = DMatrix::zeros(nn, nn);
    // vec(F X) = (I ⊗ F) vec X and vec(X Fᵀ) = (F ⊗ I) vec X in column-major order.
    for j in 0..n {
        for i in 0..n {
            let row = i + j * n;
            for k in 0..n {
                op[(row, k + j * n)] += f[(i, k)];
                op[(row, i + k * n)] += f[(j, k)];
            }
        }
    }
    let rhs = DVector::from_column_slice(g.as_slice());
    let x = op.lu().solve(&rhs).ok_or(Error::Singular("lyapunov"))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, x.as_slice())))
}

pub fn max_real_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|c| c.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_real_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|c| c.re)
        .fold(f64::INFINITY, f64::min)
}

pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    max_real_eigenvalue(a) < 0.0
}

#[derive(Clone, Debug)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub iterations: usize,
}

/// Stabilizing feedback gain for (A, B): zero when A is already Hurwitz,
/// otherwise Bass's pole-shift construction.
pub fn stabilizing_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = b.ncols();
    if is_hurwitz(a) {
        return Ok(DMatrix::zeros(m, n));
    }
    let shift = (-min_real_eigenvalue(a)).max(0.0) + 1.0;
    let shifted = a + DMatrix::identity(n, n) * shift;
    let x = solve_lyapunov(&shifted, &(b * r_inv * b.transpose() * 2.0))?;
    let chol = x.clone().cholesky().ok_or_else(|| {
        Error::Unstabilizable("pole-shift Gramian is not positive definite".into())
    })?;
    let gain = r_inv * b.transpose() * chol.inverse();
    if !is_hurwitz(&(a - b * &gain)) {
        return Err(Error::Unstabilizable(
            "pole-shift gain does not stabilize the pair".into(),
        ));
    }
    Ok(gain)
}

/// Continuous algebraic Riccati equation `AᵀP + PA − PBR⁻¹BᵀP + Q = 0`
/// by Newton–Kleinman iteration.
pub fn care_newton_kleinman(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<CareSolution> {
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or(Error::Singular("input weight"))?;
    let mut gain = stabilizing_gain(a, b, &r_inv)?;
    let mut p_prev: Option<DMatrix<f64>> = None;
    let mut history = Vec::new();
    for iter in 1..=max_iter {
        let closed = a - b * &gain;
        let rhs = -(q + gain.transpose() * r * &gain);
        let p = solve_lyapunov(&closed.transpose(), &rhs)?;
        gain = &r_inv * b.transpose() * &p;
        if let Some(prev) = &p_prev {
            let change = (&p - prev).norm() / p.norm().max(f64::MIN_POSITIVE);
            history.push(change);
            if change <= tol {
                return Ok(CareSolution {
                    p,
                    gain,
                    iterations: iter,
                });
            }
        }
        p_prev = Some(p);
    }
    Err(Error::NotConverged {
        what: "Newton-Kleinman",
        iterations: max_iter,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sqrt_roundtrip() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let s = sym_sqrt(&m).unwrap();
        assert_relative_eq!(&s * &s, m, epsilon = 1e-12);
        let is = sym_inv_sqrt(&m).unwrap();
        assert_relative_eq!(&is * &m * &is, DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            sym_sqrt(&m),
            Err(Error::NotPositiveSemidefinite(_))
        ));
    }

    #[test]
    fn pivoted_qr_detects_dependent_column() {
        let m = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 2.0, 3.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 2.0, 1.0, 3.0],
        );
        let qr = PivotedQr::new(&m);
        assert_eq!(qr.independent_columns(1e-10).len(), 2);
        // The largest-norm column is chosen first.
        assert_eq!(qr.permutation[0], 2);
    }

    #[test]
    fn lyapunov_residual() {
        let f = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let x = solve_lyapunov(&f, &g).unwrap();
        assert_relative_eq!(&f * &x + &x * f.transpose(), g, epsilon = 1e-12);
    }

    #[test]
    fn double_integrator_care() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        let sol = care_newton_kleinman(&a, &b, &q, &r, 1e-13, 50).unwrap();
        let s3 = 3.0_f64.sqrt();
        assert_relative_eq!(
            sol.p,
            DMatrix::from_row_slice(2, 2, &[s3, 1.0, 1.0, s3]),
            epsilon = 1e-10
        );
        assert_relative_eq!(
            sol.gain,
            DMatrix::from_row_slice(1, 2, &[1.0, s3]),
            epsilon = 1e-10
        );
    }

    #[test]
    fn pole_shift_stabilizes_unstable_pair() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let k = stabilizing_gain(&a, &b, &DMatrix::identity(1, 1)).unwrap();
        assert!(is_hurwitz(&(a - b * k)));
    }

    #[test]
    fn uncontrollable_unstable_pair_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(stabilizing_gain(&a, &b, &DMatrix::identity(1, 1)).is_err());
    }

    #[test]
    fn least_squares_matches_exact_solution() {
        let design = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let truth = DMatrix::from_row_slice(2, 1, &[0.5, -2.0]);
        let (x, sv) = least_squares(&design, &(&design * &truth)).unwrap();
        assert_relative_eq!(x, truth, epsilon = 1e-12);
        assert_eq!(sv.len(), 2);
    }
}
