//! Neutral-stability decomposition: split a neutrally stable `A` into a
//! skew-symmetric part acting on the imaginary-axis eigenspace and a Hurwitz
//! part acting on a complementary invariant subspace, together with the
//! projection rows/columns relating the two bases.

use nalgebra::{DMatrix, DVector};

use super::schur::{block_eigenvalues, ordered_real_schur, solve_sylvester};
use super::LinalgError;

/// The `(E, F, X, Y)` splitting of a neutrally stable matrix.
///
/// `[E; F] * A * [Eplus Fplus] = blockdiag(X, Y)` with `X` skew-symmetric,
/// `Y` Hurwitz, and `[E; F]` inverse to `[Eplus Fplus]`.
#[derive(Debug, Clone)]
pub struct NeutralDecomposition {
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub eplus: DMatrix<f64>,
    pub fplus: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Number of eigenvalues on the imaginary axis, counted with multiplicity.
    pub n1: usize,
}

impl NeutralDecomposition {
    fn stacked(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.e.ncols();
        let n1 = self.n1;
        let mut w = DMatrix::zeros(n, n);
        w.view_mut((0, 0), (n1, n)).copy_from(&self.e);
        w.view_mut((n1, 0), (n - n1, n)).copy_from(&self.f);
        let mut v = DMatrix::zeros(n, n);
        v.view_mut((0, 0), (n, n1)).copy_from(&self.eplus);
        v.view_mut((0, n1), (n, n - n1)).copy_from(&self.fplus);
        (w, v)
    }

    /// Residual of the defining block identity, for self-certification.
    pub fn reassembly_residual(&self, a: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        let n1 = self.n1;
        let (w, v) = self.stacked();
        let mut bd = DMatrix::zeros(n, n);
        bd.view_mut((0, 0), (n1, n1)).copy_from(&self.x);
        bd.view_mut((n1, n1), (n - n1, n - n1)).copy_from(&self.y);
        (&w * a * &v - bd).norm()
    }

    /// Residual of `[E; F] [Eplus Fplus] = I`.
    pub fn inverse_residual(&self) -> f64 {
        let n = self.e.ncols();
        let (w, v) = self.stacked();
        (&w * &v - DMatrix::<f64>::identity(n, n)).norm()
    }
}

/// Classification tolerance for "on the imaginary axis".
fn axis_tolerance(a: &DMatrix<f64>) -> f64 {
    1e-8 * (1.0 + spectral_norm(a))
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values[0]
}

/// Rank of `A - (sigma + i*omega) I` via the real 2n x 2n embedding,
/// with singular values below `1e-8 * sigma_max` treated as zero.
fn shifted_rank(a: &DMatrix<f64>, sigma: f64, omega: f64) -> usize {
    let n = a.nrows();
    if omega == 0.0 {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] -= sigma;
        }
        return sv_rank(&m);
    }
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((n, n), (n, n)).copy_from(a);
    for i in 0..n {
        m[(i, i)] -= sigma;
        m[(n + i, n + i)] -= sigma;
        m[(i, n + i)] = omega;
        m[(n + i, i)] = -omega;
    }
    sv_rank(&m) / 2
}

fn sv_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-8 * smax).count()
}

/// Decompose a neutrally stable matrix.
///
/// Fails if any eigenvalue has real part above the classification tolerance,
/// or if an imaginary-axis eigenvalue is defective (Jordan block larger than
/// one, detected by a rank test).
pub fn neutral_stable_decompose(a: &DMatrix<f64>) -> Result<NeutralDecomposition, LinalgError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFiniteInput);
    }
    let tol = axis_tolerance(a);

    let ordered = ordered_real_schur(a, move |l| l.re.abs() <= tol)?;
    let sizes = &ordered.block_sizes;
    let t = &ordered.t;
    let q = &ordered.q;

    // Every eigenvalue must be on-axis or strictly stable.
    let mut start = 0;
    let mut axis_pairs: Vec<f64> = Vec::new(); // omega of each on-axis complex pair
    let mut axis_zero = 0usize; // algebraic multiplicity near zero
    for &sz in sizes {
        for l in block_eigenvalues(t, start, sz) {
            if l.re > tol {
                return Err(LinalgError::NotNeutrallyStable { re: l.re, im: l.im });
            }
        }
        if start < ordered.selected_dim {
            let eigs = block_eigenvalues(t, start, sz);
            if sz == 2 && eigs[0].im.abs() > 10.0 * tol {
                axis_pairs.push(eigs[0].im.abs());
            } else {
                axis_zero += sz;
            }
        }
        start += sz;
    }
    let n1 = ordered.selected_dim;

    // Semisimplicity: for each distinct on-axis frequency the geometric
    // multiplicity (nullity of A - i*omega*I) must match the algebraic one.
    axis_pairs.sort_by(f64::total_cmp);
    let cluster_tol = 10.0 * tol;
    let mut idx = 0;
    while idx < axis_pairs.len() {
        let mut end = idx + 1;
        while end < axis_pairs.len() && axis_pairs[end] - axis_pairs[end - 1] <= cluster_tol {
            end += 1;
        }
        let mult = end - idx;
        let omega = axis_pairs[idx..end].iter().sum::<f64>() / mult as f64;
        if shifted_rank(a, 0.0, omega) != n - mult {
            return Err(LinalgError::DefectiveEigenvalue { re: 0.0, im: omega });
        }
        idx = end;
    }
    if axis_zero > 0 && shifted_rank(a, 0.0, 0.0) != n - axis_zero {
        return Err(LinalgError::DefectiveEigenvalue { re: 0.0, im: 0.0 });
    }

    // Decouple: with T = [[T11, T12], [0, T22]], solving T11 Z - Z T22 = -T12
    // turns the orthogonal similarity into a true block diagonalisation:
    //   V = Q [[I, Z], [0, I]],  W = V^{-1} = [[I, -Z], [0, I]] Q^T,
    //   W A V = blockdiag(T11, T22).
    let t11 = t.view((0, 0), (n1, n1)).into_owned();
    let t22 = t.view((n1, n1), (n - n1, n - n1)).into_owned();
    let q1 = q.columns(0, n1).into_owned();
    let q2 = q.columns(n1, n - n1).into_owned();

    let (mut e, f, mut eplus, fplus) = if n1 == 0 || n1 == n {
        (q1.transpose(), q2.transpose(), q1.clone(), q2.clone())
    } else {
        let t12 = t.view((0, n1), (n1, n - n1)).into_owned();
        let z = solve_sylvester(&t11, &t22, &(-&t12))?;
        (
            q1.transpose() - &z * q2.transpose(),
            q2.transpose(),
            q1.clone(),
            &q1 * &z + &q2,
        )
    };

    // Make the leading block exactly skew-symmetric: find the positive definite
    // kernel element P of the Lyapunov map closest to the identity component,
    // then rescale the center basis by its square root.
    let x = if n1 > 0 {
        let p = lyapunov_kernel_projection(&t11)?;
        let (s, s_inv) = spd_sqrt(&p)?;
        let x_raw = &s * &t11 * &s_inv;
        e = &s * &e;
        eplus = &eplus * &s_inv;
        0.5 * (&x_raw - x_raw.transpose())
    } else {
        DMatrix::zeros(0, 0)
    };
    let y = t22;

    let mut dec = NeutralDecomposition {
        e,
        f,
        eplus,
        fplus,
        x,
        y,
        n1,
    };
    canonicalize_signs(&mut dec);

    // Self-certify before returning.
    let scale = 1.0 + spectral_norm(a);
    if dec.reassembly_residual(a) > 1e-8 * scale {
        return Err(LinalgError::NumericalFailure(
            "decomposition reassembly residual too large",
        ));
    }
    if dec.inverse_residual() > 1e-9 * scale {
        return Err(LinalgError::NumericalFailure(
            "decomposition bases are not inverse to each other",
        ));
    }
    Ok(dec)
}

/// Feedback gain `G = -B^T E^T E` of the broadcast consensus protocol.
pub fn consensus_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    if b.nrows() != a.nrows() {
        return Err(LinalgError::DimensionMismatch {
            context: "consensus_gain: B must have as many rows as A",
        });
    }
    let dec = neutral_stable_decompose(a)?;
    Ok(-(b.transpose() * dec.e.transpose() * &dec.e))
}

/// Projection of the identity onto the kernel of `L: P -> X^T P + P X` along
/// the range of `L` (the Cesaro average of `exp(X^T t) exp(X t)`); equals the
/// identity when `X` is already skew-symmetric, and is positive definite for
/// any `X` similar to a skew-symmetric matrix.
fn lyapunov_kernel_projection(x: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = x.nrows();
    let n2 = n * n;
    let id = DMatrix::<f64>::identity(n, n);
    let xt = x.transpose();
    let k = id.kronecker(&xt) + xt.kronecker(&id);

    // Orthonormal basis of ker(L) from the small singular values of K.
    let svd = k.clone().svd(false, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = (1e-9 * smax).max(1e-14);
    let v_t = svd.v_t.as_ref().expect("requested");
    let null_idx: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|&(_, &s)| s <= cutoff)
        .map(|(i, _)| i)
        .collect();
    if null_idx.is_empty() {
        return Err(LinalgError::NumericalFailure(
            "Lyapunov operator has no kernel; center block is not similar to skew",
        ));
    }

    // Split vec(I) = N alpha + K w; the kernel component is the projection
    // along ran(L). The system is consistent because 0 is a semisimple
    // eigenvalue of L, so an ordinary least-squares solve is exact.
    let mut m = DMatrix::<f64>::zeros(n2, null_idx.len() + n2);
    for (col, &idx) in null_idx.iter().enumerate() {
        m.column_mut(col).copy_from(&v_t.row(idx).transpose());
    }
    m.view_mut((0, null_idx.len()), (n2, n2)).copy_from(&k);
    let rhs = DVector::from_column_slice(id.as_slice());
    let sol_svd = m.svd(true, true);
    let sol_max = sol_svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let z = sol_svd
        .solve(&rhs, (1e-12 * sol_max).max(1e-300))
        .map_err(|_| LinalgError::NumericalFailure("Lyapunov kernel projection failed"))?;

    let mut p_vec = DVector::<f64>::zeros(n2);
    for (col, &idx) in null_idx.iter().enumerate() {
        p_vec += v_t.row(idx).transpose() * z[col];
    }
    let p = DMatrix::from_column_slice(n, n, p_vec.as_slice());
    let p = 0.5 * (&p + p.transpose());

    let residual = (&xt * &p + &p * x).norm();
    if residual > 1e-10 * (1.0 + spectral_norm(x)) * (1.0 + spectral_norm(&p)) {
        return Err(LinalgError::NumericalFailure(
            "Lyapunov symmetrizer residual too large",
        ));
    }
    Ok(p)
}

/// Symmetric positive definite square root and its inverse.
fn spd_sqrt(p: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), LinalgError> {
    let se = nalgebra::SymmetricEigen::new(p.clone());
    if se.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(LinalgError::NumericalFailure(
            "Lyapunov symmetrizer is not positive definite",
        ));
    }
    let v = &se.eigenvectors;
    let sq = DMatrix::from_diagonal(&se.eigenvalues.map(f64::sqrt));
    let isq = DMatrix::from_diagonal(&se.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok((v * sq * v.transpose(), v * isq * v.transpose()))
}

/// Flip basis-vector signs so the largest-magnitude entry of every column of
/// `[Eplus Fplus]` is positive; keeps the output deterministic.
fn canonicalize_signs(dec: &mut NeutralDecomposition) {
    let flip_of = |col: nalgebra::DVectorView<f64>| -> f64 {
        let mut best = 0usize;
        let mut mag = -1.0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > mag {
                mag = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            -1.0
        } else {
            1.0
        }
    };
    let n1 = dec.n1;
    let dc: Vec<f64> = (0..n1).map(|j| flip_of(dec.eplus.column(j))).collect();
    let ds: Vec<f64> = (0..dec.fplus.ncols())
        .map(|j| flip_of(dec.fplus.column(j)))
        .collect();
    for (j, &s) in dc.iter().enumerate() {
        if s < 0.0 {
            dec.eplus.column_mut(j).neg_mut();
            dec.e.row_mut(j).neg_mut();
        }
    }
    for (j, &s) in ds.iter().enumerate() {
        if s < 0.0 {
            dec.fplus.column_mut(j).neg_mut();
            dec.f.row_mut(j).neg_mut();
        }
    }
    for i in 0..n1 {
        for j in 0..n1 {
            dec.x[(i, j)] *= dc[i] * dc[j];
        }
    }
    for i in 0..ds.len() {
        for j in 0..ds.len() {
            dec.y[(i, j)] *= ds[i] * ds[j];
        }
    }
}
