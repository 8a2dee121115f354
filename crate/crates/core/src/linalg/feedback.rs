//! Stabilizing state feedback: pole placement for single-input controllable
//! pairs, Riccati-based synthesis otherwise, plus validation of user-supplied
//! gains against a stability margin.

use nalgebra::DMatrix;

use super::decomp::spectral_norm;
use super::schur::ordered_real_schur;
use super::LinalgError;

/// Largest real part over the spectrum of `A + B K`.
pub fn closed_loop_abscissa(a: &DMatrix<f64>, b: &DMatrix<f64>, k: &DMatrix<f64>) -> f64 {
    let acl = a + b * k;
    acl.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Check that `K` places every eigenvalue of `A + B K` at or left of `-margin`.
pub fn validate_feedback(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    margin: f64,
) -> Result<(), LinalgError> {
    let alpha = closed_loop_abscissa(a, b, k);
    if alpha <= -margin + 1e-9 {
        Ok(())
    } else {
        Err(LinalgError::SynthesisFailed {
            abscissa: alpha,
            margin,
        })
    }
}

/// Synthesize `K` with `max Re eig(A + B K) <= -margin`.
///
/// Returns zero feedback when `A` already meets the margin. Single-input
/// controllable pairs get Ackermann pole placement at `-margin * (1..=n)`;
/// everything else goes through a shifted algebraic Riccati equation with
/// identity weights, which covers stabilizable-but-uncontrollable pairs.
pub fn stabilizing_feedback(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    margin: f64,
) -> Result<DMatrix<f64>, LinalgError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if b.nrows() != n {
        return Err(LinalgError::DimensionMismatch {
            context: "stabilizing_feedback: B must have as many rows as A",
        });
    }
    if !(margin > 0.0) {
        return Err(LinalgError::InvalidParameter(
            "stabilizing_feedback: margin must be positive",
        ));
    }
    let m = b.ncols();

    let open_loop = a
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if open_loop <= -margin {
        return Ok(DMatrix::zeros(m, n));
    }

    let k = if m == 1 && is_controllable(a, b) {
        ackermann(a, b, margin)?
    } else {
        riccati_feedback(a, b, margin)?
    };
    validate_feedback(a, b, &k, margin)?;
    Ok(k)
}

fn is_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let mut ctrb = DMatrix::zeros(n, n * b.ncols());
    let mut pow = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * b.ncols()), (n, b.ncols()))
            .copy_from(&pow);
        pow = a * pow;
    }
    let sv = ctrb.svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    smax > 0.0 && sv.iter().filter(|&&s| s > 1e-10 * smax).count() == n
}

/// Ackermann's formula placing the closed-loop poles at `-margin * (1..=n)`.
fn ackermann(a: &DMatrix<f64>, b: &DMatrix<f64>, margin: f64) -> Result<DMatrix<f64>, LinalgError> {
    let n = a.nrows();
    // Coefficients of prod_k (s + margin k), lowest order first.
    let mut coeffs = vec![1.0f64];
    for k in 1..=n {
        let root = margin * k as f64;
        let mut next = vec![0.0; coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c * root;
            next[i + 1] += c;
        }
        coeffs = next;
    }
    // p(A) by Horner from the highest coefficient down.
    let mut p = DMatrix::<f64>::identity(n, n) * coeffs[n];
    for i in (0..n).rev() {
        p = &p * a + DMatrix::identity(n, n) * coeffs[i];
    }
    let mut ctrb = DMatrix::zeros(n, n);
    let mut pow = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k), (n, 1)).copy_from(&pow);
        pow = a * pow;
    }
    // last row of ctrb^{-1}: solve ctrb^T y = e_n.
    let mut en = nalgebra::DVector::zeros(n);
    en[n - 1] = 1.0;
    let y = ctrb
        .transpose()
        .lu()
        .solve(&en)
        .ok_or(LinalgError::NumericalFailure(
            "singular controllability matrix",
        ))?;
    let k_row = -(p.transpose() * y);
    Ok(DMatrix::from_row_slice(1, n, k_row.as_slice()))
}

/// Shifted-Riccati feedback: solve `(A + mI)^T P + P (A + mI) - P B B^T P + I = 0`
/// through the stable invariant subspace of the Hamiltonian, then `K = -B^T P`.
fn riccati_feedback(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    margin: f64,
) -> Result<DMatrix<f64>, LinalgError> {
    let n = a.nrows();
    let ash = a + DMatrix::identity(n, n) * margin;
    let bbt = b * b.transpose();

    let mut ham = DMatrix::<f64>::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(&ash);
    ham.view_mut((0, n), (n, n)).copy_from(&(-&bbt));
    ham.view_mut((n, 0), (n, n))
        .copy_from(&(-DMatrix::<f64>::identity(n, n)));
    ham.view_mut((n, n), (n, n)).copy_from(&(-ash.transpose()));

    let ordered = ordered_real_schur(&ham, |l| l.re < 0.0)?;
    if ordered.selected_dim != n {
        return Err(LinalgError::Unstabilizable);
    }
    let u1 = ordered.q.view((0, 0), (n, n)).into_owned();
    let u2 = ordered.q.view((n, 0), (n, n)).into_owned();
    // P = U2 U1^{-1}, via U1^T P^T = U2^T.
    let pt = u1
        .transpose()
        .lu()
        .solve(&u2.transpose())
        .ok_or(LinalgError::Unstabilizable)?;
    let p = 0.5 * (&pt.transpose() + &pt);
    let resid =
        (ash.transpose() * &p + &p * &ash - &p * &bbt * &p + DMatrix::<f64>::identity(n, n)).norm();
    if resid > 1e-6 * (1.0 + spectral_norm(&p).powi(2)) {
        return Err(LinalgError::NumericalFailure("Riccati residual too large"));
    }
    Ok(-(b.transpose() * p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn user_supplied_gain_validates() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let k = DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]);
        validate_feedback(&a, &b, &k, 0.1).unwrap();
        assert!(closed_loop_abscissa(&a, &b, &k) < 0.0);
    }

    #[test]
    fn already_stable_returns_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 0.3, 0.0, -1.7]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 5.0]);
        let k = stabilizing_feedback(&a, &b, 1.0).unwrap();
        assert_eq!(k, DMatrix::zeros(1, 2));
    }

    #[test]
    fn double_integrator_pole_placement() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let k = stabilizing_feedback(&a, &b, 0.5).unwrap();
        assert!(closed_loop_abscissa(&a, &b, &k) <= -0.5 + 1e-9);
        // Ackermann places exactly at -0.5 and -1.0.
        let eigs = (a + &b * &k).complex_eigenvalues();
        let mut re: Vec<f64> = eigs.iter().map(|l| l.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + 1.0).abs() < 1e-8 && (re[1] + 0.5).abs() < 1e-8);
    }

    #[test]
    fn multi_input_riccati_route() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.2]);
        let b = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let k = stabilizing_feedback(&a, &b, 0.3).unwrap();
        assert!(closed_loop_abscissa(&a, &b, &k) <= -0.3 + 1e-9);
    }

    #[test]
    fn stabilizable_but_not_controllable() {
        // Uncontrollable mode at -5 is already far left of the margin.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -5.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let k = stabilizing_feedback(&a, &b, 0.5).unwrap();
        assert!(closed_loop_abscissa(&a, &b, &k) <= -0.5 + 1e-9);
    }

    #[test]
    fn unstabilizable_pair_rejected() {
        // Unstable mode decoupled from the input.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(stabilizing_feedback(&a, &b, 0.5).is_err());
    }
}
