//! Dense matrix exponential via scaling-and-squaring with a [13/13] Padé approximant.

use nalgebra::DMatrix;

use super::LinalgError;

/// Padé-13 numerator coefficients (denominator uses the same with alternating signs).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest 1-norm for which the [13/13] approximant is accurate without scaling.
const THETA13: f64 = 5.371920351148152;

/// Compute `exp(A * t)` for a square matrix `A`.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>, LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if !t.is_finite() || a.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFiniteInput);
    }
    Ok(expm(&(a * t)))
}

/// `exp(M)` for a square matrix, Padé(13) with scaling and squaring.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let norm1 = one_norm(m);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = m / 2f64.powi(s);

    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let b = &PADE13;
    let w1 = b[13] * &a6 + b[11] * &a4 + b[9] * &a2;
    let w2 = b[7] * &a6 + b[5] * &a4 + b[3] * &a2 + b[1] * &id;
    let u = &a * (&a6 * w1 + w2);
    let z1 = b[12] * &a6 + b[10] * &a4 + b[8] * &a2;
    let v = &a6 * z1 + b[6] * &a6 + b[4] * &a4 + b[2] * &a2 + b[0] * &id;

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .expect("Pade denominator is nonsingular for scaled input");

    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
