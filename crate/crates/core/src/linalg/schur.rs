//! Ordered real Schur decomposition: block scanning, splitting of real-eigenvalue
//! 2x2 blocks, and orthogonal swapping of adjacent diagonal blocks so that a
//! selected eigenvalue cluster leads the quasi-triangular factor.

use nalgebra::{Complex, DMatrix, DVector};

use super::LinalgError;

/// Real Schur form `A = Q T Q^T` with the diagonal blocks of `T` reordered so
/// that every block whose eigenvalues satisfy `select` comes first.
pub struct OrderedSchur {
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
    /// Sizes (1 or 2) of the diagonal blocks, in order.
    pub block_sizes: Vec<usize>,
    /// Number of leading rows/columns covered by selected blocks.
    pub selected_dim: usize,
}

/// Eigenvalues of a 1x1 or 2x2 diagonal block.
pub fn block_eigenvalues(t: &DMatrix<f64>, start: usize, size: usize) -> Vec<Complex<f64>> {
    if size == 1 {
        vec![Complex::new(t[(start, start)], 0.0)]
    } else {
        let a = t[(start, start)];
        let b = t[(start, start + 1)];
        let c = t[(start + 1, start)];
        let d = t[(start + 1, start + 1)];
        let mean = 0.5 * (a + d);
        let disc = 0.25 * (a - d) * (a - d) + b * c;
        if disc >= 0.0 {
            let r = disc.sqrt();
            vec![Complex::new(mean + r, 0.0), Complex::new(mean - r, 0.0)]
        } else {
            let w = (-disc).sqrt();
            vec![Complex::new(mean, w), Complex::new(mean, -w)]
        }
    }
}

pub fn ordered_real_schur(
    a: &DMatrix<f64>,
    select: impl Fn(Complex<f64>) -> bool,
) -> Result<OrderedSchur, LinalgError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if n == 0 {
        return Ok(OrderedSchur {
            q: DMatrix::zeros(0, 0),
            t: DMatrix::zeros(0, 0),
            block_sizes: vec![],
            selected_dim: 0,
        });
    }
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, 100_000)
        .ok_or(LinalgError::SchurFailed)?;
    let (mut q, mut t) = schur.unpack();

    let mut sizes = scan_blocks(&t);
    split_real_pair_blocks(&mut q, &mut t, &mut sizes);
    clean_lower_triangle(&mut t, &sizes);

    // Bubble selected blocks ahead of unselected ones, preserving relative order.
    loop {
        let starts = block_starts(&sizes);
        let flags: Vec<bool> = sizes
            .iter()
            .zip(&starts)
            .map(|(&sz, &st)| block_eigenvalues(&t, st, sz).iter().all(|&l| select(l)))
            .collect();
        let mut swapped = false;
        for k in 0..sizes.len().saturating_sub(1) {
            if !flags[k] && flags[k + 1] {
                swap_adjacent_blocks(&mut q, &mut t, starts[k], sizes[k], sizes[k + 1])?;
                sizes.swap(k, k + 1);
                swapped = true;
                break;
            }
        }
        if !swapped {
            break;
        }
    }

    let starts = block_starts(&sizes);
    let mut selected_dim = 0;
    for (&sz, &st) in sizes.iter().zip(&starts) {
        if block_eigenvalues(&t, st, sz).iter().all(|&l| select(l)) {
            selected_dim += sz;
        } else {
            break;
        }
    }
    Ok(OrderedSchur {
        q,
        t,
        block_sizes: sizes,
        selected_dim,
    })
}

fn block_starts(sizes: &[usize]) -> Vec<usize> {
    let mut starts = Vec::with_capacity(sizes.len());
    let mut s = 0;
    for &sz in sizes {
        starts.push(s);
        s += sz;
    }
    starts
}

/// Walk the subdiagonal and partition into 1x1 and 2x2 blocks. An entry counts
/// as coupling only if it is large relative to its neighbouring diagonal.
fn scan_blocks(t: &DMatrix<f64>) -> Vec<usize> {
    let n = t.nrows();
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n {
            let sub = t[(i + 1, i)].abs();
            let local = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
            if sub > f64::EPSILON * (local + sub) * 16.0 {
                sizes.push(2);
                i += 2;
                continue;
            }
        }
        sizes.push(1);
        i += 1;
    }
    sizes
}

/// Rotate any 2x2 block with real eigenvalues into two 1x1 blocks.
fn split_real_pair_blocks(q: &mut DMatrix<f64>, t: &mut DMatrix<f64>, sizes: &mut Vec<usize>) {
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &sz in sizes.iter() {
        if sz == 2 {
            let a = t[(start, start)];
            let b = t[(start, start + 1)];
            let c = t[(start + 1, start)];
            let d = t[(start + 1, start + 1)];
            let disc = 0.25 * (a - d) * (a - d) + b * c;
            if disc >= 0.0 {
                // Eigenvector for the first eigenvalue gives the rotation.
                let l1 = 0.5 * (a + d) + disc.sqrt();
                let (v0, v1) = if b.abs() >= c.abs() {
                    (b, l1 - a)
                } else {
                    (l1 - d, c)
                };
                let nrm = (v0 * v0 + v1 * v1).sqrt();
                let (cs, sn) = if nrm > 0.0 {
                    (v0 / nrm, v1 / nrm)
                } else {
                    (1.0, 0.0)
                };
                let g = DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]);
                apply_block_rotation(q, t, start, &g);
                t[(start + 1, start)] = 0.0;
                out.push(1);
                out.push(1);
                start += 2;
                continue;
            }
        }
        out.push(sz);
        start += sz;
    }
    *sizes = out;
}

fn apply_block_rotation(
    q: &mut DMatrix<f64>,
    t: &mut DMatrix<f64>,
    start: usize,
    g: &DMatrix<f64>,
) {
    let b = g.nrows();
    let gt = g.transpose();
    let rows = t.rows(start, b).into_owned();
    t.rows_mut(start, b).copy_from(&(&gt * rows));
    let cols = t.columns(start, b).into_owned();
    t.columns_mut(start, b).copy_from(&(cols * g));
    let qc = q.columns(start, b).into_owned();
    q.columns_mut(start, b).copy_from(&(qc * g));
}

/// Swap adjacent diagonal blocks of sizes `b1` (at `i`) and `b2` (at `i + b1`).
///
/// Solves the small Sylvester equation `T11 Z - Z T22 = -T12` and orthogonalises
/// `[Z; I]`, the basis of the `T22`-invariant subspace, to build the rotation.
fn swap_adjacent_blocks(
    q: &mut DMatrix<f64>,
    t: &mut DMatrix<f64>,
    i: usize,
    b1: usize,
    b2: usize,
) -> Result<(), LinalgError> {
    let b = b1 + b2;
    let t11 = t.view((i, i), (b1, b1)).into_owned();
    let t22 = t.view((i + b1, i + b1), (b2, b2)).into_owned();
    let t12 = t.view((i, i + b1), (b1, b2)).into_owned();

    let z = solve_sylvester(&t11, &t22, &(-&t12))?;

    // Columns of [Z; I] span the invariant subspace of the trailing block.
    let mut w = DMatrix::<f64>::zeros(b, b2);
    w.view_mut((0, 0), (b1, b2)).copy_from(&z);
    w.view_mut((b1, 0), (b2, b2))
        .copy_from(&DMatrix::identity(b2, b2));
    let u = orthonormal_completion(&w)?;

    apply_block_rotation(q, t, i, &u);

    // The trailing block of the rotated window is exactly zero in theory;
    // drop the numerical residue.
    for r in 0..b1 {
        for c in 0..b2 {
            t[(i + b2 + r, i + c)] = 0.0;
        }
    }
    Ok(())
}

/// Solve `A X - X B = C` by vectorisation; intended for tiny operands.
pub fn solve_sylvester(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LinalgError> {
    let (p, r) = (a.nrows(), b.nrows());
    let id_p = DMatrix::<f64>::identity(p, p);
    let id_r = DMatrix::<f64>::identity(r, r);
    // vec(AX) = (I_r ⊗ A) vec(X); vec(XB) = (B^T ⊗ I_p) vec(X), column-major vec.
    let m = id_r.kronecker(a) - b.transpose().kronecker(&id_p);
    let rhs = DVector::from_column_slice(c.as_slice());
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or(LinalgError::NumericalFailure("singular Sylvester operator"))?;
    Ok(DMatrix::from_column_slice(p, r, x.as_slice()))
}

/// Extend the columns of `w` to a full orthonormal basis (modified Gram-Schmidt).
fn orthonormal_completion(w: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let (m, k) = (w.nrows(), w.ncols());
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m);
    let push = |v: DVector<f64>, basis: &mut Vec<DVector<f64>>, required: bool| {
        let mut v = v;
        for _ in 0..2 {
            for b in basis.iter() {
                let d = b.dot(&v);
                v -= b * d;
            }
        }
        let nrm = v.norm();
        if nrm > 1e-12 {
            basis.push(v / nrm);
            Ok(true)
        } else if required {
            Err(LinalgError::NumericalFailure(
                "rank-deficient basis in block swap",
            ))
        } else {
            Ok(false)
        }
    };
    for j in 0..k {
        push(w.column(j).into_owned(), &mut basis, true)?;
    }
    for j in 0..m {
        if basis.len() == m {
            break;
        }
        let mut e = DVector::zeros(m);
        e[j] = 1.0;
        push(e, &mut basis, false)?;
    }
    if basis.len() != m {
        return Err(LinalgError::NumericalFailure(
            "could not complete orthonormal basis",
        ));
    }
    Ok(DMatrix::from_columns(&basis))
}

fn clean_lower_triangle(t: &mut DMatrix<f64>, sizes: &[usize]) {
    let n = t.nrows();
    let starts = block_starts(sizes);
    for (&st, &sz) in starts.iter().zip(sizes) {
        for r in st + sz..n {
            for c in st..st + sz {
                if r >= st + sz {
                    t[(r, c)] = 0.0;
                }
            }
        }
    }
}
