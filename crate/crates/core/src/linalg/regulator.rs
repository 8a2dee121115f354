//! Regulator-equation solver for heterogeneous output consensus: find
//! per-agent `(Pi_i, U_i)` and a common output map `R` with
//! `Pi_i S = A_i Pi_i + B_i U_i + E_i` and `R = C_i Pi_i + F_i`.

use nalgebra::{DMatrix, DVector};

use super::LinalgError;

/// One agent's plant matrices as they enter the regulator equations.
#[derive(Debug, Clone)]
pub struct RegulatorAgent {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

/// Solution of the stacked regulator equations.
#[derive(Debug, Clone)]
pub struct RegulatorSolution {
    pub pi: Vec<DMatrix<f64>>,
    pub u: Vec<DMatrix<f64>>,
    pub r: DMatrix<f64>,
    /// Max Frobenius residual of the defining equations after substitution.
    pub residual: f64,
    /// False when the equations admit a solution family (the common output
    /// map is not pinned by the data); the returned member is minimum-norm.
    pub unique: bool,
    /// Dimension of the solution family (0 when unique).
    pub family_dim: usize,
}

/// Solve the stacked regulator equations for all agents at once.
///
/// With `output_map = Some(R)` the common output map is data and each agent's
/// square system is solved independently (the textbook formulation). With
/// `None`, `R` joins the unknowns; the stacked system is then always rank
/// deficient by `p*q` directions, so the minimum-norm member is returned and
/// `unique` is set to false.
pub fn solve_regulator(
    agents: &[RegulatorAgent],
    s: &DMatrix<f64>,
    output_map: Option<&DMatrix<f64>>,
) -> Result<RegulatorSolution, LinalgError> {
    if agents.is_empty() {
        return Err(LinalgError::InvalidParameter("solve_regulator: no agents"));
    }
    if s.nrows() != s.ncols() {
        return Err(LinalgError::NotSquare {
            rows: s.nrows(),
            cols: s.ncols(),
        });
    }
    let q = s.nrows();
    let p = agents[0].c.nrows();
    let mut magnitude = s.amax();
    for ag in agents {
        let ni = ag.a.nrows();
        let mi = ag.b.ncols();
        if ag.a.ncols() != ni
            || ag.b.nrows() != ni
            || ag.c.ncols() != ni
            || ag.c.nrows() != p
            || ag.e.shape() != (ni, q)
            || ag.f.shape() != (p, q)
        {
            return Err(LinalgError::DimensionMismatch {
                context: "solve_regulator: inconsistent agent matrix shapes",
            });
        }
        let _ = mi;
        for m in [&ag.a, &ag.b, &ag.c, &ag.e, &ag.f] {
            if !m.is_empty() {
                magnitude = magnitude.max(m.amax());
            }
        }
    }
    if let Some(r) = output_map {
        if r.shape() != (p, q) {
            return Err(LinalgError::DimensionMismatch {
                context: "solve_regulator: output map must be p x q",
            });
        }
    }

    let (pi, u, r, family_dim) = match output_map {
        Some(r) => {
            let mut pis = Vec::with_capacity(agents.len());
            let mut us = Vec::with_capacity(agents.len());
            for ag in agents {
                let (pi_i, u_i) = solve_single(ag, s, r)?;
                pis.push(pi_i);
                us.push(u_i);
            }
            (pis, us, r.clone(), 0)
        }
        None => solve_global(agents, s, p, q)?,
    };

    let residual = substitution_residual(agents, s, &pi, &u, &r);
    let tol = 1e-8 * (1.0 + magnitude);
    if residual > tol {
        return Err(LinalgError::RegulatorInconsistent { residual, tol });
    }
    Ok(RegulatorSolution {
        pi,
        u,
        r,
        residual,
        unique: family_dim == 0,
        family_dim,
    })
}

/// `K2 = U_i - K1 Pi_i`, the feedforward gain induced by a regulator solution.
pub fn compute_k2(
    k1: &DMatrix<f64>,
    reg: &RegulatorSolution,
    agent: usize,
) -> Result<DMatrix<f64>, LinalgError> {
    let pi = reg.pi.get(agent).ok_or(LinalgError::InvalidParameter(
        "compute_k2: agent index out of range",
    ))?;
    let u = &reg.u[agent];
    if k1.ncols() != pi.nrows() || k1.nrows() != u.nrows() {
        return Err(LinalgError::DimensionMismatch {
            context: "compute_k2: K1 incompatible with regulator solution",
        });
    }
    Ok(u - k1 * pi)
}

fn solve_single(
    ag: &RegulatorAgent,
    s: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), LinalgError> {
    let q = s.nrows();
    let ni = ag.a.nrows();
    let mi = ag.b.ncols();
    let p = ag.c.nrows();
    let rows = (ni + p) * q;
    let cols = (ni + mi) * q;
    let id_q = DMatrix::<f64>::identity(q, q);
    let id_n = DMatrix::<f64>::identity(ni, ni);

    // Unknowns [vec(Pi); vec(U)] (column-major vec):
    //   (S^T (x) I_n - I_q (x) A) vec(Pi) - (I_q (x) B) vec(U) = vec(E)
    //   (I_q (x) C) vec(Pi)                                    = vec(R - F)
    let mut m = DMatrix::<f64>::zeros(rows, cols);
    let block1 = s.transpose().kronecker(&id_n) - id_q.kronecker(&ag.a);
    m.view_mut((0, 0), (ni * q, ni * q)).copy_from(&block1);
    m.view_mut((0, ni * q), (ni * q, mi * q))
        .copy_from(&(-id_q.kronecker(&ag.b)));
    m.view_mut((ni * q, 0), (p * q, ni * q))
        .copy_from(&id_q.kronecker(&ag.c));

    let mut rhs = DVector::<f64>::zeros(rows);
    rhs.rows_mut(0, ni * q)
        .copy_from(&DVector::from_column_slice(ag.e.as_slice()));
    let rf = r - &ag.f;
    rhs.rows_mut(ni * q, p * q)
        .copy_from(&DVector::from_column_slice(rf.as_slice()));

    let x = lstsq_min_norm(&m, &rhs)?;
    let pi = DMatrix::from_column_slice(ni, q, &x.as_slice()[0..ni * q]);
    let u = DMatrix::from_column_slice(mi, q, &x.as_slice()[ni * q..(ni + mi) * q]);
    Ok((pi, u))
}

type GlobalSolution = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, DMatrix<f64>, usize);

fn solve_global(
    agents: &[RegulatorAgent],
    s: &DMatrix<f64>,
    p: usize,
    q: usize,
) -> Result<GlobalSolution, LinalgError> {
    let id_q = DMatrix::<f64>::identity(q, q);
    let mut offsets = Vec::with_capacity(agents.len());
    let mut off = 0usize;
    for ag in agents {
        offsets.push(off);
        off += (ag.a.nrows() + ag.b.ncols()) * q;
    }
    let r_off = off;
    let ncols = off + p * q;
    let nrows: usize = agents.iter().map(|ag| (ag.a.nrows() + p) * q).sum();

    let mut m = DMatrix::<f64>::zeros(nrows, ncols);
    let mut rhs = DVector::<f64>::zeros(nrows);
    let mut row = 0usize;
    for (k, ag) in agents.iter().enumerate() {
        let ni = ag.a.nrows();
        let mi = ag.b.ncols();
        let o = offsets[k];
        let id_n = DMatrix::<f64>::identity(ni, ni);
        let block1 = s.transpose().kronecker(&id_n) - id_q.kronecker(&ag.a);
        m.view_mut((row, o), (ni * q, ni * q)).copy_from(&block1);
        m.view_mut((row, o + ni * q), (ni * q, mi * q))
            .copy_from(&(-id_q.kronecker(&ag.b)));
        rhs.rows_mut(row, ni * q)
            .copy_from(&DVector::from_column_slice(ag.e.as_slice()));
        row += ni * q;

        m.view_mut((row, o), (p * q, ni * q))
            .copy_from(&id_q.kronecker(&ag.c));
        m.view_mut((row, r_off), (p * q, p * q))
            .copy_from(&(-DMatrix::<f64>::identity(p * q, p * q)));
        let nf = -&ag.f;
        rhs.rows_mut(row, p * q)
            .copy_from(&DVector::from_column_slice(nf.as_slice()));
        row += p * q;
    }

    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = if smax > 0.0 {
        1e-10 * smax
    } else {
        f64::EPSILON
    };
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&sv| sv > cutoff)
        .count();
    let family_dim = ncols - rank;
    let x = svd
        .solve(&rhs, cutoff)
        .map_err(|_| LinalgError::NumericalFailure("regulator least-squares solve failed"))?;

    let mut pis = Vec::with_capacity(agents.len());
    let mut us = Vec::with_capacity(agents.len());
    for (k, ag) in agents.iter().enumerate() {
        let ni = ag.a.nrows();
        let mi = ag.b.ncols();
        let o = offsets[k];
        pis.push(DMatrix::from_column_slice(
            ni,
            q,
            &x.as_slice()[o..o + ni * q],
        ));
        us.push(DMatrix::from_column_slice(
            mi,
            q,
            &x.as_slice()[o + ni * q..o + (ni + mi) * q],
        ));
    }
    let r = DMatrix::from_column_slice(p, q, &x.as_slice()[r_off..r_off + p * q]);
    Ok((pis, us, r, family_dim))
}

fn lstsq_min_norm(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = if smax > 0.0 {
        1e-12 * smax
    } else {
        f64::EPSILON
    };
    svd.solve(rhs, cutoff)
        .map_err(|_| LinalgError::NumericalFailure("least-squares solve failed"))
}

fn substitution_residual(
    agents: &[RegulatorAgent],
    s: &DMatrix<f64>,
    pi: &[DMatrix<f64>],
    u: &[DMatrix<f64>],
    r: &DMatrix<f64>,
) -> f64 {
    let mut worst = 0.0f64;
    for (k, ag) in agents.iter().enumerate() {
        let r1 = (&pi[k] * s - &ag.a * &pi[k] - &ag.b * &u[k] - &ag.e).norm();
        let r2 = (&ag.c * &pi[k] + &ag.f - r).norm();
        worst = worst.max(r1).max(r2);
    }
    worst
}
