//! Null-space recovery of `(lambda, X)` from `(Y, A)`.
//!
//! With `gamma = 1 / lambda` entrywise, `diag(lambda) A X = Y` becomes the
//! homogeneous linear system `A(k,:) X(:,j) - gamma_k Y(k,j) = 0`. The true
//! pair spans a one-dimensional null space exactly when the instance is
//! identifiable up to scaling.

use itertools::Itertools;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{binomial, DEFAULT_SUPPORT_BUDGET};
use crate::cxmat::{default_tolerance, right_singular, ComplexMatrix};
use crate::error::{BgpcError, Result};
use crate::model::align_scale_slices;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecoveryStatus {
    Unique,
    Ambiguous,
    DegenerateGamma,
    /// Least-squares fallback on inconsistent data; no uniqueness claim.
    Approximate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub status: RecoveryStatus,
    pub null_dim: usize,
    #[serde(with = "crate::cxmat::opt_column", skip_serializing_if = "Option::is_none", default)]
    pub gamma: Option<Vec<Complex64>>,
    #[serde(with = "crate::cxmat::opt_column", default)]
    pub lambda: Option<Vec<Complex64>>,
    #[serde(rename = "X", default)]
    pub x: Option<ComplexMatrix>,
    /// 1-based row support of `X` (joint-sparse recovery only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub support: Option<Vec<usize>>,
}

impl RecoveryResult {
    fn ambiguous(null_dim: usize) -> Self {
        Self {
            status: RecoveryStatus::Ambiguous,
            null_dim,
            gamma: None,
            lambda: None,
            x: None,
            support: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RecoverOptions {
    /// Absolute null-space tolerance; `None` selects the default rule.
    pub tol: Option<f64>,
    /// Relative threshold below which a `gamma` entry counts as zero; `None`
    /// uses `max(rows, cols) * eps` of the recovery system.
    pub gamma_tol: Option<f64>,
    /// Fall back to the smallest right singular vector when the system has a
    /// trivial null space.
    pub allow_inconsistent: bool,
    pub support_budget: u64,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        Self {
            tol: None,
            gamma_tol: None,
            allow_inconsistent: false,
            support_budget: DEFAULT_SUPPORT_BUDGET,
        }
    }
}

/// The `nN x (mN + n)` system over `(vec(X), gamma)`.
///
/// Row `j*n + k` holds `A(k,:)` in the `j`-th block of `m` columns and
/// `-Y(k,j)` in column `mN + k`.
pub fn build_recovery_system(y: &ComplexMatrix, a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (n, m) = a.shape();
    if y.rows() != n {
        return Err(BgpcError::Dimension(format!("Y has {} rows but A has {n}", y.rows())));
    }
    let n_snap = y.cols();
    let cols = m * n_snap + n;
    let mut data = vec![Complex64::new(0.0, 0.0); n * n_snap * cols];
    for j in 0..n_snap {
        for k in 0..n {
            let row = &mut data[(j * n + k) * cols..(j * n + k + 1) * cols];
            row[j * m..(j + 1) * m].copy_from_slice(a.row(k));
            row[m * n_snap + k] = -y[(k, j)];
        }
    }
    ComplexMatrix::new(n * n_snap, cols, data)
}

enum Solve {
    Single {
        x: ComplexMatrix,
        gamma: Vec<Complex64>,
        degenerate: bool,
    },
    Multiple(usize),
    Empty,
}

fn solve_system(y: &ComplexMatrix, a: &ComplexMatrix, opts: &RecoverOptions) -> Result<(Solve, Vec<Complex64>)> {
    y.ensure_finite()?;
    a.ensure_finite()?;
    let (n, m) = a.shape();
    let n_snap = y.cols();
    let system = build_recovery_system(y, a)?;
    let rs = right_singular(&system)?;
    let sigma_max = rs.singular_values.first().copied().unwrap_or(0.0);
    let tol = match opts.tol {
        Some(t) if !(t.is_finite() && t >= 0.0) => {
            return Err(BgpcError::Input(format!(
                "tolerance must be a finite nonnegative number, got {t}"
            )))
        }
        Some(t) => t,
        None => default_tolerance(system.rows(), system.cols(), sigma_max),
    };
    let cols = system.cols();
    let rank = rs.singular_values.iter().filter(|&&s| s > tol).count();
    let null_dim = cols - rank;
    let smallest = rs.vectors[cols - 1].clone();
    let solve = match null_dim {
        0 => Solve::Empty,
        1 => {
            // a marginal gap to the next singular value is not trusted
            let next = rs.singular_values[rank - 1];
            if next <= 10.0 * tol {
                Solve::Multiple(1)
            } else {
                let (x, gamma) = split(&smallest, n, m, n_snap)?;
                let g_tol = opts.gamma_tol.unwrap_or(system.rows().max(cols) as f64 * f64::EPSILON);
                let g_max = gamma.iter().map(|g| g.norm()).fold(0.0, f64::max);
                let degenerate = gamma.iter().any(|g| g.norm() <= g_tol * g_max);
                Solve::Single { x, gamma, degenerate }
            }
        }
        d => Solve::Multiple(d),
    };
    Ok((solve, smallest))
}

fn split(v: &[Complex64], n: usize, m: usize, n_snap: usize) -> Result<(ComplexMatrix, Vec<Complex64>)> {
    // v stacks the columns of X, then gamma
    let x = ComplexMatrix::from_fn(m, n_snap, |l, j| v[j * m + l])?;
    Ok((x, v[m * n_snap..m * n_snap + n].to_vec()))
}

fn finish(x: ComplexMatrix, gamma: Vec<Complex64>, status: RecoveryStatus, null_dim: usize) -> RecoveryResult {
    let lambda = gamma.iter().map(|g| g.inv()).collect();
    RecoveryResult {
        status,
        null_dim,
        gamma: Some(gamma),
        lambda: Some(lambda),
        x: Some(x),
        support: None,
    }
}

/// Recovers `(lambda, X)` up to a global scale from `Y = diag(lambda) A X`.
pub fn recover(y: &ComplexMatrix, a: &ComplexMatrix, opts: RecoverOptions) -> Result<RecoveryResult> {
    let (solve, smallest) = solve_system(y, a, &opts)?;
    match solve {
        Solve::Single {
            x,
            gamma,
            degenerate: false,
        } => Ok(finish(x, gamma, RecoveryStatus::Unique, 1)),
        Solve::Single {
            x,
            gamma,
            degenerate: true,
        } => Ok(RecoveryResult {
            status: RecoveryStatus::DegenerateGamma,
            null_dim: 1,
            gamma: Some(gamma),
            lambda: None,
            x: Some(x),
            support: None,
        }),
        Solve::Multiple(d) => Ok(RecoveryResult::ambiguous(d)),
        Solve::Empty if opts.allow_inconsistent => {
            let (x, gamma) = split(&smallest, a.rows(), a.cols(), y.cols())?;
            Ok(finish(x, gamma, RecoveryStatus::Approximate, 0))
        }
        Solve::Empty => Err(BgpcError::Inconsistent(
            "the recovery system has a trivial null space; Y is not of the form diag(lambda) A X".into(),
        )),
    }
}

/// Two embedded solutions describe the same scaled pair.
fn same_class(x1: &ComplexMatrix, l1: &[Complex64], x2: &ComplexMatrix, l2: &[Complex64]) -> bool {
    const TOL: f64 = 1e-6;
    let ax = align_scale_slices(x1.as_slice(), x2.as_slice());
    let al = align_scale_slices(l1, l2);
    matches!((ax, al), (Ok(ax), Ok(al)) if ax.relative_error <= TOL && al.relative_error <= TOL && !ax.degenerate && !al.degenerate)
}

/// Joint-sparse recovery by enumerating every `s`-subset of columns.
///
/// Succeeds only if every support that yields a one-dimensional null space
/// with nondegenerate `gamma` describes the same scaled pair; the reported
/// support is the lexicographically first of them.
pub fn recover_joint_sparse(
    y: &ComplexMatrix,
    a: &ComplexMatrix,
    s: usize,
    opts: RecoverOptions,
) -> Result<RecoveryResult> {
    let (n, m) = a.shape();
    if s == 0 || s > m {
        return Err(BgpcError::Input(format!("sparsity s = {s} must lie in 1..={m}")));
    }
    if n <= 2 * s {
        return Err(BgpcError::Unsupported(format!(
            "joint-sparse recovery needs n > 2s, got n={n}, s={s}"
        )));
    }
    let cells = binomial(m, s);
    if cells > opts.support_budget as u128 {
        return Err(BgpcError::Budget {
            needed: cells,
            cap: opts.support_budget,
        });
    }
    let candidates: Vec<Vec<usize>> = (0..m).combinations(s).collect();
    let outcomes = candidates
        .par_iter()
        .map(|j| solve_system(y, &a.select_columns(j)?, &opts).map(|(sol, _)| sol))
        .collect::<Result<Vec<_>>>()?;

    let mut passing: Vec<(usize, ComplexMatrix, Vec<Complex64>, Vec<Complex64>)> = Vec::new();
    let mut max_null = 0;
    let mut any_multiple = false;
    let mut any_degenerate = false;
    for (i, sol) in outcomes.into_iter().enumerate() {
        match sol {
            Solve::Single {
                x,
                gamma,
                degenerate: false,
            } => {
                max_null = max_null.max(1);
                let embedded = embed_rows(&x, &candidates[i], m)?;
                let lambda = gamma.iter().map(|g| g.inv()).collect();
                passing.push((i, embedded, gamma, lambda));
            }
            Solve::Single { degenerate: true, .. } => {
                max_null = max_null.max(1);
                any_degenerate = true;
            }
            Solve::Multiple(d) => {
                max_null = max_null.max(d);
                any_multiple = true;
            }
            Solve::Empty => {}
        }
    }
    if any_multiple {
        return Ok(RecoveryResult::ambiguous(max_null));
    }
    let Some((first, x0, g0, l0)) = passing.first().cloned() else {
        if any_degenerate {
            return Ok(RecoveryResult {
                status: RecoveryStatus::DegenerateGamma,
                null_dim: 1,
                gamma: None,
                lambda: None,
                x: None,
                support: None,
            });
        }
        return Err(BgpcError::Inconsistent(format!("no {s}-subset of columns explains Y")));
    };
    if !passing.iter().skip(1).all(|(_, x, _, l)| same_class(x, l, &x0, &l0)) {
        return Ok(RecoveryResult::ambiguous(passing.len()));
    }
    let mut res = finish(x0, g0, RecoveryStatus::Unique, 1);
    res.support = Some(candidates[first].iter().map(|j| j + 1).collect());
    Ok(res)
}

fn embed_rows(x: &ComplexMatrix, rows: &[usize], m: usize) -> Result<ComplexMatrix> {
    let mut data = vec![Complex64::new(0.0, 0.0); m * x.cols()];
    for (r, &dst) in rows.iter().enumerate() {
        data[dst * x.cols()..(dst + 1) * x.cols()].copy_from_slice(x.row(r));
    }
    ComplexMatrix::new(m, x.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{align_scale, random_instance};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn one_by_one_system() {
        let (a, y) = (c(2.0, 1.0), c(-0.5, 3.0));
        let l = build_recovery_system(
            &ComplexMatrix::new(1, 1, vec![y]).unwrap(),
            &ComplexMatrix::new(1, 1, vec![a]).unwrap(),
        )
        .unwrap();
        assert_eq!(l.as_slice(), &[a, -y]);
    }

    #[test]
    fn true_solution_is_in_the_null_space() {
        let inst = random_instance(8, 4, 2, 13, None).unwrap();
        let y = inst.forward().unwrap();
        let l = build_recovery_system(&y, &inst.a).unwrap();
        assert_eq!(l.shape(), (16, 16));
        let mut v = inst.x0.vec().into_vec();
        v.extend(inst.lambda0.iter().map(|z| z.inv()));
        let r = l.matmul(&ComplexMatrix::column_vector(v).unwrap()).unwrap();
        assert!(r.max_abs() < 1e-9);
    }

    #[test]
    fn unique_recovery() {
        let inst = random_instance(8, 4, 2, 17, None).unwrap();
        let y = inst.forward().unwrap();
        let res = recover(&y, &inst.a, RecoverOptions::default()).unwrap();
        assert_eq!(res.status, RecoveryStatus::Unique);
        let ax = align_scale(res.x.as_ref().unwrap(), &inst.x0).unwrap();
        let al = align_scale_slices(res.lambda.as_ref().unwrap(), &inst.lambda0).unwrap();
        assert!(ax.relative_error <= 1e-8);
        assert!(al.relative_error <= 1e-8);
        assert!((ax.sigma * al.sigma - c(1.0, 0.0)).norm() < 1e-6);
        for (l, g) in res.lambda.unwrap().iter().zip(res.gamma.unwrap()) {
            assert!((l * g - c(1.0, 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn below_threshold_is_ambiguous() {
        let inst = random_instance(8, 6, 2, 17, None).unwrap();
        let y = inst.forward().unwrap();
        let res = recover(&y, &inst.a, RecoverOptions::default()).unwrap();
        assert_eq!(res.status, RecoveryStatus::Ambiguous);
        assert!(res.null_dim >= 4);
    }

    #[test]
    fn zero_gain_never_reports_unique() {
        let mut inst = random_instance(8, 4, 2, 19, None).unwrap();
        inst.lambda0[2] = c(0.0, 0.0);
        let y = inst.forward().unwrap();
        let res = recover(&y, &inst.a, RecoverOptions::default()).unwrap();
        assert!(matches!(
            res.status,
            RecoveryStatus::Ambiguous | RecoveryStatus::DegenerateGamma
        ));
    }

    #[test]
    fn inconsistent_measurements() {
        let inst = random_instance(8, 2, 3, 23, None).unwrap();
        // Y generated from a different A: generically no exact solution
        let y = random_instance(8, 2, 3, 24, None).unwrap().forward().unwrap();
        assert!(matches!(
            recover(&y, &inst.a, RecoverOptions::default()),
            Err(BgpcError::Inconsistent(_))
        ));
        let opts = RecoverOptions {
            allow_inconsistent: true,
            ..Default::default()
        };
        assert_eq!(recover(&y, &inst.a, opts).unwrap().status, RecoveryStatus::Approximate);
    }

    #[test]
    fn planted_joint_sparse_recovery() {
        let inst = random_instance(16, 8, 2, 29, Some(3)).unwrap();
        let y = inst.forward().unwrap();
        let res = recover_joint_sparse(&y, &inst.a, 3, RecoverOptions::default()).unwrap();
        assert_eq!(res.status, RecoveryStatus::Unique);
        let want: Vec<usize> = inst.support.clone().unwrap().iter().map(|j| j + 1).collect();
        assert_eq!(res.support, Some(want));
        let ax = align_scale(res.x.as_ref().unwrap(), &inst.x0).unwrap();
        let al = align_scale_slices(res.lambda.as_ref().unwrap(), &inst.lambda0).unwrap();
        assert!(ax.relative_error <= 1e-8 && al.relative_error <= 1e-8);
    }

    #[test]
    fn full_sparsity_matches_plain_recovery() {
        let inst = random_instance(12, 4, 2, 31, None).unwrap();
        let y = inst.forward().unwrap();
        let plain = recover(&y, &inst.a, RecoverOptions::default()).unwrap();
        let sparse = recover_joint_sparse(&y, &inst.a, 4, RecoverOptions::default()).unwrap();
        assert_eq!(sparse.status, plain.status);
        assert_eq!(sparse.x, plain.x);
        assert_eq!(sparse.lambda, plain.lambda);
        assert_eq!(sparse.support, Some(vec![1, 2, 3, 4]));
    }

    #[test]
    fn joint_sparse_below_threshold_is_ambiguous() {
        // one snapshot: n equations against s + n unknowns in every cell
        let inst = random_instance(16, 8, 1, 37, Some(3)).unwrap();
        let y = inst.forward().unwrap();
        let res = recover_joint_sparse(&y, &inst.a, 3, RecoverOptions::default()).unwrap();
        assert_eq!(res.status, RecoveryStatus::Ambiguous);
        assert!(res.null_dim >= 3);
    }

    #[test]
    fn joint_sparse_budget() {
        let inst = random_instance(16, 8, 2, 29, Some(3)).unwrap();
        let y = inst.forward().unwrap();
        let opts = RecoverOptions {
            support_budget: 5,
            ..Default::default()
        };
        assert!(matches!(
            recover_joint_sparse(&y, &inst.a, 3, opts),
            Err(BgpcError::Budget { .. })
        ));
    }
}
