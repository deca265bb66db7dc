//! Identifiability-up-to-scaling certificates.
//!
//! A pair `(lambda0, X0)` is certified when two conditions hold:
//!
//! * condition 1: the stacked matrix `[vec(X0)^H; D(A(1,:), X0); ...; D(A(n,:), X0)]`
//!   has full column rank `mN`, so every alternative `X` is a multiple of `X0`;
//! * condition 2: `A X0` has no zero rows and `lambda0` has no zero entries, so
//!   `lambda0` is pinned down once `X0` is known.
//!
//! The joint-sparse certificate repeats the rank test on every union
//! `J0 ∪ J1` of the true support with a candidate support `J1`.
//!
//! A failed test reports [`Verdict::NotCertified`]. That is not a proof of
//! non-identifiability for that particular instance.

use itertools::Itertools;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cxmat::{kronecker, numeric_rank, vector_norm, ComplexMatrix};
use crate::error::{BgpcError, Result};

/// Default cap on the number of support cells a joint-sparse certificate may enumerate.
pub const DEFAULT_SUPPORT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Subspace,
    JointSparse,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Subspace => "Subspace",
            Mode::JointSparse => "JointSparse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    IdentifiableUpToScaling,
    NotCertified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub mode: Mode,
    pub verdict: Verdict,
    pub condition1_rank_full: bool,
    pub condition2_lambda_unique: bool,
    pub stacked_rank: usize,
    pub required_rank: usize,
    pub tolerance_used: f64,
    pub support_cells_checked: Option<u64>,
    /// 1-based candidate support `J1` of the first failing cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failing_support: Option<Vec<usize>>,
}

impl CertificateReport {
    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::IdentifiableUpToScaling
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    /// Absolute rank tolerance; `None` selects the default rule.
    pub tol: Option<f64>,
    pub support_budget: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            tol: None,
            support_budget: DEFAULT_SUPPORT_BUDGET,
        }
    }
}

fn check_snapshots(x0: &ComplexMatrix) -> Result<()> {
    if x0.cols() < 2 {
        return Err(BgpcError::Unsupported(format!(
            "certificates need at least 2 snapshots, got N = {}",
            x0.cols()
        )));
    }
    Ok(())
}

/// The `(N-1) x mN` block `D(a, X0)` for one measurement row `a` (`1 x m`).
///
/// Row `j` of the scalar factor holds `-a X0(:, j+1)` in position 0 and
/// `a X0(:, 0)` in position `j`; the result is that factor Kronecker-multiplied by `a`.
pub fn build_d_block(a_row: &ComplexMatrix, x0: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a_row.rows() != 1 || a_row.cols() != x0.rows() {
        return Err(BgpcError::Dimension(format!(
            "D block needs a 1x{} row, got {:?}",
            x0.rows(),
            a_row.shape()
        )));
    }
    check_snapshots(x0)?;
    let n_snap = x0.cols();
    let ax = a_row.matmul(x0)?;
    let ax = ax.row(0);
    let scalar = ComplexMatrix::from_fn(n_snap - 1, n_snap, |j, p| {
        if p == 0 {
            -ax[j + 1]
        } else if p == j + 1 {
            ax[0]
        } else {
            Complex64::new(0.0, 0.0)
        }
    })?;
    Ok(kronecker(&scalar, a_row))
}

/// All `n` D blocks stacked, `n(N-1) x mN`, without the `vec(X0)^H` row.
pub fn build_d_stack(a: &ComplexMatrix, x0: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.cols() != x0.rows() {
        return Err(BgpcError::Dimension(format!(
            "A has {} columns but X0 has {} rows",
            a.cols(),
            x0.rows()
        )));
    }
    check_snapshots(x0)?;
    let blocks = (0..a.rows())
        .map(|k| build_d_block(&a.row_matrix(k), x0))
        .collect::<Result<Vec<_>>>()?;
    ComplexMatrix::vstack(&blocks)
}

/// The `(1 + n(N-1)) x mN` certificate matrix `[vec(X0)^H; D(A, X0)]`.
pub fn build_stacked(a: &ComplexMatrix, x0: &ComplexMatrix) -> Result<ComplexMatrix> {
    let d = build_d_stack(a, x0)?;
    ComplexMatrix::vstack(&[x0.vec().conj_transpose(), d])
}

/// [`build_stacked`] on `A(:, J)` and `X0(J, :)`; `support` is 0-based.
pub fn build_stacked_restricted(a: &ComplexMatrix, x0: &ComplexMatrix, support: &[usize]) -> Result<ComplexMatrix> {
    if support.is_empty() {
        return Err(BgpcError::Input("restriction index set is empty".into()));
    }
    build_stacked(&a.select_columns(support)?, &x0.select_rows(support)?)
}

/// Condition 2 with magnitude-scaled zero tests: every row of `A X0` and every
/// entry of `lambda0` must exceed `eps * sqrt(m) * max|entry|` of its own array.
pub fn lambda_uniqueness(a: &ComplexMatrix, x0: &ComplexMatrix, lambda0: &[Complex64]) -> Result<bool> {
    let ax = a.matmul(x0)?;
    let m_sqrt = (a.cols() as f64).sqrt();
    let row_tol = f64::EPSILON * m_sqrt * ax.max_abs();
    let rows_ok = (0..ax.rows()).all(|k| vector_norm(ax.row(k)) > row_tol);
    let lam_max = lambda0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let lam_tol = f64::EPSILON * m_sqrt * lam_max;
    let lambda_ok = lambda0.iter().all(|z| z.norm() > lam_tol);
    Ok(rows_ok && lambda_ok)
}

fn check_lambda(a: &ComplexMatrix, lambda0: &[Complex64]) -> Result<()> {
    if lambda0.len() != a.rows() {
        return Err(BgpcError::Dimension(format!(
            "lambda0 has length {}, A has {} rows",
            lambda0.len(),
            a.rows()
        )));
    }
    Ok(())
}

/// Subspace-model certificate.
pub fn certify_subspace(
    a: &ComplexMatrix,
    x0: &ComplexMatrix,
    lambda0: &[Complex64],
    tol: Option<f64>,
) -> Result<CertificateReport> {
    let (n, m) = a.shape();
    if m == 0 || n <= m {
        return Err(BgpcError::Unsupported(format!(
            "subspace certificate needs n > m, got n={n}, m={m}"
        )));
    }
    check_lambda(a, lambda0)?;
    check_snapshots(x0)?;
    let stacked = build_stacked(a, x0)?;
    let rank = numeric_rank(&stacked, tol)?;
    let required_rank = m * x0.cols();
    let condition1 = rank.numeric_rank == required_rank;
    let condition2 = lambda_uniqueness(a, x0, lambda0)?;
    Ok(CertificateReport {
        mode: Mode::Subspace,
        verdict: verdict(condition1, condition2),
        condition1_rank_full: condition1,
        condition2_lambda_unique: condition2,
        stacked_rank: rank.numeric_rank,
        required_rank,
        tolerance_used: rank.tolerance_used,
        support_cells_checked: None,
        failing_support: None,
    })
}

fn verdict(c1: bool, c2: bool) -> Verdict {
    if c1 && c2 {
        Verdict::IdentifiableUpToScaling
    } else {
        Verdict::NotCertified
    }
}

/// `C(m, s)` without overflow for the sizes this crate can enumerate.
pub fn binomial(m: usize, s: usize) -> u128 {
    if s > m {
        return 0;
    }
    let s = s.min(m - s);
    let mut acc: u128 = 1;
    for i in 0..s {
        acc = acc * (m - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// 0-based indices of the rows of `x0` that are not identically zero.
pub fn row_support(x0: &ComplexMatrix) -> Vec<usize> {
    (0..x0.rows())
        .filter(|&i| x0.row(i).iter().any(|z| *z != Complex64::new(0.0, 0.0)))
        .collect()
}

fn sorted_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

/// Joint-sparsity certificate: the restricted rank test must pass on
/// `J0 ∪ J1` for every `s`-subset `J1` of the columns.
///
/// `J0` is read off the nonzero rows of `x0`. Cells are evaluated in parallel;
/// the reported failing cell is always the lexicographically first one.
pub fn certify_joint_sparse(
    a: &ComplexMatrix,
    x0: &ComplexMatrix,
    lambda0: &[Complex64],
    s: usize,
    opts: CertifyOptions,
) -> Result<CertificateReport> {
    let (n, m) = a.shape();
    if s == 0 || n <= 2 * s {
        return Err(BgpcError::Unsupported(format!(
            "joint-sparse certificate needs n > 2s >= 2, got n={n}, s={s}"
        )));
    }
    if s > m {
        return Err(BgpcError::Input(format!("sparsity s = {s} exceeds m = {m}")));
    }
    if x0.rows() != m {
        return Err(BgpcError::Dimension(format!(
            "A has {m} columns but X0 has {} rows",
            x0.rows()
        )));
    }
    check_lambda(a, lambda0)?;
    check_snapshots(x0)?;
    let j0 = row_support(x0);
    if j0.len() > s {
        return Err(BgpcError::Input(format!(
            "X0 has {} nonzero rows, more than s = {s}",
            j0.len()
        )));
    }
    let cells = binomial(m, s);
    if cells > opts.support_budget as u128 {
        return Err(BgpcError::Budget {
            needed: cells,
            cap: opts.support_budget,
        });
    }
    let condition2 = lambda_uniqueness(a, x0, lambda0)?;
    let n_snap = x0.cols();

    let candidates: Vec<Vec<usize>> = (0..m).combinations(s).collect();
    let evaluate = |j1: &Vec<usize>| -> Result<(usize, usize, f64)> {
        let union = sorted_union(&j0, j1);
        let stacked = build_stacked_restricted(a, x0, &union)?;
        let rank = numeric_rank(&stacked, opts.tol)?;
        Ok((rank.numeric_rank, union.len() * n_snap, rank.tolerance_used))
    };

    let first_failure = candidates
        .par_iter()
        .enumerate()
        .map(|(i, j1)| evaluate(j1).map(|r| (i, r)))
        .find_first(|res| match res {
            Ok((_, (rank, req, _))) => rank != req,
            Err(_) => true,
        })
        .transpose()?;

    let (condition1, (stacked_rank, required_rank, tolerance_used), failing, checked) = match first_failure {
        Some((i, stats)) => (
            false,
            stats,
            Some(candidates[i].iter().map(|j| j + 1).collect()),
            i as u64 + 1,
        ),
        None => {
            let last = candidates.last().expect("at least one s-subset");
            (true, evaluate(last)?, None, cells as u64)
        }
    };
    Ok(CertificateReport {
        mode: Mode::JointSparse,
        verdict: verdict(condition1, condition2),
        condition1_rank_full: condition1,
        condition2_lambda_unique: condition2,
        stacked_rank,
        required_rank,
        tolerance_used,
        support_cells_checked: Some(checked),
        failing_support: failing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cxmat::dft_matrix;
    use crate::model::random_instance;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn scalar_d_block() {
        let (x1, x2) = (c(1.5, -0.5), c(0.25, 2.0));
        let a = ComplexMatrix::new(1, 1, vec![c(1.0, 0.0)]).unwrap();
        let x0 = ComplexMatrix::new(1, 2, vec![x1, x2]).unwrap();
        let d = build_d_block(&a, &x0).unwrap();
        assert_eq!(d.as_slice(), &[-x2, x1]);
    }

    #[test]
    fn d_block_annihilates_vec_x0() {
        let inst = random_instance(5, 3, 4, 9, None).unwrap();
        for k in 0..5 {
            let d = build_d_block(&inst.a.row_matrix(k), &inst.x0).unwrap();
            assert_eq!(d.shape(), (3, 12));
            let r = d.matmul(&inst.x0.vec()).unwrap();
            assert!(r.max_abs() < 1e-12);
        }
    }

    #[test]
    fn single_snapshot_is_rejected() {
        let inst = random_instance(8, 4, 1, 1, None).unwrap();
        assert!(matches!(
            build_d_block(&inst.a.row_matrix(0), &inst.x0),
            Err(BgpcError::Unsupported(_))
        ));
        assert!(certify_subspace(&inst.a, &inst.x0, &inst.lambda0, None).is_err());
    }

    #[test]
    fn constructed_row_has_dft_powers() {
        // A = columns {1,2,4,6} of F_8, X0 = first 2 columns of I_4
        let (n, sel) = (8usize, [0usize, 1, 3, 5]);
        let a = dft_matrix(n).unwrap().select_columns(&sel).unwrap();
        let x0 = ComplexMatrix::identity(4).unwrap().select_columns(&[0, 1]).unwrap();
        let alpha = Complex64::from_polar(1.0, -2.0 * PI / n as f64);
        for k in 0..n {
            let arow = a.row_matrix(k);
            let d = build_d_block(&arow, &x0).unwrap();
            // left factor is [-alpha^k, 1], so D = [-alpha^k * a, a]
            for l in 0..4 {
                assert!((d[(0, l)] + alpha.powu(k as u32) * arow[(0, l)]).norm() < 1e-12);
                assert!((d[(0, 4 + l)] - arow[(0, l)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn stacked_shape_and_orthogonality() {
        let inst = random_instance(8, 4, 2, 3, None).unwrap();
        let s = build_stacked(&inst.a, &inst.x0).unwrap();
        assert_eq!(s.shape(), (9, 8));
        let r = s.matmul(&inst.x0.vec()).unwrap();
        let fro2 = inst.x0.frobenius_norm().powi(2);
        assert!((r[(0, 0)] - c(fro2, 0.0)).norm() < 1e-12);
        for i in 1..9 {
            assert!(r[(i, 0)].norm() < 1e-12);
        }
    }

    #[test]
    fn subspace_verdicts() {
        let inst = random_instance(8, 4, 2, 21, None).unwrap();
        let rep = certify_subspace(&inst.a, &inst.x0, &inst.lambda0, None).unwrap();
        assert_eq!(rep.verdict, Verdict::IdentifiableUpToScaling);
        assert_eq!((rep.stacked_rank, rep.required_rank), (8, 8));

        let inst = random_instance(8, 6, 2, 21, None).unwrap();
        let rep = certify_subspace(&inst.a, &inst.x0, &inst.lambda0, None).unwrap();
        assert_eq!(rep.verdict, Verdict::NotCertified);
        assert!(!rep.condition1_rank_full);
        assert!(rep.stacked_rank <= 9);

        let mut inst = random_instance(8, 4, 2, 21, None).unwrap();
        inst.lambda0[3] = c(0.0, 0.0);
        let rep = certify_subspace(&inst.a, &inst.x0, &inst.lambda0, None).unwrap();
        assert!(!rep.condition2_lambda_unique);
        assert!(rep.condition1_rank_full);
        assert_eq!(rep.verdict, Verdict::NotCertified);
    }

    #[test]
    fn zero_row_in_ax_breaks_condition2() {
        let mut inst = random_instance(8, 4, 2, 4, None).unwrap();
        let mut a = inst.a.clone().into_vec();
        for z in &mut a[2 * 4..3 * 4] {
            *z = c(0.0, 0.0);
        }
        inst.a = ComplexMatrix::new(8, 4, a).unwrap();
        assert!(!lambda_uniqueness(&inst.a, &inst.x0, &inst.lambda0).unwrap());
    }

    #[test]
    fn restricted_stacking() {
        let inst = random_instance(8, 4, 3, 8, None).unwrap();
        let full = build_stacked(&inst.a, &inst.x0).unwrap();
        assert_eq!(
            build_stacked_restricted(&inst.a, &inst.x0, &[0, 1, 2, 3]).unwrap(),
            full
        );
        let r = build_stacked_restricted(&inst.a, &inst.x0, &[1, 3]).unwrap();
        assert_eq!(r.shape(), (1 + 8 * 2, 6));
        assert!(build_stacked_restricted(&inst.a, &inst.x0, &[]).is_err());

        let sp = random_instance(10, 6, 2, 8, Some(3)).unwrap();
        let j0 = sp.support.clone().unwrap();
        let rs = build_stacked_restricted(&sp.a, &sp.x0, &j0).unwrap();
        let v = sp.x0.select_rows(&j0).unwrap().vec();
        let prod = rs.matmul(&v).unwrap();
        for i in 1..prod.rows() {
            assert!(prod[(i, 0)].norm() < 1e-12);
        }
    }

    #[test]
    fn joint_sparse_verdicts() {
        let inst = random_instance(16, 8, 2, 5, Some(3)).unwrap();
        let rep = certify_joint_sparse(&inst.a, &inst.x0, &inst.lambda0, 3, CertifyOptions::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::IdentifiableUpToScaling);
        assert_eq!(rep.support_cells_checked, Some(56));
        assert!(rep.failing_support.is_none());

        let one = random_instance(16, 8, 1, 5, Some(3)).unwrap();
        assert!(certify_joint_sparse(&one.a, &one.x0, &one.lambda0, 3, CertifyOptions::default()).is_err());

        let wide = random_instance(8, 8, 2, 5, Some(4)).unwrap();
        assert!(matches!(
            certify_joint_sparse(&wide.a, &wide.x0, &wide.lambda0, 4, CertifyOptions::default()),
            Err(BgpcError::Unsupported(_))
        ));
    }

    #[test]
    fn joint_sparse_budget_is_enforced() {
        let inst = random_instance(16, 8, 2, 5, Some(3)).unwrap();
        let opts = CertifyOptions {
            tol: None,
            support_budget: 10,
        };
        assert!(matches!(
            certify_joint_sparse(&inst.a, &inst.x0, &inst.lambda0, 3, opts),
            Err(BgpcError::Budget { needed: 56, cap: 10 })
        ));
    }

    #[test]
    fn joint_sparse_reports_first_failing_cell() {
        // N=2, s=3, n=9: threshold ceil(8/3) = 3 so unions of size 6 lack rows
        let inst = random_instance(9, 6, 2, 2, Some(3)).unwrap();
        let rep = certify_joint_sparse(&inst.a, &inst.x0, &inst.lambda0, 3, CertifyOptions::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::NotCertified);
        let failing: Vec<usize> = rep.failing_support.clone().unwrap().iter().map(|j| j - 1).collect();
        let j0 = row_support(&inst.x0);
        // every earlier cell passes
        for j1 in (0..6).combinations(3).take_while(|j1| *j1 != failing) {
            let u = sorted_union(&j0, &j1);
            let r = numeric_rank(&build_stacked_restricted(&inst.a, &inst.x0, &u).unwrap(), None).unwrap();
            assert_eq!(r.numeric_rank, u.len() * 2);
        }
        assert!(rep.stacked_rank < rep.required_rank);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(8, 3), 56);
        assert_eq!(binomial(8, 2), 28);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(60, 30), 118264581564861424);
    }

    #[test]
    fn report_json_field_names() {
        let inst = random_instance(8, 4, 2, 21, None).unwrap();
        let rep = certify_subspace(&inst.a, &inst.x0, &inst.lambda0, None).unwrap();
        let v = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["mode"], "Subspace");
        assert_eq!(v["verdict"], "IdentifiableUpToScaling");
        assert!(v["support_cells_checked"].is_null());
        assert!(v.get("failing_support").is_none());
    }
}
