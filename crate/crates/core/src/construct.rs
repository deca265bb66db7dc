//! Explicit instances attaining the full-rank certificate.
//!
//! `X0` is the first `N` columns of the identity and `A` is a set of `m`
//! columns of the unnormalized DFT matrix `F_n` that always contains columns
//! `1..=N`, never contains `N+1` or `n`, and has no other run of `N`
//! circularly consecutive columns. For such a choice `D(A, X0)` has rank
//! exactly `mN - 1` and its left null space has dimension `nN - mN - n + 1`.
//!
//! Indices in [`ConstructedInstance`] are 1-based column numbers of `F_n`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::certify::{build_d_stack, build_stacked};
use crate::cxmat::{dft_matrix, null_space_with_rank, numeric_rank, ComplexMatrix};
use crate::error::{BgpcError, Result};
use crate::model::BgpcInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConstructedRepr", into = "ConstructedRepr")]
pub struct ConstructedInstance {
    pub n: usize,
    pub m: usize,
    pub snapshots: usize,
    /// Columns of `F_n` used by `A` (1-based, sorted).
    pub selected_cols: Vec<usize>,
    /// The `n - m` remaining columns (1-based, sorted).
    pub complement_cols: Vec<usize>,
    pub a: ComplexMatrix,
    pub x0: ComplexMatrix,
    pub expected_left_null_dim: usize,
}

impl ConstructedInstance {
    /// The construction as an ordinary instance with unit gains.
    pub fn to_instance(&self) -> BgpcInstance {
        BgpcInstance::new(
            vec![Complex64::new(1.0, 0.0); self.n],
            self.a.clone(),
            self.x0.clone(),
            None,
        )
        .expect("constructed shapes are consistent")
    }
}

/// `(n - m) N >= n - 1`, in exact integer arithmetic.
pub fn is_feasible(n: usize, m: usize, snapshots: usize) -> bool {
    n > m && (n - m) * snapshots >= n - 1
}

/// Most extra columns that can still be selected from `remaining` scan
/// positions when the current run of selected columns has length `run`.
fn max_reachable(remaining: usize, mut run: usize, snapshots: usize) -> usize {
    let mut count = 0;
    for _ in 0..remaining {
        if run + 1 < snapshots {
            run += 1;
            count += 1;
        } else {
            run = 0;
        }
    }
    count
}

/// Greedy column selection with lookahead (1-based indices).
fn select_columns(n: usize, m: usize, snapshots: usize) -> Result<Vec<usize>> {
    let extras = m - snapshots;
    let mut selected: Vec<usize> = (1..=snapshots).collect();
    let mut taken = 0;
    let mut run = 0;
    // scan N+2 ..= n-1; N+1 and n stay unselected
    let lo = snapshots + 2;
    let hi = n.saturating_sub(1);
    for idx in lo..=hi {
        let remaining_after = hi - idx;
        let can_take = taken < extras
            && run + 1 < snapshots
            && taken + 1 + max_reachable(remaining_after, run + 1, snapshots) >= extras;
        if can_take {
            selected.push(idx);
            taken += 1;
            run += 1;
        } else {
            run = 0;
        }
    }
    if taken != extras {
        return Err(BgpcError::Infeasible(format!(
            "could only place {taken} of {extras} extra columns for n={n}, m={m}, N={snapshots}"
        )));
    }
    Ok(selected)
}

/// True when every circular window of `snapshots` consecutive columns other
/// than `1..=snapshots` contains an unselected column.
pub fn window_rule_holds(n: usize, snapshots: usize, selected: &[usize]) -> bool {
    let mut mask = vec![false; n + 1];
    for &j in selected {
        mask[j] = true;
    }
    (1..=n).all(|start| {
        if start == 1 {
            return true;
        }
        (0..snapshots).any(|o| !mask[(start - 1 + o) % n + 1])
    })
}

/// Builds the explicit construction for `(n, m, N)`.
pub fn construct_claim1(n: usize, m: usize, snapshots: usize) -> Result<ConstructedInstance> {
    if snapshots < 2 || m < snapshots || n <= m {
        return Err(BgpcError::Input(format!(
            "construction needs n > m >= N >= 2, got n={n}, m={m}, N={snapshots}"
        )));
    }
    if !is_feasible(n, m, snapshots) {
        return Err(BgpcError::Infeasible(format!(
            "(n - m) N = {} < n - 1 = {}",
            (n - m) * snapshots,
            n - 1
        )));
    }
    let selected_cols = select_columns(n, m, snapshots)?;
    let complement_cols: Vec<usize> = (1..=n).filter(|j| selected_cols.binary_search(j).is_err()).collect();
    let zero_based: Vec<usize> = selected_cols.iter().map(|j| j - 1).collect();
    let a = dft_matrix(n)?.select_columns(&zero_based)?;
    let first: Vec<usize> = (0..snapshots).collect();
    let x0 = ComplexMatrix::identity(m)?.select_columns(&first)?;
    Ok(ConstructedInstance {
        n,
        m,
        snapshots,
        selected_cols,
        complement_cols,
        a,
        x0,
        expected_left_null_dim: (n - m) * snapshots + 1 - n,
    })
}

/// Union-support variant for the joint-sparse model.
///
/// `j0` and `j1` are 1-based supports of size `s` in `1..=m`. The result lives
/// on the union `U = J0 ∪ J1` (`ℓ = |U|`): its `A` is `n x ℓ` and its `X0` is
/// `ℓ x N`, with `X0`'s nonzero rows placed at positions of `J0` inside `U`.
/// It is the base construction at size `(n, ℓ, N)` with the rows of `X0` and
/// the columns of `A` relabeled by the same permutation.
pub fn construct_claim2(
    n: usize,
    m: usize,
    s: usize,
    snapshots: usize,
    j0: &[usize],
    j1: &[usize],
) -> Result<ConstructedInstance> {
    let check = |j: &[usize], name: &str| -> Result<()> {
        if j.len() != s || j.iter().any(|&x| x == 0 || x > m) || j.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BgpcError::Input(format!(
                "{name} must be {s} strictly increasing indices within 1..={m}"
            )));
        }
        Ok(())
    };
    check(j0, "J0")?;
    check(j1, "J1")?;
    if snapshots > s || 2 * s >= n {
        return Err(BgpcError::Input(format!(
            "union construction needs N <= s and 2s < n, got n={n}, s={s}, N={snapshots}"
        )));
    }
    let mut union: Vec<usize> = j0.iter().chain(j1).copied().collect();
    union.sort_unstable();
    union.dedup();
    let ell = union.len();
    let base = construct_claim1(n, ell, snapshots)?;

    // order[p] = row of the permuted X0 (and column of the permuted A) that
    // lands at union position p: J0 positions first, then the rest
    let mut order = vec![0; ell];
    let mut next = 0;
    for (p, u) in union.iter().enumerate() {
        if j0.contains(u) {
            order[p] = next;
            next += 1;
        }
    }
    for (p, u) in union.iter().enumerate() {
        if !j0.contains(u) {
            order[p] = next;
            next += 1;
        }
    }
    let a = base.a.select_columns(&order)?;
    let x0 = base.x0.select_rows(&order)?;
    Ok(ConstructedInstance { a, x0, ..base })
}

/// Result of checking a construction's ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimVerification {
    pub stacked_rank: usize,
    #[serde(rename = "D_rank")]
    pub d_rank: usize,
    pub left_null_dim: usize,
    pub expected_left_null_dim: usize,
    pub pass: bool,
}

/// Checks `rank(stacked) = mN`, `rank(D) = mN - 1` and the left-null dimension of `D`.
pub fn verify_claim1_rank(ci: &ConstructedInstance, tol: Option<f64>) -> Result<ClaimVerification> {
    let d = build_d_stack(&ci.a, &ci.x0)?;
    let stacked = build_stacked(&ci.a, &ci.x0)?;
    let cols = ci.a.cols() * ci.x0.cols();
    let stacked_rank = numeric_rank(&stacked, tol)?.numeric_rank;
    // rank(D^H) = rank(D); one decomposition gives both the rank and the left null basis
    let left_null = null_space_with_rank(&d.conj_transpose(), tol)?;
    let d_rank = left_null.rank.numeric_rank;
    let left_null_dim = left_null.basis.len();
    let pass = stacked_rank == cols && d_rank + 1 == cols && left_null_dim == ci.expected_left_null_dim;
    Ok(ClaimVerification {
        stacked_rank,
        d_rank,
        left_null_dim,
        expected_left_null_dim: ci.expected_left_null_dim,
        pass,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstructedRepr {
    n: usize,
    m: usize,
    #[serde(rename = "N")]
    snapshots: usize,
    lambda0: ComplexMatrix,
    #[serde(rename = "X0")]
    x0: ComplexMatrix,
    #[serde(rename = "A")]
    a: ComplexMatrix,
    selected_cols: Vec<usize>,
    complement_cols: Vec<usize>,
    expected_left_null_dim: usize,
}

impl TryFrom<ConstructedRepr> for ConstructedInstance {
    type Error = BgpcError;

    fn try_from(r: ConstructedRepr) -> Result<Self> {
        if r.a.shape() != (r.n, r.m) || r.x0.shape() != (r.m, r.snapshots) {
            return Err(BgpcError::Dimension(format!(
                "A is {:?} and X0 is {:?}, header says n={}, m={}, N={}",
                r.a.shape(),
                r.x0.shape(),
                r.n,
                r.m,
                r.snapshots
            )));
        }
        if r.selected_cols.len() != r.m || r.selected_cols.len() + r.complement_cols.len() != r.n {
            return Err(BgpcError::Input(
                "selected_cols and complement_cols must partition 1..n".into(),
            ));
        }
        let mut all: Vec<usize> = r.selected_cols.iter().chain(&r.complement_cols).copied().collect();
        all.sort_unstable();
        if all != (1..=r.n).collect::<Vec<_>>() {
            return Err(BgpcError::Input(
                "selected_cols and complement_cols must partition 1..n".into(),
            ));
        }
        Ok(ConstructedInstance {
            n: r.n,
            m: r.m,
            snapshots: r.snapshots,
            selected_cols: r.selected_cols,
            complement_cols: r.complement_cols,
            a: r.a,
            x0: r.x0,
            expected_left_null_dim: r.expected_left_null_dim,
        })
    }
}

impl From<ConstructedInstance> for ConstructedRepr {
    fn from(ci: ConstructedInstance) -> Self {
        ConstructedRepr {
            lambda0: ComplexMatrix::column_vector(vec![Complex64::new(1.0, 0.0); ci.n]).expect("n >= 1"),
            n: ci.n,
            m: ci.m,
            snapshots: ci.snapshots,
            x0: ci.x0,
            a: ci.a,
            selected_cols: ci.selected_cols,
            complement_cols: ci.complement_cols,
            expected_left_null_dim: ci.expected_left_null_dim,
        }
    }
}
