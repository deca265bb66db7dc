//! Problem instances `Y = diag(lambda) A X`, seeded generic draws, scale
//! alignment and the sample-complexity thresholds.

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cxmat::{vector_norm, ComplexMatrix};
use crate::error::{BgpcError, Result};

/// A blind gain and phase calibration instance.
///
/// `support`, when present, lists the 0-based nonzero rows of `x0` in
/// increasing order; its length is the joint sparsity level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRepr", into = "InstanceRepr")]
pub struct BgpcInstance {
    pub lambda0: Vec<Complex64>,
    pub a: ComplexMatrix,
    pub x0: ComplexMatrix,
    pub support: Option<Vec<usize>>,
}

impl BgpcInstance {
    pub fn new(
        lambda0: Vec<Complex64>,
        a: ComplexMatrix,
        x0: ComplexMatrix,
        support: Option<Vec<usize>>,
    ) -> Result<Self> {
        let inst = Self {
            lambda0,
            a,
            x0,
            support,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Signal length, rows of `A`.
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// Subspace dimension, columns of `A`.
    pub fn m(&self) -> usize {
        self.a.cols()
    }

    /// Number of snapshots, columns of `X0`.
    pub fn snapshots(&self) -> usize {
        self.x0.cols()
    }

    pub fn sparsity(&self) -> Option<usize> {
        self.support.as_ref().map(Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = self.a.shape();
        if self.x0.rows() != m {
            return Err(BgpcError::Dimension(format!(
                "A is {n}x{m} but X0 has {} rows",
                self.x0.rows()
            )));
        }
        if self.lambda0.len() != n {
            return Err(BgpcError::Dimension(format!(
                "lambda0 has length {}, expected {n}",
                self.lambda0.len()
            )));
        }
        self.a.ensure_finite()?;
        self.x0.ensure_finite()?;
        if self.lambda0.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(BgpcError::Input("lambda0 has a non-finite entry".into()));
        }
        if let Some(support) = &self.support {
            if support.len() > m {
                return Err(BgpcError::Input(format!(
                    "support size {} exceeds m = {m}",
                    support.len()
                )));
            }
            if support.windows(2).any(|w| w[0] >= w[1]) || support.iter().any(|&j| j >= m) {
                return Err(BgpcError::Input(
                    "support must be strictly increasing indices within 1..m".into(),
                ));
            }
            for i in (0..m).filter(|i| support.binary_search(i).is_err()) {
                if self.x0.row(i).iter().any(|z| *z != Complex64::new(0.0, 0.0)) {
                    return Err(BgpcError::Input(format!(
                        "row {} of X0 lies outside the support but is nonzero",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// `Y = diag(lambda0) A X0`.
    pub fn forward(&self) -> Result<ComplexMatrix> {
        forward(&self.lambda0, &self.a, &self.x0)
    }
}

/// `Y = diag(lambda) A X`.
pub fn forward(lambda: &[Complex64], a: &ComplexMatrix, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.matmul(x)?.scale_rows(lambda)
}

// unknown fields are ignored so constructed instances load as plain instances
#[derive(Serialize, Deserialize)]
struct InstanceRepr {
    n: usize,
    m: usize,
    #[serde(rename = "N")]
    snapshots: usize,
    lambda0: ComplexMatrix,
    #[serde(rename = "X0")]
    x0: ComplexMatrix,
    #[serde(rename = "A")]
    a: ComplexMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support: Option<Vec<usize>>,
}

impl TryFrom<InstanceRepr> for BgpcInstance {
    type Error = BgpcError;

    fn try_from(r: InstanceRepr) -> Result<Self> {
        if r.a.shape() != (r.n, r.m) {
            return Err(BgpcError::Dimension(format!(
                "A is {:?}, header says {}x{}",
                r.a.shape(),
                r.n,
                r.m
            )));
        }
        if r.x0.shape() != (r.m, r.snapshots) {
            return Err(BgpcError::Dimension(format!(
                "X0 is {:?}, header says {}x{}",
                r.x0.shape(),
                r.m,
                r.snapshots
            )));
        }
        if r.lambda0.cols() != 1 {
            return Err(BgpcError::Dimension("lambda0 must be a column vector".into()));
        }
        let support = match r.support {
            Some(s) => {
                if s.contains(&0) {
                    return Err(BgpcError::Input("support indices are 1-based".into()));
                }
                Some(s.into_iter().map(|j| j - 1).collect())
            }
            None => None,
        };
        BgpcInstance::new(r.lambda0.into_vec(), r.a, r.x0, support)
    }
}

impl From<BgpcInstance> for InstanceRepr {
    fn from(inst: BgpcInstance) -> Self {
        InstanceRepr {
            n: inst.n(),
            m: inst.m(),
            snapshots: inst.snapshots(),
            lambda0: ComplexMatrix::column_vector(inst.lambda0).expect("lambda0 is nonempty"),
            x0: inst.x0,
            a: inst.a,
            support: inst.support.map(|s| s.into_iter().map(|j| j + 1).collect()),
        }
    }
}

/// Complex standard normal: independent real and imaginary parts of variance 1/2.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws a generic instance from a seeded generator.
///
/// Draw order is fixed: `lambda0`, then `A` row-major, then the support (when
/// `sparsity` is set), then the nonzero rows of `X0` row-major.
pub fn random_instance(
    n: usize,
    m: usize,
    snapshots: usize,
    seed: u64,
    sparsity: Option<usize>,
) -> Result<BgpcInstance> {
    if n == 0 || m == 0 || snapshots == 0 {
        return Err(BgpcError::Dimension(format!(
            "dimensions must be positive, got n={n}, m={m}, N={snapshots}"
        )));
    }
    if let Some(s) = sparsity {
        if s > m {
            return Err(BgpcError::Input(format!("sparsity s = {s} exceeds m = {m}")));
        }
        if s == 0 {
            return Err(BgpcError::Input("sparsity must be at least 1".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda0: Vec<Complex64> = (0..n).map(|_| complex_normal(&mut rng)).collect();
    let a = ComplexMatrix::from_fn(n, m, |_, _| complex_normal(&mut rng))?;
    let rows: Vec<usize> = match sparsity {
        Some(s) => {
            let mut idx = sample(&mut rng, m, s).into_vec();
            idx.sort_unstable();
            idx
        }
        None => (0..m).collect(),
    };
    let mut x0 = vec![Complex64::new(0.0, 0.0); m * snapshots];
    for &r in &rows {
        for j in 0..snapshots {
            x0[r * snapshots + j] = complex_normal(&mut rng);
        }
    }
    let x0 = ComplexMatrix::new(m, snapshots, x0)?;
    BgpcInstance::new(lambda0, a, x0, sparsity.map(|_| rows))
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Least `N` with `N >= (n-1)/(n-m)`.
pub fn min_samples_subspace(n: usize, m: usize) -> Result<usize> {
    if m == 0 || n <= m {
        return Err(BgpcError::Input(format!(
            "subspace threshold needs n > m >= 1, got n={n}, m={m}"
        )));
    }
    Ok(ceil_div(n - 1, n - m).max(1))
}

/// Least `N` with `N >= (n-1)/(n-2s)`.
pub fn min_samples_joint_sparse(n: usize, s: usize) -> Result<usize> {
    if s == 0 || n <= 2 * s {
        return Err(BgpcError::Input(format!(
            "joint-sparse threshold needs n > 2s >= 2, got n={n}, s={s}"
        )));
    }
    Ok(ceil_div(n - 1, n - 2 * s).max(1))
}

/// Best complex scale mapping `truth` onto `estimate` in the least-squares sense.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleAlignment {
    pub sigma: Complex64,
    pub relative_error: f64,
    /// Set when `estimate` carries no component along `truth`.
    pub degenerate: bool,
}

/// Aligns two equally sized slices: `sigma = <truth, estimate> / |truth|^2`.
pub fn align_scale_slices(estimate: &[Complex64], truth: &[Complex64]) -> Result<ScaleAlignment> {
    if estimate.len() != truth.len() {
        return Err(BgpcError::Dimension(format!(
            "cannot align {} entries against {}",
            estimate.len(),
            truth.len()
        )));
    }
    let t_norm = vector_norm(truth);
    if t_norm == 0.0 {
        return Err(BgpcError::Input("alignment target is all zero".into()));
    }
    let inner: Complex64 = truth.iter().zip(estimate).map(|(t, e)| t.conj() * e).sum();
    let sigma = inner / (t_norm * t_norm);
    let resid: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - sigma * t).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let e_norm = vector_norm(estimate);
    let degenerate = sigma.norm() * t_norm <= f64::EPSILON * e_norm || e_norm == 0.0;
    Ok(ScaleAlignment {
        sigma,
        relative_error: resid / t_norm,
        degenerate,
    })
}

pub fn align_scale(estimate: &ComplexMatrix, truth: &ComplexMatrix) -> Result<ScaleAlignment> {
    if estimate.shape() != truth.shape() {
        return Err(BgpcError::Dimension(format!(
            "cannot align {:?} against {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    align_scale_slices(estimate.as_slice(), truth.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn forward_identity_gains() {
        let inst = random_instance(6, 3, 2, 11, None).unwrap();
        let ones = vec![c(1.0, 0.0); 6];
        let y = forward(&ones, &inst.a, &inst.x0).unwrap();
        assert_eq!(y, inst.a.matmul(&inst.x0).unwrap());
    }

    #[test]
    fn forward_identity_operator() {
        let lambda = vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, -1.0)];
        let i3 = ComplexMatrix::identity(3).unwrap();
        let y = forward(&lambda, &i3, &i3).unwrap();
        for k in 0..3 {
            for j in 0..3 {
                let want = if k == j { lambda[k] } else { c(0.0, 0.0) };
                assert_eq!(y[(k, j)], want);
            }
        }
    }

    #[test]
    fn forward_matches_triple_loop() {
        let inst = random_instance(8, 4, 2, 7, None).unwrap();
        let y = inst.forward().unwrap();
        for k in 0..8 {
            for j in 0..2 {
                let mut acc = c(0.0, 0.0);
                for l in 0..4 {
                    acc += inst.a[(k, l)] * inst.x0[(l, j)];
                }
                assert!((y[(k, j)] - inst.lambda0[k] * acc).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_dimension_mismatch() {
        let a = ComplexMatrix::identity(3).unwrap();
        let x = ComplexMatrix::identity(2).unwrap();
        assert!(forward(&[c(1.0, 0.0); 3], &a, &x).is_err());
        assert!(BgpcInstance::new(
            vec![c(1.0, 0.0); 2],
            a.clone(),
            ComplexMatrix::identity(3).unwrap(),
            None
        )
        .is_err());
    }

    #[test]
    fn random_instance_is_deterministic() {
        let a = random_instance(8, 4, 2, 42, None).unwrap();
        let b = random_instance(8, 4, 2, 42, None).unwrap();
        assert_eq!(a, b);
        let c = random_instance(8, 4, 2, 43, None).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sparse_instance_has_exact_support() {
        let inst = random_instance(10, 5, 3, 3, Some(2)).unwrap();
        let nonzero: Vec<usize> = (0..5)
            .filter(|&i| inst.x0.row(i).iter().any(|z| *z != c(0.0, 0.0)))
            .collect();
        assert_eq!(nonzero.len(), 2);
        assert_eq!(Some(nonzero), inst.support);
        assert!(random_instance(10, 5, 3, 3, Some(6)).is_err());
    }

    #[test]
    fn generic_measurements_have_no_zero_rows() {
        for seed in 0..20 {
            let y = random_instance(8, 4, 2, seed, None).unwrap().forward().unwrap();
            for k in 0..8 {
                assert!(vector_norm(y.row(k)) > 0.0);
            }
        }
    }

    #[test]
    fn thresholds() {
        // n = 256 * 256 images, m = 9 lighting subspace
        assert_eq!(min_samples_subspace(65536, 9).unwrap(), 2);
        assert_eq!(min_samples_subspace(4, 2).unwrap(), 2);
        for n in 4..60 {
            for m in 2..=n / 2 {
                assert_eq!(min_samples_subspace(n, m).unwrap(), 2, "n={n} m={m}");
            }
        }
        assert!(min_samples_subspace(4, 4).is_err());
        assert!(min_samples_subspace(3, 5).is_err());

        assert_eq!(min_samples_joint_sparse(16, 3).unwrap(), 2);
        assert_eq!(min_samples_joint_sparse(9, 4).unwrap(), 8);
        assert!(min_samples_joint_sparse(8, 4).is_err());
        assert!(min_samples_joint_sparse(8, 0).is_err());
    }

    #[test]
    fn threshold_is_least_counting_solution() {
        for n in 3..=40 {
            for m in 2..n {
                let want = (1..).find(|&big_n: &usize| n * (big_n - 1) + 1 >= m * big_n).unwrap();
                assert_eq!(min_samples_subspace(n, m).unwrap(), want, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn alignment_cases() {
        let t = ComplexMatrix::new(2, 1, vec![c(1.0, -1.0), c(2.0, 0.5)]).unwrap();
        let al = align_scale(&t.scale(c(0.0, 3.0)), &t).unwrap();
        assert!((al.sigma - c(0.0, 3.0)).norm() < 1e-14);
        assert!(al.relative_error < 1e-15);
        assert!(!al.degenerate);

        let al = align_scale(&t, &t).unwrap();
        assert!((al.sigma - c(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(al.relative_error, 0.0);

        let e = ComplexMatrix::new(2, 1, vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let t = ComplexMatrix::new(2, 1, vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        let al = align_scale(&e, &t).unwrap();
        assert_eq!(al.sigma, c(0.0, 0.0));
        assert!(al.degenerate);

        assert!(align_scale(&e, &ComplexMatrix::zeros(2, 1).unwrap()).is_err());
    }

    #[test]
    fn instance_json_uses_one_based_support() {
        let inst = random_instance(6, 4, 2, 5, Some(2)).unwrap();
        let s = serde_json::to_string(&inst).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        let support: Vec<usize> = serde_json::from_value(v["support"].clone()).unwrap();
        assert_eq!(
            support,
            inst.support.clone().unwrap().iter().map(|j| j + 1).collect::<Vec<_>>()
        );
        assert_eq!(v["N"], 2);
        let back: BgpcInstance = serde_json::from_str(&s).unwrap();
        assert_eq!(back, inst);
    }
}
