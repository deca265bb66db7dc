//! Dense complex matrices with the handful of operations the certificates need:
//! products, Kronecker and entrywise products, conjugate transposes, the
//! unnormalized DFT matrix, and SVD-based numeric rank / null-space extraction.
//!
//! Every rank decision in the crate goes through [`numeric_rank`] and
//! [`null_space`], which share one tolerance rule: unless the caller passes an
//! explicit absolute tolerance, singular values at or below
//! `max(rows, cols) * f64::EPSILON * sigma_max` count as zero.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Index;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{BgpcError, Result};

/// Dense complex matrix, row-major, at least 1x1.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(BgpcError::Dimension(format!(
                "matrix must be nonempty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(BgpcError::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![Complex64::new(0.0, 0.0); rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Builds from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// An `n x 1` column vector.
    pub fn column_vector(entries: Vec<Complex64>) -> Result<Self> {
        let n = entries.len();
        Self::new(n, 1, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Option<Complex64> {
        (i < self.rows && j < self.cols).then(|| self.data[i * self.cols + j])
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_matrix(&self, i: usize) -> ComplexMatrix {
        Self {
            rows: 1,
            cols: self.cols,
            data: self.row(i).to_vec(),
        }
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn column_matrix(&self, j: usize) -> ComplexMatrix {
        Self {
            rows: self.rows,
            cols: 1,
            data: self.column(j),
        }
    }

    /// Column-major vectorization as an `rows*cols x 1` matrix.
    pub fn vec(&self) -> ComplexMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self[(i, j)]);
            }
        }
        Self {
            rows: self.data.len(),
            cols: 1,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Returns an error naming the first non-finite entry.
    pub fn ensure_finite(&self) -> Result<()> {
        match self.data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            Some(p) => Err(BgpcError::NonFinite {
                row: p / self.cols,
                col: p % self.cols,
            }),
            None => Ok(()),
        }
    }

    pub fn conj_transpose(&self) -> ComplexMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self[(i, j)].conj());
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn transpose(&self) -> ComplexMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self[(i, j)]);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(BgpcError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut data = vec![Complex64::new(0.0, 0.0); self.rows * rhs.cols];
        for i in 0..self.rows {
            let out = &mut data[i * rhs.cols..(i + 1) * rhs.cols];
            for (l, &a) in self.row(i).iter().enumerate() {
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for (o, &b) in out.iter_mut().zip(rhs.row(l)) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: rhs.cols,
            data,
        })
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.shape() != rhs.shape() {
            return Err(BgpcError::Dimension(format!(
                "entrywise product needs equal shapes, got {:?} and {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a * b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: Complex64) -> ComplexMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.shape() != rhs.shape() {
            return Err(BgpcError::Dimension(format!(
                "cannot subtract {:?} from {:?}",
                rhs.shape(),
                self.shape()
            )));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Left-multiplies by `diag(d)`, i.e. scales row `k` by `d[k]`.
    pub fn scale_rows(&self, d: &[Complex64]) -> Result<ComplexMatrix> {
        if d.len() != self.rows {
            return Err(BgpcError::Dimension(format!(
                "diagonal of length {} cannot scale {} rows",
                d.len(),
                self.rows
            )));
        }
        let mut out = self.clone();
        for (k, &dk) in d.iter().enumerate() {
            for z in &mut out.data[k * self.cols..(k + 1) * self.cols] {
                *z *= dk;
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Keeps the listed columns (0-based), in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Result<ComplexMatrix> {
        if let Some(&bad) = idx.iter().find(|&&j| j >= self.cols) {
            return Err(BgpcError::Dimension(format!(
                "column {bad} out of range for {} columns",
                self.cols
            )));
        }
        Self::from_fn(self.rows, idx.len(), |i, j| self[(i, idx[j])])
    }

    /// Keeps the listed rows (0-based), in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<ComplexMatrix> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.rows) {
            return Err(BgpcError::Dimension(format!(
                "row {bad} out of range for {} rows",
                self.rows
            )));
        }
        Self::from_fn(idx.len(), self.cols, |i, j| self[(idx[i], j)])
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(blocks: &[ComplexMatrix]) -> Result<ComplexMatrix> {
        let first = blocks
            .first()
            .ok_or_else(|| BgpcError::Dimension("vstack of zero blocks".into()))?;
        let cols = first.cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for b in blocks {
            if b.cols != cols {
                return Err(BgpcError::Dimension(format!(
                    "vstack column mismatch: {} vs {}",
                    b.cols, cols
                )));
            }
            rows += b.rows;
            data.extend_from_slice(&b.data);
        }
        Self::new(rows, cols, data)
    }

    fn to_faer(&self) -> Mat<Complex64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of range");
        &self.data[i * self.cols + j]
    }
}

/// On-disk form: `{"rows", "cols", "data": [[re, im], ...]}`, row-major.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl TryFrom<MatrixRepr> for ComplexMatrix {
    type Error = BgpcError;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        let m = ComplexMatrix::new(
            r.rows,
            r.cols,
            r.data.iter().map(|&[re, im]| Complex64::new(re, im)).collect(),
        )?;
        m.ensure_finite()?;
        Ok(m)
    }
}

impl From<ComplexMatrix> for MatrixRepr {
    fn from(m: ComplexMatrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

/// Unnormalized `n x n` DFT matrix, entry `(j, k) = exp(-2*pi*i*j*k/n)` (0-based).
pub fn dft_matrix(n: usize) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(BgpcError::Dimension("DFT size must be positive".into()));
    }
    // reduce the exponent mod n so every angle lies in [0, 2*pi)
    ComplexMatrix::from_fn(n, n, |j, k| {
        let e = (j * k) % n;
        Complex64::from_polar(1.0, -2.0 * PI * e as f64 / n as f64)
    })
}

/// Kronecker product `l ⊗ r`: block `(i, j)` equals `l[i, j] * r`.
pub fn kronecker(l: &ComplexMatrix, r: &ComplexMatrix) -> ComplexMatrix {
    let rows = l.rows * r.rows;
    let cols = l.cols * r.cols;
    let mut data = vec![Complex64::new(0.0, 0.0); rows * cols];
    for i in 0..l.rows {
        for j in 0..l.cols {
            let lij = l[(i, j)];
            for p in 0..r.rows {
                let dst = (i * r.rows + p) * cols + j * r.cols;
                for (d, &rv) in data[dst..dst + r.cols].iter_mut().zip(r.row(p)) {
                    *d = lij * rv;
                }
            }
        }
    }
    ComplexMatrix { rows, cols, data }
}

/// Outcome of a numeric rank computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub numeric_rank: usize,
    /// Nonincreasing, `min(rows, cols)` entries.
    pub singular_values: Vec<f64>,
    pub tolerance_used: f64,
}

/// Default absolute tolerance for a matrix of the given shape and largest
/// singular value.
pub fn default_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

fn resolve_tolerance(tol: Option<f64>, rows: usize, cols: usize, sigma_max: f64) -> Result<f64> {
    match tol {
        Some(t) if !(t.is_finite() && t >= 0.0) => Err(BgpcError::Input(format!(
            "tolerance must be a finite nonnegative number, got {t}"
        ))),
        Some(t) => Ok(t),
        None => Ok(default_tolerance(rows, cols, sigma_max)),
    }
}

fn no_convergence<E: fmt::Debug>(e: E) -> BgpcError {
    BgpcError::Numerical(format!("SVD did not converge: {e:?}"))
}

fn sorted_singular_values(m: &ComplexMatrix) -> Result<Vec<f64>> {
    let mut sv = m.to_faer().singular_values().map_err(no_convergence)?;
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Singular values plus all `cols` right singular vectors, ordered by
/// nonincreasing singular value. Vectors past `min(rows, cols)` pair with an
/// implicit zero singular value.
pub(crate) struct RightSingular {
    pub singular_values: Vec<f64>,
    pub vectors: Vec<Vec<Complex64>>,
}

pub(crate) fn right_singular(m: &ComplexMatrix) -> Result<RightSingular> {
    m.ensure_finite()?;
    let svd = m.to_faer().svd().map_err(no_convergence)?;
    let s = svd.S().column_vector();
    let v = svd.V();
    let k = s.nrows();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| s[y].re.total_cmp(&s[x].re));
    order.extend(k..m.cols);
    let singular_values = order.iter().take(k).map(|&i| s[i].re).collect();
    let vectors = order
        .iter()
        .map(|&j| (0..m.cols).map(|i| v[(i, j)]).collect())
        .collect();
    Ok(RightSingular {
        singular_values,
        vectors,
    })
}

/// Numeric rank of `m`: the number of singular values strictly above the
/// tolerance (`tol`, or the default rule when `None`).
pub fn numeric_rank(m: &ComplexMatrix, tol: Option<f64>) -> Result<RankResult> {
    m.ensure_finite()?;
    let singular_values = sorted_singular_values(m)?;
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let tolerance_used = resolve_tolerance(tol, m.rows, m.cols, sigma_max)?;
    let numeric_rank = singular_values.iter().filter(|&&s| s > tolerance_used).count();
    Ok(RankResult {
        numeric_rank,
        singular_values,
        tolerance_used,
    })
}

/// Null-space basis together with the rank information it was derived from.
#[derive(Debug, Clone)]
pub struct NullSpace {
    /// Orthonormal basis, each an `cols x 1` column.
    pub basis: Vec<ComplexMatrix>,
    pub rank: RankResult,
}

/// Orthonormal basis of the right null space, with the rank that decided it.
pub fn null_space_with_rank(m: &ComplexMatrix, tol: Option<f64>) -> Result<NullSpace> {
    let rs = right_singular(m)?;
    let sigma_max = rs.singular_values.first().copied().unwrap_or(0.0);
    let tolerance_used = resolve_tolerance(tol, m.rows, m.cols, sigma_max)?;
    let numeric_rank = rs.singular_values.iter().filter(|&&s| s > tolerance_used).count();
    let basis = rs
        .vectors
        .into_iter()
        .skip(numeric_rank)
        .map(ComplexMatrix::column_vector)
        .collect::<Result<Vec<_>>>()?;
    Ok(NullSpace {
        basis,
        rank: RankResult {
            numeric_rank,
            singular_values: rs.singular_values,
            tolerance_used,
        },
    })
}

/// Orthonormal basis of `{v : m v = 0}`; `cols - rank` column vectors.
pub fn null_space(m: &ComplexMatrix, tol: Option<f64>) -> Result<Vec<ComplexMatrix>> {
    Ok(null_space_with_rank(m, tol)?.basis)
}

/// Orthonormal basis of `{w : w^H m = 0}`.
pub fn left_null_space(m: &ComplexMatrix, tol: Option<f64>) -> Result<Vec<ComplexMatrix>> {
    null_space(&m.conj_transpose(), tol)
}

/// Euclidean norm of a slice.
pub fn vector_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Serde adapter storing an optional complex vector as an `n x 1` matrix object.
pub mod opt_column {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::ComplexMatrix;

    pub fn serialize<S: Serializer>(v: &Option<Vec<Complex64>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => ComplexMatrix::column_vector(v.clone())
                .map_err(serde::ser::Error::custom)?
                .serialize(s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<Complex64>>, D::Error> {
        let m: Option<ComplexMatrix> = Option::deserialize(d)?;
        match m {
            Some(m) if m.cols() != 1 => Err(serde::de::Error::custom("expected a column vector")),
            Some(m) => Ok(Some(m.into_vec())),
            None => Ok(None),
        }
    }
}
