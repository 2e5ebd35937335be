//! Small symmetric matrices, a cyclic Jacobi eigensolver, and the
//! elementary symmetric functions behind the k-Hessian operators.

use std::fmt;

use crate::error::{Error, Result};

/// A dense square matrix stored row-major. Used for eigenframes and for
/// coefficient matrices that are not yet symmetrized.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Builds from rows; every row must have the same length as the row count.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `A Aᵗ`, symmetric by construction.
    pub fn gram_outer(&self) -> SymMatrix {
        let n = self.n;
        SymMatrix::from_fn(n, |i, j| (0..n).map(|k| self.get(i, k) * self.get(j, k)).sum())
    }

    /// Modified Gram-Schmidt on the columns. Returns `None` when the columns
    /// are numerically dependent.
    pub fn orthonormalize_columns(&self) -> Option<SquareMatrix> {
        let n = self.n;
        let mut cols: Vec<Vec<f64>> = (0..n).map(|j| self.column(j)).collect();
        for j in 0..n {
            for p in 0..j {
                let d: f64 = (0..n).map(|i| cols[j][i] * cols[p][i]).sum();
                for i in 0..n {
                    cols[j][i] -= d * cols[p][i];
                }
            }
            let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-10 {
                return None;
            }
            for v in cols[j].iter_mut() {
                *v /= norm;
            }
        }
        Some(SquareMatrix::from_fn(n, |i, j| cols[j][i]))
    }
}

/// A real symmetric `n × n` matrix, stored as its upper triangle row-major.
///
/// Asymmetry cannot be represented: every constructor either reads the upper
/// triangle only or symmetrizes explicitly.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    upper: Vec<f64>,
}

#[inline]
fn tri_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "SymMatrix needs dim >= 1");
        Self {
            n,
            upper: vec![0.0; n * (n + 1) / 2],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Self::diag(&vec![s; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m.set(i, i, *v);
        }
        m
    }

    /// Builds from `f(i, j)` evaluated on the upper triangle only.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.upper[tri_index(n, i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds from the `n(n+1)/2` upper-triangle entries, row-major.
    pub fn from_upper(n: usize, upper: Vec<f64>) -> Result<Self> {
        if n == 0 || upper.len() != n * (n + 1) / 2 {
            return Err(Error::DimensionMismatch {
                expected: n * (n + 1) / 2,
                got: upper.len(),
            });
        }
        if upper.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("SymMatrix entries".into()));
        }
        Ok(Self { n, upper })
    }

    /// Symmetric part `(A + Aᵗ)/2` of a square matrix.
    pub fn symmetrize(a: &SquareMatrix) -> Self {
        Self::from_fn(a.dim(), |i, j| 0.5 * (a.get(i, j) + a.get(j, i)))
    }

    /// Rows of a symmetric matrix; fails when the input is not symmetric to
    /// `1e-12` relative.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let a = SquareMatrix::from_rows(rows)?;
        let scale = 1.0 + a.max_abs();
        for i in 0..a.dim() {
            for j in (i + 1)..a.dim() {
                if (a.get(i, j) - a.get(j, i)).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter(format!(
                        "matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self::symmetrize(&a))
    }

    /// `v ⊗ v`.
    pub fn outer(v: &[f64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    /// `Q diag(d) Qᵗ`.
    pub fn from_frame(q: &SquareMatrix, d: &[f64]) -> Self {
        let n = q.dim();
        Self::from_fn(n, |i, j| {
            (0..n).map(|k| q.get(i, k) * d[k] * q.get(j, k)).sum()
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[tri_index(self.n, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = tri_index(self.n, i, j);
        self.upper[idx] = v;
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn to_dense(&self) -> SquareMatrix {
        SquareMatrix::from_fn(self.n, |i, j| self.get(i, j))
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.upper.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.upper.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            n: self.n,
            upper: self.upper.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            upper: self
                .upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// `⟨M v, v⟩`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            s += self.get(i, i) * v[i] * v[i];
            for j in (i + 1)..self.n {
                s += 2.0 * self.get(i, j) * v[i] * v[j];
            }
        }
        s
    }

    /// `Qᵗ M Q`, i.e. `M` expressed in the columns of `Q`.
    pub fn congruence_t(&self, q: &SquareMatrix) -> SymMatrix {
        let mq = self.to_dense().matmul(q);
        let n = self.n;
        SymMatrix::from_fn(n, |i, j| (0..n).map(|k| q.get(k, i) * mq.get(k, j)).sum())
    }

    /// Determinant through the eigenvalues.
    pub fn det(&self) -> Result<f64> {
        Ok(eig_ascending(self)?.eigenvalues.iter().product())
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.n {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.n {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
        }
        write!(f, "]")
    }
}

/// Eigenvalues sorted ascending with the matching orthonormal frame:
/// `M = Q diag(λ) Qᵗ`, columns of `Q` are eigenvectors.
#[derive(Clone, Debug)]
pub struct SpectralDecomp {
    pub eigenvalues: Vec<f64>,
    pub frame: SquareMatrix,
}

impl SpectralDecomp {
    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::from_frame(&self.frame, &self.eigenvalues)
    }

    /// Eigenvector for `eigenvalues[i]`.
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.frame.column(i)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("nonempty spectrum")
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition, sweeping pairs `(p, q)` in row order.
pub fn eig_ascending(m: &SymMatrix) -> Result<SpectralDecomp> {
    let n = m.dim();
    if !m.is_finite() {
        return Err(Error::NonFinite(format!("eigensolver input {m:?}")));
    }
    let mut a = m.to_dense();
    let mut v = SquareMatrix::identity(n);
    let scale = m.max_abs();

    let off_norm = |a: &SquareMatrix| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                s += a.get(p, q) * a.get(p, q);
            }
        }
        s.sqrt()
    };

    let mut converged = scale == 0.0 || n == 1;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
        if off_norm(&a) <= 4.0 * f64::EPSILON * n as f64 * scale {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            sweeps,
            off: off_norm(&a),
            matrix: format!("{m:?}"),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let eigenvalues = order.iter().map(|&i| a.get(i, i)).collect();
    let frame = SquareMatrix::from_fn(n, |i, j| v.get(i, order[j]));
    Ok(SpectralDecomp { eigenvalues, frame })
}

/// Eigenvalues only, ascending.
pub fn eigenvalues(m: &SymMatrix) -> Result<Vec<f64>> {
    Ok(eig_ascending(m)?.eigenvalues)
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            got: b,
        });
    }
    Ok(())
}

/// `tr(Aᵗ M A)` for a symmetric coefficient matrix `A`.
pub fn trace_form(a: &SymMatrix, m: &SymMatrix) -> Result<f64> {
    trace_form_general(&a.to_dense(), m)
}

/// `tr(Aᵗ M A)` for an arbitrary square `A`.
pub fn trace_form_general(a: &SquareMatrix, m: &SymMatrix) -> Result<f64> {
    check_same_dim(m.dim(), a.dim())?;
    let ma = m.to_dense().matmul(a);
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a.get(i, j) * ma.get(i, j);
        }
    }
    Ok(s)
}

/// Symmetric factor `S = (A Aᵗ)^{1/2}` of the left polar decomposition
/// `A = S U`. Satisfies `tr(AᵗMA) = tr(S M S)` for all symmetric `M`.
pub fn polar_symmetric_part(a: &SquareMatrix) -> Result<SymMatrix> {
    psd_sqrt(&a.gram_outer())
}

/// Principal square root of a positive semidefinite matrix. Tiny negative
/// eigenvalues from rounding are clamped to zero.
pub fn psd_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = eig_ascending(m)?;
    let tol = 1e-12 * (1.0 + m.max_abs());
    if eig.min() < -tol {
        return Err(Error::NotAdmissible(format!(
            "square root of a matrix with eigenvalue {}",
            eig.min()
        )));
    }
    let d: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    Ok(SymMatrix::from_frame(&eig.frame, &d))
}

/// Elementary symmetric polynomial `σ_k(λ)` with `σ_0 = 1`.
///
/// Evaluated with the prefix recurrence `e_j ← e_j + λ_i e_{j-1}`.
pub fn sigma_k(lambda: &[f64], k: usize) -> Result<f64> {
    let n = lambda.len();
    if k > n {
        return Err(Error::out_of_range("k", k, format!("0..={n}")));
    }
    Ok(sigma_all(lambda)[k])
}

/// `[σ_0, σ_1, …, σ_n]` in one pass.
pub fn sigma_all(lambda: &[f64]) -> Vec<f64> {
    let n = lambda.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (i, &l) in lambda.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            e[j] += l * e[j - 1];
        }
    }
    e
}

/// `σ_{k-1,i}(γ) = σ_{k-1}(γ with slot i zeroed)`; `i` is zero-based.
pub fn sigma_km1_i(gamma: &[f64], k: usize, i: usize) -> Result<f64> {
    let n = gamma.len();
    if k == 0 || k > n {
        return Err(Error::out_of_range("k", k, format!("1..={n}")));
    }
    if i >= n {
        return Err(Error::out_of_range("i", i, format!("0..{n}")));
    }
    let mut reduced = gamma.to_vec();
    reduced[i] = 0.0;
    sigma_k(&reduced, k - 1)
}

/// Which part of the Gårding cone a query asks about.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeClosure {
    Open,
    Closed,
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConeQuery {
    pub k: usize,
    pub closure: ConeClosure,
}

impl ConeQuery {
    pub fn open(k: usize) -> Self {
        Self {
            k,
            closure: ConeClosure::Open,
        }
    }

    pub fn closed(k: usize) -> Self {
        Self {
            k,
            closure: ConeClosure::Closed,
        }
    }

    pub fn boundary(k: usize) -> Self {
        Self {
            k,
            closure: ConeClosure::Boundary,
        }
    }
}

/// Relative tolerance for `σ_j(λ) = 0`, scaled by `max(1, ‖λ‖_∞)^j`.
pub const CONE_REL_TOL: f64 = 1e-12;

pub(crate) fn cone_tol(lambda: &[f64], j: usize) -> f64 {
    let s = lambda.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    CONE_REL_TOL * s.powi(j as i32)
}

/// Membership of `λ` in `Γ_k`, its closure, or its boundary.
pub fn cone_membership(lambda: &[f64], q: ConeQuery) -> bool {
    let n = lambda.len();
    if q.k == 0 || q.k > n {
        return false;
    }
    let s = sigma_all(lambda);
    match q.closure {
        ConeClosure::Open => (1..=q.k).all(|j| s[j] > 0.0),
        ConeClosure::Closed => (1..=q.k).all(|j| s[j] >= -cone_tol(lambda, j)),
        ConeClosure::Boundary => {
            (1..=q.k).all(|j| s[j] >= -cone_tol(lambda, j))
                && s[q.k].abs() <= cone_tol(lambda, q.k)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_frame(m: &SymMatrix, d: &SpectralDecomp) {
        let n = m.dim();
        let qtq = d.frame.transpose().matmul(&d.frame);
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((qtq.get(i, j) - e).abs() <= 1e-12);
            }
        }
        let r = d.reconstruct().sub(m).max_abs();
        assert!(r <= 1e-10 * (1.0 + m.max_abs()), "reconstruction {r}");
        for w in d.eigenvalues.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn identity_spectrum() {
        let m = SymMatrix::identity(3);
        let d = eig_ascending(&m).unwrap();
        assert_eq!(d.eigenvalues, vec![1.0, 1.0, 1.0]);
        assert_frame(&m, &d);
    }

    #[test]
    fn diagonal_sorted() {
        let m = SymMatrix::diag(&[3.0, -1.0]);
        let d = eig_ascending(&m).unwrap();
        assert_eq!(d.eigenvalues, vec![-1.0, 3.0]);
    }

    #[test]
    fn random_4x4_reconstructs() {
        let m = SymMatrix::from_rows(&[
            vec![2.0, -0.3, 0.7, 1.1],
            vec![-0.3, -1.5, 0.2, 0.05],
            vec![0.7, 0.2, 0.4, -0.9],
            vec![1.1, 0.05, -0.9, 3.3],
        ])
        .unwrap();
        let d = eig_ascending(&m).unwrap();
        assert_frame(&m, &d);
    }

    #[test]
    fn nonfinite_input_rejected() {
        let mut m = SymMatrix::identity(2);
        m.set(0, 1, f64::NAN);
        assert!(eig_ascending(&m).is_err());
    }

    #[test]
    fn trace_form_examples() {
        let m = SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, -2.0]]).unwrap();
        let i = SymMatrix::identity(2);
        assert!((trace_form(&i, &m).unwrap() - m.trace()).abs() < 1e-15);

        let v = [0.6, 0.8];
        let a = SymMatrix::outer(&v);
        assert!((trace_form(&a, &m).unwrap() - m.quad_form(&v)).abs() < 1e-14);

        let a = SymMatrix::diag(&[1.0, 2.0]);
        let m = SymMatrix::diag(&[1.5, -0.25]);
        assert!((trace_form(&a, &m).unwrap() - (1.5 + 4.0 * -0.25)).abs() < 1e-15);

        assert!(trace_form(&SymMatrix::identity(3), &m).is_err());
    }

    #[test]
    fn polar_examples() {
        let rot = SquareMatrix::from_rows(&[vec![0.6, -0.8], vec![0.8, 0.6]]).unwrap();
        let s = polar_symmetric_part(&rot).unwrap();
        assert!(s.sub(&SymMatrix::identity(2)).max_abs() < 1e-12);

        let p = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let s = polar_symmetric_part(&p.to_dense()).unwrap();
        assert!(s.sub(&p).max_abs() < 1e-12);

        let a = SquareMatrix::from_rows(&[vec![0.0, 2.0], vec![1.0, 0.0]]).unwrap();
        let s = polar_symmetric_part(&a).unwrap();
        assert!(s.sub(&SymMatrix::diag(&[2.0, 1.0])).max_abs() < 1e-12);
    }

    /// Subset enumeration, kept independent of the recurrence.
    fn sigma_enum(l: &[f64], k: usize) -> f64 {
        let n = l.len();
        (0u32..(1 << n))
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| {
                (0..n)
                    .filter(|i| m & (1 << i) != 0)
                    .map(|i| l[i])
                    .product::<f64>()
            })
            .sum()
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma_k(&[1.0, 1.0, 1.0], 2).unwrap(), 3.0);
        assert_eq!(sigma_k(&[1.0, 2.0, 3.0], 3).unwrap(), 6.0);
        let l = [0.3, -1.2, 4.0, 2.5];
        assert!((sigma_k(&l, 1).unwrap() - l.iter().sum::<f64>()).abs() < 1e-14);
        for k in 0..=4 {
            assert!((sigma_k(&l, k).unwrap() - sigma_enum(&l, k)).abs() < 1e-12);
        }
        assert!(sigma_k(&l, 5).is_err());
    }

    #[test]
    fn sigma_km1_examples() {
        for i in 0..3 {
            assert_eq!(sigma_km1_i(&[1.0, 1.0, 1.0], 2, i).unwrap(), 2.0);
            assert_eq!(sigma_km1_i(&[5.0, -1.0, 7.0], 1, i).unwrap(), 1.0);
        }
        assert_eq!(sigma_km1_i(&[2.0, 3.0, 4.0], 3, 0).unwrap(), 12.0);
        assert!(sigma_km1_i(&[2.0, 3.0], 2, 2).is_err());
        assert!(sigma_km1_i(&[2.0, 3.0], 3, 0).is_err());
    }

    #[test]
    fn cone_examples() {
        assert!(cone_membership(&[1.0, 1.0, 1.0], ConeQuery::open(2)));
        assert!(!cone_membership(&[1.0, -1.0], ConeQuery::closed(2)));
        let l = [2.0, -1.0, -1.0];
        assert_eq!(sigma_k(&l, 1).unwrap(), 0.0);
        assert_eq!(sigma_k(&l, 2).unwrap(), -3.0);
        assert!(!cone_membership(&l, ConeQuery::closed(2)));
        assert!(cone_membership(&l, ConeQuery::boundary(1)));
        assert!(!cone_membership(&l, ConeQuery::open(1)));
    }
}
