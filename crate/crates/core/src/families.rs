//! Coefficient families `𝒜`, sets of families for sup-inf operators, and the
//! `φ(ε)` truncation schedule for unbounded families.
//!
//! Every member is symmetric positive semidefinite. Sampling is seed-driven
//! and deterministic.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::operators::check_ellipticity;
use crate::symmat::{
    cone_membership, eig_ascending, sigma_all, sigma_k, sigma_km1_i, ConeQuery, SpectralDecomp,
    SquareMatrix, SymMatrix,
};
use crate::textform::parse_head;

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A Haar-distributed orthogonal frame from orthogonalized Gaussians.
pub fn random_frame(n: usize, rng: &mut impl Rng) -> SquareMatrix {
    loop {
        let g = SquareMatrix::from_fn(n, |_, _| rng.sample(StandardNormal));
        if let Some(q) = g.orthonormalize_columns() {
            return q;
        }
    }
}

pub fn random_unit_vector(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Whether an extremum is an infimum or a supremum over the family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Extremum {
    #[default]
    Inf,
    Sup,
}

#[derive(Clone, Debug)]
pub enum FamilyKind {
    Finite(Vec<SymMatrix>),
    PucciBand { theta: f64, big_theta: f64 },
    RankOneSphere,
    /// Rank-one projectors onto unit vectors of the span of an orthonormal basis.
    RankOneInSubspace(Vec<Vec<f64>>),
    ProjectionRankK(usize),
    /// `λ_i(A)² = σ_{k-1,i}(γ)` with `γ ∈ Γ_k`, `σ_k(γ) = 1`. For `k = n`
    /// this is the determinant-one family.
    KHessian(usize),
}

/// A coefficient set `𝒜 ⊂ S⁺_n`.
#[derive(Clone, Debug)]
pub struct MatrixFamily {
    dim: usize,
    kind: FamilyKind,
}

fn is_psd(a: &SymMatrix) -> Result<bool> {
    Ok(eig_ascending(a)?.min() >= -1e-12 * (1.0 + a.max_abs()))
}

impl MatrixFamily {
    pub fn finite(members: Vec<SymMatrix>) -> Result<Self> {
        let dim = members
            .first()
            .ok_or_else(|| Error::InvalidParameter("finite family needs members".into()))?
            .dim();
        for m in &members {
            if m.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.dim(),
                });
            }
            if !is_psd(m)? {
                return Err(Error::NotAdmissible(format!("family member {m:?} is not PSD")));
            }
        }
        Ok(Self {
            dim,
            kind: FamilyKind::Finite(members),
        })
    }

    /// `{I}`, the Laplacian's family.
    pub fn identity(n: usize) -> Self {
        Self {
            dim: n,
            kind: FamilyKind::Finite(vec![SymMatrix::identity(n)]),
        }
    }

    pub fn pucci_band(n: usize, theta: f64, big_theta: f64) -> Result<Self> {
        check_ellipticity(theta, big_theta)?;
        Ok(Self {
            dim: n,
            kind: FamilyKind::PucciBand { theta, big_theta },
        })
    }

    pub fn rank_one_sphere(n: usize) -> Self {
        Self {
            dim: n,
            kind: FamilyKind::RankOneSphere,
        }
    }

    /// `basis` must be orthonormal; it is re-orthonormalized to guard rounding.
    pub fn rank_one_in_subspace(n: usize, basis: Vec<Vec<f64>>) -> Result<Self> {
        if basis.is_empty() || basis.len() > n || basis.iter().any(|b| b.len() != n) {
            return Err(Error::InvalidParameter("subspace basis shape".into()));
        }
        let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
        for b in basis {
            let mut v = b;
            for p in &ortho {
                let d: f64 = v.iter().zip(p).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(p).for_each(|(a, b)| *a -= d * b);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-10 {
                return Err(Error::InvalidParameter("subspace basis is dependent".into()));
            }
            ortho.push(v.into_iter().map(|x| x / norm).collect());
        }
        Ok(Self {
            dim: n,
            kind: FamilyKind::RankOneInSubspace(ortho),
        })
    }

    pub fn projection_rank_k(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::out_of_range("k", k, format!("1..={n}")));
        }
        Ok(Self {
            dim: n,
            kind: FamilyKind::ProjectionRankK(k),
        })
    }

    pub fn k_hessian(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::out_of_range("k", k, format!("1..={n}")));
        }
        Ok(Self {
            dim: n,
            kind: FamilyKind::KHessian(k),
        })
    }

    /// Positive definite matrices with determinant one.
    pub fn det_one(n: usize) -> Self {
        Self {
            dim: n,
            kind: FamilyKind::KHessian(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn bounded(&self) -> bool {
        !matches!(self.kind, FamilyKind::KHessian(_))
    }

    /// `sup_A λ_n(A)` for bounded families.
    pub fn max_norm(&self) -> Option<f64> {
        match &self.kind {
            FamilyKind::Finite(ms) => Some(
                ms.iter()
                    .map(|m| eig_ascending(m).map(|e| e.max()).unwrap_or(f64::INFINITY))
                    .fold(0.0, f64::max),
            ),
            FamilyKind::PucciBand { big_theta, .. } => Some(big_theta.sqrt()),
            FamilyKind::RankOneSphere
            | FamilyKind::RankOneInSubspace(_)
            | FamilyKind::ProjectionRankK(_) => Some(1.0),
            FamilyKind::KHessian(_) => None,
        }
    }

    /// Largest `λ_n(A)` a sample can have under `cap`.
    pub fn reach(&self, cap: Option<f64>) -> Option<f64> {
        match (self.max_norm(), cap) {
            (Some(m), Some(c)) => Some(m.min(c)),
            (Some(m), None) => Some(m),
            (None, c) => c,
        }
    }

    /// Deterministic samples; with `cap`, every sample has `λ_n(A) ≤ cap`.
    /// For finite families `count` is ignored and the capped list returned.
    pub fn sample(&self, count: usize, seed: u64, cap: Option<f64>) -> Result<Vec<SymMatrix>> {
        self.sample_guided(count, seed, cap, None)
    }

    /// As [`sample`](Self::sample); when `guide` is given, every fourth
    /// sample uses the eigenframe of `guide` instead of a random frame.
    pub fn sample_guided(
        &self,
        count: usize,
        seed: u64,
        cap: Option<f64>,
        guide: Option<&SymMatrix>,
    ) -> Result<Vec<SymMatrix>> {
        if count == 0 {
            return Err(Error::InvalidParameter("sample count must be >= 1".into()));
        }
        if let Some(c) = cap {
            if !(c > 0.0) {
                return Err(Error::InvalidParameter(format!("cap must be positive, got {c}")));
            }
        }
        let n = self.dim;
        let guide_frame = match guide {
            Some(g) => Some(eig_ascending(g)?.frame),
            None => None,
        };
        let mut rng = rng_from_seed(seed);
        let frame = |rng: &mut ChaCha8Rng, i: usize| -> SquareMatrix {
            match &guide_frame {
                Some(q) if i % 4 == 0 => q.clone(),
                _ => random_frame(n, rng),
            }
        };
        let within_cap = |a: &SymMatrix| -> Result<bool> {
            Ok(match cap {
                Some(c) => eig_ascending(a)?.max() <= c * (1.0 + 1e-12),
                None => true,
            })
        };

        let out: Vec<SymMatrix> = match &self.kind {
            FamilyKind::Finite(ms) => {
                let mut v = Vec::new();
                for m in ms {
                    if within_cap(m)? {
                        v.push(m.clone());
                    }
                }
                v
            }
            FamilyKind::PucciBand { theta, big_theta } => {
                let (lo, hi) = (theta.sqrt(), big_theta.sqrt());
                let top = cap.map_or(hi, |c| c.min(hi));
                if top < lo {
                    return Err(Error::EmptySample(format!(
                        "cap {top} below band floor {lo}"
                    )));
                }
                (0..count)
                    .map(|i| {
                        let q = frame(&mut rng, i);
                        let d: Vec<f64> = (0..n)
                            .map(|_| {
                                // Half the eigenvalues sit on the band edges, where
                                // the Pucci extrema are attained.
                                let u: f64 = rng.random();
                                if u < 0.25 {
                                    lo
                                } else if u < 0.5 {
                                    top
                                } else {
                                    lo + (top - lo) * rng.random::<f64>()
                                }
                            })
                            .collect();
                        SymMatrix::from_frame(&q, &d)
                    })
                    .collect()
            }
            FamilyKind::RankOneSphere => {
                if cap.is_some_and(|c| c < 1.0) {
                    return Err(Error::EmptySample("cap below 1 excludes rank-one projectors".into()));
                }
                (0..count)
                    .map(|i| match &guide_frame {
                        Some(q) if i % 4 == 0 => SymMatrix::outer(&q.column((i / 4) % n)),
                        _ => SymMatrix::outer(&random_unit_vector(n, &mut rng)),
                    })
                    .collect()
            }
            FamilyKind::RankOneInSubspace(basis) => {
                if cap.is_some_and(|c| c < 1.0) {
                    return Err(Error::EmptySample("cap below 1 excludes rank-one projectors".into()));
                }
                (0..count)
                    .map(|_| {
                        let w = random_unit_vector(basis.len(), &mut rng);
                        let v = combine(basis, &w);
                        SymMatrix::outer(&v)
                    })
                    .collect()
            }
            FamilyKind::ProjectionRankK(k) => {
                if cap.is_some_and(|c| c < 1.0) {
                    return Err(Error::EmptySample("cap below 1 excludes projections".into()));
                }
                (0..count)
                    .map(|i| {
                        let q = frame(&mut rng, i);
                        let d: Vec<f64> = (0..n).map(|j| if j < *k { 1.0 } else { 0.0 }).collect();
                        if guide_frame.is_some() && i % 4 == 0 {
                            // alternate between the lowest and highest k directions
                            let d: Vec<f64> = if (i / 4) % 2 == 0 {
                                d
                            } else {
                                d.into_iter().rev().collect()
                            };
                            SymMatrix::from_frame(&q, &d)
                        } else {
                            SymMatrix::from_frame(&q, &d)
                        }
                    })
                    .collect()
            }
            FamilyKind::KHessian(k) => {
                let k = *k;
                if let Some(c) = cap {
                    let floor = k_hessian_min_top(n, k);
                    if c < floor * (1.0 - 1e-12) {
                        return Err(Error::EmptySample(format!(
                            "cap {c} is below the smallest top eigenvalue {floor} in the k={k} family"
                        )));
                    }
                }
                let mut v = Vec::with_capacity(count);
                let budget = count.saturating_mul(200).max(1000);
                let mut attempts = 0;
                let mut i = 0;
                while v.len() < count && attempts < budget {
                    attempts += 1;
                    let gamma = match cap {
                        // Guided draws run out to the cap along their ray, where
                        // divergent infima outside the cone are realized.
                        Some(c) if guide_frame.is_some() && i % 4 == 0 => cap_saturating_gamma(n, k, c, &mut rng),
                        _ => sample_gamma(n, k, &mut rng),
                    };
                    let d = k_hessian_eigs(&gamma, k);
                    if let Some(c) = cap {
                        if d.iter().any(|&a| a > c) {
                            continue;
                        }
                    }
                    let q = frame(&mut rng, i);
                    i += 1;
                    v.push(SymMatrix::from_frame(&q, &d));
                }
                if v.is_empty() {
                    // the symmetric point always fits when the floor check passed
                    let gamma = vec![equal_gamma(n, k); n];
                    v.push(SymMatrix::from_frame(&SquareMatrix::identity(n), &k_hessian_eigs(&gamma, k)));
                }
                v
            }
        };
        if out.is_empty() {
            return Err(Error::EmptySample(format!("cap {cap:?} excludes the whole family")));
        }
        Ok(out)
    }

    /// Closed-form extremizers of `A ↦ tr(AᵗMA)` over the family, used to
    /// make sampled extrema tight. Candidates violating `cap` are dropped.
    pub fn optimizer_candidates(
        &self,
        m: &SymMatrix,
        extremum: Extremum,
        cap: Option<f64>,
    ) -> Result<Vec<SymMatrix>> {
        let n = self.dim;
        if m.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.dim(),
            });
        }
        let eig = eig_ascending(m)?;
        let mut out = Vec::new();
        match &self.kind {
            FamilyKind::Finite(_) => {}
            FamilyKind::PucciBand { theta, big_theta } => {
                let (lo, hi) = (theta.sqrt(), big_theta.sqrt());
                let hi = cap.map_or(hi, |c| c.min(hi));
                for mask in 0..(1usize << n) {
                    let d: Vec<f64> = (0..n).map(|i| if mask & (1 << i) != 0 { hi } else { lo }).collect();
                    out.push(SymMatrix::from_frame(&eig.frame, &d));
                }
            }
            FamilyKind::RankOneSphere => {
                let i = match extremum {
                    Extremum::Inf => 0,
                    Extremum::Sup => n - 1,
                };
                out.push(SymMatrix::outer(&eig.vector(i)));
            }
            FamilyKind::RankOneInSubspace(basis) => {
                out.push(SymMatrix::outer(&subspace_extremizer(basis, m, extremum)?));
            }
            FamilyKind::ProjectionRankK(k) => {
                let d: Vec<f64> = (0..n)
                    .map(|j| match extremum {
                        Extremum::Inf => (j < *k) as u8 as f64,
                        Extremum::Sup => (j >= n - k) as u8 as f64,
                    })
                    .collect();
                out.push(SymMatrix::from_frame(&eig.frame, &d));
            }
            FamilyKind::KHessian(k) => {
                if extremum == Extremum::Inf {
                    if let Some(a) = k_hessian_optimizer(&eig, *k, cap)? {
                        out.push(a);
                    }
                }
            }
        }
        if let Some(c) = cap {
            let mut kept = Vec::with_capacity(out.len());
            for a in out {
                if eig_ascending(&a)?.max() <= c * (1.0 + 1e-12) {
                    kept.push(a);
                }
            }
            out = kept;
        }
        Ok(out)
    }
}

fn combine(basis: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let n = basis[0].len();
    let mut v = vec![0.0; n];
    for (b, c) in basis.iter().zip(w) {
        v.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
    }
    v
}

/// Unit vector of `span(basis)` extremizing `⟨Mv, v⟩`.
fn subspace_extremizer(basis: &[Vec<f64>], m: &SymMatrix, extremum: Extremum) -> Result<Vec<f64>> {
    let d = basis.len();
    let mb: Vec<Vec<f64>> = basis.iter().map(|b| m.mul_vec(b)).collect();
    let restricted = SymMatrix::from_fn(d, |i, j| basis[i].iter().zip(&mb[j]).map(|(a, b)| a * b).sum());
    let eig = eig_ascending(&restricted)?;
    let w = match extremum {
        Extremum::Inf => eig.vector(0),
        Extremum::Sup => eig.vector(d - 1),
    };
    Ok(combine(basis, &w))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// The common value `c` with `σ_k(c, …, c) = 1`.
fn equal_gamma(n: usize, k: usize) -> f64 {
    binomial(n, k).powf(-1.0 / k as f64)
}

/// Smallest possible `λ_n(A)` in the k-Hessian family, attained at equal `γ`.
pub fn k_hessian_min_top(n: usize, k: usize) -> f64 {
    let c = equal_gamma(n, k);
    (binomial(n - 1, k - 1) * c.powi(k as i32 - 1)).sqrt()
}

/// `√σ_{k-1,i}(γ)` for each `i`.
fn k_hessian_eigs(gamma: &[f64], k: usize) -> Vec<f64> {
    (0..gamma.len())
        .map(|i| {
            sigma_km1_i(gamma, k, i)
                .expect("k and i in range")
                .max(0.0)
                .sqrt()
        })
        .collect()
}

/// Draws `γ ∈ Γ_k` normalized to `σ_k(γ) = 1`.
///
/// Half the draws come from the positive orthant (exponentiated Gaussians),
/// half approach `∂Γ_k` along a random ray from the diagonal, where the
/// eigenvalues of the resulting matrices grow without bound.
fn sample_gamma(n: usize, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let gamma: Vec<f64> = if rng.random::<f64>() < 0.5 {
            (0..n)
                .map(|_| (1.5 * rng.sample::<f64, _>(StandardNormal)).exp())
                .collect()
        } else {
            let dir = random_unit_vector(n, rng);
            let center = vec![1.0; n];
            let at = |t: f64| -> Vec<f64> { center.iter().zip(&dir).map(|(c, d)| c + t * d).collect() };
            let mut hi = 1.0;
            while cone_membership(&at(hi), ConeQuery::open(k)) && hi < 1e6 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if cone_membership(&at(mid), ConeQuery::open(k)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let closeness = 10f64.powf(-6.0 * rng.random::<f64>());
            at(lo * (1.0 - closeness))
        };
        if !cone_membership(&gamma, ConeQuery::open(k)) {
            continue;
        }
        let s = sigma_k(&gamma, k).expect("k in range");
        if !(s > 0.0) || !s.is_finite() {
            continue;
        }
        let scale = s.powf(-1.0 / k as f64);
        let g: Vec<f64> = gamma.iter().map(|x| x * scale).collect();
        if g.iter().all(|x| x.is_finite()) {
            return g;
        }
    }
}

/// `γ` on a random ray from the diagonal, as far towards `∂Γ_k` as the cap
/// on the top eigenvalue allows, normalized to `σ_k(γ) = 1`.
fn cap_saturating_gamma(n: usize, k: usize, cap: f64, rng: &mut impl Rng) -> Vec<f64> {
    let dir = random_unit_vector(n, rng);
    let at = |t: f64| -> Vec<f64> { dir.iter().map(|d| 1.0 + t * d).collect() };
    let normalized = |g: Vec<f64>| -> Option<Vec<f64>> {
        let s = sigma_k(&g, k).ok()?;
        if !cone_membership(&g, ConeQuery::open(k)) || !(s > 0.0) {
            return None;
        }
        let scale = s.powf(-1.0 / k as f64);
        let g: Vec<f64> = g.iter().map(|x| x * scale).collect();
        g.iter().all(|x| x.is_finite()).then_some(g)
    };
    let fits = |t: f64| normalized(at(t)).is_some_and(|g| k_hessian_eigs(&g, k).iter().all(|&a| a <= cap));
    let mut hi = 1.0;
    while cone_membership(&at(hi), ConeQuery::open(k)) && hi < 1e6 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    normalized(at(lo)).unwrap_or_else(|| vec![equal_gamma(n, k); n])
}

/// `A = Q diag(√σ_{k-1,i}(γ)) Qᵗ` for `γ ∈ Γ_k` with `σ_k(γ) = 1`.
pub fn khessian_matrix_from_gamma(gamma: &[f64], k: usize, q: &SquareMatrix) -> Result<SymMatrix> {
    let n = gamma.len();
    if q.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q.dim(),
        });
    }
    if k == 0 || k > n {
        return Err(Error::out_of_range("k", k, format!("1..={n}")));
    }
    if !cone_membership(gamma, ConeQuery::open(k)) {
        return Err(Error::NotAdmissible(format!("gamma {gamma:?} not in the open cone Γ_{k}")));
    }
    let s = sigma_k(gamma, k)?;
    if (s - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!("sigma_{k}(gamma) = {s}, expected 1")));
    }
    Ok(SymMatrix::from_frame(q, &k_hessian_eigs(gamma, k)))
}

/// `γ* = σ_k(μ)^{-1/k} μ`, the minimizer of `Σ μ_i σ_{k-1,i}(γ)` over the
/// normalized cone.
pub fn optimal_gamma(mu: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = mu.len();
    if k == 0 || k > n {
        return Err(Error::out_of_range("k", k, format!("1..={n}")));
    }
    let s = sigma_k(mu, k)?;
    if !cone_membership(mu, ConeQuery::open(k)) || s <= 0.0 {
        return Err(Error::NotAdmissible(format!("mu {mu:?} not in the open cone Γ_{k}")));
    }
    let scale = s.powf(-1.0 / k as f64);
    Ok(mu.iter().map(|m| m * scale).collect())
}

/// Exact (or, on the cone boundary, capped) minimizer over the k-Hessian
/// family in the eigenframe of the target.
fn k_hessian_optimizer(eig: &SpectralDecomp, k: usize, cap: Option<f64>) -> Result<Option<SymMatrix>> {
    let n = eig.eigenvalues.len();
    let mu = &eig.eigenvalues;
    if let Ok(g) = optimal_gamma(mu, k) {
        return Ok(Some(SymMatrix::from_frame(&eig.frame, &k_hessian_eigs(&g, k))));
    }
    // Determinant-one family at a singular PSD target: stretch the null
    // directions to the cap.
    if k == n && cone_membership(mu, ConeQuery::closed(n)) {
        if let Some(c) = cap {
            let tol = crate::symmat::cone_tol(mu, 1);
            let null: Vec<bool> = mu.iter().map(|&l| l.abs() <= tol.max(1e-12)).collect();
            let m_null = null.iter().filter(|&&z| z).count();
            if m_null > 0 && m_null < n && c > 1.0 {
                let other = c.powf(-(m_null as f64) / (n - m_null) as f64);
                let d: Vec<f64> = null.iter().map(|&z| if z { c } else { other }).collect();
                return Ok(Some(SymMatrix::from_frame(&eig.frame, &d)));
            }
        }
    }
    Ok(None)
}

impl fmt::Display for MatrixFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FamilyKind::Finite(ms) if ms.len() == 1 && ms[0] == SymMatrix::identity(self.dim) => {
                write!(f, "identity")
            }
            FamilyKind::Finite(ms) => write!(f, "finite:{}", ms.len()),
            FamilyKind::PucciBand { theta, big_theta } => {
                write!(f, "band:theta={theta},Theta={big_theta}")
            }
            FamilyKind::RankOneSphere => write!(f, "rank1"),
            FamilyKind::RankOneInSubspace(b) => write!(f, "rank1-subspace:d={}", b.len()),
            FamilyKind::ProjectionRankK(k) => write!(f, "proj:k={k}"),
            FamilyKind::KHessian(k) if *k == self.dim => write!(f, "detone"),
            FamilyKind::KHessian(k) => write!(f, "khess:k={k}"),
        }
    }
}

impl MatrixFamily {
    /// Parses `band:theta=1,Theta=2`, `khess:k=2`, `detone`, `rank1`,
    /// `proj:k=2` or `identity` for dimension `n`.
    pub fn parse(s: &str, n: usize) -> Result<Self> {
        let (head, kv) = parse_head(s.trim())?;
        let fam = match head {
            "identity" | "laplace" => MatrixFamily::identity(n),
            "band" => MatrixFamily::pucci_band(n, kv.f64("theta")?, kv.f64("Theta")?)?,
            "rank1" => MatrixFamily::rank_one_sphere(n),
            "proj" => MatrixFamily::projection_rank_k(n, kv.usize("k")?)?,
            "khess" => MatrixFamily::k_hessian(n, kv.usize("k")?)?,
            "detone" => MatrixFamily::det_one(n),
            other => return Err(Error::parse(1, 1, format!("unknown family '{other}'"))),
        };
        kv.finish(&["theta", "Theta", "k"])?;
        Ok(fam)
    }
}

/// A set of families `𝔸` for `sup_{𝒜∈𝔸} inf_{A∈𝒜}` operators.
#[derive(Clone, Debug)]
pub enum SupInfSpec {
    ExplicitList(Vec<MatrixFamily>),
    /// Rank-one projectors onto unit vectors of `(n-k+1)`-dimensional subspaces.
    GrassmannLambdaK { k: usize, families: Vec<MatrixFamily> },
}

impl SupInfSpec {
    pub fn explicit(families: Vec<MatrixFamily>) -> Result<Self> {
        if families.is_empty() {
            return Err(Error::InvalidParameter("sup-inf spec needs families".into()));
        }
        let n = families[0].dim();
        for f in &families {
            if f.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: f.dim(),
                });
            }
            if !f.bounded() {
                return Err(Error::InvalidParameter(format!(
                    "inner family {f} is unbounded; the union must be bounded"
                )));
            }
        }
        Ok(SupInfSpec::ExplicitList(families))
    }

    pub fn families(&self) -> &[MatrixFamily] {
        match self {
            SupInfSpec::ExplicitList(f) => f,
            SupInfSpec::GrassmannLambdaK { families, .. } => families,
        }
    }

    pub fn dim(&self) -> usize {
        self.families()[0].dim()
    }

    pub fn max_norm(&self) -> f64 {
        self.families()
            .iter()
            .filter_map(MatrixFamily::max_norm)
            .fold(0.0, f64::max)
    }

    /// For Grassmannians, the optimal subspace for `m`: the span of its top
    /// `n-k+1` eigenvectors.
    pub fn optimal_family(&self, m: &SymMatrix) -> Result<Option<MatrixFamily>> {
        match self {
            SupInfSpec::ExplicitList(_) => Ok(None),
            SupInfSpec::GrassmannLambdaK { k, .. } => {
                let n = m.dim();
                let eig = eig_ascending(m)?;
                let basis = (k - 1..n).map(|i| eig.vector(i)).collect();
                Ok(Some(MatrixFamily::rank_one_in_subspace(n, basis)?))
            }
        }
    }
}

/// Sampled subspaces of dimension `n-k+1` carrying rank-one families, with
/// every coordinate subspace included as an anchor.
pub fn grassmann_family(k: usize, n: usize, subspace_count: usize, seed: u64) -> Result<SupInfSpec> {
    if k == 0 || k > n {
        return Err(Error::out_of_range("k", k, format!("1..={n}")));
    }
    if subspace_count < 1 {
        return Err(Error::InvalidParameter("subspace_count must be >= 1".into()));
    }
    let d = n - k + 1;
    if d == n {
        return Ok(SupInfSpec::GrassmannLambdaK {
            k,
            families: vec![MatrixFamily::rank_one_sphere(n)],
        });
    }
    let mut families = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == d {
            let basis = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect())
                .collect();
            families.push(MatrixFamily::rank_one_in_subspace(n, basis)?);
        }
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..subspace_count {
        let q = random_frame(n, &mut rng);
        let basis = (0..d).map(|j| q.column(j)).collect();
        families.push(MatrixFamily::rank_one_in_subspace(n, basis)?);
    }
    Ok(SupInfSpec::GrassmannLambdaK { k, families })
}

/// `φ(ε)`, the cap on admissible coefficients for unbounded families.
#[derive(Clone)]
pub enum PhiSchedule {
    /// `φ(ε) = ε^{-a}`.
    Power(f64),
    /// A constant cap independent of `ε`.
    Constant(f64),
    Custom {
        label: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl PhiSchedule {
    pub fn power(a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::out_of_range("phi exponent", a, "(0, 1)"));
        }
        Ok(PhiSchedule::Power(a))
    }

    pub fn custom(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        PhiSchedule::Custom {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, eps: f64) -> f64 {
        match self {
            PhiSchedule::Power(a) => eps.powf(-a),
            PhiSchedule::Constant(c) => *c,
            PhiSchedule::Custom { f, .. } => f(eps),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (head, kv) = parse_head(s.trim())?;
        let phi = match head {
            "power" | "pow" => PhiSchedule::power(kv.f64("a")?)?,
            "const" => {
                let c = kv.f64("c")?;
                if !(c > 0.0) {
                    return Err(Error::parse(1, 1, "constant cap must be positive"));
                }
                PhiSchedule::Constant(c)
            }
            other => return Err(Error::parse(1, 1, format!("unknown phi schedule '{other}'"))),
        };
        kv.finish(&["a", "c"])?;
        Ok(phi)
    }
}

impl fmt::Debug for PhiSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for PhiSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiSchedule::Power(a) => write!(f, "power:a={a}"),
            PhiSchedule::Constant(c) => write!(f, "const:c={c}"),
            PhiSchedule::Custom { label, .. } => write!(f, "{label}"),
        }
    }
}

/// Checks `φ → ∞` and `εφ(ε) → 0` along a decreasing probe: `φ` must
/// increase strictly and `εφ` decrease strictly at every step.
pub fn phi_check(s: &PhiSchedule, eps_probe: &[f64]) -> Result<bool> {
    if eps_probe.len() < 2
        || eps_probe.windows(2).any(|w| !(w[1] < w[0]))
        || eps_probe.iter().any(|e| !(*e > 0.0))
        || *eps_probe.last().expect("nonempty") >= 1e-6
    {
        return Err(Error::InvalidParameter(
            "phi probe must be positive, strictly decreasing, and end below 1e-6".into(),
        ));
    }
    let phis: Vec<f64> = eps_probe.iter().map(|&e| s.eval(e)).collect();
    if let Some(bad) = phis.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::InvalidParameter(format!("phi must be positive, got {bad}")));
    }
    let grows = phis.windows(2).all(|w| w[1] > w[0]);
    let products: Vec<f64> = eps_probe.iter().zip(&phis).map(|(e, p)| e * p).collect();
    let shrinks = products.windows(2).all(|w| w[1] < w[0]);
    Ok(grows && shrinks)
}

/// Recovers `γ` from a k-Hessian family member's eigenvalues when possible:
/// for `k = n`, `γ_i = 1/λ_i(A)²`. Used as a consistency oracle.
pub fn gamma_from_det_one(eigs: &[f64]) -> Vec<f64> {
    eigs.iter().map(|a| 1.0 / (a * a)).collect()
}

/// `σ` values of `γ`, exposed for diagnostics.
pub fn gamma_sigmas(gamma: &[f64]) -> Vec<f64> {
    sigma_all(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmat::trace_form;

    #[test]
    fn band_samples_in_band() {
        let f = MatrixFamily::pucci_band(3, 1.0, 4.0).unwrap();
        for a in f.sample(200, 11, None).unwrap() {
            let e = eig_ascending(&a).unwrap();
            assert!(e.min() >= 1.0 - 1e-12 && e.max() <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn rank_one_samples_are_projectors() {
        let f = MatrixFamily::rank_one_sphere(2);
        for a in f.sample(50, 3, None).unwrap() {
            assert!((a.trace() - 1.0).abs() < 1e-12);
            let a2 = SymMatrix::symmetrize(&a.to_dense().matmul(&a.to_dense()));
            assert!(a2.sub(&a).max_abs() < 1e-12);
        }
    }

    #[test]
    fn khessian_samples_reconstruct_gamma() {
        let f = MatrixFamily::k_hessian(3, 2).unwrap();
        for a in f.sample(100, 5, Some(50.0)).unwrap() {
            let e = eig_ascending(&a).unwrap();
            assert!(e.max() <= 50.0 * (1.0 + 1e-12));
            // squares of eigenvalues are σ_{1,i}(γ) = s - γ_i with s = σ_1(γ),
            // so γ_i = s - λ_i², and Σ λ_i² = 2s.
            let sq: Vec<f64> = e.eigenvalues.iter().map(|l| l * l).collect();
            let s = sq.iter().sum::<f64>() / 2.0;
            let gamma: Vec<f64> = sq.iter().map(|l| s - l).collect();
            assert!(cone_membership(&gamma, ConeQuery::closed(2)));
            let s2 = sigma_k(&gamma, 2).unwrap();
            assert!((s2 - 1.0).abs() < 1e-6 * (1.0 + s * s), "σ_2 = {s2}");
        }
    }

    #[test]
    fn khessian_cap_too_small() {
        let f = MatrixFamily::det_one(2);
        assert!(matches!(f.sample(10, 1, Some(0.9)), Err(Error::EmptySample(_))));
        let f = MatrixFamily::k_hessian(3, 2).unwrap();
        // equal γ gives λ² = 2/√3
        let floor = (2.0 / 3f64.sqrt()).sqrt();
        assert!((k_hessian_min_top(3, 2) - floor).abs() < 1e-12);
        assert!(f.sample(10, 1, Some(floor * 0.99)).is_err());
    }

    #[test]
    fn finite_cap_filters() {
        let f = MatrixFamily::finite(vec![SymMatrix::identity(2), SymMatrix::diag(&[2.0, 1.0])]).unwrap();
        assert_eq!(f.sample(1, 0, Some(1.5)).unwrap().len(), 1);
        assert!(matches!(f.sample(1, 0, Some(0.5)), Err(Error::EmptySample(_))));
        assert!(MatrixFamily::finite(vec![SymMatrix::diag(&[1.0, -1.0])]).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let f = MatrixFamily::k_hessian(3, 2).unwrap();
        let a = f.sample(20, 42, Some(10.0)).unwrap();
        let b = f.sample(20, 42, Some(10.0)).unwrap();
        assert_eq!(a, b);
        let c = f.sample(20, 43, Some(10.0)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gamma_from_all_ones_is_identity() {
        let a = khessian_matrix_from_gamma(&[1.0, 1.0, 1.0], 3, &SquareMatrix::identity(3)).unwrap();
        assert!(a.sub(&SymMatrix::identity(3)).max_abs() < 1e-15);
    }

    #[test]
    fn optimal_gamma_examples() {
        let g = optimal_gamma(&[1.0, 1.0, 1.0], 2).unwrap();
        for x in &g {
            assert!((x - 3f64.powf(-0.5)).abs() < 1e-15);
        }
        let a = khessian_matrix_from_gamma(&g, 2, &SquareMatrix::identity(3)).unwrap();
        let e = eig_ascending(&a).unwrap();
        for l in &e.eigenvalues {
            assert!((l * l - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        }
        let tf = trace_form(&a, &SymMatrix::identity(3)).unwrap();
        assert!((tf - 2.0 * 3f64.sqrt()).abs() < 1e-12);

        let g = optimal_gamma(&[1.0, 2.0], 2).unwrap();
        let r = 2f64.sqrt();
        assert!((g[0] - 1.0 / r).abs() < 1e-15 && (g[1] - 2.0 / r).abs() < 1e-15);
        let a = khessian_matrix_from_gamma(&g, 2, &SquareMatrix::identity(2)).unwrap();
        let tf = trace_form(&a, &SymMatrix::diag(&[1.0, 2.0])).unwrap();
        assert!((tf - 2.0 * r).abs() < 1e-12);

        assert!(optimal_gamma(&[1.0, -2.0], 2).is_err());
        assert!(khessian_matrix_from_gamma(&[1.0, 2.0], 2, &SquareMatrix::identity(2)).is_err());
    }

    #[test]
    fn det_one_product_identity() {
        let gamma = [0.5, 4.0, 0.5];
        let a = khessian_matrix_from_gamma(&gamma, 3, &SquareMatrix::identity(3)).unwrap();
        let det = a.det().unwrap();
        assert!((det * det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phi_check_examples() {
        let probe: Vec<f64> = (1..=8).map(|i| 10f64.powi(-i)).collect();
        assert!(phi_check(&PhiSchedule::power(0.5).unwrap(), &probe).unwrap());
        assert!(!phi_check(&PhiSchedule::custom("1/eps", |e| 1.0 / e), &probe).unwrap());
        assert!(phi_check(&PhiSchedule::custom("log", |e: f64| (1.0 / e).ln()), &probe).unwrap());
        assert!(phi_check(&PhiSchedule::custom("neg", |_| -1.0), &probe).is_err());
        assert!(phi_check(&PhiSchedule::power(0.5).unwrap(), &[0.1, 0.2]).is_err());
        assert!(PhiSchedule::power(1.0).is_err());
    }

    #[test]
    fn grassmann_examples() {
        let s = grassmann_family(1, 3, 8, 0).unwrap();
        assert_eq!(s.families().len(), 1);
        assert!(matches!(s.families()[0].kind(), FamilyKind::RankOneSphere));

        let s = grassmann_family(3, 3, 4, 0).unwrap();
        for f in s.families() {
            let a = f.sample(3, 1, None).unwrap();
            // a line: every sample is the same projector
            assert!(a[0].sub(&a[1]).max_abs() < 1e-12);
        }

        let s = grassmann_family(2, 3, 16, 9).unwrap();
        assert_eq!(s.families().len(), 3 + 16);
        for f in s.families() {
            let FamilyKind::RankOneInSubspace(basis) = f.kind() else { panic!() };
            assert_eq!(basis.len(), 2);
            let p = SymMatrix::outer(&basis[0]).add(&SymMatrix::outer(&basis[1]));
            for a in f.sample(5, 2, None).unwrap() {
                // range of A lies in the plane: P A = A
                let pa = p.to_dense().matmul(&a.to_dense());
                assert!(SymMatrix::symmetrize(&pa).sub(&a).max_abs() < 1e-12);
            }
        }
        assert!(grassmann_family(2, 3, 0, 0).is_err());
    }

    #[test]
    fn text_forms() {
        for s in ["band:theta=1,Theta=2", "khess:k=2", "rank1", "proj:k=2", "identity", "detone"] {
            let f = MatrixFamily::parse(s, 3).unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!(MatrixFamily::parse("band:theta=1", 3).is_err());
        assert!(MatrixFamily::parse("proj:k=4", 3).is_err());
    }

    #[test]
    fn boundedness_flags() {
        assert!(MatrixFamily::rank_one_sphere(2).bounded());
        assert!(MatrixFamily::projection_rank_k(3, 2).unwrap().bounded());
        assert!(!MatrixFamily::det_one(2).bounded());
        assert!(!MatrixFamily::k_hessian(3, 2).unwrap().bounded());
    }
}
