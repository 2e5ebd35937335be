//! Closed-form evaluators `F(M)` for the operators realized by mean value
//! formulas: Pucci extremals, eigenvalues, truncated Laplacians, k-Hessians,
//! Monge–Ampère, and the Isaacs rewriting of a uniformly elliptic operator.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::symmat::{
    cone_membership, cone_tol, eig_ascending, sigma_k, ConeQuery, SpectralDecomp, SymMatrix,
};
use crate::textform::{parse_head, KeyValues};

/// An operator value, with `-∞` kept as a distinguished symbol rather than a
/// floating infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OperatorValue {
    Finite(f64),
    MinusInfinity,
}

impl OperatorValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            OperatorValue::Finite(v) => Some(v),
            OperatorValue::MinusInfinity => None,
        }
    }

    pub fn is_minus_infinity(self) -> bool {
        matches!(self, OperatorValue::MinusInfinity)
    }

    /// Order with `-∞` as the bottom element.
    pub fn le(self, other: OperatorValue) -> bool {
        match (self, other) {
            (OperatorValue::MinusInfinity, _) => true,
            (OperatorValue::Finite(_), OperatorValue::MinusInfinity) => false,
            (OperatorValue::Finite(a), OperatorValue::Finite(b)) => a <= b,
        }
    }
}

impl fmt::Display for OperatorValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorValue::Finite(v) => write!(f, "{v}"),
            OperatorValue::MinusInfinity => write!(f, "-inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Minus,
    Plus,
}

pub(crate) fn check_ellipticity(theta: f64, big_theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= big_theta && big_theta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "ellipticity constants need 0 < theta <= Theta, got theta={theta}, Theta={big_theta}"
        )));
    }
    Ok(())
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::out_of_range("k", k, format!("1..={n}")));
    }
    Ok(())
}

fn pucci_from_spectrum(eigs: &[f64], theta: f64, big_theta: f64, sign: Sign) -> f64 {
    let (wpos, wneg) = match sign {
        Sign::Minus => (theta, big_theta),
        Sign::Plus => (big_theta, theta),
    };
    eigs.iter()
        .map(|&l| if l > 0.0 { wpos * l } else { wneg * l })
        .sum()
}

/// Pucci extremal operators `M⁻_{θ,Θ}` (`Sign::Minus`) and `M⁺_{θ,Θ}`.
pub fn pucci_extremal(m: &SymMatrix, theta: f64, big_theta: f64, sign: Sign) -> Result<f64> {
    check_ellipticity(theta, big_theta)?;
    let eig = eig_ascending(m)?;
    Ok(pucci_from_spectrum(&eig.eigenvalues, theta, big_theta, sign))
}

/// The coefficient matrix attaining the Pucci extremum over the band
/// `√θ I ≤ A ≤ √Θ I`: in the eigenframe of `M`, `√Θ` on negative
/// directions and `√θ` on the rest for `Minus`, mirrored for `Plus`.
pub fn pucci_optimizer(eig: &SpectralDecomp, theta: f64, big_theta: f64, sign: Sign) -> SymMatrix {
    let (lo, hi) = (theta.sqrt(), big_theta.sqrt());
    let d: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| match (sign, l < 0.0) {
            (Sign::Minus, true) | (Sign::Plus, false) => hi,
            _ => lo,
        })
        .collect();
    SymMatrix::from_frame(&eig.frame, &d)
}

/// `λ_k(M)`, the k-th smallest eigenvalue (`k` is one-based).
pub fn lambda_k_value(m: &SymMatrix, k: usize) -> Result<f64> {
    check_k(k, m.dim())?;
    Ok(eig_ascending(m)?.eigenvalues[k - 1])
}

/// `P⁻_k` (sum of the `k` smallest eigenvalues) or `P⁺_k` (the `k` largest).
pub fn truncated_laplacian_value(m: &SymMatrix, k: usize, sign: Sign) -> Result<f64> {
    let n = m.dim();
    check_k(k, n)?;
    let eigs = eig_ascending(m)?.eigenvalues;
    Ok(match sign {
        Sign::Minus => eigs[..k].iter().sum(),
        Sign::Plus => eigs[n - k..].iter().sum(),
    })
}

/// `F_k(M) = k σ_k(λ(M))^{1/k}` on the closed cone `Γ̄_k`, `-∞` outside.
/// Exactly zero on `∂Γ_k`.
pub fn k_hessian_value(m: &SymMatrix, k: usize) -> Result<OperatorValue> {
    check_k(k, m.dim())?;
    let eigs = eig_ascending(m)?.eigenvalues;
    Ok(k_hessian_from_spectrum(&eigs, k))
}

pub(crate) fn k_hessian_from_spectrum(eigs: &[f64], k: usize) -> OperatorValue {
    if !cone_membership(eigs, ConeQuery::closed(k)) {
        return OperatorValue::MinusInfinity;
    }
    if cone_membership(eigs, ConeQuery::boundary(k)) {
        return OperatorValue::Finite(0.0);
    }
    let s = sigma_k(eigs, k).expect("k checked by caller");
    OperatorValue::Finite(k as f64 * s.max(0.0).powf(1.0 / k as f64))
}

/// `n det(M)^{1/n}` when `M ≥ 0`, `-∞` otherwise. Computed from the
/// eigenvalues directly rather than through `σ_n`.
pub fn monge_ampere_value(m: &SymMatrix) -> Result<OperatorValue> {
    let n = m.dim();
    let eigs = eig_ascending(m)?.eigenvalues;
    let tol = cone_tol(&eigs, 1);
    if eigs[0] < -tol {
        return Ok(OperatorValue::MinusInfinity);
    }
    let det: f64 = eigs.iter().map(|l| l.max(0.0)).product();
    if det.abs() <= cone_tol(&eigs, n) {
        return Ok(OperatorValue::Finite(0.0));
    }
    Ok(OperatorValue::Finite(n as f64 * det.powf(1.0 / n as f64)))
}

/// A shareable handle to a finite-valued operator `F(N)`.
#[derive(Clone)]
pub struct OperatorHandle {
    label: String,
    f: Arc<dyn Fn(&SymMatrix) -> f64 + Send + Sync>,
}

impl OperatorHandle {
    pub fn new(label: impl Into<String>, f: impl Fn(&SymMatrix) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, m: &SymMatrix) -> f64 {
        (self.f)(m)
    }

    /// Handle backed by a closed-form operator. Operators that can take the
    /// value `-∞` are rejected since they are not uniformly elliptic.
    pub fn from_spec(spec: OperatorSpec) -> Result<Self> {
        if matches!(spec, OperatorSpec::KHessian(_) | OperatorSpec::MongeAmpere) {
            return Err(Error::InvalidParameter(format!(
                "{spec} is not finite-valued and cannot be wrapped"
            )));
        }
        let label = spec.to_string();
        Ok(Self::new(label, move |m| {
            spec.evaluate(m)
                .ok()
                .and_then(OperatorValue::finite)
                .unwrap_or(f64::NAN)
        }))
    }
}

impl fmt::Debug for OperatorHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OperatorHandle({})", self.label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridRadius {
    Absolute(f64),
    /// Multiple of the spectral norm of the evaluation point `M`.
    RelativeToM(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridBasis {
    /// Matrices sharing the eigenframe of `M`, plus the identity ray.
    DiagonalInFrame,
    /// Every entry of the upper triangle on the grid.
    FullSymmetric,
}

/// Discretization of the infimum over all symmetric `N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NGridSpec {
    pub radius: GridRadius,
    pub resolution: usize,
    pub basis: GridBasis,
}

const MAX_GRID_POINTS: usize = 2_000_000;

impl NGridSpec {
    pub fn new(radius: GridRadius, resolution: usize, basis: GridBasis) -> Result<Self> {
        let r = match radius {
            GridRadius::Absolute(r) | GridRadius::RelativeToM(r) => r,
        };
        if !(r > 0.0) || resolution < 2 {
            return Err(Error::InvalidParameter(format!(
                "N-grid needs R > 0 and m >= 2, got R={r}, m={resolution}"
            )));
        }
        Ok(Self {
            radius,
            resolution,
            basis,
        })
    }

    fn axis(&self, r: f64) -> Vec<f64> {
        let m = self.resolution;
        (0..m)
            .map(|i| -r + 2.0 * r * i as f64 / (m - 1) as f64)
            .collect()
    }

    pub fn absolute_radius(&self, m: &SymMatrix) -> Result<f64> {
        Ok(match self.radius {
            GridRadius::Absolute(r) => r,
            GridRadius::RelativeToM(f) => {
                let eig = eig_ascending(m)?;
                let norm = eig.min().abs().max(eig.max().abs());
                f * norm.max(1e-12)
            }
        })
    }

    /// Spacing between neighbouring grid values along one axis.
    pub fn spacing(&self, m: &SymMatrix) -> Result<f64> {
        Ok(2.0 * self.absolute_radius(m)? / (self.resolution - 1) as f64)
    }

    /// The candidate matrices `N` for the evaluation point `M`.
    pub fn points(&self, m: &SymMatrix) -> Result<Vec<SymMatrix>> {
        let n = m.dim();
        let r = self.absolute_radius(m)?;
        let axis = self.axis(r);
        let dims = match self.basis {
            GridBasis::DiagonalInFrame => n,
            GridBasis::FullSymmetric => n * (n + 1) / 2,
        };
        let total = (axis.len() as f64).powi(dims as i32);
        if total > MAX_GRID_POINTS as f64 {
            return Err(Error::InvalidParameter(format!(
                "N-grid with {total} points exceeds the limit {MAX_GRID_POINTS}"
            )));
        }
        let mut out = Vec::with_capacity(total as usize + axis.len());
        let mut idx = vec![0usize; dims];
        let frame = match self.basis {
            GridBasis::DiagonalInFrame => Some(eig_ascending(m)?.frame),
            GridBasis::FullSymmetric => None,
        };
        loop {
            let coords: Vec<f64> = idx.iter().map(|&i| axis[i]).collect();
            out.push(match &frame {
                Some(q) => SymMatrix::from_frame(q, &coords),
                None => SymMatrix::from_upper(n, coords)?,
            });
            let mut d = 0;
            while d < dims {
                idx[d] += 1;
                if idx[d] < axis.len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == dims {
                break;
            }
        }
        if self.basis == GridBasis::DiagonalInFrame {
            out.extend(axis.iter().map(|&t| SymMatrix::scaled_identity(n, t)));
        }
        Ok(out)
    }
}

/// `min_N [F(N) + M⁺_{θ,Θ}(M − N)]` over the grid. The inner supremum over
/// the band `√θ I ≤ A ≤ √Θ I` of `tr(Aᵗ(M−N)A)` is the Pucci maximal
/// operator, so only `N` is discretized.
pub fn isaacs_wrap_value(
    base: &OperatorHandle,
    m: &SymMatrix,
    theta: f64,
    big_theta: f64,
    grid: &NGridSpec,
) -> Result<f64> {
    Ok(isaacs_wrap_argmin(base, m, theta, big_theta, grid)?.0)
}

/// As [`isaacs_wrap_value`], also returning the minimizing `N`.
pub fn isaacs_wrap_argmin(
    base: &OperatorHandle,
    m: &SymMatrix,
    theta: f64,
    big_theta: f64,
    grid: &NGridSpec,
) -> Result<(f64, SymMatrix)> {
    check_ellipticity(theta, big_theta)?;
    let points = grid.points(m)?;
    let mut best: Option<(f64, SymMatrix)> = None;
    for nmat in points {
        let fval = base.eval(&nmat);
        if !fval.is_finite() {
            return Err(Error::NonFinite(format!(
                "base operator {} at N={nmat:?}",
                base.label()
            )));
        }
        let v = fval + pucci_extremal(&m.sub(&nmat), theta, big_theta, Sign::Plus)?;
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, nmat));
        }
    }
    best.ok_or_else(|| Error::EmptySample("N-grid is empty".into()))
}

/// Which closed-form operator is meant.
#[derive(Clone, Debug)]
pub enum OperatorSpec {
    Laplacian,
    PucciMinus { theta: f64, big_theta: f64 },
    PucciPlus { theta: f64, big_theta: f64 },
    LambdaK(usize),
    TruncMinus(usize),
    TruncPlus(usize),
    KHessian(usize),
    MongeAmpere,
    IsaacsWrapped {
        base: OperatorHandle,
        theta: f64,
        big_theta: f64,
        grid: NGridSpec,
    },
}

impl OperatorSpec {
    pub fn evaluate(&self, m: &SymMatrix) -> Result<OperatorValue> {
        use OperatorValue::Finite;
        Ok(match self {
            OperatorSpec::Laplacian => Finite(m.trace()),
            OperatorSpec::PucciMinus { theta, big_theta } => {
                Finite(pucci_extremal(m, *theta, *big_theta, Sign::Minus)?)
            }
            OperatorSpec::PucciPlus { theta, big_theta } => {
                Finite(pucci_extremal(m, *theta, *big_theta, Sign::Plus)?)
            }
            OperatorSpec::LambdaK(k) => Finite(lambda_k_value(m, *k)?),
            OperatorSpec::TruncMinus(k) => Finite(truncated_laplacian_value(m, *k, Sign::Minus)?),
            OperatorSpec::TruncPlus(k) => Finite(truncated_laplacian_value(m, *k, Sign::Plus)?),
            OperatorSpec::KHessian(k) => k_hessian_value(m, *k)?,
            OperatorSpec::MongeAmpere => monge_ampere_value(m)?,
            OperatorSpec::IsaacsWrapped {
                base,
                theta,
                big_theta,
                grid,
            } => Finite(isaacs_wrap_value(base, m, *theta, *big_theta, grid)?),
        })
    }

    /// Validates the parameters against the dimension `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            OperatorSpec::PucciMinus { theta, big_theta }
            | OperatorSpec::PucciPlus { theta, big_theta }
            | OperatorSpec::IsaacsWrapped {
                theta, big_theta, ..
            } => check_ellipticity(*theta, *big_theta),
            OperatorSpec::LambdaK(k)
            | OperatorSpec::TruncMinus(k)
            | OperatorSpec::TruncPlus(k)
            | OperatorSpec::KHessian(k) => check_k(*k, n),
            OperatorSpec::Laplacian | OperatorSpec::MongeAmpere => Ok(()),
        }
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorSpec::Laplacian => write!(f, "laplacian"),
            OperatorSpec::PucciMinus { theta, big_theta } => {
                write!(f, "pucci-:theta={theta},Theta={big_theta}")
            }
            OperatorSpec::PucciPlus { theta, big_theta } => {
                write!(f, "pucci+:theta={theta},Theta={big_theta}")
            }
            OperatorSpec::LambdaK(k) => write!(f, "lambda:k={k}"),
            OperatorSpec::TruncMinus(k) => write!(f, "trunc-:k={k}"),
            OperatorSpec::TruncPlus(k) => write!(f, "trunc+:k={k}"),
            OperatorSpec::KHessian(k) => write!(f, "khessian:k={k}"),
            OperatorSpec::MongeAmpere => write!(f, "ma"),
            OperatorSpec::IsaacsWrapped {
                base,
                theta,
                big_theta,
                grid,
            } => {
                write!(f, "isaacs:theta={theta},Theta={big_theta},")?;
                match grid.radius {
                    GridRadius::Absolute(r) => write!(f, "R={r},")?,
                    GridRadius::RelativeToM(r) => write!(f, "Rrel={r},")?,
                }
                let basis = match grid.basis {
                    GridBasis::DiagonalInFrame => "diag",
                    GridBasis::FullSymmetric => "full",
                };
                write!(f, "m={},basis={basis}|{}", grid.resolution, base.label())
            }
        }
    }
}

impl FromStr for OperatorSpec {
    type Err = Error;

    /// Canonical text forms such as `pucci-:theta=1,Theta=2`, `khessian:k=2`,
    /// `lambda:k=1`, `ma`, `trunc+:k=2`, and
    /// `isaacs:theta=1,Theta=2,Rrel=2,m=33,basis=diag|pucci-:theta=1,Theta=2`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("isaacs") {
            let (params, base) = rest.split_once('|').ok_or_else(|| {
                Error::parse(1, 1, "isaacs operator needs '|<base operator>'")
            })?;
            let params = params.strip_prefix(':').unwrap_or(params);
            let kv = KeyValues::parse(params)?;
            let theta = kv.f64("theta")?;
            let big_theta = kv.f64("Theta")?;
            let radius = match (kv.opt_f64("R")?, kv.opt_f64("Rrel")?) {
                (Some(r), None) => GridRadius::Absolute(r),
                (None, Some(r)) => GridRadius::RelativeToM(r),
                (None, None) => GridRadius::RelativeToM(2.0),
                (Some(_), Some(_)) => {
                    return Err(Error::parse(1, 1, "give only one of R and Rrel"))
                }
            };
            let resolution = kv.opt_usize("m")?.unwrap_or(33);
            let basis = match kv.opt_str("basis").unwrap_or("diag") {
                "diag" => GridBasis::DiagonalInFrame,
                "full" => GridBasis::FullSymmetric,
                other => return Err(Error::parse(1, 1, format!("unknown N-grid basis '{other}'"))),
            };
            kv.finish(&["theta", "Theta", "R", "Rrel", "m", "basis"])?;
            let base = OperatorHandle::from_spec(base.parse()?)?;
            let grid = NGridSpec::new(radius, resolution, basis)?;
            check_ellipticity(theta, big_theta)?;
            return Ok(OperatorSpec::IsaacsWrapped {
                base,
                theta,
                big_theta,
                grid,
            });
        }
        let (head, kv) = parse_head(s)?;
        let spec = match head {
            "laplacian" | "laplace" => OperatorSpec::Laplacian,
            "pucci-" | "pucci+" => {
                let theta = kv.f64("theta")?;
                let big_theta = kv.f64("Theta")?;
                check_ellipticity(theta, big_theta)?;
                if head == "pucci-" {
                    OperatorSpec::PucciMinus { theta, big_theta }
                } else {
                    OperatorSpec::PucciPlus { theta, big_theta }
                }
            }
            "lambda" => OperatorSpec::LambdaK(kv.usize("k")?),
            "trunc-" => OperatorSpec::TruncMinus(kv.usize("k")?),
            "trunc+" => OperatorSpec::TruncPlus(kv.usize("k")?),
            "khessian" => OperatorSpec::KHessian(kv.usize("k")?),
            "ma" => OperatorSpec::MongeAmpere,
            other => return Err(Error::parse(1, 1, format!("unknown operator '{other}'"))),
        };
        kv.finish(&["theta", "Theta", "k"])?;
        Ok(spec)
    }
}
