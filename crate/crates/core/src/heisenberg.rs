//! The Heisenberg group `ℍ = ℝ³` with `(x,y,z)*(x',y',z') =
//! (x+x', y+y', z+z'+½(xy'−yx'))`, the Korányi gauge, and mean value
//! formulas for horizontal averages.
//!
//! A horizontal average at `q` is a Euclidean disc average of
//! `w(a,b) = v(q*(a,b,0))`. The map `(a,b) ↦ q*(a,b,0)` is affine, and the
//! Euclidean Hessian of `w` at the origin is the symmetrized horizontal
//! Hessian of `v` at `q`, so the Euclidean expansion machinery applies to
//! `w` unchanged.

use std::fmt;
use std::ops::Mul;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::expansion::{
    assess, verify_expansion_with_target, Coefficients, DeltaRecord, ExpansionReport, MeanValueConfig,
};
use crate::families::{rng_from_seed, MatrixFamily};
use crate::operators::OperatorValue;
use crate::quadrature::{ball_average, spectral_norm, QuadRule, ScalarField};
use crate::symmat::{eig_ascending, SquareMatrix, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl HPoint {
    pub const IDENTITY: HPoint = HPoint { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn inv(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }

    /// `ρ_λ(x,y,z) = (λx, λy, λ²z)`.
    pub fn dilate(self, lambda: f64) -> Self {
        Self::new(lambda * self.x, lambda * self.y, lambda * lambda * self.z)
    }

    /// Korányi gauge `((x²+y²)² + 16z²)^{1/4}`.
    pub fn gauge(self) -> f64 {
        let r2 = self.x * self.x + self.y * self.y;
        (r2 * r2 + 16.0 * self.z * self.z).sqrt().sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Mul for HPoint {
    type Output = HPoint;

    fn mul(self, o: HPoint) -> HPoint {
        HPoint::new(
            self.x + o.x,
            self.y + o.y,
            self.z + o.z + 0.5 * (self.x * o.y - self.y * o.x),
        )
    }
}

impl fmt::Display for HPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

pub fn group_mul(p: HPoint, q: HPoint) -> HPoint {
    p * q
}

pub fn group_inv(q: HPoint) -> HPoint {
    q.inv()
}

pub fn koranyi_gauge(q: HPoint) -> f64 {
    q.gauge()
}

/// `d(p, q) = |p⁻¹ * q|_K`.
pub fn koranyi_dist(p: HPoint, q: HPoint) -> f64 {
    (p.inv() * q).gauge()
}

/// First and second derivatives along `X = ∂_x − (y/2)∂_z`,
/// `Y = ∂_y + (x/2)∂_z`. `xy` is `X(Yv)`, `yx` is `Y(Xv)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct HDerivatives {
    pub x: f64,
    pub y: f64,
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
    pub yx: f64,
}

impl HDerivatives {
    /// `[[X²v, XYv], [YXv, Y²v]]`.
    pub fn hessian(&self) -> SquareMatrix {
        SquareMatrix::from_rows(&[vec![self.xx, self.xy], vec![self.yx, self.yy]]).expect("2x2")
    }

    /// `½(∇²_ℍ v + (∇²_ℍ v)ᵗ)`.
    pub fn symmetric_hessian(&self) -> SymMatrix {
        SymMatrix::from_rows(&[
            vec![self.xx, 0.5 * (self.xy + self.yx)],
            vec![0.5 * (self.xy + self.yx), self.yy],
        ])
        .expect("2x2")
    }

    pub fn sublaplacian(&self) -> f64 {
        self.xx + self.yy
    }
}

type HEval = Arc<dyn Fn(&HPoint) -> f64 + Send + Sync>;
type HDerivs = Arc<dyn Fn(&HPoint) -> HDerivatives + Send + Sync>;

/// Step of the vector-field finite differences.
const FD_STEP: f64 = 1e-4;

#[derive(Clone)]
pub struct HScalarField {
    label: String,
    v: HEval,
    derivs: Option<HDerivs>,
    domain: Option<([f64; 3], [f64; 3])>,
}

impl fmt::Debug for HScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HScalarField")
            .field("label", &self.label)
            .field("analytic", &self.derivs.is_some())
            .field("domain", &self.domain)
            .finish()
    }
}

impl HScalarField {
    pub fn new(label: impl Into<String>, v: impl Fn(&HPoint) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            v: Arc::new(v),
            derivs: None,
            domain: None,
        }
    }

    pub fn with_derivatives(mut self, d: impl Fn(&HPoint) -> HDerivatives + Send + Sync + 'static) -> Self {
        self.derivs = Some(Arc::new(d));
        self
    }

    pub fn with_domain(mut self, lo: [f64; 3], hi: [f64; 3]) -> Result<Self> {
        if (0..3).any(|i| !(lo[i] < hi[i])) {
            return Err(Error::InvalidParameter(format!("empty domain box {lo:?}..{hi:?}")));
        }
        self.domain = Some((lo, hi));
        Ok(self)
    }

    /// A field given in Euclidean coordinates `(x1, x2, x3) = (x, y, z)`;
    /// horizontal derivatives follow from its gradient and Hessian by the
    /// chain rule.
    pub fn from_euclidean(u: ScalarField) -> Result<Self> {
        if u.dim() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: u.dim(),
            });
        }
        let (lo, hi) = {
            let (l, h) = u.domain();
            (l.to_vec(), h.to_vec())
        };
        let eval_u = u.clone();
        let mut out = Self::new(u.label().to_string(), move |q| eval_u.eval(&q.to_array()));
        if u.has_gradient() && u.has_hessian() {
            out = out.with_derivatives(move |q| {
                let p = q.to_array();
                let g = u.gradient(&p);
                let h = u.hessian(&p);
                let (x, y) = (q.x, q.y);
                // X = ∂x − (y/2)∂z, Y = ∂y + (x/2)∂z.
                let common = h.get(0, 1) + 0.5 * x * h.get(0, 2) - 0.5 * y * h.get(1, 2) - 0.25 * x * y * h.get(2, 2);
                HDerivatives {
                    x: g[0] - 0.5 * y * g[2],
                    y: g[1] + 0.5 * x * g[2],
                    xx: h.get(0, 0) - y * h.get(0, 2) + 0.25 * y * y * h.get(2, 2),
                    yy: h.get(1, 1) + x * h.get(1, 2) + 0.25 * x * x * h.get(2, 2),
                    xy: common + 0.5 * g[2],
                    yx: common - 0.5 * g[2],
                }
            });
        }
        if lo.iter().chain(&hi).all(|v| v.is_finite()) {
            out = out.with_domain([lo[0], lo[1], lo[2]], [hi[0], hi[1], hi[2]])?;
        }
        Ok(out)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, q: &HPoint) -> f64 {
        (self.v)(q)
    }

    pub fn contains(&self, q: &HPoint) -> bool {
        match &self.domain {
            None => true,
            Some((lo, hi)) => {
                let p = q.to_array();
                (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i])
            }
        }
    }

    pub fn has_derivatives(&self) -> bool {
        self.derivs.is_some()
    }

    /// Horizontal derivatives by differencing `v` along left translations.
    pub fn fd_derivatives(&self, q: &HPoint) -> HDerivatives {
        let h = FD_STEP;
        let v = |a: f64, b: f64| self.eval(&(*q * HPoint::new(a, 0.0, 0.0) * HPoint::new(0.0, b, 0.0)));
        let w = |a: f64, b: f64| self.eval(&(*q * HPoint::new(0.0, b, 0.0) * HPoint::new(a, 0.0, 0.0)));
        let c = self.eval(q);
        HDerivatives {
            x: (v(h, 0.0) - v(-h, 0.0)) / (2.0 * h),
            y: (v(0.0, h) - v(0.0, -h)) / (2.0 * h),
            xx: (v(h, 0.0) - 2.0 * c + v(-h, 0.0)) / (h * h),
            yy: (v(0.0, h) - 2.0 * c + v(0.0, -h)) / (h * h),
            xy: (v(h, h) - v(h, -h) - v(-h, h) + v(-h, -h)) / (4.0 * h * h),
            yx: (w(h, h) - w(h, -h) - w(-h, h) + w(-h, -h)) / (4.0 * h * h),
        }
    }

    /// Analytic derivatives when supplied, finite differences otherwise.
    pub fn derivatives(&self, q: &HPoint) -> HDerivatives {
        match &self.derivs {
            Some(d) => d(q),
            None => self.fd_derivatives(q),
        }
    }

    /// Compares analytic derivatives with finite differences at ten
    /// seeded points of the domain (or of `[-1,1]³`).
    pub fn check_derivatives(&self, seed: u64) -> Result<()> {
        let Some(d) = &self.derivs else {
            return Ok(());
        };
        let (lo, hi) = self.domain.unwrap_or(([-1.0; 3], [1.0; 3]));
        let mut rng = rng_from_seed(seed);
        for _ in 0..10 {
            let p: Vec<f64> = (0..3)
                .map(|i| {
                    let (a, b) = (lo[i], hi[i]);
                    let m = 0.1 * (b - a);
                    rng.random_range(a + m..b - m)
                })
                .collect();
            let q = HPoint::new(p[0], p[1], p[2]);
            let exact = d(&q);
            let fd = self.fd_derivatives(&q);
            let pairs = [
                ("X", exact.x, fd.x),
                ("Y", exact.y, fd.y),
                ("XX", exact.xx, fd.xx),
                ("YY", exact.yy, fd.yy),
                ("XY", exact.xy, fd.xy),
                ("YX", exact.yx, fd.yx),
            ];
            for (name, e, f) in pairs {
                if (e - f).abs() > 1e-5 * (1.0 + e.abs()) {
                    return Err(Error::InvalidParameter(format!(
                        "{name}v of {} at {q}: analytic {e} vs finite difference {f}",
                        self.label
                    )));
                }
            }
        }
        Ok(())
    }

    /// Errors unless every `q*(a,b,0)` with `|(a,b)| ≤ r` lies in the domain.
    fn check_reach(&self, q: &HPoint, eps: f64, r: f64) -> Result<()> {
        let Some((lo, hi)) = &self.domain else {
            return Ok(());
        };
        let dz = 0.5 * r * q.x.hypot(q.y);
        let corners = [
            HPoint::new(q.x - r, q.y - r, q.z - dz),
            HPoint::new(q.x + r, q.y + r, q.z + dz),
        ];
        for c in corners {
            let p = c.to_array();
            if (0..3).any(|i| p[i] < lo[i] || p[i] > hi[i]) {
                return Err(Error::LocalityViolation {
                    eps,
                    norm_a: r / eps,
                    offset: 0.0,
                    probe: p.to_vec(),
                });
            }
        }
        Ok(())
    }

    /// `w(a,b) = v(q*(a,b,0))` as a Euclidean field whose derivatives at the
    /// origin are the horizontal ones.
    fn translated(&self, q: HPoint) -> ScalarField {
        let v = self.v.clone();
        let at_q = self.derivatives(&q);
        let plain = {
            let v = v.clone();
            ScalarField::new(2, "", move |p: &[f64]| v(&(q * HPoint::new(p[0], p[1], 0.0))))
        };
        let (pg, ph) = (plain.clone(), plain);
        ScalarField::new(2, format!("{} along q*(a,b,0)", self.label), move |p: &[f64]| {
            v(&(q * HPoint::new(p[0], p[1], 0.0)))
        })
        .with_gradient(move |p| {
            if p.iter().all(|c| *c == 0.0) {
                vec![at_q.x, at_q.y]
            } else {
                pg.gradient(p)
            }
        })
        .with_hessian(move |p| {
            if p.iter().all(|c| *c == 0.0) {
                at_q.symmetric_hessian()
            } else {
                ph.hessian(p)
            }
        })
    }
}

/// `⨍_{B_1} v(q*(εA(a,b), 0)) da db`.
pub fn horizontal_average(v: &HScalarField, q: HPoint, eps: f64, a: &SymMatrix, rule: QuadRule) -> Result<f64> {
    if a.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: a.dim(),
        });
    }
    v.check_reach(&q, eps, eps * spectral_norm(a)?)?;
    ball_average(&v.translated(q), &[0.0, 0.0], eps, a, &[0.0, 0.0], rule)
}

/// `8/ε² (⨍ v(q*(εy,0)) − v(q)) → Δ_ℍ v(q)`.
pub fn sublaplacian_expansion_check(v: &HScalarField, q: HPoint, cfg: &MeanValueConfig) -> Result<ExpansionReport> {
    reject_variants(cfg)?;
    let max_eps = cfg.eps.iter().copied().fold(0.0, f64::max);
    v.check_reach(&q, max_eps, max_eps)?;
    let target = OperatorValue::Finite(v.derivatives(&q).sublaplacian());
    let mut plain = cfg.clone();
    plain.truncation = None;
    verify_expansion_with_target(
        &v.translated(q),
        &[0.0, 0.0],
        &Coefficients::inf(MatrixFamily::identity(2)),
        target,
        &plain,
    )
}

fn reject_variants(cfg: &MeanValueConfig) -> Result<()> {
    if cfg.offset.is_some() || cfg.zero_order != 0.0 {
        return Err(Error::InvalidParameter(
            "horizontal expansions take neither offsets nor zero-order terms".into(),
        ));
    }
    if cfg.region != crate::quadrature::Region::Ball {
        return Err(Error::InvalidParameter("horizontal averages are over discs".into()));
    }
    Ok(())
}

/// `4/ε² (inf_{det A = 1, A ≤ φ(ε)I} ⨍ v(q*(εA(a,b),0)) − v(q))
/// → (det (∇²_ℍ v(q))*)^{1/2}` for horizontally convex `v`.
///
/// `cfg.truncation` supplies `φ`; with `cfg.inject` the optimizer
/// `(det S)^{1/4} S^{−1/2}` of the symmetrized horizontal Hessian `S` joins
/// the sampled matrices.
pub fn horizontal_ma_mvf(v: &HScalarField, q: HPoint, cfg: &MeanValueConfig) -> Result<ExpansionReport> {
    reject_variants(cfg)?;
    let Some(phi) = &cfg.truncation else {
        return Err(Error::InvalidParameter(
            "the horizontal Monge–Ampère formula needs a truncation schedule".into(),
        ));
    };
    for &e in &cfg.eps {
        v.check_reach(&q, e, e * phi.eval(e))?;
    }
    let s = v.derivatives(&q).symmetric_hessian();
    let eig = eig_ascending(&s)?;
    let tol = 1e-12 * (1.0 + eig.max().abs());
    if eig.min() < -tol {
        return Err(Error::NotAdmissible(format!(
            "symmetrized horizontal Hessian of {} at {q} has eigenvalue {} < 0",
            v.label,
            eig.min()
        )));
    }
    let det = (eig.eigenvalues[0] * eig.eigenvalues[1]).max(0.0);
    let euclid = verify_expansion_with_target(
        &v.translated(q),
        &[0.0, 0.0],
        &Coefficients::inf(MatrixFamily::det_one(2)),
        OperatorValue::Finite(2.0 * det.sqrt()),
        cfg,
    )?;
    // The disc normalization 8/ε² is twice the 4/ε² of this formula.
    let records: Vec<DeltaRecord> = euclid
        .records
        .into_iter()
        .map(|r| DeltaRecord {
            delta: 0.5 * r.delta,
            noise: 0.5 * r.noise,
            ..r
        })
        .collect();
    Ok(assess(
        records,
        OperatorValue::Finite(det.sqrt()),
        cfg.rule,
        cfg.tol_conv,
        euclid.notes,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::Verdict;
    use crate::families::PhiSchedule;

    fn paraboloid() -> HScalarField {
        HScalarField::new("x^2+y^2", |q| q.x * q.x + q.y * q.y).with_derivatives(|q| HDerivatives {
            x: 2.0 * q.x,
            y: 2.0 * q.y,
            xx: 2.0,
            yy: 2.0,
            xy: 0.0,
            yx: 0.0,
        })
    }

    #[test]
    fn group_law() {
        let e1 = HPoint::new(1.0, 0.0, 0.0);
        let e2 = HPoint::new(0.0, 1.0, 0.0);
        assert_eq!(e1 * e2, HPoint::new(1.0, 1.0, 0.5));
        assert_eq!(e2 * e1, HPoint::new(1.0, 1.0, -0.5));
        let q = HPoint::new(0.3, -2.0, 1.5);
        assert_eq!(HPoint::IDENTITY * q, q);
        assert_eq!(q * q.inv(), HPoint::IDENTITY);
        assert_eq!(koranyi_gauge(e1), 1.0);
        assert_eq!(koranyi_gauge(HPoint::new(0.0, 0.0, 1.0)), 2.0);
    }

    #[test]
    fn vector_field_oracle_for_z() {
        let v = HScalarField::new("z", |q| q.z);
        let d = v.fd_derivatives(&HPoint::new(0.4, -0.6, 0.1));
        assert!((d.x - 0.3).abs() < 1e-8);
        assert!((d.y - 0.2).abs() < 1e-8);
        assert!(d.xx.abs() < 1e-6 && d.yy.abs() < 1e-6);
        assert!((d.xy - 0.5).abs() < 1e-6 && (d.yx + 0.5).abs() < 1e-6);
    }

    #[test]
    fn euclidean_chain_rule_matches_differences() {
        let u = crate::expr::field_from_expr("x1^2*x3 - x2*x3^2 + x1*x2 + x3", 3).unwrap();
        let v = HScalarField::from_euclidean(u).unwrap();
        assert!(v.has_derivatives());
        v.check_derivatives(3).unwrap();
    }

    #[test]
    fn sublaplacian_of_paraboloid() {
        let cfg = MeanValueConfig::dyadic(2, 6).unwrap();
        let rep = sublaplacian_expansion_check(&paraboloid(), HPoint::new(0.5, -1.0, 2.0), &cfg).unwrap();
        assert_eq!(rep.target, OperatorValue::Finite(4.0));
        for d in rep.deltas() {
            assert!((d - 4.0).abs() < 1e-9, "{d}");
        }
        assert_eq!(rep.verdict, Verdict::Converges);
    }

    #[test]
    fn z_has_zero_sublaplacian() {
        let v = HScalarField::new("z", |q| q.z);
        let cfg = MeanValueConfig::dyadic(2, 6).unwrap();
        let rep = sublaplacian_expansion_check(&v, HPoint::new(0.5, 0.7, 0.0), &cfg).unwrap();
        for d in rep.deltas() {
            assert!(d.abs() < 1e-8, "{d}");
        }
    }

    #[test]
    fn monge_ampere_of_paraboloid() {
        let mut cfg = MeanValueConfig::dyadic(2, 6).unwrap();
        cfg.truncation = Some(PhiSchedule::power(0.5).unwrap());
        cfg.sampler.count = 256;
        let rep = horizontal_ma_mvf(&paraboloid(), HPoint::new(0.2, 0.1, -0.3), &cfg).unwrap();
        assert_eq!(rep.target, OperatorValue::Finite(2.0));
        for d in rep.deltas() {
            assert!((d - 2.0).abs() < 1e-9, "{d}");
        }
    }

    #[test]
    fn non_convex_is_rejected() {
        let v = HScalarField::new("x^2-y^2", |q| q.x * q.x - q.y * q.y);
        let mut cfg = MeanValueConfig::dyadic(2, 4).unwrap();
        cfg.truncation = Some(PhiSchedule::power(0.5).unwrap());
        assert!(matches!(
            horizontal_ma_mvf(&v, HPoint::IDENTITY, &cfg),
            Err(Error::NotAdmissible(_))
        ));
    }

    #[test]
    fn domain_is_enforced() {
        let v = paraboloid().with_domain([-1.0; 3], [1.0; 3]).unwrap();
        let a = SymMatrix::identity(2);
        assert!(horizontal_average(&v, HPoint::new(0.95, 0.0, 0.0), 0.1, &a, QuadRule::default()).is_err());
        assert!(horizontal_average(&v, HPoint::new(0.5, 0.0, 0.0), 0.1, &a, QuadRule::default()).is_ok());
    }
}
