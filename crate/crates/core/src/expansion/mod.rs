//! Normalized mean value increments
//!
//! ```text
//! Δ(ε) = c/ε² · (ext_{A∈𝒜} ⨍_{B_ε} u(x + A y) dy − u(x)),   c = 2(n+2) (balls), 2n (spheres)
//! ```
//!
//! compared against closed-form operator values, with residual-order fits,
//! the off-center and zero-order variants, and the non-admissible
//! counterexample.

pub mod counterexample;
pub mod fit;

use std::fmt;

use crate::error::{Error, Result};
use crate::families::{Extremum, MatrixFamily, PhiSchedule, SupInfSpec};
use crate::operators::{check_ellipticity, NGridSpec, OperatorHandle, OperatorSpec, OperatorValue};
use crate::quadrature::{region_average_detailed, QuadRule, Region, ScalarField};
use crate::symmat::{trace_form, SymMatrix};

pub use counterexample::{counterexample_611, CounterexampleReport, DeltaGrid};
pub use fit::{fitted_order, log_log_fit, log_log_slope};

/// `c` in `Δ(ε) = c/ε² (…)`: `2(n+2)` for solid balls, `2n` for spheres.
pub fn normalization(n: usize, region: Region) -> f64 {
    match region {
        Region::Ball => 2.0 * (n as f64 + 2.0),
        Region::Sphere => 2.0 * n as f64,
    }
}

/// Averages centered at `ε^α v` instead of the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct Offset {
    pub direction: Vec<f64>,
    pub alpha: f64,
}

impl Offset {
    pub fn new(direction: Vec<f64>, alpha: f64) -> Result<Self> {
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "offset direction must be a unit vector, |v| = {norm}"
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::out_of_range("alpha", alpha, "(0, inf)"));
        }
        Ok(Self { direction, alpha })
    }

    pub fn at(&self, eps: f64) -> Vec<f64> {
        let s = eps.powf(self.alpha);
        self.direction.iter().map(|v| s * v).collect()
    }

    fn is_critical(&self) -> bool {
        (self.alpha - 2.0).abs() < 1e-12
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sampler {
    pub count: usize,
    pub seed: u64,
}

impl Default for Sampler {
    fn default() -> Self {
        Self {
            count: 4096,
            seed: 1,
        }
    }
}

/// Everything that determines a mean value experiment besides the field,
/// the point and the coefficients.
#[derive(Clone, Debug)]
pub struct MeanValueConfig {
    /// Strictly decreasing radii.
    pub eps: Vec<f64>,
    pub region: Region,
    pub offset: Option<Offset>,
    /// `α₀ ≥ 0` in `(1 − α₀ε²) inf ⨍ u − u(x)`.
    pub zero_order: f64,
    pub truncation: Option<PhiSchedule>,
    pub rule: QuadRule,
    pub sampler: Sampler,
    /// Add closed-form extremizers at `D²u(x)` to the sampled candidates.
    pub inject: bool,
    /// Convergence tolerance on `|r(ε_min)|` before Monte Carlo widening.
    pub tol_conv: f64,
}

impl MeanValueConfig {
    pub fn new(eps: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            eps,
            region: Region::Ball,
            offset: None,
            zero_order: 0.0,
            truncation: None,
            rule: QuadRule::default(),
            sampler: Sampler::default(),
            inject: true,
            tol_conv: 5e-3,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `2^{-from}, …, 2^{-to}`.
    pub fn dyadic(from: i32, to: i32) -> Result<Self> {
        Self::new((from..=to).map(|k| 2f64.powi(-k)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() {
            return Err(Error::InvalidParameter("eps list is empty".into()));
        }
        if self.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidParameter("eps values must be positive".into()));
        }
        if self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("eps list must be strictly decreasing".into()));
        }
        if !(self.zero_order >= 0.0) {
            return Err(Error::out_of_range("zero-order coefficient", self.zero_order, "[0, inf)"));
        }
        if let Some(o) = &self.offset {
            Offset::new(o.direction.clone(), o.alpha)?;
        }
        if self.sampler.count == 0 {
            return Err(Error::InvalidParameter("sampler count must be >= 1".into()));
        }
        self.rule.validate()
    }

    fn cap(&self, eps: f64) -> Option<f64> {
        self.truncation.as_ref().map(|s| s.eval(eps))
    }
}

/// The coefficient structure realizing an operator as an extremum of ball
/// averages.
#[derive(Clone, Debug)]
pub enum Coefficients {
    /// `inf_{A∈𝒜}` or `sup_{A∈𝒜}`.
    Family { family: MatrixFamily, extremum: Extremum },
    /// `sup_{𝒜∈𝔸} inf_{A∈𝒜}`.
    SupInf(SupInfSpec),
    /// `inf_N sup_{A∈𝒜_{θΘ}} [⨍ u(x+Ay) + ε²/(2(n+2)) (F(N) − tr(AᵗNA))]`
    /// for a uniformly elliptic `F`.
    Isaacs {
        base: OperatorHandle,
        theta: f64,
        big_theta: f64,
        grid: NGridSpec,
    },
}

impl Coefficients {
    pub fn inf(family: MatrixFamily) -> Self {
        Coefficients::Family {
            family,
            extremum: Extremum::Inf,
        }
    }

    pub fn sup(family: MatrixFamily) -> Self {
        Coefficients::Family {
            family,
            extremum: Extremum::Sup,
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Coefficients::Family { family, .. } => Some(family.dim()),
            Coefficients::SupInf(s) => Some(s.dim()),
            Coefficients::Isaacs { .. } => None,
        }
    }
}

/// One evaluated radius.
#[derive(Clone, Debug)]
pub struct DeltaRecord {
    pub eps: f64,
    /// The extremal average (after the zero-order factor when present).
    pub mean: f64,
    /// The normalized increment.
    pub delta: f64,
    /// Numerical noise of `delta` from the quadrature alone.
    pub noise: f64,
    /// `s<i>` for the i-th sample, `inj<i>` for injected candidates;
    /// sup-inf and Isaacs records prefix the family or grid index.
    pub matrix_id: String,
    pub extremizer: SymMatrix,
}

struct Candidate {
    id: String,
    a: SymMatrix,
}

fn family_candidates(
    family: &MatrixFamily,
    extremum: Extremum,
    cfg: &MeanValueConfig,
    eps: f64,
    hess: Option<&SymMatrix>,
    seed: u64,
) -> Result<Vec<Candidate>> {
    let cap = cfg.cap(eps);
    if !family.bounded() && cap.is_none() {
        return Err(Error::InvalidParameter(format!(
            "family {family} is unbounded and needs a truncation schedule"
        )));
    }
    let mut out: Vec<Candidate> = Vec::new();
    if cfg.inject {
        if let Some(m) = hess {
            for (i, a) in family.optimizer_candidates(m, extremum, cap)?.into_iter().enumerate() {
                out.push(Candidate {
                    id: format!("inj{i}"),
                    a,
                });
            }
        }
    }
    match family.sample_guided(cfg.sampler.count, seed, cap, hess) {
        Ok(samples) => out.extend(samples.into_iter().enumerate().map(|(i, a)| Candidate {
            id: format!("s{i}"),
            a,
        })),
        Err(Error::EmptySample(_)) if !out.is_empty() => {}
        Err(e) => return Err(e),
    }
    if out.is_empty() {
        return Err(Error::EmptySample(format!("no admissible matrix in {family} at eps={eps}")));
    }
    Ok(out)
}

struct Evaluated {
    value: f64,
    noise: f64,
    id: String,
    a: SymMatrix,
}

fn evaluate_all(
    u: &ScalarField,
    x: &[f64],
    eps: f64,
    offset: &[f64],
    cands: Vec<Candidate>,
    cfg: &MeanValueConfig,
) -> Result<Vec<Evaluated>> {
    cands
        .into_iter()
        .map(|c| {
            let avg = region_average_detailed(u, x, eps, &c.a, offset, cfg.rule, cfg.region)?;
            Ok(Evaluated {
                value: avg.value,
                noise: avg.noise,
                id: c.id,
                a: c.a,
            })
        })
        .collect()
}

/// Extremum over evaluated candidates; ties keep the first candidate so the
/// choice is deterministic.
fn pick(evals: Vec<Evaluated>, extremum: Extremum) -> Evaluated {
    let mut it = evals.into_iter();
    let mut best = it.next().expect("candidate list checked nonempty");
    for e in it {
        let better = match extremum {
            Extremum::Inf => e.value < best.value,
            Extremum::Sup => e.value > best.value,
        };
        if better {
            best = e;
        }
    }
    best
}

fn hessian_if_known(u: &ScalarField, x: &[f64]) -> Option<SymMatrix> {
    if u.has_hessian() {
        let h = u.hessian(x);
        h.is_finite().then_some(h)
    } else {
        None
    }
}

fn check_point(u: &ScalarField, x: &[f64], coeffs: &Coefficients) -> Result<()> {
    if x.len() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            got: x.len(),
        });
    }
    if let Some(n) = coeffs.dim() {
        if n != u.dim() {
            return Err(Error::DimensionMismatch {
                expected: u.dim(),
                got: n,
            });
        }
    }
    Ok(())
}

/// The extremal average `ext_A ⨍ u(x + A(y + offset))` for the given
/// coefficients, with its noise and extremizer.
fn extremal_average(
    u: &ScalarField,
    x: &[f64],
    coeffs: &Coefficients,
    cfg: &MeanValueConfig,
    eps: f64,
    offset: &[f64],
) -> Result<Evaluated> {
    check_point(u, x, coeffs)?;
    let hess = hessian_if_known(u, x);
    let seed = cfg.sampler.seed;
    match coeffs {
        Coefficients::Family { family, extremum } => {
            let cands = family_candidates(family, *extremum, cfg, eps, hess.as_ref(), seed)?;
            Ok(pick(evaluate_all(u, x, eps, offset, cands, cfg)?, *extremum))
        }
        Coefficients::SupInf(spec) => {
            let mut inner = Vec::new();
            let mut families: Vec<(String, &MatrixFamily)> = spec
                .families()
                .iter()
                .enumerate()
                .map(|(j, f)| (format!("V{j}"), f))
                .collect();
            let optimal = match (&hess, cfg.inject) {
                (Some(m), true) => spec.optimal_family(m)?,
                _ => None,
            };
            if let Some(f) = &optimal {
                families.push(("Vopt".to_string(), f));
            }
            for (j, (label, family)) in families.into_iter().enumerate() {
                let cands = family_candidates(
                    family,
                    Extremum::Inf,
                    cfg,
                    eps,
                    hess.as_ref(),
                    seed.wrapping_add(j as u64),
                )?;
                let mut best = pick(evaluate_all(u, x, eps, offset, cands, cfg)?, Extremum::Inf);
                best.id = format!("{label}:{}", best.id);
                inner.push(best);
            }
            Ok(pick(inner, Extremum::Sup))
        }
        Coefficients::Isaacs {
            base,
            theta,
            big_theta,
            grid,
        } => {
            check_ellipticity(*theta, *big_theta)?;
            let m = hess.clone().ok_or_else(|| {
                Error::InvalidParameter(
                    "the Isaacs N-grid is centered on D²u(x); the field needs a Hessian".into(),
                )
            })?;
            let n = u.dim();
            let band = MatrixFamily::pucci_band(n, *theta, *big_theta)?;
            let cands = family_candidates(&band, Extremum::Sup, cfg, eps, Some(&m), seed)?;
            let evals = evaluate_all(u, x, eps, offset, cands, cfg)?;
            let kappa = eps * eps / normalization(n, cfg.region);
            let mut best: Option<(f64, usize, usize)> = None;
            for (gi, nmat) in grid.points(&m)?.iter().enumerate() {
                let f = base.eval(nmat);
                if !f.is_finite() {
                    return Err(Error::NonFinite(format!("base operator {} on the N-grid", base.label())));
                }
                let mut inner: Option<(f64, usize)> = None;
                for (ai, e) in evals.iter().enumerate() {
                    let v = e.value + kappa * (f - trace_form(&e.a, nmat)?);
                    if inner.is_none_or(|(b, _)| v > b) {
                        inner = Some((v, ai));
                    }
                }
                let (v, ai) = inner.expect("band candidates nonempty");
                if best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, gi, ai));
                }
            }
            let (value, gi, ai) =
                best.ok_or_else(|| Error::EmptySample("N-grid is empty".into()))?;
            let e = &evals[ai];
            Ok(Evaluated {
                value,
                noise: e.noise,
                id: format!("N{gi}:{}", e.id),
                a: e.a.clone(),
            })
        }
    }
}

/// `Δ(ε)` for the centered formula (ball or sphere, per `cfg.region`).
/// Offsets and zero-order terms in `cfg` are honored by [`delta_for`].
pub fn delta_epsilon(
    u: &ScalarField,
    x: &[f64],
    coeffs: &Coefficients,
    cfg: &MeanValueConfig,
    eps: f64,
) -> Result<DeltaRecord> {
    let zero = vec![0.0; u.dim()];
    let best = extremal_average(u, x, coeffs, cfg, eps, &zero)?;
    let c = normalization(u.dim(), cfg.region) / (eps * eps);
    let ux = u.eval(x);
    Ok(DeltaRecord {
        eps,
        mean: best.value,
        delta: c * (best.value - ux),
        noise: c * (best.noise + f64::EPSILON * ux.abs()),
        matrix_id: best.id,
        extremizer: best.a,
    })
}

/// How an off-center increment is normalized, by the offset exponent `α`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OffsetRegime {
    /// `α < 2`: `1/ε^α`, limit `inf_A ⟨Du(x), A v⟩`.
    FirstOrder,
    /// `α = 2`: `1/ε²`, limit `inf_A {tr(AᵗD²uA)/c + ⟨Du(x), A v⟩}`.
    Mixed,
    /// `α > 2`: `c/ε²`, limit `inf_A tr(AᵗD²uA)`.
    SecondOrder,
}

impl Offset {
    pub fn regime(&self) -> OffsetRegime {
        if self.is_critical() {
            OffsetRegime::Mixed
        } else if self.alpha < 2.0 {
            OffsetRegime::FirstOrder
        } else {
            OffsetRegime::SecondOrder
        }
    }
}

fn require_inf_family<'a>(coeffs: &'a Coefficients, what: &str) -> Result<&'a MatrixFamily> {
    match coeffs {
        Coefficients::Family {
            family,
            extremum: Extremum::Inf,
        } => {
            if !family.bounded() {
                return Err(Error::InvalidParameter(format!(
                    "{what} needs a bounded family, got {family}"
                )));
            }
            Ok(family)
        }
        _ => Err(Error::InvalidParameter(format!("{what} needs an inf over a single family"))),
    }
}

/// The increment for averages over `B_ε(ε^α v)`, normalized per
/// [`OffsetRegime`].
pub fn off_center_delta(
    u: &ScalarField,
    x: &[f64],
    coeffs: &Coefficients,
    offset: &Offset,
    cfg: &MeanValueConfig,
    eps: f64,
) -> Result<DeltaRecord> {
    require_inf_family(coeffs, "the off-center formula")?;
    if offset.direction.len() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            got: offset.direction.len(),
        });
    }
    let best = extremal_average(u, x, coeffs, cfg, eps, &offset.at(eps))?;
    let c = match offset.regime() {
        OffsetRegime::FirstOrder => eps.powf(-offset.alpha),
        OffsetRegime::Mixed => 1.0 / (eps * eps),
        OffsetRegime::SecondOrder => normalization(u.dim(), cfg.region) / (eps * eps),
    };
    let ux = u.eval(x);
    Ok(DeltaRecord {
        eps,
        mean: best.value,
        delta: c * (best.value - ux),
        noise: c * (best.noise + f64::EPSILON * ux.abs()),
        matrix_id: best.id,
        extremizer: best.a,
    })
}

/// Closed-form limit of [`off_center_delta`] minimized over `members`.
pub fn off_center_target(
    members: &[SymMatrix],
    hess: &SymMatrix,
    grad: &[f64],
    offset: &Offset,
    region: Region,
) -> Result<f64> {
    let c = normalization(hess.dim(), region);
    let mut best = f64::INFINITY;
    for a in members {
        let av = a.mul_vec(&offset.direction);
        let first: f64 = grad.iter().zip(&av).map(|(g, v)| g * v).sum();
        let second = trace_form(a, hess)?;
        let v = match offset.regime() {
            OffsetRegime::FirstOrder => first,
            OffsetRegime::Mixed => second / c + first,
            OffsetRegime::SecondOrder => second,
        };
        best = best.min(v);
    }
    if members.is_empty() {
        return Err(Error::EmptySample("no members for the off-center target".into()));
    }
    Ok(best)
}

/// `((1 − α₀ε²) inf_A ⨍ u(x+Ay) − u(x)) / ε²`.
pub fn zero_order_delta(
    u: &ScalarField,
    x: &[f64],
    coeffs: &Coefficients,
    alpha0: f64,
    cfg: &MeanValueConfig,
    eps: f64,
) -> Result<DeltaRecord> {
    require_inf_family(coeffs, "the zero-order formula")?;
    if !(alpha0 >= 0.0) {
        return Err(Error::out_of_range("zero-order coefficient", alpha0, "[0, inf)"));
    }
    let zero = vec![0.0; u.dim()];
    let best = extremal_average(u, x, coeffs, cfg, eps, &zero)?;
    let mean = (1.0 - alpha0 * eps * eps) * best.value;
    let ux = u.eval(x);
    let c = 1.0 / (eps * eps);
    Ok(DeltaRecord {
        eps,
        mean,
        delta: c * (mean - ux),
        noise: c * (best.noise + f64::EPSILON * ux.abs()),
        matrix_id: best.id,
        extremizer: best.a,
    })
}

/// `inf_A tr(AᵗMA)/c − α₀ u(x)` over `members`.
pub fn zero_order_target(
    members: &[SymMatrix],
    hess: &SymMatrix,
    ux: f64,
    alpha0: f64,
    region: Region,
) -> Result<f64> {
    let c = normalization(hess.dim(), region);
    let mut best = f64::INFINITY;
    for a in members {
        best = best.min(trace_form(a, hess)?);
    }
    if members.is_empty() {
        return Err(Error::EmptySample("no members for the zero-order target".into()));
    }
    Ok(best / c - alpha0 * ux)
}

/// Dispatches on the variant selected by `cfg`: off-center when an offset
/// is set, zero-order when `α₀ > 0`, centered otherwise.
pub fn delta_for(
    u: &ScalarField,
    x: &[f64],
    coeffs: &Coefficients,
    cfg: &MeanValueConfig,
    eps: f64,
) -> Result<DeltaRecord> {
    match (&cfg.offset, cfg.zero_order > 0.0) {
        (Some(_), true) => Err(Error::InvalidParameter(
            "offset and zero-order variants cannot be combined".into(),
        )),
        (Some(o), false) => off_center_delta(u, x, coeffs, o, cfg, eps),
        (None, true) => zero_order_delta(u, x, coeffs, cfg.zero_order, cfg, eps),
        (None, false) => delta_epsilon(u, x, coeffs, cfg, eps),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    Converges,
    /// `Δ(ε) → −∞`; the exponent is the slope of `log(−Δ)` in `log ε`.
    Diverges { exponent: f64 },
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Converges => write!(f, "converges"),
            Verdict::Diverges { exponent } => write!(f, "diverges({exponent})"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExpansionReport {
    pub records: Vec<DeltaRecord>,
    pub target: OperatorValue,
    /// `Δ(ε) − F`, absent for a `-∞` target.
    pub residuals: Vec<Option<f64>>,
    pub fitted_order: Option<f64>,
    pub verdict: Verdict,
    pub rule: QuadRule,
    /// The tolerance the verdict was judged against.
    pub tolerance: f64,
    pub notes: Vec<String>,
}

impl ExpansionReport {
    pub fn deltas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.delta).collect()
    }

    pub fn eps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.eps).collect()
    }

    pub fn last_residual(&self) -> Option<f64> {
        self.residuals.last().copied().flatten()
    }
}

/// Builds the report for an increment sequence against `target`.
pub fn assess(
    records: Vec<DeltaRecord>,
    target: OperatorValue,
    rule: QuadRule,
    tol_conv: f64,
    mut notes: Vec<String>,
) -> ExpansionReport {
    let eps: Vec<f64> = records.iter().map(|r| r.eps).collect();
    let deltas: Vec<f64> = records.iter().map(|r| r.delta).collect();
    let floors: Vec<f64> = records.iter().map(|r| r.noise).collect();
    let residuals: Vec<Option<f64>> = records
        .iter()
        .map(|r| target.finite().map(|f| r.delta - f))
        .collect();
    let last_noise = floors.last().copied().unwrap_or(0.0);
    let tolerance = if rule.is_monte_carlo() {
        tol_conv + 3.0 * last_noise
    } else {
        tol_conv
    };
    let diverging = fit::diverging_tail(&deltas);
    let divergence = || Verdict::Diverges {
        exponent: fit::divergence_exponent(&eps, &deltas).unwrap_or(f64::NAN),
    };
    let (fitted, verdict) = match target {
        OperatorValue::Finite(_) => {
            let r: Vec<f64> = residuals.iter().map(|r| r.expect("finite target")).collect();
            let order = fitted_order(&eps, &r, &floors);
            let last = r.last().map_or(f64::INFINITY, |v| v.abs());
            let verdict = if last <= tolerance && order.is_none_or(|o| o > 0.0) {
                let note = "residuals at the noise floor; no order fitted";
                if order.is_none() && !notes.iter().any(|n| n == note) {
                    notes.push(note.into());
                }
                Verdict::Converges
            } else if diverging {
                divergence()
            } else {
                Verdict::Inconclusive
            };
            (order, verdict)
        }
        OperatorValue::MinusInfinity => {
            let verdict = if diverging {
                divergence()
            } else {
                notes.push("target is -inf but the increments stay above the divergence threshold".into());
                Verdict::Inconclusive
            };
            (None, verdict)
        }
    };
    ExpansionReport {
        records,
        target,
        residuals,
        fitted_order: fitted,
        verdict,
        rule,
        tolerance,
        notes,
    }
}

/// Runs the configured variant at every `ε` and judges it against
/// `target`.
pub fn verify_expansion_with_target(
    u: &ScalarField,
    x: &[f64],
    coeffs: &Coefficients,
    target: OperatorValue,
    cfg: &MeanValueConfig,
) -> Result<ExpansionReport> {
    cfg.validate()?;
    let records = cfg
        .eps
        .iter()
        .map(|&e| delta_for(u, x, coeffs, cfg, e))
        .collect::<Result<Vec<_>>>()?;
    let mut notes = Vec::new();
    match coeffs {
        Coefficients::SupInf(_) => notes.push("sampling-limited".into()),
        Coefficients::Isaacs { .. } => notes.push("grid-limited".into()),
        Coefficients::Family { .. } => {}
    }
    Ok(assess(records, target, cfg.rule, cfg.tol_conv, notes))
}

/// Centered expansion against `op(D²u(x))`, using the field's Hessian.
pub fn verify_expansion(
    u: &ScalarField,
    x: &[f64],
    coeffs: &Coefficients,
    op: &OperatorSpec,
    cfg: &MeanValueConfig,
) -> Result<ExpansionReport> {
    if cfg.offset.is_some() || cfg.zero_order > 0.0 {
        return Err(Error::InvalidParameter(
            "variants have their own targets; use verify_expansion_with_target".into(),
        ));
    }
    if !u.has_hessian() {
        return Err(Error::InvalidParameter(format!(
            "field {} has no analytic Hessian; supply the target explicitly",
            u.label()
        )));
    }
    op.validate(u.dim())?;
    let target = op.evaluate(&u.hessian(x))?;
    verify_expansion_with_target(u, x, coeffs, target, cfg)
}
