//! Averages over Euclidean balls and spheres, `⨍_{B_ε(c)} u(x + A y) dy`,
//! on cached node sets.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::families::{random_unit_vector, rng_from_seed};
use crate::symmat::{eig_ascending, SymMatrix};
use crate::textform::parse_head;

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type HessFn = Arc<dyn Fn(&[f64]) -> SymMatrix + Send + Sync>;

#[derive(Clone, Debug, PartialEq)]
pub enum Smoothness {
    C2,
    /// Twice differentiable except on the listed points (or lines through
    /// them); deterministic node sets are avoided for these.
    C2ExceptAt(Vec<Vec<f64>>),
}

/// A test function `u : ℝⁿ → ℝ` with optional analytic derivatives and an
/// axis-aligned domain box.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    label: String,
    value: ValueFn,
    gradient: Option<GradFn>,
    hessian: Option<HessFn>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    smoothness: Smoothness,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("gradient", &self.gradient.is_some())
            .field("hessian", &self.hessian.is_some())
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl ScalarField {
    /// A field on all of `ℝⁿ` with no analytic derivatives.
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert!(dim >= 1, "field dimension must be >= 1");
        Self {
            dim,
            label: label.into(),
            value: Arc::new(f),
            gradient: None,
            hessian: None,
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
            smoothness: Smoothness::C2,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&[f64]) -> SymMatrix + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }

    pub fn with_domain(mut self, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != self.dim || hi.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: lo.len().max(hi.len()),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidParameter("domain box needs lo < hi".into()));
        }
        self.lo = lo;
        self.hi = hi;
        Ok(self)
    }

    pub fn with_smoothness(mut self, s: Smoothness) -> Self {
        self.smoothness = s;
        self
    }

    /// `c + ⟨p, x⟩ + ½⟨M x, x⟩` with exact derivatives.
    pub fn quadratic(m: SymMatrix, p: Vec<f64>, c: f64) -> Result<Self> {
        let n = m.dim();
        if p.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.len(),
            });
        }
        let (mv, pv) = (m.clone(), p.clone());
        let (mg, pg) = (m.clone(), p);
        Ok(Self::new(n, "quadratic", move |x| {
            c + x.iter().zip(&pv).map(|(a, b)| a * b).sum::<f64>() + 0.5 * mv.quad_form(x)
        })
        .with_gradient(move |x| {
            let mx = mg.mul_vec(x);
            mx.iter().zip(&pg).map(|(a, b)| a + b).collect()
        })
        .with_hessian(move |_| m.clone()))
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::new(n, "constant", move |_| c)
            .with_gradient(move |_| vec![0.0; n])
            .with_hessian(move |_| SymMatrix::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn smoothness(&self) -> &Smoothness {
        &self.smoothness
    }

    pub fn domain(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    /// Analytic gradient when present, else central differences.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.gradient {
            Some(g) => g(x),
            None => fd_gradient(self, x, 1e-5),
        }
    }

    /// Analytic Hessian when present, else central differences.
    pub fn hessian(&self, x: &[f64]) -> SymMatrix {
        match &self.hessian {
            Some(h) => h(x),
            None => fd_hessian(self, x, 1e-4),
        }
    }

    /// Compares the analytic derivatives against central differences with
    /// step `1e-4` at 10 random points of the domain box (clipped to
    /// `[-1, 1]` on unbounded axes). Points where the field is not finite are
    /// skipped.
    pub fn check_derivatives(&self, seed: u64) -> Result<()> {
        let mut rng = rng_from_seed(seed);
        let step = 1e-4;
        let mut checked = 0;
        for _ in 0..100 {
            if checked == 10 {
                break;
            }
            let x: Vec<f64> = (0..self.dim)
                .map(|i| {
                    let a = if self.lo[i].is_finite() { self.lo[i] } else { -1.0 };
                    let b = if self.hi[i].is_finite() { self.hi[i] } else { 1.0 };
                    let pad = 2.0 * step;
                    rng.random_range((a + pad)..(b - pad).max(a + pad + 1e-12))
                })
                .collect();
            if !self.eval(&x).is_finite() {
                continue;
            }
            checked += 1;
            if let Some(g) = &self.gradient {
                let exact = g(&x);
                let fd = fd_gradient(self, &x, step);
                for i in 0..self.dim {
                    if (exact[i] - fd[i]).abs() > 1e-5 * (1.0 + exact[i].abs()) {
                        return Err(Error::InvalidParameter(format!(
                            "{}: gradient component {i} at {x:?} is {} but differences give {}",
                            self.label, exact[i], fd[i]
                        )));
                    }
                }
            }
            if let Some(h) = &self.hessian {
                let exact = h(&x);
                let fd = fd_hessian(self, &x, step);
                for i in 0..self.dim {
                    for j in i..self.dim {
                        let (e, d) = (exact.get(i, j), fd.get(i, j));
                        if (e - d).abs() > 1e-5 * (1.0 + e.abs()) {
                            return Err(Error::InvalidParameter(format!(
                                "{}: hessian entry ({i},{j}) at {x:?} is {e} but differences give {d}",
                                self.label
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn fd_gradient(u: &ScalarField, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let fp = u.eval(&p);
            p[i] = x[i] - h;
            let fm = u.eval(&p);
            p[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn fd_hessian(u: &ScalarField, x: &[f64], h: f64) -> SymMatrix {
    let n = x.len();
    let f0 = u.eval(x);
    let mut p = x.to_vec();
    SymMatrix::from_fn(n, |i, j| {
        if i == j {
            p[i] = x[i] + h;
            let fp = u.eval(&p);
            p[i] = x[i] - h;
            let fm = u.eval(&p);
            p[i] = x[i];
            (fp - 2.0 * f0 + fm) / (h * h)
        } else {
            let mut corner = |si: f64, sj: f64| {
                p[i] = x[i] + si * h;
                p[j] = x[j] + sj * h;
                let v = u.eval(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h * h)
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Region {
    #[default]
    Ball,
    Sphere,
}

/// How the unit ball or sphere is discretized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuadRule {
    /// Gauss–Legendre in the radius times a product angular rule:
    /// `angular` equispaced angles for `n = 2`; Gauss–Legendre in `cos θ`
    /// (`angular/2` nodes) times `angular` azimuths for `n = 3`. Dimensions
    /// `n ≥ 4` fall back to Monte Carlo with a fixed seed.
    Gauss { radial: usize, angular: usize },
    /// Stratified radii with antithetic pairs `±y`.
    MonteCarlo { nodes: usize, seed: u64 },
}

impl Default for QuadRule {
    fn default() -> Self {
        QuadRule::Gauss {
            radial: 8,
            angular: 32,
        }
    }
}

/// Node count and seed used when a Gauss rule is requested in `n ≥ 4`.
pub const HIGH_DIM_FALLBACK: QuadRule = QuadRule::MonteCarlo {
    nodes: 100_000,
    seed: 0x5eed,
};

impl fmt::Display for QuadRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadRule::Gauss { radial, angular } => write!(f, "gauss:r={radial},a={angular}"),
            QuadRule::MonteCarlo { nodes, seed } => write!(f, "mc:n={nodes},seed={seed}"),
        }
    }
}

impl FromStr for QuadRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, kv) = parse_head(s)?;
        let rule = match head {
            "gauss" => {
                kv.finish(&["r", "a"])?;
                QuadRule::Gauss {
                    radial: kv.opt_usize("r")?.unwrap_or(8),
                    angular: kv.opt_usize("a")?.unwrap_or(32),
                }
            }
            "mc" => {
                kv.finish(&["n", "seed"])?;
                QuadRule::MonteCarlo {
                    nodes: kv.opt_usize("n")?.unwrap_or(100_000),
                    seed: kv.opt_u64("seed")?.unwrap_or(0),
                }
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown quadrature rule '{other}' (expected gauss or mc)"
                )))
            }
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl QuadRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            QuadRule::Gauss { radial, angular } => {
                if radial == 0 || angular < 2 {
                    return Err(Error::InvalidParameter(format!(
                        "gauss rule needs r >= 1 and a >= 2, got r={radial}, a={angular}"
                    )));
                }
            }
            QuadRule::MonteCarlo { nodes, .. } => {
                if nodes < 2 {
                    return Err(Error::InvalidParameter("mc rule needs n >= 2".into()));
                }
            }
        }
        Ok(())
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self, QuadRule::MonteCarlo { .. })
    }
}

/// Nodes in the unit ball (or on the unit sphere) with positive weights
/// summing to one, so that weighted sums are averages.
#[derive(Debug)]
pub struct NodeSet {
    dim: usize,
    region: Region,
    points: Vec<f64>,
    weights: Vec<f64>,
    /// Consecutive nodes form `±y` pairs with equal weights.
    antithetic: bool,
}

impl NodeSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Lebesgue (or surface) measure of the unit region.
    pub fn measure(&self) -> f64 {
        let n = self.dim as f64;
        let ball = PI.powf(n / 2.0) / gamma_half_int(self.dim + 2);
        match self.region {
            Region::Ball => ball,
            Region::Sphere => n * ball,
        }
    }

    /// Weighted sum `Σ wᵢ g(yᵢ)`.
    pub fn average(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        let terms: Vec<f64> = (0..self.len())
            .map(|i| self.weights[i] * g(self.point(i)))
            .collect();
        pairwise_sum(&terms)
    }
}

/// `Γ(m/2)` for a positive integer `m`.
fn gamma_half_int(m: usize) -> f64 {
    match m {
        1 => PI.sqrt(),
        2 => 1.0,
        _ => (m as f64 / 2.0 - 1.0) * gamma_half_int(m - 2),
    }
}

/// Pairwise summation: the result does not depend on how callers chunk the
/// work, and rounding grows like `log n`.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(m).expect("m >= 1"));
    rule.as_node_weight_pairs().to_vec()
}

/// Directions on the unit circle (`n = 2`) or sphere (`n = 3`) with weights
/// summing to one.
fn angular_nodes(n: usize, angular: usize) -> Vec<(Vec<f64>, f64)> {
    match n {
        1 => vec![(vec![-1.0], 0.5), (vec![1.0], 0.5)],
        2 => (0..angular)
            .map(|j| {
                let t = 2.0 * PI * (j as f64 + 0.5) / angular as f64;
                (vec![t.cos(), t.sin()], 1.0 / angular as f64)
            })
            .collect(),
        3 => {
            let polar = gauss_legendre(angular.div_ceil(2).max(1));
            let mut out = Vec::with_capacity(polar.len() * angular);
            for (c, wc) in polar {
                let s = (1.0 - c * c).max(0.0).sqrt();
                for j in 0..angular {
                    let t = 2.0 * PI * (j as f64 + 0.5) / angular as f64;
                    out.push((vec![s * t.cos(), s * t.sin(), c], 0.5 * wc / angular as f64));
                }
            }
            out
        }
        _ => unreachable!("product rule only for n <= 3"),
    }
}

fn build_gauss(n: usize, region: Region, radial: usize, angular: usize) -> NodeSet {
    let dirs = angular_nodes(n, angular);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match region {
        Region::Sphere => {
            for (d, w) in dirs {
                points.extend(d);
                weights.push(w);
            }
        }
        Region::Ball => {
            // Radius density on the unit ball is n r^{n-1} dr on [0, 1].
            let rad: Vec<(f64, f64)> = gauss_legendre(radial)
                .into_iter()
                .map(|(t, w)| {
                    let r = 0.5 * (t + 1.0);
                    (r, 0.5 * w * n as f64 * r.powi(n as i32 - 1))
                })
                .collect();
            for (r, wr) in &rad {
                for (d, wd) in &dirs {
                    points.extend(d.iter().map(|c| r * c));
                    weights.push(wr * wd);
                }
            }
        }
    }
    normalize(n, region, points, weights)
}

fn build_monte_carlo(n: usize, region: Region, nodes: usize, seed: u64) -> NodeSet {
    let mut rng = rng_from_seed(seed);
    let pairs = nodes.div_ceil(2);
    let mut points = Vec::with_capacity(2 * pairs * n);
    for i in 0..pairs {
        let dir = random_unit_vector(n, &mut rng);
        let r = match region {
            Region::Sphere => 1.0,
            Region::Ball => {
                // One draw per radial stratum of equal volume.
                let u: f64 = rng.random();
                ((i as f64 + u) / pairs as f64).powf(1.0 / n as f64)
            }
        };
        points.extend(dir.iter().map(|c| r * c));
        points.extend(dir.iter().map(|c| -r * c));
    }
    let weights = vec![1.0; 2 * pairs];
    let mut set = normalize(n, region, points, weights);
    set.antithetic = true;
    set
}

fn normalize(dim: usize, region: Region, points: Vec<f64>, mut weights: Vec<f64>) -> NodeSet {
    let total = pairwise_sum(&weights);
    for w in weights.iter_mut() {
        *w /= total;
    }
    NodeSet {
        dim,
        region,
        points,
        weights,
        antithetic: false,
    }
}

type CacheKey = (QuadRule, usize, Region);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<NodeSet>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<NodeSet>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// The cached node set of `rule` in dimension `n`.
pub fn node_set(rule: QuadRule, n: usize, region: Region) -> Result<Arc<NodeSet>> {
    rule.validate()?;
    if n == 0 || n > 6 {
        return Err(Error::out_of_range("dimension", n, "1..=6"));
    }
    let key = (rule, n, region);
    if let Some(s) = cache().lock().expect("node cache poisoned").get(&key) {
        return Ok(Arc::clone(s));
    }
    let set = Arc::new(match rule {
        QuadRule::Gauss { radial, angular } if n <= 3 => build_gauss(n, region, radial, angular),
        QuadRule::Gauss { .. } => match HIGH_DIM_FALLBACK {
            QuadRule::MonteCarlo { nodes, seed } => build_monte_carlo(n, region, nodes, seed),
            QuadRule::Gauss { .. } => unreachable!(),
        },
        QuadRule::MonteCarlo { nodes, seed } => build_monte_carlo(n, region, nodes, seed),
    });
    cache()
        .lock()
        .expect("node cache poisoned")
        .insert(key, Arc::clone(&set));
    Ok(set)
}

/// Spectral norm of a PSD-or-not symmetric matrix.
pub(crate) fn spectral_norm(a: &SymMatrix) -> Result<f64> {
    let e = eig_ascending(a)?;
    Ok(e.min().abs().max(e.max().abs()))
}

/// An average together with an estimate of its numerical noise: rounding
/// for deterministic rules, the standard error of antithetic pair means for
/// Monte Carlo.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Average {
    pub value: f64,
    pub noise: f64,
}

/// Average of `u(x + A(ε ξ + offset))` over `ξ` in the unit region. Each
/// probe must lie in the field's domain box.
pub fn region_average(
    u: &ScalarField,
    x: &[f64],
    eps: f64,
    a: &SymMatrix,
    offset: &[f64],
    rule: QuadRule,
    region: Region,
) -> Result<f64> {
    Ok(region_average_detailed(u, x, eps, a, offset, rule, region)?.value)
}

pub fn region_average_detailed(
    u: &ScalarField,
    x: &[f64],
    eps: f64,
    a: &SymMatrix,
    offset: &[f64],
    rule: QuadRule,
    region: Region,
) -> Result<Average> {
    let n = u.dim();
    for len in [x.len(), a.dim(), offset.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let nodes = node_set(rule, n, region)?;
    let dense = a.to_dense();
    let mut probe = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut values = Vec::with_capacity(nodes.len());
    for i in 0..nodes.len() {
        let xi = nodes.point(i);
        for k in 0..n {
            y[k] = eps * xi[k] + offset[k];
        }
        for r in 0..n {
            let mut s = x[r];
            for c in 0..n {
                s += dense.get(r, c) * y[c];
            }
            probe[r] = s;
        }
        if !u.contains(&probe) {
            return Err(Error::LocalityViolation {
                eps,
                norm_a: spectral_norm(a)?,
                offset: offset.iter().map(|v| v * v).sum::<f64>().sqrt(),
                probe,
            });
        }
        values.push(u.eval(&probe));
    }
    let terms: Vec<f64> = values
        .iter()
        .zip(nodes.weights())
        .map(|(v, w)| v * w)
        .collect();
    let value = pairwise_sum(&terms);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("average of {} at {x:?}", u.label())));
    }
    let abs_sum: f64 = terms.iter().map(|t| t.abs()).sum();
    let rounding = 16.0 * f64::EPSILON * abs_sum;
    let noise = if nodes.antithetic {
        let pairs = values.len() / 2;
        let means: Vec<f64> = (0..pairs)
            .map(|i| 0.5 * (values[2 * i] + values[2 * i + 1]))
            .collect();
        let mean = pairwise_sum(&means) / pairs as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (pairs as f64 - 1.0).max(1.0);
        (var / pairs as f64).sqrt() + rounding
    } else {
        rounding
    };
    Ok(Average { value, noise })
}

/// `⨍_{B_ε(offset)} u(x + A y) dy`.
pub fn ball_average(
    u: &ScalarField,
    x: &[f64],
    eps: f64,
    a: &SymMatrix,
    offset: &[f64],
    rule: QuadRule,
) -> Result<f64> {
    region_average(u, x, eps, a, offset, rule, Region::Ball)
}

/// `⨍_{∂B_ε(0)} u(x + A y) dS(y)`.
pub fn sphere_average(
    u: &ScalarField,
    x: &[f64],
    eps: f64,
    a: &SymMatrix,
    rule: QuadRule,
) -> Result<f64> {
    region_average(u, x, eps, a, &vec![0.0; u.dim()], rule, Region::Sphere)
}

/// Largest relative error `|c/ε² · ⨍⟨My,y⟩ − tr M| / (1 + |tr M|)` over
/// random symmetric `M` and `ε ∈ {1, 0.1, 0.01}`, with `c = n + 2` on balls
/// and `c = n` on spheres.
pub fn trace_identity_selftest(
    n: usize,
    rule: QuadRule,
    region: Region,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let nodes = node_set(rule, n, region)?;
    let c = match region {
        Region::Ball => (n + 2) as f64,
        Region::Sphere => n as f64,
    };
    let mut rng = rng_from_seed(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let m = SymMatrix::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let tr = m.trace();
        for eps in [1.0, 0.1, 0.01] {
            let avg = nodes.average(|xi| {
                let y: Vec<f64> = xi.iter().map(|v| eps * v).collect();
                m.quad_form(&y)
            });
            let err = (c / (eps * eps) * avg - tr).abs() / (1.0 + tr.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
