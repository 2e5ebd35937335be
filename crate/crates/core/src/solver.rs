//! Dirichlet problems solved by iterating the mean value formula
//!
//! ```text
//! u(x) ← ext_{A} ⨍_{B_ε} u(x + A y) dy − ε²/(2(n+2)) f(x)
//! ```
//!
//! on a uniform grid, with Jacobi (simultaneous) updates. Ball averages of
//! the grid function are taken through piecewise-polynomial interpolation.
//! Because every probe offset relative to a node is the same for all
//! nodes, each coefficient matrix becomes one merged, translation-invariant
//! stencil.

use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::expansion::{normalization, Coefficients};
use crate::families::{random_frame, rng_from_seed, Extremum, FamilyKind, MatrixFamily, PhiSchedule};
use crate::quadrature::{node_set, spectral_norm, QuadRule, Region, ScalarField};
use crate::symmat::{SquareMatrix, SymMatrix};

/// Layers of nodes outside the box so every interpolation stencil of a
/// probe inside the box exists. Ghost nodes carry the boundary data.
const GHOST: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    /// Inside the box but within the probe reach of its boundary.
    Collar,
    /// Padding outside the box.
    Ghost,
}

/// A uniform grid on an axis-aligned box in two or three dimensions.
#[derive(Clone, Debug)]
pub struct Grid {
    n: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    h: f64,
    /// Node counts per axis inside the box.
    counts: Vec<usize>,
    strides: Vec<usize>,
    kinds: Vec<NodeKind>,
    collar_width: f64,
    interior: Vec<usize>,
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn collar_width(&self) -> f64 {
        self.collar_width
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    /// Node counts per axis inside the box.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kind(&self, idx: usize) -> NodeKind {
        self.kinds[idx]
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for d in 0..self.n {
            out[d] = idx / self.strides[d];
            idx %= self.strides[d];
        }
        out
    }

    /// Coordinates of a (padded) node.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(d, &i)| self.lo[d] + (i as f64 - GHOST as f64) * self.h)
            .collect()
    }

    /// Padded linear indices of the nodes inside the box, in lexicographic
    /// order (first coordinate slowest).
    pub fn box_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.kinds[i] != NodeKind::Ghost).collect()
    }
}

/// Largest `‖A‖` a probe can use, with truncation applied to unbounded
/// families.
fn max_reach(coeffs: &Coefficients, eps: f64, truncation: Option<&PhiSchedule>) -> Result<f64> {
    let cap = truncation.map(|s| s.eval(eps));
    let fam_reach = |f: &MatrixFamily| {
        f.reach(cap).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "family {f} is unbounded; the solver needs a truncation schedule"
            ))
        })
    };
    match coeffs {
        Coefficients::Family { family, .. } => fam_reach(family),
        Coefficients::SupInf(spec) => spec
            .families()
            .iter()
            .map(fam_reach)
            .try_fold(0.0_f64, |m, r| Ok(m.max(r?))),
        Coefficients::Isaacs { .. } => Err(Error::InvalidParameter(
            "Isaacs coefficients are not supported by the grid solver".into(),
        )),
    }
}

/// Classifies nodes of the box `[lo, hi]` with spacing `h` so that every
/// probe `x + A(εy)` of an interior node stays inside the box.
pub fn build_grid(
    lo: &[f64],
    hi: &[f64],
    h: f64,
    eps: f64,
    coeffs: &Coefficients,
    truncation: Option<&PhiSchedule>,
) -> Result<Grid> {
    let n = lo.len();
    if !(n == 2 || n == 3) || hi.len() != n {
        return Err(Error::out_of_range("grid dimension", n, "2..=3"));
    }
    if let Some(d) = coeffs.dim() {
        if d != n {
            return Err(Error::DimensionMismatch { expected: n, got: d });
        }
    }
    if !(h > 0.0 && eps > 0.0) {
        return Err(Error::InvalidParameter(format!("need h > 0 and eps > 0, got h={h}, eps={eps}")));
    }
    let mut counts = Vec::with_capacity(n);
    for d in 0..n {
        let cells = (hi[d] - lo[d]) / h;
        let rounded = cells.round();
        if !(rounded >= 1.0) || (cells - rounded).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "box side {} is not a multiple of h={h}",
                hi[d] - lo[d]
            )));
        }
        counts.push(rounded as usize + 1);
    }
    let reach = eps * max_reach(coeffs, eps, truncation)?;
    let shape: Vec<usize> = counts.iter().map(|c| c + 2 * GHOST).collect();
    let mut strides = vec![1; n];
    for d in (0..n - 1).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    let total: usize = shape.iter().product();
    let mut kinds = Vec::with_capacity(total);
    let mut interior = Vec::new();
    let slack = 1e-12 * (1.0 + reach);
    for idx in 0..total {
        let mut rem = idx;
        let mut kind = NodeKind::Interior;
        for d in 0..n {
            let i = rem / strides[d];
            rem %= strides[d];
            if i < GHOST || i >= GHOST + counts[d] {
                kind = NodeKind::Ghost;
                break;
            }
            let x = lo[d] + (i - GHOST) as f64 * h;
            if (x - lo[d]).min(hi[d] - x) + slack < reach {
                kind = NodeKind::Collar;
            }
        }
        if kind == NodeKind::Interior {
            interior.push(idx);
        }
        kinds.push(kind);
    }
    if interior.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "eps={eps} is too large for the box: probe reach {reach} leaves no interior node"
        )));
    }
    Ok(Grid {
        n,
        lo: lo.to_vec(),
        hi: hi.to_vec(),
        h,
        counts,
        strides,
        kinds,
        collar_width: reach,
        interior,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Interpolation {
    Multilinear,
    #[default]
    Multiquadratic,
}

/// Values on all nodes of a grid, ghost padding included.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    values: Vec<f64>,
    interpolation: Interpolation,
}

impl GridField {
    pub fn from_fn(grid: &Grid, interpolation: Interpolation, f: impl Fn(&[f64]) -> f64) -> Self {
        Self {
            values: (0..grid.len()).map(|i| f(&grid.point(i))).collect(),
            interpolation,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Largest `|self − other|` over the box nodes.
    pub fn max_diff(&self, other: &GridField, grid: &Grid) -> f64 {
        grid.box_nodes()
            .iter()
            .map(|&i| (self.values[i] - other.values[i]).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|u − exact|` over the box nodes.
    pub fn max_error(&self, grid: &Grid, exact: impl Fn(&[f64]) -> f64) -> f64 {
        grid.box_nodes()
            .iter()
            .map(|&i| (self.values[i] - exact(&grid.point(i))).abs())
            .fold(0.0, f64::max)
    }

    /// Interpolated value at a point inside the box.
    pub fn interpolate(&self, grid: &Grid, x: &[f64]) -> Result<f64> {
        if x.len() != grid.n {
            return Err(Error::DimensionMismatch {
                expected: grid.n,
                got: x.len(),
            });
        }
        let mut origin = 0usize;
        let mut axes = Vec::with_capacity(grid.n);
        for d in 0..grid.n {
            if x[d] < grid.lo[d] - 1e-12 || x[d] > grid.hi[d] + 1e-12 {
                return Err(Error::InvalidParameter(format!("{x:?} is outside the grid box")));
            }
            let s = (x[d] - grid.lo[d]) / grid.h;
            let (base, w) = axis_weights(s, self.interpolation);
            origin += ((base + GHOST as isize) as usize) * grid.strides[d];
            axes.push(w);
        }
        let mut total = 0.0;
        for_each_tensor(&axes, |offs, w| {
            let idx = origin as isize
                + offs
                    .iter()
                    .enumerate()
                    .map(|(d, &o)| o * grid.strides[d] as isize)
                    .sum::<isize>();
            total += w * self.values[idx as usize];
        });
        Ok(total)
    }
}

/// One-dimensional interpolation weights at fractional node coordinate `s`:
/// the first node index and the weights of consecutive nodes.
fn axis_weights(s: f64, interp: Interpolation) -> (isize, Vec<f64>) {
    match interp {
        Interpolation::Multilinear => {
            let i = s.floor();
            let t = s - i;
            (i as isize, vec![1.0 - t, t])
        }
        Interpolation::Multiquadratic => {
            let i = s.round();
            let t = s - i;
            (
                i as isize - 1,
                vec![0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)],
            )
        }
    }
}

/// Calls `f(offsets, weight)` for every node of a tensor-product stencil.
fn for_each_tensor(axes: &[Vec<f64>], mut f: impl FnMut(&[isize], f64)) {
    let n = axes.len();
    let mut idx = vec![0usize; n];
    let mut offs = vec![0isize; n];
    loop {
        let mut w = 1.0;
        for d in 0..n {
            w *= axes[d][idx[d]];
            offs[d] = idx[d] as isize;
        }
        f(&offs, w);
        let mut d = n;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Merged interpolation stencil of `⨍_{B_ε} u(x + A y) dy` around a node.
#[derive(Clone, Debug)]
struct Stencil {
    offsets: Vec<isize>,
    weights: Vec<f64>,
}

fn build_stencil(grid: &Grid, a: &SymMatrix, eps: f64, rule: QuadRule, interp: Interpolation) -> Result<Stencil> {
    let n = grid.n;
    let nodes = node_set(rule, n, Region::Ball)?;
    let dense = a.to_dense();
    let mut merged: BTreeMap<isize, f64> = BTreeMap::new();
    let mut axes = Vec::with_capacity(n);
    for k in 0..nodes.len() {
        let xi = nodes.point(k);
        let wk = nodes.weights()[k];
        let mut base = 0isize;
        axes.clear();
        for r in 0..n {
            let d: f64 = (0..n).map(|c| dense.get(r, c) * eps * xi[c]).sum();
            let (b, w) = axis_weights(d / grid.h, interp);
            base += b * grid.strides[r] as isize;
            axes.push(w);
        }
        for_each_tensor(&axes, |offs, w| {
            let off = base
                + offs
                    .iter()
                    .enumerate()
                    .map(|(d, &o)| o * grid.strides[d] as isize)
                    .sum::<isize>();
            *merged.entry(off).or_insert(0.0) += wk * w;
        });
    }
    merged.retain(|_, w| *w != 0.0);
    Ok(Stencil {
        offsets: merged.keys().copied().collect(),
        weights: merged.values().copied().collect(),
    })
}

/// Solver settings besides the grid, coefficients and data.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub rule: QuadRule,
    pub interpolation: Interpolation,
    /// Directions (or frames) per structured coefficient set.
    pub directions: usize,
    pub seed: u64,
    pub truncation: Option<PhiSchedule>,
    /// Initialize from the solution on a grid of spacing `2h` (recursively,
    /// while the coarse spacing stays below `ε`).
    pub nested: bool,
    /// Iterations of near-constant residual before stagnation is flagged.
    pub stagnation_window: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rule: QuadRule::default(),
            interpolation: Interpolation::default(),
            directions: 8,
            seed: 1,
            truncation: None,
            nested: true,
            stagnation_window: 50,
        }
    }
}

fn rotation2(t: f64) -> SquareMatrix {
    let (s, c) = t.sin_cos();
    SquareMatrix::from_rows(&[vec![c, -s], vec![s, c]]).expect("2x2")
}

/// Deterministic frames: rotations through `[0, π/2)` in two dimensions;
/// the identity plus seeded random frames otherwise.
fn frames(n: usize, count: usize, seed: u64) -> Vec<SquareMatrix> {
    if n == 2 {
        (0..count)
            .map(|k| rotation2(k as f64 * std::f64::consts::FRAC_PI_2 / count as f64))
            .collect()
    } else {
        let mut rng = rng_from_seed(seed);
        let mut out = vec![SquareMatrix::identity(n)];
        out.extend((1..count).map(|_| random_frame(n, &mut rng)));
        out
    }
}

fn dedup(mut v: Vec<SymMatrix>) -> Vec<SymMatrix> {
    let mut out: Vec<SymMatrix> = Vec::with_capacity(v.len());
    for a in v.drain(..) {
        if !out.iter().any(|b| a.sub(b).max_abs() < 1e-12) {
            out.push(a);
        }
    }
    out
}

/// The finite coefficient set the solver iterates with. Structured families
/// are represented by their extreme configurations in a fixed set of
/// frames; sampled families fall back to the seeded sampler.
pub fn solver_members(family: &MatrixFamily, cap: Option<f64>, cfg: &SolverConfig) -> Result<Vec<SymMatrix>> {
    let n = family.dim();
    let k_dirs = cfg.directions.max(1);
    let fr = frames(n, k_dirs, cfg.seed);
    let corners = |vals: &[f64]| -> Vec<Vec<f64>> {
        (0..vals.len().pow(n as u32))
            .map(|mut m| {
                (0..n)
                    .map(|_| {
                        let v = vals[m % vals.len()];
                        m /= vals.len();
                        v
                    })
                    .collect()
            })
            .collect()
    };
    let members = match family.kind() {
        FamilyKind::Finite(list) => list.clone(),
        FamilyKind::PucciBand { theta, big_theta } => {
            let vals = [theta.sqrt(), big_theta.sqrt()];
            fr.iter()
                .flat_map(|q| corners(&vals).into_iter().map(move |d| SymMatrix::from_frame(q, &d)))
                .collect()
        }
        FamilyKind::RankOneSphere => fr
            .iter()
            .flat_map(|q| (0..n).map(move |j| SymMatrix::outer(&q.column(j))))
            .collect(),
        FamilyKind::ProjectionRankK(k) => fr
            .iter()
            .flat_map(|q| {
                corners(&[0.0, 1.0])
                    .into_iter()
                    .filter(|d| d.iter().sum::<f64>() as usize == *k)
                    .map(move |d| SymMatrix::from_frame(q, &d))
            })
            .collect(),
        FamilyKind::RankOneInSubspace(_) => family.sample(k_dirs * n, cfg.seed, cap)?,
        FamilyKind::KHessian(k) if *k == n && n == 2 => {
            let cap = cap.expect("unbounded families are capped before this point");
            let mut out = vec![SymMatrix::identity(2)];
            let mut s = 2f64.sqrt();
            while s <= cap * (1.0 + 1e-12) {
                for q in &fr {
                    out.push(SymMatrix::from_frame(q, &[s, 1.0 / s]));
                }
                s *= 2f64.sqrt();
            }
            out
        }
        FamilyKind::KHessian(_) => {
            let mut out = family.optimizer_candidates(&SymMatrix::identity(n), Extremum::Inf, cap)?;
            out.extend(family.sample(8 * k_dirs, cfg.seed, cap)?);
            out
        }
    };
    let members = match cap {
        Some(c) => members
            .into_iter()
            .filter(|a| spectral_norm(a).is_ok_and(|s| s <= c * (1.0 + 1e-12)))
            .collect(),
        None => members,
    };
    let members = dedup(members);
    if members.is_empty() {
        return Err(Error::EmptySample(format!("no admissible solver coefficients in {family}")));
    }
    Ok(members)
}

/// Precomputed update operator for one grid, `ε`, coefficient set and
/// source.
#[derive(Clone, Debug)]
pub struct Scheme {
    grid: Grid,
    /// Outer groups are maximized over (sup-inf); inner stencils extremized
    /// per `inner`.
    groups: Vec<Vec<Stencil>>,
    inner: Extremum,
    outer_sup: bool,
    source: Vec<f64>,
    interpolation: Interpolation,
    min_weight: f64,
}

impl Scheme {
    pub fn new(grid: Grid, coeffs: &Coefficients, f: &ScalarField, eps: f64, cfg: &SolverConfig) -> Result<Self> {
        if f.dim() != grid.n {
            return Err(Error::DimensionMismatch {
                expected: grid.n,
                got: f.dim(),
            });
        }
        let cap = cfg.truncation.as_ref().map(|s| s.eval(eps));
        let (member_groups, inner, outer_sup) = match coeffs {
            Coefficients::Family { family, extremum } => {
                if !family.bounded() && cap.is_none() {
                    return Err(Error::InvalidParameter(format!(
                        "family {family} is unbounded; the solver needs a truncation schedule"
                    )));
                }
                (vec![solver_members(family, cap, cfg)?], *extremum, false)
            }
            Coefficients::SupInf(spec) => (
                spec.families()
                    .iter()
                    .map(|fam| solver_members(fam, cap, cfg))
                    .collect::<Result<Vec<_>>>()?,
                Extremum::Inf,
                true,
            ),
            Coefficients::Isaacs { .. } => {
                return Err(Error::InvalidParameter(
                    "Isaacs coefficients are not supported by the grid solver".into(),
                ))
            }
        };
        let mut min_weight = f64::INFINITY;
        let mut groups = Vec::with_capacity(member_groups.len());
        for members in member_groups {
            let mut g = Vec::with_capacity(members.len());
            for a in &members {
                if eps * spectral_norm(a)? > grid.collar_width * (1.0 + 1e-12) + 1e-15 {
                    return Err(Error::InvalidParameter(format!(
                        "coefficient with norm {} exceeds the grid's collar",
                        spectral_norm(a)?
                    )));
                }
                let st = build_stencil(&grid, a, eps, cfg.rule, cfg.interpolation)?;
                min_weight = st.weights.iter().copied().fold(min_weight, f64::min);
                g.push(st);
            }
            groups.push(g);
        }
        let kappa = eps * eps / normalization(grid.n, Region::Ball);
        let source = (0..grid.len())
            .map(|i| match grid.kinds[i] {
                NodeKind::Interior => kappa * f.eval(&grid.point(i)),
                _ => 0.0,
            })
            .collect();
        Ok(Self {
            grid,
            groups,
            inner,
            outer_sup,
            source,
            interpolation: cfg.interpolation,
            min_weight,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Smallest merged stencil weight; negative values mean the discrete
    /// averaging is not monotone.
    pub fn min_stencil_weight(&self) -> f64 {
        self.min_weight
    }

    pub fn stencil_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// The field equal to `g` on collar and ghost nodes and to `fill` inside.
    pub fn boundary_field(&self, g: &ScalarField, fill: Option<f64>) -> GridField {
        let grid = &self.grid;
        let mut values: Vec<f64> = (0..grid.len()).map(|i| g.eval(&grid.point(i))).collect();
        let fill = fill.unwrap_or_else(|| {
            let boundary: Vec<f64> = (0..grid.len())
                .filter(|&i| grid.kinds[i] == NodeKind::Collar)
                .map(|i| values[i])
                .collect();
            if boundary.is_empty() {
                0.0
            } else {
                boundary.iter().sum::<f64>() / boundary.len() as f64
            }
        });
        for &i in &grid.interior {
            values[i] = fill;
        }
        GridField {
            values,
            interpolation: self.interpolation,
        }
    }

    /// One Jacobi sweep; collar and ghost values are copied unchanged.
    pub fn step(&self, u: &GridField) -> GridField {
        let mut out = u.values.clone();
        let vals = &u.values;
        for &node in &self.grid.interior {
            let base = node as isize;
            let mut outer = f64::NEG_INFINITY;
            for group in &self.groups {
                let mut inner = match self.inner {
                    Extremum::Inf => f64::INFINITY,
                    Extremum::Sup => f64::NEG_INFINITY,
                };
                for st in group {
                    let mut s = 0.0;
                    for (o, w) in st.offsets.iter().zip(&st.weights) {
                        s += w * vals[(base + o) as usize];
                    }
                    inner = match self.inner {
                        Extremum::Inf => inner.min(s),
                        Extremum::Sup => inner.max(s),
                    };
                }
                outer = if self.outer_sup { outer.max(inner) } else { inner };
            }
            out[node] = outer - self.source[node];
        }
        GridField {
            values: out,
            interpolation: u.interpolation,
        }
    }
}

/// One update of `u` for the given problem. Builds the scheme each call;
/// use [`Scheme::step`] in loops.
pub fn iterate_step(
    u: &GridField,
    grid: &Grid,
    coeffs: &Coefficients,
    f: &ScalarField,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<GridField> {
    if u.values.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: u.values.len(),
        });
    }
    let scheme = Scheme::new(grid.clone(), coeffs, f, eps, cfg)?;
    Ok(scheme.step(u))
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖u_{m+1} − u_m‖_∞` at the last iteration.
    pub residual: f64,
    pub history: Vec<f64>,
    pub wall_time: Duration,
    pub converged: bool,
    pub stagnated: bool,
    /// Iterations spent on each coarser initialization level, coarsest first.
    pub coarse_iterations: Vec<(f64, usize)>,
    pub min_stencil_weight: f64,
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iterations={} residual={:e} converged={} stagnated={} wall={:.3}s",
            self.iterations,
            self.residual,
            self.converged,
            self.stagnated,
            self.wall_time.as_secs_f64()
        )
    }
}

/// Iterates `scheme` from `init` until the sup-norm update drops below
/// `tol`, `max_iter` is reached, or the residual stagnates.
pub fn iterate_to_tolerance(
    scheme: &Scheme,
    init: GridField,
    tol: f64,
    max_iter: usize,
    stagnation_window: usize,
) -> Result<(GridField, SolveReport)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let start = Instant::now();
    let interior = scheme.grid.interior.clone();
    let mut u = init;
    let mut history = Vec::new();
    let mut converged = false;
    let mut stagnated = false;
    let mut flat = 0usize;
    for _ in 0..max_iter {
        let next = scheme.step(&u);
        let mut r = 0.0_f64;
        for &i in &interior {
            let v = next.values[i];
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "solver iterate at node {:?}",
                    scheme.grid.point(i)
                )));
            }
            r = r.max((v - u.values[i]).abs());
        }
        if let Some(&prev) = history.last() {
            let prev: f64 = prev;
            if (prev - r).abs() < 1e-3 * tol {
                flat += 1;
            } else {
                flat = 0;
            }
        }
        history.push(r);
        u = next;
        if r <= tol {
            converged = true;
            break;
        }
        if flat >= stagnation_window {
            stagnated = true;
            break;
        }
    }
    let report = SolveReport {
        iterations: history.len(),
        residual: history.last().copied().unwrap_or(0.0),
        history,
        wall_time: start.elapsed(),
        converged,
        stagnated,
        coarse_iterations: Vec::new(),
        min_stencil_weight: scheme.min_weight,
    };
    Ok((u, report))
}

/// Multilinear (hence monotone) transfer of a coarse solution onto the
/// interior nodes of `fine`; other nodes keep `fine_init`.
fn prolong(coarse: &GridField, cgrid: &Grid, fine_init: &mut GridField, fgrid: &Grid) -> Result<()> {
    let linear = GridField {
        values: coarse.values.clone(),
        interpolation: Interpolation::Multilinear,
    };
    for &i in &fgrid.interior {
        fine_init.values[i] = linear.interpolate(cgrid, &fgrid.point(i))?;
    }
    Ok(())
}

/// Solves the Dirichlet problem on `grid` with data `g` on the collar.
#[allow(clippy::too_many_arguments)]
pub fn solve_dirichlet(
    grid: &Grid,
    coeffs: &Coefficients,
    f: &ScalarField,
    g: &ScalarField,
    eps: f64,
    tol: f64,
    max_iter: usize,
    cfg: &SolverConfig,
) -> Result<(GridField, SolveReport)> {
    if g.dim() != grid.n {
        return Err(Error::DimensionMismatch {
            expected: grid.n,
            got: g.dim(),
        });
    }
    let start = Instant::now();
    // Coarser grids with the same box and eps, coarsest first.
    let mut levels = vec![grid.clone()];
    if cfg.nested {
        loop {
            let h = levels.last().expect("nonempty").h * 2.0;
            if h > eps {
                break;
            }
            match build_grid(&grid.lo, &grid.hi, h, eps, coeffs, cfg.truncation.as_ref()) {
                Ok(c) => levels.push(c),
                Err(_) => break,
            }
        }
    }
    levels.reverse();
    let mut coarse: Option<(GridField, Grid)> = None;
    let mut coarse_iterations = Vec::new();
    let last = levels.len() - 1;
    for (li, lg) in levels.into_iter().enumerate() {
        let scheme = Scheme::new(lg, coeffs, f, eps, cfg)?;
        let mut init = scheme.boundary_field(g, None);
        if let Some((cu, cg)) = &coarse {
            prolong(cu, cg, &mut init, &scheme.grid)?;
        }
        let (u, mut report) = iterate_to_tolerance(&scheme, init, tol, max_iter, cfg.stagnation_window)?;
        if li == last {
            report.coarse_iterations = coarse_iterations;
            report.wall_time = start.elapsed();
            return Ok((u, report));
        }
        coarse_iterations.push((scheme.grid.h, report.iterations));
        coarse = Some((u, scheme.grid.clone()));
    }
    unreachable!("the finest level always returns")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace() -> Coefficients {
        Coefficients::inf(MatrixFamily::identity(2))
    }

    #[test]
    fn collar_widths() {
        let g = build_grid(&[0.0, 0.0], &[1.0, 1.0], 1.0 / 64.0, 1.0 / 16.0, &laplace(), None).unwrap();
        assert!((g.collar_width() - 1.0 / 16.0).abs() < 1e-15);
        let band = Coefficients::inf(MatrixFamily::pucci_band(2, 1.0, 4.0).unwrap());
        let g = build_grid(&[0.0, 0.0], &[1.0, 1.0], 1.0 / 64.0, 1.0 / 16.0, &band, None).unwrap();
        assert!((g.collar_width() - 2.0 / 16.0).abs() < 1e-15);
        let kh = Coefficients::inf(MatrixFamily::k_hessian(2, 2).unwrap());
        let phi = PhiSchedule::power(0.5).unwrap();
        let eps: f64 = 1.0 / 64.0;
        let g = build_grid(&[0.0, 0.0], &[1.0, 1.0], 1.0 / 256.0, eps, &kh, Some(&phi)).unwrap();
        assert!((g.collar_width() - eps.sqrt()).abs() < 1e-12);
        assert!(build_grid(&[0.0, 0.0], &[1.0, 1.0], 1.0 / 64.0, 1.0 / 16.0, &kh, None).is_err());
        assert!(build_grid(&[0.0, 0.0], &[1.0, 1.0], 1.0 / 8.0, 0.6, &laplace(), None).is_err());
    }

    #[test]
    fn interior_probes_stay_inside() {
        let band = Coefficients::inf(MatrixFamily::pucci_band(2, 1.0, 2.0).unwrap());
        let g = build_grid(&[-1.0, -1.0], &[1.0, 1.0], 1.0 / 16.0, 1.0 / 8.0, &band, None).unwrap();
        for &i in g.interior() {
            let x = g.point(i);
            for d in 0..2 {
                assert!(x[d] - g.collar_width() >= -1.0 - 1e-12);
                assert!(x[d] + g.collar_width() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let g = build_grid(&[0.0, 0.0], &[1.0, 1.0], 0.125, 0.25, &laplace(), None).unwrap();
        let q = |x: &[f64]| 1.0 + x[0] - 2.0 * x[1] + 3.0 * x[0] * x[0] - x[0] * x[1] + 0.5 * x[1] * x[1];
        let l = |x: &[f64]| 1.0 + x[0] - 2.0 * x[1] + 0.25 * x[0] * x[1];
        let fq = GridField::from_fn(&g, Interpolation::Multiquadratic, q);
        let fl = GridField::from_fn(&g, Interpolation::Multilinear, l);
        for p in [[0.33, 0.71], [0.0, 1.0], [0.999, 0.02]] {
            assert!((fq.interpolate(&g, &p).unwrap() - q(&p)).abs() < 1e-12);
            assert!((fl.interpolate(&g, &p).unwrap() - l(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_step_from_zero_with_unit_source() {
        let grid = build_grid(&[0.0, 0.0], &[1.0, 1.0], 1.0 / 16.0, 1.0 / 8.0, &laplace(), None).unwrap();
        let zero = ScalarField::constant(2, 0.0);
        let f = ScalarField::constant(2, -1.0);
        let scheme = Scheme::new(grid.clone(), &laplace(), &f, 1.0 / 8.0, &SolverConfig::default()).unwrap();
        let u0 = scheme.boundary_field(&zero, Some(0.0));
        let u1 = scheme.step(&u0);
        let kappa = (1.0_f64 / 8.0).powi(2) / 8.0;
        for &i in grid.interior() {
            assert!((u1.values()[i] - kappa).abs() < 1e-15);
        }
        for i in grid.box_nodes() {
            if grid.kind(i) == NodeKind::Collar {
                assert_eq!(u1.values()[i], 0.0);
            }
        }
    }

    #[test]
    fn constant_data_is_fixed_in_one_step() {
        let grid = build_grid(&[0.0, 0.0], &[1.0, 1.0], 1.0 / 16.0, 1.0 / 8.0, &laplace(), None).unwrap();
        let (u, rep) = solve_dirichlet(
            &grid,
            &laplace(),
            &ScalarField::constant(2, 0.0),
            &ScalarField::constant(2, 2.5),
            1.0 / 8.0,
            1e-12,
            10,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(u.max_error(&grid, |_| 2.5) < 1e-14);
    }
}
