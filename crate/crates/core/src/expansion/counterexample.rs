//! The non-admissible example `u = −|x₁|^{5/2} + x₁²x₂² + x₂^{10}` with the
//! unbounded family `A_δ = diag(√(2/δ), 1/δ)`.
//!
//! `D²u(0) = 0`, so the determinant-type target at the origin is 0, yet
//! `inf_δ ⨍_{B_ε} u(A_δ y) dy` is negative and of order larger than `ε²`,
//! making the normalized increment diverge. Per `δ` the average is exactly
//!
//! ```text
//! −C₁ ε^{5/2}/δ^{5/4} + C₂ ε⁴/δ³ + C₃ ε^{10}/δ^{10}
//! ```

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use super::fit::log_log_slope;
use super::normalization;
use crate::error::{Error, Result};
use crate::quadrature::{ball_average, QuadRule, Region, ScalarField, Smoothness};
use crate::symmat::SymMatrix;

pub fn counterexample_field() -> ScalarField {
    ScalarField::new(2, "-|x1|^(5/2)+x1^2*x2^2+x2^10", |x| {
        -x[0].abs().powf(2.5) + x[0] * x[0] * x[1] * x[1] + x[1].powi(10)
    })
    .with_gradient(|x| {
        vec![
            -2.5 * x[0].abs().powf(1.5) * x[0].signum() + 2.0 * x[0] * x[1] * x[1],
            2.0 * x[0] * x[0] * x[1] + 10.0 * x[1].powi(9),
        ]
    })
    .with_hessian(|x| {
        SymMatrix::from_fn(2, |i, j| match (i, j) {
            (0, 0) => -3.75 * x[0].abs().sqrt() + 2.0 * x[1] * x[1],
            (1, 1) => 2.0 * x[0] * x[0] + 90.0 * x[1].powi(8),
            _ => 4.0 * x[0] * x[1],
        })
    })
    .with_smoothness(Smoothness::C2ExceptAt(vec![vec![0.0, 0.0]]))
}

/// `A_δ = diag(√(2/δ), 1/δ)`.
pub fn a_delta(delta: f64) -> SymMatrix {
    SymMatrix::diag(&[(2.0 / delta).sqrt(), 1.0 / delta])
}

/// `(C₁, C₂, C₃)` from one-dimensional integrals over the unit disc,
/// using `y₁ = sin t` to remove the endpoint singularity of the chord
/// length.
pub fn three_term_constants() -> [f64; 3] {
    let gl = GaussLegendre::new(NonZeroUsize::new(200).expect("nonzero"));
    // ⨍_{B_1} g(y₁) dy = (1/π) ∫_{-1}^{1} g(s) 2√(1−s²) ds.
    let disc_avg = |g: &dyn Fn(f64) -> f64| {
        2.0 / PI * gl.integrate(0.0, PI / 2.0, |t| 2.0 * g(t.sin()) * t.cos() * t.cos())
    };
    let c1 = 2f64.powf(1.25) * disc_avg(&|s: f64| s.powf(2.5));
    // ⨍ y₁²y₂² integrates y₂² over the chord: (2/3)(1−s²)^{3/2}.
    let y1y2 = 2.0 / PI
        * gl.integrate(0.0, PI / 2.0, |t| {
            let (s, c) = (t.sin(), t.cos());
            s * s * (2.0 / 3.0) * c.powi(3) * c
        });
    let c2 = 2.0 * y1y2;
    let c3 = disc_avg(&|s: f64| s.powi(10));
    [c1, c2, c3]
}

pub fn three_term_average(c: &[f64; 3], eps: f64, delta: f64) -> f64 {
    -c[0] * eps.powf(2.5) / delta.powf(1.25)
        + c[1] * eps.powi(4) / delta.powi(3)
        + c[2] * eps.powi(10) / delta.powi(10)
}

/// Log-uniform `δ` grid `10^lo ..= 10^hi`, optionally refined by golden
/// section around the best grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaGrid {
    pub log10_lo: f64,
    pub log10_hi: f64,
    pub points: usize,
    pub refine: bool,
}

impl Default for DeltaGrid {
    fn default() -> Self {
        Self {
            log10_lo: -7.0,
            log10_hi: 0.0,
            points: 141,
            refine: true,
        }
    }
}

impl DeltaGrid {
    fn validate(&self) -> Result<()> {
        if !(self.log10_lo < self.log10_hi) || self.points < 2 {
            return Err(Error::InvalidParameter(format!(
                "delta grid needs lo < hi and >= 2 points, got {self:?}"
            )));
        }
        Ok(())
    }

    fn values(&self) -> Vec<f64> {
        let step = (self.log10_hi - self.log10_lo) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| 10f64.powf(self.log10_lo + step * i as f64))
            .collect()
    }

    fn covers(&self, delta: f64) -> bool {
        let l = delta.log10();
        l >= self.log10_lo && l <= self.log10_hi
    }
}

#[derive(Clone, Debug)]
pub struct CounterexampleRecord {
    pub eps: f64,
    pub inf_average: f64,
    pub argmin_delta: f64,
    /// The average at `δ = ε^{1/2}`.
    pub witness_average: f64,
    /// `2(n+2)/ε² (inf − u(0))`.
    pub normalized: f64,
}

#[derive(Clone, Debug)]
pub struct CounterexampleReport {
    pub records: Vec<CounterexampleRecord>,
    /// Slope of `log(−inf_δ average)` against `log ε`.
    pub fitted_exponent: Option<f64>,
    /// Same slope for the witness scale `δ = ε^{1/2}` alone.
    pub witness_exponent: Option<f64>,
    pub constants: [f64; 3],
    pub rule: QuadRule,
    pub notes: Vec<String>,
}

fn golden_min(f: &mut dyn FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, iters: usize) -> Result<(f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

/// Minimizes the ball average over `δ` for each `ε` and fits the exponent
/// of `−inf_δ`.
pub fn counterexample_611(eps: &[f64], grid: DeltaGrid, rule: QuadRule) -> Result<CounterexampleReport> {
    grid.validate()?;
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter("eps list must be nonempty and positive".into()));
    }
    let u = counterexample_field();
    let origin = [0.0, 0.0];
    let zero = [0.0, 0.0];
    let c_norm = normalization(2, Region::Ball);
    let mut notes = Vec::new();
    let mut records = Vec::with_capacity(eps.len());
    for &e in eps {
        let avg = |d: f64| ball_average(&u, &origin, e, &a_delta(d), &zero, rule);
        let witness = e.sqrt();
        let mut candidates = grid.values();
        if grid.covers(witness) {
            candidates.push(witness);
        } else {
            notes.push(format!("delta grid misses the witness scale eps^(1/2) = {witness:e} at eps = {e:e}"));
        }
        let mut best = (f64::NAN, f64::INFINITY);
        let mut best_idx = 0;
        for (i, &d) in candidates.iter().enumerate() {
            let v = avg(d)?;
            if v < best.1 {
                best = (d, v);
                best_idx = i;
            }
        }
        if grid.refine && best_idx < grid.points {
            let step = (grid.log10_hi - grid.log10_lo) / (grid.points - 1) as f64;
            let l = best.0.log10();
            let (lo, hi) = ((l - step).max(grid.log10_lo), (l + step).min(grid.log10_hi));
            let mut g = |t: f64| avg(10f64.powf(t));
            let (t, v) = golden_min(&mut g, lo, hi, 40)?;
            if v < best.1 {
                best = (10f64.powf(t), v);
            }
        }
        let witness_average = avg(witness)?;
        records.push(CounterexampleRecord {
            eps: e,
            inf_average: best.1,
            argmin_delta: best.0,
            witness_average,
            normalized: c_norm / (e * e) * (best.1 - u.eval(&origin)),
        });
    }
    let xs: Vec<f64> = records.iter().map(|r| r.eps).collect();
    let inf: Vec<f64> = records.iter().map(|r| -r.inf_average).collect();
    let wit: Vec<f64> = records.iter().map(|r| -r.witness_average).collect();
    if inf.iter().any(|v| *v <= 0.0) {
        notes.push("some infima are nonnegative and were left out of the fit".into());
    }
    Ok(CounterexampleReport {
        fitted_exponent: log_log_slope(&xs, &inf),
        witness_exponent: log_log_slope(&xs, &wit),
        records,
        constants: three_term_constants(),
        rule,
        notes,
    })
}
