//! Log-log fits and convergence verdicts for residual sequences.

/// Least-squares slope and intercept of `log y` against `log x`. Needs at
/// least two points with positive coordinates.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    log_log_fit(xs, ys).map(|(s, _)| s)
}

/// Minimum number of residuals above the noise floor for an order fit.
pub const MIN_FIT_POINTS: usize = 4;

/// Order of `|r(ε)|` in `ε`, fitted over the points whose residual exceeds
/// ten times the noise floor. `None` when fewer than four qualify.
pub fn fitted_order(eps: &[f64], residuals: &[f64], floors: &[f64]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .zip(residuals.iter().zip(floors))
        .filter(|(_, (r, f))| r.abs() > 10.0 * **f)
        .map(|(e, (r, _))| (*e, r.abs()))
        .unzip();
    if xs.len() < MIN_FIT_POINTS {
        return None;
    }
    log_log_slope(&xs, &ys)
}

/// Threshold below which a normalized increment counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = -1e3;

/// Whether the increments (ordered by decreasing `ε`) end below the
/// divergence threshold with a strictly decreasing tail.
pub fn diverging_tail(deltas: &[f64]) -> bool {
    let Some(&last) = deltas.last() else {
        return false;
    };
    if !(last < DIVERGENCE_THRESHOLD) {
        return false;
    }
    let tail = &deltas[deltas.len().saturating_sub(4)..];
    tail.windows(2).all(|w| w[1] < w[0])
}

/// Slope of `log(-Δ)` against `log ε` over the negative increments; a
/// negative value means `Δ → -∞`.
pub fn divergence_exponent(eps: &[f64], deltas: &[f64]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .zip(deltas)
        .filter(|(_, d)| **d < 0.0)
        .map(|(e, d)| (*e, -d))
        .unzip();
    log_log_slope(&xs, &ys)
}
