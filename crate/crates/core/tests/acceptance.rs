//! Acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. The
//! process fails if any criterion outside `KNOWN_UNATTAINABLE` fails, or if
//! a known-unattainable one unexpectedly passes its documented analysis.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use meanvalue::expansion::{
    counterexample_611, delta_epsilon, normalization, verify_expansion, verify_expansion_with_target, Coefficients,
    DeltaGrid, MeanValueConfig, Offset, Verdict,
};
use meanvalue::families::{grassmann_family, random_frame, MatrixFamily, PhiSchedule, SupInfSpec};
use meanvalue::heisenberg::{horizontal_ma_mvf, sublaplacian_expansion_check, HDerivatives, HPoint, HScalarField};
use meanvalue::operators::{
    isaacs_wrap_value, k_hessian_value, pucci_extremal, GridBasis, GridRadius, NGridSpec, OperatorHandle,
    OperatorSpec, OperatorValue, Sign,
};
use meanvalue::quadrature::{ball_average, sphere_average, QuadRule, ScalarField};
use meanvalue::solver::{build_grid, solve_dirichlet, Interpolation, SolverConfig};
use meanvalue::symmat::{cone_membership, sigma_k, ConeQuery, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Criteria that cannot be met as stated; see `criterion_5` for the
/// measured values and the reason.
const KNOWN_UNATTAINABLE: &[u32] = &[5];

struct Outcome {
    pass: bool,
    detail: String,
    /// For known-unattainable criteria: whether the measured behaviour
    /// matches the documented analysis.
    as_analyzed: Option<bool>,
}

fn pass_if(pass: bool, detail: String) -> Outcome {
    Outcome {
        pass,
        detail,
        as_analyzed: None,
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
    SymMatrix::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn quadratic(m: &SymMatrix, rng: &mut ChaCha8Rng) -> ScalarField {
    let n = m.dim();
    let p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    ScalarField::quadratic(m.clone(), p, rng.random_range(-1.0..1.0)).unwrap()
}

fn criterion_1() -> Outcome {
    let mut r = rng(101);
    let rule = QuadRule::default();
    let mut worst: f64 = 0.0;
    for n in [2, 3] {
        let zero = vec![0.0; n];
        let id = SymMatrix::identity(n);
        for _ in 0..100 {
            let m = random_sym(n, &mut r);
            // ⟨My,y⟩ = 2·(½⟨My,y⟩)
            let u = ScalarField::quadratic(m.clone(), vec![0.0; n], 0.0).unwrap();
            let tr = m.trace();
            let scale = tr.abs().max(m.max_abs());
            for eps in [1.0, 0.1, 0.01] {
                let ball = 2.0 * ball_average(&u, &zero, eps, &id, &zero, rule).unwrap();
                let sphere = 2.0 * sphere_average(&u, &zero, eps, &id, rule).unwrap();
                let eb = ((n + 2) as f64 / (eps * eps) * ball - tr).abs() / scale;
                let es = (n as f64 / (eps * eps) * sphere - tr).abs() / scale;
                worst = worst.max(eb).max(es);
            }
        }
    }
    pass_if(worst <= 1e-10, format!("max relative error {worst:.3e} (tol 1e-10)"))
}

fn criterion_2() -> Outcome {
    let mut r = rng(202);
    let mut cfg = MeanValueConfig::new(vec![0.25, 0.0625]).unwrap();
    cfg.sampler.count = 64;
    let n = 3;
    let x = [0.3, -0.2, 0.1];
    let cases: Vec<(&str, Coefficients, OperatorSpec)> = vec![
        (
            "M-",
            Coefficients::inf(MatrixFamily::pucci_band(n, 1.0, 2.0).unwrap()),
            "pucci-:theta=1,Theta=2".parse().unwrap(),
        ),
        (
            "M+",
            Coefficients::sup(MatrixFamily::pucci_band(n, 1.0, 2.0).unwrap()),
            "pucci+:theta=1,Theta=2".parse().unwrap(),
        ),
        (
            "lambda1",
            Coefficients::inf(MatrixFamily::rank_one_sphere(n)),
            "lambda:k=1".parse().unwrap(),
        ),
        (
            "lambda2",
            Coefficients::SupInf(grassmann_family(2, n, 64, 7).unwrap()),
            "lambda:k=2".parse().unwrap(),
        ),
        (
            "lambda3",
            Coefficients::sup(MatrixFamily::rank_one_sphere(n)),
            "lambda:k=3".parse().unwrap(),
        ),
        (
            "P-2",
            Coefficients::inf(MatrixFamily::projection_rank_k(n, 2).unwrap()),
            "trunc-:k=2".parse().unwrap(),
        ),
        (
            "P+2",
            Coefficients::sup(MatrixFamily::projection_rank_k(n, 2).unwrap()),
            "trunc+:k=2".parse().unwrap(),
        ),
    ];
    let mut worst: f64 = 0.0;
    let mut worst_case = "";
    for (name, coeffs, op) in &cases {
        for _ in 0..20 {
            let m = random_sym(n, &mut r);
            let u = quadratic(&m, &mut r);
            let target = op.evaluate(&m).unwrap().finite().unwrap();
            for &e in &cfg.eps {
                let d = delta_epsilon(&u, &x, coeffs, &cfg, e).unwrap().delta;
                if (d - target).abs() > worst {
                    worst = (d - target).abs();
                    worst_case = name;
                }
            }
        }
    }
    pass_if(
        worst <= 1e-9,
        format!("max |Δ−F| {worst:.3e} over 7 operators x 20 Hessians (tol 1e-9; worst {worst_case})"),
    )
}

/// A C⁴ field with distinct Hessian eigenvalues at the test point.
fn smooth_field() -> ScalarField {
    meanvalue::expr::field_from_expr("x1^4/3 + x1*x2^3 - x2^2*x3^2 + 2*x3^4 + x1^2 - x2*x3 + 0.5*x2^2", 3).unwrap()
}

fn criterion_3() -> Outcome {
    let u = smooth_field();
    let x = [0.4, -0.3, 0.2];
    let n = 3;
    let mut cfg = MeanValueConfig::dyadic(3, 8).unwrap();
    cfg.rule = QuadRule::Gauss { radial: 6, angular: 16 };
    cfg.sampler.count = 64;
    let cases: Vec<(&str, Coefficients, OperatorSpec)> = vec![
        (
            "band",
            Coefficients::inf(MatrixFamily::pucci_band(n, 1.0, 2.0).unwrap()),
            "pucci-:theta=1,Theta=2".parse().unwrap(),
        ),
        (
            "rank1 inf",
            Coefficients::inf(MatrixFamily::rank_one_sphere(n)),
            "lambda:k=1".parse().unwrap(),
        ),
        (
            "rank1 sup-inf",
            Coefficients::SupInf(SupInfSpec::explicit(vec![MatrixFamily::rank_one_sphere(n)]).unwrap()),
            "lambda:k=1".parse().unwrap(),
        ),
        (
            "grassmann k=1 (64)",
            Coefficients::SupInf(grassmann_family(1, n, 64, 5).unwrap()),
            "lambda:k=1".parse().unwrap(),
        ),
        (
            "grassmann k=2 (64)",
            Coefficients::SupInf(grassmann_family(2, n, 64, 11).unwrap()),
            "lambda:k=2".parse().unwrap(),
        ),
        (
            "proj k=2",
            Coefficients::inf(MatrixFamily::projection_rank_k(n, 2).unwrap()),
            "trunc-:k=2".parse().unwrap(),
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, coeffs, op) in &cases {
        let rep = verify_expansion(&u, &x, coeffs, op, &cfg).unwrap();
        let order = rep.fitted_order;
        let good = order.is_some_and(|o| o >= 1.7);
        ok &= good;
        parts.push(format!("{name}: {}", order.map_or("none".into(), |o| format!("{o:.3}"))));
    }
    pass_if(ok, format!("fitted orders (need >= 1.7): {}", parts.join("; ")))
}

fn random_gamma2_matrix(r: &mut ChaCha8Rng, inside: bool) -> SymMatrix {
    loop {
        let mu: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..3.0)).collect();
        let in_open = cone_membership(&mu, ConeQuery::open(2));
        let in_closed = cone_membership(&mu, ConeQuery::closed(2));
        if (inside && in_open && sigma_k(&mu, 2).unwrap() > 0.05) || (!inside && !in_closed) {
            return SymMatrix::from_frame(&random_frame(3, r), &mu);
        }
    }
}

/// Brute-force `min Σ μ_i b_i` over the n = 3, k = 2 family with top
/// eigenvalue at most `cap`, where `b_i = σ_{1,i}(γ)` are the squared
/// eigenvalues. In these variables `σ_2(γ) = 1` reads
/// `(Σb)² − 2|b|² = 4` and the cap is `b_i ≤ cap²`.
fn capped_k2_infimum(mu: &[f64], cap: f64) -> f64 {
    let c = cap * cap;
    let steps = 600;
    let grid: Vec<f64> = (0..=steps).map(|j| c * (j as f64 / steps as f64).powi(3)).collect();
    let mut best = f64::INFINITY;
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        for &bj in &grid {
            for &bk in &grid {
                let (s, q) = (bj + bk, bj * bj + bk * bk);
                // −b² + 2 s b + s² − 2q − 4 = 0
                let disc = 2.0 * s * s - 2.0 * q - 4.0;
                if disc < 0.0 {
                    continue;
                }
                for bi in [s + disc.sqrt(), s - disc.sqrt()] {
                    if (0.0..=c).contains(&bi) {
                        best = best.min(mu[i] * bi + mu[j] * bj + mu[k] * bk);
                    }
                }
            }
        }
    }
    best
}

fn criterion_4() -> Outcome {
    let mut r = rng(404);
    let fam = Coefficients::inf(MatrixFamily::k_hessian(3, 2).unwrap());
    let exact_rule = QuadRule::Gauss { radial: 3, angular: 4 };
    let x = [0.1, 0.2, -0.1];
    let eps = 0.1;
    let mut injected = MeanValueConfig::new(vec![eps]).unwrap();
    injected.rule = exact_rule;
    injected.sampler.count = 256;
    // The infimum inside the cone is attained at a finite coefficient; the
    // cap only makes the unbounded family admissible for sampling.
    injected.truncation = Some(PhiSchedule::Constant(1e6));
    let mut random = injected.clone();
    random.inject = false;
    random.sampler.count = 10_000;
    let (mut worst_inj, mut worst_rand, mut below) = (0.0_f64, f64::NEG_INFINITY, 0.0_f64);
    for _ in 0..50 {
        let m = random_gamma2_matrix(&mut r, true);
        let u = quadratic(&m, &mut r);
        let sq: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| m.get(i, j).powi(2)).sum();
        let target = 2.0 * (0.5 * (m.trace().powi(2) - sq)).sqrt();
        let di = delta_epsilon(&u, &x, &fam, &injected, eps).unwrap().delta;
        worst_inj = worst_inj.max((di - target).abs());
        let dr = delta_epsilon(&u, &x, &fam, &random, eps).unwrap().delta;
        worst_rand = worst_rand.max(dr - target);
        below = below.min(dr - target);
    }
    // Outside the cone, M comes from the same Gaussian ensemble as elsewhere.
    let mut worst_outside = f64::NEG_INFINITY;
    let mut worst_gap: f64 = 0.0;
    let mut drawn = 0;
    while drawn < 20 {
        let m = random_sym(3, &mut r);
        let mu = meanvalue::symmat::eigenvalues(&m).unwrap();
        if cone_membership(&mu, ConeQuery::closed(2)) {
            continue;
        }
        drawn += 1;
        assert!(k_hessian_value(&m, 2).unwrap().is_minus_infinity());
        let u = quadratic(&m, &mut r);
        for cap in [1e2, 1e3] {
            let mut capped = injected.clone();
            capped.truncation = Some(PhiSchedule::Constant(cap));
            capped.sampler.count = 4096;
            let d = delta_epsilon(&u, &x, &fam, &capped, eps).unwrap().delta;
            worst_outside = worst_outside.max(d);
            let exact = capped_k2_infimum(&mu, cap);
            worst_gap = worst_gap.max((d - exact) / exact.abs());
        }
    }
    let ok = worst_inj <= 1e-6
        && worst_rand <= 5e-2
        && below >= -1e-9
        && worst_outside < -1e3
        && (-1e-6..=1e-2).contains(&worst_gap);
    pass_if(
        ok,
        format!(
            "injected max err {worst_inj:.2e} (tol 1e-6); random excess max {worst_rand:.2e}, min {below:.1e} (need in [0, 5e-2]); outside Γ̄2 largest capped Δ {worst_outside:.3e} (need < -1e3), max relative gap to exact capped infimum {worst_gap:.1e}"
        ),
    )
}

/// Beta function through the Lanczos log-gamma of `statrs`.
fn beta(a: f64, b: f64) -> f64 {
    statrs::function::beta::beta(a, b)
}

fn criterion_5() -> Outcome {
    // Independent closed forms of the three-term constants.
    let c1 = 2f64.powf(1.25) * 2.0 / PI * beta(1.75, 1.5);
    let c3 = 2.0 / PI * beta(5.5, 1.5);
    let eps: Vec<f64> = (0..9).map(|i| 10f64.powf(-2.0 - 0.25 * i as f64)).collect();
    let rule = QuadRule::MonteCarlo {
        nodes: 100_000,
        seed: 611,
    };
    let rep = counterexample_611(&eps, DeltaGrid::default(), rule).unwrap();
    let constants_ok = (rep.constants[0] - c1).abs() < 1e-9 && (rep.constants[2] - c3).abs() < 1e-12;
    let fitted = rep.fitted_exponent.unwrap_or(f64::NAN);
    let witness = rep.witness_exponent.unwrap_or(f64::NAN);
    let at_1e3 = rep
        .records
        .iter()
        .find(|r| (r.eps - 1e-3).abs() < 1e-12)
        .map(|r| r.normalized)
        .unwrap_or(f64::NAN);
    let exponent_ok = (1.8..=1.95).contains(&fitted);
    let diverges_ok = at_1e3 < -1e2;
    // The infimum over δ balances the first two terms at δ ~ ε^{6/7}, which
    // gives exponent 10/7 rather than the 15/8 of the witness scale
    // δ = ε^{1/2}. The witness exponent must still be near 15/8.
    let analyzed = constants_ok && diverges_ok && (fitted - 10.0 / 7.0).abs() < 0.02 && (witness - 1.875).abs() < 0.05;
    Outcome {
        pass: exponent_ok && diverges_ok && constants_ok,
        detail: format!(
            "inf-over-δ exponent {fitted:.4} (need [1.8,1.95]); witness δ=ε^(1/2) exponent {witness:.4}; normalized Δ(1e-3) {at_1e3:.1} (need < -100); C1 {:.6} vs beta-function {c1:.6}",
            rep.constants[0]
        ),
        as_analyzed: Some(analyzed),
    }
}

fn criterion_6() -> Outcome {
    let mut r = rng(606);
    let base = OperatorHandle::from_spec("pucci-:theta=1,Theta=2".parse().unwrap()).unwrap();
    let grid = NGridSpec::new(GridRadius::RelativeToM(2.0), 33, GridBasis::DiagonalInFrame).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = random_sym(2, &mut r);
        let w = isaacs_wrap_value(&base, &m, 1.0, 2.0, &grid).unwrap();
        worst = worst.max((w - pucci_extremal(&m, 1.0, 2.0, Sign::Minus).unwrap()).abs());
    }
    // Eigenvalues at multiples of ‖M‖/8 lie on the grid.
    let mut worst_on: f64 = 0.0;
    for _ in 0..20 {
        let s = r.random_range(0.5..3.0);
        let j = r.random_range(-8..=8) as f64;
        let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let m = SymMatrix::from_frame(&random_frame(2, &mut r), &[sign * s, j / 8.0 * s]);
        let w = isaacs_wrap_value(&base, &m, 1.0, 2.0, &grid).unwrap();
        worst_on = worst_on.max((w - pucci_extremal(&m, 1.0, 2.0, Sign::Minus).unwrap()).abs());
    }
    // The same operator through the ball-average Isaacs formula.
    let coeffs = Coefficients::Isaacs {
        base: base.clone(),
        theta: 1.0,
        big_theta: 2.0,
        grid,
    };
    let mut cfg = MeanValueConfig::new(vec![0.1]).unwrap();
    cfg.sampler.count = 64;
    let mut worst_mv: f64 = 0.0;
    for _ in 0..3 {
        let m = random_sym(2, &mut r);
        let u = quadratic(&m, &mut r);
        let d = delta_epsilon(&u, &[0.0, 0.0], &coeffs, &cfg, 0.1).unwrap().delta;
        worst_mv = worst_mv.max((d - pucci_extremal(&m, 1.0, 2.0, Sign::Minus).unwrap()).abs());
    }
    pass_if(
        worst <= 0.05 && worst_on <= 1e-12 && worst_mv <= 0.05,
        format!(
            "random max err {worst:.3e} (tol 0.05); on-grid max err {worst_on:.1e} (tol 1e-12); mean-value form max err {worst_mv:.3e}"
        ),
    )
}

/// `u = sin x1 + x1 x2² + e^{x2}/2` with hand-written derivatives.
fn variant_field() -> (ScalarField, impl Fn(&[f64]) -> Vec<f64>, impl Fn(&[f64]) -> SymMatrix) {
    let grad = |x: &[f64]| vec![x[0].cos() + x[1] * x[1], 2.0 * x[0] * x[1] + 0.5 * x[1].exp()];
    let hess = |x: &[f64]| {
        SymMatrix::from_rows(&[
            vec![-x[0].sin(), 2.0 * x[1]],
            vec![2.0 * x[1], 2.0 * x[0] + 0.5 * x[1].exp()],
        ])
        .unwrap()
    };
    let u = ScalarField::new(2, "sin x1 + x1 x2^2 + e^x2/2", |x| {
        x[0].sin() + x[0] * x[1] * x[1] + 0.5 * x[1].exp()
    })
    .with_gradient(grad)
    .with_hessian(hess);
    (u, grad, hess)
}

fn criterion_7() -> Outcome {
    let (u, grad, hess) = variant_field();
    let x = [0.3, 0.2];
    let a1 = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.8]]).unwrap();
    let a2 = SymMatrix::from_rows(&[vec![1.4, -0.2], vec![-0.2, 0.6]]).unwrap();
    let members = vec![a1.clone(), a2.clone()];
    let fam = Coefficients::inf(MatrixFamily::finite(members.clone()).unwrap());
    let v = vec![0.6, 0.8];
    let (g, h) = (grad(&x), hess(&x));
    let c = normalization(2, meanvalue::quadrature::Region::Ball);
    let tr = |a: &SymMatrix| {
        let ad = a.to_dense();
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    s += ad.get(k, i) * h.get(k, j) * ad.get(j, i);
                }
            }
        }
        s
    };
    let off_target = members
        .iter()
        .map(|a| {
            let av = a.mul_vec(&v);
            tr(a) / c + g[0] * av[0] + g[1] * av[1]
        })
        .fold(f64::INFINITY, f64::min);
    let mut cfg = MeanValueConfig::dyadic(3, 9).unwrap();
    cfg.offset = Some(Offset::new(v.clone(), 2.0).unwrap());
    let off = verify_expansion_with_target(&u, &x, &fam, OperatorValue::Finite(off_target), &cfg).unwrap();

    let single = Coefficients::inf(MatrixFamily::identity(2));
    let zo_target = h.trace() / c - u.eval(&x);
    let mut cfg = MeanValueConfig::dyadic(3, 9).unwrap();
    cfg.zero_order = 1.0;
    let zo = verify_expansion_with_target(&u, &x, &single, OperatorValue::Finite(zo_target), &cfg).unwrap();
    let r_off = off.last_residual().unwrap().abs();
    let r_zo = zo.last_residual().unwrap().abs();
    pass_if(
        r_off <= 5e-3 && r_zo <= 5e-3 && off.verdict == Verdict::Converges && zo.verdict == Verdict::Converges,
        format!(
            "off-center |r| {r_off:.2e} ({}); zero-order |r| {r_zo:.2e} ({}) (tol 5e-3)",
            off.verdict, zo.verdict
        ),
    )
}

fn criterion_8() -> Outcome {
    let (h, eps, tol) = (1.0 / 64.0, 1.0 / 16.0, 1e-6);
    let (lo, hi) = ([-1.0, -1.0], [1.0, 1.0]);
    let field = |s: &str| meanvalue::expr::field_from_expr(s, 2).unwrap();
    let half_r2 = |x: &[f64]| 0.5 * (x[0] * x[0] + x[1] * x[1]);
    let problems: Vec<(&str, Coefficients, SolverConfig, &str, &str, f64)> = vec![
        (
            "harmonic",
            Coefficients::inf(MatrixFamily::identity(2)),
            SolverConfig::default(),
            "0",
            "x1^2-x2^2",
            5e-3,
        ),
        (
            "monge-ampere",
            Coefficients::inf(MatrixFamily::det_one(2)),
            SolverConfig {
                truncation: Some(PhiSchedule::Constant(8.0)),
                ..SolverConfig::default()
            },
            "2",
            "0.5*(x1^2+x2^2)",
            2e-2,
        ),
        (
            "pucci",
            Coefficients::inf(MatrixFamily::pucci_band(2, 1.0, 2.0).unwrap()),
            SolverConfig::default(),
            "2",
            "0.5*(x1^2+x2^2)",
            1e-2,
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, coeffs, sc, f, g, bound) in &problems {
        let grid = build_grid(&lo, &hi, h, eps, coeffs, sc.truncation.as_ref()).unwrap();
        let (u, rep) = solve_dirichlet(&grid, coeffs, &field(f), &field(g), eps, tol, 20_000, sc).unwrap();
        let exact = field(g);
        let err = u.max_error(&grid, |x| exact.eval(x));
        let _ = half_r2;
        ok &= rep.converged && err <= *bound;
        parts.push(format!("{name} err {err:.2e} (<= {bound:.0e}, {} it)", rep.iterations));
    }
    // Comparison on random boundary pairs g <= g'.
    let mut r = rng(808);
    let coeffs = Coefficients::inf(MatrixFamily::pucci_band(2, 1.0, 2.0).unwrap());
    let (hc, ec) = (1.0 / 32.0, 1.0 / 8.0);
    let grid = build_grid(&lo, &hi, hc, ec, &coeffs, None).unwrap();
    let sc = SolverConfig::default();
    let mut worst_violation: f64 = f64::NEG_INFINITY;
    for _ in 0..3 {
        let c: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let d: Vec<f64> = (0..3).map(|_| r.random_range(0.0..1.0)).collect();
        let g = format!(
            "{}+{}*x1+{}*x2+{}*x1^2+{}*x1*x2+{}*x2^2",
            c[0], c[1], c[2], c[3], c[4], c[5]
        );
        let gp = format!("{g}+0.05+{}*(x1-{})^2+{}*abs(x2)", d[0], d[1], d[2]);
        let f = field("1");
        let (u, _) = solve_dirichlet(&grid, &coeffs, &f, &field(&g), ec, 1e-10, 50_000, &sc).unwrap();
        let (up, _) = solve_dirichlet(&grid, &coeffs, &f, &field(&gp), ec, 1e-10, 50_000, &sc).unwrap();
        for i in grid.box_nodes() {
            worst_violation = worst_violation.max(u.values()[i] - up.values()[i]);
        }
    }
    ok &= worst_violation <= 0.0;
    parts.push(format!("comparison max(u−u') {worst_violation:.2e} (need <= 0)"));
    let _ = Interpolation::default();
    pass_if(ok, parts.join("; "))
}

fn criterion_9() -> Outcome {
    let mut r = rng(909);
    let mut pt = || {
        HPoint::new(
            r.random_range(-2.0..2.0),
            r.random_range(-2.0..2.0),
            r.random_range(-2.0..2.0),
        )
    };
    let mut worst_group: f64 = 0.0;
    let mut worst_hom: f64 = 0.0;
    for _ in 0..1000 {
        let (p, q, s) = (pt(), pt(), pt());
        let a = (p * q) * s;
        let b = p * (q * s);
        worst_group = worst_group.max((a.x - b.x).abs().max((a.y - b.y).abs()).max((a.z - b.z).abs()));
        let e = p * p.inv();
        worst_group = worst_group.max(e.x.abs().max(e.y.abs()).max(e.z.abs()));
        let lam = 0.1 + 3.0 * (q.x.abs() / 2.0);
        worst_hom = worst_hom.max((p.dilate(lam).gauge() - lam * p.gauge()).abs() / (1.0 + lam * p.gauge()));
    }
    let v = HScalarField::new("x^2+y^2", |q| q.x * q.x + q.y * q.y).with_derivatives(|q| HDerivatives {
        x: 2.0 * q.x,
        y: 2.0 * q.y,
        xx: 2.0,
        yy: 2.0,
        xy: 0.0,
        yx: 0.0,
    });
    let q = HPoint::new(0.3, -0.7, 1.1);
    let cfg = MeanValueConfig::dyadic(2, 7).unwrap();
    let sub = sublaplacian_expansion_check(&v, q, &cfg).unwrap();
    let sub_err = sub.deltas().iter().map(|d| (d - 4.0).abs()).fold(0.0, f64::max);
    let mut cfg = MeanValueConfig::dyadic(2, 7).unwrap();
    cfg.truncation = Some(PhiSchedule::power(0.5).unwrap());
    let ma = horizontal_ma_mvf(&v, q, &cfg).unwrap();
    let ma_err = ma.last_residual().unwrap().abs();
    let ok = worst_group <= 1e-12 && worst_hom <= 1e-12 && sub_err <= 1e-6 && ma_err <= 5e-3;
    pass_if(
        ok,
        format!(
            "group {worst_group:.1e}, homogeneity {worst_hom:.1e} (tol 1e-12); sub-Laplacian limit err {sub_err:.1e} (tol 1e-6); horizontal MA limit {} err {ma_err:.1e} (tol 5e-3)",
            ma.target
        ),
    )
}

fn run_cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_mvlab"))
        .args(args)
        .output()
        .expect("run mvlab")
        .status
        .code()
        .unwrap_or(-1)
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let experiments: Vec<(&str, Vec<&str>)> = vec![
        (
            "verify",
            vec![
                "verify",
                "op=khessian:k=2",
                "family=khess:k=2",
                "u=x1^2+x2^2+0.5*x3^2+x1*x2*x3",
                "x=0.1,0.2,0.3",
                "phi=const:c=1000",
                "samples=512",
                "rule=mc:n=2000,seed=3",
                "--seed",
                "17",
            ],
        ),
        (
            "counterexample",
            vec!["counterexample", "eps=log10:-2..-3:3", "rule=mc:n=20000", "--seed", "5"],
        ),
        (
            "solve",
            vec![
                "solve",
                "lo=0,0",
                "hi=1,1",
                "h=0.0625",
                "eps=0.125",
                "family=band:theta=1,Theta=2",
                "f=1",
                "g=x1*x2",
            ],
        ),
        (
            "heis",
            vec!["heis-verify", "mode=ma", "phi=power:a=0.5", "u=x1^2+x2^2+x1*x2", "x=0.1,0.2,0.3"],
        ),
        ("selftest", vec!["selftest", "rule=mc:n=5000,seed=2", "trials=5"]),
    ];
    let mut ok = true;
    let mut compared = 0;
    for (name, args) in &experiments {
        let mut contents = Vec::new();
        for run in 0..2 {
            let prefix = dir.path().join(format!("{name}{run}"));
            let prefix_s = prefix.to_string_lossy().into_owned();
            let mut a = args.clone();
            a.push("--out");
            a.push(&prefix_s);
            let code = run_cli(&a);
            ok &= code == 0;
            let mut files: Vec<_> = std::fs::read_dir(dir.path())
                .unwrap()
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .is_some_and(|f| f.to_string_lossy().starts_with(&format!("{name}{run}.")))
                })
                .collect();
            files.sort();
            contents.push(files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>());
        }
        compared += contents[0].len();
        ok &= !contents[0].is_empty() && contents[0] == contents[1];
    }
    let _ = Path::new("");
    pass_if(ok, format!("{compared} artifacts byte-identical across repeated runs"))
}

fn main() {
    let criteria: Vec<(u32, &str, fn() -> Outcome)> = vec![
        (1, "trace identity", criterion_1),
        (2, "paraboloid exactness", criterion_2),
        (3, "convergence order", criterion_3),
        (4, "k-Hessian oracle", criterion_4),
        (5, "non-admissible counterexample", criterion_5),
        (6, "Isaacs wrap", criterion_6),
        (7, "off-center and zero-order variants", criterion_7),
        (8, "Dirichlet solver", criterion_8),
        (9, "Heisenberg group", criterion_9),
        (10, "determinism", criterion_10),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        let t = Instant::now();
        let o = run();
        let secs = t.elapsed().as_secs_f64();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{status}] {name}: {} ({secs:.1}s)", o.detail);
        let known = KNOWN_UNATTAINABLE.contains(&id);
        match (o.pass, known) {
            (true, _) | (false, true) if o.as_analyzed != Some(false) => {}
            _ => unexpected.push(id),
        }
        if known {
            println!(
                "criterion {id:>2} is known to be unattainable as stated; measured behaviour {} the recorded analysis",
                if o.as_analyzed == Some(true) { "matches" } else { "does NOT match" }
            );
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected acceptance failures: {unexpected:?}");
        std::process::exit(1);
    }
}
