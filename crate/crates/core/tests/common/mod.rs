//! Independent oracles shared by the oracle tests and the acceptance run.
//! Each check returns the largest discrepancy it saw.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recurmed::data::{Cohort, MediatorKind, StepFunction, Subject};
use recurmed::estimators::{dq_conditional, estimate_effects, estimate_q, z_weights, MediationQuery, SubjectWeights};
use recurmed::fit::{
    fit_gaussian_mediator, fit_logistic, fit_models, fit_proportional_mean_design, proportional_mean_score,
    GaussianMediatorFit, MediatorModel, NewtonSettings, ProportionalMeanFit,
};
use recurmed::simulation::{generate_cohort, Scenario};
use recurmed::{EstimatorOptions, FittedModels, Method};

/// Adaptive Simpson on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn indicator(b: bool) -> f64 {
    f64::from(u8::from(b))
}

/// `int dLambda exp(beta_A a + beta_M m + beta_C' c) phi(m; mu(a*, c), sigma2) dm`
pub fn dq_by_quadrature(out: &ProportionalMeanFit, med: &GaussianMediatorFit, k: usize, a: f64, a_star: f64, c: &[f64]) -> f64 {
    let d = out.baseline.jump_sizes()[k];
    let mut row = vec![1.0, a_star];
    row.extend_from_slice(c);
    let mu = med.mean(&row);
    let sd = med.sigma2.sqrt();
    let lin = out.beta[0] * a + out.beta[2..].iter().zip(c).map(|(b, x)| b * x).sum::<f64>();
    let centre = mu + out.beta[1] * med.sigma2;
    let f = |m: f64| d * (lin + out.beta[1] * m).exp() * normal_pdf(m, mu, med.sigma2);
    simpson(&f, centre - 40.0 * sd, centre + 40.0 * sd, 1e-14)
}

pub fn fitted_example(n: usize, seed: u64) -> (Cohort, FittedModels) {
    let cohort = generate_cohort(&Scenario::standard().with_n(n), seed).unwrap();
    let fits = fit_models(&cohort).unwrap();
    (cohort, fits)
}

/// Gaussian conditional increment against quadrature, 100 random parameter sets.
pub fn dq_quadrature_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = 2;
        let beta: Vec<f64> = (0..2 + p).map(|_| rng.random_range(-0.8..0.8)).collect();
        let theta: Vec<f64> = (0..2 + p).map(|_| rng.random_range(-1.5..1.5)).collect();
        let sigma2 = rng.random_range(0.2..3.0);
        let jump = rng.random_range(0.01..0.5);
        let out = ProportionalMeanFit {
            beta,
            baseline: StepFunction::new(vec![1.0], vec![jump]).unwrap(),
            converged: true,
            iterations: 0,
            final_gradient_norm: 0.0,
        };
        let med = GaussianMediatorFit { coefficients: theta, sigma2 };
        let model = MediatorModel::Gaussian(med.clone());
        let c: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        for (a, a_star) in [(true, false), (false, false), (true, true), (false, true)] {
            let got = dq_conditional(&out, &model, 0, a, a_star, &c);
            let want = dq_by_quadrature(&out, &med, 0, indicator(a), indicator(a_star), &c);
            worst = worst.max((got - want).abs());
        }
    }
    worst
}

/// RB closed form against `P_n int int dQ(u; a, a* | C)` by quadrature.
pub fn rb_double_integral_error() -> f64 {
    let (cohort, fits) = fitted_example(300, 5);
    let MediatorModel::Gaussian(med) = &fits.mediator else { unreachable!() };
    let times = [4.8, 9.6, 14.4, 19.2, 24.0];
    let est = estimate_effects(Method::Rb, &fits, &cohort, &times, &EstimatorOptions::default()).unwrap();
    let base = &fits.outcome.baseline;
    let unit = ProportionalMeanFit { baseline: StepFunction::new(vec![1.0], vec![1.0]).unwrap(), ..fits.outcome.clone() };
    let mut worst: f64 = 0.0;
    for (a, a_star, pick) in [(true, false, 0), (false, false, 1), (true, true, 2)] {
        // the conditional integral factorizes as dLambda(u) * g(c), so take g once per subject
        let per_subject: f64 = cohort
            .subjects()
            .iter()
            .map(|s| dq_by_quadrature(&unit, med, 0, indicator(a), indicator(a_star), &s.confounders))
            .sum::<f64>()
            / cohort.len() as f64;
        for (k, &t) in times.iter().enumerate() {
            let lambda: f64 =
                base.jump_times().iter().zip(base.jump_sizes()).filter(|(u, _)| **u <= t).map(|(_, d)| d).sum();
            let row = &est.rows[k];
            let got = [row.q10, row.q00, row.q11][pick];
            worst = worst.max((got - lambda * per_subject).abs());
        }
    }
    worst
}

/// TR with `a = a*` against `P_n int {Z dN + (1 - Z) dQ(u; a, a | C)}`.
pub fn tr_doubly_robust_error() -> f64 {
    let (cohort, fits) = fitted_example(250, 9);
    let weights = SubjectWeights::compute(&fits, &cohort, 0.0);
    let tau = cohort.tau();
    let base = &fits.outcome.baseline;
    let n = cohort.len() as f64;
    let t = 19.2;
    let mut worst: f64 = 0.0;
    for a in [false, true] {
        let query = MediationQuery { timepoints: vec![t], a, a_star: a, method: Method::Tr };
        let q = estimate_q(&fits, &cohort, &query, &EstimatorOptions::default()).unwrap();
        let mut total = 0.0;
        for (k, &u) in base.jump_times().iter().enumerate() {
            if u > t {
                break;
            }
            let z = z_weights(&cohort, &weights, u, a).unwrap();
            for (i, s) in cohort.subjects().iter().enumerate() {
                let d_n = s.observed_events(tau).iter().filter(|&&e| e == u).count() as f64;
                let d_q = dq_conditional(&fits.outcome, &fits.mediator, k, a, a, &s.confounders);
                total += (z[i] * d_n + (1.0 - z[i]) * d_q) / n;
            }
        }
        worst = worst.max((q.values[0] - total).abs());
    }
    worst
}

/// Three-subject proportional-mean fit against the sign change of the
/// score on a `1e-5` grid over `[-5, 5]`.
pub fn pm_grid_root_error() -> f64 {
    let subjects = vec![
        Subject::new("a", vec![1.0, 2.5], 4.0, true, 0.0, vec![]).unwrap(),
        Subject::new("b", vec![1.5], 3.0, false, 0.0, vec![]).unwrap(),
        Subject::new("c", vec![0.5, 2.0, 3.5], 4.0, false, 0.0, vec![]).unwrap(),
    ];
    let cohort = Cohort::new(subjects, 4.0, MediatorKind::ContinuousGaussian).unwrap();
    let x = vec![vec![0.3], vec![1.2], vec![-0.4]];
    let fit = fit_proportional_mean_design(&cohort, &x, &NewtonSettings::default()).unwrap();
    assert!(fit.converged);

    // the score is decreasing in beta
    let steps = 1_000_000;
    let at = |k: usize| -5.0 + 10.0 * k as f64 / steps as f64;
    let score = |b: f64| proportional_mean_score(&cohort, &x, &[b]).unwrap()[0];
    let (mut lo, mut hi) = (0usize, steps);
    assert!(score(at(lo)) > 0.0 && score(at(hi)) < 0.0);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if score(at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (fit.beta[0] - 0.5 * (at(lo) + at(hi))).abs()
}

/// Two-group design: 3 of 10 events at x = 0, 12 of 16 at x = 1.
pub fn saturated_logistic_data() -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (x, events, total) in [(0.0, 3, 10), (1.0, 12, 16)] {
        for k in 0..total {
            rows.push(vec![1.0, x]);
            y.push(if k < events { 1.0 } else { 0.0 });
        }
    }
    (rows, y)
}

/// Saturated logistic fit against the empirical log-odds.
pub fn logistic_closed_form_error() -> f64 {
    let (rows, y) = saturated_logistic_data();
    let fit = fit_logistic(&rows, &y).unwrap();
    let logit = |p: f64| (p / (1.0 - p)).ln();
    let e0 = (fit.coefficients[0] - logit(0.3)).abs();
    let e1 = (fit.coefficients[1] - (logit(0.75) - logit(0.3))).abs();
    e0.max(e1)
}

/// Gaussian mediator fit against `X'X b = X'y` solved by elimination, plus
/// the ML variance.
pub fn gaussian_normal_equation_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> =
        (0..40).map(|_| vec![1.0, rng.random_range(0.0..1.0), rng.random_range(-2.0..2.0)]).collect();
    let y: Vec<f64> = rows.iter().map(|r| 1.0 + 2.0 * r[1] - 0.5 * r[2] + rng.random_range(-0.3..0.3)).collect();
    let fit = fit_gaussian_mediator(&rows, &y).unwrap();

    let k = 3;
    let mut m = vec![vec![0.0; k + 1]; k];
    for (r, &yi) in rows.iter().zip(&y) {
        for i in 0..k {
            for j in 0..k {
                m[i][j] += r[i] * r[j];
            }
            m[i][k] += r[i] * yi;
        }
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
        m.swap(col, piv);
        for row in col + 1..k {
            let f = m[row][col] / m[col][col];
            for j in col..=k {
                m[row][j] -= f * m[col][j];
            }
        }
    }
    let mut b = vec![0.0; k];
    for i in (0..k).rev() {
        b[i] = (m[i][k] - (i + 1..k).map(|j| m[i][j] * b[j]).sum::<f64>()) / m[i][i];
    }
    let rss: f64 =
        rows.iter().zip(&y).map(|(r, yi)| (yi - r.iter().zip(&b).map(|(x, c)| x * c).sum::<f64>()).powi(2)).sum();
    let mut worst = (fit.sigma2 - rss / 40.0).abs();
    for j in 0..k {
        worst = worst.max((fit.coefficients[j] - b[j]).abs());
    }
    worst
}
