//! Numerical checks of the consistency argument on manifolds with known geometry.
//!
//! A function `f1` whose gradient is normal to the manifold, composed with a
//! tangent move `h`, gives `f2 = f1 o h`. On the manifold the two agree
//! (`delta(x_M) = |f1 - f2| = 0`); a step `p` off the manifold along the normal
//! space separates them to first order by `|(grad f1 - grad f2) . p|`. The
//! fixtures here make every quantity computable, and gradients are taken by
//! central differences so the checks do not assume what they test.

mod fixtures;
mod manifold;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConvError, Result};
use crate::seed::rng;

pub use self::fixtures::{canonical_circle_fixture, AngleProfile, Fixture, LabFunctionPair, ScalarField, VectorMap};
pub use self::manifold::{circle_point, LabPoint, SyntheticManifold, BASIS_TOL};
use self::manifold::{axpy, dot, norm};

/// Central-difference gradient with step `1e-5 * max(1, |x|)`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-5 * norm(x).max(1.0);
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub samples: usize,
    pub tol: f64,
    /// (a) largest norm of the tangential part of `grad f1(x_M)`.
    pub max_tangent_gradient: f64,
    /// (b) largest `|f1(x_M) - f2(x_M)|`.
    pub max_value_gap: f64,
    /// (c) largest `|grad f2(x_M) . p|` over unit normal `p`.
    pub max_gradient_dot_p: f64,
    pub failures: [usize; 3],
    /// Largest gap between finite-difference and closed-form `grad f1`, when the fixture has one.
    pub max_closed_form_gap: Option<f64>,
}

impl OrthogonalityReport {
    pub fn passes(&self) -> [bool; 3] {
        self.failures.map(|f| f == 0)
    }
}

/// Check at `samples` random on-manifold points that (a) `grad f1` has no
/// tangential component, (b) `f1 = f2`, and (c) `grad f2 . p = 0` for a random
/// unit normal `p`. Failures are counted, not raised.
pub fn check_orthogonality(
    pair: &LabFunctionPair,
    manifold: &SyntheticManifold,
    samples: usize,
    tol: f64,
    seed: u64,
) -> OrthogonalityReport {
    let mut r = rng(seed);
    let mut report = OrthogonalityReport {
        samples,
        tol,
        max_tangent_gradient: 0.0,
        max_value_gap: 0.0,
        max_gradient_dot_p: 0.0,
        failures: [0; 3],
        max_closed_form_gap: pair.grad_f1.as_ref().map(|_| 0.0),
    };
    for _ in 0..samples {
        let x = manifold.sample_point(&mut r);
        let p = manifold.sample_normal_direction(&mut r, &x);
        let g1 = fd_gradient(|y| pair.f1(y), &x);
        let g2 = fd_gradient(|y| pair.f2(y), &x);
        let tangential = manifold
            .tangent_basis(&x)
            .iter()
            .map(|t| dot(t, &g1).powi(2))
            .sum::<f64>()
            .sqrt();
        let checks = [tangential, pair.delta(&x), dot(&g2, &p).abs()];
        report.max_tangent_gradient = report.max_tangent_gradient.max(checks[0]);
        report.max_value_gap = report.max_value_gap.max(checks[1]);
        report.max_gradient_dot_p = report.max_gradient_dot_p.max(checks[2]);
        for (fail, value) in report.failures.iter_mut().zip(checks) {
            if !(value < tol) {
                *fail += 1;
            }
        }
        if let (Some(gap), Some(grad)) = (report.max_closed_form_gap.as_mut(), &pair.grad_f1) {
            let closed = grad(&x);
            let d = g1.iter().zip(&closed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            *gap = gap.max(d);
        }
    }
    report
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationRow {
    pub epsilon: f64,
    pub points: usize,
    pub mean_delta_g: f64,
    pub mean_delta_m: f64,
    /// Share of points with `delta(x_g) > delta(x_M)`; undefined at `epsilon = 0`.
    pub fraction: Option<f64>,
}

/// For each epsilon, draw `n_points` on-manifold points with random unit
/// normal directions (the same draws for every epsilon) and compare
/// `delta(x_g)` with `delta(x_M)`, both evaluated directly.
pub fn separation_experiment(
    pair: &LabFunctionPair,
    manifold: &SyntheticManifold,
    epsilons: &[f64],
    n_points: usize,
    seed: u64,
) -> Result<Vec<SeparationRow>> {
    if n_points == 0 {
        return Err(ConvError::InvalidInput("separation needs at least one point".into()));
    }
    if epsilons.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(ConvError::InvalidInput("epsilons must be finite and non-negative".into()));
    }
    let mut r = rng(seed);
    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..n_points)
        .map(|_| {
            let x = manifold.sample_point(&mut r);
            let d = manifold.sample_normal_direction(&mut r, &x);
            (x, d)
        })
        .collect();
    let delta_m: Vec<f64> = draws.iter().map(|(x, _)| pair.delta(x)).collect();
    epsilons
        .iter()
        .map(|&epsilon| {
            let mut sum_g = 0.0;
            let mut above = 0usize;
            for ((x, d), &dm) in draws.iter().zip(&delta_m) {
                let pt = LabPoint::new(manifold, x.clone(), d, epsilon)?;
                let dg = pair.delta(&pt.x_g);
                sum_g += dg;
                if dg > dm {
                    above += 1;
                }
            }
            let n = n_points as f64;
            Ok(SeparationRow {
                epsilon,
                points: n_points,
                mean_delta_g: sum_g / n,
                mean_delta_m: delta_m.iter().sum::<f64>() / n,
                fraction: (epsilon > 0.0).then(|| above as f64 / n),
            })
        })
        .collect()
}

pub fn separation_csv(rows: &[SeparationRow]) -> String {
    let mut out = String::from("epsilon,points,mean_delta_g,mean_delta_m,fraction\n");
    for r in rows {
        let fraction = r.fraction.map(|f| f.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epsilon, r.points, r.mean_delta_g, r.mean_delta_m, fraction
        ));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorGap {
    /// `delta(x_g)`.
    pub exact: f64,
    /// `|(grad f1(x_M) - grad f2(x_M)) . p|`.
    pub prediction: f64,
    pub residual: f64,
}

pub fn taylor_gap_check(pair: &LabFunctionPair, point: &LabPoint) -> TaylorGap {
    let g1 = fd_gradient(|y| pair.f1(y), &point.x_m);
    let g2 = fd_gradient(|y| pair.f2(y), &point.x_m);
    let exact = pair.delta(&point.x_g);
    let prediction = dot(&axpy(-1.0, &g2, &g1), &point.p).abs();
    TaylorGap {
        exact,
        prediction,
        residual: (exact - prediction).abs(),
    }
}

/// `residual(2 epsilon) / residual(epsilon)` along one normal direction; about 4
/// when the first-order error is second order.
pub fn residual_ratio(
    pair: &LabFunctionPair,
    manifold: &SyntheticManifold,
    x_m: &[f64],
    direction: &[f64],
    epsilon: f64,
) -> Result<f64> {
    let small = LabPoint::new(manifold, x_m.to_vec(), direction, epsilon)?;
    let large = LabPoint::new(manifold, x_m.to_vec(), direction, 2.0 * epsilon)?;
    Ok(taylor_gap_check(pair, &large).residual / taylor_gap_check(pair, &small).residual)
}

/// How many of `draws` random unit normal directions at `x` are orthogonal to
/// `gradient` within `tol`.
pub fn count_orthogonal_normals(
    manifold: &SyntheticManifold,
    x: &[f64],
    gradient: &[f64],
    draws: usize,
    tol: f64,
    seed: u64,
) -> usize {
    let mut r = rng(seed);
    (0..draws)
        .filter(|_| {
            let p = manifold.sample_normal_direction(&mut r, x);
            dot(gradient, &p).abs() < tol
        })
        .count()
}

/// A random point and unit normal direction, for callers that need one.
pub fn random_probe<R: Rng>(manifold: &SyntheticManifold, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let x = manifold.sample_point(rng);
    let d = manifold.sample_normal_direction(rng, &x);
    (x, d)
}
