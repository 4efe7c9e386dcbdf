//! Weighted least-squares fits of the Lorentzian
//! y = y0 + (2A/π)·w / (4(x − xc)² + w²) and half-maximum widths.
//!
//! Note that `w` is the full distance between the half-maximum points of
//! this form: y(xc ± w/2) − y0 is exactly half the peak height.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source_model::{lorentzian_eval, LorentzianParams};

const N_PARAMS: usize = 4;
const MAX_ITERATIONS: usize = 500;
const REL_COST_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Fitted parameters; `w` is always positive (a dip shows up as A < 0).
    pub params: LorentzianParams,
    /// Unweighted RMS of y − model.
    pub residual_rms: f64,
    /// Parameter covariance in (y0, xc, w, A) order, scaled by the reduced
    /// weighted χ².
    pub covariance: [[f64; 4]; 4],
    pub converged: bool,
    pub iterations: usize,
}

/// ∂y/∂(y0, xc, w, A)
fn gradient(x: f64, p: &[f64; 4]) -> [f64; 4] {
    let [_, xc, w, a] = *p;
    let dx = x - xc;
    let den = 4.0 * dx * dx + w * w;
    let k = 2.0 / std::f64::consts::PI;
    [
        1.0,
        k * a * w * 8.0 * dx / (den * den),
        k * a * (4.0 * dx * dx - w * w) / (den * den),
        k * w / den,
    ]
}

fn model(x: f64, p: &[f64; 4]) -> f64 {
    lorentzian_eval(x, &LorentzianParams::from_array(*p))
}

struct Problem<'a> {
    xs: &'a [f64],
    ys: &'a [f64],
    weights: Vec<f64>,
}

impl Problem<'_> {
    fn cost(&self, p: &[f64; 4]) -> f64 {
        self.xs
            .iter()
            .zip(self.ys)
            .zip(&self.weights)
            .map(|((&x, &y), &wt)| wt * (y - model(x, p)).powi(2))
            .sum()
    }

    /// JᵀWJ and JᵀW(y − f).
    fn normal_equations(&self, p: &[f64; 4]) -> (Matrix4<f64>, Vector4<f64>) {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for ((&x, &y), &wt) in self.xs.iter().zip(self.ys).zip(&self.weights) {
            let g = Vector4::from(gradient(x, p));
            let r = y - model(x, p);
            jtj += wt * g * g.transpose();
            jtr += wt * r * g;
        }
        (jtj, jtr)
    }
}

/// Why the information matrix cannot identify all four parameters, if so.
fn degeneracy(jtj: &Matrix4<f64>) -> Option<String> {
    const NAMES: [&str; 4] = ["y0", "xc", "w", "A"];
    let max_diag = (0..N_PARAMS).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
    if !(max_diag > 0.0) {
        return Some("Jacobian vanishes".into());
    }
    for (i, name) in NAMES.iter().enumerate() {
        if !(jtj[(i, i)] > 1e-14 * max_diag) {
            return Some(format!("parameter {name} does not affect the model"));
        }
    }
    let corr = Matrix4::from_fn(|i, j| jtj[(i, j)] / (jtj[(i, i)] * jtj[(j, j)]).sqrt());
    let min_eig = SymmetricEigen::new(corr).eigenvalues.min();
    (min_eig < 1e-12).then(|| format!("parameters are not separately identifiable (min eigenvalue {min_eig:e})"))
}

/// 1 / max(y, 1), for fitting raw counts.
pub fn poisson_weights(ys: &[f64]) -> Vec<f64> {
    ys.iter().map(|&y| 1.0 / y.max(1.0)).collect()
}

/// Starting point from the data: baseline at the minimum, centre at the
/// maximum, width from the half-maximum crossings, area from peak height.
pub fn initial_guess(xs: &[f64], ys: &[f64]) -> LorentzianParams {
    let (imax, &ymax) = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty data");
    let ymin = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let w = half_max_width(xs, ys, Some(ymin))
        .ok()
        .filter(|w| *w > 0.0)
        .unwrap_or((span / 4.0).max(1e-3));
    let height = ymax - ymin;
    LorentzianParams::new(ymin, xs[imax], w, height * std::f64::consts::PI * w / 2.0)
}

/// Levenberg-Marquardt fit minimizing Σ weight·(y − model)².
///
/// Stops when an accepted step changes the cost by less than 1e-12
/// relative, or after 500 iterations.
pub fn fit_lorentzian(
    xs: &[f64],
    ys: &[f64],
    weights: Option<&[f64]>,
    init: Option<LorentzianParams>,
) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.len() <= N_PARAMS {
        return Err(Error::Underdetermined {
            points: xs.len(),
            params: N_PARAMS,
        });
    }
    let weights = match weights {
        Some(w) if w.len() != xs.len() => {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                actual: w.len(),
            })
        }
        Some(w) if w.iter().any(|&v| !(v >= 0.0)) => {
            return Err(Error::Domain("fit weights must be non-negative".into()))
        }
        Some(w) => w.to_vec(),
        None => vec![1.0; xs.len()],
    };
    let init = init.unwrap_or_else(|| initial_guess(xs, ys));
    if !(init.w > 0.0) {
        return Err(Error::Domain(format!("initial width {} must be positive", init.w)));
    }
    let problem = Problem { xs, ys, weights };

    let mut p = init.as_array();
    let mut cost = problem.cost(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    if let Some(reason) = degeneracy(&problem.normal_equations(&p).0) {
        return Err(Error::DegenerateFit {
            reason,
            partial: Box::new(finish(&problem, p, false, 0)),
        });
    }

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let (jtj, jtr) = problem.normal_equations(&p);
        let mut improved = false;
        while lambda < 1e16 {
            let mut damped = jtj;
            for i in 0..N_PARAMS {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut cand = p;
            for i in 0..N_PARAMS {
                cand[i] += step[i];
            }
            let cand_cost = problem.cost(&cand);
            if cand_cost.is_finite() && cand_cost <= cost {
                let rel = (cost - cand_cost) / cost;
                p = cand;
                cost = cand_cost;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if rel < REL_COST_TOL {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No descent direction at any damping: a stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }

    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
    }
    let result = finish(&problem, p, converged, iterations);
    if let Some(reason) = degeneracy(&problem.normal_equations(&p).0) {
        return Err(Error::DegenerateFit {
            reason,
            partial: Box::new(result),
        });
    }
    Ok(result)
}

fn finish(problem: &Problem<'_>, p: [f64; 4], converged: bool, iterations: usize) -> FitResult {
    let n = problem.xs.len();
    let (jtj, _) = problem.normal_equations(&p);
    let dof = n.saturating_sub(N_PARAMS).max(1) as f64;
    let scale = problem.cost(&p) / dof;
    let cov = jtj.try_inverse().map(|inv| inv * scale).unwrap_or_else(|| Matrix4::from_element(f64::NAN));
    let mut covariance = [[0.0; 4]; 4];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cov[(i, j)];
        }
    }
    let residual_rms = (problem
        .xs
        .iter()
        .zip(problem.ys)
        .map(|(&x, &y)| (y - model(x, &p)).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    FitResult {
        params: LorentzianParams::from_array(p),
        residual_rms,
        covariance,
        converged,
        iterations,
    }
}

/// Distance between the two half-maximum crossings of a sampled peak,
/// measured above `baseline` (the sample minimum by default), with linear
/// interpolation between samples. For the Lorentzian above this equals `w`.
pub fn half_max_width(xs: &[f64], ys: &[f64], baseline: Option<f64>) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::NoPeak);
    }
    let base = baseline.unwrap_or_else(|| ys.iter().cloned().fold(f64::INFINITY, f64::min));
    let (peak_idx, &peak) = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    if !(peak > base) {
        return Err(Error::NoPeak);
    }
    let half = base + 0.5 * (peak - base);
    if ys.iter().filter(|&&y| y >= half).count() < 2 {
        return Err(Error::NoPeak);
    }
    let crossing = |i: usize, j: usize| -> f64 {
        // Between sample i (below half) and j (at or above half).
        let t = (half - ys[i]) / (ys[j] - ys[i]);
        xs[i] + t * (xs[j] - xs[i])
    };
    let left = (0..peak_idx).rev().find(|&i| ys[i] < half).map(|i| crossing(i, i + 1));
    let right = (peak_idx + 1..ys.len()).find(|&i| ys[i] < half).map(|i| crossing(i, i - 1));
    match (left, right) {
        (Some(l), Some(r)) => Ok((r - l).abs()),
        _ => Err(Error::NoPeak),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(p: &LorentzianParams, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| lorentzian_eval(x, p)).collect()
    }

    #[test]
    fn half_max_identity_of_the_fit_form() {
        for p in [
            LorentzianParams::new(0.0, 0.0, 7.7, 2030.0),
            LorentzianParams::new(12.7, 0.5, 4.57, 1463.0),
            LorentzianParams::new(0.132, 0.0, 2.274, 0.354),
        ] {
            let peak = lorentzian_eval(p.xc, &p) - p.y0;
            for side in [-1.0, 1.0] {
                let v = lorentzian_eval(p.xc + side * p.w / 2.0, &p) - p.y0;
                assert!((v - peak / 2.0).abs() <= 1e-12 * peak);
            }
        }
    }

    #[test]
    fn triangle_width() {
        let xs = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let ys = [0.0, 0.5, 1.0, 0.5, 0.0];
        assert!((half_max_width(&xs, &ys, None).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_lorentzian_width() {
        let p = LorentzianParams::new(0.0, 0.0, 7.7, 2030.0);
        let xs: Vec<f64> = (-40_000..=40_000).map(|i| i as f64 * 0.005).collect();
        let w = half_max_width(&xs, &samples(&p, &xs), None).unwrap();
        assert!((w - 7.7).abs() / 7.7 < 0.01, "w = {w}");
    }

    #[test]
    fn no_peak_cases() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert!(matches!(half_max_width(&xs, &[1.0; 5], None), Err(Error::NoPeak)));
        assert!(matches!(half_max_width(&xs, &[0.0, 0.0, 1.0, 0.0, 0.0], None), Err(Error::NoPeak)));
        assert!(matches!(half_max_width(&xs, &[1.0, 2.0, 3.0, 4.0, 5.0], None), Err(Error::NoPeak)));
    }

    #[test]
    fn constant_data_is_degenerate() {
        let xs: Vec<f64> = (-7..=7).map(f64::from).collect();
        let ys = vec![5.0; xs.len()];
        assert!(matches!(fit_lorentzian(&xs, &ys, None, None), Err(Error::DegenerateFit { .. })));
    }

    #[test]
    fn too_few_points() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        assert!(matches!(
            fit_lorentzian(&xs, &[1.0, 2.0, 1.0, 0.5], None, None),
            Err(Error::Underdetermined { points: 4, params: 4 })
        ));
    }

    #[test]
    fn negative_width_init_rejected() {
        let xs: Vec<f64> = (-7..=7).map(f64::from).collect();
        let ys = samples(&LorentzianParams::new(0.0, 0.0, 3.0, 10.0), &xs);
        let init = LorentzianParams::new(0.0, 0.0, -1.0, 10.0);
        assert!(fit_lorentzian(&xs, &ys, None, Some(init)).is_err());
    }

    #[test]
    fn poisson_weight_floor() {
        assert_eq!(poisson_weights(&[0.0, 0.5, 4.0]), vec![1.0, 1.0, 0.25]);
    }
}
