mod common;

use common::{correlated_state, random_density, range, rng};
use oamsim::fitting::fit_lorentzian;
use oamsim::measurement::{
    mode_label, mode_settings, mub_settings, sample_counts, simulate_coincidence_matrix, Simulation,
};
use oamsim::quantum_state::{project_to_physical, uhlmann_fidelity, DensityMatrix};
use oamsim::source_model::ExperimentConfig;
use oamsim::tomography::{linear_inversion, mle_reconstruct, simulate_tomography, swap_operator};
use oamsim::witness::{witness_from_table, Convention};

#[test]
fn poisson_sampler_moments() {
    let mut r = rng(11);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| sample_counts(50.0, &mut r).unwrap() as f64).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - 50.0).abs() < 0.1, "mean {mean}");
    assert!((var - 50.0).abs() < 1.5, "variance {var}");
}

fn diagonal(cfg: &ExperimentConfig, stored: bool) -> (Vec<f64>, Vec<f64>) {
    let sim = Simulation::from_config(cfg, stored, 0).unwrap();
    let settings = mode_settings(&sim.range);
    let expected = sim.expected_counts(&settings).unwrap();
    settings
        .iter()
        .zip(expected)
        .filter(|(s, _)| s.label_a == s.label_b)
        .map(|(s, e)| (s.label_a.trim_start_matches("m=").parse::<f64>().unwrap(), e))
        .unzip()
}

#[test]
fn paper_default_diagonal_ratio() {
    let (xs, ys) = diagonal(&ExperimentConfig::paper_default(), false);
    let at = |m: f64| ys[xs.iter().position(|&x| x == m).unwrap()];
    assert!((at(0.0) / at(5.0) - 2.687).abs() < 5e-4);
    // Expected diagonal counts reproduce the source curve itself.
    assert!((at(0.0) - 167.84).abs() < 0.01);
}

#[test]
fn storage_narrows_the_correlation() {
    let cfg = ExperimentConfig::paper_default();
    let (xs, input) = diagonal(&cfg, false);
    let (_, stored) = diagonal(&cfg, true);
    let w_in = fit_lorentzian(&xs, &input, None, None).unwrap().params.w;
    let w_out = fit_lorentzian(&xs, &stored, None, None).unwrap().params.w;
    assert!((w_in - 7.7).abs() < 1e-6);
    assert!(w_out < w_in, "{w_out} vs {w_in}");
}

#[test]
fn fit_of_simulated_correlation_diagonal() {
    let table = simulate_coincidence_matrix(&ExperimentConfig::paper_default(), false, 42).unwrap();
    let (xs, ys): (Vec<f64>, Vec<f64>) = (-7..=7)
        .map(|m| (m as f64, table.count_for(&mode_label(m), &mode_label(m)).unwrap() as f64))
        .unzip();
    let weights = oamsim::fitting::poisson_weights(&ys);
    let p = fit_lorentzian(&xs, &ys, Some(&weights), None).unwrap().params;
    assert!(p.xc.abs() < 0.5 && p.y0.abs() < 25.0, "{p:?}");
    assert!((p.w / 7.7 - 1.0).abs() < 0.15, "{p:?}");
    assert!((p.a / 2030.0 - 1.0).abs() < 0.15, "{p:?}");
}

/// Wilson-Hilferty upper quantile of χ²(df).
fn chi2_upper(df: f64, z: f64) -> f64 {
    let h = 2.0 / (9.0 * df);
    df * (1.0 - h + z * h.sqrt()).powi(3)
}

#[test]
fn white_noise_table_is_flat() {
    let mut cfg = ExperimentConfig::paper_default();
    cfg.epsilon = 1.0;
    cfg.pair_rate = 225.0;
    let table = simulate_coincidence_matrix(&cfg, false, 5).unwrap();
    let counts: Vec<f64> = table.counts().iter().map(|&c| c as f64).collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let chi2: f64 = counts.iter().map(|c| (c - mean).powi(2) / mean).sum();
    let df = (counts.len() - 1) as f64;
    assert!(chi2 < chi2_upper(df, 2.326), "χ² = {chi2} at df = {df}");
}

#[test]
fn swapping_arms_transposes_the_data() {
    let rho = random_density(&mut rng(3), 9);
    let data = simulate_tomography(&rho, 1e6, 8).unwrap();
    let a = mle_reconstruct(&data).unwrap().rho;
    let b = mle_reconstruct(&data.transposed()).unwrap().rho;
    let s = swap_operator();
    let swapped = DensityMatrix::new(&s * a.matrix() * &s).unwrap();
    assert!(uhlmann_fidelity(&swapped, &b).unwrap() > 1.0 - 1e-6);
}

#[test]
fn linear_inversion_agrees_with_mle() {
    let rho = random_density(&mut rng(21), 9);
    let data = simulate_tomography(&rho, 1e6, 2).unwrap();
    let li = project_to_physical(&linear_inversion(&data).unwrap()).unwrap();
    let mle = mle_reconstruct(&data).unwrap();
    assert!(mle.converged);
    assert!(uhlmann_fidelity(&li, &mle.rho).unwrap() >= 0.99);
    assert!(uhlmann_fidelity(&rho, &mle.rho).unwrap() >= 0.99);
}

fn ideal_witness_table(modes: &[i32], eps: f64, seed: u64) -> oamsim::measurement::CoincidenceTable {
    let rg = range(*modes.iter().min().unwrap(), *modes.iter().max().unwrap());
    let rho = correlated_state(rg, modes, &vec![1.0; modes.len()]);
    let rho = oamsim::source_model::apply_noise(
        &rho,
        &oamsim::source_model::NoiseParams { epsilon: eps, floor_rate: 0.0 },
    )
    .unwrap();
    let sim = Simulation::from_state(rg, rho, 1e4, 10.0, seed).unwrap();
    sim.sample(&mub_settings(&rg, modes).unwrap(), "mub").unwrap()
}

#[test]
fn four_mode_ideal_violates_m_bound() {
    let modes = [2, 1, 0, -1];
    let report = witness_from_table(&ideal_witness_table(&modes, 0.0, 1), &modes, 3.0, Convention::Claims, 200, 4).unwrap();
    assert!((report.m - 12.0).abs() < 1e-9);
    assert_eq!(report.bound_m, 9);
    assert!(report.m_certifies_full_set());
    assert!(report.summary_text(None).contains("at least four-dimensional"));
}

#[test]
fn white_noise_certifies_nothing() {
    let modes = [-2, -1, 0, 1, 2];
    let report = witness_from_table(&ideal_witness_table(&modes, 1.0, 2), &modes, 3.0, Convention::Claims, 200, 4).unwrap();
    assert_eq!(report.certified_dimensions.claims, 1);
    assert_eq!(report.certified_dimensions.prose, 1);
    assert!(!report.m_certifies_full_set());
}

#[test]
fn incomplete_witness_data_names_pairs() {
    let table = ideal_witness_table(&[0, 1, 2], 0.0, 3);
    let err = witness_from_table(&table, &[0, 1, 2, 3], 3.0, Convention::Claims, 50, 1).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("(0,3)") && msg.contains("(2,3)"), "{msg}");
}
