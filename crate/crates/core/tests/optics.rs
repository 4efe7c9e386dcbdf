use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use oamsim::oam_optics::{lg_amplitude, qutrit_tomo_states, superposition_phase_mask, FieldGrid};
use oamsim::quantum_state::kron_product;

#[test]
fn lg_modes_are_normalized() {
    let grid = FieldGrid::new(512, 5.0, 1.0).unwrap();
    let area = grid.pixel_pitch().powi(2);
    for m in [0, 1, -2, 3, 5] {
        let total: f64 = grid.sample(|r, phi| lg_amplitude(m, r, phi, 1.0).norm_sqr()).iter().sum::<f64>() * area;
        assert!((total - 1.0).abs() < 1e-3, "m = {m}: {total}");
    }
}

#[test]
fn equal_modes_give_half_theta() {
    let grid = FieldGrid::new(64, 3.0, 1.0).unwrap();
    for theta in [0.0, 1.0, 2.5] {
        let mask = superposition_phase_mask(0, 0, theta, &grid);
        assert!(mask.phase.iter().all(|p| (p - theta / 2.0).abs() < 1e-12));
    }
}

#[test]
fn opposite_unit_charges_give_binary_phase() {
    let grid = FieldGrid::new(64, 3.0, 1.0).unwrap();
    let mask = superposition_phase_mask(1, -1, 0.0, &grid);
    for p in &mask.phase {
        assert!(p.abs() < 1e-9 || (p - PI).abs() < 1e-9 || (TAU - p).abs() < 1e-9, "{p}");
    }
}

#[test]
fn five_minus_one_has_six_phase_jumps() {
    // Equal amplitudes where (r√2)^4 = √120.
    let r = 120f64.sqrt().powf(0.25) / 2f64.sqrt();
    let n = 3600;
    let phase = |k: usize| {
        let phi = TAU * (k as f64 + 0.5) / n as f64;
        (lg_amplitude(5, r, phi, 1.0) + lg_amplitude(-1, r, phi, 1.0)).arg()
    };
    let jumps = (0..n)
        .filter(|&k| {
            let d = (phase((k + 1) % n) - phase(k) + PI).rem_euclid(TAU) - PI;
            d.abs() > PI / 2.0
        })
        .count();
    assert_eq!(jumps, 6);
}

#[test]
fn tomography_projectors_are_informationally_complete() {
    let singles: Vec<_> = qutrit_tomo_states()
        .iter()
        .map(|s| s.amplitudes() * s.amplitudes().adjoint())
        .collect();
    let mut vecs = Vec::new();
    for a in &singles {
        for b in &singles {
            vecs.push(kron_product(a, b));
        }
    }
    let gram = DMatrix::from_fn(81, 81, |i, j| {
        vecs[i]
            .iter()
            .zip(vecs[j].iter())
            .map(|(x, y)| x.conj() * y)
            .sum::<Complex64>()
    });
    let eig = gram.symmetric_eigenvalues();
    let rank = eig.iter().filter(|&&l| l > 1e-10).count();
    assert_eq!(rank, 81);
}
