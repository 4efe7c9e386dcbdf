#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use oamsim::measurement::{mub_settings, MubLayout, Setting, Simulation, Visibilities};
use oamsim::oam_optics::ModeRange;
use oamsim::quantum_state::{density_from_pure, CMatrix, DensityMatrix, PureState};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Complex Ginibre matrix with entries uniform in the unit square.
pub fn ginibre<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    DMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    })
}

/// Random full-rank density matrix G G† / Tr.
pub fn random_density<R: Rng>(rng: &mut R, dim: usize) -> DensityMatrix {
    let g = ginibre(rng, dim, dim);
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::new(m / tr).expect("Ginibre construction is physical")
}

pub fn random_unitary<R: Rng>(rng: &mut R, dim: usize) -> CMatrix {
    ginibre(rng, dim, dim).qr().q()
}

/// Σ_k amps[k] |m_k m_k⟩ over `range`, normalized.
pub fn correlated_state(range: ModeRange, modes: &[i32], amps: &[f64]) -> DensityMatrix {
    let d = range.len();
    let mut v = vec![Complex64::new(0.0, 0.0); d * d];
    for (&m, &a) in modes.iter().zip(amps) {
        let i = range.index_of(m).unwrap();
        v[i * d + i] = Complex64::new(a, 0.0);
    }
    density_from_pure(&PureState::normalized(v).unwrap())
}

pub fn labels(settings: &[Setting]) -> impl Iterator<Item = (&str, &str)> {
    settings.iter().map(|s| (s.label_a.as_str(), s.label_b.as_str()))
}

/// Exact-probability visibilities for every pair of `modes`.
pub fn exact_visibilities(sim: &Simulation, modes: &[i32]) -> Vec<Visibilities> {
    let settings = mub_settings(&sim.range, modes).unwrap();
    let expected = sim.expected_counts(&settings).unwrap();
    let layout = MubLayout::from_labels(labels(&settings), modes).unwrap();
    layout
        .pair_counts(&expected)
        .iter()
        .map(|p| p.visibilities().unwrap())
        .collect()
}

pub fn range(min: i32, max: i32) -> ModeRange {
    ModeRange::new(min, max).unwrap()
}
