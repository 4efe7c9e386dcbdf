//! Qutrit-qutrit state reconstruction from the 81 product tomography
//! settings, and the Poisson Monte Carlo used for every error bar.
//!
//! The 81 projectors Π_jk do not sum to a multiple of the identity, so the
//! likelihood is written with a single global rate: the expected count of
//! setting jk is λ·Tr(ρΠ_jk). Profiling λ out leaves the multinomial
//! likelihood of p̃_jk = Tr(ρΠ_jk)/Tr(ρG) with G = Σ Π_jk. In the
//! coordinates σ ∝ G^{1/2}ρG^{1/2} these p̃ come from the POVM
//! G^{-1/2}Π_jkG^{-1/2}, where the usual R·σ·R iteration applies.

use std::io::{Read, Write};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{sample_counts, tomo_label, CoincidenceTable};
use crate::oam_optics::qutrit_tomo_states;
use crate::quantum_state::{density_from_pure, kron_product, matrix_sqrt_psd, CMatrix, DensityMatrix, DensityMatrixJson, PureState, ZERO};
use crate::rng;

pub const TOMO_STATES: usize = 9;
pub const TOMO_SETTINGS: usize = TOMO_STATES * TOMO_STATES;
pub const TOMO_DIM: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct TomoDataset {
    /// counts[j][k]: state j on arm A, state k on arm B (0-based).
    pub counts: [[u64; TOMO_STATES]; TOMO_STATES],
    pub seconds: Option<f64>,
}

impl TomoDataset {
    pub fn from_flat(flat: &[u64]) -> Result<Self> {
        if flat.len() != TOMO_SETTINGS {
            return Err(Error::DimensionMismatch {
                expected: TOMO_SETTINGS,
                actual: flat.len(),
            });
        }
        let mut counts = [[0u64; TOMO_STATES]; TOMO_STATES];
        for (i, &c) in flat.iter().enumerate() {
            counts[i / TOMO_STATES][i % TOMO_STATES] = c;
        }
        Ok(Self { counts, seconds: None })
    }

    pub fn flat(&self) -> Vec<u64> {
        self.counts.iter().flatten().copied().collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Counts with the roles of the two arms exchanged.
    pub fn transposed(&self) -> Self {
        let mut counts = [[0u64; TOMO_STATES]; TOMO_STATES];
        for (j, row) in self.counts.iter().enumerate() {
            for (k, &c) in row.iter().enumerate() {
                counts[k][j] = c;
            }
        }
        Self {
            counts,
            seconds: self.seconds,
        }
    }

    /// Picks the `t1..t9` rows out of a coincidence table.
    pub fn from_table(table: &CoincidenceTable) -> Result<Self> {
        let mut counts = [[None::<u64>; TOMO_STATES]; TOMO_STATES];
        let parse = |s: &str| -> Option<usize> {
            let k: usize = s.strip_prefix('t')?.parse().ok()?;
            (1..=TOMO_STATES).contains(&k).then_some(k - 1)
        };
        let mut seconds = None;
        for row in &table.rows {
            if let (Some(j), Some(k)) = (parse(&row.setting_a), parse(&row.setting_b)) {
                *counts[j][k].get_or_insert(0) += row.counts;
                seconds = Some(row.seconds);
            }
        }
        let mut out = [[0u64; TOMO_STATES]; TOMO_STATES];
        for j in 0..TOMO_STATES {
            for k in 0..TOMO_STATES {
                out[j][k] = counts[j][k].ok_or_else(|| {
                    Error::Parse(format!("missing tomography setting ({}, {})", tomo_label(j), tomo_label(k)))
                })?;
            }
        }
        Ok(Self { counts: out, seconds })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["j", "k", "counts"])?;
        for (j, row) in self.counts.iter().enumerate() {
            for (k, c) in row.iter().enumerate() {
                w.write_record([(j + 1).to_string(), (k + 1).to_string(), c.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `j,k,counts` (1-based indices); all 81 settings must be present
    /// exactly once.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["j", "k", "counts"] {
            return Err(Error::Parse("expected header j,k,counts".into()));
        }
        let mut seen = [[false; TOMO_STATES]; TOMO_STATES];
        let mut counts = [[0u64; TOMO_STATES]; TOMO_STATES];
        for record in rdr.deserialize() {
            let (j, k, c): (usize, usize, u64) = record?;
            if !(1..=TOMO_STATES).contains(&j) || !(1..=TOMO_STATES).contains(&k) {
                return Err(Error::Parse(format!("setting index ({j}, {k}) outside 1..9")));
            }
            if seen[j - 1][k - 1] {
                return Err(Error::Parse(format!("duplicate setting ({j}, {k})")));
            }
            seen[j - 1][k - 1] = true;
            counts[j - 1][k - 1] = c;
        }
        if let Some(j) = (0..TOMO_STATES).find(|&j| seen[j].iter().any(|s| !s)) {
            let k = seen[j].iter().position(|s| !s).unwrap();
            return Err(Error::Parse(format!("missing setting ({}, {})", j + 1, k + 1)));
        }
        Ok(Self { counts, seconds: None })
    }
}

/// Fixed-size matrices for the MLE inner loop.
type M9 = SMatrix<Complex64, TOMO_DIM, TOMO_DIM>;
type Whitened = SMatrix<Complex64, TOMO_DIM, TOMO_SETTINGS>;

struct Operators {
    /// Π_jk, j-major.
    projectors: Vec<CMatrix>,
    /// Columns v_jk = G^{-1/2}|jk⟩, so G^{-1/2} Π_jk G^{-1/2} = v_jk v_jk†.
    whitened: Whitened,
    g_inv_sqrt: M9,
    g_sqrt: M9,
}

fn operators() -> &'static Operators {
    static OPS: OnceLock<Operators> = OnceLock::new();
    OPS.get_or_init(|| {
        let singles: Vec<CMatrix> = qutrit_tomo_states()
            .iter()
            .map(|s| s.amplitudes() * s.amplitudes().adjoint())
            .collect();
        let mut projectors = Vec::with_capacity(TOMO_SETTINGS);
        for a in &singles {
            for b in &singles {
                projectors.push(kron_product(a, b));
            }
        }
        let g = projectors.iter().fold(CMatrix::zeros(TOMO_DIM, TOMO_DIM), |acc, p| acc + p);
        let g_sqrt = matrix_sqrt_psd(&g).expect("G is positive definite");
        let eig = SymmetricEigen::new(g);
        let mut scaled = eig.eigenvectors.clone();
        for (k, &l) in eig.eigenvalues.iter().enumerate() {
            let f = Complex64::new(l.sqrt().recip(), 0.0);
            for z in scaled.column_mut(k).iter_mut() {
                *z *= f;
            }
        }
        let g_inv_sqrt = &scaled * eig.eigenvectors.adjoint();
        let states = qutrit_tomo_states();
        let mut whitened = Whitened::zeros();
        for (j, a) in states.iter().enumerate() {
            for (k, b) in states.iter().enumerate() {
                let v = &g_inv_sqrt * a.tensor(b).amplitudes();
                whitened.set_column(j * TOMO_STATES + k, &v);
            }
        }
        Operators {
            projectors,
            whitened,
            g_inv_sqrt: M9::from_iterator(g_inv_sqrt.iter().cloned()),
            g_sqrt: M9::from_iterator(g_sqrt.iter().cloned()),
        }
    })
}

/// Tr(AB) for Hermitian A, B.
fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.transpose().iter()).map(|(x, y)| (x * y).re).sum()
}

/// p_jk = Tr[ρ (P_j ⊗ P_k)], j-major.
pub fn forward_probabilities(rho: &DensityMatrix) -> Result<Vec<f64>> {
    if rho.dim() != TOMO_DIM {
        return Err(Error::DimensionMismatch {
            expected: TOMO_DIM,
            actual: rho.dim(),
        });
    }
    Ok(operators()
        .projectors
        .iter()
        .map(|p| trace_product(rho.matrix(), p))
        .collect())
}

/// Poisson-sampled dataset whose expected counts sum to `total`.
pub fn simulate_tomography(rho: &DensityMatrix, total: f64, seed: u64) -> Result<TomoDataset> {
    let probs = forward_probabilities(rho)?;
    let norm: f64 = probs.iter().sum();
    let counts = probs
        .iter()
        .enumerate()
        .map(|(i, p)| sample_counts(total * p.max(0.0) / norm, &mut rng::stream(seed, "tomography/simulate", i as u64)))
        .collect::<Result<Vec<_>>>()?;
    TomoDataset::from_flat(&counts)
}

// Real parametrization of a 9×9 Hermitian matrix: 9 diagonal entries, then
// (Re, Im) of each upper-triangle entry.
fn hermitian_param_count() -> usize {
    TOMO_DIM * TOMO_DIM
}

fn upper_pairs() -> impl Iterator<Item = (usize, usize)> {
    (0..TOMO_DIM).flat_map(|i| (i + 1..TOMO_DIM).map(move |j| (i, j)))
}

fn design_row(p: &CMatrix) -> Vec<f64> {
    let mut row = Vec::with_capacity(hermitian_param_count());
    for i in 0..TOMO_DIM {
        row.push(p[(i, i)].re);
    }
    for (i, j) in upper_pairs() {
        // Tr(XΠ) picks up 2·Re(X_ij Π_ji) from each off-diagonal pair.
        row.push(2.0 * p[(i, j)].re);
        row.push(2.0 * p[(i, j)].im);
    }
    row
}

fn hermitian_from_params(x: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(TOMO_DIM, TOMO_DIM);
    for i in 0..TOMO_DIM {
        m[(i, i)] = Complex64::new(x[i], 0.0);
    }
    for (k, (i, j)) in upper_pairs().enumerate() {
        let z = Complex64::new(x[TOMO_DIM + 2 * k], x[TOMO_DIM + 2 * k + 1]);
        m[(i, j)] = z;
        m[(j, i)] = z.conj();
    }
    m
}

/// Least-squares Hermitian estimate with unit trace; may be unphysical.
///
/// Solves Tr(XΠ_jk) = n_jk for a Hermitian X (the global rate is absorbed
/// into X's trace) and returns X / Tr X.
pub fn linear_inversion(data: &TomoDataset) -> Result<CMatrix> {
    if data.total() == 0 {
        return Err(Error::Domain("tomography dataset has no counts".into()));
    }
    let ops = operators();
    let n = hermitian_param_count();
    let mut design = DMatrix::<f64>::zeros(TOMO_SETTINGS, n);
    for (r, p) in ops.projectors.iter().enumerate() {
        for (c, v) in design_row(p).into_iter().enumerate() {
            design[(r, c)] = v;
        }
    }
    let rhs = DVector::from_iterator(TOMO_SETTINGS, data.flat().into_iter().map(|c| c as f64));
    let svd = SVD::new(design, true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax).count();
    if rank < n {
        return Err(Error::RankDeficient { rank, expected: n });
    }
    let x = svd
        .solve(&rhs, 1e-10 * smax)
        .map_err(|e| Error::Domain(e.to_string()))?;
    let m = hermitian_from_params(x.as_slice());
    let trace = m.trace().re;
    if !(trace > 0.0) {
        return Err(Error::Domain(format!("linear inversion produced trace {trace}")));
    }
    Ok(m / Complex64::new(trace, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Stop when λ_max of the update operator changes by less than this.
    pub tolerance: f64,
    pub dilution_factor: f64,
    pub record_trace: bool,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tolerance: 1e-10,
            dilution_factor: 0.5,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub rho: DensityMatrix,
    /// Σ n_jk ln p̃_jk at the returned state.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after each accepted step, when requested.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionJson {
    pub rho: DensityMatrixJson,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ReconstructionResult {
    pub fn to_json(&self) -> ReconstructionJson {
        ReconstructionJson {
            rho: self.rho.to_json(),
            log_likelihood: self.log_likelihood,
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

fn whitened_probabilities(sigma: &M9) -> Vec<f64> {
    let v = &operators().whitened;
    let sv = sigma * v;
    v.column_iter()
        .zip(sv.column_iter())
        .map(|(a, b)| a.dotc(&b).re)
        .collect()
}

/// R = Σ (f/p) v v†.
fn update_operator(freqs: &[f64], probs: &[f64]) -> M9 {
    let v = &operators().whitened;
    let mut scaled = *v;
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        let c = if freqs[k] > 0.0 {
            freqs[k] / probs[k].max(f64::MIN_POSITIVE)
        } else {
            0.0
        };
        col *= Complex64::new(c, 0.0);
    }
    scaled * v.adjoint()
}

/// T σ T with unit trace, Hermitian part only.
fn conjugate_normalized(t: &M9, sigma: &M9) -> M9 {
    let mut cand = t * sigma * t;
    cand = (&cand + cand.adjoint()) * Complex64::new(0.5, 0.0);
    let tr = cand.trace().re;
    cand / Complex64::new(tr, 0.0)
}

fn log_likelihood(freqs: &[f64], probs: &[f64]) -> f64 {
    freqs
        .iter()
        .zip(probs)
        .filter(|(f, _)| **f > 0.0)
        .map(|(f, p)| if *p > 0.0 { f * p.ln() } else { f64::NEG_INFINITY })
        .sum()
}

pub fn mle_reconstruct(data: &TomoDataset) -> Result<ReconstructionResult> {
    mle_reconstruct_with(data, &MleOptions::default())
}

/// Maximum-likelihood state via the diluted R·ρ·R iteration.
pub fn mle_reconstruct_with(data: &TomoDataset, opts: &MleOptions) -> Result<ReconstructionResult> {
    mle_iterate(data, opts, M9::identity() / Complex64::new(TOMO_DIM as f64, 0.0))
}

/// As [`mle_reconstruct_with`], starting from `start` mixed with a little
/// of I/9 so that no eigenvalue starts at zero.
pub fn mle_reconstruct_from(data: &TomoDataset, opts: &MleOptions, start: &DensityMatrix) -> Result<ReconstructionResult> {
    if start.dim() != TOMO_DIM {
        return Err(Error::DimensionMismatch {
            expected: TOMO_DIM,
            actual: start.dim(),
        });
    }
    let rho = M9::from_iterator(start.matrix().iter().cloned()) * Complex64::new(1.0 - WARM_START_MIX, 0.0)
        + M9::identity() * Complex64::new(WARM_START_MIX / TOMO_DIM as f64, 0.0);
    let g_sqrt = &operators().g_sqrt;
    mle_iterate(data, opts, conjugate_normalized(g_sqrt, &rho))
}

const WARM_START_MIX: f64 = 1e-3;

fn mle_iterate(data: &TomoDataset, opts: &MleOptions, start: M9) -> Result<ReconstructionResult> {
    let total = data.total();
    if total == 0 {
        return Err(Error::Domain("tomography dataset has no counts".into()));
    }
    let ops = operators();
    let freqs: Vec<f64> = data.flat().iter().map(|&c| c as f64 / total as f64).collect();
    let id = M9::identity();

    let mut sigma = start;
    let mut probs = whitened_probabilities(&sigma);
    let mut ll = log_likelihood(&freqs, &probs);
    let mut prev_lambda = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();

    while iterations < opts.max_iterations {
        iterations += 1;
        let r = update_operator(&freqs, &probs);
        let lambda_max = SymmetricEigen::new(r)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if (lambda_max - prev_lambda).abs() < opts.tolerance {
            converged = true;
            break;
        }
        prev_lambda = lambda_max;

        // Plain R·σ·R first; on a likelihood decrease, dilute with
        // T = (I + εR)/(1 + ε), ε = 1, 1/2, 1/4, ...
        let mut accepted = None;
        let mut eps = f64::INFINITY;
        for _ in 0..60 {
            let t = if eps.is_infinite() {
                r
            } else {
                (id + r * Complex64::new(eps, 0.0)) / Complex64::new(1.0 + eps, 0.0)
            };
            let cand = conjugate_normalized(&t, &sigma);
            let cand_probs = whitened_probabilities(&cand);
            let cand_ll = log_likelihood(&freqs, &cand_probs);
            if cand_ll >= ll {
                accepted = Some((cand, cand_probs, cand_ll));
                break;
            }
            eps = if eps.is_infinite() { 1.0 } else { eps * opts.dilution_factor };
        }
        let Some((cand, cand_probs, cand_ll)) = accepted else {
            // No ascent direction left at machine precision.
            converged = true;
            break;
        };
        debug_assert!(cand_ll >= ll);
        sigma = cand;
        probs = cand_probs;
        ll = cand_ll;
        if opts.record_trace {
            trace.push(ll * total as f64);
        }
    }

    let rho = conjugate_normalized(&ops.g_inv_sqrt, &sigma);
    Ok(ReconstructionResult {
        rho: DensityMatrix::new(CMatrix::from_iterator(TOMO_DIM, TOMO_DIM, rho.iter().cloned()))?,
        log_likelihood: ll * total as f64,
        iterations,
        converged,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub replicates: usize,
    pub dropped: usize,
}

/// Poisson Monte Carlo over observed counts.
///
/// Each replicate redraws every count as Poisson(observed) from its own
/// stream and reruns `analysis`. Failed replicates are dropped; more than 10%
/// drops is an error.
pub fn monte_carlo<F>(counts: &[u64], analysis: F, replicates: usize, seed: u64, label: &str) -> Result<McSummary>
where
    F: Fn(&[u64]) -> Result<Vec<f64>> + Sync,
{
    if replicates < 2 {
        return Err(Error::Domain(format!("need ≥ 2 replicates, got {replicates}")));
    }
    let stream_label = format!("monte_carlo/{label}");
    let outputs: Vec<Option<Vec<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, &stream_label, r as u64);
            let redrawn: Vec<u64> = counts
                .iter()
                .map(|&c| sample_counts(c as f64, &mut rng).expect("observed counts are valid means"))
                .collect();
            analysis(&redrawn).ok()
        })
        .collect();
    let good: Vec<Vec<f64>> = outputs.into_iter().flatten().collect();
    let dropped = replicates - good.len();
    if dropped * 10 > replicates || good.len() < 2 {
        return Err(Error::TooManyDrops { dropped, replicates });
    }
    let width = good[0].len();
    if good.iter().any(|g| g.len() != width) {
        return Err(Error::Domain("analysis output length varies between replicates".into()));
    }
    let n = good.len() as f64;
    let mut mean = vec![0.0; width];
    for g in &good {
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; width];
    for g in &good {
        for ((s, v), m) in var.iter_mut().zip(g).zip(&mean) {
            *s += (v - m).powi(2) / (n - 1.0);
        }
    }
    Ok(McSummary {
        mean,
        std: var.into_iter().map(f64::sqrt).collect(),
        replicates,
        dropped,
    })
}

/// (|LL⟩ + |GG⟩ + |RR⟩)/√3 as a density matrix.
pub fn ideal_qutrit_pair() -> DensityMatrix {
    let s = Complex64::new(1.0 / 3f64.sqrt(), 0.0);
    let mut a = vec![ZERO; TOMO_DIM];
    for k in 0..3 {
        a[k * 3 + k] = s;
    }
    density_from_pure(&PureState::new(a).expect("normalized by construction"))
}

/// 9×9 swap operator |ab⟩ → |ba⟩.
pub fn swap_operator() -> CMatrix {
    let mut s = CMatrix::from_element(TOMO_DIM, TOMO_DIM, ZERO);
    for a in 0..3 {
        for b in 0..3 {
            s[(b * 3 + a, a * 3 + b)] = Complex64::new(1.0, 0.0);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal() -> DensityMatrix {
        ideal_qutrit_pair()
    }

    #[test]
    fn forward_model_examples() {
        let p = forward_probabilities(&ideal()).unwrap();
        // |R⟩ is state index 2.
        assert!((p[2 * 9 + 2] - 1.0 / 3.0).abs() < 1e-12);
        let mixed = forward_probabilities(&DensityMatrix::maximally_mixed(9)).unwrap();
        assert!(mixed.iter().all(|v| (v - 1.0 / 9.0).abs() < 1e-12));
        let basis_sum: f64 = (0..3).flat_map(|j| (0..3).map(move |k| (j, k))).map(|(j, k)| p[j * 9 + k]).sum();
        assert!((basis_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_inversion_exact_probabilities() {
        // Scale exact probabilities to large integers to feed the count path.
        let rho = ideal();
        let p = forward_probabilities(&rho).unwrap();
        let counts: Vec<u64> = p.iter().map(|v| (v * 1.8e12).round() as u64).collect();
        let est = linear_inversion(&TomoDataset::from_flat(&counts).unwrap()).unwrap();
        let err = (&est - rho.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn linear_inversion_with_empty_setting() {
        let p = forward_probabilities(&DensityMatrix::maximally_mixed(9)).unwrap();
        let mut counts: Vec<u64> = p.iter().map(|v| (v * 9e4).round() as u64).collect();
        counts[40] = 0;
        assert!(linear_inversion(&TomoDataset::from_flat(&counts).unwrap()).is_ok());
    }

    #[test]
    fn empty_dataset_rejected() {
        let d = TomoDataset::from_flat(&[0; 81]).unwrap();
        assert!(linear_inversion(&d).is_err());
        assert!(mle_reconstruct(&d).is_err());
    }

    #[test]
    fn equal_counts_give_maximally_mixed_like_state() {
        // I/9 gives every setting the same probability, so it reproduces
        // uniform frequencies exactly.
        let d = TomoDataset::from_flat(&[1000; 81]).unwrap();
        let res = mle_reconstruct(&d).unwrap();
        let err = (res.rho.matrix() - DensityMatrix::maximally_mixed(9).matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "err {err}");
    }

    #[test]
    fn likelihood_never_decreases() {
        let d = simulate_tomography(&ideal(), 1e5, 3).unwrap();
        let opts = MleOptions {
            max_iterations: 300,
            record_trace: true,
            ..Default::default()
        };
        let res = mle_reconstruct_with(&d, &opts).unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1] >= w[0], "{} < {}", w[1], w[0]);
        }
    }

    #[test]
    fn monte_carlo_total_counts() {
        let s = monte_carlo(&[100], |c| Ok(vec![c[0] as f64]), 10_000, 5, "t").unwrap();
        assert!((s.std[0] - 10.0).abs() < 0.3, "std {}", s.std[0]);
        let z = monte_carlo(&[0, 0], |c| Ok(vec![c.iter().sum::<u64>() as f64]), 50, 5, "t").unwrap();
        assert_eq!(z.std[0], 0.0);
    }

    #[test]
    fn monte_carlo_drop_policy() {
        // Fails whenever the redraw is odd: roughly half the replicates.
        let res = monte_carlo(
            &[50],
            |c| if c[0] % 2 == 1 { Err(Error::NoPeak) } else { Ok(vec![1.0]) },
            200,
            1,
            "t",
        );
        assert!(matches!(res, Err(Error::TooManyDrops { .. })));
        assert!(monte_carlo(&[1], |_| Ok(vec![0.0]), 1, 1, "t").is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let d = simulate_tomography(&ideal(), 1e4, 9).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(TomoDataset::read_csv(buf.as_slice()).unwrap(), d);
        let short = "j,k,counts\n1,1,5\n";
        assert!(TomoDataset::read_csv(short.as_bytes()).is_err());
        let bad = "j,k,counts\n10,1,5\n";
        assert!(TomoDataset::read_csv(bad.as_bytes()).is_err());
    }
}
