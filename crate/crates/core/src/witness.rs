//! Entanglement and dimensionality witnesses built from two-mode
//! visibilities.
//!
//! M sums V_x + V_y over all mode pairs and is compared with (d − 1)²;
//! W sums V_x + V_y + V_z and is compared with 3·D(D−1)/2 − D(D − d).
//! All comparisons are strict.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{mode_pairs, CoincidenceTable, MubLayout, PairCounts, Visibilities};
use crate::tomography::monte_carlo;

/// Schmidt-rank-3 fidelity threshold for the ideal qutrit pair.
pub const SCHMIDT_THRESHOLD: f64 = 2.0 / 3.0;

/// (d − 1)², the largest M reachable without d-dimensional entanglement.
pub fn bound_m(d: u32) -> Result<u64> {
    if d < 2 {
        return Err(Error::Domain(format!("dimension {d} < 2")));
    }
    Ok(u64::from(d - 1).pow(2))
}

/// 3·D(D−1)/2 − D(D − d)
pub fn bound_w(modes: u32, d: u32) -> Result<u64> {
    if d < 2 {
        return Err(Error::Domain(format!("dimension {d} < 2")));
    }
    if d > modes {
        return Err(Error::Domain(format!("dimension {d} exceeds mode count {modes}")));
    }
    let big = u64::from(modes);
    Ok(3 * big * (big - 1) / 2 - big * (big - u64::from(d)))
}

fn require_pairs(vis: &[Visibilities], modes: &[i32]) -> Result<Vec<Visibilities>> {
    let mut out = Vec::new();
    let mut missing = Vec::new();
    for (m, n) in mode_pairs(modes) {
        match vis.iter().find(|v| v.pair == (m, n) || v.pair == (n, m)) {
            Some(v) => out.push(*v),
            None => missing.push((m, n)),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(Error::IncompleteData { missing })
    }
}

/// Σ_pairs (V_x + V_y) with σ from the per-visibility errors in quadrature
/// (each visibility comes from disjoint counts).
pub fn compute_m(vis: &[Visibilities], modes: &[i32]) -> Result<(f64, f64)> {
    let vis = require_pairs(vis, modes)?;
    let value = vis.iter().map(Visibilities::m_term).sum();
    let var: f64 = vis.iter().map(|v| v.sigma_x.powi(2) + v.sigma_y.powi(2)).sum();
    Ok((value, var.sqrt()))
}

/// Σ_pairs (V_x + V_y + V_z), σ as in [`compute_m`].
pub fn compute_w(vis: &[Visibilities], modes: &[i32]) -> Result<(f64, f64)> {
    let vis = require_pairs(vis, modes)?;
    let value = vis.iter().map(Visibilities::n_term).sum();
    let var: f64 = vis
        .iter()
        .map(|v| v.sigma_x.powi(2) + v.sigma_y.powi(2) + v.sigma_z.powi(2))
        .sum();
    Ok((value, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCheck {
    pub fidelity: f64,
    pub pass: bool,
    pub margin: f64,
}

pub fn schmidt_threshold_check(fidelity: f64) -> Result<ThresholdCheck> {
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(Error::Domain(format!("fidelity {fidelity} outside [0, 1]")));
    }
    Ok(ThresholdCheck {
        fidelity,
        pass: fidelity > SCHMIDT_THRESHOLD,
        margin: fidelity - SCHMIDT_THRESHOLD,
    })
}

/// How a violated W_d bound is turned into a dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// Violating W_d certifies d dimensions.
    Claims,
    /// Violating W_d certifies d + 1 dimensions.
    Prose,
}

/// Largest d with W − W_d > k·σ (claims), or that d + 1 (prose).
/// Returns 1 when no bound is violated.
pub fn certify_dimension(w: f64, sigma_w: f64, modes: u32, k_sigma: f64, convention: Convention) -> Result<u32> {
    if modes < 2 {
        return Err(Error::Domain(format!("need ≥ 2 modes, got {modes}")));
    }
    if !(k_sigma >= 0.0) {
        return Err(Error::Domain(format!("k_sigma {k_sigma} must be ≥ 0")));
    }
    let mut best = None;
    for d in 2..=modes {
        if w - bound_w(modes, d)? as f64 > k_sigma * sigma_w {
            best = Some(d);
        }
    }
    Ok(match (best, convention) {
        (None, _) => 1,
        (Some(d), Convention::Claims) => d,
        (Some(d), Convention::Prose) => d + 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub excess: f64,
    /// excess / σ; infinite when σ = 0 and the excess is positive.
    pub sigmas: f64,
}

fn violation(value: f64, bound: f64, sigma: f64) -> Violation {
    let excess = value - bound;
    let sigmas = if sigma > 0.0 {
        excess / sigma
    } else if excess > 0.0 {
        f64::INFINITY
    } else if excess < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    Violation { excess, sigmas }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedDimensions {
    pub claims: u32,
    pub prose: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub mode_set: Vec<i32>,
    #[serde(rename = "D")]
    pub mode_count: u32,
    pub pair_visibilities: Vec<Visibilities>,
    #[serde(rename = "M")]
    pub m: f64,
    pub sigma_m: f64,
    /// (D − 1)² for the measured mode set.
    pub bound_m: u64,
    pub m_violation: Violation,
    #[serde(rename = "W")]
    pub w: f64,
    pub sigma_w: f64,
    /// W_d for d = 2..=D.
    pub bounds: BTreeMap<u32, u64>,
    pub violations: BTreeMap<u32, Violation>,
    pub k_sigma: f64,
    pub convention: Convention,
    pub certified_dimension: u32,
    pub certified_dimensions: CertifiedDimensions,
    pub mc_replicates: usize,
    pub mc_dropped: usize,
}

impl WitnessReport {
    /// Builds the report from already-computed witness values.
    pub fn from_values(
        modes: &[i32],
        pair_visibilities: Vec<Visibilities>,
        (m, sigma_m): (f64, f64),
        (w, sigma_w): (f64, f64),
        k_sigma: f64,
        convention: Convention,
    ) -> Result<Self> {
        let big = modes.len() as u32;
        let bm = bound_m(big)?;
        let mut bounds = BTreeMap::new();
        let mut violations = BTreeMap::new();
        for d in 2..=big {
            let b = bound_w(big, d)?;
            bounds.insert(d, b);
            violations.insert(d, violation(w, b as f64, sigma_w));
        }
        let claims = certify_dimension(w, sigma_w, big, k_sigma, Convention::Claims)?;
        let prose = certify_dimension(w, sigma_w, big, k_sigma, Convention::Prose)?;
        Ok(Self {
            mode_set: modes.to_vec(),
            mode_count: big,
            pair_visibilities,
            m,
            sigma_m,
            bound_m: bm,
            m_violation: violation(m, bm as f64, sigma_m),
            w,
            sigma_w,
            bounds,
            violations,
            k_sigma,
            convention,
            certified_dimension: match convention {
                Convention::Claims => claims,
                Convention::Prose => prose,
            },
            certified_dimensions: CertifiedDimensions { claims, prose },
            mc_replicates: 0,
            mc_dropped: 0,
        })
    }

    /// True when M exceeds (D − 1)² by more than k·σ_M.
    pub fn m_certifies_full_set(&self) -> bool {
        self.m_violation.excess > self.k_sigma * self.sigma_m
    }

    pub fn summary_text(&self, reference: Option<&str>) -> String {
        let mut s = String::new();
        let modes: Vec<String> = self.mode_set.iter().map(i32::to_string).collect();
        let _ = writeln!(s, "Mode set ({} modes): {}", self.mode_count, modes.join(", "));
        let _ = writeln!(s, "M = {:.3} ± {:.3} (bound M_{} = {})", self.m, self.sigma_m, self.mode_count, self.bound_m);
        if self.m_certifies_full_set() {
            let _ = writeln!(
                s,
                "M violates M_{} = {} by {:.3} ({}): at least {}-dimensional entanglement",
                self.mode_count,
                self.bound_m,
                self.m_violation.excess,
                sigmas_text(self.m_violation.sigmas),
                number_word(self.mode_count)
            );
        } else {
            let _ = writeln!(s, "M does not violate M_{} = {} at {} sigma", self.mode_count, self.bound_m, self.k_sigma);
        }
        let _ = writeln!(s, "W = {:.3} ± {:.3}", self.w, self.sigma_w);
        for (d, b) in &self.bounds {
            let v = &self.violations[d];
            if v.excess > self.k_sigma * self.sigma_w {
                let _ = writeln!(
                    s,
                    "W violates W_{d} = {b} by {:.3} ({})",
                    v.excess,
                    sigmas_text(v.sigmas)
                );
            } else {
                let _ = writeln!(s, "W does not violate W_{d} = {b} (excess {:.3})", v.excess);
            }
        }
        let _ = writeln!(
            s,
            "Certified dimension at {} sigma: {} (claims convention), {} (prose convention); reported: {}",
            self.k_sigma, self.certified_dimensions.claims, self.certified_dimensions.prose, self.certified_dimension
        );
        if let Some(r) = reference {
            let _ = writeln!(s, "{r}");
        }
        s
    }
}

fn sigmas_text(sigmas: f64) -> String {
    if sigmas.abs() > 1e6 {
        "error bar vanishes".into()
    } else {
        format!("{sigmas:.1} standard deviations")
    }
}

fn number_word(n: u32) -> String {
    const WORDS: [&str; 13] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    ];
    WORDS.get(n as usize).map(|w| w.to_string()).unwrap_or_else(|| n.to_string())
}

/// Witness analysis of a coincidence table holding MUB settings for every
/// pair of `modes`. σ_M and σ_W come from a joint Poisson Monte Carlo over
/// the raw counts; per-pair visibility errors from the same replicates.
pub fn witness_from_table(
    table: &CoincidenceTable,
    modes: &[i32],
    k_sigma: f64,
    convention: Convention,
    replicates: usize,
    seed: u64,
) -> Result<WitnessReport> {
    let layout = MubLayout::from_labels(table.labels(), modes)?;
    let counts = table.counts();
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let pair_counts = layout.pair_counts(&values);
    let mut vis = pair_counts
        .iter()
        .map(PairCounts::visibilities)
        .collect::<Result<Vec<_>>>()?;

    let analysis = |c: &[u64]| -> Result<Vec<f64>> {
        let v: Vec<f64> = c.iter().map(|&x| x as f64).collect();
        let pcs = layout.pair_counts(&v);
        let mut out = Vec::with_capacity(2 + 3 * pcs.len());
        let (mut m, mut w) = (0.0, 0.0);
        for pc in &pcs {
            let vis = pc.visibilities()?;
            m += vis.m_term();
            w += vis.n_term();
            out.extend([vis.vx, vis.vy, vis.vz]);
        }
        out.insert(0, w);
        out.insert(0, m);
        Ok(out)
    };
    let m_value: f64 = vis.iter().map(Visibilities::m_term).sum();
    let w_value: f64 = vis.iter().map(Visibilities::n_term).sum();

    let (sigma_m, sigma_w, used, dropped) = if replicates >= 2 {
        let mc = monte_carlo(&counts, analysis, replicates, seed, "witness")?;
        for (k, v) in vis.iter_mut().enumerate() {
            v.sigma_x = mc.std[2 + 3 * k];
            v.sigma_y = mc.std[3 + 3 * k];
            v.sigma_z = mc.std[4 + 3 * k];
        }
        (mc.std[0], mc.std[1], mc.replicates, mc.dropped)
    } else {
        (0.0, 0.0, 0, 0)
    };
    let mut report = WitnessReport::from_values(modes, vis, (m_value, sigma_m), (w_value, sigma_w), k_sigma, convention)?;
    report.mc_replicates = used;
    report.mc_dropped = dropped;
    Ok(report)
}
