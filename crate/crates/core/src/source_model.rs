//! Parametric model of the entangled source, mode-dependent storage and
//! background noise.
//!
//! The source emits Σ c_m |m⟩|m⟩ with c_m the square root of a Lorentzian
//! spiral-bandwidth profile. Storage attenuates each mode's amplitude by
//! √η_m and the surviving pairs are renormalized (post-selection).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oam_optics::ModeRange;
use crate::quantum_state::{CMatrix, DensityMatrix, PureState, ZERO};

/// Largest number of modes a simulation will build dense states for.
pub const MAX_MODES: usize = 32;

/// y = y0 + (2A/π)·w / (4(x − xc)² + w²)
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianParams {
    pub y0: f64,
    pub xc: f64,
    pub w: f64,
    #[serde(rename = "A")]
    pub a: f64,
}

impl LorentzianParams {
    pub const fn new(y0: f64, xc: f64, w: f64, a: f64) -> Self {
        Self { y0, xc, w, a }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(Error::Domain(format!("Lorentzian width w = {} must be positive", self.w)));
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(Error::Domain(format!("Lorentzian area A = {} must be non-negative", self.a)));
        }
        if !self.y0.is_finite() || !self.xc.is_finite() {
            return Err(Error::Domain("Lorentzian y0 and xc must be finite".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        lorentzian_eval(x, self)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.y0, self.xc, self.w, self.a]
    }

    pub fn from_array(p: [f64; 4]) -> Self {
        Self::new(p[0], p[1], p[2], p[3])
    }
}

pub fn lorentzian_eval(x: f64, p: &LorentzianParams) -> f64 {
    let dx = x - p.xc;
    p.y0 + (2.0 * p.a / PI) * p.w / (4.0 * dx * dx + p.w * p.w)
}

/// Normalized real amplitudes c_m (with optional per-mode phases) over a
/// contiguous mode range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralSpectrum {
    range: ModeRange,
    coefficients: Vec<f64>,
    phases: Vec<f64>,
}

impl SpiralSpectrum {
    /// Normalizes non-negative weights (amplitudes, not probabilities).
    pub fn from_amplitudes(range: ModeRange, amplitudes: Vec<f64>) -> Result<Self> {
        if amplitudes.len() != range.len() {
            return Err(Error::DimensionMismatch {
                expected: range.len(),
                actual: amplitudes.len(),
            });
        }
        if amplitudes.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::Domain("spectrum amplitudes must be finite and non-negative".into()));
        }
        let norm_sq: f64 = amplitudes.iter().map(|c| c * c).sum();
        if norm_sq == 0.0 {
            return Err(Error::DegenerateSpectrum);
        }
        let scale = norm_sq.sqrt().recip();
        Ok(Self {
            range,
            coefficients: amplitudes.into_iter().map(|c| c * scale).collect(),
            phases: vec![0.0; range.len()],
        })
    }

    pub fn with_phases(mut self, phases: Vec<f64>) -> Result<Self> {
        if phases.len() != self.range.len() {
            return Err(Error::DimensionMismatch {
                expected: self.range.len(),
                actual: phases.len(),
            });
        }
        self.phases = phases;
        Ok(self)
    }

    pub fn range(&self) -> ModeRange {
        self.range
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn coefficient(&self, m: i32) -> Option<f64> {
        self.range.index_of(m).map(|k| self.coefficients[k])
    }

    /// |c_m|², the relative coincidence weight of mode m.
    pub fn probabilities(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c * c).collect()
    }

    fn amplitude(&self, k: usize) -> Complex64 {
        Complex64::from_polar(self.coefficients[k], self.phases[k])
    }
}

pub fn build_spiral_spectrum(p: &LorentzianParams, range: ModeRange) -> Result<SpiralSpectrum> {
    p.validate()?;
    let amps = range
        .modes()
        .map(|m| lorentzian_eval(m as f64, p).max(0.0).sqrt())
        .collect();
    SpiralSpectrum::from_amplitudes(range, amps)
}

/// Σ_m c_m |m⟩⊗|m⟩ over the product basis of the spectrum's mode range.
pub fn joint_state(spectrum: &SpiralSpectrum) -> PureState {
    let d = spectrum.range().len();
    let mut amps = vec![ZERO; d * d];
    for k in 0..d {
        amps[k * d + k] = spectrum.amplitude(k);
    }
    PureState::new(amps).expect("normalized spectrum yields a normalized state")
}

/// Per-mode storage efficiencies η_m ∈ [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageProfile {
    range: ModeRange,
    efficiencies: Vec<f64>,
}

impl StorageProfile {
    pub fn new(range: ModeRange, efficiencies: Vec<f64>) -> Result<Self> {
        if efficiencies.len() != range.len() {
            return Err(Error::DimensionMismatch {
                expected: range.len(),
                actual: efficiencies.len(),
            });
        }
        if let Some((k, eta)) = efficiencies
            .iter()
            .enumerate()
            .find(|(_, &e)| !(0.0..=1.0).contains(&e))
        {
            return Err(Error::Domain(format!(
                "storage efficiency {eta} for mode {} outside [0, 1]",
                range.min() + k as i32
            )));
        }
        Ok(Self { range, efficiencies })
    }

    pub fn uniform(range: ModeRange, eta: f64) -> Result<Self> {
        Self::new(range, vec![eta; range.len()])
    }

    pub fn from_lorentzian(p: &LorentzianParams, range: ModeRange) -> Result<Self> {
        p.validate()?;
        Self::new(range, range.modes().map(|m| lorentzian_eval(m as f64, p)).collect())
    }

    pub fn range(&self) -> ModeRange {
        self.range
    }

    pub fn efficiencies(&self) -> &[f64] {
        &self.efficiencies
    }
}

/// o_m = c_m·√η_m / √(Σ c_k² η_k)
pub fn apply_storage(spectrum: &SpiralSpectrum, profile: &StorageProfile) -> Result<SpiralSpectrum> {
    if spectrum.range() != profile.range() {
        return Err(Error::Domain("storage profile and spectrum cover different mode ranges".into()));
    }
    let amps: Vec<f64> = spectrum
        .coefficients()
        .iter()
        .zip(profile.efficiencies())
        .map(|(c, eta)| c * eta.sqrt())
        .collect();
    match SpiralSpectrum::from_amplitudes(spectrum.range(), amps) {
        Err(Error::DegenerateSpectrum) => Err(Error::NoSurvivingAmplitude),
        other => Ok(other?.with_phases(spectrum.phases().to_vec())?),
    }
}

/// Fraction of pairs that survive storage, Σ c_m² η_m.
pub fn storage_survival(spectrum: &SpiralSpectrum, profile: &StorageProfile) -> f64 {
    spectrum
        .probabilities()
        .iter()
        .zip(profile.efficiencies())
        .map(|(p, eta)| p * eta)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// White-noise mixing weight.
    pub epsilon: f64,
    /// Accidental coincidences per setting per second.
    pub floor_rate: f64,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Domain(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        if !(self.floor_rate >= 0.0 && self.floor_rate.is_finite()) {
            return Err(Error::Domain(format!("floor rate {} must be ≥ 0", self.floor_rate)));
        }
        Ok(())
    }
}

/// (1 − ε)·ρ + ε·I/dim
pub fn apply_noise(rho: &DensityMatrix, noise: &NoiseParams) -> Result<DensityMatrix> {
    noise.validate()?;
    let d = rho.dim();
    let eps = noise.epsilon;
    let mixed = CMatrix::identity(d, d) * Complex64::new(eps / d as f64, 0.0);
    let matrix = rho.matrix() * Complex64::new(1.0 - eps, 0.0) + mixed;
    Ok(DensityMatrix::from_matrix_unchecked(matrix))
}

/// Simulation configuration as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode_min: i32,
    pub mode_max: i32,
    pub source_lorentzian: LorentzianParams,
    pub storage_lorentzian: Option<LorentzianParams>,
    pub epsilon: f64,
    pub floor_rate: f64,
    /// Detected pairs per second before storage.
    pub pair_rate: f64,
    pub acquisition_seconds: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Per-mode phases of c_m; zero when absent.
    #[serde(default)]
    pub phases: Option<Vec<f64>>,
    /// Pair rate after storage; defaults to `pair_rate` scaled by the
    /// storage survival Σ c_m² η_m.
    #[serde(default)]
    pub stored_pair_rate: Option<f64>,
}

impl ExperimentConfig {
    /// Defaults modelled on the published fits: 15 modes, source width 7.7,
    /// storage-efficiency curve (0.132, 0, 2.274, 0.354). The pair rate is
    /// chosen so the expected diagonal counts over 100 s equal the source
    /// Lorentzian itself.
    pub fn paper_default() -> Self {
        let source = LorentzianParams::new(0.0, 0.0, 7.7, 2030.0);
        let acquisition_seconds = 100.0;
        let total: f64 = (-7..=7).map(|m| source.eval(m as f64)).sum();
        Self {
            mode_min: -7,
            mode_max: 7,
            source_lorentzian: source,
            storage_lorentzian: Some(LorentzianParams::new(0.132, 0.0, 2.274, 0.354)),
            epsilon: 0.0,
            floor_rate: 0.0,
            pair_rate: total / acquisition_seconds,
            acquisition_seconds,
            seed: Some(42),
            phases: None,
            stored_pair_rate: None,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(s).map_err(|e| Error::config(json_field(&e), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let range = ModeRange::new(self.mode_min, self.mode_max)
            .map_err(|_| Error::config("mode_max", "must be ≥ mode_min"))?;
        if range.len() > MAX_MODES {
            return Err(Error::config(
                "mode_max",
                format!("mode range spans {} modes (max {MAX_MODES})", range.len()),
            ));
        }
        self.source_lorentzian
            .validate()
            .map_err(|e| Error::config("source_lorentzian", e.to_string()))?;
        if let Some(st) = &self.storage_lorentzian {
            st.validate()
                .map_err(|e| Error::config("storage_lorentzian", e.to_string()))?;
            StorageProfile::from_lorentzian(st, range)
                .map_err(|e| Error::config("storage_lorentzian", e.to_string()))?;
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config("epsilon", "must lie in [0, 1]"));
        }
        for (field, v) in [
            ("floor_rate", self.floor_rate),
            ("pair_rate", self.pair_rate),
            ("acquisition_seconds", self.acquisition_seconds),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be finite and ≥ 0"));
            }
        }
        if let Some(r) = self.stored_pair_rate {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::config("stored_pair_rate", "must be finite and ≥ 0"));
            }
        }
        if let Some(ph) = &self.phases {
            if ph.len() != range.len() {
                return Err(Error::config(
                    "phases",
                    format!("expected {} entries, got {}", range.len(), ph.len()),
                ));
            }
        }
        Ok(())
    }

    pub fn mode_range(&self) -> Result<ModeRange> {
        ModeRange::new(self.mode_min, self.mode_max)
    }

    pub fn noise(&self) -> NoiseParams {
        NoiseParams {
            epsilon: self.epsilon,
            floor_rate: self.floor_rate,
        }
    }

    pub fn source_spectrum(&self) -> Result<SpiralSpectrum> {
        let spectrum = build_spiral_spectrum(&self.source_lorentzian, self.mode_range()?)?;
        match &self.phases {
            Some(ph) => spectrum.with_phases(ph.clone()),
            None => Ok(spectrum),
        }
    }

    pub fn storage_profile(&self) -> Result<Option<StorageProfile>> {
        self.storage_lorentzian
            .as_ref()
            .map(|p| StorageProfile::from_lorentzian(p, self.mode_range()?))
            .transpose()
    }
}

fn json_field(e: &serde_json::Error) -> String {
    // serde_json reports "missing field `x`" / "unknown field `x`" in the message.
    let msg = e.to_string();
    msg.split('`').nth(1).map(str::to_owned).unwrap_or_else(|| "<document>".into())
}
