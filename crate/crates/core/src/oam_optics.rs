//! Laguerre-Gaussian modes, superposition phase masks, and the measurement
//! bases used on the spatial light modulators.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum_state::{PureState, ONE, ZERO};

/// OAM quantum number of one photon, in units of ħ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeIndex(pub i32);

impl ModeIndex {
    pub const L: ModeIndex = ModeIndex(-1);
    pub const G: ModeIndex = ModeIndex(0);
    pub const R: ModeIndex = ModeIndex(1);
}

/// Contiguous range of OAM modes `[min, max]`, the single-arm basis of every
/// simulated state. Basis index `k` holds mode `min + k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeRange {
    min: i32,
    max: i32,
}

impl ModeRange {
    pub fn new(min: i32, max: i32) -> Result<Self> {
        if min > max {
            return Err(Error::Domain(format!("empty mode range [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> i32 {
        self.min
    }

    pub fn max(&self) -> i32 {
        self.max
    }

    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, m: i32) -> bool {
        (self.min..=self.max).contains(&m)
    }

    pub fn index_of(&self, m: i32) -> Option<usize> {
        self.contains(m).then(|| (m - self.min) as usize)
    }

    pub fn modes(&self) -> impl Iterator<Item = i32> {
        self.min..=self.max
    }

    /// Lifts a state over the listed modes into this range, zero elsewhere.
    pub fn embed(&self, modes: &[i32], amplitudes: &[Complex64]) -> Result<PureState> {
        debug_assert_eq!(modes.len(), amplitudes.len());
        let mut full = vec![ZERO; self.len()];
        for (&m, &a) in modes.iter().zip(amplitudes) {
            let k = self
                .index_of(m)
                .ok_or_else(|| Error::Domain(format!("mode {m} outside range [{}, {}]", self.min, self.max)))?;
            full[k] += a;
        }
        PureState::new(full)
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Radial order p = 0 Laguerre-Gaussian amplitude at the waist plane,
/// normalized so that ∫|u|² dA = 1.
pub fn lg_amplitude(m: i32, r: f64, phi: f64, w0: f64) -> Complex64 {
    let l = m.unsigned_abs();
    let norm = (2.0 / (PI * factorial(l))).sqrt() / w0;
    let radial = (r * 2f64.sqrt() / w0).powi(l as i32) * (-(r * r) / (w0 * w0)).exp();
    Complex64::from_polar(norm * radial, m as f64 * phi)
}

/// Square sampling grid centred on the beam axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    /// Pixels per side.
    pub size: usize,
    /// Half-width of the grid in units of the beam waist.
    pub extent: f64,
    pub waist: f64,
}

impl Default for FieldGrid {
    fn default() -> Self {
        Self {
            size: 512,
            extent: 3.0,
            waist: 1.0,
        }
    }
}

impl FieldGrid {
    pub fn new(size: usize, extent: f64, waist: f64) -> Result<Self> {
        if size < 2 {
            return Err(Error::Domain(format!("grid size {size} < 2")));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::Domain(format!("grid extent {extent} must be positive")));
        }
        if !(waist > 0.0 && waist.is_finite()) {
            return Err(Error::Domain(format!("beam waist {waist} must be positive")));
        }
        Ok(Self { size, extent, waist })
    }

    pub fn pixel_pitch(&self) -> f64 {
        2.0 * self.extent * self.waist / self.size as f64
    }

    /// Physical (x, y) of the centre of pixel (row, col); row 0 is the top.
    pub fn coords(&self, row: usize, col: usize) -> (f64, f64) {
        let half = self.extent * self.waist;
        let pitch = self.pixel_pitch();
        let x = -half + (col as f64 + 0.5) * pitch;
        let y = half - (row as f64 + 0.5) * pitch;
        (x, y)
    }

    /// Evaluates `f(r, φ)` at every pixel centre, row-major.
    pub fn sample<T, F>(&self, f: F) -> Vec<T>
    where
        F: Fn(f64, f64) -> T,
    {
        let mut out = Vec::with_capacity(self.size * self.size);
        for row in 0..self.size {
            for col in 0..self.size {
                let (x, y) = self.coords(row, col);
                out.push(f(x.hypot(y), y.atan2(x)));
            }
        }
        out
    }
}

/// LG_{m1} + e^{iθ}·LG_{m2} sampled on the grid.
pub fn superposition_field(m1: i32, m2: i32, theta: f64, grid: &FieldGrid) -> Vec<Complex64> {
    let rel = Complex64::from_polar(1.0, theta);
    grid.sample(|r, phi| lg_amplitude(m1, r, phi, grid.waist) + rel * lg_amplitude(m2, r, phi, grid.waist))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask {
    pub size: usize,
    /// Row-major phase in [0, 2π).
    pub phase: Vec<f64>,
    /// Pixels where the field vanished exactly; their phase is set to 0.
    pub flagged: usize,
}

pub fn wrap_phase(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(TAU);
    if wrapped >= TAU {
        0.0
    } else {
        wrapped
    }
}

pub fn phase_mask_from_field(field: &[Complex64], size: usize) -> PhaseMask {
    let mut flagged = 0;
    let phase = field
        .iter()
        .map(|z| {
            if z.re == 0.0 && z.im == 0.0 {
                flagged += 1;
                0.0
            } else {
                wrap_phase(z.arg())
            }
        })
        .collect();
    PhaseMask { size, phase, flagged }
}

/// Arg(LG_{m1} + e^{iθ}·LG_{m2}) per pixel.
pub fn superposition_phase_mask(m1: i32, m2: i32, theta: f64, grid: &FieldGrid) -> PhaseMask {
    phase_mask_from_field(&superposition_field(m1, m2, theta, grid), grid.size)
}

/// |field|² normalized to a maximum of 1 (all zeros if the field vanishes).
pub fn intensity_from_field(field: &[Complex64]) -> Vec<f64> {
    let intensity: Vec<f64> = field.iter().map(|z| z.norm_sqr()).collect();
    let peak = intensity.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        intensity.into_iter().map(|v| v / peak).collect()
    } else {
        intensity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisLabel {
    X,
    Y,
    Z,
}

impl BasisLabel {
    pub const ALL: [BasisLabel; 3] = [BasisLabel::X, BasisLabel::Y, BasisLabel::Z];

    pub fn as_char(self) -> char {
        match self {
            BasisLabel::X => 'x',
            BasisLabel::Y => 'y',
            BasisLabel::Z => 'z',
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(BasisLabel::X),
            "y" => Ok(BasisLabel::Y),
            "z" => Ok(BasisLabel::Z),
            other => Err(Error::Parse(format!("unknown basis label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn as_char(self) -> char {
        match self {
            Outcome::Plus => '+',
            Outcome::Minus => '-',
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "+" => Ok(Outcome::Plus),
            "-" => Ok(Outcome::Minus),
            other => Err(Error::Parse(format!("unknown outcome {other:?}"))),
        }
    }

    fn index(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }
}

/// One of the three mutually unbiased bases of the 2D subspace {|m⟩, |n⟩}.
///
/// z is {|m⟩, |n⟩}; x is (|m⟩ ± |n⟩)/√2; y is (|m⟩ ± i|n⟩)/√2.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    pub pair: (i32, i32),
    pub label: BasisLabel,
    /// Coefficients on (|m⟩, |n⟩) of the + and − states.
    pub states: [[Complex64; 2]; 2],
}

impl SubspaceBasis {
    pub fn coefficients(&self, outcome: Outcome) -> [Complex64; 2] {
        self.states[outcome.index()]
    }

    pub fn embed(&self, outcome: Outcome, range: &ModeRange) -> Result<PureState> {
        range.embed(&[self.pair.0, self.pair.1], &self.coefficients(outcome))
    }

    /// Hologram field for this basis state: a superposition for x/y, a bare
    /// mode for z.
    pub fn field(&self, outcome: Outcome, grid: &FieldGrid) -> Vec<Complex64> {
        let [a, b] = self.coefficients(outcome);
        let (m, n) = self.pair;
        grid.sample(|r, phi| a * lg_amplitude(m, r, phi, grid.waist) + b * lg_amplitude(n, r, phi, grid.waist))
    }
}

pub fn mub_basis(m: i32, n: i32, label: BasisLabel) -> Result<SubspaceBasis> {
    if m == n {
        return Err(Error::Domain(format!("subspace pair needs distinct modes, got ({m}, {n})")));
    }
    let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let is = Complex64::new(0.0, FRAC_1_SQRT_2);
    let states = match label {
        BasisLabel::Z => [[ONE, ZERO], [ZERO, ONE]],
        BasisLabel::X => [[s, s], [s, -s]],
        BasisLabel::Y => [[s, is], [s, -is]],
    };
    Ok(SubspaceBasis {
        pair: (m, n),
        label,
        states,
    })
}

/// The nine single-arm tomography states over (|L⟩, |G⟩, |R⟩), in the fixed
/// order used by tomography data files (index 0 is "t1").
pub fn qutrit_tomo_states() -> [PureState; 9] {
    let s = FRAC_1_SQRT_2;
    let re = |x: f64| Complex64::new(x, 0.0);
    let im = |x: f64| Complex64::new(0.0, x);
    // (L, G, R)
    let coeffs: [[Complex64; 3]; 9] = [
        [ONE, ZERO, ZERO],
        [ZERO, ONE, ZERO],
        [ZERO, ZERO, ONE],
        [re(s), re(s), ZERO],
        [ZERO, re(s), re(s)],
        [im(s), re(s), ZERO],
        [ZERO, re(s), im(-s)],
        [re(s), ZERO, re(s)],
        [re(s), ZERO, im(s)],
    ];
    coeffs.map(|c| PureState::new(c.to_vec()).expect("tomography states are normalized"))
}

/// Modes spanned by [`qutrit_tomo_states`], in coefficient order.
pub const QUTRIT_MODES: [i32; 3] = [-1, 0, 1];

pub fn phase_to_gray(phase: f64) -> u8 {
    ((phase / TAU) * 256.0).floor().clamp(0.0, 255.0) as u8
}

pub fn intensity_to_gray(normalized: f64) -> u8 {
    (normalized * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Binary 8-bit PGM (P5).
pub fn write_pgm<W: Write>(out: &mut W, width: usize, height: usize, pixels: &[u8]) -> std::io::Result<()> {
    assert_eq!(pixels.len(), width * height);
    write!(out, "P5\n{width} {height}\n255\n")?;
    out.write_all(pixels)
}
