//! Projective coincidence measurements: Born probabilities, Poisson
//! sampling, coincidence tables and two-mode visibilities.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oam_optics::{mub_basis, qutrit_tomo_states, BasisLabel, ModeRange, Outcome, QUTRIT_MODES};
use crate::quantum_state::{density_from_pure, DensityMatrix, PureState};
use crate::rng;
use crate::source_model::{apply_noise, apply_storage, joint_state, storage_survival, ExperimentConfig};

/// Product projector |a⟩⟨a| ⊗ |b⟩⟨b| with its data-file labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub label_a: String,
    pub label_b: String,
    pub a: PureState,
    pub b: PureState,
}

/// Tr[ρ·(|a⟩⟨a| ⊗ |b⟩⟨b|)]
pub fn born_probability(rho: &DensityMatrix, setting: &Setting) -> Result<f64> {
    let (a, b) = (setting.a.amplitudes(), setting.b.amplitudes());
    let dim = a.len() * b.len();
    if dim != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            actual: dim,
        });
    }
    // Projectors are sparse in the mode basis; only touch the non-zero block.
    let mut support = Vec::new();
    for (i, ai) in a.iter().enumerate() {
        if ai.norm_sqr() == 0.0 {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            if bj.norm_sqr() != 0.0 {
                support.push((i * b.len() + j, ai * bj));
            }
        }
    }
    let m = rho.matrix();
    let mut p = 0.0;
    for &(r, vr) in &support {
        for &(c, vc) in &support {
            p += (vr.conj() * m[(r, c)] * vc).re;
        }
    }
    Ok(p)
}

/// One Poisson variate with the given mean.
pub fn sample_counts<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::Domain(format!("Poisson mean {mean} must be finite and ≥ 0")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(dist.sample(rng) as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceRow {
    pub setting_a: String,
    pub setting_b: String,
    pub counts: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoincidenceTable {
    pub rows: Vec<CoincidenceRow>,
}

impl CoincidenceTable {
    pub fn counts(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.counts).collect()
    }

    pub fn labels(&self) -> impl Iterator<Item = (&str, &str)> {
        self.rows.iter().map(|r| (r.setting_a.as_str(), r.setting_b.as_str()))
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.counts).sum()
    }

    pub fn count_for(&self, a: &str, b: &str) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.setting_a == a && r.setting_b == b)
            .map(|r| r.counts)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        let expected = ["setting_a", "setting_b", "counts", "seconds"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse(format!(
                "expected header {}, got {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<CoincidenceRow>, _>>()?;
        Ok(Self { rows })
    }

    /// Appends the rows of another table.
    pub fn extend(&mut self, other: CoincidenceTable) {
        self.rows.extend(other.rows);
    }
}

pub fn mode_label(m: i32) -> String {
    format!("m={m}")
}

pub fn tomo_label(index: usize) -> String {
    format!("t{}", index + 1)
}

/// Identifies one single-arm MUB projector, e.g. `pair=2,-1;basis=x;out=+`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MubLabel {
    pub pair: (i32, i32),
    pub basis: BasisLabel,
    pub outcome: Outcome,
}

impl MubLabel {
    pub fn format(&self) -> String {
        format!(
            "pair={},{};basis={};out={}",
            self.pair.0,
            self.pair.1,
            self.basis.as_char(),
            self.outcome.as_char()
        )
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("malformed MUB label {s:?}"));
        let mut pair = None;
        let mut basis = None;
        let mut outcome = None;
        for part in s.split(';') {
            let (key, value) = part.split_once('=').ok_or_else(bad)?;
            match key.trim() {
                "pair" => {
                    let (m, n) = value.split_once(',').ok_or_else(bad)?;
                    let m = m.trim().parse::<i32>().map_err(|_| bad())?;
                    let n = n.trim().parse::<i32>().map_err(|_| bad())?;
                    pair = Some((m, n));
                }
                "basis" => basis = Some(BasisLabel::parse(value.trim())?),
                "out" => outcome = Some(Outcome::parse(value.trim())?),
                _ => return Err(bad()),
            }
        }
        Ok(Self {
            pair: pair.ok_or_else(bad)?,
            basis: basis.ok_or_else(bad)?,
            outcome: outcome.ok_or_else(bad)?,
        })
    }
}

/// Computational-basis settings (|m⟩, |m′⟩) for every pair of modes.
pub fn mode_settings(range: &ModeRange) -> Vec<Setting> {
    let d = range.len();
    let mut out = Vec::with_capacity(d * d);
    for (i, ma) in range.modes().enumerate() {
        for (j, mb) in range.modes().enumerate() {
            out.push(Setting {
                label_a: mode_label(ma),
                label_b: mode_label(mb),
                a: PureState::basis(d, i),
                b: PureState::basis(d, j),
            });
        }
    }
    out
}

/// The 81 tomography settings (t_j on A, t_k on B), j-major.
pub fn tomo_settings(range: &ModeRange) -> Result<Vec<Setting>> {
    let states = qutrit_tomo_states();
    let embedded = states
        .iter()
        .map(|s| range.embed(&QUTRIT_MODES, s.amplitudes().as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(81);
    for (j, a) in embedded.iter().enumerate() {
        for (k, b) in embedded.iter().enumerate() {
            out.push(Setting {
                label_a: tomo_label(j),
                label_b: tomo_label(k),
                a: a.clone(),
                b: b.clone(),
            });
        }
    }
    Ok(out)
}

/// Unordered pairs of `modes` in list order: (modes[i], modes[j]) for i < j.
pub fn mode_pairs(modes: &[i32]) -> Vec<(i32, i32)> {
    let mut pairs = Vec::new();
    for i in 0..modes.len() {
        for j in i + 1..modes.len() {
            pairs.push((modes[i], modes[j]));
        }
    }
    pairs
}

/// Twelve settings per pair: three bases, both arms, both outcomes.
pub fn mub_settings(range: &ModeRange, modes: &[i32]) -> Result<Vec<Setting>> {
    check_distinct(modes)?;
    let mut out = Vec::new();
    for pair in mode_pairs(modes) {
        for basis in BasisLabel::ALL {
            let b = mub_basis(pair.0, pair.1, basis)?;
            for oa in Outcome::BOTH {
                for ob in Outcome::BOTH {
                    out.push(Setting {
                        label_a: MubLabel { pair, basis, outcome: oa }.format(),
                        label_b: MubLabel { pair, basis, outcome: ob }.format(),
                        a: b.embed(oa, range)?,
                        b: b.embed(ob, range)?,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn check_distinct(modes: &[i32]) -> Result<()> {
    for (i, m) in modes.iter().enumerate() {
        if modes[..i].contains(m) {
            return Err(Error::Domain(format!("mode {m} listed twice")));
        }
    }
    if modes.len() < 2 {
        return Err(Error::Domain("need at least two modes".into()));
    }
    Ok(())
}

/// Number of single-setting measurements for two-mode visibilities on `d`
/// modes: three bases and two outcomes for each ordered pair.
pub fn witness_measurement_count(d: usize) -> usize {
    3 * d * d.saturating_sub(1)
}

/// Number of product settings for full tomography of a d×d state.
pub fn tomography_measurement_count(d: usize) -> usize {
    d.pow(4)
}

/// Model state plus count-rate parameters for one arm configuration.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub range: ModeRange,
    pub rho: DensityMatrix,
    pub pair_rate: f64,
    pub floor_rate: f64,
    pub seconds: f64,
    pub seed: u64,
    stream_tag: &'static str,
}

impl Simulation {
    pub fn from_config(config: &ExperimentConfig, stored: bool, seed: u64) -> Result<Self> {
        config.validate()?;
        let range = config.mode_range()?;
        let source = config.source_spectrum()?;
        let (spectrum, pair_rate) = if stored {
            let profile = config
                .storage_profile()?
                .ok_or_else(|| Error::config("storage_lorentzian", "required for stored simulation"))?;
            let rate = config
                .stored_pair_rate
                .unwrap_or(config.pair_rate * storage_survival(&source, &profile));
            (apply_storage(&source, &profile)?, rate)
        } else {
            (source, config.pair_rate)
        };
        let rho = apply_noise(&density_from_pure(&joint_state(&spectrum)), &config.noise())?;
        Ok(Self {
            range,
            rho,
            pair_rate,
            floor_rate: config.floor_rate,
            seconds: config.acquisition_seconds,
            seed,
            stream_tag: if stored { "stored" } else { "input" },
        })
    }

    /// Directly from a state; rates in counts per second.
    pub fn from_state(range: ModeRange, rho: DensityMatrix, pair_rate: f64, seconds: f64, seed: u64) -> Result<Self> {
        let d = range.len();
        if rho.dim() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                actual: rho.dim(),
            });
        }
        Ok(Self {
            range,
            rho,
            pair_rate,
            floor_rate: 0.0,
            seconds,
            seed,
            stream_tag: "state",
        })
    }

    pub fn with_floor_rate(mut self, floor_rate: f64) -> Self {
        self.floor_rate = floor_rate;
        self
    }

    /// pair_rate·T·p + floor_rate·T per setting.
    pub fn expected_counts(&self, settings: &[Setting]) -> Result<Vec<f64>> {
        settings
            .iter()
            .map(|s| {
                let p = born_probability(&self.rho, s)?.max(0.0);
                Ok(self.pair_rate * self.seconds * p + self.floor_rate * self.seconds)
            })
            .collect()
    }

    /// Poisson-sampled table; setting `i` draws from its own stream.
    pub fn sample(&self, settings: &[Setting], kind: &str) -> Result<CoincidenceTable> {
        let means = self.expected_counts(settings)?;
        let label = format!("simulate/{kind}/{}", self.stream_tag);
        let counts = means
            .par_iter()
            .enumerate()
            .map(|(i, &mean)| sample_counts(mean, &mut rng::stream(self.seed, &label, i as u64)))
            .collect::<Result<Vec<u64>>>()?;
        Ok(CoincidenceTable {
            rows: settings
                .iter()
                .zip(counts)
                .map(|(s, counts)| CoincidenceRow {
                    setting_a: s.label_a.clone(),
                    setting_b: s.label_b.clone(),
                    counts,
                    seconds: self.seconds,
                })
                .collect(),
        })
    }
}

/// Poisson-sampled (|m⟩, |m′⟩) correlation table over the configured range.
pub fn simulate_coincidence_matrix(config: &ExperimentConfig, stored: bool, seed: u64) -> Result<CoincidenceTable> {
    let sim = Simulation::from_config(config, stored, seed)?;
    sim.sample(&mode_settings(&sim.range), "modes")
}

/// Four coincidence values C₊₊, C₊₋, C₋₊, C₋₋ in one basis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BasisCounts {
    pub pp: f64,
    pub pm: f64,
    pub mp: f64,
    pub mm: f64,
}

impl BasisCounts {
    pub fn total(&self) -> f64 {
        self.pp + self.pm + self.mp + self.mm
    }

    /// |C₊₊ + C₋₋ − C₊₋ − C₋₊| / total, or `None` when there are no counts.
    pub fn visibility(&self) -> Option<f64> {
        let total = self.total();
        (total > 0.0).then(|| (self.pp + self.mm - self.pm - self.mp).abs() / total)
    }

    fn slot_mut(&mut self, oa: Outcome, ob: Outcome) -> &mut f64 {
        match (oa, ob) {
            (Outcome::Plus, Outcome::Plus) => &mut self.pp,
            (Outcome::Plus, Outcome::Minus) => &mut self.pm,
            (Outcome::Minus, Outcome::Plus) => &mut self.mp,
            (Outcome::Minus, Outcome::Minus) => &mut self.mm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Visibilities {
    pub pair: (i32, i32),
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
}

impl Visibilities {
    /// V_x + V_y
    pub fn m_term(&self) -> f64 {
        self.vx + self.vy
    }

    /// V_x + V_y + V_z
    pub fn n_term(&self) -> f64 {
        self.vx + self.vy + self.vz
    }
}

/// Visibilities of one mode pair from its x, y and z basis counts (σ = 0;
/// see the witness module for Monte Carlo errors).
pub fn visibilities_from_counts(
    pair: (i32, i32),
    x: &BasisCounts,
    y: &BasisCounts,
    z: &BasisCounts,
) -> Result<Visibilities> {
    let v = |c: &BasisCounts, basis: char| {
        c.visibility().ok_or(Error::UndefinedVisibility {
            m: pair.0,
            n: pair.1,
            basis,
        })
    };
    Ok(Visibilities {
        pair,
        vx: v(x, 'x')?,
        vy: v(y, 'y')?,
        vz: v(z, 'z')?,
        sigma_x: 0.0,
        sigma_y: 0.0,
        sigma_z: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCounts {
    pub pair: (i32, i32),
    pub x: BasisCounts,
    pub y: BasisCounts,
    pub z: BasisCounts,
}

impl PairCounts {
    pub fn visibilities(&self) -> Result<Visibilities> {
        visibilities_from_counts(self.pair, &self.x, &self.y, &self.z)
    }
}

/// Row indices of a table that feed each (pair, basis, outcome pair) slot.
///
/// Built once from the labels so Monte Carlo replicates only re-sum numbers.
#[derive(Debug, Clone)]
pub struct MubLayout {
    pairs: Vec<(i32, i32)>,
    // [pair][basis][slot] -> rows
    rows: Vec<[[Vec<usize>; 4]; 3]>,
}

fn slot_index(oa: Outcome, ob: Outcome) -> usize {
    match (oa, ob) {
        (Outcome::Plus, Outcome::Plus) => 0,
        (Outcome::Plus, Outcome::Minus) => 1,
        (Outcome::Minus, Outcome::Plus) => 2,
        (Outcome::Minus, Outcome::Minus) => 3,
    }
}

const SLOTS: [(Outcome, Outcome); 4] = [
    (Outcome::Plus, Outcome::Plus),
    (Outcome::Plus, Outcome::Minus),
    (Outcome::Minus, Outcome::Plus),
    (Outcome::Minus, Outcome::Minus),
];

impl MubLayout {
    /// Rows whose labels are not MUB labels, or whose pair lies outside
    /// `modes`, are ignored. Every pair of `modes` must have all twelve
    /// settings (in either pair orientation).
    pub fn from_labels<'a, I>(labels: I, modes: &[i32]) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        check_distinct(modes)?;
        let pairs = mode_pairs(modes);
        let lookup: HashMap<(i32, i32), usize> = pairs
            .iter()
            .enumerate()
            .flat_map(|(k, &(m, n))| [((m, n), k), ((n, m), k)])
            .collect();
        let mut rows: Vec<[[Vec<usize>; 4]; 3]> = vec![Default::default(); pairs.len()];
        for (row, (la, lb)) in labels.into_iter().enumerate() {
            let (Ok(a), Ok(b)) = (MubLabel::parse(la), MubLabel::parse(lb)) else {
                continue;
            };
            if a.pair != b.pair || a.basis != b.basis {
                continue;
            }
            let Some(&k) = lookup.get(&a.pair) else {
                continue;
            };
            let basis = BasisLabel::ALL.iter().position(|&l| l == a.basis).unwrap();
            rows[k][basis][slot_index(a.outcome, b.outcome)].push(row);
        }
        let missing: Vec<(i32, i32)> = pairs
            .iter()
            .zip(&rows)
            .filter(|(_, r)| r.iter().flatten().any(Vec::is_empty))
            .map(|(&p, _)| p)
            .collect();
        if !missing.is_empty() {
            return Err(Error::IncompleteData { missing });
        }
        Ok(Self { pairs, rows })
    }

    pub fn pairs(&self) -> &[(i32, i32)] {
        &self.pairs
    }

    /// Per-pair basis counts from per-row values.
    pub fn pair_counts(&self, values: &[f64]) -> Vec<PairCounts> {
        self.pairs
            .iter()
            .zip(&self.rows)
            .map(|(&pair, bases)| {
                let mut out = [BasisCounts::default(); 3];
                for (b, slots) in bases.iter().enumerate() {
                    for (s, rows) in slots.iter().enumerate() {
                        let (oa, ob) = SLOTS[s];
                        *out[b].slot_mut(oa, ob) = rows.iter().map(|&r| values[r]).sum();
                    }
                }
                PairCounts {
                    pair,
                    x: out[0],
                    y: out[1],
                    z: out[2],
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oam_optics::ModeIndex;
    use crate::source_model::SpiralSpectrum;
    use num_complex::Complex64;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn ideal() -> DensityMatrix {
        let r = ModeRange::new(-1, 1).unwrap();
        let s = SpiralSpectrum::from_amplitudes(r, vec![1.0; 3]).unwrap();
        density_from_pure(&joint_state(&s))
    }

    fn setting(a: PureState, b: PureState) -> Setting {
        Setting {
            label_a: String::new(),
            label_b: String::new(),
            a,
            b,
        }
    }

    #[test]
    fn born_examples() {
        let rho = ideal();
        let r = ModeRange::new(-1, 1).unwrap();
        let idx = |m: ModeIndex| r.index_of(m.0).unwrap();
        let ket_r = PureState::basis(3, idx(ModeIndex::R));
        let ket_l = PureState::basis(3, idx(ModeIndex::L));
        let p = born_probability(&rho, &setting(ket_r.clone(), ket_r.clone())).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
        let p = born_probability(&rho, &setting(ket_r, ket_l)).unwrap();
        assert!(p.abs() < 1e-15);
        let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let gl = r.embed(&[0, -1], &[s, s]).unwrap();
        let p = born_probability(&rho, &setting(gl.clone(), gl)).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
        let wrong = PureState::basis(2, 0);
        assert!(born_probability(&rho, &setting(wrong.clone(), wrong)).is_err());
    }

    #[test]
    fn poisson_zero_mean_and_negative() {
        let mut r = rng::stream(1, "t", 0);
        for _ in 0..10 {
            assert_eq!(sample_counts(0.0, &mut r).unwrap(), 0);
        }
        assert!(sample_counts(-1.0, &mut r).is_err());
    }

    #[test]
    fn visibility_product_state() {
        // |m⟩|m⟩: z fully correlated, x and y flat.
        let r = ModeRange::new(0, 1).unwrap();
        let rho = density_from_pure(&PureState::basis(4, 0));
        let sim = Simulation::from_state(r, rho, 1.0, 1.0, 0).unwrap();
        let settings = mub_settings(&r, &[0, 1]).unwrap();
        let exp = sim.expected_counts(&settings).unwrap();
        let layout = MubLayout::from_labels(settings.iter().map(|s| (s.label_a.as_str(), s.label_b.as_str())), &[0, 1]).unwrap();
        let v = layout.pair_counts(&exp)[0].visibilities().unwrap();
        assert!((v.vz - 1.0).abs() < 1e-12);
        assert!(v.vx.abs() < 1e-12 && v.vy.abs() < 1e-12);
    }

    #[test]
    fn zero_counts_visibility_is_undefined() {
        let z = BasisCounts::default();
        let one = BasisCounts { pp: 1.0, ..Default::default() };
        assert!(matches!(
            visibilities_from_counts((0, 1), &one, &one, &z),
            Err(Error::UndefinedVisibility { basis: 'z', .. })
        ));
    }

    #[test]
    fn mub_label_round_trip() {
        let l = MubLabel {
            pair: (2, -1),
            basis: BasisLabel::Y,
            outcome: Outcome::Minus,
        };
        assert_eq!(l.format(), "pair=2,-1;basis=y;out=-");
        assert_eq!(MubLabel::parse(&l.format()).unwrap(), l);
        assert!(MubLabel::parse("m=3").is_err());
    }

    #[test]
    fn layout_reports_missing_pairs() {
        let r = ModeRange::new(0, 2).unwrap();
        let settings = mub_settings(&r, &[0, 1]).unwrap();
        let err = MubLayout::from_labels(settings.iter().map(|s| (s.label_a.as_str(), s.label_b.as_str())), &[0, 1, 2])
            .unwrap_err();
        match err {
            Error::IncompleteData { missing } => assert_eq!(missing, vec![(0, 2), (1, 2)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn measurement_counts() {
        assert_eq!(witness_measurement_count(3), 18);
        assert_eq!(witness_measurement_count(4), 36);
        assert_eq!(tomography_measurement_count(3), 81);
        assert_eq!(tomography_measurement_count(4), 256);
    }

    #[test]
    fn csv_round_trip_with_quoted_labels() {
        let table = CoincidenceTable {
            rows: vec![CoincidenceRow {
                setting_a: "pair=2,-1;basis=x;out=+".into(),
                setting_b: "m=-3".into(),
                counts: 17,
                seconds: 100.0,
            }],
        };
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("setting_a,setting_b,counts,seconds\n"));
        assert_eq!(CoincidenceTable::read_csv(buf.as_slice()).unwrap(), table);
        assert!(CoincidenceTable::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
