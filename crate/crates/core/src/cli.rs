//! Command-line front end.
//!
//! Every command writes its outputs plus `<out>.manifest.json`, which records
//! the arguments, resolved seed and SHA-256 digests of inputs and outputs.
//! `oamsim replay <manifest>` reruns the command and checks the digests.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fitting::{fit_lorentzian, poisson_weights, FitResult};
use crate::measurement::{mode_settings, mub_settings, tomo_settings, CoincidenceTable, Simulation};
use crate::oam_optics::{
    intensity_from_field, intensity_to_gray, mub_basis, phase_mask_from_field, phase_to_gray, superposition_field,
    write_pgm, BasisLabel, FieldGrid, Outcome,
};
use crate::quantum_state::uhlmann_fidelity;
use crate::reference;
use crate::source_model::ExperimentConfig;
use crate::tomography::{
    ideal_qutrit_pair, mle_reconstruct, mle_reconstruct_from, monte_carlo, MleOptions, ReconstructionJson, ReconstructionResult, TomoDataset, TOMO_SETTINGS,
};
use crate::witness::{schmidt_threshold_check, witness_from_table, Convention, ThresholdCheck};

pub const SEED_ENV: &str = "OAMSIM_SEED";

#[derive(Debug, Parser)]
#[command(name = "oamsim", version, about = "OAM entanglement simulation and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Poisson-sampled coincidence counts from a JSON experiment config.
    Simulate(SimulateArgs),
    /// Maximum-likelihood qutrit tomography with Monte Carlo errors.
    Tomo(TomoArgs),
    /// Dimensionality witnesses M and W from MUB visibility counts.
    Witness(WitnessArgs),
    /// Lorentzian fit of x,y[,weight] data or of a correlation table diagonal.
    Fit(FitArgs),
    /// Phase and intensity PGMs for a two-mode hologram.
    Mask(MaskArgs),
    /// Rerun a recorded command and verify its output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimKind {
    /// Full |m⟩|m′⟩ correlation matrix.
    Modes,
    /// 81 qutrit tomography settings, written as j,k,counts.
    Tomo,
    /// x/y/z basis settings for every pair of --modes.
    Mub,
}

impl SimKind {
    fn name(self) -> &'static str {
        match self {
            SimKind::Modes => "modes",
            SimKind::Tomo => "tomo",
            SimKind::Mub => "mub",
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Simulate the state retrieved from memory instead of the source state.
    #[arg(long)]
    pub stored: bool,
    #[arg(long, value_enum, default_value = "modes")]
    pub kind: SimKind,
    /// Comma-separated modes, required for --kind mub.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub modes: Option<Vec<i32>>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TomoArgs {
    /// Tomography counts (j,k,counts).
    pub counts: PathBuf,
    /// Second dataset; its reconstruction is compared with the first.
    pub compare: Option<PathBuf>,
    /// Monte Carlo replicates (each runs a full reconstruction).
    #[arg(long, default_value_t = 200)]
    pub mc: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct WitnessArgs {
    /// One or more coincidence tables holding the MUB settings.
    #[arg(required = true)]
    pub counts: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub modes: Vec<i32>,
    #[arg(long, default_value_t = 3.0)]
    pub k_sigma: f64,
    #[arg(long, value_enum, default_value = "claims")]
    pub convention: Convention,
    #[arg(long, default_value_t = 1000)]
    pub mc: usize,
    /// JSON report; the text summary goes next to it with a .txt extension.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub data: PathBuf,
    /// Equal weights instead of the Poisson default (ignored when the file has
    /// a weight column).
    #[arg(long)]
    pub unweighted: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub m1: i32,
    #[arg(long, allow_negative_numbers = true)]
    pub m2: i32,
    /// Relative phase of the second mode.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "basis")]
    pub theta: Option<f64>,
    #[arg(long, value_parser = parse_basis, requires = "outcome")]
    pub basis: Option<BasisLabel>,
    #[arg(long, value_parser = parse_outcome, requires = "basis")]
    pub outcome: Option<Outcome>,
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    /// Half-width of the square window in waist units.
    #[arg(long, default_value_t = 3.0)]
    pub extent: f64,
    #[arg(long, default_value_t = 1.0)]
    pub waist: f64,
    /// Output prefix; writes <prefix>_phase.pgm and <prefix>_intensity.pgm.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

fn parse_basis(s: &str) -> std::result::Result<BasisLabel, String> {
    BasisLabel::parse(s).map_err(|e| e.to_string())
}

fn parse_outcome(s: &str) -> std::result::Result<Outcome, String> {
    Outcome::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub config: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub seed: Option<u64>,
    pub tool_version: String,
}

impl PipelineManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub reconstruction: ReconstructionJson,
    pub fidelity_to_ideal: Estimate,
    pub schmidt_check: ThresholdCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomoReport {
    pub input: StateSummary,
    pub compare: Option<StateSummary>,
    /// F(ρ_compare, ρ_input), present with a second dataset.
    pub fidelity_between: Option<Estimate>,
    pub mc_replicates: usize,
    pub mc_dropped: usize,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub points: usize,
    pub weighting: String,
    pub fit: FitResult,
}

/// Maps an error to the process exit code: 3 for I/O, 2 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_io() {
        3
    } else {
        2
    }
}

/// Parses `args` (without the program name) and runs the command.
pub fn run_args(args: Vec<String>) -> Result<()> {
    let mut argv = vec!["oamsim".to_string()];
    argv.extend(args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::Parse(e.to_string()))?;
    run(cli.command, args, None)
}

/// Runs a parsed command. `seed_override` pins the seed (used by replay).
pub fn run(command: Command, args: Vec<String>, seed_override: Option<u64>) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(a, args, seed_override),
        Command::Tomo(a) => cmd_tomo(a, args, seed_override),
        Command::Witness(a) => cmd_witness(a, args, seed_override),
        Command::Fit(a) => cmd_fit(a, args),
        Command::Mask(a) => cmd_mask(a, args),
        Command::Replay(a) => cmd_replay(&a.manifest),
    }
}

fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::config(SEED_ENV, format!("not an unsigned integer: {v:?}"))),
        Err(_) => Ok(0),
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(with_path(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digest(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_manifest(
    command: &str,
    args: Vec<String>,
    config: Option<&Path>,
    inputs: &[&Path],
    outputs: &[&Path],
    seed: Option<u64>,
    anchor: &Path,
) -> Result<()> {
    let manifest = PipelineManifest {
        command: command.to_string(),
        args,
        config: config.map(|p| p.display().to_string()),
        inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        outputs: outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&manifest_path(anchor), &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(with_path(path))?))
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(with_path(path))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(with_path(path))
}

fn cmd_simulate(a: SimulateArgs, args: Vec<String>, seed_override: Option<u64>) -> Result<()> {
    let text = read_text(&a.config)?;
    let config = ExperimentConfig::from_json_str(&text)?;
    let seed = match seed_override {
        Some(s) => s,
        None => resolve_seed(a.seed, config.seed)?,
    };
    let sim = Simulation::from_config(&config, a.stored, seed)?;
    let kind = a.kind.name();
    let mut out = create(&a.out)?;
    match a.kind {
        SimKind::Modes => sim.sample(&mode_settings(&sim.range), kind)?.write_csv(&mut out)?,
        SimKind::Tomo => {
            let table = sim.sample(&tomo_settings(&sim.range)?, kind)?;
            TomoDataset::from_table(&table)?.write_csv(&mut out)?
        }
        SimKind::Mub => {
            let modes = a
                .modes
                .as_deref()
                .ok_or_else(|| Error::config("modes", "required for --kind mub"))?;
            sim.sample(&mub_settings(&sim.range, modes)?, kind)?.write_csv(&mut out)?
        }
    }
    out.flush()?;
    drop(out);
    write_manifest("simulate", args, Some(&a.config), &[&a.config], &[&a.out], Some(seed), &a.out)
}

fn read_tomo(path: &Path) -> Result<TomoDataset> {
    TomoDataset::read_csv(open(path)?)
}

fn summarize(rec: &ReconstructionResult, sigma: f64) -> Result<StateSummary> {
    let f = uhlmann_fidelity(&rec.rho, &ideal_qutrit_pair())?;
    Ok(StateSummary {
        reconstruction: rec.to_json(),
        fidelity_to_ideal: Estimate { value: f, sigma },
        schmidt_check: schmidt_threshold_check(f)?,
    })
}

fn cmd_tomo(a: TomoArgs, args: Vec<String>, seed_override: Option<u64>) -> Result<()> {
    let seed = match seed_override {
        Some(s) => s,
        None => resolve_seed(a.seed, None)?,
    };
    let first = read_tomo(&a.counts)?;
    let second = a.compare.as_deref().map(read_tomo).transpose()?;
    let ideal = ideal_qutrit_pair();

    let mut counts = first.flat();
    if let Some(d) = &second {
        counts.extend(d.flat());
    }
    let rec1 = mle_reconstruct(&first)?;
    let rec2 = second.as_ref().map(mle_reconstruct).transpose()?;

    // Replicates start from the point estimates.
    // Output: F(ρ₁, ideal)[, F(ρ₂, ideal), F(ρ₂, ρ₁)].
    let opts = MleOptions::default();
    let analysis = |c: &[u64]| -> Result<Vec<f64>> {
        let r1 = mle_reconstruct_from(&TomoDataset::from_flat(&c[..TOMO_SETTINGS])?, &opts, &rec1.rho)?.rho;
        let mut out = vec![uhlmann_fidelity(&r1, &ideal)?];
        if let Some(start) = &rec2 {
            let r2 = mle_reconstruct_from(&TomoDataset::from_flat(&c[TOMO_SETTINGS..])?, &opts, &start.rho)?.rho;
            out.push(uhlmann_fidelity(&r2, &ideal)?);
            out.push(uhlmann_fidelity(&r2, &r1)?);
        }
        Ok(out)
    };
    let mc = monte_carlo(&counts, analysis, a.mc, seed, "tomo")?;

    let input = summarize(&rec1, mc.std[0])?;
    let (compare, between) = match &rec2 {
        Some(rec2) => {
            let f2 = uhlmann_fidelity(&rec2.rho, &rec1.rho)?;
            (Some(summarize(rec2, mc.std[1])?), Some(Estimate { value: f2, sigma: mc.std[2] }))
        }
        None => (None, None),
    };
    let report = TomoReport {
        input,
        compare,
        fidelity_between: between,
        mc_replicates: mc.replicates,
        mc_dropped: mc.dropped,
        reference: reference::tomography_annotation(),
    };
    write_json(&a.out, &report)?;
    let mut inputs: Vec<&Path> = vec![&a.counts];
    if let Some(p) = &a.compare {
        inputs.push(p);
    }
    write_manifest("tomo", args, None, &inputs, &[&a.out], Some(seed), &a.out)
}

fn text_path(out: &Path) -> PathBuf {
    out.with_extension("txt")
}

fn cmd_witness(a: WitnessArgs, args: Vec<String>, seed_override: Option<u64>) -> Result<()> {
    let seed = match seed_override {
        Some(s) => s,
        None => resolve_seed(a.seed, None)?,
    };
    let mut table = CoincidenceTable::default();
    for p in &a.counts {
        table.extend(CoincidenceTable::read_csv(open(p)?)?);
    }
    let report = witness_from_table(&table, &a.modes, a.k_sigma, a.convention, a.mc, seed)?;
    write_json(&a.out, &report)?;
    let txt = text_path(&a.out);
    if txt == a.out {
        return Err(Error::config("out", "report path must not end in .txt"));
    }
    let annotation = reference::witness_annotation(&a.modes);
    fs::write(&txt, report.summary_text(annotation.as_deref())).map_err(with_path(&txt))?;
    let inputs: Vec<&Path> = a.counts.iter().map(PathBuf::as_path).collect();
    write_manifest("witness", args, None, &inputs, &[&a.out, &txt], Some(seed), &a.out)
}

/// x, y and optional weights from either an `x,y[,weight]` file or the
/// diagonal of a mode-correlation table.
fn read_fit_data(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Option<Vec<f64>>)> {
    let text = read_text(path)?;
    let header = text.lines().next().unwrap_or("").trim();
    if header.starts_with("setting_a") {
        let table = CoincidenceTable::read_csv(text.as_bytes())?;
        let mut pts: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter(|r| r.setting_a == r.setting_b)
            .filter_map(|r| {
                let m: i32 = r.setting_a.strip_prefix("m=")?.parse().ok()?;
                Some((m as f64, r.counts as f64))
            })
            .collect();
        if pts.is_empty() {
            return Err(Error::Parse("table has no diagonal m=… rows".into()));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (xs, ys) = pts.into_iter().unzip();
        return Ok((xs, ys, None));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let cols: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let with_weight = match cols.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y"] => false,
        ["x", "y", "weight"] => true,
        _ => return Err(Error::Parse(format!("expected header x,y[,weight], got {}", cols.join(",")))),
    };
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<f64> {
            let v: f64 = rec[k]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad number {:?}", i + 2, &rec[k])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse(format!("line {}: non-finite value", i + 2)))
            }
        };
        xs.push(field(0)?);
        ys.push(field(1)?);
        if with_weight {
            ws.push(field(2)?);
        }
    }
    Ok((xs, ys, with_weight.then_some(ws)))
}

fn cmd_fit(a: FitArgs, args: Vec<String>) -> Result<()> {
    let (xs, ys, weights) = read_fit_data(&a.data)?;
    let (weights, weighting) = match weights {
        Some(w) => (Some(w), "column"),
        None if a.unweighted => (None, "none"),
        None => (Some(poisson_weights(&ys)), "poisson"),
    };
    let fit = fit_lorentzian(&xs, &ys, weights.as_deref(), None)?;
    let report = FitReport {
        points: xs.len(),
        weighting: weighting.to_string(),
        fit,
    };
    write_json(&a.out, &report)?;
    write_manifest("fit", args, None, &[&a.data], &[&a.out], None, &a.out)
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_mask(a: MaskArgs, args: Vec<String>) -> Result<()> {
    let grid = FieldGrid::new(a.size, a.extent, a.waist)?;
    let field = match (a.basis, a.outcome) {
        (Some(b), Some(o)) => mub_basis(a.m1, a.m2, b)?.field(o, &grid),
        _ => superposition_field(a.m1, a.m2, a.theta.unwrap_or(0.0), &grid),
    };
    let phase: Vec<u8> = phase_mask_from_field(&field, a.size)
        .phase
        .iter()
        .map(|&p| phase_to_gray(p))
        .collect();
    let intensity: Vec<u8> = intensity_from_field(&field).into_iter().map(intensity_to_gray).collect();
    let phase_path = suffixed(&a.out, "_phase.pgm");
    let intensity_path = suffixed(&a.out, "_intensity.pgm");
    for (path, pixels) in [(&phase_path, &phase), (&intensity_path, &intensity)] {
        let mut w = create(path)?;
        write_pgm(&mut w, a.size, a.size, pixels)?;
        w.flush()?;
    }
    write_manifest("mask", args, None, &[], &[&phase_path, &intensity_path], None, &a.out)
}

fn cmd_replay(path: &Path) -> Result<()> {
    let manifest = PipelineManifest::read(path)?;
    if manifest.tool_version != env!("CARGO_PKG_VERSION") {
        return Err(Error::Domain(format!(
            "manifest written by version {}, this is {}",
            manifest.tool_version,
            env!("CARGO_PKG_VERSION")
        )));
    }
    for input in &manifest.inputs {
        let now = sha256_file(Path::new(&input.path))?;
        if now != input.sha256 {
            return Err(Error::Domain(format!("input {} changed since the manifest was written", input.path)));
        }
    }
    let mut argv = vec!["oamsim".to_string()];
    argv.extend(manifest.args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::Parse(e.to_string()))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Error::Domain("a manifest cannot replay another replay".into()));
    }
    run(cli.command, manifest.args.clone(), manifest.seed)?;
    let mismatched: Vec<&str> = manifest
        .outputs
        .iter()
        .filter(|o| sha256_file(Path::new(&o.path)).map(|h| h != o.sha256).unwrap_or(true))
        .map(|o| o.path.as_str())
        .collect();
    if mismatched.is_empty() {
        Ok(())
    } else {
        Err(Error::Domain(format!("replay produced different output: {}", mismatched.join(", "))))
    }
}
