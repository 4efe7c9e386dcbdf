//! Published reference values, used only to annotate reports.
//!
//! Nothing in the simulation or analysis reads these numbers.

use std::sync::OnceLock;

use serde::Deserialize;

use crate::source_model::LorentzianParams;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct WitnessReference {
    pub modes: Vec<i32>,
    pub input: Measured,
    pub output: Measured,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReferenceValues {
    pub spiral_fit_input: LorentzianParams,
    pub spiral_fit_output: LorentzianParams,
    pub storage_efficiency_fit: LorentzianParams,
    pub storage_efficiency_quoted: f64,
    pub fidelity_input: Measured,
    pub fidelity_output: Measured,
    pub fidelity_storage: Measured,
    pub witness_m: WitnessReference,
    pub witness_w: WitnessReference,
}

pub fn reference_values() -> &'static ReferenceValues {
    static VALUES: OnceLock<ReferenceValues> = OnceLock::new();
    VALUES.get_or_init(|| {
        serde_json::from_str(include_str!("../data/reference_values.json")).expect("bundled reference values parse")
    })
}

fn same_set(a: &[i32], b: &[i32]) -> bool {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

/// Comparison line for a witness report over `modes`, if a published value
/// exists for that mode set.
pub fn witness_annotation(modes: &[i32]) -> Option<String> {
    let r = reference_values();
    let fmt = |name: &str, w: &WitnessReference| {
        format!(
            "Published reference {name} for this mode set: {:.2} ± {:.2} (input), {:.2} ± {:.2} (output)",
            w.input.value, w.input.sd, w.output.value, w.output.sd
        )
    };
    if same_set(modes, &r.witness_m.modes) {
        Some(fmt("M", &r.witness_m))
    } else if same_set(modes, &r.witness_w.modes) {
        Some(fmt("W", &r.witness_w))
    } else {
        None
    }
}

pub fn tomography_annotation() -> String {
    let r = reference_values();
    format!(
        "Published reference fidelities: {:.3} ± {:.3} (input to ideal), {:.3} ± {:.3} (output to ideal), {:.3} ± {:.3} (output to input)",
        r.fidelity_input.value,
        r.fidelity_input.sd,
        r.fidelity_output.value,
        r.fidelity_output.sd,
        r.fidelity_storage.value,
        r.fidelity_storage.sd
    )
}
