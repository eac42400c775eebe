//! Builtin reference scenarios embedded in the binary. Each one is an
//! ordinary scenario file; `dcsim list-builtin` prints the catalogue and
//! `run --scenario <name>` resolves a name before trying the filesystem.

use crate::schema::{ScenarioFile, SchemaError};

pub const BUILTINS: &[(&str, &str)] = &[
    ("fig1_rocof", include_str!("../scenarios/fig1_rocof.toml")),
    ("fig7_fault", include_str!("../scenarios/fig7_fault.toml")),
    (
        "fig8_flapping",
        include_str!("../scenarios/fig8_flapping.toml"),
    ),
    (
        "fig9_segmented",
        include_str!("../scenarios/fig9_segmented.toml"),
    ),
    (
        "fig10_batched",
        include_str!("../scenarios/fig10_batched.toml"),
    ),
    ("fig11_ai", include_str!("../scenarios/fig11_ai.toml")),
    (
        "fig12_periodic",
        include_str!("../scenarios/fig12_periodic.toml"),
    ),
    (
        "fig13_reconnection_detail",
        include_str!("../scenarios/fig13_reconnection_detail.toml"),
    ),
];

pub fn names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

pub fn get(name: &str) -> Option<&'static str> {
    BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

pub fn parse(name: &str) -> Result<ScenarioFile, SchemaError> {
    let text = get(name)
        .ok_or_else(|| SchemaError::Invalid(format!("unknown builtin scenario '{name}'")))?;
    ScenarioFile::parse_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_parses_and_validates() {
        for (name, _) in BUILTINS {
            let file = parse(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            let scen = file
                .to_scenario()
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(scen.duration_s > 0.0);
        }
    }
}
