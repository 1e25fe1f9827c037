//! Built-in experiments. Each is an ordinary config file shipped in
//! `presets/`, so any of them can be copied and edited.

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

const PRESETS: &[(&str, &str)] = &[
    ("fig1", include_str!("../presets/fig1.toml")),
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("null", include_str!("../presets/null.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

pub fn source(name: &str) -> Option<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

pub fn preset(name: &str) -> CliResult<ExperimentConfig> {
    let text = source(name).ok_or_else(|| {
        CliError::config(format!(
            "preset: unknown preset `{name}` (known: {})",
            names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    ExperimentConfig::from_toml(text)
}
