//! `qqm-lab`: runs qqm-core experiments from flat config files and writes
//! CSV, JSON or SVG results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod emit;
pub mod run;

use std::path::{Path, PathBuf};

pub use config::{parse_config, parse_config_for, ConfigError, ExperimentConfig, ExperimentKind};
pub use emit::{emit_csv, emit_json, emit_svg_plot};
pub use run::{run, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("computation error: {0}")]
    Compute(String),
    #[error("I/O error: {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 config, 3 computation, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
    Svg,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        }
    }
}

/// Parses, runs and writes `<out_dir>/<kind>.<ext>`; returns the path.
pub fn execute(
    kind: ExperimentKind,
    config_text: &str,
    seed: Option<u64>,
    format: Format,
    out_dir: &Path,
) -> Result<(PathBuf, RunReport), CliError> {
    let mut config = parse_config_for(config_text, Some(kind))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let report = run(&config)?;
    let path = out_dir.join(format!("{}.{}", kind.as_str(), format.extension()));
    match format {
        Format::Csv => emit_csv(&report, &path)?,
        Format::Json => emit_json(&report, &path)?,
        Format::Svg => emit_svg_plot(&report, &path)?,
    }
    Ok((path, report))
}

/// Text printed by `--list-presets`.
pub fn presets_listing() -> String {
    use qqm_core::correlations::EtaField;
    use qqm_core::interferometry::Material;
    let mut s = String::from("field presets ([correlation] / [holonomy] field = ..., field_param = ...):\n");
    let notes = [
        ("constant", "tilt angle (rad) from i3 towards i1"),
        ("hedgehog", "eta(x) = x/|x| about the origin; field_param unused"),
        ("hedgehog-blend", "weight between (1,1,1)/sqrt(3) and the hedgehog"),
        ("smooth-twist", "twist rate tau in R_y(tau x2) R_x(tau x1) z"),
    ];
    for name in EtaField::PRESETS {
        let note = notes.iter().find(|(n, _)| n == name).map(|(_, d)| *d).unwrap_or("");
        s.push_str(&format!("  {name:<16} {note}\n"));
    }
    s.push_str("scan families ([scan] family = ...): constant-tilt, twist, hedgehog-blend\n");
    s.push_str("material reference data (verify against a current table before use):\n");
    for m in [Material::aluminium(), Material::titanium()] {
        s.push_str(&format!(
            "  {:<4} density_per_a3 = {}  scattering_length_angstrom = {}\n",
            m.name, m.number_density, m.scattering_length
        ));
    }
    s
}
