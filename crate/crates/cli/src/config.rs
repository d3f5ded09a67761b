//! Flat `[section]` / `key = value` experiment configuration.
//!
//! ```text
//! [experiment]
//! kind = order-swap
//!
//! [barrier_a]
//! width = 1
//! v = 2, 0, 0.8, 0      # a0, a1, a2, a3
//! ```
//!
//! `#` starts a comment. Sections marked repeatable below may appear more
//! than once and keep their order. Numbers accept scientific notation;
//! vectors are comma separated, and point lists separate points with `;`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use qqm_core::correlations::{EtaField, FieldFamily};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}, column {col}: unknown section [{name}]")]
    UnknownSection { line: usize, col: usize, name: String },
    #[error("line {line}, column {col}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, col: usize, section: String, key: String },
    #[error("line {line}, column {col}: duplicate key `{key}` in [{section}]")]
    DuplicateKey { line: usize, col: usize, section: String, key: String },
    #[error("line {line}: section [{section}] may appear only once")]
    DuplicateSection { line: usize, section: String },
    #[error("line {line}, column {col}: bad value for `{key}`: {msg}")]
    Value { line: usize, col: usize, key: String, msg: String },
    #[error("missing key `{key}` in [{section}]")]
    MissingKey { section: String, key: String },
    #[error("experiment `{kind}` requires a [{section}] section")]
    MissingSection { kind: String, section: String },
    #[error("line {line}: section [{section}] is not used by experiment `{kind}`")]
    UnusedSection { line: usize, section: String, kind: String },
    #[error("config is for `{config}` but the `{command}` command was run")]
    KindMismatch { config: String, command: String },
    #[error("{context}: {rule}")]
    Invalid { context: String, rule: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Scatter,
    OrderSwap,
    Interfere,
    Ghsz,
    Singlet,
    Holonomy,
    Sweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Scatter,
        ExperimentKind::OrderSwap,
        ExperimentKind::Interfere,
        ExperimentKind::Ghsz,
        ExperimentKind::Singlet,
        ExperimentKind::Holonomy,
        ExperimentKind::Sweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Scatter => "scatter",
            ExperimentKind::OrderSwap => "order-swap",
            ExperimentKind::Interfere => "interfere",
            ExperimentKind::Ghsz => "ghsz",
            ExperimentKind::Singlet => "singlet",
            ExperimentKind::Holonomy => "holonomy",
            ExperimentKind::Sweep => "sweep",
        }
    }

    /// Sections this kind accepts, required ones first.
    fn sections(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            ExperimentKind::Scatter => (&["scatter"], &["layer"]),
            ExperimentKind::Sweep => (&["sweep"], &["layer"]),
            ExperimentKind::OrderSwap => (&["barrier_a", "barrier_b", "order_swap"], &[]),
            ExperimentKind::Interfere => (&["beam", "material", "interferogram"], &[]),
            ExperimentKind::Ghsz | ExperimentKind::Singlet => (&["correlation", "site"], &["scan"]),
            ExperimentKind::Holonomy => (&["holonomy"], &[]),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("expected one of {}", Self::ALL.map(|k| k.as_str()).join(", ")))
    }
}

const SECTION_KEYS: &[(&str, bool, &[&str])] = &[
    ("experiment", false, &["kind", "seed"]),
    ("layer", true, &["width", "v"]),
    ("scatter", false, &["energy", "backend", "step"]),
    ("sweep", false, &["e_min", "e_max", "points", "backend", "step"]),
    ("barrier_a", false, &["width", "v"]),
    ("barrier_b", false, &["width", "v"]),
    ("order_swap", false, &["energy", "gap", "v_beta_scales", "backend", "step"]),
    ("beam", false, &["lambda_angstrom"]),
    (
        "material",
        true,
        &["name", "density_per_a3", "scattering_length_angstrom", "thickness_angstrom", "target_phase_deg"],
    ),
    ("interferogram", false, &["contrast", "mean_counts", "points", "extra_phase_deg"]),
    ("correlation", false, &["model", "field", "field_param", "step", "base", "particle"]),
    ("site", true, &["position", "azimuth_deg", "polar_deg", "path"]),
    ("scan", false, &["family", "start", "stop", "points"]),
    ("holonomy", false, &["field", "field_param", "loop", "steps"]),
];

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
    value_col: usize,
}

#[derive(Debug, Clone)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn parse_document(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(ConfigError::Syntax { line, col: indent + 1, msg: "unterminated section header".into() });
            };
            let name = name.trim();
            let Some(&(_, repeatable, _)) = SECTION_KEYS.iter().find(|(n, _, _)| *n == name) else {
                return Err(ConfigError::UnknownSection { line, col: indent + 2, name: name.into() });
            };
            if !repeatable && sections.iter().any(|s| s.name == name) {
                return Err(ConfigError::DuplicateSection { line, section: name.into() });
            }
            sections.push(Section { name: name.into(), line, entries: Vec::new() });
            continue;
        }
        let Some(eq) = content.find('=') else {
            return Err(ConfigError::Syntax {
                line,
                col: indent + 1,
                msg: "expected `key = value` or `[section]`".into(),
            });
        };
        let key = content[..eq].trim();
        let value_raw = &content[eq + 1..];
        let value = value_raw.trim();
        let value_col = eq + 2 + (value_raw.len() - value_raw.trim_start().len());
        let Some(section) = sections.last_mut() else {
            return Err(ConfigError::Syntax { line, col: indent + 1, msg: "key outside of any [section]".into() });
        };
        if key.is_empty() {
            return Err(ConfigError::Syntax { line, col: indent + 1, msg: "missing key before `=`".into() });
        }
        let allowed = SECTION_KEYS.iter().find(|(n, _, _)| *n == section.name).map(|s| s.2).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                col: indent + 1,
                section: section.name.clone(),
                key: key.into(),
            });
        }
        if section.entries.iter().any(|e| e.key == key) {
            return Err(ConfigError::DuplicateKey {
                line,
                col: indent + 1,
                section: section.name.clone(),
                key: key.into(),
            });
        }
        if value.is_empty() {
            return Err(ConfigError::Value { line, col: value_col, key: key.into(), msg: "empty value".into() });
        }
        section.entries.push(Entry { key: key.into(), value: value.into(), line, value_col });
    }
    Ok(sections)
}

/// Typed access to one section's entries.
struct Reader<'a> {
    section: &'a Section,
}

impl<'a> Reader<'a> {
    fn entry(&self, key: &str) -> Option<&'a Entry> {
        self.section.entries.iter().find(|e| e.key == key)
    }

    fn err(&self, e: &Entry, msg: impl Into<String>) -> ConfigError {
        ConfigError::Value { line: e.line, col: e.value_col, key: e.key.clone(), msg: msg.into() }
    }

    fn missing(&self, key: &str) -> ConfigError {
        ConfigError::MissingKey { section: self.section.name.clone(), key: key.into() }
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        self.entry(key)
            .map(|e| e.value.parse::<T>().map_err(|_| self.err(e, format!("expected {what}, got `{}`", e.value))))
            .transpose()
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let v: Option<f64> = self.parse(key, "a number")?;
        if let (Some(x), Some(e)) = (v, self.entry(key)) {
            if !x.is_finite() {
                return Err(self.err(e, "number must be finite"));
            }
        }
        Ok(v)
    }

    fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.f64_opt(key)?.ok_or_else(|| self.missing(key))
    }

    fn usize_opt(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parse(key, "a non-negative integer")
    }

    fn text(&self, key: &str) -> Option<&'a str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        parse_list(&e.value).map(Some).map_err(|m| self.err(e, m))
    }

    fn vector<const N: usize>(&self, key: &str) -> Result<Option<[f64; N]>, ConfigError> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        let xs = parse_list(&e.value).map_err(|m| self.err(e, m))?;
        xs.try_into()
            .map(Some)
            .map_err(|xs: Vec<f64>| self.err(e, format!("expected {N} components, got {}", xs.len())))
    }

    fn points(&self, key: &str) -> Result<Option<Vec<[f64; 3]>>, ConfigError> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        e.value
            .split(';')
            .map(|p| {
                let xs = parse_list(p)?;
                xs.try_into().map_err(|xs: Vec<f64>| format!("each point needs 3 components, got {}", xs.len()))
            })
            .collect::<Result<Vec<_>, String>>()
            .map(Some)
            .map_err(|m| self.err(e, m))
    }

    fn choice<T>(&self, key: &str, options: &[(&str, T)]) -> Result<Option<T>, ConfigError>
    where
        T: Copy,
    {
        let Some(e) = self.entry(key) else { return Ok(None) };
        options.iter().find(|(name, _)| *name == e.value).map(|(_, v)| Some(*v)).ok_or_else(|| {
            self.err(e, format!("expected one of {}", options.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")))
        })
    }

    fn context(&self, key: &str) -> String {
        match self.entry(key) {
            Some(e) => format!("[{}] `{key}` at line {}", self.section.name, e.line),
            None => format!("[{}] `{key}`", self.section.name),
        }
    }

    fn invalid(&self, key: &str, rule: impl Into<String>) -> ConfigError {
        ConfigError::Invalid { context: self.context(key), rule: rule.into() }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| {
            let x = x.trim();
            x.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("`{x}` is not a finite number"))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub width: f64,
    /// Quaternion components `a0, a1, a2, a3`.
    pub v: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackendSpec {
    TransferMatrix,
    Integrator { step: f64 },
}

pub const DEFAULT_INTEGRATOR_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSpec {
    pub energy: f64,
    pub backend: BackendSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub e_min: f64,
    pub e_max: f64,
    pub points: usize,
    pub backend: BackendSpec,
}

impl SweepSpec {
    pub fn energies(&self) -> Vec<f64> {
        linspace(self.e_min, self.e_max, self.points)
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderSwapSpec {
    pub a: LayerSpec,
    pub b: LayerSpec,
    pub energy: f64,
    pub gap: f64,
    pub v_beta_scales: Vec<f64>,
    pub backend: BackendSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlabSize {
    ThicknessAngstrom(f64),
    TargetPhaseDeg(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSpec {
    pub name: String,
    pub density_per_a3: f64,
    pub scattering_length_angstrom: f64,
    pub size: SlabSize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfereSpec {
    pub lambda_angstrom: f64,
    pub materials: Vec<MaterialSpec>,
    pub contrast: f64,
    pub mean_counts: f64,
    pub points: usize,
    pub extra_phase_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub preset: String,
    pub param: f64,
}

impl FieldSpec {
    pub fn build(&self) -> EtaField {
        EtaField::preset(&self.preset, self.param).expect("validated preset name")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Local,
    Transported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Particle {
    Spin,
    /// Circular-polarization photons: analyzers confined to the x–y plane.
    Photon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteSpec {
    pub position: [f64; 3],
    pub azimuth_deg: f64,
    pub polar_deg: f64,
    /// Waypoints between the base site and this site.
    pub path: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub family: FieldFamily,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSpec {
    pub model: ModelKind,
    pub field: FieldSpec,
    pub step: f64,
    pub base: usize,
    pub particle: Particle,
    pub sites: Vec<SiteSpec>,
    pub scan: Option<ScanSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolonomySpec {
    pub field: FieldSpec,
    pub loop_points: Vec<[f64; 3]>,
    pub steps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Scatter { layers: Vec<LayerSpec>, spec: ScatterSpec },
    Sweep { layers: Vec<LayerSpec>, spec: SweepSpec },
    OrderSwap(OrderSwapSpec),
    Interfere(InterfereSpec),
    Correlation(CorrelationSpec),
    Holonomy(HolonomySpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub body: Body,
}

const BACKENDS: &[(&str, bool)] = &[("transfer-matrix", false), ("integrator", true)];
const MODELS: &[(&str, ModelKind)] = &[("local", ModelKind::Local), ("transported", ModelKind::Transported)];
const PARTICLES: &[(&str, Particle)] = &[("spin", Particle::Spin), ("photon", Particle::Photon)];
const FAMILIES: &[(&str, FieldFamily)] = &[
    ("constant-tilt", FieldFamily::ConstantTilt),
    ("twist", FieldFamily::TwistStrength),
    ("hedgehog-blend", FieldFamily::HedgehogBlend),
];

fn family_name(f: FieldFamily) -> &'static str {
    FAMILIES.iter().find(|(_, v)| *v == f).map(|(n, _)| *n).unwrap()
}

fn positive(r: &Reader, key: &str, x: f64, rule: &str) -> Result<f64, ConfigError> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(r.invalid(key, format!("{rule} must be > 0, got {x}")))
    }
}

fn read_backend(r: &Reader) -> Result<BackendSpec, ConfigError> {
    let integrator = r.choice("backend", BACKENDS)?.unwrap_or(false);
    let step = r.f64_opt("step")?;
    match (integrator, step) {
        (false, Some(_)) => Err(r.invalid("step", "`step` applies only to backend = integrator")),
        (false, None) => Ok(BackendSpec::TransferMatrix),
        (true, s) => {
            let step = positive(r, "step", s.unwrap_or(DEFAULT_INTEGRATOR_STEP), "integrator step")?;
            Ok(BackendSpec::Integrator { step })
        }
    }
}

fn read_layer(r: &Reader) -> Result<LayerSpec, ConfigError> {
    let width = positive(r, "width", r.f64("width")?, "barrier width")?;
    let v = r.vector::<4>("v")?.unwrap_or([0.0; 4]);
    Ok(LayerSpec { width, v })
}

fn read_field(r: &Reader, default: Option<&'static str>) -> Result<FieldSpec, ConfigError> {
    let preset = r.text("field").or(default).ok_or_else(|| r.missing("field"))?;
    if !EtaField::PRESETS.contains(&preset) {
        return Err(r.invalid(
            "field",
            format!("unknown field preset `{preset}`; expected one of {}", EtaField::PRESETS.join(", ")),
        ));
    }
    let param = r.f64_opt("field_param")?.unwrap_or(0.0);
    Ok(FieldSpec { preset: preset.into(), param })
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config_for(text, None)
}

/// Parses and validates `text`; `command` fills in a missing `kind` and
/// must agree with a present one.
pub fn parse_config_for(text: &str, command: Option<ExperimentKind>) -> Result<ExperimentConfig, ConfigError> {
    let sections = parse_document(text)?;
    let first = |name: &str| sections.iter().find(|s| s.name == name);
    let all =
        |name: &str| sections.iter().filter(|s| s.name == name).map(|s| Reader { section: s }).collect::<Vec<_>>();

    let (kind, seed) = match first("experiment") {
        Some(s) => {
            let r = Reader { section: s };
            let kind = match r.entry("kind") {
                Some(e) => Some(e.value.parse::<ExperimentKind>().map_err(|m| r.err(e, m))?),
                None => None,
            };
            (kind, r.parse::<u64>("seed", "an unsigned 64-bit integer")?.unwrap_or(0))
        }
        None => (None, 0),
    };
    let kind = match (kind, command) {
        (Some(k), Some(c)) if k != c => {
            return Err(ConfigError::KindMismatch { config: k.to_string(), command: c.to_string() })
        }
        (Some(k), _) | (None, Some(k)) => k,
        (None, None) => return Err(ConfigError::MissingKey { section: "experiment".into(), key: "kind".into() }),
    };

    let (required, optional) = kind.sections();
    for s in &sections {
        if s.name != "experiment" && !required.contains(&s.name.as_str()) && !optional.contains(&s.name.as_str()) {
            return Err(ConfigError::UnusedSection { line: s.line, section: s.name.clone(), kind: kind.to_string() });
        }
    }
    for name in required {
        if first(name).is_none() {
            return Err(ConfigError::MissingSection { kind: kind.to_string(), section: (*name).into() });
        }
    }
    let one = |name: &str| Reader { section: first(name).unwrap() };

    let body = match kind {
        ExperimentKind::Scatter => {
            let layers = all("layer").iter().map(read_layer).collect::<Result<_, _>>()?;
            let r = one("scatter");
            let energy = positive(&r, "energy", r.f64("energy")?, "energy")?;
            Body::Scatter { layers, spec: ScatterSpec { energy, backend: read_backend(&r)? } }
        }
        ExperimentKind::Sweep => {
            let layers = all("layer").iter().map(read_layer).collect::<Result<_, _>>()?;
            let r = one("sweep");
            let e_min = positive(&r, "e_min", r.f64("e_min")?, "energy")?;
            let e_max = positive(&r, "e_max", r.f64("e_max")?, "energy")?;
            if e_max < e_min {
                return Err(r.invalid("e_max", "e_max must be >= e_min"));
            }
            let points = r.usize_opt("points")?.ok_or_else(|| r.missing("points"))?;
            if points == 0 {
                return Err(r.invalid("points", "points must be >= 1"));
            }
            Body::Sweep { layers, spec: SweepSpec { e_min, e_max, points, backend: read_backend(&r)? } }
        }
        ExperimentKind::OrderSwap => {
            let a = read_layer(&one("barrier_a"))?;
            let b = read_layer(&one("barrier_b"))?;
            let r = one("order_swap");
            let energy = positive(&r, "energy", r.f64("energy")?, "energy")?;
            let gap = positive(&r, "gap", r.f64("gap")?, "gap width")?;
            let v_beta_scales = r.list("v_beta_scales")?.unwrap_or_else(|| vec![1.0]);
            Body::OrderSwap(OrderSwapSpec { a, b, energy, gap, v_beta_scales, backend: read_backend(&r)? })
        }
        ExperimentKind::Interfere => {
            let beam = one("beam");
            let lambda_angstrom = positive(&beam, "lambda_angstrom", beam.f64("lambda_angstrom")?, "wavelength")?;
            let mut materials = Vec::new();
            for r in all("material") {
                let name = r.text("name").ok_or_else(|| r.missing("name"))?.to_string();
                let density_per_a3 = positive(&r, "density_per_a3", r.f64("density_per_a3")?, "number density")?;
                let scattering_length_angstrom = r.f64("scattering_length_angstrom")?;
                let size = match (r.f64_opt("thickness_angstrom")?, r.f64_opt("target_phase_deg")?) {
                    (Some(d), None) => {
                        SlabSize::ThicknessAngstrom(positive(&r, "thickness_angstrom", d, "slab thickness")?)
                    }
                    (None, Some(p)) => SlabSize::TargetPhaseDeg(p),
                    _ => {
                        return Err(
                            r.invalid("thickness_angstrom", "give exactly one of thickness_angstrom, target_phase_deg")
                        )
                    }
                };
                materials.push(MaterialSpec { name, density_per_a3, scattering_length_angstrom, size });
            }
            let r = one("interferogram");
            let contrast = r.f64_opt("contrast")?.unwrap_or(0.5);
            if !(contrast > 0.0 && contrast <= 1.0) {
                return Err(r.invalid("contrast", format!("contrast must lie in (0, 1], got {contrast}")));
            }
            let mean_counts = positive(&r, "mean_counts", r.f64("mean_counts")?, "mean counts")?;
            let points = r.usize_opt("points")?.unwrap_or(16);
            if points < 5 {
                return Err(r.invalid("points", format!("an interferogram needs at least 5 flag angles, got {points}")));
            }
            let extra_phase_deg = r.f64_opt("extra_phase_deg")?.unwrap_or(0.0);
            Body::Interfere(InterfereSpec {
                lambda_angstrom,
                materials,
                contrast,
                mean_counts,
                points,
                extra_phase_deg,
            })
        }
        ExperimentKind::Ghsz | ExperimentKind::Singlet => {
            let r = one("correlation");
            let model = r.choice("model", MODELS)?.unwrap_or(ModelKind::Local);
            let field = read_field(&r, Some("constant"))?;
            let step = positive(
                &r,
                "step",
                r.f64_opt("step")?.unwrap_or(qqm_core::correlations::DEFAULT_STEP),
                "transport step",
            )?;
            let particle = r.choice("particle", PARTICLES)?.unwrap_or(Particle::Spin);
            let mut sites = Vec::new();
            for s in all("site") {
                let position = s.vector::<3>("position")?.ok_or_else(|| s.missing("position"))?;
                let azimuth_deg = s.f64_opt("azimuth_deg")?.unwrap_or(0.0);
                let polar_deg = s.f64_opt("polar_deg")?.unwrap_or(90.0);
                if !(0.0..=180.0).contains(&polar_deg) {
                    return Err(s.invalid("polar_deg", format!("polar angle must lie in [0, 180], got {polar_deg}")));
                }
                if particle == Particle::Photon && polar_deg != 90.0 {
                    return Err(s.invalid("polar_deg", "photon analyzers lie in the x-y plane (polar_deg = 90)"));
                }
                let path = s.points("path")?.unwrap_or_default();
                sites.push(SiteSpec { position, azimuth_deg, polar_deg, path });
            }
            let expected = if kind == ExperimentKind::Ghsz { 4 } else { 2 };
            if sites.len() != expected {
                return Err(ConfigError::Invalid {
                    context: "[site]".into(),
                    rule: format!("`{kind}` needs exactly {expected} [site] sections, got {}", sites.len()),
                });
            }
            let base = r.usize_opt("base")?.unwrap_or(1);
            if base == 0 || base > sites.len() {
                return Err(r.invalid("base", format!("base must be a site index in 1..={}, got {base}", sites.len())));
            }
            let scan = match first("scan") {
                Some(section) => {
                    let s = Reader { section };
                    let family = s.choice("family", FAMILIES)?.ok_or_else(|| s.missing("family"))?;
                    let start = s.f64("start")?;
                    let stop = s.f64("stop")?;
                    let points = s.usize_opt("points")?.ok_or_else(|| s.missing("points"))?;
                    if points == 0 {
                        return Err(s.invalid("points", "points must be >= 1"));
                    }
                    Some(ScanSpec { family, start, stop, points })
                }
                None => None,
            };
            Body::Correlation(CorrelationSpec { model, field, step, base, particle, sites, scan })
        }
        ExperimentKind::Holonomy => {
            let r = one("holonomy");
            let field = read_field(&r, None)?;
            let loop_points = r.points("loop")?.ok_or_else(|| r.missing("loop"))?;
            if loop_points.len() < 3 {
                return Err(r.invalid("loop", "a loop needs at least 3 points"));
            }
            let steps = r.list("steps")?.unwrap_or_else(|| vec![qqm_core::correlations::DEFAULT_STEP]);
            for &s in &steps {
                positive(&r, "steps", s, "transport step")?;
            }
            Body::Holonomy(HolonomySpec { field, loop_points, steps })
        }
    };
    Ok(ExperimentConfig { kind, seed, body })
}

fn list(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn points(ps: &[[f64; 3]]) -> String {
    ps.iter().map(|p| list(p)).collect::<Vec<_>>().join("; ")
}

fn write_backend(out: &mut String, b: BackendSpec) {
    match b {
        BackendSpec::TransferMatrix => writeln!(out, "backend = transfer-matrix").unwrap(),
        BackendSpec::Integrator { step } => {
            writeln!(out, "backend = integrator").unwrap();
            writeln!(out, "step = {step}").unwrap();
        }
    }
}

fn write_layer(out: &mut String, header: &str, l: &LayerSpec) {
    writeln!(out, "\n[{header}]\nwidth = {}\nv = {}", l.width, list(&l.v)).unwrap();
}

impl ExperimentConfig {
    /// Canonical text form: fixed section and key order, defaults filled
    /// in, shortest round-trip numbers. Parses back to `self`.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        writeln!(out, "[experiment]\nkind = {}\nseed = {}", self.kind, self.seed).unwrap();
        match &self.body {
            Body::Scatter { layers, spec } => {
                layers.iter().for_each(|l| write_layer(&mut out, "layer", l));
                writeln!(out, "\n[scatter]\nenergy = {}", spec.energy).unwrap();
                write_backend(&mut out, spec.backend);
            }
            Body::Sweep { layers, spec } => {
                layers.iter().for_each(|l| write_layer(&mut out, "layer", l));
                writeln!(out, "\n[sweep]\ne_min = {}\ne_max = {}\npoints = {}", spec.e_min, spec.e_max, spec.points)
                    .unwrap();
                write_backend(&mut out, spec.backend);
            }
            Body::OrderSwap(s) => {
                write_layer(&mut out, "barrier_a", &s.a);
                write_layer(&mut out, "barrier_b", &s.b);
                writeln!(
                    out,
                    "\n[order_swap]\nenergy = {}\ngap = {}\nv_beta_scales = {}",
                    s.energy,
                    s.gap,
                    list(&s.v_beta_scales)
                )
                .unwrap();
                write_backend(&mut out, s.backend);
            }
            Body::Interfere(s) => {
                writeln!(out, "\n[beam]\nlambda_angstrom = {}", s.lambda_angstrom).unwrap();
                for m in &s.materials {
                    writeln!(
                        out,
                        "\n[material]\nname = {}\ndensity_per_a3 = {}\nscattering_length_angstrom = {}",
                        m.name, m.density_per_a3, m.scattering_length_angstrom
                    )
                    .unwrap();
                    match m.size {
                        SlabSize::ThicknessAngstrom(d) => writeln!(out, "thickness_angstrom = {d}").unwrap(),
                        SlabSize::TargetPhaseDeg(p) => writeln!(out, "target_phase_deg = {p}").unwrap(),
                    }
                }
                writeln!(
                    out,
                    "\n[interferogram]\ncontrast = {}\nmean_counts = {}\npoints = {}\nextra_phase_deg = {}",
                    s.contrast, s.mean_counts, s.points, s.extra_phase_deg
                )
                .unwrap();
            }
            Body::Correlation(c) => {
                let model = MODELS.iter().find(|(_, m)| *m == c.model).unwrap().0;
                let particle = PARTICLES.iter().find(|(_, p)| *p == c.particle).unwrap().0;
                writeln!(
                    out,
                    "\n[correlation]\nmodel = {model}\nfield = {}\nfield_param = {}\nstep = {}\nbase = {}\nparticle = {particle}",
                    c.field.preset, c.field.param, c.step, c.base
                )
                .unwrap();
                for s in &c.sites {
                    writeln!(
                        out,
                        "\n[site]\nposition = {}\nazimuth_deg = {}\npolar_deg = {}",
                        list(&s.position),
                        s.azimuth_deg,
                        s.polar_deg
                    )
                    .unwrap();
                    if !s.path.is_empty() {
                        writeln!(out, "path = {}", points(&s.path)).unwrap();
                    }
                }
                if let Some(scan) = &c.scan {
                    writeln!(
                        out,
                        "\n[scan]\nfamily = {}\nstart = {}\nstop = {}\npoints = {}",
                        family_name(scan.family),
                        scan.start,
                        scan.stop,
                        scan.points
                    )
                    .unwrap();
                }
            }
            Body::Holonomy(h) => {
                writeln!(
                    out,
                    "\n[holonomy]\nfield = {}\nfield_param = {}\nloop = {}\nsteps = {}",
                    h.field.preset,
                    h.field.param,
                    points(&h.loop_points),
                    list(&h.steps)
                )
                .unwrap();
            }
        }
        out
    }
}
