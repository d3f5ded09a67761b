//! Dispatch from a validated config to the owning qqm-core module.

use std::time::Instant;

use num_complex::Complex64;
use qqm_core::correlations::{
    cqm_reference, deviation_scan, expectation, expectation_ordered, ghsz_state, loop_holonomy, singlet_state,
    site_polygon, Analyzer, CorrelationModel, MultiParticleState, ProductOrder, Site,
};
use qqm_core::interferometry::{
    fit_phase, order_swap_sensitivity, simulate_interferogram, slab_phase, thickness_for_phase, total_phase,
    BeamConfig, InterferogramSpec, Material, Slab,
};
use qqm_core::scattering::{
    order_swap_with, solve_scattering_with, Backend, BarrierRegion, PotentialProfile, ScatteringSolution,
};
use qqm_core::{wrap_angle, Quaternion};
use serde_json::{json, Map, Value};

use crate::config::{
    linspace, BackendSpec, Body, CorrelationSpec, ExperimentConfig, ExperimentKind, HolonomySpec, InterfereSpec,
    LayerSpec, ModelKind, OrderSwapSpec, SlabSize,
};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotStyle {
    Line,
    Points,
}

/// Which columns an SVG plot shows.
#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub x: usize,
    pub ys: Vec<usize>,
    pub style: PlotStyle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub config_echo: String,
    pub version: &'static str,
    pub wall_time_s: f64,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Kind-specific scalar results.
    pub result: Map<String, Value>,
    pub warnings: Vec<String>,
    pub plot: Plot,
}

pub const SCATTER_COLUMNS: [&str; 8] = ["E", "re_t", "im_t", "abs_t2", "re_r", "im_r", "abs_r2", "flux_residual"];
pub const SCAN_COLUMNS: [&str; 5] = ["param", "E", "E_cqm", "abs_dev", "holonomy_rad"];

fn compute<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Compute(e.to_string())
}

fn quaternion(v: &[f64; 4]) -> Quaternion {
    Quaternion::new(v[0], v[1], v[2], v[3])
}

fn profile(layers: &[LayerSpec]) -> Result<PotentialProfile, CliError> {
    layers
        .iter()
        .map(|l| BarrierRegion::new(l.width, quaternion(&l.v)))
        .collect::<Result<Vec<_>, _>>()
        .map(PotentialProfile::from_layers)
        .map_err(compute)
}

fn backend(b: BackendSpec) -> Backend {
    match b {
        BackendSpec::TransferMatrix => Backend::TransferMatrix,
        BackendSpec::Integrator { step } => Backend::Integrator { step },
    }
}

fn complex(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn scatter_row(energy: f64, s: &ScatteringSolution) -> Vec<Cell> {
    vec![
        Cell::F(energy),
        Cell::F(s.t.re),
        Cell::F(s.t.im),
        Cell::F(s.transmission()),
        Cell::F(s.r.re),
        Cell::F(s.r.im),
        Cell::F(s.reflection()),
        Cell::F(s.flux_residual),
    ]
}

fn nan_row(first: f64, width: usize) -> Vec<Cell> {
    std::iter::once(Cell::F(first)).chain(std::iter::repeat_n(Cell::F(f64::NAN), width - 1)).collect()
}

struct Output {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
    result: Map<String, Value>,
    warnings: Vec<String>,
    plot: Plot,
}

fn obj(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("json! object literal"),
    }
}

/// Runs the experiment described by `config`.
pub fn run(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let out = match &config.body {
        Body::Scatter { layers, spec } => {
            let s = solve_scattering_with(&profile(layers)?, spec.energy, backend(spec.backend)).map_err(compute)?;
            let result = obj(json!({
                "t": complex(s.t),
                "r": complex(s.r),
                "c_left": complex(s.c_left),
                "c_right": complex(s.c_right),
                "transmission": s.transmission(),
                "reflection": s.reflection(),
                "flux_residual": s.flux_residual,
                "condition": s.condition,
            }));
            Output {
                columns: SCATTER_COLUMNS.to_vec(),
                rows: vec![scatter_row(spec.energy, &s)],
                result,
                warnings: vec![],
                plot: Plot { x: 0, ys: vec![3, 6], style: PlotStyle::Points },
            }
        }
        Body::Sweep { layers, spec } => {
            let p = profile(layers)?;
            let b = backend(spec.backend);
            let mut rows = Vec::new();
            let mut warnings = Vec::new();
            for e in spec.energies() {
                match solve_scattering_with(&p, e, b) {
                    Ok(s) => rows.push(scatter_row(e, &s)),
                    Err(err) => {
                        warnings.push(format!("E = {e}: {err}"));
                        rows.push(nan_row(e, SCATTER_COLUMNS.len()));
                    }
                }
            }
            let result = obj(json!({ "rows": rows.len(), "failed_rows": warnings.len() }));
            Output {
                columns: SCATTER_COLUMNS.to_vec(),
                rows,
                result,
                warnings,
                plot: Plot { x: 0, ys: vec![3, 6], style: PlotStyle::Line },
            }
        }
        Body::OrderSwap(spec) => order_swap_output(spec)?,
        Body::Interfere(spec) => interfere_output(spec, config.seed)?,
        Body::Correlation(spec) => correlation_output(spec, config.kind)?,
        Body::Holonomy(spec) => holonomy_output(spec)?,
    };
    Ok(RunReport {
        kind: config.kind,
        seed: config.seed,
        config_echo: config.canonical(),
        version: env!("CARGO_PKG_VERSION"),
        wall_time_s: start.elapsed().as_secs_f64(),
        columns: out.columns,
        rows: out.rows,
        result: out.result,
        warnings: out.warnings,
        plot: out.plot,
    })
}

fn order_swap_output(spec: &OrderSwapSpec) -> Result<Output, CliError> {
    let a = profile(&[spec.a])?;
    let b = profile(&[spec.b])?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &scale in &spec.v_beta_scales {
        let rep =
            order_swap_with(&a.scale_beta(scale), &b.scale_beta(scale), spec.gap, spec.energy, backend(spec.backend))
                .map_err(compute)?;
        rows.push(vec![
            Cell::F(scale),
            Cell::F(rep.t_ab.re),
            Cell::F(rep.t_ab.im),
            Cell::F(rep.t_ba.re),
            Cell::F(rep.t_ba.im),
            Cell::F(rep.delta_phase),
            Cell::F(rep.magnitude_gap),
        ]);
        reports.push(rep);
    }
    let first = reports.first().ok_or_else(|| CliError::Compute("no v_beta_scales given".into()))?;
    let result = obj(json!({
        "t_ab": complex(first.t_ab),
        "t_ba": complex(first.t_ba),
        "delta_phase": first.delta_phase,
        "delta_phase_deg": first.delta_phase.to_degrees(),
        "magnitude_gap": first.magnitude_gap,
    }));
    Ok(Output {
        columns: vec!["v_beta_scale", "re_t_ab", "im_t_ab", "re_t_ba", "im_t_ba", "delta_phase_rad", "magnitude_gap"],
        rows,
        result,
        warnings: vec![],
        plot: Plot { x: 0, ys: vec![5], style: PlotStyle::Line },
    })
}

fn interfere_output(spec: &InterfereSpec, seed: u64) -> Result<Output, CliError> {
    let beam = BeamConfig::new(spec.lambda_angstrom).map_err(compute)?;
    let mut slabs = Vec::new();
    let mut slab_info = Vec::new();
    let mut warnings = Vec::new();
    for m in &spec.materials {
        let material =
            Material::new(m.name.clone(), m.density_per_a3, m.scattering_length_angstrom).map_err(compute)?;
        let thickness = match m.size {
            SlabSize::ThicknessAngstrom(d) => d,
            SlabSize::TargetPhaseDeg(p) => thickness_for_phase(&beam, &material, p.to_radians())
                .map_err(|e| CliError::Compute(format!("material {}: {e}", m.name)))?,
        };
        if thickness == 0.0 {
            warnings.push(format!("material {}: zero target phase gives zero thickness; slab omitted", m.name));
            continue;
        }
        let slab = Slab::new(material, thickness).map_err(compute)?;
        let phase = slab_phase(&beam, &slab);
        slab_info.push(json!({ "name": m.name, "thickness_angstrom": thickness, "phase_deg": phase.to_degrees() }));
        slabs.push(slab);
    }
    let extra = spec.extra_phase_deg.to_radians();
    let phi = total_phase(&beam, &slabs, extra);
    let run_spec = InterferogramSpec::uniform(wrap_angle(phi), spec.contrast, spec.mean_counts, spec.points, seed);
    let run = simulate_interferogram(&run_spec).map_err(compute)?;
    let fit = fit_phase(&run).map_err(compute)?;
    let total_counts = spec.mean_counts * spec.points as f64;
    let rows = run.flag_angles.iter().zip(&run.counts).map(|(&d, &c)| vec![Cell::F(d), Cell::U(c)]).collect();
    let result = obj(json!({
        "phase_rad": fit.phase_hat,
        "phase_deg": fit.phase_hat.to_degrees(),
        "sigma_rad": fit.sigma_phase,
        "contrast": fit.contrast_hat,
        "goodness": fit.goodness,
        "true_phase_rad": wrap_angle(phi),
        "total_phase_deg": phi.to_degrees(),
        "sensitivity_3sigma_deg": order_swap_sensitivity(total_counts, spec.contrast).to_degrees(),
        "slabs": slab_info,
    }));
    Ok(Output {
        columns: vec!["delta_rad", "counts"],
        rows,
        result,
        warnings,
        plot: Plot { x: 0, ys: vec![1], style: PlotStyle::Points },
    })
}

fn correlation_setup(spec: &CorrelationSpec) -> Result<(Vec<Analyzer>, CorrelationModel, Vec<Site>), CliError> {
    let sites: Vec<Site> = spec.sites.iter().enumerate().map(|(j, s)| Site::new(j + 1, s.position)).collect();
    let analyzers = spec
        .sites
        .iter()
        .zip(&sites)
        .map(|(s, site)| {
            if s.polar_deg == 90.0 {
                Analyzer::planar(*site, s.azimuth_deg.to_radians())
            } else {
                Analyzer::from_angles(*site, s.azimuth_deg.to_radians(), s.polar_deg.to_radians())
            }
        })
        .collect();
    let model = match spec.model {
        ModelKind::Local => CorrelationModel::Local,
        ModelKind::Transported => {
            let origin = sites[spec.base - 1].position;
            let paths = spec
                .sites
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    if j + 1 == spec.base {
                        vec![origin]
                    } else {
                        std::iter::once(origin)
                            .chain(s.path.iter().copied())
                            .chain(std::iter::once(s.position))
                            .collect()
                    }
                })
                .collect();
            CorrelationModel::Transported { base: spec.base, paths, step: spec.step }
        }
    };
    Ok((analyzers, model, sites))
}

fn correlation_output(spec: &CorrelationSpec, kind: ExperimentKind) -> Result<Output, CliError> {
    let state: MultiParticleState = if kind == ExperimentKind::Ghsz { ghsz_state() } else { singlet_state() };
    let (analyzers, model, sites) = correlation_setup(spec)?;
    let polygon = site_polygon(&sites, spec.base);
    let mut warnings = Vec::new();
    let (rows, result) = match &spec.scan {
        None => {
            let field = spec.field.build();
            let e = expectation(&state, &analyzers, &field, &model).map_err(compute)?;
            let desc =
                expectation_ordered(&state, &analyzers, &field, &model, ProductOrder::Descending).map_err(compute)?;
            let e_cqm = cqm_reference(&state, &analyzers).map_err(compute)?;
            let holonomy = loop_holonomy(&field, &polygon, spec.step).map_err(compute)?;
            let row = vec![
                Cell::F(spec.field.param),
                Cell::F(e.value),
                Cell::F(e_cqm),
                Cell::F((e.value - e_cqm).abs()),
                Cell::F(holonomy),
            ];
            let result = obj(json!({
                "E": e.value,
                "E_cqm": e_cqm,
                "abs_dev": (e.value - e_cqm).abs(),
                "full_quaternion": e.full.components(),
                "E_descending_order": desc.value,
                "holonomy_rad": holonomy,
            }));
            (vec![row], result)
        }
        Some(scan) => {
            let params = linspace(scan.start, scan.stop, scan.points);
            let mut rows = Vec::new();
            let mut max_dev = 0.0f64;
            for row in deviation_scan(&state, &analyzers, scan.family, &params, &model) {
                match row.outcome {
                    Ok(v) => {
                        max_dev = max_dev.max(v.abs_dev);
                        rows.push(vec![
                            Cell::F(row.param),
                            Cell::F(v.e),
                            Cell::F(v.e_cqm),
                            Cell::F(v.abs_dev),
                            Cell::F(v.holonomy),
                        ]);
                    }
                    Err(err) => {
                        warnings.push(format!("param = {}: {err}", row.param));
                        rows.push(nan_row(row.param, SCAN_COLUMNS.len()));
                    }
                }
            }
            (rows, obj(json!({ "rows": params.len(), "max_abs_dev": max_dev })))
        }
    };
    Ok(Output {
        columns: SCAN_COLUMNS.to_vec(),
        rows,
        result,
        warnings,
        plot: Plot {
            x: 0,
            ys: vec![1, 2],
            style: if spec.scan.is_some() { PlotStyle::Line } else { PlotStyle::Points },
        },
    })
}

fn holonomy_output(spec: &HolonomySpec) -> Result<Output, CliError> {
    let field = spec.field.build();
    let mut rows = Vec::new();
    let mut last = 0.0;
    for &step in &spec.steps {
        last = loop_holonomy(&field, &spec.loop_points, step).map_err(compute)?;
        rows.push(vec![Cell::F(step), Cell::F(last), Cell::F(last.to_degrees())]);
    }
    let result = obj(json!({ "holonomy_rad": last, "holonomy_deg": last.to_degrees() }));
    Ok(Output {
        columns: vec!["step", "holonomy_rad", "holonomy_deg"],
        rows,
        result,
        warnings: vec![],
        plot: Plot { x: 0, ys: vec![1], style: PlotStyle::Line },
    })
}
