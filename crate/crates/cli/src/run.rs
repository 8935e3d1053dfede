use std::path::{Path, PathBuf};
use std::time::Instant;

use np_corner::bem::{
    assemble_np_matrix, essential_spectrum_study, np_spectrum, KernelMode, SpectralReport, StudyWindow,
};
use np_corner::certificate::{certificate_form_check, coercivity_certificate};
use np_corner::dispersion::{
    convert_contrast, eval_f_with, solve_dispersion, Contrast, ContrastTriple, CornerAngle, RootKind,
    SignConvention,
};
use np_corner::fem::{
    build_fem_context, parse_mesh, spectral_correspondence, td_spectrum, FemContext, FemGeometry, PolarOptions,
};
use np_corner::geometry::graded_mesh;
use np_corner::parse::{parse_fem_geometry, parse_kernel_mode, parse_shape, parse_sweep, ShapeSpec};
use np_corner::sector::manufactured_study;
use np_corner::weyl::{weyl_context, weyl_sweep, CUTOFF_R0, DROP_R0};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ConfigError, ExperimentConfig, Format};
use crate::emit::{emit, num, Output, PlotSpec};

pub const COMMANDS: [&str; 9] = [
    "dispersion",
    "mesh",
    "spectrum-bem",
    "ess-study",
    "spectrum-fem",
    "cross-validate",
    "weyl",
    "certificate",
    "sector",
];

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Module(np_corner::Error),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Module(e) if e.is_precondition() => 2,
            RunError::Module(_) | RunError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Module(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<np_corner::Error> for RunError {
    fn from(e: np_corner::Error) -> Self {
        RunError::Module(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

type RunResult<T> = std::result::Result<T, RunError>;

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub wall_seconds: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub command: Option<String>,
    pub config: ExperimentConfig,
    pub stages: Vec<Stage>,
    pub outputs: Vec<PathBuf>,
    pub exit_code: i32,
    pub error: Option<String>,
}

struct Timer {
    stages: Vec<Stage>,
}

impl Timer {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> RunResult<T>) -> RunResult<T> {
        let start = Instant::now();
        let r = f();
        self.stages.push(Stage { name: name.to_string(), wall_seconds: start.elapsed().as_secs_f64(), ok: r.is_ok() });
        r
    }
}

fn angle(cfg: &ExperimentConfig) -> RunResult<CornerAngle> {
    Ok(CornerAngle::new(ExperimentConfig::require(&cfg.alpha, "alpha")?)?)
}

fn contrast(cfg: &ExperimentConfig) -> RunResult<ContrastTriple> {
    let given: Vec<Contrast> = [cfg.k.map(Contrast::K), cfg.lambda.map(Contrast::Lambda), cfg.beta.map(Contrast::Beta)]
        .into_iter()
        .flatten()
        .collect();
    match given[..] {
        [c] => Ok(convert_contrast(c)?),
        [] => Err(ConfigError::new("k", "one of k, lambda, beta is required").into()),
        _ => Err(ConfigError::new("k", "give only one of k, lambda, beta").into()),
    }
}

fn descriptor<T>(value: &Option<String>, key: &str, parse: fn(&str) -> np_corner::Result<T>) -> RunResult<T> {
    let text = ExperimentConfig::require(value, key)?;
    parse(&text).map_err(|e| ConfigError::new(key, e.to_string()).into())
}

fn shape(cfg: &ExperimentConfig) -> RunResult<ShapeSpec> {
    if cfg.shape.is_none() {
        if let Some(alpha) = cfg.alpha {
            return Ok(ShapeSpec::Drop { alpha, r0: cfg.r0.unwrap_or(DROP_R0) });
        }
    }
    descriptor(&cfg.shape, "shape", parse_shape)
}

fn positive(value: Option<f64>, key: &str, default: f64) -> RunResult<f64> {
    let v = value.unwrap_or(default);
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(np_corner::Error::InvalidParameter(format!("{key} = {v} must be positive")).into())
    }
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn in_out_dir(cfg: &ExperimentConfig, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir(cfg).join(p)
    }
}

/// Builds or reads the FEM mesh; with `save-mesh` set, also writes it in the
/// text format and returns the path.
fn fem_context(cfg: &ExperimentConfig) -> RunResult<(FemContext, Option<FemGeometry>, Option<PathBuf>)> {
    let (ctx, geom) = load_fem_context(cfg)?;
    let saved = match &cfg.save_mesh {
        Some(p) => {
            let path = in_out_dir(cfg, p);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&path, ctx.mesh.to_text())?;
            Some(path)
        }
        None => None,
    };
    Ok((ctx, geom, saved))
}

fn load_fem_context(cfg: &ExperimentConfig) -> RunResult<(FemContext, Option<FemGeometry>)> {
    let h = positive(cfg.h, "h", 0.05)?;
    match (&cfg.mesh_file, &cfg.geometry) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::new("mesh-file", format!("cannot read {}: {e}", path.display())))?;
            Ok((FemContext::from_mesh(parse_mesh(&text)?)?, None))
        }
        (None, Some(_)) => {
            let geom = descriptor(&cfg.geometry, "geometry", parse_fem_geometry)?;
            Ok((build_fem_context(geom, PolarOptions::with_h(h))?, Some(geom)))
        }
        (Some(_), Some(_)) => Err(ConfigError::new("geometry", "give either geometry or mesh-file").into()),
        (None, None) => Err(ConfigError::new("geometry", "required but not given").into()),
    }
}

fn dispersion(cfg: &ExperimentConfig) -> RunResult<Output> {
    let alpha = angle(cfg)?;
    let paper = cfg.paper_sign.unwrap_or(false);
    let inputs: Vec<Contrast> = match &cfg.sweep {
        Some(text) => {
            let sweep = parse_sweep(text).map_err(|e| ConfigError::new("sweep", e.to_string()))?;
            let wrap: fn(f64) -> Contrast = match sweep.name.as_str() {
                "k" => Contrast::K,
                "lambda" => Contrast::Lambda,
                "beta" => Contrast::Beta,
                other => return Err(ConfigError::new("sweep", format!("cannot sweep `{other}`")).into()),
            };
            sweep.values.into_iter().map(wrap).collect()
        }
        None => vec![Contrast::K(contrast(cfg)?.k)],
    };
    let rows: Vec<Option<(ContrastTriple, Option<np_corner::dispersion::DispersionRoot>)>> = inputs
        .par_iter()
        .map(|&c| convert_contrast(c).ok().map(|t| (t, solve_dispersion(t.k, alpha))))
        .collect();
    let mut header = vec!["alpha", "k", "lambda", "beta", "branch", "root", "residual"];
    if paper {
        header.push("f_paper");
    }
    let a = alpha.radians();
    let mut table = Vec::with_capacity(rows.len());
    let mut docs = Vec::with_capacity(rows.len());
    for (input, row) in inputs.iter().zip(&rows) {
        let (t, root) = match row {
            Some((t, root)) => (*t, *root),
            None => {
                let k = match *input {
                    Contrast::K(k) => k,
                    _ => f64::NAN,
                };
                (ContrastTriple { k, lambda: f64::NAN, beta: f64::NAN }, None)
            }
        };
        let (branch, value, residual) = match root {
            Some(r) => (
                match r.kind {
                    RootKind::Real => "real",
                    RootKind::Imaginary => "imaginary",
                },
                r.value,
                r.residual(t.k, alpha),
            ),
            None => ("none", f64::NAN, f64::NAN),
        };
        let f_paper = match root {
            Some(r) if paper && r.kind == RootKind::Real => eval_f_with(r.value, alpha, SignConvention::Verbatim),
            _ => f64::NAN,
        };
        let mut line = vec![num(a), num(t.k), num(t.lambda), num(t.beta), branch.to_string(), num(value), num(residual)];
        if paper {
            line.push(num(f_paper));
        }
        table.push(line);
        let mut doc = json!({
            "alpha": a, "k": finite(t.k), "lambda": finite(t.lambda), "beta": finite(t.beta),
            "branch": branch, "root": finite(value), "residual": finite(residual),
        });
        if paper {
            doc["f_paper"] = json!(finite(f_paper));
        }
        docs.push(doc);
    }
    Ok(Output::new(header, table, json!(docs)).with_plot(PlotSpec { x: "k", y: "root", log_x: false, log_y: false }))
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn grading(cfg: &ExperimentConfig, spec: &ShapeSpec) -> f64 {
    cfg.grading.unwrap_or(match spec {
        ShapeSpec::Drop { .. } => 3.0,
        _ => 1.0,
    })
}

fn mesh(cfg: &ExperimentConfig) -> RunResult<Output> {
    let spec = shape(cfg)?;
    let n = ExperimentConfig::require(&cfg.n, "n")?;
    let m = graded_mesh(&spec.build()?, n, grading(cfg, &spec))?;
    let rows = (0..m.len())
        .map(|i| {
            vec![
                num(m.nodes[i].x),
                num(m.nodes[i].y),
                num(m.weights[i]),
                num(m.normals[i].x),
                num(m.normals[i].y),
                num(m.curvature[i]),
            ]
        })
        .collect();
    let doc = json!({
        "nodes": m.nodes.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
        "weights": m.weights,
        "normals": m.normals.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
        "curvature": m.curvature,
    });
    Ok(Output::new(vec!["x", "y", "weight", "nx", "ny", "curvature"], rows, doc))
}

fn spectrum_bem(cfg: &ExperimentConfig) -> RunResult<Output> {
    let spec = shape(cfg)?;
    let n = ExperimentConfig::require(&cfg.n, "n")?;
    let mode = match &cfg.mode {
        Some(_) => descriptor(&cfg.mode, "mode", parse_kernel_mode)?,
        None => KernelMode::FreeSpace,
    };
    let m = graded_mesh(&spec.build()?, n, grading(cfg, &spec))?;
    let report = np_spectrum(&assemble_np_matrix(&m, mode)?)?;
    Ok(spectrum_output(&report))
}

fn spectrum_output(report: &SpectralReport) -> Output {
    let rows = report
        .eigenvalues
        .iter()
        .zip(&report.imag)
        .enumerate()
        .map(|(i, (re, im))| vec![report.n.to_string(), i.to_string(), num(*re), num(im.abs())])
        .collect();
    let doc = serde_json::to_value(report).expect("report serializes");
    Output::new(vec!["N", "index", "eigenvalue", "imag_residual"], rows, doc)
}

fn ess_study(cfg: &ExperimentConfig) -> RunResult<Output> {
    let spec = shape(cfg)?;
    let n_list = cfg.n_list.clone().unwrap_or_else(|| vec![64, 128, 256, 512]);
    let mut window = StudyWindow::default();
    if let Some(d) = cfg.delta {
        window.delta = positive(Some(d), "delta", d)?;
    }
    let control = match spec {
        ShapeSpec::Drop { .. } => None,
        _ => Some(ExperimentConfig::require(&cfg.alpha, "alpha")?),
    };
    let curve = spec.build()?;
    let reports = essential_spectrum_study(&curve, &n_list, grading(cfg, &spec), window, control)?;
    let mut rows = Vec::new();
    let mut docs = Vec::new();
    for r in &reports {
        let c = r.counts.as_ref().expect("study attaches counts");
        let (lo, hi) = r.interval.expect("study attaches the interval");
        rows.push(vec![
            r.n.to_string(),
            c.inside.to_string(),
            c.inside_literal.to_string(),
            c.outside.to_string(),
            num(r.max_abs()),
            num(r.residual_imag),
        ]);
        docs.push(json!({
            "N": r.n, "inside": c.inside, "inside_literal": c.inside_literal, "outside": c.outside,
            "max_abs": r.max_abs(), "imag_residual": r.residual_imag,
            "lambda_minus": lo, "lambda_plus": hi,
            "delta": c.delta, "delta_out": c.delta_out, "puncture": c.puncture,
        }));
    }
    Ok(Output::new(vec!["N", "inside", "inside_literal", "outside", "max_abs", "imag_residual"], rows, json!(docs))
        .with_plot(PlotSpec { x: "N", y: "inside", log_x: true, log_y: false }))
}

fn spectrum_fem(cfg: &ExperimentConfig) -> RunResult<Output> {
    let (ctx, _, saved) = fem_context(cfg)?;
    let spec = td_spectrum(&ctx, Some(cfg.count.unwrap_or(10)))?;
    let rows = spec
        .nontrivial
        .iter()
        .enumerate()
        .map(|(i, &b)| vec![i.to_string(), num(b), num(0.5 - b)])
        .collect();
    let doc = json!({
        "nontrivial": spec.nontrivial,
        "zero_cluster": spec.zero_cluster,
        "one_cluster": spec.one_cluster,
        "interface_size": spec.interface_size,
        "min": spec.min(),
        "max": spec.max(),
    });
    let mut out = Output::new(vec!["index", "beta", "lambda"], rows, doc);
    out.side_files.extend(saved);
    Ok(out)
}

fn cross_validate(cfg: &ExperimentConfig) -> RunResult<Output> {
    let (ctx, geom, saved) = fem_context(cfg)?;
    let geom = geom.ok_or_else(|| ConfigError::new("geometry", "cross-validation needs a geometry descriptor"))?;
    let (spec, big_r) = match geom {
        FemGeometry::DiskInDisk { r, big_r } => (ShapeSpec::Disk { r }, big_r),
        FemGeometry::EllipseInDisk { a, b, big_r } => (ShapeSpec::Ellipse { a, b }, big_r),
        FemGeometry::DropInDisk { alpha, r0, big_r } => (ShapeSpec::Drop { alpha, r0 }, big_r),
    };
    let n = cfg.n.unwrap_or(256);
    let count = cfg.count.unwrap_or(6);
    let m = graded_mesh(&spec.build()?, n, grading(cfg, &spec))?;
    let bem = np_spectrum(&assemble_np_matrix(&m, KernelMode::DiskPoisson(big_r))?)?;
    let fem = td_spectrum(&ctx, Some(count))?;
    let table = spectral_correspondence(&fem, &bem, count);
    let rows = table
        .rows
        .iter()
        .map(|r| vec![num(r.beta), num(r.lambda_fem), num(r.lambda_bem), num(r.mismatch)])
        .collect();
    let doc = serde_json::to_value(&table).expect("table serializes");
    let mut out = Output::new(vec!["beta", "lambda_fem", "lambda_bem", "mismatch"], rows, doc);
    out.side_files.extend(saved);
    Ok(out)
}

fn weyl(cfg: &ExperimentConfig) -> RunResult<Output> {
    let alpha = angle(cfg)?;
    let t = contrast(cfg)?;
    let eps = cfg.eps.clone().unwrap_or_else(|| np_corner::weyl::dyadic_eps(4, 9));
    if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0)) {
        return Err(ConfigError::new("eps", "values must be positive").into());
    }
    let eps_min = eps.iter().copied().fold(f64::INFINITY, f64::min);
    let h = positive(cfg.h, "h", 0.05)?;
    let r0 = positive(cfg.r0, "r0", CUTOFF_R0)?;
    let geometry_alpha = if cfg.flat_control.unwrap_or(false) { std::f64::consts::PI } else { alpha.radians() };
    let ctx = weyl_context(geometry_alpha, eps_min, h)?;
    let report = weyl_sweep(t.k, alpha, &eps, r0, &ctx, Some(t.beta))?;
    let rows = report
        .rows
        .iter()
        .map(|r| vec![num(r.eps), num(r.m_eps), num(r.s_eps), num(r.residual), num(r.l2_norm)])
        .collect();
    let doc = serde_json::to_value(&report).expect("report serializes");
    Ok(Output::new(vec!["eps", "m_eps", "s_eps", "residual", "l2_norm"], rows, doc)
        .with_plot(PlotSpec { x: "eps", y: "residual", log_x: true, log_y: true }))
}

fn certificate(cfg: &ExperimentConfig) -> RunResult<Output> {
    let alpha = angle(cfg)?;
    let t = contrast(cfg)?;
    let cert = coercivity_certificate(t.k, alpha)?;
    let check = certificate_form_check(&cert, cfg.samples.unwrap_or(1000), cfg.seed());
    let row = vec![
        num(cert.k),
        num(cert.alpha),
        num(cert.p),
        num(cert.q),
        num(cert.d),
        num(cert.disc1),
        num(cert.disc2),
        num(check.min_ratio),
        check.passed.to_string(),
    ];
    let mut doc = serde_json::to_value(cert).expect("certificate serializes");
    doc["form_check"] = serde_json::to_value(&check).expect("check serializes");
    Ok(Output::new(
        vec!["k", "alpha", "p", "q", "d", "disc1", "disc2", "min_ratio", "passed"],
        vec![row],
        doc,
    ))
}

fn sector(cfg: &ExperimentConfig) -> RunResult<Output> {
    let alpha = angle(cfg)?;
    let t = contrast(cfg)?;
    let rho = positive(cfg.rho, "rho", 1.0)?;
    let h = positive(cfg.h, "h", rho / 8.0)?;
    let levels = cfg.levels.unwrap_or(3);
    if levels == 0 {
        return Err(ConfigError::new("levels", "must be at least 1").into());
    }
    let rows = manufactured_study(t.k, alpha, rho, h, levels)?;
    let table = rows
        .iter()
        .map(|r| {
            vec![
                num(r.h),
                r.unknowns.to_string(),
                num(r.error),
                r.ratio.map(num).unwrap_or_default(),
                num(r.stability),
            ]
        })
        .collect();
    let doc = json!({ "k": t.k, "alpha": alpha.radians(), "rho": rho, "rows": rows });
    Ok(Output::new(vec!["h", "unknowns", "error", "ratio", "stability"], table, doc)
        .with_plot(PlotSpec { x: "h", y: "error", log_x: true, log_y: true }))
}

fn default_format(command: &str) -> Format {
    match command {
        "mesh" | "ess-study" | "certificate" => Format::Json,
        _ => Format::Csv,
    }
}

fn output_path(cfg: &ExperimentConfig, command: &str, format: Format) -> PathBuf {
    match &cfg.out {
        Some(p) => in_out_dir(cfg, p),
        None => out_dir(cfg).join(format!("{command}.{}", format.extension())),
    }
}

fn format_for(cfg: &ExperimentConfig, command: &str) -> Format {
    if let Some(f) = cfg.format {
        return f;
    }
    match cfg.out.as_deref().and_then(Path::extension).and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        Some("csv") => Format::Csv,
        _ => default_format(command),
    }
}

fn execute(cfg: &ExperimentConfig, timer: &mut Timer, outputs: &mut Vec<PathBuf>) -> RunResult<()> {
    let command = ExperimentConfig::require(&cfg.command, "command")?;
    let compute: fn(&ExperimentConfig) -> RunResult<Output> = match command.as_str() {
        "dispersion" => dispersion,
        "mesh" => mesh,
        "spectrum-bem" => spectrum_bem,
        "ess-study" => ess_study,
        "spectrum-fem" => spectrum_fem,
        "cross-validate" => cross_validate,
        "weyl" => weyl,
        "certificate" => certificate,
        "sector" => sector,
        other => {
            return Err(ConfigError::new("command", format!("unknown command `{other}` ({})", COMMANDS.join(", "))).into())
        }
    };
    if let Some(threads) = cfg.threads {
        if threads == 0 {
            return Err(ConfigError::new("threads", "must be at least 1").into());
        }
        // The global pool can only be built once per process; a second run keeps the first setting.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let out = timer.stage(&command, || compute(cfg))?;
    let format = format_for(cfg, &command);
    let path = output_path(cfg, &command, format);
    let files = timer.stage("write", || Ok(emit(&path, format, &out, cfg.plot.unwrap_or(false))?))?;
    outputs.extend(files);
    Ok(())
}

/// Runs the configured command, writes its outputs and `manifest.json`
/// into the output directory, and returns the manifest.
pub fn run(cfg: &ExperimentConfig) -> RunManifest {
    let mut timer = Timer { stages: Vec::new() };
    let mut outputs = Vec::new();
    let result = execute(cfg, &mut timer, &mut outputs);
    let mut manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command.clone(),
        config: cfg.clone(),
        stages: timer.stages,
        outputs,
        exit_code: result.as_ref().err().map_or(0, RunError::exit_code),
        error: result.as_ref().err().map(ToString::to_string),
    };
    let dir = out_dir(cfg);
    let path = dir.join("manifest.json");
    let written = std::fs::create_dir_all(&dir).and_then(|_| {
        manifest.outputs.push(path.clone());
        crate::emit::write_json(&path, &serde_json::to_value(&manifest).expect("manifest serializes"))
    });
    if let Err(e) = written {
        manifest.outputs.pop();
        if manifest.exit_code == 0 {
            manifest.exit_code = 3;
            manifest.error = Some(format!("i/o error: cannot write {}: {e}", path.display()));
        }
    }
    manifest
}
