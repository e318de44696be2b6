//! Stage orchestration: admissibility → polar metric → split and chart → geodesic metric →
//! inner solve → boundary trace → outer solve → fundamental forms → frame integration → export.

use crate::chart::{build_chart, build_domain_split, verify_chart, ChartResiduals, ColumnIntegrator, SplitOptions};
use crate::config::RunConfig;
use crate::curvature::{check_admissibility, make_family, AdmissibilityReport, CurvatureSpec, Monotonicity, SampleGrid, Tolerances};
use crate::error::{Error, Result};
use crate::immersion::{
    codazzi_l1, codazzi_residual, export_mesh, geodesic_coefficients, geodesic_form, integrate_frame, polar_coefficients,
    polar_form, read_obj_vertices, verify_immersion, GridFields, ImmersionOptions, ImmersionReport, MeshFormat,
};
use crate::inner::{build_envelopes, initial_phi, inner_coefficients, solve_inner, stop_heights, trace_boundary, InnerOptions, Regime};
use crate::metric::{periodic_theta, solve_geodesic_metric, solve_polar_metric, verify_metric_bounds, MetricBoundReport, PolarMetric};
use crate::numerics::grid::Grid1;
use crate::oracle::{ode_closed_form, ode_existence_bound, radial_reference, ClosedForm, ExistenceBound, RadialMetric};
use crate::outer::{
    abort_code, check_decay, check_positivity, gronwall_check, gronwall_from_trace, solve_outer, DecayReport, EnvelopeConstants,
    GronwallReport, OuterOptions, OuterRun, PicardOptions, PositivityReport, RadialData, SplitData,
};
use log::{debug, info};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INADMISSIBLE: i32 = 2;
pub const EXIT_ABORT: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Pipeline prefixes, in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Check,
    Metric,
    Chart,
    Solve,
    Immerse,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Check => "check",
            Stage::Metric => "metric",
            Stage::Chart => "chart",
            Stage::Solve => "solve",
            Stage::Immerse => "immerse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub stage: String,
    pub code: String,
    pub message: String,
    pub exit_code: i32,
}

fn exit_for(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Config(_) | Error::UnknownFamily(_) | Error::InvalidParameter { .. } => EXIT_IO,
        _ => EXIT_ABORT,
    }
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::Io(_) => "IO",
        Error::Config(_) | Error::UnknownFamily(_) | Error::InvalidParameter { .. } => "CONFIG",
        Error::NonStrictHyperbolicity { .. } => "HYPERBOLICITY",
        Error::FrameDrift { .. } => "FRAME_DRIFT",
        Error::NonFinite { .. } => "NON_FINITE",
        e => abort_code(e),
    }
}

impl Abort {
    fn from_error(stage: Stage, e: &Error) -> Self {
        Abort { stage: stage.name().into(), code: error_code(e).into(), message: e.to_string(), exit_code: exit_for(e) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricSummary {
    pub bounds: MetricBoundReport,
    /// ∫∫ G k² dθ dρ over the tabulated disk.
    pub full_area_total_curvature: f64,
    pub extent: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitSummary {
    pub r: f64,
    pub r1: f64,
    pub mu: f64,
    pub b_minus: f64,
    pub b_plus: f64,
    pub c0: f64,
    pub max_rho_dtheta: f64,
    pub x_half_width: f64,
    pub t_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InnerSummary {
    pub min_gap: f64,
    pub min_gap_at: (f64, f64),
    pub max_cfl: f64,
    pub substeps: usize,
    pub decay_constants: [f64; 3],
    pub min_stop: f64,
    pub boundary_min_denominator: f64,
    pub boundary_spacelike_margin: [f64; 2],
    pub boundary_max_rho: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OuterSummary {
    pub regime: Regime,
    pub rho_start: f64,
    pub rho_end: f64,
    pub slices: usize,
    pub abort: Option<String>,
    pub max_cfl: f64,
    pub positivity: PositivityReport,
    pub gronwall: GronwallReport,
    pub decay: DecayReport,
    pub constants: EnvelopeConstants,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImmersionSummary {
    pub geodesic_gauss_residual: f64,
    pub geodesic_codazzi_l1: f64,
    pub geodesic_codazzi_max: [f64; 2],
    pub polar_gauss_residual: f64,
    pub polar_codazzi_l1: f64,
    pub residuals: ImmersionReport,
    pub vertices: usize,
    pub faces: usize,
    pub mesh: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub family: String,
    pub regime: Option<Regime>,
    pub admissibility: Option<AdmissibilityReport>,
    pub metric: Option<MetricSummary>,
    pub chart: Option<ChartResiduals>,
    pub split: Option<SplitSummary>,
    pub inner: Option<InnerSummary>,
    pub outer: Option<OuterSummary>,
    pub immersion: Option<ImmersionSummary>,
    pub abort: Option<Abort>,
}

impl PipelineReport {
    fn new(cfg: &RunConfig) -> Self {
        PipelineReport {
            family: cfg.curvature.family.clone(),
            regime: None,
            admissibility: None,
            metric: None,
            chart: None,
            split: None,
            inner: None,
            outer: None,
            immersion: None,
            abort: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.abort.as_ref().map_or(EXIT_OK, |a| a.exit_code)
    }
}

/// Output directory; `None` keeps everything in memory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    dir: Option<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).map_err(|e| Error::Io(format!("{}: {e}", d.display())))?;
        }
        Ok(Artifacts { dir: dir.map(Path::to_path_buf) })
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        if let Some(p) = self.path(name) {
            std::fs::write(&p, contents).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            debug!("wrote {}", p.display());
        }
        Ok(())
    }

    pub fn write_json<S: Serialize>(&self, name: &str, value: &S) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }
}

pub fn regime_of(m: Monotonicity) -> Regime {
    match m {
        Monotonicity::Increasing => Regime::Increasing,
        Monotonicity::Decreasing => Regime::Decreasing,
    }
}

pub fn build_spec(cfg: &RunConfig) -> Result<CurvatureSpec<f64>> {
    make_family(&cfg.curvature.family, &cfg.family_params())
}

/// Trapezoid in ρ, periodic rectangle rule in θ.
pub fn full_area_total_curvature(polar: &PolarMetric<f64>) -> f64 {
    let nth = polar.theta_grid.len();
    let dtheta = 2.0 * std::f64::consts::PI / nth as f64;
    let rho = &polar.rho_grid.nodes;
    let mut total = 0.0;
    for i in 0..nth {
        let f = |j: usize| polar.g.get(i, j) * polar.k_field.get(i, j).powi(2);
        for j in 0..rho.len() - 1 {
            total += 0.5 * (f(j) + f(j + 1)) * (rho[j + 1] - rho[j]);
        }
    }
    total * dtheta
}

/// Runs the prefix of the pipeline ending at `until`, writing artifacts as stages complete.
pub fn run_pipeline(cfg: &RunConfig, until: Stage, art: &Artifacts) -> PipelineReport {
    let mut rep = PipelineReport::new(cfg);
    let mut stage = Stage::Check;
    let res = (|| -> Result<()> {
        cfg.validate()?;
        art.write("config.json", &(cfg.to_json() + "\n"))?;
        run_stages(cfg, until, art, &mut rep, &mut stage)
    })();
    if let Err(e) = res {
        info!("stage {} failed: {e}", stage.name());
        rep.abort = Some(Abort::from_error(stage, &e));
    }
    if let Err(e) = art.write_json("report.json", &rep) {
        rep.abort.get_or_insert(Abort::from_error(stage, &e));
    }
    rep
}

fn run_stages(cfg: &RunConfig, until: Stage, art: &Artifacts, rep: &mut PipelineReport, stage: &mut Stage) -> Result<()> {
    let tol = &cfg.tolerances;
    let spec = build_spec(cfg)?;

    // admissibility
    let tols = Tolerances { quad_tol: tol.quad_tol, bv_tol: tol.bv_tol, bound_cap: tol.bound_cap };
    let adm = check_admissibility(&spec, &SampleGrid::for_spec(&spec), &tols)?;
    art.write_json("admissibility.json", &adm)?;
    let admissible = adm.admissible;
    let reason = adm.failure_reasons.first().cloned().unwrap_or_default();
    rep.regime = adm.monotonicity.map(regime_of);
    rep.admissibility = Some(adm);
    info!("check: admissible = {admissible}");
    if !admissible {
        rep.abort = Some(Abort { stage: "check".into(), code: "INADMISSIBLE".into(), message: reason, exit_code: EXIT_INADMISSIBLE });
        return Ok(());
    }
    let regime = rep.regime.ok_or_else(|| Error::Structural("admissible curvature without a monotonicity class".into()))?;
    if until == Stage::Check {
        return Ok(());
    }

    *stage = Stage::Metric;
    let g = &cfg.grids;
    let polar = solve_polar_metric(&spec, &periodic_theta(g.n_theta), &Grid1::uniform(0.0, g.polar_extent, g.n_rho), tol.metric_step)?;
    let summary = MetricSummary {
        bounds: verify_metric_bounds(&polar),
        full_area_total_curvature: full_area_total_curvature(&polar),
        extent: g.polar_extent,
    };
    art.write_json("metric.json", &summary)?;
    rep.metric = Some(summary);
    info!("metric: {} rays to rho = {}", g.n_theta, g.polar_extent);
    if until == Stage::Metric {
        return Ok(());
    }

    *stage = Stage::Chart;
    let integ = ColumnIntegrator { polar: &polar, spec: &spec, step: tol.chart_step, floor: tol.chart_floor };
    let split = build_domain_split(&integ, &spec, cfg.r, SplitOptions { rho_end: g.rho_max + 0.5, n_curve: 128, n_max: 40 })?;
    let x_end = split.curve1.last().map_or(1.0, |c| c[0]).max(split.curve2.last().map_or(1.0, |c| -c[0])) + 0.3;
    let t_max = split.params().t0(x_end) + 1.0;
    let xg = Grid1::staggered(x_end, g.n_x);
    let tg = Grid1::uniform(0.0, t_max, g.n_t);
    let mut chart = build_chart(&polar, &spec, &xg, &tg, tol.chart_step, tol.chart_floor)?;
    let geo = solve_geodesic_metric(&spec, &chart, tol.chart_step)?;
    chart.attach_jacobian(&geo)?;
    let residuals = verify_chart(&chart, &polar, &geo)?;
    art.write_json("chart.json", &residuals)?;
    rep.chart = Some(residuals);
    rep.split = Some(SplitSummary {
        r: split.r,
        r1: split.r1,
        mu: split.mu,
        b_minus: split.b_minus,
        b_plus: split.b_plus,
        c0: split.c0,
        max_rho_dtheta: split.max_rho_dtheta,
        x_half_width: x_end,
        t_max,
    });
    info!("chart: R1 = {}, x in ±{x_end}, t in [0, {t_max}]", split.r1);
    if until == Stage::Chart {
        return Ok(());
    }

    *stage = Stage::Solve;
    let params = split.params();
    let coef = inner_coefficients(&geo, &chart, &spec)?;
    let stops = stop_heights(&chart, &params)?;
    let mut kit = build_envelopes(&geo, &coef, &stops, &params)?;
    let phi_opts = crate::inner::PhiOptions { min_extent: cfg.phi.min_extent.max(x_end + 1.0), ..cfg.phi };
    kit.phi = Some(initial_phi(&kit, &params, &phi_opts)?);
    let inner_opts = InnerOptions { cfl: cfg.scheme.inner_cfl, ..Default::default() };
    let inner = solve_inner(&coef, &xg, &tg, &kit, &split, &stops, &inner_opts)?;
    let mut csv = String::from("x,t,p,q\n");
    for s in &inner.trace {
        csv.push_str(&format!("{:.12e},{:.12e},{:.12e},{:.12e}\n", s.x, s.t, s.p, s.q));
    }
    art.write("inner_trace.csv", &csv)?;
    let bd = trace_boundary(&inner, &integ, &spec, &split, regime)?;
    rep.inner = Some(InnerSummary {
        min_gap: inner.min_gap,
        min_gap_at: inner.min_gap_at,
        max_cfl: inner.max_cfl,
        substeps: inner.substeps,
        decay_constants: inner.decay_constants,
        min_stop: stops.iter().copied().fold(f64::INFINITY, f64::min),
        boundary_min_denominator: bd.min_denominator,
        boundary_spacelike_margin: bd.spacelike_margin,
        boundary_max_rho: bd.max_rho(),
    });
    info!("inner: min gap {:e}, {} substeps", inner.min_gap, inner.substeps);
    let data = SplitData { split: &split, data: &bd };
    let outer_opts = OuterOptions {
        n_sigma: g.n_sigma,
        cfl: cfg.scheme.cfl,
        max_step: cfg.scheme.max_step,
        rho_max: g.rho_max.min(bd.max_rho()),
        picard: cfg.scheme.picard.then_some(PicardOptions { tol: cfg.scheme.picard_tol, max_iter: cfg.scheme.picard_max_iter }),
        checkpoints: vec![2.0 * split.r1],
        enforce_apriori: cfg.scheme.enforce_apriori,
        ..Default::default()
    };
    let run = solve_outer(&polar, &spec, &data, regime, &outer_opts)?;
    art.write("energy_trace.csv", &run.trace.to_csv())?;
    let summary = outer_summary(&run, regime, &spec, tol.gronwall_floor, tol.gronwall_tol);
    info!("outer: rho {} → {}, {} slices", summary.rho_start, summary.rho_end, summary.slices);
    let abort = run.abort.clone();
    rep.outer = Some(summary);
    if let Some(e) = abort {
        rep.abort = Some(Abort { stage: "solve".into(), code: abort_code(&e).into(), message: e.to_string(), exit_code: EXIT_ABORT });
        return Ok(());
    }
    if until == Stage::Solve {
        return Ok(());
    }

    *stage = Stage::Immerse;
    let p = &cfg.patch;
    let min_stop = rep.inner.as_ref().map_or(0.0, |s| s.min_stop);
    if p.height >= 0.8 * min_stop {
        return Err(Error::Config(format!("patch.height = {} must stay below 0.8 × min stop height {min_stop}", p.height)));
    }
    let dx = xg.min_spacing();
    let rows: Vec<usize> = (0..xg.len()).filter(|&j| xg.nodes[j].abs() <= p.half_width + 2.0 * dx).collect();
    let (first, last) = (rows[0], rows[rows.len() - 1]);
    if xg.nodes[first] > -p.half_width || xg.nodes[last] < p.half_width {
        return Err(Error::Config("patch.half_width exceeds the inner x-grid".into()));
    }
    let xs = first..last + 1;
    let tn = tg.nodes.iter().position(|&t| t > p.height).unwrap_or(tg.len() - 1) + 2;
    let ts = 0..tn.min(tg.len());
    let form = geodesic_form(&inner, &geo, xs.clone(), ts.clone())?;
    let cc = geodesic_coefficients(&geo, xs.clone(), ts.clone());
    let res = codazzi_residual(&form, &cc);
    let pform = polar_form(&run.state, &polar, &spec, regime)?;
    let pres = codazzi_residual(&pform, &polar_coefficients(&pform, &polar)?);
    let fields = GridFields::new(&form, &geo, xs, ts);
    let n = p.nodes;
    let x_nodes: Vec<f64> = (0..n).map(|i| -p.half_width + 2.0 * p.half_width * i as f64 / (n - 1) as f64).collect();
    let t_nodes: Vec<f64> = (0..n).map(|i| p.height * i as f64 / (n - 1) as f64).collect();
    let iopts = ImmersionOptions { step: tol.frame_step, drift_tol: tol.drift_tol, ..Default::default() };
    let mesh = integrate_frame(&fields, &x_nodes, &t_nodes, &iopts)?;
    let residuals = verify_immersion(&mesh, &fields, &iopts)?;
    let mesh_name = match p.format {
        MeshFormat::Obj => "mesh.obj",
        MeshFormat::Ply => "mesh.ply",
    };
    if let Some(path) = art.path(mesh_name) {
        export_mesh(&mesh, &path, p.format)?;
    }
    let summary = ImmersionSummary {
        geodesic_gauss_residual: form.gauss_residual.max_abs(),
        geodesic_codazzi_l1: codazzi_l1(&form, &res),
        geodesic_codazzi_max: [res[0].max_abs(), res[1].max_abs()],
        polar_gauss_residual: pform.gauss_residual.max_abs(),
        polar_codazzi_l1: codazzi_l1(&pform, &pres),
        residuals,
        vertices: mesh.frames.len(),
        faces: mesh.faces.len(),
        mesh: mesh_name.into(),
    };
    art.write_json("immersion.json", &summary.residuals)?;
    info!("immerse: {} vertices, metric error {:e}", summary.vertices, summary.residuals.metric_inf);
    rep.immersion = Some(summary);
    Ok(())
}

pub fn outer_summary(run: &OuterRun<f64>, regime: Regime, spec: &CurvatureSpec<f64>, floor: f64, tol: f64) -> OuterSummary {
    let (rho, e, f, h) = gronwall_from_trace(&run.trace, floor);
    let slices = &run.state.slices;
    OuterSummary {
        regime,
        rho_start: slices.first().map_or(f64::NAN, |s| s.rho),
        rho_end: slices.last().map_or(f64::NAN, |s| s.rho),
        slices: slices.len(),
        abort: run.abort.as_ref().map(|e| e.to_string()),
        max_cfl: run.trace.rows.iter().map(|r| r.cfl).fold(0.0, f64::max),
        positivity: check_positivity(&run.state, &run.trace),
        gronwall: gronwall_check(&rho, &e, &f, &h, tol),
        decay: check_decay(&run.trace, regime, spec),
        constants: run.trace.constants.clone(),
    }
}

// ---------------------------------------------------------------------------
// Radial cross-validation.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadialSetup {
    pub r: f64,
    pub u0: f64,
    pub v0: f64,
    /// Comparison radius; the 2-D run stops here.
    pub rho_end: f64,
    pub n_sigma: usize,
    pub max_step: f64,
    pub picard: bool,
    /// Arc [center ∓ half_width] on ρ = R, widening by `spread`·log(ρ/R).
    pub half_width: f64,
    pub spread: f64,
    pub metric_step: f64,
    pub reference_step: f64,
}

impl Default for RadialSetup {
    fn default() -> Self {
        RadialSetup {
            r: 10.0,
            u0: 0.1,
            v0: 0.1,
            rho_end: 20.0,
            n_sigma: 256,
            max_step: 0.0125,
            picard: false,
            half_width: 0.5,
            spread: 1.0,
            metric_step: 1e-3,
            reference_step: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialOuterReport {
    pub n_sigma: usize,
    pub rho: f64,
    pub u: f64,
    pub v: f64,
    pub exact_u: f64,
    pub exact_v: f64,
    /// max of the relative errors in u and v at the mid-σ node.
    pub rel_error: f64,
    /// Coefficient of variation of G²ku/v along the mid-σ node.
    pub c_ratio_cv: f64,
    pub abort: Option<String>,
    pub positivity_margin: f64,
    pub gronwall_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub family: String,
    pub regime: Regime,
    pub setup: RadialSetup,
    pub existence: ExistenceBound,
    /// max relative gap between the closed form and the joint ODE integration.
    pub closed_vs_ode: f64,
    pub closed_form_c_ratio_defect: f64,
    pub ode_c_ratio_defect: f64,
    pub outer: RadialOuterReport,
}

/// Polar metric fine enough for radial comparisons.
pub fn radial_polar(spec: &CurvatureSpec<f64>, setup: &RadialSetup) -> Result<PolarMetric<f64>> {
    let extent = 1.5 * setup.rho_end;
    let n = (extent / (10.0 * setup.metric_step)).ceil() as usize + 1;
    solve_polar_metric(spec, &periodic_theta(8), &Grid1::uniform(0.0, extent, n), 2.5 * setup.metric_step)
}

/// 2-D outer march on radial data compared with the closed form at `setup.rho_end`.
pub fn radial_outer(
    spec: &CurvatureSpec<f64>,
    polar: &PolarMetric<f64>,
    closed: &ClosedForm<f64>,
    regime: Regime,
    setup: &RadialSetup,
) -> Result<RadialOuterReport> {
    let cf = closed.clone();
    let data = RadialData {
        r: setup.r,
        center: std::f64::consts::FRAC_PI_2,
        half_width: setup.half_width,
        spread: setup.spread,
        u0: setup.u0,
        v0: setup.v0,
        solution: move |x: f64| cf.at(x).ok().flatten().map_or((f64::NAN, f64::NAN), |s| (s.0, s.1)),
        rho_end: 1.25 * setup.rho_end,
    };
    let opts = OuterOptions {
        n_sigma: setup.n_sigma,
        max_step: setup.max_step,
        rho_max: setup.rho_end,
        picard: setup.picard.then(PicardOptions::default),
        ..Default::default()
    };
    let run = solve_outer(polar, spec, &data, regime, &opts)?;
    let exact = closed
        .at(setup.rho_end)?
        .ok_or_else(|| Error::Structural("closed form undefined at the comparison radius".into()))?;
    let mid = setup.n_sigma / 2;
    let last = run.state.slices.last().ok_or(Error::EmptyMesh)?;
    let ratios: Vec<f64> = run
        .state
        .slices
        .iter()
        .map(|s| {
            let th = s.theta(mid);
            let g = polar.eval(th, s.rho).map_or(f64::NAN, |p| p.g);
            g * g * spec.k(th, s.rho) * s.u[mid] / s.v[mid]
        })
        .collect();
    let (rho, e, f, h) = gronwall_from_trace(&run.trace, 1e-14);
    Ok(RadialOuterReport {
        n_sigma: setup.n_sigma,
        rho: last.rho,
        u: last.u[mid],
        v: last.v[mid],
        exact_u: exact.0,
        exact_v: exact.1,
        rel_error: ((last.u[mid] - exact.0).abs() / exact.0.abs()).max((last.v[mid] - exact.1).abs() / exact.1.abs()),
        c_ratio_cv: coefficient_of_variation(&ratios),
        abort: run.abort.as_ref().map(|e| e.to_string()),
        positivity_margin: check_positivity(&run.state, &run.trace).worst_margin,
        gronwall_margin: gronwall_check(&rho, &e, &f, &h, 1e-12).worst_margin,
    })
}

pub fn coefficient_of_variation(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

/// Closed form against integration, the existence predicate, and the 2-D solver on radial data.
pub fn run_oracle(spec: &CurvatureSpec<f64>, regime: Regime, setup: &RadialSetup) -> Result<OracleReport> {
    let rm = RadialMetric::from_spec(spec, 1.5 * setup.rho_end, setup.metric_step)?;
    let existence = ode_existence_bound(&rm, regime, setup.r, setup.v0)?;
    let closed = ClosedForm::new(rm.clone(), regime, setup.r, setup.u0, setup.v0)?;
    let cf = ode_closed_form(&rm, regime, setup.r, setup.u0, setup.v0, setup.rho_end)?;
    let ode = radial_reference(rm.curvature.clone(), regime, setup.r, setup.u0, setup.v0, setup.rho_end, setup.reference_step)?;
    let mut gap = 0.0f64;
    for (i, &rho) in ode.rho_grid.iter().enumerate() {
        if let Some((u, v, _)) = closed.at(rho)? {
            gap = gap.max(((u - ode.u[i]) / u).abs()).max(((v - ode.v[i]) / v).abs());
        }
    }
    let polar = radial_polar(spec, setup)?;
    let outer = radial_outer(spec, &polar, &closed, regime, setup)?;
    Ok(OracleReport {
        family: format!("{:?}", spec.family_tag()),
        regime,
        setup: setup.clone(),
        existence,
        closed_vs_ode: gap,
        closed_form_c_ratio_defect: cf.c_ratio_defect(),
        ode_c_ratio_defect: ode.c_ratio_defect(),
        outer,
    })
}

// ---------------------------------------------------------------------------
// Re-checks on emitted artifacts.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    fn push(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(Check { name: name.into(), pass, detail });
    }
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let p = dir.join(name);
    std::fs::read_to_string(&p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

/// Reads `report.json` and whatever downstream artifacts it names and re-checks their invariants.
pub fn verify_artifacts(dir: &Path) -> Result<VerifyReport> {
    let rep: serde_json::Value = serde_json::from_str(&read(dir, "report.json")?).map_err(|e| Error::Io(e.to_string()))?;
    let mut out = VerifyReport { checks: Vec::new() };
    let num = |v: &serde_json::Value| v.as_f64().unwrap_or(f64::NAN);
    out.push("no abort", rep["abort"].is_null(), rep["abort"].to_string());
    if let Some(a) = rep.get("admissibility").filter(|v| !v.is_null()) {
        out.push("admissible", a["admissible"].as_bool() == Some(true), a["failure_reasons"].to_string());
    }
    if let Some(m) = rep.get("metric").filter(|v| !v.is_null()) {
        let v = m["bounds"]["violations"].as_u64().unwrap_or(u64::MAX);
        out.push("metric bounds", v == 0, format!("{v} violations"));
    }
    if let Some(o) = rep.get("outer").filter(|v| !v.is_null()) {
        let text = read(dir, "energy_trace.csv")?;
        let mut rows = 0usize;
        let mut min_v = f64::INFINITY;
        let mut finite = true;
        for line in text.lines().skip(1) {
            let vals: Vec<f64> = line.split(',').map(|s| s.parse().unwrap_or(f64::NAN)).collect();
            finite &= vals.len() == 9 && vals.iter().all(|v| v.is_finite());
            min_v = min_v.min(vals.get(7).copied().unwrap_or(f64::NAN));
            rows += 1;
        }
        out.push("energy trace finite", finite && rows > 1, format!("{rows} rows"));
        out.push("trace positivity", min_v > 0.0, format!("min v {min_v:e}"));
        let pm = num(&o["positivity"]["worst_margin"]);
        out.push("positivity bound", pm >= 0.0, format!("margin {pm:e}"));
        let gm = num(&o["gronwall"]["worst_margin"]);
        out.push("gronwall", o["gronwall"]["conclusion_holds"].as_bool() == Some(true) && gm >= 0.0, format!("margin {gm:e}"));
        let (h2, ceil) = (num(&o["decay"]["h2_max"]), num(&o["decay"]["h2_ceiling"]));
        out.push("a priori ceiling", h2 <= ceil, format!("{h2:e} <= {ceil:e}"));
    }
    if let Some(im) = rep.get("immersion").filter(|v| !v.is_null()) {
        let g = num(&im["geodesic_gauss_residual"]).max(num(&im["polar_gauss_residual"]));
        out.push("gauss identity", g <= 1e-10, format!("{g:e}"));
        let name = im["mesh"].as_str().unwrap_or("mesh.obj");
        let want = im["vertices"].as_u64().unwrap_or(0) as usize;
        let got = if name.ends_with(".obj") {
            let v = read_obj_vertices(&read(dir, name)?);
            (v.iter().all(|p| p.iter().all(|c| c.is_finite()))).then_some(v.len())
        } else {
            read(dir, name)?.lines().find_map(|l| l.strip_prefix("element vertex ").and_then(|n| n.trim().parse().ok()))
        };
        out.push("mesh vertices", got == Some(want), format!("{got:?} of {want}"));
        let stored: serde_json::Value = serde_json::from_str(&read(dir, "immersion.json")?).map_err(|e| Error::Io(e.to_string()))?;
        out.push("immersion report", stored == im["residuals"], "immersion.json matches report".into());
    }
    Ok(out)
}
