//! Acceptance gate: one PASS/FAIL line per criterion.

use negcurve::chart::build_chart;
use negcurve::config::RunConfig;
use negcurve::curvature::{check_admissibility, make_family, SampleGrid, Tolerances};
use negcurve::immersion::{
    codazzi_residual, integrate_frame, verify_immersion, AnalyticFields, ChartId, CodazziCoefficients, FrameCoeffs,
    FundamentalForm, ImmersionOptions,
};
use negcurve::inner::Regime;
use negcurve::metric::{periodic_theta, solve_polar_metric};
use negcurve::numerics::grid::{Field2, Grid1};
use negcurve::oracle::{ClosedForm, RadialMetric};
use negcurve::pipeline::{build_spec, radial_outer, radial_polar, run_pipeline, Artifacts, PipelineReport, RadialOuterReport, RadialSetup, Stage};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

type Outcome = (bool, String);

fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn order(coarse: f64, fine: f64, levels: f64) -> f64 {
    (coarse / fine).log2() / levels
}

fn criterion_1() -> Outcome {
    let spec = make_family::<f64>("constant", &params(&[("k", 1.0)])).unwrap();
    let start = Instant::now();
    let polar = solve_polar_metric(&spec, &periodic_theta(4), &Grid1::uniform(0.0, 5.0, 501), 1e-3).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut worst = 0.0f64;
    for i in 0..4 {
        for (j, &r) in polar.rho_grid.nodes.iter().enumerate().skip(1) {
            worst = worst.max((polar.g.get(i, j) - r.sinh()).abs() / r.sinh());
        }
    }
    (worst <= 1e-8 && secs < 1.0, format!("max rel error {worst:.2e}, {secs:.3}s"))
}

fn criterion_2() -> Outcome {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut xs: Vec<f64> = (0..11).map(|i| -3.0 + 0.25 * i as f64).collect();
    xs.extend((0..11).map(|i| 0.5 + 0.25 * i as f64));
    let xg = Grid1::from_nodes(xs);
    let tg = Grid1::uniform(0.0, 5.0, 51);

    let flat = make_family::<f64>("constant", &params(&[("k", 0.0)])).unwrap();
    let polar = solve_polar_metric(&flat, &periodic_theta(8), &Grid1::uniform(0.0, 8.0, 801), 2.5e-3).unwrap();
    let chart = build_chart(&polar, &flat, &xg, &tg, 5e-3, 1e-3).unwrap();
    let mut flat_err = 0.0f64;
    for (j, &x) in xg.nodes.iter().enumerate() {
        for (n, &t) in tg.nodes.iter().enumerate() {
            let rho = x.hypot(t);
            let th = t.atan2(x).rem_euclid(two_pi);
            let dth = (chart.theta.get(j, n).rem_euclid(two_pi) - th).abs();
            flat_err = flat_err
                .max((chart.rho.get(j, n) - rho).abs())
                .max(dth.min(two_pi - dth))
                .max((chart.tanh_phi.get(j, n) - t / rho).abs());
        }
    }

    let hyp = make_family::<f64>("constant", &params(&[("k", 1.0)])).unwrap();
    let polar = solve_polar_metric(&hyp, &periodic_theta(8), &Grid1::uniform(0.0, 10.0, 1001), 2.5e-3).unwrap();
    let chart = build_chart(&polar, &hyp, &xg, &tg, 5e-3, 1e-3).unwrap();
    let mut hyp_err = 0.0f64;
    for (j, &x) in xg.nodes.iter().enumerate() {
        for (n, &t) in tg.nodes.iter().enumerate() {
            let rho = (x.cosh() * t.cosh()).acosh();
            hyp_err = hyp_err.max((chart.rho.get(j, n) - rho).abs());
        }
    }
    (flat_err <= 1e-6 && hyp_err <= 1e-6, format!("flat {flat_err:.2e}, hyperbolic {hyp_err:.2e}"))
}

struct Radial {
    label: &'static str,
    errors: Vec<f64>,
    secs: f64,
    fine: RadialOuterReport,
}

fn radial_runs() -> Vec<Radial> {
    let mut out = Vec::new();
    for (label, family, p, regime) in [
        ("increasing", "log_power", params(&[("gamma0", 1.0)]), Regime::Increasing),
        ("decreasing", "pure_power", params(&[("eta", 0.1)]), Regime::Decreasing),
    ] {
        let start = Instant::now();
        let spec = make_family::<f64>(family, &p).unwrap();
        let base = RadialSetup::default();
        let polar = radial_polar(&spec, &base).unwrap();
        let rm = RadialMetric::from_spec(&spec, 1.5 * base.rho_end, base.metric_step).unwrap();
        let closed = ClosedForm::new(rm, regime, base.r, base.u0, base.v0).unwrap();
        let mut errors = Vec::new();
        let mut fine = None;
        for n in [64usize, 128, 256] {
            let setup = RadialSetup { n_sigma: n, max_step: 0.05 * 64.0 / n as f64, ..base.clone() };
            let rep = radial_outer(&spec, &polar, &closed, regime, &setup).unwrap();
            errors.push(rep.rel_error);
            fine = Some(rep);
        }
        out.push(Radial { label, errors, secs: start.elapsed().as_secs_f64(), fine: fine.unwrap() });
    }
    out
}

fn criterion_3(runs: &[Radial]) -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for r in runs {
        let p = order(r.errors[0], r.errors[2], 2.0);
        ok &= r.errors[2] <= 2e-3 && p >= 0.8 && r.secs < 30.0 && r.fine.abort.is_none();
        detail.push(format!("{}: err {:.2e} at rho {}, order {p:.2}, {:.1}s", r.label, r.errors[2], r.fine.rho, r.secs));
    }
    (ok, detail.join("; "))
}

struct PipelineRun {
    report: PipelineReport,
    trace: Vec<[f64; 9]>,
}

fn pipeline(cfg: &RunConfig, dir: &Path) -> PipelineRun {
    let report = run_pipeline(cfg, Stage::Immerse, &Artifacts::new(Some(dir)).unwrap());
    let text = std::fs::read_to_string(dir.join("energy_trace.csv")).unwrap_or_default();
    let trace = text
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
            std::array::from_fn(|i| v[i])
        })
        .collect();
    PipelineRun { report, trace }
}

fn criterion_4(runs: &[&PipelineRun], radial: &[Radial]) -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for r in runs {
        match &r.report.outer {
            Some(o) if r.report.abort.is_none() => {
                let min_v = r.trace.iter().map(|x| x[7]).fold(f64::INFINITY, f64::min);
                ok &= min_v > 0.0 && o.positivity.positive && o.positivity.worst_margin >= 0.0;
                detail.push(format!("{:?}: min v {min_v:.1e}, margin {:.2e}", o.regime, o.positivity.worst_margin));
            }
            _ => {
                ok = false;
                detail.push(format!("{} aborted: {:?}", r.report.family, r.report.abort));
            }
        }
    }
    for r in radial {
        ok &= r.fine.positivity_margin >= 0.0;
        detail.push(format!("radial {}: margin {:.2e}", r.label, r.fine.positivity_margin));
    }
    (ok, detail.join("; "))
}

fn criterion_5() -> Outcome {
    let check = |family: &str, p: BTreeMap<String, f64>| {
        let spec = make_family::<f64>(family, &p).unwrap();
        check_admissibility(&spec, &SampleGrid::for_spec(&spec), &Tolerances::default()).unwrap()
    };
    let log = check("log_power", params(&[("gamma0", 1.0)]));
    let expected = 1.0 / (2.0 * 2f64.ln().powi(2));
    let rel = log.total_decay_curvature.map_or(f64::INFINITY, |v| (v - expected).abs() / expected);
    let hyp = check("constant", params(&[("k", 1.0)]));
    let hyp_ok = !hyp.admissible && hyp.failure_reasons.iter().any(|r| r == "infinite total curvature");
    let osc = check("oscillating_log_power", params(&[]));
    let f = &osc.condition_flags;
    let osc_ok = osc.admissible && f.integrable_decay && f.monotone_kbar && f.oscillation_bounded && f.oscillation_bv;
    (
        rel <= 1e-6 && hyp_ok && osc_ok,
        format!("log_power rel {rel:.1e}; constant rejected {hyp_ok} ({:?}); oscillating flags {osc_ok}", hyp.failure_reasons),
    )
}

fn criterion_6(inc: &PipelineRun, dec: &PipelineRun, cfg_inc: &RunConfig) -> Outcome {
    let (Some(oi), Some(od)) = (&inc.report.outer, &dec.report.outer) else {
        return (false, "pipeline run missing".into());
    };
    let spec = build_spec(cfg_inc).unwrap();
    let delta = spec.delta;
    // decreasing: log-log slope of ‖(u,v)‖₀
    let slope = od.decay.fitted_exponent;
    let dec_ok = slope <= -delta_of(&dec.report) / 2.0 + 0.1;
    // increasing: ‖v‖₀, ‖v‖₁ under 2Θε and not growing; ‖u‖₀ inside the envelope fitted near the start
    let rows = &inc.trace;
    let half = rows.len() / 2;
    let vmax = |r: &[[f64; 9]], c: usize| r.iter().map(|x| x[c]).fold(0.0, f64::max);
    let v_ok = [4usize, 5].iter().all(|&c| vmax(rows, c) <= oi.decay.v_ceiling && vmax(&rows[half..], c) <= 2.0 * vmax(&rows[..half], c));
    let env = |rho: f64| rho * spec.decay_factor(rho) + rho.powf(-delta / 2.0);
    let r1 = rows[0][0];
    let fit = rows.iter().filter(|x| x[0] <= 2.0 * r1).map(|x| x[1] / env(x[0])).fold(0.0, f64::max);
    let worst = rows.iter().map(|x| x[1] / (fit * env(x[0]))).fold(0.0, f64::max);
    let u_ok = worst <= 2.0;
    // per-slice ‖(u,v)‖₂ against A₀ε
    let ceil_ok = [&oi.decay, &od.decay].iter().all(|d| d.h2_max <= d.h2_ceiling);
    (
        dec_ok && v_ok && u_ok && ceil_ok,
        format!(
            "decreasing slope {slope:.3} (bound {:.3}); increasing |v|0,|v|1 max {:.3},{:.3} ceiling {:.2e}; |u|0 / fitted envelope {worst:.2}; h2 {:.2e} / {:.2e}",
            -delta_of(&dec.report) / 2.0 + 0.1,
            vmax(rows, 4),
            vmax(rows, 5),
            oi.decay.v_ceiling,
            oi.decay.h2_max.max(od.decay.h2_max),
            oi.decay.h2_ceiling.min(od.decay.h2_ceiling)
        ),
    )
}

fn delta_of(rep: &PipelineReport) -> f64 {
    -2.0 * rep.outer.as_ref().map_or(f64::NAN, |o| o.decay.paper_exponent)
}

fn criterion_7(runs: &[&PipelineRun], radial: &[Radial]) -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for r in runs {
        match &r.report.outer {
            Some(o) => {
                ok &= o.gronwall.conclusion_holds && o.gronwall.worst_margin >= 0.0;
                detail.push(format!("{:?}: margin {:.2e}", o.regime, o.gronwall.worst_margin));
            }
            None => ok = false,
        }
    }
    for r in radial {
        ok &= r.fine.gronwall_margin >= 0.0;
        detail.push(format!("radial {}: margin {:.2e}", r.label, r.fine.gronwall_margin));
    }
    (ok, detail.join("; "))
}

/// Codazzi residual on B = cosh t against its closed form for a prescribed (L, M, N).
fn manufactured_codazzi(n: usize) -> f64 {
    let (xa, xb, tb) = (-1.0, 1.0, 1.0);
    let xs: Vec<f64> = (0..n).map(|i| xa + (xb - xa) * i as f64 / (n - 1) as f64).collect();
    let ts: Vec<f64> = (0..n).map(|k| tb * k as f64 / (n - 1) as f64).collect();
    let l = |x: f64, t: f64| 2.0 + x.sin() * t.cos();
    let m = |x: f64, t: f64| 0.5 * (x + t).sin();
    let nn = |x: f64, t: f64| 0.3 * x.cos() * (-t).exp();
    let mut form = FundamentalForm {
        chart: ChartId::Geodesic,
        a: Field2::zeros(n, n),
        b: ts.clone(),
        l: Field2::zeros(n, n),
        m: Field2::zeros(n, n),
        n: Field2::zeros(n, n),
        gauss_residual: Field2::zeros(n, n),
    };
    let mut coef = CodazziCoefficients { g111: Field2::zeros(n, n), h_hb: Field2::zeros(n, n), g112: Field2::zeros(n, n) };
    for i in 0..n {
        for k in 0..n {
            let (x, t) = (xs[i], ts[k]);
            form.a.set(i, k, x);
            form.l.set(i, k, l(x, t));
            form.m.set(i, k, m(x, t));
            form.n.set(i, k, nn(x, t));
            coef.h_hb.set(i, k, t.cosh() * t.sinh());
            coef.g112.set(i, k, t.tanh());
        }
    }
    let res = codazzi_residual(&form, &coef);
    let (dx, dt) = (xs[1] - xs[0], ts[1] - ts[0]);
    let mut err = 0.0;
    for i in 1..n - 1 {
        for k in 1..n - 1 {
            let (x, t) = (xs[i], ts[k]);
            let r1 = -x.sin() * t.sin() - 0.5 * (x + t).cos() - (l(x, t) * t.tanh() + nn(x, t) * t.cosh() * t.sinh());
            let r2 = 0.5 * (x + t).cos() + 0.3 * x.sin() * (-t).exp() + m(x, t) * t.tanh();
            err += ((res[0].get(i, k) - r1).abs() + (res[1].get(i, k) - r2).abs()) * dx * dt;
        }
    }
    err
}

fn criterion_8(levels: &[&PipelineRun]) -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();

    let gauss = levels
        .iter()
        .filter_map(|r| r.report.immersion.as_ref())
        .map(|i| i.geodesic_gauss_residual.max(i.polar_gauss_residual))
        .fold(0.0, f64::max);
    ok &= gauss <= 1e-10 && levels.iter().all(|r| r.report.immersion.is_some());
    detail.push(format!("gauss {gauss:.1e}"));

    let m: Vec<f64> = [16, 32, 64].iter().map(|&n| manufactured_codazzi(n)).collect();
    let mo = order(m[0], m[2], 2.0);
    ok &= mo >= 0.8;
    detail.push(format!("codazzi L1 order {mo:.2} (manufactured)"));

    let opts = ImmersionOptions::default();
    let plane = AnalyticFields(|_x: f64, _t: f64| FrameCoeffs { b: 1.0, dx_log_b: 0.0, dt_b: 0.0, l: 0.0, m: 0.0, n: 0.0 });
    let cyl = AnalyticFields(|_x: f64, _t: f64| FrameCoeffs { b: 1.0, dx_log_b: 0.0, dt_b: 0.0, l: 1.0, m: 0.0, n: 0.0 });
    let nodes: Vec<f64> = (0..41).map(|i| i as f64 * 0.05).collect();
    let mut pe = 0.0f64;
    let mut ce = 0.0f64;
    let pm = integrate_frame(&plane, &nodes, &nodes, &opts).unwrap();
    let cm = integrate_frame(&cyl, &nodes, &nodes, &opts).unwrap();
    for (i, &x) in nodes.iter().enumerate() {
        for (k, &t) in nodes.iter().enumerate() {
            let (p, c) = (pm.vertex(i, k), cm.vertex(i, k));
            let (px, cx) = ([x, t, 0.0], [x.sin(), t, 1.0 - x.cos()]);
            for j in 0..3 {
                pe = pe.max((p[j] - px[j]).abs());
                ce = ce.max((c[j] - cx[j]).abs());
            }
        }
    }
    let cyl_ii = verify_immersion(&cm, &cyl, &opts).unwrap().ii_inf;
    ok &= pe <= 1e-8 && ce <= 1e-8 && cyl_ii <= 1e-6;
    detail.push(format!("plane {pe:.1e}, cylinder {ce:.1e} (II {cyl_ii:.1e})"));

    let ims: Vec<_> = levels.iter().filter_map(|r| r.report.immersion.as_ref()).collect();
    if ims.len() == levels.len() {
        let metric: Vec<f64> = ims.iter().map(|i| i.residuals.metric_inf).collect();
        let comm: Vec<f64> = ims.iter().map(|i| i.residuals.commutator_inf).collect();
        let cod: Vec<f64> = ims.iter().map(|i| i.geodesic_codazzi_l1).collect();
        let ratios: Vec<f64> = comm.iter().zip(&cod).map(|(c, d)| c / d).collect();
        let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let n = metric.len() - 1;
        let mo = order(metric[0], metric[n], n as f64);
        ok &= mo >= 0.8 && spread <= 2.0;
        detail.push(format!(
            "pipeline metric {:?} order {mo:.2}; commutator/codazzi {:?} (spread {spread:.2}); pipeline codazzi L1 order {:.2}",
            metric.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>(),
            ratios.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>(),
            order(cod[0], cod[n], n as f64)
        ));
    } else {
        ok = false;
        detail.push("pipeline immersion missing".into());
    }
    (ok, detail.join("; "))
}

fn criterion_9(radial: &[Radial]) -> Outcome {
    let ok = radial.iter().all(|r| r.fine.c_ratio_cv <= 1e-3);
    let detail = radial.iter().map(|r| format!("{}: cv {:.2e}", r.label, r.fine.c_ratio_cv)).collect::<Vec<_>>().join("; ");
    (ok, detail)
}

fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in &names {
        let (x, y) = (std::fs::read(a.join(n)).map_err(|e| e.to_string())?, std::fs::read(b.join(n)).map_err(|e| e.to_string())?);
        if x != y {
            return Err(format!("{} differs", n.to_string_lossy()));
        }
    }
    let other = std::fs::read_dir(b).map_err(|e| e.to_string())?.count();
    if other != names.len() {
        return Err("file sets differ".into());
    }
    Ok(names.len())
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |s: &str| tmp.path().join(s);
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();

    results.push((1, "metric oracle", criterion_1()));
    results.push((2, "chart oracle", criterion_2()));
    let radial = radial_runs();
    results.push((3, "radial equivalence", criterion_3(&radial)));

    let inc_cfg = RunConfig::default();
    let mut dec_cfg = RunConfig::default();
    dec_cfg.curvature.family = "pure_power".into();
    dec_cfg.curvature.params = params(&[("eta", 0.1)]);
    let inc = pipeline(&inc_cfg, &dir("inc"));
    let again = pipeline(&inc_cfg, &dir("inc_again"));
    let dec = pipeline(&dec_cfg, &dir("dec"));
    let mut fine = Vec::new();
    for (nx, nt) in [(192usize, 1000usize), (384, 2000)] {
        let mut c = inc_cfg.clone();
        c.grids.n_x = nx;
        c.grids.n_t = nt;
        fine.push(pipeline(&c, &dir(&format!("inc_{nx}"))));
    }

    results.push((4, "positivity", criterion_4(&[&inc, &dec], &radial)));
    results.push((5, "admissibility gate", criterion_5()));
    results.push((6, "decay shapes", criterion_6(&inc, &dec, &inc_cfg)));
    results.push((7, "gronwall", criterion_7(&[&inc, &dec], &radial)));
    results.push((8, "reconstruction", criterion_8(&[&inc, &fine[0], &fine[1]])));
    results.push((9, "radial conservation", criterion_9(&radial)));
    let det = match same_tree(&dir("inc"), &dir("inc_again")) {
        Ok(n) => (again.report.abort.is_none(), format!("{n} artifacts bitwise identical")),
        Err(e) => (false, e),
    };
    results.push((10, "determinism", det));

    let mut failed = 0;
    for (n, name, (ok, detail)) in &results {
        println!("{} criterion {n} ({name}): {detail}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
