use negcurve::curvature::{make_family, CurvatureSpec};
use negcurve::immersion::{integrate_frame, AnalyticFields, FrameCoeffs, ImmersionOptions};
use negcurve::metric::{periodic_theta, solve_polar_metric};
use negcurve::numerics::grid::Grid1;
use std::collections::BTreeMap;

#[test]
fn polar_metric_in_single_precision() {
    let p = BTreeMap::from([("k".to_string(), 1.0)]);
    let spec: CurvatureSpec<f32> = make_family("constant", &p).unwrap();
    let polar = solve_polar_metric::<f32>(&spec, &periodic_theta(4), &Grid1::uniform(0.0, 3.0, 301), 2e-3).unwrap();
    for (j, &r) in polar.rho_grid.nodes.iter().enumerate().skip(1) {
        let rel = (polar.g.get(0, j) - r.sinh()).abs() / r.sinh();
        assert!(rel < 1e-4, "rho {r}: {rel}");
    }
}

#[test]
fn single_and_double_precision_cylinders_agree() {
    let nodes64: Vec<f64> = (0..11).map(|i| 0.1 * i as f64).collect();
    let nodes32: Vec<f32> = nodes64.iter().map(|&x| x as f32).collect();
    let opts = ImmersionOptions { step: 1e-2, drift_tol: 1e-3, ..Default::default() };
    let m64 = integrate_frame(
        &AnalyticFields(|_x: f64, _t: f64| FrameCoeffs { b: 1.0, dx_log_b: 0.0, dt_b: 0.0, l: 1.0, m: 0.0, n: 0.0 }),
        &nodes64,
        &nodes64,
        &opts,
    )
    .unwrap();
    let m32 = integrate_frame(
        &AnalyticFields(|_x: f32, _t: f32| FrameCoeffs { b: 1.0, dx_log_b: 0.0, dt_b: 0.0, l: 1.0, m: 0.0, n: 0.0 }),
        &nodes32,
        &nodes32,
        &opts,
    )
    .unwrap();
    for (a, b) in m64.frames.iter().zip(&m32.frames) {
        for c in 0..3 {
            assert!((a[c] - b[c] as f64).abs() < 1e-5);
        }
    }
}
