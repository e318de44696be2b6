//! Metric coefficients G (polar chart) and B (geodesic chart) and their Christoffel symbols.

use crate::chart::ChartMap;
use crate::curvature::CurvatureSpec;
use crate::error::{Error, Result};
use crate::numerics::grid::{Field2, Grid1};
use crate::numerics::interp::{hermite, hermite_slope};
use crate::numerics::ode::{rk4_span, rk4_step};
use crate::scalar::Scalar;
use rayon::prelude::*;
use serde::Serialize;

/// G and derived fields on a periodic θ-grid × ρ-grid (rows θ, columns ρ).
#[derive(Debug, Clone)]
pub struct PolarMetric<T> {
    pub theta_grid: Vec<T>,
    pub rho_grid: Grid1<T>,
    pub g: Field2<T>,
    pub dg_drho: Field2<T>,
    pub k_field: Field2<T>,
    /// ∂θⁱ log G, i = 1, 2, 3.
    pub dtheta_log_g: [Field2<T>; 3],
    /// ∂θⁱ ∂ρ log G, i = 1, 2, 3.
    pub dtheta_drho_log_g: [Field2<T>; 3],
    pub theta_independent: bool,
}

/// G, ∂ρG and the θ-derivatives at an arbitrary point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPoint<T> {
    pub g: T,
    pub dg: T,
    pub dtheta_log_g: T,
    pub dtheta_drho_log_g: T,
}

impl<T: Scalar> PolarPoint<T> {
    pub fn drho_log_g(&self) -> T {
        self.dg / self.g
    }
}

/// Uniform periodic θ nodes on [0, 2π).
pub fn periodic_theta<T: Scalar>(n: usize) -> Vec<T> {
    let h = T::PI() * T::lit(2.0) / T::from_usize_lossy(n);
    (0..n).map(|i| h * T::from_usize_lossy(i)).collect()
}

/// Integrates G″ = k²G per θ-ray from G(θ,0) = 0, ∂ρG(θ,0) = 1.
pub fn solve_polar_metric<T: Scalar>(
    spec: &CurvatureSpec<T>,
    theta_grid: &[T],
    rho_grid: &Grid1<T>,
    step: T,
) -> Result<PolarMetric<T>> {
    if rho_grid.first() != T::zero() {
        return Err(Error::InvalidParameter { name: "rho_grid".into(), reason: "must start at 0".into() });
    }
    if !(step > T::zero() && step <= rho_grid.min_spacing() / T::lit(4.0) * T::lit(1.0 + 1e-12)) {
        return Err(Error::InvalidParameter { name: "step".into(), reason: "must not exceed a quarter of the rho spacing".into() });
    }
    if theta_grid.len() < 4 {
        return Err(Error::GridTooCoarse("polar metric needs at least 4 theta nodes".into()));
    }
    let theta_independent = spec.is_theta_independent();
    let solve_ray = |theta: T| -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
        let n = rho_grid.len();
        let (mut g, mut dg, mut kf) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        let mut y = [T::zero(), T::one()];
        let mut rhs = |r: T, s: &[T; 2]| {
            let k = spec.k(theta, r);
            [s[1], k * k * s[0]]
        };
        for j in 0..n {
            let r = rho_grid.nodes[j];
            if j > 0 {
                y = rk4_span(&mut rhs, rho_grid.nodes[j - 1], r, &y, step);
            }
            let k = spec.k(theta, r);
            if !k.is_finite() {
                return Err(Error::NonFinite { what: "k".into(), a: theta.f64(), b: r.f64() });
            }
            if !(y[0].is_finite() && y[1].is_finite()) {
                return Err(Error::NonFinite { what: "G overflow".into(), a: theta.f64(), b: r.f64() });
            }
            g.push(y[0]);
            dg.push(y[1]);
            kf.push(k);
        }
        Ok((g, dg, kf))
    };
    let rays: Vec<(Vec<T>, Vec<T>, Vec<T>)> = if theta_independent {
        let ray = solve_ray(theta_grid[0])?;
        vec![ray; theta_grid.len()]
    } else {
        theta_grid.par_iter().map(|&th| solve_ray(th)).collect::<Result<Vec<_>>>()?
    };
    let g = Field2::from_rows(rays.iter().map(|r| r.0.clone()).collect());
    let dg = Field2::from_rows(rays.iter().map(|r| r.1.clone()).collect());
    let kf = Field2::from_rows(rays.iter().map(|r| r.2.clone()).collect());
    let log_g = Field2 {
        rows: g.rows,
        cols: g.cols,
        data: g.data.iter().enumerate().map(|(i, &v)| if i % g.cols == 0 { T::zero() } else { v.ln() }).collect(),
    };
    let drho_log_g = Field2 {
        rows: g.rows,
        cols: g.cols,
        data: g
            .data
            .iter()
            .zip(&dg.data)
            .enumerate()
            .map(|(i, (&a, &b))| if i % g.cols == 0 { T::zero() } else { b / a })
            .collect(),
    };
    let h = T::PI() * T::lit(2.0) / T::from_usize_lossy(theta_grid.len());
    Ok(PolarMetric {
        theta_grid: theta_grid.to_vec(),
        rho_grid: rho_grid.clone(),
        g,
        dg_drho: dg,
        k_field: kf,
        dtheta_log_g: periodic_derivatives(&log_g, h),
        dtheta_drho_log_g: periodic_derivatives(&drho_log_g, h),
        theta_independent,
    })
}

/// First three centered θ-derivatives with periodic wrap (rows are θ).
fn periodic_derivatives<T: Scalar>(f: &Field2<T>, h: T) -> [Field2<T>; 3] {
    let n = f.rows;
    let mut d = [Field2::zeros(f.rows, f.cols), Field2::zeros(f.rows, f.cols), Field2::zeros(f.rows, f.cols)];
    let two = T::lit(2.0);
    for i in 0..n {
        let (m2, m1, p1, p2) = ((i + n - 2) % n, (i + n - 1) % n, (i + 1) % n, (i + 2) % n);
        for j in 0..f.cols {
            let (a, b, c, e, g) = (f.get(m2, j), f.get(m1, j), f.get(i, j), f.get(p1, j), f.get(p2, j));
            d[0].set(i, j, (e - b) / (two * h));
            d[1].set(i, j, (e - two * c + b) / (h * h));
            d[2].set(i, j, (g - two * e + two * b - a) / (two * h * h * h));
        }
    }
    d
}

impl<T: Scalar> PolarMetric<T> {
    pub fn rho_max(&self) -> T {
        self.rho_grid.last()
    }

    fn theta_cell(&self, theta: T) -> (usize, usize, T) {
        let n = self.theta_grid.len();
        let two_pi = T::PI() * T::lit(2.0);
        let h = two_pi / T::from_usize_lossy(n);
        let mut th = theta % two_pi;
        if th < T::zero() {
            th = th + two_pi;
        }
        let x = th / h;
        let i = x.floor().to_usize().unwrap_or(0).min(n - 1);
        (i, (i + 1) % n, x - T::from_usize_lossy(i))
    }

    /// Interpolated G and derivatives; Hermite in ρ (using G″ = k²G), linear in θ.
    pub fn eval(&self, theta: T, rho: T) -> Result<PolarPoint<T>> {
        let (j, s) = self
            .rho_grid
            .locate(rho)
            .ok_or_else(|| Error::OutOfRange(format!("rho = {} outside polar metric [0, {}]", rho.f64(), self.rho_max().f64())))?;
        let (i0, i1, w) = if self.theta_independent { (0, 0, T::zero()) } else { self.theta_cell(theta) };
        let h = self.rho_grid.nodes[j + 1] - self.rho_grid.nodes[j];
        let ray = |i: usize| {
            let (g0, g1) = (self.g.get(i, j), self.g.get(i, j + 1));
            let (d0, d1) = (self.dg_drho.get(i, j), self.dg_drho.get(i, j + 1));
            let (k0, k1) = (self.k_field.get(i, j), self.k_field.get(i, j + 1));
            let g = hermite(g0, d0, g1, d1, h, s);
            let dg = hermite(d0, k0 * k0 * g0, d1, k1 * k1 * g1, h, s);
            (g, dg)
        };
        let (ga, da) = ray(i0);
        let (g, dg) = if w == T::zero() {
            (ga, da)
        } else {
            let (gb, db) = ray(i1);
            (ga + w * (gb - ga), da + w * (db - da))
        };
        let bil = |f: &Field2<T>| -> T {
            let a = f.get(i0, j) + s * (f.get(i0, j + 1) - f.get(i0, j));
            if w == T::zero() {
                return a;
            }
            let b = f.get(i1, j) + s * (f.get(i1, j + 1) - f.get(i1, j));
            a + w * (b - a)
        };
        Ok(PolarPoint { g, dg, dtheta_log_g: bil(&self.dtheta_log_g[0]), dtheta_drho_log_g: bil(&self.dtheta_drho_log_g[0]) })
    }

    /// ∂θⁱ log G and ∂θⁱ∂ρ log G for i = 1..3 (bilinear).
    pub fn theta_derivatives(&self, theta: T, rho: T) -> Result<([T; 3], [T; 3])> {
        let (j, s) = self.rho_grid.locate(rho).ok_or_else(|| Error::OutOfRange(format!("rho = {}", rho.f64())))?;
        let (i0, i1, w) = self.theta_cell(theta);
        let bil = |f: &Field2<T>| -> T {
            let a = f.get(i0, j) + s * (f.get(i0, j + 1) - f.get(i0, j));
            let b = f.get(i1, j) + s * (f.get(i1, j + 1) - f.get(i1, j));
            a + w * (b - a)
        };
        Ok((
            [bil(&self.dtheta_log_g[0]), bil(&self.dtheta_log_g[1]), bil(&self.dtheta_log_g[2])],
            [bil(&self.dtheta_drho_log_g[0]), bil(&self.dtheta_drho_log_g[1]), bil(&self.dtheta_drho_log_g[2])],
        ))
    }

    /// Slope of [`eval`]'s G in ρ from the Hermite interpolant (consistency helper).
    pub fn g_slope(&self, ray: usize, rho: T) -> Option<T> {
        let (j, s) = self.rho_grid.locate(rho)?;
        let h = self.rho_grid.nodes[j + 1] - self.rho_grid.nodes[j];
        Some(hermite_slope(self.g.get(ray, j), self.dg_drho.get(ray, j), self.g.get(ray, j + 1), self.dg_drho.get(ray, j + 1), h, s))
    }
}

/// B and derived fields on the geodesic grid (rows x, columns t).
#[derive(Debug, Clone)]
pub struct GeodesicMetric<T> {
    pub x_grid: Grid1<T>,
    pub t_grid: Grid1<T>,
    pub b: Field2<T>,
    pub db_dt: Field2<T>,
    pub db_dx: Field2<T>,
    pub kappa: Field2<T>,
}

/// Integrates B″ = κ²B per x-column from B = 1, B′ = 0 with κ read from the chart.
pub fn solve_geodesic_metric<T: Scalar>(
    spec: &CurvatureSpec<T>,
    chart: &ChartMap<T>,
    step: T,
) -> Result<GeodesicMetric<T>> {
    let kappa_fn = |j: usize, t: T| -> Result<T> {
        let (rho, theta) = chart.interpolate(j, t)?;
        Ok(spec.k(theta, rho))
    };
    geodesic_from_kappa(&chart.x_grid, &chart.t_grid, step, kappa_fn)
}

/// Same integration with κ supplied as a function of (column, t).
pub fn geodesic_from_kappa<T: Scalar>(
    x_grid: &Grid1<T>,
    t_grid: &Grid1<T>,
    step: T,
    kappa: impl Fn(usize, T) -> Result<T> + Sync,
) -> Result<GeodesicMetric<T>> {
    let nt = t_grid.len();
    let columns: Vec<(Vec<T>, Vec<T>, Vec<T>)> = (0..x_grid.len())
        .into_par_iter()
        .map(|j| -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
            let (mut b, mut bt, mut kap) = (Vec::with_capacity(nt), Vec::with_capacity(nt), Vec::with_capacity(nt));
            let mut y = [T::one(), T::zero()];
            for n in 0..nt {
                let t1 = t_grid.nodes[n];
                if n > 0 {
                    let t0 = t_grid.nodes[n - 1];
                    let m = ((t1 - t0) / step).ceil().to_usize().unwrap_or(1).max(1);
                    let dt = (t1 - t0) / T::from_usize_lossy(m);
                    let mut err = None;
                    let mut rhs = |t: T, s: &[T; 2]| {
                        let k = kappa(j, t).unwrap_or_else(|e| {
                            err = Some(e);
                            T::zero()
                        });
                        [s[1], k * k * s[0]]
                    };
                    for i in 0..m {
                        y = rk4_step(&mut rhs, t0 + dt * T::from_usize_lossy(i), &y, dt);
                    }
                    if let Some(e) = err {
                        return Err(e);
                    }
                }
                b.push(y[0]);
                bt.push(y[1]);
                kap.push(kappa(j, t1)?);
            }
            Ok((b, bt, kap))
        })
        .collect::<Result<Vec<_>>>()?;
    let b = Field2::from_rows(columns.iter().map(|c| c.0.clone()).collect());
    let db_dt = Field2::from_rows(columns.iter().map(|c| c.1.clone()).collect());
    let kappa = Field2::from_rows(columns.iter().map(|c| c.2.clone()).collect());
    let db_dx = x_difference(&b, x_grid);
    Ok(GeodesicMetric { x_grid: x_grid.clone(), t_grid: t_grid.clone(), b, db_dt, db_dx, kappa })
}

/// ∂x by centered differences across rows, one-sided at the ends.
pub fn x_difference<T: Scalar>(f: &Field2<T>, x: &Grid1<T>) -> Field2<T> {
    let mut d = Field2::zeros(f.rows, f.cols);
    let n = f.rows;
    if n < 2 {
        return d;
    }
    for i in 0..n {
        let (a, b) = if i == 0 { (0, 1) } else if i == n - 1 { (n - 2, n - 1) } else { (i - 1, i + 1) };
        let h = x.nodes[b] - x.nodes[a];
        for j in 0..f.cols {
            d.set(i, j, (f.get(b, j) - f.get(a, j)) / h);
        }
    }
    d
}

/// ∂t by centered differences along columns, one-sided at the ends.
pub fn t_difference<T: Scalar>(f: &Field2<T>, t: &Grid1<T>) -> Field2<T> {
    let mut d = Field2::zeros(f.rows, f.cols);
    let m = f.cols;
    if m < 2 {
        return d;
    }
    for i in 0..f.rows {
        for j in 0..m {
            let (a, b) = if j == 0 { (0, 1) } else if j == m - 1 { (m - 2, m - 1) } else { (j - 1, j + 1) };
            d.set(i, j, (f.get(i, b) - f.get(i, a)) / (t.nodes[b] - t.nodes[a]));
        }
    }
    d
}

impl<T: Scalar> GeodesicMetric<T> {
    /// Bilinear lookup of (B, ∂tB, ∂xB, κ) at a column index and t.
    pub fn at(&self, j: usize, t: T) -> Result<[T; 4]> {
        let (n, s) = self.t_grid.locate(t).ok_or_else(|| Error::OutOfRange(format!("t = {}", t.f64())))?;
        let lerp = |f: &Field2<T>| f.get(j, n) + s * (f.get(j, n + 1) - f.get(j, n));
        Ok([lerp(&self.b), lerp(&self.db_dt), lerp(&self.db_dx), lerp(&self.kappa)])
    }
}

/// The nonzero Christoffel symbols of both charts; all others vanish identically.
#[derive(Debug, Clone)]
pub struct ChristoffelField<T> {
    /// Polar: Γ¹₁₁ = ∂θ log G, Γ²₁₁ = −G∂ρG, Γ¹₁₂ = ∂ρ log G (rows θ, columns ρ).
    pub polar: [Field2<T>; 3],
    /// Geodesic: Γ¹₁₁ = ∂x log B, Γ²₁₁ = −B∂tB, Γ¹₁₂ = ∂t log B (rows x, columns t).
    pub geodesic: [Field2<T>; 3],
}

pub fn christoffels<T: Scalar>(polar: &PolarMetric<T>, geo: &GeodesicMetric<T>) -> Result<ChristoffelField<T>> {
    if geo.b.rows != geo.x_grid.len() || geo.b.cols != geo.t_grid.len() || polar.g.cols != polar.rho_grid.len() {
        return Err(Error::GridMismatch("metric fields do not match their grids".into()));
    }
    let p111 = polar.dtheta_log_g[0].clone();
    let mut p211 = Field2::zeros(polar.g.rows, polar.g.cols);
    let mut p112 = Field2::zeros(polar.g.rows, polar.g.cols);
    for idx in 0..polar.g.data.len() {
        let (g, dg) = (polar.g.data[idx], polar.dg_drho.data[idx]);
        p211.data[idx] = -g * dg;
        p112.data[idx] = if g > T::zero() { dg / g } else { T::infinity() };
    }
    let mut g111 = Field2::zeros(geo.b.rows, geo.b.cols);
    let mut g211 = Field2::zeros(geo.b.rows, geo.b.cols);
    let mut g112 = Field2::zeros(geo.b.rows, geo.b.cols);
    for idx in 0..geo.b.data.len() {
        let (b, bt, bx) = (geo.b.data[idx], geo.db_dt.data[idx], geo.db_dx.data[idx]);
        g111.data[idx] = bx / b;
        g211.data[idx] = -b * bt;
        g112.data[idx] = bt / b;
    }
    Ok(ChristoffelField { polar: [p111, p211, p112], geodesic: [g111, g211, g112] })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricBoundReport {
    /// min over samples of G − ρ (≥ 0 expected).
    pub lower_g_margin: f64,
    /// min of ρ·exp(I) − G with I = max_θ ∫₀^{ρ_max} sk² ds.
    pub upper_g_margin: f64,
    /// min of ∂ρG − 1.
    pub lower_dg_margin: f64,
    /// min of exp(I) − ∂ρG.
    pub upper_dg_margin: f64,
    /// min over ρ > 0 of ∂ρG/G − 1/ρ.
    pub log_derivative_margin: f64,
    /// ∫₁^{ρ_max} max_θ |∂ρG/G − 1/ρ| dρ.
    pub log_derivative_excess_integral: f64,
    pub max_theta_log_g: [f64; 3],
    pub max_g_theta_drho_log_g: [f64; 3],
    pub g_strictly_increasing: bool,
    pub curvature_integral: f64,
    pub violations: usize,
}

/// Worst-case margins of the metric lemma's bounds on the sampled field.
pub fn verify_metric_bounds<T: Scalar>(polar: &PolarMetric<T>) -> MetricBoundReport {
    let rho: Vec<f64> = polar.rho_grid.nodes.iter().map(|v| v.f64()).collect();
    let nr = rho.len();
    let nth = polar.g.rows;
    let mut integral = 0.0f64;
    for i in 0..nth {
        let mut acc = 0.0;
        for j in 1..nr {
            let f = |jj: usize| rho[jj] * polar.k_field.get(i, jj).f64().powi(2);
            acc += 0.5 * (rho[j] - rho[j - 1]) * (f(j) + f(j - 1));
        }
        integral = integral.max(acc);
    }
    let cap = integral.exp();
    let mut r = MetricBoundReport {
        lower_g_margin: f64::INFINITY,
        upper_g_margin: f64::INFINITY,
        lower_dg_margin: f64::INFINITY,
        upper_dg_margin: f64::INFINITY,
        log_derivative_margin: f64::INFINITY,
        log_derivative_excess_integral: 0.0,
        max_theta_log_g: [0.0; 3],
        max_g_theta_drho_log_g: [0.0; 3],
        g_strictly_increasing: true,
        curvature_integral: integral,
        violations: 0,
    };
    let tol = 1e-9;
    let mut excess = vec![0.0f64; nr];
    for i in 0..nth {
        for j in 0..nr {
            let (g, dg) = (polar.g.get(i, j).f64(), polar.dg_drho.get(i, j).f64());
            let lg = g - rho[j];
            let ug = rho[j] * cap - g;
            r.lower_g_margin = r.lower_g_margin.min(lg);
            r.upper_g_margin = r.upper_g_margin.min(ug);
            r.lower_dg_margin = r.lower_dg_margin.min(dg - 1.0);
            r.upper_dg_margin = r.upper_dg_margin.min(cap - dg);
            let scale = 1.0 + g.abs();
            if lg < -tol * scale || ug < -tol * scale * cap || dg - 1.0 < -tol || cap - dg < -tol * cap {
                r.violations += 1;
            }
            if j > 0 {
                if g <= polar.g.get(i, j - 1).f64() {
                    r.g_strictly_increasing = false;
                }
                let m = dg / g - 1.0 / rho[j];
                r.log_derivative_margin = r.log_derivative_margin.min(m);
                if m < -tol / rho[j] {
                    r.violations += 1;
                }
                excess[j] = excess[j].max(m.abs());
            }
            if rho[j] >= 1.0 {
                for d in 0..3 {
                    r.max_theta_log_g[d] = r.max_theta_log_g[d].max(polar.dtheta_log_g[d].get(i, j).f64().abs());
                    r.max_g_theta_drho_log_g[d] =
                        r.max_g_theta_drho_log_g[d].max((g * polar.dtheta_drho_log_g[d].get(i, j).f64()).abs());
                }
            }
        }
    }
    for j in 1..nr {
        if rho[j - 1] >= 1.0 {
            r.log_derivative_excess_integral += 0.5 * (rho[j] - rho[j - 1]) * (excess[j] + excess[j - 1]);
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::{CurvatureSpec, FamilyTag};

    fn constant(k: f64) -> CurvatureSpec<f64> {
        CurvatureSpec::new(FamilyTag::Constant { k }, 0.5, None).unwrap()
    }

    #[test]
    fn flat_metric_is_identity() {
        let grid = Grid1::uniform(0.0, 4.0, 81);
        let m = solve_polar_metric(&constant(0.0), &periodic_theta(8), &grid, 0.01).unwrap();
        for j in 0..grid.len() {
            assert!((m.g.get(3, j) - grid.nodes[j]).abs() < 1e-12);
            assert!((m.dg_drho.get(3, j) - 1.0).abs() < 1e-14);
        }
        let r = verify_metric_bounds(&m);
        assert!(r.log_derivative_margin.abs() < 1e-12);
    }

    #[test]
    fn hermite_lookup_follows_sinh() {
        let grid = Grid1::uniform(0.0, 5.0, 101);
        let m = solve_polar_metric(&constant(1.0), &periodic_theta(8), &grid, 1e-3).unwrap();
        for &r in &[0.013, 1.2345, 4.99] {
            let p = m.eval(0.3, r).unwrap();
            assert!((p.g / r.sinh() - 1.0).abs() < 1e-7);
            assert!((p.dg / r.cosh() - 1.0).abs() < 1e-7);
        }
        assert!(m.eval(0.0, 5.5).is_err());
    }

    #[test]
    fn step_larger_than_quarter_spacing_rejected() {
        let grid = Grid1::uniform(0.0, 1.0, 11);
        assert!(solve_polar_metric(&constant(1.0), &periodic_theta(8), &grid, 0.05).is_err());
    }

    #[test]
    fn theta_derivatives_of_periodic_profile() {
        // G depends on θ through a = exp(ε cos θ); compare the stored ∂θ log G to differences of
        // independently solved rays.
        let spec = CurvatureSpec::new(FamilyTag::PurePower { eta: 0.1, scale: 1.0, theta_amp: 0.2 }, 0.5, None).unwrap();
        let grid = Grid1::uniform(0.0, 6.0, 121);
        let n = 64;
        let m: PolarMetric<f64> = solve_polar_metric(&spec, &periodic_theta(n), &grid, 0.0125).unwrap();
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let j = 100;
        for i in [0usize, 7, 31] {
            let fd: f64 = (m.g.get((i + 1) % n, j).ln() - m.g.get((i + n - 1) % n, j).ln()) / (2.0 * h);
            assert!((m.dtheta_log_g[0].get(i, j) - fd).abs() < 1e-14);
        }
        assert!(m.dtheta_log_g[0].max_abs() > 1e-3);
    }
}
