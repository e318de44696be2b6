//! Second fundamental form from the Riemann invariants, Gauss–Codazzi residuals, frame
//! integration to a surface in ℝ³, and mesh export.

use crate::curvature::CurvatureSpec;
use crate::error::{Error, Result};
use crate::inner::{InnerState, Regime};
use crate::metric::{GeodesicMetric, PolarMetric};
use crate::numerics::grid::Field2;
use crate::numerics::ode::rk4_step;
use crate::outer::OuterState;
use crate::scalar::Scalar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartId {
    Geodesic,
    Polar,
}

/// (L, M, N) for metric H²da² + db² on a logically rectangular node set (rows a, columns b).
/// `a` holds the first coordinate per node, so moving slices are allowed.
#[derive(Debug, Clone)]
pub struct FundamentalForm<T> {
    pub chart: ChartId,
    pub a: Field2<T>,
    pub b: Vec<T>,
    pub l: Field2<T>,
    pub m: Field2<T>,
    pub n: Field2<T>,
    /// (LN − M² + H²κ²) over |LN| + M² + H²κ².
    pub gauss_residual: Field2<T>,
}

/// (L, M, N) = Hκ/(s − r)·(2, −(s + r), 2rs) for invariants r < s.
pub fn form_from_invariants<T: Scalar>(h: T, kappa: T, r: T, s: T) -> (T, T, T) {
    let hk = h * kappa / (s - r);
    (T::lit(2.0) * hk, -(s + r) * hk, T::lit(2.0) * r * s * hk)
}

/// LN − M² + (Hκ)² relative to the size of the terms it combines; when v ≪ |u| both LN and M²
/// dwarf (Hκ)² and only this scale is meaningful.
fn gauss_relative<T: Scalar>(l: T, m: T, n: T, hk: T) -> T {
    let target = hk * hk;
    let scale = target + (l * n).abs() + m * m;
    if scale == T::zero() {
        return T::zero();
    }
    (l * n - m * m + target) / scale
}

/// Geodesic-chart form on rows `xs` and columns `ts` of the inner grid, with r = p/B, s = q/B.
pub fn geodesic_form<T: Scalar>(
    inner: &InnerState<T>,
    geo: &GeodesicMetric<T>,
    xs: std::ops::Range<usize>,
    ts: std::ops::Range<usize>,
) -> Result<FundamentalForm<T>> {
    let (nr, nc) = (xs.len(), ts.len());
    if nr < 3 || nc < 3 || xs.end > inner.x_grid.len() || ts.end > inner.t_grid.len() {
        return Err(Error::GridMismatch("patch needs at least 3×3 nodes inside the inner grid".into()));
    }
    let mut f = empty_form(ChartId::Geodesic, nr, nc);
    for (i, j) in xs.clone().enumerate() {
        for (c, n) in ts.clone().enumerate() {
            let (p, q) = (inner.p.get(j, n), inner.q.get(j, n));
            if !(q > p) {
                return Err(Error::NonStrictHyperbolicity { index: j * inner.t_grid.len() + n });
            }
            let b = geo.b.get(j, n);
            let k = geo.kappa.get(j, n);
            let (l, m, nn) = form_from_invariants(b, k, p / b, q / b);
            f.a.set(i, c, inner.x_grid.nodes[j]);
            f.l.set(i, c, l);
            f.m.set(i, c, m);
            f.n.set(i, c, nn);
            f.gauss_residual.set(i, c, gauss_relative(l, m, nn, b * k));
        }
    }
    f.b = ts.map(|n| inner.t_grid.nodes[n]).collect();
    Ok(f)
}

fn empty_form<T: Scalar>(chart: ChartId, nr: usize, nc: usize) -> FundamentalForm<T> {
    FundamentalForm {
        chart,
        a: Field2::zeros(nr, nc),
        b: Vec::with_capacity(nc),
        l: Field2::zeros(nr, nc),
        m: Field2::zeros(nr, nc),
        n: Field2::zeros(nr, nc),
        gauss_residual: Field2::zeros(nr, nc),
    }
}

/// Polar-chart form on the outer slices: z − w = G^{−α}k^β v and z + w = G^{−α}k^β u, so
/// L̃ = 2G^{1+α}k^{1−β}/v, M̃ = −Gk u/v, Ñ = G^{1−α}k^{1+β}(u² − v²)/(2v).
pub fn polar_form<T: Scalar>(
    state: &OuterState<T>,
    polar: &PolarMetric<T>,
    spec: &CurvatureSpec<T>,
    regime: Regime,
) -> Result<FundamentalForm<T>> {
    let nc = state.slices.len();
    let nr = state.sigma.len();
    if nc < 3 || nr < 3 {
        return Err(Error::GridMismatch("need at least 3 slices of 3 nodes".into()));
    }
    let (alpha, beta): (T, T) = regime.exponents();
    let mut f = empty_form(ChartId::Polar, nr, nc);
    for (c, s) in state.slices.iter().enumerate() {
        for i in 0..nr {
            let th = s.theta(i);
            let (u, v) = (s.u[i], s.v[i]);
            if !(v > T::zero()) {
                return Err(Error::NonStrictHyperbolicity { index: c * nr + i });
            }
            let g = polar.eval(th, s.rho)?.g;
            let k = spec.k(th, s.rho);
            let two = T::lit(2.0);
            let l = two * g.powf(T::one() + alpha) * k.powf(T::one() - beta) / v;
            let m = -g * k * u / v;
            let n = g.powf(T::one() - alpha) * k.powf(T::one() + beta) * (u * u - v * v) / (two * v);
            f.a.set(i, c, th);
            f.l.set(i, c, l);
            f.m.set(i, c, m);
            f.n.set(i, c, n);
            f.gauss_residual.set(i, c, gauss_relative(l, m, n, g * k));
        }
        f.b.push(s.rho);
    }
    Ok(f)
}

/// Christoffel data at the form's nodes: Γ¹₁₁ = ∂a log H, HH_b = −Γ²₁₁, Γ¹₁₂ = ∂b log H.
#[derive(Debug, Clone)]
pub struct CodazziCoefficients<T> {
    pub g111: Field2<T>,
    pub h_hb: Field2<T>,
    pub g112: Field2<T>,
}

/// Coefficients for a geodesic form cut from rows `xs`, columns `ts`.
pub fn geodesic_coefficients<T: Scalar>(
    geo: &GeodesicMetric<T>,
    xs: std::ops::Range<usize>,
    ts: std::ops::Range<usize>,
) -> CodazziCoefficients<T> {
    let (nr, nc) = (xs.len(), ts.len());
    let mut c = CodazziCoefficients { g111: Field2::zeros(nr, nc), h_hb: Field2::zeros(nr, nc), g112: Field2::zeros(nr, nc) };
    for (i, j) in xs.enumerate() {
        for (k, n) in ts.clone().enumerate() {
            let b = geo.b.get(j, n);
            c.g111.set(i, k, geo.db_dx.get(j, n) / b);
            c.h_hb.set(i, k, b * geo.db_dt.get(j, n));
            c.g112.set(i, k, geo.db_dt.get(j, n) / b);
        }
    }
    c
}

/// Coefficients for a polar form, read from the polar metric at the form's nodes.
pub fn polar_coefficients<T: Scalar>(form: &FundamentalForm<T>, polar: &PolarMetric<T>) -> Result<CodazziCoefficients<T>> {
    let (nr, nc) = (form.l.rows, form.l.cols);
    let mut c = CodazziCoefficients { g111: Field2::zeros(nr, nc), h_hb: Field2::zeros(nr, nc), g112: Field2::zeros(nr, nc) };
    for i in 0..nr {
        for k in 0..nc {
            let p = polar.eval(form.a.get(i, k), form.b[k])?;
            c.g111.set(i, k, p.dtheta_log_g);
            c.h_hb.set(i, k, p.g * p.dg);
            c.g112.set(i, k, p.dg / p.g);
        }
    }
    Ok(c)
}

/// Both Codazzi residuals
///   ∂bL − ∂aM − (LΓ¹₁₂ − MΓ¹₁₁ + N·HH_b),   ∂bM − ∂aN + MΓ¹₁₂
/// by second-order differences at interior nodes; boundary nodes hold 0. Moving first
/// coordinates are handled by the chain rule ∂b|a = ∂b|i − (∂b a)∂a.
pub fn codazzi_residual<T: Scalar>(form: &FundamentalForm<T>, coef: &CodazziCoefficients<T>) -> [Field2<T>; 2] {
    let (nr, nc) = (form.l.rows, form.l.cols);
    let mut r1 = Field2::zeros(nr, nc);
    let mut r2 = Field2::zeros(nr, nc);
    let b = &form.b;
    for k in 1..nc - 1 {
        let (h0, h1) = (b[k] - b[k - 1], b[k + 1] - b[k]);
        // three-point weights for the derivative at the middle node of an uneven stencil
        let wm = -h1 / (h0 * (h0 + h1));
        let wc = (h1 - h0) / (h0 * h1);
        let wp = h0 / (h1 * (h0 + h1));
        let db = |f: &Field2<T>, i: usize| wm * f.get(i, k - 1) + wc * f.get(i, k) + wp * f.get(i, k + 1);
        for i in 1..nr - 1 {
            let da_step = form.a.get(i + 1, k) - form.a.get(i - 1, k);
            let da = |f: &Field2<T>| (f.get(i + 1, k) - f.get(i - 1, k)) / da_step;
            let a_b = db(&form.a, i);
            let fix = |f: &Field2<T>| db(f, i) - a_b * da(f);
            let (l, m, n) = (form.l.get(i, k), form.m.get(i, k), form.n.get(i, k));
            let rhs1 = l * coef.g112.get(i, k) - m * coef.g111.get(i, k) + n * coef.h_hb.get(i, k);
            r1.set(i, k, fix(&form.l) - da(&form.m) - rhs1);
            r2.set(i, k, fix(&form.m) - da(&form.n) + m * coef.g112.get(i, k));
        }
    }
    [r1, r2]
}

/// L¹ norm of |R₁| + |R₂| over interior cells, with area element H da db.
pub fn codazzi_l1<T: Scalar>(form: &FundamentalForm<T>, res: &[Field2<T>; 2]) -> f64 {
    let (nr, nc) = (form.l.rows, form.l.cols);
    let mut s = 0.0;
    for k in 1..nc - 1 {
        let db = 0.5 * (form.b[k + 1] - form.b[k - 1]).f64();
        for i in 1..nr - 1 {
            let da = 0.5 * (form.a.get(i + 1, k) - form.a.get(i - 1, k)).f64();
            s += (res[0].get(i, k).f64().abs() + res[1].get(i, k).f64().abs()) * da.abs() * db;
        }
    }
    s
}

/// Metric and second fundamental form seen by the frame integrator, in the geodesic chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameCoeffs<T> {
    pub b: T,
    pub dx_log_b: T,
    pub dt_b: T,
    pub l: T,
    pub m: T,
    pub n: T,
}

pub trait FrameFields<T: Scalar>: Sync {
    fn at(&self, x: T, t: T) -> Result<FrameCoeffs<T>>;
}

/// Closed-form fields.
pub struct AnalyticFields<F>(pub F);

impl<T: Scalar, F: Fn(T, T) -> FrameCoeffs<T> + Sync> FrameFields<T> for AnalyticFields<F> {
    fn at(&self, x: T, t: T) -> Result<FrameCoeffs<T>> {
        Ok((self.0)(x, t))
    }
}

/// Bilinear interpolation of a geodesic form and its metric on the form's (uniform-in-row) grid.
pub struct GridFields<'a, T> {
    pub form: &'a FundamentalForm<T>,
    pub b: Field2<T>,
    pub dx_log_b: Field2<T>,
    pub dt_b: Field2<T>,
}

impl<'a, T: Scalar> GridFields<'a, T> {
    pub fn new(form: &'a FundamentalForm<T>, geo: &GeodesicMetric<T>, xs: std::ops::Range<usize>, ts: std::ops::Range<usize>) -> Self {
        let (nr, nc) = (xs.len(), ts.len());
        let mut g = GridFields { form, b: Field2::zeros(nr, nc), dx_log_b: Field2::zeros(nr, nc), dt_b: Field2::zeros(nr, nc) };
        for (i, j) in xs.enumerate() {
            for (k, n) in ts.clone().enumerate() {
                let b = geo.b.get(j, n);
                g.b.set(i, k, b);
                g.dx_log_b.set(i, k, geo.db_dx.get(j, n) / b);
                g.dt_b.set(i, k, geo.db_dt.get(j, n));
            }
        }
        g
    }

    fn locate(nodes: &[T], x: T) -> Option<(usize, T)> {
        let n = nodes.len();
        let tol = T::lit(1e-12) * (T::one() + x.abs());
        if x < nodes[0] - tol || x > nodes[n - 1] + tol {
            return None;
        }
        let i = match nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        };
        Some((i, ((x - nodes[i]) / (nodes[i + 1] - nodes[i])).max(T::zero()).min(T::one())))
    }
}

impl<'a, T: Scalar> FrameFields<T> for GridFields<'a, T> {
    fn at(&self, x: T, t: T) -> Result<FrameCoeffs<T>> {
        let xs: Vec<T> = (0..self.form.a.rows).map(|i| self.form.a.get(i, 0)).collect();
        let (i, s) = Self::locate(&xs, x).ok_or_else(|| Error::OutOfRange(format!("x = {} outside form", x.f64())))?;
        let (k, w) = Self::locate(&self.form.b, t).ok_or_else(|| Error::OutOfRange(format!("t = {} outside form", t.f64())))?;
        let bil = |f: &Field2<T>| {
            let a = f.get(i, k) + w * (f.get(i, k + 1) - f.get(i, k));
            let b = f.get(i + 1, k) + w * (f.get(i + 1, k + 1) - f.get(i + 1, k));
            a + s * (b - a)
        };
        Ok(FrameCoeffs {
            b: bil(&self.b),
            dx_log_b: bil(&self.dx_log_b),
            dt_b: bil(&self.dt_b),
            l: bil(&self.form.l),
            m: bil(&self.form.m),
            n: bil(&self.form.n),
        })
    }
}

/// Position, r_x, r_t and n packed as 12 numbers.
pub type FrameState<T> = [T; 12];

fn get3<T: Scalar>(y: &FrameState<T>, o: usize) -> [T; 3] {
    [y[o], y[o + 1], y[o + 2]]
}

/// d/dx of the frame.
fn frame_dx<T: Scalar>(c: &FrameCoeffs<T>, y: &FrameState<T>) -> FrameState<T> {
    let (rx, rt, n) = (get3(y, 3), get3(y, 6), get3(y, 9));
    let b2 = c.b * c.b;
    let g211 = -c.b * c.dt_b;
    let g112 = c.dt_b / c.b;
    let mut d = [T::zero(); 12];
    for k in 0..3 {
        d[k] = rx[k];
        d[3 + k] = c.dx_log_b * rx[k] + g211 * rt[k] + c.l * n[k];
        d[6 + k] = g112 * rx[k] + c.m * n[k];
        d[9 + k] = -(c.l / b2) * rx[k] - c.m * rt[k];
    }
    d
}

/// d/dt of the frame.
fn frame_dt<T: Scalar>(c: &FrameCoeffs<T>, y: &FrameState<T>) -> FrameState<T> {
    let (rx, rt, n) = (get3(y, 3), get3(y, 6), get3(y, 9));
    let b2 = c.b * c.b;
    let g112 = c.dt_b / c.b;
    let mut d = [T::zero(); 12];
    for k in 0..3 {
        d[k] = rt[k];
        d[3 + k] = g112 * rx[k] + c.m * n[k];
        d[6 + k] = c.n * n[k];
        d[9 + k] = -(c.m / b2) * rx[k] - c.n * rt[k];
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    X,
    T,
}

fn cross<T: Scalar>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot<T: Scalar>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn gram_schmidt<T: Scalar>(y: &mut FrameState<T>, b: T) {
    let mut rt = get3(y, 6);
    let nt = dot(rt, rt).sqrt();
    rt = rt.map(|v| v / nt);
    let mut rx = get3(y, 3);
    let p = dot(rx, rt);
    rx = [rx[0] - p * rt[0], rx[1] - p * rt[1], rx[2] - p * rt[2]];
    let nx = dot(rx, rx).sqrt();
    rx = rx.map(|v| v * b / nx);
    let n = [
        rx[1] * rt[2] - rx[2] * rt[1],
        rx[2] * rt[0] - rx[0] * rt[2],
        rx[0] * rt[1] - rx[1] * rt[0],
    ];
    let nn = dot(n, n).sqrt();
    for k in 0..3 {
        y[3 + k] = rx[k];
        y[6 + k] = rt[k];
        y[9 + k] = n[k] / nn;
    }
}

/// Integrates along one coordinate from `a` to `b` at fixed other coordinate.
fn march<T: Scalar>(
    fields: &dyn FrameFields<T>,
    dir: Direction,
    fixed: T,
    a: T,
    b: T,
    y: FrameState<T>,
    opts: &ImmersionOptions,
) -> Result<FrameState<T>> {
    let span = b - a;
    if span == T::zero() {
        return Ok(y);
    }
    let h = T::lit(opts.step);
    let n = (span.abs() / h).ceil().to_usize().unwrap_or(1).max(1);
    let dt = span / T::from_usize_lossy(n);
    let mut y = y;
    let mut err: Option<Error> = None;
    for i in 0..n {
        let s0 = a + dt * T::from_usize_lossy(i);
        let mut f = |s: T, st: &FrameState<T>| -> FrameState<T> {
            let (x, t) = match dir {
                Direction::X => (s, fixed),
                Direction::T => (fixed, s),
            };
            match fields.at(x, t) {
                Ok(c) => match dir {
                    Direction::X => frame_dx(&c, st),
                    Direction::T => frame_dt(&c, st),
                },
                Err(e) => {
                    err.get_or_insert(e);
                    [T::zero(); 12]
                }
            }
        };
        y = rk4_step(&mut f, s0, &y, dt);
        if let Some(e) = err.take() {
            return Err(e);
        }
        if opts.stabilize {
            let (x, t) = match dir {
                Direction::X => (s0 + dt, fixed),
                Direction::T => (fixed, s0 + dt),
            };
            gram_schmidt(&mut y, fields.at(x, t)?.b);
        }
        let rt = get3(&y, 6);
        let drift = (dot(rt, rt) - T::one()).abs();
        if drift.f64() > opts.drift_tol || !drift.is_finite() {
            let s1 = s0 + dt;
            let (x, t) = match dir {
                Direction::X => (s1, fixed),
                Direction::T => (fixed, s1),
            };
            return Err(Error::FrameDrift { drift: drift.f64(), x: x.f64(), t: t.f64() });
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ImmersionOptions {
    pub step: f64,
    /// Re-orthonormalize after every step (off by default; drift is the diagnostic).
    pub stabilize: bool,
    pub drift_tol: f64,
    /// Offset of the probe fibers used for x-derivatives in [`verify_immersion`].
    pub probe: f64,
}

impl Default for ImmersionOptions {
    fn default() -> Self {
        ImmersionOptions { step: 1e-3, stabilize: false, drift_tol: 1e-4, probe: 1e-4 }
    }
}

/// Vertices and frames on the tensor grid `x_nodes × t_nodes` (x-major).
#[derive(Debug, Clone)]
pub struct ImmersionMesh<T> {
    pub x_nodes: Vec<T>,
    pub t_nodes: Vec<T>,
    pub frames: Vec<FrameState<T>>,
    pub faces: Vec<[usize; 3]>,
    /// Index of the spine's base column.
    pub base: usize,
}

impl<T: Scalar> ImmersionMesh<T> {
    pub fn index(&self, i: usize, k: usize) -> usize {
        i * self.t_nodes.len() + k
    }

    pub fn vertex(&self, i: usize, k: usize) -> [T; 3] {
        get3(&self.frames[self.index(i, k)], 0)
    }

    pub fn normal(&self, i: usize, k: usize) -> [T; 3] {
        get3(&self.frames[self.index(i, k)], 9)
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Frame at (x_base, 0): r = 0, r_x = (B, 0, 0), r_t = (0, 1, 0), n = (0, 0, 1).
pub fn base_frame<T: Scalar>(b: T) -> FrameState<T> {
    let (z, o) = (T::zero(), T::one());
    [z, z, z, b, z, z, z, o, z, z, z, o]
}

/// Spine along t = t_nodes[0] from the node nearest x = 0, then every t-fiber.
pub fn integrate_frame<T: Scalar>(
    fields: &dyn FrameFields<T>,
    x_nodes: &[T],
    t_nodes: &[T],
    opts: &ImmersionOptions,
) -> Result<ImmersionMesh<T>> {
    let (nx, nt) = (x_nodes.len(), t_nodes.len());
    if nx < 2 || nt < 2 {
        return Err(Error::EmptyMesh);
    }
    let t0 = t_nodes[0];
    let base = (0..nx)
        .min_by(|&a, &b| x_nodes[a].abs().partial_cmp(&x_nodes[b].abs()).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    let mut spine = vec![[T::zero(); 12]; nx];
    spine[base] = base_frame(fields.at(x_nodes[base], t0)?.b);
    for i in base + 1..nx {
        spine[i] = march(fields, Direction::X, t0, x_nodes[i - 1], x_nodes[i], spine[i - 1], opts)?;
    }
    for i in (0..base).rev() {
        spine[i] = march(fields, Direction::X, t0, x_nodes[i + 1], x_nodes[i], spine[i + 1], opts)?;
    }
    let columns: Vec<Vec<FrameState<T>>> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let mut col = Vec::with_capacity(nt);
            col.push(spine[i]);
            for k in 1..nt {
                let y = march(fields, Direction::T, x_nodes[i], t_nodes[k - 1], t_nodes[k], col[k - 1], opts)?;
                col.push(y);
            }
            Ok(col)
        })
        .collect::<Result<_>>()?;
    let frames: Vec<FrameState<T>> = columns.into_iter().flatten().collect();
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (nt - 1));
    for i in 0..nx - 1 {
        for k in 0..nt - 1 {
            let a = i * nt + k;
            let b = (i + 1) * nt + k;
            faces.push([a, b, b + 1]);
            faces.push([a, b + 1, a + 1]);
        }
    }
    Ok(ImmersionMesh { x_nodes: x_nodes.to_vec(), t_nodes: t_nodes.to_vec(), frames, faces, base })
}

#[derive(Debug, Clone, Serialize)]
pub struct ImmersionReport {
    /// Induced metric of the map: ⟨r_x,r_x⟩ − B², ⟨r_x,r_t⟩, ⟨r_t,r_t⟩ − 1 at interior nodes.
    /// x-derivatives come from probe fibers at x ± δ, t-derivatives from the fiber itself.
    pub metric_inf: f64,
    pub metric_l2: f64,
    /// ⟨r_xx,n⟩ − L, ⟨r_xt,n⟩ − M, ⟨r_tt,n⟩ − N with the induced normal.
    pub ii_inf: f64,
    pub ii_l2: f64,
    /// Largest endpoint gap between the mesh and the path up the base fiber then across.
    pub commutator_inf: f64,
    /// max | |n| − 1 | and max |⟨r_t,r_t⟩ − 1| over stored frames.
    pub frame_drift: f64,
}

pub fn verify_immersion<T: Scalar>(
    mesh: &ImmersionMesh<T>,
    fields: &dyn FrameFields<T>,
    opts: &ImmersionOptions,
) -> Result<ImmersionReport> {
    let (nx, nt) = (mesh.x_nodes.len(), mesh.t_nodes.len());
    if nx < 3 || nt < 3 {
        return Err(Error::EmptyMesh);
    }
    let sub = |a: [T; 3], b: [T; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let scale = |a: [T; 3], s: T| [a[0] * s, a[1] * s, a[2] * s];
    let d = T::lit(opts.probe);
    // fibers through x ± δ, launched from the spine, give the map's x-derivatives
    let probe = |i: usize, x: T| -> Result<Vec<FrameState<T>>> {
        let t = &mesh.t_nodes;
        let mut col = Vec::with_capacity(nt);
        col.push(march(fields, Direction::X, t[0], mesh.x_nodes[i], x, mesh.frames[mesh.index(i, 0)], opts)?);
        for k in 1..nt {
            let y = march(fields, Direction::T, x, t[k - 1], t[k], col[k - 1], opts)?;
            col.push(y);
        }
        Ok(col)
    };
    let rows: Vec<Vec<[f64; 6]>> = (1..nx - 1)
        .into_par_iter()
        .map(|i| {
            let x = mesh.x_nodes[i];
            let (lo, hi) = (probe(i, x - d)?, probe(i, x + d)?);
            let mut out = Vec::with_capacity(nt - 2);
            for k in 1..nt - 1 {
                let c = fields.at(x, mesh.t_nodes[k])?;
                let y = mesh.frames[mesh.index(i, k)];
                let p0 = get3(&y, 0);
                let (pm, pp) = (get3(&lo[k], 0), get3(&hi[k], 0));
                let rx = scale(sub(pp, pm), T::one() / (d + d));
                let rt = get3(&y, 6);
                let rxx = scale(sub(sub(pp, p0), sub(p0, pm)), T::one() / (d * d));
                let rxt = scale(sub(get3(&hi[k], 6), get3(&lo[k], 6)), T::one() / (d + d));
                let rtt = get3(&frame_dt(&c, &y), 6);
                let mut n = cross(rx, rt);
                let nn = dot(n, n).sqrt();
                n = scale(n, if dot(n, get3(&y, 9)) < T::zero() { -T::one() / nn } else { T::one() / nn });
                let e = [dot(rx, rx) - c.b * c.b, dot(rx, rt), dot(rt, rt) - T::one()];
                let f = [dot(rxx, n) - c.l, dot(rxt, n) - c.m, dot(rtt, n) - c.n];
                out.push([e[0].f64(), e[1].f64(), e[2].f64(), f[0].f64(), f[1].f64(), f[2].f64()]);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let (mut m_inf, mut m_sq, mut i_inf, mut i_sq, mut cnt) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0usize);
    for r in rows.iter().flatten() {
        for v in &r[..3] {
            m_inf = m_inf.max(v.abs());
            m_sq += v * v;
        }
        for v in &r[3..] {
            i_inf = i_inf.max(v.abs());
            i_sq += v * v;
        }
        cnt += 3;
    }
    // path up the base fiber, then across the top row
    let top = nt - 1;
    let t_top = mesh.t_nodes[top];
    let corner = mesh.frames[mesh.index(mesh.base, top)];
    // report-only: drift along the comparison path is part of the measured gap
    let opts = &ImmersionOptions { drift_tol: f64::INFINITY, ..*opts };
    let mut comm = 0.0f64;
    let mut go = |range: Vec<usize>| -> Result<()> {
        let mut y = corner;
        let mut prev = mesh.base;
        for i in range {
            y = march(fields, Direction::X, t_top, mesh.x_nodes[prev], mesh.x_nodes[i], y, opts)?;
            prev = i;
            let m = mesh.frames[mesh.index(i, top)];
            for c in 0..12 {
                comm = comm.max((y[c] - m[c]).f64().abs());
            }
        }
        Ok(())
    };
    go((mesh.base + 1..nx).collect())?;
    go((0..mesh.base).rev().collect())?;
    let drift = mesh
        .frames
        .iter()
        .map(|y| {
            let n = get3(y, 9);
            let rt = get3(y, 6);
            (dot(n, n).sqrt() - T::one()).f64().abs().max((dot(rt, rt) - T::one()).f64().abs())
        })
        .fold(0.0, f64::max);
    let cnt = cnt.max(1) as f64;
    Ok(ImmersionReport {
        metric_inf: m_inf,
        metric_l2: (m_sq / cnt).sqrt(),
        ii_inf: i_inf,
        ii_l2: (i_sq / cnt).sqrt(),
        commutator_inf: comm,
        frame_drift: drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshFormat {
    Obj,
    Ply,
}

/// Writes OBJ ("v x y z" with 9 significant digits, 1-based "f i j k") or ascii PLY with normals.
pub fn export_mesh<T: Scalar>(mesh: &ImmersionMesh<T>, path: &Path, format: MeshFormat) -> Result<()> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut s = String::new();
    match format {
        MeshFormat::Obj => {
            for y in &mesh.frames {
                s.push_str(&format!("v {:.8e} {:.8e} {:.8e}\n", y[0].f64(), y[1].f64(), y[2].f64()));
            }
            for f in &mesh.faces {
                s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
            }
        }
        MeshFormat::Ply => {
            s.push_str(&format!(
                "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
                 property float nx\nproperty float ny\nproperty float nz\nelement face {}\n\
                 property list uchar int vertex_indices\nend_header\n",
                mesh.frames.len(),
                mesh.faces.len()
            ));
            for y in &mesh.frames {
                s.push_str(&format!(
                    "{:.8e} {:.8e} {:.8e} {:.8e} {:.8e} {:.8e}\n",
                    y[0].f64(),
                    y[1].f64(),
                    y[2].f64(),
                    y[9].f64(),
                    y[10].f64(),
                    y[11].f64()
                ));
            }
            for f in &mesh.faces {
                s.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
            }
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(s.as_bytes())?;
    Ok(())
}

/// Vertex positions from an OBJ written by [`export_mesh`].
pub fn read_obj_vertices(text: &str) -> Vec<[f64; 3]> {
    text.lines()
        .filter_map(|l| l.strip_prefix("v "))
        .filter_map(|rest| {
            let v: Vec<f64> = rest.split_whitespace().filter_map(|x| x.parse().ok()).collect();
            (v.len() == 3).then(|| [v[0], v[1], v[2]])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(l: f64, m: f64, n: f64) -> AnalyticFields<impl Fn(f64, f64) -> FrameCoeffs<f64> + Sync> {
        AnalyticFields(move |_x: f64, _t: f64| FrameCoeffs { b: 1.0, dx_log_b: 0.0, dt_b: 0.0, l, m, n })
    }

    fn nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn symmetric_invariants() {
        let (l, m, n) = form_from_invariants(2.0, 0.5, -1.0, 1.0);
        assert_eq!((l, m, n), (1.0, 0.0, -1.0));
        let (l, m, n) = form_from_invariants(2.0, 0.5, 0.0, 2.0);
        assert_eq!((l, m, n), (1.0, -1.0, 0.0));
        assert_eq!(l * n - m * m, -1.0);
    }

    #[test]
    fn plane() {
        let f = flat(0.0, 0.0, 0.0);
        let opts = ImmersionOptions::default();
        let mesh = integrate_frame(&f, &nodes(-0.5, 0.5, 11), &nodes(0.0, 1.0, 11), &opts).unwrap();
        for i in 0..11 {
            for k in 0..11 {
                let v = mesh.vertex(i, k);
                assert!((v[0] - mesh.x_nodes[i]).abs() < 1e-14 && (v[1] - mesh.t_nodes[k]).abs() < 1e-14 && v[2] == 0.0);
            }
        }
        let rep = verify_immersion(&mesh, &f, &opts).unwrap();
        // probe differences carry roundoff / δ
        assert!(rep.metric_inf < 1e-11 && rep.ii_inf < 1e-13 && rep.commutator_inf < 1e-13, "{rep:?}");
    }

    #[test]
    fn cylinder() {
        // L = 1 bends the x-lines into unit circles about an axis along r_t
        let f = flat(1.0, 0.0, 0.0);
        let opts = ImmersionOptions::default();
        let xs = nodes(0.0, 0.2, 201);
        let ts = nodes(0.0, 0.2, 201);
        let mesh = integrate_frame(&f, &xs, &ts, &opts).unwrap();
        let mut worst = 0.0f64;
        for i in (0..201).step_by(10) {
            for k in (0..201).step_by(10) {
                let v = mesh.vertex(i, k);
                let x = xs[i];
                // base n = +z, so the circle is (sin x, t, 1 − cos x)
                let e = [x.sin(), ts[k], 1.0 - x.cos()];
                for c in 0..3 {
                    worst = worst.max((v[c] - e[c]).abs());
                }
            }
        }
        assert!(worst < 1e-8, "{worst}");
        let rep = verify_immersion(&mesh, &f, &opts).unwrap();
        assert!(rep.ii_inf < 1e-6, "{}", rep.ii_inf);
        assert!(rep.commutator_inf < 1e-10);
    }

    #[test]
    fn drift_aborts() {
        // fields with |n| blowing up are not realizable; a huge step makes the frame drift
        let f = flat(50.0, 30.0, 40.0);
        let opts = ImmersionOptions { step: 0.5, ..Default::default() };
        let e = integrate_frame(&f, &nodes(0.0, 2.0, 3), &nodes(0.0, 2.0, 3), &opts).unwrap_err();
        assert!(matches!(e, Error::FrameDrift { .. }));
    }

    #[test]
    fn codazzi_of_constant_form_on_flat_metric() {
        let mut f = empty_form::<f64>(ChartId::Geodesic, 5, 5);
        f.b = nodes(0.0, 1.0, 5);
        for i in 0..5 {
            for k in 0..5 {
                f.a.set(i, k, i as f64 * 0.25);
                f.l.set(i, k, 1.3);
                f.m.set(i, k, -0.2);
                f.n.set(i, k, 0.7);
            }
        }
        let z = Field2::zeros(5, 5);
        let c = CodazziCoefficients { g111: z.clone(), h_hb: z.clone(), g112: z };
        let r = codazzi_residual(&f, &c);
        assert_eq!(r[0].max_abs(), 0.0);
        assert_eq!(r[1].max_abs(), 0.0);
    }

    /// Manufactured (w, z) on an arbitrary smooth H: the discrete residual at one interior point
    /// must converge to the continuous one (finite differences at tiny steps) at second order,
    /// also with moving first coordinates.
    #[test]
    fn codazzi_manufactured_convergence() {
        let hf = |a: f64, b: f64| 1.0 + b + 0.3 * b * b + 0.1 * (a + b).sin();
        let kf = |a: f64, b: f64| 0.4 + 0.1 * (2.0 * a - b).cos();
        let wf = |a: f64, b: f64| -0.5 + 0.2 * (a * b).sin();
        let zf = |a: f64, b: f64| 0.8 + 0.1 * (a - 2.0 * b).cos();
        let form_at = |a: f64, b: f64| form_from_invariants(hf(a, b), kf(a, b), wf(a, b), zf(a, b));
        let e = 1e-4;
        let (a0, b0) = (0.7, 1.1);
        let d_a = |g: &dyn Fn(f64, f64) -> f64| (g(a0 + e, b0) - g(a0 - e, b0)) / (2.0 * e);
        let d_b = |g: &dyn Fn(f64, f64) -> f64| (g(a0, b0 + e) - g(a0, b0 - e)) / (2.0 * e);
        let lf = |a: f64, b: f64| form_at(a, b).0;
        let mf = |a: f64, b: f64| form_at(a, b).1;
        let nf = |a: f64, b: f64| form_at(a, b).2;
        let lh = |a: f64, b: f64| hf(a, b).ln();
        let (l, m, n) = form_at(a0, b0);
        let exact1 = d_b(&lf) - d_a(&mf) - (l * d_b(&lh) - m * d_a(&lh) + n * hf(a0, b0) * d_b(&hf));
        let exact2 = d_b(&mf) - d_a(&nf) + m * d_b(&lh);
        assert!(exact1.abs() > 1e-3 && exact2.abs() > 1e-3);
        let run = |h: f64, shear: f64| -> f64 {
            // 3×3 stencil around (a0, b0), first coordinate a = a0 + (i−1)h + shear·(b − b0)
            let bs = vec![b0 - h, b0, b0 + 1.5 * h];
            let mut f = empty_form::<f64>(ChartId::Polar, 3, 3);
            f.b = bs.clone();
            let mut c = CodazziCoefficients { g111: Field2::zeros(3, 3), h_hb: Field2::zeros(3, 3), g112: Field2::zeros(3, 3) };
            for i in 0..3 {
                for k in 0..3 {
                    let b = bs[k];
                    let a = a0 + (i as f64 - 1.0) * h + shear * (b - b0);
                    f.a.set(i, k, a);
                    let (l, m, n) = form_at(a, b);
                    f.l.set(i, k, l);
                    f.m.set(i, k, m);
                    f.n.set(i, k, n);
                    let dd = 1e-6;
                    c.g111.set(i, k, (lh(a + dd, b) - lh(a - dd, b)) / (2.0 * dd));
                    c.g112.set(i, k, (lh(a, b + dd) - lh(a, b - dd)) / (2.0 * dd));
                    c.h_hb.set(i, k, hf(a, b) * (hf(a, b + dd) - hf(a, b - dd)) / (2.0 * dd));
                }
            }
            let r = codazzi_residual(&f, &c);
            (r[0].get(1, 1) - exact1).abs() + (r[1].get(1, 1) - exact2).abs()
        };
        for shear in [0.0, 0.3] {
            let (e1, e2) = (run(0.02, shear), run(0.01, shear));
            let order = (e1 / e2).log2();
            assert!(order >= 1.8, "shear {shear}: order {order} ({e1}, {e2})");
        }
    }

    #[test]
    fn obj_counts_and_round_trip() {
        let f = flat(0.0, 0.0, 0.0);
        let mesh = integrate_frame(&f, &[0.0, 1.0], &[0.0, 1.0], &ImmersionOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.obj");
        export_mesh(&mesh, &p, MeshFormat::Obj).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 2);
        let back = read_obj_vertices(&text);
        for (i, v) in back.iter().enumerate() {
            let y = mesh.frames[i];
            for c in 0..3 {
                assert_eq!(format!("{:.8e}", v[c]), format!("{:.8e}", y[c]));
            }
        }
        let empty = ImmersionMesh::<f64> { x_nodes: vec![], t_nodes: vec![], frames: vec![], faces: vec![], base: 0 };
        let q = dir.path().join("e.obj");
        assert!(export_mesh(&empty, &q, MeshFormat::Obj).is_err());
        assert!(!q.exists());
        let ply = dir.path().join("m.ply");
        export_mesh(&mesh, &ply, MeshFormat::Ply).unwrap();
        assert!(std::fs::read_to_string(&ply).unwrap().contains("element vertex 4"));
    }
}
