//! The (p, q) system on the inner region Ω₁ in geodesic coordinates, its initial profile, and the
//! transformed boundary data handed to the outer march.

use crate::chart::{push_slope, ChartMap, ChartSample, ColumnIntegrator, CurveParams, DomainSplit};
use crate::curvature::CurvatureSpec;
use crate::error::{Error, Result};
use crate::metric::{t_difference, x_difference, GeodesicMetric};
use crate::numerics::grid::{Field2, Grid1};
use crate::numerics::interp::{linear, HermiteCurve};
use crate::numerics::quad::{integrate, QuadOptions};
use crate::scalar::Scalar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Cutoff ω: 0 on [0, 1/4], 1 on [1, ∞), C^∞ in between.
pub fn omega<T: Scalar>(eta: T) -> T {
    let lo = T::lit(0.25);
    if eta <= lo {
        return T::zero();
    }
    if eta >= T::one() {
        return T::one();
    }
    let tau = (eta - lo) / (T::one() - lo);
    let f = |s: T| if s <= T::zero() { T::zero() } else { (-T::one() / s).exp() };
    let a = f(tau);
    a / (a + f(T::one() - tau))
}

/// Coefficient fields of the (p, q) system on the geodesic grid (rows x, columns t).
#[derive(Debug, Clone)]
pub struct InnerCoefficients<T> {
    pub inv_b: Field2<T>,
    pub dt_log_b: Field2<T>,
    pub dt_log_kappa: Field2<T>,
    pub dx_log_kappa: Field2<T>,
}

/// ∂ log κ by the chain rule through the chart; ∂t log B from the Jacobi field.
pub fn inner_coefficients<T: Scalar>(
    geo: &GeodesicMetric<T>,
    chart: &ChartMap<T>,
    spec: &CurvatureSpec<T>,
) -> Result<InnerCoefficients<T>> {
    let (rows, cols) = (geo.b.rows, geo.b.cols);
    if chart.rho.rows != rows || chart.rho.cols != cols {
        return Err(Error::GridMismatch("chart and geodesic metric differ".into()));
    }
    let mut c = InnerCoefficients {
        inv_b: Field2::zeros(rows, cols),
        dt_log_b: Field2::zeros(rows, cols),
        dt_log_kappa: Field2::zeros(rows, cols),
        dx_log_kappa: Field2::zeros(rows, cols),
    };
    for j in 0..rows {
        for n in 0..cols {
            let b = geo.b.get(j, n);
            let s = chart.sample(j, n, b);
            let lk = spec.log_k(s.theta, s.rho);
            c.inv_b.set(j, n, T::one() / b);
            c.dt_log_b.set(j, n, geo.db_dt.get(j, n) / b);
            c.dt_log_kappa.set(j, n, lk.d_rho * s.rho_t() + lk.d_theta * s.theta_t());
            c.dx_log_kappa.set(j, n, lk.d_rho * s.rho_x() + lk.d_theta * s.theta_x());
        }
    }
    Ok(c)
}

/// Height at which each column leaves Ω₁: max(t₀(x), t with ρ(x, t) = R₁).
pub fn stop_heights<T: Scalar>(chart: &ChartMap<T>, params: &CurveParams<T>) -> Result<Vec<T>> {
    (0..chart.x_grid.len())
        .map(|j| {
            let x = chart.x_grid.nodes[j];
            let t0 = params.t0(x);
            let row = chart.rho.row(j);
            let tr = if row[0] >= params.r1 {
                T::zero()
            } else {
                let n = row.iter().position(|&r| r >= params.r1).ok_or_else(|| {
                    Error::OutOfRange(format!("chart column x = {} never reaches R1", x.f64()))
                })?;
                let (mut lo, mut hi) = (chart.t_grid.nodes[n - 1], chart.t_grid.nodes[n]);
                for _ in 0..60 {
                    let mid = (lo + hi) * T::lit(0.5);
                    if chart.interpolate(j, mid)?.0 < params.r1 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                (lo + hi) * T::lit(0.5)
            };
            let t = t0.max(tr);
            if t > chart.t_grid.last() {
                return Err(Error::OutOfRange(format!("t grid ends below the inner boundary at x = {}", x.f64())));
            }
            Ok(t)
        })
        .collect()
}

/// Initial-profile construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// The constructed profile with the constant 700 and prefactor 1/(64π²).
    Verbatim,
    /// Same construction without the exp(−700 h₁(t₀+R₁)) factor, normalized to φ(0) = amplitude.
    Envelope,
}

/// Sampled φ on x ≥ 0: φ(x) = exp(log_prefactor)·shape(|x|), zero past the last node.
#[derive(Debug, Clone)]
pub struct PhiProfile<T> {
    pub mode: PhiMode,
    pub log_prefactor: T,
    pub shape: HermiteCurve<T>,
}

impl<T: Scalar> PhiProfile<T> {
    pub fn eval(&self, x: T) -> T {
        let ax = x.abs();
        let (_, hi) = self.shape.domain();
        if ax >= hi {
            return T::zero();
        }
        self.log_prefactor.exp() * self.shape.eval(ax)
    }

    pub fn slope(&self, x: T) -> T {
        let ax = x.abs();
        if ax >= self.shape.domain().1 {
            return T::zero();
        }
        x.signum() * self.log_prefactor.exp() * self.shape.slope(ax)
    }

    /// log φ(0), finite even when φ(0) underflows.
    pub fn log_at_zero(&self) -> T {
        self.log_prefactor + self.shape.y[0].ln()
    }
}

/// h₁, h₂ on |x| nodes, plus the profile once built.
#[derive(Debug, Clone)]
pub struct InnerBoundaryKit<T> {
    pub y: Vec<T>,
    pub h1: Vec<T>,
    pub h2: Vec<T>,
    pub phi: Option<PhiProfile<T>>,
}

impl<T: Scalar> InnerBoundaryKit<T> {
    /// Clamped linear lookup; the tables are constant past their last node.
    pub fn h1_at(&self, y: T) -> T {
        linear(&self.y, &self.h1, y.abs())
    }

    pub fn h2_at(&self, y: T) -> T {
        linear(&self.y, &self.h2, y.abs())
    }

    /// Tables from the flat formula h₁ ≡ const, h₂ = 1 + h₁ + sup(|t₀′|/(t₀+R₁) + x²).
    pub fn from_h1(y: Vec<T>, h1: Vec<T>, params: &CurveParams<T>) -> Self {
        let mut h2 = Vec::with_capacity(y.len());
        let mut run = T::zero();
        for (i, &yy) in y.iter().enumerate() {
            let extra = params.t0_prime(yy).abs() / (params.t0(yy) + params.r1) + yy * yy;
            run = run.max(extra);
            h2.push(T::one() + h1[i] + run);
        }
        InnerBoundaryKit { y, h1, h2, phi: None }
    }
}

/// Sampled suprema of the coefficient derivatives over Ω₁ ∩ {|x| ≤ y}, evenized and
/// monotonized by running maximum.
pub fn build_envelopes<T: Scalar>(
    geo: &GeodesicMetric<T>,
    coef: &InnerCoefficients<T>,
    stops: &[T],
    params: &CurveParams<T>,
) -> Result<InnerBoundaryKit<T>> {
    let xg = &geo.x_grid;
    let tg = &geo.t_grid;
    let dx = |f: &Field2<T>| x_difference(f, xg);
    let dt = |f: &Field2<T>| t_difference(f, tg);
    let two = T::lit(2.0);
    let inv_b_t = dt(&coef.inv_b);
    let log_k_tt = dt(&coef.dt_log_kappa);
    let log_b_tt = dt(&coef.dt_log_b);
    // (field, weight) for ∂ₓ^i of each base, i = 0, 1, 2
    let mut terms: Vec<(Field2<T>, T)> = Vec::new();
    let mut with_x = |f: Field2<T>, w: T, max_i: usize| {
        let mut cur = f;
        for i in 0..=max_i {
            let next = if i < max_i { Some(dx(&cur)) } else { None };
            terms.push((cur, w));
            match next {
                Some(n) => cur = n,
                None => break,
            }
        }
    };
    with_x(coef.inv_b.clone(), T::one(), 2);
    with_x(inv_b_t, T::one(), 2);
    with_x(coef.dt_log_kappa.clone(), two, 2);
    with_x(log_k_tt, two, 2);
    with_x(coef.dx_log_kappa.clone(), two, 2);
    with_x(coef.dt_log_b.clone(), T::one(), 2);
    with_x(log_b_tt, T::one(), 2);

    let nx = xg.len();
    let per_col: Vec<T> = (0..nx)
        .map(|j| {
            let mut m = T::zero();
            for n in 0..tg.len() {
                if tg.nodes[n] > stops[j] {
                    break;
                }
                for (f, w) in &terms {
                    m = m.max(*w * f.get(j, n).abs());
                }
            }
            m
        })
        .collect();
    let mut pairs: Vec<(T, T)> = (0..nx).map(|j| (xg.nodes[j].abs(), per_col[j])).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut y: Vec<T> = Vec::new();
    let mut h1: Vec<T> = Vec::new();
    let mut run = T::zero();
    for (ay, v) in pairs {
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "coefficient derivative".into(), a: ay.f64(), b: 0.0 });
        }
        run = run.max(v);
        if let Some(last) = y.last() {
            if (ay - *last).abs() <= T::lit(1e-12) * (T::one() + ay) {
                *h1.last_mut().unwrap() = T::one() + run;
                continue;
            }
        }
        y.push(ay);
        h1.push(T::one() + run);
    }
    if y.len() < 2 {
        return Err(Error::EmptyMesh);
    }
    Ok(InnerBoundaryKit::from_h1(y, h1, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhiOptions {
    pub mode: PhiMode,
    /// Multiplies φ in either mode.
    pub scale: f64,
    /// φ(0) in envelope mode.
    pub amplitude: f64,
    pub quad_tol: f64,
    pub nodes: usize,
    /// The profile is tabulated at least this far so it stays positive across the x-grid.
    pub min_extent: f64,
}

impl Default for PhiOptions {
    fn default() -> Self {
        PhiOptions { mode: PhiMode::Envelope, scale: 1.0, amplitude: 0.05, quad_tol: 1e-10, nodes: 1025, min_extent: 0.0 }
    }
}

/// log of the inner kernel at y.
fn log_kernel<T: Scalar>(kit: &InnerBoundaryKit<T>, params: &CurveParams<T>, mode: PhiMode, y: T) -> T {
    let y1 = y + T::one();
    let t = params.t0(y1) + params.r1;
    let base = -y * y - T::lit(4.0) * (t * kit.h2_at(y1)).ln();
    match mode {
        PhiMode::Verbatim => base - T::lit(700.0) * kit.h1_at(y1) * t,
        PhiMode::Envelope => base,
    }
}

/// φ(x) = c ∫ₓ^∞ e^{−η²}ω(η) ∫_η^∞ K(y) dy dη for x ≥ 0, evaluated in shifted log form.
/// The y-range is truncated where K(y)·∫_{1/4}^y e^{−η²}ω falls 10⁻³⁰ below its peak.
pub fn initial_phi<T: Scalar>(kit: &InnerBoundaryKit<T>, params: &CurveParams<T>, opts: &PhiOptions) -> Result<PhiProfile<T>> {
    if !(opts.quad_tol > 0.0) || opts.nodes < 8 {
        return Err(Error::InvalidParameter { name: "phi".into(), reason: "quad_tol must be positive and nodes ≥ 8".into() });
    }
    let lk = |y: T| log_kernel(kit, params, opts.mode, y);
    let eta0 = T::lit(0.25);
    let shift = lk(eta0);
    let drop = T::lit(30.0) * T::LN_10();
    let weight = |e: T| (-e * e).exp() * omega(e);

    // geometric scan away from the start of ω's support
    let mut scan = vec![eta0];
    let mut off = T::lit(1e-6);
    while off < T::lit(1e4) {
        scan.push(eta0 + off);
        off = off * T::lit(1.0905077326652577); // 2^(1/8)
    }
    let mut w_acc = T::zero();
    let mut best = T::neg_infinity();
    let mut y_max = None;
    for win in scan.windows(2) {
        w_acc = w_acc + crate::numerics::quad::gk15(&mut |e| weight(e), win[0], win[1]).0;
        let g = lk(win[1]) + w_acc.ln();
        if g > best {
            best = g;
        } else if g < best - drop {
            y_max = Some(win[1]);
            break;
        }
    }
    let y_max = y_max.ok_or(Error::QuadratureFailed { a: eta0.f64(), b: 1e4 })?.max(T::lit(opts.min_extent));
    let n = opts.nodes;
    // φ is constant on [0, 1/4]; K̂ would overflow there and is never needed
    let mut nodes = vec![T::zero()];
    nodes.extend((0..n - 1).map(|i| eta0 + (y_max - eta0) * T::from_usize_lossy(i) / T::from_usize_lossy(n - 2)));
    let qo = QuadOptions { rel_tol: opts.quad_tol, abs_tol: 1e-300, max_intervals: 4000 };
    let khat = |y: T| (lk(y) - shift).exp();

    // Î(η) = ∫_η^{y_max} K̂, tabulated with exact slope −K̂
    let pieces: Vec<T> = nodes
        .par_windows(2)
        .map(|w| if w[0] < eta0 { Ok(T::zero()) } else { integrate(&mut |y| khat(y), w[0], w[1], &[], qo) })
        .collect::<Result<Vec<_>>>()?;
    let mut inner = vec![T::zero(); n];
    for i in (0..n - 1).rev() {
        inner[i] = inner[i + 1] + pieces[i];
    }
    let node_grid = Grid1::from_nodes(nodes.clone());
    let inner_at = |eta: T| -> T {
        match node_grid.locate(eta) {
            Some((i, _)) => inner[i + 1] + crate::numerics::quad::gk15(&mut |y| khat(y), eta, nodes[i + 1]).0,
            None => T::zero(),
        }
    };
    let outer_f = |eta: T| if eta <= eta0 { T::zero() } else { weight(eta) * inner_at(eta) };
    let opieces: Vec<T> = nodes
        .par_windows(2)
        .map(|w| integrate(&mut |e| outer_f(e), w[0], w[1], &[eta0, T::one()], qo))
        .collect::<Result<Vec<_>>>()?;
    let mut shape = vec![T::zero(); n];
    for i in (0..n - 1).rev() {
        shape[i] = shape[i + 1] + opieces[i];
    }
    let slopes: Vec<T> = nodes.iter().map(|&e| -outer_f(e)).collect();
    if !(shape[0] > T::zero()) {
        return Err(Error::DataUnderflow("initial profile vanishes after shifting".into()));
    }
    let scale = T::lit(opts.scale);
    let (log_prefactor, shape, slopes) = match opts.mode {
        PhiMode::Verbatim => {
            let c = (scale / (T::lit(64.0) * T::PI() * T::PI())).ln() + shift;
            (c, shape, slopes)
        }
        PhiMode::Envelope => {
            let s0 = shape[0];
            let norm: Vec<T> = shape.iter().map(|&v| v / s0).collect();
            let dn: Vec<T> = slopes.iter().map(|&v| v / s0).collect();
            ((scale * T::lit(opts.amplitude)).ln(), norm, dn)
        }
    };
    Ok(PhiProfile { mode: opts.mode, log_prefactor, shape: HermiteCurve::new(nodes, shape, slopes) })
}

/// Which boundary of Ω̃₂ a trace sample maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Piece {
    /// t = t₀(x), x > b₊: the lower boundary θ₁(ρ).
    Lower,
    /// ρ = R₁, b₋ ≤ x ≤ b₊.
    Arc,
    /// t = t₀(x), x < b₋: the upper boundary θ₂(ρ).
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSample<T> {
    pub x: T,
    pub t: T,
    pub p: T,
    pub q: T,
    pub piece: Piece,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InnerOptions {
    pub cfl: f64,
    pub max_substeps: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions { cfl: 0.9, max_substeps: 256 }
    }
}

#[derive(Debug, Clone)]
pub struct InnerState<T> {
    pub x_grid: Grid1<T>,
    pub t_grid: Grid1<T>,
    /// Rows x, columns t; values past a column's stop height are frozen copies.
    pub p: Field2<T>,
    pub q: Field2<T>,
    pub stops: Vec<T>,
    pub trace: Vec<TraceSample<T>>,
    /// min(q − p) over Ω₁ and where it occurs.
    pub min_gap: T,
    pub min_gap_at: (T, T),
    /// Smallest C with |∂ₓⁱp| + |∂ₓⁱq| ≤ C[(t₀+R)h₂]⁻⁴ along the boundary trace, i = 0, 1, 2.
    pub decay_constants: [T; 3],
    pub max_cfl: T,
    pub substeps: usize,
}

/// First-order upwind march of the advective (p, q) system in t on the full x-row, with each
/// column frozen once it passes its stop height.
pub fn solve_inner<T: Scalar>(
    coef: &InnerCoefficients<T>,
    x_grid: &Grid1<T>,
    t_grid: &Grid1<T>,
    kit: &InnerBoundaryKit<T>,
    split: &DomainSplit<T>,
    stops: &[T],
    opts: &InnerOptions,
) -> Result<InnerState<T>> {
    let phi = kit.phi.as_ref().ok_or_else(|| Error::Config("initial profile not built".into()))?;
    let nx = x_grid.len();
    let nt = t_grid.len();
    if coef.inv_b.rows != nx || coef.inv_b.cols != nt || stops.len() != nx {
        return Err(Error::GridMismatch("coefficients, grids and stop heights differ".into()));
    }
    let h = x_grid.min_spacing();
    let cfl = T::lit(opts.cfl);
    let mut p: Vec<T> = x_grid.nodes.iter().map(|&x| -phi.eval(x)).collect();
    let mut q: Vec<T> = p.iter().map(|&v| -v).collect();
    if let Some(j) = q.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::DataUnderflow(format!("initial profile is zero at x = {}", x_grid.nodes[j].f64())));
    }
    let mut pf = Field2::zeros(nx, nt);
    let mut qf = Field2::zeros(nx, nt);
    for j in 0..nx {
        pf.set(j, 0, p[j]);
        qf.set(j, 0, q[j]);
    }
    let mut trace: Vec<Option<TraceSample<T>>> = vec![None; nx];
    let piece_of = |x: T| {
        if x > split.b_plus {
            Piece::Lower
        } else if x < split.b_minus {
            Piece::Upper
        } else {
            Piece::Arc
        }
    };
    for j in 0..nx {
        if stops[j] <= T::zero() {
            trace[j] = Some(TraceSample { x: x_grid.nodes[j], t: T::zero(), p: p[j], q: q[j], piece: piece_of(x_grid.nodes[j]) });
        }
    }
    let mut min_gap = T::infinity();
    let mut min_gap_at = (T::zero(), T::zero());
    let mut note_gap = |gap: T, x: T, t: T| -> Result<()> {
        if !gap.is_finite() {
            return Err(Error::NonFinite { what: "q - p".into(), a: x.f64(), b: t.f64() });
        }
        if gap < min_gap {
            min_gap = gap;
            min_gap_at = (x, t);
        }
        if gap <= T::zero() {
            return Err(Error::Positivity { value: gap.f64(), a: x.f64(), b: t.f64() });
        }
        Ok(())
    };
    for j in 0..nx {
        note_gap(q[j] - p[j], x_grid.nodes[j], T::zero())?;
    }
    let mut max_cfl = T::zero();
    let mut substeps = 0usize;
    let two = T::lit(2.0);
    for n in 0..nt - 1 {
        let (ta, tb) = (t_grid.nodes[n], t_grid.nodes[n + 1]);
        let active: Vec<bool> = (0..nx).map(|j| ta < stops[j]).collect();
        if !active.iter().any(|&a| a) {
            for j in 0..nx {
                pf.set(j, n + 1, p[j]);
                qf.set(j, n + 1, q[j]);
            }
            continue;
        }
        let span = tb - ta;
        let speed_max = (0..nx)
            .filter(|&j| active[j])
            .map(|j| {
                let ib = coef.inv_b.get(j, n).max(coef.inv_b.get(j, n + 1));
                p[j].abs().max(q[j].abs()) * ib
            })
            .fold(T::zero(), T::max);
        let number = span * speed_max / h;
        let m = (number / cfl).ceil().to_usize().unwrap_or(usize::MAX).max(1);
        if m > opts.max_substeps {
            return Err(Error::Cfl { number: number.f64(), limit: opts.cfl, step: n });
        }
        max_cfl = max_cfl.max(number / T::from_usize_lossy(m));
        substeps += m;
        let dt = span / T::from_usize_lossy(m);
        let (p_start, q_start) = (p.clone(), q.clone());
        for s in 0..m {
            let w = (T::from_usize_lossy(s) + T::lit(0.5)) / T::from_usize_lossy(m);
            let at = |f: &Field2<T>, j: usize| f.get(j, n) + w * (f.get(j, n + 1) - f.get(j, n));
            let (pn, qn): (Vec<T>, Vec<T>) = (0..nx)
                .into_par_iter()
                .map(|j| {
                    if !active[j] {
                        return (p[j], q[j]);
                    }
                    let ib = at(&coef.inv_b, j);
                    let lb = at(&coef.dt_log_b, j);
                    let lkt = at(&coef.dt_log_kappa, j);
                    let lkx = at(&coef.dx_log_kappa, j);
                    let upwind = |f: &[T], speed: T| -> T {
                        let (a, b) = if speed > T::zero() {
                            if j == 0 {
                                (0, 0)
                            } else {
                                (j - 1, j)
                            }
                        } else if j + 1 == nx {
                            (j, j)
                        } else {
                            (j, j + 1)
                        };
                        if a == b {
                            T::zero()
                        } else {
                            (f[b] - f[a]) / (x_grid.nodes[b] - x_grid.nodes[a])
                        }
                    };
                    let (pj, qj) = (p[j], q[j]);
                    let sp = (pj - qj) / two * (lkt + pj * ib * lkx) - qj * (T::one() + pj * pj) * lb;
                    let sq = (qj - pj) / two * (lkt + qj * ib * lkx) - pj * (T::one() + qj * qj) * lb;
                    let a_p = qj * ib;
                    let a_q = pj * ib;
                    (pj - dt * a_p * upwind(&p, a_p) + dt * sp, qj - dt * a_q * upwind(&q, a_q) + dt * sq)
                })
                .unzip();
            p = pn;
            q = qn;
        }
        for j in 0..nx {
            pf.set(j, n + 1, p[j]);
            qf.set(j, n + 1, q[j]);
            let x = x_grid.nodes[j];
            if !active[j] {
                continue;
            }
            if tb <= stops[j] {
                note_gap(q[j] - p[j], x, tb)?;
            }
            if trace[j].is_none() && stops[j] <= tb {
                let s = (stops[j] - ta) / span;
                let pt = p_start[j] + s * (p[j] - p_start[j]);
                let qt = q_start[j] + s * (q[j] - q_start[j]);
                note_gap(qt - pt, x, stops[j])?;
                trace[j] = Some(TraceSample { x, t: stops[j], p: pt, q: qt, piece: piece_of(x) });
            }
        }
    }
    let trace: Vec<TraceSample<T>> = trace
        .into_iter()
        .enumerate()
        .map(|(j, s)| s.ok_or_else(|| Error::OutOfRange(format!("column {j} never reached its stop height"))))
        .collect::<Result<_>>()?;
    let decay_constants = boundary_decay_constants(&trace, kit, &split.params());
    Ok(InnerState {
        x_grid: x_grid.clone(),
        t_grid: t_grid.clone(),
        p: pf,
        q: qf,
        stops: stops.to_vec(),
        trace,
        min_gap,
        min_gap_at,
        decay_constants,
        max_cfl,
        substeps,
    })
}

/// Derivatives along the trace by differences in x.
fn boundary_decay_constants<T: Scalar>(trace: &[TraceSample<T>], kit: &InnerBoundaryKit<T>, params: &CurveParams<T>) -> [T; 3] {
    let xs: Vec<T> = trace.iter().map(|s| s.x).collect();
    let mut ps: Vec<T> = trace.iter().map(|s| s.p).collect();
    let mut qs: Vec<T> = trace.iter().map(|s| s.q).collect();
    let mut out = [T::zero(); 3];
    for slot in out.iter_mut() {
        for (i, &x) in xs.iter().enumerate() {
            let w = ((params.t0(x) + params.r) * kit.h2_at(x)).powi(4);
            *slot = slot.max((ps[i].abs() + qs[i].abs()) * w);
        }
        let diff = |f: &[T]| -> Vec<T> {
            let n = f.len();
            (0..n)
                .map(|i| {
                    let (a, b) = if i == 0 { (0, 1) } else if i + 1 == n { (n - 2, n - 1) } else { (i - 1, i + 1) };
                    (f[b] - f[a]) / (xs[b] - xs[a])
                })
                .collect()
        };
        if xs.len() < 2 {
            break;
        }
        ps = diff(&ps);
        qs = diff(&qs);
    }
    out
}

/// One transformed sample on ∂Ω̃₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundarySample<T> {
    pub x: T,
    pub t: T,
    pub rho: T,
    pub theta: T,
    /// dθ/dρ of the boundary curve (zero on the arc).
    pub curve_slope: T,
    /// G·push(q/B) and G·push(p/B): the smaller and larger polar slope times G.
    pub p_tilde: T,
    pub q_tilde: T,
    pub u: T,
    pub v: T,
}

impl<T: Scalar> BoundarySample<T> {
    pub fn w(&self, g: T) -> T {
        self.p_tilde / g
    }
}

/// Regime exponents (α, β).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// (α, β) = (0, 1), for increasing K̄.
    Increasing,
    /// (α, β) = (1, 0), for decreasing K̄.
    Decreasing,
}

impl Regime {
    pub fn exponents<T: Scalar>(self) -> (T, T) {
        match self {
            Regime::Increasing => (T::zero(), T::one()),
            Regime::Decreasing => (T::one(), T::zero()),
        }
    }
}

/// Transformed data on Γ₀ (the arc, sorted by θ) and on the two curves (sorted by ρ).
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryData<T> {
    pub regime: Regime,
    pub arc: Vec<BoundarySample<T>>,
    pub lower: Vec<BoundarySample<T>>,
    pub upper: Vec<BoundarySample<T>>,
    pub min_denominator: T,
    /// min over the lower curve of min(w, z) − θ₁′ and over the upper of θ₂′ − max(w, z).
    pub spacelike_margin: [T; 2],
}

fn lerp_samples<T: Scalar>(s: &[BoundarySample<T>], key: impl Fn(&BoundarySample<T>) -> T, at: T) -> (T, T) {
    let xs: Vec<T> = s.iter().map(&key).collect();
    let u: Vec<T> = s.iter().map(|b| b.u).collect();
    let v: Vec<T> = s.iter().map(|b| b.v).collect();
    (linear(&xs, &u, at), linear(&xs, &v, at))
}

impl<T: Scalar> BoundaryData<T> {
    /// (u, v) on ρ = R₁ at θ, clamped at the ends.
    pub fn arc_at(&self, theta: T) -> (T, T) {
        lerp_samples(&self.arc, |b| b.theta, theta)
    }

    pub fn lower_at(&self, rho: T) -> Result<(T, T)> {
        Self::curve_at(&self.lower, rho)
    }

    pub fn upper_at(&self, rho: T) -> Result<(T, T)> {
        Self::curve_at(&self.upper, rho)
    }

    fn curve_at(s: &[BoundarySample<T>], rho: T) -> Result<(T, T)> {
        let last = s.last().ok_or(Error::EmptyMesh)?;
        if rho > last.rho * T::lit(1.0 + 1e-12) {
            return Err(Error::OutOfRange(format!("boundary data ends at rho = {}", last.rho.f64())));
        }
        Ok(lerp_samples(s, |b| b.rho, rho))
    }

    pub fn max_rho(&self) -> T {
        let a = self.lower.last().map_or(T::zero(), |s| s.rho);
        let b = self.upper.last().map_or(T::zero(), |s| s.rho);
        a.min(b)
    }
}

/// Pushes (p, q) through the chart and assembles (u, v) = G^{α−1}k^{−β}(p̃ + q̃, q̃ − p̃).
pub fn trace_boundary<T: Scalar>(
    inner: &InnerState<T>,
    integ: &ColumnIntegrator<'_, T>,
    spec: &CurvatureSpec<T>,
    split: &DomainSplit<T>,
    regime: Regime,
) -> Result<BoundaryData<T>> {
    let (alpha, beta) = regime.exponents::<T>();
    let params = split.params();
    let samples: Vec<(BoundarySample<T>, Piece, T)> = inner
        .trace
        .par_iter()
        .map(|s| -> Result<(BoundarySample<T>, Piece, T)> {
            let st = integ.point(s.x, s.t)?;
            let cs = ChartSample::from_state(&st, s.x.signum());
            let den_p = cs.rho_t() + s.p / cs.b * cs.rho_x();
            let den_q = cs.rho_t() + s.q / cs.b * cs.rho_x();
            let den = den_p.min(den_q);
            if !(den >= T::lit(0.25)) {
                return Err(Error::DegenerateDirection { denominator: den.f64() });
            }
            let q_tilde = cs.g * push_slope(s.p / cs.b, &cs)?;
            let p_tilde = cs.g * push_slope(s.q / cs.b, &cs)?;
            let k = spec.k(cs.theta, cs.rho);
            let f = cs.g.powf(alpha - T::one()) * k.powf(-beta);
            let u = f * (p_tilde + q_tilde);
            // q̃ − p̃ = (q − p)/(den_p den_q), free of the cancellation in the direct difference
            let v = f * (s.q - s.p) / (den_p * den_q);
            if !(v > T::zero()) {
                return Err(Error::Positivity { value: v.f64(), a: cs.rho.f64(), b: cs.theta.f64() });
            }
            let curve_slope = if s.piece == Piece::Arc {
                T::zero()
            } else {
                let tp = params.t0_prime(s.x);
                (cs.theta_t() * tp + cs.theta_x()) / (cs.rho_t() * tp + cs.rho_x())
            };
            let rho = if s.piece == Piece::Arc { split.r1 } else { cs.rho };
            Ok((BoundarySample { x: s.x, t: s.t, rho, theta: cs.theta, curve_slope, p_tilde, q_tilde, u, v }, s.piece, den))
        })
        .collect::<Result<Vec<_>>>()?;
    let min_denominator = samples.iter().map(|s| s.2).fold(T::infinity(), T::min);
    let pick = |p: Piece| -> Vec<BoundarySample<T>> { samples.iter().filter(|s| s.1 == p).map(|s| s.0).collect() };
    let mut arc = pick(Piece::Arc);
    let mut lower = pick(Piece::Lower);
    let mut upper = pick(Piece::Upper);
    if arc.is_empty() || lower.is_empty() || upper.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let by = |f: fn(&BoundarySample<T>) -> T| move |a: &BoundarySample<T>, b: &BoundarySample<T>| f(a).partial_cmp(&f(b)).unwrap_or(std::cmp::Ordering::Equal);
    arc.sort_by(by(|s| s.theta));
    lower.sort_by(by(|s| s.rho));
    upper.sort_by(by(|s| s.rho));
    // anchor each curve at ρ = R₁ with the arc end nearest to it
    let mut lo0 = arc[0];
    lo0.curve_slope = split.theta1.slope(split.r1.max(split.theta1.domain().0));
    lower.insert(0, lo0);
    let mut up0 = *arc.last().unwrap();
    up0.curve_slope = split.theta2.slope(split.r1.max(split.theta2.domain().0));
    upper.insert(0, up0);
    let margin = |s: &[BoundarySample<T>], lower_side: bool| -> Result<T> {
        s.iter().skip(1).try_fold(T::infinity(), |m, b| {
            let g = integ.polar.eval(b.theta, b.rho)?.g;
            let (w, z) = (b.p_tilde / g, b.q_tilde / g);
            let d = if lower_side { w.min(z) - b.curve_slope } else { b.curve_slope - w.max(z) };
            Ok(m.min(d))
        })
    };
    let spacelike_margin = [margin(&lower, true)?, margin(&upper, false)?];
    Ok(BoundaryData { regime, arc, lower, upper, min_denominator, spacelike_margin })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_params() -> CurveParams<f64> {
        CurveParams { r: 5.0, mu: 1.6, r1: 18.0 }
    }

    #[test]
    fn omega_is_a_cutoff() {
        assert_eq!(omega(0.1f64), 0.0);
        assert_eq!(omega(0.25f64), 0.0);
        assert_eq!(omega(1.0f64), 1.0);
        assert!((omega(0.625f64) - 0.5).abs() < 1e-15);
        let mut last = 0.0;
        for i in 0..=100 {
            let v = omega(0.25 + 0.0075 * i as f64);
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn flat_kit_h2_dominates_h1() {
        let y: Vec<f64> = (0..50).map(|i| 0.1 * i as f64).collect();
        let kit = InnerBoundaryKit::from_h1(y.clone(), vec![2.0; 50], &flat_params());
        for i in 0..50 {
            assert!(kit.h2[i] >= 1.0 + kit.h1[i]);
            if i > 0 {
                assert!(kit.h2[i] >= kit.h2[i - 1]);
            }
        }
    }

    /// log of ∫₀^∞ K(y) W(y) dy / K(1/4) with W(y) = ∫₀^y e^{−η²}ω(η) dη, by composite Simpson
    /// in the swapped integration order.
    fn shifted_oracle(kit: &InnerBoundaryKit<f64>, p: &CurveParams<f64>, mode: PhiMode, y_hi: f64, n: usize) -> f64 {
        let h = y_hi / n as f64;
        let wf = |e: f64| (-e * e).exp() * omega(e);
        let shift = log_kernel(kit, p, mode, 0.25);
        let mut w = vec![0.0; n + 1];
        for i in 1..=n {
            let (a, b) = ((i - 1) as f64 * h, i as f64 * h);
            w[i] = w[i - 1] + (b - a) / 6.0 * (wf(a) + 4.0 * wf(0.5 * (a + b)) + wf(b));
        }
        let f = |i: usize| if w[i] == 0.0 { 0.0 } else { (log_kernel(kit, p, mode, i as f64 * h) - shift).exp() * w[i] };
        let mut s = f(0) + f(n);
        for i in 1..n {
            s += f(i) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        (s * h / 3.0).ln()
    }

    #[test]
    fn envelope_phi_shape() {
        let p = flat_params();
        let y: Vec<f64> = (0..200).map(|i| 0.05 * i as f64).collect();
        let mut kit = InnerBoundaryKit::from_h1(y, vec![2.0; 200], &p);
        let opts = PhiOptions { nodes: 257, ..PhiOptions::default() };
        let phi = initial_phi(&kit, &p, &opts).unwrap();
        assert!((phi.eval(0.0) - 0.05).abs() < 1e-15);
        assert!((phi.eval(0.2) - phi.eval(0.0)).abs() < 1e-15);
        for i in 0..100 {
            let x = 0.05 * i as f64;
            assert_eq!(phi.eval(x), phi.eval(-x));
            if x >= 1.0 {
                assert!(phi.eval(x + 0.05) <= phi.eval(x));
                assert!(phi.slope(x) <= 0.0);
            }
        }
        kit.phi = Some(phi);
    }

    #[test]
    fn verbatim_phi_matches_swapped_order_quadrature() {
        let p = flat_params();
        let y: Vec<f64> = (0..200).map(|i| 0.05 * i as f64).collect();
        let kit = InnerBoundaryKit::from_h1(y, vec![2.0; 200], &p);
        let opts = PhiOptions { mode: PhiMode::Verbatim, quad_tol: 1e-12, nodes: 513, ..PhiOptions::default() };
        let phi = initial_phi(&kit, &p, &opts).unwrap();
        let lp = phi.log_at_zero();
        assert!(lp < -700.0, "verbatim phi(0) should underflow f64, log = {lp}");
        let shift = log_kernel(&kit, &p, PhiMode::Verbatim, 0.25);
        let log_oracle = shifted_oracle(&kit, &p, PhiMode::Verbatim, 0.5, 400_000) + shift - (64.0 * std::f64::consts::PI.powi(2)).ln();
        assert!((lp - log_oracle).abs() < 1e-6, "{lp} vs {log_oracle}");
    }
}
