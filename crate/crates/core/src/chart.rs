//! The transform F from geodesic coordinates (x, t) to geodesic polar coordinates (θ, ρ).

use crate::curvature::CurvatureSpec;
use crate::error::{Error, Result};
use crate::metric::{GeodesicMetric, PolarMetric};
use crate::numerics::grid::{Field2, Grid1};
use crate::numerics::interp::{hermite, HermiteCurve};
use crate::numerics::ode::rk4_step;
use crate::scalar::Scalar;
use rayon::prelude::*;
use serde::Serialize;

/// (tanh Φ, sech Φ) without overflow.
#[inline]
pub fn phi_encoding<T: Scalar>(phi: T) -> (T, T) {
    let e = (-T::lit(2.0) * phi.abs()).exp();
    let th = (T::one() - e) / (T::one() + e);
    let sech = T::lit(2.0) * (-phi.abs()).exp() / (T::one() + e);
    (if phi < T::zero() { -th } else { th }, sech)
}

/// Integrator for single chart columns, also carrying B along the column.
#[derive(Clone, Copy)]
pub struct ColumnIntegrator<'a, T> {
    pub polar: &'a PolarMetric<T>,
    pub spec: &'a CurvatureSpec<T>,
    pub step: T,
    pub floor: T,
}

/// Chart and metric state at one point of a column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnState<T> {
    pub t: T,
    pub rho: T,
    pub theta: T,
    pub phi: T,
    pub b: T,
    pub bt: T,
    pub g: T,
}

impl<'a, T: Scalar> ColumnIntegrator<'a, T> {
    /// States at the increasing nodes `ts` (starting at or after 0) of the column through `x`.
    pub fn trace(&self, x: T, ts: &[T]) -> Result<Vec<ColumnState<T>>> {
        if x.abs() < self.floor {
            return Err(Error::BelowFloor { x: x.f64(), floor: self.floor.f64() });
        }
        let xi = x.signum();
        let theta0 = if x > T::zero() { T::zero() } else { T::PI() };
        let mut y = [x.abs(), theta0, T::zero(), T::one(), T::zero()];
        let mut t = T::zero();
        let err: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
        let polar = self.polar;
        let spec = self.spec;
        let rhs = |_t: T, s: &[T; 5]| -> [T; 5] {
            let p = match polar.eval(s[1], s[0]) {
                Ok(p) => p,
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    return [T::zero(); 5];
                }
            };
            let (th, sech) = phi_encoding(s[2]);
            let k = spec.k(s[1], s[0]);
            [th, xi * sech / p.g, p.dg / p.g, s[4], k * k * s[3]]
        };
        let mut out = Vec::with_capacity(ts.len());
        for &tn in ts {
            let span = tn - t;
            if span > T::zero() {
                let m = (span / self.step).ceil().to_usize().unwrap_or(1).max(1);
                let dt = span / T::from_usize_lossy(m);
                for i in 0..m {
                    y = rk4_step(&mut &rhs, t + dt * T::from_usize_lossy(i), &y, dt);
                }
                if let Some(e) = err.borrow_mut().take() {
                    return Err(e);
                }
                t = tn;
            }
            let g = self.polar.eval(y[1], y[0])?.g;
            out.push(ColumnState { t: tn, rho: y[0], theta: y[1], phi: y[2], b: y[3], bt: y[4], g });
        }
        Ok(out)
    }

    /// State at a single point.
    pub fn point(&self, x: T, t: T) -> Result<ColumnState<T>> {
        Ok(self.trace(x, &[t])?[0])
    }
}

/// Samples of F on an (x, t) grid (rows x, columns t).
#[derive(Debug, Clone)]
pub struct ChartMap<T> {
    pub x_grid: Grid1<T>,
    pub t_grid: Grid1<T>,
    pub rho: Field2<T>,
    pub theta: Field2<T>,
    pub tanh_phi: Field2<T>,
    pub sech_phi: Field2<T>,
    /// G at the image point.
    pub g: Field2<T>,
    /// ξ per column.
    pub xi: Vec<T>,
    /// |det DF| = B/G, filled once the geodesic metric exists.
    pub jacobian: Option<Field2<T>>,
    /// Sign of det DF for θ = atan2(t, x): −1.
    pub orientation: i8,
}

/// One chart sample with everything the slope maps need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartSample<T> {
    pub rho: T,
    pub theta: T,
    pub tanh_phi: T,
    pub sech_phi: T,
    pub g: T,
    pub b: T,
    pub xi: T,
}

impl<T: Scalar> ChartSample<T> {
    pub fn rho_t(&self) -> T {
        self.tanh_phi
    }
    pub fn theta_t(&self) -> T {
        self.xi * self.sech_phi / self.g
    }
    pub fn rho_x(&self) -> T {
        self.xi * self.b * self.sech_phi
    }
    pub fn theta_x(&self) -> T {
        -self.b * self.tanh_phi / self.g
    }
    /// 1/sinh Φ = sech/tanh.
    pub fn inv_sinh_phi(&self) -> T {
        self.sech_phi / self.tanh_phi
    }
    /// Signed determinant θ_x ρ_t − θ_t ρ_x = −B/G.
    pub fn signed_jacobian(&self) -> T {
        self.theta_x() * self.rho_t() - self.theta_t() * self.rho_x()
    }

    pub fn from_state(s: &ColumnState<T>, xi: T) -> Self {
        let (th, sech) = phi_encoding(s.phi);
        ChartSample { rho: s.rho, theta: s.theta, tanh_phi: th, sech_phi: sech, g: s.g, b: s.b, xi }
    }
}

/// Integrates dρ/dt = tanh Φ, dθ/dt = ξ/(G cosh Φ), dΦ/dt = ∂ρ log G per column.
pub fn build_chart<T: Scalar>(
    polar: &PolarMetric<T>,
    spec: &CurvatureSpec<T>,
    x_grid: &Grid1<T>,
    t_grid: &Grid1<T>,
    step: T,
    floor: T,
) -> Result<ChartMap<T>> {
    let xmax = x_grid.nodes.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if t_grid.last() + xmax > polar.rho_max() {
        return Err(Error::OutOfRange(format!(
            "chart reaches rho = {} beyond the polar metric's {}",
            (t_grid.last() + xmax).f64(),
            polar.rho_max().f64()
        )));
    }
    if t_grid.first() != T::zero() {
        return Err(Error::InvalidParameter { name: "t_grid".into(), reason: "must start at 0".into() });
    }
    let integ = ColumnIntegrator { polar, spec, step, floor };
    let cols: Vec<Vec<ColumnState<T>>> = x_grid
        .nodes
        .par_iter()
        .map(|&x| integ.trace(x, &t_grid.nodes))
        .collect::<Result<Vec<_>>>()?;
    let field = |f: &dyn Fn(&ColumnState<T>) -> T| Field2::from_rows(cols.iter().map(|c| c.iter().map(f).collect()).collect());
    Ok(ChartMap {
        x_grid: x_grid.clone(),
        t_grid: t_grid.clone(),
        rho: field(&|s| s.rho),
        theta: field(&|s| s.theta),
        tanh_phi: field(&|s| phi_encoding(s.phi).0),
        sech_phi: field(&|s| phi_encoding(s.phi).1),
        g: field(&|s| s.g),
        xi: x_grid.nodes.iter().map(|x| x.signum()).collect(),
        jacobian: None,
        orientation: -1,
    })
}

impl<T: Scalar> ChartMap<T> {
    /// (ρ, θ) at column `j` and arbitrary t, Hermite in t with the exact t-derivatives.
    pub fn interpolate(&self, j: usize, t: T) -> Result<(T, T)> {
        let (n, s) = self
            .t_grid
            .locate(t)
            .ok_or_else(|| Error::OutOfRange(format!("t = {} outside chart", t.f64())))?;
        let h = self.t_grid.nodes[n + 1] - self.t_grid.nodes[n];
        let rt = |m: usize| self.tanh_phi.get(j, m);
        let tt = |m: usize| self.xi[j] * self.sech_phi.get(j, m) / self.g.get(j, m);
        let rho = hermite(self.rho.get(j, n), rt(n), self.rho.get(j, n + 1), rt(n + 1), h, s);
        let theta = hermite(self.theta.get(j, n), tt(n), self.theta.get(j, n + 1), tt(n + 1), h, s);
        Ok((rho, theta))
    }

    pub fn sample(&self, j: usize, n: usize, b: T) -> ChartSample<T> {
        ChartSample {
            rho: self.rho.get(j, n),
            theta: self.theta.get(j, n),
            tanh_phi: self.tanh_phi.get(j, n),
            sech_phi: self.sech_phi.get(j, n),
            g: self.g.get(j, n),
            b,
            xi: self.xi[j],
        }
    }

    /// Fills the deferred Jacobian magnitude B/G.
    pub fn attach_jacobian(&mut self, geo: &GeodesicMetric<T>) -> Result<()> {
        if geo.b.rows != self.rho.rows || geo.b.cols != self.rho.cols {
            return Err(Error::GridMismatch("geodesic metric and chart differ".into()));
        }
        let mut j = Field2::zeros(self.rho.rows, self.rho.cols);
        for i in 0..j.data.len() {
            j.data[i] = geo.b.data[i] / self.g.data[i];
        }
        self.jacobian = Some(j);
        Ok(())
    }
}

/// (θ_t + ζθ_x)/(ρ_t + ζρ_x).
pub fn push_slope<T: Scalar>(zeta: T, at: &ChartSample<T>) -> Result<T> {
    let den = at.rho_t() + zeta * at.rho_x();
    if !(den.abs() >= T::lit(1e-8)) {
        return Err(Error::DegenerateDirection { denominator: den.f64() });
    }
    Ok((at.theta_t() + zeta * at.theta_x()) / den)
}

/// Inverse of [`push_slope`]: (ζ̃ρ_t − θ_t)/(θ_x − ζ̃ρ_x).
pub fn pull_slope<T: Scalar>(zeta_polar: T, at: &ChartSample<T>) -> Result<T> {
    let den = at.theta_x() - zeta_polar * at.rho_x();
    if !(den.abs() >= T::lit(1e-8)) {
        return Err(Error::DegenerateDirection { denominator: den.f64() });
    }
    Ok((zeta_polar * at.rho_t() - at.theta_t()) / den)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartResiduals {
    pub encoding: f64,
    pub unit_speed: f64,
    pub x_metric: f64,
    pub orthogonality: f64,
    pub jacobian: f64,
    pub x_derivative_consistency: f64,
    pub triangle_violations: usize,
    pub phi_bound_violations: usize,
}

/// Residuals of the metric-compatibility relations with x-derivatives by centered differences.
pub fn verify_chart<T: Scalar>(chart: &ChartMap<T>, polar: &PolarMetric<T>, geo: &GeodesicMetric<T>) -> Result<ChartResiduals> {
    if geo.b.rows != chart.rho.rows || geo.b.cols != chart.rho.cols {
        return Err(Error::GridMismatch("geodesic metric and chart differ".into()));
    }
    let mut r = ChartResiduals {
        encoding: 0.0,
        unit_speed: 0.0,
        x_metric: 0.0,
        orthogonality: 0.0,
        jacobian: 0.0,
        x_derivative_consistency: 0.0,
        triangle_violations: 0,
        phi_bound_violations: 0,
    };
    let nx = chart.x_grid.len();
    for j in 0..nx {
        let x = chart.x_grid.nodes[j];
        let ax = x.abs().f64();
        for n in 0..chart.t_grid.len() {
            let t = chart.t_grid.nodes[n].f64();
            let s = chart.sample(j, n, geo.b.get(j, n));
            let g = polar.eval(s.theta, s.rho)?.g;
            let (th, se) = (s.tanh_phi.f64(), s.sech_phi.f64());
            r.encoding = r.encoding.max((th * th + se * se - 1.0).abs());
            let speed = s.rho_t() * s.rho_t() + g * g * s.theta_t() * s.theta_t() - T::one();
            r.unit_speed = r.unit_speed.max(speed.f64().abs());
            let rho = s.rho.f64();
            let slack = 1e-9 * (1.0 + rho);
            if rho < t - slack || rho > t + ax + slack || rho < ax / 2.0 - slack {
                r.triangle_violations += 1;
            }
            // Φ bounds: e^Φ ≥ (t+|x|)/|x| ⇔ (1+tanh)/sech ≥ (t+|x|)/|x|, and 1 − tanh ≤ 2|x|/(t+|x|)
            let ephi = (1.0 + th) / se;
            if ephi < (t + ax) / ax * (1.0 - 1e-9) || 1.0 - th > 2.0 * ax / (t + ax) * (1.0 + 1e-9) + 1e-15 {
                r.phi_bound_violations += 1;
            }
            if nx >= 3 && j > 0 && j + 1 < nx && chart.xi[j - 1] == chart.xi[j + 1] {
                let h = chart.x_grid.nodes[j + 1] - chart.x_grid.nodes[j - 1];
                let rho_x = (chart.rho.get(j + 1, n) - chart.rho.get(j - 1, n)) / h;
                let theta_x = (chart.theta.get(j + 1, n) - chart.theta.get(j - 1, n)) / h;
                let b = s.b;
                let xm = rho_x * rho_x + g * g * theta_x * theta_x - b * b;
                r.x_metric = r.x_metric.max((xm / (b * b)).f64().abs());
                let orth = s.rho_t() * rho_x + g * g * s.theta_t() * theta_x;
                r.orthogonality = r.orthogonality.max((orth / b).f64().abs());
                let det = (theta_x * s.rho_t() - s.theta_t() * rho_x).abs();
                let jac = chart.jacobian.as_ref().map_or(b / g, |f| f.get(j, n));
                r.jacobian = r.jacobian.max((det - jac).f64().abs());
                let cons = (rho_x - s.rho_x()).abs() + g * (theta_x - s.theta_x()).abs();
                r.x_derivative_consistency = r.x_derivative_consistency.max((cons / b).f64());
            }
        }
    }
    Ok(r)
}

/// Inner/outer split along t₀(x) = R(1+x²)^{μ/2}.
#[derive(Debug, Clone)]
pub struct DomainSplit<T> {
    pub r: T,
    pub r1: T,
    pub mu: T,
    pub b_minus: T,
    pub b_plus: T,
    /// Lower boundary θ₁(ρ): image of the curve for x > b₊.
    pub theta1: HermiteCurve<T>,
    /// Upper boundary θ₂(ρ): image of the curve for x < b₋.
    pub theta2: HermiteCurve<T>,
    /// Curve samples per side: (x, ρ, θ, dθ/dρ).
    pub curve1: Vec<[T; 4]>,
    pub curve2: Vec<[T; 4]>,
    pub rho_end: T,
    pub c0: T,
    /// sup ρ|θᵢ′(ρ)| over both curves.
    pub max_rho_dtheta: T,
}

impl<T: Scalar> DomainSplit<T> {
    pub fn t0(&self, x: T) -> T {
        t0_curve(self.r, self.mu, x)
    }

    pub fn t0_prime(&self, x: T) -> T {
        self.r * self.mu * x * (T::one() + x * x).powf(self.mu / T::lit(2.0) - T::one())
    }

    /// I(ρ) = [θ₁(ρ), θ₂(ρ)] with the boundary slopes.
    pub fn interval(&self, rho: T) -> ([T; 2], [T; 2]) {
        (
            [self.theta1.eval(rho), self.theta2.eval(rho)],
            [self.theta1.slope(rho), self.theta2.slope(rho)],
        )
    }

    /// Whether (x, t) lies in Ω₁ given ρ(x, t). Ω₁ is read as {t ≤ t₀(x)} ∪ {ρ ≤ R₁}, the region
    /// whose boundary is the arc ρ = R₁ over [b₋, b₊] and the curve t = t₀(x) outside.
    pub fn in_inner(&self, x: T, t: T, rho: T) -> bool {
        t <= self.t0(x) * T::lit(1.0 + 1e-12) || rho <= self.r1 * T::lit(1.0 + 1e-12)
    }

    pub fn params(&self) -> CurveParams<T> {
        CurveParams { r: self.r, mu: self.mu, r1: self.r1 }
    }
}

/// The scalars defining t₀ and R₁.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveParams<T> {
    pub r: T,
    pub mu: T,
    pub r1: T,
}

impl<T: Scalar> CurveParams<T> {
    pub fn t0(&self, x: T) -> T {
        t0_curve(self.r, self.mu, x)
    }

    pub fn t0_prime(&self, x: T) -> T {
        self.r * self.mu * x * (T::one() + x * x).powf(self.mu / T::lit(2.0) - T::one())
    }
}

pub fn t0_curve<T: Scalar>(r: T, mu: T, x: T) -> T {
    r * (T::one() + x * x).powf(mu / T::lit(2.0))
}

/// μ = 2/(2 − 3δ).
pub fn mu_of_delta<T: Scalar>(delta: T) -> T {
    T::lit(2.0) / (T::lit(2.0) - T::lit(3.0) * delta)
}

#[derive(Debug, Clone, Copy)]
pub struct SplitOptions<T> {
    /// ρ up to which θᵢ(ρ) is tabulated.
    pub rho_end: T,
    /// Curve samples per side.
    pub n_curve: usize,
    /// Samples for the maximization over |x| ≤ 2.
    pub n_max: usize,
}

/// Computes R₁, b±, and tabulates θ₁, θ₂ along the image of t = t₀(x).
pub fn build_domain_split<T: Scalar>(
    integ: &ColumnIntegrator<'_, T>,
    spec: &CurvatureSpec<T>,
    r: T,
    opts: SplitOptions<T>,
) -> Result<DomainSplit<T>> {
    if r < T::one() {
        return Err(Error::InvalidParameter { name: "R".into(), reason: "must be at least 1".into() });
    }
    let mu = mu_of_delta(spec.delta);
    let rho_on_curve = |x: T| -> Result<T> { Ok(integ.point(x, t0_curve(r, mu, x))?.rho) };

    // R₁ = max over |x| ≤ 2, sampled then refined by golden section
    let two = T::lit(2.0);
    let n = opts.n_max.max(8);
    let xs: Vec<T> = (0..=n)
        .map(|i| -two + two * two * T::from_usize_lossy(i) / T::from_usize_lossy(n))
        .filter(|x| x.abs() >= integ.floor)
        .collect();
    let vals: Vec<T> = xs.par_iter().map(|&x| rho_on_curve(x)).collect::<Result<Vec<_>>>()?;
    let (ibest, _) = vals.iter().enumerate().fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let mut r1 = vals[ibest];
    if ibest > 0 && ibest + 1 < xs.len() && xs[ibest - 1].signum() == xs[ibest + 1].signum() {
        let (mut a, mut b) = (xs[ibest - 1], xs[ibest + 1]);
        let gr = T::lit(0.618_033_988_749_894_9);
        for _ in 0..40 {
            let c = b - gr * (b - a);
            let d = a + gr * (b - a);
            if rho_on_curve(c)? > rho_on_curve(d)? {
                b = d;
            } else {
                a = c;
            }
        }
        r1 = r1.max(rho_on_curve((a + b) / two)?);
    }

    // x beyond which ρ(x, t₀(x)) ≥ rho_end
    let mut x_end = two;
    while rho_on_curve(x_end)? < opts.rho_end {
        x_end = x_end * T::lit(1.5);
        if x_end > T::lit(1e6) {
            return Err(Error::Structural("curve image never reaches rho_end".into()));
        }
    }
    let root = |sign: T| -> Result<T> {
        let (mut lo, mut hi) = (two, x_end);
        if rho_on_curve(sign * lo)? >= r1 {
            return Ok(sign * lo);
        }
        for _ in 0..80 {
            let mid = (lo + hi) / two;
            if rho_on_curve(sign * mid)? < r1 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(sign * (lo + hi) / two)
    };
    let b_plus = root(T::one())?;
    let b_minus = root(-T::one())?;

    let side = |b: T, sign: T| -> Result<Vec<[T; 4]>> {
        let m = opts.n_curve.max(8);
        let xs: Vec<T> = (0..=m)
            .map(|i| {
                let s = T::from_usize_lossy(i) / T::from_usize_lossy(m);
                // quadratic clustering towards b
                b + sign * (x_end - b.abs()) * s * s
            })
            .collect();
        xs.par_iter()
            .map(|&x| -> Result<[T; 4]> {
                let t = t0_curve(r, mu, x);
                let st = integ.point(x, t)?;
                let cs = ChartSample::from_state(&st, x.signum());
                let tp = r * mu * x * (T::one() + x * x).powf(mu / two - T::one());
                let dtheta = (cs.theta_t() * tp + cs.theta_x()) / (cs.rho_t() * tp + cs.rho_x());
                Ok([x, st.rho, st.theta, dtheta])
            })
            .collect()
    };
    let curve1 = side(b_plus, T::one())?;
    let curve2 = side(b_minus, -T::one())?;
    for c in [&curve1, &curve2] {
        if c.windows(2).any(|w| w[1][1] <= w[0][1]) {
            return Err(Error::Structural("curve image not monotone in rho beyond b".into()));
        }
    }
    let hermite_of = |c: &Vec<[T; 4]>| {
        HermiteCurve::new(c.iter().map(|s| s[1]).collect(), c.iter().map(|s| s[2]).collect(), c.iter().map(|s| s[3]).collect())
    };
    let max_rho_dtheta = curve1
        .iter()
        .chain(curve2.iter())
        .map(|s| (s[1] * s[3]).abs())
        .fold(T::zero(), T::max);
    Ok(DomainSplit {
        r,
        r1,
        mu,
        b_minus,
        b_plus,
        theta1: hermite_of(&curve1),
        theta2: hermite_of(&curve2),
        curve1,
        curve2,
        rho_end: opts.rho_end,
        c0: r1 / r,
        max_rho_dtheta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::FamilyTag;
    use crate::metric::{periodic_theta, solve_polar_metric};

    fn flat() -> (CurvatureSpec<f64>, PolarMetric<f64>) {
        let spec = CurvatureSpec::new(FamilyTag::Constant { k: 0.0 }, 0.5, None).unwrap();
        let polar = solve_polar_metric(&spec, &periodic_theta(8), &Grid1::uniform(0.0, 40.0, 4001), 0.0025).unwrap();
        (spec, polar)
    }

    #[test]
    fn encoding_is_stable() {
        let (t, s) = phi_encoding(800.0f64);
        assert_eq!(t, 1.0);
        assert!(s >= 0.0 && s < 1e-300);
        let (t, s) = phi_encoding(0.3f64);
        assert!((t - 0.3f64.tanh()).abs() < 1e-15 && (s - 1.0 / 0.3f64.cosh()).abs() < 1e-15);
    }

    #[test]
    fn flat_push_of_zero_slope() {
        let (spec, polar) = flat();
        let integ = ColumnIntegrator { polar: &polar, spec: &spec, step: 1e-3, floor: 1e-3 };
        let st = integ.point(1.0, 1.0).unwrap();
        let s = ChartSample::from_state(&st, 1.0);
        // ζ = 0 is the t-direction, whose image has dθ/dρ = θ_t/ρ_t = (x/ρ²)/(t/ρ) = x/(ρ t)
        let v = push_slope(0.0, &s).unwrap();
        assert!((v - 1.0 / 2f64.sqrt()).abs() < 1e-9);
        assert!((pull_slope(v, &s).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn flat_domain_split_r1() {
        let (spec, polar) = flat();
        let integ = ColumnIntegrator { polar: &polar, spec: &spec, step: 2e-3, floor: 1e-3 };
        let split = build_domain_split(&integ, &spec, 5.0, SplitOptions { rho_end: 30.0, n_curve: 64, n_max: 40 }).unwrap();
        // oracle: direct maximization of √(x² + t₀(x)²) over |x| ≤ 2
        let mu = 1.6f64;
        let oracle = (0..=4000)
            .map(|i| {
                let x = -2.0 + 4.0 * i as f64 / 4000.0;
                (x * x + (5.0 * (1.0 + x * x).powf(mu / 2.0)).powi(2)).sqrt()
            })
            .fold(0.0, f64::max);
        assert!((split.r1 - oracle).abs() < 1e-8 * oracle, "{} vs {}", split.r1, oracle);
        assert!(split.b_minus < 0.0 && split.b_plus > 0.0);
        assert!(split.r1 >= 2.0 * split.r);
        // θ₁ lies below θ₂ and both approach π/2
        let ([a, b], _) = split.interval(25.0);
        assert!(a < std::f64::consts::FRAC_PI_2 && b > std::f64::consts::FRAC_PI_2);
    }
}
