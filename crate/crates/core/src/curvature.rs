//! Curvature families in the decomposition K = -a² K★, admissibility and regime selection.

use crate::error::{Error, Result};
use crate::numerics::quad::{doubling_tail, integrate, QuadOptions, Tail};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::OnceLock;

/// Built-in family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FamilyTag {
    Constant { k: f64 },
    LogPower { gamma0: f64, scale: f64 },
    OscillatingLogPower { gamma0: f64, scale: f64 },
    PurePower { eta: f64, scale: f64, theta_amp: f64 },
}

impl FamilyTag {
    pub fn name(&self) -> &'static str {
        match self {
            FamilyTag::Constant { .. } => "constant",
            FamilyTag::LogPower { .. } => "log_power",
            FamilyTag::OscillatingLogPower { .. } => "oscillating_log_power",
            FamilyTag::PurePower { .. } => "pure_power",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
}

/// Log-derivatives of the oscillation factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogOscillation<T> {
    pub log_a: T,
    /// ∂θⁱ log a, i = 1, 2, 3.
    pub d_theta: [T; 3],
    pub d_rho: T,
    /// ∂θⁱ ∂ρ log a, i = 1, 2, 3.
    pub d_theta_d_rho: [T; 3],
}

/// Partials of the oscillation factor itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationPartials<T> {
    pub a: T,
    pub d_theta: [T; 3],
    pub d_rho: T,
    pub d_theta_d_rho: [T; 3],
}

/// log k and its first partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogK<T> {
    pub log_k: T,
    pub d_rho: T,
    pub d_theta: T,
}

/// Second-order Taylor data used to continue log k★ below the family's formula domain.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Core<T> {
    join: T,
    width: T,
    l0: T,
    l1: T,
    l2: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureSpec<T> {
    pub gamma: T,
    pub delta: T,
    pub rho_mono: T,
    /// Start of the family's closed-form domain; a smooth bounded continuation is used below it.
    pub rho_join: T,
    pub family: FamilyTag,
    core: Option<Core<T>>,
}

const CORE_WIDTH: f64 = 0.5;

impl<T: Scalar> CurvatureSpec<T> {
    pub fn new(family: FamilyTag, gamma: f64, rho_mono: Option<f64>) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(invalid("gamma", "must lie in (0, 1)"));
        }
        let rho_join = match family {
            FamilyTag::Constant { k } => {
                if !(k >= 0.0 && k.is_finite()) {
                    return Err(invalid("k", "must be finite and nonnegative"));
                }
                0.0
            }
            FamilyTag::LogPower { gamma0, scale } | FamilyTag::OscillatingLogPower { gamma0, scale } => {
                if !(gamma0 > 0.0 && gamma0.is_finite()) {
                    return Err(invalid("gamma0", "must be positive"));
                }
                check_scale(scale)?;
                2.0
            }
            FamilyTag::PurePower { eta, scale, theta_amp } => {
                if !(eta.is_finite() && gamma + eta > 0.0) {
                    return Err(invalid("eta", "gamma + eta must be positive"));
                }
                if !(theta_amp.is_finite() && theta_amp.abs() <= 1.0) {
                    return Err(invalid("theta_amp", "must satisfy |theta_amp| <= 1"));
                }
                check_scale(scale)?;
                1.0
            }
        };
        let rho_mono = match rho_mono {
            Some(r) => r,
            None => default_rho_mono(&family, gamma),
        };
        if !(rho_mono > 0.0 && rho_mono >= rho_join) {
            return Err(invalid("rho_mono", "must be positive and at least the formula start"));
        }
        let mut spec = CurvatureSpec {
            gamma: T::lit(gamma),
            delta: T::lit(gamma / 2.0),
            rho_mono: T::lit(rho_mono),
            rho_join: T::lit(rho_join),
            family,
            core: None,
        };
        if rho_join > 0.0 {
            let j = spec.rho_join;
            let (l0, l1, l2) = spec.tail_log_kstar(j);
            spec.core = Some(Core { join: j, width: T::lit(CORE_WIDTH), l0, l1, l2 });
        }
        Ok(spec)
    }

    pub fn family_tag(&self) -> &FamilyTag {
        &self.family
    }

    pub fn is_theta_independent(&self) -> bool {
        !matches!(self.family, FamilyTag::PurePower { theta_amp, .. } if theta_amp != 0.0)
    }

    /// Closed-form log k★ and its first two ρ-derivatives (valid for ρ ≥ rho_join).
    fn tail_log_kstar(&self, rho: T) -> (T, T, T) {
        let half = T::lit(0.5);
        match self.family {
            FamilyTag::Constant { k } => (T::lit(k).ln(), T::zero(), T::zero()),
            FamilyTag::LogPower { gamma0, scale } | FamilyTag::OscillatingLogPower { gamma0, scale } => {
                let p = T::one() + T::lit(gamma0) * half;
                let l = rho.ln();
                let v = half * T::lit(scale).ln() - l - p * l.ln();
                let d1 = -(T::one() + p / l) / rho;
                let d2 = (T::one() + p * (l + T::one()) / (l * l)) / (rho * rho);
                (v, d1, d2)
            }
            FamilyTag::PurePower { eta, scale, .. } => {
                let q = (T::lit(2.0) + self.gamma + T::lit(eta)) * half;
                (half * T::lit(scale).ln() - q * rho.ln(), -q / rho, q / (rho * rho))
            }
        }
    }

    /// log k★(ρ) and its first two ρ-derivatives, continuing smoothly below rho_join.
    pub fn log_kstar_derivs(&self, rho: T) -> (T, T, T) {
        match self.core {
            Some(c) if rho < c.join => {
                let s = c.width;
                let tau = ((rho - c.join) / s).tanh();
                let e = T::one() - tau * tau;
                let v = c.l0 + c.l1 * s * tau + T::lit(0.5) * c.l2 * s * s * tau * tau;
                let d1 = c.l1 * e + c.l2 * s * tau * e;
                let d2 = -T::lit(2.0) * c.l1 * tau * e / s + c.l2 * e * (T::one() - T::lit(3.0) * tau * tau);
                (v, d1, d2)
            }
            _ => self.tail_log_kstar(rho),
        }
    }

    /// Decay factor k★(ρ).
    pub fn decay_factor(&self, rho: T) -> T {
        if let FamilyTag::Constant { k } = self.family {
            return T::lit(k);
        }
        self.log_kstar_derivs(rho).0.exp()
    }

    /// K★ = k★².
    pub fn big_kstar(&self, rho: T) -> T {
        let k = self.decay_factor(rho);
        k * k
    }

    /// log K̄ = (2+γ) log ρ + log K★.
    pub fn log_kbar(&self, rho: T) -> T {
        let lk = match self.family {
            FamilyTag::Constant { k } => T::lit(k).ln(),
            _ => self.log_kstar_derivs(rho).0,
        };
        (T::lit(2.0) + self.gamma) * rho.ln() + T::lit(2.0) * lk
    }

    /// ρ²K★ as a function of L = log ρ, evaluated without forming ρ.
    pub fn rho2_kstar_at_log(&self, l: T) -> T {
        match self.family {
            FamilyTag::Constant { k } => T::lit(k * k) * (T::lit(2.0) * l).exp(),
            FamilyTag::LogPower { gamma0, scale } | FamilyTag::OscillatingLogPower { gamma0, scale } => {
                T::lit(scale) * l.powf(-(T::lit(2.0) + T::lit(gamma0)))
            }
            FamilyTag::PurePower { eta, scale, .. } => T::lit(scale) * (-(self.gamma + T::lit(eta)) * l).exp(),
        }
    }

    pub fn log_oscillation(&self, theta: T, rho: T) -> LogOscillation<T> {
        match self.family {
            FamilyTag::OscillatingLogPower { .. } => {
                let (a_int, alpha) = bumps().integral_and_rate(rho.f64());
                LogOscillation {
                    log_a: T::lit(1.0 + a_int),
                    d_theta: [T::zero(); 3],
                    d_rho: T::lit(alpha),
                    d_theta_d_rho: [T::zero(); 3],
                }
            }
            FamilyTag::PurePower { theta_amp, .. } if theta_amp != 0.0 => {
                let e = T::lit(theta_amp);
                let (s, c) = theta.sin_cos();
                LogOscillation {
                    log_a: e * c,
                    d_theta: [-e * s, -e * c, e * s],
                    d_rho: T::zero(),
                    d_theta_d_rho: [T::zero(); 3],
                }
            }
            _ => LogOscillation {
                log_a: T::zero(),
                d_theta: [T::zero(); 3],
                d_rho: T::zero(),
                d_theta_d_rho: [T::zero(); 3],
            },
        }
    }

    /// Oscillation factor a(θ, ρ).
    pub fn oscillation(&self, theta: T, rho: T) -> T {
        self.log_oscillation(theta, rho).log_a.exp()
    }

    /// Partials of a (not log a).
    pub fn oscillation_partials(&self, theta: T, rho: T) -> OscillationPartials<T> {
        let l = self.log_oscillation(theta, rho);
        let a = l.log_a.exp();
        let [l1, l2, l3] = l.d_theta;
        let [m1, m2, m3] = l.d_theta_d_rho;
        let r = l.d_rho;
        let three = T::lit(3.0);
        // derivatives of exp(ℓ) by Faà di Bruno
        let d1 = a * l1;
        let d2 = a * (l2 + l1 * l1);
        let d3 = a * (l3 + three * l1 * l2 + l1 * l1 * l1);
        let dr = a * r;
        let dr1 = a * (m1 + l1 * r);
        let dr2 = a * (m2 + l2 * r + T::lit(2.0) * l1 * m1 + l1 * l1 * r);
        let dr3 = a
            * (m3 + l3 * r + three * (l1 * m2 + l2 * m1) + three * l1 * l2 * r + three * l1 * l1 * m1
                + l1 * l1 * l1 * r);
        OscillationPartials { a, d_theta: [d1, d2, d3], d_rho: dr, d_theta_d_rho: [dr1, dr2, dr3] }
    }

    /// k(θ, ρ) = a k★.
    pub fn k(&self, theta: T, rho: T) -> T {
        self.oscillation(theta, rho) * self.decay_factor(rho)
    }

    /// Gauss curvature K = -k².
    pub fn gauss_curvature(&self, theta: T, rho: T) -> T {
        let k = self.k(theta, rho);
        -k * k
    }

    /// log k with ∂ρ and ∂θ.
    pub fn log_k(&self, theta: T, rho: T) -> LogK<T> {
        let o = self.log_oscillation(theta, rho);
        let (lk, d1, _) = match self.family {
            FamilyTag::Constant { k } => (T::lit(k).ln(), T::zero(), T::zero()),
            _ => self.log_kstar_derivs(rho),
        };
        LogK { log_k: o.log_a + lk, d_rho: o.d_rho + d1, d_theta: o.d_theta[0] }
    }

    /// Points where the integrand of a ρ-quadrature loses smoothness, inside (lo, hi).
    pub fn breakpoints(&self, lo: T, hi: T) -> Vec<T> {
        let mut out = Vec::new();
        if let Some(c) = self.core {
            if c.join > lo && c.join < hi {
                out.push(c.join);
            }
        }
        if let FamilyTag::OscillatingLogPower { .. } = self.family {
            for x in bumps().breakpoints(lo.f64(), hi.f64()) {
                out.push(T::lit(x));
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }

    /// Sample points that resolve the oscillation inside [lo, hi] (bump centres), at most `cap`.
    pub fn probe_points(&self, lo: T, hi: T, cap: usize) -> Vec<T> {
        match self.family {
            FamilyTag::OscillatingLogPower { .. } => {
                let mut v = Vec::new();
                let mut n = lo.f64().ceil().max(1.0) as u64;
                while (n as f64) < hi.f64() && v.len() < cap {
                    let w = 1.0 / (n as f64 * n as f64);
                    v.push(T::lit(n as f64 + 0.5 * w));
                    n += 1;
                }
                v
            }
            _ => Vec::new(),
        }
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(invalid("scale", "must be positive"))
    }
}

fn invalid(name: &str, reason: &str) -> Error {
    Error::InvalidParameter { name: name.into(), reason: reason.into() }
}

/// Default monotonicity radius: twice the turning point of ρ^γ (log ρ)^{-2-γ₀} for log families.
pub fn default_rho_mono(family: &FamilyTag, gamma: f64) -> f64 {
    match family {
        FamilyTag::LogPower { gamma0, .. } | FamilyTag::OscillatingLogPower { gamma0, .. } => {
            2.0 * ((2.0 + gamma0) / gamma).exp()
        }
        _ => 2.0,
    }
}

/// Builds a family from its registry name and a parameter map.
///
/// Recognised keys: `gamma` (default 0.5), `rho_mono`, `scale` (default 1), and per family
/// `k` (constant), `gamma0` (log families), `eta`, `theta_amp` (pure_power).
pub fn make_family<T: Scalar>(name: &str, params: &BTreeMap<String, f64>) -> Result<CurvatureSpec<T>> {
    let get = |key: &str, default: Option<f64>| -> Result<f64> {
        params
            .get(key)
            .copied()
            .or(default)
            .ok_or_else(|| invalid(key, "missing"))
    };
    let allowed: &[&str] = match name {
        "constant" => &["k", "gamma", "rho_mono"],
        "log_power" | "oscillating_log_power" => &["gamma0", "scale", "gamma", "rho_mono"],
        "pure_power" => &["eta", "scale", "theta_amp", "gamma", "rho_mono"],
        _ => return Err(Error::UnknownFamily(name.into())),
    };
    if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(invalid(bad, "not a parameter of this family"));
    }
    let family = match name {
        "constant" => FamilyTag::Constant { k: get("k", Some(1.0))? },
        "log_power" => FamilyTag::LogPower { gamma0: get("gamma0", Some(1.0))?, scale: get("scale", Some(1.0))? },
        "oscillating_log_power" => {
            FamilyTag::OscillatingLogPower { gamma0: get("gamma0", Some(1.0))?, scale: get("scale", Some(1.0))? }
        }
        _ => FamilyTag::PurePower {
            eta: get("eta", Some(0.1))?,
            scale: get("scale", Some(1.0))?,
            theta_amp: get("theta_amp", Some(0.0))?,
        },
    };
    CurvatureSpec::new(family, get("gamma", Some(0.5))?, params.get("rho_mono").copied())
}

// ---------------------------------------------------------------------------
// Mollified alternating indicator sum and its antiderivative.

const BUMP_NODES: usize = 2048;
const PREFIX_LEN: usize = 1 << 20;

struct Bumps {
    /// CDF Φ and second antiderivative J of the unit bump on uniform nodes of [-1, 1].
    cdf: Vec<f64>,
    cdf2: Vec<f64>,
    pdf: Vec<f64>,
    /// prefix[m] = Σ_{n≤m} (-1)^n n^{-2}
    prefix: Vec<f64>,
    f_at_one: f64,
}

fn raw_bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

fn bumps() -> &'static Bumps {
    static B: OnceLock<Bumps> = OnceLock::new();
    B.get_or_init(Bumps::build)
}

impl Bumps {
    fn build() -> Bumps {
        let h = 2.0 / BUMP_NODES as f64;
        let opts = QuadOptions { rel_tol: 1e-14, abs_tol: 1e-17, max_intervals: 200 };
        let mut mass = vec![0.0; BUMP_NODES + 1];
        for i in 0..BUMP_NODES {
            let a = -1.0 + h * i as f64;
            mass[i + 1] = mass[i] + integrate(&mut raw_bump, a, a + h, &[], opts).unwrap_or(0.0);
        }
        let z = mass[BUMP_NODES];
        let cdf: Vec<f64> = mass.iter().map(|m| m / z).collect();
        let pdf: Vec<f64> = (0..=BUMP_NODES).map(|i| raw_bump(-1.0 + h * i as f64) / z).collect();
        // J' = Φ, integrated cell by cell with the cubic Hermite interpolant of Φ (exact Simpson-type)
        let mut cdf2 = vec![0.0; BUMP_NODES + 1];
        for i in 0..BUMP_NODES {
            let cell = h * (cdf[i] + cdf[i + 1]) / 2.0 + h * h * (pdf[i] - pdf[i + 1]) / 12.0;
            cdf2[i + 1] = cdf2[i] + cell;
        }
        let mut prefix = vec![0.0; PREFIX_LEN + 1];
        let mut comp = 0.0;
        for n in 1..=PREFIX_LEN {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let y = sign / (n as f64 * n as f64) - comp;
            let t = prefix[n - 1] + y;
            comp = (t - prefix[n - 1]) - y;
            prefix[n] = t;
        }
        let mut b = Bumps { cdf, cdf2, pdf, prefix, f_at_one: 0.0 };
        b.f_at_one = b.antiderivative(1.0);
        b
    }

    fn lookup(&self, u: f64) -> (usize, f64) {
        let h = 2.0 / BUMP_NODES as f64;
        let x = ((u + 1.0) / h).clamp(0.0, BUMP_NODES as f64 - 1e-9);
        let i = (x.floor() as usize).min(BUMP_NODES - 1);
        (i, x - i as f64)
    }

    /// Φ(u).
    fn cdf_at(&self, u: f64) -> f64 {
        if u <= -1.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let h = 2.0 / BUMP_NODES as f64;
        let (i, s) = self.lookup(u);
        crate::numerics::interp::hermite(self.cdf[i], self.pdf[i], self.cdf[i + 1], self.pdf[i + 1], h, s)
    }

    /// J(u) = ∫_{-1}^u Φ.
    fn cdf2_at(&self, u: f64) -> f64 {
        if u <= -1.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return u;
        }
        let h = 2.0 / BUMP_NODES as f64;
        let (i, s) = self.lookup(u);
        crate::numerics::interp::hermite(self.cdf2[i], self.cdf[i], self.cdf2[i + 1], self.cdf[i + 1], h, s)
    }

    fn prefix_sum(&self, m: u64) -> f64 {
        if (m as usize) <= PREFIX_LEN {
            return self.prefix[m as usize];
        }
        // S(∞) = -π²/12; alternating tail ≈ (-1)^{m+1} f(m+½)/2
        let sign = if (m + 1) % 2 == 0 { 1.0 } else { -1.0 };
        let mid = m as f64 + 0.5;
        -std::f64::consts::PI.powi(2) / 12.0 - sign / (2.0 * mid * mid)
    }

    fn radius(n: u64) -> f64 {
        (0.25 / (n as f64 * n as f64)).min(0.1)
    }

    /// F(ρ) = Σ_n (-1)^n ∫_{-∞}^ρ (1_[n, n+n⁻²] * bump_n).
    fn antiderivative(&self, rho: f64) -> f64 {
        let full = (rho - 1.2).floor().max(0.0) as u64;
        let mut f = self.prefix_sum(full);
        let top = rho.floor().max(0.0) as u64 + 1;
        for n in (full + 1).max(1)..=top {
            let (a, b, r) = (n as f64, n as f64 + 1.0 / (n as f64 * n as f64), Self::radius(n));
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            f += sign * r * (self.cdf2_at((rho - a) / r) - self.cdf2_at((rho - b) / r));
        }
        f
    }

    /// (∫₁^ρ α, α(ρ)).
    fn integral_and_rate(&self, rho: f64) -> (f64, f64) {
        let lo = (rho - 1.2).floor().max(0.0) as u64 + 1;
        let hi = rho.floor().max(0.0) as u64 + 1;
        let mut alpha = 0.0;
        for n in lo.max(1)..=hi {
            let (a, b, r) = (n as f64, n as f64 + 1.0 / (n as f64 * n as f64), Self::radius(n));
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            alpha += sign * (self.cdf_at((rho - a) / r) - self.cdf_at((rho - b) / r));
        }
        (self.antiderivative(rho) - self.f_at_one, alpha)
    }

    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut n = (lo - 1.2).floor().max(1.0) as u64;
        while (n as f64) - 0.2 < hi {
            let (a, b, r) = (n as f64, n as f64 + 1.0 / (n as f64 * n as f64), Self::radius(n));
            for x in [a - r, a + r, b - r, b + r] {
                if x > lo && x < hi {
                    out.push(x);
                }
            }
            n += 1;
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Admissibility.

/// ∫ρK★dρ split at the family's formula start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TotalCurvature {
    /// ∫₀^{rho_join} over the smooth continuation.
    pub core: f64,
    /// ∫_{rho_join}^∞ over the closed-form decay factor; `None` when divergent.
    pub tail: Option<f64>,
}

impl TotalCurvature {
    pub fn is_finite(&self) -> bool {
        self.tail.is_some()
    }

    pub fn total(&self) -> Option<f64> {
        self.tail.map(|t| t + self.core)
    }
}

/// ∫₀^∞ ρK★(ρ)dρ; the tail runs over doubling windows of log ρ.
pub fn total_curvature<T: Scalar>(spec: &CurvatureSpec<T>, quad_tol: f64) -> Result<TotalCurvature> {
    if !(quad_tol > 0.0) {
        return Err(invalid("quad_tol", "must be positive"));
    }
    let opts = QuadOptions { rel_tol: quad_tol * 1e-2, abs_tol: 1e-300, max_intervals: 4000 };
    let join = spec.rho_join;
    let core = if join > T::zero() {
        integrate(&mut |r: T| r * spec.big_kstar(r), T::zero(), join, &[], opts)?.f64()
    } else {
        0.0
    };
    let e = T::one().exp();
    // head of the tail: [join, e] in ρ
    let head = if join < e {
        integrate(&mut |r: T| r * spec.big_kstar_tail(r), join, e, &[], opts)?
    } else {
        T::zero()
    };
    let l0 = if join < e { T::one() } else { join.ln() };
    let window = |n: usize| -> Result<T> {
        let a = l0 * T::lit(2f64.powi(n as i32));
        let b = a + a;
        if !(b.is_finite() && spec.rho2_kstar_at_log(b).is_finite()) {
            return Ok(T::infinity());
        }
        integrate(&mut |l: T| spec.rho2_kstar_at_log(l), a, b, &[], opts)
    };
    let tail = match doubling_tail(head, window, quad_tol, 200)? {
        Tail::Finite { value, .. } => Some(value.f64()),
        Tail::Divergent { .. } => None,
    };
    Ok(TotalCurvature { core, tail })
}

impl<T: Scalar> CurvatureSpec<T> {
    /// K★ from the closed form only (no continuation).
    pub fn big_kstar_tail(&self, rho: T) -> T {
        if let FamilyTag::Constant { k } = self.family {
            return T::lit(k * k);
        }
        (T::lit(2.0) * self.tail_log_kstar(rho).0).exp()
    }
}

/// Log-spaced ρ samples and uniform θ samples for the admissibility checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub rho_min: f64,
    pub rho_max: f64,
    pub n_rho: usize,
    pub n_theta: usize,
}

impl SampleGrid {
    /// [rho_mono, 10 rho_mono] with 128 ρ-samples and 16 θ-samples.
    pub fn for_spec<T: Scalar>(spec: &CurvatureSpec<T>) -> Self {
        let r = spec.rho_mono.f64();
        SampleGrid { rho_min: r, rho_max: 10.0 * r, n_rho: 128, n_theta: 16 }
    }

    pub fn rho_samples(&self) -> Vec<f64> {
        let (a, b) = (self.rho_min.ln(), self.rho_max.ln());
        (0..self.n_rho).map(|i| (a + (b - a) * i as f64 / (self.n_rho - 1) as f64).exp()).collect()
    }

    pub fn theta_samples(&self) -> Vec<f64> {
        (0..self.n_theta).map(|i| 2.0 * std::f64::consts::PI * i as f64 / self.n_theta as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub quad_tol: f64,
    pub bv_tol: f64,
    /// Largest sampled supremum accepted as "bounded".
    pub bound_cap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { quad_tol: 1e-9, bv_tol: 1e-3, bound_cap: 1e8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionFlags {
    pub integrable_decay: bool,
    pub monotone_kbar: bool,
    pub oscillation_bounded: bool,
    pub oscillation_bv: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierFlags {
    /// sup|K| < ∞ and sup|∇|K|^{-1/2}| < ∞ (sampled trend).
    pub efimov: bool,
    /// ∂ρ log(|K|ρ^{2+γ}) ≤ 0 on the tail samples.
    pub hong: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillationSups {
    pub a_max: f64,
    pub inv_a_max: f64,
    pub d_theta_log_a: [f64; 3],
    pub rho_d_theta_d_rho_log_a: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub family: FamilyTag,
    pub admissible: bool,
    /// ∫ρK★ from the family's formula start; `None` is +∞.
    pub total_decay_curvature: Option<f64>,
    pub core_decay_curvature: f64,
    pub condition_flags: ConditionFlags,
    pub monotonicity: Option<Monotonicity>,
    pub classifier_flags: ClassifierFlags,
    pub oscillation_sups: OscillationSups,
    pub oscillation_variation: Option<f64>,
    /// ρ²K★ at the last ρ-samples.
    pub tail_rho2_kstar: Vec<f64>,
    pub failure_reasons: Vec<String>,
}

/// Sign of the tail derivative of log K̄ (centered differences on log-spaced samples).
pub fn classify_monotonicity<T: Scalar>(spec: &CurvatureSpec<T>) -> Result<Monotonicity> {
    classify_on(spec, &SampleGrid::for_spec(spec))
}

fn classify_on<T: Scalar>(spec: &CurvatureSpec<T>, grid: &SampleGrid) -> Result<Monotonicity> {
    let rhos = grid.rho_samples();
    let mut sign = 0i8;
    for w in rhos.windows(3) {
        let (a, m, b) = (T::lit(w[0]), T::lit(w[1]), T::lit(w[2]));
        let d = (spec.log_kbar(b) - spec.log_kbar(a)) / (b - a);
        if d.abs() < T::lit(1e-10) / m {
            continue;
        }
        let s = if d > T::zero() { 1 } else { -1 };
        if sign != 0 && s != sign {
            return Err(Error::NonMonotoneTail { rho: w[1] });
        }
        sign = s;
    }
    Ok(if sign > 0 { Monotonicity::Increasing } else { Monotonicity::Decreasing })
}

/// Checks the four hypotheses on the curvature decomposition.
pub fn check_admissibility<T: Scalar>(
    spec: &CurvatureSpec<T>,
    grid: &SampleGrid,
    tols: &Tolerances,
) -> Result<AdmissibilityReport> {
    if grid.n_rho < 64 {
        return Err(Error::GridTooCoarse(format!("{} tail samples, need at least 64", grid.n_rho)));
    }
    if grid.n_theta < 1 || !(grid.rho_min <= spec.rho_mono.f64() * (1.0 + 1e-12))
        || grid.rho_max < 10.0 * spec.rho_mono.f64() * (1.0 - 1e-12)
    {
        return Err(Error::GridTooCoarse("sample grid must cover [rho_mono, 10 rho_mono]".into()));
    }
    let mut reasons = Vec::new();

    let total = total_curvature(spec, tols.quad_tol)?;
    let integrable = total.is_finite();
    if !integrable {
        reasons.push("infinite total curvature".to_string());
    }
    let positive = match spec.family {
        FamilyTag::Constant { k } => k > 0.0,
        _ => true,
    };
    if !positive {
        reasons.push("curvature not strictly negative".to_string());
    }

    let monotonicity = match classify_on(spec, grid) {
        Ok(m) => Some(m),
        Err(Error::NonMonotoneTail { rho }) => {
            reasons.push(format!("K-bar not monotone near rho = {rho:.6e}"));
            None
        }
        Err(e) => return Err(e),
    };

    // sampled suprema over [1, rho_max] ∪ tail samples
    let thetas = grid.theta_samples();
    let mut rhos: Vec<f64> = {
        let (a, b) = (0.0f64, grid.rho_max.ln());
        (0..grid.n_rho).map(|i| (a + (b - a) * i as f64 / (grid.n_rho - 1) as f64).exp()).collect()
    };
    rhos.extend(grid.rho_samples());
    rhos.extend(spec.probe_points(T::one(), T::lit(grid.rho_max), 256).iter().map(|v| v.f64()));
    let mut sups = OscillationSups { a_max: 0.0, inv_a_max: 0.0, d_theta_log_a: [0.0; 3], rho_d_theta_d_rho_log_a: [0.0; 3] };
    let mut finite = true;
    for &r in &rhos {
        for &th in &thetas {
            let o = spec.log_oscillation(T::lit(th), T::lit(r));
            let a = o.log_a.exp().f64();
            let kk = spec.k(T::lit(th), T::lit(r)).f64();
            if !(kk.is_finite() && a.is_finite() && a > 0.0) {
                finite = false;
            }
            sups.a_max = sups.a_max.max(a);
            sups.inv_a_max = sups.inv_a_max.max(1.0 / a);
            for i in 0..3 {
                sups.d_theta_log_a[i] = sups.d_theta_log_a[i].max(o.d_theta[i].f64().abs());
                sups.rho_d_theta_d_rho_log_a[i] =
                    sups.rho_d_theta_d_rho_log_a[i].max(r * o.d_theta_d_rho[i].f64().abs());
            }
        }
    }
    let bounded = finite
        && [sups.a_max, sups.inv_a_max]
            .iter()
            .chain(sups.d_theta_log_a.iter())
            .chain(sups.rho_d_theta_d_rho_log_a.iter())
            .all(|v| v.is_finite() && *v <= tols.bound_cap);
    if !bounded {
        reasons.push("oscillation factor or its log-derivatives unbounded on samples".to_string());
    }

    let variation = oscillation_variation(spec, &thetas, tols.bv_tol)?;
    if variation.is_none() {
        reasons.push("oscillation factor has unbounded variation in rho".to_string());
    }

    let flags = ConditionFlags {
        integrable_decay: integrable && positive,
        monotone_kbar: monotonicity.is_some(),
        oscillation_bounded: bounded,
        oscillation_bv: variation.is_some(),
    };
    let tail_samples = grid.rho_samples();
    let tail_rho2_kstar = tail_samples
        .iter()
        .rev()
        .take(8)
        .rev()
        .map(|&r| r * r * spec.big_kstar(T::lit(r)).f64())
        .collect();
    Ok(AdmissibilityReport {
        family: spec.family.clone(),
        admissible: flags.integrable_decay && flags.monotone_kbar && flags.oscillation_bounded && flags.oscillation_bv,
        total_decay_curvature: total.tail,
        core_decay_curvature: total.core,
        condition_flags: flags,
        monotonicity,
        classifier_flags: classifier_flags(spec, grid, &thetas),
        oscillation_sups: sups,
        oscillation_variation: variation,
        tail_rho2_kstar,
        failure_reasons: reasons,
    })
}

/// ∫₁^∞ max_θ |∂ρ a| dρ, `None` when divergent.
pub fn oscillation_variation<T: Scalar>(spec: &CurvatureSpec<T>, thetas: &[f64], tol: f64) -> Result<Option<f64>> {
    let opts = QuadOptions { rel_tol: tol * 1e-2, abs_tol: 1e-300, max_intervals: 100_000 };
    let integrand = |r: T| -> T {
        thetas
            .iter()
            .map(|&th| spec.oscillation_partials(T::lit(th), r).d_rho.abs())
            .fold(T::zero(), T::max)
    };
    let window = |n: usize| -> Result<T> {
        let a = T::lit(2f64.powi(n as i32));
        let b = a + a;
        integrate(&mut |r| integrand(r), a, b, &spec.breakpoints(a, b), opts)
    };
    Ok(match doubling_tail(T::zero(), window, tol, 40)? {
        Tail::Finite { value, .. } => Some(value.f64()),
        Tail::Divergent { .. } => None,
    })
}

fn classifier_flags<T: Scalar>(spec: &CurvatureSpec<T>, grid: &SampleGrid, thetas: &[f64]) -> ClassifierFlags {
    let rhos = grid.rho_samples();
    let mut probes = rhos.clone();
    probes.extend(spec.probe_points(T::lit(grid.rho_min), T::lit(grid.rho_max), 64).iter().map(|v| v.f64()));
    let mut hong = true;
    for &r in &probes {
        for &th in thetas {
            let lk = spec.log_k(T::lit(th), T::lit(r));
            let d = (T::lit(2.0) * lk.d_rho + (T::lit(2.0) + spec.gamma) / T::lit(r)).f64();
            if d > 1e-10 / r {
                hong = false;
            }
        }
    }
    let mut grad_inv: Vec<f64> = Vec::new();
    for &r in &rhos {
        let mut g = 0.0f64;
        for &th in thetas {
            let lk = spec.log_k(T::lit(th), T::lit(r));
            // |∂ρ (1/k)| = |∂ρ log k| / k
            let k = lk.log_k.exp().f64();
            g = g.max(lk.d_rho.f64().abs() / k);
        }
        grad_inv.push(g);
    }
    let n = grad_inv.len();
    let head = grad_inv[..n * 3 / 4].iter().copied().fold(0.0, f64::max);
    let tail = grad_inv[n * 3 / 4..].iter().copied().fold(0.0, f64::max);
    let sup_k = rhos
        .iter()
        .map(|&r| spec.k(T::zero(), T::lit(r)).f64())
        .fold(0.0, f64::max);
    ClassifierFlags { efimov: sup_k.is_finite() && tail <= 1.01 * head, hong }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn continuation_is_c2_at_join() {
        let s: CurvatureSpec<f64> = make_family("log_power", &params(&[])).unwrap();
        let eps = 1e-7;
        let below = s.log_kstar_derivs(2.0 - eps);
        let above = s.log_kstar_derivs(2.0 + eps);
        for (a, b) in [(below.0, above.0), (below.1, above.1), (below.2, above.2)] {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
        assert!(s.decay_factor(1e-9).is_finite());
    }

    #[test]
    fn log_kstar_derivatives_match_differences() {
        for name in ["log_power", "pure_power"] {
            let s: CurvatureSpec<f64> = make_family(name, &params(&[])).unwrap();
            for &r in &[0.3, 1.5, 3.0, 40.0] {
                let h = 1e-5;
                let (_, d1, d2) = s.log_kstar_derivs(r);
                let fd1 = (s.log_kstar_derivs(r + h).0 - s.log_kstar_derivs(r - h).0) / (2.0 * h);
                let fd2 = (s.log_kstar_derivs(r + h).1 - s.log_kstar_derivs(r - h).1) / (2.0 * h);
                assert!((d1 - fd1).abs() < 1e-6 * (1.0 + d1.abs()));
                assert!((d2 - fd2).abs() < 1e-5 * (1.0 + d2.abs()));
            }
        }
    }

    #[test]
    fn oscillation_rate_is_derivative_of_log_a() {
        let s: CurvatureSpec<f64> = make_family("oscillating_log_power", &params(&[])).unwrap();
        for &r in &[1.05, 1.95, 2.1, 2.15, 3.02, 7.0 + 0.5 / 49.0, 30.0005] {
            let h = 1e-6;
            let fd = (s.log_oscillation(0.0, r + h).log_a - s.log_oscillation(0.0, r - h).log_a) / (2.0 * h);
            let d = s.log_oscillation(0.0, r).d_rho;
            assert!((fd - d).abs() < 1e-5, "rho {r}: {fd} vs {d}");
        }
        // a(1) = e, and a settles once each bump is passed
        assert!((s.oscillation(0.0, 1.0) - 1f64.exp()).abs() < 1e-12);
        // bump 1 leaks below ρ = 1 by r·J(0) = 0.1·E|U|/2 for the unit bump U
        let opts = QuadOptions { rel_tol: 1e-13, abs_tol: 1e-18, max_intervals: 500 };
        let z = integrate(&mut raw_bump, -1.0, 1.0, &[], opts).unwrap();
        let m = integrate(&mut |u: f64| -u * raw_bump(u), -1.0, 0.0, &[], opts).unwrap() / z;
        let full = s.log_oscillation(0.0, 3.5).log_a;
        let expected = 1.0 + (-1.0 + 0.1 * m) + 0.25 - 1.0 / 9.0;
        assert!((full - expected).abs() < 1e-9, "{full}");
    }

    #[test]
    fn prefix_tail_is_continuous_with_table() {
        let b = bumps();
        let m = PREFIX_LEN as u64;
        let direct = b.prefix[PREFIX_LEN];
        let sign = if (m + 1) % 2 == 0 { 1.0 } else { -1.0 };
        let mid = m as f64 + 0.5;
        let asym = -std::f64::consts::PI.powi(2) / 12.0 - sign / (2.0 * mid * mid);
        assert!((direct - asym).abs() < 1e-15);
    }

    #[test]
    fn unknown_and_invalid_families_error() {
        assert!(matches!(make_family::<f64>("bogus", &params(&[])), Err(Error::UnknownFamily(_))));
        assert!(make_family::<f64>("log_power", &params(&[("gamma0", -1.0)])).is_err());
        assert!(make_family::<f64>("constant", &params(&[("eta", 1.0)])).is_err());
    }

    #[test]
    fn oscillation_partials_match_differences() {
        let s: CurvatureSpec<f64> = make_family("pure_power", &params(&[("theta_amp", 0.3)])).unwrap();
        let (th, r, h) = (0.7, 5.0, 1e-4);
        let p = s.oscillation_partials(th, r);
        let q = |t: f64| s.oscillation_partials(t, r);
        assert!((p.d_theta[0] - (q(th + h).a - q(th - h).a) / (2.0 * h)).abs() < 1e-7);
        assert!((p.d_theta[1] - (q(th + h).d_theta[0] - q(th - h).d_theta[0]) / (2.0 * h)).abs() < 1e-7);
        assert!((p.d_theta[2] - (q(th + h).d_theta[1] - q(th - h).d_theta[1]) / (2.0 * h)).abs() < 1e-7);
    }
}
