use crate::error::{Error, Result};
use crate::scalar::Scalar;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Gauss–Kronrod 7/15 on [a, b]: (estimate, error estimate).
pub fn gk15<T: Scalar>(f: &mut impl FnMut(T) -> T, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let c = (a + b) * half;
    let h = (b - a) * half;
    let fc = f(c);
    let mut k = fc * T::lit(WGK[7]);
    let mut g = fc * T::lit(WG[3]);
    for i in 0..7 {
        let dx = h * T::lit(XGK[i]);
        let s = f(c - dx) + f(c + dx);
        k = k + s * T::lit(WGK[i]);
        if i % 2 == 1 {
            g = g + s * T::lit(WG[i / 2]);
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { rel_tol: 1e-10, abs_tol: 1e-300, max_intervals: 4000 }
    }
}

/// Globally adaptive Gauss–Kronrod quadrature over [a, b], split first at `breaks`.
pub fn integrate<T: Scalar>(
    f: &mut impl FnMut(T) -> T,
    a: T,
    b: T,
    breaks: &[T],
    opts: QuadOptions,
) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    let mut cuts = vec![a];
    cuts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    cuts.push(b);
    let mut pieces: Vec<(T, T, T, T)> = cuts
        .windows(2)
        .map(|w| {
            let (v, e) = gk15(f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let total: T = pieces.iter().map(|p| p.2).sum();
        let err: T = pieces.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::NonFinite { what: "integrand".into(), a: a.f64(), b: b.f64() });
        }
        let target = T::lit(opts.abs_tol).max(total.abs() * T::lit(opts.rel_tol));
        if err <= target {
            return Ok(total);
        }
        if pieces.len() >= opts.max_intervals {
            return Err(Error::QuadratureFailed { a: a.f64(), b: b.f64() });
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, be), (i, p)| if p.3 > be { (i, p.3) } else { (bi, be) });
        let (x0, x1, _, _) = pieces[idx];
        let m = (x0 + x1) * T::lit(0.5);
        if m <= x0 || m >= x1 {
            return Err(Error::QuadratureFailed { a: a.f64(), b: b.f64() });
        }
        let (v0, e0) = gk15(f, x0, m);
        let (v1, e1) = gk15(f, m, x1);
        pieces[idx] = (x0, m, v0, e0);
        pieces.push((m, x1, v1, e1));
    }
}

/// Outcome of an improper integral over doubling windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail<T> {
    Finite { value: T, windows: usize },
    Divergent { windows: usize },
}

/// Sums window integrals `window(n)`, n = 0, 1, ..., deciding convergence from their ratios.
///
/// Divergent when eight consecutive windows fail to shrink by a factor below 0.9.
/// Finite when the last eight ratios are all below 0.9 and the geometric tail bound
/// is under `rel_tol` of the running sum; the geometric estimate is added to the result.
pub fn doubling_tail<T: Scalar>(
    head: T,
    mut window: impl FnMut(usize) -> Result<T>,
    rel_tol: f64,
    max_windows: usize,
) -> Result<Tail<T>> {
    let mut sum = head;
    let mut sums: Vec<T> = Vec::new();
    let mut stalls = 0usize;
    let mut shrinks = 0usize;
    let ratio_cap = T::lit(0.9);
    for n in 0..max_windows {
        let s = window(n)?;
        if !s.is_finite() {
            return Ok(Tail::Divergent { windows: n + 1 });
        }
        sum = sum + s;
        if let Some(&prev) = sums.last() {
            let prev: T = prev;
            let shrunk = s.abs() < ratio_cap * prev.abs() || (s == T::zero() && prev == T::zero());
            if shrunk {
                stalls = 0;
                shrinks += 1;
            } else {
                stalls += 1;
                shrinks = 0;
            }
        }
        sums.push(s);
        if stalls >= 8 {
            return Ok(Tail::Divergent { windows: n + 1 });
        }
        if shrinks >= 8 {
            let k = sums.len();
            let r = (k - 8..k)
                .map(|i| {
                    if sums[i - 1] == T::zero() {
                        T::zero()
                    } else {
                        (sums[i] / sums[i - 1]).abs()
                    }
                })
                .fold(T::zero(), T::max);
            let rest = s.abs() * r / (T::one() - r);
            if rest <= T::lit(rel_tol) * sum.abs() || rest <= T::lit(1e-300) {
                let signed = if s < T::zero() { -rest } else { rest };
                return Ok(Tail::Finite { value: sum + signed, windows: n + 1 });
            }
        }
    }
    Err(Error::Inconclusive { windows: sums.len(), partial: sums.iter().map(|v| v.f64()).collect() })
}

/// `log(sum_i exp(a_i))` without overflow.
pub fn log_sum_exp<T: Scalar>(a: &[T]) -> T {
    let m = a.iter().copied().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    m + a.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

/// `log ∫_a^b exp(g(x)) dx` for a log-integrand `g`, via shifted adaptive quadrature.
pub fn log_integrate<T: Scalar>(
    g: &mut impl FnMut(T) -> T,
    a: T,
    b: T,
    shift: T,
    opts: QuadOptions,
) -> Result<T> {
    let v = integrate(&mut |x| (g(x) - shift).exp(), a, b, &[], opts)?;
    Ok(shift + v.ln())
}

/// Composite trapezoid on samples.
pub fn trapezoid<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (xs[1] - xs[0]) * (ys[0] + ys[1]) * T::lit(0.5))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk15_polynomial_exact() {
        let (v, e) = gk15(&mut |x: f64| x.powi(10), 0.0, 1.0);
        assert!((v - 1.0 / 11.0).abs() < 1e-15);
        assert!(e < 1e-10);
    }

    #[test]
    fn adaptive_handles_kink() {
        let v = integrate(&mut |x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], QuadOptions::default()).unwrap();
        assert!((v - (0.045 + 0.245)).abs() < 1e-14);
    }

    #[test]
    fn geometric_windows_converge() {
        // ∫_1^∞ x^-2 dx over windows [2^n, 2^{n+1}]
        let t = doubling_tail(
            0.0,
            |n| {
                let a = 2f64.powi(n as i32);
                integrate(&mut |x: f64| x.powi(-2), a, 2.0 * a, &[], QuadOptions::default())
            },
            1e-12,
            200,
        )
        .unwrap();
        match t {
            Tail::Finite { value, .. } => assert!((value - 1.0).abs() < 1e-10),
            _ => panic!("expected finite"),
        }
    }

    #[test]
    fn flat_windows_diverge() {
        let t = doubling_tail(0.0, |_| Ok(std::f64::consts::LN_2), 1e-10, 200).unwrap();
        assert!(matches!(t, Tail::Divergent { .. }));
    }

    #[test]
    fn log_domain_matches_direct() {
        let v = log_integrate(&mut |x: f64| -x * x, 0.0, 6.0, 0.0, QuadOptions::default()).unwrap();
        assert!((v.exp() - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-12);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
