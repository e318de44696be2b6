use crate::scalar::Scalar;

/// One classical Runge–Kutta step for `y' = f(t, y)`.
pub fn rk4_step<T: Scalar, const N: usize>(
    f: &mut impl FnMut(T, &[T; N]) -> [T; N],
    t: T,
    y: &[T; N],
    h: T,
) -> [T; N] {
    let half = T::lit(0.5);
    let k1 = f(t, y);
    let y2 = axpy(y, &k1, h * half);
    let k2 = f(t + h * half, &y2);
    let y3 = axpy(y, &k2, h * half);
    let k3 = f(t + h * half, &y3);
    let y4 = axpy(y, &k3, h);
    let k4 = f(t + h, &y4);
    let sixth = h / T::lit(6.0);
    let mut out = *y;
    for i in 0..N {
        out[i] = y[i] + sixth * (k1[i] + (k2[i] + k3[i]) * T::lit(2.0) + k4[i]);
    }
    out
}

#[inline]
fn axpy<T: Scalar, const N: usize>(y: &[T; N], k: &[T; N], a: T) -> [T; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] = y[i] + a * k[i];
    }
    out
}

/// Integrates from `t0` to `t1` in steps no larger than `h`, landing exactly on `t1`.
pub fn rk4_span<T: Scalar, const N: usize>(
    f: &mut impl FnMut(T, &[T; N]) -> [T; N],
    t0: T,
    t1: T,
    y: &[T; N],
    h: T,
) -> [T; N] {
    let span = t1 - t0;
    if span == T::zero() {
        return *y;
    }
    let n = (span.abs() / h).ceil().to_usize().unwrap_or(1).max(1);
    let dt = span / T::from_usize_lossy(n);
    let mut s = *y;
    for i in 0..n {
        s = rk4_step(f, t0 + dt * T::from_usize_lossy(i), &s, dt);
    }
    s
}
