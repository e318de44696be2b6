use crate::scalar::Scalar;

/// Cubic Hermite basis on [0, 1]: value at fraction `s` on an interval of width `h`.
#[inline]
pub fn hermite<T: Scalar>(y0: T, d0: T, y1: T, d1: T, h: T, s: T) -> T {
    let s2 = s * s;
    let s3 = s2 * s;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let h00 = two * s3 - three * s2 + T::one();
    let h10 = s3 - two * s2 + s;
    let h01 = -two * s3 + three * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Derivative of [`hermite`] with respect to the physical coordinate.
#[inline]
pub fn hermite_slope<T: Scalar>(y0: T, d0: T, y1: T, d1: T, h: T, s: T) -> T {
    let s2 = s * s;
    let six = T::lit(6.0);
    let dh00 = six * s2 - six * s;
    let dh10 = T::lit(3.0) * s2 - T::lit(4.0) * s + T::one();
    let dh01 = -six * s2 + six * s;
    let dh11 = T::lit(3.0) * s2 - T::lit(2.0) * s;
    (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1
}

/// Piecewise cubic Hermite curve through `(x_i, y_i)` with given slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteCurve<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub d: Vec<T>,
}

impl<T: Scalar> HermiteCurve<T> {
    pub fn new(x: Vec<T>, y: Vec<T>, d: Vec<T>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len() && y.len() == d.len());
        HermiteCurve { x, y, d }
    }

    /// Fritsch–Carlson monotone slopes.
    pub fn pchip(x: Vec<T>, y: Vec<T>) -> Self {
        let n = x.len();
        assert!(n >= 2 && n == y.len());
        let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<T> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![T::zero(); n];
        if n == 2 {
            d[0] = del[0];
            d[1] = del[0];
            return HermiteCurve { x, y, d };
        }
        for i in 1..n - 1 {
            if del[i - 1] * del[i] > T::zero() {
                let w1 = T::lit(2.0) * h[i] + h[i - 1];
                let w2 = h[i] + T::lit(2.0) * h[i - 1];
                d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
            }
        }
        d[0] = end_slope(h[0], h[1], del[0], del[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        HermiteCurve { x, y, d }
    }

    fn cell(&self, x: T) -> (usize, T, T) {
        let n = self.x.len();
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        };
        let h = self.x[i + 1] - self.x[i];
        (i, h, (x - self.x[i]) / h)
    }

    /// Value; clamps to end values outside the range.
    pub fn eval(&self, x: T) -> T {
        let n = self.x.len();
        if x <= self.x[0] {
            return self.y[0];
        }
        if x >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let (i, h, s) = self.cell(x);
        hermite(self.y[i], self.d[i], self.y[i + 1], self.d[i + 1], h, s)
    }

    pub fn slope(&self, x: T) -> T {
        let n = self.x.len();
        if x <= self.x[0] {
            return self.d[0];
        }
        if x >= self.x[n - 1] {
            return self.d[n - 1];
        }
        let (i, h, s) = self.cell(x);
        hermite_slope(self.y[i], self.d[i], self.y[i + 1], self.d[i + 1], h, s)
    }

    pub fn domain(&self) -> (T, T) {
        (self.x[0], self.x[self.x.len() - 1])
    }
}

fn end_slope<T: Scalar>(h0: T, h1: T, del0: T, del1: T) -> T {
    let d = ((T::lit(2.0) * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= T::zero() {
        T::zero()
    } else if del0 * del1 <= T::zero() && d.abs() > T::lit(3.0) * del0.abs() {
        T::lit(3.0) * del0
    } else {
        d
    }
}

/// Linear interpolation on sorted nodes, clamped at the ends.
pub fn linear<T: Scalar>(x: &[T], y: &[T], at: T) -> T {
    let n = x.len();
    if at <= x[0] {
        return y[0];
    }
    if at >= x[n - 1] {
        return y[n - 1];
    }
    let i = match x.binary_search_by(|v| v.partial_cmp(&at).unwrap()) {
        Ok(i) => return y[i],
        Err(i) => i - 1,
    };
    let s = (at - x[i]) / (x[i + 1] - x[i]);
    y[i] + s * (y[i + 1] - y[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |x: f64| 2.0 * x.powi(3) - x + 1.0;
        let df = |x: f64| 6.0 * x * x - 1.0;
        let xs: Vec<f64> = (0..5).map(|i| i as f64 * 0.5).collect();
        let c = HermiteCurve::new(xs.clone(), xs.iter().map(|&x| f(x)).collect(), xs.iter().map(|&x| df(x)).collect());
        for &x in &[0.1, 0.77, 1.3, 1.99] {
            assert!((c.eval(x) - f(x)).abs() < 1e-12);
            assert!((c.slope(x) - df(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn pchip_preserves_monotonicity() {
        let xs = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = vec![0.0, 0.1, 5.0, 5.1, 5.2];
        let c = HermiteCurve::pchip(xs, ys);
        let mut prev = -1.0;
        for i in 0..=400 {
            let v = c.eval(i as f64 * 0.01);
            assert!(v >= prev - 1e-14);
            prev = v;
        }
    }
}
