use crate::scalar::Scalar;
use serde::Serialize;

/// Sorted 1-d sample coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid1<T> {
    pub nodes: Vec<T>,
    uniform: bool,
}

impl<T: Scalar> Grid1<T> {
    /// `n` equally spaced nodes from `a` to `b` inclusive.
    pub fn uniform(a: T, b: T, n: usize) -> Self {
        assert!(n >= 2, "uniform grid needs two nodes");
        let h = (b - a) / T::from_usize_lossy(n - 1);
        let nodes = (0..n).map(|i| a + h * T::from_usize_lossy(i)).collect();
        Grid1 { nodes, uniform: true }
    }

    /// `n` cell centres of [-half_width, half_width]; never contains 0 when `n` is even.
    pub fn staggered(half_width: T, n: usize) -> Self {
        let h = (half_width + half_width) / T::from_usize_lossy(n);
        let nodes = (0..n)
            .map(|j| -half_width + h * (T::from_usize_lossy(j) + T::lit(0.5)))
            .collect();
        Grid1 { nodes, uniform: true }
    }

    pub fn from_nodes(nodes: Vec<T>) -> Self {
        debug_assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        Grid1 { nodes, uniform: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn first(&self) -> T {
        self.nodes[0]
    }

    pub fn last(&self) -> T {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn min_spacing(&self) -> T {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(T::infinity(), T::min)
    }

    /// Cell index `i` and fraction `s` with `x = (1-s) x_i + s x_{i+1}`; `None` outside the grid.
    pub fn locate(&self, x: T) -> Option<(usize, T)> {
        let n = self.nodes.len();
        let (a, b) = (self.nodes[0], self.nodes[n - 1]);
        let slack = (b - a) * T::lit(1e-12);
        if !(x >= a - slack && x <= b + slack) {
            return None;
        }
        let i = if self.uniform {
            let h = (b - a) / T::from_usize_lossy(n - 1);
            ((x - a) / h).floor().to_usize().unwrap_or(0).min(n - 2)
        } else {
            match self.nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
                Ok(i) => i.min(n - 2),
                Err(i) => i.saturating_sub(1).min(n - 2),
            }
        };
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        Some((i, ((x - x0) / (x1 - x0)).max(T::zero()).min(T::one())))
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: T) -> usize {
        let mut best = 0;
        for (i, v) in self.nodes.iter().enumerate() {
            if (*v - x).abs() < (self.nodes[best] - x).abs() {
                best = i;
            }
        }
        best
    }
}

/// Dense row-major field: `rows` along the first coordinate, `cols` along the second.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field2<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Field2<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Field2 { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: T) -> Self {
        Field2 { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let data = rows.into_iter().flatten().collect::<Vec<_>>();
        assert_eq!(data.len(), r * c, "ragged rows");
        Field2 { rows: r, cols: c, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Field2 { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}
