use std::ops::{Deref, Range};

use nalgebra::DMatrix;

use crate::csvfmt;

/// Piecewise-polynomial curve on a strictly increasing grid.
///
/// Each interval carries one-sided end slopes and an optional quartic
/// "bubble" coefficient, giving
/// `y(θ) = H(θ) + θ²(1-θ)²·bubble` where `H` is the cubic Hermite
/// interpolant of the node values and end slopes. Integrator output fills
/// the bubble from the Dormand–Prince continuous extension; arcs assembled
/// from node data leave it at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseArc {
    dim: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    // per interval: [slope at left end (dim), slope at right end (dim)]
    slopes: Vec<f64>,
    bubbles: Vec<f64>,
}

impl DenseArc {
    pub(crate) fn with_start(dim: usize, t: f64, y: &[f64]) -> Self {
        Self {
            dim,
            times: vec![t],
            values: y.to_vec(),
            slopes: Vec::new(),
            bubbles: Vec::new(),
        }
    }

    pub(crate) fn push_interval(&mut self, t1: f64, y1: &[f64], d0: &[f64], d1: &[f64], bubble: &[f64]) {
        self.times.push(t1);
        self.values.extend_from_slice(y1);
        self.slopes.extend_from_slice(d0);
        self.slopes.extend_from_slice(d1);
        self.bubbles.extend_from_slice(bubble);
    }

    /// Build from node values and node derivatives (cubic Hermite, continuous slopes).
    pub fn from_nodes(dim: usize, times: Vec<f64>, values: Vec<f64>, derivs: &[f64]) -> Self {
        assert!(times.len() >= 2, "an arc needs at least two nodes");
        assert!(times.windows(2).all(|w| w[1] > w[0]), "grid must be strictly increasing");
        assert_eq!(values.len(), times.len() * dim);
        assert_eq!(derivs.len(), times.len() * dim);
        let n = times.len() - 1;
        let mut slopes = Vec::with_capacity(2 * n * dim);
        for i in 0..n {
            slopes.extend_from_slice(&derivs[i * dim..(i + 1) * dim]);
            slopes.extend_from_slice(&derivs[(i + 1) * dim..(i + 2) * dim]);
        }
        Self {
            dim,
            times,
            values,
            slopes,
            bubbles: vec![0.0; n * dim],
        }
    }

    /// Reverse interval order in place (used after backward integration).
    pub(crate) fn reverse(&mut self) {
        let d = self.dim;
        let n = self.times.len();
        self.times.reverse();
        let mut values = Vec::with_capacity(self.values.len());
        for i in (0..n).rev() {
            values.extend_from_slice(&self.values[i * d..(i + 1) * d]);
        }
        self.values = values;
        let ni = n - 1;
        let mut slopes = Vec::with_capacity(self.slopes.len());
        let mut bubbles = Vec::with_capacity(self.bubbles.len());
        for i in (0..ni).rev() {
            let s = &self.slopes[2 * i * d..2 * (i + 1) * d];
            slopes.extend_from_slice(&s[d..]);
            slopes.extend_from_slice(&s[..d]);
            bubbles.extend_from_slice(&self.bubbles[i * d..(i + 1) * d]);
        }
        self.slopes = slopes;
        self.bubbles = bubbles;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn covers(&self, a: f64, b: f64) -> bool {
        let slack = 1e-12 * (1.0 + self.end().abs());
        a >= self.start() - slack && b <= self.end() + slack
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.node(self.len() - 1)
    }

    /// Slope at node `i`, taken from the interval to its right (left at the last node).
    pub fn node_slope(&self, i: usize) -> &[f64] {
        let d = self.dim;
        if i + 1 < self.len() {
            &self.slopes[2 * i * d..(2 * i + 1) * d]
        } else {
            &self.slopes[(2 * (i - 1) + 1) * d..2 * i * d]
        }
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        let i = self.times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let h = self.times[i + 1] - self.times[i];
        let theta = ((t - self.times[i]) / h).clamp(0.0, 1.0);
        (i, theta)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let d = self.dim;
        let (i, s) = self.locate(t);
        let h = self.times[i + 1] - self.times[i];
        let y0 = &self.values[i * d..(i + 1) * d];
        let y1 = &self.values[(i + 1) * d..(i + 2) * d];
        let d0 = &self.slopes[2 * i * d..(2 * i + 1) * d];
        let d1 = &self.slopes[(2 * i + 1) * d..(2 * i + 2) * d];
        let b = &self.bubbles[i * d..(i + 1) * d];
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let q = s2 * (1.0 - s) * (1.0 - s);
        for k in 0..d {
            out[k] = h00 * y0[k] + h * (h10 * d0[k] + h11 * d1[k]) + h01 * y1[k] + q * b[k];
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    /// Time derivative of the interpolant.
    pub fn derivative(&self, t: f64) -> Vec<f64> {
        let d = self.dim;
        let (i, s) = self.locate(t);
        let h = self.times[i + 1] - self.times[i];
        let y0 = &self.values[i * d..(i + 1) * d];
        let y1 = &self.values[(i + 1) * d..(i + 2) * d];
        let d0 = &self.slopes[2 * i * d..(2 * i + 1) * d];
        let d1 = &self.slopes[(2 * i + 1) * d..(2 * i + 2) * d];
        let b = &self.bubbles[i * d..(i + 1) * d];
        let s2 = s * s;
        let g00 = 6.0 * s2 - 6.0 * s;
        let g10 = 3.0 * s2 - 4.0 * s + 1.0;
        let g01 = -6.0 * s2 + 6.0 * s;
        let g11 = 3.0 * s2 - 2.0 * s;
        let gq = 2.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
        (0..d)
            .map(|k| {
                (g00 * y0[k] + g01 * y1[k] + gq * b[k]) / h + g10 * d0[k] + g11 * d1[k]
            })
            .collect()
    }

    /// Sub-arc over the component range `range`.
    pub fn components(&self, range: Range<usize>) -> DenseArc {
        let d = self.dim;
        let w = range.len();
        let pick = |src: &[f64], chunks: usize| {
            let mut out = Vec::with_capacity(chunks * w);
            for c in 0..chunks {
                out.extend_from_slice(&src[c * d + range.start..c * d + range.end]);
            }
            out
        };
        let n = self.times.len();
        DenseArc {
            dim: w,
            times: self.times.clone(),
            values: pick(&self.values, n),
            slopes: pick(&self.slopes, 2 * (n - 1)),
            bubbles: pick(&self.bubbles, n - 1),
        }
    }

    /// Sup over nodes of the Euclidean norm.
    pub fn max_node_norm(&self) -> f64 {
        (0..self.len())
            .map(|i| vector_norm(self.node(i)))
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,<columns>` and one row per node.
    pub fn to_csv(&self, columns: &[String]) -> String {
        assert_eq!(columns.len(), self.dim);
        let mut header = vec!["t".to_string()];
        header.extend(columns.iter().cloned());
        let rows = (0..self.len()).map(|i| {
            let mut row = vec![self.times[i]];
            row.extend_from_slice(self.node(i));
            row
        });
        csvfmt::table(&header, rows)
    }
}

pub fn vector_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn vector_columns(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("v{i}")).collect()
}

/// State curve `x(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory(pub(crate) DenseArc);

/// Costate curve `ψ(t)` (row vectors stored as plain vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointArc(pub(crate) DenseArc);

impl Deref for Trajectory {
    type Target = DenseArc;
    fn deref(&self) -> &DenseArc {
        &self.0
    }
}

impl Deref for AdjointArc {
    type Target = DenseArc;
    fn deref(&self) -> &DenseArc {
        &self.0
    }
}

impl Trajectory {
    pub fn new(arc: DenseArc) -> Self {
        Self(arc)
    }
    pub fn into_arc(self) -> DenseArc {
        self.0
    }
    pub fn to_csv(&self) -> String {
        self.0.to_csv(&vector_columns(self.dim()))
    }
}

impl AdjointArc {
    pub fn new(arc: DenseArc) -> Self {
        Self(arc)
    }
    pub fn into_arc(self) -> DenseArc {
        self.0
    }
    pub fn to_csv(&self) -> String {
        self.0.to_csv(&vector_columns(self.dim()))
    }

    /// The same arc multiplied by `c`.
    pub fn scaled(&self, c: f64) -> AdjointArc {
        let mut arc = self.0.clone();
        arc.values.iter_mut().for_each(|v| *v *= c);
        arc.slopes.iter_mut().for_each(|v| *v *= c);
        arc.bubbles.iter_mut().for_each(|v| *v *= c);
        AdjointArc(arc)
    }
}

/// Matrix-valued curve `A(t)` (row-major `m×m` per node) with `log|det A|` at nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixArc {
    arc: DenseArc,
    m: usize,
    log_det: Vec<f64>,
}

impl MatrixArc {
    pub(crate) fn new(arc: DenseArc, m: usize, log_det: Vec<f64>) -> Self {
        debug_assert_eq!(arc.dim(), m * m);
        debug_assert_eq!(log_det.len(), arc.len());
        Self { arc, m, log_det }
    }

    /// Wrap a row-major matrix arc, computing `log|det|` at nodes by LU.
    pub fn from_arc(arc: DenseArc, m: usize) -> Self {
        let log_det = (0..arc.len())
            .map(|i| {
                let det = DMatrix::from_row_slice(m, m, arc.node(i)).determinant();
                det.abs().ln()
            })
            .collect();
        Self::new(arc, m, log_det)
    }

    pub fn arc(&self) -> &DenseArc {
        &self.arc
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn times(&self) -> &[f64] {
        self.arc.times()
    }

    pub fn start(&self) -> f64 {
        self.arc.start()
    }

    pub fn end(&self) -> f64 {
        self.arc.end()
    }

    pub fn log_det(&self) -> &[f64] {
        &self.log_det
    }

    pub fn node_matrix(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.m, self.m, self.arc.node(i))
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.m, self.m, &self.arc.eval(t))
    }

    /// Constant identity arc on `[a, b]`.
    pub fn identity(m: usize, a: f64, b: f64) -> Self {
        let id = DMatrix::<f64>::identity(m, m);
        let row: Vec<f64> = id.transpose().as_slice().to_vec();
        let mut values = row.clone();
        values.extend_from_slice(&row);
        let arc = DenseArc::from_nodes(m * m, vec![a, b], values, &vec![0.0; 2 * m * m]);
        Self::new(arc, m, vec![0.0, 0.0])
    }

    pub fn to_csv(&self) -> String {
        let cols: Vec<String> = (1..=self.m)
            .flat_map(|i| (1..=self.m).map(move |j| format!("a{i}{j}")))
            .collect();
        self.arc.to_csv(&cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_cubics() {
        // y = t^3 - t, y' = 3t^2 - 1 on nodes 0, 0.5, 2
        let ts = vec![0.0, 0.5, 2.0];
        let ys: Vec<f64> = ts.iter().map(|t| t * t * t - t).collect();
        let ds: Vec<f64> = ts.iter().map(|t| 3.0 * t * t - 1.0).collect();
        let arc = DenseArc::from_nodes(1, ts, ys, &ds);
        for t in [0.1, 0.7, 1.3, 1.99] {
            assert!((arc.eval(t)[0] - (t * t * t - t)).abs() < 1e-14);
            assert!((arc.derivative(t)[0] - (3.0 * t * t - 1.0)).abs() < 1e-13);
        }
        assert_eq!(arc.node_slope(2), &[11.0]);
    }

    #[test]
    fn reverse_preserves_interpolant() {
        let mut arc = DenseArc::with_start(1, 2.0, &[4.0]);
        arc.push_interval(1.0, &[1.0], &[4.0], &[2.0], &[0.3]);
        arc.push_interval(0.0, &[0.0], &[2.0], &[0.0], &[-0.1]);
        let mut fwd = arc.clone();
        fwd.reverse();
        assert_eq!(fwd.times(), &[0.0, 1.0, 2.0]);
        // t^2 through the nodes with exact slopes, plus the bubble term
        let s: f64 = 0.4;
        let expected = s * s + s * s * (1.0 - s) * (1.0 - s) * -0.1;
        assert!((fwd.eval(0.4)[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn components_slice() {
        let arc = DenseArc::from_nodes(
            2,
            vec![0.0, 1.0],
            vec![1.0, 2.0, 3.0, 4.0],
            &[0.0, 0.0, 0.0, 0.0],
        );
        let c = arc.components(1..2);
        assert_eq!(c.node(1), &[4.0]);
    }

    #[test]
    fn identity_arc() {
        let a = MatrixArc::identity(2, 0.0, 5.0);
        assert_eq!(a.at(2.5), DMatrix::identity(2, 2));
        assert!(a.to_csv().starts_with("t,a11,a12,a21,a22\n"));
    }
}
