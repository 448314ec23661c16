//! Functional samples on a common grid and the quadrature L² geometry.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Discretization points of the domain together with quadrature weights.
///
/// The weights play the role of the measure: `⟨f, g⟩ = Σ_j w_j f_j g_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Parameter(format!(
                "grid needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} grid points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter(
                "grid points must be finite and strictly increasing".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Parameter("quadrature weights must be finite and >= 0".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Parameter("quadrature weights sum to zero".into()));
        }
        Ok(Self { points, weights })
    }

    /// Trapezoid weights on arbitrary increasing points.
    pub fn trapezoid(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Parameter(format!(
                "grid needs at least 2 points, got {}",
                points.len()
            )));
        }
        let m = points.len();
        let mut weights = vec![0.0; m];
        for j in 0..m - 1 {
            let half = 0.5 * (points[j + 1] - points[j]);
            weights[j] += half;
            weights[j + 1] += half;
        }
        Self::new(points, weights)
    }

    /// `m` equispaced points on `[0, 1]` with trapezoid weights.
    pub fn uniform(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Parameter(format!("grid needs at least 2 points, got {m}")));
        }
        let step = 1.0 / (m - 1) as f64;
        let points = (0..m).map(|j| j as f64 * step).collect();
        let mut weights = vec![step; m];
        weights[0] = 0.5 * step;
        // the last weight absorbs rounding so the weights sum to exactly 1
        weights[m - 1] = 1.0 - weights[..m - 1].iter().sum::<f64>();
        Self::new(points, weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.len() {
            return Err(Error::Dimension(format!(
                "{what} has {len} values but the grid has {} points",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Values of a single function on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Curve(Vec<f64>);

impl Curve {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("curve value at index {j} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid.points().iter().map(|&t| f(t)).collect())
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn constant(m: usize, c: f64) -> Self {
        Self(vec![c; m])
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, a: f64) -> Curve {
        Curve(self.0.iter().map(|v| a * v).collect())
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// A sample of `n` curves sharing one grid, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FSeries {
    data: Vec<f64>,
    n: usize,
    grid: Grid,
    centered: bool,
}

impl FSeries {
    /// Builds a series from a row-major `n × m` buffer.
    pub fn from_flat(grid: Grid, n: usize, data: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("a series needs at least 2 curves, got {n}")));
        }
        let m = grid.len();
        if data.len() != n * m {
            return Err(Error::Dimension(format!(
                "buffer of length {} does not hold {n} curves of length {m}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "value of curve {} at grid index {} is not finite",
                pos / m,
                pos % m
            )));
        }
        Ok(Self { data, n, grid, centered: false })
    }

    pub fn from_rows(grid: Grid, rows: &[Vec<f64>]) -> Result<Self> {
        let m = grid.len();
        let mut data = Vec::with_capacity(rows.len() * m);
        for (i, row) in rows.iter().enumerate() {
            grid.check_len(row.len(), &format!("curve {i}"))?;
            data.extend_from_slice(row);
        }
        Self::from_flat(grid, rows.len(), data)
    }

    pub fn from_curves(grid: Grid, curves: &[Curve]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = curves.iter().map(|c| c.values().to_vec()).collect();
        Self::from_rows(grid, &rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.m();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.m())
    }

    pub fn curve(&self, i: usize) -> Curve {
        Curve(self.row(i).to_vec())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Returns `a · X`.
    pub fn scaled(&self, a: f64) -> FSeries {
        FSeries {
            data: self.data.iter().map(|v| a * v).collect(),
            n: self.n,
            grid: self.grid.clone(),
            centered: self.centered,
        }
    }

    /// Adds the same curve to every row.
    pub fn shifted(&self, shift: &Curve) -> Result<FSeries> {
        self.grid.check_len(shift.len(), "shift curve")?;
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.m()) {
            for (v, s) in row.iter_mut().zip(shift.values()) {
                *v += s;
            }
        }
        FSeries::from_flat(self.grid.clone(), self.n, data)
    }

    /// Sample in reverse time order.
    pub fn reversed(&self) -> FSeries {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.m()).rev() {
            data.extend_from_slice(row);
        }
        FSeries { data, n: self.n, grid: self.grid.clone(), centered: self.centered }
    }
}

/// Principal-component style scores: row `i`, column `p` holds `⟨X_i, w_p⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    scores: Vec<f64>,
    n: usize,
    d: usize,
    basis_id: String,
}

impl ScoreMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn basis_id(&self) -> &str {
        &self.basis_id
    }

    pub fn get(&self, i: usize, p: usize) -> f64 {
        self.scores[i * self.d + p]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.d..(i + 1) * self.d]
    }

    pub fn column(&self, p: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, p)).collect()
    }
}

#[inline]
pub(crate) fn weighted_dot(w: &[f64], f: &[f64], g: &[f64]) -> f64 {
    w.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
}

pub fn inner(f: &Curve, g: &Curve, grid: &Grid) -> Result<f64> {
    grid.check_len(f.len(), "first curve")?;
    grid.check_len(g.len(), "second curve")?;
    Ok(weighted_dot(grid.weights(), f.values(), g.values()))
}

pub fn norm(f: &Curve, grid: &Grid) -> Result<f64> {
    Ok(inner(f, f, grid)?.max(0.0).sqrt())
}

pub fn mean_curve(xs: &FSeries) -> Curve {
    let m = xs.m();
    let mut acc = vec![0.0; m];
    for row in xs.rows() {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let inv = 1.0 / xs.n() as f64;
    Curve(acc.into_iter().map(|a| a * inv).collect())
}

/// Subtracts the mean curve from every row.
///
/// Idempotent: a series produced by `center` is returned unchanged.
pub fn center(xs: &FSeries) -> FSeries {
    if xs.centered {
        return xs.clone();
    }
    let mean = mean_curve(xs);
    let mut data = xs.data.clone();
    for row in data.chunks_exact_mut(xs.m()) {
        for (v, mu) in row.iter_mut().zip(mean.values()) {
            *v -= mu;
        }
    }
    FSeries { data, n: xs.n, grid: xs.grid.clone(), centered: true }
}

pub fn project_scores(xs: &FSeries, basis: &[Curve]) -> Result<ScoreMatrix> {
    project_scores_with_id(xs, basis, "custom")
}

pub(crate) fn project_scores_with_id(xs: &FSeries, basis: &[Curve], id: &str) -> Result<ScoreMatrix> {
    if basis.is_empty() {
        return Err(Error::Parameter("projection basis is empty".into()));
    }
    for (p, b) in basis.iter().enumerate() {
        xs.grid.check_len(b.len(), &format!("basis curve {p}"))?;
    }
    let w = xs.grid.weights();
    // pre-multiply the basis by the weights once
    let weighted: Vec<Vec<f64>> = basis
        .iter()
        .map(|b| b.values().iter().zip(w).map(|(v, w)| v * w).collect())
        .collect();
    let d = basis.len();
    let mut scores = Vec::with_capacity(xs.n * d);
    for row in xs.rows() {
        for wb in &weighted {
            scores.push(wb.iter().zip(row).map(|(a, b)| a * b).sum());
        }
    }
    Ok(ScoreMatrix { scores, n: xs.n, d, basis_id: id.to_string() })
}
