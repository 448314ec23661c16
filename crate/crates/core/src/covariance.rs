//! Lagged autocovariance operators and the kernel long-run covariance estimator.

use crate::error::{Error, Result};
use crate::fseries::{center, Curve, FSeries, Grid};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Integral operator discretized on a grid.
///
/// Acts on a curve as `(A f)_j = Σ_l w_l K[j, l] f_l`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinOp {
    kernel: DMatrix<f64>,
    grid: Grid,
}

impl LinOp {
    pub fn new(grid: Grid, kernel: DMatrix<f64>) -> Result<Self> {
        let m = grid.len();
        if kernel.nrows() != m || kernel.ncols() != m {
            return Err(Error::Dimension(format!(
                "kernel is {}x{} but the grid has {m} points",
                kernel.nrows(),
                kernel.ncols()
            )));
        }
        if kernel.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("operator kernel has non-finite entries".into()));
        }
        Ok(Self { kernel, grid })
    }

    pub fn zero(grid: Grid) -> Self {
        let m = grid.len();
        Self { kernel: DMatrix::zeros(m, m), grid }
    }

    /// Kernel `Σ_p c_p · f_p(s) f_p(t)`.
    pub fn from_components(grid: Grid, coefs: &[f64], curves: &[Curve]) -> Result<Self> {
        if coefs.len() != curves.len() {
            return Err(Error::Dimension(format!(
                "{} coefficients for {} curves",
                coefs.len(),
                curves.len()
            )));
        }
        let m = grid.len();
        let mut kernel = DMatrix::zeros(m, m);
        for (c, f) in coefs.iter().zip(curves) {
            grid.check_len(f.len(), "component curve")?;
            let v = nalgebra::DVector::from_column_slice(f.values());
            kernel.ger(*c, &v, &v, 1.0);
        }
        Self::new(grid, kernel)
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn apply(&self, f: &Curve) -> Result<Curve> {
        self.grid.check_len(f.len(), "curve")?;
        let w = self.grid.weights();
        let m = self.grid.len();
        let out = (0..m)
            .map(|j| (0..m).map(|l| self.kernel[(j, l)] * w[l] * f.values()[l]).sum())
            .collect();
        Ok(Curve::from_vec_unchecked(out))
    }

    /// The adjoint in L²(ν), i.e. the transposed kernel.
    pub fn adjoint(&self) -> LinOp {
        LinOp { kernel: self.kernel.transpose(), grid: self.grid.clone() }
    }

    pub fn symmetrized(&self) -> LinOp {
        LinOp {
            kernel: (&self.kernel + self.kernel.transpose()) * 0.5,
            grid: self.grid.clone(),
        }
    }

    pub fn scaled(&self, a: f64) -> LinOp {
        LinOp { kernel: &self.kernel * a, grid: self.grid.clone() }
    }

    pub fn sub(&self, other: &LinOp) -> Result<LinOp> {
        if self.grid != other.grid {
            return Err(Error::Dimension("operators live on different grids".into()));
        }
        Ok(LinOp { kernel: &self.kernel - &other.kernel, grid: self.grid.clone() })
    }

    /// Largest absolute kernel entry.
    pub fn max_abs(&self) -> f64 {
        self.kernel.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Lag-window kernels for the long-run covariance estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFn {
    /// `max(1 - |x|, 0)`, order 1.
    #[default]
    Bartlett,
    /// Parzen window, order 2.
    Parzen,
    /// Flat-top taper: 1 on `[-1/2, 1/2]`, linear down to 0 at `±1`.
    #[serde(rename = "flattop")]
    FlatTop,
}

impl KernelFn {
    pub fn eval(self, x: f64) -> f64 {
        let a = x.abs();
        if a >= 1.0 {
            return 0.0;
        }
        match self {
            KernelFn::Bartlett => 1.0 - a,
            KernelFn::Parzen => {
                if a <= 0.5 {
                    1.0 - 6.0 * a * a + 6.0 * a * a * a
                } else {
                    2.0 * (1.0 - a).powi(3)
                }
            }
            KernelFn::FlatTop => {
                if a <= 0.5 {
                    1.0
                } else {
                    2.0 * (1.0 - a)
                }
            }
        }
    }

    /// Characteristic exponent `q` with `0 < lim (1 - K(x)) / |x|^q < ∞`.
    /// The flat-top taper is constant near zero, so its order is infinite.
    pub fn order(self) -> f64 {
        match self {
            KernelFn::Bartlett => 1.0,
            KernelFn::Parzen => 2.0,
            KernelFn::FlatTop => f64::INFINITY,
        }
    }

    /// Half-width `c` of the support `[-c, c]`.
    pub fn support(self) -> f64 {
        1.0
    }
}

impl fmt::Display for KernelFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFn::Bartlett => "bartlett",
            KernelFn::Parzen => "parzen",
            KernelFn::FlatTop => "flattop",
        })
    }
}

impl FromStr for KernelFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bartlett" => Ok(KernelFn::Bartlett),
            "parzen" => Ok(KernelFn::Parzen),
            "flattop" | "flat-top" | "flat-top-taper" => Ok(KernelFn::FlatTop),
            other => Err(Error::Parameter(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Lag-window bandwidth `h_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Parameter(format!("bandwidth must be positive, got {value}")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Rate-based default `h_n = n^{1/(2q+1)}`, clamped to `[1, n]`.
pub fn default_bandwidth(n: usize, k: KernelFn) -> Bandwidth {
    let n = n.max(1) as f64;
    let h = n.powf(1.0 / (2.0 * k.order() + 1.0));
    Bandwidth(h.clamp(1.0, n))
}

fn centered_matrix(xs: &FSeries) -> DMatrix<f64> {
    let c = center(xs);
    DMatrix::from_row_slice(c.n(), c.m(), c.as_flat())
}

/// `(1/n) Σ_{i} Y_{i+r}(s) Y_i(t)` from a centered `n × m` matrix, `r ≥ 0`.
fn lag_kernel(y: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let (n, m) = y.shape();
    if r >= n {
        return DMatrix::zeros(m, m);
    }
    let lead = y.rows(r, n - r);
    let base = y.rows(0, n - r);
    let mut k = lead.transpose() * base;
    k /= n as f64;
    if r == 0 {
        k = (&k + k.transpose()) * 0.5;
    }
    k
}

/// Empirical lag-`r` autocovariance operator with divisor `n`.
///
/// Lags with `|r| >= n` give the zero operator. Negative lags return the
/// adjoint of the positive lag.
pub fn lag_cov(xs: &FSeries, r: i64) -> LinOp {
    let grid = xs.grid().clone();
    if r.unsigned_abs() as usize >= xs.n() {
        return LinOp::zero(grid);
    }
    let y = centered_matrix(xs);
    let k = lag_kernel(&y, r.unsigned_abs() as usize);
    let kernel = if r < 0 { k.transpose() } else { k };
    LinOp { kernel, grid }
}

pub fn sample_cov(xs: &FSeries) -> LinOp {
    lag_cov(xs, 0)
}

/// Kernel estimator `Σ_r K(r/h) Ĉ_r`, symmetrized.
pub fn lrcov(xs: &FSeries, k: KernelFn, h: Bandwidth) -> Result<LinOp> {
    let h = Bandwidth::new(h.value())?.value();
    let n = xs.n();
    let y = centered_matrix(xs);
    let max_lag = ((k.support() * h).ceil() as usize).min(n - 1);
    let mut acc = lag_kernel(&y, 0);
    for r in 1..=max_lag {
        let weight = k.eval(r as f64 / h);
        if weight == 0.0 {
            continue;
        }
        let c = lag_kernel(&y, r);
        acc += (&c + c.transpose()) * weight;
    }
    let kernel = (&acc + acc.transpose()) * 0.5;
    Ok(LinOp { kernel, grid: xs.grid().clone() })
}
