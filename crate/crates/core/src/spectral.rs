//! Eigendecomposition of discretized operators in L²(ν) and the ridge
//! inverse square root `(C + λ₁ Id)^{-1/2}`.

use crate::covariance::LinOp;
use crate::error::{Error, Result};
use crate::fseries::{Curve, Grid};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Relative asymmetry tolerated by [`eig`].
const SYMMETRY_TOL: f64 = 1e-8;
/// Negative eigenvalues above `-NEG_CLAMP · λ₁` are rounding noise and set to 0.
const NEG_CLAMP: f64 = 1e-6;
/// Relative gap under which two eigenvalues are reported as tied.
const TIE_TOL: f64 = 1e-6;

/// Descending eigenvalues with L²(ν)-orthonormal eigenfunctions.
#[derive(Clone, Debug)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<Curve>,
    grid: Grid,
    // row p holds w ⊙ v_p so that scores are plain dot products
    weighted: Vec<Vec<f64>>,
}

impl Spectrum {
    /// Builds a spectrum from known eigenpairs, e.g. a closed-form operator.
    ///
    /// Eigenvalues must be nonnegative and descending.
    pub fn from_parts(grid: Grid, eigenvalues: Vec<f64>, eigenfunctions: Vec<Curve>) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.len() != eigenfunctions.len() {
            return Err(Error::Dimension(format!(
                "{} eigenvalues for {} eigenfunctions",
                eigenvalues.len(),
                eigenfunctions.len()
            )));
        }
        if eigenvalues.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::Parameter("eigenvalues must be finite and nonnegative".into()));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Parameter("eigenvalues must be in descending order".into()));
        }
        for f in &eigenfunctions {
            grid.check_len(f.len(), "eigenfunction")?;
        }
        let weighted = eigenfunctions
            .iter()
            .map(|v| v.values().iter().zip(grid.weights()).map(|(a, w)| a * w).collect())
            .collect();
        Ok(Self { eigenvalues, eigenfunctions, grid, weighted })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &[Curve] {
        &self.eigenfunctions
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Scores `⟨f, v_p⟩` for every eigenfunction.
    pub fn scores(&self, f: &[f64]) -> Vec<f64> {
        self.weighted.iter().map(|wv| wv.iter().zip(f).map(|(a, b)| a * b).sum()).collect()
    }

    /// Kernel `Σ_p λ_p v_p(s) v_p(t)`.
    pub fn reconstruct(&self) -> LinOp {
        LinOp::from_components(self.grid.clone(), &self.eigenvalues, &self.eigenfunctions)
            .expect("spectrum components share the grid")
    }

    /// Whether `λ_d` and `λ_{d+1}` coincide up to relative tolerance, so that
    /// the leading `d`-dimensional eigenspace is not identified.
    pub fn near_tie(&self, d: usize) -> bool {
        if d == 0 || d >= self.len() {
            return false;
        }
        let (a, b) = (self.eigenvalues[d - 1], self.eigenvalues[d]);
        a > 0.0 && (a - b).abs() <= TIE_TOL * a
    }
}

/// Truncation rule for a spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truncation {
    /// Keep the leading `d` eigenpairs.
    Count(usize),
    /// Keep the shortest prefix explaining at least this fraction of the trace.
    Energy(f64),
}

fn weighted_symmetric(op: &LinOp) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let k = op.kernel();
    let scale = op.max_abs();
    let asym = (k - k.transpose()).abs().max();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Input(format!(
            "operator is not self-adjoint (asymmetry {asym:.3e} relative to {scale:.3e})"
        )));
    }
    let w = op.grid().weights();
    if w.iter().any(|v| *v <= 0.0) {
        return Err(Error::Input(
            "eigendecomposition needs strictly positive quadrature weights".into(),
        ));
    }
    let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let m = sqrt_w.len();
    let mut a = DMatrix::from_fn(m, m, |j, l| sqrt_w[j] * k[(j, l)] * sqrt_w[l]);
    a = (&a + a.transpose()) * 0.5;
    Ok((a, sqrt_w))
}

fn decompose(op: &LinOp) -> Result<(Vec<f64>, DMatrix<f64>, Vec<f64>)> {
    let (a, sqrt_w) = weighted_symmetric(op)?;
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors, sqrt_w))
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // stable: ties keep solver order
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

/// All eigenvalues of a self-adjoint operator in descending order, unclamped.
pub fn raw_eigenvalues(op: &LinOp) -> Result<Vec<f64>> {
    let (vals, _, _) = decompose(op)?;
    Ok(descending_order(&vals).into_iter().map(|i| vals[i]).collect())
}

/// Operator norm `max_p |λ_p|` of a self-adjoint, possibly indefinite operator.
pub fn abs_op_norm(op: &LinOp) -> Result<f64> {
    Ok(raw_eigenvalues(op)?.iter().fold(0.0, |a, v| a.max(v.abs())))
}

/// Eigendecomposition of a positive semi-definite self-adjoint operator.
///
/// Solves the symmetric problem for `D^{1/2} K D^{1/2}` with `D = diag(w)`
/// and maps eigenvectors back by `D^{-1/2}`. Small negative eigenvalues are
/// clamped to zero; anything below `-1e-6 · λ₁` is an error. Each
/// eigenfunction is signed so that its entry of largest magnitude is positive.
pub fn eig(op: &LinOp) -> Result<Spectrum> {
    let (vals, vecs, sqrt_w) = decompose(op)?;
    let order = descending_order(&vals);
    let top = vals[order[0]].max(0.0);
    let mut eigenvalues = Vec::with_capacity(vals.len());
    let mut eigenfunctions = Vec::with_capacity(vals.len());
    for &i in &order {
        let lambda = vals[i];
        let lambda = if lambda >= 0.0 {
            lambda
        } else if lambda > -NEG_CLAMP * top {
            0.0
        } else {
            return Err(Error::Numerical(format!(
                "operator has eigenvalue {lambda:.6e} below -{NEG_CLAMP:e} * largest ({top:.6e}); \
                 the lag-window kernel does not give a positive semi-definite estimate here"
            )));
        };
        let mut v: Vec<f64> = vecs.column(i).iter().zip(&sqrt_w).map(|(u, s)| u / s).collect();
        let pivot = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (j, x)| if x.abs() > bv { (j, x.abs()) } else { (bi, bv) })
            .0;
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        eigenvalues.push(lambda);
        eigenfunctions.push(Curve::from_vec_unchecked(v));
    }
    Spectrum::from_parts(op.grid().clone(), eigenvalues, eigenfunctions)
}

pub fn op_norm(spec: &Spectrum) -> f64 {
    spec.lambda1()
}

/// Applies `(C + λ₁ Id)^{-1/2}` to `f`.
///
/// Directions not covered by the spectrum are treated as eigenvalue zero and
/// scaled by `λ₁^{-1/2}`, so a truncated spectrum still gives a bounded map.
pub fn ridge_inv_sqrt_apply(spec: &Spectrum, f: &Curve) -> Result<Curve> {
    spec.grid.check_len(f.len(), "curve")?;
    Ok(Curve::from_vec_unchecked(ridge_apply_slice(spec, f.values())?))
}

pub(crate) fn ridge_factors(spec: &Spectrum) -> Result<(f64, Vec<f64>)> {
    let l1 = spec.lambda1();
    if !(l1 > 0.0) {
        return Err(Error::Degenerate(
            "long-run covariance estimate is the zero operator (largest eigenvalue is 0)".into(),
        ));
    }
    let base = l1.powf(-0.5);
    let factors = spec.eigenvalues.iter().map(|l| (l + l1).powf(-0.5) - base).collect();
    Ok((base, factors))
}

pub(crate) fn ridge_apply_slice(spec: &Spectrum, f: &[f64]) -> Result<Vec<f64>> {
    let (base, factors) = ridge_factors(spec)?;
    let mut out: Vec<f64> = f.iter().map(|v| base * v).collect();
    for ((v, wv), c) in spec.eigenfunctions.iter().zip(&spec.weighted).zip(&factors) {
        let coef = c * wv.iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
        for (o, x) in out.iter_mut().zip(v.values()) {
            *o += coef * x;
        }
    }
    Ok(out)
}

pub fn truncate(spec: &Spectrum, policy: Truncation) -> Result<Spectrum> {
    let keep = match policy {
        Truncation::Count(d) => {
            if d == 0 || d > spec.len() {
                return Err(Error::Parameter(format!(
                    "cannot keep {d} of {} eigenpairs",
                    spec.len()
                )));
            }
            d
        }
        Truncation::Energy(tau) => {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::Parameter(format!("energy fraction must be in (0, 1], got {tau}")));
            }
            if tau == 1.0 {
                spec.len()
            } else {
                let total: f64 = spec.eigenvalues.iter().sum();
                let mut acc = 0.0;
                let mut keep = spec.len();
                for (p, l) in spec.eigenvalues.iter().enumerate() {
                    acc += l;
                    if acc >= tau * total {
                        keep = p + 1;
                        break;
                    }
                }
                keep.max(1)
            }
        }
    };
    Spectrum::from_parts(
        spec.grid.clone(),
        spec.eigenvalues[..keep].to_vec(),
        spec.eigenfunctions[..keep].to_vec(),
    )
}
