//! CUSUM statistics for an abrupt (at-most-one) change in the mean.
//!
//! FF and WF report the unsquared maximum norm; PC reports the squared
//! quadratic form, matching the usual presentation of each statistic. Use
//! [`TestReport::limit_scale`] to put any of them on the squared scale of the
//! simulated null draws.

use crate::error::{Error, Result};
use crate::fseries::{center, weighted_dot, Curve, FSeries};
use crate::gradual::WeightFn;
use crate::spectral::{ridge_apply_slice, ridge_factors, Spectrum};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Dimension reduction onto the leading long-run principal curves.
    Pc,
    /// Fully functional CUSUM.
    Ff,
    /// Weighted functional CUSUM with `(C + λ₁ Id)^{-1/2}`.
    Wf,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pc => "pc",
            Method::Ff => "ff",
            Method::Wf => "wf",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pc" => Ok(Method::Pc),
            "ff" => Ok(Method::Ff),
            "wf" => Ok(Method::Wf),
            other => Err(Error::Parameter(format!("unknown method '{other}' (expected pc, ff or wf)"))),
        }
    }
}

/// Outcome of one change point test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: Method,
    /// Weight function of the gradual statistic, `None` for the CUSUM version.
    pub weight: Option<WeightFn>,
    pub statistic: f64,
    /// Whether `statistic` is reported on the squared scale (PC only).
    pub squared: bool,
    /// Maximizing index `k` in `1..n`.
    pub khat: usize,
    pub theta_hat: f64,
    pub n: usize,
    pub d_used: Option<usize>,
    pub critical_value: Option<f64>,
    pub pvalue: Option<f64>,
    pub alpha: Option<f64>,
    pub reject: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TestReport {
    pub(crate) fn new(method: Method, weight: Option<WeightFn>, best: (f64, usize), n: usize) -> Self {
        let squared = method == Method::Pc;
        let statistic = if squared { best.0 } else { best.0.sqrt() };
        Self {
            method,
            weight,
            statistic,
            squared,
            khat: best.1,
            theta_hat: best.1 as f64 / n as f64,
            n,
            d_used: None,
            critical_value: None,
            pvalue: None,
            alpha: None,
            reject: None,
            warnings: Vec::new(),
        }
    }

    /// The statistic on the squared scale used by the limit draws.
    pub fn limit_scale(&self) -> f64 {
        if self.squared {
            self.statistic
        } else {
            self.statistic * self.statistic
        }
    }
}

/// Maximum with the smallest maximizing index; `values[k-1]` belongs to `k`.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 1);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.0 {
            best = (v, i + 1);
        }
    }
    (best.0.max(0.0), best.1)
}

/// Rows `k = 1..n-1` of `n^{-1/2} Σ_{i≤k} (X_i − X̄)`, row-major.
pub(crate) fn partial_sums(xs: &FSeries) -> Vec<f64> {
    let c = center(xs);
    let (n, m) = (c.n(), c.m());
    let scale = 1.0 / (n as f64).sqrt();
    let mut acc = vec![0.0; m];
    let mut out = Vec::with_capacity((n - 1) * m);
    for row in c.rows().take(n - 1) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
        out.extend(acc.iter().map(|a| a * scale));
    }
    out
}

/// Partial sums of scores, `n^{-1/2} Σ_{i≤k} (η_{i,p} − η̄_p)`, row-major `(n−1) × P`.
pub(crate) fn score_partial_sums(xs: &FSeries, spec: &Spectrum) -> Vec<f64> {
    let p = spec.len();
    let c = center(xs);
    let n = c.n();
    let scale = 1.0 / (n as f64).sqrt();
    let mut acc = vec![0.0; p];
    let mut out = Vec::with_capacity((n - 1) * p);
    for row in c.rows().take(n - 1) {
        for (a, s) in acc.iter_mut().zip(spec.scores(row)) {
            *a += s;
        }
        out.extend(acc.iter().map(|a| a * scale));
    }
    out
}

pub(crate) fn check_grid(xs: &FSeries, spec: &Spectrum) -> Result<()> {
    if xs.grid() != spec.grid() {
        return Err(Error::Dimension("series and spectrum use different grids".into()));
    }
    Ok(())
}

/// Validates `d` for the PC statistic and returns the tie warning, if any.
pub(crate) fn check_pc_dimension(spec: &Spectrum, d: usize) -> Result<Vec<String>> {
    if d == 0 || d > spec.len() {
        return Err(Error::Rank(format!(
            "number of components must be in 1..={}, got {d}",
            spec.len()
        )));
    }
    let ld = spec.eigenvalues()[d - 1];
    if !(ld > 0.0) {
        return Err(Error::Rank(format!(
            "eigenvalue {d} of the long-run covariance is {ld:e}; reduce the number of components"
        )));
    }
    let mut warnings = Vec::new();
    if spec.near_tie(d) {
        warnings.push(format!(
            "eigenvalues {d} and {} are tied within 1e-6; the PC subspace is not identified",
            d + 1
        ));
    }
    Ok(warnings)
}

pub fn cusum_process(xs: &FSeries) -> Vec<Curve> {
    partial_sums(xs)
        .chunks_exact(xs.m())
        .map(|c| Curve::from_vec_unchecked(c.to_vec()))
        .collect()
}

/// Fully functional statistic `max_k ‖S_k‖`.
pub fn t_ff(xs: &FSeries) -> TestReport {
    let w = xs.grid().weights();
    let best = argmax(partial_sums(xs).chunks_exact(xs.m()).map(|s| weighted_dot(w, s, s)));
    TestReport::new(Method::Ff, None, best, xs.n())
}

/// Fully functional statistic evaluated through the scores of a complete
/// orthonormal basis (Parseval form); equals [`t_ff`] for a full spectrum.
pub fn t_ff_spectral(xs: &FSeries, basis: &Spectrum) -> Result<TestReport> {
    check_grid(xs, basis)?;
    let sums = score_partial_sums(xs, basis);
    let best = argmax(sums.chunks_exact(basis.len()).map(|s| s.iter().map(|v| v * v).sum()));
    Ok(TestReport::new(Method::Ff, None, best, xs.n()))
}

/// Weighted functional statistic `max_k ‖(Ĉ + λ̂₁ Id)^{-1/2} S_k‖`.
pub fn t_wf(xs: &FSeries, lr: &Spectrum) -> Result<TestReport> {
    check_grid(xs, lr)?;
    let w = xs.grid().weights();
    let mut values = Vec::with_capacity(xs.n() - 1);
    for s in partial_sums(xs).chunks_exact(xs.m()) {
        let t = ridge_apply_slice(lr, s)?;
        values.push(weighted_dot(w, &t, &t));
    }
    Ok(TestReport::new(Method::Wf, None, argmax(values), xs.n()))
}

/// Weighted functional statistic through its eigen-expansion
/// `max_k Σ_p (λ_p + λ₁)^{-1} ⟨S_k, v_p⟩²`; equals [`t_wf`] for a full spectrum.
pub fn t_wf_spectral(xs: &FSeries, lr: &Spectrum) -> Result<TestReport> {
    check_grid(xs, lr)?;
    ridge_factors(lr)?;
    let l1 = lr.lambda1();
    let inv: Vec<f64> = lr.eigenvalues().iter().map(|l| 1.0 / (l + l1)).collect();
    let sums = score_partial_sums(xs, lr);
    let best = argmax(
        sums.chunks_exact(lr.len())
            .map(|s| s.iter().zip(&inv).map(|(v, c)| c * v * v).sum()),
    );
    Ok(TestReport::new(Method::Wf, None, best, xs.n()))
}

/// Squared PC statistic `max_k Σ_{p≤d} λ̂_p^{-1} ⟨S_k, v̂_p⟩²`.
pub fn t_pc(xs: &FSeries, lr: &Spectrum, d: usize) -> Result<TestReport> {
    check_grid(xs, lr)?;
    let warnings = check_pc_dimension(lr, d)?;
    let lead = crate::spectral::truncate(lr, crate::spectral::Truncation::Count(d))?;
    let inv: Vec<f64> = lead.eigenvalues().iter().map(|l| 1.0 / l).collect();
    let sums = score_partial_sums(xs, &lead);
    let best = argmax(sums.chunks_exact(d).map(|s| s.iter().zip(&inv).map(|(v, c)| c * v * v).sum()));
    let mut report = TestReport::new(Method::Pc, None, best, xs.n());
    report.d_used = Some(d);
    report.warnings = warnings;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{default_bandwidth, lrcov, KernelFn, LinOp};
    use crate::dgp::{fourier_basis, gen_noise, inject, ChangeFn, NoiseSpec};
    use crate::fseries::{norm, Grid};
    use crate::spectral::eig;
    use proptest::prelude::*;

    fn sample(n: usize, m: usize, seed: u64) -> FSeries {
        gen_noise(&NoiseSpec { num_terms: m, ..NoiseSpec::default() }, n, &Grid::uniform(m).unwrap(), seed)
            .unwrap()
    }

    fn lr_spectrum(xs: &FSeries) -> Spectrum {
        let k = KernelFn::Bartlett;
        eig(&lrcov(xs, k, default_bandwidth(xs.n(), k)).unwrap()).unwrap()
    }

    #[test]
    fn constant_series_is_zero() {
        let g = Grid::uniform(6).unwrap();
        let xs = FSeries::from_rows(g.clone(), &vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; 8]).unwrap();
        assert!(cusum_process(&xs).iter().all(|c| c.values().iter().all(|v| *v == 0.0)));
        let r = t_ff(&xs);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.khat, 1);
        // any non-degenerate spectrum on the same grid
        let basis = fourier_basis(&g, 2).unwrap();
        let spec = Spectrum::from_parts(g, vec![1.0, 0.5], basis).unwrap();
        assert_eq!(t_wf(&xs, &spec).unwrap().statistic, 0.0);
        assert_eq!(t_pc(&xs, &spec, 2).unwrap().statistic, 0.0);
    }

    #[test]
    fn two_curves_by_hand() {
        let g = Grid::uniform(5).unwrap();
        let f = vec![1.0, -0.5, 2.0, 0.0, 3.0];
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let xs = FSeries::from_rows(g.clone(), &[f.clone(), neg]).unwrap();
        let s = cusum_process(&xs);
        assert_eq!(s.len(), 1);
        for (a, b) in s[0].values().iter().zip(&f) {
            assert!((a - b / 2f64.sqrt()).abs() < 1e-15);
        }
        let nf = norm(&Curve::new(f).unwrap(), &g).unwrap();
        assert!((t_ff(&xs).statistic - nf / 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn last_partial_sum_telescopes() {
        let xs = sample(9, 7, 1);
        let s = cusum_process(&xs);
        let c = center(&xs);
        let last = s.last().unwrap();
        for (j, v) in last.values().iter().enumerate() {
            assert!((v + c.row(8)[j] / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_component_wf() {
        let g = Grid::uniform(21).unwrap();
        let basis = fourier_basis(&g, 2).unwrap();
        let v1 = &basis[1];
        let coefs = [0.3, -1.2, 0.8, 2.0, -0.1, 0.4];
        let rows: Vec<Vec<f64>> =
            coefs.iter().map(|c| v1.values().iter().map(|x| c * x).collect()).collect();
        let xs = FSeries::from_rows(g.clone(), &rows).unwrap();
        let l1 = 0.7;
        let op = LinOp::from_components(g, &[l1], &[v1.clone()]).unwrap();
        let spec = eig(&op).unwrap();
        let ff = t_ff(&xs).statistic;
        let wf = t_wf(&xs, &spec).unwrap().statistic;
        assert!((wf - ff / (2.0 * l1).sqrt()).abs() < 1e-10);
    }

    fn scalar_pc_oracle(scores: &[f64], lambda: f64) -> f64 {
        let n = scores.len();
        let mean = scores.iter().sum::<f64>() / n as f64;
        let mut best = 0.0f64;
        for k in 1..n {
            let s: f64 = scores[..k].iter().map(|v| v - mean).sum();
            best = best.max(s * s / (n as f64 * lambda));
        }
        best
    }

    #[test]
    fn pc_one_component_matches_scalar() {
        for seed in 0..5 {
            let xs = sample(40, 11, seed);
            let spec = lr_spectrum(&xs);
            let v1 = spec.eigenfunctions()[0].clone();
            let scores: Vec<f64> = xs.rows().map(|r| weighted_dot(xs.grid().weights(), r, v1.values())).collect();
            let want = scalar_pc_oracle(&scores, spec.lambda1());
            let got = t_pc(&xs, &spec, 1).unwrap();
            assert!((got.statistic - want).abs() < 1e-10 * want.max(1.0));
            assert!(got.squared);
            assert_eq!(got.d_used, Some(1));
        }
    }

    #[test]
    fn pc_sign_flip_invariant() {
        let xs = sample(30, 9, 2);
        let spec = lr_spectrum(&xs);
        let mut funcs = spec.eigenfunctions().to_vec();
        funcs[0] = funcs[0].scaled(-1.0);
        let flipped = Spectrum::from_parts(spec.grid().clone(), spec.eigenvalues().to_vec(), funcs).unwrap();
        let a = t_pc(&xs, &spec, 3).unwrap().statistic;
        let b = t_pc(&xs, &flipped, 3).unwrap().statistic;
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn pc_rank_errors() {
        let g = Grid::uniform(5).unwrap();
        let xs = sample(10, 5, 3);
        let basis = fourier_basis(&g, 3).unwrap();
        let spec = Spectrum::from_parts(g, vec![1.0, 0.0, 0.0], basis).unwrap();
        assert!(matches!(t_pc(&xs, &spec, 2).unwrap_err(), Error::Rank(_)));
        assert!(matches!(t_pc(&xs, &spec, 0).unwrap_err(), Error::Rank(_)));
        assert!(matches!(t_pc(&xs, &spec, 4).unwrap_err(), Error::Rank(_)));
        assert!(t_pc(&xs, &spec, 1).is_ok());
    }

    #[test]
    fn pc_tie_warning() {
        let g = Grid::uniform(5).unwrap();
        let xs = sample(10, 5, 3);
        let basis = fourier_basis(&g, 3).unwrap();
        let spec = Spectrum::from_parts(g, vec![1.0, 0.5, 0.5], basis).unwrap();
        assert!(!t_pc(&xs, &spec, 2).unwrap().warnings.is_empty());
        assert!(t_pc(&xs, &spec, 1).unwrap().warnings.is_empty());
    }

    #[test]
    fn degenerate_spectrum_rejected() {
        let g = Grid::uniform(4).unwrap();
        let xs = sample(6, 4, 4);
        let spec = Spectrum::from_parts(g.clone(), vec![0.0; 4], fourier_basis(&g, 4).unwrap()).unwrap();
        assert!(matches!(t_wf(&xs, &spec).unwrap_err(), Error::Degenerate(_)));
        assert!(matches!(t_wf_spectral(&xs, &spec).unwrap_err(), Error::Degenerate(_)));
    }

    #[test]
    fn grid_mismatch_rejected() {
        let xs = sample(6, 4, 4);
        let g = Grid::uniform(5).unwrap();
        let spec = Spectrum::from_parts(g.clone(), vec![1.0], fourier_basis(&g, 1).unwrap()).unwrap();
        assert!(matches!(t_wf(&xs, &spec).unwrap_err(), Error::Dimension(_)));
    }

    #[test]
    fn localizes_strong_change() {
        let g = Grid::uniform(21).unwrap();
        let noise = gen_noise(&NoiseSpec::default(), 200, &g, 5).unwrap();
        let delta = fourier_basis(&g, 1).unwrap().remove(0).scaled(4.0);
        let xs = inject(&noise, &delta, &ChangeFn::Amoc { theta: 0.5 }, 1.0).unwrap();
        assert!((t_ff(&xs).theta_hat - 0.5).abs() <= 0.05);
    }

    proptest! {
        #[test]
        fn representations_and_bounds(seed in 0u64..200) {
            let xs = sample(25, 9, seed);
            let spec = lr_spectrum(&xs);
            let ff = t_ff(&xs);
            let ff_spec = t_ff_spectral(&xs, &spec).unwrap();
            prop_assert!((ff.statistic - ff_spec.statistic).abs() < 1e-8);
            let wf = t_wf(&xs, &spec).unwrap();
            let wf_spec = t_wf_spectral(&xs, &spec).unwrap();
            prop_assert!((wf.statistic - wf_spec.statistic).abs() < 1e-8);
            let l1 = spec.lambda1();
            prop_assert!(wf.statistic.powi(2) >= ff.statistic.powi(2) / (2.0 * l1) - 1e-8);
            let rank = spec.eigenvalues().iter().filter(|l| **l > 1e-10 * l1).count();
            if rank == spec.len() {
                let pc_full = t_pc(&xs, &spec, rank).unwrap().statistic;
                prop_assert!(wf.statistic.powi(2) <= pc_full + 1e-8);
            }
        }

        #[test]
        fn translation_and_reversal(seed in 0u64..200) {
            let xs = sample(20, 7, seed);
            let spec = lr_spectrum(&xs);
            let shift = Curve::from_fn(xs.grid(), |t| 3.0 - 2.0 * t).unwrap();
            let moved = xs.shifted(&shift).unwrap();
            let spec_moved = lr_spectrum(&moved);
            prop_assert!((t_ff(&xs).statistic - t_ff(&moved).statistic).abs() < 1e-10);
            prop_assert!((t_wf(&xs, &spec).unwrap().statistic - t_wf(&moved, &spec_moved).unwrap().statistic).abs() < 1e-10);
            prop_assert!((t_pc(&xs, &spec, 2).unwrap().statistic - t_pc(&moved, &spec_moved, 2).unwrap().statistic).abs() < 1e-10);

            let rev = xs.reversed();
            let spec_rev = lr_spectrum(&rev);
            let pairs = [
                (t_ff(&xs), t_ff(&rev)),
                (t_wf(&xs, &spec).unwrap(), t_wf(&rev, &spec_rev).unwrap()),
                (t_pc(&xs, &spec, 2).unwrap(), t_pc(&rev, &spec_rev, 2).unwrap()),
            ];
            for (a, b) in pairs {
                prop_assert!((a.statistic - b.statistic).abs() < 1e-9 * a.statistic.max(1.0));
                prop_assert_eq!(a.khat + b.khat, xs.n());
            }
        }
    }
}
