//! Monte Carlo null distributions built from Brownian bridges.
//!
//! Every draw is the supremum over the interior time nodes `j = 1..N-1` of a
//! weighted sum of squared processes `Σ_p w_p X_p(j/N)²`, where `X_p` is a
//! bridge (AMOC families) or the Stieltjes transform `G_p` of a bridge
//! (gradual families). Draws are kept on this squared scale.
//!
//! Draw `r` uses the random stream `r` of the seed and generates its
//! components one after another, so results do not depend on the number of
//! threads and a component's path does not depend on how many components
//! follow it. Components whose weight is below `1e-12` times the largest
//! weight are skipped.

use crate::amoc::Method;
use crate::error::{Error, Result};
use crate::gradual::WeightFn;
use crate::quad;
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

pub const DEFAULT_GRID_STEPS: usize = 1000;
pub const DEFAULT_MC_REPS: usize = 2000;
const NEGLIGIBLE_WEIGHT: f64 = 1e-12;
const COV_QUAD_POINTS: usize = 4001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Pc,
    Ff,
    Wf,
    PcGrad,
    FfGrad,
    WfGrad,
}

impl Family {
    pub fn new(method: Method, gradual: bool) -> Self {
        match (method, gradual) {
            (Method::Pc, false) => Family::Pc,
            (Method::Ff, false) => Family::Ff,
            (Method::Wf, false) => Family::Wf,
            (Method::Pc, true) => Family::PcGrad,
            (Method::Ff, true) => Family::FfGrad,
            (Method::Wf, true) => Family::WfGrad,
        }
    }

    pub fn method(self) -> Method {
        match self {
            Family::Pc | Family::PcGrad => Method::Pc,
            Family::Ff | Family::FfGrad => Method::Ff,
            Family::Wf | Family::WfGrad => Method::Wf,
        }
    }

    pub fn is_gradual(self) -> bool {
        matches!(self, Family::PcGrad | Family::FfGrad | Family::WfGrad)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = self.method();
        if self.is_gradual() {
            write!(f, "{base}-grad")
        } else {
            write!(f, "{base}")
        }
    }
}

/// `P` bridge paths on `N + 1` equispaced nodes of `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgePaths {
    count: usize,
    steps: usize,
    data: Vec<f64>,
}

impl BridgePaths {
    pub fn count(&self) -> usize {
        self.count
    }

    /// Number of time steps `N`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn path(&self, i: usize) -> &[f64] {
        &self.data[i * (self.steps + 1)..(i + 1) * (self.steps + 1)]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.steps + 1)
    }
}

/// Fills `out` (length `N + 1`) with the next bridge path drawn from `rng`.
pub(crate) fn fill_bridge<R: Rng>(rng: &mut R, out: &mut [f64]) {
    let steps = out.len() - 1;
    let scale = 1.0 / (steps as f64).sqrt();
    let mut w = 0.0;
    out[0] = 0.0;
    for v in out[1..].iter_mut() {
        let xi: f64 = rng.sample(StandardNormal);
        w += xi * scale;
        *v = w;
    }
    let end = out[steps];
    for (j, v) in out.iter_mut().enumerate() {
        *v -= j as f64 / steps as f64 * end;
    }
    out[steps] = 0.0;
}

/// The bridge used as path `index` by [`simulate_bridges`].
pub fn bridge_path(seed: u64, index: usize, steps: usize) -> Result<Vec<f64>> {
    check_steps(steps)?;
    let mut out = vec![0.0; steps + 1];
    fill_bridge(&mut rng::stream(seed, index as u64), &mut out);
    Ok(out)
}

fn check_steps(steps: usize) -> Result<()> {
    if steps < 2 {
        return Err(Error::Parameter(format!("time grid needs at least 2 steps, got {steps}")));
    }
    Ok(())
}

/// Independent standard Brownian bridges `B(j/N) = W(j/N) − (j/N) W(1)`.
pub fn simulate_bridges(count: usize, steps: usize, seed: u64) -> Result<BridgePaths> {
    check_steps(steps)?;
    if count == 0 {
        return Err(Error::Parameter("need at least one path".into()));
    }
    let mut data = vec![0.0; count * (steps + 1)];
    data.par_chunks_exact_mut(steps + 1)
        .enumerate()
        .for_each(|(i, row)| fill_bridge(&mut rng::stream(seed, i as u64), row));
    Ok(BridgePaths { count, steps, data })
}

/// Left-endpoint Stieltjes transform `G(t) = ∫₀^{1−t} B(1−t−y) dh(y)` on an
/// `N`-step grid.
#[derive(Clone, Debug)]
pub struct GpKernel {
    /// `h((l+1)/N) − h(l/N)` for `l = 0..N-1`.
    dh: Vec<f64>,
}

impl GpKernel {
    pub fn new(h: &WeightFn, steps: usize) -> Result<Self> {
        check_steps(steps)?;
        h.validate()?;
        let nodes: Vec<f64> = (0..=steps).map(|l| h.value(l as f64 / steps as f64)).collect();
        Ok(Self { dh: nodes.windows(2).map(|w| w[1] - w[0]).collect() })
    }

    pub fn steps(&self) -> usize {
        self.dh.len()
    }

    /// `G(j/N) = Σ_{l=0}^{N−j−1} B((N−j−l)/N) dh_l` for one bridge path.
    pub fn eval(&self, bridge: &[f64], j: usize) -> f64 {
        let n = self.steps();
        debug_assert_eq!(bridge.len(), n + 1);
        (0..n.saturating_sub(j)).map(|l| bridge[n - j - l] * self.dh[l]).sum()
    }

    /// `G` at every node `j = 0..N`.
    pub fn path(&self, bridge: &[f64]) -> Vec<f64> {
        let n = self.steps();
        let rev: Vec<f64> = bridge.iter().rev().copied().collect();
        let mut out = vec![0.0; n + 1];
        for (j, g) in out.iter_mut().enumerate().take(n) {
            *g = correlate(&rev[j..n], &self.dh[..n - j]);
        }
        out
    }
}

fn correlate(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, ra) = a.split_at(a.len() / 4 * 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `G_p` for every bridge, `P × (N+1)` row-major.
pub fn gp_paths(h: &WeightFn, bridges: &BridgePaths) -> Result<Vec<Vec<f64>>> {
    let kernel = GpKernel::new(h, bridges.steps())?;
    Ok(bridges.paths().collect::<Vec<_>>().par_iter().map(|b| kernel.path(b)).collect())
}

/// `Cov(G(s), G(t)) = ∫_{s∨t}^1 h(x−s) h(x−t) dx − ∫_s^1 h(x−s) dx ∫_t^1 h(x−t) dx`.
pub fn gp_cov(h: &WeightFn, s: f64, t: f64) -> Result<f64> {
    for v in [s, t] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Parameter(format!("gp_cov arguments must lie in [0, 1], got {v}")));
        }
    }
    let breaks: Vec<f64> = h.breaks().iter().flat_map(|b| [b + s, b + t]).collect();
    let joint = quad::trapezoid(|x| h.value(x - s) * h.value(x - t), s.max(t), 1.0, &breaks, COV_QUAD_POINTS);
    let ms = quad::trapezoid(|x| h.value(x - s), s, 1.0, &breaks, COV_QUAD_POINTS);
    let mt = quad::trapezoid(|x| h.value(x - t), t, 1.0, &breaks, COV_QUAD_POINTS);
    Ok(joint - ms * mt)
}

/// Simulated null law on the squared scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSamples {
    pub family: Family,
    pub draws: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub d: Option<usize>,
    pub h: Option<WeightFn>,
    pub steps: usize,
    pub seed: u64,
}

impl LimitSamples {
    /// Draws on the unsquared scale of the FF and WF statistics.
    pub fn sqrt_draws(&self) -> Vec<f64> {
        self.draws.iter().map(|v| v.sqrt()).collect()
    }
}

/// Component weights of the limit functional, cut after the last
/// non-negligible one.
pub fn component_weights(method: Method, eigenvalues: &[f64], d: Option<usize>) -> Result<Vec<f64>> {
    if eigenvalues.is_empty() {
        return Err(Error::Parameter("eigenvalue list is empty".into()));
    }
    if eigenvalues.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::Parameter("eigenvalues must be finite and nonnegative".into()));
    }
    if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Parameter("eigenvalues must be in descending order".into()));
    }
    let weights: Vec<f64> = match method {
        Method::Pc => {
            let d = d.ok_or_else(|| Error::Parameter("PC limit needs the number of components".into()))?;
            if d == 0 || d > eigenvalues.len() {
                return Err(Error::Parameter(format!(
                    "number of components must be in 1..={}, got {d}",
                    eigenvalues.len()
                )));
            }
            vec![1.0; d]
        }
        Method::Ff => eigenvalues.to_vec(),
        Method::Wf => {
            let l1 = eigenvalues[0];
            if !(l1 > 0.0) {
                return Err(Error::Degenerate("largest eigenvalue is 0; WF limit undefined".into()));
            }
            eigenvalues.iter().map(|l| l / (l + l1)).collect()
        }
    };
    let cut = NEGLIGIBLE_WEIGHT * weights[0];
    let keep = weights.iter().take_while(|w| **w > cut).count();
    Ok(weights[..keep].to_vec())
}

/// `sup_{1≤j<N} acc_j`.
fn interior_sup(acc: &[f64]) -> f64 {
    acc[1..acc.len() - 1].iter().copied().fold(0.0, f64::max)
}

fn draw(weights: &[f64], kernel: Option<&GpKernel>, steps: usize, seed: u64, r: usize) -> f64 {
    let mut rng = rng::stream(seed, r as u64);
    let mut bridge = vec![0.0; steps + 1];
    let mut acc = vec![0.0; steps + 1];
    for w in weights {
        fill_bridge(&mut rng, &mut bridge);
        match kernel {
            None => {
                for (a, v) in acc.iter_mut().zip(&bridge) {
                    *a += w * (v * v);
                }
            }
            Some(k) => {
                for (a, v) in acc.iter_mut().zip(k.path(&bridge)) {
                    *a += w * (v * v);
                }
            }
        }
    }
    interior_sup(&acc)
}

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(Error::Parameter("need at least one Monte Carlo replicate".into()));
    }
    Ok(())
}

/// Null law of the AMOC statistics: `sup Σ_{p≤d} B²_p` (PC),
/// `sup Σ λ_p B²_p` (FF) or `sup Σ λ_p/(λ_p+λ₁) B²_p` (WF).
pub fn limit_amoc(
    method: Method,
    eigenvalues: &[f64],
    d: Option<usize>,
    reps: usize,
    steps: usize,
    seed: u64,
) -> Result<LimitSamples> {
    check_steps(steps)?;
    check_reps(reps)?;
    let weights = component_weights(method, eigenvalues, d)?;
    let draws = (0..reps).into_par_iter().map(|r| draw(&weights, None, steps, seed, r)).collect();
    Ok(LimitSamples {
        family: Family::new(method, false),
        draws,
        eigenvalues: eigenvalues.to_vec(),
        d: (method == Method::Pc).then_some(d).flatten(),
        h: None,
        steps,
        seed,
    })
}

/// Null law of the gradual statistics, with `G_p` in place of `B_p`.
pub fn limit_gradual(
    method: Method,
    eigenvalues: &[f64],
    d: Option<usize>,
    h: &WeightFn,
    reps: usize,
    steps: usize,
    seed: u64,
) -> Result<LimitSamples> {
    check_reps(reps)?;
    let kernel = GpKernel::new(h, steps)?;
    let weights = component_weights(method, eigenvalues, d)?;
    let draws = (0..reps)
        .into_par_iter()
        .map(|r| draw(&weights, Some(&kernel), steps, seed, r))
        .collect();
    Ok(LimitSamples {
        family: Family::new(method, true),
        draws,
        eigenvalues: eigenvalues.to_vec(),
        d: (method == Method::Pc).then_some(d).flatten(),
        h: Some(h.clone()),
        steps,
        seed,
    })
}

/// Squared processes precomputed once and reused for many eigenvalue
/// vectors. Gives the same draws as [`limit_amoc`] / [`limit_gradual`] with
/// the same seed, as long as at most `components` weights are needed.
#[derive(Clone, Debug)]
pub struct LimitBank {
    h: Option<WeightFn>,
    components: usize,
    steps: usize,
    reps: usize,
    seed: u64,
    /// `[r][j][p]` for interior nodes `j = 1..N-1`.
    squares: Vec<f64>,
}

impl LimitBank {
    pub fn amoc(components: usize, steps: usize, reps: usize, seed: u64) -> Result<Self> {
        Self::build(None, components, steps, reps, seed)
    }

    pub fn gradual(h: &WeightFn, components: usize, steps: usize, reps: usize, seed: u64) -> Result<Self> {
        Self::build(Some(h.clone()), components, steps, reps, seed)
    }

    fn build(h: Option<WeightFn>, components: usize, steps: usize, reps: usize, seed: u64) -> Result<Self> {
        check_steps(steps)?;
        check_reps(reps)?;
        if components == 0 {
            return Err(Error::Parameter("bank needs at least one component".into()));
        }
        let kernel = h.as_ref().map(|h| GpKernel::new(h, steps)).transpose()?;
        let inner = steps - 1;
        let block = inner * components;
        let mut squares = vec![0.0; reps * block];
        squares.par_chunks_exact_mut(block).enumerate().for_each(|(r, out)| {
            let mut rng = rng::stream(seed, r as u64);
            let mut bridge = vec![0.0; steps + 1];
            for p in 0..components {
                fill_bridge(&mut rng, &mut bridge);
                let path = match &kernel {
                    None => bridge.clone(),
                    Some(k) => k.path(&bridge),
                };
                for j in 0..inner {
                    let v = path[j + 1];
                    out[j * components + p] = v * v;
                }
            }
        });
        Ok(Self { h, components, steps, reps, seed, squares })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn reps(&self) -> usize {
        self.reps
    }

    pub fn weight(&self) -> Option<&WeightFn> {
        self.h.as_ref()
    }

    pub fn draws(&self, method: Method, eigenvalues: &[f64], d: Option<usize>) -> Result<LimitSamples> {
        let weights = component_weights(method, eigenvalues, d)?;
        if weights.len() > self.components {
            return Err(Error::Parameter(format!(
                "limit needs {} components but the bank holds {}",
                weights.len(),
                self.components
            )));
        }
        let inner = self.steps - 1;
        let block = inner * self.components;
        let draws = self
            .squares
            .par_chunks_exact(block)
            .map(|sq| {
                let mut best: f64 = 0.0;
                for row in sq.chunks_exact(self.components) {
                    let mut s = 0.0;
                    for (w, v) in weights.iter().zip(row) {
                        s += w * v;
                    }
                    best = best.max(s);
                }
                best
            })
            .collect();
        Ok(LimitSamples {
            family: Family::new(method, self.h.is_some()),
            draws,
            eigenvalues: eigenvalues.to_vec(),
            d: (method == Method::Pc).then_some(d).flatten(),
            h: self.h.clone(),
            steps: self.steps,
            seed: self.seed,
        })
    }
}

/// Empirical `(1 − α)` quantile of the draws (type 7).
pub fn crit_value(samples: &LimitSamples, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if samples.draws.is_empty() {
        return Err(Error::Parameter("no limit draws".into()));
    }
    let mut x = samples.draws.clone();
    x.sort_by(f64::total_cmp);
    let pos = (x.len() - 1) as f64 * (1.0 - alpha);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(x.len() - 1);
    Ok(x[lo] + (pos - lo as f64) * (x[hi] - x[lo]))
}

/// `(1 + #{draws ≥ observed}) / (R + 1)`, with `observed` on the squared scale.
pub fn p_value(samples: &LimitSamples, observed: f64) -> f64 {
    let exceed = samples.draws.iter().filter(|d| **d >= observed).count();
    (1 + exceed) as f64 / (samples.draws.len() + 1) as f64
}
