//! Synthetic functional time series: Karhunen–Loève noise, FAR(1) noise and
//! the catalogue of mean-change shapes.

use crate::error::{Error, Result};
use crate::fseries::{Curve, FSeries, Grid};
use crate::gradual::WeightFn;
use crate::quad;
use crate::rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

/// Burn-in length discarded from the FAR(1) recursion.
pub const FAR_BURN_IN: usize = 200;
/// Quadrature nodes used for integrals of change functions.
const CHANGE_QUAD_POINTS: usize = 4001;

/// Eigenvalue decay of the noise covariance in the Fourier basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EigenDecay {
    /// `λ_p = p^{-κ}`
    Polynomial { kappa: f64 },
    /// `λ_p = ρ^p`
    Exponential { rho: f64 },
}

impl EigenDecay {
    pub fn eigenvalues(&self, terms: usize) -> Vec<f64> {
        (1..=terms)
            .map(|p| match *self {
                EigenDecay::Polynomial { kappa } => (p as f64).powf(-kappa),
                EigenDecay::Exponential { rho } => rho.powi(p as i32),
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        match *self {
            EigenDecay::Polynomial { kappa } if !(kappa > 1.0 && kappa.is_finite()) => Err(
                Error::Parameter(format!("polynomial decay needs kappa > 1, got {kappa}")),
            ),
            EigenDecay::Exponential { rho } if !(rho > 0.0 && rho < 1.0) => Err(Error::Parameter(
                format!("exponential decay needs 0 < rho < 1, got {rho}"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// Independent curves `Σ_p √λ_p ξ_p e_p` with standard normal scores.
    IidKl,
    /// `ε_i = ψ ε_{i-1} + e_i` with i.i.d. Karhunen–Loève innovations.
    Far1 { psi: f64 },
}

/// Noise process specification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub decay: EigenDecay,
    pub num_terms: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::IidKl,
            decay: EigenDecay::Polynomial { kappa: 2.0 },
            num_terms: 21,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_terms == 0 {
            return Err(Error::Parameter("noise needs at least one basis term".into()));
        }
        self.decay.validate()?;
        if let NoiseKind::Far1 { psi } = self.kind {
            if !(0.0..1.0).contains(&psi) {
                return Err(Error::Parameter(format!("FAR(1) coefficient must be in [0, 1), got {psi}")));
            }
        }
        Ok(())
    }

    /// Innovation eigenvalues `λ_p`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.decay.eigenvalues(self.num_terms)
    }

    /// Eigenvalues of the long-run covariance operator in the Fourier basis:
    /// `λ_p / (1 - ψ)²` for FAR(1), `λ_p` otherwise.
    pub fn long_run_eigenvalues(&self) -> Vec<f64> {
        let factor = match self.kind {
            NoiseKind::IidKl => 1.0,
            NoiseKind::Far1 { psi } => 1.0 / ((1.0 - psi) * (1.0 - psi)),
        };
        self.eigenvalues().into_iter().map(|l| l * factor).collect()
    }
}

/// `{1, √2 cos(2πt), √2 sin(2πt), √2 cos(4πt), …}` truncated to `count` curves.
pub fn fourier_basis(grid: &Grid, count: usize) -> Result<Vec<Curve>> {
    if count == 0 {
        return Err(Error::Parameter("basis size must be at least 1".into()));
    }
    (0..count)
        .map(|p| {
            let freq = p.div_ceil(2) as f64;
            Curve::from_fn(grid, |t| match p {
                0 => 1.0,
                _ if p % 2 == 1 => SQRT_2 * (2.0 * PI * freq * t).cos(),
                _ => SQRT_2 * (2.0 * PI * freq * t).sin(),
            })
        })
        .collect()
}

fn fill_scores(rng: &mut impl rand::Rng, sd: &[f64], out: &mut [f64]) {
    for (o, s) in out.iter_mut().zip(sd) {
        let z: f64 = StandardNormal.sample(rng);
        *o = s * z;
    }
}

/// Draws `n` noise curves on `grid`, deterministic in `seed`.
///
/// The `n` innovations come from one random stream and the FAR(1) burn-in
/// from another, so `ψ = 0` reproduces the i.i.d. output exactly.
pub fn gen_noise(spec: &NoiseSpec, n: usize, grid: &Grid, seed: u64) -> Result<FSeries> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 curves, got {n}")));
    }
    let terms = spec.num_terms;
    let sd: Vec<f64> = spec.eigenvalues().iter().map(|l| l.sqrt()).collect();
    let basis = fourier_basis(grid, terms)?;
    let psi = match spec.kind {
        NoiseKind::IidKl => 0.0,
        NoiseKind::Far1 { psi } => psi,
    };

    let mut state = vec![0.0; terms];
    let mut innov = vec![0.0; terms];
    if matches!(spec.kind, NoiseKind::Far1 { .. }) {
        let mut burn = rng::stream(seed, 1);
        for _ in 0..FAR_BURN_IN {
            fill_scores(&mut burn, &sd, &mut innov);
            for (s, e) in state.iter_mut().zip(&innov) {
                *s = psi * *s + e;
            }
        }
    }

    let m = grid.len();
    let mut main = rng::stream(seed, 0);
    let mut data = vec![0.0; n * m];
    for row in data.chunks_exact_mut(m) {
        fill_scores(&mut main, &sd, &mut innov);
        for (s, e) in state.iter_mut().zip(&innov) {
            *s = psi * *s + e;
        }
        for (score, e) in state.iter().zip(&basis) {
            for (v, b) in row.iter_mut().zip(e.values()) {
                *v += score * b;
            }
        }
    }
    FSeries::from_flat(grid.clone(), n, data)
}

/// Shape `g` of the time-varying mean `μ + Δ g(i/n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChangeFn {
    /// `1[x > θ]`
    Amoc { theta: f64 },
    /// `1[θ₁ < x ≤ θ₂]`
    Epidemic { theta1: f64, theta2: f64 },
    /// `Σ_j a_j 1[θ_j < x ≤ θ_{j+1}]` with the last boundary at 1.
    Multiple { weights: Vec<f64>, thetas: Vec<f64> },
    /// `h(x - θ)`
    DelayedGradual { theta: f64, h: WeightFn },
    /// Constant, linear ramp from θ₁ to θ₂, constant.
    Clc { theta1: f64, theta2: f64 },
}

fn in_open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl ChangeFn {
    pub fn validate(&self) -> Result<()> {
        match self {
            ChangeFn::Amoc { theta } => in_open_unit("theta", *theta),
            ChangeFn::Epidemic { theta1, theta2 } | ChangeFn::Clc { theta1, theta2 } => {
                in_open_unit("theta1", *theta1)?;
                in_open_unit("theta2", *theta2)?;
                if theta1 >= theta2 {
                    return Err(Error::Parameter("theta1 must be smaller than theta2".into()));
                }
                Ok(())
            }
            ChangeFn::Multiple { weights, thetas } => {
                if weights.is_empty() || weights.len() != thetas.len() {
                    return Err(Error::Parameter(
                        "multiple changes need one weight per change point".into(),
                    ));
                }
                for t in thetas {
                    in_open_unit("change point", *t)?;
                }
                if thetas.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Parameter("change points must be increasing".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Parameter(format!("change weights must sum to 1, got {total}")));
                }
                Ok(())
            }
            ChangeFn::DelayedGradual { theta, h } => {
                in_open_unit("theta", *theta)?;
                h.validate()
            }
        }
    }

    /// Value at `x`, extended to any real `x`.
    pub(crate) fn value(&self, x: f64) -> f64 {
        match self {
            ChangeFn::Amoc { theta } => f64::from(x > *theta),
            ChangeFn::Epidemic { theta1, theta2 } => f64::from(x > *theta1 && x <= *theta2),
            ChangeFn::Multiple { weights, thetas } => {
                let mut v = 0.0;
                for (j, a) in weights.iter().enumerate() {
                    let upper = thetas.get(j + 1).copied().unwrap_or(1.0);
                    if x > thetas[j] && x <= upper {
                        v += a;
                    }
                }
                v
            }
            ChangeFn::DelayedGradual { theta, h } => h.value(x - theta),
            ChangeFn::Clc { theta1, theta2 } => ((x - theta1) / (theta2 - theta1)).clamp(0.0, 1.0),
        }
    }

    /// Points in `[0, 1]` where `g` may jump or lose smoothness.
    pub fn breaks(&self) -> Vec<f64> {
        match self {
            ChangeFn::Amoc { theta } => vec![*theta],
            ChangeFn::Epidemic { theta1, theta2 } | ChangeFn::Clc { theta1, theta2 } => {
                vec![*theta1, *theta2]
            }
            ChangeFn::Multiple { thetas, .. } => thetas.clone(),
            ChangeFn::DelayedGradual { theta, h } => h.breaks().iter().map(|b| b + theta).collect(),
        }
    }

    /// Location used when scoring a change point estimate: the (first) change point.
    pub fn reference_point(&self) -> f64 {
        match self {
            ChangeFn::Amoc { theta } | ChangeFn::DelayedGradual { theta, .. } => *theta,
            ChangeFn::Epidemic { theta1, .. } | ChangeFn::Clc { theta1, .. } => *theta1,
            ChangeFn::Multiple { thetas, .. } => thetas[0],
        }
    }

    /// `∫₀¹ g(x) dx` by quadrature.
    pub fn integral(&self) -> f64 {
        quad::trapezoid(|x| self.value(x), 0.0, 1.0, &self.breaks(), CHANGE_QUAD_POINTS)
    }
}

pub fn change_eval(g: &ChangeFn, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Parameter(format!("change functions are defined on [0, 1], got {x}")));
    }
    Ok(g.value(x))
}

/// Adds `scale · g(i/n) · Δ` to row `i` (1-based) of the noise.
pub fn inject(noise: &FSeries, delta: &Curve, g: &ChangeFn, scale: f64) -> Result<FSeries> {
    noise.grid().check_len(delta.len(), "change direction")?;
    let n = noise.n();
    let m = noise.m();
    let mut data = noise.as_flat().to_vec();
    for (i, row) in data.chunks_exact_mut(m).enumerate() {
        let shift = scale * g.value((i + 1) as f64 / n as f64);
        if shift != 0.0 {
            for (v, d) in row.iter_mut().zip(delta.values()) {
                *v += shift * d;
            }
        }
    }
    FSeries::from_flat(noise.grid().clone(), n, data)
}

/// `G₀(θ) = ∫₀^θ g(x) dx − θ ∫₀¹ g(x) dx`.
pub fn g0_functional(g: &ChangeFn, theta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Parameter(format!("theta must lie in [0, 1], got {theta}")));
    }
    let breaks = g.breaks();
    let head = quad::trapezoid(|x| g.value(x), 0.0, theta, &breaks, CHANGE_QUAD_POINTS);
    Ok(head - theta * g.integral())
}
