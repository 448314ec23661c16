//! Statistics for gradual changes: the CUSUM indicator is replaced by a
//! weight `h((i − k)/n)`.
//!
//! `h` must vanish on `(−∞, 0]`. The step weight `1[x > 0]` is outside the
//! gradual theory (it is not Hölder continuous) but reproduces the AMOC
//! statistics exactly, which makes it a useful algebraic check.

use crate::amoc::{argmax, check_grid, check_pc_dimension, Method, TestReport};
use crate::dgp::ChangeFn;
use crate::error::{Error, Result};
use crate::fseries::{center, weighted_dot, Curve, FSeries};
use crate::quad;
use crate::spectral::{ridge_apply_slice, truncate, Spectrum, Truncation};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

const SIGNAL_QUAD_POINTS: usize = 2001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightFn {
    /// `h(x) = x_+^α`
    PowerPlus { alpha: f64 },
    /// `h(x) = 1[x > 0]`
    Step,
    /// Piecewise linear through `(0, 0)` and the given knots, constant after
    /// the last knot.
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
}

impl Default for WeightFn {
    fn default() -> Self {
        WeightFn::PowerPlus { alpha: 1.0 }
    }
}

impl WeightFn {
    pub fn power(alpha: f64) -> Result<Self> {
        let h = WeightFn::PowerPlus { alpha };
        h.validate()?;
        Ok(h)
    }

    pub fn tabulated(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let h = WeightFn::Tabulated { knots, values };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightFn::PowerPlus { alpha } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(Error::Parameter(format!("power weight needs alpha > 0, got {alpha}")));
                }
            }
            WeightFn::Step => {}
            WeightFn::Tabulated { knots, values } => {
                if knots.is_empty() || knots.len() != values.len() {
                    return Err(Error::Parameter(
                        "tabulated weight needs matching, non-empty knots and values".into(),
                    ));
                }
                if knots.iter().any(|k| !(*k > 0.0 && *k <= 1.0)) {
                    return Err(Error::Parameter("tabulated knots must lie in (0, 1]".into()));
                }
                if knots.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Parameter("tabulated knots must be increasing".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parameter("tabulated values must be finite".into()));
                }
                if values.iter().all(|v| *v == 0.0) {
                    return Err(Error::Parameter("weight function must not be constant".into()));
                }
            }
        }
        Ok(())
    }

    /// `h(x)` for any real `x`.
    pub fn value(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        match self {
            WeightFn::PowerPlus { alpha } => x.powf(*alpha),
            WeightFn::Step => 1.0,
            WeightFn::Tabulated { knots, values } => {
                let j = knots.partition_point(|k| *k < x);
                if j == knots.len() {
                    return values[j - 1];
                }
                let (x0, y0) = if j == 0 { (0.0, 0.0) } else { (knots[j - 1], values[j - 1]) };
                y0 + (values[j] - y0) * (x - x0) / (knots[j] - x0)
            }
        }
    }

    /// Points where `h` may jump or lose smoothness.
    pub fn breaks(&self) -> Vec<f64> {
        match self {
            WeightFn::PowerPlus { .. } | WeightFn::Step => vec![0.0],
            WeightFn::Tabulated { knots, .. } => std::iter::once(0.0).chain(knots.iter().copied()).collect(),
        }
    }

    /// Total variation on `[−1, 1]`.
    pub fn total_variation(&self) -> f64 {
        match self {
            WeightFn::PowerPlus { .. } | WeightFn::Step => 1.0,
            WeightFn::Tabulated { values, .. } => {
                values.iter().fold((0.0, 0.0), |(tv, prev), v| (tv + (v - prev).abs(), *v)).0
            }
        }
    }

    /// Hölder exponent and constant on `[0, 1]`, `None` if `h` jumps.
    pub fn holder(&self) -> Option<(f64, f64)> {
        match self {
            WeightFn::PowerPlus { alpha } if *alpha <= 1.0 => Some((*alpha, 1.0)),
            WeightFn::PowerPlus { alpha } => Some((1.0, *alpha)),
            WeightFn::Step => None,
            WeightFn::Tabulated { knots, values } => {
                let mut slope: f64 = 0.0;
                let (mut x0, mut y0) = (0.0, 0.0);
                for (k, v) in knots.iter().zip(values) {
                    slope = slope.max((v - y0).abs() / (k - x0));
                    (x0, y0) = (*k, *v);
                }
                Some((1.0, slope))
            }
        }
    }
}

impl fmt::Display for WeightFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightFn::PowerPlus { alpha } => write!(f, "power:{alpha}"),
            WeightFn::Step => f.write_str("step"),
            WeightFn::Tabulated { knots, .. } => write!(f, "tabulated({} knots)", knots.len()),
        }
    }
}

impl FromStr for WeightFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "step" {
            return Ok(WeightFn::Step);
        }
        if let Some(a) = s.strip_prefix("power:") {
            let alpha: f64 = a
                .parse()
                .map_err(|_| Error::Parameter(format!("invalid power exponent '{a}'")))?;
            return WeightFn::power(alpha);
        }
        Err(Error::Parameter(format!("unknown weight '{s}' (expected power:<alpha> or step)")))
    }
}

/// `h(x)` on the domain `[−1, 1]`.
pub fn weight_eval(h: &WeightFn, x: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Parameter(format!("weight functions are defined on [-1, 1], got {x}")));
    }
    Ok(h.value(x))
}

/// `h(l/n)` for `l = 1..n-1`.
fn lag_weights(h: &WeightFn, n: usize) -> Vec<f64> {
    (1..n).map(|l| h.value(l as f64 / n as f64)).collect()
}

/// Rows `k = 1..n-1` of `n^{-1/2} Σ_l h(l/n) Y_{k+l}` for centered rows `Y`
/// of width `width`, row-major.
fn weighted_sums(rows: &[f64], width: usize, n: usize, h: &WeightFn) -> Vec<f64> {
    let hw = lag_weights(h, n);
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = vec![0.0; (n - 1) * width];
    for k in 1..n {
        let acc = &mut out[(k - 1) * width..k * width];
        for l in 1..=n - k {
            let c = hw[l - 1];
            if c == 0.0 {
                continue;
            }
            let y = &rows[(k + l - 1) * width..(k + l) * width];
            for (a, v) in acc.iter_mut().zip(y) {
                *a += c * v;
            }
        }
        for a in acc.iter_mut() {
            *a *= scale;
        }
    }
    out
}

fn weighted_sums_of(xs: &FSeries, h: &WeightFn) -> Vec<f64> {
    let c = center(xs);
    weighted_sums(c.as_flat(), c.m(), c.n(), h)
}

/// Entry `k` (for `k = 1..n-1`) is `n^{-1/2} Σ_i h((i−k)/n)(X_i − X̄)`.
pub fn weighted_sum_process(xs: &FSeries, h: &WeightFn) -> Vec<Curve> {
    weighted_sums_of(xs, h)
        .chunks_exact(xs.m())
        .map(|c| Curve::from_vec_unchecked(c.to_vec()))
        .collect()
}

pub fn t_ff_grad(xs: &FSeries, h: &WeightFn) -> TestReport {
    let w = xs.grid().weights();
    let best = argmax(weighted_sums_of(xs, h).chunks_exact(xs.m()).map(|s| weighted_dot(w, s, s)));
    TestReport::new(Method::Ff, Some(h.clone()), best, xs.n())
}

pub fn t_wf_grad(xs: &FSeries, h: &WeightFn, lr: &Spectrum) -> Result<TestReport> {
    check_grid(xs, lr)?;
    let w = xs.grid().weights();
    let mut values = Vec::with_capacity(xs.n() - 1);
    for s in weighted_sums_of(xs, h).chunks_exact(xs.m()) {
        let t = ridge_apply_slice(lr, s)?;
        values.push(weighted_dot(w, &t, &t));
    }
    Ok(TestReport::new(Method::Wf, Some(h.clone()), argmax(values), xs.n()))
}

/// Squared statistic `max_k Σ_{p≤d} λ̂_p^{-1} (n^{-1/2} Σ_i h((i−k)/n)(η̂_{ip} − η̄_p))²`.
pub fn t_pc_grad(xs: &FSeries, h: &WeightFn, lr: &Spectrum, d: usize) -> Result<TestReport> {
    check_grid(xs, lr)?;
    let warnings = check_pc_dimension(lr, d)?;
    let lead = truncate(lr, Truncation::Count(d))?;
    let inv: Vec<f64> = lead.eigenvalues().iter().map(|l| 1.0 / l).collect();
    let c = center(xs);
    let scores: Vec<f64> = c.rows().flat_map(|row| lead.scores(row)).collect();
    let sums = weighted_sums(&scores, d, c.n(), h);
    let best = argmax(sums.chunks_exact(d).map(|s| s.iter().zip(&inv).map(|(v, c)| c * v * v).sum()));
    let mut report = TestReport::new(Method::Pc, Some(h.clone()), best, xs.n());
    report.d_used = Some(d);
    report.warnings = warnings;
    Ok(report)
}

fn signal_value(g: &impl Fn(f64) -> f64, g_breaks: &[f64], g_int: f64, h: &WeightFn, t: f64) -> f64 {
    let mut breaks: Vec<f64> = h.breaks().iter().map(|b| b + t).collect();
    breaks.extend_from_slice(g_breaks);
    let cross = quad::trapezoid(|x| h.value(x - t) * g(x), 0.0, 1.0, &breaks, SIGNAL_QUAD_POINTS);
    let h_int = quad::trapezoid(|x| h.value(x - t), 0.0, 1.0, &breaks, SIGNAL_QUAD_POINTS);
    (cross - g_int * h_int).abs()
}

fn signal_sup(g: impl Fn(f64) -> f64, g_breaks: &[f64], h: &WeightFn, tgrid: usize) -> f64 {
    let g_int = quad::trapezoid(&g, 0.0, 1.0, g_breaks, SIGNAL_QUAD_POINTS);
    (0..tgrid)
        .map(|j| signal_value(&g, g_breaks, g_int, h, j as f64 / (tgrid - 1) as f64))
        .fold(0.0, f64::max)
}

/// `|∫₀¹ h(x−t) g(x) dx − ∫₀¹ g ∫₀¹ h(x−t) dx|` at a single `t`.
pub fn signal_functional(g: &ChangeFn, h: &WeightFn, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Parameter(format!("t must lie in [0, 1], got {t}")));
    }
    let breaks = g.breaks();
    Ok(signal_value(&|x| g.value(x), &breaks, g.integral(), h, t))
}

/// `sup_t |∫₀¹ h(x−t) g(x) dx − ∫₀¹ g ∫₀¹ h(x−t) dx|` over `tgrid` equispaced
/// values of `t` in `[0, 1]`.
pub fn detectability_signal(g: &ChangeFn, h: &WeightFn, tgrid: usize) -> Result<f64> {
    if tgrid < 2 {
        return Err(Error::Parameter(format!("t-grid needs at least 2 points, got {tgrid}")));
    }
    g.validate()?;
    h.validate()?;
    Ok(signal_sup(|x| g.value(x), &g.breaks(), h, tgrid))
}
