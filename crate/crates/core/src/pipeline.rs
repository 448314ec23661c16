//! End-to-end runs: a single calibrated test on one dataset, and Monte Carlo
//! size and power studies over a grid of settings.

use crate::amoc::{t_ff, t_pc, t_wf, Method, TestReport};
use crate::covariance::{default_bandwidth, lrcov, Bandwidth, KernelFn};
use crate::dgp::{fourier_basis, gen_noise, inject, ChangeFn, NoiseSpec};
use crate::error::{Error, Result};
use crate::fseries::{FSeries, Grid};
use crate::gradual::{t_ff_grad, t_pc_grad, t_wf_grad, WeightFn};
use crate::io;
use crate::json::SCHEMA_VERSION;
use crate::limits::{
    component_weights, crit_value, limit_amoc, limit_gradual, p_value, Family, LimitBank, LimitSamples,
    DEFAULT_GRID_STEPS, DEFAULT_MC_REPS,
};
use crate::rng;
use crate::spectral::{eig, Spectrum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Fraction of the long-run trace kept by PC when no dimension is given.
pub const DEFAULT_ENERGY: f64 = 0.9;
const MIN_MC_REPS: usize = 100;
/// Banks larger than this are replaced by per-dataset simulation.
const MAX_BANK_BYTES: usize = 1 << 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    /// Weight of the gradual statistic; `None` runs the AMOC version.
    pub h: Option<WeightFn>,
    pub kernel: KernelFn,
    /// Kernel bandwidth; `None` uses the rate-based default.
    pub bandwidth: Option<f64>,
    /// PC dimension; takes precedence over `energy`.
    pub num_components: Option<usize>,
    pub energy: Option<f64>,
    pub alpha: f64,
    pub mc_reps: usize,
    pub grid_steps: usize,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub grid_header: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Wf,
            h: None,
            kernel: KernelFn::Bartlett,
            bandwidth: None,
            num_components: None,
            energy: None,
            alpha: 0.05,
            mc_reps: DEFAULT_MC_REPS,
            grid_steps: DEFAULT_GRID_STEPS,
            seed: 0,
            input: None,
            grid_header: false,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.mc_reps < MIN_MC_REPS {
            return Err(Error::Parameter(format!(
                "at least {MIN_MC_REPS} Monte Carlo replicates are needed for p-values, got {}",
                self.mc_reps
            )));
        }
        if self.grid_steps < 2 {
            return Err(Error::Parameter(format!("grid steps must be at least 2, got {}", self.grid_steps)));
        }
        if let Some(b) = self.bandwidth {
            Bandwidth::new(b)?;
        }
        if let Some(e) = self.energy {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Parameter(format!("energy must lie in (0, 1], got {e}")));
            }
        }
        if self.num_components == Some(0) {
            return Err(Error::Parameter("number of components must be positive".into()));
        }
        if let Some(h) = &self.h {
            h.validate()?;
        }
        Ok(())
    }

    fn bandwidth_for(&self, n: usize) -> Result<Bandwidth> {
        match self.bandwidth {
            Some(b) => Bandwidth::new(b),
            None => Ok(default_bandwidth(n, self.kernel)),
        }
    }
}

/// Smallest number of leading eigenvalues whose sum reaches the given
/// fraction of the total (default [`DEFAULT_ENERGY`]).
pub fn energy_dimension(eigenvalues: &[f64], energy: Option<f64>) -> Result<usize> {
    let tau = energy.unwrap_or(DEFAULT_ENERGY);
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Parameter(format!("energy must lie in (0, 1], got {tau}")));
    }
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Rank("eigenvalues are all zero; no principal components".into()));
    }
    let mut acc = 0.0;
    for (p, l) in eigenvalues.iter().enumerate() {
        acc += l;
        if acc >= tau * total {
            return Ok(p + 1);
        }
    }
    Ok(eigenvalues.len())
}

/// PC dimension from an explicit count or an energy fraction.
pub fn pc_dimension(spec: &Spectrum, num_components: Option<usize>, energy: Option<f64>) -> Result<usize> {
    match num_components {
        Some(d) => Ok(d),
        None => energy_dimension(spec.eigenvalues(), energy),
    }
}

/// Evaluates one of the six statistics.
pub fn statistic(xs: &FSeries, lr: &Spectrum, method: Method, h: Option<&WeightFn>, d: usize) -> Result<TestReport> {
    match (method, h) {
        (Method::Ff, None) => Ok(t_ff(xs)),
        (Method::Wf, None) => t_wf(xs, lr),
        (Method::Pc, None) => t_pc(xs, lr, d),
        (Method::Ff, Some(h)) => Ok(t_ff_grad(xs, h)),
        (Method::Wf, Some(h)) => t_wf_grad(xs, h, lr),
        (Method::Pc, Some(h)) => t_pc_grad(xs, h, lr, d),
    }
}

fn finish(report: &mut TestReport, samples: &LimitSamples, alpha: f64) -> Result<()> {
    let crit = crit_value(samples, alpha)?;
    let observed = report.limit_scale();
    report.critical_value = Some(if report.squared { crit } else { crit.sqrt() });
    report.pvalue = Some(p_value(samples, observed));
    report.alpha = Some(alpha);
    report.reject = Some(observed > crit);
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub eigenvalues: Vec<f64>,
    pub trace: f64,
    /// Components with non-negligible weight in the limit simulation.
    pub components_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectReport {
    pub schema_version: u32,
    pub version: String,
    pub config: RunConfig,
    pub n: usize,
    pub m: usize,
    pub bandwidth: f64,
    pub family: Family,
    pub spectrum: SpectrumSummary,
    pub test: TestReport,
}

/// Runs the configured test on an in-memory series.
pub fn detect(xs: &FSeries, cfg: &RunConfig) -> Result<DetectReport> {
    cfg.validate()?;
    let bandwidth = cfg.bandwidth_for(xs.n())?;
    let lr = eig(&lrcov(xs, cfg.kernel, bandwidth)?)?;
    let d = match cfg.method {
        Method::Pc => pc_dimension(&lr, cfg.num_components, cfg.energy)?,
        _ => 0,
    };
    let mut report = statistic(xs, &lr, cfg.method, cfg.h.as_ref(), d)?;
    let dopt = (cfg.method == Method::Pc).then_some(d);
    let ev = lr.eigenvalues();
    let samples = match &cfg.h {
        None => limit_amoc(cfg.method, ev, dopt, cfg.mc_reps, cfg.grid_steps, cfg.seed)?,
        Some(h) => limit_gradual(cfg.method, ev, dopt, h, cfg.mc_reps, cfg.grid_steps, cfg.seed)?,
    };
    finish(&mut report, &samples, cfg.alpha)?;
    Ok(DetectReport {
        schema_version: SCHEMA_VERSION,
        version: crate::VERSION.to_string(),
        config: cfg.clone(),
        n: xs.n(),
        m: xs.m(),
        bandwidth: bandwidth.value(),
        family: samples.family,
        spectrum: SpectrumSummary {
            eigenvalues: ev.to_vec(),
            trace: ev.iter().sum(),
            components_used: component_weights(cfg.method, ev, dopt)?.len(),
        },
        test: report,
    })
}

/// Loads `cfg.input` and runs [`detect`].
pub fn detect_pipeline(cfg: &RunConfig) -> Result<DetectReport> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Input("no input file given".into()))?;
    let xs = io::read_csv(path, cfg.grid_header)?;
    detect(&xs, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyTest {
    pub method: Method,
    #[serde(default)]
    pub h: Option<WeightFn>,
}

/// Grid of settings for a size and power study. Every dataset is
/// `scale · g(i/n) · e_k + noise` with `e_k` the `delta_component`-th
/// Fourier basis function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub tests: Vec<StudyTest>,
    pub alternatives: Vec<ChangeFn>,
    pub scales: Vec<f64>,
    pub ns: Vec<usize>,
    pub m: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "one")]
    pub delta_component: usize,
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_mc_reps")]
    pub mc_reps: usize,
    /// Time steps of the limit simulation; `None` uses `n`.
    #[serde(default)]
    pub grid_steps: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kernel: KernelFn,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    /// PC dimension.
    #[serde(default = "default_d")]
    pub d: usize,
}

fn one() -> usize {
    1
}

fn default_alpha() -> f64 {
    0.05
}

fn default_mc_reps() -> usize {
    DEFAULT_MC_REPS
}

fn default_d() -> usize {
    3
}

impl StudySpec {
    pub fn validate(&self) -> Result<()> {
        let nonempty = [
            ("tests", self.tests.is_empty()),
            ("alternatives", self.alternatives.is_empty()),
            ("scales", self.scales.is_empty()),
            ("ns", self.ns.is_empty()),
        ];
        for (name, empty) in nonempty {
            if empty {
                return Err(Error::Parameter(format!("study needs at least one entry in '{name}'")));
            }
        }
        check_alpha(self.alpha)?;
        if self.reps == 0 || self.mc_reps < MIN_MC_REPS {
            return Err(Error::Parameter(format!(
                "study needs reps >= 1 and mc_reps >= {MIN_MC_REPS}"
            )));
        }
        if self.ns.iter().any(|n| *n < 4) {
            return Err(Error::Parameter("sample sizes must be at least 4".into()));
        }
        if self.m < 2 {
            return Err(Error::Parameter("grid needs at least 2 points".into()));
        }
        if self.delta_component == 0 {
            return Err(Error::Parameter("delta_component is 1-based".into()));
        }
        if self.scales.iter().any(|s| !s.is_finite()) {
            return Err(Error::Parameter("scales must be finite".into()));
        }
        if self.grid_steps.is_some_and(|s| s < 2) {
            return Err(Error::Parameter("grid steps must be at least 2".into()));
        }
        if let Some(b) = self.bandwidth {
            Bandwidth::new(b)?;
        }
        self.noise.validate()?;
        for g in &self.alternatives {
            g.validate()?;
        }
        for t in &self.tests {
            if let Some(h) = &t.h {
                h.validate()?;
            }
            if t.method == Method::Pc && self.d == 0 {
                return Err(Error::Parameter("PC dimension must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub alternative: ChangeFn,
    pub scale: f64,
    pub method: Method,
    pub h: Option<WeightFn>,
    pub reps: usize,
    pub rejection_rate: f64,
    /// Monte Carlo standard error `√(p(1−p)/reps)` of the rate.
    pub mc_se: f64,
    /// Mean `|θ̂ − θ*|` with `θ*` the alternative's first change point.
    pub mean_theta_error: f64,
    /// Replicates where the statistic could not be computed (counted as non-rejections).
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub schema_version: u32,
    pub version: String,
    pub spec: StudySpec,
    pub rows: Vec<StudyRow>,
}

/// Null laws shared by all replicates of one sample size.
struct Calibration {
    amoc: Option<LimitBank>,
    gradual: Vec<(WeightFn, LimitBank)>,
    steps: usize,
    seed: u64,
}

impl Calibration {
    fn new(spec: &StudySpec, n: usize) -> Result<Self> {
        let steps = spec.grid_steps.unwrap_or(n);
        let seed = rng::derive(spec.seed, &[n as u64, 0x11_1175]);
        let components = spec.m.min(spec.noise.num_terms);
        let fits = (steps - 1) * components * spec.mc_reps * 8 <= MAX_BANK_BYTES;
        let mut cal = Self { amoc: None, gradual: Vec::new(), steps, seed };
        if !fits {
            return Ok(cal);
        }
        if spec.tests.iter().any(|t| t.h.is_none()) {
            cal.amoc = Some(LimitBank::amoc(components, steps, spec.mc_reps, seed)?);
        }
        for t in &spec.tests {
            if let Some(h) = &t.h {
                if !cal.gradual.iter().any(|(g, _)| g == h) {
                    cal.gradual.push((h.clone(), LimitBank::gradual(h, components, steps, spec.mc_reps, seed)?));
                }
            }
        }
        Ok(cal)
    }

    fn samples(&self, test: &StudyTest, ev: &[f64], d: Option<usize>, reps: usize) -> Result<LimitSamples> {
        let bank = match &test.h {
            None => self.amoc.as_ref(),
            Some(h) => self.gradual.iter().find(|(g, _)| g == h).map(|(_, b)| b),
        };
        if let Some(bank) = bank {
            if component_weights(test.method, ev, d)?.len() <= bank.components() {
                return bank.draws(test.method, ev, d);
            }
        }
        match &test.h {
            None => limit_amoc(test.method, ev, d, reps, self.steps, self.seed),
            Some(h) => limit_gradual(test.method, ev, d, h, reps, self.steps, self.seed),
        }
    }
}

/// Outcome of every test on one dataset: `(rejected, |θ̂ − θ*|)`, or `None`
/// if the statistic failed.
type Outcomes = Vec<Option<(bool, f64)>>;

fn run_dataset(xs: &FSeries, spec: &StudySpec, cal: &Calibration, reference: f64) -> Result<Outcomes> {
    let bandwidth = match spec.bandwidth {
        Some(b) => Bandwidth::new(b)?,
        None => default_bandwidth(xs.n(), spec.kernel),
    };
    let lr = eig(&lrcov(xs, spec.kernel, bandwidth)?)?;
    let ev = lr.eigenvalues();
    let mut out = Vec::with_capacity(spec.tests.len());
    for test in &spec.tests {
        let d = (test.method == Method::Pc).then_some(spec.d);
        let outcome = statistic(xs, &lr, test.method, test.h.as_ref(), spec.d).and_then(|mut report| {
            let samples = cal.samples(test, ev, d, spec.mc_reps)?;
            finish(&mut report, &samples, spec.alpha)?;
            Ok((report.reject == Some(true), (report.theta_hat - reference).abs()))
        });
        out.push(outcome.ok());
    }
    Ok(out)
}

/// Rejection rates for every combination of sample size, alternative, scale
/// and test. Replicate `r` at sample size `n` uses the same noise for every
/// alternative and scale, so rates are directly comparable across cells.
pub fn power_study(spec: &StudySpec) -> Result<StudyResult> {
    spec.validate()?;
    let grid = Grid::uniform(spec.m)?;
    let basis = fourier_basis(&grid, spec.delta_component)?;
    let delta = &basis[spec.delta_component - 1];
    let mut rows = Vec::new();
    for &n in &spec.ns {
        let cal = Calibration::new(spec, n)?;
        let per_rep: Vec<Vec<Vec<Outcomes>>> = (0..spec.reps)
            .into_par_iter()
            .map(|r| {
                let noise = gen_noise(&spec.noise, n, &grid, rng::derive(spec.seed, &[n as u64, r as u64]))?;
                spec.alternatives
                    .iter()
                    .map(|g| {
                        spec.scales
                            .iter()
                            .map(|&s| run_dataset(&inject(&noise, delta, g, s)?, spec, &cal, g.reference_point()))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (a, g) in spec.alternatives.iter().enumerate() {
            for (s, &scale) in spec.scales.iter().enumerate() {
                for (t, test) in spec.tests.iter().enumerate() {
                    let outcomes: Vec<Option<(bool, f64)>> = per_rep.iter().map(|rep| rep[a][s][t]).collect();
                    let ok: Vec<(bool, f64)> = outcomes.iter().flatten().copied().collect();
                    let rejected = ok.iter().filter(|o| o.0).count();
                    let rate = rejected as f64 / spec.reps as f64;
                    let err = if ok.is_empty() {
                        f64::NAN
                    } else {
                        ok.iter().map(|o| o.1).sum::<f64>() / ok.len() as f64
                    };
                    rows.push(StudyRow {
                        n,
                        alternative: g.clone(),
                        scale,
                        method: test.method,
                        h: test.h.clone(),
                        reps: spec.reps,
                        rejection_rate: rate,
                        mc_se: (rate * (1.0 - rate) / spec.reps as f64).sqrt(),
                        mean_theta_error: err,
                        failures: spec.reps - ok.len(),
                    });
                }
            }
        }
    }
    Ok(StudyResult {
        schema_version: SCHEMA_VERSION,
        version: crate::VERSION.to_string(),
        spec: spec.clone(),
        rows,
    })
}

fn alternative_label(g: &ChangeFn) -> String {
    serde_json::to_string(g).unwrap_or_default()
}

/// Writes the study table as CSV.
pub fn write_study_csv<W: std::io::Write>(writer: W, result: &StudyResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| Error::Io(e.into());
    w.write_record([
        "n",
        "alternative",
        "scale",
        "method",
        "h",
        "reps",
        "rejection_rate",
        "mc_se",
        "mean_theta_error",
        "failures",
    ])
    .map_err(to_io)?;
    for row in &result.rows {
        w.write_record([
            row.n.to_string(),
            alternative_label(&row.alternative),
            format!("{:?}", row.scale),
            row.method.to_string(),
            row.h.as_ref().map(|h| h.to_string()).unwrap_or_else(|| "none".into()),
            row.reps.to_string(),
            format!("{:?}", row.rejection_rate),
            format!("{:?}", row.mc_se),
            format!("{:?}", row.mean_theta_error),
            row.failures.to_string(),
        ])
        .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Noise plus a scaled change, as produced by the `simulate` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub change: Option<ChangeFn>,
    #[serde(default)]
    pub scale: f64,
    #[serde(default = "one")]
    pub delta_component: usize,
    /// Constant mean added to every curve.
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub seed: u64,
}

pub fn simulate(spec: &SimulationSpec) -> Result<FSeries> {
    if spec.delta_component == 0 {
        return Err(Error::Parameter("delta_component is 1-based".into()));
    }
    let grid = Grid::uniform(spec.m)?;
    let noise = gen_noise(&spec.noise, spec.n, &grid, spec.seed)?;
    let xs = match &spec.change {
        Some(g) => {
            g.validate()?;
            let basis = fourier_basis(&grid, spec.delta_component)?;
            inject(&noise, &basis[spec.delta_component - 1], g, spec.scale)?
        }
        None => noise,
    };
    if spec.mu != 0.0 {
        xs.shifted(&crate::fseries::Curve::constant(spec.m, spec.mu))
    } else {
        Ok(xs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(scale: f64, seed: u64) -> FSeries {
        simulate(&SimulationSpec {
            n: 100,
            m: 21,
            noise: NoiseSpec::default(),
            change: Some(ChangeFn::Amoc { theta: 0.5 }),
            scale,
            delta_component: 1,
            mu: 0.0,
            seed,
        })
        .unwrap()
    }

    fn cfg(method: Method) -> RunConfig {
        RunConfig { method, mc_reps: 200, grid_steps: 100, seed: 4, ..RunConfig::default() }
    }

    #[test]
    fn constant_data() {
        let xs = FSeries::from_rows(Grid::uniform(5).unwrap(), &vec![vec![1.5; 5]; 20]).unwrap();
        let r = detect(&xs, &cfg(Method::Ff)).unwrap();
        assert_eq!(r.test.statistic, 0.0);
        assert_eq!(r.test.pvalue, Some(1.0));
        assert_eq!(r.test.reject, Some(false));
        let err = detect(&xs, &cfg(Method::Wf)).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert_eq!(detect(&xs, &cfg(Method::Pc)).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn strong_change_is_detected() {
        let xs = sim(3.0, 1);
        for method in [Method::Ff, Method::Wf, Method::Pc] {
            for h in [None, Some(WeightFn::default())] {
                let r = detect(&xs, &RunConfig { h: h.clone(), ..cfg(method) }).unwrap();
                assert_eq!(r.test.reject, Some(true), "{method} {h:?}");
                assert!(r.test.pvalue.unwrap() < 0.05);
            }
        }
    }

    #[test]
    fn report_is_reproducible() {
        let xs = sim(0.5, 2);
        let c = RunConfig { h: Some(WeightFn::power(2.0).unwrap()), ..cfg(Method::Pc) };
        let a = crate::json::to_string(&detect(&xs, &c).unwrap()).unwrap();
        let b = crate::json::to_string(&detect(&xs, &c).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"schema_version\""));
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig { alpha: 1.0, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig { mc_reps: 50, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig { energy: Some(0.0), ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    fn small_study(reps: usize) -> StudySpec {
        StudySpec {
            tests: vec![
                StudyTest { method: Method::Wf, h: None },
                StudyTest { method: Method::Ff, h: Some(WeightFn::default()) },
            ],
            alternatives: vec![ChangeFn::Amoc { theta: 0.5 }],
            scales: vec![0.0, 2.0],
            ns: vec![40],
            m: 11,
            noise: NoiseSpec { num_terms: 5, ..NoiseSpec::default() },
            delta_component: 1,
            reps,
            alpha: 0.05,
            mc_reps: 200,
            grid_steps: None,
            seed: 3,
            kernel: KernelFn::Bartlett,
            bandwidth: None,
            d: 2,
        }
    }

    #[test]
    fn study_is_deterministic() {
        let a = power_study(&small_study(20)).unwrap();
        let b = power_study(&small_study(20)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 4);
        for row in &a.rows {
            assert!((0.0..=1.0).contains(&row.rejection_rate));
            assert_eq!(row.failures, 0);
        }
        let mut buf = Vec::new();
        write_study_csv(&mut buf, &a).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }

    #[test]
    fn study_rejects_bad_spec() {
        let mut s = small_study(5);
        s.scales.clear();
        assert!(power_study(&s).is_err());
        let mut s = small_study(5);
        s.alpha = 0.0;
        assert!(power_study(&s).is_err());
    }
}
