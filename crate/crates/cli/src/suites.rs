//! Validation suites. Each suite produces a list of [`Check`]s; a suite
//! passes when all of its checks do.

use std::collections::HashMap;
use std::rc::Rc;
use std::time::Instant;

use cabm::intensities::{
    face_reduction_residual, heat_residual, mixed_spin_intensity, multi_time_intensity_with,
    single_time_intensity, two_time_epsilon_scaling, Coincidence, Configuration, Convention, EpsilonIntegral,
    IntensityError,
    SpinSet, Stencil,
};
use cabm::kernels::{
    self, entry_heat_residual, erf_f, DeltaWeight, propagated_block_quadrature_weighted, propagated_block_weighted, Entry,
    KernelError,
};
use cabm::simulator::{run_ensemble, stream_rng, Ensemble, SimConfig, SimError};
use cabm::skewalg::{congruence, determinant, pfaffian, SkewError, SkewMatrix};
use cabm::stats::{
    compare, estimate_count_moment, estimate_empty_intervals_shifted, estimate_mixed_shifted,
    estimate_product_intensity_shifted, estimate_spin_product_shifted, estimate_window_density, joint_z,
    shifts_within, BinSpec, IntensityEstimate, StatsError, DEFAULT_THRESHOLD,
};
use cabm::{ModelKind, SpaceTimePoint};
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{EpsilonSpec, ExperimentConfig};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Intensity(#[from] IntensityError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Skew(#[from] SkewError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Pfaffian,
    Convolution,
    Heat,
    Face,
    Density,
    Pair,
    TwoTime,
    Epsilon,
    Spin,
    EmptyInterval,
    Thinning,
    Moments,
    Robustness,
}

impl Suite {
    pub const ALL: [Suite; 13] = [
        Suite::Pfaffian,
        Suite::Convolution,
        Suite::Heat,
        Suite::Face,
        Suite::Density,
        Suite::Pair,
        Suite::TwoTime,
        Suite::Epsilon,
        Suite::Spin,
        Suite::EmptyInterval,
        Suite::Thinning,
        Suite::Moments,
        Suite::Robustness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Pfaffian => "pfaffian",
            Suite::Convolution => "convolution",
            Suite::Heat => "heat",
            Suite::Face => "face",
            Suite::Density => "density",
            Suite::Pair => "pair",
            Suite::TwoTime => "two-time",
            Suite::Epsilon => "epsilon",
            Suite::Spin => "spin",
            Suite::EmptyInterval => "empty-interval",
            Suite::Thinning => "thinning",
            Suite::Moments => "moments",
            Suite::Robustness => "robustness",
        }
    }

    /// Whether the suite needs simulated ensembles.
    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            Suite::Density
                | Suite::Pair
                | Suite::TwoTime
                | Suite::Spin
                | Suite::EmptyInterval
                | Suite::Thinning
                | Suite::Moments
                | Suite::Robustness
        )
    }
}

/// One pass/fail comparison. `statistic` is what `rule` is applied to: a
/// z-score, a residual, a ratio or a slope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub label: String,
    pub value: f64,
    pub reference: f64,
    pub stderr: Option<f64>,
    pub statistic: f64,
    pub rule: String,
    pub pass: bool,
}

impl Check {
    fn z_score(suite: Suite, label: impl Into<String>, predicted: f64, est: &IntensityEstimate) -> Self {
        let r = compare(label, predicted, est, DEFAULT_THRESHOLD);
        Check {
            suite,
            label: r.label,
            value: est.value,
            reference: predicted,
            stderr: Some(est.stderr),
            statistic: r.z_score,
            rule: format!("|z| <= {}", r.threshold),
            pass: r.pass,
        }
    }

    /// Two independent estimates; `strict_below` switches to `|z| < threshold`.
    fn joint(
        suite: Suite,
        label: impl Into<String>,
        a: &IntensityEstimate,
        b: &IntensityEstimate,
        threshold: f64,
        strict_below: bool,
    ) -> Self {
        let z = joint_z(a, b);
        let (pass, rule) = if strict_below {
            (z.abs() < threshold, format!("|joint z| < {threshold}"))
        } else {
            (z.abs() <= threshold, format!("|joint z| <= {threshold}"))
        };
        Check {
            suite,
            label: label.into(),
            value: a.value,
            reference: b.value,
            stderr: Some((a.stderr * a.stderr + b.stderr * b.stderr).sqrt()),
            statistic: z,
            rule,
            pass,
        }
    }

    fn at_most(suite: Suite, label: impl Into<String>, value: f64, limit: f64) -> Self {
        Check {
            suite,
            label: label.into(),
            value,
            reference: limit,
            stderr: None,
            statistic: value,
            rule: format!("<= {limit:e}"),
            pass: value <= limit,
        }
    }

    fn below(suite: Suite, label: impl Into<String>, value: f64, limit: f64) -> Self {
        Check {
            suite,
            label: label.into(),
            value,
            reference: limit,
            stderr: None,
            statistic: value,
            rule: format!("< {limit}"),
            pass: value < limit,
        }
    }

    fn within(suite: Suite, label: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Check {
            suite,
            label: label.into(),
            value,
            reference: target,
            stderr: None,
            statistic: value,
            rule: format!("in [{}, {}]", target - tol, target + tol),
            pass: (value - target).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub pass: bool,
    pub seconds: f64,
    pub checks: Vec<Check>,
}

/// Simulation and evaluation settings shared by all suites.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteParams {
    pub lambda: f64,
    pub half_width: f64,
    pub margin: f64,
    pub dt: f64,
    pub replicas: usize,
    pub seed: u64,
    pub convention: Convention,
    pub epsilon: EpsilonSpec,
    pub heat_step: f64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self::from_config(&ExperimentConfig::default())
    }
}

impl SuiteParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            lambda: cfg.lambda,
            half_width: cfg.half_width,
            margin: cfg.margin.unwrap_or(8.0 * SNAPSHOT_TIMES[1].sqrt()),
            dt: cfg.dt,
            replicas: cfg.replicas,
            seed: cfg.seed,
            convention: cfg.convention(),
            epsilon: cfg.epsilon.clone(),
            heat_step: cfg.heat_step,
        }
    }
}

/// Snapshot times of every simulated ensemble.
pub const SNAPSHOT_TIMES: [f64; 2] = [0.5, 1.0];
const T_OBS: f64 = 1.0;
const T_EARLY: f64 = 0.5;
const BIN_WIDTH: f64 = 0.1;
const SHIFT_STEP: f64 = 0.5;

/// Perturbations of the base simulation used by the robustness sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Base,
    HalfLambda,
    DoubleLambda,
    HalfDt,
    DoubleMargin,
}

impl Variant {
    fn index(self) -> u64 {
        match self {
            Variant::Base => 0,
            Variant::HalfLambda => 1,
            Variant::DoubleLambda => 2,
            Variant::HalfDt => 3,
            Variant::DoubleMargin => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::HalfLambda => "lambda/2",
            Variant::DoubleLambda => "2*lambda",
            Variant::HalfDt => "dt/2",
            Variant::DoubleMargin => "2*margin",
        }
    }
}

fn derived_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Lazily simulated ensembles keyed by model and variant.
pub struct SuiteContext {
    pub params: SuiteParams,
    pub verbose: bool,
    cache: HashMap<(ModelKind, Variant), Rc<Ensemble>>,
}

impl SuiteContext {
    pub fn new(params: SuiteParams) -> Self {
        Self {
            params,
            verbose: false,
            cache: HashMap::new(),
        }
    }

    pub fn sim_config(&self, model: ModelKind, variant: Variant) -> SimConfig {
        let p = &self.params;
        let model_tag = match model {
            ModelKind::Abm => 0,
            ModelKind::Cbm => 1,
        };
        let mut cfg = SimConfig {
            model,
            lambda: p.lambda,
            half_width: p.half_width,
            margin: p.margin,
            dt: p.dt,
            snapshot_times: SNAPSHOT_TIMES.to_vec(),
            seed: derived_seed(p.seed, 1 + 2 * variant.index() + model_tag),
        };
        match variant {
            Variant::Base => {}
            Variant::HalfLambda => cfg.lambda /= 2.0,
            Variant::DoubleLambda => cfg.lambda *= 2.0,
            Variant::HalfDt => cfg.dt /= 2.0,
            Variant::DoubleMargin => cfg.margin *= 2.0,
        }
        cfg
    }

    pub fn ensemble(&mut self, model: ModelKind, variant: Variant) -> Result<Rc<Ensemble>, SuiteError> {
        if let Some(e) = self.cache.get(&(model, variant)) {
            return Ok(e.clone());
        }
        let cfg = self.sim_config(model, variant);
        let start = Instant::now();
        let ens = Rc::new(run_ensemble(&cfg, self.params.replicas)?);
        if self.verbose {
            eprintln!(
                "simulated {} {} ({} replicas) in {:.1}s",
                model.name(),
                variant.name(),
                self.params.replicas,
                start.elapsed().as_secs_f64()
            );
        }
        self.cache.insert((model, variant), ens.clone());
        Ok(ens)
    }

    pub fn run(&mut self, suite: Suite) -> Result<SuiteOutcome, SuiteError> {
        let start = Instant::now();
        let checks = match suite {
            Suite::Pfaffian => pfaffian_suite(self)?,
            Suite::Convolution => convolution_suite(self)?,
            Suite::Heat => heat_suite(self)?,
            Suite::Face => face_suite(self)?,
            Suite::Density => density_suite(self)?,
            Suite::Pair => pair_suite(self)?,
            Suite::TwoTime => two_time_suite(self)?,
            Suite::Epsilon => epsilon_suite(self)?,
            Suite::Spin => spin_suite(self)?,
            Suite::EmptyInterval => empty_interval_suite(self)?,
            Suite::Thinning => thinning_suite(self)?,
            Suite::Moments => moments_suite(self)?,
            Suite::Robustness => robustness_suite(self)?,
        };
        Ok(SuiteOutcome {
            suite,
            pass: checks.iter().all(|c| c.pass),
            seconds: start.elapsed().as_secs_f64(),
            checks,
        })
    }
}

fn random_skew(dim: usize, rng: &mut impl Rng) -> Result<SkewMatrix, SkewError> {
    SkewMatrix::from_upper(dim, |_, _| rng.random_range(-1.0..1.0))
}

const PFAFFIAN_MATRICES: usize = 500;

fn pfaffian_suite(ctx: &mut SuiteContext) -> Result<Vec<Check>, SuiteError> {
    let start = Instant::now();
    let mut rng = stream_rng(derived_seed(ctx.params.seed, 100), 0);
    let (mut det_err, mut swap_err, mut cong_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..PFAFFIAN_MATRICES {
        let dim = 2 * rng.random_range(1..=15);
        let a = random_skew(dim, &mut rng)?;
        let pf = pfaffian(&a);
        let det = determinant(&a);
        det_err = det_err.max((pf * pf - det).abs() / det.abs());

        let i = rng.random_range(0..dim);
        let j = (i + rng.random_range(1..dim)) % dim;
        let swapped = pfaffian(&a.swap_pair(i, j));
        swap_err = swap_err.max((swapped + pf).abs() / pf.abs());

        let e = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let expected = e.clone().lu().determinant() * pf;
        let got = pfaffian(&congruence(&a, &e)?);
        cong_err = cong_err.max((got - expected).abs() / expected.abs());
    }
    let s = Suite::Pfaffian;
    Ok(vec![
        Check::at_most(s, "max relative |Pf^2 - det|", det_err, 1e-8),
        Check::at_most(s, "max relative |Pf(swapped) + Pf|", swap_err, 1e-10),
        Check::at_most(s, "max relative |Pf(EAE^T) - det(E)Pf(A)|", cong_err, 1e-10),
        Check::below(s, "runtime seconds", start.elapsed().as_secs_f64(), 10.0),
    ])
}

fn convolution_suite(ctx: &mut SuiteContext) -> Result<Vec<Check>, SuiteError> {
    let start = Instant::now();
    let delta = ctx.params.convention.delta;
    let mut checks = Vec::new();
    for model in [ModelKind::Abm, ModelKind::Cbm] {
        for t in [0.6, 1.0, 2.0] {
            for s in [0.5, 0.9 * t] {
                let mut worst = 0.0f64;
                for k in 0..=40 {
                    let z = -5.0 + 0.25 * k as f64;
                    let closed = propagated_block_weighted(t, s, z, model, delta)?;
                    let oracle = propagated_block_quadrature_weighted(t, s, z, model, delta)?;
                    worst = worst.max(closed.max_abs_diff(&oracle));
                }
                checks.push(Check::at_most(
                    Suite::Convolution,
                    format!("{} t={t} s={s}: max |closed - quadrature|", model.name()),
                    worst,
                    1e-8,
                ));
            }
        }
    }
    checks.push(Check::below(
        Suite::Convolution,
        "runtime seconds",
        start.elapsed().as_secs_f64(),
        60.0,
    ));
    Ok(checks)
}

fn point(t: f64, z: f64) -> SpaceTimePoint {
    SpaceTimePoint { t, z }
}

fn spin_config(points: Vec<SpaceTimePoint>, t: f64, ys: &[f64]) -> Result<Configuration, IntensityError> {
    Configuration::new(points, Some(SpinSet { t, ys: ys.to_vec() }), ModelKind::Abm)
}

/// Spin configurations with `(m, n)` = (1,0), (2,0), (1,1) used by the
/// heat and spin suites.
fn sample_spin_configs() -> Result<Vec<(&'static str, Configuration)>, IntensityError> {
    Ok(vec![
        ("(m,n)=(1,0)", spin_config(vec![], T_OBS, &[0.0, 1.0])?),
        ("(m,n)=(2,0)", spin_config(vec![], T_OBS, &[0.0, 0.5, 1.2, 2.0])?),
        ("(m,n)=(1,1)", spin_config(vec![point(T_EARLY, 0.5)], T_OBS, &[0.0, 1.0])?),
    ])
}

const RICHARDSON_TARGET: f64 = 4.0;
const RICHARDSON_TOL: f64 = 1.0;

fn heat_suite(ctx: &mut SuiteContext) -> Result<Vec<Check>, SuiteError> {
    let h = ctx.params.heat_step;
    let mut checks = Vec::new();
    for t in [1.5, 2.0] {
        for z in [-1.0, 0.5, 2.0] {
            for entry in Entry::ALL {
                let coarse = entry_heat_residual(entry, t, 1.0, z, h, h / 10.0, ModelKind::Abm)?;
                let fine = entry_heat_residual(entry, t, 1.0, z, h / 2.0, h / 20.0, ModelKind::Abm)?;
                checks.push(Check::within(
                    Suite::Heat,
                    format!("{} t={t} s=1 z={z}: residual ratio (residual {coarse:.2e})", entry.name()),
                    coarse / fine,
                    RICHARDSON_TARGET,
                    RICHARDSON_TOL,
                ));
            }
        }
    }
    let conv = ctx.params.convention;
    for (name, cfg) in sample_spin_configs()? {
        let coarse = heat_residual(&cfg, Stencil::new(h), conv)?;
        let fine = heat_residual(&cfg, Stencil::new(h / 2.0), conv)?;
        checks.push(Check::within(
            Suite::Heat,
            format!("spin correlation {name}: residual ratio (residual {coarse:.2e})"),
            coarse / fine,
            RICHARDSON_TARGET,
            RICHARDSON_TOL,
        ));
    }
    Ok(checks)
}

fn face_suite(ctx: &mut SuiteContext) -> Result<Vec<Check>, SuiteError> {
    let conv = ctx.params.convention;
    let bases: [&[f64]; 2] = [&[-0.7, 0.1, 0.9, 1.6], &[-1.1, -0.4, 0.2, 0.8, 1.3, 2.1]];
    let mut checks = Vec::new();
    for base in bases {
        let m = base.len() / 2;
        for n in [0, 1] {
            let points = if n == 1 { vec![point(0.6, 0.25)] } else { vec![] };
            for i in 0..base.len() - 1 {
                let mut ys = base.to_vec();
                ys[i + 1] = ys[i];
                let cfg = Configuration::on_closed_cell(
                    points.clone(),
                    Some(SpinSet { t: T_OBS, ys }),
                    ModelKind::Abm,
                )?;
                let fc = face_reduction_residual(&cfg, i, conv, Coincidence::InteriorLimit)?;
                checks.push(Check::at_most(
                    Suite::Face,
                    format!("m={m} n={n} face {i}: |face - reduced| (face value {:.6})", fc.face_value),
                    fc.residual,
                    1e-10,
                ));
            }
        }
    }
    Ok(checks)
}

fn density_suite(ctx: &mut SuiteContext) -> Result<Vec<Check>, SuiteError> {
    let mut checks = Vec::new();
    for model in [ModelKind::Abm, ModelKind::Cbm] {
        let ens = ctx.ensemble(model, Variant::Base)?;
        let est = estimate_window_density(&ens, T_OBS)?;
        let predicted = single_time_intensity(T_OBS, &[0.0], model)?.value;
        checks.push(Check::z_score(
            Suite::Density,
            format!("{} density at t={T_OBS}", model.name()),
            predicted,
            &est,
        ));
    }
    Ok(checks)
}

fn bin_shifts(ctx: &SuiteContext, lo: f64, hi: f64) -> Vec<f64> {
    shifts_within(ctx.params.half_width, (lo, hi), BIN_WIDTH / 2.0, SHIFT_STEP)
}

fn pair_estimate(ctx: &SuiteContext, ens: &Ensemble, r: f64) -> Result<IntensityEstimate, SuiteError> {
    let bins = BinSpec::new(vec![(T_OBS, 0.0), (T_OBS, r)], BIN_WIDTH)?;
    Ok(estimate_product_intensity_shifted(ens, &bins, &bin_shifts(ctx, 0.0, r))?)
}

const PAIR_SEPARATIONS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

fn pair_suite(ctx: &mut SuiteContext) -> Result<Vec<Check>, SuiteError> {
    let ens = ctx.ensemble(ModelKind::Abm, Variant::Base)?;
    let mut checks = Vec::new();
    let mut closest = None;
    for r in PAIR_SEPARATIONS {
        let est = pair_estimate(ctx, &ens, r)?;
        let predicted = single_time_intensity(T_OBS, &[0.0, r], ModelKind::Abm)?.value;
        checks.push(Check::z_score(Suite::Pair, format!("abm rho2(0, {r}) at t={T_OBS}"), predicted, &est));
        closest.get_or_insert((r, predicted, est));
    }
    let rho1 = single_time_intensity(T_OBS, &[0.0], ModelKind::Abm)?.value;
    if let Some((r, predicted, est)) = closest {
        checks.push(Check::below(
            Suite::Pair,
            format!("predicted rho2(0, {r}) below rho1^2"),
            predicted,
            rho1 * rho1,
        ));
        checks.push(Check::below(
            Suite::Pair,
            format!("estimated rho2(0, {r}) below rho1^2"),
            est.value,
            rho1 * rho1,
        ));
    }
    Ok(checks)
}

fn two_time_suite(ctx: &mut SuiteContext) -> Result<Vec<Check>, SuiteError> {
    let ens = ctx.ensemble(ModelKind::Abm, Variant::Base)?;
    let delta = ctx.params.convention.delta;
    let mut checks = Vec::new();
    for (x, y) in [(0.0, 0.0), (0.0, 1.0)] {
        let bins = BinSpec::new(vec![(T_EARLY, x), (T_OBS, y)], BIN_WIDTH)?;
        let est = estimate_product_intensity_shifted(&ens, &bins, &bin_shifts(ctx, f64::min(x, y), f64::max(x, y)))?;
        let predicted = multi_time_intensity_with(&[point(T_EARLY, x), point(T_OBS, y)], ModelKind::Abm, delta)?.value;
        checks.push(Check::z_score(
            Suite::TwoTime,
            format!("abm rho(s={T_EARLY}, x={x}; t={T_OBS}, y={y}) [{delta:?}]"),
            predicted,
            &est,
        ));
    }
    Ok(checks)
}

/// Integrals over `[z, z+ε]²` for every width, `ρ_s(z)`, and the scaling checks.
pub fn epsilon_scaling_checks(
    spec: &EpsilonSpec,
    delta: DeltaWeight,
) -> Result<(Vec<EpsilonIntegral>, f64, Vec<Check>), SuiteError> {
    let EpsilonSpec { s, t, z, ref widths } = *spec;
    let rho_s = single_time_intensity(s, &[z], ModelKind::Abm)?.value;
    let integrals = widths
        .iter()
        .map(|&eps| two_time_epsilon_scaling(s, t, z, eps, ModelKind::Abm, delta))
        .collect::<Result<Vec<_>, _>>()?;
    let mut checks = Vec::new();
    for k in 1..widths.len() {
        let expected = widths[k - 1] / widths[k];
        checks.push(Check::within(
            Suite::Epsilon,
            format!("I({}) / I({})", widths[k - 1], widths[k]),
            integrals[k - 1].value / integrals[k].value,
            expected,
            0.1 * expected,
        ));
    }
    for (&eps, v) in widths.iter().zip(&integrals) {
        checks.push(Check::within(
            Suite::Epsilon,
            format!("I({eps}) / (eps * rho_s) at t-s={:e}", t - s),
            v.value / (eps * rho_s),
            1.0,
            0.1,
        ));
    }
    Ok((integrals, rho_s, checks))
}

fn epsilon_suite(ctx: &mut SuiteContext) -> Result<Vec<Check>, SuiteError> {
    Ok(epsilon_scaling_checks(&ctx.params.epsilon, ctx.params.convention.delta)?.2)
}

fn spin_suite(ctx: &mut SuiteContext) -> Result<Vec<Check>, SuiteError> {
    let ens = ctx.ensemble(ModelKind::Abm, Variant::Base)?;
    let conv = ctx.params.convention;
    let mut checks = Vec::new();

    let two_f = 2.0 * erf_f(1.0).value;
    let est = estimate_spin_product_shifted(&ens, T_OBS, &[0.0, 1.0], &bin_shifts(ctx, 0.0, 1.0))?;
    checks.push(Check::z_score(Suite::Spin, "E[S(0)S(1)] vs 2F(1)", two_f, &est));

    for (name, cfg) in sample_spin_configs()? {
        let spins = cfg.spins().expect("sample configurations carry spins");
        let bins = if cfg.points().is_empty() {
            None
        } else {
            Some(BinSpec::new(cfg.points().iter().map(|p| (p.t, p.z)).collect(), BIN_WIDTH)?)
        };
        let lo = spins.ys[0].min(cfg.points().iter().map(|p| p.z).fold(f64::INFINITY, f64::min));
        let hi = spins.ys[spins.ys.len() - 1].max(cfg.points().iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max));
        let est = estimate_mixed_shifted(&ens, spins.t, &spins.ys, bins.as_ref(), &bin_shifts(ctx, lo, hi))?;
        let predicted = mixed_spin_intensity(&cfg, conv)?.value;
        checks.push(Check::z_score(
            Suite::Spin,
            format!("mixed spin intensity {name} [{:?}]", conv.spin_sign),
            predicted,
            &est,
        ));
    }
    Ok(checks)
}

const EMPTY_INTERVALS: [(f64, f64); 3] = [(0.0, 0.5), (0.0, 1.0), (-1.0, 1.0)];

fn empty_interval_suite(ctx: &mut SuiteContext) -> Result<Vec<Check>, SuiteError> {
    let abm = ctx.ensemble(ModelKind::Abm, Variant::Base)?;
    let cbm = ctx.ensemble(ModelKind::Cbm, Variant::Base)?;
    let mut checks = Vec::new();
    for (a, b) in EMPTY_INTERVALS {
        let shifts = shifts_within(ctx.params.half_width, (a, b), 0.0, SHIFT_STEP);
        let spin = estimate_spin_product_shifted(&abm, T_OBS, &[a, b], &shifts)?;
        let empty = estimate_empty_intervals_shifted(&cbm, T_OBS, &[(a, b)], &shifts)?;
        checks.push(Check::joint(
            Suite::EmptyInterval,
            format!("abm E[S({a})S({b})] vs cbm P(empty [{a}, {b}])"),
            &spin,
            &empty,
            DEFAULT_THRESHOLD,
            false,
        ));
    }
    Ok(checks)
}

fn thinning_suite(ctx: &mut SuiteContext) -> Result<Vec<Check>, SuiteError> {
    let abm = ctx.ensemble(ModelKind::Abm, Variant::Base)?;
    let cbm = ctx.ensemble(ModelKind::Cbm, Variant::Base)?;
    let thinned = cbm.thinned(0.5, derived_seed(ctx.params.seed, 200));
    let mut checks = vec![Check::joint(
        Suite::Thinning,
        format!("thinned cbm vs abm density at t={T_OBS}"),
        &estimate_window_density(&thinned, T_OBS)?,
        &estimate_window_density(&abm, T_OBS)?,
        DEFAULT_THRESHOLD,
        false,
    )];
    for r in [0.5, 1.0] {
        checks.push(Check::joint(
            Suite::Thinning,
            format!("thinned cbm vs abm rho2(0, {r})"),
            &pair_estimate(ctx, &thinned, r)?,
            &pair_estimate(ctx, &abm, r)?,
            DEFAULT_THRESHOLD,
            false,
        ));
    }
    Ok(checks)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

const MOMENT_LENGTHS: [f64; 3] = [0.5, 1.0, 2.0];

fn moments_suite(ctx: &mut SuiteContext) -> Result<Vec<Check>, SuiteError> {
    let ens = ctx.ensemble(ModelKind::Abm, Variant::Base)?;
    let mut checks = Vec::new();
    for k in 1..=3 {
        let mut ms = Vec::new();
        for l in MOMENT_LENGTHS {
            let shifts = shifts_within(ctx.params.half_width, (0.0, l), 0.0, SHIFT_STEP);
            ms.push(estimate_count_moment(&ens, T_OBS, (0.0, l), k, &shifts)?.value);
        }
        let slope = log_log_slope(&MOMENT_LENGTHS, &ms);
        checks.push(Check::within(
            Suite::Moments,
            format!("log-log slope of E[N([0,l])^{k}], l in {MOMENT_LENGTHS:?} (moments {ms:.4?})"),
            slope,
            k as f64,
            0.3,
        ));
    }
    Ok(checks)
}

fn robustness_suite(ctx: &mut SuiteContext) -> Result<Vec<Check>, SuiteError> {
    let mut checks = Vec::new();
    for model in [ModelKind::Abm, ModelKind::Cbm] {
        let base = estimate_window_density(&*ctx.ensemble(model, Variant::Base)?, T_OBS)?;
        for variant in [Variant::HalfLambda, Variant::DoubleLambda, Variant::HalfDt, Variant::DoubleMargin] {
            let cfg = ctx.sim_config(model, variant);
            let est = estimate_window_density(&*ctx.ensemble(model, variant)?, T_OBS)?;
            checks.push(Check::joint(
                Suite::Robustness,
                format!(
                    "{} density, {} (lambda={}, dt={:e}, margin={}) vs base",
                    model.name(),
                    variant.name(),
                    cfg.lambda,
                    cfg.dt,
                    cfg.margin
                ),
                &est,
                &base,
                1.0,
                true,
            ));
        }
    }
    Ok(checks)
}

/// Kernel values used by `kernel-table`: `K(t, 0; s, z)`.
pub fn kernel_row(
    t: f64,
    s: Option<f64>,
    z: f64,
    model: ModelKind,
    delta: kernels::DeltaWeight,
) -> Result<[f64; 4], KernelError> {
    let b = match s {
        None => kernels::equal_time_block(t, z, model)?,
        Some(s) => kernels::extended_block_weighted(point(t, 0.0), SpaceTimePoint::new(s, z)?, model, delta)?,
    };
    Ok(b.entries())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> SuiteContext {
        SuiteContext::new(SuiteParams {
            replicas: 40,
            half_width: 5.0,
            ..SuiteParams::default()
        })
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [0.5, 1.0, 2.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert!((log_log_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_suites_pass() {
        let mut ctx = quick();
        for suite in [Suite::Face, Suite::Heat] {
            let out = ctx.run(suite).unwrap();
            assert!(out.pass, "{:#?}", out.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
        }
    }

    #[test]
    fn variant_configs() {
        let ctx = quick();
        let base = ctx.sim_config(ModelKind::Abm, Variant::Base);
        assert_eq!(ctx.sim_config(ModelKind::Abm, Variant::HalfLambda).lambda, base.lambda / 2.0);
        assert_eq!(ctx.sim_config(ModelKind::Abm, Variant::HalfDt).dt, base.dt / 2.0);
        assert_eq!(ctx.sim_config(ModelKind::Abm, Variant::DoubleMargin).margin, 2.0 * base.margin);
        assert_ne!(base.seed, ctx.sim_config(ModelKind::Cbm, Variant::Base).seed);
        assert_ne!(base.seed, ctx.sim_config(ModelKind::Abm, Variant::HalfDt).seed);
    }

    #[test]
    fn ensembles_are_cached() {
        let mut ctx = SuiteContext::new(SuiteParams {
            replicas: 4,
            half_width: 2.0,
            dt: 1e-3,
            ..SuiteParams::default()
        });
        let a = ctx.ensemble(ModelKind::Abm, Variant::Base).unwrap();
        let b = ctx.ensemble(ModelKind::Abm, Variant::Base).unwrap();
        assert!(Rc::ptr_eq(&a, &b));
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn joint_rule_strictness() {
        let a = IntensityEstimate { value: 1.0, stderr: 0.6, replicas: 10, bins: None };
        let b = IntensityEstimate { value: 0.2, stderr: 0.8, replicas: 10, bins: None };
        assert!(!Check::joint(Suite::Robustness, "x", &a, &b, 0.8, true).pass);
        assert!(Check::joint(Suite::Robustness, "x", &a, &b, 0.8, false).pass);
    }
}
