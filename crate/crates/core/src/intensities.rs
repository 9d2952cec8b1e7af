//! Pfaffian intensities built from the extended kernel.
//!
//! * [`multi_time_intensity`]: `ρ_{t_1…t_n}(z_1,…,z_n) = Pf[K(t_i,z_i;t_j,z_j)]`.
//! * [`mixed_spin_intensity`]: `E[∏ N_{t_i}(δ_{z_i}) ∏ S_t(y_j)]` as a
//!   `(2n+2m)`-dimensional Pfaffian with the spin rows first.
//!
//! # Sign convention for spin correlations
//!
//! Taken literally, the spin prefactor `(-2)^m` makes the two-spin
//! correlation `E[S_t(y_1)S_t(y_2)] = -2F((y_2-y_1)/√t)`, which is negative and
//! tends to `-1` as `y_2 ↓ y_1`, whereas `S² = 1` forces `+1`. Simulation
//! confirms the prefactor `2^m` (equivalently `(-1)^m` times the literal
//! value) for `(m, n) ∈ {(1,0), (2,0), (1,1)}`; the same choice makes the
//! face reduction `Φ(y) = Φ(y without the coincident pair)` hold exactly.
//! [`SpinSign::Literal`] keeps the literal evaluation available.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::kernels::{
    self, equal_time_block, equal_time_k22_right_limit, extended_block_weighted, mixed_entry, AugmentedPoint,
    DeltaWeight, KernelBlock, KernelError, ModelKind, SpaceTimePoint,
};
use crate::quadrature::{self, QuadError};
use crate::skewalg::{pfaffian, SkewError, SkewMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntensityError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Skew(#[from] SkewError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("at least one intensity point is required")]
    NoPoints,
    #[error("spin locations must be strictly increasing: y[{index}]={prev} >= y[{next_index}]={next}", next_index = index + 1)]
    SpinsNotIncreasing { index: usize, prev: f64, next: f64 },
    #[error("an even number of spin locations is required, got {0}")]
    OddSpinCount(usize),
    #[error("spin correlations are only available for ABM")]
    SpinsNeedAbm,
    #[error("configuration has neither spins nor intensity points")]
    EmptyConfiguration,
    #[error("stencil does not fit: {0}")]
    StencilTooWide(String),
    #[error("no coincident spin pair at index {0}")]
    NoCoincidentPair(usize),
    #[error("kernel assembly mismatch {defect:e} at ({i},{j})")]
    AssemblyMismatch { i: usize, j: usize, defect: f64 },
    #[error("two-time scaling needs t > s > 0 and eps > 0 (t={t}, s={s}, eps={eps})")]
    BadScalingArguments { t: f64, s: f64, eps: f64 },
}

/// Spin prefactor convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpinSign {
    /// `(-2)^m Pf[K̂]`, as written.
    Literal,
    /// `2^m Pf[K̂]`, which matches simulation.
    #[default]
    Resolved,
}

impl SpinSign {
    pub fn prefactor(self, m: usize) -> f64 {
        match self {
            SpinSign::Literal => (-2.0f64).powi(m as i32),
            SpinSign::Resolved => 2.0f64.powi(m as i32),
        }
    }
}

/// Both convention choices used when evaluating Pfaffian intensities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Convention {
    pub delta: DeltaWeight,
    pub spin_sign: SpinSign,
}

impl Convention {
    /// Formulas taken exactly as written.
    pub const LITERAL: Convention = Convention {
        delta: DeltaWeight::Literal,
        spin_sign: SpinSign::Literal,
    };
    /// Conventions confirmed by simulation (the default).
    pub const RESOLVED: Convention = Convention {
        delta: DeltaWeight::SameParticle,
        spin_sign: SpinSign::Resolved,
    };
}

/// How the spin–spin entry of a coincident pair `y_i = y_{i+1}` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coincidence {
    /// `K^{22}_t(0) = 0` from `sgn(0) = 0`.
    SignZero,
    /// The limit from inside the ordered cell, `K^{22}_t(0+) = F(0) = 1/2`.
    InteriorLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinSet {
    pub t: f64,
    pub ys: Vec<f64>,
}

/// Intensity points plus optional spin locations at a common later time.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    points: Vec<SpaceTimePoint>,
    spins: Option<SpinSet>,
    model: ModelKind,
}

impl Configuration {
    /// Validates a configuration with spins in the open ordered cell.
    pub fn new(points: Vec<SpaceTimePoint>, spins: Option<SpinSet>, model: ModelKind) -> Result<Self, IntensityError> {
        Self::build(points, spins, model, false)
    }

    /// Like [`Configuration::new`], but allows equal neighbouring spin
    /// locations (points on a face of the cell).
    pub fn on_closed_cell(
        points: Vec<SpaceTimePoint>,
        spins: Option<SpinSet>,
        model: ModelKind,
    ) -> Result<Self, IntensityError> {
        Self::build(points, spins, model, true)
    }

    pub fn intensity_only(points: Vec<SpaceTimePoint>, model: ModelKind) -> Result<Self, IntensityError> {
        Self::new(points, None, model)
    }

    fn build(
        points: Vec<SpaceTimePoint>,
        spins: Option<SpinSet>,
        model: ModelKind,
        allow_faces: bool,
    ) -> Result<Self, IntensityError> {
        if let Some(sp) = &spins {
            if model == ModelKind::Cbm {
                return Err(IntensityError::SpinsNeedAbm);
            }
            if !(sp.t > 0.0 && sp.t.is_finite()) {
                return Err(KernelError::NonPositiveTime(sp.t).into());
            }
            if sp.ys.len() % 2 == 1 {
                return Err(IntensityError::OddSpinCount(sp.ys.len()));
            }
            for (index, w) in sp.ys.windows(2).enumerate() {
                let bad = if allow_faces { w[1] < w[0] } else { w[1] <= w[0] };
                if bad || !w[0].is_finite() || !w[1].is_finite() {
                    return Err(IntensityError::SpinsNotIncreasing {
                        index,
                        prev: w[0],
                        next: w[1],
                    });
                }
            }
            if let Some(p) = points.iter().find(|p| p.t > sp.t) {
                return Err(KernelError::PointAfterSpins {
                    t_point: p.t,
                    t_spin: sp.t,
                }
                .into());
            }
        }
        if points.is_empty() && spins.as_ref().is_none_or(|s| s.ys.is_empty()) {
            return Err(IntensityError::EmptyConfiguration);
        }
        Ok(Self { points, spins, model })
    }

    pub fn points(&self) -> &[SpaceTimePoint] {
        &self.points
    }

    pub fn spins(&self) -> Option<&SpinSet> {
        self.spins.as_ref()
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    /// Number of spin pairs `m`.
    pub fn spin_pairs(&self) -> usize {
        self.spins.as_ref().map_or(0, |s| s.ys.len() / 2)
    }

    fn with_spins(&self, t: f64, ys: Vec<f64>) -> Self {
        Self {
            points: self.points.clone(),
            spins: Some(SpinSet { t, ys }),
            model: self.model,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityValue {
    pub value: f64,
    /// Size of the Pfaffian matrix that produced the value.
    pub dimension: usize,
}

/// Assembles `[K(p_i; p_j)]` from upper blocks; in debug builds the lower
/// blocks are evaluated independently and compared.
fn assemble_points(points: &[SpaceTimePoint], model: ModelKind, delta: DeltaWeight) -> Result<SkewMatrix, IntensityError> {
    let n = points.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for (i, &p) in points.iter().enumerate() {
        for (j, &q) in points.iter().enumerate().skip(i) {
            let b = extended_block_weighted(p, q, model, delta)?;
            for a in 0..2 {
                for c in 0..2 {
                    m[(2 * i + a, 2 * j + c)] = b.0[a][c];
                    m[(2 * j + c, 2 * i + a)] = -b.0[a][c];
                }
            }
            if cfg!(debug_assertions) && i != j {
                let back = extended_block_weighted(q, p, model, delta)?;
                let defect = back.max_abs_diff(&b.neg_transpose());
                if defect > 1e-10 {
                    return Err(IntensityError::AssemblyMismatch { i, j, defect });
                }
            }
        }
    }
    Ok(SkewMatrix::new(m)?)
}

/// Multi-time intensity with the default (resolved) singular weight.
pub fn multi_time_intensity(points: &[SpaceTimePoint], model: ModelKind) -> Result<IntensityValue, IntensityError> {
    multi_time_intensity_with(points, model, DeltaWeight::default())
}

pub fn multi_time_intensity_with(
    points: &[SpaceTimePoint],
    model: ModelKind,
    delta: DeltaWeight,
) -> Result<IntensityValue, IntensityError> {
    if points.is_empty() {
        return Err(IntensityError::NoPoints);
    }
    let a = assemble_points(points, model, delta)?;
    Ok(IntensityValue {
        value: pfaffian(&a),
        dimension: a.dim(),
    })
}

/// Equal-time intensity `Pf[K_t(z_j - z_i)]` assembled straight from
/// [`equal_time_block`], independent of the extended-kernel dispatch.
pub fn single_time_intensity(t: f64, zs: &[f64], model: ModelKind) -> Result<IntensityValue, IntensityError> {
    if zs.is_empty() {
        return Err(IntensityError::NoPoints);
    }
    let n = zs.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let b = equal_time_block(t, zs[j] - zs[i], model)?;
            for a in 0..2 {
                for c in 0..2 {
                    m[(2 * i + a, 2 * j + c)] = b.0[a][c];
                }
            }
        }
    }
    let a = SkewMatrix::new(m)?;
    Ok(IntensityValue {
        value: pfaffian(&a),
        dimension: a.dim(),
    })
}

fn rows_of(p: AugmentedPoint) -> usize {
    match p {
        AugmentedPoint::Spin { .. } => 1,
        AugmentedPoint::Intensity(_) => 2,
    }
}

/// Mixed kernel matrix with spins first; `coincidence` decides the entry
/// between equal neighbouring spin locations.
fn assemble_mixed(
    cfg: &Configuration,
    delta: DeltaWeight,
    coincidence: Coincidence,
) -> Result<SkewMatrix, IntensityError> {
    let (t_spin, ys): (f64, &[f64]) = match &cfg.spins {
        Some(s) => (s.t, &s.ys),
        None => (cfg.points.iter().map(|p| p.t).fold(f64::MIN, f64::max), &[]),
    };
    let labels: Vec<AugmentedPoint> = ys
        .iter()
        .map(|&y| AugmentedPoint::Spin { y })
        .chain(cfg.points.iter().map(|&p| AugmentedPoint::Intensity(p)))
        .collect();
    let offsets: Vec<usize> = labels
        .iter()
        .scan(0, |acc, &l| {
            let o = *acc;
            *acc += rows_of(l);
            Some(o)
        })
        .collect();
    let dim: usize = labels.iter().map(|&l| rows_of(l)).sum();
    let mut m = DMatrix::zeros(dim, dim);
    let mut put = |r: usize, c: usize, v: f64| {
        m[(r, c)] = v;
        m[(c, r)] = -v;
    };
    for (i, &a) in labels.iter().enumerate() {
        for (j, &b) in labels.iter().enumerate().skip(i) {
            let (oi, oj) = (offsets[i], offsets[j]);
            if i == j && matches!(a, AugmentedPoint::Spin { .. }) {
                continue;
            }
            let entry = match (a, b) {
                (AugmentedPoint::Spin { y: ya }, AugmentedPoint::Spin { y: yb })
                    if ya == yb && coincidence == Coincidence::InteriorLimit =>
                {
                    KernelBlock::Scalar(equal_time_k22_right_limit(ModelKind::Abm))
                }
                _ => mixed_entry(a, b, t_spin, delta)?,
            };
            match entry {
                KernelBlock::Scalar(v) => put(oi, oj, v),
                KernelBlock::R1x2([u, v]) => {
                    put(oi, oj, u);
                    put(oi, oj + 1, v);
                }
                KernelBlock::C2x1([u, v]) => {
                    put(oi, oj, u);
                    put(oi + 1, oj, v);
                }
                KernelBlock::B2x2(blk) => {
                    for x in 0..2 {
                        for y in 0..2 {
                            if i == j && x >= y {
                                continue;
                            }
                            put(oi + x, oj + y, blk.0[x][y]);
                        }
                    }
                }
            }
        }
    }
    Ok(SkewMatrix::new(m)?)
}

fn phi(
    cfg: &Configuration,
    conv: Convention,
    coincidence: Coincidence,
) -> Result<IntensityValue, IntensityError> {
    if cfg.spins.is_none() {
        return multi_time_intensity_with(&cfg.points, cfg.model, conv.delta);
    }
    let a = assemble_mixed(cfg, conv.delta, coincidence)?;
    Ok(IntensityValue {
        value: conv.spin_sign.prefactor(cfg.spin_pairs()) * pfaffian(&a),
        dimension: a.dim(),
    })
}

/// `Φ = (±2)^m Pf[K̂]` for a configuration in the open cell.
pub fn mixed_spin_intensity(cfg: &Configuration, conv: Convention) -> Result<IntensityValue, IntensityError> {
    if cfg.spins.is_some() && cfg.model == ModelKind::Cbm {
        return Err(IntensityError::SpinsNeedAbm);
    }
    phi(cfg, conv, Coincidence::SignZero)
}

/// Finite-difference steps for [`heat_residual`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub h_space: f64,
    pub h_time: f64,
}

impl Stencil {
    /// Space step `h` with the time step `h/10`.
    pub fn new(h: f64) -> Self {
        Self {
            h_space: h,
            h_time: h / 10.0,
        }
    }
}

impl Default for Stencil {
    fn default() -> Self {
        Self::new(1e-2)
    }
}

/// `|∂_t Φ - ½ ΔΦ|` by central differences in the spin time and all `2m`
/// spin coordinates. Zero when there are no spins.
pub fn heat_residual(cfg: &Configuration, stencil: Stencil, conv: Convention) -> Result<f64, IntensityError> {
    let Some(spins) = cfg.spins() else {
        return Ok(0.0);
    };
    if spins.ys.is_empty() {
        return Ok(0.0);
    }
    let Stencil { h_space: h, h_time: ht } = stencil;
    let t_max = cfg.points.iter().map(|p| p.t).fold(0.0, f64::max);
    if spins.t - ht <= t_max {
        return Err(IntensityError::StencilTooWide(format!(
            "spin time {} minus step {ht} must exceed the latest point time {t_max}",
            spins.t
        )));
    }
    if let Some(w) = spins.ys.windows(2).find(|w| w[1] - w[0] <= 2.0 * h) {
        return Err(IntensityError::StencilTooWide(format!(
            "spin gap {} is not wider than 2h = {}",
            w[1] - w[0],
            2.0 * h
        )));
    }
    let eval = |t: f64, ys: Vec<f64>| mixed_spin_intensity(&cfg.with_spins(t, ys), conv).map(|v| v.value);
    let centre = eval(spins.t, spins.ys.clone())?;
    let d_t = (eval(spins.t + ht, spins.ys.clone())? - eval(spins.t - ht, spins.ys.clone())?) / (2.0 * ht);
    let mut lap = 0.0;
    for k in 0..spins.ys.len() {
        let mut up = spins.ys.clone();
        up[k] += h;
        let mut down = spins.ys.clone();
        down[k] -= h;
        lap += (eval(spins.t, up)? - 2.0 * centre + eval(spins.t, down)?) / (h * h);
    }
    Ok((d_t - 0.5 * lap).abs())
}

/// Result of a face-reduction check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceCheck {
    pub face_value: f64,
    pub reduced_value: f64,
    pub residual: f64,
}

/// Compares `Φ` on the face `y_i = y_{i+1}` (0-based `i`) with `Φ` after
/// deleting that pair. The face value uses `coincidence` for the entry
/// between the coincident spins.
pub fn face_reduction_residual(
    cfg: &Configuration,
    i: usize,
    conv: Convention,
    coincidence: Coincidence,
) -> Result<FaceCheck, IntensityError> {
    let spins = cfg.spins().ok_or(IntensityError::NoCoincidentPair(i))?;
    if i + 1 >= spins.ys.len() || spins.ys[i] != spins.ys[i + 1] {
        return Err(IntensityError::NoCoincidentPair(i));
    }
    let face_value = phi(cfg, conv, coincidence)?.value;
    let mut ys = spins.ys.clone();
    ys.drain(i..=i + 1);
    let reduced = if ys.is_empty() && cfg.points.is_empty() {
        // empty product
        1.0
    } else {
        let red = Configuration::on_closed_cell(
            cfg.points.clone(),
            Some(SpinSet { t: spins.t, ys }),
            cfg.model,
        )?;
        phi(&red, conv, coincidence)?.value
    };
    Ok(FaceCheck {
        face_value,
        reduced_value: reduced,
        residual: (face_value - reduced).abs(),
    })
}

/// Outcome of [`two_time_epsilon_scaling`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonIntegral {
    pub value: f64,
    /// Quadrature nodes per axis at convergence.
    pub nodes_per_axis: usize,
}

/// `∫_z^{z+ε}∫_z^{z+ε} ρ_{st}(y, x) dx dy` by tensor-product quadrature,
/// where `y` is the position at time `s` and `x` at time `t`.
pub fn two_time_epsilon_scaling(
    s: f64,
    t: f64,
    z: f64,
    eps: f64,
    model: ModelKind,
    delta: DeltaWeight,
) -> Result<EpsilonIntegral, IntensityError> {
    if !(t > s && s > 0.0 && eps > 0.0) {
        return Err(IntensityError::BadScalingArguments { t, s, eps });
    }
    let density = |y: f64, x: f64| {
        let pts = [SpaceTimePoint { t: s, z: y }, SpaceTimePoint { t, z: x }];
        multi_time_intensity_with(&pts, model, delta).map_or(f64::NAN, |v| v.value)
    };
    let floor = eps * eps * kernels::gauss(2.0 * s, 0.0)?;
    let (value, nodes) = quadrature::integrate_box(density, (z, z + eps), (z, z + eps), 1e-9, floor)?;
    if !value.is_finite() {
        return Err(QuadError::TensorNotConverged { delta: f64::NAN }.into());
    }
    Ok(EpsilonIntegral {
        value,
        nodes_per_axis: nodes,
    })
}
