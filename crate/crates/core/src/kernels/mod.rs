//! Closed-form kernels for annihilating (ABM) and coalescing (CBM) Brownian
//! motions under the maximal entrance law.
//!
//! The single-time kernel `K_t` is a 2×2 matrix function of the separation
//! `z`. The extended space-time kernel `K(t,x;s,y)` heat-propagates `K_s`
//! over the time gap `t - s` and adds a singular same-particle term
//! proportional to `g_{t-s}` in the `12` entry. With `z = y - x` and `t > s`
//! the propagated entries are
//!
//! ```text
//! K11 = g'_{s+t}(z)
//! K12 = g_{s+t}(z) - w g_{t-s}(z)
//! K21 = -g_{s+t}(z)
//! K22 = Φ_{t-s}(z) - Φ_{t+s}(z)
//! ```
//!
//! which follow from `K12_s = g_{2s}`, `K11_s = g'_{2s}` and
//! `d/dz K22_s = δ - g_{2s}` together with `G_a g_b = g_{a+b}`. Every entry
//! is certified against [`propagated_block_quadrature`], which performs the
//! convolution numerically. CBM kernels are twice the ABM kernels; the
//! weight `w` of the singular term is set by [`DeltaWeight`].

mod special;

pub use special::{cdf_difference, erf_f, gauss, gauss_cdf, gauss_dz, gauss_sf, sgn, ErfF};

use thiserror::Error;

use crate::quadrature::{self, QuadError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("Gaussian variance must be positive and finite, got {0}")]
    NonPositiveVariance(f64),
    #[error("time must be positive and finite, got {0}")]
    NonPositiveTime(f64),
    #[error("position must be finite, got {0}")]
    NonFinitePosition(f64),
    #[error("propagated block needs t > s, got t={t}, s={s}")]
    TimeOrder { t: f64, s: f64 },
    #[error("intensity time {t_point} exceeds spin time {t_spin}")]
    PointAfterSpins { t_point: f64, t_spin: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Abm,
    Cbm,
}

impl ModelKind {
    /// Overall kernel multiplier: 1 for ABM, 2 for CBM.
    pub fn scale(self) -> f64 {
        match self {
            ModelKind::Abm => 1.0,
            ModelKind::Cbm => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Abm => "abm",
            ModelKind::Cbm => "cbm",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "abm" => Ok(ModelKind::Abm),
            "cbm" => Ok(ModelKind::Cbm),
            other => Err(format!("unknown model '{other}' (expected abm or cbm)")),
        }
    }
}

/// Weight of the singular `g_{t-s}` term in the `12` entry at distinct times.
///
/// Both weights keep the CBM kernel exactly twice the ABM kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaWeight {
    /// `-2 g_{t-s}` in the ABM kernel.
    Literal,
    /// `-g_{t-s}` in the ABM kernel. The singular part of the ABM two-time
    /// intensity is then `ρ_s(x) g_{t-s}(y-x)`, the density of the same
    /// particle seen again after `t - s`. Agrees with simulated ABM.
    ///
    /// Simulated CBM two-time intensities at small separation match neither
    /// weight, so CBM values at distinct times are unconfirmed.
    #[default]
    SameParticle,
}

impl DeltaWeight {
    /// Absolute coefficient of `g_{t-s}` in the final (already model-scaled) `12` entry.
    pub fn coefficient(self, model: ModelKind) -> f64 {
        match self {
            DeltaWeight::Literal => 2.0 * model.scale(),
            DeltaWeight::SameParticle => model.scale(),
        }
    }
}

/// A space-time location `(t, z)` with `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub z: f64,
}

impl SpaceTimePoint {
    pub fn new(t: f64, z: f64) -> Result<Self, KernelError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(KernelError::NonPositiveTime(t));
        }
        if !z.is_finite() {
            return Err(KernelError::NonFinitePosition(z));
        }
        Ok(Self { t, z })
    }
}

/// A 2×2 kernel block, indexed `0`/`1` for the superscripts `1`/`2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block(pub [[f64; 2]; 2]);

impl Block {
    pub fn k11(&self) -> f64 {
        self.0[0][0]
    }
    pub fn k12(&self) -> f64 {
        self.0[0][1]
    }
    pub fn k21(&self) -> f64 {
        self.0[1][0]
    }
    pub fn k22(&self) -> f64 {
        self.0[1][1]
    }

    pub fn scaled(self, c: f64) -> Self {
        let m = self.0;
        Block([[c * m[0][0], c * m[0][1]], [c * m[1][0], c * m[1][1]]])
    }

    /// `-Bᵀ`: the block seen from the other argument order.
    pub fn neg_transpose(self) -> Self {
        let m = self.0;
        Block([[-m[0][0], -m[1][0]], [-m[0][1], -m[1][1]]])
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.k11(), self.k12(), self.k21(), self.k22()]
    }

    pub fn max_abs_diff(&self, other: &Block) -> f64 {
        self.entries()
            .iter()
            .zip(other.entries())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One entry of the mixed kernel used for spin/intensity correlations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelBlock {
    B2x2(Block),
    R1x2([f64; 2]),
    C2x1([f64; 2]),
    Scalar(f64),
}

fn check_time(t: f64) -> Result<(), KernelError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(KernelError::NonPositiveTime(t))
    }
}

/// Single-time kernel `K_t(z)`, doubled for CBM. Uses `sgn(0) = 0`.
pub fn equal_time_block(t: f64, z: f64, model: ModelKind) -> Result<Block, KernelError> {
    check_time(t)?;
    let rt = t.sqrt();
    let f = erf_f(z / rt);
    let k22 = sgn(z) * erf_f(z.abs() / rt).value;
    let b = Block([[-f.d2 / t, -f.d1 / rt], [f.d1 / rt, k22]]);
    Ok(b.scaled(model.scale()))
}

/// `K^{22}_t(0+)`: the one-sided limit of the equal-time `22` entry, `F(0) = 1/2`.
pub fn equal_time_k22_right_limit(model: ModelKind) -> f64 {
    0.5 * model.scale()
}

/// Heat-propagated block `K(t,x;s,y)` for `t > s`, `z = y - x`, with the
/// literal singular weight.
pub fn propagated_block(t: f64, s: f64, z: f64, model: ModelKind) -> Result<Block, KernelError> {
    propagated_block_weighted(t, s, z, model, DeltaWeight::Literal)
}

/// [`propagated_block`] with an explicit choice of singular weight.
pub fn propagated_block_weighted(
    t: f64,
    s: f64,
    z: f64,
    model: ModelKind,
    delta: DeltaWeight,
) -> Result<Block, KernelError> {
    let base = propagated_regular(t, s, z)?;
    let mut b = base.scaled(model.scale());
    b.0[0][1] -= delta.coefficient(model) * special::gauss_unchecked(t - s, z);
    Ok(b)
}

/// `G_{t-s} K_s(z)` without the singular term, ABM normalization.
fn propagated_regular(t: f64, s: f64, z: f64) -> Result<Block, KernelError> {
    check_time(s)?;
    check_time(t)?;
    if t <= s {
        return Err(KernelError::TimeOrder { t, s });
    }
    let g = gauss(s + t, z)?;
    Ok(Block([
        [gauss_dz(s + t, z)?, g],
        [-g, cdf_difference(t - s, t + s, z)?],
    ]))
}

/// Independent oracle for [`propagated_block`]: every entry of `G_{t-s}K_s`
/// by adaptive Gauss–Kronrod convolution over a window of ±12√t around `z`;
/// the literal singular term is added analytically.
pub fn propagated_block_quadrature(t: f64, s: f64, z: f64, model: ModelKind) -> Result<Block, KernelError> {
    propagated_block_quadrature_weighted(t, s, z, model, DeltaWeight::Literal)
}

pub fn propagated_block_quadrature_weighted(
    t: f64,
    s: f64,
    z: f64,
    model: ModelKind,
    delta: DeltaWeight,
) -> Result<Block, KernelError> {
    check_time(s)?;
    check_time(t)?;
    if t <= s {
        return Err(KernelError::TimeOrder { t, s });
    }
    let r = t - s;
    let half = 12.0 * t.sqrt();
    let (lo, hi) = (z - half, z + half);
    let mut m = [[0.0; 2]; 2];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            let integrand = |w: f64| {
                let k = equal_time_block(s, w, ModelKind::Abm).expect("s > 0 checked");
                special::gauss_unchecked(r, z - w) * k.0[i][j]
            };
            *slot = quadrature::integrate_with_breaks(integrand, lo, hi, &[0.0, z], 1e-10)?;
        }
    }
    let mut b = Block(m).scaled(model.scale());
    b.0[0][1] -= delta.coefficient(model) * gauss(r, z)?;
    Ok(b)
}

/// Extended kernel `K(p; q)` with the literal singular weight.
pub fn extended_block(p: SpaceTimePoint, q: SpaceTimePoint, model: ModelKind) -> Result<Block, KernelError> {
    extended_block_weighted(p, q, model, DeltaWeight::Literal)
}

/// Extended kernel `K(p; q)`: equal times use `K_t(q.z - p.z)`, later `p`
/// uses the propagated block, earlier `p` uses antisymmetry `K(p;q) = -K(q;p)ᵀ`.
pub fn extended_block_weighted(
    p: SpaceTimePoint,
    q: SpaceTimePoint,
    model: ModelKind,
    delta: DeltaWeight,
) -> Result<Block, KernelError> {
    if p.t == q.t {
        equal_time_block(p.t, q.z - p.z, model)
    } else if p.t > q.t {
        propagated_block_weighted(p.t, q.t, q.z - p.z, model, delta)
    } else {
        Ok(propagated_block_weighted(q.t, p.t, p.z - q.z, model, delta)?.neg_transpose())
    }
}

/// A row/column label of the mixed kernel: a spin location at the common
/// spin time, or an intensity point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentedPoint {
    Spin { y: f64 },
    Intensity(SpaceTimePoint),
}

/// Spin-versus-intensity row `(G_{t-t_j}K^{21}_{t_j}(z_j-y), G_{t-t_j}K^{22}_{t_j}(z_j-y))`.
fn spin_row(y: f64, p: SpaceTimePoint, t_spin: f64) -> Result<[f64; 2], KernelError> {
    if p.t > t_spin {
        return Err(KernelError::PointAfterSpins {
            t_point: p.t,
            t_spin,
        });
    }
    let b = if p.t == t_spin {
        equal_time_block(t_spin, p.z - y, ModelKind::Abm)?
    } else {
        propagated_regular(t_spin, p.t, p.z - y)?
    };
    Ok([b.k21(), b.k22()])
}

/// Entry of the mixed kernel between `a` and `b` (ABM normalization).
/// Spin–spin entries are `K^{22}_t(y_b - y_a)`; the caller places spins in
/// ascending order so that this is the upper-triangle value.
pub fn mixed_entry(
    a: AugmentedPoint,
    b: AugmentedPoint,
    t_spin: f64,
    delta: DeltaWeight,
) -> Result<KernelBlock, KernelError> {
    check_time(t_spin)?;
    match (a, b) {
        (AugmentedPoint::Intensity(p), AugmentedPoint::Intensity(q)) => {
            for x in [p, q] {
                if x.t > t_spin {
                    return Err(KernelError::PointAfterSpins {
                        t_point: x.t,
                        t_spin,
                    });
                }
            }
            Ok(KernelBlock::B2x2(extended_block_weighted(p, q, ModelKind::Abm, delta)?))
        }
        (AugmentedPoint::Spin { y }, AugmentedPoint::Intensity(p)) => Ok(KernelBlock::R1x2(spin_row(y, p, t_spin)?)),
        (AugmentedPoint::Intensity(p), AugmentedPoint::Spin { y }) => {
            let [u, v] = spin_row(y, p, t_spin)?;
            Ok(KernelBlock::C2x1([-u, -v]))
        }
        (AugmentedPoint::Spin { y: ya }, AugmentedPoint::Spin { y: yb }) => {
            Ok(KernelBlock::Scalar(equal_time_block(t_spin, yb - ya, ModelKind::Abm)?.k22()))
        }
    }
}

/// Which propagated entry a heat check looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entry {
    K11,
    K12,
    K21,
    K22,
}

impl Entry {
    pub const ALL: [Entry; 4] = [Entry::K11, Entry::K12, Entry::K21, Entry::K22];

    pub fn pick(self, b: &Block) -> f64 {
        match self {
            Entry::K11 => b.k11(),
            Entry::K12 => b.k12(),
            Entry::K21 => b.k21(),
            Entry::K22 => b.k22(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Entry::K11 => "K11",
            Entry::K12 => "K12",
            Entry::K21 => "K21",
            Entry::K22 => "K22",
        }
    }
}

/// `|∂_t e - ½ ∂_zz e|` for a propagated entry `e(t, z)` at fixed `s`, by
/// central differences with steps `h_t` (time) and `h` (space).
pub fn entry_heat_residual(
    entry: Entry,
    t: f64,
    s: f64,
    z: f64,
    h: f64,
    h_t: f64,
    model: ModelKind,
) -> Result<f64, KernelError> {
    let e = |tt: f64, zz: f64| propagated_block(tt, s, zz, model).map(|b| entry.pick(&b));
    let dt = (e(t + h_t, z)? - e(t - h_t, z)?) / (2.0 * h_t);
    let dzz = (e(t, z + h)? - 2.0 * e(t, z)? + e(t, z - h)?) / (h * h);
    Ok((dt - 0.5 * dzz).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const ABM: ModelKind = ModelKind::Abm;
    const CBM: ModelKind = ModelKind::Cbm;

    fn pt(t: f64, z: f64) -> SpaceTimePoint {
        SpaceTimePoint::new(t, z).unwrap()
    }

    #[test]
    fn equal_time_at_origin() {
        let b = equal_time_block(1.0, 0.0, ABM).unwrap();
        assert!((b.k12() - (4.0 * PI).powf(-0.5)).abs() < 1e-15);
        assert!((b.k12() - 0.2820948).abs() < 1e-7);
        assert_eq!(b.k11(), 0.0);
        assert_eq!(b.k22(), 0.0);
        let c = equal_time_block(1.0, 0.0, CBM).unwrap();
        assert!((c.k12() - 2.0 * (4.0 * PI).powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn equal_time_sign_structure() {
        for t in [0.3, 1.0, 2.2] {
            for k in 1..=30 {
                let z = 0.2 * k as f64;
                let p = equal_time_block(t, z, ABM).unwrap();
                let m = equal_time_block(t, -z, ABM).unwrap();
                assert!((p.k21() + p.k12()).abs() < 1e-16);
                assert!((p.k11() + m.k11()).abs() < 1e-16);
                assert!((p.k22() + m.k22()).abs() < 1e-16);
                assert!((p.k12() - m.k12()).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn equal_time_matches_gaussian_identities() {
        for t in [0.5, 1.0, 2.0] {
            for z in [-2.0, -0.3, 0.4, 1.7] {
                let b = equal_time_block(t, z, ABM).unwrap();
                assert!((b.k12() - gauss(2.0 * t, z).unwrap()).abs() < 1e-15);
                assert!((b.k11() - gauss_dz(2.0 * t, z).unwrap()).abs() < 1e-15);
                let heaviside = if z > 0.0 { 1.0 } else { 0.0 };
                let k22 = heaviside - gauss_cdf(2.0 * t, z).unwrap();
                assert!((b.k22() - k22).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn equal_time_rejects_bad_time() {
        assert!(equal_time_block(0.0, 1.0, ABM).is_err());
        assert!(equal_time_block(-1.0, 1.0, ABM).is_err());
    }

    #[test]
    fn propagated_example_value() {
        let b = propagated_block(2.0, 1.0, 1.0, ABM).unwrap();
        let expected = gauss(3.0, 1.0).unwrap() - 2.0 * gauss(1.0, 1.0).unwrap();
        assert!((b.k12() - expected).abs() < 1e-15);
        assert!((b.k12() + 0.2890).abs() < 1e-4);
        let q = propagated_block_quadrature(2.0, 1.0, 1.0, ABM).unwrap();
        assert!((q.k12() - b.k12()).abs() < 1e-9);
    }

    #[test]
    fn propagated_k22_vanishes_at_origin() {
        for (t, s) in [(2.0, 1.0), (1.2, 0.1), (5.0, 4.99)] {
            assert_eq!(propagated_block(t, s, 0.0, ABM).unwrap().k22(), 0.0);
        }
        let q = propagated_block_quadrature(2.0, 1.0, 0.0, ABM).unwrap();
        assert!(q.k22().abs() < 1e-10);
    }

    #[test]
    fn propagated_matches_quadrature_on_grid() {
        for k in 0..=40 {
            let z = -5.0 + 0.25 * k as f64;
            let b = propagated_block(1.5, 1.0, z, ABM).unwrap();
            let q = propagated_block_quadrature(1.5, 1.0, z, ABM).unwrap();
            assert!(b.max_abs_diff(&q) < 1e-8, "z={z}: {b:?} vs {q:?}");
        }
    }

    #[test]
    fn propagated_near_coincident_times() {
        let b = propagated_block(1.01, 1.0, 2.0, ABM).unwrap();
        let q = propagated_block_quadrature(1.01, 1.0, 2.0, ABM).unwrap();
        assert!(b.max_abs_diff(&q) < 1e-8);
    }

    #[test]
    fn propagated_rejects_time_order() {
        assert!(matches!(
            propagated_block(1.0, 1.0, 0.0, ABM),
            Err(KernelError::TimeOrder { .. })
        ));
        assert!(propagated_block(0.5, 1.0, 0.0, ABM).is_err());
        assert!(propagated_block_quadrature(0.5, 1.0, 0.0, ABM).is_err());
    }

    #[test]
    fn extended_dispatch() {
        let e = extended_block(pt(1.0, 0.3), pt(1.0, 1.1), ABM).unwrap();
        assert_eq!(e, equal_time_block(1.0, 0.8, ABM).unwrap());
        let a = extended_block(pt(1.0, 0.0), pt(2.0, 1.0), ABM).unwrap();
        let b = extended_block(pt(2.0, 1.0), pt(1.0, 0.0), ABM).unwrap();
        assert_eq!(a.k11(), -b.k11());
        assert_eq!(a.k22(), -b.k22());
        assert_eq!(a.k12(), -b.k21());
        assert_eq!(a.k21(), -b.k12());
    }

    #[test]
    fn cbm_is_twice_abm() {
        let pts = [pt(0.5, -1.0), pt(1.0, 0.2), pt(2.0, 0.7), pt(1.0, 3.0)];
        for &p in &pts {
            for &q in &pts {
                for w in [DeltaWeight::Literal, DeltaWeight::SameParticle] {
                    let a = extended_block_weighted(p, q, ABM, w).unwrap();
                    let c = extended_block_weighted(p, q, CBM, w).unwrap();
                    for (x, y) in a.entries().iter().zip(c.entries()) {
                        assert_eq!(2.0 * x, y);
                    }
                }
            }
        }
    }

    #[test]
    fn same_particle_weight_only_changes_k12() {
        let lit = propagated_block(1.0, 0.5, 0.3, CBM).unwrap();
        let sp = propagated_block_weighted(1.0, 0.5, 0.3, CBM, DeltaWeight::SameParticle).unwrap();
        assert_eq!(lit.k11(), sp.k11());
        assert_eq!(lit.k21(), sp.k21());
        assert_eq!(lit.k22(), sp.k22());
        let g = gauss(0.5, 0.3).unwrap();
        assert!((sp.k12() - lit.k12() - 2.0 * g).abs() < 1e-15);
    }

    #[test]
    fn extended_decays() {
        for (t, s) in [(0.5, 0.5), (2.0, 0.5), (0.5, 2.0), (1.0, 1.7), (2.0, 2.0)] {
            for z in [-40.0, 40.0] {
                let b = extended_block(pt(t, 0.0), pt(s, z), ABM).unwrap();
                for v in b.entries() {
                    assert!(v.abs() < 1e-12, "t={t} s={s} z={z}: {b:?}");
                }
            }
        }
    }

    #[test]
    fn heat_equation_richardson() {
        for t in [1.5, 2.0] {
            for z in [-1.0, 0.5, 2.0] {
                for entry in Entry::ALL {
                    let r1 = entry_heat_residual(entry, t, 1.0, z, 1e-2, 1e-3, ABM).unwrap();
                    let r2 = entry_heat_residual(entry, t, 1.0, z, 5e-3, 5e-4, ABM).unwrap();
                    assert!(r1 < 1e-4, "{} t={t} z={z} r={r1}", entry.name());
                    let ratio = r1 / r2;
                    assert!((3.0..=5.0).contains(&ratio), "{} t={t} z={z} ratio={ratio}", entry.name());
                }
            }
        }
    }

    #[test]
    fn mixed_entries() {
        let d = DeltaWeight::SameParticle;
        let s = mixed_entry(AugmentedPoint::Spin { y: 0.0 }, AugmentedPoint::Spin { y: 1.0 }, 1.0, d).unwrap();
        match s {
            KernelBlock::Scalar(v) => {
                assert!((v - erf_f(1.0).value).abs() < 1e-15);
                assert!((v - 0.2397500).abs() < 1e-7);
            }
            other => panic!("{other:?}"),
        }
        let p = pt(1.0, 0.4);
        let row = mixed_entry(AugmentedPoint::Spin { y: -0.2 }, AugmentedPoint::Intensity(p), 1.0, d).unwrap();
        let col = mixed_entry(AugmentedPoint::Intensity(p), AugmentedPoint::Spin { y: -0.2 }, 1.0, d).unwrap();
        let k = equal_time_block(1.0, 0.6, ABM).unwrap();
        assert_eq!(row, KernelBlock::R1x2([k.k21(), k.k22()]));
        assert_eq!(col, KernelBlock::C2x1([-k.k21(), -k.k22()]));

        let p = pt(0.5, 0.4);
        let row = mixed_entry(AugmentedPoint::Spin { y: -0.2 }, AugmentedPoint::Intensity(p), 1.0, d).unwrap();
        let k = propagated_block(1.0, 0.5, 0.6, ABM).unwrap();
        assert_eq!(row, KernelBlock::R1x2([k.k21(), k.k22()]));

        let late = pt(1.5, 0.0);
        assert!(matches!(
            mixed_entry(AugmentedPoint::Spin { y: 0.0 }, AugmentedPoint::Intensity(late), 1.0, d),
            Err(KernelError::PointAfterSpins { .. })
        ));
    }
}
