//! Replica-ensemble estimators with standard errors, and z-score comparison
//! against predicted intensities.
//!
//! Every estimator reduces each replica to one number and reports the mean
//! and `sd/√R` over replicas. Multi-time products always take all factors
//! from the same replica. The `*_shifted` variants average each replica's
//! observable over a list of spatial translations first; by stationarity the
//! mean is unchanged and the replica values stay independent.

use thiserror::Error;

use crate::simulator::{Ensemble, ParticleState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no snapshot at time {0}")]
    MissingSnapshot(f64),
    #[error("need at least 2 replicas, got {0}")]
    TooFewReplicas(usize),
    #[error("invalid bins: {0}")]
    InvalidBins(String),
    #[error("an even number of spin locations is required, got {0}")]
    OddSpinCount(usize),
    #[error("shift list is empty")]
    NoShifts,
}

/// Streaming mean/variance (Welford), mergeable across disjoint ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Combines two disjoint samples (Chan et al. pairwise update).
    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        Moments { n, mean, m2 }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Space-time bin centres `(t, z)` sharing the width `ε`; bin `i` is
/// `[z_i - ε/2, z_i + ε/2]` at time `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec {
    centers: Vec<(f64, f64)>,
    width: f64,
}

impl BinSpec {
    pub fn new(centers: Vec<(f64, f64)>, width: f64) -> Result<Self, StatsError> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(StatsError::InvalidBins(format!("width must be positive, got {width}")));
        }
        for (i, a) in centers.iter().enumerate() {
            if centers[..i].contains(a) {
                return Err(StatsError::InvalidBins(format!("duplicate centre {a:?}")));
            }
        }
        Ok(Self { centers, width })
    }

    pub fn centers(&self) -> &[(f64, f64)] {
        &self.centers
    }

    pub fn width(&self) -> f64 {
        self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityEstimate {
    pub value: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub bins: Option<BinSpec>,
}

impl IntensityEstimate {
    fn from_moments(m: &Moments, bins: Option<BinSpec>) -> Self {
        Self {
            value: m.mean(),
            stderr: m.stderr(),
            replicas: m.count() as usize,
            bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub label: String,
    pub predicted: f64,
    pub estimate: IntensityEstimate,
    pub z_score: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Default z-score threshold.
pub const DEFAULT_THRESHOLD: f64 = 3.0;

/// z-score of `estimate` against `predicted`; with zero standard error only
/// an exact match passes.
pub fn compare(label: impl Into<String>, predicted: f64, estimate: &IntensityEstimate, threshold: f64) -> ComparisonReport {
    let diff = estimate.value - predicted;
    let z_score = if estimate.stderr > 0.0 {
        diff / estimate.stderr
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    ComparisonReport {
        label: label.into(),
        predicted,
        estimate: estimate.clone(),
        z_score,
        threshold,
        pass: z_score.abs() <= threshold,
    }
}

/// `(a - b) / √(se_a² + se_b²)` for two independent estimates.
pub fn joint_z(a: &IntensityEstimate, b: &IntensityEstimate) -> f64 {
    let se = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
    let d = a.value - b.value;
    if se > 0.0 {
        d / se
    } else if d == 0.0 {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

fn check_replicas(ens: &Ensemble) -> Result<(), StatsError> {
    if ens.len() < 2 {
        Err(StatsError::TooFewReplicas(ens.len()))
    } else {
        Ok(())
    }
}

fn index_of(ens: &Ensemble, t: f64) -> Result<usize, StatsError> {
    ens.time_index(t).ok_or(StatsError::MissingSnapshot(t))
}

/// Generic estimator: mean and standard error of `f(replica snapshots)`.
pub fn estimate_with(ens: &Ensemble, f: impl Fn(&[ParticleState]) -> f64) -> Result<IntensityEstimate, StatsError> {
    check_replicas(ens)?;
    let m: Moments = ens.replicas.iter().map(|r| f(r)).collect();
    Ok(IntensityEstimate::from_moments(&m, None))
}

/// Translations `s` with every location in `span = [lo, hi]` shifted by `s`
/// staying inside `[-L + pad, L - pad]`, spaced by `step`.
pub fn shifts_within(half_width: f64, (lo, hi): (f64, f64), pad: f64, step: f64) -> Vec<f64> {
    let first = -half_width + pad - lo;
    let last = half_width - pad - hi;
    if last < first || step <= 0.0 {
        return Vec::new();
    }
    let n = ((last - first) / step).floor() as usize;
    (0..=n).map(|k| first + k as f64 * step).collect()
}

/// `ε^{-n} E[∏ N_{t_i}(bin_i)]`.
pub fn estimate_product_intensity(ens: &Ensemble, bins: &BinSpec) -> Result<IntensityEstimate, StatsError> {
    estimate_product_intensity_shifted(ens, bins, &[0.0])
}

/// [`estimate_product_intensity`] with each replica averaged over translations.
pub fn estimate_product_intensity_shifted(
    ens: &Ensemble,
    bins: &BinSpec,
    shifts: &[f64],
) -> Result<IntensityEstimate, StatsError> {
    if shifts.is_empty() {
        return Err(StatsError::NoShifts);
    }
    let idx: Vec<usize> = bins
        .centers
        .iter()
        .map(|&(t, _)| index_of(ens, t))
        .collect::<Result<_, _>>()?;
    let half = bins.width / 2.0;
    let norm = bins.width.powi(bins.centers.len() as i32);
    let mut est = estimate_with(ens, |snaps| {
        let total: f64 = shifts
            .iter()
            .map(|&s| {
                bins.centers
                    .iter()
                    .zip(&idx)
                    .map(|(&(_, z), &k)| snaps[k].count_in(z + s - half, z + s + half) as f64)
                    .product::<f64>()
            })
            .sum();
        total / (shifts.len() as f64 * norm)
    })?;
    est.bins = Some(bins.clone());
    Ok(est)
}

fn check_even(ys: &[f64]) -> Result<(), StatsError> {
    if ys.len() % 2 == 1 {
        Err(StatsError::OddSpinCount(ys.len()))
    } else {
        Ok(())
    }
}

/// `E[∏ S_t(y_j)]`.
pub fn estimate_spin_product(ens: &Ensemble, t: f64, ys: &[f64]) -> Result<IntensityEstimate, StatsError> {
    estimate_mixed_shifted(ens, t, ys, None, &[0.0])
}

/// `E[∏ S_t(y_j + s)]` averaged over translations `s`.
pub fn estimate_spin_product_shifted(
    ens: &Ensemble,
    t: f64,
    ys: &[f64],
    shifts: &[f64],
) -> Result<IntensityEstimate, StatsError> {
    estimate_mixed_shifted(ens, t, ys, None, shifts)
}

/// `ε^{-n} E[∏ N_{t_i}(bin_i) ∏ S_t(y_j)]`, averaged over translations.
/// The spin product uses interval parities `(-1)^{N(y_1,y_2)+N(y_3,y_4)+…}`,
/// which equals the product of single spins and does not depend on where
/// the spin origin sits.
pub fn estimate_mixed_shifted(
    ens: &Ensemble,
    t: f64,
    ys: &[f64],
    bins: Option<&BinSpec>,
    shifts: &[f64],
) -> Result<IntensityEstimate, StatsError> {
    check_even(ys)?;
    if shifts.is_empty() {
        return Err(StatsError::NoShifts);
    }
    let k_spin = index_of(ens, t)?;
    let (centers, width): (&[(f64, f64)], f64) = match bins {
        Some(b) => (&b.centers, b.width),
        None => (&[], 1.0),
    };
    let idx: Vec<usize> = centers.iter().map(|&(tt, _)| index_of(ens, tt)).collect::<Result<_, _>>()?;
    let half = width / 2.0;
    let norm = width.powi(centers.len() as i32);
    let mut est = estimate_with(ens, |snaps| {
        let total: f64 = shifts
            .iter()
            .map(|&s| {
                let odd: usize = ys
                    .chunks(2)
                    .map(|p| snaps[k_spin].count_open(p[0] + s, p[1] + s))
                    .sum();
                let spin = if odd.is_multiple_of(2) { 1.0 } else { -1.0 };
                let counts: f64 = centers
                    .iter()
                    .zip(&idx)
                    .map(|(&(_, z), &k)| snaps[k].count_in(z + s - half, z + s + half) as f64)
                    .product();
                spin * counts
            })
            .sum();
        total / (shifts.len() as f64 * norm)
    })?;
    est.bins = bins.cloned();
    Ok(est)
}

/// `P(N_t([a_i, b_i]) = 0 for all i)`.
pub fn estimate_empty_intervals(
    ens: &Ensemble,
    t: f64,
    intervals: &[(f64, f64)],
) -> Result<IntensityEstimate, StatsError> {
    estimate_empty_intervals_shifted(ens, t, intervals, &[0.0])
}

pub fn estimate_empty_intervals_shifted(
    ens: &Ensemble,
    t: f64,
    intervals: &[(f64, f64)],
    shifts: &[f64],
) -> Result<IntensityEstimate, StatsError> {
    if shifts.is_empty() {
        return Err(StatsError::NoShifts);
    }
    let k = index_of(ens, t)?;
    estimate_with(ens, |snaps| {
        let hits = shifts
            .iter()
            .filter(|&&s| intervals.iter().all(|&(a, b)| snaps[k].is_empty_on(a + s, b + s)))
            .count();
        hits as f64 / shifts.len() as f64
    })
}

/// `E[N_t([a, b])^k]`, averaged over translations.
pub fn estimate_count_moment(
    ens: &Ensemble,
    t: f64,
    (a, b): (f64, f64),
    k: i32,
    shifts: &[f64],
) -> Result<IntensityEstimate, StatsError> {
    if shifts.is_empty() {
        return Err(StatsError::NoShifts);
    }
    let idx = index_of(ens, t)?;
    estimate_with(ens, |snaps| {
        shifts
            .iter()
            .map(|&s| (snaps[idx].count_in(a + s, b + s) as f64).powi(k))
            .sum::<f64>()
            / shifts.len() as f64
    })
}

/// Density over the whole window `[-L, L]` at time `t`.
pub fn estimate_window_density(ens: &Ensemble, t: f64) -> Result<IntensityEstimate, StatsError> {
    let bins = BinSpec::new(vec![(t, 0.0)], 2.0 * ens.half_width)?;
    estimate_product_intensity(ens, &bins)
}
