//! Time-stepped Monte Carlo simulation of annihilating and coalescing
//! Brownian motions started from dense Poisson initial data.
//!
//! Each step moves every particle by an independent `N(0, dt)` increment.
//! Neighbouring particles (in pre-step order) collide if their order
//! swapped, and otherwise with the Brownian-bridge crossing probability
//! `exp(-d₀d₁/dt)` of their gap process (variance `2dt` per step), where `d₀`
//! and `d₁` are the gaps before and after the step. Collisions are resolved
//! in one left-to-right sweep: ABM pairs vanish, CBM pairs merge into one of
//! the two post-step positions chosen uniformly. Particles are simulated on
//! `[-L-M, L+M]` and removed when they leave it; measurements should only
//! use `[-L, L]`.
//!
//! Replica `r` of a run with master seed `seed` draws from the ChaCha8
//! stream `r` keyed by `seed`, so results do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::kernels::ModelKind;

/// Bridge exponents above this are treated as "no crossing" without drawing.
const BRIDGE_CUTOFF: f64 = 45.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> SimError {
    SimError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: ModelKind,
    /// Initial Poisson intensity per unit length.
    pub lambda: f64,
    /// Half-width `L` of the measurement window.
    pub half_width: f64,
    /// Margin `M` simulated beyond the window on each side.
    pub margin: f64,
    pub dt: f64,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
}

impl SimConfig {
    /// Config with the default margin `8√(max snapshot time)`.
    pub fn with_default_margin(
        model: ModelKind,
        lambda: f64,
        half_width: f64,
        dt: f64,
        snapshot_times: Vec<f64>,
        seed: u64,
    ) -> Self {
        let t_max = snapshot_times.iter().copied().fold(0.0, f64::max);
        Self {
            model,
            lambda,
            half_width,
            margin: 8.0 * t_max.sqrt(),
            dt,
            snapshot_times,
            seed,
        }
    }

    /// Checks the invariants, including the entrance-law heuristic
    /// `λ√t_min ≥ 10` that keeps Poisson data close to the maximal law.
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(invalid("half_width", format!("must be positive, got {}", self.half_width)));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(invalid("margin", format!("must be positive, got {}", self.margin)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be non-negative, got {}", self.lambda)));
        }
        let Some(&first) = self.snapshot_times.first() else {
            return Err(invalid("snapshot_times", "must not be empty"));
        };
        if self.snapshot_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("snapshot_times", "must be strictly increasing"));
        }
        if first < 10.0 * self.dt {
            return Err(invalid(
                "snapshot_times",
                format!("first snapshot {first} is below 10·dt = {}", 10.0 * self.dt),
            ));
        }
        if self.lambda * first.sqrt() < 10.0 {
            return Err(invalid(
                "lambda",
                format!("λ√t_min = {} < 10; initial data too sparse", self.lambda * first.sqrt()),
            ));
        }
        Ok(())
    }

    pub fn outer(&self) -> f64 {
        self.half_width + self.margin
    }

    /// RNG stream for one replica.
    pub fn replica_rng(&self, replica: u64) -> ChaCha8Rng {
        stream_rng(self.seed, replica)
    }
}

/// Independent ChaCha8 stream `stream` under key `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sorted particle positions at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub time: f64,
    pub positions: Vec<f64>,
}

impl ParticleState {
    pub fn new(time: f64, mut positions: Vec<f64>) -> Self {
        positions.sort_by(f64::total_cmp);
        Self { time, positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Number of particles in the closed interval `[a, b]`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        let lo = self.positions.partition_point(|&x| x < a);
        let hi = self.positions.partition_point(|&x| x <= b);
        hi.saturating_sub(lo)
    }

    /// Number of particles strictly between `a` and `b` (in either order).
    pub fn count_open(&self, a: f64, b: f64) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let lo = self.positions.partition_point(|&x| x <= a);
        let hi = self.positions.partition_point(|&x| x < b);
        hi.saturating_sub(lo)
    }

    /// `S(y) = (-1)^{N(0:y)}`, counting particles strictly between 0 and `y`.
    pub fn spin(&self, y: f64) -> i32 {
        if self.count_open(0.0, y).is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    /// `∏ S(y_j)`; for sorted pairs this is `(-1)^{N(y_1,y_2) + N(y_3,y_4) + …}`
    /// whenever no particle sits exactly on a `y_j`.
    pub fn spin_product(&self, ys: &[f64]) -> i32 {
        ys.iter().map(|&y| self.spin(y)).product()
    }

    /// Whether `[a, b]` holds no particle.
    pub fn is_empty_on(&self, a: f64, b: f64) -> bool {
        self.count_in(a, b) == 0
    }

    /// Keeps each particle independently with probability `p`.
    pub fn thin(&self, p: f64, rng: &mut impl Rng) -> ParticleState {
        let positions = self
            .positions
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() < p)
            .collect();
        ParticleState {
            time: self.time,
            positions,
        }
    }
}

/// Poisson(λ·|I|) uniform points on `I = [-L-M, L+M]` at time 0.
pub fn sample_initial(cfg: &SimConfig, rng: &mut impl Rng) -> ParticleState {
    let outer = cfg.outer();
    let mean = cfg.lambda * 2.0 * outer;
    let n = if mean > 0.0 {
        Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0)
    } else {
        0
    };
    let positions = (0..n).map(|_| rng.random_range(-outer..outer)).collect();
    ParticleState::new(0.0, positions)
}

/// Scratch buffers reused between steps.
#[derive(Default)]
struct Workspace {
    moved: Vec<f64>,
    out: Vec<f64>,
}

fn step(positions: &mut Vec<f64>, h: f64, model: ModelKind, outer: f64, rng: &mut impl Rng, ws: &mut Workspace) {
    let sd = h.sqrt();
    ws.moved.clear();
    ws.moved
        .extend(positions.iter().map(|&x| x + sd * rng.sample::<f64, _>(StandardNormal)));
    ws.out.clear();

    // (pre-step, post-step) position of the particle awaiting its right neighbour
    let mut current: Option<(f64, f64)> = None;
    for (&pre, &post) in positions.iter().zip(ws.moved.iter()) {
        let Some((cur_pre, cur_post)) = current else {
            current = Some((pre, post));
            continue;
        };
        let d1 = post - cur_post;
        let collided = if d1 <= 0.0 {
            true
        } else {
            let x = (pre - cur_pre) * d1 / h;
            x < BRIDGE_CUTOFF && rng.random::<f64>() < (-x).exp()
        };
        if !collided {
            ws.out.push(cur_post);
            current = Some((pre, post));
            continue;
        }
        current = match model {
            ModelKind::Abm => None,
            ModelKind::Cbm => {
                if rng.random::<bool>() {
                    Some((cur_pre, cur_post))
                } else {
                    Some((pre, post))
                }
            }
        };
    }
    if let Some((_, post)) = current {
        ws.out.push(post);
    }
    ws.out.retain(|&x| x >= -outer && x <= outer);
    if ws.out.windows(2).any(|w| w[1] < w[0]) {
        ws.out.sort_by(f64::total_cmp);
    }
    std::mem::swap(positions, &mut ws.out);
}

/// Advances `state` to `t_target` in steps of `dt` (the last one truncated).
pub fn evolve(state: ParticleState, t_target: f64, cfg: &SimConfig, rng: &mut impl Rng) -> ParticleState {
    let mut ws = Workspace::default();
    evolve_with(state, t_target, cfg, rng, &mut ws)
}

fn evolve_with(
    mut state: ParticleState,
    t_target: f64,
    cfg: &SimConfig,
    rng: &mut impl Rng,
    ws: &mut Workspace,
) -> ParticleState {
    let t0 = state.time;
    if t_target <= t0 {
        return state;
    }
    let steps = ((t_target - t0) / cfg.dt - 1e-9).ceil().max(1.0) as u64;
    let outer = cfg.outer();
    let mut t = t0;
    for k in 1..=steps {
        let next = if k == steps { t_target } else { t0 + k as f64 * cfg.dt };
        step(&mut state.positions, next - t, cfg.model, outer, rng, ws);
        t = next;
    }
    state.time = t_target;
    state
}

/// Runs one replica from fresh initial data and returns the snapshots.
pub fn run_replica(cfg: &SimConfig, replica: u64) -> Vec<ParticleState> {
    let mut rng = cfg.replica_rng(replica);
    let mut ws = Workspace::default();
    let mut state = sample_initial(cfg, &mut rng);
    let mut snaps = Vec::with_capacity(cfg.snapshot_times.len());
    for &t in &cfg.snapshot_times {
        state = evolve_with(state, t, cfg, &mut rng, &mut ws);
        snaps.push(state.clone());
    }
    snaps
}

/// Snapshots of many independent replicas at common times.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub model: ModelKind,
    pub times: Vec<f64>,
    /// `replicas[r][k]` is replica `r` at `times[k]`.
    pub replicas: Vec<Vec<ParticleState>>,
    /// Measurement window `[-L, L]`.
    pub half_width: f64,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.replicas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicas.is_empty()
    }

    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&x| (x - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    /// Independently thins every snapshot; replica `r` uses stream `r` of `seed`.
    pub fn thinned(&self, p: f64, seed: u64) -> Ensemble {
        let replicas = self
            .replicas
            .par_iter()
            .enumerate()
            .map(|(r, snaps)| {
                let mut rng = stream_rng(seed, r as u64);
                snaps.iter().map(|s| s.thin(p, &mut rng)).collect()
            })
            .collect();
        Ensemble {
            model: self.model,
            times: self.times.clone(),
            replicas,
            half_width: self.half_width,
        }
    }
}

/// Runs replicas `0..replicas` in parallel. Output is independent of thread count.
pub fn run_ensemble(cfg: &SimConfig, replicas: usize) -> Result<Ensemble, SimError> {
    cfg.validate()?;
    let reps = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let snaps = run_replica(cfg, r);
            // keep only the measurement window
            snaps
                .into_iter()
                .map(|s| {
                    let lo = s.positions.partition_point(|&x| x < -cfg.half_width);
                    let hi = s.positions.partition_point(|&x| x <= cfg.half_width);
                    ParticleState {
                        time: s.time,
                        positions: s.positions[lo..hi].to_vec(),
                    }
                })
                .collect()
        })
        .collect();
    Ok(Ensemble {
        model: cfg.model,
        times: cfg.snapshot_times.clone(),
        replicas: reps,
        half_width: cfg.half_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(model: ModelKind) -> SimConfig {
        SimConfig {
            model,
            lambda: 100.0,
            half_width: 20.0,
            margin: 30.0,
            dt: 1e-3,
            snapshot_times: vec![0.1],
            seed: 7,
        }
    }

    #[test]
    fn initial_count_is_poisson() {
        let c = cfg(ModelKind::Abm);
        let mut rng = c.replica_rng(0);
        let s = sample_initial(&c, &mut rng);
        let n = s.len() as f64;
        assert!((n - 10_000.0).abs() < 500.0, "{n}");
        assert!(s.positions.windows(2).all(|w| w[0] < w[1]));
        assert!(s.positions.iter().all(|x| x.abs() <= 50.0));
    }

    #[test]
    fn zero_intensity_is_empty() {
        let mut c = cfg(ModelKind::Abm);
        c.lambda = 0.0;
        let s = sample_initial(&c, &mut c.replica_rng(0));
        assert!(s.is_empty());
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let c = cfg(ModelKind::Cbm);
        assert_eq!(run_replica(&c, 3), run_replica(&c, 3));
        assert_ne!(run_replica(&c, 3), run_replica(&c, 4));
    }

    #[test]
    fn far_apart_particles_survive() {
        let c = cfg(ModelKind::Abm);
        let mut survived = 0;
        for r in 0..200 {
            let s = ParticleState::new(0.0, vec![-1.0, 1.0]);
            let out = evolve(s, c.dt, &c, &mut c.replica_rng(r));
            survived += usize::from(out.len() == 2);
        }
        assert_eq!(survived, 200);
    }

    #[test]
    fn coincident_particles_annihilate() {
        let c = cfg(ModelKind::Abm);
        for r in 0..200 {
            let s = ParticleState::new(0.0, vec![0.25, 0.25]);
            let out = evolve(s, c.dt, &c, &mut c.replica_rng(r));
            assert!(out.is_empty());
        }
        let c = cfg(ModelKind::Cbm);
        for r in 0..200 {
            let s = ParticleState::new(0.0, vec![0.25, 0.25]);
            let out = evolve(s, c.dt, &c, &mut c.replica_rng(r));
            assert_eq!(out.len(), 1);
        }
    }

    #[test]
    fn bridge_crossing_probability_matches_gap_process() {
        // Two particles at gap d: the meeting probability by time h is
        // P(min of a BM with variance 2 per unit time, started at d, hits 0) = erfc(d / (2√h)).
        let c = SimConfig {
            dt: 0.01,
            ..cfg(ModelKind::Abm)
        };
        let d = 0.15;
        let trials = 20_000;
        let mut met = 0;
        for r in 0..trials {
            let s = ParticleState::new(0.0, vec![0.0, d]);
            let out = evolve(s, c.dt, &c, &mut c.replica_rng(r));
            met += usize::from(out.is_empty());
        }
        let p = met as f64 / trials as f64;
        let expected = libm::erfc(d / (2.0 * c.dt.sqrt()));
        let se = (expected * (1.0 - expected) / trials as f64).sqrt();
        assert!((p - expected).abs() < 4.0 * se, "{p} vs {expected}");
    }

    #[test]
    fn counts_never_increase_and_order_is_strict() {
        for model in [ModelKind::Abm, ModelKind::Cbm] {
            let c = cfg(model);
            let mut rng = c.replica_rng(1);
            let mut s = sample_initial(&c, &mut rng);
            let mut prev = s.len();
            for k in 1..=20 {
                s = evolve(s, k as f64 * c.dt, &c, &mut rng);
                assert!(s.len() <= prev);
                assert!(s.positions.windows(2).all(|w| w[0] < w[1]));
                prev = s.len();
            }
        }
    }

    #[test]
    fn abm_parity_preserved_without_exits() {
        let c = SimConfig {
            margin: 1000.0,
            ..cfg(ModelKind::Abm)
        };
        let mut rng = c.replica_rng(2);
        let mut s = ParticleState::new(0.0, (0..301).map(|k| k as f64 * 0.01).collect());
        for k in 1..=50 {
            s = evolve(s, k as f64 * c.dt, &c, &mut rng);
            assert_eq!(s.len() % 2, 1);
        }
    }

    #[test]
    fn observables() {
        let empty = ParticleState::new(1.0, vec![]);
        for y in [-2.0, 0.0, 3.0] {
            assert_eq!(empty.spin(y), 1);
        }
        let one = ParticleState::new(1.0, vec![0.5]);
        assert_eq!(one.spin(1.0) * one.spin(0.2), -1);
        assert_eq!(one.spin_product(&[0.2, 1.0]), -1);
        let s = ParticleState::new(1.0, vec![-1.0, 0.0, 0.5, 2.0]);
        assert_eq!(s.count_in(0.0, 2.0), 3);
        assert_eq!(s.count_open(0.0, 2.0), 1);
        assert_eq!(s.count_in(0.6, 1.9), 0);
        assert!(s.is_empty_on(0.6, 1.9));
        assert!(!s.is_empty_on(-1.0, -1.0));
        // the particle at the origin is on neither side
        assert_eq!(s.spin_product(&[-2.0, 3.0]), -1);
    }

    #[test]
    fn empty_iff_zero_count() {
        let c = cfg(ModelKind::Cbm);
        let mut rng = c.replica_rng(9);
        for r in 0..50 {
            let s = run_replica(&c, r).pop().unwrap();
            for _ in 0..20 {
                let a = rng.random_range(-5.0..5.0);
                let b = a + rng.random_range(0.0..0.2);
                assert_eq!(s.is_empty_on(a, b), s.count_in(a, b) == 0);
            }
        }
    }

    #[test]
    fn thinning_extremes() {
        let s = ParticleState::new(1.0, vec![-1.0, 0.0, 0.5]);
        let mut rng = stream_rng(1, 0);
        assert_eq!(s.thin(1.0, &mut rng), s);
        assert!(s.thin(0.0, &mut rng).is_empty());
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(ModelKind::Abm);
        assert!(c.validate().is_ok());
        c.dt = -1.0;
        assert!(matches!(c.validate(), Err(SimError::InvalidConfig { field: "dt", .. })));
        let mut c = cfg(ModelKind::Abm);
        c.lambda = 10.0;
        assert!(matches!(c.validate(), Err(SimError::InvalidConfig { field: "lambda", .. })));
        let mut c = cfg(ModelKind::Abm);
        c.snapshot_times = vec![0.005];
        assert!(c.validate().is_err());
        c.snapshot_times = vec![0.5, 0.2];
        assert!(c.validate().is_err());
        let d = SimConfig::with_default_margin(ModelKind::Abm, 100.0, 20.0, 1e-4, vec![0.5, 4.0], 0);
        assert_eq!(d.margin, 16.0);
    }
}
