//! The robust consensus recursion
//!
//! ```text
//! x_i(t+1) = x_i(t) - alpha(t) * sum_{j in N_i} f( h(x_i(t)) - h(x_j(t)) - n_ij(t) )
//! ```
//!
//! with a fresh noise draw for every directed reception `i <- j` at every
//! iteration, and `alpha(t) = a / (t + 1)`.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::maps::{ReceiveMap, TransmitMap};
use crate::noise::NoiseModel;
use crate::rng::TrialStream;

/// How initial measurements `x_i(0) = theta + eta_i` are produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingConfig {
    pub theta: f64,
    pub sensing_noise: NoiseModel,
    pub fixed_initials: Option<Vec<f64>>,
}

impl SensingConfig {
    pub fn exact(theta: f64) -> Self {
        Self { theta, sensing_noise: NoiseModel::Zero, fixed_initials: None }
    }

    pub fn fixed(values: Vec<f64>) -> Self {
        Self { theta: 0.0, sensing_noise: NoiseModel::Zero, fixed_initials: Some(values) }
    }
}

/// Initial state and its sample mean `x_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub values: Vec<f64>,
    pub mean: f64,
}

pub fn initial_state<R: Rng + ?Sized>(cfg: &SensingConfig, n: usize, rng: &mut R) -> Result<InitialState> {
    let values = match &cfg.fixed_initials {
        Some(v) if v.len() != n => {
            return Err(Error::param(format!("fixed initial state has length {}, expected {n}", v.len())))
        }
        Some(v) => v.clone(),
        None => {
            cfg.sensing_noise.validate()?;
            (0..n).map(|_| cfg.theta + cfg.sensing_noise.sample(rng)).collect()
        }
    };
    let mean = mean(&values);
    Ok(InitialState { values, mean })
}

/// Decreasing gains `alpha(t) = a / (t + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub gain: f64,
}

impl StepSchedule {
    pub fn new(gain: f64) -> Result<Self> {
        if gain > 0.0 && gain.is_finite() {
            Ok(Self { gain })
        } else {
            Err(Error::param(format!("step gain must be positive, got {gain}")))
        }
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.gain / (t as f64 + 1.0)
    }

    /// `sum_{t >= 0} alpha(t)^2 = a^2 pi^2 / 6`.
    pub fn sum_of_squares(&self) -> f64 {
        self.gain * self.gain * PI * PI / 6.0
    }
}

/// Graph plus transmit map, receive map and channel noise.
#[derive(Debug, Clone, Copy)]
pub struct RcSystem<'g> {
    pub graph: &'g Graph,
    pub h: TransmitMap,
    pub f: ReceiveMap,
    pub noise: NoiseModel,
}

impl<'g> RcSystem<'g> {
    pub fn new(graph: &'g Graph, h: TransmitMap, f: ReceiveMap, noise: NoiseModel) -> Result<Self> {
        h.validate()?;
        f.validate()?;
        noise.validate()?;
        Ok(Self { graph, h, f, noise })
    }

    /// Number of noise draws consumed per iteration.
    pub fn draws_per_step(&self) -> usize {
        self.graph.directed_edge_count()
    }
}

/// One iteration with externally supplied channel noise.
///
/// `noise[k]` is the draw for directed slot `k`; see
/// [`crate::graph::Topology::slot_offset`]. `h_buf` is scratch space of
/// length `N`.
pub fn rc_step_with_noise(
    sys: &RcSystem<'_>,
    x: &[f64],
    noise: &[f64],
    alpha: f64,
    h_buf: &mut [f64],
    out: &mut [f64],
) {
    let g = sys.graph;
    debug_assert_eq!(noise.len(), g.directed_edge_count());
    for (hv, &xv) in h_buf.iter_mut().zip(x) {
        *hv = sys.h.eval(xv);
    }
    for i in 0..g.node_count() {
        let base = g.slot_offset(i);
        let hi = h_buf[i];
        let mut acc = 0.0;
        for (k, &j) in g.neighbors(i).iter().enumerate() {
            acc += sys.f.eval(hi - h_buf[j] - noise[base + k]);
        }
        out[i] = x[i] - alpha * acc;
    }
}

/// One iteration drawing fresh noise from `rng`.
pub fn rc_step<R: Rng + ?Sized>(sys: &RcSystem<'_>, x: &[f64], alpha: f64, rng: &mut R) -> Vec<f64> {
    let n = sys.graph.node_count();
    let mut noise = vec![0.0; sys.draws_per_step()];
    sys.noise.fill(rng, &mut noise);
    let mut h_buf = vec![0.0; n];
    let mut out = vec![0.0; n];
    rc_step_with_noise(sys, x, &noise, alpha, &mut h_buf, &mut out);
    out
}

/// Which iterations a trial records.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointPlan {
    /// Every iteration.
    Every,
    /// Every iteration below 100, then about 40 per decade.
    Dense,
    /// Exactly these iterations (0 is always added).
    At(Vec<usize>),
}

impl CheckpointPlan {
    pub fn times(&self, t_max: usize) -> Vec<usize> {
        let mut ts: Vec<usize> = match self {
            CheckpointPlan::Every => (0..=t_max).collect(),
            CheckpointPlan::Dense => {
                let mut v: Vec<usize> = (0..=t_max.min(99)).collect();
                let mut k = 0;
                loop {
                    let t = (100.0 * 10f64.powf(k as f64 / 40.0)).round() as usize;
                    if t > t_max {
                        break;
                    }
                    v.push(t);
                    k += 1;
                }
                v.push(t_max);
                v
            }
            CheckpointPlan::At(list) => {
                let mut v = vec![0, t_max];
                v.extend(list.iter().copied().filter(|&t| t <= t_max));
                v
            }
        };
        ts.sort_unstable();
        ts.dedup();
        ts
    }
}

/// Recorded states of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrajectory {
    /// `(t, X(t))` for every recorded iteration, strictly increasing in `t`.
    pub checkpoints: Vec<(usize, Vec<f64>)>,
    /// `||X(t) - x_bar(t) 1||` at each checkpoint.
    pub dispersion: Vec<f64>,
    /// `x_bar(t)` at each checkpoint.
    pub running_mean: Vec<f64>,
    /// Sample mean of the initial state.
    pub initial_mean: f64,
    /// `x_bar(T_max)`, the estimate of this trial's consensus value.
    pub theta_hat: f64,
    pub trial: usize,
    pub seed: u64,
}

impl TrialTrajectory {
    pub fn final_dispersion(&self) -> f64 {
        *self.dispersion.last().expect("at least the initial checkpoint")
    }

    pub fn state_at(&self, t: usize) -> Option<&[f64]> {
        self.checkpoints
            .binary_search_by_key(&t, |(s, _)| *s)
            .ok()
            .map(|k| self.checkpoints[k].1.as_slice())
    }
}

/// Runs `T_max` iterations from `initial`, consuming channel noise from `stream`.
pub fn run_trial(
    sys: &RcSystem<'_>,
    schedule: StepSchedule,
    initial: &[f64],
    t_max: usize,
    plan: &CheckpointPlan,
    stream: &mut TrialStream,
) -> Result<TrialTrajectory> {
    let n = sys.graph.node_count();
    if t_max == 0 {
        return Err(Error::param("T_max must be at least 1"));
    }
    if initial.len() != n {
        return Err(Error::param(format!("initial state has length {}, expected {n}", initial.len())));
    }
    let times = plan.times(t_max);
    let mut next_cp = 0;

    let mut x = initial.to_vec();
    let mut next = vec![0.0; n];
    let mut h_buf = vec![0.0; n];
    let mut noise = vec![0.0; sys.draws_per_step()];

    let mut checkpoints = Vec::with_capacity(times.len());
    let mut dispersion = Vec::with_capacity(times.len());
    let mut running_mean = Vec::with_capacity(times.len());
    let mut record = |t: usize, x: &[f64]| {
        let m = mean(x);
        dispersion.push(dispersion_about(x, m));
        running_mean.push(m);
        checkpoints.push((t, x.to_vec()));
    };

    if times.first() == Some(&0) {
        record(0, &x);
        next_cp = 1;
    }
    for t in 0..t_max {
        sys.noise.fill(&mut stream.rng, &mut noise);
        rc_step_with_noise(sys, &x, &noise, schedule.alpha(t), &mut h_buf, &mut next);
        std::mem::swap(&mut x, &mut next);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite state after iteration {t}")));
        }
        if next_cp < times.len() && times[next_cp] == t + 1 {
            record(t + 1, &x);
            next_cp += 1;
        }
    }
    Ok(TrialTrajectory {
        checkpoints,
        dispersion,
        running_mean,
        initial_mean: mean(initial),
        theta_hat: mean(&x),
        trial: stream.trial,
        seed: stream.seed,
    })
}

/// Outcome of [`mean_preservation_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeanPreservation {
    /// `v(t) = x_bar(t) - x_bar(t+1)` for each recorded step.
    pub increments: Vec<f64>,
    pub max_abs_increment: f64,
    /// Steps whose increment exceeds the applicable bound.
    pub violations: Vec<usize>,
    pub holds: bool,
}

/// Tolerance on `|x_bar(t+1) - x_bar(t)|` for noise-free runs.
pub const MEAN_CONSERVATION_TOL: f64 = 1e-12;

/// Checks the running mean of a densely recorded trajectory.
///
/// Noise-free runs must conserve `x_bar` to [`MEAN_CONSERVATION_TOL`]. Noisy
/// runs are checked against `|v(t)| <= 2 alpha(t) d_max F_max` with
/// `F_max = sup |f|`.
pub fn mean_preservation_check(
    trajectory: &TrialTrajectory,
    schedule: StepSchedule,
    sys: &RcSystem<'_>,
    noise_free: bool,
) -> Result<MeanPreservation> {
    let ts: Vec<usize> = trajectory.checkpoints.iter().map(|(t, _)| *t).collect();
    if ts.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Precondition(
            "mean preservation check needs a checkpoint at every iteration".into(),
        ));
    }
    let d_max = sys.graph.max_degree() as f64;
    let f_max = sys.f.bound();
    let mut increments = Vec::with_capacity(ts.len().saturating_sub(1));
    let mut violations = Vec::new();
    for (k, w) in trajectory.running_mean.windows(2).enumerate() {
        let v = w[0] - w[1];
        let bound = if noise_free {
            MEAN_CONSERVATION_TOL
        } else {
            2.0 * schedule.alpha(ts[k]) * d_max * f_max
        };
        if v.abs() > bound {
            violations.push(ts[k]);
        }
        increments.push(v);
    }
    let max_abs_increment = increments.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(MeanPreservation {
        holds: violations.is_empty(),
        increments,
        max_abs_increment,
        violations,
    })
}

/// Compensated mean.
pub fn mean(x: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in x {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    (sum + comp) / x.len() as f64
}

/// `||x - m 1||`.
pub fn dispersion_about(x: &[f64], m: f64) -> f64 {
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>().sqrt()
}
