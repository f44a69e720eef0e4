//! Channels that switch in and out of service as independent two-state
//! Markov chains, and the switched closed loop `ẋ = (A + B·P(t)·K)x + B·P(t)·v`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::GainDesign;
use crate::error::{Error, Result};
use crate::lattice::ChannelSet;
use crate::lifting::Plant;
use crate::numerics;

/// Default integrator step.
pub const DEFAULT_DT: f64 = 1e-3;

/// Minimum number of RK4 substeps per constant-availability segment.
pub const MIN_SEGMENT_STEPS: usize = 4;

/// Two-state availability chain with generator `[[-δ, ε], [δ, -ε]]` acting
/// on `(p_unavailable, p_available)`.
///
/// An unavailable channel recovers at rate `δ`; an available one drops out
/// at rate `ε`. The stationary availability is `δ/(δ+ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarkovChannelModel {
    pub delta: f64,
    pub epsilon: f64,
}

impl MarkovChannelModel {
    pub fn new(delta: f64, epsilon: f64) -> Result<Self> {
        if !(delta > 0.0 && epsilon > 0.0) || !delta.is_finite() || !epsilon.is_finite() {
            return Err(Error::Domain(format!(
                "switching rates must be positive, got delta={delta} epsilon={epsilon}"
            )));
        }
        Ok(MarkovChannelModel { delta, epsilon })
    }

    /// Generator on `(p_u, p_a)`; columns sum to zero.
    pub fn generator(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            2,
            2,
            &[-self.delta, self.epsilon, self.delta, -self.epsilon],
        )
    }

    pub fn stationary_availability(&self) -> f64 {
        self.delta / (self.delta + self.epsilon)
    }

    fn exit_rate(&self, available: bool) -> f64 {
        if available {
            self.epsilon
        } else {
            self.delta
        }
    }
}

/// Channel states at `t = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialAvailability {
    #[default]
    AllAvailable,
    /// Each channel drawn from the stationary distribution.
    Stationary,
}

/// A constant-availability interval `[start, end)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSegment {
    pub start: f64,
    pub end: f64,
    pub active: ChannelSet,
}

/// Piecewise-constant channel availability on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelPath {
    m: usize,
    horizon: f64,
    segments: Vec<PathSegment>,
}

impl ChannelPath {
    /// Availability fixed at `active` for the whole horizon.
    pub fn constant(active: ChannelSet, horizon: f64) -> Result<Self> {
        Self::from_segments(vec![PathSegment {
            start: 0.0,
            end: horizon,
            active,
        }])
    }

    /// Segments must be contiguous, start at zero and have positive length.
    pub fn from_segments(segments: Vec<PathSegment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::Domain("channel path needs at least one segment".into()))?;
        let m = first.active.m();
        if first.start != 0.0 {
            return Err(Error::Domain("channel path must start at t = 0".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.end > s.start) {
                return Err(Error::Domain(format!(
                    "segment {i} has non-positive length"
                )));
            }
            if s.active.m() != m {
                return Err(Error::dim("channel path segment", m, s.active.m()));
            }
            if i > 0 && segments[i - 1].end != s.start {
                return Err(Error::Domain(format!(
                    "segment {i} does not abut its predecessor"
                )));
            }
        }
        let horizon = segments.last().expect("non-empty").end;
        Ok(ChannelPath {
            m,
            horizon,
            segments,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    /// Channels available at time `t` (right-continuous).
    pub fn active_at(&self, t: f64) -> &ChannelSet {
        let idx = self.segments.partition_point(|s| s.end <= t);
        &self.segments[idx.min(self.segments.len() - 1)].active
    }

    /// Fraction of the horizon during which `channel` (zero-based) is up.
    pub fn availability_fraction(&self, channel: usize) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.active.contains(channel))
            .map(|s| s.end - s.start)
            .sum::<f64>()
            / self.horizon
    }

    pub fn shortest_segment(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.end - s.start)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Samples `m` i.i.d. channels from `model`, all available at `t = 0`.
pub fn sample_availability(
    model: &MarkovChannelModel,
    m: usize,
    horizon: f64,
    seed: u64,
) -> Result<ChannelPath> {
    sample_availability_with(
        &vec![*model; m],
        horizon,
        seed,
        InitialAvailability::AllAvailable,
    )
}

/// Samples one independent chain per entry of `models` by exponential
/// holding times. Channel `j` draws from its own ChaCha stream `j` of
/// `seed`, so the result is deterministic and each channel's path does not
/// depend on how many other channels there are.
pub fn sample_availability_with(
    models: &[MarkovChannelModel],
    horizon: f64,
    seed: u64,
    initial: InitialAvailability,
) -> Result<ChannelPath> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Domain(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let m = models.len();
    let mut state = vec![true; m];
    // (time, channel)
    let mut events: Vec<(f64, usize)> = Vec::new();
    for (j, model) in models.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let mut up = match initial {
            InitialAvailability::AllAvailable => true,
            InitialAvailability::Stationary => rng.random_bool(model.stationary_availability()),
        };
        state[j] = up;
        let mut t = 0.0;
        loop {
            let hold = Exp::new(model.exit_rate(up))
                .map_err(|e| Error::Domain(format!("bad switching rate: {e}")))?
                .sample(&mut rng);
            t += hold;
            if t >= horizon {
                break;
            }
            events.push((t, j));
            up = !up;
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut segments = Vec::with_capacity(events.len() + 1);
    let mut start = 0.0;
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        if t > start {
            segments.push(PathSegment {
                start,
                end: t,
                active: ChannelSet::from_mask(&state),
            });
            start = t;
        }
        while i < events.len() && events[i].0 == t {
            state[events[i].1] ^= true;
            i += 1;
        }
    }
    segments.push(PathSegment {
        start,
        end: horizon,
        active: ChannelSet::from_mask(&state),
    });
    ChannelPath::from_segments(segments)
}

/// Sampled solution of the switched closed loop.
///
/// Sample `i` holds the state at `times[i]`, the channels in force from
/// `times[i]` onward, and the applied input `P(Kx + v)` there.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub active: Vec<ChannelSet>,
    pub inputs: Vec<DVector<f64>>,
    /// Segments that were shorter than `MIN_SEGMENT_STEPS · dt` and got a
    /// finer step.
    pub refined_segments: usize,
}

impl Trajectory {
    pub fn norms(&self) -> Vec<f64> {
        self.states.iter().map(|x| x.norm()).collect()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }

    /// `‖x(T)‖ / ‖x(0)‖`.
    pub fn contraction_ratio(&self) -> f64 {
        self.final_state().norm() / self.states[0].norm()
    }

    /// Whether the state norm grows over any sampling step.
    pub fn has_norm_increase(&self) -> bool {
        self.norms().windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12))
    }

    /// CSV with columns `t, x1..xn, active` (active as a 0/1 channel mask).
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |x| x.len());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.push("active".into());
        w.write_record(&header).expect("in-memory write");
        for ((t, x), a) in self.times.iter().zip(&self.states).zip(&self.active) {
            let mut row = vec![crate::io::fmt_f64(*t)];
            row.extend(x.iter().map(|v| crate::io::fmt_f64(*v)));
            row.push(a.mask_string());
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }
}

/// Integrates the switched loop with fixed-step RK4, splitting exactly at
/// every switch so no step straddles a change of channel set.
pub fn simulate_switched(
    plant: &Plant,
    design: &GainDesign,
    path: &ChannelPath,
    x0: &DVector<f64>,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    if path.m() != plant.m() {
        return Err(Error::dim(
            "simulate_switched channel path",
            plant.m(),
            path.m(),
        ));
    }
    if x0.len() != plant.n() {
        return Err(Error::dim("simulate_switched x0", plant.n(), x0.len()));
    }
    plant.check_lift_shape("simulate_switched gain", &design.k)?;

    let input = |set: &ChannelSet, x: &DVector<f64>| {
        let mut u = &design.k * x + &design.v;
        for j in 0..u.len() {
            if !set.contains(j) {
                u[j] = 0.0;
            }
        }
        u
    };

    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.clone()],
        active: vec![path.segments()[0].active.clone()],
        inputs: vec![input(&path.segments()[0].active, x0)],
        refined_segments: 0,
    };
    let mut x = x0.clone();
    let segments = path.segments();
    for (s, seg) in segments.iter().enumerate() {
        let bp = numerics::restrict_columns(plant.b(), &seg.active);
        let closed = plant.a() + &bp * &design.k;
        let offset = &bp * &design.v;
        let len = seg.end - seg.start;
        let mut steps = (len / dt).ceil() as usize;
        if steps < MIN_SEGMENT_STEPS {
            steps = MIN_SEGMENT_STEPS;
            traj.refined_segments += 1;
        }
        let h = len / steps as f64;
        let next_active = segments.get(s + 1).map_or(&seg.active, |n| &n.active);
        for i in 1..=steps {
            x = numerics::rk4_step(|y| &closed * y + &offset, &x, h);
            let (t, active) = if i == steps {
                (seg.end, next_active)
            } else {
                (seg.start + h * i as f64, &seg.active)
            };
            traj.times.push(t);
            traj.inputs.push(input(active, &x));
            traj.states.push(x.clone());
            traj.active.push(active.clone());
        }
    }
    Ok(traj)
}

/// Per-seed outcome of a Monte Carlo batch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchRun {
    pub seed: u64,
    pub final_norm: f64,
    pub contraction_ratio: f64,
    pub transient_increase: bool,
}

/// Runs one sampled path and simulation per seed, in parallel. Results come
/// back in the order of `seeds`.
#[allow(clippy::too_many_arguments)]
pub fn run_batch(
    plant: &Plant,
    design: &GainDesign,
    model: &MarkovChannelModel,
    x0: &DVector<f64>,
    horizon: f64,
    dt: f64,
    initial: InitialAvailability,
    seeds: &[u64],
) -> Result<Vec<BatchRun>> {
    let models = vec![*model; plant.m()];
    seeds
        .par_iter()
        .map(|&seed| {
            let path = sample_availability_with(&models, horizon, seed, initial)?;
            let traj = simulate_switched(plant, design, &path, x0, dt)?;
            Ok(BatchRun {
                seed,
                final_norm: traj.final_state().norm(),
                contraction_ratio: traj.contraction_ratio(),
                transient_increase: traj.has_norm_increase(),
            })
        })
        .collect()
}

/// CSV with columns `seed, final_norm, contraction_ratio,
/// transient_increase`.
pub fn batch_summary_csv(runs: &[BatchRun]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "seed",
        "final_norm",
        "contraction_ratio",
        "transient_increase",
    ])
    .expect("in-memory write");
    for r in runs {
        w.write_record([
            r.seed.to_string(),
            crate::io::fmt_f64(r.final_norm),
            crate::io::fmt_f64(r.contraction_ratio),
            r.transient_increase.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
}
