//! Discrete-event simulation of an M/G/s FCFS queue with infinite waiting
//! room, used as the empirical oracle for the closed-form analytics.
//!
//! Arrivals are Poisson, either constant-rate or piecewise-constant per hour
//! (generated by thinning against the peak rate). Replications differ only
//! by their seed stream and run in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

/// Arrival process: a single constant rate or one rate per hour of day,
/// both in vehicles/hour.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ArrivalSpec {
    Constant(f64),
    Hourly([f64; 24]),
}

impl ArrivalSpec {
    fn max_rate(&self) -> f64 {
        match self {
            ArrivalSpec::Constant(l) => *l,
            ArrivalSpec::Hourly(v) => v.iter().cloned().fold(0.0, f64::max),
        }
    }

    fn rate_at(&self, t_hours: f64) -> f64 {
        match self {
            ArrivalSpec::Constant(l) => *l,
            ArrivalSpec::Hourly(v) => v[(t_hours % 24.0).floor() as usize % 24],
        }
    }
}

/// Service-time distribution, parameterized by its mean in hours.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum ServiceSpec {
    Deterministic { mean: f64 },
    Exponential { mean: f64 },
    /// Erlang with k phases and the given overall mean.
    Erlang { k: u32, mean: f64 },
    /// Lognormal matched to the given mean and standard deviation.
    Lognormal { mean: f64, std_dev: f64 },
}

impl ServiceSpec {
    pub fn mean(&self) -> f64 {
        match self {
            ServiceSpec::Deterministic { mean }
            | ServiceSpec::Exponential { mean }
            | ServiceSpec::Erlang { mean, .. }
            | ServiceSpec::Lognormal { mean, .. } => *mean,
        }
    }

    pub fn std_dev(&self) -> f64 {
        match self {
            ServiceSpec::Deterministic { .. } => 0.0,
            ServiceSpec::Exponential { mean } => *mean,
            ServiceSpec::Erlang { k, mean } => mean / (*k as f64).sqrt(),
            ServiceSpec::Lognormal { std_dev, .. } => *std_dev,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ServiceSpec::Deterministic { mean } => *mean,
            ServiceSpec::Exponential { mean } => {
                Exp::new(1.0 / mean).expect("mean > 0").sample(rng)
            }
            ServiceSpec::Erlang { k, mean } => {
                let phase = Exp::new(*k as f64 / mean).expect("mean > 0");
                (0..*k).map(|_| phase.sample(rng)).sum()
            }
            ServiceSpec::Lognormal { mean, std_dev } => {
                // Moment matching: mean = exp(m + v/2), var = (exp(v)-1) exp(2m+v).
                let v = (1.0 + (std_dev / mean).powi(2)).ln();
                let m = mean.ln() - v / 2.0;
                LogNormal::new(m, v.sqrt()).expect("finite params").sample(rng)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub arrival: ArrivalSpec,
    pub service: ServiceSpec,
    pub s: usize,
    pub n_arrivals: usize,
    pub warmup: usize,
    pub seed: u64,
    pub replications: usize,
}

impl SimConfig {
    /// Constant-rate config with the conventional defaults: warmup 10% of
    /// arrivals (at least 10_000 when the run is long enough) and 20
    /// replications.
    pub fn constant(lambda: f64, service: ServiceSpec, s: usize, n_arrivals: usize, seed: u64) -> Self {
        let warmup = (n_arrivals / 10).max(10_000).min(n_arrivals / 2);
        Self { arrival: ArrivalSpec::Constant(lambda), service, s, n_arrivals, warmup, seed, replications: 20 }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.s < 1 {
            return Err(SimError::InvalidConfig("s must be >= 1".into()));
        }
        if self.n_arrivals <= self.warmup {
            return Err(SimError::InvalidConfig("n_arrivals must exceed warmup".into()));
        }
        if self.replications < 1 {
            return Err(SimError::InvalidConfig("replications must be >= 1".into()));
        }
        if !(self.service.mean() > 0.0) {
            return Err(SimError::InvalidConfig("service mean must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-replication outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub mean_wait: f64,
    pub p_wait: f64,
    /// Fraction of arrivals that found more vehicles than chargers present.
    pub p_more_than_s: f64,
    pub mean_queue_length: f64,
    pub utilization: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimResult {
    pub mean_wait: f64,
    pub mean_wait_half_width: f64,
    pub p_wait: f64,
    pub p_wait_half_width: f64,
    pub p_more_than_s: f64,
    pub mean_queue_length: f64,
    pub utilization_observed: f64,
    pub replications: Vec<Replication>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Arrival,
    Departure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Simultaneous events break ties by sequence number.
        self.time
            .partial_cmp(&other.time)
            .expect("event times are finite")
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct ArrivalGen<'a> {
    spec: &'a ArrivalSpec,
    max_rate: f64,
    clock: f64,
}

impl<'a> ArrivalGen<'a> {
    fn new(spec: &'a ArrivalSpec) -> Self {
        Self { spec, max_rate: spec.max_rate(), clock: 0.0 }
    }

    /// Next arrival time, by inversion for the constant case and thinning
    /// against the peak rate otherwise.
    fn next(&mut self, rng: &mut ChaCha8Rng) -> Option<f64> {
        if self.max_rate <= 0.0 {
            return None;
        }
        loop {
            self.clock += -rng.gen::<f64>().ln() / self.max_rate;
            let accept = match self.spec {
                ArrivalSpec::Constant(_) => true,
                ArrivalSpec::Hourly(_) => {
                    rng.gen::<f64>() * self.max_rate < self.spec.rate_at(self.clock)
                }
            };
            if accept {
                return Some(self.clock);
            }
        }
    }
}

fn run_one(config: &SimConfig, seed: u64) -> Replication {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events: BinaryHeap<Reverse<Event>> = BinaryHeap::new();
    let mut seq: u64 = 0;
    let mut gen = ArrivalGen::new(&config.arrival);

    // arrival time of each waiting vehicle, plus whether it is post-warmup
    let mut queue: VecDeque<(f64, bool)> = VecDeque::new();
    let mut busy: usize = 0;
    let mut arrived: usize = 0;

    // post-warmup statistics
    let mut wait_sum = 0.0;
    let mut waited = 0usize;
    let mut saw_more_than_s = 0usize;
    let mut measured = 0usize;
    let mut queue_area = 0.0;
    let mut busy_area = 0.0;
    let mut window_start = f64::NAN;
    let mut last_event = 0.0;
    let mut now = 0.0;

    let push = |events: &mut BinaryHeap<Reverse<Event>>, seq: &mut u64, time: f64, kind: EventKind| {
        events.push(Reverse(Event { time, seq: *seq, kind }));
        *seq += 1;
    };

    if let Some(t) = gen.next(&mut rng) {
        push(&mut events, &mut seq, t, EventKind::Arrival);
    }

    while let Some(Reverse(ev)) = events.pop() {
        debug_assert!(ev.time >= last_event);
        if measured > 0 || arrived > config.warmup {
            queue_area += queue.len() as f64 * (ev.time - now);
            busy_area += busy as f64 * (ev.time - now);
        }
        last_event = ev.time;
        now = ev.time;
        match ev.kind {
            EventKind::Arrival => {
                arrived += 1;
                let in_system = busy + queue.len();
                let counts = arrived > config.warmup;
                if counts {
                    if window_start.is_nan() {
                        window_start = now;
                    }
                    measured += 1;
                    if in_system > config.s {
                        saw_more_than_s += 1;
                    }
                }
                if busy < config.s {
                    debug_assert!(queue.is_empty(), "idle server with non-empty queue");
                    busy += 1;
                    let service = config.service.sample(&mut rng);
                    push(&mut events, &mut seq, now + service, EventKind::Departure);
                } else {
                    queue.push_back((now, counts));
                    if counts {
                        waited += 1;
                    }
                }
                if arrived < config.n_arrivals {
                    if let Some(t) = gen.next(&mut rng) {
                        push(&mut events, &mut seq, t, EventKind::Arrival);
                    }
                }
            }
            EventKind::Departure => {
                debug_assert!(busy > 0);
                busy -= 1;
                if let Some((arrived_at, counts)) = queue.pop_front() {
                    busy += 1;
                    if counts {
                        wait_sum += now - arrived_at;
                    }
                    let service = config.service.sample(&mut rng);
                    push(&mut events, &mut seq, now + service, EventKind::Departure);
                }
            }
        }
    }

    let n = measured.max(1) as f64;
    let horizon = (now - if window_start.is_nan() { 0.0 } else { window_start }).max(f64::MIN_POSITIVE);
    Replication {
        mean_wait: wait_sum / n,
        p_wait: waited as f64 / n,
        p_more_than_s: saw_more_than_s as f64 / n,
        mean_queue_length: queue_area / horizon,
        utilization: (busy_area / horizon / config.s as f64).min(1.0),
    }
}

fn mean_and_half_width(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // normal-approximation 95% CI across replications
    (mean, 1.96 * (var / n).sqrt())
}

/// Run the configured number of replications and aggregate.
pub fn simulate(config: &SimConfig) -> Result<SimResult, SimError> {
    config.validate()?;
    let reps: Vec<Replication> = (0..config.replications)
        .into_par_iter()
        .map(|r| run_one(config, config.seed.wrapping_add(r as u64).wrapping_mul(0x9E3779B97F4A7C15).max(1)))
        .collect();
    let (mean_wait, mean_wait_half_width) =
        mean_and_half_width(&reps.iter().map(|r| r.mean_wait).collect::<Vec<_>>());
    let (p_wait, p_wait_half_width) =
        mean_and_half_width(&reps.iter().map(|r| r.p_wait).collect::<Vec<_>>());
    let (p_more_than_s, _) =
        mean_and_half_width(&reps.iter().map(|r| r.p_more_than_s).collect::<Vec<_>>());
    let (mean_queue_length, _) =
        mean_and_half_width(&reps.iter().map(|r| r.mean_queue_length).collect::<Vec<_>>());
    let (utilization_observed, _) =
        mean_and_half_width(&reps.iter().map(|r| r.utilization).collect::<Vec<_>>());
    Ok(SimResult {
        mean_wait,
        mean_wait_half_width,
        p_wait,
        p_wait_half_width,
        p_more_than_s,
        mean_queue_length,
        utilization_observed,
        replications: reps,
    })
}

/// Fraction of post-warmup arrivals that had to wait, with its CI half-width.
pub fn empirical_waiting_probability(result: &SimResult) -> (f64, f64) {
    (result.p_wait, result.p_wait_half_width)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lambda: f64, service: ServiceSpec, s: usize) -> SimConfig {
        SimConfig {
            arrival: ArrivalSpec::Constant(lambda),
            service,
            s,
            n_arrivals: 200_000,
            warmup: 20_000,
            seed: 42,
            replications: 5,
        }
    }

    #[test]
    fn mm1_mean_wait_matches_closed_form() {
        let r = simulate(&cfg(0.5, ServiceSpec::Exponential { mean: 1.0 }, 1)).unwrap();
        // Wq = 1.0 for lambda=0.5, mu=1
        assert!(
            (r.mean_wait - 1.0).abs() <= 3.0 * r.mean_wait_half_width.max(0.02),
            "mean_wait = {} +- {}",
            r.mean_wait,
            r.mean_wait_half_width
        );
    }

    #[test]
    fn md1_mean_wait_matches_closed_form() {
        let r = simulate(&cfg(0.5, ServiceSpec::Deterministic { mean: 1.0 }, 1)).unwrap();
        assert!(
            (r.mean_wait - 0.5).abs() <= 3.0 * r.mean_wait_half_width.max(0.01),
            "mean_wait = {}",
            r.mean_wait
        );
    }

    #[test]
    fn pasta_waiting_probability() {
        // s=1 exponential: P(wait) = rho = 0.5; s=2, lambda=mu=1: Erlang-C 1/3.
        let r1 = simulate(&cfg(0.5, ServiceSpec::Exponential { mean: 1.0 }, 1)).unwrap();
        let (p, hw) = empirical_waiting_probability(&r1);
        assert!((p - 0.5).abs() <= 3.0 * hw.max(0.01), "p_wait = {p}");
        let r2 = simulate(&cfg(1.0, ServiceSpec::Exponential { mean: 1.0 }, 2)).unwrap();
        let (p, hw) = empirical_waiting_probability(&r2);
        assert!((p - 1.0 / 3.0).abs() <= 3.0 * hw.max(0.01), "p_wait = {p}");
    }

    #[test]
    fn zero_arrival_rate() {
        let mut c = cfg(0.0, ServiceSpec::Exponential { mean: 1.0 }, 1);
        c.n_arrivals = 100;
        c.warmup = 0;
        let r = simulate(&c).unwrap();
        assert_eq!(r.mean_wait, 0.0);
        assert_eq!(r.p_wait, 0.0);
    }

    #[test]
    fn littles_law_on_sample_path() {
        let c = cfg(1.6, ServiceSpec::Erlang { k: 2, mean: 1.0 }, 2);
        let r = simulate(&c).unwrap();
        let expected_lq = 1.6 * r.mean_wait;
        assert!(
            (r.mean_queue_length - expected_lq).abs() <= 0.02 * expected_lq,
            "Lq = {}, lambda W = {}",
            r.mean_queue_length,
            expected_lq
        );
    }

    #[test]
    fn reproducible_given_seed() {
        let c = cfg(0.8, ServiceSpec::Lognormal { mean: 1.0, std_dev: 2.0 }, 2);
        let a = simulate(&c).unwrap();
        let b = simulate(&c).unwrap();
        assert_eq!(a.replications, b.replications);
        assert_eq!(a.mean_wait.to_bits(), b.mean_wait.to_bits());
    }

    #[test]
    fn hourly_arrivals_thinning() {
        let mut rates = [0.0; 24];
        rates[8] = 6.0;
        rates[9] = 6.0;
        let c = SimConfig {
            arrival: ArrivalSpec::Hourly(rates),
            service: ServiceSpec::Exponential { mean: 0.2 },
            s: 3,
            n_arrivals: 50_000,
            warmup: 1_000,
            seed: 7,
            replications: 3,
        };
        let r = simulate(&c).unwrap();
        assert!(r.mean_wait >= 0.0 && r.mean_wait.is_finite());
        assert!(r.utilization_observed <= 1.0);
    }

    #[test]
    fn utilization_tracks_offered_load() {
        let r = simulate(&cfg(1.4, ServiceSpec::Exponential { mean: 1.0 }, 2)).unwrap();
        assert!((r.utilization_observed - 0.7).abs() < 0.02, "util = {}", r.utilization_observed);
    }
}
