//! Closed-form congestion analytics for an M/G/s FCFS queue with infinite
//! waiting room.
//!
//! Mean waits come from the Kimura two-moment interpolation between the
//! exact M/M/s (Erlang-C) delay and the Cosmetatos M/D/s approximation.
//! State probabilities use the geometric-tail approximation, which reduces
//! to the exact M/M/s distribution when the service-time coefficient of
//! variation is 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QueueError {
    #[error("unstable queue: offered load {load:.4} >= {s} servers (rho = {rho:.4} >= 1)")]
    Unstable { load: f64, s: usize, rho: f64 },
    #[error("invalid queue parameters: {0}")]
    InvalidParams(String),
}

/// Arrival/service parameters of one station queue.
///
/// `lambda` is the arrival rate (vehicles/hour), `mu` the service rate
/// (1 / mean charge time, 1/hour), `sigma` the standard deviation of the
/// charge time (hours) and `s` the number of chargers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueParams {
    pub lambda: f64,
    pub mu: f64,
    pub sigma: f64,
    pub s: usize,
}

impl QueueParams {
    pub fn new(lambda: f64, mu: f64, sigma: f64, s: usize) -> Result<Self, QueueError> {
        if !(lambda >= 0.0) {
            return Err(QueueError::InvalidParams(format!("lambda = {lambda}")));
        }
        if !(mu > 0.0) {
            return Err(QueueError::InvalidParams(format!("mu = {mu}")));
        }
        if !(sigma >= 0.0) {
            return Err(QueueError::InvalidParams(format!("sigma = {sigma}")));
        }
        if s < 1 {
            return Err(QueueError::InvalidParams("s must be >= 1".into()));
        }
        Ok(Self { lambda, mu, sigma, s })
    }

    /// Offered load a = lambda / mu.
    pub fn offered_load(&self) -> f64 {
        self.lambda / self.mu
    }

    /// Utilization factor rho = lambda / (s mu).
    pub fn rho(&self) -> f64 {
        self.lambda / (self.s as f64 * self.mu)
    }

    /// Coefficient of variation of the service time, xi = sigma * mu.
    pub fn xi(&self) -> f64 {
        self.sigma * self.mu
    }

    fn require_stable(&self) -> Result<(), QueueError> {
        let rho = self.rho();
        if rho >= 1.0 {
            Err(QueueError::Unstable { load: self.offered_load(), s: self.s, rho })
        } else {
            Ok(())
        }
    }
}

/// Everything the closed forms produce for one stable station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueMetrics {
    pub rho: f64,
    pub xi: f64,
    pub w_mms: f64,
    pub w_mds: f64,
    pub w_mgs: f64,
    pub p0: f64,
    pub c_delay: f64,
    pub zeta: f64,
    pub p_wait: f64,
}

/// Erlang terms a^z / z! for z = 0..s-1 plus the boundary term a^s / s!,
/// accumulated by recursive multiplication so large s never touches a raw
/// factorial.
fn erlang_terms(a: f64, s: usize) -> (f64, f64) {
    let mut term = 1.0; // a^0 / 0!
    let mut partial = 0.0;
    for z in 0..s {
        partial += term;
        term *= a / (z as f64 + 1.0);
    }
    (partial, term) // term now holds a^s / s!
}

/// Empty-system probability P0 of the M/M/s queue.
pub fn p0(params: &QueueParams) -> Result<f64, QueueError> {
    if params.lambda == 0.0 {
        return Ok(1.0);
    }
    params.require_stable()?;
    let a = params.offered_load();
    let (partial, boundary) = erlang_terms(a, params.s);
    // a^s / ((s-1)! (s mu - lambda) mu^{s-1}) == (a^s / s!) / (1 - rho)
    Ok(1.0 / (partial + boundary / (1.0 - params.rho())))
}

/// Mean queue delay of the M/M/s system (Erlang-C mean wait).
pub fn w_mms(params: &QueueParams) -> Result<f64, QueueError> {
    if params.lambda == 0.0 {
        return Ok(0.0);
    }
    params.require_stable()?;
    let c = delay_probability(params)?;
    Ok(c / (params.s as f64 * params.mu * (1.0 - params.rho())))
}

/// Cosmetatos correction factor H; zero for s = 1.
fn h_factor(s: usize) -> f64 {
    let s = s as f64;
    (s - 1.0) / (16.0 * s) * (((10.0 * s + 8.0) / 2.0).sqrt() - 2.0)
}

/// Mean wait of the M/D/s system (deterministic service).
///
/// For s = 1 the correction factor H vanishes and the exponent is 0/0; the
/// correction term is defined as 0 there, recovering the exact
/// Pollaczek-Khinchine result W = W_mms / 2.
pub fn w_mds(params: &QueueParams) -> Result<f64, QueueError> {
    if params.lambda == 0.0 {
        return Ok(0.0);
    }
    params.require_stable()?;
    let w = w_mms(params)?;
    let s = params.s as f64;
    let lambda = params.lambda;
    let slack = s * params.mu - lambda;
    let h = h_factor(params.s);
    let correction = if params.s == 1 {
        0.0
    } else {
        let exponent = -lambda * (s - 1.0) / (h * slack * (s + 1.0));
        h * slack / lambda * (1.0 - exponent.exp())
    };
    Ok(0.5 * (1.0 + correction) * w)
}

/// Mean wait of the M/G/s system (two-moment interpolation).
pub fn w_mgs(params: &QueueParams) -> Result<f64, QueueError> {
    if params.lambda == 0.0 {
        return Ok(0.0);
    }
    params.require_stable()?;
    let xi2 = params.xi() * params.xi();
    let wm = w_mms(params)?;
    let wd = w_mds(params)?;
    Ok((1.0 + xi2) * wm * wd / (2.0 * xi2 * wd + (1.0 - xi2) * wm))
}

/// Delay probability C: an arrival finds all s servers busy (Erlang-C).
pub fn delay_probability(params: &QueueParams) -> Result<f64, QueueError> {
    if params.lambda == 0.0 {
        return Ok(0.0);
    }
    params.require_stable()?;
    let a = params.offered_load();
    let (partial, boundary) = erlang_terms(a, params.s);
    let tail = boundary / (1.0 - params.rho());
    Ok(tail / (partial + tail))
}

/// Geometric tail ratio zeta of the M/G/s state distribution.
///
/// With xi = 1 the wait ratio is 1 and zeta reduces to rho, recovering the
/// exact M/M/s geometric tail.
pub fn zeta(params: &QueueParams) -> Result<f64, QueueError> {
    if params.lambda == 0.0 {
        return Ok(0.0);
    }
    params.require_stable()?;
    let rho = params.rho();
    let ratio = w_mgs(params)? / w_mms(params)?;
    Ok(rho * ratio / (1.0 - rho + rho * ratio))
}

/// Stationary probabilities P(N) for N = 0..=n_max.
///
/// Below s the M/M/s body applies; from s upward the tail is geometric with
/// ratio [`zeta`].
pub fn state_probabilities(params: &QueueParams, n_max: usize) -> Result<Vec<f64>, QueueError> {
    if params.lambda == 0.0 {
        let mut probs = vec![0.0; n_max + 1];
        probs[0] = 1.0;
        return Ok(probs);
    }
    params.require_stable()?;
    let p0 = p0(params)?;
    let c = delay_probability(params)?;
    let z = zeta(params)?;
    let a = params.offered_load(); // s * rho
    let mut probs = Vec::with_capacity(n_max + 1);
    let mut body = p0; // (s rho)^N / N! * P0, built recursively
    for n in 0..=n_max {
        if n < params.s {
            probs.push(body);
            body *= a / (n as f64 + 1.0);
        } else {
            probs.push(c * (1.0 - z) * z.powi((n - params.s) as i32));
        }
    }
    Ok(probs)
}

/// Waiting probability P(N > s): more vehicles present than chargers.
pub fn waiting_probability(params: &QueueParams) -> Result<f64, QueueError> {
    if params.lambda == 0.0 {
        return Ok(0.0);
    }
    params.require_stable()?;
    let p0 = p0(params)?;
    let c = delay_probability(params)?;
    let z = zeta(params)?;
    let a = params.offered_load();
    let mut body_sum = 0.0;
    let mut term = p0;
    for n in 0..params.s {
        body_sum += term;
        term *= a / (n as f64 + 1.0);
    }
    let p = 1.0 - body_sum - c * (1.0 - z);
    debug_assert!(p > -1e-9 && p < 1.0 + 1e-9);
    Ok(p.clamp(0.0, 1.0))
}

/// All closed-form outputs in one pass.
pub fn metrics(params: &QueueParams) -> Result<QueueMetrics, QueueError> {
    Ok(QueueMetrics {
        rho: params.rho(),
        xi: params.xi(),
        w_mms: w_mms(params)?,
        w_mds: w_mds(params)?,
        w_mgs: w_mgs(params)?,
        p0: p0(params)?,
        c_delay: delay_probability(params)?,
        zeta: zeta(params)?,
        p_wait: waiting_probability(params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qp(lambda: f64, mu: f64, sigma: f64, s: usize) -> QueueParams {
        QueueParams::new(lambda, mu, sigma, s).unwrap()
    }

    #[test]
    fn mm1_closed_forms() {
        // lambda = 0.5, mu = 1, s = 1: P0 = 1 - rho, Wq = rho / (mu - lambda).
        let p = qp(0.5, 1.0, 1.0, 1);
        assert!((p0(&p).unwrap() - 0.5).abs() < 1e-12);
        assert!((w_mms(&p).unwrap() - 1.0).abs() < 1e-12);
        assert!((delay_probability(&p).unwrap() - 0.5).abs() < 1e-12);
        assert!((waiting_probability(&p).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn mm2_closed_forms() {
        // lambda = 1, mu = 1, s = 2, hand evaluation.
        let p = qp(1.0, 1.0, 1.0, 2);
        assert!((p0(&p).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((w_mms(&p).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((delay_probability(&p).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((waiting_probability(&p).unwrap() - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_arrivals() {
        let p = qp(0.0, 1.0, 0.5, 3);
        assert_eq!(p0(&p).unwrap(), 1.0);
        assert_eq!(w_mms(&p).unwrap(), 0.0);
        assert_eq!(w_mgs(&p).unwrap(), 0.0);
        assert_eq!(waiting_probability(&p).unwrap(), 0.0);
    }

    #[test]
    fn unstable_queue_is_a_typed_error() {
        let p = qp(3.0, 1.0, 1.0, 2);
        assert!(matches!(w_mms(&p), Err(QueueError::Unstable { .. })));
        assert!(matches!(metrics(&p), Err(QueueError::Unstable { .. })));
    }

    #[test]
    fn md1_is_half_of_mm1() {
        let p = qp(0.5, 1.0, 0.0, 1);
        assert!((w_mds(&p).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mds_between_half_and_full_mms() {
        let p = qp(1.0, 1.0, 0.0, 2);
        let wm = w_mms(&p).unwrap();
        let wd = w_mds(&p).unwrap();
        assert!(wd > wm / 2.0 && wd < wm, "wd = {wd}, wm = {wm}");
    }

    #[test]
    fn reduction_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let s = rng.gen_range(1..=20usize);
            let mu = rng.gen_range(0.2..5.0);
            let rho = rng.gen_range(0.05..0.95);
            let lambda = rho * s as f64 * mu;
            let exp = qp(lambda, mu, 1.0 / mu, s); // xi = 1
            let det = qp(lambda, mu, 0.0, s); // xi = 0
            assert!((w_mgs(&exp).unwrap() - w_mms(&exp).unwrap()).abs() <= 1e-12);
            assert!((w_mgs(&det).unwrap() - w_mds(&det).unwrap()).abs() <= 1e-12);
            assert!((zeta(&exp).unwrap() - rho).abs() <= 1e-9);
        }
    }

    #[test]
    fn wait_ordering_in_xi() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let s = rng.gen_range(1..=15usize);
            let mu = rng.gen_range(0.5..2.0);
            let rho = rng.gen_range(0.1..0.9);
            let lambda = rho * s as f64 * mu;
            let low = qp(lambda, mu, rng.gen_range(0.0..1.0) / mu, s);
            let high = qp(lambda, mu, rng.gen_range(1.0..3.0) / mu, s);
            let wm = w_mms(&low).unwrap();
            let wd = w_mds(&low).unwrap();
            let wg_low = w_mgs(&low).unwrap();
            assert!(wd <= wg_low + 1e-12 && wg_low <= wm + 1e-12);
            assert!(w_mgs(&high).unwrap() >= w_mms(&high).unwrap() - 1e-12);
        }
    }

    #[test]
    fn mm1_state_distribution_is_geometric() {
        let p = qp(0.5, 1.0, 1.0, 1);
        let probs = state_probabilities(&p, 10).unwrap();
        for (n, prob) in probs.iter().enumerate() {
            assert!((prob - 0.5 * 0.5f64.powi(n as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_with_closed_form_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let s = rng.gen_range(1..=30usize);
            let mu = rng.gen_range(0.2..4.0);
            let rho = rng.gen_range(0.05..0.95);
            let lambda = rho * s as f64 * mu;
            let sigma = rng.gen_range(0.0..2.5) / mu;
            let p = qp(lambda, mu, sigma, s);
            let probs = state_probabilities(&p, s).unwrap();
            // body below s, plus geometric tail C (1-zeta) sum zeta^k = C.
            let body: f64 = probs[..s].iter().sum();
            let c = delay_probability(&p).unwrap();
            assert!((body + c - 1.0).abs() <= 1e-12, "sum = {}", body + c);
        }
    }

    #[test]
    fn littles_law_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..500 {
            let s = rng.gen_range(1..=40usize);
            let mu = rng.gen_range(0.2..4.0);
            let rho = rng.gen_range(0.05..0.95);
            let lambda = rho * s as f64 * mu;
            let sigma = rng.gen_range(0.0..3.0) / mu;
            let p = qp(lambda, mu, sigma, s);
            let c = delay_probability(&p).unwrap();
            let z = zeta(&p).unwrap();
            let lq = c * z / (1.0 - z);
            let rhs = lambda * w_mgs(&p).unwrap();
            assert!((lq - rhs).abs() <= 1e-9 * rhs.max(1.0), "lq = {lq}, rhs = {rhs}");
        }
    }

    #[test]
    fn monotone_in_servers() {
        let lambda = 7.3_f64;
        let mu = 1.1_f64;
        let sigma = 1.4 / mu;
        let s_min = (lambda / mu).ceil() as usize + 1;
        let mut prev_w = f64::INFINITY;
        let mut prev_pw = f64::INFINITY;
        for s in s_min..=s_min + 20 {
            let p = qp(lambda, mu, sigma, s);
            let w = w_mgs(&p).unwrap();
            let pw = waiting_probability(&p).unwrap();
            assert!(w <= prev_w + 1e-12);
            assert!(pw <= prev_pw + 1e-12);
            prev_w = w;
            prev_pw = pw;
        }
    }

    #[test]
    fn large_s_stays_finite() {
        let p = qp(450.0, 1.0, 0.8, 500);
        let m = metrics(&p).unwrap();
        assert!(m.w_mgs.is_finite() && m.w_mgs >= 0.0);
        assert!(m.p0.is_finite() && m.p0 >= 0.0);
        assert!(m.p_wait >= 0.0 && m.p_wait <= 1.0);
    }
}
