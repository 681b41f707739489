//! Reproducible synthetic taxi trajectories, standing in for proprietary
//! travel-record data so the full pipeline runs at desk scale.
//!
//! Each vehicle alternates trips between Gaussian hotspots and stationary
//! dwells. Fixes are emitted every 60 s; trip speeds stay in 20-40 km/h so
//! implied speeds never exceed 60 km/h. Everything is driven by one seed.

use crate::demand::TravelRecord;
use crate::geo::{haversine_km, LonLat};
use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_vehicles: usize,
    pub n_days: usize,
    /// (lon_min, lat_min, lon_max, lat_max)
    pub bbox: (f64, f64, f64, f64),
    pub hotspot_count: usize,
    pub trips_per_day_mean: f64,
    /// Probability that a dwell lasts long enough to count as a charging window.
    pub dwell_prob: f64,
    /// Hour of day arrival times cluster around.
    pub peak_hour: u32,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_vehicles: 100,
            n_days: 1,
            // roughly the central area of a large city
            bbox: (116.20, 39.75, 116.55, 40.05),
            hotspot_count: 6,
            trips_per_day_mean: 5.0,
            dwell_prob: 0.6,
            peak_hour: 9,
            start_date: NaiveDate::from_ymd_opt(2016, 7, 1).unwrap(),
            seed: 1,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let (x0, y0, x1, y1) = self.bbox;
        if !(x1 > x0 && y1 > y0) {
            return Err(SynthError::InvalidConfig(format!("degenerate bbox {:?}", self.bbox)));
        }
        if !(0.0..=1.0).contains(&self.dwell_prob) {
            return Err(SynthError::InvalidConfig(format!("dwell_prob = {}", self.dwell_prob)));
        }
        if self.n_vehicles == 0 || self.n_days == 0 || self.hotspot_count == 0 {
            return Err(SynthError::InvalidConfig("counts must be >= 1".into()));
        }
        if self.peak_hour > 23 {
            return Err(SynthError::InvalidConfig(format!("peak_hour = {}", self.peak_hour)));
        }
        Ok(())
    }
}

const FIX_INTERVAL_S: i64 = 60;

fn clamp_to_bbox(p: LonLat, bbox: (f64, f64, f64, f64)) -> LonLat {
    (p.0.clamp(bbox.0, bbox.2), p.1.clamp(bbox.1, bbox.3))
}

/// Spatial mixture the trip endpoints are drawn from.
fn hotspots(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<(LonLat, f64)> {
    let (x0, y0, x1, y1) = config.bbox;
    let spread = ((x1 - x0).min(y1 - y0)) * 0.06;
    (0..config.hotspot_count)
        .map(|_| {
            let c = (rng.gen_range(x0 + spread..x1 - spread), rng.gen_range(y0 + spread..y1 - spread));
            (c, spread)
        })
        .collect()
}

fn draw_near_hotspot(spots: &[(LonLat, f64)], rng: &mut ChaCha8Rng, bbox: (f64, f64, f64, f64)) -> LonLat {
    let (center, spread) = spots[rng.gen_range(0..spots.len())];
    let n = Normal::new(0.0, spread).expect("finite spread");
    clamp_to_bbox((center.0 + n.sample(rng), center.1 + n.sample(rng)), bbox)
}

/// Trip start hour, biased toward the configured peak.
fn draw_start_hour(config: &SynthConfig, rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.5) {
        let n = Normal::new(config.peak_hour as f64, 1.5).expect("finite");
        n.sample(rng).rem_euclid(24.0)
    } else {
        rng.gen_range(6.0..23.0)
    }
}

fn emit_fix(out: &mut Vec<TravelRecord>, vehicle: &str, t: NaiveDateTime, p: LonLat) {
    out.push(TravelRecord {
        vehicle_id: vehicle.to_string(),
        timestamp: t,
        longitude: p.0,
        latitude: p.1,
    });
}

/// Straight-line trip from `from` to `to` with fixes every 60 s at a constant
/// speed in 20-40 km/h. Returns the arrival time.
fn emit_trip(
    out: &mut Vec<TravelRecord>,
    vehicle: &str,
    from: LonLat,
    to: LonLat,
    start: NaiveDateTime,
    rng: &mut ChaCha8Rng,
) -> NaiveDateTime {
    let dist = haversine_km(from, to);
    let speed = rng.gen_range(20.0..40.0); // km/h
    let duration_s = (dist / speed * 3600.0).ceil().max(FIX_INTERVAL_S as f64) as i64;
    let steps = (duration_s / FIX_INTERVAL_S).max(1);
    let mut t = start;
    for k in 0..=steps {
        let frac = k as f64 / steps as f64;
        let p = (from.0 + (to.0 - from.0) * frac, from.1 + (to.1 - from.1) * frac);
        emit_fix(out, vehicle, t, p);
        t += Duration::seconds(FIX_INTERVAL_S);
    }
    t
}

/// Stationary fixes at `at` for the given number of minutes.
fn emit_dwell(
    out: &mut Vec<TravelRecord>,
    vehicle: &str,
    at: LonLat,
    start: NaiveDateTime,
    minutes: f64,
) -> NaiveDateTime {
    let steps = ((minutes * 60.0) as i64 / FIX_INTERVAL_S).max(1);
    let mut t = start;
    for _ in 0..=steps {
        emit_fix(out, vehicle, t, at);
        t += Duration::seconds(FIX_INTERVAL_S);
    }
    t
}

/// Generate the full fleet's records, sorted per vehicle by construction.
pub fn generate_trajectories(config: &SynthConfig) -> Result<Vec<TravelRecord>, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let spots = hotspots(config, &mut rng);
    let mut out = Vec::new();
    for v in 0..config.n_vehicles {
        // per-vehicle stream so vehicle output is independent of fleet size
        let mut vrng = ChaCha8Rng::seed_from_u64(config.seed ^ (0xA5A5_0000 + v as u64));
        let vehicle = format!("{}", 10_000 + v);
        let mut pos = draw_near_hotspot(&spots, &mut vrng, config.bbox);
        for day in 0..config.n_days {
            let date = config.start_date + Duration::days(day as i64);
            let start_hour = draw_start_hour(config, &mut vrng);
            let mut t = date.and_hms_opt(0, 0, 0).unwrap()
                + Duration::seconds((start_hour * 3600.0) as i64);
            let trips = 1 + vrng.gen_range(0.0..2.0 * config.trips_per_day_mean).round() as usize;
            let day_end = date.and_hms_opt(23, 0, 0).unwrap();
            for _ in 0..trips {
                if t >= day_end {
                    break;
                }
                // keep trips long enough that consecutive dwells cannot merge
                let mut dest = draw_near_hotspot(&spots, &mut vrng, config.bbox);
                while haversine_km(pos, dest) < 0.5 {
                    dest = draw_near_hotspot(&spots, &mut vrng, config.bbox);
                }
                t = emit_trip(&mut out, &vehicle, pos, dest, t, &mut vrng);
                pos = dest;
                let minutes = if vrng.gen_bool(config.dwell_prob) {
                    vrng.gen_range(35.0..110.0)
                } else {
                    vrng.gen_range(5.0..25.0)
                };
                t = emit_dwell(&mut out, &vehicle, pos, t, minutes);
            }
        }
    }
    Ok(out)
}

/// Records as the trajectory CSV accepted by the demand parser.
pub fn records_to_csv(records: &[TravelRecord]) -> String {
    let mut out = String::new();
    for r in records {
        writeln!(
            out,
            "{},{},{},{}",
            r.vehicle_id,
            r.timestamp.format("%Y%m%d%H%M%S"),
            r.longitude,
            r.latitude
        )
        .expect("write to string");
    }
    out
}
