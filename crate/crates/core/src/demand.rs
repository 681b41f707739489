//! Charging-demand extraction from raw trajectory records.
//!
//! The pipeline is: parse CSV fixes, group and sort per vehicle, detect
//! dwells (anchor-radius stay points lasting at least the threshold), and
//! convert the distance driven since the previous dwell into an energy
//! demand at the dwell anchor.

use crate::geo::{haversine_km, LonLat};
use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DemandError {
    #[error("invalid vehicle params: {0}")]
    InvalidParams(String),
}

/// One timestamped GPS fix of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelRecord {
    pub vehicle_id: String,
    pub timestamp: NaiveDateTime,
    pub longitude: f64,
    pub latitude: f64,
}

impl TravelRecord {
    pub fn location(&self) -> LonLat {
        (self.longitude, self.latitude)
    }
}

/// Fleet and charger assumptions driving the extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub battery_capacity_kwh: f64,
    pub electric_range_km: f64,
    pub charger_power_kw: f64,
    pub dwell_threshold_min: f64,
    pub dwell_radius_m: f64,
    /// A time gap longer than this splits the trajectory; no distance is
    /// accumulated across the gap.
    pub gap_split_min: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            battery_capacity_kwh: 10.0,
            electric_range_km: 50.0,
            charger_power_kw: 10.0,
            dwell_threshold_min: 30.0,
            dwell_radius_m: 100.0,
            gap_split_min: 60.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), DemandError> {
        for (name, v) in [
            ("battery_capacity_kwh", self.battery_capacity_kwh),
            ("electric_range_km", self.electric_range_km),
            ("charger_power_kw", self.charger_power_kw),
            ("dwell_threshold_min", self.dwell_threshold_min),
            ("dwell_radius_m", self.dwell_radius_m),
            ("gap_split_min", self.gap_split_min),
        ] {
            if !(v > 0.0) {
                return Err(DemandError::InvalidParams(format!("{name} = {v}, must be > 0")));
            }
        }
        Ok(())
    }
}

/// A dwell-derived charging opportunity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandPoint {
    pub location: LonLat,
    /// Energy demand D_i in kWh.
    pub weight_kwh: f64,
    pub arrival_time: NaiveDateTime,
    pub charge_hours: f64,
    pub source_vehicle: String,
}

/// One rejected input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    /// Records grouped by vehicle id, sorted by timestamp within each vehicle.
    pub by_vehicle: BTreeMap<String, Vec<TravelRecord>>,
    pub errors: Vec<RowError>,
}

impl ParseOutcome {
    pub fn record_count(&self) -> usize {
        self.by_vehicle.values().map(Vec::len).sum()
    }
}

const TIMESTAMP_FMT: &str = "%Y%m%d%H%M%S";

fn parse_row(line: &str) -> Result<TravelRecord, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 comma-separated fields, got {}", fields.len()));
    }
    let timestamp = NaiveDateTime::parse_from_str(fields[1], TIMESTAMP_FMT)
        .map_err(|e| format!("malformed timestamp {:?}: {e}", fields[1]))?;
    let longitude: f64 = fields[2].parse().map_err(|_| format!("bad longitude {:?}", fields[2]))?;
    let latitude: f64 = fields[3].parse().map_err(|_| format!("bad latitude {:?}", fields[3]))?;
    if !(-180.0..=180.0).contains(&longitude) {
        return Err(format!("longitude out of range: {longitude}"));
    }
    if !(-90.0..=90.0).contains(&latitude) {
        return Err(format!("latitude out of range: {latitude}"));
    }
    Ok(TravelRecord { vehicle_id: fields[0].to_string(), timestamp, longitude, latitude })
}

/// Parse trajectory CSV text. Rows are `vehicle_id,timestamp,longitude,latitude`
/// with timestamps like `20160704141051`. Invalid rows become [`RowError`]s
/// instead of aborting; a header row is skipped if present.
pub fn parse_records(input: &str) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    for (idx, line) in input.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 && line.to_ascii_lowercase().starts_with("vehicle_id") {
            continue;
        }
        match parse_row(line) {
            Ok(rec) => out.by_vehicle.entry(rec.vehicle_id.clone()).or_default().push(rec),
            Err(message) => out.errors.push(RowError { line: idx + 1, message }),
        }
    }
    for records in out.by_vehicle.values_mut() {
        records.sort_by_key(|r| r.timestamp);
    }
    out
}

/// A detected stay: the vehicle remained within `dwell_radius` of the run's
/// first fix for at least the threshold duration.
#[derive(Debug, Clone, PartialEq)]
pub struct Dwell {
    pub anchor: LonLat,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    /// Index range [first, last] into the record slice the dwell covers.
    pub span: (usize, usize),
}

impl Dwell {
    pub fn duration_min(&self) -> f64 {
        (self.end - self.start).num_seconds() as f64 / 60.0
    }
}

fn gap_minutes(a: &TravelRecord, b: &TravelRecord) -> f64 {
    (b.timestamp - a.timestamp).num_seconds() as f64 / 60.0
}

/// Split one vehicle's sorted records at time gaps larger than
/// `gap_split_min`, returning index ranges of contiguous segments.
fn segments(records: &[TravelRecord], params: &VehicleParams) -> Vec<(usize, usize)> {
    let mut segs = Vec::new();
    if records.is_empty() {
        return segs;
    }
    let mut start = 0;
    for i in 1..records.len() {
        if gap_minutes(&records[i - 1], &records[i]) > params.gap_split_min {
            segs.push((start, i - 1));
            start = i;
        }
    }
    segs.push((start, records.len() - 1));
    segs
}

/// Anchor-radius stay-point detection on one vehicle's sorted records.
///
/// A dwell is a maximal run of consecutive fixes all within `dwell_radius`
/// of the run's first fix, spanning at least `dwell_threshold_min`. Runs
/// never cross a trajectory gap. Dwells are disjoint in time.
pub fn detect_dwells(records: &[TravelRecord], params: &VehicleParams) -> Vec<Dwell> {
    let mut dwells = Vec::new();
    if records.len() < 2 {
        return dwells;
    }
    let radius_km = params.dwell_radius_m / 1000.0;
    for (seg_start, seg_end) in segments(records, params) {
        let mut i = seg_start;
        while i < seg_end {
            let anchor = records[i].location();
            let mut j = i + 1;
            while j <= seg_end && haversine_km(anchor, records[j].location()) <= radius_km {
                j += 1;
            }
            let last = j - 1;
            if last > i && gap_minutes(&records[i], &records[last]) >= params.dwell_threshold_min {
                dwells.push(Dwell {
                    anchor,
                    start: records[i].timestamp,
                    end: records[last].timestamp,
                    span: (i, last),
                });
                i = last + 1;
            } else {
                i += 1;
            }
        }
    }
    dwells
}

/// Convert one vehicle's records into demand points: the distance driven
/// since the previous dwell (the vehicle leaves each dwell fully charged)
/// becomes an energy weight at the next dwell anchor, capped at the battery
/// capacity. Dwells reached with zero distance are skipped.
pub fn extract_vehicle_demands(records: &[TravelRecord], params: &VehicleParams) -> Vec<DemandPoint> {
    let dwells = detect_dwells(records, params);
    let mut points = Vec::new();
    let segs = segments(records, params);
    let mut seg_iter = segs.iter().peekable();
    let mut dwell_iter = dwells.iter().peekable();
    let mut traveled_km = 0.0;
    for i in 1..records.len() {
        // advance past segment boundaries; distance not accumulated across gaps
        while let Some(&&(_, seg_end)) = seg_iter.peek() {
            if i - 1 > seg_end {
                seg_iter.next();
            } else {
                break;
            }
        }
        let crosses_gap = matches!(seg_iter.peek(), Some(&&(_, seg_end)) if i > seg_end);
        if !crosses_gap {
            traveled_km += haversine_km(records[i - 1].location(), records[i].location());
        }
        if let Some(&dwell) = dwell_iter.peek() {
            if i == dwell.span.0 {
                // distance accumulated up to and including the hop into the anchor
                if traveled_km > 0.0 {
                    let weight = (traveled_km / params.electric_range_km
                        * params.battery_capacity_kwh)
                        .min(params.battery_capacity_kwh);
                    points.push(DemandPoint {
                        location: dwell.anchor,
                        weight_kwh: weight,
                        arrival_time: dwell.start,
                        charge_hours: weight / params.charger_power_kw,
                        source_vehicle: records[i].vehicle_id.clone(),
                    });
                }
            }
            if i == dwell.span.1 {
                // leave the dwell fully charged; jitter inside it is discarded
                traveled_km = 0.0;
                dwell_iter.next();
            }
        }
    }
    points
}

/// Demand extraction over every vehicle in a parse outcome.
pub fn extract_demands(parsed: &ParseOutcome, params: &VehicleParams) -> Vec<DemandPoint> {
    let mut points = Vec::new();
    for records in parsed.by_vehicle.values() {
        points.extend(extract_vehicle_demands(records, params));
    }
    points
}

/// Hourly arrival-rate profile of a set of demand points: arrivals per hour
/// of day, averaged over the calendar days the data spans.
pub fn hourly_arrival_rates(points: &[&DemandPoint]) -> [f64; 24] {
    let mut rates = [0.0; 24];
    if points.is_empty() {
        return rates;
    }
    let mut counts = [0usize; 24];
    for p in points {
        counts[p.arrival_time.time().hour() as usize] += 1;
    }
    let min_day = points.iter().map(|p| p.arrival_time.date()).min().unwrap();
    let max_day = points.iter().map(|p| p.arrival_time.date()).max().unwrap();
    let days = ((max_day - min_day).num_days() + 1) as f64;
    for h in 0..24 {
        rates[h] = counts[h] as f64 / days;
    }
    rates
}

/// Peak hour of an hourly profile, ties broken by the earliest hour.
pub fn peak_hour(rates: &[f64; 24]) -> usize {
    let mut best = 0;
    for h in 1..24 {
        if rates[h] > rates[best] {
            best = h;
        }
    }
    best
}

/// Demand points as CSV: `lon,lat,weight_kwh,arrival_iso8601,charge_hours,vehicle_id`.
pub fn demands_to_csv(points: &[DemandPoint]) -> String {
    let mut out = String::from("lon,lat,weight_kwh,arrival_iso8601,charge_hours,vehicle_id\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.location.0,
            p.location.1,
            p.weight_kwh,
            p.arrival_time.format("%Y-%m-%dT%H:%M:%S"),
            p.charge_hours,
            p.source_vehicle
        )
        .expect("write to string");
    }
    out
}

/// Parse the demand-point CSV produced by [`demands_to_csv`].
pub fn demands_from_csv(input: &str) -> Result<Vec<DemandPoint>, RowError> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("lon,")) {
            continue;
        }
        let err = |message: String| RowError { line: idx + 1, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}")));
        out.push(DemandPoint {
            location: (num(f[0])?, num(f[1])?),
            weight_kwh: num(f[2])?,
            arrival_time: NaiveDateTime::parse_from_str(f[3], "%Y-%m-%dT%H:%M:%S")
                .map_err(|e| err(format!("bad arrival time {:?}: {e}", f[3])))?,
            charge_hours: num(f[4])?,
            source_vehicle: f[5].to_string(),
        });
    }
    Ok(out)
}
