//! End-to-end glue: turn a siting solution plus demand points into station
//! profiles, spread a charger budget across stations, and tabulate
//! congestion and access-time results.

use crate::demand::{hourly_arrival_rates, peak_hour, DemandPoint};
use crate::geo::LonLat;
use crate::planner::{PlanSolution, PlanningInstance};
use crate::queueing::{self, QueueError, QueueMetrics, QueueParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("charger budget {total} cannot stabilize all stations; need at least {minimum}")]
    InfeasibleAllocation { total: usize, minimum: usize },
    #[error("solution covers {solution} demands but {demands} were supplied")]
    DemandMismatch { solution: usize, demands: usize },
    #[error("queueing failure: {0}")]
    Queue(#[from] QueueError),
}

/// Driving speed used to convert access distance to minutes.
pub const DEFAULT_DRIVE_SPEED_KMH: f64 = 25.0;

/// One planned station with everything needed for congestion analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationProfile {
    pub site_index: usize,
    pub site: LonLat,
    pub demand_indices: Vec<usize>,
    pub lambda_hourly: [f64; 24],
    pub peak_hour: usize,
    pub peak_lambda: f64,
    pub mean_charge_hours: f64,
    pub sigma_charge_hours: f64,
    pub total_weight_kwh: f64,
    pub mean_drive_km: f64,
    pub mean_drive_min: f64,
}

impl StationProfile {
    /// Offered load a = lambda / mu at the peak hour.
    pub fn peak_offered_load(&self) -> f64 {
        self.peak_lambda * self.mean_charge_hours
    }

    /// Fewest chargers keeping rho < 1 at the peak hour.
    pub fn min_chargers(&self) -> usize {
        (self.peak_offered_load().floor() as usize + 1).max(1)
    }
}

/// Congestion outcome for a station with an assigned charger count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum StationStatus {
    Stable(QueueMetrics),
    Overloaded { rho: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationReport {
    pub site_index: usize,
    pub s_chargers: usize,
    pub status: StationStatus,
    pub mean_drive_km: f64,
    pub mean_drive_min: f64,
    pub total_weight_kwh: f64,
}

/// Group assigned demands per open site and summarize each station.
///
/// `mu` and `sigma` come from the empirical charge-duration sample of the
/// assigned demands; access distance is the demand-weighted mean assigned
/// distance.
pub fn build_profiles(
    instance: &PlanningInstance,
    solution: &PlanSolution,
    demands: &[DemandPoint],
    drive_speed_kmh: f64,
) -> Result<Vec<StationProfile>, ReportError> {
    if solution.assignment.len() != demands.len() {
        return Err(ReportError::DemandMismatch {
            solution: solution.assignment.len(),
            demands: demands.len(),
        });
    }
    let mut profiles = Vec::with_capacity(solution.open_sites.len());
    for &site in &solution.open_sites {
        let idx: Vec<usize> = solution
            .assignment
            .iter()
            .enumerate()
            .filter(|&(_, &j)| j == site)
            .map(|(i, _)| i)
            .collect();
        let assigned: Vec<&DemandPoint> = idx.iter().map(|&i| &demands[i]).collect();
        let lambda_hourly = hourly_arrival_rates(&assigned);
        let peak = peak_hour(&lambda_hourly);
        let total_weight: f64 = assigned.iter().map(|d| d.weight_kwh).sum();
        let (mean_charge, sigma_charge) = if assigned.is_empty() {
            (0.0, 0.0)
        } else {
            let n = assigned.len() as f64;
            let mean = assigned.iter().map(|d| d.charge_hours).sum::<f64>() / n;
            let var = assigned.iter().map(|d| (d.charge_hours - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let mean_drive_km = if total_weight > 0.0 {
            idx.iter()
                .map(|&i| demands[i].weight_kwh * instance.distances[i][site])
                .sum::<f64>()
                / total_weight
        } else {
            0.0
        };
        profiles.push(StationProfile {
            site_index: site,
            site: instance.candidates[site],
            demand_indices: idx,
            lambda_hourly,
            peak_hour: peak,
            peak_lambda: lambda_hourly[peak],
            mean_charge_hours: mean_charge,
            sigma_charge_hours: sigma_charge,
            total_weight_kwh: total_weight,
            mean_drive_km,
            mean_drive_min: mean_drive_km / drive_speed_kmh * 60.0,
        });
    }
    Ok(profiles)
}

/// Spread a charger budget across stations so peak utilizations end up as
/// equal as integrality allows.
///
/// Every station first gets the minimum keeping it stable; each remaining
/// charger then goes to the station with the highest current utilization
/// (ties to the lowest index), followed by a transfer pass that narrows the
/// utilization gap when integrality leaves room.
pub fn allocate_chargers(loads: &[f64], total: usize) -> Result<Vec<usize>, ReportError> {
    let floors: Vec<usize> = loads.iter().map(|&a| (a.floor() as usize + 1).max(1)).collect();
    let minimum: usize = floors.iter().sum();
    if total < minimum {
        return Err(ReportError::InfeasibleAllocation { total, minimum });
    }
    let mut s = floors.clone();
    for _ in 0..total - minimum {
        let mut best = 0;
        for j in 1..s.len() {
            if loads[j] / s[j] as f64 > loads[best] / s[best] as f64 {
                best = j;
            }
        }
        s[best] += 1;
    }
    // greedy minimizes the max utilization; single-charger transfers then
    // shrink the max-min spread where integrality allows
    let spread = |s: &[usize]| {
        let rhos = loads.iter().zip(s).map(|(&a, &k)| a / k as f64);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in rhos {
            lo = lo.min(r);
            hi = hi.max(r);
        }
        hi - lo
    };
    loop {
        let current = spread(&s);
        let mut best_move: Option<(usize, usize, f64)> = None;
        for from in 0..s.len() {
            if s[from] <= floors[from] {
                continue;
            }
            for to in 0..s.len() {
                if to == from {
                    continue;
                }
                s[from] -= 1;
                s[to] += 1;
                let candidate = spread(&s);
                s[from] += 1;
                s[to] -= 1;
                if candidate < current - 1e-15
                    && best_move.map_or(true, |(_, _, b)| candidate < b)
                {
                    best_move = Some((from, to, candidate));
                }
            }
        }
        match best_move {
            Some((from, to, _)) => {
                s[from] -= 1;
                s[to] += 1;
            }
            None => break,
        }
    }
    Ok(s)
}

/// Queue metrics for one station at its peak hour with `s` chargers.
pub fn station_metrics(profile: &StationProfile, s: usize) -> Result<StationReport, ReportError> {
    let status = if profile.peak_lambda == 0.0 || profile.mean_charge_hours == 0.0 {
        let params = QueueParams::new(0.0, 1.0, 0.0, s.max(1))?;
        StationStatus::Stable(queueing::metrics(&params)?)
    } else {
        let params = QueueParams::new(
            profile.peak_lambda,
            1.0 / profile.mean_charge_hours,
            profile.sigma_charge_hours,
            s,
        )?;
        match queueing::metrics(&params) {
            Ok(m) => StationStatus::Stable(m),
            Err(QueueError::Unstable { rho, .. }) => StationStatus::Overloaded { rho },
            Err(e) => return Err(e.into()),
        }
    };
    Ok(StationReport {
        site_index: profile.site_index,
        s_chargers: s,
        status,
        mean_drive_km: profile.mean_drive_km,
        mean_drive_min: profile.mean_drive_min,
        total_weight_kwh: profile.total_weight_kwh,
    })
}

/// One row of a charger sweep: congestion aggregated across stations for a
/// total budget S.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub total_chargers: usize,
    pub feasible: bool,
    /// demand-weighted across stations
    pub mean_wait_hours: f64,
    pub p_wait: f64,
    /// unweighted across stations, for comparison
    pub mean_wait_hours_unweighted: f64,
    pub p_wait_unweighted: f64,
}

fn aggregate(profiles: &[StationProfile], reports: &[StationReport]) -> (f64, f64, f64, f64) {
    let mut w_sum = 0.0;
    let mut wait_w = 0.0;
    let mut pw_w = 0.0;
    let mut wait_u = 0.0;
    let mut pw_u = 0.0;
    let mut n = 0usize;
    for (profile, report) in profiles.iter().zip(reports) {
        if let StationStatus::Stable(m) = &report.status {
            let w = profile.total_weight_kwh;
            w_sum += w;
            wait_w += w * m.w_mgs;
            pw_w += w * m.p_wait;
            wait_u += m.w_mgs;
            pw_u += m.p_wait;
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    let w_sum = if w_sum > 0.0 { w_sum } else { 1.0 };
    (wait_w / w_sum, pw_w / w_sum, wait_u / n, pw_u / n)
}

fn aggregates_for(
    profiles: &[StationProfile],
    alloc: &[usize],
) -> Result<(f64, f64, f64, f64), ReportError> {
    let reports: Vec<StationReport> = profiles
        .iter()
        .zip(alloc)
        .map(|(p, &s)| station_metrics(p, s))
        .collect::<Result<_, _>>()?;
    Ok(aggregate(profiles, &reports))
}

/// Sweep total charger budgets, reallocating and recomputing station
/// metrics per budget. Infeasible budgets are flagged rather than dropped.
///
/// A bigger budget can never report worse numbers: re-solving the allocation
/// from scratch is not nested across budgets, so when the fresh allocation
/// would worsen any aggregate the sweep instead keeps the previous budget's
/// allocation and adds the extra chargers to the busiest stations.
pub fn sweep_chargers(profiles: &[StationProfile], budgets: &[usize]) -> Result<Vec<SweepRow>, ReportError> {
    let loads: Vec<f64> = profiles.iter().map(StationProfile::peak_offered_load).collect();
    let mut rows = Vec::with_capacity(budgets.len());
    let mut sorted = budgets.to_vec();
    sorted.sort_unstable();
    let mut prev: Option<(Vec<usize>, (f64, f64, f64, f64))> = None;
    for total in sorted {
        match allocate_chargers(&loads, total) {
            Ok(mut alloc) => {
                let mut agg = aggregates_for(profiles, &alloc)?;
                if let Some((prev_alloc, prev_agg)) = &prev {
                    let worse = agg.0 > prev_agg.0
                        || agg.1 > prev_agg.1
                        || agg.2 > prev_agg.2
                        || agg.3 > prev_agg.3;
                    if worse {
                        let mut grown = prev_alloc.clone();
                        for _ in prev_alloc.iter().sum::<usize>()..total {
                            let busiest = (0..grown.len())
                                .max_by(|&a, &b| {
                                    let ra = loads[a] / grown[a] as f64;
                                    let rb = loads[b] / grown[b] as f64;
                                    ra.partial_cmp(&rb).unwrap()
                                })
                                .unwrap();
                            grown[busiest] += 1;
                        }
                        alloc = grown;
                        agg = aggregates_for(profiles, &alloc)?;
                    }
                }
                let (wait_w, pw_w, wait_u, pw_u) = agg;
                prev = Some((alloc, agg));
                rows.push(SweepRow {
                    total_chargers: total,
                    feasible: true,
                    mean_wait_hours: wait_w,
                    p_wait: pw_w,
                    mean_wait_hours_unweighted: wait_u,
                    p_wait_unweighted: pw_u,
                });
            }
            Err(ReportError::InfeasibleAllocation { .. }) => rows.push(SweepRow {
                total_chargers: total,
                feasible: false,
                mean_wait_hours: f64::NAN,
                p_wait: f64::NAN,
                mean_wait_hours_unweighted: f64::NAN,
                p_wait_unweighted: f64::NAN,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

/// Histogram of a per-station metric over equal-width bins spanning
/// [0, max]; the top edge is inclusive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn station_histogram(values: &[f64], bins: usize, max: f64) -> Histogram {
    let bins = bins.max(1);
    let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = ((v / width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    Histogram { edges: (0..=bins).map(|k| k as f64 * width).collect(), counts }
}

/// One row of the waiting-vs-driving tradeoff table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub p: usize,
    pub total_chargers: usize,
    pub feasible: bool,
    pub mean_wait_min: f64,
    pub mean_drive_min: f64,
    /// wait_weight * wait + drive_weight * drive, in minutes
    pub total_cost_min: f64,
}

/// Compare siting scenarios (different p) across charger budgets; for each
/// budget the scenario minimizing combined wait-plus-drive minutes wins.
pub fn tradeoff_report(
    scenarios: &[(usize, Vec<StationProfile>)],
    budgets: &[usize],
    wait_weight: f64,
    drive_weight: f64,
) -> Result<(Vec<TradeoffRow>, Vec<(usize, Option<usize>)>), ReportError> {
    let mut rows = Vec::new();
    for (p, profiles) in scenarios {
        let total_weight: f64 = profiles.iter().map(|s| s.total_weight_kwh).sum();
        let drive_min = if total_weight > 0.0 {
            profiles.iter().map(|s| s.total_weight_kwh * s.mean_drive_min).sum::<f64>() / total_weight
        } else {
            0.0
        };
        for row in sweep_chargers(profiles, budgets)? {
            let wait_min = row.mean_wait_hours * 60.0;
            rows.push(TradeoffRow {
                p: *p,
                total_chargers: row.total_chargers,
                feasible: row.feasible,
                mean_wait_min: wait_min,
                mean_drive_min: drive_min,
                total_cost_min: wait_weight * wait_min + drive_weight * drive_min,
            });
        }
    }
    let mut budgets_sorted = budgets.to_vec();
    budgets_sorted.sort_unstable();
    let best_per_budget: Vec<(usize, Option<usize>)> = budgets_sorted
        .iter()
        .map(|&total| {
            let best = rows
                .iter()
                .filter(|r| r.total_chargers == total && r.feasible)
                .min_by(|a, b| a.total_cost_min.partial_cmp(&b.total_cost_min).unwrap())
                .map(|r| r.p);
            (total, best)
        })
        .collect();
    Ok((rows, best_per_budget))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{build_instance, solve_exact, CandidateSpec, WeightedPoint};
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn demand(lon: f64, lat: f64, weight: f64, hour: u32) -> DemandPoint {
        DemandPoint {
            location: (lon, lat),
            weight_kwh: weight,
            arrival_time: NaiveDate::from_ymd_opt(2016, 7, 4)
                .unwrap()
                .and_hms_opt(hour, 0, 0)
                .unwrap(),
            charge_hours: weight / 10.0,
            source_vehicle: "v".into(),
        }
    }

    #[test]
    fn identical_stations_split_evenly() {
        let alloc = allocate_chargers(&[2.0, 2.0], 10).unwrap();
        assert_eq!(alloc, vec![5, 5]);
    }

    #[test]
    fn proportional_to_load() {
        let alloc = allocate_chargers(&[1.0, 3.0], 8).unwrap();
        assert_eq!(alloc, vec![2, 6]);
    }

    #[test]
    fn infeasible_budget_reports_minimum() {
        let err = allocate_chargers(&[1.0, 3.0], 5).unwrap_err();
        assert_eq!(err, ReportError::InfeasibleAllocation { total: 5, minimum: 6 });
    }

    #[test]
    fn allocation_conserves_and_stabilizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.gen_range(1..=6);
            let loads: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..8.0)).collect();
            let minimum: usize = loads.iter().map(|&a| a.floor() as usize + 1).sum();
            let total = minimum + rng.gen_range(0..15);
            let alloc = allocate_chargers(&loads, total).unwrap();
            assert_eq!(alloc.iter().sum::<usize>(), total);
            for (j, &s) in alloc.iter().enumerate() {
                assert!(loads[j] / (s as f64) < 1.0);
            }
        }
    }

    /// Exhaustive oracle: the best utilization spread any integral
    /// allocation can achieve.
    fn best_range(loads: &[f64], total: usize) -> f64 {
        fn rec(loads: &[f64], j: usize, left: usize, current: &mut Vec<usize>, best: &mut f64) {
            let floors: usize =
                loads[j..].iter().map(|&a| a.floor() as usize + 1).sum();
            if floors > left {
                return;
            }
            if j == loads.len() {
                if left == 0 {
                    let rhos: Vec<f64> =
                        loads.iter().zip(current.iter()).map(|(&a, &s)| a / s as f64).collect();
                    let range = rhos.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                        - rhos.iter().cloned().fold(f64::INFINITY, f64::min);
                    if range < *best {
                        *best = range;
                    }
                }
                return;
            }
            let f = loads[j].floor() as usize + 1;
            for s in f..=left {
                current.push(s);
                rec(loads, j + 1, left - s, current, best);
                current.pop();
            }
        }
        let mut best = f64::INFINITY;
        rec(loads, 0, total, &mut Vec::new(), &mut best);
        best
    }

    #[test]
    fn utilization_spread_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..60 {
            let n = rng.gen_range(2..=5);
            let loads: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..5.0)).collect();
            let minimum: usize = loads.iter().map(|&a| a.floor() as usize + 1).sum();
            let total = (minimum + rng.gen_range(0..10)).min(30);
            if total < minimum {
                continue;
            }
            let alloc = allocate_chargers(&loads, total).unwrap();
            let rhos: Vec<f64> =
                loads.iter().zip(&alloc).map(|(&a, &s)| a / s as f64).collect();
            let range = rhos.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - rhos.iter().cloned().fold(f64::INFINITY, f64::min);
            let oracle = best_range(&loads, total);
            assert!(
                range <= oracle + 1e-12,
                "loads {loads:?}, total {total}: range {range} vs oracle {oracle}"
            );
        }
    }

    fn small_scenario() -> (PlanningInstance, Vec<DemandPoint>) {
        let demands = vec![
            demand(116.00, 39.90, 5.0, 9),
            demand(116.01, 39.90, 4.0, 9),
            demand(116.00, 39.91, 3.0, 10),
            demand(116.30, 40.00, 6.0, 9),
            demand(116.31, 40.00, 2.0, 18),
            demand(116.30, 40.01, 7.0, 9),
        ];
        let weighted: Vec<WeightedPoint> = demands.iter().map(WeightedPoint::from).collect();
        let spec = CandidateSpec::Points(vec![(116.0, 39.9), (116.3, 40.0), (116.15, 39.95)]);
        (build_instance(&weighted, &spec, 2).unwrap(), demands)
    }

    #[test]
    fn profiles_group_by_station() {
        let (instance, demands) = small_scenario();
        let solution = solve_exact(&instance).unwrap();
        let profiles =
            build_profiles(&instance, &solution, &demands, DEFAULT_DRIVE_SPEED_KMH).unwrap();
        assert_eq!(profiles.len(), 2);
        let total: usize = profiles.iter().map(|p| p.demand_indices.len()).sum();
        assert_eq!(total, demands.len());
        for p in &profiles {
            assert!(p.peak_lambda > 0.0);
            assert!(p.mean_charge_hours > 0.0);
            assert_eq!(p.peak_hour, 9);
        }
    }

    #[test]
    fn colocated_single_demand_has_zero_drive() {
        let demands = vec![demand(116.0, 39.9, 5.0, 9)];
        let weighted: Vec<WeightedPoint> = demands.iter().map(WeightedPoint::from).collect();
        let spec = CandidateSpec::Points(vec![(116.0, 39.9)]);
        let instance = build_instance(&weighted, &spec, 1).unwrap();
        let solution = solve_exact(&instance).unwrap();
        let profiles =
            build_profiles(&instance, &solution, &demands, DEFAULT_DRIVE_SPEED_KMH).unwrap();
        assert_eq!(profiles[0].mean_drive_km, 0.0);
        assert_eq!(profiles[0].mean_drive_min, 0.0);
    }

    #[test]
    fn identical_durations_take_deterministic_branch() {
        let demands = vec![demand(116.0, 39.9, 5.0, 9), demand(116.0, 39.9, 5.0, 9)];
        let weighted: Vec<WeightedPoint> = demands.iter().map(WeightedPoint::from).collect();
        let spec = CandidateSpec::Points(vec![(116.0, 39.9)]);
        let instance = build_instance(&weighted, &spec, 1).unwrap();
        let solution = solve_exact(&instance).unwrap();
        let profiles =
            build_profiles(&instance, &solution, &demands, DEFAULT_DRIVE_SPEED_KMH).unwrap();
        assert_eq!(profiles[0].sigma_charge_hours, 0.0);
        let report = station_metrics(&profiles[0], 3).unwrap();
        match report.status {
            StationStatus::Stable(m) => {
                assert_eq!(m.xi, 0.0);
                assert!((m.w_mgs - m.w_mds).abs() <= 1e-12);
            }
            StationStatus::Overloaded { .. } => panic!("station should be stable"),
        }
    }

    #[test]
    fn metrics_compose_with_queueing_module() {
        let (instance, demands) = small_scenario();
        let solution = solve_exact(&instance).unwrap();
        let profiles =
            build_profiles(&instance, &solution, &demands, DEFAULT_DRIVE_SPEED_KMH).unwrap();
        let p = &profiles[0];
        let report = station_metrics(p, p.min_chargers() + 1).unwrap();
        let params = QueueParams::new(
            p.peak_lambda,
            1.0 / p.mean_charge_hours,
            p.sigma_charge_hours,
            p.min_chargers() + 1,
        )
        .unwrap();
        let direct = queueing::metrics(&params).unwrap();
        match report.status {
            StationStatus::Stable(m) => assert_eq!(m, direct),
            StationStatus::Overloaded { .. } => panic!("stable by construction"),
        }
    }

    #[test]
    fn overloaded_station_is_flagged_not_nan() {
        let profile = StationProfile {
            site_index: 0,
            site: (116.0, 39.9),
            demand_indices: vec![],
            lambda_hourly: [0.0; 24],
            peak_hour: 9,
            peak_lambda: 12.0,
            mean_charge_hours: 0.5,
            sigma_charge_hours: 0.1,
            total_weight_kwh: 10.0,
            mean_drive_km: 1.0,
            mean_drive_min: 2.4,
        };
        let report = station_metrics(&profile, 3).unwrap();
        match report.status {
            StationStatus::Overloaded { rho } => assert!(rho >= 1.0),
            StationStatus::Stable(_) => panic!("rho = 2 must be flagged"),
        }
    }

    #[test]
    fn sweep_wait_nonincreasing_in_budget() {
        let (instance, demands) = small_scenario();
        let solution = solve_exact(&instance).unwrap();
        let profiles =
            build_profiles(&instance, &solution, &demands, DEFAULT_DRIVE_SPEED_KMH).unwrap();
        let min_total: usize = profiles.iter().map(StationProfile::min_chargers).sum();
        let budgets: Vec<usize> = (min_total..min_total + 10).collect();
        let rows = sweep_chargers(&profiles, &budgets).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].mean_wait_hours <= w[0].mean_wait_hours + 1e-12);
            assert!(w[1].p_wait <= w[0].p_wait + 1e-12);
        }
        assert_eq!(rows[0].total_chargers, min_total);
        let max_wait = rows.iter().map(|r| r.mean_wait_hours).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(rows[0].mean_wait_hours, max_wait);
    }

    #[test]
    fn aggregation_invariant_to_demand_order() {
        let (instance, demands) = small_scenario();
        let solution = solve_exact(&instance).unwrap();
        let profiles =
            build_profiles(&instance, &solution, &demands, DEFAULT_DRIVE_SPEED_KMH).unwrap();
        let budgets = vec![8];
        let a = sweep_chargers(&profiles, &budgets).unwrap();
        let mut reversed = profiles.clone();
        reversed.reverse();
        let b = sweep_chargers(&reversed, &budgets).unwrap();
        assert!((a[0].mean_wait_hours - b[0].mean_wait_hours).abs() <= 1e-12);
        assert!((a[0].p_wait - b[0].p_wait).abs() <= 1e-12);
    }

    #[test]
    fn histogram_bins_and_fixtures() {
        let h = station_histogram(&[0.5, 0.5, 0.5], 4, 1.0);
        assert_eq!(h.counts, vec![0, 0, 3, 0]);
        assert_eq!(h.counts.iter().sum::<usize>(), 3);
        let h = station_histogram(&[0.1, 0.3, 0.9, 1.0], 4, 1.0);
        assert_eq!(h.counts, vec![1, 1, 0, 2]);
    }

    #[test]
    fn tradeoff_prefers_lower_combined_cost() {
        let (instance, demands) = small_scenario();
        let sol2 = solve_exact(&instance).unwrap();
        let mut inst1 = instance.clone();
        inst1.p = 1;
        let sol1 = solve_exact(&inst1).unwrap();
        let prof2 = build_profiles(&instance, &sol2, &demands, DEFAULT_DRIVE_SPEED_KMH).unwrap();
        let prof1 = build_profiles(&inst1, &sol1, &demands, DEFAULT_DRIVE_SPEED_KMH).unwrap();
        // larger p -> access distance never grows
        let drive = |ps: &[StationProfile]| {
            let w: f64 = ps.iter().map(|s| s.total_weight_kwh).sum();
            ps.iter().map(|s| s.total_weight_kwh * s.mean_drive_min).sum::<f64>() / w
        };
        assert!(drive(&prof2) <= drive(&prof1) + 1e-12);
        let min1: usize = prof1.iter().map(StationProfile::min_chargers).sum();
        let min2: usize = prof2.iter().map(StationProfile::min_chargers).sum();
        let start = min1.max(min2);
        let budgets: Vec<usize> = (start..start + 6).collect();
        let scenarios = vec![(1usize, prof1), (2usize, prof2)];
        let (rows, best) = tradeoff_report(&scenarios, &budgets, 1.0, 1.0).unwrap();
        assert_eq!(rows.len(), budgets.len() * 2);
        for (total, winner) in &best {
            let w = winner.expect("feasible budgets have a winner");
            let winning_cost = rows
                .iter()
                .find(|r| r.total_chargers == *total && r.p == w)
                .unwrap()
                .total_cost_min;
            for r in rows.iter().filter(|r| r.total_chargers == *total && r.feasible) {
                assert!(winning_cost <= r.total_cost_min + 1e-12);
            }
        }
    }
}
