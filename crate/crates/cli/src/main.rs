//! Command-line pipeline: generate or ingest trajectories, extract charging
//! demand, site stations, and tabulate congestion.

use anyhow::{bail, Context, Result};
use chargesim::demand::{
    self, demands_from_csv, demands_to_csv, extract_demands, parse_records, VehicleParams,
};
use chargesim::planner::{
    build_instance, solve_exact_with_limit, solve_heuristic, verify_relaxation, CandidateSpec,
    Optimality, PlanSolution, PlanningInstance, WeightedPoint, DEFAULT_EXACT_LIMIT,
};
use chargesim::queueing::QueueParams;
use chargesim::reporting::{
    allocate_chargers, build_profiles, station_histogram, station_metrics, sweep_chargers,
    tradeoff_report, StationProfile, StationStatus, DEFAULT_DRIVE_SPEED_KMH,
};
use chargesim::simulator::{simulate, ArrivalSpec, ServiceSpec, SimConfig};
use chargesim::synth::{generate_trajectories, records_to_csv, SynthConfig};
use clap::{Parser, Subcommand};
use serde::Deserialize;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "chargesim", about = "Charging-station siting and congestion analysis")]
struct Cli {
    /// TOML file with default parameters; CLI flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic trajectory records
    Synth {
        #[arg(long)]
        vehicles: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        dwell_prob: Option<f64>,
        #[arg(long)]
        peak_hour: Option<u32>,
        /// output CSV (default <out-dir>/records.csv)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn trajectory records into charging-demand points
    Extract {
        #[arg(long)]
        input: PathBuf,
        /// keep this fraction of vehicles, sampled uniformly by seed
        #[arg(long)]
        pev_fraction: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Site p stations on the demand set (p-median)
    Plan {
        #[arg(long)]
        demands: PathBuf,
        #[arg(short, long)]
        p: usize,
        /// candidate grid size (exact count)
        #[arg(long, default_value_t = 500)]
        candidates: usize,
        /// exact | heuristic | auto
        #[arg(long, default_value = "auto")]
        method: String,
        /// also check that relaxing the assignment variables keeps the optimum
        #[arg(long)]
        verify_relaxation: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-station congestion metrics for a planned scenario
    Analyze {
        #[arg(long)]
        demands: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// total charger budget across all stations
        #[arg(long)]
        chargers: usize,
        /// emit all 24 hourly tables instead of peak hour only
        #[arg(long)]
        all_hours: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Discrete-event simulation of one station queue
    Simulate {
        #[arg(long)]
        lambda: f64,
        /// deterministic | exponential | erlang<k> | lognormal
        #[arg(long, default_value = "exponential")]
        service: String,
        /// mean service time in hours
        #[arg(long)]
        mean: f64,
        /// service-time standard deviation (lognormal only)
        #[arg(long, default_value_t = 0.0)]
        std: f64,
        #[arg(long)]
        servers: usize,
        #[arg(long, default_value_t = 1_000_000)]
        arrivals: usize,
        #[arg(long, default_value_t = 20)]
        replications: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep total charger budgets for one plan
    Sweep {
        #[arg(long)]
        demands: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        s_min: usize,
        #[arg(long)]
        s_max: usize,
        #[arg(long, default_value_t = 1)]
        step: usize,
        /// also emit station histograms at this budget
        #[arg(long)]
        hist_at: Option<usize>,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Waiting-vs-driving tradeoff across station counts
    Tradeoff {
        #[arg(long)]
        demands: PathBuf,
        /// comma-separated station counts, e.g. 5,10
        #[arg(long, value_delimiter = ',')]
        p_values: Vec<usize>,
        #[arg(long, default_value_t = 500)]
        candidates: usize,
        #[arg(long)]
        s_min: usize,
        #[arg(long)]
        s_max: usize,
        #[arg(long, default_value_t = 1)]
        step: usize,
        #[arg(long, default_value_t = 1.0)]
        wait_weight: f64,
        #[arg(long, default_value_t = 1.0)]
        drive_weight: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flat key-value defaults loadable from --config.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n_vehicles: Option<usize>,
    n_days: Option<usize>,
    bbox: Option<[f64; 4]>,
    hotspot_count: Option<usize>,
    trips_per_day_mean: Option<f64>,
    dwell_prob: Option<f64>,
    peak_hour: Option<u32>,
    battery_capacity_kwh: Option<f64>,
    electric_range_km: Option<f64>,
    charger_power_kw: Option<f64>,
    dwell_threshold_min: Option<f64>,
    dwell_radius_m: Option<f64>,
    gap_split_min: Option<f64>,
    drive_speed_kmh: Option<f64>,
    exact_limit: Option<usize>,
}

fn load_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn vehicle_params(cfg: &FileConfig) -> VehicleParams {
    let mut params = VehicleParams::default();
    if let Some(v) = cfg.battery_capacity_kwh {
        params.battery_capacity_kwh = v;
    }
    if let Some(v) = cfg.electric_range_km {
        params.electric_range_km = v;
    }
    if let Some(v) = cfg.charger_power_kw {
        params.charger_power_kw = v;
    }
    if let Some(v) = cfg.dwell_threshold_min {
        params.dwell_threshold_min = v;
    }
    if let Some(v) = cfg.dwell_radius_m {
        params.dwell_radius_m = v;
    }
    if let Some(v) = cfg.gap_split_min {
        params.gap_split_min = v;
    }
    params
}

#[derive(serde::Serialize, serde::Deserialize)]
struct PlanFile {
    p: usize,
    candidates: Vec<(f64, f64)>,
    open_sites: Vec<usize>,
    open_site_coords: Vec<(f64, f64)>,
    assignment: Vec<usize>,
    objective: f64,
    optimality: String,
    wall_time_s: f64,
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_manifest(out_dir: &Path, command: &str, seed: u64, params: serde_json::Value) -> Result<()> {
    let manifest = serde_json::json!({
        "command": command,
        "seed": seed,
        "params": params,
    });
    let path = out_dir.join(format!("manifest_{command}.json"));
    write_output(&path, &serde_json::to_string_pretty(&manifest)?)
}

fn load_demands(path: &Path) -> Result<Vec<demand::DemandPoint>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    demands_from_csv(&text).map_err(|e| anyhow::anyhow!("{}:{} {}", path.display(), e.line, e.message))
}

fn load_plan(path: &Path) -> Result<PlanFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Rebuild the planning instance and solution a plan file describes.
fn instance_from_plan(
    plan: &PlanFile,
    points: &[demand::DemandPoint],
) -> Result<(PlanningInstance, PlanSolution)> {
    let weighted: Vec<WeightedPoint> = points.iter().map(WeightedPoint::from).collect();
    let instance = build_instance(&weighted, &CandidateSpec::Points(plan.candidates.clone()), plan.p)?;
    if plan.assignment.len() != points.len() {
        bail!("plan assigns {} demands but {} were supplied", plan.assignment.len(), points.len());
    }
    let solution = PlanSolution {
        open_sites: plan.open_sites.clone(),
        assignment: plan.assignment.clone(),
        objective: plan.objective,
        optimality: if plan.optimality == "proven_optimal" {
            Optimality::ProvenOptimal
        } else {
            Optimality::Heuristic
        },
    };
    Ok((instance, solution))
}

fn profiles_for(
    plan_path: &Path,
    demands_path: &Path,
    drive_speed: f64,
) -> Result<(Vec<StationProfile>, Vec<demand::DemandPoint>)> {
    let points = load_demands(demands_path)?;
    let plan = load_plan(plan_path)?;
    let (instance, solution) = instance_from_plan(&plan, &points)?;
    let profiles = build_profiles(&instance, &solution, &points, drive_speed)?;
    Ok((profiles, points))
}

fn parse_service(name: &str, mean: f64, std: f64) -> Result<ServiceSpec> {
    let lower = name.to_ascii_lowercase();
    Ok(match lower.as_str() {
        "deterministic" | "det" => ServiceSpec::Deterministic { mean },
        "exponential" | "exp" => ServiceSpec::Exponential { mean },
        "lognormal" => ServiceSpec::Lognormal { mean, std_dev: std },
        _ if lower.starts_with("erlang") => {
            let k: u32 = lower["erlang".len()..].parse().context("erlang<k> needs a phase count")?;
            ServiceSpec::Erlang { k, mean }
        }
        _ => bail!("unknown service distribution {name:?}"),
    })
}

fn run_plan(
    points: &[demand::DemandPoint],
    p: usize,
    candidates: usize,
    method: &str,
    seed: u64,
    exact_limit: usize,
) -> Result<(PlanFile, PlanningInstance)> {
    let weighted: Vec<WeightedPoint> = points.iter().map(WeightedPoint::from).collect();
    let instance = build_instance(&weighted, &CandidateSpec::Grid { target: candidates }, p)?;
    let started = Instant::now();
    let solution = match method {
        "exact" => solve_exact_with_limit(&instance, usize::MAX)?,
        "heuristic" => solve_heuristic(&instance, seed)?,
        "auto" => {
            if instance.candidates.len() <= exact_limit {
                solve_exact_with_limit(&instance, exact_limit)?
            } else {
                solve_heuristic(&instance, seed)?
            }
        }
        other => bail!("unknown method {other:?}"),
    };
    let wall_time_s = started.elapsed().as_secs_f64();
    let plan = PlanFile {
        p,
        candidates: instance.candidates.clone(),
        open_site_coords: solution.open_sites.iter().map(|&j| instance.candidates[j]).collect(),
        open_sites: solution.open_sites.clone(),
        assignment: solution.assignment.clone(),
        objective: solution.objective,
        optimality: match solution.optimality {
            Optimality::ProvenOptimal => "proven_optimal".into(),
            Optimality::Heuristic => "heuristic".into(),
        },
        wall_time_s,
    };
    Ok((plan, instance))
}

fn stations_csv(profiles: &[StationProfile], alloc: &[usize], all_hours: bool) -> Result<String> {
    let mut out = String::from(
        "site_index,lon,lat,demands,total_kwh,peak_hour,peak_lambda,mean_charge_h,sigma_charge_h,\
         chargers,rho,w_mgs_h,p_wait,mean_drive_km,mean_drive_min,status\n",
    );
    for (profile, &s) in profiles.iter().zip(alloc) {
        let report = station_metrics(profile, s)?;
        let (rho, w, pw, status) = match &report.status {
            StationStatus::Stable(m) => (m.rho, m.w_mgs, m.p_wait, "stable"),
            StationStatus::Overloaded { rho } => (*rho, f64::NAN, f64::NAN, "overloaded"),
        };
        writeln!(
            out,
            "{},{},{},{},{:.6},{},{:.6},{:.6},{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            profile.site_index,
            profile.site.0,
            profile.site.1,
            profile.demand_indices.len(),
            profile.total_weight_kwh,
            profile.peak_hour,
            profile.peak_lambda,
            profile.mean_charge_hours,
            profile.sigma_charge_hours,
            s,
            rho,
            w,
            pw,
            profile.mean_drive_km,
            profile.mean_drive_min,
            status
        )?;
        if all_hours {
            for h in 0..24 {
                let lambda = profile.lambda_hourly[h];
                let params = QueueParams::new(
                    lambda,
                    1.0 / profile.mean_charge_hours.max(1e-12),
                    profile.sigma_charge_hours,
                    s,
                )?;
                match chargesim::queueing::metrics(&params) {
                    Ok(m) => writeln!(
                        out,
                        "#hour,{},{},{:.6},{:.6},{:.6}",
                        profile.site_index, h, lambda, m.w_mgs, m.p_wait
                    )?,
                    Err(_) => writeln!(
                        out,
                        "#hour,{},{},{:.6},overloaded,overloaded",
                        profile.site_index, h, lambda
                    )?,
                }
            }
        }
    }
    Ok(out)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli.config)?;
    fs::create_dir_all(&cli.out_dir)?;
    let seed = cli.seed;
    let out_dir = cli.out_dir.clone();

    match &cli.command {
        Command::Synth { vehicles, days, dwell_prob, peak_hour, out } => {
            let mut config = SynthConfig { seed, ..Default::default() };
            if let Some(v) = cfg.n_vehicles {
                config.n_vehicles = v;
            }
            if let Some(v) = cfg.n_days {
                config.n_days = v;
            }
            if let Some(v) = cfg.bbox {
                config.bbox = (v[0], v[1], v[2], v[3]);
            }
            if let Some(v) = cfg.hotspot_count {
                config.hotspot_count = v;
            }
            if let Some(v) = cfg.trips_per_day_mean {
                config.trips_per_day_mean = v;
            }
            if let Some(v) = cfg.dwell_prob {
                config.dwell_prob = v;
            }
            if let Some(v) = cfg.peak_hour {
                config.peak_hour = v;
            }
            if let Some(v) = vehicles {
                config.n_vehicles = *v;
            }
            if let Some(v) = days {
                config.n_days = *v;
            }
            if let Some(v) = dwell_prob {
                config.dwell_prob = *v;
            }
            if let Some(v) = peak_hour {
                config.peak_hour = *v;
            }
            let records = generate_trajectories(&config)?;
            let path = out.clone().unwrap_or_else(|| out_dir.join("records.csv"));
            write_output(&path, &records_to_csv(&records))?;
            write_manifest(&out_dir, "synth", seed, serde_json::to_value(&config)?)?;
        }
        Command::Extract { input, pev_fraction, out } => {
            let text = fs::read_to_string(input)?;
            let mut parsed = parse_records(&text);
            for e in &parsed.errors {
                eprintln!("{}:{}: {}", input.display(), e.line, e.message);
            }
            if let Some(fraction) = pev_fraction {
                // uniform vehicle sample, stable under the seed
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut ids: Vec<String> = parsed.by_vehicle.keys().cloned().collect();
                ids.shuffle(&mut rng);
                let keep = ((ids.len() as f64 * fraction).round() as usize).min(ids.len());
                let kept: BTreeSet<String> = ids.into_iter().take(keep).collect();
                parsed.by_vehicle.retain(|id, _| kept.contains(id));
            }
            let params = vehicle_params(&cfg);
            let points = extract_demands(&parsed, &params);
            let path = out.clone().unwrap_or_else(|| out_dir.join("demands.csv"));
            write_output(&path, &demands_to_csv(&points))?;
            write_manifest(
                &out_dir,
                "extract",
                seed,
                serde_json::json!({
                    "input": input, "pev_fraction": pev_fraction,
                    "params": params, "rows_rejected": parsed.errors.len(),
                    "demand_points": points.len(),
                }),
            )?;
        }
        Command::Plan { demands, p, candidates, method, verify_relaxation: verify, out } => {
            let points = load_demands(demands)?;
            let exact_limit = cfg.exact_limit.unwrap_or(DEFAULT_EXACT_LIMIT);
            let (plan, instance) = run_plan(&points, *p, *candidates, method, seed, exact_limit)?;
            if *verify {
                let report = verify_relaxation(&instance)?;
                println!(
                    "relaxation check: binary {:.9} vs relaxed {:.9}, {} tie(s)",
                    report.binary_objective,
                    report.relaxed_objective,
                    report.fractional_ties.len()
                );
            }
            let path = out.clone().unwrap_or_else(|| out_dir.join("plan.json"));
            write_output(&path, &serde_json::to_string_pretty(&plan)?)?;
            write_manifest(
                &out_dir,
                "plan",
                seed,
                serde_json::json!({
                    "demands": demands, "p": p, "candidates": candidates,
                    "method": method, "objective": plan.objective,
                    "optimality": plan.optimality, "wall_time_s": plan.wall_time_s,
                }),
            )?;
        }
        Command::Analyze { demands, plan, chargers, all_hours, out } => {
            let speed = cfg.drive_speed_kmh.unwrap_or(DEFAULT_DRIVE_SPEED_KMH);
            let (profiles, _) = profiles_for(plan, demands, speed)?;
            let loads: Vec<f64> = profiles.iter().map(StationProfile::peak_offered_load).collect();
            let alloc = allocate_chargers(&loads, *chargers)?;
            let csv = stations_csv(&profiles, &alloc, *all_hours)?;
            let path = out.clone().unwrap_or_else(|| out_dir.join("stations.csv"));
            write_output(&path, &csv)?;
            write_manifest(
                &out_dir,
                "analyze",
                seed,
                serde_json::json!({
                    "demands": demands, "plan": plan, "chargers": chargers,
                    "drive_speed_kmh": speed,
                }),
            )?;
        }
        Command::Simulate { lambda, service, mean, std, servers, arrivals, replications, out } => {
            let spec = parse_service(service, *mean, *std)?;
            let mut config = SimConfig::constant(*lambda, spec, *servers, *arrivals, seed);
            config.replications = *replications;
            config.arrival = ArrivalSpec::Constant(*lambda);
            let result = simulate(&config)?;
            println!(
                "mean wait {:.6} +- {:.6} h, P(wait) {:.6} +- {:.6}, utilization {:.4}",
                result.mean_wait,
                result.mean_wait_half_width,
                result.p_wait,
                result.p_wait_half_width,
                result.utilization_observed
            );
            let path = out.clone().unwrap_or_else(|| out_dir.join("sim.json"));
            write_output(&path, &serde_json::to_string_pretty(&result)?)?;
            write_manifest(&out_dir, "simulate", seed, serde_json::to_value(&config)?)?;
        }
        Command::Sweep { demands, plan, s_min, s_max, step, hist_at, bins, out } => {
            let speed = cfg.drive_speed_kmh.unwrap_or(DEFAULT_DRIVE_SPEED_KMH);
            let (profiles, _) = profiles_for(plan, demands, speed)?;
            let budgets: Vec<usize> = (*s_min..=*s_max).step_by((*step).max(1)).collect();
            let rows = sweep_chargers(&profiles, &budgets)?;
            let mut csv = String::from(
                "total_chargers,feasible,mean_wait_h,p_wait,mean_wait_h_unweighted,p_wait_unweighted\n",
            );
            for r in &rows {
                writeln!(
                    csv,
                    "{},{},{:.6},{:.6},{:.6},{:.6}",
                    r.total_chargers,
                    r.feasible,
                    r.mean_wait_hours,
                    r.p_wait,
                    r.mean_wait_hours_unweighted,
                    r.p_wait_unweighted
                )?;
            }
            let path = out.clone().unwrap_or_else(|| out_dir.join("sweep.csv"));
            write_output(&path, &csv)?;
            if let Some(total) = hist_at {
                let loads: Vec<f64> =
                    profiles.iter().map(StationProfile::peak_offered_load).collect();
                let alloc = allocate_chargers(&loads, *total)?;
                let mut waits = Vec::new();
                let mut pwaits = Vec::new();
                for (profile, &s) in profiles.iter().zip(&alloc) {
                    if let StationStatus::Stable(m) = station_metrics(profile, s)?.status {
                        waits.push(m.w_mgs);
                        pwaits.push(m.p_wait);
                    }
                }
                for (name, values, max) in [
                    ("hist_wait.csv", &waits, waits.iter().cloned().fold(0.0, f64::max)),
                    ("hist_pwait.csv", &pwaits, 1.0),
                ] {
                    let hist = station_histogram(values, *bins, max);
                    let mut csv = String::from("bin_low,bin_high,count\n");
                    for (k, &count) in hist.counts.iter().enumerate() {
                        writeln!(csv, "{:.6},{:.6},{}", hist.edges[k], hist.edges[k + 1], count)?;
                    }
                    write_output(&out_dir.join(name), &csv)?;
                }
            }
            write_manifest(
                &out_dir,
                "sweep",
                seed,
                serde_json::json!({
                    "demands": demands, "plan": plan, "s_min": s_min, "s_max": s_max,
                    "step": step, "hist_at": hist_at, "bins": bins,
                }),
            )?;
        }
        Command::Tradeoff {
            demands,
            p_values,
            candidates,
            s_min,
            s_max,
            step,
            wait_weight,
            drive_weight,
            out,
        } => {
            let points = load_demands(demands)?;
            let speed = cfg.drive_speed_kmh.unwrap_or(DEFAULT_DRIVE_SPEED_KMH);
            let exact_limit = cfg.exact_limit.unwrap_or(DEFAULT_EXACT_LIMIT);
            let mut scenarios = Vec::new();
            for &p in p_values {
                let (plan, instance) = run_plan(&points, p, *candidates, "auto", seed, exact_limit)?;
                let (_, solution) = instance_from_plan(&plan, &points)?;
                let profiles = build_profiles(&instance, &solution, &points, speed)?;
                scenarios.push((p, profiles));
            }
            let budgets: Vec<usize> = (*s_min..=*s_max).step_by((*step).max(1)).collect();
            let (rows, best) = tradeoff_report(&scenarios, &budgets, *wait_weight, *drive_weight)?;
            let mut csv =
                String::from("p,total_chargers,feasible,mean_wait_min,mean_drive_min,total_cost_min\n");
            for r in &rows {
                writeln!(
                    csv,
                    "{},{},{},{:.6},{:.6},{:.6}",
                    r.p, r.total_chargers, r.feasible, r.mean_wait_min, r.mean_drive_min, r.total_cost_min
                )?;
            }
            writeln!(csv, "# best_p_per_budget")?;
            for (total, winner) in &best {
                match winner {
                    Some(p) => writeln!(csv, "#,{total},{p}")?,
                    None => writeln!(csv, "#,{total},infeasible")?,
                }
            }
            let path = out.clone().unwrap_or_else(|| out_dir.join("tradeoff.csv"));
            write_output(&path, &csv)?;
            write_manifest(
                &out_dir,
                "tradeoff",
                seed,
                serde_json::json!({
                    "demands": demands, "p_values": p_values, "candidates": candidates,
                    "s_min": s_min, "s_max": s_max, "step": step,
                    "wait_weight": wait_weight, "drive_weight": drive_weight,
                }),
            )?;
        }
    }
    Ok(())
}
