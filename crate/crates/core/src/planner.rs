//! p-median siting of charging stations: pick p candidate locations
//! minimizing the total demand-weighted distance to the nearest open site.
//!
//! Small and medium instances are solved exactly by branch-and-bound over
//! the site variables, seeded with the interchange heuristic as incumbent.
//! Large instances use greedy construction plus Teitz-Bart vertex
//! interchange. Assignment is always nearest-open-site, ties broken by the
//! lowest site index, so results are deterministic.

use crate::demand::DemandPoint;
use crate::geo::{haversine_km, LonLat};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("p = {p} exceeds the {n} candidate sites")]
    TooFewCandidates { p: usize, n: usize },
    #[error("instance has {n} candidates, above the exact-size limit {limit}; use the heuristic solver")]
    TooLargeForExact { n: usize, limit: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}

/// Demand as the planner sees it: a location and a positive weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub location: LonLat,
    pub weight: f64,
}

impl From<&DemandPoint> for WeightedPoint {
    fn from(d: &DemandPoint) -> Self {
        Self { location: d.location, weight: d.weight_kwh }
    }
}

/// How candidate sites are supplied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CandidateSpec {
    /// Explicit site coordinates.
    Points(Vec<LonLat>),
    /// Uniform grid over the demand bounding box with (about) this many
    /// cells; the grid dimensions are the factor pair of the target count
    /// closest to the bbox aspect ratio, so the count is met exactly.
    Grid { target: usize },
    GridDims { rows: usize, cols: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanningInstance {
    pub candidates: Vec<LonLat>,
    pub demands: Vec<WeightedPoint>,
    /// distances[i][j] = km from demand i to candidate j
    pub distances: Vec<Vec<f64>>,
    pub p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimality {
    ProvenOptimal,
    Heuristic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanSolution {
    pub open_sites: Vec<usize>,
    /// assignment[i] = open candidate index serving demand i
    pub assignment: Vec<usize>,
    pub objective: f64,
    pub optimality: Optimality,
}

pub const DEFAULT_EXACT_LIMIT: usize = 60;

impl PlanningInstance {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let n = self.candidates.len();
        if self.p < 1 || self.p > n {
            return Err(PlannerError::TooFewCandidates { p: self.p, n });
        }
        if self.demands.is_empty() {
            return Err(PlannerError::InvalidInstance("no demand points".into()));
        }
        if self.distances.len() != self.demands.len()
            || self.distances.iter().any(|row| row.len() != n)
        {
            return Err(PlannerError::InvalidInstance("distance matrix shape mismatch".into()));
        }
        if self.demands.iter().any(|d| !(d.weight > 0.0)) {
            return Err(PlannerError::InvalidInstance("all weights must be > 0".into()));
        }
        if self.distances.iter().flatten().any(|&d| !(d >= 0.0)) {
            return Err(PlannerError::InvalidInstance("all distances must be >= 0".into()));
        }
        Ok(())
    }

    /// Objective and assignment for a given open-site set: each demand goes
    /// to the nearest open site, ties to the lowest index.
    pub fn evaluate(&self, open: &[usize]) -> (f64, Vec<usize>) {
        let mut objective = 0.0;
        let mut assignment = Vec::with_capacity(self.demands.len());
        for (i, d) in self.demands.iter().enumerate() {
            let mut best = open[0];
            for &j in &open[1..] {
                if self.distances[i][j] < self.distances[i][best] {
                    best = j;
                }
            }
            objective += d.weight * self.distances[i][best];
            assignment.push(best);
        }
        (objective, assignment)
    }
}

fn grid_dims(target: usize, bbox: (f64, f64, f64, f64)) -> (usize, usize) {
    let aspect = ((bbox.3 - bbox.1) / (bbox.2 - bbox.0)).abs().max(1e-9);
    let mut best = (1, target);
    let mut best_err = f64::INFINITY;
    for rows in 1..=target {
        if target % rows != 0 {
            continue;
        }
        let cols = target / rows;
        let err = ((rows as f64 / cols as f64).ln() - aspect.ln()).abs();
        if err < best_err {
            best_err = err;
            best = (rows, cols);
        }
    }
    best
}

/// Build an instance from demand points and a candidate specification,
/// distances by great-circle.
pub fn build_instance(
    demands: &[WeightedPoint],
    candidates: &CandidateSpec,
    p: usize,
) -> Result<PlanningInstance, PlannerError> {
    if demands.is_empty() {
        return Err(PlannerError::InvalidInstance("no demand points".into()));
    }
    let sites = match candidates {
        CandidateSpec::Points(points) => points.clone(),
        CandidateSpec::Grid { target } => {
            let bbox = demand_bbox(demands);
            let (rows, cols) = grid_dims((*target).max(1), bbox);
            grid_centers(bbox, rows, cols)
        }
        CandidateSpec::GridDims { rows, cols } => {
            grid_centers(demand_bbox(demands), (*rows).max(1), (*cols).max(1))
        }
    };
    let distances: Vec<Vec<f64>> = demands
        .iter()
        .map(|d| sites.iter().map(|&s| haversine_km(d.location, s)).collect())
        .collect();
    let instance = PlanningInstance { candidates: sites, demands: demands.to_vec(), distances, p };
    instance.validate()?;
    Ok(instance)
}

fn demand_bbox(demands: &[WeightedPoint]) -> (f64, f64, f64, f64) {
    let mut bbox = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for d in demands {
        bbox.0 = bbox.0.min(d.location.0);
        bbox.1 = bbox.1.min(d.location.1);
        bbox.2 = bbox.2.max(d.location.0);
        bbox.3 = bbox.3.max(d.location.1);
    }
    // degenerate demand clouds still get a usable box
    if bbox.2 - bbox.0 < 1e-9 {
        bbox.0 -= 0.005;
        bbox.2 += 0.005;
    }
    if bbox.3 - bbox.1 < 1e-9 {
        bbox.1 -= 0.005;
        bbox.3 += 0.005;
    }
    bbox
}

fn grid_centers(bbox: (f64, f64, f64, f64), rows: usize, cols: usize) -> Vec<LonLat> {
    let (x0, y0, x1, y1) = bbox;
    let dx = (x1 - x0) / cols as f64;
    let dy = (y1 - y0) / rows as f64;
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push((x0 + (c as f64 + 0.5) * dx, y0 + (r as f64 + 0.5) * dy));
        }
    }
    out
}

/// Teitz-Bart vertex interchange from a starting set: repeatedly apply the
/// best single open/closed swap until none improves. Uses Whitaker's
/// first/second-nearest bookkeeping so one pass is O(|U| |V|).
fn interchange(instance: &PlanningInstance, mut open: Vec<usize>) -> Vec<usize> {
    let n = instance.candidates.len();
    let m = instance.demands.len();
    if open.len() == n {
        return open;
    }
    loop {
        let mut is_open = vec![false; n];
        for &j in &open {
            is_open[j] = true;
        }
        // nearest and second-nearest open site per demand
        let mut d1 = vec![f64::INFINITY; m];
        let mut d2 = vec![f64::INFINITY; m];
        let mut nearest = vec![usize::MAX; m];
        for i in 0..m {
            for &j in &open {
                let d = instance.distances[i][j];
                if d < d1[i] || (d == d1[i] && j < nearest[i]) {
                    d2[i] = d1[i];
                    d1[i] = d;
                    nearest[i] = j;
                } else if d < d2[i] {
                    d2[i] = d;
                }
            }
        }
        let mut best_delta = -1e-12;
        let mut best_swap: Option<(usize, usize)> = None;
        for add in 0..n {
            if is_open[add] {
                continue;
            }
            let mut gain = 0.0;
            let mut loss = vec![0.0; open.len()];
            for i in 0..m {
                let da = instance.distances[i][add];
                let w = instance.demands[i].weight;
                if da < d1[i] {
                    gain += w * (d1[i] - da);
                } else {
                    // only charged when the demand's current site is removed
                    let reassigned = da.min(d2[i]);
                    let idx = open.iter().position(|&j| j == nearest[i]).unwrap();
                    loss[idx] += w * (reassigned - d1[i]);
                }
            }
            for (k, &remove) in open.iter().enumerate() {
                let delta = loss[k] - gain;
                if delta < best_delta {
                    best_delta = delta;
                    best_swap = Some((add, remove));
                }
            }
        }
        match best_swap {
            Some((add, remove)) => {
                open.retain(|&j| j != remove);
                open.push(add);
                open.sort_unstable();
            }
            None => break,
        }
    }
    open
}

/// Greedy construction: add the site with the largest objective decrease
/// until p sites are open. Ties go to the lowest index.
fn greedy_open(instance: &PlanningInstance) -> Vec<usize> {
    let n = instance.candidates.len();
    let m = instance.demands.len();
    let mut open = Vec::with_capacity(instance.p);
    let mut best_dist = vec![f64::INFINITY; m];
    for _ in 0..instance.p {
        let mut best_j = usize::MAX;
        let mut best_cost = f64::INFINITY;
        for j in 0..n {
            if open.contains(&j) {
                continue;
            }
            let cost: f64 = (0..m)
                .map(|i| instance.demands[i].weight * best_dist[i].min(instance.distances[i][j]))
                .sum();
            if cost < best_cost {
                best_cost = cost;
                best_j = j;
            }
        }
        open.push(best_j);
        for i in 0..m {
            best_dist[i] = best_dist[i].min(instance.distances[i][best_j]);
        }
    }
    open.sort_unstable();
    open
}

fn solution_from_open(instance: &PlanningInstance, open: Vec<usize>, optimality: Optimality) -> PlanSolution {
    let (objective, assignment) = instance.evaluate(&open);
    PlanSolution { open_sites: open, assignment, objective, optimality }
}

/// Greedy construction plus vertex interchange, with a second seeded random
/// start; never worse than greedy alone.
pub fn solve_heuristic(instance: &PlanningInstance, seed: u64) -> Result<PlanSolution, PlannerError> {
    instance.validate()?;
    let greedy = interchange(instance, greedy_open(instance));
    let mut best = greedy;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..instance.candidates.len()).collect();
    indices.shuffle(&mut rng);
    let random_start: Vec<usize> = {
        let mut s = indices[..instance.p].to_vec();
        s.sort_unstable();
        s
    };
    let alt = interchange(instance, random_start);
    if instance.evaluate(&alt).0 < instance.evaluate(&best).0 {
        best = alt;
    }
    Ok(solution_from_open(instance, best, Optimality::Heuristic))
}

/// Lagrangian lower bound from relaxing the one-station-per-demand
/// constraint with the given multipliers. Valid for any multiplier vector.
pub fn lower_bound(instance: &PlanningInstance, multipliers: &[f64]) -> f64 {
    let n = instance.candidates.len();
    // v_j = sum_i min(0, w_i d_ij - u_i); pick the p most negative
    let mut site_values: Vec<f64> = (0..n)
        .map(|j| {
            instance
                .demands
                .iter()
                .enumerate()
                .map(|(i, d)| (d.weight * instance.distances[i][j] - multipliers[i]).min(0.0))
                .sum()
        })
        .collect();
    site_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    multipliers.iter().sum::<f64>() + site_values[..instance.p].iter().sum::<f64>()
}

/// Subgradient ascent on the Lagrangian dual; returns the best bound seen.
pub fn subgradient_bound(instance: &PlanningInstance, upper_bound: f64, iterations: usize) -> f64 {
    let m = instance.demands.len();
    let n = instance.candidates.len();
    // start from each demand's cheapest assignment cost
    let mut u: Vec<f64> = (0..m)
        .map(|i| {
            let min_d = instance.distances[i].iter().cloned().fold(f64::INFINITY, f64::min);
            instance.demands[i].weight * min_d
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut step_scale = 2.0;
    let mut since_improved = 0;
    for _ in 0..iterations {
        // recompute the relaxed solution to get a subgradient
        let mut site_values: Vec<(f64, usize)> = (0..n)
            .map(|j| {
                let v: f64 = (0..m)
                    .map(|i| (instance.demands[i].weight * instance.distances[i][j] - u[i]).min(0.0))
                    .sum();
                (v, j)
            })
            .collect();
        site_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let open: Vec<usize> = site_values[..instance.p].iter().map(|&(_, j)| j).collect();
        let bound = u.iter().sum::<f64>() + site_values[..instance.p].iter().map(|&(v, _)| v).sum::<f64>();
        if bound > best {
            best = bound;
            since_improved = 0;
        } else {
            since_improved += 1;
            if since_improved >= 20 {
                step_scale /= 2.0;
                since_improved = 0;
            }
        }
        let mut grad = vec![1.0f64; m];
        for &j in &open {
            for i in 0..m {
                if instance.demands[i].weight * instance.distances[i][j] - u[i] < 0.0 {
                    grad[i] -= 1.0;
                }
            }
        }
        let norm2: f64 = grad.iter().map(|g| g * g).sum();
        if norm2 < 1e-15 {
            break;
        }
        let step = step_scale * (upper_bound - bound).max(1e-9) / norm2;
        for i in 0..m {
            u[i] += step * grad[i];
        }
    }
    best
}

/// Exact branch-and-bound over the site variables.
///
/// The node bound relaxes site cardinality: every still-allowed site may
/// serve demands for free, so the bound is the weighted sum of each demand's
/// best distance over chosen-plus-remaining sites. The incumbent comes from
/// the interchange heuristic; a subgradient Lagrangian bound at the root can
/// prove it optimal before any branching.
pub fn solve_exact(instance: &PlanningInstance) -> Result<PlanSolution, PlannerError> {
    solve_exact_with_limit(instance, DEFAULT_EXACT_LIMIT)
}

pub fn solve_exact_with_limit(
    instance: &PlanningInstance,
    limit: usize,
) -> Result<PlanSolution, PlannerError> {
    instance.validate()?;
    let n = instance.candidates.len();
    if n > limit {
        return Err(PlannerError::TooLargeForExact { n, limit });
    }
    let m = instance.demands.len();

    let incumbent_solution = solve_heuristic(instance, 0)?;
    let incumbent = incumbent_solution.objective;
    let best_open = incumbent_solution.open_sites.clone();

    // root Lagrangian: if it certifies the heuristic incumbent, skip the
    // search; no tolerance here, optimality claims must be exact
    let root_bound = subgradient_bound(instance, incumbent, 100);
    if root_bound >= incumbent {
        return Ok(solution_from_open(instance, best_open, Optimality::ProvenOptimal));
    }

    // suffix_min[i][j] = min distance from demand i to any candidate >= j
    let mut suffix_min = vec![vec![0.0f64; n + 1]; m];
    for i in 0..m {
        suffix_min[i][n] = f64::INFINITY;
        for j in (0..n).rev() {
            suffix_min[i][j] = instance.distances[i][j].min(suffix_min[i][j + 1]);
        }
    }

    struct Search<'a> {
        instance: &'a PlanningInstance,
        suffix_min: Vec<Vec<f64>>,
        incumbent: f64,
        best_open: Vec<usize>,
        chosen: Vec<usize>,
        // best distance to a chosen site per demand
        chosen_dist: Vec<f64>,
    }

    impl Search<'_> {
        fn bound(&self, next: usize) -> f64 {
            let m = self.instance.demands.len();
            (0..m)
                .map(|i| {
                    self.instance.demands[i].weight
                        * self.chosen_dist[i].min(self.suffix_min[i][next])
                })
                .sum()
        }

        fn recurse(&mut self, next: usize) {
            let n = self.instance.candidates.len();
            let p = self.instance.p;
            if self.chosen.len() == p {
                let objective: f64 = (0..self.instance.demands.len())
                    .map(|i| self.instance.demands[i].weight * self.chosen_dist[i])
                    .sum();
                if objective < self.incumbent {
                    self.incumbent = objective;
                    self.best_open = self.chosen.clone();
                }
                return;
            }
            if next >= n || self.chosen.len() + (n - next) < p {
                return;
            }
            if self.bound(next) >= self.incumbent {
                return;
            }
            // include `next`
            let saved: Vec<f64> = self.chosen_dist.clone();
            for i in 0..self.instance.demands.len() {
                let d = self.instance.distances[i][next];
                if d < self.chosen_dist[i] {
                    self.chosen_dist[i] = d;
                }
            }
            self.chosen.push(next);
            self.recurse(next + 1);
            self.chosen.pop();
            self.chosen_dist = saved;
            // exclude `next`
            self.recurse(next + 1);
        }
    }

    let mut search = Search {
        instance,
        suffix_min,
        incumbent,
        best_open: best_open.clone(),
        chosen: Vec::with_capacity(instance.p),
        chosen_dist: vec![f64::INFINITY; m],
    };
    search.recurse(0);
    let best_open = search.best_open;
    Ok(solution_from_open(instance, best_open, Optimality::ProvenOptimal))
}

/// Outcome of checking that relaxing the assignment variables to [0, 1]
/// keeps the optimum: fractional assignment cannot beat nearest-site
/// assignment for a fixed open set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxationReport {
    pub binary_objective: f64,
    pub relaxed_objective: f64,
    /// demands with more than one open site at the minimum distance
    pub fractional_ties: Vec<(usize, Vec<usize>)>,
}

pub fn verify_relaxation(instance: &PlanningInstance) -> Result<RelaxationReport, PlannerError> {
    let solution = solve_exact(instance)?;
    let open = &solution.open_sites;
    // binary route: the stored nearest-site assignment
    let binary_objective: f64 = solution
        .assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| instance.demands[i].weight * instance.distances[i][j])
        .sum();
    // relaxed route: the LP over each demand's simplex attains its optimum
    // at a vertex, i.e. the minimum distance over open sites
    let mut relaxed_objective = 0.0;
    let mut fractional_ties = Vec::new();
    for (i, d) in instance.demands.iter().enumerate() {
        let min_d = open.iter().map(|&j| instance.distances[i][j]).fold(f64::INFINITY, f64::min);
        relaxed_objective += d.weight * min_d;
        let at_min: Vec<usize> = open
            .iter()
            .cloned()
            .filter(|&j| instance.distances[i][j] - min_d <= 1e-9)
            .collect();
        if at_min.len() > 1 {
            fractional_ties.push((i, at_min));
        }
    }
    Ok(RelaxationReport { binary_objective, relaxed_objective, fractional_ties })
}
