//! Charging-demand extraction from vehicle trajectories, p-median station
//! siting, and M/G/s congestion analytics validated by a discrete-event
//! simulator.
//!
//! The pipeline: [`synth`] generates (or a CSV supplies) trajectory
//! records; [`demand`] turns dwells into weighted charging-demand points;
//! [`planner`] sites p stations minimizing demand-weighted access distance;
//! [`queueing`] scores each station's peak-hour congestion in closed form;
//! [`simulator`] checks those formulas empirically; [`reporting`] allocates
//! chargers and assembles sweep and tradeoff tables.

pub mod demand;
pub mod geo;
pub mod planner;
pub mod queueing;
pub mod reporting;
pub mod simulator;
pub mod synth;
