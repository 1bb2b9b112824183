//! Steady-state flow solvers for the three networks.

pub mod hydraulics;
pub mod paths;
pub mod power;
pub mod traffic;

pub use hydraulics::{pda_demand, solve_hydraulics, HydraulicOptions, HydraulicState, PdaParams, WaterModel};
pub use power::{solve_power, PowerModel, PowerState};
pub use traffic::{assign_traffic, frank_wolfe, shortest_travel_time, AssignmentOptions, RoadGraph, TrafficState, VolumeDelay};
