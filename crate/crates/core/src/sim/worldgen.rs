//! Deterministic construction of the initial world from a configuration.

use rand::Rng;

use crate::rng::SeedSplitter;
use crate::sim::{Placement, SimConfig, SimError};
use crate::world::{SensorState, Trajectory, UavState};

/// The initial episode state: sensors, UAVs, their patrol routes, and the
/// resolved failure threshold.
#[derive(Debug, Clone)]
pub struct World {
    pub sensors: Vec<SensorState>,
    pub uavs: Vec<UavState>,
    /// One route per UAV, index-aligned with `uavs`.
    pub trajectories: Vec<Trajectory>,
    pub gamma_th_db: f64,
}

/// Builds the starting world. Sensor ids equal their index. Random
/// placement draws x then y per sensor from the "placement" stream, so a
/// given seed always lays out the same field.
pub fn build_world(cfg: &SimConfig, seeds: &SeedSplitter) -> Result<World, SimError> {
    cfg.validate()?;
    let gamma_th_db = cfg.resolve_gamma_th()?;

    let positions: Vec<[f64; 2]> = match &cfg.placement {
        Placement::Explicit(p) => p.clone(),
        Placement::Random => {
            let mut rng = seeds.stream("placement");
            (0..cfg.sensors)
                .map(|_| {
                    let x = rng.gen_range(0.0..cfg.area_side_m);
                    let y = rng.gen_range(0.0..cfg.area_side_m);
                    [x, y]
                })
                .collect()
        }
    };
    let rates = cfg.arrival_rates.resolve(cfg.sensors, "arrival_rates")?;
    let queues = cfg.initial_queues.resolve(cfg.sensors, "initial_queues")?;

    let sensors: Vec<SensorState> = (0..cfg.sensors)
        .map(|j| SensorState {
            id: j as u32,
            position: positions[j],
            queue_len: queues[j],
            queue_cap: cfg.queue_cap,
            battery_j: cfg.sensor_battery_j,
            arrival_rate: rates[j],
            alive: true,
        })
        .collect();

    let mut uavs = Vec::with_capacity(cfg.uavs);
    let mut trajectories = Vec::with_capacity(cfg.uavs);
    for i in 0..cfg.uavs {
        let traj = patrol_route(cfg, &sensors, i);
        traj.validate()?;
        uavs.push(UavState::at_trajectory_start(
            i as u32,
            &traj,
            cfg.v_max_mps,
            cfg.uav_battery_j,
        ));
        trajectories.push(traj);
    }

    Ok(World { sensors, uavs, trajectories, gamma_th_db })
}

/// Patrol route for UAV `i`: one waypoint per sensor assigned round-robin
/// (sensor j goes to UAV j mod I), offset horizontally so the UAV never
/// hovers exactly overhead. A UAV with no assigned sensors (more UAVs than
/// sensors) holds a station near the area center.
fn patrol_route(cfg: &SimConfig, sensors: &[SensorState], i: usize) -> Trajectory {
    let clamp = |v: f64| v.clamp(0.0, cfg.area_side_m);
    let mut waypoints: Vec<[f64; 3]> = sensors
        .iter()
        .filter(|s| (s.id as usize) % cfg.uavs == i)
        .map(|s| {
            [
                clamp(s.position[0] + cfg.waypoint_offset_m),
                clamp(s.position[1]),
                cfg.altitude_m,
            ]
        })
        .collect();

    if waypoints.is_empty() {
        let center = cfg.area_side_m / 2.0;
        let spread = cfg.waypoint_offset_m.max(1.0) * (i as f64 + 1.0);
        waypoints.push([clamp(center + spread), clamp(center), cfg.altitude_m]);
    }

    // Clamping can collapse neighbors onto one point; drop cyclic repeats.
    let mut dedup: Vec<[f64; 3]> = Vec::with_capacity(waypoints.len());
    for wp in waypoints {
        if dedup.last() != Some(&wp) {
            dedup.push(wp);
        }
    }
    while dedup.len() > 1 && dedup.first() == dedup.last() {
        dedup.pop();
    }

    Trajectory { waypoints: dedup, hover_steps: cfg.hover_steps }
}

// ===== Tests =====
