//! Ground sensors, UAV kinematics, and packet accounting.
//!
//! Sensors accumulate Poisson packet arrivals into bounded queues and spend
//! transmit energy when served. UAVs patrol fixed waypoint trajectories,
//! hovering a configured number of steps at each waypoint; data moves only
//! while a UAV hovers within coverage range. The [`PacketLedger`] tracks
//! every packet from generation to delivery or loss so an episode can be
//! audited for conservation at any step.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;
use thiserror::Error;

use crate::attention::{AttentionError, FeatureMatrix};
use crate::channel::{self, ChannelError, ChannelParams, LinkQuality};

pub type SensorId = u32;
pub type UavId = u32;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("commanded velocity {velocity_mps} m/s outside (0, {v_max_mps}] m/s")]
    VelocityOutOfRange { velocity_mps: f64, v_max_mps: f64 },
    #[error("dt must be positive and finite, got {dt_s} s")]
    BadDt { dt_s: f64 },
    #[error("trajectory needs at least one waypoint")]
    EmptyTrajectory,
    #[error("trajectory hover_steps must be at least 1")]
    ZeroHoverSteps,
    #[error("consecutive trajectory waypoints {first} and {second} coincide")]
    DuplicateWaypoint { first: usize, second: usize },
    #[error("no alive sensors to observe")]
    NoAliveSensors,
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Features(#[from] AttentionError),
}

// ===== Sensors =====

/// One ground sensor with a bounded packet queue.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorState {
    pub id: SensorId,
    pub position: [f64; 2],
    pub queue_len: u32,
    pub queue_cap: u32,
    pub battery_j: f64,
    /// Mean packets generated per step.
    pub arrival_rate: f64,
    /// False once the battery is exhausted; dead sensors neither sense nor
    /// transmit.
    pub alive: bool,
}

impl SensorState {
    pub fn queue_frac(&self) -> f64 {
        f64::from(self.queue_len) / f64::from(self.queue_cap)
    }
}

/// Transmit-energy model shared by all sensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerModel {
    pub tx_power_mw: f64,
    pub packet_airtime_s: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            tx_power_mw: 100.0,
            packet_airtime_s: 0.1,
        }
    }
}

impl PowerModel {
    pub fn energy_per_packet_j(&self) -> f64 {
        self.tx_power_mw / 1000.0 * self.packet_airtime_s
    }
}

// ===== UAVs and trajectories =====

/// Waypoint patrol route. The route is cyclic: after the last waypoint the
/// UAV heads back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<[f64; 3]>,
    /// Steps spent hovering (and serving) at each waypoint before moving on.
    pub hover_steps: u32,
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.waypoints.is_empty() {
            return Err(WorldError::EmptyTrajectory);
        }
        if self.hover_steps == 0 {
            return Err(WorldError::ZeroHoverSteps);
        }
        for i in 1..self.waypoints.len() {
            if self.waypoints[i] == self.waypoints[i - 1] {
                return Err(WorldError::DuplicateWaypoint {
                    first: i - 1,
                    second: i,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UavState {
    pub id: UavId,
    pub position: [f64; 3],
    /// Velocity commanded for the current step, m/s.
    pub velocity_mps: f64,
    pub v_max_mps: f64,
    pub battery_j: f64,
    /// Index of the waypoint the UAV is hovering at or flying toward.
    pub waypoint_idx: usize,
    /// Hover ticks left at the current waypoint; see [`advance_uav`].
    pub hover_remaining: u32,
}

impl UavState {
    /// Places a UAV at the first waypoint of `traj`, ready to hover there.
    ///
    /// Placement counts as an arrival: `hover_remaining` gets one extra
    /// tick because the first `advance_uav` call spends a tick before the
    /// step's service phase, whereas a mid-episode arrival serves on the
    /// arrival step itself.
    pub fn at_trajectory_start(id: UavId, traj: &Trajectory, v_max_mps: f64, battery_j: f64) -> Self {
        Self {
            id,
            position: traj.waypoints[0],
            velocity_mps: 0.0,
            v_max_mps,
            battery_j,
            waypoint_idx: 0,
            hover_remaining: traj.hover_steps + 1,
        }
    }

    /// True when the UAV sits exactly on its current waypoint. Positions
    /// are snapped on arrival, so exact comparison is reliable.
    pub fn is_hovering(&self, traj: &Trajectory) -> bool {
        self.position == traj.waypoints[self.waypoint_idx]
    }

    pub fn horizontal_distance_to(&self, sensor_xy: [f64; 2]) -> f64 {
        (self.position[0] - sensor_xy[0]).hypot(self.position[1] - sensor_xy[1])
    }
}

// ===== Packet accounting =====

/// Running totals of every packet in an episode. Conservation must hold at
/// every step: all generated packets are delivered, lost, or still queued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct PacketLedger {
    pub generated: u64,
    pub delivered: u64,
    /// Arrivals dropped because the queue was full.
    pub lost_overflow: u64,
    /// Transmitted batches lost to a failed link.
    pub lost_comm: u64,
}

impl PacketLedger {
    pub fn residual(&self, sensors: &[SensorState]) -> u64 {
        sensors.iter().map(|s| u64::from(s.queue_len)).sum()
    }

    pub fn conservation_holds(&self, sensors: &[SensorState]) -> bool {
        self.generated == self.delivered + self.lost_overflow + self.lost_comm + self.residual(sensors)
    }
}

// ===== Per-step dynamics =====

/// Per-sensor outcome of one arrival round, indexed like the sensor slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalReport {
    pub drawn: Vec<u32>,
    pub overflow: Vec<u32>,
}

impl ArrivalReport {
    pub fn total_drawn(&self) -> u64 {
        self.drawn.iter().map(|&n| u64::from(n)).sum()
    }
    pub fn total_overflow(&self) -> u64 {
        self.overflow.iter().map(|&n| u64::from(n)).sum()
    }
}

/// Draws one step of Poisson arrivals for every alive sensor and enqueues
/// them, dropping whatever exceeds the queue capacity. Dead sensors and
/// zero-rate sensors draw nothing (and consume no randomness, so disabling
/// a sensor never shifts the other streams).
pub fn step_arrivals<R: Rng + ?Sized>(sensors: &mut [SensorState], rng: &mut R) -> ArrivalReport {
    let mut drawn = Vec::with_capacity(sensors.len());
    let mut overflow = Vec::with_capacity(sensors.len());
    for s in sensors.iter_mut() {
        if !s.alive || s.arrival_rate <= 0.0 {
            drawn.push(0);
            overflow.push(0);
            continue;
        }
        let dist = Poisson::new(s.arrival_rate).expect("arrival_rate validated positive and finite");
        let n = dist.sample(rng).min(u32::MAX as f64) as u32;
        let free = s.queue_cap - s.queue_len;
        let accepted = n.min(free);
        s.queue_len += accepted;
        drawn.push(n);
        overflow.push(n - accepted);
    }
    ArrivalReport { drawn, overflow }
}

/// Result of one service contact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServeOutcome {
    /// Packets the sensor transmitted (bounded by queue and step budget).
    pub attempted: u32,
    pub delivered: u32,
    pub lost_comm: u32,
    /// True when the link gain sat at or below the threshold, so the whole
    /// transmitted batch was lost.
    pub comm_failed: bool,
    pub sensor_died: bool,
    pub energy_spent_j: f64,
}

/// Serves one sensor: the sensor transmits up to `step_budget` queued
/// packets over `link`. The batch leaves the queue either way; it is
/// delivered on a good link and counted lost on a failed one. Transmit
/// energy is spent in both cases, and a battery that empties mid-contact
/// finishes the batch and then kills the sensor.
///
/// Callers must already have checked the protocol-side preconditions
/// (sensor alive, UAV hovering within coverage range).
pub fn serve_sensor(
    sensor: &mut SensorState,
    link: &LinkQuality,
    gamma_th_db: f64,
    power: &PowerModel,
    step_budget: u32,
) -> ServeOutcome {
    assert!(sensor.alive, "serve_sensor precondition: sensor must be alive");
    let attempted = sensor.queue_len.min(step_budget);
    sensor.queue_len -= attempted;
    let energy = f64::from(attempted) * power.energy_per_packet_j();
    sensor.battery_j = (sensor.battery_j - energy).max(0.0);
    let sensor_died = attempted > 0 && sensor.battery_j == 0.0;
    if sensor_died {
        sensor.alive = false;
    }
    let comm_failed = channel::below_threshold(link.gain_db, gamma_th_db);
    ServeOutcome {
        attempted,
        delivered: if comm_failed { 0 } else { attempted },
        lost_comm: if comm_failed { attempted } else { 0 },
        comm_failed,
        sensor_died,
        energy_spent_j: energy,
    }
}

/// Advances a UAV by one step of commanded velocity along its route.
///
/// Movement follows the waypoint polyline and never overshoots: a step that
/// reaches the target snaps onto it exactly and discards leftover travel.
/// Arrival starts a hover of `traj.hover_steps` steps (the arrival step
/// included); the waypoint index advances only after the hover completes,
/// and the route wraps around after the last waypoint.
pub fn advance_uav(
    uav: &UavState,
    traj: &Trajectory,
    commanded_velocity_mps: f64,
    dt_s: f64,
) -> Result<UavState, WorldError> {
    if !commanded_velocity_mps.is_finite()
        || commanded_velocity_mps <= 0.0
        || commanded_velocity_mps > uav.v_max_mps
    {
        return Err(WorldError::VelocityOutOfRange {
            velocity_mps: commanded_velocity_mps,
            v_max_mps: uav.v_max_mps,
        });
    }
    if !dt_s.is_finite() || dt_s <= 0.0 {
        return Err(WorldError::BadDt { dt_s });
    }
    debug_assert!(traj.validate().is_ok(), "trajectory validated at construction");

    let mut next = uav.clone();
    next.velocity_mps = commanded_velocity_mps;

    if next.is_hovering(traj) {
        if next.hover_remaining > 1 {
            next.hover_remaining -= 1;
            return Ok(next);
        }
        // Hover exhausted: retarget and start moving within this step.
        next.hover_remaining = 0;
        next.waypoint_idx = (next.waypoint_idx + 1) % traj.waypoints.len();
    }

    let target = traj.waypoints[next.waypoint_idx];
    let delta = [
        target[0] - next.position[0],
        target[1] - next.position[1],
        target[2] - next.position[2],
    ];
    let dist = (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
    let travel = commanded_velocity_mps * dt_s;
    if travel >= dist {
        next.position = target;
        next.hover_remaining = traj.hover_steps;
    } else {
        let scale = travel / dist;
        next.position[0] += delta[0] * scale;
        next.position[1] += delta[1] * scale;
        next.position[2] += delta[2] * scale;
    }
    Ok(next)
}

// ===== Observation features =====

/// Feature rows for every alive sensor as seen from one UAV: queue length,
/// battery, and link gain in dB. Row order follows ascending sensor id;
/// the returned ids map rows back to sensors.
pub fn snapshot_features(
    sensors: &[SensorState],
    uav: &UavState,
    params: &ChannelParams,
) -> Result<(Vec<SensorId>, FeatureMatrix), WorldError> {
    let mut alive: Vec<&SensorState> = sensors.iter().filter(|s| s.alive).collect();
    alive.sort_by_key(|s| s.id);
    if alive.is_empty() {
        return Err(WorldError::NoAliveSensors);
    }
    let mut ids = Vec::with_capacity(alive.len());
    let mut data = ndarray::Array2::<f64>::zeros((alive.len(), 3));
    for (row, s) in alive.iter().enumerate() {
        let lq = channel::link_quality(uav.position, s.position, params)?;
        data[[row, 0]] = f64::from(s.queue_len);
        data[[row, 1]] = s.battery_j;
        data[[row, 2]] = lq.gain_db;
        ids.push(s.id);
    }
    Ok((ids, FeatureMatrix::new(data)?))
}

// ===== Tests =====
