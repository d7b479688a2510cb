//! Episode simulation: configuration, the per-step loss accounting, and
//! the deterministic runner that wires channel, world, attention, policy,
//! and protocol together.
//!
//! A simulation is fully determined by a [`SimConfig`] and a seed. Named
//! RNG streams keep the random subsystems independent: "placement" lays
//! out sensors, "arrivals" drives packet generation, "init" draws
//! attention parameters, and "policy" feeds the random baseline. Results
//! therefore reproduce bit-for-bit for a given (config, seed) pair.

pub mod experiment;
pub mod report;
pub mod runner;
pub mod trace;
pub mod worldgen;

pub use experiment::{run_experiment, train_attention, ExperimentPoint, ExperimentRow, TrainingRow};
pub use runner::{run_episode, run_episode_collecting, run_episode_with_params, EpisodeResult};
pub use trace::{ContactOutcome, ContactTrace, StepTrace};
pub use worldgen::{build_world, World};

use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::attention::AttentionError;
use crate::channel::{self, ChannelError, ChannelParams};
use crate::llm::{EndpointConfig, LlmError};
use crate::policy::PolicyError;
use crate::protocol::ProtocolError;
use crate::world::{PowerModel, SensorId, UavId, WorldError};

// ===== Errors =====

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

// ===== Policy selection =====

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PolicyKind {
    /// Prompted language-model scheduling with attention-pruned context;
    /// falls back to the greedy baseline on any model or parse failure.
    Icl,
    /// Best link gain per UAV, queues ignored.
    MaxGain,
    /// Queue-aware greedy baseline.
    Greedy,
    /// Uniform random targets and velocities.
    Random,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Icl,
        PolicyKind::MaxGain,
        PolicyKind::Greedy,
        PolicyKind::Random,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Icl => "icl",
            PolicyKind::MaxGain => "max_gain",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Random => "random",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "icl" => Ok(PolicyKind::Icl),
            "max_gain" => Ok(PolicyKind::MaxGain),
            "greedy" => Ok(PolicyKind::Greedy),
            "random" => Ok(PolicyKind::Random),
            other => Err(format!(
                "unknown policy {other:?}; expected one of icl, max_gain, greedy, random"
            )),
        }
    }
}

// ===== Configuration =====

/// A per-sensor quantity given either once for all sensors or one value
/// per sensor.
#[derive(Debug, Clone, PartialEq)]
pub enum PerSensor<T> {
    Uniform(T),
    Each(Vec<T>),
}

impl<T: Copy> PerSensor<T> {
    pub fn resolve(&self, n: usize, what: &str) -> Result<Vec<T>, SimError> {
        match self {
            PerSensor::Uniform(v) => Ok(vec![*v; n]),
            PerSensor::Each(vs) if vs.len() == n => Ok(vs.clone()),
            PerSensor::Each(vs) => Err(SimError::Config(format!(
                "{what}: {} values for {n} sensors",
                vs.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    /// Uniform positions over the square area, drawn from the
    /// "placement" stream.
    Random,
    /// Fixed positions, one per sensor.
    Explicit(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaThSpec {
    /// Calibrate to the median gain over the deployment area.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LlmSpec {
    /// Deterministic offline backend with a synthetic latency.
    Mock { latency_s: f64 },
    Live(EndpointConfig),
}

/// Full simulation configuration. [`SimConfig::default`] reproduces the
/// reference setup: 10 sensors, 3 UAVs, queue capacity 40, 30 steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub sensors: usize,
    pub uavs: usize,
    pub queue_cap: u32,
    pub steps: u32,
    /// Sensors each UAV's attention keeps in the pruned context.
    pub top_k: usize,
    pub policy: PolicyKind,
    /// Packets one contact can move per step.
    pub step_budget: u32,
    /// Default seed used when the caller supplies none.
    pub seed: u64,

    pub area_side_m: f64,
    pub altitude_m: f64,
    pub v_max_mps: f64,
    pub hover_steps: u32,
    /// Horizontal offset of patrol waypoints from their sensors, keeping
    /// UAVs off the exact-overhead singularity.
    pub waypoint_offset_m: f64,
    pub dt_s: f64,
    pub power: PowerModel,
    pub sensor_battery_j: f64,
    pub uav_battery_j: f64,
    pub arrival_rates: PerSensor<f64>,
    pub initial_queues: PerSensor<u32>,
    pub placement: Placement,

    pub channel: ChannelParams,
    pub gamma_th: GammaThSpec,

    pub d_prime: usize,
    pub learning_rate: f64,

    pub example_capacity: usize,
    pub prompt_char_budget: usize,
    pub llm: LlmSpec,

    pub contact_deadline: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sensors: 10,
            uavs: 3,
            queue_cap: 40,
            steps: 30,
            top_k: 4,
            policy: PolicyKind::Icl,
            step_budget: 25,
            seed: 0,
            area_side_m: 100.0,
            altitude_m: 30.0,
            v_max_mps: 20.0,
            hover_steps: 1,
            waypoint_offset_m: 7.5,
            dt_s: 1.0,
            power: PowerModel::default(),
            sensor_battery_j: 50.0,
            uav_battery_j: 500_000.0,
            arrival_rates: PerSensor::Uniform(2.0),
            initial_queues: PerSensor::Uniform(0),
            placement: Placement::Random,
            channel: ChannelParams::default(),
            gamma_th: GammaThSpec::Auto,
            d_prime: 8,
            learning_rate: 0.05,
            example_capacity: 8,
            prompt_char_budget: 16 * 1024,
            llm: LlmSpec::Mock { latency_s: 0.05 },
            contact_deadline: 2,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if self.sensors == 0 {
            return bad("sensors must be at least 1".into());
        }
        if self.uavs == 0 {
            return bad("uavs must be at least 1".into());
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if self.queue_cap == 0 {
            return bad("queue_cap must be at least 1".into());
        }
        if self.step_budget == 0 {
            return bad("step_budget must be at least 1".into());
        }
        if self.top_k == 0 || self.top_k > self.sensors {
            return bad(format!("top_k {} outside 1..={}", self.top_k, self.sensors));
        }
        if !(self.area_side_m.is_finite() && self.area_side_m > 0.0) {
            return bad(format!("area_side_m {} must be positive", self.area_side_m));
        }
        if !(self.altitude_m.is_finite() && self.altitude_m > 0.0) {
            return bad(format!("altitude_m {} must be positive", self.altitude_m));
        }
        if !(self.v_max_mps.is_finite() && self.v_max_mps > 0.0) {
            return bad(format!("v_max {} must be positive", self.v_max_mps));
        }
        if self.hover_steps == 0 {
            return bad("hover_steps must be at least 1".into());
        }
        if !(self.waypoint_offset_m.is_finite() && self.waypoint_offset_m >= 0.0) {
            return bad("waypoint_offset_m must be non-negative".into());
        }
        if !(self.dt_s.is_finite() && self.dt_s > 0.0) {
            return bad(format!("dt_s {} must be positive", self.dt_s));
        }
        if !(self.power.tx_power_mw.is_finite() && self.power.tx_power_mw > 0.0) {
            return bad("tx_power_mw must be positive".into());
        }
        if !(self.power.packet_airtime_s.is_finite() && self.power.packet_airtime_s > 0.0) {
            return bad("packet_airtime_s must be positive".into());
        }
        if !(self.sensor_battery_j.is_finite() && self.sensor_battery_j > 0.0) {
            return bad("sensor_battery_j must be positive".into());
        }
        let rates = self.arrival_rates.resolve(self.sensors, "arrival_rates")?;
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return bad("arrival rates must be finite and non-negative".into());
        }
        let queues = self.initial_queues.resolve(self.sensors, "initial_queues")?;
        if queues.iter().any(|q| *q > self.queue_cap) {
            return bad("initial queues must not exceed queue_cap".into());
        }
        if let Placement::Explicit(positions) = &self.placement {
            if positions.len() != self.sensors {
                return bad(format!(
                    "sensor_positions: {} positions for {} sensors",
                    positions.len(),
                    self.sensors
                ));
            }
            for p in positions {
                if p.iter().any(|v| !v.is_finite()) {
                    return bad("sensor positions must be finite".into());
                }
            }
        }
        self.channel.validate().map_err(SimError::from)?;
        if let GammaThSpec::Fixed(v) = self.gamma_th {
            if !v.is_finite() {
                return bad(format!("gamma_th_db {v} must be finite"));
            }
        }
        if self.d_prime == 0 {
            return bad("d_prime must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative".into());
        }
        if self.example_capacity == 0 {
            return bad("example_capacity must be at least 1".into());
        }
        if self.prompt_char_budget == 0 {
            return bad("char_budget must be at least 1".into());
        }
        if self.contact_deadline == 0 {
            return bad("contact_deadline must be at least 1".into());
        }
        match &self.llm {
            LlmSpec::Mock { latency_s } => {
                if !(latency_s.is_finite() && *latency_s >= 0.0) {
                    return bad("mock_latency_s must be finite and non-negative".into());
                }
            }
            LlmSpec::Live(cfg) => cfg.validate().map_err(SimError::from)?,
        }
        Ok(())
    }

    /// The failure threshold in dB: either the configured value or the
    /// median gain over the deployment area at this altitude.
    pub fn resolve_gamma_th(&self) -> Result<f64, SimError> {
        match self.gamma_th {
            GammaThSpec::Fixed(v) => Ok(v),
            GammaThSpec::Auto => Ok(channel::calibrate_gamma_th(
                &self.channel,
                self.altitude_m,
                self.area_side_m,
                32,
            )?),
        }
    }
}

// ===== Step loss accounting =====

/// One resolved contact of a step, as the loss accounting sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledContact {
    pub uav: UavId,
    pub sensor: SensorId,
    /// Link gain at service time (after movement).
    pub gain_db: f64,
    /// Packets the contact transmitted into a failed link.
    pub lost_packets: u64,
}

/// Event and packet losses of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StepLoss {
    /// Scheduled contacts whose link gain failed the threshold.
    pub f_events: u32,
    /// Sensors that overflowed while no UAV was scheduled on them.
    pub g_events: u32,
    pub failed_link_packets: u64,
    pub unattended_overflow_packets: u64,
}

impl StepLoss {
    pub fn event_loss(&self) -> u64 {
        u64::from(self.f_events) + u64::from(self.g_events)
    }
}

/// Pure per-step loss function. A scheduled contact contributes an f event
/// when its gain sits at or below the threshold; a sensor contributes a g
/// event when it overflowed this step and no contact was scheduled on it.
/// Packet counterparts sum the packets behind those events.
pub fn compute_step_loss(
    contacts: &[ScheduledContact],
    overflow_by_sensor: &[(SensorId, u64)],
    gamma_th_db: f64,
) -> StepLoss {
    let mut loss = StepLoss::default();
    for c in contacts {
        if channel::below_threshold(c.gain_db, gamma_th_db) {
            loss.f_events += 1;
            loss.failed_link_packets += c.lost_packets;
        }
    }
    for (sensor, overflow) in overflow_by_sensor {
        if *overflow == 0 {
            continue;
        }
        if contacts.iter().any(|c| c.sensor == *sensor) {
            continue;
        }
        loss.g_events += 1;
        loss.unattended_overflow_packets += overflow;
    }
    loss
}

// ===== Tests =====
