//! Per-step episode records, serializable as JSON lines.

use serde::Serialize;

use crate::world::{PacketLedger, SensorId, UavId};

/// How one UAV's contact attempt ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ContactOutcome {
    /// Data verified and acknowledged.
    Served { delivered: u32 },
    /// The sensor transmitted but the link failed; the batch is lost.
    CommFailed { lost: u32 },
    /// Beacon went unanswered: the UAV was not hovering in range of an
    /// alive target, so the wait timed out.
    NoResponse,
    /// Another UAV already claimed the target; this UAV stood down.
    Conflict,
}

impl ContactOutcome {
    pub fn name(&self) -> &'static str {
        match self {
            ContactOutcome::Served { .. } => "served",
            ContactOutcome::CommFailed { .. } => "comm_failed",
            ContactOutcome::NoResponse => "no_response",
            ContactOutcome::Conflict => "conflict",
        }
    }
}

/// One UAV's slice of a step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContactTrace {
    pub uav: UavId,
    pub target: SensorId,
    pub velocity_mps: f64,
    pub outcome: ContactOutcome,
    /// Link gain at service time; absent for conflict no-ops, which never
    /// evaluate the link.
    pub gain_db: Option<f64>,
}

/// Everything that happened in one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepTrace {
    pub step: u32,
    pub arrivals: u64,
    pub overflow: u64,
    /// Sensor ids the pruned prompt context offered (empty for baselines).
    pub pruned: Vec<SensorId>,
    /// True when pruning selected nothing and the prompt fell back to the
    /// full observation.
    pub used_full_observation: bool,
    /// True when the model reply was unusable and the greedy baseline
    /// decided instead.
    pub fallback: bool,
    pub fallback_reason: Option<String>,
    pub contacts: Vec<ContactTrace>,
    pub f_events: u32,
    pub g_events: u32,
    pub delivered: u64,
    pub lost_comm: u64,
    /// Bytes of protocol frames put on the air this step.
    pub message_bytes: u64,
    pub queue_total: u64,
    pub alive_sensors: u32,
    /// Running totals after this step; conservation holds at every row.
    pub ledger: PacketLedger,
}
