//! Scheduling policies and the text protocol they share.
//!
//! Every step the fleet produces one [`Observation`]: UAV poses plus the
//! queue, battery, and per-UAV link gain of each candidate sensor. A policy
//! turns that into a [`Decision`] assigning one target sensor and one
//! velocity per UAV. The in-context-learning policy serializes the
//! observation into a deterministic prompt (task description, rolling
//! demonstration buffer, current observation), sends it to a language-model
//! client, and parses the reply; the baseline policies compute the same
//! decision shape directly. All floats serialize in Rust's shortest
//! round-trip form so a parsed value is bit-identical to the one written.

use std::collections::BTreeSet;
use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::world::{SensorId, UavId};

// ===== Errors =====

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("observation needs at least one {0}")]
    EmptyObservation(&'static str),
    #[error("{0} ids must be strictly ascending")]
    UnsortedIds(&'static str),
    #[error("sensor {sensor}: {got} gains for {want} UAVs")]
    GainRowShape { sensor: SensorId, got: usize, want: usize },
    #[error("non-finite value in {what}")]
    NonFiniteField { what: String },
    #[error("{what} must be positive")]
    NonPositive { what: &'static str },
    #[error("no values to evaluate")]
    EmptyEvaluation,
}

/// Why a model reply could not be turned into a decision.
#[derive(Debug, Error, PartialEq)]
pub enum DecisionParseError {
    #[error("no DECISIONS block in the reply")]
    MissingBlock,
    #[error("DECISIONS block never terminated with END")]
    UnterminatedBlock,
    #[error("malformed decision line: {content:?}")]
    MalformedLine { content: String },
    #[error("UAV {uav} assigned more than once")]
    DuplicateUav { uav: UavId },
    #[error("UAV {uav} is not part of the observation")]
    UnknownUav { uav: UavId },
    #[error("UAV {uav} received no assignment")]
    MissingUav { uav: UavId },
    #[error("sensor {sensor} is not part of the observation")]
    UnknownSensor { sensor: SensorId },
    #[error("UAV {uav}: velocity {velocity_mps} outside (0, {v_max_mps}]")]
    VelocityOutOfRange { uav: UavId, velocity_mps: f64, v_max_mps: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum ObservationParseError {
    #[error("no OBSERVATION block found")]
    MissingBlock,
    #[error("OBSERVATION block never terminated")]
    UnterminatedBlock,
    #[error("malformed observation line: {content:?}")]
    MalformedLine { content: String },
    #[error("observation invalid: {0}")]
    Invalid(#[from] PolicyError),
}

// ===== Observations =====

#[derive(Debug, Clone, PartialEq)]
pub struct UavObs {
    pub id: UavId,
    pub position: [f64; 3],
    pub v_max_mps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorObs {
    pub id: SensorId,
    pub queue_len: u32,
    pub queue_cap: u32,
    pub battery_j: f64,
    /// Link gain toward each UAV, in UAV listing order.
    pub gains_db: Vec<f64>,
}

impl SensorObs {
    pub fn queue_frac(&self) -> f64 {
        f64::from(self.queue_len) / f64::from(self.queue_cap)
    }
}

/// One step's fleet-level view: every UAV and every candidate sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub step: u32,
    pub gamma_th_db: f64,
    /// Mean queue fill fraction across the fleet's sensors at build time.
    /// Carried explicitly so a pruned view still reflects the whole fleet.
    pub mean_queue_frac: f64,
    pub uavs: Vec<UavObs>,
    pub sensors: Vec<SensorObs>,
}

impl Observation {
    /// Builds and validates an observation, computing `mean_queue_frac`
    /// from the supplied sensors.
    pub fn new(
        step: u32,
        gamma_th_db: f64,
        uavs: Vec<UavObs>,
        sensors: Vec<SensorObs>,
    ) -> Result<Self, PolicyError> {
        let n = sensors.len() as f64;
        let mean = sensors.iter().map(SensorObs::queue_frac).sum::<f64>() / n;
        Self::from_parts(step, gamma_th_db, mean, uavs, sensors)
    }

    /// Like [`Observation::new`] but with an explicit fleet-wide mean queue
    /// fraction; used when reconstructing a pruned view whose mean was
    /// computed over the full fleet.
    pub fn from_parts(
        step: u32,
        gamma_th_db: f64,
        mean_queue_frac: f64,
        uavs: Vec<UavObs>,
        sensors: Vec<SensorObs>,
    ) -> Result<Self, PolicyError> {
        if uavs.is_empty() {
            return Err(PolicyError::EmptyObservation("UAV"));
        }
        if sensors.is_empty() {
            return Err(PolicyError::EmptyObservation("sensor"));
        }
        if !uavs.windows(2).all(|w| w[0].id < w[1].id) {
            return Err(PolicyError::UnsortedIds("UAV"));
        }
        if !sensors.windows(2).all(|w| w[0].id < w[1].id) {
            return Err(PolicyError::UnsortedIds("sensor"));
        }
        for u in &uavs {
            if !(u.v_max_mps.is_finite() && u.v_max_mps > 0.0) {
                return Err(PolicyError::NonPositive { what: "UAV v_max" });
            }
            if u.position.iter().any(|v| !v.is_finite()) {
                return Err(PolicyError::NonFiniteField { what: format!("UAV {} position", u.id) });
            }
        }
        for s in &sensors {
            if s.queue_cap == 0 {
                return Err(PolicyError::NonPositive { what: "sensor queue capacity" });
            }
            if s.gains_db.len() != uavs.len() {
                return Err(PolicyError::GainRowShape {
                    sensor: s.id,
                    got: s.gains_db.len(),
                    want: uavs.len(),
                });
            }
            if s.gains_db.iter().any(|g| !g.is_finite()) || !s.battery_j.is_finite() {
                return Err(PolicyError::NonFiniteField { what: format!("sensor {}", s.id) });
            }
        }
        if !gamma_th_db.is_finite() || !mean_queue_frac.is_finite() {
            return Err(PolicyError::NonFiniteField { what: "observation scalars".to_string() });
        }
        Ok(Self { step, gamma_th_db, mean_queue_frac, uavs, sensors })
    }

    pub fn uav_index(&self, uav: UavId) -> Option<usize> {
        self.uavs.iter().position(|u| u.id == uav)
    }

    pub fn has_sensor(&self, sensor: SensorId) -> bool {
        self.sensors.iter().any(|s| s.id == sensor)
    }
}

/// Writes an observation as a line-oriented text block. `restrict` keeps
/// only the named sensors (the pruned context); `None` keeps all of them.
/// Restricting to every sensor produces bytes identical to no restriction.
pub fn serialize_observation(obs: &Observation, restrict: Option<&BTreeSet<SensorId>>) -> String {
    let mut out = String::new();
    out.push_str("OBSERVATION\n");
    let _ = writeln!(out, "step={}", obs.step);
    let _ = writeln!(out, "gamma_th={}", obs.gamma_th_db);
    let _ = writeln!(out, "mean_queue_frac={}", obs.mean_queue_frac);
    for u in &obs.uavs {
        let _ = writeln!(
            out,
            "uav id={} x={} y={} h={} v_max={}",
            u.id, u.position[0], u.position[1], u.position[2], u.v_max_mps
        );
    }
    for s in &obs.sensors {
        if let Some(keep) = restrict {
            if !keep.contains(&s.id) {
                continue;
            }
        }
        let gains = s
            .gains_db
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            out,
            "sensor id={} q={} cap={} battery={} gains={}",
            s.id, s.queue_len, s.queue_cap, s.battery_j, gains
        );
    }
    out.push_str("END OBSERVATION\n");
    out
}

/// Parses the last OBSERVATION block out of `text`. Inverse of
/// [`serialize_observation`]; floats reload bit-exactly. Prompts are
/// chronological, with demonstrations (and their past observations) before
/// the one awaiting a decision, so the last block is the current state.
pub fn parse_observation_block(text: &str) -> Result<Observation, ObservationParseError> {
    let all_lines: Vec<&str> = text.lines().map(str::trim).collect();
    let lines = match all_lines.iter().rposition(|l| *l == "OBSERVATION") {
        Some(start) => all_lines[start + 1..].iter().copied(),
        None => return Err(ObservationParseError::MissingBlock),
    };
    let mut step: Option<u32> = None;
    let mut gamma: Option<f64> = None;
    let mut mean: Option<f64> = None;
    let mut uavs: Vec<UavObs> = Vec::new();
    let mut sensors: Vec<SensorObs> = Vec::new();
    let mut terminated = false;

    let malformed = |l: &str| ObservationParseError::MalformedLine { content: l.to_string() };

    for line in lines {
        if line == "END OBSERVATION" {
            terminated = true;
            break;
        }
        if let Some(v) = line.strip_prefix("step=") {
            step = Some(v.parse().map_err(|_| malformed(line))?);
        } else if let Some(v) = line.strip_prefix("gamma_th=") {
            gamma = Some(v.parse().map_err(|_| malformed(line))?);
        } else if let Some(v) = line.strip_prefix("mean_queue_frac=") {
            mean = Some(v.parse().map_err(|_| malformed(line))?);
        } else if let Some(rest) = line.strip_prefix("uav ") {
            let kv = parse_kv(rest).ok_or_else(|| malformed(line))?;
            let get = |k: &str| kv.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
            let parse_f = |k: &str| -> Result<f64, ObservationParseError> {
                get(k).ok_or_else(|| malformed(line))?.parse().map_err(|_| malformed(line))
            };
            uavs.push(UavObs {
                id: get("id").ok_or_else(|| malformed(line))?.parse().map_err(|_| malformed(line))?,
                position: [parse_f("x")?, parse_f("y")?, parse_f("h")?],
                v_max_mps: parse_f("v_max")?,
            });
        } else if let Some(rest) = line.strip_prefix("sensor ") {
            let kv = parse_kv(rest).ok_or_else(|| malformed(line))?;
            let get = |k: &str| kv.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
            let gains: Result<Vec<f64>, _> = get("gains")
                .ok_or_else(|| malformed(line))?
                .split(',')
                .map(str::parse::<f64>)
                .collect();
            sensors.push(SensorObs {
                id: get("id").ok_or_else(|| malformed(line))?.parse().map_err(|_| malformed(line))?,
                queue_len: get("q").ok_or_else(|| malformed(line))?.parse().map_err(|_| malformed(line))?,
                queue_cap: get("cap").ok_or_else(|| malformed(line))?.parse().map_err(|_| malformed(line))?,
                battery_j: get("battery").ok_or_else(|| malformed(line))?.parse().map_err(|_| malformed(line))?,
                gains_db: gains.map_err(|_| malformed(line))?,
            });
        } else if !line.is_empty() {
            return Err(malformed(line));
        }
    }
    if !terminated {
        return Err(ObservationParseError::UnterminatedBlock);
    }
    let (step, gamma, mean) = match (step, gamma, mean) {
        (Some(s), Some(g), Some(m)) => (s, g, m),
        _ => {
            return Err(ObservationParseError::MalformedLine {
                content: "missing step/gamma_th/mean_queue_frac header".to_string(),
            })
        }
    };
    Observation::from_parts(step, gamma, mean, uavs, sensors).map_err(ObservationParseError::from)
}

/// Splits `k1=v1 k2=v2 ...` into pairs; None when any token lacks '='.
fn parse_kv(rest: &str) -> Option<Vec<(String, String)>> {
    rest.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect()
}

// ===== Decisions =====

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub uav: UavId,
    pub sensor: SensorId,
    pub velocity_mps: f64,
}

/// One target sensor and velocity per UAV, sorted by ascending UAV id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decision {
    pub assignments: Vec<Assignment>,
}

impl Decision {
    pub fn assignment_for(&self, uav: UavId) -> Option<&Assignment> {
        self.assignments.iter().find(|a| a.uav == uav)
    }
}

/// Writes the wire form of a decision: a DECISIONS block with one
/// `uav=.. sensor=.. velocity=..` line per UAV.
pub fn serialize_decision(decision: &Decision) -> String {
    let mut out = String::from("DECISIONS\n");
    for a in &decision.assignments {
        let _ = writeln!(out, "uav={} sensor={} velocity={}", a.uav, a.sensor, a.velocity_mps);
    }
    out.push_str("END\n");
    out
}

/// Extracts and validates the first DECISIONS block in a model reply.
/// Lines outside the block are ignored; inside it every line must parse,
/// every UAV in the observation must appear exactly once, targets must be
/// observed sensors, and velocities must sit in (0, v_max] for their UAV.
pub fn parse_decision(response: &str, obs: &Observation) -> Result<Decision, DecisionParseError> {
    let mut lines = response.lines().map(str::trim);
    if !lines.any(|l| l == "DECISIONS") {
        return Err(DecisionParseError::MissingBlock);
    }

    let mut assignments: Vec<Assignment> = Vec::with_capacity(obs.uavs.len());
    let mut terminated = false;
    for line in lines {
        if line == "END" {
            terminated = true;
            break;
        }
        if line.is_empty() {
            continue;
        }
        let parsed = parse_assignment_line(line)
            .ok_or_else(|| DecisionParseError::MalformedLine { content: line.to_string() })?;
        if assignments.iter().any(|a| a.uav == parsed.uav) {
            return Err(DecisionParseError::DuplicateUav { uav: parsed.uav });
        }
        let Some(uav_idx) = obs.uav_index(parsed.uav) else {
            return Err(DecisionParseError::UnknownUav { uav: parsed.uav });
        };
        if !obs.has_sensor(parsed.sensor) {
            return Err(DecisionParseError::UnknownSensor { sensor: parsed.sensor });
        }
        let v_max = obs.uavs[uav_idx].v_max_mps;
        if !parsed.velocity_mps.is_finite()
            || parsed.velocity_mps <= 0.0
            || parsed.velocity_mps > v_max
        {
            return Err(DecisionParseError::VelocityOutOfRange {
                uav: parsed.uav,
                velocity_mps: parsed.velocity_mps,
                v_max_mps: v_max,
            });
        }
        assignments.push(parsed);
    }
    if !terminated {
        return Err(DecisionParseError::UnterminatedBlock);
    }
    for u in &obs.uavs {
        if !assignments.iter().any(|a| a.uav == u.id) {
            return Err(DecisionParseError::MissingUav { uav: u.id });
        }
    }
    assignments.sort_by_key(|a| a.uav);
    Ok(Decision { assignments })
}

fn parse_assignment_line(line: &str) -> Option<Assignment> {
    let mut uav = None;
    let mut sensor = None;
    let mut velocity = None;
    let mut tokens = 0;
    for tok in line.split_whitespace() {
        tokens += 1;
        if let Some(v) = tok.strip_prefix("uav=") {
            uav = v.parse::<UavId>().ok();
        } else if let Some(v) = tok.strip_prefix("sensor=") {
            sensor = v.parse::<SensorId>().ok();
        } else if let Some(v) = tok.strip_prefix("velocity=") {
            velocity = v.parse::<f64>().ok();
        } else {
            return None;
        }
    }
    if tokens != 3 {
        return None;
    }
    Some(Assignment {
        uav: uav?,
        sensor: sensor?,
        velocity_mps: velocity?,
    })
}

// ===== Prompt assembly =====

/// Fixed framing text for the scheduling task: what to do, the rules, and
/// the exact output format expected back.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDescription {
    text: String,
}

impl TaskDescription {
    pub fn standard() -> Self {
        let text = "\
TASK
You schedule a fleet of data-collection UAVs over ground sensors.
Each step, assign every UAV exactly one target sensor and a flight
velocity. Minimize lost packets: a sensor drops new packets when its
queue is full, and an upload is lost when the link gain is at or below
the threshold.
RULES
- Assign every UAV listed in the observation exactly once.
- Targets must be sensor ids listed in the observation.
- An upload succeeds only when the sensor's gain for that UAV exceeds gamma_th.
- Prefer sensors whose queue q is close to its capacity cap.
- Each velocity must satisfy 0 < velocity <= that UAV's v_max.
OUTPUT FORMAT
Reply with exactly one block of the form:
DECISIONS
uav=<id> sensor=<id> velocity=<number>
END
with one line per UAV and nothing else inside the block.
";
        Self { text: text.to_string() }
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// One stored demonstration: a serialized observation and the decision
/// block (with realized loss annotation) that followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub input: String,
    pub output: String,
}

/// Bounded FIFO of demonstrations: pushing onto a full buffer evicts the
/// oldest entry.
#[derive(Debug, Clone)]
pub struct ExampleBuffer {
    capacity: usize,
    items: VecDeque<Demonstration>,
}

impl ExampleBuffer {
    pub fn new(capacity: usize) -> Result<Self, PolicyError> {
        if capacity == 0 {
            return Err(PolicyError::NonPositive { what: "example buffer capacity" });
        }
        Ok(Self { capacity, items: VecDeque::with_capacity(capacity) })
    }

    pub fn push(&mut self, demo: Demonstration) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(demo);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &Demonstration> {
        self.items.iter()
    }
}

/// A fully assembled prompt plus how it was assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBuild {
    pub text: String,
    /// True when the pruned sensor set was empty, forcing the prompt to
    /// fall back to the full observation.
    pub used_full_observation: bool,
    pub demos_included: usize,
}

/// Assembles the decision prompt: task framing, as many of the newest
/// demonstrations as the character budget allows (oldest dropped first),
/// and the current observation restricted to the pruned sensors. An empty
/// pruned set falls back to the full observation and flags it.
pub fn build_prompt(
    task: &TaskDescription,
    buffer: &ExampleBuffer,
    obs: &Observation,
    pruned: &BTreeSet<SensorId>,
    char_budget: usize,
) -> PromptBuild {
    let keep: BTreeSet<SensorId> = pruned
        .iter()
        .copied()
        .filter(|id| obs.has_sensor(*id))
        .collect();
    let used_full_observation = keep.is_empty();
    let restriction = if used_full_observation { None } else { Some(&keep) };

    let obs_text = serialize_observation(obs, restriction);
    let cue = "Respond now with one DECISIONS block.\n";
    let fixed_len = task.text().len() + obs_text.len() + cue.len();

    // Admit demonstrations newest-first until the budget runs out, then
    // restore chronological order for the prompt.
    const HEADER: &str = "EXAMPLES\n";
    const DEMO_HEAD: &str = "EXAMPLE\nIN\n";
    const DEMO_MID: &str = "OUT\n";
    let mut picked: Vec<&Demonstration> = Vec::new();
    let mut used = fixed_len + HEADER.len();
    for demo in buffer.iter().rev() {
        let demo_len = DEMO_HEAD.len() + demo.input.len() + DEMO_MID.len() + demo.output.len();
        if used + demo_len > char_budget {
            break;
        }
        used += demo_len;
        picked.push(demo);
    }
    picked.reverse();

    let mut text = String::with_capacity(used);
    text.push_str(task.text());
    if !picked.is_empty() {
        text.push_str(HEADER);
        for demo in &picked {
            text.push_str(DEMO_HEAD);
            text.push_str(&demo.input);
            text.push_str(DEMO_MID);
            text.push_str(&demo.output);
        }
    }
    text.push_str(&obs_text);
    text.push_str(cue);

    PromptBuild {
        text,
        used_full_observation,
        demos_included: picked.len(),
    }
}

/// Stores a completed step as a demonstration: the observation exactly as
/// the prompt showed it, then the decision taken and the packet loss it
/// realized.
pub fn record_feedback(
    buffer: &mut ExampleBuffer,
    obs: &Observation,
    restrict: Option<&BTreeSet<SensorId>>,
    decision: &Decision,
    realized_loss_packets: u64,
) {
    let input = serialize_observation(obs, restrict);
    let mut output = serialize_decision(decision);
    let _ = writeln!(output, "loss={realized_loss_packets}");
    buffer.push(Demonstration { input, output });
}

// ===== Baseline policies =====

/// Sensor row each UAV should serve under the queue-aware greedy rule:
/// among sensors whose gain for this UAV exceeds the threshold, the
/// fullest queue wins (ties: higher gain, then lower id). When no sensor
/// clears the threshold the best-gain sensor is chosen anyway.
pub(crate) fn greedy_target_row(sensors: &[SensorObs], uav_idx: usize, gamma_th_db: f64) -> usize {
    let mut best_eligible: Option<usize> = None;
    for (row, s) in sensors.iter().enumerate() {
        if s.gains_db[uav_idx] <= gamma_th_db {
            continue;
        }
        let better = match best_eligible {
            None => true,
            Some(b) => {
                let (bq, bg) = (sensors[b].queue_frac(), sensors[b].gains_db[uav_idx]);
                let (q, g) = (s.queue_frac(), s.gains_db[uav_idx]);
                q > bq || (q == bq && g > bg)
            }
        };
        if better {
            best_eligible = Some(row);
        }
    }
    best_eligible.unwrap_or_else(|| max_gain_row(sensors, uav_idx))
}

/// [`greedy_target_row`] against an observation's own threshold; shared
/// with the mock completion backend so both sides apply one rule.
pub(crate) fn greedy_target_for_uav(obs: &Observation, uav_idx: usize) -> usize {
    greedy_target_row(&obs.sensors, uav_idx, obs.gamma_th_db)
}

fn max_gain_row(sensors: &[SensorObs], uav_idx: usize) -> usize {
    let mut best = 0;
    for (row, s) in sensors.iter().enumerate().skip(1) {
        if s.gains_db[uav_idx] > sensors[best].gains_db[uav_idx] {
            best = row;
        }
    }
    best
}

/// Cruise velocity under the greedy rule: scale v_max by the fleet-wide
/// mean queue fill, floored at a tenth of v_max so the commanded velocity
/// stays strictly positive even over an idle fleet.
pub fn greedy_velocity(v_max_mps: f64, mean_queue_frac: f64) -> f64 {
    (v_max_mps * mean_queue_frac).max(0.1 * v_max_mps).min(v_max_mps)
}

/// Each UAV flies at v_max toward its best-gain sensor (ties to the lower
/// sensor id). Ignores queues entirely.
pub fn max_channel_gain_policy(obs: &Observation) -> Decision {
    let assignments = obs
        .uavs
        .iter()
        .enumerate()
        .map(|(idx, u)| Assignment {
            uav: u.id,
            sensor: obs.sensors[max_gain_row(&obs.sensors, idx)].id,
            velocity_mps: u.v_max_mps,
        })
        .collect();
    Decision { assignments }
}

/// Queue-aware greedy baseline; see [`greedy_target_row`] for the target
/// rule and [`greedy_velocity`] for the velocity rule.
pub fn greedy_queue_aware_policy(obs: &Observation, gamma_th_db: f64) -> Decision {
    let assignments = obs
        .uavs
        .iter()
        .enumerate()
        .map(|(idx, u)| Assignment {
            uav: u.id,
            sensor: obs.sensors[greedy_target_row(&obs.sensors, idx, gamma_th_db)].id,
            velocity_mps: greedy_velocity(u.v_max_mps, obs.mean_queue_frac),
        })
        .collect();
    Decision { assignments }
}

/// Uniform random target and velocity per UAV; velocities land in
/// (0, v_max].
pub fn random_schedule_policy<R: Rng + ?Sized>(obs: &Observation, rng: &mut R) -> Decision {
    let assignments = obs
        .uavs
        .iter()
        .map(|u| {
            let row = rng.gen_range(0..obs.sensors.len());
            let unit: f64 = rng.gen_range(0.0..1.0);
            Assignment {
                uav: u.id,
                sensor: obs.sensors[row].id,
                velocity_mps: u.v_max_mps * (1.0 - unit),
            }
        })
        .collect();
    Decision { assignments }
}

// ===== Evaluation =====

/// Summary statistics of a per-seed metric series.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalScore {
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

pub fn evaluate_policy(values: &[f64], metric: &str) -> Result<EvalScore, PolicyError> {
    if values.is_empty() {
        return Err(PolicyError::EmptyEvaluation);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(EvalScore {
        metric: metric.to_string(),
        n: values.len(),
        mean,
        std: var.sqrt(),
        min: values.iter().cloned().fold(f64::INFINITY, f64::min),
        max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}

// ===== Tests =====
