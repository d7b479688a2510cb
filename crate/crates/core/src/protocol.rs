//! Contact protocol between a UAV and a ground sensor.
//!
//! A data-collection contact walks a fixed phase sequence: the UAV asks for
//! a schedule, flies to the target, beacons it awake, receives the queued
//! data, verifies it, and acknowledges. Beaconing and receiving run against
//! a deadline; when it expires the contact aborts back to idle and the data
//! stays queued on the sensor. The module also defines the framed binary
//! messages exchanged during a contact.

use serde::Serialize;
use thiserror::Error;

use crate::channel::LinkQuality;
use crate::world::{SensorId, SensorState};

// ===== State machine =====

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Idle,
    QueryingLlm,
    EnRoute,
    Beaconing,
    Receiving,
    Acking,
    Done,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::Idle,
        Phase::QueryingLlm,
        Phase::EnRoute,
        Phase::Beaconing,
        Phase::Receiving,
        Phase::Acking,
        Phase::Done,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::QueryingLlm => "querying_llm",
            Phase::EnRoute => "en_route",
            Phase::Beaconing => "beaconing",
            Phase::Receiving => "receiving",
            Phase::Acking => "acking",
            Phase::Done => "done",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContactEvent {
    DecisionRequested,
    DecisionReady { target: SensorId },
    Arrived,
    StatusReceived,
    DataVerified,
    AckSent,
    Reset,
    DeadlineExpired,
}

impl ContactEvent {
    pub const KIND_COUNT: usize = 8;

    /// Representative of each event kind, for exhaustive transition tests.
    pub fn all_kinds() -> [ContactEvent; Self::KIND_COUNT] {
        [
            ContactEvent::DecisionRequested,
            ContactEvent::DecisionReady { target: 0 },
            ContactEvent::Arrived,
            ContactEvent::StatusReceived,
            ContactEvent::DataVerified,
            ContactEvent::AckSent,
            ContactEvent::Reset,
            ContactEvent::DeadlineExpired,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ContactEvent::DecisionRequested => "decision_requested",
            ContactEvent::DecisionReady { .. } => "decision_ready",
            ContactEvent::Arrived => "arrived",
            ContactEvent::StatusReceived => "status_received",
            ContactEvent::DataVerified => "data_verified",
            ContactEvent::AckSent => "ack_sent",
            ContactEvent::Reset => "reset",
            ContactEvent::DeadlineExpired => "deadline_expired",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("event {event} is illegal in phase {phase}")]
    IllegalTransition { phase: &'static str, event: &'static str },
    #[error("contact deadline must be at least 1 step")]
    ZeroDeadline,
    #[error("message truncated: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("unknown message kind {kind}")]
    UnknownKind { kind: u8 },
    #[error("message kind {kind} expects {expected} fields, got {got}")]
    FieldCount { kind: u8, expected: u8, got: u8 },
    #[error("field {index} has length {len}, which does not fit its type")]
    FieldLength { index: usize, len: usize },
    #[error("{extra} trailing bytes after a complete message")]
    TrailingBytes { extra: usize },
}

/// One UAV's position in the contact protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactState {
    pub phase: Phase,
    pub target: Option<SensorId>,
    /// Ticks left before the current Beaconing/Receiving wait aborts.
    pub deadline_remaining: u32,
    deadline_steps: u32,
}

impl ContactState {
    pub fn new(deadline_steps: u32) -> Result<Self, ProtocolError> {
        if deadline_steps == 0 {
            return Err(ProtocolError::ZeroDeadline);
        }
        Ok(Self {
            phase: Phase::Idle,
            target: None,
            deadline_remaining: 0,
            deadline_steps,
        })
    }

    /// Applies one event. Exactly nine transitions are legal: the seven
    /// happy-path steps plus the two deadline aborts out of Beaconing and
    /// Receiving. Everything else is an error and leaves no trace.
    pub fn advance(&self, event: &ContactEvent) -> Result<ContactState, ProtocolError> {
        let mut next = *self;
        match (self.phase, event) {
            (Phase::Idle, ContactEvent::DecisionRequested) => {
                next.phase = Phase::QueryingLlm;
                next.target = None;
            }
            (Phase::QueryingLlm, ContactEvent::DecisionReady { target }) => {
                next.phase = Phase::EnRoute;
                next.target = Some(*target);
            }
            (Phase::EnRoute, ContactEvent::Arrived) => {
                next.phase = Phase::Beaconing;
                next.deadline_remaining = self.deadline_steps;
            }
            (Phase::Beaconing, ContactEvent::StatusReceived) => {
                next.phase = Phase::Receiving;
                next.deadline_remaining = self.deadline_steps;
            }
            (Phase::Receiving, ContactEvent::DataVerified) => {
                next.phase = Phase::Acking;
                next.deadline_remaining = 0;
            }
            (Phase::Acking, ContactEvent::AckSent) => {
                next.phase = Phase::Done;
            }
            (Phase::Done, ContactEvent::Reset) => {
                next.phase = Phase::Idle;
                next.target = None;
            }
            (Phase::Beaconing | Phase::Receiving, ContactEvent::DeadlineExpired) => {
                next.phase = Phase::Idle;
                next.target = None;
                next.deadline_remaining = 0;
            }
            (phase, event) => {
                return Err(ProtocolError::IllegalTransition {
                    phase: phase.name(),
                    event: event.name(),
                });
            }
        }
        Ok(next)
    }

    /// Spends one deadline tick while waiting in Beaconing or Receiving.
    /// Returns true when the deadline just ran out, in which case the
    /// caller must fire [`ContactEvent::DeadlineExpired`].
    pub fn tick_deadline(&mut self) -> bool {
        match self.phase {
            Phase::Beaconing | Phase::Receiving => {
                debug_assert!(self.deadline_remaining > 0, "deadline set on phase entry");
                self.deadline_remaining -= 1;
                self.deadline_remaining == 0
            }
            _ => false,
        }
    }

    pub fn deadline_steps(&self) -> u32 {
        self.deadline_steps
    }
}

// ===== Messages =====

/// Sensor status carried in a data frame; mirrors the sender's state at
/// send time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatusPayload {
    pub battery_j: f64,
    pub queue_len: u32,
    pub gain_db: f64,
}

pub fn make_status(sensor: &SensorState, link: &LinkQuality) -> StatusPayload {
    StatusPayload {
        battery_j: sensor.battery_j,
        queue_len: sensor.queue_len,
        gain_db: link.gain_db,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolMessage {
    /// UAV wakes a sensor: carries the target sensor id.
    Beacon { sensor: SensorId },
    /// Sensor uploads readings plus its status.
    Data { readings: Vec<f64>, status: StatusPayload },
    /// UAV confirms successful receipt.
    Ack,
}

const KIND_BEACON: u8 = 1;
const KIND_DATA: u8 = 2;
const KIND_ACK: u8 = 3;

/// Encodes a message as `[kind u8][field count u8]` followed by each field
/// as `[length u32 LE][bytes]`. Numbers inside fields are little-endian;
/// readings pack as consecutive f64 values.
pub fn encode(msg: &ProtocolMessage) -> Vec<u8> {
    let mut out = Vec::new();
    let push_field = |out: &mut Vec<u8>, bytes: &[u8]| {
        out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(bytes);
    };
    match msg {
        ProtocolMessage::Beacon { sensor } => {
            out.push(KIND_BEACON);
            out.push(1);
            push_field(&mut out, &sensor.to_le_bytes());
        }
        ProtocolMessage::Data { readings, status } => {
            out.push(KIND_DATA);
            out.push(4);
            let mut packed = Vec::with_capacity(readings.len() * 8);
            for r in readings {
                packed.extend_from_slice(&r.to_le_bytes());
            }
            push_field(&mut out, &packed);
            push_field(&mut out, &status.battery_j.to_le_bytes());
            push_field(&mut out, &status.queue_len.to_le_bytes());
            push_field(&mut out, &status.gain_db.to_le_bytes());
        }
        ProtocolMessage::Ack => {
            out.push(KIND_ACK);
            out.push(0);
        }
    }
    out
}

/// Strict inverse of [`encode`]: rejects unknown kinds, wrong field counts,
/// field lengths that do not fit their type, truncation, and trailing bytes.
pub fn decode(bytes: &[u8]) -> Result<ProtocolMessage, ProtocolError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], ProtocolError> {
        if bytes.len() < *pos + n {
            return Err(ProtocolError::Truncated { needed: *pos + n - bytes.len() });
        }
        let slice = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(slice)
    };

    let kind = take(&mut pos, 1)?[0];
    let nfields = take(&mut pos, 1)?[0];
    let expected_fields = match kind {
        KIND_BEACON => 1,
        KIND_DATA => 4,
        KIND_ACK => 0,
        other => return Err(ProtocolError::UnknownKind { kind: other }),
    };
    if nfields != expected_fields {
        return Err(ProtocolError::FieldCount { kind, expected: expected_fields, got: nfields });
    }

    let mut fields: Vec<&[u8]> = Vec::with_capacity(nfields as usize);
    for _ in 0..nfields {
        let len_bytes = take(&mut pos, 4)?;
        let len = u32::from_le_bytes(len_bytes.try_into().expect("slice of 4")) as usize;
        fields.push(take(&mut pos, len)?);
    }
    if pos != bytes.len() {
        return Err(ProtocolError::TrailingBytes { extra: bytes.len() - pos });
    }

    let f64_field = |index: usize| -> Result<f64, ProtocolError> {
        let f = fields[index];
        let arr: [u8; 8] = f
            .try_into()
            .map_err(|_| ProtocolError::FieldLength { index, len: f.len() })?;
        Ok(f64::from_le_bytes(arr))
    };
    let u32_field = |index: usize| -> Result<u32, ProtocolError> {
        let f = fields[index];
        let arr: [u8; 4] = f
            .try_into()
            .map_err(|_| ProtocolError::FieldLength { index, len: f.len() })?;
        Ok(u32::from_le_bytes(arr))
    };

    match kind {
        KIND_BEACON => Ok(ProtocolMessage::Beacon { sensor: u32_field(0)? }),
        KIND_DATA => {
            let raw = fields[0];
            if raw.len() % 8 != 0 {
                return Err(ProtocolError::FieldLength { index: 0, len: raw.len() });
            }
            let readings = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            Ok(ProtocolMessage::Data {
                readings,
                status: StatusPayload {
                    battery_j: f64_field(1)?,
                    queue_len: u32_field(2)?,
                    gain_db: f64_field(3)?,
                },
            })
        }
        KIND_ACK => Ok(ProtocolMessage::Ack),
        _ => unreachable!("kind validated above"),
    }
}

// ===== Tests =====

#[cfg(test)]
mod tests {
    use super::*;

    fn happy_path_events(target: SensorId) -> [ContactEvent; 7] {
        [
            ContactEvent::DecisionRequested,
            ContactEvent::DecisionReady { target },
            ContactEvent::Arrived,
            ContactEvent::StatusReceived,
            ContactEvent::DataVerified,
            ContactEvent::AckSent,
            ContactEvent::Reset,
        ]
    }

    #[test]
    fn happy_path_walks_every_phase_and_returns_to_idle() {
        let mut st = ContactState::new(2).unwrap();
        let expected = [
            Phase::QueryingLlm,
            Phase::EnRoute,
            Phase::Beaconing,
            Phase::Receiving,
            Phase::Acking,
            Phase::Done,
            Phase::Idle,
        ];
        for (event, want) in happy_path_events(4).iter().zip(expected) {
            st = st.advance(event).unwrap();
            assert_eq!(st.phase, want, "after {}", event.name());
        }
        assert_eq!(st.target, None, "reset clears the target");
    }

    #[test]
    fn target_is_tracked_from_decision_to_reset() {
        let st = ContactState::new(2).unwrap();
        let st = st.advance(&ContactEvent::DecisionRequested).unwrap();
        let st = st.advance(&ContactEvent::DecisionReady { target: 7 }).unwrap();
        assert_eq!(st.target, Some(7));
        let st = st.advance(&ContactEvent::Arrived).unwrap();
        assert_eq!(st.target, Some(7), "target survives until the contact ends");
    }

    #[test]
    fn beaconing_deadline_expires_back_to_idle() {
        let mut st = ContactState::new(2).unwrap();
        for e in &happy_path_events(1)[..3] {
            st = st.advance(e).unwrap();
        }
        assert_eq!(st.phase, Phase::Beaconing);
        assert_eq!(st.deadline_remaining, 2);
        assert!(!st.tick_deadline(), "first tick leaves one remaining");
        assert!(st.tick_deadline(), "second tick exhausts the deadline");
        st = st.advance(&ContactEvent::DeadlineExpired).unwrap();
        assert_eq!(st.phase, Phase::Idle);
        assert_eq!(st.target, None);
    }

    #[test]
    fn receiving_deadline_expires_back_to_idle() {
        let mut st = ContactState::new(1).unwrap();
        for e in &happy_path_events(1)[..4] {
            st = st.advance(e).unwrap();
        }
        assert_eq!(st.phase, Phase::Receiving);
        assert!(st.tick_deadline());
        st = st.advance(&ContactEvent::DeadlineExpired).unwrap();
        assert_eq!(st.phase, Phase::Idle);
    }

    #[test]
    fn deadline_resets_on_each_waiting_phase() {
        let mut st = ContactState::new(3).unwrap();
        for e in &happy_path_events(1)[..3] {
            st = st.advance(e).unwrap();
        }
        st.tick_deadline();
        assert_eq!(st.deadline_remaining, 2);
        let st = st.advance(&ContactEvent::StatusReceived).unwrap();
        assert_eq!(st.deadline_remaining, 3, "entering Receiving restarts the deadline");
    }

    #[test]
    fn exactly_nine_transitions_are_legal() {
        let mut legal = 0;
        for phase in Phase::ALL {
            for event in ContactEvent::all_kinds() {
                let mut st = ContactState::new(2).unwrap();
                st.phase = phase;
                match st.advance(&event) {
                    Ok(_) => legal += 1,
                    Err(ProtocolError::IllegalTransition { .. }) => {}
                    Err(other) => panic!("unexpected error: {other}"),
                }
            }
        }
        assert_eq!(legal, 9, "seven happy-path steps plus two deadline aborts");
    }

    #[test]
    fn illegal_transition_reports_phase_and_event() {
        let st = ContactState::new(2).unwrap();
        let err = st.advance(&ContactEvent::Arrived).unwrap_err();
        assert_eq!(
            err,
            ProtocolError::IllegalTransition { phase: "idle", event: "arrived" }
        );
    }

    #[test]
    fn zero_deadline_rejected() {
        assert_eq!(ContactState::new(0).unwrap_err(), ProtocolError::ZeroDeadline);
    }

    #[test]
    fn tick_outside_waiting_phases_is_inert() {
        let mut st = ContactState::new(2).unwrap();
        assert!(!st.tick_deadline());
        assert_eq!(st.phase, Phase::Idle);
    }

    // --- codec ---

    #[test]
    fn beacon_encodes_to_frozen_bytes() {
        let bytes = encode(&ProtocolMessage::Beacon { sensor: 258 });
        assert_eq!(bytes, vec![1, 1, 4, 0, 0, 0, 2, 1, 0, 0]);
    }

    #[test]
    fn ack_is_two_bytes() {
        assert_eq!(encode(&ProtocolMessage::Ack), vec![3, 0]);
    }

    #[test]
    fn messages_round_trip() {
        let msgs = [
            ProtocolMessage::Beacon { sensor: 0 },
            ProtocolMessage::Beacon { sensor: u32::MAX },
            ProtocolMessage::Ack,
            ProtocolMessage::Data {
                readings: vec![],
                status: StatusPayload { battery_j: 0.0, queue_len: 0, gain_db: -200.0 },
            },
            ProtocolMessage::Data {
                readings: vec![1.5, -2.25, 1.0 / 3.0],
                status: StatusPayload { battery_j: 49.99, queue_len: 17, gain_db: -104.25 },
            },
        ];
        for msg in msgs {
            let bytes = encode(&msg);
            assert_eq!(decode(&bytes).unwrap(), msg, "round trip of {msg:?}");
        }
    }

    #[test]
    fn decode_rejects_unknown_kind() {
        assert_eq!(decode(&[9, 0]), Err(ProtocolError::UnknownKind { kind: 9 }));
    }

    #[test]
    fn decode_rejects_wrong_field_count() {
        assert_eq!(
            decode(&[1, 2]),
            Err(ProtocolError::FieldCount { kind: 1, expected: 1, got: 2 })
        );
    }

    #[test]
    fn decode_rejects_truncation() {
        let mut bytes = encode(&ProtocolMessage::Beacon { sensor: 5 });
        bytes.pop();
        assert!(matches!(decode(&bytes), Err(ProtocolError::Truncated { .. })));
        assert!(matches!(decode(&[]), Err(ProtocolError::Truncated { .. })));
    }

    #[test]
    fn decode_rejects_trailing_bytes() {
        let mut bytes = encode(&ProtocolMessage::Ack);
        bytes.push(0);
        assert_eq!(decode(&bytes), Err(ProtocolError::TrailingBytes { extra: 1 }));
    }

    #[test]
    fn decode_rejects_misaligned_readings() {
        // Data frame whose readings field is 7 bytes: not a whole f64.
        let mut bytes = vec![2, 4];
        bytes.extend_from_slice(&7u32.to_le_bytes());
        bytes.extend_from_slice(&[0; 7]);
        for _ in 0..2 {
            bytes.extend_from_slice(&8u32.to_le_bytes());
            bytes.extend_from_slice(&[0; 8]);
        }
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&[0; 4]);
        // Field order is readings, battery, queue, gain; swap queue/gain sizes.
        let decoded = decode(&bytes);
        assert!(matches!(decoded, Err(ProtocolError::FieldLength { index: 0, .. })));
    }

    #[test]
    fn decode_never_panics_on_fuzz_bytes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..2000 {
            let len = rng.gen_range(0..64);
            let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let _ = decode(&bytes);
        }
    }

    #[test]
    fn status_mirrors_sender_state() {
        let sensor = SensorState {
            id: 3,
            position: [10.0, 20.0],
            queue_len: 12,
            queue_cap: 40,
            battery_j: 41.25,
            arrival_rate: 2.0,
            alive: true,
        };
        let link = LinkQuality {
            elevation_deg: 50.0,
            los_prob: 0.97,
            path_loss_db: 110.0,
            gain_db: -110.0,
        };
        let status = make_status(&sensor, &link);
        assert_eq!(status.queue_len, 12);
        assert_eq!(status.battery_j, 41.25);
        assert_eq!(status.gain_db, -110.0);
    }
}
