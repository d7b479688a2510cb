//! The deterministic episode loop.
//!
//! Step order: packet arrivals land first, then the fleet observes the
//! world (pre-movement link gains), attention prunes the context, the
//! policy decides, target conflicts resolve toward the lowest UAV id,
//! every UAV moves at its commanded velocity, winners run their contact
//! protocol against post-movement gains, and the step's losses, feedback,
//! and trace are recorded. Packet conservation is asserted after every
//! step.

use std::collections::BTreeSet;

use crate::attention::{
    score_sensors, top_k_select, AttentionParams, FeatureMatrix, StepFeedback, FEATURE_DIM,
};
use crate::channel::link_quality;
use crate::llm::LlmClient;
use crate::policy::{
    build_prompt, greedy_queue_aware_policy, max_channel_gain_policy, parse_decision,
    random_schedule_policy, record_feedback, Decision, ExampleBuffer, Observation, SensorObs,
    TaskDescription, UavObs,
};
use crate::protocol::{encode, make_status, ContactEvent, ContactState, Phase, ProtocolMessage};
use crate::rng::SeedSplitter;
use crate::sim::trace::{ContactOutcome, ContactTrace, StepTrace};
use crate::sim::worldgen::build_world;
use crate::sim::{compute_step_loss, LlmSpec, PolicyKind, ScheduledContact, SimConfig, SimError};
use crate::world::{advance_uav, serve_sensor, snapshot_features, step_arrivals, PacketLedger, SensorId};

/// Everything one episode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    pub policy: PolicyKind,
    pub gamma_th_db: f64,
    /// Scheduled contacts that hit a failed link, over the episode.
    pub f_total: u64,
    /// Unattended overflowing sensors, summed over steps.
    pub g_total: u64,
    /// f_total + g_total.
    pub event_loss: u64,
    /// Packets lost to overflow or failed links.
    pub packet_loss: u64,
    /// Packets lost per sensor id (overflow plus failed links).
    pub per_sensor_loss: Vec<u64>,
    /// Commanded velocity per step and UAV index (0 on skipped steps).
    pub velocity_trace: Vec<Vec<f64>>,
    pub ledger: PacketLedger,
    /// Packets still queued when the episode ended.
    pub residual_queue: u64,
    pub contacts_completed: u32,
    pub acks_sent: u32,
    pub timeouts: u32,
    pub conflicts: u32,
    /// Steps where the model reply was unusable and greedy decided.
    pub fallbacks: u32,
    /// Steps whose prompt fell back to the full observation.
    pub full_observation_steps: u32,
    pub final_alive_sensors: u32,
    pub steps: Vec<StepTrace>,
}

/// Runs one episode with freshly initialized attention parameters.
pub fn run_episode(cfg: &SimConfig, seed: u64, policy: PolicyKind) -> Result<EpisodeResult, SimError> {
    run_episode_with_params(cfg, seed, policy, None)
}

/// Runs one episode, optionally with pre-trained attention parameters.
pub fn run_episode_with_params(
    cfg: &SimConfig,
    seed: u64,
    policy: PolicyKind,
    params: Option<&AttentionParams>,
) -> Result<EpisodeResult, SimError> {
    run_episode_collecting(cfg, seed, policy, params, false).map(|(result, _)| result)
}

/// Full-control entry point: runs one episode and, when asked, collects
/// per-UAV attention feedback for offline parameter refinement.
pub fn run_episode_collecting(
    cfg: &SimConfig,
    seed: u64,
    policy: PolicyKind,
    params: Option<&AttentionParams>,
    collect_feedback: bool,
) -> Result<(EpisodeResult, Vec<StepFeedback>), SimError> {
    let seeds = SeedSplitter::new(seed);
    let mut world = build_world(cfg, &seeds)?;
    let gamma_th = world.gamma_th_db;
    let n_sensors = world.sensors.len();
    let n_uavs = world.uavs.len();

    let mut arrivals_rng = seeds.stream("arrivals");
    let mut policy_rng = seeds.stream("policy");
    let attention_params = match params {
        Some(p) => {
            p.validate()?;
            p.clone()
        }
        None => AttentionParams::init(FEATURE_DIM, cfg.d_prime, &mut seeds.stream("init")),
    };

    let uses_prompt = policy == PolicyKind::Icl;
    let mut client = if uses_prompt {
        Some(match &cfg.llm {
            LlmSpec::Mock { latency_s } => LlmClient::mock(*latency_s),
            LlmSpec::Live(endpoint) => LlmClient::live(endpoint.clone())?,
        })
    } else {
        None
    };
    let task = TaskDescription::standard();
    let mut buffer = ExampleBuffer::new(cfg.example_capacity)?;

    let mut machines: Vec<ContactState> = (0..n_uavs)
        .map(|_| ContactState::new(cfg.contact_deadline))
        .collect::<Result<_, _>>()?;

    let mut ledger = PacketLedger::default();
    ledger.generated = world.sensors.iter().map(|s| u64::from(s.queue_len)).sum();

    let mut feedback: Vec<StepFeedback> = Vec::new();
    let mut result = EpisodeResult {
        seed,
        policy,
        gamma_th_db: gamma_th,
        f_total: 0,
        g_total: 0,
        event_loss: 0,
        packet_loss: 0,
        per_sensor_loss: vec![0; n_sensors],
        velocity_trace: Vec::with_capacity(cfg.steps as usize),
        ledger,
        residual_queue: 0,
        contacts_completed: 0,
        acks_sent: 0,
        timeouts: 0,
        conflicts: 0,
        fallbacks: 0,
        full_observation_steps: 0,
        final_alive_sensors: 0,
        steps: Vec::with_capacity(cfg.steps as usize),
    };

    for step in 0..cfg.steps {
        // 1. Arrivals land before anyone observes or decides.
        let arrivals = step_arrivals(&mut world.sensors, &mut arrivals_rng);
        ledger.generated += arrivals.total_drawn();
        ledger.lost_overflow += arrivals.total_overflow();
        for (j, &ov) in arrivals.overflow.iter().enumerate() {
            result.per_sensor_loss[j] += u64::from(ov);
        }

        let alive_count = world.sensors.iter().filter(|s| s.alive).count();
        if alive_count == 0 {
            // Nothing to schedule: the fleet holds position.
            result.velocity_trace.push(vec![0.0; n_uavs]);
            push_step_trace(&mut result, &world.sensors, step, &arrivals, ledger, StepExtras::default());
            continue;
        }

        // 2. Observation from pre-movement geometry.
        let mut per_uav_features: Vec<(Vec<SensorId>, FeatureMatrix)> = Vec::with_capacity(n_uavs);
        for uav in &world.uavs {
            per_uav_features.push(snapshot_features(&world.sensors, uav, &cfg.channel)?);
        }
        let obs = build_observation(step, gamma_th, &world.uavs, &world.sensors, &per_uav_features)?;

        // 3. Attention pruning (drives the prompt; baselines skip it).
        let mut pruned_union: BTreeSet<SensorId> = BTreeSet::new();
        let mut per_uav_selected: Vec<Vec<usize>> = Vec::new();
        if uses_prompt || collect_feedback {
            let k_eff = cfg.top_k.min(alive_count);
            for (ids, features) in &per_uav_features {
                let scores = score_sensors(features, &attention_params)?;
                let rows = top_k_select(scores.as_slice().expect("scores are contiguous"), k_eff)?;
                for &row in &rows {
                    pruned_union.insert(ids[row]);
                }
                per_uav_selected.push(rows);
            }
        }

        // 4. Decision.
        let mut fallback_reason: Option<String> = None;
        let mut used_full_observation = false;
        let decision: Decision = match policy {
            PolicyKind::MaxGain => max_channel_gain_policy(&obs),
            PolicyKind::Greedy => greedy_queue_aware_policy(&obs, gamma_th),
            PolicyKind::Random => random_schedule_policy(&obs, &mut policy_rng),
            PolicyKind::Icl => {
                let built = build_prompt(&task, &buffer, &obs, &pruned_union, cfg.prompt_char_budget);
                used_full_observation = built.used_full_observation;
                let client = client.as_mut().expect("icl policy constructs a client");
                match client.complete(&built.text) {
                    Ok((reply, _record)) => match parse_decision(&reply, &obs) {
                        Ok(d) => d,
                        Err(e) => {
                            fallback_reason = Some(format!("reply rejected: {e}"));
                            greedy_queue_aware_policy(&obs, gamma_th)
                        }
                    },
                    Err(e) => {
                        fallback_reason = Some(format!("completion failed: {e}"));
                        greedy_queue_aware_policy(&obs, gamma_th)
                    }
                }
            }
        };
        if fallback_reason.is_some() {
            result.fallbacks += 1;
        }
        if used_full_observation {
            result.full_observation_steps += 1;
        }

        // 5. Conflict resolution: the lowest UAV id keeps a contested
        // sensor; later claimants stand down for the step (but still fly).
        let mut taken: BTreeSet<SensorId> = BTreeSet::new();
        let mut winners = Vec::with_capacity(decision.assignments.len());
        let mut losers = Vec::new();
        for a in &decision.assignments {
            if taken.insert(a.sensor) {
                winners.push(*a);
            } else {
                losers.push(*a);
            }
        }
        result.conflicts += losers.len() as u32;

        // 6. Movement: every UAV flies at its commanded velocity.
        let mut velocities = Vec::with_capacity(n_uavs);
        for (idx, uav) in world.uavs.iter_mut().enumerate() {
            let v = decision
                .assignment_for(uav.id)
                .expect("decision covers every UAV")
                .velocity_mps;
            *uav = advance_uav(uav, &world.trajectories[idx], v, cfg.dt_s)?;
            velocities.push(v);
        }
        result.velocity_trace.push(velocities);

        // 7. Contacts against post-movement geometry, in UAV id order.
        let mut extras = StepExtras::default();
        extras.pruned = pruned_union.iter().copied().collect();
        extras.used_full_observation = used_full_observation;
        extras.fallback_reason = fallback_reason;
        let mut comm_lost_by_sensor = vec![0u64; n_sensors];
        let mut step_contacts: Vec<ScheduledContact> = Vec::with_capacity(winners.len());

        for a in &winners {
            let uav_idx = obs.uav_index(a.uav).expect("assignment validated against obs");
            let uav = &world.uavs[uav_idx];
            let s_idx = a.sensor as usize;
            debug_assert_eq!(world.sensors[s_idx].id, a.sensor, "sensor ids equal indices");

            let machine = &mut machines[uav_idx];
            debug_assert_eq!(machine.phase, Phase::Idle, "contacts start from idle");
            *machine = machine.advance(&ContactEvent::DecisionRequested)?;
            *machine = machine.advance(&ContactEvent::DecisionReady { target: a.sensor })?;
            *machine = machine.advance(&ContactEvent::Arrived)?;
            extras.message_bytes += encode(&ProtocolMessage::Beacon { sensor: a.sensor }).len() as u64;

            let link = link_quality(uav.position, world.sensors[s_idx].position, &cfg.channel)?;
            let hovering = uav.is_hovering(&world.trajectories[uav_idx]);
            let in_range =
                uav.horizontal_distance_to(world.sensors[s_idx].position) <= cfg.channel.coverage_radius_m;
            let target_alive = world.sensors[s_idx].alive;

            let (outcome, lost_packets) = if hovering && in_range && target_alive {
                // The sensor answers with one data frame; its arrival
                // first carries status, then the readings get verified.
                let status = make_status(&world.sensors[s_idx], &link);
                *machine = machine.advance(&ContactEvent::StatusReceived)?;
                let served = serve_sensor(
                    &mut world.sensors[s_idx],
                    &link,
                    gamma_th,
                    &cfg.power,
                    cfg.step_budget,
                );
                let readings: Vec<f64> = (0..served.attempted)
                    .map(|p| f64::from(a.sensor) * 1000.0 + f64::from(p))
                    .collect();
                extras.message_bytes +=
                    encode(&ProtocolMessage::Data { readings, status }).len() as u64;
                ledger.delivered += u64::from(served.delivered);
                ledger.lost_comm += u64::from(served.lost_comm);
                extras.delivered += u64::from(served.delivered);
                extras.lost_comm += u64::from(served.lost_comm);
                comm_lost_by_sensor[s_idx] += u64::from(served.lost_comm);
                result.per_sensor_loss[s_idx] += u64::from(served.lost_comm);

                if served.comm_failed {
                    while !machine.tick_deadline() {}
                    *machine = machine.advance(&ContactEvent::DeadlineExpired)?;
                    result.timeouts += 1;
                    (ContactOutcome::CommFailed { lost: served.lost_comm }, u64::from(served.lost_comm))
                } else {
                    *machine = machine.advance(&ContactEvent::DataVerified)?;
                    *machine = machine.advance(&ContactEvent::AckSent)?;
                    extras.message_bytes += encode(&ProtocolMessage::Ack).len() as u64;
                    result.acks_sent += 1;
                    *machine = machine.advance(&ContactEvent::Reset)?;
                    result.contacts_completed += 1;
                    (ContactOutcome::Served { delivered: served.delivered }, 0)
                }
            } else {
                // Beacon unanswered: wait out the deadline and abort.
                while !machine.tick_deadline() {}
                *machine = machine.advance(&ContactEvent::DeadlineExpired)?;
                result.timeouts += 1;
                (ContactOutcome::NoResponse, 0)
            };
            debug_assert_eq!(machine.phase, Phase::Idle, "every contact ends idle");

            extras.contacts.push(ContactTrace {
                uav: a.uav,
                target: a.sensor,
                velocity_mps: a.velocity_mps,
                outcome,
                gain_db: Some(link.gain_db),
            });
            step_contacts.push(ScheduledContact {
                uav: a.uav,
                sensor: a.sensor,
                gain_db: link.gain_db,
                lost_packets,
            });
        }
        for a in &losers {
            extras.contacts.push(ContactTrace {
                uav: a.uav,
                target: a.sensor,
                velocity_mps: a.velocity_mps,
                outcome: ContactOutcome::Conflict,
                gain_db: None,
            });
        }
        extras.contacts.sort_by_key(|c| c.uav);

        // 8. Loss accounting over the resolved schedule.
        let overflow_pairs: Vec<(SensorId, u64)> = world
            .sensors
            .iter()
            .zip(&arrivals.overflow)
            .map(|(s, &ov)| (s.id, u64::from(ov)))
            .collect();
        let loss = compute_step_loss(&step_contacts, &overflow_pairs, gamma_th);
        result.f_total += u64::from(loss.f_events);
        result.g_total += u64::from(loss.g_events);
        extras.f_events = loss.f_events;
        extras.g_events = loss.g_events;

        // 9. Feedback: demonstrations for the prompt, gradients for the
        // attention scorer.
        if uses_prompt {
            let realized = loss.failed_link_packets + arrivals.total_overflow();
            let restriction = if used_full_observation { None } else { Some(&pruned_union) };
            record_feedback(&mut buffer, &obs, restriction, &decision, realized);
        }
        if collect_feedback {
            for (u, (ids, features)) in per_uav_features.iter().enumerate() {
                let per_row_loss: Vec<f64> = ids
                    .iter()
                    .map(|&id| {
                        let j = id as usize;
                        (comm_lost_by_sensor[j] + u64::from(arrivals.overflow[j])) as f64
                    })
                    .collect();
                feedback.push(StepFeedback {
                    features: features.clone(),
                    selected: per_uav_selected.get(u).cloned().unwrap_or_default(),
                    per_sensor_loss: per_row_loss,
                });
            }
        }

        // 10. Trace and conservation.
        push_step_trace(&mut result, &world.sensors, step, &arrivals, ledger, extras);
        let trace = result.steps.last().expect("just pushed");
        assert!(
            ledger.generated
                == ledger.delivered + ledger.lost_overflow + ledger.lost_comm + trace.queue_total,
            "packet conservation broken at step {step}: {ledger:?} with {} queued",
            trace.queue_total
        );
    }

    result.ledger = ledger;
    result.packet_loss = ledger.lost_overflow + ledger.lost_comm;
    result.event_loss = result.f_total + result.g_total;
    result.residual_queue = world.sensors.iter().map(|s| u64::from(s.queue_len)).sum();
    result.final_alive_sensors = world.sensors.iter().filter(|s| s.alive).count() as u32;
    Ok((result, feedback))
}

/// Per-step numbers that accumulate across phases before the trace row is
/// assembled.
#[derive(Default)]
struct StepExtras {
    pruned: Vec<SensorId>,
    used_full_observation: bool,
    fallback_reason: Option<String>,
    contacts: Vec<ContactTrace>,
    f_events: u32,
    g_events: u32,
    delivered: u64,
    lost_comm: u64,
    message_bytes: u64,
}

fn push_step_trace(
    result: &mut EpisodeResult,
    sensors: &[crate::world::SensorState],
    step: u32,
    arrivals: &crate::world::ArrivalReport,
    ledger: PacketLedger,
    extras: StepExtras,
) {
    let queue_total: u64 = sensors.iter().map(|s| u64::from(s.queue_len)).sum();
    result.steps.push(StepTrace {
        step,
        arrivals: arrivals.total_drawn(),
        overflow: arrivals.total_overflow(),
        pruned: extras.pruned,
        used_full_observation: extras.used_full_observation,
        fallback: extras.fallback_reason.is_some(),
        fallback_reason: extras.fallback_reason,
        contacts: extras.contacts,
        f_events: extras.f_events,
        g_events: extras.g_events,
        delivered: extras.delivered,
        lost_comm: extras.lost_comm,
        message_bytes: extras.message_bytes,
        queue_total,
        alive_sensors: sensors.iter().filter(|s| s.alive).count() as u32,
        ledger,
    });
}

fn build_observation(
    step: u32,
    gamma_th_db: f64,
    uavs: &[crate::world::UavState],
    sensors: &[crate::world::SensorState],
    per_uav_features: &[(Vec<SensorId>, FeatureMatrix)],
) -> Result<Observation, SimError> {
    let uav_views: Vec<UavObs> = uavs
        .iter()
        .map(|u| UavObs { id: u.id, position: u.position, v_max_mps: u.v_max_mps })
        .collect();
    let ids = &per_uav_features[0].0;
    let sensor_views: Vec<SensorObs> = ids
        .iter()
        .enumerate()
        .map(|(row, &id)| {
            let s = &sensors[id as usize];
            debug_assert_eq!(s.id, id, "sensor ids equal indices");
            SensorObs {
                id,
                queue_len: s.queue_len,
                queue_cap: s.queue_cap,
                battery_j: s.battery_j,
                gains_db: per_uav_features
                    .iter()
                    .map(|(_, features)| features.values()[[row, 2]])
                    .collect(),
            }
        })
        .collect();
    Observation::new(step, gamma_th_db, uav_views, sensor_views).map_err(SimError::from)
}

// ===== Tests =====
