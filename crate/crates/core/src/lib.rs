//! Deterministic multi-UAV data-collection simulator and scheduling library.
//!
//! A fleet of UAVs patrols a field of ground sensors whose bounded queues
//! fill with Poisson packet arrivals. Each step a scheduling policy assigns
//! every UAV a target sensor and velocity; data moves only while a UAV
//! hovers in range over a link whose gain clears a threshold. The crate
//! provides the air-to-ground channel model, the queueing world, an
//! attention scorer that prunes the per-step decision context, an
//! in-context-learning policy driven by a language-model client (with a
//! deterministic offline mock), classical baselines, a contact protocol
//! state machine with a binary codec, and a seeded episode runner whose
//! results reproduce bit-for-bit.

pub mod attention;
pub mod channel;
pub mod config;
pub mod llm;
pub mod policy;
pub mod protocol;
pub mod rng;
pub mod sim;
pub mod world;

pub use attention::{
    normalize_features, score_sensors, top_k_select, update_params, AttentionError,
    AttentionParams, FeatureMatrix, StepFeedback, UpdateReport,
};
pub use channel::{
    below_threshold, calibrate_gamma_th, elevation_angle_deg, link_quality, los_probability,
    path_loss_db, ChannelError, ChannelParams, LinkQuality,
};
pub use config::{build_sim_config, parse_config, parse_override, ConfigEntry, ConfigError};
pub use llm::{CompletionRecord, EndpointConfig, LlmClient, LlmError, Transport};
pub use policy::{
    build_prompt, evaluate_policy, greedy_queue_aware_policy, max_channel_gain_policy,
    parse_decision, random_schedule_policy, record_feedback, serialize_observation, Decision,
    DecisionParseError, EvalScore, ExampleBuffer, Observation, PolicyError, SensorObs,
    TaskDescription, UavObs,
};
pub use protocol::{
    decode, encode, make_status, ContactEvent, ContactState, Phase, ProtocolError,
    ProtocolMessage, StatusPayload,
};
pub use rng::SeedSplitter;
pub use sim::{
    compute_step_loss, run_episode, run_episode_with_params, run_experiment, train_attention,
    EpisodeResult, ExperimentPoint, ExperimentRow, GammaThSpec, LlmSpec, PerSensor, Placement,
    PolicyKind, ScheduledContact, SimConfig, SimError, StepLoss, TrainingRow,
};
pub use world::{
    advance_uav, serve_sensor, snapshot_features, step_arrivals, PacketLedger, PowerModel,
    SensorId, SensorState, Trajectory, UavId, UavState, WorldError,
};
