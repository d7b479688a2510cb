//! Plain-text configuration files and command-line overrides.
//!
//! The format is INI-like: `[section]` headers, `key = value` pairs, and
//! `#` comments (full-line or trailing). Parsing is strict: unknown
//! sections or keys fail with their location instead of being ignored, so
//! a typo can never silently run the default. Entries apply onto
//! [`SimConfig::default`] in order, later entries winning, and command
//! line overrides (`section.key=value`) append after the file.
//!
//! Sections and keys:
//!
//! | section     | keys |
//! |-------------|------|
//! | `sim`       | sensors, uavs, queue_cap, steps, top_k, policy, step_budget, seed |
//! | `world`     | area_m, altitude_m, v_max, hover_steps, waypoint_offset_m, dt_s, arrival_rates, initial_queues, placement, sensor_positions, sensor_battery_j, uav_battery_j, tx_power_mw, packet_airtime_s |
//! | `channel`   | a, b, eta_los_db, eta_nlos_db, wavelength_m, light_speed_mps, coverage_radius_m, gamma_th_db (`auto` or a number) |
//! | `attention` | d_prime, learning_rate |
//! | `prompt`    | example_capacity, char_budget |
//! | `llm`       | backend (`mock` or `live`), mock_latency_s, base_url, model, timeout_s, max_retries, temperature, auth_env, backoff_base_ms, max_response_chars |
//! | `protocol`  | contact_deadline |
//!
//! `arrival_rates` and `initial_queues` take one value for all sensors or
//! a comma-separated value per sensor. `sensor_positions` takes
//! semicolon-separated `x,y` pairs and implies `placement = explicit`.

use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

use crate::llm::EndpointConfig;
use crate::sim::{GammaThSpec, LlmSpec, PerSensor, Placement, SimConfig, SimError};

// ===== Errors =====

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("{origin}: unknown key {key:?} in section [{section}]")]
    UnknownKey { origin: String, section: String, key: String },
    #[error("{origin}: bad value for {key}: {reason}")]
    BadValue { origin: String, key: String, reason: String },
    #[error("override {spec:?}: {reason}")]
    BadOverride { spec: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

// ===== Parsing =====

/// One `key = value` occurrence, tagged with where it came from so errors
/// can point at it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigEntry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub origin: String,
}

const SECTIONS: [&str; 7] = ["sim", "world", "channel", "attention", "prompt", "llm", "protocol"];

/// Parses a configuration file's text into its entries, checking syntax
/// and section names. Key names are checked later, when the entries apply.
pub fn parse_config(text: &str) -> Result<Vec<ConfigEntry>, ConfigError> {
    let mut entries = Vec::new();
    let mut section: Option<String> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                reason: format!("unclosed section header {line:?}"),
            })?;
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(ConfigError::UnknownSection { line: line_no, section: name.to_string() });
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            reason: format!("expected `key = value` or `[section]`, got {line:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line: line_no, reason: "empty key".to_string() });
        }
        let section = section.clone().ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            reason: format!("key {key:?} appears before any [section] header"),
        })?;
        entries.push(ConfigEntry {
            section,
            key: key.to_string(),
            value: value.trim().to_string(),
            origin: format!("line {line_no}"),
        });
    }
    Ok(entries)
}

/// Parses one `section.key=value` override.
pub fn parse_override(spec: &str) -> Result<ConfigEntry, ConfigError> {
    let bad = |reason: &str| ConfigError::BadOverride { spec: spec.to_string(), reason: reason.to_string() };
    let (path, value) = spec.split_once('=').ok_or_else(|| bad("expected section.key=value"))?;
    let (section, key) = path.trim().split_once('.').ok_or_else(|| bad("expected section.key=value"))?;
    let (section, key) = (section.trim(), key.trim());
    if section.is_empty() || key.is_empty() {
        return Err(bad("empty section or key"));
    }
    if !SECTIONS.contains(&section) {
        return Err(bad(&format!("unknown section {section:?}")));
    }
    Ok(ConfigEntry {
        section: section.to_string(),
        key: key.to_string(),
        value: value.trim().to_string(),
        origin: format!("override {spec:?}"),
    })
}

// ===== Building =====

/// Collects the `[llm]` keys before assembly, because the backend choice
/// decides which of them are meaningful.
#[derive(Default)]
struct LlmStaging {
    backend: Option<(String, String)>,
    mock_latency_s: Option<(f64, String)>,
    base_url: Option<String>,
    model: Option<String>,
    timeout_s: Option<f64>,
    max_retries: Option<u32>,
    temperature: Option<f64>,
    auth_env: Option<String>,
    backoff_base_ms: Option<u64>,
    max_response_chars: Option<usize>,
    live_keys: Vec<String>,
}

/// Applies entries onto the default configuration and validates the
/// result. Later entries override earlier ones.
pub fn build_sim_config(entries: &[ConfigEntry]) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default();
    let mut llm = LlmStaging::default();

    for e in entries {
        apply_entry(&mut cfg, &mut llm, e)?;
    }
    assemble_llm(&mut cfg, llm)?;
    cfg.validate().map_err(|err| match err {
        SimError::Config(msg) => ConfigError::Invalid(msg),
        other => ConfigError::Invalid(other.to_string()),
    })?;
    Ok(cfg)
}

fn apply_entry(cfg: &mut SimConfig, llm: &mut LlmStaging, e: &ConfigEntry) -> Result<(), ConfigError> {
    match (e.section.as_str(), e.key.as_str()) {
        ("sim", "sensors") => cfg.sensors = num(e)?,
        ("sim", "uavs") => cfg.uavs = num(e)?,
        ("sim", "queue_cap") => cfg.queue_cap = num(e)?,
        ("sim", "steps") => cfg.steps = num(e)?,
        ("sim", "top_k") => cfg.top_k = num(e)?,
        ("sim", "policy") => cfg.policy = e.value.parse().map_err(|err: String| bad_value(e, &err))?,
        ("sim", "step_budget") => cfg.step_budget = num(e)?,
        ("sim", "seed") => cfg.seed = num(e)?,

        ("world", "area_m") => cfg.area_side_m = num(e)?,
        ("world", "altitude_m") => cfg.altitude_m = num(e)?,
        ("world", "v_max") => cfg.v_max_mps = num(e)?,
        ("world", "hover_steps") => cfg.hover_steps = num(e)?,
        ("world", "waypoint_offset_m") => cfg.waypoint_offset_m = num(e)?,
        ("world", "dt_s") => cfg.dt_s = num(e)?,
        ("world", "arrival_rates") => cfg.arrival_rates = per_sensor(e)?,
        ("world", "initial_queues") => cfg.initial_queues = per_sensor(e)?,
        ("world", "placement") => {
            cfg.placement = match e.value.as_str() {
                "random" => Placement::Random,
                "explicit" => match &cfg.placement {
                    Placement::Explicit(_) => cfg.placement.clone(),
                    Placement::Random => Placement::Explicit(Vec::new()),
                },
                other => return Err(bad_value(e, &format!("expected random or explicit, got {other:?}"))),
            }
        }
        ("world", "sensor_positions") => cfg.placement = Placement::Explicit(positions(e)?),
        ("world", "sensor_battery_j") => cfg.sensor_battery_j = num(e)?,
        ("world", "uav_battery_j") => cfg.uav_battery_j = num(e)?,
        ("world", "tx_power_mw") => cfg.power.tx_power_mw = num(e)?,
        ("world", "packet_airtime_s") => cfg.power.packet_airtime_s = num(e)?,

        ("channel", "a") => cfg.channel.a = num(e)?,
        ("channel", "b") => cfg.channel.b = num(e)?,
        ("channel", "eta_los_db") => cfg.channel.eta_los_db = num(e)?,
        ("channel", "eta_nlos_db") => cfg.channel.eta_nlos_db = num(e)?,
        ("channel", "wavelength_m") => cfg.channel.wavelength_m = num(e)?,
        ("channel", "light_speed_mps") => cfg.channel.light_speed_mps = num(e)?,
        ("channel", "coverage_radius_m") => cfg.channel.coverage_radius_m = num(e)?,
        ("channel", "gamma_th_db") => {
            cfg.gamma_th = if e.value == "auto" {
                GammaThSpec::Auto
            } else {
                GammaThSpec::Fixed(num(e)?)
            }
        }

        ("attention", "d_prime") => cfg.d_prime = num(e)?,
        ("attention", "learning_rate") => cfg.learning_rate = num(e)?,

        ("prompt", "example_capacity") => cfg.example_capacity = num(e)?,
        ("prompt", "char_budget") => cfg.prompt_char_budget = num(e)?,

        ("llm", "backend") => match e.value.as_str() {
            "mock" | "live" => llm.backend = Some((e.value.clone(), e.origin.clone())),
            other => return Err(bad_value(e, &format!("expected mock or live, got {other:?}"))),
        },
        ("llm", "mock_latency_s") => llm.mock_latency_s = Some((num(e)?, e.origin.clone())),
        ("llm", "base_url") => stage_live(llm, e, |l, v| l.base_url = Some(v))?,
        ("llm", "model") => stage_live(llm, e, |l, v| l.model = Some(v))?,
        ("llm", "timeout_s") => {
            let v = num(e)?;
            stage_live(llm, e, move |l, _| l.timeout_s = Some(v))?;
        }
        ("llm", "max_retries") => {
            let v = num(e)?;
            stage_live(llm, e, move |l, _| l.max_retries = Some(v))?;
        }
        ("llm", "temperature") => {
            let v = num(e)?;
            stage_live(llm, e, move |l, _| l.temperature = Some(v))?;
        }
        ("llm", "auth_env") => stage_live(llm, e, |l, v| l.auth_env = Some(v))?,
        ("llm", "backoff_base_ms") => {
            let v = num(e)?;
            stage_live(llm, e, move |l, _| l.backoff_base_ms = Some(v))?;
        }
        ("llm", "max_response_chars") => {
            let v = num(e)?;
            stage_live(llm, e, move |l, _| l.max_response_chars = Some(v))?;
        }

        ("protocol", "contact_deadline") => cfg.contact_deadline = num(e)?,

        (section, key) => {
            return Err(ConfigError::UnknownKey {
                origin: e.origin.clone(),
                section: section.to_string(),
                key: key.to_string(),
            })
        }
    }
    Ok(())
}

fn stage_live(
    llm: &mut LlmStaging,
    e: &ConfigEntry,
    set: impl FnOnce(&mut LlmStaging, String),
) -> Result<(), ConfigError> {
    llm.live_keys.push(format!("llm.{} ({})", e.key, e.origin));
    set(llm, e.value.clone());
    Ok(())
}

/// Resolves the staged `[llm]` keys into a backend. Keys belonging to the
/// backend that was not chosen are rejected rather than ignored.
fn assemble_llm(cfg: &mut SimConfig, llm: LlmStaging) -> Result<(), ConfigError> {
    let backend = llm.backend.as_ref().map(|(b, _)| b.as_str()).unwrap_or("mock");
    match backend {
        "mock" => {
            if let Some(key) = llm.live_keys.first() {
                return Err(ConfigError::Invalid(format!(
                    "{key} requires llm.backend = live, but the backend is mock"
                )));
            }
            let latency = llm.mock_latency_s.map(|(v, _)| v).unwrap_or(0.05);
            cfg.llm = LlmSpec::Mock { latency_s: latency };
        }
        "live" => {
            if let Some((_, origin)) = &llm.mock_latency_s {
                return Err(ConfigError::Invalid(format!(
                    "llm.mock_latency_s ({origin}) requires llm.backend = mock, but the backend is live"
                )));
            }
            let mut endpoint = EndpointConfig::default();
            if let Some(v) = llm.base_url {
                endpoint.base_url = v;
            }
            if let Some(v) = llm.model {
                endpoint.model = v;
            }
            if let Some(v) = llm.timeout_s {
                endpoint.timeout_s = v;
            }
            if let Some(v) = llm.max_retries {
                endpoint.max_retries = v;
            }
            if let Some(v) = llm.temperature {
                endpoint.temperature = v;
            }
            if let Some(v) = llm.auth_env {
                endpoint.auth_env = v;
            }
            if let Some(v) = llm.backoff_base_ms {
                endpoint.backoff_base_ms = v;
            }
            if let Some(v) = llm.max_response_chars {
                endpoint.max_response_chars = v;
            }
            cfg.llm = LlmSpec::Live(endpoint);
        }
        other => unreachable!("backend {other:?} was validated at parse time"),
    }
    Ok(())
}

// ===== Value parsing =====

fn bad_value(e: &ConfigEntry, reason: &str) -> ConfigError {
    ConfigError::BadValue {
        origin: e.origin.clone(),
        key: format!("{}.{}", e.section, e.key),
        reason: reason.to_string(),
    }
}

fn num<T: FromStr>(e: &ConfigEntry) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    e.value.parse().map_err(|err: T::Err| bad_value(e, &err.to_string()))
}

/// Scalar for all sensors, or one comma-separated value per sensor.
fn per_sensor<T: FromStr + Copy>(e: &ConfigEntry) -> Result<PerSensor<T>, ConfigError>
where
    T::Err: Display,
{
    let values: Result<Vec<T>, _> = e
        .value
        .split(',')
        .map(|v| v.trim().parse::<T>().map_err(|err| bad_value(e, &err.to_string())))
        .collect();
    let values = values?;
    match values.as_slice() {
        [single] => Ok(PerSensor::Uniform(*single)),
        _ => Ok(PerSensor::Each(values)),
    }
}

/// Semicolon-separated `x,y` pairs.
fn positions(e: &ConfigEntry) -> Result<Vec<[f64; 2]>, ConfigError> {
    e.value
        .split(';')
        .map(|pair| {
            let (x, y) = pair
                .trim()
                .split_once(',')
                .ok_or_else(|| bad_value(e, &format!("expected x,y in {pair:?}")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|err| bad_value(e, &format!("{err} in {pair:?}")))
            };
            Ok([parse(x)?, parse(y)?])
        })
        .collect()
}

// ===== Tests =====

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::PolicyKind;

    fn build(text: &str) -> Result<SimConfig, ConfigError> {
        build_sim_config(&parse_config(text)?)
    }

    #[test]
    fn empty_text_yields_the_defaults() {
        assert_eq!(build("").unwrap(), SimConfig::default());
        assert_eq!(build("# only a comment\n\n").unwrap(), SimConfig::default());
    }

    #[test]
    fn every_section_round_trips() {
        let text = "
            [sim]
            sensors = 6          # trailing comment
            uavs = 2
            queue_cap = 20
            steps = 12
            top_k = 3
            policy = greedy
            step_budget = 15
            seed = 99

            [world]
            area_m = 200
            altitude_m = 40
            v_max = 15
            hover_steps = 2
            waypoint_offset_m = 5
            dt_s = 0.5
            arrival_rates = 1.5
            initial_queues = 0,1,2,3,4,5
            sensor_battery_j = 60
            uav_battery_j = 1000
            tx_power_mw = 200
            packet_airtime_s = 0.002

            [channel]
            a = 9.61
            b = 0.16
            eta_los_db = 1
            eta_nlos_db = 20
            wavelength_m = 0.125
            coverage_radius_m = 120
            gamma_th_db = -105.5

            [attention]
            d_prime = 4
            learning_rate = 0.1

            [prompt]
            example_capacity = 5
            char_budget = 4096

            [llm]
            backend = mock
            mock_latency_s = 0.2

            [protocol]
            contact_deadline = 3
        ";
        let cfg = build(text).unwrap();
        assert_eq!(cfg.sensors, 6);
        assert_eq!(cfg.uavs, 2);
        assert_eq!(cfg.queue_cap, 20);
        assert_eq!(cfg.steps, 12);
        assert_eq!(cfg.top_k, 3);
        assert_eq!(cfg.policy, PolicyKind::Greedy);
        assert_eq!(cfg.step_budget, 15);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.area_side_m, 200.0);
        assert_eq!(cfg.altitude_m, 40.0);
        assert_eq!(cfg.v_max_mps, 15.0);
        assert_eq!(cfg.hover_steps, 2);
        assert_eq!(cfg.waypoint_offset_m, 5.0);
        assert_eq!(cfg.dt_s, 0.5);
        assert_eq!(cfg.arrival_rates, PerSensor::Uniform(1.5));
        assert_eq!(cfg.initial_queues, PerSensor::Each(vec![0, 1, 2, 3, 4, 5]));
        assert_eq!(cfg.sensor_battery_j, 60.0);
        assert_eq!(cfg.uav_battery_j, 1000.0);
        assert_eq!(cfg.power.tx_power_mw, 200.0);
        assert_eq!(cfg.power.packet_airtime_s, 0.002);
        assert_eq!(cfg.channel.coverage_radius_m, 120.0);
        assert_eq!(cfg.gamma_th, GammaThSpec::Fixed(-105.5));
        assert_eq!(cfg.d_prime, 4);
        assert_eq!(cfg.learning_rate, 0.1);
        assert_eq!(cfg.example_capacity, 5);
        assert_eq!(cfg.prompt_char_budget, 4096);
        assert_eq!(cfg.llm, LlmSpec::Mock { latency_s: 0.2 });
        assert_eq!(cfg.contact_deadline, 3);
    }

    #[test]
    fn later_entries_win() {
        let cfg = build("[sim]\nsteps = 5\nsteps = 9\n").unwrap();
        assert_eq!(cfg.steps, 9);
    }

    #[test]
    fn overrides_append_after_the_file() {
        let mut entries = parse_config("[sim]\nsteps = 5\n").unwrap();
        entries.push(parse_override("sim.steps=7").unwrap());
        entries.push(parse_override("channel.gamma_th_db=auto").unwrap());
        let cfg = build_sim_config(&entries).unwrap();
        assert_eq!(cfg.steps, 7);
        assert_eq!(cfg.gamma_th, GammaThSpec::Auto);
    }

    #[test]
    fn unknown_section_is_rejected_with_its_line() {
        let err = parse_config("[sim]\nsteps = 5\n[bogus]\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownSection { line: 3, section: "bogus".to_string() }
        );
    }

    #[test]
    fn unknown_key_is_rejected_with_its_origin() {
        let err = build("[sim]\nstepz = 5\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { origin, section, key } => {
                assert_eq!(origin, "line 2");
                assert_eq!(section, "sim");
                assert_eq!(key, "stepz");
            }
            other => panic!("expected UnknownKey, got {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        assert!(matches!(
            parse_config("[sim\n").unwrap_err(),
            ConfigError::Syntax { line: 1, .. }
        ));
        assert!(matches!(
            parse_config("steps = 5\n").unwrap_err(),
            ConfigError::Syntax { line: 1, .. }
        ));
        assert!(matches!(
            parse_config("[sim]\nnot a pair\n").unwrap_err(),
            ConfigError::Syntax { line: 2, .. }
        ));
    }

    #[test]
    fn bad_values_name_the_key() {
        let err = build("[sim]\nsteps = soon\n").unwrap_err();
        match err {
            ConfigError::BadValue { key, origin, .. } => {
                assert_eq!(key, "sim.steps");
                assert_eq!(origin, "line 2");
            }
            other => panic!("expected BadValue, got {other:?}"),
        }
        assert!(build("[llm]\nbackend = remote\n").is_err());
        assert!(build("[world]\nplacement = clustered\n").is_err());
    }

    #[test]
    fn semantic_violations_surface_as_invalid() {
        let err = build("[sim]\ntop_k = 99\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "got {err:?}");
        let err = build("[world]\narrival_rates = 1,2,3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "rate list length mismatch");
    }

    #[test]
    fn explicit_positions_parse_and_imply_placement() {
        let text = "
            [sim]
            sensors = 3
            top_k = 2
            [world]
            sensor_positions = 10,20; 30.5,40 ; 50,60
        ";
        let cfg = build(text).unwrap();
        assert_eq!(
            cfg.placement,
            Placement::Explicit(vec![[10.0, 20.0], [30.5, 40.0], [50.0, 60.0]])
        );
        assert!(build("[world]\nsensor_positions = 10;20\n").is_err(), "pairs need x,y");
    }

    #[test]
    fn placement_random_after_positions_wins() {
        let text = "
            [sim]
            sensors = 2
            top_k = 1
            [world]
            sensor_positions = 1,2; 3,4
            placement = random
        ";
        assert_eq!(build(text).unwrap().placement, Placement::Random);
    }

    #[test]
    fn live_backend_assembles_the_endpoint() {
        let text = "
            [llm]
            backend = live
            base_url = http://10.0.0.5:9000/v1
            model = scheduler-7b
            timeout_s = 12
            max_retries = 5
            temperature = 0.25
            auth_env = SCHED_KEY
            backoff_base_ms = 50
            max_response_chars = 9000
        ";
        let cfg = build(text).unwrap();
        match cfg.llm {
            LlmSpec::Live(e) => {
                assert_eq!(e.base_url, "http://10.0.0.5:9000/v1");
                assert_eq!(e.model, "scheduler-7b");
                assert_eq!(e.timeout_s, 12.0);
                assert_eq!(e.max_retries, 5);
                assert_eq!(e.temperature, 0.25);
                assert_eq!(e.auth_env, "SCHED_KEY");
                assert_eq!(e.backoff_base_ms, 50);
                assert_eq!(e.max_response_chars, 9000);
            }
            other => panic!("expected live backend, got {other:?}"),
        }
    }

    #[test]
    fn backend_and_keys_must_agree() {
        let err = build("[llm]\nbase_url = http://x/v1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "live key under mock backend");
        let err = build("[llm]\nbackend = live\nmock_latency_s = 0.1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "mock key under live backend");
    }

    #[test]
    fn override_specs_are_validated() {
        assert!(parse_override("sim.steps=9").is_ok());
        assert!(parse_override("simsteps=9").is_err());
        assert!(parse_override("sim.steps").is_err());
        assert!(parse_override("bogus.steps=9").is_err());
        assert!(parse_override(".steps=9").is_err());
    }

    #[test]
    fn gamma_auto_keyword_parses() {
        assert_eq!(build("[channel]\ngamma_th_db = auto\n").unwrap().gamma_th, GammaThSpec::Auto);
        assert!(build("[channel]\ngamma_th_db = sometimes\n").is_err());
    }
}
