//! Result rendering and atomic file output.
//!
//! All renderers are pure string builders so their output is testable and
//! byte-stable: floats go through Rust's shortest round-trip `Display`,
//! collections iterate in fixed order, and nothing depends on wall time.
//! Writing is atomic (temp file then rename), so a crashed or killed run
//! never leaves a partial file behind.

use std::fmt::Write as _;
use std::io::{self, Write as _};
use std::path::Path;

use crate::sim::experiment::{ExperimentRow, TrainingRow};
use crate::sim::runner::EpisodeResult;

/// Version stamp embedded in file headers.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

// ===== Renderers =====

/// Per-contact episode log. Step-level numbers repeat on every contact row
/// of their step; a step without contacts emits one "idle" placeholder row
/// so every step is present.
pub fn episode_csv(result: &EpisodeResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# uavsim v{} seed={} policy={} gamma_th={}",
        TOOL_VERSION,
        result.seed,
        result.policy.name(),
        result.gamma_th_db
    );
    out.push_str(
        "step,uav,target,velocity_mps,outcome,gain_db,delivered,lost_comm,f_events,g_events,\
         overflow,queue_total,gen_total,del_total,ovf_total,comm_total\n",
    );
    for trace in &result.steps {
        let step_cols = format!(
            "{},{},{},{},{},{},{},{}",
            trace.delivered,
            trace.lost_comm,
            trace.f_events,
            trace.g_events,
            trace.overflow,
            trace.queue_total,
            trace.ledger.generated,
            trace.ledger.delivered,
        );
        let ledger_tail = format!("{},{}", trace.ledger.lost_overflow, trace.ledger.lost_comm);
        if trace.contacts.is_empty() {
            let _ = writeln!(out, "{},,,,idle,,{step_cols},{ledger_tail}", trace.step);
            continue;
        }
        for c in &trace.contacts {
            let gain = c.gain_db.map(|g| g.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{gain},{step_cols},{ledger_tail}",
                trace.step,
                c.uav,
                c.target,
                c.velocity_mps,
                c.outcome.name(),
            );
        }
    }
    out
}

/// Aggregated comparison table. The reduction column relates each row to
/// the first row sharing its label (the base policy of that sweep point):
/// positive means fewer packets lost than the base. It is empty when the
/// base lost nothing, and 0 for the base row itself.
pub fn summary_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# uavsim v{TOOL_VERSION}");
    out.push_str(
        "label,policy,n_seeds,mean_packet_loss,std_packet_loss,min_packet_loss,\
         max_packet_loss,mean_event_loss,mean_delivered,reduction_vs_first_pct\n",
    );
    for row in rows {
        let base_mean = rows
            .iter()
            .find(|r| r.label == row.label)
            .map(|r| r.packet_loss.mean)
            .expect("a row's label always finds at least itself");
        let reduction = if base_mean == 0.0 {
            String::new()
        } else {
            (100.0 * (base_mean - row.packet_loss.mean) / base_mean).to_string()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            row.label,
            row.policy.name(),
            row.packet_loss.n,
            row.packet_loss.mean,
            row.packet_loss.std,
            row.packet_loss.min,
            row.packet_loss.max,
            row.mean_event_loss,
            row.mean_delivered,
            reduction,
        );
    }
    out
}

/// Per-episode training log.
pub fn training_csv(base_seed: u64, rows: &[TrainingRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# uavsim v{TOOL_VERSION} base_seed={base_seed}");
    out.push_str("episode,seed,surrogate_loss,used_steps,skipped_steps,packet_loss,degenerate\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.episode,
            row.seed,
            row.surrogate_loss,
            row.used_steps,
            row.skipped_steps,
            row.packet_loss,
            row.degenerate,
        );
    }
    out
}

/// Full step-by-step record as JSON lines: one meta line, then one line
/// per step.
pub fn trace_jsonl(result: &EpisodeResult) -> String {
    let meta = serde_json::json!({
        "version": TOOL_VERSION,
        "seed": result.seed,
        "policy": result.policy.name(),
        "gamma_th_db": result.gamma_th_db,
    });
    let mut out = serde_json::to_string(&meta).expect("meta is plain data");
    out.push('\n');
    for trace in &result.steps {
        out.push_str(&serde_json::to_string(trace).expect("step traces are plain data"));
        out.push('\n');
    }
    out
}

// ===== Output =====

/// Writes `content` to `path` atomically: the bytes land in a temporary
/// file in the same directory, which then renames over the target. Readers
/// see either the old file or the complete new one, never a torn write.
pub fn atomic_write(path: &Path, content: &str) -> io::Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(content.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

// ===== Tests =====

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::EvalScore;
    use crate::sim::trace::ContactOutcome;
    use crate::sim::{run_episode, PolicyKind, SimConfig};

    fn tiny_episode() -> EpisodeResult {
        let mut cfg = SimConfig::default();
        cfg.sensors = 4;
        cfg.uavs = 2;
        cfg.steps = 6;
        cfg.top_k = 2;
        run_episode(&cfg, 3, PolicyKind::Greedy).unwrap()
    }

    #[test]
    fn episode_csv_has_one_row_per_contact_and_idle_steps() {
        let result = tiny_episode();
        let csv = episode_csv(&result);
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("# uavsim v"), "version header first");
        assert!(header.contains("seed=3"), "seed recorded");
        assert!(header.contains("policy=greedy"));
        let columns = lines.next().unwrap();
        assert_eq!(columns.split(',').count(), 16, "column header width");
        let expected_rows: usize =
            result.steps.iter().map(|t| t.contacts.len().max(1)).sum();
        let data_rows: Vec<&str> = lines.collect();
        assert_eq!(data_rows.len(), expected_rows);
        for row in &data_rows {
            assert_eq!(row.split(',').count(), 16, "row width matches header: {row}");
        }
    }

    #[test]
    fn episode_csv_is_byte_stable() {
        let a = episode_csv(&tiny_episode());
        let b = episode_csv(&tiny_episode());
        assert_eq!(a, b, "same config and seed renders identical bytes");
    }

    #[test]
    fn conflict_rows_leave_the_gain_empty() {
        let mut cfg = SimConfig::default();
        cfg.sensors = 1;
        cfg.uavs = 2;
        cfg.top_k = 1;
        cfg.steps = 4;
        cfg.placement = crate::sim::Placement::Explicit(vec![[50.0, 50.0]]);
        let result = run_episode(&cfg, 1, PolicyKind::Greedy).unwrap();
        assert!(result.steps.iter().any(|t| {
            t.contacts.iter().any(|c| c.outcome == ContactOutcome::Conflict)
        }));
        let csv = episode_csv(&result);
        let conflict_row = csv
            .lines()
            .find(|l| l.contains(",conflict,"))
            .expect("conflict row rendered");
        let fields: Vec<&str> = conflict_row.split(',').collect();
        assert_eq!(fields[4], "conflict");
        assert_eq!(fields[5], "", "no link evaluated for a stand-down");
    }

    fn score(mean: f64) -> EvalScore {
        EvalScore { metric: "packet_loss".into(), n: 3, mean, std: 1.0, min: mean - 1.0, max: mean + 1.0 }
    }

    #[test]
    fn summary_reduction_compares_to_first_row_of_label() {
        let rows = vec![
            ExperimentRow {
                label: "a".into(),
                policy: PolicyKind::MaxGain,
                packet_loss: score(200.0),
                mean_event_loss: 10.0,
                mean_delivered: 500.0,
            },
            ExperimentRow {
                label: "a".into(),
                policy: PolicyKind::Greedy,
                packet_loss: score(50.0),
                mean_event_loss: 4.0,
                mean_delivered: 650.0,
            },
            ExperimentRow {
                label: "b".into(),
                policy: PolicyKind::Greedy,
                packet_loss: score(0.0),
                mean_event_loss: 0.0,
                mean_delivered: 100.0,
            },
        ];
        let csv = summary_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# uavsim v"));
        let base: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(base[9], "0", "base row reduces by nothing");
        let better: Vec<&str> = lines[3].split(',').collect();
        assert_eq!(better[9], "75", "(200-50)/200 in percent");
        let zero_base: Vec<&str> = lines[4].split(',').collect();
        assert_eq!(zero_base[9], "", "no reduction against a lossless base");
    }

    #[test]
    fn training_csv_lists_every_episode() {
        let rows = vec![
            TrainingRow {
                episode: 0,
                seed: 11,
                surrogate_loss: 1.5,
                used_steps: 9,
                skipped_steps: 1,
                packet_loss: 42,
                degenerate: false,
            },
            TrainingRow {
                episode: 1,
                seed: 12,
                surrogate_loss: 1.25,
                used_steps: 10,
                skipped_steps: 0,
                packet_loss: 30,
                degenerate: false,
            },
        ];
        let csv = training_csv(99, &rows);
        assert!(csv.starts_with("# uavsim v"));
        assert!(csv.lines().nth(0).unwrap().contains("base_seed=99"));
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(2).unwrap().starts_with("0,11,1.5,9,1,42,false"));
    }

    #[test]
    fn trace_jsonl_parses_line_by_line() {
        let result = tiny_episode();
        let text = trace_jsonl(&result);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), result.steps.len() + 1);
        let meta: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(meta["seed"], 3);
        assert_eq!(meta["policy"], "greedy");
        assert_eq!(meta["version"], TOOL_VERSION);
        for line in &lines[1..] {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v["ledger"]["generated"].is_u64(), "ledger embedded per step");
        }
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_droppings() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out.csv");
        atomic_write(&target, "first\n").unwrap();
        atomic_write(&target, "second\n").unwrap();
        assert_eq!(std::fs::read_to_string(&target).unwrap(), "second\n");
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1, "only the target remains");
    }
}
