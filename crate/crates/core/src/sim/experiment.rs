//! Multi-seed experiments and offline attention training.
//!
//! Experiments fan episodes out over seeds, optionally on a thread pool;
//! results come back in input order regardless of the worker count, so a
//! given (points, seeds) pair always produces the same rows.

use rayon::prelude::*;

use crate::attention::{update_params, AttentionParams, FEATURE_DIM};
use crate::policy::{evaluate_policy, EvalScore};
use crate::rng::SeedSplitter;
use crate::sim::runner::{run_episode, run_episode_collecting, EpisodeResult};
use crate::sim::{PolicyKind, SimConfig, SimError};

// ===== Experiments =====

/// One cell of an experiment grid: a labeled configuration run under one
/// policy.
#[derive(Debug, Clone)]
pub struct ExperimentPoint {
    /// Free-form tag grouping rows of one sweep, e.g. "uavs=3".
    pub label: String,
    pub cfg: SimConfig,
    pub policy: PolicyKind,
}

/// Aggregated outcome of one experiment point over all seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub label: String,
    pub policy: PolicyKind,
    /// Packets lost per episode (overflow plus failed links).
    pub packet_loss: EvalScore,
    /// Failed-contact plus unattended-overflow events per episode.
    pub mean_event_loss: f64,
    pub mean_delivered: f64,
}

/// Runs every point over every seed and aggregates per point. `jobs` is
/// the worker count: 1 runs sequentially, larger values use a thread pool.
/// Row order follows `points`; numbers are identical for any `jobs`.
pub fn run_experiment(
    points: &[ExperimentPoint],
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<ExperimentRow>, SimError> {
    if points.is_empty() {
        return Err(SimError::Config("experiment needs at least one point".into()));
    }
    if seeds.is_empty() {
        return Err(SimError::Config("experiment needs at least one seed".into()));
    }
    if jobs == 0 {
        return Err(SimError::Config("jobs must be at least 1".into()));
    }

    let tasks: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let run = |&(p, seed): &(usize, u64)| -> Result<EpisodeResult, SimError> {
        let point = &points[p];
        run_episode(&point.cfg, seed, point.policy)
    };

    let episodes: Vec<EpisodeResult> = if jobs == 1 {
        tasks.iter().map(|t| run(t)).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| SimError::Config(format!("thread pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(run).collect::<Result<_, _>>())?
    };

    let mut rows = Vec::with_capacity(points.len());
    for (p, point) in points.iter().enumerate() {
        let slice = &episodes[p * seeds.len()..(p + 1) * seeds.len()];
        let losses: Vec<f64> = slice.iter().map(|e| e.packet_loss as f64).collect();
        let n = slice.len() as f64;
        rows.push(ExperimentRow {
            label: point.label.clone(),
            policy: point.policy,
            packet_loss: evaluate_policy(&losses, "packet_loss")?,
            mean_event_loss: slice.iter().map(|e| e.event_loss as f64).sum::<f64>() / n,
            mean_delivered: slice.iter().map(|e| e.ledger.delivered as f64).sum::<f64>() / n,
        });
    }
    Ok(rows)
}

// ===== Attention training =====

/// One training episode's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRow {
    pub episode: u32,
    pub seed: u64,
    /// Surrogate loss before this episode's update.
    pub surrogate_loss: f64,
    pub used_steps: usize,
    pub skipped_steps: usize,
    pub packet_loss: u64,
    /// True when the gradient was non-finite and the update was skipped.
    pub degenerate: bool,
}

/// Refines attention parameters offline: each episode runs the greedy
/// policy while collecting per-UAV feedback, then applies one averaged
/// gradient step toward ranking the worst-loss sensor first. Parameters
/// start from the "init" stream of `base_seed`; episode e runs under the
/// derived "episode-e" seed, so the whole trajectory reproduces exactly.
pub fn train_attention(
    cfg: &SimConfig,
    base_seed: u64,
    episodes: u32,
) -> Result<(AttentionParams, Vec<TrainingRow>), SimError> {
    if episodes == 0 {
        return Err(SimError::Config("training needs at least one episode".into()));
    }
    cfg.validate()?;

    let splitter = SeedSplitter::new(base_seed);
    let mut params = AttentionParams::init(FEATURE_DIM, cfg.d_prime, &mut splitter.stream("init"));
    let mut rows = Vec::with_capacity(episodes as usize);

    for episode in 0..episodes {
        let seed = splitter.stream_seed(&format!("episode-{episode}"));
        let (result, feedback) =
            run_episode_collecting(cfg, seed, PolicyKind::Greedy, Some(&params), true)?;
        let (next, report) = update_params(&params, &feedback, cfg.learning_rate)?;
        params = next;
        rows.push(TrainingRow {
            episode,
            seed,
            surrogate_loss: report.surrogate_loss,
            used_steps: report.used_steps,
            skipped_steps: report.skipped_steps,
            packet_loss: result.packet_loss,
            degenerate: report.degenerate_gradient,
        });
    }
    Ok((params, rows))
}

// ===== Tests =====

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.sensors = 5;
        cfg.uavs = 2;
        cfg.steps = 10;
        cfg.top_k = 3;
        cfg
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = quick_cfg();
        let points = vec![
            ExperimentPoint { label: "base".into(), cfg: cfg.clone(), policy: PolicyKind::Greedy },
            ExperimentPoint { label: "base".into(), cfg, policy: PolicyKind::Random },
        ];
        let seeds = [1, 2, 3, 4];
        let sequential = run_experiment(&points, &seeds, 1).unwrap();
        let parallel = run_experiment(&points, &seeds, 3).unwrap();
        assert_eq!(sequential, parallel, "jobs must only affect wall time");
        assert_eq!(sequential.len(), 2);
        assert_eq!(sequential[0].packet_loss.n, seeds.len());
    }

    #[test]
    fn degenerate_experiments_are_rejected() {
        let cfg = quick_cfg();
        let point =
            ExperimentPoint { label: "x".into(), cfg, policy: PolicyKind::Greedy };
        assert!(run_experiment(&[], &[1], 1).is_err(), "no points");
        assert!(run_experiment(std::slice::from_ref(&point), &[], 1).is_err(), "no seeds");
        assert!(run_experiment(&[point], &[1], 0).is_err(), "zero jobs");
    }

    #[test]
    fn training_reproduces_and_reports_every_episode() {
        let cfg = quick_cfg();
        let (params_a, rows_a) = train_attention(&cfg, 7, 4).unwrap();
        let (params_b, rows_b) = train_attention(&cfg, 7, 4).unwrap();
        assert_eq!(rows_a, rows_b, "training is deterministic");
        assert_eq!(params_a.w_q, params_b.w_q);
        assert_eq!(params_a.w_s, params_b.w_s);
        assert_eq!(rows_a.len(), 4);
        for (i, row) in rows_a.iter().enumerate() {
            assert_eq!(row.episode, i as u32);
            assert!(row.surrogate_loss.is_finite());
            assert!(!row.degenerate, "healthy runs keep finite gradients");
            assert!(row.used_steps + row.skipped_steps > 0);
        }
        let seeds: std::collections::BTreeSet<u64> = rows_a.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), rows_a.len(), "every episode runs under its own seed");
    }

    #[test]
    fn training_moves_the_parameters() {
        let cfg = quick_cfg();
        let splitter = SeedSplitter::new(7);
        let initial = AttentionParams::init(FEATURE_DIM, cfg.d_prime, &mut splitter.stream("init"));
        let (trained, rows) = train_attention(&cfg, 7, 3).unwrap();
        assert!(rows.iter().any(|r| r.used_steps > 0), "feedback reaches the update");
        assert_ne!(initial.w_s, trained.w_s, "gradient steps move the scorer");
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let mut cfg = quick_cfg();
        cfg.learning_rate = 0.0;
        let splitter = SeedSplitter::new(11);
        let initial = AttentionParams::init(FEATURE_DIM, cfg.d_prime, &mut splitter.stream("init"));
        let (trained, _) = train_attention(&cfg, 11, 2).unwrap();
        assert_eq!(initial.w_q, trained.w_q);
        assert_eq!(initial.w_k, trained.w_k);
        assert_eq!(initial.w_v, trained.w_v);
        assert_eq!(initial.w_s, trained.w_s);
        assert_eq!(initial.b_s, trained.b_s);
    }
}
