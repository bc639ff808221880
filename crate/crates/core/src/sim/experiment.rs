//! Monte Carlo experiments over seeds and pipeline variants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use super::trial::{run_trial, Pipeline, TrialResult, TrialRun};
use super::SimError;
use crate::semantics::KnowledgeBase;

pub const CSV_HEADER: &str =
    "variant,trials,success_rate,close_call_rate,mean_touchdown_error_m,mean_replans";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub trials: usize,
    pub success_rate: f64,
    pub close_call_rate: f64,
    pub mean_touchdown_error_m: f64,
    pub mean_replans: f64,
}

impl MetricsRow {
    pub fn from_results(variant: &str, results: &[TrialResult]) -> Self {
        let n = results.len().max(1) as f64;
        let frac = |f: fn(&TrialResult) -> bool| results.iter().filter(|r| f(r)).count() as f64 / n;
        Self {
            variant: variant.to_string(),
            trials: results.len(),
            success_rate: frac(|r| r.success),
            close_call_rate: frac(|r| r.close_call),
            mean_touchdown_error_m: results.iter().map(|r| r.touchdown_error).sum::<f64>() / n,
            mean_replans: results.iter().map(|r| r.replan_count as f64).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub base_seed: u64,
    pub rows: Vec<MetricsRow>,
    /// Per-variant trial results, sorted by seed.
    pub trials: Vec<Vec<TrialResult>>,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{:.4}\n",
            r.variant,
            r.trials,
            r.success_rate,
            r.close_call_rate,
            r.mean_touchdown_error_m,
            r.mean_replans
        ));
    }
    out
}

/// Run every seed of one variant; `jobs > 1` spreads trials over a thread
/// pool. Runs come back sorted by seed.
pub fn run_seeds(
    scenario: &Scenario,
    pipeline: &Pipeline,
    kb: &KnowledgeBase,
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<TrialRun>, SimError> {
    let one = |seed: &u64| {
        let mut sc = scenario.clone();
        sc.seed = *seed;
        run_trial(&sc, pipeline, kb)
    };
    let mut runs: Vec<TrialRun> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| SimError::Io(e.to_string()))?;
        pool.install(|| seeds.par_iter().map(one).collect::<Result<_, _>>())?
    } else {
        seeds.iter().map(one).collect::<Result<_, _>>()?
    };
    runs.sort_by_key(|r| r.result.seed);
    Ok(runs)
}

/// Trials with seeds `base_seed..base_seed + n_trials` for each pipeline.
/// `on_run` sees every run (e.g. to persist its trace) before it is dropped.
pub fn run_experiment(
    scenario: &Scenario,
    n_trials: usize,
    base_seed: u64,
    pipelines: &[Pipeline],
    kb: &KnowledgeBase,
    jobs: usize,
    mut on_run: impl FnMut(&Pipeline, &mut TrialRun) -> Result<(), SimError>,
) -> Result<ExperimentReport, SimError> {
    if n_trials == 0 {
        return Err(SimError::InvalidScenario(
            "n_trials must be at least 1".into(),
        ));
    }
    let seeds: Vec<u64> = (0..n_trials as u64)
        .map(|i| base_seed.wrapping_add(i))
        .collect();
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for p in pipelines {
        let mut runs = run_seeds(scenario, p, kb, &seeds, jobs)?;
        for r in &mut runs {
            on_run(p, r)?;
        }
        let results: Vec<TrialResult> = runs.into_iter().map(|r| r.result).collect();
        rows.push(MetricsRow::from_results(p.variant.label(), &results));
        trials.push(results);
    }
    Ok(ExperimentReport {
        scenario: scenario.name.clone(),
        base_seed,
        rows,
        trials,
    })
}
