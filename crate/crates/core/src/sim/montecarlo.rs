//! Replicated simulation with thread-count independent aggregation.
//!
//! Replica `k` runs with seed `replica_seed(seed_base, k)`. Results are
//! collected in replica order and summed pairwise, so the report depends only
//! on `(seed_base, replicas)` and not on how rayon schedules the work.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::replica_seed;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub replicas: usize,
    pub seed_base: u64,
    /// Abort when more than this fraction of replicas fail.
    pub max_failure_rate: f64,
}

impl McConfig {
    pub fn new(replicas: usize, seed_base: u64) -> Self {
        McConfig {
            replicas,
            seed_base,
            max_failure_rate: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub estimate: f64,
    pub std_error: f64,
    /// Replicas contributing a value.
    pub n: usize,
    pub n_excluded: usize,
    pub n_failed: usize,
    pub seed_base: u64,
    pub flags: Vec<String>,
}

impl McReport {
    /// Mean and `sample sd / √n` of `values`.
    pub fn from_values(values: &[f64], seed_base: u64) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::Invalid(format!("need at least 2 values, got {n}")));
        }
        let mean = pairwise_sum(values) / n as f64;
        let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Ok(McReport {
            estimate: mean,
            std_error: (var / n as f64).sqrt(),
            n,
            n_excluded: 0,
            n_failed: 0,
            seed_base,
            flags: Vec::new(),
        })
    }

    /// Scale estimate and error by a constant.
    pub fn scaled(mut self, c: f64) -> Self {
        self.estimate *= c;
        self.std_error *= c.abs();
        self
    }

    /// Number of standard errors separating the estimate from `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.std_error > 0.0 {
            (self.estimate - target) / self.std_error
        } else if self.estimate == target {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Pairwise (cascade) summation with a fixed split, reproducible bit for bit.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Outcomes of a replicated run, in replica order.
#[derive(Clone, Debug)]
pub struct McRun<T> {
    pub values: Vec<T>,
    pub n_excluded: usize,
    pub n_failed: usize,
    pub seed_base: u64,
}

/// Run `f(k, seed)` for every replica. `Ok(None)` excludes a replica,
/// `Err` counts as a failure.
pub fn run_replicas<T, F>(cfg: &McConfig, f: F) -> Result<McRun<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<Option<T>> + Sync,
{
    if cfg.replicas < 2 {
        return Err(Error::Invalid(format!("need at least 2 replicas, got {}", cfg.replicas)));
    }
    let outcomes: Vec<Result<Option<T>>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|k| f(k, replica_seed(cfg.seed_base, k as u64)))
        .collect();
    let mut values = Vec::with_capacity(outcomes.len());
    let (mut excluded, mut failed) = (0usize, 0usize);
    let mut first_failure = None;
    for (k, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(Some(v)) => values.push(v),
            Ok(None) => excluded += 1,
            Err(e) => {
                failed += 1;
                first_failure.get_or_insert_with(|| format!("replica {k}: {e}"));
            }
        }
    }
    if failed as f64 > cfg.max_failure_rate * cfg.replicas as f64 {
        return Err(Error::ReplicaFailures {
            failed,
            total: cfg.replicas,
            threshold: cfg.max_failure_rate,
            first: first_failure.unwrap_or_default(),
        });
    }
    Ok(McRun {
        values,
        n_excluded: excluded,
        n_failed: failed,
        seed_base: cfg.seed_base,
    })
}

/// Scalar Monte Carlo estimate.
pub fn monte_carlo<F>(cfg: &McConfig, f: F) -> Result<McReport>
where
    F: Fn(usize, u64) -> Result<Option<f64>> + Sync,
{
    let run = run_replicas(cfg, f)?;
    let mut report = McReport::from_values(&run.values, cfg.seed_base)?;
    report.n_excluded = run.n_excluded;
    report.n_failed = run.n_failed;
    if run.n_excluded > 0 {
        report.flags.push(format!("excluded={}/{}", run.n_excluded, cfg.replicas));
    }
    if run.n_failed > 0 {
        report.flags.push(format!("failed={}/{}", run.n_failed, cfg.replicas));
    }
    Ok(report)
}

/// Component-wise reports for vector-valued replicas of fixed dimension.
pub fn column_reports(values: &[Vec<f64>], seed_base: u64) -> Result<Vec<McReport>> {
    let dim = values.first().map_or(0, Vec::len);
    if values.iter().any(|v| v.len() != dim) {
        return Err(Error::Invalid("replicas returned vectors of different lengths".into()));
    }
    (0..dim)
        .map(|j| {
            let col: Vec<f64> = values.iter().map(|v| v[j]).collect();
            McReport::from_values(&col, seed_base)
        })
        .collect()
}
