//! Retry-limit selection by exhaustive search over `m`.
//!
//! Every `m` in the requested range is run through the full model; the
//! chosen limit maximises throughput among the rows whose delay meets the
//! bound. When no row is feasible, the lowest-delay row is returned instead
//! and the result is marked infeasible.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pipeline::{DelayMetric, Metrics, Model};

pub const MAX_RETRY_LIMIT: u32 = 20;
pub const DEFAULT_DELAY_BOUND: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationRequest {
    /// Scenario; its `mac.max_stage` is overridden per row.
    pub model: Model,
    pub m_lo: u32,
    pub m_hi: u32,
    /// Seconds.
    pub delay_bound: f64,
    pub delay_metric: DelayMetric,
}

impl OptimizationRequest {
    pub fn new(model: Model, m_lo: u32, m_hi: u32) -> Self {
        OptimizationRequest {
            model,
            m_lo,
            m_hi,
            delay_bound: DEFAULT_DELAY_BOUND,
            delay_metric: DelayMetric::Weighted,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_lo > self.m_hi || self.m_hi > MAX_RETRY_LIMIT {
            return Err(Error::domain(format!(
                "retry range must satisfy 0 <= lo <= hi <= {MAX_RETRY_LIMIT}, got [{}, {}]",
                self.m_lo, self.m_hi
            )));
        }
        if !(self.delay_bound.is_finite() && self.delay_bound > 0.0) {
            return Err(Error::domain(format!(
                "delay bound must be > 0, got {}",
                self.delay_bound
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryRow {
    pub m: u32,
    pub metrics: Metrics,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub m_star: u32,
    /// One row per `m`, ascending.
    pub per_m: Vec<RetryRow>,
    /// Whether any row met the delay bound.
    pub feasible: bool,
}

impl OptimizationResult {
    pub fn best(&self) -> &RetryRow {
        self.per_m
            .iter()
            .find(|r| r.m == self.m_star)
            .expect("m_star is always one of the rows")
    }
}

pub fn optimize_retry(req: &OptimizationRequest) -> Result<OptimizationResult> {
    req.validate()?;
    let per_m = (req.m_lo..=req.m_hi)
        .into_par_iter()
        .map(|m| {
            let mut model = req.model;
            model.mac.max_stage = m;
            let metrics = model.evaluate().map_err(|e| Error::RetryLimit {
                m,
                source: Box::new(e),
            })?;
            Ok(RetryRow {
                m,
                metrics,
                feasible: metrics.delay(req.delay_metric) <= req.delay_bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // rows are in ascending m, so strict comparisons keep the smallest m on ties
    let mut best: Option<&RetryRow> = None;
    for row in per_m.iter().filter(|r| r.feasible) {
        if best.is_none_or(|b| row.metrics.throughput > b.metrics.throughput) {
            best = Some(row);
        }
    }
    let (m_star, feasible) = match best {
        Some(row) => (row.m, true),
        None => {
            let mut fallback = &per_m[0];
            for row in &per_m[1..] {
                if row.metrics.delay(req.delay_metric) < fallback.metrics.delay(req.delay_metric) {
                    fallback = row;
                }
            }
            (fallback.m, false)
        }
    };
    Ok(OptimizationResult {
        m_star,
        per_m,
        feasible,
    })
}
