//! Slotted simulation of `n` saturated DCF stations.
//!
//! Time advances in virtual slots: a slot is idle (`slot`), a success
//! (`t_suc`) or a collision (`t_col`). Every station that is not
//! transmitting decrements its counter once per virtual slot, so freezing
//! during busy periods is implicit. A collision moves each colliding station
//! one stage up; past the retry limit the packet is dropped and the station
//! restarts at stage 0 with a fresh packet.
//!
//! Random streams: each station owns a `ChaCha8Rng` seeded from
//! `seed_from_u64(seed)` with stream id `(replication << 32) | station`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dcf::{FixedPoint, MacParams};
use crate::error::{Error, Result};
use crate::queue::{self, Performance};

pub const MIN_HORIZON: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n: u32,
    pub mac: MacParams,
    pub horizon_slots: u64,
    pub seed: u64,
    pub replications: u32,
}

impl SimConfig {
    pub fn new(n: u32, mac: MacParams) -> Self {
        SimConfig {
            n,
            mac,
            horizon_slots: 1_000_000,
            seed: 1,
            replications: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mac.validate()?;
        if self.n < 1 {
            return Err(Error::domain("simulation needs at least one station"));
        }
        if self.horizon_slots < MIN_HORIZON {
            return Err(Error::domain(format!(
                "horizon must be >= {MIN_HORIZON} slots, got {}",
                self.horizon_slots
            )));
        }
        if self.replications < 1 {
            return Err(Error::domain("at least one replication is required"));
        }
        Ok(())
    }
}

/// Raw counts from one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationStats {
    pub slots: u64,
    pub idle_slots: u64,
    pub success_slots: u64,
    pub collision_slots: u64,
    pub attempts: u64,
    pub collided_attempts: u64,
    pub discards: u64,
    pub elapsed: f64,
    /// Sum of head-of-line delays of delivered packets (s).
    pub delay_sum: f64,
    /// Smallest and largest counter drawn at each stage.
    pub counter_range: Vec<Option<(u64, u64)>>,
}

impl ReplicationStats {
    pub fn tau(&self, n: u32) -> f64 {
        self.attempts as f64 / (n as f64 * self.slots as f64)
    }

    pub fn p_c(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.collided_attempts as f64 / self.attempts as f64
        }
    }

    pub fn throughput(&self, payload_bits: f64) -> f64 {
        self.success_slots as f64 * payload_bits / self.elapsed
    }

    pub fn mean_delay(&self) -> f64 {
        if self.success_slots == 0 {
            f64::NAN
        } else {
            self.delay_sum / self.success_slots as f64
        }
    }
}

struct Station {
    stage: u32,
    counter: u64,
    hol_start: f64,
    rng: ChaCha8Rng,
}

fn stream_id(replication: u32, station: u32) -> u64 {
    ((replication as u64) << 32) | station as u64
}

pub fn run_replication(cfg: &SimConfig, replication: u32) -> Result<ReplicationStats> {
    cfg.validate()?;
    let mac = &cfg.mac;
    let t_suc = queue::success_time(mac);
    let t_col = queue::collision_time(mac);
    let mut counter_range = vec![None; mac.max_stage as usize + 1];
    let draw = |s: &mut Station, range: &mut Vec<Option<(u64, u64)>>| {
        let c = s.rng.gen_range(0..mac.window(s.stage));
        let slot = &mut range[s.stage as usize];
        *slot = Some(match *slot {
            None => (c, c),
            Some((lo, hi)) => (lo.min(c), hi.max(c)),
        });
        s.counter = c;
    };

    let mut stations: Vec<Station> = (0..cfg.n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream_id(replication, i));
            Station {
                stage: 0,
                counter: 0,
                hol_start: 0.0,
                rng,
            }
        })
        .collect();
    for s in stations.iter_mut() {
        draw(s, &mut counter_range);
    }

    let mut st = ReplicationStats {
        slots: 0,
        idle_slots: 0,
        success_slots: 0,
        collision_slots: 0,
        attempts: 0,
        collided_attempts: 0,
        discards: 0,
        elapsed: 0.0,
        delay_sum: 0.0,
        counter_range: Vec::new(),
    };
    let mut transmitters: Vec<usize> = Vec::with_capacity(cfg.n as usize);

    while st.slots < cfg.horizon_slots {
        let min = stations.iter().map(|s| s.counter).min().unwrap_or(0);
        if min > 0 {
            // run of idle slots
            let idle = min.min(cfg.horizon_slots - st.slots);
            st.slots += idle;
            st.idle_slots += idle;
            st.elapsed += idle as f64 * mac.slot;
            for s in stations.iter_mut() {
                s.counter -= idle;
            }
            continue;
        }

        transmitters.clear();
        transmitters.extend(
            stations
                .iter()
                .enumerate()
                .filter(|(_, s)| s.counter == 0)
                .map(|(i, _)| i),
        );
        st.slots += 1;
        st.attempts += transmitters.len() as u64;
        for s in stations.iter_mut().filter(|s| s.counter > 0) {
            s.counter -= 1;
        }

        if transmitters.len() == 1 {
            st.success_slots += 1;
            st.elapsed += t_suc;
            let s = &mut stations[transmitters[0]];
            st.delay_sum += st.elapsed - s.hol_start;
            s.hol_start = st.elapsed;
            s.stage = 0;
            draw(s, &mut counter_range);
        } else {
            st.collision_slots += 1;
            st.collided_attempts += transmitters.len() as u64;
            st.elapsed += t_col;
            for &i in &transmitters {
                let s = &mut stations[i];
                if s.stage == mac.max_stage {
                    st.discards += 1;
                    s.stage = 0;
                    s.hol_start = st.elapsed;
                } else {
                    s.stage += 1;
                }
                draw(s, &mut counter_range);
            }
        }
    }
    st.counter_range = counter_range;
    Ok(st)
}

/// Mean with the half-width of its two-sided 95% Student-t interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// Infinite for a single replication.
    pub ci95: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let r = xs.len();
        let mean = xs.iter().sum::<f64>() / r as f64;
        if r < 2 {
            return Estimate {
                mean,
                ci95: f64::INFINITY,
            };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (r - 1) as f64)
            .expect("degrees of freedom are positive")
            .inverse_cdf(0.975);
        Estimate {
            mean,
            ci95: t * (var / r as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub config: SimConfig,
    pub tau_hat: Estimate,
    pub pc_hat: Estimate,
    /// bits/s
    pub throughput_hat: Estimate,
    /// Mean head-of-line delay of delivered packets (s).
    pub delay_hat: Estimate,
    /// Dropped packets per attempt.
    pub discard_rate: Estimate,
    pub replications: Vec<ReplicationStats>,
}

pub fn run_simulation(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let reps = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let est = |f: &dyn Fn(&ReplicationStats) -> f64| {
        Estimate::from_samples(&reps.iter().map(f).collect::<Vec<_>>())
    };
    Ok(SimReport {
        config: *cfg,
        tau_hat: est(&|s| s.tau(cfg.n)),
        pc_hat: est(&|s| s.p_c()),
        throughput_hat: est(&|s| s.throughput(cfg.mac.payload_bits)),
        delay_hat: est(&|s| s.mean_delay()),
        discard_rate: est(&|s| {
            if s.attempts == 0 {
                0.0
            } else {
                s.discards as f64 / s.attempts as f64
            }
        }),
        replications: reps,
    })
}

/// Relative tolerances used by [`compare`]. `None` reports without gating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub tau: Option<f64>,
    pub p_c: Option<f64>,
    pub throughput: Option<f64>,
    pub delay: Option<f64>,
}

impl Tolerances {
    /// Gates τ, p_c and throughput at `rel`; delay is reported ungated.
    ///
    /// The analytic delay prices each backoff slot at the all-station mean
    /// slot length, while a waiting station only sees the other `n - 1`
    /// stations, so the model sits several percent above the simulator at
    /// small `n`.
    pub fn uniform(rel: f64) -> Self {
        Tolerances {
            tau: Some(rel),
            p_c: Some(rel),
            throughput: Some(rel),
            delay: None,
        }
    }

    pub fn with_delay(self, rel: f64) -> Self {
        Tolerances {
            delay: Some(rel),
            ..self
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::uniform(0.05)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub metric: &'static str,
    pub analytic: f64,
    pub simulated: f64,
    pub ci95: f64,
    /// Relative error; absolute when the analytic value is zero.
    pub rel_error: f64,
    pub tolerance: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

fn relative_error(analytic: f64, simulated: f64) -> f64 {
    let diff = (simulated - analytic).abs();
    if analytic == 0.0 {
        diff
    } else {
        diff / analytic.abs()
    }
}

/// Lines up a simulation with the model solved for the same configuration.
///
/// Throughput is checked against the saturation throughput and delay
/// against the slot-weighted access delay, the quantities the simulator
/// actually measures.
pub fn compare(
    report: &SimReport,
    fp: &FixedPoint,
    perf: &Performance,
    tol: &Tolerances,
) -> Result<ComparisonTable> {
    let c = &report.config;
    if c.n != fp.n || c.mac.cw_min != fp.cw_min || c.mac.max_stage != fp.max_stage {
        return Err(Error::ConfigMismatch(format!(
            "simulated (n={}, cw_min={}, m={}) vs model (n={}, cw_min={}, m={})",
            c.n, c.mac.cw_min, c.mac.max_stage, fp.n, fp.cw_min, fp.max_stage
        )));
    }
    let row = |metric, analytic: f64, est: &Estimate, tolerance: Option<f64>| {
        let rel_error = relative_error(analytic, est.mean);
        ComparisonRow {
            metric,
            analytic,
            simulated: est.mean,
            ci95: est.ci95,
            rel_error,
            tolerance,
            pass: tolerance.is_none_or(|t| rel_error <= t),
        }
    };
    Ok(ComparisonTable {
        rows: vec![
            row("tau", fp.tau, &report.tau_hat, tol.tau),
            row("p_c", fp.p_c, &report.pc_hat, tol.p_c),
            row("throughput", perf.throughput_classic, &report.throughput_hat, tol.throughput),
            row("delay", perf.weighted_delay, &report.delay_hat, tol.delay),
        ],
    })
}
