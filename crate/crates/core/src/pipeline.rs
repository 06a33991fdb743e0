//! Road traffic -> backoff fixed point -> queue -> throughput and delay.

use crate::dcf::{self, ChannelProbs, FixedPoint, MacParams};
use crate::error::{Error, Result};
use crate::queue::{self, Performance, QueueModel, QueueParams, SlotTimes};
use crate::traffic::{self, TrafficParams, TrafficState};

/// Population entries below this mass are skipped in mixture mode.
const MIXTURE_CUTOFF: f64 = 1e-15;

/// How the random vehicle population is mapped onto a station count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopulationMode {
    /// `round(N_mean)` stations, at least one.
    Point,
    /// Average every metric over the Erlang-loss population, conditioned on
    /// at least one vehicle being present.
    Mixture,
}

/// Which delay figure is held against a delay bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayMetric {
    /// Expected channel time of one backoff slot.
    Raw,
    /// Raw delay times expected slots per head-of-line packet.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub traffic: TrafficParams,
    /// Vehicle speed (m/s).
    pub speed: f64,
    pub mac: MacParams,
    pub queue: QueueParams,
    /// Overrides the station count derived from traffic.
    pub stations: Option<u32>,
    pub mode: PopulationMode,
    pub tolerance: f64,
}

impl Default for Model {
    fn default() -> Self {
        Model {
            traffic: TrafficParams::from_road_units(120.0, 160.0, 1000.0)
                .expect("default road is valid"),
            speed: 80.0 * traffic::KMH_TO_MS,
            mac: MacParams::default(),
            queue: QueueParams::default(),
            stations: None,
            mode: PopulationMode::Point,
            tolerance: dcf::DEFAULT_TOLERANCE,
        }
    }
}

/// Everything computed for a fixed station count.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEvaluation {
    pub fixed_point: FixedPoint,
    pub channel: ChannelProbs,
    pub slots: SlotTimes,
    pub queue: QueueModel,
    pub perf: Performance,
}

pub fn evaluate_stations(
    n: u32,
    mac: &MacParams,
    q: &QueueParams,
    tol: f64,
) -> Result<PointEvaluation> {
    let fixed_point = dcf::solve_fixed_point(n, mac, tol)?;
    let channel = dcf::channel_probabilities(fixed_point.tau, n)?;
    let slots = queue::slot_times(mac, &channel);
    let queue = queue::queue_model(mac, &fixed_point, &slots, q)?;
    let perf = queue::performance(mac, &fixed_point, &channel, &slots, &queue)?;
    Ok(PointEvaluation {
        fixed_point,
        channel,
        slots,
        queue,
        perf,
    })
}

/// Flat set of scenario metrics; one CSV row worth.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub density: f64,
    pub flow: f64,
    pub n_mean: f64,
    /// Station count used by the MAC model (expected count in mixture mode).
    pub stations: f64,
    pub tau: f64,
    pub p_c: f64,
    pub p_tran: f64,
    pub p_s: f64,
    pub mean_slot: f64,
    pub rho: f64,
    pub p_block: f64,
    pub throughput: f64,
    pub throughput_classic: f64,
    pub t_delay: f64,
    pub t_delay_weighted: f64,
}

impl Metrics {
    fn from_point(n: u32, ev: &PointEvaluation) -> Self {
        Metrics {
            density: 0.0,
            flow: 0.0,
            n_mean: 0.0,
            stations: n as f64,
            tau: ev.fixed_point.tau,
            p_c: ev.fixed_point.p_c,
            p_tran: ev.channel.p_tran,
            p_s: ev.channel.p_s,
            mean_slot: ev.slots.mean_slot,
            rho: ev.queue.rho,
            p_block: ev.queue.p_block,
            throughput: ev.perf.throughput,
            throughput_classic: ev.perf.throughput_classic,
            t_delay: ev.perf.access_delay,
            t_delay_weighted: ev.perf.weighted_delay,
        }
    }

    pub fn delay(&self, which: DelayMetric) -> f64 {
        match which {
            DelayMetric::Raw => self.t_delay,
            DelayMetric::Weighted => self.t_delay_weighted,
        }
    }

    fn accumulate(&mut self, other: &Metrics, w: f64) {
        self.stations += w * other.stations;
        self.tau += w * other.tau;
        self.p_c += w * other.p_c;
        self.p_tran += w * other.p_tran;
        self.p_s += w * other.p_s;
        self.mean_slot += w * other.mean_slot;
        self.rho += w * other.rho;
        self.p_block += w * other.p_block;
        self.throughput += w * other.throughput;
        self.throughput_classic += w * other.throughput_classic;
        self.t_delay += w * other.t_delay;
        self.t_delay_weighted += w * other.t_delay_weighted;
    }
}

impl Model {
    pub fn traffic_state(&self) -> Result<TrafficState> {
        traffic::traffic_state(&self.traffic, self.speed)
    }

    /// Station count in point mode.
    pub fn stations(&self) -> Result<u32> {
        match self.stations {
            Some(0) => Err(Error::domain("station count must be >= 1")),
            Some(n) => Ok(n),
            None => Ok(self.traffic_state()?.contending_stations()),
        }
    }

    pub fn evaluate(&self) -> Result<Metrics> {
        let state = self.traffic_state()?;
        let mut metrics = match (self.mode, self.stations) {
            (PopulationMode::Point, _) | (PopulationMode::Mixture, Some(_)) => {
                let n = self.stations()?;
                let ev = evaluate_stations(n, &self.mac, &self.queue, self.tolerance)?;
                Metrics::from_point(n, &ev)
            }
            (PopulationMode::Mixture, None) => self.evaluate_mixture(&state)?,
        };
        metrics.density = state.density;
        metrics.flow = state.flow;
        metrics.n_mean = state.mean_population;
        Ok(metrics)
    }

    fn evaluate_mixture(&self, state: &TrafficState) -> Result<Metrics> {
        let dist = traffic::truncated_poisson(state.mean_population, state.capacity_vehicles)?;
        let busy: Vec<(u32, f64)> = dist
            .iter()
            .skip(1)
            .filter(|&(_, p)| p > MIXTURE_CUTOFF)
            .map(|(n, p)| (n as u32, p))
            .collect();
        let mass: f64 = busy.iter().map(|(_, p)| p).sum();
        if busy.is_empty() || mass <= 0.0 {
            // road is (almost surely) empty: a lone station
            let ev = evaluate_stations(1, &self.mac, &self.queue, self.tolerance)?;
            return Ok(Metrics::from_point(1, &ev));
        }
        let mut acc = Metrics::default();
        for (n, p) in busy {
            let ev = evaluate_stations(n, &self.mac, &self.queue, self.tolerance)?;
            acc.accumulate(&Metrics::from_point(n, &ev), p / mass);
        }
        Ok(acc)
    }
}
