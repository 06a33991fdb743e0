//! Macroscopic road traffic under one access point.
//!
//! Speed and density follow the Greenshields linear relation, and the number
//! of vehicles inside the coverage range is an Erlang-loss (M/D/C/C)
//! population: Poisson offered load truncated at the road capacity.
//!
//! Everything here is in SI units. Use [`TrafficParams::from_road_units`]
//! to convert from veh/km and km/h once at the boundary.

use crate::error::{Error, Result};

pub const KMH_TO_MS: f64 = 1000.0 / 3600.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficParams {
    /// Jam density in vehicles per meter.
    pub k_jam: f64,
    /// Free-flow speed in meters per second.
    pub v_free: f64,
    /// Coverage length of the access point in meters.
    pub coverage_len: f64,
}

impl TrafficParams {
    pub fn new(k_jam: f64, v_free: f64, coverage_len: f64) -> Result<Self> {
        let p = TrafficParams {
            k_jam,
            v_free,
            coverage_len,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters from veh/km, km/h and meters.
    pub fn from_road_units(k_jam_veh_km: f64, v_free_kmh: f64, coverage_m: f64) -> Result<Self> {
        Self::new(k_jam_veh_km / 1000.0, v_free_kmh * KMH_TO_MS, coverage_m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.k_jam) {
            return Err(Error::domain(format!("jam density must be > 0, got {}", self.k_jam)));
        }
        if !ok(self.v_free) {
            return Err(Error::domain(format!("free-flow speed must be > 0, got {}", self.v_free)));
        }
        if !ok(self.coverage_len) {
            return Err(Error::domain(format!(
                "coverage length must be > 0, got {}",
                self.coverage_len
            )));
        }
        Ok(())
    }

    /// Exact road capacity `k_jam * L` (vehicles, real valued).
    pub fn capacity(&self) -> f64 {
        self.k_jam * self.coverage_len
    }

    /// Integer road capacity, `ceil(k_jam * L)`.
    ///
    /// A tiny slack absorbs representation error in products such as
    /// `0.12 * 1000.0`.
    pub fn capacity_vehicles(&self) -> usize {
        (self.capacity() - 1e-9).ceil().max(0.0) as usize
    }

    fn check_speed(&self, v: f64) -> Result<()> {
        if !(v.is_finite() && v > 0.0 && v <= self.v_free) {
            return Err(Error::domain(format!(
                "speed must lie in (0, {}] m/s, got {}",
                self.v_free, v
            )));
        }
        Ok(())
    }
}

/// Which root to take when a flow rate is given instead of a speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowRegime {
    /// Speed at or above `v_free / 2`.
    Uncongested,
    /// Speed at or below `v_free / 2`.
    Congested,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficState {
    /// Mean speed (m/s).
    pub speed: f64,
    /// Density (vehicles/m).
    pub density: f64,
    /// Vehicle flow rate into the segment (vehicles/s).
    pub flow: f64,
    /// Mean time a vehicle spends under coverage (s).
    pub sojourn: f64,
    /// Mean vehicle population, `flow * sojourn`.
    pub mean_population: f64,
    /// Exact road capacity `k_jam * L`.
    pub capacity: f64,
    /// `ceil(capacity)`.
    pub capacity_vehicles: usize,
}

impl TrafficState {
    /// Station count handed to the MAC model in point mode.
    ///
    /// Rounds the mean population, never going below one station.
    pub fn contending_stations(&self) -> u32 {
        self.mean_population.round().max(1.0) as u32
    }
}

pub fn traffic_state(params: &TrafficParams, v: f64) -> Result<TrafficState> {
    params.validate()?;
    params.check_speed(v)?;
    let density = params.k_jam * (1.0 - v / params.v_free);
    let flow = density * v;
    let sojourn = params.coverage_len / v;
    Ok(TrafficState {
        speed: v,
        density,
        flow,
        sojourn,
        mean_population: flow * sojourn,
        capacity: params.capacity(),
        capacity_vehicles: params.capacity_vehicles(),
    })
}

/// Inverts the flow-speed parabola.
pub fn speed_for_flow(params: &TrafficParams, flow: f64, regime: FlowRegime) -> Result<f64> {
    params.validate()?;
    let max_flow = params.k_jam * params.v_free / 4.0;
    if !(flow.is_finite() && flow > 0.0 && flow <= max_flow * (1.0 + 1e-12)) {
        return Err(Error::domain(format!(
            "flow must lie in (0, {max_flow}] veh/s, got {flow}"
        )));
    }
    let disc = (1.0 - flow / max_flow).max(0.0).sqrt();
    let half = params.v_free / 2.0;
    Ok(match regime {
        FlowRegime::Uncongested => half * (1.0 + disc),
        FlowRegime::Congested => half * (1.0 - disc),
    })
}

/// Steady-state probabilities of `N = 0..=C` vehicles under coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationDistribution {
    pub probs: Vec<f64>,
}

impl PopulationDistribution {
    pub fn capacity(&self) -> usize {
        self.probs.len().saturating_sub(1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().copied().enumerate()
    }
}

/// Poisson(`load`) conditioned on `0..=capacity`, i.e. the Erlang-loss
/// occupancy distribution. Computed in log space.
pub fn truncated_poisson(load: f64, capacity: usize) -> Result<PopulationDistribution> {
    if !(load.is_finite() && load >= 0.0) {
        return Err(Error::domain(format!("offered load must be >= 0, got {load}")));
    }
    let mut probs = vec![0.0; capacity + 1];
    if load == 0.0 {
        probs[0] = 1.0;
        return Ok(PopulationDistribution { probs });
    }
    let ln_a = load.ln();
    let mut ln_fact = 0.0;
    let mut logs = Vec::with_capacity(capacity + 1);
    for n in 0..=capacity {
        if n > 0 {
            ln_fact += (n as f64).ln();
        }
        logs.push(n as f64 * ln_a - ln_fact);
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    for (p, l) in probs.iter_mut().zip(&logs) {
        *p = (l - max).exp() / total;
    }
    Ok(PopulationDistribution { probs })
}

pub fn population_distribution(params: &TrafficParams, v: f64) -> Result<PopulationDistribution> {
    let state = traffic_state(params, v)?;
    if state.capacity_vehicles < 1 {
        return Err(Error::domain("road capacity must hold at least one vehicle"));
    }
    truncated_poisson(state.mean_population, state.capacity_vehicles)
}

pub fn expected_network_size(dist: &PopulationDistribution) -> f64 {
    dist.iter().map(|(n, p)| n as f64 * p).sum()
}
