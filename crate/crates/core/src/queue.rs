//! Per-station M/G/1/K packet queue on top of the backoff chain.
//!
//! Slot accounting, Poisson arrival thinning over one mean slot, the
//! truncated-geometric queue distribution, blocking, throughput and
//! access delay.

use crate::dcf::{ChannelProbs, FixedPoint, MacParams};
use crate::error::{Error, Result};

/// Below this distance from 1 the utilisation is treated as exactly 1.
const RHO_ONE_BAND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueParams {
    /// Buffer capacity K in packets.
    pub capacity: u32,
    /// Poisson packet arrival rate per station (packets/s).
    pub arrival_rate: f64,
}

impl Default for QueueParams {
    fn default() -> Self {
        QueueParams {
            capacity: 50,
            arrival_rate: 1.5,
        }
    }
}

impl QueueParams {
    pub fn validate(&self) -> Result<()> {
        if self.capacity < 1 {
            return Err(Error::domain("queue capacity must be >= 1"));
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate >= 0.0) {
            return Err(Error::domain(format!(
                "arrival rate must be >= 0, got {}",
                self.arrival_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotTimes {
    /// Busy time of a successful exchange, DATA + SIFS + ACK + DIFS + slot.
    pub t_suc: f64,
    /// Busy time of a collision, header + DIFS + propagation.
    pub t_col: f64,
    /// Expected duration of one virtual slot.
    pub mean_slot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueModel {
    pub rho: f64,
    pub pi: Vec<f64>,
    pub p_block: f64,
    pub service_time: f64,
    /// Probability of 1..=K Poisson arrivals in one mean slot.
    pub arrival_prob: f64,
    pub lambda_eff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    /// bits/s, clamped into `[0, channel_rate]`.
    pub value: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Performance {
    /// Queue-aware throughput (bits/s).
    pub throughput: f64,
    pub throughput_clamped: bool,
    /// Saturation throughput `P_s P_tran E[L] / E[T_slot]` (bits/s), for
    /// comparison with simulation.
    pub throughput_classic: f64,
    /// Expected channel time of one backoff slot seen by a station (s).
    pub access_delay: f64,
    /// `access_delay` times the expected number of slots a head-of-line
    /// packet occupies (s).
    pub weighted_delay: f64,
    /// Bits delivered per slot per station, `E[L] tau (1 - p_c)`.
    pub payload_eff: f64,
}

pub fn effective_payload(mac: &MacParams, fp: &FixedPoint) -> f64 {
    mac.payload_bits * fp.tau * (1.0 - fp.p_c)
}

pub fn success_time(mac: &MacParams) -> f64 {
    mac.payload_time() + mac.sifs + mac.ack + mac.difs + mac.slot
}

pub fn collision_time(mac: &MacParams) -> f64 {
    mac.t_header() + mac.difs + mac.prop_delay
}

pub fn slot_times(mac: &MacParams, cp: &ChannelProbs) -> SlotTimes {
    let t_suc = success_time(mac);
    let t_col = collision_time(mac);
    let mean_slot = (1.0 - cp.p_tran) * mac.slot
        + cp.p_tran * cp.p_s * t_suc
        + cp.p_tran * (1.0 - cp.p_s) * t_col;
    SlotTimes {
        t_suc,
        t_col,
        mean_slot,
    }
}

pub fn service_time(payload_bits: f64, channel_rate: f64) -> Result<f64> {
    if !(channel_rate.is_finite() && channel_rate > 0.0) {
        return Err(Error::domain(format!("channel rate must be > 0, got {channel_rate}")));
    }
    Ok(payload_bits / channel_rate)
}

/// Returns `(P_lambda, lambda_eff)` where `P_lambda` is the probability of
/// between 1 and K Poisson arrivals during one mean slot and
/// `lambda_eff = P_lambda * lambda`.
pub fn arrival_thinning(q: &QueueParams, mean_slot: f64) -> Result<(f64, f64)> {
    q.validate()?;
    if !(mean_slot.is_finite() && mean_slot > 0.0) {
        return Err(Error::domain(format!("mean slot must be > 0, got {mean_slot}")));
    }
    let x = q.arrival_rate * mean_slot;
    let mut term = (-x).exp();
    let mut prob = 0.0;
    for k in 1..=q.capacity {
        term *= x / k as f64;
        prob += term;
    }
    let prob = prob.min(1.0);
    Ok((prob, prob * q.arrival_rate))
}

/// Stationary occupancy of an M/G/1/K queue with utilisation `rho`,
/// `pi(k) proportional to rho^k`, and the blocking probability `pi(K)`.
pub fn queue_stationary(rho: f64, capacity: u32) -> Result<(Vec<f64>, f64)> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::domain(format!("utilisation must be >= 0, got {rho}")));
    }
    if capacity < 1 {
        return Err(Error::domain("queue capacity must be >= 1"));
    }
    let k = capacity as usize;
    let pi = if (rho - 1.0).abs() < RHO_ONE_BAND {
        vec![1.0 / (k + 1) as f64; k + 1]
    } else if rho < 1.0 {
        // (1 - rho) rho^k / (1 - rho^{K+1})
        let norm = (1.0 - rho) / (1.0 - rho.powi(capacity as i32 + 1));
        (0..=k).map(|i| norm * rho.powi(i as i32)).collect()
    } else {
        // same formula scaled by rho^-K so nothing overflows
        let r = 1.0 / rho;
        let norm = (1.0 - r) / (1.0 - r.powi(capacity as i32 + 1));
        (0..=k).map(|i| norm * r.powi((k - i) as i32)).collect()
    };
    let p_block = pi[k];
    Ok((pi, p_block))
}

pub fn throughput(
    mac: &MacParams,
    fp: &FixedPoint,
    cp: &ChannelProbs,
    st: &SlotTimes,
    p_block: f64,
) -> Result<Throughput> {
    let payload = effective_payload(mac, fp);
    let numerator = (1.0 - p_block) * (1.0 - fp.p_c) * payload * cp.p_tran;
    let success_term = if cp.p_tran > 0.0 {
        cp.p_s / cp.p_tran * st.t_suc
    } else {
        0.0
    };
    let collision_term = if fp.p_c > 0.0 {
        fp.p_c / (1.0 - fp.p_c) * st.t_col
    } else {
        0.0
    };
    let denominator = (1.0 - cp.p_tran) * st.mean_slot
        + (success_term + collision_term)
        + (st.t_col + mac.sifs + mac.ack);
    if denominator.is_nan() || denominator <= 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    if numerator == 0.0 {
        return Ok(Throughput {
            value: 0.0,
            clamped: false,
        });
    }
    let raw = numerator / denominator;
    let value = raw.clamp(0.0, mac.channel_rate);
    Ok(Throughput {
        value,
        clamped: value != raw,
    })
}

pub fn classic_throughput(mac: &MacParams, cp: &ChannelProbs, st: &SlotTimes) -> f64 {
    cp.p_s * cp.p_tran * mac.payload_bits / st.mean_slot
}

pub fn access_delay(fp: &FixedPoint, st: &SlotTimes) -> f64 {
    (1.0 - fp.tau) * st.mean_slot + fp.tau * ((1.0 - fp.p_c) * st.t_suc + fp.p_c * st.t_col)
}

/// Expected virtual slots a head-of-line packet spends before leaving the
/// station, delivered or dropped: `(1 - p^{m+1}) / ((1 - p) tau)`.
pub fn slots_per_packet(fp: &FixedPoint) -> f64 {
    let attempts: f64 = (0..=fp.max_stage).fold(0.0, |acc, _| acc * fp.p_c + 1.0);
    attempts / fp.tau
}

pub fn weighted_access_delay(fp: &FixedPoint, st: &SlotTimes) -> f64 {
    access_delay(fp, st) * slots_per_packet(fp)
}

/// Builds the queue model for one station: service time from the
/// effective payload, thinned arrivals, utilisation and blocking.
pub fn queue_model(
    mac: &MacParams,
    fp: &FixedPoint,
    st: &SlotTimes,
    q: &QueueParams,
) -> Result<QueueModel> {
    let service_time = service_time(effective_payload(mac, fp), mac.channel_rate)?;
    let (arrival_prob, lambda_eff) = arrival_thinning(q, st.mean_slot)?;
    let rho = lambda_eff * service_time;
    let (pi, p_block) = queue_stationary(rho, q.capacity)?;
    Ok(QueueModel {
        rho,
        pi,
        p_block,
        service_time,
        arrival_prob,
        lambda_eff,
    })
}

pub fn performance(
    mac: &MacParams,
    fp: &FixedPoint,
    cp: &ChannelProbs,
    st: &SlotTimes,
    qm: &QueueModel,
) -> Result<Performance> {
    let s = throughput(mac, fp, cp, st, qm.p_block)?;
    Ok(Performance {
        throughput: s.value,
        throughput_clamped: s.clamped,
        throughput_classic: classic_throughput(mac, cp, st),
        access_delay: access_delay(fp, st),
        weighted_delay: weighted_access_delay(fp, st),
        payload_eff: effective_payload(mac, fp),
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)] // reference values keep every digit the oracle printed
mod tests {
    use super::*;
    use crate::dcf::channel_probabilities;
    use proptest::prelude::*;

    fn fp(tau: f64, p_c: f64) -> FixedPoint {
        FixedPoint {
            tau,
            p_c,
            iterations: 0,
            residual: 0.0,
            n: 1,
            cw_min: 32,
            max_stage: 7,
        }
    }

    fn cp(p_tran: f64, p_s: f64) -> ChannelProbs {
        ChannelProbs {
            p_tran,
            p_s,
            p_idle: 1.0 - p_tran,
        }
    }

    #[test]
    fn effective_payload_examples() {
        let mac = MacParams::default();
        assert_eq!(effective_payload(&mac, &fp(1.0, 0.0)), 8000.0);
        assert!(effective_payload(&mac, &fp(0.5, 1.0 - 1e-15)) < 1e-10);
        assert!((effective_payload(&mac, &fp(0.0606, 0.0)) - 484.8).abs() < 1e-12);
    }

    #[test]
    fn slot_time_examples() {
        let mac = MacParams::default();
        let st = slot_times(&mac, &cp(0.0, 1.0));
        assert_eq!(st.mean_slot, mac.slot);
        assert!((st.t_suc - 4.16e-3).abs() < 1e-15);
        assert!((st.t_col - 251e-6).abs() < 1e-15);
        let st = slot_times(&mac, &cp(1.0, 1.0));
        assert_eq!(st.mean_slot, st.t_suc);
    }

    #[test]
    fn service_time_examples() {
        assert!((service_time(8000.0, 2e6).unwrap() - 4e-3).abs() < 1e-18);
        assert_eq!(service_time(0.0, 2e6).unwrap(), 0.0);
        assert!((service_time(484.8, 2e6).unwrap() - 242.4e-6).abs() < 1e-18);
        assert!(service_time(1.0, 0.0).is_err());
        assert!(service_time(1.0, -3.0).is_err());
    }

    #[test]
    fn thinning_examples() {
        let q = QueueParams {
            capacity: 5,
            arrival_rate: 0.0,
        };
        assert_eq!(arrival_thinning(&q, 1e-3).unwrap(), (0.0, 0.0));

        let q = QueueParams {
            capacity: 200,
            arrival_rate: 1.0,
        };
        let (p, l) = arrival_thinning(&q, 1.0).unwrap();
        assert!((p - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert_eq!(l, p);

        // 20-digit series evaluation (mpmath)
        let q = QueueParams {
            capacity: 5,
            arrival_rate: 100.0,
        };
        let (p, _) = arrival_thinning(&q, 1e-3).unwrap();
        assert!((p - 0.095162580689141734606).abs() < 1e-16);
        assert!(arrival_thinning(&q, 0.0).is_err());
    }

    #[test]
    fn queue_examples() {
        let (pi, pb) = queue_stationary(1.0, 4).unwrap();
        assert!(pi.iter().all(|&x| (x - 0.2).abs() < 1e-15));
        assert_eq!(pb, pi[4]);

        let (pi, pb) = queue_stationary(0.5, 2).unwrap();
        for (got, want) in pi.iter().zip([4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((pb - 1.0 / 7.0).abs() < 1e-15);

        assert!(queue_stationary(1e-9, 3).unwrap().1 < 1e-26);
        assert_eq!(queue_stationary(0.0, 3).unwrap().0, vec![1.0, 0.0, 0.0, 0.0]);
        assert!(queue_stationary(-0.1, 3).is_err());
        assert!(queue_stationary(0.5, 0).is_err());
    }

    #[test]
    fn queue_continuity_at_one() {
        for k in [1, 5, 50, 100] {
            for rho in [1.0 - 1e-8, 1.0 + 1e-8] {
                let (pi, _) = queue_stationary(rho, k).unwrap();
                let u = 1.0 / (k + 1) as f64;
                assert!(pi.iter().all(|x| (x - u).abs() <= 1e-6));
            }
        }
    }

    #[test]
    fn throughput_zero_cases() {
        let mac = MacParams::default();
        let f = fp(0.05, 0.2);
        let c = cp(0.0, 1.0);
        let st = slot_times(&mac, &c);
        assert_eq!(throughput(&mac, &f, &c, &st, 0.1).unwrap().value, 0.0);

        let c = channel_probabilities(0.05, 10).unwrap();
        let st = slot_times(&mac, &c);
        assert_eq!(throughput(&mac, &f, &c, &st, 1.0).unwrap().value, 0.0);
        assert_eq!(throughput(&mac, &fp(0.05, 1.0), &c, &st, 0.0).unwrap().value, 0.0);
        assert!(throughput(&mac, &f, &c, &st, 0.0).unwrap().value > 0.0);
    }

    #[test]
    fn throughput_matches_hand_evaluation() {
        // n = 10, m = 7, default timings; constants from the 50-digit solve
        let mac = MacParams::default();
        let f = fp(0.037002899656813502, 0.28776253455606612);
        let c = channel_probabilities(f.tau, 10).unwrap();
        let st = slot_times(&mac, &c);
        let pb = 0.01;
        let l = 8000.0 * f.tau * (1.0 - f.p_c);
        let num = (1.0 - pb) * (1.0 - f.p_c) * l * c.p_tran;
        let den = (1.0 - c.p_tran) * st.mean_slot
            + c.p_s / c.p_tran * st.t_suc
            + f.p_c / (1.0 - f.p_c) * st.t_col
            + st.t_col
            + 10e-6
            + 50e-6;
        let s = throughput(&mac, &f, &c, &st, pb).unwrap();
        assert!(!s.clamped);
        assert!((s.value - num / den).abs() < 1e-9);
    }

    #[test]
    fn degenerate_denominator() {
        let mac = MacParams {
            slot: 0.0,
            sifs: 0.0,
            difs: 0.0,
            ack: 0.0,
            header_bits: 0.0,
            prop_delay: 0.0,
            ..MacParams::default()
        };
        let f = fp(0.1, 0.0);
        let c = cp(0.0, 1.0);
        let st = slot_times(&mac, &c);
        assert_eq!(throughput(&mac, &f, &c, &st, 0.0), Err(Error::DegenerateDenominator));
    }

    #[test]
    fn delay_limits() {
        let st = SlotTimes {
            t_suc: 4e-3,
            t_col: 2.5e-4,
            mean_slot: 1e-3,
        };
        assert_eq!(access_delay(&fp(0.0, 0.3), &st), st.mean_slot);
        assert_eq!(access_delay(&fp(1.0, 0.0), &st), st.t_suc);
        // m = 0, p = 0: one attempt every 1/tau slots
        let one_stage = FixedPoint {
            max_stage: 0,
            ..fp(0.25, 0.0)
        };
        assert!((slots_per_packet(&one_stage) - 4.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn pi_is_a_distribution(rho in 0.0f64..10.0, k in 1u32..=100) {
            let (pi, pb) = queue_stationary(rho, k).unwrap();
            prop_assert_eq!(pi.len(), k as usize + 1);
            prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(pi.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert_eq!(pb, pi[k as usize]);
        }

        #[test]
        fn blocking_monotone(rho in 0.01f64..5.0, d in 0.001f64..1.0, k in 1u32..60) {
            let pb = |r: f64, k: u32| queue_stationary(r, k).unwrap().1;
            prop_assert!(pb(rho + d, k) > pb(rho, k));
            // above rho = 1 the gap shrinks like rho^-k and drops below f64 resolution
            if rho <= 1.5 {
                prop_assert!(pb(rho, k + 1) < pb(rho, k));
            } else {
                prop_assert!(pb(rho, k + 1) <= pb(rho, k));
            }
        }

        #[test]
        fn mean_slot_is_convex_combination(tau in 0.0f64..1.0, n in 1u32..200) {
            let mac = MacParams::default();
            let c = channel_probabilities(tau, n).unwrap();
            let st = slot_times(&mac, &c);
            let lo = mac.slot.min(st.t_suc).min(st.t_col);
            let hi = mac.slot.max(st.t_suc).max(st.t_col);
            prop_assert!(st.mean_slot >= lo * (1.0 - 1e-12) && st.mean_slot <= hi * (1.0 + 1e-12));
        }

        #[test]
        fn delay_monotone_in_busy_times(tau in 0.0f64..1.0, p in 0.0f64..1.0,
                                        ts in 1e-4f64..1e-2, tc in 1e-4f64..1e-2, bump in 0.0f64..1e-3) {
            let f = fp(tau, p);
            let base = SlotTimes { t_suc: ts, t_col: tc, mean_slot: 1e-3 };
            let d0 = access_delay(&f, &base);
            let longer_success = SlotTimes { t_suc: ts + bump, ..base };
            let longer_collision = SlotTimes { t_col: tc + bump, ..base };
            prop_assert!(access_delay(&f, &longer_success) >= d0);
            prop_assert!(access_delay(&f, &longer_collision) >= d0);
        }
    }
}
