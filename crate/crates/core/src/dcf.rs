//! Two-dimensional backoff chain of 802.11 DCF with a retry limit.
//!
//! State `(j, i)` is backoff stage `j` in `0..=m` and counter `i` in
//! `0..CW_j` with `CW_j = 2^j * CW_min`. A collision moves a station to the
//! next stage; a collision at stage `m` discards the packet and the next one
//! starts again at stage 0. Stationary head probabilities are therefore
//! `b_{j,0} = p^j * b_{0,0}` for every `j <= m`, and the per-slot
//! transmission probability is their sum.

use crate::error::{Error, Result};

/// Lower edge of the open interval `[0, 1)` is searched up to this gap.
pub const PC_UPPER_GAP: f64 = 1e-12;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const MAX_BISECTION_STEPS: u32 = 200;
/// Largest stage limit accepted. `CW_min * 2^m` must stay addressable.
pub const MAX_STAGE_LIMIT: u32 = 24;

/// DCF timing and backoff constants. Durations in seconds, sizes in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacParams {
    pub cw_min: u32,
    /// Retry limit `m`: highest backoff stage before a packet is dropped.
    pub max_stage: u32,
    pub slot: f64,
    pub sifs: f64,
    pub difs: f64,
    pub ack: f64,
    /// PHY + MAC header size; its airtime is `header_bits / channel_rate`.
    pub header_bits: f64,
    pub prop_delay: f64,
    pub channel_rate: f64,
    pub payload_bits: f64,
}

impl Default for MacParams {
    /// 802.11 DSSS-style defaults: 2 Mb/s, 1000-byte packets, 50 us slots.
    fn default() -> Self {
        MacParams {
            cw_min: 32,
            max_stage: 7,
            slot: 50e-6,
            sifs: 10e-6,
            difs: 50e-6,
            ack: 50e-6,
            header_bits: 400.0,
            prop_delay: 1e-6,
            channel_rate: 2e6,
            payload_bits: 8000.0,
        }
    }
}

impl MacParams {
    pub fn with_stage_limit(mut self, m: u32) -> Self {
        self.max_stage = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.cw_min < 2 {
            return Err(Error::domain(format!("cw_min must be >= 2, got {}", self.cw_min)));
        }
        if self.max_stage > MAX_STAGE_LIMIT {
            return Err(Error::domain(format!(
                "retry limit must be <= {MAX_STAGE_LIMIT}, got {}",
                self.max_stage
            )));
        }
        for (name, d) in [
            ("slot", self.slot),
            ("sifs", self.sifs),
            ("difs", self.difs),
            ("ack", self.ack),
            ("header_bits", self.header_bits),
            ("prop_delay", self.prop_delay),
        ] {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::domain(format!("{name} must be >= 0, got {d}")));
            }
        }
        if !(self.channel_rate.is_finite() && self.channel_rate > 0.0) {
            return Err(Error::domain(format!(
                "channel rate must be > 0, got {}",
                self.channel_rate
            )));
        }
        if !(self.payload_bits.is_finite() && self.payload_bits > 0.0) {
            return Err(Error::domain(format!(
                "payload must be > 0 bits, got {}",
                self.payload_bits
            )));
        }
        Ok(())
    }

    /// Contention window at stage `j`.
    pub fn window(&self, stage: u32) -> u64 {
        (self.cw_min as u64) << stage
    }

    pub fn t_header(&self) -> f64 {
        self.header_bits / self.channel_rate
    }

    /// Airtime of a full payload.
    pub fn payload_time(&self) -> f64 {
        self.payload_bits / self.channel_rate
    }
}

fn check_pc(p_c: f64) -> Result<()> {
    if !(p_c.is_finite() && (0.0..1.0).contains(&p_c)) {
        return Err(Error::domain(format!("collision probability must be in [0, 1), got {p_c}")));
    }
    Ok(())
}

/// `sum_{j=0}^{terms-1} x^j`, Horner form. Stays finite at `x = 1`.
fn geometric_sum(x: f64, terms: u32) -> f64 {
    (0..terms).fold(0.0, |acc, _| acc * x + 1.0)
}

/// Stationary probability of state `(0, 0)` in the retry-limited chain.
///
/// `2 / (CW_min * sum_{j<=m} (2p)^j + sum_{j<=m} p^j)`. Both sums are
/// evaluated as polynomials, so `p = 1/2` needs no special casing.
pub fn b00(p_c: f64, mac: &MacParams) -> Result<f64> {
    check_pc(p_c)?;
    mac.validate()?;
    let terms = mac.max_stage + 1;
    let w = mac.cw_min as f64;
    Ok(2.0 / (w * geometric_sum(2.0 * p_c, terms) + geometric_sum(p_c, terms)))
}

/// `b_{0,0}` of the classic chain whose last stage retries forever:
///
/// ```text
///            2 (1 - 2p)(1 - p)
/// ----------------------------------------
/// (1 - 2p)(W + 1) + p W (1 - (2p)^m)
/// ```
///
/// Evaluated after cancelling `(1 - 2p)`, which removes the singularity
/// at `p = 1/2`.
pub fn b00_unlimited(p_c: f64, mac: &MacParams) -> Result<f64> {
    check_pc(p_c)?;
    mac.validate()?;
    let w = mac.cw_min as f64;
    let tail = p_c * w * geometric_sum(2.0 * p_c, mac.max_stage);
    Ok(2.0 * (1.0 - p_c) / ((w + 1.0) + tail))
}

/// Per-slot transmission probability for a given collision probability.
pub fn tau_of_pc(p_c: f64, mac: &MacParams) -> Result<f64> {
    Ok(b00(p_c, mac)? * geometric_sum(p_c, mac.max_stage + 1))
}

/// Probability that at least one of the other `n - 1` stations transmits.
pub fn pc_of_tau(tau: f64, n: u32) -> Result<f64> {
    if !(tau.is_finite() && (0.0..=1.0).contains(&tau)) {
        return Err(Error::domain(format!("tau must be in [0, 1], got {tau}")));
    }
    if n == 0 {
        return Err(Error::domain("station count must be >= 1"));
    }
    if n == 1 {
        return Ok(0.0);
    }
    Ok(1.0 - (1.0 - tau).powi((n - 1) as i32))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub tau: f64,
    pub p_c: f64,
    pub iterations: u32,
    pub residual: f64,
    /// Inputs the point was solved for.
    pub n: u32,
    pub cw_min: u32,
    pub max_stage: u32,
}

fn fixed_point_gap(p: f64, n: u32, mac: &MacParams) -> Result<f64> {
    Ok(p - pc_of_tau(tau_of_pc(p, mac)?, n)?)
}

fn check_solver_inputs(n: u32, mac: &MacParams, tol: f64) -> Result<()> {
    mac.validate()?;
    if n == 0 {
        return Err(Error::domain("station count must be >= 1"));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be > 0, got {tol}")));
    }
    Ok(())
}

/// Solves `p = 1 - (1 - tau(p))^(n-1)` by bisection on `[0, 1 - 1e-12]`.
///
/// The gap `g(p)` is continuous, non-positive at 0 and positive near 1,
/// and its slope is at least one, so the root is unique and
/// `|p - p*| <= |g(p)|`.
pub fn solve_fixed_point(n: u32, mac: &MacParams, tol: f64) -> Result<FixedPoint> {
    check_solver_inputs(n, mac, tol)?;
    let done = |p: f64, iterations: u32, residual: f64| -> Result<FixedPoint> {
        Ok(FixedPoint {
            tau: tau_of_pc(p, mac)?,
            p_c: p,
            iterations,
            residual,
            n,
            cw_min: mac.cw_min,
            max_stage: mac.max_stage,
        })
    };
    if n == 1 {
        return done(0.0, 0, 0.0);
    }

    let (mut lo, mut hi) = (0.0, 1.0 - PC_UPPER_GAP);
    let g_lo = fixed_point_gap(lo, n, mac)?;
    let g_hi = fixed_point_gap(hi, n, mac)?;
    if g_lo > 0.0 || g_hi <= 0.0 {
        return Err(Error::Convergence(format!(
            "invalid bracket: g(0) = {g_lo}, g(1-eps) = {g_hi}"
        )));
    }
    for it in 1..=MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let g = fixed_point_gap(mid, n, mac)?;
        if g.abs() <= tol && hi - lo <= tol {
            return done(mid, it, g.abs());
        }
        if g > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi <= lo {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    let g = fixed_point_gap(mid, n, mac)?.abs();
    if g <= tol {
        return done(mid, MAX_BISECTION_STEPS, g);
    }
    Err(Error::Convergence(format!(
        "no convergence after {MAX_BISECTION_STEPS} bisection steps (residual {g})"
    )))
}

/// Damped successive substitution on `p`. Usually faster than bisection,
/// but without its guarantee.
pub fn solve_fixed_point_picard(
    n: u32,
    mac: &MacParams,
    tol: f64,
    damping: f64,
    max_iter: u32,
) -> Result<FixedPoint> {
    check_solver_inputs(n, mac, tol)?;
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::domain(format!("damping must be in (0, 1], got {damping}")));
    }
    let mut p = 0.0;
    for it in 1..=max_iter {
        let target = pc_of_tau(tau_of_pc(p, mac)?, n)?;
        let residual = (p - target).abs();
        if residual <= tol {
            return Ok(FixedPoint {
                tau: tau_of_pc(p, mac)?,
                p_c: p,
                iterations: it,
                residual,
                n,
                cw_min: mac.cw_min,
                max_stage: mac.max_stage,
            });
        }
        p = ((1.0 - damping) * p + damping * target).min(1.0 - PC_UPPER_GAP);
    }
    Err(Error::Convergence(format!("picard iteration exceeded {max_iter} steps")))
}

/// Full table of stationary probabilities `b_{j,i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDistribution {
    /// `rows[j][i]` for stage `j` and counter `i < CW_j`.
    pub rows: Vec<Vec<f64>>,
}

impl ChainDistribution {
    pub fn get(&self, stage: usize, counter: usize) -> Option<f64> {
        self.rows.get(stage)?.get(counter).copied()
    }

    pub fn heads(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r[0])
    }

    pub fn total_mass(&self) -> f64 {
        self.rows.iter().map(|r| r.iter().sum::<f64>()).sum()
    }

    /// Sum of the heads, i.e. the per-slot transmission probability.
    pub fn tau(&self) -> f64 {
        self.heads().sum()
    }
}

/// Stationary distribution: counters within a stage fall off linearly,
/// `b_{j,i} = (CW_j - i) / CW_j * b_{j,0}`.
pub fn chain_stationary(p_c: f64, mac: &MacParams) -> Result<ChainDistribution> {
    let head0 = b00(p_c, mac)?;
    let mut head = head0;
    let rows = (0..=mac.max_stage)
        .map(|j| {
            let w = mac.window(j);
            let wf = w as f64;
            let row = (0..w).map(|i| (wf - i as f64) / wf * head).collect();
            head *= p_c;
            row
        })
        .collect();
    Ok(ChainDistribution { rows })
}

/// Per-slot channel event probabilities for `n` stations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelProbs {
    /// At least one station transmits.
    pub p_tran: f64,
    /// Exactly one transmits, given that someone does.
    pub p_s: f64,
    pub p_idle: f64,
}

pub fn channel_probabilities(tau: f64, n: u32) -> Result<ChannelProbs> {
    if !(tau.is_finite() && (0.0..=1.0).contains(&tau)) {
        return Err(Error::domain(format!("tau must be in [0, 1], got {tau}")));
    }
    if n == 0 {
        return Err(Error::domain("station count must be >= 1"));
    }
    let nf = n as f64;
    let (p_idle, one_winner) = if tau == 1.0 {
        (0.0, if n == 1 { 1.0 } else { 0.0 })
    } else {
        let ln_q = (-tau).ln_1p();
        ((nf * ln_q).exp(), nf * tau * ((nf - 1.0) * ln_q).exp())
    };
    let p_tran = if tau == 1.0 { 1.0 } else { -(nf * (-tau).ln_1p()).exp_m1() };
    let p_s = if p_tran > 0.0 {
        (one_winner / p_tran).min(1.0)
    } else {
        1.0
    };
    Ok(ChannelProbs {
        p_tran,
        p_s,
        p_idle,
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)] // reference values keep every digit the oracle printed
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, ToPrimitive, Zero};

    fn mac(cw_min: u32, m: u32) -> MacParams {
        MacParams {
            cw_min,
            max_stage: m,
            ..MacParams::default()
        }
    }

    fn rat(num: i64, den: i64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    // Exact rational evaluation of the unlimited-retry closed form.
    fn unlimited_oracle(p: &BigRational, w: i64, m: u32) -> BigRational {
        let one = BigRational::one();
        let two = rat(2, 1);
        let wr = rat(w, 1);
        let two_p = &two * p;
        let mut pow = BigRational::one();
        for _ in 0..m {
            pow = &pow * &two_p;
        }
        let num = &two * (&one - &two_p) * (&one - p);
        let den = (&one - &two_p) * (&wr + &one) + p * &wr * (&one - pow);
        num / den
    }

    // Normalizer of the retry-limited chain by summing every state.
    fn limited_oracle(p: &BigRational, w: i64, m: u32) -> BigRational {
        let mut total = BigRational::zero();
        let mut pj = BigRational::one();
        for j in 0..=m {
            let wj = w << j;
            for i in 0..wj {
                total += &pj * rat(wj - i, wj);
            }
            pj = &pj * p;
        }
        BigRational::one() / total
    }

    #[test]
    fn b00_collision_free() {
        for m in [0, 3, 7, 10] {
            assert_eq!(b00(0.0, &mac(32, m)).unwrap(), 2.0 / 33.0);
            assert_eq!(b00_unlimited(0.0, &mac(32, m)).unwrap(), 2.0 / 33.0);
        }
    }

    #[test]
    fn b00_matches_rational_oracles() {
        let p = rat(1, 5);
        let want = unlimited_oracle(&p, 16, 5).to_f64().unwrap();
        assert_eq!(unlimited_oracle(&p, 16, 5), rat(5000, 69621));
        let got = b00_unlimited(0.2, &mac(16, 5)).unwrap();
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");

        for (num, den, w, m) in [(1, 5, 16, 5), (3, 10, 32, 7), (1, 2, 8, 4), (9, 10, 16, 3)] {
            let want = limited_oracle(&rat(num, den), w, m).to_f64().unwrap();
            let got = b00(num as f64 / den as f64, &mac(w as u32, m)).unwrap();
            assert!((got / want - 1.0).abs() < 1e-13, "{got} vs {want}");
        }
    }

    #[test]
    fn b00_half_is_the_limit() {
        let mm = mac(32, 7);
        // rational bracket at 1/2 -+ 1e-8
        let lo = unlimited_oracle(&(rat(1, 2) - rat(1, 100_000_000)), 32, 7).to_f64().unwrap();
        let hi = unlimited_oracle(&(rat(1, 2) + rat(1, 100_000_000)), 32, 7).to_f64().unwrap();
        let at = b00_unlimited(0.5, &mm).unwrap();
        assert!(at.is_finite());
        assert!((at - 1.0 / 145.0).abs() < 1e-16);
        assert!(at <= lo.max(hi) && at >= lo.min(hi));

        let near = |p: f64| b00(p, &mm).unwrap();
        let at = near(0.5);
        assert!((at - 0.007752172728098598).abs() < 1e-15);
        assert!((near(0.5 - 1e-9) - at).abs() < 1e-9);
        assert!((near(0.5 + 1e-9) - at).abs() < 1e-9);
    }

    #[test]
    fn b00_domain() {
        assert!(b00(1.0, &mac(32, 7)).is_err());
        assert!(b00(-0.1, &mac(32, 7)).is_err());
        assert!(b00(0.1, &mac(1, 7)).is_err());
        assert!(b00_unlimited(f64::NAN, &mac(32, 7)).is_err());
    }

    #[test]
    fn tau_examples() {
        assert_eq!(tau_of_pc(0.0, &mac(32, 7)).unwrap(), 2.0 / 33.0);
        assert_eq!(tau_of_pc(0.0, &mac(64, 7)).unwrap(), 2.0 / 65.0);
        // exact rational state enumeration, see limited_oracle
        let t = tau_of_pc(0.3, &mac(32, 7)).unwrap();
        assert!((t - 0.035674134650763106).abs() < 1e-16);
        assert!(tau_of_pc(1.0, &mac(32, 7)).is_err());
    }

    #[test]
    fn single_stage_ignores_collisions() {
        for p in [0.0, 0.1, 0.5, 0.9] {
            let t = tau_of_pc(p, &mac(32, 0)).unwrap();
            assert!((t - 2.0 / 33.0).abs() < 1e-16);
            assert_eq!(t, b00(p, &mac(32, 0)).unwrap());
        }
    }

    #[test]
    fn pc_of_tau_examples() {
        assert_eq!(pc_of_tau(0.3, 1).unwrap(), 0.0);
        assert_eq!(pc_of_tau(1.0, 1).unwrap(), 0.0);
        assert_eq!(pc_of_tau(1.0, 2).unwrap(), 1.0);
        let got = pc_of_tau(0.0606, 10).unwrap();
        assert!((got - 0.430288478274905).abs() < 1e-15);
        assert!(pc_of_tau(1.1, 3).is_err());
        assert!(pc_of_tau(0.5, 0).is_err());
    }

    #[test]
    fn single_station_fixed_point() {
        let fp = solve_fixed_point(1, &mac(32, 7), 1e-10).unwrap();
        assert_eq!(fp.p_c, 0.0);
        assert_eq!(fp.tau, 2.0 / 33.0);
    }

    #[test]
    fn fixed_point_n10_matches_high_precision() {
        // 50-digit bisection (mpmath)
        let fp = solve_fixed_point(10, &mac(32, 7), 1e-10).unwrap();
        assert!(fp.residual <= 1e-10);
        assert!((fp.p_c - 0.28776253455606612).abs() < 1e-10);
        assert!((fp.tau - 0.037002899656813502).abs() < 1e-10);
        let fp60 = solve_fixed_point(60, &mac(32, 7), 1e-10).unwrap();
        assert!(fp60.p_c > fp.p_c);
        assert!((fp60.p_c - 0.53533338008569136).abs() < 1e-10);
    }

    #[test]
    fn picard_agrees_with_bisection() {
        for n in [2, 5, 10, 50, 150] {
            let a = solve_fixed_point(n, &mac(32, 7), 1e-12).unwrap();
            let b = solve_fixed_point_picard(n, &mac(32, 7), 1e-12, 0.5, 100_000).unwrap();
            assert!((a.p_c - b.p_c).abs() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn solver_rejects_bad_inputs() {
        assert!(solve_fixed_point(0, &mac(32, 7), 1e-10).is_err());
        assert!(solve_fixed_point(5, &mac(32, 7), 0.0).is_err());
        assert!(solve_fixed_point(5, &mac(32, MAX_STAGE_LIMIT + 1), 1e-10).is_err());
    }

    #[test]
    fn chain_collision_free_profile() {
        let c = chain_stationary(0.0, &mac(4, 2)).unwrap();
        let want = [0.4, 0.3, 0.2, 0.1];
        for (i, w) in want.iter().enumerate() {
            assert!((c.get(0, i).unwrap() - w).abs() < 1e-16);
        }
        assert!(c.rows[1].iter().chain(&c.rows[2]).all(|&b| b == 0.0));
        assert!((c.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn chain_geometric_heads() {
        let c = chain_stationary(0.25, &mac(8, 3)).unwrap();
        let h: Vec<f64> = c.heads().collect();
        assert!((h[2] / h[1] - 0.25).abs() < 1e-15);
        assert_eq!(c.rows[3].len(), 64);
        assert!((c.total_mass() - 1.0).abs() < 1e-12);
        assert!((c.tau() - tau_of_pc(0.25, &mac(8, 3)).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn channel_examples() {
        let c = channel_probabilities(0.2, 1).unwrap();
        assert_eq!(c.p_s, 1.0);
        assert!((c.p_tran - 0.2).abs() < 1e-16);

        let c = channel_probabilities(0.5, 2).unwrap();
        assert!((c.p_tran - 0.75).abs() < 1e-15);
        assert!((c.p_s - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.p_idle - 0.25).abs() < 1e-15);

        // exact rational evaluation
        let c = channel_probabilities(0.01, 60).unwrap();
        assert!((c.p_tran - 0.45284335760923855).abs() < 1e-15);
        assert!((c.p_s - 0.7322843113966567).abs() < 1e-15);

        let c = channel_probabilities(0.0, 10).unwrap();
        assert_eq!((c.p_tran, c.p_s, c.p_idle), (0.0, 1.0, 1.0));
        let c = channel_probabilities(1e-300, 10).unwrap();
        assert!((c.p_s - 1.0).abs() < 1e-12);
        assert!(channel_probabilities(0.5, 0).is_err());
        assert!(channel_probabilities(-0.5, 3).is_err());
    }
}
