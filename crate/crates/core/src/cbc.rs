//! CBC-SSAF: sequential slotted amplify-and-forward over a cooperative
//! broadcast channel.
//!
//! One source sends a new common message in each of the `N + 1` slots of a
//! frame. Before the frame the `N` destinations are ordered into a relay
//! chain ([`preorder_relays`]); the destination at chain position `p` listens
//! in slot `p` and forwards a scaled copy of what it heard in slot `p + 1`.
//! A destination therefore observes every slot except the one in which it
//! transmits.
//!
//! Throughout this module chain positions, slots and messages are numbered
//! from 1 (message `k` is the one the source sends in slot `k`), while
//! destinations in a [`CbcChannelDraw`] keep their 0-based storage index.
//!
//! Two effective-channel models are provided:
//!
//! * [`CbcMode::Isolated`] treats the gains between consecutive relays (both
//!   directions) as exactly zero. Each relay then forwards only source signal
//!   plus its own listening noise, the receiver sees at most one relayed
//!   copy per slot, and the noise covariance is diagonal.
//! * [`CbcMode::Exact`] keeps every gain. A relay's slot also contains the
//!   previous relay's transmission, so forwarded signals accumulate the whole
//!   chain of earlier messages and noises. Noise terms are tracked per
//!   source (relay listening noises and the receiver's own per-slot noise;
//!   the receiver's listening noise in its own listening slot is the same
//!   random variable as its observation noise there), which generally makes
//!   the noise covariance non-diagonal.

use nalgebra::DMatrix;

use crate::capacity::{gaussian_mi, MiResult};
use crate::channel::{CbcChannelDraw, SnrPoint};
use crate::error::{invalid, Result};
use crate::{CMatrix, Complex64};

/// Which destination acts as the `p`-th relay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayOrder {
    /// `order[p - 1]` is the draw index of the destination at chain position `p`.
    order: Vec<usize>,
}

impl RelayOrder {
    /// Wraps an explicit order, checking that it is a permutation of `0..n`.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &d in &order {
            if d >= order.len() || std::mem::replace(&mut seen[d], true) {
                return invalid(format!("{order:?} is not a permutation"));
            }
        }
        Ok(Self { order })
    }

    /// Identity chain: destination `i` is relay `i + 1`.
    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Draw index of the relay at 1-based chain position `p`.
    pub fn dest_at(&self, position: usize) -> usize {
        self.order[position - 1]
    }
}

/// Greedy relay pre-ordering.
///
/// The first relay is the destination with the strongest source link; every
/// following relay is the remaining destination with the weakest link from
/// the relay chosen just before it. Ties go to the lowest draw index.
pub fn preorder_relays(draw: &CbcChannelDraw) -> RelayOrder {
    let n = draw.n_dest();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);

    let pick = |remaining: &mut Vec<usize>, key: &dyn Fn(usize) -> f64, larger: bool| {
        let mut best = 0;
        for i in 1..remaining.len() {
            let (cand, cur) = (key(remaining[i]), key(remaining[best]));
            if (larger && cand > cur) || (!larger && cand < cur) {
                best = i;
            }
        }
        remaining.remove(best)
    };

    if n > 0 {
        let first = pick(&mut remaining, &|t| draw.source_to_dest[t].norm_sqr(), true);
        order.push(first);
    }
    while !remaining.is_empty() {
        let prev = *order.last().unwrap();
        let next = pick(
            &mut remaining,
            &|t| draw.dest_to_dest[(prev, t)].norm_sqr(),
            false,
        );
        order.push(next);
    }
    RelayOrder { order }
}

/// Effective-channel model used for a destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CbcMode {
    Isolated,
    Exact,
}

impl std::str::FromStr for CbcMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isolated" => Ok(Self::Isolated),
            "exact" => Ok(Self::Exact),
            other => invalid(format!(
                "unknown CBC mode {other:?} (expected isolated|exact)"
            )),
        }
    }
}

/// Squared amplification of one relay.
///
/// `beta_sq * (received_power + 1) = rho`: the forwarded signal, including
/// the amplified listening noise, uses the full transmit energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationFactor {
    pub beta_sq: f64,
    /// Signal power at the relay input, excluding its unit-variance noise.
    pub received_power: f64,
}

impl NormalizationFactor {
    fn for_received(received_power: f64, rho: f64) -> Self {
        Self {
            beta_sq: rho / (received_power + 1.0),
            received_power,
        }
    }
}

/// Linear model `y = sqrt(rho) * H * x + n` seen by one destination over a
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    /// `N x (N + 1)`: one row per observed slot, one column per message.
    pub signal_matrix: CMatrix,
    /// `N x N` Hermitian noise covariance (unit-variance receiver noise).
    pub noise_cov: CMatrix,
    /// Slot number of each row.
    pub observed_slots: Vec<usize>,
    /// Message (source slot) number of each column.
    pub message_slots: Vec<usize>,
    /// Chain position `l` of the receiving destination.
    pub receiver: usize,
    pub mode: CbcMode,
    pub snr: SnrPoint,
    /// Relay amplification per chain position, index `p - 1`.
    pub normalization: Vec<NormalizationFactor>,
}

impl EffectiveChannel {
    pub fn n_dest(&self) -> usize {
        self.message_slots.len() - 1
    }

    /// Number of messages in the frame, `N + 1`.
    pub fn frame_slots(&self) -> usize {
        self.message_slots.len()
    }

    pub fn frame_mi(&self) -> Result<MiResult> {
        gaussian_mi(&self.signal_matrix, &self.noise_cov, self.snr)
    }
}

/// Slots `k` in `2..=N+1` other than `l`, `l+1`, `l+2`: the slots in which
/// the receiver at position `l` hears a relayed copy under isolation.
pub fn relayed_slots(n_dest: usize, receiver_l: usize) -> Vec<usize> {
    (2..=n_dest + 1)
        .filter(|&k| k != receiver_l && k != receiver_l + 1 && k != receiver_l + 2)
        .collect()
}

fn check_receiver(n: usize, order: &RelayOrder, receiver_l: usize) -> Result<()> {
    if n < 2 {
        return invalid(format!("CBC needs at least 2 destinations, got {n}"));
    }
    if order.len() != n {
        return invalid(format!(
            "relay order has {} entries for {n} destinations",
            order.len()
        ));
    }
    if receiver_l < 1 || receiver_l > n {
        return invalid(format!("receiver_l must be in 1..={n}, got {receiver_l}"));
    }
    Ok(())
}

/// Builds the effective channel of the destination at chain position
/// `receiver_l`.
pub fn build_cbc_effective(
    draw: &CbcChannelDraw,
    order: &RelayOrder,
    receiver_l: usize,
    rho: SnrPoint,
    mode: CbcMode,
) -> Result<EffectiveChannel> {
    let n = draw.n_dest();
    check_receiver(n, order, receiver_l)?;
    match mode {
        CbcMode::Isolated => Ok(build_isolated(draw, order, receiver_l, rho)),
        CbcMode::Exact => Ok(build_exact(draw, order, receiver_l, rho)),
    }
}

fn observed_slots(n: usize, receiver_l: usize) -> Vec<usize> {
    (1..=n + 1).filter(|&k| k != receiver_l + 1).collect()
}

fn build_isolated(
    draw: &CbcChannelDraw,
    order: &RelayOrder,
    l: usize,
    rho: SnrPoint,
) -> EffectiveChannel {
    let n = draw.n_dest();
    let r = rho.linear();
    let zero = Complex64::new(0.0, 0.0);
    let rx = order.dest_at(l);
    let h_direct = draw.source_to_dest[rx];

    let normalization: Vec<_> = (1..=n)
        .map(|p| {
            let h = draw.source_to_dest[order.dest_at(p)];
            NormalizationFactor::for_received(r * h.norm_sqr(), r)
        })
        .collect();

    let rows = observed_slots(n, l);
    let relayed = relayed_slots(n, l);
    let mut signal = DMatrix::from_element(n, n + 1, zero);
    let mut noise = DMatrix::from_element(n, n, zero);
    for (row, &k) in rows.iter().enumerate() {
        signal[(row, k - 1)] = h_direct;
        let mut var = 1.0;
        if relayed.contains(&k) {
            let relay = order.dest_at(k - 1);
            let beta_sq = normalization[k - 2].beta_sq;
            let h_hop = draw.dest_to_dest[(relay, rx)];
            signal[(row, k - 2)] = h_hop * beta_sq.sqrt() * draw.source_to_dest[relay];
            var += h_hop.norm_sqr() * beta_sq;
        }
        noise[(row, row)] = Complex64::new(var, 0.0);
    }

    EffectiveChannel {
        signal_matrix: signal,
        noise_cov: noise,
        observed_slots: rows,
        message_slots: (1..=n + 1).collect(),
        receiver: l,
        mode: CbcMode::Isolated,
        snr: rho,
        normalization,
    }
}

/// A relay transmission as a linear form in the messages (scaled by
/// `sqrt(rho)`) and the independent unit-variance noise sources.
struct LinearForm {
    message: Vec<Complex64>,
    noise: Vec<Complex64>,
}

impl LinearForm {
    fn power(&self, rho: f64) -> f64 {
        rho * self.message.iter().map(|c| c.norm_sqr()).sum::<f64>()
            + self.noise.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }
}

fn build_exact(
    draw: &CbcChannelDraw,
    order: &RelayOrder,
    l: usize,
    rho: SnrPoint,
) -> EffectiveChannel {
    let n = draw.n_dest();
    let r = rho.linear();
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let rx = order.dest_at(l);
    let rows = observed_slots(n, l);

    // Noise sources: relay listening noise of position p at index p - 1,
    // then one observation noise per observed slot other than l (the
    // receiver's slot-l observation noise is its listening noise n_l).
    let mut obs_noise_index = vec![usize::MAX; n + 2];
    let mut next = n;
    for &k in &rows {
        obs_noise_index[k] = if k == l {
            l - 1
        } else {
            next += 1;
            next - 1
        };
    }
    let n_noise = next;

    let mut transmissions: Vec<LinearForm> = Vec::with_capacity(n);
    let mut normalization = Vec::with_capacity(n);
    for p in 1..=n {
        let me = order.dest_at(p);
        // Received signal in slot p: source message p, the previous relay's
        // transmission, own noise.
        let mut message = vec![zero; n + 1];
        let mut noise = vec![zero; n_noise];
        message[p - 1] = draw.source_to_dest[me];
        noise[p - 1] = one;
        let mut received_power = r * draw.source_to_dest[me].norm_sqr();
        if p >= 2 {
            let prev = &transmissions[p - 2];
            let h = draw.dest_to_dest[(order.dest_at(p - 1), me)];
            for (acc, c) in message.iter_mut().zip(&prev.message) {
                *acc += h * c;
            }
            for (acc, c) in noise.iter_mut().zip(&prev.noise) {
                *acc += h * c;
            }
            received_power += h.norm_sqr() * prev.power(r);
        }
        let factor = NormalizationFactor::for_received(received_power, r);
        let beta = Complex64::new(factor.beta_sq.sqrt(), 0.0);
        message.iter_mut().for_each(|c| *c *= beta);
        noise.iter_mut().for_each(|c| *c *= beta);
        normalization.push(factor);
        transmissions.push(LinearForm { message, noise });
    }

    let mut signal = DMatrix::from_element(n, n + 1, zero);
    let mut noise_map = DMatrix::from_element(n, n_noise, zero);
    for (row, &k) in rows.iter().enumerate() {
        signal[(row, k - 1)] += draw.source_to_dest[rx];
        noise_map[(row, obs_noise_index[k])] += one;
        if k >= 2 {
            let relay = order.dest_at(k - 1);
            let h = draw.dest_to_dest[(relay, rx)];
            let tx = &transmissions[k - 2];
            for (m, c) in tx.message.iter().enumerate() {
                signal[(row, m)] += h * c;
            }
            for (q, c) in tx.noise.iter().enumerate() {
                noise_map[(row, q)] += h * c;
            }
        }
    }
    let cov = &noise_map * noise_map.adjoint();
    let noise_cov = (&cov + cov.adjoint()) * Complex64::new(0.5, 0.0);

    EffectiveChannel {
        signal_matrix: signal,
        noise_cov,
        observed_slots: rows,
        message_slots: (1..=n + 1).collect(),
        receiver: l,
        mode: CbcMode::Exact,
        snr: rho,
        normalization,
    }
}

/// Whether the frame is in outage: its mutual information falls short of
/// `(N + 1) * rate_bpcu` bits.
pub fn cbc_outage_indicator(eff: &EffectiveChannel, rate_bpcu: f64) -> Result<bool> {
    if !(rate_bpcu > 0.0) {
        return invalid(format!("rate must be positive, got {rate_bpcu}"));
    }
    let mi = eff.frame_mi()?;
    Ok(mi.bits < eff.frame_slots() as f64 * rate_bpcu)
}

/// Share of air time spent on relay scheduling: `N` probe and `N` feedback
/// frames per `N + 1` data slots.
pub fn overhead_fraction(
    n_dest: usize,
    probe_len: f64,
    feedback_len: f64,
    data_slot_len: f64,
) -> Result<f64> {
    if n_dest < 1 {
        return invalid("overhead needs at least one destination");
    }
    for (name, v) in [
        ("probe", probe_len),
        ("feedback", feedback_len),
        ("data slot", data_slot_len),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return invalid(format!("{name} length must be positive, got {v}"));
        }
    }
    let n = n_dest as f64;
    let scheduling = n * (probe_len + feedback_len);
    Ok(scheduling / (scheduling + (n + 1.0) * data_slot_len))
}
