//! CMA-SSAF: sequential slotted amplify-and-forward over a cooperative
//! multiple-access channel.
//!
//! A frame has `2M` slots. In slot `l` (1-based) source `s_l` sends a new
//! message while every other source listens. In slot `M + l` source `s_l`
//! sends a second new message together with everything it overheard in the
//! first half, splitting its energy equally between the `M` components.
//!
//! A component overheard on a link whose gain is exactly zero is not
//! forwarded (its amplification is zero); such a link does not exist. For
//! every Rayleigh draw this never happens and the slot uses its full energy.

use nalgebra::DMatrix;

use crate::capacity::{gaussian_mi, MiResult};
use crate::channel::{CmaChannelDraw, SnrPoint};
use crate::error::{invalid, Result};
use crate::{CMatrix, Complex64};

/// The `2M x 2M` model `y = sqrt(rho) * H * x + n` at the destination.
///
/// Columns are ordered `x_{s_1,1}, ..., x_{s_M,M}, x_{s_1,M+1}, ...,
/// x_{s_M,2M}`; rows are slots `1..=2M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaEffectiveChannel {
    pub signal_matrix: CMatrix,
    /// Diagonal noise covariance.
    pub noise_cov: CMatrix,
    /// `beta_sq[(l, k)]`: squared amplification source `l` applies to what it
    /// heard from source `k` (0-based, zero on the diagonal).
    pub beta_sq: DMatrix<f64>,
    pub snr: SnrPoint,
}

impl CmaEffectiveChannel {
    pub fn n_src(&self) -> usize {
        self.signal_matrix.nrows() / 2
    }

    pub fn frame_slots(&self) -> usize {
        self.signal_matrix.nrows()
    }

    pub fn frame_mi(&self) -> Result<MiResult> {
        gaussian_mi(&self.signal_matrix, &self.noise_cov, self.snr)
    }

    /// Average energy source `l` (0-based) radiates in its relaying slot.
    pub fn relay_slot_power(&self, draw: &CmaChannelDraw, l: usize) -> f64 {
        let m = self.n_src() as f64;
        let r = self.snr.linear();
        let forwarded: f64 = (0..self.n_src())
            .filter(|&k| k != l)
            .map(|k| self.beta_sq[(l, k)] * (r * draw.source_to_source[(k, l)].norm_sqr() + 1.0))
            .sum();
        (r + forwarded) / m
    }
}

/// Squared amplification for a component received with gain `h`: the
/// received energy `rho |h|^2 + 1` is scaled to `rho`.
pub fn relay_beta_sq(h: Complex64, rho: SnrPoint) -> f64 {
    if h == Complex64::new(0.0, 0.0) {
        return 0.0;
    }
    let r = rho.linear();
    r / (r * h.norm_sqr() + 1.0)
}

pub fn build_cma_effective(draw: &CmaChannelDraw, rho: SnrPoint) -> Result<CmaEffectiveChannel> {
    let m = draw.n_src();
    if m < 2 {
        return invalid(format!("CMA needs at least 2 sources, got {m}"));
    }
    let zero = Complex64::new(0.0, 0.0);
    let split = 1.0 / (m as f64).sqrt();
    let beta_sq = DMatrix::from_fn(m, m, |l, k| {
        if l == k {
            0.0
        } else {
            relay_beta_sq(draw.source_to_source[(k, l)], rho)
        }
    });

    let mut signal = DMatrix::from_element(2 * m, 2 * m, zero);
    let mut noise = DMatrix::from_element(2 * m, 2 * m, zero);
    for l in 0..m {
        let h = draw.source_to_dest[l];
        signal[(l, l)] = h;
        noise[(l, l)] = Complex64::new(1.0, 0.0);

        let row = m + l;
        signal[(row, m + l)] = h * split;
        let mut forwarded_noise = 0.0;
        for k in (0..m).filter(|&k| k != l) {
            let b = beta_sq[(l, k)];
            signal[(row, k)] = h * split * b.sqrt() * draw.source_to_source[(k, l)];
            forwarded_noise += b;
        }
        noise[(row, row)] = Complex64::new(1.0 + h.norm_sqr() * forwarded_noise / m as f64, 0.0);
    }

    Ok(CmaEffectiveChannel {
        signal_matrix: signal,
        noise_cov: noise,
        beta_sq,
        snr: rho,
    })
}

/// Joint (sum-rate) outage: frame mutual information below `2M * rate_bpcu`
/// bits.
pub fn cma_outage_indicator(eff: &CmaEffectiveChannel, rate_bpcu: f64) -> Result<bool> {
    if !(rate_bpcu > 0.0) {
        return invalid(format!("rate must be positive, got {rate_bpcu}"));
    }
    Ok(eff.frame_mi()?.bits < eff.frame_slots() as f64 * rate_bpcu)
}
