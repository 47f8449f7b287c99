//! Quasi-static flat Rayleigh fading and the SNR model.
//!
//! Noise is normalized to unit variance at every receiver, so the only power
//! parameter is the linear SNR `rho`: every transmitter radiates average
//! energy `rho` per slot.
//!
//! Channel draws are pure functions of an [`RngSpec`]. Each trial owns an
//! independent ChaCha8 stream: the 256-bit key is expanded from the master
//! seed with `SeedableRng::seed_from_u64` and the trial index selects the
//! 64-bit stream id. A trial's gains therefore never depend on which worker
//! evaluated it or in what order.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::{CMatrix, Complex64};

/// Operating point on the SNR axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrPoint {
    rho_db: f64,
    rho: f64,
}

impl SnrPoint {
    pub fn from_db(rho_db: f64) -> Result<Self> {
        let rho = 10f64.powf(rho_db / 10.0);
        if !rho_db.is_finite() || !(rho > 0.0) || !rho.is_finite() {
            return invalid(format!("SNR of {rho_db} dB is not representable"));
        }
        Ok(Self { rho_db, rho })
    }

    pub fn from_linear(rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return invalid(format!("linear SNR must be positive and finite, got {rho}"));
        }
        Ok(Self {
            rho_db: 10.0 * rho.log10(),
            rho,
        })
    }

    pub fn db(&self) -> f64 {
        self.rho_db
    }

    /// Linear SNR `E / sigma^2` with `sigma^2 = 1`.
    pub fn linear(&self) -> f64 {
        self.rho
    }
}

/// Identifies the random stream of one Monte Carlo trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSpec {
    pub master_seed: u64,
    pub trial_index: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        Self {
            master_seed,
            trial_index,
        }
    }

    /// Fresh generator positioned at the start of this trial's stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.trial_index);
        rng
    }
}

/// SplitMix64 finalizer; used to derive independent master seeds for grid
/// points that must not share random numbers.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Circularly-symmetric complex Gaussian with `E|h|^2 = 1`.
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One frame of a cooperative broadcast channel.
#[derive(Debug, Clone, PartialEq)]
pub struct CbcChannelDraw {
    /// `h_{s,t_n}`, indexed by original destination index.
    pub source_to_dest: Vec<Complex64>,
    /// `dest_to_dest[(i, j)] = h_{t_i,t_j}`, the gain from destination `i`
    /// to destination `j`. The diagonal is zero.
    pub dest_to_dest: CMatrix,
}

impl CbcChannelDraw {
    pub fn n_dest(&self) -> usize {
        self.source_to_dest.len()
    }

    /// Builds a draw from explicit gains, checking the structural invariants.
    pub fn from_gains(source_to_dest: Vec<Complex64>, dest_to_dest: CMatrix) -> Result<Self> {
        let n = source_to_dest.len();
        check_pair_matrix(n, &dest_to_dest, "destination")?;
        Ok(Self {
            source_to_dest,
            dest_to_dest,
        })
    }
}

/// One frame of a cooperative multiple-access channel.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaChannelDraw {
    /// `h_{s_m,t}`.
    pub source_to_dest: Vec<Complex64>,
    /// `source_to_source[(k, l)] = h_{s_k,s_l}`, the gain from source `k` to
    /// source `l`. The diagonal is zero.
    pub source_to_source: CMatrix,
}

impl CmaChannelDraw {
    pub fn n_src(&self) -> usize {
        self.source_to_dest.len()
    }

    pub fn from_gains(source_to_dest: Vec<Complex64>, source_to_source: CMatrix) -> Result<Self> {
        let n = source_to_dest.len();
        check_pair_matrix(n, &source_to_source, "source")?;
        Ok(Self {
            source_to_dest,
            source_to_source,
        })
    }
}

fn check_pair_matrix(n: usize, m: &CMatrix, what: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return invalid(format!(
            "{what}-to-{what} matrix is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        ));
    }
    if (0..n).any(|i| m[(i, i)] != Complex64::new(0.0, 0.0)) {
        return invalid(format!("{what}-to-{what} matrix must have a zero diagonal"));
    }
    Ok(())
}

fn draw_pair_matrix<R: rand::Rng + ?Sized>(n: usize, reciprocal: bool, rng: &mut R) -> CMatrix {
    let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        for j in 0..n {
            if i == j || (reciprocal && j < i) {
                continue;
            }
            let h = complex_gaussian(rng);
            m[(i, j)] = h;
            if reciprocal {
                m[(j, i)] = h;
            }
        }
    }
    m
}

fn draw_gains<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex64> {
    (0..n).map(|_| complex_gaussian(rng)).collect()
}

/// Draws all gains of a CBC frame: `n_dest` source gains first, then the
/// destination pairs in row-major order (upper triangle only when
/// `reciprocal`).
pub fn draw_cbc(n_dest: usize, rng: RngSpec, reciprocal: bool) -> Result<CbcChannelDraw> {
    if n_dest < 2 {
        return invalid(format!("CBC needs at least 2 destinations, got {n_dest}"));
    }
    let mut r = rng.rng();
    let source_to_dest = draw_gains(n_dest, &mut r);
    let dest_to_dest = draw_pair_matrix(n_dest, reciprocal, &mut r);
    Ok(CbcChannelDraw {
        source_to_dest,
        dest_to_dest,
    })
}

/// Draws all gains of a CMA frame. Inter-source links are independent in
/// each direction unless `reciprocal` is set.
pub fn draw_cma(n_src: usize, rng: RngSpec, reciprocal: bool) -> Result<CmaChannelDraw> {
    if n_src < 2 {
        return invalid(format!("CMA needs at least 2 sources, got {n_src}"));
    }
    let mut r = rng.rng();
    let source_to_dest = draw_gains(n_src, &mut r);
    let source_to_source = draw_pair_matrix(n_src, reciprocal, &mut r);
    Ok(CmaChannelDraw {
        source_to_dest,
        source_to_source,
    })
}

/// Single point-to-point gain for the non-cooperative baseline.
pub fn draw_direct(rng: RngSpec) -> Complex64 {
    complex_gaussian(&mut rng.rng())
}
