//! Outage simulation and diversity–multiplexing analysis for sequential
//! slotted amplify-and-forward (SSAF) cooperation.
//!
//! The crate models two cooperative strategies at the mutual-information
//! level:
//!
//! * **CBC-SSAF** ([`cbc`]): one source broadcasts a common message stream
//!   over `N + 1` slots while the `N` destinations take turns forwarding what
//!   they heard in the previous slot.
//! * **CMA-SSAF** ([`cma`]): `M` sources share one destination over `2M`
//!   slots; in the second half every source forwards what it overheard
//!   alongside a fresh message of its own.
//!
//! Each strategy reduces to a linear Gaussian model whose frame mutual
//! information ([`capacity`]) decides outage. [`montecarlo`] estimates
//! outage probabilities over Rayleigh fading draws ([`channel`]) and
//! [`dmt`] holds the analytical tradeoff curves together with a numerical
//! solver for the outage-set exponents.

pub mod capacity;
pub mod cbc;
pub mod channel;
pub mod cma;
pub mod dmt;
mod error;
pub mod montecarlo;

pub use error::{Error, Result};

/// Complex baseband sample type used throughout.
pub type Complex64 = nalgebra::Complex<f64>;

/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
