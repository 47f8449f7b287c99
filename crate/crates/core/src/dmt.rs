//! Diversity–multiplexing tradeoff curves and outage-set exponents.
//!
//! The exponent solvers work in the usual high-SNR parametrization: a
//! Rayleigh gain `h` is written through `v`, the exponential order of
//! `1 / |h|^2`, whose density behaves as `rho^-v` for `v >= 0`. The outage
//! probability then decays as `rho^-d_O` with `d_O` the infimum of the summed
//! exponents over the outage set. Both outage sets are taken closed (`<=`):
//! this does not change the infimum for `r > 0` and keeps the set nonempty
//! at `r = 0`.

use log::warn;
use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

fn check_r(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return invalid(format!("multiplexing gain must be in [0, 1], got {r}"));
    }
    Ok(())
}

/// Genie-aided MISO upper bound `n (1 - r)^+`.
pub fn miso_bound(n: usize, r: f64) -> f64 {
    n as f64 * pos(1.0 - r)
}

/// Achievable CBC-SSAF lower bound
/// `[(n - 3) - (n + 1) r]^+ + (1 - (n + 1) r / n)^+`.
pub fn cbc_ssaf_lower_bound(n: usize, r: f64) -> f64 {
    let nf = n as f64;
    pos((nf - 3.0) - (nf + 1.0) * r) + pos(1.0 - (nf + 1.0) / nf * r)
}

/// CMA-SSAF tradeoff `m (1 - r)`, which meets the MISO bound.
pub fn cma_ssaf_dmt(m: usize, r: f64) -> f64 {
    m as f64 * pos(1.0 - r)
}

/// Single Rayleigh link without cooperation.
pub fn direct_dmt(r: f64) -> f64 {
    pos(1.0 - r)
}

/// Sampled `(r, d)` curve.
#[derive(Debug, Clone, PartialEq)]
pub struct DmtCurve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl DmtCurve {
    pub fn sample(
        label: impl Into<String>,
        r_grid: &[f64],
        d: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if r_grid.windows(2).any(|w| w[1] < w[0]) {
            return invalid("r grid must be nondecreasing");
        }
        for &r in r_grid {
            check_r(r)?;
        }
        Ok(Self {
            label: label.into(),
            points: r_grid.iter().map(|&r| (r, d(r))).collect(),
        })
    }
}

/// Exponents of one relayed slot `k` of the CBC outage set: `v` for the
/// relay's source link `1/|h_{s,t_{k-1}}|^2` and `u` for its hop to the
/// receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayedExponent {
    pub slot: usize,
    pub v: f64,
    pub u: f64,
}

/// A point of the CBC-SSAF outage exponent space for receiver position `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct CbcExponentPoint {
    pub n: usize,
    pub receiver_l: usize,
    /// Exponent of the receiver's own source link.
    pub v_receiver: f64,
    pub relayed: Vec<RelayedExponent>,
}

impl CbcExponentPoint {
    pub fn objective(&self) -> f64 {
        self.v_receiver + self.relayed.iter().map(|e| e.v + e.u).sum::<f64>()
    }

    /// Left-hand side of the outage condition: the normalized frame mutual
    /// information `3(1 - v_l)^+ + sum_k max(1 - v_{k-1} - u_{k-1}, 1 - v_l)^+`.
    pub fn normalized_mi(&self) -> f64 {
        let direct = pos(1.0 - self.v_receiver);
        3.0 * direct
            + self
                .relayed
                .iter()
                .map(|e| pos((1.0 - e.v - e.u).max(1.0 - self.v_receiver)))
                .sum::<f64>()
    }

    /// `(n + 1) r`.
    pub fn budget(&self, r: f64) -> f64 {
        (self.n as f64 + 1.0) * r
    }

    pub fn is_feasible(&self, r: f64, tol: f64) -> bool {
        self.v_receiver >= -tol
            && self.relayed.iter().all(|e| e.v >= -tol && e.u >= -tol)
            && self.normalized_mi() <= self.budget(r) + tol
    }
}

/// A point of the CMA-SSAF exponent space.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaExponentPoint {
    /// `v[l]`: exponent of `1/|h_{s_l,t}|^2`.
    pub v: Vec<f64>,
    /// `u[(k, l)]`: exponent of `1/|h_{s_k,s_l}|^2`; diagonal unused.
    pub u: DMatrix<f64>,
}

impl CmaExponentPoint {
    pub fn objective(&self) -> f64 {
        let m = self.v.len();
        self.v.iter().sum::<f64>()
            + (0..m)
                .flat_map(|k| (0..m).filter(move |&l| l != k).map(move |l| (k, l)))
                .map(|(k, l)| self.u[(k, l)])
                .sum::<f64>()
    }

    pub fn is_feasible(&self, r: f64, reading: CmaReading, tol: f64) -> bool {
        let m = self.v.len() as f64;
        if self.v.iter().chain(self.u.iter()).any(|&x| x < -tol) {
            return false;
        }
        match reading {
            CmaReading::Summed => self.v.iter().map(|&v| pos(1.0 - v)).sum::<f64>() <= m * r + tol,
            CmaReading::SingleSlot => self.v.iter().any(|&v| pos(1.0 - v) <= r + tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Minimizer {
    Cbc(CbcExponentPoint),
    Cma(CmaExponentPoint),
}

/// Infimum of an outage-set exponent together with a point attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentResult {
    pub d_o: f64,
    pub minimizer: Minimizer,
}

/// Minimizes a convex function on `[lo, hi]` by golden-section search.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Numerical CBC-SSAF outage exponent for the receiver at chain position
/// `receiver_l`.
///
/// Each relayed slot's `v + u` only enters through its sum, so `u = 0`
/// without loss and the slot is described by `w = v`. For a fixed receiver
/// exponent `v_l` the cheapest relayed exponents follow in closed form: every
/// relayed term is at least `a = (1 - v_l)^+`, so `v_l` is feasible iff
/// `(n + 1) r >= (3 + |K|) a`, and the relayed exponents then cost
/// `(|K| - ((n + 1) r - 3a))^+`, spread evenly. What remains is a convex
/// one-dimensional problem in `v_l`, solved by golden-section search.
pub fn cbc_outage_exponent(n: usize, receiver_l: usize, r: f64) -> Result<ExponentResult> {
    check_r(r)?;
    if n < 3 || receiver_l < 2 || receiver_l > n - 1 {
        return invalid(format!(
            "receiver_l must satisfy 2 <= l <= n - 1, got l = {receiver_l}, n = {n}"
        ));
    }
    let slots = crate::cbc::relayed_slots(n, receiver_l);
    let k = slots.len() as f64;
    let budget = (n as f64 + 1.0) * r;

    let relayed_cost = |v: f64| pos(k - (budget - 3.0 * pos(1.0 - v)));
    let objective = |v: f64| v + relayed_cost(v);

    let v_lo = pos(1.0 - budget / (3.0 + k));
    let v_hi = v_lo.max(1.0);
    let mut v_l = golden_min(objective, v_lo, v_hi, 1e-12);
    // The optimum of a piecewise-linear function sits on a breakpoint; snap
    // when one is at least as good.
    for cand in [v_lo, v_hi, 1.0, 1.0 - (budget - k) / 3.0] {
        if (v_lo..=v_hi).contains(&cand) && objective(cand) <= objective(v_l) {
            v_l = cand;
        }
    }

    let a = pos(1.0 - v_l);
    let total = (budget - 3.0 * a).min(k).max(k * a);
    let per_slot = if slots.is_empty() { 0.0 } else { total / k };
    let point = CbcExponentPoint {
        n,
        receiver_l,
        v_receiver: v_l,
        relayed: slots
            .iter()
            .map(|&slot| RelayedExponent {
                slot,
                v: pos(1.0 - per_slot),
                u: 0.0,
            })
            .collect(),
    };
    if !point.is_feasible(r, 1e-9) {
        return Err(Error::NumericDomain(format!(
            "exponent search returned an infeasible point for n = {n}, l = {receiver_l}, r = {r}"
        )));
    }
    Ok(ExponentResult {
        d_o: point.objective(),
        minimizer: Minimizer::Cbc(point),
    })
}

/// How the CMA-SSAF outage condition is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmaReading {
    /// `sum_l 2 (1 - v_l)^+ <= 2 M r`: the frame mutual information summed
    /// over all `2M` slots.
    Summed,
    /// `2M (1 - v_l)^+ <= 2M r` imposed on a single source `l`.
    SingleSlot,
}

impl std::str::FromStr for CmaReading {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "summed" => Ok(Self::Summed),
            "single-slot" => Ok(Self::SingleSlot),
            other => invalid(format!(
                "unknown CMA reading {other:?} (expected summed|single-slot)"
            )),
        }
    }
}

/// Numerical CMA-SSAF outage exponent under the summed reading.
pub fn cma_outage_exponent(m: usize, r: f64) -> Result<ExponentResult> {
    cma_outage_exponent_with(m, r, CmaReading::Summed)
}

/// Numerical CMA-SSAF outage exponent.
///
/// The inter-source exponents `u` appear only in the objective, so they are
/// zero at the optimum. Under the summed reading the problem is symmetric
/// and convex in `v`, so averaging any feasible point over source
/// permutations keeps it feasible at the same cost and a common `v` is
/// optimal; the smallest feasible common `v` is found by bisection. Under
/// the single-slot reading only one `v_l` is constrained and the rest are
/// zero.
pub fn cma_outage_exponent_with(m: usize, r: f64, reading: CmaReading) -> Result<ExponentResult> {
    check_r(r)?;
    if m < 1 {
        return invalid("CMA needs at least one source");
    }
    let constrained = match reading {
        CmaReading::Summed => m,
        CmaReading::SingleSlot => 1,
    };
    let cf = constrained as f64;
    let feasible = |v: f64| cf * pos(1.0 - v) <= cf * r;
    let (mut lo, mut hi) = (0.0, 1.0);
    let v = if feasible(lo) {
        lo
    } else {
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let point = CmaExponentPoint {
        v: (0..m)
            .map(|l| if l < constrained { v } else { 0.0 })
            .collect(),
        u: DMatrix::zeros(m, m),
    };
    debug_assert!(point.is_feasible(r, reading, 1e-9));
    Ok(ExponentResult {
        d_o: point.objective(),
        minimizer: Minimizer::Cma(point),
    })
}

/// Diversity estimate: least-squares slope of `-ln p` against `ln rho`.
///
/// Points with zero (or nonpositive) outage are dropped with a warning.
pub fn estimate_exponent(points: &[(f64, f64)]) -> Result<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(rho, p)| {
            let ok = rho > 0.0 && rho.is_finite() && p > 0.0 && p.is_finite();
            if !ok {
                warn!("excluding point rho = {rho}, p_out = {p} from exponent fit");
            }
            ok
        })
        .map(|&(rho, p)| (rho.ln(), -p.ln()))
        .collect();
    if usable.len() < 2 {
        return Err(Error::Estimation(format!(
            "need at least 2 points with nonzero outage, have {}",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Estimation("all usable points share one SNR".into()));
    }
    Ok(sxy / sxx)
}
