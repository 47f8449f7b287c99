//! Monte Carlo outage estimation.
//!
//! Every trial is a fresh quasi-static fading frame. The pipeline is
//! draw -> (relay pre-ordering for CBC) -> effective channel -> frame mutual
//! information -> comparison with `slots * rate`. Trial `t` of a grid point
//! always uses [`RngSpec`] `(seed, t)`, so failure counts are identical for
//! any worker count and evaluation order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cbc::{build_cbc_effective, preorder_relays, CbcMode, RelayOrder};
use crate::channel::{
    draw_cbc, draw_cma, draw_direct, mix_seed, CbcChannelDraw, CmaChannelDraw, RngSpec, SnrPoint,
};
use crate::cma::build_cma_effective;
use crate::error::{invalid, Error, Result};
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    CbcSsafIsolated,
    CbcSsafExact,
    CmaSsaf,
    Direct,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::CbcSsafIsolated,
        Strategy::CbcSsafExact,
        Strategy::CmaSsaf,
        Strategy::Direct,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::CbcSsafIsolated => "cbc-ssaf-isolated",
            Strategy::CbcSsafExact => "cbc-ssaf-exact",
            Strategy::CmaSsaf => "cma-ssaf",
            Strategy::Direct => "direct",
        }
    }

    pub fn is_cbc(&self) -> bool {
        matches!(self, Strategy::CbcSsafIsolated | Strategy::CbcSsafExact)
    }

    pub fn cbc(mode: CbcMode) -> Self {
        match mode {
            CbcMode::Isolated => Strategy::CbcSsafIsolated,
            CbcMode::Exact => Strategy::CbcSsafExact,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unsupported strategy {s:?} (expected one of cbc-ssaf-isolated, cbc-ssaf-exact, cma-ssaf, direct)"
                ))
            })
    }
}

/// Network under test: strategy, node count and (for CBC) the observed
/// destination's chain position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario {
    pub strategy: Strategy,
    /// `N` destinations for CBC, `M` sources for CMA; ignored for `direct`.
    pub size: usize,
    pub receiver_l: Option<usize>,
    /// Draw pairwise cooperative links reciprocally.
    pub reciprocal: bool,
}

enum Realization {
    Cbc(CbcChannelDraw, RelayOrder),
    Cma(CmaChannelDraw),
    Direct(Complex64),
}

impl Scenario {
    pub fn direct() -> Self {
        Self {
            strategy: Strategy::Direct,
            size: 1,
            receiver_l: None,
            reciprocal: false,
        }
    }

    pub fn cbc(mode: CbcMode, n_dest: usize, receiver_l: usize) -> Self {
        Self {
            strategy: Strategy::cbc(mode),
            size: n_dest,
            receiver_l: Some(receiver_l),
            reciprocal: false,
        }
    }

    pub fn cma(n_src: usize) -> Self {
        Self {
            strategy: Strategy::CmaSsaf,
            size: n_src,
            receiver_l: None,
            reciprocal: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.strategy {
            Strategy::CbcSsafIsolated | Strategy::CbcSsafExact => {
                if self.size < 2 {
                    return invalid(format!(
                        "CBC needs at least 2 destinations, got {}",
                        self.size
                    ));
                }
                match self.receiver_l {
                    Some(l) if (1..=self.size).contains(&l) => Ok(()),
                    Some(l) => invalid(format!("receiver_l must be in 1..={}, got {l}", self.size)),
                    None => invalid("CBC strategies need a receiver position"),
                }
            }
            Strategy::CmaSsaf | Strategy::Direct => {
                if self.receiver_l.is_some() {
                    return invalid(format!(
                        "receiver_l only applies to CBC strategies, not {}",
                        self.strategy
                    ));
                }
                if self.strategy == Strategy::CmaSsaf && self.size < 2 {
                    return invalid(format!("CMA needs at least 2 sources, got {}", self.size));
                }
                Ok(())
            }
        }
    }

    /// Messages per frame; the outage threshold is this times the rate.
    pub fn frame_slots(&self) -> usize {
        match self.strategy {
            Strategy::CbcSsafIsolated | Strategy::CbcSsafExact => self.size + 1,
            Strategy::CmaSsaf => 2 * self.size,
            Strategy::Direct => 1,
        }
    }

    fn realize(&self, spec: RngSpec) -> Result<Realization> {
        Ok(match self.strategy {
            Strategy::CbcSsafIsolated | Strategy::CbcSsafExact => {
                let draw = draw_cbc(self.size, spec, self.reciprocal)?;
                let order = preorder_relays(&draw);
                Realization::Cbc(draw, order)
            }
            Strategy::CmaSsaf => Realization::Cma(draw_cma(self.size, spec, self.reciprocal)?),
            Strategy::Direct => Realization::Direct(draw_direct(spec)),
        })
    }

    fn mi_bits(&self, real: &Realization, rho: SnrPoint) -> Result<f64> {
        match real {
            Realization::Cbc(draw, order) => {
                let mode = match self.strategy {
                    Strategy::CbcSsafExact => CbcMode::Exact,
                    _ => CbcMode::Isolated,
                };
                let l = self.receiver_l.expect("validated");
                Ok(build_cbc_effective(draw, order, l, rho, mode)?
                    .frame_mi()?
                    .bits)
            }
            Realization::Cma(draw) => Ok(build_cma_effective(draw, rho)?.frame_mi()?.bits),
            Realization::Direct(h) => Ok((1.0 + rho.linear() * h.norm_sqr()).log2()),
        }
    }

    /// Frame mutual information (bits) of one trial at one SNR.
    pub fn trial_mi(&self, spec: RngSpec, rho: SnrPoint) -> Result<f64> {
        self.validate()?;
        let real = self.realize(spec)?;
        self.mi_bits(&real, rho)
    }

    /// Outage indicator of one trial.
    pub fn trial_outage(&self, spec: RngSpec, rho: SnrPoint, rate_bpcu: f64) -> Result<bool> {
        check_rate(rate_bpcu)?;
        Ok(self.trial_mi(spec, rho)? < self.threshold(rate_bpcu))
    }

    fn threshold(&self, rate_bpcu: f64) -> f64 {
        self.frame_slots() as f64 * rate_bpcu
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0) || !rate.is_finite() {
        return invalid(format!("rate must be positive and finite, got {rate}"));
    }
    Ok(())
}

/// Trial budget and execution settings shared by all grid points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub trials: u64,
    pub master_seed: u64,
    /// Two-sided confidence level of the Wilson interval.
    pub confidence: f64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl McSettings {
    pub fn new(trials: u64, master_seed: u64) -> Self {
        Self {
            trials,
            master_seed,
            confidence: 0.95,
            workers: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return invalid("at least one trial per point is required");
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return invalid(format!(
                "confidence must be in (0, 1), got {}",
                self.confidence
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageEstimate {
    pub p_hat: f64,
    pub trials: u64,
    pub failures: u64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl OutageEstimate {
    pub fn from_counts(failures: u64, trials: u64, confidence: f64) -> Result<Self> {
        if trials == 0 || failures > trials {
            return invalid(format!("{failures} failures out of {trials} trials"));
        }
        let z = z_score(confidence)?;
        let p_hat = failures as f64 / trials as f64;
        let (lo, hi) = wilson_interval(failures, trials, z);
        Ok(Self {
            p_hat,
            trials,
            failures,
            ci_low: lo.min(p_hat),
            ci_high: hi.max(p_hat),
        })
    }

    /// Binomial standard error at the point estimate.
    pub fn standard_error(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.trials as f64).sqrt()
    }
}

/// Two-sided standard normal quantile for a confidence level.
pub fn z_score(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return invalid(format!("confidence must be in (0, 1), got {confidence}"));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + confidence / 2.0))
}

/// Wilson score interval for `failures` out of `trials` at quantile `z`.
pub fn wilson_interval(failures: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = failures as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))
}

/// Runs `trial(t, counts)` for every trial index and sums the per-point
/// failure counts. Integer sums make the result independent of scheduling.
fn tally<F>(workers: usize, trials: u64, points: usize, trial: F) -> Result<Vec<u64>>
where
    F: Fn(u64, &mut [u64]) -> Result<()> + Sync,
{
    worker_pool(workers)?.install(|| {
        (0..trials)
            .into_par_iter()
            .try_fold(
                || vec![0u64; points],
                |mut acc, t| {
                    trial(t, &mut acc)?;
                    Ok::<_, Error>(acc)
                },
            )
            .try_reduce(
                || vec![0u64; points],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    Ok(a)
                },
            )
    })
}

/// Estimates the outage probability of one grid point. Trial `t` uses
/// `RngSpec::new(settings.master_seed, t)`.
pub fn estimate_outage(
    scenario: &Scenario,
    rho: SnrPoint,
    rate_bpcu: f64,
    settings: &McSettings,
) -> Result<OutageEstimate> {
    scenario.validate()?;
    settings.validate()?;
    check_rate(rate_bpcu)?;
    let threshold = scenario.threshold(rate_bpcu);
    let counts = tally(settings.workers, settings.trials, 1, |t, acc| {
        let real = scenario.realize(RngSpec::new(settings.master_seed, t))?;
        if scenario.mi_bits(&real, rho)? < threshold {
            acc[0] += 1;
        }
        Ok(())
    })?;
    OutageEstimate::from_counts(counts[0], settings.trials, settings.confidence)
}

/// A Cartesian SNR x rate sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub scenario: Scenario,
    pub snr_grid: Vec<SnrPoint>,
    pub rate_grid: Vec<f64>,
    pub settings: McSettings,
    /// Reuse the same per-trial streams at every grid point.
    pub common_random_numbers: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub snr: SnrPoint,
    pub rate_bpcu: f64,
    /// Master seed of this point's trial streams.
    pub seed: u64,
    pub estimate: OutageEstimate,
}

/// Evaluates every `(snr, rate)` pair, returned sorted by SNR then rate.
///
/// With common random numbers every point uses the master seed, so a
/// trial's channel is shared across the grid and outage indicators are
/// monotone per trial. Otherwise point `i` (row-major over the sorted grids)
/// uses the master seed mixed with `i`.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    spec.scenario.validate()?;
    spec.settings.validate()?;
    if spec.snr_grid.is_empty() {
        return invalid("SNR grid is empty");
    }
    if spec.rate_grid.is_empty() {
        return invalid("rate grid is empty");
    }
    for &r in &spec.rate_grid {
        check_rate(r)?;
    }
    let mut snrs = spec.snr_grid.clone();
    snrs.sort_by(|a, b| a.db().total_cmp(&b.db()));
    let mut rates = spec.rate_grid.clone();
    rates.sort_by(f64::total_cmp);

    let s = &spec.settings;
    let scenario = &spec.scenario;
    let mut out = Vec::with_capacity(snrs.len() * rates.len());

    if spec.common_random_numbers {
        let thresholds: Vec<f64> = rates.iter().map(|&r| scenario.threshold(r)).collect();
        let counts = tally(s.workers, s.trials, snrs.len() * rates.len(), |t, acc| {
            let real = scenario.realize(RngSpec::new(s.master_seed, t))?;
            for (i, &rho) in snrs.iter().enumerate() {
                let mi = scenario.mi_bits(&real, rho)?;
                for (j, &th) in thresholds.iter().enumerate() {
                    if mi < th {
                        acc[i * rates.len() + j] += 1;
                    }
                }
            }
            Ok(())
        })?;
        for (i, &snr) in snrs.iter().enumerate() {
            for (j, &rate) in rates.iter().enumerate() {
                out.push(SweepPoint {
                    snr,
                    rate_bpcu: rate,
                    seed: s.master_seed,
                    estimate: OutageEstimate::from_counts(
                        counts[i * rates.len() + j],
                        s.trials,
                        s.confidence,
                    )?,
                });
            }
        }
    } else {
        for (i, &snr) in snrs.iter().enumerate() {
            for (j, &rate) in rates.iter().enumerate() {
                let seed = mix_seed(s.master_seed, (i * rates.len() + j) as u64);
                let settings = McSettings {
                    master_seed: seed,
                    ..*s
                };
                out.push(SweepPoint {
                    snr,
                    rate_bpcu: rate,
                    seed,
                    estimate: estimate_outage(scenario, snr, rate, &settings)?,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::direct_outage_closed_form;

    fn snr(db: f64) -> SnrPoint {
        SnrPoint::from_db(db).unwrap()
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!(matches!(
            "cbc-ddf".parse::<Strategy>(),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn scenario_validation() {
        assert!(Scenario::cbc(CbcMode::Isolated, 5, 3).validate().is_ok());
        assert!(Scenario::cbc(CbcMode::Isolated, 5, 6).validate().is_err());
        assert!(Scenario::cbc(CbcMode::Exact, 1, 1).validate().is_err());
        assert!(Scenario::cma(1).validate().is_err());
        let mut s = Scenario::cma(3);
        s.receiver_l = Some(1);
        assert!(s.validate().is_err());
    }

    #[test]
    fn wilson_brackets_estimate() {
        let z = z_score(0.95).unwrap();
        assert!((z - 1.959964).abs() < 1e-5);
        for (f, n) in [(0, 10), (10, 10), (3, 1000), (500, 1000), (1, 1)] {
            let e = OutageEstimate::from_counts(f, n, 0.95).unwrap();
            assert!(e.ci_low <= e.p_hat && e.p_hat <= e.ci_high);
            assert!(e.ci_low >= 0.0 && e.ci_high <= 1.0);
        }
        // Textbook value: 5 of 20 at 95% -> (0.1119, 0.4687).
        let e = OutageEstimate::from_counts(5, 20, 0.95).unwrap();
        assert!((e.ci_low - 0.1119).abs() < 1e-4);
        assert!((e.ci_high - 0.4687).abs() < 1e-4);
        assert!(OutageEstimate::from_counts(3, 2, 0.95).is_err());
        assert!(z_score(1.0).is_err());
    }

    #[test]
    fn certain_outage_at_huge_rate() {
        let settings = McSettings::new(200, 1);
        for scenario in [
            Scenario::direct(),
            Scenario::cma(3),
            Scenario::cbc(CbcMode::Exact, 4, 2),
        ] {
            let e = estimate_outage(&scenario, snr(20.0), 1e3, &settings).unwrap();
            assert_eq!(e.p_hat, 1.0);
        }
    }

    #[test]
    fn direct_estimate_near_closed_form() {
        let settings = McSettings::new(200_000, 99);
        let e = estimate_outage(&Scenario::direct(), snr(10.0), 1.0, &settings).unwrap();
        let truth = direct_outage_closed_form(snr(10.0), 1.0);
        assert!((e.p_hat - truth).abs() < 4.0 * e.standard_error());
    }

    #[test]
    fn worker_count_does_not_change_counts() {
        let scenario = Scenario::cbc(CbcMode::Exact, 5, 3);
        let mut a = McSettings::new(3000, 5);
        a.workers = 1;
        let mut b = a;
        b.workers = 8;
        let ea = estimate_outage(&scenario, snr(10.0), 2.0, &a).unwrap();
        let eb = estimate_outage(&scenario, snr(10.0), 2.0, &b).unwrap();
        assert_eq!(ea, eb);
    }

    #[test]
    fn sweep_bookkeeping_and_errors() {
        let spec = SweepSpec {
            scenario: Scenario::cma(2),
            snr_grid: vec![snr(10.0), snr(5.0)],
            rate_grid: vec![2.0, 1.0],
            settings: McSettings::new(100, 3),
            common_random_numbers: false,
        };
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows.iter().map(|r| r.estimate.trials).sum::<u64>(), 400);
        let keys: Vec<_> = rows.iter().map(|r| (r.snr.db(), r.rate_bpcu)).collect();
        assert_eq!(keys, vec![(5.0, 1.0), (5.0, 2.0), (10.0, 1.0), (10.0, 2.0)]);
        let seeds: std::collections::HashSet<_> = rows.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), 4);

        let mut empty = spec.clone();
        empty.snr_grid.clear();
        assert!(run_sweep(&empty).is_err());
        let mut empty = spec;
        empty.rate_grid.clear();
        assert!(run_sweep(&empty).is_err());
    }

    #[test]
    fn crn_sweep_matches_single_point_estimates() {
        let scenario = Scenario::cbc(CbcMode::Isolated, 4, 2);
        let settings = McSettings::new(2000, 77);
        let spec = SweepSpec {
            scenario,
            snr_grid: vec![snr(5.0), snr(15.0)],
            rate_grid: vec![0.5, 2.0],
            settings,
            common_random_numbers: true,
        };
        for row in run_sweep(&spec).unwrap() {
            let single = estimate_outage(&scenario, row.snr, row.rate_bpcu, &settings).unwrap();
            assert_eq!(row.estimate, single);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn scenario(pick: u8) -> Scenario {
            match pick % 4 {
                0 => Scenario::direct(),
                1 => Scenario::cbc(CbcMode::Isolated, 5, 3),
                2 => Scenario::cbc(CbcMode::Exact, 4, 2),
                _ => Scenario::cma(3),
            }
        }

        proptest! {
            #[test]
            fn crn_outage_monotone(pick: u8, seed: u64, t: u64, db in -5.0f64..30.0, step in 0.0f64..15.0,
                                   rate in 0.1f64..4.0, bump in 0.0f64..2.0) {
                let sc = scenario(pick);
                let spec = RngSpec::new(seed, t);
                let base = sc.trial_outage(spec, snr(db), rate).unwrap();
                if sc.trial_outage(spec, snr(db + step), rate).unwrap() {
                    prop_assert!(base);
                }
                if base {
                    prop_assert!(sc.trial_outage(spec, snr(db), rate + bump).unwrap());
                }
            }

            #[test]
            fn wilson_contains_point_estimate(trials in 1u64..100_000, frac in 0.0f64..=1.0, conf in 0.5f64..0.999) {
                let failures = (frac * trials as f64).round() as u64;
                let e = OutageEstimate::from_counts(failures, trials, conf).unwrap();
                prop_assert!(0.0 <= e.ci_low && e.ci_low <= e.p_hat && e.p_hat <= e.ci_high && e.ci_high <= 1.0);
            }
        }
    }
}
