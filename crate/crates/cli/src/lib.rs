//! Configuration handling and CSV emitters behind the `ssaf` binary.
//!
//! Every subcommand renders its whole table into a string first; the binary
//! only writes it out once it is complete.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use ssaf::cbc::{overhead_fraction, CbcMode};
use ssaf::channel::SnrPoint;
use ssaf::dmt::{
    cbc_outage_exponent, cbc_ssaf_lower_bound, cma_outage_exponent_with, cma_ssaf_dmt, direct_dmt,
    miso_bound, CmaReading,
};
use ssaf::montecarlo::{run_sweep, McSettings, Scenario, Strategy, SweepSpec};

pub const OUTAGE_HEADER: &str =
    "strategy,size,receiver_l,snr_db,rate_bpcu,trials,failures,p_hat,ci_low,ci_high,seed";
pub const DMT_HEADER: &str = "r,d_miso,d_cbc_ssaf_lb,d_cma_ssaf,d_direct";
pub const EXPONENT_HEADER: &str = "model,size,receiver_l,r,d_o_numeric,d_bound,gap";
pub const OVERHEAD_HEADER: &str = "size,probe_len,feedback_len,data_len,overhead_fraction";

#[derive(Debug, Parser)]
#[command(
    name = "ssaf",
    version,
    about = "Outage simulation and DMT analysis for slotted amplify-and-forward cooperation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Outage,
    Dmt,
    Exponent,
    Overhead,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo outage probability over an SNR x rate grid.
    Outage(RunArgs),
    /// Closed-form DMT curves over an r grid.
    Dmt(RunArgs),
    /// Numerical outage exponents against their closed-form bounds.
    Exponent(RunArgs),
    /// Relay-scheduling overhead of CBC-SSAF.
    Overhead(RunArgs),
}

impl Command {
    pub fn split(self) -> (Kind, RunArgs) {
        match self {
            Command::Outage(a) => (Kind::Outage, a),
            Command::Dmt(a) => (Kind::Dmt, a),
            Command::Exponent(a) => (Kind::Exponent, a),
            Command::Overhead(a) => (Kind::Overhead, a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Isolated,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Cbc,
    Cma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadingArg {
    Summed,
    SingleSlot,
}

/// Flags shared by all subcommands. Anything left unset falls back to the
/// config file, then to the built-in default.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunArgs {
    /// TOML file with any of these options (flag names as keys).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// cbc-ssaf, cbc-ssaf-isolated, cbc-ssaf-exact, cma-ssaf or direct.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Destinations (CBC) or sources (CMA).
    #[arg(long)]
    pub size: Option<usize>,
    /// Chain position of the observed CBC destination (default ceil(N/2)).
    #[arg(long)]
    pub receiver_l: Option<usize>,
    /// SNR grid in dB: comma list or start:stop:step.
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<String>,
    /// Per-slot rates in bits per channel use (comma list).
    #[arg(long)]
    pub rate: Option<String>,
    /// Multiplexing-gain grid: comma list or start:stop:step.
    #[arg(long)]
    pub r_grid: Option<String>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Two-sided level of the Wilson interval (default 0.95).
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Draw pairwise cooperative links reciprocally.
    #[arg(long)]
    #[serde(default)]
    pub reciprocal: bool,
    /// Reuse the same channel draws at every grid point.
    #[arg(long)]
    #[serde(default)]
    pub crn: bool,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exponent model.
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Reading of the CMA outage condition.
    #[arg(long, value_enum)]
    pub reading: Option<ReadingArg>,
    #[arg(long)]
    pub probe_len: Option<f64>,
    #[arg(long)]
    pub feedback_len: Option<f64>,
    #[arg(long)]
    pub data_len: Option<f64>,
}

impl RunArgs {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Loads `--config` if given and lets the flags override it.
    pub fn resolve(self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let file =
            Self::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))?;
        Ok(self.over(file))
    }

    fn over(self, base: Self) -> Self {
        Self {
            config: self.config,
            strategy: self.strategy.or(base.strategy),
            size: self.size.or(base.size),
            receiver_l: self.receiver_l.or(base.receiver_l),
            snr_db: self.snr_db.or(base.snr_db),
            rate: self.rate.or(base.rate),
            r_grid: self.r_grid.or(base.r_grid),
            trials: self.trials.or(base.trials),
            seed: self.seed.or(base.seed),
            confidence: self.confidence.or(base.confidence),
            workers: self.workers.or(base.workers),
            mode: self.mode.or(base.mode),
            reciprocal: self.reciprocal || base.reciprocal,
            crn: self.crn || base.crn,
            out: self.out.or(base.out),
            model: self.model.or(base.model),
            reading: self.reading.or(base.reading),
            probe_len: self.probe_len.or(base.probe_len),
            feedback_len: self.feedback_len.or(base.feedback_len),
            data_len: self.data_len.or(base.data_len),
        }
    }

    fn size(&self) -> Result<usize> {
        self.size.context("--size is required")
    }

    fn r_grid(&self) -> Result<Vec<f64>> {
        let text = self.r_grid.as_deref().context("--r-grid is required")?;
        let grid = parse_grid(text)?;
        for &r in &grid {
            ensure!(
                (0.0..=1.0).contains(&r),
                "multiplexing gain {r} is outside [0, 1]"
            );
        }
        Ok(grid)
    }

    /// Rejects options the subcommand does not use.
    fn only(&self, kind: Kind, allowed: &[&str]) -> Result<()> {
        let set = [
            ("strategy", self.strategy.is_some()),
            ("size", self.size.is_some()),
            ("receiver-l", self.receiver_l.is_some()),
            ("snr-db", self.snr_db.is_some()),
            ("rate", self.rate.is_some()),
            ("r-grid", self.r_grid.is_some()),
            ("trials", self.trials.is_some()),
            ("seed", self.seed.is_some()),
            ("confidence", self.confidence.is_some()),
            ("workers", self.workers.is_some()),
            ("mode", self.mode.is_some()),
            ("reciprocal", self.reciprocal),
            ("crn", self.crn),
            ("model", self.model.is_some()),
            ("reading", self.reading.is_some()),
            ("probe-len", self.probe_len.is_some()),
            ("feedback-len", self.feedback_len.is_some()),
            ("data-len", self.data_len.is_some()),
        ];
        for (name, present) in set {
            if present && !allowed.contains(&name) {
                bail!("--{name} is not used by the {} subcommand", kind.name());
            }
        }
        Ok(())
    }
}

impl Kind {
    pub fn name(&self) -> &'static str {
        match self {
            Kind::Outage => "outage",
            Kind::Dmt => "dmt",
            Kind::Exponent => "exponent",
            Kind::Overhead => "overhead",
        }
    }
}

/// Parses `a,b,c` or `start:stop:step` (inclusive of `stop`).
///
/// Range points are rounded to the decimal precision of the inputs, so
/// `0:1:0.1` yields `0.3` rather than `0.30000000000000004`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    ensure!(!text.is_empty(), "empty grid");
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').map(str::trim).collect();
        ensure!(parts.len() == 3, "range {text:?} must be start:stop:step");
        let [start, stop, step] = [
            parse_num(parts[0])?,
            parse_num(parts[1])?,
            parse_num(parts[2])?,
        ];
        ensure!(step > 0.0, "range step must be positive, got {step}");
        ensure!(stop >= start, "range stop {stop} is below start {start}");
        let digits = parts.iter().map(|p| decimals(p)).max().unwrap_or(0);
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        ensure!(count <= 1_000_000, "range {text:?} has too many points");
        (0..count)
            .map(|i| {
                let x = start + i as f64 * step;
                Ok(format!("{x:.digits$}").parse::<f64>()?)
            })
            .collect()
    } else {
        text.split(',').map(|p| parse_num(p.trim())).collect()
    }
}

fn parse_num(s: &str) -> Result<f64> {
    let x: f64 = s
        .parse()
        .with_context(|| format!("{s:?} is not a number"))?;
    ensure!(x.is_finite(), "{s:?} is not finite");
    Ok(x)
}

fn decimals(s: &str) -> usize {
    s.split_once('.').map_or(0, |(_, frac)| frac.len())
}

/// Runs a subcommand and returns the CSV text.
pub fn run(kind: Kind, args: &RunArgs) -> Result<String> {
    match kind {
        Kind::Outage => cmd_outage(args),
        Kind::Dmt => cmd_dmt(args),
        Kind::Exponent => cmd_exponent(args),
        Kind::Overhead => cmd_overhead(args),
    }
}

/// Builds the scenario for `outage` from `--strategy`, `--mode` and friends.
pub fn outage_scenario(args: &RunArgs) -> Result<Scenario> {
    let name = args.strategy.as_deref().context("--strategy is required")?;
    let mode = args.mode.map(|m| match m {
        ModeArg::Isolated => CbcMode::Isolated,
        ModeArg::Exact => CbcMode::Exact,
    });
    let strategy = if name == "cbc-ssaf" {
        Strategy::cbc(mode.unwrap_or(CbcMode::Isolated))
    } else {
        let s: Strategy = name.parse()?;
        if let Some(mode) = mode {
            ensure!(s.is_cbc(), "--mode only applies to CBC strategies");
            ensure!(
                s == Strategy::cbc(mode),
                "--mode {mode:?} contradicts strategy {name}"
            );
        }
        s
    };
    let scenario = match strategy {
        Strategy::CbcSsafIsolated | Strategy::CbcSsafExact => {
            let n = args.size()?;
            Scenario {
                strategy,
                size: n,
                receiver_l: Some(args.receiver_l.unwrap_or(n.div_ceil(2))),
                reciprocal: args.reciprocal,
            }
        }
        Strategy::CmaSsaf => {
            ensure!(
                args.receiver_l.is_none(),
                "--receiver-l only applies to CBC strategies"
            );
            Scenario {
                reciprocal: args.reciprocal,
                ..Scenario::cma(args.size()?)
            }
        }
        Strategy::Direct => {
            ensure!(
                args.receiver_l.is_none(),
                "--receiver-l only applies to CBC strategies"
            );
            ensure!(
                !args.reciprocal,
                "--reciprocal has no effect on the direct link"
            );
            if let Some(n) = args.size {
                ensure!(n == 1, "the direct link has size 1, got {n}");
            }
            Scenario::direct()
        }
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn cmd_outage(args: &RunArgs) -> Result<String> {
    args.only(
        Kind::Outage,
        &[
            "strategy",
            "size",
            "receiver-l",
            "snr-db",
            "rate",
            "trials",
            "seed",
            "confidence",
            "workers",
            "mode",
            "reciprocal",
            "crn",
        ],
    )?;
    let scenario = outage_scenario(args)?;
    let snr_grid = parse_grid(args.snr_db.as_deref().context("--snr-db is required")?)?
        .into_iter()
        .map(SnrPoint::from_db)
        .collect::<ssaf::Result<Vec<_>>>()?;
    let rate_grid = parse_grid(args.rate.as_deref().context("--rate is required")?)?;
    let settings = McSettings {
        trials: args.trials.context("--trials is required")?,
        master_seed: args.seed.unwrap_or(0),
        confidence: args.confidence.unwrap_or(0.95),
        workers: args.workers.unwrap_or(0),
    };
    let spec = SweepSpec {
        scenario,
        snr_grid,
        rate_grid,
        settings,
        common_random_numbers: args.crn,
    };
    log::info!(
        "{} size {} over {} SNR x {} rate points, {} trials each",
        scenario.strategy,
        scenario.size,
        spec.snr_grid.len(),
        spec.rate_grid.len(),
        settings.trials
    );
    let points = run_sweep(&spec)?;

    let mut csv = String::from(OUTAGE_HEADER);
    csv.push('\n');
    let receiver = scenario
        .receiver_l
        .map(|l| l.to_string())
        .unwrap_or_default();
    for p in points {
        let e = p.estimate;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            scenario.strategy,
            scenario.size,
            receiver,
            p.snr.db(),
            p.rate_bpcu,
            e.trials,
            e.failures,
            e.p_hat,
            e.ci_low,
            e.ci_high,
            p.seed
        )?;
    }
    Ok(csv)
}

pub fn cmd_dmt(args: &RunArgs) -> Result<String> {
    args.only(Kind::Dmt, &["size", "r-grid"])?;
    let n = args.size()?;
    ensure!(n >= 1, "--size must be at least 1");
    let mut csv = String::from(DMT_HEADER);
    csv.push('\n');
    for r in args.r_grid()? {
        writeln!(
            csv,
            "{},{},{},{},{}",
            r,
            miso_bound(n, r),
            cbc_ssaf_lower_bound(n, r),
            cma_ssaf_dmt(n, r),
            direct_dmt(r)
        )?;
    }
    Ok(csv)
}

pub fn cmd_exponent(args: &RunArgs) -> Result<String> {
    args.only(
        Kind::Exponent,
        &["model", "size", "receiver-l", "r-grid", "reading"],
    )?;
    let model = args.model.context("--model is required")?;
    let n = args.size()?;
    let grid = args.r_grid()?;
    let mut csv = String::from(EXPONENT_HEADER);
    csv.push('\n');
    match model {
        ModelArg::Cbc => {
            ensure!(
                args.reading.is_none(),
                "--reading only applies to the cma model"
            );
            let l = args.receiver_l.unwrap_or(n.div_ceil(2));
            for r in grid {
                let d = cbc_outage_exponent(n, l, r)?.d_o;
                let bound = cbc_ssaf_lower_bound(n, r);
                push_exponent_row(&mut csv, "cbc", n, &l.to_string(), r, d, bound)?;
            }
        }
        ModelArg::Cma => {
            ensure!(
                args.receiver_l.is_none(),
                "--receiver-l only applies to the cbc model"
            );
            let reading = match args.reading.unwrap_or(ReadingArg::Summed) {
                ReadingArg::Summed => CmaReading::Summed,
                ReadingArg::SingleSlot => CmaReading::SingleSlot,
            };
            for r in grid {
                let d = cma_outage_exponent_with(n, r, reading)?.d_o;
                push_exponent_row(&mut csv, "cma", n, "", r, d, cma_ssaf_dmt(n, r))?;
            }
        }
    }
    Ok(csv)
}

fn push_exponent_row(
    csv: &mut String,
    model: &str,
    n: usize,
    l: &str,
    r: f64,
    d: f64,
    bound: f64,
) -> Result<()> {
    let gap = d - bound;
    if gap < -1e-6 {
        log::warn!("{model} n={n} r={r}: numeric exponent {d} is below the bound {bound}");
    }
    writeln!(csv, "{model},{n},{l},{r},{d},{bound},{gap}")?;
    Ok(())
}

pub fn cmd_overhead(args: &RunArgs) -> Result<String> {
    args.only(
        Kind::Overhead,
        &["size", "probe-len", "feedback-len", "data-len"],
    )?;
    let n = args.size()?;
    let probe = args.probe_len.unwrap_or(1.0);
    let feedback = args.feedback_len.unwrap_or(1.0);
    let data = args.data_len.context("--data-len is required")?;
    let frac = overhead_fraction(n, probe, feedback, data)?;
    Ok(format!(
        "{OVERHEAD_HEADER}\n{n},{probe},{feedback},{data},{frac}\n"
    ))
}

/// Writes `text` to `out`, or to stdout when `out` is `None`.
pub fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
        }
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}
