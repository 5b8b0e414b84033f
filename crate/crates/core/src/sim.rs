//! Monte Carlo trials of the gossip engine.
//!
//! A trial starts from `(x0, 0)`, samples one broadcaster per iteration and
//! stops on the first iteration satisfying its [`StopRule`], or at
//! `max_iters`. Trial `i` of a campaign draws everything, including its
//! initial values, from `ChaCha8Rng::seed_from_u64(base_seed + i)`, so two
//! schemes run with one base seed see identical initial values and
//! broadcaster sequences.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::graph::DiGraph;
use crate::protocol::{GossipState, ParamScheme};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("slope initialization needs node coordinates")]
    MissingCoords,
    #[error("unknown init kind `{0}` (expected uniform, gaussian, spike or slope)")]
    UnknownInit(String),
    #[error("invalid trial configuration: {0}")]
    InvalidConfig(String),
    #[error("initial vector has length {got}, graph has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
}

/// How initial node values are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitKind {
    /// Independent, uniform on `[0, 1)`.
    Uniform,
    /// Independent standard normal.
    Gaussian,
    /// One uniformly chosen node holds 1, all others 0.
    Spike,
    /// `x_i = coord_x(i) + coord_y(i)`.
    Slope,
}

impl InitKind {
    pub const ALL: [InitKind; 4] = [Self::Uniform, Self::Gaussian, Self::Spike, Self::Slope];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Gaussian => "gaussian",
            Self::Spike => "spike",
            Self::Slope => "slope",
        }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "gaussian" | "normal" => Ok(Self::Gaussian),
            "spike" => Ok(Self::Spike),
            "slope" => Ok(Self::Slope),
            _ => Err(SimError::UnknownInit(s.to_string())),
        }
    }
}

pub fn init_values<R: Rng + ?Sized>(kind: InitKind, g: &DiGraph, rng: &mut R) -> Result<Vec<f64>, SimError> {
    let n = g.n();
    Ok(match kind {
        InitKind::Uniform => (0..n).map(|_| rng.random::<f64>()).collect(),
        InitKind::Gaussian => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        InitKind::Spike => {
            let mut x = vec![0.0; n];
            x[rng.random_range(0..n)] = 1.0;
            x
        }
        InitKind::Slope => g
            .coords()
            .ok_or(SimError::MissingCoords)?
            .iter()
            .map(|(a, b)| a + b)
            .collect(),
    })
}

/// `(1/n) |x - c 1|^2`.
fn mean_sq_dev(x: &[f64], c: f64) -> f64 {
    x.iter().map(|v| (v - c).powi(2)).sum::<f64>() / x.len() as f64
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Squared error to the initial average.
pub fn r_metric(x: &[f64], initial_mean: f64) -> f64 {
    mean_sq_dev(x, initial_mean)
}

/// Squared deviation from the current average.
pub fn q_metric(x: &[f64]) -> f64 {
    mean_sq_dev(x, mean(x))
}

/// When a trial is declared converged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// `|z(t) - z(t-1)|_2 <= threshold` with `z = [x; y]`.
    StepChange { threshold: f64 },
    /// `q(t) <= q_tol`.
    Deviation { q_tol: f64 },
}

impl StopRule {
    pub const DEFAULT_THRESHOLD: f64 = 1e-5;

    /// Deviation rule on the same scale as a step-change threshold.
    pub fn deviation_for(threshold: f64) -> Self {
        Self::Deviation {
            q_tol: threshold * threshold,
        }
    }
}

impl Default for StopRule {
    fn default() -> Self {
        Self::StepChange {
            threshold: Self::DEFAULT_THRESHOLD,
        }
    }
}

/// Which iterations of `r(t)`, `q(t)` are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeriesMode {
    /// No series; only final values.
    None,
    /// Every iteration up to [`DENSE_PREFIX`], then a geometric grid.
    #[default]
    Thinned,
    /// Every iteration.
    Full,
}

/// Iterations recorded densely before thinning starts.
pub const DENSE_PREFIX: u64 = 10_000;
/// Ratio between consecutive recorded iterations after the dense prefix.
pub const THINNING_RATIO: f64 = 1.01;

/// The recording grid shared by every thinned series.
fn next_record(t: u64) -> u64 {
    if t < DENSE_PREFIX {
        t + 1
    } else {
        ((t as f64 * THINNING_RATIO).ceil() as u64).max(t + 1)
    }
}

#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub stop: StopRule,
    pub max_iters: u64,
    /// The stop rule is evaluated only at multiples of `stride`. A larger
    /// stride can delay a declaration but never cause one.
    pub stride: u64,
    pub series: SeriesMode,
    /// Checks `1^T x + 1^T y` every iteration; a drift beyond `1e-9`
    /// relative fails the trial. Meaningful for unbiased schemes only.
    pub check_mass: bool,
    /// Left weights `w1`; when set each record carries `w1^T x0`.
    pub predictor: Option<Vec<f64>>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            stop: StopRule::default(),
            max_iters: 10_000_000,
            stride: 1,
            series: SeriesMode::Thinned,
            check_mass: false,
            predictor: None,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        match self.stop {
            StopRule::StepChange { threshold } if !(threshold > 0.0) => return bad("threshold must be positive"),
            StopRule::Deviation { q_tol } if !(q_tol > 0.0) => return bad("q tolerance must be positive"),
            _ => {}
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if self.stride == 0 {
            return bad("stride must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// First iteration at which the stop rule held, if any.
    pub converged_at: Option<u64>,
    /// Iterations executed.
    pub iterations: u64,
    /// Mean of `x` when the trial ended.
    pub consensus_value: f64,
    pub initial_mean: f64,
    pub r_final: f64,
    pub q_final: f64,
    /// Iterations at which the series were sampled (0 is the initial state).
    pub series_t: Vec<u64>,
    pub r_series: Vec<f64>,
    pub q_series: Vec<f64>,
    pub seed: Option<u64>,
    pub predicted: Option<f64>,
    /// Largest observed `|mass(t) - mass(0)|` when mass checking is on.
    pub max_mass_drift: Option<f64>,
    pub failure: Option<String>,
}

impl TrialRecord {
    /// Broadcasts spent, counting a non-converged trial at its full length.
    pub fn broadcasts(&self) -> u64 {
        self.converged_at.unwrap_or(self.iterations)
    }
}

/// Runs one trial from `(x0, 0)`.
pub fn run_trial<R: Rng + ?Sized>(
    scheme: &ParamScheme,
    x0: &[f64],
    config: &TrialConfig,
    rng: &mut R,
) -> Result<TrialRecord, SimError> {
    config.validate()?;
    if x0.len() != scheme.n() {
        return Err(SimError::LengthMismatch {
            expected: scheme.n(),
            got: x0.len(),
        });
    }
    let initial_mean = mean(x0);
    let mass0: f64 = x0.iter().sum();
    let mass_tol = 1e-9 * mass0.abs().max(x0.iter().map(|v| v.abs()).sum::<f64>()).max(f64::MIN_POSITIVE);
    let predicted = config
        .predictor
        .as_ref()
        .map(|w| w.iter().zip(x0).map(|(a, b)| a * b).sum());

    let mut st = GossipState::new(x0.to_vec());
    let mut rec = TrialRecord {
        converged_at: None,
        iterations: 0,
        consensus_value: initial_mean,
        initial_mean,
        r_final: 0.0,
        q_final: 0.0,
        series_t: Vec::new(),
        r_series: Vec::new(),
        q_series: Vec::new(),
        seed: None,
        predicted,
        max_mass_drift: config.check_mass.then_some(0.0),
        failure: None,
    };
    let record = |rec: &mut TrialRecord, t: u64, x: &[f64]| {
        rec.series_t.push(t);
        rec.r_series.push(r_metric(x, initial_mean));
        rec.q_series.push(q_metric(x));
    };
    if config.series != SeriesMode::None {
        record(&mut rec, 0, &st.x);
    }
    let mut next = next_record(0);

    for t in 1..=config.max_iters {
        let (_, change_sq) = st.step(scheme, rng);
        if config.check_mass {
            let drift = (st.mass() - mass0).abs();
            let worst = rec.max_mass_drift.get_or_insert(0.0);
            *worst = worst.max(drift);
            if drift > mass_tol {
                rec.failure = Some(format!("mass drift {drift:e} at iteration {t}"));
                rec.iterations = t;
                break;
            }
        }
        let stop = t % config.stride == 0
            && match config.stop {
                StopRule::StepChange { threshold } => change_sq.sqrt() <= threshold,
                StopRule::Deviation { q_tol } => q_metric(&st.x) <= q_tol,
            };
        let keep = match config.series {
            SeriesMode::None => false,
            SeriesMode::Full => true,
            SeriesMode::Thinned => t == next || stop || t == config.max_iters,
        };
        if keep {
            record(&mut rec, t, &st.x);
        }
        if t >= next {
            next = next_record(t);
        }
        rec.iterations = t;
        if stop {
            rec.converged_at = Some(t);
            break;
        }
    }

    rec.consensus_value = mean(&st.x);
    rec.r_final = r_metric(&st.x, initial_mean);
    rec.q_final = q_metric(&st.x);
    Ok(rec)
}

/// Per-trial generator of a campaign.
pub fn trial_rng(base_seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(trial))
}

/// Summary statistics over a set of trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub trials: usize,
    pub converged: usize,
    pub failed: usize,
    pub mean_broadcasts: f64,
    pub median_broadcasts: f64,
    pub mean_q_final: f64,
    pub mean_r_final: f64,
}

impl Aggregate {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let trials = records.len();
        let nf = trials.max(1) as f64;
        let mut b: Vec<f64> = records.iter().map(|r| r.broadcasts() as f64).collect();
        b.sort_by(f64::total_cmp);
        let median = match trials {
            0 => f64::NAN,
            t if t % 2 == 1 => b[t / 2],
            t => 0.5 * (b[t / 2 - 1] + b[t / 2]),
        };
        Self {
            trials,
            converged: records.iter().filter(|r| r.converged_at.is_some()).count(),
            failed: records.iter().filter(|r| r.failure.is_some()).count(),
            mean_broadcasts: b.iter().sum::<f64>() / nf,
            median_broadcasts: median,
            mean_q_final: records.iter().map(|r| r.q_final).sum::<f64>() / nf,
            mean_r_final: records.iter().map(|r| r.r_final).sum::<f64>() / nf,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarlo {
    /// Sorted by trial index.
    pub records: Vec<TrialRecord>,
    pub aggregate: Aggregate,
}

/// Runs `trials` independent trials in parallel with seeds `base_seed + i`.
pub fn monte_carlo(
    scheme: &ParamScheme,
    g: &DiGraph,
    init: InitKind,
    trials: usize,
    config: &TrialConfig,
    base_seed: u64,
) -> Result<MonteCarlo, SimError> {
    if trials == 0 {
        return Err(SimError::InvalidConfig("trials must be at least 1".into()));
    }
    config.validate()?;
    if init == InitKind::Slope && g.coords().is_none() {
        return Err(SimError::MissingCoords);
    }
    let records = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i);
            let mut rng = trial_rng(base_seed, i);
            let x0 = init_values(init, g, &mut rng)?;
            let mut rec = run_trial(scheme, &x0, config, &mut rng)?;
            rec.seed = Some(seed);
            Ok(rec)
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let aggregate = Aggregate::from_records(&records);
    Ok(MonteCarlo { records, aggregate })
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub aggregate: Aggregate,
}

/// One campaign per grid value of the perturbation, all sharing `base_seed`.
pub fn epsilon_sweep(
    scheme: &ParamScheme,
    g: &DiGraph,
    grid: &[f64],
    init: InitKind,
    trials: usize,
    config: &TrialConfig,
    base_seed: u64,
) -> Result<Vec<SweepPoint>, SimError> {
    let series_free = TrialConfig {
        series: SeriesMode::None,
        ..config.clone()
    };
    grid.par_iter()
        .map(|&eps| {
            let s = scheme
                .with_epsilon(eps)
                .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
            let mc = monte_carlo(&s, g, init, trials, &series_free, base_seed)?;
            Ok(SweepPoint {
                epsilon: eps,
                aggregate: mc.aggregate,
            })
        })
        .collect()
}

/// Mean `r` and `q` over trials on the union of their sampling grids.
///
/// A trial that ended before a grid point contributes its last sample.
pub fn aggregate_trajectory(records: &[TrialRecord]) -> Vec<(u64, f64, f64)> {
    let mut grid: Vec<u64> = records.iter().flat_map(|r| r.series_t.iter().copied()).collect();
    grid.sort_unstable();
    grid.dedup();
    let live: Vec<&TrialRecord> = records.iter().filter(|r| !r.series_t.is_empty()).collect();
    if live.is_empty() {
        return Vec::new();
    }
    let mut cursor = vec![0usize; live.len()];
    let nf = live.len() as f64;
    grid.into_iter()
        .map(|t| {
            let (mut r, mut q) = (0.0, 0.0);
            for (rec, c) in live.iter().zip(cursor.iter_mut()) {
                while *c + 1 < rec.series_t.len() && rec.series_t[*c + 1] <= t {
                    *c += 1;
                }
                r += rec.r_series[*c];
                q += rec.q_series[*c];
            }
            (t, r / nf, q / nf)
        })
        .collect()
}

/// Floats with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_comment<W: Write>(w: &mut W, header: &[String]) -> io::Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

pub const SWEEP_HEADER: &str = "epsilon,mean_broadcasts,median_broadcasts,mean_q_final,mean_r_final,trials";

/// Writes sweep rows; `analytic`, when given, adds an `analytic_lambda2`
/// column aligned with `points`.
pub fn write_sweep_csv<W: Write>(
    w: &mut W,
    header: &[String],
    points: &[SweepPoint],
    analytic: Option<&[f64]>,
) -> io::Result<()> {
    write_comment(w, header)?;
    match analytic {
        Some(_) => writeln!(w, "{SWEEP_HEADER},analytic_lambda2")?,
        None => writeln!(w, "{SWEEP_HEADER}")?,
    }
    for (i, p) in points.iter().enumerate() {
        let a = &p.aggregate;
        write!(
            w,
            "{},{},{},{},{},{}",
            fmt_float(p.epsilon),
            fmt_float(a.mean_broadcasts),
            fmt_float(a.median_broadcasts),
            fmt_float(a.mean_q_final),
            fmt_float(a.mean_r_final),
            a.trials
        )?;
        if let Some(col) = analytic {
            write!(w, ",{}", fmt_float(col[i]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(w: &mut W, header: &[String], rec: &TrialRecord) -> io::Result<()> {
    write_comment(w, header)?;
    writeln!(w, "t,r,q")?;
    for ((t, r), q) in rec.series_t.iter().zip(&rec.r_series).zip(&rec.q_series) {
        writeln!(w, "{t},{},{}", fmt_float(*r), fmt_float(*q))?;
    }
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(w: &mut W, header: &[String], rows: &[(u64, f64, f64)]) -> io::Result<()> {
    write_comment(w, header)?;
    writeln!(w, "t,mean_r,mean_q")?;
    for (t, r, q) in rows {
        writeln!(w, "{t},{},{}", fmt_float(*r), fmt_float(*q))?;
    }
    Ok(())
}
