//! Annealed generative optimizer over the feasible set of a constraint system.
//!
//! Each iteration draws a training set from every bitstring seen so far,
//! weighted by a Boltzmann factor at a falling temperature, takes one
//! training sweep on the MPS and samples a fresh batch from it. When the
//! batch minimum stops improving the MPS is reset to the uniform state and a
//! few training samples are swapped for samples from that state.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::time::{Duration, Instant};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cmps::{constraints_to_mps, Bits, ConstrainedMPS, MpsError, TrainStats, Truncation};
use crate::indexing::ConstraintSystem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error(transparent)]
    Mps(#[from] MpsError),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cost function failed: {0}")]
    Cost(String),
}

pub type OptimizerResult<T> = Result<T, OptimizerError>;

/// Initial temperature of the annealing schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialTemperature {
    /// Standard deviation of the costs of the first sample batch.
    Auto,
    Fixed(f64),
}

impl fmt::Display for InitialTemperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialTemperature::Auto => write!(f, "auto"),
            InitialTemperature::Fixed(t) => write!(f, "{}", format_g17(*t)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub t_max: usize,
    pub cutoff: f64,
    pub learning_rate: f64,
    pub n_samples: usize,
    pub t_init: InitialTemperature,
    pub replace_count: usize,
    pub seed: u64,
    /// Bond dimension cap applied with the cutoff; `None` is unbounded.
    pub max_bond: Option<usize>,
    /// Soft wall-clock budget, checked between iterations.
    pub time_limit: Option<Duration>,
    /// Store measured wall time in the history; otherwise it reads 0.
    pub record_time: bool,
}

impl OptimizerConfig {
    /// 75 iterations, cutoff `1e-4`, rate 0.05, 400 samples, `T_init = 2.5 N`, 40 replacements.
    pub fn paper_defaults(n: usize) -> Self {
        OptimizerConfig {
            t_max: 75,
            cutoff: 1e-4,
            learning_rate: 0.05,
            n_samples: 400,
            t_init: InitialTemperature::Fixed(2.5 * n as f64),
            replace_count: 40,
            seed: 0,
            max_bond: None,
            time_limit: None,
            record_time: false,
        }
    }

    pub fn validate(&self) -> OptimizerResult<()> {
        let bad = |msg: String| Err(OptimizerError::InvalidConfig(msg));
        if self.t_max == 0 {
            return bad("t_max must be at least 1".into());
        }
        if self.n_samples == 0 {
            return bad("the sample count must be positive".into());
        }
        if self.replace_count == 0 || self.replace_count > self.n_samples {
            return bad(format!(
                "replace count {} outside 1..={}",
                self.replace_count, self.n_samples
            ));
        }
        if !(0.0..1.0).contains(&self.cutoff) {
            return bad(format!("cutoff {} outside [0, 1)", self.cutoff));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if let InitialTemperature::Fixed(t) = self.t_init {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("initial temperature {t} must be positive"));
            }
        }
        if self.max_bond == Some(0) {
            return bad("max bond must be positive".into());
        }
        Ok(())
    }

    fn truncation(&self) -> Truncation {
        Truncation { cutoff: self.cutoff, max_dim: self.max_bond.unwrap_or(usize::MAX) }
    }
}

/// Every bitstring seen so far with its cost, evaluated once.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleDictionary {
    entries: BTreeMap<Bits, f64>,
}

impl SampleDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, x: &[u8]) -> Option<f64> {
        self.entries.get(x).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Bits, f64)> {
        self.entries.iter().map(|(k, &v)| (k, v))
    }

    /// Cost of `x`, calling `cost` only for unseen bitstrings.
    pub fn cost_of<F, E>(&mut self, x: &[u8], cost: &mut F) -> OptimizerResult<f64>
    where
        F: FnMut(&[u8]) -> Result<f64, E>,
        E: fmt::Display,
    {
        if let Some(c) = self.entries.get(x) {
            return Ok(*c);
        }
        let c = cost(x).map_err(|e| OptimizerError::Cost(e.to_string()))?;
        if c.is_nan() {
            return Err(OptimizerError::Cost(format!("cost of {x:?} is NaN")));
        }
        self.entries.insert(x.to_vec(), c);
        Ok(c)
    }

    /// Lowest cost, lexicographically smallest bitstring on ties.
    pub fn best(&self) -> Option<(&Bits, f64)> {
        self.iter().fold(None, |best, (k, c)| match best {
            Some((_, bc)) if bc <= c => best,
            _ => Some((k, c)),
        })
    }
}

/// `exp(-(C(x) - C_min)/T)` normalized, in dictionary key order.
pub fn boltzmann_weights(dict: &SampleDictionary, temperature: f64) -> Vec<f64> {
    assert!(temperature > 0.0, "temperature must be positive");
    let c_min = dict.iter().map(|(_, c)| c).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = dict.iter().map(|(_, c)| (-(c - c_min) / temperature).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// `T_init / t` for `t >= 1`.
pub fn anneal_temperature(t_init: f64, t: usize) -> f64 {
    assert!(t >= 1, "iterations count from 1");
    t_init / t as f64
}

/// One forward and backward training sweep with truncation at `cutoff`.
pub fn train_step(
    mps: &mut ConstrainedMPS,
    trainset: &[Bits],
    cutoff: f64,
    learning_rate: f64,
) -> OptimizerResult<TrainStats> {
    Ok(mps.train_sweep(trainset, learning_rate, Truncation::with_cutoff(cutoff)?)?)
}

/// Replaces `replace_count` uniformly chosen positions of `current` with the first entries of `fresh`.
pub fn select<R: Rng + ?Sized>(
    current: &[Bits],
    fresh: &[Bits],
    replace_count: usize,
    rng: &mut R,
) -> Vec<Bits> {
    assert!(replace_count <= current.len(), "replace count exceeds the training set");
    assert!(replace_count <= fresh.len(), "not enough fresh samples");
    let mut out = current.to_vec();
    for (k, pos) in sample(rng, current.len(), replace_count).into_iter().enumerate() {
        out[pos] = fresh[k].clone();
    }
    out
}

/// One row of the run history.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    pub temperature: f64,
    /// Minimum cost of the batch sampled in this iteration.
    pub c_min: f64,
    pub c_cum_min: f64,
    pub max_bond: usize,
    pub dict_size: usize,
    pub wall_ms: f64,
    /// Whether the state was reset before training.
    pub reset: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunHistory {
    pub records: Vec<IterationRecord>,
}

impl RunHistory {
    pub const CSV_HEADER: &'static str = "t,T,c_min,c_cum_min,max_bond,dict_size,wall_ms";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.t,
                format_g17(r.temperature),
                format_g17(r.c_min),
                format_g17(r.c_cum_min),
                r.max_bond,
                r.dict_size,
                format_g17(r.wall_ms)
            )
            .unwrap();
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub best_x: Bits,
    pub best_cost: f64,
    pub history: RunHistory,
    pub dictionary: SampleDictionary,
    /// Initial temperature actually used (resolved when `auto`).
    pub t_init: f64,
}

/// Runs the optimizer with an infallible cost function.
pub fn solve<F>(cost: F, sys: &ConstraintSystem, cfg: &OptimizerConfig) -> OptimizerResult<SolveOutcome>
where
    F: FnMut(&[u8]) -> f64,
{
    let mut cost = cost;
    try_solve(|x: &[u8]| Ok::<f64, std::convert::Infallible>(cost(x)), sys, cfg)
}

/// Runs the optimizer; the first cost failure aborts the run.
pub fn try_solve<F, E>(mut cost: F, sys: &ConstraintSystem, cfg: &OptimizerConfig) -> OptimizerResult<SolveOutcome>
where
    F: FnMut(&[u8]) -> Result<f64, E>,
    E: fmt::Display,
{
    cfg.validate()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let trunc = cfg.truncation();

    let mut psi0 = constraints_to_mps(sys, sys.n_vars() - 1)?;
    psi0.canonicalize(0, Truncation::exact())?;
    let mut dict = SampleDictionary::new();

    let batch = psi0.sample(cfg.n_samples, &mut rng)?;
    let costs = batch
        .iter()
        .map(|x| dict.cost_of(x, &mut cost))
        .collect::<OptimizerResult<Vec<f64>>>()?;
    let t_init = match cfg.t_init {
        InitialTemperature::Fixed(t) => t,
        InitialTemperature::Auto => {
            let sd = std_dev(&costs);
            if sd > 0.0 && sd.is_finite() { sd } else { 1.0 }
        }
    };
    let mut c_prev = f64::INFINITY;
    let mut c_cur = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut c_cum = c_cur;
    let mut psi = psi0.clone();
    let mut history = RunHistory::default();

    for t in 1..=cfg.t_max {
        let iteration_start = Instant::now();
        let temperature = anneal_temperature(t_init, t);
        let keys: Vec<&Bits> = dict.iter().map(|(k, _)| k).collect();
        let weights = boltzmann_weights(&dict, temperature);
        let pick = WeightedIndex::new(&weights).map_err(|e| OptimizerError::Cost(e.to_string()))?;
        let mut trainset: Vec<Bits> = (0..cfg.n_samples).map(|_| keys[pick.sample(&mut rng)].clone()).collect();

        let reset = c_cur >= c_prev;
        if reset {
            psi = psi0.clone();
            let fresh = psi.sample(cfg.replace_count, &mut rng)?;
            trainset = select(&trainset, &fresh, cfg.replace_count, &mut rng);
        }
        psi.train_sweep(&trainset, cfg.learning_rate, trunc)?;
        psi.move_to_bond(0, Truncation::exact())?;

        let batch = psi.sample(cfg.n_samples, &mut rng)?;
        let mut batch_min = f64::INFINITY;
        for x in &batch {
            batch_min = batch_min.min(dict.cost_of(x, &mut cost)?);
        }
        c_prev = c_cur;
        c_cur = batch_min;
        c_cum = c_cum.min(c_cur);

        let wall_ms = if cfg.record_time {
            iteration_start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        history.records.push(IterationRecord {
            t,
            temperature,
            c_min: c_cur,
            c_cum_min: c_cum,
            max_bond: psi.max_bond_dimension(),
            dict_size: dict.len(),
            wall_ms,
            reset,
        });
        if cfg.time_limit.is_some_and(|limit| started.elapsed() >= limit) {
            break;
        }
    }

    let (best_x, best_cost) = dict.best().map(|(k, c)| (k.clone(), c)).expect("nonempty dictionary");
    Ok(SolveOutcome { best_x, best_cost, history, dictionary: dict, t_init })
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// `printf("%.17g")`: 17 significant digits, trailing zeros removed.
pub fn format_g17(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{v:.*}", (16 - exp) as usize)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
