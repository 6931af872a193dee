//! Transmission patterns, the distortion bounds `L` and `U`, efficient-policy
//! search and the Aurelian construction.
//!
//! A pattern `t = (t_1, ..., t_q)` sends bit `k` of the message `t_k` times.
//! With Chernoff information `C` and mean absolute log-likelihood ratio `B`,
//! every pattern satisfies `L(t) <= D(t) <= U(t)` where
//!
//! ```text
//! U(t) =       sum_k 4^-k exp(-t_k C)
//! L(t) = 1/4 * sum_k 4^-k exp(-t_k B)
//! ```
//!
//! Both sums run over all `k >= 1`; bits past `q` contribute the closed-form
//! tail `4^-q / 3`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::channel::InfoConstants;
use crate::error::{Error, Result};

const LN_4: f64 = std::f64::consts::LN_2 * 2.0;

/// Largest number of patterns an exhaustive scan will visit.
pub const ENUMERATION_LIMIT: f64 = 1e7;

const SCAN_CHUNK: usize = 4096;

/// Repetition counts per bit index, with trailing zeros trimmed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TransmissionPattern {
    counts: Vec<u64>,
}

impl TransmissionPattern {
    pub fn new(mut counts: Vec<u64>) -> Self {
        while counts.last() == Some(&0) {
            counts.pop();
        }
        TransmissionPattern { counts }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// `(t_1, ..., t_q)`.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Repetitions of bit `k` (1-based); zero past `q`.
    pub fn get(&self, k: usize) -> u64 {
        assert!(k >= 1, "bit indices start at 1");
        self.counts.get(k - 1).copied().unwrap_or(0)
    }

    /// Total number of transmissions.
    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Last transmitted bit index, 0 for the empty pattern.
    pub fn q(&self) -> usize {
        self.counts.len()
    }

    /// Comma-separated counts padded with zeros to `depth` entries.
    pub fn padded(&self, depth: usize) -> String {
        let mut parts: Vec<String> = self.counts.iter().map(u64::to_string).collect();
        while parts.len() < depth {
            parts.push("0".into());
        }
        parts.join(",")
    }

    /// Pattern with one more transmission of bit `k`.
    pub fn incremented(&self, k: usize) -> Self {
        let mut counts = self.counts.clone();
        if counts.len() < k {
            counts.resize(k, 0);
        }
        counts[k - 1] += 1;
        TransmissionPattern { counts }
    }

    /// Non-increasing counts.
    pub fn is_non_increasing(&self) -> bool {
        self.counts.windows(2).all(|w| w[0] >= w[1])
    }
}

impl fmt::Display for TransmissionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.padded(0))
    }
}

impl FromStr for TransmissionPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('(').trim_end_matches(')');
        if s.is_empty() {
            return Ok(Self::empty());
        }
        s.split(',')
            .map(|v| {
                v.trim()
                    .parse::<u64>()
                    .map_err(|e| Error::InvalidPattern(format!("{v:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }
}

impl From<Vec<u64>> for TransmissionPattern {
    fn from(v: Vec<u64>) -> Self {
        Self::new(v)
    }
}

fn quarter_pow(k: usize) -> f64 {
    0.25f64.powi(k as i32)
}

/// `U(t) = sum_{k>=1} 4^-k exp(-t_k C)`.
pub fn upper_bound(t: &TransmissionPattern, c: f64) -> f64 {
    exp_bound_sum(t, c)
}

/// `L(t) = 1/4 sum_{k>=1} 4^-k exp(-t_k B)`.
pub fn lower_bound(t: &TransmissionPattern, b: f64) -> f64 {
    0.25 * exp_bound_sum(t, b)
}

fn exp_bound_sum(t: &TransmissionPattern, rate: f64) -> f64 {
    let head: f64 = t
        .counts
        .iter()
        .enumerate()
        .map(|(i, &tk)| quarter_pow(i + 1) * (-(tk as f64) * rate).exp())
        .sum();
    head + quarter_pow(t.q()) / 3.0
}

/// `ln U(t)`, evaluated by log-sum-exp so deep patterns do not underflow.
pub fn ln_upper_bound(t: &TransmissionPattern, c: f64) -> f64 {
    ln_exp_bound_sum(t, c)
}

/// `ln L(t)`.
pub fn ln_lower_bound(t: &TransmissionPattern, b: f64) -> f64 {
    ln_exp_bound_sum(t, b) - LN_4
}

fn ln_exp_bound_sum(t: &TransmissionPattern, rate: f64) -> f64 {
    let terms = t
        .counts
        .iter()
        .enumerate()
        .map(|(i, &tk)| -((i + 1) as f64) * LN_4 - tk as f64 * rate)
        .chain(std::iter::once(-(t.q() as f64) * LN_4 - 3f64.ln()));
    log_sum_exp(terms)
}

pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `binom(n + depth - 1, depth - 1)` as a float, saturating gracefully.
pub fn pattern_count(n: u64, depth: usize) -> f64 {
    let k = depth.saturating_sub(1) as u64;
    (1..=k).fold(1.0, |acc, i| acc * (n + i) as f64 / i as f64)
}

/// Streams all compositions of `n` into `depth` non-negative parts in
/// descending lexicographic order, starting at `(n, 0, ..., 0)`.
#[derive(Debug, Clone)]
pub struct Compositions {
    current: Option<Vec<u64>>,
}

impl Compositions {
    pub fn new(n: u64, depth: usize) -> Self {
        assert!(depth >= 1, "depth must be positive");
        let mut first = vec![0; depth];
        first[0] = n;
        Compositions { current: Some(first) }
    }
}

impl Iterator for Compositions {
    type Item = Vec<u64>;

    fn next(&mut self) -> Option<Vec<u64>> {
        let current = self.current.take()?;
        let d = current.len();
        if let Some(i) = (0..d - 1).rev().find(|&i| current[i] > 0) {
            let mut next = current.clone();
            let tail: u64 = next[i + 1..].iter().sum();
            next[i] -= 1;
            next[i + 1] = tail + 1;
            for v in &mut next[i + 2..] {
                *v = 0;
            }
            self.current = Some(next);
        }
        Some(current)
    }
}

fn check_enumeration(n: u64, depth: usize) -> Result<()> {
    let count = pattern_count(n, depth);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Every pattern with budget `n` over the first `max_depth` bits.
pub fn enumerate_patterns(n: u64, max_depth: usize) -> Result<Vec<TransmissionPattern>> {
    if max_depth == 0 {
        return Err(Error::InvalidPattern("max_depth must be at least 1".into()));
    }
    check_enumeration(n, max_depth)?;
    Ok(Compositions::new(n, max_depth).map(TransmissionPattern::new).collect())
}

/// How `efficient_search` explores the pattern space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Scan every composition over the first `max_depth` bits.
    Exhaustive { max_depth: usize },
    /// Allocate transmissions one at a time to the largest decrease of `U`,
    /// optionally restricted to the first `max_depth` bits.
    Greedy { max_depth: Option<usize> },
}

/// A pattern minimizing `U` under the budget `n`.
pub fn efficient_search(n: u64, c: f64, mode: SearchMode) -> Result<TransmissionPattern> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidConfig(format!("Chernoff information {c} must be positive")));
    }
    match mode {
        SearchMode::Exhaustive { max_depth } => exhaustive_search(n, c, max_depth),
        SearchMode::Greedy { max_depth } => Ok(greedy_fill(TransmissionPattern::empty(), n, c, max_depth)),
    }
}

fn exhaustive_search(n: u64, c: f64, max_depth: usize) -> Result<TransmissionPattern> {
    if max_depth == 0 {
        return Err(Error::InvalidPattern("max_depth must be at least 1".into()));
    }
    check_enumeration(n, max_depth)?;
    let mut stream = Compositions::new(n, max_depth);
    let mut best: Option<(f64, usize, Vec<u64>)> = None;
    let mut offset = 0usize;
    loop {
        let chunk: Vec<Vec<u64>> = stream.by_ref().take(SCAN_CHUNK).collect();
        if chunk.is_empty() {
            break;
        }
        let local = chunk
            .par_iter()
            .enumerate()
            .map(|(i, t)| (upper_bound(&TransmissionPattern::new(t.clone()), c), offset + i))
            .reduce_with(|a, b| if better(a, b) { a } else { b })
            .expect("chunk is non-empty");
        if best.as_ref().is_none_or(|(u, i, _)| better(local, (*u, *i))) {
            best = Some((local.0, local.1, chunk[local.1 - offset].clone()));
        }
        offset += chunk.len();
    }
    let (_, _, counts) = best.expect("at least one composition exists");
    Ok(TransmissionPattern::new(counts))
}

// lower U wins; earlier enumeration position breaks ties
fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Adds `extra` transmissions to `start`, each to the index with the largest
/// decrease of `U` (smallest index on ties).
///
/// The decrease from one more transmission of bit `k` is
/// `4^-k exp(-t_k C) (1 - e^-C)`, compared here in the log domain.
pub fn greedy_fill(start: TransmissionPattern, extra: u64, c: f64, max_depth: Option<usize>) -> TransmissionPattern {
    let mut counts = start.counts;
    for _ in 0..extra {
        let candidates = match max_depth {
            Some(d) => (counts.len() + 1).min(d),
            None => counts.len() + 1,
        };
        let mut best_k = 0;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..candidates {
            let tk = counts.get(k).copied().unwrap_or(0);
            let score = -((k + 1) as f64) * LN_4 - tk as f64 * c;
            if score > best_score {
                best_score = score;
                best_k = k;
            }
        }
        if best_k == counts.len() {
            counts.push(1);
        } else {
            counts[best_k] += 1;
        }
    }
    TransmissionPattern::new(counts)
}

/// Depth of the Aurelian staircase: the largest `q` with `r q (q+1) / 2 <= n`,
/// i.e. `floor(sqrt(2n/r + 1/4) - 1/2)`.
pub fn aurelian_depth(n: u64, r: u64) -> u64 {
    let mut q = ((2.0 * n as f64 / r as f64 + 0.25).sqrt() - 0.5).floor().max(0.0) as u64;
    let base = |q: u64| r as u128 * q as u128 * (q as u128 + 1) / 2;
    while base(q) > n as u128 {
        q -= 1;
    }
    while base(q + 1) <= n as u128 {
        q += 1;
    }
    q
}

/// The Aurelian policy for budget `n`.
///
/// The base allocation is the staircase `t_k = (q - k + 1) r`, totalling
/// `r q (q+1) / 2`; the remaining transmissions are placed by [`greedy_fill`].
pub fn aurelian(n: u64, constants: &InfoConstants) -> Result<TransmissionPattern> {
    let r = constants.r;
    if n < r {
        return Err(Error::BudgetBelowUnit { n, r });
    }
    let q = aurelian_depth(n, r);
    let base: Vec<u64> = (0..q).map(|j| (q - j) * r).collect();
    let used: u64 = base.iter().sum();
    Ok(greedy_fill(TransmissionPattern::new(base), n - used, constants.c, None))
}

/// Structural checks every `U`-minimizer must pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EfficiencyReport {
    /// `t_k >= 1` for every `k <= q`.
    pub no_gap: bool,
    /// `(k2-k1) r - 1 <= t_k1 - t_k2 <= (k2-k1) r + 1` for all `k1 < k2 <= q`.
    pub spacing: bool,
}

impl EfficiencyReport {
    pub fn passed(&self) -> bool {
        self.no_gap && self.spacing
    }
}

/// Checks the gap-free and spacing properties with the unfloored `r_real = ln 4 / C`.
pub fn check_efficient_properties(t: &TransmissionPattern, r_real: f64) -> EfficiencyReport {
    let counts = t.counts();
    let no_gap = counts.iter().all(|&c| c >= 1);
    let mut spacing = true;
    'outer: for k1 in 0..counts.len() {
        for k2 in k1 + 1..counts.len() {
            let diff = counts[k1] as f64 - counts[k2] as f64;
            let centre = (k2 - k1) as f64 * r_real;
            if diff < centre - 1.0 || diff > centre + 1.0 {
                spacing = false;
                break 'outer;
            }
        }
    }
    EfficiencyReport { no_gap, spacing }
}

/// Bounds on the first count and on the depth of an efficient pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorollaryReport {
    /// `t_1 <= q (r + 1)`.
    pub first_count: bool,
    /// `q <= sqrt(2n + 1/2) - 1/4`.
    pub depth: bool,
}

impl CorollaryReport {
    pub fn passed(&self) -> bool {
        self.first_count && self.depth
    }
}

pub fn corollary_bounds(t: &TransmissionPattern, r: u64) -> CorollaryReport {
    let q = t.q() as u64;
    let first_count = t.get(1) <= q * (r + 1);
    let depth = q as f64 <= (2.0 * t.n() as f64 + 0.5).sqrt() - 0.25;
    CorollaryReport { first_count, depth }
}
