//! Per-bit Bayesian decoding and the exact distortion oracle.
//!
//! Given the transmission history, the bits of a uniform target are
//! independent Bernoulli variables, so the decoder only tracks
//! `p_k = P(X_k = 1 | history)` for each transmitted bit.

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::policy::{pattern_count, TransmissionPattern};

/// Largest number of output histograms enumerated for a single bit.
pub const HISTOGRAM_LIMIT: f64 = 1e6;

const LOG_ODDS_THRESHOLD: f64 = 1e-12;

/// One step of the posterior recursion after observing `y` for this bit:
/// `p' = f1(y) p / (f1(y) p + f0(y) (1 - p))`.
pub fn posterior_update(p: f64, y: usize, ch: &ChannelSpec) -> Result<f64> {
    debug_assert!((0.0..=1.0).contains(&p));
    let (l0, l1) = (ch.f0()[y], ch.f1()[y]);
    let denom = l1 * p + l0 * (1.0 - p);
    if denom <= 0.0 {
        return Err(Error::ImpossibleObservation(y));
    }
    if p > 0.0 && p < 1.0 && l0 > 0.0 && l1 > 0.0 && p * (1.0 - p) < LOG_ODDS_THRESHOLD {
        let logit = p.ln() - (-p).ln_1p() + l1.ln() - l0.ln();
        return Ok(1.0 / (1.0 + (-logit).exp()));
    }
    Ok(l1 * p / denom)
}

/// Posterior of each tracked bit. Untracked bits sit at the prior 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    p: Vec<f64>,
}

impl PosteriorState {
    /// Prior state tracking bits `1..=depth`.
    pub fn new(depth: usize) -> Self {
        PosteriorState { p: vec![0.5; depth] }
    }

    pub fn from_probabilities(p: Vec<f64>) -> Result<Self> {
        if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!("posterior {bad} outside [0, 1]")));
        }
        Ok(PosteriorState { p })
    }

    pub fn depth(&self) -> usize {
        self.p.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    /// Folds one observation of bit `k` (1-based) into the state.
    pub fn observe(&mut self, k: usize, y: usize, ch: &ChannelSpec) -> Result<()> {
        let slot = self
            .p
            .get_mut(k - 1)
            .ok_or_else(|| Error::InvalidConfig(format!("bit {k} beyond tracked depth")))?;
        *slot = posterior_update(*slot, y, ch)?;
        Ok(())
    }

    /// `E[X | history] = sum_k 2^-k p_k + 2^-(depth+1)`.
    pub fn mmse_estimate(&self) -> f64 {
        let mut weight = 1.0;
        let mut est = 0.0;
        for &pk in &self.p {
            weight *= 0.5;
            est += weight * pk;
        }
        est + weight * 0.5
    }

    /// `E[(X - E[X | history])^2 | history] = sum_k 4^-k p_k (1 - p_k) + 4^-depth / 12`.
    pub fn conditional_distortion(&self) -> f64 {
        let mut weight = 1.0;
        let mut total = 0.0;
        for &pk in &self.p {
            weight *= 0.25;
            total += weight * pk * (1.0 - pk);
        }
        total + weight / 12.0
    }
}

/// `E[Var(X_k | history)]` for a bit sent `t` times, by enumerating output
/// histograms (outputs are exchangeable given the bit).
pub fn exact_bit_variance(t: u64, ch: &ChannelSpec) -> Result<f64> {
    let m = ch.num_outputs();
    let count = pattern_count(t, m);
    if count > HISTOGRAM_LIMIT {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: HISTOGRAM_LIMIT,
        });
    }
    if t == 0 {
        return Ok(0.25);
    }
    let ln_fact = ln_factorials(t as usize);
    let ln0: Vec<f64> = ch.f0().iter().map(|v| v.ln()).collect();
    let ln1: Vec<f64> = ch.f1().iter().map(|v| v.ln()).collect();

    // Each histogram h contributes P(h) p (1-p) = 1/2 P(h|0) P(h|1) / (P(h|0) + P(h|1)).
    let mut total = 0.0;
    for hist in crate::policy::Compositions::new(t, m) {
        let mut log_coeff = ln_fact[t as usize];
        let mut l0 = 0.0;
        let mut l1 = 0.0;
        for (y, &cnt) in hist.iter().enumerate() {
            if cnt == 0 {
                continue;
            }
            log_coeff -= ln_fact[cnt as usize];
            l0 += cnt as f64 * ln0[y];
            l1 += cnt as f64 * ln1[y];
        }
        if l0 == f64::NEG_INFINITY || l1 == f64::NEG_INFINITY {
            continue;
        }
        let hi = l0.max(l1);
        let log_sum = hi + (-(l0 - l1).abs()).exp().ln_1p();
        total += 0.5 * (log_coeff + l0 + l1 - log_sum).exp();
    }
    Ok(total)
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// Minimum end-to-end distortion
/// `D(t) = sum_{k<=q} 4^-k E[Var(X_k | history)] + 4^-q / 12`.
pub fn exact_distortion(t: &TransmissionPattern, ch: &ChannelSpec) -> Result<f64> {
    let mut cache = BitVarianceCache::new(ch.clone());
    cache.distortion(t)
}

/// Memoizes [`exact_bit_variance`] by repetition count for a fixed channel.
#[derive(Debug, Clone)]
pub struct BitVarianceCache {
    channel: ChannelSpec,
    values: Vec<Option<f64>>,
}

impl BitVarianceCache {
    pub fn new(channel: ChannelSpec) -> Self {
        BitVarianceCache {
            channel,
            values: Vec::new(),
        }
    }

    pub fn channel(&self) -> &ChannelSpec {
        &self.channel
    }

    pub fn bit_variance(&mut self, t: u64) -> Result<f64> {
        let idx = t as usize;
        if let Some(Some(v)) = self.values.get(idx) {
            return Ok(*v);
        }
        let v = exact_bit_variance(t, &self.channel)?;
        if self.values.len() <= idx {
            self.values.resize(idx + 1, None);
        }
        self.values[idx] = Some(v);
        Ok(v)
    }

    pub fn distortion(&mut self, t: &TransmissionPattern) -> Result<f64> {
        let mut weight = 1.0;
        let mut total = 0.0;
        for &tk in t.counts() {
            weight *= 0.25;
            total += weight * self.bit_variance(tk)?;
        }
        Ok(total + weight / 12.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{b_functional, chernoff_information};
    use crate::policy::{lower_bound, upper_bound};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn random_channel(m: usize, seed: &[f64]) -> ChannelSpec {
        let norm = |v: &[f64]| {
            let s: f64 = v.iter().sum();
            let mut out: Vec<f64> = v.iter().map(|x| x / s).collect();
            let fix: f64 = out[..m - 1].iter().sum();
            out[m - 1] = 1.0 - fix;
            out
        };
        ChannelSpec::new((0..m).map(|i| i.to_string()).collect(), norm(&seed[..m]), norm(&seed[m..2 * m])).unwrap()
    }

    #[test]
    fn posterior_update_examples() {
        let noise = ChannelSpec::bsc(0.5).unwrap();
        assert_eq!(posterior_update(0.5, 1, &noise).unwrap(), 0.5);
        let ch = ChannelSpec::bac(0.9, 0.8).unwrap();
        assert_abs_diff_eq!(posterior_update(0.5, 1, &ch).unwrap(), 0.8 / 0.9, epsilon = 1e-15);
        assert_eq!(posterior_update(1.0, 0, &ch).unwrap(), 1.0);
        assert_eq!(posterior_update(0.0, 1, &ch).unwrap(), 0.0);
    }

    #[test]
    fn impossible_observation() {
        let ch = ChannelSpec::new(vec!["a".into(), "b".into()], vec![1.0, 0.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(posterior_update(0.0, 1, &ch), Err(Error::ImpossibleObservation(1)));
        assert_eq!(posterior_update(0.3, 1, &ch).unwrap(), 1.0);
    }

    #[test]
    fn log_odds_branch_is_continuous() {
        let ch = ChannelSpec::bac(0.9, 0.8).unwrap();
        let p = 1e-13;
        let direct = 0.8 * p / (0.8 * p + 0.1 * (1.0 - p));
        assert_abs_diff_eq!(posterior_update(p, 1, &ch).unwrap() / direct, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn mmse_examples() {
        assert_eq!(PosteriorState::new(3).mmse_estimate(), 0.5);
        let s = PosteriorState::from_probabilities(vec![1.0, 0.0, 1.0]).unwrap();
        assert_eq!(s.mmse_estimate(), 0.6875);
        let ones = PosteriorState::from_probabilities(vec![1.0; 52]).unwrap();
        assert_abs_diff_eq!(ones.mmse_estimate(), 1.0, epsilon = 1e-15);
        assert!(PosteriorState::from_probabilities(vec![1.2]).is_err());
    }

    #[test]
    fn conditional_distortion_examples() {
        assert_abs_diff_eq!(PosteriorState::new(0).conditional_distortion(), 1.0 / 12.0, epsilon = 1e-17);
        assert_abs_diff_eq!(PosteriorState::new(7).conditional_distortion(), 1.0 / 12.0, epsilon = 1e-16);
        let s = PosteriorState::from_probabilities(vec![1.0, 0.0, 1.0]).unwrap();
        assert_eq!(s.conditional_distortion(), 1.0 / 768.0);
    }

    #[test]
    fn bit_variance_examples() {
        let bsc = ChannelSpec::bsc(0.1).unwrap();
        assert_eq!(exact_bit_variance(0, &bsc).unwrap(), 0.25);
        let v1 = exact_bit_variance(1, &bsc).unwrap();
        assert_abs_diff_eq!(v1, 0.09, epsilon = 1e-15);
        let c = chernoff_information(&bsc).value;
        let b = b_functional(&bsc).unwrap();
        assert!(0.25 * (-b).exp() <= v1 && v1 <= (-c).exp());
    }

    #[test]
    fn bit_variance_brute_force_sequences() {
        // enumerate all 3^t output sequences and run the posterior recursion
        let ch = random_channel(3, &[0.7, 0.2, 0.1, 0.15, 0.25, 0.6]);
        for t in 0..7u32 {
            let mut total = 0.0;
            for code in 0..3usize.pow(t) {
                let seq: Vec<usize> = (0..t).map(|i| code / 3usize.pow(i) % 3).collect();
                let mut p = 0.5;
                let (mut like0, mut like1) = (1.0, 1.0);
                for &y in &seq {
                    p = posterior_update(p, y, &ch).unwrap();
                    like0 *= ch.f0()[y];
                    like1 *= ch.f1()[y];
                }
                total += 0.5 * (like0 + like1) * p * (1.0 - p);
            }
            assert_abs_diff_eq!(exact_bit_variance(t as u64, &ch).unwrap(), total, epsilon = 1e-15);
        }
    }

    #[test]
    fn histogram_budget() {
        let ch = random_channel(6, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        assert!(matches!(exact_bit_variance(200, &ch), Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn exact_distortion_examples() {
        let bsc = ChannelSpec::bsc(0.1).unwrap();
        assert_abs_diff_eq!(exact_distortion(&TransmissionPattern::empty(), &bsc).unwrap(), 1.0 / 12.0, epsilon = 1e-17);
        let d = exact_distortion(&TransmissionPattern::new(vec![1]), &bsc).unwrap();
        assert_abs_diff_eq!(d, 0.0225 + 1.0 / 48.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d, 0.043333333333333335, epsilon = 1e-15);
    }

    #[test]
    fn martingale_identity() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let m = 2 + (next() * 4.0) as usize;
            let seed: Vec<f64> = (0..2 * m).map(|_| 0.01 + next()).collect();
            let ch = random_channel(m, &seed);
            let p = next();
            let mean: f64 = (0..m)
                .map(|y| {
                    let prob = p * ch.f1()[y] + (1.0 - p) * ch.f0()[y];
                    prob * posterior_update(p, y, &ch).unwrap()
                })
                .sum();
            assert_abs_diff_eq!(mean, p, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_step_variance_contraction_on_grid() {
        for i in 1..50 {
            for j in 1..50 {
                let ch = ChannelSpec::bac(i as f64 / 50.0, j as f64 / 50.0).unwrap();
                for step in 0..=100 {
                    let p = step as f64 / 100.0;
                    for y in 0..2 {
                        let post = posterior_update(p, y, &ch).unwrap();
                        let llr = (ch.f1()[y] / ch.f0()[y]).ln().abs();
                        let rhs = p * (1.0 - p) * (-llr).exp();
                        assert!(post * (1.0 - post) >= rhs * (1.0 - 1e-12) - 1e-300, "p={p} y={y} ch={ch}");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn distortion_sandwich_and_monotone(
            counts in prop::collection::vec(0u64..12, 0..5),
            p00 in 0.51f64..0.99,
            p11 in 0.51f64..0.99,
            k in 1usize..6,
        ) {
            let ch = ChannelSpec::bac(p00, p11).unwrap();
            let t = TransmissionPattern::new(counts);
            let d = exact_distortion(&t, &ch).unwrap();
            let c = chernoff_information(&ch).value;
            let b = b_functional(&ch).unwrap();
            prop_assert!(d <= upper_bound(&t, c) + 1e-12);
            prop_assert!(d >= lower_bound(&t, b) - 1e-12);
            prop_assert!(exact_distortion(&t.incremented(k), &ch).unwrap() <= d + 1e-15);
        }
    }
}
