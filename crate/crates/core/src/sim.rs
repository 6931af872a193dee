//! Monte-Carlo estimation of end-to-end distortion.
//!
//! Every trial draws from its own ChaCha stream selected by `(seed, trial_index)`,
//! and partial statistics are merged in trial order, so estimates are
//! bit-identical under any rayon schedule or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{info_constants, ChannelSpec, InfoConstants};
use crate::decoder::{BitVarianceCache, PosteriorState};
use crate::error::{Error, Result};
use crate::policy::{aurelian, efficient_search, ln_lower_bound, ln_upper_bound, SearchMode, TransmissionPattern};
use crate::source::{Message, PriorSpec, MAX_BIT_DEPTH};

const CHUNK: u64 = 1024;

/// Distortion of the prior alone, `Var(U(0,1))`.
pub const PRIOR_DISTORTION: f64 = 1.0 / 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Closed-form conditional distortion of the final posterior.
    RaoBlackwell,
    /// Raw squared error of the decoded estimate.
    Plain,
}

impl Estimator {
    pub fn tag(self) -> &'static str {
        match self {
            Estimator::RaoBlackwell => "rao_blackwell",
            Estimator::Plain => "plain",
        }
    }
}

/// Source encoder rate: how many leading bits may be transmitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizerDepth {
    Bits(u32),
    Unbounded,
}

impl QuantizerDepth {
    pub fn bits(self) -> u32 {
        match self {
            QuantizerDepth::Bits(l) => l.min(MAX_BIT_DEPTH),
            QuantizerDepth::Unbounded => MAX_BIT_DEPTH,
        }
    }
}

/// Which pattern a simulation transmits.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternPlan {
    Fixed(TransmissionPattern),
    Aurelian { n: u64 },
    Greedy { n: u64 },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub channel: ChannelSpec,
    pub plan: PatternPlan,
    pub prior: PriorSpec,
    pub trials: u64,
    pub seed: u64,
    pub estimator: Estimator,
    pub quantizer_depth: QuantizerDepth,
}

impl SimConfig {
    /// Uniform prior, Rao-Blackwellized estimator, unbounded quantizer.
    pub fn new(channel: ChannelSpec, pattern: TransmissionPattern, trials: u64, seed: u64) -> Self {
        SimConfig {
            channel,
            plan: PatternPlan::Fixed(pattern),
            prior: PriorSpec::uniform(),
            trials,
            seed,
            estimator: Estimator::RaoBlackwell,
            quantizer_depth: QuantizerDepth::Unbounded,
        }
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn with_prior(mut self, prior: PriorSpec) -> Self {
        self.prior = prior;
        self
    }

    pub fn with_quantizer_depth(mut self, depth: QuantizerDepth) -> Self {
        self.quantizer_depth = depth;
        self
    }

    /// Resolves the plan to a concrete pattern and checks the config.
    pub fn pattern(&self) -> Result<TransmissionPattern> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        let pattern = match &self.plan {
            PatternPlan::Fixed(t) => t.clone(),
            PatternPlan::Aurelian { n } => aurelian(*n, &self.constants()?)?,
            PatternPlan::Greedy { n } => {
                efficient_search(*n, self.constants()?.c, SearchMode::Greedy { max_depth: None })?
            }
        };
        let l = self.quantizer_depth.bits();
        if pattern.q() > l as usize {
            return Err(Error::InvalidConfig(format!(
                "pattern {pattern} transmits bit {} beyond quantizer depth {l}",
                pattern.q()
            )));
        }
        if self.estimator == Estimator::RaoBlackwell && !self.prior.is_uniform() {
            return Err(Error::InvalidConfig(
                "the Rao-Blackwell estimator needs a uniform prior".into(),
            ));
        }
        Ok(pattern)
    }

    fn constants(&self) -> Result<InfoConstants> {
        info_constants(&self.channel)
    }
}

/// Independent random stream for one trial.
pub fn trial_rng(seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

/// Everything one simulated transmission yields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    /// Target in the original domain.
    pub target: f64,
    /// Decoded estimate mapped back to the original domain.
    pub estimate: f64,
    /// `(F_n - F(X))^2`.
    pub uniform_sq_error: f64,
    /// `(X_hat - X)^2`.
    pub original_sq_error: f64,
    /// Conditional distortion of the final posterior (uniform domain).
    pub conditional_distortion: f64,
}

/// Simulates one trial: draw the target, transmit the pattern, decode.
pub fn simulate_trial(
    channel: &ChannelSpec,
    prior: &PriorSpec,
    pattern: &TransmissionPattern,
    seed: u64,
    trial_index: u64,
) -> Result<TrialOutcome> {
    let mut rng = trial_rng(seed, trial_index);
    let u: f64 = rng.gen();
    let target = prior.from_uniform(u)?;
    let fx = prior.to_uniform(target)?;
    let message = Message::new(fx)?;
    let mut state = PosteriorState::new(pattern.q());
    for (i, &tk) in pattern.counts().iter().enumerate() {
        let k = i + 1;
        let bit = message.bit(k as u32);
        for _ in 0..tk {
            let y = channel.sample_output(bit, &mut rng);
            state.observe(k, y, channel)?;
        }
    }
    let f_n = state.mmse_estimate();
    let estimate = prior.from_uniform(f_n)?;
    Ok(TrialOutcome {
        target,
        estimate,
        uniform_sq_error: (f_n - fx).powi(2),
        original_sq_error: (estimate - target).powi(2),
        conditional_distortion: state.conditional_distortion(),
    })
}

/// The per-trial sample the estimator averages.
pub fn run_trial(cfg: &SimConfig, trial_index: u64) -> Result<f64> {
    let pattern = cfg.pattern()?;
    let outcome = simulate_trial(&cfg.channel, &cfg.prior, &pattern, cfg.seed, trial_index)?;
    Ok(select(cfg.estimator, &outcome))
}

fn select(estimator: Estimator, o: &TrialOutcome) -> f64 {
    match estimator {
        Estimator::RaoBlackwell => o.conditional_distortion,
        Estimator::Plain => o.original_sq_error,
    }
}

/// Mean of a Monte-Carlo distortion estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
    pub estimator: Estimator,
}

/// Running count, mean and sum of squared deviations; merged with Chan's update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + delta * delta * self.count as f64 * other.count as f64 / count as f64;
        Moments { count, mean, m2 }
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2.max(0.0) / (self.count - 1) as f64 / self.count as f64).sqrt()
    }
}

/// Runs `trials` trials in fixed-size chunks and merges per-chunk moments in
/// order. `f` maps a trial index to one or more samples.
pub fn parallel_moments<const N: usize, F>(trials: u64, f: F) -> Result<[Moments; N]>
where
    F: Fn(u64) -> Result<[f64; N]> + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    let partials: Vec<Result<[Moments; N]>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = [Moments::default(); N];
            for i in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let xs = f(i)?;
                for (m, x) in acc.iter_mut().zip(xs) {
                    m.push(x);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = [Moments::default(); N];
    for p in partials {
        let p = p?;
        for (t, m) in total.iter_mut().zip(p) {
            *t = t.merge(m);
        }
    }
    Ok(total)
}

pub fn estimate_distortion(cfg: &SimConfig) -> Result<DistortionEstimate> {
    let pattern = cfg.pattern()?;
    let [m] = parallel_moments(cfg.trials, |i| {
        let o = simulate_trial(&cfg.channel, &cfg.prior, &pattern, cfg.seed, i)?;
        Ok([select(cfg.estimator, &o)])
    })?;
    Ok(DistortionEstimate {
        mean: m.mean,
        std_error: m.std_error(),
        trials: cfg.trials,
        estimator: cfg.estimator,
    })
}

/// How the sweep obtains `D_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepMode {
    Exact,
    MonteCarlo { trials: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: u64,
    pub q: usize,
    pub pattern: TransmissionPattern,
    pub distortion: f64,
    /// Zero in exact mode.
    pub std_error: f64,
    pub ln_upper: f64,
    pub ln_lower: f64,
}

impl SweepRow {
    pub fn ln_distortion_rate(&self) -> f64 {
        self.distortion.ln() / (self.n as f64).sqrt()
    }

    pub fn ln_upper_rate(&self) -> f64 {
        self.ln_upper / (self.n as f64).sqrt()
    }

    pub fn normalized(&self) -> f64 {
        self.distortion / PRIOR_DISTORTION
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub constants: InfoConstants,
    pub rows: Vec<SweepRow>,
}

/// Distortion of the Aurelian policy along increasing budgets.
pub fn aurelian_sweep(channel: &ChannelSpec, n_values: &[u64], mode: SweepMode) -> Result<SweepTable> {
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("sweep budgets must be strictly increasing".into()));
    }
    let constants = info_constants(channel)?;
    let patterns = n_values
        .iter()
        .map(|&n| aurelian(n, &constants))
        .collect::<Result<Vec<_>>>()?;
    let mut cache = BitVarianceCache::new(channel.clone());
    let mut rows = Vec::with_capacity(n_values.len());
    for (&n, pattern) in n_values.iter().zip(patterns) {
        let (distortion, std_error) = match mode {
            SweepMode::Exact => (cache.distortion(&pattern)?, 0.0),
            SweepMode::MonteCarlo { trials, seed } => {
                let est = estimate_distortion(&SimConfig::new(channel.clone(), pattern.clone(), trials, seed))?;
                (est.mean, est.std_error)
            }
        };
        rows.push(SweepRow {
            n,
            q: pattern.q(),
            distortion,
            std_error,
            ln_upper: ln_upper_bound(&pattern, constants.c),
            ln_lower: ln_lower_bound(&pattern, constants.b),
            pattern,
        });
    }
    Ok(SweepTable { constants, rows })
}

/// Distortions in both domains for a transformed prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonUniformReport {
    /// `E[(F_n - F(X))^2]`.
    pub uniform: DistortionEstimate,
    /// `E[(X_hat - X)^2]`.
    pub original: DistortionEstimate,
    pub lipschitz_sq: f64,
    /// `uniform <= lipschitz_sq * original` within three combined standard errors.
    pub holds: bool,
}

pub fn nonuniform_experiment(
    channel: &ChannelSpec,
    prior: &PriorSpec,
    pattern: &TransmissionPattern,
    trials: u64,
    seed: u64,
) -> Result<NonUniformReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    if pattern.q() > MAX_BIT_DEPTH as usize {
        return Err(Error::InvalidConfig(format!("pattern deeper than {MAX_BIT_DEPTH} bits")));
    }
    let [u, o] = parallel_moments(trials, |i| {
        let t = simulate_trial(channel, prior, pattern, seed, i)?;
        Ok([t.uniform_sq_error, t.original_sq_error])
    })?;
    let k = prior.lipschitz_sq();
    let slack = 3.0 * (u.std_error().powi(2) + (k * o.std_error()).powi(2)).sqrt();
    let wrap = |m: Moments| DistortionEstimate {
        mean: m.mean,
        std_error: m.std_error(),
        trials,
        estimator: Estimator::Plain,
    };
    Ok(NonUniformReport {
        uniform: wrap(u),
        original: wrap(o),
        lipschitz_sq: k,
        holds: u.mean <= k * o.mean + slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::exact_distortion;

    fn pat(v: &[u64]) -> TransmissionPattern {
        TransmissionPattern::new(v.to_vec())
    }

    #[test]
    fn near_noiseless_plain_trials_land_in_the_right_cell() {
        let ch = ChannelSpec::bac(0.999, 0.999).unwrap();
        let cfg = SimConfig::new(ch, pat(&[20, 20, 20]), 2000, 5)
            .with_estimator(Estimator::Plain)
            .with_quantizer_depth(QuantizerDepth::Bits(3));
        let pattern = cfg.pattern().unwrap();
        let mut hits = 0;
        for i in 0..cfg.trials {
            let o = simulate_trial(&cfg.channel, &cfg.prior, &pattern, cfg.seed, i).unwrap();
            let cell = Message::new(o.target).unwrap().quantize(3);
            // decoded 3-bit prefix matches within 1e-5, squared error is then the in-cell residual
            if (o.estimate - (cell + 1.0 / 16.0)).abs() < 1e-5 && o.original_sq_error <= 1.0 / 256.0 + 1e-5 {
                hits += 1;
            }
        }
        assert!(hits as f64 >= 0.99 * cfg.trials as f64, "{hits}");
    }

    #[test]
    fn empty_pattern_rao_blackwell_is_prior_variance() {
        let cfg = SimConfig::new(ChannelSpec::bsc(0.2).unwrap(), TransmissionPattern::empty(), 1000, 9);
        for i in 0..10 {
            assert_eq!(run_trial(&cfg, i).unwrap(), PRIOR_DISTORTION);
        }
        let est = estimate_distortion(&cfg).unwrap();
        assert!((est.mean - PRIOR_DISTORTION).abs() < 1e-15);
        assert!(est.std_error < 1e-15);
    }

    #[test]
    fn trials_are_deterministic() {
        let cfg = SimConfig::new(ChannelSpec::bac(0.9, 0.8).unwrap(), pat(&[6, 3, 1]), 5000, 77)
            .with_estimator(Estimator::Plain);
        assert_eq!(run_trial(&cfg, 3).unwrap().to_bits(), run_trial(&cfg, 3).unwrap().to_bits());
        let a = estimate_distortion(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| estimate_distortion(&cfg).unwrap());
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn config_validation() {
        let ch = ChannelSpec::bac(0.9, 0.8).unwrap();
        let cfg = SimConfig::new(ch.clone(), pat(&[1, 1, 1, 1]), 10, 0).with_quantizer_depth(QuantizerDepth::Bits(3));
        assert!(cfg.pattern().is_err());
        let cfg = SimConfig::new(ch.clone(), pat(&[1]), 0, 0);
        assert!(cfg.pattern().is_err());
        let cfg = SimConfig::new(ch.clone(), pat(&[1]), 10, 0).with_prior(PriorSpec::power(2.0).unwrap());
        assert!(matches!(run_trial(&cfg, 0), Err(Error::InvalidConfig(_))));
        let mut cfg = SimConfig::new(ch, pat(&[1]), 10, 0);
        cfg.plan = PatternPlan::Aurelian { n: 9 };
        assert_eq!(cfg.pattern().unwrap(), pat(&[6, 3]));
        cfg.plan = PatternPlan::Aurelian { n: 6 };
        assert_eq!(cfg.pattern().unwrap(), pat(&[5, 1]));
        cfg.plan = PatternPlan::Greedy { n: 1 };
        assert_eq!(cfg.pattern().unwrap(), pat(&[1]));
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37 % 101) as f64).sqrt()).collect();
        let mut seq = Moments::default();
        xs.iter().for_each(|&x| seq.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..333].iter().for_each(|&x| a.push(x));
        xs[333..].iter().for_each(|&x| b.push(x));
        let merged = a.merge(b);
        assert!((merged.mean - seq.mean).abs() < 1e-12);
        assert!((merged.m2 - seq.m2).abs() < 1e-9);
    }

    #[test]
    fn rao_blackwell_tracks_exact_and_reduces_variance() {
        let ch = ChannelSpec::bac(0.9, 0.8).unwrap();
        let t = pat(&[6, 3, 1]);
        let exact = exact_distortion(&t, &ch).unwrap();
        let rb = estimate_distortion(&SimConfig::new(ch.clone(), t.clone(), 10_000, 1)).unwrap();
        let plain =
            estimate_distortion(&SimConfig::new(ch, t, 10_000, 1).with_estimator(Estimator::Plain)).unwrap();
        assert!(rb.std_error < plain.std_error);
        assert!((rb.mean - exact).abs() <= 3.0 * rb.std_error);
        let combined = (rb.std_error.powi(2) + plain.std_error.powi(2)).sqrt();
        assert!((rb.mean - plain.mean).abs() <= 3.0 * combined);
    }

    #[test]
    fn sweep_rows() {
        let ch = ChannelSpec::bac(0.9, 0.8).unwrap();
        let table = aurelian_sweep(&ch, &[3, 9, 18, 30, 45], SweepMode::Exact).unwrap();
        for row in &table.rows {
            let stairs = row.pattern.counts().windows(2).all(|w| w[0] - w[1] == 3);
            assert!(stairs && *row.pattern.counts().last().unwrap() == 3, "{}", row.pattern);
        }
        assert!(table.rows.windows(2).all(|w| w[1].distortion < w[0].distortion));
        assert!(aurelian_sweep(&ch, &[10, 5], SweepMode::Exact).is_err());
        assert!(aurelian_sweep(&ch, &[1, 5], SweepMode::Exact).is_err());
    }

    #[test]
    fn nonuniform_uniform_prior_is_identity() {
        let ch = ChannelSpec::bac(0.9, 0.8).unwrap();
        let rep = nonuniform_experiment(&ch, &PriorSpec::uniform(), &pat(&[6, 3, 1]), 2000, 3).unwrap();
        assert_eq!(rep.uniform.mean, rep.original.mean);
        assert!(rep.holds);
        let rep = nonuniform_experiment(&ch, &PriorSpec::power(2.0).unwrap(), &TransmissionPattern::empty(), 20_000, 3)
            .unwrap();
        // no transmissions: F_n = 1/2 and the uniform-domain error is Var(U(0,1))
        assert!((rep.uniform.mean - PRIOR_DISTORTION).abs() < 3.0 * rep.uniform.std_error);
        assert!(rep.holds);
    }
}
