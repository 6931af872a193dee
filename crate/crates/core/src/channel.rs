//! Binary-input, finite-output memoryless channels.
//!
//! A channel is a pair of probability mass functions `f0`, `f1` over a shared
//! output alphabet: `f_b(y)` is the probability of observing `y` when bit `b`
//! is sent. Everything downstream (the distortion bounds, the repetition step
//! `r`, the rate constants) is driven by two functionals of that pair:
//!
//! * the Chernoff information `C = -min_{s in [0,1]} ln sum_y f0(y)^(1-s) f1(y)^s`,
//! * the mean absolute log-likelihood ratio `B = E|ln f1(Y)/f0(Y)|`, with `Y`
//!   drawn from the equal mixture `(f0 + f1) / 2`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MASS_TOLERANCE: f64 = 1e-12;
const GOLDEN_TOLERANCE: f64 = 1e-10;
const LN_4: f64 = std::f64::consts::LN_2 * 2.0;

/// A binary-input memoryless channel with a finite output alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    outputs: Vec<String>,
    f0: Vec<f64>,
    f1: Vec<f64>,
    informative: bool,
    label: String,
}

impl ChannelSpec {
    /// Builds a channel from explicit mass functions.
    pub fn new(outputs: Vec<String>, f0: Vec<f64>, f1: Vec<f64>) -> Result<Self> {
        let label = format!(
            "explicit(outputs=[{}];f0=[{}];f1=[{}])",
            outputs.join(" "),
            join_floats(&f0),
            join_floats(&f1)
        );
        Self::with_label(outputs, f0, f1, label)
    }

    fn with_label(outputs: Vec<String>, f0: Vec<f64>, f1: Vec<f64>, label: String) -> Result<Self> {
        if outputs.len() < 2 {
            return Err(Error::InvalidChannel(format!(
                "output alphabet needs at least 2 symbols, got {}",
                outputs.len()
            )));
        }
        if f0.len() != outputs.len() || f1.len() != outputs.len() {
            return Err(Error::InvalidChannel(format!(
                "mass functions must have one entry per output ({}), got f0: {}, f1: {}",
                outputs.len(),
                f0.len(),
                f1.len()
            )));
        }
        for (name, mass) in [("f0", &f0), ("f1", &f1)] {
            if let Some(bad) = mass.iter().find(|&&m| !m.is_finite() || m < 0.0) {
                return Err(Error::InvalidChannel(format!("{name} has invalid mass {bad}")));
            }
            let total: f64 = mass.iter().sum();
            if (total - 1.0).abs() > MASS_TOLERANCE {
                return Err(Error::InvalidChannel(format!("{name} sums to {total}, not 1")));
            }
        }
        if let Some(y) = (0..outputs.len()).find(|&y| f0[y] == 0.0 && f1[y] == 0.0) {
            return Err(Error::InvalidChannel(format!(
                "output {:?} has zero mass under both inputs",
                outputs[y]
            )));
        }
        if f0.iter().zip(&f1).all(|(&a, &b)| a == 0.0 || b == 0.0) {
            return Err(Error::DegenerateChannel(
                "disjoint output supports make the channel noiseless".into(),
            ));
        }
        let informative = f0 != f1;
        Ok(ChannelSpec {
            outputs,
            f0,
            f1,
            informative,
            label,
        })
    }

    /// Binary asymmetric channel with `P(0|0) = p00` and `P(1|1) = p11`.
    pub fn bac(p00: f64, p11: f64) -> Result<Self> {
        for (name, p) in [("p00", p00), ("p11", p11)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::DegenerateChannel(format!(
                    "{name} = {p} must lie strictly inside (0, 1)"
                )));
            }
        }
        Self::with_label(
            vec!["0".into(), "1".into()],
            vec![p00, 1.0 - p00],
            vec![1.0 - p11, p11],
            format!("bac(p00={p00};p11={p11})"),
        )
    }

    /// Binary symmetric channel with crossover probability `epsilon`.
    pub fn bsc(epsilon: f64) -> Result<Self> {
        let mut ch = Self::bac(1.0 - epsilon, 1.0 - epsilon)?;
        ch.label = format!("bsc(epsilon={epsilon})");
        Ok(ch)
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn f0(&self) -> &[f64] {
        &self.f0
    }

    pub fn f1(&self) -> &[f64] {
        &self.f1
    }

    /// Likelihood of output `y` given input `bit`.
    #[inline]
    pub fn likelihood(&self, bit: u8, y: usize) -> f64 {
        if bit == 0 {
            self.f0[y]
        } else {
            self.f1[y]
        }
    }

    /// `f0 != f1`.
    pub fn is_informative(&self) -> bool {
        self.informative
    }

    /// Every output has positive mass under both inputs.
    pub fn has_full_support(&self) -> bool {
        self.f0.iter().chain(&self.f1).all(|&m| m > 0.0)
    }

    /// Provenance string echoed into every CSV written from this channel.
    pub fn label(&self) -> &str {
        &self.label
    }

    /// The same channel with the roles of the two inputs exchanged.
    pub fn swapped(&self) -> ChannelSpec {
        ChannelSpec {
            outputs: self.outputs.clone(),
            f0: self.f1.clone(),
            f1: self.f0.clone(),
            informative: self.informative,
            label: format!("swapped({})", self.label),
        }
    }

    /// Draws a channel output for input `bit`.
    pub fn sample_output<R: Rng + ?Sized>(&self, bit: u8, rng: &mut R) -> usize {
        let mass = if bit == 0 { &self.f0 } else { &self.f1 };
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        let mut last_positive = 0;
        for (y, &m) in mass.iter().enumerate() {
            if m > 0.0 {
                cumulative += m;
                last_positive = y;
                if u < cumulative {
                    return y;
                }
            }
        }
        // u landed in the rounding slack above the final cumulative sum
        last_positive
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Parses `bac:P00,P11` or `bsc:EPSILON`.
impl FromStr for ChannelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidConfig(format!("expected `bac:p00,p11` or `bsc:eps`, got {s:?}")))?;
        let values = args
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidConfig(format!("preset argument {v:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match (kind.trim().to_ascii_lowercase().as_str(), values.as_slice()) {
            ("bac", [p00, p11]) => ChannelSpec::bac(*p00, *p11),
            ("bsc", [eps]) => ChannelSpec::bsc(*eps),
            _ => Err(Error::InvalidConfig(format!("unknown channel preset {s:?}"))),
        }
    }
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// An output symbol as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutputSymbol {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for OutputSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputSymbol::Int(v) => write!(f, "{v}"),
            OutputSymbol::Float(v) => write!(f, "{v}"),
            OutputSymbol::Text(v) => f.write_str(v),
        }
    }
}

/// Channel section of a config file.
///
/// Either `{"preset":"bac","p00":0.9,"p11":0.8}`, `{"preset":"bsc","epsilon":0.1}`
/// or `{"outputs":[...],"f0":[...],"f1":[...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ChannelConfig {
    Preset {
        preset: String,
        #[serde(default)]
        p00: Option<f64>,
        #[serde(default)]
        p11: Option<f64>,
        #[serde(default)]
        epsilon: Option<f64>,
    },
    Explicit {
        outputs: Vec<OutputSymbol>,
        f0: Vec<f64>,
        f1: Vec<f64>,
    },
}

impl ChannelConfig {
    pub fn build(&self) -> Result<ChannelSpec> {
        match self {
            ChannelConfig::Preset {
                preset,
                p00,
                p11,
                epsilon,
            } => match preset.to_ascii_lowercase().as_str() {
                "bac" => {
                    let p00 = p00.ok_or_else(|| Error::InvalidConfig("bac preset: missing field `p00`".into()))?;
                    let p11 = p11.ok_or_else(|| Error::InvalidConfig("bac preset: missing field `p11`".into()))?;
                    ChannelSpec::bac(p00, p11)
                }
                "bsc" => {
                    let eps = epsilon
                        .ok_or_else(|| Error::InvalidConfig("bsc preset: missing field `epsilon`".into()))?;
                    ChannelSpec::bsc(eps)
                }
                other => Err(Error::InvalidConfig(format!("unknown preset {other:?}"))),
            },
            ChannelConfig::Explicit { outputs, f0, f1 } => ChannelSpec::new(
                outputs.iter().map(ToString::to_string).collect(),
                f0.clone(),
                f1.clone(),
            ),
        }
    }
}

/// Result of the Chernoff-information minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chernoff {
    /// `C(f1, f0)` in nats.
    pub value: f64,
    /// Minimizer `s*` of `ln sum_y f0^(1-s) f1^s`.
    pub s_star: f64,
    /// False when `f0 == f1`; the value is then 0.
    pub informative: bool,
}

/// `ln sum_y f0(y)^(1-s) f1(y)^s`, dropping outputs where either mass is zero.
pub fn chernoff_log_mgf(ch: &ChannelSpec, s: f64) -> f64 {
    ch.f0
        .iter()
        .zip(&ch.f1)
        .filter(|(&a, &b)| a > 0.0 && b > 0.0)
        .map(|(&a, &b)| (a.ln() * (1.0 - s) + b.ln() * s).exp())
        .sum::<f64>()
        .ln()
}

/// Chernoff information by golden-section search on `[0, 1]`.
///
/// The log moment generating function is convex in `s`, so the search converges
/// to the global minimizer.
pub fn chernoff_information(ch: &ChannelSpec) -> Chernoff {
    if !ch.informative {
        return Chernoff {
            value: 0.0,
            s_star: 0.5,
            informative: false,
        };
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut g1 = chernoff_log_mgf(ch, x1);
    let mut g2 = chernoff_log_mgf(ch, x2);
    while hi - lo > GOLDEN_TOLERANCE {
        if g1 <= g2 {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - inv_phi * (hi - lo);
            g1 = chernoff_log_mgf(ch, x1);
        } else {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + inv_phi * (hi - lo);
            g2 = chernoff_log_mgf(ch, x2);
        }
    }
    let s_star = 0.5 * (lo + hi);
    let value = (-chernoff_log_mgf(ch, s_star)).max(0.0);
    Chernoff {
        value,
        s_star,
        informative: true,
    }
}

/// Mean absolute log-likelihood ratio `sum_y (f0+f1)/2 * |ln f1/f0|`.
///
/// Fails when some output is possible under exactly one input.
pub fn b_functional(ch: &ChannelSpec) -> Result<f64> {
    let mut total = 0.0;
    for (y, (&a, &b)) in ch.f0.iter().zip(&ch.f1).enumerate() {
        if (a == 0.0) != (b == 0.0) {
            return Err(Error::InfiniteLogRatio(y));
        }
        total += 0.5 * (a + b) * (b / a).ln().abs();
    }
    Ok(total)
}

/// Diagnostic variant `E[exp(-|ln f1/f0 (Y)|)]` under the same equal mixture.
pub fn b_alt(ch: &ChannelSpec) -> f64 {
    ch.f0
        .iter()
        .zip(&ch.f1)
        .map(|(&a, &b)| {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            0.5 * (a + b) * (lo / hi)
        })
        .sum()
}

/// The channel constants that drive the bounds and the Aurelian policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfoConstants {
    /// Chernoff information, nats.
    pub c: f64,
    /// Minimizer reported by the Chernoff search.
    pub s_star: f64,
    /// Mean absolute log-likelihood ratio, nats.
    pub b: f64,
    /// `E[exp(-|llr|)]`, diagnostic only.
    pub b_alt: f64,
    /// Unfloored repetition step `ln 4 / C`.
    pub r_real: f64,
    /// Integer repetition step `max(1, floor(ln 4 / C))`.
    pub r: u64,
    /// `min(sqrt 2 (ln 4 / C + 1) B, ln 4)`.
    pub a1: f64,
    /// `sqrt(2 r) C`.
    pub a2: f64,
}

/// Bundles `C`, `B`, `r`, `A1`, `A2` for an informative channel.
///
/// For channels with `C > ln 4` the floor of `ln 4 / C` is zero; `r` is then
/// clamped to 1 and the relation `r C <= ln 4` no longer holds.
pub fn info_constants(ch: &ChannelSpec) -> Result<InfoConstants> {
    let chernoff = chernoff_information(ch);
    let c = chernoff.value;
    if !chernoff.informative || c <= 0.0 {
        return Err(Error::ZeroChernoff);
    }
    let r_real = LN_4 / c;
    if !r_real.is_finite() || r_real > (1u64 << 53) as f64 {
        return Err(Error::ZeroChernoff);
    }
    let b = b_functional(ch)?;
    let r = (r_real.floor() as u64).max(1);
    let a1 = (std::f64::consts::SQRT_2 * (r_real + 1.0) * b).min(LN_4);
    let a2 = (2.0 * r as f64).sqrt() * c;
    Ok(InfoConstants {
        c,
        s_star: chernoff.s_star,
        b,
        b_alt: b_alt(ch),
        r_real,
        r,
        a1,
        a2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_chernoff(ch: &ChannelSpec, points: usize) -> (f64, f64) {
        (0..=points)
            .map(|i| {
                let s = i as f64 / points as f64;
                (-chernoff_log_mgf(ch, s), s)
            })
            .fold((f64::NEG_INFINITY, 0.0), |best, cur| if cur.0 > best.0 { cur } else { best })
    }

    #[test]
    fn bac_construction() {
        let ch = ChannelSpec::bac(0.9, 0.8).unwrap();
        assert_eq!(ch.f0(), &[0.9, 0.09999999999999998]);
        assert_abs_diff_eq!(ch.f1()[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(ch.f1()[1], 0.8, epsilon = 1e-15);
        assert!(ch.is_informative());

        let noise = ChannelSpec::bac(0.5, 0.5).unwrap();
        assert!(!noise.is_informative());
        assert_eq!(noise.f0(), noise.f1());

        let bsc = ChannelSpec::bac(0.9, 0.9).unwrap();
        assert_abs_diff_eq!(bsc.f1()[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(bsc.f1()[1], 0.9, epsilon = 1e-15);
    }

    #[test]
    fn boundary_probabilities_are_degenerate() {
        for (a, b) in [(1.0, 0.8), (0.9, 0.0), (0.0, 0.5), (0.5, 1.0)] {
            assert!(matches!(ChannelSpec::bac(a, b), Err(Error::DegenerateChannel(_))));
        }
    }

    #[test]
    fn explicit_channel_validation() {
        let out = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
        assert!(ChannelSpec::new(out(1), vec![1.0], vec![1.0]).is_err());
        assert!(ChannelSpec::new(out(2), vec![0.6, 0.5], vec![0.5, 0.5]).is_err());
        assert!(ChannelSpec::new(out(2), vec![1.1, -0.1], vec![0.5, 0.5]).is_err());
        assert!(ChannelSpec::new(out(3), vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0]).is_err());
        assert!(matches!(
            ChannelSpec::new(out(2), vec![1.0, 0.0], vec![0.0, 1.0]),
            Err(Error::DegenerateChannel(_))
        ));
        let erasure = ChannelSpec::new(out(3), vec![0.9, 0.1, 0.0], vec![0.0, 0.1, 0.9]).unwrap();
        assert!(erasure.is_informative());
        assert!(!erasure.has_full_support());
    }

    #[test]
    fn chernoff_pure_noise_is_zero() {
        let ch = ChannelSpec::bsc(0.5).unwrap();
        let c = chernoff_information(&ch);
        assert_eq!(c.value, 0.0);
        assert!(!c.informative);
    }

    #[test]
    fn chernoff_bsc_closed_form() {
        let ch = ChannelSpec::bsc(0.1).unwrap();
        let c = chernoff_information(&ch);
        let closed = -(2.0 * (0.1f64 * 0.9).sqrt()).ln();
        assert_abs_diff_eq!(c.value, closed, epsilon = 1e-12);
        assert_abs_diff_eq!(c.value, 0.5108256237659907, epsilon = 1e-12);
        assert_abs_diff_eq!(c.s_star, 0.5, epsilon = 1e-6);
        let (grid, _) = grid_chernoff(&ch, 1_000_000);
        assert_abs_diff_eq!(c.value, grid, epsilon = 1e-12);
    }

    #[test]
    fn chernoff_bac_matches_dense_grid() {
        let ch = ChannelSpec::bac(0.9, 0.8).unwrap();
        let c = chernoff_information(&ch);
        let (grid, s_grid) = grid_chernoff(&ch, 1_000_000);
        // frozen from the 10^6-point grid oracle
        assert_abs_diff_eq!(grid, 0.347379630858206, epsilon = 1e-12);
        assert_abs_diff_eq!(c.value, grid, epsilon = 1e-11);
        assert_abs_diff_eq!(c.s_star, s_grid, epsilon = 1e-5);
        assert!(c.value >= grid);
    }

    #[test]
    fn b_functional_values() {
        assert_eq!(b_functional(&ChannelSpec::bsc(0.5).unwrap()).unwrap(), 0.0);
        let bsc = ChannelSpec::bsc(0.1).unwrap();
        assert_abs_diff_eq!(b_functional(&bsc).unwrap(), 9f64.ln(), epsilon = 1e-12);
        let bac = ChannelSpec::bac(0.9, 0.8).unwrap();
        let expected = 0.55 * 4.5f64.ln() + 0.45 * 8f64.ln();
        assert_abs_diff_eq!(b_functional(&bac).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 1.762991261982877, epsilon = 1e-12);
    }

    #[test]
    fn b_functional_rejects_one_sided_zero() {
        let ch = ChannelSpec::new(
            vec!["a".into(), "e".into(), "b".into()],
            vec![0.9, 0.1, 0.0],
            vec![0.0, 0.1, 0.9],
        )
        .unwrap();
        assert_eq!(b_functional(&ch), Err(Error::InfiniteLogRatio(0)));
        // the Chernoff search drops one-sided terms instead: only the erasure output survives
        assert_abs_diff_eq!(chernoff_information(&ch).value, -(0.1f64.ln()), epsilon = 1e-9);
    }

    #[test]
    fn b_alt_bsc() {
        // exp(-ln 9) at every output
        assert_abs_diff_eq!(b_alt(&ChannelSpec::bsc(0.1).unwrap()), 1.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn info_constants_bsc() {
        let k = info_constants(&ChannelSpec::bsc(0.1).unwrap()).unwrap();
        assert_abs_diff_eq!(k.c, 0.5108256237659907, epsilon = 1e-10);
        assert_abs_diff_eq!(k.b, 2.1972245773362196, epsilon = 1e-12);
        assert_eq!(k.r, 2);
        assert_abs_diff_eq!(k.a1, LN_4, epsilon = 1e-15);
        assert_abs_diff_eq!(k.a2, 2.0 * 0.5108256237659907, epsilon = 1e-9);
        assert!(k.r as f64 * k.c <= LN_4);
    }

    #[test]
    fn info_constants_bac() {
        let k = info_constants(&ChannelSpec::bac(0.9, 0.8).unwrap()).unwrap();
        assert_eq!(k.r, (LN_4 / 0.347379630858206f64).floor() as u64);
        assert_eq!(k.r, 3);
        assert_abs_diff_eq!(k.a1, LN_4, epsilon = 1e-15);
        assert_abs_diff_eq!(k.a2, 6f64.sqrt() * k.c, epsilon = 1e-15);
    }

    #[test]
    fn info_constants_rejects_pure_noise() {
        assert_eq!(info_constants(&ChannelSpec::bsc(0.5).unwrap()), Err(Error::ZeroChernoff));
    }

    #[test]
    fn clean_channel_clamps_r() {
        let k = info_constants(&ChannelSpec::bsc(0.01).unwrap()).unwrap();
        assert!(k.c > LN_4);
        assert_eq!(k.r, 1);
    }

    #[test]
    fn sampler_is_deterministic_and_calibrated() {
        let clean = ChannelSpec::new(
            vec!["0".into(), "1".into(), "2".into()],
            vec![1.0, 0.0, 0.0],
            vec![0.2, 0.4, 0.4],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| clean.sample_output(0, &mut rng) == 0));

        let ch = ChannelSpec::bac(0.9, 0.8).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..1000).map(|_| ch.sample_output(1, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));

        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000;
        let ones = (0..n).filter(|_| ch.sample_output(1, &mut rng) == 1).count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.8).abs() < 0.002, "frequency {freq}");
    }

    #[test]
    fn preset_strings_and_configs() {
        let a: ChannelSpec = "bac:0.9,0.8".parse().unwrap();
        assert_eq!(a, ChannelSpec::bac(0.9, 0.8).unwrap());
        let b: ChannelSpec = "bsc:0.1".parse().unwrap();
        assert_eq!(b.f0(), ChannelSpec::bsc(0.1).unwrap().f0());
        assert!("bsc".parse::<ChannelSpec>().is_err());
        assert!("foo:1".parse::<ChannelSpec>().is_err());

        let cfg: ChannelConfig = serde_json::from_str(r#"{"preset":"bac","p00":0.9,"p11":0.8}"#).unwrap();
        assert_eq!(cfg.build().unwrap(), a);
        let cfg: ChannelConfig =
            serde_json::from_str(r#"{"outputs":[0,1,"e"],"f0":[0.8,0.1,0.1],"f1":[0.1,0.8,0.1]}"#).unwrap();
        let ch = cfg.build().unwrap();
        assert_eq!(ch.outputs(), &["0", "1", "e"]);
        let cfg: ChannelConfig = serde_json::from_str(r#"{"preset":"bac","p00":0.9}"#).unwrap();
        assert!(cfg.build().is_err());
    }
}
