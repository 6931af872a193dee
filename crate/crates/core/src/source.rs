//! Dyadic messages on `[0, 1]`, fixed-rate quantization and CDF priors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deepest bit extracted from a double. Deeper bits are defined as 0.
pub const MAX_BIT_DEPTH: u32 = 52;

const LIPSCHITZ_GRID: usize = 10_000;

/// A message in `[0, 1]` viewed through its binary expansion.
///
/// Dyadic rationals use the terminating expansion, so `0.5` is `0.1000...`.
/// The value `1.0` has no terminating expansion and is read as `0.111...`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Message(f64);

impl Message {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfSupport(value));
        }
        Ok(Message(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The `k`-th binary digit (`k >= 1`) of the message.
    pub fn bit(self, k: u32) -> u8 {
        assert!(k >= 1, "bit indices start at 1");
        if k > MAX_BIT_DEPTH {
            return 0;
        }
        if self.0 == 1.0 {
            return 1;
        }
        // scaling by a power of two is exact
        let scaled = (self.0 * (1u64 << k) as f64).floor() as u64;
        (scaled & 1) as u8
    }

    /// First `depth` digits, capped at `MAX_BIT_DEPTH`.
    pub fn bits(self, depth: u32) -> Vec<u8> {
        (1..=depth.min(MAX_BIT_DEPTH)).map(|k| self.bit(k)).collect()
    }

    /// `sum_{k <= l} x_k 2^-k`.
    pub fn quantize(self, l: u32) -> f64 {
        assert!(l >= 1, "quantizer rate must be positive");
        reconstruct(&self.bits(l))
    }
}

/// `sum_k bits[k-1] 2^-k`.
pub fn reconstruct(bits: &[u8]) -> f64 {
    bits.iter()
        .enumerate()
        .map(|(i, &b)| if b == 1 { 0.5f64.powi(i as i32 + 1) } else { 0.0 })
        .sum()
}

/// Free function forms for callers that hold a raw value.
pub fn bit_of(value: f64, k: u32) -> Result<u8> {
    Ok(Message::new(value)?.bit(k))
}

pub fn quantize(value: f64, l: u32) -> Result<f64> {
    Ok(Message::new(value)?.quantize(l))
}

/// Family of prior distributions on the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorFamily {
    /// Uniform on `[0, 1]`.
    Uniform,
    /// `F(x) = x^exponent` on `[0, 1]`, `exponent >= 1`.
    Power { exponent: f64 },
}

/// A prior together with its CDF transform and squared Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    family: PriorFamily,
    lipschitz_sq: f64,
}

impl PriorSpec {
    pub fn uniform() -> Self {
        PriorSpec {
            family: PriorFamily::Uniform,
            lipschitz_sq: 1.0,
        }
    }

    /// Power prior with its tight constant `exponent^2`.
    pub fn power(exponent: f64) -> Result<Self> {
        Self::power_with_lipschitz(exponent, exponent * exponent)
    }

    /// Power prior with an explicitly declared constant, validated on a grid.
    pub fn power_with_lipschitz(exponent: f64, lipschitz_sq: f64) -> Result<Self> {
        if !(exponent.is_finite() && exponent >= 1.0) {
            return Err(Error::InvalidPrior(format!(
                "power exponent {exponent} must be finite and >= 1 for a Lipschitz CDF"
            )));
        }
        let prior = PriorSpec {
            family: PriorFamily::Power { exponent },
            lipschitz_sq,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn family(&self) -> PriorFamily {
        self.family
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.family, PriorFamily::Uniform)
    }

    pub fn lipschitz_sq(&self) -> f64 {
        self.lipschitz_sq
    }

    pub fn support(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    pub fn label(&self) -> String {
        match self.family {
            PriorFamily::Uniform => "uniform".into(),
            PriorFamily::Power { exponent } => format!("power(exponent={exponent};lipschitz_sq={})", self.lipschitz_sq),
        }
    }

    /// Checks monotonicity, the endpoint values, and the squared Lipschitz
    /// constant on adjacent pairs of a uniform grid.
    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz_sq.is_finite() && self.lipschitz_sq > 0.0) {
            return Err(Error::InvalidPrior(format!("lipschitz_sq {} must be positive", self.lipschitz_sq)));
        }
        let (a, b) = self.support();
        if self.cdf(a) != 0.0 || self.cdf(b) != 1.0 {
            return Err(Error::InvalidPrior("cdf must map the support onto [0, 1]".into()));
        }
        let step = (b - a) / LIPSCHITZ_GRID as f64;
        let mut prev = (a, self.cdf(a));
        for i in 1..=LIPSCHITZ_GRID {
            let u = a + step * i as f64;
            let fu = self.cdf(u);
            if fu <= prev.1 {
                return Err(Error::InvalidPrior(format!("cdf not strictly increasing at {u}")));
            }
            let lhs = (fu - prev.1).powi(2);
            let rhs = self.lipschitz_sq * (u - prev.0).powi(2);
            if lhs > rhs * (1.0 + 1e-9) {
                return Err(Error::InvalidPrior(format!(
                    "declared lipschitz_sq {} violated near x = {u}: slope^2 = {}",
                    self.lipschitz_sq,
                    lhs / (u - prev.0).powi(2)
                )));
            }
            prev = (u, fu);
        }
        Ok(())
    }

    fn cdf(&self, x: f64) -> f64 {
        match self.family {
            PriorFamily::Uniform => x,
            PriorFamily::Power { exponent } => x.powf(exponent),
        }
    }

    fn inverse_cdf(&self, u: f64) -> f64 {
        match self.family {
            PriorFamily::Uniform => u,
            PriorFamily::Power { exponent } => u.powf(exponent.recip()),
        }
    }

    /// `F(x)`.
    pub fn to_uniform(&self, x: f64) -> Result<f64> {
        let (a, b) = self.support();
        if !(a..=b).contains(&x) {
            return Err(Error::OutOfSupport(x));
        }
        Ok(self.cdf(x))
    }

    /// `F^-1(u)`.
    pub fn from_uniform(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::OutOfSupport(u));
        }
        Ok(self.inverse_cdf(u))
    }
}

/// Prior section of a config file: `{"prior":"uniform"}` or
/// `{"prior":"power","exponent":2}` with an optional `"lipschitz_sq"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "prior", rename_all = "lowercase")]
pub enum PriorConfig {
    Uniform,
    Power {
        exponent: f64,
        #[serde(default)]
        lipschitz_sq: Option<f64>,
    },
}

impl PriorConfig {
    pub fn build(&self) -> Result<PriorSpec> {
        match *self {
            PriorConfig::Uniform => Ok(PriorSpec::uniform()),
            PriorConfig::Power { exponent, lipschitz_sq } => match lipschitz_sq {
                Some(k) => PriorSpec::power_with_lipschitz(exponent, k),
                None => PriorSpec::power(exponent),
            },
        }
    }
}
