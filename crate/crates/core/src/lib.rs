//! Non-adaptive dyadic transmission policies for noisy target localization.
//!
//! A target `X` in `[0, 1]` is located by asking for the bits of its binary
//! expansion over a noisy binary-input channel. A transmission pattern decides
//! how many times each bit is asked. This crate provides:
//!
//! * [`channel`]: channels and their information constants (`C`, `B`, `r`, `A1`, `A2`),
//! * [`source`]: dyadic messages, quantization and CDF priors,
//! * [`policy`]: the bounds `L <= D <= U`, efficient-pattern search and the Aurelian policy,
//! * [`decoder`]: posterior recursion and exact distortion,
//! * [`sim`]: reproducible Monte-Carlo estimates and sweeps.

pub mod channel;
pub mod decoder;
pub mod error;
pub mod policy;
pub mod sim;
pub mod source;

pub use channel::{
    b_alt, b_functional, chernoff_information, info_constants, ChannelConfig, ChannelSpec, Chernoff, InfoConstants,
};
pub use decoder::{exact_bit_variance, exact_distortion, posterior_update, BitVarianceCache, PosteriorState};
pub use error::{Error, Result};
pub use policy::{
    aurelian, check_efficient_properties, corollary_bounds, efficient_search, enumerate_patterns, lower_bound,
    upper_bound, CorollaryReport, EfficiencyReport, SearchMode, TransmissionPattern,
};
pub use sim::{
    aurelian_sweep, estimate_distortion, nonuniform_experiment, run_trial, DistortionEstimate, Estimator,
    NonUniformReport, PatternPlan, QuantizerDepth, SimConfig, SweepMode, SweepRow, SweepTable,
};
pub use source::{Message, PriorConfig, PriorSpec};
