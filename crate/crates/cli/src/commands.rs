//! The subcommands, each producing CSV files and a console summary.

use std::fmt::Write as _;

use aurelian_core::policy::{ln_lower_bound, ln_upper_bound};
use aurelian_core::sim::{DistortionEstimate, PRIOR_DISTORTION};
use aurelian_core::{
    aurelian, aurelian_sweep, check_efficient_properties, corollary_bounds, efficient_search, enumerate_patterns,
    estimate_distortion, exact_distortion, info_constants, lower_bound, nonuniform_experiment, upper_bound,
    BitVarianceCache, ChannelSpec, Estimator, InfoConstants, NonUniformReport, PriorSpec, QuantizerDepth, Result,
    SearchMode, SimConfig, SweepMode, SweepTable, TransmissionPattern,
};

use crate::report::{num, CsvFile};

/// Constants the reference experiment reports for BAC(0.9, 0.8).
pub const REPORTED_C: f64 = 0.77;
pub const REPORTED_B: f64 = 2.08;
/// Reported optimum of the n = 10, depth 3 experiment.
pub const REPORTED_OPTIMUM: [u64; 3] = [6, 3, 1];

/// Slack on the `D <= U` side of the bound check.
pub const UPPER_TOLERANCE: f64 = 1e-12;

/// Output of one subcommand.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub console: String,
    pub files: Vec<CsvFile>,
}

fn base_csv(name: &str, schema: &str, header: &[&str], channel: &ChannelSpec) -> CsvFile {
    CsvFile::new(name, schema, header).provenance("channel", channel.label())
}

fn is_reference_channel(ch: &ChannelSpec) -> bool {
    let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
    close(ch.f0(), &[0.9, 0.1]) && close(ch.f1(), &[0.2, 0.8])
}

pub struct InfoResult {
    pub constants: InfoConstants,
    pub output: CommandOutput,
}

pub fn info(channel: &ChannelSpec) -> Result<InfoResult> {
    let k = info_constants(channel)?;
    let reference = is_reference_channel(channel);
    let mut csv = base_csv("info.csv", "info", &["quantity", "value", "reported_value", "note"], channel);
    let reported_value = |v: f64| if reference { num(v) } else { String::new() };
    let rows: [(&str, f64, String, &str); 8] = [
        ("C", k.c, reported_value(REPORTED_C), "Chernoff information (nats)"),
        ("s_star", k.s_star, String::new(), "Chernoff minimizer"),
        ("B", k.b, reported_value(REPORTED_B), "mean |log-likelihood ratio| under (f0+f1)/2"),
        ("b_alt", k.b_alt, String::new(), "E[exp(-|llr|)] under (f0+f1)/2"),
        ("r", k.r as f64, String::new(), "max(1, floor(ln4/C))"),
        ("r_real", k.r_real, String::new(), "ln4/C"),
        ("A1", k.a1, String::new(), "min(sqrt2 (ln4/C + 1) B, ln4)"),
        ("A2", k.a2, String::new(), "sqrt(2r) C"),
    ];
    let mut console = format!("channel: {}\n", channel.label());
    for (name, value, reported, note) in rows {
        csv.push(vec![name.into(), num(value), reported.clone(), note.into()]);
        let _ = write!(console, "  {name:<7} {value:>14.6}");
        if !reported.is_empty() {
            let _ = write!(console, "   (reported {reported}, difference {:+.4})", value - reported.parse::<f64>().unwrap());
        }
        console.push('\n');
    }
    if reference {
        console.push_str(
            "  note: reported constants for this channel differ from the computed ones; \
             computed values are used throughout (2.08 = ln 8 is the largest |llr| here).\n",
        );
    }
    Ok(InfoResult {
        constants: k,
        output: CommandOutput {
            console,
            files: vec![csv],
        },
    })
}

#[derive(Debug, Clone)]
pub struct Fig2Row {
    pub pattern: TransmissionPattern,
    pub lower: f64,
    pub upper: f64,
    pub exact: f64,
    pub mc: DistortionEstimate,
    pub mc_fidelity: DistortionEstimate,
}

impl Fig2Row {
    pub fn upper_ok(&self) -> bool {
        self.exact <= self.upper + UPPER_TOLERANCE
    }

    pub fn lower_ok(&self) -> bool {
        self.lower <= self.exact
    }
}

#[derive(Debug, Clone)]
pub struct Fig2Result {
    pub constants: InfoConstants,
    pub depth: usize,
    pub rows: Vec<Fig2Row>,
    pub argmin_upper: usize,
    pub argmin_exact: usize,
    pub argmin_mc: usize,
    pub argmin_mc_fidelity: usize,
    pub output: CommandOutput,
}

impl Fig2Result {
    pub fn exact_argmin_matches_reported(&self) -> bool {
        self.rows[self.argmin_exact].pattern == TransmissionPattern::new(REPORTED_OPTIMUM.to_vec())
    }
}

/// Trial count of the small reproduction run shown next to the main estimate.
pub const FIDELITY_TRIALS: u64 = 100;

fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut rank = vec![0; values.len()];
    for (r, i) in order.into_iter().enumerate() {
        rank[i] = r + 1;
    }
    rank
}

fn argmin(values: &[f64]) -> usize {
    ranks(values).iter().position(|&r| r == 1).unwrap_or(0)
}

/// Bounds, exact and simulated distortion for every pattern of budget `n`
/// over the first `depth` bits.
pub fn fig2(
    channel: &ChannelSpec,
    n: u64,
    depth: usize,
    trials: u64,
    seed: u64,
    estimator: Estimator,
) -> Result<Fig2Result> {
    let k = info_constants(channel)?;
    let patterns = enumerate_patterns(n, depth)?;
    let mut cache = BitVarianceCache::new(channel.clone());
    let mut rows = Vec::with_capacity(patterns.len());
    for t in patterns {
        let sim = |trials| {
            let cfg = SimConfig::new(channel.clone(), t.clone(), trials, seed)
                .with_estimator(estimator)
                .with_quantizer_depth(QuantizerDepth::Bits(depth as u32));
            estimate_distortion(&cfg)
        };
        rows.push(Fig2Row {
            lower: lower_bound(&t, k.b),
            upper: upper_bound(&t, k.c),
            exact: cache.distortion(&t)?,
            mc: sim(trials)?,
            mc_fidelity: sim(FIDELITY_TRIALS.min(trials))?,
            pattern: t,
        });
    }
    let col = |f: fn(&Fig2Row) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let (u, e, m, m100) = (
        col(|r| r.upper),
        col(|r| r.exact),
        col(|r| r.mc.mean),
        col(|r| r.mc_fidelity.mean),
    );
    let (rank_u, rank_e, rank_m, rank_m100) = (ranks(&u), ranks(&e), ranks(&m), ranks(&m100));

    let mut table = base_csv(
        "fig2.csv",
        "fig2",
        &[
            "pattern", "L", "U", "exact_D", "mc_D", "mc_stderr", "mc100_D", "mc100_stderr", "rank_U", "rank_exact",
            "rank_mc", "rank_mc100", "lower_ok", "upper_ok",
        ],
        channel,
    )
    .provenance("n", n)
    .provenance("depth", depth)
    .provenance("trials", trials)
    .provenance("seed", seed)
    .provenance("estimator", estimator.tag());
    for (i, r) in rows.iter().enumerate() {
        table.push(vec![
            r.pattern.padded(depth),
            num(r.lower),
            num(r.upper),
            num(r.exact),
            num(r.mc.mean),
            num(r.mc.std_error),
            num(r.mc_fidelity.mean),
            num(r.mc_fidelity.std_error),
            rank_u[i].to_string(),
            rank_e[i].to_string(),
            rank_m[i].to_string(),
            rank_m100[i].to_string(),
            r.lower_ok().to_string(),
            r.upper_ok().to_string(),
        ]);
    }

    let result_argmins = (argmin(&u), argmin(&e), argmin(&m), argmin(&m100));
    let reported = TransmissionPattern::new(REPORTED_OPTIMUM.to_vec());
    let upper_violations = rows.iter().filter(|r| !r.upper_ok()).count();
    let lower_violations = rows.iter().filter(|r| !r.lower_ok()).count();
    let mut summary = base_csv("fig2_summary.csv", "fig2_summary", &["item", "value"], channel)
        .provenance("n", n)
        .provenance("depth", depth)
        .provenance("trials", trials)
        .provenance("seed", seed);
    let pad = |i: usize| rows[i].pattern.padded(depth);
    let items: Vec<(&str, String)> = vec![
        ("patterns", rows.len().to_string()),
        ("C", num(k.c)),
        ("B", num(k.b)),
        ("argmin_U", pad(result_argmins.0)),
        ("argmin_exact", pad(result_argmins.1)),
        ("argmin_mc", pad(result_argmins.2)),
        ("argmin_mc100", pad(result_argmins.3)),
        ("reported_optimum", reported.padded(depth)),
        ("exact_argmin_matches_reported", (rows[result_argmins.1].pattern == reported).to_string()),
        ("U_argmin_matches_reported", (rows[result_argmins.0].pattern == reported).to_string()),
        ("mc_argmin_matches_reported", (rows[result_argmins.2].pattern == reported).to_string()),
        ("mc100_argmin_matches_reported", (rows[result_argmins.3].pattern == reported).to_string()),
        ("upper_violations", upper_violations.to_string()),
        ("lower_violations", lower_violations.to_string()),
    ];
    let mut console = format!("fig2: {} patterns, n = {n}, depth = {depth}, channel {}\n", rows.len(), channel.label());
    for (item, value) in items {
        let _ = writeln!(console, "  {item:<32} {value}");
        summary.push(vec![item.into(), value]);
    }
    Ok(Fig2Result {
        constants: k,
        depth,
        argmin_upper: result_argmins.0,
        argmin_exact: result_argmins.1,
        argmin_mc: result_argmins.2,
        argmin_mc_fidelity: result_argmins.3,
        rows,
        output: CommandOutput {
            console,
            files: vec![table, summary],
        },
    })
}

/// Sweep grid `step, 2 step, ..., n_max`, dropping budgets below `r`.
pub fn sweep_grid(n_max: u64, step: u64, r: u64) -> Vec<u64> {
    (1..=n_max / step.max(1)).map(|i| i * step).filter(|&n| n >= r).collect()
}

#[derive(Debug, Clone)]
pub struct Fig3Result {
    pub table: SweepTable,
    /// `D_300 / D_0` for the Aurelian policy, computed exactly.
    pub d300_ratio: Option<f64>,
    pub output: CommandOutput,
}

impl Fig3Result {
    pub fn min_rate(&self) -> f64 {
        self.table.rows.iter().map(|r| r.ln_distortion_rate()).fold(f64::INFINITY, f64::min)
    }
}

pub fn fig3(channel: &ChannelSpec, n_max: u64, step: u64, mode: SweepMode) -> Result<Fig3Result> {
    if step == 0 || n_max < step {
        return Err(aurelian_core::Error::InvalidConfig(format!(
            "need n_max >= step >= 1, got n_max = {n_max}, step = {step}"
        )));
    }
    let k = info_constants(channel)?;
    let grid = sweep_grid(n_max, step, k.r);
    let table = aurelian_sweep(channel, &grid, mode)?;
    let d300_ratio = if 300 >= k.r {
        Some(exact_distortion(&aurelian(300, &k)?, channel)? / PRIOR_DISTORTION)
    } else {
        None
    };

    let (mode_tag, seed, trials) = match mode {
        SweepMode::Exact => ("exact", String::new(), String::new()),
        SweepMode::MonteCarlo { trials, seed } => ("mc", seed.to_string(), trials.to_string()),
    };
    let with_prov = |f: CsvFile| {
        f.provenance("mode", mode_tag)
            .provenance("n_max", n_max)
            .provenance("step", step)
            .provenance("seed", &seed)
            .provenance("trials", &trials)
    };
    let mut main = with_prov(base_csv(
        "fig3.csv",
        "fig3",
        &[
            "n",
            "q",
            "D",
            "D_stderr",
            "U",
            "L",
            "ln_D_over_sqrt_n",
            "ln_U_over_sqrt_n",
            "ln_L_over_sqrt_n",
            "D_over_D0",
            "neg_A1",
            "neg_A2",
        ],
        channel,
    ));
    let mut rate = with_prov(base_csv("fig3_rate.csv", "fig3_rate", &["n", "ln_D_over_sqrt_n"], channel));
    let mut normalized = with_prov(base_csv("fig3_normalized.csv", "fig3_normalized", &["n", "D_over_D0"], channel));
    for row in &table.rows {
        let sqrt_n = (row.n as f64).sqrt();
        main.push(vec![
            row.n.to_string(),
            row.q.to_string(),
            num(row.distortion),
            num(row.std_error),
            num(row.ln_upper.exp()),
            num(row.ln_lower.exp()),
            num(row.ln_distortion_rate()),
            num(row.ln_upper_rate()),
            num(row.ln_lower / sqrt_n),
            num(row.normalized()),
            num(-k.a1),
            num(-k.a2),
        ]);
        rate.push(vec![row.n.to_string(), num(row.ln_distortion_rate())]);
        normalized.push(vec![row.n.to_string(), num(row.normalized())]);
    }

    let mut summary = with_prov(base_csv("fig3_summary.csv", "fig3_summary", &["item", "value"], channel));
    let last = table.rows.last();
    let min_rate = table.rows.iter().map(|r| r.ln_distortion_rate()).fold(f64::INFINITY, f64::min);
    let items: Vec<(&str, String)> = vec![
        ("A1", num(k.a1)),
        ("A2", num(k.a2)),
        ("A1_over_A2", num(k.a1 / k.a2)),
        ("A2_over_A1", num(k.a2 / k.a1)),
        ("rows", table.rows.len().to_string()),
        ("min_ln_D_over_sqrt_n", num(min_rate)),
        ("all_rates_above_neg_A1", (min_rate >= -k.a1).to_string()),
        ("last_n", last.map(|r| r.n.to_string()).unwrap_or_default()),
        ("last_ln_D_over_sqrt_n", last.map(|r| num(r.ln_distortion_rate())).unwrap_or_default()),
        ("last_ln_U_over_sqrt_n", last.map(|r| num(r.ln_upper_rate())).unwrap_or_default()),
        ("D300_over_D0", d300_ratio.map(num).unwrap_or_default()),
        ("D300_over_D0_below_1e-3", d300_ratio.map(|v| (v < 1e-3).to_string()).unwrap_or_default()),
    ];
    let mut console = format!(
        "fig3: Aurelian sweep ({mode_tag}) over {} budgets up to n = {n_max}, channel {}\n",
        table.rows.len(),
        channel.label()
    );
    for (item, value) in items {
        let _ = writeln!(console, "  {item:<28} {value}");
        summary.push(vec![item.into(), value]);
    }
    Ok(Fig3Result {
        table,
        d300_ratio,
        output: CommandOutput {
            console,
            files: vec![main, rate, normalized, summary],
        },
    })
}

/// How `policy` picks a pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Aurelian,
    Greedy,
    Exhaustive(usize),
}

impl std::str::FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "aurelian" => Ok(Rule::Aurelian),
            "greedy" => Ok(Rule::Greedy),
            _ => match s.strip_prefix("exhaustive:") {
                Some(d) => d
                    .parse::<usize>()
                    .ok()
                    .filter(|&d| d >= 1)
                    .map(Rule::Exhaustive)
                    .ok_or_else(|| format!("bad exhaustive depth in {s:?}")),
                None => Err(format!("expected aurelian, greedy or exhaustive:DEPTH, got {s:?}")),
            },
        }
    }
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rule::Aurelian => f.write_str("aurelian"),
            Rule::Greedy => f.write_str("greedy"),
            Rule::Exhaustive(d) => write!(f, "exhaustive:{d}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolicyResult {
    pub pattern: TransmissionPattern,
    pub output: CommandOutput,
}

pub fn policy(channel: &ChannelSpec, n: u64, rule: Rule) -> Result<PolicyResult> {
    let k = info_constants(channel)?;
    let pattern = match rule {
        Rule::Aurelian => aurelian(n, &k)?,
        Rule::Greedy => efficient_search(n, k.c, SearchMode::Greedy { max_depth: None })?,
        Rule::Exhaustive(max_depth) => efficient_search(n, k.c, SearchMode::Exhaustive { max_depth })?,
    };
    let eff = check_efficient_properties(&pattern, k.r_real);
    let cor = corollary_bounds(&pattern, k.r);
    // exact distortion is optional output; skip it when the histogram budget is exceeded
    let exact = exact_distortion(&pattern, channel).ok();
    let u = upper_bound(&pattern, k.c);
    let l = lower_bound(&pattern, k.b);

    let mut csv = base_csv(
        "policy.csv",
        "policy",
        &[
            "pattern",
            "U",
            "L",
            "exact_D",
            "rank",
            "rule",
            "n",
            "ln_U",
            "ln_L",
            "no_gap",
            "spacing",
            "first_count_bound",
            "depth_bound",
        ],
        channel,
    )
    .provenance("rule", rule)
    .provenance("n", n);
    csv.push(vec![
        pattern.to_string(),
        num(u),
        num(l),
        exact.map(num).unwrap_or_default(),
        "1".into(),
        rule.to_string(),
        n.to_string(),
        num(ln_upper_bound(&pattern, k.c)),
        num(ln_lower_bound(&pattern, k.b)),
        eff.no_gap.to_string(),
        eff.spacing.to_string(),
        cor.first_count.to_string(),
        cor.depth.to_string(),
    ]);
    let mut console = String::new();
    let _ = writeln!(console, "policy ({rule}) for n = {n}, channel {}", channel.label());
    let _ = writeln!(console, "  pattern            ({pattern})");
    let _ = writeln!(console, "  q                  {}", pattern.q());
    let _ = writeln!(console, "  U                  {u:.6e}");
    let _ = writeln!(console, "  L                  {l:.6e}");
    if let Some(d) = exact {
        let _ = writeln!(console, "  exact D            {d:.6e}");
    }
    let _ = writeln!(
        console,
        "  structure (r_real = {:.4}): no_gap = {}, spacing = {}",
        k.r_real, eff.no_gap, eff.spacing
    );
    let _ = writeln!(
        console,
        "  corollary (r = {}): t1 <= q(r+1) = {}, q <= sqrt(2n+1/2)-1/4 = {}",
        k.r, cor.first_count, cor.depth
    );
    Ok(PolicyResult {
        pattern,
        output: CommandOutput {
            console,
            files: vec![csv],
        },
    })
}

#[derive(Debug, Clone)]
pub struct NonUniformResult {
    pub report: NonUniformReport,
    pub output: CommandOutput,
}

pub fn nonuniform(
    channel: &ChannelSpec,
    prior: &PriorSpec,
    pattern: &TransmissionPattern,
    trials: u64,
    seed: u64,
) -> Result<NonUniformResult> {
    let report = nonuniform_experiment(channel, prior, pattern, trials, seed)?;
    let mut csv = base_csv(
        "nonuniform.csv",
        "nonuniform",
        &[
            "prior",
            "lipschitz_sq",
            "pattern",
            "trials",
            "uniform_D",
            "uniform_stderr",
            "original_D",
            "original_stderr",
            "bound_rhs",
            "holds",
        ],
        channel,
    )
    .provenance("seed", seed);
    let rhs = report.lipschitz_sq * report.original.mean;
    csv.push(vec![
        prior.label(),
        num(report.lipschitz_sq),
        pattern.to_string(),
        trials.to_string(),
        num(report.uniform.mean),
        num(report.uniform.std_error),
        num(report.original.mean),
        num(report.original.std_error),
        num(rhs),
        report.holds.to_string(),
    ]);
    let console = format!(
        "nonuniform: prior {}, pattern ({pattern}), {trials} trials\n  \
         uniform-domain D  {:.6e} +- {:.2e}\n  original-domain D {:.6e} +- {:.2e}\n  \
         lipschitz_sq * original = {rhs:.6e}; inequality holds (3 se): {}\n",
        prior.label(),
        report.uniform.mean,
        report.uniform.std_error,
        report.original.mean,
        report.original.std_error,
        report.holds
    );
    Ok(NonUniformResult {
        report,
        output: CommandOutput {
            console,
            files: vec![csv],
        },
    })
}
