//! Experiment harness: run configuration, seeded multi-run execution,
//! regret computation, CSV emission, directory verification, and the
//! concentration property suites.
//!
//! Artifacts per run, under `output_dir`:
//! - `steps_<base>.csv` — per-(t, agent) rewards, epoch, cumulative rounds;
//! - `trace_<base>.json` — epoch-level facts for `verify`;
//! - `summary_<env>_<algo>_M<m>_T<t>.csv` — one row per seed.
//!
//! where `<base>` is `<env>_<algo>_M<m>_T<t>_seed<seed>`. All artifacts are
//! byte-stable for a fixed `(config, seed)` except the `wall_ms` column of
//! the summary, which records measured wall time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coordinator::{epoch_bound, epoch_bound_tight, mod_ucrl2_epoch_bound, SyncOptions};
use crate::envs::EnvSpec;
use crate::error::{ensure, Error, Result};
use crate::exec::{indexed_map, ExecMode};
use crate::mdp::optimal_gain;
use crate::seeding;
use crate::sim::{run_dist_ucrl, run_dist_ucrl_over};
use crate::baselines::{mod_ucrl2_run, ucrl2_run};
use crate::trace::{
    check_trace, read_steps_csv, write_steps_csv, Algorithm, ExperimentTrace, RunMeta,
};
use crate::transport::TcpChannel;

/// Tolerance used for the gain oracle backing regret computation.
pub const RHO_STAR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    Inproc,
    Tcp,
}

/// Where synchronization traffic goes: in-process (default) or a TCP
/// coordinator server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    #[serde(default)]
    pub kind: TransportKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<u16>,
}

impl TransportConfig {
    fn addr(&self) -> Result<String> {
        match self.kind {
            TransportKind::Inproc => Err(Error::Config("inproc transport has no address".into())),
            TransportKind::Tcp => {
                let host = self
                    .host
                    .as_ref()
                    .ok_or_else(|| Error::Config("tcp transport requires a host".into()))?;
                let port = self
                    .port
                    .ok_or_else(|| Error::Config("tcp transport requires a port".into()))?;
                Ok(format!("{host}:{port}"))
            }
        }
    }
}

/// One experiment: an environment, an algorithm, and a seed sweep.
/// Unknown keys in the JSON document are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub algorithm: Algorithm,
    pub agents: usize,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_override: Option<f64>,
    #[serde(default)]
    pub clip_optimistic_reward: bool,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub transport: TransportConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.agents >= 1, "agents must be ≥ 1");
        ensure!(self.horizon >= 1, "horizon must be ≥ 1");
        ensure!(!self.seeds.is_empty(), "seeds must be nonempty");
        if self.algorithm == Algorithm::Ucrl2 {
            ensure!(self.agents == 1, "ucrl2 requires agents = 1");
        }
        if self.transport.kind == TransportKind::Tcp {
            self.transport.addr()?;
            ensure!(
                self.algorithm == Algorithm::DistUcrl,
                "tcp transport applies only to dist_ucrl"
            );
        }
        Ok(())
    }

    /// FNV-1a hash of the canonical config JSON, as fixed-width hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialization cannot fail");
        format!("{:016x}", seeding::fnv1a64(canonical.as_bytes()))
    }

    pub fn sync_options(&self) -> SyncOptions {
        SyncOptions {
            epsilon_override: self.epsilon_override,
            clip_optimistic_reward: self.clip_optimistic_reward,
            ..SyncOptions::default()
        }
    }

    fn file_base(&self, seed: u64) -> String {
        format!(
            "{}_{}_M{}_T{}_seed{}",
            self.env.name.as_str(),
            self.algorithm.as_str(),
            self.agents,
            self.horizon,
            seed
        )
    }

    fn summary_name(&self) -> String {
        format!(
            "summary_{}_{}_M{}_T{}.csv",
            self.env.name.as_str(),
            self.algorithm.as_str(),
            self.agents,
            self.horizon
        )
    }
}

/// Parses a config document, rejecting unknown keys.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
    config.validate()?;
    Ok(config)
}

/// What one seeded run produced: the trace, or the failure that stopped it.
#[derive(Debug)]
pub struct RunOutcome {
    pub seed: u64,
    pub trace: std::result::Result<ExperimentTrace, String>,
}

/// Runs every seed of the config and writes all artifacts. Failed seeds
/// (EVI divergence) are recorded with NaN regret in the summary and do not
/// stop the other seeds; the caller inspects the outcomes.
pub fn run_experiment(config: &RunConfig) -> Result<Vec<RunOutcome>> {
    // TCP mode shares one coordinator server, which serves sessions
    // sequentially; seed sweeps parallelize only in-process.
    let mode = match config.transport.kind {
        TransportKind::Inproc => ExecMode::Parallel,
        TransportKind::Tcp => ExecMode::Sequential,
    };
    run_experiment_with_mode(config, mode)
}

pub fn run_experiment_with_mode(config: &RunConfig, mode: ExecMode) -> Result<Vec<RunOutcome>> {
    config.validate()?;
    let mdp = config.env.build()?;
    let rho_star = optimal_gain(&mdp, RHO_STAR_TOL)?.gain;
    let config_hash = config.hash();
    let opts = config.sync_options();

    let outcomes: Vec<RunOutcome> = indexed_map(mode, config.seeds.len(), |idx| {
        let seed = config.seeds[idx];
        let meta = RunMeta {
            env: config.env.name.as_str().to_string(),
            algo: config.algorithm,
            n_agents: config.agents,
            horizon: config.horizon,
            seed,
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            rho_star,
            config_hash: config_hash.clone(),
        };
        let result = match config.algorithm {
            Algorithm::DistUcrl => match config.transport.kind {
                TransportKind::Inproc => run_dist_ucrl(&mdp, meta, &opts, false),
                TransportKind::Tcp => config.transport.addr().and_then(|addr| {
                    let mut channel = TcpChannel::connect(addr, config.agents, false)
                        .map_err(Error::Transport)?;
                    run_dist_ucrl_over(&mdp, meta, &mut channel)
                }),
            },
            Algorithm::ModUcrl2 => mod_ucrl2_run(&mdp, meta, &opts),
            Algorithm::Ucrl2 => ucrl2_run(&mdp, meta, &opts),
        };
        RunOutcome {
            seed,
            trace: result.map_err(|e| e.to_string()),
        }
    });

    write_artifacts(config, &outcomes)?;
    Ok(outcomes)
}

fn write_artifacts(config: &RunConfig, outcomes: &[RunOutcome]) -> Result<()> {
    std::fs::create_dir_all(&config.output_dir)?;
    let mut summary = String::from(SUMMARY_CSV_HEADER);
    summary.push('\n');
    for outcome in outcomes {
        match &outcome.trace {
            Ok(trace) => {
                let base = config.file_base(outcome.seed);
                let mut steps_file =
                    std::fs::File::create(config.output_dir.join(format!("steps_{base}.csv")))?;
                {
                    let mut writer = std::io::BufWriter::new(&mut steps_file);
                    write_steps_csv(trace, &mut writer)?;
                }
                std::fs::write(
                    config.output_dir.join(format!("trace_{base}.json")),
                    trace.to_json(),
                )?;
                let _ = writeln!(summary, "{}", summary_row(trace));
            }
            Err(err) => {
                eprintln!("seed {} failed: {err}", outcome.seed);
                let _ = writeln!(
                    summary,
                    "{},{},{},{},{},NaN,NaN,0,0,0",
                    config.env.name.as_str(),
                    config.algorithm.as_str(),
                    config.agents,
                    config.horizon,
                    outcome.seed
                );
            }
        }
    }
    std::fs::write(config.output_dir.join(config.summary_name()), summary)?;
    Ok(())
}

/// Summary CSV header, fixed column order.
pub const SUMMARY_CSV_HEADER: &str =
    "env,algo,M,T,seed,final_regret,per_agent_regret,sync_rounds,epoch_bound,wall_ms";

fn summary_row(trace: &ExperimentTrace) -> String {
    let meta = &trace.meta;
    let final_regret = trace.final_regret();
    let bound = applicable_epoch_bound(meta).unwrap_or(0);
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        meta.env,
        meta.algo.as_str(),
        meta.n_agents,
        meta.horizon,
        meta.seed,
        final_regret,
        final_regret / meta.n_agents as f64,
        trace.comm_rounds,
        bound,
        trace.wall_ms
    )
}

fn applicable_epoch_bound(meta: &RunMeta) -> Result<u64> {
    match meta.algo {
        Algorithm::DistUcrl => epoch_bound(meta.n_agents, meta.n_states, meta.n_actions, meta.horizon),
        Algorithm::ModUcrl2 | Algorithm::Ucrl2 => {
            mod_ucrl2_epoch_bound(meta.n_agents, meta.n_states, meta.n_actions, meta.horizon)
        }
    }
}

/// Cumulative regret series `Δ(t) = ρ*·M·t − Σ rewards through t`.
pub fn regret_series(trace: &ExperimentTrace, rho_star: f64) -> Result<Vec<f64>> {
    let m = trace.meta.n_agents;
    let t_horizon = trace.meta.horizon as usize;
    ensure!(
        trace.steps.rewards.len() == m * t_horizon,
        "trace holds {} rewards, expected {}",
        trace.steps.rewards.len(),
        m * t_horizon
    );
    let mut series = Vec::with_capacity(t_horizon);
    let mut cum = 0.0;
    for t in 0..t_horizon {
        for i in 0..m {
            cum += trace.steps.rewards[t * m + i];
        }
        series.push(rho_star * m as f64 * (t + 1) as f64 - cum);
    }
    Ok(series)
}

/// Per-agent regret series `Δ(t)/M` — the plotted quantity.
pub fn per_agent_regret_series(trace: &ExperimentTrace, rho_star: f64) -> Result<Vec<f64>> {
    let m = trace.meta.n_agents as f64;
    Ok(regret_series(trace, rho_star)?.into_iter().map(|x| x / m).collect())
}

/// First-half and second-half average slopes of a cumulative series.
pub fn split_slopes(series: &[f64]) -> (f64, f64) {
    let n = series.len();
    let half = n / 2;
    let first = series[half - 1] / half as f64;
    let second = (series[n - 1] - series[half - 1]) / (n - half) as f64;
    (first, second)
}

// ---------------------------------------------------------------------------
// Concentration property suites
// ---------------------------------------------------------------------------

/// One grid point of the martingale tail check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleEntry {
    pub epsilon: f64,
    pub empirical: f64,
    pub bound: f64,
    /// `bound + 3·√(bound·(1−bound)/trials)` — the flag threshold.
    pub threshold: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub n_sequences: usize,
    pub len: usize,
    pub increment_bound: f64,
    pub trials: usize,
    pub entries: Vec<MartingaleEntry>,
}

impl MartingaleReport {
    pub fn any_flagged(&self) -> bool {
        self.entries.iter().any(|e| e.flagged)
    }
}

/// Simulates `trials` replicates of `m` independent length-`len` martingales
/// with ±c/2 coin-flip increments and compares, for each ε, the empirical
/// exceedance frequency `P(Σ_{i,t} X_{i,t} ≥ ε)` against the tail bound
/// `exp(−2ε²/(M·T·c²))`, flagging any ε where the frequency beats the bound
/// by more than three binomial standard errors.
pub fn check_martingale_bound(
    m: usize,
    len: usize,
    c: f64,
    epsilon_grid: &[f64],
    trials: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<MartingaleReport> {
    ensure!(m >= 1 && len >= 1 && trials >= 1, "m, len, trials must be ≥ 1");
    ensure!(c > 0.0, "increment bound must be positive");
    let steps = m * len;
    let words = steps / 64;
    let rem = steps % 64;
    let sums: Vec<f64> = indexed_map(mode, trials, |trial| {
        use rand::Rng;
        let mut rng = seeding::stream(seed, seeding::PURPOSE_BOUNDS, trial as u64);
        // Each fair bit is one ±c/2 increment.
        let mut ones: u32 = 0;
        for _ in 0..words {
            ones += rng.random::<u64>().count_ones();
        }
        if rem > 0 {
            let word: u64 = rng.random();
            ones += (word & ((1u64 << rem) - 1)).count_ones();
        }
        (2.0 * f64::from(ones) - steps as f64) * (c / 2.0)
    });
    let entries = epsilon_grid
        .iter()
        .map(|&epsilon| {
            let exceed = sums.iter().filter(|&&x| x >= epsilon).count();
            let empirical = exceed as f64 / trials as f64;
            let bound = (-2.0 * epsilon * epsilon / (m as f64 * len as f64 * c * c)).exp();
            let threshold = bound + 3.0 * (bound * (1.0 - bound) / trials as f64).sqrt();
            MartingaleEntry {
                epsilon,
                empirical,
                bound,
                threshold,
                flagged: empirical > threshold,
            }
        })
        .collect();
    Ok(MartingaleReport {
        n_sequences: m,
        len,
        increment_bound: c,
        trials,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SumRootsReport {
    pub sequences: usize,
    pub violations: usize,
}

/// Checks the sum-of-roots inequality on the canonical sequences (the
/// frozen pair, a singleton, the doubling sequence to n = 30) plus
/// `extra_random` seeded random sequences satisfying the hypothesis.
pub fn sum_of_roots_suite(extra_random: usize, seed: u64) -> Result<SumRootsReport> {
    use rand::Rng;
    let mut sequences: Vec<Vec<f64>> = vec![
        vec![1.0, 1.0],
        vec![0.5],
        (0..30)
            .scan(0.0f64, |prefix, _| {
                let z = prefix.max(1.0);
                *prefix += z;
                Some(z)
            })
            .collect(),
    ];
    let mut rng = seeding::stream(seed, seeding::PURPOSE_BOUNDS, 0);
    for _ in 0..extra_random {
        let len = rng.random_range(1..40);
        let mut z = Vec::with_capacity(len);
        let mut prefix = 0.0f64;
        let mut last = 0.0f64;
        for _ in 0..len {
            let cap = prefix.max(1.0);
            let zk = rng.random_range(last..=cap);
            z.push(zk);
            prefix += zk;
            last = zk;
        }
        sequences.push(z);
    }
    let mut violations = 0;
    for z in &sequences {
        if !check_sum_of_roots(z)? {
            violations += 1;
        }
    }
    Ok(SumRootsReport {
        sequences: sequences.len(),
        violations,
    })
}

/// Verifies the sum-of-roots inequality
/// `Σ_k z_k/√(Z_{k−1}) ≤ (√2+1)·√(Z_n)` with `Z_k = max{1, Σ_{i≤k} z_i}`,
/// for a sequence satisfying the hypothesis `0 ≤ z_k ≤ Z_{k−1}`.
pub fn check_sum_of_roots(z: &[f64]) -> Result<bool> {
    ensure!(!z.is_empty(), "sequence must be nonempty");
    let mut prefix = 0.0f64;
    let mut lhs = 0.0f64;
    for (k, &zk) in z.iter().enumerate() {
        ensure!(zk >= 0.0, "z[{k}] = {zk} is negative");
        if k > 0 {
            ensure!(zk >= z[k - 1], "sequence must be nondecreasing at index {k}");
        }
        let z_floor = prefix.max(1.0);
        ensure!(
            zk <= z_floor + 1e-12,
            "hypothesis violated at index {k}: z = {zk} exceeds max(1, prefix) = {z_floor}"
        );
        lhs += zk / z_floor.sqrt();
        prefix += zk;
    }
    let rhs = (std::f64::consts::SQRT_2 + 1.0) * prefix.max(1.0).sqrt();
    Ok(lhs <= rhs + 1e-9)
}

// ---------------------------------------------------------------------------
// Summaries and directory operations
// ---------------------------------------------------------------------------

/// One parsed row of a summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub env: String,
    pub algo: String,
    pub m: usize,
    pub horizon: u64,
    pub seed: u64,
    pub final_regret: f64,
    pub per_agent_regret: f64,
    pub sync_rounds: u64,
    pub epoch_bound: u64,
    pub wall_ms: u64,
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty summary csv".into()))?;
    ensure!(header == SUMMARY_CSV_HEADER, "unexpected summary header {header:?}");
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        ensure!(fields.len() == 10, "summary row {idx} has {} fields", fields.len());
        rows.push(SummaryRow {
            env: fields[0].to_string(),
            algo: fields[1].to_string(),
            m: fields[2].parse().map_err(|e| Error::Config(format!("row {idx}: {e}")))?,
            horizon: fields[3].parse().map_err(|e| Error::Config(format!("row {idx}: {e}")))?,
            seed: fields[4].parse().map_err(|e| Error::Config(format!("row {idx}: {e}")))?,
            final_regret: fields[5].parse().map_err(|e| Error::Config(format!("row {idx}: {e}")))?,
            per_agent_regret: fields[6].parse().map_err(|e| Error::Config(format!("row {idx}: {e}")))?,
            sync_rounds: fields[7].parse().map_err(|e| Error::Config(format!("row {idx}: {e}")))?,
            epoch_bound: fields[8].parse().map_err(|e| Error::Config(format!("row {idx}: {e}")))?,
            wall_ms: fields[9].parse().map_err(|e| Error::Config(format!("row {idx}: {e}")))?,
        });
    }
    Ok(rows)
}

/// Loads and concatenates every `summary_*.csv` under `dir`.
pub fn load_summaries(dir: &Path) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for entry in sorted_entries(dir)? {
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with("summary_") && name.ends_with(".csv") {
            rows.extend(parse_summary_csv(&std::fs::read_to_string(entry.path())?)?);
        }
    }
    ensure!(!rows.is_empty(), "no summary_*.csv files under {}", dir.display());
    Ok(rows)
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::fs::DirEntry>> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

/// Mean per-agent regret and round counts per (env, algo, T, M) group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub env: String,
    pub algo: String,
    pub horizon: u64,
    pub m: usize,
    pub runs: usize,
    pub mean_final_regret: f64,
    pub mean_per_agent_regret: f64,
    pub mean_sync_rounds: f64,
    pub epoch_bound: u64,
    pub epoch_bound_tight: u64,
}

/// Ratio of mean per-agent regret between two agent counts of one group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub env: String,
    pub algo: String,
    pub horizon: u64,
    pub m_from: usize,
    pub m_to: usize,
    pub per_agent_regret_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub groups: Vec<GroupStats>,
    pub ratios: Vec<RatioRow>,
}

/// Aggregates summary rows into the scaling report: per-M means plus
/// pairwise per-agent regret ratios between consecutive M levels. Failed
/// rows (NaN regret) are excluded.
pub fn summarize(rows: &[SummaryRow], s_dim: impl Fn(&str) -> Option<(usize, usize)>) -> Result<ScalingReport> {
    let mut grouped: BTreeMap<(String, String, u64, usize), Vec<&SummaryRow>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.final_regret.is_finite()) {
        grouped
            .entry((row.env.clone(), row.algo.clone(), row.horizon, row.m))
            .or_default()
            .push(row);
    }
    ensure!(!grouped.is_empty(), "no usable summary rows");
    let mut groups = Vec::new();
    for ((env, algo, horizon, m), members) in &grouped {
        let runs = members.len();
        let mean = |f: &dyn Fn(&SummaryRow) -> f64| {
            members.iter().map(|r| f(r)).sum::<f64>() / runs as f64
        };
        let (bound, tight) = match s_dim(env) {
            Some((s, a)) if *m as u64 * *horizon >= (s * a) as u64 => {
                let b = match algo.as_str() {
                    "dist_ucrl" => epoch_bound(*m, s, a, *horizon)?,
                    _ => mod_ucrl2_epoch_bound(*m, s, a, *horizon)?,
                };
                let t = match algo.as_str() {
                    "dist_ucrl" => epoch_bound_tight(*m, s, a, *horizon)?,
                    _ => b,
                };
                (b, t)
            }
            _ => (0, 0),
        };
        groups.push(GroupStats {
            env: env.clone(),
            algo: algo.clone(),
            horizon: *horizon,
            m: *m,
            runs,
            mean_final_regret: mean(&|r| r.final_regret),
            mean_per_agent_regret: mean(&|r| r.per_agent_regret),
            mean_sync_rounds: mean(&|r| r.sync_rounds as f64),
            epoch_bound: bound,
            epoch_bound_tight: tight,
        });
    }
    let mut ratios = Vec::new();
    let mut by_series: BTreeMap<(String, String, u64), Vec<&GroupStats>> = BTreeMap::new();
    for g in &groups {
        by_series
            .entry((g.env.clone(), g.algo.clone(), g.horizon))
            .or_default()
            .push(g);
    }
    for ((env, algo, horizon), series) in by_series {
        let mut sorted = series.clone();
        sorted.sort_by_key(|g| g.m);
        for pair in sorted.windows(2) {
            ratios.push(RatioRow {
                env: env.clone(),
                algo: algo.clone(),
                horizon,
                m_from: pair[0].m,
                m_to: pair[1].m,
                per_agent_regret_ratio: pair[0].mean_per_agent_regret / pair[1].mean_per_agent_regret,
            });
        }
    }
    Ok(ScalingReport { groups, ratios })
}

/// Renders the scaling report as two CSV documents (groups, ratios).
pub fn scaling_report_csv(report: &ScalingReport) -> (String, String) {
    let mut groups = String::from(
        "env,algo,T,M,runs,mean_final_regret,mean_per_agent_regret,mean_sync_rounds,epoch_bound,epoch_bound_tight\n",
    );
    for g in &report.groups {
        let _ = writeln!(
            groups,
            "{},{},{},{},{},{},{},{},{},{}",
            g.env,
            g.algo,
            g.horizon,
            g.m,
            g.runs,
            g.mean_final_regret,
            g.mean_per_agent_regret,
            g.mean_sync_rounds,
            g.epoch_bound,
            g.epoch_bound_tight
        );
    }
    let mut ratios = String::from("env,algo,T,M_from,M_to,per_agent_regret_ratio\n");
    for r in &report.ratios {
        let _ = writeln!(
            ratios,
            "{},{},{},{},{},{}",
            r.env, r.algo, r.horizon, r.m_from, r.m_to, r.per_agent_regret_ratio
        );
    }
    (groups, ratios)
}

/// Loads one run's trace and step columns back from `dir`.
pub fn load_run(dir: &Path, base: &str) -> Result<ExperimentTrace> {
    let json = std::fs::read_to_string(dir.join(format!("trace_{base}.json")))?;
    let mut trace = ExperimentTrace::from_json(&json)?;
    let csv = std::fs::read_to_string(dir.join(format!("steps_{base}.csv")))?;
    trace.steps = read_steps_csv(&csv, trace.meta.n_agents, trace.meta.horizon)?;
    trace.final_cum_reward = trace.steps.rewards.iter().sum();
    Ok(trace)
}

/// Re-asserts every invariant on every run recorded under `dir`.
/// Returns the number of runs checked; the first violation aborts with
/// `Error::Invariant`.
pub fn verify_dir(dir: &Path) -> Result<usize> {
    let mut checked = 0;
    for entry in sorted_entries(dir)? {
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(base) = name.strip_prefix("trace_").and_then(|n| n.strip_suffix(".json")) else {
            continue;
        };
        let json = std::fs::read_to_string(entry.path())?;
        let stored = ExperimentTrace::from_json(&json)?;
        let trace = load_run(dir, base)?;
        ensure!(
            (stored.final_cum_reward - trace.final_cum_reward).abs()
                <= 1e-6 * (1.0 + stored.final_cum_reward.abs()),
            "{base}: stored cumulative reward disagrees with the step csv"
        );
        check_trace(&trace, &trace.steps)
            .map_err(|e| Error::invariant(format!("{base}: {e}")))?;
        checked += 1;
    }
    ensure!(checked > 0, "no trace_*.json artifacts under {}", dir.display());
    Ok(checked)
}

/// Strips the trailing `wall_ms` column from a summary CSV: the one field
/// that legitimately differs between byte-identical reruns.
pub fn summary_without_wall(text: &str) -> String {
    text.lines()
        .map(|line| match line.rfind(',') {
            Some(pos) => &line[..pos],
            None => line,
        })
        .fold(String::new(), |mut acc, line| {
            acc.push_str(line);
            acc.push('\n');
            acc
        })
}

/// Emits gnuplot-friendly column files (`t  mean_per_agent_regret
/// mean_rounds_cum`) per (env, algo, M, T) group found under `dir`.
pub fn write_plot_data(dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut by_group: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for entry in sorted_entries(dir)? {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(base) = name.strip_prefix("trace_").and_then(|n| n.strip_suffix(".json")) {
            let group = match base.rfind("_seed") {
                Some(pos) => base[..pos].to_string(),
                None => base.to_string(),
            };
            by_group.entry(group).or_default().push(base.to_string());
        }
    }
    ensure!(!by_group.is_empty(), "no trace artifacts under {}", dir.display());
    let mut written = Vec::new();
    for (group, bases) in by_group {
        let mut mean_regret: Vec<f64> = Vec::new();
        let mut mean_rounds: Vec<f64> = Vec::new();
        let mut n_runs = 0usize;
        for base in &bases {
            let trace = load_run(dir, base)?;
            let series = per_agent_regret_series(&trace, trace.meta.rho_star)?;
            let m = trace.meta.n_agents;
            if mean_regret.is_empty() {
                mean_regret = vec![0.0; series.len()];
                mean_rounds = vec![0.0; series.len()];
            }
            ensure!(series.len() == mean_regret.len(), "mismatched horizons in group {group}");
            for (t, &v) in series.iter().enumerate() {
                mean_regret[t] += v;
                // Row of the last agent of step t carries the step-final count.
                mean_rounds[t] += trace.steps.rounds_cum[t * m + (m - 1)] as f64;
            }
            n_runs += 1;
        }
        let mut text = String::from("# t  mean_per_agent_regret  mean_rounds_cum\n");
        for t in 0..mean_regret.len() {
            let _ = writeln!(
                text,
                "{} {} {}",
                t + 1,
                mean_regret[t] / n_runs as f64,
                mean_rounds[t] / n_runs as f64
            );
        }
        let path = out_dir.join(format!("curve_{group}.dat"));
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}
