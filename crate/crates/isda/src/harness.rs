//! Experiment orchestration: config ingestion (TOML), train / baseline /
//! compare modes, deterministic per-seed execution, and CSV / plain-text
//! emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{run_pure_csma, run_whittle_oracle, BaselineError};
use crate::ce::{train, CeError, CeHyperparams, SimEnv, TrainResult};
use crate::mac::{run_episode, MacConfig, MacError, Scenario};
use crate::model::{TerminalConfig, TerminalKind};
use crate::policy::DEFAULT_HIDDEN_DIM;
use crate::rng::{baseline_rng, eval_rng};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("failed to read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to serialize config: {0}")]
    Emit(#[from] toml::ser::Error),
    #[error("config invalid: {0}")]
    Invalid(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Mac(#[from] MacError),
    #[error(transparent)]
    Ce(#[from] CeError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Baseline,
    Compare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalSpec {
    pub kind: TerminalKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_arrival_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_arrival_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_capacity: Option<u32>,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacSpec {
    pub data_slot_ms: f64,
    pub mini_slot_ms: f64,
    pub mini_slot_count: usize,
    pub count_overhead_in_time: bool,
}

impl Default for MacSpec {
    fn default() -> Self {
        Self {
            data_slot_ms: 1.0,
            mini_slot_ms: 0.25,
            mini_slot_count: 3,
            count_overhead_in_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CeSpec {
    pub episode_length: usize,
    pub episodes_per_iteration: usize,
    pub elite_fraction: f64,
    pub initial_noise: f64,
    pub iterations: usize,
    pub eval_episodes: usize,
    pub init_mean: f64,
    pub init_variance: f64,
}

impl Default for CeSpec {
    fn default() -> Self {
        Self {
            episode_length: 100,
            episodes_per_iteration: 100,
            elite_fraction: 0.1,
            initial_noise: 0.5,
            iterations: 150,
            eval_episodes: 50,
            init_mean: 0.0,
            init_variance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySpec {
    pub hidden_dim: usize,
    pub norm: f64,
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self { hidden_dim: DEFAULT_HIDDEN_DIM, norm: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSpec {
    /// Pure-CSMA contention probability; defaults to 1/N when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_const: Option<f64>,
    /// Horizon (slots) for baseline runs and converged-policy evaluation.
    pub slots: usize,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        Self { p_const: None, slots: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    pub terminal: Vec<TerminalSpec>,
    #[serde(default)]
    pub mac: MacSpec,
    #[serde(default)]
    pub ce: CeSpec,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub baseline: BaselineSpec,
}

fn default_output_dir() -> String {
    "out".to_string()
}

impl ExperimentConfig {
    pub fn scenario(&self) -> Result<Scenario<f64>, HarnessError> {
        let mut terminals = Vec::with_capacity(self.terminal.len());
        for (i, t) in self.terminal.iter().enumerate() {
            let cfg = match t.kind {
                TerminalKind::Aoi | TerminalKind::Queue => {
                    let rate = t.data_arrival_rate.ok_or_else(|| {
                        HarnessError::Invalid(format!(
                            "terminal[{i}].data_arrival_rate: required for kind {:?}",
                            t.kind
                        ))
                    })?;
                    TerminalConfig {
                        kind: t.kind,
                        data_arrival_rate: rate,
                        energy_arrival_rate: t.energy_arrival_rate,
                        energy_capacity: t.energy_capacity,
                        weight: t.weight,
                    }
                }
                TerminalKind::IdtEh => TerminalConfig {
                    kind: t.kind,
                    data_arrival_rate: t.data_arrival_rate.unwrap_or(0.0),
                    energy_arrival_rate: t.energy_arrival_rate,
                    energy_capacity: t.energy_capacity,
                    weight: t.weight,
                },
            };
            cfg.validate().map_err(|e| {
                HarnessError::Invalid(format!("terminal[{i}]: {e}"))
            })?;
            terminals.push(cfg);
        }
        let scenario = Scenario {
            terminals,
            mac: MacConfig {
                data_slot_ms: self.mac.data_slot_ms,
                mini_slot_ms: self.mac.mini_slot_ms,
                mini_slot_count: self.mac.mini_slot_count,
                count_overhead_in_time: self.mac.count_overhead_in_time,
            },
        };
        scenario
            .validate()
            .map_err(|e| HarnessError::Invalid(e.to_string()))?;
        Ok(scenario)
    }

    pub fn hyperparams(&self) -> Result<CeHyperparams<f64>, HarnessError> {
        let h = CeHyperparams {
            episode_length: self.ce.episode_length,
            episodes_per_iteration: self.ce.episodes_per_iteration,
            elite_fraction: self.ce.elite_fraction,
            initial_noise: self.ce.initial_noise,
            iterations: self.ce.iterations,
            eval_episodes: self.ce.eval_episodes,
            init_mean: self.ce.init_mean,
            init_variance: self.ce.init_variance,
        };
        h.validate()
            .map_err(|e| HarnessError::Invalid(format!("ce: {e}")))?;
        Ok(h)
    }

    pub fn p_const(&self) -> Result<f64, HarnessError> {
        let p = self
            .baseline
            .p_const
            .unwrap_or(1.0 / self.terminal.len().max(1) as f64);
        if !(p > 0.0 && p <= 1.0) {
            return Err(HarnessError::Invalid(format!(
                "baseline.p_const: {p} not in (0, 1]"
            )));
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Invalid("seeds: at least one seed required".into()));
        }
        if self.policy.norm <= 0.0 {
            return Err(HarnessError::Invalid("policy.norm: must be positive".into()));
        }
        if self.policy.hidden_dim == 0 {
            return Err(HarnessError::Invalid("policy.hidden_dim: must be >= 1".into()));
        }
        if self.baseline.slots == 0 {
            return Err(HarnessError::Invalid("baseline.slots: must be >= 1".into()));
        }
        self.scenario()?;
        self.hyperparams()?;
        self.p_const()?;
        Ok(())
    }

    pub fn all_aoi(&self) -> bool {
        self.terminal.iter().all(|t| t.kind == TerminalKind::Aoi)
    }
}

/// Parse, default-fill and validate a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|source| HarnessError::Read { path: path.to_path_buf(), source })?;
    let config: ExperimentConfig = toml::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

/// Serialize a config so that `load_config(emit(c)) == c`.
pub fn emit_config(config: &ExperimentConfig) -> Result<String, HarnessError> {
    Ok(toml::to_string(config)?)
}

fn kind_label(kind: TerminalKind) -> &'static str {
    match kind {
        TerminalKind::Aoi => "aoi",
        TerminalKind::IdtEh => "idt",
        TerminalKind::Queue => "queue",
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents)
        .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

fn fmt_cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Write one seed's training trace. The time axis is reported both in
/// iterations and in simulated seconds.
fn write_trace_csv(
    path: &Path,
    config: &ExperimentConfig,
    result: &TrainResult<f64>,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "iteration".to_string(),
        "sim_seconds".to_string(),
        "mean_sampled_cost".to_string(),
        "elite_mean_cost".to_string(),
        "eval_cost".to_string(),
    ];
    for (i, t) in config.terminal.iter().enumerate() {
        header.push(format!("eval_t{i}_{}", kind_label(t.kind)));
    }
    header.push("status".to_string());
    w.write_record(&header)?;

    let seconds_per_iter = config.ce.episodes_per_iteration as f64
        * config.ce.episode_length as f64
        * config.mac.data_slot_ms
        / 1000.0;
    for rec in &result.trace.records {
        let mut values = vec![
            rec.mean_sampled_cost,
            rec.elite_mean_cost,
            rec.eval_cost,
        ];
        values.extend_from_slice(&rec.per_terminal_eval);
        let diverged = values.iter().any(|v| !v.is_finite());
        let mut row = vec![
            rec.iteration.to_string(),
            fmt_cell(rec.iteration as f64 * seconds_per_iter),
        ];
        row.extend(values.iter().map(|&v| fmt_cell(v)));
        row.push(if diverged { "diverged" } else { "ok" }.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

/// Per-scheme, per-terminal long-run metrics for one seed.
#[derive(Debug, Clone)]
pub struct SchemeMetrics {
    pub scheme: String,
    pub per_terminal: Vec<f64>,
}

/// Everything the compare mode produces for one seed.
#[derive(Debug, Clone)]
pub struct SeedComparison {
    pub seed: u64,
    pub rows: Vec<SchemeMetrics>,
    /// Percentage improvement of ISDA over pure-CSMA per terminal.
    pub improvement_pct: Vec<f64>,
}

/// Train on one seed and measure the converged mean-parameter policy over a
/// long horizon.
// Stream namespaces for the final comparison; training evaluations use the
// iteration index, which stays far below these.
const FINAL_EVAL_STREAM: usize = 1 << 30;
const CSMA_EVAL_STREAM: usize = FINAL_EVAL_STREAM + 1;
const ORACLE_EVAL_STREAM: usize = FINAL_EVAL_STREAM + 2;

/// Averages per-terminal costs over restarted fixed-length episodes.
///
/// The learned policies are only ever exercised on states reachable within an
/// episode, so comparing schemes on the episodic objective (rather than one
/// long stationary run) keeps the comparison on the footing they were trained
/// for.
fn episodic_average<F>(
    n_terminals: usize,
    episodes: usize,
    mut run: F,
) -> Result<Vec<f64>, HarnessError>
where
    F: FnMut(usize) -> Result<Vec<f64>, HarnessError>,
{
    let mut sums = vec![0.0; n_terminals];
    for e in 0..episodes {
        let per_terminal = run(e)?;
        for (s, c) in sums.iter_mut().zip(per_terminal) {
            *s += c;
        }
    }
    for s in &mut sums {
        *s /= episodes as f64;
    }
    Ok(sums)
}

fn eval_episode_count(config: &ExperimentConfig, episode_length: usize) -> usize {
    (config.baseline.slots / episode_length).max(1)
}

pub fn train_and_evaluate(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(TrainResult<f64>, Vec<f64>), HarnessError> {
    let scenario = config.scenario()?;
    let hyper = config.hyperparams()?;
    let env = SimEnv {
        scenario: scenario.clone(),
        hidden_dim: config.policy.hidden_dim,
        norm: config.policy.norm,
        episode_length: hyper.episode_length,
    };
    let result = train(&env, &hyper, seed)?;
    let bundle = env.bundle(result.best_mean_params())?;
    let episodes = eval_episode_count(config, hyper.episode_length);
    let metrics = episodic_average(scenario.terminals.len(), episodes, |e| {
        let mut rng = eval_rng(seed, FINAL_EVAL_STREAM, e);
        let record = run_episode(&scenario, &bundle, hyper.episode_length, &mut rng)?;
        Ok(record.per_terminal_avg_cost)
    })?;
    Ok((result, metrics))
}

/// Baseline metrics under the same restarted-episode protocol used for the
/// learned policies in compare mode.
pub fn episodic_baseline_metrics(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<SchemeMetrics>, HarnessError> {
    let scenario = config.scenario()?;
    let p = config.p_const()?;
    let episode_length = config.ce.episode_length;
    let episodes = eval_episode_count(config, episode_length);
    let n = scenario.terminals.len();
    let bundle = crate::mac::ConstPolicy(p);
    let csma = episodic_average(n, episodes, |e| {
        let mut rng = eval_rng(seed, CSMA_EVAL_STREAM, e);
        let record = run_episode(&scenario, &bundle, episode_length, &mut rng)?;
        Ok(record.per_terminal_avg_cost)
    })?;
    let mut rows =
        vec![SchemeMetrics { scheme: "pure_csma".to_string(), per_terminal: csma }];
    if config.all_aoi() {
        let oracle = episodic_average(n, episodes, |e| {
            let mut rng = eval_rng(seed, ORACLE_EVAL_STREAM, e);
            Ok(run_whittle_oracle(&scenario, episode_length, &mut rng)?)
        })?;
        rows.push(SchemeMetrics { scheme: "whittle_oracle".to_string(), per_terminal: oracle });
    }
    Ok(rows)
}

/// Pure-CSMA (and, for all-AoI scenarios, Whittle-oracle) metrics for one
/// seed.
pub fn baseline_metrics(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<SchemeMetrics>, HarnessError> {
    let scenario = config.scenario()?;
    let p = config.p_const()?;
    let mut rng = baseline_rng(seed);
    let csma = run_pure_csma(&scenario, p, config.baseline.slots, &mut rng)?;
    let mut rows = vec![SchemeMetrics {
        scheme: "pure_csma".to_string(),
        per_terminal: csma.per_terminal_avg_cost,
    }];
    if config.all_aoi() {
        let mut rng = baseline_rng(seed);
        let oracle = run_whittle_oracle(&scenario, config.baseline.slots, &mut rng)?;
        rows.push(SchemeMetrics { scheme: "whittle_oracle".to_string(), per_terminal: oracle });
    }
    Ok(rows)
}

fn metric_header(config: &ExperimentConfig) -> Vec<String> {
    config
        .terminal
        .iter()
        .enumerate()
        .map(|(i, t)| format!("t{i}_{}", kind_label(t.kind)))
        .collect()
}

fn write_metrics_csv(
    path: &Path,
    config: &ExperimentConfig,
    rows: &[(u64, &SchemeMetrics)],
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["seed".to_string(), "scheme".to_string()];
    header.extend(metric_header(config));
    w.write_record(&header)?;
    for (seed, m) in rows {
        let mut row = vec![seed.to_string(), m.scheme.clone()];
        row.extend(m.per_terminal.iter().map(|&v| fmt_cell(v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

fn summary_text(config: &ExperimentConfig, comparisons: &[SeedComparison]) -> String {
    let metrics = metric_header(config);
    let mut out = String::new();
    let width = 16;
    let _ = write!(out, "{:<12}{:<16}", "seed", "scheme");
    for m in &metrics {
        let _ = write!(out, "{m:>width$}");
    }
    out.push('\n');
    for c in comparisons {
        for row in &c.rows {
            let _ = write!(out, "{:<12}{:<16}", c.seed, row.scheme);
            for &v in &row.per_terminal {
                let _ = write!(out, "{:>width$.4}", v);
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<12}{:<16}", c.seed, "improvement_%");
        for &v in &c.improvement_pct {
            let _ = write!(out, "{:>width$.2}", v);
        }
        out.push('\n');
    }
    out
}

/// Run the configured experiment for every seed and write the output files.
/// Returns the paths written.
pub fn run_experiment(config: &ExperimentConfig, quiet: bool) -> Result<Vec<PathBuf>, HarnessError> {
    config.validate()?;
    let out_dir = PathBuf::from(&config.output_dir);
    fs::create_dir_all(&out_dir)
        .map_err(|source| HarnessError::Io { path: out_dir.clone(), source })?;
    let mut written = Vec::new();
    let note = |msg: String| {
        if !quiet {
            println!("{msg}");
        }
    };

    match config.mode {
        Mode::Train => {
            for &seed in &config.seeds {
                let (result, _) = train_and_evaluate(config, seed)?;
                let path = out_dir.join(format!("trace_seed{seed}.csv"));
                write_trace_csv(&path, config, &result)?;
                note(format!("seed {seed}: trace -> {}", path.display()));
                written.push(path);
            }
        }
        Mode::Baseline => {
            let mut rows = Vec::new();
            let mut owned = Vec::new();
            for &seed in &config.seeds {
                for m in baseline_metrics(config, seed)? {
                    owned.push((seed, m));
                }
            }
            for (seed, m) in &owned {
                rows.push((*seed, m));
            }
            let path = out_dir.join("baseline.csv");
            write_metrics_csv(&path, config, &rows)?;
            note(format!("baselines -> {}", path.display()));
            written.push(path);
        }
        Mode::Compare => {
            let mut comparisons = Vec::new();
            for &seed in &config.seeds {
                let baselines = episodic_baseline_metrics(config, seed)?;
                let (result, isda) = train_and_evaluate(config, seed)?;
                let trace_path = out_dir.join(format!("trace_seed{seed}.csv"));
                write_trace_csv(&trace_path, config, &result)?;
                written.push(trace_path);

                let csma = &baselines[0].per_terminal;
                let improvement_pct: Vec<f64> = csma
                    .iter()
                    .zip(&isda)
                    .map(|(&c, &i)| if c > 0.0 { 100.0 * (c - i) / c } else { 0.0 })
                    .collect();
                let mut rows = baselines;
                rows.push(SchemeMetrics { scheme: "isda".to_string(), per_terminal: isda });
                comparisons.push(SeedComparison { seed, rows, improvement_pct });
            }

            let csv_path = out_dir.join("summary.csv");
            {
                let mut w = csv::Writer::from_path(&csv_path)?;
                let mut header = vec!["seed".to_string(), "scheme".to_string()];
                header.extend(metric_header(config));
                w.write_record(&header)?;
                for c in &comparisons {
                    for row in &c.rows {
                        let mut rec = vec![c.seed.to_string(), row.scheme.clone()];
                        rec.extend(row.per_terminal.iter().map(|&v| fmt_cell(v)));
                        w.write_record(&rec)?;
                    }
                    let mut rec = vec![c.seed.to_string(), "improvement_pct".to_string()];
                    rec.extend(c.improvement_pct.iter().map(|&v| fmt_cell(v)));
                    w.write_record(&rec)?;
                }
                w.flush()
                    .map_err(|source| HarnessError::Io { path: csv_path.clone(), source })?;
            }
            written.push(csv_path);

            let text = summary_text(config, &comparisons);
            let txt_path = out_dir.join("summary.txt");
            write_file(&txt_path, &text)?;
            note(text);
            written.push(txt_path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundled_config_text() -> &'static str {
        include_str!("../configs/paper_table1.toml")
    }

    fn parse(text: &str) -> Result<ExperimentConfig, HarnessError> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    #[test]
    fn bundled_config_parses_with_expected_values() {
        let c = parse(bundled_config_text()).unwrap();
        assert_eq!(c.terminal.len(), 3);
        assert_eq!(c.terminal[0].kind, TerminalKind::Aoi);
        assert_eq!(c.terminal[0].data_arrival_rate, Some(0.1));
        assert_eq!(c.terminal[1].kind, TerminalKind::Queue);
        assert_eq!(c.terminal[1].data_arrival_rate, Some(0.1));
        assert_eq!(c.terminal[2].kind, TerminalKind::IdtEh);
        assert_eq!(c.terminal[2].energy_arrival_rate, Some(0.2));
        assert_eq!(c.terminal[2].energy_capacity, Some(1));
        assert_eq!(c.mac.data_slot_ms, 1.0);
        assert_eq!(c.mac.mini_slot_ms, 0.25);
        assert_eq!(c.ce.episode_length, 100);
        assert_eq!(c.ce.episodes_per_iteration, 100);
        assert_eq!(c.ce.elite_fraction, 0.1);
        assert!(c.terminal.iter().all(|t| t.weight == 1.0));
    }

    #[test]
    fn zero_elite_fraction_rejected() {
        let text = bundled_config_text().replace("elite_fraction = 0.1", "elite_fraction = 0.0");
        assert!(matches!(parse(&text), Err(HarnessError::Invalid(_))));
    }

    #[test]
    fn omitted_mini_slot_count_defaults_to_3() {
        let text = bundled_config_text().replace("mini_slot_count = 1\n", "");
        assert_eq!(parse(&text).unwrap().mac.mini_slot_count, 3);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = format!("{}\n[extra]\nfoo = 1\n", bundled_config_text());
        assert!(matches!(parse(&text), Err(HarnessError::Parse(_))));
    }

    #[test]
    fn config_round_trips() {
        let c = parse(bundled_config_text()).unwrap();
        let emitted = emit_config(&c).unwrap();
        let reparsed = parse(&emitted).unwrap();
        assert_eq!(c, reparsed);
    }

    #[test]
    fn energy_fields_on_wrong_kind_rejected() {
        let text = bundled_config_text().replace(
            "kind = \"queue\"\ndata_arrival_rate = 0.1",
            "kind = \"queue\"\ndata_arrival_rate = 0.1\nenergy_capacity = 1",
        );
        assert!(matches!(parse(&text), Err(HarnessError::Invalid(_))));
    }
}
