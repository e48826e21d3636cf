//! Run configuration, campaign execution, persistence, policy
//! comparison, decision-latency accounting, and log verification.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::governors::{build_table, Governor, GovernorError, GovernorKind};
use crate::hier::{HierConfig, HierController, HierError, SafetyConfig, TrainMode};
use crate::platform::{execute, PlatformSpec, SimError, SimState, WorkloadSpec};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Hier(#[from] HierError),
    #[error(transparent)]
    Governor(#[from] GovernorError),
    #[error("verification failed: {0}")]
    VerifyMismatch(String),
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformConfig {
    /// "small" or "hetero".
    pub preset: String,
    #[serde(default)]
    pub noise_sigma: Option<f64>,
}

impl PlatformConfig {
    pub fn build(&self) -> Result<PlatformSpec, DriverError> {
        let mut spec = match self.preset.as_str() {
            "small" => PlatformSpec::small(0.02),
            "hetero" => PlatformSpec::default_hetero(),
            other => {
                return Err(DriverError::ConfigInvalid(format!(
                    "unknown platform preset '{other}'"
                )))
            }
        };
        if let Some(s) = self.noise_sigma {
            spec.noise_sigma = s;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub name: String,
    pub work_units: f64,
    pub parallel_fraction: f64,
    pub mem_bound_factor: f64,
    #[serde(default)]
    pub sync_overhead_per_core: f64,
}

impl WorkloadConfig {
    pub fn build(&self) -> Result<WorkloadSpec, DriverError> {
        let mut wl = WorkloadSpec::new(
            &self.name,
            self.work_units,
            self.parallel_fraction,
            self.mem_bound_factor,
        );
        wl.sync_overhead_per_core = self.sync_overhead_per_core;
        wl.validate()?;
        Ok(wl)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    /// "governor" or "rl".
    pub kind: String,
    /// Governor name when kind = "governor": performance, powersave,
    /// ondemand, conservative, schedutil.
    #[serde(default)]
    pub governor: Option<String>,
    /// "model_free" or "model_based" when kind = "rl".
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub planning_steps: Option<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
}

pub fn governor_kind(name: &str) -> Result<GovernorKind, DriverError> {
    Ok(match name {
        "performance" => GovernorKind::Performance,
        "powersave" => GovernorKind::Powersave,
        "ondemand" => GovernorKind::ondemand_default(),
        "conservative" => GovernorKind::conservative_default(),
        "schedutil" => GovernorKind::schedutil_default(),
        other => {
            return Err(DriverError::ConfigInvalid(format!(
                "unknown governor '{other}'"
            )))
        }
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub platform: PlatformConfig,
    pub workloads: Vec<WorkloadConfig>,
    pub policy: PolicyConfig,
    /// Episodes per (workload, seed) cell.
    pub episodes: usize,
    /// Decisions per episode.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub safety: Option<SafetyConfig>,
}

fn default_horizon() -> usize {
    10
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, DriverError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| DriverError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DriverError> {
        if self.seeds.is_empty() {
            return Err(DriverError::ConfigInvalid("at least one seed".into()));
        }
        if self.episodes == 0 || self.horizon == 0 {
            return Err(DriverError::ConfigInvalid(
                "episodes and horizon must be >= 1".into(),
            ));
        }
        if self.workloads.is_empty() {
            return Err(DriverError::ConfigInvalid("at least one workload".into()));
        }
        match self.policy.kind.as_str() {
            "governor" => {
                let name = self.policy.governor.as_deref().ok_or_else(|| {
                    DriverError::ConfigInvalid("governor policy needs 'governor'".into())
                })?;
                governor_kind(name)?;
            }
            "rl" => {}
            other => {
                return Err(DriverError::ConfigInvalid(format!(
                    "unknown policy kind '{other}'"
                )))
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Run execution

/// One (policy, workload, seed) cell's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub policy: String,
    pub workload: String,
    pub seed: u64,
    pub episodes: usize,
    pub mean_reward: f64,
    pub total_energy_j: f64,
    pub total_makespan_s: f64,
    pub peak_temp_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSummary {
    pub mean_energy_j: f64,
    pub std_energy_j: f64,
    pub mean_makespan_s: f64,
    pub std_makespan_s: f64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub policy: String,
    pub cells: Vec<CellResult>,
    /// Per-workload aggregate over seeds.
    pub per_workload: BTreeMap<String, WorkloadSummary>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn policy_name(p: &PolicyConfig) -> String {
    match p.kind.as_str() {
        "governor" => p.governor.clone().unwrap_or_default(),
        _ => format!(
            "rl_{}",
            p.mode.clone().unwrap_or_else(|| "model_based".into())
        ),
    }
}

/// Runs a governor for `episodes * horizon` decisions; one "episode" is
/// `horizon` back-to-back workload executions.
fn run_governor_cell(
    spec: &PlatformSpec,
    wl: &WorkloadSpec,
    kind: GovernorKind,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<(CellResult, Vec<serde_json::Value>), DriverError> {
    let mut gov = Governor::new(kind);
    let mut total_energy = 0.0;
    let mut total_makespan = 0.0;
    let mut peak = f64::NEG_INFINITY;
    let mut episode_rows = Vec::new();
    for ep in 0..episodes {
        let mut state = SimState::initial(spec);
        let mut ep_energy = 0.0;
        let mut ep_makespan = 0.0;
        for step in 0..horizon {
            let action = gov.govern(&state, spec);
            let out = execute(
                spec,
                wl,
                &action,
                &state,
                seed.wrapping_mul(131).wrapping_add((ep * horizon + step) as u64),
            )?;
            ep_energy += out.energy_j;
            ep_makespan += out.makespan_s;
            peak = peak.max(out.peak_temp_c);
            state = out.end_state;
        }
        total_energy += ep_energy;
        total_makespan += ep_makespan;
        episode_rows.push(serde_json::json!({
            "episode": ep,
            "steps": horizon,
            "total_energy_j": ep_energy,
            "total_makespan_s": ep_makespan,
        }));
    }
    Ok((
        CellResult {
            policy: String::new(),
            workload: wl.name.clone(),
            seed,
            episodes,
            mean_reward: 0.0,
            total_energy_j: total_energy,
            total_makespan_s: total_makespan,
            peak_temp_c: peak,
        },
        episode_rows,
    ))
}

fn run_rl_cell(
    spec: &PlatformSpec,
    wl: &WorkloadSpec,
    policy: &PolicyConfig,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<(CellResult, Vec<serde_json::Value>), DriverError> {
    let mode = match policy.mode.as_deref() {
        Some("model_free") => TrainMode::ModelFree,
        _ => TrainMode::ModelBased,
    };
    let mut cfg = HierConfig::new(mode, seed);
    cfg.horizon = horizon;
    if let Some(z) = policy.planning_steps {
        cfg.planning_steps = z;
    }
    if let Some(b) = policy.batch_size {
        cfg.batch_size = b;
    }
    let mut ctl = HierController::new(spec.clone(), wl.clone(), cfg)?;
    let mut total_energy = 0.0;
    let mut total_makespan = 0.0;
    let mut reward_sum = 0.0;
    let mut rows = Vec::new();
    for _ in 0..episodes {
        let r = ctl.run_episode()?;
        total_energy += r.total_energy_j;
        total_makespan += r.total_makespan_s;
        reward_sum += r.cumulative_r_profiler;
        rows.push(serde_json::to_value(&r).expect("report serializes"));
    }
    Ok((
        CellResult {
            policy: String::new(),
            workload: wl.name.clone(),
            seed,
            episodes,
            mean_reward: reward_sum / episodes as f64,
            total_energy_j: total_energy,
            total_makespan_s: total_makespan,
            peak_temp_c: 0.0,
        },
        rows,
    ))
}

/// Executes all (workload x seed) cells, writes the run directory
/// (config snapshot, episodes.jsonl, summary.json, safety_events.jsonl),
/// and returns the run directory path and summary.
pub fn run(config: &RunConfig, out_base: &Path) -> Result<(PathBuf, RunSummary), DriverError> {
    config.validate()?;
    let spec = config.platform.build()?;
    let run_dir = out_base.join(&config.run_id);
    fs::create_dir_all(&run_dir)?;
    fs::write(
        run_dir.join("config.toml"),
        toml::to_string_pretty(config).map_err(|e| DriverError::ConfigInvalid(e.to_string()))?,
    )?;

    let pname = policy_name(&config.policy);
    let mut cells = Vec::new();
    let mut episodes_file = fs::File::create(run_dir.join("episodes.jsonl"))?;
    for wl_cfg in &config.workloads {
        let wl = wl_cfg.build()?;
        for &seed in &config.seeds {
            let (mut cell, rows) = match config.policy.kind.as_str() {
                "governor" => {
                    let kind = governor_kind(config.policy.governor.as_deref().unwrap())?;
                    run_governor_cell(&spec, &wl, kind, config.episodes, config.horizon, seed)?
                }
                _ => run_rl_cell(&spec, &wl, &config.policy, config.episodes, config.horizon, seed)?,
            };
            cell.policy = pname.clone();
            for row in rows {
                let mut obj = row;
                obj["workload"] = serde_json::json!(wl.name);
                obj["seed"] = serde_json::json!(seed);
                writeln!(episodes_file, "{obj}")?;
            }
            cells.push(cell);
        }
    }
    // Safety events are produced by deployment-time filtering; training
    // runs emit an empty log so the layout is uniform.
    fs::write(run_dir.join("safety_events.jsonl"), "")?;

    let mut per_workload = BTreeMap::new();
    for wl_cfg in &config.workloads {
        let rows: Vec<&CellResult> = cells
            .iter()
            .filter(|c| c.workload == wl_cfg.name)
            .collect();
        let energies: Vec<f64> = rows.iter().map(|c| c.total_energy_j).collect();
        let makespans: Vec<f64> = rows.iter().map(|c| c.total_makespan_s).collect();
        let rewards: Vec<f64> = rows.iter().map(|c| c.mean_reward).collect();
        let (me, se) = mean_std(&energies);
        let (mm, sm) = mean_std(&makespans);
        let (mr, _) = mean_std(&rewards);
        per_workload.insert(
            wl_cfg.name.clone(),
            WorkloadSummary {
                mean_energy_j: me,
                std_energy_j: se,
                mean_makespan_s: mm,
                std_makespan_s: sm,
                mean_reward: mr,
            },
        );
    }
    let summary = RunSummary {
        run_id: config.run_id.clone(),
        policy: pname,
        cells,
        per_workload,
    };
    fs::write(
        run_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok((run_dir, summary))
}

/// Recomputes the per-workload aggregates from the cells recorded in
/// summary.json and checks them against the stored values; also checks
/// that episodes.jsonl totals match the cells.
pub fn verify(run_dir: &Path) -> Result<(), DriverError> {
    let summary: RunSummary =
        serde_json::from_str(&fs::read_to_string(run_dir.join("summary.json"))?)
            .map_err(|e| DriverError::VerifyMismatch(format!("summary unreadable: {e}")))?;
    // Aggregates recomputable from cells.
    for (wl, stored) in &summary.per_workload {
        let rows: Vec<&CellResult> = summary.cells.iter().filter(|c| &c.workload == wl).collect();
        if rows.is_empty() {
            return Err(DriverError::VerifyMismatch(format!(
                "workload {wl} has no cells"
            )));
        }
        let (me, _) = mean_std(&rows.iter().map(|c| c.total_energy_j).collect::<Vec<_>>());
        if (me - stored.mean_energy_j).abs() > 1e-9 {
            return Err(DriverError::VerifyMismatch(format!(
                "{wl}: mean energy {me} != stored {}",
                stored.mean_energy_j
            )));
        }
    }
    // Episode log totals match cells.
    let log = fs::read_to_string(run_dir.join("episodes.jsonl"))?;
    let mut by_cell: BTreeMap<(String, u64), (f64, f64)> = BTreeMap::new();
    for line in log.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| DriverError::VerifyMismatch(format!("bad episode row: {e}")))?;
        let key = (
            v["workload"].as_str().unwrap_or_default().to_string(),
            v["seed"].as_u64().unwrap_or_default(),
        );
        let e = by_cell.entry(key).or_insert((0.0, 0.0));
        e.0 += v["total_energy_j"].as_f64().unwrap_or(0.0);
        e.1 += v["total_makespan_s"].as_f64().unwrap_or(0.0);
    }
    for cell in &summary.cells {
        let (e, m) = by_cell
            .get(&(cell.workload.clone(), cell.seed))
            .ok_or_else(|| {
                DriverError::VerifyMismatch(format!(
                    "no episode rows for {}/{}",
                    cell.workload, cell.seed
                ))
            })?;
        if (e - cell.total_energy_j).abs() > 1e-9 || (m - cell.total_makespan_s).abs() > 1e-9 {
            return Err(DriverError::VerifyMismatch(format!(
                "cell {}/{} totals differ from episode log",
                cell.workload, cell.seed
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Latency accounting

/// Per-decision-class latency components in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyLedger {
    pub t_llm_s: f64,
    pub t_static_s: f64,
    pub t_rl_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyComparison {
    pub t_total_s: f64,
    pub t_table_s: f64,
    /// Table time over first-decision time (feature extraction + one
    /// inference); None when the denominator is zero.
    pub first_decision_speedup: Option<f64>,
    /// Table time over steady-state per-decision time; None when the
    /// denominator is zero.
    pub subsequent_speedup: Option<f64>,
}

/// Closed-form comparison of the learned stack's decision latency against
/// exhaustive table construction (m * k * n_workloads * rho * t-bar).
pub fn latency_report(
    ledger: &LatencyLedger,
    m: usize,
    k: usize,
    n_workloads: usize,
    rho: usize,
    mean_exec_s: f64,
) -> LatencyComparison {
    let t_total = ledger.t_llm_s + ledger.t_static_s + ledger.t_rl_s;
    let t_table = (m * k * n_workloads * rho) as f64 * mean_exec_s;
    LatencyComparison {
        t_total_s: t_total,
        t_table_s: t_table,
        first_decision_speedup: if t_total > 0.0 {
            Some(t_table / t_total)
        } else {
            None
        },
        subsequent_speedup: if ledger.t_rl_s > 0.0 {
            Some(t_table / ledger.t_rl_s)
        } else {
            None
        },
    }
}

// ---------------------------------------------------------------------------
// Policy comparison

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub policy: String,
    pub rank: usize,
    pub mean_makespan_s: f64,
    pub std_makespan_s: f64,
    pub mean_energy_j: f64,
    pub std_energy_j: f64,
    pub mean_peak_temp_c: f64,
    /// Makespan normalized to the baseline policy (baseline = 1.0).
    pub makespan_vs_baseline: f64,
    pub energy_vs_baseline: f64,
}

/// Raw per-policy measurements fed into the ranking.
#[derive(Debug, Clone)]
pub struct PolicyOutcomes {
    pub policy: String,
    pub makespans_s: Vec<f64>,
    pub energies_j: Vec<f64>,
    pub peak_temps_c: Vec<f64>,
}

/// Ranks policies by mean makespan (ties broken by mean energy, then
/// name) and normalizes columns against `baseline`.
pub fn rank_policies(outcomes: &[PolicyOutcomes], baseline: &str) -> Vec<RankRow> {
    let base = outcomes
        .iter()
        .find(|o| o.policy == baseline)
        .unwrap_or(&outcomes[0]);
    let (base_m, _) = mean_std(&base.makespans_s);
    let (base_e, _) = mean_std(&base.energies_j);
    let mut rows: Vec<RankRow> = outcomes
        .iter()
        .map(|o| {
            let (mm, sm) = mean_std(&o.makespans_s);
            let (me, se) = mean_std(&o.energies_j);
            let (mt, _) = mean_std(&o.peak_temps_c);
            RankRow {
                policy: o.policy.clone(),
                rank: 0,
                mean_makespan_s: mm,
                std_makespan_s: sm,
                mean_energy_j: me,
                std_energy_j: se,
                mean_peak_temp_c: mt,
                makespan_vs_baseline: if base_m > 0.0 { mm / base_m } else { 0.0 },
                energy_vs_baseline: if base_e > 0.0 { me / base_e } else { 0.0 },
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.mean_makespan_s
            .partial_cmp(&b.mean_makespan_s)
            .unwrap()
            .then(a.mean_energy_j.partial_cmp(&b.mean_energy_j).unwrap())
            .then(a.policy.cmp(&b.policy))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    rows
}

/// Measures every named governor (plus the table scheduler when
/// `include_table`) on each workload across the seeds, and ranks them.
pub fn compare_governors(
    spec: &PlatformSpec,
    names: &[&str],
    workloads: &[WorkloadSpec],
    seeds: &[u64],
    horizon: usize,
    include_table: bool,
    baseline: &str,
) -> Result<Vec<RankRow>, DriverError> {
    let mut outcomes = Vec::new();
    for name in names {
        let mut makespans = Vec::new();
        let mut energies = Vec::new();
        let mut peaks = Vec::new();
        for wl in workloads {
            for &seed in seeds {
                let kind = governor_kind(name)?;
                let (cell, _) = run_governor_cell(spec, wl, kind, 1, horizon, seed)?;
                makespans.push(cell.total_makespan_s);
                energies.push(cell.total_energy_j);
                peaks.push(cell.peak_temp_c);
            }
        }
        outcomes.push(PolicyOutcomes {
            policy: name.to_string(),
            makespans_s: makespans,
            energies_j: energies,
            peak_temps_c: peaks,
        });
    }
    if include_table {
        let (table, _) = build_table(spec, workloads, 2, seeds.first().copied().unwrap_or(0))?;
        let mut makespans = Vec::new();
        let mut energies = Vec::new();
        let mut peaks = Vec::new();
        for wl in workloads {
            let action = table.schedule(&wl.name)?;
            for &seed in seeds {
                let mut state = SimState::initial(spec);
                let mut mk = 0.0;
                let mut en = 0.0;
                let mut pk = f64::NEG_INFINITY;
                for step in 0..horizon {
                    let out = execute(spec, wl, &action, &state, seed.wrapping_add(step as u64))?;
                    mk += out.makespan_s;
                    en += out.energy_j;
                    pk = pk.max(out.peak_temp_c);
                    state = out.end_state;
                }
                makespans.push(mk);
                energies.push(en);
                peaks.push(pk);
            }
        }
        outcomes.push(PolicyOutcomes {
            policy: "table_precise".into(),
            makespans_s: makespans,
            energies_j: energies,
            peak_temps_c: peaks,
        });
    }
    Ok(rank_policies(&outcomes, baseline))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn toy_config(run_id: &str) -> RunConfig {
        RunConfig {
            run_id: run_id.into(),
            platform: PlatformConfig {
                preset: "small".into(),
                noise_sigma: Some(0.0),
            },
            workloads: vec![WorkloadConfig {
                name: "w".into(),
                work_units: 0.2,
                parallel_fraction: 0.6,
                mem_bound_factor: 0.2,
                sync_overhead_per_core: 0.0,
            }],
            policy: PolicyConfig {
                kind: "governor".into(),
                governor: Some("ondemand".into()),
                mode: None,
                planning_steps: None,
                batch_size: None,
            },
            episodes: 2,
            horizon: 3,
            seeds: vec![1, 2],
            safety: None,
        }
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let toml_text = r#"
run_id = "x"
episodes = 1
horizon = 1
seeds = [1]
bogus_key = true
[platform]
preset = "small"
[[workloads]]
name = "w"
work_units = 1.0
parallel_fraction = 0.5
mem_bound_factor = 0.1
[policy]
kind = "governor"
governor = "performance"
"#;
        let err = RunConfig::from_toml(toml_text).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn run_writes_layout_and_verifies() {
        let dir = tempdir().unwrap();
        let cfg = toy_config("demo");
        let (run_dir, summary) = run(&cfg, dir.path()).unwrap();
        for f in ["config.toml", "episodes.jsonl", "summary.json", "safety_events.jsonl"] {
            assert!(run_dir.join(f).exists(), "missing {f}");
        }
        assert_eq!(summary.cells.len(), 2); // 1 workload x 2 seeds
        verify(&run_dir).unwrap();
    }

    #[test]
    fn two_seed_std_matches_hand_arithmetic() {
        let (mean, std) = mean_std(&[2.0, 4.0]);
        assert_eq!(mean, 3.0);
        assert_eq!(std, 1.0);
    }

    #[test]
    fn rerun_same_config_identical_summary() {
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        let cfg = toy_config("same");
        run(&cfg, d1.path()).unwrap();
        run(&cfg, d2.path()).unwrap();
        let s1 = fs::read_to_string(d1.path().join("same/summary.json")).unwrap();
        let s2 = fs::read_to_string(d2.path().join("same/summary.json")).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn verify_detects_tampering() {
        let dir = tempdir().unwrap();
        let cfg = toy_config("tamper");
        let (run_dir, mut summary) = run(&cfg, dir.path()).unwrap();
        summary.cells[0].total_energy_j += 1.0;
        fs::write(
            run_dir.join("summary.json"),
            serde_json::to_string_pretty(&summary).unwrap(),
        )
        .unwrap();
        assert!(verify(&run_dir).is_err());
    }

    #[test]
    fn latency_worked_example() {
        let ledger = LatencyLedger {
            t_llm_s: 3.07,
            t_static_s: 0.05,
            t_rl_s: 0.358,
        };
        let cmp = latency_report(&ledger, 6, 12, 15, 5, 5.0);
        assert!((cmp.t_total_s - 3.478).abs() < 1e-12);
        assert_eq!(cmp.t_table_s, 27_000.0);
        let first = cmp.first_decision_speedup.unwrap();
        assert!((first - 27_000.0 / 3.478).abs() < 1e-9);
        assert!((first - 7763.08).abs() < 0.01);
        let sub = cmp.subsequent_speedup.unwrap();
        assert!((sub - 27_000.0 / 0.358).abs() < 1e-9);
    }

    #[test]
    fn zero_ledger_yields_undefined_speedups() {
        let cmp = latency_report(
            &LatencyLedger {
                t_llm_s: 0.0,
                t_static_s: 0.0,
                t_rl_s: 0.0,
            },
            6,
            12,
            15,
            5,
            5.0,
        );
        assert!(cmp.first_decision_speedup.is_none());
        assert!(cmp.subsequent_speedup.is_none());
    }

    #[test]
    fn ranking_matches_hand_sort_and_baseline_normalization() {
        let outcomes = vec![
            PolicyOutcomes {
                policy: "a".into(),
                makespans_s: vec![2.0, 2.0],
                energies_j: vec![5.0, 5.0],
                peak_temps_c: vec![40.0, 40.0],
            },
            PolicyOutcomes {
                policy: "b".into(),
                makespans_s: vec![1.0, 1.0],
                energies_j: vec![9.0, 9.0],
                peak_temps_c: vec![45.0, 45.0],
            },
            PolicyOutcomes {
                policy: "c".into(),
                makespans_s: vec![2.0, 2.0],
                energies_j: vec![4.0, 4.0],
                peak_temps_c: vec![39.0, 39.0],
            },
        ];
        let rows = rank_policies(&outcomes, "a");
        // b fastest; c ties a on makespan but wins on energy.
        assert_eq!(rows[0].policy, "b");
        assert_eq!(rows[1].policy, "c");
        assert_eq!(rows[2].policy, "a");
        let a = rows.iter().find(|r| r.policy == "a").unwrap();
        assert_eq!(a.makespan_vs_baseline, 1.0);
        assert_eq!(a.energy_vs_baseline, 1.0);
        let b = rows.iter().find(|r| r.policy == "b").unwrap();
        assert_eq!(b.makespan_vs_baseline, 0.5);
    }

    #[test]
    fn performance_outranks_powersave_on_compute_bound() {
        let spec = PlatformSpec::small(0.0);
        let wl = WorkloadSpec::new("cb", 0.3, 0.7, 0.0);
        let rows = compare_governors(
            &spec,
            &["performance", "powersave"],
            &[wl],
            &[1],
            2,
            false,
            "powersave",
        )
        .unwrap();
        assert_eq!(rows[0].policy, "performance");
    }
}
