//! Baseline policies: utilization-driven governors in the style of the
//! Linux cpufreq family, and the table-based scheduler built by an
//! exhaustive offline sweep.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hier::HierAction;
use crate::platform::{execute, PlatformSpec, SimError, SimState, StepOutcome, WorkloadSpec};

#[derive(Debug, Error)]
pub enum GovernorError {
    #[error("sweep aborted: {0}")]
    SweepAborted(#[from] SimError),
    #[error("workload not present in table: {0}")]
    UnknownWorkload(String),
}

/// Governor family. The utilization-driven kinds keep small private
/// windows of state; `select` advances that state.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum GovernorKind {
    Performance,
    Powersave,
    /// Jumps to max frequency when utilization crosses `up_threshold`,
    /// otherwise drops to min.
    Ondemand { up_threshold: f64 },
    /// Moves the frequency index by at most one step per decision.
    Conservative { up_threshold: f64 },
    /// Frequency proportional to a moving-average utilization predictor.
    Schedutil { window: usize },
}

impl GovernorKind {
    pub fn ondemand_default() -> Self {
        GovernorKind::Ondemand { up_threshold: 0.8 }
    }

    pub fn conservative_default() -> Self {
        GovernorKind::Conservative { up_threshold: 0.8 }
    }

    pub fn schedutil_default() -> Self {
        GovernorKind::Schedutil { window: 5 }
    }
}

/// A governor instance: kind plus its private decision state.
#[derive(Debug, Clone)]
pub struct Governor {
    pub kind: GovernorKind,
    freq_index: usize,
    util_window: Vec<f64>,
}

/// Utilization as the classic busy/(busy+idle) ratio: active and stall
/// time both count as busy, which is exactly the blindness the
/// stall-aware policies exploit.
pub fn utilization(state: &SimState) -> f64 {
    state.util_active + state.util_stall
}

impl Governor {
    pub fn new(kind: GovernorKind) -> Self {
        Governor {
            kind,
            freq_index: 0,
            util_window: Vec::new(),
        }
    }

    /// Next action for the observed state. All governors use all cores in
    /// identity priority order; only the frequency policy differs.
    pub fn govern(&mut self, state: &SimState, spec: &PlatformSpec) -> HierAction {
        let n = spec.n_freqs();
        let util = utilization(state);
        let freq_index = match &self.kind {
            GovernorKind::Performance => n - 1,
            GovernorKind::Powersave => 0,
            GovernorKind::Ondemand { up_threshold } => {
                if util > *up_threshold {
                    n - 1
                } else {
                    0
                }
            }
            GovernorKind::Conservative { up_threshold } => {
                if util > *up_threshold {
                    self.freq_index = (self.freq_index + 1).min(n - 1);
                } else if self.freq_index > 0 {
                    self.freq_index -= 1;
                }
                self.freq_index
            }
            GovernorKind::Schedutil { window } => {
                self.util_window.push(util);
                if self.util_window.len() > *window {
                    self.util_window.remove(0);
                }
                let predicted =
                    self.util_window.iter().sum::<f64>() / self.util_window.len() as f64;
                (predicted * (n - 1) as f64).round() as usize
            }
        };
        self.freq_index = freq_index;
        HierAction {
            core_count: spec.core_count,
            freq_index,
            priority: (0..spec.core_count).collect(),
        }
    }
}

/// Mean outcome of one swept grid cell.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CellStats {
    pub mean_makespan_s: f64,
    pub mean_energy_j: f64,
    pub mean_peak_temp_c: f64,
    pub repetitions: usize,
}

/// Raw log row from the sweep, one per repetition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub workload: String,
    pub core_count: usize,
    pub freq_index: usize,
    pub repetition: usize,
    pub makespan_s: f64,
    pub energy_j: f64,
    pub peak_temp_c: f64,
}

/// Exhaustive offline profile: mean outcomes for every
/// (workload, core count, frequency) grid cell, plus build metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreciseTable {
    /// (workload, core_count, freq_index) -> stats.
    pub cells: BTreeMap<String, CellStats>,
    pub workloads: Vec<String>,
    pub core_counts: usize,
    pub freq_levels: usize,
    pub repetitions: usize,
    pub mean_exec_time_s: f64,
    /// Simulated wall-clock cost of the sweep: m * k * |workloads| * rho * t-bar.
    pub build_cost_s: f64,
    /// Makespan tolerance factor for `schedule` (cap = factor * best).
    pub makespan_cap_factor: f64,
}

fn cell_key(workload: &str, core_count: usize, freq_index: usize) -> String {
    format!("{workload}|{core_count}|{freq_index}")
}

/// Table-build cost formula: m * k * |workloads| * rho * t-bar seconds.
pub fn table_build_cost_s(
    m: usize,
    k: usize,
    n_workloads: usize,
    rho: usize,
    mean_exec_s: f64,
) -> f64 {
    (m * k * n_workloads * rho) as f64 * mean_exec_s
}

/// Runs every (core count, frequency) cell `rho` times per workload on
/// the simulator and stores the means. Returns the table and the raw
/// per-repetition log.
pub fn build_table(
    spec: &PlatformSpec,
    workloads: &[WorkloadSpec],
    rho: usize,
    seed: u64,
) -> Result<(PreciseTable, Vec<SweepRow>), GovernorError> {
    let mut cells = BTreeMap::new();
    let mut rows = Vec::new();
    let mut time_sum = 0.0;
    let mut time_n = 0usize;
    for wl in workloads {
        for cores in 1..=spec.core_count {
            for fi in 0..spec.n_freqs() {
                let action = HierAction {
                    core_count: cores,
                    freq_index: fi,
                    priority: (0..spec.core_count).collect(),
                };
                let mut acc = CellStats {
                    mean_makespan_s: 0.0,
                    mean_energy_j: 0.0,
                    mean_peak_temp_c: 0.0,
                    repetitions: rho,
                };
                for rep in 0..rho {
                    let st = SimState::initial(spec);
                    let rep_seed = seed
                        .wrapping_mul(31)
                        .wrapping_add((cores * 1000 + fi * 10 + rep) as u64);
                    let out: StepOutcome = execute(spec, wl, &action, &st, rep_seed)?;
                    acc.mean_makespan_s += out.makespan_s;
                    acc.mean_energy_j += out.energy_j;
                    acc.mean_peak_temp_c += out.peak_temp_c;
                    time_sum += out.makespan_s;
                    time_n += 1;
                    rows.push(SweepRow {
                        workload: wl.name.clone(),
                        core_count: cores,
                        freq_index: fi,
                        repetition: rep,
                        makespan_s: out.makespan_s,
                        energy_j: out.energy_j,
                        peak_temp_c: out.peak_temp_c,
                    });
                }
                acc.mean_makespan_s /= rho as f64;
                acc.mean_energy_j /= rho as f64;
                acc.mean_peak_temp_c /= rho as f64;
                cells.insert(cell_key(&wl.name, cores, fi), acc);
            }
        }
    }
    let mean_exec = if time_n > 0 { time_sum / time_n as f64 } else { 0.0 };
    let table = PreciseTable {
        cells,
        workloads: workloads.iter().map(|w| w.name.clone()).collect(),
        core_counts: spec.core_count,
        freq_levels: spec.n_freqs(),
        repetitions: rho,
        mean_exec_time_s: mean_exec,
        build_cost_s: table_build_cost_s(
            spec.core_count,
            spec.n_freqs(),
            workloads.len(),
            rho,
            mean_exec,
        ),
        makespan_cap_factor: 1.2,
    };
    Ok((table, rows))
}

impl PreciseTable {
    pub fn lookup(&self, workload: &str, core_count: usize, freq_index: usize) -> Option<&CellStats> {
        self.cells.get(&cell_key(workload, core_count, freq_index))
    }

    /// Static schedule for a known workload: the cell minimizing mean
    /// energy among cells whose makespan is within `makespan_cap_factor`
    /// of the workload's best makespan. Never adapted at runtime.
    pub fn schedule(&self, workload: &str) -> Result<HierAction, GovernorError> {
        if !self.workloads.iter().any(|w| w == workload) {
            return Err(GovernorError::UnknownWorkload(workload.to_string()));
        }
        let mut best_makespan = f64::INFINITY;
        for cores in 1..=self.core_counts {
            for fi in 0..self.freq_levels {
                if let Some(c) = self.lookup(workload, cores, fi) {
                    best_makespan = best_makespan.min(c.mean_makespan_s);
                }
            }
        }
        let cap = self.makespan_cap_factor * best_makespan;
        let mut best: Option<(f64, usize, usize)> = None;
        for cores in 1..=self.core_counts {
            for fi in 0..self.freq_levels {
                if let Some(c) = self.lookup(workload, cores, fi) {
                    if c.mean_makespan_s <= cap {
                        let better = match best {
                            None => true,
                            Some((e, ..)) => c.mean_energy_j < e,
                        };
                        if better {
                            best = Some((c.mean_energy_j, cores, fi));
                        }
                    }
                }
            }
        }
        let (_, cores, fi) =
            best.ok_or_else(|| GovernorError::UnknownWorkload(workload.to_string()))?;
        Ok(HierAction {
            core_count: cores,
            freq_index: fi,
            priority: (0..self.core_counts).collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
