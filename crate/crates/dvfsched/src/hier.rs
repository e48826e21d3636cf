//! Hierarchical two-agent controller: reward functions, the joint action
//! codec, action-space accounting, the Dyna-style training loop with
//! model-generated planning transitions, and the fail-safe thermal layer.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentConfig, AgentError, D3qnAgent, ReplayBuffer, Transition};
use crate::envmodel::{derive_thermal, FcnRegressor, ModelError, RegressorConfig};
use crate::net::seeded_rng;
use crate::platform::{execute, PlatformSpec, SimError, SimState, WorkloadSpec};

#[derive(Debug, Error)]
pub enum HierError {
    #[error("temperature vector is empty")]
    EmptyTemps,
    #[error("baseline target must be positive: {0}")]
    NonPositiveTarget(String),
    #[error("action index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("action-space size overflows u128")]
    Overflow,
    #[error("episode horizon exceeded")]
    HorizonExceeded,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Joint decision: how many cores, at what frequency, in which priority
/// order. The top `core_count` cores in `priority` order are activated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierAction {
    pub core_count: usize,
    pub freq_index: usize,
    pub priority: Vec<usize>,
}

/// Per-step reward components. `r_profiler` is the mean of the energy and
/// makespan rewards; `r_temp` is the temperature agent's reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBundle {
    pub r_temp: f64,
    pub r_energy: f64,
    pub r_makespan: f64,
    pub r_profiler: f64,
}

/// Baseline targets measured before training: the powersave governor's
/// energy and the performance governor's makespan on the same workload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetsBaseline {
    pub energy_powersave_j: f64,
    pub makespan_performance_s: f64,
}

impl TargetsBaseline {
    pub fn validate(&self) -> Result<(), HierError> {
        if self.energy_powersave_j <= 0.0 {
            return Err(HierError::NonPositiveTarget("energy_powersave_j".into()));
        }
        if self.makespan_performance_s <= 0.0 {
            return Err(HierError::NonPositiveTarget("makespan_performance_s".into()));
        }
        Ok(())
    }
}

/// Mean over cores of the per-core piecewise temperature reward:
/// -1 if the core is over `threshold`, else (threshold - temp).
pub fn temp_reward(temps: &[f64], threshold: f64) -> Result<f64, HierError> {
    if temps.is_empty() {
        return Err(HierError::EmptyTemps);
    }
    let sum: f64 = temps
        .iter()
        .map(|&t| if t > threshold { -1.0 } else { threshold - t })
        .sum();
    Ok(sum / temps.len() as f64)
}

pub const DEFAULT_TEMP_THRESHOLD_C: f64 = 50.0;
pub const DEFAULT_C_TH: f64 = 0.3;
pub const DEFAULT_C_ST: f64 = 0.5;

/// Energy/makespan rewards against baseline targets.
///
/// Deltas are normalized by their targets so the exponent is unit-free:
/// d = (E_A - E_Psav) / E_Psav, clamped at 0 so beating the target yields
/// the maximum reward 1. r = 2 * exp(-c_st * d / c_th) - 1, except when
/// the metric exceeds its target by more than a factor of c_th
/// (E_A > E_Psav * (1 + c_th)), which is penalized with -1.
///
/// `r_temp` is left at 0; the episode loop fills it from `temp_reward`.
pub fn profiler_reward(
    energy_j: f64,
    makespan_s: f64,
    targets: &TargetsBaseline,
    c_th: f64,
    c_st: f64,
) -> Result<RewardBundle, HierError> {
    targets.validate()?;
    let component = |value: f64, target: f64| -> f64 {
        if value > target * (1.0 + c_th) {
            return -1.0;
        }
        let d = ((value - target) / target).max(0.0);
        2.0 * (-c_st * d / c_th).exp() - 1.0
    };
    let r_energy = component(energy_j, targets.energy_powersave_j);
    let r_makespan = component(makespan_s, targets.makespan_performance_s);
    Ok(RewardBundle {
        r_temp: 0.0,
        r_energy,
        r_makespan,
        r_profiler: 0.5 * (r_energy + r_makespan),
    })
}

/// Action-space sizes for m cores and n frequency levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpaceSizes {
    /// Exact joint count: sum over nonempty core subsets of per-core
    /// frequency assignments, (1+n)^m - 1.
    pub naive_exact: u128,
    /// The coarser m^n upper-bound figure (degenerate when m or n is 1,
    /// where the exact count is used instead).
    pub naive_bound: u128,
    /// Hierarchical decomposition: m^2 + m + n.
    pub hierarchical: u128,
}

pub fn action_space_sizes(m: u32, n: u32) -> Result<ActionSpaceSizes, HierError> {
    if m == 0 || n == 0 {
        return Err(HierError::IndexOutOfRange("m and n must be >= 1".into()));
    }
    let naive_exact = (1u128 + n as u128)
        .checked_pow(m)
        .and_then(|v| v.checked_sub(1))
        .ok_or(HierError::Overflow)?;
    let naive_bound = if m > 1 && n > 1 {
        (m as u128).checked_pow(n).ok_or(HierError::Overflow)?
    } else {
        naive_exact
    };
    let hierarchical = (m as u128) * (m as u128) + m as u128 + n as u128;
    debug_assert!(naive_exact >= (1u128 << m.min(120)) - 1);
    if m >= 3 && n >= 3 {
        debug_assert!(hierarchical * 8 < naive_exact);
    }
    Ok(ActionSpaceSizes {
        naive_exact,
        naive_bound,
        hierarchical,
    })
}

/// Number of profiler-agent actions: every (core_count, freq_index) pair.
pub fn profiler_action_count(spec: &PlatformSpec) -> usize {
    spec.core_count * spec.n_freqs()
}

/// Number of temperature-agent actions: m * m flat indices, decoded as
/// rotations of a base core ordering.
pub fn temp_action_count(spec: &PlatformSpec) -> usize {
    spec.core_count * spec.core_count
}

/// Decodes (profiler index, temperature index) into a joint action.
///
/// The profiler index enumerates (core_count - 1) * n + freq_index. The
/// temperature index is reduced modulo m to a rotation of `base` (the
/// caller's preferred core ordering, typically coolest-first; identity if
/// None), which keeps the advertised m*m count while mapping onto the m
/// distinct rotations.
pub fn decode_action(
    spec: &PlatformSpec,
    profiler_idx: usize,
    temp_idx: usize,
    base: Option<&[usize]>,
) -> Result<HierAction, HierError> {
    let m = spec.core_count;
    let n = spec.n_freqs();
    if profiler_idx >= m * n {
        return Err(HierError::IndexOutOfRange(format!(
            "profiler index {profiler_idx} >= {}",
            m * n
        )));
    }
    if temp_idx >= m * m {
        return Err(HierError::IndexOutOfRange(format!(
            "temperature index {temp_idx} >= {}",
            m * m
        )));
    }
    let identity: Vec<usize> = (0..m).collect();
    let base = base.unwrap_or(&identity);
    if base.len() != m {
        return Err(HierError::IndexOutOfRange("base ordering length".into()));
    }
    let rot = temp_idx % m;
    let priority: Vec<usize> = (0..m).map(|i| base[(i + rot) % m]).collect();
    Ok(HierAction {
        core_count: profiler_idx / n + 1,
        freq_index: profiler_idx % n,
        priority,
    })
}

/// Inverse of `decode_action` onto canonical indices: the temperature
/// index returned is the bare rotation offset (bucket zero of the m
/// aliased windows), so decode(encode(a)) == a for every decodable action.
pub fn encode_action(
    spec: &PlatformSpec,
    action: &HierAction,
    base: Option<&[usize]>,
) -> Result<(usize, usize), HierError> {
    let m = spec.core_count;
    let n = spec.n_freqs();
    if action.core_count == 0 || action.core_count > m || action.freq_index >= n {
        return Err(HierError::IndexOutOfRange("profiler fields".into()));
    }
    let identity: Vec<usize> = (0..m).collect();
    let base = base.unwrap_or(&identity);
    let rot = (0..m)
        .find(|&r| (0..m).all(|i| action.priority[i] == base[(i + r) % m]))
        .ok_or_else(|| {
            HierError::IndexOutOfRange("priority is not a rotation of the base ordering".into())
        })?;
    Ok(((action.core_count - 1) * n + action.freq_index, rot))
}

// ---------------------------------------------------------------------------
// Fail-safe layer

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SafetyConfig {
    /// Fraction of the maximum frequency index allowed before any
    /// relaxation (conservative deployment phase).
    pub conservative_freq_cap: f64,
    /// Fraction of cores allowed in the conservative phase.
    pub conservative_core_cap: f64,
    pub conservative_temp_threshold_c: f64,
    /// Veto threshold on the model's dropout-ensemble standard deviation.
    pub uncertainty_tau: f64,
    pub uncertainty_passes: usize,
    pub watchdog_warn_c: f64,
    pub watchdog_critical_c: f64,
    pub reenable_below_c: f64,
    /// (fine-tune sample count, frequency cap) pairs, ascending.
    pub relaxation_schedule: Vec<(usize, f64)>,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            conservative_freq_cap: 0.5,
            conservative_core_cap: 0.5,
            conservative_temp_threshold_c: 40.0,
            uncertainty_tau: 0.15,
            uncertainty_passes: 10,
            watchdog_warn_c: 60.0,
            watchdog_critical_c: 65.0,
            reenable_below_c: 50.0,
            relaxation_schedule: vec![(5, 0.65), (10, 0.80), (20, 1.0)],
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<(), HierError> {
        if self.watchdog_warn_c >= self.watchdog_critical_c {
            return Err(HierError::IndexOutOfRange(
                "watchdog warn must be below critical".into(),
            ));
        }
        for cap in [self.conservative_freq_cap, self.conservative_core_cap] {
            if !(cap > 0.0 && cap <= 1.0) {
                return Err(HierError::IndexOutOfRange("caps must be in (0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SafetyEvent {
    FrequencyClamped { cap: f64, from: usize, to: usize },
    CoreCountClamped { cap: f64, from: usize, to: usize },
    PredictionVetoed { std: f64, tau: f64 },
    WatchdogWarning { peak_c: f64 },
    CriticalThermal { peak_c: f64 },
    PowersaveLockReleased,
}

/// Stateful fail-safe filter applied between the policy and the platform.
#[derive(Debug, Clone)]
pub struct SafetyLayer {
    pub config: SafetyConfig,
    /// Fine-tune samples observed so far; drives cap relaxation.
    pub samples_seen: usize,
    /// Set by a critical-thermal event; cleared when all cores cool below
    /// `reenable_below_c`.
    pub powersave_locked: bool,
}

impl SafetyLayer {
    pub fn new(config: SafetyConfig) -> Result<Self, HierError> {
        config.validate()?;
        Ok(SafetyLayer {
            config,
            samples_seen: 0,
            powersave_locked: false,
        })
    }

    /// Current frequency cap per the relaxation schedule.
    pub fn current_freq_cap(&self) -> f64 {
        let mut cap = self.config.conservative_freq_cap;
        for &(at, c) in &self.config.relaxation_schedule {
            if self.samples_seen >= at {
                cap = c;
            }
        }
        cap
    }

    pub fn record_sample(&mut self) {
        self.samples_seen += 1;
    }

    /// Total filter: clamps, vetoes, or overrides the raw action. The
    /// `fallback` action is the ondemand baseline's choice, substituted
    /// when the model's uncertainty exceeds tau.
    pub fn filter(
        &mut self,
        spec: &PlatformSpec,
        raw: HierAction,
        temps: &[f64],
        model_uncertainty: Option<f64>,
        fallback: &HierAction,
    ) -> (HierAction, Vec<SafetyEvent>) {
        let mut events = Vec::new();
        let n = spec.n_freqs();
        let m = spec.core_count;
        let peak = temps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        if self.powersave_locked {
            if temps.iter().all(|&t| t < self.config.reenable_below_c) {
                self.powersave_locked = false;
                events.push(SafetyEvent::PowersaveLockReleased);
            } else {
                return (
                    HierAction {
                        core_count: m,
                        freq_index: 0,
                        priority: (0..m).collect(),
                    },
                    events,
                );
            }
        }

        if peak >= self.config.watchdog_critical_c {
            self.powersave_locked = true;
            events.push(SafetyEvent::CriticalThermal { peak_c: peak });
            return (
                HierAction {
                    core_count: m,
                    freq_index: 0,
                    priority: (0..m).collect(),
                },
                events,
            );
        }

        let mut action = raw;
        if let Some(std) = model_uncertainty {
            if std > self.config.uncertainty_tau {
                events.push(SafetyEvent::PredictionVetoed {
                    std,
                    tau: self.config.uncertainty_tau,
                });
                action = fallback.clone();
            }
        }

        if peak >= self.config.watchdog_warn_c {
            events.push(SafetyEvent::WatchdogWarning { peak_c: peak });
            action.freq_index = 0;
            return (action, events);
        }

        let freq_cap = self.current_freq_cap();
        let max_idx = (freq_cap * (n - 1) as f64).floor() as usize;
        if action.freq_index > max_idx {
            events.push(SafetyEvent::FrequencyClamped {
                cap: freq_cap,
                from: action.freq_index,
                to: max_idx,
            });
            action.freq_index = max_idx;
        }
        if freq_cap < 1.0 {
            let max_cores = ((self.config.conservative_core_cap * m as f64).ceil() as usize).max(1);
            if action.core_count > max_cores {
                events.push(SafetyEvent::CoreCountClamped {
                    cap: self.config.conservative_core_cap,
                    from: action.core_count,
                    to: max_cores,
                });
                action.core_count = max_cores;
            }
        }
        (action, events)
    }
}

// ---------------------------------------------------------------------------
// Training orchestrator

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainMode {
    ModelFree,
    ModelBased,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierConfig {
    /// Decisions per episode; each decision runs the workload once.
    pub horizon: usize,
    /// Synthetic transitions generated per real transition.
    pub planning_steps: usize,
    pub batch_size: usize,
    /// Retrain the dynamics model every this many episodes.
    pub model_retrain_every: usize,
    /// SGD step size for both agents.
    pub agent_learning_rate: f64,
    /// Per-episode multiplicative epsilon decay for both agents.
    pub epsilon_decay: f64,
    pub temp_threshold_c: f64,
    pub c_th: f64,
    pub c_st: f64,
    pub seed: u64,
}

impl HierConfig {
    pub fn new(mode: TrainMode, seed: u64) -> Self {
        HierConfig {
            horizon: 10,
            planning_steps: match mode {
                TrainMode::ModelFree => 0,
                TrainMode::ModelBased => 5,
            },
            batch_size: 32,
            model_retrain_every: 10,
            agent_learning_rate: 0.001,
            epsilon_decay: 0.995,
            temp_threshold_c: DEFAULT_TEMP_THRESHOLD_C,
            c_th: DEFAULT_C_TH,
            c_st: DEFAULT_C_ST,
            seed,
        }
    }

    pub fn mode(&self) -> TrainMode {
        if self.planning_steps == 0 {
            TrainMode::ModelFree
        } else {
            TrainMode::ModelBased
        }
    }
}

/// Per-episode summary row, appended to the run's JSON-lines log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub episode: usize,
    pub steps: usize,
    pub cumulative_r_profiler: f64,
    pub cumulative_r_temp: f64,
    pub real_transitions: usize,
    pub simulated_transitions: usize,
    pub total_makespan_s: f64,
    pub total_energy_j: f64,
    pub epsilon: f64,
}

/// One (input, target) row for the dynamics model: encoded state+action
/// in, [energy, makespan, power, util_active, util_stall] out.
#[derive(Debug, Clone)]
struct ModelSample {
    x: Vec<f64>,
    y: Vec<f64>,
    temps: Vec<f64>,
    core_count: usize,
}

/// Encodes the simulator state for the agents: temperatures scaled by
/// 1/100, the three utilization shares, and the last action's normalized
/// frequency and core fraction.
pub fn encode_state(spec: &PlatformSpec, state: &SimState, last: Option<&HierAction>) -> Vec<f64> {
    let mut v: Vec<f64> = state.temps_c.iter().map(|t| t / 100.0).collect();
    v.push(state.util_active);
    v.push(state.util_stall);
    v.push(state.util_idle);
    match last {
        Some(a) => {
            v.push(spec.freq_table[a.freq_index] / spec.f_max());
            v.push(a.core_count as f64 / spec.core_count as f64);
        }
        None => {
            v.push(0.0);
            v.push(0.0);
        }
    }
    v
}

pub fn state_dim(spec: &PlatformSpec) -> usize {
    spec.core_count + 5
}

/// Measures the baseline targets by running the powersave governor (for
/// the energy target) and the performance governor (for the makespan
/// target) once each on the same workload.
pub fn measure_targets(
    spec: &PlatformSpec,
    wl: &WorkloadSpec,
    seed: u64,
) -> Result<TargetsBaseline, HierError> {
    let st = SimState::initial(spec);
    let all: Vec<usize> = (0..spec.core_count).collect();
    let powersave = HierAction {
        core_count: spec.core_count,
        freq_index: 0,
        priority: all.clone(),
    };
    let performance = HierAction {
        core_count: spec.core_count,
        freq_index: spec.n_freqs() - 1,
        priority: all,
    };
    let psav = execute(spec, wl, &powersave, &st, seed)?;
    let perf = execute(spec, wl, &performance, &st, seed.wrapping_add(1))?;
    let t = TargetsBaseline {
        energy_powersave_j: psav.energy_j,
        makespan_performance_s: perf.makespan_s,
    };
    t.validate()?;
    Ok(t)
}

/// Owns the environment, both agents, the dynamics model, and all four
/// replay buffers for one training run.
pub struct HierController {
    pub spec: PlatformSpec,
    pub workload: WorkloadSpec,
    pub targets: TargetsBaseline,
    pub config: HierConfig,
    pub profiler_agent: D3qnAgent,
    pub temp_agent: D3qnAgent,
    pub model: FcnRegressor,
    pub real_profiler: ReplayBuffer,
    pub sim_profiler: ReplayBuffer,
    pub real_temp: ReplayBuffer,
    pub sim_temp: ReplayBuffer,
    model_samples: Vec<ModelSample>,
    plan_rng: ChaCha20Rng,
    episodes_run: usize,
    pub total_real_transitions: usize,
    pub total_simulated_transitions: usize,
}

impl HierController {
    pub fn new(
        spec: PlatformSpec,
        workload: WorkloadSpec,
        config: HierConfig,
    ) -> Result<Self, HierError> {
        spec.validate()?;
        workload.validate()?;
        let targets = measure_targets(&spec, &workload, config.seed)?;
        let sd = state_dim(&spec);
        let mut prof_cfg = AgentConfig::new(sd, profiler_action_count(&spec), config.seed);
        prof_cfg.batch_size = config.batch_size;
        prof_cfg.learning_rate = config.agent_learning_rate;
        prof_cfg.epsilon_decay = config.epsilon_decay;
        let mut temp_cfg = AgentConfig::new(
            sd + 2, // profiler action appended: sequential selection
            temp_action_count(&spec),
            config.seed.wrapping_add(101),
        );
        temp_cfg.batch_size = config.batch_size;
        temp_cfg.learning_rate = config.agent_learning_rate;
        temp_cfg.epsilon_decay = config.epsilon_decay;
        let model_cfg = RegressorConfig::new(sd + 2, 32, 5, config.seed.wrapping_add(202));
        let buf = |_| ReplayBuffer::new(10_000);
        Ok(HierController {
            profiler_agent: D3qnAgent::new(prof_cfg)?,
            temp_agent: D3qnAgent::new(temp_cfg)?,
            model: FcnRegressor::new(model_cfg)?,
            real_profiler: buf(0),
            sim_profiler: buf(1),
            real_temp: buf(2),
            sim_temp: buf(3),
            model_samples: Vec::new(),
            plan_rng: seeded_rng(config.seed.wrapping_add(303)),
            episodes_run: 0,
            total_real_transitions: 0,
            total_simulated_transitions: 0,
            spec,
            workload,
            targets,
            config,
        })
    }

    fn model_input(&self, s_enc: &[f64], action: &HierAction) -> Vec<f64> {
        let mut x = s_enc.to_vec();
        x.push(self.spec.freq_table[action.freq_index] / self.spec.f_max());
        x.push(action.core_count as f64 / self.spec.core_count as f64);
        x
    }

    fn reward_for(&self, energy_j: f64, makespan_s: f64, temps: &[f64]) -> Result<RewardBundle, HierError> {
        let mut bundle =
            profiler_reward(energy_j, makespan_s, &self.targets, self.config.c_th, self.config.c_st)?;
        bundle.r_temp = temp_reward(temps, self.config.temp_threshold_c)?;
        Ok(bundle)
    }

    /// Coolest-first core ordering for the current temperatures; the base
    /// ordering that the temperature agent's rotations act on.
    fn coolest_first(temps: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..temps.len()).collect();
        order.sort_by(|&a, &b| temps[a].partial_cmp(&temps[b]).unwrap().then(a.cmp(&b)));
        order
    }

    fn train_model(&mut self) -> Result<(), HierError> {
        let xs: Vec<Vec<f64>> = self.model_samples.iter().map(|s| s.x.clone()).collect();
        let ys: Vec<Vec<f64>> = self.model_samples.iter().map(|s| s.y.clone()).collect();
        self.model.fit(&xs, &ys)?;
        // Synthetic transitions produced by the previous model are stale
        // once it is refit; keeping them would let old prediction error
        // linger in the replay mix indefinitely.
        self.sim_profiler.clear();
        self.sim_temp.clear();
        Ok(())
    }

    /// Generates one synthetic transition pair from the learned model and
    /// pushes it into the simulated buffers.
    fn plan_one(&mut self) -> Result<(), HierError> {
        let idx = self.plan_rng.gen_range(0..self.model_samples.len());
        let (s_temps, s_x) = {
            let s = &self.model_samples[idx];
            (s.temps.clone(), s.x.clone())
        };
        let s_enc = &s_x[..s_x.len() - 2];
        let p_idx = self.plan_rng.gen_range(0..profiler_action_count(&self.spec));
        let t_idx = self.plan_rng.gen_range(0..temp_action_count(&self.spec));
        let base = Self::coolest_first(&s_temps);
        let action = decode_action(&self.spec, p_idx, t_idx, Some(&base))?;
        let x = self.model_input(s_enc, &action);
        let pred = self.model.predict(&x)?;
        let (energy, makespan, power, ua, us) = (pred[0], pred[1], pred[2], pred[3], pred[4]);
        let active: Vec<usize> = action.priority[..action.core_count].to_vec();
        let next_temps = derive_thermal(&self.spec, &s_temps, power.max(0.0), &active)?;
        let bundle = self.reward_for(energy.max(0.0), makespan.max(1e-9), &next_temps)?;

        let mut next_enc: Vec<f64> = next_temps.iter().map(|t| t / 100.0).collect();
        let ua = ua.clamp(0.0, 1.0);
        let us = us.clamp(0.0, 1.0 - ua);
        next_enc.push(ua);
        next_enc.push(us);
        next_enc.push((1.0 - ua - us).clamp(0.0, 1.0));
        next_enc.push(self.spec.freq_table[action.freq_index] / self.spec.f_max());
        next_enc.push(action.core_count as f64 / self.spec.core_count as f64);

        self.sim_profiler.push(Transition {
            state: s_enc.to_vec(),
            action: p_idx,
            reward: bundle.r_profiler,
            next_state: next_enc.clone(),
            done: false,
            simulated: true,
        });
        let mut temp_state = s_enc.to_vec();
        temp_state.push(self.spec.freq_table[action.freq_index] / self.spec.f_max());
        temp_state.push(action.core_count as f64 / self.spec.core_count as f64);
        let mut temp_next = next_enc;
        temp_next.push(temp_state[temp_state.len() - 2]);
        temp_next.push(temp_state[temp_state.len() - 1]);
        self.sim_temp.push(Transition {
            state: temp_state,
            action: t_idx,
            reward: bundle.r_temp,
            next_state: temp_next,
            done: false,
            simulated: true,
        });
        self.total_simulated_transitions += 1;
        Ok(())
    }

    /// Draws a half-real half-simulated minibatch (all real when the
    /// simulated buffer is short) and trains one agent.
    fn train_agent(
        agent: &mut D3qnAgent,
        real: &ReplayBuffer,
        sim: &ReplayBuffer,
        batch: usize,
        rng: &mut ChaCha20Rng,
    ) -> Result<(), HierError> {
        let half = batch / 2;
        // Prefer a 50:50 real:simulated mix; when one buffer is short,
        // top the minibatch up from the other. Training starts as soon
        // as the two buffers together hold a full batch, which is where
        // planning buys its sample efficiency.
        let n_sim = sim.len().min(half);
        let mut n_real = batch - n_sim;
        if real.len() < n_real {
            n_real = real.len();
        }
        let n_sim = (batch - n_real).min(sim.len());
        if n_real + n_sim < batch {
            return Ok(());
        }
        let mut batch_refs: Vec<&Transition> = if n_real > 0 {
            real.sample(n_real, rng)?
        } else {
            Vec::new()
        };
        if n_sim > 0 {
            batch_refs.extend(sim.sample(n_sim, rng)?);
        }
        agent.learn_batch(&batch_refs)?;
        Ok(())
    }

    /// Runs one episode of the Dyna-style loop: act on the simulator,
    /// store real transitions, plan `planning_steps` synthetic
    /// transitions per real step, and train both agents each step.
    pub fn run_episode(&mut self) -> Result<EpisodeReport, HierError> {
        let mut state = SimState::initial(&self.spec);
        let mut last_action: Option<HierAction> = None;
        let mut report = EpisodeReport {
            episode: self.episodes_run,
            steps: 0,
            cumulative_r_profiler: 0.0,
            cumulative_r_temp: 0.0,
            real_transitions: 0,
            simulated_transitions: 0,
            total_makespan_s: 0.0,
            total_energy_j: 0.0,
            epsilon: self.profiler_agent.epsilon,
        };
        let model_based = self.config.mode() == TrainMode::ModelBased;
        if model_based
            && !self.model_samples.is_empty()
            && self.episodes_run % self.config.model_retrain_every == 0
        {
            self.train_model()?;
        }

        for step in 0..self.config.horizon {
            let s_enc = encode_state(&self.spec, &state, last_action.as_ref());
            let p_idx = self.profiler_agent.select_action(&s_enc)?;
            let mut temp_state = s_enc.clone();
            let (cc, fi) = (p_idx / self.spec.n_freqs() + 1, p_idx % self.spec.n_freqs());
            temp_state.push(self.spec.freq_table[fi] / self.spec.f_max());
            temp_state.push(cc as f64 / self.spec.core_count as f64);
            let t_idx = self.temp_agent.select_action(&temp_state)?;
            let base = Self::coolest_first(&state.temps_c);
            let action = decode_action(&self.spec, p_idx, t_idx, Some(&base))?;

            let step_seed = self
                .config
                .seed
                .wrapping_mul(1_000_003)
                .wrapping_add((self.episodes_run * self.config.horizon + step) as u64);
            let out = execute(&self.spec, &self.workload, &action, &state, step_seed)?;
            let bundle = self.reward_for(out.energy_j, out.makespan_s, &out.end_state.temps_c)?;
            let next_enc = encode_state(&self.spec, &out.end_state, Some(&action));
            let done = step + 1 == self.config.horizon;

            self.real_profiler.push(Transition {
                state: s_enc.clone(),
                action: p_idx,
                reward: bundle.r_profiler,
                next_state: next_enc.clone(),
                done,
                simulated: false,
            });
            let mut temp_next = next_enc.clone();
            temp_next.push(temp_state[temp_state.len() - 2]);
            temp_next.push(temp_state[temp_state.len() - 1]);
            self.real_temp.push(Transition {
                state: temp_state,
                action: t_idx,
                reward: bundle.r_temp,
                next_state: temp_next,
                done,
                simulated: false,
            });
            self.total_real_transitions += 1;
            report.real_transitions += 1;

            self.model_samples.push(ModelSample {
                x: self.model_input(&s_enc, &action),
                y: vec![
                    out.energy_j,
                    out.makespan_s,
                    out.end_state.last_power_w,
                    out.end_state.util_active,
                    out.end_state.util_stall,
                ],
                temps: state.temps_c.clone(),
                core_count: action.core_count,
            });

            if model_based {
                // Lazily fit on the first planning call so synthetic
                // transitions flow from the very first real step.
                if !self.model.is_trained() {
                    self.train_model()?;
                }
                for _ in 0..self.config.planning_steps {
                    self.plan_one()?;
                    report.simulated_transitions += 1;
                }
            }

            let mut rng = seeded_rng(step_seed.wrapping_add(7));
            // One update on real experience per step, plus one per planned
            // transition: planning converts model rollouts into extra
            // gradient steps, which is where the sample efficiency comes
            // from.
            for _ in 0..(1 + self.config.planning_steps) {
                Self::train_agent(
                    &mut self.profiler_agent,
                    &self.real_profiler,
                    &self.sim_profiler,
                    self.config.batch_size,
                    &mut rng,
                )?;
                Self::train_agent(
                    &mut self.temp_agent,
                    &self.real_temp,
                    &self.sim_temp,
                    self.config.batch_size,
                    &mut rng,
                )?;
            }

            report.cumulative_r_profiler += bundle.r_profiler;
            report.cumulative_r_temp += bundle.r_temp;
            report.total_makespan_s += out.makespan_s;
            report.total_energy_j += out.energy_j;
            report.steps += 1;
            state = out.end_state;
            last_action = Some(action);
        }

        self.profiler_agent.decay_epsilon();
        self.temp_agent.decay_epsilon();
        self.episodes_run += 1;
        report.epsilon = self.profiler_agent.epsilon;
        let _ = &self.model_samples.last().map(|s| s.core_count);
        Ok(report)
    }

    /// Greedy (epsilon = 0) decision for the current state.
    pub fn greedy_action(&self, state: &SimState, last: Option<&HierAction>) -> Result<HierAction, HierError> {
        let s_enc = encode_state(&self.spec, state, last);
        let p_idx = self.profiler_agent.greedy_action(&s_enc)?;
        let mut temp_state = s_enc;
        let (cc, fi) = (p_idx / self.spec.n_freqs() + 1, p_idx % self.spec.n_freqs());
        temp_state.push(self.spec.freq_table[fi] / self.spec.f_max());
        temp_state.push(cc as f64 / self.spec.core_count as f64);
        let t_idx = self.temp_agent.greedy_action(&temp_state)?;
        let base = Self::coolest_first(&state.temps_c);
        decode_action(&self.spec, p_idx, t_idx, Some(&base))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> PlatformSpec {
        PlatformSpec::small(0.0)
    }

    #[test]
    fn temp_reward_piecewise_cases() {
        assert_eq!(temp_reward(&[50.0, 50.0], 50.0).unwrap(), 0.0);
        assert_eq!(temp_reward(&[51.0], 50.0).unwrap(), -1.0);
        assert_eq!(temp_reward(&[40.0, 60.0], 50.0).unwrap(), 4.5);
        assert!(matches!(temp_reward(&[], 50.0), Err(HierError::EmptyTemps)));
    }

    #[test]
    fn profiler_reward_on_target_is_one() {
        let t = TargetsBaseline {
            energy_powersave_j: 2.0,
            makespan_performance_s: 1.5,
        };
        let b = profiler_reward(2.0, 1.5, &t, DEFAULT_C_TH, DEFAULT_C_ST).unwrap();
        assert_eq!(b.r_energy, 1.0);
        assert_eq!(b.r_makespan, 1.0);
        assert_eq!(b.r_profiler, 1.0);
    }

    #[test]
    fn profiler_reward_overrun_penalized() {
        let t = TargetsBaseline {
            energy_powersave_j: 1.0,
            makespan_performance_s: 1.0,
        };
        // Double the energy target exceeds the 1 + c_th bound.
        let b = profiler_reward(2.0, 1.0, &t, DEFAULT_C_TH, DEFAULT_C_ST).unwrap();
        assert_eq!(b.r_energy, -1.0);
        assert_eq!(b.r_makespan, 1.0);
        assert_eq!(b.r_profiler, 0.0);
    }

    #[test]
    fn profiler_reward_at_cutoff_delta() {
        // Normalized delta exactly c_th: r = 2 e^{-c_st} - 1.
        let t = TargetsBaseline {
            energy_powersave_j: 1.0,
            makespan_performance_s: 1.0,
        };
        let b = profiler_reward(1.3, 1.0, &t, 0.3, 0.5).unwrap();
        let expected = 2.0 * (-0.5f64).exp() - 1.0;
        assert!((b.r_energy - expected).abs() < 1e-12);
        assert!((expected - 0.2131).abs() < 1e-4);
    }

    #[test]
    fn profiler_reward_strictly_decreasing_below_cutoff() {
        let t = TargetsBaseline {
            energy_powersave_j: 1.0,
            makespan_performance_s: 1.0,
        };
        let mut prev = f64::INFINITY;
        for i in 0..=12 {
            let e = 1.0 + 0.025 * i as f64; // up to +30%
            let b = profiler_reward(e, 1.0, &t, 0.3, 0.5).unwrap();
            assert!(b.r_energy < prev || i == 0);
            assert!(b.r_energy > -1.0 && b.r_energy <= 1.0);
            prev = b.r_energy;
        }
    }

    #[test]
    fn nonpositive_targets_rejected() {
        let t = TargetsBaseline {
            energy_powersave_j: 0.0,
            makespan_performance_s: 1.0,
        };
        assert!(profiler_reward(1.0, 1.0, &t, 0.3, 0.5).is_err());
    }

    #[test]
    fn action_space_worked_examples() {
        let s = action_space_sizes(6, 12).unwrap();
        assert_eq!(s.naive_exact, 4_826_808); // 13^6 - 1
        assert_eq!(s.naive_bound, 2_176_782_336); // 6^12
        assert_eq!(s.hierarchical, 54);
        assert!(s.naive_exact <= s.naive_bound);

        let tiny = action_space_sizes(1, 1).unwrap();
        assert_eq!(tiny.naive_exact, 1);
        assert_eq!(tiny.hierarchical, 3);
    }

    #[test]
    fn action_space_overflow_reported() {
        assert!(matches!(
            action_space_sizes(200, 1000),
            Err(HierError::Overflow)
        ));
    }

    #[test]
    fn codec_round_trip_exhaustive() {
        let mut spec = small_spec();
        spec.core_count = 3;
        spec.core_efficiency = vec![1.0, 0.9, 0.8];
        spec.freq_table = vec![1.0e9, 2.0e9];
        spec.validate().unwrap();
        let m = 3;
        let n = 2;
        let mut seen = 0;
        for p in 0..m * n {
            for t in 0..m {
                let a = decode_action(&spec, p, t, None).unwrap();
                let (p2, t2) = encode_action(&spec, &a, None).unwrap();
                assert_eq!((p, t), (p2, t2));
                seen += 1;
            }
        }
        assert_eq!(seen, m * n * m);
        // Aliased indices decode to the canonical rotation.
        for t in m..m * m {
            let a = decode_action(&spec, 0, t, None).unwrap();
            let (_, canon) = encode_action(&spec, &a, None).unwrap();
            assert_eq!(canon, t % m);
        }
        assert!(decode_action(&spec, m * n, 0, None).is_err());
        assert!(decode_action(&spec, 0, m * m, None).is_err());
    }

    #[test]
    fn codec_respects_base_ordering() {
        let spec = small_spec();
        let base = vec![1usize, 0];
        let a = decode_action(&spec, 0, 1, Some(&base)).unwrap();
        assert_eq!(a.priority, vec![0, 1]); // rotation 1 of [1, 0]
        let (_, t) = encode_action(&spec, &a, Some(&base)).unwrap();
        assert_eq!(t, 1);
    }

    #[test]
    fn safety_conservative_clamps() {
        let spec = PlatformSpec::default_hetero();
        let mut layer = SafetyLayer::new(SafetyConfig::default()).unwrap();
        let raw = HierAction {
            core_count: 6,
            freq_index: 11,
            priority: (0..6).collect(),
        };
        let fallback = raw.clone();
        let temps = vec![35.0; 6];
        let (a, ev) = layer.filter(&spec, raw, &temps, None, &fallback);
        assert_eq!(a.freq_index, 5); // floor(0.5 * 11)
        assert_eq!(a.core_count, 3); // ceil(0.5 * 6)
        assert!(ev
            .iter()
            .any(|e| matches!(e, SafetyEvent::FrequencyClamped { to: 5, .. })));
    }

    #[test]
    fn safety_relaxation_schedule() {
        let mut layer = SafetyLayer::new(SafetyConfig::default()).unwrap();
        assert_eq!(layer.current_freq_cap(), 0.5);
        for _ in 0..5 {
            layer.record_sample();
        }
        assert_eq!(layer.current_freq_cap(), 0.65);
        for _ in 0..5 {
            layer.record_sample();
        }
        assert_eq!(layer.current_freq_cap(), 0.80);
        for _ in 0..10 {
            layer.record_sample();
        }
        assert_eq!(layer.current_freq_cap(), 1.0);
    }

    #[test]
    fn safety_uncertainty_veto_falls_back() {
        let spec = PlatformSpec::default_hetero();
        let mut layer = SafetyLayer::new(SafetyConfig::default()).unwrap();
        layer.samples_seen = 100; // fully relaxed
        let raw = HierAction {
            core_count: 6,
            freq_index: 11,
            priority: (0..6).collect(),
        };
        let fallback = HierAction {
            core_count: 6,
            freq_index: 0,
            priority: (0..6).collect(),
        };
        let temps = vec![35.0; 6];
        let (a, ev) = layer.filter(&spec, raw, &temps, Some(0.3), &fallback);
        assert_eq!(a, fallback);
        assert!(ev
            .iter()
            .any(|e| matches!(e, SafetyEvent::PredictionVetoed { .. })));
    }

    #[test]
    fn safety_watchdog_and_powersave_lock() {
        let spec = PlatformSpec::default_hetero();
        let mut layer = SafetyLayer::new(SafetyConfig::default()).unwrap();
        layer.samples_seen = 100;
        let raw = HierAction {
            core_count: 6,
            freq_index: 11,
            priority: (0..6).collect(),
        };
        let fb = raw.clone();
        // Warning: force min frequency.
        let (a, ev) = layer.filter(&spec, raw.clone(), &[61.0, 40.0, 40.0, 40.0, 40.0, 40.0], None, &fb);
        assert_eq!(a.freq_index, 0);
        assert!(ev.iter().any(|e| matches!(e, SafetyEvent::WatchdogWarning { .. })));
        // Critical: lock to powersave.
        let (a, ev) = layer.filter(&spec, raw.clone(), &[66.0, 40.0, 40.0, 40.0, 40.0, 40.0], None, &fb);
        assert_eq!(a.freq_index, 0);
        assert_eq!(a.core_count, 6);
        assert!(ev.iter().any(|e| matches!(e, SafetyEvent::CriticalThermal { .. })));
        assert!(layer.powersave_locked);
        // Still hot: stays locked even for a cool-ish raw request.
        let (a, _) = layer.filter(&spec, raw.clone(), &[55.0; 6], None, &fb);
        assert_eq!(a.freq_index, 0);
        assert!(layer.powersave_locked);
        // Cooled below reenable threshold: released.
        let (_, ev) = layer.filter(&spec, raw, &[45.0; 6], None, &fb);
        assert!(ev.iter().any(|e| matches!(e, SafetyEvent::PowersaveLockReleased)));
        assert!(!layer.powersave_locked);
    }

    #[test]
    fn measured_targets_are_positive_and_ordered() {
        let spec = small_spec();
        let wl = WorkloadSpec::new("w", 0.5, 0.6, 0.1);
        let t = measure_targets(&spec, &wl, 9).unwrap();
        assert!(t.energy_powersave_j > 0.0);
        assert!(t.makespan_performance_s > 0.0);
    }

    #[test]
    fn zeta_zero_keeps_sim_buffers_empty() {
        let spec = small_spec();
        let wl = WorkloadSpec::new("w", 0.2, 0.6, 0.1);
        let mut cfg = HierConfig::new(TrainMode::ModelFree, 4);
        cfg.horizon = 4;
        let mut ctl = HierController::new(spec, wl, cfg).unwrap();
        for _ in 0..3 {
            let r = ctl.run_episode().unwrap();
            assert_eq!(r.simulated_transitions, 0);
        }
        assert_eq!(ctl.sim_profiler.len(), 0);
        assert_eq!(ctl.sim_temp.len(), 0);
    }

    #[test]
    fn zeta_five_yields_five_per_real_step() {
        let spec = small_spec();
        let wl = WorkloadSpec::new("w", 0.2, 0.6, 0.1);
        let mut cfg = HierConfig::new(TrainMode::ModelBased, 4);
        cfg.horizon = 4;
        cfg.planning_steps = 5;
        let mut ctl = HierController::new(spec, wl, cfg).unwrap();
        let r = ctl.run_episode().unwrap();
        assert_eq!(r.real_transitions, 4);
        assert_eq!(r.simulated_transitions, 20);
        assert_eq!(ctl.sim_profiler.len(), 20);
        assert_eq!(ctl.sim_temp.len(), 20);
    }

    #[test]
    fn episode_reports_are_seed_deterministic() {
        let run = || {
            let spec = small_spec();
            let wl = WorkloadSpec::new("w", 0.2, 0.6, 0.1);
            let mut cfg = HierConfig::new(TrainMode::ModelBased, 77);
            cfg.horizon = 3;
            let mut ctl = HierController::new(spec, wl, cfg).unwrap();
            let mut out = String::new();
            for _ in 0..3 {
                out.push_str(&serde_json::to_string(&ctl.run_episode().unwrap()).unwrap());
                out.push('\n');
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adversarial_policy_never_breaches_critical_plus_one_step() {
        // Hot spec, always-max raw actions, safety layer on: no observed
        // temperature may exceed critical + one RC step's rise.
        let mut spec = small_spec();
        spec.thermal_time_constant = 0.05;
        spec.thermal_resistance = 12.0;
        spec.validate().unwrap();
        let wl = WorkloadSpec::new("w", 0.5, 0.5, 0.0);
        let mut layer = SafetyLayer::new(SafetyConfig::default()).unwrap();
        layer.samples_seen = 100;
        let raw = HierAction {
            core_count: 2,
            freq_index: 2,
            priority: vec![0, 1],
        };
        let fallback = HierAction {
            core_count: 2,
            freq_index: 0,
            priority: vec![0, 1],
        };
        let mut state = SimState::initial(&spec);
        // One-tick max rise bound from the RC update.
        let p_max = spec.power_static_w / 2.0 + spec.power_dyn_coeff;
        let rise = (spec.tick_s / spec.thermal_time_constant)
            * (spec.thermal_ambient_c + spec.thermal_resistance * p_max);
        for i in 0..60 {
            let (a, _) = layer.filter(&spec, raw.clone(), &state.temps_c, None, &fallback);
            let out = execute(&spec, &wl, &a, &state, i).unwrap();
            for &t in &out.end_state.temps_c {
                assert!(
                    t <= layer.config.watchdog_critical_c + rise,
                    "temp {t} exceeded bound at iter {i}"
                );
            }
            state = out.end_state;
        }
    }
}
