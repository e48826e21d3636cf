//! Deterministic, seedable model of a heterogeneous multi-core platform
//! executing a parallel workload under a fixed frequency / core allocation.
//!
//! Execution rate per active core is `efficiency * ((1 - mem_bound) * f_norm
//! + mem_bound)`: the stall share of the work is insensitive to frequency.
//! Power is a static floor plus a cubic dynamic term per active core, and
//! per-core temperatures follow a first-order RC update each tick.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::SemanticFeatureVector;
use crate::hier::HierAction;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid platform spec: {0}")]
    InvalidSpec(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("non-finite state encountered: {0}")]
    NonFiniteState(String),
    #[error("non-finite temperature")]
    NonFiniteTemperature,
}

/// Static description of a simulated platform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlatformSpec {
    pub core_count: usize,
    /// Ascending frequency table in hertz.
    pub freq_table: Vec<f64>,
    /// Per-core throughput multiplier in (0, 1].
    pub core_efficiency: Vec<f64>,
    pub thermal_ambient_c: f64,
    /// Degrees Celsius per watt.
    pub thermal_resistance: f64,
    /// Seconds.
    pub thermal_time_constant: f64,
    pub power_static_w: f64,
    /// Watts per normalized-frequency-cubed per active core.
    pub power_dyn_coeff: f64,
    pub throttle_temp_c: f64,
    /// Simulation tick in seconds; mirrors 10 ms power sampling.
    pub tick_s: f64,
    /// Relative Gaussian noise on throughput and power; 0 disables.
    pub noise_sigma: f64,
}

impl PlatformSpec {
    /// Six-core heterogeneous default: two performance cores at efficiency
    /// 1.0, the rest at 0.8, twelve frequency levels.
    pub fn default_hetero() -> Self {
        let freq_table: Vec<f64> = (0..12)
            .map(|i| 345.0e6 + i as f64 * (2035.0e6 - 345.0e6) / 11.0)
            .collect();
        PlatformSpec {
            core_count: 6,
            freq_table,
            core_efficiency: vec![1.0, 1.0, 0.8, 0.8, 0.8, 0.8],
            thermal_ambient_c: 25.0,
            thermal_resistance: 2.0,
            thermal_time_constant: 4.0,
            power_static_w: 1.0,
            power_dyn_coeff: 2.0,
            throttle_temp_c: 50.0,
            tick_s: 0.01,
            noise_sigma: 0.02,
        }
    }

    /// Small two-core spec used by desk-scale training runs and tests.
    pub fn small(noise_sigma: f64) -> Self {
        PlatformSpec {
            core_count: 2,
            freq_table: vec![400.0e6, 1000.0e6, 1600.0e6],
            core_efficiency: vec![1.0, 0.8],
            thermal_ambient_c: 25.0,
            thermal_resistance: 2.0,
            thermal_time_constant: 2.0,
            power_static_w: 0.5,
            power_dyn_coeff: 1.5,
            throttle_temp_c: 50.0,
            tick_s: 0.01,
            noise_sigma,
        }
    }

    pub fn n_freqs(&self) -> usize {
        self.freq_table.len()
    }

    pub fn f_max(&self) -> f64 {
        *self.freq_table.last().expect("nonempty freq table")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.core_count == 0 {
            return Err(SimError::InvalidSpec("core_count must be >= 1".into()));
        }
        if self.freq_table.is_empty() {
            return Err(SimError::InvalidSpec("freq_table must be nonempty".into()));
        }
        if !self.freq_table.windows(2).all(|w| w[0] < w[1]) {
            return Err(SimError::InvalidSpec(
                "freq_table must be strictly increasing".into(),
            ));
        }
        if self.freq_table.iter().any(|f| *f <= 0.0) {
            return Err(SimError::InvalidSpec("frequencies must be positive".into()));
        }
        if self.core_efficiency.len() != self.core_count {
            return Err(SimError::InvalidSpec(
                "core_efficiency length must equal core_count".into(),
            ));
        }
        if self
            .core_efficiency
            .iter()
            .any(|e| !(*e > 0.0 && *e <= 1.0))
        {
            return Err(SimError::InvalidSpec(
                "core_efficiency entries must lie in (0, 1]".into(),
            ));
        }
        if self.tick_s <= 0.0 {
            return Err(SimError::InvalidSpec("tick_s must be positive".into()));
        }
        if self.throttle_temp_c <= self.thermal_ambient_c {
            return Err(SimError::InvalidSpec(
                "throttle_temp must exceed ambient".into(),
            ));
        }
        if self.thermal_resistance <= 0.0 || self.thermal_time_constant <= 0.0 {
            return Err(SimError::InvalidSpec(
                "thermal constants must be positive".into(),
            ));
        }
        if self.power_static_w < 0.0 || self.power_dyn_coeff <= 0.0 {
            return Err(SimError::InvalidSpec("power constants invalid".into()));
        }
        Ok(())
    }
}

/// Parallel workload under Amdahl's law with a frequency-insensitive
/// stall share.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub name: String,
    /// Abstract work units; one unit completes in one second on a single
    /// efficiency-1.0 core at maximum frequency with no stall share.
    pub work_units: f64,
    /// Amdahl parallel share in [0, 1].
    pub parallel_fraction: f64,
    /// Fraction of execution time insensitive to frequency (stall share).
    pub mem_bound_factor: f64,
    /// Extra seconds of synchronization per active core.
    pub sync_overhead_per_core: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_vector: Option<SemanticFeatureVector>,
}

impl WorkloadSpec {
    pub fn new(name: &str, work_units: f64, parallel_fraction: f64, mem_bound_factor: f64) -> Self {
        WorkloadSpec {
            name: name.to_string(),
            work_units,
            parallel_fraction,
            mem_bound_factor,
            sync_overhead_per_core: 0.0,
            feature_vector: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.work_units <= 0.0 {
            return Err(SimError::InvalidSpec("work_units must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.parallel_fraction) {
            return Err(SimError::InvalidSpec("parallel_fraction out of [0,1]".into()));
        }
        if !(0.0..=1.0).contains(&self.mem_bound_factor) {
            return Err(SimError::InvalidSpec("mem_bound_factor out of [0,1]".into()));
        }
        if self.sync_overhead_per_core < 0.0 {
            return Err(SimError::InvalidSpec("sync overhead must be >= 0".into()));
        }
        Ok(())
    }
}

/// Dynamic platform state carried across runs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimState {
    pub temps_c: Vec<f64>,
    pub util_active: f64,
    pub util_stall: f64,
    pub util_idle: f64,
    /// Cumulative joules; monotonically nondecreasing across steps.
    pub energy_j: f64,
    pub time_s: f64,
    pub last_power_w: f64,
}

impl SimState {
    pub fn initial(spec: &PlatformSpec) -> Self {
        SimState {
            temps_c: vec![spec.thermal_ambient_c; spec.core_count],
            util_active: 0.0,
            util_stall: 0.0,
            util_idle: 1.0,
            energy_j: 0.0,
            time_s: 0.0,
            last_power_w: 0.0,
        }
    }
}

/// Result of running one whole workload under a fixed allocation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepOutcome {
    pub makespan_s: f64,
    pub energy_j: f64,
    pub peak_temp_c: f64,
    pub end_state: SimState,
    pub throttled: bool,
}

/// One first-order RC update for every core.
///
/// `T' = T + (tick / tau) * (T_amb + R * P - T)`; ambient with zero power
/// is a fixed point.
pub fn thermal_step(
    spec: &PlatformSpec,
    temps: &[f64],
    power_per_core: &[f64],
) -> Result<Vec<f64>, SimError> {
    assert_eq!(temps.len(), spec.core_count);
    assert_eq!(power_per_core.len(), spec.core_count);
    let alpha = spec.tick_s / spec.thermal_time_constant;
    let mut out = Vec::with_capacity(temps.len());
    for (t, p) in temps.iter().zip(power_per_core) {
        let target = spec.thermal_ambient_c + spec.thermal_resistance * p;
        let next = t + alpha * (target - t);
        if !next.is_finite() {
            return Err(SimError::NonFiniteTemperature);
        }
        out.push(next);
    }
    Ok(out)
}

fn validate_action(spec: &PlatformSpec, action: &HierAction) -> Result<(), SimError> {
    let m = spec.core_count;
    if action.core_count == 0 || action.core_count > m {
        return Err(SimError::InvalidAction(format!(
            "core_count {} out of [1, {m}]",
            action.core_count
        )));
    }
    if action.freq_index >= spec.n_freqs() {
        return Err(SimError::InvalidAction(format!(
            "freq_index {} out of range",
            action.freq_index
        )));
    }
    let mut seen = vec![false; m];
    if action.priority.len() != m {
        return Err(SimError::InvalidAction("priority length mismatch".into()));
    }
    for &c in &action.priority {
        if c >= m || seen[c] {
            return Err(SimError::InvalidAction(
                "priority is not a permutation".into(),
            ));
        }
        seen[c] = true;
    }
    Ok(())
}

/// Runs the whole workload once under a fixed allocation.
///
/// Deterministic for fixed `(spec, wl, action, state, seed)`. Throttling
/// clamps the effective frequency to `freq_table[0]` while any active core
/// is over the throttle threshold.
pub fn execute(
    spec: &PlatformSpec,
    wl: &WorkloadSpec,
    action: &HierAction,
    state: &SimState,
    seed: u64,
) -> Result<StepOutcome, SimError> {
    spec.validate()?;
    wl.validate()?;
    validate_action(spec, action)?;

    let m = spec.core_count;
    let active: Vec<usize> = action.priority[..action.core_count].to_vec();
    let f = spec.freq_table[action.freq_index];
    let f_norm = f / spec.f_max();
    let f_min_norm = spec.freq_table[0] / spec.f_max();
    let mb = wl.mem_bound_factor;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut temps = state.temps_c.clone();
    let mut energy = state.energy_j;
    let mut peak = temps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut throttled = false;

    let mut serial_left = (1.0 - wl.parallel_fraction) * wl.work_units;
    let mut parallel_left = wl.parallel_fraction * wl.work_units;
    let mut sync_left = wl.sync_overhead_per_core * action.core_count as f64;
    let mut ticks: u64 = 0;
    let mut last_power = 0.0;
    // Generous guard against degenerate configurations.
    let max_ticks: u64 = 100_000_000;

    while serial_left > 1e-12 || parallel_left > 1e-12 || sync_left > 1e-12 {
        ticks += 1;
        if ticks > max_ticks {
            return Err(SimError::NonFiniteState("tick horizon exceeded".into()));
        }
        let over = active.iter().any(|&c| temps[c] > spec.throttle_temp_c);
        if over {
            throttled = true;
        }
        let eff_f_norm = if over { f_min_norm } else { f_norm };

        let noise = |rng: &mut ChaCha20Rng| -> f64 {
            if spec.noise_sigma > 0.0 {
                // Box-Muller; two uniforms per sample keeps the stream simple.
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen::<f64>();
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                (1.0 + spec.noise_sigma * z).max(0.01)
            } else {
                1.0
            }
        };
        let rate_noise = noise(&mut rng);
        let power_noise = noise(&mut rng);

        let core_rate = |c: usize| -> f64 {
            spec.core_efficiency[c] * ((1.0 - mb) * eff_f_norm + mb) * rate_noise
        };

        let dt = spec.tick_s;
        if serial_left > 1e-12 {
            let best = active
                .iter()
                .map(|&c| core_rate(c))
                .fold(0.0_f64, f64::max);
            serial_left -= best * dt;
        } else if parallel_left > 1e-12 {
            let total: f64 = active.iter().map(|&c| core_rate(c)).sum();
            parallel_left -= total * dt;
        } else {
            sync_left -= dt;
        }

        let dyn_w = spec.power_dyn_coeff * eff_f_norm.powi(3) * power_noise;
        let total_power = spec.power_static_w + active.len() as f64 * dyn_w;
        last_power = total_power;
        energy += total_power * dt;
        if !energy.is_finite() {
            return Err(SimError::NonFiniteState("energy".into()));
        }

        let mut per_core = vec![spec.power_static_w / m as f64; m];
        for &c in &active {
            per_core[c] += dyn_w;
        }
        temps = thermal_step(spec, &temps, &per_core)?;
        for &t in &temps {
            if t > peak {
                peak = t;
            }
        }
        if temps.iter().any(|&t| t > spec.throttle_temp_c) {
            throttled = true;
        }
    }

    let makespan = ticks as f64 * spec.tick_s;
    let busy_share = action.core_count as f64 / m as f64;
    let util_active = busy_share * (1.0 - mb);
    let util_stall = busy_share * mb;
    let util_idle = 1.0 - busy_share;

    let end_state = SimState {
        temps_c: temps,
        util_active,
        util_stall,
        util_idle,
        energy_j: energy,
        time_s: state.time_s + makespan,
        last_power_w: last_power,
    };
    Ok(StepOutcome {
        makespan_s: makespan,
        energy_j: energy - state.energy_j,
        peak_temp_c: peak,
        end_state,
        throttled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hier::HierAction;

    fn quiet_spec() -> PlatformSpec {
        let mut s = PlatformSpec::default_hetero();
        s.noise_sigma = 0.0;
        s
    }

    fn action(spec: &PlatformSpec, cores: usize, freq: usize) -> HierAction {
        HierAction {
            core_count: cores,
            freq_index: freq,
            priority: (0..spec.core_count).collect(),
        }
    }

    #[test]
    fn serial_workload_makespan_independent_of_core_count() {
        let spec = quiet_spec();
        let wl = WorkloadSpec::new("serial", 2.0, 0.0, 0.2);
        let st = SimState::initial(&spec);
        let m1 = execute(&spec, &wl, &action(&spec, 1, 5), &st, 7).unwrap();
        let m4 = execute(&spec, &wl, &action(&spec, 4, 5), &st, 7).unwrap();
        assert_eq!(m1.makespan_s, m4.makespan_s);
    }

    #[test]
    fn execute_is_deterministic() {
        let mut spec = quiet_spec();
        spec.noise_sigma = 0.02;
        let wl = WorkloadSpec::new("w", 1.0, 0.8, 0.3);
        let st = SimState::initial(&spec);
        let a = action(&spec, 3, 7);
        let o1 = execute(&spec, &wl, &a, &st, 42).unwrap();
        let o2 = execute(&spec, &wl, &a, &st, 42).unwrap();
        assert_eq!(
            serde_json::to_string(&o1).unwrap(),
            serde_json::to_string(&o2).unwrap()
        );
    }

    #[test]
    fn energy_matches_closed_form_tick_sum() {
        // Constant power P over k ticks -> energy = k * P * tick_s.
        let mut spec = PlatformSpec::small(0.0);
        spec.core_count = 2;
        let a = action(&spec, 2, 2);
        // Max frequency, no stall: each core processes eff_i per second.
        let rate: f64 = spec.core_efficiency.iter().sum::<f64>();
        let k = 50u64;
        let wl = WorkloadSpec::new("exact", rate * k as f64 * spec.tick_s, 1.0, 0.0);
        let st = SimState::initial(&spec);
        let out = execute(&spec, &wl, &a, &st, 0).unwrap();
        let p = spec.power_static_w + 2.0 * spec.power_dyn_coeff; // f_norm = 1
        let expected = k as f64 * p * spec.tick_s;
        assert!((out.energy_j - expected).abs() < 1e-9, "{}", out.energy_j);
        assert_eq!(out.makespan_s, k as f64 * spec.tick_s);
    }

    #[test]
    fn thermal_equilibrium_is_fixed_point() {
        let spec = quiet_spec();
        let temps = vec![spec.thermal_ambient_c; spec.core_count];
        let next = thermal_step(&spec, &temps, &vec![0.0; spec.core_count]).unwrap();
        for t in next {
            assert!((t - spec.thermal_ambient_c).abs() < 1e-12);
        }
    }

    #[test]
    fn thermal_converges_to_analytic_steady_state() {
        let spec = quiet_spec();
        let p = 3.0;
        let mut temps = vec![spec.thermal_ambient_c; spec.core_count];
        let steps = (spec.thermal_time_constant / spec.tick_s) as usize * 12;
        for _ in 0..steps {
            temps = thermal_step(&spec, &temps, &vec![p; spec.core_count]).unwrap();
        }
        let steady = spec.thermal_ambient_c + spec.thermal_resistance * p;
        for t in &temps {
            assert!((t - steady).abs() / (steady - spec.thermal_ambient_c) < 0.01);
        }
    }

    #[test]
    fn doubling_power_doubles_steady_state_rise() {
        let spec = quiet_spec();
        let run = |p: f64| -> f64 {
            let mut temps = vec![spec.thermal_ambient_c; spec.core_count];
            for _ in 0..((spec.thermal_time_constant / spec.tick_s) as usize * 20) {
                temps = thermal_step(&spec, &temps, &vec![p; spec.core_count]).unwrap();
            }
            temps[0] - spec.thermal_ambient_c
        };
        let r1 = run(2.0);
        let r2 = run(4.0);
        assert!((r2 / r1 - 2.0).abs() < 0.01);
    }

    #[test]
    fn makespan_nonincreasing_in_frequency_for_compute_bound() {
        let spec = quiet_spec();
        let wl = WorkloadSpec::new("cb", 1.0, 0.9, 0.0);
        let st = SimState::initial(&spec);
        let mut prev = f64::INFINITY;
        for fi in 0..spec.n_freqs() {
            let out = execute(&spec, &wl, &action(&spec, 2, fi), &st, 1).unwrap();
            assert!(out.makespan_s <= prev + 1e-12);
            prev = out.makespan_s;
        }
    }

    #[test]
    fn all_cores_bounded_below_by_ideal_speedup() {
        let spec = quiet_spec();
        let wl = WorkloadSpec::new("p", 0.9, 0.7, 0.0);
        let st = SimState::initial(&spec);
        let m = spec.core_count;
        let out = execute(&spec, &wl, &action(&spec, m, spec.n_freqs() - 1), &st, 1).unwrap();
        let total_eff: f64 = spec.core_efficiency.iter().sum();
        let ideal = wl.work_units / total_eff;
        assert!(out.makespan_s >= ideal - spec.tick_s);
    }

    #[test]
    fn energy_monotonic_across_steps() {
        let spec = quiet_spec();
        let wl = WorkloadSpec::new("w", 0.5, 0.5, 0.5);
        let mut st = SimState::initial(&spec);
        let mut last = 0.0;
        for i in 0..5 {
            let out = execute(&spec, &wl, &action(&spec, 2, 4), &st, i).unwrap();
            assert!(out.end_state.energy_j >= last);
            last = out.end_state.energy_j;
            st = out.end_state;
        }
    }

    #[test]
    fn hot_low_tau_spec_throttles_on_all_max_action() {
        let mut spec = PlatformSpec::small(0.0);
        spec.thermal_time_constant = 0.05;
        spec.power_dyn_coeff = 10.0;
        spec.thermal_resistance = 3.0;
        let wl = WorkloadSpec::new("hot", 5.0, 1.0, 0.0);
        let st = SimState::initial(&spec);
        let out = execute(&spec, &wl, &action(&spec, 2, 2), &st, 0).unwrap();
        assert!(out.throttled);
        assert!(out.peak_temp_c > spec.throttle_temp_c);
    }

    #[test]
    fn invalid_actions_rejected() {
        let spec = quiet_spec();
        let wl = WorkloadSpec::new("w", 1.0, 0.5, 0.0);
        let st = SimState::initial(&spec);
        let mut a = action(&spec, 0, 0);
        assert!(matches!(
            execute(&spec, &wl, &a, &st, 0),
            Err(SimError::InvalidAction(_))
        ));
        a = action(&spec, 1, 99);
        assert!(matches!(
            execute(&spec, &wl, &a, &st, 0),
            Err(SimError::InvalidAction(_))
        ));
        a = action(&spec, 1, 0);
        a.priority[0] = a.priority[1];
        assert!(matches!(
            execute(&spec, &wl, &a, &st, 0),
            Err(SimError::InvalidAction(_))
        ));
    }

    #[test]
    fn util_shares_sum_to_one_and_expose_stall() {
        let spec = quiet_spec();
        // 75%-stall workload on most of the machine: utilization reads high
        // even though active share is small.
        let wl = WorkloadSpec::new("stally", 0.5, 1.0, 0.75);
        let st = SimState::initial(&spec);
        let m = spec.core_count;
        let cores = (m as f64 * 0.8).round() as usize;
        let out = execute(&spec, &wl, &action(&spec, cores, 3), &st, 0).unwrap();
        let s = out.end_state.util_active + out.end_state.util_stall + out.end_state.util_idle;
        assert!((s - 1.0).abs() < 1e-9);
        assert!(out.end_state.util_stall > out.end_state.util_active);
    }
}
