//! Compares model-based training (synthetic transitions planned from a
//! learned dynamics model) against model-free training on the number of
//! real platform interactions needed before the greedy policy clears a
//! reward threshold.

use dvfsched::hier::{
    measure_targets, profiler_reward, HierConfig, HierController, TrainMode, DEFAULT_C_ST,
    DEFAULT_C_TH,
};
use dvfsched::platform::{execute, PlatformSpec, SimState, WorkloadSpec};

/// Mean per-step profiler reward of a greedy rollout.
fn greedy_score(ctl: &HierController, spec: &PlatformSpec, wl: &WorkloadSpec, horizon: usize) -> f64 {
    let targets = measure_targets(spec, wl, 0).unwrap();
    let mut state = SimState::initial(spec);
    let mut last = None;
    let mut sum = 0.0;
    for step in 0..horizon {
        let action = ctl.greedy_action(&state, last.as_ref()).unwrap();
        let out = execute(spec, wl, &action, &state, 900 + step as u64).unwrap();
        let r = profiler_reward(out.energy_j, out.makespan_s, &targets, DEFAULT_C_TH, DEFAULT_C_ST)
            .unwrap();
        sum += r.r_profiler;
        state = out.end_state;
        last = Some(action);
    }
    sum / horizon as f64
}

fn real_steps_to_reach(mode: TrainMode, seed: u64, threshold: f64, max_episodes: usize) -> Option<usize> {
    let spec = PlatformSpec::small(0.0);
    let wl = WorkloadSpec::new("plan_demo", 0.3, 0.7, 0.2);
    let mut cfg = HierConfig::new(mode, seed);
    cfg.horizon = 6;
    cfg.agent_learning_rate = 0.01;
    cfg.epsilon_decay = 0.9;
    cfg.model_retrain_every = 1;
    let mut ctl = HierController::new(spec.clone(), wl.clone(), cfg).unwrap();
    for _ in 0..max_episodes {
        ctl.run_episode().unwrap();
        if greedy_score(&ctl, &spec, &wl, 6) >= threshold {
            return Some(ctl.total_real_transitions);
        }
    }
    None
}

fn main() {
    // The best single action on this platform scores 0.0 per step;
    // random actions average about -0.5.
    let threshold = -0.05;
    println!("greedy per-step profiler reward threshold: {threshold}");
    println!("{:>5} {:>12} {:>12}", "seed", "model_based", "model_free");
    for seed in 0..5u64 {
        let mb = real_steps_to_reach(TrainMode::ModelBased, seed, threshold, 50);
        let mf = real_steps_to_reach(TrainMode::ModelFree, seed, threshold, 50);
        let show = |v: Option<usize>| v.map(|n| n.to_string()).unwrap_or_else(|| "-".into());
        println!("{:>5} {:>12} {:>12}", seed, show(mb), show(mf));
    }
}
