//! Trains the two-agent hierarchical scheduler (core-count/frequency
//! profiler agent + per-core priority temperature agent) for a few
//! episodes and prints the learning trace.

use dvfsched::hier::{HierConfig, HierController, TrainMode};
use dvfsched::platform::{PlatformSpec, WorkloadSpec};

fn main() {
    let spec = PlatformSpec::small(0.0);
    let wl = WorkloadSpec::new("train_demo", 0.3, 0.7, 0.2);
    let mut cfg = HierConfig::new(TrainMode::ModelBased, 42);
    cfg.horizon = 6;

    let mut ctl = HierController::new(spec, wl, cfg).unwrap();
    println!(
        "{:>3} {:>10} {:>10} {:>8} {:>8} {:>7}",
        "ep", "r_prof", "r_temp", "real", "sim", "eps"
    );
    for _ in 0..20 {
        let r = ctl.run_episode().unwrap();
        println!(
            "{:>3} {:>10.4} {:>10.4} {:>8} {:>8} {:>7.3}",
            r.episode,
            r.cumulative_r_profiler,
            r.cumulative_r_temp,
            r.real_transitions,
            r.simulated_transitions,
            r.epsilon
        );
    }
    println!(
        "\ntotals: {} real / {} simulated transitions",
        ctl.total_real_transitions, ctl.total_simulated_transitions
    );
}
