//! Runs each baseline frequency governor on the same workload and prints
//! makespan, energy, and peak temperature side by side.

use dvfsched::governors::{Governor, GovernorKind};
use dvfsched::platform::{execute, PlatformSpec, SimState, WorkloadSpec};

fn main() {
    let spec = PlatformSpec::small(0.0);
    let wl = WorkloadSpec::new("demo_mixed", 0.4, 0.7, 0.25);
    let horizon = 8;

    let kinds = [
        ("performance", GovernorKind::Performance),
        ("powersave", GovernorKind::Powersave),
        ("ondemand", GovernorKind::ondemand_default()),
        ("conservative", GovernorKind::conservative_default()),
        ("schedutil", GovernorKind::schedutil_default()),
    ];

    println!("{:<14} {:>12} {:>12} {:>10}", "governor", "makespan_s", "energy_j", "peak_c");
    for (name, kind) in kinds {
        let mut gov = Governor::new(kind);
        let mut state = SimState::initial(&spec);
        let mut makespan = 0.0;
        let mut energy = 0.0;
        let mut peak = f64::NEG_INFINITY;
        for step in 0..horizon {
            let action = gov.govern(&state, &spec);
            let out = execute(&spec, &wl, &action, &state, step as u64).unwrap();
            makespan += out.makespan_s;
            energy += out.energy_j;
            peak = peak.max(out.peak_temp_c);
            state = out.end_state;
        }
        println!("{name:<14} {makespan:>12.4} {energy:>12.4} {peak:>10.2}");
    }
}
