//! Shows the fail-safe stack filtering raw scheduler actions: the
//! conservative frequency/core caps with their relaxation schedule, the
//! uncertainty veto, and the thermal watchdog.

use dvfsched::hier::{HierAction, SafetyConfig, SafetyLayer};
use dvfsched::platform::PlatformSpec;

fn main() {
    let spec = PlatformSpec::default_hetero();
    let mut layer = SafetyLayer::new(SafetyConfig::default()).unwrap();

    let aggressive = HierAction {
        core_count: spec.core_count,
        freq_index: spec.n_freqs() - 1,
        priority: (0..spec.core_count).collect(),
    };
    let fallback = HierAction {
        core_count: spec.core_count,
        freq_index: spec.n_freqs() / 2,
        priority: (0..spec.core_count).collect(),
    };
    let cool = vec![30.0; spec.core_count];

    println!("-- early deployment: conservative caps --");
    let (a, events) = layer.filter(&spec, aggressive.clone(), &cool, None, &fallback);
    println!("raw f={} cores={} -> f={} cores={} ({} events)",
        aggressive.freq_index, aggressive.core_count, a.freq_index, a.core_count, events.len());
    for e in &events {
        println!("  {}", serde_json::to_string(e).unwrap());
    }

    println!("\n-- caps relax as fine-tune samples accumulate --");
    for _ in 0..20 {
        layer.record_sample();
    }
    let (a, _) = layer.filter(&spec, aggressive.clone(), &cool, None, &fallback);
    println!("after 20 samples: f={} cores={}", a.freq_index, a.core_count);

    println!("\n-- uncertainty veto --");
    let (a, events) = layer.filter(&spec, aggressive.clone(), &cool, Some(0.9), &fallback);
    println!("std 0.9 > tau: fell back to f={} cores={}", a.freq_index, a.core_count);
    for e in &events {
        println!("  {}", serde_json::to_string(e).unwrap());
    }

    println!("\n-- thermal watchdog --");
    let warm = vec![62.0; spec.core_count];
    let (a, _) = layer.filter(&spec, aggressive.clone(), &warm, None, &fallback);
    println!("62 C: forced to lowest frequency (f={})", a.freq_index);
    let hot = vec![66.0; spec.core_count];
    let (a, events) = layer.filter(&spec, aggressive.clone(), &hot, None, &fallback);
    println!("66 C: powersave lock (f={} cores={}, locked={})",
        a.freq_index, a.core_count, layer.powersave_locked);
    for e in &events {
        println!("  {}", serde_json::to_string(e).unwrap());
    }
    let (_, events) = layer.filter(&spec, aggressive, &cool, None, &fallback);
    println!("cooled below 50 C: lock released ({} events)", events.len());
    for e in &events {
        println!("  {}", serde_json::to_string(e).unwrap());
    }
}
