//! Walks the offline feature pipeline: prompt emission, cached
//! extraction lookup, integer encoding, inter-model agreement, and the
//! cost comparison against hardware profiling.

use dvfsched::features::{
    agreement, emit_prompt, encode, extraction_cost, count_syntactic, FeatureCache,
    FEATURE_KEYS, PROMPT_MAX_CHARS,
};

fn main() {
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

    let source = std::fs::read_to_string(format!("{fixtures}/omp/matmul.c")).unwrap();
    let prompt = emit_prompt("matmul", &source, PROMPT_MAX_CHARS).unwrap();
    println!("prompt: {} chars (cap {PROMPT_MAX_CHARS})\n", prompt.chars().count());

    let syn = count_syntactic(&source);
    println!(
        "syntactic: {} for-loops (max nest {}), {} omp pragmas, {} functions\n",
        syn.for_loop_count, syn.max_loop_nesting_depth, syn.pragma_omp_count, syn.function_count
    );

    let cache_text = std::fs::read_to_string(format!("{fixtures}/feature_cache.jsonl")).unwrap();
    let cache = FeatureCache::from_jsonl(&cache_text).unwrap();
    println!("cache: {} records, {} benchmarks, {} models", cache.len(),
        cache.benchmarks().len(), cache.models().len());

    let rec = cache.get("matmul", "model_a").unwrap();
    let enc = encode(&rec.features).unwrap();
    println!("\nmatmul/model_a encoded:");
    for (k, c) in FEATURE_KEYS.iter().zip(&enc.codes) {
        println!("  {k:<28} {c}");
    }

    let agree = agreement(&cache).unwrap();
    println!("\nagreement over models {:?} (overall unanimous {:.3}):",
        agree.models, agree.overall_unanimous);
    for (feature, a) in &agree.per_feature {
        if a.unanimous < 1.0 {
            println!("  {feature:<28} pairwise {:?} unanimous {:.3}", a.pairwise, a.unanimous);
        }
    }

    // Worked numbers: 42 benchmarks at $0.0015 each vs a $400k profiling
    // rig amortized to $18 of use.
    let report = extraction_cost(&[3.07; 42], 0.0015, 42, 400_000.0, 18.0 * 3600.0);
    println!("\ncost: total ${:.3}, savings factor {:?}",
        report.total_cost_usd,
        report.cost_savings_factor.map(|f| format!("{f:.0}x")));
}
