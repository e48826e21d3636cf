//! Decision-latency accounting: one-time feature extraction plus a
//! forward pass versus exhaustively profiling every configuration.

use dvfsched::driver::{latency_report, LatencyLedger};

fn main() {
    let ledger = LatencyLedger {
        t_llm_s: 3.07,    // one-time feature extraction
        t_static_s: 0.05, // syntactic analysis
        t_rl_s: 0.358,    // policy forward pass
    };
    // 6 cores x 12 frequencies x 15 workloads x 5 repetitions x 5 s each.
    let cmp = latency_report(&ledger, 6, 12, 15, 5, 5.0);

    println!("first decision:  {:.3} s", cmp.t_total_s);
    println!("table build:     {:.0} s", cmp.t_table_s);
    match cmp.first_decision_speedup {
        Some(s) => println!("first-decision speedup: {s:.0}x (roughly 8,000x)"),
        None => println!("first-decision speedup: undefined"),
    }
    match cmp.subsequent_speedup {
        Some(s) => println!("steady-state speedup:   {s:.0}x"),
        None => println!("steady-state speedup:   undefined"),
    }
}
