use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dvfsched::driver::{
    self, compare_governors, latency_report, LatencyLedger, RunConfig,
};
use dvfsched::features::{
    agreement, emit_prompt, encode, extraction_cost, FeatureCache, PROMPT_MAX_CHARS,
};
use dvfsched::governors::build_table;
use dvfsched::platform::{PlatformSpec, WorkloadSpec};
use dvfsched::transfer::{
    collect_samples, nshot_transfer, stratified_split, train_source_model,
};

#[derive(Parser)]
#[command(name = "dvfsched", about = "Thermal-aware DVFS scheduling toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Platform simulator utilities.
    Sim {
        #[command(subcommand)]
        command: SimCommand,
    },
    /// Train the hierarchical RL scheduler from a run config.
    Train(RunArgs),
    /// Evaluate the policy described by a run config.
    Eval(RunArgs),
    /// Rank baseline governors (and optionally the exhaustive table) on
    /// the simulator.
    Compare {
        #[arg(long, default_value = "small")]
        platform: String,
        #[arg(long, value_delimiter = ',',
              default_value = "performance,powersave,ondemand,conservative,schedutil")]
        governors: Vec<String>,
        #[arg(long, default_value = "powersave")]
        baseline: String,
        #[arg(long, default_value_t = 5)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also build and rank the exhaustive lookup table.
        #[arg(long)]
        table: bool,
    },
    /// Workload feature pipeline (cached/offline).
    Features {
        #[command(subcommand)]
        command: FeaturesCommand,
    },
    /// Cross-platform model transfer evaluation.
    Transfer {
        #[arg(long, value_delimiter = ',', default_value = "0,10,20,50")]
        shots: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Decision-latency comparison against exhaustive table construction.
    Latency {
        #[arg(long, default_value_t = 3.07)]
        t_llm: f64,
        #[arg(long, default_value_t = 0.05)]
        t_static: f64,
        #[arg(long, default_value_t = 0.358)]
        t_rl: f64,
        #[arg(long, default_value_t = 6)]
        cores: usize,
        #[arg(long, default_value_t = 12)]
        freqs: usize,
        #[arg(long, default_value_t = 15)]
        workloads: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 5.0)]
        mean_exec_s: f64,
    },
    /// Recompute a run directory's summary from its logs.
    Verify {
        /// Run directory containing summary.json and episodes.jsonl.
        run_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum SimCommand {
    /// Sweep every (core count, frequency) cell and build the lookup table.
    Sweep {
        #[arg(long, default_value = "small")]
        platform: String,
        #[arg(long, default_value_t = 2)]
        rho: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the table JSON (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run config TOML.
    #[arg(long)]
    config: PathBuf,
    /// Output base directory; the run id becomes a subdirectory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum FeaturesCommand {
    /// Emit the extraction prompt for a source file; with --cache and
    /// --model, print the cached extraction instead of calling anything.
    Extract {
        /// Benchmark source file (OpenMP C).
        source: PathBuf,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
    },
    /// Encode a cached feature vector to integer codes.
    Encode {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        benchmark: String,
        #[arg(long)]
        model: String,
    },
    /// Inter-model agreement over a three-model cache.
    Agree {
        #[arg(long)]
        cache: PathBuf,
    },
    /// Extraction cost and comparison against hardware profiling.
    Cost {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long, default_value_t = 0.0015)]
        cost_per_benchmark: f64,
        #[arg(long, default_value_t = 400_000.0)]
        profiling_cost: f64,
        #[arg(long, default_value_t = 0.0)]
        profiling_time_s: f64,
    },
}

fn platform_by_name(name: &str) -> Result<PlatformSpec, String> {
    match name {
        "small" => Ok(PlatformSpec::small(0.02)),
        "hetero" => Ok(PlatformSpec::default_hetero()),
        other => Err(format!("unknown platform '{other}' (small|hetero)")),
    }
}

fn demo_workloads() -> Vec<WorkloadSpec> {
    vec![
        WorkloadSpec::new("compute_bound", 0.4, 0.9, 0.05),
        WorkloadSpec::new("memory_bound", 0.4, 0.6, 0.5),
        WorkloadSpec::new("serial_heavy", 0.3, 0.2, 0.1),
    ]
}

/// Prints a line, ignoring a closed pipe (e.g. piping into `head`).
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn print_json<T: serde::Serialize>(value: &T) {
    emit(&serde_json::to_string_pretty(value).expect("serializable"));
}

fn run_cli(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Sim { command } => match command {
            SimCommand::Sweep {
                platform,
                rho,
                seed,
                out,
            } => {
                let spec = platform_by_name(&platform)?;
                let (table, rows) = build_table(&spec, &demo_workloads(), rho, seed)
                    .map_err(|e| e.to_string())?;
                let json = serde_json::json!({
                    "table": serde_json::from_str::<serde_json::Value>(&table.to_json())
                        .map_err(|e| e.to_string())?,
                    "sweep_rows": rows.len(),
                });
                match out {
                    Some(path) => fs::write(&path, serde_json::to_string_pretty(&json).unwrap())
                        .map_err(|e| e.to_string())?,
                    None => print_json(&json),
                }
            }
        },
        Command::Train(args) | Command::Eval(args) => {
            let text = fs::read_to_string(&args.config).map_err(|e| e.to_string())?;
            let config = RunConfig::from_toml(&text).map_err(|e| e.to_string())?;
            let (run_dir, summary) = driver::run(&config, &args.out).map_err(|e| e.to_string())?;
            eprintln!("wrote {}", run_dir.display());
            print_json(&summary);
        }
        Command::Compare {
            platform,
            governors,
            baseline,
            horizon,
            seed,
            table,
        } => {
            let spec = platform_by_name(&platform)?;
            let names: Vec<&str> = governors.iter().map(String::as_str).collect();
            let rows = compare_governors(
                &spec,
                &names,
                &demo_workloads(),
                &[seed, seed + 1, seed + 2],
                horizon,
                table,
                &baseline,
            )
            .map_err(|e| e.to_string())?;
            print_json(&rows);
        }
        Command::Features { command } => match command {
            FeaturesCommand::Extract {
                source,
                name,
                cache,
                model,
            } => {
                let bench = name.unwrap_or_else(|| {
                    source
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "benchmark".into())
                });
                if let (Some(cache_path), Some(model)) = (&cache, &model) {
                    let text = fs::read_to_string(cache_path).map_err(|e| e.to_string())?;
                    let cache = FeatureCache::from_jsonl(&text).map_err(|e| e.to_string())?;
                    let rec = cache.get(&bench, model).map_err(|e| e.to_string())?;
                    print_json(rec);
                } else {
                    let code = fs::read_to_string(&source).map_err(|e| e.to_string())?;
                    let prompt = emit_prompt(&bench, &code, PROMPT_MAX_CHARS)
                        .map_err(|e| e.to_string())?;
                    emit(&prompt);
                }
            }
            FeaturesCommand::Encode {
                cache,
                benchmark,
                model,
            } => {
                let text = fs::read_to_string(&cache).map_err(|e| e.to_string())?;
                let cache = FeatureCache::from_jsonl(&text).map_err(|e| e.to_string())?;
                let rec = cache.get(&benchmark, &model).map_err(|e| e.to_string())?;
                let enc = encode(&rec.features).map_err(|e| e.to_string())?;
                print_json(&enc);
            }
            FeaturesCommand::Agree { cache } => {
                let text = fs::read_to_string(&cache).map_err(|e| e.to_string())?;
                let cache = FeatureCache::from_jsonl(&text).map_err(|e| e.to_string())?;
                let report = agreement(&cache).map_err(|e| e.to_string())?;
                print_json(&report);
            }
            FeaturesCommand::Cost {
                cache,
                cost_per_benchmark,
                profiling_cost,
                profiling_time_s,
            } => {
                let text = fs::read_to_string(&cache).map_err(|e| e.to_string())?;
                let cache = FeatureCache::from_jsonl(&text).map_err(|e| e.to_string())?;
                let latencies: Vec<f64> = cache
                    .benchmarks()
                    .iter()
                    .flat_map(|b| {
                        cache
                            .models()
                            .iter()
                            .filter_map(|m| cache.get(b, m).ok().map(|r| r.latency_ms / 1000.0))
                            .collect::<Vec<_>>()
                    })
                    .collect();
                let report = extraction_cost(
                    &latencies,
                    cost_per_benchmark,
                    cache.benchmarks().len(),
                    profiling_cost,
                    profiling_time_s,
                );
                print_json(&report);
            }
        },
        Command::Transfer { shots, seed } => {
            let source = PlatformSpec::small(0.0);
            let mut target = PlatformSpec::small(0.0);
            target.freq_table = source.freq_table.iter().map(|f| f * 1.25).collect();
            let wl = WorkloadSpec::new("transfer_probe", 0.3, 0.7, 0.2);
            let source_samples = collect_samples(&source, &wl, 3, seed);
            let target_samples = collect_samples(&target, &wl, 3, seed + 1);
            let (train, _) = stratified_split(&source_samples, seed);
            let model = train_source_model(&train, seed).map_err(|e| e.to_string())?;
            let mut reports = Vec::new();
            for &s in &shots {
                reports.push(
                    nshot_transfer(&model, &train, &target_samples, s, seed)
                        .map_err(|e| e.to_string())?,
                );
            }
            print_json(&reports);
        }
        Command::Latency {
            t_llm,
            t_static,
            t_rl,
            cores,
            freqs,
            workloads,
            reps,
            mean_exec_s,
        } => {
            let ledger = LatencyLedger {
                t_llm_s: t_llm,
                t_static_s: t_static,
                t_rl_s: t_rl,
            };
            let cmp = latency_report(&ledger, cores, freqs, workloads, reps, mean_exec_s);
            print_json(&cmp);
        }
        Command::Verify { run_dir } => {
            driver::verify(&run_dir).map_err(|e| e.to_string())?;
            emit("ok: summary matches episode logs");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run_cli(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
