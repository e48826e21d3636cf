//! Workload feature handling: the 13-key semantic taxonomy with exact
//! integer encodings, the zero-shot extraction prompt, a cached/offline
//! extraction client with retry + graceful degradation, inter-model
//! agreement analysis, extraction cost accounting, and a lexical
//! syntactic-feature counter for OpenMP C sources.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("source code is empty")]
    EmptySource,
    #[error("no cached record for benchmark '{benchmark}' model '{model}'")]
    CacheMiss { benchmark: String, model: String },
    #[error("response parse failure: {0}")]
    ParseFailure(String),
    #[error("all retries failed: {0}")]
    AllRetriesFailed(String),
    #[error("unknown category '{value}' for feature '{key}'")]
    UnknownCategory { key: String, value: String },
    #[error("unknown feature key '{0}'")]
    UnknownKey(String),
    #[error("benchmark '{0}' lacks records from all three models")]
    IncompleteTriple(String),
}

/// Canonical key order of the semantic taxonomy.
pub const FEATURE_KEYS: [&str; 13] = [
    "memory_access_pattern",
    "spatial_locality",
    "temporal_locality",
    "cache_behavior_pattern",
    "numa_sensitivity",
    "algorithmic_complexity",
    "dominant_operation",
    "vectorization_potential",
    "data_dependency_type",
    "false_sharing_risk",
    "load_balance_characteristic",
    "parallelization_overhead",
    "scalability_bottleneck",
];

/// Allowed categorical values per key, in encoding order (the integer
/// code of a value is its position in this slice).
pub fn allowed_values(key: &str) -> &'static [&'static str] {
    match key {
        "memory_access_pattern" => &["unit_stride", "non_unit_stride", "random", "mixed"],
        "spatial_locality" | "temporal_locality" | "numa_sensitivity"
        | "vectorization_potential" | "parallelization_overhead" => &["low", "medium", "high"],
        "cache_behavior_pattern" => &["streaming", "random", "blocked", "mixed"],
        "algorithmic_complexity" => &["O(n)", "O(n log n)", "O(n^2)", "O(n^3)", "other"],
        "dominant_operation" => &["arithmetic", "memory", "logic", "mixed"],
        "data_dependency_type" => &["none", "loop_carried", "cross_iteration", "complex"],
        // Four levels here, so "none" gets its own code below "low".
        "false_sharing_risk" => &["none", "low", "medium", "high"],
        "load_balance_characteristic" => &["uniform", "irregular", "dynamic"],
        "scalability_bottleneck" => &["none", "memory_bandwidth", "synchronization", "load_imbalance"],
        _ => &[],
    }
}

pub const UNKNOWN: &str = "unknown";
pub const UNKNOWN_CODE: i8 = -1;

/// One categorical value per taxonomy key; "unknown" is the per-key
/// sentinel. Extra keys are rejected when deserializing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticFeatureVector {
    pub memory_access_pattern: String,
    pub spatial_locality: String,
    pub temporal_locality: String,
    pub cache_behavior_pattern: String,
    pub numa_sensitivity: String,
    pub algorithmic_complexity: String,
    pub dominant_operation: String,
    pub vectorization_potential: String,
    pub data_dependency_type: String,
    pub false_sharing_risk: String,
    pub load_balance_characteristic: String,
    pub parallelization_overhead: String,
    pub scalability_bottleneck: String,
}

impl SemanticFeatureVector {
    /// All keys set to the unknown sentinel; the degraded-mode vector.
    pub fn all_unknown() -> Self {
        let mut map = BTreeMap::new();
        for k in FEATURE_KEYS {
            map.insert(k.to_string(), UNKNOWN.to_string());
        }
        Self::from_map(&map).expect("sentinel vector is schema-valid")
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        let v = match key {
            "memory_access_pattern" => &self.memory_access_pattern,
            "spatial_locality" => &self.spatial_locality,
            "temporal_locality" => &self.temporal_locality,
            "cache_behavior_pattern" => &self.cache_behavior_pattern,
            "numa_sensitivity" => &self.numa_sensitivity,
            "algorithmic_complexity" => &self.algorithmic_complexity,
            "dominant_operation" => &self.dominant_operation,
            "vectorization_potential" => &self.vectorization_potential,
            "data_dependency_type" => &self.data_dependency_type,
            "false_sharing_risk" => &self.false_sharing_risk,
            "load_balance_characteristic" => &self.load_balance_characteristic,
            "parallelization_overhead" => &self.parallelization_overhead,
            "scalability_bottleneck" => &self.scalability_bottleneck,
            _ => return None,
        };
        Some(v)
    }

    /// Sets one key to a validated categorical value (or "unknown").
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), FeatureError> {
        if !FEATURE_KEYS.contains(&key) {
            return Err(FeatureError::UnknownKey(key.to_string()));
        }
        if value != UNKNOWN && !allowed_values(key).contains(&value) {
            return Err(FeatureError::UnknownCategory {
                key: key.to_string(),
                value: value.to_string(),
            });
        }
        self.set_unchecked(key, value.to_string());
        Ok(())
    }

    fn set_unchecked(&mut self, key: &str, value: String) {
        match key {
            "memory_access_pattern" => self.memory_access_pattern = value,
            "spatial_locality" => self.spatial_locality = value,
            "temporal_locality" => self.temporal_locality = value,
            "cache_behavior_pattern" => self.cache_behavior_pattern = value,
            "numa_sensitivity" => self.numa_sensitivity = value,
            "algorithmic_complexity" => self.algorithmic_complexity = value,
            "dominant_operation" => self.dominant_operation = value,
            "vectorization_potential" => self.vectorization_potential = value,
            "data_dependency_type" => self.data_dependency_type = value,
            "false_sharing_risk" => self.false_sharing_risk = value,
            "load_balance_characteristic" => self.load_balance_characteristic = value,
            "parallelization_overhead" => self.parallelization_overhead = value,
            "scalability_bottleneck" => self.scalability_bottleneck = value,
            _ => {}
        }
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, FeatureError> {
        for k in map.keys() {
            if !FEATURE_KEYS.contains(&k.as_str()) {
                return Err(FeatureError::ParseFailure(format!("unexpected key '{k}'")));
            }
        }
        let mut out = SemanticFeatureVector {
            memory_access_pattern: String::new(),
            spatial_locality: String::new(),
            temporal_locality: String::new(),
            cache_behavior_pattern: String::new(),
            numa_sensitivity: String::new(),
            algorithmic_complexity: String::new(),
            dominant_operation: String::new(),
            vectorization_potential: String::new(),
            data_dependency_type: String::new(),
            false_sharing_risk: String::new(),
            load_balance_characteristic: String::new(),
            parallelization_overhead: String::new(),
            scalability_bottleneck: String::new(),
        };
        for k in FEATURE_KEYS {
            let v = map
                .get(k)
                .ok_or_else(|| FeatureError::ParseFailure(format!("missing key '{k}'")))?;
            out.set_unchecked(k, v.clone());
        }
        out.validate()?;
        Ok(out)
    }

    /// Every value must be in its allowed set or the unknown sentinel.
    pub fn validate(&self) -> Result<(), FeatureError> {
        for k in FEATURE_KEYS {
            let v = self.get(k).unwrap();
            if v != UNKNOWN && v != "-1" && !allowed_values(k).contains(&v) {
                return Err(FeatureError::UnknownCategory {
                    key: k.to_string(),
                    value: v.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Integer codes in `FEATURE_KEYS` order; -1 is the unknown sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedFeatures {
    pub codes: Vec<i8>,
}

/// Encodes each value as its position in the key's allowed set;
/// unknown (or the literal "-1") encodes as -1.
pub fn encode(vec: &SemanticFeatureVector) -> Result<EncodedFeatures, FeatureError> {
    let mut codes = Vec::with_capacity(13);
    for k in FEATURE_KEYS {
        let v = vec.get(k).unwrap();
        if v == UNKNOWN || v == "-1" {
            codes.push(UNKNOWN_CODE);
            continue;
        }
        let code = allowed_values(k)
            .iter()
            .position(|a| *a == v)
            .ok_or_else(|| FeatureError::UnknownCategory {
                key: k.to_string(),
                value: v.to_string(),
            })?;
        codes.push(code as i8);
    }
    Ok(EncodedFeatures { codes })
}

/// Inverse of `encode`; -1 decodes to the unknown sentinel.
pub fn decode(enc: &EncodedFeatures) -> Result<SemanticFeatureVector, FeatureError> {
    if enc.codes.len() != FEATURE_KEYS.len() {
        return Err(FeatureError::ParseFailure(format!(
            "expected 13 codes, got {}",
            enc.codes.len()
        )));
    }
    let mut map = BTreeMap::new();
    for (k, &c) in FEATURE_KEYS.iter().zip(&enc.codes) {
        let v = if c == UNKNOWN_CODE {
            UNKNOWN.to_string()
        } else {
            allowed_values(k)
                .get(c as usize)
                .ok_or_else(|| FeatureError::UnknownCategory {
                    key: k.to_string(),
                    value: c.to_string(),
                })?
                .to_string()
        };
        map.insert(k.to_string(), v);
    }
    SemanticFeatureVector::from_map(&map)
}

// ---------------------------------------------------------------------------
// Prompt emission

pub const PROMPT_MAX_CHARS: usize = 15_000;
pub const TRUNCATION_MARKER: &str = "\n/* ... SOURCE TRUNCATED AT 15000 CHARACTERS ... */";

/// Emits the zero-shot extraction prompt with both placeholders
/// substituted. Source beyond `max_chars` characters is cut and replaced
/// with an explicit marker. Output is byte-stable for fixed inputs.
pub fn emit_prompt(
    benchmark_name: &str,
    source_code: &str,
    max_chars: usize,
) -> Result<String, FeatureError> {
    if source_code.is_empty() {
        return Err(FeatureError::EmptySource);
    }
    let code: String = if source_code.chars().count() > max_chars {
        let kept: String = source_code.chars().take(max_chars).collect();
        format!("{kept}{TRUNCATION_MARKER}")
    } else {
        source_code.to_string()
    };
    let mut schema = String::new();
    for (i, k) in FEATURE_KEYS.iter().enumerate() {
        let choices = allowed_values(k).join("|");
        let comma = if i + 1 < FEATURE_KEYS.len() { "," } else { "" };
        schema.push_str(&format!("  \"{k}\": \"<{choices}>\"{comma}\n"));
    }
    Ok(format!(
        "Analyze this OpenMP C program ({benchmark_name}) and extract ONLY the following \
features as valid JSON.\n\n\
CRITICAL INSTRUCTIONS:\n\
- Your ENTIRE response must be ONLY a valid JSON object\n\
- DO NOT include any explanations, markdown, or text outside the JSON\n\
- DO NOT use backticks or code blocks\n\
- If a feature cannot be determined, use -1 or \"unknown\"\n\n\
Code to analyze:\n{code}\n\n\
Extract these features in JSON format with EXACTLY these keys:\n\
{{\n{schema}}}\n\n\
RESPOND WITH ONLY THE JSON OBJECT, NOTHING ELSE.\n"
    ))
}

// ---------------------------------------------------------------------------
// Extraction records, cache, and the live client

/// One extraction result: raw response plus the parsed vector (or the
/// degraded all-unknown vector when parsing/retries failed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub benchmark: String,
    pub model: String,
    #[serde(default)]
    pub raw_response: String,
    pub features: SemanticFeatureVector,
    pub latency_ms: f64,
    pub cost_usd: f64,
    #[serde(default)]
    pub timestamp: String,
    /// True when the semantic side failed and only syntactic features
    /// remain trustworthy.
    #[serde(default)]
    pub degraded: bool,
}

/// Parses a raw model response as strict JSON against the 13-key schema.
/// Markdown fences, prose, extra keys, or missing keys are parse failures
/// that name the offending content.
pub fn parse_response(text: &str) -> Result<SemanticFeatureVector, FeatureError> {
    let trimmed = text.trim();
    if trimmed.contains("```") {
        return Err(FeatureError::ParseFailure(
            "response contains a markdown fence".into(),
        ));
    }
    let value: serde_json::Value = serde_json::from_str(trimmed)
        .map_err(|e| FeatureError::ParseFailure(format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| FeatureError::ParseFailure("response is not a JSON object".into()))?;
    let mut map = BTreeMap::new();
    for (k, v) in obj {
        let s = match v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            other => {
                return Err(FeatureError::ParseFailure(format!(
                    "key '{k}' has non-scalar value {other}"
                )))
            }
        };
        map.insert(k.clone(), s);
    }
    SemanticFeatureVector::from_map(&map)
}

/// Offline cache of extraction records, loaded from a JSON-lines file
/// with one record per line.
#[derive(Debug, Clone, Default)]
pub struct FeatureCache {
    records: BTreeMap<(String, String), ExtractionRecord>,
}

impl FeatureCache {
    pub fn from_jsonl(text: &str) -> Result<Self, FeatureError> {
        let mut records = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ExtractionRecord = serde_json::from_str(line).map_err(|e| {
                FeatureError::ParseFailure(format!("cache line {}: {e}", i + 1))
            })?;
            rec.features.validate()?;
            records.insert((rec.benchmark.clone(), rec.model.clone()), rec);
        }
        Ok(FeatureCache { records })
    }

    pub fn get(&self, benchmark: &str, model: &str) -> Result<&ExtractionRecord, FeatureError> {
        self.records
            .get(&(benchmark.to_string(), model.to_string()))
            .ok_or_else(|| FeatureError::CacheMiss {
                benchmark: benchmark.to_string(),
                model: model.to_string(),
            })
    }

    pub fn benchmarks(&self) -> Vec<String> {
        let mut v: Vec<String> = self.records.keys().map(|(b, _)| b.clone()).collect();
        v.dedup();
        v
    }

    pub fn models(&self) -> Vec<String> {
        let mut v: Vec<String> = self.records.keys().map(|(_, m)| m.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Transport used by live extraction; tests supply scripted fakes, the
/// CLI wires an HTTP client configured from environment variables.
pub trait LlmEndpoint {
    fn request(&mut self, prompt: &str) -> Result<String, String>;
}

pub const RETRY_DELAYS: [Duration; 3] = [
    Duration::from_secs(1),
    Duration::from_secs(2),
    Duration::from_secs(4),
];

/// Live extraction with three-attempt exponential backoff. On exhaustion
/// or a final parse failure it degrades to an all-unknown semantic vector
/// instead of aborting; `sleep` is injected so tests run without delays.
pub fn extract_live(
    endpoint: &mut dyn LlmEndpoint,
    benchmark: &str,
    model: &str,
    prompt: &str,
    mut sleep: impl FnMut(Duration),
) -> ExtractionRecord {
    let mut last_err = String::new();
    for (attempt, delay) in RETRY_DELAYS.iter().enumerate() {
        match endpoint.request(prompt) {
            Ok(text) => match parse_response(&text) {
                Ok(features) => {
                    return ExtractionRecord {
                        benchmark: benchmark.to_string(),
                        model: model.to_string(),
                        raw_response: text,
                        features,
                        latency_ms: 0.0,
                        cost_usd: 0.0,
                        timestamp: String::new(),
                        degraded: false,
                    }
                }
                Err(e) => last_err = e.to_string(),
            },
            Err(e) => last_err = e,
        }
        if attempt + 1 < RETRY_DELAYS.len() {
            sleep(*delay);
        }
    }
    // Graceful degradation: syntactic-only record.
    ExtractionRecord {
        benchmark: benchmark.to_string(),
        model: model.to_string(),
        raw_response: format!("degraded after retries: {last_err}"),
        features: SemanticFeatureVector::all_unknown(),
        latency_ms: 0.0,
        cost_usd: 0.0,
        timestamp: String::new(),
        degraded: true,
    }
}

// ---------------------------------------------------------------------------
// Agreement analysis

/// Agreement rates for one feature across a benchmark set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAgreement {
    /// Match fraction for model pairs (a,b), (a,c), (b,c) in sorted
    /// model-name order.
    pub pairwise: [f64; 3],
    /// Fraction of benchmarks where all three models agree.
    pub unanimous: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub models: Vec<String>,
    pub n_benchmarks: usize,
    pub per_feature: BTreeMap<String, FeatureAgreement>,
    pub overall_unanimous: f64,
}

/// Computes pairwise and unanimous agreement per feature over all
/// benchmarks that have records from exactly three models.
pub fn agreement(cache: &FeatureCache) -> Result<AgreementReport, FeatureError> {
    let models = cache.models();
    if models.len() != 3 {
        return Err(FeatureError::IncompleteTriple(format!(
            "need exactly 3 models, found {}",
            models.len()
        )));
    }
    let benchmarks = cache.benchmarks();
    let mut triples = Vec::new();
    for b in &benchmarks {
        let recs: Result<Vec<&ExtractionRecord>, _> =
            models.iter().map(|m| cache.get(b, m)).collect();
        match recs {
            Ok(r) => triples.push((b.clone(), r)),
            Err(_) => return Err(FeatureError::IncompleteTriple(b.clone())),
        }
    }
    if triples.is_empty() {
        return Err(FeatureError::IncompleteTriple("no benchmarks".into()));
    }
    let n = triples.len() as f64;
    let mut per_feature = BTreeMap::new();
    let mut unanimous_sum = 0.0;
    for k in FEATURE_KEYS {
        let mut pair = [0.0f64; 3];
        let mut unam = 0.0;
        for (_, recs) in &triples {
            let vals: Vec<&str> = recs.iter().map(|r| r.features.get(k).unwrap()).collect();
            let pairs = [(0, 1), (0, 2), (1, 2)];
            for (pi, (a, b)) in pairs.iter().enumerate() {
                if vals[*a] == vals[*b] {
                    pair[pi] += 1.0;
                }
            }
            if vals[0] == vals[1] && vals[1] == vals[2] {
                unam += 1.0;
            }
        }
        let fa = FeatureAgreement {
            pairwise: [pair[0] / n, pair[1] / n, pair[2] / n],
            unanimous: unam / n,
        };
        unanimous_sum += fa.unanimous;
        per_feature.insert(k.to_string(), fa);
    }
    Ok(AgreementReport {
        models,
        n_benchmarks: triples.len(),
        overall_unanimous: unanimous_sum / FEATURE_KEYS.len() as f64,
        per_feature,
    })
}

// ---------------------------------------------------------------------------
// Cost accounting

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub n_benchmarks: usize,
    pub cost_per_benchmark_usd: f64,
    pub total_cost_usd: f64,
    pub mean_latency_s: f64,
    pub total_latency_s: f64,
    /// Profiling-time / extraction-time speedup; None when extraction
    /// time is zero.
    pub latency_speedup: Option<f64>,
    /// Profiling-cost / extraction-cost savings factor; None when
    /// extraction cost is zero.
    pub cost_savings_factor: Option<f64>,
}

/// Per-benchmark and total extraction cost/latency, with speedup and
/// savings factors against a profiling alternative.
pub fn extraction_cost(
    latencies_s: &[f64],
    cost_per_benchmark_usd: f64,
    n_benchmarks: usize,
    profiling_cost_usd: f64,
    profiling_time_s: f64,
) -> CostReport {
    let total_cost = cost_per_benchmark_usd * n_benchmarks as f64;
    let total_latency: f64 = latencies_s.iter().sum();
    let mean_latency = if latencies_s.is_empty() {
        0.0
    } else {
        total_latency / latencies_s.len() as f64
    };
    CostReport {
        n_benchmarks,
        cost_per_benchmark_usd,
        total_cost_usd: total_cost,
        mean_latency_s: mean_latency,
        total_latency_s: total_latency,
        latency_speedup: if total_latency > 0.0 {
            Some(profiling_time_s / total_latency)
        } else {
            None
        },
        cost_savings_factor: if total_cost > 0.0 {
            Some(profiling_cost_usd / total_cost)
        } else {
            None
        },
    }
}

// ---------------------------------------------------------------------------
// Syntactic counting

/// Seventeen lexical counters over an OpenMP C source. Counting rules are
/// token-based pattern matches, not a full C parse.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntacticFeatureVector {
    pub for_loop_count: u32,
    pub while_loop_count: u32,
    pub max_loop_nesting_depth: u32,
    pub function_count: u32,
    pub pragma_omp_count: u32,
    pub parallel_region_count: u32,
    pub parallel_for_count: u32,
    pub task_count: u32,
    pub taskwait_count: u32,
    pub critical_count: u32,
    pub atomic_count: u32,
    pub barrier_count: u32,
    pub single_count: u32,
    pub reduction_clause_count: u32,
    pub shared_var_count: u32,
    pub private_var_count: u32,
    pub firstprivate_var_count: u32,
}

fn is_ident(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Occurrences of `word` delimited by non-identifier characters.
fn count_word(src: &str, word: &str) -> u32 {
    let bytes = src.as_bytes();
    let mut count = 0;
    let mut start = 0;
    while let Some(pos) = src[start..].find(word) {
        let i = start + pos;
        let before_ok = i == 0 || !is_ident(src[..i].chars().last().unwrap());
        let after = i + word.len();
        let after_ok = after >= bytes.len() || !is_ident(src[after..].chars().next().unwrap());
        if before_ok && after_ok {
            count += 1;
        }
        start = i + word.len().max(1);
    }
    count
}

/// Total comma-separated variables inside every `clause(...)` list.
fn count_clause_vars(src: &str, clause: &str) -> u32 {
    let mut total = 0;
    let mut start = 0;
    while let Some(pos) = src[start..].find(clause) {
        let i = start + pos;
        let before_ok = i == 0 || !is_ident(src[..i].chars().last().unwrap());
        let rest = &src[i + clause.len()..];
        let after_paren = rest.trim_start();
        if before_ok && after_paren.starts_with('(') {
            if let Some(close) = after_paren.find(')') {
                let inner = &after_paren[1..close];
                total += inner.split(',').filter(|s| !s.trim().is_empty()).count() as u32;
            }
        }
        start = i + clause.len();
    }
    total
}

fn count_pragma(src: &str, directive: &str) -> u32 {
    src.lines()
        .filter(|l| {
            let l = l.trim_start();
            if !l.starts_with("#pragma") {
                return false;
            }
            let rest = l.trim_start_matches("#pragma").trim_start();
            if !rest.starts_with("omp") {
                return false;
            }
            let body = rest.trim_start_matches("omp").trim_start();
            if directive.is_empty() {
                return true;
            }
            body.starts_with(directive)
                && body[directive.len()..]
                    .chars()
                    .next()
                    .map_or(true, |c| !is_ident(c))
        })
        .count() as u32
}

/// Deterministic lexical counting over a source text; empty input yields
/// all zeros.
pub fn count_syntactic(source: &str) -> SyntacticFeatureVector {
    // Loop keywords are counted outside preprocessor lines so the `for`
    // inside `#pragma omp parallel for` is not mistaken for a loop.
    let code_only: String = source
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let mut v = SyntacticFeatureVector {
        for_loop_count: count_word(&code_only, "for"),
        while_loop_count: count_word(&code_only, "while"),
        pragma_omp_count: count_pragma(source, ""),
        parallel_region_count: count_pragma(source, "parallel"),
        parallel_for_count: count_pragma(source, "parallel for"),
        task_count: count_pragma(source, "task"),
        taskwait_count: count_pragma(source, "taskwait"),
        critical_count: count_pragma(source, "critical"),
        atomic_count: count_pragma(source, "atomic"),
        barrier_count: count_pragma(source, "barrier"),
        single_count: count_pragma(source, "single"),
        reduction_clause_count: {
            let mut n = 0;
            let mut start = 0;
            while let Some(pos) = source[start..].find("reduction") {
                let i = start + pos;
                if i == 0 || !is_ident(source[..i].chars().last().unwrap()) {
                    n += 1;
                }
                start = i + "reduction".len();
            }
            n
        },
        shared_var_count: count_clause_vars(source, "shared"),
        private_var_count: count_clause_vars(source, "private"),
        firstprivate_var_count: count_clause_vars(source, "firstprivate"),
        ..Default::default()
    };

    // Max loop nesting depth: a tiny brace scanner over the non-pragma
    // lines. A `for`/`while` token marks the next opened brace as a loop
    // scope.
    let mut depth = 0u32;
    let mut max_depth = 0u32;
    let mut pending_loop = false;
    let mut stack: Vec<bool> = Vec::new();
    let mut chars = code_only.chars().peekable();
    let mut word = String::new();
    while let Some(c) = chars.next() {
        if is_ident(c) {
            word.push(c);
            continue;
        }
        if word == "for" || word == "while" {
            pending_loop = true;
        }
        word.clear();
        match c {
            '{' => {
                stack.push(pending_loop);
                if pending_loop {
                    depth += 1;
                    max_depth = max_depth.max(depth);
                }
                pending_loop = false;
            }
            '}' => {
                if let Some(was_loop) = stack.pop() {
                    if was_loop {
                        depth = depth.saturating_sub(1);
                    }
                }
            }
            _ => {}
        }
    }
    v.max_loop_nesting_depth = max_depth;

    // Function definitions: a line containing `(`, ending in `{`, that is
    // not a control-flow statement or preprocessor line.
    v.function_count = source
        .lines()
        .filter(|l| {
            let l = l.trim();
            l.ends_with('{')
                && l.contains('(')
                && !l.starts_with('#')
                && !["for", "while", "if", "else", "switch", "do"]
                    .iter()
                    .any(|kw| l.starts_with(kw) && !is_ident(l.chars().nth(kw.len()).unwrap_or(' ')))
        })
        .count() as u32;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn valid_map() -> BTreeMap<String, String> {
        let vals = [
            ("memory_access_pattern", "unit_stride"),
            ("spatial_locality", "high"),
            ("temporal_locality", "medium"),
            ("cache_behavior_pattern", "blocked"),
            ("numa_sensitivity", "low"),
            ("algorithmic_complexity", "O(n^3)"),
            ("dominant_operation", "arithmetic"),
            ("vectorization_potential", "high"),
            ("data_dependency_type", "none"),
            ("false_sharing_risk", "low"),
            ("load_balance_characteristic", "uniform"),
            ("parallelization_overhead", "low"),
            ("scalability_bottleneck", "memory_bandwidth"),
        ];
        vals.iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn schema_closure_rejects_extra_and_missing_keys() {
        let mut m = valid_map();
        m.insert("bogus".into(), "x".into());
        assert!(matches!(
            SemanticFeatureVector::from_map(&m),
            Err(FeatureError::ParseFailure(s)) if s.contains("bogus")
        ));
        let mut m = valid_map();
        m.remove("numa_sensitivity");
        assert!(matches!(
            SemanticFeatureVector::from_map(&m),
            Err(FeatureError::ParseFailure(s)) if s.contains("numa_sensitivity")
        ));
    }

    #[test]
    fn encoding_worked_examples() {
        let mut m = valid_map();
        for k in [
            "spatial_locality",
            "temporal_locality",
            "numa_sensitivity",
            "vectorization_potential",
            "parallelization_overhead",
        ] {
            m.insert(k.to_string(), "low".into());
        }
        m.insert("scalability_bottleneck".into(), "none".into());
        m.insert("false_sharing_risk".into(), "none".into());
        m.insert("data_dependency_type".into(), "none".into());
        let v = SemanticFeatureVector::from_map(&m).unwrap();
        let e = encode(&v).unwrap();
        // Every ordinal low/none slot is zero.
        assert_eq!(e.codes[1], 0); // spatial low
        assert_eq!(e.codes[4], 0); // numa low
        assert_eq!(e.codes[9], 0); // false sharing none
        assert_eq!(e.codes[12], 0); // bottleneck none
        // O(n^3) encodes to 3 per the complexity table.
        assert_eq!(e.codes[5], 3);

        let mut m = valid_map();
        m.insert("memory_access_pattern".into(), "mixed".into());
        m.insert("algorithmic_complexity".into(), "other".into());
        m.insert("scalability_bottleneck".into(), "load_imbalance".into());
        let v = SemanticFeatureVector::from_map(&m).unwrap();
        let e = encode(&v).unwrap();
        assert_eq!(e.codes[0], 3);
        assert_eq!(e.codes[5], 4);
        assert_eq!(e.codes[12], 3);
    }

    #[test]
    fn encode_decode_round_trip_exhaustive() {
        for (i, k) in FEATURE_KEYS.iter().enumerate() {
            for val in allowed_values(k) {
                let mut m = valid_map();
                m.insert(k.to_string(), val.to_string());
                let v = SemanticFeatureVector::from_map(&m).unwrap();
                let e = encode(&v).unwrap();
                let back = decode(&e).unwrap();
                assert_eq!(back.get(k).unwrap(), *val);
                assert_eq!(back, v);
                assert!(e.codes[i] >= 0);
            }
        }
        // Unknown sentinel round-trips through -1.
        let mut m = valid_map();
        m.insert("dominant_operation".into(), UNKNOWN.into());
        let v = SemanticFeatureVector::from_map(&m).unwrap();
        let e = encode(&v).unwrap();
        assert_eq!(e.codes[6], -1);
        assert_eq!(decode(&e).unwrap().dominant_operation, UNKNOWN);
    }

    #[test]
    fn unknown_category_rejected() {
        let mut m = valid_map();
        m.insert("spatial_locality".into(), "enormous".into());
        assert!(matches!(
            SemanticFeatureVector::from_map(&m),
            Err(FeatureError::UnknownCategory { key, .. }) if key == "spatial_locality"
        ));
    }

    #[test]
    fn prompt_truncation_and_schema() {
        let short = emit_prompt("bench", "int main(){}", PROMPT_MAX_CHARS).unwrap();
        assert!(!short.contains("TRUNCATED"));
        let long_src = "@".repeat(20_000);
        let long = emit_prompt("bench", &long_src, PROMPT_MAX_CHARS).unwrap();
        assert!(long.contains(TRUNCATION_MARKER));
        let kept: usize = long.matches('@').count();
        assert_eq!(kept, PROMPT_MAX_CHARS);
        for k in FEATURE_KEYS {
            assert!(long.contains(k), "prompt missing key {k}");
        }
        assert!(long.contains("RESPOND WITH ONLY THE JSON OBJECT"));
        assert_eq!(emit_prompt("b", "", PROMPT_MAX_CHARS), Err(FeatureError::EmptySource));
        // Purity: identical output across calls.
        assert_eq!(long, emit_prompt("bench", &long_src, PROMPT_MAX_CHARS).unwrap());
    }

    #[test]
    fn parse_rejects_markdown_fence() {
        let fenced = format!(
            "```json\n{}\n```",
            serde_json::to_string(&SemanticFeatureVector::from_map(&valid_map()).unwrap()).unwrap()
        );
        assert!(matches!(
            parse_response(&fenced),
            Err(FeatureError::ParseFailure(s)) if s.contains("fence")
        ));
    }

    #[test]
    fn parse_names_missing_key() {
        let mut m = valid_map();
        m.remove("cache_behavior_pattern");
        let json = serde_json::to_string(&m).unwrap();
        assert!(matches!(
            parse_response(&json),
            Err(FeatureError::ParseFailure(s)) if s.contains("cache_behavior_pattern")
        ));
    }

    #[test]
    fn parse_accepts_numeric_unknown_sentinel() {
        let mut m = valid_map();
        m.insert("numa_sensitivity".into(), "-1".into());
        let mut json_map = serde_json::Map::new();
        for (k, v) in &m {
            if v == "-1" {
                json_map.insert(k.clone(), serde_json::json!(-1));
            } else {
                json_map.insert(k.clone(), serde_json::json!(v));
            }
        }
        let v = parse_response(&serde_json::Value::Object(json_map).to_string()).unwrap();
        assert_eq!(encode(&v).unwrap().codes[4], -1);
    }

    struct ScriptedEndpoint {
        responses: Vec<Result<String, String>>,
        calls: usize,
    }

    impl LlmEndpoint for ScriptedEndpoint {
        fn request(&mut self, _prompt: &str) -> Result<String, String> {
            let r = self.responses[self.calls.min(self.responses.len() - 1)].clone();
            self.calls += 1;
            r
        }
    }

    #[test]
    fn live_extraction_retries_then_succeeds() {
        let good = serde_json::to_string(&SemanticFeatureVector::from_map(&valid_map()).unwrap())
            .unwrap();
        let mut ep = ScriptedEndpoint {
            responses: vec![Err("timeout".into()), Ok(good)],
            calls: 0,
        };
        let mut slept = Vec::new();
        let rec = extract_live(&mut ep, "b", "model_a", "p", |d| slept.push(d));
        assert!(!rec.degraded);
        assert_eq!(ep.calls, 2);
        assert_eq!(slept, vec![Duration::from_secs(1)]);
    }

    #[test]
    fn live_extraction_degrades_after_exhaustion() {
        let mut ep = ScriptedEndpoint {
            responses: vec![Err("down".into())],
            calls: 0,
        };
        let mut slept = Vec::new();
        let rec = extract_live(&mut ep, "b", "model_a", "p", |d| slept.push(d));
        assert!(rec.degraded);
        assert_eq!(rec.features, SemanticFeatureVector::all_unknown());
        assert_eq!(ep.calls, 3);
        assert_eq!(slept, vec![Duration::from_secs(1), Duration::from_secs(2)]);
    }

    fn cache_from(rows: &[(&str, &str, BTreeMap<String, String>)]) -> FeatureCache {
        let mut text = String::new();
        for (b, m, map) in rows {
            let rec = ExtractionRecord {
                benchmark: b.to_string(),
                model: m.to_string(),
                raw_response: String::new(),
                features: SemanticFeatureVector::from_map(map).unwrap(),
                latency_ms: 1000.0,
                cost_usd: 0.0015,
                timestamp: "2026-01-01T00:00:00Z".into(),
                degraded: false,
            };
            text.push_str(&serde_json::to_string(&rec).unwrap());
            text.push('\n');
        }
        FeatureCache::from_jsonl(&text).unwrap()
    }

    #[test]
    fn agreement_identical_vectors_is_one() {
        let m = valid_map();
        let cache = cache_from(&[
            ("b1", "model_a", m.clone()),
            ("b1", "model_b", m.clone()),
            ("b1", "model_c", m),
        ]);
        let rep = agreement(&cache).unwrap();
        for fa in rep.per_feature.values() {
            assert_eq!(fa.pairwise, [1.0, 1.0, 1.0]);
            assert_eq!(fa.unanimous, 1.0);
        }
        assert_eq!(rep.overall_unanimous, 1.0);
    }

    #[test]
    fn agreement_matches_hand_computation() {
        // 4 benchmarks; disagreements only on spatial_locality:
        //   b1: a=high b=high c=high  (all agree)
        //   b2: a=high b=low  c=high  (a-c agree)
        //   b3: a=low  b=low  c=high  (a-b agree)
        //   b4: a=low  b=med  c=high  (none agree)
        let mk = |v: &str| {
            let mut m = valid_map();
            m.insert("spatial_locality".into(), v.into());
            m
        };
        let rows = vec![
            ("b1", "model_a", mk("high")),
            ("b1", "model_b", mk("high")),
            ("b1", "model_c", mk("high")),
            ("b2", "model_a", mk("high")),
            ("b2", "model_b", mk("low")),
            ("b2", "model_c", mk("high")),
            ("b3", "model_a", mk("low")),
            ("b3", "model_b", mk("low")),
            ("b3", "model_c", mk("high")),
            ("b4", "model_a", mk("low")),
            ("b4", "model_b", mk("medium")),
            ("b4", "model_c", mk("high")),
        ];
        let cache = cache_from(&rows);
        let rep = agreement(&cache).unwrap();
        let fa = &rep.per_feature["spatial_locality"];
        // pairs in sorted model order: (a,b), (a,c), (b,c)
        assert_eq!(fa.pairwise, [0.5, 0.5, 0.25]);
        assert_eq!(fa.unanimous, 0.25);
        // Unanimous never exceeds any pairwise rate, for any feature.
        for fa in rep.per_feature.values() {
            for p in fa.pairwise {
                assert!(fa.unanimous <= p + 1e-12);
            }
        }
    }

    #[test]
    fn incomplete_triple_rejected() {
        let m = valid_map();
        let cache = cache_from(&[("b1", "model_a", m.clone()), ("b1", "model_b", m)]);
        assert!(matches!(
            agreement(&cache),
            Err(FeatureError::IncompleteTriple(_))
        ));
    }

    #[test]
    fn cost_worked_examples() {
        let r = extraction_cost(&[3.07; 42], 0.0015, 42, 0.0, 0.0);
        assert!((r.total_cost_usd - 0.063).abs() < 1e-12);
        // 1,000 benchmarks: $50/h * 8h * 1000 = $400,000 profiling vs
        // $18 extraction -> savings factor 22,222.2...
        let r = extraction_cost(&[3.0; 1000], 0.018, 1000, 400_000.0, 8.0 * 3600.0 * 1000.0);
        let factor = r.cost_savings_factor.unwrap();
        assert!((factor - 400_000.0 / 18.0).abs() < 1e-9);
        assert!((factor - 22_222.22).abs() < 1.0);
        // Zero benchmarks: zero cost, undefined factors.
        let r = extraction_cost(&[], 0.0015, 0, 1.0, 1.0);
        assert_eq!(r.total_cost_usd, 0.0);
        assert!(r.latency_speedup.is_none());
        assert!(r.cost_savings_factor.is_none());
    }

    #[test]
    fn syntactic_counts_on_fixture() {
        assert_eq!(count_syntactic(""), SyntacticFeatureVector::default());
        let src = r#"
#include <omp.h>
int sum(int *a, int n) {
    int s = 0;
#pragma omp parallel for reduction(+:s) shared(a, n) private(i)
    for (int i = 0; i < n; i++) {
        s += a[i];
    }
    return s;
}
void nest(int n) {
#pragma omp parallel
    {
#pragma omp single
        for (int i = 0; i < n; i++) {
            for (int j = 0; j < n; j++) {
                while (j > 0) {
                    j--;
                }
            }
        }
    }
#pragma omp critical
#pragma omp atomic
#pragma omp barrier
#pragma omp task firstprivate(n)
#pragma omp taskwait
}
"#;
        let v = count_syntactic(src);
        assert_eq!(v.for_loop_count, 3);
        assert_eq!(v.while_loop_count, 1);
        assert_eq!(v.max_loop_nesting_depth, 3);
        assert_eq!(v.pragma_omp_count, 8);
        assert_eq!(v.parallel_region_count, 2);
        assert_eq!(v.parallel_for_count, 1);
        assert_eq!(v.task_count, 1);
        assert_eq!(v.taskwait_count, 1);
        assert_eq!(v.critical_count, 1);
        assert_eq!(v.atomic_count, 1);
        assert_eq!(v.barrier_count, 1);
        assert_eq!(v.single_count, 1);
        assert_eq!(v.reduction_clause_count, 1);
        assert_eq!(v.shared_var_count, 2);
        assert_eq!(v.private_var_count, 1);
        assert_eq!(v.firstprivate_var_count, 1);
        assert_eq!(v.function_count, 2);
    }

    #[test]
    fn three_parallel_pragmas_counted() {
        let src = "#pragma omp parallel\n{}\n#pragma omp parallel\n{}\n#pragma omp parallel\n{}\n";
        assert_eq!(count_syntactic(src).parallel_region_count, 3);
    }
}
