//! Cross-platform observation normalization, accuracy metrics, and the
//! zero-/n-shot transfer harness between two simulated platforms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envmodel::{FcnRegressor, ModelError, RegressorConfig};
use crate::hier::HierAction;
use crate::net::seeded_rng;
use crate::platform::{execute, PlatformSpec, SimState, WorkloadSpec};

#[derive(Debug, Error, PartialEq)]
pub enum TransferError {
    #[error("degenerate range for {0}")]
    DegenerateRange(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("actual value is zero at index {0}; MAPE undefined")]
    ZeroActual(usize),
    #[error("not enough target data: have {have}, need {need}")]
    InsufficientTargetData { have: usize, need: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Platform-specific ranges that map raw observations onto the shared
/// unit space used for transfer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformNormalizer {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub t_ambient_c: f64,
    pub t_throttle_c: f64,
    pub p_tdp_w: f64,
    pub core_total: usize,
}

/// Raw per-decision observation on one platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawObs {
    pub freq_hz: f64,
    pub temp_c: f64,
    pub power_w: f64,
    pub cores: usize,
}

/// Unit-space observation: frequency, thermal headroom, power, and core
/// fraction, each nominally in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitObs {
    pub f_norm: f64,
    /// (t_throttle - temp) / (t_throttle - t_ambient): 1 at ambient,
    /// 0 at the throttle point.
    pub t_headroom: f64,
    pub p_norm: f64,
    pub cores_norm: f64,
}

impl PlatformNormalizer {
    pub fn from_spec(spec: &PlatformSpec, p_tdp_w: f64) -> Self {
        PlatformNormalizer {
            f_min_hz: spec.freq_table[0],
            f_max_hz: spec.f_max(),
            t_ambient_c: spec.thermal_ambient_c,
            t_throttle_c: spec.throttle_temp_c,
            p_tdp_w,
            core_total: spec.core_count,
        }
    }

    pub fn validate(&self) -> Result<(), TransferError> {
        if self.f_max_hz <= self.f_min_hz {
            return Err(TransferError::DegenerateRange("frequency".into()));
        }
        if self.t_throttle_c <= self.t_ambient_c {
            return Err(TransferError::DegenerateRange("temperature".into()));
        }
        if self.p_tdp_w <= 0.0 {
            return Err(TransferError::DegenerateRange("power".into()));
        }
        if self.core_total == 0 {
            return Err(TransferError::DegenerateRange("cores".into()));
        }
        Ok(())
    }

    pub fn normalize(&self, raw: &RawObs) -> Result<UnitObs, TransferError> {
        self.validate()?;
        Ok(UnitObs {
            f_norm: (raw.freq_hz - self.f_min_hz) / (self.f_max_hz - self.f_min_hz),
            t_headroom: (self.t_throttle_c - raw.temp_c) / (self.t_throttle_c - self.t_ambient_c),
            p_norm: raw.power_w / self.p_tdp_w,
            cores_norm: raw.cores as f64 / self.core_total as f64,
        })
    }

    pub fn denormalize(&self, unit: &UnitObs) -> Result<RawObs, TransferError> {
        self.validate()?;
        Ok(RawObs {
            freq_hz: unit.f_norm * (self.f_max_hz - self.f_min_hz) + self.f_min_hz,
            temp_c: self.t_throttle_c - unit.t_headroom * (self.t_throttle_c - self.t_ambient_c),
            power_w: unit.p_norm * self.p_tdp_w,
            cores: (unit.cores_norm * self.core_total as f64).round() as usize,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mape_percent: f64,
    pub r2: f64,
    pub spearman_rho: f64,
}

/// Tie-averaged ranks (the standard midrank convention).
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    // Single sqrt keeps the result exactly 1.0 when a and b are already
    // identical (e.g. equal rank vectors).
    cov / (va * vb).sqrt()
}

/// MAPE (percent), R-squared, and Spearman rank correlation.
pub fn metrics(pred: &[f64], actual: &[f64]) -> Result<Metrics, TransferError> {
    if pred.len() != actual.len() {
        return Err(TransferError::LengthMismatch(pred.len(), actual.len()));
    }
    if pred.is_empty() {
        return Err(TransferError::LengthMismatch(0, 0));
    }
    for (i, a) in actual.iter().enumerate() {
        if *a == 0.0 {
            return Err(TransferError::ZeroActual(i));
        }
    }
    let n = actual.len() as f64;
    let mape = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| ((p - a) / a).abs())
        .sum::<f64>()
        / n
        * 100.0;
    let mean = actual.iter().sum::<f64>() / n;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    let ss_res: f64 = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (a - p) * (a - p))
        .sum();
    let r2 = if ss_tot == 0.0 { 0.0 } else { 1.0 - ss_res / ss_tot };
    let spearman = pearson(&ranks(pred), &ranks(actual));
    Ok(Metrics {
        mape_percent: mape,
        r2,
        spearman_rho: spearman,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub shots: usize,
    pub mape: f64,
    pub r2: f64,
    pub spearman_rho: f64,
}

/// One logged (normalized observation, makespan) pair used as transfer
/// training/evaluation data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferSample {
    pub x: Vec<f64>,
    pub makespan_s: f64,
    pub freq_index: usize,
}

/// Generates a normalized transition dataset on one platform: every
/// (core count, frequency) cell, `reps` repetitions each.
pub fn collect_samples(
    spec: &PlatformSpec,
    wl: &WorkloadSpec,
    reps: usize,
    seed: u64,
) -> Vec<TransferSample> {
    let norm = PlatformNormalizer::from_spec(
        spec,
        spec.power_static_w + spec.core_count as f64 * spec.power_dyn_coeff,
    );
    let mut out = Vec::new();
    for cores in 1..=spec.core_count {
        for fi in 0..spec.n_freqs() {
            for rep in 0..reps {
                let action = HierAction {
                    core_count: cores,
                    freq_index: fi,
                    priority: (0..spec.core_count).collect(),
                };
                let st = SimState::initial(spec);
                let s = seed
                    .wrapping_mul(97)
                    .wrapping_add((cores * 10_000 + fi * 100 + rep) as u64);
                let outcome = execute(spec, wl, &action, &st, s).expect("valid sweep action");
                let u = norm
                    .normalize(&RawObs {
                        freq_hz: spec.freq_table[fi],
                        temp_c: outcome.peak_temp_c,
                        power_w: outcome.end_state.last_power_w,
                        cores,
                    })
                    .expect("valid normalizer");
                out.push(TransferSample {
                    x: vec![u.f_norm, u.t_headroom, u.p_norm, u.cores_norm],
                    makespan_s: outcome.makespan_s,
                    freq_index: fi,
                });
            }
        }
    }
    out
}

/// 20% held-out split stratified by frequency index; returns
/// (train, held_out).
pub fn stratified_split(
    samples: &[TransferSample],
    seed: u64,
) -> (Vec<TransferSample>, Vec<TransferSample>) {
    let mut rng = seeded_rng(seed);
    let max_fi = samples.iter().map(|s| s.freq_index).max().unwrap_or(0);
    let mut train = Vec::new();
    let mut held = Vec::new();
    for fi in 0..=max_fi {
        let mut group: Vec<&TransferSample> =
            samples.iter().filter(|s| s.freq_index == fi).collect();
        for i in (1..group.len()).rev() {
            let j = rand::Rng::gen_range(&mut rng, 0..=i);
            group.swap(i, j);
        }
        let n_held = (group.len() as f64 * 0.2).round() as usize;
        for (i, s) in group.into_iter().enumerate() {
            if i < n_held {
                held.push(s.clone());
            } else {
                train.push(s.clone());
            }
        }
    }
    (train, held)
}

/// Trains a makespan regressor on normalized source-platform samples.
pub fn train_source_model(
    samples: &[TransferSample],
    seed: u64,
) -> Result<FcnRegressor, TransferError> {
    let mut cfg = RegressorConfig::new(4, 24, 1, seed);
    cfg.learning_rate = 0.02;
    cfg.epochs = 400;
    let mut model = FcnRegressor::new(cfg)?;
    let xs: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
    let ys: Vec<Vec<f64>> = samples.iter().map(|s| vec![s.makespan_s]).collect();
    model.fit(&xs, &ys)?;
    Ok(model)
}

fn eval_model(model: &FcnRegressor, held: &[TransferSample]) -> Result<Metrics, TransferError> {
    let pred: Vec<f64> = held
        .iter()
        .map(|s| model.predict(&s.x).map(|v| v[0]))
        .collect::<Result<_, _>>()?;
    let actual: Vec<f64> = held.iter().map(|s| s.makespan_s).collect();
    Ok(metrics(&pred, &actual)?)
}

/// Zero-/n-shot transfer: evaluates the source-trained model on the
/// target platform's held-out set, optionally after fine-tuning on
/// `shots` target samples. Fine-tuning retrains from the source model's
/// weights on the union of source data and the n target shots.
pub fn nshot_transfer(
    source_model: &FcnRegressor,
    source_train: &[TransferSample],
    target_samples: &[TransferSample],
    shots: usize,
    seed: u64,
) -> Result<TransferReport, TransferError> {
    let (target_train, target_held) = stratified_split(target_samples, seed);
    if target_train.len() < shots {
        return Err(TransferError::InsufficientTargetData {
            have: target_train.len(),
            need: shots,
        });
    }
    if target_held.is_empty() {
        return Err(TransferError::InsufficientTargetData { have: 0, need: 1 });
    }
    let m = if shots == 0 {
        eval_model(source_model, &target_held)?
    } else {
        let mut tuned = source_model.clone();
        let mut xs: Vec<Vec<f64>> = source_train.iter().map(|s| s.x.clone()).collect();
        let mut ys: Vec<Vec<f64>> = source_train.iter().map(|s| vec![s.makespan_s]).collect();
        for s in target_train.iter().take(shots) {
            xs.push(s.x.clone());
            ys.push(vec![s.makespan_s]);
        }
        tuned.fit(&xs, &ys)?;
        eval_model(&tuned, &target_held)?
    };
    Ok(TransferReport {
        shots,
        mape: m.mape_percent,
        r2: m.r2,
        spearman_rho: m.spearman_rho,
    })
}
