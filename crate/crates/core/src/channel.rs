//! Packet erasure channel and the idealized code abstraction.
//!
//! Every period of a [`DeliveryPlan`] sends its packet budget; receiver `k`
//! loses each packet independently with probability `delta_k`. A payload of
//! `b` bits is decodable from `c` surviving `F`-bit packets iff `c F >= b`,
//! and a joint block needs `c F >= b_w + b_s` at its strong receiver.
//!
//! Randomness comes from ChaCha8 keyed by the user seed, with a separate
//! stream per purpose so library bits, channel draws and random demands never
//! share a sequence.

use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{build_plan, decode, place, CodecError, DeliveryPlan, Payload, ReceptionFlags};
use crate::model::{DemandVector, SchemeIndex, SystemConfig};

/// Identifies the bit generator and seeding convention recorded in reports.
pub const GENERATOR_ID: &str = "chacha8/rand_chacha-0.9/seed_from_u64/streams:library=0,channel=2t+1,demand=2t+2";

pub(crate) const LIBRARY_STREAM: u64 = 0;

fn channel_stream(trial: u64) -> u64 {
    2 * trial + 1
}

fn demand_stream(trial: u64) -> u64 {
    2 * trial + 2
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Surviving packet counts for one use of the block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChannelRealization {
    pub seed: u64,
    pub trial: u64,
    /// `counts[k - 1][pos]`: packets of period `pos` received by receiver `k`.
    pub counts: Vec<Vec<u64>>,
}

impl ChannelRealization {
    pub fn count(&self, k: usize, pos: usize) -> u64 {
        self.counts[k - 1][pos]
    }

    /// Every packet of every period arrives.
    pub fn lossless(cfg: &SystemConfig, plan: &DeliveryPlan) -> Self {
        let row: Vec<u64> = plan.messages.iter().map(|m| m.packets).collect();
        Self {
            seed: 0,
            trial: 0,
            counts: vec![row; cfg.num_receivers()],
        }
    }
}

/// Draws each packet of each period independently per receiver.
pub fn realize(cfg: &SystemConfig, plan: &DeliveryPlan, seed: u64, trial: u64) -> ChannelRealization {
    let mut rng = stream_rng(seed, channel_stream(trial));
    let counts = (1..=cfg.num_receivers())
        .map(|k| {
            let arrive = Bernoulli::new(1.0 - cfg.erasure(k)).expect("erasure is a probability");
            plan.messages
                .iter()
                .map(|m| (0..m.packets).filter(|_| arrive.sample(&mut rng)).count() as u64)
                .collect()
        })
        .collect();
    ChannelRealization {
        seed,
        trial,
        counts,
    }
}

/// Applies the idealized decoding rule to every receiver and period. A
/// receiver is only credited with periods addressed to it.
pub fn decode_flags(cfg: &SystemConfig, plan: &DeliveryPlan, real: &ChannelRealization) -> ReceptionFlags {
    let f = u64::from(cfg.packet_bits());
    let rows = (1..=cfg.num_receivers())
        .map(|k| {
            plan.messages
                .iter()
                .enumerate()
                .map(|(pos, m)| {
                    let capacity = real.count(k, pos) * f;
                    let weak = m.payload.weak_bits() as u64;
                    let strong = m.payload.strong_bits() as u64;
                    match &m.payload {
                        Payload::WeakMulticast { .. } => m.subset.contains(k) && capacity >= weak,
                        Payload::JointBlock {
                            strong_receiver, ..
                        } => {
                            if cfg.is_weak(k) {
                                m.subset.contains(k) && capacity >= weak
                            } else {
                                *strong_receiver == k && capacity >= weak + strong
                            }
                        }
                        Payload::StrongUnicast { receiver, .. } => {
                            *receiver == k && capacity >= strong
                        }
                    }
                })
                .collect()
        })
        .collect();
    ReceptionFlags::from_rows(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandPolicy {
    /// All-distinct and all-equal demands, every trial on both.
    WorstCaseScan,
    /// A fresh uniform demand vector per trial.
    UniformRandom,
}

/// Outcome for one demand pattern.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternReport {
    pub pattern: String,
    /// Fixed demand vector; absent for per-trial random demands.
    pub demands: Option<Vec<usize>>,
    pub failed_trials: u64,
    pub per_receiver_failures: Vec<u64>,
    pub p_e: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub config: SystemConfig,
    pub idx: SchemeIndex,
    #[serde(rename = "R")]
    pub rate: f64,
    pub n: u64,
    pub trials: u64,
    /// Failures per receiver summed over every pattern.
    pub per_receiver_failures: Vec<u64>,
    /// Worst pattern's fraction of trials with any receiver failing; `None`
    /// when no trial ran.
    pub p_e: Option<f64>,
    pub seed: u64,
    pub generator_id: String,
    pub demand_policy: DemandPolicy,
    pub patterns: Vec<PatternReport>,
}

fn summarize(pattern: &str, demands: Option<Vec<usize>>, outcomes: &[Vec<bool>], k: usize) -> PatternReport {
    let mut per_receiver_failures = vec![0u64; k];
    let mut failed_trials = 0;
    for failures in outcomes {
        for (slot, &failed) in per_receiver_failures.iter_mut().zip(failures) {
            *slot += u64::from(failed);
        }
        failed_trials += u64::from(failures.iter().any(|&f| f));
    }
    let trials = outcomes.len();
    PatternReport {
        pattern: pattern.to_string(),
        demands,
        failed_trials,
        per_receiver_failures,
        p_e: (trials > 0).then(|| failed_trials as f64 / trials as f64),
    }
}

/// Places once, then per trial sends the plan through a fresh channel
/// realization and decodes bit-exactly. Trials run in parallel; results are
/// aggregated in trial order.
pub fn run_trials(
    cfg: &SystemConfig,
    idx: SchemeIndex,
    rate: f64,
    n: u64,
    trials: u64,
    policy: DemandPolicy,
    seed: u64,
) -> Result<SimulationReport, ChannelError> {
    let (lib, caches) = place(cfg, idx, seed, n, rate)?;
    let k = cfg.num_receivers();

    let trial_failures = |plan: &DeliveryPlan, t: u64| -> Vec<bool> {
        let real = realize(cfg, plan, seed, t);
        let flags = decode_flags(cfg, plan, &real);
        decode(cfg, &lib, &caches, plan, &flags)
            .receivers
            .iter()
            .map(|r| !r.success)
            .collect()
    };

    let patterns = match policy {
        DemandPolicy::WorstCaseScan => {
            let fixed = [
                ("all_distinct", DemandVector::all_distinct(cfg)),
                ("all_equal", DemandVector::all_equal(cfg)),
            ];
            let mut out = Vec::with_capacity(fixed.len());
            for (name, demands) in fixed {
                let plan = build_plan(cfg, &lib, &demands)?;
                let outcomes: Vec<Vec<bool>> = (0..trials)
                    .into_par_iter()
                    .map(|t| trial_failures(&plan, t))
                    .collect();
                out.push(summarize(name, Some(demands.as_slice().to_vec()), &outcomes, k));
            }
            out
        }
        DemandPolicy::UniformRandom => {
            // infeasible allocations do not depend on demands, so surface them up front
            build_plan(cfg, &lib, &DemandVector::all_distinct(cfg))?;
            let outcomes: Vec<Vec<bool>> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = stream_rng(seed, demand_stream(t));
                    let raw = (0..k).map(|_| rng.random_range(1..=cfg.num_files())).collect();
                    let demands = DemandVector::new(cfg, raw).expect("demands drawn in range");
                    let plan = build_plan(cfg, &lib, &demands).expect("allocation checked above");
                    trial_failures(&plan, t)
                })
                .collect();
            vec![summarize("uniform_random", None, &outcomes, k)]
        }
    };

    let mut per_receiver_failures = vec![0u64; k];
    for p in &patterns {
        for (slot, f) in per_receiver_failures.iter_mut().zip(&p.per_receiver_failures) {
            *slot += f;
        }
    }
    let p_e = patterns
        .iter()
        .filter_map(|p| p.p_e)
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));

    Ok(SimulationReport {
        config: cfg.clone(),
        idx,
        rate,
        n,
        trials,
        per_receiver_failures,
        p_e,
        seed,
        generator_id: GENERATOR_ID.to_string(),
        demand_policy: policy,
        patterns,
    })
}
