//! Closed-form analysis of the SCC scheme.
//!
//! For a scheme index `(p, q)` every file is split into subfiles at levels
//! `p..=q`. The proportioning coefficients `gamma(p, i)` fix how the file
//! rate is divided among those levels, and from them follow the achievable
//! `(M, R)` pair, the per-level rate split and the time-division allocation
//! of the delivery phase. Memory-sharing between pairs gives the upper
//! concave [`Envelope`]; [`UpperBound`] is the converse it is compared with.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combinatorics::{binom_f, subsets, Subset};
use crate::model::{ConfigError, HomogeneousConfig, MemoryRatePair, SchemeIndex, SystemConfig};

/// Largest receiver count accepted by the exhaustive upper-bound search.
pub const MAX_BOUND_RECEIVERS: usize = 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("level {level} is outside {p}..={num_weak}")]
    InvalidIndex { p: usize, level: usize, num_weak: usize },
    #[error("levels above p need strong receivers, but K_s = 0")]
    NoStrongReceivers,
    #[error(
        "proportioning factor {value} at level {level} is not positive: strong receivers are not strictly better than weak receiver {receiver}"
    )]
    NegativeFactor { level: usize, receiver: usize, value: f64 },
    #[error("rate is unbounded: every receiver caches the whole library")]
    UnboundedRate,
    #[error("exhaustive bound over 2^{receivers} subsets exceeds the limit of 2^{MAX_BOUND_RECEIVERS}")]
    IntractableSize { receivers: usize },
    #[error("the STW baseline is only defined for homogeneous networks")]
    StwUndefined,
    #[error("negative rate {0}")]
    NegativeRate(f64),
    #[error("negative memory {0}")]
    NegativeMemory(f64),
}

/// `K_s / ((1 - delta_{K_w - j}) * sum_strong 1/(1 - delta)) - 1`, the factor
/// linking `gamma(p, j)` to `gamma(p, j + 1)`.
fn level_factor(cfg: &SystemConfig, j: usize) -> Result<f64, RateError> {
    let ks = cfg.num_strong();
    if ks == 0 {
        return Err(RateError::NoStrongReceivers);
    }
    let receiver = cfg.num_weak() - j;
    let value = ks as f64 / ((1.0 - cfg.erasure(receiver)) * cfg.strong_inverse_sum()) - 1.0;
    if value > 0.0 {
        Ok(value)
    } else {
        Err(RateError::NegativeFactor {
            level: j,
            receiver,
            value,
        })
    }
}

/// Proportioning coefficient `gamma(p, delta, i)`.
pub fn gamma(cfg: &SystemConfig, p: usize, i: usize) -> Result<f64, RateError> {
    let kw = cfg.num_weak();
    if p > kw || i < p || i > kw {
        return Err(RateError::InvalidIndex {
            p,
            level: i,
            num_weak: kw,
        });
    }
    if i == p {
        return Ok(1.0);
    }
    let ks = cfg.num_strong() as f64;
    let mut g = binom_f(kw, i) / (binom_f(kw, p) * ks.powi((i - p) as i32));
    for j in p..i {
        g *= level_factor(cfg, j)?;
    }
    Ok(g)
}

/// `gamma(p, i)` for every level `i` of a scheme index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaCoefficients {
    pub p: usize,
    pub values: Vec<f64>,
}

impl GammaCoefficients {
    /// Coefficient of level `i`.
    pub fn get(&self, i: usize) -> f64 {
        self.values[i - self.p]
    }

    pub fn levels(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(|(n, &g)| (self.p + n, g))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `sum_i i * gamma(p, i)`.
    pub fn weighted_sum(&self) -> f64 {
        self.levels().map(|(i, g)| i as f64 * g).sum()
    }
}

pub fn gammas(cfg: &SystemConfig, idx: SchemeIndex) -> Result<GammaCoefficients, RateError> {
    idx.check(cfg)?;
    // builds each entry from the previous one through the same factors gamma() uses
    let mut values = Vec::with_capacity(idx.q() - idx.p() + 1);
    for i in idx.levels() {
        values.push(gamma(cfg, idx.p(), i)?);
    }
    Ok(GammaCoefficients {
        p: idx.p(),
        values,
    })
}

/// Channel cost of level `i` for the weak receivers, per unit of subfile rate:
/// `binom(K_w, i)^-1 * sum_{j=1}^{K_w-i} binom(K_w-j, i) / (1 - delta_j)`.
///
/// Equals the sum over all `(i+1)`-subsets `S` of `1 / (1 - max_{r in S} delta_r)`
/// divided by `binom(K_w, i)`: the worst member of `S` is its smallest index.
pub fn weak_level_cost(cfg: &SystemConfig, i: usize) -> f64 {
    let kw = cfg.num_weak();
    let s: f64 = (1..=kw.saturating_sub(i))
        .map(|j| binom_f(kw - j, i) / (1.0 - cfg.erasure(j)))
        .sum();
    s / binom_f(kw, i)
}

/// Achievable pair `(M_(p,q), R_(p,q))`.
pub fn achievable_pair(cfg: &SystemConfig, idx: SchemeIndex) -> Result<MemoryRatePair, RateError> {
    let g = gammas(cfg, idx)?;
    let weak: f64 = g.levels().map(|(i, gi)| gi * weak_level_cost(cfg, i)).sum();
    let denominator = weak + cfg.strong_inverse_sum();
    if denominator <= 0.0 {
        return Err(RateError::UnboundedRate);
    }
    let total = g.sum();
    let rate = cfg.packet_bits() as f64 * total / denominator;
    let memory = cfg.num_files() as f64 * g.weighted_sum() / (cfg.num_weak() as f64 * total) * rate;
    Ok(MemoryRatePair { memory, rate })
}

/// Closed form for the homogeneous scenario, evaluated without expanding to a
/// per-receiver erasure list.
pub fn homogeneous_pair(
    hcfg: &HomogeneousConfig,
    idx: SchemeIndex,
) -> Result<MemoryRatePair, RateError> {
    hcfg.expand()?;
    let (kw, ks) = (hcfg.num_weak, hcfg.num_strong);
    SchemeIndex::new(idx.p(), idx.q(), kw)?;
    if ks == 0 {
        return Err(RateError::NoStrongReceivers);
    }
    let (dw, ds) = (hcfg.delta_weak, hcfg.delta_strong);
    let ratio = (1.0 - ds) / (1.0 - dw) - 1.0;
    let p = idx.p();
    let g: Vec<(usize, f64)> = idx
        .levels()
        .map(|i| {
            let scale = binom_f(kw, i) / (binom_f(kw, p) * (ks as f64).powi((i - p) as i32));
            (i, scale * ratio.powi((i - p) as i32))
        })
        .collect();
    let total: f64 = g.iter().map(|(_, gi)| gi).sum();
    let weighted: f64 = g.iter().map(|&(i, gi)| i as f64 * gi).sum();
    let weak: f64 = g
        .iter()
        .map(|&(i, gi)| (kw - i) as f64 / (i + 1) as f64 * gi)
        .sum();
    let rate = hcfg.packet_bits as f64 * total / (weak / (1.0 - dw) + ks as f64 / (1.0 - ds));
    let memory = hcfg.num_files as f64 * weighted / (kw as f64 * total) * rate;
    Ok(MemoryRatePair { memory, rate })
}

/// Rates `R^(p), ..., R^(q)` of the subfiles of a file with total rate `R`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSplit {
    pub p: usize,
    pub total_rate: f64,
    pub subfile_rates: Vec<f64>,
}

impl RateSplit {
    /// Rate of the level-`i` subfile.
    pub fn get(&self, i: usize) -> f64 {
        self.subfile_rates[i - self.p]
    }
}

pub fn rate_split(cfg: &SystemConfig, idx: SchemeIndex, rate: f64) -> Result<RateSplit, RateError> {
    if rate < 0.0 {
        return Err(RateError::NegativeRate(rate));
    }
    let g = gammas(cfg, idx)?;
    let total = g.sum();
    let mut subfile_rates: Vec<f64> = g.values.iter().map(|gi| gi / total * rate).collect();
    let last = subfile_rates.len() - 1;
    // the last level absorbs the rounding remainder
    subfile_rates[last] = rate - subfile_rates[..last].iter().sum::<f64>();
    Ok(RateSplit {
        p: idx.p(),
        total_rate: rate,
        subfile_rates,
    })
}

/// What a delivery message carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageRole {
    /// Message 1: XOR multicasts of level-`q` pieces to weak receivers.
    WeakMulticast,
    /// Messages `2..=q-p+1`: level-`i` XORs jointly encoded with level-`i+1`
    /// pieces for the strong receivers.
    JointEncoding,
    /// Last message: level-`p` subfiles sent to each strong receiver.
    StrongUnicast,
}

/// One orthogonal time period. `beta` is the fraction of the `n` channel
/// uses; `weak_term` and `strong_term` are the two decodability constraints
/// it satisfies with equality (`beta = max(weak_term, strong_term)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodAllocation {
    pub beta: f64,
    pub weak_term: f64,
    pub strong_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubMessageAllocation {
    /// Weak receivers addressed (`S_j^(i+1)`); empty for strong unicasts.
    pub subset: Subset,
    /// Addressed strong receiver of a unicast.
    pub strong_receiver: Option<usize>,
    pub periods: Vec<PeriodAllocation>,
}

impl SubMessageAllocation {
    pub fn beta(&self) -> f64 {
        self.periods.iter().map(|p| p.beta).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MessageAllocation {
    /// Message number `t` in `1..=q-p+2`.
    pub index: usize,
    pub role: MessageRole,
    /// Subfile level whose weak-receiver content the message completes.
    pub level: usize,
    pub sub_messages: Vec<SubMessageAllocation>,
}

impl MessageAllocation {
    pub fn beta(&self) -> f64 {
        self.sub_messages.iter().map(|s| s.beta()).sum()
    }
}

/// Time-division schedule `beta_t`, `beta_{t,j}`, `beta_{t,j,m}` for a rate `R`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeAllocation {
    pub idx: SchemeIndex,
    pub rate: f64,
    pub messages: Vec<MessageAllocation>,
}

impl TimeAllocation {
    /// `sum_t beta_t`; at most 1 for a deliverable rate.
    pub fn total(&self) -> f64 {
        self.messages.iter().map(|m| m.beta()).sum()
    }

    /// Every period in transmission order.
    pub fn periods(&self) -> impl Iterator<Item = &PeriodAllocation> + '_ {
        self.messages
            .iter()
            .flat_map(|m| m.sub_messages.iter())
            .flat_map(|s| s.periods.iter())
    }

    /// Largest rate whose allocation fills exactly the `n` channel uses.
    /// The allocation is linear in `R`, so this is `R / total`.
    pub fn saturating_rate(&self) -> Option<f64> {
        let total = self.total();
        (total > 0.0).then(|| self.rate / total)
    }
}

/// Allocates each message, sub-message and period its decodability
/// constraint with equality.
pub fn time_allocation(
    cfg: &SystemConfig,
    idx: SchemeIndex,
    rate: f64,
) -> Result<TimeAllocation, RateError> {
    let split = rate_split(cfg, idx, rate)?;
    let (kw, ks) = (cfg.num_weak(), cfg.num_strong());
    let f = cfg.packet_bits() as f64;
    let (p, q) = (idx.p(), idx.q());
    let mut messages = Vec::with_capacity(idx.num_messages());

    // message 1: one period per (q+1)-subset, sized for its worst member
    let piece_rate = split.get(q) / binom_f(kw, q);
    let first = subsets(kw, q + 1)
        .map(|s| {
            let worst = s.smallest().expect("non-empty subset");
            let beta = piece_rate / ((1.0 - cfg.erasure(worst)) * f);
            SubMessageAllocation {
                subset: s,
                strong_receiver: None,
                periods: vec![PeriodAllocation {
                    beta,
                    weak_term: beta,
                    strong_term: 0.0,
                }],
            }
        })
        .collect();
    messages.push(MessageAllocation {
        index: 1,
        role: MessageRole::WeakMulticast,
        level: q,
        sub_messages: first,
    });

    for i in (p..q).rev() {
        let weak_chunk = split.get(i) / (ks as f64 * binom_f(kw, i));
        let strong_piece = split.get(i + 1) / binom_f(kw, i + 1);
        let sub_messages = subsets(kw, i + 1)
            .map(|s| {
                let worst = s.smallest().expect("non-empty subset");
                let weak_term = weak_chunk / ((1.0 - cfg.erasure(worst)) * f);
                let periods = (1..=ks)
                    .map(|m| {
                        let strong_term =
                            (weak_chunk + strong_piece) / ((1.0 - cfg.erasure(kw + m)) * f);
                        PeriodAllocation {
                            beta: weak_term.max(strong_term),
                            weak_term,
                            strong_term,
                        }
                    })
                    .collect();
                SubMessageAllocation {
                    subset: s,
                    strong_receiver: None,
                    periods,
                }
            })
            .collect();
        messages.push(MessageAllocation {
            index: q - i + 1,
            role: MessageRole::JointEncoding,
            level: i,
            sub_messages,
        });
    }

    let last = (1..=ks)
        .map(|m| {
            let receiver = kw + m;
            let beta = split.get(p) / ((1.0 - cfg.erasure(receiver)) * f);
            SubMessageAllocation {
                subset: Subset::empty(),
                strong_receiver: Some(receiver),
                periods: vec![PeriodAllocation {
                    beta,
                    weak_term: 0.0,
                    strong_term: beta,
                }],
            }
        })
        .collect();
    messages.push(MessageAllocation {
        index: q - p + 2,
        role: MessageRole::StrongUnicast,
        level: p,
        sub_messages: last,
    });

    Ok(TimeAllocation {
        idx,
        rate,
        messages,
    })
}

/// An achievable pair tagged with the scheme index that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub idx: SchemeIndex,
    pub pair: MemoryRatePair,
}

/// Upper concave envelope of a set of achievable pairs.
///
/// Beyond its last vertex the envelope continues with `tail_slope`: zero in
/// general (extra memory is never harmful), `1/N` when there are no strong
/// receivers and caching whole files at rate `M/N` is always possible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope {
    vertices: Vec<CurvePoint>,
    tail_slope: f64,
}

impl Envelope {
    pub fn from_points(points: &[CurvePoint], tail_slope: f64) -> Self {
        let mut sorted: Vec<CurvePoint> = points.to_vec();
        sorted.sort_by(|a, b| {
            a.pair
                .memory
                .total_cmp(&b.pair.memory)
                .then(b.pair.rate.total_cmp(&a.pair.rate))
        });
        sorted.dedup_by(|b, a| a.pair.memory == b.pair.memory);

        // monotone chain, upper half
        let mut hull: Vec<CurvePoint> = Vec::with_capacity(sorted.len());
        for pt in sorted {
            while hull.len() >= 2 {
                let a = hull[hull.len() - 2].pair;
                let b = hull[hull.len() - 1].pair;
                let c = pt.pair;
                let cross =
                    (b.memory - a.memory) * (c.rate - a.rate) - (b.rate - a.rate) * (c.memory - a.memory);
                if cross >= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(pt);
        }

        // stop where the hull gets flatter than the tail
        let mut keep = hull.len().min(1);
        while keep < hull.len() {
            let a = hull[keep - 1].pair;
            let b = hull[keep].pair;
            if (b.rate - a.rate) / (b.memory - a.memory) <= tail_slope {
                break;
            }
            keep += 1;
        }
        hull.truncate(keep);
        Self {
            vertices: hull,
            tail_slope,
        }
    }

    pub fn vertices(&self) -> &[CurvePoint] {
        &self.vertices
    }

    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    /// Index of the vertex at or immediately left of memory `m`.
    fn segment(&self, m: f64) -> usize {
        self.vertices
            .partition_point(|v| v.pair.memory <= m)
            .saturating_sub(1)
    }

    /// Best rate reachable with memory `m` by memory-sharing.
    pub fn rate_at(&self, m: f64) -> f64 {
        let Some(first) = self.vertices.first() else {
            return 0.0;
        };
        if m <= first.pair.memory {
            return first.pair.rate;
        }
        let k = self.segment(m);
        let a = self.vertices[k].pair;
        match self.vertices.get(k + 1) {
            Some(b) => {
                let b = b.pair;
                a.rate + (b.rate - a.rate) * (m - a.memory) / (b.memory - a.memory)
            }
            None => a.rate + self.tail_slope * (m - a.memory),
        }
    }

    /// Scheme index of the vertex at or immediately left of memory `m`.
    pub fn best_at(&self, m: f64) -> Option<SchemeIndex> {
        self.vertices.get(self.segment(m)).map(|v| v.idx)
    }

    /// Largest memory of any vertex.
    pub fn max_memory(&self) -> f64 {
        self.vertices.last().map_or(0.0, |v| v.pair.memory)
    }
}

/// All achievable pairs of a network and their memory-sharing envelope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffCurve {
    pub points: Vec<CurvePoint>,
    /// Indices with no finite pair (no strong receivers, or a non-positive
    /// proportioning factor).
    pub skipped: Vec<SchemeIndex>,
    pub envelope: Envelope,
}

impl TradeoffCurve {
    fn from_indices(
        cfg: &SystemConfig,
        indices: impl Iterator<Item = SchemeIndex>,
    ) -> Self {
        let mut points = Vec::new();
        let mut skipped = Vec::new();
        let mut unbounded = false;
        for idx in indices {
            match achievable_pair(cfg, idx) {
                Ok(pair) => points.push(CurvePoint { idx, pair }),
                Err(RateError::UnboundedRate) => {
                    unbounded = true;
                    skipped.push(idx);
                }
                Err(_) => skipped.push(idx),
            }
        }
        let tail_slope = if unbounded {
            1.0 / cfg.num_files() as f64
        } else {
            0.0
        };
        let envelope = Envelope::from_points(&points, tail_slope);
        Self {
            points,
            skipped,
            envelope,
        }
    }

    /// Largest memory among the finite pairs.
    pub fn max_memory(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.pair.memory)
            .fold(0.0, f64::max)
    }
}

/// Every `(M_(p,q), R_(p,q))` for `0 <= p <= q <= K_w` and their envelope.
pub fn tradeoff_curve(cfg: &SystemConfig) -> TradeoffCurve {
    TradeoffCurve::from_indices(cfg, SchemeIndex::all(cfg.num_weak()))
}

fn stw_indices(num_weak: usize) -> Vec<SchemeIndex> {
    let mut out = vec![SchemeIndex::new(0, 0, num_weak).expect("valid")];
    out.extend((0..num_weak).map(|p| SchemeIndex::new(p, p + 1, num_weak).expect("valid")));
    out.push(SchemeIndex::new(num_weak, num_weak, num_weak).expect("valid"));
    out
}

/// Pairs of the STW baseline: the `q = p + 1` indices plus the corner points
/// `(0,0)` and `(K_w,K_w)`. Homogeneous networks only.
pub fn stw_pairs(cfg: &SystemConfig) -> Result<Vec<CurvePoint>, RateError> {
    if cfg.homogeneous().is_none() {
        return Err(RateError::StwUndefined);
    }
    stw_indices(cfg.num_weak())
        .into_iter()
        .map(|idx| Ok(CurvePoint { idx, pair: achievable_pair(cfg, idx)? }))
        .collect()
}

pub fn stw_curve(cfg: &SystemConfig) -> Result<TradeoffCurve, RateError> {
    if cfg.homogeneous().is_none() {
        return Err(RateError::StwUndefined);
    }
    Ok(TradeoffCurve::from_indices(cfg, stw_indices(cfg.num_weak()).into_iter()))
}

/// Converse bound
/// `min over non-empty S of F / sum_{k in S} 1/(1-delta_k) + (M/N) |S ∩ weak|`.
///
/// Construction enumerates all `2^K - 1` subsets once and keeps, for each
/// count of weak members, the largest inverse-erasure sum; evaluation at a
/// memory is then a minimum over `K_w + 1` terms.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperBound {
    packet_bits: f64,
    num_files: f64,
    best_sum_by_weak_count: Vec<Option<f64>>,
}

impl UpperBound {
    pub fn new(cfg: &SystemConfig) -> Result<Self, RateError> {
        let k = cfg.num_receivers();
        if k > MAX_BOUND_RECEIVERS {
            return Err(RateError::IntractableSize { receivers: k });
        }
        let (kw, ks) = (cfg.num_weak(), cfg.num_strong());
        let inv: Vec<f64> = cfg.erasures().iter().map(|d| 1.0 / (1.0 - d)).collect();
        let masked_sum = |offset: usize, mask: u32| -> f64 {
            (0..32)
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| inv[offset + b as usize])
                .sum()
        };
        let weak_parts: Vec<(usize, f64)> = (0u32..1 << kw)
            .map(|m| (m.count_ones() as usize, masked_sum(0, m)))
            .collect();
        let strong_parts: Vec<f64> = (0u32..1 << ks).map(|m| masked_sum(kw, m)).collect();

        let mut best: Vec<Option<f64>> = vec![None; kw + 1];
        for (wm, &(w, ws)) in weak_parts.iter().enumerate() {
            for (sm, &ss) in strong_parts.iter().enumerate() {
                if wm == 0 && sm == 0 {
                    continue;
                }
                let s = ws + ss;
                if best[w].is_none_or(|b| s > b) {
                    best[w] = Some(s);
                }
            }
        }
        Ok(Self {
            packet_bits: cfg.packet_bits() as f64,
            num_files: cfg.num_files() as f64,
            best_sum_by_weak_count: best,
        })
    }

    pub fn at(&self, memory: f64) -> Result<f64, RateError> {
        if memory < 0.0 {
            return Err(RateError::NegativeMemory(memory));
        }
        Ok(self
            .best_sum_by_weak_count
            .iter()
            .enumerate()
            .filter_map(|(w, s)| s.map(|s| self.packet_bits / s + memory / self.num_files * w as f64))
            .fold(f64::INFINITY, f64::min))
    }
}

pub fn upper_bound(cfg: &SystemConfig, memory: f64) -> Result<f64, RateError> {
    UpperBound::new(cfg)?.at(memory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::binom;

    fn hom(kw: usize, ks: usize, n: usize, f: u32, dw: f64, ds: f64) -> SystemConfig {
        HomogeneousConfig::new(kw, ks, n, f, dw, ds).unwrap().expand().unwrap()
    }

    fn example1() -> SystemConfig {
        hom(3, 2, 10, 10, 0.8, 0.2)
    }

    fn idx(p: usize, q: usize, kw: usize) -> SchemeIndex {
        SchemeIndex::new(p, q, kw).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn gamma_is_one_on_the_diagonal() {
        let cfg = example1();
        for p in 0..=3 {
            assert_eq!(gamma(&cfg, p, p).unwrap(), 1.0);
        }
        let weak_only = SystemConfig::new(2, 0, 2, 4, vec![0.5, 0.4]).unwrap();
        assert_eq!(gamma(&weak_only, 1, 1).unwrap(), 1.0);
        assert_eq!(
            gamma(&weak_only, 0, 1).unwrap_err(),
            RateError::NoStrongReceivers
        );
    }

    #[test]
    fn gamma_example_values() {
        // ((1-0.2)/(1-0.8) - 1) = 3; gamma_1 = 3/2 * 3, gamma_2 = 3/4 * 9
        let cfg = example1();
        assert!(close(gamma(&cfg, 0, 1).unwrap(), 4.5, 1e-12));
        assert!(close(gamma(&cfg, 0, 2).unwrap(), 6.75, 1e-12));
    }

    #[test]
    fn gamma_rejects_bad_levels_and_non_positive_factors() {
        let cfg = example1();
        assert!(matches!(gamma(&cfg, 2, 1), Err(RateError::InvalidIndex { .. })));
        assert!(matches!(gamma(&cfg, 0, 4), Err(RateError::InvalidIndex { .. })));
        // strong receiver as bad as the best weak one: factor is exactly 0
        let flat = SystemConfig::new(2, 2, 4, 10, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(matches!(
            gamma(&flat, 0, 1),
            Err(RateError::NegativeFactor { receiver: 2, .. })
        ));
    }

    #[test]
    fn corner_pairs() {
        let cfg = SystemConfig::new(3, 2, 10, 10, vec![0.9, 0.8, 0.7, 0.3, 0.1]).unwrap();
        let strong: f64 = 1.0 / 0.7 + 1.0 / 0.9;
        let all: f64 = 1.0 / 0.1 + 1.0 / 0.2 + 1.0 / 0.3 + strong;

        let zero = achievable_pair(&cfg, idx(0, 0, 3)).unwrap();
        assert_eq!(zero.memory, 0.0);
        assert!(close(zero.rate, 10.0 / all, 1e-12));

        let full = achievable_pair(&cfg, idx(3, 3, 3)).unwrap();
        assert!(close(full.rate, 10.0 / strong, 1e-12));
        assert!(close(full.memory, 10.0 * full.rate, 1e-12));
    }

    #[test]
    fn example1_rate_and_memory() {
        // R = F * 12.25 / ((3 + 4.5 + 6.75/3)/0.2 + 2/0.8) = 49F/205
        // M = (4.5 + 2*6.75) / (3 * 12.25) * N * R = 24NF/205
        let cfg = example1();
        let pair = achievable_pair(&cfg, idx(0, 2, 3)).unwrap();
        assert!(close(pair.rate, 490.0 / 205.0, 1e-12));
        assert!(close(pair.memory, 2400.0 / 205.0, 1e-12));
    }

    #[test]
    fn weak_level_cost_matches_subset_sum() {
        let cfg = SystemConfig::new(5, 1, 8, 10, vec![0.9, 0.85, 0.7, 0.7, 0.6, 0.1]).unwrap();
        for i in 0..=5 {
            let brute: f64 = subsets(5, i + 1)
                .map(|s| 1.0 / (1.0 - cfg.erasure(s.smallest().unwrap())))
                .sum::<f64>()
                / binom(5, i) as f64;
            assert!(close(weak_level_cost(&cfg, i), brute, 1e-12), "level {i}");
        }
    }

    #[test]
    fn homogeneous_closed_form_agrees() {
        let h = HomogeneousConfig::new(4, 3, 12, 7, 0.75, 0.15).unwrap();
        let cfg = h.expand().unwrap();
        for i in SchemeIndex::all(4) {
            let a = achievable_pair(&cfg, i).unwrap();
            let b = homogeneous_pair(&h, i).unwrap();
            assert!(close(a.rate, b.rate, 1e-9) && close(a.memory, b.memory, 1e-9), "{i}");
        }
        let no_strong = HomogeneousConfig::new(3, 0, 3, 7, 0.75, 0.15).unwrap();
        assert_eq!(
            homogeneous_pair(&no_strong, idx(0, 0, 3)).unwrap_err(),
            RateError::NoStrongReceivers
        );
    }

    #[test]
    fn rate_split_examples() {
        let cfg = example1();
        let zero = rate_split(&cfg, idx(0, 2, 3), 0.0).unwrap();
        assert!(zero.subfile_rates.iter().all(|&r| r == 0.0));

        let single = rate_split(&cfg, idx(1, 1, 3), 2.5).unwrap();
        assert_eq!(single.subfile_rates, vec![2.5]);

        let r = achievable_pair(&cfg, idx(0, 2, 3)).unwrap().rate;
        let split = rate_split(&cfg, idx(0, 2, 3), r).unwrap();
        assert_eq!(split.subfile_rates.iter().sum::<f64>(), r);
        assert!(close(split.get(1) / split.get(0), 4.5, 1e-12));
        assert!(close(split.get(2) / split.get(0), 6.75, 1e-12));
        assert!(rate_split(&cfg, idx(0, 2, 3), -1.0).is_err());
    }

    #[test]
    fn allocation_fills_the_block_at_the_achievable_rate() {
        let configs = [
            example1(),
            hom(2, 2, 20, 10, 0.8, 0.2),
            // heterogeneous weak side, equal strong erasures
            SystemConfig::new(4, 3, 9, 12, vec![0.9, 0.8, 0.75, 0.6, 0.3, 0.3, 0.3]).unwrap(),
        ];
        for cfg in &configs {
            for i in SchemeIndex::all(cfg.num_weak()) {
                let r = achievable_pair(cfg, i).unwrap().rate;
                let total = time_allocation(cfg, i, r).unwrap().total();
                assert!((total - 1.0).abs() < 1e-9, "{i}: {total}");
                let half = time_allocation(cfg, i, 0.5 * r).unwrap().total();
                assert!((half - 0.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unequal_strong_erasures_overshoot_the_block() {
        // each JE period takes the larger of its two constraints; with unequal
        // strong erasures the per-period maxima sum past the summed constraint
        let cfg = SystemConfig::new(3, 2, 10, 10, vec![0.85, 0.8, 0.7, 0.3, 0.1]).unwrap();
        for i in SchemeIndex::all(3) {
            let r = achievable_pair(&cfg, i).unwrap().rate;
            let alloc = time_allocation(&cfg, i, r).unwrap();
            if i.p() == i.q() {
                assert!((alloc.total() - 1.0).abs() < 1e-9);
            } else {
                assert!(alloc.total() > 1.0 + 1e-6, "{i}: {}", alloc.total());
                assert!(alloc.saturating_rate().unwrap() < r);
            }
        }
    }

    #[test]
    fn allocation_structure() {
        let cfg = example1();
        let i = idx(0, 2, 3);
        let alloc = time_allocation(&cfg, i, 1.0).unwrap();
        assert_eq!(alloc.messages.len(), 4);
        let counts: Vec<usize> = alloc.messages.iter().map(|m| m.sub_messages.len()).collect();
        assert_eq!(counts, vec![1, 3, 3, 2]);
        for m in &alloc.messages[1..3] {
            assert!(m.sub_messages.iter().all(|s| s.periods.len() == 2));
        }
        assert_eq!(alloc.messages[3].sub_messages[1].strong_receiver, Some(5));

        let zero = time_allocation(&cfg, i, 0.0).unwrap();
        assert_eq!(zero.total(), 0.0);

        let top = time_allocation(&cfg, idx(1, 3, 3), 1.0).unwrap();
        assert!(top.messages[0].sub_messages.is_empty());
    }

    #[test]
    fn homogeneous_periods_have_equal_terms() {
        let cfg = hom(4, 3, 12, 10, 0.8, 0.25);
        for i in SchemeIndex::all(4) {
            let r = achievable_pair(&cfg, i).unwrap().rate;
            let alloc = time_allocation(&cfg, i, r).unwrap();
            for m in alloc.messages.iter().filter(|m| m.role == MessageRole::JointEncoding) {
                for s in &m.sub_messages {
                    for period in &s.periods {
                        assert!((period.weak_term - period.strong_term).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn strong_terms_sum_to_best_weak_level_cost() {
        // summing the strong constraint over the K_s periods of a sub-message
        // gives R^(i)/binom(K_w,i) / ((1 - delta_{K_w-i}) F)
        let cfg = SystemConfig::new(4, 3, 9, 12, vec![0.9, 0.8, 0.75, 0.6, 0.3, 0.2, 0.05]).unwrap();
        for i in SchemeIndex::all(4) {
            let r = achievable_pair(&cfg, i).unwrap().rate;
            let split = rate_split(&cfg, i, r).unwrap();
            let alloc = time_allocation(&cfg, i, r).unwrap();
            for m in alloc.messages.iter().filter(|m| m.role == MessageRole::JointEncoding) {
                let level = m.level;
                let expected = split.get(level)
                    / binom(4, level) as f64
                    / ((1.0 - cfg.erasure(4 - level)) * 12.0);
                for s in &m.sub_messages {
                    let sum: f64 = s.periods.iter().map(|p| p.strong_term).sum();
                    assert!(close(sum, expected, 1e-12), "{i} level {level}");
                }
            }
        }
    }

    #[test]
    fn stw_enumeration() {
        let cfg = hom(2, 2, 20, 10, 0.8, 0.2);
        let got: Vec<String> = stw_pairs(&cfg).unwrap().iter().map(|p| p.idx.to_string()).collect();
        assert_eq!(got, vec!["(0,0)", "(0,1)", "(1,2)", "(2,2)"]);
        let het = SystemConfig::new(2, 2, 20, 10, vec![0.8, 0.7, 0.2, 0.2]).unwrap();
        assert_eq!(stw_pairs(&het).unwrap_err(), RateError::StwUndefined);
    }

    #[test]
    fn curve_has_every_pair_and_dominates_them() {
        let cfg = hom(4, 3, 12, 10, 0.8, 0.25);
        let curve = tradeoff_curve(&cfg);
        assert_eq!(curve.points.len(), 15);
        assert!(curve.skipped.is_empty());
        let zero = achievable_pair(&cfg, idx(0, 0, 4)).unwrap();
        assert_eq!(curve.envelope.rate_at(0.0), zero.rate);
        for pt in &curve.points {
            assert!(curve.envelope.rate_at(pt.pair.memory) >= pt.pair.rate - 1e-9);
        }
        // flat beyond the last vertex
        let last = curve.envelope.max_memory();
        assert_eq!(curve.envelope.rate_at(last * 3.0), curve.envelope.rate_at(last));
    }

    #[test]
    fn envelope_of_hand_points() {
        let mk = |p, q, m, r| CurvePoint {
            idx: SchemeIndex::new(p, q, 3).unwrap(),
            pair: MemoryRatePair { memory: m, rate: r },
        };
        let pts = [
            mk(0, 0, 0.0, 1.0),
            mk(0, 1, 1.0, 1.6),
            mk(0, 2, 2.0, 1.9), // below the chord from (1,1.6) to (3,2.5)
            mk(1, 1, 3.0, 2.5),
            mk(3, 3, 5.0, 2.0), // lower rate with more memory
        ];
        let env = Envelope::from_points(&pts, 0.0);
        let ids: Vec<String> = env.vertices().iter().map(|v| v.idx.to_string()).collect();
        assert_eq!(ids, vec!["(0,0)", "(0,1)", "(1,1)"]);
        assert!(close(env.rate_at(2.0), 2.05, 1e-12));
        assert_eq!(env.rate_at(10.0), 2.5);
        assert_eq!(env.best_at(2.0).unwrap().to_string(), "(0,1)");
        assert_eq!(env.best_at(3.0).unwrap().to_string(), "(1,1)");

        let ray = Envelope::from_points(&pts, 0.25);
        assert!(close(ray.rate_at(7.0), 2.5 + 0.25 * 4.0, 1e-12));
        let steep = Envelope::from_points(&pts, 0.61);
        let ids: Vec<String> = steep.vertices().iter().map(|v| v.idx.to_string()).collect();
        assert_eq!(ids, vec!["(0,0)"]);
    }

    #[test]
    fn weak_only_network_uses_the_full_cache_ray() {
        let cfg = SystemConfig::new(3, 0, 4, 8, vec![0.6, 0.5, 0.4]).unwrap();
        let curve = tradeoff_curve(&cfg);
        assert_eq!(curve.points.len(), 3);
        assert!(curve.skipped.contains(&idx(3, 3, 3)));
        assert!(curve.skipped.contains(&idx(0, 1, 3)));
        assert_eq!(curve.envelope.tail_slope(), 0.25);
        let far = 100.0;
        assert!(curve.envelope.rate_at(far) >= far / 4.0);
    }

    /// Independent route to the converse: for a fixed number `w` of weak
    /// members the best subset holds every strong receiver and the `w` weak
    /// receivers with the largest erasure probabilities.
    fn greedy_bound(cfg: &SystemConfig, m: f64) -> f64 {
        let (kw, f, n) = (cfg.num_weak(), cfg.packet_bits() as f64, cfg.num_files() as f64);
        let strong = cfg.strong_inverse_sum();
        (0..=kw)
            .filter(|&w| w > 0 || strong > 0.0)
            .map(|w| {
                let s: f64 = strong + (1..=w).map(|k| 1.0 / (1.0 - cfg.erasure(k))).sum::<f64>();
                f / s + m / n * w as f64
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Direct minimum over every non-empty subset.
    fn brute_bound(cfg: &SystemConfig, m: f64) -> f64 {
        let k = cfg.num_receivers();
        (1u32..1 << k)
            .map(|mask| {
                let members: Vec<usize> = (1..=k).filter(|r| mask >> (r - 1) & 1 == 1).collect();
                let s: f64 = members.iter().map(|&r| 1.0 / (1.0 - cfg.erasure(r))).sum();
                let w = members.iter().filter(|&&r| cfg.is_weak(r)).count();
                cfg.packet_bits() as f64 / s + m / cfg.num_files() as f64 * w as f64
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn upper_bound_matches_independent_routes() {
        let configs = [
            hom(2, 2, 20, 10, 0.8, 0.2),
            SystemConfig::new(3, 3, 7, 9, vec![0.9, 0.7, 0.65, 0.4, 0.2, 0.0]).unwrap(),
            SystemConfig::new(4, 0, 4, 5, vec![0.6, 0.5, 0.5, 0.1]).unwrap(),
        ];
        for cfg in &configs {
            let ub = UpperBound::new(cfg).unwrap();
            for m in [0.0, 0.3, 1.0, 4.0, 17.5, 80.0, 1e6] {
                let got = ub.at(m).unwrap();
                assert!(close(got, brute_bound(cfg, m), 1e-12));
                assert!(close(got, greedy_bound(cfg, m), 1e-12));
            }
        }
    }

    #[test]
    fn upper_bound_limits() {
        let cfg = SystemConfig::new(3, 2, 10, 10, vec![0.9, 0.8, 0.7, 0.3, 0.1]).unwrap();
        let all: f64 = cfg.erasures().iter().map(|d| 1.0 / (1.0 - d)).sum();
        assert!(close(upper_bound(&cfg, 0.0).unwrap(), 10.0 / all, 1e-12));
        let strong_only = 10.0 / cfg.strong_inverse_sum();
        assert!(close(upper_bound(&cfg, 1e12).unwrap(), strong_only, 1e-12));
        assert!(upper_bound(&cfg, -1.0).is_err());

        let big = SystemConfig::new(20, 5, 30, 10, vec![0.1; 25]).unwrap();
        assert_eq!(
            UpperBound::new(&big).unwrap_err(),
            RateError::IntractableSize { receivers: 25 }
        );
    }

    #[test]
    fn fig2_scc_pair_beats_stw() {
        let cfg = hom(2, 2, 20, 10, 0.8, 0.2);
        let stw = stw_curve(&cfg).unwrap();
        let p02 = achievable_pair(&cfg, idx(0, 2, 2)).unwrap();
        assert!(p02.rate > stw.envelope.rate_at(p02.memory) + 1e-6);
    }
}
