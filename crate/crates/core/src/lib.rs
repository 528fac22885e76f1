//! Successive cache-channel coding (SCC) for cache-aided delivery over a
//! packet erasure broadcast channel.
//!
//! Receivers `1..=K_w` are *weak* (worse channels, equipped with caches) and
//! receivers `K_w+1..=K` are *strong* (better channels, no cache). Each file
//! is split into subfiles at cache-redundancy levels `p..=q`; subfile `i` is
//! placed with the Maddah-Ali–Niesen rule for cache size `iN/K_w` and
//! delivered by XOR multicasts to the weak receivers, jointly encoded with
//! the subfile one level up for the strong receivers.
//!
//! The crate is split into:
//!
//! * [`model`]: validated network configuration and small domain types.
//! * [`combinatorics`]: binomials and lexicographic subset ranking.
//! * [`rates`]: closed-form memory-rate pairs, rate splits, time allocations,
//!   the memory-sharing envelope and the cut-set style upper bound.
//! * [`codec`]: bit-exact placement, delivery-plan construction and decoding.
//! * [`channel`]: erasure channel realizations, the idealized code rule and
//!   Monte Carlo trials.

pub mod channel;
pub mod codec;
pub mod combinatorics;
pub mod model;
pub mod rates;

pub use channel::{
    decode_flags, realize, run_trials, ChannelError, ChannelRealization, DemandPolicy,
    PatternReport, SimulationReport, GENERATOR_ID,
};
pub use codec::{
    build_plan, decode, place, Bits, CacheContents, CodecError, CodedMessage, DecodingResult,
    DeliveryPlan, LevelLayout, Library, Payload, PieceId, ReceiverOutcome, ReceptionFlags,
};
pub use combinatorics::{binom, index_of_subset, subset_by_index, subsets, Subset};
pub use model::{
    ConfigError, ConfigFile, DemandVector, HomogeneousConfig, MemoryRatePair, SchemeIndex,
    SystemConfig, TOLERANCE,
};
pub use rates::{
    achievable_pair, gamma, gammas, homogeneous_pair, rate_split, stw_curve, stw_pairs,
    time_allocation, tradeoff_curve, upper_bound, CurvePoint, Envelope, GammaCoefficients,
    MessageAllocation, MessageRole, PeriodAllocation, RateError, RateSplit,
    SubMessageAllocation, TimeAllocation, TradeoffCurve, UpperBound,
};
