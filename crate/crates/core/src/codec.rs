//! Bit-exact placement, delivery-plan construction and decoding.
//!
//! A [`Library`] holds `N` pseudo-random files of `round(n R)` bits, each cut
//! into subfiles `W^(p)..W^(q)` and every subfile `i` into `binom(K_w, i)`
//! pieces labelled by `i`-subsets of the weak receivers. [`place`] fills the
//! weak caches, [`build_plan`] lays out the coded messages and their packet
//! budgets, and [`decode`] reconstructs each demanded file from cache
//! contents and whichever payloads the channel delivered.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;

use bitvec::prelude::*;
use rand::RngCore;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{stream_rng, LIBRARY_STREAM};
use crate::combinatorics::{binom, index_of_subset, subsets, Subset};
use crate::model::{ConfigError, DemandVector, SchemeIndex, SystemConfig};
use crate::rates::{rate_split, time_allocation, MessageRole, RateError, TimeAllocation};

/// Bit storage used for files, pieces and payloads.
pub type Bits = BitVec<u64, Lsb0>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("rate {0} must be finite and non-negative")]
    InvalidRate(f64),
    #[error(
        "level {level} subfile of {len} bits cannot be cut into {pieces} non-empty pieces; increase n"
    )]
    PieceTooSmall { level: usize, len: usize, pieces: u64 },
    #[error(
        "periods need {required} packets but the block has n = {available}; the rate is too close to the boundary for this n"
    )]
    AllocationOverflow { required: u64, available: u64 },
    #[error("library was built for {expected} weak receivers and {files} files, config has {got_weak} and {got_files}")]
    LibraryMismatch {
        expected: usize,
        files: usize,
        got_weak: usize,
        got_files: usize,
    },
}

/// `W_{file, subset}^(level)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PieceId {
    pub file: usize,
    pub level: usize,
    pub subset: Subset,
}

impl PieceId {
    pub fn new(file: usize, level: usize, subset: Subset) -> Self {
        Self {
            file,
            level,
            subset,
        }
    }
}

impl std::fmt::Display for PieceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "W[{}]{}^({})", self.file, self.subset, self.level)
    }
}

/// Where subfile `level` sits inside each file and how it is cut.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelLayout {
    pub level: usize,
    pub offset: usize,
    pub len: usize,
    pub num_pieces: u64,
    /// Length of every piece; only the last one is zero-padded to it.
    pub piece_bits: usize,
}

impl LevelLayout {
    /// Real bits of piece `rank` (1-based) relative to the file start.
    fn piece_range(&self, rank: u64) -> Range<usize> {
        let start = (rank as usize - 1) * self.piece_bits;
        let end = (start + self.piece_bits).min(self.len);
        self.offset + start.min(self.len)..self.offset + end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Library {
    seed: u64,
    idx: SchemeIndex,
    num_weak: usize,
    channel_uses: u64,
    rate: f64,
    file_bits: usize,
    levels: Vec<LevelLayout>,
    files: Vec<Bits>,
}

impl Library {
    /// `N` files of `round(n R)` bits drawn from `seed`, split per the rate split.
    pub fn generate(
        cfg: &SystemConfig,
        idx: SchemeIndex,
        seed: u64,
        channel_uses: u64,
        rate: f64,
    ) -> Result<Self, CodecError> {
        if !rate.is_finite() || rate < 0.0 {
            return Err(CodecError::InvalidRate(rate));
        }
        idx.check(cfg)?;
        let file_bits = (channel_uses as f64 * rate).round() as usize;
        let levels = layout(cfg, idx, file_bits)?;

        let mut rng = stream_rng(seed, LIBRARY_STREAM);
        let words = file_bits.div_ceil(64);
        let files = (0..cfg.num_files())
            .map(|_| {
                let raw: Vec<u64> = (0..words).map(|_| rng.next_u64()).collect();
                let mut bits = Bits::from_vec(raw);
                bits.truncate(file_bits);
                bits
            })
            .collect();
        Ok(Self {
            seed,
            idx,
            num_weak: cfg.num_weak(),
            channel_uses,
            rate,
            file_bits,
            levels,
            files,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn idx(&self) -> SchemeIndex {
        self.idx
    }

    pub fn channel_uses(&self) -> u64 {
        self.channel_uses
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn file_bits(&self) -> usize {
        self.file_bits
    }

    pub fn num_files(&self) -> usize {
        self.files.len()
    }

    pub fn levels(&self) -> &[LevelLayout] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &LevelLayout {
        &self.levels[i - self.idx.p()]
    }

    /// File `f` (1-based).
    pub fn file(&self, f: usize) -> &Bits {
        &self.files[f - 1]
    }

    /// Real bits of subfile `W_f^(i)`.
    pub fn subfile(&self, f: usize, i: usize) -> Bits {
        let l = self.level(i);
        self.file(f)[l.offset..l.offset + l.len].to_bitvec()
    }

    /// The piece padded to its level's piece length.
    pub fn piece(&self, id: &PieceId) -> Bits {
        let l = self.level(id.level);
        let rank = index_of_subset(self.num_weak, id.subset.as_slice())
            .expect("piece labels are subsets of the weak receivers");
        let mut bits = self.file(id.file)[l.piece_range(rank)].to_bitvec();
        bits.resize(l.piece_bits, false);
        bits
    }
}

fn layout(cfg: &SystemConfig, idx: SchemeIndex, file_bits: usize) -> Result<Vec<LevelLayout>, CodecError> {
    let kw = cfg.num_weak();
    // the split only fixes proportions, any positive total will do
    let split = rate_split(cfg, idx, 1.0)?;
    let mut lens: Vec<usize> = idx
        .levels()
        .map(|i| (file_bits as f64 * split.get(i)).floor() as usize)
        .collect();
    let assigned: usize = lens.iter().sum();
    *lens.last_mut().expect("at least one level") += file_bits.saturating_sub(assigned);

    let mut offset = 0;
    let mut out = Vec::with_capacity(lens.len());
    for (i, len) in idx.levels().zip(lens) {
        let num_pieces = binom(kw, i);
        let piece_bits = len.div_ceil(num_pieces as usize);
        if file_bits > 0 && (num_pieces as usize - 1) * piece_bits >= len {
            return Err(CodecError::PieceTooSmall {
                level: i,
                len,
                pieces: num_pieces,
            });
        }
        out.push(LevelLayout {
            level: i,
            offset,
            len,
            num_pieces,
            piece_bits,
        });
        offset += len;
    }
    Ok(out)
}

/// Cache `Z_k` of one weak receiver.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CacheContents {
    pub receiver: usize,
    pub pieces: BTreeMap<PieceId, Bits>,
}

impl CacheContents {
    pub fn get(&self, id: &PieceId) -> Option<&Bits> {
        self.pieces.get(id)
    }

    pub fn total_bits(&self) -> usize {
        self.pieces.values().map(|b| b.len()).sum()
    }
}

/// Generates the library and fills every weak cache with the pieces whose
/// label contains the receiver.
pub fn place(
    cfg: &SystemConfig,
    idx: SchemeIndex,
    library_seed: u64,
    channel_uses: u64,
    rate: f64,
) -> Result<(Library, Vec<CacheContents>), CodecError> {
    let lib = Library::generate(cfg, idx, library_seed, channel_uses, rate)?;
    let caches = fill_caches(cfg, &lib);
    Ok((lib, caches))
}

pub fn fill_caches(cfg: &SystemConfig, lib: &Library) -> Vec<CacheContents> {
    let kw = cfg.num_weak();
    (1..=kw)
        .map(|k| {
            let mut pieces = BTreeMap::new();
            for f in 1..=lib.num_files() {
                for i in lib.idx().levels() {
                    for s in subsets(kw, i).filter(|s| s.contains(k)) {
                        let id = PieceId::new(f, i, s);
                        let bits = lib.piece(&id);
                        pieces.insert(id, bits);
                    }
                }
            }
            CacheContents {
                receiver: k,
                pieces,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// `V^(q)_j`: XOR of one piece per member of the subset.
    WeakMulticast { operands: Vec<PieceId>, bits: Bits },
    /// Chunk `chunk` of every operand XORed for the weak receivers, together
    /// with a level-`i+1` piece for one strong receiver.
    JointBlock {
        operands: Vec<PieceId>,
        chunk: Range<usize>,
        weak_bits: Bits,
        strong_receiver: usize,
        strong_piece: PieceId,
        strong_bits: Bits,
    },
    /// Subfile `W^(p)` of the receiver's demand.
    StrongUnicast {
        receiver: usize,
        file: usize,
        level: usize,
        bits: Bits,
    },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::WeakMulticast { .. } => "weak_multicast",
            Payload::JointBlock { .. } => "joint_block",
            Payload::StrongUnicast { .. } => "strong_unicast",
        }
    }

    /// Bits a side-informed weak receiver must resolve.
    pub fn weak_bits(&self) -> usize {
        match self {
            Payload::WeakMulticast { bits, .. } => bits.len(),
            Payload::JointBlock { weak_bits, .. } => weak_bits.len(),
            Payload::StrongUnicast { .. } => 0,
        }
    }

    /// Bits meant for the addressed strong receiver only.
    pub fn strong_bits(&self) -> usize {
        match self {
            Payload::WeakMulticast { .. } => 0,
            Payload::JointBlock { strong_bits, .. } => strong_bits.len(),
            Payload::StrongUnicast { bits, .. } => bits.len(),
        }
    }

    pub fn strong_receiver(&self) -> Option<usize> {
        match self {
            Payload::WeakMulticast { .. } => None,
            Payload::JointBlock {
                strong_receiver, ..
            } => Some(*strong_receiver),
            Payload::StrongUnicast { receiver, .. } => Some(*receiver),
        }
    }
}

/// One period of the delivery phase.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedMessage {
    /// Message number `t`.
    pub message: usize,
    /// Sub-message `j`, 1-based.
    pub sub_message: usize,
    /// Period `m` within the sub-message, 1-based.
    pub period: usize,
    pub level: usize,
    /// Weak receivers addressed; empty for unicasts.
    pub subset: Subset,
    pub packets: u64,
    pub payload: Payload,
}

#[derive(Serialize)]
struct MessageRecord<'a> {
    kind: &'static str,
    message: usize,
    sub_message: usize,
    period: usize,
    level: usize,
    subset: &'a Subset,
    strong_receiver: Option<usize>,
    operands: Vec<String>,
    payload_bits: usize,
    weak_bits: usize,
    strong_bits: usize,
    packets: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryPlan {
    pub idx: SchemeIndex,
    pub demands: DemandVector,
    pub channel_uses: u64,
    pub allocation: TimeAllocation,
    pub messages: Vec<CodedMessage>,
    num_weak: usize,
    num_strong: usize,
}

impl DeliveryPlan {
    /// Periods per sub-message of message `t`.
    fn periods_of(&self, t: usize) -> usize {
        let last = self.idx.num_messages();
        if t == 1 || t == last {
            1
        } else {
            self.num_strong
        }
    }

    fn sub_messages_of(&self, t: usize) -> usize {
        let (p, q) = (self.idx.p(), self.idx.q());
        if t == self.idx.num_messages() {
            self.num_strong
        } else {
            // message t carries level q - t + 1 and is indexed by (level+1)-subsets
            binom(self.num_weak, q + 2 - t) as usize * usize::from(q + 1 >= p + t)
        }
    }

    /// Position in [`DeliveryPlan::messages`] of period `m` of sub-message
    /// `j` of message `t`.
    pub fn position(&self, t: usize, j: usize, m: usize) -> Option<usize> {
        if t == 0 || t > self.idx.num_messages() {
            return None;
        }
        if j == 0 || j > self.sub_messages_of(t) || m == 0 || m > self.periods_of(t) {
            return None;
        }
        let before: usize = (1..t).map(|u| self.sub_messages_of(u) * self.periods_of(u)).sum();
        Some(before + (j - 1) * self.periods_of(t) + (m - 1))
    }

    pub fn total_packets(&self) -> u64 {
        self.messages.iter().map(|m| m.packets).sum()
    }

    /// One JSON object per coded message.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for m in &self.messages {
            let operands = match &m.payload {
                Payload::WeakMulticast { operands, .. } => {
                    operands.iter().map(|o| o.to_string()).collect()
                }
                Payload::JointBlock {
                    operands,
                    strong_piece,
                    ..
                } => operands
                    .iter()
                    .chain(std::iter::once(strong_piece))
                    .map(|o| o.to_string())
                    .collect(),
                Payload::StrongUnicast { file, level, .. } => vec![format!("W[{file}]^({level})")],
            };
            let record = MessageRecord {
                kind: m.payload.kind(),
                message: m.message,
                sub_message: m.sub_message,
                period: m.period,
                level: m.level,
                subset: &m.subset,
                strong_receiver: m.payload.strong_receiver(),
                operands,
                payload_bits: m.payload.weak_bits() + m.payload.strong_bits(),
                weak_bits: m.payload.weak_bits(),
                strong_bits: m.payload.strong_bits(),
                packets: m.packets,
            };
            serde_json::to_writer(&mut out, &record)?;
            writeln!(out)?;
        }
        Ok(())
    }
}

/// `W_{d_k, T \ {k}}^(i)` for every `k` in `T`, in receiver order.
fn xor_operands(demands: &DemandVector, level: usize, t: &Subset) -> Vec<PieceId> {
    t.iter()
        .map(|k| PieceId::new(demands.of(k), level, t.without(k)))
        .collect()
}

/// `acc ^= other`, growing `acc` with zeros if `other` is longer.
fn xor_into(acc: &mut Bits, other: &BitSlice<u64, Lsb0>) {
    if other.len() > acc.len() {
        acc.resize(other.len(), false);
    }
    let head = &mut acc[..other.len()];
    *head ^= other;
}

fn xor_all(parts: impl IntoIterator<Item = Bits>) -> Bits {
    let mut acc = Bits::new();
    for p in parts {
        xor_into(&mut acc, &p);
    }
    acc
}

/// Chunk `m` of `K_s` chunks of a `piece_bits`-long piece.
fn chunk_range(piece_bits: usize, num_strong: usize, m: usize) -> Range<usize> {
    let c = piece_bits.div_ceil(num_strong);
    ((m - 1) * c).min(piece_bits)..(m * c).min(piece_bits)
}

/// Packet budget per period: `ceil(beta n)` each, then any leftover channel
/// uses shared out in proportion to `beta`.
fn packet_budgets(alloc: &TimeAllocation, n: u64) -> Result<Vec<u64>, CodecError> {
    let betas: Vec<f64> = alloc.periods().map(|p| p.beta).collect();
    let mut packets: Vec<u64> = betas.iter().map(|b| (b * n as f64).ceil() as u64).collect();
    let required: u64 = packets.iter().sum();
    if required > n {
        return Err(CodecError::AllocationOverflow {
            required,
            available: n,
        });
    }
    let total: f64 = betas.iter().sum();
    if total > 0.0 {
        let slack = (n - required) as f64;
        for (pk, b) in packets.iter_mut().zip(&betas) {
            *pk += (slack * b / total).floor() as u64;
        }
    }
    Ok(packets)
}

/// Lays out messages `1..=q-p+2` and sizes their periods from the time
/// allocation at the library's rate.
pub fn build_plan(
    cfg: &SystemConfig,
    lib: &Library,
    demands: &DemandVector,
) -> Result<DeliveryPlan, CodecError> {
    if lib.num_weak != cfg.num_weak() || lib.num_files() != cfg.num_files() {
        return Err(CodecError::LibraryMismatch {
            expected: lib.num_weak,
            files: lib.num_files(),
            got_weak: cfg.num_weak(),
            got_files: cfg.num_files(),
        });
    }
    let idx = lib.idx();
    let (kw, ks) = (cfg.num_weak(), cfg.num_strong());
    let allocation = time_allocation(cfg, idx, lib.rate())?;
    let packets = packet_budgets(&allocation, lib.channel_uses())?;
    let mut budget = packets.into_iter();
    let mut messages = Vec::new();

    for msg in &allocation.messages {
        let t = msg.index;
        let i = msg.level;
        for (jn, sub) in msg.sub_messages.iter().enumerate() {
            let j = jn + 1;
            match msg.role {
                MessageRole::WeakMulticast => {
                    let operands = xor_operands(demands, i, &sub.subset);
                    let bits = xor_all(operands.iter().map(|o| lib.piece(o)));
                    messages.push(CodedMessage {
                        message: t,
                        sub_message: j,
                        period: 1,
                        level: i,
                        subset: sub.subset.clone(),
                        packets: budget.next().expect("one budget per period"),
                        payload: Payload::WeakMulticast { operands, bits },
                    });
                }
                MessageRole::JointEncoding => {
                    let operands = xor_operands(demands, i, &sub.subset);
                    let pieces: Vec<Bits> = operands.iter().map(|o| lib.piece(o)).collect();
                    let piece_bits = lib.level(i).piece_bits;
                    for m in 1..=ks {
                        let chunk = chunk_range(piece_bits, ks, m);
                        let weak_bits =
                            xor_all(pieces.iter().map(|p| p[chunk.clone()].to_bitvec()));
                        let strong_receiver = kw + m;
                        let strong_piece =
                            PieceId::new(demands.of(strong_receiver), i + 1, sub.subset.clone());
                        let strong_bits = lib.piece(&strong_piece);
                        messages.push(CodedMessage {
                            message: t,
                            sub_message: j,
                            period: m,
                            level: i,
                            subset: sub.subset.clone(),
                            packets: budget.next().expect("one budget per period"),
                            payload: Payload::JointBlock {
                                operands: operands.clone(),
                                chunk,
                                weak_bits,
                                strong_receiver,
                                strong_piece,
                                strong_bits,
                            },
                        });
                    }
                }
                MessageRole::StrongUnicast => {
                    let receiver = sub.strong_receiver.expect("unicasts name their receiver");
                    let file = demands.of(receiver);
                    messages.push(CodedMessage {
                        message: t,
                        sub_message: j,
                        period: 1,
                        level: i,
                        subset: Subset::empty(),
                        packets: budget.next().expect("one budget per period"),
                        payload: Payload::StrongUnicast {
                            receiver,
                            file,
                            level: i,
                            bits: lib.subfile(file, i),
                        },
                    });
                }
            }
        }
    }

    Ok(DeliveryPlan {
        idx,
        demands: demands.clone(),
        channel_uses: lib.channel_uses(),
        allocation,
        messages,
        num_weak: kw,
        num_strong: ks,
    })
}

/// Which coded messages each receiver decoded, indexed by receiver and by
/// position in [`DeliveryPlan::messages`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReceptionFlags {
    flags: Vec<Vec<bool>>,
}

impl ReceptionFlags {
    /// Every receiver decodes every message.
    pub fn all_delivered(plan: &DeliveryPlan) -> Self {
        let k = plan.num_weak + plan.num_strong;
        Self {
            flags: vec![vec![true; plan.messages.len()]; k],
        }
    }

    pub fn from_rows(flags: Vec<Vec<bool>>) -> Self {
        Self { flags }
    }

    /// Receiver `k` (1-based), message position `pos`.
    pub fn get(&self, k: usize, pos: usize) -> bool {
        self.flags[k - 1][pos]
    }

    pub fn set(&mut self, k: usize, pos: usize, value: bool) {
        self.flags[k - 1][pos] = value;
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.flags
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverOutcome {
    pub receiver: usize,
    pub file: usize,
    /// `None` when some needed payload was not delivered.
    pub recovered: Option<Bits>,
    /// Recovered bits equal the demanded file exactly.
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodingResult {
    pub receivers: Vec<ReceiverOutcome>,
}

impl DecodingResult {
    pub fn all_succeeded(&self) -> bool {
        self.receivers.iter().all(|r| r.success)
    }

    pub fn failed(&self) -> impl Iterator<Item = usize> + '_ {
        self.receivers.iter().filter(|r| !r.success).map(|r| r.receiver)
    }
}

/// Reconstructs every demanded file from caches and delivered payloads. The
/// library is consulted only for the bit layout and the final comparison.
pub fn decode(
    cfg: &SystemConfig,
    lib: &Library,
    caches: &[CacheContents],
    plan: &DeliveryPlan,
    received: &ReceptionFlags,
) -> DecodingResult {
    let receivers = (1..=cfg.num_receivers())
        .map(|k| {
            let file = plan.demands.of(k);
            let recovered = if cfg.is_weak(k) {
                decode_weak(lib, &caches[k - 1], plan, received, k)
            } else {
                decode_strong(lib, plan, received, k)
            };
            let success = recovered.as_ref().is_some_and(|bits| bits == lib.file(file));
            ReceiverOutcome {
                receiver: k,
                file,
                recovered,
                success,
            }
        })
        .collect();
    DecodingResult { receivers }
}

fn decode_weak(
    lib: &Library,
    cache: &CacheContents,
    plan: &DeliveryPlan,
    received: &ReceptionFlags,
    k: usize,
) -> Option<Bits> {
    let kw = plan.num_weak;
    let d = plan.demands.of(k);
    let mut out = Bits::with_capacity(lib.file_bits());
    for l in lib.levels() {
        let i = l.level;
        let mut subfile = Bits::with_capacity(l.num_pieces as usize * l.piece_bits);
        for s in subsets(kw, i) {
            let piece = if s.contains(k) {
                cache.get(&PieceId::new(d, i, s))?.clone()
            } else {
                recover_weak_piece(plan, cache, received, k, i, &s.with(k))?
            };
            subfile.extend_from_bitslice(&piece);
        }
        subfile.truncate(l.len);
        out.extend_from_bitslice(&subfile);
    }
    Some(out)
}

/// Strips the cached operands from the XOR addressed to `t` and keeps what
/// receiver `k` is missing.
fn recover_weak_piece(
    plan: &DeliveryPlan,
    cache: &CacheContents,
    received: &ReceptionFlags,
    k: usize,
    i: usize,
    t: &Subset,
) -> Option<Bits> {
    let j = index_of_subset(plan.num_weak, t.as_slice()).ok()? as usize;
    let message = plan.idx.q() - i + 1;
    let mut piece = Bits::new();
    for m in 1..=plan.periods_of(message) {
        let pos = plan.position(message, j, m)?;
        if !received.get(k, pos) {
            return None;
        }
        let (operands, chunk, payload) = match &plan.messages[pos].payload {
            Payload::WeakMulticast { operands, bits } => (operands, None, bits),
            Payload::JointBlock {
                operands,
                chunk,
                weak_bits,
                ..
            } => (operands, Some(chunk.clone()), weak_bits),
            Payload::StrongUnicast { .. } => return None,
        };
        let mut acc = payload.clone();
        for op in operands.iter().filter(|op| op.subset.contains(k)) {
            let cached = cache.get(op)?;
            match &chunk {
                Some(c) => xor_into(&mut acc, &cached[c.clone()]),
                None => xor_into(&mut acc, cached),
            }
        }
        if let Some(c) = &chunk {
            acc.resize(c.len(), false);
        }
        piece.extend_from_bitslice(&acc);
    }
    Some(piece)
}

fn decode_strong(
    lib: &Library,
    plan: &DeliveryPlan,
    received: &ReceptionFlags,
    k: usize,
) -> Option<Bits> {
    let (p, q) = (plan.idx.p(), plan.idx.q());
    let m = k - plan.num_weak;
    let mut out = Bits::with_capacity(lib.file_bits());
    for l in lib.levels() {
        let i = l.level;
        if i == p {
            let pos = plan.position(q - p + 2, m, 1)?;
            if !received.get(k, pos) {
                return None;
            }
            match &plan.messages[pos].payload {
                Payload::StrongUnicast { bits, .. } => out.extend_from_bitslice(bits),
                _ => return None,
            }
        } else {
            // level i arrives with the joint blocks of message q - i + 2
            let message = q - i + 2;
            let mut subfile = Bits::with_capacity(l.num_pieces as usize * l.piece_bits);
            for j in 1..=l.num_pieces as usize {
                let pos = plan.position(message, j, m)?;
                if !received.get(k, pos) {
                    return None;
                }
                match &plan.messages[pos].payload {
                    Payload::JointBlock { strong_bits, .. } => {
                        subfile.extend_from_bitslice(strong_bits)
                    }
                    _ => return None,
                }
            }
            subfile.truncate(l.len);
            out.extend_from_bitslice(&subfile);
        }
    }
    Some(out)
}
