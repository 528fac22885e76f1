//! Network configuration and the small value types shared by every module.
//!
//! Receivers are numbered `1..=K` in order of improving channel quality, so
//! the erasure list must already be non-increasing. The first `num_weak`
//! receivers carry caches; the remaining `num_strong` do not.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used for every real-valued comparison in the crate.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("at least one weak receiver is required")]
    NoWeakReceivers,
    #[error("packet_bits must be positive")]
    ZeroPacketBits,
    #[error("expected {expected} erasure probabilities (num_weak + num_strong), got {got}")]
    ErasureCount { expected: usize, got: usize },
    #[error("erasure probability {value} of receiver {receiver} is not a probability")]
    InvalidErasure { receiver: usize, value: f64 },
    #[error("receiver {receiver} has erasure probability {value} and can never decode")]
    DegenerateErasure { receiver: usize, value: f64 },
    #[error(
        "erasure probabilities must be non-increasing: receiver {receiver} has {value} > {previous} of receiver {}",
        receiver - 1
    )]
    NonMonotoneErasures { receiver: usize, value: f64, previous: f64 },
    #[error("{num_files} files cannot serve {receivers} receivers (need num_files >= K)")]
    TooFewFiles { num_files: usize, receivers: usize },
    #[error("homogeneous scenario needs delta_strong < delta_weak, got {delta_strong} >= {delta_weak}")]
    StrongNotBetter { delta_weak: f64, delta_strong: f64 },
    #[error("scheme index (p={p}, q={q}) violates 0 <= p <= q <= {num_weak}")]
    InvalidSchemeIndex { p: usize, q: usize, num_weak: usize },
    #[error("demand vector has {got} entries for {expected} receivers")]
    DemandLength { expected: usize, got: usize },
    #[error("receiver {receiver} demands file {file}, outside 1..={num_files}")]
    DemandOutOfRange { receiver: usize, file: usize, num_files: usize },
    #[error("malformed configuration: {0}")]
    Parse(String),
}

/// A validated network: `K_w` weak and `K_s` strong receivers, `N` files,
/// `F`-bit packets and one erasure probability per receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfigFile")]
pub struct SystemConfig {
    num_weak: usize,
    num_strong: usize,
    num_files: usize,
    packet_bits: u32,
    erasures: Vec<f64>,
}

impl SystemConfig {
    pub fn new(
        num_weak: usize,
        num_strong: usize,
        num_files: usize,
        packet_bits: u32,
        erasures: Vec<f64>,
    ) -> Result<Self, ConfigError> {
        if num_weak == 0 {
            return Err(ConfigError::NoWeakReceivers);
        }
        if packet_bits == 0 {
            return Err(ConfigError::ZeroPacketBits);
        }
        let receivers = num_weak + num_strong;
        if erasures.len() != receivers {
            return Err(ConfigError::ErasureCount {
                expected: receivers,
                got: erasures.len(),
            });
        }
        for (k, &value) in erasures.iter().enumerate() {
            let receiver = k + 1;
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::InvalidErasure { receiver, value });
            }
            if value == 1.0 {
                return Err(ConfigError::DegenerateErasure { receiver, value });
            }
            if k > 0 && value > erasures[k - 1] {
                return Err(ConfigError::NonMonotoneErasures {
                    receiver,
                    value,
                    previous: erasures[k - 1],
                });
            }
        }
        if num_files < receivers {
            return Err(ConfigError::TooFewFiles {
                num_files,
                receivers,
            });
        }
        Ok(Self {
            num_weak,
            num_strong,
            num_files,
            packet_bits,
            erasures,
        })
    }

    /// Parses the JSON config format (explicit erasure list or the
    /// `delta_weak`/`delta_strong` shorthand).
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        file.validate()
    }

    pub fn num_weak(&self) -> usize {
        self.num_weak
    }

    pub fn num_strong(&self) -> usize {
        self.num_strong
    }

    /// Total number of receivers `K`.
    pub fn num_receivers(&self) -> usize {
        self.num_weak + self.num_strong
    }

    pub fn num_files(&self) -> usize {
        self.num_files
    }

    pub fn packet_bits(&self) -> u32 {
        self.packet_bits
    }

    pub fn erasures(&self) -> &[f64] {
        &self.erasures
    }

    /// Erasure probability of receiver `k` (1-based).
    pub fn erasure(&self, k: usize) -> f64 {
        self.erasures[k - 1]
    }

    pub fn is_weak(&self, k: usize) -> bool {
        (1..=self.num_weak).contains(&k)
    }

    /// `sum over strong receivers of 1/(1 - delta)`.
    pub fn strong_inverse_sum(&self) -> f64 {
        self.erasures[self.num_weak..]
            .iter()
            .map(|d| 1.0 / (1.0 - d))
            .sum()
    }

    /// `(delta_weak, delta_strong)` when every weak receiver shares one
    /// erasure probability, every strong receiver shares another, and the
    /// strong one is strictly smaller.
    pub fn homogeneous(&self) -> Option<(f64, f64)> {
        if self.num_strong == 0 {
            return None;
        }
        let (weak, strong) = self.erasures.split_at(self.num_weak);
        let dw = weak[0];
        let ds = strong[0];
        let uniform = weak.iter().all(|&d| d == dw) && strong.iter().all(|&d| d == ds);
        (uniform && ds < dw).then_some((dw, ds))
    }

    /// Same network with a different packet size.
    pub fn with_packet_bits(&self, packet_bits: u32) -> Result<Self, ConfigError> {
        Self::new(
            self.num_weak,
            self.num_strong,
            self.num_files,
            packet_bits,
            self.erasures.clone(),
        )
    }
}

/// Homogeneous scenario: all weak receivers erase with `delta_weak`, all
/// strong ones with `delta_strong < delta_weak`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousConfig {
    pub num_weak: usize,
    pub num_strong: usize,
    pub num_files: usize,
    pub packet_bits: u32,
    pub delta_weak: f64,
    pub delta_strong: f64,
}

impl HomogeneousConfig {
    pub fn new(
        num_weak: usize,
        num_strong: usize,
        num_files: usize,
        packet_bits: u32,
        delta_weak: f64,
        delta_strong: f64,
    ) -> Result<Self, ConfigError> {
        let hcfg = Self {
            num_weak,
            num_strong,
            num_files,
            packet_bits,
            delta_weak,
            delta_strong,
        };
        hcfg.expand()?;
        Ok(hcfg)
    }

    /// `K_w` copies of `delta_weak` followed by `K_s` copies of `delta_strong`.
    pub fn expand(&self) -> Result<SystemConfig, ConfigError> {
        if self.num_strong > 0 && self.delta_strong >= self.delta_weak {
            return Err(ConfigError::StrongNotBetter {
                delta_weak: self.delta_weak,
                delta_strong: self.delta_strong,
            });
        }
        let mut erasures = vec![self.delta_weak; self.num_weak];
        erasures.extend(std::iter::repeat_n(self.delta_strong, self.num_strong));
        SystemConfig::new(
            self.num_weak,
            self.num_strong,
            self.num_files,
            self.packet_bits,
            erasures,
        )
    }
}

/// On-disk configuration: either an explicit erasure list or the
/// homogeneous shorthand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigFile {
    Explicit {
        num_weak: usize,
        num_strong: usize,
        num_files: usize,
        packet_bits: u32,
        erasures: Vec<f64>,
    },
    Homogeneous(HomogeneousConfig),
}

impl ConfigFile {
    pub fn validate(self) -> Result<SystemConfig, ConfigError> {
        match self {
            ConfigFile::Explicit {
                num_weak,
                num_strong,
                num_files,
                packet_bits,
                erasures,
            } => SystemConfig::new(num_weak, num_strong, num_files, packet_bits, erasures),
            ConfigFile::Homogeneous(h) => h.expand(),
        }
    }
}

impl TryFrom<ConfigFile> for SystemConfig {
    type Error = ConfigError;

    fn try_from(file: ConfigFile) -> Result<Self, Self::Error> {
        file.validate()
    }
}

/// The `(p, q)` pair selecting which subfile levels the scheme uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SchemeIndex {
    p: usize,
    q: usize,
}

impl SchemeIndex {
    pub fn new(p: usize, q: usize, num_weak: usize) -> Result<Self, ConfigError> {
        if p > q || q > num_weak {
            return Err(ConfigError::InvalidSchemeIndex { p, q, num_weak });
        }
        Ok(Self { p, q })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Subfile levels `p..=q`.
    pub fn levels(&self) -> std::ops::RangeInclusive<usize> {
        self.p..=self.q
    }

    /// Number of delivery messages, `q - p + 2`.
    pub fn num_messages(&self) -> usize {
        self.q - self.p + 2
    }

    pub fn check(&self, cfg: &SystemConfig) -> Result<(), ConfigError> {
        Self::new(self.p, self.q, cfg.num_weak()).map(|_| ())
    }

    /// Every index with `0 <= p <= q <= num_weak`, ordered by `(p, q)`.
    pub fn all(num_weak: usize) -> impl Iterator<Item = SchemeIndex> {
        (0..=num_weak).flat_map(move |p| (p..=num_weak).map(move |q| SchemeIndex { p, q }))
    }
}

impl std::fmt::Display for SchemeIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.p, self.q)
    }
}

/// An `(M, R)` point: normalized cache size per weak receiver and file rate
/// in bits per channel use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryRatePair {
    pub memory: f64,
    pub rate: f64,
}

/// One requested file per receiver, 1-based file indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandVector(Vec<usize>);

impl DemandVector {
    pub fn new(cfg: &SystemConfig, demands: Vec<usize>) -> Result<Self, ConfigError> {
        if demands.len() != cfg.num_receivers() {
            return Err(ConfigError::DemandLength {
                expected: cfg.num_receivers(),
                got: demands.len(),
            });
        }
        for (k, &file) in demands.iter().enumerate() {
            if file == 0 || file > cfg.num_files() {
                return Err(ConfigError::DemandOutOfRange {
                    receiver: k + 1,
                    file,
                    num_files: cfg.num_files(),
                });
            }
        }
        Ok(Self(demands))
    }

    /// Receiver `k` asks for file `k`.
    pub fn all_distinct(cfg: &SystemConfig) -> Self {
        Self((1..=cfg.num_receivers()).collect())
    }

    /// Every receiver asks for file 1.
    pub fn all_equal(cfg: &SystemConfig) -> Self {
        Self(vec![1; cfg.num_receivers()])
    }

    /// File demanded by receiver `k` (1-based).
    pub fn of(&self, k: usize) -> usize {
        self.0[k - 1]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}
