//! Binomial coefficients and the lexicographic enumeration of the
//! `i`-element subsets of the weak receivers `{1, ..., K_w}`.
//!
//! Subsets are ranked 1-based in lexicographic order of their sorted element
//! lists, so for `K_w = 3, i = 2` the order is `{1,2}, {1,3}, {2,3}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CombinatoricsError {
    #[error("subset rank {index} is outside 1..={count} for {size}-subsets of {ground}")]
    IndexOutOfRange {
        ground: usize,
        size: usize,
        index: u64,
        count: u64,
    },
    #[error("{elements:?} is not a subset of 1..={ground}")]
    NotASubset { ground: usize, elements: Vec<usize> },
}

/// Binomial coefficient `n choose k`; zero when `k > n`.
///
/// Exact for every `n <= 64`. Panics if the result does not fit in `u64`.
pub fn binom(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for t in 0..k {
        // acc * (n - t) is divisible by (t + 1) at every step
        acc = acc * (n - t) as u128 / (t + 1) as u128;
    }
    u64::try_from(acc).expect("binomial coefficient overflows u64")
}

/// `binom` as a float, for the rate formulas.
pub(crate) fn binom_f(n: usize, k: usize) -> f64 {
    binom(n, k) as f64
}

/// A sorted set of 1-based receiver indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Subset(Vec<usize>);

impl Subset {
    /// Builds a subset from arbitrary elements; sorts and removes duplicates.
    pub fn from_elements(elements: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = elements.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Subset(v)
    }

    pub fn empty() -> Self {
        Subset(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.0.binary_search(&k).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn largest(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// Smallest element, i.e. the receiver with the worst channel.
    pub fn smallest(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn without(&self, k: usize) -> Subset {
        Subset(self.0.iter().copied().filter(|&x| x != k).collect())
    }

    pub fn with(&self, k: usize) -> Subset {
        Subset::from_elements(self.0.iter().copied().chain(std::iter::once(k)))
    }
}

impl std::fmt::Display for Subset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (n, k) in self.0.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, "}}")
    }
}

/// The `index`-th (1-based) `size`-element subset of `1..=ground`.
pub fn subset_by_index(ground: usize, size: usize, index: u64) -> Result<Subset, CombinatoricsError> {
    let count = binom(ground, size);
    if index == 0 || index > count {
        return Err(CombinatoricsError::IndexOutOfRange {
            ground,
            size,
            index,
            count,
        });
    }
    let mut rest = index - 1;
    let mut out = Vec::with_capacity(size);
    let mut next = 1;
    while out.len() < size {
        let remaining = size - out.len();
        // subsets whose next element is `next`
        let block = binom(ground - next, remaining - 1);
        if rest < block {
            out.push(next);
        } else {
            rest -= block;
        }
        next += 1;
    }
    Ok(Subset(out))
}

/// Inverse of [`subset_by_index`].
pub fn index_of_subset(ground: usize, elements: &[usize]) -> Result<u64, CombinatoricsError> {
    let ok = elements.windows(2).all(|w| w[0] < w[1])
        && elements.iter().all(|&k| (1..=ground).contains(&k));
    if !ok {
        return Err(CombinatoricsError::NotASubset {
            ground,
            elements: elements.to_vec(),
        });
    }
    let size = elements.len();
    let mut rank = 0u64;
    let mut prev = 0;
    for (pos, &k) in elements.iter().enumerate() {
        let remaining = size - pos;
        for skipped in prev + 1..k {
            rank += binom(ground - skipped, remaining - 1);
        }
        prev = k;
    }
    Ok(rank + 1)
}

/// All `size`-element subsets of `1..=ground` in lexicographic order.
pub fn subsets(ground: usize, size: usize) -> Subsets {
    Subsets {
        ground,
        current: (size <= ground).then(|| (1..=size).collect()),
    }
}

/// Iterator returned by [`subsets`].
#[derive(Debug, Clone)]
pub struct Subsets {
    ground: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for Subsets {
    type Item = Subset;

    fn next(&mut self) -> Option<Subset> {
        let cur = self.current.take()?;
        let out = Subset(cur.clone());
        let size = cur.len();
        let mut next = cur;
        let mut pos = size;
        while pos > 0 {
            let limit = self.ground - (size - pos);
            if next[pos - 1] < limit {
                next[pos - 1] += 1;
                for t in pos..size {
                    next[t] = next[t - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
            pos -= 1;
        }
        Some(out)
    }
}
