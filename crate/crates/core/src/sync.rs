//! Correlation against offset hypotheses and the maximum-peak search.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::channel::ChipCounts;
use crate::sequence::{bipolar, SyncSequence};
use crate::{Error, Result};

/// Default half-width of the search window in symbols beyond the last side
/// peak considered by the bounds (`m_max + 1` with `m_max = 10`).
pub const DEFAULT_WINDOW_SYMBOLS: i64 = 11;

/// Hypothesis offset `m + k/n` symbols from the true start, stored with
/// `k` in `[0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OffsetIndex {
    pub m: i64,
    pub k: i64,
}

impl OffsetIndex {
    pub const ZERO: OffsetIndex = OffsetIndex { m: 0, k: 0 };

    /// Normalizes any `(m, k)` pair so that `0 <= k < n`.
    pub fn new(m: i64, k: i64, n: usize) -> Self {
        Self::from_chips(m * n as i64 + k, n)
    }

    pub fn from_chips(chips: i64, n: usize) -> Self {
        let n = n as i64;
        OffsetIndex {
            m: chips.div_euclid(n),
            k: chips.rem_euclid(n),
        }
    }

    pub fn chips(&self, n: usize) -> i64 {
        self.m * n as i64 + self.k
    }

    /// Offset in symbol durations.
    pub fn time(&self, n: usize) -> f64 {
        self.m as f64 + self.k as f64 / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrelationValue {
    pub value: i64,
    pub offset: OffsetIndex,
}

/// `Σ_i bip[i] · (counts of the n chips of symbol i)` for a window starting
/// at `start_chip`.
pub fn correlate(
    chips: &ChipCounts,
    bip: &[i64],
    chips_per_symbol: usize,
    start_chip: i64,
) -> Result<CorrelationValue> {
    let n = chips_per_symbol;
    let end = start_chip + (bip.len() * n) as i64;
    if start_chip < 0 || end > chips.len() as i64 {
        return Err(Error::Window {
            start: start_chip,
            end,
            len: chips.len(),
        });
    }
    let s = start_chip as usize;
    let value = bip
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let sym: i64 = chips.counts[s + i * n..s + (i + 1) * n]
                .iter()
                .map(|&c| c as i64)
                .sum();
            b * sym
        })
        .sum();
    Ok(CorrelationValue {
        value,
        offset: OffsetIndex::from_chips(start_chip - chips.origin_chip as i64, n),
    })
}

/// Evaluates many window positions on one frame through chip prefix sums.
pub struct Correlator<'a> {
    prefix: Vec<i64>,
    bip: &'a [i64],
    n: usize,
    origin: i64,
}

impl<'a> Correlator<'a> {
    pub fn new(chips: &ChipCounts, bip: &'a [i64], chips_per_symbol: usize) -> Self {
        let mut prefix = Vec::with_capacity(chips.len() + 1);
        let mut acc = 0i64;
        prefix.push(0);
        for &c in &chips.counts {
            acc += c as i64;
            prefix.push(acc);
        }
        Correlator {
            prefix,
            bip,
            n: chips_per_symbol,
            origin: chips.origin_chip as i64,
        }
    }

    fn in_range(&self, start: i64) -> bool {
        start >= 0 && start as usize + self.bip.len() * self.n < self.prefix.len()
    }

    /// Correlation with the window starting `offset_chips` after the origin.
    pub fn at_offset(&self, offset_chips: i64) -> Result<i64> {
        self.at_start(self.origin + offset_chips)
    }

    pub fn at_start(&self, start: i64) -> Result<i64> {
        if !self.in_range(start) {
            return Err(Error::Window {
                start,
                end: start + (self.bip.len() * self.n) as i64,
                len: self.prefix.len() - 1,
            });
        }
        let s = start as usize;
        let n = self.n;
        Ok(self
            .bip
            .iter()
            .enumerate()
            .map(|(i, &b)| b * (self.prefix[s + (i + 1) * n] - self.prefix[s + i * n]))
            .sum())
    }
}

/// Peak search result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncEstimate {
    pub start_chip: i64,
    pub offset: OffsetIndex,
    pub value: i64,
}

impl SyncEstimate {
    /// Estimated start relative to the chip-grid origin, in symbols.
    pub fn time(&self, n: usize) -> f64 {
        self.offset.time(n)
    }
}

/// Default window: `±DEFAULT_WINDOW_SYMBOLS` symbols around the origin chip.
pub fn default_window(origin_chip: usize, chips_per_symbol: usize) -> Range<i64> {
    let half = DEFAULT_WINDOW_SYMBOLS * chips_per_symbol as i64;
    let o = origin_chip as i64;
    (o - half)..(o + half + 1)
}

/// Arg-max of the correlation over `window` (absolute start chips).
///
/// The first position is summed directly; every later one is an exact
/// integer update touching only the chips where the window's bipolar weight
/// changes. Ties go to the earliest chip.
pub fn synchronize(
    chips: &ChipCounts,
    seq: &SyncSequence,
    chips_per_symbol: usize,
    window: Range<i64>,
) -> Result<SyncEstimate> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let n = chips_per_symbol;
    let bip = bipolar(seq);
    let span = (bip.len() * n) as i64;
    let last_end = window.end - 1 + span;
    if window.start < 0 || last_end > chips.len() as i64 {
        return Err(Error::Window {
            start: window.start,
            end: last_end,
            len: chips.len(),
        });
    }

    // Moving the window one chip right drops chip `t` (weight bip[0]), adds
    // chip `t + L n` (weight bip[L-1]) and moves chip `t + i n` from symbol
    // i-1 to symbol i.
    let mut deltas: Vec<(usize, i64)> = Vec::with_capacity(bip.len() + 1);
    deltas.push((0, -bip[0]));
    for i in 1..bip.len() {
        let w = bip[i - 1] - bip[i];
        if w != 0 {
            deltas.push((i * n, w));
        }
    }
    deltas.push((bip.len() * n, bip[bip.len() - 1]));

    let counts = &chips.counts;
    let mut current = correlate(chips, &bip, n, window.start)?.value;
    let mut best = (window.start, current);
    for t in window.start..window.end - 1 {
        let base = t as usize;
        current += deltas
            .iter()
            .map(|&(off, w)| w * counts[base + off] as i64)
            .sum::<i64>();
        if current > best.1 {
            best = (t + 1, current);
        }
    }
    Ok(SyncEstimate {
        start_chip: best.0,
        offset: OffsetIndex::from_chips(best.0 - chips.origin_chip as i64, n),
        value: best.1,
    })
}
