//! Sets of disjoint half-open byte ranges.

use std::collections::BTreeMap;
use std::ops::Range;

/// A set of byte offsets stored as disjoint, non-adjacent half-open ranges.
///
/// Inserting a range that touches or overlaps existing ones coalesces them,
/// so iteration always yields the minimal sorted cover.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RangeSet {
    // start -> end
    spans: BTreeMap<u64, u64>,
}

impl RangeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Number of disjoint spans.
    pub fn span_count(&self) -> usize {
        self.spans.len()
    }

    /// Total number of bytes covered.
    pub fn covered(&self) -> u64 {
        self.spans.iter().map(|(s, e)| e - s).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = Range<u64>> + '_ {
        self.spans.iter().map(|(&s, &e)| s..e)
    }

    pub fn first(&self) -> Option<Range<u64>> {
        self.spans.iter().next().map(|(&s, &e)| s..e)
    }

    /// Largest covered end offset, if any.
    pub fn max_end(&self) -> Option<u64> {
        self.spans.iter().next_back().map(|(_, &e)| e)
    }

    /// Inserts `range`, returning the number of bytes that were not already present.
    pub fn insert(&mut self, range: Range<u64>) -> u64 {
        if range.start >= range.end {
            return 0;
        }
        let mut start = range.start;
        let mut end = range.end;
        let mut already = 0;

        // A span starting before `start` may reach into (or touch) the new range.
        if let Some((&s, &e)) = self.spans.range(..start).next_back() {
            if e >= start {
                already += e.min(end) - start;
                start = s;
                end = end.max(e);
                self.spans.remove(&s);
            }
        }
        let absorbed: Vec<(u64, u64)> = self
            .spans
            .range(start..=end)
            .map(|(&s, &e)| (s, e))
            .collect();
        for (s, e) in absorbed {
            already += e.min(range.end).saturating_sub(s.max(range.start));
            end = end.max(e);
            self.spans.remove(&s);
        }
        self.spans.insert(start, end);
        (range.end - range.start) - already
    }

    /// Removes `range` from the set, returning the number of bytes removed.
    pub fn remove(&mut self, range: Range<u64>) -> u64 {
        if range.start >= range.end {
            return 0;
        }
        let mut removed = 0;
        let mut reinsert = Vec::new();
        let lower = self
            .spans
            .range(..range.start)
            .next_back()
            .map(|(&s, _)| s)
            .unwrap_or(range.start);
        let hit: Vec<(u64, u64)> = self
            .spans
            .range(lower..range.end)
            .filter(|(_, &e)| e > range.start)
            .map(|(&s, &e)| (s, e))
            .collect();
        for (s, e) in hit {
            self.spans.remove(&s);
            removed += e.min(range.end) - s.max(range.start);
            if s < range.start {
                reinsert.push((s, range.start));
            }
            if e > range.end {
                reinsert.push((range.end, e));
            }
        }
        for (s, e) in reinsert {
            self.spans.insert(s, e);
        }
        removed
    }

    /// True if every byte of `range` is in the set.
    pub fn contains_range(&self, range: Range<u64>) -> bool {
        if range.start >= range.end {
            return true;
        }
        match self.spans.range(..=range.start).next_back() {
            Some((_, &e)) => e >= range.end,
            None => false,
        }
    }

    /// True if any byte of `range` is in the set.
    pub fn intersects(&self, range: Range<u64>) -> bool {
        if range.start >= range.end {
            return false;
        }
        if let Some((_, &e)) = self.spans.range(..=range.start).next_back() {
            if e > range.start {
                return true;
            }
        }
        self.spans.range(range.start..range.end).next().is_some()
    }

    /// Sub-ranges of `range` not yet in the set.
    pub fn gaps_within(&self, range: Range<u64>) -> Vec<Range<u64>> {
        let mut out = Vec::new();
        if range.start >= range.end {
            return out;
        }
        let mut cursor = range.start;
        let lower = self
            .spans
            .range(..range.start)
            .next_back()
            .map(|(&s, _)| s)
            .unwrap_or(range.start);
        for (&s, &e) in self.spans.range(lower..range.end) {
            if e <= cursor {
                continue;
            }
            if s > cursor {
                out.push(cursor..s);
            }
            cursor = cursor.max(e);
            if cursor >= range.end {
                break;
            }
        }
        if cursor < range.end {
            out.push(cursor..range.end);
        }
        out
    }

    /// Length of the contiguous prefix starting at offset 0.
    pub fn contiguous_prefix(&self) -> u64 {
        match self.spans.get(&0) {
            Some(&e) => e,
            None => 0,
        }
    }

    /// Ranges of `[0, len)` not covered by the set, in ascending order.
    pub fn complement(&self, len: u64) -> Vec<Range<u64>> {
        let mut out = Vec::new();
        let mut cursor = 0;
        for (&s, &e) in &self.spans {
            if s >= len {
                break;
            }
            if s > cursor {
                out.push(cursor..s);
            }
            cursor = cursor.max(e);
        }
        if cursor < len {
            out.push(cursor..len);
        }
        out
    }

    /// Removes and returns up to `max` bytes from the front of the lowest span.
    pub fn pop_front(&mut self, max: u64) -> Option<Range<u64>> {
        let (&s, &e) = self.spans.iter().next()?;
        self.spans.remove(&s);
        let take_end = e.min(s.saturating_add(max.max(1)));
        if take_end < e {
            self.spans.insert(take_end, e);
        }
        Some(s..take_end)
    }
}

impl FromIterator<Range<u64>> for RangeSet {
    fn from_iter<I: IntoIterator<Item = Range<u64>>>(iter: I) -> Self {
        let mut set = RangeSet::new();
        for r in iter {
            set.insert(r);
        }
        set
    }
}
