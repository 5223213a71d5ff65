use std::ops::Range;

use thiserror::Error;

use super::Hole;
use crate::ranges::RangeSet;

/// Sorted, disjoint, non-empty missing ranges of an object.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HoleList(Vec<Hole>);

impl HoleList {
    pub fn holes(&self) -> &[Hole] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn missing_bytes(&self) -> u64 {
        self.0.iter().map(Hole::len).sum()
    }

    pub fn into_vec(self) -> Vec<Hole> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HoleError {
    #[error("received range {start}..{end} exceeds object length {object_len}")]
    OutOfBounds { start: u64, end: u64, object_len: u64 },
}

/// Complement of `received` within `[0, object_len)`.
pub fn compute_holes(received: &RangeSet, object_len: u64) -> Result<HoleList, HoleError> {
    if let Some(end) = received.max_end() {
        if end > object_len {
            let Range { start, end } = received.iter().last().unwrap();
            return Err(HoleError::OutOfBounds {
                start,
                end,
                object_len,
            });
        }
    }
    Ok(HoleList(
        received.complement(object_len).into_iter().map(Hole::from).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Byte-by-byte complement, independent of RangeSet::complement.
    fn oracle(received: &[Range<u64>], len: u64) -> Vec<Hole> {
        let mut have = vec![false; len as usize];
        for r in received {
            for i in r.clone() {
                have[i as usize] = true;
            }
        }
        let mut holes = Vec::new();
        let mut start = None;
        for i in 0..=len {
            let missing = i < len && !have[i as usize];
            match (missing, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    holes.push(Hole::new(s, i));
                    start = None;
                }
                _ => {}
            }
        }
        holes
    }

    #[test]
    fn examples() {
        let rx: RangeSet = [0..100, 200..300].into_iter().collect();
        assert_eq!(
            compute_holes(&rx, 400).unwrap().holes(),
            &[Hole::new(100, 200), Hole::new(300, 400)]
        );
        assert_eq!(oracle(&[0..100, 200..300], 400), vec![Hole::new(100, 200), Hole::new(300, 400)]);

        let full: RangeSet = std::iter::once(0..400).collect();
        assert!(compute_holes(&full, 400).unwrap().is_empty());

        assert_eq!(compute_holes(&RangeSet::new(), 400).unwrap().holes(), &[Hole::new(0, 400)]);
        assert!(compute_holes(&RangeSet::new(), 0).unwrap().is_empty());
    }

    #[test]
    fn out_of_bounds() {
        let rx: RangeSet = [0..100, 350..450].into_iter().collect();
        assert_eq!(
            compute_holes(&rx, 400),
            Err(HoleError::OutOfBounds {
                start: 350,
                end: 450,
                object_len: 400
            })
        );
    }

    fn disjoint_ranges(len: u64) -> impl Strategy<Value = Vec<Range<u64>>> {
        proptest::collection::vec((0..len, 0..len), 0..12).prop_map(move |pts| {
            let mut cuts: Vec<u64> = pts.into_iter().flat_map(|(a, b)| [a, b]).collect();
            cuts.sort_unstable();
            cuts.dedup();
            cuts.chunks_exact(2).map(|c| c[0]..c[1]).collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn complement_partition((len, received) in (1u64..600).prop_flat_map(|len| (Just(len), disjoint_ranges(len)))) {
            let set: RangeSet = received.iter().cloned().collect();
            let holes = compute_holes(&set, len).unwrap();
            let expected = oracle(&received, len);
            prop_assert_eq!(holes.holes(), expected.as_slice());
            // Union covers [0, len) with no overlap.
            prop_assert_eq!(set.covered() + holes.missing_bytes(), len);
            for h in holes.holes() {
                prop_assert!(h.start < h.end && h.end <= len);
                prop_assert!(!set.intersects(h.start..h.end));
            }
            for w in holes.holes().windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
        }
    }
}
