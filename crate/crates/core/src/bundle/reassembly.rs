use std::collections::{HashMap, HashSet};

use log::{debug, warn};
use thiserror::Error;

use super::block::{is_expired, verify_bundle, Bundle, BundleId};
use crate::ranges::RangeSet;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReassemblyKey {
    pub id: BundleId,
    pub total_adu_len: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReassemblyError {
    #[error("bundle is not a fragment")]
    NotAFragment,
    #[error("fragment belongs to a different bundle")]
    KeyMismatch,
    #[error("fragment failed its checksum")]
    ChecksumFailed,
    #[error("fragment carries an unknown checksum suite")]
    UnknownSuite,
    #[error("fragment extends past the total ADU length")]
    OutOfBounds,
}

/// Partially received ADU for one original bundle.
#[derive(Debug, Clone)]
pub struct ReassemblyBuffer {
    key: ReassemblyKey,
    header: Bundle,
    received: RangeSet,
    bytes: Vec<u8>,
    deadline_ts: u64,
    delivered: bool,
}

fn key_of(frag: &Bundle) -> Option<ReassemblyKey> {
    frag.fragment.map(|info| ReassemblyKey {
        id: frag.id(),
        total_adu_len: info.total_adu_len,
    })
}

impl ReassemblyBuffer {
    /// Empty buffer keyed by `frag`.
    pub fn for_fragment(frag: &Bundle) -> Result<Self, ReassemblyError> {
        let key = key_of(frag).ok_or(ReassemblyError::NotAFragment)?;
        let mut header = frag.clone_header();
        header.fragment = None;
        Ok(ReassemblyBuffer {
            bytes: vec![0; key.total_adu_len as usize],
            key,
            header,
            received: RangeSet::new(),
            deadline_ts: frag.expiry_ts(),
            delivered: false,
        })
    }

    pub fn key(&self) -> &ReassemblyKey {
        &self.key
    }

    pub fn received(&self) -> &RangeSet {
        &self.received
    }

    pub fn deadline_ts(&self) -> u64 {
        self.deadline_ts
    }

    pub fn is_delivered(&self) -> bool {
        self.delivered
    }

    /// Merges `frag`. Returns the whole bundle the first time the ADU is
    /// complete; the buffer is left untouched when `frag` is rejected.
    pub fn accept(&mut self, frag: &Bundle) -> Result<Option<Bundle>, ReassemblyError> {
        let key = key_of(frag).ok_or(ReassemblyError::NotAFragment)?;
        if key != self.key {
            return Err(ReassemblyError::KeyMismatch);
        }
        match verify_bundle(frag) {
            Ok(true) => {}
            Ok(false) => return Err(ReassemblyError::ChecksumFailed),
            Err(_) => return Err(ReassemblyError::UnknownSuite),
        }
        let offset = frag.fragment.map(|f| f.offset).unwrap_or(0);
        let end = offset
            .checked_add(frag.payload.len() as u64)
            .filter(|&e| e <= self.key.total_adu_len)
            .ok_or(ReassemblyError::OutOfBounds)?;
        if self.delivered {
            return Ok(None);
        }
        for gap in self.received.gaps_within(offset..end) {
            let src = (gap.start - offset) as usize..(gap.end - offset) as usize;
            self.bytes[gap.start as usize..gap.end as usize].copy_from_slice(&frag.payload[src]);
            self.received.insert(gap);
        }
        if self.received.covered() < self.key.total_adu_len {
            return Ok(None);
        }
        self.delivered = true;
        let mut whole = self.header.clone();
        whole.payload = std::mem::take(&mut self.bytes);
        // Suite was validated above, so resealing cannot fail.
        whole.seal(frag.suite().unwrap_or_default());
        Ok(Some(whole))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReassemblyCounters {
    pub accepted: u64,
    pub rejected: u64,
    pub duplicates_after_delivery: u64,
    pub expired_fragments: u64,
    pub expired_buffers: u64,
    pub delivered: u64,
}

/// All reassembly buffers of one agent, with exactly-once delivery per key.
#[derive(Debug, Default)]
pub struct Reassembler {
    buffers: HashMap<ReassemblyKey, ReassemblyBuffer>,
    delivered: HashSet<ReassemblyKey>,
    counters: ReassemblyCounters,
}

impl Reassembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counters(&self) -> ReassemblyCounters {
        self.counters
    }

    pub fn pending(&self) -> usize {
        self.buffers.len()
    }

    pub fn buffer(&self, key: &ReassemblyKey) -> Option<&ReassemblyBuffer> {
        self.buffers.get(key)
    }

    /// Feeds one fragment at time `now_ts`; returns the reassembled bundle on
    /// the single call that completes it.
    pub fn reassemble(
        &mut self,
        frag: &Bundle,
        now_ts: u64,
    ) -> Result<Option<Bundle>, ReassemblyError> {
        let key = key_of(frag).ok_or(ReassemblyError::NotAFragment)?;
        if self.delivered.contains(&key) {
            self.counters.duplicates_after_delivery += 1;
            return Ok(None);
        }
        if is_expired(frag, now_ts) {
            self.counters.expired_fragments += 1;
            return Ok(None);
        }
        if !self.buffers.contains_key(&key) {
            self.buffers.insert(key.clone(), ReassemblyBuffer::for_fragment(frag)?);
        }
        let buf = self.buffers.get_mut(&key).expect("inserted above");
        match buf.accept(frag) {
            Ok(Some(whole)) => {
                self.buffers.remove(&key);
                self.delivered.insert(key);
                self.counters.accepted += 1;
                self.counters.delivered += 1;
                debug!("reassembled {} ({} bytes)", whole.id(), whole.payload.len());
                Ok(Some(whole))
            }
            Ok(None) => {
                self.counters.accepted += 1;
                Ok(None)
            }
            Err(e) => {
                self.counters.rejected += 1;
                warn!("rejected fragment of {}: {e}", key.id);
                if buf.received.is_empty() {
                    self.buffers.remove(&key);
                }
                Err(e)
            }
        }
    }

    /// Drops partial buffers whose lifetime has passed; returns how many.
    pub fn expire(&mut self, now_ts: u64) -> usize {
        let before = self.buffers.len();
        self.buffers.retain(|_, b| b.deadline_ts >= now_ts);
        let dropped = before - self.buffers.len();
        self.counters.expired_buffers += dropped as u64;
        dropped
    }
}
