use std::time::Duration;

use log::{debug, warn};

use super::holes::compute_holes;
use super::packet::{Body, Flags, Hole, Metadata, SaratogaPacket};
use super::verify_object;
use crate::ranges::RangeSet;

#[derive(Debug, Clone)]
pub struct ReceiverConfig {
    /// Send an unsolicited STATUS after this many payload bytes.
    pub status_bytes: u64,
    /// Longest hole list carried in one STATUS; lower holes win.
    pub max_status_holes: usize,
    /// Forget the transaction after this long without traffic.
    pub idle_timeout: Duration,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        ReceiverConfig {
            status_bytes: 256 * 1024,
            max_status_holes: 128,
            idle_timeout: Duration::from_secs(2 * 5880),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReceiverCounters {
    pub data_received: u64,
    pub duplicate_packets: u64,
    pub invalid_packets: u64,
    pub new_bytes: u64,
    pub status_sent: u64,
    pub integrity_failures: u64,
}

/// What a single DATA packet produced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataOutcome {
    pub status: Option<SaratogaPacket>,
    /// The object became whole and verified with this packet.
    pub completed: bool,
    /// The object became whole but failed verification and was discarded.
    pub integrity_failed: bool,
}

/// Receiving half of one transaction.
#[derive(Debug, Clone)]
pub struct ReceiverState {
    transaction_id: u32,
    metadata: Metadata,
    config: ReceiverConfig,
    buffer: Vec<u8>,
    received: RangeSet,
    // Highest offset seen; holes above it may still be in flight.
    high_water: u64,
    bytes_since_status: u64,
    complete: bool,
    last_heard: Duration,
    counters: ReceiverCounters,
}

impl ReceiverState {
    /// Opens a transaction from its METADATA. A zero-length object completes
    /// immediately and the returned outcome carries the completion STATUS.
    pub fn open(
        transaction_id: u32,
        metadata: Metadata,
        config: ReceiverConfig,
        now: Duration,
    ) -> (Self, DataOutcome) {
        let mut state = ReceiverState {
            transaction_id,
            buffer: vec![0; metadata.object_len as usize],
            metadata,
            config,
            received: RangeSet::new(),
            high_water: 0,
            bytes_since_status: 0,
            complete: false,
            last_heard: now,
            counters: ReceiverCounters::default(),
        };
        let outcome = if state.metadata.object_len == 0 {
            state.finish()
        } else {
            DataOutcome::default()
        };
        (state, outcome)
    }

    pub fn transaction_id(&self) -> u32 {
        self.transaction_id
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn received(&self) -> &RangeSet {
        &self.received
    }

    pub fn counters(&self) -> ReceiverCounters {
        self.counters
    }

    /// Object bytes; only meaningful once complete.
    pub fn object(&self) -> &[u8] {
        &self.buffer
    }

    /// Drops the object buffer after it has been handed on.
    pub fn release(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buffer)
    }

    pub fn is_idle_expired(&self, now: Duration) -> bool {
        now >= self.last_heard + self.config.idle_timeout
    }

    /// Current STATUS report.
    pub fn status(&mut self) -> SaratogaPacket {
        self.counters.status_sent += 1;
        self.bytes_since_status = 0;
        if self.complete {
            return SaratogaPacket::status(
                self.transaction_id,
                Flags::TRANSFER_COMPLETE | Flags::METADATA_RECEIVED,
                self.metadata.object_len,
                Vec::new(),
            );
        }
        let mut holes = compute_holes(&self.received, self.high_water)
            .expect("received ranges stay below high water")
            .into_vec();
        holes.truncate(self.config.max_status_holes);
        SaratogaPacket::status(
            self.transaction_id,
            Flags::METADATA_RECEIVED,
            self.received.contiguous_prefix(),
            holes,
        )
    }

    /// Handles a repeated METADATA for this transaction by reporting state.
    pub fn on_metadata(&mut self, now: Duration) -> SaratogaPacket {
        self.last_heard = now;
        self.status()
    }

    pub fn on_data(&mut self, pkt: &SaratogaPacket, now: Duration) -> DataOutcome {
        let Body::Data { offset, payload } = &pkt.body else {
            return DataOutcome::default();
        };
        let len = self.metadata.object_len;
        let end = offset.checked_add(payload.len() as u64);
        let Some(end) = end.filter(|&e| e <= len && pkt.transaction_id == self.transaction_id)
        else {
            self.counters.invalid_packets += 1;
            warn!(
                "txn {}: discarding DATA at {} (+{}) beyond object length {}",
                self.transaction_id,
                offset,
                payload.len(),
                len
            );
            return DataOutcome::default();
        };
        self.last_heard = now;
        self.counters.data_received += 1;
        let wants_status = pkt.flags.contains(Flags::REQUEST_STATUS) || pkt.flags.contains(Flags::EOF);

        if self.complete {
            self.counters.duplicate_packets += 1;
            return DataOutcome {
                status: wants_status.then(|| self.status()),
                ..Default::default()
            };
        }

        // Only fill gaps; bytes already held are never overwritten.
        let gaps = self.received.gaps_within(*offset..end);
        if gaps.is_empty() && end > *offset {
            self.counters.duplicate_packets += 1;
        }
        for gap in gaps {
            let src = (gap.start - offset) as usize..(gap.end - offset) as usize;
            self.buffer[gap.start as usize..gap.end as usize].copy_from_slice(&payload[src]);
            self.counters.new_bytes += self.received.insert(gap);
        }
        self.high_water = self.high_water.max(end);
        self.bytes_since_status += payload.len() as u64;

        if self.received.covered() == len {
            return self.finish();
        }
        let status = (wants_status || self.bytes_since_status >= self.config.status_bytes)
            .then(|| self.status());
        DataOutcome {
            status,
            ..Default::default()
        }
    }

    fn finish(&mut self) -> DataOutcome {
        if verify_object(&self.metadata, &self.buffer) {
            self.complete = true;
            debug!("txn {} complete ({} bytes)", self.transaction_id, self.metadata.object_len);
            DataOutcome {
                status: Some(self.status()),
                completed: true,
                integrity_failed: false,
            }
        } else {
            self.counters.integrity_failures += 1;
            warn!("txn {} failed verification; discarding object", self.transaction_id);
            DataOutcome {
                status: Some(self.discard()),
                completed: false,
                integrity_failed: true,
            }
        }
    }

    fn discard(&mut self) -> SaratogaPacket {
        self.complete = false;
        self.received = RangeSet::new();
        self.high_water = self.metadata.object_len;
        self.buffer.iter_mut().for_each(|b| *b = 0);
        self.status()
    }

    /// Rejects a completed object after a higher-layer check failed. All bytes
    /// are discarded and the returned STATUS asks for the whole object again.
    pub fn reject(&mut self) -> SaratogaPacket {
        if self.buffer.len() as u64 != self.metadata.object_len {
            self.buffer = vec![0; self.metadata.object_len as usize];
        }
        self.counters.integrity_failures += 1;
        self.discard()
    }

    /// STATUS holes as ranges, for inspection.
    pub fn holes(&self) -> Vec<Hole> {
        compute_holes(&self.received, self.metadata.object_len)
            .map(|h| h.into_vec())
            .unwrap_or_default()
    }
}
