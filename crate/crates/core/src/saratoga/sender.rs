use std::sync::Arc;
use std::time::Duration;

use log::{debug, trace};

use super::packet::{Body, Flags, Hole, Metadata, ObjectChecksum, SaratogaPacket, DEFAULT_PAYLOAD};
use super::ChecksumKind;
use crate::ranges::RangeSet;

#[derive(Debug, Clone)]
pub struct SenderConfig {
    /// Open-loop send rate for DATA payload bits.
    pub rate_bps: u64,
    pub max_payload: usize,
    /// Every n-th DATA packet carries the request-status flag.
    pub status_every: u64,
    /// Re-solicit period once the final segment has gone out.
    pub resolicit: Duration,
    /// Abandon the transaction after this long without a STATUS.
    pub idle_timeout: Duration,
}

impl Default for SenderConfig {
    fn default() -> Self {
        SenderConfig {
            rate_bps: 8_000_000,
            max_payload: DEFAULT_PAYLOAD,
            status_every: 64,
            resolicit: Duration::from_secs(1),
            idle_timeout: Duration::from_secs(2 * 5880),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenderPhase {
    Sending,
    Complete,
    Abandoned,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SenderCounters {
    pub data_sent: u64,
    pub payload_bytes_sent: u64,
    pub retransmitted_bytes: u64,
    pub metadata_sent: u64,
    pub resolicits: u64,
    pub status_received: u64,
    pub stale_status: u64,
}

/// Sending half of one transaction.
#[derive(Debug, Clone)]
pub struct SenderState {
    transaction_id: u32,
    object: Arc<[u8]>,
    metadata: Metadata,
    config: SenderConfig,
    phase: SenderPhase,
    // First-pass cursor: bytes below it have been sent at least once.
    cursor: u64,
    pending: RangeSet,
    acked: RangeSet,
    max_acked: u64,
    next_send_time: Duration,
    metadata_pending: bool,
    eof_sent: bool,
    resolicit_at: Option<Duration>,
    last_heard: Duration,
    counters: SenderCounters,
}

fn pacing_gap(bits: u64, rate_bps: u64) -> Duration {
    // Round up so the long-run rate never exceeds the configured one.
    let nanos = (bits as u128 * 1_000_000_000).div_ceil(rate_bps.max(1) as u128);
    Duration::from_nanos(nanos.min(u64::MAX as u128) as u64)
}

impl SenderState {
    pub fn new(
        transaction_id: u32,
        name: impl Into<String>,
        object: impl Into<Arc<[u8]>>,
        checksum: ChecksumKind,
        config: SenderConfig,
        now: Duration,
    ) -> Self {
        let object: Arc<[u8]> = object.into();
        let metadata = Metadata {
            object_len: object.len() as u64,
            checksum: checksum.compute(&object),
            name: name.into(),
        };
        SenderState {
            transaction_id,
            object,
            metadata,
            config,
            phase: SenderPhase::Sending,
            cursor: 0,
            pending: RangeSet::new(),
            acked: RangeSet::new(),
            max_acked: 0,
            next_send_time: now,
            metadata_pending: true,
            eof_sent: false,
            resolicit_at: None,
            last_heard: now,
            counters: SenderCounters::default(),
        }
    }

    pub fn transaction_id(&self) -> u32 {
        self.transaction_id
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    /// Declared checksum carried in METADATA.
    pub fn checksum(&self) -> &ObjectChecksum {
        &self.metadata.checksum
    }

    pub fn object_len(&self) -> u64 {
        self.metadata.object_len
    }

    pub fn phase(&self) -> SenderPhase {
        self.phase
    }

    pub fn is_complete(&self) -> bool {
        self.phase == SenderPhase::Complete
    }

    pub fn counters(&self) -> SenderCounters {
        self.counters
    }

    pub fn next_send_time(&self) -> Duration {
        self.next_send_time
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn pending(&self) -> &RangeSet {
        &self.pending
    }

    pub fn acked(&self) -> &RangeSet {
        &self.acked
    }

    /// Most bytes ever reported received at once; never decreases.
    pub fn max_acked(&self) -> u64 {
        self.max_acked
    }

    pub fn config(&self) -> &SenderConfig {
        &self.config
    }

    /// Changes the send rate for subsequent packets.
    pub fn set_rate(&mut self, rate_bps: u64) {
        self.config.rate_bps = rate_bps;
    }

    /// Earliest time at which `next_packet` may produce something, if any.
    pub fn next_wake(&self) -> Option<Duration> {
        if self.phase != SenderPhase::Sending {
            return None;
        }
        if self.metadata_pending || !self.pending.is_empty() || self.cursor < self.object_len() {
            return Some(self.next_send_time);
        }
        self.resolicit_at.map(|t| t.max(self.next_send_time))
    }

    pub fn is_idle_expired(&self, now: Duration) -> bool {
        now >= self.last_heard + self.config.idle_timeout
    }

    /// Marks the transaction abandoned; it will emit nothing further.
    pub fn abandon(&mut self) {
        self.phase = SenderPhase::Abandoned;
    }

    fn metadata_packet(&self) -> SaratogaPacket {
        SaratogaPacket::metadata(self.transaction_id, self.metadata.clone())
    }

    fn advance_clock(&mut self, now: Duration, bits: u64) {
        let base = self.next_send_time.max(now);
        self.next_send_time = base + pacing_gap(bits, self.config.rate_bps);
    }

    fn data_packet(&mut self, start: u64, end: u64, mut flags: Flags) -> SaratogaPacket {
        self.counters.data_sent += 1;
        if self.counters.data_sent.is_multiple_of(self.config.status_every.max(1)) {
            flags = flags | Flags::REQUEST_STATUS;
        }
        if end == self.object_len() {
            flags = flags | Flags::EOF | Flags::REQUEST_STATUS;
        }
        let payload = self.object[start as usize..end as usize].to_vec();
        self.counters.payload_bytes_sent += end - start;
        SaratogaPacket::data(self.transaction_id, flags, start, payload)
    }

    /// Produces the next paced packet, or `None` if the sender must wait.
    ///
    /// Order of preference: a pending METADATA, queued holes (lowest offset
    /// first), first-pass data, then a periodic re-solicitation once the final
    /// segment has been sent.
    pub fn next_packet(&mut self, now: Duration) -> Option<SaratogaPacket> {
        if self.phase != SenderPhase::Sending || now < self.next_send_time {
            return None;
        }
        let len = self.object_len();
        if self.metadata_pending {
            self.metadata_pending = false;
            let pkt = self.metadata_packet();
            self.counters.metadata_sent += 1;
            self.advance_clock(now, pkt.encoded_len() as u64 * 8);
            if len == 0 {
                self.eof_sent = true;
                self.resolicit_at = Some(now + self.config.resolicit);
            }
            return Some(pkt);
        }
        let max = self.config.max_payload.max(1) as u64;
        if let Some(range) = self.pending.pop_front(max) {
            let mut flags = Flags::NONE;
            if self.pending.is_empty() && self.cursor >= len {
                // Last queued retransmission: ask where things stand.
                flags = Flags::REQUEST_STATUS;
                self.resolicit_at = Some(now + self.config.resolicit);
            }
            self.counters.retransmitted_bytes += range.end - range.start;
            let pkt = self.data_packet(range.start, range.end, flags);
            self.advance_clock(now, (range.end - range.start) * 8);
            trace!("txn {} retransmit {}..{}", self.transaction_id, range.start, range.end);
            return Some(pkt);
        }
        if self.cursor < len {
            let start = self.cursor;
            let end = (start + max).min(len);
            self.cursor = end;
            let pkt = self.data_packet(start, end, Flags::NONE);
            if end == len {
                self.eof_sent = true;
                self.resolicit_at = Some(now + self.config.resolicit);
            }
            self.advance_clock(now, (end - start) * 8);
            return Some(pkt);
        }
        match self.resolicit_at {
            Some(at) if self.eof_sent && now >= at => {
                self.resolicit_at = Some(now + self.config.resolicit);
                self.counters.resolicits += 1;
                if len == 0 {
                    let pkt = self.metadata_packet();
                    self.counters.metadata_sent += 1;
                    self.advance_clock(now, pkt.encoded_len() as u64 * 8);
                    return Some(pkt);
                }
                let start = len - (len - 1) % max - 1;
                let pkt = self.data_packet(start, len, Flags::REQUEST_STATUS);
                self.advance_clock(now, (len - start) * 8);
                debug!("txn {} re-soliciting status", self.transaction_id);
                Some(pkt)
            }
            _ => None,
        }
    }

    /// Applies a STATUS report. Returns true if it completed the transaction.
    pub fn on_status(&mut self, pkt: &SaratogaPacket, now: Duration) -> bool {
        let Body::Status { progress, holes } = &pkt.body else {
            return false;
        };
        if pkt.transaction_id != self.transaction_id || self.phase != SenderPhase::Sending {
            self.counters.stale_status += 1;
            return false;
        }
        self.counters.status_received += 1;
        self.last_heard = now;
        let len = self.object_len();

        if pkt.flags.contains(Flags::TRANSFER_COMPLETE) {
            self.phase = SenderPhase::Complete;
            self.pending = RangeSet::new();
            self.acked = std::iter::once(0..len).collect();
            self.max_acked = len;
            self.resolicit_at = None;
            return true;
        }
        if !pkt.flags.contains(Flags::METADATA_RECEIVED) {
            self.metadata_pending = true;
            return false;
        }

        // Bytes never sent are not losses.
        let sent_limit = self.cursor;
        let reported: Vec<Hole> = holes
            .iter()
            .filter_map(|h| {
                let end = h.end.min(sent_limit);
                (h.start < end).then(|| Hole::new(h.start, end))
            })
            .collect();

        for h in holes {
            self.acked.remove(h.start..h.end.min(len));
        }
        let progress = (*progress).min(len);
        self.acked.insert(0..progress);
        if !holes.is_empty() {
            let mut cursor = progress;
            for h in holes.iter().filter(|h| h.end > progress) {
                if h.start > cursor {
                    self.acked.insert(cursor..h.start.min(sent_limit));
                }
                cursor = cursor.max(h.end);
            }
        }
        for h in &reported {
            self.pending.insert(h.start..h.end);
        }
        let acked: Vec<_> = self.acked.iter().collect();
        for r in acked {
            self.pending.remove(r);
        }
        self.max_acked = self.max_acked.max(self.acked.covered());
        if !reported.is_empty() {
            debug!(
                "txn {} status: progress {} with {} holes queued ({} bytes pending)",
                self.transaction_id,
                progress,
                reported.len(),
                self.pending.covered()
            );
        }
        false
    }
}
