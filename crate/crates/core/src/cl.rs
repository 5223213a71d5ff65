//! Convergence layer: each bundle or fragment travels as one transfer.
//!
//! [`ClBinding`] is the sending side bound to a single peer. It queues
//! serialized bundles and drives at most one [`SenderState`] at a time, only
//! while the link is up. [`ClReceiver`] terminates transfers, checks bundles
//! and hands fragments to reassembly.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;
use std::time::Duration;

use log::{debug, info, warn};
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};

use crate::bundle::{
    deserialize_bundle, is_expired, serialize_bundle, verify_bundle, Bundle, BundleId,
    ReassemblyError, Reassembler,
};
use crate::saratoga::{
    Body, ChecksumKind, Flags, ReceiverConfig, ReceiverState, SaratogaPacket, SenderConfig,
    SenderState,
};

// RFC 3986 unreserved characters stay literal.
const NAME_ENCODE: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

/// Identity of one transferable unit: a whole bundle or one fragment of it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClKey {
    pub id: BundleId,
    pub frag_offset: Option<u64>,
}

impl ClKey {
    pub fn of(b: &Bundle) -> Self {
        ClKey {
            id: b.id(),
            frag_offset: b.fragment.map(|f| f.offset),
        }
    }
}

/// Object name for `b`: `bundle/<src>/<creation_ts>/<seq>[/frag-<offset>]`
/// with the source EID percent-encoded.
pub fn object_name(b: &Bundle) -> String {
    let mut name = format!(
        "bundle/{}/{}/{}",
        utf8_percent_encode(&b.src_eid, NAME_ENCODE),
        b.creation_ts,
        b.seq
    );
    if let Some(frag) = b.fragment {
        name.push_str(&format!("/frag-{}", frag.offset));
    }
    name
}

#[derive(Debug, Clone)]
pub struct ClConfig {
    pub sender: SenderConfig,
    /// Transfer-level checksum; mirrors the bundle agent's suite.
    pub checksum: ChecksumKind,
    /// Delay before an abandoned transfer is offered again.
    pub reoffer_delay: Duration,
    /// Bundle time (seconds since 2000) at simulation/run time zero.
    pub epoch_ts: u64,
}

impl Default for ClConfig {
    fn default() -> Self {
        ClConfig {
            sender: SenderConfig::default(),
            checksum: ChecksumKind::None,
            reoffer_delay: Duration::from_secs(5880),
            epoch_ts: 0,
        }
    }
}

impl ClConfig {
    pub fn now_ts(&self, now: Duration) -> u64 {
        self.epoch_ts + now.as_secs()
    }
}

#[derive(Debug, Clone)]
struct Outbound {
    key: ClKey,
    name: String,
    bytes: Arc<[u8]>,
    expiry_ts: u64,
    ready_at: Duration,
}

#[derive(Debug)]
struct Inflight {
    item: Outbound,
    sender: SenderState,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClAction {
    Started { transaction_id: u32, name: String },
    Transmit(SaratogaPacket),
    Completed { transaction_id: u32, key: ClKey },
    Abandoned { transaction_id: u32, key: ClKey },
    Expired { key: ClKey },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClSendCounters {
    pub offered: u64,
    pub duplicates_dropped: u64,
    pub transfers_started: u64,
    pub transfers_completed: u64,
    pub transfers_abandoned: u64,
    pub expired_dropped: u64,
    pub data_sent: u64,
    pub data_bytes_sent: u64,
    pub metadata_sent: u64,
    /// Object bytes acknowledged; completed transfers count in full.
    pub bytes_acked: u64,
}

/// Sending side of the convergence layer, bound to one peer.
#[derive(Debug)]
pub struct ClBinding {
    peer: String,
    config: ClConfig,
    outbound: VecDeque<Outbound>,
    inflight: Option<Inflight>,
    delivered: HashSet<ClKey>,
    next_txn: u32,
    counters: ClSendCounters,
}

impl ClBinding {
    pub fn new(peer: impl Into<String>, config: ClConfig) -> Self {
        ClBinding {
            peer: peer.into(),
            config,
            outbound: VecDeque::new(),
            inflight: None,
            delivered: HashSet::new(),
            next_txn: 1,
            counters: ClSendCounters::default(),
        }
    }

    pub fn peer(&self) -> &str {
        &self.peer
    }

    pub fn config(&self) -> &ClConfig {
        &self.config
    }

    pub fn counters(&self) -> ClSendCounters {
        let mut c = self.counters;
        if let Some(inflight) = &self.inflight {
            let s = inflight.sender.counters();
            c.data_sent += s.data_sent;
            c.data_bytes_sent += s.payload_bytes_sent;
            c.metadata_sent += s.metadata_sent;
            c.bytes_acked += inflight.sender.max_acked();
        }
        c
    }

    pub fn queued(&self) -> usize {
        self.outbound.len()
    }

    pub fn is_idle(&self) -> bool {
        self.outbound.is_empty() && self.inflight.is_none()
    }

    pub fn inflight_transaction(&self) -> Option<u32> {
        self.inflight.as_ref().map(|i| i.sender.transaction_id())
    }

    /// The sender state of the transfer in progress.
    pub fn inflight_sender(&self) -> Option<&SenderState> {
        self.inflight.as_ref().map(|i| &i.sender)
    }

    pub fn is_delivered(&self, key: &ClKey) -> bool {
        self.delivered.contains(key)
    }

    /// Enqueues `b` for transfer. Returns false when its key was already
    /// delivered or is already queued or in flight.
    pub fn offer_bundle(&mut self, b: &Bundle) -> bool {
        let key = ClKey::of(b);
        let busy = self.delivered.contains(&key)
            || self.outbound.iter().any(|o| o.key == key)
            || self.inflight.as_ref().is_some_and(|i| i.item.key == key);
        if busy {
            self.counters.duplicates_dropped += 1;
            return false;
        }
        self.counters.offered += 1;
        self.outbound.push_back(Outbound {
            key,
            name: object_name(b),
            bytes: serialize_bundle(b).into(),
            expiry_ts: b.expiry_ts(),
            ready_at: Duration::ZERO,
        });
        true
    }

    fn retire(&mut self, inflight: &Inflight) {
        let s = inflight.sender.counters();
        self.counters.data_sent += s.data_sent;
        self.counters.data_bytes_sent += s.payload_bytes_sent;
        self.counters.metadata_sent += s.metadata_sent;
        self.counters.bytes_acked += inflight.sender.max_acked();
    }

    fn alloc_txn(&mut self) -> u32 {
        let id = self.next_txn;
        // Zero is reserved for beacons.
        self.next_txn = self.next_txn.checked_add(1).unwrap_or(1);
        id
    }

    /// Advances the binding. Transfers start, and packets are emitted, only
    /// while `link_up`; a transfer interrupted by link loss keeps its state and
    /// resumes from its holes on the next contact.
    pub fn pump(&mut self, link_up: bool, now: Duration) -> Vec<ClAction> {
        let mut actions = Vec::new();
        let now_ts = self.config.now_ts(now);

        let before = self.outbound.len();
        self.outbound.retain(|o| {
            let live = o.expiry_ts >= now_ts;
            if !live {
                actions.push(ClAction::Expired { key: o.key.clone() });
            }
            live
        });
        self.counters.expired_dropped += (before - self.outbound.len()) as u64;

        if let Some(inflight) = self.inflight.take() {
            let txn = inflight.sender.transaction_id();
            if inflight.item.expiry_ts < now_ts {
                info!("txn {txn}: bundle expired mid-transfer");
                self.retire(&inflight);
                self.counters.expired_dropped += 1;
                actions.push(ClAction::Expired { key: inflight.item.key });
            } else if inflight.sender.is_idle_expired(now) {
                warn!("txn {txn}: no status within idle timeout; re-offering later");
                self.retire(&inflight);
                self.counters.transfers_abandoned += 1;
                let mut item = inflight.item;
                item.ready_at = now + self.config.reoffer_delay;
                actions.push(ClAction::Abandoned {
                    transaction_id: txn,
                    key: item.key.clone(),
                });
                self.outbound.push_back(item);
            } else {
                self.inflight = Some(inflight);
            }
        }

        if !link_up {
            return actions;
        }

        if self.inflight.is_none() {
            if let Some(pos) = self.outbound.iter().position(|o| o.ready_at <= now) {
                let item = self.outbound.remove(pos).expect("position is in range");
                let txn = self.alloc_txn();
                let sender = SenderState::new(
                    txn,
                    item.name.clone(),
                    item.bytes.clone(),
                    self.config.checksum,
                    self.config.sender.clone(),
                    now,
                );
                debug!("txn {txn}: starting {} ({} bytes)", item.name, item.bytes.len());
                self.counters.transfers_started += 1;
                actions.push(ClAction::Started {
                    transaction_id: txn,
                    name: item.name.clone(),
                });
                self.inflight = Some(Inflight { item, sender });
            }
        }

        if let Some(inflight) = &mut self.inflight {
            while let Some(pkt) = inflight.sender.next_packet(now) {
                actions.push(ClAction::Transmit(pkt));
            }
        }
        actions
    }

    /// Earliest time the binding wants to be pumped again, assuming the link
    /// stays up.
    pub fn next_wake(&self, now: Duration) -> Option<Duration> {
        match &self.inflight {
            Some(inflight) => inflight.sender.next_wake(),
            None => self.outbound.iter().map(|o| o.ready_at.max(now)).min(),
        }
    }

    /// Applies a STATUS from the peer.
    pub fn on_status(&mut self, pkt: &SaratogaPacket, now: Duration) -> Vec<ClAction> {
        let Some(inflight) = &mut self.inflight else {
            return Vec::new();
        };
        if inflight.sender.transaction_id() != pkt.transaction_id {
            return Vec::new();
        }
        if !inflight.sender.on_status(pkt, now) {
            return Vec::new();
        }
        let inflight = self.inflight.take().expect("checked above");
        let txn = inflight.sender.transaction_id();
        self.retire(&inflight);
        self.counters.transfers_completed += 1;
        self.delivered.insert(inflight.item.key.clone());
        debug!("txn {txn}: {} complete", inflight.item.name);
        vec![ClAction::Completed {
            transaction_id: txn,
            key: inflight.item.key,
        }]
    }
}

/// What became of one received object.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectOutcome {
    /// A whole bundle, original or reassembled, delivered for the first time.
    Delivered(Bundle),
    /// A fragment stored for reassembly.
    Stored,
    /// Already delivered.
    Duplicate,
    /// Lifetime elapsed before arrival; discarded.
    Expired,
    /// Failed deserialization or its checksum; discarded.
    Rejected(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClReceiveCounters {
    pub objects_received: u64,
    pub bundles_delivered: u64,
    pub fragments_stored: u64,
    pub bundles_rejected_checksum: u64,
    pub bundles_malformed: u64,
    pub bundles_expired: u64,
    pub duplicates: u64,
    pub status_sent: u64,
    pub unknown_transaction: u64,
}

/// Result of handing one packet to the receiver.
#[derive(Debug, Default)]
pub struct ReceiveOutput {
    pub reply: Option<SaratogaPacket>,
    pub delivered: Option<Bundle>,
}

/// Receiving side of the convergence layer.
#[derive(Debug)]
pub struct ClReceiver {
    config: ReceiverConfig,
    epoch_ts: u64,
    transfers: HashMap<u32, ReceiverState>,
    reassembler: Reassembler,
    delivered: HashSet<BundleId>,
    counters: ClReceiveCounters,
}

impl ClReceiver {
    pub fn new(config: ReceiverConfig, epoch_ts: u64) -> Self {
        ClReceiver {
            config,
            epoch_ts,
            transfers: HashMap::new(),
            reassembler: Reassembler::new(),
            delivered: HashSet::new(),
            counters: ClReceiveCounters::default(),
        }
    }

    pub fn counters(&self) -> ClReceiveCounters {
        self.counters
    }

    pub fn reassembler(&self) -> &Reassembler {
        &self.reassembler
    }

    pub fn transfer(&self, transaction_id: u32) -> Option<&ReceiverState> {
        self.transfers.get(&transaction_id)
    }

    fn now_ts(&self, now: Duration) -> u64 {
        self.epoch_ts + now.as_secs()
    }

    /// Drops idle transfers and expired partial reassemblies.
    pub fn expire(&mut self, now: Duration) {
        self.transfers.retain(|_, t| !t.is_idle_expired(now));
        let now_ts = self.now_ts(now);
        self.reassembler.expire(now_ts);
    }

    fn reply(&mut self, pkt: SaratogaPacket) -> Option<SaratogaPacket> {
        self.counters.status_sent += 1;
        Some(pkt)
    }

    /// Handles one inbound transfer packet.
    pub fn on_packet(&mut self, pkt: &SaratogaPacket, now: Duration) -> ReceiveOutput {
        let txn = pkt.transaction_id;
        match &pkt.body {
            Body::Metadata(meta) => {
                if let Some(rx) = self.transfers.get_mut(&txn) {
                    let status = rx.on_metadata(now);
                    return ReceiveOutput {
                        reply: self.reply(status),
                        delivered: None,
                    };
                }
                let (rx, outcome) = ReceiverState::open(txn, meta.clone(), self.config.clone(), now);
                self.transfers.insert(txn, rx);
                if outcome.completed {
                    return self.finish_object(txn, outcome.status, now);
                }
                ReceiveOutput::default()
            }
            Body::Data { .. } => {
                let Some(rx) = self.transfers.get_mut(&txn) else {
                    self.counters.unknown_transaction += 1;
                    if pkt.flags.contains(Flags::REQUEST_STATUS) || pkt.flags.contains(Flags::EOF) {
                        // No METADATA yet: ask for it by omitting the flag.
                        let status = SaratogaPacket::status(txn, Flags::NONE, 0, Vec::new());
                        return ReceiveOutput {
                            reply: self.reply(status),
                            delivered: None,
                        };
                    }
                    return ReceiveOutput::default();
                };
                let outcome = rx.on_data(pkt, now);
                if outcome.integrity_failed {
                    self.counters.bundles_rejected_checksum += 1;
                }
                if outcome.completed {
                    return self.finish_object(txn, outcome.status, now);
                }
                ReceiveOutput {
                    reply: outcome.status.and_then(|s| self.reply(s)),
                    delivered: None,
                }
            }
            _ => ReceiveOutput::default(),
        }
    }

    fn finish_object(
        &mut self,
        txn: u32,
        status: Option<SaratogaPacket>,
        now: Duration,
    ) -> ReceiveOutput {
        let rx = self.transfers.get_mut(&txn).expect("transfer exists");
        let name = rx.metadata().name.clone();
        let bytes = rx.release();
        match self.on_object_received(&name, &bytes, now) {
            ObjectOutcome::Rejected(reason) => {
                warn!("txn {txn}: {name} rejected ({reason}); requesting retransfer");
                let rx = self.transfers.get_mut(&txn).expect("transfer exists");
                let status = rx.reject();
                ReceiveOutput {
                    reply: self.reply(status),
                    delivered: None,
                }
            }
            ObjectOutcome::Delivered(b) => ReceiveOutput {
                reply: status.and_then(|s| self.reply(s)),
                delivered: Some(b),
            },
            _ => ReceiveOutput {
                reply: status.and_then(|s| self.reply(s)),
                delivered: None,
            },
        }
    }

    /// Turns a verified object into a bundle and routes it: whole bundles
    /// are delivered once, fragments go to reassembly, expired or corrupt
    /// bundles are discarded.
    pub fn on_object_received(&mut self, name: &str, bytes: &[u8], now: Duration) -> ObjectOutcome {
        self.counters.objects_received += 1;
        let now_ts = self.now_ts(now);
        let bundle = match deserialize_bundle(bytes) {
            Ok(b) => b,
            Err(e) => {
                self.counters.bundles_malformed += 1;
                return ObjectOutcome::Rejected(format!("{name}: {e}"));
            }
        };
        match verify_bundle(&bundle) {
            Ok(true) => {}
            Ok(false) => {
                self.counters.bundles_rejected_checksum += 1;
                return ObjectOutcome::Rejected(format!("{name}: checksum mismatch"));
            }
            Err(e) => {
                self.counters.bundles_malformed += 1;
                return ObjectOutcome::Rejected(format!("{name}: {e}"));
            }
        }
        if is_expired(&bundle, now_ts) {
            self.counters.bundles_expired += 1;
            info!("{name}: lifetime elapsed; discarded");
            return ObjectOutcome::Expired;
        }
        if bundle.is_fragment() {
            return match self.reassembler.reassemble(&bundle, now_ts) {
                Ok(Some(whole)) => self.deliver(whole),
                Ok(None) => {
                    self.counters.fragments_stored += 1;
                    ObjectOutcome::Stored
                }
                Err(ReassemblyError::ChecksumFailed) => {
                    self.counters.bundles_rejected_checksum += 1;
                    ObjectOutcome::Rejected(format!("{name}: checksum mismatch"))
                }
                Err(e) => {
                    self.counters.bundles_malformed += 1;
                    ObjectOutcome::Rejected(format!("{name}: {e}"))
                }
            };
        }
        self.deliver(bundle)
    }

    fn deliver(&mut self, bundle: Bundle) -> ObjectOutcome {
        if !self.delivered.insert(bundle.id()) {
            self.counters.duplicates += 1;
            return ObjectOutcome::Duplicate;
        }
        self.counters.bundles_delivered += 1;
        info!("delivered {} ({} bytes)", bundle.id(), bundle.payload.len());
        ObjectOutcome::Delivered(bundle)
    }
}
