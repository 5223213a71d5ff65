use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::plan::{at_seconds, link_up, ContactPlan, LinkParams};
use crate::saratoga::{DATA_HEADER_LEN, KIND_DATA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// Spacecraft to ground.
    Down,
    /// Ground to spacecraft.
    Up,
}

impl Direction {
    fn index(self) -> usize {
        match self {
            Direction::Down => 0,
            Direction::Up => 1,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Down => "down",
            Direction::Up => "up",
        })
    }
}

/// Per-direction packet ledger. `sent` always equals `delivered` plus both
/// drop counts once every scheduled delivery has been popped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_loss: u64,
    pub dropped_linkdown: u64,
    pub in_flight: u64,
    pub bytes_sent: u64,
    pub bytes_delivered: u64,
}

impl LinkCounters {
    pub fn is_conserved(&self) -> bool {
        self.sent == self.delivered + self.dropped_loss + self.dropped_linkdown + self.in_flight
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Delivery { direction: Direction, bytes: Vec<u8> },
    Timer(u64),
    WindowEdge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent {
    pub at: Duration,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    Delivered(Duration),
    Lost,
    LinkDown,
}

/// One offered packet and what happened to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub sent_at: Duration,
    pub direction: Direction,
    pub len: usize,
    pub fate: Fate,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} ", self.sent_at.as_nanos(), self.direction, self.len)?;
        match self.fate {
            Fate::Delivered(at) => write!(f, "delivered {}", at.as_nanos()),
            Fate::Lost => f.write_str("lost"),
            Fate::LinkDown => f.write_str("linkdown"),
        }
    }
}

/// Flips one payload bit of the `nth` DATA packet (counting from zero)
/// delivered on the downlink.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Corruption {
    pub nth_data_packet: u64,
    pub payload_byte: usize,
}

struct Queued {
    at: Duration,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Discrete-event model of the space-ground link.
///
/// Events pop in time order, ties in insertion order. Loss draws come from a
/// ChaCha8 generator seeded by the plan, one draw per packet offered while
/// the link is up, so a fixed seed and fixed traffic give a fixed trace.
pub struct Simulator {
    plan: ContactPlan,
    now: Duration,
    seq: u64,
    queue: BinaryHeap<Reverse<Queued>>,
    rng: ChaCha8Rng,
    busy_until: [Duration; 2],
    counters: [LinkCounters; 2],
    trace: Option<Vec<TraceRecord>>,
    corruption: Option<Corruption>,
    data_delivered_down: u64,
    corrupted: u64,
}

impl Simulator {
    pub fn new(plan: ContactPlan) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(plan.seed);
        Simulator {
            plan,
            now: Duration::ZERO,
            seq: 0,
            queue: BinaryHeap::new(),
            rng,
            busy_until: [Duration::ZERO; 2],
            counters: [LinkCounters::default(); 2],
            trace: None,
            corruption: None,
            data_delivered_down: 0,
            corrupted: 0,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn with_corruption(mut self, c: Corruption) -> Self {
        self.corruption = Some(c);
        self
    }

    pub fn plan(&self) -> &ContactPlan {
        &self.plan
    }

    pub fn now(&self) -> Duration {
        self.now
    }

    pub fn link_up(&self, t: Duration) -> bool {
        link_up(&self.plan, t)
    }

    pub fn counters(&self, direction: Direction) -> LinkCounters {
        self.counters[direction.index()]
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Option<Vec<TraceRecord>> {
        self.trace.take()
    }

    /// Packets altered by the corruption knob so far.
    pub fn corrupted(&self) -> u64 {
        self.corrupted
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    fn push(&mut self, at: Duration, kind: EventKind) {
        self.queue.push(Reverse(Queued {
            at,
            seq: self.seq,
            kind,
        }));
        self.seq += 1;
    }

    pub fn schedule_timer(&mut self, at: Duration, token: u64) {
        self.push(at.max(self.now), EventKind::Timer(token));
    }

    /// Queues an event at every window and outage boundary.
    pub fn schedule_edges(&mut self) {
        for edge in self.plan.edges() {
            self.push(at_seconds(edge), EventKind::WindowEdge);
        }
    }

    fn params(&self, direction: Direction) -> LinkParams {
        match direction {
            Direction::Down => self.plan.down,
            Direction::Up => self.plan.up,
        }
    }

    /// Offers `bytes` to the link at time `t` (not before the current clock).
    pub fn transmit(&mut self, direction: Direction, bytes: Vec<u8>, t: Duration) -> Fate {
        let t = t.max(self.now);
        let i = direction.index();
        let params = self.params(direction);
        let len = bytes.len();
        self.counters[i].sent += 1;
        self.counters[i].bytes_sent += len as u64;

        let fate = if !link_up(&self.plan, t) {
            self.counters[i].dropped_linkdown += 1;
            Fate::LinkDown
        } else {
            // The transmitter is occupied whether or not the packet survives.
            let start = t.max(self.busy_until[i]);
            let done = start + params.serialization(len);
            self.busy_until[i] = done;
            if self.rng.gen_bool(params.loss_prob) {
                self.counters[i].dropped_loss += 1;
                Fate::Lost
            } else {
                let at = done + params.delay();
                self.counters[i].in_flight += 1;
                self.push(at, EventKind::Delivery { direction, bytes });
                Fate::Delivered(at)
            }
        };
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord {
                sent_at: t,
                direction,
                len,
                fate,
            });
        }
        fate
    }

    fn maybe_corrupt(&mut self, bytes: &mut [u8]) {
        let Some(c) = self.corruption else { return };
        if bytes.len() <= DATA_HEADER_LEN || bytes[1] != KIND_DATA {
            return;
        }
        if self.data_delivered_down == c.nth_data_packet {
            let payload_len = bytes.len() - DATA_HEADER_LEN;
            bytes[DATA_HEADER_LEN + c.payload_byte % payload_len] ^= 0x01;
            self.corrupted += 1;
        }
        self.data_delivered_down += 1;
    }

    /// Pops the next event, advancing the clock to it.
    pub fn next_event(&mut self) -> Option<SimEvent> {
        let Reverse(q) = self.queue.pop()?;
        debug_assert!(q.at >= self.now, "clock moved backwards");
        self.now = q.at;
        let mut kind = q.kind;
        if let EventKind::Delivery { direction, bytes } = &mut kind {
            let i = direction.index();
            self.counters[i].in_flight -= 1;
            self.counters[i].delivered += 1;
            self.counters[i].bytes_delivered += bytes.len() as u64;
            if *direction == Direction::Down {
                self.maybe_corrupt(bytes);
            }
        }
        Some(SimEvent { at: q.at, kind })
    }

    /// Time of the next queued event.
    pub fn peek_time(&self) -> Option<Duration> {
        self.queue.peek().map(|Reverse(q)| q.at)
    }
}
