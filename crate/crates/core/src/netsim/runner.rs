use std::time::Duration;

use log::{info, warn};
use thiserror::Error;

use super::plan::{at_seconds, Window};
use super::scenario::Scenario;
use super::sim::{Corruption, Direction, EventKind, Fate, LinkCounters, Simulator, TraceRecord};
use crate::bundle::{fragment_bundle, fragment_plan, BundleAgent, BundleError, ChecksumSuite, PlanError};
use crate::cl::{ClAction, ClBinding, ClConfig, ClReceiver};
use crate::saratoga::{
    decode_packet, encode_packet, Body, ReceiverConfig, SaratogaPacket, SenderConfig,
    DATA_HEADER_LEN, DEFAULT_PAYLOAD,
};
use crate::stats::{PassRow, RunStatus, StatsReport, Tally};

pub const SOURCE_EID: &str = "dtn://sat/img";
pub const DEST_EID: &str = "dtn://gs/img";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("scenario has no `adu` directive")]
    NoAdu,
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// Knobs that are not part of the scenario file.
#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub trace: bool,
    pub corruption: Option<Corruption>,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: StatsReport,
    pub adu: Option<Vec<u8>>,
    pub delivered_at: Option<Duration>,
    /// Fragment payload limit; `None` when the plan had no capacity and the
    /// bundle was offered whole.
    pub max_payload: Option<u64>,
    pub fragments: usize,
    pub transfers_completed: u64,
    pub down: LinkCounters,
    pub up: LinkCounters,
    /// Encoded bytes of DATA packets offered to the downlink.
    pub data_bytes: u64,
    /// Encoded bytes of STATUS packets offered to the uplink.
    pub status_bytes: u64,
    pub corrupted_packets: u64,
    pub trace: Option<Vec<TraceRecord>>,
}

/// Transfer send rate that keeps whole DATA datagrams within the link rate.
pub fn paced_rate(link_rate_bps: u64, max_payload: usize) -> u64 {
    let p = max_payload as u128;
    ((link_rate_bps as u128 * p) / (p + DATA_HEADER_LEN as u128)).max(1) as u64
}

#[derive(Default)]
struct Counts {
    data_sent: u64,
    data_delivered: u64,
    data_lost: u64,
    status_sent: u64,
    data_bytes: u64,
    status_bytes: u64,
}

struct Passes<'a> {
    windows: &'a [Window],
    closed: usize,
    last: Tally,
    row_before: Tally,
    rows: Vec<PassRow>,
}

impl Passes<'_> {
    fn close_until(&mut self, now: Duration, tally: Tally) {
        while let Some(w) = self.windows.get(self.closed) {
            if at_seconds(w.end_s) > now {
                break;
            }
            self.push(w.start_s, w.end_s, tally);
        }
    }

    fn push(&mut self, start_s: f64, end_s: f64, tally: Tally) {
        self.closed += 1;
        self.row_before = self.last;
        self.rows.push(PassRow::new(self.closed, start_s, end_s, self.last, tally));
        self.last = tally;
    }

    fn finish(mut self, end: Duration, tally: Tally) -> Vec<PassRow> {
        self.close_until(end, tally);
        let end_s = end.as_secs_f64();
        if let Some(w) = self.windows.get(self.closed).copied() {
            if w.start_s < end_s {
                self.push(w.start_s, end_s.min(w.end_s), tally);
            }
        }
        // Activity after the last pass closed, such as a final
        // acknowledgement in flight at the window edge, joins that pass.
        if tally != self.last {
            if let Some(row) = self.rows.pop() {
                self.rows.push(PassRow::new(row.pass_index, row.t_start_s, row.t_end_s, self.row_before, tally));
            }
        }
        self.rows
    }
}

/// Runs `scenario` with `adu` as the payload, entirely in memory.
pub fn simulate(scenario: &Scenario, adu: Vec<u8>, opts: &SimOptions) -> Result<SimOutcome, RunError> {
    let plan = &scenario.plan;
    let suite = ChecksumSuite::new(scenario.suite);
    let adu_len = adu.len() as u64;

    let mut agent = BundleAgent::new(suite);
    let bundle = agent.create_bundle(adu, SOURCE_EID, DEST_EID, scenario.lifetime_s, 0)?;
    let expiry = Duration::from_secs(bundle.expiry_ts());
    let max_payload = match fragment_plan(adu_len, plan, scenario.safety) {
        Ok(max) => Some(max),
        Err(PlanError::NoCapacity) => {
            warn!("contact plan has no capacity; offering the bundle whole");
            None
        }
        Err(e) => return Err(e.into()),
    };

    let payload = DEFAULT_PAYLOAD;
    let config = ClConfig {
        sender: SenderConfig {
            rate_bps: paced_rate(plan.down.rate_bps, payload),
            max_payload: payload,
            idle_timeout: Duration::from_secs(2 * plan.orbit_period_s),
            ..Default::default()
        },
        checksum: scenario.suite,
        reoffer_delay: Duration::from_secs(plan.orbit_period_s),
        epoch_ts: 0,
    };
    let mut cl = ClBinding::new(DEST_EID, config);
    let fragments = match max_payload {
        Some(max) => {
            let frags = fragment_bundle(&bundle, max)?;
            drop(bundle);
            for f in &frags {
                cl.offer_bundle(f);
            }
            frags.len()
        }
        None => {
            cl.offer_bundle(&bundle);
            1
        }
    };
    info!("offered {fragments} bundle(s), max payload {max_payload:?}");

    let mut rx = ClReceiver::new(
        ReceiverConfig {
            idle_timeout: Duration::from_secs(2 * plan.orbit_period_s),
            ..Default::default()
        },
        0,
    );
    let mut sim = Simulator::new(plan.clone());
    if opts.trace {
        sim = sim.with_trace();
    }
    if let Some(c) = opts.corruption {
        sim = sim.with_corruption(c);
    }
    sim.schedule_edges();
    sim.schedule_timer(Duration::ZERO, 0);
    // Wake once past the lifetime so expiry is noticed without a contact.
    sim.schedule_timer(expiry + Duration::from_secs(1), 0);

    let max_time = Duration::from_secs(scenario.max_time_s);
    let mut counts = Counts::default();
    let tally = |cl: &ClBinding, rx: &ClReceiver, counts: &Counts| {
        let r = rx.counters();
        Tally {
            bytes_acked: cl.counters().bytes_acked,
            data_sent: counts.data_sent,
            data_delivered: counts.data_delivered,
            data_lost: counts.data_lost,
            status_sent: counts.status_sent,
            bundles_delivered: r.bundles_delivered,
            bundles_rejected_checksum: r.bundles_rejected_checksum,
            bundles_expired: r.bundles_expired + cl.counters().expired_dropped,
        }
    };
    let mut passes = Passes {
        windows: &plan.windows,
        closed: 0,
        last: Tally::default(),
        row_before: Tally::default(),
        rows: Vec::new(),
    };
    let mut armed: Option<Duration> = None;
    let mut delivered: Option<(Duration, Vec<u8>)> = None;
    let mut status = RunStatus::Timeout;
    let mut end = max_time;

    while let Some(ev) = sim.next_event() {
        let now = ev.at;
        if now > max_time {
            break;
        }
        passes.close_until(now, tally(&cl, &rx, &counts));
        match ev.kind {
            EventKind::Delivery { direction: Direction::Down, bytes } => {
                let Ok(pkt) = decode_packet(&bytes) else {
                    warn!("undecodable downlink datagram");
                    continue;
                };
                if pkt.is_data() {
                    counts.data_delivered += 1;
                }
                let out = rx.on_packet(&pkt, now);
                if let Some(reply) = out.reply {
                    send(&mut sim, &mut counts, Direction::Up, &reply, now);
                }
                if let Some(b) = out.delivered {
                    delivered.get_or_insert((now, b.payload));
                }
            }
            EventKind::Delivery { direction: Direction::Up, bytes } => {
                if let Ok(pkt) = decode_packet(&bytes) {
                    cl.on_status(&pkt, now);
                }
            }
            EventKind::Timer(_) => {
                if armed == Some(now) {
                    armed = None;
                }
            }
            EventKind::WindowEdge => {
                rx.expire(now);
                if delivered.is_some() {
                    // Contact over; stop waiting for trailing acknowledgements.
                    end = now;
                    break;
                }
            }
        }

        let up = sim.link_up(now);
        for action in cl.pump(up, now) {
            if let ClAction::Transmit(pkt) = action {
                send(&mut sim, &mut counts, Direction::Down, &pkt, now);
            }
        }

        if delivered.is_some() && cl.is_idle() {
            end = now;
            break;
        }
        if delivered.is_none() && cl.is_idle() {
            status = RunStatus::Expired;
            end = now;
            break;
        }
        if up {
            if let Some(wake) = cl.next_wake(now) {
                let wake = wake.max(now + Duration::from_nanos(1));
                if armed.is_none_or(|a| wake < a || a <= now) {
                    sim.schedule_timer(wake, 0);
                    armed = Some(wake);
                }
            }
        }
    }

    let delivered_at = delivered.as_ref().map(|(t, _)| *t);
    if let Some(t) = delivered_at {
        status = RunStatus::Delivered;
        end = end.max(t);
    }
    let final_tally = tally(&cl, &rx, &counts);
    let rows = passes.finish(end.min(max_time), final_tally);
    let passes_used = rows.iter().filter(|r| r.data_sent > 0).count();
    let total_time = match delivered_at {
        Some(t) => t,
        None if status == RunStatus::Expired => end,
        None => max_time,
    };
    let report = StatsReport {
        rows,
        status,
        total_time_s: total_time.as_secs_f64(),
        passes_used,
    };
    info!("run {status} after {:.3} s, {passes_used} pass(es)", report.total_time_s);
    Ok(SimOutcome {
        report,
        adu: delivered.map(|(_, adu)| adu),
        delivered_at,
        max_payload,
        fragments,
        transfers_completed: cl.counters().transfers_completed,
        down: sim.counters(Direction::Down),
        up: sim.counters(Direction::Up),
        data_bytes: counts.data_bytes,
        status_bytes: counts.status_bytes,
        corrupted_packets: sim.corrupted(),
        trace: sim.take_trace(),
    })
}

fn send(sim: &mut Simulator, counts: &mut Counts, dir: Direction, pkt: &SaratogaPacket, now: Duration) {
    let bytes = match encode_packet(pkt) {
        Ok(b) => b,
        Err(e) => {
            warn!("dropping unencodable packet: {e}");
            return;
        }
    };
    let len = bytes.len() as u64;
    let is_data = pkt.is_data();
    match (&pkt.body, is_data) {
        (_, true) => {
            counts.data_sent += 1;
            counts.data_bytes += len;
        }
        (Body::Status { .. }, _) => {
            counts.status_sent += 1;
            counts.status_bytes += len;
        }
        _ => {}
    }
    if !matches!(sim.transmit(dir, bytes, now), Fate::Delivered(_)) && is_data {
        counts.data_lost += 1;
    }
}

/// Loads the scenario's ADU, simulates, and writes the delivered ADU to the
/// scenario's `out` path when one is given.
pub fn run_scenario(scenario: &Scenario) -> Result<SimOutcome, RunError> {
    run_scenario_with(scenario, &SimOptions::default())
}

pub fn run_scenario_with(scenario: &Scenario, opts: &SimOptions) -> Result<SimOutcome, RunError> {
    let path = scenario.adu.as_ref().ok_or(RunError::NoAdu)?;
    let adu = std::fs::read(path).map_err(|source| RunError::Io {
        path: path.clone(),
        source,
    })?;
    let outcome = simulate(scenario, adu, opts)?;
    if let (Some(out), Some(adu)) = (&scenario.out, &outcome.adu) {
        std::fs::write(out, adu).map_err(|source| RunError::Io {
            path: out.clone(),
            source,
        })?;
    }
    Ok(outcome)
}
