//! Real-socket shell around the transfer state machines.

use std::collections::HashMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use log::{debug, info, warn};
use sha2::{Digest, Sha256};

use orbitdtn::saratoga::{
    decode_packet, encode_packet, Body, ChecksumKind, Flags, ReceiverConfig, ReceiverState,
    SaratogaPacket, SenderConfig, SenderState, MAX_DATAGRAM,
};

/// Longest single wait on the socket, so pacing and timeouts stay responsive.
const POLL: Duration = Duration::from_millis(20);
const MIN_WAIT: Duration = Duration::from_micros(200);
/// After completing, keep answering re-solicitations for this long.
const LINGER: Duration = Duration::from_secs(1);
const MAX_INTEGRITY_FAILURES: u32 = 3;

pub enum SendOutcome {
    Complete,
    Timeout,
}

pub enum RecvOutcome {
    Saved { path: PathBuf, len: u64, sha256: String },
    Timeout,
    IntegrityFailure(u32),
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

fn wait_for(socket: &UdpSocket, d: Duration) -> Result<()> {
    socket.set_read_timeout(Some(d.clamp(MIN_WAIT, POLL)))?;
    Ok(())
}

fn is_timeout(e: &std::io::Error) -> bool {
    matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut)
}

pub fn send(
    data: &[u8],
    name: &str,
    dest: &str,
    rate_bps: u64,
    suite: ChecksumKind,
    timeout: Duration,
) -> Result<SendOutcome> {
    let socket = UdpSocket::bind("0.0.0.0:0").context("binding UDP socket")?;
    socket.connect(dest).with_context(|| format!("resolving {dest}"))?;
    let start = Instant::now();
    let config = SenderConfig {
        rate_bps,
        idle_timeout: timeout,
        ..Default::default()
    };
    let txn = std::process::id();
    let mut sender = SenderState::new(txn, name, data.to_vec(), suite, config, Duration::ZERO);
    let mut buf = vec![0u8; MAX_DATAGRAM + 1];
    loop {
        let now = start.elapsed();
        while let Some(pkt) = sender.next_packet(now) {
            let bytes = encode_packet(&pkt)?;
            match socket.send(&bytes) {
                Ok(_) => {}
                // ICMP port unreachable surfaces here on a connected socket.
                Err(e) if e.kind() == ErrorKind::ConnectionRefused => debug!("send: {e}"),
                Err(e) => return Err(e).context("sending datagram"),
            }
        }
        if sender.is_complete() {
            return Ok(SendOutcome::Complete);
        }
        if sender.is_idle_expired(now) {
            return Ok(SendOutcome::Timeout);
        }
        let wake = sender.next_wake().unwrap_or(now + POLL);
        wait_for(&socket, wake.saturating_sub(now))?;
        match socket.recv(&mut buf) {
            Ok(n) => match decode_packet(&buf[..n]) {
                Ok(pkt) => {
                    sender.on_status(&pkt, start.elapsed());
                }
                Err(e) => warn!("ignoring malformed datagram: {e}"),
            },
            Err(e) if is_timeout(&e) || e.kind() == ErrorKind::ConnectionRefused => {}
            Err(e) => return Err(e).context("receiving datagram"),
        }
    }
}

/// File name for a received object, keeping only its last path component.
fn safe_name(name: &str) -> String {
    match name.rsplit(['/', '\\']).next() {
        Some(n) if !n.is_empty() && n != "." && n != ".." => n.to_owned(),
        _ => "object".to_owned(),
    }
}

pub fn recv(port: u16, out_dir: &Path, timeout: Duration) -> Result<RecvOutcome> {
    let socket = UdpSocket::bind(("0.0.0.0", port)).with_context(|| format!("binding port {port}"))?;
    info!("listening on {}", socket.local_addr()?);
    let config = ReceiverConfig {
        idle_timeout: timeout,
        ..Default::default()
    };
    let start = Instant::now();
    let mut transfers: HashMap<(SocketAddr, u32), ReceiverState> = HashMap::new();
    let mut saved: Option<(RecvOutcome, Instant)> = None;
    let mut last_packet = Instant::now();
    let mut failures = 0;
    let mut buf = vec![0u8; MAX_DATAGRAM + 1];
    loop {
        if let Some((_, at)) = &saved {
            if at.elapsed() >= LINGER && last_packet.elapsed() >= LINGER {
                return Ok(saved.take().expect("checked").0);
            }
        } else if last_packet.elapsed() >= timeout {
            return Ok(RecvOutcome::Timeout);
        }
        wait_for(&socket, POLL)?;
        let (n, peer) = match socket.recv_from(&mut buf) {
            Ok(r) => r,
            Err(e) if is_timeout(&e) || e.kind() == ErrorKind::ConnectionRefused => continue,
            Err(e) => return Err(e).context("receiving datagram"),
        };
        last_packet = Instant::now();
        let pkt = match decode_packet(&buf[..n]) {
            Ok(p) => p,
            Err(e) => {
                warn!("ignoring malformed datagram from {peer}: {e}");
                continue;
            }
        };
        let now = start.elapsed();
        let key = (peer, pkt.transaction_id);
        let (reply, completed, integrity_failed) = match (&pkt.body, transfers.get_mut(&key)) {
            (Body::Metadata(meta), None) => {
                info!("{peer}: txn {} '{}' ({} bytes)", pkt.transaction_id, meta.name, meta.object_len);
                let (rx, outcome) = ReceiverState::open(pkt.transaction_id, meta.clone(), config.clone(), now);
                transfers.insert(key, rx);
                (outcome.status, outcome.completed, false)
            }
            (Body::Metadata(_), Some(rx)) => (Some(rx.on_metadata(now)), false, false),
            (Body::Data { .. }, Some(rx)) => {
                let o = rx.on_data(&pkt, now);
                (o.status, o.completed, o.integrity_failed)
            }
            (Body::Data { .. }, None) => {
                let wants = pkt.flags.contains(Flags::REQUEST_STATUS) || pkt.flags.contains(Flags::EOF);
                let reply = wants.then(|| SaratogaPacket::status(pkt.transaction_id, Flags::NONE, 0, Vec::new()));
                (reply, false, false)
            }
            _ => (None, false, false),
        };
        if let Some(reply) = reply {
            if let Err(e) = socket.send_to(&encode_packet(&reply)?, peer) {
                warn!("reply to {peer}: {e}");
            }
        }
        if integrity_failed {
            failures += 1;
            warn!("txn {}: object failed verification ({failures})", pkt.transaction_id);
            if failures >= MAX_INTEGRITY_FAILURES {
                return Ok(RecvOutcome::IntegrityFailure(failures));
            }
        }
        if completed && saved.is_none() {
            let rx = transfers.get_mut(&key).expect("transfer exists");
            let name = safe_name(&rx.metadata().name);
            let data = rx.release();
            let path = out_dir.join(&name);
            std::fs::write(&path, &data).with_context(|| format!("writing {}", path.display()))?;
            let outcome = RecvOutcome::Saved {
                path,
                len: data.len() as u64,
                sha256: sha256_hex(&data),
            };
            saved = Some((outcome, Instant::now()));
        }
    }
}
