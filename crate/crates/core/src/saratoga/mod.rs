//! Rate-paced UDP object transfer with selective negative acknowledgment.
//!
//! The sender streams DATA at a configured rate without waiting for
//! acknowledgments. The receiver periodically answers with STATUS packets
//! carrying its contiguous progress and a list of holes, which the sender
//! retransmits ahead of new data. All state machines here are pure: they take
//! the current time as an argument and never perform I/O.

mod holes;
mod packet;
mod receiver;
mod sender;

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

pub use holes::{compute_holes, HoleError, HoleList};
pub use packet::{
    decode_packet, encode_packet, encode_packet_with_limit, Body, DecodeError, EncodeError,
    Flags, Hole, Metadata, ObjectChecksum, SaratogaPacket, DATA_HEADER_LEN, DEFAULT_PAYLOAD,
    HEADER_LEN, KIND_BEACON, KIND_DATA, KIND_METADATA, KIND_REQUEST, KIND_STATUS, MAX_DATAGRAM,
    MAX_HOLES, MAX_PAYLOAD, REQUEST_GET, VERSION,
};
pub use receiver::{DataOutcome, ReceiverConfig, ReceiverCounters, ReceiverState};
pub use sender::{SenderConfig, SenderCounters, SenderPhase, SenderState};

/// Integrity check attached to a transferred object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ChecksumKind {
    #[default]
    None,
    Crc32,
    Sha256,
}

impl ChecksumKind {
    pub fn wire_id(self) -> u8 {
        match self {
            ChecksumKind::None => 0,
            ChecksumKind::Crc32 => 1,
            ChecksumKind::Sha256 => 2,
        }
    }

    pub fn from_wire_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(ChecksumKind::None),
            1 => Some(ChecksumKind::Crc32),
            2 => Some(ChecksumKind::Sha256),
            _ => None,
        }
    }

    pub fn digest_len(self) -> usize {
        match self {
            ChecksumKind::None => 0,
            ChecksumKind::Crc32 => 4,
            ChecksumKind::Sha256 => 32,
        }
    }

    /// Computes the declared checksum of `bytes` for this kind.
    pub fn compute(self, bytes: &[u8]) -> ObjectChecksum {
        match self {
            ChecksumKind::None => ObjectChecksum::None,
            ChecksumKind::Crc32 => ObjectChecksum::Crc32(crc32fast::hash(bytes)),
            ChecksumKind::Sha256 => ObjectChecksum::Sha256(Sha256::digest(bytes).into()),
        }
    }
}

impl fmt::Display for ChecksumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChecksumKind::None => "none",
            ChecksumKind::Crc32 => "crc32",
            ChecksumKind::Sha256 => "sha256",
        })
    }
}

impl FromStr for ChecksumKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ChecksumKind::None),
            "crc32" => Ok(ChecksumKind::Crc32),
            "sha256" => Ok(ChecksumKind::Sha256),
            other => Err(format!("unknown checksum kind `{other}` (none|crc32|sha256)")),
        }
    }
}

/// End-of-transfer integrity gate: true when the declared checksum is absent
/// or matches `bytes`. A length mismatch never verifies.
pub fn verify_object(meta: &Metadata, bytes: &[u8]) -> bool {
    if bytes.len() as u64 != meta.object_len {
        return false;
    }
    match meta.checksum {
        ObjectChecksum::None => true,
        ref declared => declared.kind().compute(bytes) == *declared,
    }
}
