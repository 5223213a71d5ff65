//! Bundle representation, serialization and checksum blocks.
//!
//! Serialized layout:
//!
//! ```text
//! version u8 = 0x06
//! flags SDNV                      bit 0: is_fragment
//! dest_eid  len SDNV + bytes
//! src_eid   len SDNV + bytes
//! creation_ts SDNV, seq SDNV, lifetime_s SDNV
//! [frag_offset SDNV, total_adu_len SDNV]   fragments only
//! blocks: type u8, flags SDNV, body_len SDNV, body
//!   0xC0 checksum (optional, before payload): suite SDNV + digest
//!   0x01 payload (required, last)
//! ```

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::sdnv::{sdnv_decode, sdnv_encode_into, SdnvError};
use crate::saratoga::ChecksumKind;

pub const BUNDLE_VERSION: u8 = 6;
pub const BLOCK_PAYLOAD: u8 = 0x01;
pub const BLOCK_CHECKSUM: u8 = 0xC0;

pub const FLAG_IS_FRAGMENT: u64 = 0x01;

// Suite ids: low nibble picks the digest, 0x10 marks payload-only coverage.
const SUITE_PAYLOAD_ONLY: u64 = 0x10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BundleError {
    #[error("unsupported bundle version {0}")]
    BadVersion(u8),
    #[error("malformed bundle: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Sdnv(#[from] SdnvError),
    #[error("unknown checksum suite {0}")]
    UnknownSuite(u64),
    #[error("{0}")]
    Unsupported(&'static str),
    #[error("bundle lifetime must be positive")]
    InvalidLifetime,
}

/// What a checksum block's digest is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Coverage {
    /// Serialized primary fields followed by the payload block body.
    #[default]
    PrimaryAndPayload,
    /// Payload block body only.
    PayloadOnly,
}

/// Checksum configuration of a bundle agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ChecksumSuite {
    pub algorithm: ChecksumKind,
    pub coverage: Coverage,
}

impl ChecksumSuite {
    pub const NONE: ChecksumSuite = ChecksumSuite {
        algorithm: ChecksumKind::None,
        coverage: Coverage::PrimaryAndPayload,
    };

    pub fn new(algorithm: ChecksumKind) -> Self {
        ChecksumSuite {
            algorithm,
            coverage: Coverage::PrimaryAndPayload,
        }
    }

    pub fn payload_only(algorithm: ChecksumKind) -> Self {
        ChecksumSuite {
            algorithm,
            coverage: Coverage::PayloadOnly,
        }
    }

    /// Suite id carried in the block; `None` when no block is produced.
    pub fn id(self) -> Option<u64> {
        let base = match self.algorithm {
            ChecksumKind::None => return None,
            ChecksumKind::Crc32 => 1,
            ChecksumKind::Sha256 => 2,
        };
        Some(match self.coverage {
            Coverage::PrimaryAndPayload => base,
            Coverage::PayloadOnly => base | SUITE_PAYLOAD_ONLY,
        })
    }

    pub fn from_id(id: u64) -> Result<Self, BundleError> {
        let algorithm = match id & !SUITE_PAYLOAD_ONLY {
            1 => ChecksumKind::Crc32,
            2 => ChecksumKind::Sha256,
            _ => return Err(BundleError::UnknownSuite(id)),
        };
        let coverage = if id & SUITE_PAYLOAD_ONLY != 0 {
            Coverage::PayloadOnly
        } else {
            Coverage::PrimaryAndPayload
        };
        Ok(ChecksumSuite {
            algorithm,
            coverage,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChecksumBlock {
    pub suite_id: u64,
    pub digest: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FragmentInfo {
    pub offset: u64,
    pub total_adu_len: u64,
}

/// Identity of the original bundle; every fragment of it shares this.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BundleId {
    pub src_eid: String,
    pub creation_ts: u64,
    pub seq: u64,
}

impl fmt::Display for BundleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.src_eid, self.creation_ts, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bundle {
    pub dest_eid: String,
    pub src_eid: String,
    /// Seconds since 2000-01-01T00:00:00Z.
    pub creation_ts: u64,
    pub seq: u64,
    pub lifetime_s: u64,
    pub fragment: Option<FragmentInfo>,
    pub checksum: Option<ChecksumBlock>,
    pub payload: Vec<u8>,
}

impl Bundle {
    pub fn is_fragment(&self) -> bool {
        self.fragment.is_some()
    }

    pub fn flags(&self) -> u64 {
        if self.is_fragment() {
            FLAG_IS_FRAGMENT
        } else {
            0
        }
    }

    pub fn id(&self) -> BundleId {
        BundleId {
            src_eid: self.src_eid.clone(),
            creation_ts: self.creation_ts,
            seq: self.seq,
        }
    }

    /// Serialized primary fields, the first half of checksum coverage.
    pub fn primary_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.dest_eid.len() + self.src_eid.len());
        out.push(BUNDLE_VERSION);
        sdnv_encode_into(self.flags(), &mut out);
        for eid in [&self.dest_eid, &self.src_eid] {
            sdnv_encode_into(eid.len() as u64, &mut out);
            out.extend_from_slice(eid.as_bytes());
        }
        sdnv_encode_into(self.creation_ts, &mut out);
        sdnv_encode_into(self.seq, &mut out);
        sdnv_encode_into(self.lifetime_s, &mut out);
        if let Some(frag) = self.fragment {
            sdnv_encode_into(frag.offset, &mut out);
            sdnv_encode_into(frag.total_adu_len, &mut out);
        }
        out
    }

    fn digest(&self, suite: ChecksumSuite) -> Vec<u8> {
        let primary = match suite.coverage {
            Coverage::PrimaryAndPayload => self.primary_bytes(),
            Coverage::PayloadOnly => Vec::new(),
        };
        match suite.algorithm {
            ChecksumKind::None => Vec::new(),
            ChecksumKind::Crc32 => {
                let mut h = crc32fast::Hasher::new();
                h.update(&primary);
                h.update(&self.payload);
                h.finalize().to_be_bytes().to_vec()
            }
            ChecksumKind::Sha256 => {
                let mut h = Sha256::new();
                h.update(&primary);
                h.update(&self.payload);
                h.finalize().to_vec()
            }
        }
    }

    /// Recomputes (or removes) the checksum block for `suite`.
    pub fn seal(&mut self, suite: ChecksumSuite) {
        self.checksum = suite.id().map(|suite_id| ChecksumBlock {
            suite_id,
            digest: self.digest(suite),
        });
    }

    /// Suite of the attached checksum block, if any.
    pub fn suite(&self) -> Result<ChecksumSuite, BundleError> {
        match &self.checksum {
            None => Ok(ChecksumSuite::NONE),
            Some(block) => ChecksumSuite::from_id(block.suite_id),
        }
    }

    /// Seconds after the epoch at which the bundle stops being valid.
    pub fn expiry_ts(&self) -> u64 {
        self.creation_ts.saturating_add(self.lifetime_s)
    }
}

/// True iff there is no checksum block or its digest matches the bundle.
pub fn verify_bundle(b: &Bundle) -> Result<bool, BundleError> {
    let Some(block) = &b.checksum else {
        return Ok(true);
    };
    let suite = ChecksumSuite::from_id(block.suite_id)?;
    Ok(b.digest(suite) == block.digest)
}

/// Lifetime check. A bundle is live through `creation_ts + lifetime_s`
/// inclusive; a clock behind the creation time never expires it.
pub fn is_expired(b: &Bundle, now_ts: u64) -> bool {
    b.expiry_ts() < now_ts
}

fn put_block(out: &mut Vec<u8>, kind: u8, body: &[u8]) {
    out.push(kind);
    sdnv_encode_into(0, out);
    sdnv_encode_into(body.len() as u64, out);
    out.extend_from_slice(body);
}

pub fn serialize_bundle(b: &Bundle) -> Vec<u8> {
    let mut out = b.primary_bytes();
    out.reserve(b.payload.len() + 64);
    if let Some(block) = &b.checksum {
        let mut body = Vec::with_capacity(block.digest.len() + 2);
        sdnv_encode_into(block.suite_id, &mut body);
        body.extend_from_slice(&block.digest);
        put_block(&mut out, BLOCK_CHECKSUM, &body);
    }
    put_block(&mut out, BLOCK_PAYLOAD, &b.payload);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn sdnv(&mut self) -> Result<u64, BundleError> {
        let (v, n) = sdnv_decode(self.buf)?;
        self.buf = &self.buf[n..];
        Ok(v)
    }

    fn bytes(&mut self, len: u64) -> Result<&'a [u8], BundleError> {
        if (self.buf.len() as u64) < len {
            return Err(BundleError::Malformed("field runs past end of input"));
        }
        let (head, tail) = self.buf.split_at(len as usize);
        self.buf = tail;
        Ok(head)
    }

    fn text(&mut self) -> Result<String, BundleError> {
        let len = self.sdnv()?;
        let raw = self.bytes(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| BundleError::Malformed("EID is not UTF-8"))
    }
}

pub fn deserialize_bundle(bytes: &[u8]) -> Result<Bundle, BundleError> {
    let (&version, rest) = bytes
        .split_first()
        .ok_or(BundleError::Malformed("empty input"))?;
    if version != BUNDLE_VERSION {
        return Err(BundleError::BadVersion(version));
    }
    let mut c = Cursor { buf: rest };
    let flags = c.sdnv()?;
    if flags & !FLAG_IS_FRAGMENT != 0 {
        return Err(BundleError::Malformed("unknown bundle flags"));
    }
    let dest_eid = c.text()?;
    let src_eid = c.text()?;
    let creation_ts = c.sdnv()?;
    let seq = c.sdnv()?;
    let lifetime_s = c.sdnv()?;
    let fragment = if flags & FLAG_IS_FRAGMENT != 0 {
        let offset = c.sdnv()?;
        let total_adu_len = c.sdnv()?;
        Some(FragmentInfo {
            offset,
            total_adu_len,
        })
    } else {
        None
    };

    let mut checksum = None;
    let payload = loop {
        if c.buf.is_empty() {
            return Err(BundleError::Malformed("missing payload block"));
        }
        let kind = c.bytes(1)?[0];
        let _block_flags = c.sdnv()?;
        let len = c.sdnv()?;
        let body = c.bytes(len)?;
        match kind {
            BLOCK_PAYLOAD => break body.to_vec(),
            BLOCK_CHECKSUM => {
                if checksum.is_some() {
                    return Err(BundleError::Malformed("duplicate checksum block"));
                }
                let mut bc = Cursor { buf: body };
                let suite_id = bc.sdnv()?;
                checksum = Some(ChecksumBlock {
                    suite_id,
                    digest: bc.buf.to_vec(),
                });
            }
            // Extension blocks this agent does not understand are skipped.
            _ => {}
        }
    };
    if !c.buf.is_empty() {
        return Err(BundleError::Malformed("data after payload block"));
    }
    if let Some(frag) = fragment {
        let end = frag.offset.checked_add(payload.len() as u64);
        if end.is_none_or(|e| e > frag.total_adu_len) {
            return Err(BundleError::Malformed("fragment exceeds total ADU length"));
        }
    }
    Ok(Bundle {
        dest_eid,
        src_eid,
        creation_ts,
        seq,
        lifetime_s,
        fragment,
        checksum,
        payload,
    })
}
