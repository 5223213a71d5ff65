//! Wire codec for transfer packets.
//!
//! Every packet starts with an 8-byte header:
//!
//! ```text
//! version u8 (=1) | kind u8 | flags u16 | transaction_id u32
//! ```
//!
//! All integers are big-endian and offsets are 64 bits wide.

use std::fmt;

use thiserror::Error;

use super::ChecksumKind;

pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 8;
/// Fixed part of a DATA packet: header plus the 64-bit offset.
pub const DATA_HEADER_LEN: usize = HEADER_LEN + 8;
pub const MAX_DATAGRAM: usize = 1472;
pub const MAX_PAYLOAD: usize = MAX_DATAGRAM - DATA_HEADER_LEN;
pub const DEFAULT_PAYLOAD: usize = 1024;
pub const MAX_HOLES: usize = u16::MAX as usize;

pub const KIND_BEACON: u8 = 0x00;
pub const KIND_REQUEST: u8 = 0x01;
pub const KIND_METADATA: u8 = 0x02;
pub const KIND_DATA: u8 = 0x03;
pub const KIND_STATUS: u8 = 0x04;

pub const REQUEST_GET: u8 = 0x01;

/// Header flag bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Flags(pub u16);

impl Flags {
    pub const NONE: Flags = Flags(0);
    /// DATA: receiver should answer with a STATUS.
    pub const REQUEST_STATUS: Flags = Flags(1 << 0);
    /// DATA: last segment of the object.
    pub const EOF: Flags = Flags(1 << 1);
    /// STATUS: the whole object was received and verified.
    pub const TRANSFER_COMPLETE: Flags = Flags(1 << 2);
    /// STATUS: the receiver holds METADATA for this transaction.
    pub const METADATA_RECEIVED: Flags = Flags(1 << 3);

    pub fn contains(self, other: Flags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn with(self, other: Flags) -> Flags {
        Flags(self.0 | other.0)
    }
}

impl std::ops::BitOr for Flags {
    type Output = Flags;
    fn bitor(self, rhs: Flags) -> Flags {
        self.with(rhs)
    }
}

/// A half-open byte range `[start, end)` missing at the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Hole {
    pub start: u64,
    pub end: u64,
}

impl Hole {
    pub fn new(start: u64, end: u64) -> Self {
        Hole { start, end }
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl From<std::ops::Range<u64>> for Hole {
    fn from(r: std::ops::Range<u64>) -> Self {
        Hole::new(r.start, r.end)
    }
}

impl fmt::Display for Hole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metadata {
    pub object_len: u64,
    pub checksum: ObjectChecksum,
    pub name: String,
}

/// Declared integrity value for a whole object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObjectChecksum {
    None,
    Crc32(u32),
    Sha256([u8; 32]),
}

impl ObjectChecksum {
    pub fn kind(&self) -> ChecksumKind {
        match self {
            ObjectChecksum::None => ChecksumKind::None,
            ObjectChecksum::Crc32(_) => ChecksumKind::Crc32,
            ObjectChecksum::Sha256(_) => ChecksumKind::Sha256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Beacon { eid: String },
    Request { kind: u8, path: String },
    Metadata(Metadata),
    Data { offset: u64, payload: Vec<u8> },
    Status { progress: u64, holes: Vec<Hole> },
}

impl Body {
    fn kind_byte(&self) -> u8 {
        match self {
            Body::Beacon { .. } => KIND_BEACON,
            Body::Request { .. } => KIND_REQUEST,
            Body::Metadata(_) => KIND_METADATA,
            Body::Data { .. } => KIND_DATA,
            Body::Status { .. } => KIND_STATUS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaratogaPacket {
    pub flags: Flags,
    pub transaction_id: u32,
    pub body: Body,
}

impl SaratogaPacket {
    pub fn beacon(eid: impl Into<String>) -> Self {
        SaratogaPacket {
            flags: Flags::NONE,
            transaction_id: 0,
            body: Body::Beacon { eid: eid.into() },
        }
    }

    pub fn data(transaction_id: u32, flags: Flags, offset: u64, payload: Vec<u8>) -> Self {
        SaratogaPacket {
            flags,
            transaction_id,
            body: Body::Data { offset, payload },
        }
    }

    pub fn status(transaction_id: u32, flags: Flags, progress: u64, holes: Vec<Hole>) -> Self {
        SaratogaPacket {
            flags,
            transaction_id,
            body: Body::Status { progress, holes },
        }
    }

    pub fn metadata(transaction_id: u32, meta: Metadata) -> Self {
        SaratogaPacket {
            flags: Flags::NONE,
            transaction_id,
            body: Body::Metadata(meta),
        }
    }

    pub fn is_data(&self) -> bool {
        matches!(self.body, Body::Data { .. })
    }

    pub fn is_status(&self) -> bool {
        matches!(self.body, Body::Status { .. })
    }

    /// Encoded size in bytes.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + match &self.body {
                Body::Beacon { eid } => 2 + eid.len(),
                Body::Request { path, .. } => 1 + 2 + path.len(),
                Body::Metadata(m) => {
                    8 + 1 + m.checksum.kind().digest_len() + 2 + m.name.len()
                }
                Body::Data { payload, .. } => 8 + payload.len(),
                Body::Status { holes, .. } => 8 + 2 + 16 * holes.len(),
            }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("payload of {len} bytes exceeds the {max}-byte limit")]
    Oversize { len: usize, max: usize },
    #[error("{0} holes exceed the 65535-entry STATUS limit")]
    TooManyHoles(usize),
    #[error("{field} of {len} bytes does not fit a 16-bit length")]
    FieldTooLong { field: &'static str, len: usize },
    #[error("invalid hole list: {0}")]
    MalformedHoles(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown packet kind 0x{0:02x}")]
    UnknownType(u8),
    #[error("packet truncated")]
    Truncated,
    #[error("malformed STATUS hole list")]
    MalformedHoles,
    #[error("unknown checksum kind {0}")]
    UnknownChecksum(u8),
    #[error("text field is not valid UTF-8")]
    BadText,
    #[error("{0} unexpected bytes after packet body")]
    TrailingBytes(usize),
}

fn check_holes(holes: &[Hole]) -> bool {
    holes.iter().all(|h| h.start < h.end) && holes.windows(2).all(|w| w[0].end <= w[1].start)
}

fn put_text(out: &mut Vec<u8>, field: &'static str, text: &str) -> Result<(), EncodeError> {
    let len = u16::try_from(text.len()).map_err(|_| EncodeError::FieldTooLong {
        field,
        len: text.len(),
    })?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(text.as_bytes());
    Ok(())
}

/// Encodes with the default DATA payload cap.
pub fn encode_packet(pkt: &SaratogaPacket) -> Result<Vec<u8>, EncodeError> {
    encode_packet_with_limit(pkt, DEFAULT_PAYLOAD)
}

/// Encodes `pkt`, rejecting DATA payloads larger than `max_payload`
/// (itself clamped to the 1456-byte hard cap).
pub fn encode_packet_with_limit(
    pkt: &SaratogaPacket,
    max_payload: usize,
) -> Result<Vec<u8>, EncodeError> {
    let max_payload = max_payload.min(MAX_PAYLOAD);
    let mut out = Vec::with_capacity(pkt.encoded_len());
    out.push(VERSION);
    out.push(pkt.body.kind_byte());
    out.extend_from_slice(&pkt.flags.0.to_be_bytes());
    out.extend_from_slice(&pkt.transaction_id.to_be_bytes());
    match &pkt.body {
        Body::Beacon { eid } => put_text(&mut out, "eid", eid)?,
        Body::Request { kind, path } => {
            out.push(*kind);
            put_text(&mut out, "path", path)?;
        }
        Body::Metadata(m) => {
            out.extend_from_slice(&m.object_len.to_be_bytes());
            out.push(m.checksum.kind().wire_id());
            match &m.checksum {
                ObjectChecksum::None => {}
                ObjectChecksum::Crc32(v) => out.extend_from_slice(&v.to_be_bytes()),
                ObjectChecksum::Sha256(d) => out.extend_from_slice(d),
            }
            put_text(&mut out, "name", &m.name)?;
        }
        Body::Data { offset, payload } => {
            if payload.len() > max_payload {
                return Err(EncodeError::Oversize {
                    len: payload.len(),
                    max: max_payload,
                });
            }
            out.extend_from_slice(&offset.to_be_bytes());
            out.extend_from_slice(payload);
        }
        Body::Status { progress, holes } => {
            if holes.len() > MAX_HOLES {
                return Err(EncodeError::TooManyHoles(holes.len()));
            }
            if !check_holes(holes) {
                return Err(EncodeError::MalformedHoles(
                    holes.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(" "),
                ));
            }
            out.extend_from_slice(&progress.to_be_bytes());
            out.extend_from_slice(&(holes.len() as u16).to_be_bytes());
            for h in holes {
                out.extend_from_slice(&h.start.to_be_bytes());
                out.extend_from_slice(&h.end.to_be_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < n {
            return Err(DecodeError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn text(&mut self) -> Result<String, DecodeError> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| DecodeError::BadText)
    }
}

pub fn decode_packet(bytes: &[u8]) -> Result<SaratogaPacket, DecodeError> {
    let mut r = Reader { buf: bytes };
    let version = r.u8()?;
    if version != VERSION {
        return Err(DecodeError::BadVersion(version));
    }
    let kind = r.u8()?;
    if kind > KIND_STATUS {
        return Err(DecodeError::UnknownType(kind));
    }
    let flags = Flags(r.u16()?);
    let transaction_id = r.u32()?;
    let body = match kind {
        KIND_BEACON => Body::Beacon { eid: r.text()? },
        KIND_REQUEST => {
            let kind = r.u8()?;
            Body::Request {
                kind,
                path: r.text()?,
            }
        }
        KIND_METADATA => {
            let object_len = r.u64()?;
            let ck = r.u8()?;
            let checksum = match ChecksumKind::from_wire_id(ck) {
                Some(ChecksumKind::None) => ObjectChecksum::None,
                Some(ChecksumKind::Crc32) => ObjectChecksum::Crc32(r.u32()?),
                Some(ChecksumKind::Sha256) => {
                    ObjectChecksum::Sha256(r.take(32)?.try_into().unwrap())
                }
                None => return Err(DecodeError::UnknownChecksum(ck)),
            };
            let name = r.text()?;
            Body::Metadata(Metadata {
                object_len,
                checksum,
                name,
            })
        }
        KIND_DATA => {
            let offset = r.u64()?;
            Body::Data {
                offset,
                payload: r.buf.to_vec(),
            }
        }
        KIND_STATUS => {
            let progress = r.u64()?;
            let count = r.u16()? as usize;
            let mut holes = Vec::with_capacity(count.min(r.buf.len() / 16));
            for _ in 0..count {
                let start = r.u64()?;
                let end = r.u64()?;
                holes.push(Hole { start, end });
            }
            if !check_holes(&holes) {
                return Err(DecodeError::MalformedHoles);
            }
            Body::Status { progress, holes }
        }
        _ => unreachable!(),
    };
    if !r.buf.is_empty() && kind != KIND_DATA {
        return Err(DecodeError::TrailingBytes(r.buf.len()));
    }
    Ok(SaratogaPacket {
        flags,
        transaction_id,
        body,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn data_layout() {
        let pkt = SaratogaPacket::data(1, Flags::NONE, 0, vec![0xAA, 0xBB]);
        let bytes = encode_packet(&pkt).unwrap();
        let expected = [
            0x01, 0x03, 0x00, 0x00, 0x00, 0x00, 0x00, 0x01, //
            0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, //
            0xAA, 0xBB,
        ];
        assert_eq!(bytes, expected);
        assert_eq!(decode_packet(&bytes).unwrap(), pkt);
    }

    #[test]
    fn status_layout() {
        let pkt = SaratogaPacket::status(1, Flags::NONE, 100, vec![Hole::new(100, 200)]);
        let bytes = encode_packet(&pkt).unwrap();
        let mut expected = vec![0x01, 0x04, 0x00, 0x00, 0x00, 0x00, 0x00, 0x01];
        expected.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0, 100]);
        expected.extend_from_slice(&[0, 1]);
        expected.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0, 100]);
        expected.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0, 200]);
        assert_eq!(bytes, expected);
        assert_eq!(bytes.len(), pkt.encoded_len());
    }

    #[test]
    fn empty_beacon() {
        let bytes = encode_packet(&SaratogaPacket::beacon("")).unwrap();
        assert_eq!(bytes, [0x01, 0x00, 0, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn metadata_layout() {
        let pkt = SaratogaPacket::metadata(
            7,
            Metadata {
                object_len: 9,
                checksum: ObjectChecksum::Crc32(0xCBF43926),
                name: "ab".into(),
            },
        );
        let bytes = encode_packet(&pkt).unwrap();
        assert_eq!(
            bytes,
            [
                0x01, 0x02, 0, 0, 0, 0, 0, 7, //
                0, 0, 0, 0, 0, 0, 0, 9, //
                1, 0xCB, 0xF4, 0x39, 0x26, //
                0, 2, b'a', b'b'
            ]
        );
        assert_eq!(decode_packet(&bytes).unwrap(), pkt);
    }

    #[test]
    fn flag_bits() {
        let pkt = SaratogaPacket::data(2, Flags::REQUEST_STATUS | Flags::EOF, 5, vec![]);
        let bytes = encode_packet(&pkt).unwrap();
        assert_eq!(&bytes[2..4], &[0x00, 0x03]);
        let st = SaratogaPacket::status(
            2,
            Flags::TRANSFER_COMPLETE | Flags::METADATA_RECEIVED,
            0,
            vec![],
        );
        assert_eq!(&encode_packet(&st).unwrap()[2..4], &[0x00, 0x0C]);
    }

    #[test]
    fn oversize_payload() {
        let pkt = SaratogaPacket::data(1, Flags::NONE, 0, vec![0; DEFAULT_PAYLOAD + 1]);
        assert!(matches!(encode_packet(&pkt), Err(EncodeError::Oversize { .. })));
        assert!(encode_packet_with_limit(&pkt, MAX_PAYLOAD).is_ok());
        let huge = SaratogaPacket::data(1, Flags::NONE, 0, vec![0; MAX_PAYLOAD + 1]);
        assert!(encode_packet_with_limit(&huge, usize::MAX).is_err());
        assert_eq!(
            encode_packet_with_limit(
                &SaratogaPacket::data(1, Flags::NONE, 0, vec![0; MAX_PAYLOAD]),
                MAX_PAYLOAD
            )
            .unwrap()
            .len(),
            MAX_DATAGRAM
        );
    }

    #[test]
    fn too_many_holes() {
        let holes = (0..=MAX_HOLES as u64).map(|i| Hole::new(2 * i, 2 * i + 1)).collect();
        let pkt = SaratogaPacket::status(1, Flags::NONE, 0, holes);
        assert_eq!(encode_packet(&pkt), Err(EncodeError::TooManyHoles(MAX_HOLES + 1)));
    }

    #[test]
    fn decode_errors() {
        assert_eq!(
            decode_packet(&[0x01, 0x03, 0, 0, 0, 0, 0, 1]),
            Err(DecodeError::Truncated)
        );
        assert_eq!(decode_packet(&[0x02, 0x03]), Err(DecodeError::BadVersion(2)));
        assert_eq!(
            decode_packet(&[0x01, 0x09, 0, 0, 0, 0, 0, 0]),
            Err(DecodeError::UnknownType(9))
        );
        assert_eq!(decode_packet(&[]), Err(DecodeError::Truncated));

        let mut st = vec![0x01, 0x04, 0, 0, 0, 0, 0, 1];
        st.extend_from_slice(&0u64.to_be_bytes());
        st.extend_from_slice(&2u16.to_be_bytes());
        for v in [50u64, 60, 40, 45] {
            st.extend_from_slice(&v.to_be_bytes());
        }
        assert_eq!(decode_packet(&st), Err(DecodeError::MalformedHoles));

        let mut inverted = vec![0x01, 0x04, 0, 0, 0, 0, 0, 1];
        inverted.extend_from_slice(&0u64.to_be_bytes());
        inverted.extend_from_slice(&1u16.to_be_bytes());
        inverted.extend_from_slice(&9u64.to_be_bytes());
        inverted.extend_from_slice(&3u64.to_be_bytes());
        assert_eq!(decode_packet(&inverted), Err(DecodeError::MalformedHoles));
    }

    fn arb_holes() -> impl Strategy<Value = Vec<Hole>> {
        proptest::collection::vec((1u64..1000, 1u64..1000), 0..20).prop_map(|gaps| {
            let mut cursor = 0u64;
            gaps.into_iter()
                .map(|(gap, len)| {
                    let start = cursor + gap;
                    cursor = start + len;
                    Hole::new(start, cursor)
                })
                .collect()
        })
    }

    fn arb_checksum() -> impl Strategy<Value = ObjectChecksum> {
        prop_oneof![
            Just(ObjectChecksum::None),
            any::<u32>().prop_map(ObjectChecksum::Crc32),
            any::<[u8; 32]>().prop_map(ObjectChecksum::Sha256),
        ]
    }

    fn arb_packet() -> impl Strategy<Value = SaratogaPacket> {
        let body = prop_oneof![
            ".{0,40}".prop_map(|eid| Body::Beacon { eid }),
            (any::<u8>(), ".{0,40}").prop_map(|(kind, path)| Body::Request { kind, path }),
            (any::<u64>(), arb_checksum(), ".{0,40}").prop_map(|(object_len, checksum, name)| {
                Body::Metadata(Metadata {
                    object_len,
                    checksum,
                    name,
                })
            }),
            (any::<u64>(), proptest::collection::vec(any::<u8>(), 0..=DEFAULT_PAYLOAD))
                .prop_map(|(offset, payload)| Body::Data { offset, payload }),
            (any::<u64>(), arb_holes()).prop_map(|(progress, holes)| Body::Status { progress, holes }),
        ];
        (0u16..16, any::<u32>(), body).prop_map(|(flags, transaction_id, body)| SaratogaPacket {
            flags: Flags(flags),
            transaction_id,
            body,
        })
    }

    proptest! {
        #[test]
        fn round_trip(pkt in arb_packet()) {
            let bytes = encode_packet(&pkt).unwrap();
            prop_assert_eq!(bytes.len(), pkt.encoded_len());
            prop_assert_eq!(decode_packet(&bytes).unwrap(), pkt);
        }

        #[test]
        fn fuzzed_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = decode_packet(&bytes);
        }

        #[test]
        fn fuzzed_headers_never_panic(kind in 0u8..6, rest in proptest::collection::vec(any::<u8>(), 0..120)) {
            let mut bytes = vec![VERSION, kind];
            bytes.extend(rest);
            if let Ok(pkt) = decode_packet(&bytes) {
                // Anything accepted must re-encode to the same bytes.
                prop_assert_eq!(encode_packet_with_limit(&pkt, MAX_PAYLOAD).unwrap(), bytes);
            }
        }
    }
}
