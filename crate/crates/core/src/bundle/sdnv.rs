//! Self-delimiting numeric values: 7 value bits per byte, most significant
//! group first, high bit set on every byte except the last.

use thiserror::Error;

/// Longest encoding of a 64-bit value.
pub const MAX_SDNV_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SdnvError {
    #[error("SDNV did not terminate within 10 bytes")]
    Overflow,
    #[error("input ended inside an SDNV")]
    Truncated,
}

pub fn sdnv_encode(value: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAX_SDNV_LEN);
    sdnv_encode_into(value, &mut out);
    out
}

pub fn sdnv_encode_into(value: u64, out: &mut Vec<u8>) {
    let groups = (64 - value.leading_zeros()).div_ceil(7).max(1);
    for i in (0..groups).rev() {
        let group = ((value >> (7 * i)) & 0x7F) as u8;
        out.push(if i == 0 { group } else { group | 0x80 });
    }
}

/// Decodes one SDNV from the front of `bytes`, returning `(value, consumed)`.
pub fn sdnv_decode(bytes: &[u8]) -> Result<(u64, usize), SdnvError> {
    let mut value: u64 = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if i >= MAX_SDNV_LEN {
            return Err(SdnvError::Overflow);
        }
        // The tenth byte may only contribute the top bit of a u64.
        if i == MAX_SDNV_LEN - 1 && value >> 57 != 0 {
            return Err(SdnvError::Overflow);
        }
        value = (value << 7) | u64::from(b & 0x7F);
        if b & 0x80 == 0 {
            return Ok((value, i + 1));
        }
    }
    if bytes.len() >= MAX_SDNV_LEN {
        Err(SdnvError::Overflow)
    } else {
        Err(SdnvError::Truncated)
    }
}
