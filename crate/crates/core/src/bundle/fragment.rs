//! Proactive fragmentation sized to contact windows.

use thiserror::Error;

use super::block::{Bundle, BundleError, FragmentInfo};
use crate::netsim::ContactPlan;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("contact plan offers no downlink capacity")]
    NoCapacity,
    #[error("safety factor {0} must lie in (0, 1]")]
    InvalidSafety(f64),
}

/// Largest fragment payload that fits the smallest contact window with
/// `safety` headroom: `floor(min window capacity * safety)`, at least 1.
/// The limit does not depend on the ADU size; small ADUs simply yield one
/// fragment.
pub fn fragment_plan(_adu_len: u64, plan: &ContactPlan, safety: f64) -> Result<u64, PlanError> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(PlanError::InvalidSafety(safety));
    }
    let min_capacity = plan
        .windows
        .iter()
        .map(|w| plan.window_capacity(w))
        .min_by(f64::total_cmp)
        .ok_or(PlanError::NoCapacity)?;
    if min_capacity <= 0.0 {
        return Err(PlanError::NoCapacity);
    }
    Ok(((min_capacity * safety).floor() as u64).max(1))
}

/// Splits `b` into `ceil(len / max_payload)` fragments in offset order, each
/// sealed with the parent's checksum suite. An empty payload yields one
/// empty fragment.
pub fn fragment_bundle(b: &Bundle, max_payload: u64) -> Result<Vec<Bundle>, BundleError> {
    if b.is_fragment() {
        return Err(BundleError::Unsupported("re-fragmenting a fragment is not supported"));
    }
    if max_payload == 0 {
        return Err(BundleError::Unsupported("fragment payload limit must be at least 1"));
    }
    let suite = b.suite()?;
    let total = b.payload.len() as u64;
    let make = |offset: u64, chunk: &[u8]| {
        let mut frag = Bundle {
            fragment: Some(FragmentInfo {
                offset,
                total_adu_len: total,
            }),
            checksum: None,
            payload: chunk.to_vec(),
            ..b.clone_header()
        };
        frag.seal(suite);
        frag
    };
    if total == 0 {
        return Ok(vec![make(0, &[])]);
    }
    Ok(b.payload
        .chunks(max_payload.min(usize::MAX as u64) as usize)
        .scan(0u64, |offset, chunk| {
            let start = *offset;
            *offset += chunk.len() as u64;
            Some(make(start, chunk))
        })
        .collect())
}

impl Bundle {
    /// Copy of the primary fields with an empty payload.
    pub(crate) fn clone_header(&self) -> Bundle {
        Bundle {
            dest_eid: self.dest_eid.clone(),
            src_eid: self.src_eid.clone(),
            creation_ts: self.creation_ts,
            seq: self.seq,
            lifetime_s: self.lifetime_s,
            fragment: self.fragment,
            checksum: None,
            payload: Vec::new(),
        }
    }
}
