use std::collections::HashMap;

use super::block::{Bundle, BundleError, ChecksumSuite};

/// Bundle creation state: checksum configuration and per-source sequence
/// counters for one agent run.
#[derive(Debug, Clone, Default)]
pub struct BundleAgent {
    suite: ChecksumSuite,
    next_seq: HashMap<String, u64>,
}

impl BundleAgent {
    pub fn new(suite: ChecksumSuite) -> Self {
        BundleAgent {
            suite,
            next_seq: HashMap::new(),
        }
    }

    pub fn suite(&self) -> ChecksumSuite {
        self.suite
    }

    /// Wraps `adu` in a new bundle created at `now_ts` (seconds since 2000).
    pub fn create_bundle(
        &mut self,
        adu: Vec<u8>,
        src: &str,
        dst: &str,
        lifetime_s: u64,
        now_ts: u64,
    ) -> Result<Bundle, BundleError> {
        if lifetime_s == 0 {
            return Err(BundleError::InvalidLifetime);
        }
        let counter = self.next_seq.entry(src.to_owned()).or_insert(0);
        let seq = *counter;
        *counter += 1;
        let mut bundle = Bundle {
            dest_eid: dst.to_owned(),
            src_eid: src.to_owned(),
            creation_ts: now_ts,
            seq,
            lifetime_s,
            fragment: None,
            checksum: None,
            payload: adu,
        };
        bundle.seal(self.suite);
        Ok(bundle)
    }
}
