//! Minimal bundle agent: SDNV encoding, bundle serialization, lifetime,
//! proactive fragmentation, reassembly, and checksum blocks that give bundles
//! the error detection the base design lacks.

mod agent;
mod block;
mod fragment;
mod reassembly;
pub mod sdnv;

pub use agent::BundleAgent;
pub use block::{
    deserialize_bundle, is_expired, serialize_bundle, verify_bundle, Bundle, BundleError,
    BundleId, ChecksumBlock, ChecksumSuite, Coverage, FragmentInfo, BLOCK_CHECKSUM,
    BLOCK_PAYLOAD, BUNDLE_VERSION,
};
pub use fragment::{fragment_bundle, fragment_plan, PlanError};
pub use reassembly::{
    ReassemblyBuffer, ReassemblyCounters, ReassemblyError, ReassemblyKey, Reassembler,
};
pub use sdnv::{sdnv_decode, sdnv_encode, SdnvError};

/// Seconds between the Unix epoch and 2000-01-01T00:00:00Z.
pub const DTN_EPOCH_UNIX_S: u64 = 946_684_800;
