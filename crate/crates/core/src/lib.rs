//! Delay-tolerant bulk download over intermittent, asymmetric space links.
//!
//! * [`saratoga`]: rate-paced UDP object transfer with hole-list STATUS reports.
//! * [`bundle`]: a minimal bundle agent with proactive fragmentation and
//!   checksum blocks.
//! * [`cl`]: the convergence layer carrying each bundle as one transfer.
//! * [`netsim`]: a deterministic simulator of contact windows, link rates,
//!   delay and loss, plus the scenario runner.
//! * [`stats`]: per-pass counters and their CSV form.

pub mod ranges;
pub mod saratoga;
pub mod bundle;
pub mod netsim;
pub mod cl;
pub mod stats;
