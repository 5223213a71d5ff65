//! Per-pass run statistics and their CSV form.

use std::fmt;
use std::io::Write;
use std::ops::Sub;

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Delivered,
    Expired,
    Timeout,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Delivered => "delivered",
            RunStatus::Expired => "expired",
            RunStatus::Timeout => "timeout",
        })
    }
}

/// Cumulative counters sampled during a run. Rows are differences of
/// successive samples, except `bytes_acked` which stays cumulative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub bytes_acked: u64,
    pub data_sent: u64,
    pub data_delivered: u64,
    pub data_lost: u64,
    pub status_sent: u64,
    pub bundles_delivered: u64,
    pub bundles_rejected_checksum: u64,
    pub bundles_expired: u64,
}

impl Sub for Tally {
    type Output = Tally;

    fn sub(self, rhs: Tally) -> Tally {
        Tally {
            bytes_acked: self.bytes_acked - rhs.bytes_acked,
            data_sent: self.data_sent - rhs.data_sent,
            data_delivered: self.data_delivered - rhs.data_delivered,
            data_lost: self.data_lost - rhs.data_lost,
            status_sent: self.status_sent - rhs.status_sent,
            bundles_delivered: self.bundles_delivered - rhs.bundles_delivered,
            bundles_rejected_checksum: self.bundles_rejected_checksum - rhs.bundles_rejected_checksum,
            bundles_expired: self.bundles_expired - rhs.bundles_expired,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassRow {
    pub pass_index: usize,
    pub t_start_s: f64,
    pub t_end_s: f64,
    /// Cumulative object bytes acknowledged at the end of the pass.
    pub bytes_acked: u64,
    pub goodput_bps: f64,
    pub data_sent: u64,
    pub data_delivered: u64,
    pub data_lost: u64,
    pub status_sent: u64,
    pub bundles_delivered: u64,
    pub bundles_rejected_checksum: u64,
    pub bundles_expired: u64,
}

impl PassRow {
    /// Row for one pass from the samples at its start and end.
    pub fn new(pass_index: usize, t_start_s: f64, t_end_s: f64, before: Tally, after: Tally) -> Self {
        let d = after - before;
        let duration = t_end_s - t_start_s;
        let goodput_bps = if duration > 0.0 {
            d.bytes_acked as f64 * 8.0 / duration
        } else {
            0.0
        };
        PassRow {
            pass_index,
            t_start_s,
            t_end_s,
            bytes_acked: after.bytes_acked,
            goodput_bps,
            data_sent: d.data_sent,
            data_delivered: d.data_delivered,
            data_lost: d.data_lost,
            status_sent: d.status_sent,
            bundles_delivered: d.bundles_delivered,
            bundles_rejected_checksum: d.bundles_rejected_checksum,
            bundles_expired: d.bundles_expired,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub rows: Vec<PassRow>,
    pub status: RunStatus,
    pub total_time_s: f64,
    pub passes_used: usize,
}

impl StatsReport {
    pub const COLUMNS: [&'static str; 12] = [
        "pass_index",
        "t_start_s",
        "t_end_s",
        "bytes_acked",
        "goodput_bps",
        "data_sent",
        "data_delivered",
        "data_lost",
        "status_sent",
        "bundles_delivered",
        "bundles_rejected_checksum",
        "bundles_expired",
    ];

    /// Header, one row per pass, then a `#` summary line. Floats use fixed
    /// precision so identical runs give identical bytes.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.pass_index.to_string(),
                format!("{:.6}", r.t_start_s),
                format!("{:.6}", r.t_end_s),
                r.bytes_acked.to_string(),
                format!("{:.1}", r.goodput_bps),
                r.data_sent.to_string(),
                r.data_delivered.to_string(),
                r.data_lost.to_string(),
                r.status_sent.to_string(),
                r.bundles_delivered.to_string(),
                r.bundles_rejected_checksum.to_string(),
                r.bundles_expired.to_string(),
            ])?;
        }
        w.flush()?;
        let mut out = w.into_inner().map_err(|e| e.into_error())?;
        writeln!(
            out,
            "# status={} total_time_s={:.6} passes_used={}",
            self.status, self.total_time_s, self.passes_used
        )?;
        out.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}
