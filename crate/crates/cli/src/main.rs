//! `orbitdtn`: real-UDP transfers, scenario runs and fragment planning.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 timeout, 3 integrity
//! failure, 4 bundle lifetime expired before delivery.

mod udp;

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use orbitdtn::bundle::fragment_plan;
use orbitdtn::netsim::{run_scenario, Scenario};
use orbitdtn::saratoga::ChecksumKind;
use orbitdtn::stats::RunStatus;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_TIMEOUT: u8 = 2;
const EXIT_INTEGRITY: u8 = 3;
const EXIT_EXPIRED: u8 = 4;

#[derive(Parser)]
#[command(name = "orbitdtn", version, about = "Delay-tolerant bulk download over intermittent links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Send a file to a receiver over UDP.
    Send {
        file: PathBuf,
        /// Receiver address, `host:port`.
        dest: String,
        /// Send rate in bits per second.
        #[arg(long)]
        rate: u64,
        #[arg(long, default_value = "sha256")]
        suite: ChecksumKind,
        /// Give up after this many seconds without a STATUS.
        #[arg(long, default_value_t = 10.0)]
        timeout: f64,
    },
    /// Receive one file over UDP into a directory.
    Recv {
        port: u16,
        #[arg(long)]
        out: PathBuf,
        /// Give up after this many seconds without a packet.
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
    },
    /// Run a simulated scenario and write per-pass statistics as CSV.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Print the fragment plan for an ADU without simulating.
    Plan {
        adu_len: u64,
        scenario: PathBuf,
        #[arg(long, value_parser = parse_safety)]
        safety: Option<f64>,
    },
}

fn parse_safety(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("safety must lie in (0, 1], got {v}"))
    }
}

fn secs(s: f64) -> Result<Duration> {
    Duration::try_from_secs_f64(s).with_context(|| format!("invalid duration {s}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ORBITDTN_LOG", "warn"))
        .format_timestamp_millis()
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Send {
            file,
            dest,
            rate,
            suite,
            timeout,
        } => {
            anyhow::ensure!(rate > 0, "--rate must be positive");
            let data = std::fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            let name = file
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "object".into());
            let outcome = udp::send(&data, &name, &dest, rate, suite, secs(timeout)?)?;
            Ok(match outcome {
                udp::SendOutcome::Complete => {
                    println!("sent {name} ({} bytes) sha256 {}", data.len(), udp::sha256_hex(&data));
                    EXIT_OK
                }
                udp::SendOutcome::Timeout => {
                    eprintln!("no status from {dest} within {timeout} s");
                    EXIT_TIMEOUT
                }
            })
        }
        Command::Recv { port, out, timeout } => {
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            Ok(match udp::recv(port, &out, secs(timeout)?)? {
                udp::RecvOutcome::Saved { path, len, sha256 } => {
                    println!("received {} ({len} bytes) sha256 {sha256}", path.display());
                    EXIT_OK
                }
                udp::RecvOutcome::Timeout => {
                    eprintln!("no transfer completed within {timeout} s of silence");
                    EXIT_TIMEOUT
                }
                udp::RecvOutcome::IntegrityFailure(n) => {
                    eprintln!("object failed verification {n} times; giving up");
                    EXIT_INTEGRITY
                }
            })
        }
        Command::Run { scenario, csv } => {
            let s = Scenario::load(&scenario)?;
            let outcome = run_scenario(&s)?;
            let file = File::create(&csv).with_context(|| format!("creating {}", csv.display()))?;
            outcome.report.write_csv(BufWriter::new(file))?;
            let r = &outcome.report;
            println!(
                "status {} after {:.3} s, {} pass(es) used, {} fragment(s)",
                r.status, r.total_time_s, r.passes_used, outcome.fragments
            );
            Ok(match r.status {
                RunStatus::Delivered => EXIT_OK,
                RunStatus::Timeout => EXIT_TIMEOUT,
                RunStatus::Expired => EXIT_EXPIRED,
            })
        }
        Command::Plan {
            adu_len,
            scenario,
            safety,
        } => {
            let s = Scenario::load(&scenario)?;
            let safety = safety.unwrap_or(s.safety);
            let max = fragment_plan(adu_len, &s.plan, safety)?;
            println!("max_payload {max}");
            if adu_len == 0 {
                eprintln!("warning: ADU length is 0; fragment table is empty");
            }
            println!("offset,length");
            let mut offset = 0;
            while offset < adu_len {
                let len = max.min(adu_len - offset);
                println!("{offset},{len}");
                offset += len;
            }
            Ok(EXIT_OK)
        }
    }
}
