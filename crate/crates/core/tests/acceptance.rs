//! End-to-end acceptance checks. Prints one `[PASS]`/`[FAIL]` line per
//! criterion and exits non-zero if any fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use orbitdtn::bundle::{
    deserialize_bundle, fragment_bundle, fragment_plan, is_expired, sdnv_decode, sdnv_encode,
    serialize_bundle, BundleAgent, ChecksumSuite, Reassembler,
};
use orbitdtn::netsim::{
    simulate, ContactPlan, Corruption, LinkParams, Scenario, SimOptions, SimOutcome, Window,
};
use orbitdtn::ranges::RangeSet;
use orbitdtn::saratoga::{
    compute_holes, decode_packet, encode_packet, ChecksumKind, Flags, Hole, Metadata,
    SaratogaPacket,
};
use orbitdtn::stats::RunStatus;

// Tolerances.
const MULTIPASS_MIN_PASSES: usize = 3;
const MULTIPASS_MAX_WALL: Duration = Duration::from_secs(60);
const GOODPUT_FRACTION: f64 = 0.9;
const ASYMMETRY_RATIO: u64 = 500;
const STATUS_BYTE_FRACTION: f64 = 0.02;
const TRIALS: u64 = 100;
const HOLE_CASES: u32 = 10_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_adu(len: usize, seed: u64) -> Vec<u8> {
    let mut v = vec![0; len];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut v);
    v
}

fn digest(b: &[u8]) -> [u8; 32] {
    Sha256::digest(b).into()
}

fn delivered_intact(out: &SimOutcome, adu_hash: &[u8; 32]) -> bool {
    out.report.status == RunStatus::Delivered && out.adu.as_deref().map(digest).as_ref() == Some(adu_hash)
}

fn scenario(windows: &[(f64, f64)], down: LinkParams, up: LinkParams, seed: u64, suite: ChecksumKind) -> Scenario {
    Scenario {
        plan: ContactPlan {
            windows: windows.iter().map(|&(s, e)| Window::new(s, e)).collect(),
            down,
            up,
            seed,
            ..Default::default()
        },
        suite,
        ..Default::default()
    }
}

fn multipass() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/multipass.scn");
    let s = match Scenario::load(&path) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("cannot load {}: {e}", path.display())),
    };
    let adu = random_adu(15_000_000, 1);
    let hash = digest(&adu);
    let expected_frags = match fragment_plan(adu.len() as u64, &s.plan, s.safety) {
        Ok(max) => (adu.len() as u64).div_ceil(max),
        Err(e) => return outcome(false, format!("fragment_plan failed: {e}")),
    };
    let start = Instant::now();
    let out = simulate(&s, adu, &SimOptions::default()).expect("simulate");
    let wall = start.elapsed();
    let pass = delivered_intact(&out, &hash)
        && out.report.passes_used >= MULTIPASS_MIN_PASSES
        && out.fragments as u64 == expected_frags
        && out.transfers_completed == expected_frags
        && wall < MULTIPASS_MAX_WALL;
    outcome(
        pass,
        format!(
            "status {}, hash {}, passes_used {} (>= {MULTIPASS_MIN_PASSES}), fragments {}/{} completed (plan {expected_frags}), sim {:.0} s, wall {:.2} s (< {} s)",
            out.report.status,
            if delivered_intact(&out, &hash) { "equal" } else { "DIFFERENT" },
            out.report.passes_used,
            out.transfers_completed,
            out.fragments,
            out.report.total_time_s,
            wall.as_secs_f64(),
            MULTIPASS_MAX_WALL.as_secs()
        ),
    )
}

fn full_scale() -> Outcome {
    // Ten times the multipass scenario: ten times the ADU and pass length.
    let windows: Vec<(f64, f64)> = (0..5).map(|i| (300.0 + i as f64 * 5880.0, 500.0 + i as f64 * 5880.0)).collect();
    let mut s = scenario(
        &windows,
        LinkParams::new(2_000_000, 5.0, 0.01),
        LinkParams::new(9600, 5.0, 0.01),
        2024,
        ChecksumKind::Sha256,
    );
    s.max_time_s = 30_000;
    let adu = random_adu(150_000_000, 2);
    let hash = digest(&adu);
    let start = Instant::now();
    let out = simulate(&s, adu, &SimOptions::default()).expect("simulate");
    outcome(
        delivered_intact(&out, &hash),
        format!(
            "150 MB: status {}, passes_used {}, {} fragments, sim {:.0} s, wall {:.1} s",
            out.report.status,
            out.report.passes_used,
            out.fragments,
            out.report.total_time_s,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn utilization() -> Outcome {
    let rate = 8_000_000;
    let s = scenario(
        &[(0.0, 60.0)],
        LinkParams::new(rate, 5.0, 0.0),
        LinkParams::new(9600, 5.0, 0.0),
        3,
        ChecksumKind::Sha256,
    );
    let adu = random_adu(20_000_000, 3);
    let hash = digest(&adu);
    let out = simulate(&s, adu, &SimOptions::default()).expect("simulate");
    let row = out.report.rows.first();
    let goodput = row.map_or(0.0, |r| r.goodput_bps);
    let threshold = GOODPUT_FRACTION * rate as f64;
    outcome(
        delivered_intact(&out, &hash) && row.map(|r| r.pass_index) == Some(1) && goodput >= threshold,
        format!("goodput {goodput:.0} bps vs >= {threshold:.0} ({GOODPUT_FRACTION} x {rate}), status {}", out.report.status),
    )
}

fn asymmetry() -> Outcome {
    let down = 2_000_000;
    let up = down / ASYMMETRY_RATIO;
    let s = scenario(
        &[(0.0, 120.0)],
        LinkParams::new(down, 5.0, 0.01),
        LinkParams::new(up, 5.0, 0.01),
        4,
        ChecksumKind::Sha256,
    );
    let adu = random_adu(4_000_000, 4);
    let hash = digest(&adu);
    let out = simulate(&s, adu, &SimOptions::default()).expect("simulate");
    let ratio = out.status_bytes as f64 / out.data_bytes.max(1) as f64;
    outcome(
        delivered_intact(&out, &hash) && ratio <= STATUS_BYTE_FRACTION,
        format!(
            "up {up} bps = down/{ASYMMETRY_RATIO}; STATUS {} B / DATA {} B = {:.4}% (<= {}%), status {}",
            out.status_bytes,
            out.data_bytes,
            ratio * 100.0,
            STATUS_BYTE_FRACTION * 100.0,
            out.report.status
        ),
    )
}

fn loss_robustness() -> Outcome {
    let adu = random_adu(1 << 20, 5);
    let hash = digest(&adu);
    let mut ok = 0;
    let mut worst = 0.0f64;
    for seed in 0..TRIALS {
        let s = scenario(
            &[(0.0, 600.0)],
            LinkParams::new(8_000_000, 5.0, 0.2),
            LinkParams::new(9600, 5.0, 0.0),
            seed,
            ChecksumKind::Sha256,
        );
        let out = simulate(&s, adu.clone(), &SimOptions::default()).expect("simulate");
        if delivered_intact(&out, &hash) {
            ok += 1;
            worst = worst.max(out.report.total_time_s);
        }
    }
    outcome(ok == TRIALS, format!("{ok}/{TRIALS} seeds delivered intact at 20% data loss; slowest {worst:.2} s"))
}

fn error_detection() -> Outcome {
    let adu = random_adu(1 << 20, 6);
    let hash = digest(&adu);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut rejected_and_delivered, mut corrupt_delivered) = (0, 0);
    for trial in 0..TRIALS {
        let corruption = Corruption {
            nth_data_packet: rng.gen_range(0..1000),
            payload_byte: rng.gen_range(0..1024),
        };
        let opts = SimOptions {
            corruption: Some(corruption),
            ..Default::default()
        };
        let link = LinkParams::new(8_000_000, 5.0, 0.0);
        let back = LinkParams::new(9600, 5.0, 0.0);
        let s = scenario(&[(0.0, 600.0)], link, back, trial, ChecksumKind::Sha256);
        let out = simulate(&s, adu.clone(), &opts).expect("simulate");
        let rejected: u64 = out.report.rows.iter().map(|r| r.bundles_rejected_checksum).sum();
        if out.corrupted_packets == 1 && rejected >= 1 && delivered_intact(&out, &hash) {
            rejected_and_delivered += 1;
        }
        let s = scenario(&[(0.0, 600.0)], link, back, trial, ChecksumKind::None);
        let out = simulate(&s, adu.clone(), &opts).expect("simulate");
        if out.corrupted_packets == 1
            && out.report.status == RunStatus::Delivered
            && out.adu.as_deref().map(digest) != Some(hash)
        {
            corrupt_delivered += 1;
        }
    }
    outcome(
        rejected_and_delivered == TRIALS && corrupt_delivered == TRIALS,
        format!(
            "sha256: {rejected_and_delivered}/{TRIALS} rejected then delivered intact; none: {corrupt_delivered}/{TRIALS} corrupted ADU delivered"
        ),
    )
}

fn run_props<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn properties() -> Outcome {
    let mut failures = Vec::new();
    let mut record = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };

    record(
        "sdnv boundaries",
        (|| {
            let mut set = vec![0u64, 1, u64::MAX, u64::MAX - 1];
            for k in 1..64 {
                set.extend([(1u64 << k) - 1, 1u64 << k, (1u64 << k) + 1]);
            }
            for k in 1..=9 {
                set.push((1u64 << (7 * k)) - 1);
            }
            for v in set {
                let enc = sdnv_encode(v);
                if sdnv_decode(&enc) != Ok((v, enc.len())) {
                    return Err(format!("value {v}"));
                }
            }
            Ok(())
        })(),
    );

    record(
        "saratoga round trip",
        run_props(
            2000,
            (any::<u32>(), any::<u64>(), prop::collection::vec(any::<u8>(), 0..1024), prop::collection::vec((0u64..1000, 1u64..1000), 0..20)),
            |(txn, offset, payload, spans)| {
                let mut pos = 0;
                let holes: Vec<Hole> = spans
                    .into_iter()
                    .map(|(gap, len)| {
                        let start = pos + gap;
                        pos = start + len + 1;
                        Hole { start, end: start + len }
                    })
                    .collect();
                let pkts = [
                    SaratogaPacket::data(txn, Flags::EOF, offset, payload.clone()),
                    SaratogaPacket::status(txn, Flags::METADATA_RECEIVED, offset, holes),
                    SaratogaPacket::metadata(
                        txn,
                        Metadata {
                            object_len: offset,
                            checksum: ChecksumKind::Crc32.compute(&payload),
                            name: "bundle/x/1/2".into(),
                        },
                    ),
                ];
                for p in pkts {
                    let bytes = encode_packet(&p).map_err(|e| TestCaseError::fail(e.to_string()))?;
                    prop_assert_eq!(decode_packet(&bytes), Ok(p));
                }
                Ok(())
            },
        ),
    );

    record(
        "bundle round trip",
        run_props(500, (prop::collection::vec(any::<u8>(), 0..2000), 1u64..u64::MAX / 2, any::<u64>()), |(adu, life, ts)| {
            let b = BundleAgent::new(ChecksumSuite::new(ChecksumKind::Sha256))
                .create_bundle(adu, "dtn://sat/img", "dtn://gs/img", life, ts)
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(deserialize_bundle(&serialize_bundle(&b)), Ok(b));
            Ok(())
        }),
    );

    record(
        "hole complement",
        run_props(HOLE_CASES, (0u64..3000, prop::collection::vec((0u64..3000, 0u64..200), 0..30)), |(len, spans)| {
            let received: RangeSet = spans
                .iter()
                .map(|&(s, l)| s.min(len)..(s + l).min(len))
                .filter(|r| r.start < r.end)
                .collect();
            let mut have = vec![false; len as usize];
            for r in received.iter() {
                have[r.start as usize..r.end as usize].iter_mut().for_each(|b| *b = true);
            }
            let mut expected = Vec::new();
            let mut i = 0;
            while i < have.len() {
                if have[i] {
                    i += 1;
                    continue;
                }
                let start = i;
                while i < have.len() && !have[i] {
                    i += 1;
                }
                expected.push(Hole { start: start as u64, end: i as u64 });
            }
            let holes = compute_holes(&received, len).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(holes.holes(), expected.as_slice());
            Ok(())
        }),
    );

    record(
        "fragment/reassemble permutations",
        run_props(300, (prop::collection::vec(any::<u8>(), 1..3000), 1u64..800, any::<u64>()), |(adu, max, seed)| {
            use rand::seq::SliceRandom;
            let b = BundleAgent::new(ChecksumSuite::new(ChecksumKind::Crc32))
                .create_bundle(adu, "dtn://sat/img", "dtn://gs/img", 60, 0)
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            let mut frags = fragment_bundle(&b, max).map_err(|e| TestCaseError::fail(e.to_string()))?;
            frags.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut r = Reassembler::new();
            let mut delivered = Vec::new();
            for f in frags.iter().chain(frags.iter()) {
                if let Some(whole) = r.reassemble(f, 0).map_err(|e| TestCaseError::fail(e.to_string()))? {
                    delivered.push(whole);
                }
            }
            prop_assert_eq!(delivered, vec![b]);
            Ok(())
        }),
    );

    record(
        "expiry monotone",
        run_props(2000, (any::<u32>(), 1u64..1_000_000, any::<u32>(), any::<u32>()), |(ts, life, a, b)| {
            let bundle = BundleAgent::new(ChecksumSuite::NONE)
                .create_bundle(vec![1], "dtn://a", "dtn://b", life, ts as u64)
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            let (t1, t2) = ((a.min(b)) as u64 * 2, (a.max(b)) as u64 * 2);
            prop_assert!(!is_expired(&bundle, t1) || is_expired(&bundle, t2));
            Ok(())
        }),
    );

    record(
        "simulator determinism and conservation",
        (|| {
            let s = scenario(
                &[(0.0, 4.0), (50.0, 54.0), (100.0, 160.0)],
                LinkParams::new(1_000_000, 5.0, 0.1),
                LinkParams::new(9600, 5.0, 0.1),
                77,
                ChecksumKind::Crc32,
            );
            let opts = SimOptions {
                trace: true,
                ..Default::default()
            };
            let adu = random_adu(800_000, 7);
            let a = simulate(&s, adu.clone(), &opts).map_err(|e| e.to_string())?;
            let b = simulate(&s, adu, &opts).map_err(|e| e.to_string())?;
            let render = |o: &SimOutcome| -> String {
                o.trace.as_ref().unwrap().iter().map(|r| format!("{r}\n")).collect()
            };
            if render(&a) != render(&b) || a.report.to_csv_string() != b.report.to_csv_string() {
                return Err("traces or reports differ".into());
            }
            for c in [a.down, a.up] {
                if c.sent != c.delivered + c.dropped_loss + c.dropped_linkdown + c.in_flight {
                    return Err(format!("ledger broken: {c:?}"));
                }
            }
            let trace = a.trace.unwrap();
            if trace.windows(2).any(|w| w[1].sent_at < w[0].sent_at) {
                return Err("clock moved backwards".into());
            }
            Ok(())
        })(),
    );

    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("codecs, SDNV boundaries, hole complement ({HOLE_CASES} cases), reassembly permutations, expiry, determinism, conservation")
        } else {
            failures.join("; ")
        },
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("multi-pass delivery (15 MB)", multipass),
        ("full-scale smoke (150 MB)", full_scale),
        ("link utilization", utilization),
        ("asymmetry", asymmetry),
        ("loss robustness", loss_robustness),
        ("error detection", error_detection),
        ("property suites", properties),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
