use std::net::UdpSocket;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::thread;
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_orbitdtn"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn orbitdtn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn random_bytes(len: usize, seed: u64) -> Vec<u8> {
    let mut v = vec![0; len];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut v);
    v
}

fn free_port() -> u16 {
    UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn repo_scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

/// Runs a receiver and a sender over loopback and returns what was received.
fn loopback(data: &[u8], rate: &str) -> (Output, Output, Vec<u8>) {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("payload.bin");
    std::fs::write(&file, data).unwrap();
    let out = dir.path().join("out");
    let port = free_port();
    let receiver = bin()
        .args(["recv", &port.to_string(), "--out", out.to_str().unwrap(), "--timeout", "20"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    thread::sleep(Duration::from_millis(300));
    let sent = run(&["send", file.to_str().unwrap(), &format!("127.0.0.1:{port}"), "--rate", rate]);
    let received = receiver.wait_with_output().unwrap();
    let got = std::fs::read(out.join("payload.bin")).unwrap_or_default();
    (sent, received, got)
}

#[test]
fn one_mebibyte_over_loopback() {
    let data = random_bytes(1 << 20, 1);
    let (sent, received, got) = loopback(&data, "10000000");
    assert_eq!(sent.status.code(), Some(0), "{}", String::from_utf8_lossy(&sent.stderr));
    assert_eq!(received.status.code(), Some(0), "{}", String::from_utf8_lossy(&received.stderr));
    assert!(got == data, "received file differs");
    let hash = |o: &Output| stdout(o).split_whitespace().last().map(str::to_owned);
    assert_eq!(hash(&sent), hash(&received));
}

#[test]
fn empty_file_over_loopback() {
    let (sent, received, got) = loopback(&[], "1000000");
    assert_eq!(sent.status.code(), Some(0));
    assert_eq!(received.status.code(), Some(0));
    assert!(got.is_empty());
    assert!(stdout(&received).contains("(0 bytes)"));
}

#[test]
fn nobody_listening_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("x.bin");
    std::fs::write(&file, b"hello").unwrap();
    let port = free_port();
    let o = run(&["send", file.to_str().unwrap(), &format!("127.0.0.1:{port}"), "--rate", "1000000", "--timeout", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_usage_exits_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["send", "x", "127.0.0.1:1", "--rate", "fast"]).status.code(), Some(1));
    let o = run(&["run", "/nonexistent/scenario.scn", "--csv", "/tmp/x.csv"]);
    assert_eq!(o.status.code(), Some(1));
}

/// Copies the bundled scenario next to a freshly generated 15 MB ADU.
fn multipass_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(repo_scenario("multipass.scn"), dir.path().join("multipass.scn")).unwrap();
    std::fs::write(dir.path().join("multipass.bin"), random_bytes(15_000_000, 2)).unwrap();
    dir
}

#[test]
fn multipass_scenario_delivers_over_several_passes() {
    let dir = multipass_dir();
    let scn = dir.path().join("multipass.scn");
    let csv = dir.path().join("a.csv");
    let o = run(&["run", scn.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("pass_index,t_start_s,t_end_s,bytes_acked,goodput_bps"));
    let rows = lines.iter().skip(1).filter(|l| !l.starts_with('#')).count();
    assert!(rows >= 3, "{text}");
    assert!(lines.last().unwrap().starts_with("# status=delivered"));
    let input = std::fs::read(dir.path().join("multipass.bin")).unwrap();
    let output = std::fs::read(dir.path().join("multipass.out")).unwrap();
    assert!(input == output, "delivered ADU differs");

    let csv2 = dir.path().join("b.csv");
    let o = run(&["run", scn.to_str().unwrap(), "--csv", csv2.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&csv2).unwrap());
}

#[test]
fn no_windows_times_out() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.bin"), b"some bytes").unwrap();
    let scn = dir.path().join("none.scn");
    std::fs::write(&scn, "adu a.bin\nmax_time_s 100\n").unwrap();
    let csv = dir.path().join("none.csv");
    let o = run(&["run", scn.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().last().unwrap().starts_with("# status=timeout"));
    assert!(!dir.path().join("a.out").exists());
}

#[test]
fn scenario_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("bad.scn");
    std::fs::write(&scn, "seed 1\nwindow 0 10\nteleport 5\n").unwrap();
    let o = run(&["run", scn.to_str().unwrap(), "--csv", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn plan_prints_fragment_table() {
    let scn = repo_scenario("multipass.scn");
    let o = run(&["plan", "15000000", scn.to_str().unwrap(), "--safety", "0.8"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "max_payload 4000000\noffset,length\n0,4000000\n4000000,4000000\n8000000,4000000\n12000000,3000000\n"
    );

    let o = run(&["plan", "0", scn.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "max_payload 4000000\noffset,length\n");
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));

    let o = run(&["plan", "100", scn.to_str().unwrap(), "--safety", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn plan_without_capacity_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("empty.scn");
    std::fs::write(&scn, "# nothing\n").unwrap();
    let o = run(&["plan", "100", scn.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no downlink capacity"));
}
