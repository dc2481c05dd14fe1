use std::path::PathBuf;
use std::process::{Command, Output};

use detrelay::cli::{example_instance, parse_network, CheckRecord, NetworkFile, ScheduleRecord};
use detrelay::model::RateTuple;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detrelay"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_input(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("detrelay-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn example_file(ex: u8) -> String {
    let (g, r) = example_instance(ex);
    serde_json::to_string(&NetworkFile {
        uplink: g.uplink,
        downlink: g.downlink,
        rates: Some(r),
        rates_flat: None,
    })
    .unwrap()
}

#[test]
fn check_exit_codes() {
    let ok = write_input("zero.json", r#"{"uplink":[3,2,1,0],"downlink":[1,1,1,1],"rates_flat":[0,0,0,0,0,0,0,0,0,0,0,0]}"#);
    assert_eq!(bin(&["check", "--input", ok.to_str().unwrap()]).status.code(), Some(0));

    let out = write_input("out.json", r#"{"uplink":[1,1,1,1],"downlink":[1,1,1,1],"rates_flat":[2,0,0,0,0,0,0,0,0,0,0,0]}"#);
    let o = bin(&["check", "--input", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));

    let bad = write_input("bad.json", "{\"uplink\": [1,1,1,1],\n\"downlink\": oops}");
    let o = bin(&["check", "--input", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"), "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(bin(&["check", "--input", "/nonexistent/net.json"]).status.code(), Some(1));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn check_record_round_trips() {
    let path = write_input("ex1.json", &example_file(1));
    let o = bin(&["check", "--input", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let rec: CheckRecord = serde_json::from_slice(&o.stdout).unwrap();
    assert!(rec.in_region);
    let again: CheckRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
    assert_eq!(again.report, rec.report);
}

#[test]
fn schedule_record_round_trips() {
    let path = write_input("ex2.json", &example_file(2));
    let o = bin(&["schedule", "--input", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rec: ScheduleRecord = serde_json::from_slice(&o.stdout).unwrap();
    let plan = rec.plan.expect("example 2 needs a detour");
    assert!(!plan.moves.is_empty());
    let bits: usize = rec.schedule.entries.iter().map(|e| e.entry.bits.len()).sum();
    assert_eq!(bits as u32, plan.equivalent.total());

    let text = bin(&["schedule", "--input", path.to_str().unwrap(), "--text"]);
    assert_eq!(text.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&text.stdout).contains("uplink"));
}

#[test]
fn simulate_reports_full_delivery() {
    let path = write_input("ex1s.json", &example_file(1));
    let o = bin(&["simulate", "--input", path.to_str().unwrap(), "--rounds", "6", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rounds"], 6);
    assert_eq!(v["delivered_bits"], v["due_bits"]);
}

#[test]
fn enumerate_small_grid() {
    let o = bin(&["enumerate", "--gain-max", "1", "--rate-max", "1", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    let field = |name: &str| row[headers.iter().position(|h| h == name).unwrap()].to_string();
    assert_eq!(field("profiles"), "256");
    assert_eq!(field("failures"), "0");

    let table = bin(&["enumerate", "--gain-max", "1", "--rate-max", "1", "--jobs", "1"]);
    assert_eq!(table.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&table.stdout).contains("failures"));
}

#[test]
fn demo_runs() {
    for ex in ["1", "2"] {
        let o = bin(&["demo", "--example", ex]);
        assert_eq!(o.status.code(), Some(0));
        let text = String::from_utf8(o.stdout).unwrap();
        assert!(!text.contains("MISMATCH"), "{text}");
    }
    assert_eq!(bin(&["demo", "--example", "3"]).status.code(), Some(1));
}

#[test]
fn network_file_round_trips() {
    let text = example_file(2);
    let file: NetworkFile = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&file).unwrap(), text);
    let (g, r) = parse_network(&text, "ex2.json").unwrap();
    assert_eq!((g, r), example_instance(2));
    let rt: RateTuple = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(rt, r);
}
