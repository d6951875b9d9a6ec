use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn basic_fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/basic")
}

fn run(bin: &str, db: &Path, args: &[&str]) -> Output {
    Command::new(bin)
        .args(args)
        .env("DATABASE_URL", format!("sqlite://{}", db.display()))
        .env_remove("SOURCE_MODE")
        .env_remove("FIXTURE_PATH")
        .env_remove("GH_TOKENS")
        .env_remove("GEOCODER_URL")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok_json(out: Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn ingest_fixture_then_status_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("obs.sqlite");
    let ingest = env!("CARGO_BIN_EXE_ingest");
    let fixture = basic_fixture();
    let fixture = fixture.to_str().unwrap();

    let report = ok_json(run(ingest, &db, &["run", "--fixture", fixture, "--simulated-clock", "--workers", "2"]));
    assert_eq!(report["stop_reason"], "idle");
    assert_eq!(report["processed"], 12);

    let status = ok_json(run(ingest, &db, &["status"]));
    assert_eq!(status["counts"]["users"], 12);
    assert_eq!(status["queue_depth"], 12);
    assert_eq!(status["snapshots"], 0);

    let snap = ok_json(run(ingest, &db, &["snapshot"]));
    assert_eq!(snap["snapshot_id"], 1);
    assert_eq!(snap["user_count"], 12);
}

#[test]
fn targeted_seed_in_fixture_mode() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("obs.sqlite");
    let fixture = basic_fixture();
    let out = Command::new(env!("CARGO_BIN_EXE_ingest"))
        .args(["seed", "--filter", "type=Org"])
        .env("DATABASE_URL", format!("sqlite://{}", db.display()))
        .env("SOURCE_MODE", "fixture")
        .env("FIXTURE_PATH", &fixture)
        .env_remove("GEOCODER_URL")
        .output()
        .unwrap();
    let seeded = ok_json(out);
    assert_eq!(seeded["listed"], 10);
    assert_eq!(seeded["enqueued"], 2);
}

#[test]
fn bad_configuration_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("obs.sqlite");
    let ingest = env!("CARGO_BIN_EXE_ingest");

    let out = run(ingest, &db, &["seed", "--filter", "planet=Mars"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("planet=Mars"));

    let out = run(ingest, &db, &["run", "--simulated-clock"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fixture mode"));

    let out = Command::new(ingest)
        .args(["seed"])
        .env("DATABASE_URL", format!("sqlite://{}", db.display()))
        .env("SOURCE_MODE", "live")
        .env("GH_TOKENS", " , ")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("GH_TOKENS holds no tokens"));
}

#[test]
fn simulate_generate_then_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"seed": 5, "user_count": 150, "org_count": 10, "sponsorable_fraction": 0.4, "created_years": [2024, 2025]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("fixture");
    let simulate = env!("CARGO_BIN_EXE_simulate");
    let db = dir.path().join("unused.sqlite");
    let out = run(simulate, &db, &["generate", "--spec", spec.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["users.ndjson", "edges.ndjson", "activity.ndjson", "geocode_cassette.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }

    let report_path = dir.path().join("report.json");
    let args = [
        "run",
        "--fixture",
        out_dir.to_str().unwrap(),
        "--hours",
        "30",
        "--workers",
        "2",
        "--report",
        report_path.to_str().unwrap(),
    ];
    let out = run(simulate, &db, &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read_to_string(&report_path).unwrap();
    let report: Value = serde_json::from_str(&first).unwrap();
    assert!(report["discovered"].as_array().unwrap().len() >= 60);
    assert!(report["events"].as_array().unwrap().len() > 100);

    run(simulate, &db, &args);
    assert_eq!(std::fs::read_to_string(&report_path).unwrap(), first);
}
