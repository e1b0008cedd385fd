use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hybrid-vanet"));
    c.env_remove("SIM_SEED");
    c
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn list_names_builtins() {
    let out = bin().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["proactive_1500", "ondemand_500", "v2vra_worst", "fig4_hops_sweep", "fig7_recovery_ladder"] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn run_writes_artifacts_and_reports_zero_discovery() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--scenario", "proactive_1500", "--seed", "7", "--duration", "30", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("proactive_1500");
    for f in ["hops.csv", "e2e_delay_ms.csv", "recovery_delay_ms.csv", "delivery_ratio.csv", "deliveries.csv", "route_trace.csv", "summary.txt"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let summary = fs::read_to_string(dir.join("summary.txt")).unwrap();
    assert!(summary.contains("OHT mean: T_D 0.000 ms"), "{summary}");
    let hops = fs::read_to_string(dir.join("hops.csv")).unwrap();
    assert!(hops.starts_with("x,label,metric,mean,stddev,n\n"));
}

#[test]
fn seed_flag_beats_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |env: Option<&str>, flag: Option<&str>, sub: &str| {
        let mut c = bin();
        c.args(["run", "--scenario", "table1_default", "--duration", "10", "--out"])
            .arg(tmp.path().join(sub));
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        if let Some(e) = env {
            c.env("SIM_SEED", e);
        }
        assert!(c.output().unwrap().status.success());
        fs::read(tmp.path().join(sub).join("table1_default/deliveries.csv")).unwrap()
    };
    let env3 = run(Some("3"), None, "a");
    let flag3 = run(Some("9"), Some("3"), "b");
    let cfg = run(None, None, "c");
    assert_eq!(env3, flag3);
    assert_ne!(env3, cfg);
}

#[test]
fn bad_seed_env_is_an_error() {
    let out = bin()
        .args(["run", "--scenario", "table1_default", "--duration", "1"])
        .env("SIM_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_nonzero() {
    let out = bin().args(["sweep", "--scenario", "fig4_hops_sweep"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = bin().args(["run", "--scenario", "no_such_scenario"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn scenario_file_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("short.scn");
    fs::write(&path, "vehicle_count = 30\nsim_duration_s = 5\nroad_length_m = 2000\nrsu_positions_m = 2000\n").unwrap();
    let out = bin().args(["run", "--scenario"]).arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("alerts 10"), "{text}");

    fs::write(&path, "vehicle_count = 0\n").unwrap();
    let out = bin().args(["run", "--scenario"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vehicle_count ≥ 1"));
}

#[test]
fn sweep_and_compare_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep", "--scenario", "fig4_hops_sweep", "--values", "40,80", "--seeds", "2", "--duration", "10", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let hops = fs::read_to_string(tmp.path().join("fig4_hops_sweep/hops.csv")).unwrap();
    for label in ["gpsr_250", "gpsr_350", "d2d_550"] {
        assert_eq!(hops.lines().filter(|l| l.contains(label)).count(), 2, "{hops}");
    }
    let out = bin()
        .args(["compare", "--scenarios", "proactive_1500,ondemand_1500", "--metric", "recovery_delay_ms", "--duration", "10", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = fs::read_to_string(tmp.path().join("compare/recovery_delay_ms.csv")).unwrap();
    assert!(rec.contains("ondemand_1500") && rec.contains("proactive_1500"));
}

#[test]
fn mobility_trace_is_written() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--scenario", "table1_default", "--duration", "2", "--mobility-trace", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let files = read_dir_sorted(&tmp.path().join("table1_default"));
    let (_, trace) = files.iter().find(|(n, _)| n.starts_with("mobility_")).unwrap();
    let text = String::from_utf8(trace.clone()).unwrap();
    assert!(text.starts_with("time_s,vehicle_id,position_m,velocity_ms\n"));
    // Snapshots at 0, 0.5, 1.0 and 1.5 s for 60 vehicles.
    assert_eq!(text.lines().count(), 1 + 4 * 60);
}
