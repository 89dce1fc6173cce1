use std::path::Path;
use std::process::Command;

use ampc_cli::commands::{self, bench_paths, report_path};
use ampc_cli::{BenchOptions, PolicyKind, RunConfig, SimulateOptions};
use ampc_core::fitting::{draw_samples, SampleBox};
use ampc_core::VfArtifact;
use nalgebra::DVector;

const BOOST_SMOKE: &str = r#"
[model]
kind = "boost"

[sampling]
count = 4
remaining_horizon = 6
seed = 3

[policy]
tau = 1

[simulation]
steps = 1
"#;

const TRIVIAL: &str = r#"
[model]
kind = "custom"
state_names = ["x"]
modes = [ { a = [[1.0]], b = [0.0] }, { a = [[1.0]], b = [1.0] } ]

[cost]
kind = "quadratic"
q = [[1.0]]

[sampling]
lower = [-1.0]
upper = [1.0]
count = 8
remaining_horizon = 3

[policy]
switching_cost = 1.0

[simulation]
x0 = [0.0]
steps = 20
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ampc"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn trajectory_header_is_stable() {
    let cfg = RunConfig::parse(BOOST_SMOKE).unwrap();
    let csv = commands::simulate(&cfg, None, PolicyKind::Greedy, SimulateOptions::default())
        .unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "t_index,time_s,i_l,v_c,input,stage_cost,switching_cost,decision_latency_us"
    );
    // One decision epoch plus the final state.
    assert_eq!(lines.len(), 3);
    let first: Vec<&str> = lines[1].split(',').collect();
    let last: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(first.len(), 8);
    assert_eq!(last.len(), 8);
    assert!(!first[4].is_empty());
    assert!(last[4].is_empty(), "final row has no input");
    assert_eq!(last[0], "1");
}

#[test]
fn trajectories_are_reproducible_without_latency() {
    let cfg = RunConfig::parse(&BOOST_SMOKE.replace("steps = 1", "steps = 50")).unwrap();
    let opts = SimulateOptions { record_latency: false };
    let a = commands::simulate(&cfg, None, PolicyKind::FcsMpc(3), opts).unwrap();
    let b = commands::simulate(&cfg, None, PolicyKind::FcsMpc(3), opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 52);
}

#[test]
fn eval_duplicate_policies_give_identical_rows() {
    let cfg = RunConfig::parse(&BOOST_SMOKE.replace("steps = 1", "steps = 40")).unwrap();
    let kinds = [PolicyKind::Greedy, PolicyKind::FcsMpc(2), PolicyKind::Greedy];
    let csv = commands::eval(&cfg, None, &kinds).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "policy,average_stage_cost,average_switching_cost");
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[1], rows[3]);
    assert!(rows[2].starts_with("fcs-mpc:2,"));
}

#[test]
fn eval_zero_cost_start_averages_zero() {
    let cfg = RunConfig::parse(TRIVIAL).unwrap();
    let csv = commands::eval(&cfg, None, &[PolicyKind::Greedy, PolicyKind::FcsMpc(3)]).unwrap();
    for row in csv.lines().skip(1) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[1].parse::<f64>().unwrap(), 0.0, "{row}");
        assert_eq!(f[2].parse::<f64>().unwrap(), 0.0, "{row}");
    }
}

#[test]
fn smoke_synth_round_trips_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("vf.txt");
    let cfg = RunConfig::parse(BOOST_SMOKE).unwrap();
    let res = commands::synth(&cfg, None, Some(1), &out).unwrap();
    assert!(out.exists());
    let report = std::fs::read_to_string(report_path(&out)).unwrap();
    for key in ["samples = 4", "gap_max", "fit_mse", "lambda = 100", "eigenvalues_p"] {
        assert!(report.contains(key), "report lacks {key}:\n{report}");
    }
    // PSD by default for the boost converter.
    assert!(res.artifact.vf.min_eigenvalue() >= -1e-12);

    let loaded = VfArtifact::load(&out).unwrap();
    assert_eq!(loaded, res.artifact);
    let probes = draw_samples(
        &SampleBox::new(DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![10.0, 50.0]), 100, 9)
            .unwrap(),
    );
    for x in &probes {
        assert_eq!(
            loaded.vf.evaluate(x).to_bits(),
            res.artifact.vf.evaluate(x).to_bits()
        );
    }

    // Same seed, same artifact bytes.
    let out2 = dir.path().join("vf2.txt");
    commands::synth(&cfg, None, None, &out2).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn bench_lists_paths_by_model_structure() {
    let dir = tempfile::tempdir().unwrap();

    let boost_cfg = RunConfig::parse(BOOST_SMOKE).unwrap();
    let boost_vf = commands::synth(&boost_cfg, None, None, &dir.path().join("b.txt"))
        .unwrap()
        .artifact;
    let rows = bench_paths(&boost_cfg, &boost_vf, BenchOptions::default()).unwrap();
    let names: Vec<_> = rows.iter().map(|r| r.path).collect();
    assert_eq!(names, ["general", "precomputed"]);

    let inv_cfg = RunConfig::parse(
        "[model]\nkind = \"inverter\"\n[sampling]\ncount = 30\nremaining_horizon = 2\n",
    )
    .unwrap();
    let inv_vf = commands::synth(&inv_cfg, None, None, &dir.path().join("i.txt"))
        .unwrap()
        .artifact;
    let text = commands::bench(&inv_cfg, &inv_vf, BenchOptions::default()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].contains("median_variance_us2"));
    assert_eq!(lines.len(), 4);
    for (line, name) in lines[1..].iter().zip(["general", "precomputed", "onestep"]) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], name);
        assert_eq!(f[1], "10000");
        assert_eq!(f[6], "0", "paths disagree: {line}");
    }
    for r in bench_paths(&boost_cfg, &boost_vf, BenchOptions { decisions: 200, ..Default::default() })
        .unwrap()
    {
        assert_eq!(r.mismatches, 0);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let bad = write(dir.path(), "bad.toml", "[model]\nkind = \"boost\"\nvdc = 3.0\n");
    let st = bin().args(["simulate", "--config"]).arg(&bad).arg("--policy").arg("greedy").output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    let empty = write(dir.path(), "n0.toml", &BOOST_SMOKE.replace("count = 4", "count = 0"));
    let st = bin().args(["synth", "--config"]).arg(&empty).arg("--out").arg(dir.path().join("x")).output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    let starved = write(
        dir.path(),
        "starved.toml",
        &BOOST_SMOKE.replace("seed = 3", "seed = 3\nnode_budget = 1"),
    );
    let art = dir.path().join("starved.txt");
    let st = bin().args(["synth", "--config"]).arg(&starved).arg("--out").arg(&art).output().unwrap();
    assert_eq!(st.status.code(), Some(3), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(!art.exists(), "artifact must be refused");
    let report = std::fs::read_to_string(report_path(&art)).unwrap();
    assert!(report.contains("diagnosis"));

    let blowup = write(
        dir.path(),
        "blowup.toml",
        &TRIVIAL
            .replace("a = [[1.0]], b = [0.0]", "a = [[1e200]], b = [0.0]")
            .replace("a = [[1.0]], b = [1.0]", "a = [[1e200]], b = [1.0]")
            .replace("x0 = [0.0]", "x0 = [1e200]"),
    );
    let st = bin().args(["simulate", "--policy", "greedy", "--config"]).arg(&blowup).output().unwrap();
    assert_eq!(st.status.code(), Some(4), "{}", String::from_utf8_lossy(&st.stderr));

    let ok = write(dir.path(), "ok.toml", BOOST_SMOKE);
    let csv = dir.path().join("t.csv");
    let st = bin()
        .args(["simulate", "--policy", "fcs-mpc:1", "--no-latency", "--config"])
        .arg(&ok)
        .arg("--out")
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);

    let st = bin().args(["simulate", "--policy", "ampc", "--config"]).arg(&ok).output().unwrap();
    assert_eq!(st.status.code(), Some(2), "ampc without --vf");
}

#[test]
fn artifact_dimension_mismatch_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::parse(TRIVIAL).unwrap();
    let vf = commands::synth(&cfg, None, None, &dir.path().join("t.txt")).unwrap().artifact;
    let boost = RunConfig::parse(BOOST_SMOKE).unwrap();
    let err = commands::simulate(&boost, Some(&vf), PolicyKind::Ampc, SimulateOptions::default())
        .unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn thread_cap_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", BOOST_SMOKE);
    let out = dir.path().join("vf.txt");
    let st = bin()
        .env("AMPC_THREADS", "1")
        .args(["synth", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
    let st = bin()
        .env("AMPC_THREADS", "zero")
        .args(["synth", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2));
}
