use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bayesbt_cli::emit::{read_csv, read_json};
use bayesbt_cli::experiment::Replicate;
use bayesbt_cli::synth::load_system;
use bayesbt_core::Method;

fn bayesbt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bayesbt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const TOY: &str = r#"{
    "system": {"kind": "synthetic", "d": 8, "d_out": 2, "spread": 5.0, "seed": 3},
    "prior": {"kind": "incompatible_empirical", "samples": 6},
    "times": {"step": 0.2, "end": 4.0},
    "noise_diag": [0.01, 0.01],
    "ranks": [1, 2, 3, 4, 5],
    "replicates": 3,
    "seed": 11,
    "methods": ["OLR", "LisBT", "PdBT"]
}"#;

fn strip_wallclock(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn runs_are_deterministic_apart_from_wallclock() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TOY);
    let outs: Vec<String> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("run{i}.csv"));
            let o = bayesbt(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            fs::read_to_string(out).unwrap()
        })
        .collect();
    assert_eq!(strip_wallclock(&outs[0]), strip_wallclock(&outs[1]));
    assert!(dir.path().join("run0.csv.meta.json").exists());
}

#[test]
fn row_layout_follows_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TOY);
    let out = dir.path().join("rows.csv");
    assert!(bayesbt(&["run", "--config", &cfg, "--out", out.to_str().unwrap()])
        .status
        .success());
    let rows = read_csv(fs::File::open(&out).unwrap()).unwrap();
    let per_rep = 3 * 5;
    assert_eq!(rows.len(), 3 * per_rep + per_rep);
    assert!(rows.iter().all(|r| (1..=5).contains(&r.rank)));
    assert!(rows[3 * per_rep..].iter().all(|r| r.replicate == Replicate::Mean));
    for rep in rows.chunks(per_rep).take(3) {
        for k in 0..5 {
            let (olr, lis, pd) = (&rep[k], &rep[5 + k], &rep[10 + k]);
            assert_eq!(
                (olr.method, lis.method, pd.method),
                (Method::Olr, Method::LisBt, Method::PdBt)
            );
            let f = |r: &bayesbt_cli::ResultRow| r.restricted_forstner.unwrap();
            assert!(f(olr) <= f(lis) * (1.0 + 1e-10) && f(olr) <= f(pd) * (1.0 + 1e-10));
            assert!(pd.inhom_trace_bound.is_some() && olr.inhom_trace_bound.is_none());
        }
    }
}

#[test]
fn json_and_csv_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TOY);
    let csv = dir.path().join("a.csv");
    let json = dir.path().join("a.json");
    for (path, fmt) in [(&csv, "csv"), (&json, "json")] {
        let o = bayesbt(&[
            "run",
            "--config",
            &cfg,
            "--format",
            fmt,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    let a = read_csv(fs::File::open(&csv).unwrap()).unwrap();
    let b = read_json(fs::File::open(&json).unwrap()).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.method, x.rank, x.replicate), (y.method, y.rank, y.replicate));
        assert_eq!(x.values()[..9], y.values()[..9]);
    }
}

#[test]
fn empty_method_list_gives_exact_rows_only() {
    let dir = tempfile::tempdir().unwrap();
    let body = TOY.replace(r#"["OLR", "LisBT", "PdBT"]"#, "[]");
    let cfg = write_config(dir.path(), &body);
    let o = bayesbt(&["run", "--config", &cfg]);
    assert!(o.status.success());
    let rows = read_csv(o.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.method == Method::Exact && r.rank == 5));
}

#[test]
fn seed_flag_changes_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TOY);
    let a = bayesbt(&["run", "--config", &cfg]).stdout;
    let b = bayesbt(&["run", "--config", &cfg, "--seed", "12"]).stdout;
    assert_ne!(
        strip_wallclock(&String::from_utf8(a).unwrap()),
        strip_wallclock(&String::from_utf8(b).unwrap())
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    assert_eq!(
        bayesbt(&["run", "--config", missing.to_str().unwrap()]).status.code(),
        Some(2)
    );

    let bad = write_config(dir.path(), &TOY.replace("\"replicates\": 3", "\"replicates\": 0"));
    assert_eq!(bayesbt(&["run", "--config", &bad]).status.code(), Some(2));
    assert_eq!(
        bayesbt(&["run", "--preset", "nope", "--system-dir", "."]).status.code(),
        Some(2)
    );

    let sys = dir.path().join("sys");
    let o = bayesbt(&["gen-system", "--d", "6", "--d-out", "2", "--out", sys.to_str().unwrap()]);
    assert!(o.status.success());
    fs::write(
        sys.join("B.mtx"),
        "%%MatrixMarket matrix array real general\n6 1\n1\n2\nx\n",
    )
    .unwrap();
    let o = bayesbt(&[
        "gen-prior",
        "--system-dir",
        sys.to_str().unwrap(),
        "--kind",
        "incompatible",
        "--size",
        "4",
        "--out",
        dir.path().join("p.mtx").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":5:"));

    let unstable = dir.path().join("unstable");
    fs::create_dir(&unstable).unwrap();
    fs::write(
        unstable.join("A.mtx"),
        "%%MatrixMarket matrix array real general\n2 2\n0.5\n0\n0\n-1\n",
    )
    .unwrap();
    fs::write(
        unstable.join("B.mtx"),
        "%%MatrixMarket matrix array real general\n2 1\n1\n1\n",
    )
    .unwrap();
    fs::write(
        unstable.join("C.mtx"),
        "%%MatrixMarket matrix array real general\n1 2\n1\n1\n",
    )
    .unwrap();
    let body = r#"{"system": {"kind": "files", "a": "unstable/A.mtx", "b": "unstable/B.mtx", "c": "unstable/C.mtx"},
        "prior": {"kind": "incompatible_empirical", "samples": 3}, "noise_diag": [0.01],
        "ranks": [1], "replicates": 1, "methods": ["PdBT"]}"#;
    let cfg = write_config(dir.path(), body);
    assert_eq!(bayesbt(&["run", "--config", &cfg]).status.code(), Some(4));

    let out = dir.path().join("no/such/dir/x.csv");
    let cfg = write_config(dir.path(), TOY);
    assert_eq!(
        bayesbt(&["run", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn generated_system_satisfies_lti_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let sys_dir = dir.path().join("sys");
    let o = bayesbt(&[
        "gen-system",
        "--d",
        "40",
        "--d-out",
        "3",
        "--seed",
        "5",
        "--out",
        sys_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let sys = load_system(&sys_dir.join("A.mtx"), &sys_dir.join("B.mtx"), &sys_dir.join("C.mtx")).unwrap();
    assert_eq!((sys.dim(), sys.d_out()), (40, 3));
    assert!(sys.is_stable());
    assert!(sys.eigenvalues().iter().all(|e| e.re < 0.0));

    let prior = dir.path().join("prior.mtx");
    let o = bayesbt(&[
        "gen-prior",
        "--system-dir",
        sys_dir.to_str().unwrap(),
        "--kind",
        "compatible",
        "--size",
        "10",
        "--out",
        prior.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(summary["compatibility"]["compatible"], true);
    assert!(summary["rank"].as_u64().unwrap() >= 10);
}

#[test]
fn bounds_subcommand_emits_every_rank() {
    let dir = tempfile::tempdir().unwrap();
    let body = TOY
        .replace("[1, 2, 3, 4, 5]", "[]")
        .replace(r#"["OLR", "LisBT", "PdBT"]"#, "[]");
    let cfg = write_config(dir.path(), &body);
    let o = bayesbt(&["bounds", "--config", &cfg, "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.first().unwrap()["rank"], 0);
    let last = rows.last().unwrap();
    assert!(last["inhom_trace_bound"].as_f64().unwrap().abs() < 1e-8);
    for r in &rows {
        let l2 = r["impulse_error_l2_sq"].as_f64().unwrap();
        assert!(l2 <= r["inhom_trace_bound"].as_f64().unwrap() * (1.0 + 1e-6) + 1e-12);
    }
}
