use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn splitlink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splitlink"))
        .args(args)
        .output()
        .expect("spawn splitlink")
}

fn ok(args: &[&str]) -> Output {
    let out = splitlink(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixtures(dir: &Path) {
    ok(&["fixtures", "--size", "60", "--rs", "40", "--out", s(dir)]);
}

#[test]
fn fixtures_match_baseline_score() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixtures(d);
    let (alice, bob, reference) = (d.join("alice.csv"), d.join("bob.csv"), d.join("reference.csv"));
    let common = [
        "--alice",
        s(&alice),
        "--bob",
        s(&bob),
        "--id-column",
        "source_id",
        "--rs",
        "40",
        "--train-size",
        "60",
    ];

    let out_dir = d.join("run");
    let mut args = vec!["match"];
    args.extend(common);
    args.extend(["--reference", s(&reference), "--out", s(&out_dir)]);
    let out = ok(&args);
    assert!(String::from_utf8_lossy(&out.stderr).contains("party A: tp="));
    let ma = fs::read_to_string(out_dir.join("matches_A.csv")).unwrap();
    assert_eq!(ma.lines().count(), 1 + 60 * 60);
    assert!(out_dir.join("matches_B.csv").exists());

    let plain = d.join("plain.csv");
    let mut args = vec!["baseline"];
    args.extend(common);
    args.extend(["--out", s(&plain)]);
    ok(&args);

    let report = d.join("report.csv");
    let mut args = vec!["score", "--matches", s(&plain)];
    args.extend(common);
    args.extend(["--out", s(&report)]);
    ok(&args);
    let text = fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().next().unwrap().contains("precision"));
}

#[test]
fn synth_train_and_smash() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixtures(d);
    let (alice, reference) = (d.join("alice.csv"), d.join("reference.csv"));
    let examples = d.join("examples.csv");
    ok(&[
        "synth",
        "--input",
        s(&alice),
        "--id-column",
        "source_id",
        "--reference",
        s(&reference),
        "--rs",
        "40",
        "--out",
        s(&examples),
    ]);
    assert_eq!(fs::read_to_string(&examples).unwrap().lines().count(), 1 + 120);
    let model = d.join("model.bin");
    ok(&["train", "--examples", s(&examples), "--out", s(&model)]);
    assert_eq!(&fs::read(&model).unwrap()[..4], b"SLPM");
    let smashed = d.join("a.slsd");
    ok(&[
        "smash",
        "--input",
        s(&alice),
        "--id-column",
        "source_id",
        "--reference",
        s(&reference),
        "--rs",
        "40",
        "--out",
        s(&smashed),
    ]);
    assert_eq!(&fs::read(&smashed).unwrap()[..4], b"SLSD");
}

#[test]
fn serve_and_connect_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixtures(d);
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let (bob, alice, reference) = (d.join("bob.csv"), d.join("alice.csv"), d.join("reference.csv"));
    let mut server = Command::new(env!("CARGO_BIN_EXE_splitlink"))
        .args([
            "serve",
            "--input",
            s(&bob),
            "--id-column",
            "source_id",
            "--reference",
            s(&reference),
        ])
        .args([
            "--rs",
            "40",
            "--train-size",
            "60",
            "--listen",
            &addr,
            "--out",
            s(&d.join("b")),
        ])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut client = None;
    for _ in 0..100 {
        let out = splitlink(&[
            "connect",
            "--input",
            s(&alice),
            "--id-column",
            "source_id",
            "--reference",
            s(&reference),
            "--rs",
            "40",
            "--train-size",
            "60",
            "--addr",
            &addr,
            "--out",
            s(&d.join("a")),
        ]);
        if out.status.success() {
            client = Some(out);
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(100));
    }
    assert!(client.is_some(), "could not connect");
    assert!(server.wait().unwrap().success());
    assert!(d.join("a/matches_A.csv").exists());
    assert!(d.join("b/matches_B.csv").exists());
}

#[test]
fn experiment_and_figures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let reports = d.join("reports.csv");
    ok(&[
        "experiment",
        "--match-sizes",
        "40",
        "--rs-sizes",
        "30",
        "--train-sizes",
        "40",
        "--out",
        s(&reports),
    ]);
    assert_eq!(fs::read_to_string(&reports).unwrap().lines().count(), 1 + 12);
    ok(&["emit-figures", "--reports", s(&reports), "--out", s(&d.join("fig"))]);
    assert!(d.join("fig/precision_vs_rs.csv").exists());
}

#[test]
fn exit_codes() {
    assert_eq!(splitlink(&["fixtures", "--kernel", "poly"]).status.code(), Some(2));
    assert_eq!(splitlink(&["experiment", "--kernels", "linear"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "training_size = lots\n").unwrap();
    assert_eq!(splitlink(&["fixtures", "--config", s(&cfg)]).status.code(), Some(2));
    let missing = dir.path().join("nope.csv");
    assert_eq!(splitlink(&["prepare", "--input", s(&missing)]).status.code(), Some(4));
}
