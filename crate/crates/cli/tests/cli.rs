use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use onseg_core::decode::OnlineConfig;
use onseg_core::eval::{Decoder, EvalReport, InferenceModel};
use onseg_core::io::{read_labels, Checkpoint, Manifest};

fn onseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onseg"))
        .args(args)
        .args(["--log-level", "warn"])
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = onseg(args);
    assert!(
        out.status.success(),
        "onseg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small two-view dataset and a checkpoint trained on it.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    manifest: PathBuf,
    checkpoint: PathBuf,
}

fn fixture(extra: &[&str]) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("data");
    let mut args = vec![
        "gen-data",
        "--seed",
        "3",
        "--transcripts",
        "2",
        "--recordings",
        "3",
        "--out-dir",
        s(&data),
    ];
    args.extend_from_slice(extra);
    ok(&args);
    let manifest = data.join("manifest.txt");
    let run = root.join("run");
    ok(&[
        "train",
        "--manifest",
        s(&manifest),
        "--out-dir",
        s(&run),
        "--epochs",
        "3",
    ]);
    Fixture {
        checkpoint: run.join("checkpoint.txt"),
        _dir: dir,
        root,
        manifest,
    }
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn infer_labels(f: &Fixture, out: &str, decoder: &[&str]) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = f.root.join(out);
    let mut args = vec![
        "infer",
        "--manifest",
        s(&f.manifest),
        "--checkpoint",
        s(&f.checkpoint),
        "--out-dir",
        s(&dir),
    ];
    args.extend_from_slice(decoder);
    ok(&args);
    tree(&dir.join("labels"))
}

#[test]
fn gen_data_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&[
            "gen-data",
            "--seed",
            "7",
            "--views",
            "2",
            "--occlude-anchor",
            "0.3:0.5",
            "--out-dir",
            s(d),
        ]);
    }
    // the run record names its own out-dir; everything else must match byte for byte
    let data = |d: &Path| -> Vec<(PathBuf, Vec<u8>)> {
        tree(d)
            .into_iter()
            .filter(|(p, _)| !p.ends_with("gen-data.config.json"))
            .collect()
    };
    let (ta, tb) = (data(&a), data(&b));
    assert!(ta.len() > 3);
    assert!(ta == tb, "generated datasets differ");
    let resolved = |d: &Path| -> serde_json::Value {
        serde_json::from_str::<serde_json::Value>(&fs::read_to_string(d.join("gen-data.config.json")).unwrap()).unwrap()
            ["resolved"]
            .clone()
    };
    assert_eq!(resolved(&a), resolved(&b));
}

#[test]
fn missing_out_dir_is_a_usage_error() {
    let out = onseg(&["gen-data", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out-dir"));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_decoder_is_a_usage_error() {
    let out = onseg(&["infer", "--checkpoint", "x", "--decoder", "psychic"]);
    assert_eq!(out.status.code(), Some(2));
    let out = onseg(&["infer", "--checkpoint", "x", "--decoder", "semi"]);
    assert_eq!(out.status.code(), Some(2), "semi needs --delay");
}

#[test]
fn multiview_training_needs_adjacent_views() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&[
        "gen-data",
        "--views",
        "1",
        "--transcripts",
        "2",
        "--recordings",
        "3",
        "--out-dir",
        s(&data),
    ]);
    let out = onseg(&[
        "train",
        "--manifest",
        s(&data.join("manifest.txt")),
        "--out-dir",
        s(&dir.path().join("run")),
        "--mode",
        "pi",
        "--oodl",
        "off",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("views"));
}

#[test]
fn decoder_identities() {
    let f = fixture(&[]);
    let online = infer_labels(&f, "on", &["--decoder", "online"]);
    assert_eq!(
        infer_labels(&f, "semi0", &["--decoder", "semi", "--delay", "0"]),
        online
    );
    let offline = infer_labels(&f, "off", &["--decoder", "offline"]);
    assert_eq!(
        infer_labels(&f, "semiT", &["--decoder", "semi", "--delay", "T"]),
        offline
    );

    let manifest = Manifest::read(&f.manifest)
        .unwrap()
        .split(onseg_core::dataset::Split::Test);
    let data = manifest.load_dataset().unwrap();
    let ck = Checkpoint::read(&f.checkpoint).unwrap();
    let g = ck.grammar().unwrap();
    let im = InferenceModel {
        model: &ck.model,
        durations: &ck.durations,
        grammar: &g,
        online: OnlineConfig::default(),
    };
    infer_labels(&f, "greedy1", &["--decoder", "greedy", "--window", "1"]);
    for v in &data.videos {
        let stream = ck.model.forward(v.features.view()).unwrap();
        let file = |d: &str| f.root.join(d).join("labels").join(format!("{}.txt", v.id));
        let offline = read_labels(&file("off"), &data.actions).unwrap();
        assert_eq!(offline, im.labels(&stream, Decoder::Offline).unwrap());
        let greedy = read_labels(&file("greedy1"), &data.actions).unwrap();
        let argmax: Vec<usize> = stream
            .posteriors()
            .rows()
            .into_iter()
            .map(|r| (0..r.len()).fold(0, |b, a| if r[a] > r[b] { a } else { b }))
            .collect();
        assert_eq!(greedy, argmax);
    }
}

fn read_report(path: &Path) -> EvalReport {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn eval_of_ground_truth_is_all_ones_and_mismatches_are_listed() {
    let f = fixture(&[]);
    let out_dir = f.root.join("eval");
    let gt_dir = f.root.join("data").join("labels");
    let o = ok(&[
        "eval",
        "--manifest",
        s(&f.manifest),
        "--pred-dir",
        s(&gt_dir),
        "--out-dir",
        s(&out_dir),
        "--split",
        "all",
    ]);
    let path = PathBuf::from(String::from_utf8(o.stdout).unwrap().trim());
    let r = read_report(&path);
    let m = r.aggregate;
    assert_eq!((m.acc, m.acc_bg, m.iou, m.iod), (1.0, Some(1.0), Some(1.0), Some(1.0)));
    assert!(r.failures.is_empty());
    assert!(path.with_extension("config.json").exists());

    // truncate one prediction
    let pred = f.root.join("pred");
    fs::create_dir_all(&pred).unwrap();
    for e in fs::read_dir(&gt_dir).unwrap() {
        let p = e.unwrap().path();
        fs::copy(&p, pred.join(p.file_name().unwrap())).unwrap();
    }
    let victim = fs::read_dir(&pred).unwrap().next().unwrap().unwrap().path();
    let text = fs::read_to_string(&victim).unwrap();
    fs::write(&victim, text.lines().skip(1).collect::<Vec<_>>().join("\n")).unwrap();
    let o = onseg(&[
        "eval",
        "--manifest",
        s(&f.manifest),
        "--pred-dir",
        s(&pred),
        "--out-dir",
        s(&out_dir),
        "--split",
        "all",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let second = out_dir.join("eval-001.json");
    let r = read_report(&second);
    assert_eq!(r.failures.len(), 1);
    assert!(r.failures[0].error.contains("mismatch"), "{}", r.failures[0].error);
    assert!(out_dir.join("eval-000.json").exists(), "earlier reports are kept");
}

#[test]
fn sweep_endpoints_match_online_and_offline_eval() {
    let f = fixture(&["--occlude-anchor", "0.3:0.5"]);
    let out_dir = f.root.join("sweep");
    let o = ok(&[
        "sweep-delay",
        "--manifest",
        s(&f.manifest),
        "--checkpoint",
        s(&f.checkpoint),
        "--delays",
        "0,T/2,T",
        "--out-dir",
        s(&out_dir),
    ]);
    let tsv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(tsv, fs::read_to_string(out_dir.join("sweep-000.tsv")).unwrap());
    let rows: Vec<Vec<&str>> = tsv.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows[0], ["delay", "acc", "acc_bg", "iou", "iod"]);
    assert_eq!(rows.len(), 4);
    let fmt = |x: Option<f64>| x.map_or("NA".to_string(), |v| format!("{v:.6}"));
    for (row, decoder) in [(&rows[1], "online"), (&rows[3], "offline")] {
        let o = ok(&[
            "eval",
            "--manifest",
            s(&f.manifest),
            "--checkpoint",
            s(&f.checkpoint),
            "--decoder",
            decoder,
            "--out-dir",
            s(&out_dir),
        ]);
        let r = read_report(Path::new(String::from_utf8(o.stdout).unwrap().trim()));
        let m = r.aggregate;
        assert_eq!(
            row[1..],
            [fmt(Some(m.acc)), fmt(m.acc_bg), fmt(m.iou), fmt(m.iod)],
            "{decoder}"
        );
    }
}

#[test]
fn progress_emits_one_row_per_endpoint() {
    let f = fixture(&[]);
    let o = ok(&[
        "progress",
        "--manifest",
        s(&f.manifest),
        "--checkpoint",
        s(&f.checkpoint),
        "--out-dir",
        s(&f.root.join("p")),
    ]);
    let tsv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(tsv.lines().count(), 6);
}

#[test]
fn oracle_check_passes_and_reports_counts() {
    let o = ok(&["oracle-check", "--instances", "40", "--seed", "2"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let checks = v["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 8);
    for c in checks {
        assert_eq!(c["failures"], 0);
        assert_eq!(c["instances"], 40);
    }
}

#[test]
fn training_and_reports_are_reproducible() {
    let f = fixture(&[]);
    let again = f.root.join("again");
    let a = fs::read(&f.checkpoint).unwrap();
    fs::remove_file(&f.checkpoint).unwrap();
    // replay writes back into the recorded out-dir
    ok(&["replay", s(&f.root.join("run").join("train.config.json"))]);
    assert_eq!(a, fs::read(&f.checkpoint).unwrap());
    ok(&[
        "train",
        "--manifest",
        s(&f.manifest),
        "--out-dir",
        s(&again),
        "--epochs",
        "3",
    ]);
    assert_eq!(a, fs::read(again.join("checkpoint.txt")).unwrap());
    assert_eq!(
        fs::read(f.root.join("run").join("train-log.json")).unwrap(),
        fs::read(again.join("train-log.json")).unwrap()
    );
    for threads in ["1", "3"] {
        let d = f.root.join(format!("ev{threads}"));
        ok(&[
            "eval",
            "--manifest",
            s(&f.manifest),
            "--checkpoint",
            s(&f.checkpoint),
            "--out-dir",
            s(&d),
            "--threads",
            threads,
        ]);
    }
    assert_eq!(
        fs::read(f.root.join("ev1").join("eval-000.json")).unwrap(),
        fs::read(f.root.join("ev3").join("eval-000.json")).unwrap()
    );
}

#[test]
fn malformed_manifest_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("manifest.txt");
    fs::write(
        &m,
        "onseg-manifest 1\nactions a b\nvideo id=x recording=r split=train frames=2 features=f.csv transcript=a,q\n",
    )
    .unwrap();
    let o = onseg(&["train", "--manifest", s(&m), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("manifest.txt:3:"), "{err}");
}
