use std::path::Path;
use std::process::{Command, Output};

use ecgpack::signal_io::{load_record, RecordFormat};

fn ecgpack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecgpack"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = ecgpack(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "synth",
            "--seed",
            "5",
            "--secondary",
            "0.9,0.05,0.005",
            "--out",
            "rec.csv",
        ],
    );
    ok(
        dir.path(),
        &[
            "fit-codebook",
            "--in",
            "rec.csv",
            "--levels",
            "32",
            "--out",
            "cb.json",
        ],
    );
    dir
}

#[test]
fn every_codec_encodes_and_decodes() {
    let dir = setup();
    let d = dir.path();
    let original = load_record(d.join("rec.csv"), RecordFormat::Csv).unwrap();
    for codec in ["diff", "olp", "dpcm", "lms", "cond"] {
        let stream = format!("{codec}.bin");
        let back = format!("{codec}.csv");
        ok(
            d,
            &[
                "encode",
                "--codec",
                codec,
                "--in",
                "rec.csv",
                "--codebook",
                "cb.json",
                "--out",
                &stream,
            ],
        );
        ok(d, &["decode", "--in", &stream, "--out", &back]);
        let rec = load_record(d.join(&back), RecordFormat::Csv).unwrap();
        assert_eq!(rec.len(), original.len());
        let want = if codec == "cond" { 2 } else { 1 };
        assert_eq!(rec.channels().len(), want);
    }
}

#[test]
fn encoding_is_byte_deterministic() {
    let dir = setup();
    let d = dir.path();
    for name in ["a.bin", "b.bin"] {
        ok(
            d,
            &[
                "encode",
                "--codec",
                "diff",
                "--in",
                "rec.csv",
                "--codebook",
                "cb.json",
                "--k",
                "3",
                "--out",
                name,
            ],
        );
    }
    assert_eq!(
        std::fs::read(d.join("a.bin")).unwrap(),
        std::fs::read(d.join("b.bin")).unwrap()
    );
}

#[test]
fn stability_json_reports_unstable_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        dir.path(),
        &[
            "stability",
            "--coeffs",
            "-0.1436,-0.2120,0.1582,1.1548",
            "--json",
        ],
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["stable"], false);
    assert_eq!(v["poles"].as_array().unwrap().len(), 4);
    let out = ok(dir.path(), &["stability", "--coeffs", "0.5", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["stable"], true);
}

#[test]
fn optimize_rate_writes_grid_and_optimum() {
    let dir = setup();
    let d = dir.path();
    let out = ok(
        d,
        &[
            "optimize-rate",
            "--in",
            "rec.csv",
            "--budget",
            "1200",
            "--grid",
            "grid.csv",
            "--json",
        ],
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["rate_bps"].as_f64().unwrap() <= 1200.0);
    let grid = std::fs::read_to_string(d.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().next().unwrap(), "W,K,Tt_s,rate_bps,ase");
    assert_eq!(grid.lines().count(), 1 + 9 * 40);
}

#[test]
fn bench_writes_one_row_per_cell() {
    let dir = setup();
    let d = dir.path();
    std::fs::create_dir(d.join("corpus")).unwrap();
    std::fs::copy(d.join("rec.csv"), d.join("corpus/r1.csv")).unwrap();
    ok(d, &["synth", "--seed", "9", "--out", "corpus/r2.ecg1"]);
    ok(
        d,
        &[
            "bench",
            "--corpus",
            "corpus",
            "--codecs",
            "diff,dpcm",
            "--widths",
            "4..6",
            "--out",
            "report.csv",
        ],
    );
    let report = std::fs::read_to_string(d.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 2 * 2 * 3);
    assert!(report.lines().nth(1).unwrap().starts_with("r1,diff,4,"));
}

#[test]
fn exit_codes() {
    let dir = setup();
    let d = dir.path();
    // Validation and corrupt input.
    assert_eq!(code(&ecgpack(d, &["stability", "--coeffs", "a,b"])), 2);
    assert_eq!(
        code(&ecgpack(
            d,
            &["decode", "--in", "cb.json", "--out", "x.csv"]
        )),
        2
    );
    std::fs::write(d.join("bad.csv"), "t,lead\n0,1\n1\n").unwrap();
    assert_eq!(
        code(&ecgpack(
            d,
            &[
                "fit-codebook",
                "--in",
                "bad.csv",
                "--levels",
                "4",
                "--out",
                "x.json"
            ]
        )),
        2
    );
    // Degenerate: a flat record has no differences to fit.
    std::fs::write(d.join("flat.csv"), format!("a\n{}", "1\n".repeat(100))).unwrap();
    assert_eq!(
        code(&ecgpack(
            d,
            &[
                "encode",
                "--codec",
                "dpcm",
                "--in",
                "flat.csv",
                "--codebook",
                "cb.json",
                "--out",
                "x"
            ]
        )),
        3
    );
    assert_eq!(
        code(&ecgpack(
            d,
            &["optimize-rate", "--in", "rec.csv", "--budget", "5"]
        )),
        4
    );
    assert_eq!(
        code(&ecgpack(
            d,
            &["decode", "--in", "missing.bin", "--out", "x.csv"]
        )),
        5
    );
}
