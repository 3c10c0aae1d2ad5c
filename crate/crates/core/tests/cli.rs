use std::path::Path;
use std::process::{Command, Output};

fn vpquant(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vpquant"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

const CONFIG: &str = "mode = \"fsq\"\nseed = 1\n[source]\nkind = \"uniform_cube\"\ndim = 2\n\
                      [scalar]\nlevels = [4, 3]\nbypass_activation = true\neval_samples = 5000\n";

#[test]
fn run_writes_report_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    let out = vpquant(&["run", "--config", "exp.toml", "--out", "res"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("res/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["mode"], "fsq");
    assert_eq!(report["k_effective"], 12);
    assert!(dir.path().join("res/usage.csv").exists());
    assert!(dir.path().join("res/bins.csv").exists());
}

#[test]
fn figure_has_eight_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = vpquant(
        &[
            "figure",
            "--levels",
            "4",
            "--samples",
            "100000",
            "--seed",
            "7",
            "--out",
            "fig.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("fig.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "scheme,reproduction_value,probability_mass");
    assert_eq!(rows.len(), 9);
    assert_eq!(rows.iter().filter(|r| r.starts_with("fsp,")).count(), 4);
}

#[test]
fn codebook_and_quantize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let vp = "mode = \"vp\"\n[source]\nkind = \"gaussian\"\ndim = 2\n[vp]\ncodebook_size = 8\n";
    std::fs::write(dir.path().join("vp.toml"), vp).unwrap();
    let steps: [&[&str]; 3] = [
        &[
            "sample", "--config", "vp.toml", "--n", "2000", "--out", "s.vpq",
        ],
        &[
            "codebook", "--input", "s.vpq", "--k", "8", "--seed", "1", "--out", "cb.vpc",
        ],
        &[
            "quantize",
            "--codebook",
            "cb.vpc",
            "--input",
            "s.vpq",
            "--out",
            "q.json",
            "--indices",
            "idx.csv",
        ],
    ];
    for args in steps {
        let out = vpquant(args, dir.path());
        assert_eq!(
            out.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cb.vpc.json")).unwrap())
            .unwrap();
    assert_eq!(meta["K"], 8);
    assert_eq!(meta["dim"], 2);
    let q: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("q.json")).unwrap()).unwrap();
    assert!(q["cvu"].as_f64().unwrap() > 0.8);
    let idx = std::fs::read_to_string(dir.path().join("idx.csv")).unwrap();
    assert_eq!(idx.lines().count(), 2001);
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = vpquant(&["selftest"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    let missing = vpquant(&["run", "--config", "nope.toml", "--out", "x"], p);
    assert_eq!(missing.status.code(), Some(1));
    assert!(!missing.stderr.is_empty());

    let unknown = vpquant(&["figure", "--frobnicate"], p);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Usage"));

    std::fs::write(p.join("bad.toml"), "mode = \"vp\"\ncolour = 3\n").unwrap();
    assert_eq!(
        vpquant(&["run", "--config", "bad.toml", "--out", "x"], p)
            .status
            .code(),
        Some(1)
    );

    assert_eq!(
        vpquant(&["figure", "--levels", "1", "--out", "f.csv"], p)
            .status
            .code(),
        Some(1)
    );

    std::fs::write(p.join("junk.vpq"), b"not a dump").unwrap();
    let junk = vpquant(
        &[
            "codebook", "--input", "junk.vpq", "--k", "2", "--out", "cb.vpc",
        ],
        p,
    );
    assert_eq!(junk.status.code(), Some(2));

    assert_eq!(vpquant(&["--help"], p).status.code(), Some(0));
}
