//! Integration tests driving the compiled binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn divsel(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divsel"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_orthogonal_corpus(dir: &Path) {
    fs::write(
        dir.join("corpus.tsv"),
        "a\t\t1,0,0\nb\t\t0,1,0\nc\t\t0,0,1\n",
    )
    .unwrap();
    fs::write(dir.join("queries.tsv"), "q\t\t1,0,0\n").unwrap();
}

#[test]
fn select_runs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let gen = divsel(
        &[
            "gen-synth", "--n", "30", "--d", "6", "--clusters", "3", "--noise", "0.2", "--seed",
            "1", "--out", "corpus.tsv",
        ],
        dir.path(),
    );
    assert_code(&gen, 0);
    let gen_q = divsel(
        &[
            "gen-synth", "--n", "2", "--d", "6", "--clusters", "2", "--noise", "0.1", "--seed",
            "2", "--out", "queries.tsv",
        ],
        dir.path(),
    );
    assert_code(&gen_q, 0);

    let run = |out: &str| {
        let r = divsel(
            &[
                "select", "--corpus", "corpus.tsv", "--queries", "queries.tsv", "--k1", "6",
                "--k", "2", "--lambda", "0.05", "--output-dir", out, "--emit-prompt",
                "--task-description", "Name the cluster.",
            ],
            dir.path(),
        );
        assert_code(&r, 0);
    };
    run("out_a");
    run("out_b");
    for name in [
        "report.json",
        "report.txt",
        "stage1_ids.txt",
        "stage2_ids.txt",
        "prompts/query_0000.txt",
    ] {
        let a = fs::read(dir.path().join("out_a").join(name)).unwrap();
        let b = fs::read(dir.path().join("out_b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
        assert!(!a.is_empty());
    }
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out_a/report.json")).unwrap()).unwrap();
    assert_eq!(report["config_echo"]["k1"], 6);
    assert!(report["stage1"].as_array().unwrap().len() <= 6);
    assert_eq!(report["stage2"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    write_orthogonal_corpus(dir.path());

    // usage error
    assert_code(&divsel(&["no-such-command"], dir.path()), 1);
    // config error: contradictory budgets
    assert_code(
        &divsel(
            &[
                "select", "--corpus", "corpus.tsv", "--queries", "queries.tsv", "--k1", "1",
                "--k", "3", "--output-dir", "out",
            ],
            dir.path(),
        ),
        1,
    );
    // data error: missing input
    assert_code(
        &divsel(
            &[
                "select", "--corpus", "missing.tsv", "--queries", "queries.tsv", "--output-dir",
                "out",
            ],
            dir.path(),
        ),
        2,
    );
    // data error: malformed embedding line
    fs::write(dir.path().join("broken.tsv"), "a\t\tnot-a-float\n").unwrap();
    assert_code(
        &divsel(
            &[
                "select", "--corpus", "broken.tsv", "--queries", "queries.tsv", "--output-dir",
                "out",
            ],
            dir.path(),
        ),
        2,
    );
    // success
    assert_code(
        &divsel(
            &[
                "select", "--corpus", "corpus.tsv", "--queries", "queries.tsv", "--k1", "2",
                "--k", "1", "--lambda", "0", "--output-dir", "out",
            ],
            dir.path(),
        ),
        0,
    );
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    write_orthogonal_corpus(dir.path());
    fs::write(
        dir.path().join("run.cfg"),
        "corpus = corpus.tsv\nqueries = queries.tsv\noutput_dir = out_cfg\nk1 = 2\nk = 2\nlambda = 0\nmethod = div_s3\n",
    )
    .unwrap();
    let run = divsel(
        &["select", "--config", "run.cfg", "--k", "1"],
        dir.path(),
    );
    assert_code(&run, 0);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out_cfg/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["config_echo"]["k"], 1); // flag wins
    assert_eq!(report["config_echo"]["k1"], 2); // file value

    // unknown config key is a config error
    fs::write(dir.path().join("bad.cfg"), "wat = 1\n").unwrap();
    assert_code(&divsel(&["select", "--config", "bad.cfg"], dir.path()), 1);
}

#[test]
fn binary_format_round_trips_through_select() {
    let dir = tempfile::tempdir().unwrap();
    for (name, n, seed) in [("corpus.bin", 12, 4u32), ("queries.bin", 2, 5)] {
        let gen = divsel(
            &[
                "gen-synth", "--n", &n.to_string(), "--d", "5", "--clusters", "2", "--noise",
                "0.2", "--seed", &seed.to_string(), "--format", "binary", "--out", name,
            ],
            dir.path(),
        );
        assert_code(&gen, 0);
    }
    let run = divsel(
        &[
            "select", "--corpus", "corpus.bin", "--queries", "queries.bin", "--format",
            "binary", "--k1", "4", "--k", "2", "--output-dir", "out", "--export-kernel",
        ],
        dir.path(),
    );
    assert_code(&run, 0);
    let kernel = fs::read(dir.path().join("out/kernel.bin")).unwrap();
    assert_eq!(kernel.len(), 4 + 12 * 12 * 8);
    assert_eq!(u32::from_le_bytes(kernel[0..4].try_into().unwrap()), 12);
}

#[test]
fn permute_enumerates_and_guards() {
    let dir = tempfile::tempdir().unwrap();
    let out = divsel(&["permute", "--items", "x,y,z"], dir.path());
    assert_code(&out, 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines,
        vec!["x,y,z", "x,z,y", "y,x,z", "y,z,x", "z,x,y", "z,y,x"]
    );

    let refused = divsel(
        &["permute", "--items", "a,b,c,d", "--limit", "10"],
        dir.path(),
    );
    assert_code(&refused, 1);
}

#[test]
fn gen_synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["one.tsv", "two.tsv"] {
        let r = divsel(
            &[
                "gen-synth", "--n", "10", "--d", "4", "--clusters", "2", "--noise", "0.3",
                "--seed", "11", "--out", out,
            ],
            dir.path(),
        );
        assert_code(&r, 0);
    }
    assert_eq!(
        fs::read(dir.path().join("one.tsv")).unwrap(),
        fs::read(dir.path().join("two.tsv")).unwrap()
    );
    // bad parameters are a config error
    let bad = divsel(
        &[
            "gen-synth", "--n", "2", "--d", "4", "--clusters", "5", "--out", "x.tsv",
        ],
        dir.path(),
    );
    assert_code(&bad, 1);
}

#[test]
fn oracle_suites_report_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = divsel(
        &[
            "oracle", "--checks", "monotonicity,projection,modular", "--instances", "10", "--n",
            "6", "--output-dir", "props",
        ],
        dir.path(),
    );
    assert_code(&out, 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("monotonicity/coverage: PASS"));
    assert!(text.contains("monotonicity/diversity: PASS"));
    assert!(text.contains("projection_identity: PASS"));
    assert!(text.contains("modular_upper_bound: PASS"));
    assert!(dir.path().join("props/properties.json").exists());
    assert!(dir.path().join("props/properties.txt").exists());
}

#[test]
fn probe_lambda_reports_inf_on_orthogonal_corpus() {
    let dir = tempfile::tempdir().unwrap();
    write_orthogonal_corpus(dir.path());
    let out = divsel(
        &["probe-lambda", "--corpus", "corpus.tsv", "--trials", "50"],
        dir.path(),
    );
    assert_code(&out, 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("max_valid_lambda_estimate: inf"), "{text}");
}

#[test]
fn grid_runs_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    write_orthogonal_corpus(dir.path());
    let out = divsel(
        &[
            "grid", "--corpus", "corpus.tsv", "--queries", "queries.tsv", "--output-dir",
            "grid_out", "--k1", "2", "--k", "1", "--lambdas", "0,0.1", "--methods",
            "dual_div,div_s3",
        ],
        dir.path(),
    );
    assert_code(&out, 0);
    let summary = fs::read_to_string(dir.path().join("grid_out/grid_summary.txt")).unwrap();
    assert_eq!(summary.lines().count(), 5); // header + 4 cells
    for cell in [
        "dual_div_lambda_0",
        "dual_div_lambda_0.1",
        "div_s3_lambda_0",
        "div_s3_lambda_0.1",
    ] {
        assert!(dir.path().join("grid_out").join(cell).join("report.json").exists());
    }
    // coverage-only method ignores lambda: both div_s3 cells identical
    let a = fs::read(dir.path().join("grid_out/div_s3_lambda_0/report.json")).unwrap();
    let b = fs::read(dir.path().join("grid_out/div_s3_lambda_0.1/report.json")).unwrap();
    assert_eq!(a, b);
}
