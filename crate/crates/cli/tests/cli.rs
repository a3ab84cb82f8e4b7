use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("tests/fixtures");
    p.push(name);
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marginfer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid JSON report")
}

#[test]
fn infer_worked_example() {
    let out = run(&["infer", &fixture("example.json"), &fixture("evidence.json")]);
    let report = json(&out);
    assert!((report["likelihoods"]["x"].as_f64().unwrap() - 0.125).abs() < 1e-12);
    assert!((report["posterior"]["x"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(report["argmax"], "x");
    assert_eq!(report["diagnostics"]["rules_fired"], 2);
    assert_eq!(
        report["diagnostics"]["classes"]["x"]["nonnegativity"],
        "verified"
    );
}

#[test]
fn malformed_rule_file_exits_one_with_position() {
    let out = run(&[
        "infer",
        &fixture("malformed.json"),
        &fixture("evidence.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 6"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_file_exits_one() {
    let out = run(&["infer", &fixture("absent.json"), &fixture("evidence.json")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dump_system_prints_gram_matrix() {
    let out = run(&[
        "infer",
        &fixture("example.json"),
        &fixture("evidence.json"),
        "--dump-system",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with(
        "C,0,4,2,4\nC,1,2,2,2\nC,2,4,2,8\nb,x,0.5,0.25,1\nb,xbar,0.5,0.25,1\nw,,1,1,1\n"
    ));
}

#[test]
fn clamp_flag_repairs_negative_cell() {
    let out = run(&[
        "infer",
        "--clamp",
        &fixture("clamp.json"),
        &fixture("clamp_evidence.json"),
    ]);
    let report = json(&out);
    assert!((report["likelihoods"]["x"].as_f64().unwrap() - 0.8).abs() < 1e-10);
    assert_eq!(report["diagnostics"]["classes"]["x"]["clamp_iterations"], 1);

    let plain = json(&run(&[
        "infer",
        &fixture("clamp.json"),
        &fixture("clamp_evidence.json"),
    ]));
    // Unclamped minimum-norm cells are (−0.15, 0.25, 0.25, 0.65).
    assert!((plain["likelihoods"]["x"].as_f64().unwrap() - 0.65).abs() < 1e-10);
    assert_eq!(
        plain["diagnostics"]["classes"]["x"]["nonnegativity"],
        "violated"
    );
}

#[test]
fn self_swap_has_zero_delta() {
    let out = run(&[
        "--verify",
        "swap",
        &fixture("example.json"),
        &fixture("evidence.json"),
        &fixture("swap_self.json"),
    ]);
    let report = json(&out);
    assert_eq!(report[0]["path"], "unchanged");
    assert_eq!(report[0]["rebuild_delta"].as_f64(), Some(0.0));
    assert!((report[0]["likelihoods"]["x"].as_f64().unwrap() - 0.125).abs() < 1e-12);
}

#[test]
fn scripted_swap_matches_rebuild() {
    let out = run(&[
        "--verify",
        "swap",
        &fixture("example.json"),
        &fixture("evidence.json"),
        &fixture("swap_example.json"),
    ]);
    let report = json(&out);
    // {F1} at 0.5 and {F3} at 0.6 over three attributes.
    assert!((report[0]["likelihoods"]["x"].as_f64().unwrap() - 0.15).abs() < 1e-12);
    assert!(report[0]["rebuild_delta"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn swapping_normalization_row_is_rejected() {
    let out = run(&[
        "swap",
        &fixture("example.json"),
        &fixture("evidence.json"),
        &fixture("swap_normalization.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("normalization"));
}

#[test]
fn oracle_check_passes() {
    for extra in [&[][..], &["--n", "1"][..], &["--duplicates"][..]] {
        let mut args = vec!["oracle-check", "--trials", "300"];
        args.extend_from_slice(extra);
        let report = json(&run(&args));
        assert_eq!(report["pass"], true, "{extra:?}");
        assert!(report["max_abs_delta"].as_f64().unwrap() <= 1e-9);
    }
    let dup = json(&run(&[
        "oracle-check",
        "--trials",
        "300",
        "--duplicates",
        "--n",
        "6",
    ]));
    assert!(dup["pseudo_inverse_instances"].as_u64().unwrap() > 0);
}

#[test]
fn oracle_check_rejects_oversized_n() {
    assert_eq!(run(&["oracle-check", "--n", "21"]).status.code(), Some(1));
}

#[test]
fn identical_seeds_give_identical_reports() {
    let cases: [&[&str]; 3] = [
        &["--seed", "5", "oracle-check", "--trials", "50"],
        &[
            "--seed",
            "5",
            "study-agreement",
            "--lengths",
            "4,32",
            "--trials",
            "2000",
        ],
        &["--seed", "5", "bench-led", "--trials", "500"],
    ];
    for args in cases {
        let a = run(args);
        let b = run(args);
        assert_eq!(a.status.code(), Some(0));
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
    let a = run(&["--seed", "5", "bench-led", "--trials", "500"]);
    let c = run(&["--seed", "6", "bench-led", "--trials", "500"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn every_command_honors_every_format() {
    let commands: Vec<Vec<String>> = vec![
        vec![
            "infer".into(),
            fixture("example.json"),
            fixture("evidence.json"),
        ],
        vec![
            "swap".into(),
            fixture("example.json"),
            fixture("evidence.json"),
            fixture("swap_example.json"),
        ],
        vec!["oracle-check".into(), "--trials".into(), "20".into()],
        vec![
            "study-agreement".into(),
            "--lengths".into(),
            "4".into(),
            "--trials".into(),
            "100".into(),
        ],
        vec!["bench-led".into(), "--trials".into(), "100".into()],
    ];
    for cmd in &commands {
        for format in ["json", "csv", "text"] {
            let mut args: Vec<&str> = cmd.iter().map(String::as_str).collect();
            args.extend(["--format", format]);
            let out = run(&args);
            assert_eq!(out.status.code(), Some(0), "{args:?}");
            let text = stdout(&out);
            assert!(!text.is_empty());
            match format {
                "json" => {
                    serde_json::from_str::<Value>(&text).unwrap();
                }
                "csv" => assert!(text.lines().next().unwrap().contains(',')),
                _ => assert!(serde_json::from_str::<Value>(&text).is_err()),
            }
        }
    }
}

#[test]
fn config_file_sets_seed_and_format() {
    let out = run(&[
        "--config",
        &fixture("config.json"),
        "study-agreement",
        "--lengths",
        "4",
        "--trials",
        "100",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("seed 11"), "{text}");
    // Command-line flags override the file.
    let out = run(&[
        "--config",
        &fixture("config.json"),
        "--format",
        "json",
        "study-agreement",
        "--lengths",
        "4",
        "--trials",
        "100",
    ]);
    assert_eq!(json(&out)["seed"], 11);
}

#[test]
fn invalid_noise_exits_one() {
    assert_eq!(
        run(&["bench-led", "--noise", "0.7", "--trials", "10"])
            .status
            .code(),
        Some(1)
    );
}
