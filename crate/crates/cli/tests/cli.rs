use std::process::{Command, Output};

use serde_json::Value;

fn hua(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hua"))
        .args(args)
        .env_remove("HUA_SEED")
        .output()
        .unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn error_record(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn without_timing(mut v: Value) -> String {
    v.as_object_mut().unwrap().remove("timing");
    v.to_string()
}

/// The closed form in integers: each factor `(1 - p^{-x}) / (1 - p^{-y})`
/// equals `(p^x - 1) p^y / ((p^y - 1) p^x)`.
fn hua_fraction(n: i64, alpha: i64, p: u128) -> (u128, u128) {
    let (mut num, mut den) = (1u128, 1u128);
    for j in 1..=n {
        let x = (alpha - n + j) as u32;
        let y = (alpha - n - j + 1) as u32;
        num *= (p.pow(x) - 1) * p.pow(y);
        den *= (p.pow(y) - 1) * p.pow(x);
    }
    let g = gcd(num, den);
    (num / g, den / g)
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[test]
fn hua_constant_matches_integer_oracle() {
    let out = hua(&["hua-const", "--n", "2", "--p", "2", "--alpha", "4"]);
    assert!(out.status.success());
    assert_eq!(report(&out)["result"]["closed_form"], "35/16");
    for (n, alpha, p) in [(1, 3, 3), (2, 5, 3), (3, 7, 2)] {
        let out = hua(&[
            "hua-const",
            "--n",
            &n.to_string(),
            "--p",
            &p.to_string(),
            "--alpha",
            &alpha.to_string(),
        ]);
        let (a, b) = hua_fraction(n, alpha, p as u128);
        assert_eq!(report(&out)["result"]["closed_form"], format!("{a}/{b}"));
    }
}

#[test]
fn series_brackets_the_closed_form() {
    let out = hua(&[
        "hua-series",
        "--n",
        "2",
        "--p",
        "3",
        "--alpha",
        "5",
        "--kmax",
        "10",
        "--depth",
        "4",
    ]);
    let r = &report(&out)["result"];
    let err = r["abs_error"].as_f64().unwrap();
    assert!(err <= r["tail_bound"].as_f64().unwrap(), "{r}");
    let out = hua(&[
        "hua-series",
        "--n",
        "2",
        "--p",
        "3",
        "--alpha",
        "4",
        "--flavor",
        "symm",
    ]);
    assert!(report(&out)["result"].get("closed_form").is_none());
}

#[test]
fn lattice_beta_reports_its_limit() {
    let out = hua(&[
        "lattice-beta",
        "--n",
        "2",
        "--p",
        "2",
        "--t",
        "5",
        "--depth",
        "2",
    ]);
    let r = &report(&out)["result"];
    assert!(r["abs_error"].as_f64().unwrap() <= r["tail_bound"].as_f64().unwrap());
    assert!(r["lattices"].as_u64().unwrap() > 0);
}

#[test]
fn smith_and_gamma_of_a_diagonal_matrix() {
    let out = hua(&["smith", "--p", "2", "--matrix", "1/4,0;0,2"]);
    let r = &report(&out)["result"];
    assert_eq!(r["profile"]["ks"], serde_json::json!([2, -1]));
    assert_eq!(r["gamma"], "4");
    assert_eq!(r["det_norm"], "2");
    let out = hua(&["gamma", "--p", "3", "--matrix", "1/9,1;0,1/3"]);
    assert_eq!(report(&out)["result"]["gamma"], "27");
}

#[test]
fn push_test_reports_the_integral_stratum() {
    let out = hua(&[
        "push-test",
        "--n",
        "1",
        "--p",
        "2",
        "--s",
        "1",
        "--samples",
        "100000",
        "--seed",
        "7",
    ]);
    assert!(out.status.success());
    let r = report(&out);
    assert_eq!(r["passed"], true);
    let res = &r["result"];
    assert!((res["integral_expected"].as_f64().unwrap() - 6.0 / 7.0).abs() < 1e-12);
    let labels: Vec<&str> = res["labels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l.as_str().unwrap())
        .collect();
    let one = labels.iter().position(|l| *l == "(1)").unwrap();
    assert!((res["expected_probabilities"][one].as_f64().unwrap() - 3.0 / 28.0).abs() < 1e-12);
}

#[test]
fn csv_output_for_flat_tables() {
    let out = hua(&[
        "push-test",
        "--n",
        "1",
        "--p",
        "3",
        "--s",
        "0",
        "--samples",
        "2000",
        "--format",
        "csv",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("bin,expected,observed\n"));
    assert!(text.lines().count() > 3);
    let out = hua(&[
        "hua-const",
        "--n",
        "1",
        "--p",
        "2",
        "--alpha",
        "3",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error_kind"], "usage");
}

#[test]
fn errors_are_structured_with_exit_codes() {
    let out = hua(&["hua-const", "--n", "2", "--p", "2", "--alpha", "3"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error_kind"], "convergence_domain");
    let out = hua(&["hua-const", "--n", "2", "--p", "6", "--alpha", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error_kind"], "invalid_input");
    let out = hua(&["hua-const", "--n", "2", "--p", "2", "--alpha", "five"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error_kind"], "usage");
    let out = hua(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_record(&out)["context"].is_string());
    let out = hua(&[
        "sample", "--n", "2", "--p", "2", "--s", "-3", "--count", "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn reports_are_reproducible_and_seed_overridable() {
    let args = [
        "rn-check", "--n", "2", "--p", "3", "--s", "3/2", "--flavor", "symm", "--trials", "100",
        "--seed", "11",
    ];
    let a = without_timing(report(&hua(&args)));
    let b = without_timing(report(&hua(&args)));
    assert_eq!(a, b);
    let out = Command::new(env!("CARGO_BIN_EXE_hua"))
        .args(args)
        .env("HUA_SEED", "99")
        .output()
        .unwrap();
    let r = report(&out);
    assert_eq!(r["config"]["seed"], 99);
    assert_eq!(r["passed"], true);
    let echoed: hua_config::Echo = serde_json::from_value(r["config"].clone()).unwrap();
    assert_eq!(echoed.subcommand, "rn-check");
    assert_eq!(echoed.parameters["s"], "3/2");
}

mod hua_config {
    #[derive(serde::Deserialize)]
    pub struct Echo {
        pub subcommand: String,
        pub parameters: serde_json::Value,
    }
}

#[test]
fn samples_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.jsonl");
    let three = dir.path().join("three.jsonl");
    for (path, threads) in [(&one, "1"), (&three, "3")] {
        let out = hua(&[
            "sample",
            "--n",
            "2",
            "--p",
            "2",
            "--s",
            "1",
            "--count",
            "5000",
            "--seed",
            "3",
            "--threads",
            threads,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        assert_eq!(report(&out)["result"]["proposals"], 5000);
    }
    let a = std::fs::read(&one).unwrap();
    assert_eq!(a, std::fs::read(&three).unwrap());
    assert_eq!(a.iter().filter(|b| **b == b'\n').count(), 5000);
    let first: Value = serde_json::from_slice(a.split(|b| *b == b'\n').next().unwrap()).unwrap();
    assert!(first["status"].is_string() && first["z"]["rows"] == 2);
}

#[test]
fn band_elements_round_trip_through_files() {
    let out = hua(&[
        "stab-det",
        "--k0",
        "2",
        "--kind",
        "unit_diagonal",
        "--seed",
        "5",
    ]);
    let r = report(&out);
    assert_eq!(r["passed"], true);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("band.json");
    std::fs::write(&path, r["result"]["band_element"].to_string()).unwrap();
    let again = report(&hua(&[
        "stab-det",
        "--band-spec",
        path.to_str().unwrap(),
        "--seed",
        "6",
    ]));
    assert_eq!(again["passed"], true);
    assert_eq!(again["result"]["band_element"], r["result"]["band_element"]);
}

#[test]
fn unitarity_and_tower_reports_pass() {
    let out = hua(&[
        "unitarity-test",
        "--s",
        "0",
        "--samples",
        "4000",
        "--elements",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let out = hua(&[
        "tower",
        "--p",
        "3",
        "--s",
        "1",
        "--levels",
        "2",
        "--samples",
        "3000",
    ]);
    assert!(out.status.success());
    assert_eq!(
        report(&out)["result"]["levels"].as_array().unwrap().len(),
        2
    );
}

#[test]
fn acceptance_fast_exact_criteria() {
    let out = hua(&[
        "acceptance",
        "--tier",
        "fast",
        "--only",
        "1,3,7,10",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.contains(",true,")));
    let json = report(&hua(&["acceptance", "--tier", "fast", "--only", "10"]));
    assert!(json["result"].get("timings").is_none());
    assert!(json["timing"]["breakdown"].is_array());
    assert!(json["result"]["criteria"][0]["anchor"]
        .as_str()
        .unwrap()
        .contains("c(n, t)"));
}
