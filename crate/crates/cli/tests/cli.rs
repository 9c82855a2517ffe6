use std::path::PathBuf;
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn abducer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abducer")).current_dir(root()).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn analyzed_program_exits_zero() {
    let o = abducer(&["analyze", "listings/nested.tl"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("function nested: analyzed"), "{out}");
    assert_eq!(out.matches("  contract ").count(), 2);
}

#[test]
fn failed_function_exits_one() {
    let o = abducer(&["analyze", "corpus/zip.tl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("spatial-change"));
}

#[test]
fn missing_file_exits_two() {
    let o = abducer(&["analyze", "corpus/no_such_file.tl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_file.tl"));
}

#[test]
fn parse_error_exits_two() {
    let dir = std::env::temp_dir().join(format!("abducer-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("bad.tl");
    std::fs::write(&f, "int f(x) {\n  x = ;\n}\n").unwrap();
    let o = abducer(&["analyze", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains('2'), "{}", stderr(&o));
}

#[test]
fn unsound_contracts_exit_three() {
    let o = abducer(&["check", "corpus/two_branches.tl", "--fault", "no-shared-learning"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("violation in contract"));
    assert!(stderr(&o).contains("violated"));
    let o = abducer(&["check", "corpus/two_branches.tl"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("0 violations"));
}

#[test]
fn zero_samples_skips_the_check() {
    let o = abducer(&["check", "corpus/two_branches.tl", "--samples", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("soundness check skipped"));
}

#[test]
fn unknown_fault_is_rejected() {
    let o = abducer(&["analyze", "listings/nested.tl", "--fault", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn json_output_has_the_documented_fields() {
    let o = abducer(&["analyze", "listings/inner_loop.tl", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let reports = v.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    let lp = &reports[0];
    assert_eq!(lp["function"], "inner_loop.loop0");
    assert_eq!(lp["status"], "analyzed");
    assert_eq!(lp["iterations"], 2);
    assert!(lp["diagnostics"].is_array());
    for c in lp["contracts"].as_array().unwrap() {
        assert!(c["pre"].is_string());
        assert!(c["post"].as_array().unwrap().iter().all(|p| p.is_string()));
        assert_eq!(c["vars"]["anchors"], serde_json::json!(["I"]));
        assert!(c["vars"]["logicals"].is_array());
    }
    assert!(reports[1].get("iterations").is_none());
}

#[test]
fn failed_function_reports_its_reason_first() {
    let o = abducer(&["analyze", "corpus/bounded_walk.tl", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let lp = &v[0];
    assert_eq!(lp["status"], "failed");
    assert!(lp["diagnostics"][0].as_str().unwrap().contains("verification"), "{lp}");
}

#[test]
fn output_is_byte_identical_across_runs() {
    for args in [
        &["analyze", "corpus/motivation1.tl", "--verbose", "2"][..],
        &["check", "listings/weighted_sum.tl", "--format", "json"],
        &["check", "corpus/two_branches.tl", "--fault", "no-shared-learning", "--seed", "9"],
    ] {
        let a = abducer(args);
        let b = abducer(args);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
        assert_eq!(a.stderr, b.stderr, "{args:?}");
    }
}

#[test]
fn seed_comes_from_the_environment() {
    let run = |seed: &str| {
        Command::new(env!("CARGO_BIN_EXE_abducer"))
            .current_dir(root())
            .args(["check", "corpus/two_branches.tl", "--fault", "no-shared-learning", "--samples", "3"])
            .env("ABDUCER_SEED", seed)
            .output()
            .unwrap()
    };
    let flag =
        abducer(&["check", "corpus/two_branches.tl", "--fault", "no-shared-learning", "--samples", "3", "--seed", "5"]);
    assert_eq!(run("5").stdout, flag.stdout);
    assert_ne!(run("6").stdout, flag.stdout);
}

#[test]
fn verbose_output_shows_certificates_and_trace() {
    let o = abducer(&["analyze", "listings/inner_loop.tl", "--verbose", "2"]);
    let out = stdout(&o);
    assert!(out.contains("entailment") || out.contains("empty-segment lemma"), "{out}");
    assert!(out.contains("world#0 post#0 loc="), "{out}");
}

#[test]
fn block_definitions_are_listed() {
    let o = abducer(&["analyze", "listings/weighted_sum.tl"]);
    let out = stdout(&o);
    assert!(out.contains("blocks:"), "{out}");
    assert!(out.lines().any(|l| l.contains("iter[2](H,T) :=") && l.contains("iter[1](")), "{out}");
}

#[test]
fn corpus_matches_its_expectations() {
    let o = abducer(&["corpus", "corpus"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("10/10 rows match"), "{out}");
    assert!(out.lines().any(|l| l.starts_with("zip") && l.contains("spatial-change")));
}

#[test]
fn corpus_reports_a_mismatch() {
    let dir = std::env::temp_dir().join(format!("abducer-corpus-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::copy(root().join("corpus/zip.tl"), dir.join("zip.tl")).unwrap();
    std::fs::write(dir.join("zip.expect"), "outcome: ok\n").unwrap();
    std::fs::copy(root().join("corpus/two_branches.tl"), dir.join("two_branches.tl")).unwrap();
    std::fs::write(dir.join("two_branches.expect"), "outcome: ok\n").unwrap();
    let o = abducer(&["corpus", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("1/2 rows match"), "{}", stdout(&o));
}
