mod common;

use common::{levelflow, schema_errors};
use levelflow::cli::{check_exit_code, straighten_exit_code, StraightenReport};
use levelflow::regularity::{HypothesisReport, RegularityFailure, Witness};
use levelflow::Topology;

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).expect("stdout is JSON")
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn check_exit_codes() {
    let r = levelflow(&["check", "--expr", "y", "--window", "-1", "1", "-1", "1"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(json(&r.stdout)["verdict"], "Equivalent");

    let r = levelflow(&["check", "--expr", "x^2 + y^2"]);
    assert_eq!(r.code, 1);
    let report: HypothesisReport = serde_json::from_str(&r.stdout).unwrap();
    assert!(report.witnesses.iter().any(|w| matches!(
        w,
        Witness::Level(lw) if lw.topologies.contains(&Topology::ClosedLoop)
    )));

    let r = levelflow(&["check", "--expr", "atan(y - tan(x)^2)", "--window", "-3", "3", "-4", "4"]);
    assert_eq!(r.code, 1);
    let report: HypothesisReport = serde_json::from_str(&r.stdout).unwrap();
    assert!(report.condition1.witness.unwrap().component_count >= 2);
}

#[test]
fn configuration_errors_exit_2() {
    for args in [
        vec!["check"],
        vec!["check", "--expr", "y +"],
        vec!["check", "--expr", "y", "--window", "1", "-1", "0", "1"],
        vec!["check", "--expr", "y", "--strips", "0"],
        vec!["check", "--expr", "y", "--job", "/nonexistent/job.json"],
        vec!["straighten", "--expr", "foo(x)"],
    ] {
        let r = levelflow(&args);
        assert_eq!(r.code, 2, "{args:?}");
        assert!(r.stderr.contains("error"), "{args:?}: {}", r.stderr);
    }
}

#[test]
fn straighten_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let chart = dir.path().join("g.chart");
    let r = levelflow(&["straighten", "--expr", "y", "--out", chart.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report: StraightenReport = serde_json::from_str(&r.stdout).unwrap();
    assert!(report.verification.unwrap().max_residual < 1e-9);
    assert!(std::fs::read_to_string(&chart).unwrap().starts_with("levelflow-chart 1\n"));

    let r = levelflow(&["straighten", "--expr", "y - x^2", "--window", "-2", "2", "-2", "2", "--strips", "8"]);
    assert_eq!(r.code, 0, "{}", r.stderr);

    let r = levelflow(&["straighten", "--expr", "x^2 - y^2"]);
    assert_eq!(r.code, 1);
    let report: StraightenReport = serde_json::from_str(&r.stdout).unwrap();
    assert!(report.verification.is_none());
    assert!(report.check.witnesses.iter().any(|w| matches!(
        w,
        Witness::Regularity(rw) if rw.kind == RegularityFailure::VanishingGradient
    )));

    let r = levelflow(&["straighten", "--expr", "y - x^2", "--grid", "32", "32", "--tol-verify", "1e-14"]);
    assert_eq!(r.code, 3);
}

#[test]
fn job_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let job = dir.path().join("job.json");
    let report = dir.path().join("report.json");
    std::fs::write(
        &job,
        format!(
            r#"{{"expr": "x^2 + y^2", "grid": [24, 24], "levels": 8, "outputs": {{"report": {:?}}}}}"#,
            report.to_str().unwrap()
        ),
    )
    .unwrap();
    let r = levelflow(&["check", "--job", job.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert_eq!(std::fs::read_to_string(&report).unwrap(), r.stdout);
    assert_eq!(json(&r.stdout)["condition1"]["levels"].as_array().unwrap().len(), 8);

    let r = levelflow(&["check", "--job", job.to_str().unwrap(), "--expr", "y", "--levels", "5"]);
    assert_eq!(r.code, 0);
    assert_eq!(json(&r.stdout)["condition1"]["levels"].as_array().unwrap().len(), 5);
    assert_eq!(json(&r.stdout)["condition2"]["nodes_checked"], 24 * 24);

    let jobs = common::schema("job");
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&job).unwrap()).unwrap();
    assert!(jsonschema::is_valid(&jobs, &doc));
    assert!(!jsonschema::is_valid(&jobs, &serde_json::json!({"levels": 0})));
}

#[test]
fn exit_codes_replay_from_stored_reports() {
    for (name, code) in [
        ("check_equivalent.json", 0),
        ("check_closed_loop.json", 1),
        ("check_constant.json", 2),
    ] {
        let text = fixture(name);
        let report: HypothesisReport = serde_json::from_str(&text).unwrap();
        assert_eq!(check_exit_code(&report), code, "{name}");
        assert!(schema_errors("check-report", &json(&text)).is_empty(), "{name}");
    }
    for (name, code) in [
        ("straighten_pass.json", 0),
        ("straighten_saddle.json", 1),
        ("straighten_residual.json", 3),
    ] {
        let text = fixture(name);
        let report: StraightenReport = serde_json::from_str(&text).unwrap();
        assert_eq!(straighten_exit_code(&report), code, "{name}");
        assert!(schema_errors("straighten-report", &json(&text)).is_empty(), "{name}");
    }
}

#[test]
fn live_reports_match_the_schemas() {
    for expr in ["y", "x^2 - y^2", "x^2 + y^2", "atan(y - tan(x)^2)", "0*x"] {
        let r = levelflow(&["check", "--expr", expr, "--grid", "40", "40"]);
        let errors = schema_errors("check-report", &json(&r.stdout));
        assert!(errors.is_empty(), "{expr}: {errors:?}");
    }
    for expr in ["y", "y - x^3", "x^2 - y^2"] {
        let r = levelflow(&["straighten", "--expr", expr, "--grid", "40", "40"]);
        let errors = schema_errors("straighten-report", &json(&r.stdout));
        assert!(errors.is_empty(), "{expr}: {errors:?}");
    }
    let mut broken = json(&fixture("check_equivalent.json"));
    broken["verdict"] = "Maybe".into();
    assert!(!schema_errors("check-report", &broken).is_empty());
}

#[test]
fn render_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("fig.svg");
    let args = ["render", "--expr", "atan(y - tan(x)^2)", "--window", "-3", "3", "-4", "4", "--grid", "97", "129"];
    let a = levelflow(&args);
    let b = levelflow(&args);
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(a.stdout, b.stdout);
    assert!(a.stdout.starts_with("<svg"));
    assert!(a.stdout.contains("stroke-dasharray"));
    // Masked pole columns are drawn.
    assert!(a.stdout.contains(r##"fill="#dddddd""##));

    let mut with_out = args.to_vec();
    with_out.extend(["--out", svg.to_str().unwrap()]);
    assert_eq!(levelflow(&with_out).code, 0);
    assert_eq!(std::fs::read_to_string(&svg).unwrap(), a.stdout);
}

#[test]
fn render_draws_a_chart_grid() {
    let dir = tempfile::tempdir().unwrap();
    let chart = dir.path().join("p.chart");
    let r = levelflow(&["straighten", "--expr", "y - x^2", "--window", "-2", "2", "-2", "2", "--grid", "64", "64", "--out", chart.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let r = levelflow(&["render", "--chart", chart.to_str().unwrap(), "--window", "-2", "2", "-2", "2", "--grid", "64", "64"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains(r#"<g id="chart""#));
    let r = levelflow(&["render", "--chart", "/nonexistent.chart"]);
    assert_eq!(r.code, 2);
}

#[test]
fn help_documents_defaults() {
    let r = levelflow(&["check", "--help"]);
    assert_eq!(r.code, 0);
    for needle in ["--window", "[default: -1 1 -1 1]", "--tol-verify", "[default: 64]", "--job"] {
        assert!(r.stdout.contains(needle), "{needle}");
    }
}
