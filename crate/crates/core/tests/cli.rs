mod common;

use std::fs;
use std::process::{Command, Output};

use common::fixture;

fn coeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coeval")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn conf(name: &str) -> String {
    fixture(name).display().to_string()
}

#[test]
fn run_person_writes_all_outputs() {
    let out = tempfile::tempdir().unwrap();
    let o = coeval(&[
        "run",
        &conf("person/project.conf"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("6 triple(s), 2 blank node(s)"), "{}", stdout(&o));
    assert!(stdout(&o).contains("overall: bijective"));
    for f in ["triples.nt", "provenance.json", "roundtrip.json"] {
        assert!(out.path().join(f).is_file(), "{f} missing");
    }
    let nt = out.path().join("triples.nt");
    let iso = coeval(&["iso", nt.to_str().unwrap(), &conf("person/expected.nt")]);
    assert_eq!(code(&iso), 0);
    assert_eq!(stdout(&iso).trim(), "isomorphic");
}

#[test]
fn provenance_names_each_triples_generators() {
    let out = tempfile::tempdir().unwrap();
    let o = coeval(&[
        "coeval",
        &conf("person/project.conf"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("provenance.json")).unwrap()).unwrap();
    assert_eq!(json["triple_count"], 6);
    let typed = json["triples"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["object"] == "foaf:person")
        .unwrap();
    let g = &typed["generators"][0];
    assert_eq!((g["row"].as_str(), g["var"].as_str()), (Some("Person#0"), Some("r")));
}

#[test]
fn roundtrip_reports_gain_for_the_swap() {
    let out = tempfile::tempdir().unwrap();
    let o = coeval(&[
        "roundtrip",
        &conf("fibo/project.conf"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(
        stdout(&o).contains("1 input row(s), 2 round-tripped row(s), gain"),
        "{}",
        stdout(&o)
    );
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("roundtrip.json")).unwrap()).unwrap();
    assert_eq!(json["classification"], "gain");
}

#[test]
fn compile_writes_one_query_per_table() {
    let out = tempfile::tempdir().unwrap();
    let o = coeval(&[
        "compile",
        &conf("fibo/mapping.conf"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out.path().join("Swap.cq")).unwrap();
    let q = coeval::qlang::parse_query(&text).unwrap();
    assert_eq!(q.selects.len(), 10);
}

#[test]
fn type_predicate_flag_reaches_the_compiler() {
    let out = tempfile::tempdir().unwrap();
    let o = coeval(&[
        "compile",
        &conf("person/mapping.conf"),
        "--out",
        out.path().to_str().unwrap(),
        "--type-predicate",
        "ex:kind",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out.path().join("Person.cq")).unwrap();
    assert!(text.contains("\"ex:kind\""), "{text}");
}

#[test]
fn empty_input_succeeds_with_no_triples() {
    let out = tempfile::tempdir().unwrap();
    let o = coeval(&[
        "run",
        &conf("empty/project.conf"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.path().join("triples.nt")).unwrap(), "");
}

#[test]
fn inconsistency_exits_2_with_a_trace() {
    let out = tempfile::tempdir().unwrap();
    let o = coeval(&[
        "run",
        &conf("inconsistent/project.conf"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("\"Alice\" = \"20\""), "{err}");
    assert!(err.contains("(Person#0, r).object"), "{err}");
    assert!(!out.path().join("triples.nt").exists());
}

#[test]
fn unfixed_predicate_exits_3() {
    let out = tempfile::tempdir().unwrap();
    let o = coeval(&[
        "run",
        &conf("blank_predicate/project.conf"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    assert!(
        stderr(&o).contains("predicate cell of output row (Person#0, v)"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn broken_mapping_exits_4() {
    let o = coeval(&["compile", &conf("bad_mapping/project.conf"), "--out", "/nonexistent"]);
    assert_eq!(code(&o), 4);
    assert!(
        stderr(&o).contains("edge 2 `fibo:hasTag` starts at fibo:Identifier"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&coeval(&[])), 1);
    assert_eq!(code(&coeval(&["frobnicate"])), 1);
    assert_eq!(code(&coeval(&["run", "/no/such/project.conf"])), 1);
}

#[test]
fn iso_distinguishes_different_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.nt");
    fs::write(&a, "_:x <p:q> _:y .\n_:y <p:q> _:x .\n").unwrap();
    let b = dir.path().join("b.nt");
    fs::write(&b, "_:x <p:q> _:x .\n_:y <p:q> _:y .\n").unwrap();
    let o = coeval(&["iso", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert_eq!(stdout(&o).trim(), "not isomorphic");
}

#[test]
fn check_hom_lists_homomorphisms() {
    let o = coeval(&["check-hom", &conf("person/project.conf")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ok: 0 homomorphism(s)"));
}

#[test]
fn ingest_counts_rows() {
    let o = coeval(&["ingest", &conf("fibo/project.conf")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "Swap: 1 row(s)");
}

#[test]
fn foreign_keys_link_employees_to_departments() {
    let out = tempfile::tempdir().unwrap();
    let o = coeval(&[
        "run",
        &conf("emp_dept/project.conf"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("10 triple(s), 5 blank node(s)"), "{}", stdout(&o));
    let hom = coeval(&["check-hom", &conf("emp_dept/project.conf")]);
    assert!(stdout(&hom).contains("Dept -> Emp: d -> d, t -> t"), "{}", stdout(&hom));
}

#[test]
fn strict_turns_warnings_into_failures() {
    let dir = tempfile::tempdir().unwrap();
    let person = fixture("person");
    let text = format!(
        "table.Person = name, age\ncsv.Person = {0}/person.csv\nquery.Person = {0}/Person.cq\nout = {1}\ncolour = blue\n",
        person.display(),
        dir.path().join("out").display()
    );
    let cfg = dir.path().join("project.conf");
    fs::write(&cfg, text).unwrap();
    let lax = coeval(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&lax), 0, "{}", stderr(&lax));
    assert!(stderr(&lax).contains("warning:"), "{}", stderr(&lax));
    assert_eq!(code(&coeval(&["run", cfg.to_str().unwrap(), "--strict"])), 1);
}
