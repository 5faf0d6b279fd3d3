use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};

use pfdim::abelian::{parse_conjunction, symbolic_count, SymbolicConfig};
use pfdim::dimension::{delta_compare, fmv_spectrum, Thresholds};
use pfdim::families::{count_family, FamilyHandle, VectorSpace};
use pfdim::measure::{find_k_intersection, MeasureSpec, SearchOptions};
use pfdim::parser::{parse_formula, structure_to_json};
use pfdim::vs::{count_theta_case, VectorTermSpec, VsParams};
use pfdim::EngineConfig;

fn pfdim(args: &[&str]) -> Output {
    pfdim_with(args, None, &[])
}

fn pfdim_with(args: &[&str], stdin: Option<&str>, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pfdim"));
    cmd.args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
    for (k, v) in env {
        cmd.env(k, v);
    }
    let mut child = cmd.spawn().expect("spawn pfdim");
    if let Some(text) = stdin {
        child.stdin.take().unwrap().write_all(text.as_bytes()).unwrap();
    }
    drop(child.stdin.take());
    child.wait_with_output().unwrap()
}

fn json_out(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn ok(args: &[&str]) -> Value {
    let out = pfdim(args);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    json_out(&out)
}

fn tmp(name: &str, contents: &str) -> String {
    let dir = std::env::temp_dir().join(format!("pfdim-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn count_in_exported_structure() {
    let m = ok(&["family", "--name", "earlyexample", "--index", "3"]);
    let path = tmp("early3.json", &m.to_string());
    let v = ok(&["count", "--structure", &path, "--formula", "E(x,y)", "--fix", "y=10", "--count-vars", "x"]);
    assert_eq!(v, json!({ "count": "9" }));
}

#[test]
fn count_from_stdin_and_family() {
    let m = ok(&["family", "--name", "earlyexample", "--index", "3"]);
    let out = pfdim_with(
        &["count", "--structure", "-", "--formula", "E(x,y)", "--fix", "y=0"],
        Some(&m.to_string()),
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_out(&out), json!({ "count": "1" }));
    let v = ok(&["count", "--family", "earlyexample", "--index", "3", "--formula", "E(x,y)", "--fix", "y=class-3"]);
    assert_eq!(v, json!({ "count": "9" }));
    let v = ok(&["count", "--family", "earlyexample", "--index", "3", "--formula", "E(x,y)"]);
    assert_eq!(v, json!({ "count": "98" }));
}

#[test]
fn family_export_matches_library() {
    let v = ok(&["family", "--name", "convsupersimple", "--index", "2", "--out", "-"]);
    let p1 = v["relations"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["name"] == "P1")
        .unwrap();
    assert_eq!(p1["tuples"].as_array().unwrap().len(), 2);
    let m = FamilyHandle::named("convsupersimple").unwrap().generate(2).unwrap();
    assert_eq!(v, serde_json::to_value(structure_to_json(&m, u64::MAX).unwrap()).unwrap());
}

#[test]
fn family_list_names_every_family() {
    let v = ok(&["family", "--list"]);
    let names: Vec<&str> = v["families"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    for n in ["earlyexample", "stablenonattainability", "convsupersimple", "findelta", "rank2classes"] {
        assert!(names.contains(&n), "{n} missing from {names:?}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let out = pfdim(&["bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = pfdim(&["count", "--formula"]);
    assert_eq!(out.status.code(), Some(1));

    let out = pfdim(&["family", "--name", "nosuchfamily", "--index", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());

    let out = pfdim(&["count", "--family", "earlyexample", "--index", "3", "--formula", "E(x,"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_per_subcommand() {
    for sub in [
        "count", "family", "dim-compare", "chain", "spectrum", "abelian-count", "vs-count", "measure-kcap",
        "pairwise-check", "word-image",
    ] {
        let out = pfdim(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{sub}");
    }
}

#[test]
fn budget_from_environment() {
    let out = pfdim_with(
        &["count", "--family", "earlyexample", "--index", "6", "--formula", "E(x,y) & E(y,z)"],
        None,
        &[("PFDIM_BUDGET", "10")],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn workers_do_not_change_output() {
    let args = |w: &'static str| {
        vec!["--workers", w, "count", "--family", "earlyexample", "--index", "5", "--formula", "E(x,y) & !(x = y)"]
    };
    let one = pfdim(&args("1"));
    for w in ["2", "8"] {
        assert_eq!(pfdim(&args(w)).stdout, one.stdout);
    }
}

#[test]
fn dim_compare_matches_library() {
    let v = ok(&[
        "dim-compare", "--family", "stablenonattainability", "--indices", "8,16,32,64", "--x", "E(x,a)",
        "--x-select", "a=class-rank-1", "--y", "E(x,a)", "--y-select", "a=class-rank-2",
    ]);
    assert_eq!(v["verdict"]["classification"], "greater");

    let cfg = EngineConfig::default();
    let fam = FamilyHandle::named("stablenonattainability").unwrap();
    let sig = fam.model(8).unwrap().signature().clone();
    let f = parse_formula("E(x,a)", &sig).unwrap();
    let idx = [8, 16, 32, 64];
    let sel = |s: &str| vec![("a".to_string(), s.to_string())];
    let x = count_family(&f, &fam, &idx, &sel("class-rank-1"), &cfg).unwrap();
    let y = count_family(&f, &fam, &idx, &sel("class-rank-2"), &cfg).unwrap();
    let verdict = delta_compare(&x, &y, &Thresholds::default()).unwrap();
    assert_eq!(v, json!({ "x": x, "y": y, "verdict": verdict }));
}

#[test]
fn dim_compare_writes_csv() {
    let path = tmp("table.csv", "");
    ok(&[
        "dim-compare", "--family", "earlyexample", "--indices", "4,5,6,7", "--x", "E(x,y)", "--x-select",
        "y=class-2", "--y", "E(x,y)", "--y-select", "y=class-3", "--csv", &path,
    ]);
    let csv = std::fs::read_to_string(&path).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn chain_length() {
    let v = ok(&[
        "chain", "--family", "convsupersimple", "--indices", "8,16,32,64", "--step", "P1(x)", "--step", "P2(x)",
        "--step", "P3(x)", "--step", "P4(x)",
    ]);
    assert_eq!(v["length"], 4);
    assert_eq!(v["nested"], true);
    let v = ok(&["chain", "--family", "earlyexample", "--indices", "4,5,6,7", "--step", "E(x,y) @ y=class-3"]);
    assert_eq!(v["length"], 1);
}

#[test]
fn spectrum_matches_library() {
    let v = ok(&["spectrum", "--family", "findelta", "--indices", "4,6,8", "--formula", "E(x,y)", "--params", "y:S"]);
    assert_eq!(v["clusterCounts"], json!([4, 6, 8]));
    assert_eq!(v["unbounded"], true);
    let fam = FamilyHandle::named("findelta").unwrap();
    let sig = fam.model(4).unwrap().signature().clone();
    let f = parse_formula("E(x,y)", &sig).unwrap();
    let params = vec![("y".to_string(), "S".to_string())];
    let r = fmv_spectrum(&f, &fam, &[4, 6, 8], &params, Thresholds::default().gamma, &EngineConfig::default()).unwrap();
    assert_eq!(v, serde_json::to_value(&r).unwrap());
}

#[test]
fn abelian_count_matches_library() {
    let text = "div(2, x1 + y1) & !(x1 = 0)";
    let v = ok(&["abelian-count", "--formula", text]);
    let sym = symbolic_count(&parse_conjunction(text).unwrap(), &SymbolicConfig::default()).unwrap();
    assert_eq!(v, json!({ "symbolic": sym }));

    // G = (Z/8)^2, y = (1,2): x + y in 2G means x = (odd, even), 16 elements, none of them 0
    let v = ok(&["abelian-count", "--formula", text, "--p", "2", "--n", "3", "--m", "2", "--params", "1,2"]);
    assert_eq!(v["evaluation"]["count"], "16");
    assert_eq!(v["evaluation"]["exact"], "16");
    assert_eq!(v["evaluation"]["firing"].as_array().unwrap().len(), 1);
}

#[test]
fn abelian_random_checks_are_seeded() {
    let args = |seed: &'static str| {
        vec![
            "--seed", seed, "abelian-count", "--formula", "div(3^2, 2*x1 + y1 - y2) & !(x1 + y2 = 0)", "--p", "3", "--n",
            "2", "--m", "1", "--check", "20",
        ]
    };
    let a = pfdim(&args("7"));
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(pfdim(&args("7")).stdout, a.stdout);
    assert_ne!(pfdim(&args("8")).stdout, a.stdout);
    let v = json_out(&a);
    for row in v["checks"].as_array().unwrap() {
        assert_eq!(row["count"], row["exact"]);
    }
}

#[test]
fn vs_count_matches_library() {
    let spec = r#"{"q":3,"dim":3,"theta":{"shifted":[["y1"]],"fixed":[["1"]]},"params":{"vectors":[1],"scalars":[2]}}"#;
    let out = pfdim_with(&["vs-count", "--spec", "-", "--check"], Some(spec), &[]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_out(&out);
    assert_eq!(v["count"], "24");
    assert_eq!(v["bruteForce"], "24");

    let space = VectorSpace::new(3, 3).unwrap();
    let t: VectorTermSpec = serde_json::from_value(json!({"shifted": [["y1"]], "fixed": [["1"]]})).unwrap();
    let p = VsParams {
        vectors: vec![1],
        scalars: vec![2],
    };
    let mut expected = serde_json::to_value(count_theta_case(&space, &t, &p).unwrap()).unwrap();
    expected["bruteForce"] = json!("24");
    assert_eq!(v, expected);

    let coset = r#"{"q":2,"dim":3,"coset":{"exclude":[{"offset":["0"],"span":[["1","0"],["0","1"]]}]},"params":{"vectors":[1,2]}}"#;
    let out = pfdim_with(&["vs-count", "--spec", "-", "--check"], Some(coset), &[]);
    let v = json_out(&out);
    assert_eq!(v["kind"], "complement-of-span");
    assert_eq!(v["count"], "4");

    let out = pfdim_with(&["vs-count", "--spec", "-"], Some(r#"{"q":4,"dim":2}"#), &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn measure_kcap_matches_library() {
    let spec = MeasureSpec {
        weights: vec!["1/4".into(); 4],
        events: vec![vec![0, 1], vec![1, 2], vec![0, 2], vec![1, 3]],
    };
    let path = tmp("space.json", &serde_json::to_string(&spec).unwrap());
    let v = ok(&["--workers", "1", "measure-kcap", "--input", &path, "--k", "2"]);
    let (s, ev) = spec.build().unwrap();
    let opts = SearchOptions {
        workers: 1,
        ..SearchOptions::default()
    };
    let r = find_k_intersection(&s, &ev, 2, &opts).unwrap();
    assert_eq!(v["result"], serde_json::to_value(&r).unwrap());
    assert_eq!(v["epsilon"], "1/2");
    assert_eq!(v["result"]["result"], "found");
}

#[test]
fn generated_spaces_follow_the_seed() {
    let run = |seed: &'static str| pfdim(&["--seed", seed, "measure-kcap", "--generate", "10,12", "--k", "2"]);
    let a = run("1");
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(run("1").stdout, a.stdout);
    assert_ne!(run("2").stdout, a.stdout);
}

#[test]
fn pairwise_check_reports() {
    let v = ok(&["--seed", "4", "pairwise-check", "--generate", "12,9", "--eps", "1/3"]);
    assert_eq!(v["hypothesisHolds"], true);
    assert_eq!(v["result"]["result"], "ok");
    assert_eq!(v["result"]["n"], 9);

    let out = pfdim(&["--seed", "4", "pairwise-check", "--generate", "12,3", "--eps", "1/3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn word_images() {
    let v = ok(&["word-image", "--group", "A5", "--word", "x*x"]);
    assert_eq!(v["imageSize"], 45);
    assert_eq!(v["order"], 60);
    let v = ok(&["word-image", "--group", "S3", "--word", "[x,y]", "--triple", "[x,y];[x,y];[x,y]"]);
    assert_eq!(v["imageSize"], 3);
    assert_eq!(v["triple"]["result"]["covers"], false);
    let out = pfdim(&["word-image", "--group", "Q8", "--word", "x"]);
    assert_eq!(out.status.code(), Some(1));
}
