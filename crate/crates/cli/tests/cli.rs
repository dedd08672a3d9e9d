use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hbcombine"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_schema(name: &str, doc: &str) {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    let instance: Value = serde_json::from_str(doc).unwrap();
    let outcome = compiled
        .validate(&instance)
        .map_err(|errors| errors.map(|e| format!("{} at {}", e, e.instance_path)).collect::<Vec<_>>());
    if let Err(msgs) = outcome {
        panic!("{name}: {msgs:?}\n{doc}");
    }
}

const TOY: &str = "source_id,y,s\na,1.0,0.5\nb,2.0,1.0\nc,0.5,0.8\nd,1.5,2.0\ne,3.0,1.2\n";
const TOY_X: &str = "source_id,y,s,x1\na,1.0,0.5,0.1\nb,2.0,1.0,0.9\nc,0.5,0.8,-0.4\nd,1.5,2.0,0.3\ne,3.0,1.2,1.5\nf,2.2,0.7,0.8\n";

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn raw_estimate_is_the_mean() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", "source_id,y,s\na,1,1\nb,2,1\nc,6,1\n");
    let o = run(&["estimate", s(&data), "--method", "raw"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "raw");
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 3.0);
}

#[test]
fn all_methods_depend_on_covariates() {
    let dir = TempDir::new().unwrap();
    let plain = write(&dir, "p.csv", TOY);
    let cov = write(&dir, "c.csv", TOY_X);
    let o = run(&["--format", "json", "estimate", s(&plain)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_schema("estimate.schema.json", &stdout(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let methods: Vec<&str> = v["rows"].as_array().unwrap().iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["raw", "weighted", "trimmed"]);

    let o = run(&["--format", "json", "estimate", s(&cov), "--covariates"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_schema("estimate.schema.json", &stdout(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0]["method"], "lr");
    assert_eq!(rows[5]["method"], "twlr");

    let o = run(&["estimate", s(&plain), "--covariates"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_csv_names_the_line() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.csv", "source_id,y,s\na,1,1\nb,oops,1\n");
    let o = run(&["estimate", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let neg = write(&dir, "neg.csv", "source_id,y,s\nalpha,1,1\nbeta,2,-1\n");
    let o = run(&["estimate", s(&neg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("beta"), "{}", stderr(&o));
}

#[test]
fn standardized_weights() {
    let dir = TempDir::new().unwrap();
    let equal = write(&dir, "e.csv", "source_id,y,s\na,1,2\nb,2,2\nc,6,2\nd,0,2\n");
    let o = run(&["--format", "json", "weights", s(&equal), "--method", "weighted"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_schema("weights.schema.json", &stdout(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for r in v["rows"].as_array().unwrap() {
        assert!((r["lambda"].as_f64().unwrap() - 0.25).abs() < 1e-15);
    }

    let data = write(&dir, "t.csv", TOY);
    let o = run(&["weights", s(&data), "--method", "trimmed"]);
    let total: f64 = csv_rows(&stdout(&o)).iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-10);

    let o = run(&["weights", s(&data), "--method", "bbm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--draws"));
}

#[test]
fn default_fit_retains_900_draws() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", TOY);
    let draws = dir.path().join("draws.csv");
    let o = run(&["--out", s(&draws), "--format", "json", "fit-ubm", s(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_schema("fit.schema.json", &stdout(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["total_draws"], 900);
    assert_eq!(v["chains"], 3);
    let lines = std::fs::read_to_string(&draws).unwrap().lines().count();
    assert_eq!(lines, 901);
    assert!(dir.path().join("draws.json").exists());
}

#[test]
fn explicit_configuration_and_weights_from_draws() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", TOY);
    let draws = dir.path().join("u.csv");
    let o = run(&[
        "--out", s(&draws), "--format", "json", "fit-ubm", s(&data), "--chains", "2", "--iter", "1000", "--warmup",
        "500", "--thin", "1", "--prior", "tau_scale=1.0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["total_draws"], 1000);

    let o = run(&["weights", s(&data), "--method", "ubm", "--draws", s(&draws)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let total: f64 = csv_rows(&stdout(&o)).iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-10);

    let o = run(&["ppc", s(&data), "--draws", s(&draws)]);
    assert_eq!(o.status.code(), Some(2), "ubm draws are not valid ppc input");

    let o = run(&["--out", s(&draws), "fit-ubm", s(&data), "--prior", "tau_scale=-1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["--out", s(&draws), "fit-ubm", s(&data), "--prior", "nonsense=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["fit-ubm", s(&data)]);
    assert_eq!(o.status.code(), Some(2), "missing --out");
}

#[test]
fn bbm_fit_ppc_and_determinism() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", TOY);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |p: &Path| {
        vec!["--seed".to_string(), "11".into(), "--out".into(), s(p).into(), "--format".into(), "json".into(),
             "fit-bbm".into(), s(&data).into(), "--fast".into(), "--fix-sigma-s".into(), "empirical".into()]
    };
    let oa = bin().args(args(&a)).output().unwrap();
    let ob = bin().args(args(&b)).output().unwrap();
    assert!(oa.status.success(), "{}", stderr(&oa));
    assert!(ob.status.success(), "{}", stderr(&ob));
    assert_schema("fit.schema.json", &stdout(&oa));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.json")).unwrap(),
        std::fs::read(dir.path().join("b.json")).unwrap()
    );
    let header = std::fs::read_to_string(&a).unwrap().lines().next().unwrap().to_string();
    assert!(!header.contains("sigma_s"));

    let pairs = dir.path().join("pairs.csv");
    let o = run(&["--format", "json", "ppc", s(&data), "--draws", s(&a), "--pairs-out", s(&pairs)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_schema("ppc.schema.json", &stdout(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["n_draws"], 2000);
    assert_eq!(std::fs::read_to_string(&pairs).unwrap().lines().count(), 2001);
}

#[test]
fn impossible_likelihood_is_a_sampler_failure() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", "source_id,y,s\na,1e200,1\nb,-1e200,1\nc,0,1\n");
    let o = run(&["--out", s(&dir.path().join("x.csv")), "fit-ubm", s(&data), "--fast"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn simulate_from_scenario_file() {
    let dir = TempDir::new().unwrap();
    let file = write(
        &dir,
        "study.toml",
        "methods = [\"raw\", \"weighted\", \"trimmed\", \"lr\"]\n\
         [[scenario]]\npreset = \"population_mean\"\nrho1 = 0.5\nrho2 = 0.0\nn_reps = 4\n\
         [[scenario]]\npreset = \"regression\"\nrho1 = 0.0\nrho2 = 0.0\nn_reps = 3\n",
    );
    let records = dir.path().join("records.csv");
    let o = run(&["simulate", s(&file), "--records-out", s(&records)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("scenario,method,parameter,bias,mse,coverage,n_reps,failures\n"));
    assert_eq!(csv_rows(&text).len(), 3 + 3);
    assert_eq!(std::fs::read_to_string(&records).unwrap().lines().count(), 1 + 4 * 3 + 3 * 3);

    let o = run(&["--format", "json", "simulate", s(&file), "--reps", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_schema("simulate.schema.json", &stdout(&o));

    let bad = write(&dir, "bad.toml", "methods = []\n");
    assert_eq!(run(&["simulate", s(&bad)]).status.code(), Some(2));
}
