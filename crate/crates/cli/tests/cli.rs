use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3

[generate]
n_cases = 1500
seed = 42
missing_rate = 0.05

[generate.planted]
weights = [0.5, 0.35, 0.15]
recidivism_rates = [0.0, 1.5, 6.0]
divergence = 0.5
informative_fraction = 0.4

[generate.scoring]
noise = 0.6

[gridsearch]
objective = "police_protection"

[gridsearch.space.tree]
criterion = ["gini"]
splitter = ["best"]
max_depth = [5, "none"]

[gridsearch.space.knn]
k = [2, 5]

[gridsearch.space.nc]
metric = ["euclidean", "minkowski"]
shrink = [0.5, "none"]

[evaluate]
rules = ["cautious"]

[sweep]
model = "nc-shrink-5"
grid_size = 11
n_runs = 3
profile_runs = 5

[sensitivity]
thresholds = [2, 3]
"#;

fn ipvrisk(out: &Path, config: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ipvrisk"));
    cmd.args(args).arg("--out-dir").arg(out);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Path, config: Option<&Path>, args: &[&str]) -> String {
    let o = ipvrisk(out, config, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn fail(out: &Path, config: Option<&Path>, args: &[&str]) -> String {
    let o = ipvrisk(out, config, args);
    assert!(!o.status.success(), "{args:?} should fail");
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "diagnostic should be one line: {err}");
    assert!(err.starts_with("error: "), "{err}");
    err
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn data_rows(text: &str) -> usize {
    text.lines().filter(|l| !l.starts_with('#')).count() - 1
}

#[test]
fn pipeline_writes_outputs_and_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("out");
    ok(&out, Some(&cfg), &["generate"]);
    let grid = ok(&out, Some(&cfg), &["gridsearch"]);
    assert!(grid.contains("viogen"), "{grid}");
    ok(&out, Some(&cfg), &["sweep"]);
    let decide = ok(&out, Some(&cfg), &["decide", "--set", "decide.r0=1.0"]);
    assert!(decide.starts_with("mu0 = 1 "), "{decide}");

    // 2 tree + 2 knn + 4 nc + 4 rule systems
    assert_eq!(data_rows(&read(&out, "gridsearch.csv")), 12);
    assert_eq!(data_rows(&read(&out, "sweep-protection.csv")), 11);
    for tau in ["0.1", "0.5", "1", "5"] {
        assert_eq!(data_rows(&read(&out, &format!("sweep-resource-tau{tau}.csv"))), 11);
    }
    assert_eq!(data_rows(&read(&out, "profile-runs.csv")), 2 * 4 * 5);

    for cmd in ["generate", "gridsearch", "sweep", "decide"] {
        let manifest: toml::Table = toml::from_str(&read(&out, &format!("manifest-{cmd}.toml"))).unwrap();
        assert_eq!(manifest["command"].as_str(), Some(cmd));
        assert_eq!(manifest["seed"].as_integer(), Some(3));
        for name in manifest["outputs"].as_array().unwrap() {
            let first = read(&out, name.as_str().unwrap()).lines().next().unwrap().to_string();
            assert_eq!(first, format!("# manifest: manifest-{cmd}.toml"));
        }
    }
    let decide_manifest = read(&out, "manifest-decide.toml");
    assert!(decide_manifest.contains("sweep-resource-tau0.5.csv"));
    assert!(decide_manifest.contains("sha256"));
}

#[test]
fn sweep_defaults_emit_two_hundred_points() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    ok(out, None, &["generate", "--set", "generate.n_cases=900"]);
    let summary = ok(out, None, &["sweep", "--set", "sweep.profile_mu=[]"]);
    assert!(summary.contains("chosen by 10-fold cross-validation"), "{summary}");
    assert_eq!(data_rows(&read(out, "sweep-protection.csv")), 200);
    let manifest = read(out, "manifest-sweep.toml");
    assert!(manifest.contains("grid_size = 200"));
    assert!(manifest.contains("n_runs = 10"));
}

#[test]
fn identical_manifests_give_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, jobs) in [(&a, "1"), (&b, "8")] {
        ok(dir, Some(&cfg), &["generate"]);
        ok(dir, Some(&cfg), &["gridsearch", "--jobs", jobs]);
        ok(dir, Some(&cfg), &["sweep", "--jobs", jobs]);
    }
    for name in ["cases.csv", "gridsearch.csv", "gridsearch.txt", "sweep-protection.csv", "profile.csv"] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
}

#[test]
fn trained_model_round_trips_through_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("out");
    ok(&out, Some(&cfg), &["generate"]);
    ok(&out, Some(&cfg), &["train"]);
    let model: serde_json::Value = serde_json::from_str(&read(&out, "model.json")).unwrap();
    assert_eq!(model["manifest"], "manifest: manifest-train.toml");
    ok(&out, Some(&cfg), &["evaluate"]);
    ok(&out, Some(&cfg), &["sensitivity"]);

    let evaluated = read(&out, "evaluate.csv");
    let pp: f64 = evaluated
        .lines()
        .find(|l| l.starts_with("nc:metric=euclidean;shrink=0.1,police_protection,"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(evaluated.contains("viogen:rule=cautious,police_protection,"));
    // the sensitivity run refits the same model at threshold 3
    let at_three = read(&out, "sensitivity.csv")
        .lines()
        .find(|l| l.starts_with("3,"))
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .unwrap();
    assert_eq!(pp, at_three);
}

#[test]
fn failures_have_distinct_one_line_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();

    let missing = fail(out, None, &["gridsearch", "--set", "data.cases=\"nowhere.csv\""]);
    assert!(missing.contains("nowhere.csv"), "{missing}");

    let bad = out.join("bad.toml");
    fs::write(&bad, "[sweep]\ngrid_size = \"many\"\n").unwrap();
    let malformed = fail(out, Some(&bad), &["sweep"]);
    assert!(malformed.contains("invalid config"), "{malformed}");

    let unknown = out.join("unknown.toml");
    fs::write(&unknown, "[sweep]\ngridsize = 5\n").unwrap();
    assert!(fail(out, Some(&unknown), &["sweep"]).contains("invalid config"));

    ok(out, None, &["generate", "--set", "generate.n_cases=300"]);
    let cases = read(out, "cases.csv").replacen(",no,", ",maybe,", 1);
    fs::write(out.join("cases.csv"), cases).unwrap();
    let mismatch = fail(out, None, &["train"]);
    assert!(mismatch.contains("maybe"), "{mismatch}");

    let no_budget = fail(out, None, &["decide"]);
    assert!(no_budget.contains("decide.r0"), "{no_budget}");

    assert!(fail(out, None, &["train", "--jobs", "0"]).contains("--jobs"));
}
