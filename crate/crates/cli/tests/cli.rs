use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dyadic_core::dp::{compute_energy, extract_classifier};
use dyadic_core::empirical::empirical_risk;
use dyadic_core::forest::build_forest;
use dyadic_core::io::{load_model, read_dataset_path, write_dataset_path, write_points, ModelMeta};
use dyadic_core::oracle::DistributionOracle;
use dyadic_core::select::split_halves;
use dyadic_core::{Dataset, Point};

fn dyadic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyadic")).args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

fn z1_csv(dir: &Path) -> PathBuf {
    let p = dir.join("z1.csv");
    fs::write(&p, "x1,y\n0.1,-1\n0.3,-1\n0.6,1\n0.9,1\n").unwrap();
    p
}

fn read_labels(path: &Path) -> Vec<i64> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.parse().unwrap()).collect()
}

#[test]
fn fit_writes_a_model_that_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let train = z1_csv(dir.path());
    let model = dir.path().join("model.json");
    let out = dyadic(&["fit", path_str(&train), "--algo", "plain", "--seed", "7", "--out", path_str(&model)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(field(&stdout(&out), "m_star"), load_model(&model).unwrap().1.m_star.to_string());

    let (c, meta) = load_model(&model).unwrap();
    assert_eq!(meta.seed, 7);
    let copy = dir.path().join("copy.json");
    dyadic_core::io::save_model(&copy, &c, meta).unwrap();
    assert_eq!(fs::read(&model).unwrap(), fs::read(&copy).unwrap());

    let grid: Vec<Point> = (0..1000).map(|i| Point::new(vec![i as f64 / 999.0]).unwrap()).collect();
    let points = dir.path().join("grid.csv");
    write_points(fs::File::create(&points).unwrap(), &grid).unwrap();
    let labels = dir.path().join("labels.csv");
    for m in [&model, &copy] {
        let out = dyadic(&["predict", path_str(m), path_str(&points), "--out", path_str(&labels)]);
        assert!(out.status.success());
        let expect: Vec<i64> = grid.iter().map(|p| c.predict(p).unwrap()).collect();
        assert_eq!(read_labels(&labels), expect);
    }
}

#[test]
fn fit_is_reproducible_and_prints_json_without_out() {
    let dir = tempfile::tempdir().unwrap();
    let z = DistributionOracle::signed_power(2, 1.0).unwrap().sample(300, 5).unwrap();
    let train = dir.path().join("train.csv");
    write_dataset_path(&train, &z).unwrap();
    for algo in ["plain", "decorated", "uniform"] {
        let a = dyadic(&["fit", path_str(&train), "--algo", algo, "--seed", "3"]);
        let b = dyadic(&["fit", path_str(&train), "--algo", algo, "--seed", "3"]);
        assert!(a.status.success(), "{algo}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout);
        assert!(stdout(&a).contains(&format!("\"algorithm\": \"{algo}\"")));
    }
}

#[test]
fn predictions_from_a_one_split_model() {
    let dir = tempfile::tempdir().unwrap();
    let z = Dataset::from_pairs([(vec![0.1], -1), (vec![0.3], -1), (vec![0.6], 1), (vec![0.9], 1)]).unwrap();
    let f = build_forest(&z, 16).unwrap();
    let c = extract_classifier(&f, &compute_energy(&f, 1), 1).unwrap();
    let model = dir.path().join("m1.json");
    dyadic_core::io::save_model(&model, &c, ModelMeta { m_star: 1, seed: 0, j_max: 16 }).unwrap();
    let points = dir.path().join("p.csv");
    fs::write(&points, "x1\n0.7\n0.2\n").unwrap();
    let out = dyadic(&["predict", path_str(&model), path_str(&points)]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "y\n1\n-1\n");
}

#[test]
fn replaying_the_first_half_reproduces_the_reported_risk() {
    let dir = tempfile::tempdir().unwrap();
    let z = DistributionOracle::signed_power(1, 0.5).unwrap().sample(201, 9).unwrap();
    let train = dir.path().join("train.csv");
    write_dataset_path(&train, &z).unwrap();
    let model = dir.path().join("model.json");
    let out = dyadic(&["fit", path_str(&train), "--seed", "11", "--out", path_str(&model)]);
    assert!(out.status.success());
    let reported: f64 = field(&stdout(&out), "first_half_risk").parse().unwrap();

    let halves = split_halves(&read_dataset_path(&train).unwrap(), 11).unwrap();
    let first = dir.path().join("first.csv");
    write_dataset_path(&first, &halves.first).unwrap();
    let labels = dir.path().join("labels.csv");
    assert!(dyadic(&["predict", path_str(&model), path_str(&first), "--out", path_str(&labels)]).status.success());
    let wrong = read_labels(&labels).iter().zip(halves.first.samples()).filter(|(p, s)| **p != s.y()).count();
    assert_eq!(wrong as f64 / halves.first.len() as f64, reported);
    assert_eq!(empirical_risk(&load_model(&model).unwrap().0, &halves.first), reported);

    let out = dyadic(&["eval", path_str(&model), path_str(&first), "--dist", "signed-power", "--delta", "0.5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(field(&text, "empirical_risk").parse::<f64>().unwrap(), reported);
    assert_eq!(field(&text, "method"), "exact");
    assert!(field(&text, "excess_risk").parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(dyadic(&["fit", path_str(&empty)]).status.code(), Some(2));
    let header_only = dir.path().join("header.csv");
    fs::write(&header_only, "x1,y\n").unwrap();
    assert_eq!(dyadic(&["fit", path_str(&header_only)]).status.code(), Some(2));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x1,y\n0.5,3\n").unwrap();
    assert_eq!(dyadic(&["fit", path_str(&bad)]).status.code(), Some(2));
    let missing = dir.path().join("missing.csv");
    assert_eq!(dyadic(&["fit", path_str(&missing)]).status.code(), Some(2));

    let train = z1_csv(dir.path());
    let out = dyadic(&["fit", path_str(&train), "--algo", "decorated", "--d", "4"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("d <= 3"));
    assert_eq!(dyadic(&["fit", path_str(&train), "--algo", "forest"]).status.code(), Some(1));
    assert_eq!(dyadic(&["fit"]).status.code(), Some(1));
    assert_eq!(dyadic(&["--help"]).status.code(), Some(0));
    assert_eq!(dyadic(&["fit", path_str(&train), "--d", "2"]).status.code(), Some(2));

    let model = dir.path().join("model.json");
    assert!(dyadic(&["fit", path_str(&train), "--out", path_str(&model)]).status.success());
    let pts = dir.path().join("pts.csv");
    fs::write(&pts, "x1,x2\n0.5,0.5\n").unwrap();
    assert_eq!(dyadic(&["predict", path_str(&model), path_str(&pts)]).status.code(), Some(2));
    let junk = dir.path().join("junk.json");
    fs::write(&junk, "{").unwrap();
    assert_eq!(dyadic(&["predict", path_str(&junk), path_str(&pts)]).status.code(), Some(2));
    assert_eq!(dyadic(&["rates", "--trials", "0"]).status.code(), Some(1));
}

#[test]
fn rates_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "dist = stripe\namp = 0.8\nngrid = 5..7\ntrials = 6\nseed = 42\n").unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4", "4"].iter().enumerate() {
        let out_path = dir.path().join(format!("rates{i}.csv"));
        let out = dyadic(&["rates", "--config", path_str(&cfg), "--threads", threads, "--out", path_str(&out_path)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("theoretical exponent: -1.0000"));
        assert!(dir.path().join(format!("rates{i}_timing.csv")).exists());
        outputs.push(fs::read(&out_path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
    assert_eq!(String::from_utf8(outputs[0].clone()).unwrap().lines().count(), 1 + 3 * 6);

    // flags override the file
    let out_path = dir.path().join("override.csv");
    let out = dyadic(&[
        "rates", "--config", path_str(&cfg), "--dist", "signed-power", "--ngrid", "32,64", "--trials", "2",
        "--out", path_str(&out_path),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("theoretical exponent: -0.5000"));
    assert_eq!(fs::read_to_string(&out_path).unwrap().lines().count(), 5);
}
