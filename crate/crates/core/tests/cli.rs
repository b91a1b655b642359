use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use omix::datagen::sample_mixture;
use omix::{fvs1, model_io};

const MODEL: &str = "omix-model v1
family mst
K 2
M 2
weights 0.45 0.55
component 0
mu -3.0 0.0
D 1.0 0.0 0.0 1.0
A 0.8 0.5
nu 5.0 9.0
component 1
mu 3.0 1.0
D 0.6 -0.8 0.8 0.6
A 0.6 1.1
nu 12.0 4.0
";

fn omix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omix")).args(args).output().expect("run omix")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(n: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let model = model_io::deserialize(MODEL).unwrap();
        fs::write(dir.path().join("ref.model"), MODEL).unwrap();
        let (data, _) = sample_mixture(&model, n, 1).unwrap();
        fvs1::write_dataset_file(dir.path().join("data.fvs1"), &data).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

fn fit(fx: &Fixture, out: &str, extra: &[&str]) -> Output {
    let input = fx.p("data.fvs1");
    let out = fx.p(out);
    let mut args = vec!["fit", "--input", &input, "--family", "mst", "--k", "2", "--buffer", "1024", "--quiet"];
    args.extend_from_slice(&["--out", &out]);
    args.extend_from_slice(extra);
    omix(&args)
}

#[test]
fn fit_is_deterministic_to_the_byte() {
    let fx = Fixture::new(8000);
    for name in ["a.model", "b.model"] {
        let o = fit(&fx, name, &["--seed", "5"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (fs::read(fx.path("a.model")).unwrap(), fs::read(fx.path("b.model")).unwrap());
    assert_eq!(a, b);
    assert!(model_io::deserialize(std::str::from_utf8(&a).unwrap()).is_ok());
}

#[test]
fn fit_writes_a_bench_report_and_progress() {
    let fx = Fixture::new(5000);
    let bench = fx.p("bench.json");
    let progress = fx.p("progress.txt");
    let o = fit(&fx, "m.model", &["--bench", &bench, "--progress", &progress]);
    assert_eq!(code(&o), 0);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&bench).unwrap()).unwrap();
    assert_eq!(json["passes_over_data"], 1);
    assert_eq!(json["samples"], 5000);
    assert!(json["samples_per_second"].as_f64().unwrap() > 0.0);
    let lines = fs::read_to_string(&progress).unwrap();
    assert_eq!(lines.lines().count() as u64, json["steps"].as_u64().unwrap());
    assert!(lines.lines().all(|l| l.split(' ').count() == 3));
}

#[test]
fn usage_problems_exit_with_two() {
    let fx = Fixture::new(2000);
    assert_eq!(code(&fit(&fx, "m.model", &["--k", "0"])), 2);
    let input = fx.p("data.fvs1");
    assert_eq!(code(&omix(&["fit", "--input", &input, "--family", "cauchy", "--k", "2", "--out", "x"])), 2);
    assert_eq!(code(&omix(&["fit"])), 2);
    assert_eq!(code(&omix(&["no-such-command"])), 2);

    let model = fx.p("ref.model");
    let out = fx.p("sim.fvs1");
    assert_eq!(code(&omix(&["simulate", "--model", &model, "--n", "0", "--out", &out])), 2);

    fs::write(fx.path("empty.csv"), "").unwrap();
    let empty = fx.p("empty.csv");
    let scores = fx.p("s.txt");
    assert_eq!(code(&omix(&["score", "--model", &model, "--input", &empty, "--tau", "1", "--out", &scores])), 2);

    fs::write(fx.path("three.csv"), "1,2,3\n4,5,6\n").unwrap();
    let three = fx.p("three.csv");
    assert_eq!(code(&omix(&["score", "--model", &model, "--input", &three, "--tau", "1", "--out", &scores])), 2);

    let missing = fx.p("missing.model");
    assert_eq!(code(&omix(&["score", "--model", &missing, "--input", &input, "--tau", "1", "--out", &scores])), 2);
}

#[test]
fn infinite_tau_labels_everything_abnormal() {
    let fx = Fixture::new(300);
    let (model, input, out) = (fx.p("ref.model"), fx.p("data.fvs1"), fx.p("s.txt"));
    let o = omix(&["score", "--model", &model, "--input", &input, "--tau", "inf", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 300);
    assert!(rows.iter().all(|l| l.ends_with(" 1")));
}

#[test]
fn calibrate_then_score_hits_the_rate() {
    let fx = Fixture::new(20_000);
    let model = fx.p("ref.model");
    let o = omix(&["calibrate", "--model", &model, "--alpha", "0.05", "--simulate", "20000", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let tau: f64 = text.lines().find_map(|l| l.strip_prefix("tau ")).unwrap().parse().unwrap();
    assert!(text.contains("mode simulated"));
    let (input, out) = (fx.p("data.fvs1"), fx.p("s.txt"));
    let tau_s = format!("{tau:?}");
    let o = omix(&["score", "--model", &model, "--input", &input, "--tau", &tau_s, "--out", &out]);
    assert_eq!(code(&o), 0);
    let flagged = fs::read_to_string(&out).unwrap().lines().filter(|l| l.ends_with(" 1")).count();
    let rate = flagged as f64 / 20_000.0;
    assert!((rate - 0.05).abs() < 0.006, "{rate}");
}

fn read_report(text: &str, key: &str) -> f64 {
    text.lines().find_map(|l| l.strip_prefix(key)).unwrap().trim().parse().unwrap()
}

#[test]
fn cohort_and_report_separate_strong_anomalies() {
    let fx = Fixture::new(10);
    let (model, out_dir) = (fx.p("ref.model"), fx.p("cohort"));
    let o = omix(&[
        "cohort", "--model", &model, "--per-group", "4", "--voxels", "2000", "--amplitudes", "0,8",
        "--fraction", "0.2", "--shift=-1,1", "--dims", "0,1", "--seed", "2", "--out-dir", &out_dir,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = Path::new(&out_dir).join("manifest.tsv");
    assert_eq!(fs::read_to_string(&manifest).unwrap().lines().filter(|l| !l.starts_with('#')).count(), 8);
    let manifest = manifest.to_string_lossy().into_owned();
    let o = omix(&["report", "--model", &model, "--manifest", &manifest, "--calibrate", &format!("0.02,{}", fx.p("data.fvs1"))]);
    // ten calibration rows are too few for alpha = 0.02
    assert_eq!(code(&o), 2);
    let o = omix(&["report", "--model", &model, "--manifest", &manifest, "--tau", "0.3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(read_report(&text, "gmean "), 1.0, "{text}");
    assert!(read_report(&text, "cutoff ") > 0.0);
}

#[test]
fn select_k_reports_a_choice() {
    let fx = Fixture::new(3000);
    let (input, curve) = (fx.p("data.fvs1"), fx.p("curve.txt"));
    let o = omix(&[
        "select-k", "--input", &input, "--family", "gaussian", "--k-max", "8", "--restarts", "1", "--curve", &curve,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let k: usize = text.lines().find_map(|l| l.strip_prefix("k_star ")).unwrap().parse().unwrap();
    assert!((1..=8).contains(&k));
    assert!(text.lines().any(|l| l.starts_with("kappa ")));
    assert!(omix::selection::SelectionCurve::from_text(&fs::read_to_string(&curve).unwrap()).is_ok());
    // a 4-point tail is impossible from 1..=3
    let o = omix(&["select-k", "--input", &input, "--family", "gaussian", "--k-max", "3", "--restarts", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_matches_the_library_sampler() {
    let fx = Fixture::new(10);
    let (model, out, labels) = (fx.p("ref.model"), fx.p("sim.fvs1"), fx.p("sim.labels"));
    let o = omix(&["simulate", "--model", &model, "--n", "50", "--seed", "7", "--out", &out, "--labels", &labels]);
    assert_eq!(code(&o), 0);
    let got = fvs1::read_dataset(fs::File::open(&out).unwrap()).unwrap();
    let (want, comps) = sample_mixture(&model_io::deserialize(MODEL).unwrap(), 50, 7).unwrap();
    let as_f32: Vec<f64> = want.as_slice().iter().map(|v| *v as f32 as f64).collect();
    assert_eq!(got.as_slice(), &as_f32[..]);
    let text = fs::read_to_string(&labels).unwrap();
    let read: Vec<usize> = text.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(read, comps);
}

#[test]
fn help_exits_zero_everywhere() {
    for cmd in ["fit", "score", "calibrate", "simulate", "cohort", "select-k", "report"] {
        let o = omix(&[cmd, "--help"]);
        assert_eq!(code(&o), 0, "{cmd}");
        assert!(stdout(&o).contains("Usage"), "{cmd}");
    }
    assert_eq!(code(&omix(&["--help"])), 0);
    assert_eq!(code(&omix(&["--version"])), 0);
}
