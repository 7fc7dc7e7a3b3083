use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn tempaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempaug"))
        .args(args)
        .env_remove("TEMPAUG_DATA_ROOT")
        .output()
        .expect("spawn tempaug")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ionosphere() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/ionosphere.data")
        .display()
        .to_string()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train(config: &Path, out: &Path) -> Output {
    tempaug(&["train", "--config", s(config), "--out", s(out), "--quiet"])
}

fn short_ionosphere(dir: &Path) -> PathBuf {
    write(
        dir,
        "iono.toml",
        &format!(
            "preset = \"ionosphere\"\ndata = {:?}\nepochs = 3\nseed = 4\n",
            ionosphere()
        ),
    )
}

/// Header row then `n` rows of `width` features and a label drawn from `labels`.
fn generic_csv(n: usize, width: usize, labels: &[&str]) -> String {
    let mut text = String::new();
    for j in 0..width {
        let _ = write!(text, "x{j},");
    }
    text.push_str("label\n");
    for i in 0..n {
        let label = labels[i % labels.len()];
        let centre = (i % labels.len()) as f64;
        for j in 0..width {
            let _ = write!(text, "{},", centre + ((i * 7 + j * 3) % 11) as f64 * 0.05);
        }
        let _ = writeln!(text, "{label}");
    }
    text
}

fn mitbih_csv(n: usize, offset: usize) -> String {
    let mut text = String::new();
    for i in 0..n {
        let class = (i + offset) % 5;
        for t in 0..187 {
            let v = ((t as f64 * 0.1 * (class + 1) as f64).sin() + 1.0) / 2.0;
            let _ = write!(text, "{v:.4},");
        }
        let _ = writeln!(text, "{class}.0");
    }
    text
}

#[test]
fn train_writes_artifacts_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let config = short_ionosphere(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = train(&config, &a);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&train(&config, &b)), 0);
    for f in [
        "checkpoint.json",
        "trainlog.csv",
        "report_test.json",
        "report_test.txt",
    ] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let log = std::fs::read_to_string(a.join("trainlog.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let config = short_ionosphere(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&train(&config, &a)), 0);
    let o = tempaug(&[
        "train",
        "--config",
        s(&config),
        "--seed",
        "9",
        "--out",
        s(&b),
        "-q",
    ]);
    assert_eq!(code(&o), 0);
    assert_ne!(
        std::fs::read(a.join("checkpoint.json")).unwrap(),
        std::fs::read(b.join("checkpoint.json")).unwrap()
    );
}

#[test]
fn missing_data_exits_3_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let config = write(
        dir.path(),
        "run.toml",
        "preset = \"ionosphere\"\ndata = \"nowhere/iono.data\"\n",
    );
    let o = train(&config, &dir.path().join("out"));
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("nowhere/iono.data"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    for (name, body) in [
        (
            "typo.toml",
            format!(
                "preset = \"ionosphere\"\ndata = {:?}\nepochz = 3\n",
                ionosphere()
            ),
        ),
        (
            "zero.toml",
            format!(
                "preset = \"ionosphere\"\ndata = {:?}\nepochs = 0\n",
                ionosphere()
            ),
        ),
        (
            "ratio.toml",
            format!(
                "preset = \"ionosphere\"\ndata = {:?}\ntrain_ratio = 0.9\n",
                ionosphere()
            ),
        ),
        ("noformat.toml", "data = \"x.csv\"\n".to_string()),
    ] {
        let config = write(dir.path(), name, &body);
        assert_eq!(code(&train(&config, &out)), 2, "{name}");
    }
    assert_eq!(code(&train(&dir.path().join("absent.toml"), &out)), 2);
}

#[test]
fn divergence_exits_4() {
    let dir = TempDir::new().unwrap();
    let config = write(
        dir.path(),
        "run.toml",
        &format!(
            "preset = \"ionosphere\"\ndata = {:?}\nepochs = 5\nlr = 1e300\n",
            ionosphere()
        ),
    );
    let o = train(&config, &dir.path().join("out"));
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn eval_reproduces_the_training_report() {
    let dir = TempDir::new().unwrap();
    let config = short_ionosphere(dir.path());
    let run = dir.path().join("run");
    assert_eq!(code(&train(&config, &run)), 0);
    let ck = run.join("checkpoint.json");
    let ev = dir.path().join("eval");
    let o = tempaug(&["eval", "--checkpoint", s(&ck), "--out", s(&ev)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("Kappa Standard Error"));
    for f in ["report_test.json", "report_test.txt"] {
        assert_eq!(
            std::fs::read(run.join(f)).unwrap(),
            std::fs::read(ev.join(f)).unwrap()
        );
    }
    let o = tempaug(&[
        "eval",
        "--checkpoint",
        s(&ck),
        "--split",
        "val",
        "--out",
        s(&ev),
    ]);
    assert_eq!(code(&o), 0);
    assert!(ev.join("report_val.json").is_file());
    assert_ne!(
        std::fs::read(ev.join("report_val.json")).unwrap(),
        std::fs::read(ev.join("report_test.json")).unwrap()
    );
    let o = tempaug(&[
        "eval",
        "--checkpoint",
        s(&ck),
        "--split",
        "all",
        "--out",
        s(&ev),
    ]);
    assert_eq!(code(&o), 0);
    let all = std::fs::read_to_string(ev.join("report_all.json")).unwrap();
    assert!(all.contains("\"n\": 351"));
}

#[test]
fn eval_mismatches_exit_2() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "five.csv",
        &generic_csv(100, 6, &["a", "b", "c", "d", "e"]),
    );
    write(dir.path(), "two.csv", &generic_csv(40, 6, &["a", "b"]));
    write(
        dir.path(),
        "wide.csv",
        &generic_csv(100, 9, &["a", "b", "c", "d", "e"]),
    );
    let config = write(
        dir.path(),
        "run.toml",
        "format = \"generic\"\nlabel_col = \"label\"\ndata = \"five.csv\"\nepochs = 1\nconv_filters = 4\n",
    );
    let run = dir.path().join("run");
    let o = train(&config, &run);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ck = run.join("checkpoint.json");
    for data in ["two.csv", "wide.csv"] {
        let path = dir.path().join(data);
        let o = tempaug(&[
            "eval",
            "--checkpoint",
            s(&ck),
            "--data",
            s(&path),
            "--split",
            "all",
        ]);
        assert_eq!(code(&o), 2, "{data}: {}", stderr(&o));
    }
    let o = tempaug(&["eval", "--checkpoint", s(&dir.path().join("none.json"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn gradcheck_filter_and_failure() {
    let o = tempaug(&["gradcheck", "--module", "gru"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out
        .lines()
        .filter(|l| l.contains("max rel error"))
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.starts_with("gru")));

    let o = tempaug(&["gradcheck", "--module", "dense", "--corrupt"]);
    assert_eq!(code(&o), 5);
    assert!(
        stderr(&o).contains("gradient check failed for: dense"),
        "{}",
        stderr(&o)
    );

    assert_eq!(code(&tempaug(&["gradcheck", "--module", "attention"])), 2);
}

#[test]
fn report_summarises_a_run() {
    let dir = TempDir::new().unwrap();
    let config = short_ionosphere(dir.path());
    let run = dir.path().join("run");
    assert_eq!(code(&train(&config, &run)), 0);
    let o = tempaug(&["report", s(&run)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = std::fs::read_to_string(run.join("summary.txt")).unwrap();
    assert!(summary.starts_with("Epochs: 3\n"));
    for row in ["Kappa", "Kappa Standard Error", "95% CI"] {
        assert!(
            summary.lines().any(|l| l.trim_start().starts_with(row)),
            "{row}"
        );
    }
    let curves = std::fs::read_to_string(run.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 4);

    let elsewhere = dir.path().join("elsewhere");
    assert_eq!(
        code(&tempaug(&["report", s(&run), "--out", s(&elsewhere)])),
        0
    );
    assert!(elsewhere.join("curves.csv").is_file());
}

#[test]
fn report_on_empty_dir_exits_3() {
    let dir = TempDir::new().unwrap();
    let o = tempaug(&["report", s(dir.path())]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("trainlog.csv"));
}

#[test]
fn mitbih_train_and_test_files() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "mitbih_train.csv", &mitbih_csv(200, 0));
    write(dir.path(), "mitbih_test.csv", &mitbih_csv(60, 2));
    let config = write(
        dir.path(),
        "run.toml",
        "preset = \"mitbih\"\ndata = \"mitbih_train.csv\"\ntest_data = \"mitbih_test.csv\"\n\
         subsample = 100\ntest_subsample = 50\ntrain_ratio = 0.8\nval_ratio = 0.2\nepochs = 2\nconv_filters = 8\n",
    );
    let run = dir.path().join("run");
    let o = train(&config, &run);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = std::fs::read_to_string(run.join("report_test.json")).unwrap();
    assert!(report.contains("\"n\": 50"));
    assert!(report.contains("\"Q\""));
}

#[test]
fn data_root_env_resolves_relative_paths() {
    let root = TempDir::new().unwrap();
    std::fs::copy(ionosphere(), root.path().join("iono.data")).unwrap();
    let dir = TempDir::new().unwrap();
    let config = write(
        dir.path(),
        "run.toml",
        "preset = \"ionosphere\"\ndata = \"iono.data\"\nepochs = 1\n",
    );
    let o = Command::new(env!("CARGO_BIN_EXE_tempaug"))
        .args([
            "train",
            "--config",
            s(&config),
            "--out",
            s(&dir.path().join("out")),
            "-q",
        ])
        .env("TEMPAUG_DATA_ROOT", root.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn wav_directory_run() {
    let dir = TempDir::new().unwrap();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 8000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    for (class, hz) in [("angry", 300.0), ("calm", 1200.0)] {
        let d = dir.path().join("clips").join(class);
        std::fs::create_dir_all(&d).unwrap();
        for c in 0..10 {
            let mut w = hound::WavWriter::create(d.join(format!("{c}.wav")), spec).unwrap();
            for i in 0..100 {
                let v = (2.0 * std::f64::consts::PI * hz * i as f64 / 8000.0 + c as f64).sin();
                w.write_sample((v * 12000.0) as i16).unwrap();
            }
            w.finalize().unwrap();
        }
    }
    let config = write(
        dir.path(),
        "run.toml",
        "preset = \"tess\"\ndata = \"clips\"\ntarget_len = 64\nepochs = 2\nconv_filters = 8\n",
    );
    let run = dir.path().join("run");
    let o = train(&config, &run);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(run.join("report_test.txt")).unwrap();
    assert!(text.contains("angry") && text.contains("calm"));
}

#[test]
fn sequential_flag_gives_identical_results() {
    let dir = TempDir::new().unwrap();
    let config = short_ionosphere(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&train(&config, &a)), 0);
    let o = tempaug(&[
        "--sequential",
        "train",
        "--config",
        s(&config),
        "--out",
        s(&b),
        "-q",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read(a.join("checkpoint.json")).unwrap(),
        std::fs::read(b.join("checkpoint.json")).unwrap()
    );
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            tempaug_cli::config::RunConfig::load(&path, None).unwrap();
            seen += 1;
        }
    }
    assert_eq!(seen, 3);
}
