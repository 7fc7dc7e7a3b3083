use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use temporal_augmenter::gradcheck;
use temporal_augmenter::metrics::Report;
use temporal_augmenter::model::{Checkpoint, TemporalAugmenter};
use temporal_augmenter::optim::{EpochLog, FitObserver, TrainLog};
use temporal_augmenter::Error;

use crate::config::RunConfig;
use crate::exit;
use crate::pipeline::{
    load_dataset, load_partitions, report_for, train_run, RunMetadata, SplitName,
};
use crate::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAINLOG_FILE: &str = "trainlog.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

pub fn report_json_file(split: &str) -> String {
    format!("report_{split}.json")
}

pub fn report_text_file(split: &str) -> String {
    format!("report_{split}.txt")
}

/// Per-epoch progress on stderr.
pub struct Progress {
    pub quiet: bool,
    pub epochs: usize,
}

impl FitObserver for Progress {
    fn on_epoch(&mut self, e: &EpochLog) {
        if self.quiet {
            return;
        }
        let mut line = format!(
            "epoch {:>3}/{}  loss {:.4}  acc {:.4}",
            e.epoch, self.epochs, e.train_loss, e.train_acc
        );
        if let (Some(l), Some(a)) = (e.val_loss, e.val_acc) {
            let _ = write!(line, "  val_loss {l:.4}  val_acc {a:.4}");
        }
        eprintln!("{line}");
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::new(exit::FAILURE, format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::new(exit::FAILURE, format!("{}: {e}", path.display())))
}

fn write_report(out: &Path, split: &str, report: &Report) -> Result<(), CliError> {
    let json = report.to_json().map_err(|e| CliError::from_train(&e))?;
    write_file(&out.join(report_json_file(split)), &json)?;
    write_file(&out.join(report_text_file(split)), &report.to_text())
}

pub fn train(config: &Path, seed: Option<u64>, out: &Path, quiet: bool) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, seed).map_err(|e| CliError::from_train(&e))?;
    let mut progress = Progress {
        quiet,
        epochs: cfg.train.epochs,
    };
    let run = train_run(&cfg, &mut progress).map_err(|e| CliError::from_train(&e))?;
    create_dir(out)?;
    let ck = run.checkpoint().map_err(|e| CliError::from_train(&e))?;
    ck.save(&out.join(CHECKPOINT_FILE))
        .map_err(|e| CliError::new(exit::FAILURE, e.to_string()))?;
    let log = run
        .log
        .to_csv_string()
        .map_err(|e| CliError::from_train(&e))?;
    write_file(&out.join(TRAINLOG_FILE), &log)?;
    write_report(out, "test", &run.test_report)?;
    if !quiet {
        println!("{}", run.test_report.to_text());
    }
    Ok(())
}

/// Which rows of the data to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Part(SplitName),
    /// Every row of the file, no splitting.
    All,
}

impl EvalSplit {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalSplit::Part(s) => s.as_str(),
            EvalSplit::All => "all",
        }
    }
}

pub fn eval(
    checkpoint: &Path,
    data: Option<&Path>,
    split: EvalSplit,
    out: Option<&Path>,
) -> Result<Report, CliError> {
    let ck = Checkpoint::load(checkpoint).map_err(|e| CliError::from_eval(&e))?;
    let model = TemporalAugmenter::from_checkpoint(&ck).map_err(|e| CliError::from_eval(&e))?;
    let meta = RunMetadata::from_checkpoint(&ck).map_err(|e| CliError::from_eval(&e))?;
    let mut run = meta.run.clone();
    if let Some(d) = data {
        run.data = d.to_path_buf();
    }
    let ds = match split {
        EvalSplit::All => load_dataset(&run.data, &run.format),
        EvalSplit::Part(name) => load_partitions(&run).map(|p| p.get(name).clone()),
    }
    .map_err(|e| CliError::from_eval(&e))?;
    if ds.class_names() != meta.class_names.as_slice() {
        return Err(CliError::new(
            exit::CONFIG,
            format!(
                "checkpoint classes {:?} do not match data classes {:?}",
                meta.class_names,
                ds.class_names()
            ),
        ));
    }
    let ds = meta.scale(&ds).map_err(|e| CliError::from_eval(&e))?;
    let report =
        report_for(&model, &ds, run.train.batch_size).map_err(|e| CliError::from_eval(&e))?;
    if let Some(out) = out {
        create_dir(out)?;
        write_report(out, split.as_str(), &report)?;
    }
    Ok(report)
}

pub fn gradcheck(module: Option<&str>, seed: u64, corrupt: bool) -> Result<String, CliError> {
    let results = gradcheck::run(module, seed, corrupt)
        .map_err(|e| CliError::new(exit::CONFIG, e.to_string()))?;
    let width = results.iter().map(|r| r.component.len()).max().unwrap_or(0);
    let mut text = String::new();
    let mut failed = Vec::new();
    for r in &results {
        let status = if r.passed() { "ok" } else { "FAIL" };
        let _ = writeln!(
            text,
            "{:<width$}  max rel error {:.3e}  ({} entries)  {status}",
            r.component, r.max_rel_error, r.elements
        );
        if !r.passed() {
            failed.push(r.component.clone());
        }
    }
    let _ = writeln!(
        text,
        "tolerance {:e}, step {:e}",
        gradcheck::TOLERANCE,
        gradcheck::STEP
    );
    if failed.is_empty() {
        Ok(text)
    } else {
        Err(CliError::new(
            exit::GRADCHECK,
            format!("{text}gradient check failed for: {}", failed.join(", ")),
        ))
    }
}

fn require(path: PathBuf) -> Result<PathBuf, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::new(
            exit::DATA,
            format!("missing run artifact {}", path.display()),
        ))
    }
}

pub fn report(run_dir: &Path, out: Option<&Path>) -> Result<String, CliError> {
    let log_path = require(run_dir.join(TRAINLOG_FILE))?;
    let report_path = require(run_dir.join(report_json_file("test")))?;
    let log =
        TrainLog::read_csv(&log_path).map_err(|e| CliError::new(exit::DATA, e.to_string()))?;
    let text = std::fs::read_to_string(&report_path)
        .map_err(|e| CliError::new(exit::DATA, format!("{}: {e}", report_path.display())))?;
    let rep: Report = serde_json::from_str(&text)
        .map_err(|e| CliError::new(exit::DATA, format!("{}: {e}", report_path.display())))?;

    let mut curves = String::from("epoch,train_acc,val_acc,train_loss,val_loss\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for e in &log.epochs {
        let _ = writeln!(
            curves,
            "{},{},{},{},{}",
            e.epoch,
            e.train_acc,
            opt(e.val_acc),
            e.train_loss,
            opt(e.val_loss)
        );
    }

    let mut summary = format!("Epochs: {}\n", log.len());
    if let Some(last) = log.last() {
        let _ = writeln!(
            summary,
            "Final training accuracy {:.5}, loss {:.5}",
            last.train_acc, last.train_loss
        );
        if let (Some(a), Some(l)) = (last.val_acc, last.val_loss) {
            let _ = writeln!(summary, "Final validation accuracy {a:.5}, loss {l:.5}");
        }
    }
    let best = log
        .epochs
        .iter()
        .filter_map(|e| e.val_acc.map(|a| (e.epoch, a)))
        .fold(None, |best: Option<(usize, f64)>, (ep, a)| match best {
            Some((_, b)) if b >= a => best,
            _ => Some((ep, a)),
        });
    if let Some((ep, a)) = best {
        let _ = writeln!(summary, "Best validation accuracy {a:.5} at epoch {ep}");
    }
    let _ = writeln!(summary, "\nTest split\n");
    summary.push_str(&rep.to_text());

    let out = out.unwrap_or(run_dir);
    create_dir(out)?;
    write_file(&out.join(CURVES_FILE), &curves)?;
    write_file(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

pub fn print_stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
}

impl CliError {
    /// Exit code for errors raised while training.
    pub fn from_train(e: &Error) -> CliError {
        let code = match e {
            Error::Config(_) => exit::CONFIG,
            Error::Divergence { .. } => exit::DIVERGENCE,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Schema(_)
            | Error::Data(_)
            | Error::Wav(_)
            | Error::Csv(_) => exit::DATA,
            _ => exit::FAILURE,
        };
        CliError::new(code, e.to_string())
    }

    /// Exit code for errors raised while evaluating: layout and class
    /// mismatches between checkpoint and data are usage errors here.
    pub fn from_eval(e: &Error) -> CliError {
        let code = match e {
            Error::Schema(_) | Error::Config(_) => exit::CONFIG,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::Wav(_)
            | Error::Csv(_) => exit::DATA,
            Error::Checkpoint(_) | Error::Json(_) => exit::DATA,
            _ => exit::FAILURE,
        };
        CliError::new(code, e.to_string())
    }
}
