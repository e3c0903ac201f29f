use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use assoclab::analytics::{analyze as analyze_corpus, AnalyzeOptions, TimeCostClass};
use assoclab::features::{fit_encoders, training_set};
use assoclab::forest::{train as train_forest, ForestError, ForestModel};
use assoclab::log_schema::{emit, ingest, ConnectionAttempt, Format};
use assoclab::selection::{
    evaluate_model, read_candidate_sets, select_ml, threshold_sweep, what_if_eval,
    write_candidate_sets, CandidateSet, ForestClassifier, SelectionError,
};
use assoclab::sim::{generate_candidate_sets, generate_corpus, TransitionTrace};
use serde::Serialize;

use crate::config::{Overrides, RunConfig};
use crate::CliError;

const SWEEP_THRESHOLDS: [f64; 11] = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95];

fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))
}

fn create_output(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(CliError::Usage(format!(
                "output directory {} does not exist",
                parent.display()
            )));
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("writing {}: {e}", path.display()))
}

/// `--format`, else the file extension, else JSONL.
fn pick_format(path: &Path, flag: Option<Format>) -> Format {
    flag.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
        _ => Format::Jsonl,
    })
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    match out {
        Some(path) => {
            let mut w = create_output(path)?;
            writeln!(w, "{text}")
                .and_then(|_| w.flush())
                .map_err(io_err(path))
        }
        None => to_stdout(|w| writeln!(w, "{text}")),
    }
}

/// A closed pipe downstream (`| head`) is not an error.
fn to_stdout(
    f: impl FnOnce(&mut io::StdoutLock<'static>) -> io::Result<()>,
) -> Result<(), CliError> {
    let mut w = io::stdout().lock();
    match f(&mut w).and_then(|_| w.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::Internal(e.to_string())),
        _ => Ok(()),
    }
}

fn read_corpus(path: &Path, format: Option<Format>) -> Result<Vec<ConnectionAttempt>, CliError> {
    let report = ingest(open_input(path)?, pick_format(path, format))
        .map_err(|e| CliError::Data(e.to_string()))?;
    if !report.rejected.is_empty() || !report.repaired.is_empty() {
        eprintln!(
            "{}: {} rows rejected, {} repaired ({} RSSI clamps)",
            path.display(),
            report.rejected.len(),
            report.repaired.len(),
            report.clamped_count()
        );
    }
    Ok(report.attempts)
}

fn read_sets(path: &Path) -> Result<Vec<CandidateSet>, CliError> {
    read_candidate_sets(open_input(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<ForestModel, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "model file {} does not exist",
            path.display()
        )));
    }
    ForestModel::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn selection_err(e: SelectionError) -> CliError {
    match e {
        SelectionError::Io(e) => CliError::Internal(e.to_string()),
        SelectionError::Forest(ForestError::Io(e)) => CliError::Internal(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

pub fn simulate(
    cfg_path: Option<&Path>,
    o: &Overrides,
    out: &Path,
    candidates: bool,
    format: Option<Format>,
    traces: Option<&Path>,
    report: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cfg_path, o)?;
    let format = pick_format(out, format);
    if candidates {
        if format != Format::Jsonl {
            return Err(CliError::Usage(
                "candidate sets are written as JSONL only".into(),
            ));
        }
        if traces.is_some() {
            return Err(CliError::Usage(
                "--traces applies to connection-log corpora only".into(),
            ));
        }
        let sets =
            generate_candidate_sets(&cfg.candidates).map_err(|e| CliError::Data(e.to_string()))?;
        let mut w = create_output(out)?;
        write_candidate_sets(&sets, &mut w)
            .and_then(|_| w.flush())
            .map_err(io_err(out))?;
        return Ok(());
    }

    let mut corpus_cfg = cfg.corpus;
    corpus_cfg.emit_traces = traces.is_some();
    let generated = generate_corpus(&corpus_cfg).map_err(|e| CliError::Data(e.to_string()))?;
    let mut w = create_output(out)?;
    emit(&generated.attempts, format, &mut w)
        .and_then(|_| w.flush())
        .map_err(io_err(out))?;
    if let (Some(path), Some(all)) = (traces, &generated.traces) {
        let mut w = create_output(path)?;
        write_jsonl(all, &mut w)
            .and_then(|_| w.flush())
            .map_err(io_err(path))?;
    }
    for warning in &generated.report.warnings {
        eprintln!("calibration: {warning}");
    }
    write_json(&generated.report, report)
}

fn write_jsonl<T: Serialize, W: Write>(items: &[T], w: &mut W) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn read_traces(path: &Path) -> Result<Vec<TransitionTrace>, CliError> {
    let mut traces = Vec::new();
    for (i, line) in open_input(path)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let trace = serde_json::from_str(&line)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        traces.push(trace);
    }
    Ok(traces)
}

pub fn analyze(
    input: &Path,
    out: &Path,
    format: Option<Format>,
    traces: Option<&Path>,
    class: Option<TimeCostClass>,
) -> Result<(), CliError> {
    let corpus = read_corpus(input, format)?;
    let traces = traces.map(read_traces).transpose()?;
    let bundle = analyze_corpus(&corpus, traces.as_deref(), &AnalyzeOptions { class })
        .map_err(|e| CliError::Data(e.to_string()))?;
    if out.exists() && !out.is_dir() {
        return Err(CliError::Usage(format!(
            "{} exists and is not a directory",
            out.display()
        )));
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    bundle.write_dir(out).map_err(io_err(out))
}

#[derive(Serialize)]
struct TrainOutput {
    model: String,
    n_trees: usize,
    n: u64,
    n_fast: u64,
    n_slow: u64,
    oob_accuracy: Option<f64>,
    max_depth: usize,
}

pub fn train(
    cfg_path: Option<&Path>,
    o: &Overrides,
    input: &Path,
    out: &Path,
    candidates: bool,
    format: Option<Format>,
) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cfg_path, o)?;
    let model = if candidates {
        let sets = read_sets(input)?;
        what_if_eval(&sets, &cfg.eval).map_err(selection_err)?.1
    } else {
        let corpus = read_corpus(input, format)?;
        let (enc, _) = fit_encoders(&corpus, cfg.eval.encoder_floor);
        let ts = training_set(&corpus, &enc, cfg.eval.threshold_ms);
        train_forest(&ts.x, &ts.y, enc, &cfg.eval.forest)
            .map_err(|e| CliError::Data(e.to_string()))?
    };
    create_output(out)?;
    model
        .save(out)
        .map_err(|e| CliError::Internal(format!("writing {}: {e}", out.display())))?;
    write_json(
        &TrainOutput {
            model: out.display().to_string(),
            n_trees: model.trees.len(),
            n: model.summary.n,
            n_fast: model.summary.n_fast,
            n_slow: model.summary.n_slow,
            oob_accuracy: model.oob_accuracy,
            max_depth: model.max_depth(),
        },
        None,
    )
}

pub struct EvalArgs<'a> {
    pub input: &'a Path,
    pub model: Option<&'a Path>,
    pub out: Option<&'a Path>,
    pub save_model: Option<&'a Path>,
    pub sweep: Option<&'a Path>,
    pub decision_threshold: Option<f64>,
}

pub fn eval(cfg_path: Option<&Path>, o: &Overrides, args: EvalArgs<'_>) -> Result<(), CliError> {
    let mut cfg = RunConfig::resolve(cfg_path, o)?;
    if let Some(t) = args.decision_threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(CliError::Usage(format!(
                "--decision-threshold {t} outside [0, 1]"
            )));
        }
        cfg.eval.decision_threshold = t;
    }
    let sets = read_sets(args.input)?;
    let (report, model) = match args.model {
        Some(path) => {
            let model = load_model(path)?;
            (
                evaluate_model(&sets, &model, &cfg.eval).map_err(selection_err)?,
                model,
            )
        }
        None => what_if_eval(&sets, &cfg.eval).map_err(selection_err)?,
    };
    if let Some(path) = args.save_model {
        create_output(path)?;
        model
            .save(path)
            .map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))?;
    }
    if let Some(path) = args.sweep {
        let points =
            threshold_sweep(&sets, &model, &cfg.eval, &SWEEP_THRESHOLDS).map_err(selection_err)?;
        write_json(&points, Some(path))?;
    }
    write_json(&report, args.out)
}

pub fn select(
    model: &Path,
    input: &Path,
    out: Option<&Path>,
    decision_threshold: f64,
) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&decision_threshold) {
        return Err(CliError::Usage(format!(
            "--decision-threshold {decision_threshold} outside [0, 1]"
        )));
    }
    let model = load_model(model)?;
    let sets = read_sets(input)?;
    let clf = ForestClassifier {
        model: &model,
        threshold: decision_threshold,
    };
    let decisions: Vec<_> = sets.iter().map(|s| select_ml(&clf, s)).collect();
    match out {
        Some(path) => {
            let mut w = create_output(path)?;
            write_jsonl(&decisions, &mut w)
                .and_then(|_| w.flush())
                .map_err(io_err(path))
        }
        None => to_stdout(|w| write_jsonl(&decisions, w)),
    }
}

pub fn config_default(out: Option<&Path>) -> Result<(), CliError> {
    write_json(&RunConfig::default(), out)
}

pub fn config_check(cfg_path: Option<&Path>, o: &Overrides) -> Result<(), CliError> {
    let Some(path) = cfg_path else {
        return Err(CliError::Usage("config check needs --config".into()));
    };
    let cfg = RunConfig::resolve(Some(path), o)?;
    cfg.corpus
        .validate()
        .map_err(|e| CliError::Data(format!("corpus: {e}")))?;
    cfg.candidates
        .validate()
        .map_err(|e| CliError::Data(format!("candidates: {e}")))?;
    cfg.eval
        .forest
        .validate()
        .map_err(|e| CliError::Data(format!("eval.forest: {e}")))?;
    to_stdout(|w| writeln!(w, "{}: ok", path.display()))
}
