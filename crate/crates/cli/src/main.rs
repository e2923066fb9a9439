mod data;

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spd_motion::io::{gen_synthetic, load_model, save_model, write_sequence, SavedModel, SequenceReader, SyntheticSpec};
use spd_motion::metrics::{evaluate_streams, sweep, sweep_csv, MetricOptions, StreamResult, SweepCell};
use spd_motion::model::{train_classifier, ClassifierOptions, Preprocess, RecognitionModel};
use spd_motion::network::{NetworkConfig, TrainConfig};
use spd_motion::online::{
    read_event_log, train_detector, write_event, DetectorEvent, DetectorMode, DetectorModel, DetectorOptions, Engine, OnlineConfig, RunMode,
    Timing,
};
use spd_motion::skeleton::{default_partition, PartitionScheme};

use data::{load_dir, read_annotations, stream_paths, Stream};

/// One-line error: `error[<category>]: <message>`.
#[derive(Debug)]
pub struct CliError {
    category: &'static str,
    message: String,
}

impl CliError {
    pub fn new(category: &'static str, message: impl Into<String>) -> Self {
        CliError { category, message: message.into() }
    }

    pub fn io(path: &Path, e: io::Error) -> Self {
        CliError::new("io", format!("{}: {e}", path.display()))
    }

    pub fn at(path: &Path, e: spd_motion::Error) -> Self {
        CliError::new(e.category(), format!("{}: {e}", path.display()))
    }
}

impl From<spd_motion::Error> for CliError {
    fn from(e: spd_motion::Error) -> Self {
        CliError::new(e.category(), e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "spd-motion", version, about = "Skeleton motion recognition on SPD manifolds, offline and online")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate annotated synthetic streams into a directory.
    GenSynth(GenSynth),
    /// Train the segment classifier on the annotated motions of a dataset.
    TrainClassifier(TrainClassifier),
    /// Train the sliding-window state detector.
    TrainDetector(TrainDetector),
    /// Run the online detector and classifier over a stream, writing the event log.
    RunOnline(RunOnline),
    /// Score event logs against annotations.
    Evaluate(Evaluate),
    /// Run the online system over a grid of configurations and write a CSV table.
    Sweep(Sweep),
}

#[derive(Args)]
struct GenSynth {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Generator spec (JSON); the built-in four-class spec otherwise.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    streams: u64,
    /// Index of the first stream; streams with distinct indices are independent.
    #[arg(long, default_value_t = 0)]
    first_index: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    capture_rate: Option<f64>,
}

#[derive(Args)]
struct TrainFlags {
    /// Directory of annotated streams.
    #[arg(long)]
    data: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 400)]
    pairs: usize,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long, default_value_t = 8)]
    spdc_dim: usize,
    /// Joint partition (JSON list of index lists); the layout's default otherwise.
    #[arg(long)]
    partition: Option<PathBuf>,
}

#[derive(Args)]
struct TrainClassifier {
    #[command(flatten)]
    train: TrainFlags,
    /// Frames every segment is resampled to.
    #[arg(long, default_value_t = 24)]
    frames: usize,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModeArg {
    Binary,
    Multiclass,
}

impl From<ModeArg> for DetectorMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Binary => DetectorMode::Binary,
            ModeArg::Multiclass => DetectorMode::Multiclass,
        }
    }
}

#[derive(Args)]
struct TrainDetector {
    #[command(flatten)]
    train: TrainFlags,
    /// Window size in frames.
    #[arg(long)]
    ws: usize,
    #[arg(long, value_enum, default_value = "binary")]
    mode: ModeArg,
    /// Training windows drawn per stream.
    #[arg(long, default_value_t = 30)]
    windows: usize,
    /// Frames every window is resampled to.
    #[arg(long, default_value_t = 16)]
    frames: usize,
}

#[derive(Args)]
struct OnlineFlags {
    /// Window size in frames; must match the detector when given.
    #[arg(long)]
    ws: Option<usize>,
    /// Refresh rate r in frames.
    #[arg(long, default_value_t = 6)]
    refresh: usize,
    /// Verification tests te.
    #[arg(long, default_value_t = 3)]
    tests: usize,
    /// Minimum kept segment length in seconds.
    #[arg(long, default_value_t = 0.3)]
    min_segment: f64,
}

#[derive(Args)]
struct RunOnline {
    /// Classifier model file.
    #[arg(long)]
    model: PathBuf,
    /// Detector model file.
    #[arg(long)]
    detector: PathBuf,
    /// Sequence file to replay, or `-` to read a live frame stream from stdin.
    #[arg(long)]
    input: String,
    /// Event log destination; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    online: OnlineFlags,
    /// Classify each motion early, at the deadline.
    #[arg(long)]
    early: bool,
    /// Early-classification deadline T in seconds.
    #[arg(long, requires = "early", default_value_t = 1.0)]
    deadline: f64,
    /// Expected capture rate; the stream header must agree.
    #[arg(long)]
    capture_rate: Option<f64>,
    /// Simulated compute time per window in seconds, for budget checks in replay.
    #[arg(long)]
    latency: Option<f64>,
}

#[derive(Args)]
struct Evaluate {
    /// Event logs, paired in order with --annotations.
    #[arg(long, required = true, num_args = 1..)]
    events: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    annotations: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "binary")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Count a detection only when the predicted class also matches.
    #[arg(long)]
    same_class: bool,
    /// Report destination; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Sweep {
    /// Directory of annotated test streams.
    #[arg(long)]
    data: PathBuf,
    /// Classifier model file.
    #[arg(long)]
    model: PathBuf,
    /// Detector model files, one per window size.
    #[arg(long, required = true, num_args = 1..)]
    detector: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "6")]
    refresh: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "3")]
    tests: Vec<usize>,
    /// Deadlines in seconds; `none` runs without early classification.
    #[arg(long, value_delimiter = ',', default_value = "none", value_parser = parse_deadline)]
    deadline: Vec<Deadline>,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long, default_value_t = 0.3)]
    min_segment: f64,
    /// CSV destination; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy)]
struct Deadline(Option<f64>);

fn parse_deadline(s: &str) -> Result<Deadline, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(Deadline(None));
    }
    s.parse::<f64>().map(|v| Deadline(Some(v))).map_err(|e| format!("`{s}`: {e}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let body = text.split("\n\nUsage:").next().unwrap_or_default();
            let line: Vec<&str> = body.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with("For more information")).collect();
            eprintln!("error[usage]: {}", line.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::GenSynth(a) => gen_synth(a),
        Command::TrainClassifier(a) => train_classifier_cmd(a),
        Command::TrainDetector(a) => train_detector_cmd(a),
        Command::RunOnline(a) => run_online(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category, e.message.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> CliResult {
    let mut out = output(path)?;
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::io(path.unwrap_or(Path::new("<stdout>")), e))
}

fn gen_synth(a: GenSynth) -> CliResult {
    let mut spec = match &a.spec {
        Some(p) => SyntheticSpec::from_json(&fs::read_to_string(p).map_err(|e| CliError::io(p, e))?).map_err(|e| CliError::at(p, e))?,
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(cr) = a.capture_rate {
        spec.capture_rate = cr;
    }
    spec.validate()?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    write_text(Some(&a.out.join("spec.json")), &spec.to_json())?;
    for i in a.first_index..a.first_index + a.streams {
        let (seq, ann) = gen_synthetic(&spec, i)?;
        let (sp, ap) = stream_paths(&a.out, &format!("stream_{i:04}"));
        let mut w = create(&sp)?;
        write_sequence(&mut w, &seq)?;
        w.flush().map_err(|e| CliError::io(&sp, e))?;
        write_text(Some(&ap), &ann.to_json())?;
    }
    Ok(())
}

fn scheme_for(flags: &TrainFlags, streams: &[Stream]) -> CliResult<PartitionScheme> {
    let layout = streams[0].seq.layout();
    match &flags.partition {
        Some(p) => {
            let s = PartitionScheme::from_json(&fs::read_to_string(p).map_err(|e| CliError::io(p, e))?).map_err(|e| CliError::at(p, e))?;
            s.validate(layout.joint_count).map_err(|e| CliError::at(p, e))?;
            Ok(s)
        }
        None => Ok(default_partition(layout)?),
    }
}

fn classifier_options(flags: &TrainFlags, frames: usize) -> ClassifierOptions {
    ClassifierOptions {
        preprocess: Preprocess { frames, derivative: false },
        network: NetworkConfig { feature_dim: flags.feature_dim, spdc_dim: flags.spdc_dim, ..NetworkConfig::default() },
        train: TrainConfig { epochs: flags.epochs, seed: flags.seed, ..TrainConfig::default() },
        pairs: flags.pairs,
        ..ClassifierOptions::default()
    }
}

fn train_classifier_cmd(a: TrainClassifier) -> CliResult {
    let streams = load_dir(&a.train.data)?;
    let scheme = scheme_for(&a.train, &streams)?;
    let mut segs = Vec::new();
    let mut labels = Vec::new();
    for s in &streams {
        for (seg, c) in s.ann.extract_segments(&s.seq)? {
            segs.push(seg);
            labels.push(c);
        }
    }
    let opts = classifier_options(&a.train, a.frames);
    let (model, report) = train_classifier(&segs, &labels, streams[0].ann.classes.clone(), scheme, &opts)?;
    save_model(&a.train.out, &SavedModel::Classifier(model)).map_err(|e| CliError::at(&a.train.out, e))?;
    eprintln!("trained on {} segments; epoch losses {:?}", segs.len(), report.epoch_losses);
    Ok(())
}

fn train_detector_cmd(a: TrainDetector) -> CliResult {
    let streams = load_dir(&a.train.data)?;
    let scheme = scheme_for(&a.train, &streams)?;
    let seqs: Vec<_> = streams.iter().map(|s| s.seq.clone()).collect();
    let labels = streams.iter().map(|s| s.ann.frame_labels()).collect::<Result<Vec<_>, _>>()?;
    let opts = DetectorOptions {
        ws: a.ws,
        mode: a.mode.into(),
        windows_per_sequence: a.windows,
        classifier: classifier_options(&a.train, a.frames),
    };
    let (model, report) = train_detector(&seqs, &labels, &streams[0].ann.classes, scheme, &opts)?;
    save_model(&a.train.out, &SavedModel::Detector(model)).map_err(|e| CliError::at(&a.train.out, e))?;
    eprintln!("trained on {} windows; epoch losses {:?}", opts.windows_per_sequence * seqs.len(), report.epoch_losses);
    Ok(())
}

fn load_classifier(path: &Path) -> CliResult<RecognitionModel> {
    load_model(path).and_then(SavedModel::into_classifier).map_err(|e| CliError::at(path, e))
}

fn load_detector(path: &Path) -> CliResult<DetectorModel> {
    load_model(path).and_then(SavedModel::into_detector).map_err(|e| CliError::at(path, e))
}

/// Builds and validates the engine configuration before any model is loaded
/// when the window size is known up front.
fn online_config(flags: &OnlineFlags, ws: usize, cr: f64, deadline: Option<f64>) -> CliResult<OnlineConfig> {
    let mut cfg = OnlineConfig::new(ws, flags.refresh, cr, flags.tests);
    cfg.deadline = deadline;
    cfg.min_segment_seconds = flags.min_segment;
    cfg.validate()?;
    Ok(cfg)
}

fn run_online(a: RunOnline) -> CliResult {
    let live = a.input == "-";
    let mut reader: SequenceReader<Box<dyn BufRead>> = if live {
        SequenceReader::new(Box::new(io::stdin().lock()) as Box<dyn BufRead>)?
    } else {
        let p = Path::new(&a.input);
        let f = fs::File::open(p).map_err(|e| CliError::io(p, e))?;
        SequenceReader::new(Box::new(BufReader::new(f)) as Box<dyn BufRead>).map_err(|e| CliError::at(p, e))?
    };
    let cr = reader.header().capture_rate;
    if let Some(expected) = a.capture_rate {
        if expected != cr {
            return Err(CliError::new("argument", format!("stream capture rate {cr} differs from --capture-rate {expected}")));
        }
    }
    let deadline = a.early.then_some(a.deadline);
    if let Some(ws) = a.online.ws {
        online_config(&a.online, ws, cr, deadline)?;
    }
    let detector = load_detector(&a.detector)?;
    if a.online.ws.is_some_and(|ws| ws != detector.ws) {
        return Err(CliError::new("argument", format!("--ws {} does not match the detector's window size {}", a.online.ws.unwrap_or_default(), detector.ws)));
    }
    let cfg = online_config(&a.online, detector.ws, cr, deadline)?;
    let classifier = load_classifier(&a.model)?;

    let layout = reader.header().joint_layout()?;
    let timing = match a.latency {
        Some(s) => Timing::Constant(s),
        None if live => Timing::Measured,
        None => Timing::Constant(0.0),
    };
    let mut engine = Engine::new(cfg, layout, &detector, &classifier)?
        .with_timing(timing)
        .with_mode(if live { RunMode::Live } else { RunMode::Replay });
    let out_name = a.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let mut out = output(a.out.as_deref())?;
    let mut emit = |events: Vec<DetectorEvent>, flush: bool| -> CliResult {
        for e in &events {
            write_event(&mut out, e)?;
        }
        if flush && !events.is_empty() {
            out.flush().map_err(|e| CliError::io(&out_name, e))?;
        }
        Ok(())
    };
    while let Some(frame) = reader.next_frame().map_err(|e| CliError::new(e.category(), format!("{}: {e}", a.input)))? {
        emit(engine.push_frame(frame)?, live)?;
    }
    emit(engine.finish()?, true)?;
    Ok(())
}

fn evaluate(a: Evaluate) -> CliResult {
    if a.events.len() != a.annotations.len() {
        return Err(CliError::new("argument", format!("{} event logs but {} annotation files", a.events.len(), a.annotations.len())));
    }
    let mut results = Vec::new();
    for (ep, ap) in a.events.iter().zip(&a.annotations) {
        let f = fs::File::open(ep).map_err(|e| CliError::io(ep, e))?;
        let events = read_event_log(BufReader::new(f)).map_err(|e| CliError::at(ep, e))?;
        let truth = read_annotations(ap)?.ground_truth().map_err(|e| CliError::at(ap, e))?;
        results.push(StreamResult::from_events(&events, truth));
    }
    let opts = MetricOptions { iou_threshold: a.iou, detection_same_class: a.same_class };
    let mode: DetectorMode = a.mode.into();
    let report = evaluate_streams(&results, &opts, |l| mode.state_of(l))?;
    write_text(a.out.as_deref(), &(report.to_json() + "\n"))
}

fn sweep_cmd(a: Sweep) -> CliResult {
    let streams = load_dir(&a.data)?;
    let cr = streams[0].seq.capture_rate();
    let classifier = load_classifier(&a.model)?;
    let detectors = a.detector.iter().map(|p| load_detector(p)).collect::<CliResult<Vec<_>>>()?;
    for (i, d) in detectors.iter().enumerate() {
        if detectors[..i].iter().any(|o| o.ws == d.ws) {
            return Err(CliError::new("argument", format!("two detectors with window size {}", d.ws)));
        }
    }
    let mut cells = Vec::new();
    for d in &detectors {
        for &refresh in &a.refresh {
            for &tests in &a.tests {
                for &Deadline(deadline) in &a.deadline {
                    cells.push(SweepCell { ws: d.ws, refresh, tests, deadline });
                }
            }
        }
    }
    let opts = MetricOptions { iou_threshold: a.iou, ..MetricOptions::default() };
    let rows = sweep(&cells, |cell| {
        let detector = detectors.iter().find(|d| d.ws == cell.ws).expect("cell built from a detector");
        let mut cfg = OnlineConfig::new(cell.ws, cell.refresh, cr, cell.tests);
        cfg.deadline = cell.deadline;
        cfg.min_segment_seconds = a.min_segment;
        let mut results = Vec::with_capacity(streams.len());
        for s in &streams {
            let events = Engine::new(cfg, s.seq.layout().clone(), detector, &classifier)?.run(s.seq.frames().iter().cloned())?;
            results.push(StreamResult::from_events(&events, s.ann.ground_truth()?));
        }
        evaluate_streams(&results, &opts, |l| detector.mode.state_of(l))
    });
    write_text(a.out.as_deref(), &sweep_csv(&rows)?)
}
