//! `prosody`: batch tools and the session server.
//!
//! Exit codes: 0 success, 2 input error, 3 rejected edit, 4 synthesis error.

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use prosody_core::analysis::{
    aggregate_table, distance_vs_similarity, edit_distribution, effort_vs_quality, parse_embeddings, parse_ratings,
    AnalysisError, RegressionFit, BIN_WIDTH, HISTOGRAM_MAX,
};
use prosody_core::engine::{parse_edit_script, EditState};
use prosody_core::session::{CorpusExport, ExportFilter, SessionStore, SystemClock};
use prosody_core::stats::{
    compute_stats, parse_stats, serialize_stats, StatsOptions, DEFAULT_MAX_DURATION, DEFAULT_MIN_DURATION,
};
use prosody_core::synth::{encode_wav, SynthBackend, Synthesizer, DEFAULT_SAMPLE_RATE};
use prosody_core::track::{parse_track, serialize_track, UtteranceTrack, TRACK_EXTENSION};
use prosody_core::{Confidence, CorpusStats};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "prosody",
    version,
    about = "Word-level prosody editing: corpus stats, batch edits, synthesis, sessions, analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute corpus statistics from a directory of track files.
    Stats(StatsArgs),
    /// Apply an edit script to a track.
    Apply(ApplyArgs),
    /// Render a track to a WAV file.
    Synth(SynthArgs),
    /// Run the editing session service.
    Serve(ServeArgs),
    /// Aggregate an exported corpus with optional ratings and embeddings.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct StatsArgs {
    /// Directory containing `*.track.json` files.
    track_dir: PathBuf,
    #[arg(long, env = "PROSODY_OUT")]
    out: PathBuf,
    /// Tracks shorter than this many seconds are ignored.
    #[arg(long, env = "PROSODY_MIN_DUR", default_value_t = DEFAULT_MIN_DURATION)]
    min_dur: f64,
    /// Tracks longer than this many seconds are ignored.
    #[arg(long, env = "PROSODY_MAX_DUR", default_value_t = DEFAULT_MAX_DURATION)]
    max_dur: f64,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long, env = "PROSODY_TRACK")]
    track: PathBuf,
    #[arg(long, env = "PROSODY_EDITS")]
    edits: PathBuf,
    #[arg(long, env = "PROSODY_STATS")]
    stats: PathBuf,
    #[arg(long, env = "PROSODY_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, env = "PROSODY_TRACK")]
    track: PathBuf,
    #[arg(long, env = "PROSODY_OUT")]
    out: PathBuf,
    /// `mock` or `remote:http://host:port`.
    #[arg(long, env = "PROSODY_BACKEND", default_value = "mock")]
    backend: SynthBackend,
    #[arg(long, env = "PROSODY_SAMPLE_RATE", default_value_t = DEFAULT_SAMPLE_RATE)]
    sample_rate: u32,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "PROSODY_STATS")]
    stats: PathBuf,
    #[arg(long, env = "PROSODY_BACKEND", default_value = "mock")]
    backend: SynthBackend,
    #[arg(long, env = "PROSODY_SAMPLE_RATE", default_value_t = DEFAULT_SAMPLE_RATE)]
    sample_rate: u32,
    /// Journal directory; sessions are kept in memory only when omitted.
    #[arg(long, env = "PROSODY_JOURNAL")]
    journal: Option<PathBuf>,
    #[arg(long, env = "PROSODY_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Corpus export as produced by `GET /export`.
    #[arg(long, env = "PROSODY_EXPORT")]
    export: PathBuf,
    /// Line-delimited listener ratings.
    #[arg(long, env = "PROSODY_RATINGS")]
    ratings: Option<PathBuf>,
    /// Line-delimited embedding pairs.
    #[arg(long, env = "PROSODY_EMBEDDINGS")]
    embeddings: Option<PathBuf>,
    #[arg(long, env = "PROSODY_OUT")]
    out: PathBuf,
    /// Drop export records whose edited track equals the baseline.
    #[arg(long, env = "PROSODY_MODIFIED_ONLY")]
    modified_only: bool,
    #[arg(long, env = "PROSODY_CONFIDENCE")]
    confidence: Option<Confidence>,
    /// Points at which each regression band is sampled.
    #[arg(long, env = "PROSODY_BAND_POINTS", default_value_t = 21)]
    band_points: usize,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Edit(String),
    Synthesis(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Edit(_) => 3,
            CliError::Synthesis(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Edit(m) | CliError::Synthesis(m) => m,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn input<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Input(format!("{context}: {e}"))
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(input(path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(input(path.display()))
}

fn load_track(path: &Path) -> CliResult<UtteranceTrack> {
    parse_track(&read(path)?).map_err(input(path.display()))
}

fn load_stats(path: &Path) -> CliResult<CorpusStats> {
    parse_stats(&read(path)?).map_err(input(path.display()))
}

fn cmd_stats(args: StatsArgs) -> CliResult {
    let dir = fs::read_dir(&args.track_dir).map_err(input(args.track_dir.display()))?;
    let mut paths: Vec<PathBuf> = dir
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_str().is_some_and(|s| s.ends_with(TRACK_EXTENSION)))
        .collect();
    paths.sort();
    let tracks = paths.iter().map(|p| load_track(p)).collect::<CliResult<Vec<_>>>()?;
    let options = StatsOptions { min_duration: args.min_dur, max_duration: args.max_dur, ..StatsOptions::default() };
    let stats = compute_stats(&tracks, &options).map_err(|e| CliError::Input(e.to_string()))?;
    write(&args.out, &serialize_stats(&stats))?;
    eprintln!("{} tracks read; f0 n={} energy n={}", tracks.len(), stats.f0.count, stats.energy.count);
    Ok(())
}

fn cmd_apply(args: ApplyArgs) -> CliResult {
    let track = load_track(&args.track)?;
    let stats = load_stats(&args.stats)?;
    let edits = parse_edit_script(&read(&args.edits)?).map_err(input(args.edits.display()))?;
    let mut state = EditState::new(track, &stats).map_err(input(args.track.display()))?;
    for (index, edit) in edits.iter().enumerate() {
        // Range errors already name the feasible interval.
        state.apply(edit).map_err(|e| CliError::Edit(format!("edit {index}: {e}")))?;
    }
    write(&args.out, &serialize_track(&state.render()))
}

fn cmd_synth(args: SynthArgs) -> CliResult {
    let track = load_track(&args.track)?;
    let buffer = Synthesizer::new(args.backend, args.sample_rate)
        .synthesize(&track)
        .map_err(|e| CliError::Synthesis(e.to_string()))?;
    write(&args.out, &encode_wav(&buffer))
}

fn cmd_serve(args: ServeArgs) -> CliResult {
    let stats = load_stats(&args.stats)?;
    let clock = Arc::new(SystemClock);
    let store = match &args.journal {
        Some(dir) => SessionStore::open(dir, stats, clock).map_err(input(dir.display()))?,
        None => SessionStore::in_memory(stats, clock),
    };
    let state = prosody_server::AppState::new(store, Synthesizer::new(args.backend, args.sample_rate));
    let runtime = tokio::runtime::Runtime::new().map_err(input("runtime"))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.listen).await.map_err(input(args.listen))?;
        let addr = listener.local_addr().map_err(input(args.listen))?;
        println!("listening on {addr}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        prosody_server::serve(listener, prosody_server::router(state), shutdown).await.map_err(input("server"))
    })
}

fn regression_json(fit: Result<RegressionFit, AnalysisError>, points: usize) -> Value {
    match fit {
        Ok(fit) => json!({ "fit": fit, "band": fit.band_samples(points) }),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> CliResult {
    let export: CorpusExport = serde_json::from_slice(&read(&args.export)?).map_err(input(args.export.display()))?;
    let filter = ExportFilter { modified_only: args.modified_only, confidence: args.confidence };
    let records: Vec<_> = export.records.into_iter().filter(|r| filter.admits(r)).collect();

    let mut bundle = BTreeMap::new();
    bundle.insert(
        "metadata",
        json!({
            "records": records.len(),
            "filter": filter,
            "edit_distribution": format!(
                "edited/baseline ratio per phone and feature, {BIN_WIDTH} bins over [0, {HISTOGRAM_MAX}], \
                 outliers in edge bins, unchanged values and voiceless f0 omitted"
            ),
            "std": "sample standard deviation (n-1); n=1 reports 0 with single=true",
            "mushra": "raw scores, not normalized per rater",
            "band": "95% confidence band of the fitted mean",
        }),
    );
    bundle.insert("edit_distribution", json!(edit_distribution(&records)));

    if let Some(path) = &args.ratings {
        let text = String::from_utf8(read(path)?).map_err(input(path.display()))?;
        let ratings = parse_ratings(&text).map_err(input(path.display()))?;
        bundle.insert(
            "table",
            match aggregate_table(&ratings) {
                Ok(table) => json!(table),
                Err(e) => json!({ "error": e.to_string() }),
            },
        );
        let effort: BTreeMap<_, _> = effort_vs_quality(&records, &ratings)
            .into_iter()
            .map(|(k, fit)| (k, regression_json(fit, args.band_points)))
            .collect();
        bundle.insert("effort_vs_quality", json!(effort));
    }
    if let Some(path) = &args.embeddings {
        let text = String::from_utf8(read(path)?).map_err(input(path.display()))?;
        let pairs = parse_embeddings(&text).map_err(input(path.display()))?;
        bundle.insert("distance_vs_similarity", regression_json(distance_vs_similarity(&pairs), args.band_points));
    }
    let mut out = serde_json::to_vec_pretty(&bundle).expect("bundle serializes");
    out.push(b'\n');
    write(&args.out, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Serve(_) = cli.command {
        tracing_subscriber::fmt()
            .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
            .with_writer(std::io::stderr)
            .init();
    }
    let result = match cli.command {
        Command::Stats(a) => cmd_stats(a),
        Command::Apply(a) => cmd_apply(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Analyze(a) => cmd_analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
