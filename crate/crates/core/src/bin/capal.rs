//! Command-line surface: score candidate dumps, select query batches, run
//! simulated or replayed active-learning loops, evaluate caption files, and
//! merge run reports into learning curves.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use capal_core::acquisition::rank_and_select;
use capal_core::config::{AcquisitionKind, RunConfig};
use capal_core::embedder::{CaptionEmbedder, HashingEmbedder};
use capal_core::error::CoreError;
use capal_core::generator::{build_world, ReplayGenerator, SyntheticConfig, SyntheticGenerator};
use capal_core::io;
use capal_core::runner::{self, ActiveLoop, SelectionRecord};
use capal_core::types::{tokenize, VideoExample};

#[derive(Parser)]
#[command(
    name = "capal",
    version,
    about = "Active learning for caption-generation models"
)]
struct Cli {
    /// JSON config file mirroring the run-config fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed override (wins over the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the scoring sweep (results are identical for any
    /// job count).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every pool video from a candidate dump.
    Score(ScoreArgs),
    /// Pick the top-budget videos from a score file.
    Select(SelectArgs),
    /// Run the full query loop (synthetic world or replay dump).
    Simulate(SimulateArgs),
    /// Score hypothesis captions against references.
    Evaluate(EvaluateArgs),
    /// Merge run directories into one learning-curve CSV.
    Report(ReportArgs),
    /// Validate a config and/or data files.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    /// Externally computed caption embeddings; the built-in hashing embedder
    /// is used when absent.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    acquisition: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    /// Score JSONL produced by `score`.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    budget: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Pool JSONL; omit to simulate the built-in synthetic world.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Candidate dump for replay runs (required with --pool).
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Held-out evaluation pool JSONL.
    #[arg(long)]
    eval: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    acquisition: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from the state file in --out.
    #[arg(long)]
    resume: bool,
    /// Stop after this many query iterations (for checkpoint testing).
    #[arg(long)]
    stop_after: Option<u32>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Hypothesis JSONL: {"video_id", "caption"} per line.
    #[arg(long)]
    hypotheses: PathBuf,
    /// Reference pool JSONL (ids and references).
    #[arg(long)]
    eval: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories written by `simulate`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    eval: Option<PathBuf>,
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_CAPABILITY: u8 = 3;

fn exit_code_for(err: &CoreError) -> u8 {
    match err {
        CoreError::InvalidConfig(_) => EXIT_USAGE,
        CoreError::CapabilityMissing(_) => EXIT_CAPABILITY,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap's help/version output is a success, not a usage error.
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Load the config file (if any), then apply flag overrides.
fn effective_config(
    config: Option<&Path>,
    seed: Option<u64>,
    acquisition: Option<&str>,
) -> Result<RunConfig, CoreError> {
    let kind = acquisition.map(AcquisitionKind::parse).transpose()?;
    let mut cfg = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| CoreError::InvalidConfig(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::defaults_for(kind.unwrap_or(AcquisitionKind::Se)),
    };
    if let Some(kind) = kind {
        cfg.acquisition = kind;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_embedder(path: Option<&Path>) -> Result<Box<dyn CaptionEmbedder>, CoreError> {
    Ok(match path {
        Some(path) => Box::new(io::read_embeddings(path)?),
        None => Box::new(HashingEmbedder),
    })
}

fn ensure_out_dir(path: &Path) -> Result<(), CoreError> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

fn write_effective_config(dir: &Path, cfg: &RunConfig) -> Result<(), CoreError> {
    let json = serde_json::to_string_pretty(cfg).expect("config serializes");
    std::fs::write(dir.join("effective_config.json"), json + "\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CoreError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CoreError::InvalidConfig("jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CoreError::InvalidConfig(e.to_string()))?;
    }
    let config = cli.config.as_deref();
    let seed = cli.seed;
    match cli.command {
        Command::Score(args) => score(args, config, seed),
        Command::Select(args) => select(args),
        Command::Simulate(args) => simulate(args, config, seed),
        Command::Evaluate(args) => evaluate(args),
        Command::Report(args) => report(args),
        Command::Validate(args) => validate(args, config, seed),
    }
}

fn score(args: ScoreArgs, config: Option<&Path>, seed: Option<u64>) -> Result<(), CoreError> {
    let cfg = effective_config(config, seed, args.acquisition.as_deref())?;
    let pool = io::read_pool(&args.pool)?;
    let dump = io::read_dump(&args.candidates)?;
    let embedder = load_embedder(args.embeddings.as_deref())?;
    let generator = ReplayGenerator::new(dump);

    ensure_out_dir(&args.out)?;
    write_effective_config(&args.out, &cfg)?;
    let scores = runner::score_videos(&cfg, &pool, &[], &generator, embedder.as_ref(), cfg.seed)?;
    let path = args.out.join("scores.jsonl");
    io::write_scores(&path, &scores)?;
    eprintln!("wrote {} scores to {}", scores.len(), path.display());
    Ok(())
}

fn select(args: SelectArgs) -> Result<(), CoreError> {
    let scores = io::read_scores(&args.scores)?;
    let selected = rank_and_select(&scores, args.budget)?;
    let by_id: BTreeMap<&str, f64> = scores
        .iter()
        .map(|s| (s.video_id.as_str(), s.value))
        .collect();
    let kind = scores.first().map(|s| s.kind).unwrap_or(AcquisitionKind::Se);
    let records: Vec<SelectionRecord> = selected
        .iter()
        .enumerate()
        .map(|(rank, id)| SelectionRecord {
            iteration: 0,
            video_id: id.clone(),
            value: by_id[id.as_str()],
            rank: rank + 1,
            kind,
        })
        .collect();
    ensure_out_dir(&args.out)?;
    let path = args.out.join("selections.jsonl");
    io::write_jsonl(&path, &records)?;
    eprintln!("selected {} of {} videos", records.len(), scores.len());
    Ok(())
}

/// Pool, eval set, and generator for a simulate run.
struct SimInputs {
    pool: Vec<VideoExample>,
    eval: Vec<VideoExample>,
    generator: Box<dyn DynGenerator>,
}

/// Object-safe alias so synthetic and replay generators share one code path.
trait DynGenerator: capal_core::generator::Generator {}
impl<T: capal_core::generator::Generator> DynGenerator for T {}

fn simulate_inputs(args: &SimulateArgs, cfg: &RunConfig) -> Result<SimInputs, CoreError> {
    match (&args.pool, &args.candidates) {
        (Some(pool_path), Some(dump_path)) => {
            let pool = io::read_pool(pool_path)?;
            let eval = match &args.eval {
                Some(path) => io::read_pool(path)?,
                None => Vec::new(),
            };
            let dump = io::read_dump(dump_path)?;
            Ok(SimInputs {
                pool,
                eval,
                generator: Box::new(ReplayGenerator::new(dump)),
            })
        }
        (None, None) => {
            let (world, pool, eval) = build_world(&SyntheticConfig {
                seed: cfg.seed,
                ..SyntheticConfig::default()
            })?;
            Ok(SimInputs {
                pool,
                eval,
                generator: Box::new(SyntheticGenerator::new(world)),
            })
        }
        _ => Err(CoreError::InvalidConfig(
            "replay runs need both --pool and --candidates; omit both for the synthetic world"
                .into(),
        )),
    }
}

fn simulate(args: SimulateArgs, config: Option<&Path>, seed: Option<u64>) -> Result<(), CoreError> {
    let cfg = effective_config(config, seed, args.acquisition.as_deref())?;
    let embedder = load_embedder(args.embeddings.as_deref())?;
    let mut inputs = simulate_inputs(&args, &cfg)?;

    ensure_out_dir(&args.out)?;
    let state_path = args.out.join("state.json");
    let selections_path = args.out.join("selections.jsonl");
    let report_path = args.out.join("report.csv");

    let mut active = if args.resume {
        let state = runner::load_state(&state_path, &cfg)?;
        let resumed = ActiveLoop::resume(
            cfg.clone(),
            &inputs.pool,
            &inputs.eval,
            inputs.generator.as_mut(),
            embedder.as_ref(),
            state,
        )?;
        eprintln!("resuming at iteration {}", resumed.state.iteration);
        resumed
    } else {
        write_effective_config(&args.out, &cfg)?;
        if args.pool.is_none() {
            io::write_pool(&args.out.join("pool.jsonl"), &inputs.pool)?;
            io::write_pool(&args.out.join("eval.jsonl"), &inputs.eval)?;
        }
        let active = ActiveLoop::start(
            cfg.clone(),
            &inputs.pool,
            &inputs.eval,
            inputs.generator.as_mut(),
            embedder.as_ref(),
        )?;
        io::write_jsonl::<SelectionRecord>(&selections_path, &[])?;
        io::write_report(&report_path, &active.report.rows)?;
        runner::save_state(&state_path, &cfg, &active.state)?;
        active
    };

    let mut written_selections = 0usize;
    let mut written_rows = active.report.rows.len();
    loop {
        if let Some(stop) = args.stop_after {
            if active.state.iteration >= stop {
                eprintln!("stopping after iteration {stop} as requested");
                break;
            }
        }
        if !active.step()? {
            break;
        }
        io::append_jsonl(
            &selections_path,
            &active.report.selections[written_selections..],
        )?;
        written_selections = active.report.selections.len();
        let row = &active.report.rows[written_rows..];
        let mut csv = String::new();
        for r in row {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iteration, r.labeled_fraction, r.bleu4, r.rouge_l, r.cider_d
            ));
        }
        written_rows = active.report.rows.len();
        std::fs::OpenOptions::new()
            .append(true)
            .open(&report_path)
            .and_then(|mut f| std::io::Write::write_all(&mut f, csv.as_bytes()))?;
        runner::save_state(&state_path, &cfg, &active.state)?;
        eprintln!(
            "iteration {} done: {} labeled",
            active.state.iteration,
            active.state.labeled.len()
        );
    }
    for warning in &active.report.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<(), CoreError> {
    let hyp_rows = io::read_hypotheses(&args.hypotheses)?;
    let refs = io::read_pool(&args.eval)?;
    let by_id: BTreeMap<&str, &Vec<Vec<String>>> = refs
        .iter()
        .filter_map(|v| v.references.as_ref().map(|r| (v.id.as_str(), r)))
        .collect();
    let mut hyps = Vec::with_capacity(hyp_rows.len());
    let mut ref_lists = Vec::with_capacity(hyp_rows.len());
    for row in &hyp_rows {
        let refs = by_id.get(row.video_id.as_str()).ok_or_else(|| {
            CoreError::data(format!("no references for video {}", row.video_id))
        })?;
        hyps.push(tokenize(&row.caption));
        ref_lists.push((*refs).clone());
    }
    let report = capal_core::metrics::evaluate_corpus(&hyps, &ref_lists)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &args.out {
        Some(dir) => {
            ensure_out_dir(dir)?;
            std::fs::write(dir.join("metrics.json"), json + "\n")?;
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), CoreError> {
    let mut out = String::from("method,iteration,labeled_fraction,bleu4,rougeL,ciderD\n");
    for run_dir in &args.runs {
        let cfg_text = std::fs::read_to_string(run_dir.join("effective_config.json"))?;
        let cfg: RunConfig = serde_json::from_str(&cfg_text)
            .map_err(|e| CoreError::data(format!("{}: {e}", run_dir.display())))?;
        let rows = io::read_report(&run_dir.join("report.csv"))?;
        for row in rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                cfg.acquisition.as_str(),
                row.iteration,
                row.labeled_fraction,
                row.bleu4,
                row.rouge_l,
                row.cider_d
            ));
        }
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&args.out, out)?;
    Ok(())
}

fn validate(args: ValidateArgs, config: Option<&Path>, seed: Option<u64>) -> Result<(), CoreError> {
    let cfg = effective_config(config, seed, None)?;
    if let Some(path) = &args.pool {
        let pool = io::read_pool(path)?;
        eprintln!("pool ok: {} videos", pool.len());
    }
    if let Some(path) = &args.candidates {
        let dump = io::read_dump(path)?;
        eprintln!("candidates ok: {} videos", dump.video_ids().len());
        if cfg.acquisition == AcquisitionKind::MsaseFp && !dump.has_fp_rows() {
            return Err(CoreError::CapabilityMissing(
                "msase_fp needs fp:<k> rows in the candidate dump".into(),
            ));
        }
        if cfg.acquisition == AcquisitionKind::MsaseMp && !dump.has_mp_rows() {
            return Err(CoreError::CapabilityMissing(
                "msase_mp needs mp:<p> rows in the candidate dump".into(),
            ));
        }
    }
    if let Some(path) = &args.embeddings {
        let store = io::read_embeddings(path)?;
        eprintln!("embeddings ok: {} captions", store.len());
    }
    if let Some(path) = &args.eval {
        let eval = io::read_pool(path)?;
        eprintln!("eval ok: {} videos", eval.len());
    }
    eprintln!("config ok: acquisition {}", cfg.acquisition.as_str());
    Ok(())
}
