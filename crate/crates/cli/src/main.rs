use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cotdrive::dataset::{
    build_corpus, compute_stats, make_splits, read_corpus, read_manifest, write_corpus, write_manifest,
    ScenarioMeta, SplitRatios,
};
use cotdrive::metrics::{closed_loop_score, evaluate_open_loop, parse_predictions, MetricsReport, PenaltyTable};
use cotdrive::par::Parallelism;
use cotdrive::sim::{parse_jsonl, run_scenario, FrameRecord, RunSummary};
use cotdrive::world::{load_scenario, ScenarioSpec};

const RESULTS_FILE: &str = "results.json";

#[derive(Parser)]
#[command(name = "cotdrive", version, about = "Closed-loop driving simulator with a chain-of-thought expert")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its frame log as JSONL.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Log destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the closed-loop summary as JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run many scenarios and write a corpus directory.
    Batch {
        /// Scenario files, or directories searched for `*.toml`.
        #[arg(long = "scenarios", required = true, num_args = 1..)]
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        ratios: RatioArgs,
        /// Run scenarios one at a time.
        #[arg(long)]
        sequential: bool,
    },
    /// Recompute the split assignment of a corpus and rewrite its manifest.
    EmitSplits {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        ratios: RatioArgs,
    },
    /// Decision, aspect and speed statistics of a corpus.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class F1 and path accuracy of predictions against ground truth.
    EvalOpenLoop {
        /// Ground-truth JSONL file or corpus directory.
        #[arg(long)]
        gt: PathBuf,
        /// Prediction JSONL.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Route completion, infraction and driving scores of run summaries.
    EvalClosedLoop {
        /// `results.json` from `batch`, a corpus directory, or a single summary.
        #[arg(long)]
        results: PathBuf,
        /// JSON penalty table overriding the defaults.
        #[arg(long)]
        penalties: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-simulate a scenario and check it reproduces a recorded log.
    Replay {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        log: PathBuf,
    },
}

#[derive(Args)]
struct RatioArgs {
    #[arg(long, default_value_t = 0.70)]
    train: f64,
    #[arg(long, default_value_t = 0.15)]
    val: f64,
    #[arg(long, default_value_t = 0.15)]
    test: f64,
}

impl RatioArgs {
    fn ratios(&self) -> SplitRatios {
        SplitRatios { train: self.train, val: self.val, test: self.test }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, seed, out, summary } => {
            let spec = load_scenario(&scenario)?;
            let run = run_scenario(&spec, seed).with_context(|| format!("running {}", scenario.display()))?;
            emit(out.as_deref(), &run.to_jsonl())?;
            if let Some(path) = summary {
                write(&path, &json(&run.summary()))?;
            }
            Ok(())
        }
        Command::Batch { scenarios, seed, out, ratios, sequential } => {
            let specs = load_all(&scenarios)?;
            let mode = if sequential { Parallelism::Sequential } else { Parallelism::default() };
            let corpus = build_corpus(&specs, seed, ratios.ratios(), mode)?;
            write_corpus(&out, &corpus)?;
            let summaries: Vec<RunSummary> = corpus.runs.iter().map(|r| r.summary()).collect();
            write(&out.join(RESULTS_FILE), &json(&summaries))?;
            let counts = corpus.manifest.assignment().counts();
            eprintln!(
                "{} scenarios, {} records; train {} / val {} / test {}",
                corpus.runs.len(),
                corpus.runs.iter().map(|r| r.frames.len()).sum::<usize>(),
                counts[0],
                counts[1],
                counts[2]
            );
            Ok(())
        }
        Command::EmitSplits { corpus, seed, ratios } => {
            let mut manifest = read_manifest(&corpus)?;
            let metas: Vec<ScenarioMeta> = manifest
                .scenarios
                .iter()
                .map(|e| ScenarioMeta {
                    scenario_id: e.scenario_id.clone(),
                    scenario_type: e.scenario_type,
                    weather: e.weather.clone(),
                    time_of_day: e.time_of_day.clone(),
                    dominant_decision: e.dominant_decision,
                })
                .collect();
            let assignment = make_splits(&metas, ratios.ratios(), seed)?;
            for entry in &mut manifest.scenarios {
                entry.split = assignment.get(&entry.scenario_id).context("unassigned scenario")?;
            }
            manifest.seed = seed;
            manifest.ratios = ratios.ratios();
            write_manifest(&corpus, &manifest)?;
            println!("{}", json(&assignment));
            Ok(())
        }
        Command::Stats { corpus, out } => {
            let (manifest, frames) = read_corpus(&corpus)?;
            let stats = compute_stats(&frames, Some(&manifest.assignment()))?;
            emit(out.as_deref(), &(json(&stats) + "\n"))
        }
        Command::EvalOpenLoop { gt, pred, out } => {
            let gt_frames = read_frames(&gt)?;
            let text = read(&pred)?;
            let preds = parse_predictions(&text).with_context(|| format!("parsing {}", pred.display()))?;
            let report = MetricsReport { open_loop: Some(evaluate_open_loop(&gt_frames, &preds)?), closed_loop: None };
            emit(out.as_deref(), &(report.to_text() + "\n"))
        }
        Command::EvalClosedLoop { results, penalties, out } => {
            let summaries = read_summaries(&results)?;
            let table = match penalties {
                Some(p) => serde_json::from_str(&read(&p)?).with_context(|| format!("parsing {}", p.display()))?,
                None => PenaltyTable::default(),
            };
            let report = MetricsReport { open_loop: None, closed_loop: Some(closed_loop_score(&summaries, &table)?) };
            emit(out.as_deref(), &(report.to_text() + "\n"))
        }
        Command::Replay { scenario, seed, log } => {
            let spec = load_scenario(&scenario)?;
            let recorded = read(&log)?;
            let replayed = run_scenario(&spec, seed)?.to_jsonl();
            if let Some((i, (a, b))) =
                recorded.lines().zip(replayed.lines()).enumerate().find(|(_, (a, b))| a != b)
            {
                bail!("diverges at line {}:\n  recorded: {a}\n  replayed: {b}", i + 1);
            }
            let (n_rec, n_rep) = (recorded.lines().count(), replayed.lines().count());
            if n_rec != n_rep {
                bail!("recorded log has {n_rec} records, replay produced {n_rep}");
            }
            if recorded != replayed {
                bail!("logs differ in line endings or trailing bytes");
            }
            println!("replay matches: {n_rep} records");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types always serialize")
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Scenario files in argument order; directories contribute their `*.toml`
/// files sorted by name.
fn load_all(paths: &[PathBuf]) -> Result<Vec<ScenarioSpec>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "toml"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("no scenario files found");
    }
    files.iter().map(|f| load_scenario(f).map_err(Into::into)).collect()
}

fn read_frames(path: &Path) -> Result<Vec<FrameRecord>> {
    if path.is_dir() {
        return Ok(read_corpus(path)?.1);
    }
    parse_jsonl(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn read_summaries(path: &Path) -> Result<Vec<RunSummary>> {
    let path = if path.is_dir() { path.join(RESULTS_FILE) } else { path.to_path_buf() };
    let text = read(&path)?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let parsed = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|s| vec![s])
    };
    parsed.with_context(|| format!("parsing {}", path.display()))
}
