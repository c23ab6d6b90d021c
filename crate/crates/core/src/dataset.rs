//! Corpus assembly: batch runs, scenario-atomic splits, distribution
//! statistics and the on-disk layout.
//!
//! A corpus directory holds one JSONL file per scenario under `scenarios/`
//! and a `manifest.json` listing every scenario with its metadata and split.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cot::SpeedDecisionClass;
use crate::par::Parallelism;
use crate::sim::record::RecordParseError;
use crate::sim::{parse_jsonl, run_batch_with, FrameRecord, RunResult, SimError};
use crate::world::{ScenarioSpec, ScenarioType};

/// Width of an ego-speed histogram bin.
pub const SPEED_BIN_KMH: f64 = 5.0;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENARIO_DIR: &str = "scenarios";
/// Smallest corpus that can fill three splits.
pub const MIN_SCENARIOS: usize = 3;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("need at least {MIN_SCENARIOS} scenarios to split, got {0}")]
    TooFewScenarios(usize),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    InvalidRatios(SplitRatios),
    #[error("duplicate scenario id {0:?}")]
    DuplicateId(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("scenario {0:?} has no split assignment")]
    Unassigned(String),
    #[error("scenario {id:?}: {source}")]
    Sim { id: String, source: SimError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: {source}")]
    Record { path: String, source: RecordParseError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.70, val: 0.15, test: 0.15 }
    }
}

impl SplitRatios {
    fn as_array(self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    fn validate(self) -> Result<(), DatasetError> {
        let r = self.as_array();
        let ok = r.iter().all(|x| x.is_finite() && *x >= 0.0) && (r.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(DatasetError::InvalidRatios(self))
        }
    }

    /// Per-split scenario counts for `n` scenarios by largest-remainder
    /// rounding; ties go to the earlier split. A split with a positive ratio
    /// that would be empty takes one scenario from the largest split.
    pub fn targets(self, n: usize) -> [usize; 3] {
        let exact = self.as_array().map(|r| r * n as f64);
        let mut counts = exact.map(|x| x.floor() as usize);
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let short = n - counts.iter().sum::<usize>();
        for &k in order.iter().take(short) {
            counts[k] += 1;
        }
        let ratios = self.as_array();
        for k in 0..3 {
            if counts[k] == 0 && ratios[k] > 0.0 {
                let donor = (0..3).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).expect("three splits");
                if counts[donor] > 1 {
                    counts[donor] -= 1;
                    counts[k] += 1;
                }
            }
        }
        counts
    }
}

/// What the split generator needs to know about a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub scenario_id: String,
    pub scenario_type: ScenarioType,
    pub weather: String,
    pub time_of_day: String,
    /// Most frequent logged final decision.
    pub dominant_decision: SpeedDecisionClass,
}

impl ScenarioMeta {
    pub fn from_run(spec: &ScenarioSpec, run: &RunResult) -> Self {
        Self {
            scenario_id: spec.scenario_id.clone(),
            scenario_type: spec.scenario_type,
            weather: spec.weather.clone(),
            time_of_day: spec.time_of_day.clone(),
            dominant_decision: dominant_decision(&run.frames).unwrap_or(SpeedDecisionClass::SpeedLimit),
        }
    }

    fn stratum(&self) -> (ScenarioType, SpeedDecisionClass) {
        (self.scenario_type, self.dominant_decision)
    }
}

/// Most frequent final decision; ties go to the earlier class in
/// [`SpeedDecisionClass::ALL`].
pub fn dominant_decision(frames: &[FrameRecord]) -> Option<SpeedDecisionClass> {
    let mut counts = BTreeMap::new();
    for f in frames {
        *counts.entry(f.cot.final_decision).or_insert(0usize) += 1;
    }
    SpeedDecisionClass::ALL
        .into_iter()
        .filter_map(|c| counts.get(&c).map(|&n| (c, n)))
        .fold(None, |best: Option<(SpeedDecisionClass, usize)>, (c, n)| match best {
            Some((_, m)) if m >= n => best,
            _ => Some((c, n)),
        })
        .map(|(c, _)| c)
}

/// Scenario id to split. All frames of a scenario share its split.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SplitAssignment {
    pub splits: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn get(&self, scenario_id: &str) -> Option<Split> {
        self.splits.get(scenario_id).copied()
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in self.splits.values() {
            c[*s as usize] += 1;
        }
        c
    }

    pub fn ids(&self, split: Split) -> impl Iterator<Item = &str> {
        self.splits.iter().filter(move |(_, s)| **s == split).map(|(id, _)| id.as_str())
    }
}

/// Seeded greedy stratified partition.
///
/// Scenarios are grouped by `(scenario_type, dominant_decision)`; larger
/// groups go first and each group's members are shuffled. Every scenario goes
/// to the split furthest below its share of the group so far, among splits
/// still under their overall target. Overall counts equal
/// [`SplitRatios::targets`].
pub fn make_splits(scenarios: &[ScenarioMeta], ratios: SplitRatios, seed: u64) -> Result<SplitAssignment, DatasetError> {
    ratios.validate()?;
    if scenarios.len() < MIN_SCENARIOS {
        return Err(DatasetError::TooFewScenarios(scenarios.len()));
    }
    let mut seen = BTreeSet::new();
    let mut strata: BTreeMap<_, Vec<&str>> = BTreeMap::new();
    for s in scenarios {
        if !seen.insert(s.scenario_id.as_str()) {
            return Err(DatasetError::DuplicateId(s.scenario_id.clone()));
        }
        strata.entry(s.stratum()).or_default().push(&s.scenario_id);
    }
    let mut groups: Vec<Vec<&str>> = strata.into_values().collect();
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));

    let share = ratios.as_array();
    let mut capacity = ratios.targets(scenarios.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SplitAssignment::default();
    for mut group in groups {
        group.shuffle(&mut rng);
        let mut placed = [0usize; 3];
        for (j, id) in group.into_iter().enumerate() {
            let k = (0..3)
                .filter(|&k| capacity[k] > 0)
                .max_by(|&a, &b| {
                    let deficit = |k: usize| share[k] * (j + 1) as f64 - placed[k] as f64;
                    deficit(a).total_cmp(&deficit(b)).then(capacity[a].cmp(&capacity[b])).then(b.cmp(&a))
                })
                .expect("capacities sum to the scenario count");
            capacity[k] -= 1;
            placed[k] += 1;
            out.splits.insert(id.to_string(), Split::ALL[k]);
        }
    }
    Ok(out)
}

/// Label and speed counts over a set of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub frames: u64,
    pub decisions: BTreeMap<SpeedDecisionClass, u64>,
    /// Aspect name to label to count.
    pub aspects: BTreeMap<String, BTreeMap<String, u64>>,
    /// Bin `i` counts ego speeds in `[5i, 5i + 5)` km/h.
    pub speed_histogram: Vec<u64>,
}

impl Default for SplitStats {
    fn default() -> Self {
        Self {
            frames: 0,
            decisions: SpeedDecisionClass::ALL.into_iter().map(|c| (c, 0)).collect(),
            aspects: BTreeMap::new(),
            speed_histogram: Vec::new(),
        }
    }
}

impl SplitStats {
    pub fn add(&mut self, frame: &FrameRecord) {
        self.frames += 1;
        *self.decisions.entry(frame.cot.final_decision).or_insert(0) += 1;
        for (aspect, label) in frame.cot.labels() {
            *self.aspects.entry(aspect.to_string()).or_default().entry(label.to_string()).or_insert(0) += 1;
        }
        let bin = speed_bin(frame.ego.speed_kmh);
        if self.speed_histogram.len() <= bin {
            self.speed_histogram.resize(bin + 1, 0);
        }
        self.speed_histogram[bin] += 1;
    }

    /// Associative, commutative combination of two partial counts.
    pub fn merge(&mut self, other: &SplitStats) {
        self.frames += other.frames;
        for (c, n) in &other.decisions {
            *self.decisions.entry(*c).or_insert(0) += n;
        }
        for (aspect, labels) in &other.aspects {
            let mine = self.aspects.entry(aspect.clone()).or_default();
            for (label, n) in labels {
                *mine.entry(label.clone()).or_insert(0) += n;
            }
        }
        if self.speed_histogram.len() < other.speed_histogram.len() {
            self.speed_histogram.resize(other.speed_histogram.len(), 0);
        }
        for (i, n) in other.speed_histogram.iter().enumerate() {
            self.speed_histogram[i] += n;
        }
    }
}

/// Histogram bin of a speed; negative speeds land in bin 0.
pub fn speed_bin(speed_kmh: f64) -> usize {
    (speed_kmh.max(0.0) / SPEED_BIN_KMH).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub speed_bin_kmh: f64,
    pub total: SplitStats,
    /// Present only when a split assignment was given.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_split: BTreeMap<Split, SplitStats>,
}

/// Counts over every frame, and per split when `splits` is given.
pub fn compute_stats(frames: &[FrameRecord], splits: Option<&SplitAssignment>) -> Result<CorpusStats, DatasetError> {
    if frames.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    let mut per_split: BTreeMap<Split, SplitStats> = BTreeMap::new();
    let mut total = SplitStats::default();
    if let Some(assign) = splits {
        for split in Split::ALL {
            per_split.insert(split, SplitStats::default());
        }
        for f in frames {
            let split = assign.get(&f.scenario_id).ok_or_else(|| DatasetError::Unassigned(f.scenario_id.clone()))?;
            per_split.get_mut(&split).expect("all splits present").add(f);
        }
        for s in per_split.values() {
            total.merge(s);
        }
    } else {
        for f in frames {
            total.add(f);
        }
    }
    Ok(CorpusStats { speed_bin_kmh: SPEED_BIN_KMH, total, per_split })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scenario_id: String,
    pub scenario_type: ScenarioType,
    pub weather: String,
    pub time_of_day: String,
    pub dominant_decision: SpeedDecisionClass,
    pub split: Split,
    /// Path of the scenario's JSONL, relative to the corpus directory.
    pub file: String,
    pub records: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub scenarios: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn assignment(&self) -> SplitAssignment {
        SplitAssignment { splits: self.scenarios.iter().map(|e| (e.scenario_id.clone(), e.split)).collect() }
    }
}

/// Runs and manifest of a generated corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub runs: Vec<RunResult>,
}

/// Runs every scenario with `seed` and partitions the results.
pub fn build_corpus(
    specs: &[ScenarioSpec],
    seed: u64,
    ratios: SplitRatios,
    mode: Parallelism,
) -> Result<Corpus, DatasetError> {
    let runs = run_batch_with(specs, seed, mode)
        .into_iter()
        .zip(specs)
        .map(|(r, spec)| r.map_err(|source| DatasetError::Sim { id: spec.scenario_id.clone(), source }))
        .collect::<Result<Vec<_>, _>>()?;
    let metas: Vec<ScenarioMeta> = specs.iter().zip(&runs).map(|(s, r)| ScenarioMeta::from_run(s, r)).collect();
    let assignment = make_splits(&metas, ratios, seed)?;
    let scenarios = metas
        .into_iter()
        .zip(&runs)
        .map(|(m, run)| ManifestEntry {
            split: assignment.get(&m.scenario_id).expect("every scenario is assigned"),
            file: format!("{SCENARIO_DIR}/{}.jsonl", m.scenario_id),
            records: run.frames.len() as u64,
            scenario_id: m.scenario_id,
            scenario_type: m.scenario_type,
            weather: m.weather,
            time_of_day: m.time_of_day,
            dominant_decision: m.dominant_decision,
        })
        .collect();
    Ok(Corpus { manifest: CorpusManifest { seed, ratios, scenarios }, runs })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

/// Writes `scenarios/<id>.jsonl` and `manifest.json` under `dir`.
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<(), DatasetError> {
    let scen_dir = dir.join(SCENARIO_DIR);
    fs::create_dir_all(&scen_dir).map_err(io_err(&scen_dir))?;
    for (entry, run) in corpus.manifest.scenarios.iter().zip(&corpus.runs) {
        let path = dir.join(&entry.file);
        fs::write(&path, run.to_jsonl()).map_err(io_err(&path))?;
    }
    write_manifest(dir, &corpus.manifest)
}

pub fn write_manifest(dir: &Path, manifest: &CorpusManifest) -> Result<(), DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest).expect("manifests always serialize");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

pub fn read_manifest(dir: &Path) -> Result<CorpusManifest, DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|source| DatasetError::Json { path: path.display().to_string(), source })
}

/// Manifest and every logged frame of a corpus directory, in manifest order.
pub fn read_corpus(dir: &Path) -> Result<(CorpusManifest, Vec<FrameRecord>), DatasetError> {
    let manifest = read_manifest(dir)?;
    let mut frames = Vec::new();
    for entry in &manifest.scenarios {
        let path = dir.join(&entry.file);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let parsed =
            parse_jsonl(&text).map_err(|source| DatasetError::Record { path: path.display().to_string(), source })?;
        frames.extend(parsed);
    }
    Ok((manifest, frames))
}
