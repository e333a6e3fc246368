//! Random problem generation and dataset files.
//!
//! Every scale uses 2 robots and 2 humans. Each task independently receives a
//! deadline with probability 0.25, drawn from `[1, 5N]`. Wait constraints are
//! sampled over a hidden task order (so the relation is acyclic), one
//! candidate per task kept with probability 0.25 and capped at `ceil(N/4)`.
//! A sampled deadline below the task's earliest possible finish is raised to
//! it (never past `5N`).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::DatasetError;
use crate::model::{
    clamp_duration, DurationMatrix, ProblemInstance, SchedulingProblem, TaskId, WaitConstraint,
    MAX_WAIT, MIN_WAIT,
};
use crate::workers::{CurveSampling, Team};

pub const GENERATOR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Small,
    Medium,
    Large,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::Small, Scale::Medium, Scale::Large];

    pub fn task_range(self) -> (usize, usize) {
        match self {
            Scale::Small => (9, 11),
            Scale::Medium => (18, 22),
            Scale::Large => (36, 44),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Small => "small",
            Scale::Medium => "medium",
            Scale::Large => "large",
        })
    }
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(Scale::Small),
            "medium" => Ok(Scale::Medium),
            "large" => Ok(Scale::Large),
            other => Err(format!("unknown scale {other:?} (expected small|medium|large)")),
        }
    }
}

/// Task durations: each task draws a base duration uniformly from `base`.
/// Robots take `base·U[1 - robot_spread, 1 + robot_spread]`, humans start at
/// `base·U[human_factor]` before any learning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationSampling {
    pub base: (f64, f64),
    pub robot_spread: f64,
    pub human_factor: (f64, f64),
}

impl Default for DurationSampling {
    fn default() -> Self {
        Self {
            base: (10.0, 30.0),
            robot_spread: 0.0,
            human_factor: (1.5, 4.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_robots: usize,
    pub num_humans: usize,
    pub deadline_prob: f64,
    pub wait_prob: f64,
    pub durations: DurationSampling,
    pub curves: CurveSampling,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_robots: 2,
            num_humans: 2,
            deadline_prob: 0.25,
            wait_prob: 0.25,
            durations: DurationSampling::default(),
            curves: CurveSampling::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedProblem {
    pub instance: ProblemInstance,
    /// Tasks whose sampled deadline was raised to the task's earliest possible finish.
    pub rescaled_deadlines: Vec<TaskId>,
}

pub fn generate_problem(scale: Scale, seed: u64, cfg: &GeneratorConfig) -> GeneratedProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = scale.task_range();
    let n = rng.random_range(lo..=hi);
    let num_agents = cfg.num_robots + cfg.num_humans;

    let mut durations = DurationMatrix::filled(n, num_agents, 0.0);
    for t in 0..n {
        let base = rng.random_range(cfg.durations.base.0..=cfg.durations.base.1);
        let spread = cfg.durations.robot_spread;
        let (h_lo, h_hi) = cfg.durations.human_factor;
        for a in 0..num_agents {
            let factor = if a < cfg.num_robots {
                rng.random_range(1.0 - spread..=1.0 + spread)
            } else {
                rng.random_range(h_lo..=h_hi)
            };
            durations.set(t, a, clamp_duration((base * factor).round()));
        }
    }

    // Hidden order: position k may only wait on positions < k.
    let mut order: Vec<TaskId> = (0..n).collect();
    order.shuffle(&mut rng);
    let cap = n.div_ceil(4);
    let mut waits = Vec::new();
    for k in 1..n {
        if waits.len() >= cap {
            break;
        }
        if rng.random_bool(cfg.wait_prob) {
            let from = order[rng.random_range(0..k)];
            let gap = rng.random_range(MIN_WAIT as u32..=MAX_WAIT as u32) as f64;
            waits.push(WaitConstraint { from, to: order[k], gap });
        }
    }

    // Earliest possible finish of each task: fastest duration after every
    // predecessor chain has run at its fastest. `order` is topological.
    let mut earliest = vec![0.0f64; n];
    for &t in &order {
        let ready = waits
            .iter()
            .filter(|w| w.to == t)
            .map(|w| earliest[w.from] + w.gap)
            .fold(0.0, f64::max);
        earliest[t] = ready + durations.row_min(t);
    }

    let horizon = 5.0 * n as f64;
    let mut deadlines = BTreeMap::new();
    let mut rescaled_deadlines = Vec::new();
    for t in 0..n {
        if rng.random_bool(cfg.deadline_prob) {
            let sampled = rng.random_range(1..=5 * n) as f64;
            let value = if sampled < earliest[t] {
                rescaled_deadlines.push(t);
                earliest[t].min(horizon)
            } else {
                sampled
            };
            deadlines.insert(t, value);
        }
    }

    let problem = SchedulingProblem {
        num_tasks: n,
        num_robots: cfg.num_robots,
        num_humans: cfg.num_humans,
        durations,
        deadlines,
        waits,
    };
    let team = Team::sample(&problem, &cfg.curves, &mut rng);
    let human_curves = Some(team.humans.into_iter().map(|h| h.tasks).collect());
    GeneratedProblem {
        instance: ProblemInstance { problem, human_curves },
        rescaled_deadlines,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub split: Split,
    pub file: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rescaled_deadlines: Vec<TaskId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator_version: u32,
    pub scale: Scale,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub config: GeneratorConfig,
    pub problems: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> DatasetError + '_ {
    move |source| DatasetError::Json {
        path: path.display().to_string(),
        source,
    }
}

/// Problem seeds: train seeds first, then test seeds, from one master stream.
pub fn problem_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random()).collect()
}

/// Writes `n_train + n_test` problem files and a manifest under `out_dir`.
pub fn generate_dataset(
    scale: Scale,
    n_train: usize,
    n_test: usize,
    seed: u64,
    cfg: &GeneratorConfig,
    out_dir: &Path,
) -> Result<Manifest, DatasetError> {
    let seeds = problem_seeds(seed, n_train + n_test);
    let mut problems = Vec::with_capacity(seeds.len());
    for (i, &pseed) in seeds.iter().enumerate() {
        let (split, idx) = if i < n_train {
            (Split::Train, i)
        } else {
            (Split::Test, i - n_train)
        };
        let dir = match split {
            Split::Train => "train",
            Split::Test => "test",
        };
        let file = format!("{dir}/problem_{idx:05}.json");
        let generated = generate_problem(scale, pseed, cfg);
        let path = out_dir.join(&file);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, generated.instance.to_json() + "\n").map_err(io_err(&path))?;
        problems.push(ManifestEntry {
            split,
            file,
            seed: pseed,
            rescaled_deadlines: generated.rescaled_deadlines,
        });
    }
    let manifest = Manifest {
        generator_version: GENERATOR_VERSION,
        scale,
        seed,
        n_train,
        n_test,
        config: *cfg,
        problems,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub train: Vec<ProblemInstance>,
    pub test: Vec<ProblemInstance>,
}

pub fn read_instance(path: &Path) -> Result<ProblemInstance, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    ProblemInstance::from_json(&text).map_err(json_err(path))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(json_err(&mpath))?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for e in &manifest.problems {
        let inst = read_instance(&dir.join(&e.file))?;
        match e.split {
            Split::Train => train.push(inst),
            Split::Test => test.push(inst),
        }
    }
    Ok(Dataset {
        root: dir.to_path_buf(),
        manifest,
        train,
        test,
    })
}
