//! Benchmark harness: synthetic mixed-variable objectives with known optima,
//! a seeded study runner, normalized scoring against paired random search,
//! and the four-arm ablation report.
//!
//! Builtin objectives (all minimized):
//!
//! * `mixed-sphere` (D = 8): reals `x0..x3` in [0, 1], integers `n0, n1` in
//!   [0, 10], categoricals `ca` in {a0..a3} and `cb` in {b0, b1, b2}.
//!   `f = Σ (x_i − 0.3)² + (n0 − 3)² + (n1 − 7)² + PA[ca] + PB[cb]` with
//!   `PA = [0, 0.5, 1, 2]`, `PB = [1, 0, 0.5]`. Optimum 0.
//! * `mixed-rosenbrock` (D = 4): `x1, x2` in [−2, 2], integer `k` in [0, 5],
//!   boolean `b`; `s = +1` if `b` else `−1`.
//!   `f = (1 − x1)² + 100 (x2 − s·x1²)² + 0.25 (k − 2)²`. Optimum 0, at
//!   `(1, 1, 2, true)` and `(1, −1, 2, false)`.
//! * `two-basin` (D = 4): reals `u0..u2` in [0, 1] and `basin` in
//!   {base, up, down} with depth `[1, 0.85, 0.7]` and shift `[0, 0.05, −0.05]`.
//!   A narrow deep Gaussian (center 0.85 + shift, width 0.1, depth 1) and a
//!   wide shallow one (center 0.2 + shift, width 0.25, depth 0.6):
//!   `f = −depth · max(G1, 0.6·G2)`. Optimum −1; the local basin bottoms out
//!   at −0.6, a gap of 0.4.
//! * `qual-dominant` (D = 3): `q` in {q0..q4} with penalties
//!   `[0, 0.3, 0.6, 0.8, 1]`, reals `x1, x2` in [0, 1].
//!   `f = 0.8 P[q] + 0.2 ((x1 − 0.7)² + (x2 − 0.2)²)`. Optimum 0.
//! * `log-scale-tune` (D = 2): `lr` in [1e-4, 1] (log), integer `depth` in
//!   [1, 12]. `f = (log10 lr + 1.5 + 0.1 (depth − 6))² + 0.02 (depth − 6)²`.
//!   Optimum 0 at `lr = 10^−1.5, depth = 6`.
//!
//! Each also has a `-noisy` variant adding Gaussian noise (std 0.01) that is
//! a deterministic function of the point and the objective's noise seed.
//!
//! Scores are a stand-in for the challenge leaderboard:
//! `100 · (1 − (mean_best − opt) / (mean_random_best − opt))`, clipped below
//! at −100, so paired random search sits at 0 and the optimum at 100.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{Flags, Optimizer, OptimizerConfig};
use crate::space::{ParamSpec, Point, SearchSpace, Value};
use crate::turbo::TrustRegionConfig;

pub const NOISE_STD: f64 = 0.01;
const SCORE_FLOOR: f64 = -100.0;

pub type ObjectiveFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Objective {
    pub name: String,
    pub space: SearchSpace,
    pub known_optimum: f64,
    /// A point attaining `known_optimum` in the noise-free objective.
    pub optimum: Point,
    pub noise_std: f64,
    noise_seed: u64,
    f: ObjectiveFn,
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective")
            .field("name", &self.name)
            .field("known_optimum", &self.known_optimum)
            .field("noise_std", &self.noise_std)
            .finish_non_exhaustive()
    }
}

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Objective {
    pub fn new(
        name: impl Into<String>,
        space: SearchSpace,
        known_optimum: f64,
        optimum: Point,
        f: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), space, known_optimum, optimum, noise_std: 0.0, noise_seed: 0, f: Arc::new(f) }
    }

    /// Noisy copy named `<name>-noisy`.
    pub fn noisy(&self, noise_std: f64, noise_seed: u64) -> Self {
        Self { name: format!("{}-noisy", self.name), noise_std, noise_seed, ..self.clone() }
    }

    pub fn evaluate(&self, p: &Point) -> f64 {
        let v = (self.f)(p);
        if self.noise_std == 0.0 {
            return v;
        }
        let key = serde_json::to_string(p).expect("points serialize");
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(key.as_bytes(), self.noise_seed));
        let z: f64 = StandardNormal.sample(&mut rng);
        v + self.noise_std * z
    }
}

fn point(entries: Vec<(&str, Value)>) -> Point {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn cat_index(p: &Point, name: &str, labels: &[&str]) -> usize {
    let c = p.category(name);
    labels.iter().position(|l| *l == c).expect("validated category")
}

pub const SPHERE_PENALTY_A: [f64; 4] = [0.0, 0.5, 1.0, 2.0];
pub const SPHERE_PENALTY_B: [f64; 3] = [1.0, 0.0, 0.5];
const SPHERE_A: [&str; 4] = ["a0", "a1", "a2", "a3"];
const SPHERE_B: [&str; 3] = ["b0", "b1", "b2"];

pub fn mixed_sphere() -> Objective {
    let mut params: Vec<ParamSpec> = (0..4).map(|i| ParamSpec::real(format!("x{i}"), 0.0, 1.0)).collect();
    params.push(ParamSpec::integer("n0", 0, 10));
    params.push(ParamSpec::integer("n1", 0, 10));
    params.push(ParamSpec::categorical("ca", SPHERE_A));
    params.push(ParamSpec::categorical("cb", SPHERE_B));
    let space = SearchSpace::new(params).expect("valid space");
    let optimum = point(vec![
        ("x0", Value::Real(0.3)),
        ("x1", Value::Real(0.3)),
        ("x2", Value::Real(0.3)),
        ("x3", Value::Real(0.3)),
        ("n0", Value::Integer(3)),
        ("n1", Value::Integer(7)),
        ("ca", Value::Category("a0".into())),
        ("cb", Value::Category("b1".into())),
    ]);
    Objective::new("mixed-sphere", space, 0.0, optimum, |p| {
        let xs: f64 = (0..4).map(|i| (p.real(&format!("x{i}")) - 0.3).powi(2)).sum();
        let ys = ((p.integer("n0") - 3) as f64).powi(2) + ((p.integer("n1") - 7) as f64).powi(2);
        xs + ys + SPHERE_PENALTY_A[cat_index(p, "ca", &SPHERE_A)] + SPHERE_PENALTY_B[cat_index(p, "cb", &SPHERE_B)]
    })
}

pub fn mixed_rosenbrock() -> Objective {
    let space = SearchSpace::new(vec![
        ParamSpec::real("x1", -2.0, 2.0),
        ParamSpec::real("x2", -2.0, 2.0),
        ParamSpec::integer("k", 0, 5),
        ParamSpec::boolean("b"),
    ])
    .expect("valid space");
    let optimum =
        point(vec![("x1", Value::Real(1.0)), ("x2", Value::Real(1.0)), ("k", Value::Integer(2)), ("b", Value::Bool(true))]);
    Objective::new("mixed-rosenbrock", space, 0.0, optimum, |p| {
        let (x1, x2) = (p.real("x1"), p.real("x2"));
        let s = if p.boolean("b") { 1.0 } else { -1.0 };
        (1.0 - x1).powi(2) + 100.0 * (x2 - s * x1 * x1).powi(2) + 0.25 * ((p.integer("k") - 2) as f64).powi(2)
    })
}

pub const BASIN_DEPTH: [f64; 3] = [1.0, 0.85, 0.7];
pub const BASIN_SHIFT: [f64; 3] = [0.0, 0.05, -0.05];
const BASINS: [&str; 3] = ["base", "up", "down"];
pub const GLOBAL_CENTER: f64 = 0.85;
pub const GLOBAL_WIDTH: f64 = 0.1;
pub const LOCAL_CENTER: f64 = 0.2;
pub const LOCAL_WIDTH: f64 = 0.25;
pub const LOCAL_DEPTH: f64 = 0.6;

fn gaussian_bump(u: &[f64], center: f64, width: f64) -> f64 {
    let d2: f64 = u.iter().map(|x| (x - center).powi(2)).sum();
    (-d2 / (2.0 * width * width)).exp()
}

pub fn two_basin() -> Objective {
    let mut params: Vec<ParamSpec> = (0..3).map(|i| ParamSpec::real(format!("u{i}"), 0.0, 1.0)).collect();
    params.push(ParamSpec::categorical("basin", BASINS));
    let space = SearchSpace::new(params).expect("valid space");
    let optimum = point(vec![
        ("u0", Value::Real(GLOBAL_CENTER)),
        ("u1", Value::Real(GLOBAL_CENTER)),
        ("u2", Value::Real(GLOBAL_CENTER)),
        ("basin", Value::Category("base".into())),
    ]);
    Objective::new("two-basin", space, -1.0, optimum, |p| {
        let b = cat_index(p, "basin", &BASINS);
        let u: Vec<f64> = (0..3).map(|i| p.real(&format!("u{i}"))).collect();
        let g1 = gaussian_bump(&u, GLOBAL_CENTER + BASIN_SHIFT[b], GLOBAL_WIDTH);
        let g2 = LOCAL_DEPTH * gaussian_bump(&u, LOCAL_CENTER + BASIN_SHIFT[b], LOCAL_WIDTH);
        -BASIN_DEPTH[b] * g1.max(g2)
    })
}

pub const QUAL_PENALTY: [f64; 5] = [0.0, 0.3, 0.6, 0.8, 1.0];
const QUAL: [&str; 5] = ["q0", "q1", "q2", "q3", "q4"];

pub fn qual_dominant() -> Objective {
    let space = SearchSpace::new(vec![
        ParamSpec::categorical("q", QUAL),
        ParamSpec::real("x1", 0.0, 1.0),
        ParamSpec::real("x2", 0.0, 1.0),
    ])
    .expect("valid space");
    let optimum =
        point(vec![("q", Value::Category("q0".into())), ("x1", Value::Real(0.7)), ("x2", Value::Real(0.2))]);
    Objective::new("qual-dominant", space, 0.0, optimum, |p| {
        let q = cat_index(p, "q", &QUAL);
        0.8 * QUAL_PENALTY[q] + 0.2 * ((p.real("x1") - 0.7).powi(2) + (p.real("x2") - 0.2).powi(2))
    })
}

pub fn log_scale_tune() -> Objective {
    let space = SearchSpace::new(vec![ParamSpec::real_log("lr", 1e-4, 1.0), ParamSpec::integer("depth", 1, 12)])
        .expect("valid space");
    let optimum = point(vec![("lr", Value::Real(10f64.powf(-1.5))), ("depth", Value::Integer(6))]);
    Objective::new("log-scale-tune", space, 0.0, optimum, |p| {
        let dd = (p.integer("depth") - 6) as f64;
        (p.real("lr").log10() + 1.5 + 0.1 * dd).powi(2) + 0.02 * dd * dd
    })
}

/// The five noise-free objectives, in documentation order.
pub fn builtin_suite() -> Vec<Objective> {
    vec![mixed_sphere(), mixed_rosenbrock(), two_basin(), qual_dominant(), log_scale_tune()]
}

/// The suite plus its noisy variants.
pub fn builtin_objectives() -> Vec<Objective> {
    let base = builtin_suite();
    let noisy: Vec<Objective> =
        base.iter().enumerate().map(|(i, o)| o.noisy(NOISE_STD, 0x5eed_0000 + i as u64)).collect();
    base.into_iter().chain(noisy).collect()
}

pub fn objective_by_name(name: &str) -> Option<Objective> {
    builtin_objectives().into_iter().find(|o| o.name == name)
}

/// One optimizer arm of a study.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Uniform random points, `batches × batch_size` evaluations.
    Random { batches: usize, batch_size: usize },
    Bo(OptimizerConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub name: String,
    pub label: String,
    pub method: Method,
}

impl Arm {
    fn bo(name: &str, label: &str, flags: Flags, length_min: f64) -> Self {
        let config = OptimizerConfig {
            flags,
            turbo: TrustRegionConfig { length_min, ..TrustRegionConfig::default() },
            ..OptimizerConfig::default()
        };
        Self { name: name.into(), label: label.into(), method: Method::Bo(config) }
    }

    pub fn baseline() -> Self {
        Self::bo("baseline", "Baseline", Flags::NONE, 2f64.powi(-7))
    }

    pub fn tuning() -> Self {
        Self::bo("tuning", "+ Tuning", Flags::NONE, 2f64.powi(-3))
    }

    pub fn arp() -> Self {
        Self::bo("arp", "+ ARP", Flags { arp: true, ..Flags::NONE }, 2f64.powi(-3))
    }

    pub fn full() -> Self {
        Self::bo("full", "+ Mixture Kernel & Bandit", Flags::default(), 2f64.powi(-3))
    }

    pub fn random() -> Self {
        let d = OptimizerConfig::default();
        Self {
            name: "random".into(),
            label: "Random search".into(),
            method: Method::Random { batches: d.max_iterations, batch_size: d.batch_size },
        }
    }

    /// The ablation arms in report order.
    pub fn ablation() -> Vec<Arm> {
        vec![Self::baseline(), Self::tuning(), Self::arp(), Self::full()]
    }

    pub fn by_name(name: &str) -> Option<Arm> {
        Self::ablation().into_iter().chain([Self::random()]).find(|a| a.name == name)
    }

    pub fn iterations(&self) -> usize {
        match &self.method {
            Method::Random { batches, .. } => *batches,
            Method::Bo(c) => c.max_iterations,
        }
    }

    /// Overrides the iteration budget, keeping the batch size.
    pub fn with_iterations(mut self, iterations: usize) -> Self {
        match &mut self.method {
            Method::Random { batches, .. } => *batches = iterations,
            Method::Bo(c) => c.max_iterations = iterations,
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTrace {
    pub objective: String,
    pub optimizer: String,
    pub seed: u64,
    /// Best value seen after each batch.
    pub best_so_far: Vec<f64>,
    pub wall_s: f64,
    pub evaluations: usize,
    /// Evaluations that returned a non-finite value.
    pub imputed: usize,
}

impl StudyTrace {
    pub fn final_best(&self) -> f64 {
        *self.best_so_far.last().expect("at least one iteration")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyFailure {
    pub objective: String,
    pub optimizer: String,
    pub seed: u64,
    pub message: String,
}

pub type StudyOutcome = std::result::Result<StudyTrace, StudyFailure>;

fn run_seed(arm: &Arm, objective: &Objective, seed: u64) -> Result<StudyTrace> {
    let start = Instant::now();
    let mut best = f64::INFINITY;
    let mut best_so_far = vec![];
    let mut evaluations = 0;
    let mut imputed = 0;
    let mut record = |values: &[f64], best_so_far: &mut Vec<f64>| {
        for &v in values {
            evaluations += 1;
            if v.is_finite() {
                best = best.min(v);
            } else {
                imputed += 1;
            }
        }
        best_so_far.push(best);
    };
    match &arm.method {
        Method::Random { batches, batch_size } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..*batches {
                let values: Vec<f64> = (0..*batch_size)
                    .map(|_| objective.evaluate(&objective.space.random_point(&mut rng)))
                    .collect();
                record(&values, &mut best_so_far);
            }
        }
        Method::Bo(config) => {
            let config = config.clone().with_seed(seed);
            let mut opt = Optimizer::new(objective.space.clone(), config.clone())?;
            for _ in 0..config.max_iterations {
                let points = opt.suggest()?;
                let values: Vec<f64> = points.iter().map(|p| objective.evaluate(p)).collect();
                opt.observe(&points, &values)?;
                record(&values, &mut best_so_far);
            }
        }
    }
    Ok(StudyTrace {
        objective: objective.name.clone(),
        optimizer: arm.name.clone(),
        seed,
        best_so_far,
        wall_s: start.elapsed().as_secs_f64(),
        evaluations,
        imputed,
    })
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".into()
    }
}

fn run_one(arm: &Arm, objective: &Objective, seed: u64) -> StudyOutcome {
    let failure = |message: String| StudyFailure {
        objective: objective.name.clone(),
        optimizer: arm.name.clone(),
        seed,
        message,
    };
    match catch_unwind(AssertUnwindSafe(|| run_seed(arm, objective, seed))) {
        Ok(Ok(trace)) => Ok(trace),
        Ok(Err(e)) => Err(failure(e.to_string())),
        Err(payload) => Err(failure(panic_message(payload))),
    }
}

/// Runs one arm on one objective for every seed, in parallel. A panicking
/// or failing seed yields a failure entry; the other seeds still run.
pub fn run_study(arm: &Arm, objective: &Objective, seeds: &[u64]) -> Vec<StudyOutcome> {
    seeds.par_iter().map(|&s| run_one(arm, objective, s)).collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Normalized score of `traces` against paired random-search traces.
pub fn normalized_score(traces: &[StudyTrace], objective: &Objective, baseline_traces: &[StudyTrace]) -> Result<f64> {
    let m = mean(traces.iter().map(StudyTrace::final_best))
        .ok_or_else(|| Error::UndefinedScore(objective.name.clone()))?;
    let r = mean(baseline_traces.iter().map(StudyTrace::final_best))
        .ok_or_else(|| Error::UndefinedScore(objective.name.clone()))?;
    score_from_means(m, r, objective.known_optimum).ok_or_else(|| Error::UndefinedScore(objective.name.clone()))
}

pub fn score_from_means(mean_best: f64, mean_random_best: f64, known_optimum: f64) -> Option<f64> {
    let denom = mean_random_best - known_optimum;
    if denom == 0.0 || !denom.is_finite() || !mean_best.is_finite() {
        return None;
    }
    Some((100.0 * (1.0 - (mean_best - known_optimum) / denom)).max(SCORE_FLOOR))
}

/// Relative improvement `(S_o − S_b) / S_b`, or `None` when `S_b` is 0.
pub fn improvement(s_o: f64, s_b: f64) -> Option<f64> {
    (s_b != 0.0).then(|| (s_o - s_b) / s_b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmScores {
    pub name: String,
    pub label: String,
    /// Mean of the defined per-objective scores.
    pub aggregate: Option<f64>,
    pub per_objective: BTreeMap<String, Option<f64>>,
    pub mean_final_best: BTreeMap<String, f64>,
    /// Percent improvement of the aggregate over the first arm's.
    pub improvement_pct: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub note: String,
    pub seeds: Vec<u64>,
    pub objectives: Vec<String>,
    pub arms: Vec<ArmScores>,
    pub reference: ArmScores,
    pub failures: Vec<StudyFailure>,
    #[serde(skip)]
    pub traces: Vec<StudyTrace>,
    pub wall_s: f64,
}

impl Report {
    pub fn arm(&self, name: &str) -> Option<&ArmScores> {
        self.arms.iter().find(|a| a.name == name).or((self.reference.name == name).then_some(&self.reference))
    }

    /// Markdown-style table of aggregate and per-objective scores.
    pub fn table(&self) -> String {
        let mut out = String::from("| arm | aggregate |");
        for o in &self.objectives {
            out.push_str(&format!(" {o} |"));
        }
        out.push_str(" improvement |\n|---|---|");
        for _ in &self.objectives {
            out.push_str("---|");
        }
        out.push_str("---|\n");
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
        for a in self.arms.iter().chain([&self.reference]) {
            out.push_str(&format!("| {} | {} |", a.label, fmt(a.aggregate)));
            for o in &self.objectives {
                out.push_str(&format!(" {} |", fmt(a.per_objective.get(o).copied().flatten())));
            }
            out.push_str(&format!(" {} |\n", a.improvement_pct.map_or("n/a".into(), |v| format!("{v:+.2}%"))));
        }
        out
    }
}

fn score_arm(
    arm: &Arm,
    objectives: &[Objective],
    outcomes: &[StudyOutcome],
    random: &BTreeMap<String, Vec<StudyTrace>>,
) -> ArmScores {
    let mut per_objective = BTreeMap::new();
    let mut mean_final_best = BTreeMap::new();
    let mut failures = 0;
    for o in objectives {
        let traces: Vec<StudyTrace> = outcomes
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .filter(|t| t.objective == o.name && t.optimizer == arm.name)
            .cloned()
            .collect();
        failures += outcomes.iter().filter(|r| matches!(r, Err(f) if f.objective == o.name && f.optimizer == arm.name)).count();
        if let Some(m) = mean(traces.iter().map(StudyTrace::final_best)) {
            mean_final_best.insert(o.name.clone(), m);
        }
        let base = random.get(&o.name).map_or(&[][..], |v| &v[..]);
        per_objective.insert(o.name.clone(), normalized_score(&traces, o, base).ok());
    }
    let aggregate = mean(per_objective.values().flatten().copied());
    ArmScores {
        name: arm.name.clone(),
        label: arm.label.clone(),
        aggregate,
        per_objective,
        mean_final_best,
        improvement_pct: None,
        failures,
    }
}

/// Runs `arms` and paired random search over `objectives` and `seeds`.
pub fn run_arms(arms: &[Arm], reference: &Arm, objectives: &[Objective], seeds: &[u64]) -> Report {
    let start = Instant::now();
    let mut jobs: Vec<(&Arm, &Objective, u64)> = vec![];
    for arm in arms.iter().chain([reference]) {
        for o in objectives {
            for &s in seeds {
                jobs.push((arm, o, s));
            }
        }
    }
    let outcomes: Vec<StudyOutcome> = jobs.par_iter().map(|(a, o, s)| run_one(a, o, *s)).collect();

    let mut random: BTreeMap<String, Vec<StudyTrace>> = BTreeMap::new();
    for t in outcomes.iter().filter_map(|r| r.as_ref().ok()).filter(|t| t.optimizer == reference.name) {
        random.entry(t.objective.clone()).or_default().push(t.clone());
    }
    let mut scored: Vec<ArmScores> = arms.iter().map(|a| score_arm(a, objectives, &outcomes, &random)).collect();
    let first = scored.first().and_then(|a| a.aggregate);
    for a in &mut scored {
        a.improvement_pct = match (a.aggregate, first) {
            (Some(s), Some(b)) => improvement(s, b).map(|v| 100.0 * v),
            _ => None,
        };
    }
    let reference_scores = score_arm(reference, objectives, &outcomes, &random);
    let (traces, failures): (Vec<_>, Vec<_>) = outcomes.into_iter().partition(|r| r.is_ok());
    Report {
        note: "Scores normalize each objective against paired random search (0) and the known optimum (100); \
               this scale is a stand-in for the challenge leaderboard. Improvements are (S_o - S_b) / S_b \
               relative to the first arm."
            .into(),
        seeds: seeds.to_vec(),
        objectives: objectives.iter().map(|o| o.name.clone()).collect(),
        arms: scored,
        reference: reference_scores,
        failures: failures.into_iter().map(|r| r.unwrap_err()).collect(),
        traces: traces.into_iter().map(|r| r.unwrap()).collect(),
        wall_s: start.elapsed().as_secs_f64(),
    }
}

/// The four-arm ablation over the builtin suite.
pub fn run_ablation(seeds: &[u64]) -> Report {
    run_arms(&Arm::ablation(), &Arm::random(), &builtin_suite(), seeds)
}

#[derive(Serialize)]
struct TraceRow<'a> {
    objective: &'a str,
    optimizer: &'a str,
    seed: u64,
    iteration: usize,
    best_so_far: f64,
    wall_s: f64,
}

/// Writes one row per (trace, iteration). Wall time is written as 0 unless
/// `record_wall_time`, so that reruns produce identical files.
pub fn write_traces(path: &Path, traces: &[StudyTrace], record_wall_time: bool) -> Result<()> {
    let io = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for t in traces {
        for (i, &b) in t.best_so_far.iter().enumerate() {
            w.serialize(TraceRow {
                objective: &t.objective,
                optimizer: &t.optimizer,
                seed: t.seed,
                iteration: i + 1,
                best_so_far: b,
                wall_s: if record_wall_time { t.wall_s } else { 0.0 },
            })
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

pub fn write_report(dir: &Path, report: &Report, record_wall_time: bool) -> Result<()> {
    let io = |e: std::io::Error| Error::Input(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    write_traces(&dir.join("traces.csv"), &report.traces, record_wall_time)?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(dir.join("scores.json"), json + "\n").map_err(io)
}
