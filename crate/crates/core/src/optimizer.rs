//! Ask/tell optimizer combining the trust region, region partitioning,
//! mixture-kernel surrogate and qualitative bandits.
//!
//! A run proceeds in batches. The first batches come from a scrambled Sobol
//! design. After that each batch is produced by fitting the GP on the whole
//! history, generating Sobol candidates in the trust region, optionally
//! filtering them to the incumbent's side of the learned partition, picking
//! one candidate per slot by minimizing an independent joint posterior draw,
//! and optionally overwriting qualitative coordinates with bandit samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arp::{self, ArpConfig, RegionClassifier};
use crate::bandit::{overwrite_qualitative, BanditConfig, BanditState};
use crate::error::{Error, Result};
use crate::space::{BlockInput, Point, SearchSpace, WarpedVector};
use crate::surrogate::{GpModel, SurrogateConfig};
use crate::turbo::{self, Sobol, TrustRegionConfig, TrustRegionState};

/// Restart samples ranked by posterior mean when re-centering the region.
pub const RESTART_POOL: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    pub arp: bool,
    pub mixture_kernel: bool,
    pub bandit: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Self { arp: true, mixture_kernel: true, bandit: true }
    }
}

impl Flags {
    pub const NONE: Flags = Flags { arp: false, mixture_kernel: false, bandit: false };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub batch_size: usize,
    pub max_iterations: usize,
    /// Size of the initial design. Defaults to `2 * (D + 1)` capped at three
    /// batches, and never below one batch.
    pub init_points: Option<usize>,
    pub seed: u64,
    pub turbo: TrustRegionConfig,
    pub arp: ArpConfig,
    pub bandit: BanditConfig,
    pub surrogate: SurrogateConfig,
    pub flags: Flags,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            max_iterations: 16,
            init_points: None,
            seed: 0,
            turbo: TrustRegionConfig::default(),
            arp: ArpConfig::default(),
            bandit: BanditConfig::default(),
            surrogate: SurrogateConfig::default(),
            flags: Flags::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Plain single-region trust-region BO: every feature flag off and the
    /// untuned minimum length of 2^-7.
    pub fn baseline() -> Self {
        Self {
            flags: Flags::NONE,
            turbo: TrustRegionConfig { length_min: 2f64.powi(-7), ..TrustRegionConfig::default() },
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn init_points(&self, dim: usize) -> usize {
        let b = self.batch_size.max(1);
        self.init_points.unwrap_or_else(|| (2 * (dim + 1)).min(3 * b)).max(b).max(2)
    }

    pub fn check(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.init_points.is_some_and(|n| n < self.batch_size) {
            return Err(Error::Config("init_points must be at least batch_size".into()));
        }
        self.turbo.check()?;
        self.arp.check()?;
        self.surrogate.check()?;
        if !(self.bandit.prior_alpha >= 1.0 && self.bandit.prior_beta >= 1.0) {
            return Err(Error::Config("bandit priors must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchKind {
    Initial,
    Restart,
    TrustRegion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub point: Point,
    pub warped: WarpedVector,
    /// Objective value; non-finite inputs are stored as `+inf`.
    pub value: f64,
    pub iteration: usize,
    pub arms: Option<Vec<usize>>,
    pub new_best: bool,
    pub imputed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    entries: Vec<Observation>,
}

impl History {
    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the minimum value; ties go to the earliest observation.
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, e) in self.entries.iter().enumerate() {
            if best.is_none_or(|b| e.value < self.entries[b].value) {
                best = Some(i);
            }
        }
        best
    }

    pub fn best_value(&self) -> f64 {
        self.best_index().map_or(f64::INFINITY, |i| self.entries[i].value)
    }

    pub fn imputed_count(&self) -> usize {
        self.entries.iter().filter(|e| e.imputed).count()
    }
}

/// Call counts of the optional pipeline stages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Instrumentation {
    pub gp_fits: usize,
    pub arp_partitions: usize,
    pub bandit_selections: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone)]
struct Pending {
    points: Vec<Point>,
    warped: Vec<WarpedVector>,
    arms: Vec<Option<Vec<usize>>>,
    kind: BatchKind,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    space: SearchSpace,
    config: OptimizerConfig,
    rng: ChaCha8Rng,
    history: History,
    pending: Option<Pending>,
    init_design: Vec<Point>,
    region: Option<TrustRegionState>,
    restart_pending: bool,
    bandit: BanditState,
    batches: usize,
    stats: Instrumentation,
}

impl Optimizer {
    pub fn new(space: SearchSpace, config: OptimizerConfig) -> Result<Self> {
        config.check()?;
        let dim = space.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let batch = config.batch_size;
        let n_init = config.init_points(dim).div_ceil(batch) * batch;
        let mut sobol = Sobol::scrambled(dim, rng.random())?;
        let init_design = (0..n_init)
            .map(|_| space.from_unit_cube(&sobol.next_point()))
            .collect::<Result<Vec<_>>>()?;
        let bandit = BanditState::for_space(&space, &config.bandit);
        Ok(Self {
            space,
            config,
            rng,
            history: History::default(),
            pending: None,
            init_design,
            region: None,
            restart_pending: false,
            bandit,
            batches: 0,
            stats: Instrumentation::default(),
        })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn region(&self) -> Option<&TrustRegionState> {
        self.region.as_ref()
    }

    pub fn bandit(&self) -> &BanditState {
        &self.bandit
    }

    pub fn instrumentation(&self) -> Instrumentation {
        self.stats
    }

    /// Number of observed batches.
    pub fn iteration(&self) -> usize {
        self.batches
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    pub fn restart_pending(&self) -> bool {
        self.restart_pending
    }

    fn init_target(&self) -> usize {
        self.init_design.len()
    }

    /// Kind of the next batch `suggest` will produce.
    pub fn next_batch_kind(&self) -> BatchKind {
        if self.history.len() < self.init_target() {
            BatchKind::Initial
        } else if self.restart_pending {
            BatchKind::Restart
        } else {
            BatchKind::TrustRegion
        }
    }

    pub fn suggest(&mut self) -> Result<Vec<Point>> {
        if self.pending.is_some() {
            return Err(Error::Protocol("expected observe: the previous suggestion has not been observed".into()));
        }
        let kind = self.next_batch_kind();
        let batch = match kind {
            BatchKind::Initial => {
                let start = self.history.len();
                let end = (start + self.config.batch_size).min(self.init_design.len());
                let points = self.init_design[start..end].to_vec();
                let warped = points.iter().map(|p| self.space.warp(p)).collect::<Result<Vec<_>>>()?;
                let arms = vec![None; points.len()];
                Pending { points, warped, arms, kind }
            }
            BatchKind::Restart => self.restart_batch()?,
            BatchKind::TrustRegion => self.region_batch()?,
        };
        let points = batch.points.clone();
        self.pending = Some(batch);
        Ok(points)
    }

    fn features(&self, w: &[f64]) -> BlockInput {
        if self.config.flags.mixture_kernel {
            self.space.blocks(w, self.config.surrogate.linear_on_raw)
        } else {
            BlockInput { x: w.to_vec(), y: vec![], z: vec![] }
        }
    }

    fn fit_model(&mut self) -> Result<GpModel> {
        let entries = self.history.entries();
        let worst_finite = entries.iter().map(|e| e.value).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        let fill = if worst_finite.is_finite() { worst_finite } else { 0.0 };
        let targets: Vec<f64> = entries.iter().map(|e| if e.value.is_finite() { e.value } else { fill }).collect();
        let inputs = entries.iter().map(|e| self.features(&e.warped.0)).collect();
        let seed = self.rng.random();
        self.stats.gp_fits += 1;
        GpModel::fit(inputs, &targets, &self.config.surrogate, seed)
    }

    /// Lengthscales over all D warped coordinates for shaping the region.
    fn region_lengthscales(&self, model: &GpModel) -> Vec<f64> {
        if !self.config.flags.mixture_kernel {
            return model.params.lengthscales.clone();
        }
        let ls = &model.params.lengthscales;
        let fill = if ls.is_empty() { 1.0 } else { (ls.iter().map(|l| l.ln()).sum::<f64>() / ls.len() as f64).exp() };
        let mut full = vec![fill; self.space.dim()];
        for (&dim, &l) in self.space.real_indices().iter().zip(ls) {
            full[dim] = l;
        }
        full
    }

    fn partition(&mut self) -> Option<RegionClassifier> {
        if !self.config.flags.arp || self.history.len() < self.config.arp.activation_threshold(self.space.dim()) {
            return None;
        }
        let entries = self.history.entries();
        let worst_finite = entries.iter().map(|e| e.value).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        let values: Vec<f64> =
            entries.iter().map(|e| if e.value.is_finite() { e.value } else { worst_finite.max(0.0) + 1.0 }).collect();
        let points: Vec<WarpedVector> = entries.iter().map(|e| e.warped.clone()).collect();
        self.stats.arp_partitions += 1;
        arp::partition(&points, &values, &self.config.arp).ok()
    }

    fn restart_batch(&mut self) -> Result<Pending> {
        let model = self.fit_model()?;
        let pool: Vec<Point> = match self.partition() {
            Some(clf) => arp::restart_samples(&clf, &self.space, &mut self.rng, RESTART_POOL).points,
            None => (0..self.config.batch_size).map(|_| self.space.random_point(&mut self.rng)).collect(),
        };
        let mut points = Vec::with_capacity(self.config.batch_size);
        let mut warped = Vec::with_capacity(self.config.batch_size);
        if self.config.flags.arp && pool.len() == RESTART_POOL {
            let pool_w = pool.iter().map(|p| self.space.warp(p)).collect::<Result<Vec<_>>>()?;
            let feats: Vec<BlockInput> = pool_w.iter().map(|w| self.features(&w.0)).collect();
            let means = model.predict_mean(&feats)?;
            let center = (0..pool.len()).min_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b))).unwrap();
            points.push(pool[center].clone());
            warped.push(pool_w[center].clone());
            for (i, (p, w)) in pool.into_iter().zip(pool_w).enumerate() {
                if points.len() == self.config.batch_size {
                    break;
                }
                if i != center {
                    points.push(p);
                    warped.push(w);
                }
            }
        } else {
            for p in pool.into_iter().take(self.config.batch_size) {
                warped.push(self.space.warp(&p)?);
                points.push(p);
            }
        }
        if let Some(region) = self.region.as_mut() {
            region.center = warped[0].clone();
        }
        let arms = vec![None; points.len()];
        Ok(Pending { points, warped, arms, kind: BatchKind::Restart })
    }

    fn region_batch(&mut self) -> Result<Pending> {
        let model = self.fit_model()?;
        let region = self.region.clone().expect("trust region initialized after the initial design");
        let ls = self.region_lengthscales(&model);
        let mut candidates = turbo::generate_candidates(&region, Some(&ls), &self.config.turbo, &mut self.rng)?;

        if let Some(clf) = self.partition() {
            let keep = arp::filter_candidates(&clf, &candidates, &region.center, self.config.arp.fallback_fraction);
            candidates = keep.into_iter().map(|i| candidates[i].clone()).collect();
        }

        let feats: Vec<BlockInput> = candidates.iter().map(|c| self.features(&c.0)).collect();
        let batch = self.config.batch_size;
        let draws = model.sample(&feats, batch, &mut self.rng)?;
        let mut chosen: Vec<usize> = Vec::with_capacity(batch);
        let mut snapped: Vec<WarpedVector> = Vec::with_capacity(batch);
        for s in 0..batch {
            let row = draws.row(s);
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            let mut pick = None;
            for &i in &order {
                if chosen.contains(&i) {
                    continue;
                }
                let w = self.space.snap(&candidates[i])?;
                if snapped.contains(&w) {
                    continue;
                }
                pick = Some((i, w));
                break;
            }
            // every candidate already taken: allow a repeat of the draw's minimum
            let (i, w) = match pick {
                Some(p) => p,
                None => (order[0], self.space.snap(&candidates[order[0]])?),
            };
            chosen.push(i);
            snapped.push(w);
        }

        let mut arms = vec![None; batch];
        if self.config.flags.bandit && !self.bandit.is_empty() {
            for (w, slot) in snapped.iter_mut().zip(arms.iter_mut()) {
                let sel = self.bandit.ts_select(&mut self.rng);
                overwrite_qualitative(w, &sel, &self.space)?;
                self.stats.bandit_selections += 1;
                *slot = Some(sel);
            }
        }
        let points = snapped.iter().map(|w| self.space.unwarp(w)).collect::<Result<Vec<_>>>()?;
        Ok(Pending { points, warped: snapped, arms, kind: BatchKind::TrustRegion })
    }

    /// Reports objective values for the pending batch, in suggestion order.
    pub fn observe(&mut self, points: &[Point], values: &[f64]) -> Result<()> {
        let pending = self
            .pending
            .as_ref()
            .ok_or_else(|| Error::Protocol("expected suggest: no suggestion is pending".into()))?;
        if points.len() != pending.points.len() || values.len() != pending.points.len() {
            return Err(Error::Protocol(format!(
                "expected {} points and values, got {} points and {} values",
                pending.points.len(),
                points.len(),
                values.len()
            )));
        }
        for (i, (p, q)) in points.iter().zip(&pending.points).enumerate() {
            if p != q {
                return Err(Error::Protocol(format!("point {i} does not match the pending suggestion")));
            }
        }
        let pending = self.pending.take().expect("checked above");

        let pre_best = self.history.best_value();
        let iteration = self.batches;
        let mut batch_best: Option<(f64, usize)> = None;
        let mut rewarded: Vec<Vec<usize>> = vec![];
        let mut flags: Vec<bool> = vec![];
        for (k, ((point, warped), (arms, &raw))) in
            pending.points.into_iter().zip(pending.warped).zip(pending.arms.into_iter().zip(values)).enumerate()
        {
            let imputed = !raw.is_finite();
            let value = if imputed { f64::INFINITY } else { raw };
            let new_best = value < pre_best;
            if batch_best.is_none_or(|(v, _)| value < v) {
                batch_best = Some((value, k));
            }
            if let Some(a) = &arms {
                rewarded.push(a.clone());
                flags.push(new_best);
            }
            self.history.entries.push(Observation { point, warped, value, iteration, arms, new_best, imputed });
        }
        if self.config.flags.bandit && !rewarded.is_empty() {
            self.bandit.update_rewards(&rewarded, &flags, &self.config.bandit)?;
        }
        self.batches += 1;

        let offset = self.history.len() - values.len();
        let (best_value, best_k) = batch_best.expect("nonempty batch");
        let best_warped = self.history.entries[offset + best_k].warped.clone();
        match pending.kind {
            BatchKind::Initial => {
                if self.history.len() >= self.init_target() && self.region.is_none() {
                    let i = self.history.best_index().expect("nonempty history");
                    let e = &self.history.entries[i];
                    self.region = Some(TrustRegionState::new(e.warped.clone(), e.value, &self.config.turbo));
                }
            }
            BatchKind::Restart => {
                let region = self.region.as_mut().expect("restart follows an active region");
                region.center = best_warped;
                region.best_value = best_value;
                self.restart_pending = false;
            }
            BatchKind::TrustRegion => {
                let dim = self.space.dim();
                let tol = self.config.turbo.failure_tolerance(dim, self.config.batch_size);
                let region = self.region.as_mut().expect("region batches need an active region");
                turbo::update_region(region, best_value, &best_warped, &self.config.turbo, tol);
                if turbo::needs_restart(region, &self.config.turbo) {
                    let center = region.center.clone();
                    region.restart(center, f64::INFINITY, &self.config.turbo);
                    self.restart_pending = true;
                    self.stats.restarts += 1;
                }
            }
        }
        Ok(())
    }

    /// Minimum-value observation; ties go to the earliest.
    pub fn best(&self) -> Result<(Point, f64)> {
        let i = self.history.best_index().ok_or(Error::EmptyHistory)?;
        let e = &self.history.entries[i];
        Ok((e.point.clone(), e.value))
    }
}
