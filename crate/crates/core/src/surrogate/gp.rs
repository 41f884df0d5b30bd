//! Gaussian-process regression with the mixture kernel.
//!
//! Hyperparameters are chosen by maximizing the log marginal likelihood with
//! a derivative-free, multi-start coordinate search: golden-section steps on
//! each log-scaled continuous hyperparameter, and a grid scan for λ.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::kernel::{
    indicator_unchecked, matern52_from_distance, mixture_unchecked, BlockLayout, IndicatorMode, KernelParams,
    LINEAR_VARIANCE,
};
use crate::error::{Error, Result};
use crate::space::BlockInput;

const JITTER_START: f64 = 1e-8;
const JITTER_CAP: f64 = 1e-2;
const STD_FLOOR: f64 = 1e-8;
const LN_2PI: f64 = 1.837_877_066_409_345_3;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub lengthscale_bounds: (f64, f64),
    pub signal_variance_bounds: (f64, f64),
    pub noise_variance_bounds: (f64, f64),
    pub lambda_grid: Vec<f64>,
    pub default_lambda: f64,
    pub default_lengthscale: f64,
    pub default_noise_variance: f64,
    pub n_starts: usize,
    /// Upper bound on likelihood evaluations per fit.
    pub max_evaluations: usize,
    /// Golden-section evaluations per coordinate visit.
    pub golden_steps: usize,
    pub sweeps: usize,
    pub indicator: IndicatorMode,
    /// Feed raw integer values to the linear kernel instead of warped ones.
    pub linear_on_raw: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            lengthscale_bounds: (0.005, 2.0),
            signal_variance_bounds: (0.05, 20.0),
            noise_variance_bounds: (1e-6, 1e-2),
            lambda_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            default_lambda: 0.5,
            default_lengthscale: 0.5,
            default_noise_variance: 1e-4,
            n_starts: 4,
            max_evaluations: 400,
            golden_steps: 7,
            sweeps: 2,
            indicator: IndicatorMode::Mean,
            linear_on_raw: false,
        }
    }
}

impl SurrogateConfig {
    pub fn check(&self) -> Result<()> {
        let ok_bounds = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi.is_finite();
        if !ok_bounds(self.lengthscale_bounds) || !ok_bounds(self.signal_variance_bounds) {
            return Err(Error::Config("surrogate bounds must satisfy 0 < lo <= hi".into()));
        }
        if !ok_bounds(self.noise_variance_bounds) || self.noise_variance_bounds.0 < 1e-8 {
            return Err(Error::Config("noise variance bounds must satisfy 1e-8 <= lo <= hi".into()));
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::Config("lambda grid must be a nonempty subset of [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.default_lambda) {
            return Err(Error::Config("default lambda outside [0, 1]".into()));
        }
        if self.n_starts == 0 || self.max_evaluations == 0 {
            return Err(Error::Config("n_starts and max_evaluations must be positive".into()));
        }
        Ok(())
    }

    pub fn default_params(&self, n_lengthscales: usize) -> KernelParams {
        let (ll, lh) = self.lengthscale_bounds;
        let (sl, sh) = self.signal_variance_bounds;
        let (nl, nh) = self.noise_variance_bounds;
        KernelParams::new(
            vec![self.default_lengthscale.clamp(ll, lh); n_lengthscales],
            1.0f64.clamp(sl, sh),
            self.default_lambda,
            self.default_noise_variance.clamp(nl, nh),
        )
    }
}

/// Full Gram matrix `M[i][j] = k(h_i, h_j)` without the noise term.
pub fn gram_matrix(inputs: &[BlockInput], params: &KernelParams, mode: IndicatorMode) -> DMatrix<f64> {
    let n = inputs.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let k = mixture_unchecked(&inputs[i], &inputs[j], params, mode);
            m[(i, j)] = k;
            m[(j, i)] = k;
        }
    }
    m
}

/// Cholesky factorization with escalating diagonal jitter. Returns the factor
/// and the jitter that was needed.
pub(crate) fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = m.clone().cholesky() {
        return Ok((c, 0.0));
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_CAP * (1.0 + 1e-12) {
        let mut a = m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
        if let Some(c) = a.cholesky() {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!("Cholesky failed with jitter up to {JITTER_CAP:e}")))
}

/// Hyperparameter-independent pieces of the Gram matrix.
struct FitCache {
    n: usize,
    layout: BlockLayout,
    /// Per upper-triangle pair (i <= j), squared differences of each real dim.
    sq_diffs: Vec<f64>,
    linear: Vec<f64>,
    indicator: Vec<f64>,
}

impl FitCache {
    fn new(inputs: &[BlockInput], mode: IndicatorMode) -> Self {
        let n = inputs.len();
        let layout = BlockLayout::of(&inputs[0]);
        let pairs = n * (n + 1) / 2;
        let mut sq_diffs = Vec::with_capacity(pairs * layout.x);
        let mut linear = Vec::with_capacity(pairs);
        let mut indicator = Vec::with_capacity(pairs);
        for i in 0..n {
            for j in 0..=i {
                let (a, b) = (&inputs[i], &inputs[j]);
                sq_diffs.extend(a.x.iter().zip(&b.x).map(|(p, q)| (p - q) * (p - q)));
                linear.push(LINEAR_VARIANCE * super::kernel::dot(&a.y, &b.y));
                indicator.push(indicator_unchecked(&a.z, &b.z, mode));
            }
        }
        Self { n, layout, sq_diffs, linear, indicator }
    }

    fn covariance(&self, params: &KernelParams) -> DMatrix<f64> {
        let p = self.layout.x;
        let inv_sq: Vec<f64> = params.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let mut m = DMatrix::zeros(self.n, self.n);
        let mut pair = 0;
        for i in 0..self.n {
            for j in 0..=i {
                let km = (p > 0).then(|| {
                    let d2: f64 = self.sq_diffs[pair * p..(pair + 1) * p].iter().zip(&inv_sq).map(|(d, w)| d * w).sum();
                    matern52_from_distance(d2.sqrt(), params.signal_variance)
                });
                let kl = (self.layout.y > 0).then(|| self.linear[pair]);
                let ki = (self.layout.z > 0).then(|| self.indicator[pair]);
                let k = super::kernel::combine(km, kl, ki, params.lambda) + if i == j { params.noise_variance } else { 0.0 };
                m[(i, j)] = k;
                m[(j, i)] = k;
                pair += 1;
            }
        }
        m
    }
}

fn log_marginal_likelihood(chol: &Cholesky<f64, Dyn>, targets: &DVector<f64>) -> (f64, DVector<f64>) {
    let alpha = chol.solve(targets);
    let n = targets.len() as f64;
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let lml = -0.5 * targets.dot(&alpha) - log_det_half - 0.5 * n * LN_2PI;
    (lml, alpha)
}

#[derive(Debug, Clone)]
pub struct GpModel {
    pub params: KernelParams,
    pub indicator: IndicatorMode,
    pub inputs: Vec<BlockInput>,
    /// Standardized targets.
    pub targets: DVector<f64>,
    pub cholesky: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub target_mean: f64,
    pub target_std: f64,
    pub jitter: f64,
    pub log_marginal_likelihood: f64,
    /// Log marginal likelihood of every hyperparameter probe visited during
    /// fitting, in visit order. Failed factorizations are recorded as -inf.
    pub probes: Vec<f64>,
}

struct Search<'a> {
    cache: &'a FitCache,
    targets: &'a DVector<f64>,
    budget: usize,
    probes: Vec<f64>,
}

impl Search<'_> {
    fn exhausted(&self) -> bool {
        self.probes.len() >= self.budget
    }

    fn eval(&mut self, params: &KernelParams) -> f64 {
        let k = self.cache.covariance(params);
        let lml = match k.cholesky() {
            Some(c) => {
                let v = log_marginal_likelihood(&c, self.targets).0;
                if v.is_finite() {
                    v
                } else {
                    f64::NEG_INFINITY
                }
            }
            None => f64::NEG_INFINITY,
        };
        self.probes.push(lml);
        lml
    }
}

/// Log-scaled continuous hyperparameters visited by the coordinate search.
#[derive(Clone, Copy)]
enum Coord {
    Lengthscale(usize),
    Signal,
    Noise,
}

fn set_coord(p: &mut KernelParams, c: Coord, log_value: f64) {
    let v = log_value.exp();
    match c {
        Coord::Lengthscale(i) => p.lengthscales[i] = v,
        Coord::Signal => p.signal_variance = v,
        Coord::Noise => p.noise_variance = v,
    }
}

impl GpModel {
    /// Fits the GP on `inputs` (all sharing one block layout) and raw targets.
    pub fn fit(inputs: Vec<BlockInput>, targets: &[f64], config: &SurrogateConfig, seed: u64) -> Result<Self> {
        let n = inputs.len();
        if n < 2 {
            return Err(Error::Input(format!("need at least 2 observations, got {n}")));
        }
        if targets.len() != n {
            return Err(Error::Shape { expected: n, got: targets.len() });
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::Input("non-finite target".into()));
        }
        let layout = BlockLayout::of(&inputs[0]);
        if inputs.iter().any(|h| BlockLayout::of(h) != layout) {
            return Err(Error::Input("inputs have inconsistent block layouts".into()));
        }

        let mean = targets.iter().sum::<f64>() / n as f64;
        let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt().max(STD_FLOOR);
        let standardized = DVector::from_iterator(n, targets.iter().map(|t| (t - mean) / std));

        let cache = FitCache::new(&inputs, config.indicator);
        let mut search = Search { cache: &cache, targets: &standardized, budget: config.max_evaluations, probes: vec![] };
        let best = optimize_hyperparameters(&mut search, layout, config, seed);
        let probes = std::mem::take(&mut search.probes);
        drop(search);

        let k = cache.covariance(&best);
        let (chol, jitter) = cholesky_with_jitter(&k)?;
        let (lml, alpha) = log_marginal_likelihood(&chol, &standardized);
        Ok(Self {
            params: best,
            indicator: config.indicator,
            inputs,
            targets: standardized,
            cholesky: chol.l(),
            alpha,
            target_mean: mean,
            target_std: std,
            jitter,
            log_marginal_likelihood: lml,
            probes,
        })
    }

    /// Builds a model with fixed hyperparameters (no search).
    pub fn with_params(inputs: Vec<BlockInput>, targets: &[f64], params: KernelParams, indicator: IndicatorMode) -> Result<Self> {
        params.check()?;
        let config = SurrogateConfig { indicator, ..SurrogateConfig::default() };
        let n = inputs.len();
        if n == 0 || targets.len() != n {
            return Err(Error::Shape { expected: n.max(1), got: targets.len() });
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::Input("non-finite target".into()));
        }
        let mean = targets.iter().sum::<f64>() / n as f64;
        let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt().max(STD_FLOOR);
        let standardized = DVector::from_iterator(n, targets.iter().map(|t| (t - mean) / std));
        let cache = FitCache::new(&inputs, config.indicator);
        let (chol, jitter) = cholesky_with_jitter(&cache.covariance(&params))?;
        let (lml, alpha) = log_marginal_likelihood(&chol, &standardized);
        Ok(Self {
            params,
            indicator,
            inputs,
            targets: standardized,
            cholesky: chol.l(),
            alpha,
            target_mean: mean,
            target_std: std,
            jitter,
            log_marginal_likelihood: lml,
            probes: vec![lml],
        })
    }

    /// Log marginal likelihood of the model's standardized data under other
    /// hyperparameters.
    pub fn log_likelihood_at(&self, params: &KernelParams) -> Option<f64> {
        let cache = FitCache::new(&self.inputs, self.indicator);
        let chol = cache.covariance(params).cholesky()?;
        Some(log_marginal_likelihood(&chol, &self.targets).0)
    }

    pub fn n_train(&self) -> usize {
        self.inputs.len()
    }

    fn check_queries(&self, queries: &[BlockInput]) -> Result<()> {
        let layout = BlockLayout::of(&self.inputs[0]);
        for q in queries {
            let l = BlockLayout::of(q);
            if l != layout {
                return Err(Error::Shape { expected: layout.x + layout.y + layout.z, got: l.x + l.y + l.z });
            }
        }
        Ok(())
    }

    fn cross(&self, queries: &[BlockInput]) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.inputs.len(), queries.len());
        for (j, q) in queries.iter().enumerate() {
            for (i, h) in self.inputs.iter().enumerate() {
                k[(i, j)] = mixture_unchecked(h, q, &self.params, self.indicator);
            }
        }
        k
    }

    fn solve_lower(&self, rhs: DMatrix<f64>) -> DMatrix<f64> {
        let mut v = rhs;
        self.cholesky.solve_lower_triangular_mut(&mut v);
        v
    }

    pub fn predict_mean(&self, queries: &[BlockInput]) -> Result<Vec<f64>> {
        self.check_queries(queries)?;
        let ks = self.cross(queries);
        Ok((ks.transpose() * &self.alpha).iter().map(|m| self.target_mean + self.target_std * m).collect())
    }

    /// Posterior mean and marginal variance (de-standardized).
    pub fn predict(&self, queries: &[BlockInput]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_queries(queries)?;
        let ks = self.cross(queries);
        let mean = (ks.transpose() * &self.alpha).iter().map(|m| self.target_mean + self.target_std * m).collect();
        let v = self.solve_lower(ks);
        let s2 = self.target_std * self.target_std;
        let var = queries
            .iter()
            .enumerate()
            .map(|(j, q)| {
                let prior = mixture_unchecked(q, q, &self.params, self.indicator);
                (s2 * (prior - v.column(j).norm_squared())).max(0.0)
            })
            .collect();
        Ok((mean, var))
    }

    fn raw_posterior(&self, queries: &[BlockInput]) -> (DVector<f64>, DMatrix<f64>) {
        let ks = self.cross(queries);
        let mean = (ks.transpose() * &self.alpha).map(|m| self.target_mean + self.target_std * m);
        let v = self.solve_lower(ks);
        let prior = gram_matrix(queries, &self.params, self.indicator);
        let mut cov = (prior - v.transpose() * v) * (self.target_std * self.target_std);
        symmetrize(&mut cov);
        (mean, cov)
    }

    /// Joint posterior over `queries`. The covariance is symmetrized and its
    /// negative eigenvalues clipped to zero.
    pub fn posterior(&self, queries: &[BlockInput]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_queries(queries)?;
        if queries.is_empty() {
            return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
        }
        let (mean, cov) = self.raw_posterior(queries);
        let eig = SymmetricEigen::new(cov);
        if eig.eigenvalues.iter().any(|e| !e.is_finite()) {
            return Err(Error::Numerical("posterior covariance eigen-decomposition failed".into()));
        }
        let clipped = eig.eigenvalues.map(|e| e.max(0.0));
        let mut cov = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        symmetrize(&mut cov);
        Ok((mean, cov))
    }

    /// Draws `count` joint posterior samples at `queries`; row `s` holds sample `s`.
    pub fn sample<R: Rng + ?Sized>(&self, queries: &[BlockInput], count: usize, rng: &mut R) -> Result<DMatrix<f64>> {
        self.check_queries(queries)?;
        if queries.is_empty() {
            return Err(Error::Input("no query points to sample".into()));
        }
        let m = queries.len();
        let (mean, cov) = self.raw_posterior(queries);
        let factor = sampling_factor(cov)?;
        let z = DMatrix::from_fn(m, count, |_, _| rng.sample::<f64, _>(StandardNormal));
        let draws = factor * z;
        Ok(DMatrix::from_fn(count, m, |s, j| mean[j] + draws[(j, s)]))
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// A matrix `F` with `F Fᵀ ≈ cov`. Tries Cholesky with a small relative
/// jitter ladder first, then falls back to a clipped eigen-decomposition.
fn sampling_factor(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = cov.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    for rel in [0.0, 1e-12, 1e-10, 1e-8] {
        let mut a = cov.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += rel * scale;
        }
        if let Some(c) = a.cholesky() {
            return Ok(c.l());
        }
    }
    let eig = SymmetricEigen::new(cov);
    if eig.eigenvalues.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numerical("posterior covariance factorization failed".into()));
    }
    let roots = eig.eigenvalues.map(|e| e.max(0.0).sqrt());
    Ok(eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

fn optimize_hyperparameters(search: &mut Search<'_>, layout: BlockLayout, config: &SurrogateConfig, seed: u64) -> KernelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = layout.x;
    let mut coords: Vec<(Coord, f64, f64)> = Vec::new();
    let (ll, lh) = config.lengthscale_bounds;
    let (sl, sh) = config.signal_variance_bounds;
    let (nl, nh) = config.noise_variance_bounds;
    if p > 0 {
        coords.extend((0..p).map(|i| (Coord::Lengthscale(i), ll.ln(), lh.ln())));
        coords.push((Coord::Signal, sl.ln(), sh.ln()));
    }
    coords.push((Coord::Noise, nl.ln(), nh.ln()));
    let search_lambda = layout.present() >= 2 && config.lambda_grid.len() > 1;

    let defaults = config.default_params(p);
    let mut best = defaults.clone();
    let mut best_lml = search.eval(&best);

    for start in 0..config.n_starts {
        let mut cur = if start == 0 {
            defaults.clone()
        } else {
            let mut c = defaults.clone();
            for &(coord, lo, hi) in &coords {
                set_coord(&mut c, coord, rng.random_range(lo..=hi));
            }
            if search_lambda {
                c.lambda = config.lambda_grid[rng.random_range(0..config.lambda_grid.len())];
            }
            c
        };
        if search.exhausted() {
            break;
        }
        let mut cur_lml = if start == 0 { best_lml } else { search.eval(&cur) };
        for _ in 0..config.sweeps {
            if search_lambda {
                for &lambda in &config.lambda_grid {
                    if lambda == cur.lambda || search.exhausted() {
                        continue;
                    }
                    let cand = KernelParams { lambda, ..cur.clone() };
                    let v = search.eval(&cand);
                    if v > cur_lml {
                        cur = cand;
                        cur_lml = v;
                    }
                }
            }
            for &(coord, lo, hi) in &coords {
                if search.exhausted() {
                    break;
                }
                golden_section(search, &mut cur, &mut cur_lml, coord, lo, hi, config.golden_steps);
            }
        }
        if cur_lml > best_lml {
            best = cur;
            best_lml = cur_lml;
        }
    }
    best
}

/// Maximizes the likelihood along one log-scaled coordinate over `[lo, hi]`,
/// keeping the incumbent unless a probe beats it.
fn golden_section(
    search: &mut Search<'_>,
    cur: &mut KernelParams,
    cur_lml: &mut f64,
    coord: Coord,
    lo: f64,
    hi: f64,
    steps: usize,
) {
    if hi - lo <= 0.0 || steps == 0 {
        return;
    }
    let mut probe = cur.clone();
    let mut eval_at = |search: &mut Search<'_>, t: f64| {
        set_coord(&mut probe, coord, t);
        (search.eval(&probe), probe.clone())
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, pc) = eval_at(search, c);
    let mut best = (fc, pc);
    if search.exhausted() {
        if best.0 > *cur_lml {
            (*cur_lml, *cur) = best;
        }
        return;
    }
    let (mut fd, pd) = eval_at(search, d);
    if fd > best.0 {
        best = (fd, pd);
    }
    for _ in 2..steps {
        if search.exhausted() {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            let (f, p) = eval_at(search, c);
            fc = f;
            if f > best.0 {
                best = (f, p);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            let (f, p) = eval_at(search, d);
            fd = f;
            if f > best.0 {
                best = (f, p);
            }
        }
    }
    if best.0 > *cur_lml {
        *cur_lml = best.0;
        *cur = best.1;
    }
}
