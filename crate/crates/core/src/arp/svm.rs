//! Soft-margin SVM with a Gaussian radial kernel, trained by SMO with
//! second-order working-set selection.

use crate::error::{Error, Result};

/// Box constraint of the dual problem.
pub const C: f64 = 1.0;
const TAU: f64 = 1e-12;
const STOP_EPS: f64 = 1e-3;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `1 / median` of the pairwise squared distances, or 1 when the points
/// coincide.
pub fn median_gamma(points: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = Vec::with_capacity(points.len() * points.len() / 2);
    for i in 0..points.len() {
        for j in 0..i {
            d.push(sq_dist(&points[i], &points[j]));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 0 { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    if median > 0.0 {
        1.0 / median
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionClassifier {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub kernel_gamma: f64,
    pub trained_on: usize,
    pub training_accuracy: f64,
    pub iterations: usize,
}

impl RegionClassifier {
    /// Signed decision value; positive means the good region.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, c)| c * (-self.kernel_gamma * sq_dist(sv, x)).exp())
            .sum::<f64>()
            + self.bias
    }

    pub fn is_good(&self, x: &[f64]) -> bool {
        self.decision(x) >= 0.0
    }
}

/// Trains on `points` with labels `good` (`true` maps to +1). `max_passes`
/// bounds the SMO iterations at `max_passes * n`.
pub fn fit_classifier(points: &[Vec<f64>], good: &[bool], max_passes: usize) -> Result<RegionClassifier> {
    let n = points.len();
    if good.len() != n {
        return Err(Error::Shape { expected: n, got: good.len() });
    }
    if n < 2 || good.iter().all(|&g| g) || good.iter().all(|&g| !g) {
        return Err(Error::InvalidLabels);
    }
    let gamma = median_gamma(points);
    let y: Vec<f64> = good.iter().map(|&g| if g { 1.0 } else { -1.0 }).collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = (-gamma * sq_dist(&points[i], &points[j])).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < C) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt < 0.0 && a < C) || (yt > 0.0 && a > 0.0);

    let max_iter = max_passes.max(1) * n;
    let mut iter = 0;
    while iter < max_iter {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if in_up(alpha[t], y[t]) && -y[t] * grad[t] > g_max {
                g_max = -y[t] * grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            break;
        }
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            g_min = g_min.min(v);
            let b = g_max - v;
            if b > 0.0 {
                let a = k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t];
                let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                if obj < obj_min {
                    obj_min = obj;
                    j = t;
                }
            }
        }
        if j == usize::MAX || g_max - g_min < STOP_EPS {
            break;
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (k[i * n + i] + k[j * n + j] + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > C {
                    alpha[i] = C;
                    alpha[j] = C - diff;
                }
            } else if alpha[j] > C {
                alpha[j] = C;
                alpha[i] = C + diff;
            }
        } else {
            let quad = (k[i * n + i] + k[j * n + j] - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > C {
                if alpha[i] > C {
                    alpha[i] = C;
                    alpha[j] = sum - C;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > C {
                if alpha[j] > C {
                    alpha[j] = C;
                    alpha[i] = sum - C;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
        iter += 1;
    }

    // offset from free multipliers, else the midpoint of the feasible interval
    let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= C {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else {
        0.0
    };

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(points[t].clone());
            dual_coefs.push(alpha[t] * y[t]);
        }
    }
    let mut clf = RegionClassifier {
        support_vectors,
        dual_coefs,
        bias: -rho,
        kernel_gamma: gamma,
        trained_on: n,
        training_accuracy: 0.0,
        iterations: iter,
    };
    let correct = points.iter().zip(good).filter(|(p, &g)| clf.is_good(p) == g).count();
    clf.training_accuracy = correct as f64 / n as f64;
    Ok(clf)
}
