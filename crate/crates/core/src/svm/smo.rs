//! Binary soft-margin SVM trained by sequential minimal optimization.
//!
//! Solves the dual in minimization form
//!
//! ```text
//! min_a  1/2 a^T Q a - e^T a     s.t.  0 <= a_i <= C,  y^T a = 0
//! ```
//!
//! with `Q_ij = y_i y_j K(x_i, x_j)`. Each step takes the maximal violator
//! as the first index and the partner with the largest second-order gain as
//! the second, solves the two-variable subproblem analytically and updates
//! the gradient `G = Q a - e`.
//!
//! Large `C` is reached through a ladder of smaller boxes, and every few
//! hundred updates a conjugate-gradient step on the free variables
//! shortcuts the slow tail of pairwise updates.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::kernel::KernelConfig;
use super::SvmError;

/// Largest training set that gets a precomputed full kernel matrix.
pub const FULL_CACHE_LIMIT: usize = 4096;
const ROW_CACHE_ROWS: usize = 1024;
const TAU: f64 = 1e-12;
const LADDER_FACTOR: f64 = 10.0;
const POLISH_INTERVAL: u64 = 500;

/// Feasibility slack for `|sum_i a_i y_i|` on a trained model.
pub const EQUALITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoConfig {
    /// Stop once the maximal KKT violation drops below this.
    pub tolerance: f64,
    /// Hard cap on pair updates; hitting it is an error.
    pub max_updates: u64,
}

impl Default for SmoConfig {
    /// Stops at a KKT violation of 1e-6. At 1e-3 the dual objective is only
    /// accurate to about 1e-4 (relative) on small problems and decision
    /// values near zero can change sign.
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_updates: 1_000_000,
        }
    }
}

/// Trained two-class SVM. Decision value `f(x) = sum_i coef_i k(sv_i, x) + bias`,
/// positive values favour the first class of `class_pair`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmBinaryModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for every support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelConfig,
    pub c: f64,
    /// Multiclass labels mapped to +1 and -1, when trained as part of a
    /// one-vs-one ensemble.
    pub class_pair: Option<(u8, u8)>,
    /// Dual objective `e^T a - 1/2 a^T Q a` at the solution.
    pub dual_objective: f64,
    pub updates: u64,
    /// Maximal KKT violation when the solver stopped.
    pub kkt_violation: f64,
}

impl SvmBinaryModel {
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, c)| c * self.kernel.apply(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// +1 or -1.
    pub fn predict_sign(&self, x: &[f64]) -> i8 {
        if self.decision_value(x) > 0.0 {
            1
        } else {
            -1
        }
    }
}

/// Full multiplier vector from a training run, in training order.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub model: SvmBinaryModel,
}

enum QCache<'a> {
    Full(Vec<Vec<f64>>),
    Rows {
        x: &'a [Vec<f64>],
        y: &'a [f64],
        kernel: KernelConfig,
        rows: HashMap<usize, Vec<f64>>,
        order: VecDeque<usize>,
    },
}

impl<'a> QCache<'a> {
    fn new(x: &'a [Vec<f64>], y: &'a [f64], kernel: KernelConfig) -> Self {
        if x.len() <= FULL_CACHE_LIMIT {
            QCache::Full((0..x.len()).map(|i| q_row(x, y, &kernel, i)).collect())
        } else {
            QCache::Rows {
                x,
                y,
                kernel,
                rows: HashMap::new(),
                order: VecDeque::new(),
            }
        }
    }

    fn ensure(&mut self, i: usize, pinned: usize) {
        if let QCache::Rows {
            x,
            y,
            kernel,
            rows,
            order,
        } = self
        {
            if rows.contains_key(&i) {
                return;
            }
            while rows.len() >= ROW_CACHE_ROWS {
                let Some(victim) = order.pop_front() else { break };
                if victim == pinned {
                    order.push_back(victim);
                    continue;
                }
                rows.remove(&victim);
            }
            rows.insert(i, q_row(x, y, kernel, i));
            order.push_back(i);
        }
    }

    fn full(&self) -> Option<&[Vec<f64>]> {
        match self {
            QCache::Full(m) => Some(m),
            QCache::Rows { .. } => None,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        match self {
            QCache::Full(m) => &m[i],
            QCache::Rows { rows, .. } => &rows[&i],
        }
    }
}

fn q_row(x: &[Vec<f64>], y: &[f64], kernel: &KernelConfig, i: usize) -> Vec<f64> {
    x.iter()
        .zip(y)
        .map(|(xj, yj)| y[i] * yj * kernel.apply(&x[i], xj))
        .collect()
}

/// Trains a binary SVM on labels in {-1, +1}.
pub fn train_binary(
    x: &[Vec<f64>],
    y: &[i8],
    c: f64,
    kernel: KernelConfig,
) -> Result<SvmBinaryModel, SvmError> {
    train_binary_with(x, y, c, kernel, &SmoConfig::default()).map(|s| s.model)
}

pub fn train_binary_with(
    x: &[Vec<f64>],
    y: &[i8],
    c: f64,
    kernel: KernelConfig,
    config: &SmoConfig,
) -> Result<SmoSolution, SvmError> {
    let n = x.len();
    if n != y.len() {
        return Err(SvmError::LengthMismatch {
            samples: n,
            labels: y.len(),
        });
    }
    if n < 2 {
        return Err(SvmError::TooFewSamples(n));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(SvmError::InvalidParameter(format!("C must be positive, got {c}")));
    }
    if let KernelConfig::Rbf { gamma } = kernel {
        KernelConfig::rbf(gamma)?;
    }
    let dim = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != dim) {
        return Err(SvmError::DimMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(SvmError::InvalidParameter(format!("binary labels must be +1/-1, got {bad}")));
    }
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(SvmError::SingleClass);
    }

    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let mut q = QCache::new(x, &yf, kernel);
    let diag: Vec<f64> = (0..n).map(|i| kernel.apply(&x[i], &x[i])).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut updates: u64 = 0;
    let mut violation = f64::INFINITY;
    let mut prev_c: Option<f64> = None;
    for stage_c in c_ladder(c) {
        if let Some(p) = prev_c {
            // a -> k a stays feasible for the larger box, and G = Qa - e
            // becomes k (G + e) - e.
            let k = stage_c / p;
            for (a, g) in alpha.iter_mut().zip(grad.iter_mut()) {
                *a = (*a * k).min(stage_c);
                *g = k * (*g + 1.0) - 1.0;
            }
        }
        violation = smo_loop(&mut q, &diag, &yf, stage_c, &mut alpha, &mut grad, config, &mut updates)?;
        prev_c = Some(stage_c);
    }

    let bias = -compute_rho(&alpha, &grad, &yf, c);
    let equality: f64 = alpha.iter().zip(&yf).map(|(a, y)| a * y).sum();
    if equality.abs() > EQUALITY_TOLERANCE * (1.0 + c) {
        return Err(SvmError::Infeasible(format!("|sum a_i y_i| = {equality:e}")));
    }
    // f = 1/2 a^T (G - e); the dual objective is -f.
    let dual_objective = -0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for (k, &a) in alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(x[k].clone());
            dual_coefs.push(a * yf[k]);
        }
    }
    Ok(SmoSolution {
        alpha,
        model: SvmBinaryModel {
            support_vectors,
            dual_coefs,
            bias,
            kernel,
            c,
            class_pair: None,
            dual_objective,
            updates,
            kkt_violation: violation,
        },
    })
}

/// Successive box sizes ending at `c`, each ten times the previous, so that
/// a large `C` is reached from a nearby solution.
fn c_ladder(c: f64) -> Vec<f64> {
    let mut out = vec![c];
    let mut v = c;
    while v / LADDER_FACTOR >= 1.0 {
        v /= LADDER_FACTOR;
        out.push(v);
    }
    out.reverse();
    out
}

#[allow(clippy::too_many_arguments)]
fn smo_loop(
    q: &mut QCache<'_>,
    diag: &[f64],
    yf: &[f64],
    c: f64,
    alpha: &mut [f64],
    grad: &mut [f64],
    config: &SmoConfig,
    updates: &mut u64,
) -> Result<f64, SvmError> {
    loop {
        let (i, violation) = select_first(alpha, grad, yf, c);
        if violation < config.tolerance {
            return Ok(violation);
        }
        if *updates >= config.max_updates {
            return Err(SvmError::NoConvergence {
                updates: *updates,
                violation,
            });
        }
        if *updates > 0 && *updates % POLISH_INTERVAL == 0 {
            if let Some(qm) = q.full() {
                if polish(qm, yf, c, alpha, grad) {
                    *updates += 1;
                    continue;
                }
            }
        }
        let i = i.expect("violating pair");
        q.ensure(i, usize::MAX);
        let j = select_second(i, alpha, grad, yf, c, diag, q.row(i)).expect("violating pair");
        q.ensure(j, i);
        let (qi, qj) = (q.row(i), q.row(j));

        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_ai, old_aj);
        if yf[i] != yf[j] {
            let quad = positive_or_tau(diag[i] + diag[j] + 2.0 * qi[j]);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = positive_or_tau(diag[i] + diag[j] - 2.0 * qi[j]);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        let (dai, daj) = (ai - old_ai, aj - old_aj);
        debug_assert!(
            {
                let change = grad[i] * dai
                    + grad[j] * daj
                    + 0.5 * (diag[i] * dai * dai + diag[j] * daj * daj)
                    + qi[j] * dai * daj;
                change <= 1e-9 * (1.0 + dai.abs() + daj.abs())
            },
            "dual objective decreased on pair ({i}, {j})"
        );
        alpha[i] = ai;
        alpha[j] = aj;
        for ((g, a), b) in grad.iter_mut().zip(qi).zip(qj) {
            *g += a * dai + b * daj;
        }
        *updates += 1;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Newton-type step on the free variables. With every bounded variable
/// held fixed, the dual restricted to the free set is minimized under the
/// equality constraint by projected conjugate gradients, and the free
/// variables move towards that minimizer as far as the box allows. Returns
/// whether anything moved.
fn polish(qm: &[Vec<f64>], y: &[f64], c: f64, alpha: &mut [f64], grad: &mut [f64]) -> bool {
    let free: Vec<usize> = (0..alpha.len()).filter(|&t| alpha[t] > 0.0 && alpha[t] < c).collect();
    let m = free.len();
    if m < 2 {
        return false;
    }
    let ys: Vec<f64> = free.iter().map(|&t| y[t]).collect();
    let project = |v: &mut [f64]| {
        let s = dot(v, &ys) / m as f64;
        for (a, b) in v.iter_mut().zip(&ys) {
            *a -= s * b;
        }
    };
    let q_times = |v: &[f64]| -> Vec<f64> {
        free.iter()
            .map(|&a| free.iter().zip(v).map(|(&b, x)| qm[a][b] * x).sum())
            .collect()
    };

    let mut r: Vec<f64> = free.iter().map(|&t| -grad[t]).collect();
    project(&mut r);
    let r0 = dot(&r, &r);
    if r0 == 0.0 {
        return false;
    }
    let mut d = vec![0.0; m];
    let mut p = r.clone();
    let mut rr = r0;
    // Largest step allowed along `d` before the curvature bound, for a
    // flat descent direction.
    let mut t_cap = 1.0;
    for _ in 0..m {
        let mut qp = q_times(&p);
        project(&mut qp);
        let curv = dot(&p, &qp);
        if curv <= 1e-12 * dot(&p, &p) {
            if d.iter().all(|v| *v == 0.0) {
                d = p;
                t_cap = if curv > 0.0 { rr / curv } else { f64::INFINITY };
            }
            break;
        }
        let a = rr / curv;
        for k in 0..m {
            d[k] += a * p[k];
            r[k] -= a * qp[k];
        }
        let next = dot(&r, &r);
        if next <= 1e-24 * r0 {
            break;
        }
        let beta = next / rr;
        for k in 0..m {
            p[k] = r[k] + beta * p[k];
        }
        rr = next;
    }

    // CG drifts off the constraint by rounding; pull it back.
    project(&mut d);
    let mut t = t_cap;
    let mut hit = None;
    for (k, &idx) in free.iter().enumerate() {
        let room = if d[k] > 0.0 {
            (c - alpha[idx]) / d[k]
        } else if d[k] < 0.0 {
            -alpha[idx] / d[k]
        } else {
            continue;
        };
        if room < t {
            t = room;
            hit = Some(k);
        }
    }
    if !(t > 0.0 && t.is_finite()) {
        return false;
    }
    let old: Vec<f64> = free.iter().map(|&idx| alpha[idx]).collect();
    for (k, &idx) in free.iter().enumerate() {
        alpha[idx] = (alpha[idx] + t * d[k]).clamp(0.0, c);
    }
    if let Some(k) = hit {
        alpha[free[k]] = if d[k] > 0.0 { c } else { 0.0 };
    }
    let step: Vec<f64> = free.iter().zip(&old).map(|(&idx, o)| alpha[idx] - o).collect();
    for (row, g) in qm.iter().zip(grad.iter_mut()) {
        *g += free.iter().zip(&step).map(|(&b, s)| row[b] * s).sum::<f64>();
    }
    true
}

#[inline]
fn positive_or_tau(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        TAU
    }
}

/// First index of the working set: the maximal violator from the "up"
/// set, and the violation `max_up(-yG) + max_low(yG)`. Ties go to the
/// lowest index so the result depends only on the data order.
fn select_first(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> (Option<usize>, f64) {
    let mut up_max = f64::NEG_INFINITY;
    let mut up_idx = None;
    let mut low_max = f64::NEG_INFINITY;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        let (in_up, in_low) = if y[t] > 0.0 {
            (alpha[t] < c, alpha[t] > 0.0)
        } else {
            (alpha[t] > 0.0, alpha[t] < c)
        };
        if in_up && -yg > up_max {
            up_max = -yg;
            up_idx = Some(t);
        }
        if in_low && yg > low_max {
            low_max = yg;
        }
    }
    (up_idx, up_max + low_max)
}

/// Second index: among "low" indices that violate together with `i`, the
/// one promising the largest objective gain `b^2 / a` of the two-variable
/// step. Ties go to the lowest index.
fn select_second(i: usize, alpha: &[f64], grad: &[f64], y: &[f64], c: f64, diag: &[f64], qi: &[f64]) -> Option<usize> {
    let g_max = -y[i] * grad[i];
    let mut best = None;
    let mut best_gain = f64::NEG_INFINITY;
    for t in 0..alpha.len() {
        let in_low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
        if !in_low {
            continue;
        }
        let b = g_max + y[t] * grad[t];
        if b <= 0.0 {
            continue;
        }
        // K_ii + K_tt - 2 K_it, with Q_it = y_i y_t K_it.
        let a = positive_or_tau(diag[i] + diag[t] - 2.0 * y[i] * y[t] * qi[t]);
        let gain = b * b / a;
        if gain > best_gain {
            best_gain = gain;
            best = Some(t);
        }
    }
    best
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut free_sum = 0.0;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
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
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
