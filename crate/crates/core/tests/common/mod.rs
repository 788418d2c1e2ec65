//! Test-only oracles, independent of the library's solver and split code.

#![allow(dead_code)]

/// Solution of the SVM dual found by accelerated projected gradient ascent.
pub struct ReferenceSolution {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub bias: f64,
    pub iterations: usize,
}

pub fn kernel(a: &[f64], b: &[f64], gamma: Option<f64>) -> f64 {
    match gamma {
        None => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        Some(g) => (-g * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp(),
    }
}

fn dual_objective(q: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * q[i][j] * alpha[j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 <= a <= c, y^T a = 0}`.
///
/// `a(mu) = clip(v - mu * y, 0, c)` and `h(mu) = y^T a(mu)` is piecewise
/// linear and non-increasing, so the root is found exactly between two
/// consecutive breakpoints.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c)).collect() };
    let h = |mu: f64| -> f64 { at(mu).iter().zip(y).map(|(ai, yi)| ai * yi).sum() };
    let mut breaks: Vec<f64> = v
        .iter()
        .zip(y)
        .flat_map(|(vi, yi)| [vi / yi, (vi - c) / yi])
        .collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut prev = breaks[0];
    let mut h_prev = h(prev);
    if h_prev <= 0.0 {
        return at(prev);
    }
    for &mu in &breaks[1..] {
        let h_mu = h(mu);
        if h_mu <= 0.0 {
            let root = if h_prev == h_mu { mu } else { prev + (mu - prev) * h_prev / (h_prev - h_mu) };
            return at(root);
        }
        prev = mu;
        h_prev = h_mu;
    }
    at(prev)
}

/// Largest eigenvalue of `P Q P`, with `P` the projector onto `y^perp`.
fn projected_lipschitz(q: &[Vec<f64>], y: &[f64]) -> f64 {
    let n = y.len();
    let yy: f64 = y.iter().map(|v| v * v).sum();
    let proj = |v: &mut Vec<f64>| {
        let d: f64 = v.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / yy;
        for (vi, yi) in v.iter_mut().zip(y) {
            *vi -= d * yi;
        }
    };
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.618).collect();
    proj(&mut v);
    let mut lambda = 0.0;
    for _ in 0..500 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let mut w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[i][j] * v[j]).sum()).collect();
        proj(&mut w);
        lambda = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        v = w;
    }
    lambda.max(1e-12) * 1.01
}

/// Runs projected gradient ascent (FISTA with adaptive restart) on the dual
/// until the iterates stop moving.
pub fn reference_dual_solver(x: &[Vec<f64>], y: &[i8], c: f64, gamma: Option<f64>) -> ReferenceSolution {
    let n = x.len();
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let k: Vec<Vec<f64>> = x.iter().map(|a| x.iter().map(|b| kernel(a, b, gamma)).collect()).collect();
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| yf[i] * yf[j] * k[i][j]).collect()).collect();
    let step = 1.0 / projected_lipschitz(&q, &yf);
    let grad = |a: &[f64]| -> Vec<f64> { (0..n).map(|i| 1.0 - (0..n).map(|j| q[i][j] * a[j]).sum::<f64>()).collect() };

    let mut alpha = vec![0.0; n];
    let mut momentum_point = alpha.clone();
    let mut t = 1.0f64;
    let mut obj = dual_objective(&q, &alpha);
    let mut iterations = 0;
    let mut restarted = true;
    while iterations < 400_000 {
        iterations += 1;
        // Stationarity: norm of the projected-gradient mapping at alpha.
        let g = grad(&alpha);
        let probe = project(&alpha.iter().zip(&g).map(|(a, gi)| a + step * gi).collect::<Vec<_>>(), &yf, c);
        let moved = probe.iter().zip(&alpha).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if moved <= 1e-13 * (1.0 + c) {
            break;
        }
        let g = grad(&momentum_point);
        let v: Vec<f64> = momentum_point.iter().zip(&g).map(|(a, gi)| a + step * gi).collect();
        let next = project(&v, &yf, c);
        let next_obj = dual_objective(&q, &next);
        if next_obj < obj && !restarted {
            // Restart the momentum when the objective goes backwards. The
            // step after a restart is a plain projected-gradient step.
            t = 1.0;
            momentum_point = alpha.clone();
            restarted = true;
            continue;
        }
        restarted = false;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        momentum_point = next
            .iter()
            .zip(&alpha)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        t = t_next;
        alpha = next;
        obj = next_obj;
    }

    let eps = 1e-9 * c;
    let yg: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| alpha[j] * yf[j] * k[i][j]).sum::<f64>() - yf[i])
        .collect();
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > eps && alpha[i] < c - eps).collect();
    let rho = if free.is_empty() {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        for i in 0..n {
            let at_upper = alpha[i] >= c - eps;
            let pushes_up = (at_upper && yf[i] < 0.0) || (!at_upper && yf[i] > 0.0);
            if pushes_up {
                ub = ub.min(yg[i]);
            } else {
                lb = lb.max(yg[i]);
            }
        }
        0.5 * (ub + lb)
    } else {
        free.iter().map(|&i| yg[i]).sum::<f64>() / free.len() as f64
    };
    ReferenceSolution {
        objective: obj,
        alpha,
        bias: -rho,
        iterations,
    }
}

pub fn reference_decision(x: &[Vec<f64>], y: &[i8], sol: &ReferenceSolution, gamma: Option<f64>, p: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(&sol.alpha)
        .map(|((xi, &yi), a)| a * f64::from(yi) * kernel(xi, p, gamma))
        .sum::<f64>()
        + sol.bias
}

/// Seeded random binary problem with `n <= 6`, `D <= 3`, both classes present.
pub fn random_binary_problem(rng: &mut impl rand::Rng) -> (Vec<Vec<f64>>, Vec<i8>) {
    let n = rng.random_range(2..=6);
    let d = rng.random_range(1..=3);
    loop {
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
        if y.contains(&1) && y.contains(&-1) {
            return (x, y);
        }
    }
}

/// Fixed evaluation grid over `[-2.5, 2.5]^d`.
pub fn test_grid(d: usize) -> Vec<Vec<f64>> {
    let ticks: Vec<f64> = (0..7).map(|i| -2.5 + i as f64 * (5.0 / 6.0) + 0.0137).collect();
    let mut grid = vec![vec![]];
    for _ in 0..d {
        grid = grid
            .into_iter()
            .flat_map(|p| ticks.iter().map(move |&t| [p.clone(), vec![t]].concat()))
            .collect();
    }
    grid
}

/// Joint (cognitive, depression) counts of the 160-session clinical fixture.
pub const REFERENCE_COOCCURRENCE: [[usize; 3]; 3] = [[20, 5, 4], [15, 18, 15], [57, 13, 13]];

/// 160 sessions laid out as `REFERENCE_COOCCURRENCE`, no feature files.
pub fn reference_corpus() -> cogscreen::corpus::Corpus {
    let mut sessions = Vec::new();
    for (cog, row) in REFERENCE_COOCCURRENCE.iter().enumerate() {
        for (dep, &n) in row.iter().enumerate() {
            for i in 0..n {
                let id = format!("s{cog}{dep}-{i:02}");
                sessions.push(cogscreen::corpus::SessionRecord {
                    session_id: id.clone(),
                    speaker_id: id,
                    corpus_id: "NSC".into(),
                    test_id: "sVFT".into(),
                    cognitive: cog as u8,
                    depression: Some(dep as u8),
                    test_score: None,
                    features: Default::default(),
                });
            }
        }
    }
    cogscreen::corpus::Corpus::from_sessions_unchecked(sessions).unwrap()
}

/// Predictions on `reference_corpus` where 46 of the 57 (DEM, no depression)
/// sessions are predicted DEM and the other 11 MCI. Five (HC, no
/// depression) sessions are also predicted DEM; every other session is
/// predicted correctly.
pub fn planted_predictions(corpus: &cogscreen::corpus::Corpus) -> std::collections::BTreeMap<String, u8> {
    corpus
        .sessions()
        .iter()
        .map(|s| {
            let idx: usize = s.session_id[4..].parse().unwrap();
            let pred = match (s.cognitive, s.depression) {
                (2, Some(0)) if idx >= 46 => 1,
                (0, Some(0)) if idx < 5 => 2,
                _ => s.cognitive,
            };
            (s.session_id.clone(), pred)
        })
        .collect()
}
