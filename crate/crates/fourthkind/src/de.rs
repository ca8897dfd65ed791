//! Differential evolution (rand/1/bin) over an axis-aligned box.
//!
//! The single stochastic global optimizer behind MLE search and the
//! farthest-point oracle. Mutation and crossover consume the random stream
//! sequentially; fitness evaluations run in parallel as pure functions, so
//! results are bit-identical for a given seed regardless of thread count.

use rayon::prelude::*;

use crate::numerics::RandomStream;

/// Differential evolution configuration.
///
/// `pop_size = 0` means automatic: max(20, 15 * dimension).
#[derive(Debug, Clone)]
pub struct DeConfig {
    pub pop_size: usize,
    pub f: f64,
    pub cr: f64,
    pub max_gens: usize,
    pub restarts: usize,
    /// Generations between convergence checks.
    pub window: usize,
    /// Relative improvement below which a window counts as converged.
    pub tol: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            pop_size: 0,
            f: 0.8,
            cr: 0.9,
            max_gens: 300,
            restarts: 3,
            window: 40,
            tol: 1e-12,
        }
    }
}

impl DeConfig {
    pub fn resolved_pop(&self, dim: usize) -> usize {
        let auto = if self.pop_size == 0 {
            (15 * dim).max(20)
        } else {
            self.pop_size
        };
        auto.max(5)
    }
}

#[derive(Debug, Clone)]
pub struct DeResult {
    pub best: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub gens: usize,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn clip(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

/// Minimize `f` over the box, seeding the initial population with `inject`
/// points (clipped to the box) ahead of uniform fills.
pub fn minimize(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    lower: &[f64],
    upper: &[f64],
    cfg: &DeConfig,
    inject: &[Vec<f64>],
    stream: &mut RandomStream,
) -> DeResult {
    let dim = lower.len();
    assert_eq!(dim, upper.len(), "box bound length mismatch");
    let np = cfg.resolved_pop(dim);

    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(np);
    for p in inject.iter().take(np) {
        let mut q = p.clone();
        assert_eq!(q.len(), dim, "injected point dimension mismatch");
        clip(&mut q, lower, upper);
        pop.push(q);
    }
    while pop.len() < np {
        let mut q = Vec::with_capacity(dim);
        for j in 0..dim {
            q.push(stream.uniform_range(lower[j], upper[j]));
        }
        pop.push(q);
    }

    let mut fit: Vec<f64> = pop.par_iter().map(|x| sanitize(f(x))).collect();
    let mut evals = np;
    let mut best_idx = argmin(&fit);
    let mut window_best = fit[best_idx];
    let mut gens = 0;

    for gen in 1..=cfg.max_gens {
        gens = gen;
        // sequential mutation/crossover so the draw order is fixed
        let mut trials: Vec<Vec<f64>> = Vec::with_capacity(np);
        for i in 0..np {
            let (r1, r2, r3) = distinct_triple(stream, np, i);
            let j_rand = stream.index(dim);
            let mut t = pop[i].clone();
            for j in 0..dim {
                let cross = stream.uniform() < cfg.cr || j == j_rand;
                if cross {
                    t[j] = pop[r1][j] + cfg.f * (pop[r2][j] - pop[r3][j]);
                }
            }
            clip(&mut t, lower, upper);
            trials.push(t);
        }
        let trial_fit: Vec<f64> = trials.par_iter().map(|x| sanitize(f(x))).collect();
        evals += np;
        for i in 0..np {
            if trial_fit[i] <= fit[i] {
                pop[i] = trials[i].clone();
                fit[i] = trial_fit[i];
            }
        }
        best_idx = argmin(&fit);

        if gen % cfg.window == 0 {
            let best = fit[best_idx];
            if (window_best - best) <= cfg.tol * (1.0 + best.abs()) {
                break;
            }
            window_best = best;
        }
    }

    DeResult {
        best: pop[best_idx].clone(),
        value: fit[best_idx],
        evals,
        gens,
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut idx = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[idx] {
            idx = i;
        }
    }
    idx
}

fn distinct_triple(stream: &mut RandomStream, np: usize, avoid: usize) -> (usize, usize, usize) {
    debug_assert!(np >= 4, "population too small for rand/1");
    let mut pick = |taken: &[usize]| loop {
        let r = stream.index(np);
        if r != avoid && !taken.contains(&r) {
            return r;
        }
    };
    let r1 = pick(&[]);
    let r2 = pick(&[r1]);
    let r3 = pick(&[r1, r2]);
    (r1, r2, r3)
}
