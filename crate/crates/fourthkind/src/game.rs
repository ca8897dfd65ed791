//! The posterior minmax game over a likelihood region.
//!
//! The optimal estimate and its risk are the center and squared radius of
//! the minimum enclosing ball of the region's image under the QoI map. The
//! ball is found by alternating exact miniballs of a small working set with
//! global farthest-point searches; the worst-case posterior is a discrete
//! measure on the final support whose mean reproduces the center, found by
//! nonnegative least squares. The duality gap radius^2 - variance certifies
//! the solution.

use serde::{Deserialize, Serialize};

use crate::de::DeConfig;
use crate::farthest::{farthest_point, MeritConfig};
use crate::miniball::{miniball_exact, prune_support_indices, Ball};
use crate::numerics::RandomStream;
use crate::region::LikelihoodRegion;
use crate::{Error, Result};

/// Weight below which an atom is considered numerically absent.
const ATOM_DROP_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GameConfig {
    /// Relative enlargement accepted by the stopping rule.
    pub epsilon0: f64,
    /// Relative quality factor granted to the farthest-point oracle.
    pub delta: f64,
    pub de: DeConfig,
    pub merit: MeritConfig,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            epsilon0: 0.01,
            delta: 0.01,
            de: DeConfig::default(),
            merit: MeritConfig::default(),
        }
    }
}

impl GameConfig {
    /// Hard bound on main-loop iterations implied by the approximation
    /// parameters.
    pub fn iteration_cap(&self) -> usize {
        (16.0 / (self.epsilon0 * self.epsilon0) * (1.0 + 2.0 * self.delta)).ceil() as usize
    }

    /// Hard bound on the working-set size: the pruned support plus the
    /// incoming point, never beyond what the iteration cap allows.
    pub fn working_set_cap(&self, out_dim: usize) -> usize {
        (2 + self.iteration_cap()).min(out_dim + 2)
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon0 > 0.0) || !self.epsilon0.is_finite() {
            return Err(Error::Domain("epsilon0 must be positive".into()));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::Domain("delta must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Weighted point mass collection in QoI space.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub weights: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl DiscreteMeasure {
    pub fn mean(&self) -> Vec<f64> {
        weighted_mean(&self.weights, &self.points)
    }

    pub fn variance(&self) -> f64 {
        variance_of(&self.weights, &self.points)
    }
}

/// Barycenter of the points under the weights.
pub fn weighted_mean(weights: &[f64], points: &[Vec<f64>]) -> Vec<f64> {
    let d = points.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for (w, p) in weights.iter().zip(points) {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += w * v;
        }
    }
    mean
}

/// Total second central moment: sum of w_i ||z_i - mean||^2.
pub fn variance_of(weights: &[f64], points: &[Vec<f64>]) -> f64 {
    let mean = weighted_mean(weights, points);
    weights
        .iter()
        .zip(points)
        .map(|(w, p)| {
            w * p
                .iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum()
}

/// Duality gap bound: ball risk minus posterior variance. Nonnegative up to
/// roundoff whenever the measure is supported on the ball.
pub fn certificate(radius: f64, weights: &[f64], points: &[Vec<f64>]) -> f64 {
    radius * radius - variance_of(weights, points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSolution {
    pub alpha: f64,
    pub beta: Option<f64>,
    pub decision: Vec<f64>,
    pub risk: f64,
    pub raw_radius: f64,
    pub enlarged_radius: f64,
    pub atoms: Vec<Atom>,
    pub gap: f64,
    pub iterations: usize,
    pub max_working_set: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
}

impl GameSolution {
    pub fn posterior(&self) -> DiscreteMeasure {
        DiscreteMeasure {
            weights: self.atoms.iter().map(|a| a.weight).collect(),
            points: self.atoms.iter().map(|a| a.phi.clone()).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        crate::fmt::to_json_string(self)
    }
}

/// Solve the minmax game on `region` for its model's QoI map.
///
/// `beta` is carried through to the report unchanged. Randomness is drawn
/// from labeled substreams of `stream`, so equal seeds give bitwise equal
/// solutions.
pub fn solve_game(
    region: &LikelihoodRegion,
    beta: Option<f64>,
    cfg: &GameConfig,
    stream: &RandomStream,
) -> Result<GameSolution> {
    cfg.validate()?;
    let model = region.model();
    let qoi = model.qoi.clone();
    let out_dim = qoi.output_dim(model.dim());
    let cap = cfg.iteration_cap();
    let ws_cap = cfg.working_set_cap(out_dim);

    // two bootstrap searches: away from the anchor's image, then away from
    // the point found, giving a near-diameter starting set
    let start = region
        .anchor()
        .unwrap_or_else(|| model.parameter_box().center());
    let first = farthest_point(
        region,
        &qoi,
        &qoi.apply(&start),
        &cfg.de,
        &cfg.merit,
        &stream.split_index("farthest", 0),
    )?;
    let second = farthest_point(
        region,
        &qoi,
        &first.phi,
        &cfg.de,
        &cfg.merit,
        &stream.split_index("farthest", 1),
    )?;
    let mut working: Vec<(Vec<f64>, Vec<f64>)> = vec![
        (first.theta, first.phi),
        (second.theta, second.phi),
    ];
    let mut max_working_set = working.len();

    let mut ball = reduce_working_set(&mut working)?;
    let mut iterations = 0usize;
    let mut radius_trace: Vec<f64> = vec![ball.radius];
    loop {
        if iterations >= cap {
            let tail: Vec<String> = radius_trace
                .iter()
                .rev()
                .take(6)
                .rev()
                .map(|r| format!("{r:.6e}"))
                .collect();
            return Err(Error::Nonconverged {
                iterations,
                message: format!(
                    "enclosing ball failed to settle; recent radii [{}]",
                    tail.join(", ")
                ),
            });
        }
        iterations += 1;
        let far = farthest_point(
            region,
            &qoi,
            &ball.center,
            &cfg.de,
            &cfg.merit,
            &stream.split_index("farthest", 1 + iterations as u64),
        )?;
        if far.distance <= (1.0 + cfg.epsilon0) * ball.radius + 1e-12 * (1.0 + ball.radius) {
            break;
        }
        working.push((far.theta, far.phi));
        max_working_set = max_working_set.max(working.len());
        if working.len() > ws_cap {
            return Err(Error::State(format!(
                "working set grew to {} beyond its cap {ws_cap}",
                working.len()
            )));
        }
        ball = reduce_working_set(&mut working)?;
        radius_trace.push(ball.radius);
    }

    // weights on the support images reproducing the center
    let images: Vec<Vec<f64>> = working.iter().map(|(_, z)| z.clone()).collect();
    let weights = solve_weights(&images, &ball.center)?;

    let mut atoms: Vec<Atom> = working
        .iter()
        .zip(&weights)
        .filter(|(_, w)| **w > ATOM_DROP_TOL)
        .map(|((theta, phi), w)| Atom {
            weight: *w,
            theta: theta.clone(),
            phi: phi.clone(),
        })
        .collect();
    if atoms.is_empty() {
        return Err(Error::Inconsistent(
            "every support weight vanished".into(),
        ));
    }
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    for a in &mut atoms {
        a.weight /= total;
    }

    let kept_weights: Vec<f64> = atoms.iter().map(|a| a.weight).collect();
    let kept_points: Vec<Vec<f64>> = atoms.iter().map(|a| a.phi.clone()).collect();
    let decision = weighted_mean(&kept_weights, &kept_points);
    let risk = ball.radius * ball.radius;
    let gap = certificate(ball.radius, &kept_weights, &kept_points);

    Ok(GameSolution {
        alpha: region.alpha(),
        beta,
        decision,
        risk,
        raw_radius: ball.radius,
        enlarged_radius: (1.0 + cfg.epsilon0) * (1.0 + cfg.delta) * ball.radius,
        atoms,
        gap,
        iterations,
        max_working_set,
        epsilon: cfg.epsilon0,
        delta: cfg.delta,
        seed: stream.seed(),
    })
}

/// Miniball of the working images, then retain only supporting pairs.
fn reduce_working_set(working: &mut Vec<(Vec<f64>, Vec<f64>)>) -> Result<Ball> {
    let images: Vec<Vec<f64>> = working.iter().map(|(_, z)| z.clone()).collect();
    let (ball, _) = miniball_exact(&images)?;
    let keep = prune_support_indices(&images, &ball);
    *working = keep.iter().map(|&i| working[i].clone()).collect();
    Ok(ball)
}

/// Nonnegative weights summing to one whose barycenter of `points` is
/// `center`. Among valid weight vectors the variance-maximizing one is
/// returned; failure to reproduce the center within 1e-8 relative is an
/// inconsistency error.
pub fn solve_weights(points: &[Vec<f64>], center: &[f64]) -> Result<Vec<f64>> {
    let m = points.len();
    if m == 0 {
        return Err(Error::Domain("no support points given".into()));
    }
    let d = center.len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != d {
            return Err(Error::Domain(format!(
                "support point {i} has dimension {}, expected {d}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("support point {i} is not finite")));
        }
    }
    if center.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("center is not finite".into()));
    }

    // least squares rows: one per coordinate plus a sum row scaled to the
    // data so neither part dominates
    let scale = 1.0 + center.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let mut a: Vec<Vec<f64>> = (0..d)
        .map(|r| points.iter().map(|p| p[r]).collect())
        .collect();
    a.push(vec![scale; m]);
    let mut b: Vec<f64> = center.to_vec();
    b.push(scale);

    let mut w = nnls(&a, &b);
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Inconsistent(
            "nonnegative weights sum to zero".into(),
        ));
    }
    for v in &mut w {
        *v /= total;
    }
    maximize_variance_on_fiber(points, &mut w);

    let mean = weighted_mean(&w, points);
    let err = mean
        .iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm = center.iter().map(|v| v * v).sum::<f64>().sqrt();
    if err > 1e-8 * (1.0 + norm) {
        return Err(Error::Inconsistent(format!(
            "support cannot reproduce the center: residual {err:.3e}"
        )));
    }
    Ok(w)
}

/// Lawson-Hanson active set for min ||Ax - b|| with x >= 0.
fn nnls(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let rows = a.len();
    let cols = a[0].len();
    let scale = a
        .iter()
        .flatten()
        .chain(b)
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(1.0);
    let grad_tol = 1e-12 * scale * scale;
    let mut x = vec![0.0f64; cols];
    let mut passive = vec![false; cols];
    for _ in 0..64 * cols {
        let resid: Vec<f64> = (0..rows)
            .map(|i| b[i] - a[i].iter().zip(&x).map(|(v, xi)| v * xi).sum::<f64>())
            .collect();
        let mut entering: Option<(usize, f64)> = None;
        for j in 0..cols {
            if passive[j] {
                continue;
            }
            let g: f64 = (0..rows).map(|i| a[i][j] * resid[i]).sum();
            if g > grad_tol && entering.is_none_or(|(_, bg)| g > bg) {
                entering = Some((j, g));
            }
        }
        let Some((enter, _)) = entering else { break };
        passive[enter] = true;
        for _ in 0..64 * cols {
            let s = passive_ls(a, b, &passive);
            let mut alpha = 1.0f64;
            let mut blocking: Option<usize> = None;
            for j in 0..cols {
                if passive[j] && s[j] <= 0.0 {
                    let t = if x[j] - s[j] > 0.0 {
                        x[j] / (x[j] - s[j])
                    } else {
                        0.0
                    };
                    if t < alpha {
                        alpha = t;
                        blocking = Some(j);
                    }
                }
            }
            let Some(out) = blocking else {
                x = s;
                break;
            };
            for j in 0..cols {
                if passive[j] {
                    x[j] = (x[j] + alpha * (s[j] - x[j])).max(0.0);
                }
            }
            x[out] = 0.0;
            passive[out] = false;
        }
    }
    x
}

/// Least squares over the passive columns by normal equations; dependent
/// columns resolve to zero.
fn passive_ls(a: &[Vec<f64>], b: &[f64], passive: &[bool]) -> Vec<f64> {
    let rows = a.len();
    let cols = a[0].len();
    let idx: Vec<usize> = (0..cols).filter(|&j| passive[j]).collect();
    let k = idx.len();
    let mut normal = vec![vec![0.0f64; k]; k];
    let mut rhs = vec![0.0f64; k];
    for p in 0..k {
        for q in 0..k {
            normal[p][q] = (0..rows).map(|i| a[i][idx[p]] * a[i][idx[q]]).sum();
        }
        rhs[p] = (0..rows).map(|i| a[i][idx[p]] * b[i]).sum();
    }
    let sol = solve_full_pivot(normal, rhs);
    let mut full = vec![0.0; cols];
    for (p, &j) in idx.iter().enumerate() {
        full[j] = sol[p];
    }
    full
}

/// Square solve with full pivoting; columns below the rank cutoff get zero.
// indexed loops: the elimination reads one row while writing another
#[allow(clippy::needless_range_loop)]
fn solve_full_pivot(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut col_of: Vec<usize> = (0..n).collect();
    let mut rank = n;
    for k in 0..n {
        let mut pivot = (k, k, 0.0f64);
        for r in k..n {
            for c in k..n {
                if a[r][c].abs() > pivot.2 {
                    pivot = (r, c, a[r][c].abs());
                }
            }
        }
        if pivot.2 <= 1e-12 * scale {
            rank = k;
            break;
        }
        a.swap(k, pivot.0);
        b.swap(k, pivot.0);
        for row in a.iter_mut() {
            row.swap(k, pivot.1);
        }
        col_of.swap(k, pivot.1);
        for r in k + 1..n {
            let f = a[r][k] / a[k][k];
            for c in k..n {
                a[r][c] -= f * a[k][c];
            }
            b[r] -= f * b[k];
        }
    }
    let mut solved = vec![0.0; n];
    for k in (0..rank).rev() {
        let mut s = b[k];
        for c in k + 1..rank {
            s -= a[k][c] * solved[c];
        }
        solved[k] = s / a[k][k];
    }
    let mut out = vec![0.0; n];
    for k in 0..rank {
        out[col_of[k]] = solved[k];
    }
    out
}

/// Move along null directions of the barycenter constraints to a vertex
/// maximizing the (linear on each fiber) variance.
fn maximize_variance_on_fiber(points: &[Vec<f64>], w: &mut [f64]) {
    let m = points.len();
    let d = points[0].len();
    let norm2: Vec<f64> = points
        .iter()
        .map(|p| p.iter().map(|v| v * v).sum())
        .collect();
    let coef_scale = 1.0 + norm2.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for _ in 0..m {
        let active: Vec<usize> = (0..m).filter(|&i| w[i] > 0.0).collect();
        if active.len() <= 1 {
            break;
        }
        let constraints: Vec<Vec<f64>> = (0..=d)
            .map(|r| {
                active
                    .iter()
                    .map(|&i| if r < d { points[i][r] } else { 1.0 })
                    .collect()
            })
            .collect();
        let Some(nu) = null_direction(&constraints) else {
            break;
        };
        let coef: f64 = nu.iter().zip(&active).map(|(v, &i)| v * norm2[i]).sum();
        let sign = if coef > 1e-12 * coef_scale {
            1.0
        } else if coef < -1e-12 * coef_scale {
            -1.0
        } else {
            break;
        };
        let mut step = f64::INFINITY;
        for (v, &i) in nu.iter().zip(&active) {
            let dv = sign * v;
            if dv < 0.0 {
                step = step.min(w[i] / -dv);
            }
        }
        if !step.is_finite() || !(step > 0.0) {
            break;
        }
        for (v, &i) in nu.iter().zip(&active) {
            w[i] = (w[i] + step * sign * v).max(0.0);
        }
        for &i in &active {
            if w[i] < 1e-14 {
                w[i] = 0.0;
            }
        }
    }
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        for v in w.iter_mut() {
            *v /= total;
        }
    }
}

/// Nonzero kernel vector of the (rows x cols) matrix, or None at full
/// column rank.
// indexed loops: the elimination reads one row while writing another
#[allow(clippy::needless_range_loop)]
fn null_direction(c: &[Vec<f64>]) -> Option<Vec<f64>> {
    let rows = c.len();
    let cols = c[0].len();
    let mut m: Vec<Vec<f64>> = c.to_vec();
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut pivot_row_of: Vec<Option<usize>> = vec![None; cols];
    let mut used = vec![false; rows];
    for col in 0..cols {
        let pick = (0..rows)
            .filter(|&r| !used[r])
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()));
        let Some(pr) = pick else { continue };
        if m[pr][col].abs() <= 1e-10 * scale {
            continue;
        }
        used[pr] = true;
        pivot_row_of[col] = Some(pr);
        for r in 0..rows {
            if r != pr && m[r][col] != 0.0 {
                let f = m[r][col] / m[pr][col];
                for cc in 0..cols {
                    m[r][cc] -= f * m[pr][cc];
                }
                m[r][col] = 0.0;
            }
        }
    }
    let free = (0..cols).find(|&j| pivot_row_of[j].is_none())?;
    let mut nu = vec![0.0; cols];
    nu[free] = 1.0;
    for col in 0..cols {
        if let Some(pr) = pivot_row_of[col] {
            nu[col] = -m[pr][free] / m[pr][col];
        }
    }
    Some(nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dataset, LikelihoodMode, ModelSpec};

    fn gaussian_region(alpha: f64) -> LikelihoodRegion {
        let model = ModelSpec::gaussian_mean(1.0, 3.0);
        let data = Dataset::new(vec![vec![1.5]]).unwrap();
        LikelihoodRegion::new(model, data, alpha, LikelihoodMode::Surrogate, None).unwrap()
    }

    #[test]
    fn symmetric_pair_weights() {
        let w = solve_weights(&[vec![-1.0], vec![1.0]], &[0.0]).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-10 && (w[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn equilateral_thirds() {
        let s = 3.0f64.sqrt();
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, s]];
        let center = vec![1.0, 1.0 / s];
        let w = solve_weights(&pts, &center).unwrap();
        for v in &w {
            assert!((v - 1.0 / 3.0).abs() < 1e-9, "weights {w:?}");
        }
    }

    #[test]
    fn variance_examples() {
        assert!((variance_of(&[0.5, 0.5], &[vec![-3.0], vec![3.0]]) - 9.0).abs() < 1e-12);
        let v = variance_of(&[0.25, 0.75], &[vec![0.0], vec![1.0]]);
        assert!((v - 3.0 / 16.0).abs() < 1e-12);
        assert_eq!(variance_of(&[1.0], &[vec![2.5, 1.0]]), 0.0);
    }

    #[test]
    fn certificate_of_tight_pair() {
        let gap = certificate(3.0, &[0.5, 0.5], &[vec![-3.0], vec![3.0]]);
        assert!(gap.abs() < 1e-12);
    }

    #[test]
    fn degenerate_fiber_takes_variance_endpoint() {
        let pts = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let w = solve_weights(&pts, &[0.0]).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-9, "weights {w:?}");
        assert!(w[1].abs() < 1e-9, "weights {w:?}");
        assert!((w[2] - 0.5).abs() < 1e-9, "weights {w:?}");
        assert!((variance_of(&w, &pts) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unreachable_center_is_inconsistent() {
        let err = solve_weights(&[vec![1.0], vec![2.0]], &[5.0]).unwrap_err();
        assert!(matches!(err, Error::Inconsistent(_)));
    }

    #[test]
    fn interval_game_midband() {
        // region [0.5, 2.5]: decision 1.5, risk 1
        let region = gaussian_region((-0.5f64).exp());
        let cfg = GameConfig::default();
        let sol = solve_game(&region, None, &cfg, &RandomStream::new(21)).unwrap();
        assert!((sol.decision[0] - 1.5).abs() <= 0.02, "decision {:?}", sol.decision);
        assert!((sol.risk - 1.0).abs() <= 0.02, "risk {}", sol.risk);
        assert!(sol.iterations <= cfg.iteration_cap());
        assert!(sol.max_working_set <= cfg.working_set_cap(1));
        assert!(sol.gap >= -1e-9 && sol.gap <= 3.0 * cfg.epsilon0 * sol.risk + 1e-12);
    }

    #[test]
    fn interval_game_alpha_one_is_exact() {
        let region = gaussian_region(1.0);
        let sol = solve_game(
            &region,
            Some(1.0),
            &GameConfig::default(),
            &RandomStream::new(22),
        )
        .unwrap();
        assert_eq!(sol.decision, vec![1.5]);
        assert_eq!(sol.risk, 0.0);
        assert_eq!(sol.gap, 0.0);
        assert_eq!(sol.atoms.len(), 1);
        assert_eq!(sol.atoms[0].weight, 1.0);
        assert_eq!(sol.beta, Some(1.0));
    }

    #[test]
    fn interval_game_box_saturated() {
        // alpha 1e-12 floods past the box, leaving the interval [-3, 3]
        let region = gaussian_region(1e-12);
        let sol = solve_game(
            &region,
            None,
            &GameConfig::default(),
            &RandomStream::new(23),
        )
        .unwrap();
        assert!(sol.decision[0].abs() <= 0.06, "decision {:?}", sol.decision);
        assert!((sol.risk - 9.0).abs() <= 0.18, "risk {}", sol.risk);
    }

    #[test]
    fn saddle_identity_is_exact() {
        let region = gaussian_region(0.3);
        let sol = solve_game(
            &region,
            None,
            &GameConfig::default(),
            &RandomStream::new(24),
        )
        .unwrap();
        let posterior = sol.posterior();
        let mean = posterior.mean();
        for (a, b) in mean.iter().zip(&sol.decision) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let w_sum: f64 = sol.atoms.iter().map(|a| a.weight).sum();
        assert!((w_sum - 1.0).abs() < 1e-12);
        assert!((sol.enlarged_radius - 1.0201 * sol.raw_radius).abs() < 1e-12);
    }

    #[test]
    fn two_coin_game_matches_grid_geometry() {
        let model = ModelSpec::coins(&[4, 6]);
        let data = Dataset::new(vec![vec![1.0, 5.0]]).unwrap();
        let mle = model
            .find_mle(&data, 0, &mut RandomStream::new(7))
            .unwrap();
        let region =
            LikelihoodRegion::new(model, data, 0.5, LikelihoodMode::Exact, Some(mle)).unwrap();
        let cfg = GameConfig::default();
        let sol = solve_game(&region, None, &cfg, &RandomStream::new(25)).unwrap();

        // grid image of the region and its exact miniball as an oracle
        let m = 200;
        let mut image: Vec<Vec<f64>> = Vec::new();
        for i in 0..=m {
            for j in 0..=m {
                let theta = vec![i as f64 / m as f64, j as f64 / m as f64];
                if region.contains(&theta) {
                    image.push(theta);
                }
            }
        }
        let (oracle, _) = miniball_exact(&image).unwrap();
        let slack = 2.0f64.sqrt() / m as f64 + 1e-6;
        assert!(
            sol.raw_radius <= oracle.radius + slack,
            "raw {} oracle {}",
            sol.raw_radius,
            oracle.radius
        );
        assert!(
            oracle.radius <= sol.enlarged_radius + slack,
            "oracle {} enlarged {}",
            oracle.radius,
            sol.enlarged_radius
        );
        let tol = crate::farthest::feasibility_tol(&region);
        for atom in &sol.atoms {
            assert!(region.violation(&atom.theta) <= tol);
        }
        assert!(sol.atoms.len() <= 3);
        assert!(sol.gap >= -1e-9 && sol.gap <= 3.0 * cfg.epsilon0 * sol.risk + 1e-12);
    }

    #[test]
    fn json_report_is_stable() {
        let region = gaussian_region(0.3);
        let sol = solve_game(
            &region,
            Some(0.25),
            &GameConfig::default(),
            &RandomStream::new(26),
        )
        .unwrap();
        let text = sol.to_json().unwrap();
        let again = solve_game(
            &region,
            Some(0.25),
            &GameConfig::default(),
            &RandomStream::new(26),
        )
        .unwrap();
        assert_eq!(text, again.to_json().unwrap());
        let parsed: GameSolution = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.decision[0].to_bits(), sol.decision[0].to_bits());
        assert_eq!(parsed.seed, 26);
        for key in [
            "\"alpha\"",
            "\"beta\"",
            "\"decision\"",
            "\"risk\"",
            "\"raw_radius\"",
            "\"enlarged_radius\"",
            "\"atoms\"",
            "\"gap\"",
            "\"iterations\"",
            "\"max_working_set\"",
            "\"epsilon\"",
            "\"delta\"",
            "\"seed\"",
        ] {
            assert!(text.contains(key), "missing {key} in {text}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let region = gaussian_region(0.3);
        let cfg = GameConfig {
            epsilon0: 0.0,
            ..GameConfig::default()
        };
        let err = solve_game(&region, None, &cfg, &RandomStream::new(27)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }
}
