//! Exact minimum enclosing ball of finite point sets.
//!
//! Move-to-front Welzl recursion with the ball through a candidate support
//! solved as a linear system in the affine frame of the first support point.
//! Degenerate (affinely dependent) supports are handled by a full-pivot
//! elimination with a rank cutoff, so the solve is total. Support sets are
//! reduced to at most n + 1 points by scanning in list order and removing
//! the first point whose absence leaves the ball unchanged.

use crate::{Error, Result};

/// Practical dimension cap: the solver never needs more, and candidate
/// enumeration oracles stop being testable far earlier.
pub const MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn distance(&self, p: &[f64]) -> f64 {
        dist(&self.center, p)
    }

    /// Enclosure test with relative slack.
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.distance(p) <= self.radius + tol * (1.0 + self.radius)
    }
}

/// Boundary points determining a ball, at most n + 1 of them.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    pub points: Vec<Vec<f64>>,
}

/// Centers within 1e-9 and radii within 1e-9, both absolute.
pub fn ball_equal(a: &Ball, b: &Ball) -> bool {
    (a.radius - b.radius).abs() <= 1e-9 && dist(&a.center, &b.center) <= 1e-9
}

/// Minimum enclosing ball with its reduced support set.
pub fn miniball_exact(points: &[Vec<f64>]) -> Result<(Ball, SupportSet)> {
    let dim = check_points(points)?;
    let ball = welzl_ball(points, dim);
    let idx = prune_support_indices(points, &ball);
    let support = SupportSet {
        points: idx.iter().map(|&i| points[i].clone()).collect(),
    };
    Ok((ball, support))
}

/// Indices of a subset of at most n + 1 points whose miniball equals
/// `ball`: interior points and near-duplicates dropped first, then the
/// first removable point in list order until the bound holds.
pub fn prune_support_indices(points: &[Vec<f64>], ball: &Ball) -> Vec<usize> {
    let r = ball.radius;
    let interior_tol = 1e-9 * (1.0 + r);
    let dup_tol = 1e-12 * (1.0 + r);
    let mut idx: Vec<usize> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if ball.distance(p) < r - interior_tol {
            continue;
        }
        if idx.iter().any(|&j| dist(&points[j], p) <= dup_tol) {
            continue;
        }
        idx.push(i);
    }
    let dim = ball.center.len();
    while idx.len() > dim + 1 {
        let mut removed = false;
        for k in 0..idx.len() {
            let remaining: Vec<Vec<f64>> = idx
                .iter()
                .enumerate()
                .filter(|(q, _)| *q != k)
                .map(|(_, &j)| points[j].clone())
                .collect();
            if ball_equal(&welzl_ball(&remaining, dim), ball) {
                idx.remove(k);
                removed = true;
                break;
            }
        }
        if !removed {
            // unreachable when ball is the exact miniball of the points
            break;
        }
    }
    idx
}

pub fn prune_support(points: &[Vec<f64>], ball: &Ball) -> SupportSet {
    let idx = prune_support_indices(points, ball);
    SupportSet {
        points: idx.iter().map(|&i| points[i].clone()).collect(),
    }
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = points.first() else {
        return Err(Error::Domain("miniball needs at least one point".into()));
    };
    let dim = first.len();
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::Domain(format!(
            "miniball supports dimensions 1..={MAX_DIM}, got {dim}"
        )));
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::Domain(format!(
                "point {i} has dimension {}, expected {dim}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("point {i} has a non-finite value")));
        }
    }
    Ok(dim)
}

/// Welzl ball without support extraction; total for nonempty input.
fn welzl_ball(points: &[Vec<f64>], dim: usize) -> Ball {
    let mut work = points.to_vec();
    let mut support: Vec<Vec<f64>> = Vec::new();
    let count = work.len();
    let mut ball = mtf_mb(&mut work, count, &mut support, dim);
    // defensive inflate: float noise must never leave a point outside
    let mut max_dist = 0.0f64;
    for p in points {
        max_dist = max_dist.max(ball.distance(p));
    }
    ball.radius = ball.radius.max(max_dist).max(0.0);
    ball
}

fn mtf_mb(pts: &mut Vec<Vec<f64>>, end: usize, support: &mut Vec<Vec<f64>>, dim: usize) -> Ball {
    let mut ball = ball_of_support(support, dim);
    if support.len() == dim + 1 {
        return ball;
    }
    let mut i = 0;
    while i < end {
        let outside =
            ball.distance(&pts[i]) > ball.radius + 1e-12 * (1.0 + ball.radius.max(0.0));
        if outside {
            support.push(pts[i].clone());
            ball = mtf_mb(pts, i, support, dim);
            support.pop();
            let p = pts.remove(i);
            pts.insert(0, p);
        }
        i += 1;
    }
    ball
}

/// Smallest ball with every support point on its boundary, solved in the
/// affine frame of the first point. Rank-deficient systems fall back to a
/// least-parameter solution; the radius always inflates to cover the
/// support, so the function is total. An empty support yields the sentinel
/// radius -1 that contains nothing.
// indexed loops: the elimination reads one row while writing another
#[allow(clippy::needless_range_loop)]
fn ball_of_support(support: &[Vec<f64>], dim: usize) -> Ball {
    let Some(p0) = support.first() else {
        return Ball {
            center: vec![0.0; dim],
            radius: -1.0,
        };
    };
    let m = support.len() - 1;
    if m == 0 {
        return Ball {
            center: p0.clone(),
            radius: 0.0,
        };
    }
    let diffs: Vec<Vec<f64>> = support[1..]
        .iter()
        .map(|p| p.iter().zip(p0).map(|(x, y)| x - y).collect())
        .collect();
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| 2.0 * dot(&diffs[i], &diffs[j])).collect())
        .collect();
    let mut b: Vec<f64> = diffs.iter().map(|d| dot(d, d)).collect();

    // full-pivot elimination with a rank cutoff; dropped columns get
    // lambda = 0, which picks a consistent center for dependent supports
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut col_of: Vec<usize> = (0..m).collect();
    let mut rank = m;
    for k in 0..m {
        let mut pivot = (k, k, 0.0f64);
        for r in k..m {
            for c in k..m {
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
        for r in k + 1..m {
            let f = a[r][k] / a[k][k];
            for c in k..m {
                a[r][c] -= f * a[k][c];
            }
            b[r] -= f * b[k];
        }
    }
    let mut solved = vec![0.0; m];
    for k in (0..rank).rev() {
        let mut s = b[k];
        for c in k + 1..rank {
            s -= a[k][c] * solved[c];
        }
        solved[k] = s / a[k][k];
    }
    let mut lambda = vec![0.0; m];
    for k in 0..rank {
        lambda[col_of[k]] = solved[k];
    }

    let mut center = p0.clone();
    for (j, d) in diffs.iter().enumerate() {
        for (c, v) in center.iter_mut().zip(d) {
            *c += lambda[j] * v;
        }
    }
    let radius = support
        .iter()
        .map(|p| dist(p, &center))
        .fold(0.0f64, f64::max);
    Ball { center, radius }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
