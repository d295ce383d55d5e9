//! Small dense Levenberg–Marquardt solver with Marquardt (diagonal) scaling.

use crate::{Error, Result};

/// A weighted least-squares problem in `n` parameters.
pub(crate) trait Problem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// Weighted residuals (model − data)/σ.
    fn residuals(&self, p: &[f64], out: &mut [f64]);
    /// Row-major ∂rᵢ/∂pⱼ.
    fn jacobian(&self, p: &[f64], out: &mut [f64]);
    /// Rejects steps leaving the admissible region.
    fn admissible(&self, _p: &[f64]) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Solution {
    pub params: Vec<f64>,
    /// s²·(JᵀJ)⁻¹ with s² = cost/(m − n).
    pub covariance: Vec<Vec<f64>>,
    /// Σ rᵢ².
    pub cost: f64,
    pub iterations: usize,
}

pub(crate) const MAX_ITERATIONS: usize = 500;

pub(crate) fn solve<P: Problem>(problem: &P, p0: &[f64]) -> Result<Solution> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    if m <= n {
        return Err(Error::InsufficientData(format!("{m} residuals for {n} parameters")));
    }
    let mut p = p0.to_vec();
    if !problem.admissible(&p) {
        return Err(Error::InsufficientData("initial guess outside the admissible region".into()));
    }
    let mut r = vec![0.0; m];
    let mut j = vec![0.0; m * n];
    problem.residuals(&p, &mut r);
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::NonConvergence { iterations: 0 });
    }
    let mut lambda = 1e-3;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];
    for iter in 1..=MAX_ITERATIONS {
        problem.jacobian(&p, &mut j);
        let (jtj, jtr) = normal_equations(&j, &r, m, n);
        let mut improved = false;
        let mut converged = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[k][k] += lambda * jtj[k][k].max(1e-300);
            }
            let Some(step) = solve_linear(a, jtr.iter().map(|v| -v).collect()) else {
                lambda *= 10.0;
                continue;
            };
            for k in 0..n {
                trial[k] = p[k] + step[k];
            }
            if problem.admissible(&trial) {
                problem.residuals(&trial, &mut r_trial);
                let c = sum_sq(&r_trial);
                if c.is_finite() && c <= cost {
                    let small_step = step.iter().zip(&p).all(|(s, v)| s.abs() <= 1e-12 * (v.abs() + 1e-300));
                    converged = small_step || cost - c <= 1e-14 * cost;
                    p.copy_from_slice(&trial);
                    std::mem::swap(&mut r, &mut r_trial);
                    cost = c;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !improved || converged || cost == 0.0 {
            // No further descent is possible: at a minimum to working precision.
            problem.jacobian(&p, &mut j);
            let (jtj, _) = normal_equations(&j, &r, m, n);
            let s2 = cost / (m - n) as f64;
            let inv = invert(&jtj).ok_or_else(|| Error::DegenerateSpectrum("singular fit Jacobian".into()))?;
            let covariance = inv.into_iter().map(|row| row.into_iter().map(|v| v * s2).collect()).collect();
            return Ok(Solution {
                params: p,
                covariance,
                cost,
                iterations: iter,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
    })
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn normal_equations(j: &[f64], r: &[f64], m: usize, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut jtj = vec![vec![0.0; n]; n];
    let mut jtr = vec![0.0; n];
    for i in 0..m {
        let row = &j[i * n..(i + 1) * n];
        for a in 0..n {
            jtr[a] += row[a] * r[i];
            for b in 0..=a {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            jtj[b][a] = jtj[a][b];
        }
    }
    (jtj, jtr)
}

/// Gaussian elimination with partial pivoting on a Jacobi-equilibrated system.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let d: Vec<f64> = (0..n).map(|k| a[k][k].abs().sqrt().max(1e-300)).collect();
    for r in 0..n {
        for c in 0..n {
            a[r][c] /= d[r] * d[c];
        }
        b[r] /= d[r];
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if !(a[piv][col].abs() > 1e-14) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x.iter().zip(&d).map(|(v, s)| v / s).collect())
}

fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = vec![vec![0.0; n]; n];
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let x = solve_linear(a.to_vec(), e)?;
        for r in 0..n {
            cols[r][k] = x[r];
        }
    }
    // Symmetrize against round-off.
    for r in 0..n {
        for c in 0..r {
            let v = 0.5 * (cols[r][c] + cols[c][r]);
            cols[r][c] = v;
            cols[c][r] = v;
        }
    }
    Some(cols)
}
