//! Spearman (SRCC) and Pearson (PLCC) correlation.
//!
//! Both return `Ok(None)` when a correlation is undefined because one side
//! is constant; callers surface that explicitly instead of carrying NaN.

use crate::error::{DeclipError, Result};

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(DeclipError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(DeclipError::InsufficientData(format!(
            "correlation needs at least 2 pairs, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(DeclipError::NonFinite("correlation input".into()));
    }
    Ok(())
}

/// 1-based ranks; tied values share the mean of the positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share their mean.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson linear correlation.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check(x, y)?;
    Ok(pearson_unchecked(x, y))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check(x, y)?;
    Ok(pearson_unchecked(&average_ranks(x), &average_ranks(y)))
}

fn logistic4(b: &[f64; 4], x: f64) -> f64 {
    b[1] + (b[0] - b[1]) / (1.0 + (-(x - b[2]) / b[3].abs().max(1e-12)).exp())
}

/// Fits `y ≈ b2 + (b1 − b2) / (1 + exp(−(x − b3)/|b4|))` by Levenberg-Marquardt
/// and returns the fitted values at `x`.
pub fn logistic_remap(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let sx = (x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n).sqrt();
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let mut b = [ymax, ymin, mx, if sx > 0.0 { sx } else { 1.0 }];
    let sse = |b: &[f64; 4]| -> f64 {
        x.iter().zip(y).map(|(&xi, &yi)| (logistic4(b, xi) - yi).powi(2)).sum()
    };
    let mut err = sse(&b);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        // Normal equations with a forward-difference Jacobian.
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (&xi, &yi) in x.iter().zip(y) {
            let f0 = logistic4(&b, xi);
            let mut row = [0.0; 4];
            for (k, r) in row.iter_mut().enumerate() {
                let h = 1e-7 * b[k].abs().max(1e-3);
                let mut bh = b;
                bh[k] += h;
                *r = (logistic4(&bh, xi) - f0) / h;
            }
            for p in 0..4 {
                jtr[p] += row[p] * (yi - f0);
                for q in 0..4 {
                    jtj[p][q] += row[p] * row[q];
                }
            }
        }
        let mut a = jtj;
        for (p, rowp) in a.iter_mut().enumerate() {
            rowp[p] += lambda * jtj[p][p].max(1e-12);
        }
        let Some(delta) = solve4(a, jtr) else { break };
        let candidate = [b[0] + delta[0], b[1] + delta[1], b[2] + delta[2], b[3] + delta[3]];
        let cand_err = sse(&candidate);
        if cand_err.is_finite() && cand_err < err {
            let improvement = err - cand_err;
            b = candidate;
            err = cand_err;
            lambda = (lambda * 0.3).max(1e-12);
            if improvement < 1e-15 * (1.0 + err) {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    Ok(x.iter().map(|&xi| logistic4(&b, xi)).collect())
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}
