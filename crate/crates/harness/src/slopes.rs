//! Rate estimation on log-log scale.

use crate::error::{HarnessError, Result};

/// Ordinary least-squares slope of `ln y` against `ln t`.
///
/// Points with nonpositive `y` are dropped. At least four points spanning a
/// factor of ten in `t` must remain.
pub fn slope_estimate(points: &[(f64, f64)]) -> Result<f64> {
    let kept: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, y)| *t > 0.0 && *y > 0.0 && y.is_finite() && t.is_finite())
        .map(|(t, y)| (t.ln(), y.ln()))
        .collect();
    if kept.len() < 4 {
        return Err(HarnessError::Estimation(format!(
            "{} usable points, at least 4 are needed",
            kept.len()
        )));
    }
    let (lo, hi) = kept.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| (lo.min(*x), hi.max(*x)));
    if hi - lo < std::f64::consts::LN_10 * (1.0 - 1e-12) {
        return Err(HarnessError::Estimation("horizons span less than one decade".into()));
    }
    let n = kept.len() as f64;
    let mx = kept.iter().map(|p| p.0).sum::<f64>() / n;
    let my = kept.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = kept.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = kept.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(HarnessError::Estimation("spearman needs two equal-length series of length >= 2".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let m = (n + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
    let vx: f64 = rx.iter().map(|a| (a - m).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - m).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Err(HarnessError::Estimation("constant series has no rank correlation".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}
