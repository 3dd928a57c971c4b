//! Real roots of a univariate polynomial by bracketing and bisection.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootSearch {
    /// Roots are sought in `[-domain, domain]`.
    pub domain: f64,
    /// Log-spaced grid cells over both half-lines.
    pub brackets: usize,
    /// Bisection stops at this width (relative above magnitude 1).
    pub tolerance: f64,
    /// Roots closer than this are merged.
    pub dedup: f64,
}

impl Default for RootSearch {
    fn default() -> Self {
        RootSearch {
            domain: 1e6,
            brackets: 1024,
            tolerance: 1e-10,
            dedup: 1e-6,
        }
    }
}

/// Horner evaluation of ascending coefficients.
pub fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn magnitude(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x.abs() + c.abs())
}

fn trimmed(coeffs: &[f64]) -> &[f64] {
    let mut n = coeffs.len();
    while n > 0 && coeffs[n - 1] == 0.0 {
        n -= 1;
    }
    &coeffs[..n]
}

fn bisect(coeffs: &[f64], mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = horner(coeffs, lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol * mid.abs().max(1.0) {
            return mid;
        }
        let fm = horner(coeffs, mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sorted real roots in the search domain.
///
/// The grid is refined with the critical points (roots of the derivative,
/// found recursively), so every bracket is monotone and close roots are
/// separated; critical points where the polynomial vanishes are reported
/// as even-multiplicity roots.
pub fn real_roots(coeffs: &[f64], cfg: &RootSearch) -> Vec<f64> {
    let p = trimmed(coeffs);
    if p.len() <= 1 {
        return Vec::new();
    }
    let derivative: Vec<f64> = p.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect();
    let critical = real_roots(&derivative, cfg);

    let half = (cfg.brackets / 2).max(2);
    let lo_mag: f64 = 1e-6_f64.min(cfg.domain);
    let ratio = (cfg.domain / lo_mag).powf(1.0 / (half - 1) as f64);
    let mut grid = vec![0.0];
    let mut v = lo_mag;
    for _ in 0..half {
        grid.push(v.min(cfg.domain));
        grid.push(-v.min(cfg.domain));
        v *= ratio;
    }
    grid.extend(critical.iter().copied());
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();

    let mut roots = Vec::new();
    for &c in &critical {
        if horner(p, c).abs() <= 1e-9 * magnitude(p, c).max(f64::MIN_POSITIVE) {
            roots.push(c);
        }
    }
    let values: Vec<f64> = grid.iter().map(|&x| horner(p, x)).collect();
    for i in 0..grid.len() {
        if values[i] == 0.0 {
            roots.push(grid[i]);
        }
        if i + 1 < grid.len() && values[i] != 0.0 && values[i + 1] != 0.0 && (values[i] < 0.0) != (values[i + 1] < 0.0)
        {
            roots.push(bisect(p, grid[i], grid[i + 1], cfg.tolerance));
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<f64> = Vec::with_capacity(roots.len());
    for r in roots {
        if out.last().is_none_or(|&l| (r - l).abs() > cfg.dedup) {
            out.push(r);
        }
    }
    out
}
