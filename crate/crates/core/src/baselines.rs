// SPDX-License-Identifier: Apache-2.0

//! One-dimensional reference approximations on `[0,1]`: Chebyshev
//! interpolation and Haar wavelet projection.

use std::f64::consts::PI;

use crate::error::{Result, SplatError};

/// Interpolant through `m` Chebyshev points of the first kind mapped to
/// `[0,1]`, stored as Chebyshev coefficients in `t = 2x - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebInterpolant {
    pub coeffs: Vec<f64>,
}

impl ChebInterpolant {
    pub fn nodes(&self) -> Vec<f64> {
        cheb_points(self.coeffs.len())
    }

    pub fn node_count(&self) -> usize {
        self.coeffs.len()
    }
}

/// `x_j = (1 + cos(pi (j + 1/2) / m)) / 2`, `j = 0..m`.
pub fn cheb_points(m: usize) -> Vec<f64> {
    (0..m)
        .map(|j| 0.5 * (1.0 + (PI * (j as f64 + 0.5) / m as f64).cos()))
        .collect()
}

pub fn cheb_fit(f: impl Fn(f64) -> f64, m: usize) -> Result<ChebInterpolant> {
    if m == 0 {
        return Err(SplatError::InvalidArgument("need at least one node".into()));
    }
    let values: Vec<f64> = cheb_points(m).into_iter().map(f).collect();
    let scale = 2.0 / m as f64;
    let coeffs = (0..m)
        .map(|k| {
            let c: f64 = values
                .iter()
                .enumerate()
                .map(|(j, y)| y * (PI * k as f64 * (j as f64 + 0.5) / m as f64).cos())
                .sum();
            if k == 0 {
                0.5 * scale * c
            } else {
                scale * c
            }
        })
        .collect();
    Ok(ChebInterpolant { coeffs })
}

/// Clenshaw recurrence.
pub fn cheb_eval(interp: &ChebInterpolant, x: f64) -> f64 {
    let t = 2.0 * x - 1.0;
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in interp.coeffs.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    interp.coeffs[0] + t * b1 - b2
}

/// Orthonormal Haar expansion through level `l`: the scaling coefficient
/// followed by detail coefficients ordered by level, then position.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarApproximation {
    pub level: u32,
    pub coeffs: Vec<f64>,
}

impl HaarApproximation {
    pub fn coefficient_count(&self) -> usize {
        self.coeffs.len()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Points per dyadic cell in the cell-average quadrature.
pub const HAAR_QUADRATURE_POINTS: usize = 64;

/// `L^2([0,1])` projection of `f` onto Haar wavelets through level `l`
/// (piecewise constant on `2^l` cells).
pub fn haar_fit(f: impl Fn(f64) -> f64, l: u32) -> Result<HaarApproximation> {
    if l == 0 || l > 24 {
        return Err(SplatError::InvalidArgument(format!(
            "Haar level must be in 1..=24, got {l}"
        )));
    }
    let cells = 1usize << l;
    let (gx, gw) = gauss_legendre(HAAR_QUADRATURE_POINTS);
    let h = 1.0 / cells as f64;
    let mut means: Vec<f64> = (0..cells)
        .map(|c| {
            let left = c as f64 * h;
            gx.iter()
                .zip(&gw)
                .map(|(t, w)| w * f(left + 0.5 * h * (t + 1.0)))
                .sum::<f64>()
                * 0.5
        })
        .collect();
    // Fine-to-coarse pyramid of cell means; details at level j use the means
    // of the two halves of each level-j cell.
    let mut details: Vec<Vec<f64>> = Vec::with_capacity(l as usize);
    for j in (0..l).rev() {
        let n = 1usize << j;
        let norm = 2f64.powf(j as f64 / 2.0) * 0.5 / n as f64;
        let mut coarse = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for k in 0..n {
            let (a, b) = (means[2 * k], means[2 * k + 1]);
            d.push(norm * (a - b));
            coarse.push(0.5 * (a + b));
        }
        details.push(d);
        means = coarse;
    }
    let mut coeffs = vec![means[0]];
    for d in details.into_iter().rev() {
        coeffs.extend(d);
    }
    Ok(HaarApproximation { level: l, coeffs })
}

/// Sums the `l + 1` basis functions that are nonzero at `x`.
pub fn haar_eval(h: &HaarApproximation, x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    let mut value = h.coeffs[0];
    let mut offset = 1;
    for j in 0..h.level {
        let n = 1usize << j;
        let scaled = x * n as f64;
        let k = (scaled.floor() as usize).min(n - 1);
        let sign = if scaled - (k as f64) < 0.5 { 1.0 } else { -1.0 };
        value += h.coeffs[offset + k] * 2f64.powf(j as f64 / 2.0) * sign;
        offset += n;
    }
    value
}

/// `n` equispaced points `i / (n - 1)` on `[0,1]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Mean squared difference of `approx` and `f` over `grid`.
pub fn grid_mse(approx: impl Fn(f64) -> f64, f: impl Fn(f64) -> f64, grid: &[f64]) -> f64 {
    grid.iter().map(|&x| (approx(x) - f(x)).powi(2)).sum::<f64>() / grid.len() as f64
}
