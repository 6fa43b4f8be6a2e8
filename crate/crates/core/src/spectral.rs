//! Tensor-product cosine transforms diagonalising the mirror-Neumann
//! Laplacian, plus a conjugate-gradient fallback for the same systems.
//!
//! The eigenvectors of the 1D mirror stencil are `cos(π m (i + ½) / N)`,
//! i.e. the DCT-II basis. Transforms are computed with an `N`-point complex
//! FFT after Makhoul's even/odd reordering, which is valid for every `N`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{check_same_grid, laplacian_into, Field, Grid};

/// Unnormalised DCT-II and its exact inverse for one length.
#[derive(Clone)]
pub struct Dct {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    twiddle: Vec<Complex64>,
}

impl std::fmt::Debug for Dct {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dct").field("n", &self.n).finish()
    }
}

impl Dct {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let twiddle = (0..n)
            .map(|k| {
                let th = -std::f64::consts::PI * k as f64 / (2.0 * n as f64);
                Complex64::new(th.cos(), th.sin())
            })
            .collect();
        Dct {
            n,
            forward,
            inverse,
            twiddle,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `X_k = Σ_i x_i cos(π k (2i+1) / 2N)`, computed in place.
    pub fn forward(&self, x: &mut [f64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        buf.resize(n, Complex64::new(0.0, 0.0));
        let half = n.div_ceil(2);
        for m in 0..half {
            buf[m].re = x[2 * m];
        }
        for m in 0..n / 2 {
            buf[n - 1 - m].re = x[2 * m + 1];
        }
        self.forward.process(buf);
        for k in 0..n {
            x[k] = (self.twiddle[k] * buf[k]).re;
        }
    }

    /// Exact inverse of [`Dct::forward`], computed in place.
    pub fn inverse(&self, x: &mut [f64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        buf.resize(n, Complex64::new(0.0, 0.0));
        for k in 0..n {
            let im = if k == 0 { 0.0 } else { -x[n - k] };
            buf[k] = self.twiddle[k].conj() * Complex64::new(x[k], im);
        }
        self.inverse.process(buf);
        let scale = 1.0 / n as f64;
        let half = n.div_ceil(2);
        for m in 0..half {
            x[2 * m] = buf[m].re * scale;
        }
        for m in 0..n / 2 {
            x[2 * m + 1] = buf[n - 1 - m].re * scale;
        }
    }
}

/// Spectral representation of the Neumann Laplacian on a grid.
#[derive(Debug, Clone)]
pub struct NeumannSpectrum {
    grid: Grid,
    dcts: Vec<Dct>,
    axis_eigs: Vec<Vec<f64>>,
}

impl NeumannSpectrum {
    pub fn new(grid: Grid) -> Self {
        let dcts = grid.cells().iter().map(|&n| Dct::new(n)).collect();
        let axis_eigs = (0..grid.dim())
            .map(|a| (0..grid.cells()[a]).map(|m| grid.axis_eigenvalue(a, m)).collect())
            .collect();
        NeumannSpectrum {
            grid,
            dcts,
            axis_eigs,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Eigenvalue of `-Δ_h` for the mode stored at flat index `idx`.
    pub fn eigenvalue(&self, idx: usize) -> f64 {
        let c = self.grid.coords(idx);
        (0..self.grid.dim()).map(|a| self.axis_eigs[a][c[a]]).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.eigenvalue(i)).collect()
    }

    fn transform(&self, data: &mut [f64], inverse: bool) {
        let g = &self.grid;
        let mut line = Vec::new();
        let mut buf = Vec::new();
        for a in 0..g.dim() {
            let n = g.cells()[a];
            let s = g.stride(a);
            line.resize(n, 0.0);
            for start in 0..g.len() {
                if g.coords(start)[a] != 0 {
                    continue;
                }
                for i in 0..n {
                    line[i] = data[start + i * s];
                }
                if inverse {
                    self.dcts[a].inverse(&mut line, &mut buf);
                } else {
                    self.dcts[a].forward(&mut line, &mut buf);
                }
                for i in 0..n {
                    data[start + i * s] = line[i];
                }
            }
        }
    }

    /// Modal coefficients (unnormalised tensor DCT-II).
    pub fn forward(&self, values: &[f64]) -> Vec<f64> {
        let mut out = values.to_vec();
        self.transform(&mut out, false);
        out
    }

    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = coeffs.to_vec();
        self.transform(&mut out, true);
        out
    }

    /// Solves `(alpha I - beta Δ_h) x = rhs`; requires `alpha > 0`, `beta ≥ 0`.
    /// The mean of the result is set exactly to `mean(rhs) / alpha`.
    pub fn solve_shifted(&self, alpha: f64, beta: f64, rhs: &[f64]) -> Vec<f64> {
        let mut c = self.forward(rhs);
        for (i, v) in c.iter_mut().enumerate() {
            *v /= alpha + beta * self.eigenvalue(i);
        }
        let mut x = self.inverse(&c);
        fix_mean(&mut x, crate::grid::pairwise_sum(rhs) / alpha);
        x
    }

    /// Applies the discrete heat semigroup `e^{tΔ_h}`.
    pub fn heat(&self, t: f64, f: &Field) -> Result<Field> {
        check_same_grid(&self.grid, f.grid())?;
        let mut c = self.forward(f.values());
        for (i, v) in c.iter_mut().enumerate() {
            *v *= (-t * self.eigenvalue(i)).exp();
        }
        Ok(Field::from_raw(self.grid, self.inverse(&c)))
    }
}

/// Shifts `x` so that its sum equals `target_sum`.
pub(crate) fn fix_mean(x: &mut [f64], target_sum: f64) {
    let n = x.len() as f64;
    let delta = (target_sum - crate::grid::pairwise_sum(x)) / n;
    for v in x.iter_mut() {
        *v += delta;
    }
}

/// Conjugate gradients for `(alpha I - beta Δ_h) x = rhs`.
/// Returns the solution and the iteration count.
pub fn cg_shifted(
    grid: &Grid,
    alpha: f64,
    beta: f64,
    rhs: &[f64],
    x0: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = grid.len();
    if rhs.len() != n || x0.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    let mut lap = vec![0.0; n];
    let apply = |v: &[f64], out: &mut [f64], lap: &mut [f64]| {
        laplacian_into(grid, v, lap);
        for i in 0..n {
            out[i] = alpha * v[i] - beta * lap[i];
        }
    };
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        crate::grid::pairwise_sum(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>())
    };
    let mut x = x0.to_vec();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax, &mut lap);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let bnorm = dot(rhs, rhs).sqrt().max(f64::MIN_POSITIVE);
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= rel_tol * bnorm {
        return Ok((x, 0));
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        apply(&p, &mut ap, &mut lap);
        let alpha_k = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha_k * p[i];
            r[i] -= alpha_k * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= rel_tol * bnorm {
            return Ok((x, it));
        }
        let beta_k = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta_k * p[i];
        }
    }
    Err(Error::NoConvergence {
        solver: "conjugate gradient",
        iterations: max_iter,
        residual: rr.sqrt() / bnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_dct(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(i, v)| {
                        v * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64
                            / (2 * n) as f64)
                            .cos()
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn dct_matches_dense_formula_for_even_and_odd_lengths() {
        for n in [2usize, 3, 5, 8, 13, 16] {
            let x: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 - 4.5).collect();
            let dct = Dct::new(n);
            let mut y = x.clone();
            let mut buf = Vec::new();
            dct.forward(&mut y, &mut buf);
            let want = dense_dct(&x);
            for (a, b) in y.iter().zip(&want) {
                assert!((a - b).abs() < 1e-11, "n={n}: {a} vs {b}");
            }
            dct.inverse(&mut y, &mut buf);
            for (a, b) in y.iter().zip(&x) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spectral_and_cg_solves_agree() {
        let g = Grid::new(2, &[1.0, 1.5], &[12, 9]).unwrap();
        let rhs: Vec<f64> = (0..g.len()).map(|i| ((i * 37) % 17) as f64 / 17.0).collect();
        let sp = NeumannSpectrum::new(g);
        let a = sp.solve_shifted(1.0, 0.01, &rhs);
        let (b, _) = cg_shifted(&g, 1.0, 0.01, &rhs, &rhs, 1e-13, 500).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
        // residual check on the spectral solution
        let mut lap = vec![0.0; g.len()];
        laplacian_into(&g, &a, &mut lap);
        for i in 0..g.len() {
            assert!((a[i] - 0.01 * lap[i] - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_semigroup_decays_single_mode_exactly() {
        let g = Grid::new(1, &[1.0], &[16]).unwrap();
        let sp = NeumannSpectrum::new(g);
        let f = Field::from_fn(g, |x| (std::f64::consts::PI * x[0]).cos());
        let t = 0.07;
        let out = sp.heat(t, &f).unwrap();
        let decay = (-g.lambda1() * t).exp();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a - decay * b).abs() < 1e-13);
        }
    }
}
