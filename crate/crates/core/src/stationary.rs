//! Steady states of the ε = 0 system under a mass constraint:
//!
//! ```text
//! −Δρ − χ∇·(ρ/c ∇c) + μ = 0,   −Δc + c − ρ = 0,   ∫ρ = m
//! ```
//!
//! solved by damped Newton on `(ρ, c, μ)` with a dense LU factorisation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_same_grid, laplacian_into, Field, Grid, StencilOperator};
use crate::norms::{lp_norm, mean, require_positive};

/// Largest grid accepted by the dense Newton solver.
pub const MAX_STATIONARY_CELLS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryProblem {
    pub grid: Grid,
    /// Total mass `∫ρ`.
    pub m: f64,
    pub chi: f64,
}

impl StationaryProblem {
    pub fn new(grid: Grid, m: f64, chi: f64) -> Result<Self> {
        let mut errs = Vec::new();
        if !(m > 0.0 && m.is_finite()) {
            errs.push(format!("mass must be positive, got {m}"));
        }
        if !(chi > 0.0 && chi.is_finite()) {
            errs.push(format!("chi must be positive, got {chi}"));
        }
        if grid.len() > MAX_STATIONARY_CELLS {
            errs.push(format!(
                "grid has {} cells; the dense solver accepts at most {MAX_STATIONARY_CELLS}",
                grid.len()
            ));
        }
        if errs.is_empty() {
            Ok(StationaryProblem { grid, m, chi })
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Mass mean `M = m / |Ω|`.
    pub fn mass_mean(&self) -> f64 {
        self.m / self.grid.volume()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub r1: Field,
    pub r2: Field,
    pub r3: f64,
}

impl Residual {
    pub fn max_norm(&self) -> f64 {
        let a = self.r1.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let b = self.r2.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a.max(b).max(self.r3.abs())
    }
}

/// Face values of `χ ½(ρ_L/c_L + ρ_R/c_R)(c_R − c_L)/h`, passed to `visit`
/// together with the two cell indices and the axis.
fn for_each_face(grid: &Grid, mut visit: impl FnMut(usize, usize, usize)) {
    for a in 0..grid.dim() {
        let s = grid.stride(a);
        for idx in 0..grid.len() {
            if grid.coords(idx)[a] > 0 {
                visit(a, idx - s, idx);
            }
        }
    }
}

fn residual_raw(p: &StationaryProblem, rho: &[f64], c: &[f64], mu: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let g = &p.grid;
    let n = g.len();
    let mut lap_rho = vec![0.0; n];
    let mut lap_c = vec![0.0; n];
    laplacian_into(g, rho, &mut lap_rho);
    laplacian_into(g, c, &mut lap_c);
    let mut r1: Vec<f64> = lap_rho.iter().map(|l| -l + mu).collect();
    for_each_face(g, |a, l, r| {
        let h = g.spacing(a);
        let f = p.chi * 0.5 * (rho[l] / c[l] + rho[r] / c[r]) * (c[r] - c[l]) / h;
        r1[l] -= f / h;
        r1[r] += f / h;
    });
    let r2 = (0..n).map(|i| -lap_c[i] + c[i] - rho[i]).collect();
    let r3 = crate::grid::pairwise_sum(rho) * g.cell_volume() - p.m;
    (r1, r2, r3)
}

/// `(r1, r2, r3)` of the stationary system with the multiplier set to 0.
pub fn stationary_residual(rho_s: &Field, c_s: &Field, problem: &StationaryProblem) -> Result<Residual> {
    check_same_grid(rho_s.grid(), c_s.grid())?;
    check_same_grid(rho_s.grid(), &problem.grid)?;
    require_positive(c_s, "c")?;
    let (r1, r2, r3) = residual_raw(problem, rho_s.values(), c_s.values(), 0.0);
    Ok(Residual {
        r1: Field::new(problem.grid, r1)?,
        r2: Field::new(problem.grid, r2)?,
        r3,
    })
}

/// Max over faces of `|∇ρ + χρ∇log c|` with face differences and the
/// arithmetic face average of ρ.
pub fn flux_form_residual(rho: &Field, c: &Field, chi: f64) -> Result<f64> {
    check_same_grid(rho.grid(), c.grid())?;
    require_positive(c, "c")?;
    let g = *rho.grid();
    let (rv, cv) = (rho.values(), c.values());
    let mut worst: f64 = 0.0;
    for_each_face(&g, |a, l, r| {
        let h = g.spacing(a);
        let v = (rv[r] - rv[l]) / h + chi * 0.5 * (rv[l] + rv[r]) * (cv[r].ln() - cv[l].ln()) / h;
        worst = worst.max(v.abs());
    });
    Ok(worst)
}

fn jacobian(p: &StationaryProblem, lap: &DMatrix<f64>, rho: &[f64], c: &[f64]) -> DMatrix<f64> {
    let g = &p.grid;
    let n = g.len();
    let mut j = DMatrix::zeros(2 * n + 1, 2 * n + 1);
    for r in 0..n {
        for k in 0..n {
            let l = lap[(r, k)];
            if l != 0.0 {
                j[(r, k)] -= l;
                j[(n + r, n + k)] -= l;
            }
        }
        j[(r, 2 * n)] = 1.0;
        j[(n + r, n + r)] += 1.0;
        j[(n + r, r)] = -1.0;
        j[(2 * n, r)] = g.cell_volume();
    }
    let chi = p.chi;
    for_each_face(g, |a, l, r| {
        let h = g.spacing(a);
        let gr = (c[r] - c[l]) / h;
        let m = 0.5 * (rho[l] / c[l] + rho[r] / c[r]);
        let d_rl = chi * gr / (2.0 * c[l]);
        let d_rr = chi * gr / (2.0 * c[r]);
        let d_cl = chi * (-rho[l] * gr / (2.0 * c[l] * c[l]) - m / h);
        let d_cr = chi * (-rho[r] * gr / (2.0 * c[r] * c[r]) + m / h);
        for (col, d) in [(l, d_rl), (r, d_rr), (n + l, d_cl), (n + r, d_cr)] {
            j[(l, col)] -= d / h;
            j[(r, col)] += d / h;
        }
    });
    j
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest step accepted by the backtracking line search.
    pub min_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 100,
            min_step: 2f64.powi(-20),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    pub rho: Field,
    pub c: Field,
    pub mu: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl StationarySolution {
    /// `max(‖ρ − M‖_∞, ‖c − M‖_∞)`.
    pub fn distance_to_constant(&self, mass_mean: f64) -> f64 {
        let a = self.rho.values().iter().fold(0.0f64, |m, v| m.max((v - mass_mean).abs()));
        let b = self.c.values().iter().fold(0.0f64, |m, v| m.max((v - mass_mean).abs()));
        a.max(b)
    }
}

fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Damped Newton from `(rho0, c0)`. Converged when every residual component
/// is at most `tol` in max norm.
pub fn solve_stationary(
    problem: &StationaryProblem,
    rho0: &Field,
    c0: &Field,
    opts: &NewtonOptions,
) -> Result<StationarySolution> {
    check_same_grid(rho0.grid(), c0.grid())?;
    check_same_grid(rho0.grid(), &problem.grid)?;
    require_positive(c0, "c")?;
    if rho0.min() < 0.0 {
        return Err(Error::arg("initial density must be non-negative"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::arg("tolerance must be positive"));
    }
    let g = problem.grid;
    let n = g.len();
    let lap = StencilOperator::laplacian(g).dense_matrix()?;
    let mut rho = rho0.values().to_vec();
    let mut c = c0.values().to_vec();
    let mut mu = 0.0;
    let pack = |r1: Vec<f64>, r2: Vec<f64>, r3: f64| {
        let mut v = r1;
        v.extend(r2);
        v.push(r3);
        DVector::from_vec(v)
    };
    let (a, b, m) = residual_raw(problem, &rho, &c, mu);
    let mut res = pack(a, b, m);
    for it in 0..=opts.max_iter {
        let rn = max_abs(res.as_slice());
        if rn <= opts.tol {
            return Ok(StationarySolution {
                rho: Field::new(g, rho)?,
                c: Field::new(g, c)?,
                mu,
                iterations: it,
                residual: rn,
            });
        }
        if it == opts.max_iter {
            return Err(Error::NoConvergence {
                solver: "stationary Newton",
                iterations: it,
                residual: rn,
            });
        }
        let j = jacobian(problem, &lap, &rho, &c);
        let step = j.lu().solve(&(-&res)).ok_or(Error::NoConvergence {
            solver: "stationary Newton (singular Jacobian)",
            iterations: it,
            residual: rn,
        })?;
        let f0 = res.norm_squared();
        let mut lam = 1.0;
        loop {
            if lam < opts.min_step {
                return Err(Error::NoConvergence {
                    solver: "stationary Newton (line search)",
                    iterations: it,
                    residual: rn,
                });
            }
            let rho_t: Vec<f64> = (0..n).map(|i| rho[i] + lam * step[i]).collect();
            let c_t: Vec<f64> = (0..n).map(|i| c[i] + lam * step[n + i]).collect();
            if rho_t.iter().any(|&v| v < 0.0) || c_t.iter().any(|&v| v <= 0.0) {
                lam *= 0.5;
                continue;
            }
            let mu_t = mu + lam * step[2 * n];
            let (a, b, m) = residual_raw(problem, &rho_t, &c_t, mu_t);
            let trial = pack(a, b, m);
            let ft = trial.norm_squared();
            // Armijo on ½‖R‖²: the Newton direction has slope −‖R‖²
            if ft <= (1.0 - 1e-4 * lam) * f0 || max_abs(trial.as_slice()) <= opts.tol {
                rho = rho_t;
                c = c_t;
                mu = mu_t;
                res = trial;
                break;
            }
            lam *= 0.5;
        }
    }
    unreachable!("loop returns on the last iteration")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub distance_to_constant: f64,
}

/// Solves and summarises, turning a Newton failure into an unconverged
/// report.
pub fn stationary_report(
    problem: &StationaryProblem,
    rho0: &Field,
    c0: &Field,
    opts: &NewtonOptions,
) -> Result<StationaryReport> {
    match solve_stationary(problem, rho0, c0, opts) {
        Ok(s) => Ok(StationaryReport {
            converged: true,
            iterations: s.iterations,
            final_residual: s.residual,
            distance_to_constant: s.distance_to_constant(problem.mass_mean()),
        }),
        Err(Error::NoConvergence {
            iterations,
            residual,
            ..
        }) => Ok(StationaryReport {
            converged: false,
            iterations,
            final_residual: residual,
            distance_to_constant: f64::NAN,
        }),
        Err(e) => Err(e),
    }
}

/// Spread of a field around its mean, `‖f − mean f‖_∞`.
pub fn spread(f: &Field) -> Result<f64> {
    let m = mean(f);
    lp_norm(&f.map(|v| v - m), f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constants_have_zero_residual() {
        let g = Grid::unit(2, 8).unwrap();
        let p = StationaryProblem::new(g, 1.7, 1.0).unwrap();
        let r = stationary_residual(&Field::constant(g, 1.7), &Field::constant(g, 1.7), &p).unwrap();
        assert!(r.max_norm() < 1e-13);
    }

    #[test]
    fn cosine_density_gives_expected_r2() {
        let g = Grid::unit(1, 32).unwrap();
        let p = StationaryProblem::new(g, 1.0, 1.0).unwrap();
        let rho = Field::from_fn(g, |x| 1.0 + 0.1 * (PI * x[0]).cos());
        let r = stationary_residual(&rho, &Field::constant(g, 1.0), &p).unwrap();
        for (i, v) in r.r2.values().iter().enumerate() {
            assert!((v + 0.1 * (PI * g.center(i)[0]).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn newton_from_constant_takes_no_steps() {
        let g = Grid::unit(1, 16).unwrap();
        let p = StationaryProblem::new(g, 2.0, 1.0).unwrap();
        let s = solve_stationary(&p, &Field::constant(g, 2.0), &Field::constant(g, 2.0), &NewtonOptions::default())
            .unwrap();
        assert!(s.iterations <= 1);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = Grid::unit(2, 3).unwrap();
        let p = StationaryProblem::new(g, 1.0, 1.3).unwrap();
        let n = g.len();
        let rho: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
        let c: Vec<f64> = (0..n).map(|i| 2.0 - 0.07 * i as f64).collect();
        let lap = StencilOperator::laplacian(g).dense_matrix().unwrap();
        let j = jacobian(&p, &lap, &rho, &c);
        let flat = |x: &[f64]| {
            let (a, b, m) = residual_raw(&p, &x[..n], &x[n..2 * n], x[2 * n]);
            let mut v = a;
            v.extend(b);
            v.push(m);
            v
        };
        let mut x: Vec<f64> = rho.iter().chain(&c).copied().collect();
        x.push(0.3);
        for col in 0..2 * n + 1 {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[col] += h;
            let mut xm = x.clone();
            xm[col] -= h;
            let (fp, fm) = (flat(&xp), flat(&xm));
            for row in 0..2 * n + 1 {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                assert!((fd - j[(row, col)]).abs() < 1e-5 * (1.0 + fd.abs()), "({row},{col})");
            }
        }
    }

    #[test]
    fn perturbed_guess_converges_to_constant() {
        let g = Grid::unit(1, 24).unwrap();
        let p = StationaryProblem::new(g, 1.5, 1.0).unwrap();
        let rho0 = Field::from_fn(g, |x| 1.5 + 0.5 * (PI * x[0]).cos());
        let c0 = Field::from_fn(g, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos());
        let s = solve_stationary(&p, &rho0, &c0, &NewtonOptions::default()).unwrap();
        assert!(s.distance_to_constant(1.5) < 1e-8);
        assert!(flux_form_residual(&s.rho, &s.c, 1.0).unwrap() < 1e-8);
        assert!(s.mu.abs() < 1e-10);
    }

    #[test]
    fn rejects_large_grids_and_bad_mass() {
        assert!(StationaryProblem::new(Grid::unit(2, 128).unwrap(), 1.0, 1.0).is_err());
        assert!(StationaryProblem::new(Grid::unit(1, 8).unwrap(), 0.0, 1.0).is_err());
    }
}
