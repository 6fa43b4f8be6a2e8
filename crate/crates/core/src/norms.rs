//! Norms, means and discrete differential quantities on cell fields.
//!
//! Cell gradients are the average of the two adjacent face differences per
//! axis. Second derivatives use mirrored ghost cells; mixed derivatives use
//! the four-point cross stencil with the same mirroring, so every stencil
//! is exact on the even reflection of a field across the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_laplacian, gradient_faces, pairwise_sum, Field, Grid};

/// Which norm to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormSpec {
    Lp(f64),
    W1p(f64),
    Linf,
}

/// The scaling-invariant triple `(‖ρ−M‖_{L^{d/2}}, ‖∇c‖_{L^d}, ‖c−M‖_{L^∞})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingTriple {
    pub rho_dev: f64,
    pub grad_c: f64,
    pub c_dev: f64,
}

impl ScalingTriple {
    pub fn total(&self) -> f64 {
        self.rho_dev + self.grad_c + self.c_dev
    }
}

fn lp_of_values(values: &[f64], vol: f64, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::arg(format!("norm exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let powered: Vec<f64> = if p == 2.0 {
        values.iter().map(|v| v * v).collect()
    } else if p == 1.0 {
        values.iter().map(|v| v.abs()).collect()
    } else {
        values.iter().map(|v| v.abs().powf(p)).collect()
    };
    Ok((pairwise_sum(&powered) * vol).powf(1.0 / p))
}

/// `(Σ |f|^p vol)^{1/p}`; `p = ∞` gives `max |f|`.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    lp_of_values(f.values(), f.grid().cell_volume(), p)
}

pub fn norm(f: &Field, spec: NormSpec) -> Result<f64> {
    match spec {
        NormSpec::Lp(p) => lp_norm(f, p),
        NormSpec::Linf => lp_norm(f, f64::INFINITY),
        NormSpec::W1p(p) => {
            let a = lp_norm(f, p)?;
            let b = grad_lp_norm(f, p)?;
            if p.is_infinite() {
                Ok(a.max(b))
            } else {
                Ok((a.powf(p) + b.powf(p)).powf(1.0 / p))
            }
        }
    }
}

/// Volume-weighted average.
pub fn mean(f: &Field) -> f64 {
    pairwise_sum(f.values()) / f.grid().len() as f64
}

/// Cell gradient components, one vector per axis.
pub fn cell_gradient(f: &Field) -> Vec<Vec<f64>> {
    gradient_faces(f).to_cells()
}

/// `|∇f|²` per cell.
pub fn grad_sq(f: &Field) -> Vec<f64> {
    let g = cell_gradient(f);
    (0..f.grid().len())
        .map(|i| g.iter().map(|ax| ax[i] * ax[i]).sum())
        .collect()
}

/// `‖ |∇f| ‖_{L^p}` with the cell gradient.
pub fn grad_lp_norm(f: &Field, p: f64) -> Result<f64> {
    let mag: Vec<f64> = grad_sq(f).into_iter().map(f64::sqrt).collect();
    lp_of_values(&mag, f.grid().cell_volume(), p)
}

pub fn scaling_triple(rho: &Field, c: &Field, m: f64) -> Result<ScalingTriple> {
    let d = rho.grid().dim() as f64;
    // L^{d/2} is only a norm for d ≥ 2; in 1D the L¹ norm is reported.
    let p_rho = (d / 2.0).max(1.0);
    Ok(ScalingTriple {
        rho_dev: lp_norm(&rho.map(|v| v - m), p_rho)?,
        grad_c: grad_lp_norm(c, d.max(1.0))?,
        c_dev: lp_norm(&c.map(|v| v - m), f64::INFINITY)?,
    })
}

fn mirror_neighbor(grid: &Grid, idx: usize, axis: usize, up: bool) -> usize {
    let c = grid.coords(idx);
    let s = grid.stride(axis);
    if up {
        if c[axis] + 1 < grid.cells()[axis] {
            idx + s
        } else {
            idx
        }
    } else if c[axis] > 0 {
        idx - s
    } else {
        idx
    }
}

/// Discrete Hessian per cell as a row-major `d × d` block in a 3×3 array.
pub fn hessian(f: &Field) -> Vec<[[f64; 3]; 3]> {
    let g = f.grid();
    let v = f.values();
    let d = g.dim();
    let h = g.spacings();
    (0..g.len())
        .map(|idx| {
            let mut out = [[0.0; 3]; 3];
            for a in 0..d {
                let lo = mirror_neighbor(g, idx, a, false);
                let hi = mirror_neighbor(g, idx, a, true);
                out[a][a] = (v[hi] - 2.0 * v[idx] + v[lo]) / (h[a] * h[a]);
                for b in (a + 1)..d {
                    let pp = mirror_neighbor(g, hi, b, true);
                    let pm = mirror_neighbor(g, hi, b, false);
                    let mp = mirror_neighbor(g, lo, b, true);
                    let mm = mirror_neighbor(g, lo, b, false);
                    let val = (v[pp] - v[pm] - v[mp] + v[mm]) / (4.0 * h[a] * h[b]);
                    out[a][b] = val;
                    out[b][a] = val;
                }
            }
            out
        })
        .collect()
}

/// `|∇²f|²` (Frobenius) per cell.
pub fn hessian_sq(f: &Field) -> Vec<f64> {
    let d = f.grid().dim();
    hessian(f)
        .iter()
        .map(|hm| {
            let mut s = 0.0;
            for row in hm.iter().take(d) {
                for v in row.iter().take(d) {
                    s += v * v;
                }
            }
            s
        })
        .collect()
}

pub(crate) fn require_positive(f: &Field, name: &'static str) -> Result<()> {
    let (i, v) = f.argmin();
    if v <= 0.0 || v.is_nan() {
        return Err(Error::Positivity {
            field: name,
            cell: i,
            value: v,
        });
    }
    Ok(())
}

/// Cell values of `c |∇² log c|²`.
pub fn log_hessian_integrand(c: &Field) -> Result<Field> {
    require_positive(c, "c")?;
    let logc = c.map(f64::ln);
    let hs = hessian_sq(&logc);
    let vals = c.values().iter().zip(&hs).map(|(cv, h)| cv * h).collect();
    Ok(Field::from_raw(*c.grid(), vals))
}

/// Max-norm residual over interior cells of
/// `2 Δ√φ/√φ = Δφ/φ − |∇φ|²/(2φ²)`.
pub fn weber_fechner_check(phi: &Field) -> Result<f64> {
    require_positive(phi, "phi")?;
    let sq = phi.map(f64::sqrt);
    let lap_sq = apply_laplacian(&sq);
    let lap = apply_laplacian(phi);
    let gs = grad_sq(phi);
    let g = phi.grid();
    let mut worst: f64 = 0.0;
    for (i, &gsi) in gs.iter().enumerate() {
        if g.is_boundary_cell(i) {
            continue;
        }
        let p = phi.values()[i];
        let lhs = 2.0 * lap_sq.values()[i] / sq.values()[i];
        let rhs = lap.values()[i] / p - gsi / (2.0 * p * p);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

const EDGE0: [f64; 5] = [-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25];
const EDGE1: [f64; 5] = [-0.25, -5.0 / 6.0, 1.5, -0.5, 1.0 / 12.0];
/// Derivative at the boundary face from the five nearest cell centres.
const FACE5: [f64; 5] = [-31.0 / 8.0, 229.0 / 24.0, -75.0 / 8.0, 37.0 / 8.0, -11.0 / 12.0];

/// Derivative of a cell field along `axis` without mirror closure:
/// fourth-order stencils (one-sided next to the boundary) when the axis has
/// at least five cells, second order otherwise.
pub(crate) fn extrapolated_derivative(f: &[f64], grid: &Grid, axis: usize) -> Vec<f64> {
    let n = grid.cells()[axis];
    let s = grid.stride(axis);
    let h = grid.spacing(axis);
    let one_sided = |idx: usize, w: &[f64; 5], dir: isize| -> f64 {
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            let j = (idx as isize + dir * (k * s) as isize) as usize;
            acc += wk * f[j];
        }
        dir as f64 * acc / h
    };
    (0..grid.len())
        .map(|idx| {
            let i = grid.coords(idx)[axis];
            if n < 3 {
                let lo = if i == 0 { idx } else { idx - s };
                let hi = if i + 1 == n { idx } else { idx + s };
                return (f[hi] - f[lo]) / h;
            }
            if n < 5 {
                return if i == 0 {
                    (-3.0 * f[idx] + 4.0 * f[idx + s] - f[idx + 2 * s]) / (2.0 * h)
                } else if i + 1 == n {
                    (3.0 * f[idx] - 4.0 * f[idx - s] + f[idx - 2 * s]) / (2.0 * h)
                } else {
                    (f[idx + s] - f[idx - s]) / (2.0 * h)
                };
            }
            match i {
                0 => one_sided(idx, &EDGE0, 1),
                1 => one_sided(idx - s, &EDGE1, 1),
                _ if i + 1 == n => one_sided(idx, &EDGE0, -1),
                _ if i + 2 == n => one_sided(idx + s, &EDGE1, -1),
                _ => (8.0 * (f[idx + s] - f[idx - s]) - (f[idx + 2 * s] - f[idx - 2 * s])) / (12.0 * h),
            }
        })
        .collect()
}

/// Value at the boundary face of cell `idx`, extrapolated from three cells.
fn face_value(f: &[f64], idx: usize, s: usize, n: usize, dir: isize) -> f64 {
    let at = |k: usize| f[(idx as isize + dir * (k * s) as isize) as usize];
    if n >= 3 {
        let v = (15.0 * at(0) - 10.0 * at(1) + 3.0 * at(2)) / 8.0;
        // keep the weight finite for steep positive fields
        if v > 0.0 {
            v
        } else {
            at(0)
        }
    } else {
        at(0)
    }
}

/// Outward normal derivative at the low (`dir = 1`) or high (`dir = −1`)
/// boundary face of the cell `idx`.
fn outward_face_derivative(g: &[f64], idx: usize, s: usize, n: usize, h: f64, dir: isize) -> f64 {
    let at = |k: usize| g[(idx as isize + dir * (k * s) as isize) as usize];
    // derivative along the inward direction, then flip
    let inward = if n >= 5 {
        FACE5.iter().enumerate().map(|(k, w)| w * at(k)).sum::<f64>() / h
    } else if n >= 3 {
        (-2.0 * at(0) + 3.0 * at(1) - at(2)) / h
    } else {
        (at(1) - at(0)) / h
    };
    -inward
}

/// `½ ∮ (1/φ) ∂_ν |∇φ|² ds`, evaluated from one-sided interior
/// differences (no mirror closure), so fields that violate the Neumann
/// condition produce their actual boundary flux.
pub fn boundary_flux_term(phi: &Field) -> Result<f64> {
    require_positive(phi, "c")?;
    let g = phi.grid();
    let d = g.dim();
    let v = phi.values();
    let mut gsq = vec![0.0; g.len()];
    for a in 0..d {
        let da = extrapolated_derivative(v, g, a);
        for (s, x) in gsq.iter_mut().zip(&da) {
            *s += x * x;
        }
    }
    let mut total = Vec::new();
    for a in 0..d {
        let n = g.cells()[a];
        let s = g.stride(a);
        let h = g.spacing(a);
        let area = g.face_area(a);
        for idx in 0..g.len() {
            let i = g.coords(idx)[a];
            if i == 0 {
                let dn = outward_face_derivative(&gsq, idx, s, n, h, 1);
                total.push(0.5 * area * dn / face_value(v, idx, s, n, 1));
            }
            if i + 1 == n {
                let dn = outward_face_derivative(&gsq, idx, s, n, h, -1);
                total.push(0.5 * area * dn / face_value(v, idx, s, n, -1));
            }
        }
    }
    Ok(pairwise_sum(&total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn lp_norm_examples() {
        let g = Grid::unit(2, 8).unwrap();
        assert!((lp_norm(&Field::constant(g, 2.0), 2.0).unwrap() - 2.0).abs() < 1e-14);
        let g1 = Grid::unit(1, 8).unwrap();
        assert_eq!(lp_norm(&Field::constant(g1, -2.0), f64::INFINITY).unwrap(), 2.0);
        let g = Grid::unit(1, 1024).unwrap();
        let f = Field::from_fn(g, |x| x[0]);
        assert!((lp_norm(&f, 2.0).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-4);
        assert!(lp_norm(&f, 0.5).is_err());
    }

    #[test]
    fn mean_examples() {
        let g = Grid::unit(1, 16).unwrap();
        assert!((mean(&Field::constant(g, 1.5)) - 1.5).abs() < 1e-15);
        assert!(mean(&Field::from_fn(g, |x| (PI * x[0]).cos())).abs() < 1e-15);
    }

    #[test]
    fn log_hessian_examples() {
        let g = Grid::unit(1, 32).unwrap();
        let z = log_hessian_integrand(&Field::constant(g, 2.0)).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let e = log_hessian_integrand(&Field::from_fn(g, |x| (0.7 * x[0]).exp())).unwrap();
        for i in 1..31 {
            assert!(e.values()[i].abs() < 1e-18);
        }
        assert!(log_hessian_integrand(&Field::constant(g, 0.0)).is_err());
    }

    #[test]
    fn boundary_term_of_parabola() {
        // c = 1 + x²: ∂_ν|∇c|² = 8 at x = 1 and 0 at x = 0, so B = ½·8/2 = 2.
        for n in [16usize, 64] {
            let g = Grid::unit(1, n).unwrap();
            let c = Field::from_fn(g, |x| 1.0 + x[0] * x[0]);
            let b = boundary_flux_term(&c).unwrap();
            assert!((b - 2.0).abs() < 4.0 * g.spacing(0), "n={n} b={b}");
        }
        let g = Grid::unit(2, 8).unwrap();
        assert_eq!(boundary_flux_term(&Field::constant(g, 3.0)).unwrap(), 0.0);
    }
}
