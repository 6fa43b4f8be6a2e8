//! Quadrature checks of functional identities and inequalities on smooth
//! positive Neumann-compatible fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_laplacian, check_same_grid, dirichlet_energy, Field, Grid};
use crate::norms::{
    boundary_flux_term, cell_gradient, grad_lp_norm, grad_sq, hessian_sq, log_hessian_integrand,
    lp_norm, mean, require_positive, weber_fechner_check,
};
use crate::par;
use crate::random::{mean_zero_field, positive_field, sample_rng, FieldGenerator};

fn integrate(vals: &[f64], grid: &Grid) -> f64 {
    crate::grid::pairwise_sum(vals) * grid.cell_volume()
}

/// Ratio of two integrals with the conventions `0/0 = 0` and a nonzero
/// numerator over a vanishing denominator flagged as degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub degenerate: bool,
}

impl Ratio {
    fn new(lhs: f64, rhs: f64) -> Self {
        let tiny = 1e-300;
        if rhs.abs() <= tiny || rhs <= 1e-14 * lhs.abs() {
            Ratio {
                lhs,
                rhs,
                ratio: 0.0,
                degenerate: lhs.abs() > tiny,
            }
        } else {
            Ratio {
                lhs,
                rhs,
                ratio: lhs / rhs,
                degenerate: false,
            }
        }
    }
}

/// The function `h` of the weighted Hessian inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HFamily {
    /// `h(s) = s`, `Θ = log`.
    Identity,
    /// `h(s) = s^a`, `a > 0`.
    Power { a: f64 },
}

impl HFamily {
    fn exponent(self) -> f64 {
        match self {
            HFamily::Identity => 1.0,
            HFamily::Power { a } => a,
        }
    }

    /// `Θ(s) = ∫_1^s dσ/h(σ)`.
    pub fn theta(self, s: f64) -> f64 {
        let a = self.exponent();
        if a == 1.0 {
            s.ln()
        } else {
            (s.powf(1.0 - a) - 1.0) / (1.0 - a)
        }
    }
}

/// The explicit constant `(2 + √d)²`.
pub fn quartic_constant(d: usize) -> f64 {
    (2.0 + (d as f64).sqrt()).powi(2)
}

/// `∫ h'/h³ |∇φ|⁴` over `∫ h/h' |∇²Θ(φ)|²`.
pub fn check_quartic_gradient(phi: &Field, h: HFamily) -> Result<Ratio> {
    require_positive(phi, "phi")?;
    let a = h.exponent();
    if !(a > 0.0) {
        return Err(Error::arg("h(s) = s^a needs a > 0"));
    }
    let g = phi.grid();
    let gs = grad_sq(phi);
    let theta = phi.map(|s| h.theta(s));
    let hs = hessian_sq(&theta);
    let p = phi.values();
    // h'/h³ = a s^{−2a−1}, h/h' = s/a
    let lhs: Vec<f64> = (0..g.len())
        .map(|i| a * p[i].powf(-2.0 * a - 1.0) * gs[i] * gs[i])
        .collect();
    let rhs: Vec<f64> = (0..g.len()).map(|i| p[i] / a * hs[i]).collect();
    Ok(Ratio::new(integrate(&lhs, g), integrate(&rhs, g)))
}

/// `∫(|Δφ|²/φ + |Δ√φ|² + |∇φ|⁴/φ³)` over `∫φ|∇² log φ|²`.
pub fn check_log_hessian_control(phi: &Field) -> Result<Ratio> {
    require_positive(phi, "phi")?;
    let g = phi.grid();
    let lap = apply_laplacian(phi);
    let lap_sqrt = apply_laplacian(&phi.map(f64::sqrt));
    let gs = grad_sq(phi);
    let p = phi.values();
    let lhs: Vec<f64> = (0..g.len())
        .map(|i| {
            let l = lap.values()[i];
            let ls = lap_sqrt.values()[i];
            l * l / p[i] + ls * ls + gs[i] * gs[i] / p[i].powi(3)
        })
        .collect();
    let rhs = log_hessian_integrand(phi)?;
    Ok(Ratio::new(integrate(&lhs, g), rhs.integral()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Both sides of
/// `∫[−∇φ·∇(Δφ/φ) − ½|∇log φ|²Δφ] = −½∮(1/φ)∂_ν|∇φ|² + ∫φ|∇² log φ|²`.
/// The first integral is taken over faces, where summation by parts makes
/// it equal to `∫(Δ_hφ)²/φ`.
pub fn check_log_hessian_identity(phi: &Field) -> Result<IdentityResidual> {
    require_positive(phi, "phi")?;
    let g = phi.grid();
    let lap = apply_laplacian(phi);
    let psi = lap.zip_map(phi, |l, p| l / p)?;
    let gp = crate::grid::gradient_faces(phi);
    let gq = crate::grid::gradient_faces(&psi);
    let mut dot = 0.0;
    for a in 0..g.dim() {
        let prods: Vec<f64> = gp.axis(a).iter().zip(gq.axis(a)).map(|(x, y)| x * y).collect();
        dot += crate::grid::pairwise_sum(&prods);
    }
    dot *= g.cell_volume();
    let glog = grad_sq(&phi.map(f64::ln));
    let second: Vec<f64> = glog.iter().zip(lap.values()).map(|(q, l)| 0.5 * q * l).collect();
    let lhs = -dot - integrate(&second, g);
    let rhs = -boundary_flux_term(phi)? + log_hessian_integrand(phi)?.integral();
    Ok(IdentityResidual {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Embeddings {
    /// `‖ρ − M‖²_{L^{3/2}}`.
    pub lhs1: f64,
    /// `∫|∇ρ|²/ρ`.
    pub rhs1: f64,
    /// `‖∇c‖²_{L³} + ‖c − c̄‖²_∞`.
    pub lhs2: f64,
    /// `∫(c|∇² log c|² + |∇c|²/c)`.
    pub rhs2: f64,
}

impl Embeddings {
    pub fn ratio1(&self) -> Ratio {
        Ratio::new(self.lhs1, self.rhs1)
    }

    pub fn ratio2(&self) -> Ratio {
        Ratio::new(self.lhs2, self.rhs2)
    }
}

/// Both sides of the two three-dimensional embedding estimates.
pub fn check_embeddings_3d(rho: &Field, c: &Field) -> Result<Embeddings> {
    check_same_grid(rho.grid(), c.grid())?;
    if rho.grid().dim() != 3 {
        return Err(Error::arg(format!(
            "embedding check needs d = 3, got d = {}",
            rho.grid().dim()
        )));
    }
    require_positive(rho, "rho")?;
    require_positive(c, "c")?;
    let g = rho.grid();
    let m = mean(rho);
    let lhs1 = lp_norm(&rho.map(|v| v - m), 1.5)?.powi(2);
    let fisher: Vec<f64> = grad_sq(rho).iter().zip(rho.values()).map(|(q, r)| q / r).collect();
    let rhs1 = integrate(&fisher, g);
    let cm = mean(c);
    let lhs2 = grad_lp_norm(c, 3.0)?.powi(2) + lp_norm(&c.map(|v| v - cm), f64::INFINITY)?.powi(2);
    let cf: Vec<f64> = grad_sq(c).iter().zip(c.values()).map(|(q, v)| q / v).collect();
    let rhs2 = log_hessian_integrand(c)?.integral() + integrate(&cf, g);
    Ok(Embeddings {
        lhs1,
        rhs1,
        lhs2,
        rhs2,
    })
}

/// `(∫|∇ρ|)²` and `(∫|∇ρ|²/ρ)(∫ρ)`; the first never exceeds the second.
pub fn fisher_chain(rho: &Field) -> Result<(f64, f64)> {
    require_positive(rho, "rho")?;
    let g = rho.grid();
    let gr = cell_gradient(rho);
    let mag: Vec<f64> = (0..g.len())
        .map(|i| gr.iter().map(|ax| ax[i] * ax[i]).sum::<f64>().sqrt())
        .collect();
    let fisher: Vec<f64> = mag.iter().zip(rho.values()).map(|(m, r)| m * m / r).collect();
    Ok((integrate(&mag, g).powi(2), integrate(&fisher, g) * rho.integral()))
}

/// `‖∇_h w‖² − λ₁ʰ‖w‖²` for mean-zero `w`.
pub fn check_poincare(w: &Field) -> Result<f64> {
    let m = mean(w);
    let scale = w.values().iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if m.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::arg(format!("Poincaré check needs a mean-zero field, got mean {m:e}")));
    }
    Ok(dirichlet_energy(w) - w.grid().lambda1() * lp_norm(w, 2.0)?.powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldEnsemble {
    pub grid: Grid,
    pub count: usize,
    pub generator: FieldGenerator,
    pub seed: u64,
}

impl FieldEnsemble {
    pub fn new(grid: Grid, count: usize, generator: FieldGenerator, seed: u64) -> Result<Self> {
        generator.validate(&grid)?;
        if count == 0 {
            return Err(Error::arg("ensemble size must be positive"));
        }
        Ok(FieldEnsemble {
            grid,
            count,
            generator,
            seed,
        })
    }

    /// Sample `i` on this ensemble's grid.
    pub fn sample(&self, i: usize) -> Result<Field> {
        self.sample_on(&self.grid, i)
    }

    /// Sample `i` evaluated on another grid of the same box; used for
    /// refinement studies.
    pub fn sample_on(&self, grid: &Grid, i: usize) -> Result<Field> {
        positive_field(grid, &self.generator, 1.0, &mut sample_rng(self.seed, i as u64))
    }

    /// Mean-zero, unit-norm sample `i`.
    pub fn mean_zero_sample(&self, i: usize) -> Result<Field> {
        mean_zero_field(&self.grid, &self.generator, &mut sample_rng(self.seed, i as u64))
    }

    /// Evaluates `f` on every sample in parallel, in sample order.
    pub fn map<T: Send>(&self, f: impl Fn(usize, Field) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        par::map_indexed(self.count, |i| f(i, self.sample(i)?))
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub check: String,
    pub d: usize,
    pub cells: Vec<usize>,
    pub samples: usize,
    pub sup_ratio: f64,
    pub degenerate_count: usize,
    pub seed: u64,
    pub values: Vec<f64>,
}

impl EnsembleSummary {
    fn from_ratios(check: &str, ens: &FieldEnsemble, ratios: &[Ratio]) -> Self {
        let values: Vec<f64> = ratios.iter().map(|r| r.ratio).collect();
        EnsembleSummary {
            check: check.to_string(),
            d: ens.grid.dim(),
            cells: ens.grid.cells().to_vec(),
            samples: ens.count,
            sup_ratio: values.iter().copied().fold(0.0, f64::max),
            degenerate_count: ratios.iter().filter(|r| r.degenerate).count(),
            seed: ens.seed,
            values,
        }
    }

    fn from_values(check: &str, ens: &FieldEnsemble, values: Vec<f64>) -> Self {
        EnsembleSummary {
            check: check.to_string(),
            d: ens.grid.dim(),
            cells: ens.grid.cells().to_vec(),
            samples: ens.count,
            sup_ratio: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            degenerate_count: 0,
            seed: ens.seed,
            values,
        }
    }
}

pub fn ensemble_quartic_gradient(ens: &FieldEnsemble, h: HFamily) -> Result<EnsembleSummary> {
    let r = ens.map(|_, phi| check_quartic_gradient(&phi, h))?;
    Ok(EnsembleSummary::from_ratios("quartic_gradient", ens, &r))
}

pub fn ensemble_log_hessian_control(ens: &FieldEnsemble) -> Result<EnsembleSummary> {
    let r = ens.map(|_, phi| check_log_hessian_control(&phi))?;
    Ok(EnsembleSummary::from_ratios("log_hessian_control", ens, &r))
}

/// Per-sample residuals of the pointwise square-root identity.
pub fn ensemble_sqrt_identity(ens: &FieldEnsemble) -> Result<EnsembleSummary> {
    let v = ens.map(|_, phi| weber_fechner_check(&phi))?;
    Ok(EnsembleSummary::from_values("sqrt_identity", ens, v))
}

pub fn ensemble_log_hessian_identity(ens: &FieldEnsemble) -> Result<EnsembleSummary> {
    let v = ens.map(|_, phi| Ok(check_log_hessian_identity(&phi)?.residual))?;
    Ok(EnsembleSummary::from_values("log_hessian_identity", ens, v))
}

/// Poincaré margins normalised by `‖w‖²`. Here `sup_ratio` holds the
/// smallest margin, and `values` holds all of them.
pub fn ensemble_poincare(ens: &FieldEnsemble) -> Result<EnsembleSummary> {
    let v: Vec<f64> = par::map_indexed(ens.count, |i| {
        let w = ens.mean_zero_sample(i)?;
        let n = lp_norm(&w, 2.0)?.powi(2);
        Ok(check_poincare(&w)? / n)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut s = EnsembleSummary::from_values("poincare", ens, v);
    s.sup_ratio = s.values.iter().copied().fold(f64::INFINITY, f64::min);
    s.check = "poincare_min_margin".into();
    Ok(s)
}

/// Ratios of both embedding estimates; ρ and c are consecutive draws from
/// the sample stream.
pub fn ensemble_embeddings(ens: &FieldEnsemble) -> Result<(EnsembleSummary, EnsembleSummary)> {
    let g = ens.grid;
    let pairs = par::map_indexed(ens.count, |i| {
        let mut rng = sample_rng(ens.seed, i as u64);
        let rho = positive_field(&g, &ens.generator, 1.0, &mut rng)?;
        let c = positive_field(&g, &ens.generator, 1.0, &mut rng)?;
        let e = check_embeddings_3d(&rho, &c)?;
        Ok((e.ratio1(), e.ratio2()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (a, b): (Vec<Ratio>, Vec<Ratio>) = pairs.into_iter().unzip();
    Ok((
        EnsembleSummary::from_ratios("embedding_l32", ens, &a),
        EnsembleSummary::from_ratios("embedding_l3_linf", ens, &b),
    ))
}

/// Per-sample ratio `residual(N) / residual(2N)` for an identity check
/// evaluated on the ensemble grid and its dyadic refinement.
pub fn dyadic_ratios(
    ens: &FieldEnsemble,
    residual: impl Fn(&Field) -> Result<f64> + Sync + Send,
) -> Result<Vec<f64>> {
    let fine = ens.grid.refined()?;
    par::map_indexed(ens.count, |i| {
        let a = residual(&ens.sample(i)?)?;
        let b = residual(&ens.sample_on(&fine, i)?)?;
        Ok(if b > 0.0 { a / b } else { f64::INFINITY })
    })
    .into_iter()
    .collect()
}

/// Ratio of ensemble RMS residuals on the grid and on its dyadic refinement.
/// Individual ratios are noisy when separate O(h²) error terms nearly cancel
/// for a particular sample; the RMS is not.
pub fn dyadic_rms_ratio(
    ens: &FieldEnsemble,
    residual: impl Fn(&Field) -> Result<f64> + Sync + Send,
) -> Result<f64> {
    let fine = ens.grid.refined()?;
    let pairs: Vec<(f64, f64)> = par::map_indexed(ens.count, |i| {
        let a = residual(&ens.sample(i)?)?;
        let b = residual(&ens.sample_on(&fine, i)?)?;
        Ok((a * a, b * b))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let (a, b) = pairs.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0, s.1 + p.1));
    Ok(if b > 0.0 { (a / b).sqrt() } else { f64::INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constants_give_zero_ratios() {
        let g = Grid::unit(2, 16).unwrap();
        let phi = Field::constant(g, 2.0);
        let r = check_quartic_gradient(&phi, HFamily::Identity).unwrap();
        assert_eq!((r.ratio, r.degenerate), (0.0, false));
        assert_eq!(check_log_hessian_control(&phi).unwrap().ratio, 0.0);
        assert!(check_log_hessian_identity(&phi).unwrap().residual < 1e-14);
        let g3 = Grid::unit(3, 4).unwrap();
        let e = check_embeddings_3d(&Field::constant(g3, 1.0), &Field::constant(g3, 3.0)).unwrap();
        assert_eq!((e.lhs1, e.rhs1, e.lhs2, e.rhs2), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn theta_of_power_family() {
        let h = HFamily::Power { a: 0.5 };
        assert!((h.theta(4.0) - 2.0).abs() < 1e-14);
        assert_eq!(HFamily::Identity.theta(1.0), 0.0);
        assert!((HFamily::Power { a: 1.0 }.theta(3.0) - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn poincare_equality_on_first_mode_and_rejects_constants() {
        let g = Grid::new(2, &[1.0, 2.0], &[16, 32]).unwrap();
        let w = Field::from_fn(g, |x| (PI * x[1] / 2.0).cos());
        let m = check_poincare(&w).unwrap();
        assert!(m.abs() < 1e-10 * lp_norm(&w, 2.0).unwrap().powi(2));
        assert!(check_poincare(&Field::constant(g, 1.0)).is_err());
        assert!(check_poincare(&Field::zeros(g)).is_ok());
    }

    #[test]
    fn quartic_single_mode_ratio_is_below_constant() {
        let g = Grid::unit(1, 256).unwrap();
        let phi = Field::from_fn(g, |x| (0.5 * (PI * x[0]).cos()).exp());
        let r = check_quartic_gradient(&phi, HFamily::Identity).unwrap();
        assert!(r.ratio > 0.0 && r.ratio < quartic_constant(1));
    }

    #[test]
    fn n9_converges_in_one_dimension() {
        let res = |n: usize| {
            let g = Grid::unit(1, n).unwrap();
            let phi = Field::from_fn(g, |x| (PI * x[0]).cos().exp());
            check_log_hessian_identity(&phi).unwrap().residual
        };
        let (a, b) = (res(128), res(256));
        assert!(a / b > 3.0 && a / b < 5.0, "{a} {b}");
    }

    #[test]
    fn fisher_chain_holds_discretely() {
        let g = Grid::unit(3, 8).unwrap();
        let rho = Field::from_fn(g, |x| 1.0 + 0.5 * (PI * x[0]).cos() * (PI * x[2]).cos());
        let (a, b) = fisher_chain(&rho).unwrap();
        assert!(a <= b * (1.0 + 1e-12));
    }

    #[test]
    fn embeddings_need_three_dimensions() {
        let g = Grid::unit(2, 8).unwrap();
        assert!(check_embeddings_3d(&Field::constant(g, 1.0), &Field::constant(g, 1.0)).is_err());
    }
}
