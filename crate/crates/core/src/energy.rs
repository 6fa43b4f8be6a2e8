//! Energy functional, dissipation integrals and the energy–dissipation
//! identity audit.
//!
//! `E_ε(ρ,c) = ∫ ρ log ρ + (1/ε)(1−ερ) log(1−ερ) + 2|∇√c|²`, and along
//! solutions `dE/dt + D1 + D2 + D3 + D4 = B` with
//!
//! * `D1 = ∫ |∇ρ|² / (ρ(1−ερ))`
//! * `D2 = ∫ c |∇² log c|²`
//! * `D3 = ∫ ρ |∇c|² / (2c²)`
//! * `D4 = ∫ |∇c|² / (2c)`
//! * `B  = ½ ∮ (1/c) ∂_ν |∇c|²`

use serde::{Deserialize, Serialize};

use crate::dynamics::{State, Trajectory};
use crate::error::{Error, Result};
use crate::grid::pairwise_sum;
use crate::norms::{boundary_flux_term, grad_sq, log_hessian_integrand, require_positive};

/// Slack for round-off below zero (or above `1/ε`) in entropy arguments.
const ENTROPY_SLACK: f64 = 1e-12;

/// Absolute tolerance on the boundary term for box domains.
pub const BOUNDARY_TOL: f64 = 1e-6;

/// Per-step tolerance factor for Lyapunov monotonicity.
pub const MONOTONE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    pub energy: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    /// `∫ |∇ρ|²/ρ`, the ε = 0 version of D1.
    pub d1_plain: f64,
    pub boundary: f64,
    /// Filled in by [`audit_energy_identity`].
    pub residual: Option<f64>,
}

impl EnergyReport {
    pub fn total_dissipation(&self) -> f64 {
        self.d1 + self.d2 + self.d3 + self.d4
    }

    /// Integrand of the exponentially weighted bound: `D1' + D2 + 2D3 + 2D4`.
    pub fn bound_integrand(&self) -> f64 {
        self.d1_plain + self.d2 + 2.0 * self.d3 + 2.0 * self.d4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dissipation {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub d1_plain: f64,
    /// Set when `|∇ρ| > 0` where the mobility denominator vanishes.
    pub d1_infinite: bool,
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Entropy density `ρ log ρ + (1/ε)(1−ερ) log(1−ερ)`, extended by continuity.
pub fn entropy_density(rho: f64, eps: f64) -> Result<f64> {
    if rho < -ENTROPY_SLACK {
        return Err(Error::Positivity {
            field: "rho",
            cell: 0,
            value: rho,
        });
    }
    let mut s = xlogx(rho);
    if eps > 0.0 {
        let free = 1.0 - eps * rho;
        if free < -ENTROPY_SLACK {
            return Err(Error::VolumeFilling {
                cell: 0,
                value: rho,
                cap: 1.0 / eps,
            });
        }
        s += xlogx(free) / eps;
    }
    Ok(s)
}

/// `E_ε(ρ, c)` by midpoint quadrature.
pub fn energy(state: &State, eps: f64) -> Result<f64> {
    require_positive(&state.c, "c")?;
    let g = state.rho.grid();
    let mut dens = Vec::with_capacity(g.len());
    for (i, &r) in state.rho.values().iter().enumerate() {
        let s = entropy_density(r, eps).map_err(|e| match e {
            Error::Positivity { field, value, .. } => Error::Positivity {
                field,
                cell: i,
                value,
            },
            Error::VolumeFilling { value, cap, .. } => Error::VolumeFilling { cell: i, value, cap },
            other => other,
        })?;
        dens.push(s);
    }
    let sqrt_c = state.c.map(f64::sqrt);
    let gs = grad_sq(&sqrt_c);
    for (d, x) in dens.iter_mut().zip(&gs) {
        *d += 2.0 * x;
    }
    Ok(pairwise_sum(&dens) * g.cell_volume())
}

/// The four dissipation integrals (plus the ε = 0 version of D1).
pub fn dissipation(state: &State, eps: f64) -> Result<Dissipation> {
    require_positive(&state.c, "c")?;
    let g = state.rho.grid();
    let vol = g.cell_volume();
    let rho = state.rho.values();
    let c = state.c.values();
    let grho = grad_sq(&state.rho);
    let gc = grad_sq(&state.c);

    let mut infinite = false;
    let mut i1 = Vec::with_capacity(g.len());
    let mut i1p = Vec::with_capacity(g.len());
    let mut i3 = Vec::with_capacity(g.len());
    let mut i4 = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        let r = rho[k].max(0.0);
        let mob = r * (1.0 - eps * r);
        if mob > 0.0 {
            i1.push(grho[k] / mob);
        } else if grho[k] > 0.0 {
            infinite = true;
            i1.push(0.0);
        } else {
            i1.push(0.0);
        }
        if r > 0.0 {
            i1p.push(grho[k] / r);
        } else {
            i1p.push(0.0);
        }
        i3.push(r * gc[k] / (2.0 * c[k] * c[k]));
        i4.push(gc[k] / (2.0 * c[k]));
    }
    let d2 = log_hessian_integrand(&state.c)?.integral();
    Ok(Dissipation {
        d1: if infinite {
            f64::INFINITY
        } else {
            pairwise_sum(&i1) * vol
        },
        d2,
        d3: pairwise_sum(&i3) * vol,
        d4: pairwise_sum(&i4) * vol,
        d1_plain: pairwise_sum(&i1p) * vol,
        d1_infinite: infinite,
    })
}

/// `½ ∮ (1/c) ∂_ν |∇c|² ds`.
pub fn boundary_term(state: &State) -> Result<f64> {
    boundary_flux_term(&state.c)
}

pub fn energy_report(state: &State, eps: f64) -> Result<EnergyReport> {
    let e = energy(state, eps)?;
    let d = dissipation(state, eps)?;
    let b = boundary_term(state)?;
    Ok(EnergyReport {
        t: state.t,
        energy: e,
        d1: d.d1,
        d2: d.d2,
        d3: d.d3,
        d4: d.d4,
        d1_plain: d.d1_plain,
        boundary: b,
        residual: None,
    })
}

/// Summary of an energy–identity audit along one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    /// Reports with `residual` filled at interior probes.
    pub reports: Vec<EnergyReport>,
    pub max_residual: f64,
    pub monotone: bool,
    /// Largest `E(t_{n+1}) − E(t_n)` observed (negative when strictly decreasing).
    pub max_increase: f64,
    pub max_boundary: f64,
}

/// Residual of `dE/dt + ΣD − B` at every interior probe (centered
/// differences in time) and the Lyapunov monotonicity verdict.
pub fn audit_energy_identity(traj: &Trajectory) -> Result<EnergyAudit> {
    if traj.params.chi != 1.0 || traj.params.gamma != 1.0 {
        return Err(Error::Unsupported(format!(
            "energy identity only established for chi = gamma = 1 (got chi = {}, gamma = {})",
            traj.params.chi, traj.params.gamma
        )));
    }
    let mut reports: Vec<EnergyReport> = traj
        .records
        .iter()
        .map(|r| {
            r.energy
                .ok_or_else(|| Error::MissingSeries("energy reports".to_string()))
        })
        .collect::<Result<_>>()?;
    if reports.len() < 3 {
        return Err(Error::arg("energy audit needs at least three probes"));
    }
    // a shorter final interval (clipped at t_end) is dropped
    let spacing = reports[1].t - reports[0].t;
    let uniform = reports
        .windows(2)
        .take_while(|w| ((w[1].t - w[0].t) - spacing).abs() <= 1e-9 * spacing.max(1.0))
        .count();
    reports.truncate(uniform + 1);
    if reports.len() < 3 {
        return Err(Error::arg("energy audit needs at least three uniformly spaced probes"));
    }
    let mut max_residual: f64 = 0.0;
    for n in 1..reports.len() - 1 {
        let de = (reports[n + 1].energy - reports[n - 1].energy)
            / (reports[n + 1].t - reports[n - 1].t);
        let r = (de + reports[n].total_dissipation() - reports[n].boundary).abs();
        reports[n].residual = Some(r);
        max_residual = max_residual.max(r);
    }
    let mut monotone = true;
    let mut max_increase = f64::NEG_INFINITY;
    for w in reports.windows(2) {
        let inc = w[1].energy - w[0].energy;
        max_increase = max_increase.max(inc);
        if inc > MONOTONE_TOL * (1.0 + w[0].energy.abs()) {
            monotone = false;
        }
    }
    let max_boundary = reports.iter().map(|r| r.boundary).fold(f64::NEG_INFINITY, f64::max);
    Ok(EnergyAudit {
        reports,
        max_residual,
        monotone,
        max_increase,
        max_boundary,
    })
}

/// Ratio of maximal residuals between a coarse and a refined audit.
pub fn refinement_ratio(coarse: &EnergyAudit, fine: &EnergyAudit) -> f64 {
    coarse.max_residual / fine.max_residual
}

/// `∫_0^t e^{−κ0(t−s)} (D1' + D2 + 2D3 + 2D4)(s) ds` at every probe time,
/// by the trapezoidal rule on the probe grid.
pub fn exp_weighted_dissipation(traj: &Trajectory, kappa0: f64) -> Result<Vec<(f64, f64)>> {
    let reports: Vec<EnergyReport> = traj
        .records
        .iter()
        .map(|r| {
            r.energy
                .ok_or_else(|| Error::MissingSeries("energy reports".to_string()))
        })
        .collect::<Result<_>>()?;
    Ok(exp_weighted_series(&reports, kappa0))
}

pub fn exp_weighted_series(reports: &[EnergyReport], kappa0: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(reports.len());
    // Recursive form: I(t_{n+1}) = e^{−κ0 Δ} I(t_n) + trapezoid over [t_n, t_{n+1}].
    let mut acc = 0.0;
    for (n, r) in reports.iter().enumerate() {
        if n > 0 {
            let prev = &reports[n - 1];
            let dt = r.t - prev.t;
            let decay = (-kappa0 * dt).exp();
            acc = decay * acc + 0.5 * dt * (decay * prev.bound_integrand() + r.bound_integrand());
        }
        out.push((r.t, acc));
    }
    out
}

/// Running time integral of `D1' + D2 + 2D3 + 2D4` at each probe.
pub fn cumulative_dissipation(reports: &[EnergyReport]) -> Vec<(f64, f64)> {
    exp_weighted_series(reports, 0.0)
}

/// Default `κ0 = min{λ1, 1}/2`.
pub fn default_kappa0(lambda1: f64) -> f64 {
    0.5 * lambda1.min(1.0)
}
