//! IMEX time integration of
//!
//! ```text
//! ρ_t − Δρ = χ ∇·( ρ(1−ερ)/c ∇c )
//! γ c_t − Δc + c = ρ
//! ```
//!
//! with homogeneous Neumann conditions. Diffusion of ρ and the whole linear
//! part of the c-equation are implicit; the drift flux is explicit and in
//! conservative face form, so `Σ ρ vol` telescopes exactly.

use serde::{Deserialize, Serialize};

use crate::energy::{energy_report, EnergyReport};
use crate::error::{Error, Result};
use crate::grid::{check_same_grid, divergence, FaceField, Field, Grid};
use crate::norms::{grad_lp_norm, lp_norm, mean, scaling_triple, ScalingTriple};
use crate::spectral::{cg_shifted, fix_mean, NeumannSpectrum};

/// Model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub chi: f64,
    pub gamma: f64,
    pub eps: f64,
    /// Mass mean `M = (1/|Ω|) ∫ ρ_I`.
    pub mass_mean: f64,
}

/// `ζ0 = 1/‖ρ_I‖_∞`, the largest admissible ε.
pub fn zeta0(rho: &Field) -> f64 {
    1.0 / rho.max()
}

impl Params {
    /// Validates the constants against the initial density and caches `M`.
    pub fn new(chi: f64, gamma: f64, eps: f64, rho_initial: &Field) -> Result<Self> {
        let mut errs = Vec::new();
        if !(chi > 0.0 && chi.is_finite()) {
            errs.push(format!("chi must be positive, got {chi}"));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            errs.push(format!("gamma must be positive, got {gamma}"));
        }
        let m = mean(rho_initial);
        if !(m > 0.0) {
            errs.push(format!("initial mass mean must be positive, got {m}"));
        }
        if eps < 0.0 || !eps.is_finite() {
            errs.push(format!("eps must be non-negative, got {eps}"));
        } else if eps > 0.0 {
            let z = zeta0(rho_initial);
            if eps > z * (1.0 + 1e-12) {
                errs.push(format!(
                    "eps = {eps} is outside the admissible range (0, zeta0] with zeta0 = 1/max(rho_I) = {z}"
                ));
            }
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        Ok(Params {
            chi,
            gamma,
            eps,
            mass_mean: m,
        })
    }
}

/// Density/concentration pair at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub rho: Field,
    pub c: Field,
    pub t: f64,
}

impl State {
    /// Checks the initial-data conditions `ρ ≥ 0`, `ρ ≢ 0`, `c > 0`.
    pub fn new(rho: Field, c: Field, t: f64) -> Result<Self> {
        check_same_grid(rho.grid(), c.grid())?;
        let (i, v) = rho.argmin();
        if v < 0.0 {
            return Err(Error::Positivity {
                field: "rho",
                cell: i,
                value: v,
            });
        }
        if rho.max() <= 0.0 {
            return Err(Error::arg("initial density vanishes identically"));
        }
        let (i, v) = c.argmin();
        if v <= 0.0 {
            return Err(Error::Positivity {
                field: "c",
                cell: i,
                value: v,
            });
        }
        Ok(State { rho, c, t })
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    pub fn mass(&self) -> f64 {
        self.rho.integral()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Drift {
    Central,
    Upwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Tensor-product cosine-transform direct solve.
    Spectral,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub dt: f64,
    pub dt_adapt: bool,
    pub drift: Drift,
    pub linear_solver: LinearSolver,
    pub linear_solver_tol: f64,
    /// Smallest admissible concentration.
    pub c_floor: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            dt: 1e-3,
            dt_adapt: true,
            drift: Drift::Central,
            linear_solver: LinearSolver::Spectral,
            linear_solver_tol: 1e-10,
            c_floor: 1e-10,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            errs.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.linear_solver_tol > 0.0 && self.linear_solver_tol <= 1e-6) {
            errs.push(format!(
                "linear_solver_tol must lie in (0, 1e-6], got {}",
                self.linear_solver_tol
            ));
        }
        if !(self.c_floor > 0.0) {
            errs.push(format!("c_floor must be positive, got {}", self.c_floor));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Clean steps after which a halved dt is doubled again.
pub const DT_RECOVERY_STEPS: usize = 50;
/// Maximum number of consecutive dt halvings in one step.
pub const MAX_HALVINGS: usize = 12;

/// Face flux `F = χ m_face (∇c)_face` with `m = ρ(1−ερ)/c`.
pub fn drift_flux(state: &State, params: &Params, drift: Drift) -> Result<FaceField> {
    let g = *state.grid();
    let rho = state.rho.values();
    let c = state.c.values();
    let (i, v) = state.c.argmin();
    if v <= 0.0 {
        return Err(Error::Positivity {
            field: "c",
            cell: i,
            value: v,
        });
    }
    let eps = params.eps;
    let mob = |k: usize| rho[k] * (1.0 - eps * rho[k]) / c[k];
    let mut flux = FaceField::zeros(g);
    for a in 0..g.dim() {
        let s = g.stride(a);
        let h = g.spacing(a);
        let out = flux.axis_mut(a);
        for idx in 0..g.len() {
            let cc = g.coords(idx);
            if cc[a] == 0 {
                continue;
            }
            let (l, r) = (idx - s, idx);
            let grad = (c[r] - c[l]) / h;
            let m_face = match drift {
                Drift::Central => 0.5 * (mob(l) + mob(r)),
                Drift::Upwind => {
                    // mass moves against ∇c: from R to L when grad > 0
                    let (donor, receiver) = if grad > 0.0 { (r, l) } else { (l, r) };
                    rho[donor] * (1.0 - eps * rho[receiver]) / c[donor]
                }
            };
            out[g.face_index(a, cc)] = params.chi * m_face * grad;
        }
    }
    Ok(flux)
}

/// Reusable time stepper holding the spectral factorisation of the grid.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Grid,
    spectrum: NeumannSpectrum,
    pub params: Params,
    pub scheme: SchemeConfig,
    dt_current: f64,
    clean_steps: usize,
    drift: Drift,
}

impl Stepper {
    pub fn new(grid: Grid, params: Params, scheme: SchemeConfig) -> Result<Self> {
        scheme.validate()?;
        Ok(Stepper {
            grid,
            spectrum: NeumannSpectrum::new(grid),
            params,
            dt_current: scheme.dt,
            clean_steps: 0,
            drift: scheme.drift,
            scheme,
        })
    }

    /// Restores the adaptive-step state saved in a checkpoint.
    pub fn with_adaptive_state(mut self, dt_current: f64, clean_steps: usize) -> Self {
        self.dt_current = dt_current;
        self.clean_steps = clean_steps;
        self
    }

    /// Restores the drift discretisation, which may have fallen back to upwind.
    pub fn with_drift(mut self, drift: Drift) -> Self {
        self.drift = drift;
        self
    }

    pub fn dt_current(&self) -> f64 {
        self.dt_current
    }

    pub fn clean_steps(&self) -> usize {
        self.clean_steps
    }

    pub fn drift(&self) -> Drift {
        self.drift
    }

    fn solve(&self, alpha: f64, beta: f64, rhs: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        match self.scheme.linear_solver {
            LinearSolver::Spectral => Ok(self.spectrum.solve_shifted(alpha, beta, rhs)),
            LinearSolver::ConjugateGradient => {
                let (mut x, _) = cg_shifted(
                    &self.grid,
                    alpha,
                    beta,
                    rhs,
                    guess,
                    self.scheme.linear_solver_tol,
                    10_000,
                )?;
                fix_mean(&mut x, crate::grid::pairwise_sum(rhs) / alpha);
                Ok(x)
            }
        }
    }

    /// One IMEX step of size `dt` with the given drift discretisation.
    pub fn try_step(&self, state: &State, dt: f64, drift: Drift) -> Result<State> {
        let p = &self.params;
        let flux = drift_flux(state, p, drift)?;
        let div = divergence(&flux);
        let rhs: Vec<f64> = state
            .rho
            .values()
            .iter()
            .zip(div.values())
            .map(|(r, d)| r + dt * d)
            .collect();
        let rho_new = self.solve(1.0, dt, &rhs, state.rho.values())?;
        let t_new = state.t + dt;
        let scale = rho_new.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (k, &v) in rho_new.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { t: t_new });
            }
            if v < -1e-12 * scale {
                return Err(Error::Positivity {
                    field: "rho",
                    cell: k,
                    value: v,
                });
            }
            if p.eps > 0.0 && p.eps * v > 1.0 + 1e-12 {
                return Err(Error::VolumeFilling {
                    cell: k,
                    value: v,
                    cap: 1.0 / p.eps,
                });
            }
        }
        let k = dt / p.gamma;
        let rhs_c: Vec<f64> = state
            .c
            .values()
            .iter()
            .zip(&rho_new)
            .map(|(c, r)| c + k * r)
            .collect();
        let c_new = self.solve(1.0 + k, k, &rhs_c, state.c.values())?;
        for (idx, &v) in c_new.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { t: t_new });
            }
            if v < self.scheme.c_floor {
                return Err(Error::Positivity {
                    field: "c",
                    cell: idx,
                    value: v,
                });
            }
        }
        Ok(State {
            rho: Field::from_raw(self.grid, rho_new),
            c: Field::from_raw(self.grid, c_new),
            t: t_new,
        })
    }

    /// Advances by at most `max_dt`, adapting dt on positivity loss.
    /// Returns the new state; the step actually taken is `new.t − state.t`.
    pub fn advance(&mut self, state: &State, max_dt: f64) -> Result<State> {
        let mut halvings = 0;
        loop {
            let dt = self.dt_current.min(max_dt);
            match self.try_step(state, dt, self.drift) {
                Ok(next) => {
                    self.clean_steps += 1;
                    if self.scheme.dt_adapt
                        && self.clean_steps >= DT_RECOVERY_STEPS
                        && self.dt_current < self.scheme.dt
                    {
                        self.dt_current = (2.0 * self.dt_current).min(self.scheme.dt);
                        self.clean_steps = 0;
                    }
                    return Ok(next);
                }
                Err(e @ (Error::Positivity { .. } | Error::VolumeFilling { .. }))
                    if self.scheme.dt_adapt =>
                {
                    if halvings >= MAX_HALVINGS {
                        if self.drift == Drift::Central {
                            // fall back to the positivity-preserving flux
                            self.drift = Drift::Upwind;
                            self.dt_current = self.scheme.dt;
                            halvings = 0;
                            continue;
                        }
                        return Err(e);
                    }
                    self.dt_current *= 0.5;
                    self.clean_steps = 0;
                    halvings += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// One step of size `scheme.dt` without adaptation.
pub fn step(state: &State, params: &Params, scheme: &SchemeConfig) -> Result<State> {
    let stepper = Stepper::new(*state.grid(), *params, *scheme)?;
    stepper.try_step(state, scheme.dt, scheme.drift)
}

/// `(u, v) = (ρ − M, c − M)`.
pub fn reduced_form(state: &State, params: &Params) -> (Field, Field) {
    let m = params.mass_mean;
    (state.rho.map(|v| v - m), state.c.map(|v| v - m))
}

/// Inverse of [`reduced_form`].
pub fn from_reduced(u: &Field, v: &Field, mass_mean: f64, t: f64) -> State {
    State {
        rho: u.map(|x| x + mass_mean),
        c: v.map(|x| x + mass_mean),
        t,
    }
}

/// When diagnostics are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSchedule {
    /// Probe spacing in time.
    pub every: f64,
    /// Evaluate the energy report at each probe.
    pub energy: bool,
    /// Keep full field snapshots at each probe.
    pub keep_fields: bool,
}

impl ProbeSchedule {
    pub fn every(every: f64) -> Self {
        ProbeSchedule {
            every,
            energy: true,
            keep_fields: false,
        }
    }
}

/// Diagnostics at one probe time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub c_mean: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub c_min: f64,
    pub rho_dev_linf: f64,
    pub rho_dev_l2: f64,
    pub grad_c_linf: f64,
    pub c_dev_linf: f64,
    pub triple: ScalingTriple,
    /// `−d log ‖ρ − M‖_∞ / dt` from the previous probe.
    pub decay_rate: Option<f64>,
    pub energy: Option<EnergyReport>,
}

pub fn diagnose(state: &State, params: &Params, dt: f64, with_energy: bool) -> Result<DiagnosticRecord> {
    let m = params.mass_mean;
    let rho_dev = state.rho.map(|v| v - m);
    let c_dev = state.c.map(|v| v - m);
    Ok(DiagnosticRecord {
        t: state.t,
        dt,
        mass: state.mass(),
        c_mean: mean(&state.c),
        rho_min: state.rho.min(),
        rho_max: state.rho.max(),
        c_min: state.c.min(),
        rho_dev_linf: lp_norm(&rho_dev, f64::INFINITY)?,
        rho_dev_l2: lp_norm(&rho_dev, 2.0)?,
        grad_c_linf: grad_lp_norm(&state.c, f64::INFINITY)?,
        c_dev_linf: lp_norm(&c_dev, f64::INFINITY)?,
        triple: scaling_triple(&state.rho, &state.c, m)?,
        decay_rate: None,
        energy: if with_energy {
            Some(energy_report(state, params.eps)?)
        } else {
            None
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halt {
    pub t: f64,
    pub reason: String,
    pub exit_code: i32,
}

/// Time-indexed diagnostics of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid,
    pub params: Params,
    pub scheme: SchemeConfig,
    pub records: Vec<DiagnosticRecord>,
    pub snapshots: Vec<State>,
    pub final_state: State,
    pub steps: usize,
    pub dt_current: f64,
    pub clean_steps: usize,
    pub drift: Drift,
    pub halted: Option<Halt>,
}

impl Trajectory {
    /// Converts an early halt into an error.
    pub fn ensure_complete(&self) -> Result<()> {
        match &self.halted {
            None => Ok(()),
            Some(h) => Err(Error::Halted {
                t: h.t,
                reason: h.reason.clone(),
                exit_code: h.exit_code,
            }),
        }
    }

    pub fn series(&self, f: impl Fn(&DiagnosticRecord) -> f64) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, f(r))).collect()
    }
}

/// Integrates to `t_end`, recording diagnostics on the probe schedule.
/// Invariant violations stop the run and are reported in `halted`.
pub fn simulate(
    initial: &State,
    params: &Params,
    scheme: &SchemeConfig,
    t_end: f64,
    probes: &ProbeSchedule,
) -> Result<Trajectory> {
    let stepper = Stepper::new(*initial.grid(), *params, *scheme)?;
    simulate_with(stepper, initial, t_end, probes)
}

/// As [`simulate`], continuing with an existing stepper (e.g. one restored
/// from a checkpoint).
pub fn simulate_with(
    mut stepper: Stepper,
    initial: &State,
    t_end: f64,
    probes: &ProbeSchedule,
) -> Result<Trajectory> {
    if !(probes.every > 0.0) {
        return Err(Error::arg("probe spacing must be positive"));
    }
    if t_end < initial.t {
        return Err(Error::arg("t_end precedes the initial time"));
    }
    let params = stepper.params;
    let mut state = initial.clone();
    let mut records = vec![diagnose(&state, &params, stepper.dt_current(), probes.energy)?];
    let mut snapshots = Vec::new();
    if probes.keep_fields {
        snapshots.push(state.clone());
    }
    let t0 = initial.t;
    let n_probes = ((t_end - t0) / probes.every - 1e-9).ceil().max(0.0) as usize;
    let mut steps = 0usize;
    let mut halted = None;
    'outer: for p in 1..=n_probes {
        let target = (t0 + p as f64 * probes.every).min(t_end);
        while state.t < target - 1e-12 * probes.every {
            match stepper.advance(&state, target - state.t) {
                Ok(mut next) => {
                    if (next.t - target).abs() <= 1e-9 * probes.every {
                        next.t = target;
                    }
                    state = next;
                    steps += 1;
                }
                Err(e) => {
                    halted = Some(Halt {
                        t: state.t,
                        reason: e.to_string(),
                        exit_code: e.exit_code(),
                    });
                    break 'outer;
                }
            }
        }
        let mut rec = match diagnose(&state, &params, stepper.dt_current(), probes.energy) {
            Ok(r) => r,
            Err(e) => {
                halted = Some(Halt {
                    t: state.t,
                    reason: e.to_string(),
                    exit_code: e.exit_code(),
                });
                break;
            }
        };
        let prev = records.last().expect("initial record");
        if prev.rho_dev_linf > 0.0 && rec.rho_dev_linf > 0.0 {
            rec.decay_rate = Some(-(rec.rho_dev_linf / prev.rho_dev_linf).ln() / (rec.t - prev.t));
        }
        records.push(rec);
        if probes.keep_fields {
            snapshots.push(state.clone());
        }
    }
    Ok(Trajectory {
        grid: *initial.grid(),
        params,
        scheme: stepper.scheme,
        records,
        snapshots,
        final_state: state,
        steps,
        dt_current: stepper.dt_current(),
        clean_steps: stepper.clean_steps(),
        drift: stepper.drift(),
        halted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn perturbed(g: Grid, amp: f64) -> State {
        let rho = Field::from_fn(g, |x| 1.0 + amp * (PI * x[0]).cos());
        let c = Field::from_fn(g, |x| 1.2 + amp * (PI * x[0]).cos() * 0.5);
        State::new(rho, c, 0.0).unwrap()
    }

    #[test]
    fn params_validation() {
        let g = Grid::unit(1, 8).unwrap();
        let rho = Field::constant(g, 2.0);
        assert!(Params::new(1.0, 1.0, 0.5, &rho).is_ok());
        let err = Params::new(1.0, 1.0, 0.6, &rho).unwrap_err();
        assert!(err.to_string().contains("admissible range"));
        assert!(Params::new(-1.0, 1.0, 0.0, &rho).is_err());
        assert!(Params::new(1.0, 0.0, 0.0, &rho).is_err());
    }

    #[test]
    fn state_validation() {
        let g = Grid::unit(1, 8).unwrap();
        assert!(State::new(Field::constant(g, 0.0), Field::constant(g, 1.0), 0.0).is_err());
        assert!(State::new(Field::constant(g, 1.0), Field::constant(g, 0.0), 0.0).is_err());
        assert!(State::new(Field::constant(g, -1.0), Field::constant(g, 1.0), 0.0).is_err());
    }

    #[test]
    fn constant_state_has_zero_flux_and_is_fixed() {
        let g = Grid::unit(2, 8).unwrap();
        let s = State::new(Field::constant(g, 1.5), Field::constant(g, 1.5), 0.0).unwrap();
        let p = Params::new(1.0, 1.0, 0.0, &s.rho).unwrap();
        let f = drift_flux(&s, &p, Drift::Central).unwrap();
        assert!((0..2).all(|a| f.axis(a).iter().all(|&v| v == 0.0)));
        let next = step(&s, &p, &SchemeConfig::default()).unwrap();
        for (a, b) in next.rho.values().iter().zip(s.rho.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in next.c.values().iter().zip(s.c.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn saturated_mobility_vanishes() {
        let g = Grid::unit(1, 4).unwrap();
        let rho = Field::new(g, vec![2.0, 2.0, 1.0, 1.0]).unwrap();
        let c = Field::new(g, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = State::new(rho.clone(), c, 0.0).unwrap();
        let p = Params::new(1.0, 1.0, 0.5, &rho).unwrap();
        // face between cells 0 and 1: both saturated (ερ = 1)
        let f = drift_flux(&s, &p, Drift::Central).unwrap();
        assert_eq!(f.axis(0)[1], 0.0);
    }

    #[test]
    fn exponential_c_gives_unit_flux() {
        // ρ = 1, c = e^x, ε = 0: m ∇c = ∇c / c ≈ 1.
        let g = Grid::unit(1, 200).unwrap();
        let s = State::new(Field::constant(g, 1.0), Field::from_fn(g, |x| x[0].exp()), 0.0).unwrap();
        let p = Params::new(1.0, 1.0, 0.0, &s.rho).unwrap();
        let f = drift_flux(&s, &p, Drift::Central).unwrap();
        let h = g.spacing(0);
        for (i, &v) in f.axis(0).iter().enumerate().take(200).skip(1) {
            // face-by-face: ½(e^{-x_L} + e^{-x_R})(e^{x_R} − e^{x_L})/h
            let xl = (i as f64 - 0.5) * h;
            let xr = xl + h;
            let want = 0.5 * ((-xl).exp() + (-xr).exp()) * (xr.exp() - xl.exp()) / h;
            assert!((v - want).abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-4);
        }
        assert_eq!(f.axis(0)[0], 0.0);
        assert_eq!(f.axis(0)[200], 0.0);
    }

    #[test]
    fn step_conserves_mass_and_mean_recurrence() {
        let g = Grid::unit(2, 16).unwrap();
        let s = perturbed(g, 0.3);
        let p = Params::new(1.0, 2.0, 0.0, &s.rho).unwrap();
        let scheme = SchemeConfig::default();
        let next = step(&s, &p, &scheme).unwrap();
        assert!(((next.mass() - s.mass()) / s.mass()).abs() < 1e-14);
        let k = scheme.dt / p.gamma;
        let want = (mean(&s.c) + k * mean(&s.rho)) / (1.0 + k);
        assert!((mean(&next.c) - want).abs() < 1e-14);
    }

    #[test]
    fn cg_and_spectral_steps_agree() {
        let g = Grid::new(2, &[1.0, 1.5], &[10, 12]).unwrap();
        let s = perturbed(g, 0.4);
        let p = Params::new(1.0, 1.0, 0.0, &s.rho).unwrap();
        let a = step(&s, &p, &SchemeConfig::default()).unwrap();
        let cg = SchemeConfig {
            linear_solver: LinearSolver::ConjugateGradient,
            ..SchemeConfig::default()
        };
        let b = step(&s, &p, &cg).unwrap();
        for (x, y) in a.rho.values().iter().zip(b.rho.values()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn upwind_keeps_density_in_volume_filling_range() {
        let g = Grid::unit(1, 32).unwrap();
        let rho = Field::from_fn(g, |x| 1.0 + 0.9 * (PI * x[0]).cos());
        let c = Field::from_fn(g, |x| 1.0 + 0.8 * (2.0 * PI * x[0]).cos());
        let s = State::new(rho.clone(), c, 0.0).unwrap();
        let eps = zeta0(&rho);
        let p = Params::new(1.0, 1.0, eps, &rho).unwrap();
        let scheme = SchemeConfig {
            drift: Drift::Upwind,
            dt: 5e-4,
            ..SchemeConfig::default()
        };
        let traj = simulate(&s, &p, &scheme, 0.2, &ProbeSchedule::every(0.01)).unwrap();
        assert!(traj.halted.is_none());
        for r in &traj.records {
            assert!(r.rho_min >= -1e-12);
            assert!(r.rho_max * eps <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn reduced_form_round_trip() {
        let g = Grid::unit(1, 16).unwrap();
        let s = perturbed(g, 0.2);
        let p = Params::new(1.0, 1.0, 0.0, &s.rho).unwrap();
        let (u, v) = reduced_form(&s, &p);
        assert!(mean(&u).abs() < 1e-15);
        let back = from_reduced(&u, &v, p.mass_mean, 0.0);
        for (a, b) in back.rho.values().iter().zip(s.rho.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        let cst = State::new(Field::constant(g, 1.0), Field::constant(g, 1.0), 0.0).unwrap();
        let p0 = Params::new(1.0, 1.0, 0.0, &cst.rho).unwrap();
        let (u0, v0) = reduced_form(&cst, &p0);
        assert!(u0.values().iter().chain(v0.values()).all(|&x| x == 0.0));
    }
}
