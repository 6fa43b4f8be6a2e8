//! Linearization around the constant state `(M, M)`:
//!
//! ```text
//! u_t = Δu + aΔv,    v_t = Δv − v + u,    a = 1 − εM ∈ [½, 1]
//! ```
//!
//! Each discrete Neumann mode with eigenvalue λ of `−Δ_h` evolves under the
//! 2×2 matrix `[[−λ, −aλ], [1, −λ−1]]`, whose exponential is closed form.
//! Also hosts the empirical estimators for the heat-semigroup constants and
//! the singular convolution bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_same_grid, divergence, FaceField, Field, Grid};
use crate::norms::{grad_lp_norm, lp_norm, mean};
use crate::par;
use crate::random::{draw_series, mean_zero_field, sample_rng, FieldGenerator};
use crate::spectral::NeumannSpectrum;

/// `exp(tB)` for `B = [[−λ, −aλ], [1, −λ−1]]`, row-major.
///
/// With `s = −λ − ½` and `N = B − sI` one has `N² = (¼ − aλ) I`, so
/// `exp(tB) = e^{st} (C(t) I + S(t) N)` with hyperbolic, trigonometric or
/// (near the double eigenvalue) series forms of `C` and `S`.
pub fn mode_exponential(lambda: f64, a: f64, t: f64) -> [[f64; 2]; 2] {
    let s = -lambda - 0.5;
    let q = 0.25 - a * lambda;
    let (ec, es) = if q.abs() * t * t < 1e-4 {
        let z = q * t * t;
        let e = (s * t).exp();
        (
            e * (1.0 + z / 2.0 + z * z / 24.0 + z * z * z / 720.0),
            e * t * (1.0 + z / 6.0 + z * z / 120.0 + z * z * z / 5040.0),
        )
    } else if q > 0.0 {
        let r = q.sqrt();
        let ep = ((s + r) * t).exp();
        let em = ((s - r) * t).exp();
        (0.5 * (ep + em), 0.5 * (ep - em) / r)
    } else {
        let w = (-q).sqrt();
        let e = (s * t).exp();
        (e * (w * t).cos(), e * (w * t).sin() / w)
    };
    [
        [ec + 0.5 * es, -a * lambda * es],
        [es, ec - 0.5 * es],
    ]
}

/// Eigenvalues of the mode matrix as `(re, im)` pairs, slowest first.
pub fn mode_eigenvalues(lambda: f64, a: f64) -> [(f64, f64); 2] {
    let s = -lambda - 0.5;
    let q = 0.25 - a * lambda;
    if q >= 0.0 {
        let r = q.sqrt();
        [(s + r, 0.0), (s - r, 0.0)]
    } else {
        let w = (-q).sqrt();
        [(s, w), (s, -w)]
    }
}

/// `−Re` of the slowest eigenvalue of the mode matrix: the asymptotic decay
/// rate of a solution dominated by that mode.
pub fn slow_decay_rate(lambda: f64, a: f64) -> f64 {
    -mode_eigenvalues(lambda, a)[0].0
}

#[derive(Debug, Clone)]
pub struct BlockOperator {
    grid: Grid,
    a: f64,
    spectrum: NeumannSpectrum,
    weights: Vec<f64>,
}

impl BlockOperator {
    pub fn new(grid: Grid, a: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&a) {
            return Err(Error::arg(format!("coupling a = {a} must lie in [1/2, 1]")));
        }
        let spectrum = NeumannSpectrum::new(grid);
        // Parseval weights of the unnormalised tensor DCT-II
        let weights = (0..grid.len())
            .map(|idx| {
                let c = grid.coords(idx);
                (0..grid.dim())
                    .map(|ax| {
                        let n = grid.cells()[ax] as f64;
                        if c[ax] == 0 {
                            1.0 / n
                        } else {
                            2.0 / n
                        }
                    })
                    .product::<f64>()
                    * grid.cell_volume()
            })
            .collect();
        Ok(BlockOperator {
            grid,
            a,
            spectrum,
            weights,
        })
    }

    /// Builds the operator for `a = 1 − εM`.
    pub fn from_eps(grid: Grid, eps: f64, mass_mean: f64) -> Result<Self> {
        Self::new(grid, 1.0 - eps * mass_mean)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spectrum(&self) -> &NeumannSpectrum {
        &self.spectrum
    }

    fn modal(&self, init: &LinState) -> (Vec<f64>, Vec<f64>) {
        let mut u = self.spectrum.forward(init.u.values());
        // the constant mode of u is zero by precondition; drop its round-off
        u[0] = 0.0;
        (u, self.spectrum.forward(init.v.values()))
    }

    fn evolve_modal(&self, u: &[f64], v: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
        let mut uo = vec![0.0; u.len()];
        let mut vo = vec![0.0; v.len()];
        for k in 0..u.len() {
            let e = mode_exponential(self.spectrum.eigenvalue(k), self.a, t);
            uo[k] = e[0][0] * u[k] + e[0][1] * v[k];
            vo[k] = e[1][0] * u[k] + e[1][1] * v[k];
        }
        (uo, vo)
    }

    /// `(‖u‖², ‖∇_h v‖²)` from modal coefficients.
    fn modal_energy(&self, u: &[f64], v: &[f64]) -> (f64, f64) {
        let mut uu = 0.0;
        let mut gv = 0.0;
        for k in 0..u.len() {
            uu += self.weights[k] * u[k] * u[k];
            gv += self.weights[k] * self.spectrum.eigenvalue(k) * v[k] * v[k];
        }
        (uu, gv)
    }
}

/// Perturbation pair `(u, v)`; `u` has zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct LinState {
    pub u: Field,
    pub v: Field,
    pub t: f64,
}

impl LinState {
    pub fn new(u: Field, v: Field, t: f64) -> Result<Self> {
        check_same_grid(u.grid(), v.grid())?;
        let m = mean(&u);
        let scale = u.values().iter().fold(1.0f64, |s, x| s.max(x.abs()));
        if m.abs() > 1e-10 * scale {
            return Err(Error::arg(format!("u must have zero mean, got mean {m:e}")));
        }
        Ok(LinState { u, v, t })
    }
}

/// Exact solution at time `init.t + t`.
pub fn evolve_linear(op: &BlockOperator, init: &LinState, t: f64) -> Result<LinState> {
    check_same_grid(op.grid(), init.u.grid())?;
    if !(t >= 0.0) {
        return Err(Error::arg("evolution time must be non-negative"));
    }
    let (u, v) = op.modal(init);
    let (u, v) = op.evolve_modal(&u, &v, t);
    let sp = op.spectrum();
    let mut u = sp.inverse(&u);
    let m = crate::grid::pairwise_sum(&u) / u.len() as f64;
    u.iter_mut().for_each(|x| *x -= m);
    Ok(LinState {
        u: Field::new(op.grid, u)?,
        v: Field::new(op.grid, sp.inverse(&v))?,
        t: init.t + t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayMargin {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// Margins of `‖u‖² + a‖∇v‖² ≤ e^{−2λ₁t}(‖u_I‖² + a‖∇v_I‖²)` with the
/// discrete `λ₁`. Norms are evaluated modally so that round-off in the
/// slowly decaying mean of `v` does not pollute the gradient.
pub fn decay_check(op: &BlockOperator, init: &LinState, times: &[f64]) -> Result<Vec<DecayMargin>> {
    check_same_grid(op.grid(), init.u.grid())?;
    let (u0, v0) = op.modal(init);
    let (a0, b0) = op.modal_energy(&u0, &v0);
    let q0 = a0 + op.a * b0;
    let l1 = op.grid.lambda1();
    Ok(times
        .iter()
        .map(|&t| {
            let (u, v) = op.evolve_modal(&u0, &v0, t);
            let (a, b) = op.modal_energy(&u, &v);
            let lhs = a + op.a * b;
            let rhs = (-2.0 * l1 * t).exp() * q0;
            DecayMargin {
                t,
                lhs,
                rhs,
                margin: rhs - lhs,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemigroupItem {
    /// `‖e^{tΔ}w‖_p` against `‖w‖_q`, mean-zero `w`.
    I,
    /// `‖∇e^{tΔ}w‖_p` against `‖w‖_q`.
    Ii,
    /// `‖∇e^{tΔ}w‖_p` against `‖∇w‖_q`.
    Iii,
    /// `‖e^{tΔ}∇·w‖_p` against `‖w‖_q` for vector fields `w`.
    Iv,
}

impl SemigroupItem {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(SemigroupItem::I),
            "ii" | "2" => Ok(SemigroupItem::Ii),
            "iii" | "3" => Ok(SemigroupItem::Iii),
            "iv" | "4" => Ok(SemigroupItem::Iv),
            _ => Err(Error::arg(format!("unknown semigroup item {s:?}"))),
        }
    }

    pub fn validate(self, p: f64, q: f64) -> Result<()> {
        let ok = match self {
            SemigroupItem::I | SemigroupItem::Ii => 1.0 <= q && q <= p,
            SemigroupItem::Iii => 2.0 <= q && q <= p && p.is_finite(),
            SemigroupItem::Iv => 1.0 < q && q <= p,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!("(p, q) = ({p}, {q}) is outside the range of item {self:?}")))
        }
    }

    /// Exponent of `t` inside `1 + t^{−e}`.
    fn singular_exponent(self, d: f64, p: f64, q: f64) -> f64 {
        let base = d / 2.0 * (1.0 / q - 1.0 / p);
        match self {
            SemigroupItem::I | SemigroupItem::Iii => base,
            SemigroupItem::Ii | SemigroupItem::Iv => 0.5 + base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub empirical_constant: f64,
    pub sup_time: f64,
    /// Index of the sample attaining the sup.
    pub sup_sample: u64,
    pub samples: usize,
    pub sample_seed: u64,
}

/// Log-spaced probe times.
pub fn log_times(t_min: f64, t_max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![t_min];
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Sampling controls shared by the empirical constant estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub samples: usize,
    pub seed: u64,
    pub generator: FieldGenerator,
    pub t_min: f64,
    pub t_max: f64,
    pub time_points: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            samples: 200,
            seed: 2024,
            generator: FieldGenerator::trig(3, 1.0),
            t_min: 1e-4,
            t_max: 2.0,
            time_points: 40,
        }
    }
}

fn sup_over(results: Vec<(f64, f64, u64)>, sampling: &Sampling) -> ConstantEstimate {
    let (c, t, i) = results
        .into_iter()
        .fold((0.0, 0.0, 0), |acc, r| if r.0 > acc.0 { r } else { acc });
    ConstantEstimate {
        empirical_constant: c,
        sup_time: t,
        sup_sample: i,
        samples: sampling.samples,
        sample_seed: sampling.seed,
    }
}

fn vector_sample(grid: &Grid, sampling: &Sampling, index: u64) -> Result<FaceField> {
    let mut rng = sample_rng(sampling.seed, index);
    let mut w = FaceField::zeros(*grid);
    let d = grid.dim();
    let ext = grid.extents().to_vec();
    for ax in 0..d {
        let series = draw_series(grid, &sampling.generator, &mut rng)?;
        let h = grid.spacing(ax);
        let vals = w.axis_mut(ax);
        for idx in 0..grid.len() {
            let mut x = grid.center(idx);
            let c = grid.coords(idx);
            // face below the cell; the top boundary face stays zero
            x[ax] = c[ax] as f64 * h;
            let bump = (std::f64::consts::PI * x[ax] / ext[ax]).sin();
            vals[grid.face_index(ax, c)] = (1.0 + series.eval(x)) * bump;
        }
    }
    Ok(w)
}

fn face_lp_norm(w: &FaceField, p: f64) -> Result<f64> {
    let cells = w.to_cells();
    let g = w.grid();
    let mag: Vec<f64> = (0..g.len())
        .map(|i| cells.iter().map(|ax| ax[i] * ax[i]).sum::<f64>().sqrt())
        .collect();
    lp_norm(&Field::new(*g, mag)?, p)
}

/// Empirical `k_i` of the heat-semigroup estimates: the sup over samples and
/// log-spaced times of the ratio of the left side to the envelope.
pub fn semigroup_constant(
    grid: &Grid,
    item: SemigroupItem,
    p: f64,
    q: f64,
    sampling: &Sampling,
) -> Result<ConstantEstimate> {
    item.validate(p, q)?;
    if sampling.samples == 0 {
        return Err(Error::arg("sample count must be positive"));
    }
    let sp = NeumannSpectrum::new(*grid);
    let l1 = grid.lambda1();
    let d = grid.dim() as f64;
    let ex = item.singular_exponent(d, p, q);
    let times = log_times(sampling.t_min, sampling.t_max, sampling.time_points);
    let eigs = sp.eigenvalues();
    let results = par::map_indexed(sampling.samples, |i| -> Result<(f64, f64, u64)> {
        let idx = i as u64;
        let (w, denom) = match item {
            SemigroupItem::I => {
                let w = mean_zero_field(grid, &sampling.generator, &mut sample_rng(sampling.seed, idx))?;
                let n = lp_norm(&w, q)?;
                (w, n)
            }
            SemigroupItem::Ii | SemigroupItem::Iii => {
                let mut rng = sample_rng(sampling.seed, idx);
                let w = crate::random::positive_field(grid, &sampling.generator, 1.0, &mut rng)?;
                let n = if item == SemigroupItem::Ii {
                    lp_norm(&w, q)?
                } else {
                    grad_lp_norm(&w, q)?
                };
                (w, n)
            }
            SemigroupItem::Iv => {
                let wf = vector_sample(grid, sampling, idx)?;
                let n = face_lp_norm(&wf, q)?;
                (divergence(&wf), n)
            }
        };
        if !(denom > 0.0) {
            return Ok((0.0, 0.0, idx));
        }
        let coeffs = sp.forward(w.values());
        let mut best = (0.0, 0.0, idx);
        for &t in &times {
            let evolved: Vec<f64> = coeffs
                .iter()
                .zip(&eigs)
                .map(|(c, l)| c * (-t * l).exp())
                .collect();
            let f = Field::new(*grid, sp.inverse(&evolved))?;
            let num = match item {
                SemigroupItem::I | SemigroupItem::Iv => lp_norm(&f, p)?,
                SemigroupItem::Ii | SemigroupItem::Iii => grad_lp_norm(&f, p)?,
            };
            let env = (1.0 + t.powf(-ex)) * (-l1 * t).exp() * denom;
            let r = num / env;
            if r > best.0 {
                best = (r, t, idx);
            }
        }
        Ok(best)
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(sup_over(results, sampling))
}

/// Which norm of the linearized solution is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinearNorm {
    /// `‖u(t)‖_p`, `max(d/2, 1) ≤ p < ∞`, `p > 1`.
    U { p: f64 },
    /// `‖∇v(t)‖_p`, `d ≤ p < ∞`; the envelope carries the factor `p`.
    GradV { p: f64 },
}

/// Empirical constant of the scaling-invariant decay estimates for the
/// linearized system, against `‖u_I‖_{L^{d/2}} + ‖∇v_I‖_{L^d}` (d ≥ 2).
pub fn linear_decay_constant(
    op: &BlockOperator,
    norm: LinearNorm,
    sampling: &Sampling,
) -> Result<ConstantEstimate> {
    let grid = *op.grid();
    let d = grid.dim() as f64;
    if grid.dim() < 2 {
        return Err(Error::Unsupported("the scaling-invariant estimate needs d ≥ 2".into()));
    }
    let (p, ex, factor) = match norm {
        LinearNorm::U { p } => {
            if !(p > 1.0 && p >= d / 2.0 && p.is_finite()) {
                return Err(Error::arg(format!("p = {p} must satisfy max(d/2, 1) ≤ p < ∞, p > 1")));
            }
            (p, d / 2.0 * (2.0 / d - 1.0 / p), 1.0)
        }
        LinearNorm::GradV { p } => {
            if !(p >= d && p.is_finite()) {
                return Err(Error::arg(format!("p = {p} must satisfy d ≤ p < ∞")));
            }
            (p, d / 2.0 * (1.0 / d - 1.0 / p), p)
        }
    };
    let l1 = grid.lambda1();
    let times = log_times(sampling.t_min, sampling.t_max, sampling.time_points);
    let results = par::map_indexed(sampling.samples, |i| -> Result<(f64, f64, u64)> {
        let idx = i as u64;
        let mut rng = sample_rng(sampling.seed, idx);
        let u = crate::random::cosine_series(&grid, &sampling.generator, &mut rng)?;
        let u = u.map(|x| x - mean(&u));
        let v = crate::random::cosine_series(&grid, &sampling.generator, &mut rng)?;
        let data = lp_norm(&u, d / 2.0)? + grad_lp_norm(&v, d)?;
        if !(data > 0.0) {
            return Ok((0.0, 0.0, idx));
        }
        let init = LinState::new(u, v, 0.0)?;
        let (u0, v0) = op.modal(&init);
        let mut best = (0.0, 0.0, idx);
        for &t in &times {
            let (uu, vv) = op.evolve_modal(&u0, &v0, t);
            let num = match norm {
                LinearNorm::U { .. } => lp_norm(&Field::new(grid, op.spectrum.inverse(&uu))?, p)?,
                LinearNorm::GradV { .. } => {
                    grad_lp_norm(&Field::new(grid, op.spectrum.inverse(&vv))?, p)?
                }
            };
            let env = factor * (-l1 * t).exp() * (1.0 + t.powf(-ex)) * data;
            let r = num / env;
            if r > best.0 {
                best = (r, t, idx);
            }
        }
        Ok(best)
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(sup_over(results, sampling))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl ConvolutionParams {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            errs.push(format!("alpha = {} must lie in (0, 1)", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            errs.push(format!("beta = {} must lie in (0, 1)", self.beta));
        }
        if !(self.gamma > 0.0 && self.delta > 0.0) {
            errs.push("gamma and delta must be positive".to_string());
        }
        if self.gamma == self.delta {
            errs.push("gamma = delta is excluded".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// `(1 + t^{min(0, 1−α−β)}) e^{−min(γ, δ) t}`.
    pub fn envelope(&self, t: f64) -> f64 {
        let e = (1.0 - self.alpha - self.beta).min(0.0);
        (1.0 + t.powf(e)) * (-(self.gamma.min(self.delta)) * t).exp()
    }
}

const GL5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

fn gauss_panels(f: &impl Fn(f64) -> f64, panels: usize) -> f64 {
    let h = 1.0 / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * h;
        for (x, w) in GL5 {
            acc += w * f(mid + 0.5 * h * x);
        }
    }
    acc * 0.5 * h
}

/// `∫_0^t (1+(t−s)^{−α}) e^{−γ(t−s)} (1+s^{−β}) e^{−δs} ds` with `panels`
/// Gauss panels per half. The interval is split at `t/2` and each half is
/// mapped by `s = (t/2) y^{1/(1−β)}` (resp. the same in `t − s` with α),
/// which removes the endpoint singularity.
pub fn convolution_integral(cp: &ConvolutionParams, t: f64, panels: usize) -> f64 {
    let half = 0.5 * t;
    let (a, b) = (cp.alpha, cp.beta);
    let left = |y: f64| {
        let s = half * y.powf(1.0 / (1.0 - b));
        let tau = t - s;
        let jac = half / (1.0 - b) * (y.powf(b / (1.0 - b)) + half.powf(-b));
        (1.0 + tau.powf(-a)) * (-cp.gamma * tau).exp() * (-cp.delta * s).exp() * jac
    };
    let right = |y: f64| {
        let tau = half * y.powf(1.0 / (1.0 - a));
        let s = t - tau;
        let jac = half / (1.0 - a) * (y.powf(a / (1.0 - a)) + half.powf(-a));
        (1.0 + s.powf(-b)) * (-cp.delta * s).exp() * (-cp.gamma * tau).exp() * jac
    };
    gauss_panels(&left, panels) + gauss_panels(&right, panels)
}

/// Panel-doubling quadrature to relative tolerance `tol`; returns the value
/// and the panel count used.
pub fn adaptive_convolution(cp: &ConvolutionParams, t: f64, tol: f64) -> (f64, usize) {
    let mut panels = 1;
    let mut prev = convolution_integral(cp, t, panels);
    while panels < 1 << 14 {
        panels *= 2;
        let next = convolution_integral(cp, t, panels);
        if (next - prev).abs() <= tol * next.abs() {
            return (next, panels);
        }
        prev = next;
    }
    (prev, panels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionReport {
    pub params: ConvolutionParams,
    pub sup_ratio: f64,
    pub sup_time: f64,
    /// Sup ratio using a single Gauss panel per half.
    pub coarse_sup_ratio: f64,
}

/// The 3×3×2×2 parameter grid used by default.
pub fn default_convolution_grid() -> Vec<ConvolutionParams> {
    let mut out = Vec::new();
    for alpha in [0.2, 0.5, 0.8] {
        for beta in [0.1, 0.3, 0.6] {
            for gamma in [0.5, 2.0] {
                for delta in [1.0, 3.0] {
                    out.push(ConvolutionParams { alpha, beta, gamma, delta });
                }
            }
        }
    }
    out
}

/// Eight log-spaced times in `[0.01, 20]`.
pub fn default_convolution_times() -> Vec<f64> {
    log_times(0.01, 20.0, 8)
}

/// Sup over `times` of the integral divided by its envelope.
pub fn singular_convolution_check(cp: &ConvolutionParams, times: &[f64]) -> Result<ConvolutionReport> {
    cp.validate()?;
    if times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::arg("times must be positive"));
    }
    let mut rep = ConvolutionReport {
        params: *cp,
        sup_ratio: 0.0,
        sup_time: 0.0,
        coarse_sup_ratio: 0.0,
    };
    for &t in times {
        let env = cp.envelope(t);
        let (v, _) = adaptive_convolution(cp, t, 1e-12);
        let r = v / env;
        if r > rep.sup_ratio {
            rep.sup_ratio = r;
            rep.sup_time = t;
        }
        rep.coarse_sup_ratio = rep.coarse_sup_ratio.max(convolution_integral(cp, t, 1) / env);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn expm_taylor(m: [[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
        // scaling and squaring with a long Taylor series
        let k = 10;
        let s = t / f64::from(1 << k);
        let mut r = [[1.0, 0.0], [0.0, 1.0]];
        let mut term = [[1.0, 0.0], [0.0, 1.0]];
        for n in 1..30 {
            let mut nt = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    nt[i][j] = (term[i][0] * m[0][j] + term[i][1] * m[1][j]) * s / n as f64;
                }
            }
            term = nt;
            for i in 0..2 {
                for j in 0..2 {
                    r[i][j] += term[i][j];
                }
            }
        }
        for _ in 0..k {
            let mut sq = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    sq[i][j] = r[i][0] * r[0][j] + r[i][1] * r[1][j];
                }
            }
            r = sq;
        }
        r
    }

    #[test]
    fn mode_exponential_matches_taylor_in_all_regimes() {
        for &(l, a) in &[(0.0, 1.0), (0.1, 0.7), (0.25, 1.0), (0.2500001, 1.0), (3.0, 0.5), (40.0, 1.0)] {
            for &t in &[0.01, 0.3, 1.7] {
                let e = mode_exponential(l, a, t);
                let r = expm_taylor([[-l, -a * l], [1.0, -l - 1.0]], t);
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((e[i][j] - r[i][j]).abs() < 1e-11 * (1.0 + r[i][j].abs()), "{l} {a} {t}");
                    }
                }
            }
        }
    }

    #[test]
    fn constant_v_decays_like_exp_minus_t() {
        let g = Grid::unit(1, 16).unwrap();
        let op = BlockOperator::new(g, 1.0).unwrap();
        let init = LinState::new(Field::zeros(g), Field::constant(g, 2.0), 0.0).unwrap();
        let out = evolve_linear(&op, &init, 0.8).unwrap();
        assert!(out.u.values().iter().all(|v| v.abs() < 1e-14));
        for v in out.v.values() {
            assert!((v - 2.0 * (-0.8f64).exp()).abs() < 1e-13);
        }
        let zero = LinState::new(Field::zeros(g), Field::zeros(g), 0.0).unwrap();
        let out = evolve_linear(&op, &zero, 3.0).unwrap();
        assert!(out.u.values().iter().chain(out.v.values()).all(|&v| v == 0.0));
    }

    #[test]
    fn single_mode_matches_closed_form() {
        let g = Grid::unit(1, 64).unwrap();
        let op = BlockOperator::new(g, 1.0).unwrap();
        let u = Field::from_fn(g, |x| (PI * x[0]).cos());
        let init = LinState::new(u.clone(), Field::zeros(g), 0.0).unwrap();
        let out = evolve_linear(&op, &init, 0.1).unwrap();
        let e = mode_exponential(g.lambda1(), 1.0, 0.1);
        for i in 0..64 {
            assert!((out.u.values()[i] - e[0][0] * u.values()[i]).abs() < 1e-13);
            assert!((out.v.values()[i] - e[1][0] * u.values()[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = Grid::unit(1, 8).unwrap();
        assert!(BlockOperator::new(g, 0.4).is_err());
        assert!(LinState::new(Field::constant(g, 1.0), Field::zeros(g), 0.0).is_err());
        assert!(SemigroupItem::Iii.validate(f64::INFINITY, 2.0).is_err());
        assert!(SemigroupItem::Iv.validate(2.0, 1.0).is_err());
        assert!(SemigroupItem::I.validate(1.0, 2.0).is_err());
        let cp = ConvolutionParams {
            alpha: 0.5,
            beta: 0.5,
            gamma: 1.0,
            delta: 1.0,
        };
        assert!(singular_convolution_check(&cp, &[1.0]).is_err());
    }

    #[test]
    fn zero_data_has_zero_margins() {
        let g = Grid::unit(2, 8).unwrap();
        let op = BlockOperator::new(g, 0.75).unwrap();
        let init = LinState::new(Field::zeros(g), Field::zeros(g), 0.0).unwrap();
        for m in decay_check(&op, &init, &[0.0, 1.0, 2.0]).unwrap() {
            assert_eq!(m.margin, 0.0);
        }
    }

    #[test]
    fn modal_energy_matches_physical_norms() {
        let g = Grid::new(2, &[1.0, 2.0], &[12, 10]).unwrap();
        let op = BlockOperator::new(g, 1.0).unwrap();
        let u = Field::from_fn(g, |x| (PI * x[0]).cos() * (1.0 + 0.3 * (PI * x[1] / 2.0).cos()));
        let v = Field::from_fn(g, |x| 1.0 + x[0] * x[1]);
        let init = LinState::new(u.map(|x| x - mean(&u)), v.clone(), 0.0).unwrap();
        let (a, b) = op.modal(&init);
        let (uu, gv) = op.modal_energy(&a, &b);
        assert!((uu - lp_norm(&init.u, 2.0).unwrap().powi(2)).abs() < 1e-12);
        assert!((gv - crate::grid::dirichlet_energy(&v)).abs() < 1e-12);
    }

    #[test]
    fn semigroup_item_i_single_mode_ratio_is_half() {
        // with p = q = 2 the envelope is 2 e^{−λ₁t}‖w‖ and the λ₁ mode
        // decays exactly like e^{−λ₁t}
        let g = Grid::unit(1, 32).unwrap();
        let sp = NeumannSpectrum::new(g);
        let w = Field::from_fn(g, |x| (PI * x[0]).cos());
        for t in [0.01, 0.5, 2.0] {
            let f = sp.heat(t, &w).unwrap();
            let r = lp_norm(&f, 2.0).unwrap()
                / (2.0 * (-g.lambda1() * t).exp() * lp_norm(&w, 2.0).unwrap());
            assert!((r - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn convolution_quadrature_matches_closed_form_special_case() {
        // with α, β → the integrand pieces, check against brute force
        // midpoint integration on a split, graded mesh
        let cp = ConvolutionParams {
            alpha: 0.5,
            beta: 0.5,
            gamma: 2.0,
            delta: 1.0,
        };
        let t = 1.0;
        let (v, _) = adaptive_convolution(&cp, t, 1e-13);
        let f = |s: f64| {
            (1.0 + (t - s).powf(-0.5)) * (-2.0 * (t - s)).exp() * (1.0 + s.powf(-0.5)) * (-s).exp()
        };
        // substitution s = t sin²θ removes both square-root singularities
        let n = 20000;
        let mut acc = 0.0;
        for k in 0..n {
            let th = (k as f64 + 0.5) / n as f64 * PI / 2.0;
            let s = t * th.sin().powi(2);
            acc += f(s) * 2.0 * t * th.sin() * th.cos();
        }
        acc *= PI / 2.0 / n as f64;
        assert!((v - acc).abs() < 1e-7 * acc, "{v} vs {acc}");
    }
}
