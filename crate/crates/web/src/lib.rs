//! Browser bindings: a 1D simulation that can be stepped interactively,
//! linearized decay curves, and the discrete Neumann spectrum of a box.

use wasm_bindgen::prelude::*;

use ksrepel::dynamics::{Params, SchemeConfig, State, Stepper};
use ksrepel::energy::energy;
use ksrepel::grid::{continuum_neumann_eigs, neumann_eigs, Field, Grid};
use ksrepel::linearized::{decay_check, BlockOperator, LinState};
use ksrepel::norms::scaling_triple;

fn js(e: ksrepel::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Nonlinear system on the unit interval, started from
/// `ρ = 1 + amplitude·cos(mode·πx)`, `c = 1`.
#[wasm_bindgen]
pub struct Simulation {
    stepper: Stepper,
    state: State,
}

#[wasm_bindgen]
impl Simulation {
    #[wasm_bindgen(constructor)]
    pub fn new(cells: usize, chi: f64, eps: f64, amplitude: f64, mode: u32, dt: f64) -> Result<Simulation, JsError> {
        let grid = Grid::new(1, &[1.0], &[cells]).map_err(js)?;
        let k = f64::from(mode) * std::f64::consts::PI;
        let rho = Field::from_fn(grid, |x| 1.0 + amplitude * (k * x[0]).cos());
        let c = Field::constant(grid, 1.0);
        let params = Params::new(chi, 1.0, eps, &rho).map_err(js)?;
        let scheme = SchemeConfig {
            dt,
            ..SchemeConfig::default()
        };
        let stepper = Stepper::new(grid, params, scheme).map_err(js)?;
        let state = State::new(rho, c, 0.0).map_err(js)?;
        Ok(Simulation { stepper, state })
    }

    /// Advances the state by `span` time units.
    pub fn run(&mut self, span: f64) -> Result<(), JsError> {
        let end = self.state.t + span;
        while self.state.t < end - 1e-12 {
            self.state = self.stepper.advance(&self.state, end - self.state.t).map_err(js)?;
        }
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    pub fn rho(&self) -> Vec<f64> {
        self.state.rho.values().to_vec()
    }

    pub fn c(&self) -> Vec<f64> {
        self.state.c.values().to_vec()
    }

    pub fn energy(&self) -> Result<f64, JsError> {
        energy(&self.state, self.stepper.params.eps).map_err(js)
    }

    /// `[‖ρ − M‖∞, ‖∇c‖∞, ‖c − M‖∞]`.
    pub fn deviations(&self) -> Result<Vec<f64>, JsError> {
        let t = scaling_triple(&self.state.rho, &self.state.c, self.stepper.params.mass_mean).map_err(js)?;
        Ok(vec![t.rho_dev, t.grad_c, t.c_dev])
    }
}

/// Linearized quadratic energy of a single cosine mode of `u` on the unit
/// interval at `points` times in `[0, t_max]`, followed by the bound
/// `e^{−2λ₁t}` times its initial value: `[q(t_0..), bound(t_0..)]`.
#[wasm_bindgen]
pub fn linear_decay(cells: usize, a: f64, mode: u32, t_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let grid = Grid::new(1, &[1.0], &[cells]).map_err(js)?;
    let op = BlockOperator::new(grid, a).map_err(js)?;
    let k = f64::from(mode.max(1)) * std::f64::consts::PI;
    let u = Field::from_fn(grid, |x| (k * x[0]).cos());
    let init = LinState::new(u, Field::zeros(grid), 0.0).map_err(js)?;
    let n = points.max(2);
    let times: Vec<f64> = (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect();
    let m = decay_check(&op, &init, &times).map_err(js)?;
    Ok(m.iter().map(|d| d.lhs).chain(m.iter().map(|d| d.rhs)).collect())
}

/// The `count` smallest Neumann eigenvalues of a `width × height` box with
/// `cells × cells` cells: discrete values, then the continuum ones.
#[wasm_bindgen]
pub fn neumann_spectrum(width: f64, height: f64, cells: usize, count: usize) -> Result<Vec<f64>, JsError> {
    let grid = Grid::new(2, &[width, height], &[cells, cells]).map_err(js)?;
    let k = count.min(grid.len());
    let mut out = neumann_eigs(&grid, k).map_err(js)?;
    out.extend(continuum_neumann_eigs(&grid, k).map_err(js)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulation_relaxes() {
        let mut s = Simulation::new(32, 1.0, 0.0, 0.3, 1, 1e-3).unwrap();
        let d0 = s.deviations().unwrap()[0];
        let m0: f64 = s.rho().iter().sum();
        s.run(0.2).unwrap();
        assert!((s.time() - 0.2).abs() < 1e-12);
        assert!(s.deviations().unwrap()[0] < 0.5 * d0);
        assert!((s.rho().iter().sum::<f64>() - m0).abs() < 1e-10);
    }

    #[test]
    fn decay_curve_below_bound() {
        let v = linear_decay(32, 1.0, 2, 1.0, 11).unwrap();
        let (q, b) = v.split_at(11);
        assert!((q[0] - b[0]).abs() < 1e-12 * b[0]);
        assert!(q.iter().zip(b).all(|(x, y)| *x <= *y * (1.0 + 1e-12)));
    }

    #[test]
    fn spectrum_halves() {
        let v = neumann_spectrum(1.0, 2.0, 16, 4).unwrap();
        assert_eq!(v.len(), 8);
        assert_eq!(v[0], 0.0);
        assert!((v[5] - std::f64::consts::PI.powi(2) / 4.0).abs() < 1e-12);
        assert!((v[1] - v[5]).abs() < 0.01 * v[5]);
    }
}
