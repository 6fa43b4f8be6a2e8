//! Initial-data presets. Every preset yields `ρ ≥ 0`, `ρ ≢ 0` and `c > 0`.

use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::random::{cosine_series, sample_rng, FieldGenerator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Constant {
        #[serde(default = "one")]
        rho_mean: f64,
        #[serde(default = "one")]
        c_mean: f64,
    },
    /// `ρ = ρ̄(1 + a Π cos(π k_i x_i / L_i))` and likewise for `c` with
    /// `c_amplitude` and `c_mode`.
    Cosine {
        #[serde(default = "one")]
        rho_mean: f64,
        #[serde(default = "one")]
        c_mean: f64,
        #[serde(default = "default_amp")]
        amplitude: f64,
        #[serde(default)]
        c_amplitude: f64,
        #[serde(default = "first_mode")]
        mode: [usize; 3],
        #[serde(default = "first_mode")]
        c_mode: [usize; 3],
    },
    /// `ρ = ρ̄(1 + g_ρ)`, `c = c̄(1 + g_c)` with independent seeded cosine
    /// series of sup norm at most `amplitude < 1`.
    RandomSmooth {
        #[serde(default = "one")]
        rho_mean: f64,
        #[serde(default = "one")]
        c_mean: f64,
        #[serde(default = "default_amp")]
        amplitude: f64,
        #[serde(default = "default_k")]
        max_wavenumber: usize,
    },
    /// Restart from a checkpoint file.
    Checkpoint { path: String },
}

fn one() -> f64 {
    1.0
}
fn default_amp() -> f64 {
    0.1
}
fn first_mode() -> [usize; 3] {
    [1, 0, 0]
}
fn default_k() -> usize {
    2
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Cosine {
            rho_mean: 1.0,
            c_mean: 1.0,
            amplitude: default_amp(),
            c_amplitude: 0.0,
            mode: first_mode(),
            c_mode: first_mode(),
        }
    }
}

fn cosine_mode(grid: &Grid, k: [usize; 3]) -> Field {
    let ext = grid.extents().to_vec();
    let d = grid.dim();
    Field::from_fn(*grid, |x| {
        (0..d)
            .map(|a| (std::f64::consts::PI * k[a] as f64 * x[a] / ext[a]).cos())
            .product()
    })
}

impl InitialSpec {
    pub fn name(&self) -> &'static str {
        match self {
            InitialSpec::Constant { .. } => "constant",
            InitialSpec::Cosine { .. } => "cosine",
            InitialSpec::RandomSmooth { .. } => "random_smooth",
            InitialSpec::Checkpoint { .. } => "checkpoint",
        }
    }

    /// Problems with the preset values; `dim` bounds the mode vectors.
    pub fn problems(&self, dim: usize) -> Vec<String> {
        let mut errs = Vec::new();
        let mut means = |r: f64, c: f64| {
            if !(r > 0.0 && r.is_finite()) {
                errs.push(format!("initial.rho_mean must be positive, got {r}"));
            }
            if !(c > 0.0 && c.is_finite()) {
                errs.push(format!("initial.c_mean must be positive, got {c}"));
            }
        };
        match self {
            InitialSpec::Constant { rho_mean, c_mean } => means(*rho_mean, *c_mean),
            InitialSpec::Cosine {
                rho_mean,
                c_mean,
                amplitude,
                c_amplitude,
                mode,
                c_mode,
            } => {
                means(*rho_mean, *c_mean);
                if !(0.0..=1.0).contains(amplitude) {
                    errs.push(format!("initial.amplitude must lie in [0, 1] so that rho >= 0, got {amplitude}"));
                }
                if !(0.0..1.0).contains(c_amplitude) {
                    errs.push(format!("initial.c_amplitude must lie in [0, 1) so that c > 0, got {c_amplitude}"));
                }
                for (name, m) in [("mode", mode), ("c_mode", c_mode)] {
                    if m[dim.min(3)..].iter().any(|&k| k != 0) {
                        errs.push(format!("initial.{name} has wavenumbers beyond dimension {dim}"));
                    }
                }
            }
            InitialSpec::RandomSmooth {
                rho_mean,
                c_mean,
                amplitude,
                max_wavenumber,
            } => {
                means(*rho_mean, *c_mean);
                if !(0.0..1.0).contains(amplitude) {
                    errs.push(format!("initial.amplitude must lie in [0, 1), got {amplitude}"));
                }
                if *max_wavenumber == 0 {
                    errs.push("initial.max_wavenumber must be at least 1".into());
                }
            }
            InitialSpec::Checkpoint { path } => {
                if path.is_empty() {
                    errs.push("initial.path must name a checkpoint file".into());
                }
            }
        }
        errs
    }

    /// Builds the initial state; `seed` is used by the random preset only.
    /// Checkpoints are loaded by the caller.
    pub fn build(&self, grid: &Grid, seed: u64) -> Result<State> {
        let errs = self.problems(grid.dim());
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        match *self {
            InitialSpec::Constant { rho_mean, c_mean } => {
                State::new(Field::constant(*grid, rho_mean), Field::constant(*grid, c_mean), 0.0)
            }
            InitialSpec::Cosine {
                rho_mean,
                c_mean,
                amplitude,
                c_amplitude,
                mode,
                c_mode,
            } => {
                let rho = cosine_mode(grid, mode).map(|v| rho_mean * (1.0 + amplitude * v));
                let c = cosine_mode(grid, c_mode).map(|v| c_mean * (1.0 + c_amplitude * v));
                State::new(rho, c, 0.0)
            }
            InitialSpec::RandomSmooth {
                rho_mean,
                c_mean,
                amplitude,
                max_wavenumber,
            } => {
                let gen = FieldGenerator::trig(max_wavenumber, amplitude);
                let gr = cosine_series(grid, &gen, &mut sample_rng(seed, 0))?;
                let gc = cosine_series(grid, &gen, &mut sample_rng(seed, 1))?;
                State::new(
                    gr.map(|v| rho_mean * (1.0 + v)),
                    gc.map(|v| c_mean * (1.0 + v)),
                    0.0,
                )
            }
            InitialSpec::Checkpoint { .. } => Err(Error::arg(
                "checkpoint initial data must be loaded through the checkpoint reader",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::mean;

    #[test]
    fn presets_satisfy_initial_conditions() {
        let g = Grid::unit(2, 16).unwrap();
        for spec in [
            InitialSpec::Constant { rho_mean: 2.0, c_mean: 0.5 },
            InitialSpec::default(),
            InitialSpec::RandomSmooth {
                rho_mean: 1.0,
                c_mean: 1.0,
                amplitude: 0.9,
                max_wavenumber: 2,
            },
        ] {
            let s = spec.build(&g, 3).unwrap();
            assert!(s.rho.min() >= 0.0 && s.c.min() > 0.0);
        }
        let s = InitialSpec::default().build(&g, 0).unwrap();
        assert!((mean(&s.rho) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_preset_depends_on_seed_only() {
        let g = Grid::unit(1, 32).unwrap();
        let spec = InitialSpec::RandomSmooth {
            rho_mean: 1.0,
            c_mean: 1.0,
            amplitude: 0.5,
            max_wavenumber: 3,
        };
        assert_eq!(spec.build(&g, 9).unwrap(), spec.build(&g, 9).unwrap());
        assert_ne!(spec.build(&g, 9).unwrap(), spec.build(&g, 10).unwrap());
    }

    #[test]
    fn bad_values_listed_together() {
        let spec = InitialSpec::Cosine {
            rho_mean: -1.0,
            c_mean: 1.0,
            amplitude: 2.0,
            c_amplitude: 1.0,
            mode: [1, 1, 0],
            c_mode: [1, 0, 0],
        };
        assert_eq!(spec.problems(1).len(), 4);
    }

    #[test]
    fn parses_from_toml() {
        let s: InitialSpec = toml::from_str("preset = \"cosine\"\namplitude = 0.2\nmode = [2, 0, 0]").unwrap();
        assert!(matches!(s, InitialSpec::Cosine { amplitude, mode: [2, 0, 0], .. } if amplitude == 0.2));
        assert!(toml::from_str::<InitialSpec>("preset = \"cosine\"\nbogus = 1").is_err());
    }
}
