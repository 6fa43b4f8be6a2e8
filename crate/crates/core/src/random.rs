//! Seeded smooth random fields built from truncated cosine series, which
//! have zero normal derivative on every face of the box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldGenerator {
    /// Uniform coefficients on wavenumbers `1..=max_wavenumber` per axis,
    /// scaled so that `Σ|a_k| = amplitude`.
    TrigSeries { max_wavenumber: usize, amplitude: f64 },
    /// Gaussian coefficients with a Gaussian spectrum of the given
    /// correlation length; the log-field has pointwise standard deviation
    /// about `sigma`.
    LognormalSmooth { correlation_length: f64, sigma: f64 },
}

impl FieldGenerator {
    pub fn trig(max_wavenumber: usize, amplitude: f64) -> Self {
        FieldGenerator::TrigSeries {
            max_wavenumber,
            amplitude,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        match *self {
            FieldGenerator::TrigSeries {
                max_wavenumber,
                amplitude,
            } => {
                if max_wavenumber == 0 {
                    return Err(Error::arg("max_wavenumber must be at least 1"));
                }
                let n_min = grid.cells()[..grid.dim()].iter().copied().min().unwrap_or(0);
                if 8 * max_wavenumber > n_min {
                    return Err(Error::arg(format!(
                        "max_wavenumber {max_wavenumber} is not resolved on {n_min} cells (need N ≥ 8K)"
                    )));
                }
                if !(amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(Error::arg("amplitude must be finite and non-negative"));
                }
            }
            FieldGenerator::LognormalSmooth {
                correlation_length,
                sigma,
            } => {
                if !(correlation_length > 0.0) || !(sigma >= 0.0) {
                    return Err(Error::arg(
                        "correlation_length must be positive and sigma non-negative",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Independent stream per sample, so that samples do not depend on how many
/// were drawn before.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn wavenumbers(dim: usize, kmax: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    let ky = if dim >= 2 { kmax } else { 0 };
    let kz = if dim >= 3 { kmax } else { 0 };
    for k0 in 0..=kmax {
        for k1 in 0..=ky {
            for k2 in 0..=kz {
                if k0 + k1 + k2 > 0 {
                    out.push([k0, k1, k2]);
                }
            }
        }
    }
    out
}

/// Coefficients of a cosine series on the box of `grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineSeries {
    extents: [f64; 3],
    dim: usize,
    modes: Vec<([usize; 3], f64)>,
}

impl CosineSeries {
    /// Value at a point of the box.
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        self.modes
            .iter()
            .map(|(k, a)| {
                a * (0..self.dim)
                    .map(|ax| (std::f64::consts::PI * k[ax] as f64 * x[ax] / self.extents[ax]).cos())
                    .product::<f64>()
            })
            .sum()
    }

    /// Cell-centre samples; uses per-axis cosine tables instead of `eval`.
    pub fn sample(&self, grid: &Grid) -> Field {
        if grid.dim() != self.dim {
            return Field::from_fn(*grid, |x| self.eval(x));
        }
        let kmax = self
            .modes
            .iter()
            .flat_map(|(k, _)| k.iter().copied())
            .max()
            .unwrap_or(0);
        let cells = grid.cells();
        // tables[axis][k][i] = cos(π k x_i / L)
        let tables: Vec<Vec<Vec<f64>>> = (0..self.dim)
            .map(|ax| {
                let h = grid.spacing(ax);
                (0..=kmax)
                    .map(|k| {
                        (0..cells[ax])
                            .map(|i| {
                                let x = (i as f64 + 0.5) * h;
                                (std::f64::consts::PI * k as f64 * x / self.extents[ax]).cos()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut values = vec![0.0; grid.len()];
        for (idx, v) in values.iter_mut().enumerate() {
            let c = grid.coords(idx);
            *v = self
                .modes
                .iter()
                .map(|(k, a)| a * (0..self.dim).map(|ax| tables[ax][k[ax]][c[ax]]).product::<f64>())
                .sum();
        }
        Field::new(*grid, values).expect("length matches grid")
    }
}

/// Mean-zero smooth cosine series `g`.
pub fn cosine_series(grid: &Grid, gen: &FieldGenerator, rng: &mut ChaCha8Rng) -> Result<Field> {
    Ok(draw_series(grid, gen, rng)?.sample(grid))
}

/// Draws the series coefficients without sampling them on the grid.
pub fn draw_series(grid: &Grid, gen: &FieldGenerator, rng: &mut ChaCha8Rng) -> Result<CosineSeries> {
    gen.validate(grid)?;
    let d = grid.dim();
    let modes: Vec<([usize; 3], f64)> = match *gen {
        FieldGenerator::TrigSeries {
            max_wavenumber,
            amplitude,
        } => {
            let ks = wavenumbers(d, max_wavenumber);
            let raw: Vec<f64> = ks.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let total: f64 = raw.iter().map(|v: &f64| v.abs()).sum();
            let scale = if total > 0.0 { amplitude / total } else { 0.0 };
            ks.into_iter().zip(raw).map(|(k, a)| (k, a * scale)).collect()
        }
        FieldGenerator::LognormalSmooth {
            correlation_length,
            sigma,
        } => {
            let ext = grid.extents();
            let n_min = grid.cells()[..d].iter().copied().min().unwrap_or(1);
            let kmax = (n_min / 8).clamp(1, 16);
            let mut modes = Vec::new();
            let mut var = 0.0;
            for k in wavenumbers(d, kmax) {
                let kk: f64 = (0..d).map(|a| (k[a] as f64 / ext[a]).powi(2)).sum();
                let std = (-(std::f64::consts::PI * correlation_length).powi(2) * kk / 4.0).exp();
                let z: f64 = rng.sample(StandardNormal);
                // mean square of a product of cosines is 2^{-#nonzero}
                let nz = k[..d].iter().filter(|&&v| v > 0).count() as i32;
                var += std * std * 0.5f64.powi(nz);
                modes.push((k, z * std));
            }
            let scale = if var > 0.0 { sigma / var.sqrt() } else { 0.0 };
            modes.into_iter().map(|(k, a)| (k, a * scale)).collect()
        }
    };
    let e = grid.extents();
    let mut extents = [1.0; 3];
    extents[..d].copy_from_slice(&e[..d]);
    Ok(CosineSeries {
        extents,
        dim: d,
        modes,
    })
}

/// `base · exp(g)` with `g` a cosine series: smooth, positive and
/// Neumann-compatible.
pub fn positive_field(
    grid: &Grid,
    gen: &FieldGenerator,
    base: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Field> {
    Ok(cosine_series(grid, gen, rng)?.map(|v| base * v.exp()))
}

/// Mean-zero field with unit L² norm, or zero if the draw degenerates.
pub fn mean_zero_field(grid: &Grid, gen: &FieldGenerator, rng: &mut ChaCha8Rng) -> Result<Field> {
    let f = cosine_series(grid, gen, rng)?;
    let m = crate::norms::mean(&f);
    let f = f.map(|v| v - m);
    let n = crate::norms::lp_norm(&f, 2.0)?;
    Ok(if n > 0.0 { f.map(|v| v / n) } else { f })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_reproducible_and_independent_of_order() {
        let g = Grid::unit(2, 16).unwrap();
        let gen = FieldGenerator::trig(2, 0.5);
        let a = positive_field(&g, &gen, 1.0, &mut sample_rng(7, 3)).unwrap();
        let _ = positive_field(&g, &gen, 1.0, &mut sample_rng(7, 2)).unwrap();
        let b = positive_field(&g, &gen, 1.0, &mut sample_rng(7, 3)).unwrap();
        assert_eq!(a.values(), b.values());
        let c = positive_field(&g, &gen, 1.0, &mut sample_rng(7, 4)).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn trig_series_respects_amplitude() {
        let g = Grid::unit(1, 64).unwrap();
        let gen = FieldGenerator::trig(4, 0.3);
        let f = cosine_series(&g, &gen, &mut sample_rng(1, 0)).unwrap();
        assert!(f.values().iter().all(|v| v.abs() <= 0.3 + 1e-12));
        assert!(positive_field(&g, &gen, 2.0, &mut sample_rng(1, 0)).unwrap().min() > 0.0);
    }

    #[test]
    fn tabulated_sampling_matches_pointwise() {
        let g = Grid::new(3, &[1.0, 2.0, 0.5], &[8, 16, 8]).unwrap();
        let s = draw_series(&g, &FieldGenerator::trig(1, 1.0), &mut sample_rng(3, 1)).unwrap();
        let f = s.sample(&g);
        for (i, v) in f.values().iter().enumerate() {
            assert!((v - s.eval(g.center(i))).abs() < 1e-13);
        }
    }

    #[test]
    fn unresolved_wavenumber_rejected() {
        let g = Grid::unit(1, 16).unwrap();
        assert!(cosine_series(&g, &FieldGenerator::trig(3, 1.0), &mut sample_rng(0, 0)).is_err());
    }

    #[test]
    fn lognormal_has_requested_spread() {
        let g = Grid::unit(1, 256).unwrap();
        let gen = FieldGenerator::LognormalSmooth {
            correlation_length: 0.1,
            sigma: 0.5,
        };
        let mut acc = 0.0;
        let n = 64;
        for i in 0..n {
            let f = cosine_series(&g, &gen, &mut sample_rng(5, i)).unwrap();
            acc += crate::norms::lp_norm(&f, 2.0).unwrap().powi(2);
        }
        let std = (acc / n as f64).sqrt();
        assert!((std - 0.5).abs() < 0.1, "{std}");
    }

    #[test]
    fn mean_zero_field_is_normalised() {
        let g = Grid::unit(2, 32).unwrap();
        let f = mean_zero_field(&g, &FieldGenerator::trig(3, 1.0), &mut sample_rng(2, 0)).unwrap();
        assert!(crate::norms::mean(&f).abs() < 1e-14);
        assert!((crate::norms::lp_norm(&f, 2.0).unwrap() - 1.0).abs() < 1e-12);
    }
}
