//! Runs of the volume-filling family from common data and their pairwise
//! distances in `L^∞(0,T; L²)`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, Params, ProbeSchedule, SchemeConfig, State, Trajectory};
use crate::error::{Error, Result};
use crate::norms::lp_norm;
use crate::par;

/// `ε` values `ζ0, ζ0/2, …, ζ0/2^{count−1}`.
pub fn halving_family(zeta0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| zeta0 / f64::from(1u32 << k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsFamily {
    pub eps: Vec<f64>,
    /// `max_t ‖ρ_{ε_k} − ρ_{ε_{k+1}}‖_{L²}` over the probe times.
    pub gaps: Vec<f64>,
    /// `gaps[k] / gaps[k+1]`.
    pub ratios: Vec<f64>,
    /// `max_t ‖ρ_ε − ρ_0‖_{L²}` per member when a reference ε = 0 run was made.
    pub gaps_to_zero: Option<Vec<f64>>,
}

/// Largest L² distance between two runs over their common snapshots.
pub fn linf_l2_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.snapshots.len() != b.snapshots.len() || a.snapshots.is_empty() {
        return Err(Error::arg("trajectories need matching, non-empty snapshot lists"));
    }
    let mut worst = 0.0f64;
    for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
        if (x.t - y.t).abs() > 1e-9 * (1.0 + x.t.abs()) {
            return Err(Error::arg(format!("snapshot times differ: {} vs {}", x.t, y.t)));
        }
        worst = worst.max(lp_norm(&x.rho.zip_map(&y.rho, |p, q| p - q)?, 2.0)?);
    }
    Ok(worst)
}

/// Simulates every `ε` in `eps` (plus `ε = 0` when `with_zero`) from
/// `initial`, storing fields every `every`, and compares consecutive members.
#[allow(clippy::too_many_arguments)]
pub fn eps_family(
    initial: &State,
    chi: f64,
    gamma: f64,
    eps: &[f64],
    with_zero: bool,
    scheme: &SchemeConfig,
    t_end: f64,
    every: f64,
) -> Result<EpsFamily> {
    if eps.len() < 2 {
        return Err(Error::arg("an eps family needs at least two members"));
    }
    let mut all = eps.to_vec();
    if with_zero {
        all.push(0.0);
    }
    let probes = ProbeSchedule {
        every,
        energy: false,
        keep_fields: true,
    };
    let runs: Vec<Trajectory> = par::map_indexed(all.len(), |i| {
        let p = Params::new(chi, gamma, all[i], &initial.rho)?;
        let tr = simulate(initial, &p, scheme, t_end, &probes)?;
        tr.ensure_complete()?;
        Ok(tr)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let n = eps.len();
    let gaps = (0..n - 1)
        .map(|k| linf_l2_distance(&runs[k], &runs[k + 1]))
        .collect::<Result<Vec<_>>>()?;
    let ratios = gaps
        .windows(2)
        .map(|w| if w[1] > 0.0 { w[0] / w[1] } else { f64::INFINITY })
        .collect();
    let gaps_to_zero = if with_zero {
        Some(
            (0..n)
                .map(|k| linf_l2_distance(&runs[k], &runs[n]))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(EpsFamily {
        eps: eps.to_vec(),
        gaps,
        ratios,
        gaps_to_zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{zeta0, Drift};
    use crate::grid::{Field, Grid};
    use std::f64::consts::PI;

    #[test]
    fn family_is_first_order_in_eps() {
        let g = Grid::unit(1, 32).unwrap();
        let rho = Field::from_fn(g, |x| 1.0 + 0.5 * (PI * x[0]).cos());
        let c = Field::from_fn(g, |x| 1.0 + 0.3 * (PI * x[0]).cos());
        let s = State::new(rho.clone(), c, 0.0).unwrap();
        let scheme = SchemeConfig {
            dt: 1e-3,
            dt_adapt: false,
            drift: Drift::Upwind,
            ..Default::default()
        };
        let fam = eps_family(&s, 1.0, 1.0, &halving_family(zeta0(&rho), 3), true, &scheme, 0.2, 0.01).unwrap();
        assert_eq!(fam.gaps.len(), 2);
        assert!((1.5..=3.0).contains(&fam.ratios[0]), "{:?}", fam.ratios);
        let z = fam.gaps_to_zero.unwrap();
        assert!(z[0] > z[1] && z[1] > z[2]);
    }

    #[test]
    fn needs_two_members() {
        let g = Grid::unit(1, 8).unwrap();
        let s = State::new(Field::constant(g, 1.0), Field::constant(g, 1.0), 0.0).unwrap();
        assert!(eps_family(&s, 1.0, 1.0, &[0.5], false, &SchemeConfig::default(), 0.1, 0.05).is_err());
    }
}
