//! Exponential rate extraction from decay series.

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// Minimum number of samples in a fit window.
pub const MIN_FIT_POINTS: usize = 10;
/// Fits stop once values fall below this multiple of `f64::EPSILON` times
/// the initial value.
pub const ROUNDOFF_CUTOFF: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub window: (f64, f64),
    pub fitted_rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares slope of `log(value)` against `t` over `window`
/// (inclusive); the rate is minus the slope.
pub fn fit_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<Fit> {
    if !(window.1 > window.0) {
        return Err(Error::arg(format!("empty fit window [{}, {}]", window.0, window.1)));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::arg(format!(
            "fit window [{}, {}] holds {} points; at least {MIN_FIT_POINTS} are needed",
            window.0,
            window.1,
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::arg(format!("non-positive value {v} at t = {t} in fit window")));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(t, v) in &pts {
        let (dx, dy) = (t - tm, v.ln() - ym);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(Fit {
        window: (pts[0].0, pts[pts.len() - 1].0),
        fitted_rate: -slope,
        r_squared: r2,
        points: pts.len(),
    })
}

/// Default window: from the first time the value is at most half the
/// initial value to the last time before it drops under the round-off
/// cutoff relative to the initial value.
pub fn auto_window(series: &[(f64, f64)]) -> Result<(f64, f64)> {
    auto_window_scaled(series, 0.0)
}

/// As [`auto_window`], with the round-off cutoff taken relative to
/// `max(initial value, scale)`. Deviation series such as `‖ρ − M‖` bottom
/// out at round-off of the underlying field, so `scale` should be its size.
pub fn auto_window_scaled(series: &[(f64, f64)], scale: f64) -> Result<(f64, f64)> {
    let v0 = series
        .first()
        .map(|p| p.1)
        .ok_or_else(|| Error::arg("empty series"))?;
    let start = series
        .iter()
        .find(|(_, v)| *v <= 0.5 * v0)
        .map(|p| p.0)
        .ok_or_else(|| Error::arg("series never drops below half its initial value"))?;
    let floor = ROUNDOFF_CUTOFF * f64::EPSILON * v0.max(scale);
    let end = series
        .iter()
        .take_while(|(_, v)| *v > floor)
        .last()
        .map(|p| p.0)
        .unwrap_or(start);
    Ok((start, end))
}

pub fn fit_auto(series: &[(f64, f64)]) -> Result<Fit> {
    fit_rate(series, auto_window(series)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Identically zero series; nothing to fit.
    Degenerate,
    /// Too few usable points.
    NoFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub quantity: String,
    pub fit: Option<Fit>,
    pub reference_rate: f64,
    pub verdict: Verdict,
    pub note: String,
}

fn report(
    quantity: &str,
    series: &[(f64, f64)],
    scale: f64,
    reference: f64,
    check: impl Fn(f64) -> bool,
) -> RateReport {
    let peak = series.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
    let mut rep = RateReport {
        quantity: quantity.to_string(),
        fit: None,
        reference_rate: reference,
        verdict: Verdict::Degenerate,
        note: String::new(),
    };
    if peak == 0.0 {
        rep.note = "degenerate, no fit".into();
        return rep;
    }
    match auto_window_scaled(series, scale).and_then(|w| fit_rate(series, w)) {
        Ok(f) => {
            rep.verdict = if check(f.fitted_rate) {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            rep.fit = Some(f);
        }
        Err(e) => {
            rep.verdict = Verdict::NoFit;
            rep.note = e.to_string();
        }
    }
    rep
}

/// Rate reports for `‖ρ−M‖_∞`, `‖∇c‖_∞` and `‖c−M‖_∞` with reference rates
/// `λ₁`, `λ₁` and `min(λ₁, 1)`. The first two pass at ≥ 0.9 of the
/// reference; the third must lie within 10% of it when the initial mean of
/// c differs from M, and otherwise only needs to reach 0.9 of it.
pub fn rate_suite(traj: &Trajectory, lambda1: f64) -> Vec<RateReport> {
    let rho = traj.series(|r| r.rho_dev_linf);
    let gc = traj.series(|r| r.grad_c_linf);
    let cd = traj.series(|r| r.c_dev_linf);
    let c_ref = lambda1.min(1.0);
    let m = traj.params.mass_mean;
    let h = traj.grid.spacings().into_iter().fold(f64::INFINITY, f64::min);
    let mean_offset = traj
        .records
        .first()
        .map(|r| (r.c_mean - traj.params.mass_mean).abs() > 1e-12 * traj.params.mass_mean)
        .unwrap_or(false);
    let mut c_rep = if mean_offset {
        report("c_dev_linf", &cd, m, c_ref, |r| (r - c_ref).abs() <= 0.1 * c_ref)
    } else {
        report("c_dev_linf", &cd, m, c_ref, |r| r >= 0.9 * c_ref)
    };
    if !mean_offset && c_rep.verdict != Verdict::Degenerate {
        c_rep.note = "initial mean of c equals M; mean mode absent".into();
    }
    vec![
        report("rho_dev_linf", &rho, m, lambda1, |r| r >= 0.9 * lambda1),
        report("grad_c_linf", &gc, m / h, lambda1, |r| r >= 0.9 * lambda1),
        c_rep,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expo(rate: f64, scale: f64, n: usize) -> Vec<(f64, f64)> {
        (0..n).map(|i| {
            let t = i as f64 * 0.1;
            (t, scale * (-rate * t).exp())
        })
        .collect()
    }

    #[test]
    fn exact_on_pure_exponential() {
        let s = expo(2.0, 1.0, 20);
        let f = fit_rate(&s, (0.0, 1.9)).unwrap();
        assert!((f.fitted_rate - 2.0).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let g = fit_rate(&expo(2.0, 37.0, 20), (0.0, 1.9)).unwrap();
        assert!((g.fitted_rate - f.fitted_rate).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let s = expo(1.0, 1.0, 20);
        assert!(fit_rate(&s, (0.0, 0.5)).is_err());
        assert!(fit_rate(&s, (1.0, 0.5)).is_err());
        let mut z = s.clone();
        z[5].1 = 0.0;
        assert!(fit_rate(&z, (0.0, 1.9)).is_err());
    }

    #[test]
    fn auto_window_skips_transient_and_roundoff() {
        let mut s: Vec<(f64, f64)> = (0..200).map(|i| {
            let t = i as f64 * 0.1;
            (t, (-2.0 * t).exp() + 1e-30)
        })
        .collect();
        s[0].1 = 3.0;
        let (a, b) = auto_window(&s).unwrap();
        assert!(a > 0.0);
        assert!(b < 19.9);
        let f = fit_auto(&s).unwrap();
        assert!((f.fitted_rate - 2.0).abs() < 1e-6);
    }
}
