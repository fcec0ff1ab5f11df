//! Sup-deviation decay curves and asymptotic rate fits.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constellations::{Constellation, IndexWindow};
use crate::error::{Error, Result};
use crate::kernels::{self, DynamicsKind, Sampling, TrajectorySample};

/// Least-squares line through `(ln t, ln y)` (or `(t, ln y)` for exponential fits).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    /// Range of the abscissa actually used, in original units.
    pub t_range: (f64, f64),
    pub n_points: usize,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

/// Power-law fit `y ≈ e^{intercept} t^{slope}` over points with `t > 0`, `y > 0`.
pub fn fit_loglog(ts: &[f64], ys: &[f64]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(ys)
        .filter(|(t, y)| **t > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(t, y)| (*t, *y))
        .collect();
    if pts.len() < 4 {
        return Err(Error::TooFewPoints { found: pts.len() });
    }
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, residual_rms) = least_squares(&lx, &ly);
    Ok(RateFit {
        slope,
        intercept,
        residual_rms,
        t_range: (pts[0].0, pts[pts.len() - 1].0),
        n_points: pts.len(),
    })
}

/// `count` points `start · ratio^i`.
pub fn geometric_grid(start: f64, ratio: f64, count: usize) -> Result<Vec<f64>> {
    if !(start > 0.0 && ratio > 1.0 && start.is_finite() && ratio.is_finite()) {
        return Err(Error::invalid(
            "t_grid",
            format!(
                "geometric grid needs start > 0 and ratio > 1, got start={start}, ratio={ratio}"
            ),
        ));
    }
    Ok((0..count).map(|i| start * ratio.powi(i as i32)).collect())
}

/// Rejects grids that are not geometric to within a relative 1e-9.
pub fn check_geometric(t_grid: &[f64]) -> Result<()> {
    if t_grid.iter().any(|t| t.is_nan() || *t <= 0.0) {
        return Err(Error::invalid("t_grid", "all grid times must be > 0"));
    }
    if t_grid.len() >= 3 {
        let r0 = t_grid[1] / t_grid[0];
        if t_grid
            .windows(2)
            .any(|w| ((w[1] / w[0]) / r0 - 1.0).abs() > 1e-9)
        {
            return Err(Error::invalid(
                "t_grid",
                "grid is not geometric (ratios differ)",
            ));
        }
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("t_grid", "grid must be strictly increasing"));
    }
    Ok(())
}

/// Certified `sup_k |x_k(t) - c|` on a geometric time grid.
pub fn decay_curve(
    x0: &Constellation,
    kind: DynamicsKind,
    t_grid: &[f64],
    c: Complex64,
    eps_tail: f64,
) -> Result<TrajectorySample> {
    check_geometric(t_grid)?;
    kernels::evaluate(
        x0,
        kind,
        t_grid,
        Sampling::Certified { display: None },
        c,
        eps_tail,
    )
}

/// Log-log fit of `sup_dev` against `t` for `t >= t_min`, dropping points
/// at or below the noise floor `100 · eps_tail`.
pub fn fit_rate(sample: &TrajectorySample, t_min: f64) -> Result<RateFit> {
    let floor = 100.0 * sample.eps_tail;
    let (ts, ys): (Vec<f64>, Vec<f64>) = sample
        .times
        .iter()
        .zip(&sample.sup_dev)
        .filter(|(t, y)| **t >= t_min && **y > floor)
        .map(|(t, y)| (*t, *y))
        .unzip();
    fit_loglog(&ts, &ys)
}

/// Exponential fit `ln sup_dev ≈ intercept + slope · t` for `t >= t_min`.
/// The decay rate is `-slope`.
pub fn fit_exponential_rate(sample: &TrajectorySample, t_min: f64, floor: f64) -> Result<RateFit> {
    let (ts, ys): (Vec<f64>, Vec<f64>) = sample
        .times
        .iter()
        .zip(&sample.sup_dev)
        .filter(|(t, y)| **t >= t_min && **y > floor)
        .map(|(t, y)| (*t, y.ln()))
        .unzip();
    if ts.len() < 4 {
        return Err(Error::TooFewPoints { found: ts.len() });
    }
    let (slope, intercept, residual_rms) = least_squares(&ts, &ys);
    Ok(RateFit {
        slope,
        intercept,
        residual_rms,
        t_range: (ts[0], ts[ts.len() - 1]),
        n_points: ts.len(),
    })
}

/// Smallest nonzero decay rate `1 - cos(2π/n)` of the `n`-robot ring.
pub fn spectral_gap(n_robots: usize) -> f64 {
    1.0 - (2.0 * PI / n_robots as f64).cos()
}

/// Exact solution of the ring where robot `k` chases robot `k-1 mod n`,
/// by diagonalizing the circulant shift. `sup_dev` is measured from the centroid.
pub fn finite_case_curve(x0: &[Complex64], t_grid: &[f64]) -> Result<TrajectorySample> {
    let n = x0.len();
    if n < 2 {
        return Err(Error::invalid(
            "n_robots",
            format!("need at least 2 robots, got {n}"),
        ));
    }
    if t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::invalid("t_grid", "times must be finite and >= 0"));
    }
    let nf = n as f64;
    let root =
        |m: usize, k: usize| Complex64::from_polar(1.0, 2.0 * PI * ((m * k) % n) as f64 / nf);
    // x̂_m = Σ_k x_k e^{-2πimk/n}; eigenvalue of S - I on mode m is e^{-2πim/n} - 1.
    let spectrum: Vec<(Complex64, Complex64)> = (0..n)
        .map(|m| {
            let hat: Complex64 = (0..n).map(|k| x0[k] * root(m, k).conj()).sum();
            (hat, root(m, 1).conj() - 1.0)
        })
        .collect();
    let centroid = spectrum[0].0 / nf;

    let mut values = Vec::with_capacity(t_grid.len());
    let mut sup_dev = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let growth: Vec<Complex64> = spectrum.iter().map(|(h, l)| h * (l * t).exp()).collect();
        // Deviations are assembled from the nonzero modes only, so they stay
        // accurate far below the size of the centroid.
        let devs: Vec<Complex64> = (0..n)
            .map(|k| (1..n).map(|m| growth[m] * root(m, k)).sum::<Complex64>() / nf)
            .collect();
        sup_dev.push(devs.iter().map(|d| d.norm()).fold(0.0, f64::max));
        values.push(devs.iter().map(|d| centroid + d).collect());
    }
    Ok(TrajectorySample {
        label: format!("ring({n})"),
        kind: DynamicsKind::OneSided,
        eps_tail: 0.0,
        times: t_grid.to_vec(),
        window: Some(IndexWindow {
            lo: 0,
            hi: n as i64 - 1,
        }),
        values,
        error_bound: vec![0.0; t_grid.len()],
        sup_dev,
        certified: true,
        limit_c: centroid,
        kernels: Vec::new(),
    })
}

/// CSV with columns `t,sup_dev`.
pub fn write_curve_csv<W: Write>(sample: &TrajectorySample, mut out: W) -> io::Result<()> {
    writeln!(out, "t,sup_dev")?;
    for (t, d) in sample.times.iter().zip(&sample.sup_dev) {
        writeln!(out, "{t},{d}")?;
    }
    Ok(())
}
