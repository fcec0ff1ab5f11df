//! Exact solutions of the lattice dynamics by kernel convolution.
//!
//! The one-sided semigroup `e^{t(S-I)}` acts as convolution with the Poisson
//! weights `e^{-t} t^j / j!` (`j >= 0`); the symmetric semigroup
//! `e^{t((S+S^{-1})/2 - I)}` acts with `e^{-t} I_|j|(t)` (`j ∈ ℤ`). Both
//! kernels are truncated with a certified bound on the omitted mass.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{self, Footprint};
use crate::constellations::{Constellation, IndexWindow, TailClass};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    /// `x_k' = x_{k-1} - x_k`.
    OneSided,
    /// `x_k' = (x_{k-1} + x_{k+1})/2 - x_k`.
    Symmetric,
}

/// Truncated kernel `T(t) = Σ_j w_j S^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelWeights {
    /// Shift `j` of `weights[0]`.
    pub offset: i64,
    pub weights: Vec<f64>,
    /// Omitted mass plus a `len·ε` rounding allowance.
    pub tail_bound: f64,
    pub t: f64,
    pub kind: DynamicsKind,
}

/// Summary of a kernel actually used during an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelAudit {
    pub t: f64,
    pub kind: DynamicsKind,
    pub len: usize,
    pub mass: f64,
    pub tail_bound: f64,
}

fn check_args(t: f64, eps_tail: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(
            "t",
            format!("time must be finite and >= 0, got {t}"),
        ));
    }
    if eps_tail.is_nan() || eps_tail <= 0.0 {
        return Err(Error::invalid(
            "eps_tail",
            format!("must be > 0, got {eps_tail}"),
        ));
    }
    Ok(())
}

/// Rounding allowance added to every tail bound.
fn rounding_allowance(len: usize) -> f64 {
    len.saturating_sub(1) as f64 * f64::EPSILON
}

fn finish(
    kind: DynamicsKind,
    t: f64,
    offset: i64,
    weights: Vec<f64>,
    omitted: f64,
    eps_tail: f64,
) -> Result<KernelWeights> {
    let tail_bound = omitted + rounding_allowance(weights.len());
    if tail_bound > eps_tail {
        return Err(Error::invalid(
            "eps_tail",
            format!("{eps_tail:e} is below the rounding floor {tail_bound:e} at t = {t}"),
        ));
    }
    Ok(KernelWeights {
        offset,
        weights,
        tail_bound,
        t,
        kind,
    })
}

/// `ln(e^{-t} t^m / m!)` without cancellation for large `m`.
fn ln_poisson_pmf(t: f64, m: u64) -> f64 {
    if m < 20 {
        let ln_fact: f64 = (2..=m).map(|k| (k as f64).ln()).sum();
        let ln_tm = if m == 0 { 0.0 } else { m as f64 * t.ln() };
        return -t + ln_tm - ln_fact;
    }
    // Stirling expansion of ln m!, with t = m + delta so that m ln m cancels.
    let mf = m as f64;
    let delta = t - mf;
    let inv = 1.0 / mf;
    let inv2 = inv * inv;
    let series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
    -delta + mf * (delta / mf).ln_1p() - 0.5 * (2.0 * std::f64::consts::PI * mf).ln() - series
}

/// Poisson weights `e^{-t} t^j / j!` around the mode, extended until each
/// tail has certified mass at most `eps_tail / 4`.
pub fn poisson_weights(t: f64, eps_tail: f64) -> Result<KernelWeights> {
    check_args(t, eps_tail)?;
    if t == 0.0 {
        return finish(DynamicsKind::OneSided, t, 0, vec![1.0], 0.0, eps_tail);
    }
    let side = eps_tail / 4.0;
    let mode = t.floor() as u64;
    let w_mode = ln_poisson_pmf(t, mode).exp();

    // Right of the mode the ratio t/(j+1) < 1 decreases, so the remaining
    // tail after keeping j <= hi is dominated by a geometric series.
    let mut right = vec![w_mode];
    let mut hi = mode;
    let right_tail = loop {
        let next = right.last().unwrap() * (t / (hi + 1) as f64);
        let ratio = t / (hi + 2) as f64;
        let bound = next / (1.0 - ratio);
        if bound <= side {
            break bound;
        }
        right.push(next);
        hi += 1;
    };

    // Left of the mode, w_{j-1} = w_j · j/t with j/t < 1.
    let mut left = Vec::new();
    let mut lo = mode;
    let mut w = w_mode;
    let left_tail = loop {
        if lo == 0 {
            break 0.0;
        }
        let prev = w * (lo as f64 / t);
        let ratio = (lo - 1) as f64 / t;
        let bound = prev / (1.0 - ratio);
        if bound <= side {
            break bound;
        }
        left.push(prev);
        w = prev;
        lo -= 1;
    };

    let mut weights: Vec<f64> = left.into_iter().rev().collect();
    weights.extend(right);
    finish(
        DynamicsKind::OneSided,
        t,
        lo as i64,
        weights,
        left_tail + right_tail,
        eps_tail,
    )
}

/// Bessel weights `e^{-t} I_|j|(t)` by Miller's backward recurrence,
/// normalized with `e^{-t}(I_0 + 2 Σ_{j>=1} I_j) = 1`.
pub fn bessel_weights(t: f64, eps_tail: f64) -> Result<KernelWeights> {
    check_args(t, eps_tail)?;
    if t == 0.0 {
        return finish(DynamicsKind::Symmetric, t, 0, vec![1.0], 0.0, eps_tail);
    }
    let start = (12.0 * t.sqrt() + 30.0 + t.min(150.0)).ceil() as usize;

    const BIG: f64 = 1e250;
    let mut p = vec![0.0f64; start + 2];
    p[start] = 1e-280;
    for j in (1..=start).rev() {
        let next = p[j + 1] + (2.0 * j as f64 / t) * p[j];
        p[j - 1] = next;
        if next > BIG {
            for v in &mut p[j - 1..] {
                *v /= BIG;
            }
        }
    }
    let mut norm = KahanSum::default();
    for v in p[1..=start].iter().rev() {
        norm.add(2.0 * v);
    }
    norm.add(p[0]);
    let norm = norm.value();
    let scaled: Vec<f64> = p[..=start].iter().map(|v| v / norm).collect();

    // Mass beyond the start order: ratios I_{j+1}/I_j < 1/2 once j >= t.
    let beyond = 2.0 * scaled[start];
    let budget = eps_tail / 2.0;
    let mut tail = beyond;
    let mut half = start;
    while half > 0 && tail + 2.0 * scaled[half] <= budget {
        tail += 2.0 * scaled[half];
        half -= 1;
    }
    let half_i = half as i64;
    let weights: Vec<f64> = (-half_i..=half_i)
        .map(|j| scaled[j.unsigned_abs() as usize])
        .collect();
    finish(DynamicsKind::Symmetric, t, -half_i, weights, tail, eps_tail)
}

#[derive(Default)]
struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

impl KernelWeights {
    pub fn new(kind: DynamicsKind, t: f64, eps_tail: f64) -> Result<Self> {
        match kind {
            DynamicsKind::OneSided => poisson_weights(t, eps_tail),
            DynamicsKind::Symmetric => bessel_weights(t, eps_tail),
        }
    }

    /// Inclusive range of shifts with stored weights.
    pub fn shift_range(&self) -> (i64, i64) {
        (self.offset, self.offset + self.weights.len() as i64 - 1)
    }

    pub fn weight(&self, j: i64) -> f64 {
        let i = j - self.offset;
        if i < 0 {
            return 0.0;
        }
        self.weights.get(i as usize).copied().unwrap_or(0.0)
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Fourier symbol `Σ_j w_j e^{-iθj}`.
    pub fn symbol(&self, theta: f64) -> Complex64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| Complex64::from_polar(*w, -theta * (self.offset + i as i64) as f64))
            .sum()
    }

    /// `Σ_j w_j x_{k-j}`, summed in ascending `j`.
    pub fn apply_at(&self, x0: &Constellation, k: i64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, w) in self.weights.iter().enumerate() {
            acc += *w * x0.entry(k - self.offset - i as i64);
        }
        acc
    }

    fn apply_slice(&self, src: &[Complex64], src_lo: i64, k: i64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, w) in self.weights.iter().enumerate() {
            acc += *w * src[(k - self.offset - i as i64 - src_lo) as usize];
        }
        acc
    }

    pub fn audit(&self) -> KernelAudit {
        KernelAudit {
            t: self.t,
            kind: self.kind,
            len: self.weights.len(),
            mass: self.mass(),
            tail_bound: self.tail_bound,
        }
    }
}

/// Where the solution is tabulated and how its sup deviation is measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// Values over the window; sup deviation over the window only.
    Window(IndexWindow),
    /// Sup deviation over all of ℤ, certified from tail metadata. Values are
    /// tabulated over `display` when given.
    Certified { display: Option<IndexWindow> },
}

/// Solution values and sup deviations on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub label: String,
    pub kind: DynamicsKind,
    pub eps_tail: f64,
    pub times: Vec<f64>,
    pub window: Option<IndexWindow>,
    /// `values[i][k - window.lo]` is `x_k(times[i])`.
    pub values: Vec<Vec<Complex64>>,
    /// Per time, the measured `sup |x_k(t) - limit_c|`.
    pub sup_dev: Vec<f64>,
    /// Per time, the bound on the evaluation error entering `sup_dev`.
    pub error_bound: Vec<f64>,
    /// Whether `sup_dev` is a sup over all of ℤ (otherwise window-only).
    pub certified: bool,
    pub limit_c: Complex64,
    pub kernels: Vec<KernelAudit>,
}

impl TrajectorySample {
    /// CSV with columns `t,k,re,im,sup_dev`; one row per tabulated value,
    /// or one row with an empty `k` per time when nothing is tabulated.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,k,re,im,sup_dev")?;
        for (i, t) in self.times.iter().enumerate() {
            match self.window {
                Some(w) => {
                    for (k, v) in w.indices().zip(&self.values[i]) {
                        writeln!(out, "{t},{k},{},{},{}", v.re, v.im, self.sup_dev[i])?;
                    }
                }
                None => writeln!(out, "{t},,,,{}", self.sup_dev[i])?,
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("trajectory serializes")
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::invalid(
            "times",
            "every time must be finite and >= 0",
        ));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("times", "times must be sorted ascending"));
    }
    Ok(())
}

fn max_dev(values: &[Complex64], c: Complex64) -> f64 {
    values.iter().map(|v| (v - c).norm()).fold(0.0, f64::max)
}

/// Solution `x(t) = T(t) x0` on a time grid.
pub fn evaluate(
    x0: &Constellation,
    kind: DynamicsKind,
    times: &[f64],
    sampling: Sampling,
    limit_c: Complex64,
    eps_tail: f64,
) -> Result<TrajectorySample> {
    check_times(times)?;
    if matches!(
        x0.tail(),
        TailClass::Unstructured { .. } | TailClass::DecayingPerturbation { .. }
    ) && matches!(sampling, Sampling::Certified { .. })
    {
        return Err(Error::UncertifiableTail {
            label: x0.label().to_string(),
        });
    }
    let display = match sampling {
        Sampling::Window(w) => Some(w),
        Sampling::Certified { display } => display,
    };

    let mut values = Vec::with_capacity(times.len());
    let mut sup_dev = Vec::with_capacity(times.len());
    let mut error_bound = Vec::with_capacity(times.len());
    let mut kernels = Vec::with_capacity(times.len());
    for &t in times {
        let kw = KernelWeights::new(kind, t, eps_tail)?;
        let shown: Vec<Complex64> = match display {
            Some(w) => eval_window(&kw, x0, w),
            None => Vec::new(),
        };
        let dev = match sampling {
            Sampling::Window(_) => max_dev(&shown, limit_c),
            Sampling::Certified { .. } => {
                let (d_lo, d_hi) = kw.shift_range();
                let symbol = |theta: f64| kw.symbol(theta);
                let plan = certify::plan(
                    x0,
                    &Footprint {
                        d_lo,
                        d_hi,
                        symbol: &symbol,
                    },
                    limit_c,
                )?;
                let region = eval_window(&kw, x0, plan.region);
                max_dev(&region, limit_c)
                    .max(plan.outside)
                    .max(max_dev(&shown, limit_c))
            }
        };
        error_bound.push(kw.tail_bound * x0.bound());
        sup_dev.push(dev);
        values.push(shown);
        kernels.push(kw.audit());
    }
    Ok(TrajectorySample {
        label: x0.label().to_string(),
        kind,
        eps_tail,
        times: times.to_vec(),
        window: display,
        values,
        sup_dev,
        error_bound,
        certified: matches!(sampling, Sampling::Certified { .. }),
        limit_c,
        kernels,
    })
}

fn eval_window(kw: &KernelWeights, x0: &Constellation, w: IndexWindow) -> Vec<Complex64> {
    let (d_lo, d_hi) = kw.shift_range();
    let src_window = IndexWindow {
        lo: w.lo - d_hi,
        hi: w.hi - d_lo,
    };
    let src: Vec<Complex64> = src_window
        .indices()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&k| x0.entry(k))
        .collect();
    w.indices()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&k| kw.apply_slice(&src, src_window.lo, k))
        .collect()
}

/// The generator applied to `x0`: `(S - I) x0` or `((S + S^{-1})/2 - I) x0`.
pub fn apply_generator(x0: &Constellation, kind: DynamicsKind) -> Constellation {
    let inner = x0.clone();
    let f = move |k: i64| match kind {
        DynamicsKind::OneSided => inner.entry(k - 1) - inner.entry(k),
        DynamicsKind::Symmetric => {
            0.5 * inner.entry(k - 1) + 0.5 * inner.entry(k + 1) - inner.entry(k)
        }
    };
    let label = format!(
        "{}({})",
        match kind {
            DynamicsKind::OneSided => "(S-I)",
            DynamicsKind::Symmetric => "((S+S^-1)/2-I)",
        },
        x0.label()
    );
    if let Some((_, _, r)) = x0.tail().finite_support() {
        return Constellation::finite_difference(label, r + 1, f);
    }
    let bound = 2.0 * x0.bound();
    let tail = match x0.tail() {
        TailClass::DecayingPerturbation { .. } => TailClass::DecayingPerturbation {
            c: Complex64::new(0.0, 0.0),
        },
        _ => TailClass::Unstructured { bound },
    };
    Constellation::with_entry(label, tail, bound, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellations::BlockRule;
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    fn cz(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    /// Independent oracle: `e^{-t} t^j / j!` as `exp(Σ_k ln(t/k) - t)`, with
    /// a compensated sum so the cancellation against `t` stays accurate.
    fn poisson_oracle(t: f64, j: u64) -> f64 {
        let (mut s, mut comp) = (0.0f64, 0.0f64);
        for k in 1..=j {
            let x = (t / k as f64).ln();
            let y = s + x;
            comp += if s.abs() >= x.abs() {
                (s - y) + x
            } else {
                (x - y) + s
            };
            s = y;
        }
        let hi = s - t;
        (hi + comp).exp()
    }

    /// Independent oracle: power series `I_j(t) = Σ_m (t/2)^{2m+j} / (m! (m+j)!)`.
    fn bessel_i_series(j: u32, t: f64) -> f64 {
        let half = t / 2.0;
        let mut term = half.powi(j as i32) / (1..=j).map(|k| k as f64).product::<f64>();
        let mut sum = term;
        for m in 1..400 {
            term *= half * half / (m as f64 * (m + j) as f64);
            sum += term;
            if term < sum * 1e-18 {
                break;
            }
        }
        sum
    }

    #[test]
    fn poisson_at_zero_is_identity() {
        let k = poisson_weights(0.0, EPS).unwrap();
        assert_eq!(k.offset, 0);
        assert_eq!(k.weights, vec![1.0]);
        assert_eq!(k.tail_bound, 0.0);
    }

    #[test]
    fn poisson_at_one() {
        let k = poisson_weights(1.0, EPS).unwrap();
        assert_eq!(k.offset, 0);
        assert!((k.weight(0) - 0.367_879_441_171_442_33).abs() < 1e-16);
        let mass = k.mass();
        assert!((1.0 - 1e-12..=1.0 + 1e-15).contains(&mass), "mass {mass}");
    }

    #[test]
    fn poisson_matches_oracle() {
        for &t in &[0.3, 2.5, 17.0, 123.4, 1000.0, 9876.5] {
            let k = poisson_weights(t, EPS).unwrap();
            let (lo, hi) = k.shift_range();
            assert!(lo <= t.floor() as i64 && t.floor() as i64 <= hi);
            for j in lo..=hi {
                let o = poisson_oracle(t, j as u64);
                assert!(
                    (k.weight(j) - o).abs() <= 1e-11 * o + 1e-300,
                    "t={t} j={j}: {} vs {o}",
                    k.weight(j)
                );
            }
            assert!((k.mass() - 1.0).abs() <= 2.0 * EPS);
            assert!(k.tail_bound <= EPS);
        }
    }

    #[test]
    fn bessel_at_zero_is_identity() {
        let k = bessel_weights(0.0, EPS).unwrap();
        assert_eq!(k.offset, 0);
        assert_eq!(k.weights, vec![1.0]);
    }

    #[test]
    fn bessel_matches_series_oracle() {
        for &t in &[0.01, 0.5, 1.0, 4.0, 12.0, 30.0] {
            let k = bessel_weights(t, EPS).unwrap();
            let (lo, hi) = k.shift_range();
            assert_eq!(lo, -hi);
            for j in 0..=hi.min(60) {
                let o = (-t).exp() * bessel_i_series(j as u32, t);
                assert!(
                    (k.weight(j) - o).abs() <= 1e-13 + 1e-11 * o,
                    "t={t} j={j}: {} vs {o}",
                    k.weight(j)
                );
            }
            let mass = k.mass();
            assert!(
                (1.0 - EPS..=1.0 + 1e-14).contains(&mass),
                "t={t} mass {mass}"
            );
        }
        // I_0(1) = 1.2660658777520082
        let k = bessel_weights(1.0, EPS).unwrap();
        assert!((k.weight(0) - (-1.0f64).exp() * 1.266_065_877_752_008_2).abs() < 1e-15);
    }

    #[test]
    fn bessel_large_t_asymptotics() {
        // e^{-t} I_0(t) ~ (2πt)^{-1/2} (1 + 1/(8t) + 9/(128 t^2))
        for &t in &[400.0, 1600.0, 6400.0] {
            let k = bessel_weights(t, EPS).unwrap();
            let a = (2.0 * std::f64::consts::PI * t).powf(-0.5)
                * (1.0 + 1.0 / (8.0 * t) + 9.0 / (128.0 * t * t));
            assert!((k.weight(0) / a - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn weights_shapes() {
        for &t in &[0.7, 5.0, 64.0, 2000.0] {
            let p = poisson_weights(t, EPS).unwrap();
            let mode = t.floor() as i64;
            let (lo, hi) = p.shift_range();
            for j in lo..mode {
                assert!(p.weight(j) <= p.weight(j + 1));
            }
            for j in mode..hi {
                assert!(p.weight(j) >= p.weight(j + 1));
            }
            let b = bessel_weights(t, EPS).unwrap();
            let (_, bh) = b.shift_range();
            for j in 0..bh {
                assert_eq!(b.weight(j), b.weight(-j));
                assert!(b.weight(j) >= b.weight(j + 1));
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(poisson_weights(-1.0, EPS).is_err());
        assert!(poisson_weights(1.0, 0.0).is_err());
        assert!(bessel_weights(-0.5, EPS).is_err());
        assert!(bessel_weights(2.0, -1.0).is_err());
        assert!(poisson_weights(f64::NAN, EPS).is_err());
    }

    #[test]
    fn delta_one_sided_is_poisson() {
        let x0 = Constellation::delta(0, 1.0);
        let w = IndexWindow::new(-5, 30).unwrap();
        let s = evaluate(
            &x0,
            DynamicsKind::OneSided,
            &[1.0, 10.0],
            Sampling::Window(w),
            cz(0.0),
            EPS,
        )
        .unwrap();
        assert!((s.values[0][(1 - w.lo) as usize].re - 0.367_879_441_171_442_33).abs() < 1e-15);
        for (i, &t) in s.times.iter().enumerate() {
            for k in w.indices() {
                let v = s.values[i][(k - w.lo) as usize];
                let expect = if k < 0 {
                    0.0
                } else {
                    poisson_oracle(t, k as u64)
                };
                assert!((v.re - expect).abs() < 1e-12 && v.im == 0.0);
            }
        }
    }

    #[test]
    fn fourier_mode_one_sided_closed_form() {
        let theta = 0.9;
        let x0 = Constellation::fourier_mode(theta).unwrap();
        let w = IndexWindow::new(-20, 20).unwrap();
        let times = [0.5, 3.0, 12.0];
        let s = evaluate(
            &x0,
            DynamicsKind::OneSided,
            &times,
            Sampling::Window(w),
            cz(0.0),
            EPS,
        )
        .unwrap();
        let mu = Complex64::from_polar(1.0, -theta) - 1.0;
        for (i, &t) in times.iter().enumerate() {
            for k in w.indices() {
                let expect = (mu * t).exp() * Complex64::from_polar(1.0, theta * k as f64);
                assert!((s.values[i][(k - w.lo) as usize] - expect).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn constants_are_fixed() {
        let c = Complex64::new(2.0, -1.5);
        let x0 = Constellation::constant(c);
        let w = IndexWindow::new(-3, 3).unwrap();
        for kind in [DynamicsKind::OneSided, DynamicsKind::Symmetric] {
            let s = evaluate(&x0, kind, &[0.0, 7.0, 300.0], Sampling::Window(w), c, EPS).unwrap();
            for row in &s.values {
                for v in row {
                    assert!((v - c).norm() <= EPS * c.norm());
                }
            }
            let cert = evaluate(
                &x0,
                kind,
                &[7.0],
                Sampling::Certified { display: None },
                c,
                EPS,
            )
            .unwrap();
            assert!(cert.sup_dev[0] <= EPS * c.norm());
        }
    }

    #[test]
    fn certified_sup_of_delta_is_poisson_mode() {
        let x0 = Constellation::delta(0, 1.0);
        for &t in &[3.0, 50.5, 800.0] {
            let s = evaluate(
                &x0,
                DynamicsKind::OneSided,
                &[t],
                Sampling::Certified { display: None },
                cz(0.0),
                EPS,
            )
            .unwrap();
            let mode = poisson_oracle(t, t.floor() as u64);
            assert!((s.sup_dev[0] - mode).abs() < 1e-12 * mode.max(1.0));
        }
    }

    #[test]
    fn certification_refuses_unstructured() {
        let u = Constellation::from_fn("noise", 1.0, |k| cz((k as f64).sin()));
        let err = evaluate(
            &u,
            DynamicsKind::Symmetric,
            &[1.0],
            Sampling::Certified { display: None },
            cz(0.0),
            EPS,
        )
        .unwrap_err();
        assert!(matches!(err, Error::UncertifiableTail { .. }));
        let w = IndexWindow::new(-4, 4).unwrap();
        assert!(evaluate(
            &u,
            DynamicsKind::Symmetric,
            &[1.0],
            Sampling::Window(w),
            cz(0.0),
            EPS
        )
        .is_ok());
    }

    #[test]
    fn block_sequence_sup_stays_large() {
        let b = Constellation::block_sequence(BlockRule::doubling()).unwrap();
        let s = evaluate(
            &b,
            DynamicsKind::OneSided,
            &[10.0, 1000.0],
            Sampling::Certified { display: None },
            cz(0.5),
            EPS,
        )
        .unwrap();
        for d in &s.sup_dev {
            assert!((d - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn apply_generator_examples() {
        let d = Constellation::delta(0, 1.0);
        let g = apply_generator(&d, DynamicsKind::OneSided);
        assert_eq!(g.entry(1), cz(1.0));
        assert_eq!(g.entry(0), cz(-1.0));
        assert_eq!(g.entry(2), cz(0.0));
        let s = apply_generator(&d, DynamicsKind::Symmetric);
        assert_eq!(s.entry(-1), cz(0.5));
        assert_eq!(s.entry(0), cz(-1.0));
        assert_eq!(s.entry(1), cz(0.5));
        assert_eq!(s.entry(2), cz(0.0));
        match s.tail() {
            TailClass::SummablePerturbation {
                l1_bound,
                support_radius,
                ..
            } => {
                assert_eq!(*l1_bound, 2.0);
                assert_eq!(*support_radius, Some(1));
            }
            other => panic!("{other:?}"),
        }
        let c = Constellation::constant(Complex64::new(3.0, 1.0));
        for kind in [DynamicsKind::OneSided, DynamicsKind::Symmetric] {
            let z = apply_generator(&c, kind);
            for k in -5..5 {
                assert_eq!(z.entry(k), cz(0.0));
            }
        }
    }

    #[test]
    fn semigroup_property_on_delta() {
        let x0 = Constellation::delta(0, 1.0);
        for kind in [DynamicsKind::OneSided, DynamicsKind::Symmetric] {
            for &(s, t) in &[(1.5, 2.0), (4.0, 10.0), (10.0, 7.25)] {
                let w = IndexWindow::new(-120, 160).unwrap();
                let at_s = evaluate(&x0, kind, &[s], Sampling::Window(w), cz(0.0), EPS).unwrap();
                let mid =
                    Constellation::eventually_constant(w.lo, at_s.values[0].clone(), 0.0, 0.0);
                let probe = IndexWindow::new(-40, 80).unwrap();
                let lhs =
                    evaluate(&mid, kind, &[t], Sampling::Window(probe), cz(0.0), EPS).unwrap();
                let rhs =
                    evaluate(&x0, kind, &[s + t], Sampling::Window(probe), cz(0.0), EPS).unwrap();
                let diff = max_dev(
                    &lhs.values[0]
                        .iter()
                        .zip(&rhs.values[0])
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>(),
                    cz(0.0),
                );
                assert!(diff < 4.0 * EPS, "{kind:?} s={s} t={t}: {diff}");
            }
        }
    }

    #[test]
    fn csv_layout() {
        let x0 = Constellation::delta(0, 1.0);
        let w = IndexWindow::new(0, 1).unwrap();
        let s = evaluate(
            &x0,
            DynamicsKind::OneSided,
            &[0.0],
            Sampling::Window(w),
            cz(0.0),
            EPS,
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,k,re,im,sup_dev\n0,0,1,0,1\n0,1,0,0,1\n"
        );
        let j = s.to_json();
        assert_eq!(j["kind"], "one_sided");
    }

    proptest! {
        #[test]
        fn mass_and_tail_certified(t in 0.0f64..3000.0, symmetric in any::<bool>()) {
            let kind = if symmetric { DynamicsKind::Symmetric } else { DynamicsKind::OneSided };
            let k = KernelWeights::new(kind, t, EPS).unwrap();
            prop_assert!(k.weights.iter().all(|w| *w >= 0.0));
            prop_assert!(k.tail_bound <= EPS);
            prop_assert!((k.mass() - 1.0).abs() <= 2.0 * EPS);
            prop_assert!((k.mass() + k.tail_bound - 1.0).abs() <= 2.0 * k.tail_bound);
        }

        #[test]
        fn contraction_in_sup_norm(t in 0.0f64..200.0, seed in 0u64..1000, symmetric in any::<bool>()) {
            let kind = if symmetric { DynamicsKind::Symmetric } else { DynamicsKind::OneSided };
            let vals: Vec<Complex64> = (0..9)
                .map(|i| Complex64::from_polar(1.0, (seed as f64 + 1.3 * i as f64).sin() * 3.0))
                .collect();
            let x0 = Constellation::eventually_constant(-4, vals, cz(1.0), Complex64::new(0.0, -1.0));
            let w = IndexWindow::new(-30, 30).unwrap();
            let s = evaluate(&x0, kind, &[t], Sampling::Window(w), cz(0.0), EPS).unwrap();
            let b = x0.bound();
            prop_assert!(s.values[0].iter().all(|v| v.norm() <= b + EPS * b));
        }
    }
}
