//! Cesàro analysis of initial constellations in the sup norm.
//!
//! For the one-sided dynamics the relevant means are `(1/n) Σ_{j=1..n} x_{k-j}`;
//! for the symmetric dynamics they are `(1/n) Σ_{j=1..n} (A^j x)_k` with
//! `A = (S + S^{-1})/2`, i.e. binomially weighted averages. Goodness of a
//! constellation is decided from how `sup_k |mean_n(k) - c|` behaves in `n`.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{self, Footprint, SupPlan};
use crate::constellations::{Constellation, IndexWindow, TailClass};
use crate::error::{Error, Result};
use crate::kernels::DynamicsKind;
use crate::rates::{fit_loglog, RateFit};

/// Largest `sup_dev` at the final `n` for which a verdict can be Good.
pub const THETA_GOOD: f64 = 1e-3;
/// Persistent deviation at or above which a verdict is NotGood.
pub const THETA_BAD: f64 = 0.1;
/// Allowed relative upward wobble in the nonincreasing-tail check.
pub const TAIL_WOBBLE: f64 = 0.05;
/// Half-width of the index window used when no tail certificate exists.
pub const WINDOW_ONLY_HALF_WIDTH: i64 = 4096;

const ESTIMATE_N_ONE_SIDED: u64 = 1 << 16;
const ESTIMATE_N_SYMMETRIC: u64 = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Good,
    NotGood,
    Inconclusive,
}

/// A sup deviation, flagged when it only covers a finite window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub value: f64,
    pub window_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub c: Complex64,
    /// True when `c` is a finite-`n` Cesàro mean rather than read from tail metadata.
    pub estimated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CesaroReport {
    pub label: String,
    pub kind: DynamicsKind,
    pub ns: Vec<u64>,
    pub sup_dev: Vec<f64>,
    pub limit_c: Complex64,
    pub limit_estimated: bool,
    pub window_only: bool,
    pub verdict: Verdict,
    pub rate_fit: Option<RateFit>,
}

impl CesaroReport {
    /// CSV with columns `n,sup_dev`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,sup_dev")?;
        for (n, d) in self.ns.iter().zip(&self.sup_dev) {
            writeln!(out, "{n},{d}")?;
        }
        Ok(())
    }
}

/// `sup_k |(1/n) Σ_{j=1..n} x_{k-j} - c|`.
pub fn cesaro_deviation_one_sided(x0: &Constellation, n: u64, c: Complex64) -> Result<Deviation> {
    let (devs, window_only) = deviation_curve(x0, DynamicsKind::OneSided, &[n], c)?;
    Ok(Deviation {
        value: devs[0],
        window_only,
    })
}

/// `sup_k |(1/n) Σ_{j=1..n} 2^{-j} Σ_l C(j,l) x_{k-j+2l} - c|`.
pub fn cesaro_deviation_symmetric(x0: &Constellation, n: u64, c: Complex64) -> Result<Deviation> {
    let (devs, window_only) = deviation_curve(x0, DynamicsKind::Symmetric, &[n], c)?;
    Ok(Deviation {
        value: devs[0],
        window_only,
    })
}

fn check_ns(ns: &[u64]) -> Result<()> {
    if ns.is_empty() || ns[0] == 0 {
        return Err(Error::invalid("ns", "window lengths must be >= 1"));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "ns",
            "window lengths must be strictly increasing",
        ));
    }
    Ok(())
}

fn one_sided_symbol(n: u64) -> impl Fn(f64) -> Complex64 + Sync {
    move |theta| {
        (1..=n)
            .map(|j| Complex64::from_polar(1.0, -theta * j as f64))
            .sum::<Complex64>()
            / n as f64
    }
}

fn symmetric_symbol(n: u64) -> impl Fn(f64) -> Complex64 + Sync {
    move |theta| {
        let c = theta.cos();
        let mut p = 1.0;
        let mut s = 0.0;
        for _ in 0..n {
            p *= c;
            s += p;
        }
        Complex64::new(s / n as f64, 0.0)
    }
}

/// Sup deviations for every `n` in `ns` (strictly increasing). The second
/// value is true when the sup only covers a finite window.
pub fn deviation_curve(
    x0: &Constellation,
    kind: DynamicsKind,
    ns: &[u64],
    c: Complex64,
) -> Result<(Vec<f64>, bool)> {
    check_ns(ns)?;
    let n_max = *ns.last().unwrap() as i64;
    let (d_lo, d_hi) = match kind {
        DynamicsKind::OneSided => (1, n_max),
        DynamicsKind::Symmetric => (-n_max, n_max),
    };

    if let TailClass::FourierMode { theta } = x0.tail() {
        // Eigenvector: every mean is symbol(θ) e^{iθk}.
        let devs = ns
            .iter()
            .map(|&n| {
                let symbol: Box<dyn Fn(f64) -> Complex64 + Sync> = match kind {
                    DynamicsKind::OneSided => Box::new(one_sided_symbol(n)),
                    DynamicsKind::Symmetric => Box::new(symmetric_symbol(n)),
                };
                let plan = certify::plan(
                    x0,
                    &Footprint {
                        d_lo,
                        d_hi,
                        symbol: &*symbol,
                    },
                    c,
                )?;
                Ok(plan.outside.max((symbol(*theta) - c).norm()))
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok((devs, false));
    }

    let unit = |_: f64| Complex64::new(1.0, 0.0);
    let plan = match certify::plan(
        x0,
        &Footprint {
            d_lo,
            d_hi,
            symbol: &unit,
        },
        c,
    ) {
        Ok(p) => Some(p),
        Err(Error::UncertifiableTail { .. }) => None,
        Err(e) => return Err(e),
    };
    let window_only = plan.is_none();
    let plan = plan.unwrap_or(SupPlan {
        region: IndexWindow {
            lo: -WINDOW_ONLY_HALF_WIDTH,
            hi: WINDOW_ONLY_HALF_WIDTH,
        },
        outside: 0.0,
    });

    let devs = match (kind, x0.tail().finite_support()) {
        (DynamicsKind::OneSided, _) => ns
            .iter()
            .map(|&n| one_sided_region_sup(x0, n, c, n_region(x0, n, &plan)))
            .map(|d| d.max(plan.outside))
            .collect(),
        (DynamicsKind::Symmetric, Some((c_minus, c_plus, r))) => {
            symmetric_light_cone(x0, ns, c, c_minus, c_plus, r as i64)
        }
        (DynamicsKind::Symmetric, None) => symmetric_region_sups(x0, ns, c, plan.region)
            .into_iter()
            .map(|d| d.max(plan.outside))
            .collect(),
    };
    Ok((devs, window_only))
}

/// Region of indices needing explicit evaluation for a given `n`.
fn n_region(x0: &Constellation, n: u64, plan: &SupPlan) -> IndexWindow {
    match x0.tail().finite_support() {
        Some((_, _, r)) => IndexWindow {
            lo: -(r as i64) + 1,
            hi: r as i64 + n as i64,
        },
        None => plan.region,
    }
}

/// Max over `k ∈ region` of `|(1/n) Σ_{j=1..n} x_{k-j} - c|` via compensated prefix sums.
fn one_sided_region_sup(x0: &Constellation, n: u64, c: Complex64, region: IndexWindow) -> f64 {
    let n_i = n as i64;
    let src = IndexWindow {
        lo: region.lo - n_i,
        hi: region.hi - 1,
    };
    let vals: Vec<Complex64> = src
        .indices()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&k| x0.entry(k) - c)
        .collect();
    let mut prefix = Vec::with_capacity(vals.len() + 1);
    let (mut sum, mut comp) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    prefix.push(sum);
    for v in &vals {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        prefix.push(sum);
    }
    (0..region.len())
        .into_par_iter()
        .map(|i| (prefix[i + n as usize] - prefix[i]).norm() / n as f64)
        .reduce(|| 0.0, f64::max)
}

/// Symmetric means for finitely supported perturbations of a two-sided step.
///
/// After `j` steps, `A^j x` differs from the step only on `[-R-j, R+j]`, so
/// only that light cone is updated; positions outside it contribute their
/// tail limit to the running mean analytically.
fn symmetric_light_cone(
    x0: &Constellation,
    ns: &[u64],
    c: Complex64,
    c_minus: Complex64,
    c_plus: Complex64,
    r: i64,
) -> Vec<f64> {
    let n_max = *ns.last().unwrap() as i64;
    let half = r + n_max + 1;
    let lo = -half;
    let len = (2 * half + 1) as usize;
    let idx = |p: i64| (p - lo) as usize;
    // A fixes constants, so iterate on x - c directly.
    let mut u: Vec<Complex64> = (lo..=half).map(|p| x0.entry(p) - c).collect();
    let mut next = u.clone();
    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    let (dev_minus, dev_plus) = (c_minus - c, c_plus - c);
    let side = |p: i64| if p < 0 { dev_minus } else { dev_plus };
    let outside = dev_minus.norm().max(dev_plus.norm());

    let mut out = Vec::with_capacity(ns.len());
    let mut want = ns.iter().peekable();
    for j in 1..=n_max {
        let (a, b) = (idx(-r - j), idx(r + j));
        next[a..=b]
            .par_iter_mut()
            .enumerate()
            .for_each(|(off, slot)| {
                let i = a + off;
                *slot = 0.5 * (u[i - 1] + u[i + 1]);
            });
        u[a..=b].copy_from_slice(&next[a..=b]);
        for i in a..=b {
            acc[i] += u[i];
        }
        if want.peek().map(|&&n| n as i64) == Some(j) {
            want.next();
            let n = j;
            let region_max = (-r - n..=r + n)
                .into_par_iter()
                .map(|p| {
                    // steps j' < |p| - r left position p untouched at its tail value
                    let untouched = (p.abs() - r - 1).clamp(0, n) as f64;
                    let total = acc[idx(p)] + untouched * side(p);
                    total.norm() / n as f64
                })
                .reduce(|| 0.0, f64::max);
            out.push(region_max.max(outside));
        }
    }
    out
}

/// Symmetric means over an explicit region by iterating the two-point
/// stencil on a materialized array wide enough that edge effects never
/// reach the region.
fn symmetric_region_sups(
    x0: &Constellation,
    ns: &[u64],
    c: Complex64,
    region: IndexWindow,
) -> Vec<f64> {
    let n_max = *ns.last().unwrap() as i64;
    let lo = region.lo - n_max - 1;
    let hi = region.hi + n_max + 1;
    let mut u: Vec<Complex64> = (lo..=hi)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&p| x0.entry(p) - c)
        .collect();
    let mut next = u.clone();
    let r0 = (region.lo - lo) as usize;
    let r1 = (region.hi - lo) as usize;
    let mut acc = vec![Complex64::new(0.0, 0.0); r1 - r0 + 1];
    let mut out = Vec::with_capacity(ns.len());
    let mut want = ns.iter().peekable();
    let last = u.len() - 1;
    for j in 1..=n_max as usize {
        let (a, b) = (j, last - j);
        next[a..=b]
            .par_iter_mut()
            .enumerate()
            .for_each(|(off, slot)| {
                let i = a + off;
                *slot = 0.5 * (u[i - 1] + u[i + 1]);
            });
        std::mem::swap(&mut u, &mut next);
        for (i, a) in acc.iter_mut().enumerate() {
            *a += u[r0 + i];
        }
        if want.peek().map(|&&n| n as usize) == Some(j) {
            want.next();
            let n = j as f64;
            out.push(
                acc.par_iter()
                    .map(|a| a.norm() / n)
                    .reduce(|| 0.0, f64::max),
            );
        }
    }
    out
}

/// Row `j` of the iterated two-point stencil: weights of `x_{k+d}`, `d ∈ [-j, j]`,
/// in `A^j x`. Equals `C(j, (d+j)/2) / 2^j` on matching parity, zero otherwise.
pub fn stencil_row(j: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 0..j {
        let mut next = vec![0.0; row.len() + 2];
        for (i, w) in row.iter().enumerate() {
            next[i] += 0.5 * w;
            next[i + 2] += 0.5 * w;
        }
        row = next;
    }
    row
}

/// Candidate rendezvous point from tail metadata, or a Cesàro-mean estimate at `k = 0`.
pub fn extract_limit(x0: &Constellation, kind: DynamicsKind) -> LimitEstimate {
    let known = match x0.tail() {
        TailClass::EventuallyConstant {
            c_minus, c_plus, ..
        } if c_minus == c_plus => Some(*c_minus),
        TailClass::SummablePerturbation { c, .. } | TailClass::DecayingPerturbation { c } => {
            Some(*c)
        }
        TailClass::FourierMode { theta } => Some(if *theta == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }),
        _ => None,
    };
    if let Some(c) = known {
        return LimitEstimate {
            c,
            estimated: false,
        };
    }
    let c = match kind {
        DynamicsKind::OneSided => {
            let n = ESTIMATE_N_ONE_SIDED as i64;
            (1..=n).map(|j| x0.entry(-j)).sum::<Complex64>() / n as f64
        }
        DynamicsKind::Symmetric => {
            let n = ESTIMATE_N_SYMMETRIC as i64;
            let mut u: Vec<Complex64> = (-n..=n).map(|p| x0.entry(p)).collect();
            let mut acc = Complex64::new(0.0, 0.0);
            let mid = n as usize;
            for j in 1..=n as usize {
                let mut next = u.clone();
                for i in j..u.len() - j {
                    next[i] = 0.5 * (u[i - 1] + u[i + 1]);
                }
                u = next;
                acc += u[mid];
            }
            acc / n as f64
        }
    };
    LimitEstimate { c, estimated: true }
}

/// Goodness verdict from sup deviations along `ns` (strictly increasing, at least 2 values).
pub fn classify(x0: &Constellation, kind: DynamicsKind, ns: &[u64]) -> Result<CesaroReport> {
    if ns.len() < 2 {
        return Err(Error::invalid(
            "ns",
            "at least two window lengths are required",
        ));
    }
    let limit = extract_limit(x0, kind);
    let (sup_dev, window_only) = deviation_curve(x0, kind, ns, limit.c)?;

    let tail = &sup_dev[sup_dev.len() / 2..];
    let settled = tail
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + TAIL_WOBBLE) + f64::EPSILON);
    let last = *sup_dev.last().unwrap();
    let verdict = if !window_only && last < THETA_GOOD && settled {
        Verdict::Good
    } else if tail.iter().all(|d| *d >= THETA_BAD) {
        Verdict::NotGood
    } else {
        Verdict::Inconclusive
    };
    let rate_fit = match verdict {
        Verdict::Good => {
            let ts: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
            let ys: Vec<f64> = sup_dev
                .iter()
                .map(|&d| if d > 1e-14 { d } else { 0.0 })
                .collect();
            fit_loglog(&ts, &ys).ok()
        }
        _ => None,
    };
    Ok(CesaroReport {
        label: x0.label().to_string(),
        kind,
        ns: ns.to_vec(),
        sup_dev,
        limit_c: limit.c,
        limit_estimated: limit.estimated,
        window_only,
        verdict,
        rate_fit,
    })
}

/// `2^lo, 2^{lo+1}, ..., 2^hi`.
pub fn dyadic(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|m| 1u64 << m).collect()
}
