//! Vehicle platoon with acceleration feedback: per-mode spectra and simulation.
//!
//! State per vehicle is `(y_k, v_k, a_k)` with `y_k = x_k - x_{k-1}` measured
//! as a deviation from the target separation, so the rest state is zero.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellations::IndexWindow;
use crate::error::{Error, Result};
use crate::integrator::{Boundary, Tolerances, TruncatedSystem};
use crate::kernels::{DynamicsKind, TrajectorySample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatoonParams {
    pub c1: Complex64,
    pub c2: Complex64,
    pub c3: Complex64,
}

impl PlatoonParams {
    pub fn new(c1: Complex64, c2: Complex64, c3: Complex64) -> Result<Self> {
        let p = PlatoonParams { c1, c2, c3 };
        if [c1, c2, c3].iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("params", "gains must be finite"));
        }
        Ok(p)
    }

    /// Real gains; panics on non-finite input.
    pub fn real(c1: f64, c2: f64, c3: f64) -> Self {
        Self::new(c1.into(), c2.into(), c3.into()).expect("finite gains")
    }

    /// Coefficients `(p2, p1, p0)` of the monic characteristic polynomial
    /// `λ³ + p2 λ² + p1 λ + p0` of the mode matrix at `theta`.
    fn char_poly(&self, theta: f64) -> [Complex64; 3] {
        [-self.c3, -self.c2, -self.c1 * coupling(theta)]
    }
}

/// `1 - e^{-iθ}`.
fn coupling(theta: f64) -> Complex64 {
    if theta == 0.0 {
        return Complex64::default();
    }
    if theta == PI {
        return Complex64::new(2.0, 0.0);
    }
    Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -theta)
}

pub fn mode_matrix(theta: f64, params: &PlatoonParams) -> [[Complex64; 3]; 3] {
    let z = Complex64::default();
    let one = Complex64::new(1.0, 0.0);
    [
        [z, coupling(theta), z],
        [z, z, one],
        [params.c1, params.c2, params.c3],
    ]
}

fn eval_cubic(p: &[Complex64; 3], x: Complex64) -> Complex64 {
    ((x + p[0]) * x + p[1]) * x + p[2]
}

fn eval_cubic_deriv(p: &[Complex64; 3], x: Complex64) -> Complex64 {
    (3.0 * x + 2.0 * p[0]) * x + p[1]
}

/// Roots of `λ³ + p2 λ² + p1 λ + p0` by Cardano, each polished with
/// Newton steps that are kept only while the residual shrinks.
pub fn cubic_roots(p: [Complex64; 3]) -> [Complex64; 3] {
    let [a, b, c] = p;
    let shift = a / 3.0;
    let pp = b - a * a / 3.0;
    let qq = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (qq * qq / 4.0 + pp * pp * pp / 27.0).sqrt();
    let u3 = {
        let plus = -qq / 2.0 + disc;
        let minus = -qq / 2.0 - disc;
        if plus.norm() >= minus.norm() {
            plus
        } else {
            minus
        }
    };
    let mut roots = [Complex64::default(); 3];
    if u3.norm() == 0.0 {
        roots = [-shift; 3];
    } else {
        let u = u3.powf(1.0 / 3.0);
        let omega = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
        let mut w = Complex64::new(1.0, 0.0);
        for r in roots.iter_mut() {
            let uk = u * w;
            *r = uk - pp / (3.0 * uk) - shift;
            w *= omega;
        }
    }
    for r in roots.iter_mut() {
        let mut res = eval_cubic(&p, *r).norm();
        for _ in 0..8 {
            let d = eval_cubic_deriv(&p, *r);
            if d.norm() == 0.0 || res == 0.0 {
                break;
            }
            let cand = *r - eval_cubic(&p, *r) / d;
            let cres = eval_cubic(&p, cand).norm();
            if cres < res {
                *r = cand;
                res = cres;
            } else {
                break;
            }
        }
    }
    roots
}

/// Per-θ eigenvalues of the mode matrix on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    pub thetas: Vec<f64>,
    pub eigenvalues: Vec<[Complex64; 3]>,
    /// Max real part over grid points with θ ≠ 0.
    pub abscissa: f64,
    /// Limit of the max real part as θ → 0: `max(0, Re roots of λ² − c3λ − c2)`.
    pub limit_abscissa: f64,
    /// Largest `|det(λI − A(θ))|` over all returned eigenvalues.
    pub max_residual: f64,
}

impl ModeSpectrum {
    /// Supremum of the max real part over all θ ≠ 0, including the θ → 0 limit.
    pub fn sup_abscissa(&self) -> f64 {
        self.abscissa.max(self.limit_abscissa)
    }

    /// Columns `theta, re_l1, re_l2, re_l3, im_l1, im_l2, im_l3`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "theta,re_l1,re_l2,re_l3,im_l1,im_l2,im_l3")?;
        for (th, ev) in self.thetas.iter().zip(&self.eigenvalues) {
            writeln!(
                out,
                "{th:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                ev[0].re, ev[1].re, ev[2].re, ev[0].im, ev[1].im, ev[2].im
            )?;
        }
        Ok(())
    }
}

/// Reorders `next` to minimize the max distance to `prev`.
fn match_branches(prev: &[Complex64; 3], next: [Complex64; 3]) -> [Complex64; 3] {
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let cost = |p: &[usize; 3]| {
        (0..3)
            .map(|i| (prev[i] - next[p[i]]).norm())
            .fold(0.0, f64::max)
    };
    let best = PERMS
        .iter()
        .min_by(|a, b| cost(a).total_cmp(&cost(b)))
        .expect("nonempty");
    [next[best[0]], next[best[1]], next[best[2]]]
}

/// Largest matched displacement between eigenvalue sets at adjacent grid points.
pub fn max_branch_jump(spec: &ModeSpectrum) -> f64 {
    spec.eigenvalues
        .windows(2)
        .map(|w| {
            let m = match_branches(&w[0], w[1]);
            (0..3).map(|i| (w[0][i] - m[i]).norm()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Eigenvalues on `θ_i = −π + 2π(i+1)/N`, `i = 0..N`, so the grid ends at π.
pub fn spectral_abscissa(params: &PlatoonParams, grid_size: usize) -> Result<ModeSpectrum> {
    if grid_size < 64 {
        return Err(Error::invalid("grid_size", "must be at least 64"));
    }
    let thetas: Vec<f64> = (0..grid_size)
        .map(|i| {
            if 2 * (i + 1) == grid_size {
                0.0
            } else if i + 1 == grid_size {
                PI
            } else {
                -PI + 2.0 * PI * (i + 1) as f64 / grid_size as f64
            }
        })
        .collect();
    let raw: Vec<([Complex64; 3], f64)> = thetas
        .par_iter()
        .map(|&th| {
            let poly = params.char_poly(th);
            let roots = cubic_roots(poly);
            let res = roots
                .iter()
                .map(|r| eval_cubic(&poly, *r).norm())
                .fold(0.0, f64::max);
            (roots, res)
        })
        .collect();
    let mut eigenvalues = Vec::with_capacity(grid_size);
    for (roots, _) in &raw {
        let r = match eigenvalues.last() {
            Some(prev) => match_branches(prev, *roots),
            None => *roots,
        };
        eigenvalues.push(r);
    }
    let abscissa = thetas
        .iter()
        .zip(&eigenvalues)
        .filter(|(th, _)| **th != 0.0)
        .flat_map(|(_, ev)| ev.iter().map(|l| l.re))
        .fold(f64::NEG_INFINITY, f64::max);
    let disc = (params.c3 * params.c3 + 4.0 * params.c2).sqrt();
    let q1 = (params.c3 + disc) / 2.0;
    let q2 = (params.c3 - disc) / 2.0;
    let limit_abscissa = q1.re.max(q2.re).max(0.0);
    Ok(ModeSpectrum {
        thetas,
        eigenvalues,
        abscissa,
        limit_abscissa,
        max_residual: raw.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}

/// Solution of the truncated platoon sampled on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatoonTrajectory {
    pub params: PlatoonParams,
    pub window: IndexWindow,
    pub times: Vec<f64>,
    /// Interleaved `(y, v, a)` per vehicle at each time.
    pub states: Vec<Vec<Complex64>>,
    pub sup_y: Vec<f64>,
    pub sup_v: Vec<f64>,
    pub sup_a: Vec<f64>,
    /// Absolute deviations `x_k` from the target formation, reconstructed
    /// from the anchor vehicle `window.lo - 1`.
    pub positions: Vec<Vec<Complex64>>,
}

impl PlatoonTrajectory {
    /// Columns `t, k, y_re, y_im, v_re, v_im, a_re, a_im, x_re, x_im`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,k,y_re,y_im,v_re,v_im,a_re,a_im,x_re,x_im")?;
        for ((t, st), xs) in self.times.iter().zip(&self.states).zip(&self.positions) {
            for (i, k) in self.window.indices().enumerate() {
                let (y, v, a) = (st[3 * i], st[3 * i + 1], st[3 * i + 2]);
                let x = xs[i];
                writeln!(
                    out,
                    "{t:e},{k},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                    y.re, y.im, v.re, v.im, a.re, a.im, x.re, x.im
                )?;
            }
        }
        Ok(())
    }

    /// Columns `t, sup_y, sup_v, sup_a`.
    pub fn write_sup_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,sup_y,sup_v,sup_a")?;
        for i in 0..self.times.len() {
            writeln!(
                out,
                "{:e},{:e},{:e},{:e}",
                self.times[i], self.sup_y[i], self.sup_v[i], self.sup_a[i]
            )?;
        }
        Ok(())
    }

    /// The separations `y_k` on the shared trajectory schema. Information
    /// travels from each vehicle to the one behind it, hence `OneSided`.
    pub fn to_sample(&self) -> TrajectorySample {
        let n = self.window.len();
        TrajectorySample {
            label: format!(
                "platoon y ({}, {}, {})",
                self.params.c1, self.params.c2, self.params.c3
            ),
            kind: DynamicsKind::OneSided,
            eps_tail: 0.0,
            times: self.times.clone(),
            window: Some(self.window),
            values: self
                .states
                .iter()
                .map(|st| (0..n).map(|i| st[3 * i]).collect())
                .collect(),
            sup_dev: self.sup_y.clone(),
            error_bound: vec![0.0; self.times.len()],
            certified: false,
            limit_c: Complex64::default(),
            kernels: Vec::new(),
        }
    }

    /// Time of the largest `sup_y` and its value.
    pub fn peak_y(&self) -> (f64, f64) {
        self.times
            .iter()
            .zip(&self.sup_y)
            .fold((0.0, f64::NEG_INFINITY), |acc, (t, s)| {
                if *s > acc.1 {
                    (*t, *s)
                } else {
                    acc
                }
            })
    }
}

/// Initial data and integration settings for [`simulate_platoon`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonSetup {
    pub window: IndexWindow,
    pub y0: Vec<Complex64>,
    pub v0: Vec<Complex64>,
    pub a0: Vec<Complex64>,
    pub boundary: Boundary,
    /// Position of the anchor vehicle `window.lo - 1` at t = 0.
    pub anchor: Complex64,
    pub tol: Tolerances,
    /// Divergence is reported once the state norm exceeds this multiple of
    /// its initial value.
    pub divergence_factor: f64,
}

impl PlatoonSetup {
    /// Zero-padded initial data: `y`, `v`, `a` list `(k, value)` entries inside
    /// `window`; the leader ahead of the window is at rest at the origin.
    pub fn sparse(
        window: IndexWindow,
        y: &[(i64, Complex64)],
        v: &[(i64, Complex64)],
        a: &[(i64, Complex64)],
    ) -> Result<Self> {
        let fill = |entries: &[(i64, Complex64)]| -> Result<Vec<Complex64>> {
            let mut out = vec![Complex64::default(); window.len()];
            for &(k, val) in entries {
                if !window.contains(k) {
                    return Err(Error::invalid(
                        "initial_data",
                        format!("index {k} outside window [{}, {}]", window.lo, window.hi),
                    ));
                }
                out[(k - window.lo) as usize] = val;
            }
            Ok(out)
        };
        Ok(PlatoonSetup {
            window,
            y0: fill(y)?,
            v0: fill(v)?,
            a0: fill(a)?,
            boundary: Boundary::Frozen {
                c_minus: Complex64::default(),
                c_plus: Complex64::default(),
            },
            anchor: Complex64::default(),
            tol: Tolerances::default(),
            divergence_factor: 1e6,
        })
    }
}

pub fn simulate_platoon(
    params: &PlatoonParams,
    setup: &PlatoonSetup,
    times: &[f64],
) -> Result<PlatoonTrajectory> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| t.is_nan() || *t < 0.0) {
        return Err(Error::invalid(
            "t_grid",
            "times must be nonnegative and nondecreasing",
        ));
    }
    let mut sys = TruncatedSystem::platoon(
        *params,
        &setup.y0,
        &setup.v0,
        &setup.a0,
        setup.window,
        setup.boundary,
    )?;
    if setup
        .y0
        .iter()
        .chain(&setup.v0)
        .chain(&setup.a0)
        .any(|z| z.norm() > 0.0)
    {
        sys = sys.with_divergence_limit(setup.divergence_factor);
    }
    let ghost_v = match setup.boundary {
        Boundary::ClampedToInitial => setup.v0[0],
        Boundary::Frozen { c_minus, .. } => c_minus,
        Boundary::Periodic => Complex64::default(),
    };
    let n = setup.window.len();
    let mut out = PlatoonTrajectory {
        params: *params,
        window: setup.window,
        times: times.to_vec(),
        states: Vec::with_capacity(times.len()),
        sup_y: Vec::with_capacity(times.len()),
        sup_v: Vec::with_capacity(times.len()),
        sup_a: Vec::with_capacity(times.len()),
        positions: Vec::with_capacity(times.len()),
    };
    for &t in times {
        sys.step_to(t, setup.tol)?;
        let st = sys.state().to_vec();
        let sup = |c: usize| (0..n).map(|i| st[3 * i + c].norm()).fold(0.0, f64::max);
        out.sup_y.push(sup(0));
        out.sup_v.push(sup(1));
        out.sup_a.push(sup(2));
        let mut x = setup.anchor + ghost_v * t;
        let xs: Vec<Complex64> = (0..n)
            .map(|i| {
                x += st[3 * i];
                x
            })
            .collect();
        out.positions.push(xs);
        out.states.push(st);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det3(m: &[[Complex64; 3]; 3]) -> Complex64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    fn shifted(m: &[[Complex64; 3]; 3], l: Complex64) -> [[Complex64; 3]; 3] {
        let mut s = *m;
        for (i, row) in s.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = if i == j { l - *e } else { -*e };
            }
        }
        s
    }

    #[test]
    fn mode_matrix_examples() {
        let p = PlatoonParams::real(-1.0, -2.0, -3.0);
        let m0 = mode_matrix(0.0, &p);
        assert!(m0[0].iter().all(|z| z.norm() == 0.0));
        let mpi = mode_matrix(PI, &p);
        assert_eq!(mpi[0][1], Complex64::new(2.0, 0.0));
        assert_eq!(mpi[2], [p.c1, p.c2, p.c3]);
    }

    #[test]
    fn cubic_roots_oracle() {
        // (λ-1)(λ+2)(λ-i) expanded.
        let r = [
            Complex64::new(1.0, 0.0),
            Complex64::new(-2.0, 0.0),
            Complex64::new(0.0, 1.0),
        ];
        let p2 = -(r[0] + r[1] + r[2]);
        let p1 = r[0] * r[1] + r[0] * r[2] + r[1] * r[2];
        let p0 = -(r[0] * r[1] * r[2]);
        let got = cubic_roots([p2, p1, p0]);
        for want in r {
            assert!(got.iter().any(|g| (g - want).norm() < 1e-12), "{got:?}");
        }
        assert_eq!(
            cubic_roots([Complex64::default(); 3]),
            [Complex64::default(); 3]
        );
    }

    #[test]
    fn eigenvalues_satisfy_determinant() {
        let p = PlatoonParams::real(-0.5, -2.0, -1.5);
        let spec = spectral_abscissa(&p, 256).unwrap();
        assert!(spec.max_residual <= 1e-9);
        for (th, ev) in spec.thetas.iter().zip(&spec.eigenvalues) {
            let m = mode_matrix(*th, &p);
            for l in ev {
                assert!(det3(&shifted(&m, *l)).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn theta_zero_block_structure() {
        let p = PlatoonParams::real(-1.0, -2.0, -3.0);
        let spec = spectral_abscissa(&p, 64).unwrap();
        let i0 = spec.thetas.iter().position(|t| *t == 0.0).unwrap();
        let ev = spec.eigenvalues[i0];
        assert!(ev.iter().any(|l| l.norm() < 1e-14));
        let quad = |l: Complex64| l * l - p.c3 * l - p.c2;
        let nonzero: Vec<_> = ev.iter().filter(|l| l.norm() >= 1e-14).collect();
        assert_eq!(nonzero.len(), 2);
        for l in nonzero {
            assert!(quad(*l).norm() < 1e-12);
        }
        assert_eq!(*spec.thetas.last().unwrap(), PI);
    }

    #[test]
    fn zero_gains_nilpotent() {
        let spec = spectral_abscissa(&PlatoonParams::real(0.0, 0.0, 0.0), 64).unwrap();
        assert_eq!(spec.abscissa, 0.0);
        assert!(spec.eigenvalues.iter().flatten().all(|l| l.norm() == 0.0));
    }

    #[test]
    fn positive_c2_unstable() {
        let spec = spectral_abscissa(&PlatoonParams::real(0.0, 1.0, 0.0), 128).unwrap();
        assert!(spec.abscissa > 0.5);
        assert!((spec.limit_abscissa - 1.0).abs() < 1e-14);
    }

    #[test]
    fn branches_are_continuous() {
        for p in [
            PlatoonParams::real(-0.25, -2.0, -2.0),
            PlatoonParams::real(-1.0, -1.0, -4.0),
        ] {
            let n = 1024;
            let spec = spectral_abscissa(&p, n).unwrap();
            let dtheta = 2.0 * PI / n as f64;
            // Derivative of a simple root is bounded by |c1 b'| / |p'(λ)|; a loose constant suffices here.
            assert!(
                max_branch_jump(&spec) <= 20.0 * dtheta,
                "{}",
                max_branch_jump(&spec)
            );
        }
    }

    #[test]
    fn zero_initial_data_stays_zero() {
        let w = IndexWindow::new(0, 20).unwrap();
        let setup = PlatoonSetup::sparse(w, &[], &[], &[]).unwrap();
        let tr =
            simulate_platoon(&PlatoonParams::real(-1.0, -2.0, -2.0), &setup, &[0.0, 5.0]).unwrap();
        assert!(tr.sup_y.iter().chain(&tr.sup_v).all(|s| *s == 0.0));
    }

    #[test]
    fn unstable_gains_report_divergence() {
        let w = IndexWindow::new(0, 40).unwrap();
        let one = Complex64::new(1.0, 0.0);
        let setup = PlatoonSetup::sparse(w, &[(20, one)], &[(20, one)], &[]).unwrap();
        let times: Vec<f64> = (0..=50).map(|i| i as f64).collect();
        let err =
            simulate_platoon(&PlatoonParams::real(0.0, 1.0, 0.0), &setup, &times).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
        assert!(err.is_numerical());
    }

    #[test]
    fn positions_prefix_sum() {
        let w = IndexWindow::new(0, 9).unwrap();
        let one = Complex64::new(1.0, 0.0);
        let setup = PlatoonSetup::sparse(w, &[(3, one), (5, -one)], &[], &[]).unwrap();
        let tr = simulate_platoon(&PlatoonParams::real(0.0, 0.0, 0.0), &setup, &[0.0]).unwrap();
        let xs: Vec<f64> = tr.positions[0].iter().map(|z| z.re).collect();
        assert_eq!(xs, vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let sample = tr.to_sample();
        assert_eq!(sample.values[0][3], one);
        assert_eq!(sample.sup_dev, vec![1.0]);
    }

    #[test]
    fn periodic_mode_rate_matches_spectrum() {
        let p = PlatoonParams::real(-0.5, -2.0, -2.0);
        let n = 32usize;
        let m = 4usize;
        let theta = 2.0 * PI * m as f64 / n as f64;
        let ev = cubic_roots(p.char_poly(theta));
        let dom = ev
            .iter()
            .copied()
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .unwrap();
        // Eigenvector (y, v, a) = (b/λ, 1, λ).
        let b = coupling(theta);
        let mut setup =
            PlatoonSetup::sparse(IndexWindow::new(0, n as i64 - 1).unwrap(), &[], &[], &[])
                .unwrap();
        setup.boundary = Boundary::Periodic;
        for k in 0..n {
            let ph = Complex64::from_polar(1.0, theta * k as f64);
            setup.y0[k] = b / dom * ph;
            setup.v0[k] = ph;
            setup.a0[k] = dom * ph;
        }
        let t = 20.0;
        let tr = simulate_platoon(&p, &setup, &[t / 2.0, t]).unwrap();
        let rate = (tr.sup_v[1] / tr.sup_v[0]).ln() / (t / 2.0);
        assert!(
            (rate - dom.re).abs() <= 0.1 * dom.re.abs(),
            "rate {rate} vs {}",
            dom.re
        );
    }
}
