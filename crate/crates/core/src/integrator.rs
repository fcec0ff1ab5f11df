//! Adaptive Dormand-Prince 5(4) integration of truncated lattice systems.
//!
//! This is the independent oracle for the kernel evaluation: it never
//! touches Poisson or Bessel weights, only the right-hand sides of the
//! lattice equations on a finite window with explicit boundary ghosts.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constellations::{Constellation, IndexWindow};
use crate::error::{Error, Result};
use crate::kernels::{DynamicsKind, KernelWeights, TrajectorySample};
use crate::platoon::PlatoonParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    OneSided,
    Symmetric,
    Platoon(PlatoonParams),
}

impl From<DynamicsKind> for SystemKind {
    fn from(k: DynamicsKind) -> Self {
        match k {
            DynamicsKind::OneSided => SystemKind::OneSided,
            DynamicsKind::Symmetric => SystemKind::Symmetric,
        }
    }
}

/// Values seen by the window edges.
///
/// For position systems the ghosts are `x_{lo-1}` and `x_{hi+1}`; for the
/// platoon the only ghost is the velocity `v_{lo-1}` of the vehicle ahead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Ghosts keep their initial values.
    ClampedToInitial,
    /// Ghosts held at fixed values.
    Frozen {
        c_minus: Complex64,
        c_plus: Complex64,
    },
    /// The window closes into a ring.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
        }
    }
}

impl Tolerances {
    fn check(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::invalid(
                "tolerances",
                "rel_tol and abs_tol must be > 0",
            ));
        }
        Ok(())
    }
}

/// Statistics of one `step_to` call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub accepted: usize,
    pub rejected: usize,
    /// Sum of the embedded local error estimates (max norm) over accepted steps.
    pub error_estimate: f64,
}

const MAX_STEPS: usize = 10_000_000;

/// Finite window of the infinite lattice, advanced in time.
#[derive(Debug, Clone)]
pub struct TruncatedSystem {
    kind: SystemKind,
    window: IndexWindow,
    boundary: Boundary,
    t: f64,
    state: Vec<Complex64>,
    ghosts: (Complex64, Complex64),
    divergence_limit: Option<f64>,
    error_estimate: f64,
}

impl TruncatedSystem {
    /// Position system for `kind`, initialized from `x0` on `window`.
    pub fn positions(
        x0: &Constellation,
        kind: DynamicsKind,
        window: IndexWindow,
        boundary: Boundary,
    ) -> Result<Self> {
        if window.len() < 3 {
            return Err(Error::invalid("window", "need at least 3 sites"));
        }
        let ghosts = match boundary {
            Boundary::ClampedToInitial => (x0.entry(window.lo - 1), x0.entry(window.hi + 1)),
            Boundary::Frozen { c_minus, c_plus } => (c_minus, c_plus),
            Boundary::Periodic => Default::default(),
        };
        Ok(TruncatedSystem {
            kind: kind.into(),
            window,
            boundary,
            t: 0.0,
            state: x0.materialize(window),
            ghosts,
            divergence_limit: None,
            error_estimate: 0.0,
        })
    }

    /// Position system with `Frozen` ghosts at the constellation's tail limits
    /// (or its boundary entries when no limits are known).
    pub fn positions_frozen_at_tails(
        x0: &Constellation,
        kind: DynamicsKind,
        window: IndexWindow,
    ) -> Result<Self> {
        let boundary = match x0.tail().finite_support() {
            Some((c_minus, c_plus, _)) => Boundary::Frozen { c_minus, c_plus },
            None => Boundary::ClampedToInitial,
        };
        Self::positions(x0, kind, window, boundary)
    }

    /// Platoon in separation/velocity/acceleration variables. `y0`, `v0`, `a0`
    /// give the vehicles of `window` in order.
    pub fn platoon(
        params: PlatoonParams,
        y0: &[Complex64],
        v0: &[Complex64],
        a0: &[Complex64],
        window: IndexWindow,
        boundary: Boundary,
    ) -> Result<Self> {
        let n = window.len();
        if n < 3 {
            return Err(Error::invalid("window", "need at least 3 vehicles"));
        }
        if y0.len() != n || v0.len() != n || a0.len() != n {
            return Err(Error::invalid(
                "initial_data",
                format!("y0, v0, a0 must each have {n} entries (the window length)"),
            ));
        }
        let ghost_v = match boundary {
            Boundary::ClampedToInitial => v0[0],
            Boundary::Frozen { c_minus, .. } => c_minus,
            Boundary::Periodic => Complex64::default(),
        };
        let mut state = Vec::with_capacity(3 * n);
        for i in 0..n {
            state.extend_from_slice(&[y0[i], v0[i], a0[i]]);
        }
        Ok(TruncatedSystem {
            kind: SystemKind::Platoon(params),
            window,
            boundary,
            t: 0.0,
            state,
            ghosts: (ghost_v, Complex64::default()),
            divergence_limit: None,
            error_estimate: 0.0,
        })
    }

    /// Abort with [`Error::Diverged`] once the max-norm of the state exceeds
    /// `factor` times its initial value.
    pub fn with_divergence_limit(mut self, factor: f64) -> Self {
        let init = max_norm(&self.state).max(f64::MIN_POSITIVE);
        self.divergence_limit = Some(factor * init);
        self
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn window(&self) -> IndexWindow {
        self.window
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn state(&self) -> &[Complex64] {
        &self.state
    }

    /// Accumulated local error estimate since construction.
    pub fn error_estimate(&self) -> f64 {
        self.error_estimate
    }

    /// Value at lattice index `k` (positions) or the `(y, v, a)` triple's
    /// component `comp` for the platoon.
    pub fn component(&self, k: i64, comp: usize) -> Complex64 {
        let i = (k - self.window.lo) as usize;
        match self.kind {
            SystemKind::Platoon(_) => self.state[3 * i + comp],
            _ => self.state[i],
        }
    }

    fn rhs(&self, y: &[Complex64], dy: &mut [Complex64]) {
        let n = self.window.len();
        let periodic = self.boundary == Boundary::Periodic;
        match self.kind {
            SystemKind::OneSided => {
                for i in 0..n {
                    let left = if i > 0 {
                        y[i - 1]
                    } else if periodic {
                        y[n - 1]
                    } else {
                        self.ghosts.0
                    };
                    dy[i] = left - y[i];
                }
            }
            SystemKind::Symmetric => {
                for i in 0..n {
                    let left = if i > 0 {
                        y[i - 1]
                    } else if periodic {
                        y[n - 1]
                    } else {
                        self.ghosts.0
                    };
                    let right = if i + 1 < n {
                        y[i + 1]
                    } else if periodic {
                        y[0]
                    } else {
                        self.ghosts.1
                    };
                    dy[i] = 0.5 * (left + right) - y[i];
                }
            }
            SystemKind::Platoon(p) => {
                for i in 0..n {
                    let (sep, v, a) = (y[3 * i], y[3 * i + 1], y[3 * i + 2]);
                    let v_ahead = if i > 0 {
                        y[3 * (i - 1) + 1]
                    } else if periodic {
                        y[3 * (n - 1) + 1]
                    } else {
                        self.ghosts.0
                    };
                    dy[3 * i] = v - v_ahead;
                    dy[3 * i + 1] = a;
                    dy[3 * i + 2] = p.c1 * sep + p.c2 * v + p.c3 * a;
                }
            }
        }
    }

    /// Advance to `t_end` with Dormand-Prince 5(4) and PI step-size control.
    pub fn step_to(&mut self, t_end: f64, tol: Tolerances) -> Result<StepReport> {
        tol.check()?;
        if t_end.is_nan() || t_end < self.t {
            return Err(Error::invalid(
                "t_end",
                format!("{t_end} is before the current time {}", self.t),
            ));
        }
        let dim = self.state.len();
        let mut report = StepReport::default();
        if t_end == self.t {
            return Ok(report);
        }
        let mut k: [Vec<Complex64>; 7] = std::array::from_fn(|_| vec![Complex64::default(); dim]);
        let mut tmp = vec![Complex64::default(); dim];
        let mut y_new = vec![Complex64::default(); dim];
        let mut err = vec![Complex64::default(); dim];

        let state = std::mem::take(&mut self.state);
        let mut y = state;
        self.rhs(&y, &mut k[0]);
        let mut h = initial_step(&y, &k[0], t_end - self.t, tol);
        let mut err_prev = 1e-4f64;
        let mut steps = 0usize;

        while self.t < t_end {
            if steps >= MAX_STEPS {
                self.state = y;
                return Err(Error::TooManySteps {
                    t: self.t,
                    max_steps: MAX_STEPS,
                });
            }
            steps += 1;
            let last = self.t + h >= t_end;
            if last {
                h = t_end - self.t;
            }
            if h < 1e-14 * self.t.abs().max(1.0) {
                self.state = y;
                return Err(Error::StepSizeUnderflow { t: self.t, h });
            }

            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = y[i];
                    for (r, a) in A[s - 1].iter().enumerate().take(s) {
                        if *a != 0.0 {
                            acc += h * a * k[r][i];
                        }
                    }
                    tmp[i] = acc;
                }
                self.rhs(&tmp, &mut k[s]);
            }
            // Stage 7 is evaluated at the 5th-order solution (FSAL).
            y_new.copy_from_slice(&tmp);
            for i in 0..dim {
                let mut e = Complex64::default();
                for (r, ek) in E.iter().enumerate() {
                    if *ek != 0.0 {
                        e += ek * k[r][i];
                    }
                }
                err[i] = h * e;
            }
            let mut err_norm = 0.0f64;
            let mut err_abs = 0.0f64;
            for i in 0..dim {
                let scale = tol.abs_tol + tol.rel_tol * y[i].norm().max(y_new[i].norm());
                let e = err[i].norm();
                err_abs = err_abs.max(e);
                err_norm = err_norm.max(e / scale);
            }

            if err_norm <= 1.0 {
                self.t = if last { t_end } else { self.t + h };
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                report.accepted += 1;
                report.error_estimate += err_abs;
                if let Some(limit) = self.divergence_limit {
                    let norm = max_norm(&y);
                    if norm.is_nan() || norm > limit {
                        self.state = y;
                        return Err(Error::Diverged {
                            t: self.t,
                            norm,
                            limit,
                        });
                    }
                }
                let fac =
                    (0.9 * err_norm.max(1e-10).powf(-0.17) * err_prev.powf(0.04)).clamp(0.2, 10.0);
                err_prev = err_norm.max(1e-4);
                h *= fac;
            } else {
                report.rejected += 1;
                let fac = (0.9 * err_norm.powf(-0.2)).clamp(0.2, 1.0);
                h *= fac;
            }
        }
        self.state = y;
        self.error_estimate += report.error_estimate;
        Ok(report)
    }

    /// Integrates through `times` and records position snapshots on the
    /// kernel trajectory schema (window-only sup deviations from `limit_c`).
    pub fn trajectory(
        &mut self,
        times: &[f64],
        tol: Tolerances,
        limit_c: Complex64,
    ) -> Result<TrajectorySample> {
        let kind = match self.kind {
            SystemKind::OneSided => DynamicsKind::OneSided,
            SystemKind::Symmetric => DynamicsKind::Symmetric,
            SystemKind::Platoon(_) => {
                return Err(Error::invalid(
                    "kind",
                    "platoon trajectories are produced by the platoon module",
                ))
            }
        };
        let mut values = Vec::with_capacity(times.len());
        let mut sup_dev = Vec::with_capacity(times.len());
        let mut error_bound = Vec::with_capacity(times.len());
        for &t in times {
            self.step_to(t, tol)?;
            sup_dev.push(
                self.state
                    .iter()
                    .map(|v| (v - limit_c).norm())
                    .fold(0.0, f64::max),
            );
            error_bound.push(self.error_estimate);
            values.push(self.state.clone());
        }
        Ok(TrajectorySample {
            label: format!(
                "truncated {kind:?} on [{}, {}]",
                self.window.lo, self.window.hi
            ),
            kind,
            eps_tail: 0.0,
            times: times.to_vec(),
            window: Some(self.window),
            values,
            sup_dev,
            error_bound,
            certified: false,
            limit_c,
            kernels: Vec::new(),
        })
    }
}

fn max_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn initial_step(y: &[Complex64], f0: &[Complex64], span: f64, tol: Tolerances) -> f64 {
    let scale = |z: &Complex64| tol.abs_tol + tol.rel_tol * z.norm();
    let d0 = y.iter().map(|z| z.norm() / scale(z)).fold(0.0, f64::max);
    let d1 = y
        .iter()
        .zip(f0)
        .map(|(z, f)| f.norm() / scale(z))
        .fold(0.0, f64::max);
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.min(span).min(0.1).max(1e-10_f64.min(span))
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Max interior difference between kernel evaluation and the truncated
/// integrator at time `t`. `x0` must have a finite support radius `R`, and
/// `window` must contain `[-R - W - 10, R + W + 10]` where `W` is the
/// kernel reach at `t`; the interior is `[-R - W, R + W]`.
pub fn compare_with_kernel(
    x0: &Constellation,
    kind: DynamicsKind,
    t: f64,
    window: IndexWindow,
    tol: Tolerances,
    eps_tail: f64,
) -> Result<f64> {
    let (_, _, r) = x0.tail().finite_support().ok_or_else(|| {
        Error::invalid(
            "x0",
            "comparison needs a constellation with finite support radius",
        )
    })?;
    let kw = KernelWeights::new(kind, t, eps_tail)?;
    let (d_lo, d_hi) = kw.shift_range();
    let reach = d_lo.abs().max(d_hi.abs());
    const MARGIN: i64 = 10;
    let r = r as i64;
    let interior = IndexWindow {
        lo: -r - reach,
        hi: r + reach,
    };
    let need = IndexWindow {
        lo: interior.lo - MARGIN,
        hi: interior.hi + MARGIN,
    };
    if !window.covers(&need) {
        return Err(Error::WindowTooSmall {
            lo: window.lo,
            hi: window.hi,
            need_lo: need.lo,
            need_hi: need.hi,
        });
    }
    let mut sys = TruncatedSystem::positions_frozen_at_tails(x0, kind, window)?;
    sys.step_to(t, tol)?;
    Ok(interior
        .indices()
        .map(|k| (kw.apply_at(x0, k) - sys.component(k, 0)).norm())
        .fold(0.0, f64::max))
}
