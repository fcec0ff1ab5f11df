//! Reduction of a sup over all of ℤ to a finite region plus an analytic bound.
//!
//! Every operator in this crate has the form `v_k = Σ_d w_d x_{k-d}` with
//! nonnegative weights of unit total mass supported on `d ∈ [d_lo, d_hi]`.
//! The tail metadata of `x` then pins down `v_k` outside a finite region.

use num_complex::Complex64;

use crate::constellations::{Constellation, IndexWindow, TailClass};
use crate::error::{Error, Result};

pub(crate) struct Footprint<'a> {
    pub d_lo: i64,
    pub d_hi: i64,
    /// `θ -> Σ_d w_d e^{-iθd}`.
    pub symbol: &'a (dyn Fn(f64) -> Complex64 + Sync),
}

/// `sup_k |v_k - c| = max(max over region, outside)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SupPlan {
    pub region: IndexWindow,
    pub outside: f64,
}

pub(crate) fn plan(x0: &Constellation, fp: &Footprint<'_>, c: Complex64) -> Result<SupPlan> {
    debug_assert!(fp.d_lo <= fp.d_hi);
    if let Some((c_minus, c_plus, r)) = x0.tail().finite_support() {
        let r = r as i64;
        return Ok(SupPlan {
            region: IndexWindow {
                lo: -r + fp.d_lo,
                hi: r + fp.d_hi,
            },
            outside: (c_minus - c).norm().max((c_plus - c).norm()),
        });
    }
    match x0.tail() {
        TailClass::FourierMode { theta } => {
            let lambda = (fp.symbol)(*theta);
            let outside = if *theta == 0.0 {
                (lambda - c).norm()
            } else if c == Complex64::new(0.0, 0.0) {
                lambda.norm()
            } else {
                lambda.norm() + c.norm()
            };
            Ok(SupPlan {
                region: IndexWindow { lo: 0, hi: 0 },
                outside,
            })
        }
        TailClass::BlockSequence(layout) => {
            // The region holds one index whose footprint sits inside a
            // ones-block and one whose footprint sits in the zero half-line;
            // everything else is a convex combination of 0 and 1.
            let width = (fp.d_hi - fp.d_lo + 1) as u64;
            let (a, b) = layout.ones_block_with_len(width);
            Ok(SupPlan {
                region: IndexWindow {
                    lo: a + fp.d_hi,
                    hi: fp.d_hi.max(b + fp.d_lo),
                },
                outside: c.norm().max((Complex64::new(1.0, 0.0) - c).norm()),
            })
        }
        _ => Err(Error::UncertifiableTail {
            label: x0.label().to_string(),
        }),
    }
}
