//! Doubly infinite bounded sequences of initial robot positions.
//!
//! A [`Constellation`] is a lazy entry function `k -> x_k(0)` together with a
//! [`TailClass`] describing the behaviour at `k -> ±∞`. Entries are never
//! stored wholesale; callers materialize the windows they need.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type EntryFn = dyn Fn(i64) -> Complex64 + Send + Sync;

/// Inclusive integer interval `[lo, hi]` of robot indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexWindow {
    pub lo: i64,
    pub hi: i64,
}

impl IndexWindow {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::invalid(
                "window",
                format!("empty window [{lo}, {hi}]"),
            ));
        }
        Ok(IndexWindow { lo, hi })
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn contains(&self, k: i64) -> bool {
        self.lo <= k && k <= self.hi
    }

    pub fn covers(&self, other: &IndexWindow) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn union(&self, other: &IndexWindow) -> IndexWindow {
        IndexWindow {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> + Clone {
        self.lo..=self.hi
    }
}

/// Asymptotic structure of a constellation, used to certify sups over all of ℤ.
#[derive(Clone)]
pub enum TailClass {
    /// `x_k = c_minus` for `k < -support_radius`, `x_k = c_plus` for `k > support_radius`.
    EventuallyConstant {
        c_minus: Complex64,
        c_plus: Complex64,
        support_radius: u64,
    },
    /// `x_k = c + y_k` with `Σ|y_k| <= l1_bound`. When `support_radius` is known,
    /// `y_k = 0` for `|k| > support_radius`.
    SummablePerturbation {
        c: Complex64,
        l1_bound: f64,
        support_radius: Option<u64>,
    },
    /// `x_k = c + y_k` with `|y_k| -> 0`; no rate is known.
    DecayingPerturbation { c: Complex64 },
    /// Zero for `k >= 0`, alternating blocks of ones and zeros for `k < 0`.
    BlockSequence(Arc<BlockLayout>),
    /// `x_k = e^{iθk}` exactly.
    FourierMode { theta: f64 },
    /// Nothing known beyond the sup bound.
    Unstructured { bound: f64 },
}

impl fmt::Debug for TailClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TailClass::EventuallyConstant {
                c_minus,
                c_plus,
                support_radius,
            } => f
                .debug_struct("EventuallyConstant")
                .field("c_minus", c_minus)
                .field("c_plus", c_plus)
                .field("support_radius", support_radius)
                .finish(),
            TailClass::SummablePerturbation {
                c,
                l1_bound,
                support_radius,
            } => f
                .debug_struct("SummablePerturbation")
                .field("c", c)
                .field("l1_bound", l1_bound)
                .field("support_radius", support_radius)
                .finish(),
            TailClass::DecayingPerturbation { c } => f
                .debug_struct("DecayingPerturbation")
                .field("c", c)
                .finish(),
            TailClass::BlockSequence(layout) => f
                .debug_tuple("BlockSequence")
                .field(&layout.rule_name)
                .finish(),
            TailClass::FourierMode { theta } => {
                f.debug_struct("FourierMode").field("theta", theta).finish()
            }
            TailClass::Unstructured { bound } => f
                .debug_struct("Unstructured")
                .field("bound", bound)
                .finish(),
        }
    }
}

impl TailClass {
    /// Short name used in reports.
    pub fn kind_name(&self) -> &'static str {
        match self {
            TailClass::EventuallyConstant { .. } => "eventually_constant",
            TailClass::SummablePerturbation { .. } => "summable_perturbation",
            TailClass::DecayingPerturbation { .. } => "decaying_perturbation",
            TailClass::BlockSequence(_) => "block_sequence",
            TailClass::FourierMode { .. } => "fourier_mode",
            TailClass::Unstructured { .. } => "unstructured",
        }
    }

    /// Limits at `-∞` and `+∞` together with a radius beyond which entries equal them.
    pub fn finite_support(&self) -> Option<(Complex64, Complex64, u64)> {
        match *self {
            TailClass::EventuallyConstant {
                c_minus,
                c_plus,
                support_radius,
            } => Some((c_minus, c_plus, support_radius)),
            TailClass::SummablePerturbation {
                c,
                support_radius: Some(r),
                ..
            } => Some((c, c, r)),
            _ => None,
        }
    }
}

/// Strictly increasing block-length rule `m -> length of block m`.
#[derive(Clone)]
pub struct BlockRule {
    name: String,
    f: Arc<dyn Fn(u32) -> u64 + Send + Sync>,
}

impl BlockRule {
    pub fn custom(name: impl Into<String>, f: impl Fn(u32) -> u64 + Send + Sync + 'static) -> Self {
        BlockRule {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// `m -> 2^m`.
    pub fn doubling() -> Self {
        Self::geometric(2)
    }

    /// `m -> base^m` (saturating).
    pub fn geometric(base: u64) -> Self {
        Self::custom(format!("{base}^m"), move |m| base.saturating_pow(m))
    }

    /// `m -> first + step * m`.
    pub fn linear(first: u64, step: u64) -> Self {
        Self::custom(format!("{first}+{step}m"), move |m| {
            first.saturating_add(step.saturating_mul(m as u64))
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn length(&self, m: u32) -> u64 {
        (self.f)(m)
    }
}

/// Precomputed block boundaries for a [`BlockRule`].
///
/// Block `m` occupies the distances `d = -k-1` in `[starts[m], starts[m+1])`;
/// even blocks hold ones, odd blocks zeros.
pub struct BlockLayout {
    rule_name: String,
    rule: BlockRule,
    starts: Vec<u64>,
}

const PRECOMPUTED_REACH: u64 = 1 << 34;

impl BlockLayout {
    fn new(rule: BlockRule) -> Result<Self> {
        let mut starts = vec![0u64];
        let mut prev = 0u64;
        let mut m = 0u32;
        while *starts.last().unwrap() < PRECOMPUTED_REACH {
            let len = rule.length(m);
            if len <= prev || len == 0 {
                return Err(Error::NonIncreasingRule {
                    block: m,
                    prev,
                    next: len,
                });
            }
            let end = starts.last().unwrap().checked_add(len).ok_or_else(|| {
                Error::invalid(
                    "length_rule",
                    format!("block {m} overflows the index range"),
                )
            })?;
            starts.push(end);
            prev = len;
            m += 1;
        }
        Ok(BlockLayout {
            rule_name: rule.name().to_string(),
            rule,
            starts,
        })
    }

    pub fn rule_name(&self) -> &str {
        &self.rule_name
    }

    /// Distance range `[start, end)` of block `m`.
    pub fn block(&self, m: u32) -> (u64, u64) {
        let m = m as usize;
        if m + 1 < self.starts.len() {
            return (self.starts[m], self.starts[m + 1]);
        }
        let mut start = *self.starts.last().unwrap();
        for j in (self.starts.len() - 1)..m {
            start = start.saturating_add(self.rule.length(j as u32));
        }
        (start, start.saturating_add(self.rule.length(m as u32)))
    }

    fn block_of_distance(&self, d: u64) -> u32 {
        if d < *self.starts.last().unwrap() {
            // partition_point gives the first start > d
            return (self.starts.partition_point(|&s| s <= d) - 1) as u32;
        }
        let mut m = (self.starts.len() - 1) as u32;
        let mut start = *self.starts.last().unwrap();
        loop {
            let end = start.saturating_add(self.rule.length(m));
            if d < end {
                return m;
            }
            start = end;
            m += 1;
        }
    }

    fn value_at_distance(&self, d: u64) -> f64 {
        if self.block_of_distance(d).is_multiple_of(2) {
            1.0
        } else {
            0.0
        }
    }

    /// Index range `[a, b]` (with `a <= b < 0`) of the first ones-block of length `>= min_len`.
    pub fn ones_block_with_len(&self, min_len: u64) -> (i64, i64) {
        let mut m = 0u32;
        loop {
            let (start, end) = self.block(m);
            if end - start >= min_len {
                return (-(end as i64), -(start as i64) - 1);
            }
            m += 2;
        }
    }
}

/// Bounded doubly infinite complex sequence `k -> x_k(0)`.
#[derive(Clone)]
pub struct Constellation {
    entry: Arc<EntryFn>,
    tail: TailClass,
    label: String,
    bound: f64,
}

impl fmt::Debug for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Constellation")
            .field("label", &self.label)
            .field("tail", &self.tail)
            .field("bound", &self.bound)
            .finish()
    }
}

impl Constellation {
    /// Arbitrary entry function with only a sup bound known.
    pub fn from_fn(
        label: impl Into<String>,
        bound: f64,
        f: impl Fn(i64) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Constellation {
            entry: Arc::new(f),
            tail: TailClass::Unstructured { bound },
            label: label.into(),
            bound,
        }
    }

    /// `c + y_k` where `y_k -> 0` at an unknown rate; `bound` must dominate `|c + y_k|`.
    pub fn decaying_perturbation(
        label: impl Into<String>,
        c: impl Into<Complex64>,
        bound: f64,
        y: impl Fn(i64) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        let c = c.into();
        Constellation {
            entry: Arc::new(move |k| c + y(k)),
            tail: TailClass::DecayingPerturbation { c },
            label: label.into(),
            bound,
        }
    }

    /// Single robot at `position` displaced to `value`, all others at the origin.
    pub fn delta(position: i64, value: impl Into<Complex64>) -> Self {
        let value = value.into();
        let mut c = Self::perturbed_constant(0.0, [(position, value)]);
        c.label = format!("delta({position})");
        c
    }

    pub fn constant(c: impl Into<Complex64>) -> Self {
        let c = c.into();
        let mut s = Self::perturbed_constant(c, []);
        s.label = format!("constant({c})");
        s
    }

    /// The shift eigenvector `x_k = e^{iθk}`, `θ ∈ (-π, π]`.
    pub fn fourier_mode(theta: f64) -> Result<Self> {
        if !(theta > -PI && theta <= PI) {
            return Err(Error::invalid("theta", format!("{theta} not in (-pi, pi]")));
        }
        let entry: Arc<EntryFn> = if theta == 0.0 {
            Arc::new(|_| Complex64::new(1.0, 0.0))
        } else if theta == PI {
            Arc::new(|k| Complex64::new(if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 }, 0.0))
        } else {
            Arc::new(move |k| Complex64::from_polar(1.0, theta * k as f64))
        };
        Ok(Constellation {
            entry,
            tail: TailClass::FourierMode { theta },
            label: format!("fourier_mode({theta})"),
            bound: 1.0,
        })
    }

    /// Zero for `k >= 0`; for `k < 0`, alternating blocks of ones and zeros
    /// with block `m` of length `rule(m)`, starting with a ones-block at `k = -1`.
    pub fn block_sequence(rule: BlockRule) -> Result<Self> {
        let layout = Arc::new(BlockLayout::new(rule)?);
        let label = format!("block_sequence({})", layout.rule_name());
        let l = Arc::clone(&layout);
        Ok(Constellation {
            entry: Arc::new(move |k| {
                if k >= 0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(l.value_at_distance((-(k + 1)) as u64), 0.0)
                }
            }),
            tail: TailClass::BlockSequence(layout),
            label,
            bound: 1.0,
        })
    }

    /// `x_k = c + y_k` with finitely supported `y`.
    pub fn perturbed_constant(
        c: impl Into<Complex64>,
        perturbation: impl IntoIterator<Item = (i64, Complex64)>,
    ) -> Self {
        let c = c.into();
        let y: BTreeMap<i64, Complex64> = perturbation
            .into_iter()
            .filter(|(_, v)| *v != Complex64::new(0.0, 0.0))
            .collect();
        let l1_bound = y.values().map(|v| v.norm()).sum::<f64>();
        let radius = y.keys().map(|k| k.unsigned_abs()).max().unwrap_or(0);
        let bound = y.values().map(|v| (c + v).norm()).fold(c.norm(), f64::max);
        let label = format!("perturbed_constant({c}, {} entries)", y.len());
        Constellation {
            entry: Arc::new(move |k| c + y.get(&k).copied().unwrap_or_default()),
            tail: TailClass::SummablePerturbation {
                c,
                l1_bound,
                support_radius: Some(radius),
            },
            label,
            bound,
        }
    }

    /// Explicit table `values[i] = x_{start+i}` continued by `c_minus` to the
    /// left and `c_plus` to the right.
    pub fn eventually_constant(
        start: i64,
        values: Vec<Complex64>,
        c_minus: impl Into<Complex64>,
        c_plus: impl Into<Complex64>,
    ) -> Self {
        let (c_minus, c_plus) = (c_minus.into(), c_plus.into());
        let end = start + values.len() as i64 - 1;
        let radius = start.unsigned_abs().max(end.unsigned_abs());
        let bound = values
            .iter()
            .map(|v| v.norm())
            .fold(c_minus.norm().max(c_plus.norm()), f64::max);
        let label = format!("eventually_constant([{start}, {end}])");
        Constellation {
            entry: Arc::new(move |k| {
                if k < start {
                    c_minus
                } else if k > end {
                    c_plus
                } else {
                    values[(k - start) as usize]
                }
            }),
            tail: TailClass::EventuallyConstant {
                c_minus,
                c_plus,
                support_radius: radius,
            },
            label,
            bound,
        }
    }

    pub fn entry(&self, k: i64) -> Complex64 {
        (self.entry)(k)
    }

    pub fn tail(&self) -> &TailClass {
        &self.tail
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Declared sup bound `B >= |x_k|` for all `k`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn materialize(&self, window: IndexWindow) -> Vec<Complex64> {
        window.indices().map(|k| self.entry(k)).collect()
    }

    /// Relabelled sequence `k -> x_{k - offset}`.
    pub fn shifted(&self, offset: i64) -> Self {
        let inner = Arc::clone(&self.entry);
        let grow = offset.unsigned_abs();
        let tail = match &self.tail {
            TailClass::EventuallyConstant {
                c_minus,
                c_plus,
                support_radius,
            } => TailClass::EventuallyConstant {
                c_minus: *c_minus,
                c_plus: *c_plus,
                support_radius: support_radius + grow,
            },
            TailClass::SummablePerturbation {
                c,
                l1_bound,
                support_radius,
            } => TailClass::SummablePerturbation {
                c: *c,
                l1_bound: *l1_bound,
                support_radius: support_radius.map(|r| r + grow),
            },
            TailClass::DecayingPerturbation { c } => TailClass::DecayingPerturbation { c: *c },
            TailClass::BlockSequence(_) | TailClass::FourierMode { .. } => {
                TailClass::Unstructured { bound: self.bound }
            }
            TailClass::Unstructured { bound } => TailClass::Unstructured { bound: *bound },
        };
        Constellation {
            entry: Arc::new(move |k| inner(k - offset)),
            tail,
            label: format!("{} shifted by {offset}", self.label),
            bound: self.bound,
        }
    }

    /// Tabulates a finitely supported difference sequence and attaches an
    /// exact `SummablePerturbation` certificate.
    pub(crate) fn finite_difference(
        label: String,
        radius: u64,
        f: impl Fn(i64) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        let r = radius as i64;
        let table: Vec<Complex64> = (-r..=r).map(&f).collect();
        let l1_bound = table.iter().map(|v| v.norm()).sum();
        let bound = table.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Constellation {
            entry: Arc::new(move |k| {
                if k.unsigned_abs() > radius {
                    Complex64::new(0.0, 0.0)
                } else {
                    table[(k + r) as usize]
                }
            }),
            tail: TailClass::SummablePerturbation {
                c: Complex64::new(0.0, 0.0),
                l1_bound,
                support_radius: Some(radius),
            },
            label,
            bound,
        }
    }

    pub(crate) fn with_entry(
        label: String,
        tail: TailClass,
        bound: f64,
        f: impl Fn(i64) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Constellation {
            entry: Arc::new(f),
            tail,
            label,
            bound,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn delta_entries_and_l1() {
        let d = Constellation::delta(0, 1.0);
        assert_eq!(d.entry(0), c(1.0, 0.0));
        assert_eq!(d.entry(5), c(0.0, 0.0));
        match d.tail() {
            TailClass::SummablePerturbation {
                c: c0, l1_bound, ..
            } => {
                assert_eq!(*c0, c(0.0, 0.0));
                assert_eq!(*l1_bound, 1.0);
            }
            other => panic!("unexpected tail {other:?}"),
        }
        let d3 = Constellation::delta(3, c(2.0, 1.0));
        assert_eq!(d3.entry(3), c(2.0, 1.0));
    }

    #[test]
    fn fourier_mode_values() {
        let f0 = Constellation::fourier_mode(0.0).unwrap();
        for k in [-7, 0, 3, 1_000_000] {
            assert_eq!(f0.entry(k), c(1.0, 0.0));
        }
        let fpi = Constellation::fourier_mode(PI).unwrap();
        for k in -5..5 {
            assert_eq!(fpi.entry(k).re, if k % 2 == 0 { 1.0 } else { -1.0 });
        }
        let fh = Constellation::fourier_mode(PI / 2.0).unwrap();
        assert!((fh.entry(2) - c(-1.0, 0.0)).norm() < 1e-15);
        assert!(Constellation::fourier_mode(-PI).is_err());
        assert!(Constellation::fourier_mode(4.0).is_err());
    }

    #[test]
    fn block_sequence_layout() {
        let b = Constellation::block_sequence(BlockRule::doubling()).unwrap();
        for k in 0..50 {
            assert_eq!(b.entry(k), c(0.0, 0.0));
        }
        // blocks: {-1} ones, {-2,-3} zeros, {-4..-7} ones, {-8..-15} zeros
        assert_eq!(b.entry(-1).re, 1.0);
        assert_eq!(b.entry(-2).re, 0.0);
        assert_eq!(b.entry(-3).re, 0.0);
        assert_eq!(b.entry(-4).re, 1.0);
        assert_eq!(b.entry(-7).re, 1.0);
        assert_eq!(b.entry(-8).re, 0.0);
        assert_eq!(b.entry(-16).re, 1.0);
        if let TailClass::BlockSequence(layout) = b.tail() {
            assert_eq!(layout.ones_block_with_len(3), (-7, -4));
            assert_eq!(layout.ones_block_with_len(5), (-31, -16));
        } else {
            panic!("wrong tail");
        }
    }

    #[test]
    fn block_sequence_rejects_non_increasing() {
        let err = Constellation::block_sequence(BlockRule::custom("flat", |_| 3)).unwrap_err();
        assert!(matches!(err, Error::NonIncreasingRule { block: 1, .. }));
        assert!(Constellation::block_sequence(BlockRule::custom("zero", |_| 0)).is_err());
    }

    #[test]
    fn block_sequence_slow_rule_beyond_precomputed_range() {
        let b = Constellation::block_sequence(BlockRule::geometric(3)).unwrap();
        // block m spans distances [(3^m - 1)/2, (3^{m+1} - 1)/2)
        let d = 3u64.pow(25) / 2 + 5; // inside block 25 (odd, zeros)
        assert_eq!(b.entry(-(d as i64) - 1).re, 0.0);
        let d = 3u64.pow(26) / 2 + 5; // block 26, ones
        assert_eq!(b.entry(-(d as i64) - 1).re, 1.0);
    }

    #[test]
    fn perturbed_constant_cases() {
        let s = Constellation::perturbed_constant(5.0, []);
        for k in [-3, 0, 9] {
            assert_eq!(s.entry(k), c(5.0, 0.0));
        }
        let p = Constellation::perturbed_constant(0.0, [(0, c(1.0, 0.0))]);
        let d = Constellation::delta(0, 1.0);
        for k in -4..4 {
            assert_eq!(p.entry(k), d.entry(k));
        }
        let q = Constellation::perturbed_constant(1.0, [(0, c(-1.0, 0.0))]);
        assert_eq!(q.entry(0), c(0.0, 0.0));
        assert_eq!(q.entry(1), c(1.0, 0.0));
    }

    #[test]
    fn eventually_constant_metadata_consistent() {
        let vals: Vec<Complex64> = (0..11).map(|i| c(i as f64 * 0.1, -0.5)).collect();
        let s = Constellation::eventually_constant(-5, vals, c(2.0, 0.0), c(-1.0, 1.0));
        let (cm, cp, r) = s.tail().finite_support().unwrap();
        let r = r as i64;
        for i in 0..100i64 {
            let k = r + 1 + i * 37;
            assert_eq!(s.entry(k), cp);
            assert_eq!(s.entry(-k), cm);
        }
    }

    #[test]
    fn bounds_hold_on_coarse_grid() {
        let gens = vec![
            Constellation::delta(3, c(2.0, 1.0)),
            Constellation::fourier_mode(0.3).unwrap(),
            Constellation::block_sequence(BlockRule::doubling()).unwrap(),
            Constellation::perturbed_constant(c(1.0, 1.0), [(-2, c(0.5, 0.0)), (4, c(0.0, -3.0))]),
        ];
        for g in &gens {
            for k in (-1_000_000i64..=1_000_000).step_by(997) {
                assert!(
                    g.entry(k).norm() <= g.bound() + 1e-12,
                    "{} at {k}",
                    g.label()
                );
            }
        }
    }

    proptest! {
        #[test]
        fn fourier_mode_is_shift_eigenvector(theta in -3.0f64..3.0, k in -100_000i64..100_000) {
            let f = Constellation::fourier_mode(theta).unwrap();
            let lhs = f.entry(k - 1);
            let rhs = Complex64::from_polar(1.0, -theta) * f.entry(k);
            prop_assert!((lhs - rhs).norm() < 1e-10);
        }

        #[test]
        fn entries_are_deterministic(k in any::<i32>()) {
            let b = Constellation::block_sequence(BlockRule::doubling()).unwrap();
            prop_assert_eq!(b.entry(k as i64), b.entry(k as i64));
        }
    }
}
