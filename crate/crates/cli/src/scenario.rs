//! Versioned JSON scenario documents.
//!
//! Parsing is strict: every object rejects unknown keys, and semantic checks
//! report the dotted path of the offending field.

use rendezvous_core::constellations::BlockRule;
use rendezvous_core::integrator::{Boundary, Tolerances};
use rendezvous_core::{Complex64, Constellation, DynamicsKind, IndexWindow, PlatoonParams};
use serde::Deserialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A complex number written as `1.5` or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Real(f64),
    Pair([f64; 2]),
}

impl Num {
    pub fn value(self) -> Complex64 {
        match self {
            Num::Real(r) => Complex64::new(r, 0.0),
            Num::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

impl Default for Num {
    fn default() -> Self {
        Num::Real(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub constellation: Option<GeneratorSpec>,
    pub experiment: Experiment,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub eps_tail: Option<f64>,
    #[serde(default)]
    pub tolerances: Option<TolSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleSpec {
    Doubling,
    Geometric(u64),
    Linear { first: u64, step: u64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Delta {
        #[serde(default)]
        position: i64,
        #[serde(default = "unit")]
        value: Num,
    },
    Constant {
        value: Num,
    },
    FourierMode {
        theta: f64,
    },
    BlockSequence {
        rule: RuleSpec,
    },
    PerturbedConstant {
        c: Num,
        perturbations: Vec<(i64, Num)>,
    },
    EventuallyConstant {
        start: i64,
        values: Vec<Num>,
        c_minus: Num,
        c_plus: Num,
    },
    ApplyGenerator {
        kind: DynamicsKind,
        of: Box<GeneratorSpec>,
    },
}

fn unit() -> Num {
    Num::Real(1.0)
}

/// Explicit list or `{start, ratio, count}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TimeGrid {
    List(Vec<f64>),
    Geometric(GeometricSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricSpec {
    pub start: f64,
    pub ratio: f64,
    pub count: usize,
}

/// Explicit list or `{dyadic: [lo, hi]}` for `2^lo ..= 2^hi`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum NsGrid {
    List(Vec<u64>),
    Dyadic(DyadicSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyadicSpec {
    pub dyadic: (u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSpec {
    pub c1: Num,
    pub c2: Num,
    pub c3: Num,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatoonInitial {
    #[serde(default)]
    pub y: Vec<(i64, Num)>,
    #[serde(default)]
    pub v: Vec<(i64, Num)>,
    #[serde(default)]
    pub a: Vec<(i64, Num)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    ClampedToInitial,
    Frozen { c_minus: Num, c_plus: Num },
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Simulate {
        kind: DynamicsKind,
        t_grid: TimeGrid,
        #[serde(default)]
        window: Option<(i64, i64)>,
        #[serde(default = "yes")]
        certified: bool,
        #[serde(default)]
        limit: Option<Num>,
    },
    Cesaro {
        kind: DynamicsKind,
        ns: NsGrid,
    },
    Rate {
        kind: DynamicsKind,
        t_grid: TimeGrid,
        #[serde(default)]
        t_min: Option<f64>,
        #[serde(default)]
        limit: Option<Num>,
    },
    FiniteCase {
        n: usize,
        #[serde(default)]
        x0: Option<Vec<Num>>,
        t_grid: TimeGrid,
    },
    Platoon {
        params: GainSpec,
        initial: PlatoonInitial,
        window: (i64, i64),
        t_grid: TimeGrid,
        #[serde(default)]
        boundary: Option<BoundarySpec>,
        #[serde(default)]
        divergence_factor: Option<f64>,
    },
    Spectrum {
        params: GainSpec,
        grid_size: usize,
    },
    OracleCheck {
        kind: DynamicsKind,
        t: f64,
        window: (i64, i64),
    },
}

fn yes() -> bool {
    true
}

impl Experiment {
    pub fn type_name(&self) -> &'static str {
        match self {
            Experiment::Simulate { .. } => "simulate",
            Experiment::Cesaro { .. } => "cesaro",
            Experiment::Rate { .. } => "rate",
            Experiment::FiniteCase { .. } => "finite_case",
            Experiment::Platoon { .. } => "platoon",
            Experiment::Spectrum { .. } => "spectrum",
            Experiment::OracleCheck { .. } => "oracle_check",
        }
    }

    fn needs_constellation(&self) -> bool {
        matches!(
            self,
            Experiment::Simulate { .. }
                | Experiment::Cesaro { .. }
                | Experiment::Rate { .. }
                | Experiment::OracleCheck { .. }
        )
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Validation(format!("{field}: {}", reason.into()))
}

fn finite(field: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("{x} is not finite")))
    }
}

fn finite_num(field: &str, x: Num) -> Result<(), CliError> {
    let z = x.value();
    if z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, "value is not finite"))
    }
}

pub fn window(field: &str, (lo, hi): (i64, i64)) -> Result<IndexWindow, CliError> {
    IndexWindow::new(lo, hi).map_err(|_| invalid(field, format!("lo {lo} exceeds hi {hi}")))
}

impl TimeGrid {
    pub fn resolve(&self, field: &str) -> Result<Vec<f64>, CliError> {
        let ts = match self {
            TimeGrid::List(ts) => ts.clone(),
            TimeGrid::Geometric(g) => {
                if g.count < 2 {
                    return Err(invalid(field, "count must be at least 2"));
                }
                rendezvous_core::rates::geometric_grid(g.start, g.ratio, g.count)
                    .map_err(|e| invalid(field, e.to_string()))?
            }
        };
        if ts.is_empty() {
            return Err(invalid(field, "grid is empty"));
        }
        for (i, t) in ts.iter().enumerate() {
            if !(t.is_finite() && *t >= 0.0) {
                return Err(invalid(
                    &format!("{field}[{i}]"),
                    format!("{t} is not a finite time >= 0"),
                ));
            }
        }
        if let Some(i) = ts.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid(
                &format!("{field}[{}]", i + 1),
                "times must be strictly increasing",
            ));
        }
        Ok(ts)
    }
}

impl NsGrid {
    pub fn resolve(&self, field: &str) -> Result<Vec<u64>, CliError> {
        let ns = match self {
            NsGrid::List(ns) => ns.clone(),
            NsGrid::Dyadic(DyadicSpec { dyadic: (lo, hi) }) => {
                if lo > hi || *hi > 40 {
                    return Err(invalid(field, "dyadic exponents need lo <= hi <= 40"));
                }
                rendezvous_core::cesaro::dyadic(*lo, *hi)
            }
        };
        if ns.len() < 2 {
            return Err(invalid(field, "need at least 2 values"));
        }
        if let Some(i) = ns.iter().position(|n| *n == 0) {
            return Err(invalid(&format!("{field}[{i}]"), "n must be >= 1"));
        }
        if let Some(i) = ns.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid(
                &format!("{field}[{}]", i + 1),
                format!(
                    "ns must be strictly increasing ({} then {})",
                    ns[i],
                    ns[i + 1]
                ),
            ));
        }
        Ok(ns)
    }
}

impl GainSpec {
    pub fn resolve(&self, field: &str) -> Result<PlatoonParams, CliError> {
        PlatoonParams::new(self.c1.value(), self.c2.value(), self.c3.value())
            .map_err(|e| invalid(field, e.to_string()))
    }
}

impl BoundarySpec {
    pub fn resolve(self) -> Boundary {
        match self {
            BoundarySpec::ClampedToInitial => Boundary::ClampedToInitial,
            BoundarySpec::Frozen { c_minus, c_plus } => Boundary::Frozen {
                c_minus: c_minus.value(),
                c_plus: c_plus.value(),
            },
            BoundarySpec::Periodic => Boundary::Periodic,
        }
    }
}

impl GeneratorSpec {
    pub fn build(&self, field: &str) -> Result<Constellation, CliError> {
        Ok(match self {
            GeneratorSpec::Delta { position, value } => {
                finite_num(&format!("{field}.value"), *value)?;
                Constellation::delta(*position, value.value())
            }
            GeneratorSpec::Constant { value } => {
                finite_num(&format!("{field}.value"), *value)?;
                Constellation::constant(value.value())
            }
            GeneratorSpec::FourierMode { theta } => Constellation::fourier_mode(*theta)
                .map_err(|e| invalid(&format!("{field}.theta"), e.to_string()))?,
            GeneratorSpec::BlockSequence { rule } => {
                let rule = match rule {
                    RuleSpec::Doubling => BlockRule::doubling(),
                    RuleSpec::Geometric(base) if *base >= 2 => BlockRule::geometric(*base),
                    RuleSpec::Geometric(_) => {
                        return Err(invalid(
                            &format!("{field}.rule.geometric"),
                            "base must be >= 2",
                        ))
                    }
                    RuleSpec::Linear { first, step } if *first >= 1 && *step >= 1 => {
                        BlockRule::linear(*first, *step)
                    }
                    RuleSpec::Linear { .. } => {
                        return Err(invalid(
                            &format!("{field}.rule.linear"),
                            "first and step must be >= 1",
                        ))
                    }
                };
                Constellation::block_sequence(rule)
                    .map_err(|e| invalid(&format!("{field}.rule"), e.to_string()))?
            }
            GeneratorSpec::PerturbedConstant { c, perturbations } => {
                finite_num(&format!("{field}.c"), *c)?;
                for (i, (_, y)) in perturbations.iter().enumerate() {
                    finite_num(&format!("{field}.perturbations[{i}]"), *y)?;
                }
                Constellation::perturbed_constant(
                    c.value(),
                    perturbations.iter().map(|(k, y)| (*k, y.value())),
                )
            }
            GeneratorSpec::EventuallyConstant {
                start,
                values,
                c_minus,
                c_plus,
            } => {
                for (i, v) in values.iter().enumerate() {
                    finite_num(&format!("{field}.values[{i}]"), *v)?;
                }
                finite_num(&format!("{field}.c_minus"), *c_minus)?;
                finite_num(&format!("{field}.c_plus"), *c_plus)?;
                Constellation::eventually_constant(
                    *start,
                    values.iter().map(|v| v.value()).collect(),
                    c_minus.value(),
                    c_plus.value(),
                )
            }
            GeneratorSpec::ApplyGenerator { kind, of } => {
                let inner = of.build(&format!("{field}.of"))?;
                rendezvous_core::kernels::apply_generator(&inner, *kind)
            }
        })
    }
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn parse(text: &str) -> Result<Scenario, CliError> {
        let raw: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("malformed JSON: {e}")))?;
        match raw.get("schema") {
            Some(v) if v.as_u64() == Some(SCHEMA_VERSION as u64) => {}
            Some(v) => {
                return Err(invalid(
                    "schema",
                    format!("unsupported version {v}; expected {SCHEMA_VERSION}"),
                ))
            }
            None => return Err(invalid("schema", "missing field")),
        }
        let sc: Scenario = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("scenario: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Semantic checks that do not run any numerics.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        if let Some(eps) = self.eps_tail {
            check_eps_tail("eps_tail", eps)?;
        }
        if let Some(t) = self.tolerances {
            if !(t.rel_tol > 0.0
                && t.abs_tol > 0.0
                && t.rel_tol.is_finite()
                && t.abs_tol.is_finite())
            {
                return Err(invalid(
                    "tolerances",
                    "rel_tol and abs_tol must be finite and > 0",
                ));
            }
        }
        match (&self.constellation, self.experiment.needs_constellation()) {
            (Some(c), _) => {
                c.build("constellation")?;
            }
            (None, true) => {
                return Err(invalid(
                    "constellation",
                    format!("required by experiment `{}`", self.experiment.type_name()),
                ))
            }
            (None, false) => {}
        }
        let ex = "experiment";
        match &self.experiment {
            Experiment::Simulate {
                t_grid,
                window: w,
                certified,
                limit,
                ..
            } => {
                t_grid.resolve(&format!("{ex}.t_grid"))?;
                if let Some(w) = w {
                    let w = window(&format!("{ex}.window"), *w)?;
                    if w.len() > 1_000_000 {
                        return Err(invalid(&format!("{ex}.window"), "at most 10^6 sites"));
                    }
                } else if !certified {
                    return Err(invalid(
                        &format!("{ex}.window"),
                        "required when certified is false",
                    ));
                }
                if let Some(l) = limit {
                    finite_num(&format!("{ex}.limit"), *l)?;
                }
            }
            Experiment::Cesaro { ns, .. } => {
                ns.resolve(&format!("{ex}.ns"))?;
            }
            Experiment::Rate {
                t_grid,
                t_min,
                limit,
                ..
            } => {
                let ts = t_grid.resolve(&format!("{ex}.t_grid"))?;
                if ts.len() < 4 {
                    return Err(invalid(
                        &format!("{ex}.t_grid"),
                        "a rate fit needs at least 4 times",
                    ));
                }
                rendezvous_core::rates::check_geometric(&ts)
                    .map_err(|e| invalid(&format!("{ex}.t_grid"), e.to_string()))?;
                if let Some(t) = t_min {
                    finite(&format!("{ex}.t_min"), *t)?;
                }
                if let Some(l) = limit {
                    finite_num(&format!("{ex}.limit"), *l)?;
                }
            }
            Experiment::FiniteCase { n, x0, t_grid } => {
                if *n < 2 {
                    return Err(invalid(&format!("{ex}.n"), "need at least 2 robots"));
                }
                if *n > 4096 {
                    return Err(invalid(&format!("{ex}.n"), "at most 4096 robots"));
                }
                match x0 {
                    Some(x) if x.len() != *n => {
                        return Err(invalid(
                            &format!("{ex}.x0"),
                            format!("has {} entries, expected n = {n}", x.len()),
                        ))
                    }
                    Some(x) => {
                        for (i, v) in x.iter().enumerate() {
                            finite_num(&format!("{ex}.x0[{i}]"), *v)?;
                        }
                    }
                    None if self.constellation.is_none() => {
                        return Err(invalid(
                            &format!("{ex}.x0"),
                            "give x0 or a constellation to sample on 0..n-1",
                        ))
                    }
                    None => {}
                }
                t_grid.resolve(&format!("{ex}.t_grid"))?;
            }
            Experiment::Platoon {
                params,
                initial,
                window: w,
                t_grid,
                divergence_factor,
                ..
            } => {
                params.resolve(&format!("{ex}.params"))?;
                let w = window(&format!("{ex}.window"), *w)?;
                if w.len() < 3 || w.len() > 100_000 {
                    return Err(invalid(&format!("{ex}.window"), "needs 3 to 10^5 vehicles"));
                }
                for (name, list) in [("y", &initial.y), ("v", &initial.v), ("a", &initial.a)] {
                    for (i, (k, val)) in list.iter().enumerate() {
                        let f = format!("{ex}.initial.{name}[{i}]");
                        finite_num(&f, *val)?;
                        if !w.contains(*k) {
                            return Err(invalid(&f, format!("index {k} is outside the window")));
                        }
                    }
                }
                t_grid.resolve(&format!("{ex}.t_grid"))?;
                if let Some(f) = divergence_factor {
                    if !(*f > 1.0 && f.is_finite()) {
                        return Err(invalid(
                            &format!("{ex}.divergence_factor"),
                            "must be finite and > 1",
                        ));
                    }
                }
            }
            Experiment::Spectrum { params, grid_size } => {
                params.resolve(&format!("{ex}.params"))?;
                if !(64..=1 << 20).contains(grid_size) {
                    return Err(invalid(&format!("{ex}.grid_size"), "must be in [64, 2^20]"));
                }
            }
            Experiment::OracleCheck { t, window: w, .. } => {
                if !(t.is_finite() && *t >= 0.0) {
                    return Err(invalid(&format!("{ex}.t"), "must be finite and >= 0"));
                }
                window(&format!("{ex}.window"), *w)?;
            }
        }
        Ok(())
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances
            .map(|t| Tolerances {
                rel_tol: t.rel_tol,
                abs_tol: t.abs_tol,
            })
            .unwrap_or_default()
    }
}

pub fn check_eps_tail(field: &str, eps: f64) -> Result<(), CliError> {
    if eps > 0.0 && eps <= 1e-3 {
        Ok(())
    } else {
        Err(invalid(field, format!("{eps} must be in (0, 1e-3]")))
    }
}
