//! Executes a validated scenario and writes its artifacts plus a manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rendezvous_core::cesaro;
use rendezvous_core::integrator::compare_with_kernel;
use rendezvous_core::kernels::{self, KernelAudit, Sampling};
use rendezvous_core::platoon::{self, PlatoonSetup};
use rendezvous_core::rates;
use rendezvous_core::{Complex64, DEFAULT_EPS_TAIL};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::scenario::{self, Experiment, Scenario};

/// In-memory artifact: file name and bytes.
pub type Artifact = (String, Vec<u8>);

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub schema: u32,
    pub scenario: String,
    pub experiment: &'static str,
    pub inputs_sha256: String,
    pub eps_tail: f64,
    pub jobs: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputEntry>,
}

/// Settings from the command line that override the scenario.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub eps_tail: Option<f64>,
    pub jobs: Option<usize>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn csv<F>(name: &str, f: F) -> Result<Artifact, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::io(name, e))?;
    Ok((name.to_string(), buf))
}

fn json_file<T: Serialize>(name: &str, value: &T) -> Artifact {
    let mut buf = serde_json::to_vec_pretty(value).expect("artifact serializes");
    buf.push(b'\n');
    (name.to_string(), buf)
}

fn audits_file(audits: &[KernelAudit]) -> Artifact {
    json_file("kernels.json", &audits)
}

fn complex_json(z: Complex64) -> serde_json::Value {
    json!([z.re, z.im])
}

/// Runs the experiment and returns its artifacts without touching the disk.
pub fn compute(sc: &Scenario, eps_tail: f64) -> Result<Vec<Artifact>, CliError> {
    let core = |ctx: &str| {
        let ctx = ctx.to_string();
        move |e| CliError::core(&ctx, e)
    };
    let x0 = sc
        .constellation
        .as_ref()
        .map(|c| c.build("constellation"))
        .transpose()?;
    let need_x0 = || x0.as_ref().expect("validated: constellation present");
    let mut out = Vec::new();
    match &sc.experiment {
        Experiment::Simulate {
            kind,
            t_grid,
            window,
            certified,
            limit,
        } => {
            let times = t_grid.resolve("experiment.t_grid")?;
            let x0 = need_x0();
            let c = match limit {
                Some(l) => l.value(),
                None => cesaro::extract_limit(x0, *kind).c,
            };
            let w = window
                .map(|w| scenario::window("experiment.window", w))
                .transpose()?;
            let sampling = if *certified {
                Sampling::Certified { display: w }
            } else {
                Sampling::Window(w.expect("validated: window present"))
            };
            let s = kernels::evaluate(x0, *kind, &times, sampling, c, eps_tail)
                .map_err(core("simulate"))?;
            out.push(csv("trajectory.csv", |b| s.write_csv(b))?);
            out.push(json_file("trajectory.json", &s.to_json()));
            out.push(audits_file(&s.kernels));
        }
        Experiment::Cesaro { kind, ns } => {
            let ns = ns.resolve("experiment.ns")?;
            let report = cesaro::classify(need_x0(), *kind, &ns).map_err(core("cesaro"))?;
            out.push(csv("cesaro.csv", |b| report.write_csv(b))?);
            out.push(json_file("report.json", &report));
        }
        Experiment::Rate {
            kind,
            t_grid,
            t_min,
            limit,
        } => {
            let times = t_grid.resolve("experiment.t_grid")?;
            let x0 = need_x0();
            let c = match limit {
                Some(l) => l.value(),
                None => cesaro::extract_limit(x0, *kind).c,
            };
            let s = rates::decay_curve(x0, *kind, &times, c, eps_tail).map_err(core("rate"))?;
            let fit = rates::fit_rate(&s, t_min.unwrap_or(times[0])).map_err(core("rate fit"))?;
            out.push(csv("rate.csv", |b| rates::write_curve_csv(&s, b))?);
            out.push(json_file(
                "fit.json",
                &json!({
                    "kind": kind,
                    "limit_c": complex_json(c),
                    "certified": s.certified,
                    "noise_floor": 100.0 * eps_tail,
                    "fit": fit,
                }),
            ));
            out.push(audits_file(&s.kernels));
        }
        Experiment::FiniteCase { n, x0, t_grid } => {
            let times = t_grid.resolve("experiment.t_grid")?;
            let init: Vec<Complex64> = match x0 {
                Some(v) => v.iter().map(|z| z.value()).collect(),
                None => {
                    let c = need_x0();
                    (0..*n as i64).map(|k| c.entry(k)).collect()
                }
            };
            let s = rates::finite_case_curve(&init, &times).map_err(core("finite_case"))?;
            let gap = rates::spectral_gap(*n);
            let fit = rates::fit_exponential_rate(&s, times[0], 1e-13)
                .map_err(core("finite_case fit"))?;
            out.push(csv("finite.csv", |b| rates::write_curve_csv(&s, b))?);
            out.push(json_file(
                "fit.json",
                &json!({
                    "n": n,
                    "centroid": complex_json(s.limit_c),
                    "spectral_gap": gap,
                    "rate": -fit.slope,
                    "relative_error": (-fit.slope / gap - 1.0).abs(),
                    "fit": fit,
                }),
            ));
        }
        Experiment::Platoon {
            params,
            initial,
            window,
            t_grid,
            boundary,
            divergence_factor,
        } => {
            let params = params.resolve("experiment.params")?;
            let w = scenario::window("experiment.window", *window)?;
            let times = t_grid.resolve("experiment.t_grid")?;
            let entries = |l: &[(i64, scenario::Num)]| -> Vec<(i64, Complex64)> {
                l.iter().map(|(k, v)| (*k, v.value())).collect()
            };
            let mut setup = PlatoonSetup::sparse(
                w,
                &entries(&initial.y),
                &entries(&initial.v),
                &entries(&initial.a),
            )
            .map_err(core("experiment.initial"))?;
            if let Some(b) = boundary {
                setup.boundary = b.resolve();
            }
            if let Some(f) = divergence_factor {
                setup.divergence_factor = *f;
            }
            setup.tol = sc.tolerances();
            let tr = platoon::simulate_platoon(&params, &setup, &times).map_err(core("platoon"))?;
            let (t_peak, peak) = tr.peak_y();
            let last = *tr.sup_y.last().expect("nonempty grid");
            out.push(csv("platoon.csv", |b| tr.write_csv(b))?);
            out.push(csv("platoon_sup.csv", |b| tr.write_sup_csv(b))?);
            out.push(json_file(
                "summary.json",
                &json!({
                    "params": params,
                    "peak_sup_y": peak,
                    "peak_time": t_peak,
                    "final_sup_y": last,
                    "final_over_peak": if peak > 0.0 { last / peak } else { 0.0 },
                }),
            ));
        }
        Experiment::Spectrum { params, grid_size } => {
            let params = params.resolve("experiment.params")?;
            let spec = platoon::spectral_abscissa(&params, *grid_size).map_err(core("spectrum"))?;
            out.push(csv("spectrum.csv", |b| spec.write_csv(b))?);
            out.push(json_file(
                "spectrum.json",
                &json!({
                    "params": params,
                    "grid_size": grid_size,
                    "abscissa": spec.abscissa,
                    "limit_abscissa": spec.limit_abscissa,
                    "sup_abscissa": spec.sup_abscissa(),
                    "max_residual": spec.max_residual,
                    "max_branch_jump": platoon::max_branch_jump(&spec),
                }),
            ));
        }
        Experiment::OracleCheck { kind, t, window } => {
            let w = scenario::window("experiment.window", *window)?;
            let tol = sc.tolerances();
            let diff = compare_with_kernel(need_x0(), *kind, *t, w, tol, eps_tail)
                .map_err(core("oracle_check"))?;
            let audit = kernels::KernelWeights::new(*kind, *t, eps_tail)
                .map_err(core("oracle_check"))?
                .audit();
            out.push(json_file(
                "oracle.json",
                &json!({
                    "kind": kind,
                    "t": t,
                    "window": w,
                    "rel_tol": tol.rel_tol,
                    "abs_tol": tol.abs_tol,
                    "max_interior_difference": diff,
                }),
            ));
            out.push(audits_file(&[audit]));
        }
    }
    Ok(out)
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

/// Computes the scenario on a pool of `opts.jobs` workers and writes every
/// artifact and `manifest.json` into the output directory.
pub fn run(sc: &Scenario, input: &[u8], opts: &RunOptions) -> Result<RunSummary, CliError> {
    let eps_tail = opts.eps_tail.or(sc.eps_tail).unwrap_or(DEFAULT_EPS_TAIL);
    scenario::check_eps_tail("eps_tail", eps_tail)?;
    let jobs = match opts.jobs {
        Some(0) => return Err(CliError::Validation("--jobs: must be at least 1".into())),
        Some(j) => j,
        None => rayon::current_num_threads(),
    };
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| sc.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(&sc.name));

    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let artifacts = pool.install(|| compute(sc, eps_tail))?;
    let wall = start.elapsed().as_secs_f64();

    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(out_dir.display(), e))?;
    let mut outputs = Vec::with_capacity(artifacts.len());
    for (name, bytes) in &artifacts {
        let path = out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(path.display(), e))?;
        outputs.push(OutputEntry {
            file: name.clone(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        core_version: rendezvous_core::VERSION,
        schema: scenario::SCHEMA_VERSION,
        scenario: sc.name.clone(),
        experiment: sc.experiment.type_name(),
        inputs_sha256: sha256_hex(input),
        eps_tail,
        jobs,
        wall_time_s: wall,
        outputs,
    };
    let (name, bytes) = json_file("manifest.json", &manifest);
    let path = out_dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(path.display(), e))?;
    Ok(RunSummary { out_dir, manifest })
}
