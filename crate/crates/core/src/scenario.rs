//! Scenario orchestration behind the command line: runs, summaries,
//! refinement sweeps, kernel reports and the Picard driver.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{InitialSource, RunConfig};
use crate::diagnostics::{
    energy_identity_residual, fitted_order, sup_bound_checks, vertical_energy_monitor, SupBoundReport, TrajectoryLedger,
    VerticalEnergyReport,
};
use crate::error::{Error, Result};
use crate::flow::{homotopy_check, read_checkpoint, run_flow, write_checkpoint, FlowConfig, FlowProblem, FlowRun, MapState, Outcome, Representation, Scheme};
use crate::heatkernel::{kernel_checks, kernel_gradient_mass, picard_run, spectral_decompose, z_slice_rows, KernelReport, PicardReport, DEFAULT_NODE_CAP};
use crate::initial::{initial_map, max_radius};
use crate::model::{Grid, GroupModel};
use crate::operators::Operators;
use crate::target::{EmbeddedTarget, Potential, Target};

pub const SUP_BOUND_MARGIN: f64 = 1e-3;
pub const ENERGY_STEP_TOL: f64 = 1e-10;
pub const VERTICAL_STEP_TOL: f64 = 1e-8;
pub const DEFECT_STEP_TOL: f64 = 1e-10;
pub const CONSTANT_LIMIT_TOL: f64 = 1e-4;
const HESSIAN_SAMPLES: usize = 512;

/// eta_min, its half (the Hessian threshold) and the bracket step.
#[derive(Clone, Debug, Serialize)]
pub struct EtaReport {
    pub model: String,
    pub step: Option<usize>,
    pub eta_min: f64,
    pub threshold: f64,
}

pub fn eta_report(model: &GroupModel, grid: &Grid, sphere_samples: usize) -> Result<EtaReport> {
    let step = match model.bracket_generating_step(4) {
        Ok(s) => Some(s),
        Err(Error::NotBracketGenerating { .. }) => None,
        Err(e) => return Err(e),
    };
    let eta_min = model.eta_min(grid, sphere_samples)?;
    Ok(EtaReport {
        model: model.name.clone(),
        step,
        eta_min,
        threshold: eta_min / 2.0,
    })
}

/// Hypotheses checked before a run starts.
#[derive(Clone, Debug, Serialize)]
pub struct Hypotheses {
    pub eta: EtaReport,
    pub lambda_g: f64,
    /// lambda_G < eta_min/2, only meaningful on step-2 models
    pub below_threshold: bool,
    pub nonpositive_curvature: bool,
    pub working_radius: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub name: String,
    pub exercises: Option<String>,
    pub model: String,
    pub grid: String,
    pub target: String,
    pub potential: String,
    pub outcome: String,
    pub reason: Option<String>,
    pub exit_code: i32,
    pub t_final: f64,
    pub steps: usize,
    pub halvings: u32,
    pub dt: f64,
    pub seed: u64,
    pub hypotheses: Hypotheses,
    pub initial_sup_tau: f64,
    pub final_sup_tau: f64,
    pub fitted_decay_rate: Option<f64>,
    pub energy_identity_residual: Option<f64>,
    pub sup_bound: SupBoundReport,
    pub vertical_energy: Option<VerticalEnergyReport>,
    pub max_sup_e: f64,
    pub image_diameter_bound: Option<f64>,
    pub distance_to_basepoint: Option<f64>,
    pub checks: BTreeMap<String, bool>,
}

pub struct ScenarioRun {
    pub config: RunConfig,
    pub problem: FlowProblem,
    pub initial: MapState,
    pub run: FlowRun,
    pub summary: Summary,
}

impl ScenarioRun {
    pub fn ledger(&self) -> &TrajectoryLedger {
        &self.run.ledger
    }

    pub fn exit_code(&self) -> i32 {
        self.run.outcome().exit_code()
    }
}

pub fn build_problem(config: &RunConfig) -> Result<FlowProblem> {
    FlowProblem::new(config.group_model()?, config.grid, config.target, config.potential)
}

pub fn build_initial(config: &RunConfig, problem: &FlowProblem) -> Result<MapState> {
    match &config.initial {
        InitialSource::Generated(spec) => initial_map(problem, spec, config.seed, config.scheme == Scheme::TubularEuler),
        InitialSource::Checkpoint(stem) => {
            let (header, state) = read_checkpoint(stem)?;
            if header.grid != problem.grid || header.target != problem.target {
                return Err(Error::Domain(format!(
                    "checkpoint is for {} on grid {}, config asks for {} on {}",
                    header.target.name(),
                    header.grid,
                    problem.target.name(),
                    problem.grid
                )));
            }
            problem.validate(&state)?;
            Ok(state)
        }
    }
}

pub fn hypotheses(config: &RunConfig, problem: &FlowProblem, initial: &MapState) -> Result<Hypotheses> {
    let eta = eta_report(&problem.model, &problem.grid, 16)?;
    let working_radius = match problem.target {
        Target::Hyperbolic(_) => 2.0 * max_radius(initial) + 1.0,
        _ => 1.0,
    };
    let lambda_g = problem
        .potential
        .estimate_hessian_bound(&problem.target, working_radius, HESSIAN_SAMPLES, config.seed);
    Ok(Hypotheses {
        below_threshold: eta.step == Some(2) && lambda_g < eta.threshold,
        eta,
        lambda_g,
        nonpositive_curvature: problem.target.is_nonpositively_curved(),
        working_radius,
    })
}

/// One-line statement of the threshold hypothesis, printed before step-2 runs.
pub fn threshold_line(h: &Hypotheses) -> String {
    match h.eta.step {
        Some(2) => format!(
            "eta_min = {:?}  threshold eta_min/2 = {:?}  lambda_G = {:.6}  lambda_G < eta_min/2: {}",
            h.eta.eta_min,
            h.eta.threshold,
            h.lambda_g,
            if h.below_threshold { "pass" } else { "fail" }
        ),
        Some(s) => format!("model is {s}-step bracket generating; eta_min = {:?}", h.eta.eta_min),
        None => format!("model is not bracket generating; eta_min = {:?}", h.eta.eta_min),
    }
}

/// Problem, initial map and hypotheses of a scenario, before the run.
pub struct Prepared {
    pub config: RunConfig,
    pub problem: FlowProblem,
    pub initial: MapState,
    pub hypotheses: Hypotheses,
    pub flow: FlowConfig,
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    let problem = build_problem(config)?;
    let initial = build_initial(config, &problem)?;
    let hypotheses = hypotheses(config, &problem, &initial)?;
    let flow = config.flow_config(problem.ops.cfl_dt(config.cfl_safety));
    flow.validate(&problem.ops)?;
    Ok(Prepared {
        config: config.clone(),
        problem,
        initial,
        hypotheses,
        flow,
    })
}

impl Prepared {
    pub fn run(self) -> Result<ScenarioRun> {
        let run = run_flow(&self.problem, &self.initial, &self.flow)?;
        let summary = summarize(&self.config, &self.problem, &self.initial, &run, self.hypotheses, &self.flow);
        Ok(ScenarioRun {
            config: self.config,
            problem: self.problem,
            initial: self.initial,
            run,
            summary,
        })
    }
}

/// Set up and run a scenario without touching the file system.
pub fn execute(config: &RunConfig) -> Result<ScenarioRun> {
    prepare(config)?.run()
}

fn summarize(config: &RunConfig, problem: &FlowProblem, initial: &MapState, run: &FlowRun, hyp: Hypotheses, flow: &FlowConfig) -> Summary {
    let ledger = &run.ledger;
    let e = &ledger.entries;
    let mut checks = BTreeMap::new();
    if flow.scheme == Scheme::ProjectedEuler {
        let ok = e.windows(2).all(|w| w[1].report.e_g <= w[0].report.e_g + ENERGY_STEP_TOL);
        checks.insert("energy_monotone".into(), ok);
    }
    let sup_bound = sup_bound_checks(ledger, hyp.lambda_g, SUP_BOUND_MARGIN);
    if hyp.nonpositive_curvature {
        checks.insert("sup_bound".into(), sup_bound.pass);
    }
    let vertical_energy = (hyp.eta.step == Some(2)).then(|| vertical_energy_monitor(ledger, hyp.lambda_g, VERTICAL_STEP_TOL));
    if let Some(v) = &vertical_energy {
        checks.insert(if v.monotone_expected { "vertical_energy_monotone" } else { "vertical_energy_bounded" }.into(), v.pass);
    }
    if let Ok(same) = homotopy_check(initial, &run.final_state) {
        checks.insert("homotopy_preserved".into(), same);
    }
    if flow.scheme == Scheme::TubularEuler {
        let ok = e.windows(2).all(|w| w[1].report.normal_defect <= w[0].report.normal_defect + DEFECT_STEP_TOL);
        checks.insert("normal_defect_monotone".into(), ok);
    }
    if let (Target::Sphere(s), Representation::ExtrinsicAmbient) = (&problem.target, run.final_state.representation) {
        let u = &run.final_state;
        let d = (0..u.nodes()).map(|p| s.distance(&u.point(p))).fold(0.0, f64::max);
        checks.insert("on_target".into(), d <= crate::target::ON_MANIFOLD_TOL);
    }
    let (mut diameter, mut base_dist) = (None, None);
    if let Target::Hyperbolic(d) = &problem.target {
        let u = &run.final_state;
        let at = |p: usize| [u.components[0].0[p], u.components[1].0[p]];
        let diam = 2.0 * (0..u.nodes()).map(|p| d.distance_between(at(0), at(p))).fold(0.0, f64::max);
        let dist = max_radius(u);
        diameter = Some(diam);
        base_dist = Some(dist);
        if problem.potential.decay_constant().is_some() {
            checks.insert(
                "constant_limit".into(),
                run.outcome() == &Outcome::Converged && diam <= CONSTANT_LIMIT_TOL && dist <= CONSTANT_LIMIT_TOL,
            );
        }
    }
    let (reason, outcome) = match run.outcome() {
        Outcome::Aborted { reason } => (Some(reason.clone()), "aborted".to_string()),
        o => (None, o.tag().to_string()),
    };
    Summary {
        name: config.name(),
        exercises: config
            .preset
            .as_deref()
            .and_then(|p| crate::config::preset(p).ok())
            .map(|p| p.exercises.to_string()),
        model: problem.model.name.clone(),
        grid: problem.grid.to_string(),
        target: problem.target.name().into(),
        potential: problem.potential.name().into(),
        outcome,
        reason,
        exit_code: run.outcome().exit_code(),
        t_final: run.final_state.t,
        steps: run.steps,
        halvings: run.halvings,
        dt: flow.dt,
        seed: config.seed,
        hypotheses: hyp,
        initial_sup_tau: ledger.first().report.sup_tau,
        final_sup_tau: ledger.last().report.sup_tau,
        fitted_decay_rate: sup_bound.decay_rate,
        energy_identity_residual: energy_identity_residual(ledger).map(|r| r.0),
        sup_bound,
        vertical_energy,
        max_sup_e: e.iter().map(|x| x.report.sup_e).fold(0.0, f64::max),
        image_diameter_bound: diameter,
        distance_to_basepoint: base_dist,
        checks,
    }
}

/// Paths of the artifacts a run writes.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub ledger: PathBuf,
    pub summary: PathBuf,
    pub checkpoint_stem: PathBuf,
}

pub fn write_artifacts(run: &ScenarioRun, dir: &Path) -> Result<Artifacts> {
    std::fs::create_dir_all(dir)?;
    let ledger = dir.join("ledger.csv");
    let mut w = BufWriter::new(File::create(&ledger)?);
    run.run.ledger.write_csv(&mut w)?;
    std::io::Write::flush(&mut w)?;
    let summary = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&run.summary).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&summary, text + "\n")?;
    let checkpoint_stem = dir.join("final");
    write_checkpoint(&checkpoint_stem, &run.problem.grid, &run.problem.target, &run.run.final_state)?;
    Ok(Artifacts {
        dir: dir.to_path_buf(),
        ledger,
        summary,
        checkpoint_stem,
    })
}

/// Run a scenario and write ledger, summary and final checkpoint.
pub fn run_scenario(config: &RunConfig) -> Result<(ScenarioRun, Artifacts)> {
    let run = execute(config)?;
    let art = write_artifacts(&run, &config.output_dir())?;
    Ok((run, art))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub kind: String,
    /// dt or h per level
    pub parameter: Vec<f64>,
    pub metric_name: String,
    pub metric: Vec<f64>,
    pub fitted_order: f64,
}

fn run_levels(configs: Vec<RunConfig>) -> Result<Vec<ScenarioRun>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || execute(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numerical("sweep worker panicked".into()))))
            .collect()
    })
}

/// Halve dt `levels - 1` times from the CFL bound and fit the order of the
/// energy identity residual.
pub fn dt_sweep(config: &RunConfig, levels: usize) -> Result<SweepReport> {
    let problem = build_problem(config)?;
    let base = config.dt.unwrap_or_else(|| problem.ops.cfl_dt(config.cfl_safety));
    let dts: Vec<f64> = (0..levels).map(|l| base / 2f64.powi(l as i32)).collect();
    let configs = dts
        .iter()
        .map(|dt| RunConfig {
            dt: Some(*dt),
            stride: 1,
            ..config.clone()
        })
        .collect();
    let runs = run_levels(configs)?;
    let metric: Vec<f64> = runs
        .iter()
        .map(|r| energy_identity_residual(r.ledger()).map_or(f64::NAN, |x| x.0))
        .collect();
    Ok(SweepReport {
        kind: "dt".into(),
        fitted_order: fitted_order(&dts, &metric),
        parameter: dts,
        metric_name: "energy_identity_residual".into(),
        metric,
    })
}

/// Dyadic grid refinement of a Heisenberg scenario: successive differences of
/// E_G at t_max, fitted against h.
pub fn grid_sweep(config: &RunConfig, sizes: &[usize]) -> Result<SweepReport> {
    let model = config.group_model()?;
    let configs: Vec<RunConfig> = sizes
        .iter()
        .map(|n| {
            let grid = match model.lattice {
                crate::model::LatticeKind::Heisenberg => Grid::heisenberg(*n),
                crate::model::LatticeKind::Standard => Grid::new(*n, *n, *n),
            }?;
            Ok(RunConfig {
                grid,
                dt: None,
                ..config.clone()
            })
        })
        .collect::<Result<_>>()?;
    let runs = run_levels(configs)?;
    let energies: Vec<f64> = runs.iter().map(|r| r.ledger().last().report.e_g).collect();
    let h: Vec<f64> = sizes.iter().map(|n| 1.0 / *n as f64).collect();
    let diffs: Vec<f64> = energies.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    Ok(SweepReport {
        kind: "grid".into(),
        fitted_order: if diffs.len() >= 2 { fitted_order(&h[..diffs.len()], &diffs) } else { f64::NAN },
        parameter: h,
        metric_name: "E_G(t_max)".into(),
        metric: energies,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelCheckReport {
    pub kernel: KernelReport,
    /// (t, max_x int_0^t int |grad_x K|) for the sampled times
    pub gradient_mass: Vec<(f64, f64)>,
    /// log-log slope of the gradient mass against t
    pub gradient_mass_exponent: f64,
}

pub fn kernel_check(model: &GroupModel, grid: &Grid, times: &[f64], cap: usize) -> Result<KernelCheckReport> {
    let ops = Operators::assemble(model, grid)?;
    let spec = spectral_decompose(&ops.laplacian, grid, cap)?;
    let kernel = kernel_checks(&spec, times)?;
    let rows = z_slice_rows(grid);
    let mut gradient_mass = Vec::new();
    for &t in times {
        if t > 0.0 {
            gradient_mass.push((t, kernel_gradient_mass(&spec, &ops, t, &rows, 16)?));
        }
    }
    let ts: Vec<f64> = gradient_mass.iter().map(|x| x.0).collect();
    let ms: Vec<f64> = gradient_mass.iter().map(|x| x.1).collect();
    Ok(KernelCheckReport {
        kernel,
        gradient_mass_exponent: if ts.len() >= 2 { fitted_order(&ts, &ms) } else { f64::NAN },
        gradient_mass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PicardScenarioReport {
    pub grid: String,
    pub target: String,
    pub potential: String,
    pub picard: Vec<PicardReport>,
    /// largest sampled t with every ratio below 1
    pub contraction_threshold: Option<f64>,
    /// (dt, sup distance between the stepper and the Picard limit at t)
    pub stepper_comparison: Vec<(f64, f64)>,
}

/// Duhamel-Picard iteration at each t, optional cross-check against the
/// explicit stepper at the last t with dt = t / n for each n.
pub fn picard_scenario(config: &RunConfig, times: &[f64], q: usize, k_max: usize, compare_steps: &[usize]) -> Result<PicardScenarioReport> {
    let problem = build_problem(config)?;
    let ubar = build_initial(config, &problem)?;
    let spec = spectral_decompose(&problem.ops.laplacian, &problem.grid, DEFAULT_NODE_CAP)?;
    let mut reports = Vec::new();
    let mut last = None;
    for &t in times {
        let st = picard_run(&problem, &spec, &ubar, t, q, k_max)?;
        reports.push(st.report.clone());
        last = Some(st);
    }
    let contraction_threshold = reports.iter().filter(|r| r.contracting).map(|r| r.t).fold(None, |m: Option<f64>, t| {
        Some(m.map_or(t, |v| v.max(t)))
    });
    let mut stepper_comparison = Vec::new();
    if let Some(st) = last {
        let t = st.report.t;
        let limit = st.final_map();
        let tubular = MapState {
            representation: match problem.target {
                Target::Sphere(_) => Representation::ExtrinsicTubular,
                _ => ubar.representation,
            },
            ..ubar.clone()
        };
        let scheme = match problem.target {
            Target::Sphere(_) => Scheme::TubularEuler,
            _ => Scheme::ProjectedEuler,
        };
        let cfl = problem.ops.cfl_dt(1.0);
        for &n in compare_steps {
            let dt = t / n as f64;
            if dt > cfl {
                return Err(Error::Config(vec![format!("picard comparison with {n} steps exceeds the CFL bound")]));
            }
            let flow = FlowConfig {
                dt,
                t_max: t,
                stop_tolerance: 1e-300,
                scheme,
                cfl_safety: 1.0,
                stride: n,
                ..FlowConfig::default()
            };
            let run = run_flow(&problem, &tubular, &flow)?;
            if let Outcome::Aborted { reason } = run.outcome() {
                return Err(Error::Numerical(format!("stepper aborted during the picard comparison: {reason}")));
            }
            stepper_comparison.push((dt, run.final_state.sup_distance(limit)));
        }
    }
    Ok(PicardScenarioReport {
        grid: problem.grid.to_string(),
        target: problem.target.name().into(),
        potential: problem.potential.name().into(),
        picard: reports,
        contraction_threshold,
        stepper_comparison,
    })
}

/// Directional derivative of E_G at u along v by Richardson extrapolation of
/// central differences, and the predicted value -<tau(u), v>.
#[derive(Clone, Debug, Serialize)]
pub struct FirstVariation {
    pub directional: f64,
    pub predicted: f64,
    pub relative_error: f64,
}

pub fn first_variation(problem: &FlowProblem, u: &MapState, v: &[crate::operators::ScalarField], s: f64) -> Result<FirstVariation> {
    let tau = problem.tension(u)?;
    let predicted = -problem.l2_inner(u, &tau, v);
    let energy = |h: f64| -> Result<f64> {
        let mut w = u.clone();
        for (c, d) in w.components.iter_mut().zip(v) {
            c.axpy(h, d);
        }
        if let Target::Sphere(sph) = &problem.target {
            for p in 0..w.nodes() {
                let q = sph.project(&w.point(p))?;
                for (c, val) in w.components.iter_mut().zip(q) {
                    c.0[p] = val;
                }
            }
        }
        Ok(crate::diagnostics::energy_g(problem, &w))
    };
    let central = |h: f64| -> Result<f64> { Ok((energy(h)? - energy(-h)?) / (2.0 * h)) };
    let d1 = central(s)?;
    let d2 = central(s / 2.0)?;
    let directional = (4.0 * d2 - d1) / 3.0;
    Ok(FirstVariation {
        directional,
        predicted,
        relative_error: (directional - predicted).abs() / predicted.abs().max(1e-300),
    })
}

/// Potential description for reports.
pub fn potential_label(p: &Potential) -> String {
    match *p {
        Potential::Zero => "zero".into(),
        Potential::Cosine { eps, axis } => format!("cosine eps={eps} axis={axis}"),
        Potential::Height { eps, axis } => format!("height eps={eps} axis={axis}"),
        Potential::RadialQuadratic { k } => format!("radial-quadratic k={k}"),
        Potential::RhoSquared { c } => format!("rho-squared c={c}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn small(preset: &str, extra: &str) -> RunConfig {
        parse_config(&format!("preset = \"{preset}\"\nN_x = 4\nN_y = 4\nN_z = 16\n{extra}")).unwrap()
    }

    #[test]
    fn eta_threshold_for_heisenberg() {
        let r = eta_report(&GroupModel::heisenberg(), &Grid::heisenberg(4).unwrap(), 8).unwrap();
        assert_eq!((r.step, r.eta_min, r.threshold), (Some(2), 1.0, 0.5));
        let d = eta_report(&GroupModel::torus_degenerate(), &Grid::new(4, 4, 4).unwrap(), 8).unwrap();
        assert_eq!((d.step, d.eta_min), (None, 0.0));
    }

    #[test]
    fn threshold_line_reports_both_sides() {
        let c = small("torus-eells-sampson", "");
        let p = prepare(&c).unwrap();
        let line = threshold_line(&p.hypotheses);
        assert!(line.contains("threshold eta_min/2 = 0.5") && line.ends_with("pass"), "{line}");
        let c = small("torus-above-threshold", "");
        assert!(threshold_line(&prepare(&c).unwrap().hypotheses).ends_with("fail"));
    }

    #[test]
    fn zero_budget_run_writes_artifacts() {
        let dir = std::env::temp_dir().join(format!("subflow-scn-{}", std::process::id()));
        let c = small("hyperbolic-decay", &format!("t_max = 0.0\nout = {:?}\n", dir.display().to_string()));
        let (run, art) = run_scenario(&c).unwrap();
        assert_eq!(run.exit_code(), 2);
        let csv = std::fs::read_to_string(&art.ledger).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("t,E_H,E_V,E_P,E_G,sup_e,sup_tau,defect"));
        let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&art.summary).unwrap()).unwrap();
        assert_eq!(summary["outcome"], "budget-exhausted");
        // the checkpoint restarts the same map
        let c2 = small("hyperbolic-decay", &format!("initial = \"checkpoint\"\ncheckpoint = {:?}\n", art.checkpoint_stem.display().to_string()));
        let p = build_problem(&c2).unwrap();
        assert_eq!(build_initial(&c2, &p).unwrap().components, run.run.final_state.components);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn first_variation_matches_on_a_small_grid() {
        let c = small("torus-eells-sampson", "");
        let p = build_problem(&c).unwrap();
        let u = build_initial(&c, &p).unwrap();
        let v: Vec<_> = (0..2)
            .map(|a| crate::operators::ScalarField::from_fn(&p.grid, |q| (2.0 * std::f64::consts::PI * (q[0] + a as f64 * q[1])).sin()))
            .collect();
        let fv = first_variation(&p, &u, &v, 1e-3).unwrap();
        assert!(fv.relative_error < 1e-6, "{fv:?}");
    }
}
