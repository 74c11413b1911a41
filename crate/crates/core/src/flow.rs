//! Tension field with potential and the explicit heat flow integrators.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{energies_with_tension, EnergyReport, LedgerEntry, TrajectoryLedger};
use crate::error::{Error, Result};
use crate::model::{Grid, GroupModel};
use crate::operators::{read_snapshot, write_snapshot, Operators, ScalarField};
use crate::target::{EmbeddedTarget, PoincareDisk, Potential, Target, ON_MANIFOLD_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    ExtrinsicAmbient,
    ExtrinsicTubular,
    IntrinsicChart,
}

impl Representation {
    pub fn tag(&self) -> &'static str {
        match self {
            Representation::ExtrinsicAmbient => "extrinsic-ambient",
            Representation::ExtrinsicTubular => "extrinsic-tubular",
            Representation::IntrinsicChart => "intrinsic-chart",
        }
    }
}

/// Rows of the winding matrix: the lift of component a changes by
/// winding[a][dir] under the lattice generator dir.
pub type Winding = Vec<[i64; 3]>;

#[derive(Clone, Debug, PartialEq)]
pub struct MapState {
    pub representation: Representation,
    pub components: Vec<ScalarField>,
    pub winding: Option<Winding>,
    pub t: f64,
}

impl MapState {
    pub fn new(representation: Representation, components: Vec<ScalarField>) -> Self {
        MapState {
            representation,
            components,
            winding: None,
            t: 0.0,
        }
    }

    pub fn with_winding(mut self, winding: Winding) -> Self {
        self.winding = Some(winding);
        self
    }

    pub fn nodes(&self) -> usize {
        self.components.first().map_or(0, |c| c.len())
    }

    pub fn point(&self, p: usize) -> Vec<f64> {
        self.components.iter().map(|c| c.0[p]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    /// Max over nodes of the Euclidean distance between component vectors.
    pub fn sup_distance(&self, other: &MapState) -> f64 {
        (0..self.nodes())
            .map(|p| {
                self.components
                    .iter()
                    .zip(&other.components)
                    .map(|(a, b)| (a.0[p] - b.0[p]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ProjectedEuler,
    TubularEuler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dt: f64,
    pub t_max: f64,
    pub stop_tolerance: f64,
    pub scheme: Scheme,
    pub cfl_safety: f64,
    /// Record every `stride` steps (the initial and final states are always recorded).
    pub stride: usize,
    pub max_halvings: u32,
    pub energy_tolerance: f64,
    /// Keep full state copies every this many recorded steps.
    pub snapshot_stride: Option<usize>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt: 0.0,
            t_max: 20.0,
            stop_tolerance: 1e-6,
            scheme: Scheme::ProjectedEuler,
            cfl_safety: 0.5,
            stride: 1,
            max_halvings: 10,
            energy_tolerance: 1e-10,
            snapshot_stride: None,
        }
    }
}

impl FlowConfig {
    /// Default configuration with dt at the CFL bound of the operators.
    pub fn for_operators(ops: &Operators) -> Self {
        let c = FlowConfig::default();
        FlowConfig {
            dt: ops.cfl_dt(c.cfl_safety),
            ..c
        }
    }

    pub fn validate(&self, ops: &Operators) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            errs.push(format!("cfl_safety = {} must lie in (0, 1]", self.cfl_safety));
        }
        let bound = ops.cfl_dt(self.cfl_safety);
        if !(self.dt > 0.0) {
            errs.push(format!("dt = {} must be positive", self.dt));
        } else if self.dt > bound * (1.0 + 1e-12) {
            errs.push(format!("dt = {} exceeds the CFL bound {bound:.6e}", self.dt));
        }
        if !(self.t_max >= 0.0) {
            errs.push(format!("t_max = {} must be non-negative", self.t_max));
        }
        if !(self.stop_tolerance > 0.0) {
            errs.push(format!("stop_tolerance = {} must be positive", self.stop_tolerance));
        }
        if self.stride == 0 {
            errs.push("stride must be at least 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Model, grid, assembled operators, target and potential of one flow.
#[derive(Clone, Debug)]
pub struct FlowProblem {
    pub model: GroupModel,
    pub grid: Grid,
    pub ops: Operators,
    pub target: Target,
    pub potential: Potential,
}

impl FlowProblem {
    pub fn new(model: GroupModel, grid: Grid, target: Target, potential: Potential) -> Result<Self> {
        potential.check_target(&target)?;
        let ops = Operators::assemble(&model, &grid)?;
        Ok(FlowProblem {
            model,
            grid,
            ops,
            target,
            potential,
        })
    }

    /// Check that a map is valid for its representation and this target.
    pub fn validate(&self, u: &MapState) -> Result<()> {
        if u.components.len() != self.target.components() {
            return Err(Error::Domain(format!(
                "map has {} components, target {} needs {}",
                u.components.len(),
                self.target.name(),
                self.target.components()
            )));
        }
        if u.components.iter().any(|c| c.len() != self.grid.len()) {
            return Err(Error::Domain("component length does not match the grid".into()));
        }
        if !u.is_finite() {
            return Err(Error::Numerical("map has non-finite values".into()));
        }
        match (&self.target, u.representation) {
            (Target::Torus(t), Representation::ExtrinsicAmbient) => {
                let w = u
                    .winding
                    .as_ref()
                    .ok_or_else(|| Error::Domain("torus maps need a winding matrix".into()))?;
                if w.len() != t.dim {
                    return Err(Error::Domain(format!("winding has {} rows, expected {}", w.len(), t.dim)));
                }
                if self.model.lattice == crate::model::LatticeKind::Heisenberg && w.iter().any(|r| r[2] != 0) {
                    return Err(Error::Domain(
                        "winding along the central generator must vanish on the heisenberg lattice".into(),
                    ));
                }
            }
            (Target::Torus(_), r) => {
                return Err(Error::Domain(format!("torus maps use lifts, not {}", r.tag())));
            }
            (Target::Sphere(s), Representation::ExtrinsicAmbient) => {
                let d = (0..u.nodes()).map(|p| s.distance(&u.point(p))).fold(0.0, f64::max);
                if d > ON_MANIFOLD_TOL {
                    return Err(Error::Domain(format!("map is {d:.3e} away from the sphere")));
                }
            }
            (Target::Sphere(s), Representation::ExtrinsicTubular) => {
                let d = (0..u.nodes()).map(|p| s.distance(&u.point(p))).fold(0.0, f64::max);
                if d >= s.tubular_radius() {
                    return Err(Error::Domain(format!("map leaves the tube (distance {d:.3e})")));
                }
            }
            (Target::Hyperbolic(disk), Representation::IntrinsicChart) => {
                if (0..u.nodes()).any(|p| !disk.in_chart([u.components[0].0[p], u.components[1].0[p]])) {
                    return Err(Error::Domain("map leaves the disk chart".into()));
                }
            }
            (t, r) => {
                return Err(Error::Domain(format!("representation {} does not fit target {}", r.tag(), t.name())));
            }
        }
        Ok(())
    }

    /// D_a applied to every component, with lift jumps for torus maps.
    pub fn derivative(&self, u: &MapState, a: usize) -> Vec<ScalarField> {
        let d = &self.ops.frames[a];
        u.components
            .iter()
            .enumerate()
            .map(|(c, f)| match &u.winding {
                Some(w) => d.apply_lift(f, &w[c]),
                None => d.apply(f),
            })
            .collect()
    }

    /// Delta_H of every component (affine on lifts).
    pub fn laplacian(&self, u: &MapState) -> Vec<ScalarField> {
        match &u.winding {
            None => u.components.iter().map(|f| self.ops.laplacian.apply(f)).collect(),
            Some(w) => u
                .components
                .iter()
                .enumerate()
                .map(|(c, f)| {
                    let mut acc = ScalarField::zeros(f.len());
                    for d in self.ops.horizontal() {
                        acc.axpy(-1.0, &d.op.apply_transpose(&d.apply_lift(f, &w[c])));
                    }
                    acc
                })
                .collect(),
        }
    }

    /// Tension field with potential, in the component layout of u.
    pub fn tension(&self, u: &MapState) -> Result<Vec<ScalarField>> {
        self.validate(u)?;
        Ok(self.tension_unchecked(u))
    }

    fn tension_unchecked(&self, u: &MapState) -> Vec<ScalarField> {
        let n = u.nodes();
        match &self.target {
            Target::Torus(_) => {
                let mut tau = self.laplacian(u);
                if !self.potential.is_zero() {
                    for p in 0..n {
                        let g = self.potential.gradient(&self.target, &u.point(p));
                        for (t, gc) in tau.iter_mut().zip(&g) {
                            t.0[p] += gc;
                        }
                    }
                }
                tau
            }
            Target::Sphere(s) => {
                let lap = self.laplacian(u);
                let proj = MapState {
                    components: {
                        let k = u.components.len();
                        let mut out = vec![ScalarField::zeros(n); k];
                        for p in 0..n {
                            let q = s.project_unchecked(&u.point(p));
                            for a in 0..k {
                                out[a].0[p] = q[a];
                            }
                        }
                        out
                    },
                    ..u.clone()
                };
                let lap_proj = self.laplacian(&proj);
                let mut tau: Vec<ScalarField> = lap.iter().zip(&lap_proj).map(|(a, b)| a.sub(b)).collect();
                for p in 0..n {
                    let y = u.point(p);
                    let mut w: Vec<f64> = lap.iter().map(|f| f.0[p]).collect();
                    if !self.potential.is_zero() {
                        for (wi, gi) in w.iter_mut().zip(self.potential.differential(&y)) {
                            *wi += gi;
                        }
                    }
                    let dp = s.project_differential(&y, &w);
                    for (t, v) in tau.iter_mut().zip(&dp) {
                        t.0[p] += v;
                    }
                }
                tau
            }
            Target::Hyperbolic(disk) => hyperbolic_tension(self, disk, u),
        }
    }

    /// Pointwise target-metric norm of a tangent field along u.
    pub fn pointwise_norm(&self, u: &MapState, v: &[ScalarField]) -> ScalarField {
        ScalarField(
            (0..u.nodes())
                .map(|p| {
                    let y = u.point(p);
                    let w: Vec<f64> = v.iter().map(|f| f.0[p]).collect();
                    self.target.norm_sq(&y, &w).sqrt()
                })
                .collect(),
        )
    }

    /// L^2 inner product of tangent fields along u in the target metric.
    pub fn l2_inner(&self, u: &MapState, v: &[ScalarField], w: &[ScalarField]) -> f64 {
        let s: f64 = (0..u.nodes())
            .map(|p| {
                let y = u.point(p);
                let a: Vec<f64> = v.iter().map(|f| f.0[p]).collect();
                let b: Vec<f64> = w.iter().map(|f| f.0[p]).collect();
                self.target.inner(&y, &a, &b)
            })
            .sum();
        s * self.grid.cell_volume()
    }

    /// One explicit step with a precomputed tension field.
    pub fn advance(&self, u: &MapState, tau: &[ScalarField], dt: f64, scheme: Scheme) -> Result<MapState> {
        let mut comps = u.components.clone();
        for (c, t) in comps.iter_mut().zip(tau) {
            c.axpy(dt, t);
        }
        let n = u.nodes();
        match (&self.target, scheme) {
            (Target::Sphere(s), Scheme::ProjectedEuler) => {
                for p in 0..n {
                    let y: Vec<f64> = comps.iter().map(|c| c.0[p]).collect();
                    let q = s.project(&y)?;
                    for (c, v) in comps.iter_mut().zip(q) {
                        c.0[p] = v;
                    }
                }
            }
            (Target::Sphere(s), Scheme::TubularEuler) => {
                let d = (0..n)
                    .map(|p| s.distance(&comps.iter().map(|c| c.0[p]).collect::<Vec<_>>()))
                    .fold(0.0, f64::max);
                if !(d < s.tubular_radius()) {
                    return Err(Error::TubeExit { step: 0, defect: d });
                }
            }
            (Target::Hyperbolic(disk), Scheme::ProjectedEuler) => {
                let r = (0..n)
                    .map(|p| (comps[0].0[p].powi(2) + comps[1].0[p].powi(2)).sqrt())
                    .fold(0.0, f64::max);
                if !disk.in_chart([r, 0.0]) {
                    return Err(Error::ChartExit { step: 0, radius: r });
                }
            }
            (Target::Torus(_), Scheme::ProjectedEuler) => {}
            (t, s) => {
                return Err(Error::Domain(format!("scheme {s:?} is not available for target {}", t.name())));
            }
        }
        let next = MapState {
            representation: u.representation,
            components: comps,
            winding: u.winding.clone(),
            t: u.t + dt,
        };
        if !next.is_finite() {
            return Err(Error::Numerical(format!("non-finite values at t = {}", next.t)));
        }
        Ok(next)
    }
}

fn hyperbolic_tension(problem: &FlowProblem, disk: &PoincareDisk, u: &MapState) -> Vec<ScalarField> {
    let n = u.nodes();
    let (w0, w1) = (&u.components[0].0, &u.components[1].0);
    let l2: Vec<f64> = (0..n).map(|p| disk.conformal_factor([w0[p], w1[p]]).powi(2)).collect();
    let mut acc = [ScalarField::zeros(n), ScalarField::zeros(n)];
    let mut grad_sq = vec![0.0; n];
    for d in problem.ops.horizontal() {
        for (c, a) in acc.iter_mut().enumerate() {
            let mut g = d.apply(&u.components[c]);
            for p in 0..n {
                grad_sq[p] += g.0[p] * g.0[p];
                g.0[p] *= l2[p];
            }
            a.axpy(1.0, &d.op.apply_transpose(&g));
        }
    }
    let mut tau = [ScalarField::zeros(n), ScalarField::zeros(n)];
    for p in 0..n {
        let w = [w0[p], w1[p]];
        let dl2 = disk.metric_derivative(w);
        let dg = problem.potential.differential(&w);
        for m in 0..2 {
            tau[m].0[p] = (-(acc[m].0[p] + 0.5 * dl2[m] * grad_sq[p]) + dg[m]) / l2[p];
        }
    }
    tau.to_vec()
}

/// Tension field of a map; see [`FlowProblem::tension`].
pub fn tension_field(problem: &FlowProblem, u: &MapState) -> Result<Vec<ScalarField>> {
    problem.tension(u)
}

/// One step of the configured scheme.
pub fn step(problem: &FlowProblem, u: &MapState, config: &FlowConfig) -> Result<MapState> {
    let tau = problem.tension(u)?;
    problem.advance(u, &tau, config.dt, config.scheme)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Outcome {
    Converged,
    BudgetExhausted,
    Aborted { reason: String },
}

impl Outcome {
    pub fn tag(&self) -> &'static str {
        match self {
            Outcome::Converged => "converged",
            Outcome::BudgetExhausted => "budget-exhausted",
            Outcome::Aborted { .. } => "aborted",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Converged => 0,
            Outcome::BudgetExhausted => 2,
            Outcome::Aborted { .. } => 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowRun {
    pub final_state: MapState,
    pub ledger: TrajectoryLedger,
    pub steps: usize,
    pub halvings: u32,
}

impl FlowRun {
    pub fn outcome(&self) -> &Outcome {
        &self.ledger.outcome
    }
}

/// Iterate steps until sup|tau| < stop_tolerance or t >= t_max.
pub fn run_flow(problem: &FlowProblem, initial: &MapState, config: &FlowConfig) -> Result<FlowRun> {
    config.validate(&problem.ops)?;
    problem.validate(initial)?;
    if config.scheme == Scheme::TubularEuler && initial.representation != Representation::ExtrinsicTubular {
        return Err(Error::Domain("tubular scheme needs an extrinsic-tubular map".into()));
    }
    if config.scheme == Scheme::ProjectedEuler && initial.representation == Representation::ExtrinsicTubular {
        return Err(Error::Domain("projected scheme needs on-target data".into()));
    }
    let mut ledger = TrajectoryLedger::new(config.clone());
    let mut u = initial.clone();
    let mut tau = problem.tension_unchecked(&u);
    let mut report = energies_with_tension(problem, &u, &tau);
    ledger.push(LedgerEntry {
        t: u.t,
        dt: 0.0,
        report: report.clone(),
        sup_ut_fd: f64::NAN,
    });
    if config.snapshot_stride.is_some() {
        ledger.snapshots.push(u.clone());
    }
    let mut dt = config.dt;
    let mut halvings = 0u32;
    let mut steps = 0usize;
    let t_end = initial.t + config.t_max;
    let outcome = loop {
        if report.sup_tau < config.stop_tolerance {
            break Outcome::Converged;
        }
        if u.t >= t_end - 1e-12 * t_end.max(1.0) {
            break Outcome::BudgetExhausted;
        }
        let h = dt.min(t_end - u.t);
        let next = match problem.advance(&u, &tau, h, config.scheme) {
            Ok(v) => v,
            Err(e) => break abort_outcome(e, steps + 1),
        };
        let next_tau = problem.tension_unchecked(&next);
        let next_report = energies_with_tension(problem, &next, &next_tau);
        if !next_report.is_finite() {
            break Outcome::Aborted {
                reason: format!("numerical blow-up at step {}", steps + 1),
            };
        }
        if config.scheme == Scheme::ProjectedEuler
            && next_report.e_g > report.e_g + config.energy_tolerance
            && halvings < config.max_halvings
        {
            dt *= 0.5;
            halvings += 1;
            continue;
        }
        let fd = next.sup_distance(&u) / h;
        u = next;
        tau = next_tau;
        report = next_report;
        steps += 1;
        let last = report.sup_tau < config.stop_tolerance || u.t >= t_end - 1e-12 * t_end.max(1.0);
        if steps % config.stride == 0 || last {
            ledger.push(LedgerEntry {
                t: u.t,
                dt: h,
                report: report.clone(),
                sup_ut_fd: fd,
            });
            if let Some(s) = config.snapshot_stride {
                if (ledger.entries.len() - 1) % s == 0 || last {
                    ledger.snapshots.push(u.clone());
                }
            }
        }
    };
    ledger.outcome = outcome;
    ledger.halvings = halvings;
    Ok(FlowRun {
        final_state: u,
        ledger,
        steps,
        halvings,
    })
}

fn abort_outcome(e: Error, step: usize) -> Outcome {
    let reason = match e {
        Error::TubeExit { defect, .. } => Error::TubeExit { step, defect }.to_string(),
        Error::ChartExit { radius, .. } => Error::ChartExit { step, radius }.to_string(),
        other => other.to_string(),
    };
    Outcome::Aborted { reason }
}

/// True iff the two torus maps have the same winding matrix.
pub fn homotopy_check(a: &MapState, b: &MapState) -> Result<bool> {
    match (&a.winding, &b.winding) {
        (Some(x), Some(y)) => Ok(x == y),
        _ => Err(Error::Domain("homotopy check is only supported for torus lifts".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub t: f64,
    pub representation: Representation,
    pub target: Target,
    pub components: usize,
    pub winding: Option<Winding>,
    pub grid: Grid,
}

fn checkpoint_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

/// Write `<stem>.bin` (one field record per component) and `<stem>.json`.
pub fn write_checkpoint(stem: &Path, grid: &Grid, target: &Target, u: &MapState) -> Result<()> {
    let (bin, json) = checkpoint_paths(stem);
    let mut w = BufWriter::new(File::create(&bin)?);
    for c in &u.components {
        write_snapshot(&mut w, grid, c)?;
    }
    std::io::Write::flush(&mut w)?;
    let header = CheckpointHeader {
        t: u.t,
        representation: u.representation,
        target: *target,
        components: u.components.len(),
        winding: u.winding.clone(),
        grid: *grid,
    };
    let text = serde_json::to_string_pretty(&header).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(json, text + "\n")?;
    Ok(())
}

pub fn read_checkpoint(stem: &Path) -> Result<(CheckpointHeader, MapState)> {
    let (bin, json) = checkpoint_paths(stem);
    let text = std::fs::read_to_string(json)?;
    let header: CheckpointHeader = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    let mut r = BufReader::new(File::open(bin)?);
    let mut comps = Vec::with_capacity(header.components);
    for _ in 0..header.components {
        let (g, f) = read_snapshot(&mut r)?;
        if g != header.grid {
            return Err(Error::Format(format!("component grid {g} differs from header grid {}", header.grid)));
        }
        comps.push(f);
    }
    let state = MapState {
        representation: header.representation,
        components: comps,
        winding: header.winding.clone(),
        t: header.t,
    };
    Ok((header, state))
}

/// Energy report of a map (computes the tension field).
pub fn report(problem: &FlowProblem, u: &MapState) -> Result<EnergyReport> {
    let tau = problem.tension(u)?;
    Ok(energies_with_tension(problem, u, &tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatkernel::linear_lift;
    use std::f64::consts::PI;

    fn problem(target: Target, potential: Potential) -> FlowProblem {
        FlowProblem::new(GroupModel::heisenberg(), Grid::heisenberg(4).unwrap(), target, potential).unwrap()
    }

    fn sup_all(v: &[ScalarField]) -> f64 {
        v.iter().map(|f| f.sup()).fold(0.0, f64::max)
    }

    fn identity_lift(p: &FlowProblem) -> MapState {
        let w = vec![[1, 0, 0], [0, 1, 0]];
        MapState::new(Representation::ExtrinsicAmbient, linear_lift(&p.grid, p.model.lattice, &w)).with_winding(w)
    }

    #[test]
    fn constant_maps_have_zero_tension() {
        let n = Grid::heisenberg(4).unwrap().len();
        let cases = [
            (Target::torus(2), vec![0.3, 0.8], Representation::ExtrinsicAmbient),
            (Target::sphere(3), vec![0.0, 0.6, 0.8], Representation::ExtrinsicAmbient),
            (Target::hyperbolic(), vec![0.0, 0.0], Representation::IntrinsicChart),
        ];
        for (t, y, rep) in cases {
            let p = problem(t, Potential::Zero);
            let mut u = MapState::new(rep, y.iter().map(|v| ScalarField::constant(n, *v)).collect());
            if let Target::Torus(_) = t {
                u.winding = Some(vec![[0; 3]; 2]);
            }
            assert!(sup_all(&p.tension(&u).unwrap()) < 1e-14, "{}", t.name());
        }
    }

    #[test]
    fn identity_lift_is_harmonic_with_unit_energy() {
        let p = problem(Target::torus(2), Potential::Zero);
        let u = identity_lift(&p);
        assert!(sup_all(&p.tension(&u).unwrap()) < 1e-12);
        let r = report(&p, &u).unwrap();
        assert!((r.e_h - 1.0).abs() < 1e-12 && r.e_v.abs() < 1e-12);
        // with a potential the tension is exactly grad G
        let eps = 0.01;
        let q = problem(Target::torus(2), Potential::Cosine { eps, axis: 0 });
        let tau = q.tension(&u).unwrap();
        for i in 0..u.nodes() {
            let x = u.components[0].0[i];
            assert!((tau[0].0[i] + 2.0 * PI * eps * (2.0 * PI * x).sin()).abs() < 1e-12);
        }
        assert!(tau[1].sup() < 1e-12);
    }

    #[test]
    fn equator_map_is_harmonic() {
        let p = problem(Target::sphere(3), Potential::Zero);
        let g = p.grid;
        let u = MapState::new(
            Representation::ExtrinsicAmbient,
            vec![
                ScalarField::from_fn(&g, |q| (2.0 * PI * q[0]).cos()),
                ScalarField::from_fn(&g, |q| (2.0 * PI * q[0]).sin()),
                ScalarField::zeros(g.len()),
            ],
        );
        assert!(sup_all(&p.tension(&u).unwrap()) < 1e-10);
    }

    #[test]
    fn scaled_sphere_map_has_expected_normal_defect() {
        let p = problem(Target::sphere(3), Potential::Zero);
        let n = p.grid.len();
        let u = MapState::new(
            Representation::ExtrinsicTubular,
            vec![ScalarField::zeros(n), ScalarField::zeros(n), ScalarField::constant(n, 1.1)],
        );
        let d = crate::diagnostics::normal_defect(&p, &u).unwrap();
        assert!((d - 0.01).abs() < 1e-12);
        assert!(p.validate(&MapState { representation: Representation::ExtrinsicAmbient, ..u }).is_err());
    }

    #[test]
    fn zero_budget_records_one_entry() {
        let p = problem(Target::torus(2), Potential::Zero);
        let mut u = identity_lift(&p);
        u.components[0].0[3] += 0.05;
        let cfg = FlowConfig { t_max: 0.0, ..FlowConfig::for_operators(&p.ops) };
        let run = run_flow(&p, &u, &cfg).unwrap();
        assert_eq!(run.outcome(), &Outcome::BudgetExhausted);
        assert_eq!(run.ledger.entries.len(), 1);
        assert_eq!(run.steps, 0);
    }

    #[test]
    fn torus_flow_decreases_energy_and_keeps_winding() {
        let p = problem(Target::torus(2), Potential::Zero);
        let mut u = identity_lift(&p);
        for (i, v) in u.components[1].0.iter_mut().enumerate() {
            *v += 0.05 * ((i % 7) as f64 / 7.0 - 0.5);
        }
        let cfg = FlowConfig { t_max: 0.5, ..FlowConfig::for_operators(&p.ops) };
        let run = run_flow(&p, &u, &cfg).unwrap();
        assert!(homotopy_check(&u, &run.final_state).unwrap());
        let e: Vec<f64> = run.ledger.entries.iter().map(|e| e.report.e_g).collect();
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(e.last().unwrap() < &e[0]);
    }

    #[test]
    fn oversized_dt_is_rejected() {
        let p = problem(Target::torus(2), Potential::Zero);
        let cfg = FlowConfig { dt: 2.0 * p.ops.cfl_dt(1.0), ..FlowConfig::default() };
        assert!(matches!(run_flow(&p, &identity_lift(&p), &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn scheme_and_representation_must_agree() {
        let p = problem(Target::sphere(3), Potential::Zero);
        let n = p.grid.len();
        let u = MapState::new(
            Representation::ExtrinsicAmbient,
            vec![ScalarField::zeros(n), ScalarField::zeros(n), ScalarField::constant(n, 1.0)],
        );
        let cfg = FlowConfig { scheme: Scheme::TubularEuler, ..FlowConfig::for_operators(&p.ops) };
        assert!(run_flow(&p, &u, &cfg).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = problem(Target::torus(2), Potential::Zero);
        let mut u = identity_lift(&p);
        u.t = 0.25;
        let dir = std::env::temp_dir().join(format!("subflow-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let stem = dir.join("state");
        write_checkpoint(&stem, &p.grid, &p.target, &u).unwrap();
        let (h, v) = read_checkpoint(&stem).unwrap();
        assert_eq!(h.grid, p.grid);
        assert_eq!(v, u);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn homotopy_needs_lifts() {
        let n = 4;
        let a = MapState::new(Representation::IntrinsicChart, vec![ScalarField::zeros(n); 2]);
        assert!(homotopy_check(&a, &a).is_err());
        let b = a.clone().with_winding(vec![[1, 0, 0], [0, 1, 0]]);
        let c = a.with_winding(vec![[0, 1, 0], [1, 0, 0]]);
        assert!(!homotopy_check(&b, &c).unwrap());
    }
}
