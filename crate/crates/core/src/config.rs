//! Run configuration: flat TOML keys, documented defaults, scenario presets.
//!
//! Keys (all optional unless noted):
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `preset` | start from a named preset, other keys override it | none |
//! | `model` | `heisenberg` or `torus-degenerate` | `heisenberg` |
//! | `N_x`, `N_y`, `N_z` | node counts | 12, 12, 144 |
//! | `target` | `torus`, `sphere` or `hyperbolic` | `torus` |
//! | `K` | torus dimension or sphere ambient dimension | 2 (torus), 3 (sphere) |
//! | `potential` | `zero`, `cosine`, `height`, `radial-quadratic`, `rho-squared` | `zero` |
//! | `eps`, `axis` | cosine and height parameters | 0.01, 0 |
//! | `k` | radial-quadratic coefficient | 1.0 |
//! | `c` | rho-squared decay constant, must be positive | 1.0 |
//! | `initial` | `torus-perturbed`, `random`, `constant`, `checkpoint` | by target |
//! | `amplitude` | perturbation size | 0.1 (torus), 0.5 (sphere), 1.0 (disk) |
//! | `winding` | K rows of 3 integers | identity rows |
//! | `point` | constant map value | none |
//! | `checkpoint` | checkpoint stem for `initial = "checkpoint"` | none |
//! | `dt` | time step | CFL bound |
//! | `t_max` | time budget | 20.0 |
//! | `stop_tolerance` | convergence threshold on sup\|tau\| | 1e-6 |
//! | `scheme` | `projected-euler` or `tubular-euler` | `projected-euler` |
//! | `cfl_safety` | fraction of the stability bound | 0.5 |
//! | `stride` | ledger record stride | 1 |
//! | `seed` | seed for every random choice | 0 |
//! | `out` | output directory | `$SUBFLOW_OUT_ROOT/<name>` |

use std::path::PathBuf;

use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, Scheme, Winding};
use crate::initial::InitialSpec;
use crate::model::{Grid, GroupModel, LatticeKind};
use crate::target::{Potential, Target};

pub const OUT_ROOT_ENV: &str = "SUBFLOW_OUT_ROOT";

const KEYS: &[&str] = &[
    "preset",
    "model",
    "N_x",
    "N_y",
    "N_z",
    "target",
    "K",
    "potential",
    "eps",
    "axis",
    "k",
    "c",
    "initial",
    "amplitude",
    "winding",
    "point",
    "checkpoint",
    "dt",
    "t_max",
    "stop_tolerance",
    "scheme",
    "cfl_safety",
    "stride",
    "seed",
    "out",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum InitialSource {
    Generated(InitialSpec),
    Checkpoint(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub model: String,
    pub grid: Grid,
    pub target: Target,
    pub potential: Potential,
    pub initial: InitialSource,
    /// None means the CFL bound at `cfl_safety`.
    pub dt: Option<f64>,
    pub t_max: f64,
    pub stop_tolerance: f64,
    pub scheme: Scheme,
    pub cfl_safety: f64,
    pub stride: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn group_model(&self) -> Result<GroupModel> {
        GroupModel::by_name(&self.model)
    }

    pub fn name(&self) -> String {
        self.preset.clone().unwrap_or_else(|| "run".into())
    }

    /// Flow configuration with dt resolved against the CFL bound.
    pub fn flow_config(&self, cfl_dt: f64) -> FlowConfig {
        FlowConfig {
            dt: self.dt.unwrap_or(cfl_dt),
            t_max: self.t_max,
            stop_tolerance: self.stop_tolerance,
            scheme: self.scheme,
            cfl_safety: self.cfl_safety,
            stride: self.stride,
            ..FlowConfig::default()
        }
    }

    /// Output directory: `out`, else `$SUBFLOW_OUT_ROOT/<name>`, else `subflow-out/<name>`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(o) = &self.out {
            return o.clone();
        }
        let root = std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("subflow-out"));
        root.join(self.name())
    }
}

/// A named scenario and the mathematical statement it exercises.
#[derive(Clone, Copy, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub exercises: &'static str,
    pub toml: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "torus-eells-sampson",
        exercises: "flat-torus target with Hess G <= lambda_G < eta_min/2: the flow converges to a subelliptic harmonic map with potential homotopic to the initial map",
        toml: r#"
model = "heisenberg"
target = "torus"
K = 2
potential = "cosine"
eps = 0.006332573977646111
axis = 0
initial = "torus-perturbed"
winding = [[1, 0, 0], [0, 1, 0]]
amplitude = 0.1
t_max = 20.0
stride = 20
"#,
    },
    Preset {
        name: "torus-harmonic",
        exercises: "G = 0 on a flat torus: energy identity dE/dt = -int|tau|^2, sup|du/dt| non-increasing, vertical energy non-increasing on a tense foliation",
        toml: r#"
model = "heisenberg"
target = "torus"
K = 2
potential = "zero"
initial = "torus-perturbed"
winding = [[1, 0, 0], [0, 1, 0]]
amplitude = 0.1
t_max = 20.0
stride = 20
"#,
    },
    Preset {
        name: "torus-above-threshold",
        exercises: "lambda_G above eta_min/2: the convergence hypothesis fails and is reported; the run shows what happens without the guarantee",
        toml: r#"
model = "heisenberg"
target = "torus"
K = 2
potential = "cosine"
eps = 0.018997721932938333
axis = 0
initial = "torus-perturbed"
winding = [[1, 0, 0], [0, 1, 0]]
amplitude = 0.1
t_max = 20.0
stride = 20
"#,
    },
    Preset {
        name: "hyperbolic-decay",
        exercises: "hyperbolic target with Hess G <= -C (1 + rho)^-1: phi(t) decays exponentially and the limit map is a constant",
        toml: r#"
model = "heisenberg"
target = "hyperbolic"
potential = "rho-squared"
c = 1.0
initial = "random"
amplitude = 1.0
t_max = 30.0
stride = 20
"#,
    },
    Preset {
        name: "sphere-tubular",
        exercises: "tubular flow without reprojection: the normal defect int|rho(u)|^2 is non-increasing (sphere target, outside the convergence theory)",
        toml: r#"
model = "heisenberg"
target = "sphere"
K = 3
potential = "zero"
initial = "random"
amplitude = 0.4
scheme = "tubular-euler"
cfl_safety = 0.0078125
t_max = 0.003
stop_tolerance = 1e-12
"#,
    },
    Preset {
        name: "sphere-picard",
        exercises: "Duhamel-Picard iteration for short time: successive iterates contract in C^1_H (sphere target, outside the convergence theory)",
        toml: r#"
model = "heisenberg"
N_x = 6
N_y = 6
N_z = 36
target = "sphere"
K = 3
potential = "height"
eps = 0.5
axis = 2
initial = "random"
amplitude = 0.5
t_max = 0.005
"#,
    },
];

pub fn preset(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::Config(vec![format!("unknown preset `{name}` (see --list-presets)")]))
}

/// `--list-presets` text: one block per preset.
pub fn preset_listing() -> String {
    let mut s = String::new();
    for p in PRESETS {
        s.push_str(&format!("{}\n    {}\n", p.name, p.exercises));
    }
    s
}

pub fn parse_table(text: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| Error::Config(vec![format!("malformed config: {e}")]))
}

/// Parse and validate a config text; every violation is reported.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    config_from_table(parse_table(text)?)
}

/// Validate a key table, expanding `preset` first (explicit keys win).
pub fn config_from_table(table: Table) -> Result<RunConfig> {
    let table = match table.get("preset") {
        Some(Value::String(name)) => {
            let mut base = parse_table(preset(name)?.toml)?;
            base.insert("preset".into(), Value::String(name.clone()));
            // overriding a choice drops the preset's parameters for it
            for (choice, params) in [
                ("initial", &["amplitude", "winding", "point", "checkpoint"][..]),
                ("potential", &["eps", "axis", "k", "c"][..]),
            ] {
                if table.get(choice).is_some_and(|v| base.get(choice) != Some(v)) {
                    for k in params {
                        base.remove(*k);
                    }
                }
            }
            for (k, v) in table {
                base.insert(k, v);
            }
            base
        }
        Some(v) => return Err(Error::Config(vec![format!("key `preset` must be a string, got {}", v.type_str())])),
        None => table,
    };
    Parser::new(&table).run()
}

struct Parser<'a> {
    table: &'a Table,
    errs: Vec<String>,
}

impl<'a> Parser<'a> {
    fn new(table: &'a Table) -> Self {
        Parser { table, errs: Vec::new() }
    }

    fn has(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.table.get(key)? {
            Value::String(s) => Some(s.clone()),
            v => {
                self.errs.push(format!("key `{key}` must be a string, got {}", v.type_str()));
                None
            }
        }
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        match self.table.get(key)? {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            v => {
                self.errs.push(format!("key `{key}` must be a number, got {}", v.type_str()));
                None
            }
        }
    }

    fn int(&mut self, key: &str) -> Option<i64> {
        match self.table.get(key)? {
            Value::Integer(i) => Some(*i),
            v => {
                self.errs.push(format!("key `{key}` must be an integer, got {}", v.type_str()));
                None
            }
        }
    }

    fn count(&mut self, key: &str, default: usize, min: usize) -> usize {
        match self.int(key) {
            Some(i) if i >= min as i64 => i as usize,
            Some(i) => {
                self.errs.push(format!("key `{key}` = {i} must be at least {min}"));
                default
            }
            None => default,
        }
    }

    fn winding(&mut self, key: &str) -> Option<Winding> {
        let v = self.table.get(key)?;
        let rows = match v.as_array() {
            Some(r) => r,
            None => {
                self.errs.push(format!("key `{key}` must be an array of integer rows"));
                return None;
            }
        };
        let mut out = Vec::new();
        for r in rows {
            let ints: Option<Vec<i64>> = r.as_array().map(|a| a.iter().map(|x| x.as_integer()).collect::<Option<Vec<_>>>()).flatten();
            match ints {
                Some(a) if a.len() == 3 => out.push([a[0], a[1], a[2]]),
                _ => {
                    self.errs.push(format!("key `{key}`: each row must hold 3 integers"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn floats(&mut self, key: &str) -> Option<Vec<f64>> {
        let v = self.table.get(key)?;
        let vals = v
            .as_array()
            .map(|a| a.iter().map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64))).collect::<Option<Vec<_>>>())
            .flatten();
        if vals.is_none() {
            self.errs.push(format!("key `{key}` must be an array of numbers"));
        }
        vals
    }

    fn unused(&mut self, keys: &[&str], why: &str) {
        for k in keys {
            if self.has(k) {
                self.errs.push(format!("key `{k}` is not used {why}"));
            }
        }
    }

    fn run(mut self) -> Result<RunConfig> {
        for k in self.table.keys() {
            if !KEYS.contains(&k.as_str()) {
                self.errs.push(format!("unknown key `{k}`"));
            }
        }
        let preset = self.string("preset");
        let model = self.string("model").unwrap_or_else(|| "heisenberg".into());
        let group = match GroupModel::by_name(&model) {
            Ok(m) => Some(m),
            Err(_) => {
                self.errs.push(format!("key `model`: unknown model `{model}` (heisenberg, torus-degenerate)"));
                None
            }
        };
        let nx = self.count("N_x", 12, 2);
        let ny = self.count("N_y", 12, 2);
        let nz = self.count("N_z", 144, 2);
        let mut grid_ok = true;
        if nz % ny != 0 {
            self.errs.push(format!("N_z = {nz} is not divisible by N_y = {ny} (keys `N_y`, `N_z`)"));
            grid_ok = false;
        }
        let grid = Grid::new(nx, ny, nz).ok();
        if let (Some(g), Some(m), true) = (grid, &group, grid_ok) {
            if m.lattice == LatticeKind::Heisenberg && nz != nx * ny {
                self.errs.push(format!(
                    "N_z = {nz} must equal N_x * N_y = {} on the heisenberg lattice (keys `N_x`, `N_y`, `N_z`)",
                    nx * ny
                ));
            } else if let Err(e) = m.check_grid(&g) {
                self.errs.push(format!("keys `N_x`, `N_y`, `N_z`: {e}"));
            }
        }

        let target_name = self.string("target").unwrap_or_else(|| "torus".into());
        let target = match target_name.as_str() {
            "torus" => Some(Target::torus(self.count("K", 2, 1))),
            "sphere" => Some(Target::sphere(self.count("K", 3, 2))),
            "hyperbolic" => {
                if let Some(k) = self.int("K") {
                    if k != 2 {
                        self.errs.push(format!("key `K` = {k}: the hyperbolic target is the 2-dimensional disk"));
                    }
                }
                Some(Target::hyperbolic())
            }
            other => {
                self.errs.push(format!("key `target`: unknown target `{other}` (torus, sphere, hyperbolic)"));
                None
            }
        };

        let pot_name = self.string("potential").unwrap_or_else(|| "zero".into());
        let axis = self.count("axis", 0, 0);
        let potential = match pot_name.as_str() {
            "zero" => {
                self.unused(&["eps", "axis", "k", "c"], "by potential zero");
                Some(Potential::Zero)
            }
            "cosine" => {
                self.unused(&["k", "c"], "by potential cosine");
                Some(Potential::Cosine {
                    eps: self.float("eps").unwrap_or(0.01),
                    axis,
                })
            }
            "height" => {
                self.unused(&["k", "c"], "by potential height");
                Some(Potential::Height {
                    eps: self.float("eps").unwrap_or(0.01),
                    axis,
                })
            }
            "radial-quadratic" => {
                self.unused(&["eps", "axis", "c"], "by potential radial-quadratic");
                Some(Potential::RadialQuadratic {
                    k: self.float("k").unwrap_or(1.0),
                })
            }
            "rho-squared" => {
                self.unused(&["eps", "axis", "k"], "by potential rho-squared");
                let c = self.float("c").unwrap_or(1.0);
                if !(c > 0.0) {
                    self.errs.push(format!("key `c` = {c}: the decay condition needs c > 0"));
                }
                Some(Potential::RhoSquared { c })
            }
            other => {
                self.errs.push(format!(
                    "key `potential`: unknown potential `{other}` (zero, cosine, height, radial-quadratic, rho-squared)"
                ));
                None
            }
        };
        if let (Some(t), Some(p)) = (&target, &potential) {
            let c_ok = !matches!(p, Potential::RhoSquared { c } if !(*c > 0.0));
            if c_ok {
                if let Err(e) = p.check_target(t) {
                    self.errs.push(format!("keys `potential`, `target`: {e}"));
                }
            }
        }

        let initial = self.initial(&target, group.as_ref());

        let dt = self.float("dt");
        if let Some(d) = dt {
            if !(d > 0.0) {
                self.errs.push(format!("key `dt` = {d} must be positive"));
            }
        }
        let t_max = self.float("t_max").unwrap_or(20.0);
        if !(t_max >= 0.0) {
            self.errs.push(format!("key `t_max` = {t_max} must be non-negative"));
        }
        let stop_tolerance = self.float("stop_tolerance").unwrap_or(1e-6);
        if !(stop_tolerance > 0.0) {
            self.errs.push(format!("key `stop_tolerance` = {stop_tolerance} must be positive"));
        }
        let scheme = match self.string("scheme").as_deref() {
            None | Some("projected-euler") => Scheme::ProjectedEuler,
            Some("tubular-euler") => {
                if !matches!(target, Some(Target::Sphere(_))) {
                    self.errs.push("key `scheme` = \"tubular-euler\" needs `target` = \"sphere\"".into());
                }
                Scheme::TubularEuler
            }
            Some(other) => {
                self.errs.push(format!("key `scheme`: unknown scheme `{other}` (projected-euler, tubular-euler)"));
                Scheme::ProjectedEuler
            }
        };
        let cfl_safety = self.float("cfl_safety").unwrap_or(0.5);
        if !(cfl_safety > 0.0 && cfl_safety <= 1.0) {
            self.errs.push(format!("key `cfl_safety` = {cfl_safety} must lie in (0, 1]"));
        }
        let stride = self.count("stride", 1, 1);
        let seed = match self.int("seed") {
            Some(s) if s >= 0 => s as u64,
            Some(s) => {
                self.errs.push(format!("key `seed` = {s} must be non-negative"));
                0
            }
            None => 0,
        };
        let out = self.string("out").map(PathBuf::from);

        if !self.errs.is_empty() {
            return Err(Error::Config(self.errs));
        }
        Ok(RunConfig {
            preset,
            model,
            grid: grid.expect("validated"),
            target: target.expect("validated"),
            potential: potential.expect("validated"),
            initial: initial.expect("validated"),
            dt,
            t_max,
            stop_tolerance,
            scheme,
            cfl_safety,
            stride,
            seed,
            out,
        })
    }

    fn initial(&mut self, target: &Option<Target>, model: Option<&GroupModel>) -> Option<InitialSource> {
        let target = target.as_ref()?;
        let default = match target {
            Target::Torus(_) => "torus-perturbed",
            _ => "random",
        };
        let kind = self.string("initial").unwrap_or_else(|| default.into());
        let k = target.components();
        match kind.as_str() {
            "checkpoint" => {
                self.unused(&["amplitude", "winding", "point"], "by initial checkpoint");
                match self.string("checkpoint") {
                    Some(p) => Some(InitialSource::Checkpoint(PathBuf::from(p))),
                    None => {
                        self.errs.push("key `initial` = \"checkpoint\" needs key `checkpoint`".into());
                        None
                    }
                }
            }
            "constant" => {
                self.unused(&["amplitude", "winding", "checkpoint"], "by initial constant");
                let point = self.floats("point");
                match point {
                    Some(p) if p.len() == k => Some(InitialSource::Generated(InitialSpec::Constant { point: p })),
                    Some(p) => {
                        self.errs.push(format!("key `point` has {} entries, target needs {k}", p.len()));
                        None
                    }
                    None => {
                        if !self.has("point") {
                            self.errs.push("key `initial` = \"constant\" needs key `point`".into());
                        }
                        None
                    }
                }
            }
            "torus-perturbed" => {
                self.unused(&["point", "checkpoint"], "by initial torus-perturbed");
                if !matches!(target, Target::Torus(_)) {
                    self.errs.push("key `initial` = \"torus-perturbed\" needs `target` = \"torus\"".into());
                    return None;
                }
                let amplitude = self.float("amplitude").unwrap_or(0.1);
                let winding = match self.winding("winding") {
                    Some(w) => w,
                    None => (0..k)
                        .map(|a| {
                            let mut r = [0i64; 3];
                            if a < 2 {
                                r[a] = 1;
                            }
                            r
                        })
                        .collect(),
                };
                if winding.len() != k {
                    self.errs.push(format!("key `winding` has {} rows, key `K` = {k}", winding.len()));
                }
                if model.map(|m| m.lattice) == Some(LatticeKind::Heisenberg) && winding.iter().any(|r| r[2] != 0) {
                    self.errs.push("key `winding`: the third column must be 0 on the heisenberg lattice".into());
                }
                Some(InitialSource::Generated(InitialSpec::TorusPerturbed { winding, amplitude }))
            }
            "random" => {
                self.unused(&["point", "checkpoint", "winding"], "by initial random");
                let default_amp = match target {
                    Target::Torus(_) => 0.1,
                    Target::Sphere(_) => 0.5,
                    Target::Hyperbolic(_) => 1.0,
                };
                let amplitude = self.float("amplitude").unwrap_or(default_amp);
                if !(amplitude >= 0.0) {
                    self.errs.push(format!("key `amplitude` = {amplitude} must be non-negative"));
                }
                Some(InitialSource::Generated(InitialSpec::Random { amplitude }))
            }
            other => {
                self.errs.push(format!(
                    "key `initial`: unknown initial map `{other}` (torus-perturbed, random, constant, checkpoint)"
                ));
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(Error::Config(e)) => e,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("target = \"torus\"\nK = 2\n").unwrap();
        assert_eq!(c.grid, Grid::new(12, 12, 144).unwrap());
        assert_eq!(c.potential, Potential::Zero);
        assert_eq!(c.t_max, 20.0);
        assert_eq!(c.stop_tolerance, 1e-6);
        assert_eq!(c.cfl_safety, 0.5);
        assert_eq!(c.dt, None);
        assert_eq!(
            c.initial,
            InitialSource::Generated(InitialSpec::TorusPerturbed {
                winding: vec![[1, 0, 0], [0, 1, 0]],
                amplitude: 0.1
            })
        );
    }

    #[test]
    fn divisibility_error_names_both_keys() {
        let e = errors("N_y = 8\nN_z = 12\n");
        assert!(e.iter().any(|m| m.contains("`N_y`") && m.contains("`N_z`")), "{e:?}");
    }

    #[test]
    fn rho_squared_needs_positive_c() {
        let e = errors("target = \"hyperbolic\"\npotential = \"rho-squared\"\nc = 0.0\n");
        assert!(e.iter().any(|m| m.contains("`c`")), "{e:?}");
        assert!(errors("target = \"hyperbolic\"\npotential = \"rho-squared\"\nc = -1\n").len() == 1);
    }

    #[test]
    fn all_violations_are_reported() {
        let e = errors("colour = 1\nN_y = 8\nN_z = 12\ncfl_safety = 2.0\npotential = \"cosine\"\nc = 1.0\n");
        assert!(e.len() >= 4, "{e:?}");
        assert!(e.iter().any(|m| m.contains("`colour`")));
        assert!(e.iter().any(|m| m.contains("`cfl_safety`")));
        assert!(e.iter().any(|m| m.contains("`c` is not used")));
    }

    #[test]
    fn presets_parse_and_overrides_win() {
        for p in PRESETS {
            let c = parse_config(&format!("preset = \"{}\"", p.name)).unwrap();
            assert_eq!(c.preset.as_deref(), Some(p.name));
        }
        let c = parse_config("preset = \"torus-eells-sampson\"\nt_max = 0.0\n").unwrap();
        assert_eq!(c.t_max, 0.0);
        assert!(parse_config("preset = \"nope\"").is_err());
        assert!(preset_listing().lines().count() == 2 * PRESETS.len());
    }

    #[test]
    fn eells_sampson_preset_sits_below_threshold() {
        let c = parse_config("preset = \"torus-eells-sampson\"").unwrap();
        let lam = c.potential.hessian_bound_exact();
        assert!((lam - 0.25).abs() < 1e-12);
        let c = parse_config("preset = \"torus-above-threshold\"").unwrap();
        assert!((c.potential.hessian_bound_exact() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn heisenberg_grid_rule_is_enforced() {
        let e = errors("N_x = 8\nN_y = 8\nN_z = 8\n");
        assert!(e.iter().any(|m| m.contains("`N_x`") && m.contains("`N_z`")), "{e:?}");
        assert!(parse_config("model = \"torus-degenerate\"\nN_x = 8\nN_y = 8\nN_z = 8\n").is_ok());
    }

    #[test]
    fn overriding_a_preset_choice_drops_its_parameters() {
        let c = parse_config("preset = \"torus-eells-sampson\"\npotential = \"zero\"\n").unwrap();
        assert_eq!(c.potential, Potential::Zero);
        let c = parse_config("preset = \"hyperbolic-decay\"\ninitial = \"constant\"\npoint = [0.1, 0.0]\n").unwrap();
        assert!(matches!(c.initial, InitialSource::Generated(InitialSpec::Constant { .. })));
    }
}
