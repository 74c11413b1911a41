//! Seeded initial maps: smooth random fields on the nilmanifold and maps
//! built from them for each target.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowProblem, MapState, Representation, Winding};
use crate::heatkernel::linear_lift;
use crate::model::{Grid, LatticeKind};
use crate::operators::{theta_probe, theta_probe_sin, ScalarField};
use crate::target::{PoincareDisk, Target};

/// Smooth periodic field with sup norm 1: low trigonometric modes in (x, y)
/// plus right translates of the theta function for z-dependence on the
/// Heisenberg lattice, plain trigonometric z-modes on the standard one.
pub fn random_smooth_field(grid: &Grid, lattice: LatticeKind, modes: i32, rng: &mut ChaCha8Rng) -> ScalarField {
    let mut terms: Vec<(f64, f64, i32, i32, i32)> = Vec::new();
    for kx in -modes..=modes {
        for ky in 0..=modes {
            if ky == 0 && kx <= 0 {
                continue;
            }
            let decay = 1.0 / (1.0 + (kx * kx + ky * ky) as f64);
            let a: f64 = rng.sample(rand_distr::StandardNormal);
            let b: f64 = rng.sample(rand_distr::StandardNormal);
            terms.push((a * decay, b * decay, kx, ky, 0));
        }
    }
    let mut shifts = Vec::new();
    match lattice {
        LatticeKind::Heisenberg => {
            for _ in 0..2 {
                let g: [f64; 3] = [rng.random(), rng.random(), rng.random()];
                let a: f64 = rng.sample(rand_distr::StandardNormal);
                let b: f64 = rng.sample(rand_distr::StandardNormal);
                shifts.push((g, 0.5 * a, 0.5 * b));
            }
        }
        LatticeKind::Standard => {
            for kz in 1..=modes.max(1) {
                let a: f64 = rng.sample(rand_distr::StandardNormal);
                let b: f64 = rng.sample(rand_distr::StandardNormal);
                let decay = 0.5 / (1.0 + (kz * kz) as f64);
                terms.push((a * decay, b * decay, 0, 0, kz));
            }
        }
    }
    let mut f = ScalarField::from_fn(grid, |p| {
        let mut v = 0.0;
        for &(a, b, kx, ky, kz) in &terms {
            let arg = 2.0 * PI * (kx as f64 * p[0] + ky as f64 * p[1] + kz as f64 * p[2]);
            v += a * arg.cos() + b * arg.sin();
        }
        for &(g, a, b) in &shifts {
            // right translation p * g, which commutes with the lattice action
            let q = [p[0] + g[0], p[1] + g[1], p[2] + g[2] + p[0] * g[1]];
            v += a * theta_probe(q) + b * theta_probe_sin(q);
        }
        v
    });
    let s = f.sup();
    if s > 0.0 {
        f.0.iter_mut().for_each(|v| *v /= s);
    }
    f
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialSpec {
    /// Constant map at a point of the representation.
    Constant { point: Vec<f64> },
    /// Linear lift with the given winding plus a random periodic perturbation.
    TorusPerturbed { winding: Winding, amplitude: f64 },
    /// Random smooth map: normalized perturbation of a point on the sphere,
    /// or a disk map of hyperbolic radius at most `amplitude`-scaled.
    Random { amplitude: f64 },
}

impl InitialSpec {
    pub fn name(&self) -> &'static str {
        match self {
            InitialSpec::Constant { .. } => "constant",
            InitialSpec::TorusPerturbed { .. } => "torus-perturbed",
            InitialSpec::Random { .. } => "random",
        }
    }
}

/// Build the initial map for a problem. All randomness comes from `seed`.
pub fn initial_map(problem: &FlowProblem, spec: &InitialSpec, seed: u64, tubular: bool) -> Result<MapState> {
    let grid = &problem.grid;
    let lattice = problem.model.lattice;
    let n = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = problem.target.components();
    let state = match (&problem.target, spec) {
        (_, InitialSpec::Constant { point }) => {
            if point.len() != k {
                return Err(Error::Domain(format!("constant point has {} entries, target needs {k}", point.len())));
            }
            let comps = point.iter().map(|v| ScalarField::constant(n, *v)).collect();
            let rep = representation_for(&problem.target, tubular);
            let mut s = MapState::new(rep, comps);
            if let Target::Torus(_) = problem.target {
                s.winding = Some(vec![[0; 3]; k]);
            }
            s
        }
        (Target::Torus(_), InitialSpec::TorusPerturbed { winding, amplitude }) => {
            if winding.len() != k {
                return Err(Error::Domain(format!("winding has {} rows, target needs {k}", winding.len())));
            }
            let mut comps = linear_lift(grid, lattice, winding);
            for c in &mut comps {
                c.axpy(*amplitude, &random_smooth_field(grid, lattice, 2, &mut rng));
            }
            MapState::new(Representation::ExtrinsicAmbient, comps).with_winding(winding.clone())
        }
        (Target::Torus(_), InitialSpec::Random { amplitude }) => {
            let comps = (0..k)
                .map(|_| {
                    let mut f = random_smooth_field(grid, lattice, 2, &mut rng);
                    f.0.iter_mut().for_each(|v| *v *= amplitude);
                    f
                })
                .collect();
            MapState::new(Representation::ExtrinsicAmbient, comps).with_winding(vec![[0; 3]; k])
        }
        (Target::Sphere(_), InitialSpec::Random { amplitude }) => {
            let mut comps: Vec<ScalarField> = (0..k)
                .map(|a| {
                    let mut f = random_smooth_field(grid, lattice, 2, &mut rng);
                    f.0.iter_mut().for_each(|v| *v *= amplitude);
                    if a == k - 1 {
                        f.0.iter_mut().for_each(|v| *v += 1.0);
                    }
                    f
                })
                .collect();
            for p in 0..n {
                let r = comps.iter().map(|c| c.0[p] * c.0[p]).sum::<f64>().sqrt();
                if r < 1e-6 {
                    return Err(Error::Domain("random sphere map degenerates; lower the amplitude".into()));
                }
                comps.iter_mut().for_each(|c| c.0[p] /= r);
            }
            MapState::new(representation_for(&problem.target, tubular), comps)
        }
        (Target::Hyperbolic(d), InitialSpec::Random { amplitude }) => {
            // hyperbolic radius at most `amplitude` at every node
            let f0 = random_smooth_field(grid, lattice, 2, &mut rng);
            let f1 = random_smooth_field(grid, lattice, 2, &mut rng);
            let mut comps = vec![ScalarField::zeros(n), ScalarField::zeros(n)];
            for p in 0..n {
                let v = [f0.0[p], f1.0[p]];
                let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
                let rho = amplitude * r / std::f64::consts::SQRT_2;
                let w = if r > 0.0 { d.point_at(rho, v[1].atan2(v[0])) } else { [0.0, 0.0] };
                comps[0].0[p] = w[0];
                comps[1].0[p] = w[1];
            }
            MapState::new(Representation::IntrinsicChart, comps)
        }
        (t, s) => {
            return Err(Error::Domain(format!("initial map {} is not available for target {}", s.name(), t.name())));
        }
    };
    problem.validate(&state)?;
    Ok(state)
}

fn representation_for(target: &Target, tubular: bool) -> Representation {
    match target {
        Target::Hyperbolic(_) => Representation::IntrinsicChart,
        Target::Sphere(_) if tubular => Representation::ExtrinsicTubular,
        _ => Representation::ExtrinsicAmbient,
    }
}

/// Largest hyperbolic distance of the map's values from the basepoint.
pub fn max_radius(u: &MapState) -> f64 {
    (0..u.nodes())
        .map(|p| PoincareDisk.rho([u.components[0].0[p], u.components[1].0[p]]))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GroupModel;
    use crate::target::Potential;

    #[test]
    fn random_field_is_periodic_smooth_and_seeded() {
        let g = Grid::heisenberg(6).unwrap();
        let a = random_smooth_field(&g, LatticeKind::Heisenberg, 2, &mut ChaCha8Rng::seed_from_u64(3));
        let b = random_smooth_field(&g, LatticeKind::Heisenberg, 2, &mut ChaCha8Rng::seed_from_u64(3));
        let c = random_smooth_field(&g, LatticeKind::Heisenberg, 2, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a.sup() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn right_translated_theta_respects_lattice() {
        let g = [0.3, 0.7, 0.1];
        let f = |p: [f64; 3]| theta_probe([p[0] + g[0], p[1] + g[1], p[2] + g[2] + p[0] * g[1]]);
        let p = [0.21, 0.43, 0.65];
        // left action of the generators (1,0,0) and (0,1,0)
        let x_shift = [p[0] + 1.0, p[1], p[2] + p[1]];
        let y_shift = [p[0], p[1] + 1.0, p[2]];
        assert!((f(p) - f(x_shift)).abs() < 1e-12);
        assert!((f(p) - f(y_shift)).abs() < 1e-12);
    }

    #[test]
    fn maps_are_valid_for_each_target() {
        let g = Grid::heisenberg(4).unwrap();
        let m = GroupModel::heisenberg();
        let torus = FlowProblem::new(m.clone(), g, Target::torus(2), Potential::Zero).unwrap();
        let spec = InitialSpec::TorusPerturbed {
            winding: vec![[1, 0, 0], [0, 1, 0]],
            amplitude: 0.1,
        };
        let u = initial_map(&torus, &spec, 1, false).unwrap();
        assert_eq!(u.winding.as_ref().unwrap()[0], [1, 0, 0]);
        let sphere = FlowProblem::new(m.clone(), g, Target::sphere(3), Potential::Zero).unwrap();
        let s = initial_map(&sphere, &InitialSpec::Random { amplitude: 0.5 }, 1, true).unwrap();
        assert_eq!(s.representation, Representation::ExtrinsicTubular);
        let hyp = FlowProblem::new(m, g, Target::hyperbolic(), Potential::RhoSquared { c: 1.0 }).unwrap();
        let h = initial_map(&hyp, &InitialSpec::Random { amplitude: 1.5 }, 1, false).unwrap();
        assert!(max_radius(&h) <= 1.5 + 1e-12);
        assert!(initial_map(&hyp, &spec, 1, false).is_err());
    }
}
