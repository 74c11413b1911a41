//! Target manifolds and potentials.
//!
//! Flat tori are handled through real lifts with integer winding data, round
//! spheres through the closest-point projection of their Euclidean embedding,
//! and the hyperbolic plane intrinsically in the Poincare disk chart.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "on the manifold" checks.
pub const ON_MANIFOLD_TOL: f64 = 1e-9;

/// First jet Pi^a_b (row a, column b) and second jet Pi^a_bc (flattened a*K*K + b*K + c).
#[derive(Clone, Debug)]
pub struct ProjectionJets {
    pub dim: usize,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl ProjectionJets {
    pub fn first(&self, a: usize, b: usize) -> f64 {
        self.first[a * self.dim + b]
    }

    pub fn second(&self, a: usize, b: usize, c: usize) -> f64 {
        self.second[(a * self.dim + b) * self.dim + c]
    }

    /// A(y)(Y, Y) = Pi^a_bc Y^b Y^c
    pub fn second_form(&self, v: &[f64]) -> Vec<f64> {
        let k = self.dim;
        (0..k)
            .map(|a| {
                let mut s = 0.0;
                for b in 0..k {
                    for c in 0..k {
                        s += self.second(a, b, c) * v[b] * v[c];
                    }
                }
                s
            })
            .collect()
    }
}

/// A target given as a submanifold of R^K with a closest-point projection.
pub trait EmbeddedTarget {
    fn ambient_dim(&self) -> usize;

    /// Largest distance to N at which the projection is used.
    fn tubular_radius(&self) -> f64;

    /// Distance from y to N.
    fn distance(&self, y: &[f64]) -> f64;

    fn project_unchecked(&self, y: &[f64]) -> Vec<f64>;

    /// Pi(y); errors outside the tubular neighbourhood.
    fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        let d = self.distance(y);
        if !(d < self.tubular_radius()) {
            return Err(Error::Domain(format!("point at distance {d} outside the tubular radius")));
        }
        Ok(self.project_unchecked(y))
    }

    /// dPi_y(w), valid anywhere in the tube.
    fn project_differential(&self, y: &[f64], w: &[f64]) -> Vec<f64>;

    /// Analytic jets anywhere in the tube.
    fn jets_at(&self, y: &[f64]) -> ProjectionJets;

    /// Analytic jets at a point of N.
    fn projection_jets(&self, y: &[f64]) -> Result<ProjectionJets> {
        let d = self.distance(y);
        if d > ON_MANIFOLD_TOL {
            return Err(Error::Domain(format!("point is {d:.3e} away from the target")));
        }
        Ok(self.jets_at(y))
    }
}

/// Flat torus R^K / Z^K, represented on lifts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatTorus {
    pub dim: usize,
}

impl EmbeddedTarget for FlatTorus {
    fn ambient_dim(&self) -> usize {
        self.dim
    }

    fn tubular_radius(&self) -> f64 {
        f64::INFINITY
    }

    fn distance(&self, _y: &[f64]) -> f64 {
        0.0
    }

    fn project_unchecked(&self, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }

    fn project_differential(&self, _y: &[f64], w: &[f64]) -> Vec<f64> {
        w.to_vec()
    }

    fn jets_at(&self, _y: &[f64]) -> ProjectionJets {
        let k = self.dim;
        let mut first = vec![0.0; k * k];
        for a in 0..k {
            first[a * k + a] = 1.0;
        }
        ProjectionJets {
            dim: k,
            first,
            second: vec![0.0; k * k * k],
        }
    }
}

/// Unit sphere S^{K-1} in R^K.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSphere {
    pub ambient_dim: usize,
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl EmbeddedTarget for RoundSphere {
    fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    fn tubular_radius(&self) -> f64 {
        1.0
    }

    fn distance(&self, y: &[f64]) -> f64 {
        (norm(y) - 1.0).abs()
    }

    fn project_unchecked(&self, y: &[f64]) -> Vec<f64> {
        let r = norm(y);
        y.iter().map(|v| v / r).collect()
    }

    fn project_differential(&self, y: &[f64], w: &[f64]) -> Vec<f64> {
        let r = norm(y);
        let s = dot(y, w) / (r * r);
        y.iter().zip(w).map(|(yi, wi)| (wi - s * yi) / r).collect()
    }

    fn jets_at(&self, y: &[f64]) -> ProjectionJets {
        let k = self.ambient_dim;
        let r = norm(y);
        let (r3, r5) = (r.powi(3), r.powi(5));
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut first = vec![0.0; k * k];
        let mut second = vec![0.0; k * k * k];
        for a in 0..k {
            for b in 0..k {
                first[a * k + b] = delta(a, b) / r - y[a] * y[b] / r3;
                for c in 0..k {
                    second[(a * k + b) * k + c] = -(delta(a, b) * y[c] + delta(a, c) * y[b] + delta(b, c) * y[a]) / r3
                        + 3.0 * y[a] * y[b] * y[c] / r5;
                }
            }
        }
        ProjectionJets { dim: k, first, second }
    }
}

/// Hyperbolic plane in the Poincare disk chart: h = lambda^2 delta with
/// lambda = 2 / (1 - |w|^2), basepoint at the origin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoincareDisk;

impl PoincareDisk {
    pub const DIM: usize = 2;
    /// Chart exit threshold on |w|.
    pub const CHART_LIMIT: f64 = 1.0 - 1e-9;

    pub fn conformal_factor(&self, w: [f64; 2]) -> f64 {
        2.0 / (1.0 - w[0] * w[0] - w[1] * w[1])
    }

    pub fn metric(&self, w: [f64; 2]) -> [[f64; 2]; 2] {
        let l2 = self.conformal_factor(w).powi(2);
        [[l2, 0.0], [0.0, l2]]
    }

    /// d_L h_JK = 2 lambda^2 d_L(log lambda) delta_JK; returns d_L(lambda^2).
    pub fn metric_derivative(&self, w: [f64; 2]) -> [f64; 2] {
        let s = 1.0 - w[0] * w[0] - w[1] * w[1];
        let c = 16.0 / (s * s * s);
        [c * w[0], c * w[1]]
    }

    /// Gamma^i_jk
    pub fn christoffel(&self, w: [f64; 2]) -> [[[f64; 2]; 2]; 2] {
        let s = 1.0 - w[0] * w[0] - w[1] * w[1];
        let dphi = [2.0 * w[0] / s, 2.0 * w[1] / s];
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut g = [[[0.0; 2]; 2]; 2];
        for (i, gi) in g.iter_mut().enumerate() {
            for (j, gij) in gi.iter_mut().enumerate() {
                for (k, v) in gij.iter_mut().enumerate() {
                    *v = delta(i, j) * dphi[k] + delta(i, k) * dphi[j] - delta(j, k) * dphi[i];
                }
            }
        }
        g
    }

    /// Distance to the basepoint.
    pub fn rho(&self, w: [f64; 2]) -> f64 {
        2.0 * (w[0] * w[0] + w[1] * w[1]).sqrt().atanh()
    }

    /// Hyperbolic distance between two chart points.
    pub fn distance_between(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        let s = (1.0 - a[0] * a[0] - a[1] * a[1]) * (1.0 - b[0] * b[0] - b[1] * b[1]);
        2.0 * (d2 / s).sqrt().asinh()
    }

    pub fn in_chart(&self, w: [f64; 2]) -> bool {
        (w[0] * w[0] + w[1] * w[1]).sqrt() < Self::CHART_LIMIT
    }

    /// Chart point at distance rho from the basepoint in direction angle theta.
    pub fn point_at(&self, rho: f64, theta: f64) -> [f64; 2] {
        let r = (rho / 2.0).tanh();
        [r * theta.cos(), r * theta.sin()]
    }

    pub fn sectional_curvature_sign(&self) -> i8 {
        -1
    }

    /// Geodesic with initial point w and velocity v, integrated to time s.
    pub fn geodesic(&self, w: [f64; 2], v: [f64; 2], s: f64) -> [f64; 2] {
        let steps = 64;
        let dt = s / steps as f64;
        let rhs = |x: [f64; 4]| -> [f64; 4] {
            let g = self.christoffel([x[0], x[1]]);
            let v = [x[2], x[3]];
            let mut acc = [0.0; 2];
            for (i, a) in acc.iter_mut().enumerate() {
                for j in 0..2 {
                    for k in 0..2 {
                        *a -= g[i][j][k] * v[j] * v[k];
                    }
                }
            }
            [x[2], x[3], acc[0], acc[1]]
        };
        let add = |x: [f64; 4], k: [f64; 4], h: f64| std::array::from_fn(|i| x[i] + h * k[i]);
        let mut x = [w[0], w[1], v[0], v[1]];
        for _ in 0..steps {
            let k1 = rhs(x);
            let k2 = rhs(add(x, k1, dt / 2.0));
            let k3 = rhs(add(x, k2, dt / 2.0));
            let k4 = rhs(add(x, k3, dt));
            for i in 0..4 {
                x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        [x[0], x[1]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Target {
    Torus(FlatTorus),
    Sphere(RoundSphere),
    Hyperbolic(PoincareDisk),
}

impl Target {
    pub fn torus(k: usize) -> Self {
        Target::Torus(FlatTorus { dim: k })
    }

    pub fn sphere(k: usize) -> Self {
        Target::Sphere(RoundSphere { ambient_dim: k })
    }

    pub fn hyperbolic() -> Self {
        Target::Hyperbolic(PoincareDisk)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Target::Torus(_) => "torus",
            Target::Sphere(_) => "sphere",
            Target::Hyperbolic(_) => "hyperbolic",
        }
    }

    /// Number of component fields of a map into this target.
    pub fn components(&self) -> usize {
        match self {
            Target::Torus(t) => t.dim,
            Target::Sphere(s) => s.ambient_dim,
            Target::Hyperbolic(_) => PoincareDisk::DIM,
        }
    }

    pub fn embedded(&self) -> Option<&dyn EmbeddedTarget> {
        match self {
            Target::Torus(t) => Some(t),
            Target::Sphere(s) => Some(s),
            Target::Hyperbolic(_) => None,
        }
    }

    /// Non-positively curved or flat, so the convergence theory applies.
    pub fn is_nonpositively_curved(&self) -> bool {
        !matches!(self, Target::Sphere(_))
    }

    /// Squared target-metric length of a tangent vector v at y.
    pub fn norm_sq(&self, y: &[f64], v: &[f64]) -> f64 {
        match self {
            Target::Hyperbolic(d) => d.conformal_factor([y[0], y[1]]).powi(2) * dot(v, v),
            _ => dot(v, v),
        }
    }

    /// Target-metric inner product at y.
    pub fn inner(&self, y: &[f64], v: &[f64], w: &[f64]) -> f64 {
        match self {
            Target::Hyperbolic(d) => d.conformal_factor([y[0], y[1]]).powi(2) * dot(v, w),
            _ => dot(v, w),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Potential {
    Zero,
    /// G(theta) = eps cos(2 pi theta_axis) on a flat torus.
    Cosine { eps: f64, axis: usize },
    /// Gbar(y) = eps y_axis on a sphere.
    Height { eps: f64, axis: usize },
    /// Gbar(y) = (k/2) |y|^2 in the ambient space of a sphere.
    RadialQuadratic { k: f64 },
    /// G = -(c/2) rho^2 on the hyperbolic plane.
    RhoSquared { c: f64 },
}

/// Value and target-representation gradient of a potential at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl Potential {
    pub fn name(&self) -> &'static str {
        match self {
            Potential::Zero => "zero",
            Potential::Cosine { .. } => "cosine",
            Potential::Height { .. } => "height",
            Potential::RadialQuadratic { .. } => "radial-quadratic",
            Potential::RhoSquared { .. } => "rho-squared",
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero)
    }

    pub fn check_target(&self, target: &Target) -> Result<()> {
        let ok = match (self, target) {
            (Potential::Zero, _) => true,
            (Potential::Cosine { axis, .. }, Target::Torus(t)) => *axis < t.dim,
            (Potential::Height { axis, .. }, Target::Sphere(s)) => *axis < s.ambient_dim,
            (Potential::RadialQuadratic { .. }, Target::Sphere(_)) => true,
            (Potential::RhoSquared { c }, Target::Hyperbolic(_)) => {
                if *c <= 0.0 {
                    return Err(Error::Domain(format!("rho-squared potential needs c > 0, got {c}")));
                }
                true
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "potential {} is not defined on target {}",
                self.name(),
                target.name()
            )))
        }
    }

    /// G at a point of the representation (lift, ambient point or chart point).
    pub fn value(&self, y: &[f64]) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Cosine { eps, axis } => eps * (2.0 * PI * y[axis]).cos(),
            Potential::Height { eps, axis } => eps * y[axis],
            Potential::RadialQuadratic { k } => 0.5 * k * dot(y, y),
            Potential::RhoSquared { c } => {
                let rho = PoincareDisk.rho([y[0], y[1]]);
                -0.5 * c * rho * rho
            }
        }
    }

    /// Coordinate differential dG (ambient gradient D Gbar for embedded targets).
    pub fn differential(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; y.len()];
        match *self {
            Potential::Zero => {}
            Potential::Cosine { eps, axis } => g[axis] = -2.0 * PI * eps * (2.0 * PI * y[axis]).sin(),
            Potential::Height { eps, axis } => g[axis] = eps,
            Potential::RadialQuadratic { k } => g.iter_mut().zip(y).for_each(|(gi, yi)| *gi = k * yi),
            Potential::RhoSquared { c } => {
                let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
                if r > 0.0 {
                    // dG = -c rho drho, drho = 2 / (1 - r^2) dr
                    let s = -c * PoincareDisk.rho([y[0], y[1]]) * 2.0 / (1.0 - r * r) / r;
                    g[0] = s * y[0];
                    g[1] = s * y[1];
                }
            }
        }
        g
    }

    /// Gradient in the target representation: tangent-projected ambient
    /// gradient for embedded targets, metric gradient for the disk.
    pub fn gradient(&self, target: &Target, y: &[f64]) -> Vec<f64> {
        let d = self.differential(y);
        match target {
            Target::Torus(_) => d,
            Target::Sphere(s) => {
                let j = s.jets_at(y);
                let k = s.ambient_dim;
                (0..k).map(|a| (0..k).map(|b| j.first(a, b) * d[b]).sum()).collect()
            }
            Target::Hyperbolic(disk) => {
                let l2 = disk.conformal_factor([y[0], y[1]]).powi(2);
                d.iter().map(|v| v / l2).collect()
            }
        }
    }

    /// Exact Hessian bound for the built-in potentials on their working regions.
    pub fn hessian_bound_exact(&self) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Cosine { eps, .. } => 4.0 * PI * PI * eps.abs(),
            Potential::Height { eps, .. } => eps.abs(),
            Potential::RadialQuadratic { .. } => 0.0,
            Potential::RhoSquared { c } => -c,
        }
    }

    /// Constant C with Hess G <= -C (1 + rho)^{-1} h, when declared.
    pub fn decay_constant(&self) -> Option<f64> {
        match *self {
            Potential::RhoSquared { c } => Some(c),
            _ => None,
        }
    }

    /// Hess G(Y, Y) for a unit tangent vector Y at y by a geodesic second difference.
    pub fn geodesic_hessian(&self, target: &Target, y: &[f64], v: &[f64], step: f64) -> f64 {
        let at = |s: f64| -> f64 {
            match target {
                Target::Torus(_) => {
                    let p: Vec<f64> = y.iter().zip(v).map(|(a, b)| a + s * b).collect();
                    self.value(&p)
                }
                Target::Sphere(_) => {
                    let p: Vec<f64> = y.iter().zip(v).map(|(a, b)| s.cos() * a + s.sin() * b).collect();
                    self.value(&p)
                }
                Target::Hyperbolic(d) => {
                    let q = d.geodesic([y[0], y[1]], [v[0], v[1]], s);
                    self.value(&q)
                }
            }
        };
        (at(step) - 2.0 * at(0.0) + at(-step)) / (step * step)
    }

    /// Sampled max of Hess G(Y, Y) over unit Y in the working region, padded
    /// by 10% of its magnitude. `radius` bounds the region on complete targets.
    pub fn estimate_hessian_bound(&self, target: &Target, radius: f64, samples: usize, seed: u64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let step = 1e-3;
        let mut best = f64::NEG_INFINITY;
        for n in 0..samples.max(1) {
            let (y, v) = sample_point_and_direction(target, radius, n == 0, &mut rng);
            best = best.max(self.geodesic_hessian(target, &y, &v, step));
        }
        best + 0.1 * best.abs()
    }
}

/// Random point of the working region and a unit tangent vector there.
/// With `base` set the basepoint (or a canonical point) is returned.
pub fn sample_point_and_direction(target: &Target, radius: f64, base: bool, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    match target {
        Target::Torus(t) => {
            let y: Vec<f64> = (0..t.dim).map(|_| if base { 0.0 } else { rng.random::<f64>() }).collect();
            (y, random_unit(t.dim, rng))
        }
        Target::Sphere(s) => {
            let k = s.ambient_dim;
            let y = random_unit(k, rng);
            let w = random_unit(k, rng);
            let c = dot(&w, &y);
            let t: Vec<f64> = w.iter().zip(&y).map(|(a, b)| a - c * b).collect();
            let n = norm(&t);
            (y, t.iter().map(|v| v / n).collect())
        }
        Target::Hyperbolic(d) => {
            let rho = if base { 0.0 } else { radius * rng.random::<f64>().sqrt() };
            let w = d.point_at(rho, 2.0 * PI * rng.random::<f64>());
            let dir = random_unit(2, rng);
            let l = d.conformal_factor(w);
            (w.to_vec(), dir.iter().map(|v| v / l).collect())
        }
    }
}

fn random_unit(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-8 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProductConditionReport {
    pub min_value: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Samples <A(y)(Y,Y), y> + |Y|^2 - <D Gbar(y), y> over points y of N and unit tangent Y.
pub fn check_product_condition(target: &Target, potential: &Potential, samples: usize, seed: u64) -> Result<ProductConditionReport> {
    let emb = target
        .embedded()
        .ok_or_else(|| Error::Domain("product condition needs an embedded target".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_value = f64::INFINITY;
    for _ in 0..samples.max(1) {
        let (y, v) = sample_point_and_direction(target, 1.0, false, &mut rng);
        let a = emb.projection_jets(&y)?.second_form(&v);
        let value = dot(&a, &y) + dot(&v, &v) - dot(&potential.differential(&y), &y);
        min_value = min_value.min(value);
    }
    Ok(ProductConditionReport {
        min_value,
        samples,
        pass: min_value >= -1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jets(t: &dyn EmbeddedTarget, y: &[f64], step: f64) -> (Vec<f64>, Vec<f64>) {
        let k = t.ambient_dim();
        let shift = |d: &[(usize, f64)]| {
            let mut p = y.to_vec();
            for (i, s) in d {
                p[*i] += s;
            }
            t.project_unchecked(&p)
        };
        let mut first = vec![0.0; k * k];
        let mut second = vec![0.0; k * k * k];
        for b in 0..k {
            let (p, m) = (shift(&[(b, step)]), shift(&[(b, -step)]));
            for a in 0..k {
                first[a * k + b] = (p[a] - m[a]) / (2.0 * step);
            }
            for c in 0..k {
                let pp = shift(&[(b, step), (c, step)]);
                let pm = shift(&[(b, step), (c, -step)]);
                let mp = shift(&[(b, -step), (c, step)]);
                let mm = shift(&[(b, -step), (c, -step)]);
                for a in 0..k {
                    second[(a * k + b) * k + c] = (pp[a] - pm[a] - mp[a] + mm[a]) / (4.0 * step * step);
                }
            }
        }
        (first, second)
    }

    #[test]
    fn sphere_projection_examples() {
        let s = RoundSphere { ambient_dim: 3 };
        assert_eq!(s.project(&[0.0, 0.0, 1.5]).unwrap(), vec![0.0, 0.0, 1.0]);
        let p = [0.6, 0.0, 0.8];
        let y: Vec<f64> = p.iter().map(|v| 1.1 * v).collect();
        let q = s.project(&y).unwrap();
        let d: f64 = y.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!((d - 0.1).abs() < 1e-14);
        assert!(s.project(&[0.0, 0.0, 2.5]).is_err());
        // idempotence and normality of the residual
        let pq = s.project(&q).unwrap();
        assert!(pq.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-12));
        let j = s.projection_jets(&q).unwrap();
        let rho: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a - b).collect();
        for col in 0..3 {
            let c: Vec<f64> = (0..3).map(|a| j.first(a, col)).collect();
            assert!(dot(&c, &rho).abs() < 1e-8);
        }
    }

    #[test]
    fn sphere_jets_match_finite_differences() {
        let s = RoundSphere { ambient_dim: 3 };
        let e1 = s.projection_jets(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!((e1.first(0, 0), e1.first(1, 1), e1.first(2, 2)), (0.0, 1.0, 1.0));
        for y in [[0.6, 0.0, 0.8], [0.48, 0.6, 0.64]] {
            let j = s.projection_jets(&y).unwrap();
            let (f1, f2) = fd_jets(&s, &y, 1e-4);
            assert!(j.first.iter().zip(&f1).all(|(a, b)| (a - b).abs() < 1e-6));
            assert!(j.second.iter().zip(&f2).all(|(a, b)| (a - b).abs() < 1e-6));
            // P symmetric and idempotent
            for a in 0..3 {
                for b in 0..3 {
                    assert!((j.first(a, b) - j.first(b, a)).abs() < 1e-15);
                    let pp: f64 = (0..3).map(|c| j.first(a, c) * j.first(c, b)).sum();
                    assert!((pp - j.first(a, b)).abs() < 1e-12);
                }
            }
        }
        // off N the jets still match, which the tubular flow relies on
        let y = [0.3, 0.9, 0.5];
        let j = s.jets_at(&y);
        let (f1, f2) = fd_jets(&s, &y, 1e-4);
        assert!(j.first.iter().zip(&f1).all(|(a, b)| (a - b).abs() < 1e-6));
        assert!(j.second.iter().zip(&f2).all(|(a, b)| (a - b).abs() < 1e-6));
        let w = [0.2, -0.4, 0.7];
        let dp = s.project_differential(&y, &w);
        for a in 0..3 {
            let want: f64 = (0..3).map(|b| j.first(a, b) * w[b]).sum();
            assert!((dp[a] - want).abs() < 1e-14);
        }
        assert!(s.projection_jets(&y).is_err());
    }

    #[test]
    fn torus_jets_are_affine() {
        let t = FlatTorus { dim: 2 };
        let j = t.projection_jets(&[0.3, 7.2]).unwrap();
        assert_eq!(j.first, vec![1.0, 0.0, 0.0, 1.0]);
        assert!(j.second.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn christoffel_matches_metric_derivatives() {
        let d = PoincareDisk;
        let w = [0.3, -0.2];
        let step = 1e-5;
        let dh = |l: usize| {
            let mut a = w;
            let mut b = w;
            a[l] += step;
            b[l] -= step;
            let (ha, hb) = (d.metric(a), d.metric(b));
            [[(ha[0][0] - hb[0][0]) / (2.0 * step), 0.0], [0.0, (ha[1][1] - hb[1][1]) / (2.0 * step)]]
        };
        let h = d.metric(w);
        let g = d.christoffel(w);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    // Levi-Civita: Gamma^i_jk = 1/2 h^{il} (d_j h_lk + d_k h_lj - d_l h_jk)
                    let l = i;
                    let v = 0.5 / h[i][i] * (dh(j)[l][k] + dh(k)[l][j] - dh(l)[j][k]);
                    assert!((g[i][j][k] - v).abs() < 1e-6, "{i}{j}{k}");
                    assert_eq!(g[i][j][k], g[i][k][j]);
                }
            }
        }
        let md = d.metric_derivative(w);
        for l in 0..2 {
            assert!((md[l] - dh(l)[0][0]).abs() < 1e-5);
        }
    }

    #[test]
    fn geodesics_realize_distance() {
        let d = PoincareDisk;
        // unit-speed geodesic from the basepoint reaches distance s
        let q = d.geodesic([0.0, 0.0], [0.5, 0.0], 1.3);
        assert!((d.rho(q) - 1.3).abs() < 1e-8, "{}", d.rho(q));
    }

    #[test]
    fn potential_gradients_match_finite_differences() {
        let cases = [
            (Target::torus(2), Potential::Cosine { eps: 0.01, axis: 0 }, vec![0.3, 0.8]),
            (Target::sphere(3), Potential::Height { eps: 0.5, axis: 2 }, vec![0.48, 0.6, 0.64]),
            (Target::hyperbolic(), Potential::RhoSquared { c: 1.0 }, vec![0.3, -0.4]),
        ];
        for (t, g, y) in cases {
            let d = g.differential(&y);
            for l in 0..y.len() {
                let mut a = y.clone();
                let mut b = y.clone();
                a[l] += 1e-5;
                b[l] -= 1e-5;
                let fd = (g.value(&a) - g.value(&b)) / 2e-5;
                assert!((fd - d[l]).abs() < 1e-7, "{}", g.name());
            }
            let _ = g.gradient(&t, &y);
        }
        let g = Potential::Cosine { eps: 0.01, axis: 0 };
        let grad = g.gradient(&Target::torus(2), &[0.25, 0.0]);
        assert!((grad[0] + 2.0 * PI * 0.01).abs() < 1e-15 && grad[1] == 0.0);
        let h = Potential::RhoSquared { c: 1.0 };
        assert_eq!(h.gradient(&Target::hyperbolic(), &[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(Potential::Zero.gradient(&Target::sphere(3), &[0.0, 0.0, 1.0]), vec![0.0; 3]);
    }

    #[test]
    fn hessian_estimates_bracket_exact_bounds() {
        let cases = [
            (Target::torus(2), Potential::Cosine { eps: 1.0 / (16.0 * PI * PI), axis: 0 }),
            (Target::sphere(3), Potential::Height { eps: 0.3, axis: 2 }),
            (Target::hyperbolic(), Potential::RhoSquared { c: 1.0 }),
        ];
        for (t, g) in cases {
            let exact = g.hessian_bound_exact();
            let est = g.estimate_hessian_bound(&t, 2.0, 400, 11);
            assert!(est >= exact - 1e-5, "{} {est} {exact}", g.name());
            assert!(est <= exact + 0.1 * exact.abs() + 1e-3, "{} {est} {exact}", g.name());
        }
    }

    #[test]
    fn rho_squared_hessian_satisfies_decay_bound() {
        let t = Target::hyperbolic();
        let g = Potential::RhoSquared { c: 1.0 };
        let c = g.decay_constant().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 0..200 {
            let (y, v) = sample_point_and_direction(&t, 3.0, n == 0, &mut rng);
            let hess = g.geodesic_hessian(&t, &y, &v, 1e-3);
            let rho = PoincareDisk.rho([y[0], y[1]]);
            assert!(hess <= -c + 1e-5, "{hess}");
            assert!(hess <= -c / (1.0 + rho) + 1e-5);
        }
    }

    #[test]
    fn product_condition_examples() {
        let r = check_product_condition(&Target::torus(2), &Potential::Zero, 20, 1).unwrap();
        assert!(r.pass && (r.min_value - 1.0).abs() < 1e-12);
        let r = check_product_condition(&Target::sphere(3), &Potential::Zero, 50, 1).unwrap();
        assert!(r.pass && r.min_value.abs() < 1e-12);
        let r = check_product_condition(&Target::sphere(3), &Potential::RadialQuadratic { k: 0.5 }, 20, 1).unwrap();
        assert!(!r.pass && (r.min_value + 0.5).abs() < 1e-12);
        assert!(check_product_condition(&Target::hyperbolic(), &Potential::Zero, 5, 1).is_err());
    }

    #[test]
    fn potential_target_compatibility() {
        assert!(Potential::RhoSquared { c: 0.0 }.check_target(&Target::hyperbolic()).is_err());
        assert!(Potential::Cosine { eps: 0.1, axis: 0 }.check_target(&Target::sphere(3)).is_err());
        assert!(Potential::Cosine { eps: 0.1, axis: 1 }.check_target(&Target::torus(2)).is_ok());
    }
}
