//! Sub-Riemannian model spaces: an adapted orthonormal frame on a nilpotent
//! group, its lattice quotient, structure functions and the torsion invariant eta.

pub mod grid;
pub mod poly;

use std::fmt;

use serde::Serialize;

pub use grid::{Grid, LatticeKind};
pub use poly::Poly;

use crate::error::{Error, Result};

pub const DIM: usize = 3;

/// A frame coefficient: either a polynomial in (x, y, z) or an opaque
/// numeric function, which supports evaluation but no symbolic work.
#[derive(Clone)]
pub enum Coefficient {
    Poly(Poly),
    Opaque(fn([f64; 3]) -> f64),
}

impl Coefficient {
    pub fn eval(&self, p: [f64; 3]) -> f64 {
        match self {
            Coefficient::Poly(q) => q.eval(p),
            Coefficient::Opaque(f) => f(p),
        }
    }

    fn as_poly(&self) -> Option<&Poly> {
        match self {
            Coefficient::Poly(q) => Some(q),
            Coefficient::Opaque(_) => None,
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Poly(q) => write!(f, "{q}"),
            Coefficient::Opaque(_) => write!(f, "<opaque>"),
        }
    }
}

/// Vector field sum_k coeffs[k] d/dx_k.
#[derive(Clone, Debug)]
pub struct FrameField {
    pub name: String,
    pub coeffs: [Coefficient; DIM],
    /// Coordinate axis whose grid spacing is the discrete step along this field.
    pub step_axis: usize,
}

impl FrameField {
    pub fn polynomial(name: &str, coeffs: [Poly; DIM], step_axis: usize) -> Self {
        FrameField {
            name: name.to_string(),
            coeffs: coeffs.map(Coefficient::Poly),
            step_axis,
        }
    }

    pub fn eval(&self, p: [f64; 3]) -> [f64; 3] {
        [self.coeffs[0].eval(p), self.coeffs[1].eval(p), self.coeffs[2].eval(p)]
    }

    fn symbolic(&self) -> Option<[Poly; DIM]> {
        Some([
            self.coeffs[0].as_poly()?.clone(),
            self.coeffs[1].as_poly()?.clone(),
            self.coeffs[2].as_poly()?.clone(),
        ])
    }
}

type PolyField = [Poly; DIM];

fn apply_field(v: &PolyField, f: &Poly) -> Poly {
    (0..DIM).fold(Poly::zero(), |acc, k| acc.add(&v[k].mul(&f.derivative(k))))
}

fn lie_bracket(v: &PolyField, w: &PolyField) -> PolyField {
    std::array::from_fn(|k| apply_field(v, &w[k]).sub(&apply_field(w, &v[k])))
}

#[derive(Clone, Debug)]
pub struct GroupModel {
    pub name: String,
    /// Frame e_1..e_n; the first `horizontal_rank` span H.
    pub frames: Vec<FrameField>,
    pub horizontal_rank: usize,
    pub lattice: LatticeKind,
}

/// Structure functions c with [e_i, e_j] = sum_A c[i][j][A] e_A.
#[derive(Clone, Debug)]
pub struct BracketTable {
    pub coeffs: Vec<Vec<Vec<Poly>>>,
}

impl BracketTable {
    pub fn get(&self, i: usize, j: usize, a: usize) -> &Poly {
        &self.coeffs[i][j][a]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BracketEntry {
    pub left: String,
    pub right: String,
    pub component: String,
    pub coefficient: String,
}

impl GroupModel {
    pub fn new(name: &str, frames: Vec<FrameField>, horizontal_rank: usize, lattice: LatticeKind) -> Result<Self> {
        if frames.len() != DIM {
            return Err(Error::InvalidModel(format!(
                "expected {DIM} frame fields, got {}",
                frames.len()
            )));
        }
        if horizontal_rank == 0 || horizontal_rank > DIM {
            return Err(Error::InvalidModel(format!("horizontal rank {horizontal_rank} out of range")));
        }
        for f in &frames {
            if f.step_axis >= DIM {
                return Err(Error::InvalidModel(format!("frame {} has step axis {}", f.name, f.step_axis)));
            }
        }
        let model = GroupModel {
            name: name.to_string(),
            frames,
            horizontal_rank,
            lattice,
        };
        for p in sample_points() {
            let det = model.frame_matrix_at(p).determinant();
            if !det.is_finite() || det.abs() < 1e-12 {
                return Err(Error::InvalidModel(format!("frame degenerate at {p:?}")));
            }
        }
        Ok(model)
    }

    /// Heisenberg nilmanifold: X1 = dx, X2 = dy + x dz horizontal, X3 = dz vertical.
    pub fn heisenberg() -> Self {
        let (x, one, zero) = (Poly::coord(0), Poly::constant(1.0), Poly::zero);
        let frames = vec![
            FrameField::polynomial("X1", [one.clone(), zero(), zero()], 0),
            FrameField::polynomial("X2", [zero(), one.clone(), x], 1),
            FrameField::polynomial("X3", [zero(), zero(), one], 2),
        ];
        GroupModel::new("heisenberg", frames, 2, LatticeKind::Heisenberg).expect("heisenberg frame")
    }

    /// Flat 3-torus with H = span{dx, dy}: eta = 0 and not bracket generating.
    pub fn torus_degenerate() -> Self {
        let (one, zero) = (Poly::constant(1.0), Poly::zero);
        let frames = vec![
            FrameField::polynomial("X1", [one.clone(), zero(), zero()], 0),
            FrameField::polynomial("X2", [zero(), one.clone(), zero()], 1),
            FrameField::polynomial("X3", [zero(), zero(), one], 2),
        ];
        GroupModel::new("torus-degenerate", frames, 2, LatticeKind::Standard).expect("torus frame")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "heisenberg" => Ok(GroupModel::heisenberg()),
            "torus-degenerate" => Ok(GroupModel::torus_degenerate()),
            other => Err(Error::InvalidModel(format!(
                "unknown model {other:?} (expected \"heisenberg\" or \"torus-degenerate\")"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.frames.len()
    }

    pub fn vertical_rank(&self) -> usize {
        self.dim() - self.horizontal_rank
    }

    pub fn horizontal(&self) -> &[FrameField] {
        &self.frames[..self.horizontal_rank]
    }

    pub fn vertical(&self) -> &[FrameField] {
        &self.frames[self.horizontal_rank..]
    }

    /// Rows are frame fields, columns coordinate directions.
    pub fn frame_matrix_at(&self, p: [f64; 3]) -> nalgebra::Matrix3<f64> {
        let mut m = nalgebra::Matrix3::zeros();
        for (a, f) in self.frames.iter().enumerate() {
            let v = f.eval(p);
            for k in 0..DIM {
                m[(a, k)] = v[k];
            }
        }
        m
    }

    /// Check that a grid is compatible with the lattice discretization.
    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.lattice == LatticeKind::Heisenberg && grid.nz != grid.nx * grid.ny {
            return Err(Error::InvalidGrid(format!(
                "heisenberg lattice needs N_z = N_x * N_y (got {grid}; try {}x{}x{})",
                grid.nx,
                grid.ny,
                grid.nx * grid.ny
            )));
        }
        Ok(())
    }

    fn symbolic_frames(&self) -> Result<Vec<PolyField>> {
        self.frames
            .iter()
            .map(|f| {
                f.symbolic().ok_or_else(|| {
                    Error::UnsupportedModel(format!("frame {} has non-polynomial coefficients", f.name))
                })
            })
            .collect()
    }

    /// Expand a polynomial vector field in the frame: returns c with v = sum c_A e_A.
    fn expand_in_frame(inv_t: &[[Poly; DIM]; DIM], v: &PolyField) -> Vec<Poly> {
        (0..DIM)
            .map(|a| (0..DIM).fold(Poly::zero(), |acc, k| acc.add(&inv_t[a][k].mul(&v[k]))))
            .collect()
    }

    /// Symbolic inverse of the transposed frame matrix; requires a constant determinant.
    fn inverse_transpose(&self, frames: &[PolyField]) -> Result<[[Poly; DIM]; DIM]> {
        // m[k][a] = coefficient of d_k in e_a, so v = m c
        let m: [[Poly; DIM]; DIM] = std::array::from_fn(|k| std::array::from_fn(|a| frames[a][k].clone()));
        let minor = |r: usize, c: usize| -> Poly {
            let rows: Vec<usize> = (0..DIM).filter(|&i| i != r).collect();
            let cols: Vec<usize> = (0..DIM).filter(|&j| j != c).collect();
            m[rows[0]][cols[0]]
                .mul(&m[rows[1]][cols[1]])
                .sub(&m[rows[0]][cols[1]].mul(&m[rows[1]][cols[0]]))
        };
        let cof: [[Poly; DIM]; DIM] = std::array::from_fn(|r| {
            std::array::from_fn(|c| {
                let s = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
                minor(r, c).scale(s)
            })
        });
        let det = (0..DIM).fold(Poly::zero(), |acc, c| acc.add(&m[0][c].mul(&cof[0][c])));
        let det = det.as_constant().ok_or_else(|| {
            Error::UnsupportedModel("frame determinant is not constant; structure functions are rational".into())
        })?;
        if det.abs() < 1e-12 {
            return Err(Error::InvalidModel("frame determinant vanishes".into()));
        }
        // inverse = adj / det, adj[a][k] = cof[k][a]
        Ok(std::array::from_fn(|a| std::array::from_fn(|k| cof[k][a].scale(1.0 / det))))
    }

    pub fn bracket_table(&self) -> Result<BracketTable> {
        let frames = self.symbolic_frames()?;
        let inv = self.inverse_transpose(&frames)?;
        let n = self.dim();
        let mut coeffs = vec![vec![Vec::new(); n]; n];
        for i in 0..n {
            for j in 0..n {
                let b = lie_bracket(&frames[i], &frames[j]);
                coeffs[i][j] = Self::expand_in_frame(&inv, &b);
            }
        }
        Ok(BracketTable { coeffs })
    }

    /// Non-zero bracket coefficients in readable form.
    pub fn bracket_entries(&self) -> Result<Vec<BracketEntry>> {
        let table = self.bracket_table()?;
        let mut out = Vec::new();
        for i in 0..self.dim() {
            for j in (i + 1)..self.dim() {
                for a in 0..self.dim() {
                    let c = table.get(i, j, a);
                    if !c.is_zero() {
                        out.push(BracketEntry {
                            left: self.frames[i].name.clone(),
                            right: self.frames[j].name.clone(),
                            component: self.frames[a].name.clone(),
                            coefficient: c.to_string(),
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Smallest r such that iterated brackets of length <= r of horizontal
    /// fields span the tangent space at every sample point.
    pub fn bracket_generating_step(&self, max_depth: usize) -> Result<usize> {
        let frames = self.symbolic_frames()?;
        let mut span: Vec<PolyField> = frames[..self.horizontal_rank].to_vec();
        let mut layer = span.clone();
        let mut last_rank = 0;
        for depth in 1..=max_depth {
            let rank = sample_points()
                .into_iter()
                .map(|p| numeric_rank(&span, p))
                .min()
                .unwrap_or(0);
            last_rank = rank;
            if rank == DIM {
                return Ok(depth);
            }
            let mut next = Vec::new();
            for x in &frames[..self.horizontal_rank] {
                for y in &layer {
                    let b = lie_bracket(x, y);
                    if b.iter().any(|c| !c.is_zero()) {
                        next.push(b);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            span.extend(next.iter().cloned());
            layer = next;
        }
        Err(Error::NotBracketGenerating {
            depth: max_depth,
            rank: last_rank,
            dim: DIM,
        })
    }

    /// Horizontal drift sum_i nabla_{e_i} e_i + zeta in frame components,
    /// which must vanish for the sub-Laplacian to be -sum D_i^T D_i.
    pub fn drift(&self) -> Result<Vec<Poly>> {
        let t = self.bracket_table()?;
        let m = self.horizontal_rank;
        Ok((0..m)
            .map(|k| {
                (0..self.dim())
                    .filter(|&a| a != k)
                    .fold(Poly::zero(), |acc, a| acc.add(t.get(k, a, a)))
            })
            .collect())
    }

    /// eta(v) = sum_{i<=j} <[e_i, e_j], v>^2 for unit vertical v given in vertical frame components.
    pub fn eta_at(&self, table: &BracketTable, v: &[f64], p: [f64; 3]) -> Result<f64> {
        let d = self.vertical_rank();
        if v.len() != d {
            return Err(Error::Domain(format!("vertical vector has {} components, expected {d}", v.len())));
        }
        let norm: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("vertical vector has norm {norm}, expected 1")));
        }
        let m = self.horizontal_rank;
        let mut eta = 0.0;
        for i in 0..m {
            for j in i..m {
                let s: f64 = (0..d).map(|a| table.get(i, j, m + a).eval(p) * v[a]).sum();
                eta += s * s;
            }
        }
        Ok(eta)
    }

    /// Minimum of eta over grid nodes and sampled unit vertical vectors.
    pub fn eta_min(&self, grid: &Grid, sphere_samples: usize) -> Result<f64> {
        if sphere_samples == 0 {
            return Err(Error::Domain("sphere_samples must be positive".into()));
        }
        let table = self.bracket_table()?;
        let dirs = vertical_directions(self.vertical_rank(), sphere_samples);
        let constant = (0..self.horizontal_rank).all(|i| {
            (0..self.horizontal_rank).all(|j| (0..self.dim()).all(|a| table.get(i, j, a).as_constant().is_some()))
        });
        let points: Vec<[f64; 3]> = if constant {
            vec![[0.0; 3]]
        } else {
            (0..grid.len()).map(|p| grid.coords(p)).collect()
        };
        let mut best = f64::INFINITY;
        for p in &points {
            for v in &dirs {
                best = best.min(self.eta_at(&table, v, *p)?);
            }
        }
        Ok(best)
    }
}

fn sample_points() -> Vec<[f64; 3]> {
    let mut pts = vec![[0.0; 3]];
    for a in [0.13, 0.57, 0.91] {
        for b in [0.29, 0.73] {
            pts.push([a, b, (a + b) * 0.5]);
        }
    }
    pts
}

fn numeric_rank(fields: &[PolyField], p: [f64; 3]) -> usize {
    let rows: Vec<nalgebra::Vector3<f64>> = fields
        .iter()
        .map(|f| nalgebra::Vector3::new(f[0].eval(p), f[1].eval(p), f[2].eval(p)))
        .collect();
    if rows.is_empty() {
        return 0;
    }
    let m = nalgebra::DMatrix::from_fn(rows.len(), DIM, |r, c| rows[r][c]);
    m.rank(1e-10)
}

/// Unit vectors in R^d: exactly {+1, -1} for d = 1, a deterministic sphere sample otherwise.
fn vertical_directions(d: usize, samples: usize) -> Vec<Vec<f64>> {
    if d == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..samples)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if n > 1e-8 {
                break v.iter().map(|c| c / n).collect();
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: brackets from numeric central differences of the
    // coefficient functions, expanded with a numeric frame inverse.
    fn numeric_bracket(model: &GroupModel, i: usize, j: usize, p: [f64; 3]) -> [f64; 3] {
        let h = 1e-5;
        let d = |f: &FrameField, k: usize, p: [f64; 3]| -> [f64; 3] {
            let mut a = p;
            let mut b = p;
            a[k] += h;
            b[k] -= h;
            let (fa, fb) = (f.eval(a), f.eval(b));
            [(fa[0] - fb[0]) / (2.0 * h), (fa[1] - fb[1]) / (2.0 * h), (fa[2] - fb[2]) / (2.0 * h)]
        };
        let (ei, ej) = (&model.frames[i], &model.frames[j]);
        let (vi, vj) = (ei.eval(p), ej.eval(p));
        let mut out = [0.0; 3];
        for k in 0..3 {
            let dj = d(ej, k, p);
            let di = d(ei, k, p);
            for c in 0..3 {
                out[c] += vi[k] * dj[c] - vj[k] * di[c];
            }
        }
        let f = model.frame_matrix_at(p);
        let c = f.transpose().try_inverse().unwrap() * nalgebra::Vector3::from(out);
        [c[0], c[1], c[2]]
    }

    #[test]
    fn heisenberg_brackets_match_numeric_oracle() {
        let m = GroupModel::heisenberg();
        let t = m.bracket_table().unwrap();
        for p in [[0.1, 0.4, 0.8], [0.7, 0.2, 0.3]] {
            for i in 0..3 {
                for j in 0..3 {
                    let num = numeric_bracket(&m, i, j, p);
                    for a in 0..3 {
                        assert!((t.get(i, j, a).eval(p) - num[a]).abs() < 1e-8);
                    }
                }
            }
        }
        assert_eq!(t.get(0, 1, 2).as_constant(), Some(1.0));
        assert!(t.get(0, 1, 0).is_zero() && t.get(0, 1, 1).is_zero());
        assert!((0..3).all(|a| t.get(0, 0, a).is_zero()));
        assert!((0..3).all(|a| t.get(1, 2, a).is_zero()));
    }

    #[test]
    fn bracket_generating_steps() {
        assert_eq!(GroupModel::heisenberg().bracket_generating_step(4).unwrap(), 2);
        let full = GroupModel::new(
            "full",
            GroupModel::heisenberg().frames.clone(),
            3,
            LatticeKind::Heisenberg,
        )
        .unwrap();
        assert_eq!(full.bracket_generating_step(4).unwrap(), 1);
        let err = GroupModel::torus_degenerate().bracket_generating_step(4).unwrap_err();
        assert!(matches!(err, Error::NotBracketGenerating { rank: 2, .. }));
    }

    #[test]
    fn eta_values() {
        let g = Grid::heisenberg(4).unwrap();
        assert_eq!(GroupModel::heisenberg().eta_min(&g, 8).unwrap(), 1.0);
        let t = GroupModel::heisenberg().bracket_table().unwrap();
        assert_eq!(GroupModel::heisenberg().eta_at(&t, &[-1.0], [0.3, 0.1, 0.9]).unwrap(), 1.0);
        assert_eq!(GroupModel::torus_degenerate().eta_min(&g, 8).unwrap(), 0.0);
        let err = GroupModel::heisenberg().eta_at(&t, &[0.5], [0.0; 3]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn opaque_coefficients_are_unsupported() {
        let mut frames = GroupModel::heisenberg().frames.clone();
        frames[1].coeffs[2] = Coefficient::Opaque(|p| p[0].sin());
        let m = GroupModel::new("opaque", frames, 2, LatticeKind::Heisenberg).unwrap();
        assert!(matches!(m.bracket_table(), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn drift_vanishes_for_builtin_models() {
        for m in [GroupModel::heisenberg(), GroupModel::torus_degenerate()] {
            assert!(m.drift().unwrap().iter().all(|c| c.is_zero()));
        }
    }

    #[test]
    fn heisenberg_grid_rule() {
        let m = GroupModel::heisenberg();
        assert!(m.check_grid(&Grid::new(4, 4, 16).unwrap()).is_ok());
        assert!(m.check_grid(&Grid::new(4, 4, 32).unwrap()).is_err());
        assert!(GroupModel::torus_degenerate().check_grid(&Grid::new(4, 4, 8).unwrap()).is_ok());
    }
}
