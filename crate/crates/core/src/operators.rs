//! Discrete frame derivatives, the sub-Laplacian and volume integration on
//! the lattice quotient.
//!
//! The derivative along a frame field e_A is the forward difference along its
//! integral curve: D_A f(p) = (f(q) - f(p)) / h_A, where q is the end point of
//! the flow of e_A for time h_A started at p, reduced into the fundamental
//! domain by the lattice. For the Heisenberg frame on an N x N' x N N' grid
//! these end points are nodes, so D_2 steps (i, j, k) -> (i, j+1, k+i) and the
//! x-seam maps (N-1, j, k) -> (0, j, k - j N).

use std::io::{Read, Write};

use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::model::{Grid, GroupModel, DIM};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"SUBF";

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField(pub Vec<f64>);

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        ScalarField(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        ScalarField(vec![c; n])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        ScalarField((0..grid.len()).map(|p| f(grid.coords(p))).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn sup(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dot(&self, other: &ScalarField) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        for (s, v) in self.0.iter_mut().zip(&x.0) {
            *s += a * v;
        }
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        ScalarField(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug)]
pub struct SparseOperator {
    pub matrix: CsMat<f64>,
    pub symmetric: bool,
    pub negative_semidefinite: bool,
}

impl SparseOperator {
    fn new(matrix: CsMat<f64>) -> Self {
        SparseOperator {
            matrix,
            symmetric: false,
            negative_semidefinite: false,
        }
    }

    pub fn size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let m = &self.matrix;
        let (indptr, indices, data) = (m.indptr(), m.indices(), m.data());
        let indptr = indptr.raw_storage();
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for n in indptr[r]..indptr[r + 1] {
                acc += data[n] * x[indices[n]];
            }
            *out = acc;
        }
    }

    pub fn apply(&self, x: &ScalarField) -> ScalarField {
        let mut y = vec![0.0; self.size()];
        self.apply_into(&x.0, &mut y);
        ScalarField(y)
    }

    /// y = A^T x
    pub fn apply_transpose(&self, x: &ScalarField) -> ScalarField {
        let m = &self.matrix;
        let mut y = vec![0.0; m.cols()];
        let indptr = m.indptr();
        let indptr = indptr.raw_storage();
        let (indices, data) = (m.indices(), m.data());
        for (r, &xr) in x.0.iter().enumerate() {
            for n in indptr[r]..indptr[r + 1] {
                y[indices[n]] += data[n] * xr;
            }
        }
        ScalarField(y)
    }

    pub fn compose(&self, other: &SparseOperator) -> SparseOperator {
        SparseOperator::new(&self.matrix * &other.matrix)
    }

    pub fn transpose(&self) -> SparseOperator {
        SparseOperator::new(self.matrix.transpose_view().to_csr())
    }

    /// Exact entrywise equality with the transpose.
    pub fn is_exactly_symmetric(&self) -> bool {
        let t = self.matrix.transpose_view().to_csr();
        self.matrix.nnz() == t.nnz()
            && self
                .matrix
                .iter()
                .all(|(v, (r, c))| t.get(r, c).is_some_and(|w| w == v))
    }

    /// Largest absolute row sum (a Gershgorin bound on the spectral radius).
    pub fn max_abs_row_sum(&self) -> f64 {
        self.matrix
            .outer_iterator()
            .map(|row| row.iter().map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.size();
        let mut d = nalgebra::DMatrix::zeros(n, self.matrix.cols());
        for (v, (r, c)) in self.matrix.iter() {
            d[(r, c)] += *v;
        }
        d
    }
}

/// A discrete frame derivative. Acting on a lift of a map with winding
/// matrix W, D u = M u + sum_dir W[., dir] * jumps[dir].
#[derive(Clone, Debug)]
pub struct FirstOrderOperator {
    pub op: SparseOperator,
    pub jumps: [Vec<f64>; DIM],
    pub step: f64,
}

impl FirstOrderOperator {
    pub fn apply(&self, u: &ScalarField) -> ScalarField {
        self.op.apply(u)
    }

    /// Derivative of a lift whose deck transformation adds `winding[dir]` per lattice generator.
    pub fn apply_lift(&self, u: &ScalarField, winding: &[i64; DIM]) -> ScalarField {
        let mut y = self.op.apply(u);
        for (dir, &w) in winding.iter().enumerate() {
            if w != 0 {
                y.axpy(w as f64, &ScalarField(self.jumps[dir].clone()));
            }
        }
        y
    }
}

fn flow_endpoint(model: &GroupModel, a: usize, p: [f64; 3], time: f64) -> [f64; 3] {
    let f = &model.frames[a];
    let steps = 32;
    let dt = time / steps as f64;
    let add = |p: [f64; 3], v: [f64; 3], s: f64| [p[0] + s * v[0], p[1] + s * v[1], p[2] + s * v[2]];
    let mut x = p;
    for _ in 0..steps {
        let k1 = f.eval(x);
        let k2 = f.eval(add(x, k1, dt / 2.0));
        let k3 = f.eval(add(x, k2, dt / 2.0));
        let k4 = f.eval(add(x, k3, dt));
        for d in 0..3 {
            x[d] += dt / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
    }
    x
}

/// Assemble D_A for frame index A.
pub fn assemble_first_order(model: &GroupModel, grid: &Grid, a: usize) -> Result<FirstOrderOperator> {
    model.check_grid(grid)?;
    if a >= model.dim() {
        return Err(Error::Domain(format!("frame index {a} out of range")));
    }
    let n = grid.len();
    let h = grid.spacing();
    let step = h[model.frames[a].step_axis];
    let dims = grid.dims();
    let mut tri = TriMat::with_capacity((n, n), 2 * n);
    let mut jumps: [Vec<f64>; DIM] = std::array::from_fn(|_| vec![0.0; n]);
    for p in 0..n {
        let q = flow_endpoint(model, a, grid.coords(p), step);
        let mut idx = [0i64; 3];
        for d in 0..3 {
            let f = q[d] * dims[d] as f64;
            let r = f.round();
            if (f - r).abs() > 1e-6 {
                return Err(Error::InvalidGrid(format!(
                    "flow of {} from node {p} ends off-grid on {grid}",
                    model.frames[a].name
                )));
            }
            idx[d] = r as i64;
        }
        let (q0, gamma) = model.lattice.reduce(grid, idx);
        if q0 == p {
            return Err(Error::InvalidGrid(format!(
                "step of {} is a full period on {grid}",
                model.frames[a].name
            )));
        }
        tri.add_triplet(p, q0, 1.0 / step);
        tri.add_triplet(p, p, -1.0 / step);
        for d in 0..DIM {
            jumps[d][p] = gamma[d] as f64 / step;
        }
    }
    Ok(FirstOrderOperator {
        op: SparseOperator::new(tri.to_csr()),
        jumps,
        step,
    })
}

/// Delta_H = -sum_i D_i^T D_i over horizontal frames.
pub fn assemble_sub_laplacian(model: &GroupModel, grid: &Grid) -> Result<SparseOperator> {
    let ops: Vec<FirstOrderOperator> = (0..model.horizontal_rank)
        .map(|a| assemble_first_order(model, grid, a))
        .collect::<Result<_>>()?;
    sub_laplacian_from(model, &ops)
}

fn sub_laplacian_from(model: &GroupModel, horizontal: &[FirstOrderOperator]) -> Result<SparseOperator> {
    if model.drift()?.iter().any(|c| !c.is_zero()) {
        return Err(Error::UnsupportedModel(
            "non-zero horizontal drift is not supported by the divergence-form sub-Laplacian".into(),
        ));
    }
    let mut acc: Option<CsMat<f64>> = None;
    for d in horizontal {
        let dtd = &d.op.matrix.transpose_view().to_csr() * &d.op.matrix;
        acc = Some(match acc {
            None => dtd,
            Some(m) => &m + &dtd,
        });
    }
    let lap = acc.expect("at least one horizontal frame").map(|v| -v);
    Ok(SparseOperator {
        matrix: lap,
        symmetric: true,
        negative_semidefinite: true,
    })
}

/// All discrete operators of a model on a grid.
#[derive(Clone, Debug)]
pub struct Operators {
    pub grid: Grid,
    pub horizontal_rank: usize,
    /// D_A for every frame field, horizontal first.
    pub frames: Vec<FirstOrderOperator>,
    pub laplacian: SparseOperator,
}

impl Operators {
    pub fn assemble(model: &GroupModel, grid: &Grid) -> Result<Self> {
        let frames: Vec<FirstOrderOperator> = (0..model.dim())
            .map(|a| assemble_first_order(model, grid, a))
            .collect::<Result<_>>()?;
        let laplacian = sub_laplacian_from(model, &frames[..model.horizontal_rank])?;
        Ok(Operators {
            grid: *grid,
            horizontal_rank: model.horizontal_rank,
            frames,
            laplacian,
        })
    }

    pub fn horizontal(&self) -> &[FirstOrderOperator] {
        &self.frames[..self.horizontal_rank]
    }

    pub fn vertical(&self) -> &[FirstOrderOperator] {
        &self.frames[self.horizontal_rank..]
    }

    pub fn horizontal_gradient(&self, u: &ScalarField) -> Vec<ScalarField> {
        self.horizontal().iter().map(|d| d.apply(u)).collect()
    }

    /// Sup over the probes of max |(D1 D2 - D2 D1 - D3) f|.
    pub fn commutator_defect(&self, probes: &[ScalarField]) -> f64 {
        let (d1, d2, d3) = (&self.frames[0], &self.frames[1], &self.frames[2]);
        probes
            .iter()
            .map(|f| {
                let a = d1.apply(&d2.apply(f));
                let b = d2.apply(&d1.apply(f));
                let c = d3.apply(f);
                a.0.iter()
                    .zip(&b.0)
                    .zip(&c.0)
                    .fold(0.0f64, |m, ((a, b), c)| m.max((a - b - c).abs()))
            })
            .fold(0.0, f64::max)
    }

    /// Step bound dt <= safety * 2 / rho for explicit Euler, with rho the
    /// Gershgorin bound on the spectral radius of Delta_H.
    pub fn cfl_dt(&self, safety: f64) -> f64 {
        safety * 2.0 / self.laplacian.max_abs_row_sum()
    }
}

/// h_x h_y h_z sum_p u(p)
pub fn integrate(grid: &Grid, u: &ScalarField) -> f64 {
    grid.cell_volume() * u.0.iter().sum::<f64>()
}

/// Real part of the theta function sum_n exp(-pi (x+n)^2) exp(2 pi i (z + n y)),
/// a smooth function on the Heisenberg nilmanifold with Delta_H f = -2 pi f.
pub fn theta_probe(p: [f64; 3]) -> f64 {
    let [x, y, z] = p;
    (-8..=8)
        .map(|n| {
            let s = x + n as f64;
            (-std::f64::consts::PI * s * s).exp() * (2.0 * std::f64::consts::PI * (z + n as f64 * y)).cos()
        })
        .sum()
}

/// Imaginary part of the same theta function.
pub fn theta_probe_sin(p: [f64; 3]) -> f64 {
    let [x, y, z] = p;
    (-8..=8)
        .map(|n| {
            let s = x + n as f64;
            (-std::f64::consts::PI * s * s).exp() * (2.0 * std::f64::consts::PI * (z + n as f64 * y)).sin()
        })
        .sum()
}

/// Probe set used by the commutator defect report.
pub fn default_probes(grid: &Grid) -> Vec<ScalarField> {
    use std::f64::consts::PI;
    vec![
        ScalarField::from_fn(grid, theta_probe),
        ScalarField::from_fn(grid, theta_probe_sin),
        ScalarField::from_fn(grid, |p| (2.0 * PI * p[0]).sin()),
        ScalarField::from_fn(grid, |p| (2.0 * PI * p[1]).sin()),
    ]
}

pub fn write_snapshot(w: &mut impl Write, grid: &Grid, u: &ScalarField) -> Result<()> {
    if u.len() != grid.len() {
        return Err(Error::Domain(format!("field has {} values, grid {grid} has {}", u.len(), grid.len())));
    }
    w.write_all(&SNAPSHOT_MAGIC)?;
    for n in grid.dims() {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    for v in &u.0 {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot(r: &mut impl Read) -> Result<(Grid, ScalarField)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != SNAPSHOT_MAGIC {
        return Err(Error::Format(format!("bad snapshot magic {magic:?}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let grid = Grid::new(dims[0], dims[1], dims[2])?;
    let mut values = Vec::with_capacity(grid.len());
    let mut b = [0u8; 8];
    for _ in 0..grid.len() {
        r.read_exact(&mut b)?;
        values.push(f64::from_le_bytes(b));
    }
    Ok((grid, ScalarField(values)))
}
