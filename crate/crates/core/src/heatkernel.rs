//! Dense spectral realization of the heat semigroup of the discrete
//! sub-Laplacian, kernel property checks and the Duhamel-Picard iteration.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{FlowProblem, MapState, Representation};
use crate::model::{Grid, LatticeKind};
use crate::operators::{Operators, ScalarField, SparseOperator};
use crate::target::Target;

pub const DEFAULT_NODE_CAP: usize = 4096;

/// Eigenpairs of -Delta_H, eigenvalues ascending, eigenvectors orthonormal
/// in the Euclidean sense (so K = N V e^{-t Lambda} V^T is the kernel density
/// with respect to the unit-volume node measure).
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub grid: Grid,
    pub eigenvalues: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn spectral_decompose(op: &SparseOperator, grid: &Grid, cap: usize) -> Result<SpectralDecomposition> {
    let n = op.size();
    if n != grid.len() {
        return Err(Error::Domain(format!("operator size {n} does not match grid {grid}")));
    }
    if n > cap {
        return Err(Error::SpectralCap { nodes: n, cap });
    }
    if !op.symmetric || !op.is_exactly_symmetric() {
        return Err(Error::Domain("spectral decomposition needs a symmetric operator".into()));
    }
    let dense = -op.to_dense();
    let eig = SymmetricEigen::new(dense);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpectralDecomposition {
        grid: *grid,
        eigenvalues,
        vectors,
    })
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// max |(-L) V - V Lambda|
    pub fn residual(&self, op: &SparseOperator) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, &lam) in self.eigenvalues.iter().enumerate() {
            let v = ScalarField(self.vectors.column(m).iter().copied().collect());
            let lv = op.apply(&v);
            for p in 0..v.len() {
                worst = worst.max((-lv.0[p] - lam * v.0[p]).abs());
            }
        }
        worst
    }

    /// max |V^T V - I|
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.vectors.transpose() * &self.vectors;
        let n = self.len();
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in 0..n {
                let want = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((g[(r, c)] - want).abs());
            }
        }
        worst
    }

    /// Number of eigenvalues below tol.
    pub fn kernel_dimension(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|l| **l < tol).count()
    }

    fn check_time(t: f64) -> Result<()> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::Domain(format!("heat semigroup needs t >= 0, got {t}")));
        }
        Ok(())
    }

    pub fn coefficients(&self, f: &ScalarField) -> DVector<f64> {
        self.vectors.tr_mul(&DVector::from_column_slice(&f.0))
    }

    pub fn synthesize(&self, c: &DVector<f64>) -> ScalarField {
        ScalarField((&self.vectors * c).iter().copied().collect())
    }

    /// e^{t Delta_H} f
    pub fn heat_apply(&self, t: f64, f: &ScalarField) -> Result<ScalarField> {
        Self::check_time(t)?;
        if t == 0.0 {
            return Ok(f.clone());
        }
        let mut c = self.coefficients(f);
        for (ci, lam) in c.iter_mut().zip(&self.eigenvalues) {
            *ci *= (-t * lam).exp();
        }
        Ok(self.synthesize(&c))
    }

    /// Kernel density matrix K(x, y, t).
    pub fn kernel_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        Self::check_time(t)?;
        let n = self.len() as f64;
        let mut scaled = self.vectors.clone();
        for (m, lam) in self.eigenvalues.iter().enumerate() {
            let s = n * (-t * lam).exp();
            scaled.column_mut(m).scale_mut(s);
        }
        Ok(scaled * self.vectors.transpose())
    }

    /// Rows of K(., ., t) for the given nodes.
    pub fn kernel_rows(&self, t: f64, rows: &[usize]) -> Result<DMatrix<f64>> {
        Self::check_time(t)?;
        let n = self.len();
        let scale: Vec<f64> = self.eigenvalues.iter().map(|l| n as f64 * (-t * l).exp()).collect();
        let sub = DMatrix::from_fn(rows.len(), n, |r, m| self.vectors[(rows[r], m)] * scale[m]);
        Ok(sub * self.vectors.transpose())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelCheck {
    pub t: f64,
    pub asymmetry: f64,
    pub min_entry: f64,
    pub row_mass_deviation: f64,
    /// max |K(2t) - K(t) M K(t)|
    pub semigroup_residual: f64,
    pub positivity_checked: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub grid: String,
    pub nodes: usize,
    pub t_floor: f64,
    pub lambda_1: f64,
    pub checks: Vec<KernelCheck>,
    pub pass: bool,
}

pub const ROW_MASS_TOL: f64 = 1e-8;
pub const ASYMMETRY_TOL: f64 = 1e-10;
pub const SEMIGROUP_TOL: f64 = 1e-9;

/// Positivity floor t >= h^2 with h the coarsest horizontal spacing.
pub fn positivity_floor(grid: &Grid) -> f64 {
    let h = grid.spacing();
    h[0].max(h[1]).powi(2)
}

pub fn kernel_checks(spec: &SpectralDecomposition, times: &[f64]) -> Result<KernelReport> {
    let n = spec.len();
    let measure = 1.0 / n as f64;
    let t_floor = positivity_floor(&spec.grid);
    let mut checks = Vec::with_capacity(times.len());
    for &t in times {
        let k = spec.kernel_matrix(t)?;
        let k2 = spec.kernel_matrix(2.0 * t)?;
        let mut asym: f64 = 0.0;
        let mut min_entry = f64::INFINITY;
        let mut mass: f64 = 0.0;
        for r in 0..n {
            let mut row = 0.0;
            for c in 0..n {
                let v = k[(r, c)];
                asym = asym.max((v - k[(c, r)]).abs());
                min_entry = min_entry.min(v);
                row += v * measure;
            }
            mass = mass.max((row - 1.0).abs());
        }
        let comp = (&k * &k) * measure;
        let semigroup = (k2 - comp).amax();
        let positivity_checked = t >= t_floor;
        let pass = asym <= ASYMMETRY_TOL
            && mass <= ROW_MASS_TOL
            && semigroup <= SEMIGROUP_TOL
            && (!positivity_checked || min_entry > 0.0);
        checks.push(KernelCheck {
            t,
            asymmetry: asym,
            min_entry,
            row_mass_deviation: mass,
            semigroup_residual: semigroup,
            positivity_checked,
            pass,
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(KernelReport {
        grid: spec.grid.to_string(),
        nodes: n,
        t_floor,
        lambda_1: spec.eigenvalues.get(1).copied().unwrap_or(f64::NAN),
        checks,
        pass,
    })
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Golub-Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let j = DMatrix::from_fn(n, n, |r, c| {
        if r + 1 == c || c + 1 == r {
            let k = r.max(c) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Nodes with k = 0; the built-in operators commute with z-translations,
/// so these rows realize the max over all x.
pub fn z_slice_rows(grid: &Grid) -> Vec<usize> {
    (0..grid.nx)
        .flat_map(|i| (0..grid.ny).map(move |j| grid.index(i, j, 0)))
        .collect()
}

/// max_x int_0^t int_M |grad^H_x K(x, y, s)| dv(y) ds over the given rows,
/// by Gauss-Legendre quadrature in sigma = sqrt(s).
pub fn kernel_gradient_mass(spec: &SpectralDecomposition, ops: &Operators, t: f64, rows: &[usize], nodes: usize) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("kernel gradient mass needs t > 0, got {t}")));
    }
    let n = spec.len();
    // neighbour of each probe row along each horizontal frame, with its step
    let mut needed: Vec<usize> = rows.to_vec();
    let mut links = Vec::new();
    for (ri, &x) in rows.iter().enumerate() {
        for d in ops.horizontal() {
            let row = d.op.matrix.outer_view(x).expect("row in range");
            let (q, w) = row
                .iter()
                .find(|(c, _)| *c != x)
                .map(|(c, w)| (c, *w))
                .expect("frame stencil has an off-diagonal entry");
            needed.push(q);
            links.push((ri, needed.len() - 1, w));
        }
    }
    let (gx, gw) = gauss_legendre(nodes);
    let half = t.sqrt() / 2.0;
    let mut total = vec![0.0; rows.len()];
    for (xi, wi) in gx.iter().zip(&gw) {
        let sigma = half * (xi + 1.0);
        let s = sigma * sigma;
        let k = spec.kernel_rows(s, &needed)?;
        let mut grad_sq = DMatrix::<f64>::zeros(rows.len(), n);
        for &(ri, qi, w) in &links {
            for c in 0..n {
                let g = w * (k[(qi, c)] - k[(ri, c)]);
                grad_sq[(ri, c)] += g * g;
            }
        }
        for (ri, tot) in total.iter_mut().enumerate() {
            let mass: f64 = (0..n).map(|c| grad_sq[(ri, c)].sqrt()).sum::<f64>() / n as f64;
            *tot += wi * half * 2.0 * sigma * mass;
        }
    }
    Ok(total.into_iter().fold(0.0, f64::max))
}

/// Lift part of a torus map that carries the winding: W applied to the
/// abelianized coordinates. Its discrete frame derivatives are constant.
pub fn linear_lift(grid: &Grid, lattice: LatticeKind, winding: &[[i64; 3]]) -> Vec<ScalarField> {
    winding
        .iter()
        .map(|w| {
            ScalarField::from_fn(grid, |p| {
                let z = if lattice == LatticeKind::Standard { w[2] as f64 * p[2] } else { 0.0 };
                w[0] as f64 * p[0] + w[1] as f64 * p[1] + z
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct PicardReport {
    pub t: f64,
    pub quadrature_nodes: usize,
    pub iterations: usize,
    /// X_k for k = 1..=iterations: C^1_H distance between u_k and u_{k-1}
    pub cauchy: Vec<f64>,
    /// X_{k+1} / X_k
    pub ratios: Vec<f64>,
    pub contracting: bool,
}

/// Duhamel-Picard iterates on the time nodes s_j = j t / Q.
#[derive(Clone, Debug)]
pub struct PicardState {
    pub k: usize,
    pub times: Vec<f64>,
    pub iterate: Vec<MapState>,
    pub report: PicardReport,
}

impl PicardState {
    pub fn final_map(&self) -> &MapState {
        self.iterate.last().expect("at least one time node")
    }
}

/// C^1_H norm of a vector-valued periodic field: sup|f| + sup|grad^H f|.
pub fn c1h_norm(ops: &Operators, f: &[ScalarField]) -> f64 {
    let n = f[0].len();
    let mut val = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for c in f {
        for p in 0..n {
            val[p] += c.0[p] * c.0[p];
        }
        for d in ops.horizontal() {
            let g = d.apply(c);
            for p in 0..n {
                grad[p] += g.0[p] * g.0[p];
            }
        }
    }
    val.iter().fold(0.0f64, |m, v| m.max(v.sqrt())) + grad.iter().fold(0.0f64, |m, v| m.max(v.sqrt()))
}

/// Nonlinear source of the Duhamel formula: tau(u) - Delta_H u.
fn duhamel_source(problem: &FlowProblem, u: &MapState) -> Result<Vec<ScalarField>> {
    let tau = problem.tension(u)?;
    let lap = problem.laplacian(u);
    Ok(tau.iter().zip(&lap).map(|(a, b)| a.sub(b)).collect())
}

pub fn picard_run(
    problem: &FlowProblem,
    spec: &SpectralDecomposition,
    ubar: &MapState,
    t: f64,
    q: usize,
    k_max: usize,
) -> Result<PicardState> {
    if problem.target.embedded().is_none() {
        return Err(Error::Domain("picard iteration needs an embedded target".into()));
    }
    if !(t > 0.0) || q == 0 || k_max == 0 {
        return Err(Error::Domain("picard iteration needs t > 0, Q >= 1 and k_max >= 1".into()));
    }
    if spec.grid != problem.grid {
        return Err(Error::Domain("decomposition grid differs from the problem grid".into()));
    }
    problem.validate(ubar)?;
    let rep = match problem.target {
        Target::Sphere(_) => Representation::ExtrinsicTubular,
        _ => ubar.representation,
    };
    let comps = ubar.components.len();
    let lift = match &ubar.winding {
        Some(w) => linear_lift(&problem.grid, problem.model.lattice, w),
        None => vec![ScalarField::zeros(ubar.nodes()); comps],
    };
    let times: Vec<f64> = (0..=q).map(|j| t * j as f64 / q as f64).collect();
    let ds = t / q as f64;
    let lam = &spec.eigenvalues;
    let periodic: Vec<DVector<f64>> = ubar
        .components
        .iter()
        .zip(&lift)
        .map(|(c, l)| spec.coefficients(&c.sub(l)))
        .collect();
    let decay = |c: &DVector<f64>, s: f64| -> DVector<f64> {
        DVector::from_iterator(c.len(), c.iter().zip(lam).map(|(v, l)| v * (-s * l).exp()))
    };
    let build = |coef: &[Vec<DVector<f64>>]| -> Vec<MapState> {
        (0..=q)
            .map(|j| MapState {
                representation: rep,
                components: (0..comps)
                    .map(|c| {
                        let mut f = spec.synthesize(&coef[j][c]);
                        f.axpy(1.0, &lift[c]);
                        f
                    })
                    .collect(),
                winding: ubar.winding.clone(),
                t: ubar.t + times[j],
            })
            .collect()
    };
    let free: Vec<Vec<DVector<f64>>> = times
        .iter()
        .map(|&s| periodic.iter().map(|c| decay(c, s)).collect())
        .collect();
    let mut iterate = build(&free);
    let tube = problem.target.embedded().map(|e| e.tubular_radius()).unwrap_or(f64::INFINITY);
    let mut cauchy = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut source = Vec::with_capacity(q + 1);
        for u in &iterate {
            let f = duhamel_source(problem, u).map_err(|e| match e {
                Error::Domain(m) => Error::Domain(format!("picard iterate {} invalid: {m}", k - 1)),
                other => other,
            })?;
            source.push(f.iter().map(|c| spec.coefficients(c)).collect::<Vec<_>>());
        }
        let mut coef = free.clone();
        for j in 1..=q {
            for l in 0..=j {
                let w = if l == 0 || l == j { 0.5 * ds } else { ds };
                for c in 0..comps {
                    let add = decay(&source[l][c], times[j] - times[l]);
                    coef[j][c].axpy(w, &add, 1.0);
                }
            }
        }
        let next = build(&coef);
        if let Some(emb) = problem.target.embedded() {
            for u in &next {
                let d = (0..u.nodes()).map(|p| emb.distance(&u.point(p))).fold(0.0, f64::max);
                if !(d < tube) {
                    return Err(Error::TubeExit { step: k, defect: d });
                }
            }
        }
        let x = next
            .iter()
            .zip(&iterate)
            .map(|(a, b)| {
                let diff: Vec<ScalarField> = a.components.iter().zip(&b.components).map(|(x, y)| x.sub(y)).collect();
                c1h_norm(&problem.ops, &diff)
            })
            .fold(0.0, f64::max);
        cauchy.push(x);
        iterate = next;
    }
    let ratios: Vec<f64> = cauchy.windows(2).map(|w| w[1] / w[0]).collect();
    let contracting = ratios.iter().all(|r| *r < 1.0);
    Ok(PicardState {
        k: k_max,
        times,
        iterate,
        report: PicardReport {
            t,
            quadrature_nodes: q,
            iterations: k_max,
            cauchy,
            ratios,
            contracting,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GroupModel;

    fn spec(n: usize) -> (Operators, SpectralDecomposition) {
        let g = Grid::heisenberg(n).unwrap();
        let ops = Operators::assemble(&GroupModel::heisenberg(), &g).unwrap();
        let s = spectral_decompose(&ops.laplacian, &g, DEFAULT_NODE_CAP).unwrap();
        (ops, s)
    }

    #[test]
    fn decomposition_invariants() {
        let (ops, s) = spec(4);
        assert!(s.eigenvalues[0].abs() < 1e-10);
        assert!(s.eigenvalues[1] > 0.0);
        let lmax = s.eigenvalues.last().copied().unwrap();
        assert!(s.residual(&ops.laplacian) < 1e-9 * lmax);
        assert!(s.orthonormality_defect() < 1e-10);
        let v0 = s.vectors.column(0);
        let c = v0[0];
        assert!(v0.iter().all(|v| (v - c).abs() < 1e-10));
    }

    #[test]
    fn cap_is_enforced() {
        let g = Grid::heisenberg(4).unwrap();
        let ops = Operators::assemble(&GroupModel::heisenberg(), &g).unwrap();
        assert!(matches!(
            spectral_decompose(&ops.laplacian, &g, 100),
            Err(Error::SpectralCap { nodes: 256, cap: 100 })
        ));
    }

    #[test]
    fn degenerate_torus_kernel_dimension() {
        let g = Grid::new(4, 4, 6).unwrap_or_else(|_| Grid::new(4, 4, 8).unwrap());
        let ops = Operators::assemble(&GroupModel::torus_degenerate(), &g).unwrap();
        let s = spectral_decompose(&ops.laplacian, &g, DEFAULT_NODE_CAP).unwrap();
        assert_eq!(s.kernel_dimension(1e-9), g.nz);
    }

    #[test]
    fn heat_apply_examples() {
        let (_, s) = spec(4);
        let g = s.grid;
        let f = ScalarField::from_fn(&g, crate::operators::theta_probe);
        assert_eq!(s.heat_apply(0.0, &f).unwrap(), f);
        assert!(s.heat_apply(-1.0, &f).is_err());
        let m = 7;
        let phi = ScalarField(s.vectors.column(m).iter().copied().collect());
        let out = s.heat_apply(0.3, &phi).unwrap();
        let want = (-0.3 * s.eigenvalues[m]).exp();
        for p in 0..g.len() {
            assert!((out.0[p] - want * phi.0[p]).abs() <= 1e-10 * phi.sup());
        }
        let c = ScalarField::constant(g.len(), 2.5);
        assert!(s.heat_apply(1.7, &c).unwrap().sub(&c).sup() < 1e-10);
    }

    #[test]
    fn semigroup_symmetry_mass() {
        let (_, s) = spec(4);
        let g = s.grid;
        let f = ScalarField::from_fn(&g, |p| (p[0] * 5.0 + p[2] * 13.0).sin() + p[1]);
        let h = ScalarField::from_fn(&g, |p| (p[1] * 3.0 - p[2] * 7.0).cos());
        let a = s.heat_apply(0.02, &s.heat_apply(0.03, &f).unwrap()).unwrap();
        let b = s.heat_apply(0.05, &f).unwrap();
        assert!(a.sub(&b).sup() < 1e-9);
        let l = s.heat_apply(0.04, &f).unwrap().dot(&h);
        let r = f.dot(&s.heat_apply(0.04, &h).unwrap());
        assert!((l - r).abs() < 1e-9);
        let m0 = crate::operators::integrate(&g, &f);
        let m1 = crate::operators::integrate(&g, &s.heat_apply(0.2, &f).unwrap());
        assert!((m0 - m1).abs() < 1e-9);
    }

    #[test]
    fn kernel_rows_match_matrix() {
        let (_, s) = spec(3);
        let k = s.kernel_matrix(0.01).unwrap();
        let rows = s.kernel_rows(0.01, &[0, 5]).unwrap();
        for c in 0..s.len() {
            assert!((rows[(1, c)] - k[(5, c)]).abs() < 1e-10);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((int - 2.0 / 15.0).abs() < 1e-13);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn laplacian_commutes_with_z_translation() {
        let g = Grid::heisenberg(4).unwrap();
        let ops = Operators::assemble(&GroupModel::heisenberg(), &g).unwrap();
        let f = ScalarField::from_fn(&g, |p| (p[0] * 5.0 + p[2] * 13.0).sin() + p[1] * p[2]);
        let shift = |f: &ScalarField| {
            ScalarField(
                (0..g.len())
                    .map(|p| {
                        let (i, j, k) = g.triple(p);
                        f.0[g.index(i, j, (k + 1) % g.nz)]
                    })
                    .collect(),
            )
        };
        let a = shift(&ops.laplacian.apply(&f));
        let b = ops.laplacian.apply(&shift(&f));
        assert!(a.sub(&b).sup() < 1e-9);
    }

    #[test]
    fn gradient_mass_is_monotone_in_t() {
        let (ops, s) = spec(3);
        let rows = z_slice_rows(&s.grid);
        let a = kernel_gradient_mass(&s, &ops, 0.02, &rows, 12).unwrap();
        let b = kernel_gradient_mass(&s, &ops, 0.01, &rows, 12).unwrap();
        let c = kernel_gradient_mass(&s, &ops, 0.005, &rows, 12).unwrap();
        assert!(a > b && b > c && c > 0.0);
        // the z-slice realizes the max over all rows
        let all: Vec<usize> = (0..s.len()).collect();
        let full = kernel_gradient_mass(&s, &ops, 0.01, &all, 12).unwrap();
        assert!((full - b).abs() < 1e-9 * full);
    }
}
