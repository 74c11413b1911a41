//! Uniform grids on the unit fundamental domain and lattice reduction of
//! grid points given in integer index coordinates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx < 2 || ny < 2 || nz < 2 {
            return Err(Error::InvalidGrid(format!(
                "node counts must be at least 2, got {nx}x{ny}x{nz}"
            )));
        }
        if nz % ny != 0 {
            return Err(Error::InvalidGrid(format!(
                "N_y = {ny} must divide N_z = {nz} so the twisted x-wraparound lands on nodes"
            )));
        }
        Ok(Grid { nx, ny, nz })
    }

    /// The square Heisenberg-compatible grid n x n x n^2.
    pub fn heisenberg(n: usize) -> Result<Self> {
        Grid::new(n, n, n * n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 3] {
        [1.0 / self.nx as f64, 1.0 / self.ny as f64, 1.0 / self.nz as f64]
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    /// Node volume h_x h_y h_z.
    pub fn cell_volume(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.nz + k
    }

    pub fn triple(&self, p: usize) -> (usize, usize, usize) {
        let k = p % self.nz;
        let j = (p / self.nz) % self.ny;
        let i = p / (self.nz * self.ny);
        (i, j, k)
    }

    pub fn coords(&self, p: usize) -> [f64; 3] {
        let (i, j, k) = self.triple(p);
        let h = self.spacing();
        [i as f64 * h[0], j as f64 * h[1], k as f64 * h[2]]
    }

    /// Twice-refined grid keeping N_z / (N_x N_y) fixed.
    pub fn refined(&self) -> Result<Self> {
        Grid::new(2 * self.nx, 2 * self.ny, 4 * self.nz)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(['x', 'X']).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidGrid(format!("expected NXxNYxNZ, got {s:?}")));
        }
        let mut n = [0usize; 3];
        for (slot, part) in n.iter_mut().zip(&parts) {
            *slot = part
                .trim()
                .parse()
                .map_err(|_| Error::InvalidGrid(format!("bad node count {part:?} in {s:?}")))?;
        }
        Grid::new(n[0], n[1], n[2])
    }
}

/// Discrete lattice acting on the left of the model group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatticeKind {
    /// Integer Heisenberg lattice for the law (x,y,z)(x',y',z') = (x+x', y+y', z+z'+x y').
    Heisenberg,
    /// Plain integer translations of R^3.
    Standard,
}

impl LatticeKind {
    /// Write an index point (I, J, K) as gamma * p0 with p0 in the fundamental
    /// domain. Returns p0 as a node index and gamma as integer coordinates.
    pub fn reduce(&self, grid: &Grid, idx: [i64; 3]) -> (usize, [i64; 3]) {
        let (nx, ny, nz) = (grid.nx as i64, grid.ny as i64, grid.nz as i64);
        let [i, j, k] = idx;
        match self {
            LatticeKind::Standard => {
                let a = i.div_euclid(nx);
                let b = j.div_euclid(ny);
                let c = k.div_euclid(nz);
                let p = grid.index(
                    i.rem_euclid(nx) as usize,
                    j.rem_euclid(ny) as usize,
                    k.rem_euclid(nz) as usize,
                );
                (p, [a, b, c])
            }
            LatticeKind::Heisenberg => {
                let twist = nz / ny;
                let a = i.div_euclid(nx);
                let i0 = i - a * nx;
                let k1 = k - a * j * twist;
                let b = j.div_euclid(ny);
                let j0 = j - b * ny;
                let c = k1.div_euclid(nz);
                let k0 = k1 - c * nz;
                let p = grid.index(i0 as usize, j0 as usize, k0 as usize);
                (p, [a, b, a * b + c])
            }
        }
    }

    /// Left action gamma * p on real coordinates.
    pub fn act(&self, gamma: [i64; 3], p: [f64; 3]) -> [f64; 3] {
        let g = gamma.map(|v| v as f64);
        match self {
            LatticeKind::Standard => [p[0] + g[0], p[1] + g[1], p[2] + g[2]],
            LatticeKind::Heisenberg => [p[0] + g[0], p[1] + g[1], p[2] + g[2] + g[0] * p[1]],
        }
    }
}
