//! Sparse multivariate polynomials in the three group coordinates.

use std::collections::BTreeMap;
use std::fmt;

pub type Exponent = [u32; 3];

const ZERO_TOL: f64 = 1e-14;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly {
    terms: BTreeMap<Exponent, f64>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: f64) -> Self {
        Poly::monomial(c, [0, 0, 0])
    }

    /// The coordinate function x_var.
    pub fn coord(var: usize) -> Self {
        let mut e = [0; 3];
        e[var] = 1;
        Poly::monomial(1.0, e)
    }

    pub fn monomial(c: f64, exp: Exponent) -> Self {
        let mut p = Poly::zero();
        p.add_term(exp, c);
        p
    }

    fn add_term(&mut self, exp: Exponent, c: f64) {
        let v = self.terms.entry(exp).or_insert(0.0);
        *v += c;
        if v.abs() <= ZERO_TOL {
            self.terms.remove(&exp);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Some(c) when the polynomial is the constant c.
    pub fn as_constant(&self) -> Option<f64> {
        match self.terms.len() {
            0 => Some(0.0),
            1 => self.terms.get(&[0, 0, 0]).copied(),
            _ => None,
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, p: [f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * p[0].powi(e[0] as i32) * p[1].powi(e[1] as i32) * p[2].powi(e[2] as i32))
            .sum()
    }

    pub fn derivative(&self, var: usize) -> Poly {
        let mut out = Poly::zero();
        for (e, c) in &self.terms {
            if e[var] > 0 {
                let mut e2 = *e;
                e2[var] -= 1;
                out.add_term(e2, c * e[var] as f64);
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = Poly::zero();
        for (e, c) in &self.terms {
            out.add_term(*e, c * s);
        }
        out
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(*e, *c);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                out.add_term([e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2]], c1 * c2);
            }
        }
        out
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let names = ["x", "y", "z"];
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (v, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "*{}", names[v])?,
                    _ => write!(f, "*{}^{}", names[v], k)?,
                }
            }
        }
        Ok(())
    }
}
