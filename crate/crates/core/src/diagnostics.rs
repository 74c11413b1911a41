//! Energies, the trajectory ledger and the inequality checks run over it.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::flow::{FlowConfig, FlowProblem, MapState, Outcome};
use crate::heatkernel::SpectralDecomposition;
use crate::operators::ScalarField;
use crate::target::{EmbeddedTarget, Target};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub e_h: f64,
    pub e_v: f64,
    pub e_p: f64,
    pub e_g: f64,
    pub e: f64,
    pub sup_e: f64,
    pub sup_tau: f64,
    /// |du/dt| proxy, equal to sup_tau along the flow.
    pub sup_ut: f64,
    pub tau_l2_sq: f64,
    pub normal_defect: f64,
}

impl EnergyReport {
    pub fn is_finite(&self) -> bool {
        [self.e_h, self.e_v, self.e_p, self.sup_e, self.sup_tau, self.tau_l2_sq, self.normal_defect]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Energies of u given its tension field.
pub fn energies_with_tension(problem: &FlowProblem, u: &MapState, tau: &[ScalarField]) -> EnergyReport {
    let n = u.nodes();
    let vol = problem.grid.cell_volume();
    let metric: Vec<f64> = match &problem.target {
        Target::Hyperbolic(d) => (0..n)
            .map(|p| d.conformal_factor([u.components[0].0[p], u.components[1].0[p]]).powi(2))
            .collect(),
        _ => vec![1.0; n],
    };
    let mut dens_h = vec![0.0; n];
    let mut dens_v = vec![0.0; n];
    for a in 0..problem.model.dim() {
        let dens = if a < problem.model.horizontal_rank { &mut dens_h } else { &mut dens_v };
        for d in problem.derivative(u, a) {
            for p in 0..n {
                dens[p] += 0.5 * metric[p] * d.0[p] * d.0[p];
            }
        }
    }
    let mut y = vec![0.0; u.components.len()];
    let mut e_p = 0.0;
    let mut defect = 0.0;
    let emb = match (&problem.target, u.representation) {
        (Target::Sphere(s), _) => Some(s),
        _ => None,
    };
    let mut sup_tau: f64 = 0.0;
    let mut tau_l2 = 0.0;
    let mut t = vec![0.0; tau.len()];
    for p in 0..n {
        for (c, f) in u.components.iter().enumerate() {
            y[c] = f.0[p];
        }
        if !problem.potential.is_zero() {
            e_p -= problem.potential.value(&y);
        }
        if let Some(s) = emb {
            defect += s.distance(&y).powi(2);
        }
        for (c, f) in tau.iter().enumerate() {
            t[c] = f.0[p];
        }
        let t2 = metric[p] * t.iter().map(|v| v * v).sum::<f64>();
        sup_tau = sup_tau.max(t2.sqrt());
        tau_l2 += t2;
    }
    let e_h = vol * dens_h.iter().sum::<f64>();
    let e_v = vol * dens_v.iter().sum::<f64>();
    let e_p = vol * e_p;
    let sup_e = dens_h.iter().zip(&dens_v).map(|(a, b)| a + b).fold(0.0, f64::max);
    EnergyReport {
        e_h,
        e_v,
        e_p,
        e_g: e_h + e_p,
        e: e_h + e_v,
        sup_e,
        sup_tau,
        sup_ut: sup_tau,
        tau_l2_sq: vol * tau_l2,
        normal_defect: vol * defect,
    }
}

/// Energies of u (computes the tension field).
pub fn energies(problem: &FlowProblem, u: &MapState) -> Result<EnergyReport> {
    crate::flow::report(problem, u)
}

/// E_G of u without the tension field.
pub fn energy_g(problem: &FlowProblem, u: &MapState) -> f64 {
    let tau = vec![ScalarField::zeros(u.nodes()); u.components.len()];
    energies_with_tension(problem, u, &tau).e_g
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub t: f64,
    /// Step that produced this entry (0 for the initial entry).
    pub dt: f64,
    pub report: EnergyReport,
    /// sup |u(t) - u(t - dt)| / dt
    pub sup_ut_fd: f64,
}

#[derive(Clone, Debug)]
pub struct TrajectoryLedger {
    pub config: FlowConfig,
    pub entries: Vec<LedgerEntry>,
    pub outcome: Outcome,
    pub halvings: u32,
    pub snapshots: Vec<MapState>,
}

pub const CSV_HEADER: &str = "t,E_H,E_V,E_P,E_G,sup_e,sup_tau,defect,tau_l2_sq,dt,sup_ut_fd";

impl TrajectoryLedger {
    pub fn new(config: FlowConfig) -> Self {
        TrajectoryLedger {
            config,
            entries: Vec::new(),
            outcome: Outcome::BudgetExhausted,
            halvings: 0,
            snapshots: Vec::new(),
        }
    }

    pub fn push(&mut self, entry: LedgerEntry) {
        if let Some(last) = self.entries.last() {
            assert!(entry.t > last.t, "ledger times must increase");
        }
        self.entries.push(entry);
    }

    pub fn first(&self) -> &LedgerEntry {
        &self.entries[0]
    }

    pub fn last(&self) -> &LedgerEntry {
        self.entries.last().expect("ledger is never empty")
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for e in &self.entries {
            let r = &e.report;
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                e.t, r.e_h, r.e_v, r.e_p, r.e_g, r.sup_e, r.sup_tau, r.normal_defect, r.tau_l2_sq, e.dt, e.sup_ut_fd
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Max over consecutive ledger entries of |dE_G/dt + int |tau|^2| with the
/// tension taken at the left end point. Returns (residual, entry index).
pub fn energy_identity_residual(ledger: &TrajectoryLedger) -> Option<(f64, usize)> {
    let e = &ledger.entries;
    if e.len() < 2 {
        return None;
    }
    let mut best = (0.0, 0);
    for k in 0..e.len() - 1 {
        let dt = e[k + 1].t - e[k].t;
        let r = ((e[k + 1].report.e_g - e[k].report.e_g) / dt + e[k].report.tau_l2_sq).abs();
        if r > best.0 {
            best = (r, k);
        }
    }
    Some(best)
}

/// Least-squares slope of y against x.
pub fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

/// Slope of log(err) against log(h).
pub fn fitted_order(h: &[f64], err: &[f64]) -> f64 {
    let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    linear_slope(&lx, &ly)
}

/// Least-squares rate of log(sup|tau|) over the final half of the ledger.
pub fn fitted_decay_rate(ledger: &TrajectoryLedger) -> Option<f64> {
    let e = &ledger.entries;
    let half: Vec<&LedgerEntry> = e[e.len() / 2..].iter().filter(|x| x.report.sup_tau > 0.0).collect();
    if half.len() < 2 {
        return None;
    }
    let t: Vec<f64> = half.iter().map(|x| x.t).collect();
    let l: Vec<f64> = half.iter().map(|x| x.report.sup_tau.ln()).collect();
    Some(linear_slope(&t, &l))
}

#[derive(Clone, Debug, Serialize)]
pub struct SupBoundReport {
    pub lambda_g: f64,
    pub margin: f64,
    /// max over entries of sup|tau|^2(t) / (e^{2 lambda t} sup|tau|^2(0))
    pub worst_ratio: f64,
    pub worst_t: f64,
    pub pass: bool,
    /// sum of dt * sup|tau|, bounding the distance travelled
    pub distance_bound: f64,
    pub decay_rate: Option<f64>,
}

pub fn sup_bound_checks(ledger: &TrajectoryLedger, lambda_g: f64, margin: f64) -> SupBoundReport {
    let e = &ledger.entries;
    let t0 = e[0].t;
    let s0 = e[0].report.sup_tau.powi(2);
    let mut worst = (0.0f64, t0);
    for x in e {
        let bound = (2.0 * lambda_g * (x.t - t0)).exp() * s0;
        let ratio = if bound > 0.0 {
            x.report.sup_tau.powi(2) / bound
        } else if x.report.sup_tau == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if ratio > worst.0 {
            worst = (ratio, x.t);
        }
    }
    let distance_bound = e.windows(2).map(|w| (w[1].t - w[0].t) * w[0].report.sup_tau).sum();
    SupBoundReport {
        lambda_g,
        margin,
        worst_ratio: worst.0,
        worst_t: worst.1,
        pass: worst.0 <= 1.0 + margin,
        distance_bound,
        decay_rate: fitted_decay_rate(ledger),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerticalEnergyReport {
    pub lambda_g: f64,
    /// true when lambda_g <= 0 and monotonicity was asserted
    pub monotone_expected: bool,
    pub max_increase: f64,
    pub max_e_v: f64,
    pub initial_e_v: f64,
    pub pass: bool,
}

/// Vertical energy along the ledger: non-increasing (+tol per step) when
/// lambda_g <= 0, bounded otherwise.
pub fn vertical_energy_monitor(ledger: &TrajectoryLedger, lambda_g: f64, tol: f64) -> VerticalEnergyReport {
    let e = &ledger.entries;
    let max_increase = e
        .windows(2)
        .map(|w| w[1].report.e_v - w[0].report.e_v)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_e_v = e.iter().map(|x| x.report.e_v).fold(0.0, f64::max);
    let monotone_expected = lambda_g <= 0.0;
    let pass = if monotone_expected {
        e.len() < 2 || max_increase <= tol
    } else {
        max_e_v.is_finite()
    };
    VerticalEnergyReport {
        lambda_g,
        monotone_expected,
        max_increase: if e.len() < 2 { 0.0 } else { max_increase },
        max_e_v,
        initial_e_v: e[0].report.e_v,
        pass,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MaxPrincipleReport {
    pub times: Vec<f64>,
    pub sups: Vec<f64>,
    pub initial_sup: f64,
    pub pass: bool,
}

/// Evolve a nonnegative field by the heat semigroup and check sup(t) <= sup(0).
pub fn max_principle_check(spec: &SpectralDecomposition, phi0: &ScalarField, times: &[f64]) -> Result<MaxPrincipleReport> {
    if phi0.0.iter().any(|v| *v < 0.0) {
        return Err(crate::Error::Domain("max principle check needs a nonnegative field".into()));
    }
    let initial_sup = phi0.max();
    let mut sups = Vec::with_capacity(times.len());
    for &t in times {
        sups.push(spec.heat_apply(t, phi0)?.max());
    }
    let pass = sups.iter().all(|s| *s <= initial_sup + 1e-9);
    Ok(MaxPrincipleReport {
        times: times.to_vec(),
        sups,
        initial_sup,
        pass,
    })
}

/// Normal defect int |u - Pi(u)|^2 of a map into an embedded target.
pub fn normal_defect(problem: &FlowProblem, u: &MapState) -> Result<f64> {
    let emb = problem
        .target
        .embedded()
        .ok_or_else(|| crate::Error::Domain("normal defect needs an embedded target".into()))?;
    let mut s = 0.0;
    for p in 0..u.nodes() {
        let y = u.point(p);
        let d = emb.distance(&y);
        if !(d < emb.tubular_radius()) {
            return Err(crate::Error::Domain(format!("value at node {p} outside the tube")));
        }
        s += d * d;
    }
    Ok(s * problem.grid.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slopes_and_orders() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|v| 3.0 * v * v).collect();
        assert!((fitted_order(&h, &e) - 2.0).abs() < 1e-12);
        assert!((linear_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-15);
    }
}
