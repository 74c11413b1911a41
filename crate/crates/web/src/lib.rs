//! wasm-bindgen entry points for the static demo page in `www/`.
//! Every function returns a JSON string; errors come back as `{"error": ...}`.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use subflow::flow::{run_flow, FlowConfig, FlowProblem};
use subflow::heatkernel::{spectral_decompose, DEFAULT_NODE_CAP};
use subflow::initial::{initial_map, InitialSpec};
use subflow::model::{Grid, GroupModel};
use subflow::operators::Operators;
use subflow::scenario::eta_report;
use subflow::target::{Potential, Target};

fn respond(r: subflow::Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

/// Flow a perturbed identity lift into the flat 2-torus under the cosine
/// potential eps cos(2 pi y_1) on the n x n x n^2 grid.
pub fn torus_flow_json(n: usize, eps: f64, amplitude: f64, seed: u64, t_max: f64) -> subflow::Result<Value> {
    let grid = Grid::heisenberg(n)?;
    let problem = FlowProblem::new(GroupModel::heisenberg(), grid, Target::torus(2), Potential::Cosine { eps, axis: 0 })?;
    let spec = InitialSpec::TorusPerturbed {
        winding: vec![[1, 0, 0], [0, 1, 0]],
        amplitude,
    };
    let u0 = initial_map(&problem, &spec, seed, false)?;
    let config = FlowConfig {
        t_max,
        ..FlowConfig::for_operators(&problem.ops)
    };
    let run = run_flow(&problem, &u0, &config)?;
    let entries = &run.ledger.entries;
    // keep the payload small
    let stride = (entries.len() / 400).max(1);
    let pick: Vec<_> = entries
        .iter()
        .enumerate()
        .filter(|(i, _)| i % stride == 0 || *i + 1 == entries.len())
        .map(|(_, e)| e)
        .collect();
    let lambda_g = problem.potential.hessian_bound_exact();
    Ok(json!({
        "grid": grid.to_string(),
        "dt": config.dt,
        "lambda_g": lambda_g,
        "threshold": 0.5,
        "outcome": run.outcome().tag(),
        "steps": run.steps,
        "t": pick.iter().map(|e| e.t).collect::<Vec<_>>(),
        "e_g": pick.iter().map(|e| e.report.e_g).collect::<Vec<_>>(),
        "e_v": pick.iter().map(|e| e.report.e_v).collect::<Vec<_>>(),
        "sup_tau": pick.iter().map(|e| e.report.sup_tau).collect::<Vec<_>>(),
    }))
}

/// Heat kernel K_t(p, .) from the origin, restricted to the z = 0 slice.
pub fn heat_kernel_slice_json(n: usize, t: f64) -> subflow::Result<Value> {
    let grid = Grid::heisenberg(n)?;
    let ops = Operators::assemble(&GroupModel::heisenberg(), &grid)?;
    let spec = spectral_decompose(&ops.laplacian, &grid, DEFAULT_NODE_CAP)?;
    let row = spec.kernel_rows(t, &[0])?;
    let slice: Vec<Vec<f64>> = (0..grid.ny)
        .map(|j| (0..grid.nx).map(|i| row[(0, grid.index(i, j, 0))]).collect())
        .collect();
    let column: Vec<f64> = (0..grid.nz).map(|k| row[(0, grid.index(0, 0, k))]).collect();
    Ok(json!({
        "grid": grid.to_string(),
        "t": t,
        "lambda_1": spec.eigenvalues.get(1).copied().unwrap_or(0.0),
        "slice": slice,
        "z_column": column,
        "min": row.min(),
        "max": row.max(),
    }))
}

pub fn eta_json(model: &str) -> subflow::Result<Value> {
    let m = GroupModel::by_name(model)?;
    let grid = if m.name == "heisenberg" { Grid::heisenberg(4)? } else { Grid::new(4, 4, 4)? };
    let r = eta_report(&m, &grid, 16)?;
    Ok(json!({
        "model": r.model,
        "step": r.step,
        "eta_min": r.eta_min,
        "threshold": r.threshold,
        "brackets": m.bracket_entries()?.iter().map(|b| format!("[{}, {}] has {} coefficient {}", b.left, b.right, b.component, b.coefficient)).collect::<Vec<_>>(),
    }))
}

#[wasm_bindgen]
pub fn torus_flow(n: usize, eps: f64, amplitude: f64, seed: u32, t_max: f64) -> String {
    respond(torus_flow_json(n, eps, amplitude, seed as u64, t_max))
}

#[wasm_bindgen]
pub fn heat_kernel_slice(n: usize, t: f64) -> String {
    respond(heat_kernel_slice_json(n, t))
}

#[wasm_bindgen]
pub fn eta(model: &str) -> String {
    respond(eta_json(model))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_flow_reports_decreasing_energy() {
        let v = torus_flow_json(3, 0.006, 0.1, 1, 0.05).unwrap();
        let e: Vec<f64> = serde_json::from_value(v["e_g"].clone()).unwrap();
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert_eq!(v["threshold"], 0.5);
    }

    #[test]
    fn kernel_slice_is_positive_after_h_squared() {
        let v = heat_kernel_slice_json(3, 0.2).unwrap();
        assert!(v["min"].as_f64().unwrap() > 0.0);
        assert_eq!(v["slice"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn eta_for_both_models() {
        assert_eq!(eta_json("heisenberg").unwrap()["eta_min"], 1.0);
        assert_eq!(eta_json("torus-degenerate").unwrap()["eta_min"], 0.0);
        assert!(eta("nope").contains("error"));
    }
}
