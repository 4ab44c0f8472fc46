//! Browser bindings. Every entry point takes the oscillator setup as JSON
//! and returns JSON holding the numbers plus a ready-made SVG plot.

use cgthermo::experiments::{
    force_grid, force_sweep, thermal_states, work_distributions, ForceSweep, OscillatorSetup,
    ThermalStates, WorkDistributions,
};
use cgthermo::plot::{line_plot, Series};
use cgthermo::tpm::WorkDistribution;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Sweeps longer than this are refused to keep the page responsive.
const MAX_SWEEP_POINTS: usize = 400;

#[derive(Serialize)]
struct Plotted<T> {
    result: T,
    svg: String,
}

fn setup(json: &str) -> Result<OscillatorSetup, String> {
    let s: OscillatorSetup = serde_json::from_str(json).map_err(|e| format!("setup: {e}"))?;
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

fn encode<T: Serialize>(result: T, svg: String) -> Result<String, String> {
    serde_json::to_string(&Plotted { result, svg }).map_err(|e| e.to_string())
}

fn diagonal(dim: usize, re: &[f64]) -> Vec<(f64, f64)> {
    (0..dim).map(|i| (i as f64, re[i * dim + i])).collect()
}

pub fn states_json(setup_json: &str) -> Result<String, String> {
    let s = setup(setup_json)?;
    let t: ThermalStates = thermal_states(&s).map_err(|e| e.to_string())?;
    let svg = line_plot(
        &format!("level populations, beta = {}", t.beta),
        "level n",
        "population",
        &[
            Series::line("fine Gibbs", diagonal(t.fine.dim, &t.fine.re)),
            Series::line("coarse Gibbs", diagonal(t.coarse.dim, &t.coarse.re)),
        ],
    );
    encode(t, svg)
}

pub fn sweep_json(setup_json: &str, start: f64, stop: f64, step: f64) -> Result<String, String> {
    let s = setup(setup_json)?;
    let grid = force_grid(start, stop, step).map_err(|e| e.to_string())?;
    if grid.len() > MAX_SWEEP_POINTS {
        return Err(format!(
            "{} sweep points requested, at most {MAX_SWEEP_POINTS}",
            grid.len()
        ));
    }
    let sweep: ForceSweep = force_sweep(&s, &grid).map_err(|e| e.to_string())?;
    let pick = |g: fn(&cgthermo::experiments::SweepRow) -> f64| {
        sweep.rows.iter().map(|r| (r.f, g(r))).collect::<Vec<_>>()
    };
    let svg = line_plot(
        "dissipated work",
        "f",
        "<W> - dF",
        &[
            Series::line("fine", pick(|r| r.w_diss_fine)),
            Series::line("coarse", pick(|r| r.w_diss_coarse)),
        ],
    );
    encode(sweep, svg)
}

fn atoms(d: &WorkDistribution) -> Vec<(f64, f64)> {
    d.atoms.iter().map(|a| (a.w, a.p)).collect()
}

pub fn distributions_json(setup_json: &str, f: f64) -> Result<String, String> {
    let s = setup(setup_json)?;
    let d: WorkDistributions = work_distributions(&s, f).map_err(|e| e.to_string())?;
    let svg = line_plot(
        &format!("coarse work distributions, dF = {:.6}", d.delta_f),
        "w",
        "probability",
        &[
            Series::scatter("P(w)", atoms(&d.coarse_forward)),
            Series::scatter(
                "P~(-w)",
                d.coarse_reverse.atoms.iter().map(|a| (-a.w, a.p)).collect(),
            ),
        ],
    );
    encode(d, svg)
}

#[wasm_bindgen]
pub fn states(setup_json: &str) -> Result<String, JsValue> {
    states_json(setup_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sweep(setup_json: &str, start: f64, stop: f64, step: f64) -> Result<String, JsValue> {
    sweep_json(setup_json, start, stop, step).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn distributions(setup_json: &str, f: f64) -> Result<String, JsValue> {
    distributions_json(setup_json, f).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const SETUP: &str = r#"{"levels":12,"omega":2,"hbar":1,"beta":1,"tau":1,"slots":{"alpha":3}}"#;

    #[test]
    fn states_round_trip() {
        let v: Value = serde_json::from_str(&states_json(SETUP).unwrap()).unwrap();
        assert_eq!(v["result"]["fine"]["dim"], 12);
        assert!(v["svg"].as_str().unwrap().starts_with("<svg"));
    }

    #[test]
    fn sweep_has_one_row_per_force() {
        let v: Value = serde_json::from_str(&sweep_json(SETUP, 0.0, 2.0, 0.5).unwrap()).unwrap();
        assert_eq!(v["result"]["rows"].as_array().unwrap().len(), 5);
        assert!(sweep_json(SETUP, 0.0, 1000.0, 0.1).is_err());
    }

    #[test]
    fn distributions_carry_reports() {
        let v: Value = serde_json::from_str(&distributions_json(SETUP, 3.0).unwrap()).unwrap();
        assert!(
            v["result"]["coarse_report"]["max_crooks_log_residual"]
                .as_f64()
                .unwrap()
                < 1e-10
        );
    }

    #[test]
    fn bad_setup_is_an_error() {
        assert!(states_json("{}").is_err());
        assert!(states_json(&SETUP.replace("\"beta\":1", "\"beta\":-1")).is_err());
    }
}
