//! Drives the experiment runners from a JSON document: a forward run and
//! a time-step sweep of the manufactured error, written to a temp directory.

use stefan_mushy::config::parse_config;
use stefan_mushy::runner::{run_simulate, run_sweep};

const CONFIG: &str = r#"{
  "problem": { "dimension": 1, "extent": [1.0], "cells": [64], "horizon": 0.1, "steps": 64 },
  "physics": { "k1": 2.0, "k2": 1.0, "rho": 1.0, "lambda": 1e-4, "alpha": 0.25, "mu": 0.05 },
  "initial": { "profile": "linear_ramp", "left": -1.0, "right": 2.0 },
  "control": { "kind": "constant", "left": 1.0 },
  "target": { "boxes": [[0.4, 0.6]] },
  "diagnostics": { "snapshot_every": 16 },
  "sweep": { "axis": "steps", "values": [16, 32, 64, 128], "mode": "manufactured" }
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = parse_config(CONFIG)?;
    let dir = tempfile::tempdir()?;

    let sim = run_simulate(&config, &dir.path().join("simulate"))?;
    println!(
        "simulate: picard {}, mass defect {:.2e}, energy ratio {:.4}, target coverage {:?}",
        sim.picard_iterations, sim.max_mass_defect, sim.energy.energy_ratio, sim.target_coverage
    );
    let mut files: Vec<String> = std::fs::read_dir(dir.path().join("simulate"))?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    files.sort();
    println!("artifacts: {}", files.join(", "));

    for row in run_sweep(&config, &dir.path().join("sweep"))? {
        println!("steps {:>4}  error {:.3e}", row.value, row.manufactured_error.unwrap_or(f64::NAN));
    }
    Ok(())
}
