//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// `exp(−iHt)` by a truncated Taylor series with scaling and squaring.
pub fn series_propagator(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let n = h.nrows();
    let a = h * C64::new(0.0, -t);
    let norm = a.iter().map(|z| z.norm()).sum::<f64>();
    let mut squarings = 0;
    while norm / 2f64.powi(squarings) > 0.5 {
        squarings += 1;
    }
    let a = a / C64::new(2f64.powi(squarings), 0.0);
    let mut term = DMatrix::<C64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..200 {
        term = &term * &a / C64::new(k as f64, 0.0);
        sum += &term;
        if term.iter().all(|z| z.norm() < 1e-22) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Second- and fourth-order terms of `−Δ/2 + (Δ/2)·√(1 + 4v²/Δ²)`, the
/// reference eigenvalue of the two-level toy problem.
pub fn two_level_series(v: f64, gap: f64) -> (f64, f64) {
    let x = 4.0 * v * v / (gap * gap);
    (gap / 2.0 * (x / 2.0), gap / 2.0 * (-x * x / 8.0))
}

pub fn scenario_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

pub fn scenario_files() -> Vec<std::path::PathBuf> {
    let mut files: Vec<_> = std::fs::read_dir(scenario_dir())
        .expect("scenarios directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    files.sort();
    files
}
