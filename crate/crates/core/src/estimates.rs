//! Order-of-magnitude rates for a dense atomic medium, SI units throughout.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::fmt_f64;

/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumParams {
    /// Atomic density ρ (m⁻³).
    pub density: f64,
    /// Transition angular frequency ω (s⁻¹).
    pub omega: f64,
    /// Transition dipole moment μ (C·m).
    pub dipole: f64,
    /// Single-photon detuning Δ (s⁻¹).
    pub detuning: f64,
    /// Strong-field Rabi frequency Ω₀ (s⁻¹).
    pub rabi: f64,
    /// Radiative linewidth γ (s⁻¹).
    pub linewidth: f64,
    /// Photon wavenumber k (m⁻¹).
    pub wavenumber: f64,
    /// Dephasing time T₂ (s).
    pub t2: f64,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be positive and finite, got {v}")))
    }
}

impl MediumParams {
    pub fn validate(&self) -> Result<()> {
        positive("density", self.density)?;
        positive("omega", self.omega)?;
        positive("dipole", self.dipole)?;
        positive("detuning", self.detuning)?;
        positive("rabi", self.rabi)?;
        positive("linewidth", self.linewidth)?;
        positive("wavenumber", self.wavenumber)?;
        positive("t2", self.t2)
    }
}

/// `√(ρω/(ε₀ħ))·μ·Ω₀/Δ`.
pub fn cooperative_raman_rate(p: &MediumParams) -> Result<f64> {
    p.validate()?;
    Ok((p.density * p.omega / (EPSILON_0 * HBAR)).sqrt() * p.dipole * p.rabi / p.detuning)
}

/// `γ/(k·r)³`.
pub fn dipole_dipole_rate(linewidth: f64, wavenumber: f64, distance: f64) -> Result<f64> {
    positive("linewidth", linewidth)?;
    positive("wavenumber", wavenumber)?;
    positive("distance", distance)?;
    Ok(linewidth / (wavenumber * distance).powi(3))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityRegime {
    HighDensity,
    LowDensity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoherenceChannel {
    DipoleDipole,
    Dephasing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: DensityRegime,
    /// ρ/k³
    pub density_parameter: f64,
    pub dipole_rate: f64,
    pub dephasing_rate: f64,
    pub dominant: DecoherenceChannel,
    pub dominant_rate: f64,
    pub coop_rate: f64,
    pub cooperation_wins: bool,
}

/// Classifies by `ρ/k³` (`≥ 1` is high density) and compares the
/// cooperative rate against the larger of the nearest-neighbour
/// dipole-dipole rate at `r = ρ^(−1/3)` and `1/T₂`.
pub fn regime_classify(
    density: f64,
    wavenumber: f64,
    linewidth: f64,
    t2: f64,
    coop_rate: f64,
) -> Result<RegimeReport> {
    positive("density", density)?;
    positive("t2", t2)?;
    positive("coop_rate", coop_rate)?;
    let x = density / wavenumber.powi(3);
    let dipole_rate = dipole_dipole_rate(linewidth, wavenumber, density.cbrt().recip())?;
    let dephasing_rate = 1.0 / t2;
    let (dominant, dominant_rate) = if dipole_rate >= dephasing_rate {
        (DecoherenceChannel::DipoleDipole, dipole_rate)
    } else {
        (DecoherenceChannel::Dephasing, dephasing_rate)
    };
    Ok(RegimeReport {
        regime: if x >= 1.0 {
            DensityRegime::HighDensity
        } else {
            DensityRegime::LowDensity
        },
        density_parameter: x,
        dipole_rate,
        dephasing_rate,
        dominant,
        dominant_rate,
        coop_rate,
        cooperation_wins: coop_rate > dominant_rate,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegimeMapRow {
    pub density: f64,
    pub wavenumber: f64,
    pub report: RegimeReport,
}

/// Regime report for every `(ρ, k)` pair; the cooperative rate is
/// recomputed at each density from the remaining medium parameters.
pub fn regime_map(base: &MediumParams, densities: &[f64], wavenumbers: &[f64]) -> Result<Vec<RegimeMapRow>> {
    let mut rows = Vec::with_capacity(densities.len() * wavenumbers.len());
    for &density in densities {
        for &wavenumber in wavenumbers {
            let p = MediumParams {
                density,
                wavenumber,
                ..base.clone()
            };
            let coop = cooperative_raman_rate(&p)?;
            let report = regime_classify(density, wavenumber, p.linewidth, p.t2, coop)?;
            rows.push(RegimeMapRow {
                density,
                wavenumber,
                report,
            });
        }
    }
    Ok(rows)
}

fn regime_name(r: DensityRegime) -> &'static str {
    match r {
        DensityRegime::HighDensity => "high-density",
        DensityRegime::LowDensity => "low-density",
    }
}

pub fn write_regime_csv<W: Write>(rows: &[RegimeMapRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rho", "k", "regime", "dominant_rate", "coop_rate", "cooperation_wins"])?;
    for r in rows {
        w.write_record([
            fmt_f64(r.density),
            fmt_f64(r.wavenumber),
            regime_name(r.report.regime).to_string(),
            fmt_f64(r.report.dominant_rate),
            fmt_f64(r.report.coop_rate),
            r.report.cooperation_wins.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
