//! Per-bus stress measures and the radii of the certificate discs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// `η_i = z̃_iᵀ σ*`, `ξ_i = Σ_j |z̃_ij S_j|`,
/// `γ_i = 2(ξ_i + Re η_i) − ξ_i² − |η_i|²` and their maxima over load buses.
#[derive(Debug, Clone, Serialize)]
pub struct StressMeasures {
    pub eta_complex: Vec<Complex64>,
    pub eta_abs: Vec<f64>,
    pub xi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub eta_max: f64,
    pub xi_max: f64,
    pub gamma_max: f64,
    /// `(1 − γ)² − 4ξ²η²`, evaluated as a difference of squares.
    pub delta: f64,
    #[serde(skip)]
    pub s_l: Vec<Complex64>,
    #[serde(skip)]
    pub sigma_l: Vec<Complex64>,
}

fn assemble(
    eta_complex: Vec<Complex64>,
    xi: Vec<f64>,
    s_l: Vec<Complex64>,
    sigma_l: Vec<Complex64>,
) -> StressMeasures {
    let eta_abs: Vec<f64> = eta_complex.iter().map(|e| e.norm()).collect();
    let gamma: Vec<f64> = eta_complex
        .iter()
        .zip(&xi)
        .map(|(e, &x)| 2.0 * (x + e.re) - x * x - e.norm_sqr())
        .collect();
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let (eta_max, xi_max) = (max(&eta_abs), max(&xi));
    // γ_i may be negative; the maximum is over the buses, not clamped at 0
    let gamma_max = gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gamma_max = if gamma.is_empty() { 0.0 } else { gamma_max };
    let t = 2.0 * xi_max * eta_max;
    let delta = (1.0 - gamma_max - t) * (1.0 - gamma_max + t);
    StressMeasures { eta_complex, eta_abs, xi, gamma, eta_max, xi_max, gamma_max, delta, s_l, sigma_l }
}

pub fn compute_stress(
    ztilde: &DMatrix<Complex64>,
    s_l: &[Complex64],
    sigma_l: &[Complex64],
) -> Result<StressMeasures> {
    let n = ztilde.nrows();
    for len in [ztilde.ncols(), s_l.len(), sigma_l.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let mut eta = vec![Complex64::new(0.0, 0.0); n];
    let mut xi = vec![0.0; n];
    // column-major storage: walk each column once
    for j in 0..n {
        let (s, sg) = (s_l[j].conj(), sigma_l[j].conj());
        if s == Complex64::new(0.0, 0.0) && sg == Complex64::new(0.0, 0.0) {
            continue;
        }
        let col = ztilde.column(j);
        for i in 0..n {
            let z = col[i];
            eta[i] += z * sg;
            xi[i] += (z * s).norm();
        }
    }
    Ok(assemble(eta, xi, s_l.to_vec(), sigma_l.to_vec()))
}

impl StressMeasures {
    /// Measures of `(λS, λσ)` without touching the impedance matrix.
    pub fn scaled(&self, lambda: f64) -> StressMeasures {
        assemble(
            self.eta_complex.iter().map(|e| e * lambda).collect(),
            self.xi.iter().map(|x| x * lambda).collect(),
            self.s_l.iter().map(|s| s * lambda).collect(),
            self.sigma_l.iter().map(|s| s * lambda).collect(),
        )
    }

    /// Measures of `(S, σ)` from separately scaled parts: `ξ` taken from
    /// `xi_source` times `s_scale`, `η` from `eta_source` times `sigma_scale`.
    pub fn combine(xi_source: &StressMeasures, s_scale: f64, eta_source: &StressMeasures, sigma_scale: f64) -> StressMeasures {
        assemble(
            eta_source.eta_complex.iter().map(|e| e * sigma_scale).collect(),
            xi_source.xi.iter().map(|x| x * s_scale).collect(),
            xi_source.s_l.iter().map(|s| s * s_scale).collect(),
            eta_source.sigma_l.iter().map(|s| s * sigma_scale).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// `γ + 2ξη`; the certificate needs this strictly below 1.
    pub fn quadratic_condition(&self) -> f64 {
        self.gamma_max + 2.0 * self.xi_max * self.eta_max
    }

    /// `ξ − η`; the certificate needs this at most 1.
    pub fn gap_condition(&self) -> f64 {
        self.xi_max - self.eta_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscRadii {
    pub r_lo: f64,
    pub r_hi: f64,
    /// `ξ = 0`: every `r > 0` works.
    pub degenerate: bool,
}

/// Roots of `ξ²r⁴ − (1 − γ)r² + η² = 0` in `r`.
pub fn compute_radii(m: &StressMeasures) -> Result<DiscRadii> {
    if m.xi_max == 0.0 {
        return Ok(DiscRadii { r_lo: 0.0, r_hi: f64::INFINITY, degenerate: true });
    }
    let value = m.quadratic_condition();
    if !(value < 1.0) || !(m.delta >= 0.0) {
        return Err(Error::RadiiPrecondition { value });
    }
    let big = 1.0 - m.gamma_max + m.delta.sqrt();
    let xi2 = m.xi_max * m.xi_max;
    Ok(DiscRadii {
        // product form for the small root; no cancellation near the boundary
        r_lo: m.eta_max * (2.0 / big).sqrt(),
        r_hi: (big / (2.0 * xi2)).sqrt(),
        degenerate: false,
    })
}
