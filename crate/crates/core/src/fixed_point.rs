//! The power-flow equations in fixed-point form,
//! `u = F(u) = 1 − Z̃σ* + Z̃(I − diag⁻¹(u*))S*`, and their iteration.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::admittance::GridReduction;
use crate::certificate::Certificate;
use crate::error::{Error, Result};
use crate::stress::StressMeasures;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const COLLAPSE: f64 = 1e-6;
const CONTAINMENT_SLACK: f64 = 1e-8;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1000;

fn check_dims(n: usize, lens: &[usize]) -> Result<()> {
    match lens.iter().find(|&&l| l != n) {
        Some(&got) => Err(Error::DimensionMismatch { expected: n, got }),
        None => Ok(()),
    }
}

fn apply(u: &[Complex64], ztilde: &DMatrix<Complex64>, base: &DVector<Complex64>, s_l: &[Complex64]) -> Result<DVector<Complex64>> {
    let mut w = DVector::zeros(u.len());
    for (j, (uj, sj)) in u.iter().zip(s_l).enumerate() {
        if *uj == Complex64::new(0.0, 0.0) {
            return Err(Error::ZeroEntry(j));
        }
        w[j] = (ONE - ONE / uj.conj()) * sj.conj();
    }
    Ok(base + ztilde * w)
}

fn offset(ztilde: &DMatrix<Complex64>, sigma_l: &[Complex64]) -> DVector<Complex64> {
    let sg = DVector::from_iterator(sigma_l.len(), sigma_l.iter().map(|s| s.conj()));
    DVector::from_element(sigma_l.len(), ONE) - ztilde * sg
}

pub fn evaluate_f(
    u: &[Complex64],
    ztilde: &DMatrix<Complex64>,
    s_l: &[Complex64],
    sigma_l: &[Complex64],
) -> Result<Vec<Complex64>> {
    check_dims(ztilde.nrows(), &[ztilde.ncols(), u.len(), s_l.len(), sigma_l.len()])?;
    Ok(apply(u, ztilde, &offset(ztilde, sigma_l), s_l)?.iter().copied().collect())
}

#[derive(Debug, Clone)]
pub struct FixedPointOptions<'a> {
    pub tol: f64,
    pub max_iter: usize,
    /// Keep every iterate (needed for the rate check).
    pub record: bool,
    /// Verify the converged point against this certificate's discs.
    pub certificate: Option<&'a Certificate>,
}

impl Default for FixedPointOptions<'_> {
    fn default() -> Self {
        FixedPointOptions { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, record: false, certificate: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointResult {
    pub converged: bool,
    /// Normalized solution.
    pub u: Vec<Complex64>,
    /// Physical load voltages `E v⁰ u`.
    pub v_l: Vec<Complex64>,
    pub iterations: usize,
    /// `‖u − F(u)‖∞`.
    pub residual: f64,
    /// `‖uⁿ − F(uⁿ)‖∞` per step.
    pub trace: Option<Vec<f64>>,
    /// `u⁰, u¹, …` up to the returned point.
    #[serde(skip)]
    pub iterates: Option<Vec<Vec<Complex64>>>,
}

fn inf_dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn solve_fixed_point(
    red: &GridReduction,
    s_l: &[Complex64],
    sigma_l: &[Complex64],
    start: Option<&[Complex64]>,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult> {
    let z = red.ztilde();
    let n = z.nrows();
    let mut u: Vec<Complex64> = start.map_or_else(|| vec![ONE; n], <[_]>::to_vec);
    check_dims(n, &[u.len(), s_l.len(), sigma_l.len()])?;
    if !(opts.tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let base = offset(z, sigma_l);
    let mut history = Vec::new();
    let mut iterates = opts.record.then(Vec::new);

    for k in 0..opts.max_iter {
        if let Some(p) = u.iter().position(|x| !(x.norm() >= COLLAPSE) || !x.is_finite()) {
            return Err(Error::FixedPointCollapse { position: p, iteration: k });
        }
        if let Some(its) = iterates.as_mut() {
            its.push(u.clone());
        }
        let next: Vec<Complex64> = apply(&u, z, &base, s_l)?.iter().copied().collect();
        let residual = inf_dist(&u, &next);
        history.push(residual);
        if residual < opts.tol {
            if let Some(cert) = opts.certificate.filter(|c| c.holds) {
                check_containment(&u, cert)?;
            }
            return Ok(FixedPointResult {
                converged: true,
                v_l: red.physical_voltages(&u),
                u,
                iterations: k + 1,
                residual,
                trace: opts.record.then_some(history),
                iterates,
            });
        }
        u = next;
    }
    Err(Error::FixedPointNonConvergence {
        iterations: opts.max_iter,
        residual: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// `u` within the certified closed polydisc, up to a small slack.
pub fn check_containment(u: &[Complex64], cert: &Certificate) -> Result<()> {
    for (i, ((ui, c), r)) in u.iter().zip(&cert.disc_centers).zip(&cert.disc_radii).enumerate() {
        let excess = (ui - c).norm() - r;
        if excess > CONTAINMENT_SLACK {
            return Err(Error::ContainmentViolated { position: i, excess });
        }
    }
    Ok(())
}

/// Every recorded iterate obeys
/// `‖uⁿ − û‖∞ < r̄ ξ (1 + μ) (2μ / (1 + μ²))^{n/2}` against the reference `û`.
pub fn check_convergence_rate(
    result: &FixedPointResult,
    cert: &Certificate,
    m: &StressMeasures,
    reference: &[Complex64],
) -> Result<bool> {
    let iterates = result.iterates.as_ref().ok_or(Error::MissingTrace)?;
    if !cert.holds {
        return Err(Error::Invalid("rate bound needs a holding certificate".into()));
    }
    if m.xi_max == 0.0 {
        return Ok(true);
    }
    let mu = cert.mu_bound.ok_or(Error::Invalid("certificate carries no contraction estimate".into()))?;
    let r_hi = cert.solutionless_radius.ok_or(Error::Internal("holding certificate without radius".into()))?;
    let rho = 2.0 * mu / (1.0 + mu * mu);
    let c = r_hi * m.xi_max * (1.0 + mu);
    Ok(iterates
        .iter()
        .enumerate()
        .all(|(n, u)| inf_dist(u, reference) < c * rho.powf(n as f64 / 2.0)))
}
