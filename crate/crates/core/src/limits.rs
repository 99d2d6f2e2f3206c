//! Loading limits certified by each condition, direction sweeps, and
//! voltage-bound profiles along a loading path.

use num_complex::Complex64;
use serde::Serialize;

use crate::admittance::GridReduction;
use crate::certificate::{certify, certify_dvijotham, certify_wang};
use crate::error::{Error, Result};
use crate::oracle::actual_limit;
use crate::stress::{compute_stress, StressMeasures};
use crate::study::Study;

/// Relative tolerance under which ξ and η count as equal.
const EQUAL_REL: f64 = 1e-12;
/// Slack when testing membership of the binding set at the κ-scaled load.
const BINDING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMode {
    FromZero,
    FromKnownSolution,
}

/// Certified scalings of the load direction. In known-solution mode these
/// are the total scalings `1 + λ` of the base load.
#[derive(Debug, Clone, Serialize)]
pub struct LimitEstimates {
    pub lambda_p: f64,
    pub lambda_w: f64,
    pub lambda_d: f64,
    pub critical_bus: Option<usize>,
    pub mode: LimitMode,
    pub kappa: Option<f64>,
}

/// `1 / (4ξ)`; infinite for zero load.
pub fn lambda_wang(m: &StressMeasures) -> f64 {
    if m.xi_max == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (4.0 * m.xi_max)
    }
}

/// Largest λ with `√(λξ) + √(λη) ≤ 1`, i.e. `(√ξ + √η)⁻²`.
pub fn lambda_dvijotham(m: &StressMeasures) -> f64 {
    if m.xi_max == 0.0 {
        f64::INFINITY
    } else {
        (m.xi_max.sqrt() + m.eta_max.sqrt()).powi(-2)
    }
}

/// Smallest positive root of `aλ² + bλ − 1`, if any.
fn first_crossing(a: f64, b: f64) -> Option<f64> {
    let disc = b * b + 4.0 * a;
    if disc < 0.0 {
        return None;
    }
    let den = b + disc.sqrt();
    (den > 0.0).then(|| 2.0 / den)
}

/// Limit of the disc certificate along `S` given measures at `(S, S)`.
pub fn proposed_from_measures(m: &StressMeasures, load_ids: &[usize]) -> Result<(f64, Option<usize>, f64)> {
    let (xi, eta) = (m.xi_max, m.eta_max);
    if xi == 0.0 {
        return Ok((f64::INFINITY, None, 1.0));
    }
    if eta > xi * (1.0 + EQUAL_REL) {
        return Err(Error::Internal(format!("eta {eta} exceeds xi {xi} for sigma = S")));
    }
    let equal = xi - eta <= EQUAL_REL * xi;
    let kappa = if equal { 1.0 } else { 1.0 / (xi - eta) };
    let mk = m.scaled(kappa);
    let coupling = 2.0 * mk.xi_max * mk.eta_max;
    let mut best: Option<(f64, usize)> = None;
    for i in 0..mk.len() {
        if !equal && mk.gamma[i] + coupling < 1.0 - BINDING_SLACK {
            continue;
        }
        let (x, e) = (mk.xi[i], mk.eta_complex[i]);
        let a = coupling - x * x - e.norm_sqr();
        let b = 2.0 * (x + e.re);
        let Some(mut l) = first_crossing(a, b) else { continue };
        if !equal {
            l = l.min(1.0);
        }
        if best.is_none_or(|(bl, _)| l < bl) {
            best = Some((l, i));
        }
    }
    let (l, i) = best.ok_or_else(|| Error::Internal("no bus reaches the certificate boundary".into()))?;
    Ok((kappa * l, Some(load_ids[i]), kappa))
}

pub fn lambda_proposed(red: &GridReduction, s_l: &[Complex64]) -> Result<LimitEstimates> {
    if s_l.iter().all(|s| *s == Complex64::new(0.0, 0.0)) {
        return Err(Error::Invalid("load direction is zero".into()));
    }
    let m = compute_stress(red.ztilde(), s_l, s_l)?;
    from_zero(&m, &red.load_ids)
}

fn from_zero(m: &StressMeasures, load_ids: &[usize]) -> Result<LimitEstimates> {
    let (lambda_p, critical_bus, kappa) = proposed_from_measures(m, load_ids)?;
    Ok(LimitEstimates {
        lambda_p,
        lambda_w: lambda_wang(m),
        lambda_d: lambda_dvijotham(m),
        critical_bus,
        mode: LimitMode::FromZero,
        kappa: Some(kappa),
    })
}

/// Smallest positive root of `Aλ² + Bλ + C` with `C < 0`.
fn first_positive_root(a: f64, b: f64, c: f64) -> Option<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let den = b + disc.sqrt();
    (den > 0.0).then(|| -2.0 * c / den)
}

/// Limits for `σ = λS⁰`, `S = (1 + λ)S⁰` around a known solution; the
/// reduction must already be re-centred on it.
fn from_known_solution(red: &GridReduction) -> Result<LimitEstimates> {
    let m0 = compute_stress(red.ztilde(), &red.s0, &red.s0)?;
    let (x_max, h_max) = (m0.xi_max, m0.eta_max);
    if x_max >= 1.0 {
        return Err(Error::Invalid(format!("known solution is not certified (xi = {x_max})")));
    }
    let mut best: Option<(f64, usize)> = None;
    for i in 0..m0.len() {
        let (x, e) = (m0.xi[i], m0.eta_complex[i]);
        let a = -x * x - e.norm_sqr() + 2.0 * x_max * h_max;
        let b = -2.0 * x * x + 2.0 * x_max * h_max + 2.0 * x + 2.0 * e.re;
        let c = -(1.0 - x) * (1.0 - x);
        if c == 0.0 {
            continue;
        }
        if let Some(l) = first_positive_root(a, b, c) {
            if best.is_none_or(|(bl, _)| l < bl) {
                best = Some((l, i));
            }
        }
    }
    let gap_limit = if x_max > h_max { (1.0 - x_max) / (x_max - h_max) } else { f64::INFINITY };
    let (quad_limit, critical) = best.map_or((f64::INFINITY, None), |(l, i)| (l, Some(red.load_ids[i])));
    let lambda_p = quad_limit.min(gap_limit);

    let t = (1.0 - x_max) / (h_max.sqrt() + (h_max + (x_max - h_max) * (1.0 - x_max)).sqrt());
    let lambda_d = t * t;
    let lambda_w = (1.0 - x_max).powi(2) / (4.0 * x_max);
    Ok(LimitEstimates {
        lambda_p: 1.0 + lambda_p,
        lambda_w: 1.0 + lambda_w,
        lambda_d: 1.0 + lambda_d,
        critical_bus: if quad_limit <= gap_limit { critical } else { None },
        mode: LimitMode::FromKnownSolution,
        kappa: None,
    })
}

/// All three limits for the study's base load. With a re-centred reduction
/// the limits are relative to the known solution.
pub fn lambda_all(study: &Study) -> Result<LimitEstimates> {
    let red = &study.reduction;
    if red.has_known_solution() && red.s0.iter().any(|s| s.norm() > 0.0) {
        from_known_solution(red)
    } else {
        lambda_proposed(red, &study.base_load)
    }
}

/// `n` angles from `lo` to `hi` inclusive (radians).
pub fn angle_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Cartesian product of two angle grids.
pub fn direction_pairs(a: &[f64], b: &[f64]) -> Vec<(f64, f64)> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect()
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// Varied buses; defaults to the first two load buses with real demand.
    pub buses: Option<(usize, usize)>,
    /// `(φ_a, φ_b)` power-factor angles in radians.
    pub angles: Vec<(f64, f64)>,
    /// Give both varied loads the same magnitude, with their joint 2-norm
    /// equal to that of the remaining loads.
    pub rescale: bool,
    pub with_oracle: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub angle_a: f64,
    pub angle_b: f64,
    pub load_a: Complex64,
    pub load_b: Complex64,
    pub limits: LimitEstimates,
    pub lambda_actual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub bus_a: usize,
    pub bus_b: usize,
    pub points: Vec<SweepPoint>,
}

pub fn direction_sweep(study: &Study, spec: &SweepSpec) -> Result<SweepResult> {
    let (bus_a, bus_b) = match spec.buses {
        Some(pair) => pair,
        None => {
            let mut real = study
                .partition
                .load_ids
                .iter()
                .zip(&study.base_load)
                .filter(|(_, s)| s.re != 0.0)
                .map(|(id, _)| *id);
            match (real.next(), real.next()) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Invalid("need two load buses with nonzero real demand".into())),
            }
        }
    };
    if bus_a == bus_b {
        return Err(Error::Invalid("sweep buses must differ".into()));
    }
    let (pa, pb) = (study.load_position(bus_a)?, study.load_position(bus_b)?);
    let base = &study.base_load;
    let (mag_a, mag_b) = if spec.rescale {
        let rest: f64 = base
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pa && *i != pb)
            .map(|(_, s)| s.norm_sqr())
            .sum::<f64>()
            .sqrt();
        (rest / 2f64.sqrt(), rest / 2f64.sqrt())
    } else {
        (base[pa].norm(), base[pb].norm())
    };
    let ztilde = study.reduction.ztilde();
    let points = spec
        .angles
        .iter()
        .map(|&(phi_a, phi_b)| {
            let mut s = base.clone();
            s[pa] = Complex64::from_polar(mag_a, phi_a);
            s[pb] = Complex64::from_polar(mag_b, phi_b);
            let m = compute_stress(ztilde, &s, &s)?;
            let limits = from_zero(&m, &study.reduction.load_ids)?;
            let lambda_actual = if spec.with_oracle {
                Some(actual_limit(
                    &study.admittance,
                    &study.generator_phasors,
                    &s,
                    &study.reduction.e,
                    (0.0, limits.lambda_p.max(0.1)),
                    1e-4,
                )?)
            } else {
                None
            };
            Ok(SweepPoint { angle_a: phi_a, angle_b: phi_b, load_a: s[pa], load_b: s[pb], limits, lambda_actual })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { bus_a, bus_b, points })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfilePoint {
    pub lambda: f64,
    pub proposed: Option<f64>,
    pub wang: Option<f64>,
    pub dvijotham: Option<f64>,
    pub actual: Option<f64>,
}

/// Lower voltage-magnitude bounds at one load bus as the base load is
/// scaled by each `λ` in `grid`, with the Newton magnitude alongside.
pub fn bound_profile(study: &Study, bus: usize, grid: &[f64]) -> Result<Vec<ProfilePoint>> {
    let i = study.load_position(bus)?;
    let red = &study.reduction;
    let base = compute_stress(red.ztilde(), &study.base_load, &study.base_load)?;
    let zero = base.scaled(0.0);
    let e = red.e[i] * red.v0[i];
    let mut warm: Option<Vec<Complex64>> = None;
    let mut newton_alive = true;
    let mut out = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let m = base.scaled(lambda);
        let cert = certify(&m);
        let proposed = cert.holds.then(|| {
            let c = e * cert.disc_centers[i];
            c.norm() - e.norm() * cert.disc_radii[i]
        });
        let wang = certify_wang(&zero, &m)?.radius.map(|r| e.norm() * (1.0 - r));
        let dvijotham = certify_dvijotham(&m).radius.map(|r| e.norm() / (1.0 + r));
        let actual = if newton_alive {
            match study.newton(&study.scaled_load(lambda), warm.as_deref()) {
                Ok(r) => {
                    let v = r.v_l[i].norm();
                    warm = Some(r.v_l);
                    Some(v)
                }
                Err(_) => {
                    newton_alive = false;
                    None
                }
            }
        } else {
            None
        };
        out.push(ProfilePoint { lambda, proposed, wang, dvijotham, actual });
    }
    Ok(out)
}
