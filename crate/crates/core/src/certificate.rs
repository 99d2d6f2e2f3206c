//! Solvability certificates: the disc-based condition, plus the two earlier
//! conditions it is compared against, and the voltage bounds that follow.

use num_complex::Complex64;
use serde::Serialize;

use crate::admittance::GridReduction;
use crate::error::{Error, Result};
use crate::stress::{compute_radii, DiscRadii, StressMeasures};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailedCondition {
    /// `γ + 2ξη < 1` does not hold.
    Quadratic,
    /// `ξ − η ≤ 1` does not hold.
    Gap,
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub holds: bool,
    pub reason: Option<FailedCondition>,
    pub quadratic_condition: f64,
    pub gap_condition: f64,
    pub radii: Option<DiscRadii>,
    /// `1 − η_i` in normalized coordinates.
    pub disc_centers: Vec<Complex64>,
    /// `r̲ ξ_i`.
    pub disc_radii: Vec<f64>,
    /// `r̄`: no solution with `|u_i − 1| / |u_i| < r̄` outside the discs.
    pub solutionless_radius: Option<f64>,
    /// Contraction estimate for the iteration started at `u = 1`.
    pub mu_bound: Option<f64>,
}

pub fn certify(m: &StressMeasures) -> Certificate {
    let quadratic_condition = m.quadratic_condition();
    let gap_condition = m.gap_condition();
    let reason = if !(quadratic_condition < 1.0) {
        Some(FailedCondition::Quadratic)
    } else if !(gap_condition <= 1.0) {
        Some(FailedCondition::Gap)
    } else {
        None
    };
    let mut cert = Certificate {
        holds: reason.is_none(),
        reason,
        quadratic_condition,
        gap_condition,
        radii: None,
        disc_centers: Vec::new(),
        disc_radii: Vec::new(),
        solutionless_radius: None,
        mu_bound: None,
    };
    if reason.is_some() {
        return cert;
    }
    let Ok(radii) = compute_radii(m) else {
        // Δ < 0 cannot happen once γ + 2ξη < 1; treat defensively as failure
        cert.holds = false;
        cert.reason = Some(FailedCondition::Quadratic);
        return cert;
    };
    cert.disc_centers = m.eta_complex.iter().map(|e| 1.0 - e).collect();
    cert.disc_radii = m.xi.iter().map(|x| radii.r_lo * x).collect();
    cert.solutionless_radius = Some(radii.r_hi);
    cert.mu_bound = Some(mu_estimate(m, &radii));
    cert.radii = Some(radii);
    cert
}

/// `max |1 − 1/w|` over the closed disc `|w − c| ≤ ρ` (0 outside it).
fn inverse_offset_max(c: Complex64, rho: f64) -> f64 {
    let d = c.norm_sqr() - rho * rho;
    (1.0 - c.conj() / d).norm() + rho / d
}

/// `μ(r') = max_{u ∈ D̄(r')} ‖I − diag⁻¹(u*)‖ / r'`, minimized over a
/// geometric grid of `r'` strictly inside `(r̲, r̄)`.
fn mu_estimate(m: &StressMeasures, radii: &DiscRadii) -> f64 {
    if radii.degenerate {
        return 0.0;
    }
    let (lo, hi) = (radii.r_lo.max(1e-12 * radii.r_hi), radii.r_hi);
    const STEPS: usize = 256;
    let mut best = f64::INFINITY;
    for k in 1..STEPS {
        let r = lo * (hi / lo).powf(k as f64 / STEPS as f64);
        let worst = m
            .eta_complex
            .iter()
            .zip(&m.xi)
            .map(|(e, &x)| inverse_offset_max(1.0 - e, r * x))
            .fold(0.0, f64::max);
        best = best.min(worst / r);
    }
    best
}

/// Outcome of one of the earlier sufficient conditions.
#[derive(Debug, Clone, Serialize)]
pub struct BaselineCertificate {
    pub holds: bool,
    pub radius: Option<f64>,
    /// The condition proves a unique solution, not just existence.
    pub uniqueness: bool,
}

/// Holds when `(1 − ξ(S⁰))² − 4ξ(σ) > 0`; the solution then satisfies
/// `1 − r ≤ |u_i| ≤ 1 + r`.
pub fn certify_wang(base: &StressMeasures, incremental: &StressMeasures) -> Result<BaselineCertificate> {
    let x0 = base.xi_max;
    if !(x0 < 1.0) {
        return Err(Error::WangPrecondition(x0));
    }
    let disc = (1.0 - x0).powi(2) - 4.0 * incremental.xi_max;
    if !(disc > 0.0) {
        return Ok(BaselineCertificate { holds: false, radius: None, uniqueness: true });
    }
    let radius = 2.0 * incremental.xi_max / (1.0 - x0 + disc.sqrt());
    Ok(BaselineCertificate { holds: true, radius: Some(radius), uniqueness: true })
}

/// Holds when `√ξ(S) + √η(σ) ≤ 1`; the solution then satisfies
/// `|1/u_i − 1| ≤ r`.
pub fn certify_dvijotham(m: &StressMeasures) -> BaselineCertificate {
    let (x, e) = (m.xi_max, m.eta_max);
    if !(x.sqrt() + e.sqrt() <= 1.0) {
        return BaselineCertificate { holds: false, radius: None, uniqueness: false };
    }
    let radius = if x == 0.0 {
        e / (1.0 - e)
    } else {
        let b = 1.0 - x - e;
        let disc = (b * b - 4.0 * x * e).max(0.0);
        // small root of ξr² − (1 − ξ − η)r + η, in product form
        2.0 * e / (b + disc.sqrt())
    };
    BaselineCertificate { holds: true, radius: Some(radius), uniqueness: false }
}

#[derive(Debug, Clone, Serialize)]
pub struct BusBounds {
    pub bus: usize,
    pub magnitude_lo: f64,
    pub magnitude_hi: f64,
    /// Radians; `[−π, π]` when the disc contains the origin.
    pub angle_lo: f64,
    pub angle_hi: f64,
    pub approximate: Complex64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VoltageBounds {
    pub buses: Vec<BusBounds>,
}

/// Map each certified disc to physical voltages: center `E_i v⁰_i (1 − η_i)`,
/// radius `|E_i v⁰_i| r̲ ξ_i`.
pub fn voltage_bounds(cert: &Certificate, red: &GridReduction) -> Result<VoltageBounds> {
    if !cert.holds {
        return Err(Error::Invalid("voltage bounds need a holding certificate".into()));
    }
    let n = red.num_loads();
    if cert.disc_centers.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: cert.disc_centers.len() });
    }
    let buses = (0..n)
        .map(|i| {
            let scale = red.e[i] * red.v0[i];
            let c = scale * cert.disc_centers[i];
            let rho = scale.norm() * cert.disc_radii[i];
            let (mag, arg) = (c.norm(), c.arg());
            let (angle_lo, angle_hi) = if rho < mag {
                let half = (rho / mag).asin();
                (arg - half, arg + half)
            } else {
                (-std::f64::consts::PI, std::f64::consts::PI)
            };
            BusBounds {
                bus: red.load_ids[i],
                magnitude_lo: (mag - rho).max(0.0),
                magnitude_hi: mag + rho,
                angle_lo,
                angle_hi,
                approximate: c,
            }
        })
        .collect();
    Ok(VoltageBounds { buses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed_point::evaluate_f;
    use crate::stress::compute_stress;
    use crate::stress::tests::random_impedance;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_bus(p: f64) -> StressMeasures {
        let z = DMatrix::from_element(1, 1, c(0.0, 0.1));
        compute_stress(&z, &[c(p, 0.0)], &[c(p, 0.0)]).unwrap()
    }

    #[test]
    fn two_bus_certificate() {
        let cert = certify(&two_bus(2.5));
        assert!(cert.holds);
        assert!((cert.disc_centers[0] - c(1.0, -0.25)).norm() < 1e-15);
        assert!((cert.disc_radii[0] - 0.0794590).abs() < 1e-6);
        assert!((cert.solutionless_radius.unwrap() - 3.146264).abs() < 1e-6);
        let mu = cert.mu_bound.unwrap();
        assert!((0.0..1.0).contains(&mu));
    }

    #[test]
    fn zero_load_certificate_is_a_point() {
        let cert = certify(&two_bus(0.0));
        assert!(cert.holds);
        assert_eq!(cert.disc_centers, vec![c(1.0, 0.0)]);
        assert_eq!(cert.disc_radii, vec![0.0]);
    }

    #[test]
    fn quadratic_condition_is_strict() {
        let cert = certify(&two_bus(5.0));
        assert!(!cert.holds);
        assert_eq!(cert.reason, Some(FailedCondition::Quadratic));
    }

    #[test]
    fn gap_condition_is_not_strict() {
        // consistent measures cannot sit on ξ − η = 1 with γ + 2ξη < 1, so
        // exercise the comparison on synthesized maxima
        let mut m = two_bus(1.0);
        m.xi_max = 1.0;
        m.eta_max = 0.0;
        m.gamma_max = 0.5;
        m.delta = 0.25;
        assert!(certify(&m).holds);
        m.xi_max = 1.0 + 1e-12;
        assert_eq!(certify(&m).reason, Some(FailedCondition::Gap));
    }

    #[test]
    fn two_bus_bounds_contain_the_solution() {
        let m = two_bus(2.5);
        let cert = certify(&m);
        let c0 = cert.disc_centers[0];
        let rho = cert.disc_radii[0];
        assert!((c0.norm() - 1.0307764).abs() < 1e-7);
        let (lo, hi) = (c0.norm() - rho, c0.norm() + rho);
        assert!((lo - 0.9513174).abs() < 1e-6 && (hi - 1.1102354).abs() < 1e-6);
        let half = (rho / c0.norm()).asin();
        assert!(((c0.arg() - half).to_degrees() + 18.4575).abs() < 5e-4);
        assert!(((c0.arg() + half).to_degrees() + 9.6149).abs() < 5e-4);
        let truth = c(0.75f64.sqrt() / 2.0 + 0.5, -0.25);
        assert!((truth - c0).norm() <= rho);
        let ratio = (truth.arg().to_degrees(), truth.norm());
        assert!((ratio.0 + 15.0).abs() < 1e-9 && (ratio.1 - 0.9659258).abs() < 1e-7);
    }

    #[test]
    fn low_solution_lies_outside_solutionless_region() {
        let cert = certify(&two_bus(2.5));
        let low = c(0.5 - 0.75f64.sqrt() / 2.0, -0.25);
        let ratio = (low - 1.0).norm() / low.norm();
        assert!((ratio - 3.7321).abs() < 1e-4);
        assert!(ratio > cert.solutionless_radius.unwrap());
    }

    #[test]
    fn wang_examples() {
        let zero = two_bus(0.0);
        let w = certify_wang(&zero, &two_bus(2.4)).unwrap();
        assert!(w.holds && (w.radius.unwrap() - 0.4).abs() < 1e-12);
        let w = certify_wang(&zero, &zero).unwrap();
        assert!(w.holds && w.radius == Some(0.0));
        assert!(!certify_wang(&zero, &two_bus(2.5)).unwrap().holds);
        assert!(matches!(certify_wang(&two_bus(10.0), &zero), Err(Error::WangPrecondition(_))));
    }

    #[test]
    fn dvijotham_examples() {
        let d = certify_dvijotham(&two_bus(2.5));
        assert!(d.holds && !d.uniqueness);
        assert!((d.radius.unwrap() - 1.0).abs() < 1e-12);
        assert!(certify_dvijotham(&two_bus(0.0)).holds);
        assert!(!certify_dvijotham(&two_bus(2.6)).holds);
    }

    #[test]
    fn mu_matches_boundary_sampling() {
        let m = two_bus(2.5);
        let cert = certify(&m);
        let radii = cert.radii.unwrap();
        let r = (radii.r_lo * radii.r_hi).sqrt();
        let center = cert.disc_centers[0];
        let sampled = (0..4096)
            .map(|k| {
                let u = center + Complex64::from_polar(r * m.xi[0], k as f64 * std::f64::consts::TAU / 4096.0);
                (1.0 - 1.0 / u.conj()).norm()
            })
            .fold(0.0, f64::max);
        let exact = inverse_offset_max(center, r * m.xi[0]);
        assert!((sampled - exact).abs() < 1e-5 * exact);
        assert!(cert.mu_bound.unwrap() <= exact / r + 1e-12);
    }

    #[test]
    fn dominance_over_random_injections() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let zero_of = |n: usize| {
            let z = DMatrix::from_element(n, n, c(0.0, 0.0));
            compute_stress(&z, &vec![c(0.0, 0.0); n], &vec![c(0.0, 0.0); n]).unwrap()
        };
        for _ in 0..1000 {
            let n = rng.gen_range(1..6);
            let z = random_impedance(n, &mut rng);
            let scale = rng.gen_range(0.1..6.0);
            let s: Vec<Complex64> = (0..n).map(|_| c(rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..1.0)) * scale).collect();
            let m = compute_stress(&z, &s, &s).unwrap();
            if certify_wang(&zero_of(n), &m).unwrap().holds {
                assert!(certify(&m).holds);
            }
            if certify_dvijotham(&m).holds {
                assert!(m.quadratic_condition() <= 1.0 + 1e-12 && m.gap_condition() <= 1.0);
            }
        }
    }

    #[test]
    fn boundary_of_invariant_disc_maps_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 50 {
            let n = rng.gen_range(1..5);
            let z = random_impedance(n, &mut rng);
            let s: Vec<Complex64> = (0..n).map(|_| c(rng.gen_range(0.0..3.0), rng.gen_range(-1.0..1.5))).collect();
            let m = compute_stress(&z, &s, &s).unwrap();
            let cert = certify(&m);
            let Some(radii) = cert.radii.filter(|_| cert.holds) else { continue };
            checked += 1;
            for k in 1..=5 {
                let r = radii.r_lo + (radii.r_hi - radii.r_lo) * k as f64 / 6.0;
                for p in 0..64 {
                    // one coordinate on its circle, the rest random inside
                    let edge = p % n;
                    let u: Vec<Complex64> = (0..n)
                        .map(|i| {
                            let t = rng.gen_range(0.0..std::f64::consts::TAU);
                            let rad = if i == edge { 1.0 } else { rng.gen_range(0.0..1.0) };
                            cert.disc_centers[i] + Complex64::from_polar(rad * r * m.xi[i], t)
                        })
                        .collect();
                    let fu = evaluate_f(&u, &z, &s, &s).unwrap();
                    for i in 0..n {
                        assert!((fu[i] - cert.disc_centers[i]).norm() < r * m.xi[i]);
                    }
                }
            }
        }
    }
}
