//! Reference solutions: polar Newton power flow, a bisection estimate of
//! the true loading limit, and the closed-form two-bus solutions.

use num_complex::Complex64;
use serde::Serialize;

use crate::admittance::AdmittanceMatrix;
use crate::error::{Error, Result};
use crate::linalg::{Factorization, SparseMatrix};
use crate::net_model::{NetworkCase, Partition};

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-8, max_iter: 30 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonResult {
    pub converged: bool,
    pub v_l: Vec<Complex64>,
    pub iterations: usize,
    /// ∞-norm of the power mismatch, per unit.
    pub mismatch_norm: f64,
}

/// Buses whose angle (P row) and magnitude (Q row) are unknown, by global
/// position. `scheduled` holds the scheduled injections of every bus.
struct PolarProblem<'a> {
    y: &'a SparseMatrix<Complex64>,
    scheduled: Vec<Complex64>,
    angle_vars: Vec<usize>,
    mag_vars: Vec<usize>,
}

impl PolarProblem<'_> {
    fn mismatch(&self, v: &[Complex64]) -> (Vec<Complex64>, Vec<f64>) {
        let current = self.y.mul_vec(v);
        let mut g = Vec::with_capacity(self.angle_vars.len() + self.mag_vars.len());
        let ds = |i: usize| v[i] * current[i].conj() - self.scheduled[i];
        g.extend(self.angle_vars.iter().map(|&i| ds(i).re));
        g.extend(self.mag_vars.iter().map(|&i| ds(i).im));
        (current, g)
    }

    fn jacobian(&self, v: &[Complex64], current: &[Complex64]) -> SparseMatrix<f64> {
        let dim = self.y.dim();
        let na = self.angle_vars.len();
        let mut col_a = vec![usize::MAX; dim];
        let mut col_m = vec![usize::MAX; dim];
        for (k, &i) in self.angle_vars.iter().enumerate() {
            col_a[i] = k;
        }
        for (k, &i) in self.mag_vars.iter().enumerate() {
            col_m[i] = na + k;
        }
        let mut triplets = Vec::new();
        let rows = self
            .angle_vars
            .iter()
            .enumerate()
            .map(|(k, &i)| (k, i, true))
            .chain(self.mag_vars.iter().enumerate().map(|(k, &i)| (na + k, i, false)));
        let j = Complex64::new(0.0, 1.0);
        for (row, i, real_part) in rows {
            let pick = |c: Complex64| if real_part { c.re } else { c.im };
            let vi = v[i];
            for &(k, yik) in self.y.row(i) {
                let vk = v[k];
                let unit_k = vk / vk.norm();
                let (mut d_ang, mut d_mag) = (-j * vi * (yik * vk).conj(), vi * (yik * unit_k).conj());
                if k == i {
                    d_ang += j * vi * current[i].conj();
                    d_mag += current[i].conj() * vi / vi.norm();
                }
                if col_a[k] != usize::MAX {
                    triplets.push((row, col_a[k], pick(d_ang)));
                }
                if col_m[k] != usize::MAX {
                    triplets.push((row, col_m[k], pick(d_mag)));
                }
            }
        }
        SparseMatrix::from_triplets(na + self.mag_vars.len(), triplets)
    }

    /// Newton iteration in place on `v`; returns (iterations, final mismatch).
    fn solve(&self, v: &mut [Complex64], opts: &NewtonOptions) -> Result<(usize, f64)> {
        let norm = |g: &[f64]| g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let (mut current, mut g) = self.mismatch(v);
        let mut mismatch = norm(&g);
        for it in 0..=opts.max_iter {
            if mismatch < opts.tol {
                return Ok((it, mismatch));
            }
            if it == opts.max_iter || !mismatch.is_finite() || mismatch > 1e8 {
                break;
            }
            let jac = self.jacobian(v, &current);
            let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
            let dx = Factorization::new(&jac)?.solve(&rhs)?;
            let na = self.angle_vars.len();
            for (k, &i) in self.angle_vars.iter().enumerate() {
                v[i] *= Complex64::from_polar(1.0, dx[k]);
            }
            for (k, &i) in self.mag_vars.iter().enumerate() {
                let mag = v[i].norm() + dx[na + k];
                v[i] = Complex64::from_polar(mag, v[i].arg());
            }
            (current, g) = self.mismatch(v);
            mismatch = norm(&g);
        }
        Err(Error::NewtonNonConvergence { iterations: opts.max_iter, mismatch })
    }
}

/// Solve for the load voltages with every generator phasor held fixed.
pub fn newton_solve(
    y: &AdmittanceMatrix,
    generator_phasors: &[Complex64],
    s_l: &[Complex64],
    start: &[Complex64],
    opts: &NewtonOptions,
) -> Result<NewtonResult> {
    let m = generator_phasors.len();
    let n = y.dim().checked_sub(m).ok_or(Error::DimensionMismatch { expected: y.dim(), got: m })?;
    for len in [s_l.len(), start.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let loads: Vec<usize> = (m..m + n).collect();
    let mut scheduled = vec![Complex64::new(0.0, 0.0); m];
    scheduled.extend(s_l.iter().map(|s| -s));
    let problem = PolarProblem { y: &y.matrix, scheduled, angle_vars: loads.clone(), mag_vars: loads };
    let mut v: Vec<Complex64> = generator_phasors.iter().chain(start).copied().collect();
    let (iterations, mismatch_norm) = problem.solve(&mut v, opts)?;
    Ok(NewtonResult { converged: true, v_l: v[m..].to_vec(), iterations, mismatch_norm })
}

/// Conventional power flow: one reference bus, generators regulating
/// magnitude at their scheduled active power, loads at their demand.
/// Returns every bus voltage in partition order.
pub fn baseline_power_flow(
    case: &NetworkCase,
    partition: &Partition,
    y: &AdmittanceMatrix,
    opts: &NewtonOptions,
) -> Result<Vec<Complex64>> {
    let m = partition.num_generators();
    let setpoints = case.generator_setpoints();
    let mut scheduled = vec![Complex64::new(0.0, 0.0); partition.dim()];
    let mut v = Vec::with_capacity(partition.dim());
    for (pos, &bi) in partition.bus_index.iter().enumerate() {
        let bus = &case.buses[bi];
        scheduled[pos] = -bus.demand;
        let mag = if pos < m { setpoints[&bus.id] } else { bus.voltage_magnitude.max(0.5) };
        v.push(Complex64::from_polar(mag, bus.voltage_angle));
    }
    for g in case.gens.iter().filter(|g| g.in_service) {
        let pos = partition.position(g.bus).expect("generator bus is partitioned");
        scheduled[pos].re += g.active_power;
    }
    let reference = partition.generator_ids[..]
        .iter()
        .position(|&id| case.bus(id).is_some_and(|b| b.reference))
        .unwrap_or(0);
    let problem = PolarProblem {
        y: &y.matrix,
        scheduled,
        angle_vars: (0..partition.dim()).filter(|&p| p != reference).collect(),
        mag_vars: (m..partition.dim()).collect(),
    };
    problem.solve(&mut v, opts)?;
    Ok(v)
}

/// Largest λ at which Newton still converges for `λ·direction`, by
/// bisection with warm starts. The upper end doubles while it stays
/// feasible.
pub fn actual_limit(
    y: &AdmittanceMatrix,
    generator_phasors: &[Complex64],
    direction: &[Complex64],
    start: &[Complex64],
    bracket: (f64, f64),
    tol: f64,
) -> Result<f64> {
    let opts = NewtonOptions::default();
    let scaled = |l: f64| direction.iter().map(|s| s * l).collect::<Vec<_>>();
    let (mut lo, mut hi) = bracket;
    let mut warm = newton_solve(y, generator_phasors, &scaled(lo), start, &opts)
        .map_err(|_| Error::InfeasibleLowerBracket(lo))?
        .v_l;
    let mut expansions = 0;
    while let Ok(r) = newton_solve(y, generator_phasors, &scaled(hi), &warm, &opts) {
        expansions += 1;
        if expansions > 60 {
            return Ok(f64::INFINITY);
        }
        warm = r.v_l;
        (lo, hi) = (hi, 2.0 * hi);
    }
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        match newton_solve(y, generator_phasors, &scaled(mid), &warm, &opts) {
            Ok(r) => {
                warm = r.v_l;
                lo = mid;
            }
            Err(_) => hi = mid,
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Load `p + iq` behind reactance `x` from a unit source. Solutions
/// `a + ib` have `b = −xp`, `a = (1 ± √(1 − 4xq − 4x²p²)) / 2`, high root
/// first.
pub fn two_bus_analytic(p: f64, q: f64, x: f64) -> Result<Vec<Complex64>> {
    if !(x > 0.0) {
        return Err(Error::Invalid(format!("reactance must be positive, got {x}")));
    }
    let disc = 1.0 - 4.0 * x * q - 4.0 * x * x * p * p;
    let b = -x * p;
    Ok(if disc.abs() <= 1e-12 {
        vec![Complex64::new(0.5, b)]
    } else if disc > 0.0 {
        let root = disc.sqrt();
        vec![Complex64::new((1.0 + root) / 2.0, b), Complex64::new((1.0 - root) / 2.0, b)]
    } else {
        Vec::new()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admittance::build_admittance;
    use crate::fixed_point::evaluate_f;
    use crate::net_model::tests::two_bus;
    use crate::net_model::{load_case, partition_buses, CaseFormat};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    const ONE: Complex64 = Complex64::new(1.0, 0.0);

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_bus_y() -> AdmittanceMatrix {
        let case = two_bus(1.0, 0.0);
        build_admittance(&case, &partition_buses(&case).unwrap()).unwrap()
    }

    #[test]
    fn two_bus_newton() {
        let r = newton_solve(&two_bus_y(), &[ONE], &[c(2.5, 0.0)], &[ONE], &NewtonOptions::default()).unwrap();
        assert!(r.converged && r.mismatch_norm < 1e-8);
        assert!((r.v_l[0] - c(0.9330127, -0.25)).norm() < 1e-7);
    }

    #[test]
    fn infeasible_two_bus_newton_fails() {
        let r = newton_solve(&two_bus_y(), &[ONE], &[c(10.0, 0.0)], &[ONE], &NewtonOptions::default());
        assert!(matches!(r, Err(Error::NewtonNonConvergence { .. }) | Err(Error::SingularMatrix)));
    }

    #[test]
    fn two_bus_limit() {
        let l = actual_limit(&two_bus_y(), &[ONE], &[ONE], &[ONE], (0.0, 1.0), 1e-6).unwrap();
        assert!((l - 5.0).abs() < 1e-4, "{l}");
    }

    #[test]
    fn lower_bracket_must_be_feasible() {
        let r = actual_limit(&two_bus_y(), &[ONE], &[ONE], &[ONE], (6.0, 7.0), 1e-4);
        assert!(matches!(r, Err(Error::InfeasibleLowerBracket(_))));
    }

    #[test]
    fn analytic_examples() {
        let s = two_bus_analytic(2.5, 0.0, 0.1).unwrap();
        assert!((s[0] - c(0.9330127, -0.25)).norm() < 1e-7);
        assert!((s[1] - c(0.0669873, -0.25)).norm() < 1e-7);
        assert_eq!(two_bus_analytic(0.0, 0.0, 0.1).unwrap(), vec![ONE, c(0.0, 0.0)]);
        assert!(two_bus_analytic(0.0, 3.0, 0.1).unwrap().is_empty());
        assert_eq!(two_bus_analytic(5.0, 0.0, 0.1).unwrap().len(), 1);
    }

    #[test]
    fn baseline_satisfies_the_dispatch() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/case9.m");
        let case = load_case(&std::fs::read_to_string(path).unwrap(), CaseFormat::Matpower).unwrap();
        let part = partition_buses(&case).unwrap();
        let y = build_admittance(&case, &part).unwrap();
        let v = baseline_power_flow(&case, &part, &y, &NewtonOptions::default()).unwrap();
        let injection = y.matrix.to_dense() * nalgebra::DVector::from_column_slice(&v);
        let setpoints = case.generator_setpoints();
        for (pos, &bi) in part.bus_index.iter().enumerate() {
            let bus = &case.buses[bi];
            let s = v[pos] * injection[pos].conj();
            if pos < part.num_generators() {
                assert!((v[pos].norm() - setpoints[&bus.id]).abs() < 1e-12);
                if bus.reference {
                    assert_eq!(v[pos].arg(), 0.0);
                } else {
                    let pg: f64 = case.gens.iter().filter(|g| g.bus == bus.id).map(|g| g.active_power).sum();
                    assert!((s.re - (pg - bus.demand.re)).abs() < 1e-8);
                }
            } else {
                assert!((s + bus.demand).norm() < 1e-8);
            }
        }
    }

    proptest! {
        #[test]
        fn high_root_is_a_fixed_point(p in -4.9f64..4.9, q in -2.0f64..2.4) {
            let x = 0.1;
            let roots = two_bus_analytic(p, q, x).unwrap();
            prop_assume!(!roots.is_empty());
            let z = DMatrix::from_element(1, 1, c(0.0, x));
            let s = [c(p, q)];
            let f = evaluate_f(&roots[..1], &z, &s, &s).unwrap();
            prop_assert!((f[0] - roots[0]).norm() < 1e-12);
        }
    }
}
