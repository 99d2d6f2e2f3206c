//! Bus admittance matrix and its reduction onto the load buses.
//!
//! With generators first, `Y = [[Y_GG, Y_GL], [Y_LG, Y_LL]]`. Eliminating
//! the load currents gives the equivalent voltages `E = -Y_LL⁻¹ Y_LG V_G`,
//! the load impedance `Z = Y_LL⁻¹` and the normalized impedance
//! `Ẑ = diag(E)⁻¹ Z diag(E*)⁻¹`, under which the power-flow equations read
//! `v = 1 - Ẑ diag(v*)⁻¹ S*` with `v = V_L / E`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, Factorization, SparseMatrix};
use crate::net_model::{NetworkCase, Partition};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Bus admittance matrix in generator-first order.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    pub matrix: SparseMatrix<Complex64>,
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.matrix.get(i, j)
    }
}

/// Stamp every in-service branch (π model, tap on the from side) and every
/// bus shunt.
pub fn build_admittance(case: &NetworkCase, partition: &Partition) -> Result<AdmittanceMatrix> {
    let mut triplets = Vec::with_capacity(4 * case.branches.len() + case.buses.len());
    for br in case.branches.iter().filter(|b| b.in_service) {
        if br.series_impedance == ZERO {
            return Err(Error::ZeroImpedance { from: br.from_bus, to: br.to_bus });
        }
        let lookup = |id| {
            partition.position(id).ok_or(Error::UnknownBus { context: "branch".into(), bus: id })
        };
        let (f, t) = (lookup(br.from_bus)?, lookup(br.to_bus)?);
        let ys = ONE / br.series_impedance;
        let tap = Complex64::from_polar(br.tap_ratio, br.phase_shift);
        let ytt = ys + Complex64::new(0.0, br.charging / 2.0);
        triplets.push((f, f, ytt / (br.tap_ratio * br.tap_ratio)));
        triplets.push((f, t, -ys / tap.conj()));
        triplets.push((t, f, -ys / tap));
        triplets.push((t, t, ytt));
    }
    for (pos, &bi) in partition.bus_index.iter().enumerate() {
        let shunt = case.buses[bi].shunt;
        if shunt != ZERO {
            triplets.push((pos, pos, shunt));
        }
    }
    Ok(AdmittanceMatrix { matrix: SparseMatrix::from_triplets(partition.dim(), triplets) })
}

/// Load-side reduction of the network for fixed generator phasors.
#[derive(Debug, Clone)]
pub struct GridReduction {
    pub load_ids: Vec<usize>,
    pub y_ll: SparseMatrix<Complex64>,
    /// Rows of Y_LG (column index = generator position).
    pub y_lg: Vec<Vec<(usize, Complex64)>>,
    pub generator_phasors: Vec<Complex64>,
    /// Equivalent (zero-load) voltages.
    pub e: Vec<Complex64>,
    /// `Y_LL⁻¹`.
    pub z: DMatrix<Complex64>,
    /// `diag(E)⁻¹ Z diag(E*)⁻¹`.
    pub zhat: DMatrix<Complex64>,
    /// `diag(v0)⁻¹ Ẑ diag(v0*)⁻¹`; `None` while `v0 = 1`.
    ztilde: Option<DMatrix<Complex64>>,
    /// Normalized known solution (`V_L / E`).
    pub v0: Vec<Complex64>,
    /// Load power of the known solution.
    pub s0: Vec<Complex64>,
    /// `‖Y_LL Z - I‖∞`.
    pub factor_residual: f64,
}

const FACTOR_TOLERANCE: f64 = 1e-10;
const KNOWN_SOLUTION_TOLERANCE: f64 = 1e-6;

pub fn reduce_network(
    y: &AdmittanceMatrix,
    partition: &Partition,
    generator_phasors: &[Complex64],
) -> Result<GridReduction> {
    let m = partition.num_generators();
    let n = partition.num_loads();
    if n == 0 {
        return Err(Error::NoLoadBus);
    }
    if generator_phasors.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: generator_phasors.len() });
    }
    if let Some(p) = generator_phasors.iter().position(|v| *v == ZERO) {
        return Err(Error::Invalid(format!("generator phasor {p} is zero")));
    }
    let loads: Vec<usize> = (m..m + n).collect();
    let gens: Vec<usize> = (0..m).collect();
    let y_ll = y.matrix.principal(&loads);
    let y_lg = y.matrix.sub_block(&loads, &gens);

    let lu = Factorization::new(&y_ll).map_err(|_| Error::SingularAdmittance)?;
    let z = lu.inverse().map_err(|_| Error::SingularAdmittance)?;
    let injected: Vec<Complex64> = y_lg
        .iter()
        .map(|row| row.iter().fold(ZERO, |acc, &(j, v)| acc + v * generator_phasors[j]))
        .collect();
    let e: Vec<Complex64> = lu
        .solve(&injected)
        .map_err(|_| Error::SingularAdmittance)?
        .into_iter()
        .map(|x| -x)
        .collect();
    if e.iter().any(|v| !(v.norm() > 0.0) || !v.is_finite()) || z.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularAdmittance);
    }

    let mut check = y_ll.mul_dense(&z);
    for i in 0..n {
        check[(i, i)] -= ONE;
    }
    let factor_residual = inf_norm(&check);
    if factor_residual > FACTOR_TOLERANCE {
        log::warn!("‖Y_LL Z - I‖∞ = {factor_residual:.3e} exceeds {FACTOR_TOLERANCE:e}");
    }

    let zhat = DMatrix::from_fn(n, n, |i, j| z[(i, j)] / (e[i] * e[j].conj()));
    Ok(GridReduction {
        load_ids: partition.load_ids.clone(),
        y_ll,
        y_lg,
        generator_phasors: generator_phasors.to_vec(),
        e,
        z,
        zhat,
        ztilde: None,
        v0: vec![ONE; n],
        s0: vec![ZERO; n],
        factor_residual,
    })
}

/// `‖v - (1 - Ẑ diag(v*)⁻¹ S*)‖∞` for the un-renormalized equations.
pub fn normalized_residual(zhat: &DMatrix<Complex64>, v: &[Complex64], s: &[Complex64]) -> f64 {
    let w = nalgebra::DVector::from_iterator(v.len(), v.iter().zip(s).map(|(vi, si)| si.conj() / vi.conj()));
    let zw = zhat * w;
    v.iter()
        .zip(zw.iter())
        .map(|(vi, zi)| (vi - (ONE - zi)).norm())
        .fold(0.0, f64::max)
}

impl GridReduction {
    pub fn num_loads(&self) -> usize {
        self.e.len()
    }

    /// The impedance the stress measures and the fixed-point map use.
    pub fn ztilde(&self) -> &DMatrix<Complex64> {
        self.ztilde.as_ref().unwrap_or(&self.zhat)
    }

    pub fn has_known_solution(&self) -> bool {
        self.ztilde.is_some()
    }

    /// Physical load voltages for a normalized solution `u` (relative to v0).
    pub fn physical_voltages(&self, u: &[Complex64]) -> Vec<Complex64> {
        u.iter().zip(&self.e).zip(&self.v0).map(|((u, e), v0)| e * v0 * u).collect()
    }

    /// Re-centre the equations on a known solution `v0` (normalized by E)
    /// of load `s0`.
    pub fn renormalize_about_solution(
        mut self,
        v0: &[Complex64],
        s0: &[Complex64],
    ) -> Result<GridReduction> {
        let n = self.num_loads();
        for len in [v0.len(), s0.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        if let Some(p) = v0.iter().position(|v| *v == ZERO) {
            return Err(Error::ZeroEntry(p));
        }
        let residual = normalized_residual(&self.zhat, v0, s0);
        if !(residual < KNOWN_SOLUTION_TOLERANCE) {
            return Err(Error::NotASolution { residual });
        }
        self.ztilde = if v0.iter().all(|v| *v == ONE) {
            None
        } else {
            Some(DMatrix::from_fn(n, n, |i, j| self.zhat[(i, j)] / (v0[i] * v0[j].conj())))
        };
        self.v0 = v0.to_vec();
        self.s0 = s0.to_vec();
        Ok(self)
    }

    /// E and Ẑ as JSON, complex numbers as `[re, im]`.
    pub fn dump_json(&self) -> String {
        #[derive(Serialize)]
        struct Dump {
            load_ids: Vec<usize>,
            e: Vec<[f64; 2]>,
            zhat: Vec<Vec<[f64; 2]>>,
        }
        let n = self.num_loads();
        let dump = Dump {
            load_ids: self.load_ids.clone(),
            e: self.e.iter().map(|c| [c.re, c.im]).collect(),
            zhat: (0..n)
                .map(|i| (0..n).map(|j| [self.zhat[(i, j)].re, self.zhat[(i, j)].im]).collect())
                .collect(),
        };
        serde_json::to_string(&dump).expect("dump serializes")
    }
}
