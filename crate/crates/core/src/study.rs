//! A loaded case with everything the certificates need precomputed.

use std::path::Path;

use num_complex::Complex64;

use crate::admittance::{build_admittance, reduce_network, AdmittanceMatrix, GridReduction};
use crate::error::{Error, Result};
use crate::net_model::{load_case_file, partition_buses, validate_connectivity, CaseFormat, NetworkCase, Partition};
use crate::oracle::{baseline_power_flow, newton_solve, NewtonOptions, NewtonResult};

/// Where the fixed generator phasors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GenPhasorSource {
    /// Generator setpoint magnitude, bus angle from the case file.
    #[default]
    Case,
    /// Magnitude and angle from a conventional power flow of the case's
    /// dispatch.
    Solved,
}

#[derive(Debug, Clone)]
pub struct Study {
    pub case: NetworkCase,
    pub partition: Partition,
    pub admittance: AdmittanceMatrix,
    pub generator_phasors: Vec<Complex64>,
    /// Demand at load buses, in load order.
    pub base_load: Vec<Complex64>,
    pub reduction: GridReduction,
}

impl Study {
    pub fn new(case: NetworkCase, source: GenPhasorSource) -> Result<Study> {
        validate_connectivity(&case)?;
        let partition = partition_buses(&case)?;
        let admittance = build_admittance(&case, &partition)?;
        let generator_phasors = match source {
            GenPhasorSource::Case => {
                let setpoints = case.generator_setpoints();
                partition
                    .generator_ids
                    .iter()
                    .map(|id| {
                        let bus = case.bus(*id).expect("partitioned bus exists");
                        Complex64::from_polar(setpoints[id], bus.voltage_angle)
                    })
                    .collect()
            }
            GenPhasorSource::Solved => {
                let v = baseline_power_flow(&case, &partition, &admittance, &NewtonOptions::default())?;
                v[..partition.num_generators()].to_vec()
            }
        };
        let dropped = case.generator_bus_loads();
        if !dropped.is_empty() {
            log::info!("{} generator-bus demands are held by the fixed generator phasors", dropped.len());
        }
        let base_load = partition
            .load_ids
            .iter()
            .map(|id| case.bus(*id).expect("partitioned bus exists").demand)
            .collect();
        let reduction = reduce_network(&admittance, &partition, &generator_phasors)?;
        Ok(Study { case, partition, admittance, generator_phasors, base_load, reduction })
    }

    pub fn from_path(path: &Path, format: Option<CaseFormat>, source: GenPhasorSource) -> Result<Study> {
        Study::new(load_case_file(path, format)?, source)
    }

    pub fn num_loads(&self) -> usize {
        self.partition.num_loads()
    }

    pub fn load_position(&self, bus: usize) -> Result<usize> {
        self.partition.load_position(bus).ok_or_else(|| {
            if self.case.bus(bus).is_some() {
                Error::Invalid(format!("bus {bus} is a generator bus"))
            } else {
                Error::UnknownBus { context: "request".into(), bus }
            }
        })
    }

    /// Newton solution for load `s_l`, started from `E` unless given.
    pub fn newton(&self, s_l: &[Complex64], start: Option<&[Complex64]>) -> Result<NewtonResult> {
        let start = start.unwrap_or(&self.reduction.e);
        newton_solve(&self.admittance, &self.generator_phasors, s_l, start, &NewtonOptions::default())
    }

    /// Re-centre the reduction on the Newton solution at `base_load`.
    pub fn with_known_solution(mut self) -> Result<Study> {
        let solution = self.newton(&self.base_load, None)?;
        let v0: Vec<Complex64> = solution.v_l.iter().zip(&self.reduction.e).map(|(v, e)| v / e).collect();
        let s0 = self.base_load.clone();
        self.reduction = self.reduction.renormalize_about_solution(&v0, &s0)?;
        Ok(self)
    }

    /// Scale the load at every load bus by `factor`.
    pub fn scaled_load(&self, factor: f64) -> Vec<Complex64> {
        self.base_load.iter().map(|s| s * factor).collect()
    }
}
