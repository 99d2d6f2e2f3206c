//! Grid cases in per-unit: parsing, validation and the generator/load
//! partition that fixes the ordering of every downstream matrix.

mod json;
mod matpower;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub use json::{emit_json, parse_json};
pub use matpower::parse_matpower;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusKind {
    /// θV bus: voltage magnitude and angle both fixed.
    Generator,
    /// PQ bus.
    Load,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusRecord {
    pub id: usize,
    pub kind: BusKind,
    /// Per-unit complex demand, positive = consumption.
    pub demand: Complex64,
    /// Per-unit shunt admittance G + iB.
    pub shunt: Complex64,
    pub voltage_magnitude: f64,
    /// Radians.
    pub voltage_angle: f64,
    /// Angle reference (slack) bus of the source data. Only the baseline
    /// power flow used to fix generator phasors looks at this.
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub from_bus: usize,
    pub to_bus: usize,
    pub series_impedance: Complex64,
    /// Total line-charging susceptance.
    pub charging: f64,
    pub tap_ratio: f64,
    /// Radians.
    pub phase_shift: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRecord {
    pub bus: usize,
    pub voltage_setpoint: f64,
    /// Scheduled real output in per-unit; used only by the baseline
    /// power flow when generator phasors come from a solved case.
    pub active_power: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    pub gens: Vec<GenRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseFormat {
    Matpower,
    Json,
}

impl CaseFormat {
    /// Guess from a file extension; `.json` is JSON, anything else MATPOWER.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => CaseFormat::Json,
            _ => CaseFormat::Matpower,
        }
    }
}

/// Parse and validate a case document.
///
/// Connectivity and the generator/load split are checked separately by
/// [`validate_connectivity`] and [`partition_buses`].
pub fn load_case(source: &str, format: CaseFormat) -> Result<NetworkCase> {
    match format {
        CaseFormat::Matpower => parse_matpower(source),
        CaseFormat::Json => parse_json(source),
    }
}

pub fn load_case_file(path: &std::path::Path, format: Option<CaseFormat>) -> Result<NetworkCase> {
    let text = std::fs::read_to_string(path)?;
    let mut case = load_case(&text, format.unwrap_or_else(|| CaseFormat::from_path(path)))?;
    if case.name.is_empty() {
        case.name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
    }
    Ok(case)
}

impl NetworkCase {
    /// Validate records and derive bus kinds from generator status.
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<BusRecord>,
        branches: Vec<BranchRecord>,
        gens: Vec<GenRecord>,
    ) -> Result<Self> {
        let mut case = NetworkCase { name: name.into(), base_mva, buses, branches, gens };
        case.validate()?;
        case.assign_kinds();
        Ok(case)
    }

    fn validate(&self) -> Result<()> {
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return Err(Error::InvalidField {
                field: "base_mva".into(),
                message: format!("must be positive, got {}", self.base_mva),
            });
        }
        let mut seen = BTreeSet::new();
        for b in &self.buses {
            if !seen.insert(b.id) {
                return Err(Error::DuplicateBus(b.id));
            }
        }
        for br in &self.branches {
            for bus in [br.from_bus, br.to_bus] {
                if !seen.contains(&bus) {
                    return Err(Error::UnknownBus {
                        context: format!("branch {}-{}", br.from_bus, br.to_bus),
                        bus,
                    });
                }
            }
            if !(br.tap_ratio > 0.0) {
                return Err(Error::InvalidField {
                    field: format!("branch {}-{} tap_ratio", br.from_bus, br.to_bus),
                    message: format!("must be positive, got {}", br.tap_ratio),
                });
            }
        }
        for g in &self.gens {
            if !seen.contains(&g.bus) {
                return Err(Error::UnknownBus { context: "generator".into(), bus: g.bus });
            }
            if g.in_service && !(g.voltage_setpoint > 0.0) {
                return Err(Error::InvalidField {
                    field: format!("generator at bus {} voltage_setpoint", g.bus),
                    message: format!("must be positive, got {}", g.voltage_setpoint),
                });
            }
        }
        Ok(())
    }

    fn assign_kinds(&mut self) {
        let gen_buses: BTreeSet<usize> =
            self.gens.iter().filter(|g| g.in_service).map(|g| g.bus).collect();
        for b in &mut self.buses {
            b.kind = if gen_buses.contains(&b.id) { BusKind::Generator } else { BusKind::Load };
        }
    }

    pub fn bus(&self, id: usize) -> Option<&BusRecord> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// Demands recorded at generator buses. The θV model pins those buses'
    /// phasors, so these loads never enter S_L.
    pub fn generator_bus_loads(&self) -> Vec<(usize, Complex64)> {
        self.buses
            .iter()
            .filter(|b| b.kind == BusKind::Generator && b.demand != Complex64::new(0.0, 0.0))
            .map(|b| (b.id, b.demand))
            .collect()
    }

    /// Voltage setpoint of the first in-service generator at each bus.
    pub fn generator_setpoints(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for g in self.gens.iter().filter(|g| g.in_service) {
            match out.get(&g.bus) {
                None => {
                    out.insert(g.bus, g.voltage_setpoint);
                }
                Some(&first) => {
                    if (first - g.voltage_setpoint).abs() > 1e-6 {
                        log::warn!(
                            "bus {}: generator setpoints disagree ({} vs {}); using the first",
                            g.bus,
                            first,
                            g.voltage_setpoint
                        );
                    }
                }
            }
        }
        out
    }
}

/// The generator-first ordering shared by every matrix in the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub generator_ids: Vec<usize>,
    pub load_ids: Vec<usize>,
    /// Global position -> index into `NetworkCase::buses`.
    pub bus_index: Vec<usize>,
    position: HashMap<usize, usize>,
}

impl Partition {
    pub fn num_generators(&self) -> usize {
        self.generator_ids.len()
    }

    pub fn num_loads(&self) -> usize {
        self.load_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.bus_index.len()
    }

    /// Global position of a bus id.
    pub fn position(&self, id: usize) -> Option<usize> {
        self.position.get(&id).copied()
    }

    /// Position of a bus id within the load block.
    pub fn load_position(&self, id: usize) -> Option<usize> {
        self.position(id)
            .and_then(|p| p.checked_sub(self.num_generators()))
    }
}

pub fn partition_buses(case: &NetworkCase) -> Result<Partition> {
    let mut generator_ids = Vec::new();
    let mut load_ids = Vec::new();
    for b in &case.buses {
        match b.kind {
            BusKind::Generator => generator_ids.push(b.id),
            BusKind::Load => load_ids.push(b.id),
        }
    }
    if generator_ids.is_empty() {
        return Err(Error::NoGeneratorBus);
    }
    if load_ids.is_empty() {
        return Err(Error::NoLoadBus);
    }
    generator_ids.sort_unstable();
    load_ids.sort_unstable();
    let index_of: HashMap<usize, usize> =
        case.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
    let bus_index: Vec<usize> =
        generator_ids.iter().chain(&load_ids).map(|id| index_of[id]).collect();
    let position = generator_ids
        .iter()
        .chain(&load_ids)
        .enumerate()
        .map(|(p, &id)| (id, p))
        .collect();
    Ok(Partition { generator_ids, load_ids, bus_index, position })
}

/// Fails with the smallest component not containing the first bus when the
/// in-service branch graph does not span every bus.
pub fn validate_connectivity(case: &NetworkCase) -> Result<()> {
    let index_of: HashMap<usize, usize> =
        case.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
    let n = case.buses.len();
    let mut adj = vec![Vec::new(); n];
    for br in case.branches.iter().filter(|b| b.in_service) {
        let (Some(&f), Some(&t)) = (index_of.get(&br.from_bus), index_of.get(&br.to_bus)) else {
            return Err(Error::UnknownBus { context: "branch".into(), bus: br.from_bus });
        };
        adj[f].push(t);
        adj[t].push(f);
    }
    let mut component = vec![usize::MAX; n];
    let mut count = 0;
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        component[start] = count;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if component[w] == usize::MAX {
                    component[w] = count;
                    stack.push(w);
                }
            }
        }
        count += 1;
    }
    if count <= 1 {
        return Ok(());
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (i, &c) in component.iter().enumerate() {
        members[c].push(case.buses[i].id);
    }
    let mut island = members[1..]
        .iter()
        .min_by_key(|m| m.len())
        .cloned()
        .unwrap_or_default();
    island.sort_unstable();
    Err(Error::Island { island })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn bus(id: usize, p: f64, q: f64) -> BusRecord {
        BusRecord {
            id,
            kind: BusKind::Load,
            demand: Complex64::new(p, q),
            shunt: Complex64::new(0.0, 0.0),
            voltage_magnitude: 1.0,
            voltage_angle: 0.0,
            reference: false,
        }
    }

    pub(crate) fn line(from: usize, to: usize, r: f64, x: f64) -> BranchRecord {
        BranchRecord {
            from_bus: from,
            to_bus: to,
            series_impedance: Complex64::new(r, x),
            charging: 0.0,
            tap_ratio: 1.0,
            phase_shift: 0.0,
            in_service: true,
        }
    }

    pub(crate) fn gen(bus: usize, v: f64) -> GenRecord {
        GenRecord { bus, voltage_setpoint: v, active_power: 0.0, in_service: true }
    }

    pub(crate) fn two_bus(p: f64, q: f64) -> NetworkCase {
        let mut b1 = bus(1, 0.0, 0.0);
        b1.reference = true;
        NetworkCase::new(
            "two_bus",
            100.0,
            vec![b1, bus(2, p, q)],
            vec![line(1, 2, 0.0, 0.1)],
            vec![gen(1, 1.0)],
        )
        .unwrap()
    }

    const TWO_BUS_M: &str = "function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	1	250	0	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	250	10;
];
mpc.branch = [
	1	2	0	0.1	0	250	250	250	0	0	1	-360	360;
];
";

    #[test]
    fn hand_written_two_bus_case() {
        let case = load_case(TWO_BUS_M, CaseFormat::Matpower).unwrap();
        let part = partition_buses(&case).unwrap();
        assert_eq!(part.num_generators(), 1);
        assert_eq!(part.num_loads(), 1);
        assert_eq!((part.generator_ids.clone(), part.load_ids.clone()), (vec![1], vec![2]));
        assert_eq!(case.buses[1].demand, Complex64::new(2.5, 0.0));
        assert!(validate_connectivity(&case).is_ok());
    }

    #[test]
    fn distributed_case9() {
        let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/case9.m")).unwrap();
        let case = load_case(&text, CaseFormat::Matpower).unwrap();
        assert_eq!(case.buses.len(), 9);
        assert_eq!(case.gens.iter().filter(|g| g.in_service).count(), 3);
        assert_eq!(case.branches.len(), 9);
        let part = partition_buses(&case).unwrap();
        assert_eq!(part.generator_ids, vec![1, 2, 3]);
        assert_eq!(part.load_ids.len(), 6);
    }

    #[test]
    fn duplicate_bus_id_is_rejected() {
        let text = TWO_BUS_M.replace("\t2\t1\t250", "\t1\t1\t250");
        assert!(matches!(load_case(&text, CaseFormat::Matpower), Err(Error::DuplicateBus(1))));
    }

    #[test]
    fn unknown_bus_in_branch_is_rejected() {
        let text = TWO_BUS_M.replace("\t1\t2\t0\t0.1", "\t1\t7\t0\t0.1");
        assert!(matches!(
            load_case(&text, CaseFormat::Matpower),
            Err(Error::UnknownBus { bus: 7, .. })
        ));
    }

    #[test]
    fn all_generators_out_of_service() {
        let mut case = two_bus(1.0, 0.0);
        case.gens[0].in_service = false;
        let case = NetworkCase::new(case.name, case.base_mva, case.buses, case.branches, case.gens)
            .unwrap();
        assert!(matches!(partition_buses(&case), Err(Error::NoGeneratorBus)));
    }

    #[test]
    fn out_of_service_branch_islands_the_load() {
        let mut case = two_bus(1.0, 0.0);
        case.branches[0].in_service = false;
        match validate_connectivity(&case) {
            Err(Error::Island { island }) => assert_eq!(island, vec![2]),
            other => panic!("expected island error, got {other:?}"),
        }
    }

    #[test]
    fn chain_with_middle_branch_removed() {
        let mut case = NetworkCase::new(
            "chain",
            100.0,
            vec![bus(1, 0.0, 0.0), bus(2, 0.1, 0.0), bus(3, 0.1, 0.0)],
            vec![line(1, 2, 0.0, 0.1), line(2, 3, 0.0, 0.1)],
            vec![gen(1, 1.0)],
        )
        .unwrap();
        assert!(validate_connectivity(&case).is_ok());
        case.branches[1].in_service = false;
        match validate_connectivity(&case) {
            Err(Error::Island { island }) => assert_eq!(island, vec![3]),
            other => panic!("expected island error, got {other:?}"),
        }
    }

    #[test]
    fn doubling_base_halves_demands() {
        let a = load_case(TWO_BUS_M, CaseFormat::Matpower).unwrap();
        let b = load_case(&TWO_BUS_M.replace("baseMVA = 100", "baseMVA = 200"), CaseFormat::Matpower)
            .unwrap();
        assert_eq!(b.buses[1].demand * 2.0, a.buses[1].demand);
    }

    #[test]
    fn first_generator_setpoint_wins() {
        let case = NetworkCase::new(
            "dup",
            100.0,
            vec![bus(1, 0.0, 0.0), bus(2, 1.0, 0.0)],
            vec![line(1, 2, 0.0, 0.1)],
            vec![gen(1, 1.02), gen(1, 1.05)],
        )
        .unwrap();
        assert_eq!(case.generator_setpoints()[&1], 1.02);
    }
}
