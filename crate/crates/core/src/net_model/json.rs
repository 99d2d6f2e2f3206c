//! Canonical JSON form of a case.
//!
//! ```json
//! {
//!   "name": "two_bus",
//!   "base_mva": 100.0,
//!   "buses": [
//!     {"id": 1, "demand": [0.0, 0.0], "shunt": [0.0, 0.0],
//!      "voltage_magnitude": 1.0, "voltage_angle_deg": 0.0, "reference": true}
//!   ],
//!   "branches": [
//!     {"from_bus": 1, "to_bus": 2, "series_impedance": [0.0, 0.1], "charging": 0.0,
//!      "tap_ratio": 1.0, "phase_shift_deg": 0.0, "in_service": true}
//!   ],
//!   "gens": [
//!     {"bus": 1, "voltage_setpoint": 1.0, "active_power": 0.0, "in_service": true}
//!   ]
//! }
//! ```
//!
//! Every quantity is per-unit on `base_mva` except `base_mva` itself (MVA)
//! and angles (degrees). Complex values are `[re, im]` pairs. Bus kinds are
//! not stored; they follow from generator status.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{BranchRecord, BusKind, BusRecord, GenRecord, NetworkCase};
use crate::error::Result;

#[derive(Serialize, Deserialize)]
struct CaseDoc {
    #[serde(default)]
    name: String,
    base_mva: f64,
    buses: Vec<BusDoc>,
    branches: Vec<BranchDoc>,
    gens: Vec<GenDoc>,
}

#[derive(Serialize, Deserialize)]
struct BusDoc {
    id: usize,
    demand: [f64; 2],
    #[serde(default)]
    shunt: [f64; 2],
    voltage_magnitude: f64,
    #[serde(default)]
    voltage_angle_deg: f64,
    #[serde(default)]
    reference: bool,
}

#[derive(Serialize, Deserialize)]
struct BranchDoc {
    from_bus: usize,
    to_bus: usize,
    series_impedance: [f64; 2],
    #[serde(default)]
    charging: f64,
    #[serde(default = "one")]
    tap_ratio: f64,
    #[serde(default)]
    phase_shift_deg: f64,
    #[serde(default = "yes")]
    in_service: bool,
}

#[derive(Serialize, Deserialize)]
struct GenDoc {
    bus: usize,
    voltage_setpoint: f64,
    #[serde(default)]
    active_power: f64,
    #[serde(default = "yes")]
    in_service: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn pair(c: Complex64) -> [f64; 2] {
    [c.re, c.im]
}

fn complex([re, im]: [f64; 2]) -> Complex64 {
    Complex64::new(re, im)
}

pub fn parse_json(source: &str) -> Result<NetworkCase> {
    let doc: CaseDoc = serde_json::from_str(source)?;
    let buses = doc
        .buses
        .into_iter()
        .map(|b| BusRecord {
            id: b.id,
            kind: BusKind::Load,
            demand: complex(b.demand),
            shunt: complex(b.shunt),
            voltage_magnitude: b.voltage_magnitude,
            voltage_angle: b.voltage_angle_deg.to_radians(),
            reference: b.reference,
        })
        .collect();
    let branches = doc
        .branches
        .into_iter()
        .map(|b| BranchRecord {
            from_bus: b.from_bus,
            to_bus: b.to_bus,
            series_impedance: complex(b.series_impedance),
            charging: b.charging,
            tap_ratio: b.tap_ratio,
            phase_shift: b.phase_shift_deg.to_radians(),
            in_service: b.in_service,
        })
        .collect();
    let gens = doc
        .gens
        .into_iter()
        .map(|g| GenRecord {
            bus: g.bus,
            voltage_setpoint: g.voltage_setpoint,
            active_power: g.active_power,
            in_service: g.in_service,
        })
        .collect();
    NetworkCase::new(doc.name, doc.base_mva, buses, branches, gens)
}

pub fn emit_json(case: &NetworkCase) -> String {
    let doc = CaseDoc {
        name: case.name.clone(),
        base_mva: case.base_mva,
        buses: case
            .buses
            .iter()
            .map(|b| BusDoc {
                id: b.id,
                demand: pair(b.demand),
                shunt: pair(b.shunt),
                voltage_magnitude: b.voltage_magnitude,
                voltage_angle_deg: b.voltage_angle.to_degrees(),
                reference: b.reference,
            })
            .collect(),
        branches: case
            .branches
            .iter()
            .map(|b| BranchDoc {
                from_bus: b.from_bus,
                to_bus: b.to_bus,
                series_impedance: pair(b.series_impedance),
                charging: b.charging,
                tap_ratio: b.tap_ratio,
                phase_shift_deg: b.phase_shift.to_degrees(),
                in_service: b.in_service,
            })
            .collect(),
        gens: case
            .gens
            .iter()
            .map(|g| GenDoc {
                bus: g.bus,
                voltage_setpoint: g.voltage_setpoint,
                active_power: g.active_power,
                in_service: g.in_service,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("case documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_model::{load_case, CaseFormat};
    use crate::Error;
    use proptest::prelude::*;

    fn assert_cases_match(a: &NetworkCase, b: &NetworkCase) {
        // degree <-> radian conversion may move angles by an ulp or two
        let close = |x: f64, y: f64| (x - y).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0);
        assert_eq!(a.name, b.name);
        assert_eq!(a.base_mva, b.base_mva);
        assert_eq!(a.buses.len(), b.buses.len());
        for (x, y) in a.buses.iter().zip(&b.buses) {
            assert_eq!((x.id, x.kind, x.demand, x.shunt), (y.id, y.kind, y.demand, y.shunt));
            assert_eq!((x.voltage_magnitude, x.reference), (y.voltage_magnitude, y.reference));
            assert!(close(x.voltage_angle, y.voltage_angle));
        }
        assert_eq!(a.branches.len(), b.branches.len());
        for (x, y) in a.branches.iter().zip(&b.branches) {
            assert_eq!((x.from_bus, x.to_bus, x.in_service), (y.from_bus, y.to_bus, y.in_service));
            assert_eq!((x.series_impedance, x.charging, x.tap_ratio), (y.series_impedance, y.charging, y.tap_ratio));
            assert!(close(x.phase_shift, y.phase_shift));
        }
        assert_eq!(a.gens, b.gens);
    }

    #[test]
    fn distributed_cases_round_trip() {
        for name in ["case9", "case39", "case1354pegase"] {
            let path = format!("{}/data/{name}.m", env!("CARGO_MANIFEST_DIR"));
            let case = load_case(&std::fs::read_to_string(path).unwrap(), CaseFormat::Matpower).unwrap();
            let back = load_case(&emit_json(&case), CaseFormat::Json).unwrap();
            assert_cases_match(&case, &back);
        }
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let text = r#"{"base_mva": 100, "buses": [
            {"id": 1, "demand": [0, 0], "voltage_magnitude": 1.0},
            {"id": 2, "demand": [2.5, 0], "voltage_magnitude": 1.0}],
          "branches": [{"from_bus": 1, "to_bus": 2, "series_impedance": [0, 0.1]}],
          "gens": [{"bus": 1, "voltage_setpoint": 1.0}]}"#;
        let case = parse_json(text).unwrap();
        assert_eq!(case.branches[0].tap_ratio, 1.0);
        assert!(case.branches[0].in_service);
        assert_eq!(case.buses[0].kind, BusKind::Generator);
    }

    #[test]
    fn malformed_json_is_an_input_error() {
        let err = parse_json("{\"base_mva\": }").unwrap_err();
        assert!(matches!(err, Error::Json(_)));
        assert!(err.is_input_error());
    }

    proptest! {
        #[test]
        fn random_cases_round_trip(
            loads in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -40.0f64..40.0), 1..6),
            x in 0.01f64..1.0,
            tap in 0.8f64..1.2,
            shift in -30.0f64..30.0,
        ) {
            let mut buses = vec![crate::net_model::tests::bus(1, 0.0, 0.0)];
            let mut branches = Vec::new();
            for (k, &(p, q, ang)) in loads.iter().enumerate() {
                let mut b = crate::net_model::tests::bus(k + 2, p, q);
                b.voltage_angle = ang.to_radians();
                buses.push(b);
                let mut br = crate::net_model::tests::line(k + 1, k + 2, 0.01, x);
                br.tap_ratio = tap;
                br.phase_shift = shift.to_radians();
                branches.push(br);
            }
            let case = NetworkCase::new("rand", 100.0, buses, branches,
                vec![crate::net_model::tests::gen(1, 1.03)]).unwrap();
            let back = parse_json(&emit_json(&case)).unwrap();
            assert_cases_match(&case, &back);
        }
    }
}
