//! Reader for the subset of MATPOWER version-2 case files that feeds the
//! power-flow model: `baseMVA`, `bus`, `gen` and `branch`. Everything else
//! (cost tables, names, user fields) is skipped.

use std::collections::HashMap;

use num_complex::Complex64;

use super::{BranchRecord, BusKind, BusRecord, GenRecord, NetworkCase};
use crate::error::{Error, Result};

// 1-based column numbers of the standard layout.
const BUS_I: usize = 1;
const BUS_TYPE: usize = 2;
const PD: usize = 3;
const QD: usize = 4;
const GS: usize = 5;
const BS: usize = 6;
const VM: usize = 8;
const VA: usize = 9;
const BUS_COLS: usize = 13;

const GEN_BUS: usize = 1;
const PG: usize = 2;
const VG: usize = 6;
const GEN_STATUS: usize = 8;
const GEN_COLS: usize = 8;

const F_BUS: usize = 1;
const T_BUS: usize = 2;
const BR_R: usize = 3;
const BR_X: usize = 4;
const BR_B: usize = 5;
const TAP: usize = 9;
const SHIFT: usize = 10;
const BR_STATUS: usize = 11;
const BRANCH_COLS: usize = 11;

const REF_TYPE: f64 = 3.0;

struct Row {
    line: usize,
    values: Vec<f64>,
}

impl Row {
    fn col(&self, c: usize) -> f64 {
        self.values[c - 1]
    }

    fn id(&self, c: usize, field: &str) -> Result<usize> {
        let v = self.col(c);
        if v.fract() != 0.0 || v < 0.0 {
            return Err(Error::Syntax {
                line: self.line,
                message: format!("{field} must be a non-negative integer, got {v}"),
            });
        }
        Ok(v as usize)
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '\'' => in_str = !in_str,
            '%' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Syntax {
        line,
        message: format!("expected a number, found `{tok}`"),
    })
}

/// Scan the document into scalar and matrix assignments to `mpc.*`.
fn scan(source: &str) -> Result<(HashMap<String, (usize, f64)>, HashMap<String, Vec<Row>>)> {
    let mut scalars = HashMap::new();
    let mut matrices = HashMap::new();
    let mut current: Option<(String, Vec<Row>)> = None;
    let mut skipping_cell = false;

    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let mut text = strip_comment(raw).trim();

        if skipping_cell {
            if text.contains('}') {
                skipping_cell = false;
            }
            continue;
        }

        if current.is_none() {
            let Some(rest) = text.strip_prefix("mpc.") else { continue };
            let Some((name, rhs)) = rest.split_once('=') else { continue };
            let name = name.trim().to_string();
            let rhs = rhs.trim();
            if let Some(body) = rhs.strip_prefix('[') {
                current = Some((name, Vec::new()));
                text = body;
            } else if rhs.starts_with('{') {
                skipping_cell = !rhs.contains('}');
                continue;
            } else if rhs.starts_with('\'') {
                continue;
            } else {
                let value = rhs.trim_end_matches(';').trim();
                scalars.insert(name, (line_no, parse_number(value, line_no)?));
                continue;
            }
        }

        let (_, rows) = current.as_mut().expect("inside a matrix");
        let (body, closed) = match text.find(']') {
            Some(p) => (&text[..p], true),
            None => (text, false),
        };
        for chunk in body.split(';') {
            let values = chunk
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| parse_number(t, line_no))
                .collect::<Result<Vec<f64>>>()?;
            if !values.is_empty() {
                rows.push(Row { line: line_no, values });
            }
        }
        if closed {
            let (name, rows) = current.take().expect("inside a matrix");
            matrices.insert(name, rows);
        }
    }
    if let Some((name, rows)) = current {
        let line = rows.last().map_or(source.lines().count(), |r| r.line);
        return Err(Error::Syntax { line, message: format!("unterminated matrix mpc.{name}") });
    }
    Ok((scalars, matrices))
}

fn table<'a>(
    matrices: &'a HashMap<String, Vec<Row>>,
    name: &str,
    min_cols: usize,
) -> Result<&'a [Row]> {
    let rows = matrices.get(name).ok_or_else(|| Error::InvalidField {
        field: format!("mpc.{name}"),
        message: "missing".into(),
    })?;
    for r in rows {
        if r.values.len() < min_cols {
            return Err(Error::Syntax {
                line: r.line,
                message: format!(
                    "mpc.{name} row has {} columns, need at least {min_cols}",
                    r.values.len()
                ),
            });
        }
    }
    Ok(rows)
}

pub fn parse_matpower(source: &str) -> Result<NetworkCase> {
    let name = source
        .lines()
        .map(|l| strip_comment(l).trim())
        .find_map(|l| l.strip_prefix("function"))
        .and_then(|rest| rest.split('=').nth(1))
        .map(|n| n.trim().to_string())
        .unwrap_or_default();

    let (scalars, matrices) = scan(source)?;
    let &(_, base_mva) = scalars.get("baseMVA").ok_or(Error::MissingBaseMva)?;

    let buses = table(&matrices, "bus", BUS_COLS)?
        .iter()
        .map(|r| {
            Ok(BusRecord {
                id: r.id(BUS_I, "BUS_I")?,
                kind: BusKind::Load,
                demand: Complex64::new(r.col(PD), r.col(QD)) / base_mva,
                shunt: Complex64::new(r.col(GS), r.col(BS)) / base_mva,
                voltage_magnitude: r.col(VM),
                voltage_angle: r.col(VA).to_radians(),
                reference: r.col(BUS_TYPE) == REF_TYPE,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let gens = table(&matrices, "gen", GEN_COLS)?
        .iter()
        .map(|r| {
            Ok(GenRecord {
                bus: r.id(GEN_BUS, "GEN_BUS")?,
                voltage_setpoint: r.col(VG),
                active_power: r.col(PG) / base_mva,
                in_service: r.col(GEN_STATUS) > 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let branches = table(&matrices, "branch", BRANCH_COLS)?
        .iter()
        .map(|r| {
            let tap = r.col(TAP);
            Ok(BranchRecord {
                from_bus: r.id(F_BUS, "F_BUS")?,
                to_bus: r.id(T_BUS, "T_BUS")?,
                series_impedance: Complex64::new(r.col(BR_R), r.col(BR_X)),
                charging: r.col(BR_B),
                tap_ratio: if tap == 0.0 { 1.0 } else { tap },
                phase_shift: r.col(SHIFT).to_radians(),
                in_service: r.col(BR_STATUS) != 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    NetworkCase::new(name, base_mva, buses, branches, gens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_base_mva() {
        let text = "mpc.bus = [1 3 0 0 0 0 1 1 0 1 1 1 1];\nmpc.gen=[1 0 0 0 0 1 1 1];\nmpc.branch=[];\n";
        assert!(matches!(parse_matpower(text), Err(Error::MissingBaseMva)));
    }

    #[test]
    fn bad_number_reports_line() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n 1 3 0 0 0 0 1 1 0 1 1 1 1;\n 2 1 x 0 0 0 1 1 0 1 1 1 1;\n];\n";
        match parse_matpower(text) {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn short_row_reports_line() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n 1 3 0 0;\n];\n";
        assert!(matches!(parse_matpower(text), Err(Error::Syntax { line: 3, .. })));
    }

    #[test]
    fn comments_cells_and_single_line_matrices() {
        let text = "function mpc = tiny % comment\n\
            mpc.baseMVA = 50; % MVA\n\
            mpc.bus_name = {\n 'A';\n 'B';\n};\n\
            mpc.bus = [1 3 0 0 0 0 1 1.02 -3 1 1 1 1; 2 1 10 5 0 2.5 1 1 0 1 1 1 1];\n\
            mpc.gen = [1 20 0 0 0 1.02 100 1];\n\
            mpc.branch = [1 2 0.01 0.1 0.02 0 0 0 0.98 2 1];\n\
            mpc.gencost = [2 0 0 3 0 1 0];\n";
        let case = parse_matpower(text).unwrap();
        assert_eq!(case.name, "tiny");
        assert_eq!(case.base_mva, 50.0);
        assert_eq!(case.buses[1].demand, Complex64::new(0.2, 0.1));
        assert_eq!(case.buses[1].shunt, Complex64::new(0.0, 0.05));
        assert!((case.buses[0].voltage_angle + 3f64.to_radians()).abs() < 1e-15);
        assert_eq!(case.gens[0].active_power, 0.4);
        assert_eq!(case.branches[0].tap_ratio, 0.98);
        assert!((case.branches[0].phase_shift - 2f64.to_radians()).abs() < 1e-15);
        assert_eq!(case.buses[0].kind, BusKind::Generator);
    }
}
